use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// Outcome of a central finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of `|analytic − numeric| / (|analytic| + 1e-8)`.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose one-sided slopes disagree (a ReLU kink lies inside
    /// `[θ−ε, θ+ε]`); these are excluded from the maximum.
    pub skipped_kinks: usize,
    /// `(tensor, element)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

fn eval<F>(f: &mut F, params: &[Tensor]) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(Error::Contract(format!(
            "finite_diff_check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of `f` against central differences at
/// the requested `(tensor, element)` coordinates.
pub fn finite_diff_check_params<F>(
    mut f: F,
    params: &[Tensor],
    coords: &[(usize, usize)],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Contract(format!("epsilon must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let f0 = tape.value(out).item();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    let mut work = params.to_vec();
    for &(t, e) in coords {
        let analytic = tape.grad(vars[t]).map_or(0.0, |g| g[e]);
        let orig = work[t].data()[e];
        work[t].data_mut()[e] = orig + eps;
        let fp = eval(&mut f, &work)?;
        work[t].data_mut()[e] = orig - eps;
        let fm = eval(&mut f, &work)?;
        work[t].data_mut()[e] = orig;

        let right = (fp - f0) / eps;
        let left = (f0 - fm) / eps;
        if (right - left).abs() > 0.05 * (right.abs() + left.abs()) + 1e-6 {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
        report.checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = Some((t, e));
        }
    }
    Ok(report)
}

/// Single-tensor form: checks every element of `theta`.
pub fn finite_diff_check<F>(mut f: F, theta: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<(usize, usize)> = (0..theta.numel()).map(|e| (0, e)).collect();
    finite_diff_check_params(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(theta),
        &coords,
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let theta = Tensor::scalar(3.0);
        let mut tape = Tape::new();
        let v = tape.leaf(theta.clone(), true);
        let sq = tape.mul(v, v).unwrap();
        tape.backward(sq).unwrap();
        assert_eq!(tape.grad(v).unwrap(), &[6.0]);

        let r = finite_diff_check(|t, x| t.mul(x, x), &theta, 1e-5).unwrap();
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-9, "{r:?}");
    }

    #[test]
    fn relu_dead_region_is_exact() {
        let r = finite_diff_check(|t, x| Ok(t.relu(x)), &Tensor::scalar(-1.0), 1e-5).unwrap();
        assert_eq!(r.max_rel_err, 0.0);
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn kink_inside_window_is_skipped() {
        let r = finite_diff_check(|t, x| Ok(t.relu(x)), &Tensor::scalar(1e-7), 1e-5).unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn non_positive_epsilon_rejected() {
        assert!(finite_diff_check(|t, x| Ok(t.relu(x)), &Tensor::scalar(1.0), 0.0).is_err());
    }
}
