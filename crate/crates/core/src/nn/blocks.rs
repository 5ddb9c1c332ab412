//! Parameterised layers. Each block only stores [`ParamId`]s; values live
//! in a [`ParamSet`] and are bound to a tape per forward pass.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

use super::{BoundParams, Init, ParamId, RngStream};

/// Dense layer `x·W + b` with `W: [d_in × d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(init: &mut Init<'_>, name: &str, d_in: usize, d_out: usize, bias: bool) -> Result<Self> {
        let w = init.weight(&format!("{name}.w"), &[d_in, d_out], d_in)?;
        let b = if bias {
            Some(init.zeros(&format!("{name}.b"), &[d_out])?)
        } else {
            None
        };
        Ok(Linear { w, b, d_in, d_out })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.affine(x, p[self.w], self.b.map(|b| p[b]))
    }
}

/// 1×1 convolution over a `[C_in × H × W]` feature map.
#[derive(Clone, Debug)]
pub struct PointwiseConv {
    pub w: ParamId,
    pub b: ParamId,
}

impl PointwiseConv {
    pub fn new(init: &mut Init<'_>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(PointwiseConv {
            w: init.weight(&format!("{name}.w"), &[c_out, c_in], c_in)?,
            b: init.zeros(&format!("{name}.b"), &[c_out])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.pointwise_conv(x, p[self.w], p[self.b])
    }
}

/// Zero-padded 1-D convolution over the row axis of `[D × F]`, producing
/// one channel per row.
#[derive(Clone, Debug)]
pub struct TemporalConv {
    pub w: ParamId,
    pub b: ParamId,
    pub kernel_size: usize,
}

impl TemporalConv {
    pub fn new(init: &mut Init<'_>, name: &str, features: usize, kernel_size: usize) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "temporal conv kernel size must be odd, got {kernel_size}"
            )));
        }
        Ok(TemporalConv {
            w: init.weight(&format!("{name}.w"), &[kernel_size, features], kernel_size * features)?,
            b: init.zeros(&format!("{name}.b"), &[1])?,
            kernel_size,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.conv1d_rows(x, p[self.w], p[self.b])
    }
}

/// LSTM cell with fused gate weights in `(input, forget, candidate, output)` order.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(init: &mut Init<'_>, name: &str, d_in: usize, hidden: usize) -> Result<Self> {
        let w_ih = init.weight(&format!("{name}.w_ih"), &[d_in, 4 * hidden], d_in)?;
        let w_hh = init.weight(&format!("{name}.w_hh"), &[hidden, 4 * hidden], hidden)?;
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = init
            .params
            .register(format!("{name}.b"), Tensor::vector(bias)?)?;
        Ok(LstmCell {
            w_ih,
            w_hh,
            b,
            d_in,
            hidden,
        })
    }

    /// One recurrent step on `[1 × d]` rows; returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, p: &BoundParams, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        for (what, v, want) in [("x", x, self.d_in), ("h", h, hd), ("c", c, hd)] {
            if tape.value(v).shape() != [1, want] {
                return Err(Error::dim(
                    "lstm_step",
                    format!("{what} has shape {:?}, expected [1, {want}]", tape.value(v).shape()),
                ));
            }
        }
        let zx = tape.affine(x, p[self.w_ih], Some(p[self.b]))?;
        let zh = tape.affine(h, p[self.w_hh], None)?;
        let z = tape.add(zx, zh)?;
        let i = tape.slice(z, 1, 0, hd)?;
        let f = tape.slice(z, 1, hd, hd)?;
        let g = tape.slice(z, 1, 2 * hd, hd)?;
        let o = tape.slice(z, 1, 3 * hd, hd)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalisation over the last axis with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub width: usize,
}

impl LayerNorm {
    pub fn new(init: &mut Init<'_>, name: &str, width: usize) -> Result<Self> {
        if width < 2 {
            return Err(Error::Contract(format!(
                "layer norm needs width >= 2, got {width}"
            )));
        }
        Ok(LayerNorm {
            gain: init.constant(&format!("{name}.gain"), &[width], 1.0)?,
            bias: init.zeros(&format!("{name}.bias"), &[width])?,
            width,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gain], p[self.bias], LAYER_NORM_EPS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training, zeroes each element with probability
/// `rate` and scales survivors by `1/(1−rate)`; identity in evaluation.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = tape.value(x).shape().to_vec();
    let n = tape.value(x).numel();
    let mask = (0..n)
        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamSet;
    use crate::tensor::{finite_diff_check_params, Reduction};

    fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn pointwise_conv_identity_weights() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(0);
        let conv = PointwiseConv::new(&mut Init::new(&mut ps, &mut rng), "pw", 3, 3).unwrap();
        let w = ps.data_mut(conv.w);
        w.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..3 {
            w[c * 3 + c] = 1.0;
        }
        let x: Vec<f64> = (0..3 * 2 * 2).map(|i| i as f64 * 0.5 - 1.0).collect();
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let xv = tape.constant(Tensor::new(vec![3, 2, 2], x.clone()).unwrap());
        let y = conv.forward(&mut tape, &p, xv).unwrap();
        assert_eq!(tape.value(y).data(), x.as_slice());
    }

    #[test]
    fn pointwise_conv_on_single_pixel_equals_affine() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(5);
        let conv = PointwiseConv::new(&mut Init::new(&mut ps, &mut rng), "pw", 4, 3).unwrap();
        ps.data_mut(conv.b).copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = vec![0.5, -1.5, 2.0, 0.25];
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let xv = tape.constant(Tensor::new(vec![4, 1, 1], x.clone()).unwrap());
        let y = conv.forward(&mut tape, &p, xv).unwrap();
        // affine form: x[1×4] · Wᵀ[4×3] + b
        let wt = tape.transpose(p[conv.w]).unwrap();
        let xr = tape.constant(Tensor::row(x).unwrap());
        let a = tape.affine(xr, wt, Some(p[conv.b])).unwrap();
        let (yc, ac) = (tape.value(y).data(), tape.value(a).data());
        for (u, v) in yc.iter().zip(ac) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn temporal_conv_kernel_one_is_rowwise_affine() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(2);
        let tc = TemporalConv::new(&mut Init::new(&mut ps, &mut rng), "tc", 3, 1).unwrap();
        ps.data_mut(tc.b)[0] = 0.7;
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let xv = tape.constant(Tensor::matrix(4, 3, x.clone()).unwrap());
        let y = tc.forward(&mut tape, &p, xv).unwrap();
        let w = ps.value(tc.w).data();
        for r in 0..4 {
            let expect = 0.7 + (0..3).map(|j| w[j] * x[r * 3 + j]).sum::<f64>();
            assert!((tape.value(y).data()[r] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn temporal_conv_constant_input_sum_one_kernel() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(2);
        let tc = TemporalConv::new(&mut Init::new(&mut ps, &mut rng), "tc", 2, 3).unwrap();
        // taps sum to one per feature column
        ps.data_mut(tc.w).copy_from_slice(&[0.2, 0.5, 0.3, 0.1, 0.5, 0.4]);
        let row = [2.0, -1.0];
        let x: Vec<f64> = (0..5).flat_map(|_| row).collect();
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let xv = tape.constant(Tensor::matrix(5, 2, x).unwrap());
        let y = tc.forward(&mut tape, &p, xv).unwrap();
        let per_row = row[0] + row[1];
        for r in 1..4 {
            assert!((tape.value(y).data()[r] - per_row).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_conv_even_kernel_rejected() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(2);
        assert!(matches!(
            TemporalConv::new(&mut Init::new(&mut ps, &mut rng), "tc", 2, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn temporal_conv_matches_sliding_window_loop() {
        let mut rng = RngStream::new(11);
        for k in [1usize, 3, 5] {
            let x: Vec<f64> = (0..28).map(|_| rng.range(-1.0, 1.0)).collect();
            let w: Vec<f64> = (0..k * 4).map(|_| rng.range(-1.0, 1.0)).collect();
            let b = rng.range(-1.0, 1.0);
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::matrix(7, 4, x.clone()).unwrap());
            let wv = tape.constant(Tensor::matrix(k, 4, w.clone()).unwrap());
            let bv = tape.constant(Tensor::scalar(b));
            let y = tape.conv1d_rows(xv, wv, bv).unwrap();
            // oracle: explicit zero-padded input
            let pad = (k - 1) / 2;
            let mut padded = vec![0.0; (7 + 2 * pad) * 4];
            padded[pad * 4..pad * 4 + 28].copy_from_slice(&x);
            for r in 0..7 {
                let mut acc = b;
                for t in 0..k {
                    for j in 0..4 {
                        acc += w[t * 4 + j] * padded[(r + t) * 4 + j];
                    }
                }
                assert!((tape.value(y).data()[r] - acc).abs() < 1e-13, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn lstm_zero_weights_zero_state() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(1);
        let cell = LstmCell::new(&mut Init::new(&mut ps, &mut rng), "lstm", 3, 2).unwrap();
        for id in [cell.w_ih, cell.w_hh, cell.b] {
            ps.data_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let x = tape.constant(Tensor::row(vec![0.3, -0.2, 0.9]).unwrap());
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let (h2, c2) = cell.step(&mut tape, &p, x, h, h).unwrap();
        assert_eq!(tape.value(h2).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(c2).data(), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_cell() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(1);
        let cell = LstmCell::new(&mut Init::new(&mut ps, &mut rng), "lstm", 2, 2).unwrap();
        ps.data_mut(cell.w_ih).iter_mut().for_each(|v| *v = 0.0);
        ps.data_mut(cell.w_hh).iter_mut().for_each(|v| *v = 0.0);
        let b = ps.data_mut(cell.b);
        b.iter_mut().for_each(|v| *v = 0.0);
        b[2] = 10.0;
        b[3] = 10.0;
        b[0] = -10.0;
        b[1] = -10.0;
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let x = tape.constant(Tensor::row(vec![1.0, -1.0]).unwrap());
        let h = tape.constant(Tensor::zeros(&[1, 2]));
        let c = tape.constant(Tensor::row(vec![0.8, -0.4]).unwrap());
        let (_, c2) = cell.step(&mut tape, &p, x, h, c).unwrap();
        let c2 = tape.value(c2).data();
        assert!((c2[0] - 0.8).abs() < 1e-3 && (c2[1] + 0.4).abs() < 1e-3, "{c2:?}");
    }

    #[test]
    fn lstm_matches_hand_computed_gates() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(1);
        let cell = LstmCell::new(&mut Init::new(&mut ps, &mut rng), "lstm", 2, 1).unwrap();
        // w_ih rows: input features; columns: (i, f, g, o)
        ps.data_mut(cell.w_ih).copy_from_slice(&[0.5, -0.3, 0.8, 0.1, -0.2, 0.4, 0.6, 0.7]);
        ps.data_mut(cell.w_hh).copy_from_slice(&[0.1, 0.2, -0.5, 0.3]);
        ps.data_mut(cell.b).copy_from_slice(&[0.0, 1.0, 0.05, -0.1]);
        let (x, h, c) = ([1.0, 2.0], 0.5, -0.25);
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let xv = tape.constant(Tensor::row(x.to_vec()).unwrap());
        let hv = tape.constant(Tensor::row(vec![h]).unwrap());
        let cv = tape.constant(Tensor::row(vec![c]).unwrap());
        let (h2, c2) = cell.step(&mut tape, &p, xv, hv, cv).unwrap();

        let zi = 0.5 * 1.0 + (-0.2) * 2.0 + 0.1 * h + 0.0;
        let zf = -0.3 * 1.0 + 0.4 * 2.0 + 0.2 * h + 1.0;
        let zg = 0.8 * 1.0 + 0.6 * 2.0 + (-0.5) * h + 0.05;
        let zo = 0.1 * 1.0 + 0.7 * 2.0 + 0.3 * h - 0.1;
        let c_expect = sigmoid(zf) * c + sigmoid(zi) * zg.tanh();
        let h_expect = sigmoid(zo) * c_expect.tanh();
        assert!((tape.value(c2).item() - c_expect).abs() < 1e-14);
        assert!((tape.value(h2).item() - h_expect).abs() < 1e-14);
    }

    #[test]
    fn lstm_shape_mismatch() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(1);
        let cell = LstmCell::new(&mut Init::new(&mut ps, &mut rng), "lstm", 2, 3).unwrap();
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[1, 5]));
        let h = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(cell.step(&mut tape, &p, x, h, h), Err(Error::Dimension { .. })));
    }

    #[test]
    fn layer_norm_statistics() {
        let mut ps = ParamSet::new();
        let mut rng = RngStream::new(1);
        let ln = LayerNorm::new(&mut Init::new(&mut ps, &mut rng), "ln", 6).unwrap();
        let mut tape = Tape::new();
        let p = ps.bind(&mut tape, false);
        let x = tape.constant(Tensor::vector(vec![3.0, -1.0, 4.0, 1.5, -9.0, 2.6]).unwrap());
        let y = ln.forward(&mut tape, &p, x).unwrap();
        let v = tape.value(y).data();
        let mean = v.iter().sum::<f64>() / 6.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);

        let c = tape.constant(Tensor::filled(&[6], 2.5));
        let y = ln.forward(&mut tape, &p, c).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

        let x = tape.constant(Tensor::vector(vec![1.0, -1.0]).unwrap());
        let mut ps2 = ParamSet::new();
        let ln2 = LayerNorm::new(&mut Init::new(&mut ps2, &mut rng), "ln", 2).unwrap();
        let p2 = ps2.bind(&mut tape, false);
        let y = ln2.forward(&mut tape, &p2, x).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] - 1.0).abs() < 1e-5 && (v[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn dropout_modes_and_rate_validation() {
        let mut rng = RngStream::new(9);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[10], 2.0));
        for mode in [Mode::Train, Mode::Eval] {
            let y = dropout(&mut tape, x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(tape.value(y).data(), tape.value(x).data());
        }
        let y = dropout(&mut tape, x, 0.9, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(matches!(dropout(&mut tape, x, 1.0, Mode::Train, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_monte_carlo_rate() {
        let mut rng = RngStream::new(12345);
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.constant(Tensor::filled(&[n], 1.0));
        let y = dropout(&mut tape, x, 0.3, Mode::Train, &mut rng).unwrap();
        let v = tape.value(y).data();
        let zeros = v.iter().filter(|&&a| a == 0.0).count() as f64 / n as f64;
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((zeros - 0.3).abs() <= 0.01, "zero fraction {zeros}");
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn blocks_pass_gradient_check() {
        let mut rng = RngStream::new(77);
        let mut ps = ParamSet::new();
        let mut init = Init::new(&mut ps, &mut rng);
        let pw = PointwiseConv::new(&mut init, "pw", 3, 2).unwrap();
        let tc = TemporalConv::new(&mut init, "tc", 4, 5).unwrap();
        let ln = LayerNorm::new(&mut init, "ln", 4).unwrap();
        let lstm = LstmCell::new(&mut init, "lstm", 4, 3).unwrap();
        // perturb biases/gains off their defaults so every path is exercised
        let mut data_rng = RngStream::new(78);
        for id in [pw.b, tc.b, ln.gain, ln.bias, lstm.b] {
            ps.data_mut(id).iter_mut().for_each(|v| *v += data_rng.range(-0.5, 0.5));
        }
        let img = Tensor::new(vec![3, 2, 2], (0..12).map(|_| data_rng.range(-1.0, 1.0)).collect()).unwrap();
        let seq = Tensor::matrix(6, 4, (0..24).map(|_| data_rng.range(-1.0, 1.0)).collect()).unwrap();

        let values: Vec<Tensor> = ps.iter().map(|p| p.value().clone()).collect();
        let coords: Vec<(usize, usize)> = values
            .iter()
            .enumerate()
            .flat_map(|(t, v)| (0..v.numel()).map(move |e| (t, e)))
            .collect();
        let report = finite_diff_check_params(
            |tape, vars| {
                let p = BoundParams::from_vars(vars.to_vec());
                let x = tape.constant(img.clone());
                let a = pw.forward(tape, &p, x)?;
                let a = tape.tanh(a);
                let a = tape.sum_all(a);
                let s = tape.constant(seq.clone());
                let h = tc.forward(tape, &p, s)?;
                let hm = tape.reduce(h, 0, Reduction::Mean)?;
                let row = tape.slice(s, 0, 2, 1)?;
                let n = ln.forward(tape, &p, row)?;
                let h0 = tape.constant(Tensor::row(vec![0.1, -0.2, 0.3]).unwrap());
                let (h1, c1) = lstm.step(tape, &p, n, h0, h0)?;
                let (h2, _) = lstm.step(tape, &p, n, h1, c1)?;
                let l = tape.sum_all(h2);
                let t = tape.add(a, l)?;
                let hm = tape.reshape(hm, &[1])?;
                let hm = tape.mul(hm, hm)?;
                tape.add(t, hm)
            },
            &values,
            &coords,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-4, "{report:?}");
        assert!(report.checked > 80);
    }
}
