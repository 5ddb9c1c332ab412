use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// One recorded step of a rollout segment.
#[derive(Clone, Copy, Debug)]
pub struct RolloutStep {
    /// `[1 × A]` action logits.
    pub logits: Var,
    /// Critic output (one element).
    pub value: Var,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub policy: f64,
    pub value: f64,
    /// Summed policy entropy over the segment.
    pub entropy: f64,
}

/// `R_t = r_t + γ R_{t+1}`, seeded with `bootstrap` after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    out
}

/// Advantage actor-critic loss over a segment:
/// `−Σ log π(a_t)·(R_t − v_t) + c_v·Σ (R_t − v_t)² − c_H·Σ H(π_t)`,
/// with the advantage held constant in the policy term.
pub fn rollout_losses(
    tape: &mut Tape,
    steps: &[RolloutStep],
    gamma: f64,
    value_coef: f64,
    entropy_coef: f64,
    bootstrap: f64,
) -> Result<LossParts> {
    if steps.is_empty() {
        return Err(Error::Contract("rollout segment is empty".into()));
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, gamma, bootstrap);
    let advantages: Vec<f64> = steps
        .iter()
        .zip(&returns)
        .map(|(s, r)| r - tape.value(s.value).item())
        .collect();
    segment_loss(tape, steps, &returns, &advantages, value_coef, entropy_coef)
}

/// The loss of [`rollout_losses`] with returns and policy-term advantages
/// supplied. Its value is a smooth function of the parameters whose
/// gradient is exactly what [`rollout_losses`] backpropagates, which makes
/// it the objective for finite-difference checks.
pub fn segment_loss(
    tape: &mut Tape,
    steps: &[RolloutStep],
    returns: &[f64],
    advantages: &[f64],
    value_coef: f64,
    entropy_coef: f64,
) -> Result<LossParts> {
    if steps.is_empty() || returns.len() != steps.len() || advantages.len() != steps.len() {
        return Err(Error::Contract(format!(
            "segment of {} steps with {} returns and {} advantages",
            steps.len(),
            returns.len(),
            advantages.len()
        )));
    }
    let mut policy_terms = Vec::with_capacity(steps.len());
    let mut value_terms = Vec::with_capacity(steps.len());
    let mut entropy_terms = Vec::with_capacity(steps.len());
    let (mut policy, mut value, mut entropy) = (0.0, 0.0, 0.0);
    for ((s, &ret), &adv) in steps.iter().zip(returns).zip(advantages) {
        let logp = tape.log_softmax_rows(s.logits)?;
        let chosen = tape.pick(logp, s.action)?;
        let term = tape.scale(chosen, -adv);
        policy -= tape.value(chosen).item() * adv;
        policy_terms.push(term);

        let target = tape.constant(Tensor::scalar(ret));
        let v_flat = tape.reshape(s.value, &[1])?;
        let diff = tape.sub(target, v_flat)?;
        let sq = tape.mul(diff, diff)?;
        value += tape.value(sq).item();
        value_terms.push(sq);

        let probs = tape.softmax_rows(s.logits)?;
        let plogp = tape.mul(probs, logp)?;
        let neg_h = tape.sum_all(plogp);
        entropy -= tape.value(neg_h).item();
        entropy_terms.push(neg_h);
    }
    let p = tape.concat(&policy_terms, 0)?;
    let p = tape.sum_all(p);
    let v = tape.concat(&value_terms, 0)?;
    let v = tape.sum_all(v);
    let v = tape.scale(v, value_coef);
    let h = tape.concat(&entropy_terms, 0)?;
    let h = tape.sum_all(h);
    // entropy terms hold Σ p log p = −H, so adding c_H·(−H) subtracts the bonus
    let h = tape.scale(h, entropy_coef);
    let pv = tape.add(p, v)?;
    let total = tape.add(pv, h)?;
    Ok(LossParts {
        total,
        policy,
        value: value_coef * value,
        entropy,
    })
}
