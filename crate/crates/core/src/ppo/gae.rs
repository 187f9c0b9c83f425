use crate::error::{Error, Result};

/// Generalized advantage estimation over one trajectory.
///
/// `δ_t = r_t + γ V_{t+1} − V_t` with `V_T = bootstrap`, then
/// `A_t = δ_t + γλ A_{t+1}`. Returns `(advantages, advantages + values)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: rewards.len(),
            actual: values.len(),
            context: "gae values",
        });
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        carry = delta + gamma * lam * carry;
        adv[t] = carry;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
