//! Generalized advantage estimation.

use super::PpoError;

/// Computes GAE advantages and returns for one contiguous rollout segment.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)` and
/// `A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}`, swept backwards.
/// `bootstrap` stands in for the value of the state after the last
/// transition and only matters when that transition is not terminal.
/// Returns are `A_t + V(s_t)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(PpoError::LengthMismatch(format!(
            "gae inputs: {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step_is_reward_minus_value() {
        let (adv, ret) = compute_gae(&[2.0], &[0.5], &[true], 9.9, 0.99, 0.95).unwrap();
        assert_eq!(adv, vec![1.5]);
        assert_eq!(ret, vec![2.0]);
    }

    #[test]
    fn two_step_hand_recursion() {
        let (adv, _) = compute_gae(&[0.0, 1.0], &[0.0, 0.0], &[false, true], 0.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(adv, vec![1.0, 1.0]);
    }

    #[test]
    fn lam_zero_collapses_to_td_residuals() {
        let rewards = [0.3, -0.1, 0.7];
        let values = [0.2, 0.4, -0.5];
        let dones = [false, false, true];
        let gamma = 0.9;
        let (adv, _) = compute_gae(&rewards, &values, &dones, 0.0, gamma, 0.0).unwrap();
        for t in 0..3 {
            let next = if t < 2 { values[t + 1] } else { 0.0 };
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + gamma * next * live - values[t];
            assert_eq!(adv[t], delta);
        }
    }

    #[test]
    fn undiscounted_monte_carlo_limit() {
        // lam = gamma = 1 on a terminal episode: advantage must equal the
        // empirical tail return minus the value estimate.
        let rewards = [0.1, -0.2, 0.3, 1.0];
        let values = [0.5, -0.4, 0.2, 0.1];
        let dones = [false, false, false, true];
        let (adv, ret) = compute_gae(&rewards, &values, &dones, 0.0, 1.0, 1.0).unwrap();
        for t in 0..4 {
            let tail: f64 = rewards[t..].iter().sum();
            assert!((adv[t] - (tail - values[t])).abs() <= 1e-12);
            assert!((ret[t] - tail).abs() <= 1e-12);
        }
    }

    #[test]
    fn bootstrap_feeds_the_tail_delta() {
        let (adv, _) = compute_gae(&[0.0], &[0.0], &[false], 2.0, 0.5, 1.0).unwrap();
        // delta = 0 + 0.5 * 2.0 - 0 with nothing after it.
        assert_eq!(adv, vec![1.0]);
    }

    #[test]
    fn mid_batch_done_resets_the_recursion() {
        // Episode break after t=0: A_0 must ignore everything behind it.
        let (adv, _) =
            compute_gae(&[1.0, 5.0], &[0.0, 0.0], &[true, true], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![1.0, 5.0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = compute_gae(&[1.0], &[1.0, 2.0], &[true], 0.0, 0.99, 0.95).unwrap_err();
        assert!(matches!(err, PpoError::LengthMismatch(_)));
    }
}
