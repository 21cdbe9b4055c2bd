/// Trading gain over one step: `I_{t+1}(S_{t+1} − S_t) − λ|q_t|`.
pub fn compute_reward(i_next: f64, s_t: f64, s_next: f64, q: f64, lambda: f64) -> f64 {
    i_next * (s_next - s_t) - lambda * q.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        assert!((compute_reward(10.0, 1.0, 1.01, 0.0, 0.05) - 0.1).abs() < 1e-12);
        assert!(compute_reward(5.0, 1.0, 1.02, 2.0, 0.05).abs() < 1e-12);
        assert_eq!(compute_reward(0.0, 1.0, 7.0, 0.0, 0.0), 0.0);
    }
}
