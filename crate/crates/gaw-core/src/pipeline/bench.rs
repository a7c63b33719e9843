//! Compounding-failure harness: how often does an s-stage workflow whose
//! stages each succeed independently with probability p finish end to end?

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureBenchResult {
    pub stages: u32,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
    /// Closed form p^stages.
    pub exact: f64,
    /// Monte-Carlo estimate over independent Bernoulli stages.
    pub empirical: f64,
}

impl FailureBenchResult {
    /// Report lines; rates carry four decimals so the closed form reads
    /// exactly (e.g. 0.6561 for four stages at 0.9).
    pub fn render(&self) -> String {
        format!(
            "stages={} p={} trials={} seed={}\n\
             exact success rate: {:.4}\n\
             empirical success rate: {:.4}\n\
             exact failure rate: {:.4}\n",
            self.stages,
            self.p,
            self.trials,
            self.seed,
            self.exact,
            self.empirical,
            1.0 - self.exact
        )
    }
}

pub fn failure_bench(
    stages: u32,
    p: f64,
    trials: u64,
    seed: u64,
) -> Result<FailureBenchResult, PipelineError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PipelineError::Config(format!("p must be in [0, 1], got {p}")));
    }
    if trials == 0 {
        return Err(PipelineError::Config("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0u64;
    for _ in 0..trials {
        // All stages draw even after a failure so the stream position per
        // trial is fixed and seeds stay comparable across stage counts.
        let mut ok = true;
        for _ in 0..stages {
            if rng.gen::<f64>() >= p {
                ok = false;
            }
        }
        if ok {
            successes += 1;
        }
    }
    Ok(FailureBenchResult {
        stages,
        p,
        trials,
        seed,
        exact: p.powi(stages as i32),
        empirical: successes as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_stages_at_ninety_percent_print_the_classic_figure() {
        let r = failure_bench(4, 0.9, 10_000, 1).unwrap();
        assert!(r.render().contains("exact success rate: 0.6561"));
        assert!((r.empirical - 0.6561).abs() < 0.02);
    }

    #[test]
    fn certain_stages_always_succeed() {
        let r = failure_bench(4, 1.0, 100, 0).unwrap();
        assert_eq!(r.empirical, 1.0);
        assert_eq!(r.exact, 1.0);
    }

    #[test]
    fn invalid_probability_and_zero_trials_are_config_errors() {
        assert!(matches!(failure_bench(4, 1.5, 10, 0), Err(PipelineError::Config(_))));
        assert!(matches!(failure_bench(4, 0.9, 0, 0), Err(PipelineError::Config(_))));
    }

    #[test]
    fn same_seed_reproduces_the_estimate() {
        let a = failure_bench(4, 0.9, 5_000, 42).unwrap();
        let b = failure_bench(4, 0.9, 5_000, 42).unwrap();
        assert_eq!(a, b);
    }
}
