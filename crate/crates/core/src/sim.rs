//! Discrete-time simulator for the cache system.
//!
//! Each slot accrues the weighted-age cost of the current state, asks the
//! policy for a download set, applies the age resets, and then advances every
//! file's popularity mode. Randomness is split into fixed ChaCha12 streams of
//! one root seed: stream 0 drives the policy, stream 1 + n drives file n's
//! mode trajectory (including its stationary initial draw). Policy randomness
//! therefore never perturbs mode trajectories, so runs with the same seed are
//! directly comparable across policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{stationary_distribution, Ensemble};
use crate::policies::{DecisionPolicy, PolicyState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Total slots simulated.
    pub horizon: u64,
    /// Leading slots excluded from every average.
    pub warmup: u64,
    pub seed: u64,
    /// Record mean and variance of the per-slot decision-set size (used for
    /// candidate-dispersion audits of relaxed runs).
    pub record_candidate_sizes: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            horizon: 1_000_000,
            warmup: 10_000,
            seed: 0,
            record_candidate_sizes: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateSizeStats {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    /// Time-averaged total weighted age over the measured window.
    pub avg_weighted_aoi: f64,
    pub avg_downloads_per_slot: f64,
    /// Audited over every slot, warmup included.
    pub max_downloads_in_any_slot: usize,
    pub per_file_update_frequency: Vec<f64>,
    /// Present when `record_candidate_sizes` is set.
    pub candidate_stats: Option<CandidateSizeStats>,
    /// Fraction of measured slots spent in each mode, per file.
    pub per_file_mode_occupancy: Vec<Vec<f64>>,
    /// Largest age reached in any slot, warmup included.
    pub max_age: u32,
}

fn sample_mode(row: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Runs one seeded simulation of `policy` on `ensemble`.
pub fn simulate(
    ensemble: &Ensemble,
    policy: &dyn DecisionPolicy,
    cfg: &SimulationConfig,
) -> Result<SimulationReport> {
    if cfg.horizon <= cfg.warmup {
        return Err(Error::InvalidParameter(format!(
            "horizon {} must exceed warmup {}",
            cfg.horizon, cfg.warmup
        )));
    }
    let n = ensemble.num_files();
    let mut policy_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    policy_rng.set_stream(0);
    let mut mode_rngs: Vec<ChaCha12Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha12Rng::seed_from_u64(cfg.seed);
            r.set_stream(1 + i as u64);
            r
        })
        .collect();

    let stationaries: Vec<Vec<f64>> = ensemble
        .files
        .iter()
        .map(|f| stationary_distribution(&f.chain))
        .collect::<Result<_>>()?;

    let mut state = PolicyState {
        ages: vec![1; n],
        modes: (0..n)
            .map(|i| sample_mode(&stationaries[i], &mut mode_rngs[i]))
            .collect(),
        slot: 1,
    };

    let measured = (cfg.horizon - cfg.warmup) as f64;
    let mut cost_sum = 0.0;
    let mut downloads_sum: u64 = 0;
    let mut max_downloads = 0usize;
    let mut update_counts = vec![0u64; n];
    let mut occupancy: Vec<Vec<u64>> = ensemble
        .files
        .iter()
        .map(|f| vec![0u64; f.num_modes()])
        .collect();
    let mut size_sum = 0.0;
    let mut size_sq_sum = 0.0;
    let mut max_age = 1u32;
    let mut decision = Vec::with_capacity(n);

    for t in 1..=cfg.horizon {
        state.slot = t;
        let measuring = t > cfg.warmup;
        if measuring {
            let mut slot_cost = 0.0;
            for i in 0..n {
                let mode = state.modes[i];
                let age = state.ages[i];
                slot_cost += ensemble.files[i].mode_weight[mode] * age as f64;
                occupancy[i][mode] += 1;
                max_age = max_age.max(age);
            }
            cost_sum += slot_cost;
        } else {
            for i in 0..n {
                max_age = max_age.max(state.ages[i]);
            }
        }

        policy.decide(&state, &mut policy_rng, &mut decision);
        let mut prev = usize::MAX;
        for &i in &decision {
            if i >= n || (prev != usize::MAX && i <= prev) {
                return Err(Error::Numerical(format!(
                    "policy '{}' returned invalid decision indices {:?} at slot {t}",
                    policy.name(),
                    decision
                )));
            }
            prev = i;
        }
        max_downloads = max_downloads.max(decision.len());
        if measuring {
            downloads_sum += decision.len() as u64;
            for &i in &decision {
                update_counts[i] += 1;
            }
            if cfg.record_candidate_sizes {
                let k = decision.len() as f64;
                size_sum += k;
                size_sq_sum += k * k;
            }
        }

        let mut cursor = 0usize;
        for i in 0..n {
            if cursor < decision.len() && decision[cursor] == i {
                state.ages[i] = 1;
                cursor += 1;
            } else {
                state.ages[i] += 1;
            }
        }

        for i in 0..n {
            let row = ensemble.files[i].chain.row(state.modes[i]);
            state.modes[i] = sample_mode(row, &mut mode_rngs[i]);
        }
    }

    let candidate_stats = cfg.record_candidate_sizes.then(|| {
        let mean = size_sum / measured;
        CandidateSizeStats {
            mean,
            variance: (size_sq_sum / measured - mean * mean).max(0.0),
        }
    });

    Ok(SimulationReport {
        avg_weighted_aoi: cost_sum / measured,
        avg_downloads_per_slot: downloads_sum as f64 / measured,
        max_downloads_in_any_slot: max_downloads,
        per_file_update_frequency: update_counts
            .iter()
            .map(|&c| c as f64 / measured)
            .collect(),
        candidate_stats,
        per_file_mode_occupancy: occupancy
            .iter()
            .map(|counts| counts.iter().map(|&c| c as f64 / measured).collect())
            .collect(),
        max_age,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{homogeneous_ensemble, two_mode_chain, FileModel, PopularityChain};
    use crate::policies::{greedy_policy, DecisionPolicy};

    fn single_mode_file(weight: f64) -> FileModel {
        FileModel::new(PopularityChain::new(vec![vec![1.0]]).unwrap(), vec![weight]).unwrap()
    }

    struct NeverUpdate;
    impl DecisionPolicy for NeverUpdate {
        fn name(&self) -> &'static str {
            "never"
        }
        fn decide(&self, _: &PolicyState, _: &mut ChaCha12Rng, out: &mut Vec<usize>) {
            out.clear();
        }
    }

    struct BadIndices;
    impl DecisionPolicy for BadIndices {
        fn name(&self) -> &'static str {
            "bad"
        }
        fn decide(&self, _: &PolicyState, _: &mut ChaCha12Rng, out: &mut Vec<usize>) {
            out.clear();
            out.extend([3, 3]);
        }
    }

    #[test]
    fn single_file_greedy_pins_age_at_one() {
        let e = homogeneous_ensemble(1, 1, single_mode_file(2.5)).unwrap();
        let policy = greedy_policy(&e);
        let cfg = SimulationConfig {
            horizon: 5_000,
            warmup: 100,
            seed: 7,
            record_candidate_sizes: false,
        };
        let report = simulate(&e, &policy, &cfg).unwrap();
        assert!((report.avg_weighted_aoi - 2.5).abs() < 1e-12);
        assert_eq!(report.max_downloads_in_any_slot, 1);
        assert!((report.per_file_update_frequency[0] - 1.0).abs() < 1e-12);
        assert_eq!(report.max_age, 1);
    }

    #[test]
    fn never_updating_gives_arithmetic_series() {
        let e = homogeneous_ensemble(1, 1, single_mode_file(1.0)).unwrap();
        let t = 10_000u64;
        let cfg = SimulationConfig {
            horizon: t,
            warmup: 0,
            seed: 3,
            record_candidate_sizes: false,
        };
        let report = simulate(&e, &NeverUpdate, &cfg).unwrap();
        let expected = (t + 1) as f64 / 2.0;
        assert!((report.avg_weighted_aoi - expected).abs() < 1e-9);
        assert_eq!(report.max_age, t as u32);
        assert_eq!(report.avg_downloads_per_slot, 0.0);
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let f = FileModel::new(two_mode_chain(0.9).unwrap(), vec![0.2, 1.8]).unwrap();
        let e = homogeneous_ensemble(6, 2, f).unwrap();
        let policy = greedy_policy(&e);
        let cfg = SimulationConfig {
            horizon: 20_000,
            warmup: 500,
            seed: 99,
            record_candidate_sizes: true,
        };
        let a = simulate(&e, &policy, &cfg).unwrap();
        let b = simulate(&e, &policy, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_occupancy_matches_stationary() {
        let f = FileModel::new(two_mode_chain(0.9).unwrap(), vec![0.2, 1.8]).unwrap();
        let e = homogeneous_ensemble(4, 1, f).unwrap();
        let policy = greedy_policy(&e);
        let cfg = SimulationConfig {
            horizon: 200_000,
            warmup: 1_000,
            seed: 42,
            record_candidate_sizes: false,
        };
        let report = simulate(&e, &policy, &cfg).unwrap();
        // Persistence 0.9 gives an integrated autocorrelation factor of
        // (1+rho)/(1-rho) = 9, so 3 standard errors is about 0.010.
        for occ in &report.per_file_mode_occupancy {
            assert!((occ[0] - 0.5).abs() < 0.012, "occupancy {occ:?}");
        }
    }

    #[test]
    fn invalid_indices_abort() {
        let e = homogeneous_ensemble(2, 1, single_mode_file(1.0)).unwrap();
        let cfg = SimulationConfig {
            horizon: 10,
            warmup: 0,
            seed: 0,
            record_candidate_sizes: false,
        };
        assert!(simulate(&e, &BadIndices, &cfg).is_err());
    }

    #[test]
    fn horizon_must_exceed_warmup() {
        let e = homogeneous_ensemble(1, 1, single_mode_file(1.0)).unwrap();
        let cfg = SimulationConfig {
            horizon: 10,
            warmup: 10,
            seed: 0,
            record_candidate_sizes: false,
        };
        assert!(simulate(&e, &NeverUpdate, &cfg).is_err());
    }
}
