//! Slot-level decision policies: the relaxed randomized rule, its
//! budget-capped version, and the square-root-law / greedy baselines.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::lagrange::RelaxedPolicy;
use crate::model::Ensemble;

/// Per-slot system state visible to a policy. Ages are in slots (>= 1),
/// modes are zero-based chain states. Policies never see future modes; the
/// simulator evolves modes only after decisions are taken.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub ages: Vec<u32>,
    pub modes: Vec<usize>,
    pub slot: u64,
}

/// A cache update rule. `decide` fills `out` with the (distinct, ascending)
/// indices of the files to download this slot.
pub trait DecisionPolicy: Send + Sync {
    fn name(&self) -> &'static str;
    fn decide(&self, state: &PolicyState, rng: &mut ChaCha12Rng, out: &mut Vec<usize>);
    /// Number of times a file was seen past its policy age range.
    fn overflow_count(&self) -> u64 {
        0
    }
}

/// Flattened per-file update-probability table.
struct XiTable {
    bound: usize,
    modes: usize,
    probs: Vec<f64>,
}

impl XiTable {
    fn from_relaxed(rp: &RelaxedPolicy) -> Vec<XiTable> {
        rp.policies
            .iter()
            .map(|p| XiTable {
                bound: p.age_bound,
                modes: p.xi.cols,
                probs: p.xi.data.clone(),
            })
            .collect()
    }

    /// Update probability; ages beyond the table mean the state was never
    /// reached by the relaxed solution and default to a certain download.
    #[inline]
    fn prob(&self, age: u32, mode: usize) -> (f64, bool) {
        let age = age as usize;
        if age > self.bound {
            (1.0, true)
        } else {
            (self.probs[(age - 1) * self.modes + mode], false)
        }
    }
}

/// Draws the candidate set: every file independently with its table
/// probability. Shared by the relaxed and the capped policy so that, given
/// the same generator state, the capped policy's candidates are identical.
fn draw_candidates(
    tables: &[XiTable],
    state: &PolicyState,
    rng: &mut ChaCha12Rng,
    overflow: &AtomicU64,
    out: &mut Vec<usize>,
) {
    out.clear();
    for (n, table) in tables.iter().enumerate() {
        let (p, over) = table.prob(state.ages[n], state.modes[n]);
        if over {
            overflow.fetch_add(1, Ordering::Relaxed);
        }
        let take = if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            rng.random::<f64>() < p
        };
        if take {
            out.push(n);
        }
    }
}

/// The relaxed randomized policy. Its decision set is unbounded; it serves
/// the expected-budget analysis and lower-bound audits only.
pub struct RelaxedDecisionPolicy {
    tables: Vec<XiTable>,
    overflow: AtomicU64,
}

pub fn relaxed_policy(rp: &RelaxedPolicy) -> RelaxedDecisionPolicy {
    RelaxedDecisionPolicy {
        tables: XiTable::from_relaxed(rp),
        overflow: AtomicU64::new(0),
    }
}

impl DecisionPolicy for RelaxedDecisionPolicy {
    fn name(&self) -> &'static str {
        "relaxed"
    }

    fn decide(&self, state: &PolicyState, rng: &mut ChaCha12Rng, out: &mut Vec<usize>) {
        draw_candidates(&self.tables, state, rng, &self.overflow, out);
    }

    fn overflow_count(&self) -> u64 {
        self.overflow.load(Ordering::Relaxed)
    }
}

/// The practical policy: draw the relaxed candidate set, and when it exceeds
/// the budget keep a uniformly random M-subset.
pub struct TruncatedPolicy {
    tables: Vec<XiTable>,
    budget: usize,
    overflow: AtomicU64,
}

pub fn truncated_policy(rp: &RelaxedPolicy, budget: usize) -> Result<TruncatedPolicy> {
    if budget < 1 {
        return Err(Error::InvalidParameter(
            "download budget must be at least 1".into(),
        ));
    }
    Ok(TruncatedPolicy {
        tables: XiTable::from_relaxed(rp),
        budget,
        overflow: AtomicU64::new(0),
    })
}

impl DecisionPolicy for TruncatedPolicy {
    fn name(&self) -> &'static str {
        "truncated"
    }

    fn decide(&self, state: &PolicyState, rng: &mut ChaCha12Rng, out: &mut Vec<usize>) {
        draw_candidates(&self.tables, state, rng, &self.overflow, out);
        if out.len() > self.budget {
            // Partial Fisher-Yates over the ascending candidate list: the
            // first `budget` slots end up a uniform subset.
            for i in 0..self.budget {
                let j = i + rng.random_range(0..out.len() - i);
                out.swap(i, j);
            }
            out.truncate(self.budget);
            out.sort_unstable();
        }
    }

    fn overflow_count(&self) -> u64 {
        self.overflow.load(Ordering::Relaxed)
    }
}

/// Square-root-law baseline: per-file target rates proportional to the
/// square root of the stationary mean request rate, realized by always
/// serving the `M` files with the largest `rate * age` deficit.
pub struct SquareRootPolicy {
    rates: Vec<f64>,
    budget: usize,
}

pub fn square_root_policy(ensemble: &Ensemble) -> Result<SquareRootPolicy> {
    let mean_weights: Vec<f64> = ensemble
        .files
        .iter()
        .map(|f| f.average_weight())
        .collect::<Result<_>>()?;
    let total_sqrt: f64 = mean_weights.iter().map(|w| w.sqrt()).sum();
    let m = ensemble.bandwidth as f64;
    Ok(SquareRootPolicy {
        rates: mean_weights
            .iter()
            .map(|w| m * w.sqrt() / total_sqrt)
            .collect(),
        budget: ensemble.bandwidth,
    })
}

impl DecisionPolicy for SquareRootPolicy {
    fn name(&self) -> &'static str {
        "sqrt"
    }

    fn decide(&self, state: &PolicyState, _rng: &mut ChaCha12Rng, out: &mut Vec<usize>) {
        top_budget_by(
            state.ages.len(),
            self.budget,
            |n| self.rates[n] * state.ages[n] as f64,
            out,
        );
    }
}

/// Greedy diagnostic baseline: serve the `M` files with the largest current
/// weighted age.
pub struct GreedyPolicy {
    weights: Vec<Vec<f64>>,
    budget: usize,
}

pub fn greedy_policy(ensemble: &Ensemble) -> GreedyPolicy {
    GreedyPolicy {
        weights: ensemble.files.iter().map(|f| f.mode_weight.clone()).collect(),
        budget: ensemble.bandwidth,
    }
}

impl DecisionPolicy for GreedyPolicy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn decide(&self, state: &PolicyState, _rng: &mut ChaCha12Rng, out: &mut Vec<usize>) {
        top_budget_by(
            state.ages.len(),
            self.budget,
            |n| self.weights[n][state.modes[n]] * state.ages[n] as f64,
            out,
        );
    }
}

/// Indices of the `budget` largest scores, ties to the lower index, returned
/// ascending.
fn top_budget_by(n: usize, budget: usize, score: impl Fn(usize) -> f64, out: &mut Vec<usize>) {
    out.clear();
    if budget >= n {
        out.extend(0..n);
        return;
    }
    let mut scored: Vec<(f64, usize)> = (0..n).map(|i| (score(i), i)).collect();
    scored.select_nth_unstable_by(budget - 1, |a, b| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
    });
    out.extend(scored[..budget].iter().map(|(_, i)| *i));
    out.sort_unstable();
}

/// Resolves a policy by its configuration name. The relaxed and capped
/// policies need the solved relaxed rule.
pub fn policy_by_name(
    name: &str,
    ensemble: &Ensemble,
    relaxed: Option<&RelaxedPolicy>,
) -> Result<Box<dyn DecisionPolicy>> {
    match name {
        "relaxed" => {
            let rp = relaxed.ok_or_else(|| {
                Error::Config("policy 'relaxed' needs a solved relaxed policy".into())
            })?;
            Ok(Box::new(relaxed_policy(rp)))
        }
        "truncated" => {
            let rp = relaxed.ok_or_else(|| {
                Error::Config("policy 'truncated' needs a solved relaxed policy".into())
            })?;
            Ok(Box::new(truncated_policy(rp, ensemble.bandwidth)?))
        }
        "sqrt" => Ok(Box::new(square_root_policy(ensemble)?)),
        "greedy" => Ok(Box::new(greedy_policy(ensemble))),
        other => Err(Error::Config(format!(
            "unknown policy '{other}' (expected relaxed, truncated, sqrt or greedy)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::StationaryPolicy;
    use crate::linalg::Mat;
    use crate::model::{homogeneous_ensemble, Ensemble, FileModel, PopularityChain};
    use rand::SeedableRng;

    fn single_mode_file(weight: f64) -> FileModel {
        FileModel::new(PopularityChain::new(vec![vec![1.0]]).unwrap(), vec![weight]).unwrap()
    }

    fn constant_policy(n: usize, bound: usize, xi_value: f64) -> RelaxedPolicy {
        let policies: Vec<StationaryPolicy> = (0..n)
            .map(|_| {
                let mut xi = Mat::zeros(bound, 1);
                xi.data.fill(xi_value);
                for r in 0..1 {
                    *xi.at_mut(bound - 1, r) = 1.0;
                }
                StationaryPolicy {
                    xi,
                    age_bound: bound,
                }
            })
            .collect();
        RelaxedPolicy {
            policies,
            per_file_aoi: vec![0.0; n],
            per_file_download: vec![0.0; n],
            analytic_aoi: 0.0,
            analytic_download_rate: 0.0,
        }
    }

    fn state(ages: Vec<u32>) -> PolicyState {
        let n = ages.len();
        PolicyState {
            ages,
            modes: vec![0; n],
            slot: 1,
        }
    }

    #[test]
    fn relaxed_all_ones_selects_everything() {
        let rp = constant_policy(5, 3, 1.0);
        let policy = relaxed_policy(&rp);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut out = Vec::new();
        policy.decide(&state(vec![1; 5]), &mut rng, &mut out);
        assert_eq!(out, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn relaxed_below_threshold_never_selected() {
        // xi = 0 below the bound; only at the bound is download certain.
        let rp = constant_policy(3, 4, 0.0);
        let policy = relaxed_policy(&rp);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut out = Vec::new();
        policy.decide(&state(vec![2, 3, 4]), &mut rng, &mut out);
        assert_eq!(out, vec![2]); // only the file at its bound
    }

    #[test]
    fn relaxed_overflow_counted() {
        let rp = constant_policy(1, 3, 0.0);
        let policy = relaxed_policy(&rp);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut out = Vec::new();
        policy.decide(&state(vec![7]), &mut rng, &mut out);
        assert_eq!(out, vec![0]);
        assert_eq!(policy.overflow_count(), 1);
    }

    #[test]
    fn truncated_is_subset_of_relaxed_with_shared_draw() {
        let rp = constant_policy(12, 6, 0.5);
        let relaxed = relaxed_policy(&rp);
        let capped = truncated_policy(&rp, 3).unwrap();
        let mut out_r = Vec::new();
        let mut out_t = Vec::new();
        for seed in 0..200u64 {
            let st = state(vec![(seed % 5 + 1) as u32; 12]);
            let mut rng_r = ChaCha12Rng::seed_from_u64(seed);
            let mut rng_t = ChaCha12Rng::seed_from_u64(seed);
            relaxed.decide(&st, &mut rng_r, &mut out_r);
            capped.decide(&st, &mut rng_t, &mut out_t);
            assert!(out_t.len() <= 3);
            assert!(out_t.iter().all(|i| out_r.contains(i)));
            if out_r.len() <= 3 {
                assert_eq!(out_t, out_r);
            }
        }
    }

    #[test]
    fn truncated_keeps_small_sets_unchanged() {
        let rp = constant_policy(4, 2, 1.0);
        let capped = truncated_policy(&rp, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut out = Vec::new();
        capped.decide(&state(vec![1; 4]), &mut rng, &mut out);
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn truncated_subset_marginals_are_uniform() {
        // Four certain candidates, budget two: each must be kept about half
        // the time.
        let rp = constant_policy(4, 1, 1.0);
        let capped = truncated_policy(&rp, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12345);
        let mut keeps = [0u64; 4];
        let trials = 100_000;
        let mut out = Vec::new();
        for _ in 0..trials {
            capped.decide(&state(vec![1; 4]), &mut rng, &mut out);
            assert_eq!(out.len(), 2);
            for &i in &out {
                keeps[i] += 1;
            }
        }
        for (i, &k) in keeps.iter().enumerate() {
            let freq = k as f64 / trials as f64;
            assert!(
                (freq - 0.5).abs() < 0.01,
                "candidate {i} kept with frequency {freq}"
            );
        }
    }

    #[test]
    fn sqrt_policy_homogeneous_round_robin() {
        let e = homogeneous_ensemble(4, 1, single_mode_file(1.0)).unwrap();
        let policy = square_root_policy(&e).unwrap();
        let mut st = state(vec![1; 4]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut updates = [0u32; 4];
        let mut out = Vec::new();
        for _ in 0..400 {
            policy.decide(&st, &mut rng, &mut out);
            assert_eq!(out.len(), 1);
            updates[out[0]] += 1;
            for n in 0..4 {
                st.ages[n] = if out.contains(&n) { 1 } else { st.ages[n] + 1 };
            }
        }
        // Period-4 round robin after the start-up slots.
        for &u in &updates {
            assert!((u as i64 - 100).unsigned_abs() <= 1, "updates {updates:?}");
        }
    }

    #[test]
    fn sqrt_policy_rate_ratio_two_files() {
        let files = vec![single_mode_file(4.0), single_mode_file(1.0)];
        let e = Ensemble::new(files, 1).unwrap();
        let policy = square_root_policy(&e).unwrap();
        assert!((policy.rates[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((policy.rates[1] - 1.0 / 3.0).abs() < 1e-12);
        let mut st = state(vec![1, 1]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut updates = [0u64; 2];
        let mut out = Vec::new();
        let slots = 60_000;
        for _ in 0..slots {
            policy.decide(&st, &mut rng, &mut out);
            updates[out[0]] += 1;
            for n in 0..2 {
                st.ages[n] = if out.contains(&n) { 1 } else { st.ages[n] + 1 };
            }
        }
        let ratio = updates[0] as f64 / updates[1] as f64;
        assert!((ratio - 2.0).abs() < 0.02, "update ratio {ratio}");
    }

    #[test]
    fn greedy_prefers_higher_weighted_age() {
        let files = vec![single_mode_file(3.0), single_mode_file(1.0)];
        let e = Ensemble::new(files, 1).unwrap();
        let policy = greedy_policy(&e);
        let mut st = state(vec![2, 5]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut out = Vec::new();
        policy.decide(&st, &mut rng, &mut out);
        assert_eq!(out, vec![0]); // 3*2 = 6 beats 1*5 = 5
        st.ages = vec![1, 1];
        policy.decide(&st, &mut rng, &mut out);
        assert_eq!(out, vec![0]); // tie 3 vs 1 -> weights differ; still 0
    }

    #[test]
    fn greedy_updates_all_when_budget_covers() {
        let e = homogeneous_ensemble(3, 3, single_mode_file(1.0)).unwrap();
        let policy = greedy_policy(&e);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut out = Vec::new();
        policy.decide(&state(vec![5, 1, 2]), &mut rng, &mut out);
        assert_eq!(out, vec![0, 1, 2]);
    }

    #[test]
    fn tie_break_is_lower_index() {
        let e = homogeneous_ensemble(3, 1, single_mode_file(1.0)).unwrap();
        let policy = greedy_policy(&e);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut out = Vec::new();
        policy.decide(&state(vec![4, 4, 4]), &mut rng, &mut out);
        assert_eq!(out, vec![0]);
    }

    #[test]
    fn unknown_policy_name_rejected() {
        let e = homogeneous_ensemble(2, 1, single_mode_file(1.0)).unwrap();
        assert!(policy_by_name("whittle", &e, None).is_err());
        assert!(policy_by_name("truncated", &e, None).is_err());
        assert!(policy_by_name("sqrt", &e, None).is_ok());
    }
}
