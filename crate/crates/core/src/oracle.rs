//! Independent brute-force solvers for the per-file problem, used to
//! cross-check the LP pipeline: relative value iteration on the truncated
//! (age, mode) MDP, and exhaustive search over deterministic threshold
//! policies. Nothing here shares code with the LP solve path.

use crate::cmdp::{age_upper_bound, renewal_performance};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{FileModel, PopularityChain};

/// Self-loop damping applied during value iteration. Mixing each transition
/// with staying put leaves every policy's stationary distribution (and hence
/// the optimal average cost) unchanged while making the iteration converge
/// even for periodic optimal policies such as fixed update cycles.
const DAMPING: f64 = 0.5;
const SPAN_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 1_000_000;
/// Number of threshold vectors the exhaustive search is willing to visit.
const ENUM_CAP: u128 = 1_000_000;

/// Deterministic random per-file instance for cross-check batteries:
/// 1-3 modes, a dense irreducible chain, weights in [0.1, 3] and a
/// multiplier in [0, 20]. The multiplier is shrunk where needed so that the
/// threshold search space `x_ub^R` stays enumerable.
pub fn battery_instance(seed: u64) -> (FileModel, f64) {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0x2545F4914F6CDD1D);
    let mut next = move || {
        // splitmix64
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    };

    let r_modes = 1 + (next() * 3.0) as usize;
    let rows: Vec<Vec<f64>> = (0..r_modes)
        .map(|_| {
            let raw: Vec<f64> = (0..r_modes).map(|_| 0.05 + next()).collect();
            let sum: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let fix: f64 = 1.0 - row.iter().sum::<f64>();
            row[0] += fix;
            row
        })
        .collect();
    let chain = PopularityChain::new(rows).expect("generated chain is stochastic");
    let weights: Vec<f64> = (0..r_modes).map(|_| 0.1 + next() * 2.9).collect();
    let file = FileModel::new(chain, weights).expect("generated weights are positive");

    let mut w = next() * 20.0;
    // Keep x_ub^R within the enumeration budget.
    let cap = match r_modes {
        1 => 300,
        2 => 90,
        _ => 45,
    };
    let w_max = (cap - 1) as f64 * file.min_weight() * 0.999;
    if w > w_max {
        w = w_max;
    }
    (file, w)
}

#[derive(Debug, Clone)]
pub struct RviResult {
    /// Optimal long-run average cost (the gain).
    pub average_cost: f64,
    /// Relative value function over (age, mode), gauge-fixed at (1, first mode).
    pub bias_values: Mat,
    /// Greedy action map: true where downloading is optimal.
    pub update_at: Vec<bool>,
}

impl RviResult {
    pub fn updates(&self, age: usize, mode: usize) -> bool {
        self.update_at[(age - 1) * self.bias_values.cols + mode]
    }
}

/// Relative value iteration for the per-file average-cost problem truncated
/// at `x_ub`, where downloading is forced. Stops when the span of successive
/// value updates falls below `1e-10`.
pub fn rvi_solve(file: &FileModel, w: f64, x_ub: usize) -> Result<RviResult> {
    if w < 0.0 {
        return Err(Error::InvalidParameter("multiplier must be nonnegative".into()));
    }
    if x_ub < age_upper_bound(file, w) {
        return Err(Error::InvalidParameter(format!(
            "truncation {x_ub} is below the safe age bound {}",
            age_upper_bound(file, w)
        )));
    }
    let r_modes = file.num_modes();
    let p = file.chain.matrix();
    let n = x_ub * r_modes;
    let idx = |x: usize, r: usize| (x - 1) * r_modes + r;

    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut gain = 0.0;
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        for x in 1..=x_ub {
            for r in 0..r_modes {
                let cost = file.mode_weight[r] * x as f64;
                let mut dl = 0.0;
                let mut wait = 0.0;
                for rp in 0..r_modes {
                    let pr = p.at(r, rp);
                    dl += pr * v[idx(1, rp)];
                    if x < x_ub {
                        wait += pr * v[idx(x + 1, rp)];
                    }
                }
                let q_dl = cost + w + DAMPING * dl + (1.0 - DAMPING) * v[idx(x, r)];
                let value = if x < x_ub {
                    let q_wait = cost + DAMPING * wait + (1.0 - DAMPING) * v[idx(x, r)];
                    q_dl.min(q_wait)
                } else {
                    q_dl
                };
                next[idx(x, r)] = value;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in next.iter().zip(&v) {
            let d = a - b;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        gain = 0.5 * (lo + hi);
        let reference = next[0];
        for (dst, src) in v.iter_mut().zip(&next) {
            *dst = src - reference;
        }
        if hi - lo <= SPAN_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "relative value iteration did not converge within {MAX_ITERS} sweeps"
        )));
    }

    let mut update_at = vec![false; n];
    let mut bias = Mat::zeros(x_ub, r_modes);
    for x in 1..=x_ub {
        for r in 0..r_modes {
            bias.data[idx(x, r)] = v[idx(x, r)];
            let mut dl = 0.0;
            let mut wait = 0.0;
            for rp in 0..r_modes {
                let pr = p.at(r, rp);
                dl += pr * v[idx(1, rp)];
                if x < x_ub {
                    wait += pr * v[idx(x + 1, rp)];
                }
            }
            let q_dl = w + dl;
            update_at[idx(x, r)] = x == x_ub || q_dl <= wait;
        }
    }
    Ok(RviResult {
        average_cost: gain,
        bias_values: bias,
        update_at,
    })
}

/// Exhaustive search over deterministic threshold policies
/// "download iff age >= tau[mode]" with `tau[mode] in 1..=x_ub`.
///
/// Returns the lexicographically smallest minimizer of
/// `weighted age + W * download rate`, each candidate evaluated exactly over
/// its regeneration cycles.
pub fn enumerate_thresholds(
    file: &FileModel,
    w: f64,
    x_ub: usize,
) -> Result<(Vec<usize>, f64)> {
    let r_modes = file.num_modes();
    let count = (x_ub as u128).checked_pow(r_modes as u32);
    match count {
        Some(c) if c <= ENUM_CAP => {}
        _ => {
            return Err(Error::InvalidParameter(format!(
                "threshold search space {x_ub}^{r_modes} exceeds the cap of {ENUM_CAP}"
            )))
        }
    }

    let mut tau = vec![1usize; r_modes];
    let mut best_tau = tau.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let bound = tau.iter().copied().max().unwrap();
        let (aoi, rate) =
            renewal_performance(file, bound, |age, r| if age >= tau[r] { 1.0 } else { 0.0 })?;
        let cost = aoi + w * rate;
        if cost < best_cost {
            best_cost = cost;
            best_tau.copy_from_slice(&tau);
        }
        // Odometer in lexicographic order, last coordinate fastest.
        let mut k = r_modes;
        loop {
            if k == 0 {
                return Ok((best_tau, best_cost));
            }
            k -= 1;
            if tau[k] < x_ub {
                tau[k] += 1;
                for t in tau.iter_mut().skip(k + 1) {
                    *t = 1;
                }
                break;
            }
        }
    }
}
