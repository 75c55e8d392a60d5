//! Per-file relaxed download problem for a fixed multiplier `W`.
//!
//! A single file is a two-dimensional average-cost MDP over (age, mode) with
//! per-slot cost `weight(mode) * age + W * download`. The optimal stationary
//! randomized policy is recovered from a linear program over the steady-state
//! probabilities `mu[x][r]` and occupation measures `nu[x][r]` (probability of
//! being at (x, r) *and* downloading):
//!
//! ```text
//! minimize   sum_{x,r} ( weight(r) * x * mu[x][r] + W * nu[x][r] )
//! s.t.       mu[1][r]  = sum_{x,r'} nu[x][r'] P[r'][r]
//!            mu[x][r]  = sum_{r'} (mu[x-1][r'] - nu[x-1][r']) P[r'][r],  x > 1
//!            sum mu = 1,   0 <= nu <= mu
//! ```
//!
//! Ages are capped at `age_upper_bound`, beyond which downloading is always
//! at least as good as waiting. That cap is safe but very loose: the optimal
//! thresholds sit near `sqrt(2 W / weight)` while the cap grows like
//! `W / min weight`. Solving the LP over the full capped range would be
//! needlessly large, so `solve_per_file` solves over a smaller age range and
//! certifies the result against the full range by evaluating the extracted
//! policy (exact gain/bias solve) and checking the average-cost optimality
//! condition at every capped state. If the certificate fails the range is
//! doubled; in the worst case it reaches the full cap, where no certificate
//! is needed.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, stationary_by_solve, Mat};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::model::FileModel;

/// States with steady-state mass below this are treated as unreached when
/// extracting update probabilities (their ratio is noise).
const MU_FLOOR: f64 = 1e-9;
/// Smallest truncated age range tried by the adaptive solve.
const MIN_SOLVE_BOUND: usize = 32;
/// Hard cap on the age state space; beyond this the instance is rejected.
const MAX_AGE_BOUND: usize = 1_000_000;

/// Steady-state solution of the per-file problem at one multiplier.
#[derive(Debug, Clone)]
pub struct OccupationSolution {
    pub multiplier: f64,
    /// Number of age levels carried by `mu`/`nu`. This is the solved support
    /// bound; it never exceeds the analytic cap and downloading is certain at
    /// this age.
    pub age_bound: usize,
    /// `age_bound x R` steady-state probabilities.
    pub mu: Mat,
    /// `age_bound x R` occupation measures (download action taken).
    pub nu: Mat,
    /// Expected weighted age per slot under the optimal policy.
    pub aoi_cost: f64,
    /// Expected downloads per slot.
    pub download_fraction: f64,
}

impl OccupationSolution {
    /// Objective value of the underlying LP.
    pub fn lagrangian_cost(&self) -> f64 {
        self.aoi_cost + self.multiplier * self.download_fraction
    }
}

/// Randomized stationary update rule: download with probability `xi[x][r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    /// `age_bound x R` download probabilities; the last age row is all ones.
    pub xi: Mat,
    pub age_bound: usize,
}

impl StationaryPolicy {
    /// Download probability at (age, mode); ages past the bound download
    /// with certainty.
    #[inline]
    pub fn prob(&self, age: usize, mode: usize) -> f64 {
        if age >= self.age_bound {
            1.0
        } else {
            self.xi.at(age - 1, mode)
        }
    }
}

/// Age cap from the one-step improvement bound: in mode `r` any policy that
/// waits past `(W + weight(r)) / weight(r)` can be improved by downloading.
pub fn age_upper_bound(file: &FileModel, w: f64) -> usize {
    let bound = (1.0 + w / file.min_weight()).ceil();
    if bound < 1.0 {
        1
    } else {
        bound as usize
    }
}

/// Builds the full occupation-measure LP at the analytic age cap.
/// Variables are laid out `mu[(x-1)*R + r]` then `nu` at offset `bound*R`.
pub fn build_per_file_lp(file: &FileModel, w: f64) -> LinearProgram {
    build_lp_at_bound(file, w, age_upper_bound(file, w))
}

pub(crate) fn build_lp_at_bound(file: &FileModel, w: f64, bound: usize) -> LinearProgram {
    let r_modes = file.num_modes();
    let n_mu = bound * r_modes;
    let n = 2 * n_mu;
    let p = &file.chain;

    let mut objective = vec![0.0; n];
    for x in 1..=bound {
        for r in 0..r_modes {
            objective[(x - 1) * r_modes + r] = file.mode_weight[r] * x as f64;
            objective[n_mu + (x - 1) * r_modes + r] = w;
        }
    }

    // Balance equations for every (x, r), then total probability.
    let mut eq = Mat::zeros(n_mu + 1, n);
    let mut eq_rhs = vec![0.0; n_mu + 1];
    for r in 0..r_modes {
        let row = r;
        *eq.at_mut(row, r) = 1.0;
        for x in 1..=bound {
            for rp in 0..r_modes {
                *eq.at_mut(row, n_mu + (x - 1) * r_modes + rp) -= p.prob(rp, r);
            }
        }
    }
    for x in 2..=bound {
        for r in 0..r_modes {
            let row = (x - 1) * r_modes + r;
            *eq.at_mut(row, (x - 1) * r_modes + r) = 1.0;
            for rp in 0..r_modes {
                *eq.at_mut(row, (x - 2) * r_modes + rp) -= p.prob(rp, r);
                *eq.at_mut(row, n_mu + (x - 2) * r_modes + rp) += p.prob(rp, r);
            }
        }
    }
    for j in 0..n_mu {
        *eq.at_mut(n_mu, j) = 1.0;
    }
    eq_rhs[n_mu] = 1.0;

    // nu <= mu.
    let mut ub = Mat::zeros(n_mu, n);
    for j in 0..n_mu {
        *ub.at_mut(j, n_mu + j) = 1.0;
        *ub.at_mut(j, j) = -1.0;
    }

    LinearProgram::new(objective, eq, eq_rhs, ub, vec![0.0; n_mu])
        .expect("per-file LP dimensions are consistent by construction")
}

/// Equivalent LP over the occupation measures alone. The balance equations
/// determine `mu` linearly from `nu`, so substituting them out shrinks the
/// program by half the variables and all-but-one equality row; the total
/// probability constraint collapses to `sum_y y * nu[y] = 1` (one download
/// per cycle of expected length `sum y nu[y]`).
fn build_reduced_lp(file: &FileModel, w: f64, bound: usize) -> LinearProgram {
    let r_modes = file.num_modes();
    let n = bound * r_modes;
    let p = file.chain.matrix();

    // pow_w[k] = P^k * weight (column vector), prefix sums over k.
    let mut pw = file.mode_weight.clone();
    let mut sum_pw = vec![0.0; r_modes]; // U_k = sum_{j<=k} P^j w
    let mut sum_jpw = vec![0.0; r_modes]; // V_k = sum_{j<=k} j P^j w
    let mut u = Mat::zeros(bound + 1, r_modes);
    let mut v = Mat::zeros(bound + 1, r_modes);
    let mut scratch = vec![0.0; r_modes];
    for k in 1..=bound {
        for r in 0..r_modes {
            scratch[r] = p.row(r).iter().zip(&pw).map(|(a, b)| a * b).sum();
        }
        pw.copy_from_slice(&scratch);
        for r in 0..r_modes {
            sum_pw[r] += pw[r];
            sum_jpw[r] += k as f64 * pw[r];
            *u.at_mut(k, r) = sum_pw[r];
            *v.at_mut(k, r) = sum_jpw[r];
        }
    }

    // Objective: W plus the weighted-age mass generated by a download at
    // (y, r'): c[y][r'] = W + V_bound - (V_{bound-y} + y U_{bound-y}).
    let mut objective = vec![0.0; n];
    for y in 1..=bound {
        let k = bound - y;
        for rp in 0..r_modes {
            objective[(y - 1) * r_modes + rp] =
                w + v.at(bound, rp) - (v.at(k, rp) + y as f64 * u.at(k, rp));
        }
    }

    // sum_y y * nu[y][r'] = 1.
    let mut eq = Mat::zeros(1, n);
    for y in 1..=bound {
        for rp in 0..r_modes {
            *eq.at_mut(0, (y - 1) * r_modes + rp) = y as f64;
        }
    }

    // nu[x][r] <= mu[x][r](nu). The coefficient of nu[y][r'] in mu[x][r] is
    // (P^x)[r'][r] for y >= x and (P^x - P^{x-y})[r'][r] otherwise.
    let mut ppow = Vec::with_capacity(bound + 1);
    ppow.push({
        let mut ident = Mat::zeros(r_modes, r_modes);
        for r in 0..r_modes {
            *ident.at_mut(r, r) = 1.0;
        }
        ident
    });
    for k in 1..=bound {
        let prev = &ppow[k - 1];
        let mut next = Mat::zeros(r_modes, r_modes);
        for a in 0..r_modes {
            for b in 0..r_modes {
                let mut acc = 0.0;
                for c in 0..r_modes {
                    acc += prev.at(a, c) * p.at(c, b);
                }
                *next.at_mut(a, b) = acc;
            }
        }
        ppow.push(next);
    }

    let mut ub = Mat::zeros(n, n);
    for x in 1..=bound {
        let px = &ppow[x];
        for r in 0..r_modes {
            let row = (x - 1) * r_modes + r;
            for y in 1..=bound {
                for rp in 0..r_modes {
                    let mut coef = px.at(rp, r);
                    if y < x {
                        coef -= ppow[x - y].at(rp, r);
                    }
                    *ub.at_mut(row, (y - 1) * r_modes + rp) = -coef;
                }
            }
            *ub.at_mut(row, row) += 1.0;
        }
    }

    LinearProgram::new(objective, eq, vec![1.0], ub, vec![0.0; n])
        .expect("reduced LP dimensions are consistent by construction")
}

/// Rebuilds `mu` from `nu` through the balance recursion.
fn reconstruct_mu(file: &FileModel, nu: &Mat) -> Mat {
    let r_modes = file.num_modes();
    let bound = nu.rows;
    let p = file.chain.matrix();
    let mut mu = Mat::zeros(bound, r_modes);

    let mut nu_total = vec![0.0; r_modes];
    for x in 0..bound {
        for r in 0..r_modes {
            nu_total[r] += nu.at(x, r).max(0.0);
        }
    }
    let mut carry = vec![0.0; r_modes]; // mass moving to the next age level
    for r in 0..r_modes {
        let mut acc = 0.0;
        for rp in 0..r_modes {
            acc += nu_total[rp] * p.at(rp, r);
        }
        *mu.at_mut(0, r) = acc;
    }
    for x in 1..bound {
        for rp in 0..r_modes {
            carry[rp] = (mu.at(x - 1, rp) - nu.at(x - 1, rp)).max(0.0);
        }
        for r in 0..r_modes {
            let mut acc = 0.0;
            for rp in 0..r_modes {
                acc += carry[rp] * p.at(rp, r);
            }
            *mu.at_mut(x, r) = acc;
        }
    }
    mu
}

fn solve_at_bound(file: &FileModel, w: f64, bound: usize) -> Result<OccupationSolution> {
    match solve_at_bound_reduced(file, w, bound) {
        Ok(sol) => Ok(sol),
        // The substituted form can be numerically harder than the sparse
        // original; fall back to the full program before giving up.
        Err(Error::Numerical(_)) => solve_at_bound_full(file, w, bound),
        Err(e) => Err(e),
    }
}

/// Solves the full (mu, nu) program directly.
fn solve_at_bound_full(file: &FileModel, w: f64, bound: usize) -> Result<OccupationSolution> {
    let r_modes = file.num_modes();
    let n_mu = bound * r_modes;
    let lp = build_lp_at_bound(file, w, bound);
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!(
            "per-file LP reported {:?} at W={w}, bound={bound}",
            sol.status
        )));
    }
    let mut nu = Mat::zeros(bound, r_modes);
    nu.data
        .copy_from_slice(&sol.values[n_mu..2 * n_mu]);
    for v in nu.data.iter_mut() {
        *v = v.max(0.0);
    }
    finish_solution(file, w, bound, nu, sol.objective_value)
}

fn solve_at_bound_reduced(file: &FileModel, w: f64, bound: usize) -> Result<OccupationSolution> {
    let r_modes = file.num_modes();
    let lp = build_reduced_lp(file, w, bound);
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        // The program always contains the always-update point, so anything
        // else is a solver breakdown.
        return Err(Error::Numerical(format!(
            "per-file LP reported {:?} at W={w}, bound={bound}",
            sol.status
        )));
    }

    let mut nu = Mat::zeros(bound, r_modes);
    for x in 0..bound {
        for r in 0..r_modes {
            nu.data[x * r_modes + r] = sol.values[x * r_modes + r].max(0.0);
        }
    }
    finish_solution(file, w, bound, nu, sol.objective_value)
}

/// Reconstructs `mu`, validates the solution contracts and assembles the
/// result from a nonnegative occupation measure.
fn finish_solution(
    file: &FileModel,
    w: f64,
    bound: usize,
    mut nu: Mat,
    lp_objective: f64,
) -> Result<OccupationSolution> {
    let r_modes = file.num_modes();
    let mu = reconstruct_mu(file, &nu);

    let mut total_mu = 0.0;
    let mut aoi_cost = 0.0;
    let mut download = 0.0;
    for x in 0..bound {
        for r in 0..r_modes {
            let m = mu.at(x, r);
            let v = nu.at(x, r);
            if v > m {
                // Solver noise on an active nu <= mu row; anything beyond the
                // LP residual guarantee is a real failure.
                if v - m > 1e-8 {
                    return Err(Error::Numerical(format!(
                        "occupation measure exceeds steady-state mass at age {} mode {r}",
                        x + 1
                    )));
                }
                nu.data[x * r_modes + r] = m;
            }
            let v = nu.at(x, r);
            total_mu += m;
            aoi_cost += file.mode_weight[r] * (x + 1) as f64 * m;
            download += v;
        }
    }
    if (total_mu - 1.0).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "steady-state probabilities sum to {total_mu} at W={w}, bound={bound}"
        )));
    }
    if !(-1e-8..=1.0 + 1e-8).contains(&download) {
        return Err(Error::Numerical(format!(
            "download fraction {download} outside [0,1]"
        )));
    }
    let scale = 1.0_f64.max(lp_objective.abs());
    if (aoi_cost + w * download - lp_objective).abs() > 1e-6 * scale {
        return Err(Error::Numerical(
            "reconstructed cost disagrees with LP objective".into(),
        ));
    }

    Ok(OccupationSolution {
        multiplier: w,
        age_bound: bound,
        mu,
        nu,
        aoi_cost,
        download_fraction: download,
    })
}

/// Solves the per-file problem at multiplier `w`.
pub fn solve_per_file(file: &FileModel, w: f64) -> Result<OccupationSolution> {
    solve_per_file_hinted(file, w, None)
}

/// As `solve_per_file`, with a starting age range carried over from a
/// previous solve at a nearby multiplier.
pub fn solve_per_file_hinted(
    file: &FileModel,
    w: f64,
    hint: Option<usize>,
) -> Result<OccupationSolution> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "multiplier must be finite and nonnegative, got {w}"
        )));
    }
    let full = age_upper_bound(file, w);
    if full > MAX_AGE_BOUND {
        return Err(Error::Numerical(format!(
            "age bound {full} exceeds the supported maximum {MAX_AGE_BOUND}"
        )));
    }
    let mut bound = full.min(MIN_SOLVE_BOUND.max(hint.unwrap_or(0)));
    loop {
        let sol = solve_at_bound(file, w, bound)?;
        if bound == full {
            return Ok(sol);
        }
        let policy = extract_policy(&sol);
        match certify_globally_optimal(file, w, full, &policy) {
            Ok(true) => return Ok(sol),
            Ok(false) => {}
            Err(Error::Numerical(_)) => {}
            Err(e) => return Err(e),
        }
        bound = (bound * 2).min(full);
    }
}

/// Update probabilities from the measure ratio, with unreached states
/// defaulting to certain download (the ratio is 0/0 there, and the default
/// keeps the induced chain bounded and ergodic).
pub fn extract_policy(sol: &OccupationSolution) -> StationaryPolicy {
    let bound = sol.age_bound;
    let r_modes = sol.mu.cols;
    let mut xi = Mat::zeros(bound, r_modes);
    for x in 0..bound {
        for r in 0..r_modes {
            let m = sol.mu.at(x, r);
            let value = if m > MU_FLOOR {
                (sol.nu.at(x, r) / m).clamp(0.0, 1.0)
            } else {
                1.0
            };
            *xi.at_mut(x, r) = value;
        }
    }
    for r in 0..r_modes {
        *xi.at_mut(bound - 1, r) = 1.0;
    }
    StationaryPolicy {
        xi,
        age_bound: bound,
    }
}

/// Exact long-run (weighted age, download rate) of a randomized stationary
/// policy, computed over download-to-download regeneration cycles.
///
/// A cycle starts at age 1 and ends at the download age, so walking the
/// surviving probability mass age by age yields the expected cycle cost and
/// length conditional on the starting mode; the starting-mode chain then ties
/// the cycles together. This avoids building the full (age, mode) chain and
/// is exact for periodic cases such as deterministic thresholds.
pub fn analytic_performance(policy: &StationaryPolicy, file: &FileModel) -> Result<(f64, f64)> {
    renewal_performance(file, policy.age_bound, |age, mode| policy.prob(age, mode))
}

pub(crate) fn renewal_performance(
    file: &FileModel,
    bound: usize,
    xi: impl Fn(usize, usize) -> f64,
) -> Result<(f64, f64)> {
    let r_modes = file.num_modes();
    let p = file.chain.matrix();
    let mut start_kernel = Mat::zeros(r_modes, r_modes);
    let mut cycle_cost = vec![0.0; r_modes];
    let mut cycle_len = vec![0.0; r_modes];

    let mut survivors = vec![0.0; r_modes];
    let mut next = vec![0.0; r_modes];
    for r0 in 0..r_modes {
        survivors.fill(0.0);
        survivors[r0] = 1.0;
        let mut cost = 0.0;
        let mut len = 0.0;
        let mut downloaded = 0.0;
        for age in 1..=bound {
            next.fill(0.0);
            for r in 0..r_modes {
                let mass = survivors[r];
                if mass <= 0.0 {
                    continue;
                }
                cost += file.mode_weight[r] * age as f64 * mass;
                let prob = if age == bound { 1.0 } else { xi(age, r).clamp(0.0, 1.0) };
                let dl = mass * prob;
                if dl > 0.0 {
                    len += age as f64 * dl;
                    downloaded += dl;
                    for rp in 0..r_modes {
                        *start_kernel.at_mut(r0, rp) += dl * p.at(r, rp);
                    }
                }
                let stay = mass - dl;
                if stay > 0.0 {
                    for rp in 0..r_modes {
                        next[rp] += stay * p.at(r, rp);
                    }
                }
            }
            std::mem::swap(&mut survivors, &mut next);
        }
        if (downloaded - 1.0).abs() > 1e-9 {
            return Err(Error::Model(
                "policy does not terminate every cycle within its age bound".into(),
            ));
        }
        cycle_cost[r0] = cost;
        cycle_len[r0] = len;
    }

    let start_dist = stationary_by_solve(&start_kernel).map_err(|_| {
        Error::Model("induced cycle chain is not ergodic (no unique stationary start mode)".into())
    })?;
    let mean_len: f64 = start_dist.iter().zip(&cycle_len).map(|(p, l)| p * l).sum();
    let mean_cost: f64 = start_dist.iter().zip(&cycle_cost).map(|(p, c)| p * c).sum();
    if !(mean_len >= 1.0 - 1e-9) {
        return Err(Error::Model("expected cycle length below one slot".into()));
    }
    Ok((mean_cost / mean_len, 1.0 / mean_len))
}

/// Checks whether a policy solved on a truncated age range is optimal for
/// the problem on the full range `1..=full_bound`.
///
/// The policy is evaluated exactly: its bias is affine in the unknown
/// (gain, bias-at-age-1) vector, which a backward sweep plus a small linear
/// solve pins down. The policy is optimal iff its bias attains the one-step
/// minimum at every state.
fn certify_globally_optimal(
    file: &FileModel,
    w: f64,
    full_bound: usize,
    policy: &StationaryPolicy,
) -> Result<bool> {
    let r_modes = file.num_modes();
    let p = file.chain.matrix();
    let unknowns = r_modes + 1; // h(1, .) and the gain

    // coeff[x][r] holds h(x, r) as [constant, coef of h(1,0..R), coef of g].
    let stride = unknowns + 1;
    let mut coeff = vec![0.0; full_bound * r_modes * stride];
    let idx = |x: usize, r: usize| ((x - 1) * r_modes + r) * stride;

    for x in (1..=full_bound).rev() {
        for r in 0..r_modes {
            let xi = if x == full_bound {
                1.0
            } else {
                policy.prob(x, r)
            };
            let base = idx(x, r);
            let cost = file.mode_weight[r] * x as f64;
            // Download branch: cost + W - g + sum P h(1, .)
            coeff[base] = cost + xi * w;
            coeff[base + 1 + r_modes] = -1.0;
            for rp in 0..r_modes {
                coeff[base + 1 + rp] = xi * p.at(r, rp);
            }
            if xi < 1.0 {
                // Wait branch shares -g and adds next-age bias.
                let stay = 1.0 - xi;
                for rp in 0..r_modes {
                    let nb = idx(x + 1, rp);
                    let f = stay * p.at(r, rp);
                    for k in 0..stride {
                        coeff[base + k] += f * coeff[nb + k];
                    }
                }
            }
        }
    }

    // Consistency at age 1 plus the gauge h(1, 0) = 0.
    let mut a = Mat::zeros(unknowns, unknowns);
    let mut b = vec![0.0; unknowns];
    for r in 0..r_modes {
        let base = idx(1, r);
        for j in 0..r_modes {
            *a.at_mut(r, j) = (if r == j { 1.0 } else { 0.0 }) - coeff[base + 1 + j];
        }
        *a.at_mut(r, r_modes) = -coeff[base + 1 + r_modes];
        b[r] = coeff[base];
    }
    for j in 0..unknowns {
        *a.at_mut(r_modes, j) = if j == 0 { 1.0 } else { 0.0 };
    }
    let solved = lu_solve(a, b)?;
    let gain = solved[r_modes];
    let h1 = &solved[..r_modes];

    // Materialize the bias and check one-step optimality everywhere.
    let mut h = vec![0.0; full_bound * r_modes];
    for x in 1..=full_bound {
        for r in 0..r_modes {
            let base = idx(x, r);
            let mut val = coeff[base] + coeff[base + 1 + r_modes] * gain;
            for j in 0..r_modes {
                val += coeff[base + 1 + j] * h1[j];
            }
            h[(x - 1) * r_modes + r] = val;
        }
    }

    let tol = 1e-7 * 1.0_f64.max(gain.abs());
    let h_at = |x: usize, r: usize| h[(x - 1) * r_modes + r];
    for x in 1..=full_bound {
        for r in 0..r_modes {
            let cost = file.mode_weight[r] * x as f64;
            let mut q_dl = cost + w - gain;
            for rp in 0..r_modes {
                q_dl += p.at(r, rp) * h_at(1, rp);
            }
            let mut best = q_dl;
            if x < full_bound {
                let mut q_wait = cost - gain;
                for rp in 0..r_modes {
                    q_wait += p.at(r, rp) * h_at(x + 1, rp);
                }
                best = best.min(q_wait);
            }
            if h_at(x, r) > best + tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Largest residual of the balance equations and the probability constraint
/// at a solution; diagnostic used by the test batteries.
pub fn balance_residual(file: &FileModel, sol: &OccupationSolution) -> f64 {
    let r_modes = file.num_modes();
    let bound = sol.age_bound;
    let p = file.chain.matrix();
    let mut worst: f64 = 0.0;
    for r in 0..r_modes {
        let mut rhs = 0.0;
        for x in 0..bound {
            for rp in 0..r_modes {
                rhs += sol.nu.at(x, rp) * p.at(rp, r);
            }
        }
        worst = worst.max((sol.mu.at(0, r) - rhs).abs());
    }
    for x in 1..bound {
        for r in 0..r_modes {
            let mut rhs = 0.0;
            for rp in 0..r_modes {
                rhs += (sol.mu.at(x - 1, rp) - sol.nu.at(x - 1, rp)) * p.at(rp, r);
            }
            worst = worst.max((sol.mu.at(x, r) - rhs).abs());
        }
    }
    let total: f64 = sol.mu.data.iter().sum();
    worst.max((total - 1.0).abs())
}

/// Classifies a policy as mode-wise threshold-shaped: per mode, zeros up to
/// the threshold, then at most one fractional entry, then ones. Returns the
/// per-mode thresholds (first age with positive download probability).
pub fn threshold_profile(policy: &StationaryPolicy) -> Option<Vec<usize>> {
    const TOL: f64 = 1e-7;
    let bound = policy.age_bound;
    let r_modes = policy.xi.cols;
    let mut thresholds = Vec::with_capacity(r_modes);
    for r in 0..r_modes {
        let mut tau = None;
        let mut fractional = 0;
        for x in 1..=bound {
            let v = policy.xi.at(x - 1, r);
            match tau {
                None => {
                    if v > TOL {
                        tau = Some(x);
                        if v < 1.0 - TOL {
                            fractional += 1;
                        }
                    }
                }
                Some(t) => {
                    if v < 1.0 - TOL {
                        // Only the threshold age itself may be fractional.
                        if x != t || v <= TOL {
                            return None;
                        }
                    }
                }
            }
            if fractional > 1 {
                return None;
            }
        }
        thresholds.push(tau.unwrap_or(bound));
    }
    Some(thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_mode_chain, FileModel, PopularityChain};

    fn single_mode(weight: f64) -> FileModel {
        FileModel::new(
            PopularityChain::new(vec![vec![1.0]]).unwrap(),
            vec![weight],
        )
        .unwrap()
    }

    fn two_mode_file(q: f64, w_low: f64, w_high: f64) -> FileModel {
        FileModel::new(two_mode_chain(q).unwrap(), vec![w_low, w_high]).unwrap()
    }

    #[test]
    fn age_bound_examples() {
        assert_eq!(age_upper_bound(&two_mode_file(0.5, 1.0, 1.0), 0.0), 1);
        assert_eq!(age_upper_bound(&two_mode_file(0.9, 0.2, 1.8), 10.0), 51);
        assert_eq!(age_upper_bound(&single_mode(1.0), 7.5), 9);
    }

    #[test]
    fn trivial_lp_at_zero_multiplier() {
        let file = single_mode(1.0);
        let lp = build_per_file_lp(&file, 0.0);
        assert_eq!(lp.n_vars, 2);
        let sol = lp::solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.values[0] - 1.0).abs() < 1e-9);
        assert!((sol.values[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_multiplier_updates_every_slot() {
        let file = two_mode_file(0.9, 0.2, 1.8);
        let sol = solve_per_file(&file, 0.0).unwrap();
        assert!((sol.download_fraction - 1.0).abs() < 1e-9);
        assert!((sol.aoi_cost - 1.0).abs() < 1e-9); // stationary mean of (0.2, 1.8)
    }

    #[test]
    fn single_mode_integer_cycle_cost() {
        // min over thresholds of (tau+1)/2 + 10/tau = 5.0 at tau in {4, 5}.
        let file = single_mode(1.0);
        let sol = solve_per_file(&file, 10.0).unwrap();
        assert!((sol.lagrangian_cost() - 5.0).abs() < 1e-8);
        assert!(
            sol.download_fraction >= 0.2 - 1e-9 && sol.download_fraction <= 0.25 + 1e-9,
            "degenerate optimum must mix thresholds 4 and 5, got d={}",
            sol.download_fraction
        );
    }

    #[test]
    fn symmetric_two_mode_collapses_to_single_mode() {
        let flat = two_mode_file(0.5, 1.0, 1.0);
        let single = single_mode(1.0);
        for w in [0.0, 3.0, 10.0, 17.5] {
            let a = solve_per_file(&flat, w).unwrap();
            let b = solve_per_file(&single, w).unwrap();
            assert!((a.lagrangian_cost() - b.lagrangian_cost()).abs() < 1e-8);
        }
    }

    #[test]
    fn reduced_lp_matches_full_lp() {
        let cases = vec![
            (two_mode_file(0.9, 0.2, 1.8), 5.0),
            (two_mode_file(0.3, 0.7, 2.1), 4.0),
            (single_mode(1.0), 10.0),
            (two_mode_file(0.6, 1.0, 1.5), 0.0),
        ];
        for (file, w) in cases {
            let full = lp::solve(&build_per_file_lp(&file, w)).unwrap();
            let bound = age_upper_bound(&file, w);
            let reduced = lp::solve(&build_reduced_lp(&file, w, bound)).unwrap();
            assert_eq!(full.status, LpStatus::Optimal);
            assert_eq!(reduced.status, LpStatus::Optimal);
            assert!(
                (full.objective_value - reduced.objective_value).abs() < 1e-8,
                "objective mismatch at W={w}: {} vs {}",
                full.objective_value,
                reduced.objective_value
            );
        }
    }

    #[test]
    fn truncated_solve_agrees_with_full_bound() {
        // Bound 51 exceeds the adaptive starting range, forcing at least one
        // certificate pass.
        let file = two_mode_file(0.9, 0.2, 1.8);
        let adaptive = solve_per_file(&file, 10.0).unwrap();
        let direct = solve_at_bound(&file, 10.0, age_upper_bound(&file, 10.0)).unwrap();
        assert!(
            (adaptive.lagrangian_cost() - direct.lagrangian_cost()).abs() < 1e-8,
            "adaptive {} vs direct {}",
            adaptive.lagrangian_cost(),
            direct.lagrangian_cost()
        );
    }

    #[test]
    fn extract_policy_ratio_and_convention() {
        let mut mu = Mat::zeros(2, 1);
        let mut nu = Mat::zeros(2, 1);
        *mu.at_mut(0, 0) = 0.2;
        *nu.at_mut(0, 0) = 0.1;
        let sol = OccupationSolution {
            multiplier: 1.0,
            age_bound: 2,
            mu,
            nu,
            aoi_cost: 0.0,
            download_fraction: 0.1,
        };
        let policy = extract_policy(&sol);
        assert!((policy.xi.at(0, 0) - 0.5).abs() < 1e-12);
        // Unreached state gets the 0/0 -> 1 convention, and the bound row is 1.
        assert_eq!(policy.xi.at(1, 0), 1.0);
    }

    #[test]
    fn always_update_performance() {
        let file = two_mode_file(0.9, 0.2, 1.8);
        let policy = StationaryPolicy {
            xi: {
                let mut m = Mat::zeros(1, 2);
                m.data.fill(1.0);
                m
            },
            age_bound: 1,
        };
        let (a, d) = analytic_performance(&policy, &file).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_threshold_cycle_average() {
        let file = single_mode(1.0);
        let mut xi = Mat::zeros(5, 1);
        *xi.at_mut(4, 0) = 1.0;
        let policy = StationaryPolicy { xi, age_bound: 5 };
        let (a, d) = analytic_performance(&policy, &file).unwrap();
        assert!((a - 3.0).abs() < 1e-12);
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn policy_round_trip_reproduces_solution() {
        for (file, w) in [
            (two_mode_file(0.9, 0.2, 1.8), 5.0),
            (two_mode_file(0.4, 0.5, 2.5), 2.0),
            (single_mode(0.7), 6.0),
        ] {
            let sol = solve_per_file(&file, w).unwrap();
            let policy = extract_policy(&sol);
            let (a, d) = analytic_performance(&policy, &file).unwrap();
            assert!(
                (a - sol.aoi_cost).abs() < 1e-7,
                "aoi mismatch: {a} vs {}",
                sol.aoi_cost
            );
            assert!(
                (d - sol.download_fraction).abs() < 1e-7,
                "rate mismatch: {d} vs {}",
                sol.download_fraction
            );
        }
    }

    #[test]
    fn extracted_policies_are_threshold_shaped() {
        for (file, w) in [
            (two_mode_file(0.9, 0.2, 1.8), 5.0),
            (two_mode_file(0.2, 0.3, 2.9), 12.0),
            (single_mode(1.0), 10.0),
        ] {
            let sol = solve_per_file(&file, w).unwrap();
            let policy = extract_policy(&sol);
            assert!(
                threshold_profile(&policy).is_some(),
                "policy at W={w} is not threshold shaped"
            );
        }
    }

    #[test]
    fn download_fraction_nonincreasing_in_multiplier() {
        let file = two_mode_file(0.8, 0.4, 1.6);
        let mut last = f64::INFINITY;
        for i in 0..25 {
            let w = i as f64 * 0.8;
            let d = solve_per_file(&file, w).unwrap().download_fraction;
            assert!(
                d <= last + 1e-8,
                "download fraction increased from {last} to {d} at W={w}"
            );
            last = d;
        }
    }

    #[test]
    fn balance_residuals_are_tiny() {
        let file = two_mode_file(0.9, 0.2, 1.8);
        let sol = solve_per_file(&file, 5.0).unwrap();
        assert!(balance_residual(&file, &sol) <= 1e-8);
    }

    #[test]
    fn negative_multiplier_rejected() {
        assert!(solve_per_file(&single_mode(1.0), -1.0).is_err());
    }
}
