//! Multiplier search over the ensemble and construction of the optimal
//! stationary relaxed policy.
//!
//! The ensemble download rate `d(W)` (sum of per-file download fractions at
//! multiplier `W`) is a non-increasing step function of the download price.
//! Bisection brackets the smallest `W` with `d(W) <= M`. Because `d` is
//! discontinuous exactly where the per-file optimal vertex switches, the two
//! bracket endpoints carry the policies on either side of the jump; mixing
//! their steady-state measures with the coefficient
//! `lambda = (M - d_right) / (d_left - d_right)` yields a stationary policy
//! whose expected download rate is exactly the budget `M`.

use rayon::prelude::*;

use crate::cmdp::{
    extract_policy, solve_per_file_hinted, OccupationSolution, StationaryPolicy,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::Ensemble;

/// Two per-file solutions that bracket the multiplier, plus their mixture.
#[derive(Debug, Clone)]
pub struct PerFileMix {
    pub left: OccupationSolution,
    pub right: OccupationSolution,
    /// Mixture age range: the larger of the two solved ranges.
    pub age_bound: usize,
    pub mu_mixed: Mat,
    pub nu_mixed: Mat,
}

#[derive(Debug, Clone)]
pub struct MultiplierResult {
    /// Smallest multiplier found with ensemble download rate at most M.
    pub w_star: f64,
    pub w_left: f64,
    pub w_right: f64,
    /// Ensemble download rates at the bracket endpoints.
    pub d_left: f64,
    pub d_right: f64,
    /// Weight on the left (higher-rate) policy in the mixture.
    pub lambda: f64,
    pub per_file: Vec<PerFileMix>,
    /// Every (W, d(W)) evaluation made during the search, in evaluation order.
    pub search_trace: Vec<(f64, f64)>,
    pub bandwidth: usize,
}

/// The stationary relaxed policy: per-file randomized update rules plus the
/// exact long-run performance of the mixture.
#[derive(Debug, Clone)]
pub struct RelaxedPolicy {
    pub policies: Vec<StationaryPolicy>,
    pub per_file_aoi: Vec<f64>,
    pub per_file_download: Vec<f64>,
    /// Expected total weighted age per slot.
    pub analytic_aoi: f64,
    /// Expected downloads per slot; equals the bandwidth budget.
    pub analytic_download_rate: f64,
}

/// Groups identical files so each distinct model is solved once.
fn distinct_groups(ensemble: &Ensemble) -> (Vec<usize>, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let mut group_of = Vec::with_capacity(ensemble.num_files());
    for (n, file) in ensemble.files.iter().enumerate() {
        match reps.iter().position(|&r| ensemble.files[r] == *file) {
            Some(g) => group_of.push(g),
            None => {
                reps.push(n);
                group_of.push(reps.len() - 1);
            }
        }
    }
    (group_of, reps)
}

fn solve_groups(
    ensemble: &Ensemble,
    reps: &[usize],
    w: f64,
    hints: &mut [usize],
) -> Result<Vec<OccupationSolution>> {
    let solutions: Vec<Result<OccupationSolution>> = reps
        .par_iter()
        .zip(hints.par_iter())
        .map(|(&n, &hint)| {
            let hint = if hint > 0 { Some(hint) } else { None };
            solve_per_file_hinted(&ensemble.files[n], w, hint)
        })
        .collect();
    let mut out = Vec::with_capacity(reps.len());
    for (g, sol) in solutions.into_iter().enumerate() {
        let sol = sol?;
        hints[g] = sol.age_bound;
        out.push(sol);
    }
    Ok(out)
}

fn total_rate(group_of: &[usize], sols: &[OccupationSolution]) -> f64 {
    group_of.iter().map(|&g| sols[g].download_fraction).sum()
}

/// Ensemble download rate `d(W)`: total expected downloads per slot when
/// every file follows its own optimal policy at price `W`.
pub fn ensemble_download_rate(ensemble: &Ensemble, w: f64) -> Result<f64> {
    let (group_of, reps) = distinct_groups(ensemble);
    let mut hints = vec![0usize; reps.len()];
    let sols = solve_groups(ensemble, &reps, w, &mut hints)?;
    Ok(total_rate(&group_of, &sols))
}

/// A bracket endpoint solution is settled for a file when both ends already
/// agree on (cost, rate); by concavity of the optimal Lagrangian in `W` the
/// same vertex stays optimal on the whole interval, so the file can skip
/// re-solves until the bracket moves past one of its breakpoints.
fn settled(a: &OccupationSolution, b: &OccupationSolution) -> bool {
    (a.aoi_cost - b.aoi_cost).abs() <= 1e-9 * 1.0_f64.max(a.aoi_cost.abs())
        && (a.download_fraction - b.download_fraction).abs() <= 1e-9
}

/// Finds the optimal download price for the ensemble's expected-rate budget
/// and returns the bracketing per-file solutions together with the mixture.
pub fn find_multiplier(ensemble: &Ensemble, tol: f64) -> Result<MultiplierResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bisection tolerance must be positive, got {tol}"
        )));
    }
    let m = ensemble.bandwidth as f64;
    let (group_of, reps) = distinct_groups(ensemble);
    let mut hints = vec![0usize; reps.len()];
    let mut trace = Vec::new();

    let sols0 = solve_groups(ensemble, &reps, 0.0, &mut hints)?;
    let d0 = total_rate(&group_of, &sols0);
    trace.push((0.0, d0));
    if d0 <= m + 1e-9 {
        // Bandwidth-abundant regime: price zero already satisfies the budget
        // (every file updates each slot, so this requires M = N).
        return Ok(assemble(
            ensemble, &group_of, 0.0, 0.0, 0.0, d0, d0, 1.0, &sols0, &sols0, trace,
        ));
    }

    let mut left_w = 0.0;
    let mut left_sols = sols0;
    let mut d_left = d0;
    let mut hi_w = 1.0;
    let (mut right_sols, mut d_right);
    loop {
        let sols = solve_groups(ensemble, &reps, hi_w, &mut hints)?;
        let d = total_rate(&group_of, &sols);
        trace.push((hi_w, d));
        if d <= m {
            right_sols = sols;
            d_right = d;
            break;
        }
        left_w = hi_w;
        left_sols = sols;
        d_left = d;
        hi_w *= 2.0;
        if hi_w > 1e12 {
            return Err(Error::Numerical(
                "no multiplier below 1e12 meets the download budget".into(),
            ));
        }
    }
    let mut right_w = hi_w;

    let mut steps = 0;
    while right_w - left_w > tol {
        steps += 1;
        if steps > 200 {
            return Err(Error::Numerical(format!(
                "multiplier bisection exceeded 200 steps \
                 (bracket [{left_w}, {right_w}], rates [{d_left}, {d_right}], target {m})"
            )));
        }
        let mid = 0.5 * (left_w + right_w);
        if mid <= left_w || mid >= right_w {
            break; // bracket narrower than f64 spacing
        }
        let mid_sols: Vec<OccupationSolution> = {
            let tasks: Vec<Result<OccupationSolution>> = reps
                .par_iter()
                .enumerate()
                .map(|(g, &n)| {
                    if settled(&left_sols[g], &right_sols[g]) {
                        let mut sol = right_sols[g].clone();
                        sol.multiplier = mid;
                        Ok(sol)
                    } else {
                        solve_per_file_hinted(
                            &ensemble.files[n],
                            mid,
                            Some(hints[g]).filter(|&h| h > 0),
                        )
                    }
                })
                .collect();
            let mut out = Vec::with_capacity(reps.len());
            for (g, sol) in tasks.into_iter().enumerate() {
                let sol = sol?;
                hints[g] = sol.age_bound;
                out.push(sol);
            }
            out
        };
        let d_mid = total_rate(&group_of, &mid_sols);
        trace.push((mid, d_mid));
        if d_mid <= m {
            right_w = mid;
            right_sols = mid_sols;
            d_right = d_mid;
        } else {
            left_w = mid;
            left_sols = mid_sols;
            d_left = d_mid;
        }
    }

    let lambda = if (d_left - d_right).abs() <= 1e-9 {
        // Rate continuous across the bracket: either pure policy meets the
        // budget and mixing would divide by zero.
        1.0
    } else {
        ((m - d_right) / (d_left - d_right)).clamp(0.0, 1.0)
    };
    let result = assemble(
        ensemble, &group_of, right_w, left_w, right_w, d_left, d_right, lambda, &left_sols,
        &right_sols, trace,
    );
    let mixed_rate = lambda * result.d_left + (1.0 - lambda) * result.d_right;
    if (mixed_rate - m).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "mixed download rate {mixed_rate} misses the budget {m} \
             (d_left={d_left}, d_right={d_right}, lambda={lambda})"
        )));
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    ensemble: &Ensemble,
    group_of: &[usize],
    w_star: f64,
    w_left: f64,
    w_right: f64,
    d_left: f64,
    d_right: f64,
    lambda: f64,
    left: &[OccupationSolution],
    right: &[OccupationSolution],
    search_trace: Vec<(f64, f64)>,
) -> MultiplierResult {
    let per_file = group_of
        .iter()
        .map(|&g| mix_solutions(&left[g], &right[g], lambda))
        .collect();
    MultiplierResult {
        w_star,
        w_left,
        w_right,
        d_left,
        d_right,
        lambda,
        per_file,
        search_trace,
        bandwidth: ensemble.bandwidth,
    }
}

/// Convex combination of the two measures, zero-padded to the larger range.
fn mix_solutions(
    left: &OccupationSolution,
    right: &OccupationSolution,
    lambda: f64,
) -> PerFileMix {
    let bound = left.age_bound.max(right.age_bound);
    let r_modes = left.mu.cols;
    let mut mu = Mat::zeros(bound, r_modes);
    let mut nu = Mat::zeros(bound, r_modes);
    for x in 0..bound {
        for r in 0..r_modes {
            let l_mu = if x < left.age_bound { left.mu.at(x, r) } else { 0.0 };
            let r_mu = if x < right.age_bound { right.mu.at(x, r) } else { 0.0 };
            let l_nu = if x < left.age_bound { left.nu.at(x, r) } else { 0.0 };
            let r_nu = if x < right.age_bound { right.nu.at(x, r) } else { 0.0 };
            *mu.at_mut(x, r) = lambda * l_mu + (1.0 - lambda) * r_mu;
            *nu.at_mut(x, r) = lambda * l_nu + (1.0 - lambda) * r_nu;
        }
    }
    PerFileMix {
        left: left.clone(),
        right: right.clone(),
        age_bound: bound,
        mu_mixed: mu,
        nu_mixed: nu,
    }
}

/// Builds the stationary relaxed policy from the mixed measures and computes
/// its exact performance.
pub fn build_relaxed_policy(
    ensemble: &Ensemble,
    result: &MultiplierResult,
) -> Result<RelaxedPolicy> {
    if result.per_file.len() != ensemble.num_files() {
        return Err(Error::Dimension(
            "multiplier result does not match the ensemble".into(),
        ));
    }
    let mut policies = Vec::with_capacity(result.per_file.len());
    let mut per_file_aoi = Vec::with_capacity(result.per_file.len());
    let mut per_file_download = Vec::with_capacity(result.per_file.len());
    for (file, mix) in ensemble.files.iter().zip(&result.per_file) {
        let mut aoi = 0.0;
        let mut rate = 0.0;
        let mut total = 0.0;
        for x in 0..mix.age_bound {
            for r in 0..file.num_modes() {
                let mu = mix.mu_mixed.at(x, r);
                let nu = mix.nu_mixed.at(x, r);
                if nu > mu + 1e-10 {
                    return Err(Error::Numerical(
                        "mixed occupation measure exceeds steady-state mass".into(),
                    ));
                }
                aoi += file.mode_weight[r] * (x + 1) as f64 * mu;
                rate += nu;
                total += mu;
            }
        }
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "mixed steady-state probabilities sum to {total}"
            )));
        }
        let shim = OccupationSolution {
            multiplier: result.w_star,
            age_bound: mix.age_bound,
            mu: mix.mu_mixed.clone(),
            nu: mix.nu_mixed.clone(),
            aoi_cost: aoi,
            download_fraction: rate,
        };
        policies.push(extract_policy(&shim));
        per_file_aoi.push(aoi);
        per_file_download.push(rate);
    }
    let analytic_aoi: f64 = per_file_aoi.iter().sum();
    let analytic_download_rate: f64 = per_file_download.iter().sum();
    if (analytic_download_rate - ensemble.bandwidth as f64).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "relaxed policy download rate {analytic_download_rate} misses the budget {}",
            ensemble.bandwidth
        )));
    }
    Ok(RelaxedPolicy {
        policies,
        per_file_aoi,
        per_file_download,
        analytic_aoi,
        analytic_download_rate,
    })
}

/// Convenience wrapper: multiplier search followed by policy construction.
pub fn solve_relaxed(ensemble: &Ensemble, tol: f64) -> Result<(MultiplierResult, RelaxedPolicy)> {
    let result = find_multiplier(ensemble, tol)?;
    let policy = build_relaxed_policy(ensemble, &result)?;
    Ok((result, policy))
}
