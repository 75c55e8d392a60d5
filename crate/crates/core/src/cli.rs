//! Experiment harness: scenario configuration, the solve / simulate /
//! sweep-q / asymptotic commands, and CSV output.
//!
//! CSV schemas are fixed; floats are printed with nine significant digits so
//! reruns of the same scenario are byte-identical. Wall times go to stdout
//! only, never into the CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use crate::cmdp;
use crate::error::{Error, Result};
use crate::lagrange::{self, RelaxedPolicy};
use crate::model::{two_mode_chain, Ensemble, FileModel, PopularityChain};
use crate::oracle;
use crate::policies::{policy_by_name, DecisionPolicy};
use crate::sim::{simulate, SimulationConfig, SimulationReport};

const KNOWN_POLICIES: [&str; 4] = ["relaxed", "truncated", "sqrt", "greedy"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
}

fn default_id() -> String {
    "scenario".into()
}

fn default_policies() -> Vec<String> {
    vec!["truncated".into(), "sqrt".into()]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    /// Zipf(alpha) base weights on a shared symmetric two-mode chain.
    Zipf {
        n: usize,
        m: usize,
        alpha: f64,
        q: f64,
        #[serde(default = "default_low")]
        low_factor: f64,
        #[serde(default = "default_high")]
        high_factor: f64,
    },
    /// N identical copies of one explicit file.
    Homogeneous { n: usize, m: usize, file: FileSpec },
    /// Fully explicit file list.
    Explicit { m: usize, files: Vec<FileSpec> },
}

fn default_low() -> f64 {
    0.2
}

fn default_high() -> f64 {
    1.8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub transition: Vec<Vec<f64>>,
    pub mode_weight: Vec<f64>,
}

impl FileSpec {
    fn build(&self) -> Result<FileModel> {
        FileModel::new(
            PopularityChain::new(self.transition.clone())?,
            self.mode_weight.clone(),
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub bisection_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            bisection_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            horizon: 1_000_000,
            warmup: 10_000,
            seed: 0,
            replications: 10,
        }
    }
}

impl EnsembleSpec {
    pub fn build(&self) -> Result<Ensemble> {
        match self {
            EnsembleSpec::Zipf {
                n,
                m,
                alpha,
                q,
                low_factor,
                high_factor,
            } => crate::model::zipf_ensemble(*n, *alpha, *q, *low_factor, *high_factor, *m),
            EnsembleSpec::Homogeneous { n, m, file } => {
                crate::model::homogeneous_ensemble(*n, *m, file.build()?)
            }
            EnsembleSpec::Explicit { m, files } => {
                let files = files.iter().map(FileSpec::build).collect::<Result<_>>()?;
                Ensemble::new(files, *m)
            }
        }
    }

    /// The persistence parameter when the spec carries one.
    pub fn q(&self) -> Option<f64> {
        match self {
            EnsembleSpec::Zipf { q, .. } => Some(*q),
            _ => None,
        }
    }

    /// Rebuild with overridden persistence and budget (sweep grid points).
    /// Homogeneous specs must carry a two-mode file; its chain is replaced.
    fn with_q_m(&self, q: f64, m: usize) -> Result<Ensemble> {
        match self {
            EnsembleSpec::Zipf {
                n,
                alpha,
                low_factor,
                high_factor,
                ..
            } => crate::model::zipf_ensemble(*n, *alpha, q, *low_factor, *high_factor, m),
            EnsembleSpec::Homogeneous { n, file, .. } => {
                let base = file.build()?;
                if base.num_modes() != 2 {
                    return Err(Error::Config(
                        "sweep-q over a homogeneous ensemble needs a two-mode file".into(),
                    ));
                }
                let swapped = FileModel::new(two_mode_chain(q)?, base.mode_weight.clone())?;
                crate::model::homogeneous_ensemble(*n, m, swapped)
            }
            EnsembleSpec::Explicit { .. } => Err(Error::Config(
                "sweep-q needs a q-parameterized ensemble (zipf or homogeneous)".into(),
            )),
        }
    }

    fn with_n(&self, n: usize, m: usize) -> Result<Ensemble> {
        match self {
            EnsembleSpec::Homogeneous { file, .. } => {
                crate::model::homogeneous_ensemble(n, m, file.build()?)
            }
            _ => Err(Error::Config(
                "asymptotic experiments need a homogeneous ensemble spec".into(),
            )),
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for p in &cfg.policies {
        if !KNOWN_POLICIES.contains(&p.as_str()) {
            return Err(Error::Config(format!(
                "unknown policy '{p}' in field 'policies'"
            )));
        }
    }
    if cfg.policies.is_empty() {
        return Err(Error::Config("field 'policies' must not be empty".into()));
    }
    if cfg.simulation.horizon <= cfg.simulation.warmup {
        return Err(Error::Config(
            "simulation.horizon must exceed simulation.warmup".into(),
        ));
    }
    if cfg.simulation.replications == 0 {
        return Err(Error::Config("simulation.replications must be positive".into()));
    }
    Ok(cfg)
}

fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn write_csv(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub q: Option<f64>,
    pub w_star: f64,
    pub w_left: f64,
    pub w_right: f64,
    pub lambda: f64,
    pub analytic_aoi: f64,
    pub analytic_download_rate: f64,
}

pub const SOLVE_CSV_HEADER: &str =
    "scenario,n,m,q,w_star,w_left,w_right,lambda,analytic_aoi,analytic_download_rate";

pub fn cmd_solve(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<SolveSummary> {
    let started = Instant::now();
    let ensemble = cfg.ensemble.build()?;
    let (result, policy) = lagrange::solve_relaxed(&ensemble, cfg.solver.bisection_tol)?;
    let summary = SolveSummary {
        scenario: cfg.id.clone(),
        n: ensemble.num_files(),
        m: ensemble.bandwidth,
        q: cfg.ensemble.q(),
        w_star: result.w_star,
        w_left: result.w_left,
        w_right: result.w_right,
        lambda: result.lambda,
        analytic_aoi: policy.analytic_aoi,
        analytic_download_rate: policy.analytic_download_rate,
    };
    println!(
        "solve {}: N={} M={} W*={:.6} bracket=[{:.6}, {:.6}] lambda={:.6}",
        summary.scenario, summary.n, summary.m, summary.w_star, summary.w_left, summary.w_right,
        summary.lambda
    );
    println!(
        "  relaxed AoI {:.6}, download rate {:.6} ({} multiplier evaluations, {:.2}s)",
        summary.analytic_aoi,
        summary.analytic_download_rate,
        result.search_trace.len(),
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = out {
        let mut s = String::from(SOLVE_CSV_HEADER);
        s.push('\n');
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            summary.scenario,
            summary.n,
            summary.m,
            fmt_opt(summary.q),
            fmt_float(summary.w_star),
            fmt_float(summary.w_left),
            fmt_float(summary.w_right),
            fmt_float(summary.lambda),
            fmt_float(summary.analytic_aoi),
            fmt_float(summary.analytic_download_rate),
        );
        write_csv(path, &s)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// simulate / sweep shared machinery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scenario: String,
    pub policy: String,
    pub q: Option<f64>,
    pub n: usize,
    pub m: usize,
    /// Per-replication rows carry their index; aggregated rows leave it empty.
    pub replication: Option<usize>,
    pub replications: usize,
    pub analytic_aoi: Option<f64>,
    pub simulated_aoi: f64,
    /// Standard error of the mean across replications.
    pub simulated_aoi_stderr: f64,
    pub avg_downloads: f64,
    pub max_downloads: usize,
}

pub const RESULT_CSV_HEADER: &str = "scenario,policy,q,n,m,replication,replications,\
analytic_aoi,simulated_aoi,simulated_aoi_stderr,avg_downloads,max_downloads";

fn result_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(RESULT_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.policy,
            fmt_opt(r.q),
            r.n,
            r.m,
            r.replication.map(|x| x.to_string()).unwrap_or_default(),
            r.replications,
            fmt_opt(r.analytic_aoi),
            fmt_float(r.simulated_aoi),
            fmt_float(r.simulated_aoi_stderr),
            fmt_float(r.avg_downloads),
            r.max_downloads,
        );
    }
    s
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One policy simulated over `replications` seeds (`seed`, `seed+1`, ...).
#[derive(Debug, Clone)]
pub struct ReplicationStats {
    pub policy: String,
    pub per_rep: Vec<SimulationReport>,
    pub mean_aoi: f64,
    pub stderr_aoi: f64,
    pub mean_downloads: f64,
    pub max_downloads: usize,
}

fn run_replications(
    ensemble: &Ensemble,
    policy_name: &str,
    relaxed: Option<&RelaxedPolicy>,
    sim: &SimulationSpec,
    record_candidates: bool,
) -> Result<ReplicationStats> {
    let reports: Vec<Result<SimulationReport>> = (0..sim.replications)
        .into_par_iter()
        .map(|rep| {
            let policy: Box<dyn DecisionPolicy> = policy_by_name(policy_name, ensemble, relaxed)?;
            let cfg = SimulationConfig {
                horizon: sim.horizon,
                warmup: sim.warmup,
                seed: sim.seed.wrapping_add(rep as u64),
                record_candidate_sizes: record_candidates,
            };
            simulate(ensemble, policy.as_ref(), &cfg)
        })
        .collect();
    let per_rep: Vec<SimulationReport> = reports.into_iter().collect::<Result<_>>()?;
    let aois: Vec<f64> = per_rep.iter().map(|r| r.avg_weighted_aoi).collect();
    let (mean_aoi, stderr_aoi) = mean_stderr(&aois);
    let mean_downloads =
        per_rep.iter().map(|r| r.avg_downloads_per_slot).sum::<f64>() / per_rep.len() as f64;
    let max_downloads = per_rep
        .iter()
        .map(|r| r.max_downloads_in_any_slot)
        .max()
        .unwrap_or(0);
    Ok(ReplicationStats {
        policy: policy_name.to_string(),
        per_rep,
        mean_aoi,
        stderr_aoi,
        mean_downloads,
        max_downloads,
    })
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    let started = Instant::now();
    let ensemble = cfg.ensemble.build()?;
    // The relaxed solve also provides the analytic lower bound column.
    let (_, relaxed) = lagrange::solve_relaxed(&ensemble, cfg.solver.bisection_tol)?;
    let mut rows = Vec::new();
    for policy_name in &cfg.policies {
        let stats = run_replications(
            &ensemble,
            policy_name,
            Some(&relaxed),
            &cfg.simulation,
            policy_name == "relaxed",
        )?;
        println!(
            "simulate {} policy={policy_name}: AoI {:.6} +- {:.6}, downloads/slot {:.4}, max {}",
            cfg.id, stats.mean_aoi, stats.stderr_aoi, stats.mean_downloads, stats.max_downloads
        );
        for (rep, report) in stats.per_rep.iter().enumerate() {
            rows.push(ResultRow {
                scenario: cfg.id.clone(),
                policy: policy_name.clone(),
                q: cfg.ensemble.q(),
                n: ensemble.num_files(),
                m: ensemble.bandwidth,
                replication: Some(rep),
                replications: cfg.simulation.replications,
                analytic_aoi: Some(relaxed.analytic_aoi),
                simulated_aoi: report.avg_weighted_aoi,
                simulated_aoi_stderr: stats.stderr_aoi,
                avg_downloads: report.avg_downloads_per_slot,
                max_downloads: report.max_downloads_in_any_slot,
            });
        }
    }
    println!("simulate {} finished in {:.2}s", cfg.id, started.elapsed().as_secs_f64());
    if let Some(path) = out {
        write_csv(path, &result_csv(&rows))?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// sweep-q
// ---------------------------------------------------------------------------

pub fn default_q_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

pub fn cmd_sweep_q(
    cfg: &ScenarioConfig,
    q_grid: &[f64],
    m_grid: &[usize],
    out: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    let started = Instant::now();
    if q_grid.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::Config("sweep q values must lie strictly in (0,1)".into()));
    }
    if q_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::Config("sweep grids must not be empty".into()));
    }

    struct Point {
        q: f64,
        m: usize,
        ensemble: Ensemble,
        relaxed: RelaxedPolicy,
    }

    let grid: Vec<(usize, f64)> = m_grid
        .iter()
        .flat_map(|&m| q_grid.iter().map(move |&q| (m, q)))
        .collect();
    let points: Vec<Result<Point>> = grid
        .par_iter()
        .map(|&(m, q)| {
            let ensemble = cfg.ensemble.with_q_m(q, m)?;
            let (_, relaxed) = lagrange::solve_relaxed(&ensemble, cfg.solver.bisection_tol)?;
            Ok(Point {
                q,
                m,
                ensemble,
                relaxed,
            })
        })
        .collect();
    let points: Vec<Point> = points.into_iter().collect::<Result<_>>()?;
    println!(
        "sweep-q {}: solved {} grid points in {:.2}s",
        cfg.id,
        points.len(),
        started.elapsed().as_secs_f64()
    );

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|pi| (0..cfg.policies.len()).map(move |gi| (pi, gi)))
        .collect();
    let stats: Vec<Result<ReplicationStats>> = tasks
        .par_iter()
        .map(|&(pi, gi)| {
            run_replications(
                &points[pi].ensemble,
                &cfg.policies[gi],
                Some(&points[pi].relaxed),
                &cfg.simulation,
                cfg.policies[gi] == "relaxed",
            )
        })
        .collect();

    let mut rows = Vec::new();
    for (t, stat) in tasks.iter().zip(stats) {
        let stat = stat?;
        let point = &points[t.0];
        rows.push(ResultRow {
            scenario: cfg.id.clone(),
            policy: stat.policy.clone(),
            q: Some(point.q),
            n: point.ensemble.num_files(),
            m: point.m,
            replication: None,
            replications: cfg.simulation.replications,
            analytic_aoi: Some(point.relaxed.analytic_aoi),
            simulated_aoi: stat.mean_aoi,
            simulated_aoi_stderr: stat.stderr_aoi,
            avg_downloads: stat.mean_downloads,
            max_downloads: stat.max_downloads,
        });
    }
    println!(
        "sweep-q {}: {} rows in {:.2}s",
        cfg.id,
        rows.len(),
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = out {
        write_csv(path, &result_csv(&rows))?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// asymptotic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AsymptoticRow {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub theta: usize,
    pub replications: usize,
    pub analytic_aoi: f64,
    pub simulated_aoi: f64,
    pub simulated_aoi_stderr: f64,
    /// Relative optimality gap of the capped policy against the relaxed bound.
    pub gap: f64,
    pub gap_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct AsymptoticSummary {
    pub rows: Vec<AsymptoticRow>,
    /// Largest deviation between per-file relaxed solutions across N values;
    /// for a fixed N/M ratio the per-file problem does not depend on N.
    pub per_file_solution_max_dev: f64,
}

pub const ASYMPTOTIC_CSV_HEADER: &str = "scenario,n,m,theta,replications,\
analytic_aoi,simulated_aoi,simulated_aoi_stderr,gap,gap_stderr";

pub fn cmd_asymptotic(
    cfg: &ScenarioConfig,
    n_grid: &[usize],
    theta: usize,
    out: Option<&Path>,
) -> Result<AsymptoticSummary> {
    let started = Instant::now();
    if theta == 0 {
        return Err(Error::Config("theta must be positive".into()));
    }
    for &n in n_grid {
        if n % theta != 0 || n / theta == 0 {
            return Err(Error::Config(format!(
                "N={n} is not a positive multiple of theta={theta}"
            )));
        }
    }

    struct Level {
        n: usize,
        m: usize,
        ensemble: Ensemble,
        relaxed: RelaxedPolicy,
        lambda: f64,
        w_star: f64,
    }
    let levels: Vec<Result<Level>> = n_grid
        .par_iter()
        .map(|&n| {
            let m = n / theta;
            let ensemble = cfg.ensemble.with_n(n, m)?;
            let (res, relaxed) = lagrange::solve_relaxed(&ensemble, cfg.solver.bisection_tol)?;
            Ok(Level {
                n,
                m,
                ensemble,
                relaxed,
                lambda: res.lambda,
                w_star: res.w_star,
            })
        })
        .collect();
    let levels: Vec<Level> = levels.into_iter().collect::<Result<_>>()?;

    // Per-file invariance across N: compare the first file's mixture row by
    // row (padded), plus the mixing data itself.
    let mut max_dev: f64 = 0.0;
    for pair in levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        max_dev = max_dev.max((a.lambda - b.lambda).abs());
        max_dev = max_dev.max((a.w_star - b.w_star).abs());
        max_dev = max_dev.max((a.relaxed.per_file_aoi[0] - b.relaxed.per_file_aoi[0]).abs());
        max_dev = max_dev
            .max((a.relaxed.per_file_download[0] - b.relaxed.per_file_download[0]).abs());
        let pa = &a.relaxed.policies[0];
        let pb = &b.relaxed.policies[0];
        let bound = pa.age_bound.max(pb.age_bound);
        for x in 1..=bound {
            for r in 0..pa.xi.cols {
                max_dev = max_dev.max((pa.prob(x, r) - pb.prob(x, r)).abs());
            }
        }
    }

    let stats: Vec<Result<ReplicationStats>> = levels
        .par_iter()
        .map(|level| {
            run_replications(
                &level.ensemble,
                "truncated",
                Some(&level.relaxed),
                &cfg.simulation,
                false,
            )
        })
        .collect();

    let mut rows = Vec::new();
    for (level, stat) in levels.iter().zip(stats) {
        let stat = stat?;
        let bound = level.relaxed.analytic_aoi;
        let gaps: Vec<f64> = stat
            .per_rep
            .iter()
            .map(|r| (r.avg_weighted_aoi - bound) / bound)
            .collect();
        let (gap, gap_stderr) = mean_stderr(&gaps);
        println!(
            "asymptotic {} N={} M={}: gap {:.4} +- {:.4}",
            cfg.id, level.n, level.m, gap, gap_stderr
        );
        rows.push(AsymptoticRow {
            scenario: cfg.id.clone(),
            n: level.n,
            m: level.m,
            theta,
            replications: cfg.simulation.replications,
            analytic_aoi: bound,
            simulated_aoi: stat.mean_aoi,
            simulated_aoi_stderr: stat.stderr_aoi,
            gap,
            gap_stderr,
        });
    }
    println!(
        "asymptotic {}: per-file solution deviation across N: {:.3e} ({:.2}s)",
        cfg.id,
        max_dev,
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = out {
        let mut s = String::from(ASYMPTOTIC_CSV_HEADER);
        s.push('\n');
        for r in &rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.n,
                r.m,
                r.theta,
                r.replications,
                fmt_float(r.analytic_aoi),
                fmt_float(r.simulated_aoi),
                fmt_float(r.simulated_aoi_stderr),
                fmt_float(r.gap),
                fmt_float(r.gap_stderr),
            );
        }
        write_csv(path, &s)?;
    }
    Ok(AsymptoticSummary {
        rows,
        per_file_solution_max_dev: max_dev,
    })
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OracleCheckSummary {
    pub instances: usize,
    pub max_lp_vs_rvi: f64,
    pub max_lp_vs_enum: f64,
    pub threshold_failures: usize,
}

/// Cross-checks the LP pipeline against both oracles on a deterministic
/// battery of random instances.
pub fn cmd_oracle_check(instances: usize, seed: u64) -> Result<OracleCheckSummary> {
    let mut max_rvi: f64 = 0.0;
    let mut max_enum: f64 = 0.0;
    let mut threshold_failures = 0;
    for k in 0..instances {
        let (file, w) = oracle::battery_instance(seed.wrapping_add(k as u64));
        let x_ub = cmdp::age_upper_bound(&file, w);
        let sol = cmdp::solve_per_file(&file, w)?;
        let lp_cost = sol.lagrangian_cost();
        let rvi = oracle::rvi_solve(&file, w, x_ub)?;
        let (_, enum_cost) = oracle::enumerate_thresholds(&file, w, x_ub)?;
        max_rvi = max_rvi.max((lp_cost - rvi.average_cost).abs());
        max_enum = max_enum.max((lp_cost - enum_cost).abs());
        if cmdp::threshold_profile(&cmdp::extract_policy(&sol)).is_none() {
            threshold_failures += 1;
        }
    }
    let summary = OracleCheckSummary {
        instances,
        max_lp_vs_rvi: max_rvi,
        max_lp_vs_enum: max_enum,
        threshold_failures,
    };
    println!(
        "oracle-check: {} instances, max |LP-RVI| = {:.3e}, max |LP-enum| = {:.3e}, \
         threshold failures = {}",
        summary.instances, summary.max_lp_vs_rvi, summary.max_lp_vs_enum,
        summary.threshold_failures
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        toml::from_str::<ScenarioConfig>(text).map_err(|e| Error::Config(e.to_string()))
    }

    #[test]
    fn parses_zipf_scenario() {
        let cfg = parse(
            r#"
            id = "paper"
            policies = ["truncated", "sqrt"]
            [ensemble]
            kind = "zipf"
            n = 64
            m = 8
            alpha = 1.5
            q = 0.9
            [simulation]
            horizon = 100000
            warmup = 1000
            seed = 7
            replications = 3
            "#,
        )
        .unwrap();
        let e = cfg.ensemble.build().unwrap();
        assert_eq!(e.num_files(), 64);
        assert_eq!(e.bandwidth, 8);
        assert_eq!(cfg.ensemble.q(), Some(0.9));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = parse(
            r#"
            [ensemble]
            kind = "zipf"
            n = 4
            m = 2
            alpha = 1.0
            q = 0.5
            typo_field = 3
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("typo_field"), "{err}");
    }

    #[test]
    fn homogeneous_scenario_builds() {
        let cfg = parse(
            r#"
            [ensemble]
            kind = "homogeneous"
            n = 10
            m = 3
            file = { transition = [[1.0]], mode_weight = [1.0] }
            "#,
        )
        .unwrap();
        let e = cfg.ensemble.build().unwrap();
        assert_eq!(e.num_files(), 10);
        assert!(cfg.ensemble.with_n(16, 2).is_ok());
        assert!(cfg.ensemble.with_q_m(0.5, 2).is_err()); // single-mode file
    }

    #[test]
    fn float_format_is_nine_significant_digits() {
        assert_eq!(fmt_float(22.0), "2.20000000e1");
        assert_eq!(fmt_float(0.6), "6.00000000e-1");
    }
}
