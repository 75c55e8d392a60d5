//! Popularity models: per-file Markov mode chains, request-rate functions,
//! and the ensemble constructors used by the experiments (Zipf-weighted
//! two-mode files, homogeneous copies).

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Row-stochastic Markov chain over popularity modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityChain {
    transition: Mat,
}

impl PopularityChain {
    /// Builds a chain from a row-stochastic matrix. Every row must sum to 1
    /// within 1e-12 and all entries must lie in [0, 1].
    pub fn new(transition: Vec<Vec<f64>>) -> Result<Self> {
        let r = transition.len();
        if r == 0 {
            return Err(Error::InvalidParameter(
                "popularity chain needs at least one mode".into(),
            ));
        }
        let mat = Mat::from_rows(&transition)?;
        if mat.cols != r {
            return Err(Error::Dimension(format!(
                "transition matrix must be square, got {}x{}",
                r, mat.cols
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "transition[{i}] has entry {p} outside [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "transition[{i}] sums to {sum}, expected 1"
                )));
            }
        }
        Ok(PopularityChain { transition: mat })
    }

    pub fn num_modes(&self) -> usize {
        self.transition.rows
    }

    /// Probability of moving from mode `from` to mode `to` in one slot.
    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition.at(from, to)
    }

    pub fn row(&self, from: usize) -> &[f64] {
        self.transition.row(from)
    }

    pub fn matrix(&self) -> &Mat {
        &self.transition
    }
}

/// Symmetric two-mode chain that stays in its current mode with probability
/// `q` and flips otherwise.
pub fn two_mode_chain(q: f64) -> Result<PopularityChain> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "persistence probability q must lie strictly in (0,1), got {q}"
        )));
    }
    PopularityChain::new(vec![vec![q, 1.0 - q], vec![1.0 - q, q]])
}

/// Stationary distribution by power iteration from the uniform vector.
///
/// Chains for which the iteration does not settle within the cap (reducible
/// or strongly periodic cases) are rejected.
pub fn stationary_distribution(chain: &PopularityChain) -> Result<Vec<f64>> {
    let r = chain.num_modes();
    let mut p = vec![1.0 / r as f64; r];
    let mut next = vec![0.0; r];
    for _ in 0..100_000 {
        chain.matrix().transpose_apply(&p, &mut next);
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        std::mem::swap(&mut p, &mut next);
        if delta <= 1e-12 {
            return Ok(p);
        }
    }
    Err(Error::Model(
        "stationary distribution power iteration did not converge \
         (chain reducible or periodic?)"
            .into(),
    ))
}

/// One file: a popularity chain plus the expected request count per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FileModel {
    pub chain: PopularityChain,
    pub mode_weight: Vec<f64>,
}

impl FileModel {
    pub fn new(chain: PopularityChain, mode_weight: Vec<f64>) -> Result<Self> {
        if mode_weight.len() != chain.num_modes() {
            return Err(Error::Dimension(format!(
                "mode_weight has length {}, chain has {} modes",
                mode_weight.len(),
                chain.num_modes()
            )));
        }
        if mode_weight.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "mode weights must be strictly positive".into(),
            ));
        }
        Ok(FileModel { chain, mode_weight })
    }

    pub fn num_modes(&self) -> usize {
        self.chain.num_modes()
    }

    pub fn min_weight(&self) -> f64 {
        self.mode_weight.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Request rate averaged over the chain's stationary distribution.
    pub fn average_weight(&self) -> Result<f64> {
        let p = stationary_distribution(&self.chain)?;
        Ok(p.iter()
            .zip(&self.mode_weight)
            .map(|(pr, w)| pr * w)
            .sum())
    }
}

/// A set of files behind one bandwidth-limited link: at most `bandwidth`
/// downloads per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub files: Vec<FileModel>,
    pub bandwidth: usize,
}

impl Ensemble {
    pub fn new(files: Vec<FileModel>, bandwidth: usize) -> Result<Self> {
        if files.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one file".into()));
        }
        if bandwidth < 1 || bandwidth > files.len() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth M={} must satisfy 1 <= M <= N={}",
                bandwidth,
                files.len()
            )));
        }
        Ok(Ensemble { files, bandwidth })
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }
}

/// Zipf base weights scaled so the mean base weight is 1 (the sum equals N).
/// Only relative request magnitudes matter to the optimal policy, and this
/// keeps per-file solver magnitudes stable as N grows.
pub fn zipf_base_weights(n: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-alpha)).collect();
    let sum: f64 = raw.iter().sum();
    let scale = n as f64 / sum;
    raw.into_iter().map(|w| w * scale).collect()
}

/// Ensemble of N files with Zipf(alpha) base popularity, each modulated by a
/// shared symmetric two-mode chain: mode 1 carries `low_factor` times the base
/// weight, mode 2 carries `high_factor` times.
pub fn zipf_ensemble(
    n: usize,
    alpha: f64,
    q: f64,
    low_factor: f64,
    high_factor: f64,
    m: usize,
) -> Result<Ensemble> {
    if n < 1 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if alpha < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "zipf exponent must be nonnegative, got {alpha}"
        )));
    }
    if !(low_factor > 0.0 && high_factor > 0.0) {
        return Err(Error::InvalidParameter(
            "mode factors must be strictly positive".into(),
        ));
    }
    let chain = two_mode_chain(q)?;
    let base = zipf_base_weights(n, alpha);
    let files = base
        .iter()
        .map(|&w| FileModel::new(chain.clone(), vec![low_factor * w, high_factor * w]))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(files, m)
}

/// N identical copies of one file behind a budget of M downloads per slot.
pub fn homogeneous_ensemble(n: usize, m: usize, file: FileModel) -> Result<Ensemble> {
    Ensemble::new(vec![file; n], m)
}
