//! Distortion-minimizing local transformations: each site replaces its
//! points with group centroids produced by k-means or a random projection
//! tree.

mod kmeans;
mod rptree;

pub use kmeans::{kmeans, within_cluster_ss, KmeansFit};
pub use rptree::rptree_partition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;

/// Points grouped around centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Group id of every point.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    /// Groups that could not be split below the size bound (duplicated
    /// points). Always empty for k-means.
    pub oversized: Vec<usize>,
}

impl Grouping {
    /// Builds a grouping from an assignment, computing centroids as group
    /// means. Group ids must be `0..groups` and every group non-empty.
    pub fn from_assignment(points: &[Vec<f64>], assignment: Vec<usize>, groups: usize) -> Result<Self> {
        if points.len() != assignment.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: assignment.len(),
            });
        }
        let dim = points.first().map_or(0, |p| p.len());
        let mut sums = vec![vec![0.0; dim]; groups];
        let mut sizes = vec![0usize; groups];
        for (p, &g) in points.iter().zip(&assignment) {
            if g >= groups {
                return Err(Error::IndexOutOfRange { index: g, n: groups });
            }
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            sizes[g] += 1;
            for (s, x) in sums[g].iter_mut().zip(p) {
                *s += x;
            }
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!("group {empty} is empty")));
        }
        let centroids = sums
            .into_iter()
            .zip(&sizes)
            .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
            .collect();
        Ok(Self {
            assignment,
            centroids,
            sizes,
            oversized: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == group)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmlMethod {
    Kmeans,
    Rptree,
}

impl std::str::FromStr for DmlMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(DmlMethod::Kmeans),
            "rptree" | "rptrees" => Ok(DmlMethod::Rptree),
            other => Err(Error::InvalidConfig(format!("unknown DML method `{other}`"))),
        }
    }
}

impl std::fmt::Display for DmlMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DmlMethod::Kmeans => "kmeans",
            DmlMethod::Rptree => "rptree",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    pub method: DmlMethod,
    /// Points per codeword.
    pub compression_ratio: f64,
    pub max_iter: usize,
    /// rpTree nodes with at least this many points are split.
    pub n_t: usize,
    pub seed: u64,
}

impl DmlConfig {
    /// `n_t` follows the ratio (rounded, at least 2) so both methods yield
    /// roughly the same number of codewords.
    pub fn new(method: DmlMethod, compression_ratio: f64, seed: u64) -> Self {
        Self {
            method,
            compression_ratio,
            max_iter: DEFAULT_MAX_ITER,
            n_t: (compression_ratio.round().max(2.0)) as usize,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.compression_ratio >= 1.0) || !self.compression_ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "compression ratio must be >= 1, got {}",
                self.compression_ratio
            )));
        }
        if self.n_t < 2 {
            return Err(Error::InvalidConfig(format!("n_t must be >= 2, got {}", self.n_t)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Codeword count k-means targets for `n` points.
    pub fn kmeans_k(&self, n: usize) -> usize {
        ((n as f64 / self.compression_ratio).round() as usize).max(1)
    }
}

/// Compresses `points` into groups according to `cfg`.
pub fn compress(points: &[Vec<f64>], cfg: &DmlConfig) -> Result<Grouping> {
    cfg.validate()?;
    match cfg.method {
        DmlMethod::Kmeans => {
            let mut k = cfg.kmeans_k(points.len());
            let distinct = kmeans::distinct_indices(points).len();
            if k > distinct {
                log::info!("codeword count {k} clamped to {distinct} distinct points");
                k = distinct;
            }
            kmeans(points, k, cfg.max_iter, cfg.seed).map(|fit| fit.grouping)
        }
        DmlMethod::Rptree => rptree_partition(points, cfg.n_t, cfg.seed),
    }
}
