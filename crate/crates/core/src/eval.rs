//! Accuracy, quantization distortion, and empirical checks of the
//! perturbation and distortion-rate bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{gaussian_affinity, laplacian};
use crate::coordinator::RunReport;
use crate::datagen::{standard_gaussian, two_blobs};
use crate::dml::{kmeans, Grouping};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from_seed};
use crate::spectral::{bipartition, second_eigenvector};

/// Largest K for which accuracy enumerates all K! label permutations.
pub const MAX_EXACT_CLASSES: usize = 8;
const MAX_ASSIGNMENT_CLASSES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AccuracyMode {
    /// Maximum over all K! permutations.
    #[default]
    Exact,
    /// Optimal one-to-one matching by dynamic programming over subsets;
    /// same value, usable up to K = 20.
    Assignment,
}

/// Maps arbitrary label values to dense ranks 0..m.
fn dense_ranks(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let ranks = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect();
    (ranks, distinct.len())
}

fn confusion(true_labels: &[usize], pred_labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::LengthMismatch {
            left: true_labels.len(),
            right: pred_labels.len(),
        });
    }
    if true_labels.is_empty() {
        return Err(Error::TooFewPoints {
            required: 1,
            actual: 0,
        });
    }
    let (t, kt) = dense_ranks(true_labels);
    let (p, kp) = dense_ranks(pred_labels);
    if kt > k {
        return Err(Error::LabelOutOfRange { label: kt - 1, k });
    }
    if kp > k {
        return Err(Error::LabelOutOfRange { label: kp - 1, k });
    }
    let mut c = vec![vec![0usize; k]; k];
    for (a, b) in t.into_iter().zip(p) {
        c[a][b] += 1;
    }
    Ok(c)
}

/// Fraction of points whose predicted label equals the true label under the
/// best relabeling of classes. Label values are ranked internally, so
/// {1..K} and {0..K-1} conventions both work.
pub fn clustering_accuracy(true_labels: &[usize], pred_labels: &[usize], k: usize) -> Result<f64> {
    clustering_accuracy_with(true_labels, pred_labels, k, AccuracyMode::Exact)
}

pub fn clustering_accuracy_with(
    true_labels: &[usize],
    pred_labels: &[usize],
    k: usize,
    mode: AccuracyMode,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroClusters);
    }
    let limit = match mode {
        AccuracyMode::Exact => MAX_EXACT_CLASSES,
        AccuracyMode::Assignment => MAX_ASSIGNMENT_CLASSES,
    };
    if k > limit {
        return Err(Error::TooManyClasses { k, max: limit });
    }
    let c = confusion(true_labels, pred_labels, k)?;
    let matched = match mode {
        AccuracyMode::Exact => best_permutation(&c),
        AccuracyMode::Assignment => best_assignment(&c),
    };
    Ok(matched as f64 / true_labels.len() as f64)
}

/// Heap's algorithm over all permutations of 0..k.
fn best_permutation(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |perm: &[usize]| (0..k).map(|t| c[t][perm[t]]).sum::<usize>();
    let mut best = score(&perm);
    let mut counters = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.max(score(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

fn best_assignment(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    let mut dp = vec![0usize; 1 << k];
    for mask in 0usize..(1 << k) {
        let t = mask.count_ones() as usize;
        if t >= k {
            continue;
        }
        for p in 0..k {
            if mask & (1 << p) == 0 {
                let next = mask | (1 << p);
                dp[next] = dp[next].max(dp[mask] + c[t][p]);
            }
        }
    }
    dp[(1 << k) - 1]
}

/// Mean squared quantization error at a given codebook size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub k: usize,
    /// log2(k) bits per point.
    pub rate: f64,
    pub mse: f64,
}

pub fn distortion(points: &[Vec<f64>], grouping: &Grouping) -> Result<DistortionReport> {
    if points.len() != grouping.assignment.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: grouping.assignment.len(),
        });
    }
    if points.is_empty() {
        return Err(Error::TooFewPoints {
            required: 1,
            actual: 0,
        });
    }
    let total = crate::dml::within_cluster_ss(points, grouping);
    let k = grouping.len();
    Ok(DistortionReport {
        k,
        rate: (k as f64).log2(),
        mse: total / points.len() as f64,
    })
}

/// Least-squares slope of log2(y) against log2(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: xs.len(),
        });
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.log2()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("all x values coincide".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeReport {
    pub dim: usize,
    pub slope: f64,
    /// (codeword count, mean distortion over seeds)
    pub curve: Vec<(usize, f64)>,
}

/// Fits the distortion-rate slope of k-means on standard Gaussian data.
/// Each seed draws a fresh sample; the slope is fitted on every
/// (k, mse) pair pooled across seeds.
pub fn distortion_slope(
    dim: usize,
    n: usize,
    ks: &[usize],
    seeds: usize,
    max_iter: usize,
    seed: u64,
) -> Result<SlopeReport> {
    if seeds == 0 {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sums = vec![0.0; ks.len()];
    for s in 0..seeds as u64 {
        let trial = derive_seed(seed, s);
        let points = standard_gaussian(n, dim, trial);
        for (slot, &k) in ks.iter().enumerate() {
            let fit = kmeans(&points, k, max_iter, derive_seed(trial, k as u64))?;
            let report = distortion(&points, &fit.grouping)?;
            xs.push(k as f64);
            ys.push(report.mse);
            sums[slot] += report.mse;
        }
    }
    Ok(SlopeReport {
        dim,
        slope: loglog_slope(&xs, &ys)?,
        curve: ks
            .iter()
            .zip(sums)
            .map(|(&k, s)| (k, s / seeds as f64))
            .collect(),
    })
}

/// Additive noise, uniform on [-half_width, half_width] per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub half_width: f64,
}

impl PerturbationSpec {
    pub fn from_sigma(sigma_eps: f64) -> Self {
        Self {
            half_width: sigma_eps * 3f64.sqrt(),
        }
    }

    pub fn sigma_eps(&self) -> f64 {
        self.half_width / 3f64.sqrt()
    }

    pub fn apply(&self, points: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
        if self.half_width == 0.0 {
            return points.to_vec();
        }
        let mut rng = rng_from_seed(seed);
        let b = self.half_width;
        points
            .iter()
            .map(|p| p.iter().map(|x| x + rng.random_range(-b..=b)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    /// Fraction of points whose side flips under the perturbation.
    pub rho: f64,
    /// Squared Frobenius norm of the Laplacian perturbation.
    pub frob_sq: f64,
    /// Squared distance between Fiedler vectors, sign-aligned.
    pub eig_dist_sq: f64,
    pub middle_holds: bool,
    pub outer_holds: bool,
    pub bound_holds: bool,
}

pub const LEMMA_SLACK: f64 = 1e-9;
pub const MAX_HARNESS_POINTS: usize = 500;

/// Compares the spectral bipartition of `points` with that of a perturbed
/// copy. The unperturbed split is the reference; sides are matched by the
/// better of the two label swaps.
pub fn lemma1_check(
    points: &[Vec<f64>],
    bandwidth: f64,
    pert: &PerturbationSpec,
    seed: u64,
) -> Result<HarnessReport> {
    if points.len() > MAX_HARNESS_POINTS {
        return Err(Error::InvalidConfig(format!(
            "perturbation harness is dense; at most {MAX_HARNESS_POINTS} points"
        )));
    }
    if !(pert.half_width >= 0.0) || !pert.half_width.is_finite() {
        return Err(Error::InvalidConfig("perturbation must be bounded".into()));
    }
    let noisy = pert.apply(points, seed);
    let a = gaussian_affinity(points, bandwidth)?;
    let a_tilde = gaussian_affinity(&noisy, bandwidth)?;
    let lap = laplacian(&a)?;
    let lap_tilde = laplacian(&a_tilde)?;

    let frob_sq = (&lap_tilde.matrix - &lap.matrix).norm_squared();
    let v = second_eigenvector(&lap)?;
    let v_tilde = second_eigenvector(&lap_tilde)?;
    let eig_dist_sq = (&v_tilde - &v)
        .norm_squared()
        .min((&v_tilde + &v).norm_squared());

    let split = bipartition(&a)?;
    let split_tilde = bipartition(&a_tilde)?;
    let n = points.len();
    let flips = split
        .labels
        .iter()
        .zip(&split_tilde.labels)
        .filter(|(x, y)| x != y)
        .count();
    let rho = flips.min(n - flips) as f64 / n as f64;

    let middle_holds = eig_dist_sq <= frob_sq + LEMMA_SLACK;
    let outer_holds = rho <= frob_sq;
    Ok(HarnessReport {
        rho,
        frob_sq,
        eig_dist_sq,
        middle_holds,
        outer_holds,
        bound_holds: middle_holds && outer_holds,
    })
}

/// Settings for a battery of perturbation trials on two Gaussian blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Battery {
    pub trials: usize,
    pub n: usize,
    /// Noise standard deviation as a fraction of the data scale.
    pub sigma_eps_fraction: f64,
    /// Distance between the blob centres (unit-variance blobs in 2-D).
    pub separation: f64,
    pub bandwidth: f64,
    pub seed: u64,
}

impl Default for Lemma1Battery {
    fn default() -> Self {
        Self {
            trials: 100,
            n: 200,
            sigma_eps_fraction: 0.01,
            separation: 6.0,
            bandwidth: 1.0,
            seed: 0,
        }
    }
}

/// Root mean per-coordinate variance, i.e. sqrt(trace(cov) / d).
pub fn data_scale(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let d = points.first().map_or(0, |p| p.len());
    if d == 0 || points.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        total += points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
    }
    (total / d as f64).sqrt()
}

/// Runs the trials across worker threads; reports come back in trial order.
pub fn run_lemma1_battery(cfg: &Lemma1Battery) -> Result<Vec<HarnessReport>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    let trial = |t: u64| {
        let trial = derive_seed(cfg.seed, t);
        let (points, _) = two_blobs(cfg.n, cfg.separation, trial);
        let sigma = cfg.sigma_eps_fraction * data_scale(&points);
        lemma1_check(
            &points,
            cfg.bandwidth,
            &PerturbationSpec::from_sigma(sigma),
            derive_seed(trial, 1),
        )
    };
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.trials);
    let ids: Vec<u64> = (0..cfg.trials as u64).collect();
    let chunk = cfg.trials.div_ceil(workers);
    let parts: Vec<Result<Vec<HarnessReport>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|ids| scope.spawn(move || ids.iter().map(|&t| trial(t)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("battery worker panicked"))
            .collect()
    });
    let mut reports = Vec::with_capacity(cfg.trials);
    for part in parts {
        reports.extend(part?);
    }
    Ok(reports)
}

/// Accuracy and timing deltas between a distributed and a baseline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub accuracy_distributed: Option<f64>,
    pub accuracy_nondistributed: Option<f64>,
    /// distributed minus non-distributed
    pub accuracy_delta: Option<f64>,
    /// non-distributed wall time over distributed effective wall time
    pub speedup: f64,
}

pub fn compare_runs(distributed: &RunReport, nondistributed: &RunReport) -> Result<Comparison> {
    if distributed.config_id != nondistributed.config_id {
        return Err(Error::ConfigMismatch(
            distributed.config_id.clone(),
            nondistributed.config_id.clone(),
        ));
    }
    let delta = match (distributed.accuracy, nondistributed.accuracy) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(Comparison {
        accuracy_distributed: distributed.accuracy,
        accuracy_nondistributed: nondistributed.accuracy,
        accuracy_delta: delta,
        speedup: nondistributed.effective_wall_time / distributed.effective_wall_time,
    })
}
