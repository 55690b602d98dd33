//! Normalized cuts by recursive spectral bipartitioning.

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::affinity::{gaussian_affinity, laplacian, ncut_value, AffinityMatrix, Laplacian};
use crate::error::{Error, Result};
use crate::eval::clustering_accuracy;

/// Residual bound on |Lv - lambda v| accepted from the eigensolver.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
const DEGENERATE_GAP: f64 = 1e-9;

/// Outcome of splitting a graph in two along its Fiedler vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartitionResult {
    /// 1 for vertices at or above the threshold, 0 below.
    pub labels: Vec<usize>,
    pub split_value: f64,
    pub ncut: f64,
    pub fiedler: DVector<f64>,
}

struct Spectrum {
    lambda2: f64,
    lambda_max: f64,
    vector: DVector<f64>,
}

fn fiedler(lap: &Laplacian) -> Result<Spectrum> {
    let n = lap.n();
    if n < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: n,
        });
    }
    let eig = SymmetricEigen::try_new(lap.matrix.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenSolver("symmetric QR iteration limit reached".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let second = order[1];
    let lambda2 = eig.eigenvalues[second];
    let lambda_max = eig.eigenvalues[order[n - 1]];
    let mut vector: DVector<f64> = eig.eigenvectors.column(second).into_owned();
    vector /= vector.norm();

    let residual = (&lap.matrix * &vector - &vector * lambda2).norm();
    if !(residual <= EIGEN_RESIDUAL_TOL) {
        return Err(Error::EigenSolver(format!("residual {residual:e} above tolerance")));
    }
    if let Some(first) = vector.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            vector.neg_mut();
        }
    }
    Ok(Spectrum {
        lambda2,
        lambda_max,
        vector,
    })
}

/// Unit eigenvector of the second-smallest eigenvalue, with its first
/// nonzero component made positive.
pub fn second_eigenvector(lap: &Laplacian) -> Result<DVector<f64>> {
    fiedler(lap).map(|s| s.vector)
}

/// Splits the graph at the threshold on the Fiedler vector that minimizes
/// the normalized cut. Ties go to the more balanced split, then to the
/// smaller threshold.
pub fn bipartition(affinity: &AffinityMatrix) -> Result<BipartitionResult> {
    let n = affinity.n();
    let lap = laplacian(affinity)?;
    let spectrum = fiedler(&lap)?;
    // Every non-null eigenvalue equal: the graph is fully symmetric and no
    // cut is preferred (e.g. all points identical).
    if n >= 3 && spectrum.lambda_max - spectrum.lambda2 <= DEGENERATE_GAP {
        return Err(Error::DegenerateSpectrum);
    }
    let v = &spectrum.vector;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));

    let a = affinity.entries();
    let degrees = &lap.degrees;
    let total: f64 = degrees.iter().sum();
    // inside[u] = sum of a_uj over j already in the low side
    let mut inside = vec![0.0; n];
    let mut cut = 0.0;
    let mut volume = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for k in 1..n {
        let u = order[k - 1];
        cut += degrees[u] - 2.0 * inside[u];
        volume += degrees[u];
        for j in 0..n {
            inside[j] += a[(j, u)];
        }
        if v[order[k - 1]] >= v[order[k]] {
            continue;
        }
        let ncut = cut / volume + cut / (total - volume);
        let better = match best {
            None => true,
            Some((value, size)) => {
                let tol = 1e-12 * value.abs().max(1.0);
                if ncut < value - tol {
                    true
                } else if ncut <= value + tol {
                    imbalance(k, n) < imbalance(size, n)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((ncut, k));
        }
    }
    let (_, k) = best.ok_or(Error::DegenerateSpectrum)?;
    let split_value = 0.5 * (v[order[k - 1]] + v[order[k]]);
    let mut labels = vec![1; n];
    for &i in &order[..k] {
        labels[i] = 0;
    }
    let low: Vec<usize> = order[..k].to_vec();
    let high: Vec<usize> = order[k..].to_vec();
    let ncut = ncut_value(&[low, high], affinity)?;
    Ok(BipartitionResult {
        labels,
        split_value,
        ncut,
        fiedler: spectrum.vector,
    })
}

fn imbalance(size: usize, n: usize) -> usize {
    (2 * size).abs_diff(n)
}

/// Recursive normalized cuts on a precomputed affinity.
///
/// Starts from a single cluster and keeps bipartitioning the largest
/// cluster (lowest index on ties) until `k` clusters exist. A cluster whose
/// sub-graph cannot be split is skipped in favour of the next largest.
pub fn normalized_cuts_affinity(affinity: &AffinityMatrix, k: usize) -> Result<Vec<usize>> {
    let n = affinity.n();
    if k == 0 {
        return Err(Error::ZeroClusters);
    }
    if k > n {
        return Err(Error::TooManyClusters {
            requested: k,
            available: n,
        });
    }
    let mut clusters: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut frozen = vec![false];
    let mut last_failure = None;
    while clusters.len() < k {
        let pick = (0..clusters.len())
            .filter(|&c| clusters[c].len() >= 2 && !frozen[c])
            .max_by(|&x, &y| clusters[x].len().cmp(&clusters[y].len()).then(y.cmp(&x)));
        let Some(c) = pick else {
            return Err(last_failure.unwrap_or(Error::DegenerateSpectrum));
        };
        let members = &clusters[c];
        match bipartition(&affinity.submatrix(members)) {
            Ok(split) => {
                let mut low = Vec::new();
                let mut high = Vec::new();
                for (&i, &side) in members.iter().zip(&split.labels) {
                    if side == 0 {
                        low.push(i);
                    } else {
                        high.push(i);
                    }
                }
                clusters[c] = low;
                clusters.push(high);
                frozen.push(false);
            }
            Err(err @ (Error::DegenerateSpectrum | Error::IsolatedVertex(_))) => {
                log::debug!("cluster of {} points cannot be split: {err}", members.len());
                frozen[c] = true;
                last_failure = Some(err);
            }
            Err(err) => return Err(err),
        }
    }
    let mut labels = vec![0; n];
    for (label, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = label;
        }
    }
    Ok(labels)
}

/// Normalized cuts on points under a Gaussian kernel of the given bandwidth.
pub fn normalized_cuts(points: &[Vec<f64>], k: usize, bandwidth: f64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::ZeroClusters);
    }
    if k > points.len() {
        return Err(Error::TooManyClusters {
            requested: k,
            available: points.len(),
        });
    }
    if points.len() == 1 {
        return Ok(vec![0]);
    }
    let affinity = gaussian_affinity(points, bandwidth)?;
    normalized_cuts_affinity(&affinity, k)
}

/// Candidate bandwidths for a labelled search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid(Vec<f64>);

impl BandwidthGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidBandwidth(*bad));
        }
        Ok(Self(values))
    }

    /// Step 0.01 on (0, 1] and 0.1 on (1, 200].
    pub fn paper() -> Self {
        let fine = (1..=100).map(|i| i as f64 / 100.0);
        let coarse = (11..=2000).map(|i| i as f64 / 10.0);
        Self(fine.chain(coarse).collect())
    }

    /// Nine half-octave steps from `scale / 16` up to `scale`; wider
    /// kernels make the codeword graph close to complete.
    pub fn desk(scale: f64) -> Result<Self> {
        Self::new((-8..=0).map(|e| scale * 2f64.powf(e as f64 / 2.0)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// How a grid is derived for a given point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    /// Nine log-spaced values around the median pairwise distance.
    Desk,
    /// The literal fine grid over (0, 200].
    Paper,
    Explicit(BandwidthGrid),
}

impl GridSpec {
    pub fn resolve(&self, points: &[Vec<f64>]) -> Result<BandwidthGrid> {
        match self {
            GridSpec::Desk => BandwidthGrid::desk(median_pairwise_distance(points)?),
            GridSpec::Paper => Ok(BandwidthGrid::paper()),
            GridSpec::Explicit(grid) => Ok(grid.clone()),
        }
    }
}

/// Bandwidth policy for the clustering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandwidthChoice {
    Fixed(f64),
    /// Median pairwise distance of the clustered set; needs no labels.
    Median,
    /// Accuracy-driven search; needs true labels.
    Search(GridSpec),
}

/// Median of all pairwise Euclidean distances.
pub fn median_pairwise_distance(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: points.len(),
        });
    }
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        if points[i].len() != points[0].len() {
            return Err(Error::DimensionMismatch {
                expected: points[0].len(),
                actual: points[i].len(),
            });
        }
        for j in (i + 1)..points.len() {
            dists.push(crate::affinity::squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::InvalidBandwidth(median))
    }
}

/// Evaluates `score` on every grid value and returns the best
/// `(bandwidth, score)`. The smallest bandwidth wins ties; grid values whose
/// clustering fails are skipped.
pub fn grid_argmax<F>(grid: &BandwidthGrid, mut score: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut best: Option<(f64, f64)> = None;
    let mut failure = None;
    for &bw in grid.values() {
        match score(bw) {
            Ok(s) => {
                let take = match best {
                    None => true,
                    Some((best_bw, best_s)) => s > best_s || (s == best_s && bw < best_bw),
                };
                if take {
                    best = Some((bw, s));
                }
            }
            Err(err) => {
                log::debug!("bandwidth {bw} skipped: {err}");
                failure = Some(err);
            }
        }
    }
    best.ok_or_else(|| failure.unwrap_or(Error::EmptyGrid))
}

/// Picks the grid bandwidth whose normalized-cuts labels best match the
/// true labels.
pub fn select_bandwidth(
    points: &[Vec<f64>],
    true_labels: Option<&[usize]>,
    k: usize,
    grid: &BandwidthGrid,
) -> Result<f64> {
    let labels = true_labels.ok_or(Error::LabelsRequired)?;
    if labels.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: points.len(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    grid_argmax(grid, |bw| {
        let pred = normalized_cuts(points, k, bw)?;
        clustering_accuracy(labels, &pred, k.max(classes))
    })
    .map(|(bw, _)| bw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn two_by_two_fiedler() {
        let lap = Laplacian {
            matrix: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
            degrees: DVector::from_vec(vec![1.0, 1.0]),
        };
        let v = second_eigenvector(&lap).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-12 && (v[1] + h).abs() < 1e-12);
    }

    #[test]
    fn single_vertex_has_no_second_eigenvector() {
        let lap = Laplacian {
            matrix: DMatrix::from_row_slice(1, 1, &[0.0]),
            degrees: DVector::from_vec(vec![1.0]),
        };
        assert!(matches!(
            second_eigenvector(&lap),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn separated_pairs_split() {
        let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 0.0], vec![10.1, 0.0]];
        let a = gaussian_affinity(&pts, 1.0).unwrap();
        let r = bipartition(&a).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
        let parts = [
            (0..4).filter(|&i| r.labels[i] == 0).collect::<Vec<_>>(),
            (0..4).filter(|&i| r.labels[i] == 1).collect::<Vec<_>>(),
        ];
        assert!((ncut_value(&parts, &a).unwrap() - r.ncut).abs() < 1e-9);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let a = gaussian_affinity(&pts, 1.0).unwrap();
        assert_eq!(bipartition(&a), Err(Error::DegenerateSpectrum));
        assert_eq!(normalized_cuts(&pts, 2, 1.0), Err(Error::DegenerateSpectrum));
    }

    #[test]
    fn k_bounds() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(normalized_cuts(&pts, 1, 1.0).unwrap(), vec![0, 0, 0]);
        assert!(matches!(
            normalized_cuts(&pts, 4, 1.0),
            Err(Error::TooManyClusters { .. })
        ));
        assert_eq!(normalized_cuts(&pts, 0, 1.0), Err(Error::ZeroClusters));
        let mut labels = normalized_cuts(&pts, 3, 1.0).unwrap();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn three_blobs() {
        let centers = [(0.0, 0.0), (20.0, 0.0), (0.0, 20.0)];
        let offsets = [(0.0, 0.0), (0.3, 0.1), (-0.2, 0.3), (0.1, -0.3)];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, (cx, cy)) in centers.iter().enumerate() {
            for (dx, dy) in offsets {
                pts.push(vec![cx + dx, cy + dy]);
                truth.push(c);
            }
        }
        let pred = normalized_cuts(&pts, 3, 3.0).unwrap();
        assert_eq!(clustering_accuracy(&truth, &pred, 3).unwrap(), 1.0);
    }

    #[test]
    fn grid_selection() {
        let pts = vec![vec![0.0], vec![0.2], vec![5.0], vec![5.3]];
        let truth = [0, 0, 1, 1];
        let single = BandwidthGrid::new(vec![0.7]).unwrap();
        assert_eq!(select_bandwidth(&pts, Some(&truth), 2, &single).unwrap(), 0.7);
        assert_eq!(
            select_bandwidth(&pts, None, 2, &single),
            Err(Error::LabelsRequired)
        );
        assert_eq!(BandwidthGrid::new(vec![]), Err(Error::EmptyGrid));
    }

    #[test]
    fn paper_grid_shape() {
        let g = BandwidthGrid::paper();
        assert_eq!(g.values().len(), 100 + 1990);
        assert_eq!(g.values()[0], 0.01);
        assert_eq!(g.values()[99], 1.0);
        assert_eq!(g.values()[100], 1.1);
        assert_eq!(*g.values().last().unwrap(), 200.0);
        assert_eq!(BandwidthGrid::desk(1.0).unwrap().values().len(), 9);
    }
}
