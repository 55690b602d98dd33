//! Gaussian affinity graphs, normalized Laplacians and cut quantities.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense symmetric similarity matrix over `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    entries: DMatrix<f64>,
    bandwidth: f64,
}

impl AffinityMatrix {
    /// Wraps an explicit matrix. It must be square, symmetric, non-negative
    /// and have a zero diagonal.
    pub fn from_entries(entries: DMatrix<f64>, bandwidth: f64) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::InvalidMatrix(format!(
                "affinity must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let a = entries[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {a}")));
                }
                if a != entries[(j, i)] {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { entries, bandwidth })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Row sums d_i.
    pub fn degrees(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_iterator(n, (0..n).map(|i| self.entries.row(i).sum()))
    }

    /// Induced sub-affinity over `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let entries = DMatrix::from_fn(m, m, |r, c| self.entries[(indices[r], indices[c])]);
        Self {
            entries,
            bandwidth: self.bandwidth,
        }
    }

    /// Point-mass weighting: a'_ij = w_i w_j a_ij / max(w)^2, so a codeword
    /// standing for w_i points contributes as if those points coincided.
    pub fn weighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: self.n(),
            });
        }
        let wmax = weights.iter().cloned().fold(0.0_f64, f64::max);
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("codeword weights must be positive".into()));
        }
        let n = self.n();
        let entries = DMatrix::from_fn(n, n, |i, j| {
            self.entries[(i, j)] * (weights[i] / wmax) * (weights[j] / wmax)
        });
        Ok(Self {
            entries,
            bandwidth: self.bandwidth,
        })
    }
}

/// Normalized Laplacian D^(-1/2) (D - A) D^(-1/2) together with the degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
    pub degrees: DVector<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map(|p| p.len()).unwrap_or(0);
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
    }
    Ok(dim)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// a_ij = exp(-|x_i - x_j|^2 / (2 bandwidth^2)) off the diagonal, zero on it.
pub fn gaussian_affinity(points: &[Vec<f64>], bandwidth: f64) -> Result<AffinityMatrix> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: points.len(),
        });
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    check_points(points)?;
    let n = points.len();
    let denom = 2.0 * bandwidth * bandwidth;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (-squared_distance(&points[i], &points[j]) / denom).exp();
            entries[(i, j)] = a;
            entries[(j, i)] = a;
        }
    }
    Ok(AffinityMatrix { entries, bandwidth })
}

pub fn laplacian(affinity: &AffinityMatrix) -> Result<Laplacian> {
    let degrees = affinity.degrees();
    if let Some(i) = degrees.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let n = affinity.n();
    let a = affinity.entries();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let off = -a[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    });
    Ok(Laplacian { matrix, degrees })
}

fn check_indices(set: &[usize], n: usize) -> Result<()> {
    match set.iter().find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, n }),
        None => Ok(()),
    }
}

/// W(V1, V2) = sum of a_ij over i in V1, j in V2.
pub fn cut_weight(v1: &[usize], v2: &[usize], affinity: &AffinityMatrix) -> Result<f64> {
    let n = affinity.n();
    check_indices(v1, n)?;
    check_indices(v2, n)?;
    let a = affinity.entries();
    Ok(v1
        .iter()
        .map(|&i| v2.iter().map(|&j| a[(i, j)]).sum::<f64>())
        .sum())
}

/// Normalized cut of a K-way partition: sum_j (W(V_j,V) - W(V_j,V_j)) / W(V_j,V).
pub fn ncut_value(partition: &[Vec<usize>], affinity: &AffinityMatrix) -> Result<f64> {
    let n = affinity.n();
    let mut seen = vec![false; n];
    for part in partition {
        check_indices(part, n)?;
        for &i in part {
            if seen[i] {
                return Err(Error::InvalidPartition(format!("vertex {i} appears twice")));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition(format!("vertex {i} is not covered")));
    }
    let degrees = affinity.degrees();
    let mut total = 0.0;
    for (j, part) in partition.iter().enumerate() {
        let volume: f64 = part.iter().map(|&i| degrees[i]).sum();
        if !(volume > 0.0) {
            return Err(Error::ZeroVolume(j));
        }
        let inner = cut_weight(part, part, affinity)?;
        total += (volume - inner) / volume;
    }
    Ok(total)
}
