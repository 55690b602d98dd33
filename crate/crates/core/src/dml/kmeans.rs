use std::collections::HashSet;

use rand::seq::index::sample;

use super::Grouping;
use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;

/// A finished Lloyd run.
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub grouping: Grouping,
    /// Within-cluster sum of squares after each update step.
    pub ssw_trace: Vec<f64>,
    pub iterations: usize,
    /// True when the last assignment step changed nothing.
    pub converged: bool,
}

impl KmeansFit {
    pub fn ssw(&self) -> f64 {
        self.ssw_trace.last().copied().unwrap_or(0.0)
    }
}

/// Indices of the first occurrence of each distinct point.
pub(crate) fn distinct_indices(points: &[Vec<f64>]) -> Vec<usize> {
    let mut seen = HashSet::new();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            // +0.0 and -0.0 are the same location
            let key: Vec<u64> = p.iter().map(|x| (x + 0.0).to_bits()).collect();
            seen.insert(key)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Sum over points of the squared distance to their group centroid.
pub fn within_cluster_ss(points: &[Vec<f64>], grouping: &Grouping) -> f64 {
    points
        .iter()
        .zip(&grouping.assignment)
        .map(|(p, &g)| crate::affinity::squared_distance(p, &grouping.centroids[g]))
        .sum()
}

struct Centroids {
    dim: usize,
    flat: Vec<f64>,
}

impl Centroids {
    fn get(&self, j: usize) -> &[f64] {
        &self.flat[j * self.dim..(j + 1) * self.dim]
    }

    fn count(&self) -> usize {
        self.flat.len() / self.dim.max(1)
    }

    /// Index of the nearest centroid; the lowest index wins ties.
    fn nearest(&self, p: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..self.count() {
            let d: f64 = self
                .get(j)
                .iter()
                .zip(p)
                .map(|(c, x)| (c - x) * (c - x))
                .sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }

    fn recompute(&mut self, points: &[Vec<f64>], assignment: &[usize], sizes: &mut [usize]) {
        let dim = self.dim;
        let k = sizes.len();
        let mut sums = vec![0.0; k * dim];
        sizes.iter_mut().for_each(|s| *s = 0);
        for (p, &g) in points.iter().zip(assignment) {
            sizes[g] += 1;
            for (s, x) in sums[g * dim..(g + 1) * dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        for g in 0..k {
            if sizes[g] > 0 {
                let n = sizes[g] as f64;
                for (c, s) in self.flat[g * dim..(g + 1) * dim]
                    .iter_mut()
                    .zip(&sums[g * dim..(g + 1) * dim])
                {
                    *c = s / n;
                }
            }
        }
    }

    fn ssw(&self, points: &[Vec<f64>], assignment: &[usize]) -> f64 {
        points
            .iter()
            .zip(assignment)
            .map(|(p, &g)| {
                self.get(g)
                    .iter()
                    .zip(p)
                    .map(|(c, x)| (c - x) * (c - x))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Lloyd's k-means from `k` distinct seeded starting points.
///
/// Runs until an assignment step changes nothing or `max_iter` update steps
/// have been made. A cluster left empty by an update is re-seeded at the
/// point farthest from its own centroid, which then moves into it.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::ZeroClusters);
    }
    let distinct = distinct_indices(points);
    if k > distinct.len() {
        return Err(Error::TooManyClusters {
            requested: k,
            available: distinct.len(),
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut flat = Vec::with_capacity(k * dim);
    for i in sample(&mut rng, distinct.len(), k) {
        flat.extend_from_slice(&points[distinct[i]]);
    }
    let mut centroids = Centroids { dim, flat };
    let mut assignment = vec![usize::MAX; points.len()];
    let mut sizes = vec![0usize; k];
    let mut ssw_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        let mut changed = false;
        for (slot, p) in assignment.iter_mut().zip(points) {
            let g = centroids.nearest(p);
            if *slot != g {
                *slot = g;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
        iterations += 1;
        centroids.recompute(points, &assignment, &mut sizes);
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let (far, _) = points
                .iter()
                .zip(&assignment)
                .enumerate()
                .map(|(i, (p, &g))| {
                    let d: f64 = centroids
                        .get(g)
                        .iter()
                        .zip(p)
                        .map(|(c, x)| (c - x) * (c - x))
                        .sum();
                    (i, d)
                })
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            log::debug!("k-means cluster {empty} emptied; re-seeding at point {far}");
            assignment[far] = empty;
            centroids.recompute(points, &assignment, &mut sizes);
        }
        ssw_trace.push(centroids.ssw(points, &assignment));
    }

    let grouping = Grouping {
        assignment,
        centroids: (0..k).map(|g| centroids.get(g).to_vec()).collect(),
        sizes,
        oversized: Vec::new(),
    };
    Ok(KmeansFit {
        grouping,
        ssw_trace,
        iterations,
        converged,
    })
}
