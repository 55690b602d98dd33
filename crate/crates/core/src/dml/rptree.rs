use rand::Rng;
use rand_distr::StandardNormal;

use super::Grouping;
use crate::error::{Error, Result};
use crate::seeding::{rng_from_seed, Rng as StreamRng};

const SPLIT_REDRAWS: usize = 8;

fn random_direction(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Partitions points into the leaves of a random projection tree.
///
/// Nodes with fewer than `n_t` points become leaves. Larger nodes are
/// projected on a random unit direction and cut at a uniform point of the
/// projected range. Nodes whose projections all coincide are kept as
/// oversized leaves and reported in [`Grouping::oversized`].
pub fn rptree_partition(points: &[Vec<f64>], n_t: usize, seed: u64) -> Result<Grouping> {
    if n_t < 2 {
        return Err(Error::InvalidConfig(format!("n_t must be >= 2, got {n_t}")));
    }
    if points.is_empty() {
        return Err(Error::TooFewPoints {
            required: 1,
            actual: 0,
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
    let mut working: Vec<Vec<usize>> = vec![(0..points.len()).collect()];
    let mut leaves: Vec<Vec<usize>> = Vec::new();
    let mut oversized = Vec::new();

    while !working.is_empty() {
        let pick = rng.random_range(0..working.len());
        let node = working.swap_remove(pick);
        if node.len() < n_t {
            leaves.push(node);
            continue;
        }
        let direction = random_direction(&mut rng, dim);
        let proj: Vec<f64> = node
            .iter()
            .map(|&i| points[i].iter().zip(&direction).map(|(x, r)| x * r).sum())
            .collect();
        let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut split = None;
        if hi > lo {
            for _ in 0..=SPLIT_REDRAWS {
                let c = rng.random_range(lo..=hi);
                let left = proj.iter().filter(|&&p| p < c).count();
                if left > 0 && left < node.len() {
                    split = Some(c);
                    break;
                }
            }
        }
        match split {
            Some(c) => {
                let (left, right): (Vec<usize>, Vec<usize>) =
                    node.iter().zip(&proj).map(|(&i, &p)| (i, p)).fold(
                        (Vec::new(), Vec::new()),
                        |(mut l, mut r), (i, p)| {
                            if p < c {
                                l.push(i);
                            } else {
                                r.push(i);
                            }
                            (l, r)
                        },
                    );
                working.push(left);
                working.push(right);
            }
            None => {
                log::warn!(
                    "rpTree node of {} points cannot be split (zero-width projection); kept as an oversized leaf",
                    node.len()
                );
                oversized.push(leaves.len());
                leaves.push(node);
            }
        }
    }

    let mut assignment = vec![0; points.len()];
    for (g, leaf) in leaves.iter().enumerate() {
        for &i in leaf {
            assignment[i] = g;
        }
    }
    let mut grouping = Grouping::from_assignment(points, assignment, leaves.len())?;
    grouping.oversized = oversized;
    Ok(grouping)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_input_is_one_leaf() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]];
        let g = rptree_partition(&pts, 5, 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.sizes, vec![4]);
    }

    #[test]
    fn duplicates_form_an_oversized_leaf() {
        let pts = vec![vec![2.0, -1.0]; 100];
        let g = rptree_partition(&pts, 10, 0).unwrap();
        assert_eq!(g.sizes, vec![100]);
        assert_eq!(g.oversized, vec![0]);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(rptree_partition(&[vec![0.0]], 1, 0).is_err());
        assert!(rptree_partition(&[], 4, 0).is_err());
    }

    #[test]
    fn leaves_respect_bound() {
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![(i as f64 * 0.37).sin() * 10.0, (i as f64 * 0.11).cos() * 4.0])
            .collect();
        let g = rptree_partition(&pts, 20, 5).unwrap();
        assert!(g.sizes.iter().all(|&s| s < 20));
        assert_eq!(g.sizes.iter().sum::<usize>(), 500);
        assert_eq!(g, rptree_partition(&pts, 20, 5).unwrap());
    }
}
