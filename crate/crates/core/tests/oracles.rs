//! Library results checked against brute-force references from `common`.

mod common;

use std::collections::BTreeMap;

use distspectral::datagen::{sample_mixture, MixtureSpec};
use distspectral::eval::{distortion, lemma1_check, PerturbationSpec};
use distspectral::seeding::{derive_seed, rng_from_seed};
use distspectral::spectral::BandwidthGrid;
use distspectral::wire::{check_labels_cover, read_labels, write_labels};
use distspectral::{
    bipartition, clustering_accuracy, compress, cut_weight, gaussian_affinity, kmeans, laplacian,
    local_compress, ncut_value, normalized_cuts, populate_labels, rptree_partition,
    second_eigenvector, select_bandwidth, DmlConfig, DmlMethod, LabelMessage, SiteShard,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn random_points(seed: u64, n: usize, spread: f64) -> Vec<Vec<f64>> {
    let mut r = rng_from_seed(seed);
    (0..n)
        .map(|_| vec![r.random_range(0.0..spread), r.random_range(0.0..spread)])
        .collect()
}

#[test]
fn laplacian_spectrum_matches_jacobi() {
    let mut r = rng_from_seed(1);
    let mut m = DMatrix::zeros(5, 5);
    for i in 0..5 {
        for j in i + 1..5 {
            let w = r.random_range(0.05..1.0);
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }
    let a = distspectral::AffinityMatrix::from_entries(m.clone(), 1.0).unwrap();
    let lap = laplacian(&a).unwrap();
    let (values, _) = common::jacobi_eigen(&common::normalized_laplacian(&rows(&m)));
    assert!(values[0].abs() < 1e-12);
    assert!(values.iter().all(|&l| (-1e-12..=2.0).contains(&l)));
    let mine: Vec<Vec<f64>> = rows(&lap.matrix);
    let (again, _) = common::jacobi_eigen(&mine);
    for (x, y) in values.iter().zip(&again) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn cut_weight_of_full_graph_is_total_weight() {
    let points = random_points(2, 7, 3.0);
    let a = gaussian_affinity(&points, 1.0).unwrap();
    let all: Vec<usize> = (0..7).collect();
    let expected: f64 = common::gaussian(&points, 1.0).iter().flatten().sum();
    assert!((cut_weight(&all, &all, &a).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn ncut_value_matches_definition_on_every_bipartition() {
    let points = random_points(3, 6, 3.0);
    let a = gaussian_affinity(&points, 1.0).unwrap();
    let w = common::gaussian(&points, 1.0);
    for mask in 1u32..(1 << 5) {
        let side: Vec<bool> = (0..6).map(|i| mask >> i & 1 == 1).collect();
        let low: Vec<usize> = (0..6).filter(|&i| !side[i]).collect();
        let high: Vec<usize> = (0..6).filter(|&i| side[i]).collect();
        let got = ncut_value(&[low, high], &a).unwrap();
        assert!((got - common::ncut_two(&w, &side)).abs() < 1e-12, "mask {mask}");
    }
}

#[test]
fn fiedler_vector_of_two_blobs_matches_jacobi() {
    let points = vec![
        vec![0.0, 0.0],
        vec![0.1, 0.0],
        vec![0.0, 0.1],
        vec![3.0, 3.0],
        vec![3.1, 3.0],
        vec![3.0, 3.1],
    ];
    let a = gaussian_affinity(&points, 1.0).unwrap();
    let v = second_eigenvector(&laplacian(&a).unwrap()).unwrap();
    let (_, vecs) = common::jacobi_eigen(&common::normalized_laplacian(&common::gaussian(&points, 1.0)));
    let oracle = &vecs[1];
    let sign = if oracle[0] > 0.0 { 1.0 } else { -1.0 };
    for i in 0..6 {
        assert!((v[i] - sign * oracle[i]).abs() < 1e-8);
    }
    assert!(v[0] > 0.0);
    for i in 0..3 {
        assert!((v[i] - v[0]).abs() < 1e-3);
        assert!((v[i + 3] - v[3]).abs() < 1e-3);
    }
    assert!(v[3] < 0.0);
}

#[test]
fn bipartition_finds_best_threshold_split() {
    for seed in 0..30 {
        let points = random_points(derive_seed(4, seed), 6, 3.0);
        let a = gaussian_affinity(&points, 1.0).unwrap();
        let w = common::gaussian(&points, 1.0);
        let split = bipartition(&a).unwrap();
        let oracle = common::sweep_ncut(&w);
        assert!((split.ncut - oracle).abs() <= 1e-12 * oracle.max(1.0), "seed {seed}");
        let sign_side: Vec<bool> = split.fiedler.iter().map(|&x| x >= 0.0).collect();
        if sign_side.iter().any(|&s| s) && sign_side.iter().any(|&s| !s) {
            assert!(split.ncut <= common::ncut_two(&w, &sign_side) + 1e-12);
        }
    }
}

#[test]
fn three_blobs_recovered_exactly() {
    let mut r = rng_from_seed(5);
    let centres = [[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]];
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..15 {
            let dx: f64 = r.sample(StandardNormal);
            let dy: f64 = r.sample(StandardNormal);
            points.push(vec![centre[0] + 0.3 * dx, centre[1] + 0.3 * dy]);
            truth.push(c);
        }
    }
    let labels = normalized_cuts(&points, 3, 3.0).unwrap();
    assert_eq!(common::brute_accuracy(&truth, &labels, 3), 1.0);
    assert_eq!(clustering_accuracy(&truth, &labels, 3).unwrap(), 1.0);
}

#[test]
fn bandwidth_search_returns_a_best_grid_value() {
    let (points, truth) = distspectral::datagen::two_blobs(40, 3.0, 8);
    let grid = [0.5, 1.0, 5.0];
    let scores: Vec<f64> = grid
        .iter()
        .map(|&s| match normalized_cuts(&points, 2, s) {
            Ok(labels) => common::brute_accuracy(&truth, &labels, 2),
            Err(_) => f64::NEG_INFINITY,
        })
        .collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chosen = select_bandwidth(&points, Some(&truth), 2, &BandwidthGrid::new(grid.to_vec()).unwrap()).unwrap();
    let slot = grid.iter().position(|&g| g == chosen).unwrap();
    assert_eq!(scores[slot], best);
    assert!(grid[..slot].iter().zip(&scores).all(|(_, &s)| s < best));
}

#[test]
fn kmeans_two_pairs_reaches_exhaustive_optimum() {
    let xs = [0.0, 1.0, 10.0, 11.0];
    let points: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let fit = kmeans(&points, 2, 100, 3).unwrap();
    let mut centroids: Vec<f64> = fit.grouping.centroids.iter().map(|c| c[0]).collect();
    centroids.sort_by(f64::total_cmp);
    assert_eq!(centroids, vec![0.5, 10.5]);
    assert!((fit.ssw() - common::exhaustive_ssw(&xs, 2)).abs() < 1e-12);
    assert!((fit.ssw() - 1.0).abs() < 1e-12);
}

#[test]
fn rptree_leaves_on_gaussian_cloud() {
    for seed in 0..20 {
        let mut r = rng_from_seed(derive_seed(9, seed));
        let points: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)])
            .collect();
        let g = rptree_partition(&points, 40, seed).unwrap();
        assert!(g.oversized.is_empty());
        let mut count = vec![0; 1000];
        for leaf in 0..g.len() {
            let members = g.members(leaf);
            assert!(members.len() < 40);
            for i in members {
                count[i] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }
}

#[test]
fn compress_distortion_falls_with_codeword_count() {
    for method in [DmlMethod::Kmeans, DmlMethod::Rptree] {
        let mut curve = Vec::new();
        for ratio in [100.0, 50.0, 20.0, 10.0, 5.0] {
            let mut total = 0.0;
            for seed in 0..5 {
                let points = distspectral::datagen::standard_gaussian(1000, 2, seed);
                let g = compress(&points, &DmlConfig::new(method, ratio, seed)).unwrap();
                total += distortion(&points, &g).unwrap().mse;
            }
            curve.push(total / 5.0);
        }
        assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{method}: {curve:?}");
    }
}

#[test]
fn site_round_trip_on_separated_blobs() {
    let (points, truth) = distspectral::datagen::two_blobs(400, 20.0, 10);
    let shard = SiteShard::new(3, points, Some(truth.clone())).unwrap();
    let (book, map) = local_compress(&shard, &DmlConfig::new(DmlMethod::Kmeans, 10.0, 4)).unwrap();
    let labels: BTreeMap<usize, usize> = book
        .entries
        .iter()
        .map(|e| (e.group_id, usize::from(e.centroid[0] > 0.0)))
        .collect();
    let msg = LabelMessage { site_id: 3, labels };
    check_labels_cover(&book, &msg).unwrap();
    let mut bytes = Vec::new();
    write_labels(&msg, &mut bytes).unwrap();
    let back = read_labels(bytes.as_slice()).unwrap();
    let pred = populate_labels(&map, &back.labels).unwrap();
    assert_eq!(common::brute_accuracy(&truth, &pred, 2), 1.0);
}

#[test]
fn accuracy_example_matches_enumeration() {
    let truth = [1, 1, 2, 2, 3, 3];
    let pred = [3, 3, 1, 1, 1, 2];
    let dense_t: Vec<usize> = truth.iter().map(|t| t - 1).collect();
    let dense_p: Vec<usize> = pred.iter().map(|p| p - 1).collect();
    let oracle = common::brute_accuracy(&dense_t, &dense_p, 3);
    assert!((oracle - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(clustering_accuracy(&truth, &pred, 3).unwrap(), oracle);
}

#[test]
fn single_component_sample_mean_within_clt_bound() {
    let spec = MixtureSpec::new(
        vec![vec![2.0, 2.0]],
        DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]),
        None,
    )
    .unwrap();
    let (points, _) = sample_mixture(&spec, 10_000, 11).unwrap();
    let bound = 4.0 * (3.0f64 / 10_000.0).sqrt();
    for d in 0..2 {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / 10_000.0;
        assert!((mean - 2.0).abs() <= bound, "coordinate {d}: {mean}");
    }
}

#[test]
fn toy_components_near_uniform() {
    let (_, labels) = sample_mixture(&MixtureSpec::toy2d(), 4000, 12).unwrap();
    for c in 0..4 {
        let share = labels.iter().filter(|&&l| l == c).count() as f64 / 4000.0;
        assert!((share - 0.25).abs() <= 0.03, "component {c}: {share}");
    }
}

#[test]
fn perturbation_bound_on_separated_blobs() {
    let (points, _) = distspectral::datagen::two_blobs(200, 6.0, 13);
    let scale = distspectral::eval::data_scale(&points);
    let report = lemma1_check(&points, 1.0, &PerturbationSpec::from_sigma(0.01 * scale), 14).unwrap();
    assert!(report.bound_holds, "{report:?}");
    let a = gaussian_affinity(&points, 1.0).unwrap();
    let l = rows(&laplacian(&a).unwrap().matrix);
    let (values, _) = common::jacobi_eigen(&l);
    assert!(values[1] < 0.05 && values[2] > 0.2, "expected a clear spectral gap: {:?}", &values[..3]);
}
