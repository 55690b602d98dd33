//! Reference implementations used only by tests. Everything here is written
//! from the definitions with no shared code paths into the library.

#![allow(dead_code)]

/// Cyclic Jacobi rotations on a dense symmetric matrix. Returns eigenvalues
/// ascending with matching unit eigenvectors (as columns in `vecs[i]`).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[x][x].total_cmp(&m[y][y]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

pub fn gaussian(points: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                w[i][j] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    w
}

pub fn normalized_laplacian(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = w.len();
    let d: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = if i == j { d[i] } else { 0.0 };
                    (id - w[i][j]) / (d[i] * d[j]).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Ncut of a two-way split straight from the definition.
pub fn ncut_two(w: &[Vec<f64>], side: &[bool]) -> f64 {
    let n = w.len();
    let mut cut = 0.0;
    let mut vol = [0.0, 0.0];
    for i in 0..n {
        for j in 0..n {
            vol[side[i] as usize] += w[i][j];
            if side[i] && !side[j] {
                cut += w[i][j];
            }
        }
    }
    cut / vol[0] + cut / vol[1]
}

/// Smallest ncut over every threshold between consecutive distinct values
/// of the Fiedler vector.
pub fn sweep_ncut(w: &[Vec<f64>]) -> f64 {
    let lap = normalized_laplacian(w);
    let (_, vecs) = jacobi_eigen(&lap);
    let f = &vecs[1];
    let mut values = f.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best = f64::INFINITY;
    for pair in values.windows(2) {
        let t = 0.5 * (pair[0] + pair[1]);
        let side: Vec<bool> = f.iter().map(|&x| x > t).collect();
        best = best.min(ncut_two(w, &side));
    }
    best
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Best agreement over all relabelings of `pred` into `0..k`.
pub fn brute_accuracy(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let best = permutations(k)
        .iter()
        .map(|perm| {
            truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| perm[**p] == **t)
                .count()
        })
        .max()
        .unwrap_or(0);
    best as f64 / truth.len() as f64
}

/// Minimum within-cluster sum of squares over every assignment of the
/// 1-D points into exactly `k` nonempty groups.
pub fn exhaustive_ssw(xs: &[f64], k: usize) -> f64 {
    let n = xs.len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut c = code;
        let mut sums = vec![0.0; k];
        let mut sq = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for &x in xs {
            let g = c % k;
            c /= k;
            sums[g] += x;
            sq[g] += x * x;
            counts[g] += 1;
        }
        if counts.iter().any(|&m| m == 0) {
            continue;
        }
        let ssw: f64 = (0..k)
            .map(|g| sq[g] - sums[g] * sums[g] / counts[g] as f64)
            .sum();
        best = best.min(ssw);
    }
    best
}

/// Least squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
