//! Synthetic Gaussian mixtures, multi-site scenario splits, and delimited
//! text ingestion.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;
use crate::site::SiteShard;

/// Mixture of Gaussians sharing one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
    pub weights: Vec<f64>,
}

/// Sigma_ij = rho^|i-j|.
pub fn ar_covariance(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
}

impl MixtureSpec {
    pub fn new(means: Vec<Vec<f64>>, covariance: DMatrix<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        let dim = covariance.nrows();
        if covariance.ncols() != dim {
            return Err(Error::InvalidMatrix("covariance must be square".into()));
        }
        if let Some(m) = means.iter().find(|m| m.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.len(),
            });
        }
        if (&covariance - covariance.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidMatrix("covariance must be symmetric".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / means.len() as f64; means.len()]);
        if weights.len() != means.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidConfig("one non-negative weight per component".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("mixture weights must sum to 1".into()));
        }
        Ok(Self {
            means,
            covariance,
            weights,
        })
    }

    /// Four components at (+-2, +-2) with covariance [[3,1],[1,3]].
    pub fn toy2d() -> Self {
        Self::new(
            vec![vec![2.0, 2.0], vec![-2.0, -2.0], vec![-2.0, 2.0], vec![2.0, -2.0]],
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]),
            None,
        )
        .expect("valid preset")
    }

    /// Four components at 2.5 e_1 .. 2.5 e_4 in `dim` dimensions with an
    /// AR(1) covariance profile.
    pub fn ar_mixture(dim: usize, rho: f64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::InvalidConfig("AR mixture needs at least 4 dimensions".into()));
        }
        let means = (0..4)
            .map(|c| (0..dim).map(|j| if j == c { 2.5 } else { 0.0 }).collect())
            .collect();
        Self::new(means, ar_covariance(dim, rho), None)
    }

    /// `toy2d`, or `mix10d` with the given correlation.
    pub fn preset(name: &str, rho: f64) -> Result<Self> {
        match name {
            "toy2d" => Ok(Self::toy2d()),
            "mix10d" => Self::ar_mixture(10, rho),
            other => Err(Error::InvalidConfig(format!("unknown mixture preset `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }
}

/// Draws `n` points; labels are component indices.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let chol = Cholesky::new(spec.covariance.clone()).ok_or(Error::NotPositiveDefinite)?;
    let factor = chol.l();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let picker = WeightedIndex::new(&spec.weights)
        .map_err(|e| Error::InvalidConfig(format!("mixture weights: {e}")))?;
    let dim = spec.dim();
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = picker.sample(&mut rng);
        let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &factor * z;
        points.push(spec.means[c].iter().zip(x.iter()).map(|(m, e)| m + e).collect());
        labels.push(c);
    }
    Ok((points, labels))
}

pub fn standard_gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Two unit-variance 2-D blobs centred at (-separation/2, 0) and
/// (separation/2, 0); the first n/2 points are blob 0.
pub fn two_blobs(n: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let half = n / 2;
    (0..n)
        .map(|i| {
            let label = usize::from(i >= half);
            let cx = if label == 0 { -separation / 2.0 } else { separation / 2.0 };
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            (vec![cx + x, y], label)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Sites hold (mostly) disjoint components.
    D1,
    /// Sites hold overlapping fractions of components.
    D2,
    /// Sites hold near-equal uniform random parts.
    D3,
}

/// How labelled data is spread across sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub sites: usize,
    /// Per site: component -> fraction of that component the site holds.
    /// Empty for D3.
    pub composition: Vec<BTreeMap<usize, f64>>,
}

fn comp(pairs: &[(usize, f64)]) -> BTreeMap<usize, f64> {
    pairs.iter().copied().collect()
}

/// Names accepted by [`ScenarioSpec::preset`].
pub const SCENARIO_PRESETS: &[&str] = &[
    "toy-d1", "toy-d2", "toy-d3", "d3", "uci-d1", "uci-d2", "uci-d3", "uci3-d1", "uci3-d2",
    "covtype-d1", "covtype-d2", "hepmass-2site-d1", "hepmass-2site-d2", "hepmass-2site-d3",
    "hepmass-3site-d1", "hepmass-3site-d2", "hepmass-3site-d3", "hepmass-4site-d1",
    "hepmass-4site-d2", "hepmass-4site-d3",
];

impl ScenarioSpec {
    pub fn d3(sites: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::Scenario("at least one site is required".into()));
        }
        Ok(Self {
            scenario: Scenario::D3,
            sites,
            composition: Vec::new(),
        })
    }

    pub fn fractional(scenario: Scenario, composition: Vec<BTreeMap<usize, f64>>) -> Result<Self> {
        let spec = Self {
            scenario,
            sites: composition.len(),
            composition,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario == Scenario::D3 {
            return if self.sites >= 1 {
                Ok(())
            } else {
                Err(Error::Scenario("at least one site is required".into()))
            };
        }
        if self.sites < 2 || self.composition.len() != self.sites {
            return Err(Error::Scenario(
                "D1/D2 need at least two sites and one composition per site".into(),
            ));
        }
        let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
        for site in &self.composition {
            for (&c, &f) in site {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Scenario(format!("fraction {f} of component {c} is not in (0, 1]")));
                }
                *totals.entry(c).or_default() += f;
            }
        }
        for (c, total) in totals {
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Scenario(format!(
                    "fractions of component {c} sum to {total}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Named configurations. Component indices are 0-based class ranks.
    /// `sites` only applies to the random (`*-d3`/`d3`) presets without a
    /// fixed site count.
    pub fn preset(name: &str, sites: usize) -> Result<Self> {
        use Scenario::{D1, D2};
        let spec = match name {
            "toy-d1" => Self::fractional(D1, vec![comp(&[(0, 1.0), (1, 1.0)]), comp(&[(2, 1.0), (3, 1.0)])]),
            "toy-d2" => Self::fractional(
                D2,
                vec![
                    comp(&[(0, 0.5), (1, 1.0), (2, 0.5)]),
                    comp(&[(0, 0.5), (2, 0.5), (3, 1.0)]),
                ],
            ),
            "toy-d3" | "d3" | "uci-d3" => Self::d3(sites),
            "uci-d1" | "hepmass-2site-d1" => Self::fractional(D1, vec![comp(&[(0, 1.0)]), comp(&[(1, 1.0)])]),
            "uci-d2" | "hepmass-2site-d2" => Self::fractional(
                D2,
                vec![comp(&[(0, 0.7), (1, 0.3)]), comp(&[(0, 0.3), (1, 0.7)])],
            ),
            "uci3-d1" => Self::fractional(D1, vec![comp(&[(0, 1.0)]), comp(&[(1, 1.0), (2, 1.0)])]),
            "uci3-d2" => Self::fractional(
                D2,
                vec![comp(&[(0, 0.5), (1, 1.0)]), comp(&[(0, 0.5), (2, 1.0)])],
            ),
            "covtype-d1" => Self::fractional(
                D1,
                vec![comp(&[(1, 1.0)]), comp(&[(0, 1.0), (2, 1.0), (3, 1.0), (4, 1.0)])],
            ),
            "covtype-d2" => Self::fractional(
                D2,
                vec![
                    comp(&[(0, 0.7), (1, 0.3), (2, 1.0), (3, 1.0), (4, 1.0)]),
                    comp(&[(0, 0.3), (1, 0.7)]),
                ],
            ),
            "hepmass-2site-d3" => Self::d3(2),
            "hepmass-3site-d1" => Self::fractional(
                D1,
                vec![comp(&[(0, 0.5)]), comp(&[(0, 0.5)]), comp(&[(1, 1.0)])],
            ),
            "hepmass-3site-d2" => Self::fractional(
                D2,
                vec![
                    comp(&[(0, 0.5), (1, 0.25)]),
                    comp(&[(0, 0.25), (1, 0.25)]),
                    comp(&[(0, 0.25), (1, 0.5)]),
                ],
            ),
            "hepmass-3site-d3" => Self::d3(3),
            "hepmass-4site-d1" => Self::fractional(
                D1,
                vec![
                    comp(&[(0, 0.5)]),
                    comp(&[(0, 0.5)]),
                    comp(&[(1, 0.5)]),
                    comp(&[(1, 0.5)]),
                ],
            ),
            "hepmass-4site-d2" => Self::fractional(
                D2,
                vec![
                    comp(&[(0, 0.375), (1, 0.125)]),
                    comp(&[(0, 0.375), (1, 0.125)]),
                    comp(&[(0, 0.125), (1, 0.375)]),
                    comp(&[(0, 0.125), (1, 0.375)]),
                ],
            ),
            "hepmass-4site-d3" => Self::d3(4),
            other => Err(Error::Scenario(format!(
                "unknown scenario `{other}`; known: {}",
                SCENARIO_PRESETS.join(", ")
            ))),
        }?;
        Ok(spec)
    }
}

/// Splits a labelled dataset into site shards (site ids 0..S). Points keep
/// their original relative order inside each shard.
pub fn partition_scenario(
    points: &[Vec<f64>],
    labels: &[usize],
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<Vec<SiteShard>> {
    spec.validate()?;
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: labels.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.sites];
    match spec.scenario {
        Scenario::D3 => {
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.shuffle(&mut rng);
            let base = points.len() / spec.sites;
            let extra = points.len() % spec.sites;
            let mut start = 0;
            for (s, slot) in members.iter_mut().enumerate() {
                let size = base + usize::from(s < extra);
                slot.extend_from_slice(&order[start..start + size]);
                start += size;
            }
        }
        Scenario::D1 | Scenario::D2 => {
            let mut by_component: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &l) in labels.iter().enumerate() {
                by_component.entry(l).or_default().push(i);
            }
            let named: std::collections::BTreeSet<usize> =
                spec.composition.iter().flat_map(|m| m.keys().copied()).collect();
            if let Some(c) = named.iter().find(|c| !by_component.contains_key(c)) {
                return Err(Error::Scenario(format!("component {c} is absent from the data")));
            }
            if let Some(c) = by_component.keys().find(|c| !named.contains(c)) {
                return Err(Error::Scenario(format!("component {c} is not assigned to any site")));
            }
            for (c, mut idx) in by_component {
                idx.shuffle(&mut rng);
                let holders: Vec<(usize, f64)> = spec
                    .composition
                    .iter()
                    .enumerate()
                    .filter_map(|(s, m)| m.get(&c).map(|&f| (s, f)))
                    .collect();
                let n_c = idx.len();
                let mut cumulative = 0.0;
                let mut start = 0;
                for (pos, (s, f)) in holders.iter().enumerate() {
                    cumulative += f;
                    let end = if pos + 1 == holders.len() {
                        n_c
                    } else {
                        ((cumulative * n_c as f64).round() as usize).min(n_c)
                    };
                    members[*s].extend_from_slice(&idx[start..end]);
                    start = end;
                }
            }
        }
    }
    members
        .into_iter()
        .enumerate()
        .map(|(s, mut idx)| {
            idx.sort_unstable();
            let pts = idx.iter().map(|&i| points[i].clone()).collect();
            let lbl = idx.iter().map(|&i| labels[i]).collect();
            SiteShard::new(s as u32, pts, Some(lbl))
        })
        .collect()
}

/// Points with optional class labels (dense 0-based ranks).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    /// Rows dropped because of missing values.
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    /// Comma if the line has one, whitespace otherwise.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    pub delimiter: Delimiter,
    pub header: bool,
    /// Label column; negative values count from the end (-1 is the last).
    pub label_col: Option<isize>,
    /// Rescale every feature to mean 0, standard deviation 1.
    pub standardize: bool,
    /// Map non-numeric tokens to integers per column, in order of first
    /// appearance.
    pub categorical: bool,
    /// Keep non-negative integer labels as written instead of ranking them.
    /// Shards cut from one labelled file need this to stay comparable.
    pub keep_label_values: bool,
}

fn is_missing(tok: &str) -> bool {
    matches!(tok, "" | "?" | "NA" | "na" | "N/A")
}

fn split_fields(line: &str, delimiter: Delimiter) -> Vec<&str> {
    let comma = match delimiter {
        Delimiter::Comma => true,
        Delimiter::Whitespace => false,
        Delimiter::Auto => line.contains(','),
    };
    if comma {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

pub fn parse_dataset<R: BufRead>(source: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<(String, usize)> = Vec::new();
    let mut categories: HashMap<usize, HashMap<String, f64>> = HashMap::new();
    let mut width: Option<usize> = None;
    let mut dropped = 0;

    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let number = i + 1;
        if (opts.header && i == 0) || line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line, opts.delimiter);
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: number,
                    message: format!("expected {w} fields, got {}", fields.len()),
                })
            }
            _ => {}
        }
        if fields.iter().any(|f| is_missing(f)) {
            dropped += 1;
            continue;
        }
        let label_idx = opts.label_col.map(|c| {
            if c < 0 {
                (fields.len() as isize + c) as usize
            } else {
                c as usize
            }
        });
        if let Some(li) = label_idx {
            if li >= fields.len() {
                return Err(Error::Parse {
                    line: number,
                    message: format!("label column {li} beyond {} fields", fields.len()),
                });
            }
        }
        let mut row = Vec::with_capacity(fields.len());
        for (col, tok) in fields.iter().enumerate() {
            if Some(col) == label_idx {
                raw_labels.push((tok.to_string(), number));
                continue;
            }
            let value = match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ if opts.categorical => {
                    let table = categories.entry(col).or_default();
                    let next = table.len() as f64;
                    *table.entry(tok.to_string()).or_insert(next)
                }
                _ => {
                    return Err(Error::Parse {
                        line: number,
                        message: format!("cannot parse `{tok}` in column {col}"),
                    })
                }
            };
            row.push(value);
        }
        rows.push(row);
    }

    let labels = if opts.label_col.is_some() {
        Some(if opts.keep_label_values {
            literal_labels(&raw_labels)?
        } else {
            rank_labels(&raw_labels, opts.categorical)?
        })
    } else {
        None
    };
    if opts.standardize {
        standardize(&mut rows);
    }
    Ok(Dataset {
        points: rows,
        labels,
        dropped_rows: dropped,
    })
}

fn literal_labels(raw: &[(String, usize)]) -> Result<Vec<usize>> {
    raw.iter()
        .map(|(tok, line)| {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: *line,
                message: format!("label `{tok}` is not a non-negative integer"),
            })
        })
        .collect()
}

fn rank_labels(raw: &[(String, usize)], categorical: bool) -> Result<Vec<usize>> {
    let numeric: Option<Vec<i64>> = raw.iter().map(|(t, _)| t.parse::<i64>().ok()).collect();
    match numeric {
        Some(values) => {
            let mut distinct = values.clone();
            distinct.sort_unstable();
            distinct.dedup();
            Ok(values
                .iter()
                .map(|v| distinct.binary_search(v).expect("present"))
                .collect())
        }
        None if categorical => {
            let mut table: HashMap<&str, usize> = HashMap::new();
            Ok(raw
                .iter()
                .map(|(t, _)| {
                    let next = table.len();
                    *table.entry(t.as_str()).or_insert(next)
                })
                .collect())
        }
        None => {
            let (tok, line) = raw
                .iter()
                .find(|(t, _)| t.parse::<i64>().is_err())
                .expect("a non-integer label");
            Err(Error::Parse {
                line: *line,
                message: format!("label `{tok}` is not an integer"),
            })
        }
    }
}

/// Centres every column and scales it to unit sample standard deviation;
/// constant columns are only centred.
pub fn standardize(rows: &mut [Vec<f64>]) {
    let n = rows.len();
    if n < 2 {
        return;
    }
    let d = rows[0].len();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            rows.iter_mut().for_each(|r| r[j] = (r[j] - mean) / sd);
        } else {
            log::warn!("feature {j} has zero variance; centred only");
            rows.iter_mut().for_each(|r| r[j] -= mean);
        }
    }
}

pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let data = parse_dataset(std::io::BufReader::new(file), opts)?;
    if data.dropped_rows > 0 {
        log::info!("{}: dropped {} rows with missing values", path.display(), data.dropped_rows);
    }
    Ok(data)
}

/// Writes comma-separated rows, the label (when present) last.
pub fn write_dataset<W: Write>(sink: &mut W, points: &[Vec<f64>], labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(Error::LengthMismatch {
                left: l.len(),
                right: points.len(),
            });
        }
    }
    for (i, p) in points.iter().enumerate() {
        let mut line = p.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        if let Some(l) = labels {
            line.push_str(&format!(",{}", l[i]));
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    Ok(())
}
