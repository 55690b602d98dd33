//! End-to-end orchestration: sites compress in parallel, the coordinator
//! clusters the pooled codewords, and labels flow back to the sites.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::affinity::gaussian_affinity;
use crate::dml::DmlConfig;
use crate::error::{Error, Result};
use crate::eval::{clustering_accuracy_with, AccuracyMode, MAX_EXACT_CLASSES};
use crate::site::{local_compress, populate_labels, CodebookMessage, GroupMap, LabelMessage, SiteShard};
use crate::spectral::{grid_argmax, median_pairwise_distance, normalized_cuts_affinity, BandwidthChoice};
use crate::timing::PhaseTimer;
use crate::wire;

/// The union of all site codebooks, ordered by (site id, group id).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCodewords {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<usize>,
    /// (site id, group id) of each codeword.
    pub provenance: Vec<(u32, usize)>,
}

impl PooledCodewords {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn aggregate(codebooks: &[CodebookMessage]) -> Result<PooledCodewords> {
    if codebooks.is_empty() {
        return Err(Error::NoCodebooks);
    }
    let dim = codebooks[0].dim;
    let mut rows = Vec::new();
    let mut sites = BTreeSet::new();
    for cb in codebooks {
        cb.validate()?;
        if cb.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: cb.dim,
            });
        }
        if !sites.insert(cb.site_id) {
            return Err(Error::InvalidCodebook(format!("site {} sent twice", cb.site_id)));
        }
        for e in &cb.entries {
            rows.push(((cb.site_id, e.group_id), e.weight, &e.centroid));
        }
    }
    rows.sort_by_key(|r| r.0);
    Ok(PooledCodewords {
        points: rows.iter().map(|r| r.2.clone()).collect(),
        weights: rows.iter().map(|r| r.1).collect(),
        provenance: rows.iter().map(|r| r.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CodewordWeighting {
    /// Every codeword is one vertex of equal standing.
    #[default]
    Unweighted,
    /// Affinities scaled by w_i w_j so each codeword counts as its group's
    /// points.
    PointMass,
}

/// Where codebooks and label messages travel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Exchange {
    #[default]
    Memory,
    /// Files `codebook_<site>.txt` and `labels_<site>.txt` in a directory.
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub k: usize,
    pub dml: DmlConfig,
    pub bandwidth: BandwidthChoice,
    pub weighting: CodewordWeighting,
    /// Site co-located with the coordinator; its messages are not counted
    /// as transmitted.
    pub host_site: Option<u32>,
    pub exchange: Exchange,
}

impl RunOptions {
    pub fn new(k: usize, dml: DmlConfig, bandwidth: BandwidthChoice) -> Self {
        Self {
            k,
            dml,
            bandwidth,
            weighting: CodewordWeighting::Unweighted,
            host_site: None,
            exchange: Exchange::Memory,
        }
    }
}

/// Accuracy, timing and traffic of one pipeline run. Times are seconds of
/// compute on the thread running each phase (see [`crate::timing`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Dataset size, K and DML settings; runs are comparable when equal.
    pub config_id: String,
    pub sites: usize,
    pub accuracy: Option<f64>,
    pub bandwidth: f64,
    pub site_times: Vec<f64>,
    pub central_time: f64,
    pub populate_time: f64,
    /// Slowest site plus the central and populate phases.
    pub effective_wall_time: f64,
    pub codeword_count: usize,
    pub codewords_per_site: Vec<usize>,
    pub bytes_transmitted: usize,
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    /// Per-point cluster labels for each shard, in input order.
    pub labels: Vec<Vec<usize>>,
    pub report: RunReport,
}

/// Clusters codewords with normalized cuts.
pub fn cluster_codewords(
    pooled: &PooledCodewords,
    k: usize,
    bandwidth: f64,
    weighting: CodewordWeighting,
) -> Result<Vec<usize>> {
    if k > pooled.len() {
        return Err(Error::TooManyClusters {
            requested: k,
            available: pooled.len(),
        });
    }
    if pooled.len() == 1 {
        return Ok(vec![0]);
    }
    let mut affinity = gaussian_affinity(&pooled.points, bandwidth)?;
    if weighting == CodewordWeighting::PointMass {
        let w: Vec<f64> = pooled.weights.iter().map(|&w| w as f64).collect();
        affinity = affinity.weighted(&w)?;
    }
    normalized_cuts_affinity(&affinity, k)
}

fn label_messages(pooled: &PooledCodewords, codeword_labels: &[usize]) -> BTreeMap<u32, LabelMessage> {
    let mut out: BTreeMap<u32, LabelMessage> = BTreeMap::new();
    for (&(site_id, group), &label) in pooled.provenance.iter().zip(codeword_labels) {
        out.entry(site_id)
            .or_insert_with(|| LabelMessage {
                site_id,
                labels: BTreeMap::new(),
            })
            .labels
            .insert(group, label);
    }
    out
}

fn accuracy_of(truth: &[usize], pred: &[usize], k: usize) -> Result<f64> {
    let classes = truth.iter().max().map_or(0, |m| m + 1);
    let k_eval = k.max(classes);
    let mode = if k_eval > MAX_EXACT_CLASSES {
        AccuracyMode::Assignment
    } else {
        AccuracyMode::Exact
    };
    clustering_accuracy_with(truth, pred, k_eval, mode)
}

fn codebook_path(dir: &std::path::Path, site: u32) -> PathBuf {
    dir.join(format!("codebook_{site}.txt"))
}

fn labels_path(dir: &std::path::Path, site: u32) -> PathBuf {
    dir.join(format!("labels_{site}.txt"))
}

struct SiteOutput {
    map: GroupMap,
    payload: Vec<u8>,
    seconds: f64,
}

fn site_phase(shard: &SiteShard, cfg: &DmlConfig, exchange: &Exchange) -> Result<SiteOutput> {
    let start = PhaseTimer::start();
    let (msg, map) = local_compress(shard, cfg)?;
    let mut payload = Vec::new();
    wire::write_codebook(&msg, &mut payload)?;
    if let Exchange::Directory(dir) = exchange {
        std::fs::write(codebook_path(dir, shard.site_id), &payload)?;
    }
    Ok(SiteOutput {
        map,
        payload,
        seconds: start.seconds(),
    })
}

fn populate_phase(site_id: u32, map: &GroupMap, payload: &[u8], exchange: &Exchange) -> Result<(Vec<usize>, f64)> {
    let start = PhaseTimer::start();
    let msg = match exchange {
        Exchange::Memory => wire::read_labels(payload)?,
        Exchange::Directory(dir) => {
            let file = std::fs::File::open(labels_path(dir, site_id))?;
            wire::read_labels(std::io::BufReader::new(file))?
        }
    };
    if msg.site_id != site_id {
        return Err(Error::InvalidCodebook(format!(
            "site {site_id} received labels addressed to site {}",
            msg.site_id
        )));
    }
    let labels = populate_labels(map, &msg.labels)?;
    Ok((labels, start.seconds()))
}

/// Runs the full pipeline over shards held by separate sites.
///
/// Each site compresses its shard on its own thread and ships only its
/// serialized codebook. The coordinator decodes and pools the codebooks,
/// clusters the codewords, and returns one label message per site, routed
/// by provenance. Sites then label their own points.
pub fn run_distributed(shards: &[SiteShard], opts: &RunOptions) -> Result<DistributedRun> {
    if shards.is_empty() {
        return Err(Error::NoCodebooks);
    }
    if opts.k == 0 {
        return Err(Error::ZeroClusters);
    }
    opts.dml.validate()?;
    let mut ids = BTreeSet::new();
    for s in shards {
        if s.is_empty() {
            return Err(Error::EmptyShard(s.site_id));
        }
        if !ids.insert(s.site_id) {
            return Err(Error::InvalidConfig(format!("duplicate site id {}", s.site_id)));
        }
    }
    if let Exchange::Directory(dir) = &opts.exchange {
        std::fs::create_dir_all(dir)?;
    }

    let outputs: Vec<Result<SiteOutput>> = thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| scope.spawn(|| site_phase(shard, &opts.dml, &opts.exchange)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("site task panicked"))
            .collect()
    });
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let is_remote = |site: u32| opts.host_site != Some(site);
    let mut bytes_transmitted: usize = shards
        .iter()
        .zip(&outputs)
        .filter(|(s, _)| is_remote(s.site_id))
        .map(|(_, o)| o.payload.len())
        .sum();

    // Central phase.
    let start = PhaseTimer::start();
    let codebooks = shards
        .iter()
        .zip(&outputs)
        .map(|(shard, out)| match &opts.exchange {
            Exchange::Memory => wire::read_codebook(out.payload.as_slice()),
            Exchange::Directory(dir) => {
                let file = std::fs::File::open(codebook_path(dir, shard.site_id))?;
                wire::read_codebook(std::io::BufReader::new(file))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = aggregate(&codebooks)?;
    if opts.k > pooled.len() {
        return Err(Error::TooManyClusters {
            requested: opts.k,
            available: pooled.len(),
        });
    }

    let truth: Option<Vec<usize>> = shards
        .iter()
        .map(|s| s.true_labels().map(<[usize]>::to_vec))
        .collect::<Option<Vec<_>>>()
        .map(|v| v.concat());
    let position: BTreeMap<u32, usize> = shards.iter().enumerate().map(|(i, s)| (s.site_id, i)).collect();
    let point_labels = |codeword_labels: &[usize]| -> Result<Vec<usize>> {
        let messages = label_messages(&pooled, codeword_labels);
        let mut per_site = vec![Vec::new(); shards.len()];
        for (site, msg) in &messages {
            per_site[position[site]] = populate_labels(&outputs[position[site]].map, &msg.labels)?;
        }
        Ok(per_site.concat())
    };

    let bandwidth = match &opts.bandwidth {
        BandwidthChoice::Fixed(bw) => *bw,
        BandwidthChoice::Median => median_pairwise_distance(&pooled.points)?,
        BandwidthChoice::Search(spec) => {
            let truth = truth.as_deref().ok_or(Error::LabelsRequired)?;
            let grid = spec.resolve(&pooled.points)?;
            grid_argmax(&grid, |bw| {
                let labels = cluster_codewords(&pooled, opts.k, bw, opts.weighting)?;
                accuracy_of(truth, &point_labels(&labels)?, opts.k)
            })?
            .0
        }
    };
    let codeword_labels = cluster_codewords(&pooled, opts.k, bandwidth, opts.weighting)?;
    let messages = label_messages(&pooled, &codeword_labels);
    let mut label_payloads = Vec::with_capacity(shards.len());
    for shard in shards {
        let msg = &messages[&shard.site_id];
        let mut payload = Vec::new();
        wire::write_labels(msg, &mut payload)?;
        if let Exchange::Directory(dir) = &opts.exchange {
            std::fs::write(labels_path(dir, shard.site_id), &payload)?;
        }
        if is_remote(shard.site_id) {
            bytes_transmitted += payload.len();
        }
        label_payloads.push(payload);
    }
    let central_time = start.seconds();

    let populated: Vec<Result<(Vec<usize>, f64)>> = thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .zip(&outputs)
            .zip(&label_payloads)
            .map(|((shard, out), payload)| {
                scope.spawn(|| populate_phase(shard.site_id, &out.map, payload, &opts.exchange))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("populate task panicked"))
            .collect()
    });
    let populated = populated.into_iter().collect::<Result<Vec<_>>>()?;
    let populate_time = populated.iter().map(|p| p.1).fold(0.0, f64::max);
    let labels: Vec<Vec<usize>> = populated.into_iter().map(|p| p.0).collect();

    let accuracy = match &truth {
        Some(t) => Some(accuracy_of(t, &labels.concat(), opts.k)?),
        None => None,
    };
    let site_times: Vec<f64> = outputs.iter().map(|o| o.seconds).collect();
    let slowest = site_times.iter().cloned().fold(0.0, f64::max);
    let total_points: usize = shards.iter().map(SiteShard::len).sum();
    let report = RunReport {
        config_id: format!(
            "n={} k={} dml={} ratio={}",
            total_points, opts.k, opts.dml.method, opts.dml.compression_ratio
        ),
        sites: shards.len(),
        accuracy,
        bandwidth,
        site_times,
        central_time,
        populate_time,
        effective_wall_time: slowest + central_time + populate_time,
        codeword_count: pooled.len(),
        codewords_per_site: codebooks.iter().map(|c| c.entries.len()).collect(),
        bytes_transmitted,
    };
    Ok(DistributedRun { labels, report })
}

/// The same pipeline with all data at one site.
pub fn run_nondistributed(
    points: &[Vec<f64>],
    true_labels: Option<&[usize]>,
    opts: &RunOptions,
) -> Result<(Vec<usize>, RunReport)> {
    let shard = SiteShard::new(0, points.to_vec(), true_labels.map(<[usize]>::to_vec))?;
    let run = run_distributed(std::slice::from_ref(&shard), opts)?;
    let labels = run.labels.into_iter().next().expect("one shard");
    Ok((labels, run.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dml::DmlMethod;
    use crate::site::CodebookEntry;

    fn book(site_id: u32, n: usize) -> CodebookMessage {
        CodebookMessage {
            site_id,
            dim: 1,
            entries: (0..n)
                .map(|g| CodebookEntry {
                    group_id: g,
                    weight: 1 + g,
                    centroid: vec![site_id as f64 * 10.0 + g as f64],
                })
                .collect(),
        }
    }

    #[test]
    fn aggregate_pools_in_provenance_order() {
        let one = aggregate(&[book(0, 3)]).unwrap();
        assert_eq!(one.len(), 3);
        let pooled = aggregate(&[book(2, 5), book(1, 3)]).unwrap();
        assert_eq!(pooled.len(), 8);
        assert_eq!(pooled.provenance[0], (1, 0));
        assert_eq!(pooled.provenance[3], (2, 0));
        assert_eq!(pooled.points[3], vec![20.0]);
        assert_eq!(pooled.weights[4], 2);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate(&[]), Err(Error::NoCodebooks));
        let mut other = book(1, 2);
        other.dim = 2;
        for e in &mut other.entries {
            e.centroid.push(0.0);
        }
        assert!(matches!(
            aggregate(&[book(0, 2), other]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn k_larger_than_codewords_fails() {
        let shard = SiteShard::new(0, (0..40).map(|i| vec![i as f64]).collect(), None).unwrap();
        let opts = RunOptions::new(3, DmlConfig::new(DmlMethod::Kmeans, 20.0, 0), BandwidthChoice::Median);
        assert!(matches!(
            run_distributed(&[shard], &opts),
            Err(Error::TooManyClusters { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn host_site_traffic_is_free() {
        let shards: Vec<SiteShard> = (0..2)
            .map(|s| SiteShard::new(s, (0..30).map(|i| vec![i as f64 + 100.0 * s as f64]).collect(), None).unwrap())
            .collect();
        let mut opts = RunOptions::new(2, DmlConfig::new(DmlMethod::Kmeans, 5.0, 0), BandwidthChoice::Median);
        let all = run_distributed(&shards, &opts).unwrap().report.bytes_transmitted;
        opts.host_site = Some(0);
        let hosted = run_distributed(&shards, &opts).unwrap().report.bytes_transmitted;
        assert!(hosted < all && hosted > 0);
    }
}
