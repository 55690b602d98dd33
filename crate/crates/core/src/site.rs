//! A data-holding site: compresses its shard into a codebook and maps
//! codeword labels back onto its own points.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dml::{compress, DmlConfig};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// The points held by one site. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteShard {
    pub site_id: u32,
    points: Vec<Vec<f64>>,
    true_labels: Option<Vec<usize>>,
}

impl SiteShard {
    pub fn new(site_id: u32, points: Vec<Vec<f64>>, true_labels: Option<Vec<usize>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyShard(site_id));
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
        if let Some(labels) = &true_labels {
            if labels.len() != points.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: points.len(),
                });
            }
        }
        Ok(Self {
            site_id,
            points,
            true_labels,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub group_id: usize,
    /// Number of site points the centroid stands for.
    pub weight: usize,
    pub centroid: Vec<f64>,
}

/// Everything a site sends to the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMessage {
    pub site_id: u32,
    pub dim: usize,
    pub entries: Vec<CodebookEntry>,
}

impl CodebookMessage {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidCodebook(format!("site {} sent no codewords", self.site_id)));
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if e.weight == 0 {
                return Err(Error::InvalidCodebook(format!("group {} has zero weight", e.group_id)));
            }
            if !ids.insert(e.group_id) {
                return Err(Error::InvalidCodebook(format!("duplicate group id {}", e.group_id)));
            }
            if e.centroid.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: e.centroid.len(),
                });
            }
            if e.centroid.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidCodebook(format!("group {} has a non-finite centroid", e.group_id)));
            }
        }
        Ok(())
    }

    pub fn total_weight(&self) -> usize {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// Point-to-group assignment kept at the site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap(pub Vec<usize>);

/// Cluster label per group id, as returned by the coordinator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMessage {
    pub site_id: u32,
    pub labels: BTreeMap<usize, usize>,
}

/// Runs the local transformation on a shard with the site's own random
/// stream, derived from the global seed and the site id.
pub fn local_compress(shard: &SiteShard, cfg: &DmlConfig) -> Result<(CodebookMessage, GroupMap)> {
    let site_cfg = cfg.with_seed(derive_seed(cfg.seed, shard.site_id as u64));
    let grouping = compress(shard.points(), &site_cfg)?;
    let entries = grouping
        .centroids
        .iter()
        .zip(&grouping.sizes)
        .enumerate()
        .map(|(group_id, (centroid, &weight))| CodebookEntry {
            group_id,
            weight,
            centroid: centroid.clone(),
        })
        .collect();
    let msg = CodebookMessage {
        site_id: shard.site_id,
        dim: shard.dim(),
        entries,
    };
    Ok((msg, GroupMap(grouping.assignment)))
}

/// Gives each point the cluster label of its group.
pub fn populate_labels(map: &GroupMap, codeword_labels: &BTreeMap<usize, usize>) -> Result<Vec<usize>> {
    map.0
        .iter()
        .map(|g| codeword_labels.get(g).copied().ok_or(Error::MissingGroupLabel(*g)))
        .collect()
}
