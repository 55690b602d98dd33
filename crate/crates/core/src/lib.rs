//! Spectral clustering for data spread over several sites.
//!
//! Each site compresses its points into a small codebook (k-means centroids
//! or random projection tree leaf means), only the codebooks travel to a
//! coordinator, normalized cuts runs on the pooled codewords, and the
//! resulting codeword labels are mapped back onto every site's points.

pub mod affinity;
pub mod coordinator;
pub mod datagen;
pub mod dml;
pub mod error;
pub mod eval;
pub mod seeding;
pub mod site;
pub mod spectral;
pub mod timing;
pub mod wire;

pub use affinity::{cut_weight, gaussian_affinity, laplacian, ncut_value, AffinityMatrix, Laplacian};
pub use coordinator::{
    aggregate, run_distributed, run_nondistributed, CodewordWeighting, DistributedRun, Exchange,
    PooledCodewords, RunOptions, RunReport,
};
pub use dml::{compress, kmeans, rptree_partition, DmlConfig, DmlMethod, Grouping};
pub use error::{Error, Result};
pub use eval::{clustering_accuracy, compare_runs, distortion, lemma1_check};
pub use site::{local_compress, populate_labels, CodebookEntry, CodebookMessage, LabelMessage, SiteShard};
pub use spectral::{
    bipartition, normalized_cuts, second_eigenvector, select_bandwidth, BandwidthChoice,
    BandwidthGrid, GridSpec,
};
