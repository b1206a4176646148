//! Retrieval metrics, linear probing, compact-embedding baselines and the
//! ablation harness.

mod ablation;
mod probe;
mod reduce;
mod retrieval;

pub use ablation::{
    parse_grid_values, run_ablation, AblationBase, AblationParam, AblationRow, AblationRun, AblationTable,
};
pub use probe::{linear_probe, linear_probe_with, ProbeConfig};
pub use reduce::{pca_reduce, truncate_dims, PcaModel};
pub use retrieval::{
    average_precision, map_at_100, map_at_cutoff, recall_at_k, recall_at_ks, RetrievalReport, MAP_CUTOFF,
};
