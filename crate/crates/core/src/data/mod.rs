//! Embedding storage, UCEB files, multimodal fusion and synthetic datasets.

mod embedding;
mod fusion;
mod synth;
pub mod uceb;

pub use embedding::{default_ids, EmbeddingSet, MAX_ID_BYTES};
pub use fusion::{ensemble_features, MIN_FUSED_NORM};
pub use synth::{synth_conflict_dataset, synth_split, SyntheticSpec, SyntheticSplit};
pub use uceb::{load_embeddings, save_embeddings};
