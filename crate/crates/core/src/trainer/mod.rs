//! Joint optimization of a linear encoder and the prototype matrix.

mod checkpoint;
mod encoder;
mod optim;
mod train;

pub use checkpoint::{
    load_checkpoint, prototypes_as_set, save_checkpoint, Checkpoint, CheckpointMeta, ENCODER_FILE, META_FILE,
    PROTOTYPES_FILE,
};
pub use encoder::{EncodeCache, EncoderInit, LinearEncoder, MIN_PROJECTION_NORM};
pub use optim::{OptimizerKind, OptimizerParams, ParamState};
pub use train::{
    initial_trainer, init_prototypes, train, FeatureSelection, PrototypeInit, TrainConfig, TrainOutcome, Trainer,
};
