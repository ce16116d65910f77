//! Embedding extractor, optimizer, learning-rate schedule and training loop.

mod checkpoint;
mod network;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use network::{EmbeddingModel, ExtractorGrads, ForwardCache, ModelDims, STD_EPS};
pub use optim::{adam_step, clr_lr, ClrSchedule, OptimizerState};
pub use train::{
    prepare_features, train, training_accuracy, LogEntry, TrainConfig, TrainOutcome, TrainPhaseConfig,
    TrainingBank,
};
