//! ADAM optimisation, the training loop, and the deterministic inference path.

mod adam;
mod config;
mod data;
mod infer;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use data::{preprocess, Dataset, InMemoryDataset};
pub use infer::{evaluate, predict, predict_dataset, predict_images};
pub use train::{train, train_with, write_history, EpochStats, TrainOutcome, HISTORY_HEADER};
