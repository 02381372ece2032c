//! Mixture manifests, the training loop and inference.

mod config;
mod enhance;
mod manifest;
mod optim;
mod trainer;

pub use config::TrainConfig;
pub use enhance::enhance;
pub use manifest::{
    build_manifest, list_wavs, Manifest, MixtureRecipe, Split, SplitRules, TEST_SNRS, TRAIN_SNRS,
};
pub use optim::{loss_mse_magnitude, Adam, LOG_POWER_CLAMP};
pub use trainer::{
    train_loop, train_step, train_with_source, LossRecord, TrainOptions, TrainOutcome, TrainingPair,
};
