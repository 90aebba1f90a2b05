//! Losses, optimizer, augmentation and the training loop.

mod augment;
mod config;
mod loss;
mod optim;
mod trainer;

#[cfg(test)]
mod tests;

pub use augment::{augment_scene, drop_agents, scale_scene};
pub use config::TrainConfig;
pub use loss::{
    nearest_lane, scene_loss, select_nearest_endpoint, select_winner, LossParts, SceneLoss, WtaKey,
};
pub use optim::{lr_schedule, AdamW};
pub use trainer::{
    loss_csv, train, write_atomic, EpochLog, TrainOptions, TrainOutcome, Trainer, EPOCH_CHECKPOINT,
    FINAL_CHECKPOINT, LOSS_CSV, LOSS_CSV_HEADER,
};
