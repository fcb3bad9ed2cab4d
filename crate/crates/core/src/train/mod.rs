//! Training: AdamW, the training loop, grid search, task-level helpers and
//! metrics.

pub mod adamw;
pub mod metrics;
mod task;
mod trainer;

pub use adamw::AdamW;
pub use task::{train_task, Evaluation, ModelSetup, Task, TaskModel};
pub use trainer::{
    grid_search, ner_scores, train, EpochRecord, Grid, GridReport, GridRow, HyperParams, TrainConfig, TrainReport,
    Trainable,
};
