//! Desk-scale training: L1 loss, Adam with cosine annealing, synthetic
//! low-light / haze / blur degradations of procedurally generated images,
//! and a seeded training loop.

mod data;
mod degrade;
mod loss;
mod optim;
mod trainer;

pub use data::{load_corpus, make_batch, synthetic_corpus, synthetic_image};
pub use degrade::{blur_kernel, degrade, BlurShape, DegradationSpec, Range, Task};
pub use loss::l1_loss;
pub use optim::{cosine_lr, AdamConfig, OptimState};
pub use trainer::{smoothed_loss, train_toy, EvalSummary, TrainConfig, TrainOutcome, TrainRecord};
