//! Loss, minibatch Adam training and checkpoints.

mod checkpoint;
mod gradcheck;
mod loss;
mod trainer;

pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheck, GRAD_FLOOR};
pub use loss::{euclidean_loss, euclidean_loss_graph};
pub use trainer::{run_epoch, train_until, EpochReport, Objective, RngState, TrainConfig, TrainState};
