//! Training protocol: loss, augmentation, plateau schedule, early stopping
//! and the five experiment set-ups.

mod augment;
mod config;
mod data;
mod fit;
mod loss;
mod state;

pub use augment::{augment_sequence, AugmentDraw};
pub use config::{AugmentPolicy, Experiment, TrainConfig};
pub use data::{load, logits_to_masks, to_tensors, Item, Loaded};
pub use fit::{
    experiment_items, fit, frames_of, predict, run_experiment, thread_pool, ExperimentResult, ExperimentSetup, Learner,
    ModelLearner, Predicted, Validation, BEST_CKPT, CONFIG_FILE, FINAL_CKPT, HISTORY_FILE, REPORT_FILE,
};
pub use loss::{segmentation_loss, LossParts, DICE_SMOOTH};
pub use state::{dump_state, read_history, write_history, Decision, EpochRecord, TrainState, HISTORY_HEADER};
