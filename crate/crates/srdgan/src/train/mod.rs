//! The staged optimization engine and its parts.

pub mod adam;
pub mod engine;
pub mod schedule;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use engine::{
    load_train_state, run, save_train_state, train_h2l_step, train_joint_step, train_l2h_step,
    train_step, NetSlot, RunOutcome, TrainPlan, TrainState,
};
pub use schedule::{lr_at, LrSchedule};
