//! From-scratch deep deterministic policy gradient with behavior
//! cloning, mixed exploration, and checkpointing.

pub mod buffer;
pub mod checkpoint;
pub mod ddpg;
pub mod mlp;
pub mod normalizer;
pub mod rollout;
pub mod schedule;
pub mod train;

pub use buffer::{ReplayBuffer, Transition, ACTION_DIM, STATE_DIM};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use ddpg::{Agent, TrainConfig};
pub use normalizer::ObsNormalizer;
pub use rollout::{evaluate, policy_plan, EvalReport, Policy, PolicyRun};
pub use schedule::{ExplorationSchedule, Variant};
pub use train::{eval_seeds, train, write_curve_csv, CurveRow, EpochDiag, TrainOutput};
