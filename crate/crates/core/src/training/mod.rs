//! A3C training: rewards, n-step losses, the shared parameter store and the
//! worker loop.

mod loss;
mod reward;
mod rollout;
mod store;
mod worker;

pub use loss::{discounted_returns, rollout_losses, segment_loss, LossParts, RolloutStep};
pub use reward::{component_sum, compute_reward, Reward, RewardConfig, RewardContext, RmaMode, StepFacts};
pub use rollout::{action_probs, greedy_action, sample_action, Episode, EpisodeSpec};
pub use store::{apply_gradients, LogRecord, SharedParamStore, StoreInner};
pub use worker::{save_checkpoint, train, worker_loop, EpisodeSummary, TrainConfig, TrainJob, TrainReport, WorkerReport};
