//! First-layer learning agents: a shared softmax actor trained by policy
//! gradient or by advantage actor-critic.

pub mod actions;
pub mod checkpoint;
pub mod mlp;
pub mod rollout;
pub mod train;
pub mod update;

pub use actions::{action_to_power, ActionGrid};
pub use checkpoint::{write_curve_csv, Checkpoint, NetworkBlob};
pub use mlp::{log_softmax, softmax, Mlp};
pub use rollout::{argmax, play_episode, sample_index, ActionSelection, EpisodeLog};
pub use train::{collect_batch, episode_seed, init_networks, train, Algo, CurvePoint, TrainConfig, TrainOutcome};
pub use update::{
    a2c_update, actor_gradient, advantages, compute_returns, critic_gradient, pg_update, policy_forward,
    ReturnEstimator, Trajectory, UpdateStats,
};
