//! Shared-parameter multi-agent training loop.
//!
//! Every actionable household is driven by the same actor (and judged by
//! the same critic); each one contributes its own trajectory to the batch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::rollout::{play_episode, ActionSelection};
use super::update::{a2c_update, pg_update, ReturnEstimator, Trajectory};
use crate::accounting::Cost;
use crate::env::{Env, EnvConfig, OBS_DIM};
use crate::error::{GridError, Result};
use crate::rng::{mix, substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Pg,
    A2c,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Pg => "pg",
            Algo::A2c => "a2c",
        })
    }
}

impl std::str::FromStr for Algo {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pg" => Ok(Algo::Pg),
            "a2c" => Ok(Algo::A2c),
            other => Err(GridError::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_actions: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: usize,
    pub gamma: f64,
    /// Episodes collected per update.
    pub batch_size: usize,
    pub rollout_steps: usize,
    pub training_steps: usize,
    #[serde(default)]
    pub entropy_coef: f64,
    #[serde(default)]
    pub returns: ReturnEstimator,
}

impl TrainConfig {
    /// Published hyperparameters for each algorithm.
    pub fn for_algo(algo: Algo) -> Self {
        TrainConfig {
            n_actions: 40,
            lr_actor: match algo {
                Algo::Pg => 0.00381,
                Algo::A2c => 0.00245,
            },
            lr_critic: 0.001,
            hidden: 128,
            gamma: 1.0,
            batch_size: 32,
            rollout_steps: 24,
            training_steps: 2000,
            entropy_coef: 0.0,
            returns: ReturnEstimator::RewardToGo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions < 2 || self.hidden == 0 || self.batch_size == 0 || self.rollout_steps == 0 {
            return Err(GridError::Config(
                "n_actions >= 2 and hidden, batch_size, rollout_steps > 0 are required".into(),
            ));
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err(GridError::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(GridError::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return Err(GridError::Config("entropy_coef must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Mean undiscounted episode reward per household trajectory.
    pub mean_reward: f64,
    pub mean_cost_price: f64,
    pub mean_cost_emission: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: Mlp,
    pub critic: Option<Mlp>,
    pub curve: Vec<CurvePoint>,
}

/// Freshly initialized networks for a run.
pub fn init_networks(algo: Algo, config: &TrainConfig, seed: u64) -> (Mlp, Option<Mlp>) {
    let actor = Mlp::init(OBS_DIM, config.hidden, config.n_actions, &mut substream(seed, Domain::Init, 0));
    let critic = match algo {
        Algo::A2c => Some(Mlp::init(OBS_DIM, config.hidden, 1, &mut substream(seed, Domain::Init, 1))),
        Algo::Pg => None,
    };
    (actor, critic)
}

/// Seed for the episode data of batch member `b` in iteration `iter`.
pub fn episode_seed(seed: u64, iter: usize, batch_size: usize, b: usize) -> u64 {
    mix(seed, (iter * batch_size + b) as u64 + 1)
}

/// Collect one batch of sampled episodes in parallel.
pub fn collect_batch(
    env_config: &EnvConfig,
    actor: &Mlp,
    config: &TrainConfig,
    seed: u64,
    iter: usize,
) -> Result<Vec<(Vec<Trajectory>, Vec<Cost>)>> {
    (0..config.batch_size)
        .into_par_iter()
        .map(|b| {
            let mut env = Env::new(env_config.clone(), episode_seed(seed, iter, config.batch_size, b))?;
            let mut rng = substream(seed, Domain::Rollout, (iter * config.batch_size + b) as u64);
            let log = play_episode(&mut env, actor, ActionSelection::Sample(&mut rng), Some(config.rollout_steps))?;
            Ok((log.trajectories, log.costs))
        })
        .collect()
}

pub fn train(env_config: &EnvConfig, algo: Algo, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    env_config.validate()?;
    config.validate()?;
    if env_config.n_actions != config.n_actions {
        return Err(GridError::Config(format!(
            "environment has {} actions but training expects {}",
            env_config.n_actions, config.n_actions
        )));
    }
    if env_config.actionable().is_empty() {
        return Err(GridError::Config("no household has a usable battery".into()));
    }

    let (mut actor, mut critic) = init_networks(algo, config, seed);
    let mut curve = Vec::with_capacity(config.training_steps);

    for iter in 0..config.training_steps {
        let episodes = collect_batch(env_config, &actor, config, seed, iter)?;
        let mut batch = Vec::new();
        let mut cost = Cost::default();
        for (trajs, costs) in episodes {
            batch.extend(trajs);
            for c in costs {
                cost += c;
            }
        }
        let n = batch.len() as f64;
        let mean_reward = batch.iter().map(Trajectory::total_reward).sum::<f64>() / n;

        let stats = match (algo, critic.as_mut()) {
            (Algo::A2c, Some(c)) => a2c_update(
                &mut actor,
                c,
                &batch,
                config.lr_actor,
                config.lr_critic,
                config.gamma,
                config.entropy_coef,
            )?,
            _ => pg_update(
                &mut actor,
                &batch,
                config.lr_actor,
                config.gamma,
                config.returns,
                config.entropy_coef,
            )?,
        };

        curve.push(CurvePoint {
            iteration: iter,
            mean_reward,
            mean_cost_price: cost.price / n,
            mean_cost_emission: cost.emission / n,
        });
        if iter % 100 == 0 || iter + 1 == config.training_steps {
            log::info!(
                "{algo} iter {iter}: mean reward {mean_reward:.4}, critic loss {:?}",
                stats.critic_loss
            );
        }
    }

    Ok(TrainOutcome { actor, critic, curve })
}
