//! Policy-gradient and advantage actor-critic updates over a batch of
//! trajectories, with gradients computed by backpropagation.
//!
//! Objectives (N trajectories, T steps each):
//!
//! * actor:  J = 1/N sum_i sum_t w_it log pi(a_it | s_it)  (+ entropy bonus)
//! * critic: L = 1/N sum_i sum_t (V(s_it) - G_it)^2
//!
//! where `w` is the reward-to-go G (policy gradient), the whole-episode
//! return (literal estimator), or the advantage G - V (actor-critic).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{log_softmax, softmax, Mlp};
use crate::error::{GridError, Result};

/// One agent's experience over an episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.observations.len() != self.rewards.len() || self.actions.len() != self.rewards.len() {
            return Err(GridError::Shape {
                expected: self.rewards.len(),
                got: self.observations.len().min(self.actions.len()),
            });
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(GridError::NonFinite("trajectory rewards".into()));
        }
        Ok(())
    }
}

/// Which return multiplies the score function in the policy gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnEstimator {
    /// Discounted sum of rewards from step t onward.
    #[default]
    RewardToGo,
    /// Discounted return of the whole episode at every step.
    FullTrajectory,
}

/// `returns[t] = sum_{k >= t} gamma^(k-t) rewards[k]`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

fn step_weights(traj: &Trajectory, gamma: f64, estimator: ReturnEstimator) -> Vec<f64> {
    let g = compute_returns(&traj.rewards, gamma);
    match estimator {
        ReturnEstimator::RewardToGo => g,
        ReturnEstimator::FullTrajectory => vec![g.first().copied().unwrap_or(0.0); g.len()],
    }
}

/// Action probabilities of the policy at one observation.
pub fn policy_forward(actor: &Mlp, observation: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&actor.forward(observation)?.out))
}

/// Ascent direction of the actor objective for per-step weights `weights[i][t]`.
pub fn actor_gradient(actor: &Mlp, batch: &[Trajectory], weights: &[Vec<f64>], entropy_coef: f64) -> Result<Mlp> {
    if batch.is_empty() {
        return Err(GridError::Config("empty batch".into()));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let parts: Result<Vec<Mlp>> = batch
        .par_iter()
        .zip(weights.par_iter())
        .map(|(traj, w)| {
            let mut grad = actor.zeros_like();
            let mut d_out = vec![0.0; actor.output];
            for ((obs, &a), &wt) in traj.observations.iter().zip(&traj.actions).zip(w) {
                if a >= actor.output {
                    return Err(GridError::ActionOutOfRange {
                        index: a,
                        n_actions: actor.output,
                    });
                }
                if wt == 0.0 && entropy_coef == 0.0 {
                    continue;
                }
                let fwd = actor.forward(obs)?;
                let p = softmax(&fwd.out);
                // d log pi(a) / d z = onehot(a) - p
                for (k, d) in d_out.iter_mut().enumerate() {
                    *d = -wt * p[k];
                }
                d_out[a] += wt;
                if entropy_coef != 0.0 {
                    let logp = log_softmax(&fwd.out);
                    let h: f64 = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
                    for k in 0..actor.output {
                        d_out[k] += entropy_coef * -p[k] * (logp[k] + h);
                    }
                }
                d_out.iter_mut().for_each(|d| *d *= inv_n);
                actor.backward(obs, &fwd, &d_out, &mut grad);
            }
            Ok(grad)
        })
        .collect();
    sum_grads(actor, parts?)
}

/// Gradient of the critic's squared-error loss against `targets[i][t]`.
pub fn critic_gradient(critic: &Mlp, batch: &[Trajectory], targets: &[Vec<f64>]) -> Result<(Mlp, f64)> {
    if batch.is_empty() {
        return Err(GridError::Config("empty batch".into()));
    }
    if critic.output != 1 {
        return Err(GridError::Shape {
            expected: 1,
            got: critic.output,
        });
    }
    let inv_n = 1.0 / batch.len() as f64;
    let parts: Result<Vec<(Mlp, f64)>> = batch
        .par_iter()
        .zip(targets.par_iter())
        .map(|(traj, g)| {
            let mut grad = critic.zeros_like();
            let mut loss = 0.0;
            for (obs, &target) in traj.observations.iter().zip(g) {
                let fwd = critic.forward(obs)?;
                let err = fwd.out[0] - target;
                loss += err * err * inv_n;
                critic.backward(obs, &fwd, &[2.0 * err * inv_n], &mut grad);
            }
            Ok((grad, loss))
        })
        .collect();
    let parts = parts?;
    let loss = parts.iter().map(|(_, l)| l).sum();
    Ok((sum_grads(critic, parts.into_iter().map(|(g, _)| g).collect())?, loss))
}

fn sum_grads(like: &Mlp, parts: Vec<Mlp>) -> Result<Mlp> {
    let mut total = like.zeros_like();
    for g in &parts {
        total.axpy(1.0, g);
    }
    if !total.is_finite() {
        return Err(GridError::NonFinite("gradient".into()));
    }
    Ok(total)
}

/// Critic predictions for every step of every trajectory.
pub fn critic_values(critic: &Mlp, batch: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
    batch
        .par_iter()
        .map(|traj| {
            traj.observations
                .iter()
                .map(|o| critic.forward(o).map(|f| f.out[0]))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub mean_return: f64,
    pub critic_loss: Option<f64>,
    pub actor_grad_max: f64,
}

fn validate_batch(batch: &[Trajectory]) -> Result<()> {
    if batch.is_empty() {
        return Err(GridError::Config("empty batch".into()));
    }
    batch.iter().try_for_each(Trajectory::validate)
}

/// One policy-gradient ascent step: `theta += lr * grad J`.
pub fn pg_update(
    actor: &mut Mlp,
    batch: &[Trajectory],
    lr: f64,
    gamma: f64,
    estimator: ReturnEstimator,
    entropy_coef: f64,
) -> Result<UpdateStats> {
    validate_batch(batch)?;
    let weights: Vec<Vec<f64>> = batch.iter().map(|t| step_weights(t, gamma, estimator)).collect();
    let grad = actor_gradient(actor, batch, &weights, entropy_coef)?;
    actor.axpy(lr, &grad);
    Ok(UpdateStats {
        mean_return: mean_episode_return(batch, gamma),
        critic_loss: None,
        actor_grad_max: grad.max_abs(),
    })
}

/// Advantages `G_t - V(s_t)` under the current critic.
pub fn advantages(critic: &Mlp, batch: &[Trajectory], gamma: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let returns: Vec<Vec<f64>> = batch.iter().map(|t| compute_returns(&t.rewards, gamma)).collect();
    let values = critic_values(critic, batch)?;
    let adv = returns
        .iter()
        .zip(&values)
        .map(|(g, v)| g.iter().zip(v).map(|(g, v)| g - v).collect())
        .collect();
    Ok((adv, returns))
}

/// One actor-critic step. Both gradients are taken at the current
/// parameters before either network moves.
pub fn a2c_update(
    actor: &mut Mlp,
    critic: &mut Mlp,
    batch: &[Trajectory],
    lr_actor: f64,
    lr_critic: f64,
    gamma: f64,
    entropy_coef: f64,
) -> Result<UpdateStats> {
    validate_batch(batch)?;
    let (adv, returns) = advantages(critic, batch, gamma)?;
    let actor_grad = actor_gradient(actor, batch, &adv, entropy_coef)?;
    let (critic_grad, loss) = critic_gradient(critic, batch, &returns)?;
    actor.axpy(lr_actor, &actor_grad);
    critic.axpy(-lr_critic, &critic_grad);
    Ok(UpdateStats {
        mean_return: mean_episode_return(batch, gamma),
        critic_loss: Some(loss),
        actor_grad_max: actor_grad.max_abs(),
    })
}

fn mean_episode_return(batch: &[Trajectory], gamma: f64) -> f64 {
    batch
        .iter()
        .map(|t| compute_returns(&t.rewards, gamma).first().copied().unwrap_or(0.0))
        .sum::<f64>()
        / batch.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[1.0, 1.0, 1.0], 1.0), vec![3.0, 2.0, 1.0]);
        assert_eq!(compute_returns(&[0.3, -2.0, 5.0], 0.0), vec![0.3, -2.0, 5.0]);
        assert_eq!(compute_returns(&[1.0, 2.0], 0.5), vec![2.0, 2.0]);
        assert!(compute_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn unit_discount_gives_suffix_sums() {
        let r: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin()).collect();
        let g = compute_returns(&r, 1.0);
        for t in 0..24 {
            let s: f64 = r[t..].iter().sum();
            assert!((g[t] - s).abs() < 1e-12);
        }
    }

    fn toy_batch() -> Vec<Trajectory> {
        vec![Trajectory {
            observations: vec![vec![0.1, -0.2, 0.3, 0.4], vec![0.5, 0.1, -0.3, 0.0]],
            actions: vec![0, 2],
            rewards: vec![0.0, 0.0],
        }]
    }

    #[test]
    fn zero_return_leaves_actor_unchanged() {
        let mut actor = Mlp::init(4, 6, 3, &mut substream(0, Domain::Init, 0));
        let before = actor.clone();
        pg_update(&mut actor, &toy_batch(), 0.1, 1.0, ReturnEstimator::RewardToGo, 0.0).unwrap();
        assert_eq!(actor, before);
    }

    #[test]
    fn zero_network_is_uniform() {
        let actor = Mlp::zeros(18, 128, 40);
        let p = policy_forward(&actor, &[0.3; 18]).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 40.0).abs() < 1e-15));
    }

    #[test]
    fn perfect_critic_freezes_actor() {
        // critic with zero weights predicts 0; rewards 0 make G = 0 = V
        let mut actor = Mlp::init(4, 6, 3, &mut substream(2, Domain::Init, 0));
        let mut critic = Mlp::zeros(4, 6, 1);
        let before = actor.clone();
        let stats = a2c_update(&mut actor, &mut critic, &toy_batch(), 0.1, 0.1, 1.0, 0.0).unwrap();
        assert_eq!(actor, before);
        assert_eq!(stats.critic_loss, Some(0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let mut actor = Mlp::zeros(4, 2, 3);
        assert!(pg_update(&mut actor, &[], 0.1, 1.0, ReturnEstimator::RewardToGo, 0.0).is_err());
    }

    #[test]
    fn non_finite_reward_rejected() {
        let mut actor = Mlp::zeros(4, 2, 3);
        let mut b = toy_batch();
        b[0].rewards[0] = f64::NAN;
        assert!(matches!(
            pg_update(&mut actor, &b, 0.1, 1.0, ReturnEstimator::RewardToGo, 0.0),
            Err(GridError::NonFinite(_))
        ));
    }

    #[test]
    fn full_trajectory_weights() {
        let t = Trajectory {
            observations: vec![vec![]; 3],
            actions: vec![0; 3],
            rewards: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(step_weights(&t, 1.0, ReturnEstimator::FullTrajectory), vec![6.0; 3]);
        assert_eq!(step_weights(&t, 1.0, ReturnEstimator::RewardToGo), vec![6.0, 5.0, 3.0]);
    }
}
