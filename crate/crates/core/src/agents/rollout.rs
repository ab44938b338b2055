use rand::Rng;

use super::mlp::Mlp;
use super::update::{policy_forward, Trajectory};
use crate::accounting::Cost;
use crate::env::{Env, StepResult};
use crate::error::Result;

pub enum ActionSelection<'a, R: Rng + ?Sized> {
    /// Most probable action, lowest index on ties.
    Greedy,
    /// Draw from the policy distribution.
    Sample(&'a mut R),
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// A played episode: one trajectory and one cost total per actionable
/// household, plus the raw step results.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub trajectories: Vec<Trajectory>,
    pub costs: Vec<Cost>,
    pub steps: Vec<StepResult>,
}

/// Play the environment from its current state until done (or `max_steps`)
/// with every actionable household driven by the shared actor.
pub fn play_episode<R: Rng + ?Sized>(
    env: &mut Env,
    actor: &Mlp,
    mut selection: ActionSelection<'_, R>,
    max_steps: Option<usize>,
) -> Result<EpisodeLog> {
    let slots = env.actionable().to_vec();
    let mut trajectories = vec![Trajectory::default(); slots.len()];
    let mut costs = vec![Cost::default(); slots.len()];
    let mut steps = Vec::new();
    let mut obs = env.observations();
    let limit = max_steps.unwrap_or(usize::MAX);

    while !env.is_done() && steps.len() < limit {
        let mut actions = Vec::with_capacity(slots.len());
        for o in &obs {
            let p = policy_forward(actor, o.as_slice())?;
            let a = match &mut selection {
                ActionSelection::Greedy => argmax(&p),
                ActionSelection::Sample(rng) => sample_index(&p, *rng),
            };
            actions.push(a);
        }
        let result = env.step(&actions)?;
        for (i, &(m, h)) in slots.iter().enumerate() {
            let s = &result.households[m][h];
            let traj = &mut trajectories[i];
            traj.observations.push(std::mem::take(&mut obs[i].0));
            traj.actions.push(actions[i]);
            traj.rewards.push(s.reward);
            costs[i] += s.cost;
        }
        obs = result.actionable_observations(&slots);
        steps.push(result);
    }
    Ok(EpisodeLog {
        trajectories,
        costs,
        steps,
    })
}
