//! Relative cost and emission change of a policy against the no-battery run.

use serde::{Deserialize, Serialize};

use crate::accounting::Cost;

/// `(policy - baseline) / |baseline|`, or 0 when the baseline is 0.
/// Negative values are improvements.
pub fn relative_change(policy: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (policy - baseline) / baseline.abs()
    }
}

/// `(price_score, emission_score)`.
pub fn score(policy: Cost, baseline: Cost) -> (f64, f64) {
    (
        relative_change(policy.price, baseline.price),
        relative_change(policy.emission, baseline.emission),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdScore {
    pub microgrid: usize,
    pub id: String,
    pub policy_cost: Cost,
    pub baseline_cost: Cost,
    pub price_score: f64,
    pub emission_score: f64,
    /// Sum of normalized per-step rewards under the policy.
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateScore {
    pub price_score: f64,
    pub emission_score: f64,
    pub policy_cost: Cost,
    pub baseline_cost: Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub households: Vec<HouseholdScore>,
    pub microgrids: Vec<AggregateScore>,
    pub distributor: AggregateScore,
    /// Mean over households of the episode reward.
    pub mean_reward: f64,
}

fn aggregate<'a>(members: impl Iterator<Item = &'a HouseholdScore>) -> AggregateScore {
    let mut agg = AggregateScore::default();
    let mut n = 0usize;
    for h in members {
        agg.price_score += h.price_score;
        agg.emission_score += h.emission_score;
        agg.policy_cost += h.policy_cost;
        agg.baseline_cost += h.baseline_cost;
        n += 1;
    }
    if n > 0 {
        agg.price_score /= n as f64;
        agg.emission_score /= n as f64;
    }
    agg
}

impl ScoreReport {
    /// Build from per-household `(microgrid, id, policy, baseline, reward)`;
    /// upper levels take the mean of their members' scores.
    pub fn from_households(entries: Vec<(usize, String, Cost, Cost, f64)>) -> Self {
        let households: Vec<HouseholdScore> = entries
            .into_iter()
            .map(|(microgrid, id, policy_cost, baseline_cost, reward)| {
                let (price_score, emission_score) = score(policy_cost, baseline_cost);
                HouseholdScore {
                    microgrid,
                    id,
                    policy_cost,
                    baseline_cost,
                    price_score,
                    emission_score,
                    reward,
                }
            })
            .collect();
        let n_mg = households.iter().map(|h| h.microgrid + 1).max().unwrap_or(0);
        let microgrids = (0..n_mg)
            .map(|m| aggregate(households.iter().filter(|h| h.microgrid == m)))
            .collect();
        let distributor = aggregate(households.iter());
        let mean_reward = if households.is_empty() {
            0.0
        } else {
            households.iter().map(|h| h.reward).sum::<f64>() / households.len() as f64
        };
        ScoreReport {
            households,
            microgrids,
            distributor,
            mean_reward,
        }
    }

    /// Mean scalar policy cost per household.
    pub fn mean_policy_cost(&self) -> f64 {
        self.households.iter().map(|h| h.policy_cost.scalar()).sum::<f64>() / self.households.len().max(1) as f64
    }

    pub fn mean_baseline_cost(&self) -> f64 {
        self.households.iter().map(|h| h.baseline_cost.scalar()).sum::<f64>() / self.households.len().max(1) as f64
    }
}
