//! Exhaustive enumeration over every move sequence of a dispatch model.
//! Exists to check the dynamic program on small instances.

use super::dp::{DispatchModel, DispatchPlan, StageCost};
use crate::error::{GridError, Result};

pub const MAX_BRUTE_HORIZON: usize = 6;
pub const MAX_BRUTE_BRANCHING: usize = 8;

pub fn brute_force_dispatch<S: StageCost + ?Sized>(model: &DispatchModel<'_, S>) -> Result<DispatchPlan> {
    let horizon = model.horizon();
    let branching = model.reach.iter().map(|(lo, hi)| hi - lo + 1).max().unwrap_or(1);
    if horizon > MAX_BRUTE_HORIZON || branching > MAX_BRUTE_BRANCHING {
        return Err(GridError::EnumerationTooLarge(format!(
            "horizon {horizon} (max {MAX_BRUTE_HORIZON}), branching {branching} (max {MAX_BRUTE_BRANCHING})"
        )));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![model.start];
    enumerate(model, &mut path, &mut best);
    let (objective, path) = best.expect("at least the idle path exists");
    Ok(model.plan_from_path(&path, objective))
}

fn enumerate<S: StageCost + ?Sized>(
    model: &DispatchModel<'_, S>,
    path: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let horizon = model.horizon();
    if path.len() == horizon + 1 {
        // summed last-to-first, the same association as backward induction
        let total = (0..horizon)
            .rev()
            .fold(0.0, |acc, t| model.cost(t, path[t], path[t + 1]).scalar() + acc);
        if best.as_ref().map_or(true, |(b, _)| total < *b) {
            *best = Some((total, path.clone()));
        }
        return;
    }
    let here = *path.last().expect("non-empty");
    for next in model.successors(here) {
        path.push(next);
        enumerate(model, path, best);
        path.pop();
    }
}
