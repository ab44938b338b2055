//! Distance-based greedy clearing for the local and inter-microgrid markets.
//!
//! Buyers are served largest shortage first; each buyer draws from sellers
//! in order of increasing distance, ties going to the lower index. Partial
//! fills are allowed and whatever is left passes to the next layer.

use std::cmp::Ordering;

/// Outcome of one greedy clearing round over a set of participants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clearing {
    /// Volume bought in this round, per participant.
    pub bought: Vec<f64>,
    /// Volume sold in this round, per participant.
    pub sold: Vec<f64>,
    /// Shortage left over after the round.
    pub residual_shortage: Vec<f64>,
    /// Surplus left over after the round.
    pub residual_surplus: Vec<f64>,
    pub matched: f64,
}

/// Greedy match of shortages (`net > 0`) against surpluses (`net < 0`).
pub fn greedy_clear(nets: &[f64], positions: &[f64]) -> Clearing {
    debug_assert_eq!(nets.len(), positions.len());
    let n = nets.len();
    let mut short: Vec<f64> = nets.iter().map(|v| v.max(0.0)).collect();
    let mut surplus: Vec<f64> = nets.iter().map(|v| (-v).max(0.0)).collect();
    let mut out = Clearing {
        bought: vec![0.0; n],
        sold: vec![0.0; n],
        ..Default::default()
    };

    let mut buyers: Vec<usize> = (0..n).filter(|&i| short[i] > 0.0).collect();
    buyers.sort_by(|&a, &b| short[b].partial_cmp(&short[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let sellers: Vec<usize> = (0..n).filter(|&i| surplus[i] > 0.0).collect();

    if !sellers.is_empty() {
        for &b in &buyers {
            let mut order = sellers.clone();
            order.sort_by(|&x, &y| {
                let dx = (positions[x] - positions[b]).abs();
                let dy = (positions[y] - positions[b]).abs();
                dx.partial_cmp(&dy).unwrap_or(Ordering::Equal).then(x.cmp(&y))
            });
            for s in order {
                if short[b] <= 0.0 {
                    break;
                }
                if surplus[s] <= 0.0 {
                    continue;
                }
                let q = short[b].min(surplus[s]);
                // the smaller side is zeroed exactly rather than by subtraction
                if q == short[b] {
                    short[b] = 0.0;
                    surplus[s] -= q;
                } else {
                    surplus[s] = 0.0;
                    short[b] -= q;
                }
                out.bought[b] += q;
                out.sold[s] += q;
                out.matched += q;
            }
        }
    }
    out.residual_shortage = short;
    out.residual_surplus = surplus;
    out
}

/// Per-household channel splits for one microgrid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelSplit {
    pub imp: [f64; 3],
    pub exp: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketOutcome {
    /// Indexed `[microgrid][household]`.
    pub splits: Vec<Vec<ChannelSplit>>,
    /// Local volume matched inside each microgrid.
    pub local_matched: Vec<f64>,
    /// Volume matched between microgrids.
    pub inter_matched: f64,
}

/// Local market inside one microgrid: fills the imp1/exp1 channels.
pub fn clear_local_market(nets: &[f64], positions: &[f64]) -> Clearing {
    greedy_clear(nets, positions)
}

/// Split a microgrid's layer-2 result back over its households pro rata
/// to their residuals. `unmatched` is what the microgrid still holds after
/// the inter-microgrid round; it goes to layer 3.
pub fn allocate_pro_rata(residuals: &[f64], unmatched: f64) -> Vec<(f64, f64)> {
    let total: f64 = residuals.iter().sum();
    if total <= 0.0 {
        return residuals.iter().map(|_| (0.0, 0.0)).collect();
    }
    let ratio = (unmatched / total).clamp(0.0, 1.0);
    residuals
        .iter()
        .map(|&r| {
            let layer3 = r * ratio;
            ((r - layer3).max(0.0), layer3)
        })
        .collect()
}

/// Inter-microgrid market over microgrid residual nets, positioned by
/// microgrid index. Returns the clearing at microgrid granularity.
pub fn clear_inter_microgrid_market(microgrid_nets: &[f64]) -> Clearing {
    let positions: Vec<f64> = (0..microgrid_nets.len()).map(|i| i as f64).collect();
    greedy_clear(microgrid_nets, &positions)
}

/// Both market rounds for every microgrid at one step.
pub fn clear_markets(nets: &[Vec<f64>], positions: &[Vec<f64>]) -> MarketOutcome {
    let local: Vec<Clearing> = nets
        .iter()
        .zip(positions)
        .map(|(n, p)| clear_local_market(n, p))
        .collect();

    let short_totals: Vec<f64> = local.iter().map(|c| c.residual_shortage.iter().sum()).collect();
    let surplus_totals: Vec<f64> = local.iter().map(|c| c.residual_surplus.iter().sum()).collect();
    let mg_nets: Vec<f64> = short_totals
        .iter()
        .zip(&surplus_totals)
        .map(|(s, p)| if *s > 0.0 { *s } else { -*p })
        .collect();
    let inter = clear_inter_microgrid_market(&mg_nets);

    let splits = local
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let imports = allocate_pro_rata(&c.residual_shortage, inter.residual_shortage[m]);
            let exports = allocate_pro_rata(&c.residual_surplus, inter.residual_surplus[m]);
            (0..c.bought.len())
                .map(|h| ChannelSplit {
                    imp: [c.bought[h], imports[h].0, imports[h].1],
                    exp: [c.sold[h], exports[h].0, exports[h].1],
                })
                .collect()
        })
        .collect();

    MarketOutcome {
        splits,
        local_matched: local.iter().map(|c| c.matched).collect(),
        inter_matched: inter.matched,
    }
}
