//! Rule-based pricing for the microgrid and distributor layers.
//!
//! Each layer posts a buy/sell pair centred inside the spread of the layer
//! above it. With a spread fraction in [0, 1] the resulting PriceSet is
//! always ordered r_bd <= r_bm <= r_bh <= r_sh <= r_sm <= r_sd + c_t.

use serde::{Deserialize, Serialize};

use crate::accounting::PriceSet;
use crate::error::{GridError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingParams {
    /// Width of the inter-microgrid band as a fraction of the grid spread.
    pub spread_m: f64,
    /// Width of the local band as a fraction of the inter-microgrid spread.
    pub spread_h: f64,
}

impl Default for PricingParams {
    fn default() -> Self {
        PricingParams {
            spread_m: 0.5,
            spread_h: 0.5,
        }
    }
}

impl PricingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("spread_m", self.spread_m), ("spread_h", self.spread_h)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Place a (buy, sell) pair symmetrically around the midpoint of
/// [floor, ceiling], `spread` of the way out.
fn centred_band(floor: f64, ceiling: f64, spread: f64) -> Result<(f64, f64)> {
    let gap = ceiling - floor;
    if !(gap >= 0.0) {
        return Err(GridError::Pricing(format!(
            "upstream spread is negative: sell-side {ceiling} < buy-side {floor}"
        )));
    }
    if !(0.0..=1.0).contains(&spread) {
        return Err(GridError::Pricing(format!("spread fraction {spread} outside [0, 1]")));
    }
    let mid = floor + 0.5 * gap;
    let half = 0.5 * spread * gap;
    // clamps absorb rounding so the ordering holds exactly
    let buy = (mid - half).clamp(floor, ceiling);
    let sell = (mid + half).clamp(buy, ceiling);
    Ok((buy, sell))
}

/// Local (household-layer) prices inside the inter-microgrid band.
/// Returns `(r_sh, r_bh)`.
pub fn price_policy_microgrid(r_sm: f64, r_bm: f64, spread_h: f64) -> Result<(f64, f64)> {
    let (buy, sell) = centred_band(r_bm, r_sm, spread_h)?;
    Ok((sell, buy))
}

/// Inter-microgrid prices inside the grid band, where the grid's effective
/// sell price includes the emission penalty. Returns `(r_sm, r_bm)`.
pub fn price_policy_distributor(r_sd: f64, r_bd: f64, c_t: f64, spread_m: f64) -> Result<(f64, f64)> {
    let (buy, sell) = centred_band(r_bd, r_sd + c_t, spread_m)?;
    Ok((sell, buy))
}

/// Full price set for one step from the exogenous grid signals.
pub fn price_set(r_sd: f64, r_bd: f64, c_t: f64, params: &PricingParams) -> Result<PriceSet> {
    let (r_sm, r_bm) = price_policy_distributor(r_sd, r_bd, c_t, params.spread_m)?;
    let (r_sh, r_bh) = price_policy_microgrid(r_sm, r_bm, params.spread_h)?;
    Ok(PriceSet {
        r_sh,
        r_bh,
        r_sm,
        r_bm,
        r_sd,
        r_bd,
        c_t,
    })
}
