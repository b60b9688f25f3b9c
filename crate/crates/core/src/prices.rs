//! Competitive factor prices and the effective-output transformation used
//! when capital does not fully depreciate.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorPrices {
    /// Rental rate of capital.
    pub rental: f64,
    pub wage: f64,
}

/// Cobb-Douglas output `z K^alpha L^(1-alpha)`.
pub fn output(capital: f64, labor: f64, z: f64, alpha: f64) -> f64 {
    z * capital.powf(alpha) * labor.powf(1.0 - alpha)
}

/// Marginal products of capital and labor.
pub fn factor_prices(capital: f64, labor: f64, z: f64, alpha: f64) -> Result<FactorPrices> {
    if !(capital > 0.0) || !(labor > 0.0) || !(z > 0.0) {
        return Err(domain(format!("factor prices need K, L, z > 0 (got K={capital}, L={labor}, z={z})")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let kl = capital / labor;
    Ok(FactorPrices { rental: alpha * z * kl.powf(alpha - 1.0), wage: (1.0 - alpha) * z * kl.powf(alpha) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveQuantities {
    /// Goods available: output plus undepreciated capital scaled by `1/alpha`.
    pub y_eff: f64,
    /// `Y / Y_eff`; multiplies real wage shares into effective ones.
    pub wage_scale: f64,
}

/// Effective output for a node whose parent invested `omega_prev` of its
/// (effective) output `y_prev`.
pub fn effective_transform(
    y: f64,
    y_prev: f64,
    omega_prev: f64,
    delta: f64,
    alpha: f64,
) -> Result<EffectiveQuantities> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("delta must lie in (0,1], got {delta}")));
    }
    if !(alpha > 0.0) {
        return Err(domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(y > 0.0) {
        return Err(domain(format!("output must be positive, got {y}")));
    }
    if !(y_prev > 0.0) {
        return Err(domain(format!("previous output must be positive, got {y_prev}")));
    }
    let y_eff = y + (1.0 - delta) / alpha * omega_prev * y_prev;
    Ok(EffectiveQuantities { y_eff, wage_scale: y / y_eff })
}
