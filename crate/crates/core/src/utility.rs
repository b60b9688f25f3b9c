//! CRRA period utility. `sigma == 1` is evaluated as `ln c`.

/// `(c^(1-sigma) - 1)/(1-sigma)`, or `ln c` for `sigma == 1`; `-inf` for `c <= 0`.
pub fn utility(c: f64, sigma: f64) -> f64 {
    if c <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if sigma == 1.0 {
        c.ln()
    } else {
        (c.powf(1.0 - sigma) - 1.0) / (1.0 - sigma)
    }
}

/// `Y^(1-sigma) / c_share^sigma`: marginal value of a wealth share whose
/// consumption share is `c_share` at goods level `y`.
pub fn marginal(c_share: f64, y: f64, sigma: f64) -> f64 {
    if c_share <= 0.0 {
        return f64::INFINITY;
    }
    if sigma == 1.0 {
        1.0 / c_share
    } else {
        y.powf(1.0 - sigma) / c_share.powf(sigma)
    }
}
