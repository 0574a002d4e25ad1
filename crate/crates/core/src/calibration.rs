//! One-sided p-values with and without the fitted systematic-error distribution.
//!
//! Under the calibrated null the estimate is distributed `N(mean, sd² + se²)`.
//! Both p-values are upper-tail: large positive estimates give small p.

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::stats::norm_sf;

const P_FLOOR: f64 = 1e-300;
const P_CEIL: f64 = 1.0 - 1e-16;

fn clamp_p(p: f64) -> f64 {
    p.clamp(P_FLOOR, P_CEIL)
}

fn check_inputs(beta_hat: f64, se: f64) -> Result<()> {
    if !beta_hat.is_finite() {
        return Err(Error::domain(format!("estimate must be finite, got {beta_hat}")));
    }
    if !(se.is_finite() && se > 0.0) {
        return Err(Error::domain(format!("standard error must be positive, got {se}")));
    }
    Ok(())
}

/// `1 - Φ(β̂ / s)`.
pub fn uncalibrated_p(beta_hat: f64, se: f64) -> Result<f64> {
    check_inputs(beta_hat, se)?;
    Ok(clamp_p(norm_sf(beta_hat / se)))
}

/// `1 - Φ((β̂ - μ̂) / sqrt(σ̂² + s²))`.
pub fn calibrated_p(beta_hat: f64, se: f64, model: &ErrorModel) -> Result<f64> {
    check_inputs(beta_hat, se)?;
    model.validate()?;
    let spread = if model.sd == 0.0 {
        se
    } else {
        (model.sd * model.sd + se * se).sqrt()
    };
    Ok(clamp_p(norm_sf((beta_hat - model.mean) / spread)))
}
