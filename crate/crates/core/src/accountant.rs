//! Rényi-DP bookkeeping for mechanisms with linear curves `γ(α) = α·ρ`.
//!
//! Composition adds `ρ`; conversion to `(ε, δ)` uses the closed-form
//! minimizer over the Rényi order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target `(ε, δ)` guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    fn log_inv_delta(&self) -> f64 {
        -self.delta.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub rho: f64,
}

/// Ordered record of every privacy-consuming call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RdpLedger {
    entries: Vec<LedgerEntry>,
}

impl RdpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, label: impl Into<String>, rho: f64) {
        assert!(rho >= 0.0 && rho.is_finite(), "ledger rho must be finite and >= 0, got {rho}");
        self.entries.push(LedgerEntry {
            label: label.into(),
            rho,
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_rho(&self) -> f64 {
        self.entries.iter().map(|e| e.rho).sum()
    }

    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        rdp_to_dp(self.total_rho(), delta)
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

/// `ρ` of the Gaussian mechanism: `Δ²/(2σ²)`.
pub fn gaussian_rho(sigma: f64, sensitivity: f64) -> Result<f64> {
    let s = positive("sigma", sigma)?;
    let d = positive("sensitivity", sensitivity)?;
    Ok(d * d / (2.0 * s * s))
}

/// `ρ` of the exponential mechanism sampling `∝ exp(ε·q)`: `(2εΔ)²/8`.
pub fn exponential_rho(eps_step: f64, sensitivity: f64) -> Result<f64> {
    let e = positive("eps_step", eps_step)?;
    let d = positive("sensitivity", sensitivity)?;
    Ok((2.0 * e * d).powi(2) / 8.0)
}

/// Smallest `ε` with `(ε, δ)`-DP for a mechanism with total `ρ`:
/// `ρ + 2√(ρ ln(1/δ))`, attained at `α* = 1 + √(ln(1/δ)/ρ)`.
pub fn rdp_to_dp(total_rho: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(total_rho >= 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "rho",
            value: total_rho,
        });
    }
    let l = -delta.ln();
    Ok(total_rho + 2.0 * (total_rho * l).sqrt())
}

/// The Rényi order that minimizes the conversion bound.
pub fn optimal_alpha(total_rho: f64, delta: f64) -> f64 {
    1.0 + (-delta.ln() / total_rho).sqrt()
}

/// `ε` bound at a given Rényi order `α > 1`.
pub fn dp_at_alpha(total_rho: f64, delta: f64, alpha: f64) -> f64 {
    alpha * total_rho + (-delta.ln()) / (alpha - 1.0)
}

/// Noise scale such that `k` sensitivity-1 Gaussian releases compose to
/// exactly `(ε, δ)`.
pub fn calibrate_sigma(params: PrivacyParams, invocations: u32) -> Result<f64> {
    let p = PrivacyParams::new(params.epsilon, params.delta)?;
    if invocations == 0 {
        return Err(Error::InvalidParams("need at least one invocation".into()));
    }
    let l = p.log_inv_delta();
    let e = p.epsilon;
    Ok((invocations as f64 / 2.0).sqrt() * (l.sqrt() + (l + e).sqrt()) / e)
}

/// Largest `ρ` with `ρ + 2√(ρ ln(1/δ)) ≤ ε`.
pub fn calibrate_rho(params: PrivacyParams) -> Result<f64> {
    let p = PrivacyParams::new(params.epsilon, params.delta)?;
    let l = p.log_inv_delta();
    // √ρ solves x² + 2√L·x − ε = 0. Written to avoid cancellation.
    let root = p.epsilon / ((l + p.epsilon).sqrt() + l.sqrt());
    Ok(root * root)
}

/// Laplace scale `Δ₁/ε`.
pub fn laplace_scale(epsilon: f64, l1_sensitivity: f64) -> Result<f64> {
    let e = positive("epsilon", epsilon)?;
    let d = positive("l1_sensitivity", l1_sensitivity)?;
    Ok(d / e)
}

/// Standard deviation of Laplace noise, `√2·Δ₁/ε`.
pub fn laplace_std(epsilon: f64, l1_sensitivity: f64) -> Result<f64> {
    Ok(std::f64::consts::SQRT_2 * laplace_scale(epsilon, l1_sensitivity)?)
}
