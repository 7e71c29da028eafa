//! Closed-form constants and error budgets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// `√(N_ν(1 + δ))`, the operator-norm ceiling for a matrix with `δ_{ω,s} = δ`
/// whose index set splits into `N_ν` admissible blocks.
pub fn operator_norm_bound(delta: f64, n_nu: usize) -> Result<f64> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("δ = {delta} must be finite and nonnegative")));
    }
    if n_nu == 0 {
        return Err(Error::InvalidArgument("N_ν must be at least 1".into()));
    }
    Ok((n_nu as f64 * (1.0 + delta)).sqrt())
}

/// Stability and robustness constants for the cardinality model with weights in `[γ, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFloorConstants {
    pub delta: f64,
    pub gamma: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    /// `δ/(γ − (γ+1)δ)`: NSP constant guaranteed at order `s`.
    pub nsp_bound: f64,
}

/// Largest `δ_{2s}` for which [`weight_floor_constants`] applies: `γ/(γ+2)`.
pub fn weight_floor_threshold(gamma: f64) -> f64 {
    gamma / (gamma + 2.0)
}

/// Constants `A₁, B₁, A₂, B₂` from `δ_{2s}` and the weight floor `γ`.
/// Requires `δ < γ/(γ+2)` so that `D = γ(1−δ) − 2δ > 0`.
pub fn weight_floor_constants(delta_2s: f64, gamma: f64) -> Result<WeightFloorConstants> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Premise(format!("weight floor γ = {gamma} must lie in (0, 1]")));
    }
    if !(delta_2s >= 0.0) {
        return Err(Error::Premise(format!("δ = {delta_2s} must be nonnegative")));
    }
    let d = gamma * (1.0 - delta_2s) - 2.0 * delta_2s;
    if !(delta_2s < weight_floor_threshold(gamma)) || d <= 0.0 {
        return Err(Error::Premise(format!(
            "δ_2s = {delta_2s} must be below γ/(γ+2) = {}",
            weight_floor_threshold(gamma)
        )));
    }
    let root = (1.0 + delta_2s).sqrt();
    Ok(WeightFloorConstants {
        delta: delta_2s,
        gamma,
        a1: 2.0 * gamma * (1.0 - delta_2s) / d,
        b1: 4.0 * gamma * root / d,
        a2: 2.0 / d,
        b2: 2.0 * root * (d + 2.0) / ((1.0 - delta_2s) * d),
        nsp_bound: delta_2s / (gamma - (gamma + 1.0) * delta_2s),
    })
}

/// Robust-NSP parameters implied by `δ_{ω,3s} < 1/3` (weighted-cardinality model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustNspConstants {
    pub delta: f64,
    /// `ρ = 2δ/(1−δ)`, also the implied NSP constant.
    pub rho: f64,
    /// `γ̄ = √(1+δ)/(1−δ)`.
    pub gamma: f64,
    /// `D₂ = 6√(1+δ)/(1−δ)`.
    pub d2: f64,
}

pub fn robust_nsp_constants(delta_3s: f64) -> Result<RobustNspConstants> {
    if !(0.0..1.0 / 3.0).contains(&delta_3s) {
        return Err(Error::Premise(format!("δ_3s = {delta_3s} must lie in [0, 1/3)")));
    }
    let root = (1.0 + delta_3s).sqrt();
    Ok(RobustNspConstants {
        delta: delta_3s,
        rho: 2.0 * delta_3s / (1.0 - delta_3s),
        gamma: root / (1.0 - delta_3s),
        d2: 6.0 * root / (1.0 - delta_3s),
    })
}

/// Constants entering an error budget; unavailable ones are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstants {
    pub c1: Option<f64>,
    pub d1: Option<f64>,
    pub c2: Option<f64>,
    pub d2: Option<f64>,
}

impl From<WeightFloorConstants> for BudgetConstants {
    fn from(k: WeightFloorConstants) -> Self {
        Self { c1: Some(k.a1), d1: Some(k.b1), c2: Some(k.a2), d2: Some(k.b2) }
    }
}

impl From<RobustNspConstants> for BudgetConstants {
    fn from(k: RobustNspConstants) -> Self {
        Self { c1: None, d1: None, c2: None, d2: Some(k.d2) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub sigma_s: f64,
    pub s: f64,
    pub delta: f64,
    pub n_nu: usize,
    pub lambda_phi: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// `C₁σ_s + D₁√s·√(1+δ)√N_ν·ε/λ`; `None` if a constant is unavailable.
    pub l1_bound: Option<f64>,
    /// `C₂σ_s/√s + D₂√(1+δ)√N_ν·ε/λ`; `None` if a constant is unavailable.
    pub l2_bound: Option<f64>,
    /// The noise part of the ℓ2 bound alone.
    pub l2_noise_term: Option<f64>,
    pub constants: BudgetConstants,
    pub inputs: BudgetInputs,
}

pub fn ripnsp_error_budget(inputs: BudgetInputs, constants: BudgetConstants) -> Result<ErrorBudget> {
    let BudgetInputs { sigma_s, s, delta, n_nu, lambda_phi, epsilon } = inputs;
    for (name, v) in [("σ_s", sigma_s), ("s", s), ("δ", delta), ("λ(Φ)", lambda_phi), ("ε", epsilon)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and nonnegative")));
        }
    }
    if lambda_phi == 0.0 {
        return Err(Error::Degenerate("λ(Φ) = 0".into()));
    }
    if s == 0.0 {
        return Err(Error::InvalidArgument("s must be positive".into()));
    }
    let noise = (1.0 + delta).sqrt() * (n_nu as f64).sqrt() * epsilon / lambda_phi;
    let l1 = match (constants.c1, constants.d1) {
        (Some(c1), Some(d1)) => Some(c1 * sigma_s + d1 * s.sqrt() * noise),
        _ => None,
    };
    let l2_noise = constants.d2.map(|d2| d2 * noise);
    let l2 = match (constants.c2, l2_noise) {
        (Some(c2), Some(n)) => Some(c2 * sigma_s / s.sqrt() + n),
        (None, Some(n)) if sigma_s == 0.0 => Some(n),
        _ => None,
    };
    Ok(ErrorBudget { l1_bound: l1, l2_bound: l2, l2_noise_term: l2_noise, constants, inputs })
}

/// `λ(M)`, the largest singular value.
pub fn largest_singular_value(m: &CMatrix) -> f64 {
    linalg::spectral_norm(m)
}

/// Smallest positive singular value (relative threshold `1e-12`).
pub fn smallest_positive_singular_value(m: &CMatrix) -> Option<f64> {
    linalg::smallest_positive_singular_value(m, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_norm_bound(0.0, 1).unwrap(), 1.0);
        assert!((operator_norm_bound(1.0 / 3.0, 3).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn weight_floor_examples() {
        let k = weight_floor_constants(0.0, 1.0).unwrap();
        assert_eq!((k.a1, k.b1, k.a2, k.b2), (2.0, 4.0, 2.0, 6.0));
        let k = weight_floor_constants(1.0 / 11.0, 0.75).unwrap();
        assert!((k.a2 - 4.0).abs() < 1e-12);
        assert!(weight_floor_constants(1.0 / 3.0, 1.0).is_err());
        assert!(weight_floor_constants(0.1, 1.5).is_err());
    }

    #[test]
    fn weight_floor_monotone_in_delta() {
        let gamma = 0.8;
        let top = weight_floor_threshold(gamma);
        let mut prev = weight_floor_constants(0.0, gamma).unwrap();
        for i in 1..200 {
            let k = weight_floor_constants(top * i as f64 / 200.0, gamma).unwrap();
            assert!(k.a1 > prev.a1 && k.b1 > prev.b1 && k.a2 > prev.a2 && k.b2 > prev.b2);
            prev = k;
        }
    }

    #[test]
    fn robust_constants_examples() {
        let k = robust_nsp_constants(0.2).unwrap();
        assert!((k.rho - 0.5).abs() < 1e-15);
        assert!((k.gamma - 1.25 * 1.2f64.sqrt()).abs() < 1e-15);
        let k = robust_nsp_constants(0.0).unwrap();
        assert_eq!((k.rho, k.gamma, k.d2), (0.0, 1.0, 6.0));
        assert!(robust_nsp_constants(1.0 / 3.0).is_err());
    }

    #[test]
    fn budget_structure() {
        let constants: BudgetConstants = weight_floor_constants(0.1, 1.0).unwrap().into();
        let base = BudgetInputs { sigma_s: 0.0, s: 2.0, delta: 0.1, n_nu: 3, lambda_phi: 1.0, epsilon: 0.0 };
        let b = ripnsp_error_budget(base, constants).unwrap();
        assert_eq!((b.l1_bound, b.l2_bound), (Some(0.0), Some(0.0)));

        let noisy = BudgetInputs { sigma_s: 0.7, epsilon: 0.3, ..base };
        let b1 = ripnsp_error_budget(noisy, constants).unwrap();
        let b2 = ripnsp_error_budget(BudgetInputs { lambda_phi: 2.0, ..noisy }, constants).unwrap();
        let sigma_part = constants.c2.unwrap() * 0.7 / 2f64.sqrt();
        assert!(((b1.l2_bound.unwrap() - sigma_part) / 2.0 - (b2.l2_bound.unwrap() - sigma_part)).abs() < 1e-12);

        let doubled = ripnsp_error_budget(BudgetInputs { sigma_s: 1.4, epsilon: 0.6, ..noisy }, constants).unwrap();
        assert!((doubled.l2_bound.unwrap() - 2.0 * b1.l2_bound.unwrap()).abs() < 1e-12);
        assert!((doubled.l1_bound.unwrap() - 2.0 * b1.l1_bound.unwrap()).abs() < 1e-12);

        assert!(ripnsp_error_budget(BudgetInputs { lambda_phi: 0.0, ..base }, constants).is_err());
    }

    #[test]
    fn weighted_budget_marks_missing_constants() {
        let constants: BudgetConstants = robust_nsp_constants(0.1).unwrap().into();
        let inputs = BudgetInputs { sigma_s: 0.5, s: 2.0, delta: 0.1, n_nu: 2, lambda_phi: 1.0, epsilon: 0.1 };
        let b = ripnsp_error_budget(inputs, constants).unwrap();
        assert_eq!(b.l1_bound, None);
        assert_eq!(b.l2_bound, None);
        assert!(b.l2_noise_term.unwrap() > 0.0);
    }

    #[test]
    fn singular_value_examples() {
        assert_eq!(largest_singular_value(&CMatrix::identity(3, 3)), 1.0);
        let d = from_real(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])));
        assert_eq!(largest_singular_value(&d), 3.0);
        assert_eq!(smallest_positive_singular_value(&(d * c(1.0, 0.0))), Some(1.0));
    }
}
