//! Weighted ℓ1 minimisation over complex vectors by Douglas–Rachford splitting.
//!
//! Both programs `min ‖z‖_{ω,1} s.t. Az = y` and `s.t. ‖Az − y‖₂ ≤ ε` share one
//! iteration: an exact Euclidean projection onto the feasible set (computed from
//! a thin SVD of `A`) alternates with the proximal map of the weighted norm.
//! With `ε = 0` the projection is the affine projection onto `{Az = y}`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector, C64, RANK_TOL};
use crate::sparsity::{check_len, weighted_l1_unchecked, WeightProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Allowed constraint violation, relative to `max(1, ‖y‖₂)`.
    pub feasibility_tol: f64,
    /// Relative objective agreement required between the two iterates.
    pub objective_tol: f64,
    pub max_iterations: usize,
    /// Re-solve on the detected support by least squares when that lowers the
    /// objective (equality constraints only).
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            objective_tol: 1e-8,
            max_iterations: 100_000,
            polish: true,
        }
    }
}

/// `(A, y, ω, ε)` for the weighted ℓ1 program.
#[derive(Debug, Clone)]
pub struct RecoveryProblem<'a> {
    pub a: &'a CMatrix,
    pub y: &'a [C64],
    pub w: &'a WeightProfile,
    pub epsilon: f64,
}

impl RecoveryProblem<'_> {
    fn validate(&self) -> Result<()> {
        check_len("measurement vector", self.a.nrows(), self.y.len())?;
        check_len("weights", self.a.ncols(), self.w.len())?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise radius {} must be finite and nonnegative",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub x: Vec<C64>,
    /// `‖x̂‖_{ω,1}`.
    pub objective: f64,
    /// `‖Ax̂ − y‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖x_k − z_k‖₂` between the proximal and projected iterates at exit.
    pub fixed_point_residual: f64,
    /// Set when `‖y‖₂ ≤ ε`, in which case `x̂ = 0` without iterating.
    pub zero_solution: bool,
    pub polished: bool,
    /// Number of iterations whose feasible-iterate objective rose by more than
    /// the objective tolerance. The splitting is not a descent method, so this
    /// is a diagnostic only.
    pub objective_increases: usize,
    pub step: f64,
}

/// Proximal map of `x ↦ Σ τ_i|x_i|`: `(1 − τ_i/|z_i|)₊ · z_i`.
pub fn complex_soft_threshold(z: &[C64], tau: &[f64]) -> Result<Vec<C64>> {
    check_len("thresholds", z.len(), tau.len())?;
    if let Some(t) = tau.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidArgument(format!("threshold {t} must be nonnegative")));
    }
    Ok(z.iter().zip(tau).map(|(&zi, &ti)| shrink(zi, ti)).collect())
}

fn shrink(z: C64, t: f64) -> C64 {
    let r = z.norm();
    if r <= t {
        c(0.0, 0.0)
    } else {
        z * (1.0 - t / r)
    }
}

/// `min ‖z‖_{ω,1}` subject to `Az = y`.
pub fn solve_weighted_bp(a: &CMatrix, y: &[C64], w: &WeightProfile, opts: &SolverOptions) -> Result<SolverOutcome> {
    solve(&RecoveryProblem { a, y, w, epsilon: 0.0 }, opts)
}

/// `min ‖z‖_{ω,1}` subject to `‖Az − y‖₂ ≤ ε`.
pub fn solve_weighted_bpdn(
    a: &CMatrix,
    y: &[C64],
    w: &WeightProfile,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<SolverOutcome> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("noise radius {epsilon} must be positive")));
    }
    solve(&RecoveryProblem { a, y, w, epsilon }, opts)
}

/// Solves either program; `ε = 0` selects the equality-constrained one.
pub fn solve(problem: &RecoveryProblem<'_>, opts: &SolverOptions) -> Result<SolverOutcome> {
    problem.validate()?;
    let n = problem.a.ncols();
    let weights = problem.w.as_slice();
    let y = CVector::from_column_slice(problem.y);
    let y_norm = y.norm();
    let feas = opts.feasibility_tol * y_norm.max(1.0);

    if y_norm <= problem.epsilon {
        return Ok(SolverOutcome {
            x: vec![c(0.0, 0.0); n],
            objective: 0.0,
            residual: y_norm,
            iterations: 0,
            converged: true,
            fixed_point_residual: 0.0,
            zero_solution: true,
            polished: false,
            objective_increases: 0,
            step: 0.0,
        });
    }

    let proj = Projector::new(problem.a, &y, problem.epsilon, feas)?;
    let start = proj.project(&CVector::zeros(n));
    let scale = start.norm() / (n as f64).sqrt();
    let mean_w = weights.iter().sum::<f64>() / n as f64;
    let step = if scale > 0.0 { 0.5 * scale / mean_w } else { 1.0 };
    let tau: Vec<f64> = weights.iter().map(|wi| step * wi).collect();

    let mut wv = CVector::zeros(n);
    let mut z = start;
    let mut x = z.clone();
    let mut fp = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut increases = 0;
    let mut prev_obj = f64::INFINITY;
    let fp_tol = opts.feasibility_tol * z.norm().max(1.0);

    while iterations < opts.max_iterations {
        iterations += 1;
        z = proj.project(&wv);
        let reflected = z.scale(2.0) - &wv;
        x = CVector::from_iterator(n, reflected.iter().zip(&tau).map(|(&r, &t)| shrink(r, t)));
        wv += &x - &z;
        fp = (&x - &z).norm();

        let obj_z = weighted_l1_unchecked(z.as_slice(), weights);
        if obj_z > prev_obj + opts.objective_tol * (1.0 + prev_obj) {
            increases += 1;
        }
        prev_obj = obj_z;
        if fp <= fp_tol {
            let obj_x = weighted_l1_unchecked(x.as_slice(), weights);
            if (obj_x - obj_z).abs() <= opts.objective_tol * (1.0 + obj_z) {
                converged = true;
                break;
            }
        }
    }

    let mut best = z;
    let mut polished = false;
    if opts.polish && problem.epsilon == 0.0 {
        if let Some(p) = polish(problem.a, &y, &x, feas) {
            let obj_best = weighted_l1_unchecked(best.as_slice(), weights);
            let obj_p = weighted_l1_unchecked(p.as_slice(), weights);
            if obj_p <= obj_best + opts.objective_tol * (1.0 + obj_best) {
                best = p;
                polished = true;
            }
        }
    }

    let residual = (problem.a * &best - &y).norm();
    let objective = weighted_l1_unchecked(best.as_slice(), weights);
    let outcome = SolverOutcome {
        x: best.as_slice().to_vec(),
        objective,
        residual,
        iterations,
        converged: converged && residual <= problem.epsilon + feas,
        fixed_point_residual: fp,
        zero_solution: false,
        polished,
        objective_increases: increases,
        step,
    };
    if outcome.converged {
        Ok(outcome)
    } else {
        Err(Error::NotConverged { outcome: Box::new(outcome) })
    }
}

/// Least-squares re-solve of `A_S z_S = y` on the support of `x`.
fn polish(a: &CMatrix, y: &CVector, x: &CVector, feas: f64) -> Option<CVector> {
    let top = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if top == 0.0 {
        return None;
    }
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i].norm() > 1e-9 * top).collect();
    if support.is_empty() || support.len() > a.nrows() {
        return None;
    }
    let sub = a.select_columns(&support);
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= RANK_TOL * smax) {
        return None;
    }
    let zs = svd.solve(y, 0.0).ok()?;
    let mut out = CVector::zeros(x.len());
    for (k, &i) in support.iter().enumerate() {
        out[i] = zs[k];
    }
    ((a * &out - y).norm() <= feas).then_some(out)
}

/// Exact Euclidean projection onto `{z : ‖Az − y‖₂ ≤ ε}`.
struct Projector {
    v: CMatrix,
    sigma: Vec<f64>,
    /// `Uᴴy`.
    b: CVector,
    /// Squared radius left for the in-range residual.
    eta2: f64,
}

impl Projector {
    fn new(a: &CMatrix, y: &CVector, epsilon: f64, feas: f64) -> Result<Self> {
        let svd = a.clone().svd(true, true);
        let u_full = svd.u.expect("requested left singular vectors");
        let vt_full = svd.v_t.expect("requested right singular vectors");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
            .collect();
        let u = u_full.select_columns(&keep);
        let v = vt_full.select_rows(&keep).adjoint();
        let sigma: Vec<f64> = keep.iter().map(|&i| svd.singular_values[i]).collect();
        let b = u.adjoint() * y;
        let outside = (y - &u * &b).norm();
        if outside > epsilon + feas {
            return Err(Error::Infeasible { residual: outside, allowed: epsilon + feas });
        }
        let eta2 = (epsilon * epsilon - outside * outside).max(0.0);
        Ok(Self { v, sigma, b, eta2 })
    }

    fn project(&self, w: &CVector) -> CVector {
        let c0 = self.v.adjoint() * w;
        let resid: Vec<C64> = (0..self.sigma.len())
            .map(|i| c0[i] * self.sigma[i] - self.b[i])
            .collect();
        let r2: f64 = resid.iter().map(|r| r.norm_sqr()).sum();
        if r2 <= self.eta2 {
            return w.clone();
        }
        let coeffs: DVector<C64> = if self.eta2 == 0.0 {
            DVector::from_iterator(self.sigma.len(), (0..self.sigma.len()).map(|i| self.b[i] / self.sigma[i]))
        } else {
            let mu = self.multiplier(&resid);
            DVector::from_iterator(
                self.sigma.len(),
                (0..self.sigma.len()).map(|i| {
                    let s = self.sigma[i];
                    (c0[i] + self.b[i] * (mu * s)) / (1.0 + mu * s * s)
                }),
            )
        };
        w + &self.v * (coeffs - c0)
    }

    /// Root in `μ > 0` of `Σ |r_i|²/(1 + μσ_i²)² = η²`, by bisection on `log μ`.
    fn multiplier(&self, resid: &[C64]) -> f64 {
        let f = |mu: f64| -> f64 {
            resid
                .iter()
                .zip(&self.sigma)
                .map(|(r, s)| r.norm_sqr() / (1.0 + mu * s * s).powi(2))
                .sum::<f64>()
                - self.eta2
        };
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        if f(1.0) > 0.0 {
            while f(hi) > 0.0 && hi < 1e300 {
                lo = hi;
                hi *= 16.0;
            }
        } else {
            while f(lo) <= 0.0 && lo > 1e-300 {
                hi = lo;
                lo /= 16.0;
            }
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo < 1.0 + 1e-15 {
                break;
            }
        }
        hi
    }
}
