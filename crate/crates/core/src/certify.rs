//! Exhaustive certification of ω-RIP, ω-NSP and the kernel part of ω-robust-NSP.
//!
//! Every "for all admissible S" is an enumeration. Each of the measured
//! quantities is monotone under enlarging `S`, so only supports with no
//! admissible proper superset (maximal supports) are actually solved; the
//! others are counted but never dominate.
//!
//! For real kernels the NSP inner problem `max ‖v_S‖_{ω,1} s.t. ‖v_{S^c}‖_{ω,1} ≤ 1`
//! is solved exactly by one LP per sign pattern on `S`. Complex kernels get a
//! rigorous bracket instead: a lower bound from an explicit kernel vector found
//! by phase alternation, and an upper bound from cutting-plane relaxations of
//! the modulus.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::lp::{self, LpOutcome};
use crate::solver::{solve_weighted_bp, SolverOptions};
use crate::sparsity::{
    budget_limit, check_len, enumerate_admissible_supports, restrict, weighted_l1_on, weighted_l1_unchecked,
    SparseModel, SparsityBudget, Support, WeightProfile,
};

/// Default margin below 1 required before the NSP is declared to hold.
pub const CERTIFICATION_MARGIN: f64 = 1e-9;

const SUPPORT_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Nsp,
    Rip,
    RobustNsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Satisfied,
    Violated,
    /// The computed bracket straddles the threshold.
    Undecided,
    /// Robust NSP: the kernel restriction holds exactly and the off-kernel
    /// search found no violation.
    CertifiedOnKernel,
    /// Robust NSP: the kernel restriction holds exactly; no off-kernel search ran.
    UndecidedOffKernel,
}

/// A finite or infinite measured constant; serialises `∞` as the string "inf".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Constant(pub f64);

impl Serialize for Constant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Constant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Constant(v)),
            Raw::Text(t) if t == "inf" => Ok(Constant(f64::INFINITY)),
            Raw::Text(t) if t == "-inf" => Ok(Constant(f64::NEG_INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad constant {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub support: Support,
    pub vector: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub property: Property,
    pub order: f64,
    pub model: SparseModel,
    /// Measured constant: `γ` for NSP, `δ` for RIP, the kernel `ρ` for robust NSP.
    pub constant: Constant,
    /// Upper end of the bracket when the constant is not computed exactly.
    pub upper_bound: Constant,
    pub exact: bool,
    pub threshold: f64,
    pub satisfied: bool,
    pub status: Status,
    pub witness: Option<Witness>,
    pub attaining_support: Option<Support>,
    pub supports_examined: usize,
    pub supports_solved: usize,
    /// `(ρ, γ)` tested for the robust property.
    pub robust_parameters: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub cap: usize,
    pub margin: f64,
    pub rank_tol: f64,
    /// Cutting-plane rounds allowed per complex LP.
    pub cut_rounds: usize,
    pub alternation_rounds: usize,
    pub seed: u64,
    /// Random restarts per support in the off-kernel robust search; 0 disables it.
    pub robust_search_starts: usize,
    pub robust_search_iterations: usize,
    /// Maximum vertex count for the exact real robust kernel check per support.
    pub vertex_budget: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            cap: crate::sparsity::enumeration_cap(),
            margin: CERTIFICATION_MARGIN,
            rank_tol: 1e-10,
            cut_rounds: 12,
            alternation_rounds: 30,
            seed: 0x5eed,
            robust_search_starts: 4,
            robust_search_iterations: 300,
            vertex_budget: 200_000,
        }
    }
}

/// Runs `map` over every maximal admissible support in parallel chunks and
/// folds results in enumeration order. Returns the fold and the admissible count.
fn scan_maximal<T, A, M, F>(
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    cap: usize,
    init: A,
    map: M,
    mut fold: F,
) -> Result<(A, usize, usize)>
where
    T: Send,
    M: Fn(&Support) -> Result<T> + Sync,
    F: FnMut(A, Support, T) -> A,
{
    let n = w.len();
    let limit = budget_limit(s.value());
    let measures: Vec<f64> = (0..n).map(|i| model.index_measure(w, i)).collect();
    let mut supports = enumerate_admissible_supports(w, model, s, cap)?;
    let mut acc = init;
    let mut examined = 0;
    let mut solved = 0;
    loop {
        let mut chunk = Vec::with_capacity(SUPPORT_CHUNK);
        for sup in supports.by_ref() {
            examined += 1;
            let used: f64 = sup.iter().map(|i| measures[i]).sum();
            let mask = sup.mask(n);
            let maximal = (0..n).all(|j| mask[j] || used + measures[j] > limit);
            if maximal {
                chunk.push(sup);
                if chunk.len() == SUPPORT_CHUNK {
                    break;
                }
            }
        }
        if chunk.is_empty() {
            break;
        }
        solved += chunk.len();
        let results: Vec<Result<T>> = chunk.par_iter().map(&map).collect();
        for (sup, r) in chunk.into_iter().zip(results) {
            acc = fold(acc, sup, r?);
        }
    }
    Ok((acc, examined, solved))
}

fn check_matrix(a: &CMatrix, w: &WeightProfile) -> Result<()> {
    check_len("matrix columns", w.len(), a.ncols())?;
    if a.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- RIP

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RipMeasurement {
    pub delta: f64,
    pub support: Option<Support>,
    /// Unit vector on `support` attaining `|‖Ax‖² − 1| = δ`.
    pub vector: Option<Vec<C64>>,
    pub supports_examined: usize,
    pub supports_solved: usize,
}

fn rip_on_support(a: &CMatrix, sup: &Support) -> f64 {
    let sub = linalg::columns(a, sup);
    let sv = linalg::singular_values(&sub);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if sup.len() > a.nrows() { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    (smax * smax - 1.0).max(1.0 - smin * smin)
}

/// `δ_{ω,s} = max_S max(σ_max(A_S)² − 1, 1 − σ_min(A_S)²)`.
pub fn rip_constant(
    a: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    opts: &CertifyOptions,
) -> Result<RipMeasurement> {
    check_matrix(a, w)?;
    let ((best, sup), examined, solved) = scan_maximal(
        w,
        model,
        s,
        opts.cap,
        (f64::NEG_INFINITY, None::<Support>),
        |sup| Ok(rip_on_support(a, sup)),
        |(bd, bs), sup, d| if d > bd { (d, Some(sup)) } else { (bd, bs) },
    )?;
    let vector = sup.as_ref().map(|sup| rip_extremal_vector(a, sup));
    Ok(RipMeasurement {
        delta: best.max(0.0),
        support: sup,
        vector,
        supports_examined: examined,
        supports_solved: solved,
    })
}

fn rip_extremal_vector(a: &CMatrix, sup: &Support) -> Vec<C64> {
    let n = a.ncols();
    let sub = linalg::columns(a, sup);
    let k = sub.ncols();
    // Pad rows so the SVD yields a full set of right singular vectors.
    let mut padded = CMatrix::zeros(sub.nrows().max(k), k);
    padded.view_mut((0, 0), (sub.nrows(), k)).copy_from(&sub);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let (imax, imin) = (sv.imax(), sv.imin());
    let upper = sv[imax] * sv[imax] - 1.0;
    let lower = 1.0 - sv[imin] * sv[imin];
    let row = if upper >= lower { imax } else { imin };
    let mut x = vec![c(0.0, 0.0); n];
    for (j, i) in sup.iter().enumerate() {
        x[i] = vt[(row, j)].conj();
    }
    x
}

/// RIP report with `satisfied = δ < threshold`.
pub fn certify_rip(
    a: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    threshold: f64,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    let m = rip_constant(a, w, model, s, opts)?;
    let satisfied = m.delta < threshold;
    let witness = (!satisfied).then(|| Witness {
        support: m.support.clone().unwrap_or_default(),
        vector: m.vector.clone().unwrap_or_default(),
    });
    Ok(CertificationReport {
        property: Property::Rip,
        order: s.value(),
        model,
        constant: Constant(m.delta),
        upper_bound: Constant(m.delta),
        exact: true,
        threshold,
        satisfied,
        status: if satisfied { Status::Satisfied } else { Status::Violated },
        witness,
        attaining_support: m.support,
        supports_examined: m.supports_examined,
        supports_solved: m.supports_solved,
        robust_parameters: None,
    })
}

// ---------------------------------------------------------------- NSP

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NspMeasurement {
    /// Largest ratio attained by an explicit kernel vector (exact for real kernels).
    pub gamma: f64,
    /// Rigorous upper bound on the constant.
    pub upper: f64,
    pub exact: bool,
    pub kernel_dim: usize,
    /// Kernel vector and support attaining `gamma`.
    pub witness: Option<Witness>,
    pub supports_examined: usize,
    pub supports_solved: usize,
}

impl NspMeasurement {
    pub fn status(&self, margin: f64) -> Status {
        if self.upper < 1.0 - margin {
            Status::Satisfied
        } else if self.gamma >= 1.0 - margin {
            Status::Violated
        } else {
            Status::Undecided
        }
    }
}

/// `‖v_S‖_{ω,1} / ‖v_{S^c}‖_{ω,1}`, infinite when the denominator vanishes.
pub fn nsp_ratio(v: &[C64], w: &WeightProfile, sup: &Support) -> f64 {
    let ws = w.as_slice();
    let inside = weighted_l1_on(v, ws, sup.iter());
    let outside = weighted_l1_on(v, ws, sup.complement(v.len()).iter());
    if outside <= 1e-14 * (inside + outside) {
        if inside > 0.0 { f64::INFINITY } else { 0.0 }
    } else {
        inside / outside
    }
}

struct SupportNsp {
    lower: f64,
    upper: f64,
    vector: Vec<C64>,
}

/// Kernel basis split into the rows on `S` and on `S^c`.
struct KernelSplit {
    on: CMatrix,
    off: CMatrix,
    w_on: Vec<f64>,
    w_off: Vec<f64>,
}

impl KernelSplit {
    fn new(basis: &CMatrix, w: &WeightProfile, sup: &Support) -> (Self, Support) {
        let comp = sup.complement(basis.nrows());
        let ws = w.as_slice();
        (
            Self {
                on: basis.select_rows(sup.indices()),
                off: basis.select_rows(comp.indices()),
                w_on: sup.iter().map(|i| ws[i]).collect(),
                w_off: comp.iter().map(|i| ws[i]).collect(),
            },
            comp,
        )
    }
}

/// Kernel coefficients `c ≠ 0` with `B_{S^c} c = 0`, if any.
fn off_support_kernel(split: &KernelSplit, tol: f64) -> Option<CVector> {
    if split.off.nrows() == 0 {
        let mut e = CVector::zeros(split.on.ncols());
        e[0] = c(1.0, 0.0);
        return Some(e);
    }
    let ns = linalg::null_space_basis(&split.off, tol);
    (ns.ncols() > 0).then(|| ns.column(0).into_owned())
}

fn nsp_on_support(basis: &CMatrix, real: bool, w: &WeightProfile, sup: &Support, opts: &CertifyOptions) -> Result<SupportNsp> {
    let (split, _) = KernelSplit::new(basis, w, sup);
    if let Some(coef) = off_support_kernel(&split, opts.rank_tol) {
        let v = basis * coef;
        return Ok(SupportNsp { lower: f64::INFINITY, upper: f64::INFINITY, vector: v.as_slice().to_vec() });
    }
    let best = if real {
        real_nsp_support(&split)?
    } else {
        complex_nsp_support(&split, opts)?
    };
    let v = basis * &best.1;
    let ratio = nsp_ratio(v.as_slice(), w, sup);
    let upper = if real { best.0.max(ratio) } else { best.0 };
    Ok(SupportNsp { lower: ratio, upper: upper.max(ratio), vector: v.as_slice().to_vec() })
}

/// Exact real inner problem: one LP per sign pattern on `S` (first sign fixed).
fn real_nsp_support(split: &KernelSplit) -> Result<(f64, CVector)> {
    let bs = linalg::real_part(&split.on);
    let bc = linalg::real_part(&split.off);
    let (k, d) = bs.shape();
    let patterns = 1usize << (k - 1);
    let mut best = (f64::NEG_INFINITY, CVector::zeros(d));
    for p in 0..patterns {
        let mut g = vec![0.0; d];
        for i in 0..k {
            let sign = if i > 0 && (p >> (i - 1)) & 1 == 1 { -1.0 } else { 1.0 };
            for j in 0..d {
                g[j] += split.w_on[i] * sign * bs[(i, j)];
            }
        }
        let (value, coef) = real_l1_ball_lp(&g, &bc, &split.w_off)?;
        if value > best.0 {
            best = (value, coef.map(|v| c(v, 0.0)));
        }
    }
    Ok(best)
}

/// `max gᵀc s.t. Σ_j ω_j |B_j c| ≤ 1` as an LP in `(c⁺, c⁻, t)`.
fn real_l1_ball_lp(g: &[f64], b: &DMatrix<f64>, w: &[f64]) -> Result<(f64, nalgebra::DVector<f64>)> {
    let (r, d) = b.shape();
    let nv = 2 * d + r;
    let mut a = DMatrix::<f64>::zeros(2 * r + 1, nv);
    for j in 0..r {
        for k in 0..d {
            a[(2 * j, k)] = b[(j, k)];
            a[(2 * j, d + k)] = -b[(j, k)];
            a[(2 * j + 1, k)] = -b[(j, k)];
            a[(2 * j + 1, d + k)] = b[(j, k)];
        }
        a[(2 * j, 2 * d + j)] = -1.0;
        a[(2 * j + 1, 2 * d + j)] = -1.0;
        a[(2 * r, 2 * d + j)] = w[j];
    }
    let mut obj = vec![0.0; nv];
    for k in 0..d {
        obj[k] = g[k];
        obj[d + k] = -g[k];
    }
    let mut rhs = vec![0.0; 2 * r + 1];
    rhs[2 * r] = 1.0;
    match lp::maximize(&obj, &a, &rhs) {
        LpOutcome::Optimal { x, value } => {
            let coef = nalgebra::DVector::from_iterator(d, (0..d).map(|k| x[k] - x[d + k]));
            Ok((value, coef))
        }
        LpOutcome::Unbounded => Ok((f64::INFINITY, nalgebra::DVector::zeros(d))),
        LpOutcome::IterationLimit => Err(Error::Numerical("simplex iteration limit reached".into())),
    }
}

/// `max Re Σ_i conj(g_i)(B_S c)_i` over complex `c` subject to
/// `Σ_j ω_j t_j ≤ 1`, where each `t_j` is only required to dominate
/// `Re(e^{-iθ}(B_{S^c}c)_j)` for a finite set of cut angles `θ`. Every such
/// relaxation contains the true feasible set, so each round's value is an upper
/// bound. Cuts at the phase of each violated entry are added until the LP point
/// is feasible, its value is within `1e-7` of the rescaled feasible value, or the
/// round limit is hit.
fn complex_cut_lp(g: &[C64], split: &KernelSplit, max_rounds: usize) -> Result<(f64, CVector)> {
    use std::f64::consts::FRAC_PI_2;
    let d = split.on.ncols();
    let r = split.off.nrows();
    let nv = 4 * d + r;
    let rows_b: Vec<Vec<C64>> = (0..r).map(|j| split.off.row(j).iter().copied().collect()).collect();
    let mut cuts: Vec<(usize, f64)> = (0..r).flat_map(|j| (0..4).map(move |q| (j, q as f64 * FRAC_PI_2))).collect();

    // Objective: Re(conj(g_i) v_i) = Re(g_i)Re(v_i) + Im(g_i)Im(v_i).
    let mut obj = vec![0.0; nv];
    for (i, gi) in g.iter().enumerate() {
        for k in 0..d {
            let b = split.on[(i, k)];
            let p = gi.re * b.re + gi.im * b.im;
            let q = gi.im * b.re - gi.re * b.im;
            obj[k] += p;
            obj[d + k] -= p;
            obj[2 * d + k] += q;
            obj[3 * d + k] -= q;
        }
    }
    let mut last = None;
    for _ in 0..max_rounds.max(1) {
        let rows = cuts.len() + 1;
        let mut a = DMatrix::<f64>::zeros(rows, nv);
        for (row, &(j, theta)) in cuts.iter().enumerate() {
            let (s, cth) = theta.sin_cos();
            for k in 0..d {
                let bjk = rows_b[j][k];
                let p = cth * bjk.re + s * bjk.im;
                let q = s * bjk.re - cth * bjk.im;
                a[(row, k)] = p;
                a[(row, d + k)] = -p;
                a[(row, 2 * d + k)] = q;
                a[(row, 3 * d + k)] = -q;
            }
            a[(row, 4 * d + j)] = -1.0;
        }
        for j in 0..r {
            a[(rows - 1, 4 * d + j)] = split.w_off[j];
        }
        let mut rhs = vec![0.0; rows];
        rhs[rows - 1] = 1.0;
        let (value, x) = match lp::maximize(&obj, &a, &rhs) {
            LpOutcome::Optimal { x, value } => (value, x),
            LpOutcome::Unbounded => return Ok((f64::INFINITY, CVector::zeros(d))),
            LpOutcome::IterationLimit => return Err(Error::Numerical("simplex iteration limit reached".into())),
        };
        let coef = CVector::from_iterator(d, (0..d).map(|k| c(x[k] - x[d + k], x[2 * d + k] - x[3 * d + k])));
        let off = &split.off * &coef;
        // Rescaling the LP point onto the true constraint gives a feasible value.
        let true_norm = weighted_l1_unchecked(off.as_slice(), &split.w_off);
        let feasible = if true_norm > 0.0 { value / true_norm } else { value };
        let mut added = false;
        for j in 0..r {
            let t = x[4 * d + j];
            if off[j].norm() > t * (1.0 + 1e-10) + 1e-15 {
                cuts.push((j, off[j].arg()));
                added = true;
            }
        }
        last = Some((value, coef));
        if !added || value - feasible <= CUT_GAP * value.abs() {
            break;
        }
    }
    Ok(last.expect("at least one round"))
}

const CUT_GAP: f64 = 1e-7;

// Alternation only needs a good kernel vector; its ratio is recomputed exactly.
const ALTERNATION_CUT_ROUNDS: usize = 4;

fn unit_phase(z: C64) -> C64 {
    let r = z.norm();
    if r > 0.0 { z / r } else { c(1.0, 0.0) }
}

fn split_ratio(split: &KernelSplit, coef: &CVector) -> f64 {
    let on = &split.on * coef;
    let off = &split.off * coef;
    let num = weighted_l1_unchecked(on.as_slice(), &split.w_on);
    let den = weighted_l1_unchecked(off.as_slice(), &split.w_off);
    if den <= 0.0 { if num > 0.0 { f64::INFINITY } else { 0.0 } } else { num / den }
}

/// Bracket for one support with a complex kernel.
fn complex_nsp_support(split: &KernelSplit, opts: &CertifyOptions) -> Result<(f64, CVector)> {
    let k = split.on.nrows();
    let mut upper = 0.0;
    let mut starts = Vec::with_capacity(k);
    for i in 0..k {
        let mut g = vec![c(0.0, 0.0); k];
        g[i] = c(1.0, 0.0);
        let (value, coef) = complex_cut_lp(&g, split, opts.cut_rounds)?;
        upper += split.w_on[i] * value;
        starts.push(coef);
    }
    let mut best = (f64::NEG_INFINITY, CVector::zeros(split.on.ncols()));
    for start in starts {
        let mut coef = start;
        let mut ratio = split_ratio(split, &coef);
        for _ in 0..opts.alternation_rounds {
            let v = &split.on * &coef;
            let g: Vec<C64> = (0..k).map(|i| unit_phase(v[i]) * split.w_on[i]).collect();
            let (_, next) = complex_cut_lp(&g, split, ALTERNATION_CUT_ROUNDS)?;
            let next_ratio = split_ratio(split, &next);
            if next_ratio <= ratio * (1.0 + 1e-12) {
                break;
            }
            coef = next;
            ratio = next_ratio;
        }
        if ratio > best.0 {
            best = (ratio, coef);
        }
    }
    // Report the upper bound alongside the best coefficients; the caller
    // recomputes the lower bound from the vector itself.
    Ok((upper.max(best.0), best.1))
}

/// Smallest `γ` with `‖v_S‖_{ω,1} ≤ γ‖v_{S^c}‖_{ω,1}` over `ker A` and admissible `S`.
pub fn nsp_constant(
    a: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    opts: &CertifyOptions,
) -> Result<NspMeasurement> {
    check_matrix(a, w)?;
    let basis = linalg::null_space_basis(a, opts.rank_tol);
    nsp_constant_of_kernel(&basis, w, model, s, opts)
}

/// As [`nsp_constant`], given an orthonormal kernel basis directly.
pub fn nsp_constant_of_kernel(
    basis: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    opts: &CertifyOptions,
) -> Result<NspMeasurement> {
    check_len("kernel basis rows", w.len(), basis.nrows())?;
    let d = basis.ncols();
    if d == 0 {
        // Still enumerate so the cap is enforced uniformly.
        let count = enumerate_admissible_supports(w, model, s, opts.cap)?.count();
        return Ok(NspMeasurement {
            gamma: 0.0,
            upper: 0.0,
            exact: true,
            kernel_dim: 0,
            witness: None,
            supports_examined: count,
            supports_solved: 0,
        });
    }
    let real = linalg::is_real(basis);
    struct Acc {
        lower: f64,
        upper: f64,
        witness: Option<Witness>,
    }
    let init = Acc { lower: f64::NEG_INFINITY, upper: 0.0, witness: None };
    let (acc, examined, solved) = scan_maximal(
        w,
        model,
        s,
        opts.cap,
        init,
        |sup| nsp_on_support(basis, real, w, sup, opts),
        |mut acc, sup, r| {
            acc.upper = acc.upper.max(r.upper);
            if r.lower > acc.lower {
                acc.lower = r.lower;
                acc.witness = Some(Witness { support: sup, vector: r.vector });
            }
            acc
        },
    )?;
    let lower = acc.lower.max(0.0);
    let exact = real || acc.upper - lower <= 1e-8 * acc.upper.max(1.0) || lower.is_infinite();
    let upper = if exact { lower } else { acc.upper };
    Ok(NspMeasurement {
        gamma: lower,
        upper,
        exact,
        kernel_dim: d,
        witness: acc.witness,
        supports_examined: examined,
        supports_solved: solved,
    })
}

pub fn certify_nsp(
    a: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    let m = nsp_constant(a, w, model, s, opts)?;
    Ok(nsp_report(m, model, s, opts.margin))
}

pub fn nsp_report(m: NspMeasurement, model: SparseModel, s: SparsityBudget, margin: f64) -> CertificationReport {
    let status = m.status(margin);
    let attaining = m.witness.as_ref().map(|wit| wit.support.clone());
    CertificationReport {
        property: Property::Nsp,
        order: s.value(),
        model,
        constant: Constant(m.gamma),
        upper_bound: Constant(m.upper),
        exact: m.exact,
        threshold: 1.0 - margin,
        satisfied: status == Status::Satisfied,
        status,
        witness: if status == Status::Violated { m.witness } else { None },
        attaining_support: attaining,
        supports_examined: m.supports_examined,
        supports_solved: m.supports_solved,
        robust_parameters: None,
    }
}

/// Replays an NSP violation: `v ∈ ker A` (to `tol`) and `‖v_S‖ ≥ (1 − margin)‖v_{S^c}‖`.
pub fn replay_nsp_witness(a: &CMatrix, w: &WeightProfile, wit: &Witness, margin: f64, tol: f64) -> bool {
    let v = linalg::to_cvector(&wit.vector);
    let scale = v.norm();
    if scale == 0.0 {
        return false;
    }
    let in_kernel = (a * &v).norm() <= tol * scale * linalg::spectral_norm(a).max(1.0);
    in_kernel && nsp_ratio(&wit.vector, w, &wit.support) >= 1.0 - margin
}

// ---------------------------------------------------------------- robust NSP

/// Robust inequality slack `‖v_S‖₂ − (ρ/√s)‖v_{S^c}‖_{ω,1} − γ‖Av‖₂`; positive means violated.
pub fn robust_nsp_excess(a: &CMatrix, w: &WeightProfile, s: f64, rho: f64, gamma: f64, v: &[C64], sup: &Support) -> f64 {
    let on: f64 = sup.iter().map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
    let off = weighted_l1_on(v, w.as_slice(), sup.complement(v.len()).iter());
    let av = (a * linalg::to_cvector(v)).norm();
    on - rho / s.sqrt() * off - gamma * av
}

struct SupportRobust {
    /// `max ‖v_S‖₂ / ‖v_{S^c}‖_{ω,1}` on the kernel.
    kernel_ratio: f64,
    kernel_exact: bool,
    kernel_vector: Vec<C64>,
    /// Best off-kernel excess (normalised to `‖v‖₂ = 1`).
    search_excess: f64,
    search_vector: Vec<C64>,
}

fn robust_kernel_support(basis: &CMatrix, real: bool, w: &WeightProfile, sup: &Support, opts: &CertifyOptions) -> Result<(f64, bool, Vec<C64>)> {
    let n = basis.nrows();
    if basis.ncols() == 0 {
        return Ok((0.0, true, vec![c(0.0, 0.0); n]));
    }
    let (split, _) = KernelSplit::new(basis, w, sup);
    if let Some(coef) = off_support_kernel(&split, opts.rank_tol) {
        let v = basis * coef;
        return Ok((f64::INFINITY, true, v.as_slice().to_vec()));
    }
    let ratio_of = |coef: &CVector| -> f64 {
        let on = (&split.on * coef).norm();
        let off = weighted_l1_unchecked((&split.off * coef).as_slice(), &split.w_off);
        if off <= 0.0 { f64::INFINITY } else { on / off }
    };
    let d = basis.ncols();
    let r = split.off.nrows();
    if real && binomial(r, d - 1) <= opts.vertex_budget as f64 {
        // The maximum of a convex function over the polytope is at a vertex; the
        // vertices lie on lines cut out by d−1 of the hyperplanes (B_{S^c})_j c = 0.
        let mut best = (0.0, CVector::zeros(d));
        let mut idx: Vec<usize> = (0..d - 1).collect();
        loop {
            let coef = if d == 1 {
                Some(CVector::from_element(1, c(1.0, 0.0)))
            } else {
                let rows = split.off.select_rows(&idx);
                let ns = linalg::null_space_basis(&rows, opts.rank_tol);
                (ns.ncols() == 1).then(|| ns.column(0).into_owned())
            };
            if let Some(coef) = coef {
                let ratio = ratio_of(&coef);
                if ratio > best.0 {
                    best = (ratio, coef);
                }
            }
            if d == 1 || !next_combination(&mut idx, r) {
                break;
            }
        }
        let v = basis * &best.1;
        return Ok((best.0, true, v.as_slice().to_vec()));
    }
    // Alternation: ‖v_S‖₂ = max over unit u of Re⟨u, v_S⟩.
    let mut best = (0.0, CVector::zeros(d));
    for i in 0..split.on.nrows() {
        let mut g = vec![c(0.0, 0.0); split.on.nrows()];
        g[i] = c(1.0, 0.0);
        let (_, mut coef) = complex_cut_lp(&g, &split, ALTERNATION_CUT_ROUNDS)?;
        let mut ratio = ratio_of(&coef);
        for _ in 0..opts.alternation_rounds {
            let on = &split.on * &coef;
            let norm = on.norm();
            if norm == 0.0 {
                break;
            }
            let g: Vec<C64> = on.iter().map(|z| z / norm).collect();
            let (_, next) = complex_cut_lp(&g, &split, ALTERNATION_CUT_ROUNDS)?;
            let nr = ratio_of(&next);
            if nr <= ratio * (1.0 + 1e-12) {
                break;
            }
            coef = next;
            ratio = nr;
        }
        if ratio > best.0 {
            best = (ratio, coef);
        }
    }
    let v = basis * &best.1;
    Ok((best.0, false, v.as_slice().to_vec()))
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Projected ascent of the robust excess on the unit sphere.
#[allow(clippy::too_many_arguments)]
fn robust_search_support(
    a: &CMatrix,
    w: &WeightProfile,
    s: f64,
    rho: f64,
    gamma: f64,
    sup: &Support,
    opts: &CertifyOptions,
    seed: u64,
) -> (f64, Vec<C64>) {
    let n = a.ncols();
    let complex = !linalg::is_real(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<CVector> = Vec::new();
    // Least-stretched direction on S: makes ‖Av‖ small with all mass on S.
    let sub = linalg::columns(a, sup);
    let mut padded = CMatrix::zeros(sub.nrows().max(sub.ncols()), sub.ncols());
    padded.view_mut((0, 0), sub.shape()).copy_from(&sub);
    let svd = padded.svd(false, true);
    if let Some(vt) = svd.v_t {
        let row = svd.singular_values.imin();
        let mut v = CVector::zeros(n);
        for (j, i) in sup.iter().enumerate() {
            v[i] = vt[(row, j)].conj();
        }
        starts.push(v);
    }
    for _ in 0..opts.robust_search_starts {
        let v = CVector::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
            c(re, im)
        });
        starts.push(v);
    }
    let mask = sup.mask(n);
    let ws = w.as_slice();
    let coef = rho / s.sqrt();
    let mut best = (f64::NEG_INFINITY, vec![c(0.0, 0.0); n]);
    for mut v in starts {
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        v /= c(nv, 0.0);
        for it in 0..=opts.robust_search_iterations {
            let f = robust_nsp_excess(a, w, s, rho, gamma, v.as_slice(), sup);
            if f > best.0 {
                best = (f, v.as_slice().to_vec());
            }
            if it == opts.robust_search_iterations {
                break;
            }
            let on_norm: f64 = (0..n).filter(|&i| mask[i]).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
            let av = a * &v;
            let av_norm = av.norm();
            let back = a.adjoint() * &av;
            let mut g = CVector::zeros(n);
            for i in 0..n {
                if mask[i] {
                    if on_norm > 0.0 {
                        g[i] += v[i] / on_norm;
                    }
                } else if v[i].norm() > 0.0 {
                    g[i] -= unit_phase(v[i]) * (coef * ws[i]);
                }
                if av_norm > 0.0 {
                    g[i] -= back[i] * (gamma / av_norm);
                }
            }
            let step = 0.2 / (1.0 + it as f64).sqrt();
            v += g * c(step, 0.0);
            let nv = v.norm();
            if nv == 0.0 {
                break;
            }
            v /= c(nv, 0.0);
        }
    }
    best
}

/// Kernel-restricted ω-robust-NSP check (weighted-cardinality model) plus an
/// off-kernel falsification search.
pub fn check_robust_nsp_kernel(
    a: &CMatrix,
    w: &WeightProfile,
    s: SparsityBudget,
    rho: f64,
    gamma: f64,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    check_matrix(a, w)?;
    if !(rho >= 0.0 && gamma >= 0.0) {
        return Err(Error::InvalidArgument("ρ and γ must be nonnegative".into()));
    }
    let model = SparseModel::WeightedCardinality;
    let basis = linalg::null_space_basis(a, opts.rank_tol);
    let real = linalg::is_real(&basis) && linalg::is_real(a);
    let sv = s.value();
    struct Acc {
        kernel: (f64, Option<Witness>),
        exact: bool,
        search: (f64, Option<Witness>),
    }
    let init = Acc { kernel: (0.0, None), exact: true, search: (f64::NEG_INFINITY, None) };
    let (acc, examined, solved) = scan_maximal(
        w,
        model,
        s,
        opts.cap,
        init,
        |sup| {
            let (kernel_ratio, kernel_exact, kernel_vector) = robust_kernel_support(&basis, real, w, sup, opts)?;
            let (search_excess, search_vector) = if opts.robust_search_starts > 0 {
                let seed = opts.seed ^ support_hash(sup);
                robust_search_support(a, w, sv, rho, gamma, sup, opts, seed)
            } else {
                (f64::NEG_INFINITY, Vec::new())
            };
            Ok(SupportRobust { kernel_ratio, kernel_exact, kernel_vector, search_excess, search_vector })
        },
        |mut acc, sup, r| {
            acc.exact &= r.kernel_exact;
            if r.kernel_ratio > acc.kernel.0 || acc.kernel.1.is_none() {
                acc.kernel = (r.kernel_ratio, Some(Witness { support: sup.clone(), vector: r.kernel_vector }));
            }
            if r.search_excess > acc.search.0 {
                acc.search = (r.search_excess, Some(Witness { support: sup, vector: r.search_vector }));
            }
            acc
        },
    )?;
    let limit = rho / sv.sqrt();
    let kernel_violated = acc.kernel.0 > limit * (1.0 + opts.margin) + opts.margin;
    let search_violated = acc.search.0 > opts.margin;
    let (status, witness) = if kernel_violated {
        (Status::Violated, acc.kernel.1.clone())
    } else if search_violated {
        (Status::Violated, acc.search.1.clone())
    } else if !acc.exact {
        (Status::Undecided, None)
    } else if opts.robust_search_starts == 0 {
        (Status::UndecidedOffKernel, None)
    } else {
        (Status::CertifiedOnKernel, None)
    };
    let kernel_rho = acc.kernel.0 * sv.sqrt();
    Ok(CertificationReport {
        property: Property::RobustNsp,
        order: sv,
        model,
        constant: Constant(kernel_rho),
        upper_bound: Constant(if acc.exact { kernel_rho } else { f64::INFINITY }),
        exact: acc.exact,
        threshold: rho,
        satisfied: status != Status::Violated,
        status,
        witness,
        attaining_support: acc.kernel.1.map(|w| w.support),
        supports_examined: examined,
        supports_solved: solved,
        robust_parameters: Some((rho, gamma)),
    })
}

fn support_hash(sup: &Support) -> u64 {
    sup.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, i| (h ^ i as u64).wrapping_mul(0x100_0000_01b3))
}

// ---------------------------------------------------------------- disjoint pairs

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointCheck {
    /// `max σ_max(A_S* A_T)` over disjoint `|S| ≤ s`, `|T| ≤ t`.
    pub max_ratio: f64,
    pub delta: f64,
    /// `max(0, max_ratio − δ_{s+t})`.
    pub violation: f64,
    pub pair: Option<(Support, Support)>,
}

/// Checks `|⟨Au, Av⟩| ≤ δ_{s+t}‖u‖‖v‖` for disjointly supported `u`, `v`
/// (cardinality model).
pub fn disjoint_inner_product_bound_check(
    a: &CMatrix,
    w: &WeightProfile,
    s: usize,
    t: usize,
    opts: &CertifyOptions,
) -> Result<DisjointCheck> {
    check_matrix(a, w)?;
    let n = a.ncols();
    if n > opts.cap {
        return Err(Error::CapExceeded { dimension: n, cap: opts.cap });
    }
    if s == 0 || t == 0 {
        return Err(Error::InvalidArgument("orders must be positive".into()));
    }
    let order = SparsityBudget::new((s + t) as f64, SparseModel::Cardinality)?;
    let delta = rip_constant(a, w, SparseModel::Cardinality, order, opts)?.delta;
    let s_eff = s.min(n.saturating_sub(1));
    let mut first: Vec<usize> = (0..s_eff).collect();
    let mut pairs = Vec::new();
    loop {
        let ssup = Support::from_sorted(first.clone());
        let comp = ssup.complement(n);
        let t_eff = t.min(comp.len());
        let mut second: Vec<usize> = (0..t_eff).collect();
        loop {
            let tsup = Support::from_sorted(second.iter().map(|&k| comp.indices()[k]).collect());
            pairs.push((ssup.clone(), tsup));
            if !next_combination(&mut second, comp.len()) {
                break;
            }
        }
        if !next_combination(&mut first, n) {
            break;
        }
    }
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|(p, q)| {
            let g = linalg::columns(a, p).adjoint() * linalg::columns(a, q);
            linalg::spectral_norm(&g)
        })
        .collect();
    let mut best = (0.0, None);
    for (v, pair) in values.into_iter().zip(pairs) {
        if v > best.0 || best.1.is_none() {
            best = (v, Some(pair));
        }
    }
    Ok(DisjointCheck { max_ratio: best.0, delta, violation: (best.0 - delta).max(0.0), pair: best.1 })
}

// ---------------------------------------------------------------- equivalence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Competitor {
    pub support: Support,
    /// `x = v_S`.
    pub x: Vec<C64>,
    /// `z = −v_{S^c}`, with `Az = Ax`.
    pub z: Vec<C64>,
    pub x_norm: f64,
    pub z_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceVerdict {
    pub nsp: NspMeasurement,
    pub status: Status,
    pub supports_tested: usize,
    pub recoveries: usize,
    pub failures: usize,
    pub worst_relative_error: f64,
    pub competitor: Option<Competitor>,
    /// NSP verdict and recovery behaviour agree.
    pub agrees: bool,
}

/// Relative ℓ2 error allowed for a planted recovery to count as exact.
pub const RECOVERY_TOL: f64 = 1e-6;

/// Cross-checks the NSP verdict against recovery: when `γ < 1` every admissible
/// support is planted `trials` times (plus the witness pattern) and must be
/// recovered; when `γ ≥ 1` the witness yields an explicit competitor.
pub fn exact_recovery_equivalence_test(
    a: &CMatrix,
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    trials: usize,
    opts: &CertifyOptions,
    solver: &SolverOptions,
) -> Result<EquivalenceVerdict> {
    let nsp = nsp_constant(a, w, model, s, opts)?;
    let status = nsp.status(opts.margin);
    let n = a.ncols();
    match status {
        Status::Satisfied => {
            let supports: Vec<Support> = enumerate_admissible_supports(w, model, s, opts.cap)?.collect();
            let complex = !linalg::is_real(a);
            let witness = nsp.witness.clone();
            let outcomes: Vec<Result<Vec<f64>>> = supports
                .par_iter()
                .enumerate()
                .map(|(k, sup)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
                    let mut planted: Vec<Vec<C64>> = Vec::new();
                    for _ in 0..trials {
                        let mut x = vec![c(0.0, 0.0); n];
                        for i in sup.iter() {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
                            // Keep entries away from zero so the support is genuine.
                            let z = c(re, im);
                            x[i] = z + unit_phase(z) * 0.1;
                        }
                        planted.push(x);
                    }
                    // Sign pattern taken from the extremal kernel vector.
                    if let Some(wit) = witness.as_ref() {
                        if wit.support == *sup {
                            planted.push(restrict(&wit.vector, sup));
                        }
                    }
                    let mut errs = Vec::with_capacity(planted.len());
                    for x in planted {
                        let xv = linalg::to_cvector(&x);
                        let y = a * &xv;
                        let out = solve_weighted_bp(a, y.as_slice(), w, solver)?;
                        let err = (linalg::to_cvector(&out.x) - &xv).norm() / xv.norm();
                        errs.push(err);
                    }
                    Ok(errs)
                })
                .collect();
            let mut worst = 0.0f64;
            let mut recoveries = 0;
            let mut failures = 0;
            for errs in outcomes {
                for e in errs? {
                    worst = worst.max(e);
                    if e <= RECOVERY_TOL {
                        recoveries += 1;
                    } else {
                        failures += 1;
                    }
                }
            }
            Ok(EquivalenceVerdict {
                nsp,
                status,
                supports_tested: supports.len(),
                recoveries,
                failures,
                worst_relative_error: worst,
                competitor: None,
                agrees: failures == 0,
            })
        }
        Status::Violated => {
            let wit = nsp
                .witness
                .clone()
                .ok_or_else(|| Error::NoWitness("violated NSP without a witness".into()))?;
            let x = restrict(&wit.vector, &wit.support);
            let comp = wit.support.complement(n);
            let z: Vec<C64> = restrict(&wit.vector, &comp).into_iter().map(|v| -v).collect();
            let x_norm = weighted_l1_unchecked(&x, w.as_slice());
            let z_norm = weighted_l1_unchecked(&z, w.as_slice());
            let ax = a * linalg::to_cvector(&x);
            let az = a * linalg::to_cvector(&z);
            let same = (&ax - &az).norm() <= 1e-9 * (1.0 + ax.norm());
            let agrees = same && z_norm <= x_norm * (1.0 + 1e-9) + 1e-12;
            Ok(EquivalenceVerdict {
                nsp,
                status,
                supports_tested: 0,
                recoveries: 0,
                failures: 0,
                worst_relative_error: 0.0,
                competitor: Some(Competitor { support: wit.support, x, z, x_norm, z_norm }),
                agrees,
            })
        }
        _ => Ok(EquivalenceVerdict {
            nsp,
            status,
            supports_tested: 0,
            recoveries: 0,
            failures: 0,
            worst_relative_error: 0.0,
            competitor: None,
            agrees: false,
        }),
    }
}
