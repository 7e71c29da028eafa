//! Sensing matrix generators and the ω-NSP-without-ω-RIP-NSP counterexample.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::weight_floor_constants;
use crate::certify::{self, robust_nsp_excess, CertifyOptions, NspMeasurement, Status};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};
use crate::sparsity::{
    budget_limit, enumerate_admissible_supports, weighted_knapsack, weighted_l1_on, weighted_l1_unchecked, SparseModel,
    SparsityBudget, Support, WeightProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Identity,
    DftRows,
    UnitaryRows,
    Gaussian,
    OrthonormalRows,
    ExplicitFile,
    Counterexample,
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    /// Rows selected from the base unitary, in draw order.
    #[serde(default)]
    pub rows: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub with_replacement: bool,
    #[serde(default)]
    pub note: Option<String>,
}

impl Provenance {
    pub fn new(source: Source) -> Self {
        Self { source, rows: Vec::new(), seed: None, with_replacement: false, note: None }
    }
}

/// Dense complex `m × N` matrix with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseMatrix {
    matrix: CMatrix,
    provenance: Provenance,
}

impl SenseMatrix {
    pub fn new(matrix: CMatrix, provenance: Provenance) -> Result<Self> {
        if matrix.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        if !provenance.rows.is_empty() && provenance.rows.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                what: "provenance rows",
                expected: matrix.nrows(),
                got: provenance.rows.len(),
            });
        }
        Ok(Self { matrix, provenance })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: CMatrix::identity(n, n), provenance: Provenance::new(Source::Identity) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `c·A` with the same provenance tagged as scaled.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut provenance = self.provenance.clone();
        provenance.note = Some(format!("scaled by {factor:e} from {:?}", self.provenance.source));
        provenance.source = Source::Scaled;
        Self { matrix: &self.matrix * c(factor, 0.0), provenance }
    }
}

/// Unitary `N × N` matrix to sample rows from.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitaryBase {
    /// `U_{t,k} = e^{2πi tk/N}/√N`.
    Dft(usize),
    /// Orthonormal DCT-II; real, with a constant first row.
    Dct(usize),
    Explicit(CMatrix),
}

impl UnitaryBase {
    pub fn dimension(&self) -> usize {
        match self {
            UnitaryBase::Dft(n) | UnitaryBase::Dct(n) => *n,
            UnitaryBase::Explicit(u) => u.nrows(),
        }
    }

    fn row(&self, t: usize) -> Vec<C64> {
        match self {
            UnitaryBase::Dft(n) => dft_row(*n, t),
            UnitaryBase::Dct(n) => dct_row(*n, t),
            UnitaryBase::Explicit(u) => u.row(t).iter().copied().collect(),
        }
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.dimension();
        let mut out = CMatrix::zeros(n, n);
        for t in 0..n {
            for (k, v) in self.row(t).into_iter().enumerate() {
                out[(t, k)] = v;
            }
        }
        out
    }
}

fn dft_row(n: usize, t: usize) -> Vec<C64> {
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            // Reduce the exponent first to keep the phase exact for large t·k.
            let phase = 2.0 * PI * ((t * k) % n) as f64 / n as f64;
            C64::from_polar(scale, phase)
        })
        .collect()
}

fn dct_row(n: usize, t: usize) -> Vec<C64> {
    let scale = if t == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    (0..n)
        .map(|k| c(scale * (PI * t as f64 * (2 * k + 1) as f64 / (2 * n) as f64).cos(), 0.0))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Draw rows only from `t ≠ 0`, so the all-ones vector lies in the kernel
    /// for bases whose other rows are orthogonal to it.
    pub exclude_first_row: bool,
    /// I.i.d. row draws (duplicates possible) instead of distinct rows.
    pub with_replacement: bool,
}

/// `A = √(N/m)·R_T·U` for `m` rows `T` drawn uniformly from the base.
pub fn sample_partial_unitary(base: &UnitaryBase, m: usize, seed: u64, opts: SamplingOptions) -> Result<SenseMatrix> {
    let n = base.dimension();
    if let UnitaryBase::Explicit(u) = base {
        if u.nrows() != u.ncols() {
            return Err(Error::InvalidArgument("explicit base must be square".into()));
        }
        let defect = linalg::orthonormality_defect(u);
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("explicit base is not unitary (defect {defect:.2e})")));
        }
    }
    if m == 0 || m >= n {
        return Err(Error::InvalidArgument(format!("need 0 < m < N, got m = {m}, N = {n}")));
    }
    let offset = usize::from(opts.exclude_first_row);
    let pool = n - offset;
    if !opts.with_replacement && pool < m {
        return Err(Error::InvalidArgument(format!("only {pool} rows available for m = {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = if opts.with_replacement {
        (0..m).map(|_| rng.random_range(0..pool) + offset).collect()
    } else {
        sample_indices(&mut rng, pool, m).into_iter().map(|t| t + offset).collect()
    };
    let scale = (n as f64 / m as f64).sqrt();
    let mut a = CMatrix::zeros(m, n);
    for (i, &t) in rows.iter().enumerate() {
        for (k, v) in base.row(t).into_iter().enumerate() {
            a[(i, k)] = v * scale;
        }
    }
    let source = match base {
        UnitaryBase::Dft(_) => Source::DftRows,
        _ => Source::UnitaryRows,
    };
    SenseMatrix::new(
        a,
        Provenance { source, rows, seed: Some(seed), with_replacement: opts.with_replacement, note: None },
    )
}

/// Real Gaussian matrix with i.i.d. `N(0, 1/m)` entries.
pub fn gaussian_matrix(m: usize, n: usize, seed: u64) -> SenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let a = CMatrix::from_fn(m, n, |_, _| {
        let v: f64 = rng.sample(StandardNormal);
        c(v * scale, 0.0)
    });
    SenseMatrix {
        matrix: a,
        provenance: Provenance { seed: Some(seed), ..Provenance::new(Source::Gaussian) },
    }
}

/// Real `m × N` matrix with orthonormal rows spanning a uniformly random subspace.
pub fn orthonormal_rows(m: usize, n: usize, seed: u64) -> Result<SenseMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("need 0 < m ≤ N, got m = {m}, N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, m, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    let a = linalg::from_real(&q.transpose());
    Ok(SenseMatrix {
        matrix: a,
        provenance: Provenance { seed: Some(seed), ..Provenance::new(Source::OrthonormalRows) },
    })
}

// ---------------------------------------------------------------- counterexample

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerBase {
    Dft,
    Dct,
}

#[derive(Debug, Clone, Copy)]
pub struct CounterexampleOptions {
    pub inner_base: InnerBase,
    /// Certify the inner matrix's NSP when its dimension is within the cap.
    pub certify_inner: bool,
    pub max_resamples: usize,
    /// `δ` at which the unknown RIP constant is evaluated for `C′`; defaults to
    /// the supremum of the admissible interval.
    pub reference_delta: Option<f64>,
    pub certify: CertifyOptions,
}

impl Default for CounterexampleOptions {
    fn default() -> Self {
        Self {
            inner_base: InnerBase::Dft,
            certify_inner: true,
            max_resamples: 3,
            reference_delta: None,
            certify: CertifyOptions::default(),
        }
    }
}

/// Premise flags; `None` marks conditions involving unspecified constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseFlags {
    pub half_n_at_least_m: bool,
    /// `N ≥ 24‖ω‖_∞²s`.
    pub n_large_enough: bool,
    /// `s > 23040‖ω‖_∞⁶` (weighted) or `s ≥ 3717120` (cardinality).
    pub s_large_enough: bool,
    /// Weights within `[γ, 1]` with `γ ∈ (3/4, 1)`; `None` for the weighted model.
    pub weights_in_range: Option<bool>,
    pub sample_complexity: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerNspCheck {
    pub attempted: bool,
    pub attempts: usize,
    pub target: f64,
    pub gamma: Option<f64>,
    pub gamma_upper: Option<f64>,
    pub certified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(value: f64, tolerance: f64) -> Self {
        Self { value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleDiagnostics {
    /// `max |ΦΦ* − I|`.
    pub orthonormal_rows: Check,
    /// `‖Φd‖₂`.
    pub d_in_kernel: Check,
    /// `|⟨φ₁, d⟩|`.
    pub phi1_orthogonal_d: Check,
    /// `|‖φ₁‖₂ − 1|`.
    pub phi1_unit: Check,
    /// `‖x̂ − (−α,…,−α,0,…,0)‖_∞`.
    pub x_hat_closed_form: Check,
    /// `|‖Φx̂ − Φx₀‖₂ − ρ| / ρ`.
    pub measurement_gap: Check,
    /// `‖Φx̂ − y‖₂`.
    pub x_hat_feasible: Check,
    pub kernel_dimension: usize,
    pub reduced_kernel_dimension: usize,
    pub x0_weighted_norm: f64,
    pub x_hat_weighted_norm: f64,
    /// Whether `N ≥ 24‖ω‖_∞²s`, under which `‖x̂‖_{ω,1} ≤ ‖x₀‖_{ω,1}` is expected.
    pub norm_comparison_applies: bool,
    pub x_hat_not_larger: bool,
    pub alpha_bracket: (f64, f64),
    pub alpha_in_bracket: bool,
    /// `‖d_I‖_{ω,1}`, equal to `(N−4k)/2·(1−2^{−k})`.
    pub d_prefix_mass: f64,
    /// `½Σ_{i∉I}(−d_i) = (N−k)/2`.
    pub d_tail_half_mass: f64,
    pub prefix_below_half_tail: bool,
    /// `‖x̂ − x₀‖₂²`.
    pub error_squared: f64,
    pub error_lower_bound: f64,
    pub error_upper_bound: Option<f64>,
    pub reference_delta: f64,
    pub c_prime: Option<f64>,
    pub bounds_contradict: Option<bool>,
    pub premises: PremiseFlags,
    pub inner_nsp: InnerNspCheck,
}

impl CounterexampleDiagnostics {
    /// All construction identities hold.
    pub fn identities_hold(&self) -> bool {
        self.orthonormal_rows.pass
            && self.d_in_kernel.pass
            && self.phi1_orthogonal_d.pass
            && self.phi1_unit.pass
            && self.x_hat_closed_form.pass
            && self.measurement_gap.pass
            && self.x_hat_feasible.pass
            && self.alpha_in_bracket
            && self.prefix_below_half_tail
            && (!self.norm_comparison_applies || self.x_hat_not_larger)
    }
}

#[derive(Debug, Clone)]
pub struct CounterexampleBundle {
    pub phi: SenseMatrix,
    pub inner: SenseMatrix,
    pub model: SparseModel,
    pub weights: WeightProfile,
    pub s: SparsityBudget,
    pub k: usize,
    pub d: Vec<C64>,
    pub phi1: Vec<C64>,
    pub alpha: f64,
    /// `ρ = √(N + (α²−1)k)`, the normaliser of `φ₁`.
    pub phi_normalizer: f64,
    pub x0: Vec<C64>,
    pub x_hat: Vec<C64>,
    pub z: Vec<C64>,
    pub y: Vec<C64>,
    /// Orthonormal basis of `ker(A) ∩ e^⊥` lifted by `k` zeros.
    pub reduced_kernel: CMatrix,
    pub diagnostics: CounterexampleDiagnostics,
}

fn prefix_length(w: &WeightProfile, model: SparseModel, s: SparsityBudget) -> usize {
    match model {
        SparseModel::Cardinality => s.value() as usize,
        SparseModel::WeightedCardinality => {
            let limit = budget_limit(s.value());
            let mut total = 0.0;
            let mut k = 0;
            for &v in w.as_slice() {
                total += v * v;
                if total > limit {
                    break;
                }
                k += 1;
            }
            k
        }
    }
}

/// Builds `Φ` with orthonormal rows, `ker Φ = (ker A ∩ e^⊥ lifted) ⊕ span(d)`,
/// together with the pair `x₀`, `x̂` that defeats ω-RIP-NSP.
pub fn build_counterexample(
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    m: usize,
    seed: u64,
    opts: &CounterexampleOptions,
) -> Result<CounterexampleBundle> {
    let n = w.len();
    let k = prefix_length(w, model, s);
    if k == 0 {
        return Err(Error::Degenerate("no index fits in the budget (k = 0)".into()));
    }
    if n <= 4 * k {
        return Err(Error::Degenerate(format!("N ≤ 4k (N = {n}, k = {k})")));
    }
    if m <= k {
        return Err(Error::Degenerate(format!("m − k < 1 (m = {m}, k = {k})")));
    }
    if m >= n {
        return Err(Error::Degenerate(format!("N − k ≤ m − k (N = {n}, m = {m})")));
    }
    let ws = w.as_slice();
    let nk = n - k;
    let tail_w = w.tail(k)?;
    let base = match opts.inner_base {
        InnerBase::Dft => UnitaryBase::Dft(nk),
        InnerBase::Dct => UnitaryBase::Dct(nk),
    };
    let sampling = SamplingOptions { exclude_first_row: true, with_replacement: false };

    // Inner matrix, resampled until its NSP constant is certified small enough.
    let target = match model {
        SparseModel::WeightedCardinality => 1.0 / 3.0,
        SparseModel::Cardinality => 1.0 / 5.0,
    };
    let check_inner = opts.certify_inner && nk <= opts.certify.cap;
    let mut inner_check = InnerNspCheck {
        attempted: check_inner,
        attempts: 0,
        target,
        gamma: None,
        gamma_upper: None,
        certified: None,
    };
    let mut inner = sample_partial_unitary(&base, m - k, seed, sampling)?;
    if check_inner {
        for attempt in 0..opts.max_resamples.max(1) {
            let candidate = sample_partial_unitary(&base, m - k, seed.wrapping_add(attempt as u64), sampling)?;
            let measured = certify::nsp_constant(candidate.matrix(), &tail_w, model, s, &opts.certify)?;
            inner_check.attempts = attempt + 1;
            let ok = measured.upper <= target;
            if inner_check.gamma.is_none() || ok || measured.gamma < inner_check.gamma.unwrap_or(f64::INFINITY) {
                inner_check.gamma = Some(measured.gamma);
                inner_check.gamma_upper = Some(measured.upper);
                inner = candidate;
            }
            if ok {
                inner_check.certified = Some(true);
                break;
            }
        }
        if inner_check.certified.is_none() {
            inner_check.certified = Some(false);
        }
    }

    // ker(A) ∩ e^⊥, lifted by k zeros.
    let ker_a = linalg::null_space_basis(inner.matrix(), linalg::RANK_TOL);
    let e_hat = CVector::from_element(nk, c(1.0 / (nk as f64).sqrt(), 0.0));
    let with_e = linalg::extend_orthonormal(&CMatrix::from_columns(&[e_hat]), &ker_a, ker_a.ncols(), 1e-8);
    let reduced_dim = with_e.ncols() - 1;
    if reduced_dim != n - m - 1 {
        return Err(Error::Degenerate(format!(
            "reduced kernel has dimension {reduced_dim}, expected {}",
            n - m - 1
        )));
    }
    let mut reduced = CMatrix::zeros(n, reduced_dim);
    reduced.view_mut((k, 0), (nk, reduced_dim)).copy_from(&with_e.columns(1, reduced_dim));

    // d, α, φ₁.
    let gap = (n - 4 * k) as f64;
    let mut d = vec![c(-1.0, 0.0); n];
    let mut inv_sum = 0.0;
    for i in 0..k {
        let denom = 2f64.powi(i as i32 + 2) * ws[i];
        d[i] = c(gap / denom, 0.0);
        inv_sum += 1.0 / denom;
    }
    let alpha = nk as f64 / (gap * inv_sum);
    let rho = (n as f64 + (alpha * alpha - 1.0) * k as f64).sqrt();
    let phi1: Vec<C64> = (0..n).map(|i| c(if i < k { alpha } else { 1.0 } / rho, 0.0)).collect();

    // Φ: orthonormal basis of (ker)^⊥ with φ₁ first.
    let dv = linalg::to_cvector(&d);
    let d_unit = &dv / c(dv.norm(), 0.0);
    let mut seed_cols: Vec<CVector> = reduced.column_iter().map(|col| col.into_owned()).collect();
    seed_cols.push(d_unit);
    seed_cols.push(linalg::to_cvector(&phi1));
    let seeded = CMatrix::from_columns(&seed_cols);
    let full = linalg::extend_orthonormal(&seeded, &CMatrix::identity(n, n), n, 1e-8);
    if full.ncols() != n {
        return Err(Error::Numerical("orthonormal completion fell short".into()));
    }
    let kernel_dim = reduced_dim + 1;
    let mut q = CMatrix::zeros(n, m);
    q.set_column(0, &linalg::to_cvector(&phi1));
    q.columns_mut(1, m - 1).copy_from(&full.columns(kernel_dim + 1, m - 1));
    let phi_m = q.adjoint();

    // Signals.
    let mut x0 = vec![c(0.0, 0.0); n];
    x0[..k].copy_from_slice(&d[..k]);
    let x_hat: Vec<C64> = (0..n).map(|i| x0[i] - phi1[i] * rho - d[i]).collect();
    let mut z = vec![c(0.0, 0.0); m];
    z[0] = c(rho, 0.0);
    let phi_x0 = &phi_m * linalg::to_cvector(&x0);
    let yv = &phi_x0 - linalg::to_cvector(&z);
    let phi_xhat = &phi_m * linalg::to_cvector(&x_hat);

    // Diagnostics.
    let w_inf = w.max();
    let s_val = s.value();
    let prefix_w = &ws[..k];
    let (pmin, pmax) = prefix_w.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let dk = gap * (1.0 - 2f64.powi(-(k as i32)));
    let bracket = (2.0 * nk as f64 * pmin / dk, 2.0 * nk as f64 * pmax / dk);
    let rel = 1e-12 * bracket.1.max(1.0);
    let closed_form_err = (0..n)
        .map(|i| (x_hat[i] - c(if i < k { -alpha } else { 0.0 }, 0.0)).norm())
        .fold(0.0, f64::max);
    let x0_norm = weighted_l1_unchecked(&x0, ws);
    let xh_norm = weighted_l1_unchecked(&x_hat, ws);
    let applies = n as f64 >= 24.0 * w_inf * w_inf * s_val;
    let d_prefix = weighted_l1_on(&d, ws, 0..k);
    let half_tail = nk as f64 / 2.0;
    let error_sq: f64 = (0..n).map(|i| (x_hat[i] - x0[i]).norm_sqr()).sum();
    let (lower, reference_delta, c_prime, upper) = match model {
        SparseModel::WeightedCardinality => {
            let delta = opts.reference_delta.unwrap_or(1.0 / 3.0);
            let d2 = 6.0 * (1.0 + delta).sqrt() / (1.0 - delta);
            let cp = d2 * d2 * (1.0 + delta);
            let up = 2.0 * cp * n as f64 * (n as f64 * w_inf * w_inf / k as f64 + 1.0);
            (gap * gap / (16.0 * w_inf * w_inf), delta, Some(cp), Some(up))
        }
        SparseModel::Cardinality => {
            let delta = opts.reference_delta.unwrap_or(1.0 / 11.0);
            let floor = w.min().min(1.0);
            let cp = weight_floor_constants(delta, floor).ok().map(|kc| kc.b2 * kc.b2 * (1.0 + delta));
            let up = cp.map(|cp| 2.0 * cp * n as f64 * (n as f64 / s_val + 1.0));
            let g4 = (n as f64 - 4.0 * s_val).max(0.0);
            (g4 * g4 / 16.0, delta, cp, up)
        }
    };
    let premises = match model {
        SparseModel::WeightedCardinality => PremiseFlags {
            half_n_at_least_m: n as f64 / 2.0 >= m as f64,
            n_large_enough: applies,
            s_large_enough: s_val > 23040.0 * w_inf.powi(6),
            weights_in_range: None,
            sample_complexity: None,
        },
        SparseModel::Cardinality => {
            let floor = w.min();
            PremiseFlags {
                half_n_at_least_m: n as f64 / 2.0 >= m as f64,
                n_large_enough: n as f64 >= 24.0 * s_val,
                s_large_enough: s_val >= 3_717_120.0,
                weights_in_range: Some(w.max() <= 1.0 && floor > 0.75 && floor < 1.0),
                sample_complexity: None,
            }
        }
    };
    let diagnostics = CounterexampleDiagnostics {
        orthonormal_rows: Check::at_most(linalg::orthonormality_defect(&phi_m.adjoint()), 1e-10),
        d_in_kernel: Check::at_most((&phi_m * &dv).norm(), 1e-9),
        phi1_orthogonal_d: Check::at_most(linalg::to_cvector(&phi1).dotc(&dv).norm(), 1e-10 * dv.norm().max(1.0)),
        phi1_unit: Check::at_most((linalg::to_cvector(&phi1).norm() - 1.0).abs(), 1e-12),
        x_hat_closed_form: Check::at_most(closed_form_err, 1e-9 * alpha.max(1.0)),
        measurement_gap: Check::at_most(((&phi_xhat - &phi_x0).norm() - rho).abs() / rho, 1e-8),
        x_hat_feasible: Check::at_most((&phi_xhat - &yv).norm(), 1e-8 * rho),
        kernel_dimension: linalg::null_space_basis(&phi_m, linalg::RANK_TOL).ncols(),
        reduced_kernel_dimension: reduced_dim,
        x0_weighted_norm: x0_norm,
        x_hat_weighted_norm: xh_norm,
        norm_comparison_applies: applies,
        x_hat_not_larger: xh_norm <= x0_norm * (1.0 + 1e-12),
        alpha_bracket: bracket,
        alpha_in_bracket: alpha >= bracket.0 - rel && alpha <= bracket.1 + rel,
        d_prefix_mass: d_prefix,
        d_tail_half_mass: half_tail,
        prefix_below_half_tail: d_prefix < half_tail,
        error_squared: error_sq,
        error_lower_bound: lower,
        error_upper_bound: upper,
        reference_delta,
        c_prime,
        bounds_contradict: upper.map(|u| lower > u),
        premises,
        inner_nsp: inner_check,
    };
    let phi = SenseMatrix::new(
        phi_m,
        Provenance {
            seed: Some(seed),
            note: Some(format!("k = {k}, inner rows {:?}", inner.provenance().rows)),
            ..Provenance::new(Source::Counterexample)
        },
    )?;
    Ok(CounterexampleBundle {
        phi,
        inner,
        model,
        weights: w.clone(),
        s,
        k,
        d,
        phi1,
        alpha,
        phi_normalizer: rho,
        x0,
        x_hat,
        z,
        y: yv.as_slice().to_vec(),
        reduced_kernel: reduced,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerificationMode {
    /// Run the exhaustive certifier on `Φ` (requires `N` within the cap).
    Exact,
    /// Random kernel vectors `h + d` against their worst admissible support.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NspVerification {
    pub exact: bool,
    /// Largest observed `‖b_T‖_{ω,1}/‖b_{T^c}‖_{ω,1}`.
    pub max_ratio: f64,
    /// Upper bound on the NSP constant (exact mode only).
    pub upper: Option<f64>,
    pub status: Status,
    pub vectors_checked: usize,
    pub violations: usize,
    pub prefix_below_half_tail: bool,
    #[serde(skip)]
    pub measurement: Option<NspMeasurement>,
}

impl NspVerification {
    pub fn holds(&self) -> bool {
        self.status == Status::Satisfied
    }
}

/// Checks that `Φ` satisfies ω-NSP of order `s`.
pub fn verify_nsp_of_counterexample(
    bundle: &CounterexampleBundle,
    mode: VerificationMode,
    opts: &CertifyOptions,
) -> Result<NspVerification> {
    let prefix_ok = bundle.diagnostics.prefix_below_half_tail;
    match mode {
        VerificationMode::Exact => {
            let m = certify::nsp_constant(bundle.phi.matrix(), &bundle.weights, bundle.model, bundle.s, opts)?;
            let status = m.status(opts.margin);
            Ok(NspVerification {
                exact: m.exact,
                max_ratio: m.gamma,
                upper: Some(m.upper),
                status,
                vectors_checked: 0,
                violations: usize::from(status == Status::Violated),
                prefix_below_half_tail: prefix_ok,
                measurement: Some(m),
            })
        }
        VerificationMode::Sampled { samples, seed } => {
            let n = bundle.weights.len();
            let ws = bundle.weights.as_slice();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let complex = !linalg::is_real(&bundle.reduced_kernel);
            let dv = linalg::to_cvector(&bundle.d);
            let dim = bundle.reduced_kernel.ncols();
            let scales = [0.0, 0.1, 1.0, 10.0, 100.0];
            let mut candidates: Vec<CVector> = vec![dv.clone()];
            for i in 0..samples {
                let coef = CVector::from_fn(dim, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
                    c(re, im)
                });
                let h = &bundle.reduced_kernel * coef;
                let hn = h.norm().max(f64::MIN_POSITIVE);
                let scale = scales[i % scales.len()] * dv.norm() / hn;
                candidates.push(&h * c(scale, 0.0) + &dv);
                if i % scales.len() == 0 {
                    // Pure reduced-kernel direction (no d component).
                    candidates.push(h);
                }
            }
            let mut max_ratio = 0.0f64;
            let mut violations = 0;
            for b in &candidates {
                let values: Vec<f64> = b.iter().zip(ws).map(|(v, wi)| wi * v.norm()).collect();
                let chosen = match bundle.model {
                    SparseModel::Cardinality => {
                        let mut order: Vec<usize> = (0..n).collect();
                        order.sort_by(|&x, &y| values[y].total_cmp(&values[x]).then(x.cmp(&y)));
                        order.truncate(bundle.s.value() as usize);
                        order
                    }
                    SparseModel::WeightedCardinality => {
                        let costs: Vec<f64> = ws.iter().map(|v| v * v).collect();
                        weighted_knapsack(&values, &costs, bundle.s.value())
                    }
                };
                let sup = Support::new(chosen, n)?;
                let ratio = certify::nsp_ratio(b.as_slice(), &bundle.weights, &sup);
                max_ratio = max_ratio.max(ratio);
                if ratio >= 1.0 {
                    violations += 1;
                }
            }
            Ok(NspVerification {
                exact: false,
                max_ratio,
                upper: None,
                status: if violations > 0 { Status::Violated } else { Status::Satisfied },
                vectors_checked: candidates.len(),
                violations,
                prefix_below_half_tail: prefix_ok,
                measurement: None,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkCertificate {
    pub matrix: SenseMatrix,
    pub scale: f64,
    /// Supremum of admissible scales: `(‖x_S‖₂ − (ρ/√s)‖x_{S^c}‖_{ω,1})/(γ‖Ψx‖₂)`.
    pub scale_limit: f64,
    pub support: Support,
    pub margin: f64,
    /// Robust excess of the witness under the returned matrix (positive = violated).
    pub excess: f64,
    pub replay_violated: bool,
}

/// Scales `Ψ` down far enough that `x_witness` violates the robust NSP at `(ρ, γ)`.
/// The kernel, and hence every kernel-defined property, is unchanged.
#[allow(clippy::too_many_arguments)]
pub fn shrink_to_break_robust_nsp(
    psi: &SenseMatrix,
    w: &WeightProfile,
    s: SparsityBudget,
    rho: f64,
    gamma: f64,
    x_witness: &[C64],
    safety: f64,
    cap: usize,
) -> Result<ShrinkCertificate> {
    crate::sparsity::check_len("witness", psi.cols(), x_witness.len())?;
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidArgument(format!("safety factor {safety} must lie in (0, 1)")));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("γ must be positive".into()));
    }
    let xv = linalg::to_cvector(x_witness);
    let psi_x = (psi.matrix() * &xv).norm();
    if psi_x <= 1e-12 * xv.norm() * linalg::spectral_norm(psi.matrix()).max(1.0) {
        return Err(Error::InvalidArgument("witness lies in the kernel".into()));
    }
    let ws = w.as_slice();
    let n = x_witness.len();
    let mut best: Option<(f64, Support)> = None;
    for sup in enumerate_admissible_supports(w, SparseModel::WeightedCardinality, s, cap)? {
        let on: f64 = sup.iter().map(|i| x_witness[i].norm_sqr()).sum::<f64>().sqrt();
        let off = weighted_l1_on(x_witness, ws, sup.complement(n).iter());
        let margin = on - rho / s.value().sqrt() * off;
        if best.as_ref().is_none_or(|(bm, _)| margin > *bm) {
            best = Some((margin, sup));
        }
    }
    let (margin, support) = best.ok_or_else(|| Error::NoWitness("no admissible support".into()))?;
    if margin <= 0.0 {
        return Err(Error::NoWitness(format!(
            "‖x_S‖₂ ≤ (ρ/√s)‖x_(S^c)‖ on every admissible support (best margin {margin:.3e})"
        )));
    }
    let scale_limit = margin / (gamma * psi_x);
    let scale = safety * scale_limit;
    let matrix = psi.scaled(scale);
    let excess = robust_nsp_excess(matrix.matrix(), w, s.value(), rho, gamma, x_witness, &support);
    Ok(ShrinkCertificate {
        matrix,
        scale,
        scale_limit,
        support,
        margin,
        excess,
        replay_violated: excess > 0.0,
    })
}
