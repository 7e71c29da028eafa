//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::sparsity::Support;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default relative threshold for treating a singular value as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| c(v, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|v| v.re)
}

/// True when every imaginary part is exactly zero.
pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|v| v.im == 0.0)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = if is_real(m) {
        real_part(m).singular_values().iter().copied().collect()
    } else {
        m.singular_values().iter().copied().collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `‖M‖_op`, the largest singular value (0 for an empty matrix).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value above `tol·σ_max`, if any.
pub fn smallest_positive_singular_value(m: &CMatrix, tol: f64) -> Option<f64> {
    let sv = singular_values(m);
    let top = *sv.first()?;
    sv.into_iter().rev().find(|&v| v > tol * top && v > 0.0)
}

/// Column submatrix `A_S`.
pub fn columns(a: &CMatrix, support: &Support) -> CMatrix {
    a.select_columns(support.indices())
}

/// Orthonormal basis (as columns) of `ker A`, from the right singular vectors
/// whose singular values fall below `tol·σ_max`.
pub fn null_space_basis(a: &CMatrix, tol: f64) -> CMatrix {
    let (m, n) = a.shape();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    // Pad to square so the SVD returns a full set of right singular vectors.
    let rows = m.max(n);
    if is_real(a) {
        let mut padded = DMatrix::<f64>::zeros(rows, n);
        padded.view_mut((0, 0), (m, n)).copy_from(&real_part(a));
        let svd = padded.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let top = svd.singular_values.max();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| svd.singular_values[i] <= tol * top.max(f64::MIN_POSITIVE) || top == 0.0)
            .collect();
        let mut basis = DMatrix::<f64>::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &vt.row(i).transpose());
        }
        from_real(&basis)
    } else {
        let mut padded = CMatrix::zeros(rows, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        let svd = padded.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let top = svd.singular_values.max();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| svd.singular_values[i] <= tol * top.max(f64::MIN_POSITIVE) || top == 0.0)
            .collect();
        let mut basis = CMatrix::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &vt.row(i).adjoint());
        }
        basis
    }
}

/// Numerical rank with relative threshold `tol`.
pub fn rank(m: &CMatrix, tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&top) = sv.first() else { return 0 };
    sv.iter().filter(|&&v| v > tol * top && v > 0.0).count()
}

/// Gram–Schmidt with one re-orthogonalisation pass. Starting from the columns of
/// `seed` (assumed orthonormal), appends those `candidates` columns that are
/// independent at tolerance `tol`, visiting candidates in order of largest
/// remaining norm. Stops after `target` total columns.
pub fn extend_orthonormal(seed: &CMatrix, candidates: &CMatrix, target: usize, tol: f64) -> CMatrix {
    let n = seed.nrows().max(candidates.nrows());
    let mut basis: Vec<CVector> = seed.column_iter().map(|c| c.into_owned()).collect();
    let mut pool: Vec<CVector> = candidates.column_iter().map(|c| c.into_owned()).collect();
    while basis.len() < target && !pool.is_empty() {
        for v in pool.iter_mut() {
            project_out(v, &basis);
        }
        let (best, norm) = pool
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if norm <= tol {
            break;
        }
        let mut v = pool.swap_remove(best);
        project_out(&mut v, &basis);
        let nv = v.norm();
        if nv <= tol {
            continue;
        }
        basis.push(v / c(nv, 0.0));
    }
    let mut out = CMatrix::zeros(n, basis.len());
    for (j, v) in basis.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Removes the components of `v` along each (orthonormal) vector in `basis`,
/// twice for stability.
pub fn project_out(v: &mut CVector, basis: &[CVector]) {
    for _ in 0..2 {
        for b in basis {
            let coef = b.dotc(v);
            v.axpy(-coef, b, c(1.0, 0.0));
        }
    }
}

/// `max |(M*M − I)_{ij}|`, the deviation of the columns of `M` from orthonormality.
pub fn orthonormality_defect(m: &CMatrix) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - c(target, 0.0)).norm());
        }
    }
    worst
}

pub fn to_cvector(x: &[C64]) -> CVector {
    CVector::from_column_slice(x)
}
