//! Small dense primal simplex for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! The origin is always feasible under `b ≥ 0`, so no phase one is needed.
//! Pivoting uses Dantzig's rule and switches to Bland's rule after a run of
//! degenerate pivots to rule out cycling. The tableau runs on a slightly
//! perturbed right-hand side so that heavily degenerate problems do not stall;
//! the final basis is then re-solved against the original data by LU.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
    IterationLimit,
}

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;
const PERTURBATION: f64 = 1e-9;

pub fn maximize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> LpOutcome {
    let (m, n) = a.shape();
    assert_eq!(c.len(), n);
    assert_eq!(b.len(), m);
    assert!(b.iter().all(|&v| v >= 0.0), "right-hand side must be nonnegative");

    let width = n + m + 1;
    let rhs = n + m;
    let b_scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for i in 0..m {
        for j in 0..n {
            t[(i, j)] = a[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        // Distinct perturbations per row; golden-ratio fractions avoid ties.
        let frac = (i as f64 * 0.618_033_988_749_895).fract();
        t[(i, rhs)] = b[i] + PERTURBATION * b_scale * (1.0 + frac);
    }
    // Objective row holds reduced costs as -c.
    for j in 0..n {
        t[(m, j)] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let scale = c.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let max_iter = 50 * (m + n) + 1000;
    let mut degenerate = 0usize;

    for _ in 0..max_iter {
        let bland = degenerate >= DEGENERATE_STREAK;
        let entering = if bland {
            (0..n + m).find(|&j| t[(m, j)] < -PIVOT_TOL * scale)
        } else {
            let (j, v) = (0..n + m)
                .map(|j| (j, t[(m, j)]))
                .fold((usize::MAX, 0.0), |acc, x| if x.1 < acc.1 { x } else { acc });
            (v < -PIVOT_TOL * scale).then_some(j)
        };
        let Some(e) = entering else {
            return finish(c, a, b, &basis, &t);
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let col = t[(i, e)];
            if col > PIVOT_TOL {
                let ratio = t[(i, rhs)] / col;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        let better = ratio < lr - 1e-14
                            || (ratio <= lr + 1e-14 && (if bland { basis[i] < basis[li] } else { col > t[(li, e)] }));
                        if better { Some((i, ratio)) } else { Some((li, lr)) }
                    }
                };
            }
        }
        let Some((r, ratio)) = leave else {
            return LpOutcome::Unbounded;
        };
        if ratio <= 1e-14 {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        pivot(&mut t, r, e);
        basis[r] = e;
    }
    LpOutcome::IterationLimit
}

fn pivot(t: &mut DMatrix<f64>, r: usize, e: usize) {
    let p = t[(r, e)];
    let width = t.ncols();
    for j in 0..width {
        t[(r, j)] /= p;
    }
    for i in 0..t.nrows() {
        if i == r {
            continue;
        }
        let f = t[(i, e)];
        if f != 0.0 {
            for j in 0..width {
                let v = t[(r, j)];
                t[(i, j)] -= f * v;
            }
        }
    }
}

fn finish(c: &[f64], a: &DMatrix<f64>, b: &[f64], basis: &[usize], t: &DMatrix<f64>) -> LpOutcome {
    let (m, n) = a.shape();
    let rhs = n + m;
    let mut x = vec![0.0; n];
    // Recompute the basic solution from the original constraints.
    let mut bm = DMatrix::<f64>::zeros(m, m);
    for (k, &j) in basis.iter().enumerate() {
        for i in 0..m {
            bm[(i, k)] = if j < n { a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 };
        }
    }
    let solved = bm.lu().solve(&DVector::from_column_slice(b));
    // The basis is dual feasible, so `c_B B⁻¹ b` bounds the optimum from above
    // even when rounding leaves a basic entry slightly negative.
    let value = match solved {
        Some(xb) if xb.iter().all(|v| v.is_finite()) => {
            let mut value = 0.0;
            for (k, &j) in basis.iter().enumerate() {
                if j < n {
                    value += c[j] * xb[k];
                    x[j] = xb[k].max(0.0);
                }
            }
            value
        }
        _ => {
            for (i, &j) in basis.iter().enumerate() {
                if j < n {
                    x[j] = t[(i, rhs)].max(0.0);
                }
            }
            c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum()
        }
    };
    LpOutcome::Optimal { x, value }
}
