use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcs_core::bounds::{ripnsp_error_budget, weight_floor_constants, BudgetInputs};
use wcs_core::certify::{nsp_constant, CertifyOptions};
use wcs_core::construct::{
    build_counterexample, gaussian_matrix, sample_partial_unitary, CounterexampleOptions, SamplingOptions,
    UnitaryBase,
};
use wcs_core::linalg::{c, from_real};
use wcs_core::solver::{solve_weighted_bp, SolverOptions};
use wcs_core::sparsity::{
    best_weighted_s_term, build_partition, restrict, weighted_l1_norm, SelectionOptions,
};
use wcs_core::{CMatrix, SparseModel, SparsityBudget, Support, WeightProfile, C64};

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64).prop_map(|(r, i)| c(r, i)), n)
}

fn weights(n: usize) -> impl Strategy<Value = WeightProfile> {
    prop::collection::vec(1.0..3.0f64, n).prop_map(|w| WeightProfile::new(w).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn norm_is_absolutely_homogeneous(
        (x, w) in (1usize..12).prop_flat_map(|n| (complex_vec(n), weights(n))),
        re in -5.0..5.0f64,
        im in -5.0..5.0f64,
    ) {
        let k = c(re, im);
        let scaled: Vec<C64> = x.iter().map(|v| k * v).collect();
        let lhs = weighted_l1_norm(&scaled, &w).unwrap();
        let rhs = k.norm() * weighted_l1_norm(&x, &w).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn norm_triangle_inequality(
        (x, y, w) in (1usize..12).prop_flat_map(|n| (complex_vec(n), complex_vec(n), weights(n))),
    ) {
        let sum: Vec<C64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = weighted_l1_norm(&sum, &w).unwrap();
        let rhs = weighted_l1_norm(&x, &w).unwrap() + weighted_l1_norm(&y, &w).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-14));
    }

    #[test]
    fn norm_splits_over_support_and_complement(
        (x, w, mask) in (1usize..12).prop_flat_map(|n| (complex_vec(n), weights(n), prop::collection::vec(any::<bool>(), n))),
    ) {
        let n = x.len();
        let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let sup = Support::new(idx, n).unwrap();
        let on = weighted_l1_norm(&restrict(&x, &sup), &w).unwrap();
        let off = weighted_l1_norm(&restrict(&x, &sup.complement(n)), &w).unwrap();
        prop_assert!(close(on + off, weighted_l1_norm(&x, &w).unwrap(), 1e-13));
    }

    #[test]
    fn weighted_measure_is_additive(
        (w, mask) in (1usize..14).prop_flat_map(|n| (weights(n), prop::collection::vec(any::<bool>(), n))),
    ) {
        let n = w.len();
        let a = Support::new((0..n).filter(|&i| mask[i]).collect(), n).unwrap();
        let b = a.complement(n);
        let model = SparseModel::WeightedCardinality;
        let all = Support::range(0, n);
        prop_assert!(close(model.measure(&a, &w) + model.measure(&b, &w), model.measure(&all, &w), 1e-13));
    }

    #[test]
    fn best_term_matches_exhaustive_search(
        (x, w) in (1usize..=16).prop_flat_map(|n| (complex_vec(n), weights(n))),
        s in 2.0..20.0f64,
    ) {
        let n = x.len();
        let model = SparseModel::WeightedCardinality;
        let budget = SparsityBudget::new(s, model).unwrap();
        let best = best_weighted_s_term(&x, &w, model, budget, SelectionOptions::default()).unwrap();
        let ws = w.as_slice();
        let mut oracle = 0.0f64;
        for mask in 0u32..(1 << n) {
            let (mut cost, mut kept) = (0.0, 0.0);
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    cost += ws[i] * ws[i];
                    kept += ws[i] * x[i].norm();
                }
            }
            if cost <= s * (1.0 + 1e-12) {
                oracle = oracle.max(kept);
            }
        }
        prop_assert!(close(best.kept, oracle, 1e-12), "kept {} vs oracle {}", best.kept, oracle);
        prop_assert!(model.measure(&best.support, &w) <= s * (1.0 + 1e-12));
        let total = weighted_l1_norm(&x, &w).unwrap();
        prop_assert!(close(best.kept + best.sigma, total, 1e-12));
    }

    #[test]
    fn partition_blocks_are_contiguous_and_within_budget(
        w in (1usize..60).prop_flat_map(weights),
        extra in 0.0..10.0f64,
    ) {
        let model = SparseModel::WeightedCardinality;
        let s = 2.0 * w.max() * w.max() + extra;
        let budget = SparsityBudget::new(s, model).unwrap();
        let p = build_partition(&w, model, budget).unwrap();
        let flat: Vec<usize> = p.blocks().iter().flat_map(|b| b.iter()).collect();
        prop_assert_eq!(flat, (0..w.len()).collect::<Vec<_>>());
        for b in p.blocks() {
            prop_assert!(model.measure(b, &w) <= s * (1.0 + 1e-12));
        }
        for pair in p.blocks().windows(2) {
            let joint = model.measure(&pair[0], &w) + model.measure(&pair[1], &w);
            prop_assert!(joint > s);
        }
        prop_assert!((p.count() as f64) < p.pairing_bound());
    }

    #[test]
    fn budget_is_jointly_homogeneous(
        sigma in 0.0..5.0f64,
        eps in 0.0..5.0f64,
        t in 0.1..10.0f64,
        delta in 0.0..0.3f64,
    ) {
        let k = weight_floor_constants(delta, 1.0).unwrap();
        let inputs = BudgetInputs { sigma_s: sigma, s: 3.0, delta, n_nu: 4, lambda_phi: 1.0, epsilon: eps };
        let scaled = BudgetInputs { sigma_s: t * sigma, epsilon: t * eps, ..inputs };
        let a = ripnsp_error_budget(inputs, k.into()).unwrap();
        let b = ripnsp_error_budget(scaled, k.into()).unwrap();
        prop_assert!(close(b.l1_bound.unwrap(), t * a.l1_bound.unwrap(), 1e-12));
        prop_assert!(close(b.l2_bound.unwrap(), t * a.l2_bound.unwrap(), 1e-12));
    }
}

fn random_real(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nsp_constant_is_kernel_invariant(seed in any::<u64>(), n in 5usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = n / 2 + 1;
        let a = random_real(m, n, &mut rng);
        let u = loop {
            let u = random_real(m, m, &mut rng);
            if u.clone().svd(false, false).singular_values.min() > 0.1 {
                break u;
            }
        };
        let w = WeightProfile::uniform(n, 1.0).unwrap();
        let model = SparseModel::Cardinality;
        let s = SparsityBudget::new(2.0, model).unwrap();
        let opts = CertifyOptions::default();
        let g1 = nsp_constant(&from_real(&a), &w, model, s, &opts).unwrap();
        let g2 = nsp_constant(&from_real(&(&u * &a)), &w, model, s, &opts).unwrap();
        prop_assert!(g1.exact && g2.exact);
        prop_assert!(close(g1.gamma, g2.gamma, 1e-8), "{} vs {}", g1.gamma, g2.gamma);
    }

    #[test]
    fn nsp_constant_grows_with_budget(seed in any::<u64>(), n in 5usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = from_real(&random_real(n - 2, n, &mut rng));
        let w = WeightProfile::new((0..n).map(|_| rng.random_range(1.0..1.5)).collect()).unwrap();
        let model = SparseModel::WeightedCardinality;
        let opts = CertifyOptions::default();
        let mut prev = 0.0;
        for s in [4.5, 6.0, 8.0] {
            let g = nsp_constant(&a, &w, model, SparsityBudget::new(s, model).unwrap(), &opts).unwrap().gamma;
            prop_assert!(g >= prev - 1e-9, "s = {}: {} < {}", s, g, prev);
            prev = g;
        }
    }

    #[test]
    fn solver_is_scale_covariant(seed in any::<u64>(), scale in 0.05..20.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (6, 10);
        let a = from_real(&random_real(m, n, &mut rng));
        let w = WeightProfile::uniform(n, 1.0).unwrap();
        let mut x = vec![c(0.0, 0.0); n];
        x[rng.random_range(0..n)] = c(rng.random_range(1.0..2.0), 0.0);
        let y = &a * wcs_core::linalg::to_cvector(&x);
        let opts = SolverOptions::default();
        let r1 = solve_weighted_bp(&a, y.as_slice(), &w, &opts).unwrap();
        let sa: CMatrix = a.map(|v| v * scale);
        let sy: Vec<C64> = y.iter().map(|v| v * scale).collect();
        let r2 = solve_weighted_bp(&sa, &sy, &w, &opts).unwrap();
        let diff: f64 = r1.x.iter().zip(&r2.x).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = r1.x.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-6 * norm.max(1.0), "diff {}", diff);
    }
}

/// Basis pursuit optimum by enumerating basic solutions: an ℓ1 minimiser of
/// `Ax = y` exists on some set of `m` linearly independent columns.
fn basis_pursuit_by_vertices(a: &DMatrix<f64>, y: &[f64]) -> f64 {
    let (m, n) = a.shape();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let sub = DMatrix::from_fn(m, m, |i, j| a[(i, idx[j])]);
        if sub.clone().svd(false, false).singular_values.min() > 1e-9 {
            if let Some(sol) = sub.lu().solve(&nalgebra::DVector::from_column_slice(y)) {
                best = best.min(sol.iter().map(|v| v.abs()).sum());
            }
        }
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < n - m + i {
                idx[i] += 1;
                for j in i + 1..m {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uniform_weights_match_plain_basis_pursuit(seed in any::<u64>(), n in 5usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..n);
        let a = random_real(m, n, &mut rng);
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = basis_pursuit_by_vertices(&a, &y);
        let w = WeightProfile::uniform(n, 1.0).unwrap();
        let yc: Vec<C64> = y.iter().map(|&v| c(v, 0.0)).collect();
        let out = solve_weighted_bp(&from_real(&a), &yc, &w, &SolverOptions::default()).unwrap();
        prop_assert!(close(out.objective, oracle, 1e-6), "{} vs {}", out.objective, oracle);
    }

    #[test]
    fn sampled_rows_are_orthonormal_and_exclude_constants(seed in any::<u64>(), n in 6usize..20) {
        let m = n / 2;
        let opts = SamplingOptions { exclude_first_row: true, with_replacement: false };
        for base in [UnitaryBase::Dft(n), UnitaryBase::Dct(n)] {
            let a = sample_partial_unitary(&base, m, seed, opts).unwrap();
            // Rows of √(m/N)·A are distinct rows of a unitary matrix.
            let rows = a.matrix().map(|v| v * (m as f64 / n as f64).sqrt());
            let gram = &rows * rows.adjoint();
            prop_assert!((gram - CMatrix::identity(m, m)).iter().all(|v| v.norm() < 1e-10));
            let ones = CMatrix::from_element(n, 1, c(1.0, 0.0));
            prop_assert!((a.matrix() * ones).norm() < 1e-10);
        }
    }

    #[test]
    fn counterexample_identities_hold(seed in 0u64..1000, weighted in any::<bool>()) {
        let n = 40;
        let (model, w, s) = if weighted {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = WeightProfile::new((0..n).map(|_| rng.random_range(1.0..1.3)).collect()).unwrap();
            (SparseModel::WeightedCardinality, w, 4.0)
        } else {
            (SparseModel::Cardinality, WeightProfile::uniform(n, 1.0).unwrap(), 3.0)
        };
        let opts = CounterexampleOptions { certify_inner: false, ..Default::default() };
        let budget = SparsityBudget::new(s, model).unwrap();
        let b = build_counterexample(&w, model, budget, 14, seed, &opts).unwrap();
        prop_assert!(b.diagnostics.identities_hold(), "{:#?}", b.diagnostics);
        prop_assert_eq!(b.diagnostics.kernel_dimension, n - 14);
        prop_assert_eq!(b.diagnostics.reduced_kernel_dimension, (n - b.k) - (14 - b.k) - 1);
    }
}

#[test]
fn gaussian_generator_is_seeded() {
    assert_eq!(gaussian_matrix(3, 5, 9).matrix(), gaussian_matrix(3, 5, 9).matrix());
}
