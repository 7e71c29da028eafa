//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any failure.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wcs_core::bounds::{operator_norm_bound, robust_nsp_constants, weight_floor_constants, weight_floor_threshold};
use wcs_core::certify::{
    exact_recovery_equivalence_test, nsp_constant, rip_constant, robust_nsp_excess, CertifyOptions, Status,
    RECOVERY_TOL,
};
use wcs_core::construct::{
    build_counterexample, gaussian_matrix, orthonormal_rows, shrink_to_break_robust_nsp,
    verify_nsp_of_counterexample, CounterexampleOptions, InnerBase, Provenance, SenseMatrix, Source,
    VerificationMode,
};
use wcs_core::linalg::{c, from_real, spectral_norm, to_cvector};
use wcs_core::solver::{solve_weighted_bp, solve_weighted_bpdn, SolverOptions};
use wcs_core::sparsity::{best_weighted_s_term, build_partition, weighted_l1_norm, SelectionOptions};
use wcs_core::{CMatrix, SparseModel, SparsityBudget, Support, WeightProfile, C64};

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// A matrix whose RIP premise held, kept for the operator-norm check.
struct Certified {
    a: CMatrix,
    w: WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
}

fn budget(s: f64, model: SparseModel) -> SparsityBudget {
    SparsityBudget::new(s, model).expect("valid budget")
}

fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn random_weights(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> WeightProfile {
    WeightProfile::new((0..n).map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) }).collect()).unwrap()
}

/// Near-isometric rows whose kernel is spanned by flat (±1-pattern) vectors,
/// with a small Gaussian perturbation.
fn flat_kernel_matrix(n: usize, d: usize, scale: f64, eta: f64, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut full = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    for j in 0..d {
        for i in 0..n {
            full[(i, j)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    let q = full.qr().q();
    let rows = q.columns(d, n - d).transpose() * scale;
    let noise = DMatrix::<f64>::from_fn(n - d, n, |_, _| rng.sample::<f64, _>(StandardNormal) * eta / (n as f64).sqrt());
    from_real(&(rows + noise))
}

// ---------------------------------------------------------------- criteria

fn equivalence() -> Line {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE0);
    let opts = CertifyOptions::default();
    let solver = SolverOptions::default();
    let (mut total, mut agree, mut satisfied, mut violated, mut worst) = (0, 0, 0, 0, 0.0f64);
    let mut problems = Vec::new();
    for trial in 0..60u64 {
        let m = rng.random_range(4..=8);
        let n = rng.random_range(m + 2..=14.min(m + 4));
        let (model, w, s) = if trial % 2 == 0 {
            let s = [1.0, 1.0, 2.0, 3.0][rng.random_range(0..4)];
            (SparseModel::Cardinality, random_weights(n, 1.0, 1.5, &mut rng), s)
        } else {
            let s = [1.5, 1.5, 2.5, 3.0][rng.random_range(0..4)];
            (SparseModel::WeightedCardinality, random_weights(n, 1.0, 1.2, &mut rng), s)
        };
        let a = gaussian_matrix(m, n, 1000 + trial).into_matrix();
        let v = exact_recovery_equivalence_test(&a, &w, model, budget(s, model), 1, &opts, &solver)
            .expect("equivalence run");
        total += 1;
        let ok = match v.status {
            Status::Satisfied => {
                satisfied += 1;
                worst = worst.max(v.worst_relative_error);
                v.failures == 0 && v.worst_relative_error <= RECOVERY_TOL
            }
            Status::Violated => {
                violated += 1;
                v.competitor.as_ref().is_some_and(|c| c.z_norm <= c.x_norm * (1.0 + 1e-9))
            }
            _ => false,
        };
        if ok && v.agrees {
            agree += 1;
        } else {
            problems.push(format!("trial {trial} ({m}x{n}, {model}, s={s}): {:?}", v.status));
        }
    }
    Line {
        name: "NSP verdict matches exhaustive recovery",
        pass: agree == total && total >= 50,
        detail: format!(
            "{agree}/{total} agree ({satisfied} satisfied, {violated} violated), worst planted error {worst:.1e}, {:.1?}{}",
            t0.elapsed(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    }
}

/// Independent RIP oracle: eigenvalues of the Gram matrix on every admissible support.
fn rip_oracle(a: &CMatrix, w: &WeightProfile, model: SparseModel, s: f64) -> f64 {
    let n = a.ncols();
    let mut delta = 0.0f64;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let nu: f64 = match model {
            SparseModel::Cardinality => idx.len() as f64,
            SparseModel::WeightedCardinality => idx.iter().map(|&i| w[i] * w[i]).sum(),
        };
        if nu > s * (1.0 + 1e-12) {
            continue;
        }
        let sub = CMatrix::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])]);
        let gram = sub.adjoint() * &sub;
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let lmax = eig.iter().copied().fold(f64::MIN, f64::max);
        let lmin = eig.iter().copied().fold(f64::MAX, f64::min);
        delta = delta.max(lmax - 1.0).max(1.0 - lmin);
    }
    delta
}

fn rip_matches_oracle() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let opts = CertifyOptions::default();
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let n = rng.random_range(6..=14);
        let m = rng.random_range(3..n);
        let a = if trial % 2 == 0 {
            gaussian_matrix(m, n, 2000 + trial).into_matrix()
        } else {
            let k = (2.0 * m as f64).sqrt();
            CMatrix::from_fn(m, n, |_, _| c(rng.sample::<f64, _>(StandardNormal) / k, rng.sample::<f64, _>(StandardNormal) / k))
        };
        let (model, w, s) = if trial % 4 < 2 {
            (SparseModel::Cardinality, WeightProfile::uniform(n, 1.0).unwrap(), rng.random_range(1..=4) as f64)
        } else {
            (SparseModel::WeightedCardinality, random_weights(n, 1.0, 1.5, &mut rng), rng.random_range(4.5..8.0))
        };
        let measured = rip_constant(&a, &w, model, budget(s, model), &opts).unwrap().delta;
        worst = worst.max((measured - rip_oracle(&a, &w, model, s)).abs());
    }
    Line {
        name: "RIP constant matches eigenvalue oracle",
        pass: worst <= 1e-10,
        detail: format!("20 instances, max deviation {worst:.1e} (tolerance 1e-10)"),
    }
}

fn weight_floor_chain(keep: &mut Vec<Certified>) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB3);
    let opts = CertifyOptions::default();
    let solver = SolverOptions::default();
    let model = SparseModel::Cardinality;
    let s = 2.0;
    let (mut trials, mut attempts, mut nsp_bad, mut err_bad, mut solver_bad) = (0, 0, 0, 0, 0);
    let mut tightest = f64::INFINITY;
    while trials < 120 && attempts < 2000 {
        attempts += 1;
        let gamma = [0.8, 0.9, 1.0][attempts % 3];
        let n = [10, 12, 14][rng.random_range(0..3)];
        let d = rng.random_range(1..=2);
        let a = flat_kernel_matrix(n, d, rng.random_range(1.01..1.1f64).sqrt(), 0.02, &mut rng);
        let w = random_weights(n, gamma, 1.0, &mut rng);
        let delta = rip_constant(&a, &w, model, budget(2.0 * s, model), &opts).unwrap().delta;
        if delta >= weight_floor_threshold(gamma) {
            continue;
        }
        trials += 1;
        let k = weight_floor_constants(delta, gamma).unwrap();
        let g = nsp_constant(&a, &w, model, budget(s, model), &opts).unwrap().gamma;
        if g > k.nsp_bound + 1e-8 {
            nsp_bad += 1;
        }

        // Compressible signal plus bounded noise.
        let mut x: Vec<C64> = (0..n).map(|_| c(0.01 * rng.sample::<f64, _>(StandardNormal), 0.0)).collect();
        for _ in 0..2 {
            let i = rng.random_range(0..n);
            x[i] = c(rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0);
        }
        let rho = [0.0, 1e-3, 1e-2][trials % 3];
        let e: Vec<C64> = (0..a.nrows()).map(|_| c(rng.sample(StandardNormal), 0.0)).collect();
        let en = norm2(&e);
        let y: Vec<C64> = (&a * to_cvector(&x)).iter().zip(&e).map(|(v, ei)| v + ei * (rho / en)).collect();
        let out = if rho == 0.0 {
            solve_weighted_bp(&a, &y, &w, &solver)
        } else {
            solve_weighted_bpdn(&a, &y, &w, rho, &solver)
        };
        let Ok(out) = out else {
            solver_bad += 1;
            continue;
        };
        let sigma = best_weighted_s_term(&x, &w, model, budget(s, model), SelectionOptions::default()).unwrap().sigma;
        let bound = k.a2 * sigma / s.sqrt() + k.b2 * rho;
        let err = norm2(&out.x.iter().zip(&x).map(|(p, q)| p - q).collect::<Vec<_>>());
        if err > bound {
            err_bad += 1;
        }
        tightest = tightest.min(bound / err.max(1e-300));
        keep.push(Certified { a, w, model, s: budget(s, model) });
    }
    Line {
        name: "weight-floor RIP chain (NSP bound and planted error)",
        pass: trials >= 100 && nsp_bad + err_bad + solver_bad == 0,
        detail: format!(
            "{trials} premise trials of {attempts} drawn; NSP violations {nsp_bad}, error violations {err_bad}, solver failures {solver_bad}; smallest bound/error ratio {tightest:.2}"
        ),
    }
}

fn robust_chain(keep: &mut Vec<Certified>) -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let opts = CertifyOptions::default();
    let model = SparseModel::WeightedCardinality;
    let (mut trials, mut attempts, mut bad) = (0, 0, 0);
    let mut worst_slack = f64::INFINITY;
    while trials < 60 && attempts < 600 {
        attempts += 1;
        let n = [16, 18, 20][rng.random_range(0..3)];
        let d = rng.random_range(1..=2);
        let a = flat_kernel_matrix(n, d, rng.random_range(1.1..1.25f64).sqrt(), 0.02, &mut rng);
        let w = random_weights(n, 1.0, 1.1, &mut rng);
        let s = 2.0 * w.max() * w.max();
        let delta = rip_constant(&a, &w, model, budget(3.0 * s, model), &opts).unwrap().delta;
        let Ok(k) = robust_nsp_constants(delta) else {
            continue;
        };
        trials += 1;
        let g = nsp_constant(&a, &w, model, budget(s, model), &opts).unwrap().gamma;
        if g > k.rho + 1e-8 {
            bad += 1;
        }
        worst_slack = worst_slack.min(k.rho - g);
        keep.push(Certified { a, w, model, s: budget(s, model) });
    }
    Line {
        name: "weighted RIP at triple order implies NSP bound",
        pass: trials >= 50 && bad == 0,
        detail: format!("{trials} premise trials of {attempts} drawn; violations {bad}; smallest slack {worst_slack:.3}"),
    }
}

fn operator_norm(certified: &[Certified]) -> (Line, Line) {
    let opts = CertifyOptions::default();
    let (mut bad, mut weighted, mut estimate_bad) = (0, 0, 0);
    let mut worst = 0.0f64;
    for inst in certified {
        let delta = rip_constant(&inst.a, &inst.w, inst.model, inst.s, &opts).unwrap().delta;
        let p = build_partition(&inst.w, inst.model, inst.s).unwrap();
        let bound = operator_norm_bound(delta, p.count()).unwrap();
        let norm = spectral_norm(&inst.a);
        if norm > bound * (1.0 + 1e-12) {
            bad += 1;
        }
        worst = worst.max(norm / bound);
        if inst.model == SparseModel::WeightedCardinality {
            weighted += 1;
            if p.respects_nv_estimate() != Some(true) {
                estimate_bad += 1;
            }
        }
    }
    (
        Line {
            name: "operator norm within partition bound",
            pass: bad == 0 && !certified.is_empty(),
            detail: format!("{} certified matrices, violations {bad}, largest norm/bound {worst:.3}", certified.len()),
        },
        Line {
            name: "partition count within N·max ω²/s + 1 (weighted model)",
            pass: estimate_bad == 0 && weighted > 0,
            detail: format!("{weighted} weighted instances, violations {estimate_bad}"),
        },
    )
}

fn counterexample_identities() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD5);
    let (n, m, s) = (64, 20, 4.0);
    let mut failures = Vec::new();
    let mut builds = 0;
    let mut norm_checks = 0;
    for weighted in [false, true] {
        for seed in 0..10u64 {
            let (model, w) = if weighted {
                (SparseModel::WeightedCardinality, random_weights(n, 1.0, 1.2, &mut rng))
            } else {
                (SparseModel::Cardinality, WeightProfile::uniform(n, 1.0).unwrap())
            };
            let b = build_counterexample(&w, model, budget(s, model), m, seed, &CounterexampleOptions::default())
                .expect("counterexample build");
            builds += 1;
            let dg = &b.diagnostics;
            let mut fail = |what: &str, v: f64| failures.push(format!("{model} seed {seed}: {what} {v:.2e}"));
            if dg.orthonormal_rows.value > 1e-10 {
                fail("row orthonormality", dg.orthonormal_rows.value);
            }
            if dg.d_in_kernel.value > 1e-9 {
                fail("Φd", dg.d_in_kernel.value);
            }
            if dg.phi1_orthogonal_d.value > 1e-10 {
                fail("⟨φ₁,d⟩", dg.phi1_orthogonal_d.value);
            }
            if dg.measurement_gap.value > 1e-8 {
                fail("measurement gap", dg.measurement_gap.value);
            }
            // Recompute the measurement gap directly from the bundle.
            let diff: Vec<C64> = b.x_hat.iter().zip(&b.x0).map(|(p, q)| p - q).collect();
            let gap = norm2((b.phi.matrix() * to_cvector(&diff)).as_slice());
            if ((gap - b.phi_normalizer) / b.phi_normalizer).abs() > 1e-8 {
                fail("recomputed measurement gap", gap);
            }
            if n as f64 >= 24.0 * w.max() * w.max() * s {
                norm_checks += 1;
                let (xh, x0) = (weighted_l1_norm(&b.x_hat, &w).unwrap(), weighted_l1_norm(&b.x0, &w).unwrap());
                if xh > x0 * (1.0 + 1e-12) {
                    fail("‖x̂‖ − ‖x₀‖", xh - x0);
                }
            }
        }
    }

    // Larger builds where the norm comparison applies.
    for weighted in [false, true] {
        for seed in 0..3u64 {
            let n = 128;
            let (model, w) = if weighted {
                (SparseModel::WeightedCardinality, random_weights(n, 1.0, 1.1, &mut rng))
            } else {
                (SparseModel::Cardinality, WeightProfile::uniform(n, 1.0).unwrap())
            };
            let b = build_counterexample(&w, model, budget(s, model), 40, seed, &CounterexampleOptions::default())
                .expect("counterexample build");
            builds += 1;
            if n as f64 >= 24.0 * w.max() * w.max() * s {
                norm_checks += 1;
                let (xh, x0) = (weighted_l1_norm(&b.x_hat, &w).unwrap(), weighted_l1_norm(&b.x0, &w).unwrap());
                if xh > x0 * (1.0 + 1e-12) || !b.diagnostics.identities_hold() {
                    failures.push(format!("N=128 {model} seed {seed}: ‖x̂‖ {xh:.4} vs ‖x₀‖ {x0:.4}"));
                }
            }
        }
    }

    // Exact confirmation within the cap, with a real inner base.
    let mut exact = 0;
    for weighted in [false, true] {
        for seed in 0..3u64 {
            let (model, w, s) = if weighted {
                (SparseModel::WeightedCardinality, random_weights(24, 1.0, 1.1, &mut rng), 2.5)
            } else {
                (SparseModel::Cardinality, WeightProfile::uniform(24, 1.0).unwrap(), 2.0)
            };
            let opts = CounterexampleOptions { inner_base: InnerBase::Dct, ..Default::default() };
            let b = build_counterexample(&w, model, budget(s, model), 18, seed, &opts).expect("in-cap build");
            let v = verify_nsp_of_counterexample(&b, VerificationMode::Exact, &CertifyOptions::default()).unwrap();
            exact += 1;
            if !(b.diagnostics.identities_hold() && v.holds()) {
                failures.push(format!("in-cap {model} seed {seed}: status {:?}, max ratio {:.3}", v.status, v.max_ratio));
            }
        }
    }
    Line {
        name: "counterexample construction identities",
        pass: failures.is_empty(),
        detail: format!(
            "{builds} builds at N=64, m=20 and N=128, m=40, s=4 ({norm_checks} with norm comparison in range), {exact} in-cap exact NSP confirmations{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn scaling_demos() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF6);
    let opts = CertifyOptions::default();
    let mut failures = Vec::new();
    let mut cases = 0;
    for trial in 0..10u64 {
        let n = rng.random_range(8..=12);
        let m = n - rng.random_range(1..=3);
        let a = if trial % 2 == 0 {
            orthonormal_rows(m, n, 3000 + trial).unwrap()
        } else {
            let p = Provenance { note: Some("flat kernel".into()), ..Provenance::new(Source::ExplicitFile) };
            SenseMatrix::new(flat_kernel_matrix(n, n - m, 1.0, 0.05, &mut rng), p).unwrap()
        };
        let (model, w, s) = if trial % 3 == 0 {
            (SparseModel::Cardinality, WeightProfile::uniform(n, 1.0).unwrap(), 2.0)
        } else {
            let w = random_weights(n, 1.0, 1.2, &mut rng);
            let s = 2.0 * w.max() * w.max();
            (SparseModel::WeightedCardinality, w, s)
        };
        let sb = budget(s, model);
        let delta = rip_constant(a.matrix(), &w, model, sb, &opts).unwrap().delta;
        if delta >= 1.0 {
            continue;
        }
        cases += 1;
        let factor = (0.5 * (1.0 - delta) / (1.0 + delta)).sqrt();
        let scaled = a.scaled(factor);
        let delta_c = rip_constant(scaled.matrix(), &w, model, sb, &opts).unwrap().delta;
        if delta_c <= delta {
            failures.push(format!("trial {trial}: δ(cA) = {delta_c:.4} ≤ δ(A) = {delta:.4}"));
        }
        let g = nsp_constant(a.matrix(), &w, model, sb, &opts).unwrap().gamma;
        let gc = nsp_constant(scaled.matrix(), &w, model, sb, &opts).unwrap().gamma;
        if (g - gc).abs() > 1e-10 {
            failures.push(format!("trial {trial}: NSP moved by {:.1e}", (g - gc).abs()));
        }

        // Shrinking breaks the robust NSP at the constants the RIP would give.
        let mut x: Vec<C64> = (0..n).map(|_| c(0.01 * rng.sample::<f64, _>(StandardNormal), 0.0)).collect();
        x[rng.random_range(0..n)] = c(1.0, 0.5);
        let (rho, gamma) = match robust_nsp_constants(delta.min(0.3)) {
            Ok(k) => (k.rho, k.gamma),
            Err(_) => (0.5, 2.0),
        };
        let cert = shrink_to_break_robust_nsp(&a, &w, sb, rho, gamma, &x, 0.5, opts.cap).unwrap();
        let excess = robust_nsp_excess(cert.matrix.matrix(), &w, s, rho, gamma, &x, &cert.support);
        let admissible = model.measure(&cert.support, &w) <= s * (1.0 + 1e-12);
        if !(cert.replay_violated && excess > 0.0 && admissible) {
            failures.push(format!("trial {trial}: shrink replay excess {excess:.2e}"));
        }
        let kernel_same = nsp_constant(cert.matrix.matrix(), &w, model, sb, &opts).unwrap().gamma;
        if (kernel_same - g).abs() > 1e-10 {
            failures.push(format!("trial {trial}: shrink changed NSP by {:.1e}", (kernel_same - g).abs()));
        }
    }
    Line {
        name: "scaling keeps NSP, breaks RIP and robust NSP",
        pass: failures.is_empty() && cases >= 5,
        detail: format!(
            "{cases} matrices{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn knapsack() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(0x77);
    let model = SparseModel::WeightedCardinality;
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(4..=14);
        let w = random_weights(n, 1.0, 3.0, &mut rng);
        let x: Vec<C64> = (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let s = rng.random_range(2.0 * w.max() * w.max()..30.0f64.max(2.0 * w.max() * w.max() + 1.0));
        let best = best_weighted_s_term(&x, &w, model, budget(s, model), SelectionOptions::default()).unwrap();
        let total = weighted_l1_norm(&x, &w).unwrap();
        let mut oracle = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let sup = Support::new((0..n).filter(|i| mask >> i & 1 == 1).collect(), n).unwrap();
            if model.measure(&sup, &w) <= s * (1.0 + 1e-12) {
                let kept: f64 = sup.iter().map(|i| w[i] * x[i].norm()).sum();
                oracle = oracle.min(total - kept);
            }
        }
        let admissible = model.measure(&best.support, &w) <= s * (1.0 + 1e-12);
        if !admissible || (best.sigma - oracle).abs() > 1e-12 * (1.0 + total) {
            mismatches += 1;
        }
    }
    Line {
        name: "best weighted s-term matches exhaustive search",
        pass: mismatches == 0,
        detail: format!("100 instances, mismatches {mismatches}"),
    }
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut certified = Vec::new();
    let mut lines = vec![equivalence(), rip_matches_oracle()];
    lines.push(weight_floor_chain(&mut certified));
    lines.push(robust_chain(&mut certified));
    let (op, nv) = operator_norm(&certified);
    lines.push(op);
    lines.push(nv);
    lines.push(counterexample_identities());
    lines.push(scaling_demos());
    lines.push(knapsack());
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} of {} criteria passed in {:.1?}", lines.len() - failed, lines.len(), t0.elapsed());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
