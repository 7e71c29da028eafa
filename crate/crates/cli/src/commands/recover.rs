use std::time::Instant;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wcs_core::linalg::{c, to_cvector};
use wcs_core::solver::{solve, RecoveryProblem, SolverOutcome};
use wcs_core::{Support, C64};

use super::MatrixSummary;
use crate::config::{self, PlantedSpec, RecoverConfig};
use crate::matfile;
use crate::output::Envelope;
use crate::{RunArgs, Verdict};

#[derive(Debug, Serialize)]
struct Recovery {
    support: Support,
    noise_norm: f64,
    /// `‖x̂ − x₀‖₂`.
    l2_error: f64,
    relative_error: f64,
}

#[derive(Debug, Serialize)]
struct RecoverResult {
    matrix: MatrixSummary,
    epsilon: f64,
    measurement_norm: f64,
    outcome: SolverOutcome,
    recovery: Option<Recovery>,
}

fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `x₀` on the planted support and the noisy measurements `A x₀ + e`.
fn plant(a: &wcs_core::CMatrix, p: &PlantedSpec) -> Result<(Vec<C64>, Vec<C64>, Support)> {
    let n = a.ncols();
    let support = Support::new(p.support.clone(), n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let values: Vec<f64> = match &p.values {
        Some(v) if v.len() == support.len() => v.clone(),
        Some(v) => bail!("planted values has {} entries for a support of size {}", v.len(), support.len()),
        None => (0..support.len())
            .map(|_| rng.random_range(1.0..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect(),
    };
    let mut x0 = vec![c(0.0, 0.0); n];
    for (i, v) in support.iter().zip(values) {
        x0[i] = c(v, 0.0);
    }
    let mut y: Vec<C64> = (a * to_cvector(&x0)).iter().copied().collect();
    if !(p.noise.is_finite() && p.noise >= 0.0) {
        bail!("planted noise {} must be finite and nonnegative", p.noise);
    }
    if p.noise > 0.0 {
        let e: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = p.noise / e.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (yi, ei) in y.iter_mut().zip(e) {
            *yi += c(ei * scale, 0.0);
        }
    }
    Ok((x0, y, support))
}

pub fn run(args: &RunArgs) -> Result<Verdict> {
    let start = Instant::now();
    let (mut cfg, base): (RecoverConfig, _) = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.matrix.override_seed(seed);
        cfg.weights.override_seed(seed);
        if let Some(p) = cfg.planted.as_mut() {
            p.seed = seed;
        }
    }
    let a = cfg.matrix.build(&base)?;
    let w = cfg.weights.build(a.cols())?;
    let (x0, y, support) = match (&cfg.measurements, &cfg.planted) {
        (Some(path), None) => (None, matfile::read_vector(&base.join(path))?, None),
        (None, Some(p)) => {
            let (x0, y, sup) = plant(a.matrix(), p)?;
            (Some(x0), y, Some(sup))
        }
        _ => bail!("give exactly one of `measurements` (a vector file) or a `[planted]` section"),
    };
    let problem = RecoveryProblem { a: a.matrix(), y: &y, w: &w, epsilon: cfg.epsilon };
    let outcome = solve(&problem, &cfg.solver.options())?;
    let recovery = x0.as_ref().zip(support).map(|(x0, support)| {
        let diff: Vec<C64> = outcome.x.iter().zip(x0).map(|(p, q)| p - q).collect();
        let l2_error = norm2(&diff);
        Recovery {
            support,
            noise_norm: cfg.planted.as_ref().map_or(0.0, |p| p.noise),
            l2_error,
            relative_error: l2_error / norm2(x0).max(f64::MIN_POSITIVE),
        }
    });
    if let Some(dir) = args.out.as_deref() {
        std::fs::create_dir_all(dir)?;
        matfile::write_vector(&dir.join("x_hat.wcsmat"), &outcome.x)?;
        if let Some(x0) = &x0 {
            matfile::write_vector(&dir.join("x0.wcsmat"), x0)?;
        }
    }
    let result = RecoverResult {
        matrix: MatrixSummary::of(&a),
        epsilon: cfg.epsilon,
        measurement_norm: norm2(&y),
        outcome,
        recovery,
    };
    Envelope::new("recover", result, start.elapsed()).emit(args.out.as_deref(), "recover.json")?;
    Ok(Verdict::Holds)
}
