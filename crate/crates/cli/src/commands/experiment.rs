use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use wcs_core::bounds::{largest_singular_value, ripnsp_error_budget, weight_floor_constants, BudgetInputs};
use wcs_core::certify::{
    check_robust_nsp_kernel, exact_recovery_equivalence_test, nsp_constant, rip_constant, CertifyOptions,
};
use wcs_core::construct::{gaussian_matrix, orthonormal_rows, sample_partial_unitary, SamplingOptions, SenseMatrix, UnitaryBase};
use wcs_core::linalg::{c, to_cvector};
use wcs_core::solver::{solve, RecoveryProblem, SolverOptions};
use wcs_core::sparsity::{best_weighted_s_term, build_partition, SelectionOptions};
use wcs_core::{SparseModel, SparsityBudget, WeightProfile, C64};

use crate::config::{self, ExperimentConfig, Generator, WeightSpec};
use crate::output::Envelope;
use crate::{RunArgs, Verdict};

/// A CSV row that carries its own pass flag.
trait Row: Serialize + Send {
    fn pass(&self) -> bool;
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// 64-bit FNV-1a; ties resume tokens to the experiment definition.
fn fingerprint(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ResumeToken {
    experiment: String,
    next_trial: usize,
    fingerprint: u64,
}

impl ResumeToken {
    fn render(&self) -> String {
        format!("{}:{}:{:016x}", self.experiment, self.next_trial, self.fingerprint)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut parts = text.split(':');
        let (Some(e), Some(n), Some(f), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            bail!("malformed resume token {text:?}");
        };
        Ok(Self {
            experiment: e.to_string(),
            next_trial: n.parse().map_err(|_| anyhow!("malformed resume token {text:?}"))?,
            fingerprint: u64::from_str_radix(f, 16).map_err(|_| anyhow!("malformed resume token {text:?}"))?,
        })
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    experiment: &'static str,
    csv: PathBuf,
    trials_total: usize,
    /// Trials finished across this run and any resumed ones.
    trials_completed: usize,
    trials_this_run: usize,
    complete: bool,
    resume_token: Option<String>,
    rows: usize,
    rows_passed: usize,
    rows_failed: usize,
}

struct Sweep<'a> {
    name: &'static str,
    dir: &'a Path,
    total: usize,
    first: usize,
    max_trials: Option<usize>,
    max_seconds: Option<f64>,
    fingerprint: u64,
    resuming: bool,
}

impl Sweep<'_> {
    /// Runs trials in batches of the pool size, writing rows in trial order.
    fn run<R: Row>(&self, trial: impl Fn(usize) -> Result<Vec<R>> + Sync) -> Result<Summary> {
        let start = Instant::now();
        let csv_name = PathBuf::from(format!("{}.csv", self.name));
        let path = self.dir.join(&csv_name);
        let file = if self.resuming {
            OpenOptions::new().append(true).open(&path).with_context(|| format!("opening {} to resume", path.display()))?
        } else {
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?
        };
        let mut writer = csv::WriterBuilder::new().has_headers(!self.resuming).from_writer(file);
        let last = self.max_trials.map_or(self.total, |k| (self.first + k).min(self.total));
        let batch = rayon::current_num_threads().max(1);
        let (mut next, mut rows, mut passed) = (self.first, 0, 0);
        while next < last {
            if self.max_seconds.is_some_and(|limit| start.elapsed().as_secs_f64() >= limit) {
                break;
            }
            let end = (next + batch).min(last);
            let results: Vec<Result<Vec<R>>> = (next..end).into_par_iter().map(&trial).collect();
            for r in results {
                for row in r? {
                    rows += 1;
                    passed += usize::from(row.pass());
                    writer.serialize(&row)?;
                }
            }
            writer.flush()?;
            next = end;
        }
        let complete = next >= self.total;
        let token = (!complete).then(|| {
            ResumeToken { experiment: self.name.to_string(), next_trial: next, fingerprint: self.fingerprint }.render()
        });
        Ok(Summary {
            experiment: self.name,
            csv: csv_name,
            trials_total: self.total,
            trials_completed: next,
            trials_this_run: next - self.first,
            complete,
            resume_token: token,
            rows,
            rows_passed: passed,
            rows_failed: rows - passed,
        })
    }
}

// ---------------------------------------------------------------- equivalence

#[derive(Debug, Serialize)]
struct EquivalenceRow {
    trial: usize,
    seed: u64,
    m: usize,
    n: usize,
    model: String,
    s: f64,
    gamma: f64,
    gamma_upper: f64,
    status: String,
    supports_tested: usize,
    recoveries: usize,
    failures: usize,
    worst_relative_error: f64,
    competitor: bool,
    agrees: bool,
    pass: bool,
}

impl Row for EquivalenceRow {
    fn pass(&self) -> bool {
        self.pass
    }
}

#[allow(clippy::too_many_arguments)]
fn equivalence_trial(
    trial: usize,
    seed: u64,
    m: usize,
    n: usize,
    model: SparseModel,
    s: f64,
    w: &WeightProfile,
    plants: usize,
) -> Result<Vec<EquivalenceRow>> {
    let seed = seed.wrapping_add(trial as u64);
    let a = gaussian_matrix(m, n, seed);
    let budget = SparsityBudget::new(s, model)?;
    let opts = CertifyOptions { seed, ..CertifyOptions::default() };
    let v = exact_recovery_equivalence_test(a.matrix(), w, model, budget, plants, &opts, &SolverOptions::default())?;
    Ok(vec![EquivalenceRow {
        trial,
        seed,
        m,
        n,
        model: model.to_string(),
        s,
        gamma: v.nsp.gamma,
        gamma_upper: v.nsp.upper,
        status: kebab(&v.status),
        supports_tested: v.supports_tested,
        recoveries: v.recoveries,
        failures: v.failures,
        worst_relative_error: v.worst_relative_error,
        competitor: v.competitor.is_some(),
        agrees: v.agrees,
        pass: v.agrees,
    }])
}

// ---------------------------------------------------------------- error bound

#[derive(Debug, Serialize)]
struct ErrorBoundRow {
    trial: usize,
    seed: u64,
    noise: f64,
    delta_2s: f64,
    premise: bool,
    sigma_s: f64,
    error_l2: f64,
    /// `A₂σ_s/√s + B₂ε`, when the premise holds.
    bound: Option<f64>,
    /// The partition-based budget with the same constants.
    budget_l2: Option<f64>,
    residual: f64,
    pass: bool,
}

impl Row for ErrorBoundRow {
    fn pass(&self) -> bool {
        self.pass
    }
}

#[allow(clippy::too_many_arguments)]
fn error_bound_trial(
    trial: usize,
    seed: u64,
    n: usize,
    m: usize,
    s: usize,
    floor: f64,
    noise_levels: &[f64],
    tail: f64,
) -> Result<Vec<ErrorBoundRow>> {
    let seed = seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_partial_unitary(
        &UnitaryBase::Dft(n),
        m,
        seed,
        SamplingOptions { exclude_first_row: true, with_replacement: false },
    )?;
    let w = if floor < 1.0 {
        WeightSpec::Random { low: floor, high: 1.0, seed }.build(n)?
    } else {
        WeightProfile::uniform(n, 1.0)?
    };
    let model = SparseModel::Cardinality;
    let budget = SparsityBudget::new(s as f64, model)?;
    let opts = CertifyOptions { seed, ..CertifyOptions::default() };
    let delta = rip_constant(a.matrix(), &w, model, budget.times(2), &opts)?.delta;
    let constants = weight_floor_constants(delta, floor).ok();
    let n_nu = build_partition(&w, model, budget)?.count();
    let lambda = largest_singular_value(a.matrix());

    let mut x: Vec<C64> = (0..n).map(|_| c(tail * rng.random_range(-1.0..1.0), 0.0)).collect();
    for _ in 0..s {
        let i = rng.random_range(0..n);
        x[i] = c(rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0);
    }
    let clean = a.matrix() * to_cvector(&x);
    let sigma = best_weighted_s_term(&x, &w, model, budget, SelectionOptions::default())?.sigma;
    let mut rows = Vec::with_capacity(noise_levels.len());
    for &eps in noise_levels {
        if !(eps.is_finite() && eps >= 0.0) {
            bail!("noise level {eps} must be finite and nonnegative");
        }
        let e: Vec<C64> = (0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let scale = if eps > 0.0 { eps / norm2(&e) } else { 0.0 };
        let y: Vec<C64> = clean.iter().zip(&e).map(|(v, ei)| v + ei * scale).collect();
        let out = solve(&RecoveryProblem { a: a.matrix(), y: &y, w: &w, epsilon: eps }, &SolverOptions::default())?;
        let diff: Vec<C64> = out.x.iter().zip(&x).map(|(p, q)| p - q).collect();
        let error = norm2(&diff);
        let bound = constants.map(|k| k.a2 * sigma / (s as f64).sqrt() + k.b2 * eps);
        let budget_l2 = match constants {
            Some(k) => {
                let inputs =
                    BudgetInputs { sigma_s: sigma, s: s as f64, delta, n_nu, lambda_phi: lambda, epsilon: eps };
                ripnsp_error_budget(inputs, k.into())?.l2_bound
            }
            None => None,
        };
        rows.push(ErrorBoundRow {
            trial,
            seed,
            noise: eps,
            delta_2s: delta,
            premise: constants.is_some(),
            sigma_s: sigma,
            error_l2: error,
            bound,
            budget_l2,
            residual: out.residual,
            pass: bound.is_none_or(|b| error <= b),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- scaling

#[derive(Debug, Serialize)]
struct ScalingRow {
    trial: usize,
    seed: u64,
    factor: f64,
    delta: f64,
    delta_scaled: f64,
    /// `c² < (1−δ)/(1+δ)`, under which `δ(cA) > δ(A)` must hold.
    attack_applies: bool,
    nsp: f64,
    nsp_scaled: f64,
    robust_status: String,
    robust_status_scaled: String,
    pass: bool,
}

impl Row for ScalingRow {
    fn pass(&self) -> bool {
        self.pass
    }
}

fn generate(generator: Generator, n: usize, m: Option<usize>, seed: u64) -> Result<SenseMatrix> {
    let need_m = || m.ok_or_else(|| anyhow!("generator {} needs `m`", kebab(&generator)));
    Ok(match generator {
        Generator::Identity => SenseMatrix::identity(n),
        Generator::Gaussian => gaussian_matrix(need_m()?, n, seed),
        Generator::OrthonormalRows => orthonormal_rows(need_m()?, n, seed)?,
        Generator::Dft => sample_partial_unitary(
            &UnitaryBase::Dft(n),
            need_m()?,
            seed,
            SamplingOptions { exclude_first_row: true, with_replacement: false },
        )?,
    })
}

#[allow(clippy::too_many_arguments)]
fn scaling_trial(
    trial: usize,
    seed: u64,
    generator: Generator,
    n: usize,
    m: Option<usize>,
    model: SparseModel,
    s: f64,
    w: &WeightProfile,
    factors: &[f64],
    rho: f64,
    gamma: f64,
) -> Result<Vec<ScalingRow>> {
    let seed = seed.wrapping_add(trial as u64);
    let a = generate(generator, n, m, seed)?;
    let budget = SparsityBudget::new(s, model)?;
    let robust_budget = SparsityBudget::new(s, SparseModel::WeightedCardinality)?;
    let opts = CertifyOptions { seed, ..CertifyOptions::default() };
    let delta = rip_constant(a.matrix(), w, model, budget, &opts)?.delta;
    let nsp = nsp_constant(a.matrix(), w, model, budget, &opts)?.gamma;
    let robust = check_robust_nsp_kernel(a.matrix(), w, robust_budget, rho, gamma, &opts)?;
    let mut rows = Vec::with_capacity(factors.len());
    for &factor in factors {
        if !(factor.is_finite() && factor > 0.0) {
            bail!("scale factor {factor} must be positive");
        }
        let scaled = a.scaled(factor);
        let delta_scaled = rip_constant(scaled.matrix(), w, model, budget, &opts)?.delta;
        let nsp_scaled = nsp_constant(scaled.matrix(), w, model, budget, &opts)?.gamma;
        let robust_scaled = check_robust_nsp_kernel(scaled.matrix(), w, robust_budget, rho, gamma, &opts)?;
        let attack = factor * factor < (1.0 - delta) / (1.0 + delta);
        let same_kernel = (nsp - nsp_scaled).abs() <= 1e-10 * nsp.abs().max(1.0)
            || (nsp.is_infinite() && nsp_scaled.is_infinite());
        rows.push(ScalingRow {
            trial,
            seed,
            factor,
            delta,
            delta_scaled,
            attack_applies: attack,
            nsp,
            nsp_scaled,
            robust_status: kebab(&robust.status),
            robust_status_scaled: kebab(&robust_scaled.status),
            pass: same_kernel && (!attack || delta_scaled > delta),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- entry point

pub fn run(args: &RunArgs) -> Result<Verdict> {
    let start = Instant::now();
    let (mut cfg, _): (ExperimentConfig, _) = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        *cfg.seed_mut() = seed;
    }
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let fp = fingerprint(&serde_json::to_string(&cfg.identity())?);
    let first = match cfg.resume() {
        Some(text) => {
            let token = ResumeToken::parse(text)?;
            if token.experiment != cfg.name() || token.fingerprint != fp {
                bail!("resume token {text:?} belongs to a different experiment configuration");
            }
            if token.next_trial > cfg.trials() {
                bail!("resume token points past the last trial");
            }
            token.next_trial
        }
        None => 0,
    };
    let sweep = Sweep {
        name: cfg.name(),
        dir: &dir,
        total: cfg.trials(),
        first,
        max_trials: cfg.budget().max_trials,
        max_seconds: cfg.budget().max_seconds,
        fingerprint: fp,
        resuming: cfg.resume().is_some(),
    };
    let summary = match &cfg {
        ExperimentConfig::Equivalence { m, n, model, s, seed, weights, plants_per_support, .. } => {
            let w = weights.build(*n)?;
            sweep.run(|t| equivalence_trial(t, *seed, *m, *n, *model, *s, &w, *plants_per_support))?
        }
        ExperimentConfig::ErrorBound { n, m, s, weight_floor, noise_levels, tail, seed, .. } => {
            if !(*weight_floor > 0.0 && *weight_floor <= 1.0) {
                bail!("weight_floor must lie in (0, 1]");
            }
            sweep.run(|t| error_bound_trial(t, *seed, *n, *m, *s, *weight_floor, noise_levels, *tail))?
        }
        ExperimentConfig::Scaling { generator, n, m, model, s, factors, weights, rho, gamma, seed, .. } => {
            let w = weights.build(*n)?;
            sweep.run(|t| scaling_trial(t, *seed, *generator, *n, *m, *model, *s, &w, factors, *rho, *gamma))?
        }
    };
    let verdict = if summary.rows_failed == 0 { Verdict::Holds } else { Verdict::Fails };
    Envelope::new("experiment", summary, start.elapsed()).emit(Some(&dir), &format!("{}.json", cfg.name()))?;
    Ok(verdict)
}
