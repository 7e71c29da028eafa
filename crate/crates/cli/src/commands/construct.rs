use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use wcs_core::certify::CertifyOptions;
use wcs_core::construct::{
    build_counterexample, gaussian_matrix, orthonormal_rows, sample_partial_unitary, verify_nsp_of_counterexample,
    Check, CounterexampleDiagnostics, CounterexampleOptions, NspVerification, SamplingOptions, SenseMatrix,
    UnitaryBase, VerificationMode,
};
use wcs_core::{SparseModel, SparsityBudget};

use super::MatrixSummary;
use crate::config::{self, BaseKind, ConstructConfig, VerifyMode};
use crate::matfile;
use crate::output::Envelope;
use crate::{RunArgs, Verdict};

#[derive(Debug, Serialize)]
struct NamedCheck {
    name: &'static str,
    #[serde(flatten)]
    check: Check,
}

#[derive(Debug, Serialize)]
struct CounterexampleManifest {
    model: SparseModel,
    s: f64,
    k: usize,
    alpha: f64,
    phi_normalizer: f64,
    checks: Vec<NamedCheck>,
    identities_hold: bool,
    diagnostics: CounterexampleDiagnostics,
    nsp_verification: Option<NspVerification>,
}

#[derive(Debug, Serialize)]
struct ConstructResult {
    kind: &'static str,
    matrix: MatrixSummary,
    files: Vec<PathBuf>,
    counterexample: Option<CounterexampleManifest>,
}

fn named_checks(d: &CounterexampleDiagnostics) -> Vec<NamedCheck> {
    [
        ("orthonormal-rows", &d.orthonormal_rows),
        ("d-in-kernel", &d.d_in_kernel),
        ("phi1-orthogonal-d", &d.phi1_orthogonal_d),
        ("phi1-unit", &d.phi1_unit),
        ("x-hat-closed-form", &d.x_hat_closed_form),
        ("measurement-gap-equals-rho", &d.measurement_gap),
        ("x-hat-feasible", &d.x_hat_feasible),
    ]
    .into_iter()
    .map(|(name, check)| NamedCheck { name, check: check.clone() })
    .collect()
}

fn write_matrix(dir: &Path, files: &mut Vec<PathBuf>, a: &SenseMatrix) -> Result<()> {
    let path = dir.join("phi.wcsmat");
    matfile::write(&path, a.matrix(), Some(a.provenance()))?;
    files.push(PathBuf::from("phi.wcsmat"));
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<Verdict> {
    let start = Instant::now();
    let (mut cfg, _): (ConstructConfig, _) = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let mut verdict = Verdict::Holds;
    let result = match cfg {
        ConstructConfig::PartialUnitary { base, n, m, seed, exclude_first_row, with_replacement } => {
            let base = match base {
                BaseKind::Dft => UnitaryBase::Dft(n),
                BaseKind::Dct => UnitaryBase::Dct(n),
            };
            let a = sample_partial_unitary(&base, m, seed, SamplingOptions { exclude_first_row, with_replacement })?;
            write_matrix(&dir, &mut files, &a)?;
            ConstructResult { kind: "partial-unitary", matrix: MatrixSummary::of(&a), files, counterexample: None }
        }
        ConstructConfig::Gaussian { m, n, seed } => {
            let a = gaussian_matrix(m, n, seed);
            write_matrix(&dir, &mut files, &a)?;
            ConstructResult { kind: "gaussian", matrix: MatrixSummary::of(&a), files, counterexample: None }
        }
        ConstructConfig::OrthonormalRows { m, n, seed } => {
            let a = orthonormal_rows(m, n, seed)?;
            write_matrix(&dir, &mut files, &a)?;
            ConstructResult { kind: "orthonormal-rows", matrix: MatrixSummary::of(&a), files, counterexample: None }
        }
        ConstructConfig::Counterexample {
            n,
            m,
            s,
            model,
            seed,
            weights,
            inner_base,
            certify_inner,
            reference_delta,
            verify,
            samples,
        } => {
            let w = weights.build(n)?;
            let budget = SparsityBudget::new(s, model)?;
            let opts = CounterexampleOptions { inner_base, certify_inner, reference_delta, ..Default::default() };
            let b = build_counterexample(&w, model, budget, m, seed, &opts)?;
            write_matrix(&dir, &mut files, &b.phi)?;
            for (name, v) in [("d", &b.d), ("phi1", &b.phi1), ("x0", &b.x0), ("x_hat", &b.x_hat), ("y", &b.y)] {
                let file = format!("{name}.wcsmat");
                matfile::write_vector(&dir.join(&file), v)?;
                files.push(PathBuf::from(file));
            }
            let nsp_verification = match verify {
                VerifyMode::None => None,
                VerifyMode::Exact => Some(verify_nsp_of_counterexample(&b, VerificationMode::Exact, &CertifyOptions::default())?),
                VerifyMode::Sampled => Some(verify_nsp_of_counterexample(
                    &b,
                    VerificationMode::Sampled { samples, seed },
                    &CertifyOptions::default(),
                )?),
            };
            let identities_hold = b.diagnostics.identities_hold();
            if !identities_hold || nsp_verification.as_ref().is_some_and(|v| !v.holds()) {
                verdict = Verdict::Fails;
            }
            ConstructResult {
                kind: "counterexample",
                matrix: MatrixSummary::of(&b.phi),
                files,
                counterexample: Some(CounterexampleManifest {
                    model,
                    s,
                    k: b.k,
                    alpha: b.alpha,
                    phi_normalizer: b.phi_normalizer,
                    checks: named_checks(&b.diagnostics),
                    identities_hold,
                    diagnostics: b.diagnostics.clone(),
                    nsp_verification,
                }),
            }
        }
    };
    Envelope::new("construct", result, start.elapsed()).emit(Some(&dir), "manifest.json")?;
    Ok(verdict)
}
