use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use wcs_core::certify::{certify_nsp, certify_rip, check_robust_nsp_kernel, CertificationReport, CertifyOptions, Property};
use wcs_core::{SparseModel, SparsityBudget};

use super::MatrixSummary;
use crate::config::{self, CertifyConfig};
use crate::output::Envelope;
use crate::{RunArgs, Verdict};

#[derive(Debug, Serialize)]
struct CertifyResult {
    matrix: MatrixSummary,
    weights: Vec<f64>,
    /// `s ≥ 2·max_i ν_ω({i})`.
    standing_assumption: bool,
    report: CertificationReport,
}

pub fn run(args: &RunArgs) -> Result<Verdict> {
    let start = Instant::now();
    let (mut cfg, base): (CertifyConfig, _) = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.matrix.override_seed(seed);
        cfg.weights.override_seed(seed);
        cfg.seed = seed;
    }
    let a = cfg.matrix.build(&base)?;
    let w = cfg.weights.build(a.cols())?;
    let s = SparsityBudget::new(cfg.s, cfg.model)?;
    let mut opts = CertifyOptions { seed: cfg.seed, ..CertifyOptions::default() };
    if let Some(cap) = cfg.cap {
        opts.cap = cap;
    }
    if let Some(margin) = cfg.margin {
        opts.margin = margin;
    }
    if !cfg.off_kernel_search {
        opts.robust_search_starts = 0;
    }
    let report = match cfg.property {
        Property::Rip => certify_rip(a.matrix(), &w, cfg.model, s, cfg.threshold, &opts)?,
        Property::Nsp => certify_nsp(a.matrix(), &w, cfg.model, s, &opts)?,
        Property::RobustNsp => {
            if cfg.model != SparseModel::WeightedCardinality {
                bail!("robust-nsp is certified for the weighted-cardinality model only");
            }
            let rho = cfg.rho.ok_or_else(|| anyhow!("robust-nsp needs `rho`"))?;
            let gamma = cfg.gamma.ok_or_else(|| anyhow!("robust-nsp needs `gamma`"))?;
            check_robust_nsp_kernel(a.matrix(), &w, s, rho, gamma, &opts)?
        }
    };
    let verdict = if report.satisfied { Verdict::Holds } else { Verdict::Fails };
    let result = CertifyResult {
        matrix: MatrixSummary::of(&a),
        standing_assumption: s.satisfies_standing_assumption(&w, cfg.model),
        weights: w.as_slice().to_vec(),
        report,
    };
    Envelope::new("certify", result, start.elapsed()).emit(args.out.as_deref(), "certify.json")?;
    Ok(verdict)
}
