//! TOML configuration documents, one schema per command. Unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use wcs_core::certify::Property;
use wcs_core::construct::{
    gaussian_matrix, orthonormal_rows, sample_partial_unitary, InnerBase, SamplingOptions, SenseMatrix, UnitaryBase,
};
use wcs_core::linalg::c;
use wcs_core::solver::SolverOptions;
use wcs_core::{CMatrix, SparseModel, WeightProfile};

use crate::matfile;

/// Loads a config file; relative paths inside it resolve against its directory.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Dft,
    Dct,
}

/// Where a sensing matrix comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixSpec {
    File {
        path: PathBuf,
    },
    Identity {
        n: usize,
    },
    PartialUnitary {
        base: BaseKind,
        n: usize,
        m: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        exclude_first_row: bool,
        #[serde(default)]
        with_replacement: bool,
    },
    Gaussian {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    OrthonormalRows {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Real entries given inline, one array per row.
    Rows {
        rows: Vec<Vec<f64>>,
    },
}

impl MatrixSpec {
    pub fn override_seed(&mut self, new: u64) {
        match self {
            Self::PartialUnitary { seed, .. } | Self::Gaussian { seed, .. } | Self::OrthonormalRows { seed, .. } => {
                *seed = new
            }
            _ => {}
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<SenseMatrix> {
        Ok(match self {
            Self::File { path } => matfile::read(&base_dir.join(path))?.into_sense_matrix()?,
            Self::Identity { n } => SenseMatrix::identity(*n),
            Self::PartialUnitary { base, n, m, seed, exclude_first_row, with_replacement } => {
                let base = match base {
                    BaseKind::Dft => UnitaryBase::Dft(*n),
                    BaseKind::Dct => UnitaryBase::Dct(*n),
                };
                let opts = SamplingOptions { exclude_first_row: *exclude_first_row, with_replacement: *with_replacement };
                sample_partial_unitary(&base, *m, *seed, opts)?
            }
            Self::Gaussian { m, n, seed } => gaussian_matrix(*m, *n, *seed),
            Self::OrthonormalRows { m, n, seed } => orthonormal_rows(*m, *n, *seed)?,
            Self::Rows { rows } => {
                let n = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
                    bail!("inline matrix rows must be nonempty and of equal length");
                }
                let m = CMatrix::from_fn(rows.len(), n, |i, j| c(rows[i][j], 0.0));
                SenseMatrix::new(m, wcs_core::construct::Provenance::new(wcs_core::construct::Source::ExplicitFile))?
            }
        })
    }
}

/// Weight profile, sized by the matrix it accompanies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Uniform {
        #[serde(default = "one")]
        value: f64,
    },
    Values {
        values: Vec<f64>,
    },
    /// I.i.d. uniform on `[low, high)`.
    Random {
        low: f64,
        high: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self::Uniform { value: 1.0 }
    }
}

impl WeightSpec {
    pub fn build(&self, n: usize) -> Result<WeightProfile> {
        let w = match self {
            Self::Uniform { value } => vec![*value; n],
            Self::Values { values } => {
                if values.len() != n {
                    bail!("weights list has {} entries but the matrix has {n} columns", values.len());
                }
                values.clone()
            }
            Self::Random { low, high, seed } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    bail!("random weights need finite low < high, got [{low}, {high})");
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..n).map(|_| rng.random_range(*low..*high)).collect()
            }
        };
        Ok(WeightProfile::new(w)?)
    }

    pub fn override_seed(&mut self, new: u64) {
        if let Self::Random { seed, .. } = self {
            *seed = new;
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub property: Property,
    pub model: SparseModel,
    pub s: f64,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    /// RIP: satisfied when `δ < threshold`.
    #[serde(default = "default_rip_threshold")]
    pub threshold: f64,
    /// Robust NSP parameters.
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    /// Robust NSP: run the off-kernel falsification search.
    #[serde(default = "yes")]
    pub off_kernel_search: bool,
    pub margin: Option<f64>,
    pub cap: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_rip_threshold() -> f64 {
    1.0 / 3.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub feasibility_tol: Option<f64>,
    pub objective_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub polish: Option<bool>,
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            feasibility_tol: self.feasibility_tol.unwrap_or(d.feasibility_tol),
            objective_tol: self.objective_tol.unwrap_or(d.objective_tol),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            polish: self.polish.unwrap_or(d.polish),
        }
    }
}

/// A planted signal `x₀` with optional measurement noise of exact norm `noise`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub support: Vec<usize>,
    /// Real values on the support; drawn from `±[1, 2)` when absent.
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub epsilon: f64,
    /// Measurement vector file (an `m × 1` WCSMAT).
    pub measurements: Option<PathBuf>,
    pub planted: Option<PlantedSpec>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMode {
    #[default]
    None,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstructConfig {
    PartialUnitary {
        base: BaseKind,
        n: usize,
        m: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        exclude_first_row: bool,
        #[serde(default)]
        with_replacement: bool,
    },
    Gaussian {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    OrthonormalRows {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Counterexample {
        n: usize,
        m: usize,
        s: f64,
        model: SparseModel,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "default_inner")]
        inner_base: InnerBase,
        #[serde(default = "yes")]
        certify_inner: bool,
        reference_delta: Option<f64>,
        #[serde(default)]
        verify: VerifyMode,
        #[serde(default = "default_samples")]
        samples: usize,
    },
}

fn default_inner() -> InnerBase {
    InnerBase::Dft
}

fn default_samples() -> usize {
    1000
}

impl ConstructConfig {
    pub fn override_seed(&mut self, new: u64) {
        match self {
            Self::PartialUnitary { seed, .. }
            | Self::Gaussian { seed, .. }
            | Self::OrthonormalRows { seed, .. }
            | Self::Counterexample { seed, .. } => *seed = new,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Identity,
    Gaussian,
    OrthonormalRows,
    Dft,
}

/// Stopping rules shared by all sweeps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Stop after this many trials in one invocation.
    pub max_trials: Option<usize>,
    /// Stop starting new batches once this much wall time has elapsed.
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// NSP verdict against exhaustive planted recovery on Gaussian matrices.
    Equivalence {
        trials: usize,
        m: usize,
        n: usize,
        model: SparseModel,
        s: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "one_usize")]
        plants_per_support: usize,
        #[serde(default)]
        budget: Budget,
        resume: Option<String>,
    },
    /// Measured error of noise-aware recovery against the weight-floor bound.
    ErrorBound {
        trials: usize,
        n: usize,
        m: usize,
        s: usize,
        weight_floor: f64,
        noise_levels: Vec<f64>,
        #[serde(default = "default_tail")]
        tail: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        budget: Budget,
        resume: Option<String>,
    },
    /// Same kernel under scaling: δ moves, NSP does not, robust NSP can break.
    Scaling {
        trials: usize,
        generator: Generator,
        n: usize,
        #[serde(default)]
        m: Option<usize>,
        model: SparseModel,
        s: f64,
        factors: Vec<f64>,
        #[serde(default)]
        weights: WeightSpec,
        #[serde(default = "half")]
        rho: f64,
        #[serde(default = "two")]
        gamma: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        budget: Budget,
        resume: Option<String>,
    },
}

fn one_usize() -> usize {
    1
}

fn default_tail() -> f64 {
    0.01
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Equivalence { .. } => "equivalence",
            Self::ErrorBound { .. } => "error-bound",
            Self::Scaling { .. } => "scaling",
        }
    }

    pub fn trials(&self) -> usize {
        match self {
            Self::Equivalence { trials, .. } | Self::ErrorBound { trials, .. } | Self::Scaling { trials, .. } => *trials,
        }
    }

    pub fn seed_mut(&mut self) -> &mut u64 {
        match self {
            Self::Equivalence { seed, .. } | Self::ErrorBound { seed, .. } | Self::Scaling { seed, .. } => seed,
        }
    }

    pub fn budget(&self) -> &Budget {
        match self {
            Self::Equivalence { budget, .. } | Self::ErrorBound { budget, .. } | Self::Scaling { budget, .. } => budget,
        }
    }

    pub fn resume(&self) -> Option<&str> {
        match self {
            Self::Equivalence { resume, .. } | Self::ErrorBound { resume, .. } | Self::Scaling { resume, .. } => {
                resume.as_deref()
            }
        }
    }

    /// The config with run-control keys cleared; resume tokens are tied to it.
    pub fn identity(&self) -> Self {
        let mut c = self.clone();
        match &mut c {
            Self::Equivalence { budget, resume, .. }
            | Self::ErrorBound { budget, resume, .. }
            | Self::Scaling { budget, resume, .. } => {
                *budget = Budget::default();
                *resume = None;
            }
        }
        c
    }
}
