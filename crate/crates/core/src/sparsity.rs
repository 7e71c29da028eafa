//! Weights, sparse functions, supports and the weighted ℓ1 geometry built on them.
//!
//! Two sparse functions are supported: plain cardinality `|S|` and the weighted
//! cardinality `Σ_{i∈S} ω_i²`. Every "for all admissible supports" quantifier in
//! the crate is realised through [`enumerate_admissible_supports`], which refuses
//! to run above the enumeration cap.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on the ambient dimension for exhaustive support enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Relative slack used when comparing a support measure against the budget.
const BUDGET_SLACK: f64 = 1e-12;

/// Enumeration cap in force for this process: `WCS_ENUM_CAP` if set and valid,
/// otherwise [`DEFAULT_ENUMERATION_CAP`].
pub fn enumeration_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("WCS_ENUM_CAP")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .unwrap_or(DEFAULT_ENUMERATION_CAP)
    })
}

pub(crate) fn budget_limit(s: f64) -> f64 {
    s + BUDGET_SLACK * s.abs().max(1.0)
}

/// Positive per-index weights with cached extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct WeightProfile {
    w: Vec<f64>,
    max: f64,
    min: f64,
}

impl WeightProfile {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("weight vector is empty".into()));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "weight {i} is {v}; every weight must be strictly positive and finite"
            )));
        }
        let max = w.iter().copied().fold(f64::MIN, f64::max);
        let min = w.iter().copied().fold(f64::MAX, f64::min);
        Ok(Self { w, max, min })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// `‖ω‖_∞`.
    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    /// Weights restricted to the trailing indices `start..N`.
    pub fn tail(&self, start: usize) -> Result<Self> {
        Self::new(self.w[start.min(self.w.len())..].to_vec())
    }
}

impl std::ops::Index<usize> for WeightProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.w[i]
    }
}

impl From<WeightProfile> for Vec<f64> {
    fn from(w: WeightProfile) -> Self {
        w.w
    }
}

impl TryFrom<Vec<f64>> for WeightProfile {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

/// Which sparse function `ν_ω` measures the size of a support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparseModel {
    /// `ν_ω(S) = |S|`.
    Cardinality,
    /// `ν_ω(S) = Σ_{i∈S} ω_i²`.
    WeightedCardinality,
}

impl SparseModel {
    pub fn index_measure(self, w: &WeightProfile, i: usize) -> f64 {
        match self {
            SparseModel::Cardinality => 1.0,
            SparseModel::WeightedCardinality => w[i] * w[i],
        }
    }

    pub fn measure(self, support: &Support, w: &WeightProfile) -> f64 {
        support.iter().map(|i| self.index_measure(w, i)).sum()
    }

    pub fn name(self) -> &'static str {
        match self {
            SparseModel::Cardinality => "cardinality",
            SparseModel::WeightedCardinality => "weighted-cardinality",
        }
    }
}

impl std::fmt::Display for SparseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sorted, duplicate-free set of 0-based indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Support(Vec<usize>);

impl Support {
    /// Validates and sorts `indices` for ambient dimension `n`.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidSupport(format!(
                    "index {last} out of range for dimension {n}"
                )));
            }
        }
        if indices.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidSupport("duplicate index".into()));
        }
        Ok(Self(indices))
    }

    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|p| p[0] < p[1]));
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// The index range `start..end`.
    pub fn range(start: usize, end: usize) -> Self {
        Self((start..end).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn complement(&self, n: usize) -> Support {
        let mut out = Vec::with_capacity(n.saturating_sub(self.0.len()));
        let mut it = self.0.iter().peekable();
        for i in 0..n {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        Support(out)
    }

    /// Boolean membership mask of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for i in self.iter() {
            m[i] = true;
        }
        m
    }
}

/// Sparsity budget `s`; real for the weighted model, integral for cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparsityBudget(f64);

impl SparsityBudget {
    pub fn new(s: f64, model: SparseModel) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidBudget(format!("s = {s} must be positive and finite")));
        }
        if model == SparseModel::Cardinality && s.fract() != 0.0 {
            return Err(Error::InvalidBudget(format!(
                "s = {s} must be an integer for the cardinality model"
            )));
        }
        Ok(Self(s))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Budget of order `t·s`, as used by `δ_{ω,2s}` or `δ_{ω,3s}`.
    pub fn times(self, t: u32) -> Self {
        Self(self.0 * f64::from(t))
    }

    /// `s ≥ 2·max_i ν_ω({i})`.
    pub fn satisfies_standing_assumption(self, w: &WeightProfile, model: SparseModel) -> bool {
        let worst = (0..w.len())
            .map(|i| model.index_measure(w, i))
            .fold(0.0, f64::max);
        self.0 >= 2.0 * worst
    }
}

/// `‖x‖_{ω,1} = Σ ω_j |x_j|`.
pub fn weighted_l1_norm(x: &[Complex64], w: &WeightProfile) -> Result<f64> {
    check_len("vector", w.len(), x.len())?;
    Ok(weighted_l1_unchecked(x, w.as_slice()))
}

pub(crate) fn weighted_l1_unchecked(x: &[Complex64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(xi, wi)| wi * xi.norm()).sum()
}

/// `‖x_S‖_{ω,1}`.
pub(crate) fn weighted_l1_on(x: &[Complex64], w: &[f64], idx: impl IntoIterator<Item = usize>) -> f64 {
    idx.into_iter().map(|i| w[i] * x[i].norm()).sum()
}

/// `ν_ω(S)` for the given model.
pub fn sparse_measure(support: &Support, w: &WeightProfile, model: SparseModel) -> Result<f64> {
    if let Some(&last) = support.indices().last() {
        if last >= w.len() {
            return Err(Error::InvalidSupport(format!(
                "index {last} out of range for dimension {}",
                w.len()
            )));
        }
    }
    Ok(model.measure(support, w))
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// Streams every nonempty support with `ν_ω(S) ≤ s`, once each, in lexicographic
/// order of the sorted index sequences.
pub fn enumerate_admissible_supports(
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    cap: usize,
) -> Result<AdmissibleSupports<'_>> {
    if w.len() > cap {
        return Err(Error::CapExceeded { dimension: w.len(), cap });
    }
    Ok(AdmissibleSupports {
        w,
        model,
        limit: budget_limit(s.value()),
        current: Vec::new(),
        measures: Vec::new(),
        next: 0,
    })
}

/// Depth-first pre-order walk over index sets with budget pruning.
#[derive(Debug, Clone)]
pub struct AdmissibleSupports<'a> {
    w: &'a WeightProfile,
    model: SparseModel,
    limit: f64,
    current: Vec<usize>,
    measures: Vec<f64>,
    next: usize,
}

impl Iterator for AdmissibleSupports<'_> {
    type Item = Support;

    fn next(&mut self) -> Option<Support> {
        let n = self.w.len();
        loop {
            let base = self.measures.last().copied().unwrap_or(0.0);
            let fit = (self.next..n)
                .find(|&j| base + self.model.index_measure(self.w, j) <= self.limit);
            if let Some(j) = fit {
                self.current.push(j);
                self.measures.push(base + self.model.index_measure(self.w, j));
                self.next = j + 1;
                return Some(Support(self.current.clone()));
            }
            let last = self.current.pop()?;
            self.measures.pop();
            self.next = last + 1;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionOptions {
    pub cap: usize,
    /// Above the cap, fall back to ratio-greedy selection (tagged inexact).
    pub allow_greedy_fallback: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            cap: enumeration_cap(),
            allow_greedy_fallback: false,
        }
    }
}

/// Result of the best weighted s-term selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestTerm {
    pub support: Support,
    /// `σ_s(x)_{ω,1} = ‖x_{S*^c}‖_{ω,1}`.
    pub sigma: f64,
    /// `‖x_{S*}‖_{ω,1}`.
    pub kept: f64,
    /// False when the greedy fallback produced the support.
    pub exact: bool,
}

/// Best weighted s-term approximation: the admissible support keeping the most
/// weighted ℓ1 mass, and the mass left outside it.
pub fn best_weighted_s_term(
    x: &[Complex64],
    w: &WeightProfile,
    model: SparseModel,
    s: SparsityBudget,
    opts: SelectionOptions,
) -> Result<BestTerm> {
    check_len("vector", w.len(), x.len())?;
    let n = x.len();
    let values: Vec<f64> = x.iter().zip(w.as_slice()).map(|(xi, wi)| wi * xi.norm()).collect();
    let (chosen, exact) = match model {
        SparseModel::Cardinality => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
            order.truncate(s.value() as usize);
            (order, true)
        }
        SparseModel::WeightedCardinality => {
            let costs: Vec<f64> = w.as_slice().iter().map(|v| v * v).collect();
            if n <= opts.cap {
                (weighted_knapsack(&values, &costs, s.value()), true)
            } else if opts.allow_greedy_fallback {
                (greedy_knapsack(&values, &costs, s.value()), false)
            } else {
                return Err(Error::CapExceeded { dimension: n, cap: opts.cap });
            }
        }
    };
    let support = Support::new(chosen, n)?;
    let mask = support.mask(n);
    let kept = values.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
    let sigma = values.iter().zip(&mask).filter(|(_, &m)| !m).map(|(v, _)| v).sum();
    Ok(BestTerm { support, sigma, kept, exact })
}

/// Exact 0/1 knapsack by depth-first branch and bound with the fractional
/// (Dantzig) relaxation as the bound. Items of zero value are never taken.
pub fn weighted_knapsack(values: &[f64], costs: &[f64], capacity: f64) -> Vec<usize> {
    let limit = budget_limit(capacity);
    let mut items: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] > 0.0 && costs[i] <= limit)
        .collect();
    items.sort_by(|&a, &b| {
        (values[b] / costs[b])
            .total_cmp(&(values[a] / costs[a]))
            .then(a.cmp(&b))
    });

    struct Search<'a> {
        items: &'a [usize],
        values: &'a [f64],
        costs: &'a [f64],
        limit: f64,
        best_value: f64,
        best: Vec<usize>,
        current: Vec<usize>,
    }

    impl Search<'_> {
        fn bound(&self, pos: usize, value: f64, used: f64) -> f64 {
            let mut room = self.limit - used;
            let mut bound = value;
            for &i in &self.items[pos..] {
                if self.costs[i] <= room {
                    room -= self.costs[i];
                    bound += self.values[i];
                } else {
                    bound += self.values[i] * room / self.costs[i];
                    break;
                }
            }
            bound
        }

        fn dfs(&mut self, pos: usize, value: f64, used: f64) {
            if value > self.best_value {
                self.best_value = value;
                self.best.clone_from(&self.current);
            }
            if pos == self.items.len() || self.bound(pos, value, used) <= self.best_value {
                return;
            }
            let i = self.items[pos];
            if used + self.costs[i] <= self.limit {
                self.current.push(i);
                self.dfs(pos + 1, value + self.values[i], used + self.costs[i]);
                self.current.pop();
            }
            self.dfs(pos + 1, value, used);
        }
    }

    let mut search = Search {
        items: &items,
        values,
        costs,
        limit,
        best_value: 0.0,
        best: Vec::new(),
        current: Vec::new(),
    };
    search.dfs(0, 0.0, 0.0);
    let mut best = search.best;
    best.sort_unstable();
    best
}

fn greedy_knapsack(values: &[f64], costs: &[f64], capacity: f64) -> Vec<usize> {
    let limit = budget_limit(capacity);
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        (values[b] / costs[b])
            .total_cmp(&(values[a] / costs[a]))
            .then(a.cmp(&b))
    });
    let mut used = 0.0;
    let mut out = Vec::new();
    for i in order {
        if used + costs[i] <= limit {
            used += costs[i];
            out.push(i);
        }
    }
    out.sort_unstable();
    out
}

/// Greedy contiguous partition of `[N]` into blocks of measure at most `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    blocks: Vec<Support>,
    total_measure: f64,
    budget: f64,
    nv_estimate: Option<f64>,
}

impl Partition {
    pub fn blocks(&self) -> &[Support] {
        &self.blocks
    }

    /// `N_ν`.
    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    /// `N‖ω‖_∞²/s + 1`, reported for the weighted-cardinality model only.
    pub fn nv_estimate(&self) -> Option<f64> {
        self.nv_estimate
    }

    pub fn respects_nv_estimate(&self) -> Option<bool> {
        self.nv_estimate.map(|b| self.count() as f64 <= b)
    }

    /// `2·ν_ω([N])/s + 1`: strict upper bound on `N_ν` that holds for every
    /// greedy packing, since any two consecutive blocks together exceed `s`.
    pub fn pairing_bound(&self) -> f64 {
        2.0 * self.total_measure / self.budget + 1.0
    }
}

/// Packs indices left to right, closing a block as soon as the next index
/// would push its measure past `s`.
pub fn build_partition(w: &WeightProfile, model: SparseModel, s: SparsityBudget) -> Result<Partition> {
    let limit = budget_limit(s.value());
    let mut blocks = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut measure = 0.0;
    let mut total = 0.0;
    for i in 0..w.len() {
        let nu = model.index_measure(w, i);
        if nu > limit {
            return Err(Error::IndexExceedsBudget { index: i, measure: nu, budget: s.value() });
        }
        total += nu;
        if measure + nu <= limit {
            current.push(i);
            measure += nu;
        } else {
            blocks.push(Support::from_sorted(std::mem::take(&mut current)));
            current.push(i);
            measure = nu;
        }
    }
    if !current.is_empty() {
        blocks.push(Support::from_sorted(current));
    }
    let nv_estimate = (model == SparseModel::WeightedCardinality)
        .then(|| w.len() as f64 * w.max() * w.max() / s.value() + 1.0);
    Ok(Partition { blocks, total_measure: total, budget: s.value(), nv_estimate })
}

/// `x_S`: copy of `x` with entries outside `S` zeroed.
pub fn restrict(x: &[Complex64], support: &Support) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for i in support.iter() {
        out[i] = x[i];
    }
    out
}
