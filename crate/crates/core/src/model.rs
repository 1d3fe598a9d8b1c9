//! Naive-Bayes model with a hidden root: structure, parameter tables, priors,
//! datasets and the pointwise probability computations on them.
//!
//! Every table (parameters, Dirichlet hyperparameters, sufficient statistics)
//! shares one layout: a root row of length `c`, then for each observed
//! variable `i` a `c × r_i` row-major block whose row `j` is conditioned on
//! the hidden state `j`.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_gamma, log_sum_exp_shifted};

/// Lower clamp applied to every probability after an M step.
pub const PROB_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_arity: usize,
    pub observed_arities: Vec<usize>,
}

impl ModelSpec {
    pub fn new(hidden_arity: usize, observed_arities: Vec<usize>) -> Result<Self> {
        let spec = Self {
            hidden_arity,
            observed_arities,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n` binary observed variables with a `c`-state root.
    pub fn binary(n: usize, c: usize) -> Result<Self> {
        Self::new(c, vec![2; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_arity < 1 {
            return Err(Error::Contract("hidden arity must be >= 1".into()));
        }
        if self.observed_arities.is_empty() {
            return Err(Error::Contract("at least one observed variable is required".into()));
        }
        if let Some(r) = self.observed_arities.iter().find(|&&r| r < 2) {
            return Err(Error::Contract(format!("observed arity must be >= 2, got {r}")));
        }
        Ok(())
    }

    pub fn n_observed(&self) -> usize {
        self.observed_arities.len()
    }

    /// Same observed variables, different hidden arity.
    pub fn with_hidden_arity(&self, c: usize) -> Result<Self> {
        Self::new(c, self.observed_arities.clone())
    }

    /// Index of the first free coordinate of each leaf block.
    pub(crate) fn leaf_coord_offsets(&self) -> Vec<usize> {
        let c = self.hidden_arity;
        let mut offsets = Vec::with_capacity(self.n_observed());
        let mut at = c - 1;
        for &r in &self.observed_arities {
            offsets.push(at);
            at += c * (r - 1);
        }
        offsets
    }
}

/// Number of free parameters: `(c − 1) + Σ_i c (r_i − 1)`.
pub fn dimension(spec: &ModelSpec) -> usize {
    let c = spec.hidden_arity;
    (c - 1) + spec.observed_arities.iter().map(|r| c * (r - 1)).sum::<usize>()
}

/// Table storage shared by [`ParamSet`], [`PriorSet`] and [`StatSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    spec: ModelSpec,
    root: Vec<f64>,
    leaves: Vec<Vec<f64>>,
}

impl Tables {
    pub fn filled(spec: &ModelSpec, value: f64) -> Self {
        let c = spec.hidden_arity;
        Self {
            spec: spec.clone(),
            root: vec![value; c],
            leaves: spec.observed_arities.iter().map(|r| vec![value; c * r]).collect(),
        }
    }

    pub fn from_parts(spec: &ModelSpec, root: Vec<f64>, leaves: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let c = spec.hidden_arity;
        if root.len() != c {
            return Err(Error::Contract(format!("root has {} entries, expected {c}", root.len())));
        }
        if leaves.len() != spec.n_observed() {
            return Err(Error::Contract(format!(
                "{} leaf tables, expected {}",
                leaves.len(),
                spec.n_observed()
            )));
        }
        for (i, (leaf, r)) in leaves.iter().zip(&spec.observed_arities).enumerate() {
            if leaf.len() != c * r {
                return Err(Error::Contract(format!(
                    "leaf {i} has {} entries, expected {}",
                    leaf.len(),
                    c * r
                )));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            root,
            leaves,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn root_mut(&mut self) -> &mut [f64] {
        &mut self.root
    }

    pub fn leaf(&self, i: usize) -> &[f64] {
        &self.leaves[i]
    }

    pub fn leaf_row(&self, i: usize, hidden: usize) -> &[f64] {
        let r = self.spec.observed_arities[i];
        &self.leaves[i][hidden * r..(hidden + 1) * r]
    }

    pub fn leaf_row_mut(&mut self, i: usize, hidden: usize) -> &mut [f64] {
        let r = self.spec.observed_arities[i];
        &mut self.leaves[i][hidden * r..(hidden + 1) * r]
    }

    pub fn leaves(&self) -> &[Vec<f64>] {
        &self.leaves
    }

    /// All simplex rows: the root first, then leaf rows in `(i, hidden)` order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let arities = &self.spec.observed_arities;
        std::iter::once(self.root.as_slice()).chain(
            self.leaves
                .iter()
                .zip(arities)
                .flat_map(|(leaf, &r)| leaf.chunks_exact(r)),
        )
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        let arities = &self.spec.observed_arities;
        std::iter::once(self.root.as_mut_slice()).chain(
            self.leaves
                .iter_mut()
                .zip(arities)
                .flat_map(|(leaf, &r)| leaf.chunks_exact_mut(r)),
        )
    }

    pub fn n_rows(&self) -> usize {
        1 + self.spec.hidden_arity * self.spec.n_observed()
    }

    fn same_shape(&self, other: &Tables) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Contract(format!(
                "table shapes differ: {:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    /// Reorders hidden states so that new state `j` is old state `perm[j]`.
    pub fn permute_hidden(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (j, &src) in perm.iter().enumerate() {
            out.root[j] = self.root[src];
            for i in 0..self.spec.n_observed() {
                out.leaf_row_mut(i, j).copy_from_slice(self.leaf_row(i, src));
            }
        }
        out
    }
}

macro_rules! table_newtype {
    ($name:ident) => {
        impl Deref for $name {
            type Target = Tables;
            fn deref(&self) -> &Tables {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut Tables {
                &mut self.0
            }
        }

        impl $name {
            pub fn tables(&self) -> &Tables {
                &self.0
            }

            pub fn into_tables(self) -> Tables {
                self.0
            }

            pub fn permute_hidden(&self, perm: &[usize]) -> Self {
                Self(self.0.permute_hidden(perm))
            }
        }
    };
}

/// Conditional probability tables; every row is a probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet(Tables);
table_newtype!(ParamSet);

/// Dirichlet hyperparameters `α_ijk > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSet(Tables);
table_newtype!(PriorSet);

/// Counts `N_ijk` or expected counts `E(N_ijk)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatSet(Tables);
table_newtype!(StatSet);

impl ParamSet {
    /// Validates every row is a simplex (entries ≥ 0 summing to 1 within 1e-9).
    /// Boundary entries are accepted here; operations that need an interior
    /// point check [`ParamSet::is_interior`].
    pub fn new(tables: Tables) -> Result<Self> {
        for (idx, row) in tables.rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Domain(format!("row {idx} is not a probability simplex: {row:?}")));
            }
        }
        Ok(Self(tables))
    }

    pub(crate) fn new_unchecked(tables: Tables) -> Self {
        Self(tables)
    }

    pub fn uniform(spec: &ModelSpec) -> Self {
        let mut t = Tables::filled(spec, 0.0);
        t.rows_mut().for_each(|row| {
            let p = 1.0 / row.len() as f64;
            row.iter_mut().for_each(|v| *v = p);
        });
        Self(t)
    }

    pub fn is_interior(&self) -> bool {
        self.rows().all(|row| row.len() == 1 || row.iter().all(|&p| p > 0.0 && p < 1.0))
    }

    /// Drop-last-component coordinates of every row.
    pub fn to_free_coords(&self) -> FreeCoords {
        let mut v = Vec::with_capacity(dimension(self.spec()));
        for row in self.rows() {
            v.extend_from_slice(&row[..row.len() - 1]);
        }
        FreeCoords(v)
    }

    /// Inverse of [`ParamSet::to_free_coords`]. Fails unless every implied row
    /// is strictly interior.
    pub fn from_free_coords(spec: &ModelSpec, coords: &FreeCoords) -> Result<Self> {
        if coords.0.len() != dimension(spec) {
            return Err(Error::Contract(format!(
                "{} free coordinates, expected {}",
                coords.0.len(),
                dimension(spec)
            )));
        }
        let mut t = Tables::filled(spec, 0.0);
        let mut at = 0;
        for row in t.rows_mut() {
            let free = row.len() - 1;
            let src = &coords.0[at..at + free];
            at += free;
            if src.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::Domain(format!("free coordinates not interior: {src:?}")));
            }
            let rest = 1.0 - src.iter().sum::<f64>();
            if !(rest > 0.0) {
                return Err(Error::Domain(format!("free coordinates sum to >= 1: {src:?}")));
            }
            row[..free].copy_from_slice(src);
            row[free] = rest;
        }
        Ok(Self(t))
    }

    /// Clamp to `[1e-12, 1 − 1e-12]` and renormalize every row.
    pub(crate) fn clamp_rows(&mut self) {
        for row in self.0.rows_mut() {
            row.iter_mut().for_each(|p| *p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR));
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
        }
    }

    pub(crate) fn log_tables(&self) -> LogTables {
        LogTables {
            root: self.root().iter().map(|p| p.ln()).collect(),
            leaves: self.leaves().iter().map(|l| l.iter().map(|p| p.ln()).collect()).collect(),
            arities: self.spec().observed_arities.clone(),
        }
    }
}

impl PriorSet {
    pub fn new(tables: Tables) -> Result<Self> {
        if let Some(a) = tables.rows().flatten().find(|&&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Domain(format!("Dirichlet hyperparameters must be > 0, got {a}")));
        }
        Ok(Self(tables))
    }

    /// Every `α_ijk` equal to `alpha`.
    pub fn symmetric(spec: &ModelSpec, alpha: f64) -> Result<Self> {
        Self::new(Tables::filled(spec, alpha))
    }

    /// The near-uniform prior `α_ijk = 1 + ε`.
    pub fn near_uniform(spec: &ModelSpec, epsilon: f64) -> Result<Self> {
        Self::symmetric(spec, 1.0 + epsilon)
    }
}

impl StatSet {
    pub fn new(tables: Tables) -> Result<Self> {
        if let Some(v) = tables.rows().flatten().find(|&&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("statistics must be finite and >= 0, got {v}")));
        }
        Ok(Self(tables))
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self(Tables::filled(spec, 0.0))
    }

    /// Entrywise sum of two statistics of the same shape.
    pub fn add(&self, other: &StatSet) -> Result<StatSet> {
        self.0.same_shape(&other.0)?;
        let mut out = self.clone();
        for (a, b) in out.0.rows_mut().zip(other.rows()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    pub fn root_total(&self) -> f64 {
        self.root().iter().sum()
    }

    pub fn leaf_total(&self, i: usize) -> f64 {
        self.leaf(i).iter().sum()
    }
}

/// Free coordinates of a [`ParamSet`]: the first `len − 1` entries of every
/// row, root first.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeCoords(pub Vec<f64>);

impl FreeCoords {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Observed records, optionally with the hidden column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: ModelSpec,
    states: Vec<usize>,
    hidden: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(spec: ModelSpec, rows: &[Vec<usize>], hidden: Option<Vec<usize>>) -> Result<Self> {
        let n = spec.n_observed();
        let mut states = Vec::with_capacity(rows.len() * n);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Contract(format!("row {t} has {} values, expected {n}", row.len())));
            }
            states.extend_from_slice(row);
        }
        Self::from_flat(spec, states, hidden)
    }

    pub fn from_flat(spec: ModelSpec, states: Vec<usize>, hidden: Option<Vec<usize>>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_observed();
        if states.is_empty() {
            return Err(Error::Contract("a dataset needs at least one row".into()));
        }
        if !states.len().is_multiple_of(n) {
            return Err(Error::Contract("flat state buffer is not a multiple of n".into()));
        }
        let n_rows = states.len() / n;
        for (idx, &x) in states.iter().enumerate() {
            let r = spec.observed_arities[idx % n];
            if x >= r {
                return Err(Error::Contract(format!(
                    "row {} variable x{} has state {x}, arity is {r}",
                    idx / n,
                    idx % n + 1
                )));
            }
        }
        if let Some(h) = &hidden {
            if h.len() != n_rows {
                return Err(Error::Contract(format!("hidden column has {} rows, expected {n_rows}", h.len())));
            }
            if let Some((t, &v)) = h.iter().enumerate().find(|(_, &v)| v >= spec.hidden_arity) {
                return Err(Error::Contract(format!(
                    "row {t} hidden state {v} >= hidden arity {}",
                    spec.hidden_arity
                )));
            }
        }
        Ok(Self { spec, states, hidden })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_samples(&self) -> usize {
        self.states.len() / self.spec.n_observed()
    }

    pub fn n_observed(&self) -> usize {
        self.spec.n_observed()
    }

    pub fn row(&self, t: usize) -> &[usize] {
        let n = self.n_observed();
        &self.states[t * n..(t + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.states.chunks_exact(self.n_observed())
    }

    pub fn hidden(&self) -> Option<&[usize]> {
        self.hidden.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.hidden.is_some()
    }

    /// Returns a copy with the hidden column replaced. The spec's hidden arity
    /// is widened if needed.
    pub fn with_hidden(&self, hidden: Vec<usize>) -> Result<Self> {
        let max = hidden.iter().copied().max().unwrap_or(0);
        let spec = if max >= self.spec.hidden_arity {
            self.spec.with_hidden_arity(max + 1)?
        } else {
            self.spec.clone()
        };
        Self::from_flat(spec, self.states.clone(), Some(hidden))
    }

    pub(crate) fn without_hidden(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            states: self.states.clone(),
            hidden: None,
        }
    }

    /// Concatenates rows of two datasets over the same observed variables.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.spec.observed_arities != other.spec.observed_arities {
            return Err(Error::Contract("datasets have different observed variables".into()));
        }
        let hidden = match (&self.hidden, &other.hidden) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(Error::Contract("cannot concatenate complete and incomplete data".into())),
        };
        let spec = self.spec.with_hidden_arity(self.spec.hidden_arity.max(other.spec.hidden_arity))?;
        let states = self.states.iter().chain(&other.states).copied().collect();
        Self::from_flat(spec, states, hidden)
    }

    /// Reorders rows so that new row `t` is old row `order[t]`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<usize>> = order.iter().map(|&t| self.row(t).to_vec()).collect();
        let hidden = self.hidden.as_ref().map(|h| order.iter().map(|&t| h[t]).collect());
        Self::new(self.spec.clone(), &rows, hidden)
    }
}

/// Elementwise logs of a [`ParamSet`], precomputed for per-row scoring.
pub(crate) struct LogTables {
    pub root: Vec<f64>,
    pub leaves: Vec<Vec<f64>>,
    pub arities: Vec<usize>,
}

impl LogTables {
    /// `log p(C = j, x)` for every hidden state `j`, written into `out`.
    #[inline]
    pub fn joint_scores(&self, row: &[usize], out: &mut [f64]) {
        out.copy_from_slice(&self.root);
        for ((leaf, &r), &x) in self.leaves.iter().zip(&self.arities).zip(row) {
            for (j, s) in out.iter_mut().enumerate() {
                *s += leaf[j * r + x];
            }
        }
    }
}

fn check_data_matches(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if spec.observed_arities != data.spec.observed_arities {
        return Err(Error::Contract(format!(
            "model observes arities {:?} but data has {:?}",
            spec.observed_arities, data.spec.observed_arities
        )));
    }
    if let Some(h) = data.hidden() {
        if let Some(&v) = h.iter().find(|&&v| v >= spec.hidden_arity) {
            return Err(Error::Contract(format!(
                "data hidden state {v} out of range for hidden arity {}",
                spec.hidden_arity
            )));
        }
    }
    Ok(())
}

/// `log p(D | θ)`. Marginalizes the hidden root when the data carries no
/// hidden column, otherwise uses the observed hidden values.
pub fn log_likelihood(params: &ParamSet, data: &Dataset) -> Result<f64> {
    check_data_matches(params.spec(), data)?;
    let logs = params.log_tables();
    let mut scores = vec![0.0; params.spec().hidden_arity];
    let mut total = 0.0;
    match data.hidden() {
        None => {
            for row in data.rows() {
                logs.joint_scores(row, &mut scores);
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                total += max + log_sum_exp_shifted(&scores, max);
            }
        }
        Some(hidden) => {
            for (row, &h) in data.rows().zip(hidden) {
                logs.joint_scores(row, &mut scores);
                total += scores[h];
            }
        }
    }
    Ok(total)
}

/// Log Dirichlet density of `params` under `prior`, including normalizers.
pub fn log_prior(params: &ParamSet, prior: &PriorSet) -> Result<f64> {
    params.tables().same_shape(prior.tables())?;
    let mut total = 0.0;
    for (theta, alpha) in params.rows().zip(prior.rows()) {
        let alpha_sum: f64 = alpha.iter().sum();
        total += ln_gamma(alpha_sum);
        for (&p, &a) in theta.iter().zip(alpha) {
            if !(p > 0.0) {
                return Err(Error::Domain(format!("log_prior needs θ > 0, got {p}")));
            }
            total += (a - 1.0) * p.ln() - ln_gamma(a);
        }
    }
    Ok(total)
}

/// `g(θ) = log p(D | θ) + log p(θ)`.
pub fn log_posterior_g(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> Result<f64> {
    Ok(log_likelihood(params, data)? + log_prior(params, prior)?)
}

/// `p(C | x, θ)` for one observed record.
pub fn posterior_over_hidden(params: &ParamSet, row: &[usize]) -> Result<Vec<f64>> {
    if row.len() != params.spec().n_observed() {
        return Err(Error::Contract(format!(
            "record has {} values, model has {} observed variables",
            row.len(),
            params.spec().n_observed()
        )));
    }
    for (&x, &r) in row.iter().zip(&params.spec().observed_arities) {
        if x >= r {
            return Err(Error::Contract(format!("state {x} out of range for arity {r}")));
        }
    }
    let logs = params.log_tables();
    let mut w = vec![0.0; params.spec().hidden_arity];
    logs.joint_scores(row, &mut w);
    normalize_log_weights(&mut w)?;
    Ok(w)
}

/// Turns log scores into normalized probabilities in place, returning the
/// log normalizer.
#[inline]
pub(crate) fn normalize_log_weights(w: &mut [f64]) -> Result<f64> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::NonFinite("record has zero probability under every hidden state".into()));
    }
    let mut sum = 0.0;
    for v in w.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    w.iter_mut().for_each(|v| *v /= sum);
    Ok(max + sum.ln())
}

/// Expected sufficient statistics and log-likelihood in one pass. With a
/// hidden column present the statistics are the actual counts.
pub(crate) fn expected_stats(params: &ParamSet, data: &Dataset) -> Result<(StatSet, f64)> {
    check_data_matches(params.spec(), data)?;
    let spec = params.spec();
    let c = spec.hidden_arity;
    let logs = params.log_tables();
    let mut stats = StatSet::zeros(spec);
    let mut w = vec![0.0; c];
    let mut loglik = 0.0;
    for (t, row) in data.rows().enumerate() {
        logs.joint_scores(row, &mut w);
        match data.hidden() {
            Some(h) => {
                loglik += w[h[t]];
                w.iter_mut().for_each(|v| *v = 0.0);
                w[h[t]] = 1.0;
            }
            None => loglik += normalize_log_weights(&mut w)?,
        }
        for (j, &wj) in w.iter().enumerate() {
            stats.root_mut()[j] += wj;
        }
        for (i, &x) in row.iter().enumerate() {
            let r = spec.observed_arities[i];
            let leaf = &mut stats.0.leaves[i];
            for (j, &wj) in w.iter().enumerate() {
                leaf[j * r + x] += wj;
            }
        }
    }
    Ok((stats, loglik))
}

/// `Σ_rows Σ_k N_ijk log θ_ijk`: the complete-data log-likelihood for
/// (possibly fractional) statistics.
pub fn complete_loglik_from_stats(params: &ParamSet, stats: &StatSet) -> Result<f64> {
    params.tables().same_shape(stats.tables())?;
    let mut total = 0.0;
    for (theta, n) in params.rows().zip(stats.rows()) {
        for (&p, &count) in theta.iter().zip(n) {
            if count > 0.0 {
                total += count * p.ln();
            }
        }
    }
    Ok(total)
}

/// Analytic gradient of `g` with respect to the drop-last free coordinates.
///
/// Each unconstrained partial is `(E N_ijk + α_ijk − 1) / θ_ijk`; the free
/// coordinate `k` of a row gets that partial minus the one of the row's last
/// component.
pub fn grad_g(coords: &FreeCoords, data: &Dataset, prior: &PriorSet) -> Result<Vec<f64>> {
    let spec = prior.spec();
    let params = ParamSet::from_free_coords(spec, coords)?;
    let (stats, _) = expected_stats(&params, data)?;
    let mut grad = Vec::with_capacity(coords.len());
    for ((theta, n), alpha) in params.rows().zip(stats.rows()).zip(prior.rows()) {
        let r = theta.len();
        let last = (n[r - 1] + alpha[r - 1] - 1.0) / theta[r - 1];
        for k in 0..r - 1 {
            grad.push((n[k] + alpha[k] - 1.0) / theta[k] - last);
        }
    }
    Ok(grad)
}
