//! Marginal-likelihood scores.
//!
//! * `bd_complete` / `fractional_bd`: closed-form Dirichlet marginal
//!   likelihood of (possibly expected) counts.
//! * `oracle_exact`: exact `log p(D)` for incomplete data by summing the
//!   closed form over every completion of the hidden column.
//! * `laplace_score`, `bic_score`, `draper_score`, `mled_score`, `cs_score`:
//!   the asymptotic approximations, all evaluated at one mode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    complete_loglik_from_stats, dimension, expected_stats, grad_g, log_likelihood, log_prior, normalize_log_weights,
    Dataset, FreeCoords, ModelSpec, ParamSet, PriorSet, StatSet, Tables,
};
use crate::numerics::{ln_gamma, log_det_pd, SymMatrix};

/// Default cap on `c^N` for [`oracle_exact`].
pub const ORACLE_CAP: u64 = 1 << 20;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Closed-form log marginal likelihood of complete data. Statistics must be
/// whole numbers.
pub fn bd_complete(stats: &StatSet, prior: &PriorSet) -> Result<f64> {
    if let Some(v) = stats.rows().flatten().find(|v| v.fract() != 0.0) {
        return Err(Error::Domain(format!("bd_complete needs integer counts, got {v}")));
    }
    fractional_bd(stats, prior)
}

/// The same closed form evaluated at fractional counts.
pub fn fractional_bd(stats: &StatSet, prior: &PriorSet) -> Result<f64> {
    if stats.spec() != prior.spec() {
        return Err(Error::Contract("statistics and prior have different shapes".into()));
    }
    Ok(stats.rows().zip(prior.rows()).map(|(n, a)| bd_row(n, a)).sum())
}

#[inline]
fn bd_row(counts: &[f64], alpha: &[f64]) -> f64 {
    let alpha_total: f64 = alpha.iter().sum();
    let count_total: f64 = counts.iter().sum();
    if count_total == 0.0 {
        return 0.0;
    }
    let mut s = ln_gamma(alpha_total) - ln_gamma(alpha_total + count_total);
    for (&n, &a) in counts.iter().zip(alpha) {
        if n > 0.0 {
            s += ln_gamma(a + n) - ln_gamma(a);
        }
    }
    s
}

/// Exact `log p(D)` for incomplete data.
///
/// Records with identical observed values are exchangeable, so the sum over
/// all `c^N` completions is regrouped as a sum over how many copies of each
/// distinct record go to each hidden state, weighted by multinomial
/// coefficients. The result is the same sum. Refuses when `c^N > cap`.
pub fn oracle_exact(data: &Dataset, spec: &ModelSpec, prior: &PriorSet, cap: u64) -> Result<f64> {
    if data.is_complete() {
        return Err(Error::Contract("oracle_exact expects incomplete data".into()));
    }
    if spec.observed_arities != data.spec().observed_arities || prior.spec() != spec {
        return Err(Error::Contract("data, model and prior shapes differ".into()));
    }
    let c = spec.hidden_arity;
    let n_rows = data.n_samples();
    let completions = (c as f64).powi(n_rows as i32);
    if completions > cap as f64 {
        return Err(Error::Infeasible { completions, cap });
    }

    let mut patterns: BTreeMap<&[usize], usize> = BTreeMap::new();
    for row in data.rows() {
        *patterns.entry(row).or_default() += 1;
    }
    let patterns: Vec<(&[usize], usize)> = patterns.into_iter().collect();

    let mut walk = OracleWalk {
        spec,
        prior,
        patterns: &patterns,
        counts: StatSet::zeros(spec).into_tables(),
        split: vec![0; c],
        acc: LogAccumulator::default(),
    };
    walk.pattern(0, 0.0);
    walk.acc.finish()
}

struct OracleWalk<'a> {
    spec: &'a ModelSpec,
    prior: &'a PriorSet,
    patterns: &'a [(&'a [usize], usize)],
    counts: Tables,
    split: Vec<usize>,
    acc: LogAccumulator,
}

impl OracleWalk<'_> {
    fn pattern(&mut self, p: usize, log_weight: f64) {
        if p == self.patterns.len() {
            let bd: f64 = self.counts.rows().zip(self.prior.rows()).map(|(n, a)| bd_row(n, a)).sum();
            self.acc.push(log_weight + bd);
            return;
        }
        let m = self.patterns[p].1;
        let base = log_weight + ln_gamma(m as f64 + 1.0);
        self.compose(p, 0, m, base);
    }

    /// Distributes `remaining` copies of pattern `p` over hidden states `j..c`.
    fn compose(&mut self, p: usize, j: usize, remaining: usize, log_weight: f64) {
        let c = self.spec.hidden_arity;
        let last = j == c - 1;
        let range = if last { remaining..=remaining } else { 0..=remaining };
        for k in range {
            self.split[j] = k;
            self.apply(p, j, k as f64);
            let w = log_weight - ln_gamma(k as f64 + 1.0);
            if last {
                self.pattern(p + 1, w);
            } else {
                self.compose(p, j + 1, remaining - k, w);
            }
            self.apply(p, j, -(k as f64));
        }
    }

    fn apply(&mut self, p: usize, j: usize, k: f64) {
        if k == 0.0 {
            return;
        }
        self.counts.root_mut()[j] += k;
        for (i, &x) in self.patterns[p].0.iter().enumerate() {
            self.counts.leaf_row_mut(i, j)[x] += k;
        }
    }
}

/// Streaming log-sum-exp.
#[derive(Default)]
struct LogAccumulator {
    max: Option<f64>,
    sum: f64,
}

impl LogAccumulator {
    fn push(&mut self, v: f64) {
        match self.max {
            None => {
                self.max = Some(v);
                self.sum = 1.0;
            }
            Some(m) if v > m => {
                self.sum = self.sum * (m - v).exp() + 1.0;
                self.max = Some(v);
            }
            Some(m) => self.sum += (v - m).exp(),
        }
    }

    fn finish(self) -> Result<f64> {
        match self.max {
            Some(m) if m.is_finite() => Ok(m + self.sum.ln()),
            _ => Err(Error::NonFinite("oracle sum has no finite terms".into())),
        }
    }
}

/// Negative Hessian of `g` in free coordinates, assembled analytically.
///
/// It is the complete-data information of the expected counts (plus the
/// prior's curvature) minus, for each record, the posterior covariance over
/// hidden states of the per-state score vectors.
pub fn neg_hessian(mode_coords: &FreeCoords, data: &Dataset, prior: &PriorSet) -> Result<SymMatrix> {
    let spec = prior.spec();
    let params = ParamSet::from_free_coords(spec, mode_coords)?;
    let d = mode_coords.len();
    let (stats, _) = expected_stats(&params, data)?;
    let mut a = vec![0.0; d * d];

    // Complete-data block: diag((N_k + α_k − 1)/θ_k²) plus a rank-one term
    // from the dropped component.
    let mut at = 0;
    for ((theta, n), alpha) in params.rows().zip(stats.rows()).zip(prior.rows()) {
        let r = theta.len();
        let last = (n[r - 1] + alpha[r - 1] - 1.0) / (theta[r - 1] * theta[r - 1]);
        for k in 0..r - 1 {
            a[(at + k) * d + at + k] += (n[k] + alpha[k] - 1.0) / (theta[k] * theta[k]);
            for l in 0..r - 1 {
                a[(at + k) * d + at + l] += last;
            }
        }
        at += r - 1;
    }

    // Missing-information term: Σ_t Σ_j w_j s_j s_jᵀ − s̄ s̄ᵀ.
    if data.hidden().is_none() && spec.hidden_arity > 1 {
        let c = spec.hidden_arity;
        let logs = params.log_tables();
        let offsets = spec.leaf_coord_offsets();
        let mut w = vec![0.0; c];
        let mut scores: Vec<Vec<(usize, f64)>> = vec![Vec::new(); c];
        let mut mean = vec![0.0; d];
        let mut support: Vec<usize> = Vec::new();
        for row in data.rows() {
            logs.joint_scores(row, &mut w);
            normalize_log_weights(&mut w)?;
            for (j, s) in scores.iter_mut().enumerate() {
                s.clear();
                if j < c - 1 {
                    s.push((j, 1.0 / params.root()[j]));
                } else {
                    let v = -1.0 / params.root()[c - 1];
                    s.extend((0..c - 1).map(|k| (k, v)));
                }
                for (i, &x) in row.iter().enumerate() {
                    let r = spec.observed_arities[i];
                    let theta = params.leaf_row(i, j);
                    let base = offsets[i] + j * (r - 1);
                    if x < r - 1 {
                        s.push((base + x, 1.0 / theta[x]));
                    } else {
                        let v = -1.0 / theta[r - 1];
                        s.extend((0..r - 1).map(|k| (base + k, v)));
                    }
                }
            }
            support.clear();
            for (s, &wj) in scores.iter().zip(&w) {
                for &(p, vp) in s {
                    if mean[p] == 0.0 {
                        support.push(p);
                    }
                    mean[p] += wj * vp;
                    let wv = wj * vp;
                    for &(q, vq) in s {
                        a[p * d + q] -= wv * vq;
                    }
                }
            }
            for &p in &support {
                let mp = mean[p];
                for &q in &support {
                    a[p * d + q] += mp * mean[q];
                }
            }
            for &p in &support {
                mean[p] = 0.0;
            }
        }
    }

    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("negative Hessian has non-finite entries".into()));
    }
    SymMatrix::from_square(d, a)
}

/// Unsymmetrized negative Hessian from central differences of [`grad_g`].
///
/// Column `j` uses step `1e-5·max(1, |x_j|)`, shrunk to stay inside the
/// simplex when the coordinate or its row remainder is smaller than that.
pub fn neg_hessian_fd_raw(mode_coords: &FreeCoords, data: &Dataset, prior: &PriorSet) -> Result<Vec<f64>> {
    let spec = prior.spec();
    let d = mode_coords.len();
    let remainders = row_remainders(spec, mode_coords);
    let mut a = vec![0.0; d * d];
    let mut x = mode_coords.clone();
    for j in 0..d {
        let xj = mode_coords.0[j];
        let h = (1e-5 * xj.abs().max(1.0)).min(0.25 * xj).min(0.25 * remainders[j]);
        x.0[j] = xj + h;
        let gp = grad_g(&x, data, prior)?;
        x.0[j] = xj - h;
        let gm = grad_g(&x, data, prior)?;
        x.0[j] = xj;
        for i in 0..d {
            a[i * d + j] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-difference Hessian has non-finite entries".into()));
    }
    Ok(a)
}

/// [`neg_hessian_fd_raw`] symmetrized as `(A + Aᵀ)/2`.
pub fn neg_hessian_fd(mode_coords: &FreeCoords, data: &Dataset, prior: &PriorSet) -> Result<SymMatrix> {
    SymMatrix::from_square(mode_coords.len(), neg_hessian_fd_raw(mode_coords, data, prior)?)
}

/// For each free coordinate, the dropped component of its row.
fn row_remainders(spec: &ModelSpec, coords: &FreeCoords) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len());
    let mut at = 0;
    let widths = std::iter::once(spec.hidden_arity).chain(
        spec.observed_arities
            .iter()
            .flat_map(|&r| std::iter::repeat_n(r, spec.hidden_arity)),
    );
    for width in widths {
        let free = &coords.0[at..at + width - 1];
        let rest = 1.0 - free.iter().sum::<f64>();
        out.extend(std::iter::repeat_n(rest, width - 1));
        at += width - 1;
    }
    out
}

/// Pieces of the Laplace score at a mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParts {
    pub g_at_mode: f64,
    pub log_det: f64,
    pub dimension: usize,
    pub log_marginal: f64,
}

/// `g(θ̃) + (d/2) log 2π − ½ log |A|` at the mode `params`.
pub fn laplace_score(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> Result<f64> {
    Ok(laplace_parts(params, data, prior)?.log_marginal)
}

pub fn laplace_parts(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> Result<LaplaceParts> {
    if !params.is_interior() {
        return Err(Error::Domain("Laplace needs an interior mode".into()));
    }
    let g_at_mode = log_likelihood(params, data)? + log_prior(params, prior)?;
    let a = neg_hessian(&params.to_free_coords(), data, prior)?;
    let log_det = log_det_pd(&a)?;
    let d = dimension(params.spec());
    Ok(LaplaceParts {
        g_at_mode,
        log_det,
        dimension: d,
        log_marginal: g_at_mode + 0.5 * d as f64 * LN_2PI - 0.5 * log_det,
    })
}

/// `log p(D | θ) − (d/2) log N`.
pub fn bic_score(loglik_at_mode: f64, d: usize, n_samples: usize) -> f64 {
    loglik_at_mode - 0.5 * d as f64 * (n_samples as f64).ln()
}

/// BIC with the `(d/2) log 2π` term kept.
pub fn draper_score(loglik_at_mode: f64, d: usize, n_samples: usize) -> f64 {
    bic_score(loglik_at_mode, d, n_samples) + 0.5 * d as f64 * LN_2PI
}

/// Closed-form marginal likelihood of the expected counts at the mode.
pub fn mled_score(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> Result<f64> {
    let (stats, _) = expected_stats(params, data)?;
    fractional_bd(&stats, prior)
}

/// MLED corrected by `log p(D | θ) − log p(D′ | θ)` where `D′` is the expected
/// data; with equal dimensions the `log N` terms cancel.
pub fn cs_score(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> Result<f64> {
    let (stats, loglik) = expected_stats(params, data)?;
    Ok(fractional_bd(&stats, prior)? + cs_correction(params, &stats, loglik)?)
}

/// `log p(D | θ) − log p(D′ | θ)`; zero when the root has one state, since
/// then `D′` is `D`.
pub fn cs_correction(params: &ParamSet, stats: &StatSet, loglik: f64) -> Result<f64> {
    if params.spec().hidden_arity == 1 {
        return Ok(0.0);
    }
    Ok(loglik - complete_loglik_from_stats(params, stats)?)
}

/// A measure value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Value(f64),
    Invalid(String),
}

impl Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            Outcome::Value(v) => Some(*v),
            Outcome::Invalid(_) => None,
        }
    }

    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => Outcome::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub d: usize,
    pub n_samples: usize,
    pub g_at_mode: f64,
    pub loglik_at_mode: f64,
    pub laplace: Option<Outcome>,
    pub bic: f64,
    pub draper: f64,
    pub mled: f64,
    pub cs: f64,
    pub oracle: Option<Outcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    pub laplace: bool,
    /// Run the exact oracle with this completion cap.
    pub oracle_cap: Option<u64>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            laplace: true,
            oracle_cap: None,
        }
    }
}

/// Scores one fitted mode under every measure. The Laplace and oracle
/// entries carry their own failure reasons instead of failing the report.
pub fn score_all(params: &ParamSet, data: &Dataset, prior: &PriorSet, opts: ScoreOptions) -> Result<ScoreReport> {
    let spec = params.spec();
    let d = dimension(spec);
    let n = data.n_samples();
    let (stats, loglik) = expected_stats(params, data)?;
    let g_at_mode = loglik + log_prior(params, prior)?;
    let mled = fractional_bd(&stats, prior)?;
    let cs = mled + cs_correction(params, &stats, loglik)?;
    let laplace = opts
        .laplace
        .then(|| Outcome::from_result(laplace_score(params, data, prior)));
    let oracle = opts
        .oracle_cap
        .map(|cap| Outcome::from_result(oracle_exact(data, spec, prior, cap)));
    Ok(ScoreReport {
        d,
        n_samples: n,
        g_at_mode,
        loglik_at_mode: loglik,
        laplace,
        bic: bic_score(loglik, d, n),
        draper: draper_score(loglik, d, n),
        mled,
        cs,
        oracle,
    })
}

impl ScoreReport {
    pub const CSV_HEADER: &'static str = "d,n,g_at_mode,loglik_at_mode,laplace,bic,draper,mled,cs,oracle";

    /// One CSV line; unavailable or invalid measures are left empty.
    pub fn csv_row(&self) -> String {
        let opt = |o: &Option<Outcome>| o.as_ref().and_then(Outcome::value).map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.d,
            self.n_samples,
            self.g_at_mode,
            self.loglik_at_mode,
            opt(&self.laplace),
            self.bic,
            self.draper,
            self.mled,
            self.cs,
            opt(&self.oracle)
        )
    }
}
