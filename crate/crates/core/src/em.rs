//! EM training on incomplete data: E step, MAP and ML M steps, the halving
//! tournament used to pick a starting point, and the convergence loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expected_stats, log_prior, Dataset, ModelSpec, ParamSet, PriorSet, StatSet};
use crate::numerics::SeededStream;
use crate::synth::generate_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmMode {
    /// Maximize `g(θ) = log p(D|θ) + log p(θ)`.
    Map,
    /// Maximize `log p(D|θ)`.
    Ml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub mode: EmMode,
    pub rel_tol: f64,
    pub max_iters_after_init: usize,
    pub tournament_start: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            mode: EmMode::Map,
            rel_tol: 1e-5,
            max_iters_after_init: 200,
            tournament_start: 64,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if self.max_iters_after_init < 1 {
            return Err(Error::Config("max_iters_after_init must be >= 1".into()));
        }
        if self.tournament_start < 2 || !self.tournament_start.is_power_of_two() {
            return Err(Error::Config(format!(
                "tournament_start must be a power of two >= 2, got {}",
                self.tournament_start
            )));
        }
        Ok(())
    }
}

/// Outcome of [`run_em`]. In ML mode `final_g` and `g_trace` hold the
/// log-likelihood, the objective actually maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub params: ParamSet,
    pub final_g: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub g_trace: Vec<f64>,
}

/// Expected sufficient statistics `E(N_ijk | θ)` for data whose root is hidden.
pub fn e_step(params: &ParamSet, data: &Dataset) -> Result<StatSet> {
    if data.is_complete() {
        return Err(Error::Contract("e_step expects incomplete data".into()));
    }
    Ok(expected_stats(params, data)?.0)
}

/// `θ_ijk = (E N_ijk + α_ijk − 1) / (E N_ij + α_ij − r_i)`, then clamped.
pub fn m_step_map(stats: &StatSet, prior: &PriorSet) -> Result<ParamSet> {
    if stats.spec() != prior.spec() {
        return Err(Error::Contract("statistics and prior have different shapes".into()));
    }
    let mut tables = stats.tables().clone();
    for (idx, (row, alpha)) in tables.rows_mut().zip(prior.rows()).enumerate() {
        let r = row.len() as f64;
        let denom = row.iter().sum::<f64>() + alpha.iter().sum::<f64>() - r;
        if !(denom > 0.0) {
            return Err(Error::DegeneratePrior(format!(
                "row {idx}: MAP denominator E(N_ij) + α_ij − r_i = {denom} is not positive"
            )));
        }
        row.iter_mut().zip(alpha).for_each(|(n, a)| *n = (*n + a - 1.0) / denom);
    }
    let mut params = ParamSet::new_unchecked(tables);
    params.clamp_rows();
    Ok(params)
}

/// `θ_ijk = E N_ijk / E N_ij`, then clamped.
pub fn m_step_ml(stats: &StatSet) -> Result<ParamSet> {
    let mut tables = stats.tables().clone();
    for (idx, row) in tables.rows_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(starved(stats.spec(), idx));
        }
        row.iter_mut().for_each(|n| *n /= total);
    }
    let mut params = ParamSet::new_unchecked(tables);
    params.clamp_rows();
    Ok(params)
}

fn starved(spec: &ModelSpec, row_index: usize) -> Error {
    if row_index == 0 {
        return Error::StarvedRow {
            table: "root".into(),
            row: 0,
        };
    }
    let c = spec.hidden_arity;
    Error::StarvedRow {
        table: format!("x{}", (row_index - 1) / c + 1),
        row: (row_index - 1) % c,
    }
}

/// E step plus the objective of the parameters it was run at.
fn e_step_with_objective(
    params: &ParamSet,
    data: &Dataset,
    prior: &PriorSet,
    mode: EmMode,
) -> Result<(StatSet, f64)> {
    let (stats, loglik) = expected_stats(params, data)?;
    let objective = match mode {
        EmMode::Map => loglik + log_prior(params, prior)?,
        EmMode::Ml => loglik,
    };
    Ok((stats, objective))
}

fn m_step(stats: &StatSet, prior: &PriorSet, mode: EmMode) -> Result<ParamSet> {
    match mode {
        EmMode::Map => m_step_map(stats, prior),
        EmMode::Ml => m_step_ml(stats),
    }
}

/// Runs `iters` full EM iterations and returns the final parameters with
/// their objective.
fn iterate(params: ParamSet, data: &Dataset, prior: &PriorSet, mode: EmMode, iters: usize) -> Result<(ParamSet, f64)> {
    let mut params = params;
    for _ in 0..iters {
        let (stats, _) = e_step_with_objective(&params, data, prior, mode)?;
        params = m_step(&stats, prior, mode)?;
    }
    let (_, g) = e_step_with_objective(&params, data, prior, mode)?;
    Ok((params, g))
}

/// One stage of the tournament as seen by tests and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TournamentStage {
    pub copies: usize,
    pub iterations: usize,
    /// `(copy index, objective)` for each copy after its iterations.
    pub scores: Vec<(usize, f64)>,
    pub survivors: Vec<usize>,
}

/// Random-restart tournament: start `tournament_start` copies drawn like
/// [`generate_model`], run 1 EM iteration, keep the better half by objective,
/// double the iteration count, and repeat until one copy remains.
pub fn tournament_init(
    data: &Dataset,
    spec: &ModelSpec,
    prior: &PriorSet,
    config: &EmConfig,
    rng: &SeededStream,
) -> Result<ParamSet> {
    Ok(tournament_with_trace(data, spec, prior, config, rng)?.0)
}

pub fn tournament_with_trace(
    data: &Dataset,
    spec: &ModelSpec,
    prior: &PriorSet,
    config: &EmConfig,
    rng: &SeededStream,
) -> Result<(ParamSet, Vec<TournamentStage>)> {
    config.validate()?;
    let mut pool: Vec<(usize, ParamSet)> = (0..config.tournament_start)
        .map(|k| Ok((k, generate_model(spec, &mut rng.child(k as u64))?)))
        .collect::<Result<_>>()?;
    let mut iterations = 1;
    let mut stages = Vec::new();
    while pool.len() > 1 {
        let mut scored: Vec<(usize, ParamSet, f64)> = pool
            .into_par_iter()
            .map(|(k, params)| match iterate(params.clone(), data, prior, config.mode, iterations) {
                Ok((p, g)) if g.is_finite() => (k, p, g),
                _ => (k, params, f64::NEG_INFINITY),
            })
            .collect();
        let scores = scored.iter().map(|(k, _, g)| (*k, *g)).collect();
        let copies = scored.len();
        scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        scored.truncate(copies / 2);
        stages.push(TournamentStage {
            copies,
            iterations,
            scores,
            survivors: scored.iter().map(|(k, _, _)| *k).collect(),
        });
        if scored[0].2 == f64::NEG_INFINITY {
            return Err(Error::NonFinite("every tournament copy failed".into()));
        }
        pool = scored.into_iter().map(|(k, p, _)| (k, p)).collect();
        iterations *= 2;
    }
    let (_, winner) = pool.pop().expect("tournament keeps one copy");
    Ok((winner, stages))
}

/// Alternates E and M steps from `init` until the relative change of the
/// objective drops below `rel_tol` or the iteration cap is reached.
pub fn run_em(init: ParamSet, data: &Dataset, prior: &PriorSet, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    if !init.is_interior() {
        return Err(Error::Domain("EM must start from interior parameters".into()));
    }
    let mode = config.mode;
    let (mut stats, mut g) = e_step_with_objective(&init, data, prior, mode)?;
    if !g.is_finite() {
        return Err(Error::NumericalFailure { iteration: 0 });
    }
    let mut params = init;
    let mut g_trace = vec![g];
    let mut converged = false;
    let mut iterations_used = 0;
    for iteration in 1..=config.max_iters_after_init {
        let next = m_step(&stats, prior, mode)?;
        let (next_stats, next_g) = e_step_with_objective(&next, data, prior, mode)?;
        if !next_g.is_finite() {
            return Err(Error::NumericalFailure { iteration });
        }
        let change = if g == 0.0 {
            (next_g - g).abs()
        } else {
            (next_g - g).abs() / g.abs()
        };
        params = next;
        stats = next_stats;
        g = next_g;
        g_trace.push(g);
        iterations_used = iteration;
        if change < config.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        params,
        final_g: g,
        converged,
        iterations_used,
        g_trace,
    })
}

/// Tournament initialization followed by [`run_em`].
pub fn fit(data: &Dataset, spec: &ModelSpec, prior: &PriorSet, config: &EmConfig, rng: &SeededStream) -> Result<EmResult> {
    let init = tournament_init(data, spec, prior, config, rng)?;
    run_em(init, data, prior, config)
}
