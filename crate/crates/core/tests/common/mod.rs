//! Independent reference computations shared by the integration tests.
//! None of these call into the scoring code they are used to check.

#![allow(dead_code)]

use latent_score::em::{fit, EmConfig};
use latent_score::model::{grad_g, log_posterior_g, Dataset, FreeCoords, ModelSpec, ParamSet, PriorSet, Tables};
use latent_score::numerics::SeededStream;
use latent_score::synth::{generate_model, sample_dataset, strip_hidden};

/// A generated model, its complete sample and the stripped copy.
pub struct Instance {
    pub model: ParamSet,
    pub complete: Dataset,
    pub data: Dataset,
}

pub fn instance(seed: u64, n: usize, c_true: usize, n_samples: usize) -> Instance {
    let spec = ModelSpec::binary(n, c_true).unwrap();
    let root = SeededStream::new(seed, 0);
    let model = generate_model(&spec, &mut root.child(0)).unwrap();
    let complete = sample_dataset(&model, n_samples, &mut root.child(1)).unwrap();
    let data = strip_hidden(&complete).unwrap();
    Instance { model, complete, data }
}

/// EM converged far past the default tolerance, so the result is a
/// stationary point to working precision.
pub fn tight_em() -> EmConfig {
    EmConfig {
        rel_tol: 1e-13,
        max_iters_after_init: 20_000,
        ..EmConfig::default()
    }
}

pub fn fit_map(data: &Dataset, c: usize, epsilon: f64, config: &EmConfig, seed: u64) -> (ParamSet, PriorSet) {
    let spec = data.spec().with_hidden_arity(c).unwrap();
    let prior = PriorSet::near_uniform(&spec, epsilon).unwrap();
    let em = fit(data, &spec, &prior, config, &SeededStream::new(seed, 7)).unwrap();
    (em.params, prior)
}

/// Sum of one-step-ahead log predictive probabilities of a complete dataset,
/// each from the Dirichlet posterior given all earlier records.
pub fn sequential_log_predictive(data: &Dataset, prior: &PriorSet) -> f64 {
    let spec = data.spec();
    let hidden = data.hidden().expect("complete data");
    let c = spec.hidden_arity;
    let mut root_counts = vec![0.0; c];
    let mut leaf_counts: Vec<Vec<Vec<f64>>> = spec
        .observed_arities
        .iter()
        .map(|&r| vec![vec![0.0; r]; c])
        .collect();
    let alpha_root: f64 = prior.root().iter().sum();
    let mut total = 0.0;
    for (t, (row, &h)) in data.rows().zip(hidden).enumerate() {
        total += ((prior.root()[h] + root_counts[h]) / (alpha_root + t as f64)).ln();
        for (i, &x) in row.iter().enumerate() {
            let alpha = prior.leaf_row(i, h);
            let counts = &leaf_counts[i][h];
            let a_total: f64 = alpha.iter().sum();
            let n_total: f64 = counts.iter().sum();
            total += ((alpha[x] + counts[x]) / (a_total + n_total)).ln();
        }
        root_counts[h] += 1.0;
        for (i, &x) in row.iter().enumerate() {
            leaf_counts[i][h][x] += 1.0;
        }
    }
    total
}

fn g_at(x: &[f64], spec: &ModelSpec, data: &Dataset, prior: &PriorSet) -> f64 {
    let p = ParamSet::from_free_coords(spec, &FreeCoords(x.to_vec())).unwrap();
    log_posterior_g(&p, data, prior).unwrap()
}

/// Central differences of `g`.
pub fn fd_gradient(x: &FreeCoords, data: &Dataset, prior: &PriorSet, h: f64) -> Vec<f64> {
    let spec = prior.spec();
    let mut y = x.0.clone();
    (0..y.len())
        .map(|j| {
            let xj = y[j];
            y[j] = xj + h;
            let up = g_at(&y, spec, data, prior);
            y[j] = xj - h;
            let down = g_at(&y, spec, data, prior);
            y[j] = xj;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Negative Hessian of `g` from double central differences of `g` itself.
/// Coordinate `j` steps by `rel` times its distance to the simplex boundary.
pub fn double_fd_neg_hessian(x: &FreeCoords, data: &Dataset, prior: &PriorSet, rel: f64) -> Vec<Vec<f64>> {
    let spec = prior.spec();
    let d = x.len();
    let steps = boundary_steps(spec, x, rel);
    let mut y = x.0.clone();
    let mut out = vec![vec![0.0; d]; d];
    let g0 = g_at(&y, spec, data, prior);
    for i in 0..d {
        for j in i..d {
            let (hi, hj) = (steps[i], steps[j]);
            let v = if i == j {
                let xi = y[i];
                y[i] = xi + hi;
                let up = g_at(&y, spec, data, prior);
                y[i] = xi - hi;
                let down = g_at(&y, spec, data, prior);
                y[i] = xi;
                (up - 2.0 * g0 + down) / (hi * hi)
            } else {
                let mut corner = |si: f64, sj: f64| {
                    let (xi, xj) = (y[i], y[j]);
                    y[i] = xi + si * hi;
                    y[j] = xj + sj * hj;
                    let v = g_at(&y, spec, data, prior);
                    y[i] = xi;
                    y[j] = xj;
                    v
                };
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * hi * hj)
            };
            out[i][j] = -v;
            out[j][i] = -v;
        }
    }
    out
}

/// `rel · min(x_j, dropped component of x_j's row)` for every coordinate.
/// Two coordinates of one row move together by at most `2·rel` of that gap.
fn boundary_steps(spec: &ModelSpec, x: &FreeCoords, rel: f64) -> Vec<f64> {
    let c = spec.hidden_arity;
    let widths = std::iter::once(c).chain(spec.observed_arities.iter().flat_map(|&r| std::iter::repeat_n(r, c)));
    let mut out = Vec::with_capacity(x.len());
    let mut at = 0;
    for w in widths {
        let row = &x.0[at..at + w - 1];
        let rest = 1.0 - row.iter().sum::<f64>();
        out.extend(row.iter().map(|&v| rel * v.min(rest)));
        at += w - 1;
    }
    out
}

/// Max absolute difference over the larger of 1 and the reference's largest
/// magnitude.
pub fn rel_max_diff(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

/// A random interior point whose entries stay at least `floor` away from 0.
pub fn interior_point(spec: &ModelSpec, seed: u64, floor: f64) -> ParamSet {
    let raw = generate_model(spec, &mut SeededStream::new(seed, 3)).unwrap();
    let mix = |row: &[f64]| -> Vec<f64> {
        let r = row.len() as f64;
        let w = 1.0 - floor * r;
        row.iter().map(|p| w * p + floor).collect()
    };
    let c = spec.hidden_arity;
    let leaves = (0..spec.n_observed())
        .map(|i| (0..c).flat_map(|j| mix(raw.leaf_row(i, j))).collect())
        .collect();
    ParamSet::new(Tables::from_parts(spec, mix(raw.root()), leaves).unwrap()).unwrap()
}

/// Max-norm of the analytic gradient.
pub fn grad_norm(params: &ParamSet, data: &Dataset, prior: &PriorSet) -> f64 {
    grad_g(&params.to_free_coords(), data, prior)
        .unwrap()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}
