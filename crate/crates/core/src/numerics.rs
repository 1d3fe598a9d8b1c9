//! Numerical primitives shared by the rest of the crate: special functions,
//! log-domain arithmetic, Dirichlet sampling and positive-definite
//! log-determinants.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Smallest value a Dirichlet component may take before renormalization.
const DIRICHLET_FLOOR: f64 = 1e-300;

/// A reproducible random stream identified by `(master_seed, stream_index)`.
///
/// Streams sharing a master seed but differing in index use disjoint ChaCha
/// stream ids, so they never overlap. Nested sub-streams are obtained with
/// [`SeededStream::child`], which hashes the parent identity into a fresh
/// master seed.
#[derive(Debug, Clone)]
pub struct SeededStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Derive an independent sub-stream. Does not consume draws from `self`.
    pub fn child(&self, index: u64) -> SeededStream {
        SeededStream::new(splitmix64(self.master_seed ^ splitmix64(self.stream_index)), index)
    }
}

impl RngCore for SeededStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable `log(sum(exp(values)))` using the shift-by-max scheme.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(Error::Domain("log_sum_exp of an empty list".into()));
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("log_sum_exp of all -inf entries".into()));
    }
    if !max.is_finite() {
        return Err(Error::Domain(format!("log_sum_exp got non-finite entry {max}")));
    }
    Ok(max + log_sum_exp_shifted(values, max))
}

/// `log(sum(exp(v - max)))` for callers that already know the maximum.
#[inline]
pub(crate) fn log_sum_exp_shifted(values: &[f64], max: f64) -> f64 {
    values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires finite x > 0, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// Unchecked variant of [`log_gamma`] for hot loops whose arguments are
/// positive by construction.
#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Draw from Dirichlet(`alphas`) by normalizing independent Gamma(alpha, 1)
/// variates. Components are floored at 1e-300 so no entry is exactly zero.
pub fn sample_dirichlet<R: RngCore + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.len() < 2 {
        return Err(Error::Domain(format!(
            "Dirichlet needs at least 2 components, got {}",
            alphas.len()
        )));
    }
    let mut draws = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain(format!("Dirichlet alpha must be > 0, got {a}")));
        }
        let gamma = Gamma::new(a, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        draws.push(gamma.sample(rng).max(DIRICHLET_FLOOR));
    }
    let total: f64 = draws.iter().sum();
    draws.iter_mut().for_each(|v| *v /= total);
    Ok(draws)
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            entries: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            m.entries[i * order + i] = 1.0;
        }
        m
    }

    /// Builds from a square row-major buffer, symmetrizing as `(M + Mᵀ)/2`.
    pub fn from_square(order: usize, mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() != order * order {
            return Err(Error::Contract(format!(
                "expected {} entries for order {order}, got {}",
                order * order,
                entries.len()
            )));
        }
        for i in 0..order {
            for j in (i + 1)..order {
                let avg = 0.5 * (entries[i * order + j] + entries[j * order + i]);
                entries[i * order + j] = avg;
                entries[j * order + i] = avg;
            }
        }
        Ok(Self { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.entries.iter_mut().for_each(|v| *v *= k);
        self
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }
}

/// Log-determinant via Cholesky: `2 Σ log L[i][i]`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot is not strictly
/// positive.
pub fn log_det_pd(matrix: &SymMatrix) -> Result<f64> {
    let n = matrix.order;
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let mut diag = matrix.get(j, j);
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        log_det += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let mut s = matrix.get(i, j);
            let (row_i, row_j) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            s -= row_i.iter().zip(row_j).map(|(a, b)| a * b).sum::<f64>();
            l[i * n + j] = s / ljj;
        }
    }
    Ok(log_det)
}
