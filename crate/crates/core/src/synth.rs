//! Synthetic models and datasets, complete-data sufficient statistics, and
//! the dataset CSV format.
//!
//! The CSV layout is a header `x1,...,xn[,hidden]` followed by one line of
//! 0-based state indices per record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, ParamSet, StatSet, Tables};
use crate::numerics::sample_dirichlet;

/// Every simplex row drawn independently from a flat Dirichlet.
pub fn generate_model<R: RngCore + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<ParamSet> {
    spec.validate()?;
    let mut tables = Tables::filled(spec, 0.0);
    for row in tables.rows_mut() {
        if row.len() == 1 {
            row[0] = 1.0;
            continue;
        }
        let draw = sample_dirichlet(&vec![1.0; row.len()], rng)?;
        row.copy_from_slice(&draw);
    }
    ParamSet::new(tables)
}

fn sample_categorical<R: RngCore + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Ancestral sampling: draw the hidden state from the root, then each leaf
/// from its row for that state. The hidden column is kept.
pub fn sample_dataset<R: RngCore + ?Sized>(model: &ParamSet, n_samples: usize, rng: &mut R) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::Contract("n_samples must be >= 1".into()));
    }
    let spec = model.spec();
    let n = spec.n_observed();
    let mut states = Vec::with_capacity(n_samples * n);
    let mut hidden = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let h = sample_categorical(model.root(), rng);
        hidden.push(h);
        for i in 0..n {
            states.push(sample_categorical(model.leaf_row(i, h), rng));
        }
    }
    Dataset::from_flat(spec.clone(), states, Some(hidden))
}

/// Drops the hidden column. Calling it on incomplete data is an error.
pub fn strip_hidden(data: &Dataset) -> Result<Dataset> {
    if !data.is_complete() {
        return Err(Error::Contract("dataset has no hidden column to strip".into()));
    }
    Ok(data.without_hidden())
}

/// Integer counts `N_ijk` from complete data.
pub fn sufficient_stats(data: &Dataset) -> Result<StatSet> {
    let hidden = data
        .hidden()
        .ok_or_else(|| Error::Contract("sufficient statistics need complete data; use the E step".into()))?;
    let spec = data.spec();
    let mut tables = Tables::filled(spec, 0.0);
    for (row, &h) in data.rows().zip(hidden) {
        tables.root_mut()[h] += 1.0;
        for (i, &x) in row.iter().enumerate() {
            tables.leaf_row_mut(i, h)[x] += 1.0;
        }
    }
    StatSet::new(tables)
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header: Vec<String> = (1..=data.n_observed()).map(|i| format!("x{i}")).collect();
    if data.is_complete() {
        header.push("hidden".into());
    }
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for (t, row) in data.rows().enumerate() {
        line.clear();
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&x.to_string());
        }
        if let Some(h) = data.hidden() {
            line.push(',');
            line.push_str(&h[t].to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a dataset CSV. When `expected` is given the observed arities are
/// checked against it; otherwise they are inferred as `max(2, max state + 1)`
/// and the hidden arity as `max(1, max hidden + 1)`.
pub fn read_dataset(path: &Path, expected: Option<&ModelSpec>) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let has_hidden = header.iter().next_back() == Some("hidden");
    let n = header.len() - usize::from(has_hidden);
    if n == 0 {
        return Err(parse_err(1, "header lists no observed variables".into()));
    }
    for (i, name) in header.iter().take(n).enumerate() {
        if name != format!("x{}", i + 1) {
            return Err(parse_err(1, format!("expected column x{}, found {name:?}", i + 1)));
        }
    }
    if let Some(spec) = expected {
        if spec.n_observed() != n {
            return Err(parse_err(1, format!("file has {n} observed columns, model expects {}", spec.n_observed())));
        }
    }

    let mut states = Vec::new();
    let mut hidden = Vec::new();
    for (t, record) in reader.records().enumerate() {
        let line = t as u64 + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        for (i, field) in record.iter().enumerate() {
            let v: usize = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("row {t}: {field:?} is not a state index")))?;
            if i < n {
                if let Some(spec) = expected {
                    let r = spec.observed_arities[i];
                    if v >= r {
                        return Err(parse_err(line, format!("row {t}: x{} = {v} out of range for arity {r}", i + 1)));
                    }
                }
                states.push(v);
            } else {
                if let Some(spec) = expected {
                    if v >= spec.hidden_arity {
                        return Err(parse_err(
                            line,
                            format!("row {t}: hidden = {v} out of range for arity {}", spec.hidden_arity),
                        ));
                    }
                }
                hidden.push(v);
            }
        }
    }
    if states.is_empty() {
        return Err(parse_err(1, "dataset has no records".into()));
    }

    let spec = match expected {
        Some(spec) => spec.clone(),
        None => {
            let mut arities = vec![2usize; n];
            for (idx, &v) in states.iter().enumerate() {
                arities[idx % n] = arities[idx % n].max(v + 1);
            }
            let c = hidden.iter().copied().max().map_or(1, |m| m + 1);
            ModelSpec::new(c, arities)?
        }
    };
    Dataset::from_flat(spec, states, has_hidden.then_some(hidden))
}
