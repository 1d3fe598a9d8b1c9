//! JSON files for fitted or generated models.
//!
//! ```json
//! {
//!   "spec": {"hidden_arity": 2, "observed_arities": [2, 2]},
//!   "root": [0.4, 0.6],
//!   "leaves": [[[0.1, 0.9], [0.7, 0.3]], [[0.5, 0.5], [0.2, 0.8]]],
//!   "fit": {"final_g": -12.5, "converged": true, "iterations_used": 14, "mode": "map"}
//! }
//! ```
//!
//! `leaves[i][c]` is the distribution of leaf `i` given hidden state `c`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{EmMode, EmResult};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamSet, Tables};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mode: EmMode,
    pub final_g: f64,
    pub converged: bool,
    pub iterations_used: usize,
}

impl FitSummary {
    pub fn from_em(em: &EmResult, mode: EmMode) -> Self {
        Self {
            mode,
            final_g: em.final_g,
            converged: em.converged,
            iterations_used: em.iterations_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub root: Vec<f64>,
    pub leaves: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

impl ModelFile {
    pub fn from_params(params: &ParamSet, fit: Option<FitSummary>) -> Self {
        let spec = params.spec().clone();
        let c = spec.hidden_arity;
        let leaves = (0..spec.n_observed())
            .map(|i| (0..c).map(|j| params.leaf_row(i, j).to_vec()).collect())
            .collect();
        Self {
            root: params.root().to_vec(),
            spec,
            leaves,
            fit,
        }
    }

    pub fn to_params(&self) -> Result<ParamSet> {
        self.spec.validate()?;
        if self.leaves.len() != self.spec.n_observed() {
            return Err(Error::Contract(format!(
                "model lists {} leaves but spec has {}",
                self.leaves.len(),
                self.spec.n_observed()
            )));
        }
        let mut flat = Vec::with_capacity(self.leaves.len());
        for (i, leaf) in self.leaves.iter().enumerate() {
            if leaf.len() != self.spec.hidden_arity {
                return Err(Error::Contract(format!(
                    "leaf {i} has {} rows, expected {}",
                    leaf.len(),
                    self.spec.hidden_arity
                )));
            }
            flat.push(leaf.concat());
        }
        ParamSet::new(Tables::from_parts(&self.spec, self.root.clone(), flat)?)
    }
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}
