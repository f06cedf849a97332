//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::csvio::atomic_write;
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::mixture::ComponentSet;
use crate::ode::{FittedModel, VectorFieldParams};
use crate::scalar::{lit, to_f64, Real};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk layout. `kernel_sigmas` holds the per-time squared bandwidths
/// `σ²`, stored as-is so the round trip is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub k: usize,
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d×d` lower-triangular factors.
    pub chol_factors: Vec<Vec<f64>>,
    pub field_layer_sizes: Vec<usize>,
    pub field_params: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub kernel_sigmas: Vec<f64>,
    #[serde(default)]
    pub kernel_degenerate: Vec<bool>,
    pub time_domain: [f64; 2],
    pub rk4_steps: usize,
    pub weight_floor: f64,
}

impl ModelFile {
    pub fn from_model<T: Real>(model: &FittedModel<T>) -> Self {
        let c = model.components();
        let f64s = |v: &[T]| v.iter().map(|&x| to_f64(x)).collect::<Vec<f64>>();
        Self {
            schema_version: SCHEMA_VERSION,
            k: c.k(),
            dim: c.dim(),
            means: (0..c.k()).map(|s| f64s(c.mean(s))).collect(),
            chol_factors: (0..c.k()).map(|s| f64s(c.chol_factor(s))).collect(),
            field_layer_sizes: model.field().layer_sizes().to_vec(),
            field_params: f64s(model.field().params()),
            alpha0: f64s(model.alpha0()),
            kernel_sigmas: model.kernel_cfgs().iter().map(|c| to_f64(c.sigma_sq())).collect(),
            kernel_degenerate: model.kernel_cfgs().iter().map(KernelConfig::is_degenerate).collect(),
            time_domain: [0.0, 1.0],
            rk4_steps: model.rk4_steps(),
            weight_floor: to_f64(model.weight_floor()),
        }
    }

    pub fn into_model<T: Real>(self) -> Result<FittedModel<T>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.time_domain != [0.0, 1.0] {
            return Err(Error::Schema("time domain must be [0, 1]".into()));
        }
        let (k, d) = (self.k, self.dim);
        if self.means.len() != k || self.chol_factors.len() != k {
            return Err(Error::Schema(format!("expected {k} means and factors")));
        }
        if !self.kernel_degenerate.is_empty() && self.kernel_degenerate.len() != self.kernel_sigmas.len() {
            return Err(Error::Schema("kernel_degenerate length does not match kernel_sigmas".into()));
        }
        let ts = |v: &[f64]| v.iter().map(|&x| lit::<T>(x)).collect::<Vec<T>>();
        let schema = |e: Error| Error::Schema(e.to_string());
        let means: Vec<T> = self.means.iter().flat_map(|m| ts(m)).collect();
        let chol: Vec<T> = self.chol_factors.iter().flat_map(|l| ts(l)).collect();
        let components = ComponentSet::from_factors(k, d, means, chol).map_err(schema)?;
        let field = VectorFieldParams::new(self.field_layer_sizes, ts(&self.field_params)).map_err(schema)?;
        let kernels = self
            .kernel_sigmas
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let degenerate = self.kernel_degenerate.get(i).copied().unwrap_or(false);
                KernelConfig::new(lit::<T>(s), d).map(|c| c.with_flag(degenerate))
            })
            .collect::<Result<Vec<_>>>()
            .map_err(schema)?;
        FittedModel::new(components, field, ts(&self.alpha0), kernels, self.rk4_steps, lit(self.weight_floor))
            .map_err(schema)
    }
}

pub fn model_to_json<T: Real>(model: &FittedModel<T>) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file serializes");
    s.push('\n');
    s
}

pub fn model_from_json<T: Real>(text: &str) -> Result<FittedModel<T>> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_model()
}

pub fn save_model<T: Real>(model: &FittedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let text = model_to_json(model);
    atomic_write(path.as_ref(), |f| {
        use std::io::Write;
        f.write_all(text.as_bytes())?;
        Ok(())
    })
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<FittedModel<T>> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}
