//! Stage one: per-time minimum-MMD weights over globally shared components.
//!
//! The fit alternates a convex simplex QP per time point (E-step) with Adam
//! steps on the shared means and Cholesky factors (M-step).

pub mod fit;
pub mod kmeans;
pub mod mstep;
pub mod qp;
pub mod simplex;

pub use fit::{block_bandwidth, fit_discrete, fit_discrete_shared, DiscreteFit};
pub use kmeans::{kmeans_init, KMeansInit};
pub use mstep::{m_step_components, MStepOutcome};
pub use qp::{e_step_weights, QpSolution};
pub use simplex::simplex_project;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::scalar::{lit, Real};

/// Per-time simplex weight rows produced by stage one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWeights<T = f64> {
    times: Vec<T>,
    weights: Vec<Vec<T>>,
}

/// Row tolerance on the simplex for stage-one output.
pub const WEIGHT_ROW_TOL: f64 = 1e-9;

impl<T: Real> DiscreteWeights<T> {
    pub fn new(times: Vec<T>, weights: Vec<Vec<T>>) -> Result<Self> {
        if times.len() != weights.len() || times.is_empty() {
            return Err(Error::invalid("one weight row per time is required"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        let k = weights[0].len();
        for row in &weights {
            if row.len() != k {
                return Err(Error::invalid("weight rows differ in length"));
            }
            if !simplex::is_on_simplex(row, lit(WEIGHT_ROW_TOL)) {
                return Err(Error::invalid(format!("weight row {row:?} is off the simplex")));
            }
        }
        Ok(Self { times, weights })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.weights[0].len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Ridge penalties `λ_s` on the weights in the E-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Uniform(f64),
    PerComponent(Vec<f64>),
}

impl Ridge {
    pub fn resolve<T: Real>(&self, k: usize) -> Result<Vec<T>> {
        let values = match self {
            Ridge::Uniform(v) => vec![*v; k],
            Ridge::PerComponent(v) if v.len() == k => v.clone(),
            Ridge::PerComponent(v) => {
                return Err(Error::invalid(format!("{} ridge values for K = {k}", v.len())));
            }
        };
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("ridge penalties must be finite and nonnegative"));
        }
        Ok(values.into_iter().map(lit).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub ridge: Ridge,
    pub adam_lr: f64,
    pub adam_betas: (f64, f64),
    /// Adam steps taken by one M-step.
    pub adam_steps: usize,
    pub outer_rounds: usize,
    /// Stop once a round improves the pooled objective by less than this.
    pub objective_tol: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub variance_floor: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ridge: Ridge::Uniform(1e-6),
            adam_lr: 1e-2,
            adam_betas: (0.9, 0.999),
            adam_steps: 200,
            outer_rounds: 50,
            objective_tol: 1e-8,
            qp_tol: 1e-10,
            qp_max_iter: 10_000,
            variance_floor: 1e-6,
            kmeans_restarts: 100,
            kmeans_max_iter: 100,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        let ok = self.adam_lr >= 0.0
            && self.adam_lr.is_finite()
            && (0.0..1.0).contains(&b1)
            && b1 > 0.0
            && (0.0..1.0).contains(&b2)
            && b2 > 0.0
            && self.qp_tol > 0.0
            && self.qp_max_iter > 0
            && self.variance_floor > 0.0
            && self.kmeans_restarts > 0
            && self.kmeans_max_iter > 0
            && self.objective_tol >= 0.0;
        if !ok {
            return Err(Error::invalid(format!("invalid fit configuration {self:?}")));
        }
        if let Ridge::Uniform(v) = self.ridge {
            if !(v >= 0.0) {
                return Err(Error::invalid("ridge penalty must be nonnegative"));
            }
        }
        Ok(())
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.adam_lr,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            ..AdamConfig::default()
        }
    }
}
