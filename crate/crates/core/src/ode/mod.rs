//! Stage two: a Neural ODE over the mixture weights.
//!
//! The weight trajectory solves `dα/dt = f_φ([α; t])` from `α(0) = alpha0`
//! with fixed-step RK4 and is mapped onto the simplex at read-out. Training
//! differentiates through the unrolled integrator.

pub mod mlp;
pub mod model;
pub mod rk4;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub use mlp::VectorFieldParams;
pub use model::{fit_model, fit_models, FittedModel, ModelFit};
pub use rk4::integrate_rk4;
pub use train::{node_loss, node_loss_grad, train_node, TrainedNode};

/// Right-hand side of an autonomous-in-form ODE `dy/dt = f(y, t)`.
pub trait VectorField<T: Real> {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[T], t: T, out: &mut [T]);
}

/// A field that can pull a cotangent back to its state and parameters.
pub trait DifferentiableField<T: Real>: VectorField<T> {
    fn num_params(&self) -> usize;

    /// Returns `(∂f/∂y)ᵀ c` and accumulates `(∂f/∂φ)ᵀ c` into `grad_params`.
    fn vjp(&self, y: &[T], t: T, cotangent: &[T], grad_params: &mut [T]) -> Vec<T>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeConfig {
    /// RK4 steps per unit time.
    pub rk4_steps: usize,
    /// Ridge coefficient on the field parameters.
    pub nu: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Clamp applied before renormalizing onto the simplex.
    pub weight_floor: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Learning-rate halvings allowed after a divergence.
    pub max_restarts: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rk4_steps: 100,
            nu: 1e-4,
            lr: 1e-2,
            epochs: 2000,
            weight_floor: 1e-8,
            seed: 0,
            hidden: vec![32, 32],
            max_restarts: 3,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rk4_steps == 0 {
            return Err(Error::invalid("rk4_steps must be at least 1"));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::invalid("nu must be a finite nonnegative number"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be positive"));
        }
        if !(self.weight_floor > 0.0) || !self.weight_floor.is_finite() {
            return Err(Error::invalid("weight_floor must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

/// Clamp every entry to at least `floor`, then divide by the sum.
pub fn normalize_weights<T: Real>(alpha: &[T], floor: T) -> Vec<T> {
    let clamped: Vec<T> = alpha
        .iter()
        .map(|&a| if a > floor { a } else { floor })
        .collect();
    let sum: T = clamped.iter().copied().sum();
    clamped.into_iter().map(|a| a / sum).collect()
}

/// Pulls a cotangent on the normalized weights back to the raw state.
/// With `pass_clamped`, clamped entries receive the gradient they would have
/// without the clamp instead of zero.
pub(crate) fn normalize_weights_vjp<T: Real>(alpha: &[T], floor: T, cotangent: &[T], pass_clamped: bool) -> Vec<T> {
    let normalized = normalize_weights(alpha, floor);
    let sum: T = alpha.iter().map(|&a| if a > floor { a } else { floor }).sum();
    let inner: T = cotangent.iter().zip(&normalized).map(|(&g, &n)| g * n).sum();
    alpha
        .iter()
        .zip(cotangent)
        .map(|(&a, &g)| if a > floor || pass_clamped { (g - inner) / sum } else { T::zero() })
        .collect()
}

/// Number of equal RK4 steps covering `span` at `per_unit` steps per unit time.
pub(crate) fn step_count<T: Real>(span: T, per_unit: usize) -> usize {
    if !(span > T::zero()) {
        return 0;
    }
    let n = (span * lit::<T>(per_unit as f64) - lit::<T>(1e-9)).ceil();
    n.to_usize().unwrap_or(usize::MAX).max(1)
}
