//! Time-varying Gaussian mixtures fitted by kernel MMD with Neural ODE
//! weight dynamics.
//!
//! Stage one fits a shared set of Gaussian components and per-time simplex
//! weights to panel data by minimizing a closed-form MMD. Stage two fits a
//! Neural ODE to the weight sequence, giving a continuous-time model.
//!
//! Everything is generic over the float type; the aliases at the crate root
//! fix it to `f64` (or `f32` where noted).

// `!(a > b)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod discrete;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod linalg;
pub mod mixture;
pub mod ode;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Gaussian = mixture::Gaussian<f64>;
pub type ComponentSet = mixture::ComponentSet<f64>;
pub type ComponentSet32 = mixture::ComponentSet<f32>;
pub type KernelConfig = kernel::KernelConfig<f64>;
pub type KernelConfig32 = kernel::KernelConfig<f32>;
pub type PanelDataset = data::PanelDataset<f64>;
pub type PanelDataset32 = data::PanelDataset<f32>;
pub type DiscreteWeights = discrete::DiscreteWeights<f64>;
pub type DiscreteFit = discrete::DiscreteFit<f64>;
pub type VectorFieldParams = ode::VectorFieldParams<f64>;
pub type FittedModel = ode::FittedModel<f64>;
pub type FittedModel32 = ode::FittedModel<f32>;

pub use discrete::{FitConfig, Ridge};
pub use ode::OdeConfig;
