//! Trained two-stage model: fixed components plus a weight trajectory.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::PanelDataset;
use crate::discrete::simplex::is_on_simplex;
use crate::discrete::{fit_discrete_shared, DiscreteFit, FitConfig};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::mixture::ComponentSet;
use crate::ode::rk4::integrate_segment;
use crate::ode::train::{train_node, TrainedNode};
use crate::ode::{normalize_weights, OdeConfig, VectorFieldParams};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T = f64> {
    components: ComponentSet<T>,
    field: VectorFieldParams<T>,
    alpha0: Vec<T>,
    kernel_cfgs: Vec<KernelConfig<T>>,
    rk4_steps: usize,
    weight_floor: T,
}

impl<T: Real> FittedModel<T> {
    pub fn new(
        components: ComponentSet<T>,
        field: VectorFieldParams<T>,
        alpha0: Vec<T>,
        kernel_cfgs: Vec<KernelConfig<T>>,
        rk4_steps: usize,
        weight_floor: T,
    ) -> Result<Self> {
        let k = components.k();
        if field.k() != k || alpha0.len() != k {
            return Err(Error::invalid(format!(
                "components have K = {k}, field has {}, alpha0 has {}",
                field.k(),
                alpha0.len()
            )));
        }
        if !is_on_simplex(&alpha0, lit(1e-9)) {
            return Err(Error::invalid("alpha0 must lie on the simplex"));
        }
        if rk4_steps == 0 {
            return Err(Error::invalid("rk4_steps must be at least 1"));
        }
        if !(weight_floor > T::zero()) {
            return Err(Error::invalid("weight floor must be positive"));
        }
        if kernel_cfgs.iter().any(|c| c.dim() != components.dim()) {
            return Err(Error::invalid("kernel dimension does not match the components"));
        }
        Ok(Self { components, field, alpha0, kernel_cfgs, rk4_steps, weight_floor })
    }

    pub fn components(&self) -> &ComponentSet<T> {
        &self.components
    }

    pub fn field(&self) -> &VectorFieldParams<T> {
        &self.field
    }

    pub fn alpha0(&self) -> &[T] {
        &self.alpha0
    }

    pub fn kernel_cfgs(&self) -> &[KernelConfig<T>] {
        &self.kernel_cfgs
    }

    pub fn rk4_steps(&self) -> usize {
        self.rk4_steps
    }

    pub fn weight_floor(&self) -> T {
        self.weight_floor
    }

    pub fn k(&self) -> usize {
        self.components.k()
    }

    pub fn dim(&self) -> usize {
        self.components.dim()
    }

    pub fn time_domain(&self) -> (T, T) {
        (T::zero(), T::one())
    }

    fn check_time(t: T) -> Result<()> {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::invalid(format!("t = {t} is outside the time domain [0, 1]")));
        }
        Ok(())
    }

    /// Weights at `t`, integrating from `(0, alpha0)` and normalizing.
    pub fn predict_weights(&self, t: T) -> Result<Vec<T>> {
        Self::check_time(t)?;
        let y = integrate_segment(&self.field, &self.alpha0, T::zero(), t, self.rk4_steps, 0, |_, _, _| {})?;
        Ok(normalize_weights(&y, self.weight_floor))
    }

    pub fn predict_trajectory(&self, grid: &[T]) -> Result<Vec<Vec<T>>> {
        grid.iter().map(|&t| self.predict_weights(t)).collect()
    }

    pub fn density_at(&self, x: &[T], t: T) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "point has dimension {}, model has {}",
                x.len(),
                self.dim()
            )));
        }
        let w = self.predict_weights(t)?;
        Ok(self.components.mixture_density(&w, x))
    }

    /// Density on several points sharing one time, integrating once.
    pub fn density_grid(&self, xs: &[Vec<T>], t: T) -> Result<Vec<T>> {
        let w = self.predict_weights(t)?;
        xs.iter()
            .map(|x| {
                if x.len() != self.dim() {
                    return Err(Error::invalid("point dimension does not match the model"));
                }
                Ok(self.components.mixture_density(&w, x))
            })
            .collect()
    }

    /// Mixture CDF at `x` and time `t`; one-dimensional models only.
    pub fn cdf_at(&self, x: T, t: T) -> Result<T> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!("cdf_at needs d = 1, model has d = {}", self.dim())));
        }
        let w = self.predict_weights(t)?;
        Ok(mixture_cdf(&self.components, &w, x))
    }
}

pub(crate) fn mixture_cdf<T: Real>(components: &ComponentSet<T>, w: &[T], x: T) -> T {
    let xf = to_f64(x);
    let total: f64 = (0..components.k())
        .map(|s| {
            let m = to_f64(components.mean(s)[0]);
            let sd = to_f64(components.chol_factor(s)[0]).abs();
            to_f64(w[s]) * 0.5 * libm::erfc(-(xf - m) / (sd * std::f64::consts::SQRT_2))
        })
        .sum();
    lit(total.clamp(0.0, 1.0))
}

/// Both stages for one or more subjects sharing components.
#[derive(Debug, Clone)]
pub struct ModelFit<T = f64> {
    pub stage_one: DiscreteFit<T>,
    pub training: Vec<TrainedNode<T>>,
    pub models: Vec<FittedModel<T>>,
    pub stage_one_seconds: f64,
    pub training_seconds: f64,
}

/// Stage one over all subjects, then one weight trajectory per subject.
/// Subjects train independently and in parallel.
pub fn fit_models<T: Real>(
    datasets: &[PanelDataset<T>],
    k: usize,
    fit_cfg: &FitConfig,
    ode_cfg: &OdeConfig,
) -> Result<ModelFit<T>> {
    ode_cfg.validate()?;
    let started = Instant::now();
    let stage_one = fit_discrete_shared(datasets, k, fit_cfg)?;
    let stage_one_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let training: Vec<TrainedNode<T>> = stage_one
        .weights
        .par_iter()
        .map(|w| train_node(w, ode_cfg))
        .collect::<Result<_>>()?;
    let models = training
        .iter()
        .zip(&stage_one.kernels)
        .map(|(tr, kernels)| {
            FittedModel::new(
                stage_one.components.clone(),
                tr.field.clone(),
                tr.alpha0.clone(),
                kernels.clone(),
                ode_cfg.rk4_steps,
                lit(ode_cfg.weight_floor),
            )
        })
        .collect::<Result<_>>()?;
    let training_seconds = started.elapsed().as_secs_f64();
    Ok(ModelFit { stage_one, training, models, stage_one_seconds, training_seconds })
}

pub fn fit_model<T: Real>(
    dataset: &PanelDataset<T>,
    k: usize,
    fit_cfg: &FitConfig,
    ode_cfg: &OdeConfig,
) -> Result<ModelFit<T>> {
    fit_models(std::slice::from_ref(dataset), k, fit_cfg, ode_cfg)
}
