//! Pointwise bootstrap bands for per-time densities.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{bootstrap_resample, PanelDataset};
use crate::discrete::block_bandwidth;
use crate::discrete::qp::local_qp;
use crate::discrete::FitConfig;
use crate::error::{Error, Result};
use crate::eval::kde::quantile_sorted;
use crate::kernel::{cross_vector, gram_matrix, KernelConfig, MmdTerms};
use crate::mixture::ComponentSet;
use crate::ode::FittedModel;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapBands {
    pub times: Vec<f64>,
    pub x_grid: Vec<Vec<f64>>,
    pub level: f64,
    pub replicates: usize,
    /// `[time][x]`
    pub point: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// E-steps that hit the iteration cap, over all replicates.
    pub qp_warnings: usize,
}

impl BootstrapBands {
    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .flatten()
            .zip(self.upper.iter().flatten())
            .map(|(l, u)| u - l)
            .collect()
    }

    pub fn median_width(&self) -> f64 {
        let mut w = self.widths();
        w.sort_by(f64::total_cmp);
        quantile_sorted(&w, 0.5)
    }
}

struct Frozen<'a, T> {
    components: &'a ComponentSet<T>,
    gram: Vec<Vec<T>>,
    kernels: Vec<KernelConfig<T>>,
    ridge: Vec<T>,
    cfg: &'a FitConfig,
}

impl<T: Real> Frozen<'_, T> {
    fn weights(&self, j: usize, samples: &[Vec<T>]) -> Result<(Vec<T>, bool)> {
        let terms = MmdTerms {
            gram_components: self.gram[j].clone(),
            cross_vector: cross_vector(self.components, samples, &self.kernels[j])?,
            empirical_constant: T::zero(),
        };
        let qp = local_qp(&terms, samples.len(), &self.ridge)?;
        let sol = qp.solve(None, lit(self.cfg.qp_tol), self.cfg.qp_max_iter);
        Ok((sol.weights, sol.converged))
    }
}

/// Resamples each time block `b` times (seed `seed + b`), re-solves the
/// E-step with the model's components and bandwidths frozen, and reports
/// the `level/2` and `1 − level/2` pointwise quantiles of the density on
/// `x_grid`. The point estimate is the full-sample E-step density.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_bands<T: Real>(
    dataset: &PanelDataset<T>,
    model: &FittedModel<T>,
    times_of_interest: &[T],
    x_grid: &[Vec<T>],
    b: usize,
    level: f64,
    seed: u64,
    cfg: &FitConfig,
) -> Result<BootstrapBands> {
    if b < 50 {
        return Err(Error::invalid("bootstrap needs at least 50 replicates"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level must lie in (0, 1)"));
    }
    if dataset.dim() != model.dim() || x_grid.iter().any(|x| x.len() != model.dim()) {
        return Err(Error::invalid("dataset, grid and model dimensions must agree"));
    }
    let idx = times_of_interest
        .iter()
        .map(|&t| {
            dataset
                .time_index(t)
                .ok_or_else(|| Error::invalid(format!("t = {t} is not an observed time")))
        })
        .collect::<Result<Vec<_>>>()?;
    let components = model.components();
    let kernels = if model.kernel_cfgs().len() == dataset.num_times() {
        idx.iter().map(|&i| model.kernel_cfgs()[i]).collect()
    } else {
        idx.iter()
            .map(|&i| block_bandwidth(dataset.block(i), dataset.dim()))
            .collect::<Result<Vec<_>>>()?
    };
    let gram = kernels
        .iter()
        .map(|k| gram_matrix(components, k))
        .collect::<Result<Vec<_>>>()?;
    let frozen = Frozen { components, gram, kernels, ridge: cfg.ridge.resolve(model.k())?, cfg };
    let densities = |w: &[T]| -> Vec<f64> { x_grid.iter().map(|x| to_f64(components.mixture_density(w, x))).collect() };

    let point = idx
        .iter()
        .enumerate()
        .map(|(j, &i)| Ok(densities(&frozen.weights(j, dataset.block(i))?.0)))
        .collect::<Result<Vec<_>>>()?;

    // draws[r][time][x]
    let draws: Vec<(Vec<Vec<f64>>, usize)> = (0..b)
        .into_par_iter()
        .map(|r| {
            let sample = bootstrap_resample(dataset, seed.wrapping_add(r as u64));
            let mut warnings = 0;
            let dens = idx
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let (w, ok) = frozen.weights(j, sample.block(i))?;
                    warnings += usize::from(!ok);
                    Ok(densities(&w))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((dens, warnings))
        })
        .collect::<Result<_>>()?;

    let (lo_p, hi_p) = (0.5 * level, 1.0 - 0.5 * level);
    let mut lower = Vec::with_capacity(idx.len());
    let mut upper = Vec::with_capacity(idx.len());
    for j in 0..idx.len() {
        let mut lo_row = Vec::with_capacity(x_grid.len());
        let mut hi_row = Vec::with_capacity(x_grid.len());
        for g in 0..x_grid.len() {
            let mut col: Vec<f64> = draws.iter().map(|(d, _)| d[j][g]).collect();
            col.sort_by(f64::total_cmp);
            lo_row.push(quantile_sorted(&col, lo_p));
            hi_row.push(quantile_sorted(&col, hi_p));
        }
        lower.push(lo_row);
        upper.push(hi_row);
    }
    Ok(BootstrapBands {
        times: times_of_interest.iter().map(|&t| to_f64(t)).collect(),
        x_grid: x_grid.iter().map(|x| x.iter().map(|&v| to_f64(v)).collect()).collect(),
        level,
        replicates: b,
        point,
        lower,
        upper,
        qp_warnings: draws.iter().map(|(_, w)| w).sum(),
    })
}
