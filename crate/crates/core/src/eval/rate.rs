//! Empirical convergence rate of the stage-one estimator.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{simulate_truth, unit_grid, GroundTruth};
use crate::discrete::{fit_discrete, FitConfig};
use crate::error::{Error, Result};
use crate::kernel::{mixture_mmd_sq, KernelConfig};
use crate::mixture::ComponentSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Components separated by at least 5.
    Regular,
    /// Two coincident components.
    Singular,
}

impl Regime {
    pub fn means(self) -> [f64; 3] {
        match self {
            Regime::Regular => [-5.0, 0.0, 5.0],
            Regime::Singular => [-5.0, 0.0, 0.0],
        }
    }

    /// Minimum pairwise distance between component parameter blocks.
    pub fn separation(self) -> f64 {
        let m = self.means();
        let mut best = f64::INFINITY;
        for i in 0..3 {
            for j in i + 1..3 {
                best = best.min((m[i] - m[j]).abs());
            }
        }
        best
    }

    pub fn truth(self) -> GroundTruth<f64> {
        let means: Vec<Vec<f64>> = self.means().iter().map(|&m| vec![m]).collect();
        let components = ComponentSet::from_covariances(&means, &vec![vec![1.0]; 3]).expect("valid truth");
        GroundTruth::Static { components, weights: vec![1.0 / 3.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub regime: Regime,
    pub separation: f64,
    pub sizes: Vec<usize>,
    /// `sup_t MMD(fit_t, truth)` per size, per replicate.
    pub sup_mmd: Vec<Vec<f64>>,
    pub slope: f64,
}

impl RateReport {
    pub fn medians(&self) -> Vec<f64> {
        self.sup_mmd
            .iter()
            .map(|v| {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                crate::eval::kde::quantile_sorted(&s, 0.5)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    /// Observation times per replicate.
    pub m_points: usize,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            sizes: vec![20, 50, 100, 200, 300, 500],
            replicates: 20,
            m_points: 5,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Fits K = 3 to data from the regime's time-constant mixture at each size
/// and records the worst-time MMD between fit and truth. The MMD uses a fixed
/// unit-bandwidth kernel so sizes are comparable. Replicate `r` at size
/// index `j` uses seed `seed + j·replicates + r`.
pub fn rate_experiment(regime: Regime, cfg: &RateConfig) -> Result<RateReport> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sizes must be a nonempty strictly increasing list"));
    }
    if cfg.replicates == 0 || cfg.m_points < 2 {
        return Err(Error::invalid("need at least one replicate and two time points"));
    }
    let truth = regime.truth();
    let GroundTruth::Static { components: tc, weights: tw } = &truth else { unreachable!() };
    let eval_kernel = KernelConfig::new(1.0, 1)?;
    let times = unit_grid::<f64>(cfg.m_points);
    let jobs: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|j| (0..cfg.replicates).map(move |r| (j, r)))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(j, r)| {
            let seed = cfg.seed + (j * cfg.replicates + r) as u64;
            let data = simulate_truth(&truth, &times, cfg.sizes[j], seed)?;
            let fit_cfg = FitConfig { seed, ..cfg.fit.clone() };
            let fit = fit_discrete(&data, 3, &fit_cfg)?;
            let mut sup = 0.0f64;
            for row in fit.primary_weights().rows() {
                let d2 = mixture_mmd_sq(&fit.components, row, tc, tw, &eval_kernel)?;
                sup = sup.max(d2.max(0.0).sqrt());
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;
    let sup_mmd: Vec<Vec<f64>> = values.chunks(cfg.replicates).map(<[f64]>::to_vec).collect();
    let points: Vec<(f64, f64)> = jobs
        .iter()
        .zip(&values)
        .map(|(&(j, _), &v)| (cfg.sizes[j] as f64, v.max(1e-300)))
        .collect();
    Ok(RateReport {
        regime,
        separation: regime.separation(),
        sizes: cfg.sizes.clone(),
        sup_mmd,
        slope: log_log_slope(&points),
    })
}
