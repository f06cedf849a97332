//! Alternating stage-one fit.

use rayon::prelude::*;

use crate::data::PanelDataset;
use crate::discrete::kmeans::kmeans_pooled;
use crate::discrete::mstep::{m_step_blocks, TimeBlock};
use crate::discrete::qp::{local_qp, QpSolution};
use crate::discrete::{DiscreteWeights, FitConfig};
use crate::error::{Error, Result};
use crate::kernel::{cross_vector, gram_matrix, median_heuristic, KernelConfig, MmdTerms};
use crate::mixture::ComponentSet;
use crate::scalar::{lit, Real};

/// Bandwidth for one block; single-sample blocks fall back to the
/// degenerate `σ² = 1` configuration.
pub fn block_bandwidth<T: Real>(samples: &[Vec<T>], dim: usize) -> Result<KernelConfig<T>> {
    if samples.len() < 2 {
        return Ok(KernelConfig::degenerate(dim));
    }
    median_heuristic(samples)
}

/// Result of stage one for one or more subjects sharing components.
#[derive(Debug, Clone)]
pub struct DiscreteFit<T = f64> {
    pub components: ComponentSet<T>,
    /// One weight table per subject, in input order.
    pub weights: Vec<DiscreteWeights<T>>,
    /// Frozen per-time bandwidths, per subject.
    pub kernels: Vec<Vec<KernelConfig<T>>>,
    /// Pooled penalized objective after every E-step.
    pub trace: Vec<T>,
    /// E-steps that hit the iteration cap.
    pub qp_warnings: usize,
}

impl<T: Real> DiscreteFit<T> {
    /// Weights of the first (or only) subject.
    pub fn primary_weights(&self) -> &DiscreteWeights<T> {
        &self.weights[0]
    }
}

struct BlockRef<'a, T> {
    subject: usize,
    block: TimeBlock<'a, T>,
}

fn e_step_all<T: Real>(
    components: &ComponentSet<T>,
    blocks: &[BlockRef<'_, T>],
    ridge: &[T],
    cfg: &FitConfig,
    warm: &[Vec<T>],
) -> Result<Vec<QpSolution<T>>> {
    blocks
        .par_iter()
        .zip(warm.par_iter())
        .map(|(b, start)| {
            let terms = MmdTerms {
                gram_components: gram_matrix(components, &b.block.kernel)?,
                cross_vector: cross_vector(components, b.block.samples, &b.block.kernel)?,
                empirical_constant: b.block.constant,
            };
            let qp = local_qp(&terms, b.block.samples.len(), ridge)?;
            Ok(qp.solve(Some(start), lit(cfg.qp_tol), cfg.qp_max_iter))
        })
        .collect()
}

fn penalized_total<T: Real>(blocks: &[BlockRef<'_, T>], sols: &[QpSolution<T>]) -> T {
    blocks
        .iter()
        .zip(sols)
        .map(|(b, s)| s.objective + b.block.constant)
        .sum()
}

fn penalized_at<T: Real>(
    components: &ComponentSet<T>,
    blocks: &[BlockRef<'_, T>],
    rows: &[Vec<T>],
    ridge: &[T],
) -> Result<T> {
    let plain: Vec<TimeBlock<'_, T>> = blocks.iter().map(|b| b.block.clone()).collect();
    let base = crate::discrete::mstep::pooled_objective(components, &plain, rows)?;
    let pen: T = rows
        .iter()
        .map(|w| w.iter().zip(ridge).map(|(&x, &l)| l * x * x).sum::<T>())
        .sum();
    Ok(base + pen)
}

pub fn fit_discrete<T: Real>(dataset: &PanelDataset<T>, k: usize, cfg: &FitConfig) -> Result<DiscreteFit<T>> {
    fit_discrete_shared(std::slice::from_ref(dataset), k, cfg)
}

/// Stage one over several subjects with globally shared components: k-means
/// and M-steps pool every subject's blocks, E-steps stay per subject and time.
pub fn fit_discrete_shared<T: Real>(
    datasets: &[PanelDataset<T>],
    k: usize,
    cfg: &FitConfig,
) -> Result<DiscreteFit<T>> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("at least one dataset is required"));
    }
    let dim = datasets[0].dim();
    if datasets.iter().any(|d| d.dim() != dim) {
        return Err(Error::invalid("all subjects must share the data dimension"));
    }
    let ridge: Vec<T> = cfg.ridge.resolve(k)?;

    let mut kernels = Vec::with_capacity(datasets.len());
    let mut blocks = Vec::new();
    for (subject, ds) in datasets.iter().enumerate() {
        let ks: Vec<KernelConfig<T>> = ds
            .blocks()
            .iter()
            .map(|b| block_bandwidth(b, dim))
            .collect::<Result<_>>()?;
        for (b, kc) in ds.blocks().iter().zip(&ks) {
            blocks.push(BlockRef { subject, block: TimeBlock::new(b, *kc)? });
        }
        kernels.push(ks);
    }

    let pooled: Vec<&[T]> = datasets.iter().flat_map(|d| d.pooled()).collect();
    let init = kmeans_pooled(&pooled, k, cfg)?;
    let mut components = init.components;
    let mut rows: Vec<Vec<T>> = vec![init.weights.clone(); blocks.len()];
    let mut trace = Vec::new();
    let mut qp_warnings = 0;

    if cfg.outer_rounds == 0 {
        trace.push(penalized_at(&components, &blocks, &rows, &ridge)?);
    } else {
        let sols = e_step_all(&components, &blocks, &ridge, cfg, &rows)?;
        qp_warnings += sols.iter().filter(|s| !s.converged).count();
        trace.push(penalized_total(&blocks, &sols));
        rows = sols.into_iter().map(|s| s.weights).collect();
        let plain: Vec<TimeBlock<'_, T>> = blocks.iter().map(|b| b.block.clone()).collect();
        for _ in 0..cfg.outer_rounds {
            let m = m_step_blocks(&components, &plain, &rows, cfg)?;
            components = m.components;
            let sols = e_step_all(&components, &blocks, &ridge, cfg, &rows)?;
            qp_warnings += sols.iter().filter(|s| !s.converged).count();
            let value = penalized_total(&blocks, &sols);
            let prev = *trace.last().unwrap();
            rows = sols.into_iter().map(|s| s.weights).collect();
            trace.push(value);
            if prev - value < lit(cfg.objective_tol) {
                break;
            }
        }
    }

    let mut weights = Vec::with_capacity(datasets.len());
    let mut it = rows.into_iter();
    for (subject, ds) in datasets.iter().enumerate() {
        let subject_rows: Vec<Vec<T>> = it.by_ref().take(ds.num_times()).collect();
        debug_assert!(blocks.iter().filter(|b| b.subject == subject).count() == subject_rows.len());
        weights.push(DiscreteWeights::new(ds.times().to_vec(), subject_rows)?);
    }
    Ok(DiscreteFit { components, weights, kernels, trace, qp_warnings })
}
