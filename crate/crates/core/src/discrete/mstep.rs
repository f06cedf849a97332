//! M-step: Adam on the shared means and Cholesky factors.
//!
//! The pooled objective is the unweighted sum of per-time squared MMDs,
//! `L = Σ_i [w_iᵀ I_i w_i − (2/n_i) w_iᵀ J_i + c_i]`. Its gradient is
//! analytic: for a term `E = σ^d |A|^{-1/2} exp(−½ δᵀA⁻¹δ)`,
//! `∂ log E / ∂δ = −A⁻¹δ` and `∂ log E / ∂A = −½A⁻¹ + ½A⁻¹δδᵀA⁻¹`,
//! and with `Σ = L Lᵀ` the factor gradient is `2 G L` for symmetric `G`.

use rayon::prelude::*;

use crate::data::PanelDataset;
use crate::discrete::{DiscreteWeights, FitConfig};
use crate::error::{Error, Result};
use crate::kernel::{empirical_kernel_mean, KernelConfig};
use crate::linalg::{add_diagonal, lower_gram, Cholesky};
use crate::mixture::ComponentSet;
use crate::optim::Adam;
use crate::scalar::{from_usize, lit, Real};

/// One time block with its frozen bandwidth and data constant.
#[derive(Debug, Clone)]
pub struct TimeBlock<'a, T> {
    pub samples: &'a [Vec<T>],
    pub kernel: KernelConfig<T>,
    pub constant: T,
}

impl<'a, T: Real> TimeBlock<'a, T> {
    pub fn new(samples: &'a [Vec<T>], kernel: KernelConfig<T>) -> Result<Self> {
        let constant = empirical_kernel_mean(samples, &kernel)?;
        Ok(Self { samples, kernel, constant })
    }
}

/// Objective value and gradients with respect to the flat means (`K·d`) and
/// flat lower factors (`K·d·d`, upper entries always zero).
#[derive(Debug, Clone)]
pub struct ObjectiveGrad<T> {
    pub value: T,
    pub grad_means: Vec<T>,
    pub grad_chol: Vec<T>,
}

struct BlockContribution<T> {
    value: T,
    grad_means: Vec<T>,
    grad_cov: Vec<T>,
}

fn outer_add<T: Real>(acc: &mut [T], u: &[T], scale: T) {
    let d = u.len();
    for i in 0..d {
        let ui = u[i] * scale;
        for j in 0..d {
            acc[i * d + j] += ui * u[j];
        }
    }
}

fn block_contribution<T: Real>(
    components: &ComponentSet<T>,
    covs: &[Vec<T>],
    block: &TimeBlock<'_, T>,
    weights: &[T],
    with_grad: bool,
) -> Result<BlockContribution<T>> {
    let k = components.k();
    let d = components.dim();
    let dd = d * d;
    let half = lit::<T>(0.5);
    let sigma_sq = block.kernel.sigma_sq();
    let log_scale = block.kernel.log_scale();
    let mut value = block.constant;
    let mut grad_means = if with_grad { vec![T::zero(); k * d] } else { Vec::new() };
    let mut grad_cov = if with_grad { vec![T::zero(); k * dd] } else { Vec::new() };

    for s in 0..k {
        if weights[s] == T::zero() {
            continue;
        }
        for r in s..k {
            if weights[r] == T::zero() {
                continue;
            }
            let mut a: Vec<T> = covs[s].iter().zip(&covs[r]).map(|(&x, &y)| x + y).collect();
            add_diagonal(&mut a, d, sigma_sq);
            let ch = Cholesky::new(&a, d)?;
            let delta: Vec<T> = components.mean(s).iter().zip(components.mean(r)).map(|(&x, &y)| x - y).collect();
            let u = ch.solve(&delta);
            let q: T = delta.iter().zip(&u).map(|(&x, &y)| x * y).sum();
            let term = (log_scale - half * ch.log_det() - half * q).exp();
            let mult = if s == r { T::one() } else { lit::<T>(2.0) };
            let coef = mult * weights[s] * weights[r] * term;
            value += coef;
            if with_grad && s != r {
                for i in 0..d {
                    grad_means[s * d + i] -= coef * u[i];
                    grad_means[r * d + i] += coef * u[i];
                }
            }
            if with_grad {
                let inv = ch.inverse();
                let mut g: Vec<T> = inv.iter().map(|&v| -half * coef * v).collect();
                outer_add(&mut g, &u, half * coef);
                for idx in 0..dd {
                    grad_cov[s * dd + idx] += g[idx];
                    grad_cov[r * dd + idx] += g[idx];
                }
            }
        }
    }

    let n = block.samples.len();
    let cross_scale = -lit::<T>(2.0) / from_usize::<T>(n);
    for s in 0..k {
        if weights[s] == T::zero() {
            continue;
        }
        let mut b = covs[s].clone();
        add_diagonal(&mut b, d, sigma_sq);
        let ch = Cholesky::new(&b, d)?;
        let log_pref = log_scale - half * ch.log_det();
        let m = components.mean(s);
        let w = cross_scale * weights[s];
        let mut coef_sum = T::zero();
        let mut outer = vec![T::zero(); dd];
        let mut gm = vec![T::zero(); d];
        let mut delta = vec![T::zero(); d];
        for x in block.samples {
            for i in 0..d {
                delta[i] = x[i] - m[i];
            }
            if with_grad {
                let u = ch.solve(&delta);
                let q: T = delta.iter().zip(&u).map(|(&a, &b)| a * b).sum();
                let coef = w * (log_pref - half * q).exp();
                value += coef;
                coef_sum += coef;
                for i in 0..d {
                    gm[i] += coef * u[i];
                }
                outer_add(&mut outer, &u, coef);
            } else {
                value += w * (log_pref - half * ch.quad_form_inv(&delta)).exp();
            }
        }
        if with_grad {
            for i in 0..d {
                grad_means[s * d + i] += gm[i];
            }
            let inv = ch.inverse();
            for idx in 0..dd {
                grad_cov[s * dd + idx] += -half * coef_sum * inv[idx] + half * outer[idx];
            }
        }
    }
    Ok(BlockContribution { value, grad_means, grad_cov })
}

fn covariances<T: Real>(components: &ComponentSet<T>) -> Vec<Vec<T>> {
    (0..components.k()).map(|s| components.covariance(s)).collect()
}

fn check_rows<T: Real>(components: &ComponentSet<T>, blocks: &[TimeBlock<'_, T>], weights: &[Vec<T>]) -> Result<()> {
    if blocks.len() != weights.len() {
        return Err(Error::invalid("one weight row per time block is required"));
    }
    if weights.iter().any(|w| w.len() != components.k()) {
        return Err(Error::invalid("weight rows must have K entries"));
    }
    if blocks.iter().any(|b| b.kernel.dim() != components.dim()) {
        return Err(Error::invalid("kernel dimension differs from component dimension"));
    }
    Ok(())
}

/// Pooled unpenalized objective `Σ_i MMD²_i`.
pub fn pooled_objective<T: Real>(
    components: &ComponentSet<T>,
    blocks: &[TimeBlock<'_, T>],
    weights: &[Vec<T>],
) -> Result<T> {
    check_rows(components, blocks, weights)?;
    let covs = covariances(components);
    let parts: Vec<T> = blocks
        .par_iter()
        .zip(weights.par_iter())
        .map(|(b, w)| block_contribution(components, &covs, b, w, false).map(|c| c.value))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().sum())
}

pub fn pooled_objective_grad<T: Real>(
    components: &ComponentSet<T>,
    blocks: &[TimeBlock<'_, T>],
    weights: &[Vec<T>],
) -> Result<ObjectiveGrad<T>> {
    check_rows(components, blocks, weights)?;
    let k = components.k();
    let d = components.dim();
    let dd = d * d;
    let covs = covariances(components);
    let parts: Vec<BlockContribution<T>> = blocks
        .par_iter()
        .zip(weights.par_iter())
        .map(|(b, w)| block_contribution(components, &covs, b, w, true))
        .collect::<Result<_>>()?;
    // fixed-order reduction keeps the result independent of scheduling
    let mut value = T::zero();
    let mut grad_means = vec![T::zero(); k * d];
    let mut grad_cov = vec![T::zero(); k * dd];
    for p in parts {
        value += p.value;
        grad_means.iter_mut().zip(&p.grad_means).for_each(|(a, &b)| *a += b);
        grad_cov.iter_mut().zip(&p.grad_cov).for_each(|(a, &b)| *a += b);
    }
    let mut grad_chol = vec![T::zero(); k * dd];
    for s in 0..k {
        let g = &grad_cov[s * dd..(s + 1) * dd];
        let l = components.chol_factor(s);
        for i in 0..d {
            for j in 0..=i {
                // (G + Gᵀ) L restricted to the lower triangle
                let mut acc = T::zero();
                for m in 0..d {
                    acc += (g[i * d + m] + g[m * d + i]) * l[m * d + j];
                }
                grad_chol[s * dd + i * d + j] = acc;
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::domain("pooled objective is not finite"));
    }
    Ok(ObjectiveGrad { value, grad_means, grad_chol })
}

#[derive(Debug, Clone)]
pub struct MStepOutcome<T> {
    pub components: ComponentSet<T>,
    /// Pooled objective at the start of the step.
    pub initial_objective: T,
    /// Pooled objective at the returned components (never above the start).
    pub objective: T,
}

/// Runs `cfg.adam_steps` Adam steps on the pooled objective and returns the
/// best iterate seen.
pub fn m_step_blocks<T: Real>(
    components: &ComponentSet<T>,
    blocks: &[TimeBlock<'_, T>],
    weights: &[Vec<T>],
    cfg: &FitConfig,
) -> Result<MStepOutcome<T>> {
    let k = components.k();
    let d = components.dim();
    let nm = k * d;
    let floor = lit::<T>(cfg.variance_floor);
    let mut current = components.clone();
    let mut params: Vec<T> = current.means_flat().iter().chain(current.chol_flat()).copied().collect();
    let mut adam = Adam::new(cfg.adam(), params.len());
    let mut best = (T::infinity(), current.clone());
    let mut initial = None;
    let mut grad = vec![T::zero(); params.len()];
    for step in 0..=cfg.adam_steps {
        let eval = pooled_objective_grad(&current, blocks, weights)?;
        if initial.is_none() {
            initial = Some(eval.value);
        }
        if eval.value < best.0 {
            best = (eval.value, current.clone());
        }
        if step == cfg.adam_steps {
            break;
        }
        grad[..nm].copy_from_slice(&eval.grad_means);
        grad[nm..].copy_from_slice(&eval.grad_chol);
        adam.step(&mut params, &grad);
        current.means_flat_mut().copy_from_slice(&params[..nm]);
        current.chol_flat_mut().copy_from_slice(&params[nm..]);
        current.enforce_variance_floor(floor)?;
        params[nm..].copy_from_slice(current.chol_flat());
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("M-step produced non-finite parameters"));
        }
    }
    Ok(MStepOutcome {
        components: best.1,
        initial_objective: initial.unwrap_or(best.0),
        objective: best.0,
    })
}

/// One M-step on a single-subject dataset with per-time bandwidths.
pub fn m_step_components<T: Real>(
    components: &ComponentSet<T>,
    dataset: &PanelDataset<T>,
    weights: &DiscreteWeights<T>,
    kernels: &[KernelConfig<T>],
    cfg: &FitConfig,
) -> Result<ComponentSet<T>> {
    if kernels.len() != dataset.num_times() || weights.len() != dataset.num_times() {
        return Err(Error::invalid("need one kernel and one weight row per time block"));
    }
    let blocks: Vec<TimeBlock<'_, T>> = dataset
        .blocks()
        .iter()
        .zip(kernels)
        .map(|(b, k)| TimeBlock::new(b, *k))
        .collect::<Result<_>>()?;
    Ok(m_step_blocks(components, &blocks, weights.rows(), cfg)?.components)
}

/// Dense covariances of a component set, exposed for diagnostics.
pub fn component_covariances<T: Real>(components: &ComponentSet<T>) -> Vec<Vec<T>> {
    (0..components.k())
        .map(|s| lower_gram(components.chol_factor(s), components.dim()))
        .collect()
}
