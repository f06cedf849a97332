//! Trajectory loss against stage-one weights and its training loop.

use crate::discrete::DiscreteWeights;
use crate::error::{Error, Result};
use crate::ode::mlp::VectorFieldParams;
use crate::ode::rk4::{integrate_segment, rk4_step_vjp, StepTape};
use crate::ode::{normalize_weights, normalize_weights_vjp, step_count, DifferentiableField, OdeConfig};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::{lit, Real};

struct Readoff<T> {
    /// Steps completed when the target time is reached.
    steps: usize,
    target: usize,
    state: Vec<T>,
}

struct Forward<T> {
    fit: T,
    tapes: Vec<StepTape<T>>,
    readoffs: Vec<Readoff<T>>,
}

fn check_inputs<T: Real>(field: &VectorFieldParams<T>, alpha0: &[T], targets: &DiscreteWeights<T>) -> Result<()> {
    let k = field.k();
    if alpha0.len() != k || targets.k() != k {
        return Err(Error::invalid(format!(
            "field has K = {k}, alpha0 has {}, targets have {}",
            alpha0.len(),
            targets.k()
        )));
    }
    if alpha0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("alpha0 must be finite"));
    }
    let mut prev = T::zero();
    for &t in targets.times() {
        if !(t >= prev) || t > T::one() {
            return Err(Error::invalid("target times must be nondecreasing within [0, 1]"));
        }
        prev = t;
    }
    Ok(())
}

fn forward<T: Real>(
    field: &VectorFieldParams<T>,
    alpha0: &[T],
    targets: &DiscreteWeights<T>,
    cfg: &OdeConfig,
    record: bool,
) -> Result<Forward<T>> {
    check_inputs(field, alpha0, targets)?;
    cfg.validate()?;
    let floor = lit::<T>(cfg.weight_floor);
    let mut tapes = Vec::new();
    let mut readoffs = Vec::with_capacity(targets.len());
    let mut fit = T::zero();
    let mut y = alpha0.to_vec();
    let mut tau = T::zero();
    let mut steps = 0;
    for (i, (&t, row)) in targets.times().iter().zip(targets.rows()).enumerate() {
        y = integrate_segment(field, &y, tau, t, cfg.rk4_steps, steps, |_, _, tape| {
            if record {
                tapes.push(tape);
            }
        })?;
        steps += step_count(t - tau, cfg.rk4_steps);
        let a = normalize_weights(&y, floor);
        fit += a.iter().zip(row).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>();
        readoffs.push(Readoff { steps, target: i, state: y.clone() });
        tau = t;
    }
    Ok(Forward { fit, tapes, readoffs })
}

/// `Σ_i ‖normalize(α(t_i)) − α_i‖² + ν‖φ‖²`, integrating once from `t = 0`.
pub fn node_loss<T: Real>(
    field: &VectorFieldParams<T>,
    alpha0: &[T],
    targets: &DiscreteWeights<T>,
    cfg: &OdeConfig,
) -> Result<T> {
    let fwd = forward(field, alpha0, targets, cfg, false)?;
    Ok(fwd.fit + lit::<T>(cfg.nu) * field.squared_norm())
}

/// Loss, gradient in `φ`, and gradient in the raw initial state, by reverse
/// mode through the unrolled integrator.
pub fn node_loss_grad<T: Real>(
    field: &VectorFieldParams<T>,
    alpha0: &[T],
    targets: &DiscreteWeights<T>,
    cfg: &OdeConfig,
) -> Result<(T, Vec<T>, Vec<T>)> {
    loss_grad(field, alpha0, targets, cfg, false)
}

fn loss_grad<T: Real>(
    field: &VectorFieldParams<T>,
    alpha0: &[T],
    targets: &DiscreteWeights<T>,
    cfg: &OdeConfig,
    pass_clamped: bool,
) -> Result<(T, Vec<T>, Vec<T>)> {
    let fwd = forward(field, alpha0, targets, cfg, true)?;
    let floor = lit::<T>(cfg.weight_floor);
    let two = lit::<T>(2.0);
    let mut grad = vec![T::zero(); field.num_params()];
    let mut y_bar = vec![T::zero(); alpha0.len()];
    let mut r = fwd.readoffs.len();
    for j in (0..=fwd.tapes.len()).rev() {
        while r > 0 && fwd.readoffs[r - 1].steps == j {
            let ro = &fwd.readoffs[r - 1];
            let a = normalize_weights(&ro.state, floor);
            let g: Vec<T> = a
                .iter()
                .zip(&targets.rows()[ro.target])
                .map(|(&p, &q)| two * (p - q))
                .collect();
            let back = normalize_weights_vjp(&ro.state, floor, &g, pass_clamped);
            y_bar.iter_mut().zip(&back).for_each(|(u, &v)| *u += v);
            r -= 1;
        }
        if j > 0 {
            y_bar = rk4_step_vjp(field, &fwd.tapes[j - 1], &y_bar, &mut grad);
        }
    }
    let nu = lit::<T>(cfg.nu);
    grad.iter_mut()
        .zip(field.params())
        .for_each(|(g, &p)| *g += two * nu * p);
    let loss = fwd.fit + nu * field.squared_norm();
    Ok((loss, grad, y_bar))
}

pub(crate) fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone)]
pub struct TrainedNode<T = f64> {
    pub field: VectorFieldParams<T>,
    pub alpha0: Vec<T>,
    pub initial_loss: T,
    pub loss: T,
    /// Learning-rate halvings that were needed.
    pub restarts: usize,
    pub lr: f64,
}

enum Attempt<T> {
    Done(TrainedNode<T>),
    Diverged,
}

fn attempt<T: Real>(
    targets: &DiscreteWeights<T>,
    cfg: &OdeConfig,
    init: &VectorFieldParams<T>,
    logits0: &[T],
    lr: f64,
) -> Result<Attempt<T>> {
    let n_phi = init.params().len();
    let k = logits0.len();
    let mut params: Vec<T> = init.params().iter().chain(logits0).copied().collect();
    let mut field = init.clone();
    let mut adam = Adam::new(AdamConfig { lr, ..Default::default() }, params.len());
    let mut grad = vec![T::zero(); params.len()];
    let mut initial = None;
    let mut best: Option<(T, Vec<T>)> = None;
    for epoch in 0..=cfg.epochs {
        field.params_mut().copy_from_slice(&params[..n_phi]);
        let alpha0 = softmax(&params[n_phi..]);
        let (loss, g_phi, g_alpha) = match loss_grad(&field, &alpha0, targets, cfg, true) {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => return Ok(Attempt::Diverged),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || g_phi.iter().chain(&g_alpha).any(|v| !v.is_finite()) {
            return Ok(Attempt::Diverged);
        }
        initial.get_or_insert(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, params.clone()));
        }
        if epoch == cfg.epochs {
            break;
        }
        grad[..n_phi].copy_from_slice(&g_phi);
        let inner: T = g_alpha.iter().zip(&alpha0).map(|(&g, &a)| g * a).sum();
        for s in 0..k {
            grad[n_phi + s] = alpha0[s] * (g_alpha[s] - inner);
        }
        adam.step(&mut params, &grad);
    }
    let (loss, params) = best.expect("at least one epoch evaluated");
    field.params_mut().copy_from_slice(&params[..n_phi]);
    Ok(Attempt::Done(TrainedNode {
        field,
        alpha0: softmax(&params[n_phi..]),
        initial_loss: initial.expect("at least one epoch evaluated"),
        loss,
        restarts: 0,
        lr,
    }))
}

/// Fits `(φ, alpha0)` to the stage-one weights with Adam. `alpha0` is
/// parameterized by softmax logits started at the first target row. The best
/// iterate is returned, so the loss never exceeds its starting value.
pub fn train_node<T: Real>(targets: &DiscreteWeights<T>, cfg: &OdeConfig) -> Result<TrainedNode<T>> {
    cfg.validate()?;
    if targets.len() < 2 {
        return Err(Error::invalid("training needs at least two target times"));
    }
    let k = targets.k();
    let init = VectorFieldParams::init(k, &cfg.hidden, cfg.seed);
    let tiny = lit::<T>(1e-12);
    let logits0: Vec<T> = targets.rows()[0].iter().map(|&a| a.max(tiny).ln()).collect();
    let mut lr = cfg.lr;
    for restart in 0..=cfg.max_restarts {
        match attempt(targets, cfg, &init, &logits0, lr)? {
            Attempt::Done(mut trained) => {
                trained.restarts = restart;
                return Ok(trained);
            }
            Attempt::Diverged => lr *= 0.5,
        }
    }
    Err(Error::Training(format!(
        "diverged after {} learning-rate halvings",
        cfg.max_restarts
    )))
}
