//! Classical fixed-step RK4 and its reverse pass.

use crate::error::{Error, Result};
use crate::ode::{step_count, DifferentiableField, OdeConfig, VectorField};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// States needed to pull a cotangent back through one step.
#[derive(Debug, Clone)]
pub(crate) struct StepTape<T> {
    pub t: T,
    pub h: T,
    pub y: Vec<T>,
    pub y2: Vec<T>,
    pub y3: Vec<T>,
    pub y4: Vec<T>,
}

fn axpy<T: Real>(y: &[T], a: T, x: &[T]) -> Vec<T> {
    y.iter().zip(x).map(|(&u, &v)| u + a * v).collect()
}

/// One RK4 step from `(t, y)` with size `h`.
pub(crate) fn rk4_step<T: Real, F: VectorField<T> + ?Sized>(field: &F, y: &[T], t: T, h: T) -> (Vec<T>, StepTape<T>) {
    let k = y.len();
    let half = lit::<T>(0.5) * h;
    let mut k1 = vec![T::zero(); k];
    field.eval(y, t, &mut k1);
    let y2 = axpy(y, half, &k1);
    let mut k2 = vec![T::zero(); k];
    field.eval(&y2, t + half, &mut k2);
    let y3 = axpy(y, half, &k2);
    let mut k3 = vec![T::zero(); k];
    field.eval(&y3, t + half, &mut k3);
    let y4 = axpy(y, h, &k3);
    let mut k4 = vec![T::zero(); k];
    field.eval(&y4, t + h, &mut k4);
    let sixth = h / lit::<T>(6.0);
    let two = lit::<T>(2.0);
    let next = (0..k)
        .map(|i| y[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect();
    (next, StepTape { t, h, y: y.to_vec(), y2, y3, y4 })
}

/// Given the cotangent of the step output, returns the cotangent of its input
/// and accumulates the parameter gradient.
pub(crate) fn rk4_step_vjp<T: Real, F: DifferentiableField<T> + ?Sized>(
    field: &F,
    tape: &StepTape<T>,
    y_bar_out: &[T],
    grad_params: &mut [T],
) -> Vec<T> {
    let h = tape.h;
    let half = lit::<T>(0.5) * h;
    let sixth = h / lit::<T>(6.0);
    let third = h / lit::<T>(3.0);
    let mut y_bar = y_bar_out.to_vec();
    let k1_bar: Vec<T> = y_bar_out.iter().map(|&g| sixth * g).collect();
    let mut k2_bar: Vec<T> = y_bar_out.iter().map(|&g| third * g).collect();
    let mut k3_bar = k2_bar.clone();
    let k4_bar = k1_bar.clone();
    let mut k1_bar = k1_bar;

    let y4_bar = field.vjp(&tape.y4, tape.t + h, &k4_bar, grad_params);
    for i in 0..y_bar.len() {
        y_bar[i] += y4_bar[i];
        k3_bar[i] += h * y4_bar[i];
    }
    let y3_bar = field.vjp(&tape.y3, tape.t + half, &k3_bar, grad_params);
    for i in 0..y_bar.len() {
        y_bar[i] += y3_bar[i];
        k2_bar[i] += half * y3_bar[i];
    }
    let y2_bar = field.vjp(&tape.y2, tape.t + half, &k2_bar, grad_params);
    for i in 0..y_bar.len() {
        y_bar[i] += y2_bar[i];
        k1_bar[i] += half * y2_bar[i];
    }
    let y1_bar = field.vjp(&tape.y, tape.t, &k1_bar, grad_params);
    for i in 0..y_bar.len() {
        y_bar[i] += y1_bar[i];
    }
    y_bar
}

/// Integrates in equal steps from `t_start` to `t_end`, calling `visit` on
/// each completed step. Step `i` (1-based) ends at `t_start + i·h`.
pub(crate) fn integrate_segment<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    y0: &[T],
    t_start: T,
    t_end: T,
    rk4_steps: usize,
    step_offset: usize,
    mut visit: impl FnMut(&[T], T, StepTape<T>),
) -> Result<Vec<T>> {
    let n = step_count(t_end - t_start, rk4_steps);
    let mut y = y0.to_vec();
    if n == 0 {
        return Ok(y);
    }
    let h = (t_end - t_start) / from_usize::<T>(n);
    for i in 0..n {
        let t = t_start + from_usize::<T>(i) * h;
        let (next, tape) = rk4_step(field, &y, t, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step_offset + i + 1, t: to_f64(t + h) });
        }
        let t_next = if i + 1 == n { t_end } else { t_start + from_usize::<T>(i + 1) * h };
        visit(&next, t_next, tape);
        y = next;
    }
    Ok(y)
}

/// All states from `t_start` to `t_end`, including the initial one.
pub fn integrate_rk4<T: Real, F: VectorField<T> + ?Sized>(
    field: &F,
    alpha0: &[T],
    t_start: T,
    t_end: T,
    cfg: &OdeConfig,
) -> Result<Vec<(T, Vec<T>)>> {
    if !(t_start <= t_end) || !t_start.is_finite() || !t_end.is_finite() {
        return Err(Error::invalid("integration needs finite t_start <= t_end"));
    }
    if alpha0.len() != field.dim() {
        return Err(Error::invalid(format!(
            "initial state has {} entries, field expects {}",
            alpha0.len(),
            field.dim()
        )));
    }
    if alpha0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state must be finite"));
    }
    cfg.validate()?;
    let mut out = vec![(t_start, alpha0.to_vec())];
    integrate_segment(field, alpha0, t_start, t_end, cfg.rk4_steps, 0, |y, t, _| {
        out.push((t, y.to_vec()));
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::VectorFieldParams;

    struct Linear {
        a: Vec<f64>,
        k: usize,
    }

    impl VectorField<f64> for Linear {
        fn dim(&self) -> usize {
            self.k
        }
        fn eval(&self, y: &[f64], _t: f64, out: &mut [f64]) {
            for i in 0..self.k {
                out[i] = (0..self.k).map(|j| self.a[i * self.k + j] * y[j]).sum();
            }
        }
    }

    impl DifferentiableField<f64> for Linear {
        fn num_params(&self) -> usize {
            0
        }
        fn vjp(&self, _y: &[f64], _t: f64, c: &[f64], _g: &mut [f64]) -> Vec<f64> {
            (0..self.k).map(|j| (0..self.k).map(|i| self.a[i * self.k + j] * c[i]).sum()).collect()
        }
    }

    fn expm_apply(a: &[f64], k: usize, y: &[f64], t: f64) -> Vec<f64> {
        // Taylor series; converges fast for ‖tA‖ ≤ 1
        let mut term = y.to_vec();
        let mut acc = y.to_vec();
        for n in 1..60 {
            let next: Vec<f64> = (0..k)
                .map(|i| (0..k).map(|j| a[i * k + j] * term[j]).sum::<f64>() * t / n as f64)
                .collect();
            term = next;
            acc.iter_mut().zip(&term).for_each(|(x, y)| *x += y);
        }
        acc
    }

    fn cfg(steps: usize) -> OdeConfig {
        OdeConfig { rk4_steps: steps, ..Default::default() }
    }

    #[test]
    fn zero_field_is_constant() {
        let f = VectorFieldParams::<f64>::zeros(3, &[4]);
        let traj = integrate_rk4(&f, &[0.2, 0.3, 0.5], 0.0, 1.0, &cfg(100)).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.iter().all(|(_, y)| y == &vec![0.2, 0.3, 0.5]));
        assert_eq!(traj.last().unwrap().0, 1.0);
    }

    #[test]
    fn exponential_growth() {
        let f = Linear { a: vec![1.0], k: 1 };
        let traj = integrate_rk4(&f, &[1.0], 0.0, 1.0, &cfg(100)).unwrap();
        assert!((traj.last().unwrap().1[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn linear_system_matches_matrix_exponential() {
        let a = vec![-0.3, 0.4, 0.1, 0.2, -0.5, 0.3, 0.1, 0.1, -0.4];
        let f = Linear { a: a.clone(), k: 3 };
        let y0 = [0.5, 0.3, 0.2];
        let traj = integrate_rk4(&f, &y0, 0.0, 1.0, &cfg(100)).unwrap();
        let exact = expm_apply(&a, 3, &y0, 1.0);
        for (x, e) in traj.last().unwrap().1.iter().zip(&exact) {
            assert!((x - e).abs() < 1e-6);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let a = vec![0.0, 1.0, -1.0, 0.0];
        let f = Linear { a: a.clone(), k: 2 };
        let y0 = [1.0, 0.0];
        let exact = expm_apply(&a, 2, &y0, 1.0);
        let err = |n: usize| {
            let traj = integrate_rk4(&f, &y0, 0.0, 1.0, &cfg(n)).unwrap();
            let y = &traj.last().unwrap().1;
            y.iter().zip(&exact).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
        };
        let order = (err(8) / err(16)).log2();
        assert!((3.5..=4.5).contains(&order), "order {order}");
    }

    #[test]
    fn divergence_names_the_step() {
        struct Blowup;
        impl VectorField<f64> for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, y: &[f64], _t: f64, out: &mut [f64]) {
                out[0] = y[0] * y[0] * 1e30;
            }
        }
        let err = integrate_rk4(&Blowup, &[1.0], 0.0, 1.0, &cfg(100)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn step_vjp_matches_finite_differences() {
        let f = VectorFieldParams::<f64>::init(2, &[3], 11);
        let y = [0.4, 0.6];
        let c = [0.7, -0.2];
        let (_, tape) = rk4_step(&f, &y, 0.3, 0.1);
        let mut gp = vec![0.0; f.num_params()];
        let gy = rk4_step_vjp(&f, &tape, &c, &mut gp);
        let out = |field: &VectorFieldParams<f64>, y: &[f64]| -> f64 {
            rk4_step(field, y, 0.3, 0.1).0.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..f.num_params() {
            let mut p = f.clone();
            p.params_mut()[i] += h;
            let mut m = f.clone();
            m.params_mut()[i] -= h;
            let fd = (out(&p, &y) - out(&m, &y)) / (2.0 * h);
            assert!((fd - gp[i]).abs() < 1e-8);
        }
        for i in 0..2 {
            let mut p = y;
            p[i] += h;
            let mut m = y;
            m[i] -= h;
            let fd = (out(&f, &p) - out(&f, &m)) / (2.0 * h);
            assert!((fd - gy[i]).abs() < 1e-8);
        }
    }
}
