//! Tanh MLP vector field `f_φ([α; t])` with reverse-mode gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ode::{DifferentiableField, VectorField};
use crate::scalar::{lit, Real};

/// Layer sizes run from the input width `K + 1` through the hidden widths to
/// the output width `K`. Parameters are stored layer by layer as a row-major
/// weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldParams<T = f64> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
}

pub fn parameter_len(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> VectorFieldParams<T> {
    pub fn new(layer_sizes: Vec<usize>, params: Vec<T>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid("vector field needs at least input and output layers"));
        }
        let k = *layer_sizes.last().unwrap();
        if layer_sizes[0] != k + 1 {
            return Err(Error::invalid(format!(
                "input width {} must equal output width {k} plus one (time)",
                layer_sizes[0]
            )));
        }
        let expected = parameter_len(&layer_sizes);
        if params.len() != expected {
            return Err(Error::invalid(format!("expected {expected} parameters, got {}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("vector field parameters must be finite"));
        }
        Ok(Self { layer_sizes, params })
    }

    pub fn zeros(k: usize, hidden: &[usize]) -> Self {
        let sizes = Self::sizes(k, hidden);
        let n = parameter_len(&sizes);
        Self { layer_sizes: sizes, params: vec![T::zero(); n] }
    }

    fn sizes(k: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![k + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(k);
        sizes
    }

    /// Glorot-normal weights and zero biases; the output layer is scaled by
    /// 0.1 so the initial field is close to zero.
    pub fn init(k: usize, hidden: &[usize], seed: u64) -> Self {
        let sizes = Self::sizes(k, hidden);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(parameter_len(&sizes));
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut sd = (2.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                sd *= 0.1;
            }
            let normal = Normal::new(0.0, sd).expect("positive sd");
            params.extend((0..fan_in * fan_out).map(|_| lit::<T>(normal.sample(&mut rng))));
            params.extend((0..fan_out).map(|_| T::zero()));
        }
        Self { layer_sizes: sizes, params }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn k(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, in, out)
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let o = offset;
            offset += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    fn forward_into(&self, input: &[T], acts: &mut Vec<Vec<T>>) {
        acts.clear();
        acts.push(input.to_vec());
        let n_layers = self.layer_sizes.len() - 1;
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let a = &acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z: Vec<T> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(a).map(|(&x, &y)| x * y).sum::<T>() + b[o]
                })
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
    }

    fn input(&self, alpha: &[T], t: T) -> Vec<T> {
        let mut x = Vec::with_capacity(alpha.len() + 1);
        x.extend_from_slice(alpha);
        x.push(t);
        x
    }

    /// `f_φ([α; t])`.
    pub fn eval(&self, alpha: &[T], t: T) -> Result<Vec<T>> {
        if alpha.len() != self.k() {
            return Err(Error::invalid(format!("state has {} entries, field expects {}", alpha.len(), self.k())));
        }
        if !t.is_finite() || alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("vector field input must be finite"));
        }
        let mut out = vec![T::zero(); self.k()];
        VectorField::eval(self, alpha, t, &mut out);
        Ok(out)
    }

    /// Upper bound on the Lipschitz constant in `α`: the product of the
    /// layers' Frobenius norms (each bounds its spectral norm; tanh is
    /// 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> T {
        self.layers()
            .map(|(off, n_in, n_out)| {
                self.params[off..off + n_in * n_out]
                    .iter()
                    .map(|&w| w * w)
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::one(), |acc, x| acc * x)
    }

    pub fn squared_norm(&self) -> T {
        self.params.iter().map(|&p| p * p).sum()
    }
}

impl<T: Real> VectorField<T> for VectorFieldParams<T> {
    fn dim(&self) -> usize {
        self.k()
    }

    fn eval(&self, y: &[T], t: T, out: &mut [T]) {
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        self.forward_into(&self.input(y, t), &mut acts);
        out.copy_from_slice(acts.last().unwrap());
    }
}

impl<T: Real> DifferentiableField<T> for VectorFieldParams<T> {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn vjp(&self, y: &[T], t: T, cotangent: &[T], grad_params: &mut [T]) -> Vec<T> {
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        self.forward_into(&self.input(y, t), &mut acts);
        let layers: Vec<(usize, usize, usize)> = self.layers().collect();
        let n_layers = layers.len();
        let mut g = cotangent.to_vec();
        for l in (0..n_layers).rev() {
            let (off, n_in, n_out) = layers[l];
            if l + 1 < n_layers {
                let h = &acts[l + 1];
                g.iter_mut().zip(h).for_each(|(gv, &hv)| *gv *= T::one() - hv * hv);
            }
            let a = &acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let mut g_prev = vec![T::zero(); n_in];
            for o in 0..n_out {
                let go = g[o];
                if go == T::zero() {
                    continue;
                }
                let gw = &mut grad_params[off + o * n_in..off + (o + 1) * n_in];
                for i in 0..n_in {
                    gw[i] += go * a[i];
                    g_prev[i] += w[o * n_in + i] * go;
                }
                grad_params[off + n_in * n_out + o] += go;
            }
            g = g_prev;
        }
        g.truncate(y.len());
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_network_is_zero_field() {
        let f = VectorFieldParams::<f64>::zeros(3, &[5, 4]);
        assert_eq!(f.eval(&[0.2, 0.3, 0.5], 0.7).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn output_shape_and_validation() {
        let f = VectorFieldParams::<f64>::init(4, &[8], 1);
        assert_eq!(f.eval(&[0.25; 4], 0.1).unwrap().len(), 4);
        assert!(f.eval(&[0.25; 3], 0.1).is_err());
        assert!(f.eval(&[f64::NAN, 0.0, 0.0, 0.0], 0.1).is_err());
        assert!(VectorFieldParams::<f64>::new(vec![3, 2], vec![0.0; 8]).is_ok());
        assert!(VectorFieldParams::<f64>::new(vec![2, 2], vec![0.0; 6]).is_err());
        assert!(VectorFieldParams::<f64>::new(vec![3, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn respects_lipschitz_bound() {
        let f = VectorFieldParams::<f64>::init(3, &[16, 16], 7);
        let c = f.lipschitz_bound();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = rng.random_range(0.0..1.0);
            let fa = f.eval(&a, t).unwrap();
            let fb = f.eval(&b, t).unwrap();
            let lhs = fa.iter().zip(&fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let rhs = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(lhs <= c * rhs + 1e-12);
        }
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let f = VectorFieldParams::<f64>::init(2, &[3], 5);
        let y = [0.3, 0.7];
        let t = 0.4;
        let cot = [0.8, -1.3];
        let mut gp = vec![0.0; f.num_params()];
        let gy = f.vjp(&y, t, &cot, &mut gp);
        let scalar = |field: &VectorFieldParams<f64>, y: &[f64]| -> f64 {
            field.eval(y, t).unwrap().iter().zip(&cot).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for i in 0..f.num_params() {
            let mut p = f.clone();
            p.params_mut()[i] += h;
            let mut m = f.clone();
            m.params_mut()[i] -= h;
            let fd = (scalar(&p, &y) - scalar(&m, &y)) / (2.0 * h);
            assert!((fd - gp[i]).abs() < 1e-8, "param {i}: {fd} vs {}", gp[i]);
        }
        for i in 0..2 {
            let mut yp = y;
            yp[i] += h;
            let mut ym = y;
            ym[i] -= h;
            let fd = (scalar(&f, &yp) - scalar(&f, &ym)) / (2.0 * h);
            assert!((fd - gy[i]).abs() < 1e-8);
        }
    }
}
