//! Shared Gaussian components and mixture evaluation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{floor_eigenvalues, lower_gram, Cholesky};
use crate::scalar::{lit, to_f64, Real};

/// A single Gaussian `N(mean, cov)` with a dense row-major covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian<T = f64> {
    pub mean: Vec<T>,
    pub cov: Vec<T>,
}

impl<T: Real> Gaussian<T> {
    pub fn new(mean: Vec<T>, cov: Vec<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(Error::invalid(format!(
                "gaussian of dimension {d} needs {} covariance entries, got {}",
                d * d,
                cov.len()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Isotropic Gaussian `N(mean, variance · I)`.
    pub fn isotropic(mean: Vec<T>, variance: T) -> Self {
        let d = mean.len();
        let mut cov = vec![T::zero(); d * d];
        for i in 0..d {
            cov[i * d + i] = variance;
        }
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// The `K` globally shared components, each stored as a mean and a
/// lower-triangular factor `L_s` with `Σ_s = L_s L_sᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet<T = f64> {
    k: usize,
    dim: usize,
    means: Vec<T>,
    chol: Vec<T>,
}

impl<T: Real> ComponentSet<T> {
    /// Builds a component set from means and dense covariances.
    pub fn from_covariances(means: &[Vec<T>], covariances: &[Vec<T>]) -> Result<Self> {
        let k = means.len();
        if k == 0 || covariances.len() != k {
            return Err(Error::invalid("need one covariance per mean and K >= 1"));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mut flat_means = Vec::with_capacity(k * dim);
        let mut chol = Vec::with_capacity(k * dim * dim);
        for (m, c) in means.iter().zip(covariances) {
            if m.len() != dim || c.len() != dim * dim {
                return Err(Error::invalid("inconsistent component dimensions"));
            }
            flat_means.extend_from_slice(m);
            chol.extend(Cholesky::new(c, dim)?.into_factor());
        }
        Ok(Self { k, dim, means: flat_means, chol })
    }

    /// Builds a component set from flat means (`K·d`) and flat lower factors
    /// (`K·d·d`). Factors must have strictly positive diagonals.
    pub fn from_factors(k: usize, dim: usize, means: Vec<T>, chol: Vec<T>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::invalid("K and d must be at least 1"));
        }
        if means.len() != k * dim || chol.len() != k * dim * dim {
            return Err(Error::invalid(format!(
                "expected {} mean and {} factor entries, got {} and {}",
                k * dim,
                k * dim * dim,
                means.len(),
                chol.len()
            )));
        }
        for s in 0..k {
            let l = &chol[s * dim * dim..(s + 1) * dim * dim];
            for i in 0..dim {
                if !(l[i * dim + i] > T::zero()) {
                    return Err(Error::invalid(format!(
                        "factor {s} has non-positive diagonal entry {i}"
                    )));
                }
                for j in i + 1..dim {
                    if l[i * dim + j] != T::zero() {
                        return Err(Error::invalid(format!("factor {s} is not lower triangular")));
                    }
                }
            }
        }
        if means.iter().chain(&chol).any(|v| !v.is_finite()) {
            return Err(Error::invalid("component parameters must be finite"));
        }
        Ok(Self { k, dim, means, chol })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of free parameters `K (1 + d + d(d+1)/2)` of the weighted family.
    pub fn parameter_count(&self) -> usize {
        self.k * (1 + self.dim + self.dim * (self.dim + 1) / 2)
    }

    pub fn mean(&self, s: usize) -> &[T] {
        &self.means[s * self.dim..(s + 1) * self.dim]
    }

    pub fn chol_factor(&self, s: usize) -> &[T] {
        let dd = self.dim * self.dim;
        &self.chol[s * dd..(s + 1) * dd]
    }

    pub fn means_flat(&self) -> &[T] {
        &self.means
    }

    pub fn chol_flat(&self) -> &[T] {
        &self.chol
    }

    pub(crate) fn means_flat_mut(&mut self) -> &mut [T] {
        &mut self.means
    }

    pub(crate) fn chol_flat_mut(&mut self) -> &mut [T] {
        &mut self.chol
    }

    pub fn covariance(&self, s: usize) -> Vec<T> {
        lower_gram(self.chol_factor(s), self.dim)
    }

    pub fn component(&self, s: usize) -> Gaussian<T> {
        Gaussian {
            mean: self.mean(s).to_vec(),
            cov: self.covariance(s),
        }
    }

    pub fn components(&self) -> Vec<Gaussian<T>> {
        (0..self.k).map(|s| self.component(s)).collect()
    }

    /// Smallest covariance eigenvalue over all components.
    pub fn min_covariance_eigenvalue(&self) -> T {
        (0..self.k)
            .flat_map(|s| crate::linalg::sym_eigen(&self.covariance(s), self.dim).0)
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// Restores the covariance floor: factor diagonals are made positive
    /// (column sign flips leave `L Lᵀ` unchanged) and any covariance with an
    /// eigenvalue below `floor` has that spectrum clamped and is refactored.
    pub fn enforce_variance_floor(&mut self, floor: T) -> Result<()> {
        let d = self.dim;
        let dd = d * d;
        let root = floor.sqrt();
        for s in 0..self.k {
            let l = &mut self.chol[s * dd..(s + 1) * dd];
            for j in 0..d {
                if l[j * d + j] < T::zero() {
                    for i in j..d {
                        l[i * d + j] = -l[i * d + j];
                    }
                }
            }
            if d == 1 {
                if l[0] < root {
                    l[0] = root;
                }
                continue;
            }
            let cov = lower_gram(l, d);
            if let Some(lifted) = floor_eigenvalues(&cov, d, floor) {
                // Lifting by a hair above the floor keeps the refactored
                // spectrum on the right side of it after rounding.
                let mut target = lifted;
                let bump = floor * lit::<T>(1e-9);
                for i in 0..d {
                    target[i * d + i] += bump;
                }
                let factor = Cholesky::new(&target, d)?.into_factor();
                l.copy_from_slice(&factor);
            }
        }
        Ok(())
    }

    /// Log-density of component `s` at `x`.
    pub fn component_log_density(&self, s: usize, x: &[T]) -> T {
        let d = self.dim;
        let l = self.chol_factor(s);
        let m = self.mean(s);
        let mut y: Vec<T> = x.iter().zip(m).map(|(&a, &b)| a - b).collect();
        for i in 0..d {
            let mut acc = y[i];
            for k in 0..i {
                acc -= l[i * d + k] * y[k];
            }
            y[i] = acc / l[i * d + i];
        }
        let quad: T = y.iter().map(|&v| v * v).sum();
        let log_det: T = (0..d).map(|i| l[i * d + i].ln()).sum::<T>() * lit(2.0);
        let half = lit::<T>(0.5);
        -half * quad - half * log_det - half * lit::<T>(d as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Mixture density `Σ_s w_s N(x; m_s, Σ_s)`.
    pub fn mixture_density(&self, weights: &[T], x: &[T]) -> T {
        weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > T::zero())
            .map(|(s, &w)| w * self.component_log_density(s, x).exp())
            .sum()
    }

    /// Draws one point from component `s`.
    pub fn sample_component<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Vec<T> {
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let l = self.chol_factor(s);
        let m = self.mean(s);
        (0..d)
            .map(|i| {
                let mut v = to_f64(m[i]);
                for k in 0..=i {
                    v += to_f64(l[i * d + k]) * z[k];
                }
                lit::<T>(v)
            })
            .collect()
    }

    /// Draws `n` points from the mixture with the given weights.
    pub fn sample_mixture<R: Rng + ?Sized>(&self, weights: &[T], n: usize, rng: &mut R) -> Vec<Vec<T>> {
        let cumulative = cumulative_weights(weights);
        (0..n)
            .map(|_| {
                let s = pick_component(&cumulative, rng);
                self.sample_component(s, rng)
            })
            .collect()
    }
}

pub(crate) fn cumulative_weights<T: Real>(weights: &[T]) -> Vec<f64> {
    let total: f64 = weights.iter().map(|&w| to_f64(w)).sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|&w| {
            acc += to_f64(w) / total;
            acc
        })
        .collect()
}

pub(crate) fn pick_component<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}
