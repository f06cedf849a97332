//! E-step: ridge-penalized MMD² minimization over the weight simplex.
//!
//! For one time block the objective is
//! `wᵀ (I + diag λ) w − 2 wᵀ (J / n)`, which differs from `MMD²(w) + Σ λ_s w_s²`
//! only by the data constant. `I` is PSD and `λ ≥ 0`, so the problem is a
//! convex QP on the simplex, solved by projected gradient with step `1/Lip`.

use crate::discrete::simplex::simplex_project;
use crate::discrete::FitConfig;
use crate::error::{Error, Result};
use crate::kernel::{dot, quadratic_part, MmdTerms};
use crate::linalg::{max_eigenvalue, solve_dense};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T = f64> {
    pub weights: Vec<T>,
    /// `wᵀQw − 2bᵀw` at the returned point (no data constant).
    pub objective: T,
    pub iterations: usize,
    /// False when the iteration cap was hit before the stationarity
    /// residual fell below tolerance; the best iterate is still returned.
    pub converged: bool,
}

/// A convex QP `min_{w∈Δ} wᵀQw − 2bᵀw` with `Q` symmetric PSD.
#[derive(Debug, Clone)]
pub struct SimplexQp<T> {
    q: Vec<T>,
    b: Vec<T>,
    lip: T,
}

impl<T: Real> SimplexQp<T> {
    pub fn new(q: Vec<T>, b: Vec<T>) -> Result<Self> {
        let k = b.len();
        if k == 0 || q.len() != k * k {
            return Err(Error::invalid("QP needs a K×K matrix and a K-vector"));
        }
        if q.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::domain("QP data must be finite"));
        }
        let lip = lit::<T>(2.0) * max_eigenvalue(&q, k).max(T::epsilon());
        Ok(Self { q, b, lip })
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, w: &[T]) -> T {
        quadratic_part(w, &self.q) - lit::<T>(2.0) * dot(w, &self.b)
    }

    pub fn gradient(&self, w: &[T]) -> Vec<T> {
        let k = self.k();
        (0..k)
            .map(|s| {
                let row: T = (0..k).map(|r| self.q[s * k + r] * w[r]).sum();
                lit::<T>(2.0) * (row - self.b[s])
            })
            .collect()
    }

    fn pg_step(&self, w: &[T]) -> Vec<T> {
        let g = self.gradient(w);
        let v: Vec<T> = w.iter().zip(&g).map(|(&x, &gx)| x - gx / self.lip).collect();
        simplex_project(&v)
    }

    /// `‖w − P(w − ∇f(w)/Lip)‖∞`; zero exactly at the minimizer.
    pub fn stationarity_residual(&self, w: &[T]) -> T {
        self.pg_step(w)
            .iter()
            .zip(w)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Exact minimizer restricted to the support of `w`, from the KKT system
    /// `Q_SS w_S + ν 1 = b_S`, `1ᵀ w_S = 1`.
    fn polish(&self, w: &[T]) -> Option<Vec<T>> {
        let k = self.k();
        let support: Vec<usize> = (0..k).filter(|&s| w[s] > T::zero()).collect();
        let m = support.len();
        if m == 0 {
            return None;
        }
        let n = m + 1;
        let mut a = vec![T::zero(); n * n];
        let mut rhs = vec![T::zero(); n];
        for (i, &s) in support.iter().enumerate() {
            for (j, &r) in support.iter().enumerate() {
                a[i * n + j] = self.q[s * k + r];
            }
            a[i * n + m] = T::one();
            a[m * n + i] = T::one();
            rhs[i] = self.b[s];
        }
        rhs[m] = T::one();
        let sol = solve_dense(&a, &rhs, n)?;
        let mut out = vec![T::zero(); k];
        for (i, &s) in support.iter().enumerate() {
            if sol[i] < T::zero() {
                return None;
            }
            out[s] = sol[i];
        }
        let total: T = out.iter().copied().sum();
        out.iter_mut().for_each(|x| *x /= total);
        Some(out)
    }

    pub fn solve(&self, start: Option<&[T]>, tol: T, max_iter: usize) -> QpSolution<T> {
        let k = self.k();
        let mut w = match start {
            Some(s) if s.len() == k => simplex_project(s),
            _ => vec![T::one() / from_usize::<T>(k); k],
        };
        let mut converged = false;
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it + 1;
            let next = self.pg_step(&w);
            let delta = next
                .iter()
                .zip(&w)
                .map(|(&a, &b)| (a - b).abs())
                .fold(T::zero(), T::max);
            w = next;
            if delta < tol {
                converged = true;
                break;
            }
            if it % 16 == 15 {
                if let Some(p) = self.polish(&w) {
                    if self.stationarity_residual(&p) < tol {
                        w = p;
                        converged = true;
                        break;
                    }
                }
            }
        }
        if let Some(p) = self.polish(&w) {
            if self.objective(&p) <= self.objective(&w) {
                w = p;
            }
        }
        if !converged {
            converged = self.stationarity_residual(&w) < tol;
        }
        QpSolution { objective: self.objective(&w), weights: w, iterations, converged }
    }
}

/// Builds the per-time QP from closed-form MMD terms. The `1/n` of the
/// MMD² cross term is folded into the linear coefficient.
pub fn local_qp<T: Real>(terms: &MmdTerms<T>, n: usize, ridge: &[T]) -> Result<SimplexQp<T>> {
    let k = terms.k();
    if ridge.len() != k {
        return Err(Error::invalid(format!("{} ridge values for K = {k}", ridge.len())));
    }
    if ridge.iter().any(|&l| !(l >= T::zero())) {
        return Err(Error::invalid("ridge penalties must be nonnegative"));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut q = terms.gram_components.clone();
    for s in 0..k {
        q[s * k + s] += ridge[s];
    }
    let inv_n = T::one() / from_usize::<T>(n);
    let b = terms.cross_vector.iter().map(|&j| j * inv_n).collect();
    SimplexQp::new(q, b)
}

pub fn e_step_weights<T: Real>(
    terms: &MmdTerms<T>,
    n: usize,
    ridge: &[T],
    cfg: &FitConfig,
) -> Result<QpSolution<T>> {
    e_step_weights_from(terms, n, ridge, cfg, None)
}

pub fn e_step_weights_from<T: Real>(
    terms: &MmdTerms<T>,
    n: usize,
    ridge: &[T],
    cfg: &FitConfig,
    start: Option<&[T]>,
) -> Result<QpSolution<T>> {
    let qp = local_qp(terms, n, ridge)?;
    Ok(qp.solve(start, lit(cfg.qp_tol), cfg.qp_max_iter))
}
