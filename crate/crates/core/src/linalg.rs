//! Small dense linear algebra on row-major square matrices.
//!
//! Dimensions here are the data dimension `d` (at most a few tens), so plain
//! triple loops are the right tool.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    dim: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes a symmetric positive definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &[T], dim: usize) -> Result<Self> {
        if a.len() != dim * dim {
            return Err(Error::invalid(format!(
                "matrix has {} entries, expected {}",
                a.len(),
                dim * dim
            )));
        }
        let mut l = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = a[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return Err(Error::domain(format!(
                            "matrix is not positive definite (pivot {i} = {sum})"
                        )));
                    }
                    l[i * dim + i] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Ok(Self { dim, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factor(&self) -> &[T] {
        &self.l
    }

    pub fn into_factor(self) -> Vec<T> {
        self.l
    }

    pub fn log_det(&self) -> T {
        let two = lit::<T>(2.0);
        (0..self.dim).map(|i| self.l[i * self.dim + i].ln()).sum::<T>() * two
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `bᵀ A⁻¹ b`.
    pub fn quad_form_inv(&self, b: &[T]) -> T {
        self.solve_lower(b).iter().map(|&v| v * v).sum()
    }

    pub fn inverse(&self) -> Vec<T> {
        let n = self.dim;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize away rounding asymmetry
        for i in 0..n {
            for j in 0..i {
                let avg = (inv[i * n + j] + inv[j * n + i]) * lit::<T>(0.5);
                inv[i * n + j] = avg;
                inv[j * n + i] = avg;
            }
        }
        inv
    }
}

/// `L Lᵀ` for a lower-triangular `L`.
pub fn lower_gram<T: Real>(l: &[T], dim: usize) -> Vec<T> {
    let mut out = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = T::zero();
            for k in 0..=j {
                s += l[i * dim + k] * l[j * dim + k];
            }
            out[i * dim + j] = s;
            out[j * dim + i] = s;
        }
    }
    out
}

pub fn add_diagonal<T: Real>(a: &mut [T], dim: usize, v: T) {
    for i in 0..dim {
        a[i * dim + i] += v;
    }
}

pub fn identity<T: Real>(dim: usize) -> Vec<T> {
    let mut a = vec![T::zero(); dim * dim];
    add_diagonal(&mut a, dim, T::one());
    a
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `k` stored in
/// column `k` of the row-major output.
pub fn sym_eigen<T: Real>(a: &[T], dim: usize) -> (Vec<T>, Vec<T>) {
    let n = dim;
    let mut m = a.to_vec();
    let mut v = identity::<T>(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut scale = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = m[i * n + j] * m[i * n + j];
                if i != j {
                    off += x;
                }
                scale += x;
            }
        }
        if off <= eps * eps * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

pub fn max_eigenvalue<T: Real>(a: &[T], dim: usize) -> T {
    sym_eigen(a, dim)
        .0
        .into_iter()
        .fold(T::neg_infinity(), |acc, x| acc.max(x))
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`.
///
/// Returns `None` when the smallest eigenvalue already clears the floor.
pub fn floor_eigenvalues<T: Real>(a: &[T], dim: usize, floor: T) -> Option<Vec<T>> {
    let (vals, vecs) = sym_eigen(a, dim);
    if vals.iter().all(|&l| l >= floor) {
        return None;
    }
    let clamped: Vec<T> = vals.iter().map(|&l| l.max(floor)).collect();
    let mut out = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = T::zero();
            for k in 0..dim {
                s += vecs[i * dim + k] * clamped[k] * vecs[j * dim + k];
            }
            out[i * dim + j] = s;
            out[j * dim + i] = s;
        }
    }
    Some(out)
}

/// Solves a general dense system by Gaussian elimination with partial
/// pivoting. Returns `None` for a numerically singular matrix.
pub fn solve_dense<T: Real>(a: &[T], b: &[T], dim: usize) -> Option<Vec<T>> {
    let n = dim;
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * lit::<T>(1e3);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if m[pivot * n + col].abs() <= tiny {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        let p = m[col * n + col];
        for row in col + 1..n {
            let f = m[row * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col * n + k];
                m[row * n + k] -= f * v;
            }
            let v = x[col];
            x[row] -= f * v;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
