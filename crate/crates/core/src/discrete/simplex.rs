//! Euclidean projection onto the probability simplex.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// `argmin_{w ∈ Δ} ‖w − v‖₂` by the sort-and-threshold algorithm.
pub fn simplex_project<T: Real>(v: &[T]) -> Vec<T> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - T::one()) / from_usize::<T>(j + 1);
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    let mut w: Vec<T> = v.iter().map(|&x| (x - theta).max(T::zero())).collect();
    // one rescale absorbs the rounding of the threshold
    let total: T = w.iter().copied().sum();
    if total > T::zero() {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Checks nonnegativity (down to `-tol`) and unit sum within `tol`.
pub fn check_simplex<T: Real>(w: &[T], tol: T) -> Result<()> {
    if w.iter().any(|&x| !x.is_finite() || x < -tol) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total: T = w.iter().copied().sum();
    if (total - T::one()).abs() > tol {
        return Err(Error::invalid(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

pub fn is_on_simplex<T: Real>(w: &[T], tol: T) -> bool {
    w.iter().all(|&x| x >= T::zero()) && check_simplex(w, tol).is_ok()
}
