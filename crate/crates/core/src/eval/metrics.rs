//! Density error against a known truth.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::data::GroundTruth;
use crate::error::{Error, Result};
use crate::mixture::ComponentSet;
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Points of the one-dimensional trapezoid grid.
pub const GRID_POINTS: usize = 2048;
/// Half-width of the grid in units of the largest component sd.
pub const GRID_SPAN_SDS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityErrorReport {
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub l1: Vec<f64>,
    pub sup_l1: f64,
    pub seconds: f64,
}

impl DensityErrorReport {
    pub fn mean_l2(&self) -> f64 {
        self.l2.iter().sum::<f64>() / self.l2.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integration {
    /// Trapezoid rule on an even grid covering the truth (d = 1).
    Grid { points: usize },
    /// Self-normalized importance sampling (any d).
    ImportanceSampling { nodes: usize, seed: u64 },
}

impl Integration {
    pub fn default_for(dim: usize, seed: u64) -> Self {
        if dim == 1 {
            Integration::Grid { points: GRID_POINTS }
        } else {
            Integration::ImportanceSampling { nodes: 20_000, seed }
        }
    }
}

/// Trapezoid grid `[min m − 8σ_max, max m + 8σ_max]` for a 1-d mixture.
pub fn support_grid<T: Real>(components: &ComponentSet<T>, points: usize) -> Result<Vec<T>> {
    if components.dim() != 1 {
        return Err(Error::Unsupported("grid integration needs d = 1".into()));
    }
    if points < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut sd_max = T::zero();
    for s in 0..components.k() {
        let m = components.mean(s)[0];
        lo = lo.min(m);
        hi = hi.max(m);
        sd_max = sd_max.max(components.chol_factor(s)[0].abs());
    }
    let span = lit::<T>(GRID_SPAN_SDS) * sd_max;
    let (lo, hi) = (lo - span, hi + span);
    let step = (hi - lo) / from_usize::<T>(points - 1);
    Ok((0..points).map(|i| lo + from_usize::<T>(i) * step).collect())
}

/// Union of per-time support grids: covers every time of a moving truth.
pub fn support_grid_over<T: Real>(truth: &GroundTruth<T>, times: &[T], points: usize) -> Result<Vec<T>> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for &t in times {
        let (c, _) = truth.mixture_at(t)?;
        let g = support_grid(&c, 2)?;
        lo = lo.min(g[0]);
        hi = hi.max(g[1]);
    }
    let step = (hi - lo) / from_usize::<T>(points - 1);
    Ok((0..points).map(|i| lo + from_usize::<T>(i) * step).collect())
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Defensive proposal: half the truth, half the truth with covariances ×4.
fn widened<T: Real>(c: &ComponentSet<T>) -> Result<ComponentSet<T>> {
    let two = lit::<T>(2.0);
    let chol: Vec<T> = c.chol_flat().iter().map(|&v| v * two).collect();
    ComponentSet::from_factors(c.k(), c.dim(), c.means_flat().to_vec(), chol)
}

/// Errors of an estimate against the truth at each time. `estimate` is
/// called once per time with the time index and the evaluation points.
pub fn density_error<T: Real, F>(
    mut estimate: F,
    truth: &GroundTruth<T>,
    times: &[T],
    method: Integration,
) -> Result<DensityErrorReport>
where
    F: FnMut(usize, &[Vec<T>]) -> Result<Vec<T>>,
{
    let start = Instant::now();
    if times.is_empty() {
        return Err(Error::invalid("density error needs at least one time"));
    }
    let mut l2 = Vec::with_capacity(times.len());
    let mut l1 = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let (comps, w) = truth.mixture_at(t)?;
        let (e2, e1) = match method {
            Integration::Grid { points } => {
                let grid = support_grid(&comps, points)?;
                let xs: Vec<Vec<T>> = grid.iter().map(|&x| vec![x]).collect();
                let est = estimate(i, &xs)?;
                check_len(&est, xs.len())?;
                let diff: Vec<f64> = est
                    .iter()
                    .zip(&xs)
                    .map(|(&e, x)| to_f64(e) - to_f64(comps.mixture_density(&w, x)))
                    .collect();
                let step = to_f64(grid[1] - grid[0]);
                let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
                let ab: Vec<f64> = diff.iter().map(|d| d.abs()).collect();
                (trapezoid(&sq, step), trapezoid(&ab, step))
            }
            Integration::ImportanceSampling { nodes, seed } => {
                let wide = widened(&comps)?;
                let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let xs: Vec<Vec<T>> = (0..nodes)
                    .map(|_| {
                        let src = if rng.random_bool(0.5) { &comps } else { &wide };
                        src.sample_mixture(&w, 1, &mut rng).pop().expect("one draw")
                    })
                    .collect();
                let est = estimate(i, &xs)?;
                check_len(&est, xs.len())?;
                let (mut s2, mut s1, mut norm) = (0.0, 0.0, 0.0);
                for (x, &e) in xs.iter().zip(&est) {
                    let f = to_f64(comps.mixture_density(&w, x));
                    let q = 0.5 * f + 0.5 * to_f64(wide.mixture_density(&w, x));
                    let d = to_f64(e) - f;
                    s2 += d * d / q;
                    s1 += d.abs() / q;
                    norm += f / q;
                }
                (s2 / norm, s1 / norm)
            }
        };
        if !e2.is_finite() || !e1.is_finite() {
            return Err(Error::domain(format!("density error is not finite at t = {t}")));
        }
        l2.push(e2.max(0.0).sqrt());
        l1.push(e1.max(0.0));
    }
    let sup_l1 = l1.iter().copied().fold(0.0, f64::max);
    Ok(DensityErrorReport {
        times: times.iter().map(|&t| to_f64(t)).collect(),
        l2,
        l1,
        sup_l1,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_len<T>(est: &[T], n: usize) -> Result<()> {
    if est.len() != n {
        return Err(Error::invalid(format!("estimate returned {} values for {n} points", est.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth1(means: &[f64]) -> GroundTruth<f64> {
        let m: Vec<Vec<f64>> = means.iter().map(|&x| vec![x]).collect();
        let c = ComponentSet::from_covariances(&m, &vec![vec![1.0]; means.len()]).unwrap();
        let k = means.len();
        GroundTruth::Static { components: c, weights: vec![1.0 / k as f64; k] }
    }

    #[test]
    fn exact_estimate_has_zero_error() {
        let g = GroundTruth::<f64>::MovingMeans { dim: 1 };
        let times = [0.0, 0.5, 1.0];
        let r = density_error(
            |i, xs| xs.iter().map(|x| g.density(x, times[i])).collect(),
            &g,
            &times,
            Integration::Grid { points: GRID_POINTS },
        )
        .unwrap();
        assert!(r.l2.iter().chain(&r.l1).all(|&e| e < 1e-8));
        let g3 = GroundTruth::<f64>::MovingMeans { dim: 3 };
        let r = density_error(
            |i, xs| xs.iter().map(|x| g3.density(x, times[i])).collect(),
            &g3,
            &times,
            Integration::ImportanceSampling { nodes: 500, seed: 1 },
        )
        .unwrap();
        assert!(r.sup_l1 < 1e-12);
    }

    #[test]
    fn disjoint_densities_have_l1_two() {
        let g = truth1(&[0.0]);
        let far = truth1(&[200.0]);
        let grid_err = density_error(
            |_, xs| xs.iter().map(|x| far.density(x, 0.0)).collect(),
            &g,
            &[0.0],
            Integration::Grid { points: GRID_POINTS },
        )
        .unwrap();
        // the grid only covers the truth, so the far mass is invisible
        assert!((grid_err.l1[0] - 1.0).abs() < 1e-6);
        let near = truth1(&[30.0]);
        let mc = density_error(
            |_, xs| xs.iter().map(|x| near.density(x, 0.0)).collect(),
            &g,
            &[0.0],
            Integration::ImportanceSampling { nodes: 20_000, seed: 3 },
        )
        .unwrap();
        // proposal also covers none of the far bump; L1 counts the truth's mass
        assert!((mc.l1[0] - 1.0).abs() < 1e-6);
        // both bumps inside the grid: full total-variation distance
        let wide = GroundTruth::Static {
            components: ComponentSet::from_covariances(&[vec![0.0], vec![30.0]], &[vec![1.0], vec![1.0]]).unwrap(),
            weights: vec![1.0, 0.0],
        };
        let total = density_error(
            |_, xs| xs.iter().map(|x| near.density(x, 0.0)).collect(),
            &wide,
            &[0.0],
            Integration::Grid { points: GRID_POINTS },
        )
        .unwrap();
        assert!((total.l1[0] - 2.0).abs() < 1e-6, "{}", total.l1[0]);
    }

    #[test]
    fn importance_sampling_matches_grid_in_one_dimension() {
        let g = truth1(&[-1.0, 2.0]);
        let est = truth1(&[-0.5, 2.5]);
        let f = |_: usize, xs: &[Vec<f64>]| xs.iter().map(|x| est.density(x, 0.0)).collect();
        let a = density_error(f, &g, &[0.0], Integration::Grid { points: GRID_POINTS }).unwrap();
        let b = density_error(f, &g, &[0.0], Integration::ImportanceSampling { nodes: 200_000, seed: 2 }).unwrap();
        assert!((a.l2[0] - b.l2[0]).abs() < 0.02 * a.l2[0], "{} vs {}", a.l2[0], b.l2[0]);
        assert!((a.l1[0] - b.l1[0]).abs() < 0.02 * a.l1[0]);
    }
}
