//! Synthetic scenarios with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::mixture::ComponentSet;
use crate::scalar::{from_usize, lit, Real};

/// A target density `f(x, t)` that can be evaluated and sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth<T = f64> {
    /// Three equal-weight components with means `−2 + 20t`, `16t`, `5 + 6t`
    /// on every coordinate and covariance `(1 + t)·I`.
    MovingMeans { dim: usize },
    /// A time-constant mixture.
    Static { components: ComponentSet<T>, weights: Vec<T> },
}

impl<T: Real> GroundTruth<T> {
    pub fn dim(&self) -> usize {
        match self {
            GroundTruth::MovingMeans { dim } => *dim,
            GroundTruth::Static { components, .. } => components.dim(),
        }
    }

    /// Components and weights of the truth at time `t`.
    pub fn mixture_at(&self, t: T) -> Result<(ComponentSet<T>, Vec<T>)> {
        match self {
            GroundTruth::MovingMeans { dim } => {
                let d = *dim;
                let centers = [lit::<T>(-2.0) + lit::<T>(20.0) * t, lit::<T>(16.0) * t, lit::<T>(5.0) + lit::<T>(6.0) * t];
                let var = T::one() + t;
                let means: Vec<Vec<T>> = centers.iter().map(|&c| vec![c; d]).collect();
                let mut cov = vec![T::zero(); d * d];
                for i in 0..d {
                    cov[i * d + i] = var;
                }
                let comps = ComponentSet::from_covariances(&means, &vec![cov; 3])?;
                let third = T::one() / lit::<T>(3.0);
                Ok((comps, vec![third; 3]))
            }
            GroundTruth::Static { components, weights } => Ok((components.clone(), weights.clone())),
        }
    }

    pub fn density(&self, x: &[T], t: T) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::invalid("point dimension does not match the ground truth"));
        }
        let (c, w) = self.mixture_at(t)?;
        Ok(c.mixture_density(&w, x))
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: T, n: usize, rng: &mut R) -> Result<Vec<Vec<T>>> {
        let (c, w) = self.mixture_at(t)?;
        Ok(c.sample_mixture(&w, n, rng))
    }
}

/// Equally spaced grid of `m_points` times on `[0, 1]`.
pub fn unit_grid<T: Real>(m_points: usize) -> Vec<T> {
    let last = from_usize::<T>(m_points.saturating_sub(1).max(1));
    (0..m_points)
        .map(|i| if i + 1 == m_points { T::one() } else { from_usize::<T>(i) / last })
        .collect()
}

/// Draws `n_t` points at each of `m_points` equally spaced times from the
/// moving-means scenario.
pub fn simulate_scenario<T: Real>(
    d: usize,
    n_t: usize,
    m_points: usize,
    seed: u64,
) -> Result<(PanelDataset<T>, GroundTruth<T>)> {
    if d == 0 || n_t == 0 || m_points < 2 {
        return Err(Error::invalid("simulation needs d >= 1, n_t >= 1 and at least two time points"));
    }
    let truth = GroundTruth::MovingMeans { dim: d };
    let data = simulate_truth(&truth, &unit_grid(m_points), n_t, seed)?;
    Ok((data, truth))
}

/// Samples any ground truth on a given time grid.
pub fn simulate_truth<T: Real>(truth: &GroundTruth<T>, times: &[T], n_t: usize, seed: u64) -> Result<PanelDataset<T>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let blocks = times
        .iter()
        .map(|&t| truth.sample(t, n_t, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::new(truth.dim(), times.to_vec(), blocks, None)
}

/// Resamples each time block with replacement, preserving block sizes.
pub fn bootstrap_resample<T: Real>(dataset: &PanelDataset<T>, seed: u64) -> PanelDataset<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let blocks = dataset
        .blocks()
        .iter()
        .map(|b| (0..b.len()).map(|_| b[rng.random_range(0..b.len())].clone()).collect())
        .collect();
    PanelDataset::new(dataset.dim(), dataset.times().to_vec(), blocks, dataset.subject().map(str::to_owned))
        .expect("resampling preserves the layout")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_at_endpoints() {
        let g = GroundTruth::<f64>::MovingMeans { dim: 1 };
        let (c, w) = g.mixture_at(0.0).unwrap();
        let means: Vec<f64> = (0..3).map(|s| c.mean(s)[0]).collect();
        assert_eq!(means, vec![-2.0, 0.0, 5.0]);
        assert!((0..3).all(|s| (c.covariance(s)[0] - 1.0).abs() < 1e-15));
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-16));
        let (c, _) = g.mixture_at(1.0).unwrap();
        let means: Vec<f64> = (0..3).map(|s| c.mean(s)[0]).collect();
        assert_eq!(means, vec![18.0, 16.0, 11.0]);
        assert!((0..3).all(|s| (c.covariance(s)[0] - 2.0).abs() < 1e-14));
    }

    #[test]
    fn replicated_coordinates() {
        let g = GroundTruth::<f64>::MovingMeans { dim: 3 };
        let (c, _) = g.mixture_at(0.5).unwrap();
        assert_eq!(c.mean(0), &[8.0, 8.0, 8.0]);
        let cov = c.covariance(2);
        for (a, b) in cov.iter().zip(&[1.5, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 1.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn moments_at_time_zero() {
        let n = 100_000;
        let (ds, _) = simulate_scenario::<f64>(1, n, 2, 42).unwrap();
        let xs: Vec<f64> = ds.block(0).iter().map(|x| x[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // mixture variance: within 1 plus between-means spread around 1
        let between = [(-2.0f64 - 1.0).powi(2), 1.0, 16.0].iter().sum::<f64>() / 3.0;
        let var_truth = 1.0 + between;
        assert!((mean - 1.0).abs() <= 3.0 * (var_truth / n as f64).sqrt(), "mean {mean}");
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // fourth central moment of the mixture bounds the variance estimator's sd
        let m4: f64 = [-3.0f64, -1.0, 4.0].iter().map(|&c| c.powi(4) + 6.0 * c * c + 3.0).sum::<f64>() / 3.0;
        let se = ((m4 - var_truth * var_truth) / n as f64).sqrt();
        assert!((var - var_truth).abs() <= 4.0 * se, "var {var} vs {var_truth}");
    }

    #[test]
    fn simulation_is_reproducible() {
        let (a, _) = simulate_scenario::<f64>(2, 20, 11, 7).unwrap();
        let (b, _) = simulate_scenario::<f64>(2, 20, 11, 7).unwrap();
        let (c, _) = simulate_scenario::<f64>(2, 20, 11, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_times(), 11);
        assert_eq!(a.times()[10], 1.0);
        assert!((a.times()[3] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn resample_examples() {
        let ds = PanelDataset::new(1, vec![0.0, 1.0], vec![vec![vec![3.0]], (0..5).map(|i| vec![i as f64]).collect()], None).unwrap();
        let r = bootstrap_resample(&ds, 1);
        assert_eq!(r.block(0), ds.block(0));
        assert_eq!(r.block(1).len(), 5);
        assert_eq!(r, bootstrap_resample(&ds, 1));
        assert_ne!(bootstrap_resample(&ds, 1), bootstrap_resample(&ds, 2));
    }

    #[test]
    fn resample_multiplicity_is_one_on_average() {
        let n = 6;
        let ds = PanelDataset::new(1, vec![0.0], vec![(0..n).map(|i| vec![i as f64]).collect()], None).unwrap();
        let seeds = 10_000;
        let mut counts = vec![0.0f64; n];
        for s in 0..seeds {
            for x in bootstrap_resample(&ds, s).block(0) {
                counts[x[0] as usize] += 1.0;
            }
        }
        // multiplicity ~ Binomial(n, 1/n)
        let se = ((1.0 - 1.0 / n as f64) / seeds as f64).sqrt();
        for c in counts {
            assert!((c / seeds as f64 - 1.0).abs() <= 3.0 * se);
        }
    }
}
