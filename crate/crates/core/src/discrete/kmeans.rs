//! k-means initialization of the shared components.
//!
//! Lloyd's algorithm with k-means++ seeding on the pooled samples of every
//! time block. The best of several restarts (lowest inertia) seeds the
//! component means, per-cluster covariances, and cluster-share weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::PanelDataset;
use crate::discrete::FitConfig;
use crate::error::{Error, Result};
use crate::linalg::floor_eigenvalues;
use crate::mixture::ComponentSet;
use crate::scalar::{from_usize, lit, squared_distance, to_f64, Real};

#[derive(Debug, Clone)]
pub struct KMeansInit<T = f64> {
    pub components: ComponentSet<T>,
    /// Cluster shares `c_s / n`.
    pub weights: Vec<T>,
    pub inertia: T,
}

pub fn kmeans_init<T: Real>(dataset: &PanelDataset<T>, k: usize, cfg: &FitConfig) -> Result<KMeansInit<T>> {
    let pooled: Vec<&[T]> = dataset.pooled().collect();
    kmeans_pooled(&pooled, k, cfg)
}

struct Clustering<T> {
    centers: Vec<Vec<T>>,
    labels: Vec<usize>,
    inertia: T,
}

pub fn kmeans_pooled<T: Real>(points: &[&[T]], k: usize, cfg: &FitConfig) -> Result<KMeansInit<T>> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(format!("{} pooled samples cannot seed {k} clusters", points.len())));
    }
    let dim = points[0].len();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Clustering<T>> = None;
    for _ in 0..cfg.kmeans_restarts {
        let run = lloyd(points, plus_plus_seed(points, k, &mut rng), cfg.kmeans_max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");

    let floor = lit::<T>(cfg.variance_floor);
    let n = points.len();
    let mut counts = vec![0usize; k];
    let mut covs = vec![vec![T::zero(); dim * dim]; k];
    for (x, &s) in points.iter().zip(&best.labels) {
        counts[s] += 1;
        let c = &best.centers[s];
        for i in 0..dim {
            for j in 0..=i {
                covs[s][i * dim + j] += (x[i] - c[i]) * (x[j] - c[j]);
            }
        }
    }
    for (cov, &count) in covs.iter_mut().zip(&counts) {
        let c = from_usize::<T>(count.max(1));
        for i in 0..dim {
            for j in 0..=i {
                let v = cov[i * dim + j] / c;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        if let Some(lifted) = floor_eigenvalues(cov, dim, floor) {
            *cov = lifted;
        }
        // a hair above the floor so that refactoring cannot round under it
        let bump = floor * lit::<T>(1e-9);
        for i in 0..dim {
            cov[i * dim + i] += bump;
        }
    }
    let mut components = ComponentSet::from_covariances(&best.centers, &covs)?;
    components.enforce_variance_floor(floor)?;
    let weights = counts.iter().map(|&c| from_usize::<T>(c) / from_usize::<T>(n)).collect();
    Ok(KMeansInit { components, weights, inertia: best.inertia })
}

fn plus_plus_seed<T: Real, R: Rng>(points: &[&[T]], k: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = points.len();
    let mut centers: Vec<Vec<T>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)].to_vec());
    let mut dist: Vec<f64> = points.iter().map(|x| to_f64(squared_distance(x, &centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            dist.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].to_vec();
        for (d, x) in dist.iter_mut().zip(points) {
            *d = d.min(to_f64(squared_distance(x, &c)));
        }
        centers.push(c);
    }
    centers
}

fn nearest<T: Real>(x: &[T], centers: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (s, c) in centers.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (s, d);
        }
    }
    best
}

fn lloyd<T: Real>(points: &[&[T]], mut centers: Vec<Vec<T>>, max_iter: usize) -> Clustering<T> {
    let k = centers.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        let mut dists = Vec::with_capacity(points.len());
        for (i, x) in points.iter().enumerate() {
            let (s, d) = nearest(x, &centers);
            if labels[i] != s {
                labels[i] = s;
                changed = true;
            }
            dists.push(d);
        }
        // Empty clusters take the point farthest from its current center.
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&s| counts[s] += 1);
        for s in 0..k {
            if counts[s] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap_or(std::cmp::Ordering::Equal));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = s;
                counts[s] = 1;
                dists[i] = T::zero();
                changed = true;
            }
        }
        let mut sums = vec![vec![T::zero(); dim]; k];
        for (x, &s) in points.iter().zip(&labels) {
            for (acc, &v) in sums[s].iter_mut().zip(x.iter()) {
                *acc += v;
            }
        }
        for s in 0..k {
            if counts[s] > 0 {
                let c = from_usize::<T>(counts[s]);
                centers[s] = sums[s].iter().map(|&v| v / c).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(x, &s)| squared_distance(x, &centers[s]))
        .sum();
    Clustering { centers, labels, inertia }
}
