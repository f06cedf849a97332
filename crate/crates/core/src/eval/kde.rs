//! Time-conditional Gaussian KDE baseline.

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = from_usize::<T>(n - 1) * p;
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - from_usize::<T>(lo)) * (sorted[hi] - sorted[lo])
}

fn mean_sd<T: Real>(xs: &[T]) -> (T, T) {
    let n = from_usize::<T>(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - T::one())).sqrt())
}

/// Silverman's rule, one bandwidth per coordinate. In one dimension this is
/// `0.9·min(sd, IQR/1.34)·n^{-1/5}`; in `d` dimensions
/// `(4/(d+2))^{1/(d+4)}·n^{-1/(d+4)}·sd_j`. Coordinates without spread fall
/// back to the robust scale that is nonzero, then to 1.
pub fn silverman_bandwidths<T: Real>(samples: &[Vec<T>]) -> Vec<T> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    (0..d)
        .map(|j| {
            let mut xs: Vec<T> = samples.iter().map(|x| x[j]).collect();
            let (_, sd) = mean_sd(&xs);
            let h = if d == 1 {
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let iqr = quantile_sorted(&xs, lit(0.75)) - quantile_sorted(&xs, lit(0.25));
                let robust = iqr / lit::<T>(1.34);
                let scale = if robust > T::zero() && sd > T::zero() { sd.min(robust) } else { sd.max(robust) };
                lit::<T>(0.9 * n.powf(-0.2)) * scale
            } else {
                let df = d as f64;
                lit::<T>((4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * n.powf(-1.0 / (df + 4.0))) * sd
            };
            if h > T::zero() && h.is_finite() {
                h
            } else {
                T::one()
            }
        })
        .collect()
}

/// Product-Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct Kde<T = f64> {
    samples: Vec<Vec<T>>,
    bandwidths: Vec<T>,
    log_norm: T,
}

impl<T: Real> Kde<T> {
    pub fn new(samples: &[Vec<T>]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("KDE needs at least one sample"));
        }
        let bw = silverman_bandwidths(samples);
        Self::with_bandwidths(samples, bw)
    }

    pub fn with_bandwidths(samples: &[Vec<T>], bandwidths: Vec<T>) -> Result<Self> {
        let d = bandwidths.len();
        if samples.iter().any(|x| x.len() != d) || bandwidths.iter().any(|&h| !(h > T::zero())) {
            return Err(Error::invalid("KDE samples and bandwidths must agree and be positive"));
        }
        let half_log_2pi = lit::<T>(0.5 * (2.0 * std::f64::consts::PI).ln());
        let log_norm = -(bandwidths.iter().map(|h| h.ln() + half_log_2pi).sum::<T>())
            - from_usize::<T>(samples.len()).ln();
        Ok(Self { samples: samples.to_vec(), bandwidths, log_norm })
    }

    pub fn bandwidths(&self) -> &[T] {
        &self.bandwidths
    }

    pub fn density(&self, x: &[T]) -> T {
        let half = lit::<T>(0.5);
        let total: T = self
            .samples
            .iter()
            .map(|s| {
                let q: T = s
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidths)
                    .map(|((&a, &b), &h)| {
                        let z = (b - a) / h;
                        z * z
                    })
                    .sum();
                (-half * q + self.log_norm).exp()
            })
            .sum();
        total
    }
}

/// KDE of the block observed at `t_query`, evaluated on `x_grid`.
pub fn kde_time_conditional<T: Real>(dataset: &PanelDataset<T>, t_query: T, x_grid: &[Vec<T>]) -> Result<Vec<T>> {
    let i = dataset
        .time_index(t_query)
        .ok_or_else(|| Error::invalid(format!("t = {t_query} is not an observed time")))?;
    let kde = Kde::new(dataset.block(i))?;
    if x_grid.iter().any(|x| x.len() != dataset.dim()) {
        return Err(Error::invalid("grid point dimension does not match the data"));
    }
    Ok(x_grid.iter().map(|x| kde.density(x)).collect())
}
