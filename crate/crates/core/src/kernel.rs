//! Gaussian-kernel algebra for minimum-MMD fitting.
//!
//! With `k(x, y) = exp(-‖x − y‖² / 2σ²)` every expectation of the kernel
//! against a Gaussian is itself a Gaussian integral, so the squared MMD
//! between a mixture and an empirical measure reduces to three blocks:
//!
//! * `I[s][r] = E k(Y_s, Y_r)` for `Y_s ~ N(m_s, Σ_s)` ([`gauss_gauss_term`]),
//! * `J[s] = Σ_j E k(Y_s, X_j)` ([`gauss_point_term`]),
//! * the data-only V-statistic `(1/n²) Σ_j Σ_l k(X_j, X_l)`.
//!
//! [`mmd_sq_monte_carlo`] estimates the same quantity by sampling and exists
//! to check the closed forms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::discrete::simplex::check_simplex;
use crate::error::{Error, Result};
use crate::linalg::{add_diagonal, Cholesky};
use crate::mixture::{cumulative_weights, pick_component, ComponentSet, Gaussian};
use crate::scalar::{from_usize, lit, squared_distance, to_f64, Real};

/// Tolerance below zero within which a computed MMD² is clamped to zero.
pub const MMD_CLAMP_TOL: f64 = 1e-10;
/// Off-simplex tolerance accepted by [`mmd_sq`].
pub const SIMPLEX_INPUT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<T = f64> {
    sigma_sq: T,
    dim: usize,
    degenerate: bool,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(sigma_sq: T, dim: usize) -> Result<Self> {
        if !(sigma_sq > T::zero()) || !sigma_sq.is_finite() {
            return Err(Error::invalid(format!("bandwidth sigma^2 must be positive, got {sigma_sq}")));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        Ok(Self { sigma_sq, dim, degenerate: false })
    }

    /// The `σ² = 1` fallback used when a block has no spread.
    pub fn degenerate(dim: usize) -> Self {
        Self { sigma_sq: T::one(), dim: dim.max(1), degenerate: true }
    }

    pub(crate) fn with_flag(mut self, degenerate: bool) -> Self {
        self.degenerate = degenerate;
        self
    }

    pub fn sigma_sq(&self) -> T {
        self.sigma_sq
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Set when the median heuristic found no spread and fell back to `σ² = 1`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `(σ²)^{d/2}`, the prefactor shared by the closed-form terms.
    pub fn log_scale(&self) -> T {
        lit::<T>(0.5 * self.dim as f64) * self.sigma_sq.ln()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::invalid(format!(
                "vector of dimension {len} used with a {}-dimensional kernel",
                self.dim
            )));
        }
        Ok(())
    }
}

pub fn gaussian_kernel<T: Real>(x: &[T], y: &[T], cfg: &KernelConfig<T>) -> Result<T> {
    cfg.check_dim(x.len())?;
    cfg.check_dim(y.len())?;
    Ok(kernel_unchecked(x, y, cfg.sigma_sq))
}

#[inline]
pub(crate) fn kernel_unchecked<T: Real>(x: &[T], y: &[T], sigma_sq: T) -> T {
    (-squared_distance(x, y) / (lit::<T>(2.0) * sigma_sq)).exp()
}

/// Median-heuristic bandwidth: `σ²` is the square of the median pairwise
/// Euclidean distance. For an even number of pairs the lower middle order
/// statistic is used.
pub fn median_heuristic<T: Real>(samples: &[Vec<T>]) -> Result<KernelConfig<T>> {
    if samples.len() < 2 {
        return Err(Error::invalid("median heuristic needs at least two samples"));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid("samples must share a nonzero dimension"));
    }
    let n = samples.len();
    let mut dist_sq = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for k in j + 1..n {
            dist_sq.push(squared_distance(&samples[j], &samples[k]));
        }
    }
    let idx = (dist_sq.len() - 1) / 2;
    let (_, median, _) = dist_sq.select_nth_unstable_by(idx, |a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    let median = *median;
    if median > T::zero() && median.is_finite() {
        // median of distances squared equals median of squared distances
        Ok(KernelConfig { sigma_sq: median, dim, degenerate: false })
    } else {
        Ok(KernelConfig::degenerate(dim))
    }
}

fn check_component<T: Real>(g: &Gaussian<T>, cfg: &KernelConfig<T>) -> Result<()> {
    cfg.check_dim(g.mean.len())?;
    if g.cov.len() != cfg.dim * cfg.dim {
        return Err(Error::invalid("covariance dimension does not match the kernel"));
    }
    Ok(())
}

/// `E k(Y_s, Y_r)` for independent `Y_s ~ N(m_s, Σ_s)`, `Y_r ~ N(m_r, Σ_r)`.
pub fn gauss_gauss_term<T: Real>(s: &Gaussian<T>, r: &Gaussian<T>, cfg: &KernelConfig<T>) -> Result<T> {
    check_component(s, cfg)?;
    check_component(r, cfg)?;
    let d = cfg.dim;
    let mut a: Vec<T> = s.cov.iter().zip(&r.cov).map(|(&x, &y)| x + y).collect();
    add_diagonal(&mut a, d, cfg.sigma_sq);
    let ch = Cholesky::new(&a, d)?;
    let delta: Vec<T> = s.mean.iter().zip(&r.mean).map(|(&x, &y)| x - y).collect();
    let half = lit::<T>(0.5);
    Ok((cfg.log_scale() - half * ch.log_det() - half * ch.quad_form_inv(&delta)).exp())
}

/// Per-component factorization of `Σ_s + σ²I` reused across many points.
#[derive(Debug, Clone)]
pub(crate) struct PointTermFactor<T> {
    pub chol: Cholesky<T>,
    pub log_prefactor: T,
}

impl<T: Real> PointTermFactor<T> {
    pub fn new(cov: &[T], cfg: &KernelConfig<T>) -> Result<Self> {
        let d = cfg.dim;
        let mut b = cov.to_vec();
        add_diagonal(&mut b, d, cfg.sigma_sq);
        let chol = Cholesky::new(&b, d)?;
        let log_prefactor = cfg.log_scale() - lit::<T>(0.5) * chol.log_det();
        Ok(Self { chol, log_prefactor })
    }

    #[inline]
    pub fn eval(&self, mean: &[T], x: &[T]) -> T {
        let delta: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
        (self.log_prefactor - lit::<T>(0.5) * self.chol.quad_form_inv(&delta)).exp()
    }
}

/// `E k(Y_s, x)` for `Y_s ~ N(m_s, Σ_s)`.
pub fn gauss_point_term<T: Real>(s: &Gaussian<T>, x: &[T], cfg: &KernelConfig<T>) -> Result<T> {
    check_component(s, cfg)?;
    cfg.check_dim(x.len())?;
    Ok(PointTermFactor::new(&s.cov, cfg)?.eval(&s.mean, x))
}

/// The closed-form blocks of `MMD²(empirical, mixture)` for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdTerms<T = f64> {
    /// Row-major `K×K` matrix of `I` terms.
    pub gram_components: Vec<T>,
    /// `Σ_j J[s][j]`, not divided by the sample count.
    pub cross_vector: Vec<T>,
    /// `(1/n²) Σ_j Σ_l k(X_j, X_l)` including the diagonal.
    pub empirical_constant: T,
}

impl<T: Real> MmdTerms<T> {
    pub fn k(&self) -> usize {
        self.cross_vector.len()
    }
}

/// V-statistic `(1/n²) Σ_j Σ_l k(X_j, X_l)`.
pub fn empirical_kernel_mean<T: Real>(samples: &[Vec<T>], cfg: &KernelConfig<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical term needs at least one sample"));
    }
    for x in samples {
        cfg.check_dim(x.len())?;
    }
    let n = samples.len();
    let mut off = T::zero();
    for j in 0..n {
        let xj = &samples[j];
        off += samples[j + 1..]
            .iter()
            .map(|xl| kernel_unchecked(xj, xl, cfg.sigma_sq))
            .sum::<T>();
    }
    let nn = from_usize::<T>(n);
    Ok((nn + lit::<T>(2.0) * off) / (nn * nn))
}

pub(crate) fn gram_matrix<T: Real>(components: &ComponentSet<T>, cfg: &KernelConfig<T>) -> Result<Vec<T>> {
    let k = components.k();
    let comps = components.components();
    let mut gram = vec![T::zero(); k * k];
    for s in 0..k {
        for r in s..k {
            let v = gauss_gauss_term(&comps[s], &comps[r], cfg)?;
            gram[s * k + r] = v;
            gram[r * k + s] = v;
        }
    }
    Ok(gram)
}

pub(crate) fn cross_vector<T: Real>(
    components: &ComponentSet<T>,
    samples: &[Vec<T>],
    cfg: &KernelConfig<T>,
) -> Result<Vec<T>> {
    for x in samples {
        cfg.check_dim(x.len())?;
    }
    (0..components.k())
        .map(|s| {
            let f = PointTermFactor::new(&components.covariance(s), cfg)?;
            let m = components.mean(s);
            Ok(samples.iter().map(|x| f.eval(m, x)).sum())
        })
        .collect()
}

pub fn mmd_terms<T: Real>(
    components: &ComponentSet<T>,
    samples: &[Vec<T>],
    cfg: &KernelConfig<T>,
) -> Result<MmdTerms<T>> {
    if samples.is_empty() {
        return Err(Error::invalid("mmd terms need a nonempty sample"));
    }
    cfg.check_dim(components.dim())?;
    Ok(MmdTerms {
        gram_components: gram_matrix(components, cfg)?,
        cross_vector: cross_vector(components, samples, cfg)?,
        empirical_constant: empirical_kernel_mean(samples, cfg)?,
    })
}

/// `wᵀIw − (2/n) wᵀJ + c`, clamped to zero within [`MMD_CLAMP_TOL`].
pub fn mmd_sq<T: Real>(weights: &[T], terms: &MmdTerms<T>, n: usize) -> Result<T> {
    let k = terms.k();
    if weights.len() != k || terms.gram_components.len() != k * k {
        return Err(Error::invalid(format!("expected {k} weights, got {}", weights.len())));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    check_simplex(weights, lit(SIMPLEX_INPUT_TOL))?;
    let raw = quadratic_part(weights, &terms.gram_components)
        - lit::<T>(2.0) / from_usize::<T>(n) * dot(weights, &terms.cross_vector)
        + terms.empirical_constant;
    clamp_mmd(raw)
}

pub(crate) fn clamp_mmd<T: Real>(raw: T) -> Result<T> {
    if raw >= T::zero() {
        Ok(raw)
    } else if raw > -lit::<T>(MMD_CLAMP_TOL) {
        Ok(T::zero())
    } else {
        Err(Error::domain(format!("squared MMD evaluated to {raw}")))
    }
}

pub(crate) fn quadratic_part<T: Real>(w: &[T], m: &[T]) -> T {
    let k = w.len();
    let mut acc = T::zero();
    for s in 0..k {
        let mut row = T::zero();
        for r in 0..k {
            row += m[s * k + r] * w[r];
        }
        acc += w[s] * row;
    }
    acc
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Closed-form kernel mean embedding `μ(z) = Σ_s w_s E k(z, Y_s)` of a mixture.
pub fn mean_embedding<T: Real>(
    components: &ComponentSet<T>,
    weights: &[T],
    z: &[T],
    cfg: &KernelConfig<T>,
) -> Result<T> {
    if weights.len() != components.k() {
        return Err(Error::invalid("one weight per component required"));
    }
    cfg.check_dim(z.len())?;
    cfg.check_dim(components.dim())?;
    let mut acc = T::zero();
    for (s, &w) in weights.iter().enumerate() {
        if w != T::zero() {
            let f = PointTermFactor::new(&components.covariance(s), cfg)?;
            acc += w * f.eval(components.mean(s), z);
        }
    }
    Ok(acc)
}

/// Closed-form `MMD²` between two Gaussian mixtures under one kernel.
pub fn mixture_mmd_sq<T: Real>(
    a: &ComponentSet<T>,
    a_weights: &[T],
    b: &ComponentSet<T>,
    b_weights: &[T],
    cfg: &KernelConfig<T>,
) -> Result<T> {
    let ca = a.components();
    let cb = b.components();
    let cross_sum = |x: &[Gaussian<T>], xw: &[T], y: &[Gaussian<T>], yw: &[T]| -> Result<T> {
        let mut acc = T::zero();
        for (gs, &ws) in x.iter().zip(xw) {
            for (gr, &wr) in y.iter().zip(yw) {
                if ws != T::zero() && wr != T::zero() {
                    acc += ws * wr * gauss_gauss_term(gs, gr, cfg)?;
                }
            }
        }
        Ok(acc)
    };
    let raw = cross_sum(&ca, a_weights, &ca, a_weights)? + cross_sum(&cb, b_weights, &cb, b_weights)?
        - lit::<T>(2.0) * cross_sum(&ca, a_weights, &cb, b_weights)?;
    clamp_mmd(raw)
}

/// Monte Carlo estimate of `MMD²(empirical, mixture)` with its standard error.
///
/// Each draw takes two independent mixture points `Y, Y'` and scores
/// `k(Y, Y') − (1/n) Σ_j [k(Y, X_j) + k(Y', X_j)] + c`, whose expectation is
/// the squared MMD; `c` is the data V-statistic computed directly.
pub fn mmd_sq_monte_carlo<T: Real>(
    components: &ComponentSet<T>,
    weights: &[T],
    samples: &[Vec<T>],
    cfg: &KernelConfig<T>,
    draws: usize,
    seed: u64,
) -> Result<(T, T)> {
    if draws < 10_000 {
        return Err(Error::invalid("Monte Carlo oracle needs at least 10^4 draws"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("samples must be nonempty"));
    }
    if weights.len() != components.k() {
        return Err(Error::invalid("one weight per component required"));
    }
    cfg.check_dim(components.dim())?;
    check_simplex(weights, lit(SIMPLEX_INPUT_TOL))?;
    let n = samples.len() as f64;
    let mut c = 0.0;
    for xj in samples {
        cfg.check_dim(xj.len())?;
        for xl in samples {
            c += to_f64(kernel_unchecked(xj, xl, cfg.sigma_sq));
        }
    }
    c /= n * n;

    let cumulative = cumulative_weights(weights);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..draws {
        let y = components.sample_component(pick_component(&cumulative, &mut rng), &mut rng);
        let y2 = components.sample_component(pick_component(&cumulative, &mut rng), &mut rng);
        let within = to_f64(kernel_unchecked(&y, &y2, cfg.sigma_sq));
        let cross: f64 = samples
            .iter()
            .map(|x| to_f64(kernel_unchecked(&y, x, cfg.sigma_sq)) + to_f64(kernel_unchecked(&y2, x, cfg.sigma_sq)))
            .sum::<f64>()
            / n;
        let h = within - cross + c;
        // Welford
        let delta = h - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (h - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok((lit(mean), lit((var / draws as f64).sqrt())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(sigma_sq: f64, dim: usize) -> KernelConfig<f64> {
        KernelConfig::new(sigma_sq, dim).unwrap()
    }

    fn unit(mean: f64) -> Gaussian<f64> {
        Gaussian::isotropic(vec![mean], 1.0)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[0.3, -1.0], &[0.3, -1.0], &cfg(0.7, 2)).unwrap(), 1.0);
        assert_relative_eq!(gaussian_kernel(&[0.0], &[2.0], &cfg(2.0, 1)).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(
            gaussian_kernel(&[0.0, 0.0], &[1.0, 1.0], &cfg(1.0, 2)).unwrap(),
            0.367_879_441_171_442_3,
            epsilon = 1e-15
        );
        assert!(matches!(gaussian_kernel(&[0.0], &[1.0, 1.0], &cfg(1.0, 1)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kernel_config_rejects_bad_bandwidth() {
        assert!(KernelConfig::new(0.0, 1).is_err());
        assert!(KernelConfig::new(-1.0, 1).is_err());
        assert!(KernelConfig::new(1.0, 0).is_err());
    }

    #[test]
    fn median_heuristic_examples() {
        let c = median_heuristic(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(c.sigma_sq(), 4.0);
        assert!(!c.is_degenerate());

        let c = median_heuristic(&vec![vec![0.0f64]; 3]).unwrap();
        assert_eq!(c.sigma_sq(), 1.0);
        assert!(c.is_degenerate());

        let c = median_heuristic(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(c.sigma_sq(), 25.0);

        // four points, six distances {1,2,3,1,2,1} -> sorted 1,1,1,2,2,3; lower middle is 1
        let c = median_heuristic(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(c.sigma_sq(), 1.0);

        assert!(median_heuristic(&[vec![1.0]]).is_err());
    }

    #[test]
    fn gauss_gauss_closed_values() {
        let v = gauss_gauss_term(&unit(0.0), &unit(0.0), &cfg(1.0, 1)).unwrap();
        assert_relative_eq!(v, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let far = gauss_gauss_term(&unit(0.0), &unit(1e3), &cfg(1.0, 1)).unwrap();
        assert!(far < 1e-300);
        let g = Gaussian::isotropic(vec![0.0, 0.0], 1.0);
        assert_relative_eq!(gauss_gauss_term(&g, &g, &cfg(1.0, 2)).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_gauss_rejects_non_spd() {
        let bad = Gaussian::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, -5.0]).unwrap();
        let ok = Gaussian::isotropic(vec![0.0, 0.0], 1.0);
        assert!(matches!(gauss_gauss_term(&bad, &ok, &cfg(1.0, 2)), Err(Error::NumericalDomain(_))));
    }

    #[test]
    fn gauss_point_values_and_degenerate_limit() {
        let c = cfg(1.0, 1);
        assert_relative_eq!(gauss_point_term(&unit(0.0), &[0.0], &c).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(
            gauss_point_term(&unit(0.0), &[10.0], &c).unwrap(),
            0.5f64.sqrt() * (-25.0f64).exp(),
            max_relative = 1e-12
        );
        let c2 = cfg(0.8, 2);
        let point_mass = Gaussian::isotropic(vec![0.4, -0.3], 1e-12);
        let x = [1.1, 0.2];
        assert_relative_eq!(
            gauss_point_term(&point_mass, &x, &c2).unwrap(),
            gaussian_kernel(&point_mass.mean, &x, &c2).unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn empirical_constant_examples() {
        assert_eq!(empirical_kernel_mean(&[vec![1.5]], &cfg(1.0, 1)).unwrap(), 1.0);
        let v = empirical_kernel_mean(&[vec![0.0], vec![2.0]], &cfg(2.0, 1)).unwrap();
        assert_relative_eq!(v, (2.0 + 2.0 * (-1.0f64).exp()) / 4.0, epsilon = 1e-15);
        assert_relative_eq!(v, 0.683_939_720_585_721_2, epsilon = 1e-15);
    }

    #[test]
    fn single_component_gram_is_self_term() {
        let cs = ComponentSet::from_covariances(&[vec![0.5]], &[vec![2.0]]).unwrap();
        let c = cfg(1.3, 1);
        let t = mmd_terms(&cs, &[vec![0.0], vec![1.0]], &c).unwrap();
        assert_eq!(t.gram_components.len(), 1);
        assert_eq!(t.gram_components[0], gauss_gauss_term(&cs.component(0), &cs.component(0), &c).unwrap());
    }

    #[test]
    fn mmd_sq_hand_quadratic_form() {
        let n = 7;
        let t = MmdTerms {
            gram_components: vec![1.0, 0.0, 0.0, 1.0],
            cross_vector: vec![n as f64, 0.0],
            empirical_constant: 1.0,
        };
        assert_eq!(mmd_sq(&[1.0, 0.0], &t, n).unwrap(), 0.0);
        assert!(matches!(mmd_sq(&[0.7, 0.7], &t, n), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn point_mass_at_only_sample_has_zero_mmd() {
        let x = vec![2.5];
        let cs = ComponentSet::from_covariances(std::slice::from_ref(&x), &[vec![1e-14]]).unwrap();
        let c = cfg(1.0, 1);
        let t = mmd_terms(&cs, &[x], &c).unwrap();
        assert!(mmd_sq(&[1.0], &t, 1).unwrap() < 1e-12);
    }

    #[test]
    fn mean_embedding_matches_point_terms() {
        let cs = ComponentSet::from_covariances(&[vec![0.0]], &[vec![1.0]]).unwrap();
        let c = cfg(1.0, 1);
        assert_relative_eq!(mean_embedding(&cs, &[1.0], &[0.0], &c).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);

        let cs = ComponentSet::from_covariances(
            &[vec![0.0, 1.0], vec![-2.0, 0.5]],
            &[vec![1.0, 0.3, 0.3, 0.5], vec![0.4, 0.0, 0.0, 2.0]],
        )
        .unwrap();
        let c = cfg(0.7, 2);
        let w = [0.35, 0.65];
        for z in [[0.0, 0.0], [1.0, -1.0], [-3.0, 2.0]] {
            let direct: f64 = (0..2).map(|s| w[s] * gauss_point_term(&cs.component(s), &z, &c).unwrap()).sum();
            assert_relative_eq!(mean_embedding(&cs, &w, &z, &c).unwrap(), direct, max_relative = 1e-14);
        }
    }

    #[test]
    fn mean_embedding_matches_sampling() {
        let cs = ComponentSet::from_covariances(&[vec![0.0], vec![3.0]], &[vec![1.0], vec![0.5]]).unwrap();
        let w = [0.4, 0.6];
        let c = cfg(1.5, 1);
        let z = [1.0];
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let vals: Vec<f64> = cs
            .sample_mixture(&w, draws, &mut rng)
            .iter()
            .map(|y| gaussian_kernel(&z, y, &c).unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        let closed = mean_embedding(&cs, &w, &z, &c).unwrap();
        assert!((closed - mean).abs() <= 3.0 * se, "closed {closed} mc {mean} se {se}");
    }

    #[test]
    fn gauss_terms_match_sampling_oracle() {
        // E k(X, Y) with X, Y ~ N(0,1) independent, sigma^2 = 1 -> 1/sqrt(3)
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cs = ComponentSet::from_covariances(&[vec![0.0]], &[vec![1.0]]).unwrap();
        let c = cfg(1.0, 1);
        let draws = 1_000_000;
        let mut vals = Vec::with_capacity(draws);
        let mut vals_point = Vec::with_capacity(draws);
        for _ in 0..draws {
            let x = cs.sample_component(0, &mut rng);
            let y = cs.sample_component(0, &mut rng);
            vals.push(gaussian_kernel(&x, &y, &c).unwrap());
            vals_point.push(gaussian_kernel(&x, &[0.0], &c).unwrap());
        }
        for (vals, expected) in [(vals, 1.0 / 3f64.sqrt()), (vals_point, 0.5f64.sqrt())] {
            let mean = vals.iter().sum::<f64>() / draws as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            assert!((mean - expected).abs() <= 3.0 * se, "mc {mean} closed {expected} se {se}");
        }
    }

    #[test]
    fn monte_carlo_same_distribution_and_seed_determinism() {
        // mixture equals a point mass at the single sample
        let cs = ComponentSet::from_covariances(&[vec![0.0]], &[vec![1e-16]]).unwrap();
        let c = cfg(1.0, 1);
        let (est, se) = mmd_sq_monte_carlo(&cs, &[1.0], &[vec![0.0]], &c, 20_000, 1).unwrap();
        assert!(est.abs() <= 3.0 * se + 1e-12);
        let a = mmd_sq_monte_carlo(&cs, &[1.0], &[vec![0.3]], &c, 10_000, 9).unwrap();
        let b = mmd_sq_monte_carlo(&cs, &[1.0], &[vec![0.3]], &c, 10_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(mmd_sq_monte_carlo(&cs, &[1.0], &[vec![0.3]], &c, 100, 9).is_err());
    }

    #[test]
    fn mixture_mmd_of_identical_mixtures_is_zero() {
        let cs = ComponentSet::from_covariances(&[vec![-1.0], vec![2.0]], &[vec![1.0], vec![0.3]]).unwrap();
        let v = mixture_mmd_sq(&cs, &[0.2, 0.8], &cs, &[0.2, 0.8], &cfg(1.0, 1)).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn f32_terms_agree_with_f64() {
        let g32 = Gaussian::<f32>::isotropic(vec![0.0], 1.0);
        let v = gauss_gauss_term(&g32, &g32, &KernelConfig::new(1.0f32, 1).unwrap()).unwrap();
        assert!((v - 1.0 / 3f32.sqrt()).abs() < 1e-6);
    }

    fn random_components(seed: u64, k: usize, d: usize) -> ComponentSet<f64> {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let means: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let covs: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let l: Vec<f64> = (0..d * d)
                    .map(|i| if i / d == i % d { rng.random_range(0.3..1.5) } else if i / d > i % d { rng.random_range(-0.5..0.5) } else { 0.0 })
                    .collect();
                crate::linalg::lower_gram(&l, d)
            })
            .collect();
        ComponentSet::from_covariances(&means, &covs).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3), s in 0.1f64..10.0) {
            let c = cfg(s, 3);
            prop_assert_eq!(gaussian_kernel(&x, &y, &c).unwrap(), gaussian_kernel(&y, &x, &c).unwrap());
        }

        #[test]
        fn gram_is_psd_and_bounded(seed in 0u64..10_000, k in 1usize..5, d in 1usize..4, s in 0.1f64..5.0) {
            let cs = random_components(seed, k, d);
            let g = gram_matrix(&cs, &cfg(s, d)).unwrap();
            let (vals, _) = crate::linalg::sym_eigen(&g, k);
            for v in vals {
                prop_assert!(v >= -1e-10);
            }
            for v in g {
                prop_assert!(v > 0.0 && v <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn mmd_sq_nonnegative(seed in 0u64..10_000, raw in prop::collection::vec(0.0f64..1.0, 3)) {
            let cs = random_components(seed, 3, 2);
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let w: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / 3.0) / total).collect();
            let samples: Vec<Vec<f64>> = (0..8).map(|j| vec![j as f64 * 0.3 - 1.0, (j % 3) as f64]).collect();
            let t = mmd_terms(&cs, &samples, &cfg(1.0, 2)).unwrap();
            prop_assert!(mmd_sq(&w, &t, samples.len()).unwrap() >= 0.0);
        }

        #[test]
        fn closed_forms_are_scale_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0) {
            let cs = random_components(seed, 2, 2);
            let samples = vec![vec![0.5, -0.2], vec![-1.0, 1.0], vec![2.0, 0.1]];
            let c = cfg(1.3, 2);
            let t = mmd_terms(&cs, &samples, &c).unwrap();
            let means: Vec<Vec<f64>> = (0..2).map(|s| cs.mean(s).iter().map(|v| v * scale).collect()).collect();
            let covs: Vec<Vec<f64>> = (0..2).map(|s| cs.covariance(s).iter().map(|v| v * scale * scale).collect()).collect();
            let scaled = ComponentSet::from_covariances(&means, &covs).unwrap();
            let scaled_samples: Vec<Vec<f64>> = samples.iter().map(|x| x.iter().map(|v| v * scale).collect()).collect();
            let ts = mmd_terms(&scaled, &scaled_samples, &cfg(1.3 * scale * scale, 2)).unwrap();
            for (a, b) in t.gram_components.iter().zip(&ts.gram_components).chain(t.cross_vector.iter().zip(&ts.cross_vector)) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
            prop_assert!((t.empirical_constant - ts.empirical_constant).abs() <= 1e-10);
        }
    }
}
