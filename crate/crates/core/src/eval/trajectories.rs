//! Baseline-centered weight trajectories across subjects.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::kde::quantile_sorted;
use crate::ode::FittedModel;
use crate::scalar::{lit, to_f64, Real};

pub const DEFAULT_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenteredTrajectories {
    pub t_grid: Vec<f64>,
    /// `z[i][g][s] = α_is(t_g) − α_is(0)`.
    pub z: Vec<Vec<Vec<f64>>>,
    pub levels: Vec<f64>,
    /// `quantiles[l][g][s]`, type-7 across subjects.
    pub quantiles: Vec<Vec<Vec<f64>>>,
}

pub fn centered_trajectories<T: Real>(
    models: &[FittedModel<T>],
    t_grid: &[T],
    levels: &[f64],
) -> Result<CenteredTrajectories> {
    let Some(first) = models.first() else {
        return Err(Error::invalid("need at least one model"));
    };
    let k = first.k();
    if models.iter().any(|m| m.k() != k) {
        return Err(Error::invalid("all models must share K"));
    }
    if levels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::invalid("quantile levels must lie in [0, 1]"));
    }
    let z = models
        .iter()
        .map(|m| {
            let base = m.predict_weights(T::zero())?;
            t_grid
                .iter()
                .map(|&t| {
                    let w = m.predict_weights(t)?;
                    Ok(w.iter().zip(&base).map(|(&a, &b)| to_f64(a - b)).collect())
                })
                .collect::<Result<Vec<Vec<f64>>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let quantiles = levels
        .iter()
        .map(|&p| {
            (0..t_grid.len())
                .map(|g| {
                    (0..k)
                        .map(|s| {
                            let mut col: Vec<f64> = z.iter().map(|zi| zi[g][s]).collect();
                            col.sort_by(f64::total_cmp);
                            quantile_sorted(&col, lit(p))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(CenteredTrajectories {
        t_grid: t_grid.iter().map(|&t| to_f64(t)).collect(),
        z,
        levels: levels.to_vec(),
        quantiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::ComponentSet;
    use crate::ode::VectorFieldParams;

    fn model(seed: u64, alpha0: Vec<f64>) -> FittedModel<f64> {
        let c = ComponentSet::from_covariances(&[vec![0.0], vec![1.0], vec![2.0]], &vec![vec![1.0]; 3]).unwrap();
        FittedModel::new(c, VectorFieldParams::init(3, &[4], seed), alpha0, vec![], 100, 1e-8).unwrap()
    }

    #[test]
    fn centered_identities() {
        let models = vec![model(1, vec![0.2, 0.3, 0.5]), model(2, vec![0.6, 0.2, 0.2]), model(3, vec![0.1, 0.1, 0.8])];
        let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let c = centered_trajectories(&models, &grid, &DEFAULT_LEVELS).unwrap();
        for zi in &c.z {
            assert!(zi[0].iter().all(|&v| v == 0.0));
            for zg in zi {
                assert!(zg.iter().sum::<f64>().abs() < 1e-12);
            }
        }
        for g in 0..grid.len() {
            for s in 0..3 {
                for l in 1..DEFAULT_LEVELS.len() {
                    assert!(c.quantiles[l][g][s] >= c.quantiles[l - 1][g][s]);
                }
            }
        }
    }

    #[test]
    fn single_subject_quantiles_coincide() {
        let models = vec![model(4, vec![0.3, 0.3, 0.4])];
        let grid = [0.0, 0.4, 1.0];
        let c = centered_trajectories(&models, &grid, &DEFAULT_LEVELS).unwrap();
        for q in &c.quantiles {
            assert_eq!(q, &c.z[0]);
        }
    }
}
