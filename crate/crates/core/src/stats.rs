//! Post-fit statistics: covariance, standard deviations, correlations and
//! groups of strongly correlated parameters.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::gnsolver::{FitReport, PivotedQr};
use crate::linalg::Matrix;
use crate::math;
use crate::model::KineticModel;

/// Threshold on `|corr|` used by [`FitStatistics`].
pub const CORRELATION_THRESHOLD: f64 = 0.99;

#[derive(Clone, Debug, PartialEq)]
pub enum StatsError {
    /// `L ≤ ℓ`: the residual carries no variance information.
    NoDegreesOfFreedom { residuals: usize, rank: usize },
    NonFiniteJacobian,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::NoDegreesOfFreedom { residuals, rank } => write!(
                f,
                "no degrees of freedom: {residuals} residuals for rank {rank}"
            ),
            StatsError::NonFiniteJacobian => f.write_str("Jacobian has non-finite entries"),
        }
    }
}

impl core::error::Error for StatsError {}

/// `C = s² (JᵀJ)⁺_ℓ` together with the unscaled pseudo-inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    pub matrix: Matrix,
    /// `(JᵀJ)⁺_ℓ`.
    pub gram_inverse: Matrix,
    /// `s² = ‖F‖² / (L − ℓ)`.
    pub variance_factor: f64,
    /// Parameters with a component in the null space of `J_ℓ`; their
    /// variance is unbounded and `C` only covers the identifiable part.
    pub unbounded: Vec<bool>,
}

/// Covariance from the Jacobian at the solution, truncated at rank `ℓ`.
pub fn covariance(
    jac: &Matrix,
    residual_norm: f64,
    residuals: usize,
    rank: usize,
) -> Result<Covariance, StatsError> {
    if residuals <= rank {
        return Err(StatsError::NoDegreesOfFreedom { residuals, rank });
    }
    let qr = PivotedQr::new(jac).map_err(|_| StatsError::NonFiniteJacobian)?;
    let rank = rank.min(jac.rows().min(jac.cols()));
    let gram_inverse = qr.gram_pseudo_inverse(rank);
    let s2 = residual_norm * residual_norm / (residuals - rank) as f64;
    let null = qr.null_space(rank);
    let unbounded = (0..jac.cols())
        .map(|i| math::norm2(null.row(i)) > 1e-8)
        .collect();
    Ok(Covariance {
        matrix: scale(&gram_inverse, s2),
        gram_inverse,
        variance_factor: s2,
        unbounded,
    })
}

fn scale(m: &Matrix, s: f64) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| s * m[(i, j)])
}

/// `C_ij / √(C_ii C_jj)`; entries involving a zero variance are NaN.
pub fn correlation(c: &Matrix) -> Matrix {
    let q = c.rows();
    Matrix::from_fn(q, q, |i, j| {
        let d = c[(i, i)] * c[(j, j)];
        if !(d > 0.0) {
            f64::NAN
        } else if i == j {
            1.0
        } else {
            (c[(i, j)] / math::sqrt(d)).clamp(-1.0, 1.0)
        }
    })
}

/// Connected components (size ≥ 2) of the graph with edges
/// `|corr_ij| ≥ threshold`, each sorted, ordered by smallest index.
pub fn correlated_groups(corr: &Matrix, threshold: f64) -> Vec<Vec<usize>> {
    let q = corr.rows();
    let mut parent: Vec<usize> = (0..q).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..q {
        for j in i + 1..q {
            if math::abs(corr[(i, j)]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; q];
    for i in 0..q {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups.retain(|g| g.len() >= 2);
    groups
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StdDev {
    pub absolute: f64,
    /// `100·absolute/|estimate|`; `None` for a zero estimate.
    pub percent: Option<f64>,
}

pub fn std_devs(c: &Matrix, estimates: &[f64]) -> Vec<StdDev> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, est)| {
            let absolute = math::sqrt(c[(i, i)].max(0.0));
            let percent = if *est == 0.0 {
                None
            } else {
                Some(100.0 * absolute / math::abs(*est))
            };
            StdDev { absolute, percent }
        })
        .collect()
}

/// Statistics in model-parameter space at the end of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitStatistics {
    pub estimates: Vec<f64>,
    pub covariance: Matrix,
    pub std_devs: Vec<StdDev>,
    pub unbounded: Vec<bool>,
    pub correlation: Matrix,
    pub correlated_groups: Vec<Vec<usize>>,
    pub rank: usize,
    pub dof: usize,
    pub residual_norm: f64,
}

/// Covariance of the estimate `p = φ(u)` from the final Jacobian of `report`.
///
/// Constraint rows restrict the parameters to the null space `N` of their
/// Jacobian; the covariance is then `N C_z Nᵀ` with `C_z` from the weighted
/// rows projected onto `N`. Correlations use `(JᵀJ)⁺` directly, so they stay
/// defined for a zero residual.
pub fn fit_statistics(report: &FitReport, model: &KineticModel) -> Result<FitStatistics, StatsError> {
    let q = report.internal.len();
    let js = report.jacobian.scale_columns(&report.scaling);
    let weighted: Vec<usize> = (0..js.rows()).filter(|&i| !report.constraint[i]).collect();
    let constrained: Vec<usize> = (0..js.rows()).filter(|&i| report.constraint[i]).collect();
    let (reduced, basis) = if constrained.is_empty() {
        (js.select_rows(&weighted), Matrix::identity(q))
    } else {
        let cqr = PivotedQr::new(&js.select_rows(&constrained)).map_err(|_| StatsError::NonFiniteJacobian)?;
        let n = cqr.null_space(cqr.numerical_rank(report.delta));
        (js.select_rows(&weighted).mul(&n), n)
    };
    let qr = PivotedQr::new(&reduced).map_err(|_| StatsError::NonFiniteJacobian)?;
    let rank = qr.numerical_rank(report.delta);
    let fw: Vec<f64> = weighted.iter().map(|&i| report.residual[i]).collect();
    let residual_norm = math::norm2(&fw);
    let cov = covariance(&reduced, residual_norm, weighted.len(), rank)?;

    // back to u-space, then p-space: diag(φ'(u)) W N C Nᵀ W diag(φ'(u))
    let dphi: Vec<f64> = model
        .parameters()
        .iter()
        .zip(&report.internal)
        .map(|(par, u)| par.transform.derivative(*u))
        .collect();
    let factor: Vec<f64> = report.scaling.iter().zip(&dphi).map(|(w, d)| w * d).collect();
    let to_p = |m: &Matrix| {
        let full = basis.mul(m).mul(&basis.transpose());
        Matrix::from_fn(q, q, |i, j| factor[i] * full[(i, j)] * factor[j])
    };
    let covariance = to_p(&cov.matrix);
    let correlation = correlation(&to_p(&cov.gram_inverse));
    let unbounded_z = cov.unbounded;
    let unbounded = (0..q)
        .map(|i| (0..basis.cols()).any(|k| unbounded_z[k] && math::abs(basis[(i, k)]) > 1e-8))
        .collect();
    let estimates = report.parameters(model);
    Ok(FitStatistics {
        std_devs: std_devs(&covariance, &estimates),
        correlated_groups: correlated_groups(&correlation, CORRELATION_THRESHOLD),
        estimates,
        covariance,
        unbounded,
        correlation,
        rank: rank + (q - basis.cols()),
        dof: weighted.len() - rank,
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix, b: &[f64]) -> bool {
        a.as_slice().iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn covariance_examples() {
        let j = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let c = covariance(&j, 2f64.sqrt(), 4, 2).unwrap();
        assert!(close(&c.matrix, &[1.0, 0.0, 0.0, 1.0]));
        let j = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let c = covariance(&j, 1.0, 3, 2).unwrap();
        assert!(close(&c.matrix, &[0.25, 0.0, 0.0, 1.0]));
        assert!(matches!(covariance(&j, 1.0, 2, 2), Err(StatsError::NoDegreesOfFreedom { .. })));
    }

    #[test]
    fn identical_columns_are_unbounded() {
        let j = Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 2.0], &[1.0, 1.0]]);
        let c = covariance(&j, 1.0, 3, 1).unwrap();
        assert_eq!(c.unbounded, vec![true, true]);
        let corr = correlation(&c.matrix);
        assert!((corr[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let c = correlation(&Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 1.0]]));
        assert!(close(&c, &[1.0, 1.0, 1.0, 1.0]));
        let c = correlation(&Matrix::from_diagonal(&[3.0, 5.0]));
        assert!(close(&c, &[1.0, 0.0, 0.0, 1.0]));
        let c = correlation(&Matrix::from_rows(&[&[1.0, -0.5], &[-0.5, 1.0]]));
        assert_eq!(c[(0, 1)], -0.5);
        assert!(correlation(&Matrix::zeros(1, 1))[(0, 0)].is_nan());
    }

    #[test]
    fn group_examples() {
        assert!(correlated_groups(&Matrix::identity(3), 0.99).is_empty());
        let ones = Matrix::from_fn(3, 3, |_, _| 1.0);
        assert_eq!(correlated_groups(&ones, 0.99), vec![vec![0, 1, 2]]);
        let chain = Matrix::from_rows(&[&[1.0, 0.995, 0.0], &[0.995, 1.0, -0.999], &[0.0, -0.999, 1.0]]);
        assert_eq!(correlated_groups(&chain, 0.99), vec![vec![0, 1, 2]]);
        assert_eq!(correlated_groups(&chain, 0.998), vec![vec![1, 2]]);
    }

    #[test]
    fn std_dev_examples() {
        let s = std_devs(&Matrix::from_diagonal(&[4.0, 0.0, 1.0]), &[8.0, 1.0, 0.0]);
        assert_eq!(s[0], StdDev { absolute: 2.0, percent: Some(25.0) });
        assert_eq!(s[1], StdDev { absolute: 0.0, percent: Some(0.0) });
        assert_eq!(s[2].percent, None);
    }
}
