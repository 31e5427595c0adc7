//! Rank-ℓ minimum-norm solves for a Jacobian whose leading rows may be
//! equality constraints.
//!
//! With constraint rows `C` and weighted rows `A`, the constraints are
//! solved first, `x_c = C⁺ b_c`, and the weighted rows are minimised over
//! the null space `N` of `C`: `x = x_c + N (A N)_ℓ⁺ (b_a − A x_c)`.

use alloc::vec::Vec;

use super::qr::{NonFiniteMatrix, PivotedQr};
use crate::linalg::Matrix;

#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    constrained: Vec<usize>,
    weighted: Vec<usize>,
    constraint: Option<ConstraintPart>,
    /// QR of the weighted rows (projected onto the constraint null space).
    qr: PivotedQr,
    cols: usize,
}

#[derive(Clone, Debug)]
struct ConstraintPart {
    qr: PivotedQr,
    rank: usize,
    null_space: Matrix,
    rows: Matrix,
}

impl LinearizedSystem {
    /// `delta` fixes the rank of the constraint block; the rank of the
    /// weighted block is chosen per solve.
    pub fn new(jac: &Matrix, constraint: &[bool], delta: f64) -> Result<Self, NonFiniteMatrix> {
        assert_eq!(constraint.len(), jac.rows());
        let constrained: Vec<usize> = (0..jac.rows()).filter(|&i| constraint[i]).collect();
        let weighted: Vec<usize> = (0..jac.rows()).filter(|&i| !constraint[i]).collect();
        let a = jac.select_rows(&weighted);
        if constrained.is_empty() {
            return Ok(Self {
                constrained,
                weighted,
                constraint: None,
                qr: PivotedQr::new(&a)?,
                cols: jac.cols(),
            });
        }
        let c = jac.select_rows(&constrained);
        let cqr = PivotedQr::new(&c)?;
        let rank = cqr.numerical_rank(delta);
        let null_space = cqr.null_space(rank);
        let qr = PivotedQr::new(&a.mul(&null_space))?;
        Ok(Self {
            constrained,
            weighted,
            constraint: Some(ConstraintPart {
                qr: cqr,
                rank,
                null_space,
                rows: a,
            }),
            qr,
            cols: jac.cols(),
        })
    }

    /// QR of the (projected) weighted block.
    pub fn qr(&self) -> &PivotedQr {
        &self.qr
    }

    /// Rank contributed by constraint rows.
    pub fn constraint_rank(&self) -> usize {
        self.constraint.as_ref().map_or(0, |c| c.rank)
    }

    /// Largest admissible rank of the weighted block.
    pub fn max_rank(&self) -> usize {
        self.qr.rows().min(self.qr.cols())
    }

    /// Numerical rank of the weighted block at threshold `delta`.
    pub fn weighted_rank(&self, delta: f64) -> usize {
        self.qr.numerical_rank(delta)
    }

    /// `x = J_ℓ⁺ b` where `ℓ` is the rank of the weighted block.
    pub fn pseudo_solve(&self, b: &[f64], rank: usize) -> Vec<f64> {
        let bw: Vec<f64> = self.weighted.iter().map(|&i| b[i]).collect();
        let Some(cp) = &self.constraint else {
            return self.qr.pseudo_solve(&bw, rank);
        };
        let bc: Vec<f64> = self.constrained.iter().map(|&i| b[i]).collect();
        let xc = cp.qr.pseudo_solve(&bc, cp.rank);
        let ax = cp.rows.mul_vec(&xc);
        let rest: Vec<f64> = bw.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let z = if rest.is_empty() {
            Vec::new()
        } else {
            self.qr.pseudo_solve(&rest, rank)
        };
        let mut x = xc;
        if !z.is_empty() {
            for (xi, nz) in x.iter_mut().zip(cp.null_space.mul_vec(&z)) {
                *xi += nz;
            }
        }
        x
    }

    /// Gauss-Newton correction `−J_ℓ⁺ F`.
    pub fn correction(&self, f: &[f64], rank: usize) -> Vec<f64> {
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        self.pseudo_solve(&neg, rank)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_matches_qr() {
        let j = Matrix::from_rows(&[&[1.0, 1.0]]);
        let sys = LinearizedSystem::new(&j, &[false], 1e-10).unwrap();
        let x = sys.correction(&[-2.0], 1);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constraint_is_met_exactly() {
        // x0 + x1 = 1 exactly, least squares on x0 = 3, x1 = 0
        let j = Matrix::from_rows(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]]);
        let sys = LinearizedSystem::new(&j, &[false, true, false], 1e-10).unwrap();
        let x = sys.pseudo_solve(&[3.0, 1.0, 0.0], sys.weighted_rank(1e-10));
        assert!((x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
        assert_eq!(sys.constraint_rank(), 1);
    }
}
