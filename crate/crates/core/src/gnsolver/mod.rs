//! Affine covariant damped Gauss-Newton method for weighted nonlinear least
//! squares with numerical rank monitoring.
//!
//! The iteration runs on internal coordinates `u` (see
//! [`crate::transform`]) and rescales them every step with
//! `W_k = diag(max(|u_i|, thres_i))`. All corrections and norms below are
//! in these scaled coordinates, which makes the iterates independent of the
//! units chosen for the parameters.
//!
//! One iteration:
//!
//! 1. Jacobian `J_k`, pivoted QR of `J_k W_k`, numerical rank `ℓ`.
//! 2. Ordinary correction `Δx = −(J W)_ℓ⁺ F`; stop if `‖Δx‖ ≤ xtol`.
//! 3. A-priori damping factor, trial iterate, simplified correction
//!    `Δx̄ = −(J W)_ℓ⁺ F(trial)` with the same factorisation.
//! 4. Natural monotonicity test `‖Δx̄‖ < ‖Δx‖`; on failure an a-posteriori
//!    factor, and once that drops below `λ_min`, a deliberate rank
//!    reduction `ℓ → ℓ − 1`.

mod damping;
mod linear;
pub mod qr;
mod residual;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use damping::{aposteriori_damping, apriori_damping, incompatibility_factor};
pub use linear::LinearizedSystem;
pub use qr::{NonFiniteMatrix, PivotedQr};
pub use residual::{
    assemble_residual, DataError, ExperimentData, Measurement, ObservableRef, Residual, ResidualError,
};
pub use crate::sensitivity::JacobianMethod;

use crate::integrator::{IntegratorConfig, IntegratorError};
use crate::linalg::Matrix;
use crate::math;
use crate::model::KineticModel;
use crate::transform::OutOfRange;

/// Source of the rank threshold `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankThreshold {
    /// `δ = xtol`.
    #[default]
    Xtol,
    /// Largest tolerance given in the data (falls back to `xtol`).
    MaxTolerance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RankMode {
    #[default]
    Auto,
    /// Never exceed the given rank.
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnConfig {
    pub xtol: f64,
    pub lambda_min: f64,
    pub rank_min: usize,
    pub max_iterations: usize,
    /// Damping factor of the first iteration.
    pub lambda0: f64,
    pub rank_threshold: RankThreshold,
    pub rank_mode: RankMode,
    pub jacobian: JacobianMethod,
    pub integrator: IntegratorConfig,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            xtol: 1e-4,
            lambda_min: 1e-4,
            rank_min: 1,
            max_iterations: 50,
            lambda0: 1.0,
            rank_threshold: RankThreshold::Xtol,
            rank_mode: RankMode::Auto,
            jacobian: JacobianMethod::Variational,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl GnConfig {
    /// Conservative start for problems with a poor initial guess.
    pub fn hard_problem(mut self) -> Self {
        self.lambda0 = 1e-2;
        self
    }

    pub fn validate(&self, q: usize) -> Result<(), FitError> {
        let msg = if !(self.xtol > 0.0 && self.xtol.is_finite()) {
            "xtol must be positive"
        } else if !(self.lambda_min > 0.0 && self.lambda_min < 1.0) {
            "lambda_min must lie in (0, 1)"
        } else if self.rank_min < 1 || self.rank_min > q {
            "rank_min must lie in [1, q]"
        } else if self.max_iterations == 0 {
            "max_iterations must be positive"
        } else if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            "lambda0 must lie in (0, 1]"
        } else {
            return self
                .integrator
                .validate()
                .map_err(|_| FitError::InvalidConfig("invalid integrator configuration"));
        };
        Err(FitError::InvalidConfig(msg))
    }
}

/// One line of the iteration protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolRow {
    /// `‖F(x_k)‖`, `‖Δx_k‖` and the rank used for the correction.
    Ordinary {
        iteration: usize,
        normf: f64,
        normx: f64,
        rank: usize,
    },
    /// Trial iterate: `‖F‖`, `‖Δx̄‖` and the damping factor. `last` marks
    /// the final full step taken after convergence.
    Simplified {
        iteration: usize,
        normf: f64,
        normx: f64,
        damping: f64,
        last: bool,
    },
    Incompatibility { iteration: usize, kappa: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Converged { kappa: f64 },
    /// Converged, but `κ ≥ 1` with a simplified correction above `xtol`:
    /// model and data are incompatible.
    Inadequate { kappa: f64 },
    MaxIterations,
    /// Damping failed down to the minimal permitted rank.
    RankExhausted,
    /// The Jacobian has numerical rank zero.
    NoIdentifiableDirection,
}

impl Verdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Converged { kappa } => {
                write!(f, "converged with incompatibility factor {kappa:.5}")
            }
            Verdict::Inadequate { kappa } => write!(
                f,
                "stopped at stationary point: incompatibility factor {kappa:.5} >= 1, problem is inadequate"
            ),
            Verdict::MaxIterations => f.write_str("maximum number of iterations reached"),
            Verdict::RankExhausted => f.write_str("rank exhausted - iteration stopped"),
            Verdict::NoIdentifiableDirection => f.write_str("no identifiable direction: Jacobian has rank 0"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitError {
    InvalidConfig(&'static str),
    NoData,
    Data(DataError),
    InitialGuess(OutOfRange),
    /// Residual or Jacobian evaluation failed at an accepted iterate.
    Evaluation {
        iteration: usize,
        internal: Vec<f64>,
        source: IntegratorError,
    },
    NonFiniteJacobian { iteration: usize },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            FitError::NoData => f.write_str("no data"),
            FitError::Data(e) => e.fmt(f),
            FitError::InitialGuess(e) => write!(f, "initial guess: {e}"),
            FitError::Evaluation {
                iteration,
                internal,
                source,
            } => write!(f, "iteration {iteration} at u = {internal:?}: {source}"),
            FitError::NonFiniteJacobian { iteration } => {
                write!(f, "iteration {iteration}: Jacobian has non-finite entries")
            }
        }
    }
}

impl core::error::Error for FitError {}

/// Nonlinear least-squares problem `min ‖F(u)‖` with optional equality
/// constraint rows.
pub trait LeastSquaresProblem {
    fn parameters(&self) -> usize;

    fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>, IntegratorError>;

    /// `∂F/∂u`, `L × q`.
    fn jacobian(&mut self, u: &[f64]) -> Result<Matrix, IntegratorError>;

    /// Rows that must vanish exactly.
    fn constraint_rows(&self) -> Vec<bool>;

    /// Lower bounds for the scaling `W = diag(max(|u_i|, thres_i))`.
    fn thresholds(&self) -> Vec<f64>;

    fn max_tolerance(&self) -> Option<f64> {
        None
    }
}

/// Result of a Gauss-Newton run.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub verdict: Verdict,
    /// Final internal coordinates `u`.
    pub internal: Vec<f64>,
    pub iterations: usize,
    pub protocol: Vec<ProtocolRow>,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// Total rank (constraint rank included) of the last correction.
    pub rank: usize,
    pub kappa: Option<f64>,
    /// `∂F/∂u` at the final iterate and its scaling.
    pub jacobian: Matrix,
    pub scaling: Vec<f64>,
    pub constraint: Vec<bool>,
    /// Rank threshold `δ` in effect.
    pub delta: f64,
    /// Accepted iterates `u_0, u_1, …` (the final full step included).
    pub iterates: Vec<Vec<f64>>,
}

fn scaling(u: &[f64], thres: &[f64]) -> Vec<f64> {
    u.iter().zip(thres).map(|(u, t)| math::abs(*u).max(*t)).collect()
}

fn axpy_scaled(u: &[f64], lambda: f64, w: &[f64], dx: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(w)
        .zip(dx)
        .map(|((u, w), d)| u + lambda * w * d)
        .collect()
}

struct Linearization {
    system: LinearizedSystem,
    jac: Matrix,
    w: Vec<f64>,
}

fn linearize<P: LeastSquaresProblem + ?Sized>(
    problem: &mut P,
    u: &[f64],
    thres: &[f64],
    constraint: &[bool],
    delta: f64,
    iteration: usize,
) -> Result<Linearization, FitError> {
    let jac = problem.jacobian(u).map_err(|source| FitError::Evaluation {
        iteration,
        internal: u.to_vec(),
        source,
    })?;
    let w = scaling(u, thres);
    let system = LinearizedSystem::new(&jac.scale_columns(&w), constraint, delta)
        .map_err(|_| FitError::NonFiniteJacobian { iteration })?;
    Ok(Linearization { system, jac, w })
}

/// Data kept from the previous accepted step for the a-priori estimate.
struct History {
    normx: f64,
    lambda: f64,
    /// Unscaled simplified correction `W_{k−1} Δx̄`.
    simplified: Vec<f64>,
    /// `J_{k−1} W_{k−1} Δx̄`.
    image: Vec<f64>,
}

/// Runs the damped Gauss-Newton iteration from `u0`, reporting each
/// protocol row to `observer` as soon as it is known.
pub fn gauss_newton<P: LeastSquaresProblem + ?Sized>(
    problem: &mut P,
    u0: &[f64],
    cfg: &GnConfig,
    observer: &mut dyn FnMut(&ProtocolRow),
) -> Result<FitReport, FitError> {
    let q = problem.parameters();
    assert_eq!(u0.len(), q);
    cfg.validate(q)?;
    let thres = problem.thresholds();
    let constraint = problem.constraint_rows();
    let delta = match cfg.rank_threshold {
        RankThreshold::Xtol => cfg.xtol,
        RankThreshold::MaxTolerance => problem.max_tolerance().unwrap_or(cfg.xtol),
    };
    let mut protocol = Vec::new();
    let mut emit = |row: ProtocolRow, protocol: &mut Vec<ProtocolRow>| {
        observer(&row);
        protocol.push(row);
    };

    let mut u = u0.to_vec();
    let mut f = problem.residual(&u).map_err(|source| FitError::Evaluation {
        iteration: 0,
        internal: u.clone(),
        source,
    })?;
    if f.is_empty() {
        return Err(FitError::NoData);
    }
    let mut iterates = vec![u.clone()];
    let mut history: Option<History> = None;
    let mut lin;
    let mut rank_total;
    let mut kappa = None;
    let mut k = 0;

    let verdict = 'outer: loop {
        lin = linearize(problem, &u, &thres, &constraint, delta, k)?;
        let sys = &lin.system;
        let rc = sys.constraint_rank();
        let mut la = sys.weighted_rank(delta);
        if let RankMode::Fixed(r) = cfg.rank_mode {
            la = la.min(r.saturating_sub(rc));
        }
        rank_total = rc + la;
        if rank_total == 0 {
            break Verdict::NoIdentifiableDirection;
        }
        let normf = math::norm2(&f);
        let mut dx = sys.correction(&f, la);
        let mut normx = math::norm2(&dx);
        emit(
            ProtocolRow::Ordinary {
                iteration: k,
                normf,
                normx,
                rank: rank_total,
            },
            &mut protocol,
        );

        if normx <= cfg.xtol {
            let u_new = axpy_scaled(&u, 1.0, &lin.w, &dx);
            let f_new = problem.residual(&u_new).map_err(|source| FitError::Evaluation {
                iteration: k + 1,
                internal: u_new.clone(),
                source,
            })?;
            let dxbar = sys.correction(&f_new, la);
            let normbar = math::norm2(&dxbar);
            let kap = incompatibility_factor(normbar, normx);
            emit(
                ProtocolRow::Simplified {
                    iteration: k + 1,
                    normf: math::norm2(&f_new),
                    normx: normbar,
                    damping: 1.0,
                    last: true,
                },
                &mut protocol,
            );
            emit(
                ProtocolRow::Incompatibility {
                    iteration: k + 1,
                    kappa: kap,
                },
                &mut protocol,
            );
            u = u_new;
            f = f_new;
            iterates.push(u.clone());
            kappa = Some(kap);
            k += 1;
            lin = linearize(problem, &u, &thres, &constraint, delta, k)?;
            // a ratio of two sub-tolerance corrections says nothing about adequacy
            break if kap < 1.0 || normbar <= cfg.xtol {
                Verdict::Converged { kappa: kap }
            } else {
                Verdict::Inadequate { kappa: kap }
            };
        }
        if k >= cfg.max_iterations {
            break Verdict::MaxIterations;
        }

        let apriori = |normx: f64, la: usize| -> f64 {
            let Some(h) = &history else { return cfg.lambda0 };
            let scaled_bar: Vec<f64> = h.simplified.iter().zip(&lin.w).map(|(d, w)| d / w).collect();
            let proj = sys.pseudo_solve(&h.image, la);
            let diff: Vec<f64> = scaled_bar.iter().zip(&proj).map(|(a, b)| a - b).collect();
            apriori_damping(h.normx, math::norm2(&scaled_bar), normx, math::norm2(&diff), h.lambda)
        };
        let mut lambda = apriori(normx, la);
        let mut reduced = false;

        loop {
            if lambda < cfg.lambda_min {
                // deliberate rank reduction
                if la == 0 || rc + la - 1 < cfg.rank_min {
                    break 'outer Verdict::RankExhausted;
                }
                la -= 1;
                rank_total = rc + la;
                reduced = true;
                dx = sys.correction(&f, la);
                normx = math::norm2(&dx);
                emit(
                    ProtocolRow::Ordinary {
                        iteration: k,
                        normf,
                        normx,
                        rank: rank_total,
                    },
                    &mut protocol,
                );
                lambda = apriori(normx, la);
                continue;
            }
            let trial = axpy_scaled(&u, lambda, &lin.w, &dx);
            let f_trial = match problem.residual(&trial) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                _ => {
                    lambda *= 0.5;
                    continue;
                }
            };
            let dxbar = sys.correction(&f_trial, la);
            let normbar = math::norm2(&dxbar);
            emit(
                ProtocolRow::Simplified {
                    iteration: k + 1,
                    normf: math::norm2(&f_trial),
                    normx: normbar,
                    damping: lambda,
                    last: false,
                },
                &mut protocol,
            );
            let monotone = if reduced {
                normbar <= normx
            } else {
                normbar < normx
            };
            if monotone {
                if lambda == 1.0 {
                    let kap = incompatibility_factor(normbar, normx);
                    kappa = Some(kap);
                    emit(
                        ProtocolRow::Incompatibility {
                            iteration: k + 1,
                            kappa: kap,
                        },
                        &mut protocol,
                    );
                }
                let simplified: Vec<f64> = dxbar.iter().zip(&lin.w).map(|(d, w)| d * w).collect();
                let image = lin.jac.mul_vec(&simplified);
                history = Some(History {
                    normx,
                    lambda,
                    simplified,
                    image,
                });
                u = trial;
                f = f_trial;
                iterates.push(u.clone());
                break;
            }
            let deviation: Vec<f64> = dxbar
                .iter()
                .zip(&dx)
                .map(|(b, d)| b - (1.0 - lambda) * d)
                .collect();
            lambda = aposteriori_damping(lambda, normx, math::norm2(&deviation));
        }
        k += 1;
    };

    let residual_norm = math::norm2(&f);
    Ok(FitReport {
        verdict,
        internal: u,
        iterations: k,
        protocol,
        residual: f,
        residual_norm,
        rank: rank_total,
        kappa,
        jacobian: lin.jac,
        scaling: lin.w,
        constraint,
        delta,
        iterates,
    })
}

/// [`LeastSquaresProblem`] for a kinetic model against measurement data.
pub struct ModelProblem<'a> {
    pub model: &'a KineticModel,
    pub data: &'a ExperimentData,
    pub integrator: IntegratorConfig,
    pub method: JacobianMethod,
}

impl LeastSquaresProblem for ModelProblem<'_> {
    fn parameters(&self) -> usize {
        self.model.n_parameters()
    }

    fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>, IntegratorError> {
        let p = self.model.to_parameters(u);
        match assemble_residual(self.model, &p, self.data, &self.integrator) {
            Ok(r) => Ok(r.values),
            Err(ResidualError::NoData) => Ok(Vec::new()),
            Err(ResidualError::Integration(e)) => Err(e),
        }
    }

    fn jacobian(&mut self, u: &[f64]) -> Result<Matrix, IntegratorError> {
        crate::sensitivity::jacobian_at(self.model, u, self.data, &self.integrator, self.method)
    }

    fn constraint_rows(&self) -> Vec<bool> {
        self.data.constraint_rows(self.model)
    }

    fn thresholds(&self) -> Vec<f64> {
        self.model.parameter_thresholds()
    }

    fn max_tolerance(&self) -> Option<f64> {
        self.data.max_tolerance()
    }
}

/// Fits `model` to `data` starting from internal coordinates `u0`.
pub fn fit(
    model: &KineticModel,
    data: &ExperimentData,
    u0: &[f64],
    cfg: &GnConfig,
) -> Result<FitReport, FitError> {
    fit_with_observer(model, data, u0, cfg, &mut |_| {})
}

/// As [`fit`], streaming protocol rows to `observer`.
pub fn fit_with_observer(
    model: &KineticModel,
    data: &ExperimentData,
    u0: &[f64],
    cfg: &GnConfig,
    observer: &mut dyn FnMut(&ProtocolRow),
) -> Result<FitReport, FitError> {
    if data.is_empty() {
        return Err(FitError::NoData);
    }
    let mut problem = ModelProblem {
        model,
        data,
        integrator: cfg.integrator.clone(),
        method: cfg.jacobian,
    };
    gauss_newton(&mut problem, u0, cfg, observer)
}

impl FitReport {
    /// Final model parameters `p = φ(u)`.
    pub fn parameters(&self, model: &KineticModel) -> Vec<f64> {
        model.to_parameters(&self.internal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Algebraic problem `F(u)` given by a closure pair.
    struct Algebraic<F, J> {
        q: usize,
        f: F,
        j: J,
        thres: Vec<f64>,
        constraint: Vec<bool>,
    }

    impl<F, J> LeastSquaresProblem for Algebraic<F, J>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
        J: FnMut(&[f64]) -> Matrix,
    {
        fn parameters(&self) -> usize {
            self.q
        }
        fn residual(&mut self, u: &[f64]) -> Result<Vec<f64>, IntegratorError> {
            Ok((self.f)(u))
        }
        fn jacobian(&mut self, u: &[f64]) -> Result<Matrix, IntegratorError> {
            Ok((self.j)(u))
        }
        fn constraint_rows(&self) -> Vec<bool> {
            self.constraint.clone()
        }
        fn thresholds(&self) -> Vec<f64> {
            self.thres.clone()
        }
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let mut p = Algebraic {
            q: 2,
            f: |u: &[f64]| vec![u[0] - 3.0, 2.0 * u[1] + 1.0, u[0] + u[1] - 2.5],
            j: |_: &[f64]| Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]),
            thres: vec![1.0, 1.0],
            constraint: vec![false; 3],
        };
        let r = gauss_newton(&mut p, &[0.0, 0.0], &GnConfig::default(), &mut |_| {}).unwrap();
        assert!(r.verdict.is_converged(), "{:?}", r.verdict);
        assert!((r.internal[0] - 3.0).abs() < 1e-12);
        assert!((r.internal[1] + 0.5).abs() < 1e-12);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn constraint_row_is_satisfied() {
        // fit (u0, u1) ≈ (2, 2) subject to u0 − u1 = 1
        let mut p = Algebraic {
            q: 2,
            f: |u: &[f64]| vec![u[0] - 2.0, u[0] - u[1] - 1.0, u[1] - 2.0],
            j: |_: &[f64]| Matrix::from_rows(&[&[1.0, 0.0], &[1.0, -1.0], &[0.0, 1.0]]),
            thres: vec![1.0, 1.0],
            constraint: vec![false, true, false],
        };
        let r = gauss_newton(&mut p, &[0.0, 0.0], &GnConfig::default(), &mut |_| {}).unwrap();
        assert!(r.verdict.is_converged());
        assert!((r.internal[0] - r.internal[1] - 1.0).abs() < 1e-12);
        assert!((r.internal[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_jacobian_has_no_direction() {
        let mut p = Algebraic {
            q: 1,
            f: |_: &[f64]| vec![1.0],
            j: |_: &[f64]| Matrix::zeros(1, 1),
            thres: vec![1.0],
            constraint: vec![false],
        };
        let r = gauss_newton(&mut p, &[0.0], &GnConfig::default(), &mut |_| {}).unwrap();
        assert_eq!(r.verdict, Verdict::NoIdentifiableDirection);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = GnConfig {
            lambda_min: 1.5,
            ..GnConfig::default()
        };
        assert!(matches!(cfg.validate(2), Err(FitError::InvalidConfig(_))));
        assert!(GnConfig::default().validate(0).is_err());
    }
}
