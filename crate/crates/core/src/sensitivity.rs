//! Forward sensitivities `S = ∂y/∂p`.
//!
//! The variational equation `S' = f_y S + f_p`, `S(t0) = 0`, is integrated
//! together with the state. Its iteration matrix is block diagonal with the
//! same `n×n` block `I − h f_y` for the state and every parameter column, so
//! one LU factorisation serves all `q + 1` blocks.
//!
//! The finite-difference variant perturbs one parameter at a time and
//! re-runs the integration along the accepted step sequence of the nominal
//! run, so the difference quotient is not swamped by step-size noise.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::gnsolver::ExperimentData;
use crate::integrator::{
    self, event_times, IntegratorConfig, IntegratorError, IterationMatrix,
    OdeSystem, Side, Trajectory,
};
use crate::linalg::{Lu, Matrix, SingularMatrix};
use crate::math;
use crate::model::{EvalError, Experiment, KineticModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JacobianMethod {
    /// Variational equation solved alongside the state.
    #[default]
    Variational,
    /// One-sided difference quotients on the nominal step sequence.
    FiniteDifference {
        /// Enlarge a perturbation once if it changed nothing measurable.
        feedback: bool,
    },
}

/// Raw sensitivities sampled on an output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `n×q` matrix `∂y_i/∂p_j` per output time.
    pub sensitivities: Vec<Matrix>,
    pub method: JacobianMethod,
    pub parameters: Vec<f64>,
    /// `max_t |y_i(t)|` of the dense output over the whole interval.
    pub state_max: Vec<f64>,
}

/// `|S_ij(t)| · max(|p_j|, thres p_j) / max(max_t |y_i|, thres y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledSensitivity {
    pub times: Vec<f64>,
    pub values: Vec<Matrix>,
}

/// Species whose scaling denominator vanishes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UndefinedRow {
    pub species: usize,
}

impl fmt::Display for UndefinedRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scaled sensitivity undefined for species {}: identically zero with zero threshold",
            self.species
        )
    }
}

impl core::error::Error for UndefinedRow {}

/// Block-diagonal iteration matrix sharing one factorisation.
pub struct BlockIterationMatrix {
    fy: Matrix,
    blocks: usize,
    lu: Option<Lu>,
}

impl IterationMatrix for BlockIterationMatrix {
    fn factorize(&mut self, h: f64) -> Result<(), SingularMatrix> {
        let n = self.fy.rows();
        let m = Matrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - h * self.fy[(i, j)]
        });
        self.lu = Some(Lu::new(m)?);
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let lu = self.lu.as_ref().expect("factorize before solve");
        let n = self.fy.rows();
        for k in 0..self.blocks {
            lu.solve_in_place(&mut b[k * n..(k + 1) * n]);
        }
    }
}

/// State plus `q` sensitivity columns, `[y; S_1; …; S_q]`.
pub struct VariationalSystem<'a> {
    model: &'a KineticModel,
    p: &'a [f64],
    /// `max(|p_j|, thres p_j)`, used to make sensitivity error weights
    /// independent of parameter units.
    pw: Vec<f64>,
}

impl<'a> VariationalSystem<'a> {
    pub fn new(model: &'a KineticModel, p: &'a [f64]) -> Self {
        let pw = p
            .iter()
            .zip(model.parameter_thresholds())
            .map(|(v, t)| math::abs(*v).max(t))
            .collect();
        Self { model, p, pw }
    }

    fn n(&self) -> usize {
        self.model.n_species()
    }
}

impl OdeSystem for VariationalSystem<'_> {
    type Matrix = BlockIterationMatrix;

    fn dim(&self) -> usize {
        self.n() * (1 + self.model.n_parameters())
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n();
        let (y, s) = x.split_at(n);
        self.model.evaluate_rhs(y, self.p, &mut dx[..n])?;
        let (fy, fp) = self.model.evaluate_rhs_jacobians(y, self.p)?;
        for (j, (sj, out)) in s.chunks(n).zip(dx[n..].chunks_mut(n)).enumerate() {
            for i in 0..n {
                out[i] = fy.row(i).iter().zip(sj).map(|(a, b)| a * b).sum::<f64>() + fp[(i, j)];
            }
        }
        Ok(())
    }

    fn iteration_matrix(&self, _t: f64, x: &[f64]) -> Result<BlockIterationMatrix, EvalError> {
        let n = self.n();
        let mut fy = Matrix::zeros(n, n);
        self.model.state_jacobian_into(&x[..n], self.p, &mut fy)?;
        Ok(BlockIterationMatrix {
            fy,
            blocks: 1 + self.model.n_parameters(),
            lu: None,
        })
    }

    fn error_weights(&self, rtol: f64, atol: f64, x0: &[f64], x1: &[f64], w: &mut [f64]) {
        let n = self.n();
        for i in 0..x0.len() {
            let m = math::abs(x0[i]).max(math::abs(x1[i]));
            w[i] = if i < n {
                atol + rtol * m
            } else {
                atol / self.pw[i / n - 1] + rtol * m
            };
        }
    }
}

fn sample(traj: &Trajectory, output_times: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), IntegratorError> {
    if output_times.is_empty() {
        let (t, x) = traj.points().map(|(t, x)| (t, x.to_vec())).unzip();
        return Ok((t, x));
    }
    let mut states = Vec::with_capacity(output_times.len());
    for &t in output_times {
        states.push(traj.interpolate(t, Side::Right)?);
    }
    Ok((output_times.to_vec(), states))
}

/// Sensitivities from the variational equation at `output_times` (every
/// accepted point if empty; event times then appear with both limits).
pub fn sensitivities_var_eq(
    model: &KineticModel,
    p: &[f64],
    experiment: &Experiment,
    output_times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<SensitivityResult, IntegratorError> {
    let n = model.n_species();
    let q = model.n_parameters();
    let sys = VariationalSystem::new(model, p);
    let jumps: Vec<(Matrix, Matrix)> = model.events().iter().map(|e| e.jacobians(n, q)).collect();
    let mut jump = |idx: usize, _t: f64, x: &[f64]| {
        let (gy, gp) = &jumps[idx];
        let mut out = model.events()[idx].apply(&x[..n], p);
        for j in 0..q {
            let sj = &x[n * (j + 1)..n * (j + 2)];
            let gs = gy.mul_vec(sj);
            out.extend(gs.iter().enumerate().map(|(i, v)| v + gp[(i, j)]));
        }
        out
    };
    let mut x0 = experiment.initial.clone();
    x0.resize(n * (q + 1), 0.0);
    let traj = integrator::solve(
        &sys,
        experiment.t0,
        &x0,
        experiment.t_end,
        &event_times(model),
        output_times,
        &mut jump,
        cfg,
        None,
    )?;
    let (times, xs) = sample(&traj, output_times)?;
    let mut state_max = traj.max_abs();
    state_max.truncate(n);
    let states = xs.iter().map(|x| x[..n].to_vec()).collect();
    let sensitivities = xs
        .iter()
        .map(|x| Matrix::from_fn(n, q, |i, j| x[n * (j + 1) + i]))
        .collect();
    Ok(SensitivityResult {
        times,
        states,
        sensitivities,
        method: JacobianMethod::Variational,
        parameters: p.to_vec(),
        state_max,
    })
}

/// Finite-difference sensitivities with `h_j = max(|p_j|, thres p_j)·√eps`.
/// With `feedback`, a column whose perturbation moved no component by more
/// than `10·eps·|y|` is recomputed once with `100·h_j`.
pub fn sensitivities_fd(
    model: &KineticModel,
    p: &[f64],
    experiment: &Experiment,
    output_times: &[f64],
    cfg: &IntegratorConfig,
    feedback: bool,
) -> Result<SensitivityResult, IntegratorError> {
    let n = model.n_species();
    let q = model.n_parameters();
    let nominal = integrator::integrate_experiment(model, p, experiment, output_times, cfg, None)?;
    let (times, states) = sample(&nominal, output_times)?;
    let thresholds = model.parameter_thresholds();
    let mut sensitivities = vec![Matrix::zeros(n, q); times.len()];
    let sqrt_eps = math::sqrt(f64::EPSILON);
    for j in 0..q {
        let mut h = math::abs(p[j]).max(thresholds[j]) * sqrt_eps;
        let mut retried = false;
        loop {
            let mut pp = p.to_vec();
            pp[j] += h;
            // the exactly representable perturbation
            let hj = pp[j] - p[j];
            let run = integrator::integrate_experiment(
                model,
                &pp,
                experiment,
                output_times,
                cfg,
                Some(nominal.step_log()),
            )?;
            let (_, perturbed) = sample(&run, output_times)?;
            let negligible = perturbed.iter().zip(&states).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(u, v)| math::abs(u - v) <= 10.0 * f64::EPSILON * math::abs(*v))
            });
            if feedback && negligible && !retried {
                retried = true;
                h *= 100.0;
                continue;
            }
            for (s, (a, b)) in sensitivities.iter_mut().zip(perturbed.iter().zip(&states)) {
                for i in 0..n {
                    s[(i, j)] = (a[i] - b[i]) / hj;
                }
            }
            break;
        }
    }
    Ok(SensitivityResult {
        times,
        states,
        sensitivities,
        method: JacobianMethod::FiniteDifference { feedback },
        parameters: p.to_vec(),
        state_max: nominal.max_abs(),
    })
}

pub fn sensitivities(
    model: &KineticModel,
    p: &[f64],
    experiment: &Experiment,
    output_times: &[f64],
    cfg: &IntegratorConfig,
    method: JacobianMethod,
) -> Result<SensitivityResult, IntegratorError> {
    match method {
        JacobianMethod::Variational => sensitivities_var_eq(model, p, experiment, output_times, cfg),
        JacobianMethod::FiniteDifference { feedback } => {
            sensitivities_fd(model, p, experiment, output_times, cfg, feedback)
        }
    }
}

/// Threshold-scaled absolute sensitivities.
pub fn scale_sensitivities(
    raw: &SensitivityResult,
    model: &KineticModel,
) -> Result<ScaledSensitivity, UndefinedRow> {
    let ythres = model.species_thresholds();
    let pthres = model.parameter_thresholds();
    let ydenom: Vec<f64> = raw.state_max.iter().zip(&ythres).map(|(m, t)| m.max(*t)).collect();
    if let Some(species) = ydenom.iter().position(|d| *d == 0.0) {
        return Err(UndefinedRow { species });
    }
    let pnum: Vec<f64> = raw
        .parameters
        .iter()
        .zip(&pthres)
        .map(|(p, t)| math::abs(*p).max(*t))
        .collect();
    let values = raw
        .sensitivities
        .iter()
        .map(|s| Matrix::from_fn(s.rows(), s.cols(), |i, j| math::abs(s[(i, j)]) * pnum[j] / ydenom[i]))
        .collect();
    Ok(ScaledSensitivity {
        times: raw.times.clone(),
        values,
    })
}

/// Residual `F(u)` and Jacobian `∂F/∂u` of the weighted data misfit at the
/// internal coordinates `u`. Rows follow the order of `data.measurements`.
pub fn linearize(
    model: &KineticModel,
    u: &[f64],
    data: &ExperimentData,
    cfg: &IntegratorConfig,
    method: JacobianMethod,
) -> Result<(Vec<f64>, Matrix), IntegratorError> {
    let p = model.to_parameters(u);
    let q = model.n_parameters();
    let weights = data.weights(model);
    let dphi: Vec<f64> = model
        .parameters()
        .iter()
        .zip(u)
        .map(|(par, u)| par.transform.derivative(*u))
        .collect();
    let mut f = vec![0.0; data.len()];
    let mut jac = Matrix::zeros(data.len(), q);
    for (e, experiment) in data.experiments.iter().enumerate() {
        let rows: Vec<usize> = (0..data.len()).filter(|&r| data.measurements[r].experiment == e).collect();
        if rows.is_empty() {
            continue;
        }
        let times: Vec<f64> = rows.iter().map(|&r| data.measurements[r].time).collect();
        let sens = sensitivities(model, &p, experiment, &times, cfg, method)
            .map_err(|err| IntegratorError::Experiment {
                index: e,
                source: alloc::boxed::Box::new(err),
            })?;
        for (k, &r) in rows.iter().enumerate() {
            let m = &data.measurements[r];
            let coeffs = m.observable.coefficients(model);
            let w = if weights[r] > 0.0 { weights[r] } else { 1.0 };
            let y = &sens.states[k];
            let z: f64 = coeffs.iter().map(|&(i, c)| c * y[i]).sum();
            f[r] = (z - m.value) / w;
            for j in 0..q {
                let dz: f64 = coeffs.iter().map(|&(i, c)| c * sens.sensitivities[k][(i, j)]).sum();
                jac[(r, j)] = dz * dphi[j] / w;
            }
        }
    }
    Ok((f, jac))
}

/// `∂F/∂u` only; see [`linearize`].
pub fn jacobian_at(
    model: &KineticModel,
    u: &[f64],
    data: &ExperimentData,
    cfg: &IntegratorConfig,
    method: JacobianMethod,
) -> Result<Matrix, IntegratorError> {
    linearize(model, u, data, cfg, method).map(|(_, j)| j)
}
