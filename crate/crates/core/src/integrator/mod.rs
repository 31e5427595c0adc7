//! Linearly implicit Euler extrapolation for stiff initial value problems.
//!
//! Each basic step of size `H` is split into `n_j = j` substeps of the
//! linearly implicit Euler scheme
//!
//! ```text
//! (I − h A) (η_{m+1} − η_m) = h f(t_m, η_m),   h = H / n_j,
//! ```
//!
//! with `A ≈ f_y(t, y)` frozen over the basic step. The results for
//! `j = 1, 2, …` are combined by Aitken–Neville extrapolation (the scheme's
//! error expansion is in powers of `h`), the difference of the two highest
//! tableau entries serves as local error estimate, and order and step size
//! are chosen from a work-per-unit-step model.
//!
//! Breakpoints are fixed times at which integration stops exactly and a jump
//! map is applied; output stops are times the grid must contain.

mod trajectory;

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{Lu, Matrix, SingularMatrix};
use crate::math;
use crate::model::{EvalError, Experiment, KineticModel};

pub use trajectory::{Segment, Side, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step size.
    pub h0: f64,
    pub hmax: f64,
    /// Maximum number of extrapolation columns.
    pub max_extrap_order: usize,
    /// Cap on attempted steps (accepted and rejected) per integration.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-12,
            h0: 1e-6,
            hmax: f64::INFINITY,
            max_extrap_order: 6,
            max_steps: 100_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let msg = if !(self.rtol >= 1e-14 && self.rtol.is_finite()) {
            "rtol must be at least 1e-14"
        } else if !(self.atol >= 0.0 && self.atol.is_finite()) {
            "atol must be non-negative"
        } else if !(self.h0 > 0.0 && self.h0.is_finite()) {
            "h0 must be positive"
        } else if !(self.hmax > 0.0) {
            "hmax must be positive"
        } else if self.max_extrap_order < 2 {
            "max_extrap_order must be at least 2"
        } else if self.max_steps == 0 {
            "max_steps must be positive"
        } else {
            return Ok(());
        };
        Err(IntegratorError::InvalidConfig(msg))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum IntegratorError {
    InvalidConfig(&'static str),
    InvalidSpan { t0: f64, t_end: f64 },
    /// Step size fell below `1e-14·|t|`.
    StepSizeUnderflow { t: f64 },
    MaxStepsExceeded { t: f64 },
    SingularIterationMatrix { t: f64 },
    /// The right-hand side or its Jacobian could not be evaluated at an
    /// accepted state.
    Evaluation { t: f64, source: EvalError },
    /// A replayed step produced a non-finite or unsolvable update.
    ReplayFailed { t: f64 },
    OutOfSpan { t: f64 },
    Experiment { index: usize, source: Box<IntegratorError> },
}

impl fmt::Display for IntegratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegratorError::InvalidConfig(m) => write!(f, "invalid integrator configuration: {m}"),
            IntegratorError::InvalidSpan { t0, t_end } => {
                write!(f, "invalid time span [{t0}, {t_end}]")
            }
            IntegratorError::StepSizeUnderflow { t } => {
                write!(f, "integration failure at t = {t}: step size underflow")
            }
            IntegratorError::MaxStepsExceeded { t } => {
                write!(f, "integration failure at t = {t}: maximum number of steps exceeded")
            }
            IntegratorError::SingularIterationMatrix { t } => {
                write!(f, "integration failure at t = {t}: singular iteration matrix")
            }
            IntegratorError::Evaluation { t, source } => {
                write!(f, "integration failure at t = {t}: {source}")
            }
            IntegratorError::ReplayFailed { t } => {
                write!(f, "integration failure at t = {t}: replayed step diverged")
            }
            IntegratorError::OutOfSpan { t } => write!(f, "time {t} outside trajectory span"),
            IntegratorError::Experiment { index, source } => {
                write!(f, "experiment {index}: {source}")
            }
        }
    }
}

impl core::error::Error for IntegratorError {}

/// Approximation of `I − h A` that the integrator factorises once per
/// basic step.
pub trait IterationMatrix {
    fn factorize(&mut self, h: f64) -> Result<(), SingularMatrix>;
    /// Solves `(I − h A) x = b` in place with the last factorisation.
    fn solve(&self, b: &mut [f64]);
}

/// A first-order system `y' = f(t, y)` with a Jacobian approximation.
pub trait OdeSystem {
    type Matrix: IterationMatrix;

    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EvalError>;

    fn iteration_matrix(&self, t: f64, y: &[f64]) -> Result<Self::Matrix, EvalError>;

    /// `∂f/∂t` for non-autonomous systems. Returns `false` when `f` does not
    /// depend on `t`.
    fn time_derivative(&self, _t: f64, _y: &[f64], _out: &mut [f64]) -> Result<bool, EvalError> {
        Ok(false)
    }

    /// Error scale per component for a step from `y0` to `y1`.
    fn error_weights(&self, rtol: f64, atol: f64, y0: &[f64], y1: &[f64], w: &mut [f64]) {
        for ((wi, a), b) in w.iter_mut().zip(y0).zip(y1) {
            *wi = atol + rtol * math::abs(*a).max(math::abs(*b));
        }
    }
}

/// Full `n×n` Jacobian with an LU factorisation of `I − h A`.
#[derive(Clone, Debug)]
pub struct DenseIterationMatrix {
    jacobian: Matrix,
    lu: Option<Lu>,
}

impl DenseIterationMatrix {
    pub fn new(jacobian: Matrix) -> Self {
        Self { jacobian, lu: None }
    }
}

impl IterationMatrix for DenseIterationMatrix {
    fn factorize(&mut self, h: f64) -> Result<(), SingularMatrix> {
        let n = self.jacobian.rows();
        let m = Matrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - h * self.jacobian[(i, j)]
        });
        self.lu = Some(Lu::new(m)?);
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        self.lu
            .as_ref()
            .expect("factorize before solve")
            .solve_in_place(b);
    }
}

/// Accepted step: target time and number of extrapolation columns used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEntry {
    pub t_end: f64,
    /// Basic step size as used; `t_end − t` may differ from it by rounding.
    pub h: f64,
    pub columns: usize,
}

/// Accepted steps per segment.
pub type StepLog = Vec<Vec<StepEntry>>;

/// Integrates `sys` from `(t0, y0)` to `t_end`, stopping exactly at every
/// breakpoint in `(t0, t_end)` and applying `jump(index, t_b, y⁻) → y⁺`,
/// and placing grid points exactly on every `stops` time inside the span.
/// Stops closer together than the smallest admissible step are merged into
/// the later one; dense output covers the dropped time.
///
/// With `replay = Some(log)` the accepted step sequence of an earlier run is
/// reproduced without error control.
pub fn solve<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    breakpoints: &[f64],
    stops: &[f64],
    jump: &mut dyn FnMut(usize, f64, &[f64]) -> Vec<f64>,
    cfg: &IntegratorConfig,
    replay: Option<&StepLog>,
) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
        return Err(IntegratorError::InvalidSpan { t0, t_end });
    }
    assert_eq!(y0.len(), sys.dim(), "initial state dimension");
    let active: Vec<(usize, f64)> = breakpoints
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, tb)| *tb > t0 && *tb < t_end)
        .collect();
    let mut stop_times: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|s| *s > t0 && *s < t_end)
        .collect();
    stop_times.sort_by(f64::total_cmp);
    stop_times.dedup();

    let mut engine = Engine::new(sys, cfg);
    let mut segments = Vec::new();
    let mut log: StepLog = Vec::new();
    let mut t = t0;
    let mut y = y0.to_vec();
    for seg_idx in 0..=active.len() {
        let seg_end = active.get(seg_idx).map_or(t_end, |(_, tb)| *tb);
        let seg_stops: Vec<f64> = stop_times
            .iter()
            .copied()
            .filter(|s| *s > t && *s < seg_end)
            .chain(core::iter::once(seg_end).filter(|s| *s > t))
            .collect();
        let seg_stops = coalesce(t, seg_stops);
        let mut segment = Segment::new();
        let mut steps = Vec::new();
        match replay {
            Some(previous) => {
                let entries = previous.get(seg_idx).ok_or(IntegratorError::ReplayFailed { t })?;
                engine.replay_segment(t, y, entries, &mut segment)?;
                steps.extend_from_slice(entries);
            }
            None => engine.run_segment(t, y, &seg_stops, &mut segment, &mut steps)?,
        }
        let (t_last, y_last) = (segment.end(), segment.states.last().unwrap().clone());
        segments.push(segment);
        log.push(steps);
        t = t_last;
        y = y_last;
        if let Some(&(event, tb)) = active.get(seg_idx) {
            t = tb;
            y = jump(event, tb, &y);
        }
    }
    Ok(Trajectory {
        dim: sys.dim(),
        segments,
        steps: log,
        experiment_id: 0,
    })
}

enum ColumnFailure {
    Singular,
    NonFinite,
}

struct Engine<'a, S: OdeSystem> {
    sys: &'a S,
    cfg: &'a IntegratorConfig,
    n: usize,
    kmax: usize,
    /// Work (in rhs evaluations) to build columns `1..=j`, index `j`.
    work: Vec<f64>,
    h: f64,
    k: usize,
    attempts: usize,
}

/// Drops every stop within `1e-13·|t|` of its successor (or of `t_start`);
/// the last stop is always kept.
fn coalesce(t_start: f64, stops: Vec<f64>) -> Vec<f64> {
    let too_close = |a: f64, b: f64| b - a <= 1e-13 * math::abs(a).max(math::abs(b));
    let mut out: Vec<f64> = Vec::with_capacity(stops.len());
    for (i, &s) in stops.iter().enumerate() {
        let prev = out.last().copied().unwrap_or(t_start);
        let last = i + 1 == stops.len();
        if last || !(too_close(prev, s) || too_close(s, stops[i + 1])) {
            out.push(s);
        }
    }
    out
}

fn step_factor(err: f64, j: usize) -> f64 {
    if err == 0.0 {
        return 4.0;
    }
    (0.94 * math::powf(0.65 / err, 1.0 / j as f64)).clamp(0.02, 4.0)
}

impl<'a, S: OdeSystem> Engine<'a, S> {
    fn new(sys: &'a S, cfg: &'a IntegratorConfig) -> Self {
        let kmax = cfg.max_extrap_order;
        let mut work = vec![0.0; kmax + 2];
        work[0] = 1.0;
        for j in 1..kmax + 2 {
            work[j] = work[j - 1] + j as f64 + 1.0;
        }
        Self {
            sys,
            cfg,
            n: sys.dim(),
            kmax,
            work,
            h: cfg.h0,
            k: 3.min(kmax),
            attempts: 0,
        }
    }

    fn eval_rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>, IntegratorError> {
        let mut dy = vec![0.0; self.n];
        self.sys
            .rhs(t, y, &mut dy)
            .map_err(|source| IntegratorError::Evaluation { t, source })?;
        Ok(dy)
    }

    /// One linearly implicit Euler sweep with `nsub` substeps.
    fn basic_solution(
        &self,
        mat: &mut S::Matrix,
        t: f64,
        y0: &[f64],
        f0: &[f64],
        ft: Option<&[f64]>,
        big_h: f64,
        nsub: usize,
    ) -> Result<Vec<f64>, ColumnFailure> {
        let h = big_h / nsub as f64;
        mat.factorize(h).map_err(|_| ColumnFailure::Singular)?;
        let mut eta = y0.to_vec();
        let mut rhs = vec![0.0; self.n];
        for m in 0..nsub {
            if m == 0 {
                rhs.copy_from_slice(f0);
            } else {
                self.sys
                    .rhs(t + m as f64 * h, &eta, &mut rhs)
                    .map_err(|_| ColumnFailure::NonFinite)?;
            }
            for r in rhs.iter_mut() {
                *r *= h;
            }
            if let Some(ft) = ft {
                for (r, d) in rhs.iter_mut().zip(ft) {
                    *r += h * h * d;
                }
            }
            mat.solve(&mut rhs);
            for (e, d) in eta.iter_mut().zip(&rhs) {
                *e += d;
            }
            if eta.iter().any(|x| !x.is_finite()) {
                return Err(ColumnFailure::NonFinite);
            }
        }
        Ok(eta)
    }

    /// Appends column `j` to the tableau (`prev` is row `j − 1`).
    fn extrapolate(prev: &[Vec<f64>], first: Vec<f64>, j: usize) -> Vec<Vec<f64>> {
        let mut row = Vec::with_capacity(j);
        row.push(first);
        for kk in 1..j {
            let coeff = (j - kk) as f64 / kk as f64;
            let next: Vec<f64> = row[kk - 1]
                .iter()
                .zip(&prev[kk - 1])
                .map(|(a, b)| a + (a - b) * coeff)
                .collect();
            row.push(next);
        }
        row
    }

    fn time_derivative(&self, t: f64, y: &[f64]) -> Result<Option<Vec<f64>>, IntegratorError> {
        let mut ft = vec![0.0; self.n];
        let used = self
            .sys
            .time_derivative(t, y, &mut ft)
            .map_err(|source| IntegratorError::Evaluation { t, source })?;
        Ok(used.then_some(ft))
    }

    fn run_segment(
        &mut self,
        t_start: f64,
        y_start: Vec<f64>,
        stops: &[f64],
        segment: &mut Segment,
        steps: &mut Vec<StepEntry>,
    ) -> Result<(), IntegratorError> {
        let mut t = t_start;
        let mut y = y_start;
        let mut f0 = self.eval_rhs(t, &y)?;
        segment.push(t, y.clone(), f0.clone());
        let mut stop_idx = 0;
        let mut last_rejected = false;
        let mut weights = vec![0.0; self.n];
        while stop_idx < stops.len() {
            let target = stops[stop_idx];
            let mut big_h = self.h.min(self.cfg.hmax);
            let landed = t + 1.05 * big_h >= target;
            if landed {
                big_h = target - t;
            }
            if big_h < 1e-14 * math::abs(t).max(f64::MIN_POSITIVE) || big_h <= 0.0 {
                return Err(IntegratorError::StepSizeUnderflow { t });
            }
            self.attempts += 1;
            if self.attempts > self.cfg.max_steps {
                return Err(IntegratorError::MaxStepsExceeded { t });
            }
            let mut mat = self
                .sys
                .iteration_matrix(t, &y)
                .map_err(|source| IntegratorError::Evaluation { t, source })?;
            let ft = self.time_derivative(t, &y)?;

            let k = self.k;
            let jmax = (k + 1).min(self.kmax);
            let mut err = vec![f64::INFINITY; jmax + 1];
            let mut hopt = vec![0.0; jmax + 1];
            let mut table: Vec<Vec<f64>> = Vec::new();
            let mut accepted: Option<usize> = None;
            let mut new_h = 0.25 * big_h;
            let mut failure: Option<ColumnFailure> = None;
            for j in 1..=jmax {
                let col = match self.basic_solution(&mut mat, t, &y, &f0, ft.as_deref(), big_h, j) {
                    Ok(c) => c,
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                };
                table = Self::extrapolate(&table, col, j);
                if j < 2 {
                    continue;
                }
                self.sys.error_weights(
                    self.cfg.rtol,
                    self.cfg.atol,
                    &y,
                    &table[j - 1],
                    &mut weights,
                );
                let e = table[j - 1]
                    .iter()
                    .zip(&table[j - 2])
                    .zip(&weights)
                    .fold(0.0f64, |m, ((a, b), w)| {
                        let d = math::abs(a - b);
                        let r = if *w > 0.0 { d / w } else if d > 0.0 { f64::INFINITY } else { 0.0 };
                        m.max(r)
                    });
                err[j] = e;
                hopt[j] = big_h * step_factor(e, j);
                let nk = k as f64;
                if j + 1 == k {
                    if e <= 1.0 {
                        accepted = Some(j);
                        break;
                    }
                    if e > (nk * (nk + 1.0)) * (nk * (nk + 1.0)) {
                        new_h = hopt[j];
                        break;
                    }
                } else if j == k {
                    if e <= 1.0 {
                        accepted = Some(j);
                        break;
                    }
                    if j + 1 > jmax || e > (nk + 1.0) * (nk + 1.0) {
                        new_h = hopt[j];
                        break;
                    }
                } else if j == k + 1 {
                    if e <= 1.0 {
                        accepted = Some(j);
                    } else {
                        new_h = hopt[j];
                    }
                    break;
                }
            }

            let Some(kc) = accepted else {
                if let Some(ColumnFailure::Singular) = failure {
                    if big_h * 0.25 < 1e-14 * math::abs(t).max(f64::MIN_POSITIVE) {
                        return Err(IntegratorError::SingularIterationMatrix { t });
                    }
                }
                self.h = new_h.min(0.5 * big_h);
                last_rejected = true;
                continue;
            };

            let t_new = if landed { target } else { t + big_h };
            let y_new = table[kc - 1].clone();
            let f_new = match self.eval_rhs(t_new, &y_new) {
                Ok(f) => f,
                Err(_) => {
                    self.h = 0.25 * big_h;
                    last_rejected = true;
                    continue;
                }
            };

            // order and step size for the next step
            let w = |j: usize| self.work[j] / hopt[j];
            let mut knew = if kc == 2 {
                3
            } else if w(kc - 1) < 0.8 * w(kc) {
                kc - 1
            } else if w(kc) < 0.9 * w(kc - 1) {
                kc + 1
            } else {
                kc
            };
            if last_rejected {
                knew = knew.min(kc);
            }
            knew = knew.clamp(2, self.kmax);
            let mut hnew = if knew > kc {
                hopt[kc] * self.work[knew] / self.work[kc]
            } else {
                hopt[knew]
            };
            if last_rejected {
                hnew = hnew.min(big_h);
            }
            if landed && !last_rejected {
                // a clipped step says little about the achievable size
                hnew = hnew.max(self.h);
            }
            self.k = knew;
            self.h = hnew.min(self.cfg.hmax);
            last_rejected = false;

            steps.push(StepEntry {
                t_end: t_new,
                h: big_h,
                columns: kc,
            });
            segment.push(t_new, y_new.clone(), f_new.clone());
            t = t_new;
            y = y_new;
            f0 = f_new;
            if landed {
                stop_idx += 1;
            }
        }
        Ok(())
    }

    fn replay_segment(
        &mut self,
        t_start: f64,
        y_start: Vec<f64>,
        entries: &[StepEntry],
        segment: &mut Segment,
    ) -> Result<(), IntegratorError> {
        let mut t = t_start;
        let mut y = y_start;
        let mut f0 = self.eval_rhs(t, &y)?;
        segment.push(t, y.clone(), f0.clone());
        for entry in entries {
            let big_h = entry.h;
            let mut mat = self
                .sys
                .iteration_matrix(t, &y)
                .map_err(|source| IntegratorError::Evaluation { t, source })?;
            let ft = self.time_derivative(t, &y)?;
            let mut table: Vec<Vec<f64>> = Vec::new();
            for j in 1..=entry.columns {
                let col = self
                    .basic_solution(&mut mat, t, &y, &f0, ft.as_deref(), big_h, j)
                    .map_err(|_| IntegratorError::ReplayFailed { t })?;
                table = Self::extrapolate(&table, col, j);
            }
            let y_new = table.pop().ok_or(IntegratorError::ReplayFailed { t })?;
            t = entry.t_end;
            f0 = self.eval_rhs(t, &y_new)?;
            segment.push(t, y_new.clone(), f0.clone());
            y = y_new;
        }
        Ok(())
    }
}

/// Mass-action model at fixed parameters as an [`OdeSystem`].
pub struct ModelSystem<'a> {
    pub model: &'a KineticModel,
    pub parameters: &'a [f64],
}

impl OdeSystem for ModelSystem<'_> {
    type Matrix = DenseIterationMatrix;

    fn dim(&self) -> usize {
        self.model.n_species()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EvalError> {
        self.model.evaluate_rhs(y, self.parameters, dy)
    }

    fn iteration_matrix(&self, _t: f64, y: &[f64]) -> Result<DenseIterationMatrix, EvalError> {
        let n = self.model.n_species();
        let mut fy = Matrix::zeros(n, n);
        self.model.state_jacobian_into(y, self.parameters, &mut fy)?;
        Ok(DenseIterationMatrix::new(fy))
    }
}

pub(crate) fn event_times(model: &KineticModel) -> Vec<f64> {
    model.events().iter().map(|e| e.time).collect()
}

/// Integrates one experiment of `model` at parameters `p`, with grid
/// points forced onto `stops`.
pub fn integrate_experiment(
    model: &KineticModel,
    p: &[f64],
    experiment: &Experiment,
    stops: &[f64],
    cfg: &IntegratorConfig,
    replay: Option<&StepLog>,
) -> Result<Trajectory, IntegratorError> {
    let sys = ModelSystem {
        model,
        parameters: p,
    };
    let mut jump = |idx: usize, _t: f64, y: &[f64]| model.events()[idx].apply(y, p);
    solve(
        &sys,
        experiment.t0,
        &experiment.initial,
        experiment.t_end,
        &event_times(model),
        stops,
        &mut jump,
        cfg,
        replay,
    )
}

/// Integrates the model's initial value problem over `t_span` from the
/// model's initial concentrations.
pub fn integrate(
    model: &KineticModel,
    p: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegratorError> {
    let experiment = Experiment {
        name: alloc::string::String::new(),
        t0: t_span.0,
        t_end: t_span.1,
        initial: model.initial_state(),
    };
    integrate_experiment(model, p, &experiment, &[], cfg, None)
}

/// One independent trajectory per experiment; errors carry the experiment
/// index.
pub fn integrate_experiments(
    model: &KineticModel,
    p: &[f64],
    experiments: &[Experiment],
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>, IntegratorError> {
    experiments
        .iter()
        .enumerate()
        .map(|(index, e)| {
            integrate_experiment(model, p, e, &[], cfg, None)
                .map(|mut tr| {
                    tr.experiment_id = index;
                    tr
                })
                .map_err(|err| IntegratorError::Experiment {
                    index,
                    source: Box::new(err),
                })
        })
        .collect()
}
