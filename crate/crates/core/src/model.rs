//! Kinetic network representation: species, parameters, mass-action
//! reactions, linear observables and fixed-time breakpoint events, plus the
//! right-hand side `f(y; p)` and its analytic Jacobians `f_y`, `f_p`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Matrix;
use crate::math;
use crate::transform::Transform;

/// Default scaling threshold for parameters without an explicit `thres`.
pub const DEFAULT_PARAMETER_THRESHOLD: f64 = 1e-6;
/// Default scaling threshold for species without an explicit `thres`.
pub const DEFAULT_SPECIES_THRESHOLD: f64 = 0.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Species {
    pub name: String,
    pub initial: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub transform: Transform,
}

/// A mass-action reaction with rate
/// `factor · Π k_j · Π y_i^{e_i}`.
///
/// Exponents default to the reactant stoichiometries; `exponents` overrides
/// them (or adds modifier species) for generalised mass action.
#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub name: String,
    pub factor: f64,
    /// Parameter indices whose product forms the rate constant.
    pub rate_parameters: Vec<usize>,
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    pub exponents: Vec<(usize, f64)>,
}

impl Reaction {
    /// Species and exponents entering the rate law.
    pub fn rate_factors(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for &(s, m) in &self.reactants {
            match out.iter_mut().find(|(i, _)| *i == s) {
                Some(entry) => entry.1 += m as f64,
                None => out.push((s, m as f64)),
            }
        }
        for &(s, e) in &self.exponents {
            match out.iter_mut().find(|(i, _)| *i == s) {
                Some(entry) => entry.1 = e,
                None => out.push((s, e)),
            }
        }
        out.retain(|(_, e)| *e != 0.0);
        out
    }

    /// Net stoichiometry (products minus reactants) as a sparse list.
    pub fn net_stoichiometry(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut add = |s: usize, v: f64| match out.iter_mut().find(|(i, _)| *i == s) {
            Some(entry) => entry.1 += v,
            None => out.push((s, v)),
        };
        for &(s, m) in &self.reactants {
            add(s, -(m as f64));
        }
        for &(s, m) in &self.products {
            add(s, m as f64);
        }
        out.retain(|(_, v)| *v != 0.0);
        out
    }
}

/// Linear combination of species concentrations.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub name: String,
    pub coefficients: Vec<(usize, f64)>,
}

impl Observable {
    pub fn evaluate(&self, y: &[f64]) -> f64 {
        self.coefficients.iter().map(|&(i, c)| c * y[i]).sum()
    }
}

/// Affine expression `c + Σ a_i y_i + Σ b_j p_j` used by jump maps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub species: Vec<(usize, f64)>,
    pub parameters: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn evaluate(&self, y: &[f64], p: &[f64]) -> f64 {
        self.constant
            + self.species.iter().map(|&(i, a)| a * y[i]).sum::<f64>()
            + self.parameters.iter().map(|&(j, b)| b * p[j]).sum::<f64>()
    }
}

/// State reset applied when integration reaches `time`. Species without an
/// assignment keep their pre-event value.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakpointEvent {
    pub time: f64,
    pub assignments: Vec<(usize, AffineExpr)>,
}

impl BreakpointEvent {
    /// `y⁺ = g(y⁻; p)`. Assignments all read the pre-event state.
    pub fn apply(&self, y_minus: &[f64], p: &[f64]) -> Vec<f64> {
        let mut y = y_minus.to_vec();
        for (s, expr) in &self.assignments {
            y[*s] = expr.evaluate(y_minus, p);
        }
        y
    }

    /// `(∂g/∂y⁻, ∂g/∂p)`; both are constant since `g` is affine.
    pub fn jacobians(&self, n: usize, q: usize) -> (Matrix, Matrix) {
        let mut gy = Matrix::identity(n);
        let mut gp = Matrix::zeros(n, q);
        for (s, expr) in &self.assignments {
            gy.row_mut(*s).fill(0.0);
            for &(i, a) in &expr.species {
                gy[(*s, i)] += a;
            }
            for &(j, b) in &expr.parameters {
                gp[(*s, j)] += b;
            }
        }
        (gy, gp)
    }
}

/// One experiment: its own time span and (optionally overridden) initial
/// state.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub t0: f64,
    pub t_end: f64,
    pub initial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    NoSpecies,
    NoParameters,
    DuplicateName(String),
    UnknownSpecies(usize),
    UnknownParameter(usize),
    NegativeInitialValue(String),
    InvalidThreshold(String),
    InvalidTransform(String),
    NonFiniteValue(String),
    EmptyObservable(String),
    NonIncreasingEventTimes { previous: f64, next: f64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoSpecies => f.write_str("model has no species"),
            ModelError::NoParameters => f.write_str("model has no parameters"),
            ModelError::DuplicateName(n) => write!(f, "duplicate name '{n}'"),
            ModelError::UnknownSpecies(i) => write!(f, "unknown species index {i}"),
            ModelError::UnknownParameter(i) => write!(f, "unknown parameter index {i}"),
            ModelError::NegativeInitialValue(n) => {
                write!(f, "species '{n}' has a negative initial value")
            }
            ModelError::InvalidThreshold(n) => write!(f, "invalid threshold for '{n}'"),
            ModelError::InvalidTransform(n) => write!(f, "invalid transform for '{n}'"),
            ModelError::NonFiniteValue(n) => write!(f, "non-finite value in '{n}'"),
            ModelError::EmptyObservable(n) => {
                write!(f, "observable '{n}' has no nonzero coefficient")
            }
            ModelError::NonIncreasingEventTimes { previous, next } => write!(
                f,
                "non-increasing event times: {next} does not follow {previous}"
            ),
        }
    }
}

impl core::error::Error for ModelError {}

/// A reaction produced a non-finite rate or derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalError {
    pub reaction: usize,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "non-finite rate in reaction {}", self.reaction)
    }
}

impl core::error::Error for EvalError {}

/// Validated kinetic network. Immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticModel {
    species: Vec<Species>,
    parameters: Vec<Parameter>,
    reactions: Vec<Reaction>,
    observables: Vec<Observable>,
    events: Vec<BreakpointEvent>,
    experiments: Vec<Experiment>,
    // cached per-reaction rate factors and stoichiometry
    rate_factors: Vec<Vec<(usize, f64)>>,
    stoichiometry: Vec<Vec<(usize, f64)>>,
}

impl KineticModel {
    pub fn new(
        species: Vec<Species>,
        parameters: Vec<Parameter>,
        reactions: Vec<Reaction>,
        observables: Vec<Observable>,
        events: Vec<BreakpointEvent>,
    ) -> Result<Self, ModelError> {
        if species.is_empty() {
            return Err(ModelError::NoSpecies);
        }
        if parameters.is_empty() {
            return Err(ModelError::NoParameters);
        }
        let n = species.len();
        let q = parameters.len();
        {
            let mut names: Vec<&str> = species
                .iter()
                .map(|s| s.name.as_str())
                .chain(parameters.iter().map(|p| p.name.as_str()))
                .chain(observables.iter().map(|o| o.name.as_str()))
                .collect();
            names.sort_unstable();
            if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
                return Err(ModelError::DuplicateName(w[0].into()));
            }
        }
        for s in &species {
            if !s.initial.is_finite() {
                return Err(ModelError::NonFiniteValue(s.name.clone()));
            }
            if s.initial < 0.0 {
                return Err(ModelError::NegativeInitialValue(s.name.clone()));
            }
            if !(s.threshold >= 0.0 && s.threshold.is_finite()) {
                return Err(ModelError::InvalidThreshold(s.name.clone()));
            }
        }
        for p in &parameters {
            if !p.value.is_finite() {
                return Err(ModelError::NonFiniteValue(p.name.clone()));
            }
            if !(p.threshold > 0.0 && p.threshold.is_finite()) {
                return Err(ModelError::InvalidThreshold(p.name.clone()));
            }
            if !p.transform.validate() || p.transform.backward(p.value).is_err() {
                return Err(ModelError::InvalidTransform(p.name.clone()));
            }
        }
        for r in &reactions {
            if !r.factor.is_finite() || r.exponents.iter().any(|(_, e)| !e.is_finite()) {
                return Err(ModelError::NonFiniteValue(r.name.clone()));
            }
            let species_refs = r
                .reactants
                .iter()
                .chain(&r.products)
                .map(|(s, _)| *s)
                .chain(r.exponents.iter().map(|(s, _)| *s));
            for s in species_refs {
                if s >= n {
                    return Err(ModelError::UnknownSpecies(s));
                }
            }
            if let Some(&j) = r.rate_parameters.iter().find(|&&j| j >= q) {
                return Err(ModelError::UnknownParameter(j));
            }
        }
        for o in &observables {
            if let Some(&(s, _)) = o.coefficients.iter().find(|(s, _)| *s >= n) {
                return Err(ModelError::UnknownSpecies(s));
            }
            if o.coefficients.iter().all(|(_, c)| *c == 0.0) {
                return Err(ModelError::EmptyObservable(o.name.clone()));
            }
        }
        for w in events.windows(2) {
            if w[1].time <= w[0].time {
                return Err(ModelError::NonIncreasingEventTimes {
                    previous: w[0].time,
                    next: w[1].time,
                });
            }
        }
        for e in &events {
            if !e.time.is_finite() {
                return Err(ModelError::NonFiniteValue(String::from("event time")));
            }
            for (s, expr) in &e.assignments {
                if *s >= n {
                    return Err(ModelError::UnknownSpecies(*s));
                }
                if let Some(&(i, _)) = expr.species.iter().find(|(i, _)| *i >= n) {
                    return Err(ModelError::UnknownSpecies(i));
                }
                if let Some(&(j, _)) = expr.parameters.iter().find(|(j, _)| *j >= q) {
                    return Err(ModelError::UnknownParameter(j));
                }
            }
        }
        let rate_factors = reactions.iter().map(Reaction::rate_factors).collect();
        let stoichiometry = reactions.iter().map(Reaction::net_stoichiometry).collect();
        Ok(Self {
            species,
            parameters,
            reactions,
            observables,
            events,
            experiments: Vec::new(),
            rate_factors,
            stoichiometry,
        })
    }

    /// Attaches named experiments (time span and initial state override).
    pub fn with_experiments(mut self, experiments: Vec<Experiment>) -> Result<Self, ModelError> {
        for e in &experiments {
            if e.initial.len() != self.species.len() {
                return Err(ModelError::UnknownSpecies(e.initial.len()));
            }
            if !(e.t0.is_finite() && e.t_end.is_finite() && e.t_end >= e.t0) {
                return Err(ModelError::NonFiniteValue(e.name.clone()));
            }
        }
        let mut names: Vec<&str> = experiments.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateName(w[0].into()));
        }
        self.experiments = experiments;
        Ok(self)
    }

    /// Number of species `n`.
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Number of parameters `q`.
    pub fn n_parameters(&self) -> usize {
        self.parameters.len()
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }

    pub fn events(&self) -> &[BreakpointEvent] {
        &self.events
    }

    pub fn experiments(&self) -> &[Experiment] {
        &self.experiments
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.observables.iter().position(|o| o.name == name)
    }

    pub fn experiment_index(&self, name: &str) -> Option<usize> {
        self.experiments.iter().position(|e| e.name == name)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.initial).collect()
    }

    pub fn nominal_parameters(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.value).collect()
    }

    pub fn parameter_thresholds(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.threshold).collect()
    }

    pub fn species_thresholds(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.threshold).collect()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        self.parameters.iter().map(|p| p.transform).collect()
    }

    /// `p = φ(u)` componentwise.
    pub fn to_parameters(&self, u: &[f64]) -> Vec<f64> {
        self.parameters
            .iter()
            .zip(u)
            .map(|(p, u)| p.transform.forward(*u))
            .collect()
    }

    /// `u = φ⁻¹(p)` componentwise.
    pub fn to_internal(&self, p: &[f64]) -> Result<Vec<f64>, crate::transform::OutOfRange> {
        self.parameters
            .iter()
            .zip(p)
            .map(|(par, p)| par.transform.backward(*p))
            .collect()
    }

    fn rate_constant(&self, r: usize, p: &[f64]) -> f64 {
        let reaction = &self.reactions[r];
        reaction
            .rate_parameters
            .iter()
            .fold(reaction.factor, |acc, &j| acc * p[j])
    }

    fn mass_term(&self, r: usize, y: &[f64]) -> f64 {
        self.rate_factors[r]
            .iter()
            .fold(1.0, |acc, &(s, e)| acc * power(y[s], e))
    }

    /// `f(y; p) = Σ_r ν_r · rate_r(y, p)`.
    pub fn evaluate_rhs(&self, y: &[f64], p: &[f64], dy: &mut [f64]) -> Result<(), EvalError> {
        debug_assert_eq!(y.len(), self.n_species());
        debug_assert_eq!(p.len(), self.n_parameters());
        dy.fill(0.0);
        for r in 0..self.reactions.len() {
            let rate = self.rate_constant(r, p) * self.mass_term(r, y);
            if !rate.is_finite() {
                return Err(EvalError { reaction: r });
            }
            for &(s, nu) in &self.stoichiometry[r] {
                dy[s] += nu * rate;
            }
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`Self::evaluate_rhs`].
    pub fn rhs(&self, y: &[f64], p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut dy = vec![0.0; self.n_species()];
        self.evaluate_rhs(y, p, &mut dy)?;
        Ok(dy)
    }

    /// Writes `f_y` (n×n) into `fy`.
    pub fn state_jacobian_into(&self, y: &[f64], p: &[f64], fy: &mut Matrix) -> Result<(), EvalError> {
        let n = self.n_species();
        debug_assert!(fy.rows() == n && fy.cols() == n);
        for i in 0..n {
            fy.row_mut(i).fill(0.0);
        }
        for r in 0..self.reactions.len() {
            let k = self.rate_constant(r, p);
            if k == 0.0 {
                continue;
            }
            let factors = &self.rate_factors[r];
            for (a, &(sa, ea)) in factors.iter().enumerate() {
                let mut d = k * power_derivative(y[sa], ea);
                for (b, &(sb, eb)) in factors.iter().enumerate() {
                    if a != b {
                        d *= power(y[sb], eb);
                    }
                }
                if !d.is_finite() {
                    return Err(EvalError { reaction: r });
                }
                for &(s, nu) in &self.stoichiometry[r] {
                    fy[(s, sa)] += nu * d;
                }
            }
        }
        Ok(())
    }

    /// Writes `f_p` (n×q) into `fp`.
    pub fn parameter_jacobian_into(
        &self,
        y: &[f64],
        p: &[f64],
        fp: &mut Matrix,
    ) -> Result<(), EvalError> {
        debug_assert!(fp.rows() == self.n_species() && fp.cols() == self.n_parameters());
        for i in 0..fp.rows() {
            fp.row_mut(i).fill(0.0);
        }
        for (r, reaction) in self.reactions.iter().enumerate() {
            let mass = reaction.factor * self.mass_term(r, y);
            for (o, &j) in reaction.rate_parameters.iter().enumerate() {
                let d = reaction
                    .rate_parameters
                    .iter()
                    .enumerate()
                    .filter(|(o2, _)| *o2 != o)
                    .fold(mass, |acc, (_, &j2)| acc * p[j2]);
                if !d.is_finite() {
                    return Err(EvalError { reaction: r });
                }
                for &(s, nu) in &self.stoichiometry[r] {
                    fp[(s, j)] += nu * d;
                }
            }
        }
        Ok(())
    }

    /// Analytic `(f_y, f_p)`.
    pub fn evaluate_rhs_jacobians(&self, y: &[f64], p: &[f64]) -> Result<(Matrix, Matrix), EvalError> {
        let mut fy = Matrix::zeros(self.n_species(), self.n_species());
        let mut fp = Matrix::zeros(self.n_species(), self.n_parameters());
        self.state_jacobian_into(y, p, &mut fy)?;
        self.parameter_jacobian_into(y, p, &mut fp)?;
        Ok((fy, fp))
    }
}

fn power(y: f64, e: f64) -> f64 {
    if e == 1.0 {
        y
    } else if e == 2.0 {
        y * y
    } else if e == libm::trunc(e) && math::abs(e) <= 64.0 {
        math::powi(y, e as i32)
    } else {
        math::powf(y, e)
    }
}

fn power_derivative(y: f64, e: f64) -> f64 {
    if e == 1.0 {
        1.0
    } else if e == 2.0 {
        2.0 * y
    } else {
        e * power(y, e - 1.0)
    }
}
