//! Measurement records and the weighted residual `F(p)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::integrator::{integrate_experiment, IntegratorConfig, IntegratorError, Side};
use crate::math;
use crate::model::{Experiment, KineticModel};

/// What a measurement observes: a declared observable or a bare species.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableRef {
    Observable(usize),
    Species(usize),
}

impl ObservableRef {
    pub fn coefficients(&self, model: &KineticModel) -> Vec<(usize, f64)> {
        match *self {
            ObservableRef::Observable(o) => model.observables()[o].coefficients.clone(),
            ObservableRef::Species(s) => vec![(s, 1.0)],
        }
    }

    pub fn evaluate(&self, model: &KineticModel, y: &[f64]) -> f64 {
        self.coefficients(model).iter().map(|&(i, c)| c * y[i]).sum()
    }

    /// `Σ |c_i| thres(y_i)`.
    pub fn threshold(&self, model: &KineticModel) -> f64 {
        let species = model.species();
        self.coefficients(model)
            .iter()
            .map(|&(i, c)| math::abs(c) * species[i].threshold)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub experiment: usize,
    pub time: f64,
    pub observable: ObservableRef,
    pub value: f64,
    /// `None` selects the default `max(|z|, thres)`; `Some(0.0)` makes the
    /// record an equality constraint.
    pub tolerance: Option<f64>,
}

/// Measurements of one or more experiments. Missing values are simply not
/// recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub experiments: Vec<Experiment>,
    pub measurements: Vec<Measurement>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataError {
    NoData,
    UnknownExperiment { record: usize },
    TimeOutsideSpan { record: usize, time: f64 },
    InvalidTolerance { record: usize },
    NonFiniteValue { record: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::NoData => f.write_str("no data"),
            DataError::UnknownExperiment { record } => {
                write!(f, "record {record}: unknown experiment")
            }
            DataError::TimeOutsideSpan { record, time } => {
                write!(f, "record {record}: time {time} outside the experiment span")
            }
            DataError::InvalidTolerance { record } => {
                write!(f, "record {record}: tolerance must be finite and non-negative")
            }
            DataError::NonFiniteValue { record } => write!(f, "record {record}: non-finite value"),
        }
    }
}

impl core::error::Error for DataError {}

impl ExperimentData {
    pub fn new(experiments: Vec<Experiment>, measurements: Vec<Measurement>) -> Result<Self, DataError> {
        for (record, m) in measurements.iter().enumerate() {
            let e = experiments
                .get(m.experiment)
                .ok_or(DataError::UnknownExperiment { record })?;
            if !(m.value.is_finite() && m.time.is_finite()) {
                return Err(DataError::NonFiniteValue { record });
            }
            if m.time < e.t0 || m.time > e.t_end {
                return Err(DataError::TimeOutsideSpan { record, time: m.time });
            }
            if let Some(tol) = m.tolerance {
                if !(tol >= 0.0 && tol.is_finite()) {
                    return Err(DataError::InvalidTolerance { record });
                }
            }
        }
        Ok(Self {
            experiments,
            measurements,
        })
    }

    /// Number of residual components `L`.
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Effective tolerance per record; zero marks a constraint row.
    pub fn weights(&self, model: &KineticModel) -> Vec<f64> {
        self.measurements
            .iter()
            .map(|m| match m.tolerance {
                Some(t) => t,
                None => math::abs(m.value).max(m.observable.threshold(model)),
            })
            .collect()
    }

    pub fn constraint_rows(&self, model: &KineticModel) -> Vec<bool> {
        self.weights(model).iter().map(|w| *w == 0.0).collect()
    }

    /// Largest tolerance given explicitly in the data, if any.
    pub fn max_tolerance(&self) -> Option<f64> {
        self.measurements
            .iter()
            .filter_map(|m| m.tolerance)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }

    /// Measurement times of experiment `e`.
    pub fn times(&self, e: usize) -> Vec<f64> {
        self.measurements
            .iter()
            .filter(|m| m.experiment == e)
            .map(|m| m.time)
            .collect()
    }
}

/// `F(p)` with constraint-row flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    pub constraint: Vec<bool>,
}

impl Residual {
    pub fn norm(&self) -> f64 {
        math::norm2(&self.values)
    }
}

/// Weighted residual `(y_obs(τ_j; p) − z_j) / δz_j`; constraint rows are
/// left unweighted.
pub fn assemble_residual(
    model: &KineticModel,
    p: &[f64],
    data: &ExperimentData,
    cfg: &IntegratorConfig,
) -> Result<Residual, ResidualError> {
    if data.is_empty() {
        return Err(ResidualError::NoData);
    }
    let weights = data.weights(model);
    let mut values = vec![0.0; data.len()];
    for (e, experiment) in data.experiments.iter().enumerate() {
        let times = data.times(e);
        if times.is_empty() {
            continue;
        }
        let traj = integrate_experiment(model, p, experiment, &times, cfg, None).map_err(|err| {
            ResidualError::Integration(IntegratorError::Experiment {
                index: e,
                source: alloc::boxed::Box::new(err),
            })
        })?;
        for (r, m) in data.measurements.iter().enumerate() {
            if m.experiment != e {
                continue;
            }
            let y = traj
                .interpolate(m.time, Side::Right)
                .map_err(ResidualError::Integration)?;
            let w = if weights[r] > 0.0 { weights[r] } else { 1.0 };
            values[r] = (m.observable.evaluate(model, &y) - m.value) / w;
        }
    }
    Ok(Residual {
        values,
        constraint: weights.iter().map(|w| *w == 0.0).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResidualError {
    NoData,
    Integration(IntegratorError),
}

impl fmt::Display for ResidualError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidualError::NoData => f.write_str("no data"),
            ResidualError::Integration(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for ResidualError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Parameter, Reaction, Species};
    use crate::transform::Transform;
    use alloc::string::ToString;

    fn constant_model(y0: f64, thres: f64) -> KineticModel {
        KineticModel::new(
            vec![Species {
                name: "y".to_string(),
                initial: y0,
                threshold: thres,
            }],
            vec![Parameter {
                name: "k".to_string(),
                value: 0.0,
                threshold: 1e-6,
                transform: Transform::Identity,
            }],
            vec![Reaction {
                name: "r".to_string(),
                factor: 1.0,
                rate_parameters: vec![0],
                reactants: vec![(0, 1)],
                products: vec![],
                exponents: vec![],
            }],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn data(value: f64, tolerance: Option<f64>) -> ExperimentData {
        ExperimentData::new(
            vec![Experiment {
                name: "e".to_string(),
                t0: 0.0,
                t_end: 1.0,
                initial: vec![2.0],
            }],
            vec![Measurement {
                experiment: 0,
                time: 1.0,
                observable: ObservableRef::Species(0),
                value,
                tolerance,
            }],
        )
        .unwrap()
    }

    #[test]
    fn weighted_entry() {
        let m = constant_model(2.0, 0.0);
        let r = assemble_residual(&m, &[0.0], &data(1.0, Some(0.5)), &IntegratorConfig::default()).unwrap();
        assert_eq!(r.values, vec![2.0]);
        assert_eq!(r.constraint, vec![false]);
    }

    #[test]
    fn default_tolerance_uses_threshold() {
        let m = constant_model(2.0, 1e-3);
        assert_eq!(data(0.0, None).weights(&m), vec![1e-3]);
        assert_eq!(data(-4.0, None).weights(&m), vec![4.0]);
    }

    #[test]
    fn exact_prediction_gives_zero_residual() {
        let m = constant_model(2.0, 0.0);
        let r = assemble_residual(&m, &[0.0], &data(2.0, None), &IntegratorConfig::default()).unwrap();
        assert_eq!(r.norm(), 0.0);
    }

    #[test]
    fn zero_tolerance_is_constraint() {
        let m = constant_model(2.0, 0.0);
        let r = assemble_residual(&m, &[0.0], &data(1.5, Some(0.0)), &IntegratorConfig::default()).unwrap();
        assert_eq!(r.values, vec![0.5]);
        assert_eq!(r.constraint, vec![true]);
    }

    #[test]
    fn empty_data_is_rejected() {
        let m = constant_model(2.0, 0.0);
        let d = ExperimentData::new(vec![], vec![]).unwrap();
        assert_eq!(
            assemble_residual(&m, &[0.0], &d, &IntegratorConfig::default()).unwrap_err(),
            ResidualError::NoData
        );
    }

    #[test]
    fn records_are_validated() {
        let e = Experiment {
            name: "e".to_string(),
            t0: 0.0,
            t_end: 1.0,
            initial: vec![1.0],
        };
        let rec = |time, tolerance| Measurement {
            experiment: 0,
            time,
            observable: ObservableRef::Species(0),
            value: 1.0,
            tolerance,
        };
        assert!(matches!(
            ExperimentData::new(vec![e.clone()], vec![rec(2.0, None)]),
            Err(DataError::TimeOutsideSpan { .. })
        ));
        assert!(matches!(
            ExperimentData::new(vec![e], vec![rec(0.5, Some(-1.0))]),
            Err(DataError::InvalidTolerance { .. })
        ));
    }
}
