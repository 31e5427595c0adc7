//! Measurement CSV files.
//!
//! The header is `experiment,time,observable,value,tolerance`. The
//! observable column names a declared observable or a bare species. An
//! empty or `NA` value skips the record; an empty tolerance selects the
//! default weighting and a tolerance of `0` makes the record an equality
//! constraint.
//!
//! When the model declares no experiments, every experiment name in the
//! data file becomes an experiment starting at `t = 0` from the model's
//! initial state and ending at its last measurement time.

use std::io::Read;

use kinid_core::gnsolver::DataError;
use kinid_core::{Experiment, ExperimentData, KineticModel, Measurement, ObservableRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const HEADER: [&str; 5] = ["experiment", "time", "observable", "value", "tolerance"];

#[derive(Debug, Error)]
pub enum DataFileError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("expected header '{}', found '{found}'", HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: unknown observable '{name}'")]
    UnknownObservable { line: u64, name: String },
    #[error("line {line}: unknown experiment '{name}'")]
    UnknownExperiment { line: u64, name: String },
    #[error("line {line}: invalid {field} '{value}'")]
    InvalidNumber {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: time {time} outside experiment '{name}'")]
    TimeOutsideSpan { line: u64, name: String, time: f64 },
    #[error("line {line}: tolerance must be non-negative")]
    NegativeTolerance { line: u64 },
    #[error("no data")]
    NoData,
    #[error("{0}")]
    Data(#[from] DataError),
}

struct Record {
    line: u64,
    experiment: String,
    time: f64,
    observable: ObservableRef,
    value: f64,
    tolerance: Option<f64>,
}

/// Reads measurements for `model` from CSV text.
pub fn read_data<R: Read>(model: &KineticModel, reader: R) -> Result<ExperimentData, DataFileError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = csv.headers()?.clone();
    if header.iter().ne(HEADER) {
        return Err(DataFileError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut records = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let value = &row[3];
        if value.is_empty() || value.eq_ignore_ascii_case("na") {
            continue;
        }
        let number = |field: &'static str, s: &str| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(DataFileError::InvalidNumber {
                line,
                field,
                value: s.to_string(),
            }),
        };
        let name = &row[2];
        let observable = match (model.observable_index(name), model.species_index(name)) {
            (Some(o), _) => ObservableRef::Observable(o),
            (None, Some(s)) => ObservableRef::Species(s),
            (None, None) => {
                return Err(DataFileError::UnknownObservable {
                    line,
                    name: name.to_string(),
                })
            }
        };
        let tolerance = match &row[4] {
            "" => None,
            s => Some(number("tolerance", s)?),
        };
        if tolerance.is_some_and(|t| t < 0.0) {
            return Err(DataFileError::NegativeTolerance { line });
        }
        records.push(Record {
            line,
            experiment: row[0].to_string(),
            time: number("time", &row[1])?,
            observable,
            value: number("value", value)?,
            tolerance,
        });
    }
    if records.is_empty() {
        return Err(DataFileError::NoData);
    }

    let experiments: Vec<Experiment> = if model.experiments().is_empty() {
        let mut implicit: Vec<Experiment> = Vec::new();
        for r in &records {
            match implicit.iter_mut().find(|e| e.name == r.experiment) {
                Some(e) => e.t_end = e.t_end.max(r.time),
                None => implicit.push(Experiment {
                    name: r.experiment.clone(),
                    t0: 0.0,
                    t_end: r.time,
                    initial: model.initial_state(),
                }),
            }
        }
        implicit
    } else {
        model.experiments().to_vec()
    };

    let mut measurements = Vec::with_capacity(records.len());
    for r in records {
        let Some(e) = experiments.iter().position(|e| e.name == r.experiment) else {
            return Err(DataFileError::UnknownExperiment {
                line: r.line,
                name: r.experiment,
            });
        };
        let span = &experiments[e];
        if r.time < span.t0 || r.time > span.t_end || (r.time == span.t0 && span.t_end == span.t0) {
            return Err(DataFileError::TimeOutsideSpan {
                line: r.line,
                name: r.experiment,
                time: r.time,
            });
        }
        measurements.push(Measurement {
            experiment: e,
            time: r.time,
            observable: r.observable,
            value: r.value,
            tolerance: r.tolerance,
        });
    }
    Ok(ExperimentData::new(experiments, measurements)?)
}

/// Multiplies every measurement by `1 + σ·N(0, 1)`; constraint rows are
/// left untouched. The same seed yields the same disturbance.
pub fn add_noise(data: &mut ExperimentData, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in &mut data.measurements {
        let n: f64 = StandardNormal.sample(&mut rng);
        if m.tolerance != Some(0.0) {
            m.value *= 1.0 + sigma * n;
        }
    }
}
