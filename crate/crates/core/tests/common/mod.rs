#![allow(dead_code)]

use kinid_core::gnsolver::{ExperimentData, Measurement, ObservableRef};
use kinid_core::integrator::{integrate_experiment, IntegratorConfig, Side};
use kinid_core::model::{Experiment, Parameter, Reaction, Species};
use kinid_core::{KineticModel, Transform};

pub fn species(name: &str, initial: f64) -> Species {
    Species {
        name: name.to_string(),
        initial,
        threshold: 0.0,
    }
}

pub fn parameter(name: &str, value: f64, threshold: f64) -> Parameter {
    Parameter {
        name: name.to_string(),
        value,
        threshold,
        transform: Transform::Identity,
    }
}

pub fn reaction(reactants: &[usize], products: &[usize], factor: f64, rate: &[usize]) -> Reaction {
    Reaction {
        name: format!("r{reactants:?}{products:?}"),
        factor,
        rate_parameters: rate.to_vec(),
        reactants: reactants.iter().map(|&s| (s, 1)).collect(),
        products: products.iter().map(|&s| (s, 1)).collect(),
        exponents: vec![],
    }
}

/// `y' = −p y`, `y(0) = 1`.
pub fn decay(p: f64) -> KineticModel {
    KineticModel::new(
        vec![species("y", 1.0)],
        vec![parameter("p", p, 1e-6)],
        vec![reaction(&[0], &[], 1.0, &[0])],
        vec![],
        vec![],
    )
    .unwrap()
}

/// `A → B → C` with rate constants `k1`, `k2`.
pub fn chain(k1: f64, k2: f64) -> KineticModel {
    KineticModel::new(
        vec![species("A", 1.0), species("B", 0.0), species("C", 0.0)],
        vec![parameter("k1", k1, 1e-6), parameter("k2", k2, 1e-6)],
        vec![reaction(&[0], &[1], 1.0, &[0]), reaction(&[1], &[2], 1.0, &[1])],
        vec![],
        vec![],
    )
    .unwrap()
}

/// `y' = −(p1 p2) y`.
pub fn product(p1: f64, p2: f64) -> KineticModel {
    KineticModel::new(
        vec![species("y", 1.0)],
        vec![parameter("p1", p1, 1e-6), parameter("p2", p2, 1e-6)],
        vec![reaction(&[0], &[], 1.0, &[0, 1])],
        vec![],
        vec![],
    )
    .unwrap()
}

pub fn experiment(model: &KineticModel, t0: f64, t_end: f64) -> Experiment {
    Experiment {
        name: "exp".to_string(),
        t0,
        t_end,
        initial: model.initial_state(),
    }
}

/// Species-0 measurements of `model` at `p`, computed at tight tolerance.
pub fn synthetic_data(model: &KineticModel, p: &[f64], times: &[f64], tolerance: Option<f64>) -> ExperimentData {
    synthetic_species_data(model, p, times, tolerance, 0)
}

pub fn synthetic_species_data(
    model: &KineticModel,
    p: &[f64],
    times: &[f64],
    tolerance: Option<f64>,
    species: usize,
) -> ExperimentData {
    let e = experiment(model, 0.0, *times.last().unwrap());
    let cfg = IntegratorConfig::with_tolerances(1e-11, 1e-14);
    let traj = integrate_experiment(model, p, &e, times, &cfg, None).unwrap();
    let measurements = times
        .iter()
        .map(|&t| Measurement {
            experiment: 0,
            time: t,
            observable: ObservableRef::Species(species),
            value: traj.interpolate(t, Side::Right).unwrap()[species],
            tolerance,
        })
        .collect();
    ExperimentData::new(vec![e], measurements).unwrap()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
