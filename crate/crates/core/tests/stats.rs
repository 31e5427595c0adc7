mod common;

use common::*;
use kinid_core::gnsolver::{assemble_residual, fit, ExperimentData, FitReport, GnConfig};
use kinid_core::integrator::IntegratorConfig;
use kinid_core::model::Parameter;
use kinid_core::stats::{fit_statistics, StatsError};
use kinid_core::{KineticModel, Transform};

fn config() -> GnConfig {
    GnConfig {
        xtol: 1e-7,
        integrator: IntegratorConfig::with_tolerances(1e-10, 1e-14),
        ..GnConfig::default()
    }
}

/// Deterministic ±2 % relative disturbance with 2 % tolerances.
fn noisy(mut data: ExperimentData) -> ExperimentData {
    for (i, m) in data.measurements.iter_mut().enumerate() {
        let wobble = [0.7, -1.3, 0.4, 1.1, -0.6, -0.9, 1.4, -0.2][i % 8];
        m.value *= 1.0 + 0.02 * wobble;
        m.tolerance = Some(0.02 * m.value.abs());
    }
    data
}

fn converged(model: &KineticModel, data: &ExperimentData, p0: &[f64]) -> FitReport {
    let u0 = model.to_internal(p0).unwrap();
    let report = fit(model, data, &u0, &config()).unwrap();
    assert!(report.verdict.is_converged(), "{:?} {:#?}", report.verdict, report.protocol);
    report
}

fn weighted_residual(model: &KineticModel, data: &ExperimentData, p: &[f64]) -> Vec<f64> {
    let cfg = IntegratorConfig::with_tolerances(1e-12, 1e-15);
    assemble_residual(model, p, data, &cfg).unwrap().values
}

/// `s² (JᵀJ)⁻¹` with `J` from central differences of the residual in
/// `p`, inverted explicitly.
fn covariance_oracle(model: &KineticModel, data: &ExperimentData, p: &[f64]) -> [[f64; 2]; 2] {
    let f = weighted_residual(model, data, p);
    let cols: Vec<Vec<f64>> = (0..2)
        .map(|j| {
            let h = 1e-5 * p[j].abs();
            let mut plus = p.to_vec();
            let mut minus = p.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let (a, b) = (weighted_residual(model, data, &plus), weighted_residual(model, data, &minus));
            a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect()
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (g00, g01, g11) = (dot(&cols[0], &cols[0]), dot(&cols[0], &cols[1]), dot(&cols[1], &cols[1]));
    let det = g00 * g11 - g01 * g01;
    let s2 = dot(&f, &f) / (f.len() - 2) as f64;
    [[s2 * g11 / det, -s2 * g01 / det], [-s2 * g01 / det, s2 * g00 / det]]
}

#[test]
fn covariance_matches_finite_difference_oracle() {
    let truth = chain(1.0, 2.0);
    let data = noisy(synthetic_species_data(&truth, &[1.0, 2.0], &linspace(0.2, 4.0, 16), None, 1));
    let report = converged(&truth, &data, &[1.2, 1.8]);
    let st = fit_statistics(&report, &truth).unwrap();
    let oracle = covariance_oracle(&truth, &data, &st.estimates);
    for i in 0..2 {
        for j in 0..2 {
            let scale = (oracle[i][i] * oracle[j][j]).sqrt();
            assert!(
                (st.covariance[(i, j)] - oracle[i][j]).abs() <= 1e-3 * scale,
                "C[{i}][{j}] = {} vs {}",
                st.covariance[(i, j)],
                oracle[i][j]
            );
        }
    }
    assert_eq!(st.rank, 2);
    assert_eq!(st.dof, 14);
    assert!(st.unbounded.iter().all(|u| !u));
    for (sd, est) in st.std_devs.iter().zip(&st.estimates) {
        assert!(sd.absolute > 0.0);
        assert!((sd.percent.unwrap() - 100.0 * sd.absolute / est).abs() < 1e-12);
    }
}

#[test]
fn exact_data_gives_zero_deviation_but_defined_correlation() {
    let truth = chain(1.0, 2.0);
    let data = synthetic_species_data(&truth, &[1.0, 2.0], &linspace(0.2, 4.0, 16), None, 1);
    let report = converged(&truth, &data, &[1.2, 1.8]);
    let st = fit_statistics(&report, &truth).unwrap();
    assert!(st.std_devs.iter().all(|s| s.absolute < 1e-6));
    assert!(st.correlation.as_slice().iter().all(|c| c.is_finite()));
    assert_eq!(st.correlation[(0, 0)], 1.0);
}

#[test]
fn product_parameters_form_a_correlated_group() {
    let truth = product(1.0, 1.0);
    let data = noisy(synthetic_data(&truth, &[1.0, 1.0], &linspace(0.2, 2.0, 10), None));
    let model = product(2.0, 2.0);
    let report = fit(&model, &data, &[2.0, 2.0], &GnConfig { xtol: 1e-4, ..config() }).unwrap();
    assert!(report.verdict.is_converged(), "{:?}", report.verdict);
    let st = fit_statistics(&report, &model).unwrap();
    assert_eq!(st.rank, 1);
    assert_eq!(st.correlated_groups, vec![vec![0, 1]]);
    assert_eq!(st.unbounded, vec![true, true]);
    assert!((st.correlation[(0, 1)].abs() - 1.0).abs() < 1e-8);
}

#[test]
fn transformed_parameters_report_in_model_space() {
    let truth = chain(1.0, 2.0);
    let data = noisy(synthetic_species_data(&truth, &[1.0, 2.0], &linspace(0.2, 4.0, 16), None, 1));
    let plain = converged(&truth, &data, &[1.2, 1.8]);
    let plain_stats = fit_statistics(&plain, &truth).unwrap();

    let parameters: Vec<Parameter> = truth
        .parameters()
        .iter()
        .map(|p| Parameter {
            transform: Transform::Exponential,
            ..p.clone()
        })
        .collect();
    let logged = KineticModel::new(
        truth.species().to_vec(),
        parameters,
        truth.reactions().to_vec(),
        vec![],
        vec![],
    )
    .unwrap();
    let report = converged(&logged, &data, &[1.2, 1.8]);
    let st = fit_statistics(&report, &logged).unwrap();
    for i in 0..2 {
        assert!((st.estimates[i] - plain_stats.estimates[i]).abs() < 1e-6);
        let (a, b) = (st.std_devs[i].absolute, plain_stats.std_devs[i].absolute);
        assert!((a - b).abs() <= 1e-4 * b, "{a} vs {b}");
    }
    assert!((st.correlation[(0, 1)] - plain_stats.correlation[(0, 1)]).abs() < 1e-6);
}

#[test]
fn too_few_measurements_leave_no_degrees_of_freedom() {
    let truth = chain(1.0, 2.0);
    let data = synthetic_species_data(&truth, &[1.0, 2.0], &[0.5, 1.5], None, 1);
    let report = converged(&truth, &data, &[1.1, 1.9]);
    assert!(matches!(
        fit_statistics(&report, &truth),
        Err(StatsError::NoDegreesOfFreedom { residuals: 2, rank: 2 })
    ));
}
