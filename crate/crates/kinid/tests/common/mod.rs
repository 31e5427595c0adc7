//! Protocol rows and statistics of a six-parameter fit, used to check the
//! report layout byte for byte.
#![allow(dead_code)]

use kinid::report::FitSummary;
use kinid_core::stats::{FitStatistics, StdDev};
use kinid_core::{Matrix, ProtocolRow, Verdict};

pub const PROTOCOL: &str = include_str!("../golden/protocol.txt");
pub const STATISTICS: &str = include_str!("../golden/statistics.txt");
pub const NAMES: [&str; 6] = ["k1", "k2", "k3", "k4", "k5", "k6"];
pub const TRUTH: [f64; 6] = [8.0e-3, 5.0e-5, 1.0e-1, 2.5e-1, 1.5e-1, 7.5e-2];

fn ordinary(iteration: usize, normf: f64, normx: f64) -> ProtocolRow {
    ProtocolRow::Ordinary {
        iteration,
        normf,
        normx,
        rank: 6,
    }
}

fn simplified(iteration: usize, normf: f64, normx: f64, damping: f64) -> ProtocolRow {
    ProtocolRow::Simplified {
        iteration,
        normf,
        normx,
        damping,
        last: false,
    }
}

fn kappa(iteration: usize, kappa: f64) -> ProtocolRow {
    ProtocolRow::Incompatibility { iteration, kappa }
}

pub fn protocol_rows() -> Vec<ProtocolRow> {
    vec![
        ordinary(0, 41.941414, 2.115e-2),
        simplified(1, 41.936708, 2.094e-2, 0.01),
        ordinary(1, 41.936708, 2.469e-2),
        simplified(2, 41.751843, 1.669e-2, 0.41932),
        ordinary(2, 41.751843, 3.373e-2),
        simplified(3, 41.655239, 2.266e-2, 0.42693),
        ordinary(3, 41.655239, 1.024e-1),
        simplified(4, 41.639220, 7.410e-2, 0.19117),
        ordinary(4, 41.639220, 1.076e-1),
        simplified(5, 41.631470, 4.854e-2, 0.37178),
        ordinary(5, 41.631470, 1.538e-2),
        simplified(6, 41.547355, 1.816e-3, 1.0),
        kappa(6, 0.14248),
        ordinary(6, 41.547355, 6.366e-3),
        simplified(7, 41.542667, 2.140e-4, 1.0),
        kappa(7, 0.42707),
        ordinary(7, 41.542667, 3.339e-5),
        ProtocolRow::Simplified {
            iteration: 8,
            normf: 41.542118,
            normx: 1.783e-8,
            damping: 1.0,
            last: true,
        },
        kappa(8, 0.00526),
    ]
}

pub fn statistics() -> FitStatistics {
    let estimates = vec![8.114e-3, 5.045e-5, 1.012e-1, 4.297e-1, 1.096e-1, 5.343e-2];
    let absolute = [2.053e-3, 6.361e-6, 8.970e-3, 4.216e-3, 2.732e-2, 2.556e-2];
    let percent = [25.30, 12.61, 8.87, 0.98, 24.93, 47.83];
    let correlation = Matrix::from_fn(6, 6, |i, j| match (i, j) {
        _ if i == j => 1.0,
        (0, 1) | (1, 0) => 0.25,
        (3..=5, 3..=5) if i == 5 || j == 5 => -0.9953,
        (3..=5, 3..=5) => 0.9981,
        _ => 0.0,
    });
    FitStatistics {
        covariance: Matrix::from_diagonal(&absolute.map(|a| a * a)),
        std_devs: absolute
            .iter()
            .zip(percent)
            .map(|(&absolute, p)| StdDev {
                absolute,
                percent: Some(p),
            })
            .collect(),
        estimates,
        unbounded: vec![false, false, false, false, false, true],
        correlation,
        correlated_groups: vec![vec![3, 4, 5]],
        rank: 5,
        dof: 94,
        residual_norm: 41.54,
    }
}

pub fn summary() -> FitSummary<'static> {
    FitSummary {
        names: NAMES.to_vec(),
        truth: Some(&TRUTH),
        xtol: 1e-4,
        iterations: 9,
        verdict: Verdict::Converged { kappa: 0.04845 },
    }
}
