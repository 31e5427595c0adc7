//! Text and CSV renderings of fit results.

use std::fmt::Write as _;

use kinid_core::stats::{FitStatistics, CORRELATION_THRESHOLD};
use kinid_core::{KineticModel, ProtocolRow, Transform, Verdict};

/// C-style `%.{prec}e`: `sci(41.941414, 7) == "4.1941414e+01"`.
pub fn sci(x: f64, prec: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.prec$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

const IT: usize = 7;
const NORMF: usize = 14;
const NORMX: usize = 10;
const DAMP: usize = 11;
const RANK: usize = 4;
// normf through damping factor, separators included
const MIDDLE: usize = NORMF + 3 + NORMX + 2 + DAMP;

fn line(it: &str, normf: &str, mark: &str, normx: &str, damp: &str, rank: &str) -> String {
    let s = format!("{it:>IT$}  {normf:>NORMF$} {mark:1} {normx:>NORMX$}  {damp:>DAMP$}  {rank:>RANK$}");
    s.trim_end().to_string()
}

pub fn protocol_header() -> String {
    line("G-N It.", "Normf", "", "Normx", "Damp. Fctr.", "Rank")
}

/// One protocol row. Ordinary rows show the rank, simplified rows (`*`, or
/// `.` for the final step) the damping factor.
pub fn protocol_line(row: &ProtocolRow) -> String {
    match *row {
        ProtocolRow::Ordinary {
            iteration,
            normf,
            normx,
            rank,
        } => line(&iteration.to_string(), &sci(normf, 7), "", &sci(normx, 3), "", &rank.to_string()),
        ProtocolRow::Simplified {
            iteration,
            normf,
            normx,
            damping,
            last,
        } => line(
            &iteration.to_string(),
            &sci(normf, 7),
            if last { "." } else { "*" },
            &sci(normx, 3),
            &format!("{damping:.5}"),
            "",
        ),
        ProtocolRow::Incompatibility { iteration, kappa } => {
            let text = format!("incompatibility factor: {kappa:.5}");
            format!("{:>IT$}  {text:>MIDDLE$}", iteration)
        }
    }
}

pub fn protocol_table(rows: &[ProtocolRow]) -> String {
    let mut out = protocol_header();
    out.push('\n');
    for row in rows {
        out.push_str(&protocol_line(row));
        out.push('\n');
    }
    out
}

/// Everything the statistics report needs besides the statistics.
pub struct FitSummary<'a> {
    pub names: Vec<&'a str>,
    pub truth: Option<&'a [f64]>,
    pub xtol: f64,
    pub iterations: usize,
    pub verdict: Verdict,
}

fn percent(p: Option<f64>) -> String {
    p.map_or_else(|| "  n/a".to_string(), |p| format!("{p:5.2}"))
}

/// Parameter table with `± std ≙ pct %` rows, the convergence footer, the
/// correlated groups and the correlation matrix.
pub fn statistics_text(st: &FitStatistics, summary: &FitSummary) -> String {
    let width = summary.names.iter().map(|n| n.len()).max().unwrap_or(0).max(9);
    let mut out = String::new();
    let truth_head = if summary.truth.is_some() { "  True Value" } else { "" };
    let _ = writeln!(out, "{:<width$}{truth_head}  Reconstruction  Std. Dev.", "Parameter");
    for (i, name) in summary.names.iter().enumerate() {
        let truth = summary
            .truth
            .map(|t| format!("  {:>10}", sci(t[i], 1)))
            .unwrap_or_default();
        let sd = &st.std_devs[i];
        let note = if st.unbounded[i] { "  (not identifiable)" } else { "" };
        let _ = writeln!(
            out,
            "{name:<width$}{truth}  {:>14}  ± {} ≙ {} %{note}",
            sci(st.estimates[i], 3),
            sci(sd.absolute, 3),
            percent(sd.percent),
        );
    }
    out.push('\n');
    let _ = writeln!(out, "Requested identification accuracy: xtol = {}", sci(summary.xtol, 1));
    let steps = summary.iterations;
    let _ = match summary.verdict {
        Verdict::Converged { kappa } => writeln!(
            out,
            "Gauss-Newton iteration converged after {steps} steps, with incompatibility factor kappa = {kappa:.5}"
        ),
        Verdict::Inadequate { kappa } => writeln!(
            out,
            "Gauss-Newton iteration stopped at stationary point after {steps} steps, with incompatibility factor kappa = {kappa:.5} (inadequate problem)"
        ),
        other => writeln!(out, "Gauss-Newton iteration stopped after {steps} steps: {other}"),
    };
    let _ = writeln!(out, "Final rank {} of {}, {} degrees of freedom", st.rank, st.estimates.len(), st.dof);
    let groups: Vec<String> = st
        .correlated_groups
        .iter()
        .map(|g| format!("{{{}}}", g.iter().map(|&i| summary.names[i]).collect::<Vec<_>>().join(", ")))
        .collect();
    let _ = writeln!(
        out,
        "Correlated groups (|corr| >= {CORRELATION_THRESHOLD}): {}",
        if groups.is_empty() { "none".to_string() } else { groups.join(" ") }
    );
    out.push_str("\nCorrelation matrix\n");
    let _ = write!(out, "{:<width$}", "");
    for name in &summary.names {
        let _ = write!(out, " {name:>9}");
    }
    out.push('\n');
    for (i, name) in summary.names.iter().enumerate() {
        let _ = write!(out, "{name:<width$}");
        for j in 0..summary.names.len() {
            let c = st.correlation[(i, j)];
            let cell = if c.is_nan() { "undef".to_string() } else { format!("{c:.4}") };
            let _ = write!(out, " {cell:>9}");
        }
        out.push('\n');
    }
    out
}

/// `parameter,estimate,std_abs,std_pct`; an undefined percentage is empty.
pub fn statistics_csv(st: &FitStatistics, names: &[&str]) -> String {
    let mut out = String::from("parameter,estimate,std_abs,std_pct\n");
    for (i, name) in names.iter().enumerate() {
        let sd = &st.std_devs[i];
        let pct = sd.percent.map_or_else(String::new, |p| p.to_string());
        let _ = writeln!(out, "{name},{},{},{pct}", st.estimates[i], sd.absolute);
    }
    out
}

fn transform_spec(t: &Transform) -> Option<String> {
    match *t {
        Transform::Identity => None,
        Transform::Exponential => Some("exp".into()),
        Transform::Sinusoidal { lower, upper } => Some(format!("sin({lower},{upper})")),
        Transform::RootSquareUpper { bound } => Some(format!("sqrtu({bound})")),
        Transform::RootSquareLower { bound } => Some(format!("sqrtl({bound})")),
    }
}

/// `@parameters` section with the given values, keeping thresholds and
/// transforms, ready to paste into a model file.
pub fn parameters_fragment(model: &KineticModel, values: &[f64]) -> String {
    let mut out = String::from("@parameters\n");
    for (p, v) in model.parameters().iter().zip(values) {
        let _ = write!(out, "{} = {v} [thres={}", p.name, p.threshold);
        if let Some(t) = transform_spec(&p.transform) {
            let _ = write!(out, " transform={t}");
        }
        out.push_str("]\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponents() {
        assert_eq!(sci(41.941414, 7), "4.1941414e+01");
        assert_eq!(sci(2.115e-2, 3), "2.115e-02");
        assert_eq!(sci(1.783e-8, 3), "1.783e-08");
        assert_eq!(sci(8e-3, 1), "8.0e-03");
        assert_eq!(sci(0.0, 3), "0.000e+00");
        assert_eq!(sci(-1.5e120, 2), "-1.50e+120");
    }

    #[test]
    fn percent_column_is_right_aligned() {
        assert_eq!(percent(Some(25.3)), "25.30");
        assert_eq!(percent(Some(8.87)), " 8.87");
        assert_eq!(percent(None), "  n/a");
    }
}
