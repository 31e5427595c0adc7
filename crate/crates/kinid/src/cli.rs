//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input (files, flags, no data), 3
//! integration failure, 4 the fit did not converge.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kinid_core::gnsolver::{FitError, PivotedQr};
use kinid_core::integrator::{integrate_experiment, IntegratorError};
use kinid_core::sensitivity::{jacobian_at, scale_sensitivities, sensitivities};
use kinid_core::stats::fit_statistics;
use kinid_core::{
    fit_with_observer, Experiment, ExperimentData, GnConfig, IntegratorConfig, JacobianMethod,
    KineticModel, Verdict,
};

use crate::data_file::{add_noise, read_data};
use crate::model_file::parse_model;
use crate::report::{
    parameters_fragment, protocol_header, protocol_line, sci, statistics_csv, statistics_text,
    FitSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "kinid", version, about = "Simulate kinetic models and identify their parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate every experiment and write trajectory_<experiment>.csv.
    Simulate(Options),
    /// Write scaled sensitivities to sensitivity_<experiment>.csv.
    Sens(Options),
    /// Fit the parameters to measurement data.
    Fit(Options),
    /// Report the numerical rank of the Jacobian at the initial guess.
    Rank(Options),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Vareq,
    Fd,
}

#[derive(Clone, Debug, PartialEq)]
struct Grid {
    t0: f64,
    t_end: f64,
    n: usize,
}

impl Grid {
    fn times(&self) -> Vec<f64> {
        let step = (self.t_end - self.t0) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.t_end } else { self.t0 + step * i as f64 })
            .collect()
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [t0, t_end, n] = parts[..] else {
        return Err("expected t0:tend:n".into());
    };
    let t0: f64 = t0.parse().map_err(|_| format!("invalid t0 '{t0}'"))?;
    let t_end: f64 = t_end.parse().map_err(|_| format!("invalid tend '{t_end}'"))?;
    let n: usize = n.parse().map_err(|_| format!("invalid point count '{n}'"))?;
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err("tend must exceed t0".into());
    }
    if n < 2 {
        return Err("a grid needs at least 2 points".into());
    }
    Ok(Grid { t0, t_end, n })
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, found '{s}'")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, found '{s}'")),
    }
}

#[derive(Args, Debug)]
struct Options {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Measurement CSV (fit and rank).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = positive)]
    rtol: Option<f64>,
    #[arg(long, value_parser = positive)]
    atol: Option<f64>,
    #[arg(long, value_parser = positive, default_value_t = 1e-4)]
    xtol: f64,
    #[arg(long, value_parser = positive, default_value_t = 1e-4)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1)]
    rank_min: usize,
    /// Sensitivity method.
    #[arg(long, visible_alias = "method", value_enum, default_value_t = Method::Vareq)]
    jacobian: Method,
    /// Output grid `t0:tend:n`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
    /// Relative Gaussian noise added to the data.
    #[arg(long, value_parser = non_negative)]
    add_noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameters to report (sens), comma separated.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<String>>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn integration(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INTEGRATION,
        message: e.to_string(),
    }
}

type Outcome = Result<(), Failure>;

/// Runs the command line `args` (program name first) and returns the exit
/// code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(o) => simulate(o, out),
        Command::Sens(o) => sens(o, out),
        Command::Fit(o) => fit(o, out),
        Command::Rank(o) => rank(o, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "kinid: {}", f.message);
            f.code
        }
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))
}

fn load_model(o: &Options) -> Result<KineticModel, Failure> {
    let text = read_file(&o.model)?;
    parse_model(&text).map_err(|e| input(format!("{}: {e}", o.model.display())))
}

fn load_data(o: &Options, model: &KineticModel) -> Result<ExperimentData, Failure> {
    let Some(path) = &o.data else {
        return Err(input("this command requires --data"));
    };
    let text = read_file(path)?;
    let mut data = read_data(model, text.as_bytes()).map_err(|e| input(format!("{}: {e}", path.display())))?;
    if let Some(sigma) = o.add_noise {
        add_noise(&mut data, sigma, o.seed);
    }
    Ok(data)
}

fn integrator_config(o: &Options) -> Result<IntegratorConfig, Failure> {
    let mut cfg = IntegratorConfig::default();
    if let Some(rtol) = o.rtol {
        cfg.rtol = rtol;
    }
    if let Some(atol) = o.atol {
        cfg.atol = atol;
    }
    cfg.validate().map_err(|e| input(e.to_string()))?;
    Ok(cfg)
}

fn method(o: &Options) -> JacobianMethod {
    match o.jacobian {
        Method::Vareq => JacobianMethod::Variational,
        Method::Fd => JacobianMethod::FiniteDifference { feedback: true },
    }
}

/// Declared experiments, or one spanning the grid from the model's initial
/// state.
fn experiments(o: &Options, model: &KineticModel) -> Result<Vec<Experiment>, Failure> {
    if !model.experiments().is_empty() {
        return Ok(model.experiments().to_vec());
    }
    match &o.grid {
        Some(g) => Ok(vec![Experiment {
            name: "default".into(),
            t0: g.t0,
            t_end: g.t_end,
            initial: model.initial_state(),
        }]),
        None => Err(input("no time span: declare @experiments in the model or pass --grid")),
    }
}

fn grid_times(o: &Options, e: &Experiment) -> Vec<f64> {
    o.grid.as_ref().map_or_else(Vec::new, |g| {
        g.times().into_iter().filter(|t| *t >= e.t0 && *t <= e.t_end).collect()
    })
}

fn output_dir(o: &Options) -> Result<&Path, Failure> {
    fs::create_dir_all(&o.out).map_err(|e| input(format!("cannot create {}: {e}", o.out.display())))?;
    Ok(&o.out)
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| input(format!("cannot write {}: {e}", path.display())))
}

fn with_experiment(index: usize, e: IntegratorError) -> IntegratorError {
    IntegratorError::Experiment {
        index,
        source: Box::new(e),
    }
}

fn simulate(o: &Options, out: &mut dyn Write) -> Outcome {
    let model = load_model(o)?;
    let cfg = integrator_config(o)?;
    let experiments = experiments(o, &model)?;
    let dir = output_dir(o)?;
    let p = model.nominal_parameters();
    for (index, e) in experiments.iter().enumerate() {
        // requested times become grid points, so every row is an accepted point
        let tr = integrate_experiment(&model, &p, e, &grid_times(o, e), &cfg, None)
            .map_err(|err| integration(with_experiment(index, err)))?;
        let mut csv = String::from("time");
        for s in model.species() {
            csv.push(',');
            csv.push_str(&s.name);
        }
        csv.push('\n');
        for (t, y) in tr.points() {
            csv.push_str(&t.to_string());
            for v in y {
                csv.push(',');
                csv.push_str(&v.to_string());
            }
            csv.push('\n');
        }
        let name = format!("trajectory_{}.csv", e.name);
        write_output(dir, &name, &csv)?;
        let _ = writeln!(out, "wrote {}", dir.join(&name).display());
    }
    Ok(())
}

fn sens(o: &Options, out: &mut dyn Write) -> Outcome {
    let model = load_model(o)?;
    let cfg = integrator_config(o)?;
    let experiments = experiments(o, &model)?;
    let columns: Vec<usize> = match &o.params {
        None => (0..model.n_parameters()).collect(),
        Some(names) => names
            .iter()
            .map(|n| model.parameter_index(n).ok_or_else(|| input(format!("unknown parameter '{n}'"))))
            .collect::<Result<_, _>>()?,
    };
    let dir = output_dir(o)?;
    let p = model.nominal_parameters();
    for (index, e) in experiments.iter().enumerate() {
        let raw = sensitivities(&model, &p, e, &grid_times(o, e), &cfg, method(o))
            .map_err(|err| integration(with_experiment(index, err)))?;
        let scaled = scale_sensitivities(&raw, &model).map_err(|u| {
            input(format!(
                "{} (species '{}'; give it a positive thres)",
                u,
                model.species()[u.species].name
            ))
        })?;
        let mut csv = String::from("time,species,parameter,value\n");
        for (t, s) in scaled.times.iter().zip(&scaled.values) {
            for (i, sp) in model.species().iter().enumerate() {
                for &j in &columns {
                    csv.push_str(&format!("{t},{},{},{}\n", sp.name, model.parameters()[j].name, s[(i, j)]));
                }
            }
        }
        let name = format!("sensitivity_{}.csv", e.name);
        write_output(dir, &name, &csv)?;
        let _ = writeln!(out, "wrote {}", dir.join(&name).display());
    }
    Ok(())
}

fn gn_config(o: &Options, q: usize) -> Result<GnConfig, Failure> {
    let cfg = GnConfig {
        xtol: o.xtol,
        lambda_min: o.lambda_min,
        rank_min: o.rank_min,
        jacobian: method(o),
        integrator: integrator_config(o)?,
        ..GnConfig::default()
    };
    cfg.validate(q).map_err(|e| input(e.to_string()))?;
    Ok(cfg)
}

fn fit(o: &Options, out: &mut dyn Write) -> Outcome {
    let model = load_model(o)?;
    let data = load_data(o, &model)?;
    let cfg = gn_config(o, model.n_parameters())?;
    let dir = output_dir(o)?;
    let u0 = model
        .to_internal(&model.nominal_parameters())
        .map_err(|e| input(format!("initial guess: {e}")))?;

    let mut protocol = protocol_header() + "\n";
    let _ = writeln!(out, "{}", protocol_header());
    let _ = out.flush();
    let result = fit_with_observer(&model, &data, &u0, &cfg, &mut |row| {
        let line = protocol_line(row);
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        protocol.push_str(&line);
        protocol.push('\n');
    });
    write_output(dir, "protocol.txt", &protocol)?;
    let report = result.map_err(|e| match e {
        FitError::Evaluation { .. } | FitError::NonFiniteJacobian { .. } => integration(e),
        other => input(other.to_string()),
    })?;

    let p = report.parameters(&model);
    write_output(dir, "parameters.txt", &parameters_fragment(&model, &p))?;
    let names: Vec<&str> = model.parameters().iter().map(|p| p.name.as_str()).collect();
    match fit_statistics(&report, &model) {
        Ok(st) => {
            let summary = FitSummary {
                names: names.clone(),
                truth: None,
                xtol: cfg.xtol,
                iterations: report.iterations,
                verdict: report.verdict,
            };
            let text = statistics_text(&st, &summary);
            let _ = write!(out, "\n{text}");
            write_output(dir, "statistics.txt", &text)?;
            write_output(dir, "statistics.csv", &statistics_csv(&st, &names))?;
        }
        Err(e) => {
            let _ = writeln!(out, "\nno statistics: {e}");
        }
    }
    match report.verdict {
        Verdict::Converged { .. } => Ok(()),
        verdict => Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("fit did not converge: {verdict}"),
        }),
    }
}

fn rank(o: &Options, out: &mut dyn Write) -> Outcome {
    let model = load_model(o)?;
    let data = load_data(o, &model)?;
    let cfg = integrator_config(o)?;
    let u0 = model
        .to_internal(&model.nominal_parameters())
        .map_err(|e| input(format!("initial guess: {e}")))?;
    let jac = jacobian_at(&model, &u0, &data, &cfg, method(o)).map_err(integration)?;
    let scaling: Vec<f64> = u0
        .iter()
        .zip(model.parameter_thresholds())
        .map(|(u, t)| u.abs().max(t))
        .collect();
    let js = jac.scale_columns(&scaling);
    let qr = PivotedQr::new(&js).map_err(|_| integration("Jacobian has non-finite entries"))?;
    let rank = qr.numerical_rank(o.xtol);
    let (sc, deficient) = qr.subcondition(o.xtol);
    let _ = writeln!(out, "measurements L = {}", js.rows());
    let _ = writeln!(out, "parameters q = {}", js.cols());
    let _ = writeln!(out, "numerical rank at delta = {}: {rank}", sci(o.xtol, 1));
    let _ = writeln!(out, "subcondition: {}", sci(sc, 3));
    let _ = writeln!(out, "rank deficient: {}", if deficient { "yes" } else { "no" });
    Ok(())
}
