//! Line-oriented model file format.
//!
//! ```text
//! # decay with a dose at t = 1
//! @species
//! A = 1.0 [thres=1e-6]
//! @parameters
//! k = 2.0 [transform=exp]
//! @reactions
//! r1: A -> ∅ rate k
//! @observables
//! total = 1*A
//! @events
//! at t=1: A := A + 1
//! @experiments
//! e1: t0=0 tend=5 A=2
//! ```
//!
//! A section header may carry its first entry on the same line
//! (`@species A = 1.0`). Reaction rates are products of an optional numeric
//! factor and parameters (`rate 0.5*k1*k2`); `exp(S)=e` overrides the
//! exponent of species `S` in the rate law. Events at the same time are
//! merged; several assignments may share one line, separated by `;`.

use std::collections::HashMap;

use kinid_core::model::{
    AffineExpr, BreakpointEvent, Experiment, Observable, Parameter, Reaction, Species,
    DEFAULT_PARAMETER_THRESHOLD, DEFAULT_SPECIES_THRESHOLD,
};
use kinid_core::{KineticModel, ModelError, Transform};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelFileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ModelFileError> {
    Err(ModelFileError::Syntax {
        line,
        message: message.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Section {
    Species,
    Parameters,
    Reactions,
    Observables,
    Events,
    Experiments,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "species" => Section::Species,
            "parameters" => Section::Parameters,
            "reactions" => Section::Reactions,
            "observables" => Section::Observables,
            "events" => Section::Events,
            "experiments" => Section::Experiments,
            _ => return None,
        })
    }
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<KineticModel, ModelFileError> {
    let mut entries: HashMap<Section, Vec<(usize, String)>> = HashMap::new();
    let mut current = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let body = if let Some(rest) = content.strip_prefix('@') {
            let (name, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            match Section::parse(name) {
                Some(s) => current = Some(s),
                None => return err(line, format!("unknown section '@{name}'")),
            }
            tail.trim()
        } else {
            content
        };
        if body.is_empty() {
            continue;
        }
        match current {
            Some(s) => entries.entry(s).or_default().push((line, body.to_string())),
            None => return err(line, "entry outside of any section"),
        }
    }
    let section = |s: Section| entries.get(&s).map(Vec::as_slice).unwrap_or(&[]);

    let mut names = Names::default();
    let mut species = Vec::new();
    for (line, body) in section(Section::Species) {
        let (name, value, opts) = declaration(*line, body)?;
        names.declare(*line, &name, Symbol::Species(species.len()))?;
        let mut threshold = DEFAULT_SPECIES_THRESHOLD;
        for (key, v) in opts {
            match key.as_str() {
                "thres" => threshold = number(*line, &v)?,
                _ => return err(*line, format!("unknown species option '{key}'")),
            }
        }
        if value < 0.0 {
            return err(*line, format!("species '{name}' has a negative initial value"));
        }
        species.push(Species {
            name,
            initial: value,
            threshold,
        });
    }
    if species.is_empty() {
        return err(text.lines().count().max(1), "model declares no species");
    }

    let mut parameters = Vec::new();
    for (line, body) in section(Section::Parameters) {
        let (name, value, opts) = declaration(*line, body)?;
        names.declare(*line, &name, Symbol::Parameter(parameters.len()))?;
        let mut threshold = DEFAULT_PARAMETER_THRESHOLD;
        let mut transform = Transform::Identity;
        for (key, v) in opts {
            match key.as_str() {
                "thres" => threshold = number(*line, &v)?,
                "transform" => transform = parse_transform(*line, &v)?,
                _ => return err(*line, format!("unknown parameter option '{key}'")),
            }
        }
        if threshold <= 0.0 {
            return err(*line, format!("parameter '{name}' needs a positive threshold"));
        }
        if transform.backward(value).is_err() {
            return err(*line, format!("value {value} of '{name}' is outside the range of its transform"));
        }
        parameters.push(Parameter {
            name,
            value,
            threshold,
            transform,
        });
    }
    if parameters.is_empty() {
        return err(text.lines().count().max(1), "model declares no parameters");
    }

    let mut observables = Vec::new();
    for (line, body) in section(Section::Observables) {
        let Some((name, expr)) = body.split_once('=') else {
            return err(*line, "expected 'name = c1*S1 + c2*S2'");
        };
        let name = identifier(*line, name.trim())?;
        let affine = affine(*line, expr, &names)?;
        if affine.constant != 0.0 || !affine.parameters.is_empty() {
            return err(*line, "observables are linear combinations of species only");
        }
        if affine.species.iter().all(|(_, c)| *c == 0.0) {
            return err(*line, format!("observable '{name}' has no nonzero coefficient"));
        }
        names.declare(*line, &name, Symbol::Observable)?;
        observables.push(Observable {
            name,
            coefficients: affine.species,
        });
    }

    let mut reactions = Vec::new();
    for (line, body) in section(Section::Reactions) {
        reactions.push(reaction(*line, body, reactions.len(), &names)?);
    }

    let mut events: Vec<(usize, BreakpointEvent)> = Vec::new();
    for (line, body) in section(Section::Events) {
        let (time, assignments) = event(*line, body, &names)?;
        match events.last_mut() {
            Some((_, last)) if last.time == time => {
                for (s, expr) in assignments {
                    if last.assignments.iter().any(|(t, _)| *t == s) {
                        return err(*line, format!("species '{}' assigned twice at t={time}", species[s].name));
                    }
                    last.assignments.push((s, expr));
                }
            }
            Some((_, last)) if time < last.time => {
                return err(
                    *line,
                    format!("non-increasing event times: {time} does not follow {}", last.time),
                );
            }
            _ => events.push((
                *line,
                BreakpointEvent {
                    time,
                    assignments,
                },
            )),
        }
    }

    let mut experiments: Vec<Experiment> = Vec::new();
    for (line, body) in section(Section::Experiments) {
        let e = experiment(*line, body, &names, &species)?;
        if experiments.iter().any(|x| x.name == e.name) {
            return err(*line, format!("duplicate experiment '{}'", e.name));
        }
        experiments.push(e);
    }

    let model = KineticModel::new(
        species,
        parameters,
        reactions,
        observables,
        events.into_iter().map(|(_, e)| e).collect(),
    )?;
    Ok(model.with_experiments(experiments)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Symbol {
    Species(usize),
    Parameter(usize),
    Observable,
}

#[derive(Default)]
struct Names(HashMap<String, Symbol>);

impl Names {
    fn declare(&mut self, line: usize, name: &str, symbol: Symbol) -> Result<(), ModelFileError> {
        if self.0.insert(name.to_string(), symbol).is_some() {
            return err(line, format!("duplicate name '{name}'"));
        }
        Ok(())
    }

    fn get(&self, name: &str) -> Option<Symbol> {
        self.0.get(name).copied()
    }

    fn species(&self, line: usize, name: &str) -> Result<usize, ModelFileError> {
        match self.get(name) {
            Some(Symbol::Species(i)) => Ok(i),
            _ => err(line, format!("unknown species '{name}'")),
        }
    }

    fn parameter(&self, line: usize, name: &str) -> Result<usize, ModelFileError> {
        match self.get(name) {
            Some(Symbol::Parameter(j)) => Ok(j),
            _ => err(line, format!("unknown parameter '{name}'")),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn identifier(line: usize, s: &str) -> Result<String, ModelFileError> {
    if is_identifier(s) {
        Ok(s.to_string())
    } else {
        err(line, format!("invalid name '{s}'"))
    }
}

fn number(line: usize, s: &str) -> Result<f64, ModelFileError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => err(line, format!("invalid number '{}'", s.trim())),
    }
}

/// Splits on whitespace outside parentheses and drops option brackets.
fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if (c.is_whitespace() && depth == 0) || c == '[' || c == ']' {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else if !c.is_whitespace() {
            current.push(c);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn option(line: usize, token: &str) -> Result<(String, String), ModelFileError> {
    match token.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => err(line, format!("expected 'key=value', found '{token}'")),
    }
}

type Options = Vec<(String, String)>;

/// `name = value [key=value ...]`.
fn declaration(line: usize, body: &str) -> Result<(String, f64, Options), ModelFileError> {
    let Some((name, rest)) = body.split_once('=') else {
        return err(line, "expected 'name = value'");
    };
    let name = identifier(line, name.trim())?;
    let toks = tokens(rest);
    let Some(first) = toks.first() else {
        return err(line, format!("missing value for '{name}'"));
    };
    let value = number(line, first)?;
    let opts = toks[1..].iter().map(|t| option(line, t)).collect::<Result<_, _>>()?;
    Ok((name, value, opts))
}

fn parse_transform(line: usize, s: &str) -> Result<Transform, ModelFileError> {
    let args = |inner: &str| -> Result<Vec<f64>, ModelFileError> {
        inner.split(',').map(|a| number(line, a)).collect()
    };
    let call = |prefix: &str| {
        s.strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    };
    let t = match s {
        "identity" | "none" => Transform::Identity,
        "exp" => Transform::Exponential,
        _ => {
            if let Some(inner) = call("sin") {
                match args(inner)?[..] {
                    [lower, upper] if lower < upper => Transform::Sinusoidal { lower, upper },
                    [_, _] => return err(line, "sin(A,B) requires A < B"),
                    _ => return err(line, "sin transform takes two bounds"),
                }
            } else if let Some(inner) = call("sqrtu") {
                match args(inner)?[..] {
                    [bound] => Transform::RootSquareUpper { bound },
                    _ => return err(line, "sqrtu transform takes one bound"),
                }
            } else if let Some(inner) = call("sqrtl") {
                match args(inner)?[..] {
                    [bound] => Transform::RootSquareLower { bound },
                    _ => return err(line, "sqrtl transform takes one bound"),
                }
            } else {
                return err(line, format!("unknown transform '{s}'"));
            }
        }
    };
    Ok(t)
}

/// Splits an expression into signed terms, keeping exponent signs such as
/// the one in `2.5e-3*A`.
fn signed_terms(line: usize, expr: &str) -> Result<Vec<(f64, String)>, ModelFileError> {
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return err(line, "empty expression");
    }
    let mut terms = Vec::new();
    let mut sign = 1.0;
    let mut current = String::new();
    for c in compact.chars() {
        if (c == '+' || c == '-') && !exponent_pending(&current) {
            if !current.is_empty() {
                terms.push((sign, std::mem::take(&mut current)));
                sign = 1.0;
            } else if !terms.is_empty() || sign < 0.0 {
                // a second sign in a row, e.g. "A+-B"
                if c == '+' && sign > 0.0 && terms.is_empty() {
                    continue;
                }
            }
            if c == '-' {
                sign = -sign;
            }
        } else {
            current.push(c);
        }
    }
    if current.is_empty() {
        return err(line, format!("expression '{expr}' ends with an operator"));
    }
    terms.push((sign, current));
    Ok(terms)
}

fn exponent_pending(term: &str) -> bool {
    let factor = term.rsplit('*').next().unwrap_or("");
    let Some(mantissa) = factor.strip_suffix(['e', 'E']) else {
        return false;
    };
    !mantissa.is_empty()
        && mantissa.chars().all(|c| c.is_ascii_digit() || c == '.')
        && mantissa.chars().any(|c| c.is_ascii_digit())
}

/// `c0 + c1*S1 − c2*p2 ...` over species and parameters.
fn affine(line: usize, expr: &str, names: &Names) -> Result<AffineExpr, ModelFileError> {
    let mut out = AffineExpr {
        constant: 0.0,
        species: Vec::new(),
        parameters: Vec::new(),
    };
    for (sign, term) in signed_terms(line, expr)? {
        let mut coef = sign;
        let mut symbol = None;
        for factor in term.split('*') {
            if is_identifier(factor) {
                if symbol.is_some() {
                    return err(line, format!("term '{term}' is not linear"));
                }
                symbol = Some(match names.get(factor) {
                    Some(s @ (Symbol::Species(_) | Symbol::Parameter(_))) => s,
                    _ => return err(line, format!("unknown name '{factor}'")),
                });
            } else {
                coef *= number(line, factor)?;
            }
        }
        let add = |list: &mut Vec<(usize, f64)>, i: usize| match list.iter_mut().find(|(k, _)| *k == i) {
            Some(entry) => entry.1 += coef,
            None => list.push((i, coef)),
        };
        match symbol {
            None => out.constant += coef,
            Some(Symbol::Species(i)) => add(&mut out.species, i),
            Some(Symbol::Parameter(j)) => add(&mut out.parameters, j),
            Some(Symbol::Observable) => unreachable!(),
        }
    }
    Ok(out)
}

/// `A + 2 B`, `2*A`, `∅` or nothing.
fn side(line: usize, s: &str, names: &Names) -> Result<Vec<(usize, u32)>, ModelFileError> {
    let s = s.trim();
    if s.is_empty() || s == "∅" || s == "0" {
        return Ok(Vec::new());
    }
    let mut out: Vec<(usize, u32)> = Vec::new();
    for term in s.split('+') {
        let term = term.trim();
        let (count, name) = match term.split_once(['*', ' ']) {
            Some((c, n)) => match c.trim().parse::<u32>() {
                Ok(c) if c >= 1 => (c, n.trim()),
                _ => return err(line, format!("invalid stoichiometric coefficient in '{term}'")),
            },
            None => {
                let digits = term.chars().take_while(char::is_ascii_digit).count();
                if digits > 0 {
                    match term[..digits].parse::<u32>() {
                        Ok(c) if c >= 1 => (c, &term[digits..]),
                        _ => return err(line, format!("invalid stoichiometric coefficient in '{term}'")),
                    }
                } else {
                    (1, term)
                }
            }
        };
        let s = names.species(line, name)?;
        match out.iter_mut().find(|(i, _)| *i == s) {
            Some(entry) => entry.1 += count,
            None => out.push((s, count)),
        }
    }
    Ok(out)
}

/// `[name:] lhs -> rhs rate [factor*]k1[*k2...] [exp(S)=e ...]`.
fn reaction(line: usize, body: &str, index: usize, names: &Names) -> Result<Reaction, ModelFileError> {
    let Some(arrow) = body.find("->") else {
        return err(line, "reaction needs '->'");
    };
    let (head, tail) = (&body[..arrow], &body[arrow + 2..]);
    let (name, lhs) = match head.split_once(':') {
        Some((n, l)) => (identifier(line, n.trim())?, l),
        None => (format!("r{}", index + 1), head),
    };
    let toks = tokens(tail);
    let Some(rate_at) = toks.iter().position(|t| t == "rate") else {
        return err(line, "reaction needs 'rate <parameter>'");
    };
    let rhs = toks[..rate_at].join(" ");
    let after = &toks[rate_at + 1..];
    let split = after.iter().position(|t| t.contains('=')).unwrap_or(after.len());
    let rate_expr: String = after[..split].concat();
    if rate_expr.is_empty() {
        return err(line, "missing rate expression");
    }
    let mut factor = 1.0;
    let mut rate_parameters = Vec::new();
    for f in rate_expr.split('*') {
        if is_identifier(f) {
            rate_parameters.push(names.parameter(line, f)?);
        } else {
            factor *= number(line, f)?;
        }
    }
    if rate_parameters.is_empty() {
        return err(line, "rate expression needs at least one parameter");
    }
    let mut exponents = Vec::new();
    for t in &after[split..] {
        let (key, value) = option(line, t)?;
        let Some(sp) = key.strip_prefix("exp(").and_then(|k| k.strip_suffix(')')) else {
            return err(line, format!("unknown reaction option '{key}'"));
        };
        exponents.push((names.species(line, sp.trim())?, number(line, &value)?));
    }
    Ok(Reaction {
        name,
        factor,
        rate_parameters,
        reactants: side(line, lhs, names)?,
        products: side(line, &rhs, names)?,
        exponents,
    })
}

/// `at t=v: S := expr [; S2 := expr]`.
fn event(line: usize, body: &str, names: &Names) -> Result<(f64, Vec<(usize, AffineExpr)>), ModelFileError> {
    let Some(rest) = body.strip_prefix("at") else {
        return err(line, "event must start with 'at t=...'");
    };
    let Some((when, what)) = rest.split_once(':') else {
        return err(line, "expected 'at t=v: S := expression'");
    };
    let Some(t) = when.trim().strip_prefix('t').map(str::trim).and_then(|r| r.strip_prefix('=')) else {
        return err(line, "expected 't=v' after 'at'");
    };
    let time = number(line, t)?;
    let mut assignments: Vec<(usize, AffineExpr)> = Vec::new();
    for part in what.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((target, expr)) = part.split_once(":=") else {
            return err(line, format!("expected 'S := expression', found '{part}'"));
        };
        let s = names.species(line, target.trim())?;
        if assignments.iter().any(|(i, _)| *i == s) {
            return err(line, format!("species '{}' assigned twice", target.trim()));
        }
        assignments.push((s, affine(line, expr, names)?));
    }
    if assignments.is_empty() {
        return err(line, "event without assignments");
    }
    Ok((time, assignments))
}

/// `name: t0=v tend=v [S=v ...]`.
fn experiment(line: usize, body: &str, names: &Names, species: &[Species]) -> Result<Experiment, ModelFileError> {
    let Some((name, rest)) = body.split_once(':') else {
        return err(line, "expected 'name: t0=v tend=v'");
    };
    let name = identifier(line, name.trim())?;
    let mut t0 = None;
    let mut t_end = None;
    let mut initial: Vec<f64> = species.iter().map(|s| s.initial).collect();
    for t in tokens(rest) {
        let (key, value) = option(line, &t)?;
        let v = number(line, &value)?;
        match key.as_str() {
            "t0" => t0 = Some(v),
            "tend" => t_end = Some(v),
            other => {
                let s = names.species(line, other)?;
                if v < 0.0 {
                    return err(line, format!("negative initial value for '{other}'"));
                }
                initial[s] = v;
            }
        }
    }
    let (Some(t0), Some(t_end)) = (t0, t_end) else {
        return err(line, format!("experiment '{name}' needs t0 and tend"));
    };
    if t_end <= t0 {
        return err(line, format!("experiment '{name}': tend must exceed t0"));
    }
    Ok(Experiment {
        name,
        t0,
        t_end,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: ModelFileError) -> usize {
        match e {
            ModelFileError::Syntax { line, .. } => line,
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_model() {
        let m = parse_model("@species\nA = 1.0\n@parameters\nk = 2.0\n@reactions\nA -> ∅ rate k\n").unwrap();
        assert_eq!((m.n_species(), m.n_parameters()), (1, 1));
        assert_eq!(m.rhs(&[1.0], &[2.0]).unwrap(), vec![-2.0]);
        assert_eq!(m.reactions()[0].name, "r1");
    }

    #[test]
    fn inline_section_entries_and_comments() {
        let m = parse_model("@species A = 1 # first\n@parameters k = 2 [thres=1e-3]\n@reactions A -> rate k\n").unwrap();
        assert_eq!(m.parameters()[0].threshold, 1e-3);
        assert!(m.reactions()[0].products.is_empty());
    }

    #[test]
    fn event_is_affine_in_state() {
        let m = parse_model(
            "@species\nA = 1\nB = 0\n@parameters\nk = 1\nd = 0.5\n@reactions\nA -> B rate k\n@events\nat t=1: A := A + 1; B := 2*B - d\n",
        )
        .unwrap();
        let e = &m.events()[0];
        assert_eq!(e.time, 1.0);
        assert_eq!(e.apply(&[3.0, 2.0], &[1.0, 0.5]), vec![4.0, 3.5]);
    }

    #[test]
    fn non_increasing_events_are_rejected() {
        let text = "@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> rate k\n@events\nat t=2: A := 1\nat t=1: A := 2\n";
        let e = parse_model(text).unwrap_err();
        assert!(e.to_string().contains("non-increasing event times"));
        assert_eq!(line_of(e), 9);
    }

    #[test]
    fn rates_stoichiometry_and_exponents() {
        let m = parse_model(
            "@species\nA = 2\nB = 3\nC = 0\n@parameters\nk1 = 2\nk2 = 3\n@reactions\nbind: 2 A + B -> C rate 0.5*k1*k2 [exp(B)=0.5]\n",
        )
        .unwrap();
        let r = &m.reactions()[0];
        assert_eq!(r.factor, 0.5);
        assert_eq!(r.rate_parameters, vec![0, 1]);
        assert_eq!(r.reactants, vec![(0, 2), (1, 1)]);
        // rate = 0.5·2·3·A²·√B
        let rate = 3.0 * 4.0 * 3f64.sqrt();
        let f = m.rhs(&[2.0, 3.0, 0.0], &[2.0, 3.0]).unwrap();
        assert!((f[2] - rate).abs() < 1e-12);
        assert!((f[0] + 2.0 * rate).abs() < 1e-12);
    }

    #[test]
    fn transforms_and_observables() {
        let m = parse_model(
            "@species\nA = 1\nB = 1\n@parameters\na = 2 [transform=exp]\nb = 0.5 transform=sin(0, 1)\nc = 1 transform=sqrtu(3)\nd = 1 transform=sqrtl(-1)\n@reactions\nA -> B rate a\n@observables\ntot = A + 2.5e-1*B\n",
        )
        .unwrap();
        assert_eq!(m.parameters()[0].transform, Transform::Exponential);
        assert_eq!(m.parameters()[1].transform, Transform::Sinusoidal { lower: 0.0, upper: 1.0 });
        assert_eq!(m.parameters()[2].transform, Transform::RootSquareUpper { bound: 3.0 });
        assert_eq!(m.parameters()[3].transform, Transform::RootSquareLower { bound: -1.0 });
        assert_eq!(m.observables()[0].coefficients, vec![(0, 1.0), (1, 0.25)]);
    }

    #[test]
    fn experiments_override_initial_values() {
        let m = parse_model(
            "@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> rate k\n@experiments\nlow: t0=0 tend=2\nhigh: t0=1 tend=3 A=4\n",
        )
        .unwrap();
        let e = m.experiments();
        assert_eq!(e[0].initial, vec![1.0]);
        assert_eq!((e[1].t0, e[1].t_end, e[1].initial[0]), (1.0, 3.0, 4.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("@species\nA = 1\nA = 2\n", 3, "duplicate name"),
            ("@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> B rate k\n", 6, "unknown species"),
            ("@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> rate q\n", 6, "unknown parameter"),
            ("A = 1\n", 1, "outside"),
            ("@species\nA = x\n", 2, "invalid number"),
            ("@bogus\n", 1, "unknown section"),
            ("@species\nA = 1\n@parameters\nk = -1 transform=exp\n", 4, "outside the range"),
            ("@species\nA = 1\n@parameters\nk = 1\n@reactions\nA -> A\n", 6, "rate"),
        ];
        for (text, line, needle) in cases {
            let e = parse_model(text).unwrap_err();
            let msg = e.to_string();
            assert!(msg.contains(needle), "{msg}");
            assert_eq!(line_of(e), line, "{msg}");
        }
    }

    #[test]
    fn exponent_signs_are_not_operators() {
        let names = {
            let mut n = Names::default();
            n.declare(1, "A", Symbol::Species(0)).unwrap();
            n.declare(1, "k", Symbol::Parameter(0)).unwrap();
            n
        };
        let e = affine(1, "1e-3*A - 2E+1 + k", &names).unwrap();
        assert_eq!(e.species, vec![(0, 1e-3)]);
        assert_eq!(e.constant, -20.0);
        assert_eq!(e.parameters, vec![(0, 1.0)]);
        let e = affine(1, "-A", &names).unwrap();
        assert_eq!(e.species, vec![(0, -1.0)]);
    }
}
