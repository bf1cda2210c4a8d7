//! JSON run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use varidescent_core::problem::Dirichlet;
use varidescent_core::{
    builtin_problem, parse_expression, AnalyticExpr, BoundaryMode, BoxDomain, IsoperimetricConstraint, OptimizerConfig,
    Problem, UniformGrid,
};

use crate::CliError;

pub const DEFAULT_SOLUTION_CSV: &str = "solution.csv";
pub const DEFAULT_CONVERGENCE_LOG: &str = "convergence.jsonl";

const TOP_KEYS: &[&str] = &[
    "domain",
    "cells",
    "problem",
    "params",
    "d",
    "boundary_mode",
    "max_iters",
    "tol_grad",
    "armijo_c1",
    "shrink",
    "step0",
    "min_step",
    "isoperimetric",
    "lift",
    "lift_gradient",
    "exact_solution",
    "solution_csv",
    "convergence_log",
    "seed",
];
const DOMAIN_KEYS: &[&str] = &["lower", "upper"];
const ISOPERIMETRIC_KEYS: &[&str] = &["g0", "g1", "g2", "c"];
const REQUIRED_KEYS: &[&str] = &["domain", "cells", "problem"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIsoperimetric {
    #[serde(default)]
    g0: Option<String>,
    #[serde(default)]
    g1: Option<String>,
    #[serde(default)]
    g2: Option<String>,
    c: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: RawDomain,
    cells: Vec<usize>,
    problem: String,
    #[serde(default)]
    params: BTreeMap<String, String>,
    d: Option<usize>,
    boundary_mode: Option<String>,
    max_iters: Option<usize>,
    tol_grad: Option<f64>,
    armijo_c1: Option<f64>,
    shrink: Option<f64>,
    step0: Option<f64>,
    min_step: Option<f64>,
    isoperimetric: Option<RawIsoperimetric>,
    lift: Option<Vec<String>>,
    lift_gradient: Option<Vec<String>>,
    exact_solution: Option<Vec<String>>,
    solution_csv: Option<PathBuf>,
    convergence_log: Option<PathBuf>,
    seed: Option<u64>,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem_name: String,
    pub grid: UniformGrid,
    pub problem: Problem,
    pub optimizer: OptimizerConfig,
    pub isoperimetric: Option<IsoperimetricConstraint>,
    pub solution_csv: PathBuf,
    pub convergence_log: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Number of solution components `d`.
    pub fn components(&self) -> usize {
        self.problem.components()
    }
}

/// Reads and validates a config file. Relative output paths resolve
/// against the config file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        CliError::Config(message) => CliError::Config(format!("{}: {message}", path.display())),
        other => other,
    })
}

/// Parses config text; `base` anchors relative output paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let object = value
        .as_object()
        .ok_or_else(|| CliError::Config("top level must be a JSON object".into()))?;
    check_keys(object, TOP_KEYS, "")?;
    for key in REQUIRED_KEYS {
        if !object.contains_key(*key) {
            return Err(CliError::Config(format!("missing required key `{key}`")));
        }
    }
    if let Some(Value::Object(domain)) = object.get("domain") {
        check_keys(domain, DOMAIN_KEYS, "domain.")?;
    }
    if let Some(Value::Object(iso)) = object.get("isoperimetric") {
        check_keys(iso, ISOPERIMETRIC_KEYS, "isoperimetric.")?;
    }
    let raw: RawConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    build(raw, base)
}

fn check_keys(object: &serde_json::Map<String, Value>, known: &[&str], prefix: &str) -> Result<(), CliError> {
    for key in object.keys() {
        if known.contains(&key.as_str()) {
            continue;
        }
        let mut message = format!("unknown key `{prefix}{key}`");
        if let Some(s) = suggest(key, known) {
            message.push_str(&format!("; did you mean `{prefix}{s}`?"));
        }
        return Err(CliError::Config(message));
    }
    Ok(())
}

/// Closest known key: exact match after dropping case and underscores,
/// otherwise the nearest within edit distance 2.
fn suggest<'a>(key: &str, known: &[&'a str]) -> Option<&'a str> {
    let normalize = |s: &str| s.to_ascii_lowercase().replace(['_', '-'], "");
    let target = normalize(key);
    if let Some(k) = known.iter().find(|k| normalize(k) == target) {
        return Some(k);
    }
    known
        .iter()
        .map(|k| (edit_distance(&target, &normalize(k)), *k))
        .filter(|(d, _)| *d <= 2)
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diagonal = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (above + 1).min(row[j] + 1).min(diagonal + usize::from(ca != *cb));
            diagonal = above;
        }
    }
    row[b.len()]
}

fn expr(source: &str, rank: usize, key: &str) -> Result<AnalyticExpr, CliError> {
    parse_expression(source, rank).map_err(|e| CliError::Config(format!("`{key}`: {e}")))
}

fn exprs(sources: &[String], rank: usize, key: &str) -> Result<Vec<AnalyticExpr>, CliError> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| expr(s, rank, &format!("{key}[{i}]")))
        .collect()
}

fn core(key: &str) -> impl Fn(varidescent_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("`{key}`: {e}"))
}

fn build(raw: RawConfig, base: &Path) -> Result<RunConfig, CliError> {
    let rank = raw.domain.lower.len();
    if raw.domain.upper.len() != rank {
        return Err(CliError::Config(format!(
            "`domain.lower` has {rank} entries but `domain.upper` has {}",
            raw.domain.upper.len()
        )));
    }
    if raw.cells.len() != rank {
        return Err(CliError::Config(format!(
            "`cells` has {} entries but the domain has rank {rank}",
            raw.cells.len()
        )));
    }
    let domain = BoxDomain::new(raw.domain.lower, raw.domain.upper).map_err(core("domain"))?;
    let grid = UniformGrid::new(domain, raw.cells).map_err(core("cells"))?;

    let mut problem = match (raw.problem.as_str(), raw.d) {
        ("dirichlet", Some(d)) if d > 1 && raw.params.is_empty() => {
            Problem::new(rank, Arc::new(Dirichlet { components: d }))
                .and_then(|p| p.with_exact_solution(vec![AnalyticExpr::constant(0.0); d]))
        }
        (name, _) => builtin_problem(name, &raw.params, rank),
    }
    .map_err(core("problem"))?;
    if let Some(d) = raw.d {
        if d != problem.components() {
            return Err(CliError::Config(format!(
                "`d` is {d} but problem `{}` has {} components",
                raw.problem,
                problem.components()
            )));
        }
    }
    let d = problem.components();

    match (&raw.lift, &raw.lift_gradient) {
        (Some(values), Some(gradient)) => {
            let values = exprs(values, rank, "lift")?;
            let gradient = exprs(gradient, rank, "lift_gradient")?;
            problem = problem.with_lift(values, gradient).map_err(core("lift"))?;
        }
        (None, None) => {}
        _ => {
            return Err(CliError::Config(
                "`lift` and `lift_gradient` must be given together".into(),
            ))
        }
    }
    if let Some(exact) = &raw.exact_solution {
        problem = problem
            .with_exact_solution(exprs(exact, rank, "exact_solution")?)
            .map_err(core("exact_solution"))?;
    }
    if let Some(mode) = &raw.boundary_mode {
        let mode: BoundaryMode = mode.parse().map_err(core("boundary_mode"))?;
        problem = problem.with_boundary_mode(mode).map_err(core("boundary_mode"))?;
    }

    let defaults = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        max_iters: raw.max_iters.unwrap_or(defaults.max_iters),
        tol_grad: raw.tol_grad.unwrap_or(defaults.tol_grad),
        armijo_c1: raw.armijo_c1.unwrap_or(defaults.armijo_c1),
        shrink: raw.shrink.unwrap_or(defaults.shrink),
        step0: raw.step0.unwrap_or(defaults.step0),
        min_step: raw.min_step.unwrap_or(defaults.min_step),
    };
    optimizer.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let isoperimetric = match raw.isoperimetric {
        Some(iso) => {
            let field = |s: &Option<String>, key: &str| expr(s.as_deref().unwrap_or("0"), rank, key);
            if rank != 2 || d != 1 {
                return Err(CliError::Config(format!(
                    "`isoperimetric` needs a 2-D scalar problem, got rank {rank} with d = {d}"
                )));
            }
            Some(IsoperimetricConstraint {
                g0: field(&iso.g0, "isoperimetric.g0")?,
                g1: field(&iso.g1, "isoperimetric.g1")?,
                g2: field(&iso.g2, "isoperimetric.g2")?,
                c: iso.c,
            })
        }
        None => None,
    };

    let resolve = |p: Option<PathBuf>, default: &str| {
        let p = p.unwrap_or_else(|| PathBuf::from(default));
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    Ok(RunConfig {
        problem_name: raw.problem,
        grid,
        problem,
        optimizer,
        isoperimetric,
        solution_csv: resolve(raw.solution_csv, DEFAULT_SOLUTION_CSV),
        convergence_log: resolve(raw.convergence_log, DEFAULT_CONVERGENCE_LOG),
        seed: raw.seed.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config_str(text, Path::new("/tmp"))
    }

    const MINIMAL: &str = r#"{"domain": {"lower": [0, 0], "upper": [1, 1]}, "cells": [8, 8], "problem": "poisson"}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.components(), 1);
        assert_eq!(c.problem.boundary_mode(), BoundaryMode::AllSides);
        assert_eq!(c.optimizer.max_iters, 500);
        assert_eq!(c.optimizer.tol_grad, 1e-6);
        assert_eq!(c.solution_csv, Path::new("/tmp/solution.csv"));
        assert!(c.isoperimetric.is_none());
    }

    #[test]
    fn unknown_key_suggests_snake_case() {
        let text = MINIMAL.replace("\"problem\"", "\"tolGrad\": 1e-8, \"problem\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("tolGrad") && err.contains("`tol_grad`"), "{err}");
    }

    #[test]
    fn nested_unknown_key_is_rejected() {
        let text = MINIMAL.replace("\"upper\"", "\"uper\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("domain.uper") && err.contains("domain.upper"), "{err}");
    }

    #[test]
    fn cells_length_mismatch_names_both() {
        let text = MINIMAL.replace("[8, 8]", "[8, 8, 8]");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn missing_required_key() {
        let err = parse(r#"{"domain": {"lower": [0], "upper": [1]}, "cells": [4]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("`problem`"), "{err}");
    }

    #[test]
    fn expression_error_names_key_path() {
        let text = MINIMAL.replace("\"poisson\"", "\"poisson\", \"params\": {\"g\": \"sin(\"}");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("`g`"), "{err}");
        let text = MINIMAL.replace(
            "\"poisson\"",
            "\"poisson\", \"isoperimetric\": {\"g1\": \"x9\", \"c\": 0}",
        );
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("isoperimetric.g1"), "{err}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let text = MINIMAL.replace("[8, 8]", "\"eight\"");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn d_must_match_problem() {
        let text = MINIMAL.replace("\"poisson\"", "\"poisson\", \"d\": 2");
        assert!(parse(&text).unwrap_err().to_string().contains("`d`"));
        let text = MINIMAL.replace("\"poisson\"", "\"dirichlet\", \"d\": 3");
        assert_eq!(parse(&text).unwrap().components(), 3);
        let text = MINIMAL.replace("\"poisson\"", "\"coupled_vector\"");
        assert_eq!(parse(&text).unwrap().components(), 2);
    }

    #[test]
    fn lift_requires_gradient() {
        let text = MINIMAL.replace("\"poisson\"", "\"poisson\", \"lift\": [\"x1\"]");
        assert!(parse(&text).unwrap_err().to_string().contains("lift_gradient"));
        let text = MINIMAL.replace(
            "\"poisson\"",
            "\"dirichlet\", \"lift\": [\"x1\"], \"lift_gradient\": [\"1\", \"0\"], \"exact_solution\": [\"x1\"]",
        );
        let c = parse(&text).unwrap();
        assert!(c.problem.exact_solution().is_some());
    }

    #[test]
    fn boundary_mode_and_optimizer_fields() {
        let text = MINIMAL.replace(
            "\"poisson\"",
            "\"poisson\", \"boundary_mode\": \"three_sides\", \"max_iters\": 7, \"shrink\": 0.25",
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.problem.boundary_mode(), BoundaryMode::ThreeSides2D);
        assert_eq!(c.optimizer.max_iters, 7);
        assert_eq!(c.optimizer.shrink, 0.25);
        let text = MINIMAL.replace("\"poisson\"", "\"poisson\", \"shrink\": 1.5");
        assert!(parse(&text).unwrap_err().to_string().contains("shrink"));
    }

    #[test]
    fn suggestion_distance() {
        assert_eq!(suggest("tolGrad", TOP_KEYS), Some("tol_grad"));
        assert_eq!(suggest("max_iter", TOP_KEYS), Some("max_iters"));
        assert_eq!(suggest("zzzzzz", TOP_KEYS), None);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
    }
}
