use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use tempfile::TempDir;

use varidescent_cli::{check_gradient_with, read_grid_csv};
use varidescent_core::problem::Poisson;
use varidescent_core::{builtin_problem, parse_expression, BoxDomain, Lagrangian, Placement, Problem, UniformGrid};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varidescent"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn poisson(extra: &str) -> String {
    format!(r#"{{"domain": {{"lower": [0, 0], "upper": [1, 1]}}, "cells": [16, 16], "problem": "poisson"{extra}}}"#)
}

#[test]
fn solve_default_poisson_writes_both_files() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", &poisson(""));
    let out = run(&["solve", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("GradientTolerance"), "{stdout}");
    assert!(stdout.contains("error vs exact"), "{stdout}");

    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,u1"));
    assert_eq!(lines.count(), 17 * 17);

    let log = fs::read_to_string(dir.path().join("convergence.jsonl")).unwrap();
    let mut previous = f64::INFINITY;
    for (i, line) in log.lines().enumerate() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        let object = value.as_object().unwrap();
        let mut keys: Vec<&str> = object.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["F", "grad_norm", "iter", "step"]);
        assert_eq!(object["iter"].as_u64(), Some(i as u64));
        let f = object["F"].as_f64().unwrap();
        assert!(f <= previous);
        previous = f;
    }
    assert!(log.lines().count() > 1);
}

#[test]
fn solution_csv_reads_back_on_the_node_grid() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", &poisson("").replace("[16, 16]", "[8, 8]"));
    assert_eq!(code(&run(&["solve", config.to_str().unwrap()])), 0);
    let grid = UniformGrid::new(BoxDomain::unit(2).unwrap(), vec![8, 8]).unwrap();
    let file = fs::File::open(dir.path().join("solution.csv")).unwrap();
    let u = read_grid_csv(std::io::BufReader::new(file), &grid, Placement::nodes(2)).unwrap();
    assert!(u.max_abs() > 0.9 && u.max_abs() < 1.1);
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = TempDir::new().unwrap();
    let a = write_config(
        dir.path(),
        "a.json",
        &poisson(r#", "solution_csv": "a.csv", "convergence_log": "a.jsonl""#),
    );
    let b = write_config(
        dir.path(),
        "b.json",
        &poisson(r#", "solution_csv": "b.csv", "convergence_log": "b.jsonl""#),
    );
    assert_eq!(code(&run(&["solve", a.to_str().unwrap()])), 0);
    let single = bin()
        .env("VARIDESCENT_THREADS", "1")
        .args(["solve", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&single), 0);
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
}

#[test]
fn max_iters_cap_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", &poisson(r#", "max_iters": 1"#));
    let out = run(&["solve", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", text(&out.stderr));
    let log = fs::read_to_string(dir.path().join("convergence.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn line_search_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &poisson(r#", "tol_grad": 0, "step0": 1, "min_step": 0.75"#),
    );
    let out = run(&["solve", config.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}{}", text(&out.stdout), text(&out.stderr));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &poisson(r#", "solution_csv": "missing/dir/solution.csv""#),
    );
    let out = run(&["solve", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("solution.csv"));
}

#[test]
fn unknown_key_exits_1_with_suggestion() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", &poisson(r#", "tolGrad": 1e-8"#));
    let out = run(&["solve", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("tol_grad"), "{}", text(&out.stderr));
}

#[test]
fn missing_config_exits_1() {
    assert_eq!(code(&run(&["solve", "/nonexistent/run.json"])), 1);
}

#[test]
fn invalid_thread_count_exits_1() {
    let out = bin()
        .env("VARIDESCENT_THREADS", "zero")
        .arg("list-problems")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(text(&out.stderr).contains("VARIDESCENT_THREADS"));
}

#[test]
fn isoperimetric_solve_runs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &poisson(r#", "isoperimetric": {"g0": "1", "c": 0.5}, "max_iters": 40"#),
    );
    let out = run(&["solve", config.to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 2), "{}", text(&out.stderr));
}

#[test]
fn partial_boundary_mode_solve_runs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        &poisson(r#", "boundary_mode": "three_sides", "max_iters": 20"#),
    );
    let out = run(&["solve", config.to_str().unwrap()]);
    assert!(matches!(code(&out), 0 | 2), "{}", text(&out.stderr));
}

#[test]
fn check_gradient_poisson_passes() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "run.json", &poisson(""));
    let out = run(&["check-gradient", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", text(&out.stdout));
    let stdout = text(&out.stdout);
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .count(),
        9
    );
    assert!(stdout.contains("PASS"));
}

#[test]
fn check_gradient_degenerate_dirichlet() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "run.json",
        r#"{"domain": {"lower": [0, 0], "upper": [1, 1]}, "cells": [8, 8], "problem": "dirichlet"}"#,
    );
    let out = run(&["check-gradient", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(text(&out.stdout).contains("note: G vanishes"));
}

/// Poisson with `df/du` off by a factor of two.
struct WrongGradU(Poisson);

impl Lagrangian for WrongGradU {
    fn components(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64], u: &[f64], z: &[f64]) -> f64 {
        self.0.value(x, u, z)
    }

    fn grad_u(&self, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]) {
        self.0.grad_u(x, u, z, out);
        out[0] *= 2.0;
    }

    fn grad_z(&self, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]) {
        self.0.grad_z(x, u, z, out);
    }
}

#[test]
fn check_gradient_detects_a_wrong_lagrangian() {
    let grid = UniformGrid::new(BoxDomain::unit(2).unwrap(), vec![16, 16]).unwrap();
    let good = builtin_problem("poisson", &Default::default(), 2).unwrap();
    assert!(check_gradient_with(&good, &grid, 7, &mut Vec::new()).unwrap().passes());

    let load = parse_expression("2*pi^2*sin(pi*x1)*sin(pi*x2)", 2).unwrap();
    let faulty = Problem::new(2, Arc::new(WrongGradU(Poisson { load, quartic: false }))).unwrap();
    let mut out = Vec::new();
    let check = check_gradient_with(&faulty, &grid, 7, &mut out).unwrap();
    assert!(!check.passes(), "{}", text(&out));
    assert!(text(&out).contains("FAIL"));
}

fn cells_csv(dir: &Path, name: &str, grid: &UniformGrid, value: impl Fn(&[f64]) -> f64) -> PathBuf {
    let f = varidescent_core::GridFunction::from_fn(grid, Placement::cells(grid.rank()), 1, |x, out| out[0] = value(x))
        .unwrap();
    let path = dir.join(name);
    let mut file = fs::File::create(&path).unwrap();
    varidescent_cli::write_grid_csv(&f, &mut file).unwrap();
    path
}

fn read_cells(path: &Path, grid: &UniformGrid) -> varidescent_core::GridFunction {
    let file = fs::File::open(path).unwrap();
    read_grid_csv(std::io::BufReader::new(file), grid, Placement::cells(grid.rank())).unwrap()
}

#[test]
fn project_ones_gives_zeros() {
    let dir = TempDir::new().unwrap();
    let grid = UniformGrid::new(BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(), vec![5, 6]).unwrap();
    let input = cells_csv(dir.path(), "ones.csv", &grid, |_| 1.0);
    let output = dir.path().join("out.csv");
    let out = run(&[
        "project",
        input.to_str().unwrap(),
        "--domain",
        "-1,1,0,3",
        "--cells",
        "5,6",
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(read_cells(&output, &grid).max_abs() <= 1e-15);
}

#[test]
fn project_is_idempotent_and_certified() {
    let dir = TempDir::new().unwrap();
    let grid = UniformGrid::new(
        BoxDomain::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.5]).unwrap(),
        vec![4, 5, 6],
    )
    .unwrap();
    let input = cells_csv(dir.path(), "field.csv", &grid, |x| {
        (3.1 * x[0] + x[1] * x[1] - 7.0 * x[2]).sin()
    });
    let args = |from: &Path| {
        vec![
            "project".to_string(),
            from.to_str().unwrap().to_string(),
            "--domain".into(),
            "0,1,0,2,0,0.5".into(),
            "--cells".into(),
            "4,5,6".into(),
        ]
    };
    let out = bin().args(args(&input)).output().unwrap();
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(
        stdout.contains("max slab residual") && stdout.contains("PASS"),
        "{stdout}"
    );
    let once = dir.path().join("field.projected.csv");
    let out = bin().args(args(&once)).output().unwrap();
    assert_eq!(code(&out), 0);
    let twice = dir.path().join("field.projected.projected.csv");
    let diff = read_cells(&twice, &grid).sub(&read_cells(&once, &grid)).unwrap();
    assert!(diff.max_abs() <= 1e-12);
}

#[test]
fn project_shape_mismatch_exits_1() {
    let dir = TempDir::new().unwrap();
    let grid = UniformGrid::new(BoxDomain::unit(2).unwrap(), vec![4, 4]).unwrap();
    let input = cells_csv(dir.path(), "field.csv", &grid, |x| x[0]);
    let out = run(&[
        "project",
        input.to_str().unwrap(),
        "--domain",
        "0,1,0,1",
        "--cells",
        "4,5",
    ]);
    assert_eq!(code(&out), 1);
    let out = run(&["project", input.to_str().unwrap(), "--domain", "0,1", "--cells", "4,4"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn list_problems_prints_builtins() {
    let out = run(&["list-problems"]);
    assert_eq!(code(&out), 0);
    let stdout = text(&out.stdout);
    for name in ["dirichlet", "poisson", "nonlinear_poisson", "coupled_vector"] {
        assert!(stdout.contains(name));
    }
}
