//! Command-line front end.
//!
//! Every subcommand runs the pipeline up to its own stage and writes the
//! artifacts of each stage it passes through, plus `report.json`.
//! Exit codes: 0 success, 1 usage or input fault, 2 verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cubes::CubeTree;
use crate::doubling::{verify_doubling, verify_doubling_exhaustive, DoublingReport};
use crate::error::{Error, Result};
use crate::generators::generate;
use crate::io::{parse_generator_arg, read_matrix_json, read_points_csv};
use crate::measure::{
    build_alpha_homogeneous, build_doubling_measure, build_self_similar, check_measure,
    MeasureAssignment, MeasureKind,
};
use crate::metric::{validate_metric, validate_pairs, FiniteMetricSpace, ValidationReport};
use crate::nets::{assign_parents, build_nets};
use crate::report::VerificationReport;
use crate::spectrum::{
    default_radii, dimension_bound, local_dimension_estimate, sample_by_mass, spectrum_window,
    tau_q_estimate, write_dimension_csv, write_spectrum_csv, Weighting,
};
use crate::cubes::{build_cubes, verify_tree_properties};

/// Full metric validation is cubic; above this size only pairs are checked.
const FULL_VALIDATION_MAX: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "netcube", version, about = "Nested cubes and doubling measures on finite metric spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build nets and the cube tree, and check the tree properties.
    Build(RunConfig),
    /// Build the tree and a measure on it.
    Measure(RunConfig),
    /// Build tree and measure, then sample the doubling bounds.
    Verify(RunConfig),
    /// Build tree and measure, then export spectrum and dimension estimates.
    Spectrum(RunConfig),
    /// Every stage.
    Run(RunConfig),
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["points", "matrix", "generate"])))]
#[command(group(clap::ArgGroup::new("builder").args(["p", "beta"])))]
pub struct RunConfig {
    /// Point cloud CSV: `id,x1,...,xd`, header optional.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Distance matrix JSON: `{"n": N, "d": [[...]]}`.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Generator spec, inline JSON or a file path.
    #[arg(long)]
    generate: Option<String>,
    /// Scale ratio, 0 < r < 1/3.
    #[arg(long)]
    r: f64,
    /// Mass parameter of the standard split (or of the self-similar split with --weights).
    #[arg(long)]
    p: Option<f64>,
    /// Exponent of the alpha-homogeneous split.
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated weights of the self-similar split; requires --p.
    #[arg(long, value_delimiter = ',', requires = "p")]
    weights: Option<Vec<f64>>,
    /// Comma-separated q values for the spectrum.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,2")]
    q: Vec<f64>,
    /// Sampled (y, t) pairs for the verifier.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Points sampled by mass for the spectrum.
    #[arg(long, default_value_t = 20)]
    spectrum_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    /// Include cube membership lists in tree.json.
    #[arg(long)]
    emit_members: bool,
    /// Check every critical (y, t) pair instead of sampling (n <= 512).
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Build,
    Measure,
    Verify,
    Spectrum,
}

#[derive(Debug, Serialize)]
struct SpaceSummary {
    n: usize,
    diameter: f64,
    min_gap: f64,
    base_point: usize,
    validation: ValidationReport,
}

#[derive(Debug, Serialize)]
struct MeasureSummary {
    #[serde(flatten)]
    kind: MeasureKind,
    p: f64,
    m_max: usize,
    warnings: Vec<String>,
    checks: VerificationReport,
}

#[derive(Debug, Serialize)]
struct SpectrumSummary {
    t: f64,
    k_window: (i32, i32),
    sample_points: Vec<usize>,
    mean_tau: Vec<(f64, f64)>,
    mean_upper_dim: f64,
    mean_lower_dim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dimension_bound: Option<f64>,
}

#[derive(Debug, Default, Serialize)]
struct Report {
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<RunConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    space: Option<SpaceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tree: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measure: Option<MeasureSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    doubling: Option<DoublingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<SpectrumSummary>,
    exit_code: i32,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, stage, config) = match cli.command {
        Command::Build(c) => ("build", Stage::Build, c),
        Command::Measure(c) => ("measure", Stage::Measure, c),
        Command::Verify(c) => ("verify", Stage::Verify, c),
        Command::Spectrum(c) => ("spectrum", Stage::Spectrum, c),
        Command::Run(c) => ("run", Stage::Spectrum, c),
    };
    let mut report = Report {
        command: name.to_string(),
        config: Some(config.clone()),
        ..Report::default()
    };
    let code = match pipeline(&config, name, stage, &mut report) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    report.exit_code = code;
    if let Err(e) = write_json(&config.out.join("report.json"), &report) {
        eprintln!("error: {e}");
        return 1;
    }
    print_summary(&report);
    code
}

fn load_space(config: &RunConfig) -> Result<FiniteMetricSpace> {
    if let Some(path) = &config.points {
        read_points_csv(path)
    } else if let Some(path) = &config.matrix {
        read_matrix_json(path)
    } else if let Some(arg) = &config.generate {
        generate(&parse_generator_arg(arg)?)
    } else {
        Err(Error::InvalidParameter("no input given".into()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn build_measure(config: &RunConfig, tree: &CubeTree) -> Result<MeasureAssignment> {
    match (config.p, config.beta, &config.weights) {
        (Some(p), None, Some(w)) => build_self_similar(tree, p, w),
        (Some(p), None, None) => build_doubling_measure(tree, p),
        (None, Some(beta), None) => build_alpha_homogeneous(tree, beta),
        _ => Err(Error::InvalidParameter(
            "select exactly one measure builder: --p, --beta, or --p with --weights".into(),
        )),
    }
}

fn pipeline(config: &RunConfig, name: &str, stage: Stage, report: &mut Report) -> Result<i32> {
    fs::create_dir_all(&config.out)?;
    let space = load_space(config)?;
    let tol = 1e-9 * space.diameter();
    let validation = if space.len() <= FULL_VALIDATION_MAX {
        validate_metric(&space, tol)
    } else {
        validate_pairs(&space, tol)
    };
    let valid = validation.is_valid();
    report.space = Some(SpaceSummary {
        n: space.len(),
        diameter: space.diameter(),
        min_gap: space.min_gap(),
        base_point: space.base_point(),
        validation,
    });
    if !valid {
        return Err(Error::MalformedDistances("input violates the metric axioms".into()));
    }

    let nets = build_nets(&space, config.r)?;
    write_json(&config.out.join("hierarchy.json"), &nets)?;
    let tree = build_cubes(&nets, &assign_parents(&space, &nets));
    write_json(&config.out.join("tree.json"), &tree.to_json(config.emit_members))?;
    let tree_report = verify_tree_properties(&tree, &space);
    write_json(&config.out.join("tree_report.json"), &tree_report)?;
    let tree_ok = tree_report.passed;
    report.tree = Some(tree_report);
    if !tree_ok {
        return Ok(2);
    }
    if stage == Stage::Build {
        return Ok(0);
    }

    let measure = build_measure(config, &tree)?;
    write_json(&config.out.join("measure.json"), &measure.to_json())?;
    let checks = check_measure(&tree, &measure)?;
    let measure_ok = checks.passed;
    for w in measure.warnings() {
        eprintln!("warning: {w}");
    }
    report.measure = Some(MeasureSummary {
        kind: measure.kind().clone(),
        p: measure.p(),
        m_max: measure.m_max(),
        warnings: measure.warnings().to_vec(),
        checks,
    });
    if !measure_ok {
        return Ok(2);
    }
    if stage == Stage::Measure {
        return Ok(0);
    }

    if stage == Stage::Verify || name == "run" {
        let doubling = if config.exhaustive {
            verify_doubling_exhaustive(&tree, &measure, &space)?
        } else {
            verify_doubling(&tree, &measure, &space, config.samples, config.seed)?
        };
        write_json(&config.out.join("doubling_report.json"), &doubling)?;
        let ok = doubling.passed();
        report.doubling = Some(doubling);
        if !ok {
            return Ok(2);
        }
        if stage == Stage::Verify {
            return Ok(0);
        }
    }

    if config.q.iter().any(|q| !(*q >= 0.0)) {
        return Err(Error::InvalidParameter("q values must be >= 0".into()));
    }
    let t = if space.diameter() > 0.0 { space.diameter() } else { 1.0 };
    let window = spectrum_window(&tree, t);
    let points = sample_by_mass(&measure, config.spectrum_points, config.seed);
    let radii = default_radii(&space, t);
    let mut taus = Vec::new();
    let mut dims = Vec::new();
    for &x in &points {
        for &q in &config.q {
            taus.push(tau_q_estimate(&tree, &measure, &space, x, q, t, window, Weighting::FullCube)?);
        }
        dims.push(local_dimension_estimate(&space, &measure, x, &radii)?);
    }
    write_spectrum_csv(fs::File::create(config.out.join("spectrum.csv"))?, &taus)?;
    write_dimension_csv(fs::File::create(config.out.join("dimension.csv"))?, &dims)?;
    let n = points.len().max(1) as f64;
    let mean_tau = config
        .q
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let sum: f64 = taus.iter().skip(j).step_by(config.q.len()).map(|e| e.tau_fit).sum();
            (q, sum / n)
        })
        .collect();
    let standard = matches!(measure.kind(), MeasureKind::Doubling | MeasureKind::AlphaHomogeneous { .. });
    report.spectrum = Some(SpectrumSummary {
        t,
        k_window: window,
        sample_points: points,
        mean_tau,
        mean_upper_dim: dims.iter().map(|d| d.upper_dim_est).sum::<f64>() / n,
        mean_lower_dim: dims.iter().map(|d| d.lower_dim_est).sum::<f64>() / n,
        dimension_bound: if standard {
            dimension_bound(measure.m_max(), measure.p(), tree.r()).ok()
        } else {
            None
        },
    });
    Ok(0)
}

fn print_summary(report: &Report) {
    println!("{:<22} {}", "command", report.command);
    if let Some(s) = &report.space {
        println!("{:<22} n={} diameter={} min_gap={}", "space", s.n, s.diameter, s.min_gap);
    }
    if let Some(t) = &report.tree {
        for c in &t.checks {
            println!(
                "{:<22} {} ({} checked, {} violations)",
                format!("tree.{}", c.name),
                if c.passed { "ok" } else { "FAIL" },
                c.checked,
                c.violations
            );
        }
    }
    if let Some(m) = &report.measure {
        println!("{:<22} p={} M_max={}", "measure", m.p, m.m_max);
        for c in &m.checks.checks {
            println!(
                "{:<22} {}",
                format!("measure.{}", c.name),
                if c.passed { "ok" } else { "FAIL" }
            );
        }
    }
    if let Some(d) = &report.doubling {
        println!(
            "{:<22} worst={:.4} bound={:.4} violations={}",
            "doubling.cubes", d.worst_ratio_cubes, d.bound_cubes, d.cube_violations
        );
        if d.balls_checked {
            println!(
                "{:<22} worst={:.4} bound={:.4} violations={}",
                "doubling.balls", d.worst_ratio_balls, d.bound_balls, d.ball_violations
            );
        }
        println!("{:<22} {}", "doubling.asserted", d.asserted);
    }
    if let Some(s) = &report.spectrum {
        for (q, tau) in &s.mean_tau {
            println!("{:<22} {:.4}", format!("tau[q={q}]"), tau);
        }
        println!("{:<22} {:.4}", "upper_dim (mean)", s.mean_upper_dim);
        if let Some(b) = s.dimension_bound {
            println!("{:<22} {:.4}", "dimension_bound", b);
        }
    }
    println!("{:<22} {}", "exit", report.exit_code);
}
