//! `geophase`: run the models, export frames, sweep parameters, verify.
//!
//! Exit status: 0 when every declared tolerance passes, 1 when one does
//! not, 2 on usage or configuration errors. Existing files are never
//! replaced unless `--force` is given.

mod output;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use geophase_core::analytic::geometric_offset;
use geophase_core::config::{ModelConfig, ModelKind};
use geophase_core::error::Error;
use geophase_core::experiments::{
    acceptance, adiabatic_scan, compare_echo, compare_pipelines, frame_table, frequency_shift_check,
    geometric_offset_fit, laser_direct, run_scan, spin_coherent_state, trajectory_table, Check, ComparisonReport,
    Metric, ScanSpec, Status, SweptParameter, ECHO_PHASE_TOL,
};
use geophase_core::models::{inversion_state, CollisionDensity, DephasingRoute};
use geophase_core::transport::{build_frame, holonomy, phase_distance};

use output::{Format, Outputs};

/// Tolerance on the fitted phase of the `2E` oscillation of `w(T)`.
const OFFSET_PHASE_TOL: f64 = 0.05;
/// Geometric phase read off a frame vs its closed form.
const FRAME_PHASE_TOL: f64 = 1e-5;
/// Periods in the `w(T)` fits: `T, T + 1, ..., T + 30`.
const FIT_POINTS: usize = 31;

#[derive(Parser)]
#[command(name = "geophase", version, about = "Geometric phases in driven open two-level systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optical resonance with spontaneous emission: three pipelines plus the w(T) phase fit.
    Emission {
        #[command(flatten)]
        common: Common,
        /// Skip the fit over a grid of periods.
        #[arg(long)]
        no_fit: bool,
    },
    /// Optical resonance with collisional dephasing: three pipelines plus the frequency-shift fit.
    Dephasing {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_fit: bool,
    },
    /// Spin echo at two field strengths; the final coherence phase must not depend on E.
    Spinecho {
        #[command(flatten)]
        common: Common,
        /// Second field strength (default: twice the configured E).
        #[arg(long)]
        energy2: Option<f64>,
    },
    /// Export the parallel-transported frame A(t) and its holonomy.
    Frame {
        #[command(flatten)]
        common: Common,
        /// Keep every n-th frame node (default: about 1000 rows).
        #[arg(long)]
        stride: Option<usize>,
    },
    /// One-parameter sweep, or the adiabatic convergence scan.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(value_enum, default_value_t = ScanKind::Sweep)]
        kind: ScanKind,
        /// Swept parameter: T | lambda0 | steps | theta_b.
        #[arg(long, default_value = "T")]
        param: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated metrics: inversion_error, phase_error, trace_drift, gauge_norm.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Criteria to run, e.g. AC3 AC9 (default: all).
        criteria: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScanKind {
    Sweep,
    Adiabatic,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Flat `key = value` model config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace existing output files.
    #[arg(long)]
    force: bool,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Why a command did not exit 0.
enum Failure {
    Usage(String),
    Tolerance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Tolerance) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Emission { common, no_fit } => cmd_optical(&common, ModelKind::Emission, !no_fit),
        Command::Dephasing { common, no_fit } => cmd_optical(&common, ModelKind::Dephasing, !no_fit),
        Command::Spinecho { common, energy2 } => cmd_spinecho(&common, energy2),
        Command::Frame { common, stride } => cmd_frame(&common, stride),
        Command::Scan { common, kind, param, values, metrics } => cmd_scan(&common, kind, &param, values, &metrics),
        Command::Verify { common, criteria } => cmd_verify(&common, &criteria),
    }
}

/// Config file, then `--set`, then `--steps`/`--seed`; validated before use.
fn resolve(common: &Common, expected: Option<ModelKind>) -> Result<ModelConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            ModelConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ModelConfig::default_for(expected.unwrap_or(ModelKind::Emission)),
    };
    if common.config.is_none() {
        if let Some(kind) = expected {
            cfg.model = kind;
        }
    }
    cfg.apply_overrides(&common.set)?;
    if let Some(s) = common.steps {
        cfg.steps = s;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(kind) = expected {
        if cfg.model != kind {
            return Err(Failure::Usage(format!(
                "config selects model '{}' but this subcommand runs '{}'",
                cfg.model.name(),
                kind.name()
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_checks(report: &ComparisonReport) {
    for c in &report.checks {
        let tag = match c.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inconclusive => "inconclusive",
        };
        match c.target {
            Some(t) => println!("  {tag:<12} {}: {:.6e} vs {:.6e} (tol {:.1e})", c.name, c.measured, t, c.tolerance),
            None => println!("  {tag:<12} {}: {:.6e} (limit {:.1e})", c.name, c.measured, c.tolerance),
        }
    }
}

fn verdict(report: &ComparisonReport) -> Outcome {
    print_checks(report);
    if report.passed() {
        println!("status: pass");
        Ok(())
    } else {
        println!("status: {}", if report.status() == Status::Fail { "fail" } else { "inconclusive" });
        Err(Failure::Tolerance)
    }
}

fn fit_periods(period: f64) -> Vec<f64> {
    (0..FIT_POINTS).map(|k| period + k as f64).collect()
}

fn cmd_optical(common: &Common, kind: ModelKind, fit: bool) -> Outcome {
    let cfg = resolve(common, Some(kind))?;
    let name = kind.name();
    let mut out = Outputs::new(common, &cfg);
    out.table(&format!("{name}.trajectory"));
    if fit {
        out.table(&format!("{name}.fit"));
    }
    out.json(&format!("{name}.report"));
    out.ready()?;

    let model = cfg.laser_model()?;
    let mut report = compare_pipelines(&model, cfg.p, cfg.steps)?;
    report.config = cfg.to_json();
    report.seed = Some(cfg.seed);
    let traj = laser_direct(&model, &inversion_state(cfg.p)?, cfg.steps, cfg.route, (cfg.steps / 1000).max(1))?;
    let (cols, rows) = trajectory_table(&traj);
    out.write_table(&format!("{name}.trajectory"), &cols, &rows)?;

    if fit {
        let periods = fit_periods(cfg.period);
        let per_unit = cfg.steps as f64 / cfg.period;
        let sub = match kind {
            ModelKind::Dephasing => {
                let asym = cfg.collision_density();
                if matches!(asym, CollisionDensity::Constant { .. }) {
                    report.note("constant density has no frequency shift; running the phase fit instead");
                    geometric_offset_fit(&model, cfg.p, &periods, per_unit, OFFSET_PHASE_TOL)?
                } else {
                    let sym = CollisionDensity::Constant { lambda0: cfg.lambda0 };
                    frequency_shift_check(&model, cfg.p, &sym, &asym, &periods, per_unit, DephasingRoute::Reduced)?
                }
            }
            _ => geometric_offset_fit(&model, cfg.p, &periods, per_unit, OFFSET_PHASE_TOL)?,
        };
        let cols: Vec<String> = sub.columns.clone();
        out.write_table(&format!("{name}.fit"), &cols, &sub.rows)?;
        report.absorb("fit", sub);
    }
    out.write_json(&format!("{name}.report"), &report.to_json())?;
    for (k, v) in &report.metrics {
        if !k.starts_with("fit.diag") {
            println!("  {k} = {v:.6e}");
        }
    }
    verdict(&report)
}

fn cmd_spinecho(common: &Common, energy2: Option<f64>) -> Outcome {
    let cfg = resolve(common, Some(ModelKind::Spin))?;
    let mut second = cfg.clone();
    second.energy = energy2.unwrap_or(2.0 * cfg.energy);
    second.validate()?;
    let mut out = Outputs::new(common, &cfg);
    out.table("spinecho.table");
    out.json("spinecho.report");
    out.ready()?;

    let mut report = ComparisonReport::new("spinecho", json!({ "resolved": cfg.to_json(), "E2": second.energy }))
        .with_columns(&["E", "phi", "arg_ratio_direct", "arg_ratio_rotated", "modulus_ratio_direct", "modulus_expected"]);
    report.seed = Some(cfg.seed);
    let mut args = Vec::new();
    for c in [&cfg, &second] {
        let spin = c.spin_model()?;
        let r = compare_echo(&spin, &spin_coherent_state(&spin)?, c.steps)?;
        let m = &r.metrics;
        report.push_row(vec![
            c.energy,
            m["phi"],
            m["arg_ratio_direct"],
            m["arg_ratio_rotated"],
            m["modulus_ratio_direct"],
            m["modulus_expected"],
        ])?;
        args.push(m["arg_ratio_direct"]);
        report.absorb(&format!("E={}", c.energy), r);
    }
    let change = phase_distance(args[0], args[1]);
    report.metric("arg_change", change);
    report.check(Check::below("final coherence arg change between the two E", change, ECHO_PHASE_TOL));
    out.write_table("spinecho.table", &report.columns.clone(), &report.rows.clone())?;
    out.write_json("spinecho.report", &report.to_json())?;
    verdict(&report)
}

fn cmd_frame(common: &Common, stride: Option<usize>) -> Outcome {
    let cfg = resolve(common, None)?;
    let mut out = Outputs::new(common, &cfg);
    out.table("frame");
    out.json("frame.report");
    out.ready()?;

    let (path, expected) = match cfg.model {
        ModelKind::Spin => (cfg.spin_model()?.path()?, PI * (1.0 - cfg.theta_b.cos())),
        _ => {
            let m = cfg.laser_model()?;
            (m.path()?, geometric_offset(m.delta, m.omega))
        }
    };
    let frame = build_frame(&path, cfg.steps)?;
    let stride = stride.unwrap_or((cfg.steps / 1000).max(1));
    let (cols, rows) = frame_table(&frame, stride);
    out.write_table("frame", &cols, &rows)?;

    let mut report = ComparisonReport::new("frame", cfg.to_json());
    report.seed = Some(cfg.seed);
    let (parallel, unitary) = frame.transport_residuals();
    report.metric("transport_residual", parallel);
    report.metric("unitarity_residual", unitary);
    let h = holonomy(&frame)?;
    for (k, (g, d)) in h.geometric.iter().zip(&h.dynamic).enumerate() {
        report.metric(&format!("geometric_{k}"), *g);
        report.metric(&format!("dynamic_{k}"), *d);
    }
    let error = match cfg.model {
        // The spin phase carries an orientation sign; its magnitude is the half solid angle.
        ModelKind::Spin => phase_distance(h.geometric[1], expected).min(phase_distance(h.geometric[1], -expected)),
        _ => phase_distance(h.geometric[1] - h.geometric[0], expected),
    };
    report.metric("geometric_expected", expected);
    report.check(Check::below("geometric phase vs closed form", error, FRAME_PHASE_TOL));
    out.write_json("frame.report", &report.to_json())?;
    verdict(&report)
}

fn parse_metric(s: &str) -> Result<Metric, Failure> {
    Metric::ALL
        .into_iter()
        .find(|m| m.column() == s || (s == "trace_drift" && *m == Metric::TraceDrift))
        .ok_or_else(|| Failure::Usage(format!("unknown metric '{s}'")))
}

fn cmd_scan(common: &Common, kind: ScanKind, param: &str, values: Vec<f64>, metrics: &[String]) -> Outcome {
    let cfg = resolve(common, None)?;
    let mut out = Outputs::new(common, &cfg);
    out.table("scan");
    out.json("scan.report");
    out.ready()?;

    let report = match kind {
        ScanKind::Adiabatic => {
            if cfg.model == ModelKind::Spin {
                return Err(Failure::Usage("the adiabatic scan runs an optical model".into()));
            }
            let mut r = adiabatic_scan(&cfg.laser_model()?, cfg.p, &values, cfg.steps as f64 / cfg.period)?;
            r.config = json!({ "resolved": cfg.to_json(), "periods": values });
            r
        }
        ScanKind::Sweep => {
            let parameter = SweptParameter::parse(param)
                .ok_or_else(|| Failure::Usage(format!("unknown scan parameter '{param}'")))?;
            let metrics = if metrics.is_empty() {
                Metric::ALL
                    .into_iter()
                    .filter(|m| !(cfg.model == ModelKind::Spin && *m == Metric::InversionError))
                    .collect()
            } else {
                metrics.iter().map(|m| parse_metric(m)).collect::<Result<Vec<_>, _>>()?
            };
            run_scan(&ScanSpec { config: cfg.clone(), parameter, values, metrics })?
        }
    };
    out.write_table("scan", &report.columns, &report.rows)?;
    out.write_json("scan.report", &report.to_json())?;
    println!("{}", report.columns.join("\t"));
    for row in &report.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
        println!("{}", cells.join("\t"));
    }
    for f in &report.fits {
        println!("  fit {} ~ {}^{:.4} (log residual {:.2e})", f.y, f.x, f.exponent, f.residual);
    }
    verdict(&report)
}

fn cmd_verify(common: &Common, criteria: &[String]) -> Outcome {
    let cfg = resolve(common, None)?;
    let mut out = Outputs::new(common, &cfg);
    out.json("verify.report");
    out.ready()?;
    let outcomes: Vec<acceptance::Outcome> = if criteria.is_empty() {
        acceptance::run_all(|o| println!("{}", o.line()))
    } else {
        let mut v = Vec::new();
        for id in criteria {
            let o = acceptance::run_one(&id.to_uppercase())
                .ok_or_else(|| Failure::Usage(format!("unknown criterion '{id}'")))?;
            println!("{}", o.line());
            v.push(o);
        }
        v
    };
    let met = outcomes.iter().filter(|o| o.passed()).count();
    println!("acceptance: {met} of {} criteria met", outcomes.len());
    let doc = json!({ "config": cfg.to_json(), "outcomes": outcomes });
    out.write_json("verify.report", &doc)?;
    if met == outcomes.len() {
        Ok(())
    } else {
        Err(Failure::Tolerance)
    }
}
