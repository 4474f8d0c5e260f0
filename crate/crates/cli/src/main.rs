use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cconvex::oracle;
use cconvex::scenario::{run_command, Command, RunReport, ScenarioConfig, Verdict};
use cconvex::{Builtin, Error};
use clap::{Parser, Subcommand};

/// Verification runs for strictly C-convex hypersurfaces and their pencils.
///
/// Exit status: 0 when every check passes, 1 on a failed check, 2 on errors.
/// The report path is the only thing written to stdout.
#[derive(Parser, Debug)]
#[command(name = "cconvex", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Sub>,

    /// Scenario file (JSON with `//` comments); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Multiplies every tolerance.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,

    /// Prints the default scenario file with inline documentation.
    #[arg(long)]
    print_defaults: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Strict C-convexity certificate.
    Certify,
    /// Dual-map immersion sweep and dual cloud export.
    Dual,
    /// Base-locus and dual-side transversality of the pencil.
    Pencil,
    /// Critical circle and image-curve analysis.
    Trace,
    /// Morse, fiber and Gauss-fibration probes.
    Fibers,
    /// Full pipeline.
    Run,
    /// Closed-form reference values for the configured sphere or ellipsoid.
    Oracle,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    if let Some(t) = cli.tol_scale {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "--tol-scale must be positive, got {t}"
            )));
        }
        cfg.tolerances = cfg.tolerances.scaled(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_oracle(cfg: &ScenarioConfig) -> Result<PathBuf, Error> {
    let value = match &cfg.hypersurface {
        Builtin::Sphere { n, radius } => serde_json::to_value(oracle::round_sphere(*n, *radius)),
        Builtin::Ellipsoid { axes } => {
            let mut c = vec![num_complex::Complex64::new(0.0, 0.0); axes.len()];
            c[axes.len() - 1] = num_complex::Complex64::new(1.0, 0.0);
            serde_json::to_value(oracle::ellipsoid_linear_pencil(axes, &c))
        }
        other => {
            return Err(Error::Precondition(format!(
                "no closed-form oracle for {}",
                other.label()
            )))
        }
    }
    .expect("oracle serializes");
    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    let path = dir.join("oracle.json");
    let mut text = serde_json::to_string_pretty(&value).expect("json");
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

fn summarize(report: &RunReport) {
    let s = &report.stages;
    let rows = [
        (
            "certify",
            s.certify
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
        (
            "dual",
            s.dual
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
        (
            "pencil",
            s.pencil
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
        (
            "trace",
            s.trace
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
        (
            "image_curve",
            s.image_curve
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
        (
            "fibers",
            s.fibers
                .as_ref()
                .map(|o| (o.verdict, o.error_kind, o.error.clone())),
        ),
    ];
    for (name, row) in rows {
        let Some((verdict, kind, error)) = row else {
            continue;
        };
        let secs = report.timings.get(name).copied().unwrap_or(0.0);
        match error {
            Some(e) => eprintln!(
                "{name:<12} {verdict:?} ({secs:.2}s) [{}]: {e}",
                kind.unwrap_or("?")
            ),
            None => eprintln!("{name:<12} {verdict:?} ({secs:.2}s)"),
        }
    }
    eprintln!("verdict      {:?}", report.verdict);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_defaults {
        print!("{}", ScenarioConfig::defaults_document());
        return ExitCode::SUCCESS;
    }
    let Some(sub) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(2);
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            return ExitCode::from(2);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };

    let command = match sub {
        Sub::Oracle => {
            return match write_oracle(&cfg) {
                Ok(path) => {
                    println!("{}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error [{}]: {e}", e.kind());
                    ExitCode::from(2)
                }
            };
        }
        Sub::Certify => Command::Certify,
        Sub::Dual => Command::Dual,
        Sub::Pencil => Command::Pencil,
        Sub::Trace => Command::Trace,
        Sub::Fibers => Command::Fibers,
        Sub::Run => Command::Run,
    };

    match pool.install(|| run_command(&cfg, command)) {
        Ok(report) => {
            summarize(&report);
            println!("{}", report.path().display());
            match report.verdict {
                Verdict::Pass | Verdict::Skipped => ExitCode::SUCCESS,
                Verdict::Fail => ExitCode::from(1),
                Verdict::Error => {
                    if let Some(stage) = report.halted_at {
                        eprintln!("halted at {}", stage.name());
                    }
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            ExitCode::from(2)
        }
    }
}
