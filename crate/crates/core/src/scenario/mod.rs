//! End-to-end verification runs: configuration, the staged pipeline, the
//! JSON report and CSV exports.
//!
//! Stages run in a fixed order and draw their randomness from substreams of
//! the master seed named after the stage, so a report depends only on the
//! configuration and the code version.

pub mod config;
pub mod export;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

pub use config::{random_pencil, strip_comments, Budgets, PencilSpec, ScenarioConfig, Tolerances};
pub use export::Artifact;

use crate::critical::{
    analyze_image_curve, check_delta_transversal_to_d, find_delta_seeds, trace_delta,
    CriticalCurve, CurveSummary, DTransversality, ImageCurveAnalysis, ImageCurveConfig,
};
use crate::dual::ProjectivePoint;
use crate::dual::{immersion_and_nondegeneracy, sample_dual_set, DualCloud};
use crate::error::{Error, Result};
use crate::fiber::{
    case_ii_check, component_count, fiber_shrinking, gauss_fibration_check, morse_index,
    pca_dimension, sample_fiber, CaseIIConfig, CaseIIReport, ComponentCount, GaussFibrationConfig,
    GaussFibrationReport, ShrinkingProbe,
};
use crate::geometry::{
    certify_strict_c_convexity, sample_points, Builtin, ConvexityCertificate, DefiningFunction,
};
use crate::pencil::{
    base_transversality, dual_transversality, induced_map, lefschetz_verify, BaseTransversality,
    DualTransversality, Pencil, PencilVerdict,
};
use crate::rng::derive_seed;

/// Offset from the image curve of the first value in the shrinking probe.
const SHRINK_OFFSET: f64 = 0.05;
const SHRINK_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Certify,
    Dual,
    Pencil,
    Trace,
    Fibers,
    Run,
}

impl Command {
    fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Command::Certify => &[Certify],
            Command::Dual => &[Dual],
            Command::Pencil => &[Dual, Pencil],
            Command::Trace => &[Trace, ImageCurve],
            Command::Fibers => &[Trace, Fibers],
            Command::Run => &[Certify, Dual, Pencil, Trace, ImageCurve, Fibers],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Certify,
    Dual,
    Pencil,
    Trace,
    ImageCurve,
    Fibers,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Certify => "certify",
            Stage::Dual => "dual",
            Stage::Pencil => "pencil",
            Stage::Trace => "trace",
            Stage::ImageCurve => "image_curve",
            Stage::Fibers => "fibers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
    /// Not applicable to this pencil.
    Skipped,
}

impl Verdict {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Whether the base locus of the pencil meets the hypersurface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilCase {
    /// Compact fibers; the critical set is a circle.
    BaseMissesHypersurface,
    /// Submersion off the base; fibers close up through it.
    BaseMeetsHypersurface,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOutcome<T> {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
}

impl<T> StageOutcome<T> {
    fn done(pass: bool, result: T) -> Self {
        StageOutcome {
            verdict: Verdict::from_pass(pass),
            error_kind: None,
            error: None,
            note: None,
            result: Some(result),
        }
    }

    fn failed(e: &Error) -> Self {
        StageOutcome {
            verdict: Verdict::Error,
            error_kind: Some(e.kind()),
            error: Some(e.to_string()),
            note: None,
            result: None,
        }
    }

    fn skipped(note: &str) -> Self {
        StageOutcome {
            verdict: Verdict::Skipped,
            error_kind: None,
            error: None,
            note: Some(note.to_string()),
            result: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualSweep {
    pub samples: usize,
    pub immersed: usize,
    pub nondegenerate: usize,
    /// Samples where the immersion and nondegeneracy verdicts differ.
    pub mismatches: usize,
    pub min_margin: f64,
    pub mean_nearest_neighbor: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PencilChecks {
    pub case: PencilCase,
    /// Sine of the angle between the covectors.
    pub sine: f64,
    pub base: BaseTransversality,
    pub dual: DualTransversality,
    /// Base-locus and dual-side verdicts coincide.
    pub agree: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceResult {
    pub seeds: usize,
    /// Seeds farther than one maximal step from the traced curve, i.e. on
    /// another component.
    pub seeds_off_curve: usize,
    pub curve: CurveSummary,
    pub d_transversality: DTransversality,
    pub lefschetz: PencilVerdict,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseProbe {
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub eigenvalues: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finite_difference_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseSummary {
    pub expected_index: usize,
    pub samples: usize,
    pub matching: usize,
    pub degenerate: usize,
    pub max_finite_difference_error: f64,
    pub probes: Vec<MorseProbe>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberProbe {
    pub label: String,
    pub target: ProjectivePoint,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<ComponentCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pca_dimension: f64,
    pub diameter: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberStage {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morse: Option<MorseSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fibers: Vec<FiberProbe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrinking: Option<ShrinkingProbe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrinking_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauss: Option<GaussFibrationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauss_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_on_hypersurface: Option<CaseIIReport>,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Stages {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<StageOutcome<ConvexityCertificate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual: Option<StageOutcome<DualSweep>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pencil: Option<StageOutcome<PencilChecks>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<StageOutcome<TraceResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_curve: Option<StageOutcome<ImageCurveAnalysis>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fibers: Option<StageOutcome<FiberStage>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub command: Command,
    pub config: ScenarioConfig,
    pub hypersurface: String,
    /// Unit-normalized covectors as `[re, im]` pairs.
    pub pencil: [Vec<[f64; 2]>; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<PencilCase>,
    pub stages: Stages,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halted_at: Option<Stage>,
    pub artifacts: Vec<Artifact>,
    pub verdict: Verdict,
    pub note: &'static str,
    /// Wall time per stage in seconds.
    pub timings: BTreeMap<String, f64>,
    pub started_unix: u64,
}

impl RunReport {
    /// Copy with wall times and the start time zeroed.
    pub fn redacted(&self) -> RunReport {
        let mut r = self.clone();
        r.started_unix = 0;
        for v in r.timings.values_mut() {
            *v = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Path of the report inside the output directory.
    pub fn path(&self) -> PathBuf {
        Path::new(&self.config.output_dir).join("report.json")
    }
}

const NOTE: &str = "sampled checks are consistent with the stated structure; they do not prove it";

/// The full pipeline.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    run_command(config, Command::Run)
}

struct Context<'a> {
    f: &'a Builtin,
    p: Pencil,
    cfg: &'a ScenarioConfig,
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    cloud: Option<DualCloud>,
    base: Option<BaseTransversality>,
    curve: Option<CriticalCurve>,
}

impl Context<'_> {
    fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.seed, stage, 0)
    }

    fn case(&mut self) -> PencilCase {
        let base = self.base.get_or_insert_with(|| {
            base_transversality(
                self.f,
                &self.p,
                self.cfg.budgets.base_samples,
                derive_seed(self.cfg.seed, "base", 0),
                self.cfg.tolerances.transversality,
            )
        });
        if base.empty {
            PencilCase::BaseMissesHypersurface
        } else {
            PencilCase::BaseMeetsHypersurface
        }
    }

    fn dual_cloud(&mut self) -> Result<&DualCloud> {
        if self.cloud.is_none() {
            self.cloud = Some(sample_dual_set(
                self.f,
                self.cfg.budgets.dual_samples,
                self.seed("dual"),
            )?);
        }
        Ok(self.cloud.as_ref().expect("just set"))
    }
}

/// Runs the stages belonging to `command`, writing CSV exports and
/// `report.json` into the configured output directory. Stage failures end
/// up in the report; only invalid configurations and unwritable output
/// directories are returned as errors.
pub fn run_command(config: &ScenarioConfig, command: Command) -> Result<RunReport> {
    config.validate()?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    let p = config.pencil()?;
    let mut ctx = Context {
        f: &config.hypersurface,
        p,
        cfg: config,
        dir,
        artifacts: Vec::new(),
        cloud: None,
        base: None,
        curve: None,
    };
    let mut stages = Stages::default();
    let mut timings = BTreeMap::new();
    let mut halted_at = None;
    let mut case = None;

    for &stage in command.stages() {
        let t = Instant::now();
        if stage != Stage::Certify && stage != Stage::Dual {
            case = Some(ctx.case());
        }
        let verdict = match stage {
            Stage::Certify => record(&mut stages.certify, certify_stage(&ctx)),
            Stage::Dual => record(&mut stages.dual, dual_stage(&mut ctx)),
            Stage::Pencil => record(&mut stages.pencil, pencil_stage(&mut ctx)),
            Stage::Trace => match case {
                Some(PencilCase::BaseMeetsHypersurface) => {
                    stages.trace = Some(StageOutcome::skipped("base locus meets the hypersurface"));
                    Verdict::Skipped
                }
                _ => record(&mut stages.trace, trace_stage(&mut ctx)),
            },
            Stage::ImageCurve => match case {
                Some(PencilCase::BaseMeetsHypersurface) => {
                    stages.image_curve =
                        Some(StageOutcome::skipped("base locus meets the hypersurface"));
                    Verdict::Skipped
                }
                _ => record(&mut stages.image_curve, image_stage(&mut ctx)),
            },
            Stage::Fibers => record(&mut stages.fibers, fiber_stage(&mut ctx, case)),
        };
        timings.insert(stage.name().to_string(), t.elapsed().as_secs_f64());
        if verdict == Verdict::Error {
            halted_at = Some(stage);
            break;
        }
    }

    let verdicts = [
        stages.certify.as_ref().map(|s| s.verdict),
        stages.dual.as_ref().map(|s| s.verdict),
        stages.pencil.as_ref().map(|s| s.verdict),
        stages.trace.as_ref().map(|s| s.verdict),
        stages.image_curve.as_ref().map(|s| s.verdict),
        stages.fibers.as_ref().map(|s| s.verdict),
    ];
    let verdict = if verdicts.contains(&Some(Verdict::Error)) {
        Verdict::Error
    } else if verdicts.contains(&Some(Verdict::Fail)) {
        Verdict::Fail
    } else {
        Verdict::Pass
    };

    let covectors = |h: &crate::linalg::CVec| h.iter().map(|c| [c.re, c.im]).collect();
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config: config.clone(),
        hypersurface: config.hypersurface.label(),
        pencil: [covectors(ctx.p.h0()), covectors(ctx.p.h1())],
        case,
        stages,
        halted_at,
        artifacts: ctx.artifacts,
        verdict,
        note: NOTE,
        timings,
        started_unix,
    };
    std::fs::write(report.path(), report.to_json())?;
    Ok(report)
}

fn record<T>(slot: &mut Option<StageOutcome<T>>, outcome: Result<(bool, T)>) -> Verdict {
    let o = match outcome {
        Ok((pass, r)) => StageOutcome::done(pass, r),
        Err(e) => StageOutcome::failed(&e),
    };
    let v = o.verdict;
    *slot = Some(o);
    v
}

fn certify_stage(ctx: &Context) -> Result<(bool, ConvexityCertificate)> {
    let c = certify_strict_c_convexity(
        ctx.f,
        ctx.cfg.budgets.certify_samples,
        ctx.seed("certify"),
        ctx.cfg.tolerances.positivity,
    )?;
    Ok((c.pass, c))
}

fn dual_stage(ctx: &mut Context) -> Result<(bool, DualSweep)> {
    let f = ctx.f;
    let cloud = ctx.dual_cloud()?;
    let verdicts: Vec<(bool, bool)> = cloud
        .samples
        .par_iter()
        .map(|s| immersion_and_nondegeneracy(f, &s.preimage))
        .collect::<Result<_>>()?;
    let immersed = verdicts.iter().filter(|v| v.0).count();
    let nondegenerate = verdicts.iter().filter(|v| v.1).count();
    let mismatches = verdicts.iter().filter(|v| v.0 != v.1).count();
    let sweep = DualSweep {
        samples: cloud.len(),
        immersed,
        nondegenerate,
        mismatches,
        min_margin: cloud.min_margin(),
        mean_nearest_neighbor: cloud.mean_nearest_neighbor(),
        pass: mismatches == 0 && immersed == cloud.len(),
    };
    let artifact = export::write_dual_cloud(&ctx.dir, ctx.cloud.as_ref().expect("sampled"))?;
    ctx.artifacts.push(artifact);
    Ok((sweep.pass, sweep))
}

fn pencil_stage(ctx: &mut Context) -> Result<(bool, PencilChecks)> {
    let case = ctx.case();
    let threshold = ctx.cfg.tolerances.transversality;
    let (f, p) = (ctx.f, ctx.p.clone());
    let dual = dual_transversality(f, &p, ctx.dual_cloud()?, threshold)?;
    let base = ctx.base.clone().expect("classified");
    let checks = PencilChecks {
        case,
        sine: p.sine(),
        agree: base.pass == dual.pass,
        pass: base.pass && dual.pass,
        base,
        dual,
    };
    Ok((checks.pass, checks))
}

fn trace_stage(ctx: &mut Context) -> Result<(bool, TraceResult)> {
    let (f, p, cfg) = (ctx.f, &ctx.p, ctx.cfg);
    let seeds = find_delta_seeds(f, p, cfg.budgets.seed_tries, ctx.seed("seeds"))?;
    let curve = trace_delta(f, p, &seeds[0], &cfg.continuation)?;
    let seeds_off_curve = seeds
        .iter()
        .filter(|s| curve.distance_to(s) > cfg.continuation.h_max)
        .count();
    let d_transversality = check_delta_transversal_to_d(f, &curve, cfg.tolerances.transversality)?;
    let lefschetz = lefschetz_verify(
        f,
        p,
        &curve,
        cfg.budgets.base_samples,
        derive_seed(cfg.seed, "base", 0),
        cfg.tolerances.transversality,
    )?;
    let result = TraceResult {
        seeds: seeds.len(),
        seeds_off_curve,
        curve: curve.summary(),
        pass: curve.closed && seeds_off_curve == 0 && d_transversality.pass && lefschetz.pass,
        d_transversality,
        lefschetz,
    };
    ctx.artifacts.push(export::write_delta(&ctx.dir, &curve)?);
    ctx.curve = Some(curve);
    Ok((result.pass, result))
}

fn image_stage(ctx: &mut Context) -> Result<(bool, ImageCurveAnalysis)> {
    let curve = ctx.curve.as_ref().ok_or_else(|| {
        Error::Precondition("image-curve analysis needs the traced critical circle".into())
    })?;
    let b = &ctx.cfg.budgets;
    let icfg = ImageCurveConfig {
        probe_budget: b.probe_budget,
        grid_lat: b.grid_lat,
        grid_lon: b.grid_lon,
        preimage_values: b.preimage_values,
        preimage_starts: b.preimage_starts,
        adjacency: 10.0 * ctx.cfg.continuation.h_max,
        preimage_tol: ctx.cfg.tolerances.preimage,
    };
    let analysis = analyze_image_curve(ctx.f, &ctx.p, curve, &icfg, ctx.seed("image_curve"))?;
    ctx.artifacts
        .push(export::write_image_curve(&ctx.dir, curve, &analysis)?);
    Ok((analysis.pass, analysis))
}

fn fiber_stage(ctx: &mut Context, case: Option<PencilCase>) -> Result<(bool, FiberStage)> {
    let (f, p, cfg) = (ctx.f, ctx.p.clone(), ctx.cfg);
    let b = &cfg.budgets;
    let tol = &cfg.tolerances;
    if case == Some(PencilCase::BaseMeetsHypersurface) {
        let ccfg = CaseIIConfig {
            submersion_samples: b.submersion_samples,
            fibers: b.case_ii_fibers,
            points_per_fiber: b.fiber_points,
            certification_samples: b.slice_samples,
            base_samples: b.base_samples,
            threshold: tol.transversality,
            slice_threshold: tol.slice_positivity,
        };
        let report = case_ii_check(f, &p, &ccfg, ctx.seed("fibers"))?;
        let pass = report.pass;
        let stage = FiberStage {
            morse: None,
            fibers: Vec::new(),
            shrinking: None,
            shrinking_error: None,
            gauss: None,
            gauss_error: None,
            base_on_hypersurface: Some(report),
            pass,
        };
        return Ok((pass, stage));
    }

    let curve = ctx.curve.clone().ok_or_else(|| {
        Error::Precondition("fiber probes need the traced critical circle".into())
    })?;
    let n = f.complex_dim();
    let morse = morse_summary(f, &p, &curve, b.morse_samples, 2 * n - 2);

    let seed = ctx.seed("fibers");
    let sources = sample_points(f, b.fiber_values, seed, "fiber-values")?;
    let mut fibers = Vec::new();
    for (k, x) in sources.iter().enumerate() {
        let label = format!("v{k}");
        let target = induced_map(&p, x)?;
        let probe = match sample_fiber(
            f,
            &p,
            &target,
            b.fiber_points,
            derive_seed(seed, "fiber", k as u64),
        ) {
            Ok(mut cloud) => {
                let counted = component_count(&mut cloud);
                ctx.artifacts
                    .push(export::write_fiber(&ctx.dir, &label, &cloud)?);
                let (components, error) = match counted {
                    Ok(c) => (Some(c), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                FiberProbe {
                    pass: components.as_ref().is_some_and(|c| c.count == 1),
                    label,
                    target,
                    points: cloud.len(),
                    components,
                    error,
                    pca_dimension: pca_dimension(&cloud.points, 6),
                    diameter: cloud.diameter(),
                }
            }
            Err(e) => FiberProbe {
                label,
                target,
                points: 0,
                components: None,
                error: Some(e.to_string()),
                pca_dimension: 0.0,
                diameter: 0.0,
                pass: false,
            },
        };
        fibers.push(probe);
    }

    let (shrinking, shrinking_error) = match fiber_shrinking(
        f,
        &p,
        &curve,
        0,
        SHRINK_OFFSET,
        b.shrink_steps,
        SHRINK_POINTS,
        seed,
    ) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let gcfg = GaussFibrationConfig {
        samples: b.gauss_samples,
        fibers: b.gauss_fibers,
        points_per_fiber: b.gauss_fiber_points,
        threshold: tol.transversality,
        compare_hopf: is_centred_sphere(f),
        pca_tolerance: tol.pca_dimension,
    };
    let (gauss, gauss_error) = match gauss_fibration_check(f, &gcfg, ctx.seed("gauss")) {
        Ok(g) => (Some(g), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let pass = morse.pass
        && fibers.iter().all(|fb| fb.pass)
        && shrinking.as_ref().is_some_and(|s| s.monotone)
        && gauss.as_ref().is_some_and(|g| g.pass);
    let stage = FiberStage {
        morse: Some(morse),
        fibers,
        shrinking,
        shrinking_error,
        gauss,
        gauss_error,
        base_on_hypersurface: None,
        pass,
    };
    Ok((pass, stage))
}

fn is_centred_sphere(f: &Builtin) -> bool {
    matches!(f, Builtin::Sphere { .. })
}

/// Morse data at `count` evenly spaced samples of the curve.
pub fn morse_summary(
    f: &dyn DefiningFunction,
    p: &Pencil,
    curve: &CriticalCurve,
    count: usize,
    expected_index: usize,
) -> MorseSummary {
    let m = curve.len();
    let picks: Vec<usize> = if m == 0 {
        Vec::new()
    } else {
        (0..count.min(m)).map(|k| k * m / count.min(m)).collect()
    };
    let probes: Vec<MorseProbe> = picks
        .par_iter()
        .map(|&k| {
            let x = &curve.points[k];
            let point = x.iter().copied().collect();
            match morse_index(f, p, x) {
                Ok(d) => MorseProbe {
                    point,
                    index: Some(d.index),
                    eigenvalues: d.eigenvalues,
                    finite_difference_error: Some(d.finite_difference_error),
                    error: None,
                },
                Err(e) => MorseProbe {
                    point,
                    index: None,
                    eigenvalues: match &e {
                        Error::DegenerateHessian { eigenvalues } => eigenvalues.clone(),
                        _ => Vec::new(),
                    },
                    finite_difference_error: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let matching = probes
        .iter()
        .filter(|pr| pr.index == Some(expected_index))
        .count();
    let degenerate = probes
        .iter()
        .filter(|pr| {
            pr.error
                .as_deref()
                .is_some_and(|e| e.starts_with("Morse Hessian is degenerate"))
        })
        .count();
    let max_fd = probes
        .iter()
        .filter_map(|pr| pr.finite_difference_error)
        .fold(0.0, f64::max);
    MorseSummary {
        expected_index,
        samples: probes.len(),
        matching,
        degenerate,
        max_finite_difference_error: max_fd,
        pass: !probes.is_empty() && matching == probes.len(),
        probes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(dir: &Path, hypersurface: Builtin, pencil: PencilSpec) -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            hypersurface,
            pencil,
            output_dir: dir.to_string_lossy().into_owned(),
            ..Default::default()
        };
        let b = &mut cfg.budgets;
        b.certify_samples = 100;
        b.dual_samples = 100;
        b.gauss_samples = 100;
        b.gauss_fibers = 3;
        b.fiber_values = 2;
        b.submersion_samples = 100;
        b.case_ii_fibers = 2;
        b.slice_samples = 50;
        cfg
    }

    #[test]
    fn sphere_axis_run_passes() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_scenario(&quick(dir.path(), Builtin::sphere(2), PencilSpec::Axis)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
        assert_eq!(r.case, Some(PencilCase::BaseMissesHypersurface));
        let t = r.stages.trace.unwrap().result.unwrap();
        assert!((t.curve.length - std::f64::consts::TAU).abs() < 1e-4);
        let files: Vec<&str> = r.artifacts.iter().map(|a| a.file.as_str()).collect();
        assert!(
            files.contains(&"delta.csv")
                && files.contains(&"image_curve.csv")
                && files.contains(&"dual_cloud.csv")
        );
        assert!(files.contains(&"fiber_v0.csv"));
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn five_sphere_origin_base_passes_with_base_on_hypersurface() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_scenario(&quick(
            dir.path(),
            Builtin::sphere(3),
            PencilSpec::OriginBase,
        ))
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json());
        assert_eq!(r.case, Some(PencilCase::BaseMeetsHypersurface));
        assert_eq!(r.stages.trace.unwrap().verdict, Verdict::Skipped);
        assert!(
            r.stages
                .fibers
                .unwrap()
                .result
                .unwrap()
                .base_on_hypersurface
                .unwrap()
                .pass
        );
    }

    #[test]
    fn degenerate_model_trace_halts_with_rank_drop() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick(dir.path(), Builtin::QuarticModel { n: 2 }, PencilSpec::Axis);
        let r = run_command(&cfg, Command::Trace).unwrap();
        assert_eq!(r.verdict, Verdict::Error);
        assert_eq!(r.halted_at, Some(Stage::Trace));
        assert_eq!(r.stages.trace.unwrap().error_kind, Some("RankDrop"));
        assert!(r.stages.image_curve.is_none());
    }

    #[test]
    fn certify_only_runs_one_stage() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_command(
            &quick(dir.path(), Builtin::sphere(2), PencilSpec::Axis),
            Command::Certify,
        )
        .unwrap();
        let c = r.stages.certify.unwrap().result.unwrap();
        assert!((c.min_eigenvalue - 1.0).abs() < 1e-9);
        assert!(r.stages.dual.is_none() && r.case.is_none());
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn redaction_clears_only_times() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_command(
            &quick(dir.path(), Builtin::sphere(2), PencilSpec::Axis),
            Command::Certify,
        )
        .unwrap();
        let red = r.redacted();
        assert_eq!(red.started_unix, 0);
        assert!(red.timings.values().all(|t| *t == 0.0));
        assert_eq!(red.timings.len(), r.timings.len());
        assert_eq!(red.verdict, r.verdict);
    }
}
