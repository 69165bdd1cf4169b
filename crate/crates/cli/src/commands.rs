//! Subcommand implementations and the on-disk JSON schemas they share.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use ifbs::analysis::{
    self, classify_de, manifold_report, rate_report, reference_solve, AnalysisError,
    ReferenceSolution,
};
use ifbs::engine::{self, Algorithm, RunOptions, RunSummary, SolverTrace, TerminationRule};
use ifbs::io;
use ifbs::linalg;
use ifbs::model::{generate_instance, GenerateParams, L1LsInstance, SmoothOracle};
use ifbs::schedule::{optimal_momentum, MomentumSpec, ScheduleSpec, StepRule};

use crate::config::{parse_run_config, InstanceSource, RunConfig, SnapshotPolicy};
use crate::grammar::{parse_schedule, ScheduleRequest};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed config, invalid dimensions. Exit code 2.
    Usage(String),
    /// Numerical or runtime failure. Exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

const COMPARISON_THRESHOLDS: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    m: usize,
    n: usize,
    rho: f64,
    lipschitz: f64,
    reference: ReferenceSolution<f64>,
}

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    name: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<RunSummary<f64>>,
}

#[derive(Serialize)]
struct ComparisonEntry {
    name: String,
    algo: Algorithm,
    schedule: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    iterations: Option<u64>,
    final_gap: Option<f64>,
    iterations_to_threshold: Vec<Option<u64>>,
}

#[derive(Serialize)]
struct ComparisonFile {
    f_star: f64,
    gap_tol: f64,
    thresholds: Vec<f64>,
    algorithms: Vec<ComparisonEntry>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text + "\n").map_err(runtime)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub struct GenerateArgs {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub sparsity: Option<usize>,
    pub std: f64,
    pub rho: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub from_a_csv: Option<PathBuf>,
    pub from_b_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct InstanceDigest {
    m: usize,
    n: usize,
    rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sparsity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    lipschitz: f64,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let (inst, sparsity, seed) = match (&args.from_a_csv, &args.from_b_csv) {
        (Some(a), Some(b)) => {
            if args.m.is_some() || args.n.is_some() || args.sparsity.is_some() {
                return Err(CliError::Usage(
                    "--from-a-csv/--from-b-csv and --m/--n/--sparsity are mutually exclusive".into(),
                ));
            }
            let inst = io::import_csv_instance(a, b, args.rho)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            (inst, None, None)
        }
        (None, None) => {
            let m = args.m.ok_or(CliError::Usage("--m is required".into()))?;
            let n = args.n.ok_or(CliError::Usage("--n is required".into()))?;
            let sparsity = args
                .sparsity
                .ok_or(CliError::Usage("--sparsity is required".into()))?;
            let inst = generate_instance(&GenerateParams {
                rows: m,
                cols: n,
                sparsity,
                entry_std: args.std,
                rho: args.rho,
                seed: args.seed,
            })
            .map_err(|e| CliError::Usage(e.to_string()))?;
            (inst, Some(sparsity), Some(args.seed))
        }
        _ => {
            return Err(CliError::Usage(
                "--from-a-csv and --from-b-csv must be given together".into(),
            ))
        }
    };
    io::write_instance(&args.out, &inst).map_err(runtime)?;
    let digest = InstanceDigest {
        m: inst.rows(),
        n: inst.matrix().cols(),
        rho: inst.rho(),
        sparsity,
        seed,
        lipschitz: inst.lipschitz_constant(),
    };
    println!("{}", serde_json::to_string(&digest).map_err(runtime)?);
    Ok(())
}

/// Diagnostics shared by the `opt` schedule variants: the boundary set of
/// the reference solution and the restricted Gram spectrum on it.
struct OptDiagnostics {
    l_e: f64,
}

fn opt_diagnostics(
    inst: &L1LsInstance<f64>,
    reference: &ReferenceSolution<f64>,
) -> Result<OptDiagnostics, CliError> {
    let de = classify_de(&reference.h_star, inst.rho(), analysis::DEFAULT_E_THRESHOLD)
        .map_err(runtime)?;
    if de.e.is_empty() {
        return Err(CliError::Runtime(
            "reference solution has an empty boundary set; opt schedules are undefined".into(),
        ));
    }
    let l_e = linalg::smallest_restricted_eigenvalue(inst.matrix(), &de.e).map_err(runtime)?;
    Ok(OptDiagnostics { l_e })
}

fn resolve_schedule(
    request: &ScheduleRequest,
    inst: &L1LsInstance<f64>,
    diagnostics: Option<&OptDiagnostics>,
) -> Result<ScheduleSpec<f64>, CliError> {
    let lipschitz = inst.lipschitz_constant();
    match request {
        ScheduleRequest::Concrete(spec) => Ok(spec.clone()),
        ScheduleRequest::IfbsOpt { lambda } => {
            let d = diagnostics.ok_or(CliError::Runtime(
                "opt schedule requested without reference diagnostics".into(),
            ))?;
            let lam = lambda.unwrap_or(1.0 / lipschitz);
            let alpha = optimal_momentum(d.l_e, lam).map_err(runtime)?;
            Ok(ScheduleSpec {
                momentum: MomentumSpec::Constant { alpha },
                step: StepRule::Fixed(lam),
            })
        }
        ScheduleRequest::IstaOpt => {
            let d = diagnostics.ok_or(CliError::Runtime(
                "opt schedule requested without reference diagnostics".into(),
            ))?;
            Ok(ScheduleSpec {
                momentum: MomentumSpec::Constant { alpha: 0.0 },
                step: StepRule::Fixed(2.0 / (lipschitz + d.l_e)),
            })
        }
    }
}

fn load_instance(source: &InstanceSource) -> Result<L1LsInstance<f64>, CliError> {
    match source {
        InstanceSource::File(path) => {
            io::read_instance(path).map_err(|e| CliError::Usage(e.to_string()))
        }
        InstanceSource::Generate(g) => generate_instance(&GenerateParams {
            rows: g.m,
            cols: g.n,
            sparsity: g.sparsity,
            entry_std: g.std,
            rho: g.rho,
            seed: g.seed,
        })
        .map_err(|e| CliError::Usage(e.to_string())),
    }
}

pub fn cmd_run(config_path: &Path, out_dir_override: Option<PathBuf>) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let cfg: RunConfig = parse_run_config(&text, out_dir_override).map_err(CliError::Usage)?;

    let inst = load_instance(&cfg.instance)?;
    let n = inst.matrix().cols();
    fs::create_dir_all(&cfg.out_dir).map_err(runtime)?;

    let t_ref = Instant::now();
    let reference = reference_solve(&inst, cfg.gap_tol).map_err(runtime)?;
    eprintln!(
        "reference solve: gap {:.3e} after {} iterations ({:.2?})",
        reference.duality_gap,
        reference.iterations,
        t_ref.elapsed()
    );
    write_json(
        &cfg.out_dir.join("reference.json"),
        &ReferenceFile {
            m: inst.rows(),
            n,
            rho: inst.rho(),
            lipschitz: inst.lipschitz_constant(),
            reference: reference.clone(),
        },
    )?;

    let diagnostics = if cfg
        .algorithms
        .iter()
        .any(|a| a.schedule.needs_instance_diagnostics())
    {
        Some(opt_diagnostics(&inst, &reference)?)
    } else {
        None
    };

    let stride = match cfg.snapshots {
        SnapshotPolicy::Default => Some(if n <= 500 { 1 } else { 10 }),
        SnapshotPolicy::Off => None,
        SnapshotPolicy::Stride(s) => Some(s),
    };

    let problem = inst.problem();
    let x0 = vec![0.0; n];
    let mut entries: Vec<ComparisonEntry> = Vec::new();
    for algo in &cfg.algorithms {
        let t_run = Instant::now();
        let outcome = resolve_schedule(&algo.schedule, &inst, diagnostics.as_ref()).and_then(
            |spec| {
                let gram = algo
                    .schedule
                    .wants_gram_source()
                    .then(|| inst.matrix());
                let mut schedule = spec
                    .build(inst.lipschitz_constant(), gram)
                    .map_err(runtime)?;
                let mut options = RunOptions::new(TerminationRule {
                    max_iter: algo.max_iter,
                    target_gap: algo.target_gap,
                    step_tol: algo.step_tol,
                })
                .with_f_ref(reference.f_star);
                options.snapshot_stride = stride;
                engine::run(&problem, &mut schedule, &x0, algo.algorithm, &options)
                    .map_err(runtime)
            },
        );
        match outcome {
            Ok(trace) => {
                io::write_trace_csv(&cfg.out_dir.join(format!("{}.csv", algo.name)), &trace)
                    .map_err(runtime)?;
                write_json(
                    &cfg.out_dir.join(format!("{}.summary.json", algo.name)),
                    &SummaryFile {
                        name: algo.name.clone(),
                        status: "ok".into(),
                        error: None,
                        summary: Some(trace.summary.clone()),
                    },
                )?;
                if let Some(s) = stride {
                    io::write_snapshots(
                        &cfg.out_dir.join(format!("{}.snaps", algo.name)),
                        &trace.snapshots,
                        s,
                        n,
                    )
                    .map_err(runtime)?;
                }
                eprintln!(
                    "{}: {} iterations, final gap {:.3e} ({:.2?})",
                    algo.name,
                    trace.summary.iterations,
                    trace.summary.final_gap.unwrap_or(f64::NAN),
                    t_run.elapsed()
                );
                entries.push(ComparisonEntry {
                    name: algo.name.clone(),
                    algo: algo.algorithm,
                    schedule: algo.schedule_text.clone(),
                    status: "ok".into(),
                    error: None,
                    iterations: Some(trace.summary.iterations),
                    final_gap: trace.summary.final_gap,
                    iterations_to_threshold: analysis::iterations_to_thresholds(
                        &trace.rows,
                        &COMPARISON_THRESHOLDS,
                    ),
                });
            }
            Err(err) => {
                eprintln!("{}: failed: {}", algo.name, err.message());
                write_json(
                    &cfg.out_dir.join(format!("{}.summary.json", algo.name)),
                    &SummaryFile {
                        name: algo.name.clone(),
                        status: "error".into(),
                        error: Some(err.message().to_string()),
                        summary: None,
                    },
                )?;
                entries.push(ComparisonEntry {
                    name: algo.name.clone(),
                    algo: algo.algorithm,
                    schedule: algo.schedule_text.clone(),
                    status: "error".into(),
                    error: Some(err.message().to_string()),
                    iterations: None,
                    final_gap: None,
                    iterations_to_threshold: vec![None; COMPARISON_THRESHOLDS.len()],
                });
            }
        }
    }
    write_json(
        &cfg.out_dir.join("comparison.json"),
        &ComparisonFile {
            f_star: reference.f_star,
            gap_tol: cfg.gap_tol,
            thresholds: COMPARISON_THRESHOLDS.to_vec(),
            algorithms: entries,
        },
    )?;
    Ok(())
}

pub struct AnalyzeArgs {
    pub dir: PathBuf,
    pub instance: PathBuf,
    pub algos: Vec<String>,
    pub threshold: f64,
    pub window_fraction: f64,
    pub gap_tol: f64,
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let inst = io::read_instance(&args.instance).map_err(|e| CliError::Usage(e.to_string()))?;
    let reference_path = args.dir.join("reference.json");
    let reference = if reference_path.exists() {
        read_json::<ReferenceFile>(&reference_path)?.reference
    } else {
        eprintln!("no reference.json in {}; solving fresh", args.dir.display());
        reference_solve(&inst, args.gap_tol).map_err(runtime)?
    };

    let names: Vec<String> = if args.algos.is_empty() {
        let mut found: Vec<String> = fs::read_dir(&args.dir)
            .map_err(runtime)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".csv").map(str::to_string)
            })
            .collect();
        found.sort();
        found
    } else {
        args.algos.clone()
    };
    if names.is_empty() {
        return Err(CliError::Usage(format!(
            "no trace CSVs found in {}",
            args.dir.display()
        )));
    }

    let de = classify_de(&reference.h_star, inst.rho(), args.threshold).map_err(runtime)?;
    let l_e = if !de.e.is_empty() {
        linalg::smallest_restricted_eigenvalue(inst.matrix(), &de.e).ok()
    } else {
        None
    };

    let mut failures: Vec<String> = Vec::new();
    for name in &names {
        let csv_path = args.dir.join(format!("{name}.csv"));
        let rows = match io::read_trace_csv(&csv_path) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let summary_file: SummaryFile =
            match read_json(&args.dir.join(format!("{name}.summary.json"))) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("{name}: {}", e.message()));
                    continue;
                }
            };
        let Some(summary) = summary_file.summary else {
            failures.push(format!(
                "{name}: run ended in error ({}); nothing to analyze",
                summary_file.error.unwrap_or_default()
            ));
            continue;
        };
        let snaps_path = args.dir.join(format!("{name}.snaps"));
        let (snapshots, snapshot_stride) = if snaps_path.exists() {
            match io::read_snapshots(&snaps_path) {
                Ok((s, stride)) => (s, Some(stride)),
                Err(e) => {
                    failures.push(format!("{name}: {e}"));
                    continue;
                }
            }
        } else {
            (Vec::new(), None)
        };
        let trace = SolverTrace {
            rows,
            snapshots,
            snapshot_stride,
            summary,
        };

        let mut rate_start = trace.summary.last_support_change.unwrap_or(0);
        match manifold_report(&trace, &inst, &reference, args.threshold) {
            Ok(report) => {
                if let (Some(ks), Some(kd)) = (report.k_sign, report.k_support) {
                    rate_start = rate_start.max(ks).max(kd);
                }
                write_json(&args.dir.join(format!("{name}.manifold.json")), &report)?;
            }
            Err(AnalysisError::NeedsDenseSnapshots(msg)) => {
                failures.push(format!(
                    "{name}: identification analysis skipped: {msg}"
                ));
            }
            Err(e) => {
                failures.push(format!("{name}: {e}"));
            }
        }
        match rate_report(&trace, &reference, rate_start, args.window_fraction, l_e) {
            Ok(report) => {
                write_json(&args.dir.join(format!("{name}.rate.json")), &report)?;
            }
            Err(e) => {
                failures.push(format!("{name}: rate fit failed: {e}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("\n")))
    }
}

pub struct ValidateArgs {
    pub schedule: String,
    pub horizon: u64,
    pub lipschitz: Option<f64>,
    pub instance: Option<PathBuf>,
}

pub fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let request = parse_schedule(&args.schedule).map_err(CliError::Usage)?;
    let spec = match request {
        ScheduleRequest::Concrete(spec) => spec,
        _ => {
            return Err(CliError::Usage(
                "opt schedules derive their parameters from a reference solve; \
                 validate the resolved constant schedule instead"
                    .into(),
            ))
        }
    };
    let lipschitz = match (args.lipschitz, &args.instance) {
        (Some(l), None) => l,
        (None, Some(path)) => io::read_instance(path)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .lipschitz_constant(),
        _ => {
            return Err(CliError::Usage(
                "exactly one of --lipschitz or --instance is required".into(),
            ))
        }
    };
    if !(lipschitz > 0.0) {
        return Err(CliError::Usage("Lipschitz constant must be positive".into()));
    }
    let report = ifbs::schedule::validate(&spec, args.horizon, lipschitz)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(runtime)?
    );
    Ok(())
}
