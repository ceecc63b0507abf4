//! Command-line front end for the block-Hessenberg stationary solvers.
//!
//! `run` solves one model with one algorithm and emits the level-partitioned
//! distribution plus the convergence trace. `compare` evaluates two algorithms
//! on the same model at a matched stage and reports total-variation distances.
//! `bound` evaluates drift certificates: truncation-depth selection and
//! optional row-wise verification against a supplied Lyapunov vector.
//!
//! Exit codes: 0 on success/convergence, 2 when the level cap was reached
//! before the tolerance (the approximate result is still emitted), 1 on any
//! error.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mipform::diagnostics::{certificate_from_json, level_epsilon_bound, verify_drift_on_truncation};
use mipform::hessenberg::{
    qbd_stationary, takine_conditional, ConvergenceReport, Gim1Solver, LowerSolver, Schedule,
    SolveOutcome, StopReason, TakineVariant, UpperSolver,
};
use mipform::model::{builtin_gim1_map, builtin_map, model_from_json, Gim1Blocks};
use mipform::truncation::{augmented_generator, oracle_stationary};
use mipform::{AugmentationSpec, BlockGenerator, LevelVector, SolverPolicy};

/// Dense fallbacks materialize full truncations; beyond this many states the
/// request is almost certainly a mistake.
const DENSE_DIM_CAP: usize = 4000;

#[derive(Parser)]
#[command(
    name = "mipform",
    version,
    about = "Stationary distributions of block-Hessenberg Markov chains",
    after_help = "The environment variable HESSENBERG_MAX_THREADS caps internal parallelism; \
                  the current implementation computes on a single thread, so any value >= 1 \
                  is accepted and 1 is the effective default."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model with one algorithm
    Run(Box<RunArgs>),
    /// Evaluate two algorithms on the same model at a matched stage
    Compare(Box<CompareArgs>),
    /// Evaluate a drift certificate: truncation depth and optional verification
    Bound(Box<BoundArgs>),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model file (JSON)
    #[arg(long, conflicts_with = "builtin")]
    model: Option<PathBuf>,
    /// Builtin model: mm1 | level_dep_qbd | mg1_type | gim1_type | catastrophe_qbd
    #[arg(long)]
    builtin: Option<String>,
    /// Builtin parameter as KEY=VALUE, repeatable (e.g. --param lambda=1)
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    /// Stagewise solver for upper block-Hessenberg generators
    Upper,
    /// Stagewise solver for lower block-Hessenberg generators
    Lower,
    /// Stagewise solver for GI/M/1-type generators
    Gim1,
    /// Dense balance-equation solve of one augmented truncation
    Oracle,
    /// Conditional distribution over head levels from a deep stage
    Takine,
    /// Backward rate-matrix recursion baseline (block-tridiagonal only)
    QbdR,
}

impl Algorithm {
    fn name(&self) -> &'static str {
        match self {
            Algorithm::Upper => "upper",
            Algorithm::Lower => "lower",
            Algorithm::Gim1 => "gim1",
            Algorithm::Oracle => "oracle",
            Algorithm::Takine => "takine",
            Algorithm::QbdR => "qbd-r",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Linear,
    Doubling,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Lu,
    Leboudec,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TakineArg {
    MuForm,
    RowAverage,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Algorithm to run
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    /// Total-variation stopping tolerance for the stagewise solvers
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Deepest level a solver may visit; the oracle's truncation level
    #[arg(long, default_value_t = 10_000)]
    max_level: usize,
    /// Augmentation: uniform-last | unit:IDX | custom:w1,w2,...
    /// (for `upper`, unit indexes a phase within the newest level; for
    /// `oracle`, a state of the truncation; `lower`, `gim1`, `takine` and
    /// `qbd-r` pin their own augmentation and ignore this flag)
    #[arg(long, default_value = "uniform-last")]
    augmentation: String,
    /// Stage schedule for the lower solver
    #[arg(long, value_enum, default_value_t = ScheduleArg::Linear)]
    schedule: ScheduleArg,
    /// Inner inverse path for the stagewise solvers
    #[arg(long, value_enum, default_value_t = SolverArg::Lu)]
    solver: SolverArg,
    /// Output format (JSON nests by level; CSV emits level,phase,probability)
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    output: OutputFormat,
    /// Conditioning depth N for the takine algorithm
    #[arg(long)]
    takine_n: Option<usize>,
    /// Evaluation stage s for the takine algorithm (must exceed N)
    #[arg(long)]
    takine_s: Option<usize>,
    /// Aggregation variant for the takine algorithm
    #[arg(long, value_enum, default_value_t = TakineArg::MuForm)]
    takine_variant: TakineArg,
    /// Deepest level N of the qbd-r output
    #[arg(long)]
    qbd_n: Option<usize>,
    /// Extra backward-recursion depth L for qbd-r
    #[arg(long, default_value_t = 60)]
    qbd_l: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// First algorithm
    #[arg(long, value_enum)]
    algorithm_a: Algorithm,
    /// Second algorithm
    #[arg(long, value_enum)]
    algorithm_b: Algorithm,
    /// Stage at which both algorithms are evaluated; defaults to the stage
    /// where the first algorithm converges
    #[arg(long)]
    stage: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    max_level: usize,
    #[arg(long, default_value = "uniform-last")]
    augmentation: String,
    #[arg(long, value_enum, default_value_t = SolverArg::Lu)]
    solver: SolverArg,
    #[arg(long)]
    takine_n: Option<usize>,
    #[arg(long, default_value_t = 60)]
    qbd_l: usize,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Certificate file (JSON)
    #[arg(long)]
    cert: PathBuf,
    /// Error budget for the truncation depth
    #[arg(long)]
    epsilon: f64,
    /// Lyapunov vector file (JSON array of per-state values) to verify against
    #[arg(long)]
    lyapunov: Option<PathBuf>,
    /// Deepest level checked by the verification
    #[arg(long, default_value_t = 50)]
    max_level: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct RunOutput {
    model: String,
    algorithm: String,
    approximate: bool,
    stage: Option<usize>,
    levels: Vec<Vec<f64>>,
    report: Option<ConvergenceReport>,
}

#[derive(Debug, Serialize)]
struct CompareOutput {
    model: String,
    algorithm_a: String,
    algorithm_b: String,
    stage: usize,
    total_tv: f64,
    per_level: Vec<LevelTv>,
}

#[derive(Debug, Serialize)]
struct LevelTv {
    level: usize,
    tv: f64,
}

#[derive(Debug, Serialize)]
struct BoundOutput {
    model: String,
    epsilon: f64,
    n_epsilon: usize,
    drift_checked_states: Option<usize>,
    drift_violation: Option<String>,
}

fn main() -> ExitCode {
    if let Err(msg) = check_thread_env() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Compare(args) => cmd_compare(*args),
        Command::Bound(args) => cmd_bound(*args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn check_thread_env() -> Result<(), String> {
    if let Ok(raw) = std::env::var("HESSENBERG_MAX_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!(
                "HESSENBERG_MAX_THREADS must be a positive integer, got '{raw}'"
            )),
        }
    } else {
        Ok(())
    }
}

/// The model plus, when applicable, the repeating-block view needed by gim1.
struct LoadedModel {
    name: String,
    generator: BlockGenerator,
}

fn load_model(args: &ModelArgs) -> Result<LoadedModel, String> {
    match (&args.model, &args.builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let parsed = model_from_json(&text).map_err(|e| e.to_string())?;
            Ok(LoadedModel {
                name: path.display().to_string(),
                generator: parsed.model,
            })
        }
        (None, Some(name)) => {
            let params = parse_params(&args.params)?;
            let generator = builtin_map(name, &params).map_err(|e| e.to_string())?;
            Ok(LoadedModel { name: generator.name().to_string(), generator })
        }
        _ => Err("exactly one of --model or --builtin is required".into()),
    }
}

fn gim1_blocks_for(args: &ModelArgs, model: &LoadedModel) -> Result<Gim1Blocks, String> {
    if args.builtin.as_deref() == Some("gim1_type") {
        let params = parse_params(&args.params)?;
        return builtin_gim1_map(&params).map_err(|e| e.to_string());
    }
    Gim1Blocks::from_generator(&model.generator, 8).map_err(|e| e.to_string())
}

fn parse_params(raw: &[String]) -> Result<HashMap<String, f64>, String> {
    let mut map = HashMap::new();
    for item in raw {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| format!("parameter '{item}' is not KEY=VALUE"))?;
        let value: f64 = value
            .parse()
            .map_err(|_| format!("parameter '{item}' has a non-numeric value"))?;
        if map.insert(key.to_string(), value).is_some() {
            return Err(format!("parameter '{key}' given twice"));
        }
    }
    Ok(map)
}

fn parse_augmentation(raw: &str) -> Result<AugmentationSpec, String> {
    if raw == "uniform-last" {
        return Ok(AugmentationSpec::UniformLastLevel);
    }
    if let Some(idx) = raw.strip_prefix("unit:") {
        let nu: usize = idx
            .parse()
            .map_err(|_| format!("augmentation index '{idx}' is not an integer"))?;
        return Ok(AugmentationSpec::UnitColumn(nu));
    }
    if let Some(list) = raw.strip_prefix("custom:") {
        let weights: Result<Vec<f64>, _> = list.split(',').map(str::parse::<f64>).collect();
        let weights = weights.map_err(|_| format!("custom weights '{list}' are not numeric"))?;
        return Ok(AugmentationSpec::Custom(weights));
    }
    Err(format!(
        "augmentation '{raw}' not recognized; use uniform-last, unit:IDX, or custom:w1,w2,..."
    ))
}

fn solver_policy(arg: SolverArg) -> SolverPolicy {
    match arg {
        SolverArg::Lu => SolverPolicy::Lu,
        SolverArg::Leboudec => SolverPolicy::LeBoudec,
    }
}

fn check_dense_dim(model: &BlockGenerator, level: usize) -> Result<(), String> {
    let dim = model.dim_through(level);
    if dim > DENSE_DIM_CAP {
        return Err(format!(
            "truncation at level {level} has {dim} states; dense evaluation is capped at \
             {DENSE_DIM_CAP} states, pass a smaller --max-level / stage"
        ));
    }
    Ok(())
}

/// Dense stationary vector of one augmented truncation.
fn run_oracle(
    model: &BlockGenerator,
    spec: &AugmentationSpec,
    level: usize,
) -> Result<LevelVector, String> {
    check_dense_dim(model, level)?;
    let qn = model.nw_corner(level).map_err(|e| e.to_string())?;
    let layout = model.layout_through(level);
    let alpha = spec.resolve_full(&layout).map_err(|e| e.to_string())?;
    let qbar = augmented_generator(&qn, &alpha).map_err(|e| e.to_string())?;
    let pi = oracle_stationary(&qbar).map_err(|e| e.to_string())?;
    Ok(layout.split(&pi))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let loaded = load_model(&args.model)?;
    let spec = parse_augmentation(&args.augmentation)?;
    let policy = solver_policy(args.solver);

    let (levels, stage, report): (LevelVector, Option<usize>, Option<ConvergenceReport>) =
        match args.algorithm {
            Algorithm::Upper => {
                let solver = UpperSolver::new(&loaded.generator, spec, policy)
                    .map_err(|e| e.to_string())?;
                let SolveOutcome { pi, report } = solver
                    .run(args.epsilon, args.max_level)
                    .map_err(|e| e.to_string())?;
                (pi, report.final_stage(), Some(report))
            }
            Algorithm::Lower => {
                let schedule = match args.schedule {
                    ScheduleArg::Linear => Schedule::Linear,
                    ScheduleArg::Doubling => Schedule::Doubling,
                };
                let solver = LowerSolver::new(&loaded.generator, policy, schedule)
                    .map_err(|e| e.to_string())?;
                let SolveOutcome { pi, report } = solver
                    .run(args.epsilon, args.max_level)
                    .map_err(|e| e.to_string())?;
                (pi, report.final_stage(), Some(report))
            }
            Algorithm::Gim1 => {
                let blocks = gim1_blocks_for(&args.model, &loaded)?;
                let solver = Gim1Solver::new(blocks, policy).map_err(|e| e.to_string())?;
                let SolveOutcome { pi, report } = solver
                    .run(args.epsilon, args.max_level)
                    .map_err(|e| e.to_string())?;
                (pi, report.final_stage(), Some(report))
            }
            Algorithm::Oracle => {
                let pi = run_oracle(&loaded.generator, &spec, args.max_level)?;
                (pi, Some(args.max_level), None)
            }
            Algorithm::Takine => {
                let n = args.takine_n.ok_or("takine needs --takine-n")?;
                let s = args.takine_s.ok_or("takine needs --takine-s")?;
                let variant = match args.takine_variant {
                    TakineArg::MuForm => TakineVariant::MuForm,
                    TakineArg::RowAverage => TakineVariant::RowAverage,
                };
                let pi = takine_conditional(&loaded.generator, n, s, variant, policy)
                    .map_err(|e| e.to_string())?;
                (pi, Some(s), None)
            }
            Algorithm::QbdR => {
                let n = args.qbd_n.ok_or("qbd-r needs --qbd-n")?;
                check_dense_dim(&loaded.generator, n + args.qbd_l + 1)?;
                let pi = qbd_stationary(&loaded.generator, n, args.qbd_l)
                    .map_err(|e| e.to_string())?;
                (pi, Some(n), None)
            }
        };

    let approximate = matches!(
        report.as_ref().map(|r| &r.stop_reason),
        Some(StopReason::MaxLevelReached)
    );
    let out = RunOutput {
        model: loaded.name,
        algorithm: args.algorithm.name().to_string(),
        approximate,
        stage,
        levels: levels.parts().to_vec(),
        report,
    };
    match args.output {
        OutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
        }
        OutputFormat::Csv => {
            let mut text = String::from("level,phase,probability\n");
            for (level, part) in out.levels.iter().enumerate() {
                for (phase, p) in part.iter().enumerate() {
                    let _ = writeln!(text, "{level},{phase},{p}");
                }
            }
            print!("{text}");
        }
    }
    Ok(if approximate { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

/// Evaluates one algorithm at one exact stage.
fn evaluate_at_stage(
    algorithm: Algorithm,
    args: &CompareArgs,
    loaded: &LoadedModel,
    spec: &AugmentationSpec,
    stage: usize,
) -> Result<LevelVector, String> {
    let policy = solver_policy(args.solver);
    match algorithm {
        Algorithm::Upper => {
            let mut solver = UpperSolver::new(&loaded.generator, spec.clone(), policy)
                .map_err(|e| e.to_string())?;
            for _ in 0..=stage {
                solver.advance().map_err(|e| e.to_string())?;
            }
            Ok(solver.pi().unwrap().clone())
        }
        Algorithm::Lower => {
            let mut solver = LowerSolver::new(&loaded.generator, policy, Schedule::Linear)
                .map_err(|e| e.to_string())?;
            for _ in 0..=stage {
                solver.advance().map_err(|e| e.to_string())?;
            }
            Ok(solver.pi().unwrap().clone())
        }
        Algorithm::Gim1 => {
            if stage == 0 {
                return Err("gim1 produces its first output at stage 1".into());
            }
            let blocks = gim1_blocks_for(&args.model, loaded)?;
            let mut solver = Gim1Solver::new(blocks, policy).map_err(|e| e.to_string())?;
            for _ in 1..=stage {
                solver.advance().map_err(|e| e.to_string())?;
            }
            Ok(solver.pi().unwrap().clone())
        }
        Algorithm::Oracle => run_oracle(&loaded.generator, spec, stage),
        Algorithm::Takine => {
            let n = args.takine_n.ok_or("takine needs --takine-n")?;
            let pi = takine_conditional(&loaded.generator, n, stage, TakineVariant::MuForm, policy)
                .map_err(|e| e.to_string())?;
            Ok(pi)
        }
        Algorithm::QbdR => {
            check_dense_dim(&loaded.generator, stage + args.qbd_l + 1)?;
            qbd_stationary(&loaded.generator, stage, args.qbd_l).map_err(|e| e.to_string())
        }
    }
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode, String> {
    let loaded = load_model(&args.model)?;
    let spec = parse_augmentation(&args.augmentation)?;

    let stage = match args.stage {
        Some(s) => s,
        None => {
            // run the first algorithm to convergence and pin its stage
            let policy = solver_policy(args.solver);
            let outcome = match args.algorithm_a {
                Algorithm::Upper => UpperSolver::new(&loaded.generator, spec.clone(), policy)
                    .map_err(|e| e.to_string())?
                    .run(args.epsilon, args.max_level)
                    .map_err(|e| e.to_string())?,
                Algorithm::Lower => LowerSolver::new(&loaded.generator, policy, Schedule::Linear)
                    .map_err(|e| e.to_string())?
                    .run(args.epsilon, args.max_level)
                    .map_err(|e| e.to_string())?,
                Algorithm::Gim1 => {
                    let blocks = gim1_blocks_for(&args.model, &loaded)?;
                    Gim1Solver::new(blocks, policy)
                        .map_err(|e| e.to_string())?
                        .run(args.epsilon, args.max_level)
                        .map_err(|e| e.to_string())?
                }
                _ => {
                    return Err(
                        "--stage is required when the first algorithm is not a stagewise solver"
                            .into(),
                    )
                }
            };
            outcome
                .report
                .final_stage()
                .ok_or("first algorithm produced no stages")?
        }
    };

    let a = evaluate_at_stage(args.algorithm_a, &args, &loaded, &spec, stage)?;
    let b = evaluate_at_stage(args.algorithm_b, &args, &loaded, &spec, stage)?;
    if !a.same_shape(&b) {
        return Err(format!(
            "ShapeMismatch: outputs partition {} vs {} levels with differing sizes",
            a.levels(),
            b.levels()
        ));
    }
    let per_level: Vec<LevelTv> = (0..a.levels())
        .map(|k| LevelTv {
            level: k,
            tv: a
                .level(k)
                .iter()
                .zip(b.level(k))
                .map(|(x, y)| (x - y).abs())
                .sum(),
        })
        .collect();
    let out = CompareOutput {
        model: loaded.name,
        algorithm_a: args.algorithm_a.name().to_string(),
        algorithm_b: args.algorithm_b.name().to_string(),
        stage,
        total_tv: per_level.iter().map(|l| l.tv).sum(),
        per_level,
    };
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_bound(args: BoundArgs) -> Result<ExitCode, String> {
    let loaded = load_model(&args.model)?;
    let text = std::fs::read_to_string(&args.cert)
        .map_err(|e| format!("cannot read {}: {e}", args.cert.display()))?;
    let cert = certificate_from_json(&text).map_err(|e| e.to_string())?;
    let n_epsilon =
        level_epsilon_bound(&loaded.generator, &cert, args.epsilon).map_err(|e| e.to_string())?;

    let mut drift_checked_states = None;
    let mut drift_violation = None;
    if let Some(path) = &args.lyapunov {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let v: Vec<f64> =
            serde_json::from_str(&text).map_err(|e| format!("lyapunov file: {e}"))?;
        let report = verify_drift_on_truncation(&loaded.generator, &cert, &v, args.max_level)
            .map_err(|e| e.to_string())?;
        drift_checked_states = Some(report.checked_states);
        drift_violation = report.violation.map(|v| {
            format!("state {}: drift {} exceeds bound {}", v.state, v.drift, v.bound)
        });
    }
    let out = BoundOutput {
        model: loaded.name,
        epsilon: args.epsilon,
        n_epsilon,
        drift_checked_states,
        drift_violation: drift_violation.clone(),
    };
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
    Ok(if drift_violation.is_some() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}
