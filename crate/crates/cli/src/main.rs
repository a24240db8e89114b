use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sensorsel::bench::{self, BenchError, KroneckerSource, ScalingConfig, SweepConfig};
use sensorsel::config::{ConfigError, ProblemConfig};
use sensorsel::kstore::{file_len, write_k, KStore, StoreError};
use sensorsel::lti::{ModelError, PosteriorEvaluator};
use sensorsel::parallel::{run_parallel_greedy, write_rounds_csv, ParallelConfig, ParallelError};
use sensorsel::selector::{evaluate_subset, naive_select, random_baseline, ObjectiveMode, SelectError, SelectionTrace};
use sensorsel::BlockSource;

const EXIT_OTHER: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "sensorsel", version, about = "Greedy D-optimal sensor selection for LTI inverse problems")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble K for a problem config and write it as a KBF file.
    Build {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Select sensors from a KBF file.
    Select(SelectArgs),
    /// Posterior variance and random-baseline comparison for a selection.
    Evaluate(EvaluateArgs),
    /// Timing benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Schur,
    Naive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Precision {
    F64,
    F32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    Raw,
    Normalized,
}

impl From<Objective> for ObjectiveMode {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Raw => ObjectiveMode::Raw,
            Objective::Normalized => ObjectiveMode::Normalized,
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    kbf: PathBuf,
    #[arg(short, long)]
    budget: usize,
    #[arg(short, long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = Mode::Schur)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pipeline: Switch,
    #[arg(long, value_enum, default_value_t = Objective::Normalized)]
    objective: Objective,
    /// Check replica agreement and factor reconstruction every round.
    #[arg(long)]
    audit: bool,
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    config: PathBuf,
    selection: PathBuf,
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Iterations at which to record the variance field (default: all).
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,
    /// Fail unless greedy beats every random sample.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-candidate scoring cost against k, naive vs Schur.
    Complexity(ComplexityArgs),
    /// Strong and weak scaling of one round.
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long, default_value_t = 32)]
    n_steps: usize,
    #[arg(long, default_value_t = 64)]
    k_max: usize,
    #[arg(long, default_value_t = 4)]
    step: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    /// Memory budget in MiB.
    #[arg(long, default_value_t = 2048)]
    memory_mib: usize,
    /// Time the refactorization kernel in place of the Schur kernel.
    #[arg(long)]
    disable_schur: bool,
    /// Exit nonzero unless the slope and speed checks hold.
    #[arg(long)]
    assert: bool,
    #[arg(short, long, default_value = "complexity.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    /// KBF file to read from; a synthetic matrix is used when absent.
    #[arg(long)]
    kbf: Option<PathBuf>,
    #[arg(long, default_value_t = 96)]
    n_sensors: usize,
    #[arg(long, default_value_t = 16)]
    n_steps: usize,
    #[arg(long, default_value_t = 8)]
    b_round: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    per_worker: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(short, long, default_value = "scaling.csv")]
    out: PathBuf,
}

/// A result check requested on the command line did not hold.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CheckFailed(String);

#[derive(Debug, Serialize, Deserialize)]
struct SelectionFile {
    n_sensors: usize,
    n_steps: usize,
    budget: usize,
    objective_mode: ObjectiveMode,
    chosen: Vec<usize>,
    objectives: Vec<f64>,
    gains: Vec<f64>,
    /// Objective of the final selection; zero when nothing is selected.
    objective: f64,
}

#[derive(Serialize)]
struct RunInfo {
    mode: Mode,
    precision: Precision,
    workers: usize,
    pipeline: bool,
    seed: u64,
    wall_ms: f64,
    bytes_exchanged: usize,
    trace: SelectionTrace,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<CheckFailed>() {
            return EXIT_CHECK;
        }
        if let Some(p) = cause.downcast_ref::<ParallelError>() {
            return match p {
                ParallelError::AllInfeasible => EXIT_INFEASIBLE,
                ParallelError::Select(s) => select_code(s),
                _ => EXIT_OTHER,
            };
        }
        if let Some(s) = cause.downcast_ref::<SelectError>() {
            return select_code(s);
        }
        if let Some(b) = cause.downcast_ref::<BenchError>() {
            return match b {
                BenchError::Assertion(_) => EXIT_CHECK,
                BenchError::Select(s) => select_code(s),
                BenchError::Store(_) | BenchError::Csv(_) => EXIT_IO,
                _ => EXIT_OTHER,
            };
        }
        if cause.is::<StoreError>() || cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return EXIT_IO;
        }
        if let Some(ConfigError::Io { .. }) = cause.downcast_ref::<ConfigError>() {
            return EXIT_IO;
        }
    }
    EXIT_OTHER
}

fn select_code(e: &SelectError) -> u8 {
    match e {
        SelectError::InfeasibleRound { .. } => EXIT_INFEASIBLE,
        SelectError::Store(_) => EXIT_IO,
        _ => EXIT_OTHER,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { config, out } => cmd_build(&config, &out),
        Command::Select(a) => cmd_select(a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed),
        Command::Bench(BenchCommand::Complexity(a)) => cmd_bench_complexity(a, cli.seed),
        Command::Bench(BenchCommand::Scaling(a)) => cmd_bench_scaling(a, cli.seed),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn cmd_build(config: &Path, out: &Path) -> Result<()> {
    let cfg = ProblemConfig::load(config)?;
    let (_, k) = cfg.assemble()?;
    write_k(&k, out)?;
    println!(
        "n_sensors={} n_steps={} bytes={}",
        k.n_sensors(),
        k.n_steps(),
        file_len(k.n_sensors(), k.n_steps())
    );
    Ok(())
}

fn cmd_select(a: SelectArgs, seed: u64) -> Result<()> {
    let store = KStore::open(&a.kbf)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let candidates: Vec<usize> = (0..store.n_sensors()).collect();
    let mode: ObjectiveMode = a.objective.into();
    let started = Instant::now();
    let (trace, rounds, bytes) = match a.mode {
        Mode::Naive => {
            if a.precision == Precision::F32 {
                bail!("--mode naive runs in f64 only");
            }
            if a.workers != 1 {
                log::warn!("--mode naive is single-threaded; ignoring --workers {}", a.workers);
            }
            let (_, trace) = naive_select(&store, &candidates, a.budget, mode)?;
            (trace, Vec::new(), 0)
        }
        Mode::Schur => {
            let config = ParallelConfig {
                n_workers: a.workers,
                seed,
                pipeline: a.pipeline == Switch::On,
                mode,
                audit: a.audit,
                ..ParallelConfig::default()
            };
            let (trace, rounds) = match a.precision {
                Precision::F64 => {
                    let r = run_parallel_greedy::<f64, _>(&store, &candidates, a.budget, &config)?;
                    (r.trace, r.rounds)
                }
                Precision::F32 => {
                    let r = run_parallel_greedy::<f32, _>(&store, &candidates, a.budget, &config)?;
                    (r.trace, r.rounds)
                }
            };
            let bytes = rounds.iter().map(|r| r.bytes).sum();
            (trace, rounds, bytes)
        }
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let selection = SelectionFile {
        n_sensors: store.n_sensors(),
        n_steps: store.n_steps(),
        budget: a.budget,
        objective_mode: mode,
        chosen: trace.chosen(),
        objectives: trace.objectives(),
        gains: trace.gains(),
        objective: trace.objectives().last().copied().unwrap_or(0.0),
    };
    write_json(&a.out_dir.join("selection.json"), &selection)?;
    trace.write_csv(create(&a.out_dir.join("trace.csv"))?)?;
    write_rounds_csv(&rounds, create(&a.out_dir.join("rounds.csv"))?)?;
    let info = RunInfo {
        mode: a.mode,
        precision: a.precision,
        workers: a.workers,
        pipeline: a.pipeline == Switch::On,
        seed,
        wall_ms,
        bytes_exchanged: bytes,
        trace,
    };
    write_json(&a.out_dir.join("run.json"), &info)?;
    println!(
        "selected {:?} objective={:.6} wall_ms={wall_ms:.1}",
        selection.chosen, selection.objective
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    chosen: Vec<usize>,
    greedy_objective: f64,
    n_samples: usize,
    random_mean: f64,
    random_min: f64,
    random_max: f64,
    /// Samples whose objective is at least the greedy one.
    n_random_at_least_greedy: usize,
    greedy_exceeds_mean: bool,
    greedy_dominates_all: bool,
    checkpoints: Vec<usize>,
    /// Parameter whose time-integrated variance shrank by the largest factor.
    most_reduced_param: usize,
    /// Parameter nearest to each selected sensor.
    nearest_params: Vec<usize>,
}

fn cmd_evaluate(a: EvaluateArgs, seed: u64) -> Result<()> {
    let cfg = ProblemConfig::load(&a.config)?;
    let text = fs::read_to_string(&a.selection).with_context(|| format!("cannot read {}", a.selection.display()))?;
    let sel: SelectionFile = serde_json::from_str(&text).with_context(|| format!("cannot parse {}", a.selection.display()))?;
    if sel.n_sensors != cfg.n_sensors || sel.n_steps != cfg.n_steps {
        bail!(
            "selection is for {} sensors × {} steps but the config describes {} × {}",
            sel.n_sensors,
            sel.n_steps,
            cfg.n_sensors,
            cfg.n_steps
        );
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let (problem, k) = cfg.assemble()?;
    let eval = PosteriorEvaluator::new(&problem).map_err(|e| match e {
        ModelError::TooLarge { .. } => anyhow::Error::new(e).context("evaluate needs a small problem"),
        other => other.into(),
    })?;

    let b = sel.chosen.len();
    let checkpoints = match a.checkpoints {
        Some(mut c) => {
            c.sort_unstable();
            c.dedup();
            if let Some(bad) = c.iter().find(|&&k| k > b) {
                bail!("checkpoint {bad} exceeds the {b} selected sensors");
            }
            c
        }
        None => (0..=b).collect(),
    };
    let (nm, nt) = (problem.n_params(), problem.n_steps());
    let mut w = csv::Writer::from_writer(create(&a.out_dir.join("variance.csv"))?);
    let mut header = vec!["k".to_string()];
    header.extend((0..nm).flat_map(|j| (0..nt).map(move |t| format!("p{j}_t{t}"))));
    w.write_record(&header)?;
    for &kk in &checkpoints {
        let v = eval.pointwise_variance(&sel.chosen[..kk])?;
        let mut row = vec![kk.to_string()];
        row.extend(v.as_slice().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let prior = eval.pointwise_variance(&[])?;
    let post = eval.pointwise_variance(&sel.chosen)?;
    let integrated = |f: &sensorsel::linalg::DenseBlock, j: usize| f.row(j).iter().sum::<f64>();
    let most_reduced_param = (0..nm)
        .max_by(|&x, &y| {
            let rx = integrated(&prior, x) / integrated(&post, x);
            let ry = integrated(&prior, y) / integrated(&post, y);
            rx.total_cmp(&ry)
        })
        .unwrap_or(0);
    let (params, sensors) = cfg.wave_spec().positions();
    let nearest_params = sel
        .chosen
        .iter()
        .map(|&s| {
            (0..params.len())
                .min_by(|&x, &y| (params[x] - sensors[s]).abs().total_cmp(&(params[y] - sensors[s]).abs()))
                .unwrap_or(0)
        })
        .collect();

    let candidates: Vec<usize> = (0..k.n_sensors()).collect();
    let greedy = evaluate_subset(&k, &sel.chosen)?.normalized;
    let samples = random_baseline(&k, &candidates, b, a.samples, seed)?;
    let mut w = csv::Writer::from_writer(create(&a.out_dir.join("random_baseline.csv"))?);
    w.write_record(["sample", "objective"])?;
    for (i, v) in samples.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let n_at_least = samples.iter().filter(|&&v| v >= greedy).count();
    let report = EvaluateReport {
        chosen: sel.chosen.clone(),
        greedy_objective: greedy,
        n_samples: samples.len(),
        random_mean: mean,
        random_min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        random_max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_random_at_least_greedy: n_at_least,
        greedy_exceeds_mean: greedy > mean,
        greedy_dominates_all: n_at_least == 0,
        checkpoints,
        most_reduced_param,
        nearest_params,
    };
    write_json(&a.out_dir.join("evaluate.json"), &report)?;
    println!(
        "greedy={greedy:.6} random mean={mean:.6} max={:.6} ({n_at_least}/{} samples at least greedy)",
        report.random_max,
        samples.len()
    );
    if a.strict && n_at_least > 0 {
        return Err(CheckFailed(format!("{n_at_least} random samples match or beat the greedy objective")).into());
    }
    Ok(())
}

fn cmd_bench_complexity(a: ComplexityArgs, seed: u64) -> Result<()> {
    let cfg = SweepConfig {
        n_steps: a.n_steps,
        k_max: a.k_max,
        step: a.step,
        reps: a.reps,
        batch: a.batch,
        memory_budget: a.memory_mib << 20,
        disable_schur: a.disable_schur,
        seed,
    };
    let table = bench::complexity_sweep(&cfg)?;
    table.write_csv(create(&a.out)?)?;
    let fmt = |s: Option<f64>| s.map_or_else(|| "n/a".to_string(), |s| format!("{s:.3}"));
    println!(
        "slopes over the top decade: schur={} naive={}",
        fmt(table.schur_slope()),
        fmt(table.naive_slope())
    );
    if a.assert {
        table.check()?;
    }
    Ok(())
}

fn cmd_bench_scaling(a: ScalingArgs, seed: u64) -> Result<()> {
    let cfg = ScalingConfig {
        b_round: a.b_round,
        worker_counts: a.workers,
        per_worker: a.per_worker,
        reps: a.reps,
        seed,
    };
    let host = std::thread::available_parallelism().map_or(1, |n| n.get());
    if let Some(&w) = cfg.worker_counts.iter().find(|&&w| w > host) {
        log::warn!("{w} workers exceed the {host} available cores; efficiencies will be poor");
    }
    let rows = match &a.kbf {
        Some(path) => {
            let store = KStore::open(path)?;
            let c: Vec<usize> = (0..store.n_sensors()).collect();
            bench::strong_weak_scaling::<f64, _>(&store, &c, &cfg)?
        }
        None => {
            let src = KroneckerSource::new(a.n_sensors, a.n_steps, seed);
            let c: Vec<usize> = (0..src.n_sensors()).collect();
            bench::strong_weak_scaling::<f64, _>(&src, &c, &cfg)?
        }
    };
    bench::write_scaling_csv(&rows, create(&a.out)?)?;
    for r in &rows {
        println!(
            "{:?} workers={} candidates={} wall_ms={:.3} efficiency={:.3}",
            r.mode, r.workers, r.n_candidates, r.wall_ms, r.efficiency
        );
    }
    Ok(())
}
