use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pardec_core::adapter::IdealServer;
use pardec_core::analytic::{
    monte_carlo_accuracy, replace_random_greedy_topk_accuracy, replace_random_temperature_onestep_accuracy,
    shuffle_topk_accuracy, threshold_accuracy, AccuracyEstimate,
};
use pardec_core::bench::{
    export_jsonl, gen_text_from_inputs, generate_batch, read_jsonl, BenchInstance, Difficulty, GenRequest, TextTask,
    DEFAULT_COUNT,
};
use pardec_core::decoding::{SamplerConfig, Strategy, StrategyConfig};
use pardec_core::eval::{
    accuracy_by_label, aggregate_tradeoff, default_gamma_grid, ideal_sweep, oracle_tradeoff,
    order_sensitivity_slope, parallelizability_center_of_mass, score_outputs, ModelOutput, RunRecord, SCHEMA_VERSION,
};
use pardec_core::info::{closed_form_c, closed_form_limit, optimal_lower_bound, total_correlation, MAX_EXHAUSTIVE_LEN};
use pardec_core::tasks::{enumerate_valid_outputs, TaskInstance, TaskKind, MAX_SHUFFLE_ENUMERATION};

/// Bad arguments caught after parsing; exits with status 1 like clap errors.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser)]
#[command(name = "pardec", version, about = "Parallel-decoding analysis, simulation and benchmark tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Total correlation and optimal step bounds per task and length.
    Analyze(AnalyzeArgs),
    /// Ideal-model Monte Carlo accuracy next to the closed form.
    Simulate(SimulateArgs),
    /// Ideal-model runs over a parameter grid, written as run records.
    Sweep(SweepArgs),
    /// Generate benchmark instances as JSONL.
    Gen(GenArgs),
    /// Score model outputs against instances, producing run records.
    Eval(EvalArgs),
    /// Aggregate run records into trade-off points and the oracle point.
    Tradeoff(TradeoffArgs),
    /// Center-of-mass and order-sensitivity metrics from score tables.
    Metrics(MetricsArgs),
    /// Serve the ideal model over the line-delimited JSON protocol on stdio.
    Serve(ServeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Task kind, or `all`.
    #[arg(long, default_value = "all")]
    task: String,
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 6)]
    n_max: usize,
    /// Also compute the optimal bound for every step count (length <= 8).
    #[arg(long)]
    bounds: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    RandomTopK,
    ConfidenceTopK,
    MarginTopK,
    EntropyTopK,
    LeftToRightTopK,
    ConfidenceThreshold,
    FactorBased,
}

#[derive(Args, Clone)]
struct StrategyArgs {
    #[arg(long, value_enum)]
    strategy: Family,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    block_length: Option<usize>,
}

fn build_strategy(family: Family, k: Option<usize>, gamma: Option<f64>, factor: Option<f64>) -> Result<Strategy> {
    let need_k = || k.ok_or_else(|| UsageError("--k is required for top-k strategies".into()));
    Ok(match family {
        Family::RandomTopK => Strategy::RandomTopK { k: need_k()? },
        Family::ConfidenceTopK => Strategy::ConfidenceTopK { k: need_k()? },
        Family::MarginTopK => Strategy::MarginTopK { k: need_k()? },
        Family::EntropyTopK => Strategy::EntropyTopK { k: need_k()? },
        Family::LeftToRightTopK => Strategy::LeftToRightTopK { k: need_k()? },
        Family::ConfidenceThreshold => Strategy::ConfidenceThreshold {
            gamma: gamma.ok_or_else(|| UsageError("--gamma is required for confidence-threshold".into()))?,
        },
        Family::FactorBased => Strategy::FactorBased {
            f: factor.ok_or_else(|| UsageError("--factor is required for factor-based".into()))?,
        },
    })
}

fn config(strategy: Strategy, block_length: Option<usize>) -> Result<StrategyConfig> {
    StrategyConfig::new(strategy, block_length).map_err(|e| UsageError(e.to_string()).into())
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long)]
    n: usize,
    /// Position for the index-parameterized tasks.
    #[arg(long)]
    index: Option<usize>,
}

impl TaskArgs {
    fn instance(&self) -> Result<TaskInstance> {
        let index = match (self.task.needs_index(), self.index) {
            (true, None) => Some(0),
            (false, Some(_)) => return usage(format!("{} takes no --index", self.task)),
            (_, i) => i,
        };
        TaskInstance::canonical(self.task, self.n, index).map_err(|e| UsageError(e.to_string()).into())
    }
}

#[derive(Args)]
struct SamplerArgs {
    /// 0 for greedy decoding.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplerArgs {
    fn sampler(&self) -> Result<SamplerConfig> {
        SamplerConfig::new(self.temperature, self.seed).map_err(|e| UsageError(e.to_string()).into())
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_enum, default_value = "confidence-threshold")]
    strategy: Family,
    /// Threshold grid (comma separated); defaults to 0.5,0.6,...,1.0.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// k grid for top-k families (comma separated).
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    factor: Vec<f64>,
    #[arg(long)]
    block_length: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long, default_value_t = 100)]
    runs: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CategoryArg {
    WaitingLine,
    Puzzle,
    TextWriting,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    category: CategoryArg,
    /// Task within the category, or `all`. Waiting line: a list operation;
    /// puzzle: latin_square | sudoku; text writing: w2s | summarization |
    /// paraphrasing.
    #[arg(long, default_value = "all")]
    task: String,
    /// List length (waiting line) or square size (Latin square).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Words-to-sentence difficulty, or `all`.
    #[arg(long, default_value = "all")]
    difficulty: String,
    /// Source texts, one per line, for summarization / paraphrasing.
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance JSONL written by `gen`.
    #[arg(long)]
    instances: PathBuf,
    /// Model outputs JSONL: {instance_id, output_text, total_steps?, ...}.
    #[arg(long)]
    outputs: PathBuf,
    /// Run records JSONL; the accuracy summary goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TradeoffArgs {
    #[arg(long)]
    records: PathBuf,
    /// Also compute the oracle point over the confidence-threshold runs.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Mean score per parallelism level, e.g. `1=1.0,2=0.8,4=0.2`.
    #[arg(long)]
    k_scores: Option<String>,
    /// Mean score per semi-AR block length, e.g. `1=0.2,4=0.6`.
    #[arg(long)]
    block_scores: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Registers every canonical instance up to this length.
    #[arg(long, default_value_t = 8)]
    max_n: usize,
}

fn resolve_tasks(task: &str) -> Result<Vec<TaskKind>> {
    if task == "all" {
        return Ok(TaskKind::ALL.to_vec());
    }
    task.parse::<TaskKind>().map(|k| vec![k]).map_err(|e| UsageError(e.to_string()).into())
}

fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: &Option<PathBuf>) -> Result<()> {
    let mut w = writer(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_jsonl<T: Serialize>(values: &[T], out: &Option<PathBuf>) -> Result<()> {
    let mut w = writer(out)?;
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct StepBound {
    steps: usize,
    bound_bits: f64,
    partition: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct AnalyzeRow {
    task: TaskKind,
    n: usize,
    support_size: usize,
    total_correlation_bits: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_bits: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<pardec_core::info::Limit>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    optimal_bounds: Vec<StepBound>,
}

#[derive(Serialize)]
struct Report<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn report<T>(body: T) -> Report<T> {
    Report { schema_version: SCHEMA_VERSION, body }
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    if args.n_min == 0 || args.n_min > args.n_max {
        return usage(format!("need 1 <= n-min <= n-max, got {}..={}", args.n_min, args.n_max));
    }
    let mut rows = Vec::new();
    for kind in resolve_tasks(&args.task)? {
        for n in args.n_min..=args.n_max {
            let index = kind.needs_index().then_some(0);
            let Ok(inst) = TaskInstance::canonical(kind, n, index) else { continue };
            if kind == TaskKind::Shuffle && n > MAX_SHUFFLE_ENUMERATION {
                continue;
            }
            let joint = enumerate_valid_outputs(&inst.task, &inst.input)?;
            let mut optimal_bounds = Vec::new();
            if args.bounds && joint.seq_len() <= MAX_EXHAUSTIVE_LEN {
                for steps in 1..=joint.seq_len() {
                    let (bound, partition) = optimal_lower_bound(&joint, steps)?;
                    optimal_bounds.push(StepBound { steps, bound_bits: bound.value(), partition: partition.blocks().to_vec() });
                }
            }
            rows.push(AnalyzeRow {
                task: kind,
                n,
                support_size: joint.support_size(),
                total_correlation_bits: total_correlation(&joint)?.value(),
                closed_form_bits: closed_form_c(kind, n).ok().map(|b| b.value()),
                limit: closed_form_limit(kind).ok(),
                optimal_bounds,
            });
        }
    }
    #[derive(Serialize)]
    struct Body {
        results: Vec<AnalyzeRow>,
    }
    emit_json(&report(Body { results: rows }), &args.out)
}

/// The closed form matching this configuration, if there is one.
fn closed_form_for(inst: &TaskInstance, config: &StrategyConfig, sampler: &SamplerConfig) -> Option<AccuracyEstimate> {
    let n = inst.task.n();
    let kind = inst.task.kind();
    if config.block_length().is_some() {
        return None;
    }
    let greedy = sampler.temperature() == 0.0;
    let unit_temp = sampler.temperature() == 1.0;
    match (kind, config.strategy()) {
        (TaskKind::Shuffle, Strategy::RandomTopK { k }) if unit_temp => shuffle_topk_accuracy(n, k).ok(),
        (TaskKind::ReplaceRandom, Strategy::RandomTopK { k } | Strategy::ConfidenceTopK { k }) if greedy => {
            replace_random_greedy_topk_accuracy(n, k).ok()
        }
        (TaskKind::ReplaceRandom, Strategy::RandomTopK { k } | Strategy::ConfidenceTopK { k }) if unit_temp && k == n => {
            replace_random_temperature_onestep_accuracy(n).ok()
        }
        (TaskKind::Shuffle | TaskKind::ReplaceRandom, Strategy::ConfidenceThreshold { gamma }) if greedy => {
            threshold_accuracy(kind, n, gamma).ok()
        }
        _ => None,
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let inst = args.task.instance()?;
    let s = &args.strategy;
    let config = config(build_strategy(s.strategy, s.k, s.gamma, s.factor)?, s.block_length)?;
    let sampler = args.sampler.sampler()?;
    if args.trials == 0 {
        return usage("--trials must be >= 1");
    }
    let summary = monte_carlo_accuracy(&inst, &config, &sampler, args.trials)?;
    #[derive(Serialize)]
    struct Body {
        task: TaskKind,
        n: usize,
        instance: String,
        strategy: String,
        k_or_gamma: Option<f64>,
        temperature: f64,
        seed: u64,
        mean: f64,
        ci: f64,
        trials: u64,
        tokens_per_step_mean: f64,
        closed_form: Option<f64>,
        deviation_sigmas: Option<f64>,
    }
    let closed = closed_form_for(&inst, &config, &sampler).map(|c| c.mean);
    let deviation = closed.and_then(|c| {
        let sigma = AccuracyEstimate::sigma_at(c, args.trials);
        if sigma > 0.0 {
            Some((summary.accuracy.mean - c).abs() / sigma)
        } else {
            (summary.accuracy.mean == c).then_some(0.0)
        }
    });
    let strategy = config.strategy();
    emit_json(
        &report(Body {
            task: inst.task.kind(),
            n: inst.task.n(),
            instance: inst.id.clone(),
            strategy: config.to_string(),
            k_or_gamma: strategy.k().map(|k| k as f64).or(strategy.gamma()),
            temperature: sampler.temperature(),
            seed: sampler.seed(),
            mean: summary.accuracy.mean,
            ci: summary.accuracy.half_width_95,
            trials: summary.accuracy.trials,
            tokens_per_step_mean: summary.tokens_per_step_mean,
            closed_form: closed,
            deviation_sigmas: deviation,
        }),
        &args.out,
    )
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let inst = args.task.instance()?;
    let sampler = args.sampler.sampler()?;
    let strategies: Vec<Strategy> = match args.strategy {
        Family::ConfidenceThreshold => {
            let grid = if args.gamma.is_empty() { default_gamma_grid() } else { args.gamma.clone() };
            grid.into_iter().map(|gamma| Strategy::ConfidenceThreshold { gamma }).collect()
        }
        Family::FactorBased => {
            if args.factor.is_empty() {
                return usage("--factor grid is required for factor-based");
            }
            args.factor.iter().map(|&f| Strategy::FactorBased { f }).collect()
        }
        family => {
            if args.k.is_empty() {
                return usage("--k grid is required for top-k strategies");
            }
            args.k.iter().map(|&k| build_strategy(family, Some(k), None, None)).collect::<Result<_>>()?
        }
    };
    let configs = strategies.into_iter().map(|s| config(s, args.block_length)).collect::<Result<Vec<_>>>()?;
    if args.runs == 0 {
        return usage("--runs must be >= 1");
    }
    let records = ideal_sweep(&[inst], &configs, &sampler, args.runs)?;
    emit_jsonl(&records, &args.out)
}

fn parse_difficulties(s: &str) -> Result<Vec<Difficulty>> {
    if s == "all" {
        return Ok(Difficulty::ALL.to_vec());
    }
    s.parse::<Difficulty>().map(|d| vec![d]).map_err(|e| UsageError(e.to_string()).into())
}

fn generate(args: &GenArgs) -> Result<()> {
    if args.count == 0 {
        return usage("--count must be >= 1");
    }
    let mut requests = Vec::new();
    let mut external: Option<TextTask> = None;
    match args.category {
        CategoryArg::WaitingLine => {
            let n = args.n.unwrap_or(5);
            for task in resolve_tasks(&args.task)? {
                requests.push(GenRequest::WaitingLine { task, n });
            }
        }
        CategoryArg::Puzzle => {
            let size = args.n.unwrap_or(4);
            match args.task.as_str() {
                "all" => requests.extend([GenRequest::LatinSquare { size }, GenRequest::Sudoku]),
                "latin_square" | "latin-square" => requests.push(GenRequest::LatinSquare { size }),
                "sudoku" => requests.push(GenRequest::Sudoku),
                other => return usage(format!("unknown puzzle task {other:?}")),
            }
        }
        CategoryArg::TextWriting => match args.task.as_str() {
            "all" | "w2s" => {
                for difficulty in parse_difficulties(&args.difficulty)? {
                    requests.push(GenRequest::WordsToSentence { difficulty });
                }
            }
            "summarization" => external = Some(TextTask::Summarization),
            "paraphrasing" => external = Some(TextTask::Paraphrasing),
            other => return usage(format!("unknown text-writing task {other:?}")),
        },
    }
    let mut instances: Vec<BenchInstance> = Vec::new();
    if let Some(task) = external {
        let Some(path) = &args.inputs else {
            return usage("--inputs is required for summarization and paraphrasing");
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let lines: Vec<String> =
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).take(args.count).collect();
        instances.extend(gen_text_from_inputs(task, &lines));
    }
    for request in &requests {
        let batch = generate_batch(request, args.count, args.seed).map_err(|e| match e {
            pardec_core::bench::BenchError::BadLength { .. } => anyhow::Error::new(UsageError(e.to_string())),
            other => other.into(),
        })?;
        instances.extend(batch);
    }
    let mut w = writer(&args.out)?;
    let written = export_jsonl(&instances, &mut w)?;
    if args.out.is_some() {
        eprintln!("wrote {written} instances");
    }
    Ok(())
}

fn evaluate(args: &EvalArgs) -> Result<()> {
    let file = File::open(&args.instances).with_context(|| format!("opening {}", args.instances.display()))?;
    let instances = read_jsonl(BufReader::new(file))?;
    let outputs: Vec<ModelOutput> = read_lines_jsonl(&args.outputs)?;
    let records = score_outputs(&instances, &outputs)?;
    #[derive(Serialize)]
    struct Body {
        summary: Vec<pardec_core::eval::AccuracySummary>,
    }
    match &args.out {
        Some(_) => {
            emit_jsonl(&records, &args.out)?;
            emit_json(&report(Body { summary: accuracy_by_label(&records) }), &None)
        }
        None => emit_jsonl(&records, &None),
    }
}

fn tradeoff(args: &TradeoffArgs) -> Result<()> {
    let records: Vec<RunRecord> = read_lines_jsonl(&args.records)?;
    let points = aggregate_tradeoff(&records)?;
    let oracle = if args.oracle {
        let threshold_runs: Vec<RunRecord> =
            records.iter().filter(|r| r.strategy.is_some_and(|s| s.strategy().gamma().is_some())).cloned().collect();
        Some(oracle_tradeoff(&threshold_runs)?)
    } else {
        None
    };
    #[derive(Serialize)]
    struct Body {
        points: Vec<pardec_core::eval::TradeoffPoint>,
        #[serde(skip_serializing_if = "Option::is_none")]
        oracle: Option<pardec_core::eval::TradeoffPoint>,
    }
    emit_json(&report(Body { points, oracle }), &args.out)
}

fn parse_score_table(s: &str) -> Result<BTreeMap<usize, f64>> {
    let mut table = BTreeMap::new();
    for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((k, v)) = pair.split_once('=') else {
            return usage(format!("expected key=score, got {pair:?}"));
        };
        let k: usize = k.trim().parse().map_err(|_| UsageError(format!("bad key in {pair:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| UsageError(format!("bad score in {pair:?}")))?;
        if table.insert(k, v).is_some() {
            return usage(format!("duplicate key {k}"));
        }
    }
    Ok(table)
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    if args.k_scores.is_none() && args.block_scores.is_none() {
        return usage("give --k-scores and/or --block-scores");
    }
    #[derive(Serialize)]
    struct Body {
        #[serde(skip_serializing_if = "Option::is_none")]
        parallelizability_center_of_mass: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        order_sensitivity_slope: Option<f64>,
    }
    let com = match &args.k_scores {
        Some(s) => Some(parallelizability_center_of_mass(&parse_score_table(s)?)?),
        None => None,
    };
    let slope = match &args.block_scores {
        Some(s) => Some(order_sensitivity_slope(&parse_score_table(s)?)?),
        None => None,
    };
    emit_json(&report(Body { parallelizability_center_of_mass: com, order_sensitivity_slope: slope }), &args.out)
}

fn serve(args: &ServeArgs) -> Result<()> {
    if args.max_n == 0 {
        return usage("--max-n must be >= 1");
    }
    let server = IdealServer::canonical(args.max_n);
    server.serve(io::stdin().lock(), io::stdout().lock())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Gen(a) => generate(a),
        Command::Eval(a) => evaluate(a),
        Command::Tradeoff(a) => tradeoff(a),
        Command::Metrics(a) => metrics(a),
        Command::Serve(a) => serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
