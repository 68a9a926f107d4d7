use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use rfprox::bench::{
    self, render_criterion_table, render_grid_result, render_interval_report, render_reports, BenchConfig, GridSpec,
    Objective, ReportFormat,
};
use rfprox::dataset::{holdout_split, kfold_split, sliding_window_split, Dataset, MissingPolicy, SplitPlan};
use rfprox::quantile::{predict_quantiles, write_quantiles_csv, ALPHA_GRID};
use rfprox::{Criterion, Error, Forest, Model, Scheme, TreeParams};

#[derive(Parser, Debug)]
#[command(
    name = "rfprox",
    version,
    about = "Quantile regression with random forest proximities"
)]
struct Cli {
    /// TOML file supplying defaults for any flag. Top-level keys apply to
    /// every command; a `[command-name]` table applies to one command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a forest and save it together with its training table.
    Train(TrainArgs),
    /// Predict quantiles and 95% intervals for new rows.
    Predict(PredictArgs),
    /// Cross-validated comparison of the weighting schemes.
    Benchmark(BenchmarkArgs),
    /// Exhaustive k-fold hyperparameter search.
    GridSearch(GridArgs),
    /// Pinball loss of each scheme under each split criterion, over seeds.
    CriterionStudy(StudyArgs),
    /// Per-sample held-out intervals sorted by width.
    IntervalReport(IntervalArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column (default: last column).
    #[arg(long)]
    target: Option<String>,
    /// Rows with missing cells: drop or error.
    #[arg(long)]
    missing: Option<String>,
    /// Use only the first N rows.
    #[arg(long)]
    rows: Option<usize>,
    /// Replace the target by its natural log.
    #[arg(long)]
    log_target: bool,
    /// Pair features at time t with the target at t + H.
    #[arg(long, value_name = "H")]
    shift_target: Option<usize>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct ForestArgs {
    /// Number of trees [default: 100].
    #[arg(long)]
    trees: Option<usize>,
    /// [default: 12]
    #[arg(long)]
    max_depth: Option<usize>,
    /// Minimum distinct samples per leaf [default: 1].
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Minimum distinct samples to split a node [default: 2].
    #[arg(long)]
    min_split: Option<usize>,
    /// Features tried per split [default: floor(sqrt(p))].
    #[arg(long)]
    max_features: Option<usize>,
    /// Split criterion: mse, mae or pinball [default: mse].
    #[arg(long)]
    criterion: Option<String>,
    /// Level used by the pinball criterion [default: 0.5].
    #[arg(long)]
    pinball_alpha: Option<f64>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct OutputArgs {
    /// Output path (default: standard output).
    #[arg(long)]
    report: Option<PathBuf>,
    /// text, csv or json [default: text].
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV containing the model's feature columns.
    #[arg(long)]
    data: Option<PathBuf>,
    /// qrf, gap, oob or original [default: gap].
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated quantile levels.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    /// Comma-separated schemes or `all` [default: all].
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// kfold:K, sliding:K or holdout:FRACTION [default: kfold:5].
    #[arg(long)]
    cv: Option<String>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// TOML grid file; missing lists take the default candidates.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Number of folds [default: 5].
    #[arg(long)]
    cv: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// mean-pinball or mse [default: mean-pinball].
    #[arg(long)]
    objective: Option<String>,
    /// Scheme whose quantiles are scored [default: qrf].
    #[arg(long)]
    scheme: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct StudyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    /// Number of seeds, starting at --seed [default: 20].
    #[arg(long)]
    seeds: Option<usize>,
    /// Number of folds [default: 5].
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
struct IntervalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    forest: ForestArgs,
    /// [default: gap]
    #[arg(long)]
    scheme: Option<String>,
    /// Central interval level [default: 0.95].
    #[arg(long)]
    level: Option<f64>,
    /// [default: kfold:5]
    #[arg(long)]
    cv: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Fills unset flags from the config file. Flags given on the command line
/// win; `false` booleans count as unset.
fn merge<T: Serialize + DeserializeOwned>(args: T, config: Option<&Value>, command: &str) -> CliResult<T> {
    let Some(Value::Object(file)) = config else {
        return Ok(args);
    };
    let mut merged = serde_json::Map::new();
    for (k, v) in file {
        if !v.is_object() {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(Value::Object(section)) = file.get(command) {
        merged.extend(section.clone());
    }
    let Value::Object(cli) = serde_json::to_value(&args).map_err(|e| usage(e.to_string()))? else {
        unreachable!("argument structs serialize to maps");
    };
    for (k, v) in cli {
        if !(v.is_null() || v == Value::Bool(false)) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}

fn read_config(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| usage(format!("missing required option --{flag}")))
}

fn parse_or_usage<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.parse().map_err(|_| usage(format!("invalid {what} `{s}`")))
}

struct Loaded {
    data: Dataset,
    name: String,
    target: String,
}

fn load_data(a: &DataArgs) -> CliResult<Loaded> {
    let path = required(a.data.clone(), "data")?;
    let target = match &a.target {
        Some(t) => t.clone(),
        None => Dataset::read_header(&path)?
            .pop()
            .ok_or_else(|| Error::InvalidData("empty header".into()))?,
    };
    let policy = match a.missing.as_deref() {
        None | Some("drop") => MissingPolicy::DropRow,
        Some("error") => MissingPolicy::Error,
        Some(other) => return Err(usage(format!("invalid --missing `{other}` (drop or error)"))),
    };
    let mut data = Dataset::load_csv(&path, &target, policy)?;
    if let Some(m) = a.rows {
        data = data.head(m)?;
    }
    if a.log_target {
        data = data.log_transform_target()?;
    }
    if let Some(h) = a.shift_target {
        data = data.shift_target(h)?;
    }
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Loaded { data, name, target })
}

fn parse_criterion(name: Option<&str>, alpha: Option<f64>) -> CliResult<Criterion> {
    let c = match name.unwrap_or("mse") {
        "mse" => Criterion::Mse,
        "mae" => Criterion::Mae,
        "pinball" | "ql" => Criterion::Pinball {
            alpha: alpha.unwrap_or(0.5),
        },
        other => return Err(usage(format!("invalid --criterion `{other}` (mse, mae or pinball)"))),
    };
    c.validate()?;
    Ok(c)
}

fn tree_params(f: &ForestArgs) -> CliResult<(TreeParams, usize, u64)> {
    let d = TreeParams::default();
    let params = TreeParams {
        max_depth: f.max_depth.unwrap_or(d.max_depth),
        min_samples_split: f.min_split.unwrap_or(d.min_samples_split),
        min_samples_leaf: f.min_leaf.unwrap_or(d.min_samples_leaf),
        max_features: f.max_features,
        criterion: parse_criterion(f.criterion.as_deref(), f.pinball_alpha)?,
    };
    Ok((params, f.trees.unwrap_or(100), f.seed.unwrap_or(42)))
}

fn parse_scheme(s: Option<&str>, default: Scheme) -> CliResult<Scheme> {
    s.map_or(Ok(default), |s| parse_or_usage(s, "scheme"))
}

fn parse_schemes(list: Option<&[String]>) -> CliResult<Vec<Scheme>> {
    match list {
        None => Ok(Scheme::ALL.to_vec()),
        Some([one]) if one == "all" => Ok(Scheme::ALL.to_vec()),
        Some(items) => items.iter().map(|s| parse_or_usage(s.trim(), "scheme")).collect(),
    }
}

fn parse_cv(spec: Option<&str>, n: usize, seed: u64) -> CliResult<SplitPlan> {
    let spec = spec.unwrap_or("kfold:5");
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let plan = match kind {
        "kfold" => kfold_split(
            n,
            if arg.is_empty() {
                5
            } else {
                parse_or_usage(arg, "fold count")?
            },
            seed,
        )?,
        "sliding" => sliding_window_split(
            n,
            if arg.is_empty() {
                5
            } else {
                parse_or_usage(arg, "fold count")?
            },
        )?,
        "holdout" => holdout_split(
            n,
            if arg.is_empty() {
                0.2
            } else {
                parse_or_usage(arg, "test fraction")?
            },
            seed,
        )?,
        _ => {
            return Err(usage(format!(
                "invalid --cv `{spec}` (kfold:K, sliding:K or holdout:F)"
            )))
        }
    };
    Ok(plan)
}

fn parse_format(s: Option<&str>) -> CliResult<ReportFormat> {
    s.map_or(Ok(ReportFormat::Text), |s| parse_or_usage(s, "format"))
}

fn write_output(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        Some(p) => bench::write_file(p, content)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })?;
        }
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> CliResult<()> {
    let out = required(a.out.clone(), "out")?;
    let loaded = load_data(&a.data)?;
    let (params, n_trees, seed) = tree_params(&a.forest)?;
    let forest = Forest::fit(&loaded.data, &params, n_trees, seed)?;
    Model::new(forest, loaded.data, loaded.target)?.save(out)?;
    Ok(())
}

fn run_predict(a: PredictArgs) -> CliResult<()> {
    let model = Model::load(required(a.model.clone(), "model")?)?;
    let rows = Dataset::read_feature_rows(required(a.data.clone(), "data")?, model.training.feature_names())?;
    let scheme = parse_scheme(a.scheme.as_deref(), Scheme::Gap)?;
    let interval = (0.025, 0.975);
    let mut alphas = a.alphas.clone().unwrap_or_else(|| ALPHA_GRID.to_vec());
    alphas.extend([interval.0, interval.1]);
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let queries: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let estimates = predict_quantiles(&model.forest, &model.training, &queries, scheme, &alphas)?;
    let mut buf = Vec::new();
    write_quantiles_csv(&mut buf, &alphas, &estimates, interval)?;
    write_output(a.out.as_deref(), &String::from_utf8(buf).expect("csv output is utf-8"))
}

fn bench_config(name: String, f: &ForestArgs) -> CliResult<BenchConfig> {
    let (params, n_trees, seed) = tree_params(f)?;
    Ok(BenchConfig {
        dataset: name,
        params,
        n_trees,
        seed,
        ..BenchConfig::default()
    })
}

fn run_benchmark(a: BenchmarkArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let mut cfg = bench_config(loaded.name, &a.forest)?;
    cfg.schemes = parse_schemes(a.schemes.as_deref())?;
    if let Some(alphas) = &a.alphas {
        cfg.alphas = alphas.clone();
    }
    let plan = parse_cv(a.cv.as_deref(), loaded.data.n_rows(), cfg.seed)?;
    let reports = bench::run_benchmark(&loaded.data, &plan, &cfg)?;
    let text = render_reports(&reports, parse_format(a.output.format.as_deref())?)?;
    write_output(a.output.report.as_deref(), &text)
}

fn run_grid(a: GridArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let grid: GridSpec = match &a.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| usage(format!("grid {}: {e}", path.display())))?
        }
        None => GridSpec::default(),
    };
    let objective = match a.objective.as_deref() {
        None | Some("mean-pinball") | Some("pinball") => Objective::MeanPinball,
        Some("mse") => Objective::Mse,
        Some(other) => return Err(usage(format!("invalid --objective `{other}` (mean-pinball or mse)"))),
    };
    let base = BenchConfig {
        dataset: loaded.name,
        schemes: vec![parse_scheme(a.scheme.as_deref(), Scheme::Qrf)?],
        ..BenchConfig::default()
    };
    let result = bench::grid_search(
        &loaded.data,
        &grid,
        a.cv.unwrap_or(5),
        a.seed.unwrap_or(42),
        objective,
        &base,
    )?;
    let text = render_grid_result(&result, parse_format(a.output.format.as_deref())?)?;
    write_output(a.output.report.as_deref(), &text)
}

fn run_study(a: StudyArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let cfg = bench_config(loaded.name, &a.forest)?;
    let n_seeds = a.seeds.unwrap_or(20);
    if n_seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| cfg.seed + i).collect();
    let criteria = [
        Criterion::Mse,
        Criterion::Mae,
        parse_criterion(Some("pinball"), a.forest.pinball_alpha)?,
    ];
    let table = bench::criterion_study(&loaded.data, &cfg, &criteria, &seeds, a.folds.unwrap_or(5))?;
    let text = render_criterion_table(&table, parse_format(a.output.format.as_deref())?)?;
    write_output(a.output.report.as_deref(), &text)
}

fn run_interval(a: IntervalArgs) -> CliResult<()> {
    let loaded = load_data(&a.data)?;
    let mut cfg = bench_config(loaded.name, &a.forest)?;
    if let Some(level) = a.level {
        cfg.interval_level = level;
    }
    let scheme = parse_scheme(a.scheme.as_deref(), Scheme::Gap)?;
    let plan = parse_cv(a.cv.as_deref(), loaded.data.n_rows(), cfg.seed)?;
    let report = bench::interval_report(&loaded.data, &plan, &cfg, scheme)?;
    let text = render_interval_report(&report, parse_format(a.output.format.as_deref())?)?;
    write_output(a.output.report.as_deref(), &text)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let config = cli.config.as_deref().map(read_config).transpose()?;
    let config = config.as_ref();
    match cli.command {
        Command::Train(a) => run_train(merge(a, config, "train")?),
        Command::Predict(a) => run_predict(merge(a, config, "predict")?),
        Command::Benchmark(a) => run_benchmark(merge(a, config, "benchmark")?),
        Command::GridSearch(a) => run_grid(merge(a, config, "grid-search")?),
        Command::CriterionStudy(a) => run_study(merge(a, config, "criterion-study")?),
        Command::IntervalReport(a) => run_interval(merge(a, config, "interval-report")?),
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
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
