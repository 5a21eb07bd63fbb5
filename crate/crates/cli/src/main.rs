//! `lafad` command-line tool: generate benchmark data, fit and persist
//! anomaly-detection ensembles, score series, run the repeated-split
//! evaluation protocol, and sweep benchmark grids. Exit codes: 0 success,
//! 1 usage or configuration error, 2 runtime error, 3 failed AUC assertion.

// Assertion guards use the negated form `!(x >= min)` so NaN fails too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use lafad::timeseries::format_timestamp;
use lafad::{
    apply_label_windows, config_fingerprint, draw_plan, emit_report, generate, load_label_windows,
    load_nab_csv, ordered_split, run_experiment, run_pipeline, write_label_windows, write_nab_csv,
    FittedEnsemble, Method, ReportFormat, TimeSeries,
};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "lafad",
    version,
    about = "Label-free anomaly detection for univariate time series"
)]
struct Cli {
    /// TOML config file; command-line flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (beats config file and the LAFAD_SEED env var).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark series plus its anomaly-window file.
    Generate(GenerateArgs),
    /// Fit an ensemble on a series CSV and persist the model as JSON.
    Fit(FitArgs),
    /// Score a series CSV with a persisted model.
    Score(ScoreArgs),
    /// Run the repeated-split evaluation protocol and emit a report.
    Evaluate(EvaluateArgs),
    /// Sweep anomaly-rate ratios and window sizes on synthetic data.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV path for the series.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Output CSV path for the anomaly label windows.
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    /// Series length in half-hour steps.
    #[arg(long)]
    len: Option<usize>,
    /// Poisson rate on the anomalous branch.
    #[arg(long)]
    lambda_anomaly: Option<f64>,
    /// Probability of the normal branch per step.
    #[arg(long)]
    normal_prob: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// Input series CSV (timestamp,value).
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Output path for the fitted model JSON.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Fraction of the series used for fitting; the rest calibrates weights.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Also write the bootstrap in-bag plan as text.
    #[arg(long, value_name = "PATH")]
    dump_plan: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Fitted model JSON produced by `fit`.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Input series CSV to score.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Output CSV path (timestamp,score,decision).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Input series CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Anomaly label windows CSV (start,end per line).
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    /// Dataset name recorded in the report.
    #[arg(long, default_value = "dataset")]
    dataset: String,
    /// Comma-separated methods to run.
    #[arg(long, default_value = "laf_ad,knn")]
    methods: String,
    /// Report format: json, csv, or markdown.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Windowed-feature width for the KNN baseline.
    #[arg(long)]
    window: Option<usize>,
    /// `method:min_auc` assertions checked after the run (repeatable).
    #[arg(long = "assert-auc", value_name = "METHOD:MIN")]
    assert_auc: Vec<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated lambda_anomaly / lambda_normal ratios.
    #[arg(long, default_value = "0.5,1.0,2.0")]
    ratios: String,
    /// Comma-separated window sizes.
    #[arg(long, default_value = "5,10")]
    windows: String,
    /// Series length per cell (default keeps the sweep quick).
    #[arg(long)]
    len: Option<usize>,
    /// Probability of the normal branch per step; the sweep default is
    /// denser than the generator's so every cell has both classes.
    #[arg(long)]
    normal_prob: Option<f64>,
    /// Split repeats per cell.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Report format: json or markdown.
    #[arg(long, default_value = "markdown")]
    format: String,
    /// Write the combined report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Failures carrying their process exit code: 1 config, 2 runtime, 3
/// assertion.
enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Assertion(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

trait IntoCli<T> {
    fn config_err(self) -> CliResult<T>;
    fn runtime_err(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> IntoCli<T> for std::result::Result<T, E> {
    fn config_err(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.into()))
    }

    fn runtime_err(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(err)) => {
            eprintln!("config error: {err:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
        Err(CliError::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref()).config_err()?;
    let seed = file.resolve_seed(cli.seed).config_err()?;
    match cli.command {
        Command::Generate(args) => cmd_generate(&file, seed, &args),
        Command::Fit(args) => cmd_fit(&file, seed, &args),
        Command::Score(args) => cmd_score(&args),
        Command::Evaluate(args) => cmd_evaluate(&file, seed, &args),
        Command::Benchmark(args) => cmd_benchmark(&file, seed, &args),
    }
}

fn cmd_generate(file: &FileConfig, seed: u64, args: &GenerateArgs) -> CliResult<()> {
    let mut cfg = file.synth_config(seed);
    if let Some(v) = args.len {
        cfg.len = v;
    }
    if let Some(v) = args.lambda_anomaly {
        cfg.lambda_anomaly = v;
    }
    if let Some(v) = args.normal_prob {
        cfg.normal_prob = v;
    }
    let fingerprint = config_fingerprint(&cfg).runtime_err()?;
    // Generation validates the full config; files are only created after it
    // succeeds.
    let output = generate(&cfg).config_err()?;
    write_nab_csv(&output.series, &args.out).runtime_err()?;
    let windows = output.anomaly_windows();
    write_label_windows(&windows, &args.labels).runtime_err()?;
    println!(
        "generated {} points ({} anomalous) to {}; {} label windows to {}; config {}",
        output.series.len(),
        output.labels.iter().filter(|&&l| l == 1).count(),
        args.out.display(),
        windows.len(),
        args.labels.display(),
        &fingerprint[..12],
    );
    Ok(())
}

fn cmd_fit(file: &FileConfig, seed: u64, args: &FitArgs) -> CliResult<()> {
    let pipeline = file.pipeline_config(seed).config_err()?;
    let mut split = file.split_spec(seed, 1).config_err()?;
    split.repeat_count = 1;
    if let Some(v) = args.train_fraction {
        split.train_fraction = v;
    }
    // A single fit uses the exact configured boundary.
    let split = split.fixed();
    let fingerprint = config_fingerprint(&(&pipeline, &split)).runtime_err()?;

    let series = load_nab_csv(&args.data).runtime_err()?;
    let (train, val) = ordered_split(&series, &split)
        .config_err()?
        .into_iter()
        .next()
        .expect("one repeat requested");
    let output = run_pipeline(&train, &val, &pipeline).runtime_err()?;
    if let Some(plan_path) = &args.dump_plan {
        // Reconstructs the plan run_pipeline derives from the same inputs.
        let plan = draw_plan(
            train.len(),
            pipeline.bootstraps,
            pipeline.alpha,
            pipeline.seed,
        )
        .runtime_err()?;
        std::fs::write(plan_path, plan.write_text())
            .with_context(|| format!("cannot write {}", plan_path.display()))
            .runtime_err()?;
    }
    output.fitted.save(&args.out).runtime_err()?;
    println!(
        "fitted {} models x {} bootstraps on {} train points ({} calibration); model to {}; config {}",
        pipeline.specs.len(),
        pipeline.bootstraps,
        train.len(),
        val.len(),
        args.out.display(),
        &fingerprint[..12],
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> CliResult<()> {
    // Model and data are both validated before the output file exists.
    let fitted = FittedEnsemble::load(&args.model).runtime_err()?;
    let series = load_nab_csv(&args.data).runtime_err()?;
    let out = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))
        .runtime_err()?;
    let mut out = BufWriter::new(out);
    let mut anomalies = 0usize;
    (|| -> Result<()> {
        writeln!(out, "timestamp,score,decision")?;
        for point in series.points() {
            let verdict = fitted.score_point(point)?;
            anomalies += verdict.decision as usize;
            writeln!(
                out,
                "{},{:.6},{}",
                format_timestamp(point.timestamp),
                verdict.combined_score,
                verdict.decision
            )?;
        }
        out.flush()?;
        Ok(())
    })()
    .runtime_err()?;
    println!(
        "scored {} points to {}; {} flagged anomalous",
        series.len(),
        args.out.display(),
        anomalies
    );
    Ok(())
}

fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    raw.split(',')
        .map(|part| part.trim().parse::<Method>().map_err(Into::into))
        .collect()
}

fn parse_assertion(raw: &str) -> Result<(Method, f64)> {
    let (name, min) = raw
        .split_once(':')
        .ok_or_else(|| anyhow!("assertion '{raw}' is not method:min_auc"))?;
    let method = name.trim().parse::<Method>()?;
    let min: f64 = min
        .trim()
        .parse()
        .with_context(|| format!("assertion threshold '{min}' is not a number"))?;
    Ok((method, min))
}

fn write_or_print(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)
                .with_context(|| format!("cannot write {}", path.display()))
                .runtime_err()?;
            println!("report written to {}", path.display());
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_evaluate(file: &FileConfig, seed: u64, args: &EvaluateArgs) -> CliResult<()> {
    let methods = parse_methods(&args.methods).config_err()?;
    let format: ReportFormat = args.format.parse().config_err()?;
    let assertions = args
        .assert_auc
        .iter()
        .map(|raw| parse_assertion(raw))
        .collect::<Result<Vec<_>>>()
        .config_err()?;
    let window = file.window(args.window).config_err()?;
    let pipeline = file.pipeline_config(seed).config_err()?;
    let split = file.split_spec(seed, 5).config_err()?;
    let knn = file.knn_config(window);

    let series = load_nab_csv(&args.data).runtime_err()?;
    let windows = load_label_windows(&args.labels).runtime_err()?;
    let labeled: TimeSeries = apply_label_windows(&series, &windows);

    let report = run_experiment(
        &labeled,
        &methods,
        &split,
        window,
        &pipeline,
        &knn,
        &args.dataset,
    )
    .runtime_err()?;
    let rendered = emit_report(&report, format).runtime_err()?;
    write_or_print(&rendered, args.out.as_ref())?;

    for (method, min) in assertions {
        let result = report
            .methods
            .iter()
            .find(|m| m.method == method)
            .ok_or_else(|| CliError::Config(anyhow!("assertion on {method}, which did not run")))?;
        if !(result.mean_auc >= min) {
            return Err(CliError::Assertion(format!(
                "{method} mean AUC {:.4} < required {min}",
                result.mean_auc
            )));
        }
        println!(
            "assertion passed: {method} mean AUC {:.4} >= {min}",
            result.mean_auc
        );
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let values = raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .with_context(|| format!("invalid {what} '{part}'"))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        anyhow::bail!("{what} list is empty");
    }
    Ok(values)
}

fn cmd_benchmark(file: &FileConfig, seed: u64, args: &BenchmarkArgs) -> CliResult<()> {
    let ratios: Vec<f64> = parse_list(&args.ratios, "ratio").config_err()?;
    let windows: Vec<usize> = parse_list(&args.windows, "window").config_err()?;
    if !matches!(args.format.as_str(), "json" | "markdown" | "md") {
        return Err(CliError::Config(anyhow!(
            "benchmark format must be json or markdown, got '{}'",
            args.format
        )));
    }
    let pipeline = file.pipeline_config(seed).config_err()?;
    let split = {
        let mut s = file.split_spec(seed, args.repeats).config_err()?;
        s.repeat_count = args.repeats;
        s
    };

    let mut cells = Vec::new();
    for &ratio in &ratios {
        let mut synth = file.synth_config(seed);
        synth.lambda_anomaly = synth.lambda_normal * ratio;
        synth.len = args.len.or(file.synth.len).unwrap_or(4032);
        synth.normal_prob = args.normal_prob.or(file.synth.normal_prob).unwrap_or(0.97);
        let labeled = generate(&synth).config_err()?.labeled_series();
        for &window in &windows {
            let dataset = format!("synthetic ratio={ratio} window={window}");
            let knn = file.knn_config(window);
            let report = run_experiment(
                &labeled,
                &[Method::LafAd, Method::Knn],
                &split,
                window,
                &pipeline,
                &knn,
                &dataset,
            )
            .with_context(|| format!("benchmark cell '{dataset}'"))
            .runtime_err()?;
            cells.push((ratio, window, report));
        }
    }

    let rendered = if args.format == "json" {
        let reports: Vec<_> = cells.iter().map(|(_, _, r)| r).collect();
        serde_json::to_string_pretty(&reports).runtime_err()?
    } else {
        let mut text = String::from("| ratio | window | laf_ad mean AUC | knn mean AUC |\n");
        text.push_str("| --- | --- | --- | --- |\n");
        for (ratio, window, report) in &cells {
            let mean = |method: Method| {
                report
                    .methods
                    .iter()
                    .find(|m| m.method == method)
                    .map(|m| format!("{:.4}", m.mean_auc))
                    .unwrap_or_else(|| "-".to_string())
            };
            let _ = writeln!(
                text,
                "| {ratio} | {window} | {} | {} |",
                mean(Method::LafAd),
                mean(Method::Knn)
            );
        }
        text
    };
    write_or_print(&rendered, args.out.as_ref())
}
