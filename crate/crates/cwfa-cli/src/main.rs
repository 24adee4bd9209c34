//! Command-line front end: simulate benchmark data, search the model grid,
//! fit a single model, classify with partial labels, and score partitions.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cwfa::aecm::FitConfig;
use cwfa::selection::render_report;
use cwfa::simulate::{example1_spec, example2_spec, sample_dataset, SimSpec};
use cwfa::{ari, fit, grid_search, kmeans_partition, ConstraintCode, CwfaError};

use io::{FitReport, TruthFile};

/// An error with the exit status it maps to: 2 for usage/input problems,
/// 3 for computational failures.
#[derive(Debug)]
pub struct CliError {
    message: String,
    exit: u8,
}

impl CliError {
    fn input(message: String) -> Self {
        CliError { message, exit: 2 }
    }

    fn input_str(message: &str) -> Self {
        Self::input(message.to_string())
    }
}

impl From<CwfaError> for CliError {
    fn from(err: CwfaError) -> Self {
        let exit = match err {
            CwfaError::InvalidInput(_) | CwfaError::InvalidParameter(_) => 2,
            _ => 3,
        };
        CliError {
            message: err.to_string(),
            exit,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cwfa",
    about = "Cluster-weighted factor analyzers: clustering, classification, and model selection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a built-in or user-provided generative spec.
    Simulate(SimulateArgs),
    /// Fit the model grid and rank everything by BIC.
    Search(SearchArgs),
    /// Fit one model with fixed code, G, and q.
    Fit(FitArgs),
    /// Semi-supervised classification from a partially labeled CSV.
    Classify(ClassifyArgs),
    /// Adjusted Rand index between two label files.
    Ari(AriArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// `example1`, `example2`, or a path to a spec JSON file.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (columns x1..xp, y).
    #[arg(long)]
    out: PathBuf,
    /// Also write the generating group as a `label` column in the CSV.
    #[arg(long, default_value_t = false)]
    with_labels: bool,
    /// Ground-truth JSON (labels and generating parameters).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct CommonFitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Response column name.
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Aitken stopping tolerance.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// k-means restarts for the starting partition.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent fits (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl CommonFitArgs {
    fn config(&self) -> Result<FitConfig, CliError> {
        let config = FitConfig {
            epsilon: self.epsilon,
            max_outer_iters: self.max_iters,
            seed: self.seed,
            restarts: self.restarts,
            ..FitConfig::default()
        };
        config.validate().map_err(CliError::from)?;
        Ok(config)
    }

    fn init_thread_pool(&self) {
        #[cfg(feature = "parallel")]
        if self.jobs > 0 {
            // Ignore the error when a pool already exists (tests, repeat calls).
            let _ = rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build_global();
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonFitArgs,
    /// Optional label column for semi-supervised search.
    #[arg(long)]
    label_col: Option<String>,
    /// Component counts, e.g. `2,3`.
    #[arg(long, value_delimiter = ',', required = true)]
    groups: Vec<usize>,
    /// Latent factor counts, e.g. `1,2`.
    #[arg(long, value_delimiter = ',', required = true)]
    factors: Vec<usize>,
    /// Model codes to report: `all` or a comma-separated list.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    codes: Vec<String>,
    /// Best-model JSON output.
    #[arg(long)]
    best_out: Option<PathBuf>,
    /// Full leaderboard JSON output.
    #[arg(long)]
    leaderboard_out: Option<PathBuf>,
    /// Plain-text group-factor report output.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonFitArgs,
    /// Four-letter model code, e.g. `UUCU`.
    #[arg(long)]
    code: String,
    #[arg(long)]
    groups: usize,
    #[arg(long)]
    factors: usize,
    /// Model JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonFitArgs,
    /// Label column: empty cells are unlabeled, others hold indices 1..=G.
    #[arg(long)]
    label_col: String,
    #[arg(long, value_delimiter = ',', required = true)]
    groups: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    factors: Vec<usize>,
    #[arg(long, default_value = "all", value_delimiter = ',')]
    codes: Vec<String>,
    /// Predicted labels CSV output (given labels echoed unchanged).
    #[arg(long)]
    labels_out: PathBuf,
    /// Best-model JSON output.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    leaderboard_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct AriArgs {
    /// First label file (one label per line).
    file_a: PathBuf,
    /// Second label file (one label per line).
    file_b: PathBuf,
}

fn parse_codes(raw: &[String]) -> Result<Vec<ConstraintCode>, CliError> {
    if raw.len() == 1 && raw[0].eq_ignore_ascii_case("all") {
        return Ok(ConstraintCode::all());
    }
    raw.iter()
        .map(|s| s.parse::<ConstraintCode>().map_err(CliError::from))
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let spec: SimSpec = match args.spec.as_str() {
        "example1" => example1_spec(args.seed),
        "example2" => example2_spec(args.seed),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read spec {path}: {e}")))?;
            let mut spec = SimSpec::from_json(&text)?;
            spec.seed = args.seed;
            spec
        }
    };
    let (data, truth) = sample_dataset(&spec)?;
    io::write_dataset_csv(&args.out, &data, args.with_labels.then_some(truth.as_slice()))?;
    if let Some(truth_out) = &args.truth_out {
        let file = TruthFile {
            format_version: io::REPORT_FORMAT_VERSION,
            labels: truth.iter().map(|&g| g + 1).collect(),
            spec,
        };
        io::write_file(
            truth_out,
            &serde_json::to_string_pretty(&file).expect("truth serialization"),
        )?;
    }
    println!("wrote {} rows to {}", data.n(), args.out.display());
    Ok(())
}

fn cmd_search(args: &SearchArgs) -> Result<(), CliError> {
    args.common.init_thread_pool();
    let codes = parse_codes(&args.codes)?;
    let loaded = io::read_dataset(&args.common.input, &args.common.y_col, args.label_col.as_deref())?;
    let config = args.common.config()?;
    let (result, fits) = grid_search(&loaded.dataset, &args.groups, &args.factors, &codes, &config)
        .map_err(CliError::from)?;

    let best = result.best_entry();
    println!(
        "best: {} G={} q={} BIC={:.3}",
        best.code,
        best.g,
        best.q,
        best.bic.expect("best entry has a BIC")
    );
    if let Some(path) = &args.best_out {
        let report = FitReport::from_result(fits[result.best].as_ref().expect("best fit retained"));
        io::write_file(path, &serde_json::to_string_pretty(&report).expect("fit serialization"))?;
    }
    if let Some(path) = &args.leaderboard_out {
        io::write_file(path, &result.to_json().expect("leaderboard serialization"))?;
    }
    if let Some(path) = &args.report_out {
        io::write_file(path, &render_report(&result))?;
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    args.common.init_thread_pool();
    let code: ConstraintCode = args.code.parse().map_err(CliError::from)?;
    let loaded = io::read_dataset(&args.common.input, &args.common.y_col, None)?;
    let config = args.common.config()?;
    let partition = kmeans_partition(&loaded.dataset, args.groups, config.restarts, config.seed)
        .map_err(CliError::from)?;
    let result = fit(&loaded.dataset, code, args.groups, args.factors, &partition, &config)
        .map_err(CliError::from)?;
    let report = FitReport::from_result(&result);
    io::write_file(&args.out, &serde_json::to_string_pretty(&report).expect("fit serialization"))?;
    println!(
        "fit: {} G={} q={} loglik={:.4} BIC={:.3} iterations={} converged={}",
        code, args.groups, args.factors, result.final_loglik, result.bic, result.iterations, result.converged
    );
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> Result<(), CliError> {
    args.common.init_thread_pool();
    let codes = parse_codes(&args.codes)?;
    let loaded = io::read_dataset(&args.common.input, &args.common.y_col, Some(&args.label_col))?;
    if !loaded.dataset.has_labels() {
        return Err(CliError::input_str("no labeled rows in the label column"));
    }
    if let (Some(max_label), Some(&min_g)) = (loaded.dataset.max_label(), args.groups.iter().min()) {
        if max_label >= min_g {
            return Err(CliError::input(format!(
                "label {} outside 1..={min_g}",
                max_label + 1
            )));
        }
    }
    let config = args.common.config()?;
    let (result, fits) = grid_search(&loaded.dataset, &args.groups, &args.factors, &codes, &config)
        .map_err(CliError::from)?;
    let best = result.best_entry();
    let best_fit = fits[result.best].as_ref().expect("best fit retained");

    io::write_labels_csv(&args.labels_out, &best_fit.map_labels)?;
    println!(
        "best: {} G={} q={} BIC={:.3}; labels written to {}",
        best.code,
        best.g,
        best.q,
        best.bic.expect("best entry has a BIC"),
        args.labels_out.display()
    );
    if let Some(path) = &args.model_out {
        let report = FitReport::from_result(best_fit);
        io::write_file(path, &serde_json::to_string_pretty(&report).expect("fit serialization"))?;
    }
    if let Some(path) = &args.leaderboard_out {
        io::write_file(path, &result.to_json().expect("leaderboard serialization"))?;
    }
    if let Some(path) = &args.report_out {
        io::write_file(path, &render_report(&result))?;
    }
    Ok(())
}

fn cmd_ari(args: &AriArgs) -> Result<(), CliError> {
    let a = io::read_label_file(&args.file_a)?;
    let b = io::read_label_file(&args.file_b)?;
    let value = ari(&a, &b).map_err(CliError::from)?;
    println!("{value:.4}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Search(args) => cmd_search(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Ari(args) => cmd_ari(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.exit)
        }
    }
}
