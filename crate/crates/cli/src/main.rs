use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_t::inference::Rope;
use latent_t::mcmc::PosteriorChains;
use latent_t::ordinal::OrdinalTruth;
use latent_t_cli::analysis::{OutputLock, EFFECT_SIZE, MU_DIFF};
use latent_t_cli::config::{ConfigError, ConfigFile, ModelKind, OUTPUT_DIR_ENV};
use latent_t_cli::error::{CliError, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK};
use latent_t_cli::report::{plot_file_name, plots_for, render_table, status_label, summarize_chains, write_json};
use latent_t_cli::simulate::{simulate_metric, simulate_ordinal, MetricTruth};
use latent_t_cli::{run_analysis, AnalysisConfig};

#[derive(Parser)]
#[command(name = "latent-t", version, about = "Bayesian estimation with latent t distributions for metric and Likert data")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze paired metric data (differences between two conditions).
    Metric(AnalysisArgs),
    /// Analyze Likert-scale answers with the ordinal threshold model.
    Ordinal(AnalysisArgs),
    /// Write a synthetic dataset and its truth file.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Summarize an existing draw dump and check convergence.
    Diagnose(DiagnoseArgs),
    /// Re-render plot data from an existing draw dump.
    Report(ReportArgs),
}

#[derive(Args)]
struct AnalysisArgs {
    /// Config file (TOML); flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Scale definition (ordinal only).
    #[arg(long)]
    scale: Option<PathBuf>,
    /// Output directory [env: LATENT_T_OUTPUT_DIR].
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Participant ids to drop, comma separated.
    #[arg(long, value_delimiter = ',')]
    exclude: Option<Vec<String>>,
    /// none, compress, pad_empty_only, pad_all_levels or pad_proportional.
    #[arg(long)]
    padding: Option<String>,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Paired metric data with t-distributed differences.
    #[command(allow_negative_numbers = true)]
    Metric {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        nu: f64,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        baseline: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Likert answers from a truth file (levels, groups, latents, items, thresholds).
    Ordinal {
        #[arg(long)]
        truth: PathBuf,
        /// Participants per group.
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    draws: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    hdi_mass: f64,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    draws: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    hdi_mass: f64,
    #[arg(long, default_value_t = -0.1, allow_hyphen_values = true)]
    rope_lo: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    rope_hi: f64,
    /// Quantities that get ROPE annotations (default: effect_size if present).
    #[arg(long, value_delimiter = ',')]
    rope_on: Option<Vec<String>>,
}

fn resolve(args: AnalysisArgs, model: ModelKind) -> Result<AnalysisConfig, CliError> {
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::empty(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field { file.$field = Some(v); }
        )*};
    }
    set!(data, scale, seed, chains, iterations, burn_in, exclude, padding);
    if let Some(o) = args.out {
        file.output_dir = Some(o);
    }
    let env = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    Ok(AnalysisConfig::resolve(&file, model, env)?)
}

fn analyze(args: AnalysisArgs, model: ModelKind) -> Result<i32, CliError> {
    let cfg = resolve(args, model)?;
    let outcome = run_analysis(&cfg)?;
    print!("{}", render_table(&outcome.report.quantities));
    println!("status: {} (results in {})", outcome.report.status, cfg.output_dir.display());
    if outcome.converged() {
        Ok(EXIT_OK)
    } else {
        eprintln!("not converged: {}", outcome.report.diagnostics.failing.join(", "));
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn read_dump(path: &PathBuf) -> Result<PosteriorChains, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    PosteriorChains::read_csv(std::io::BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn derived_in(chains: &PosteriorChains) -> Vec<&'static str> {
    [MU_DIFF, EFFECT_SIZE]
        .into_iter()
        .filter(|n| chains.param_names.iter().any(|p| p == n))
        .collect()
}

fn diagnose(args: DiagnoseArgs) -> Result<i32, CliError> {
    let chains = read_dump(&args.draws)?;
    let derived = derived_in(&chains);
    let (quantities, diagnostics) = summarize_chains(&chains, &derived, &[], Rope::default(), args.hdi_mass)?;
    if args.json {
        let doc = serde_json::json!({ "diagnostics": diagnostics, "quantities": quantities });
        println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| CliError::Analysis(e.to_string()))?);
    } else {
        print!("{}", render_table(&quantities));
        println!("status: {}", status_label(diagnostics.converged));
    }
    Ok(if diagnostics.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn report(args: ReportArgs) -> Result<i32, CliError> {
    let rope = Rope::new(args.rope_lo, args.rope_hi).map_err(|e| ConfigError::Invalid {
        key: "rope_lo/rope_hi",
        reason: e.to_string(),
    })?;
    if !(args.hdi_mass > 0.0 && args.hdi_mass < 1.0) {
        return Err(ConfigError::Invalid {
            key: "hdi_mass",
            reason: "must lie in (0, 1)".into(),
        }
        .into());
    }
    let chains = read_dump(&args.draws)?;
    let derived = derived_in(&chains);
    let rope_on: Vec<String> = args.rope_on.unwrap_or_else(|| {
        if derived.contains(&EFFECT_SIZE) {
            vec![EFFECT_SIZE.to_string()]
        } else {
            Vec::new()
        }
    });
    for name in &rope_on {
        chains.index_of(name).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let rope_refs: Vec<&str> = rope_on.iter().map(String::as_str).collect();
    let (quantities, _) = summarize_chains(&chains, &derived, &rope_refs, rope, args.hdi_mass)?;
    let _lock = OutputLock::acquire(&args.out)?;
    for plot in plots_for(&chains, &quantities) {
        let path = args.out.join(plot_file_name(&plot.quantity));
        write_json(&path, &plot)?;
        println!("{}", path.display());
    }
    Ok(EXIT_OK)
}

fn simulate(cmd: SimulateCommand) -> Result<i32, CliError> {
    let written = match cmd {
        SimulateCommand::Metric {
            mu,
            tau,
            nu,
            n,
            baseline,
            seed,
            out,
        } => simulate_metric(&MetricTruth { mu, tau, nu, baseline }, n, seed, &out)?,
        SimulateCommand::Ordinal { truth, n, seed, out } => {
            let text = std::fs::read_to_string(&truth).map_err(|e| CliError::io(format!("reading {}", truth.display()), e))?;
            let truth: OrdinalTruth =
                serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", truth.display())))?;
            simulate_ordinal(&truth, n, seed, &out)?
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    // usage errors count as configuration errors; clap's own code would
    // collide with the input-error code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Metric(a) => analyze(a, ModelKind::Metric),
        Command::Ordinal(a) => analyze(a, ModelKind::Ordinal),
        Command::Simulate(c) => simulate(c),
        Command::Diagnose(a) => diagnose(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
