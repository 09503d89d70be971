mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use config::{Preset, RunConfig, VerifyMode};

/// Exit codes scripts depend on.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("external tool missing: {0}")]
    ToolMissing(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::ToolMissing(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "vforge", version, about = "Verilog training-data generation, repair data and pass@k evaluation")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads and concurrent simulator processes.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulator preset.
    #[arg(long, global = true, value_enum)]
    simulator: Option<Preset>,
    /// Directory holding the simulator executables.
    #[arg(long, global = true)]
    sim_tool_dir: Option<PathBuf>,
    /// Per-command simulator timeout in seconds.
    #[arg(long, global = true)]
    sim_timeout: Option<u64>,
    /// Scripted provider response file; replaces the configured provider.
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    /// -v for debug, -vv for trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forge, verify, filter and write problem records.
    Gen(GenArgs),
    /// Build repair records from (correct, erroneous) code pairs.
    Repair(RepairArgs),
    /// Judge completions and report pass@k.
    Eval(EvalArgs),
    /// Manage fingerprint databases.
    #[command(subcommand)]
    Fingerprint(FingerprintCmd),
}

#[derive(Args)]
struct GenArgs {
    /// Default per-kind counts (12.5k function, 8k machine, 8k waveform).
    #[arg(long, conflicts_with = "kind")]
    all: bool,
    /// Problem kind (kmap, truth_table, fsm_table, fsm_edge_list, wave_comb, wave_seq); repeatable.
    #[arg(long)]
    kind: Vec<String>,
    /// Records per `--kind`.
    #[arg(long, requires = "kind")]
    count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    verify: Option<VerifyMode>,
    #[arg(long)]
    verify_fraction: Option<f64>,
    #[arg(long)]
    rewrite_fraction: Option<f64>,
    /// Extra fingerprint database to screen against; repeatable.
    #[arg(long)]
    db: Vec<PathBuf>,
    /// Skip the shipped benchmark templates.
    #[arg(long)]
    no_templates: bool,
    /// Write the final database (templates, inputs and new records) here.
    #[arg(long)]
    save_db: Option<PathBuf>,
    #[arg(long)]
    rejections: Option<PathBuf>,
}

#[derive(Args)]
struct RepairArgs {
    /// JSONL of {id, problem, correct, erroneous, testbench_path}.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Seed code: a directory of .v files or JSONL of {id, code}.
    #[arg(long)]
    seeds: Option<PathBuf>,
    #[arg(long)]
    seeds_per_report: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every error report (validated or not) as JSONL.
    #[arg(long)]
    reports: Option<PathBuf>,
    #[arg(long)]
    rejections: Option<PathBuf>,
    #[arg(long)]
    db: Vec<PathBuf>,
    #[arg(long)]
    no_templates: bool,
    #[arg(long)]
    save_db: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL of {task_id, description|detail_description, header|prompt, testbench, reference?}.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Directory laid out as <task_id>/<idx>.v.
    #[arg(long, conflicts_with = "manifest")]
    completions: Option<PathBuf>,
    /// JSONL of {task_id, sample, completion}.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ks: Vec<u64>,
    /// Regex; a matching output line fails the sample.
    #[arg(long)]
    failure_pattern: Option<String>,
    /// Regex a passing run must print.
    #[arg(long)]
    success_pattern: Option<String>,
    #[arg(long)]
    results: Option<PathBuf>,
    /// Machine-readable summary (JSON).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Skip judging and compare result files given as LABEL=PATH.
    #[arg(long = "compare", value_name = "LABEL=PATH")]
    compare: Vec<String>,
}

#[derive(Subcommand)]
enum FingerprintCmd {
    /// Write a database holding the shipped benchmark templates.
    Init {
        #[arg(long)]
        out: PathBuf,
        /// Also expand templates from this file (same format as the shipped one).
        #[arg(long)]
        templates: Vec<PathBuf>,
    },
    /// Add benchmark source files as contamination entries.
    AddCode {
        #[arg(long)]
        db: PathBuf,
        /// Label; defaults to each file's stem.
        #[arg(long)]
        label: Option<String>,
        files: Vec<PathBuf>,
    },
    /// Add a dataset's record fingerprints.
    AddDataset {
        #[arg(long)]
        db: PathBuf,
        dataset: PathBuf,
    },
    /// Report dataset records already present in a database; exits 4 on any hit.
    Check {
        #[arg(long)]
        db: PathBuf,
        /// Include the shipped templates.
        #[arg(long)]
        templates: bool,
        dataset: PathBuf,
    },
    /// Count entries by label prefix.
    Stats {
        #[arg(long)]
        db: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        cfg.jobs = Some(j);
    }
    if let Some(p) = cli.simulator {
        cfg.simulator.preset = p;
    }
    if let Some(d) = cli.sim_tool_dir {
        cfg.simulator.tool_dir = Some(d);
    }
    if let Some(t) = cli.sim_timeout {
        cfg.simulator.timeout_secs = Some(t);
    }
    if let Some(jobs) = cfg.jobs {
        cfg.simulator.max_jobs = Some(jobs);
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Other(anyhow::anyhow!("thread pool: {e}")))?;
    }
    if let Some(script) = cli.mock_script {
        cfg.provider = vforge::provider::ProviderConfig::Scripted { script };
    }
    match cli.cmd {
        Cmd::Gen(a) => commands::gen(cfg, a),
        Cmd::Repair(a) => commands::repair(cfg, a),
        Cmd::Eval(a) => commands::eval(cfg, a),
        Cmd::Fingerprint(c) => commands::fingerprint(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
