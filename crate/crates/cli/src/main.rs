use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qlearn::bounds::bounds_report;
use qlearn::embeddings::LabeledEnsemble;
use qlearn::harness::{self, DatasetSpec, ExperimentConfig, StrategyKind, SweepAxis, SweepRow, TestMode};
use qlearn::{Error, Result};

#[derive(Parser)]
#[command(name = "qlearn-lab", version, about = "Finite-copy quantum classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a scenario and write the result table.
    Run {
        config: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Repeat a scenario over the values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 100,1000,10000.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[command(flatten)]
        over: Overrides,
    },
    /// Print the closed-form bounds of a saved ensemble (or of the training
    /// set drawn from a config) as JSON.
    Bounds {
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        v: usize,
    },
    /// Draw the training set of trial 0 and save it to a directory.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Tomography,
    PeHelstrom,
    Representer,
    Kernel,
    FixedPovm,
    Dictionary,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Tomography => StrategyKind::Tomography,
            StrategyArg::PeHelstrom => StrategyKind::PeHelstrom,
            StrategyArg::Representer => StrategyKind::Representer,
            StrategyArg::Kernel => StrategyKind::Kernel,
            StrategyArg::FixedPovm => StrategyKind::FixedPovm,
            StrategyArg::Dictionary => StrategyKind::Dictionary,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TestModeArg {
    Majority,
    Collective,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    v: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    omega: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    test_mode: Option<TestModeArg>,
    #[arg(long)]
    known_states: bool,
    #[arg(long)]
    mc_tests: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Use a saved ensemble as the dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Result table path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write raw measurement outcomes to this CSV.
    #[arg(long)]
    dump_shots: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.$field = v; })* };
        }
        set!(n, s, v, seed, trials, mc_tests);
        if self.dim.is_some() {
            cfg.dim = self.dim;
        }
        if self.omega.is_some() {
            cfg.omega = self.omega;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s.into();
        }
        if let Some(m) = self.test_mode {
            cfg.test_mode = match m {
                TestModeArg::Majority => TestMode::Majority,
                TestModeArg::Collective => TestMode::Collective,
            };
        }
        if self.known_states {
            cfg.known_states = true;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(path) = self.dataset {
            cfg.dataset = DatasetSpec::File { path };
        }
        if self.output.is_some() {
            cfg.output = self.output;
        }
        if self.dump_shots.is_some() {
            cfg.dump_shots = self.dump_shots;
        }
        cfg
    }
}

fn load(config: &Path, over: Overrides) -> Result<ExperimentConfig> {
    let cfg = over.apply(ExperimentConfig::from_path(config)?);
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, rows: &[SweepRow]) -> Result<()> {
    match &cfg.output {
        Some(path) => harness::write_csv(rows, BufWriter::new(File::create(path)?))?,
        None => harness::write_csv(rows, io::stdout().lock())?,
    }
    if let Some(path) = &cfg.dump_shots {
        harness::write_shots(rows, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn is_saved_ensemble(path: &Path) -> bool {
    path.is_dir() || path.file_name().is_some_and(|f| f == "meta.json")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, over } => {
            let cfg = load(&config, over)?;
            emit(&cfg, &harness::run_rows(&cfg)?)
        }
        Command::Sweep { config, axis, values, over } => {
            let cfg = load(&config, over)?;
            let axis: SweepAxis = axis.parse()?;
            emit(&cfg, &harness::sweep(&cfg, axis, &values)?)
        }
        Command::Bounds { dataset, s, v } => {
            let ens = if is_saved_ensemble(&dataset) {
                LabeledEnsemble::load(&dataset)?
            } else {
                harness::generate(&ExperimentConfig::from_path(&dataset)?)?
            };
            let report = bounds_report(&ens, s, v)?;
            let mut out = io::stdout().lock();
            writeln!(out, "{}", report.to_json()?)?;
            Ok(())
        }
        Command::Generate { config, out, over } => {
            let cfg = load(&config, over)?;
            harness::generate(&cfg)?.save(&out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
