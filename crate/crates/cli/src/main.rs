//! `dash`: operator tool for the health-record ledger.
//!
//! Exit codes: 0 ok, 1 usage, 2 validation failure or unmet precondition,
//! 3 runtime error.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use dash_core::canonical;
use dash_core::ledger::{validate_serialized, ChainStore, LedgerError};
use dash_core::runtime::Address;
use dash_core::Digest;
use dash_service::bench::{self, FlyweightParams, FlyweightReport, PubSubParams, PubSubReport};
use dash_service::http::{self, AppState};
use dash_service::scenario;
use dash_service::{ConfigError, Service, ServiceConfig, ServiceError};
use serde_json::json;

/// Clock used by `scenario run` when no config is given.
const SCENARIO_CLOCK: u64 = 1_700_000_000;

#[derive(Debug, Parser)]
#[command(name = "dash", version, about = "Health-record ledger operator tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the genesis block and install the system contracts.
    Init { config: PathBuf },
    /// Run the HTTP service until interrupted.
    Serve { config: PathBuf },
    /// Mine pending transactions into one block.
    Mine {
        #[arg(short, long, default_value = "dash.json")]
        config: PathBuf,
        #[arg(long)]
        max_txs: Option<usize>,
    },
    /// Re-verify the stored chain from genesis.
    Validate {
        #[arg(short, long, default_value = "dash.json")]
        config: PathBuf,
    },
    /// Print a block, a transaction with its receipt, or an account.
    Inspect {
        #[arg(short, long, default_value = "dash.json", global = true)]
        config: PathBuf,
        #[command(subcommand)]
        what: Inspect,
    },
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    Bench {
        #[command(subcommand)]
        which: BenchCmd,
    },
}

#[derive(Debug, Subcommand)]
enum Inspect {
    Block { height: u64 },
    Tx { id: String },
    Account { address: String },
}

#[derive(Debug, Subcommand)]
enum ScenarioCmd {
    /// Replay a JSON-lines script of API calls.
    Run {
        file: PathBuf,
        /// Service config; defaults to in-memory state with a fixed clock.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Write the full report (canonical JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCmd {
    /// Plan storage and gas with and without interning.
    Flyweight {
        #[arg(long)]
        patients: usize,
        #[arg(long)]
        plans: usize,
        #[arg(long)]
        no_flyweight: bool,
        #[arg(long, default_value_t = 0)]
        difficulty: u32,
    },
    /// Dispatcher work against the polling baseline.
    Pubsub {
        #[arg(long)]
        providers: usize,
        #[arg(long)]
        blocks: usize,
        #[arg(long)]
        events: usize,
        #[arg(long)]
        polling: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn runtime(e: impl Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Runtime(e.to_string()),
            ConfigError::Parse(_) | ConfigError::Invalid(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match &e {
            ServiceError::Ledger(LedgerError::InvalidChain(_) | LedgerError::ReplayMismatch(_) | LedgerError::Corrupt(_)) => {
                CliError::Validation(e.to_string())
            }
            ServiceError::BadRequest(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Init { config } => init(&config),
        Command::Serve { config } => serve(&config),
        Command::Mine { config, max_txs } => {
            let mut svc = open_existing(&config)?;
            let admin = svc.authenticate(&svc.config().admin_key.clone())?;
            print_json(&svc.mine(&admin, max_txs)?)
        }
        Command::Validate { config } => validate(&config),
        Command::Inspect { config, what } => inspect(&config, what),
        Command::Scenario { action: ScenarioCmd::Run { file, config, out } } => scenario_run(&file, config.as_deref(), out.as_deref()),
        Command::Bench { which } => bench_cmd(which),
    }
}

/// Writes a line to stdout; a closed pipe (`dash ... | head`) is not an error.
fn emit(text: impl Display) -> Result<(), CliError> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::runtime(e)),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    emit(serde_json::to_string_pretty(value).map_err(CliError::runtime)?)
}

fn chain_dir(config: &ServiceConfig) -> Result<PathBuf, CliError> {
    config.chain_dir().ok_or_else(|| CliError::Usage("config has no dataDir; this command needs persistent state".into()))
}

fn stored_blocks(config: &ServiceConfig) -> Result<Vec<u8>, CliError> {
    let store = ChainStore::open(chain_dir(config)?).map_err(CliError::runtime)?;
    store.read_blocks_raw().map_err(CliError::runtime)
}

/// Opens a data dir that `init` has already populated.
fn open_existing(path: &Path) -> Result<Service, CliError> {
    let config = ServiceConfig::load(path)?;
    if stored_blocks(&config)?.is_empty() {
        return Err(CliError::Validation(format!("{} is not initialised; run `dash init` first", chain_dir(&config)?.display())));
    }
    Ok(Service::open(config)?)
}

fn init(path: &Path) -> Result<(), CliError> {
    let config = ServiceConfig::load(path)?;
    if !stored_blocks(&config)?.is_empty() {
        return Err(CliError::Validation(format!("{} already holds a chain", chain_dir(&config)?.display())));
    }
    let svc = Service::open(config)?;
    let data_dir = svc.config().data_dir.clone().expect("checked by chain_dir");
    std::fs::write(data_dir.join("config.json"), svc.config().to_canonical()).map_err(CliError::runtime)?;
    let sys = svc.system();
    print_json(&json!({
        "height": svc.chain().height(),
        "admin": sys.admin,
        "planStore": sys.plan_store,
        "factory": sys.factory,
        "registry": sys.registry,
    }))
}

fn serve(path: &Path) -> Result<(), CliError> {
    let config = ServiceConfig::load(path)?;
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let rt = tokio::runtime::Runtime::new().map_err(CliError::runtime)?;
    Ok(rt.block_on(http::serve(config))?)
}

fn validate(path: &Path) -> Result<(), CliError> {
    let config = ServiceConfig::load(path)?;
    let raw = stored_blocks(&config)?;
    if raw.is_empty() {
        return Err(CliError::Validation("no blocks stored".into()));
    }
    let report = validate_serialized(&raw, config.chain.difficulty);
    print_json(&report)?;
    if !report.valid {
        return Err(CliError::Validation("chain failed validation".into()));
    }
    // blocks are sound; replay also re-checks the stored receipts
    Service::open(config)?;
    Ok(())
}

fn inspect(path: &Path, what: Inspect) -> Result<(), CliError> {
    let svc = open_existing(path)?;
    match what {
        Inspect::Block { height } => print_json(&svc.block(height)?),
        Inspect::Tx { id } => {
            let id: Digest = id.parse().map_err(|_| CliError::Usage(format!("{id:?} is not a transaction id")))?;
            let receipt = svc.receipt(&id)?;
            let block = svc.block(receipt.block_height)?;
            let tx = &block.transactions[receipt.index_in_block as usize];
            print_json(&json!({ "transaction": tx, "receipt": receipt }))
        }
        Inspect::Account { address } => {
            let address: Address = address.parse().map_err(|_| CliError::Usage(format!("{address:?} is not an address")))?;
            print_json(&svc.account(&address)?)
        }
    }
}

fn scenario_run(file: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    let steps = scenario::parse_script(&text).map_err(|e| CliError::Validation(e.to_string()))?;
    let config = match config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig { fixed_clock: Some(SCENARIO_CLOCK), ..ServiceConfig::default() },
    };
    let state = AppState::new(Service::open(config)?);
    let report = scenario::run_blocking(&state, &steps).map_err(CliError::runtime)?;
    for s in &report.steps {
        let err = s.body.get("error").and_then(|v| v.as_str()).unwrap_or("");
        emit(format_args!("step {:<6} {} {}", s.step, s.status, err))?;
    }
    let height = report.height.map_or_else(|| "-".to_owned(), |h| h.to_string());
    emit(format_args!(
        "steps {} failed {} height {} receipts {} reverted {}",
        report.steps.len(),
        report.failed_steps,
        height,
        report.receipts,
        report.reverted_receipts
    ))?;
    if let Some(out) = out {
        let mut bytes = canonical::to_vec(&report).map_err(CliError::runtime)?;
        bytes.push(b'\n');
        std::fs::write(out, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn bench_cmd(which: BenchCmd) -> Result<(), CliError> {
    match which {
        BenchCmd::Flyweight { patients, plans, no_flyweight, difficulty } => {
            let report = bench::flyweight(FlyweightParams { patients, plans, flyweight: !no_flyweight, difficulty })?;
            emit(format_args!("{}\n{}\n\n{report}", FlyweightReport::CSV_HEADER, report.csv_row()))?;
        }
        BenchCmd::Pubsub { providers, blocks, events, polling, seed } => {
            let report = bench::pubsub(PubSubParams { providers, blocks, events, polling, seed })?;
            emit(format_args!("{}\n{}\n\n{report}", PubSubReport::CSV_HEADER, report.csv_row()))?;
        }
    }
    Ok(())
}
