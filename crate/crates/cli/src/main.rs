use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rfidlab_core::attacks::LwjxGuessMode;
use rfidlab_core::game::{Execution, ProtocolParams};
use rfidlab_core::harness::{
    provision_fwcfp, provision_lwjx, replay_file, run_experiment, Database, Experiment, ExperimentConfig, OutputFormat,
    Snapshot,
};
use rfidlab_core::rng::DEFAULT_SEED;
use rfidlab_core::{fwcfp, lwjx, BitString, ProtocolKind, StreamRng};

const EXIT_CONFIG: u8 = 1;
const EXIT_THRESHOLD: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rfidlab",
    version,
    about = "Cryptanalysis workbench for the FWCFP and LWJX RFID protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Honest sessions between one tag and the reader.
    Honest {
        #[command(flatten)]
        common: Common,
        /// LWJX only: probability that flow 3 is lost.
        #[arg(long, default_value_t = 0.0)]
        drop_flow3_rate: f64,
        /// LWJX only: extra attempts for a session the reader rejected.
        #[arg(long, default_value_t = 3)]
        retries: u32,
        /// Write a JSON-lines transcript with the secrets needed to replay it.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Tamper with flow 3 and count the reader's rejections afterwards.
    Desync {
        #[command(flatten)]
        common: Common,
        /// Honest sessions after each attack.
        #[arg(long, default_value_t = 100)]
        attempts: u64,
        /// Fixed mask as `width:hex`; a fresh one is drawn per run otherwise.
        #[arg(long, value_parser = parse_bits)]
        mask: Option<BitString>,
    },
    /// Traceability attack in the privacy game.
    Trace {
        #[command(flatten)]
        common: Common,
        /// LWJX guess rule.
        #[arg(long, value_enum, default_value = "by-id-hash")]
        mode: ModeArg,
    },
    /// Backward-traceability attack (FWCFP).
    Backtrace {
        #[command(flatten)]
        common: Common,
    },
    /// Re-derive every field of a transcript from its disclosed secrets.
    Replay { path: PathBuf },
    /// Write a database snapshot after some honest sessions, or check one.
    Snapshot {
        #[command(flatten)]
        common: Common,
        /// Honest sessions to run before the snapshot.
        #[arg(long, default_value_t = 0)]
        sessions: u64,
        /// LWJX only: probability that flow 3 is lost.
        #[arg(long, default_value_t = 0.0)]
        drop_flow3_rate: f64,
        /// Keep the FWCFP master key in the snapshot.
        #[arg(long)]
        include_master_key: bool,
        /// Validate an existing snapshot instead of writing one.
        #[arg(long, conflicts_with = "output")]
        load: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "fwcfp")]
    protocol: ProtocolArg,
    #[arg(long)]
    trials: Option<u64>,
    /// Decimal or 0x-prefixed hex.
    #[arg(long, env = "RFIDLAB_SEED", value_parser = parse_seed, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    hash_bits: Option<usize>,
    #[arg(long)]
    id_bits: Option<usize>,
    #[arg(long)]
    key_bits: Option<usize>,
    #[arg(long)]
    nonce_bits: Option<usize>,
    /// FWCFP only: random padding inside the alias.
    #[arg(long)]
    rand0_bits: Option<usize>,
    /// LWJX only: old-key authentications allowed before a warning.
    #[arg(long)]
    m_limit: Option<u32>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Fwcfp,
    Lwjx,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ByIdHash,
    ByKeyHash,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| e.to_string())
}

fn parse_bits(s: &str) -> Result<BitString, String> {
    s.parse::<BitString>().map_err(|e| e.to_string())
}

impl Common {
    fn config(&self, experiment: Experiment, default_trials: u64) -> ExperimentConfig {
        let protocol = match self.protocol {
            ProtocolArg::Fwcfp => ProtocolKind::Fwcfp,
            ProtocolArg::Lwjx => ProtocolKind::Lwjx,
        };
        ExperimentConfig {
            trials: self.trials.unwrap_or(default_trials),
            id_bits: self.id_bits,
            key_bits: self.key_bits,
            nonce_bits: self.nonce_bits,
            hash_bits: self.hash_bits,
            rand0_bits: self.rand0_bits,
            m_limit: self.m_limit,
            seed: self.seed,
            output: self.output.clone(),
            format: match self.format {
                FormatArg::Json => OutputFormat::Json,
                FormatArg::Csv => OutputFormat::Csv,
            },
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
            ..ExperimentConfig::new(protocol, experiment)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let config = match cli.command {
        Command::Honest {
            common,
            drop_flow3_rate,
            retries,
            transcript,
        } => ExperimentConfig {
            drop_flow3_rate,
            retries,
            transcript,
            ..common.config(Experiment::Honest, 1000)
        },
        Command::Desync { common, attempts, mask } => ExperimentConfig {
            attempts,
            mask,
            ..common.config(Experiment::Desync, 1)
        },
        Command::Trace { common, mode } => ExperimentConfig {
            mode: match mode {
                ModeArg::ByIdHash => LwjxGuessMode::ByIdHash,
                ModeArg::ByKeyHash => LwjxGuessMode::ByKeyHash,
            },
            ..common.config(Experiment::Trace, 10_000)
        },
        Command::Backtrace { common } => common.config(Experiment::Backtrace, 10_000),
        Command::Replay { path } => return replay(&path),
        Command::Snapshot {
            common,
            sessions,
            drop_flow3_rate,
            include_master_key,
            load,
        } => {
            return match load {
                Some(path) => check_snapshot(&path),
                None => snapshot(&common, sessions, drop_flow3_rate, include_master_key),
            }
        }
    };
    match run_experiment(&config) {
        Ok(result) => {
            if config.output.is_none() {
                print!("{}", result.rendered);
            }
            println!("{}", result.summary);
            if result.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("acceptance threshold not met");
                ExitCode::from(EXIT_THRESHOLD)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn replay(path: &Path) -> ExitCode {
    match replay_file(path) {
        Ok(verdict) => {
            println!("{}", serde_json::to_string(&verdict).expect("verdict serializes"));
            if verdict.is_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_THRESHOLD)
            }
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn check_snapshot(path: &Path) -> ExitCode {
    let loaded = std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|text| Snapshot::from_json(&text).map_err(|e| e.to_string()));
    match loaded {
        Ok(s) => {
            let (protocol, records) = match &s.database {
                Database::Fwcfp { records, .. } => ("fwcfp", records.len()),
                Database::Lwjx { records, .. } => ("lwjx", records.len()),
            };
            println!(
                "{}: {protocol} snapshot v{}, {records} records",
                path.display(),
                s.version
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn snapshot(common: &Common, sessions: u64, drop_flow3_rate: f64, include_master_key: bool) -> ExitCode {
    let config = ExperimentConfig {
        drop_flow3_rate,
        ..common.config(Experiment::Honest, 1)
    };
    let params = match config.validate() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut rng = StreamRng::new(config.seed, 0);
    let mut loss = StreamRng::new(config.seed, 1);
    let snapshot = match params {
        ProtocolParams::Fwcfp(p) => {
            let (mut tag, reader) = provision_fwcfp(p, &mut rng);
            for i in 0..sessions {
                fwcfp::run_honest_session(&mut tag, &reader, &mut rng, i);
            }
            Snapshot::of_fwcfp(&reader, include_master_key)
        }
        ProtocolParams::Lwjx(p) => {
            let (mut tag, mut reader) = provision_lwjx(p, &mut rng);
            for i in 0..sessions {
                let drop = loss.gen_bool(drop_flow3_rate);
                lwjx::run_honest_session(&mut tag, &mut reader, &mut rng, i, drop);
            }
            Snapshot::of_lwjx(&reader)
        }
    };
    let text = snapshot.to_json();
    match &config.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_CONFIG);
            }
            println!("snapshot written to {}", path.display());
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
