//! `chaoskey` command-line front end.

mod commands;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use chaoskey::primitives::HashAlg;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "chaoskey", version, about = "Anonymous chaotic-map key agreement toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Opts,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Opts {
    /// Bit length of the per-session prime N.
    #[arg(long, global = true, default_value_t = 256, value_parser = clap::value_parser!(u64).range(64..=4096))]
    pub bits: u64,
    /// Hash behind H(.): sha256 or sha512-256.
    #[arg(long, global = true, default_value = "sha256")]
    pub hash: HashAlg,
    /// Fractional digits of the logistic-map arithmetic.
    #[arg(long, global = true, default_value_t = 18, value_parser = clap::value_parser!(u32).range(2..=18))]
    pub precision: u32,
    /// Logistic iterations per registration.
    #[arg(long = "seq-len", global = true, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
    pub seq_len: u32,
    /// Seed for all randomness; OS entropy when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Server address for `serve` and `--remote`.
    #[arg(long, global = true, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// User credential file.
    #[arg(long, global = true, default_value = "chaoskey.cred")]
    pub cred: PathBuf,
    /// Server record store.
    #[arg(long, global = true, default_value = "chaoskey.store")]
    pub store: PathBuf,
    #[arg(long, global = true, default_value = "server")]
    pub server_id: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long, global = true, value_enum, default_value_t = Transport::Loopback)]
    pub transport: Transport,
    #[arg(long, global = true, value_enum, default_value_t = Protocol::Proposed)]
    pub protocol: Protocol,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Loopback,
    Socket,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Proposed,
    YoonJeon,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate and print fresh public parameters.
    Params,
    /// Register an identity and write its credential file.
    Register {
        identity: String,
        /// Register with the server at --addr instead of the local store.
        #[arg(long)]
        remote: bool,
    },
    /// Run one authenticated key agreement.
    Handshake {
        /// Connect to the server at --addr instead of running one in-process.
        #[arg(long)]
        remote: bool,
        /// Write the transcript dump here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Accept registrations and handshakes on --addr.
    Serve {
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Run an attack and report whether it succeeded.
    Attack {
        name: String,
        /// Recorded transcript dumps to attack instead of fresh sessions.
        #[arg(long)]
        transcript: Vec<PathBuf>,
        /// Identities to search for in `anonymity` scans.
        #[arg(long = "id")]
        ids: Vec<String>,
        /// Sessions to record for `known-key` and `linkability`.
        #[arg(long, default_value_t = 10)]
        sessions: usize,
    },
    /// Recompute the published cost comparison.
    CostTable,
    /// Run the Yoon-Jeon baseline.
    Baseline,
    /// Time the primitive operations.
    Bench {
        #[arg(long, default_value_t = 200)]
        iterations: u32,
    },
}

/// Reasons to stop before a verdict.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Io(msg)) = &f;
            eprintln!("chaoskey: {msg}");
            ExitCode::from(f.code())
        }
    }
}
