use std::io::{self, BufRead, IsTerminal, Write};
use std::sync::Arc;

use chaoskey::primitives::Identity;
use chaoskey::protocol::{FileStore, Phase, ProtocolConfig, ServerEndpoint, UserCredentials};
use chaoskey::transport::TransportError;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::{Failure, Opts};

pub const PASSWORD_ENV: &str = "CHAOSKEY_PASSWORD";

// Keeps the server stream apart from the user stream under one seed.
const SERVER_STREAM: u64 = 0x5345_5256_4552_0001;

pub fn config(opts: &Opts) -> ProtocolConfig {
    ProtocolConfig {
        hash: opts.hash,
        logistic_precision: opts.precision,
        sequence_len: opts.seq_len,
        prime_bits: opts.bits,
        ..ProtocolConfig::default()
    }
}

fn seeded(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

pub fn user_rng(opts: &Opts) -> ChaCha20Rng {
    seeded(opts.seed)
}

pub fn server_rng(opts: &Opts) -> ChaCha20Rng {
    seeded(opts.seed.map(|s| s ^ SERVER_STREAM))
}

/// Independent stream per accepted connection.
pub fn connection_rng(opts: &Opts, index: usize) -> ChaCha20Rng {
    match opts.seed {
        Some(s) => {
            let mut rng = ChaCha20Rng::seed_from_u64(s ^ SERVER_STREAM);
            rng.set_stream(index as u64 + 1);
            rng
        }
        None => ChaCha20Rng::from_entropy(),
    }
}

pub fn sub_seed(rng: &mut ChaCha20Rng) -> u64 {
    rng.next_u64()
}

pub fn identity(raw: &str) -> Result<Identity, Failure> {
    Identity::new(raw).map_err(|e| Failure::Usage(format!("identity {raw:?}: {e}")))
}

pub fn endpoint(opts: &Opts) -> Result<ServerEndpoint, Failure> {
    let store =
        FileStore::open(&opts.store).map_err(|e| Failure::Io(format!("store {}: {e}", opts.store.display())))?;
    Ok(ServerEndpoint::new(Arc::new(store), identity(&opts.server_id)?, config(opts)))
}

pub fn load_credentials(opts: &Opts) -> Result<UserCredentials, Failure> {
    UserCredentials::load(&opts.cred).map_err(|e| Failure::Io(format!("credentials {}: {e}", opts.cred.display())))
}

/// From the environment, else one line of stdin (prompted on a terminal).
pub fn password() -> Result<Vec<u8>, Failure> {
    if let Some(pw) = std::env::var_os(PASSWORD_ENV) {
        return non_empty(pw.into_encoded_bytes());
    }
    let stdin = io::stdin();
    if stdin.is_terminal() {
        eprint!("password: ");
        io::stderr().flush().ok();
    }
    let mut line = String::new();
    stdin.lock().read_line(&mut line).map_err(|e| Failure::Io(format!("reading password: {e}")))?;
    non_empty(line.trim_end_matches(['\r', '\n']).as_bytes().to_vec())
}

fn non_empty(pw: Vec<u8>) -> Result<Vec<u8>, Failure> {
    if pw.is_empty() {
        return Err(Failure::Usage(format!("no password: set {PASSWORD_ENV} or supply one on stdin")));
    }
    Ok(pw)
}

pub fn io_err(e: TransportError) -> Failure {
    Failure::Io(e.to_string())
}

pub fn phase_label(p: Phase) -> String {
    match p {
        Phase::Init => "init".into(),
        Phase::AwaitMsg2 => "awaiting-msg2".into(),
        Phase::AwaitMsg3 => "awaiting-msg3".into(),
        Phase::Established => "established".into(),
        Phase::Aborted(r) => format!("aborted({r})"),
    }
}
