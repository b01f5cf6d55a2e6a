//! Registration and authentication-key-agreement phases.
//!
//! Registration (run once over a secure channel):
//!
//! ```text
//! user                                             server
//! a' = lift(sum(logistic seq)), m1, n_s
//! h_pw = H(pw, n_s)
//!           --- ID_i, a', c, m1, h_pw --->
//!                                                  b' = lift(sum(logistic seq)), m2 coprime to m1
//!                                                  X = CRT(a' mod m1, b' mod m2)
//!                                                  R_i = H(ID_i, h_pw) ^ H(X)
//!                                                  R_1 = H(m2, h_pw), fresh pseudonym M_i
//!           <--- ID_s, M_i, R_i, R_1 ---
//! ```
//!
//! Authentication (three messages over an open channel):
//!
//! ```text
//! M1 = R_i ^ H(k), AID = ID_i ^ H(k), M2 = T_r(x) ^ mask(R_1)
//!           --- M_i, M1, M2, AID, x, N --->
//!                                                  H(k) = R_i ^ M1, check ID_i = H(k) ^ AID
//!                                                  sk = T_s(T_r(x)), AU_s = H(ID_i, H(k), sk)
//!                                                  M3 = T_s(x) ^ mask(H(X))
//!           <--- ID_s, M3, AU_s ---
//! H(X) = R_i ^ H(ID_i, h_pw), sk = T_r(T_s(x))
//! check AU_s, AU_i = H(ID_s, H(k), sk)
//!           --- AU_i --->
//!                                                  check AU_i
//! ```

mod messages;
mod registration;
mod session;
mod store;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::logistic::{DEFAULT_PRECISION, DEFAULT_SEQUENCE_LEN};
use crate::primitives::HashAlg;

pub use messages::{AuthMsg1, AuthMsg2, AuthMsg3, RegistrationRequest, RegistrationResponse};
pub use registration::{register_server_process, register_user_begin, PendingRegistration};
pub use session::{Phase, Role, ServerEndpoint, ServerSession, SessionKey, UserSession};
pub use store::{CredentialStore, FileStore, MemoryStore, ServerRecord, StoreError, UserCredentials};

/// Knobs shared by both parties. Both sides must agree on `hash`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub hash: HashAlg,
    /// Fractional digits of the logistic fixed-point arithmetic.
    pub logistic_precision: u32,
    /// Logistic iterations per registration sequence.
    pub sequence_len: u32,
    /// Bit length of the CRT moduli `m1` and `m2`.
    pub crt_modulus_bits: u64,
    /// Bit length of the per-session prime `N` chosen by the user.
    pub prime_bits: u64,
    /// Bounds the server accepts for a user-chosen `N`.
    pub min_prime_bits: u64,
    pub max_prime_bits: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            hash: HashAlg::Sha256,
            logistic_precision: DEFAULT_PRECISION,
            sequence_len: DEFAULT_SEQUENCE_LEN,
            crt_modulus_bits: 64,
            prime_bits: 256,
            min_prime_bits: 64,
            max_prime_bits: 4096,
        }
    }
}

impl ProtocolConfig {
    pub fn with_prime_bits(mut self, bits: u64) -> Self {
        self.prime_bits = bits;
        self
    }
}

/// Why a session stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbortReason {
    UnknownUser,
    AuthFailed,
    Malformed,
    ServerAuthFailed,
    UserAuthFailed,
    PeerAborted,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::UnknownUser => "unknown-user",
            AbortReason::AuthFailed => "auth-failed",
            AbortReason::Malformed => "malformed",
            AbortReason::ServerAuthFailed => "server-auth-failed",
            AbortReason::UserAuthFailed => "user-auth-failed",
            AbortReason::PeerAborted => "peer-aborted",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AbortReason {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            AbortReason::UnknownUser,
            AbortReason::AuthFailed,
            AbortReason::Malformed,
            AbortReason::ServerAuthFailed,
            AbortReason::UserAuthFailed,
            AbortReason::PeerAborted,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or(())
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("session aborted: {0}")]
    Aborted(AbortReason),
    #[error("{op} is not allowed in phase {phase:?}")]
    OutOfOrder { op: &'static str, phase: Phase },
    #[error("session is not established")]
    NotEstablished,
    #[error("identity {0} is already registered")]
    AlreadyRegistered(String),
    #[error("invalid registration input: {0}")]
    InvalidRegistration(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ProtocolError {
    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self {
            ProtocolError::Aborted(r) => Some(*r),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abort_reason_strings_round_trip() {
        for r in [
            AbortReason::UnknownUser,
            AbortReason::AuthFailed,
            AbortReason::Malformed,
            AbortReason::ServerAuthFailed,
            AbortReason::UserAuthFailed,
            AbortReason::PeerAborted,
        ] {
            assert_eq!(r.as_str().parse::<AbortReason>(), Ok(r));
        }
        assert!("nope".parse::<AbortReason>().is_err());
    }
}
