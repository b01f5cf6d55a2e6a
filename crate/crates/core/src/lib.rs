//! Anonymous two-party key agreement over enhanced Chebyshev chaotic maps.
//!
//! A user registers once with a server, obtaining logistic-map and CRT
//! derived credentials under a server-issued pseudonym. Each later handshake
//! runs three messages, never sends the user's identity in clear, and ends
//! with mutual authentication and a shared session key `T_rs(x) mod N`.
//!
//! The crate also carries a reference implementation of the trusted-third
//! party Yoon-Jeon protocol, an adversary harness and a symbolic cost model.

pub mod adversary;
pub mod baseline;
pub mod census;
pub mod chebyshev;
pub mod codec;
pub mod costmodel;
pub mod logistic;
pub mod numtheory;
pub mod primitives;
pub mod protocol;
pub mod transport;
