use num_bigint::BigUint;

use crate::primitives::{Digest, Identity, Nonce, IDENTITY_LEN};

/// `{ID_i, a', c, m1, h_pw}`. Carries the lifted integer `a' = a * 10^c`
/// instead of the real-valued chaotic sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub id: Identity,
    pub a_prime: BigUint,
    pub digits: u32,
    pub m1: BigUint,
    pub hpw: Digest,
}

/// `{ID_s, M_i, R_i, R_1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegistrationResponse {
    pub server_id: Identity,
    pub pseudonym: Nonce,
    pub ri: Digest,
    pub r1: Digest,
}

/// `{M_i, M1, M2, AID_i, x, N}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthMsg1 {
    pub pseudonym: Nonce,
    pub m1: Digest,
    /// `T_r(x)` masked, exactly `element_len(N)` bytes.
    pub m2: Vec<u8>,
    pub aid: [u8; IDENTITY_LEN],
    pub x: BigUint,
    pub modulus: BigUint,
}

/// `{ID_s, M3, AU_s}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthMsg2 {
    pub server_id: Identity,
    /// `T_s(x)` masked, exactly `element_len(N)` bytes.
    pub m3: Vec<u8>,
    pub au_s: Digest,
}

/// `{AU_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthMsg3 {
    pub au_i: Digest,
}
