//! Hashing over canonical tuples, XOR masks, identities and nonces.
//!
//! Tuple encoding (normative): `H( len(tag) || tag || len(item_1) || item_1 || ... )`
//! where every `len` is a 4-byte big-endian byte count.

use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};
use sha2::{Sha256, Sha512_256};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
/// Canonical identity width: one length byte then up to 31 raw bytes.
pub const IDENTITY_LEN: usize = 32;
pub const MAX_IDENTITY_RAW: usize = IDENTITY_LEN - 1;

/// Domain tags, one per protocol formula.
pub mod tags {
    pub const HPW: &str = "hpw";
    pub const RI: &str = "Ri";
    pub const R1: &str = "R1";
    pub const HX: &str = "HX";
    pub const AID_MASK: &str = "AIDmask";
    pub const AUS: &str = "AUs";
    pub const AUI: &str = "AUi";
    pub const SK: &str = "sk";
    pub const MASK: &str = "mask";
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrimitiveError {
    #[error("xor operands differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("identity must be 1..={MAX_IDENTITY_RAW} bytes, got {0}")]
    IdentityLength(usize),
    #[error("canonical identity encoding is malformed")]
    MalformedIdentity,
    #[error("expected {expected} bytes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("unknown hash algorithm {0:?}")]
    UnknownHash(String),
}

/// The one-way hash behind `H(.)`. All variants produce 32 bytes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashAlg {
    #[default]
    Sha256,
    Sha512_256,
}

impl HashAlg {
    pub fn id(&self) -> &'static str {
        match self {
            HashAlg::Sha256 => "sha256",
            HashAlg::Sha512_256 => "sha512-256",
        }
    }

    pub fn hash_tuple<I: AsRef<[u8]>>(&self, tag: &str, items: &[I]) -> Digest {
        match self {
            HashAlg::Sha256 => tuple_digest::<Sha256, I>(tag, items),
            HashAlg::Sha512_256 => tuple_digest::<Sha512_256, I>(tag, items),
        }
    }

    /// Counter-mode expansion: `hash_tuple("mask", seed, ctr_be32)` blocks, truncated.
    pub fn mask_expand(&self, seed: &Digest, out_len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(out_len.next_multiple_of(DIGEST_LEN));
        let mut counter = 0u32;
        while out.len() < out_len {
            let block = self.hash_tuple(tags::MASK, &[&seed.0[..], &counter.to_be_bytes()[..]]);
            out.extend_from_slice(&block.0);
            counter += 1;
        }
        out.truncate(out_len);
        out
    }
}

impl FromStr for HashAlg {
    type Err = PrimitiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sha256" => Ok(HashAlg::Sha256),
            "sha512-256" => Ok(HashAlg::Sha512_256),
            other => Err(PrimitiveError::UnknownHash(other.to_owned())),
        }
    }
}

fn tuple_digest<D: sha2::Digest, I: AsRef<[u8]>>(tag: &str, items: &[I]) -> Digest {
    let mut h = D::new();
    h.update((tag.len() as u32).to_be_bytes());
    h.update(tag.as_bytes());
    for item in items {
        let item = item.as_ref();
        h.update((item.len() as u32).to_be_bytes());
        h.update(item);
    }
    let out = h.finalize();
    let mut bytes = [0u8; DIGEST_LEN];
    bytes.copy_from_slice(&out[..DIGEST_LEN]);
    Digest(bytes)
}

/// [`HashAlg::hash_tuple`] with the default algorithm.
pub fn hash_tuple<I: AsRef<[u8]>>(tag: &str, items: &[I]) -> Digest {
    HashAlg::default().hash_tuple(tag, items)
}

/// [`HashAlg::mask_expand`] with the default algorithm.
pub fn mask_expand(seed: &Digest, out_len: usize) -> Vec<u8> {
    HashAlg::default().mask_expand(seed, out_len)
}

pub fn xor_bytes(a: &[u8], b: &[u8]) -> Result<Vec<u8>, PrimitiveError> {
    if a.len() != b.len() {
        return Err(PrimitiveError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

/// Constant-time equality for authenticators.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.ct_eq(b).into()
}

fn xor32(a: &[u8; 32], b: &[u8; 32]) -> [u8; 32] {
    std::array::from_fn(|i| a[i] ^ b[i])
}

macro_rules! fixed_bytes {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, PrimitiveError> {
                let arr: [u8; $len] =
                    bytes.try_into().map_err(|_| PrimitiveError::WrongLength { expected: $len, got: bytes.len() })?;
                Ok(Self(arr))
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl From<[u8; $len]> for $name {
            fn from(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.0))
            }
        }
    };
}

/// 32-byte hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);
fixed_bytes!(Digest, DIGEST_LEN);

impl Digest {
    pub fn xor(&self, other: &Digest) -> Digest {
        Digest(xor32(&self.0, &other.0))
    }
}

/// 16-byte random value.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce(pub [u8; NONCE_LEN]);
fixed_bytes!(Nonce, NONCE_LEN);

impl Nonce {
    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }
}

/// Party identity. The canonical 32-byte form is
/// `[len, raw..., 0, 0, ...]`, so it can be XORed with a digest.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identity {
    raw: Vec<u8>,
}

impl Identity {
    pub fn new(raw: impl Into<Vec<u8>>) -> Result<Self, PrimitiveError> {
        let raw = raw.into();
        if raw.is_empty() || raw.len() > MAX_IDENTITY_RAW {
            return Err(PrimitiveError::IdentityLength(raw.len()));
        }
        Ok(Self { raw })
    }

    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn padded(&self) -> [u8; IDENTITY_LEN] {
        let mut out = [0u8; IDENTITY_LEN];
        out[0] = self.raw.len() as u8;
        out[1..=self.raw.len()].copy_from_slice(&self.raw);
        out
    }

    /// Inverse of [`Identity::padded`]; rejects nonzero padding.
    pub fn from_padded(bytes: &[u8]) -> Result<Self, PrimitiveError> {
        if bytes.len() != IDENTITY_LEN {
            return Err(PrimitiveError::WrongLength { expected: IDENTITY_LEN, got: bytes.len() });
        }
        let len = bytes[0] as usize;
        if len == 0 || len > MAX_IDENTITY_RAW || bytes[len + 1..].iter().any(|&b| b != 0) {
            return Err(PrimitiveError::MalformedIdentity);
        }
        Ok(Self { raw: bytes[1..=len].to_vec() })
    }

    /// `padded(ID) XOR mask`.
    pub fn masked(&self, mask: &Digest) -> [u8; IDENTITY_LEN] {
        xor32(&self.padded(), &mask.0)
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({})", String::from_utf8_lossy(&self.raw))
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.raw))
    }
}

impl FromStr for Identity {
    type Err = PrimitiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Identity::new(s.as_bytes())
    }
}
