//! Enhanced Chebyshev polynomials over `Z_N`.
//!
//! `T_0(x) = 1`, `T_1(x) = x`, `T_n(x) = 2x T_{n-1}(x) - T_{n-2}(x) mod N`. The
//! composition law `T_r(T_s(x)) = T_{rs}(x)` survives the reduction modulo a
//! prime, which gives a Diffie-Hellman style exchange on the values `T_r(x)`.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::numtheory::{self, NumTheoryError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChebyError {
    #[error("modulus is not a prime of at least 5")]
    BadModulus,
    #[error("element is not reduced modulo N")]
    MalformedElement,
    #[error("element encoding has {got} bytes, expected {expected}")]
    BadEncodingLength { expected: usize, got: usize },
    #[error(transparent)]
    NumTheory(#[from] NumTheoryError),
}

/// Residue in `[0, N)`. The modulus travels with [`ChebyParams`].
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement(BigUint);

impl FieldElement {
    pub fn new(value: BigUint, modulus: &BigUint) -> Result<Self, ChebyError> {
        if value >= *modulus {
            return Err(ChebyError::MalformedElement);
        }
        Ok(Self(value))
    }

    /// Reduces an arbitrary integer into the field.
    pub fn reduce(value: &BigUint, modulus: &BigUint) -> Self {
        Self(value % modulus)
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Big-endian, left-padded to [`element_len`] bytes.
    pub fn encode(&self, modulus: &BigUint) -> Vec<u8> {
        let len = element_len(modulus);
        let raw = self.0.to_bytes_be();
        let raw: &[u8] = if self.0.is_zero() { &[] } else { &raw };
        let mut out = vec![0u8; len];
        out[len - raw.len()..].copy_from_slice(raw);
        out
    }

    pub fn decode(bytes: &[u8], modulus: &BigUint) -> Result<Self, ChebyError> {
        let expected = element_len(modulus);
        if bytes.len() != expected {
            return Err(ChebyError::BadEncodingLength { expected, got: bytes.len() });
        }
        Self::new(BigUint::from_bytes_be(bytes), modulus)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldElement({:#x})", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Byte length of the canonical element encoding: `ceil(bitlen(N) / 8)`.
pub fn element_len(modulus: &BigUint) -> usize {
    (modulus.bits() as usize).div_ceil(8).max(1)
}

/// Public parameters `(x, N)` of one exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChebyParams {
    modulus: BigUint,
    base: FieldElement,
}

impl ChebyParams {
    /// Validates `N` (prime, at least 5) and `x < N`.
    pub fn new<R: RngCore + ?Sized>(modulus: BigUint, base: BigUint, rng: &mut R) -> Result<Self, ChebyError> {
        if modulus < BigUint::from(5u8) || !numtheory::is_probable_prime(&modulus, rng) {
            return Err(ChebyError::BadModulus);
        }
        let base = FieldElement::new(base, &modulus)?;
        Ok(Self { modulus, base })
    }

    /// Fresh prime of `bits` bits and a uniform base point in `[0, N)`.
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(bits: u64, rng: &mut R) -> Result<Self, ChebyError> {
        let modulus = numtheory::gen_prime(bits, rng)?;
        let base = FieldElement(rng.gen_biguint_below(&modulus));
        Ok(Self { modulus, base })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn base(&self) -> &FieldElement {
        &self.base
    }

    pub fn element_len(&self) -> usize {
        element_len(&self.modulus)
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<FieldElement, ChebyError> {
        FieldElement::decode(bytes, &self.modulus)
    }

    pub fn encode_element(&self, element: &FieldElement) -> Vec<u8> {
        element.encode(&self.modulus)
    }
}

/// Linear-time evaluation by the defining recurrence. Correctness oracle only.
pub fn cheby_eval_naive(n: u64, x: &FieldElement, modulus: &BigUint) -> FieldElement {
    let x = &x.0 % modulus;
    let mut prev = BigUint::one() % modulus;
    if n == 0 {
        return FieldElement(prev);
    }
    let mut cur = x.clone();
    let two_x = (&x << 1u8) % modulus;
    for _ in 1..n {
        let next = (&two_x * &cur + modulus - &prev) % modulus;
        prev = std::mem::replace(&mut cur, next);
    }
    FieldElement(cur)
}

/// Logarithmic-time evaluation; see [`cheby_eval_fast_counted`].
pub fn cheby_eval_fast(n: &BigUint, x: &FieldElement, modulus: &BigUint) -> FieldElement {
    cheby_eval_fast_counted(n, x, modulus).0
}

/// Fast-doubling ladder over the pair `(T_k, T_{k+1})`:
///
/// ```text
/// T_{2k}   = 2 T_k^2 - 1
/// T_{2k+1} = 2 T_k T_{k+1} - x
/// T_{2k+2} = 2 T_{k+1}^2 - 1
/// ```
///
/// Returns the value and the number of modular multiplications performed,
/// which is exactly `2 * bitlen(n)`.
pub fn cheby_eval_fast_counted(n: &BigUint, x: &FieldElement, modulus: &BigUint) -> (FieldElement, u64) {
    let one = BigUint::one() % modulus;
    let x = &x.0 % modulus;
    let sub = |a: BigUint, b: &BigUint| -> BigUint {
        if a >= *b {
            a - b
        } else {
            a + modulus - b
        }
    };
    let double = |a: BigUint| -> BigUint {
        let d = a << 1u8;
        if d >= *modulus {
            d - modulus
        } else {
            d
        }
    };

    let mut lo = one.clone();
    let mut hi = x.clone();
    let mut mults = 0u64;
    for i in (0..n.bits()).rev() {
        let cross = sub(double((&lo * &hi) % modulus), &x);
        mults += 1;
        if n.bit(i) {
            let sq = sub(double((&hi * &hi) % modulus), &one);
            lo = cross;
            hi = sq;
        } else {
            let sq = sub(double((&lo * &lo) % modulus), &one);
            lo = sq;
            hi = cross;
        }
        mults += 1;
    }
    (FieldElement(lo), mults)
}

/// Secret degree and its public value `T_exponent(x) mod N`.
#[derive(Clone)]
pub struct ChebyKeyPair {
    exponent: BigUint,
    public: FieldElement,
}

impl ChebyKeyPair {
    pub fn from_exponent(exponent: BigUint, params: &ChebyParams) -> Self {
        let public = cheby_eval_fast(&exponent, params.base(), params.modulus());
        Self { exponent, public }
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }

    pub fn public(&self) -> &FieldElement {
        &self.public
    }
}

impl fmt::Debug for ChebyKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChebyKeyPair").field("exponent", &"<redacted>").field("public", &self.public).finish()
    }
}

/// Samples an exponent uniformly from `[2, N)`.
pub fn cheby_keygen<R: RngCore + CryptoRng + ?Sized>(params: &ChebyParams, rng: &mut R) -> ChebyKeyPair {
    let exponent = rng.gen_biguint_range(&BigUint::from(2u8), params.modulus());
    ChebyKeyPair::from_exponent(exponent, params)
}

/// `T_secret(peer_public) mod N`.
pub fn cheby_shared(
    secret: &BigUint,
    peer_public: &FieldElement,
    params: &ChebyParams,
) -> Result<FieldElement, ChebyError> {
    if peer_public.0 >= *params.modulus() {
        return Err(ChebyError::MalformedElement);
    }
    Ok(cheby_eval_fast(secret, peer_public, params.modulus()))
}
