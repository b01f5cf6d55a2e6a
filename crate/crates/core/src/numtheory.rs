//! Number-theoretic support: extended GCD, modular inverses, the Chinese
//! remainder solver, and coprime / prime generation.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};
use thiserror::Error;

/// Rounds of Miller-Rabin with random bases. Error probability is at most 4^-64.
pub const MILLER_RABIN_ROUNDS: usize = 64;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumTheoryError {
    #[error("gcd(0, 0) is undefined")]
    BothZero,
    #[error("{a} has no inverse modulo {m}")]
    NoInverse { a: BigUint, m: BigUint },
    #[error("modulus must be at least 2")]
    ModulusTooSmall,
    #[error("moduli {0} and {1} are not coprime")]
    NotCoprime(BigUint, BigUint),
    #[error("residue and modulus lists differ in length or are empty")]
    MalformedSystem,
    #[error("requested bit length {0} is too small")]
    BitsTooSmall(u64),
}

/// Extended Euclid. Returns `(g, u, v)` with `u*a + v*b == g == gcd(a, b)`, `g > 0`.
pub fn ext_gcd(a: &BigInt, b: &BigInt) -> Result<(BigInt, BigInt, BigInt), NumTheoryError> {
    if a.is_zero() && b.is_zero() {
        return Err(NumTheoryError::BothZero);
    }
    let (mut old_r, mut r) = (a.clone(), b.clone());
    let (mut old_u, mut u) = (BigInt::one(), BigInt::zero());
    let (mut old_v, mut v) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let q = old_r.div_floor(&r);
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_u = &old_u - &q * &u;
        old_u = std::mem::replace(&mut u, next_u);
        let next_v = &old_v - &q * &v;
        old_v = std::mem::replace(&mut v, next_v);
    }
    if old_r.is_negative() {
        old_r = -old_r;
        old_u = -old_u;
        old_v = -old_v;
    }
    Ok((old_r, old_u, old_v))
}

/// Inverse of `a` modulo `m`, in `[1, m)`.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Result<BigUint, NumTheoryError> {
    if *m < BigUint::from(2u8) {
        return Err(NumTheoryError::ModulusTooSmall);
    }
    let a_reduced = BigInt::from_biguint(Sign::Plus, a % m);
    let m_signed = BigInt::from_biguint(Sign::Plus, m.clone());
    if a_reduced.is_zero() {
        return Err(NumTheoryError::NoInverse { a: a.clone(), m: m.clone() });
    }
    let (g, u, _) = ext_gcd(&a_reduced, &m_signed)?;
    if !g.is_one() {
        return Err(NumTheoryError::NoInverse { a: a.clone(), m: m.clone() });
    }
    let inv = u.mod_floor(&m_signed);
    Ok(inv.to_biguint().expect("mod_floor result is nonnegative"))
}

/// A system of simultaneous congruences `X = residues[i] (mod moduli[i])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrtSystem {
    residues: Vec<BigUint>,
    moduli: Vec<BigUint>,
}

impl CrtSystem {
    /// Builds a system, checking pairwise coprimality. Residues are kept as
    /// given; they are reduced modulo their modulus when solving.
    pub fn new(residues: Vec<BigUint>, moduli: Vec<BigUint>) -> Result<Self, NumTheoryError> {
        if residues.is_empty() || residues.len() != moduli.len() {
            return Err(NumTheoryError::MalformedSystem);
        }
        if moduli.iter().any(|m| m.is_zero()) {
            return Err(NumTheoryError::ModulusTooSmall);
        }
        for (i, mi) in moduli.iter().enumerate() {
            for mj in &moduli[i + 1..] {
                if !mi.gcd(mj).is_one() {
                    return Err(NumTheoryError::NotCoprime(mi.clone(), mj.clone()));
                }
            }
        }
        Ok(Self { residues, moduli })
    }

    pub fn residues(&self) -> &[BigUint] {
        &self.residues
    }

    pub fn moduli(&self) -> &[BigUint] {
        &self.moduli
    }
}

/// Solves the system as `X = sum(a_i * M_i * y_i) mod M` where `M_i = M / m_i`
/// and `y_i = M_i^-1 mod m_i`. Returns `(X, M)` with `0 <= X < M`.
pub fn crt_solve(sys: &CrtSystem) -> Result<(BigUint, BigUint), NumTheoryError> {
    let product: BigUint = sys.moduli.iter().product();
    let mut acc = BigUint::zero();
    for (a, m) in sys.residues.iter().zip(&sys.moduli) {
        if m.is_one() {
            // Every integer satisfies a congruence modulo 1.
            continue;
        }
        let partial = &product / m;
        let y = mod_inverse(&partial, m)?;
        acc += (a % m) * &partial * y;
    }
    let x = acc % &product;
    debug_assert!(sys.residues.iter().zip(&sys.moduli).all(|(a, m)| &x % m == a % m));
    Ok((x, product))
}

/// Uniform integer with exactly `bits` bits (top bit set). `bits` must be positive.
pub fn random_exact_bits<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let mut n = rng.gen_biguint(bits);
    n.set_bit(bits - 1, true);
    n
}

/// Rejection-samples an `m2` with exactly `bits` bits and `gcd(m1, m2) == 1`.
pub fn gen_coprime<R: RngCore + ?Sized>(m1: &BigUint, bits: u64, rng: &mut R) -> Result<BigUint, NumTheoryError> {
    if *m1 < BigUint::from(2u8) {
        return Err(NumTheoryError::ModulusTooSmall);
    }
    if bits < 2 {
        return Err(NumTheoryError::BitsTooSmall(bits));
    }
    loop {
        let candidate = random_exact_bits(bits, rng);
        if candidate.gcd(m1).is_one() {
            return Ok(candidate);
        }
    }
}

/// Miller-Rabin with [`MILLER_RABIN_ROUNDS`] random bases after trial division.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u8);
    if *n < two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u8;
    let shift = n_minus_one.trailing_zeros().expect("n - 1 is nonzero");
    let odd = &n_minus_one >> shift;
    let upper = n - 1u8;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &upper);
        let mut y = a.modpow(&odd, n);
        if y.is_one() || y == n_minus_one {
            continue;
        }
        for _ in 1..shift {
            y = (&y * &y) % n;
            if y == n_minus_one {
                continue 'witness;
            }
            if y.is_one() {
                return false;
            }
        }
        return false;
    }
    true
}

/// Random probable prime with exactly `bits` bits.
pub fn gen_prime<R: RngCore + CryptoRng + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, NumTheoryError> {
    if bits < 8 {
        return Err(NumTheoryError::BitsTooSmall(bits));
    }
    loop {
        let mut candidate = random_exact_bits(bits, rng);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return Ok(candidate);
        }
    }
}
