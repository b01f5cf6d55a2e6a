//! Logistic-map sequences in decimal fixed point.
//!
//! Values are integer mantissas scaled by `10^precision`. Every product is
//! truncated toward zero back to `precision` digits, so a sequence is
//! reproducible bit-for-bit on any platform.

use std::fmt;

use rand::{Rng, RngCore};
use thiserror::Error;

/// Fractional decimal digits carried through the iteration.
pub const DEFAULT_PRECISION: u32 = 18;
/// Largest precision whose intermediate products fit in `u128`.
pub const MAX_PRECISION: u32 = 18;
pub const DEFAULT_SEQUENCE_LEN: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogisticError {
    #[error("lambda {0} lies outside the chaotic regime [3.57, 4]")]
    LambdaOutOfRange(Fixed),
    #[error("value {0} lies outside [0, 1]")]
    Domain(Fixed),
    #[error("precision {0} is not in 2..={MAX_PRECISION}")]
    Precision(u32),
    #[error("values carry different precisions")]
    PrecisionMismatch,
    #[error("sequence length must be positive")]
    EmptySequence,
}

/// Nonnegative decimal fixed-point number: `mantissa * 10^-digits`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fixed {
    mantissa: u128,
    digits: u32,
}

impl Fixed {
    pub const fn new(mantissa: u128, digits: u32) -> Self {
        Self { mantissa, digits }
    }

    /// Parses a plain decimal literal such as `"3.57"`, rescaled to `digits`.
    /// Extra fractional digits are truncated.
    pub fn parse(s: &str, digits: u32) -> Option<Self> {
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int: u128 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
        let mut frac = String::from(frac_part);
        frac.truncate(digits as usize);
        while frac.len() < digits as usize {
            frac.push('0');
        }
        let frac: u128 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        Some(Self { mantissa: int.checked_mul(pow10(digits))?.checked_add(frac)?, digits })
    }

    pub fn mantissa(&self) -> u128 {
        self.mantissa
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn one(digits: u32) -> Self {
        Self { mantissa: pow10(digits), digits }
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = pow10(self.digits);
        if self.digits == 0 {
            return write!(f, "{}", self.mantissa);
        }
        write!(f, "{}.{:0width$}", self.mantissa / scale, self.mantissa % scale, width = self.digits as usize)
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({self})")
    }
}

const fn pow10(digits: u32) -> u128 {
    10u128.pow(digits)
}

/// Validated generator parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogisticParams {
    lambda: Fixed,
    x0: Fixed,
    len: u32,
}

impl LogisticParams {
    pub fn new(lambda: Fixed, x0: Fixed, len: u32) -> Result<Self, LogisticError> {
        let digits = lambda.digits;
        if !(2..=MAX_PRECISION).contains(&digits) {
            return Err(LogisticError::Precision(digits));
        }
        if x0.digits != digits {
            return Err(LogisticError::PrecisionMismatch);
        }
        let lo = 357 * pow10(digits - 2);
        let hi = 4 * pow10(digits);
        if lambda.mantissa < lo || lambda.mantissa > hi {
            return Err(LogisticError::LambdaOutOfRange(lambda));
        }
        if x0.mantissa > pow10(digits) {
            return Err(LogisticError::Domain(x0));
        }
        if len == 0 {
            return Err(LogisticError::EmptySequence);
        }
        Ok(Self { lambda, x0, len })
    }

    /// Draws `lambda` uniformly from the grid points of `[3.57, 4]` and `x0`
    /// from the grid points of `[0, 1]`.
    pub fn random<R: RngCore + ?Sized>(precision: u32, len: u32, rng: &mut R) -> Result<Self, LogisticError> {
        if !(2..=MAX_PRECISION).contains(&precision) {
            return Err(LogisticError::Precision(precision));
        }
        let scale = pow10(precision);
        let lo = 357 * pow10(precision - 2);
        let lambda = rng.gen_range(lo..=4 * scale);
        let x0 = rng.gen_range(0..=scale);
        Self::new(Fixed::new(lambda, precision), Fixed::new(x0, precision), len)
    }

    pub fn lambda(&self) -> Fixed {
        self.lambda
    }

    pub fn x0(&self) -> Fixed {
        self.x0
    }

    /// Number of iterations; the sequence holds `len + 1` values.
    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn precision(&self) -> u32 {
        self.lambda.digits
    }
}

/// One step `lambda * x * (1 - x)`, computed as `trunc(lambda * trunc(x * (1 - x)))`.
pub fn logistic_next(x: Fixed, lambda: Fixed) -> Result<Fixed, LogisticError> {
    if x.digits != lambda.digits {
        return Err(LogisticError::PrecisionMismatch);
    }
    let scale = pow10(x.digits);
    if x.mantissa > scale {
        return Err(LogisticError::Domain(x));
    }
    let spread = x.mantissa * (scale - x.mantissa) / scale;
    let next = lambda.mantissa * spread / scale;
    Ok(Fixed::new(next.min(scale), x.digits))
}

/// `(x_0, x_1, ..., x_n)`.
pub fn logistic_sequence(params: &LogisticParams) -> Vec<Fixed> {
    let mut seq = Vec::with_capacity(params.len as usize + 1);
    let mut x = params.x0;
    seq.push(x);
    for _ in 0..params.len {
        x = logistic_next(x, params.lambda).expect("validated params keep iterates in [0, 1]");
        seq.push(x);
    }
    seq
}

/// Exact sum of a chaotic sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChaoticSum(Fixed);

impl ChaoticSum {
    pub fn value(&self) -> Fixed {
        self.0
    }

    /// Debug rendering `mantissa×10^-digits`.
    pub fn dump(&self) -> String {
        format!("{}×10^-{}", self.0.mantissa, self.0.digits)
    }
}

pub fn chaotic_sum(seq: &[Fixed]) -> Result<ChaoticSum, LogisticError> {
    let first = seq.first().ok_or(LogisticError::EmptySequence)?;
    let digits = first.digits;
    let mut total = 0u128;
    for v in seq {
        if v.digits != digits {
            return Err(LogisticError::PrecisionMismatch);
        }
        total += v.mantissa;
    }
    Ok(ChaoticSum(Fixed::new(total, digits)))
}

/// Scales the sum to an integer: returns `(value * 10^c, c)` where `c` is the
/// count of significant fractional digits (trailing zeros stripped).
pub fn decimal_lift(sum: &ChaoticSum) -> (u128, u32) {
    let Fixed { mut mantissa, mut digits } = sum.0;
    while digits > 0 && mantissa % 10 == 0 {
        mantissa /= 10;
        digits -= 1;
    }
    (mantissa, digits)
}
