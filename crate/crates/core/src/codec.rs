//! Length-prefixed field codec shared by the wire format and the on-disk
//! credential files. Each field is a 4-byte big-endian length followed by
//! its bytes; integers are big-endian with no leading zero bytes (zero is the
//! empty string).

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("input truncated")]
    Truncated,
    #[error("field length {0} overruns the input")]
    FieldLengthOverflow(u32),
    #[error("field {field} has {got} bytes, expected {expected}")]
    WrongLength { field: &'static str, expected: usize, got: usize },
    #[error("integer field {0} is not minimally encoded")]
    NonCanonicalInteger(&'static str),
    #[error("{0} trailing bytes after the last field")]
    TrailingGarbage(usize),
    #[error("field {0} is invalid")]
    InvalidField(&'static str),
}

#[derive(Default, Debug)]
pub struct FieldWriter {
    buf: Vec<u8>,
}

impl FieldWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, field: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(field.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(field);
        self
    }

    pub fn uint(&mut self, v: &BigUint) -> &mut Self {
        self.bytes(&uint_bytes(v))
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.uint(&BigUint::from(v))
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Minimal big-endian bytes; zero encodes as empty.
pub fn uint_bytes(v: &BigUint) -> Vec<u8> {
    if v.is_zero() {
        Vec::new()
    } else {
        v.to_bytes_be()
    }
}

#[derive(Debug)]
pub struct FieldReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> FieldReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Offset of the next unread byte.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let rest = &self.data[self.pos..];
        if rest.len() < 4 {
            return Err(CodecError::Truncated);
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes"));
        if rest.len() - 4 < len as usize {
            return Err(CodecError::FieldLengthOverflow(len));
        }
        let field = &rest[4..4 + len as usize];
        self.pos += 4 + len as usize;
        Ok(field)
    }

    pub fn fixed<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], CodecError> {
        let raw = self.bytes()?;
        raw.try_into().map_err(|_| CodecError::WrongLength { field, expected: N, got: raw.len() })
    }

    pub fn uint(&mut self, field: &'static str) -> Result<BigUint, CodecError> {
        let raw = self.bytes()?;
        if raw.first() == Some(&0) {
            return Err(CodecError::NonCanonicalInteger(field));
        }
        Ok(BigUint::from_bytes_be(raw))
    }

    pub fn u64(&mut self, field: &'static str) -> Result<u64, CodecError> {
        let v = self.uint(field)?;
        u64::try_from(&v).map_err(|_| CodecError::InvalidField(field))
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::TrailingGarbage(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip() {
        let bytes = FieldWriter::new().bytes(b"abc").uint(&BigUint::from(0x0100u32)).u64(0).bytes(&[]).finish();
        assert_eq!(bytes, [0, 0, 0, 3, b'a', b'b', b'c', 0, 0, 0, 2, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let mut r = FieldReader::new(&bytes);
        assert_eq!(r.bytes().unwrap(), b"abc");
        assert_eq!(r.uint("n").unwrap(), BigUint::from(256u32));
        assert_eq!(r.u64("z").unwrap(), 0);
        assert_eq!(r.bytes().unwrap(), b"");
        r.finish().unwrap();
    }

    #[test]
    fn reader_errors() {
        assert_eq!(FieldReader::new(&[0, 0]).bytes(), Err(CodecError::Truncated));
        assert_eq!(FieldReader::new(&[0, 0, 0, 9, 1]).bytes(), Err(CodecError::FieldLengthOverflow(9)));
        assert_eq!(FieldReader::new(&[0, 0, 0, 2, 0, 1]).uint("x"), Err(CodecError::NonCanonicalInteger("x")));
        assert_eq!(
            FieldReader::new(&[0, 0, 0, 1, 7]).fixed::<2>("d"),
            Err(CodecError::WrongLength { field: "d", expected: 2, got: 1 })
        );
        let mut r = FieldReader::new(&[0, 0, 0, 0, 9]);
        r.bytes().unwrap();
        assert_eq!(r.finish(), Err(CodecError::TrailingGarbage(1)));
    }
}
