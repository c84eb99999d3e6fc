//! Little-endian byte cursor shared by the on-disk formats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated input at byte offset {offset}: needed {needed} more byte(s)")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic at byte offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("invalid value at byte offset {offset}: {message}")]
    Invalid { offset: usize, message: String },
}

impl WireError {
    pub fn invalid(offset: usize, message: impl Into<String>) -> Self {
        WireError::Invalid {
            offset,
            message: message.into(),
        }
    }

    /// Byte offset the error refers to.
    pub fn offset(&self) -> usize {
        match self {
            WireError::Truncated { offset, .. } | WireError::Invalid { offset, .. } => *offset,
            WireError::BadMagic { .. } => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.data[self.pos..];
        self.pos = self.data.len();
        out
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<(), WireError> {
        let found = self.take(4).map_err(|_| WireError::BadMagic {
            expected: *magic,
            found: self.data[..self.data.len().min(4)].to_vec(),
        })?;
        if found != magic {
            return Err(WireError::BadMagic {
                expected: *magic,
                found: found.to_vec(),
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32, WireError> {
        let b = self.take(4)?;
        Ok(i32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32, WireError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes(b.try_into().unwrap()))
    }
}
