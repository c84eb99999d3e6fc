//! Binary 3x3 kernels, the natural 9-bit mapping of a channel, channel
//! packing into register-width words, and the uncompressed kernel file.
//!
//! A channel's nine ±1 values map to an integer in `0..=511`: position
//! `(0,0)` is the most significant bit and `(2,2)` the least significant.
//! A stored bit of 1 means +1, a 0 means −1.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lanes;
use crate::wire::{ByteReader, WireError};

/// Number of kernel positions in a 3x3 channel.
pub const POSITIONS: usize = 9;
/// Number of distinct bit sequences.
pub const SEQUENCE_COUNT: usize = 512;
/// Default register width in bits.
pub const DEFAULT_REGISTER_WIDTH: usize = 128;

pub const KERNEL_MAGIC: &[u8; 4] = b"BNK1";
pub const PACKED_MAGIC: &[u8; 4] = b"BNP1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bit sequence {0} is outside 0..=511")]
    SequenceOutOfRange(u32),
    #[error("kernel dimensions must be positive (out_channels={out_channels}, in_channels={in_channels})")]
    ZeroDimension {
        out_channels: usize,
        in_channels: usize,
    },
    #[error("expected {expected} sequences, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("register width must be at least 1")]
    ZeroRegisterWidth,
    #[error("malformed packed kernel: {0}")]
    Structural(String),
    #[error("kernel file format error: {0}")]
    Format(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One binary weight or activation value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    #[inline]
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    #[inline]
    pub fn bit(self) -> bool {
        self == Sign::Plus
    }

    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// The 9-bit pattern of one kernel channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct BitSequence(u16);

impl BitSequence {
    pub const MIN: BitSequence = BitSequence(0);
    pub const MAX: BitSequence = BitSequence(511);

    pub fn new(index: u16) -> Result<Self, TensorError> {
        if (index as usize) < SEQUENCE_COUNT {
            Ok(BitSequence(index))
        } else {
            Err(TensorError::SequenceOutOfRange(index as u32))
        }
    }

    #[inline]
    pub fn index(self) -> u16 {
        self.0
    }

    /// Stored bit at kernel position `pos = 3 * row + col`.
    #[inline]
    pub fn bit_at(self, pos: usize) -> bool {
        debug_assert!(pos < POSITIONS);
        (self.0 >> (8 - pos)) & 1 == 1
    }

    #[inline]
    pub fn with_bit(self, pos: usize, value: bool) -> Self {
        let mask = 1u16 << (8 - pos);
        BitSequence(if value { self.0 | mask } else { self.0 & !mask })
    }

    /// Flips the bit at kernel position `pos`.
    #[inline]
    pub fn flip(self, pos: usize) -> Self {
        BitSequence(self.0 ^ (1 << (8 - pos)))
    }

    pub fn all() -> impl Iterator<Item = BitSequence> {
        (0..SEQUENCE_COUNT as u16).map(BitSequence)
    }
}

impl TryFrom<u16> for BitSequence {
    type Error = TensorError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        BitSequence::new(value)
    }
}

impl From<BitSequence> for u16 {
    fn from(s: BitSequence) -> u16 {
        s.0
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn seq_to_index(channel: &[[Sign; 3]; 3]) -> BitSequence {
    let mut index = 0u16;
    for row in channel {
        for &v in row {
            index = (index << 1) | v.bit() as u16;
        }
    }
    BitSequence(index)
}

pub fn index_to_seq(s: BitSequence) -> [[Sign; 3]; 3] {
    let mut out = [[Sign::Minus; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = Sign::from_bit(s.bit_at(3 * r + c));
        }
    }
    out
}

/// `out_channels × in_channels` grid of channel sequences, output-channel major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryKernel {
    out_channels: usize,
    in_channels: usize,
    sequences: Vec<BitSequence>,
}

impl BinaryKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        sequences: Vec<BitSequence>,
    ) -> Result<Self, TensorError> {
        if out_channels == 0 || in_channels == 0 {
            return Err(TensorError::ZeroDimension {
                out_channels,
                in_channels,
            });
        }
        let expected = out_channels * in_channels;
        if sequences.len() != expected {
            return Err(TensorError::LengthMismatch {
                expected,
                actual: sequences.len(),
            });
        }
        Ok(Self {
            out_channels,
            in_channels,
            sequences,
        })
    }

    pub fn from_indices(
        out_channels: usize,
        in_channels: usize,
        indices: &[u16],
    ) -> Result<Self, TensorError> {
        let sequences = indices
            .iter()
            .map(|&i| BitSequence::new(i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(out_channels, in_channels, sequences)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn channel_count(&self) -> usize {
        self.sequences.len()
    }

    pub fn sequences(&self) -> &[BitSequence] {
        &self.sequences
    }

    #[inline]
    pub fn get(&self, out_channel: usize, in_channel: usize) -> BitSequence {
        self.sequences[out_channel * self.in_channels + in_channel]
    }

    pub fn set(&mut self, out_channel: usize, in_channel: usize, s: BitSequence) {
        self.sequences[out_channel * self.in_channels + in_channel] = s;
    }

    /// Rewrites every channel through `f`, keeping the shape.
    pub fn map_sequences(&self, mut f: impl FnMut(BitSequence) -> BitSequence) -> Self {
        Self {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            sequences: self.sequences.iter().map(|&s| f(s)).collect(),
        }
    }

    pub fn into_sequences(self) -> Vec<BitSequence> {
        self.sequences
    }
}

/// Channel-packed kernel: for every output channel and every sub-group of
/// `register_width` input channels, nine words (one per kernel position)
/// whose lane `j` holds the bit of input channel `group * R + j`.
///
/// Words are stored flat as `[out][group][position][limb]`. The last
/// sub-group of each output channel may be partial; lanes past
/// [`PackedKernel::valid_lanes`] are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedKernel {
    pub register_width: usize,
    pub out_channels: usize,
    pub in_channels: usize,
    pub words: Vec<u64>,
}

impl PackedKernel {
    pub fn groups_per_output(&self) -> usize {
        self.in_channels.div_ceil(self.register_width.max(1))
    }

    pub fn limbs(&self) -> usize {
        lanes::limbs_for(self.register_width)
    }

    pub fn valid_lanes(&self, group: usize) -> usize {
        (self.in_channels - group * self.register_width).min(self.register_width)
    }

    /// Input channel held by `lane` of sub-group `group`.
    pub fn lane_channel(&self, group: usize, lane: usize) -> usize {
        group * self.register_width + lane
    }

    #[inline]
    pub fn word(&self, out_channel: usize, group: usize, pos: usize) -> &[u64] {
        let limbs = self.limbs();
        let start = ((out_channel * self.groups_per_output() + group) * POSITIONS + pos) * limbs;
        &self.words[start..start + limbs]
    }

    fn word_mut(&mut self, out_channel: usize, group: usize, pos: usize) -> &mut [u64] {
        let limbs = self.limbs();
        let start = ((out_channel * self.groups_per_output() + group) * POSITIONS + pos) * limbs;
        &mut self.words[start..start + limbs]
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.register_width == 0 {
            return Err(TensorError::ZeroRegisterWidth);
        }
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(TensorError::Structural(format!(
                "no sub-groups for out_channels={} in_channels={}",
                self.out_channels, self.in_channels
            )));
        }
        let expected = self.out_channels * self.groups_per_output() * POSITIONS * self.limbs();
        if self.words.len() != expected {
            return Err(TensorError::Structural(format!(
                "expected {} limbs ({} groups per output channel), found {}",
                expected,
                self.groups_per_output(),
                self.words.len()
            )));
        }
        let last = self.groups_per_output() - 1;
        let mask = lanes::valid_mask(self.valid_lanes(last), self.limbs());
        for o in 0..self.out_channels {
            for p in 0..POSITIONS {
                let w = self.word(o, last, p);
                if w.iter().zip(&mask).any(|(w, m)| w & !m != 0) {
                    return Err(TensorError::Structural(format!(
                        "lanes beyond the valid count are set (out channel {o}, position {p})"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn channel_pack(k: &BinaryKernel, register_width: usize) -> Result<PackedKernel, TensorError> {
    if register_width == 0 {
        return Err(TensorError::ZeroRegisterWidth);
    }
    let mut packed = PackedKernel {
        register_width,
        out_channels: k.out_channels,
        in_channels: k.in_channels,
        words: Vec::new(),
    };
    packed.words =
        vec![0; k.out_channels * packed.groups_per_output() * POSITIONS * packed.limbs()];
    for o in 0..k.out_channels {
        for i in 0..k.in_channels {
            let (g, lane) = (i / register_width, i % register_width);
            let s = k.get(o, i);
            for p in 0..POSITIONS {
                if s.bit_at(p) {
                    lanes::set(packed.word_mut(o, g, p), lane, true);
                }
            }
        }
    }
    Ok(packed)
}

pub fn channel_unpack(p: &PackedKernel) -> Result<BinaryKernel, TensorError> {
    p.validate()?;
    let mut sequences = Vec::with_capacity(p.out_channels * p.in_channels);
    for o in 0..p.out_channels {
        for i in 0..p.in_channels {
            let (g, lane) = (i / p.register_width, i % p.register_width);
            let mut s = BitSequence::MIN;
            for pos in 0..POSITIONS {
                s = s.with_bit(pos, lanes::get(p.word(o, g, pos), lane));
            }
            sequences.push(s);
        }
    }
    BinaryKernel::new(p.out_channels, p.in_channels, sequences)
}

/// Serializes a kernel in the uncompressed `BNK1` layout.
pub fn encode_kernel(k: &BinaryKernel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 2 * k.channel_count());
    out.extend_from_slice(KERNEL_MAGIC);
    out.extend_from_slice(&(k.out_channels as u32).to_le_bytes());
    out.extend_from_slice(&(k.in_channels as u32).to_le_bytes());
    for s in &k.sequences {
        out.extend_from_slice(&s.0.to_le_bytes());
    }
    out
}

pub fn decode_kernel(bytes: &[u8]) -> Result<BinaryKernel, TensorError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(KERNEL_MAGIC)?;
    let out_channels = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    if out_channels == 0 || in_channels == 0 {
        return Err(WireError::invalid(4, "kernel dimensions must be positive").into());
    }
    let n = out_channels
        .checked_mul(in_channels)
        .ok_or_else(|| WireError::invalid(4, "kernel dimensions overflow"))?;
    if r.remaining() < 2 * n {
        return Err(WireError::Truncated {
            offset: bytes.len(),
            needed: 2 * n - r.remaining(),
        }
        .into());
    }
    let mut sequences = Vec::with_capacity(n);
    for _ in 0..n {
        let offset = r.position();
        let v = r.u16()?;
        if v as usize >= SEQUENCE_COUNT {
            return Err(WireError::invalid(offset, format!("sequence {v} exceeds 511")).into());
        }
        sequences.push(BitSequence(v));
    }
    if r.remaining() != 0 {
        return Err(WireError::invalid(r.position(), "trailing bytes after kernel payload").into());
    }
    BinaryKernel::new(out_channels, in_channels, sequences)
}

pub fn save_kernel(k: &BinaryKernel, path: impl AsRef<Path>) -> Result<(), TensorError> {
    std::fs::write(path, encode_kernel(k))?;
    Ok(())
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<BinaryKernel, TensorError> {
    decode_kernel(&std::fs::read(path)?)
}

/// Serializes a packed kernel as `BNP1`: magic, u32 register width,
/// u32 out_channels, u32 in_channels, then every word as
/// `ceil(R / 8)` little-endian bytes in `[out][group][position]` order.
pub fn encode_packed(p: &PackedKernel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PACKED_MAGIC);
    out.extend_from_slice(&(p.register_width as u32).to_le_bytes());
    out.extend_from_slice(&(p.out_channels as u32).to_le_bytes());
    out.extend_from_slice(&(p.in_channels as u32).to_le_bytes());
    for word in p.words.chunks(p.limbs()) {
        lanes::to_bytes(word, p.register_width, &mut out);
    }
    out
}

pub fn decode_packed(bytes: &[u8]) -> Result<PackedKernel, TensorError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(PACKED_MAGIC)?;
    let register_width = r.u32()? as usize;
    if register_width == 0 {
        return Err(WireError::invalid(4, "register width must be positive").into());
    }
    let out_channels = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let mut p = PackedKernel {
        register_width,
        out_channels,
        in_channels,
        words: Vec::new(),
    };
    let nwords = out_channels * p.groups_per_output() * POSITIONS;
    let wbytes = register_width.div_ceil(8);
    for _ in 0..nwords {
        p.words
            .extend(lanes::from_bytes(r.take(wbytes)?, register_width));
    }
    if r.remaining() != 0 {
        return Err(WireError::invalid(r.position(), "trailing bytes after packed payload").into());
    }
    p.validate()?;
    Ok(p)
}
