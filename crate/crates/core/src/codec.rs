//! Simplified Huffman code over bit sequences.
//!
//! The tree is flattened into a handful of nodes. Each node owns a prefix
//! and a table of up to `2^index_bits` sequences; a codeword is the node
//! prefix followed by the table index, MSB first. The default layout has
//! four nodes with 32/64/64/256 entries and 6/8/9/12-bit codewords.
//!
//! Sequences are placed by descending frequency, filling nodes in layout
//! order. Zero-frequency sequences are appended in ascending index order
//! while capacity remains, so held-out kernels usually stay encodable.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bintensor::{BinaryKernel, BitSequence, POSITIONS, SEQUENCE_COUNT};
use crate::stats::FrequencyTable;
use crate::wire::{ByteReader, WireError};

pub const COMPRESSED_MAGIC: &[u8; 4] = b"BNC1";
/// Uncompressed cost of one channel in bits.
pub const BASELINE_BITS: u32 = POSITIONS as u32;
pub const MAX_PREFIX_LEN: u8 = 8;
pub const MAX_INDEX_BITS: u8 = 9;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("layout has no nodes")]
    EmptyLayout,
    #[error("layout has {0} nodes, at most 255 are supported")]
    TooManyNodes(usize),
    #[error("invalid prefix {0:?}: expected up to 8 characters of '0'/'1'")]
    BadPrefix(String),
    #[error("index_bits {0} exceeds 9")]
    IndexBitsTooLarge(u8),
    #[error("layout is not prefix-free: {0} is a prefix of {1}")]
    NotPrefixFree(String, String),
    #[error("invalid layout description {0:?}")]
    BadLayout(String),
    #[error("{overflow} occupied sequence(s) do not fit in the layout capacity of {capacity}")]
    CapacityExceeded { overflow: usize, capacity: usize },
    #[error("node {node} table holds {len} entries but its capacity is {capacity}")]
    TableTooLarge {
        node: usize,
        len: usize,
        capacity: usize,
    },
    #[error("sequence {0} appears more than once in the node tables")]
    DuplicateEntry(u16),
    #[error("sequence {0} is not assigned a codeword")]
    Unassigned(u16),
    #[error("no node prefix matches at bit offset {bit_offset}")]
    InvalidPrefix { bit_offset: u64 },
    #[error(
        "index {index} beyond the {len}-entry table of node {node} at bit offset {bit_offset}"
    )]
    IndexOutOfRange {
        bit_offset: u64,
        node: usize,
        index: u32,
        len: usize,
    },
    #[error("stream ends inside a codeword at bit offset {bit_offset}")]
    Truncated { bit_offset: u64 },
    #[error("{0} unused byte(s) after the last codeword")]
    TrailingBytes(usize),
    #[error("non-zero padding after the last codeword")]
    NonZeroPadding,
    #[error("storage shares sum to {0}, expected 1")]
    SharesNotNormalized(f64),
    #[error("storage shares have no {0:?} entry")]
    MissingShare(String),
    #[error("compressed file format error: {0}")]
    Format(#[from] WireError),
}

/// A node prefix of up to 8 bits, stored right-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Prefix {
    bits: u8,
    len: u8,
}

impl Prefix {
    pub fn new(bits: u8, len: u8) -> Result<Self, CodecError> {
        if len > MAX_PREFIX_LEN || (len < 8 && bits >> len != 0) {
            return Err(CodecError::BadPrefix(format!("{bits:#b}/{len}")));
        }
        Ok(Self { bits, len })
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn len(self) -> u8 {
        self.len
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    /// True if `self` is a prefix of `other` (or equal to it).
    pub fn is_prefix_of(self, other: Prefix) -> bool {
        self.len <= other.len && (other.bits as u16 >> (other.len - self.len)) == self.bits as u16
    }
}

impl FromStr for Prefix {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() > MAX_PREFIX_LEN as usize || !s.chars().all(|c| c == '0' || c == '1') {
            return Err(CodecError::BadPrefix(s.to_string()));
        }
        let bits = s.chars().fold(0u8, |acc, c| (acc << 1) | (c == '1') as u8);
        Ok(Self {
            bits,
            len: s.len() as u8,
        })
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.len).rev() {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeSpec {
    pub prefix: Prefix,
    pub index_bits: u8,
}

impl NodeSpec {
    pub fn capacity(&self) -> usize {
        1 << self.index_bits
    }

    pub fn codeword_len(&self) -> u32 {
        self.prefix.len() as u32 + self.index_bits as u32
    }
}

/// An ordered, prefix-free list of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    nodes: Vec<NodeSpec>,
}

impl Layout {
    pub fn new(nodes: Vec<NodeSpec>) -> Result<Self, CodecError> {
        if nodes.is_empty() {
            return Err(CodecError::EmptyLayout);
        }
        if nodes.len() > 255 {
            return Err(CodecError::TooManyNodes(nodes.len()));
        }
        for n in &nodes {
            if n.index_bits > MAX_INDEX_BITS {
                return Err(CodecError::IndexBitsTooLarge(n.index_bits));
            }
        }
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                let (short, long) = if a.prefix.len() <= b.prefix.len() {
                    (a, b)
                } else {
                    (b, a)
                };
                if short.prefix.is_prefix_of(long.prefix) {
                    return Err(CodecError::NotPrefixFree(
                        short.prefix.to_string(),
                        long.prefix.to_string(),
                    ));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn from_pairs(pairs: &[(&str, u8)]) -> Result<Self, CodecError> {
        let nodes = pairs
            .iter()
            .map(|&(p, bits)| {
                Ok(NodeSpec {
                    prefix: p.parse()?,
                    index_bits: bits,
                })
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn capacity(&self) -> usize {
        self.nodes.iter().map(NodeSpec::capacity).sum()
    }

    pub fn max_prefix_len(&self) -> u8 {
        self.nodes.iter().map(|n| n.prefix.len()).max().unwrap_or(0)
    }

    pub fn max_codeword_len(&self) -> u32 {
        self.nodes
            .iter()
            .map(NodeSpec::codeword_len)
            .max()
            .unwrap_or(0)
    }

    /// Node whose prefix is the first `len` bits `bits`, if any.
    pub fn match_prefix(&self, bits: u8, len: u8) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.prefix.len() == len && n.prefix.bits() == bits)
    }
}

impl Default for Layout {
    fn default() -> Self {
        Self::from_pairs(&[("0", 5), ("10", 6), ("110", 6), ("1110", 8)])
            .expect("default layout is prefix-free")
    }
}

/// `prefix:index_bits` pairs separated by commas, e.g. `0:5,10:6,110:6,1110:8`.
impl FromStr for Layout {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut nodes = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (p, bits) = part
                .split_once(':')
                .ok_or_else(|| CodecError::BadLayout(s.to_string()))?;
            let index_bits: u8 = bits
                .trim()
                .parse()
                .map_err(|_| CodecError::BadLayout(s.to_string()))?;
            nodes.push(NodeSpec {
                prefix: p.trim().parse()?,
                index_bits,
            });
        }
        Self::new(nodes)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", n.prefix, n.index_bits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codeword {
    pub bits: u32,
    pub len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub node: u8,
    pub index: u16,
}

/// Node layout plus the per-node sequence tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanSpec {
    layout: Layout,
    tables: Vec<Vec<BitSequence>>,
    assignment: Vec<Option<Slot>>,
}

pub fn build_spec(t: &FrequencyTable, layout: &Layout) -> Result<HuffmanSpec, CodecError> {
    let occupied = t.occupied();
    let capacity = layout.capacity();
    if occupied.len() > capacity {
        return Err(CodecError::CapacityExceeded {
            overflow: occupied.len() - capacity,
            capacity,
        });
    }
    let unused = BitSequence::all().filter(|&s| t.count(s) == 0);
    let mut order = occupied.iter().copied().chain(unused);
    let tables = layout
        .nodes()
        .iter()
        .map(|n| order.by_ref().take(n.capacity()).collect())
        .collect();
    HuffmanSpec::from_tables(layout.clone(), tables)
}

impl HuffmanSpec {
    pub fn from_tables(layout: Layout, tables: Vec<Vec<BitSequence>>) -> Result<Self, CodecError> {
        if tables.len() != layout.nodes().len() {
            return Err(CodecError::BadLayout(format!(
                "{} tables for {} nodes",
                tables.len(),
                layout.nodes().len()
            )));
        }
        let mut assignment = vec![None; SEQUENCE_COUNT];
        for (node, (spec, table)) in layout.nodes().iter().zip(&tables).enumerate() {
            if table.len() > spec.capacity() {
                return Err(CodecError::TableTooLarge {
                    node,
                    len: table.len(),
                    capacity: spec.capacity(),
                });
            }
            for (index, s) in table.iter().enumerate() {
                let slot = &mut assignment[s.index() as usize];
                if slot.is_some() {
                    return Err(CodecError::DuplicateEntry(s.index()));
                }
                *slot = Some(Slot {
                    node: node as u8,
                    index: index as u16,
                });
            }
        }
        Ok(Self {
            layout,
            tables,
            assignment,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tables(&self) -> &[Vec<BitSequence>] {
        &self.tables
    }

    pub fn slot(&self, s: BitSequence) -> Option<Slot> {
        self.assignment[s.index() as usize]
    }

    pub fn codeword(&self, s: BitSequence) -> Option<Codeword> {
        self.slot(s).map(|slot| {
            let node = &self.layout.nodes()[slot.node as usize];
            Codeword {
                bits: ((node.prefix.bits() as u32) << node.index_bits) | slot.index as u32,
                len: node.codeword_len(),
            }
        })
    }

    pub fn codeword_len(&self, s: BitSequence) -> Option<u32> {
        self.codeword(s).map(|c| c.len)
    }

    pub fn lookup(&self, node: usize, index: usize) -> Option<BitSequence> {
        self.tables.get(node)?.get(index).copied()
    }

    /// Total encoded bits for the channels counted in `t`.
    pub fn encoded_bits(&self, t: &FrequencyTable) -> Result<u64, CodecError> {
        let mut bits = 0u64;
        for &s in t.occupied() {
            let len = self
                .codeword_len(s)
                .ok_or(CodecError::Unassigned(s.index()))?;
            bits += t.count(s) * len as u64;
        }
        Ok(bits)
    }

    pub fn mean_code_length(&self, t: &FrequencyTable) -> Result<f64, CodecError> {
        Ok(self.encoded_bits(t)? as f64 / t.total() as f64)
    }

    /// Fraction of channels that land in each node.
    pub fn node_usage(&self, t: &FrequencyTable) -> Result<Vec<f64>, CodecError> {
        let mut usage = vec![0u64; self.tables.len()];
        for &s in t.occupied() {
            let slot = self.slot(s).ok_or(CodecError::Unassigned(s.index()))?;
            usage[slot.node as usize] += t.count(s);
        }
        Ok(usage
            .into_iter()
            .map(|u| u as f64 / t.total() as f64)
            .collect())
    }

    /// Appends the spec block: node count u8, then per node prefix length
    /// u8, prefix bits u8 (right-aligned), index_bits u8, table length
    /// u16 LE and the table entries as u16 LE.
    pub fn write_block(&self, out: &mut Vec<u8>) {
        out.push(self.tables.len() as u8);
        for (node, table) in self.layout.nodes().iter().zip(&self.tables) {
            out.push(node.prefix.len());
            out.push(node.prefix.bits());
            out.push(node.index_bits);
            out.extend_from_slice(&(table.len() as u16).to_le_bytes());
            for s in table {
                out.extend_from_slice(&s.index().to_le_bytes());
            }
        }
    }

    pub fn block_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_block(&mut out);
        out
    }

    pub fn from_block(block: &SpecBlock) -> Result<Self, CodecError> {
        let nodes = block
            .nodes
            .iter()
            .map(|n| {
                Ok(NodeSpec {
                    prefix: Prefix::new(n.prefix_bits, n.prefix_len)?,
                    index_bits: n.index_bits,
                })
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        let layout = Layout::new(nodes)?;
        let tables = block
            .nodes
            .iter()
            .map(|n| {
                n.table
                    .iter()
                    .map(|&v| {
                        BitSequence::new(v).map_err(|_| {
                            CodecError::Format(WireError::invalid(
                                0,
                                format!("table entry {v} exceeds 511"),
                            ))
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        Self::from_tables(layout, tables)
    }
}

/// Node entry of a serialized spec block, before semantic validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawNode {
    pub prefix_len: u8,
    pub prefix_bits: u8,
    pub index_bits: u8,
    pub table: Vec<u16>,
}

/// A spec block as read from bytes; see [`HuffmanSpec::write_block`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecBlock {
    pub nodes: Vec<RawNode>,
}

impl SpecBlock {
    pub fn read(r: &mut ByteReader<'_>) -> Result<Self, WireError> {
        let count = r.u8()?;
        let mut nodes = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let prefix_len = r.u8()?;
            let prefix_bits = r.u8()?;
            let index_bits = r.u8()?;
            let len = r.u16()? as usize;
            let table = (0..len).map(|_| r.u16()).collect::<Result<_, _>>()?;
            nodes.push(RawNode {
                prefix_len,
                prefix_bits,
                index_bits,
                table,
            });
        }
        Ok(Self { nodes })
    }

    pub fn table_entries(&self) -> usize {
        self.nodes.iter().map(|n| n.table.len()).sum()
    }
}

/// MSB-first bit writer; the final byte is zero-padded.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, value: u32, len: u32) {
        for i in (0..len).rev() {
            let bit = (value >> i) & 1;
            if self.bits.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bits)
    }
}

/// MSB-first bit reader.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.data.len() as u64 * 8 - self.pos
    }

    pub fn peek(&self, len: u32) -> Option<u32> {
        if (len as u64) > self.remaining() {
            return None;
        }
        let mut v = 0u32;
        for i in 0..len as u64 {
            let p = self.pos + i;
            let bit = (self.data[(p / 8) as usize] >> (7 - p % 8)) & 1;
            v = (v << 1) | bit as u32;
        }
        Some(v)
    }

    pub fn read(&mut self, len: u32) -> Option<u32> {
        let v = self.peek(len)?;
        self.pos += len as u64;
        Some(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedStream {
    pub count: u32,
    pub payload: Vec<u8>,
    /// Codeword bits in `payload`, excluding final-byte padding.
    pub payload_bits: u64,
}

pub fn encode_sequences<'a>(
    seqs: impl IntoIterator<Item = &'a BitSequence>,
    spec: &HuffmanSpec,
) -> Result<CompressedStream, CodecError> {
    let mut w = BitWriter::new();
    let mut count = 0u32;
    for &s in seqs {
        let cw = spec.codeword(s).ok_or(CodecError::Unassigned(s.index()))?;
        w.write(cw.bits, cw.len);
        count += 1;
    }
    let (payload, payload_bits) = w.finish();
    Ok(CompressedStream {
        count,
        payload,
        payload_bits,
    })
}

/// Encodes every channel, output-channel major, kernels in order.
pub fn encode(
    kernels: &[BinaryKernel],
    spec: &HuffmanSpec,
) -> Result<CompressedStream, CodecError> {
    encode_sequences(kernels.iter().flat_map(|k| k.sequences()), spec)
}

/// Reads one codeword; shared by [`decode`] and tests of the hardware model.
pub fn decode_one(r: &mut BitReader<'_>, spec: &HuffmanSpec) -> Result<BitSequence, CodecError> {
    let start = r.position();
    let layout = spec.layout();
    let mut node = None;
    for len in 0..=layout.max_prefix_len() {
        let Some(bits) = r.peek(len as u32) else {
            return Err(CodecError::Truncated { bit_offset: start });
        };
        if let Some(n) = layout.match_prefix(bits as u8, len) {
            node = Some((n, len));
            break;
        }
    }
    let (node, len) = node.ok_or(CodecError::InvalidPrefix { bit_offset: start })?;
    r.read(len as u32);
    let index_bits = layout.nodes()[node].index_bits as u32;
    let index = r
        .read(index_bits)
        .ok_or(CodecError::Truncated { bit_offset: start })?;
    spec.lookup(node, index as usize)
        .ok_or(CodecError::IndexOutOfRange {
            bit_offset: start,
            node,
            index,
            len: spec.tables()[node].len(),
        })
}

pub fn decode(s: &CompressedStream, spec: &HuffmanSpec) -> Result<Vec<BitSequence>, CodecError> {
    let mut r = BitReader::new(&s.payload);
    let mut out = Vec::with_capacity(s.count as usize);
    for _ in 0..s.count {
        out.push(decode_one(&mut r, spec)?);
    }
    let rest = r.remaining();
    if rest >= 8 {
        return Err(CodecError::TrailingBytes((rest / 8) as usize));
    }
    if r.peek(rest as u32) != Some(0) {
        return Err(CodecError::NonZeroPadding);
    }
    Ok(out)
}

/// Serializes a compressed file: `BNC1`, u32 LE sequence count, the spec
/// block, then the payload bytes.
pub fn write_compressed(spec: &HuffmanSpec, s: &CompressedStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + s.payload.len());
    out.extend_from_slice(COMPRESSED_MAGIC);
    out.extend_from_slice(&s.count.to_le_bytes());
    spec.write_block(&mut out);
    out.extend_from_slice(&s.payload);
    out
}

/// Parses a compressed file. `payload_bits` is recovered by decoding.
pub fn read_compressed(bytes: &[u8]) -> Result<(HuffmanSpec, CompressedStream), CodecError> {
    let (spec, mut stream) = parse_compressed(bytes)?;
    let mut br = BitReader::new(&stream.payload);
    for _ in 0..stream.count {
        decode_one(&mut br, &spec)?;
    }
    stream.payload_bits = br.position();
    Ok((spec, stream))
}

/// Parses header and spec without touching the payload; `payload_bits`
/// is left at the byte-aligned upper bound.
pub fn parse_compressed(bytes: &[u8]) -> Result<(HuffmanSpec, CompressedStream), CodecError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(COMPRESSED_MAGIC)?;
    let count = r.u32()?;
    let block_at = r.position();
    let block = SpecBlock::read(&mut r)?;
    let spec = HuffmanSpec::from_block(&block).map_err(|e| match e {
        CodecError::Format(WireError::Invalid { message, .. }) => {
            CodecError::Format(WireError::invalid(block_at, message))
        }
        other => other,
    })?;
    let payload = r.rest().to_vec();
    let payload_bits = payload.len() as u64 * 8;
    Ok((
        spec,
        CompressedStream {
            count,
            payload,
            payload_bits,
        },
    ))
}

/// Uncompressed bits per channel over the mean codeword length.
pub fn compression_ratio(t: &FrequencyTable, spec: &HuffmanSpec) -> Result<f64, CodecError> {
    let bits = spec.encoded_bits(t)?;
    Ok((BASELINE_BITS as u64 * t.total()) as f64 / bits as f64)
}

/// Ratio implied by per-node usage fractions and codeword lengths; the
/// fractions are used as given (not renormalized).
pub fn ratio_from_node_usage(fractions: &[f64], lengths: &[u32]) -> f64 {
    let mean: f64 = fractions
        .iter()
        .zip(lengths)
        .map(|(f, &l)| f * l as f64)
        .sum();
    BASELINE_BITS as f64 / mean
}

pub const CONV3X3_SHARE: &str = "conv3x3";

/// Whole-model storage ratio when only the 3x3 convolution share is compressed.
pub fn model_ratio(shares: &BTreeMap<String, f64>, conv3x3_ratio: f64) -> Result<f64, CodecError> {
    let sum: f64 = shares.values().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(CodecError::SharesNotNormalized(sum));
    }
    let share = *shares
        .get(CONV3X3_SHARE)
        .ok_or_else(|| CodecError::MissingShare(CONV3X3_SHARE.into()))?;
    Ok(1.0 / (share / conv3x3_ratio + (1.0 - share)))
}

/// Per-block ratio summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub channels: u64,
    pub payload_bits: u64,
    pub analytic_ratio: f64,
    pub measured_ratio: f64,
    pub mean_code_length: f64,
    pub node_usage: Vec<f64>,
}

impl RatioReport {
    pub fn new(
        t: &FrequencyTable,
        spec: &HuffmanSpec,
        stream: &CompressedStream,
    ) -> Result<Self, CodecError> {
        Ok(Self {
            channels: t.total(),
            payload_bits: stream.payload_bits,
            analytic_ratio: compression_ratio(t, spec)?,
            measured_ratio: (BASELINE_BITS as u64 * stream.count as u64) as f64
                / stream.payload_bits as f64,
            mean_code_length: spec.mean_code_length(t)?,
            node_usage: spec.node_usage(t)?,
        })
    }
}
