//! Cycle-approximate model of a hardware decoding unit.
//!
//! The unit is configured from memory with `lddu`, streams the compressed
//! payload in `T`-byte requests, decodes one codeword per cycle through a
//! prefix match, a length table and a banked sequence table, and packs the
//! results into sets of `k` registers of `R` bits. `ldps` pops the oldest
//! completed set.
//!
//! Cost model: one outstanding memory request with a fixed latency, one
//! cycle per decode, one cycle per lane write. Decode and pack form a
//! two-stage pipeline. A full set waits in the output queue; when the
//! queue is at capacity the pipeline stalls.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bintensor::{BitSequence, POSITIONS};
use crate::codec::{CompressedStream, HuffmanSpec, SpecBlock};
use crate::lanes;
use crate::wire::ByteReader;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Fault {
    #[error("configuration fault: {0}")]
    Config(String),
    #[error(
        "configuration fault: node tables need {required} bytes, scratchpad holds {available}"
    )]
    TableOverflow { required: usize, available: usize },
    #[error("memory fault: {len} byte(s) at {address:#x} are not mapped")]
    Memory { address: u64, len: usize },
    #[error("invalid prefix at bit offset {bit_offset}")]
    InvalidPrefix { bit_offset: u64 },
    #[error("index {index} beyond the table of node {node} at bit offset {bit_offset}")]
    IndexOutOfRange {
        bit_offset: u64,
        node: usize,
        index: u32,
    },
    #[error("stream underrun at bit offset {bit_offset}")]
    StreamUnderrun { bit_offset: u64 },
    #[error("ldps with an empty output queue")]
    NotReady,
}

impl Fault {
    pub fn name(&self) -> &'static str {
        match self {
            Fault::Config(_) => "config",
            Fault::TableOverflow { .. } => "table-overflow",
            Fault::Memory { .. } => "memory",
            Fault::InvalidPrefix { .. } => "invalid-prefix",
            Fault::IndexOutOfRange { .. } => "index-out-of-range",
            Fault::StreamUnderrun { .. } => "stream-underrun",
            Fault::NotReady => "not-ready",
        }
    }

    pub fn bit_offset(&self) -> Option<u64> {
        match self {
            Fault::InvalidPrefix { bit_offset }
            | Fault::IndexOutOfRange { bit_offset, .. }
            | Fault::StreamUnderrun { bit_offset } => Some(*bit_offset),
            _ => None,
        }
    }
}

/// Sparse byte-addressable memory made of disjoint segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryImage {
    segments: BTreeMap<u64, Vec<u8>>,
}

impl MemoryImage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maps `data` at `address`. Overlapping an existing segment panics.
    pub fn write(&mut self, address: u64, data: &[u8]) {
        let end = address + data.len() as u64;
        let overlaps = self
            .segments
            .range(..end)
            .next_back()
            .is_some_and(|(&a, d)| a + d.len() as u64 > address);
        assert!(
            !overlaps,
            "segment at {address:#x} overlaps an existing one"
        );
        self.segments.insert(address, data.to_vec());
    }

    pub fn read(&self, address: u64, len: usize) -> Result<&[u8], Fault> {
        let fault = Fault::Memory { address, len };
        let (&base, data) = self
            .segments
            .range(..=address)
            .next_back()
            .ok_or(fault.clone())?;
        let start = (address - base) as usize;
        data.get(start..start + len).ok_or(fault)
    }

    /// Everything from `address` to the end of its segment.
    pub fn tail(&self, address: u64) -> Result<&[u8], Fault> {
        let (&base, data) = self
            .segments
            .range(..=address)
            .next_back()
            .ok_or(Fault::Memory { address, len: 1 })?;
        data.get((address - base) as usize..)
            .ok_or(Fault::Memory { address, len: 1 })
    }
}

/// Static parameters of the unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitParams {
    /// Bytes per memory request (T).
    pub fetch_granularity: usize,
    pub input_buffer_size: usize,
    pub uncompressed_table_size: usize,
    /// Bits per packing register (R).
    pub register_width: usize,
    /// Registers per packed set (k).
    pub packing_registers: usize,
    pub register_file_size: usize,
    pub max_nodes: usize,
    pub mem_latency: u64,
    /// Cycles the consumer in [`DecodingUnit::run_to_completion`] needs
    /// between two `ldps`; 0 drains the queue as soon as a set lands.
    pub consumer_cycles_per_set: u64,
}

impl Default for UnitParams {
    fn default() -> Self {
        Self {
            fetch_granularity: 16,
            input_buffer_size: 256,
            uncompressed_table_size: 1024,
            register_width: 128,
            packing_registers: POSITIONS,
            register_file_size: 256,
            max_nodes: 4,
            mem_latency: 20,
            consumer_cycles_per_set: 0,
        }
    }
}

impl UnitParams {
    pub fn set_bytes(&self) -> usize {
        self.packing_registers * self.register_width.div_ceil(8)
    }

    /// Completed sets the register file can hold besides the active one.
    pub fn queue_capacity(&self) -> usize {
        (self.register_file_size / self.set_bytes().max(1)).max(1)
    }

    fn validate(&self) -> Result<(), Fault> {
        let bad = |m: &str| Err(Fault::Config(m.to_string()));
        if self.packing_registers != POSITIONS {
            return bad("packing register count must be 9 for 3x3 kernels");
        }
        if self.register_width == 0 {
            return bad("register width must be positive");
        }
        if self.fetch_granularity == 0 || self.fetch_granularity > self.input_buffer_size {
            return bad("fetch granularity must be in 1..=input buffer size");
        }
        if self.mem_latency == 0 {
            return bad("memory latency must be at least one cycle");
        }
        Ok(())
    }
}

/// Contents of the configuration blob read by `lddu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitConfig {
    pub sequence_count: u32,
    pub stream_base: u64,
    pub stream_length: u32,
    pub spec: HuffmanSpec,
}

impl UnitConfig {
    /// u32 LE sequence count, u64 LE stream pointer, u32 LE stream length,
    /// then the codec spec block.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.sequence_count.to_le_bytes());
        out.extend_from_slice(&self.stream_base.to_le_bytes());
        out.extend_from_slice(&self.stream_length.to_le_bytes());
        self.spec.write_block(&mut out);
        out
    }
}

pub const DEFAULT_CONFIG_ADDRESS: u64 = 0x1000;
pub const DEFAULT_STREAM_ADDRESS: u64 = 0x10_0000;

/// Lays out a config blob and its payload in a fresh memory image and
/// returns the image with the config address.
pub fn stage(spec: &HuffmanSpec, stream: &CompressedStream) -> (MemoryImage, u64) {
    let cfg = UnitConfig {
        sequence_count: stream.count,
        stream_base: DEFAULT_STREAM_ADDRESS,
        stream_length: stream.payload.len() as u32,
        spec: spec.clone(),
    };
    let mut mem = MemoryImage::new();
    mem.write(DEFAULT_CONFIG_ADDRESS, &cfg.to_bytes());
    mem.write(DEFAULT_STREAM_ADDRESS, &stream.payload);
    (mem, DEFAULT_CONFIG_ADDRESS)
}

/// One packed set: `words[p]` holds bit `p` of each packed sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterSet {
    pub words: Vec<Vec<u64>>,
    pub lanes: usize,
}

impl RegisterSet {
    fn new(register_width: usize) -> Self {
        Self {
            words: vec![vec![0; lanes::limbs_for(register_width)]; POSITIONS],
            lanes: 0,
        }
    }

    fn push(&mut self, s: BitSequence) {
        for (p, word) in self.words.iter_mut().enumerate() {
            lanes::set(word, self.lanes, s.bit_at(p));
        }
        self.lanes += 1;
    }

    /// Words in position order, limbs flattened.
    pub fn flat(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub sequences_decoded: u64,
    pub bytes_fetched: u64,
    pub bytes_requested: u64,
    pub fetch_requests: u64,
    pub stall_events: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub decode_cycles: u64,
    pub pack_cycles: u64,
    pub fetch_cycles: u64,
    pub hidden_fetch_cycles: u64,
    pub data_wait_cycles: u64,
    /// Fraction of cycles with a request in flight that also decoded.
    pub overlap: f64,
    pub decoded_bits: u64,
    pub mean_bits_per_sequence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tick {
    Decoded(BitSequence),
    /// Back-pressure from a full output queue.
    Stalled,
    /// Waiting for stream bytes.
    Waiting,
    /// Pipeline draining, nothing new decoded.
    Busy,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingFetch {
    ready_at: u64,
    offset: u64,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct DecodingUnit {
    params: UnitParams,
    config: UnitConfig,
    memory: MemoryImage,
    /// Index bits per node.
    length_table: Vec<u32>,
    buffer: VecDeque<u8>,
    /// Bits of the front byte already consumed.
    cursor: u32,
    consumed_bits: u64,
    fetched: u64,
    pending: Option<PendingFetch>,
    latch: Option<BitSequence>,
    active: RegisterSet,
    queue: VecDeque<RegisterSet>,
    stalled: bool,
    cycle: u64,
    report: CycleReport,
}

impl DecodingUnit {
    /// `lddu`: reads the configuration at `config_address`, loads the
    /// tables, resets the unit and issues the first fetch.
    pub fn lddu(
        config_address: u64,
        memory: MemoryImage,
        params: UnitParams,
    ) -> Result<Self, Fault> {
        params.validate()?;
        let blob = memory.tail(config_address)?;
        let mut r = ByteReader::new(blob);
        let malformed = |e: crate::wire::WireError| Fault::Config(e.to_string());
        let sequence_count = r.u32().map_err(malformed)?;
        let stream_base = r.u64().map_err(malformed)?;
        let stream_length = r.u32().map_err(malformed)?;
        let block = SpecBlock::read(&mut r).map_err(malformed)?;
        if block.nodes.len() > params.max_nodes {
            return Err(Fault::Config(format!(
                "{} nodes, the unit supports {}",
                block.nodes.len(),
                params.max_nodes
            )));
        }
        let required = block.table_entries() * 2;
        if required > params.uncompressed_table_size {
            return Err(Fault::TableOverflow {
                required,
                available: params.uncompressed_table_size,
            });
        }
        let spec = HuffmanSpec::from_block(&block).map_err(|e| Fault::Config(e.to_string()))?;
        let length_table = spec
            .layout()
            .nodes()
            .iter()
            .map(|n| n.index_bits as u32)
            .collect();
        let mut unit = Self {
            params,
            config: UnitConfig {
                sequence_count,
                stream_base,
                stream_length,
                spec,
            },
            memory,
            length_table,
            buffer: VecDeque::new(),
            cursor: 0,
            consumed_bits: 0,
            fetched: 0,
            pending: None,
            latch: None,
            active: RegisterSet::new(params.register_width),
            queue: VecDeque::new(),
            stalled: false,
            cycle: 0,
            report: CycleReport::default(),
        };
        unit.maybe_issue_fetch();
        Ok(unit)
    }

    pub fn params(&self) -> &UnitParams {
        &self.params
    }

    pub fn config(&self) -> &UnitConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn has_pending_fetch(&self) -> bool {
        self.pending.is_some()
    }

    pub fn queued_sets(&self) -> usize {
        self.queue.len()
    }

    pub fn counters(&self) -> CycleReport {
        let mut r = self.report;
        r.total_cycles = self.cycle;
        r.bytes_requested = r.fetch_requests * self.params.fetch_granularity as u64;
        r.overlap = if r.fetch_cycles == 0 {
            0.0
        } else {
            r.hidden_fetch_cycles as f64 / r.fetch_cycles as f64
        };
        r.mean_bits_per_sequence = if r.sequences_decoded == 0 {
            0.0
        } else {
            r.decoded_bits as f64 / r.sequences_decoded as f64
        };
        r
    }

    /// All sequences decoded, packed and flushed to the output queue.
    pub fn done(&self) -> bool {
        self.report.sequences_decoded == self.config.sequence_count as u64
            && self.latch.is_none()
            && self.active.lanes == 0
    }

    fn buffered_bits(&self) -> u64 {
        self.buffer.len() as u64 * 8 - self.cursor as u64
    }

    fn stream_exhausted(&self) -> bool {
        self.fetched >= self.config.stream_length as u64 && self.pending.is_none()
    }

    fn maybe_issue_fetch(&mut self) {
        if self.pending.is_some() || self.fetched >= self.config.stream_length as u64 {
            return;
        }
        let t = self.params.fetch_granularity;
        if self.params.input_buffer_size - self.buffer.len() < t {
            return;
        }
        let len = t.min((self.config.stream_length as u64 - self.fetched) as usize);
        self.pending = Some(PendingFetch {
            ready_at: self.cycle + self.params.mem_latency,
            offset: self.fetched,
            len,
        });
    }

    fn complete_fetch(&mut self) -> Result<(), Fault> {
        let Some(p) = self.pending else { return Ok(()) };
        if p.ready_at > self.cycle {
            return Ok(());
        }
        let bytes = self
            .memory
            .read(self.config.stream_base + p.offset, p.len)?;
        self.buffer.extend(bytes);
        self.fetched += p.len as u64;
        self.report.bytes_fetched += p.len as u64;
        self.report.fetch_requests += 1;
        self.pending = None;
        Ok(())
    }

    fn peek_bits(&self, len: u32) -> u32 {
        let mut v = 0;
        for i in 0..len {
            let pos = self.cursor + i;
            let byte = self.buffer[(pos / 8) as usize];
            v = (v << 1) | ((byte >> (7 - pos % 8)) & 1) as u32;
        }
        v
    }

    fn consume_bits(&mut self, len: u32) {
        let pos = self.cursor + len;
        self.buffer.drain(..(pos / 8) as usize);
        self.cursor = pos % 8;
        self.consumed_bits += len as u64;
    }

    /// One decode attempt. `Ok(None)` means more bytes are needed.
    fn try_decode(&mut self) -> Result<Option<BitSequence>, Fault> {
        let start = self.consumed_bits;
        let avail = self.buffered_bits();
        let layout = self.config.spec.layout();
        let max_prefix = layout.max_prefix_len() as u64;
        let short = |unit: &Self| {
            if unit.stream_exhausted() {
                Err(Fault::StreamUnderrun { bit_offset: start })
            } else {
                Ok(None)
            }
        };
        let mut matched = None;
        for len in 0..=max_prefix.min(avail) as u8 {
            if let Some(n) = layout.match_prefix(self.peek_bits(len as u32) as u8, len) {
                matched = Some((n, len as u32));
                break;
            }
        }
        let Some((node, prefix_len)) = matched else {
            return if avail >= max_prefix {
                Err(Fault::InvalidPrefix { bit_offset: start })
            } else {
                short(self)
            };
        };
        let index_bits = self.length_table[node];
        let total = prefix_len + index_bits;
        if avail < total as u64 {
            return short(self);
        }
        let index = self.peek_bits(total) & ((1u32 << index_bits) - 1);
        let s = self
            .config
            .spec
            .lookup(node, index as usize)
            .ok_or(Fault::IndexOutOfRange {
                bit_offset: start,
                node,
                index,
            })?;
        self.consume_bits(total);
        self.report.decoded_bits += total as u64;
        Ok(Some(s))
    }

    /// Advances one cycle.
    pub fn tick(&mut self) -> Result<Tick, Fault> {
        if self.done() {
            return Ok(Tick::Done);
        }
        self.complete_fetch()?;
        let fetching = self.pending.is_some();

        // pack stage
        let mut blocked = false;
        if self.set_ready() {
            if self.queue.len() >= self.params.queue_capacity() {
                blocked = true;
            } else {
                self.flush_active();
            }
        }
        if !blocked {
            if let Some(s) = self.latch.take() {
                self.active.push(s);
                self.report.pack_cycles += 1;
                if self.set_ready() && self.queue.len() < self.params.queue_capacity() {
                    self.flush_active();
                }
            }
        }

        // decode stage
        let mut outcome = Tick::Busy;
        if self.report.sequences_decoded < self.config.sequence_count as u64 {
            if self.latch.is_some() {
                outcome = Tick::Stalled;
            } else if let Some(s) = self.try_decode()? {
                self.latch = Some(s);
                self.report.sequences_decoded += 1;
                self.report.decode_cycles += 1;
                if fetching {
                    self.report.hidden_fetch_cycles += 1;
                }
                outcome = Tick::Decoded(s);
            } else {
                self.report.data_wait_cycles += 1;
                outcome = Tick::Waiting;
            }
        } else if blocked || (self.latch.is_none() && self.active.lanes > 0) {
            // final partial or full set waiting for queue space
            outcome = Tick::Stalled;
        }
        if outcome == Tick::Stalled {
            self.report.stall_cycles += 1;
            if !self.stalled {
                self.report.stall_events += 1;
            }
        }
        self.stalled = outcome == Tick::Stalled;
        if fetching {
            self.report.fetch_cycles += 1;
        }
        self.maybe_issue_fetch();
        self.cycle += 1;
        Ok(outcome)
    }

    /// Active set is full, or holds the final sequences of the stream.
    fn set_ready(&self) -> bool {
        let all_decoded = self.report.sequences_decoded == self.config.sequence_count as u64;
        self.active.lanes == self.params.register_width
            || (all_decoded && self.latch.is_none() && self.active.lanes > 0)
    }

    fn flush_active(&mut self) {
        let full = std::mem::replace(
            &mut self.active,
            RegisterSet::new(self.params.register_width),
        );
        self.queue.push_back(full);
    }

    /// Runs until one sequence is decoded, the unit is done, or it is
    /// blocked on a full output queue.
    pub fn step(&mut self) -> Result<Tick, Fault> {
        loop {
            match self.tick()? {
                Tick::Waiting | Tick::Busy => continue,
                other => return Ok(other),
            }
        }
    }

    /// `ldps`: pops the oldest packed set.
    pub fn ldps(&mut self) -> Result<RegisterSet, Fault> {
        self.queue.pop_front().ok_or(Fault::NotReady)
    }

    /// Drives the unit to completion with a consumer that issues `ldps`
    /// whenever a set is queued and `consumer_cycles_per_set` have passed.
    pub fn run_to_completion(mut self) -> Result<(Self, Vec<RegisterSet>, CycleReport), Fault> {
        let mut sets = Vec::new();
        let mut next_read = 0u64;
        loop {
            if !self.queue.is_empty() && self.cycle >= next_read {
                sets.push(self.ldps()?);
                next_read = self.cycle + self.params.consumer_cycles_per_set;
            }
            if self.tick()? == Tick::Done {
                break;
            }
        }
        while let Ok(set) = self.ldps() {
            sets.push(set);
        }
        let report = self.counters();
        Ok((self, sets, report))
    }
}
