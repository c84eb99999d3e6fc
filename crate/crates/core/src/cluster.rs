//! Hamming-1 substitution of rare sequences by frequent neighbours.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bintensor::{BinaryKernel, BitSequence, SEQUENCE_COUNT};
use crate::stats::{CoverageSummary, FrequencyTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("M must be in 1..=512, got {0}")]
    BadFrequentSize(usize),
    #[error("N must be in 1..=512, got {0}")]
    BadRareSize(usize),
}

pub fn hamming(a: BitSequence, b: BitSequence) -> u32 {
    (a.index() ^ b.index()).count_ones()
}

/// Sizes of the frequent set `st` (M) and rare set `su` (N).
///
/// When the two would overlap on a table with few occupied sequences, the
/// rare set is kept whole and `st` shrinks to the remaining sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    m: usize,
    n: usize,
}

impl ClusterConfig {
    pub fn new(m: usize, n: usize) -> Result<Self, ClusterError> {
        if !(1..=SEQUENCE_COUNT).contains(&m) {
            return Err(ClusterError::BadFrequentSize(m));
        }
        if !(1..=SEQUENCE_COUNT).contains(&n) {
            return Err(ClusterError::BadRareSize(n));
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { m: 32, n: 256 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubstitutionMap {
    pairs: BTreeMap<BitSequence, BitSequence>,
    untouched: Vec<BitSequence>,
}

impl SubstitutionMap {
    pub fn pairs(&self) -> &BTreeMap<BitSequence, BitSequence> {
        &self.pairs
    }

    /// Rare sequences without a distance-1 neighbour in `st`, rarest first.
    pub fn untouched(&self) -> &[BitSequence] {
        &self.untouched
    }

    pub fn get(&self, s: BitSequence) -> BitSequence {
        self.pairs.get(&s).copied().unwrap_or(s)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Channels that remain on `untouched` sequences, as a fraction of `t`.
    pub fn untouched_mass(&self, t: &FrequencyTable) -> f64 {
        self.untouched.iter().map(|&s| t.count(s)).sum::<u64>() as f64 / t.total() as f64
    }

    pub fn replaced_mass(&self, t: &FrequencyTable) -> f64 {
        self.pairs.keys().map(|&s| t.count(s)).sum::<u64>() as f64 / t.total() as f64
    }
}

pub fn build_substitution(t: &FrequencyTable, cfg: ClusterConfig) -> SubstitutionMap {
    let occupied = t.occupied();
    let n = cfg.n.min(occupied.len());
    let m = cfg.m.min(occupied.len() - n);
    let st = &occupied[..m];
    let su = &occupied[occupied.len() - n..];

    let mut map = SubstitutionMap::default();
    for &sa in su.iter().rev() {
        // st is rank ordered, so the first hit has the highest count and,
        // among equal counts, the lowest index
        match st.iter().find(|&&sb| hamming(sa, sb) == 1) {
            Some(&sb) => {
                map.pairs.insert(sa, sb);
            }
            None => map.untouched.push(sa),
        }
    }
    map
}

pub fn apply_substitution(kernels: &[BinaryKernel], m: &SubstitutionMap) -> Vec<BinaryKernel> {
    kernels
        .iter()
        .map(|k| k.map_sequences(|s| m.get(s)))
        .collect()
}

/// Frequency table after applying `m`, computed without touching kernels.
pub fn substituted_table(t: &FrequencyTable, m: &SubstitutionMap) -> FrequencyTable {
    let mut counts = t.counts().to_vec();
    for (&sa, &sb) in &m.pairs {
        counts[sb.index() as usize] += counts[sa.index() as usize];
        counts[sa.index() as usize] = 0;
    }
    FrequencyTable::from_counts(&counts).expect("total is preserved")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionReport {
    pub pairs: Vec<[u16; 2]>,
    pub untouched: Vec<u16>,
    pub coverage_before: CoverageSummary,
    pub coverage_after: CoverageSummary,
    pub untouched_mass: f64,
}

impl SubstitutionReport {
    pub fn new(before: &FrequencyTable, m: &SubstitutionMap) -> Self {
        let after = substituted_table(before, m);
        Self {
            pairs: m
                .pairs
                .iter()
                .map(|(a, b)| [a.index(), b.index()])
                .collect(),
            untouched: m.untouched.iter().map(|s| s.index()).collect(),
            coverage_before: CoverageSummary::of(before),
            coverage_after: CoverageSummary::of(&after),
            untouched_mass: m.untouched_mass(before),
        }
    }
}
