//! Frequency-of-use statistics over bit sequences, coverage of the most
//! common sequences, and a seeded generator of kernels with a prescribed
//! coverage profile.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bintensor::{BinaryKernel, BitSequence, SEQUENCE_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no kernels supplied")]
    EmptyInput,
    #[error("frequency table has zero total")]
    ZeroTotal,
    #[error("infeasible coverage target (k={k}, coverage={coverage}): {reason}")]
    InfeasibleTarget {
        k: usize,
        coverage: f64,
        reason: String,
    },
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
}

/// Per-sequence counts plus a descending-frequency ranking (ties broken by
/// ascending sequence index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    total: u64,
    ranking: Vec<BitSequence>,
}

impl FrequencyTable {
    pub fn from_counts(counts: &[u64]) -> Result<Self, StatsError> {
        assert_eq!(counts.len(), SEQUENCE_COUNT, "counts must have 512 entries");
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(StatsError::ZeroTotal);
        }
        let mut ranking: Vec<BitSequence> = BitSequence::all().collect();
        // stable sort keeps ascending index among equal counts
        ranking.sort_by(|a, b| counts[b.index() as usize].cmp(&counts[a.index() as usize]));
        Ok(Self {
            counts: counts.to_vec(),
            total,
            ranking,
        })
    }

    pub fn from_sequences<'a>(
        seqs: impl IntoIterator<Item = &'a BitSequence>,
    ) -> Result<Self, StatsError> {
        let mut counts = vec![0u64; SEQUENCE_COUNT];
        for s in seqs {
            counts[s.index() as usize] += 1;
        }
        Self::from_counts(&counts)
    }

    #[inline]
    pub fn count(&self, s: BitSequence) -> u64 {
        self.counts[s.index() as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn ranking(&self) -> &[BitSequence] {
        &self.ranking
    }

    /// Sequences with a non-zero count, in rank order.
    pub fn occupied(&self) -> &[BitSequence] {
        let n = self.counts.iter().filter(|&&c| c > 0).count();
        &self.ranking[..n]
    }

    pub fn probability(&self, s: BitSequence) -> f64 {
        self.count(s) as f64 / self.total as f64
    }

    /// Fraction of all channels covered by the `k` most frequent sequences.
    pub fn topk_coverage(&self, k: usize) -> f64 {
        let k = k.min(SEQUENCE_COUNT);
        let covered: u64 = self.ranking[..k].iter().map(|&s| self.count(s)).sum();
        covered as f64 / self.total as f64
    }

    pub fn merge(&self, other: &FrequencyTable) -> FrequencyTable {
        let counts: Vec<u64> = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        FrequencyTable::from_counts(&counts).expect("merged totals are positive")
    }

    pub fn report(&self) -> FrequencyReport {
        FrequencyReport {
            total: self.total,
            counts: self.counts.clone(),
            coverage: CoverageSummary::of(self),
        }
    }
}

pub fn count_frequencies(kernels: &[BinaryKernel]) -> Result<FrequencyTable, StatsError> {
    if kernels.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    FrequencyTable::from_sequences(kernels.iter().flat_map(|k| k.sequences()))
}

pub fn topk_coverage(t: &FrequencyTable, k: usize) -> f64 {
    t.topk_coverage(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    #[serde(rename = "16")]
    pub top16: f64,
    #[serde(rename = "32")]
    pub top32: f64,
    #[serde(rename = "64")]
    pub top64: f64,
    #[serde(rename = "256")]
    pub top256: f64,
}

impl CoverageSummary {
    pub fn of(t: &FrequencyTable) -> Self {
        Self {
            top16: t.topk_coverage(16),
            top32: t.topk_coverage(32),
            top64: t.topk_coverage(64),
            top256: t.topk_coverage(256),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub total: u64,
    pub counts: Vec<u64>,
    pub coverage: CoverageSummary,
}

// ---------------------------------------------------------------------------
// Synthetic kernels
// ---------------------------------------------------------------------------

/// The `k` most frequent sequences must cover `coverage` of all channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub k: usize,
    pub coverage: f64,
}

impl CoveragePoint {
    pub fn new(k: usize, coverage: f64) -> Self {
        Self { k, coverage }
    }
}

/// How sequences are assigned to frequency ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RankLayout {
    /// Seeded random permutation.
    Shuffled,
    /// The head tier is a seeded set of sequences at pairwise hamming
    /// distance ≥ 3; their distance-1 neighbours take the rarest ranks.
    #[default]
    NearHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub points: Vec<CoveragePoint>,
    pub total_channels: usize,
    pub seed: u64,
    /// Exclusive end rank of each equal-frequency tier; the last entry is
    /// the support. `None` uses the coverage breakpoints.
    pub tiers: Option<Vec<usize>>,
    /// Number of occupied sequences when `tiers` is `None`.
    pub support: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub layout: RankLayout,
    /// Put the all-minus (0) and all-plus (511) sequences at ranks 0 and 1.
    pub anchor_constants: bool,
}

impl SynthConfig {
    pub fn new(points: Vec<CoveragePoint>, total_channels: usize, seed: u64) -> Self {
        Self {
            points,
            total_channels,
            seed,
            tiers: None,
            support: 416,
            in_channels: 128,
            out_channels: 256,
            layout: RankLayout::default(),
            anchor_constants: false,
        }
    }

    pub fn with_tiers(mut self, tiers: Vec<usize>) -> Self {
        self.tiers = Some(tiers);
        self
    }
}

fn infeasible(p: &CoveragePoint, reason: impl Into<String>) -> StatsError {
    StatsError::InfeasibleTarget {
        k: p.k,
        coverage: p.coverage,
        reason: reason.into(),
    }
}

/// Per-rank probabilities of a piecewise-uniform rank distribution whose
/// top-k coverages hit `points`.
///
/// Tier densities are the least-squares solution of the coverage and
/// normalization equations; a non-zero residual, a negative density or an
/// increasing density makes the target infeasible.
pub fn rank_profile(
    points: &[CoveragePoint],
    tiers: Option<&[usize]>,
    support: usize,
) -> Result<Vec<f64>, StatsError> {
    let support = tiers.and_then(|t| t.last().copied()).unwrap_or(support);
    if support == 0 || support > SEQUENCE_COUNT {
        return Err(StatsError::InvalidConfig(format!(
            "support {support} outside 1..=512"
        )));
    }
    let mut prev: Option<&CoveragePoint> = None;
    for p in points {
        if p.k == 0 || p.k > SEQUENCE_COUNT {
            return Err(infeasible(p, "k outside 1..=512"));
        }
        if !(0.0..=1.0).contains(&p.coverage) || !p.coverage.is_finite() {
            return Err(infeasible(p, "coverage outside [0, 1]"));
        }
        if let Some(q) = prev {
            if p.k <= q.k {
                return Err(infeasible(p, "k must be strictly increasing"));
            }
            if p.coverage < q.coverage {
                return Err(infeasible(p, "coverage must be non-decreasing in k"));
            }
        }
        if p.k >= support && p.coverage < 1.0 - 1e-12 {
            return Err(infeasible(
                p,
                format!("coverage below 1 at or beyond the support of {support} sequences"),
            ));
        }
        prev = Some(p);
    }

    let boundaries: Vec<usize> = match tiers {
        Some(t) => {
            if t.is_empty() || t[0] == 0 || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(StatsError::InvalidConfig(
                    "tier ends must be positive and strictly increasing".into(),
                ));
            }
            t.to_vec()
        }
        None => points
            .iter()
            .map(|p| p.k)
            .filter(|&k| k < support)
            .chain(std::iter::once(support))
            .collect(),
    };
    let starts: Vec<usize> = std::iter::once(0)
        .chain(boundaries.iter().copied())
        .collect();

    let constrained: Vec<&CoveragePoint> = points.iter().filter(|p| p.k < support).collect();
    let rows = constrained.len() + 1;
    let cols = boundaries.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, p) in constrained.iter().enumerate() {
        for t in 0..cols {
            let overlap = p.k.min(boundaries[t]).saturating_sub(starts[t]);
            a[(r, t)] = overlap as f64;
        }
        b[r] = p.coverage;
    }
    for t in 0..cols {
        a[(rows - 1, t)] = (boundaries[t] - starts[t]) as f64;
    }
    b[rows - 1] = 1.0;

    let density = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| StatsError::InvalidConfig(format!("tier system not solvable: {e}")))?;

    let residual = &a * &density - &b;
    for (r, p) in constrained.iter().enumerate() {
        if residual[r].abs() > 1e-9 {
            return Err(infeasible(p, "not reachable with the given tiers"));
        }
    }
    if residual[rows - 1].abs() > 1e-9 {
        let last = points
            .last()
            .copied()
            .unwrap_or(CoveragePoint::new(support, 1.0));
        return Err(infeasible(&last, "tiers cannot be normalized"));
    }

    // point to blame for a bad density in tier t
    let blame = |t: usize| {
        points
            .iter()
            .find(|p| p.k > starts[t])
            .or(points.last())
            .copied()
            .unwrap_or(CoveragePoint::new(support, 1.0))
    };
    for t in 0..cols {
        if density[t] < -1e-12 {
            return Err(infeasible(&blame(t), "requires negative frequency"));
        }
        if t > 0 && density[t] > density[t - 1] + 1e-12 {
            return Err(infeasible(
                &blame(t),
                "requires rarer ranks to be more frequent than common ones",
            ));
        }
    }

    let mut probs = Vec::with_capacity(support);
    for t in 0..cols {
        let d = density[t].max(0.0);
        probs.extend(std::iter::repeat_n(d, boundaries[t] - starts[t]));
    }
    Ok(probs)
}

/// Integer counts summing to `total` proportional to `probs`
/// (largest-remainder apportionment, ties to the lower rank).
fn apportion(probs: &[f64], total: usize) -> Vec<u64> {
    let mass: f64 = probs.iter().sum();
    let ideal: Vec<f64> = probs.iter().map(|p| p / mass * total as f64).collect();
    let mut counts: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &r in order.iter().take(total - assigned as usize) {
        counts[r] += 1;
    }
    counts
}

fn hamming(a: u16, b: u16) -> u32 {
    (a ^ b).count_ones()
}

/// Assigns a sequence to every rank (all 512; ranks past the support get
/// zero counts).
fn rank_sequences(
    cfg: &SynthConfig,
    head: usize,
    support: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u16> {
    let mut pool: Vec<u16> = (0..SEQUENCE_COUNT as u16).collect();
    pool.shuffle(rng);
    let mut order: Vec<u16> = Vec::with_capacity(SEQUENCE_COUNT);
    if cfg.anchor_constants && support >= 2 {
        order.extend([0u16, 511]);
        pool.retain(|&s| s != 0 && s != 511);
    }
    match cfg.layout {
        RankLayout::Shuffled => {
            order.extend(pool);
            order
        }
        RankLayout::NearHead => {
            let head = head.max(order.len()).min(support);
            for &s in &pool {
                if order.len() >= head {
                    break;
                }
                if order.iter().all(|&h| hamming(h, s) >= 3) {
                    order.push(s);
                }
            }
            let chosen: HashSet<u16> = order.iter().copied().collect();
            pool.retain(|s| !chosen.contains(s));
            while order.len() < head {
                order.push(pool.remove(0));
            }
            let head_set: Vec<u16> = order.clone();
            let (neighbours, others): (Vec<u16>, Vec<u16>) = pool
                .into_iter()
                .partition(|&s| head_set.iter().any(|&h| hamming(h, s) == 1));
            let slots = support - head;
            let tail = neighbours.len().min(slots);
            let middle = slots - tail;
            order.extend(&others[..middle.min(others.len())]);
            order.extend(&neighbours[..tail]);
            order.extend(&others[middle.min(others.len())..]);
            order.extend(&neighbours[tail..]);
            order
        }
    }
}

/// Generates kernels whose pooled frequency table follows the requested
/// coverage profile. Deterministic for a given configuration.
pub fn synth_kernels(cfg: &SynthConfig) -> Result<Vec<BinaryKernel>, StatsError> {
    if cfg.total_channels == 0 || cfg.in_channels == 0 || cfg.out_channels == 0 {
        return Err(StatsError::InvalidConfig(
            "total_channels, in_channels and out_channels must be positive".into(),
        ));
    }
    let probs = rank_profile(&cfg.points, cfg.tiers.as_deref(), cfg.support)?;
    let support = probs.len();
    let head = match &cfg.tiers {
        Some(t) => t[0],
        None => cfg
            .points
            .iter()
            .map(|p| p.k)
            .find(|&k| k < support)
            .unwrap_or(support),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ranks = rank_sequences(cfg, head, support, &mut rng);
    let counts = apportion(&probs, cfg.total_channels);

    let mut channels: Vec<BitSequence> = Vec::with_capacity(cfg.total_channels);
    for (rank, &c) in counts.iter().enumerate() {
        let s = BitSequence::new(ranks[rank]).expect("rank table holds valid sequences");
        channels.extend(std::iter::repeat_n(s, c as usize));
    }
    channels.shuffle(&mut rng);

    let per_kernel = cfg.out_channels * cfg.in_channels;
    let mut kernels = Vec::new();
    let mut rest = channels.as_slice();
    while !rest.is_empty() {
        let take = if rest.len() >= per_kernel {
            per_kernel
        } else if rest.len() >= cfg.in_channels {
            rest.len() / cfg.in_channels * cfg.in_channels
        } else {
            rest.len()
        };
        let in_ch = cfg.in_channels.min(take);
        let (chunk, tail) = rest.split_at(take);
        kernels.push(
            BinaryKernel::new(take / in_ch, in_ch, chunk.to_vec())
                .expect("chunk sizes match kernel shape"),
        );
        rest = tail;
    }
    Ok(kernels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(pairs: &[(u16, u64)]) -> FrequencyTable {
        let mut counts = vec![0u64; 512];
        for &(s, c) in pairs {
            counts[s as usize] = c;
        }
        FrequencyTable::from_counts(&counts).unwrap()
    }

    #[test]
    fn counts_single_kernel() {
        let k = BinaryKernel::from_indices(1, 2, &[0, 511]).unwrap();
        let t = count_frequencies(&[k]).unwrap();
        assert_eq!(t.count(BitSequence::MIN), 1);
        assert_eq!(t.count(BitSequence::MAX), 1);
        assert_eq!(t.total(), 2);
        assert_eq!(t.topk_coverage(1), 0.5);
    }

    #[test]
    fn counts_repeated_sequence() {
        let k = BinaryKernel::from_indices(2, 2, &[42; 4]).unwrap();
        let t = count_frequencies(&[k]).unwrap();
        assert_eq!(t.count(BitSequence::new(42).unwrap()), 4);
        assert_eq!(t.ranking()[0].index(), 42);
        assert_eq!(t.occupied().len(), 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(count_frequencies(&[]), Err(StatsError::EmptyInput));
        assert_eq!(
            FrequencyTable::from_counts(&[0; 512]),
            Err(StatsError::ZeroTotal)
        );
    }

    #[test]
    fn coverage_examples() {
        let uniform = FrequencyTable::from_counts(&[3; 512]).unwrap();
        assert_eq!(uniform.topk_coverage(64), 0.125);
        assert_eq!(uniform.topk_coverage(0), 0.0);
        assert_eq!(uniform.topk_coverage(512), 1.0);
        assert_eq!(table(&[(7, 10)]).topk_coverage(1), 1.0);
    }

    #[test]
    fn ties_rank_by_ascending_index() {
        let t = table(&[(9, 5), (3, 5), (100, 7)]);
        let head: Vec<u16> = t.ranking()[..4].iter().map(|s| s.index()).collect();
        assert_eq!(head, vec![100, 3, 9, 0]);
    }

    #[test]
    fn report_json_keys() {
        let json = serde_json::to_string(&table(&[(1, 1)]).report().coverage).unwrap();
        assert_eq!(json, r#"{"16":1.0,"32":1.0,"64":1.0,"256":1.0}"#);
    }

    #[test]
    fn profile_two_piece_default() {
        let p = rank_profile(
            &[
                CoveragePoint::new(64, 0.753),
                CoveragePoint::new(256, 0.934),
            ],
            None,
            416,
        )
        .unwrap();
        assert_eq!(p.len(), 416);
        let head: f64 = p[..64].iter().sum();
        let mid: f64 = p[..256].iter().sum();
        assert!((head - 0.753).abs() < 1e-12);
        assert!((mid - 0.934).abs() < 1e-12);
        assert!((p[0] - 0.753 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn profile_node_aligned_tiers() {
        let p = rank_profile(
            &[
                CoveragePoint::new(64, 0.534),
                CoveragePoint::new(256, 0.906),
            ],
            Some(&[32, 160, 416]),
            416,
        )
        .unwrap();
        // three levels solved by hand: c = (1-.906)/160, b = (.372 - 96c)/96, a = .534/32 - b
        let c = (1.0 - 0.906) / 160.0;
        let b = (0.906 - 0.534 - 96.0 * c) / 96.0;
        let a = 0.534 / 32.0 - b;
        assert!((p[0] - a).abs() < 1e-12);
        assert!((p[100] - b).abs() < 1e-12);
        assert!((p[415] - c).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets_name_the_point() {
        // density must increase between 64 and 256
        let err = rank_profile(
            &[CoveragePoint::new(64, 0.1), CoveragePoint::new(256, 0.9)],
            None,
            416,
        )
        .unwrap_err();
        assert!(matches!(err, StatsError::InfeasibleTarget { k: 256, .. }));
        let err = rank_profile(&[CoveragePoint::new(512, 0.9)], None, 416).unwrap_err();
        assert!(matches!(err, StatsError::InfeasibleTarget { k: 512, .. }));
        let err = rank_profile(
            &[CoveragePoint::new(64, 0.9), CoveragePoint::new(32, 0.95)],
            None,
            416,
        )
        .unwrap_err();
        assert!(matches!(err, StatsError::InfeasibleTarget { k: 32, .. }));
    }

    #[test]
    fn synth_point_mass() {
        let cfg = SynthConfig::new(vec![CoveragePoint::new(1, 1.0)], 1000, 3);
        let ks = synth_kernels(&cfg).unwrap();
        let t = count_frequencies(&ks).unwrap();
        assert_eq!(t.occupied().len(), 1);
        assert_eq!(t.total(), 1000);
    }

    #[test]
    fn synth_vacuous_target() {
        let cfg = SynthConfig::new(vec![CoveragePoint::new(512, 1.0)], 5000, 3);
        let t = count_frequencies(&synth_kernels(&cfg).unwrap()).unwrap();
        assert_eq!(t.total(), 5000);
        assert_eq!(t.topk_coverage(512), 1.0);
    }

    #[test]
    fn synth_hits_block_targets() {
        let cfg = SynthConfig::new(
            vec![
                CoveragePoint::new(64, 0.753),
                CoveragePoint::new(256, 0.934),
            ],
            1 << 17,
            0,
        );
        let ks = synth_kernels(&cfg).unwrap();
        let t = count_frequencies(&ks).unwrap();
        assert_eq!(t.total(), 1 << 17);
        assert!((t.topk_coverage(64) - 0.753).abs() < 0.015);
        assert!((t.topk_coverage(256) - 0.934).abs() < 0.015);
        assert!(ks.iter().all(|k| k.in_channels() == 128));
    }

    #[test]
    fn synth_is_deterministic_under_seed() {
        let mut cfg = SynthConfig::new(
            vec![CoveragePoint::new(64, 0.6), CoveragePoint::new(256, 0.9)],
            10_000,
            11,
        );
        cfg.in_channels = 64;
        cfg.out_channels = 16;
        let a = synth_kernels(&cfg).unwrap();
        assert_eq!(a, synth_kernels(&cfg).unwrap());
        cfg.seed = 12;
        assert_ne!(a, synth_kernels(&cfg).unwrap());
        // 10_000 = 9 full 16x64 kernels + 6x64 + 1x16
        let shapes: Vec<_> = a
            .iter()
            .map(|k| (k.out_channels(), k.in_channels()))
            .collect();
        assert_eq!(shapes.len(), 11);
        assert_eq!(shapes[9], (12, 64));
        assert_eq!(shapes[10], (1, 16));
    }

    #[test]
    fn near_head_puts_neighbours_last() {
        let cfg = SynthConfig::new(
            vec![CoveragePoint::new(64, 0.7), CoveragePoint::new(256, 0.93)],
            100_000,
            5,
        )
        .with_tiers(vec![32, 160, 416]);
        let t = count_frequencies(&synth_kernels(&cfg).unwrap()).unwrap();
        let head: Vec<u16> = t.ranking()[..32].iter().map(|s| s.index()).collect();
        for s in &t.ranking()[160..416] {
            assert!(head.iter().any(|&h| hamming(h, s.index()) == 1));
        }
    }

    #[test]
    fn anchors_take_the_top_ranks() {
        let mut cfg = SynthConfig::new(
            vec![CoveragePoint::new(2, 0.25), CoveragePoint::new(64, 0.75)],
            50_000,
            1,
        );
        cfg.anchor_constants = true;
        let t = count_frequencies(&synth_kernels(&cfg).unwrap()).unwrap();
        let top: HashSet<u16> = t.ranking()[..2].iter().map(|s| s.index()).collect();
        assert_eq!(top, HashSet::from([0, 511]));
        assert!((t.topk_coverage(2) - 0.25).abs() < 1e-3);
    }

    fn counts_strategy() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(prop_oneof![Just(0u64), 0u64..50], 512)
            .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
    }

    proptest! {
        #[test]
        fn ranking_invariants(counts in counts_strategy()) {
            let t = FrequencyTable::from_counts(&counts).unwrap();
            let mut seen = [false; 512];
            for s in t.ranking() { seen[s.index() as usize] = true; }
            prop_assert!(seen.iter().all(|&b| b));
            for w in t.ranking().windows(2) {
                let (a, b) = (t.count(w[0]), t.count(w[1]));
                prop_assert!(a > b || (a == b && w[0].index() < w[1].index()));
            }
            let mut prev = 0.0;
            for k in 0..=512 {
                let c = t.topk_coverage(k);
                prop_assert!(c >= prev);
                prev = c;
            }
            prop_assert_eq!(t.topk_coverage(512), 1.0);
        }

        #[test]
        fn sharded_counting_merges(seqs in proptest::collection::vec(0u16..512, 2..400), split in any::<prop::sample::Index>()) {
            let at = split.index(seqs.len() - 1) + 1;
            let k = |v: &[u16]| BinaryKernel::from_indices(1, v.len(), v).unwrap();
            let whole = count_frequencies(&[k(&seqs)]).unwrap();
            let a = count_frequencies(&[k(&seqs[..at])]).unwrap();
            let b = count_frequencies(&[k(&seqs[at..])]).unwrap();
            prop_assert_eq!(a.merge(&b), whole.clone());
            let swapped = count_frequencies(&[k(&seqs[at..]), k(&seqs[..at])]).unwrap();
            prop_assert_eq!(swapped, whole);
        }
    }
}
