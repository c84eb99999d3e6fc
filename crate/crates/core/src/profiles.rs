//! Reference measurements for a 13-block binary network used to shape
//! synthetic fixtures and to check reproduced ratios.

use std::collections::BTreeMap;

use crate::stats::{CoveragePoint, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockProfile {
    pub block: usize,
    /// Share of channels covered by the 64 most frequent sequences.
    pub top64: f64,
    pub top256: f64,
    /// Compression ratio without substitution.
    pub encoding_ratio: f64,
    /// Compression ratio after substituting the 256 rarest sequences.
    pub clustering_ratio: f64,
}

const fn block(
    block: usize,
    top64: f64,
    top256: f64,
    encoding_ratio: f64,
    clustering_ratio: f64,
) -> BlockProfile {
    BlockProfile {
        block,
        top64,
        top256,
        encoding_ratio,
        clustering_ratio,
    }
}

pub const BLOCKS: [BlockProfile; 13] = [
    block(1, 0.534, 0.906, 1.18, 1.30),
    block(2, 0.645, 0.951, 1.22, 1.30),
    block(3, 0.563, 0.8711, 1.21, 1.31),
    block(4, 0.648, 0.927, 1.21, 1.32),
    block(5, 0.632, 0.883, 1.19, 1.30),
    block(6, 0.631, 0.9086, 1.20, 1.33),
    block(7, 0.624, 0.9164, 1.18, 1.33),
    block(8, 0.608, 0.9024, 1.20, 1.32),
    block(9, 0.552, 0.929, 1.20, 1.31),
    block(10, 0.622, 0.899, 1.18, 1.32),
    block(11, 0.6797, 0.92, 1.19, 1.33),
    block(12, 0.753, 0.934, 1.25, 1.36),
    block(13, 0.583, 0.869, 1.22, 1.35),
];

/// Rank tiers aligned with the default node capacities (32 / +64+64 / +256).
pub const NODE_TIERS: [usize; 3] = [32, 160, 416];

pub fn block_profile(block: usize) -> Option<&'static BlockProfile> {
    BLOCKS.iter().find(|b| b.block == block)
}

impl BlockProfile {
    pub fn coverage_points(&self) -> Vec<CoveragePoint> {
        vec![
            CoveragePoint::new(64, self.top64),
            CoveragePoint::new(256, self.top256),
        ]
    }

    /// Fixture config hitting this block's coverages with node-aligned tiers.
    pub fn synth_config(&self, total_channels: usize, seed: u64) -> SynthConfig {
        SynthConfig::new(self.coverage_points(), total_channels, seed)
            .with_tiers(NODE_TIERS.to_vec())
    }
}

/// Storage shares per model component, summing to 1.
pub fn storage_shares() -> BTreeMap<String, f64> {
    [
        ("input", 0.0002),
        ("output", 0.2217),
        ("conv1x1", 0.085),
        ("conv3x3", 0.68),
        ("others", 0.0131),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}
