//! Compression of binary-neural-network 3x3 kernels with a small fixed-depth
//! prefix code, hamming-distance-1 clustering of rare channel patterns,
//! xnor/popcount convolution over channel-packed words, and a functional
//! model of a hardware decoding unit that streams, decodes and re-packs
//! compressed kernels.

pub mod bconv;
pub mod bintensor;
pub mod cluster;
pub mod codec;
pub mod dusim;
pub mod lanes;
pub mod profiles;
pub mod stats;
pub mod wire;

pub use bintensor::{BinaryKernel, BitSequence, PackedKernel, Sign};
pub use stats::{count_frequencies, FrequencyTable};
