//! Helpers for R-bit register words stored as little-endian `u64` limbs.
//!
//! Lane `j` of a word lives in bit `j % 64` of limb `j / 64`.

/// Number of `u64` limbs needed to hold `width` lanes.
#[inline]
pub fn limbs_for(width: usize) -> usize {
    width.div_ceil(64)
}

#[inline]
pub fn get(word: &[u64], lane: usize) -> bool {
    (word[lane / 64] >> (lane % 64)) & 1 == 1
}

#[inline]
pub fn set(word: &mut [u64], lane: usize, value: bool) {
    let mask = 1u64 << (lane % 64);
    if value {
        word[lane / 64] |= mask;
    } else {
        word[lane / 64] &= !mask;
    }
}

/// Mask selecting the first `valid` lanes of a word with `limbs` limbs.
pub fn valid_mask(valid: usize, limbs: usize) -> Vec<u64> {
    (0..limbs)
        .map(|l| {
            let lo = l * 64;
            if valid >= lo + 64 {
                u64::MAX
            } else if valid <= lo {
                0
            } else {
                (1u64 << (valid - lo)) - 1
            }
        })
        .collect()
}

/// Serializes a word as `ceil(width / 8)` little-endian bytes.
pub fn to_bytes(word: &[u64], width: usize, out: &mut Vec<u8>) {
    let nbytes = width.div_ceil(8);
    for b in 0..nbytes {
        out.push((word[b / 8] >> ((b % 8) * 8)) as u8);
    }
}

pub fn from_bytes(bytes: &[u8], width: usize) -> Vec<u64> {
    let mut word = vec![0u64; limbs_for(width)];
    for (b, &byte) in bytes.iter().enumerate() {
        word[b / 8] |= (byte as u64) << ((b % 8) * 8);
    }
    word
}
