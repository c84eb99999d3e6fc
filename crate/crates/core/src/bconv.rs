//! Binarization and 3x3 binary convolution.
//!
//! `conv_reference` evaluates the ±1 dot product directly. `conv_packed`
//! uses xnor + popcount over channel-packed words and applies
//! `o = 2 * popcount - n` with `n = 9 * in_channels`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bintensor::{BinaryKernel, PackedKernel, POSITIONS};
use crate::lanes;
use crate::wire::{ByteReader, WireError};

pub const FEATURE_MAGIC: &[u8; 4] = b"BNF1";
pub const OUTPUT_MAGIC: &[u8; 4] = b"BNO1";

#[derive(Debug, Error)]
pub enum BconvError {
    #[error("feature map dimensions must be positive, got {channels}x{height}x{width}")]
    ZeroDimension {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("register width must be positive")]
    ZeroRegisterWidth,
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("kernel has {kernel} input channels but the feature map has {map}")]
    ChannelMismatch { kernel: usize, map: usize },
    #[error("{height}x{width} input is too small for a 3x3 window")]
    TooSmall { height: usize, width: usize },
    #[error("weights packed at R={weights} but inputs at R={inputs}")]
    RegisterWidthMismatch { weights: usize, inputs: usize },
    #[error("feature map format error: {0}")]
    Format(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Valid,
    /// One pixel of border on each side, every padded value is -1.
    MinusOne,
}

impl Padding {
    fn border(self) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::MinusOne => 1,
        }
    }
}

fn check_dims(channels: usize, height: usize, width: usize) -> Result<(), BconvError> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(BconvError::ZeroDimension {
            channels,
            height,
            width,
        });
    }
    Ok(())
}

/// Full-precision map, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatFeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FloatFeatureMap {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, BconvError> {
        check_dims(channels, height, width)?;
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(BconvError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Binary map packed along channels: lane `j` of group `g` at pixel
/// `(y, x)` is channel `g * R + j`, same as [`PackedKernel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitFeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    register_width: usize,
    words: Vec<u64>,
}

impl BitFeatureMap {
    /// All bits zero, i.e. every value -1.
    pub fn zeros(
        channels: usize,
        height: usize,
        width: usize,
        register_width: usize,
    ) -> Result<Self, BconvError> {
        check_dims(channels, height, width)?;
        if register_width == 0 {
            return Err(BconvError::ZeroRegisterWidth);
        }
        let groups = channels.div_ceil(register_width);
        let limbs = lanes::limbs_for(register_width);
        Ok(Self {
            channels,
            height,
            width,
            register_width,
            words: vec![0; height * width * groups * limbs],
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        register_width: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self, BconvError> {
        let mut m = Self::zeros(channels, height, width, register_width)?;
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    m.set(c, y, x, f(c, y, x));
                }
            }
        }
        Ok(m)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn register_width(&self) -> usize {
        self.register_width
    }

    pub fn groups(&self) -> usize {
        self.channels.div_ceil(self.register_width)
    }

    pub fn limbs(&self) -> usize {
        lanes::limbs_for(self.register_width)
    }

    fn offset(&self, y: usize, x: usize, group: usize) -> usize {
        ((y * self.width + x) * self.groups() + group) * self.limbs()
    }

    pub fn word(&self, y: usize, x: usize, group: usize) -> &[u64] {
        let at = self.offset(y, x, group);
        &self.words[at..at + self.limbs()]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> bool {
        let r = self.register_width;
        lanes::get(self.word(y, x, c / r), c % r)
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, bit: bool) {
        let r = self.register_width;
        let at = self.offset(y, x, c / r);
        let limbs = self.limbs();
        lanes::set(&mut self.words[at..at + limbs], c % r, bit);
    }

    /// Same values, re-packed at another register width.
    pub fn repack(&self, register_width: usize) -> Result<Self, BconvError> {
        Self::from_fn(
            self.channels,
            self.height,
            self.width,
            register_width,
            |c, y, x| self.get(c, y, x),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntFeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<i32>,
}

impl IntFeatureMap {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Sign binarization: 1 where `x >= 0`. NaN fails the test and maps to 0.
pub fn binarize(x: &FloatFeatureMap, register_width: usize) -> Result<BitFeatureMap, BconvError> {
    BitFeatureMap::from_fn(x.channels, x.height, x.width, register_width, |c, y, xx| {
        x.get(c, y, xx) >= 0.0
    })
}

struct Geometry {
    out_h: usize,
    out_w: usize,
    border: usize,
}

fn geometry(
    kernel_in: usize,
    x: &BitFeatureMap,
    stride: usize,
    padding: Padding,
) -> Result<Geometry, BconvError> {
    if stride == 0 {
        return Err(BconvError::ZeroStride);
    }
    if kernel_in != x.channels {
        return Err(BconvError::ChannelMismatch {
            kernel: kernel_in,
            map: x.channels,
        });
    }
    let border = padding.border();
    let (h, w) = (x.height + 2 * border, x.width + 2 * border);
    if h < 3 || w < 3 {
        return Err(BconvError::TooSmall {
            height: x.height,
            width: x.width,
        });
    }
    Ok(Geometry {
        out_h: (h - 3) / stride + 1,
        out_w: (w - 3) / stride + 1,
        border,
    })
}

/// Input pixel under window offset `(ky, kx)`, or `None` for padding.
fn tap(
    g: &Geometry,
    x: &BitFeatureMap,
    oy: usize,
    ox: usize,
    stride: usize,
    ky: usize,
    kx: usize,
) -> Option<(usize, usize)> {
    let iy = (oy * stride + ky).checked_sub(g.border)?;
    let ix = (ox * stride + kx).checked_sub(g.border)?;
    (iy < x.height && ix < x.width).then_some((iy, ix))
}

pub fn conv_reference(
    w: &BinaryKernel,
    x: &BitFeatureMap,
    stride: usize,
    padding: Padding,
) -> Result<IntFeatureMap, BconvError> {
    let g = geometry(w.in_channels(), x, stride, padding)?;
    let sign = |b: bool| if b { 1 } else { -1 };
    let mut data = Vec::with_capacity(w.out_channels() * g.out_h * g.out_w);
    for o in 0..w.out_channels() {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = 0i32;
                for i in 0..w.in_channels() {
                    let s = w.get(o, i);
                    for p in 0..POSITIONS {
                        let xv = match tap(&g, x, oy, ox, stride, p / 3, p % 3) {
                            Some((iy, ix)) => x.get(i, iy, ix),
                            None => false,
                        };
                        acc += sign(s.bit_at(p)) * sign(xv);
                    }
                }
                data.push(acc);
            }
        }
    }
    Ok(IntFeatureMap {
        channels: w.out_channels(),
        height: g.out_h,
        width: g.out_w,
        data,
    })
}

/// Raw xnor-popcount per output (agreement count over `9 * in_channels` lanes).
pub fn conv_popcount(
    w: &PackedKernel,
    x: &BitFeatureMap,
    stride: usize,
    padding: Padding,
) -> Result<IntFeatureMap, BconvError> {
    if w.register_width != x.register_width {
        return Err(BconvError::RegisterWidthMismatch {
            weights: w.register_width,
            inputs: x.register_width,
        });
    }
    let g = geometry(w.in_channels, x, stride, padding)?;
    let limbs = x.limbs();
    let masks: Vec<Vec<u64>> = (0..w.groups_per_output())
        .map(|grp| lanes::valid_mask(w.valid_lanes(grp), limbs))
        .collect();
    let pad = vec![0u64; limbs];
    let mut data = Vec::with_capacity(w.out_channels * g.out_h * g.out_w);
    for o in 0..w.out_channels {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut pop = 0u32;
                for p in 0..POSITIONS {
                    let at = tap(&g, x, oy, ox, stride, p / 3, p % 3);
                    for (grp, mask) in masks.iter().enumerate() {
                        let xw = match at {
                            Some((iy, ix)) => x.word(iy, ix, grp),
                            None => &pad,
                        };
                        let ww = w.word(o, grp, p);
                        for l in 0..limbs {
                            pop += (!(ww[l] ^ xw[l]) & mask[l]).count_ones();
                        }
                    }
                }
                data.push(pop as i32);
            }
        }
    }
    Ok(IntFeatureMap {
        channels: w.out_channels,
        height: g.out_h,
        width: g.out_w,
        data,
    })
}

pub fn conv_packed(
    w: &PackedKernel,
    x: &BitFeatureMap,
    stride: usize,
    padding: Padding,
) -> Result<IntFeatureMap, BconvError> {
    let mut out = conv_popcount(w, x, stride, padding)?;
    let n = (POSITIONS * w.in_channels) as i32;
    for v in &mut out.data {
        *v = 2 * *v - n;
    }
    Ok(out)
}

/// Contents of a `BNF1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Float(FloatFeatureMap),
    Bits(BitFeatureMap),
}

impl FeatureMap {
    /// Binary view at the requested register width.
    pub fn to_bits(&self, register_width: usize) -> Result<BitFeatureMap, BconvError> {
        match self {
            FeatureMap::Float(f) => binarize(f, register_width),
            FeatureMap::Bits(b) if b.register_width == register_width => Ok(b.clone()),
            FeatureMap::Bits(b) => b.repack(register_width),
        }
    }
}

/// `BNF1`, u32 LE channels/height/width, u32 LE register width (0 for a
/// float map), then either f32 LE values or, per pixel and channel group,
/// `ceil(R / 8)` little-endian bytes.
pub fn encode_feature_map(m: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURE_MAGIC);
    let (dims, r) = match m {
        FeatureMap::Float(f) => (f.dims(), 0),
        FeatureMap::Bits(b) => (b.dims(), b.register_width),
    };
    for v in [dims.0, dims.1, dims.2, r] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    match m {
        FeatureMap::Float(f) => {
            for v in &f.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        FeatureMap::Bits(b) => {
            for word in b.words.chunks(b.limbs()) {
                lanes::to_bytes(word, b.register_width, &mut out);
            }
        }
    }
    out
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap, BconvError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(FEATURE_MAGIC)?;
    let header_at = r.position();
    let channels = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let rw = r.u32()? as usize;
    if channels == 0 || height == 0 || width == 0 {
        return Err(WireError::invalid(header_at, "zero dimension").into());
    }
    let map = if rw == 0 {
        let n = channels * height * width;
        let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        FeatureMap::Float(FloatFeatureMap::new(channels, height, width, data)?)
    } else {
        let mut b = BitFeatureMap::zeros(channels, height, width, rw)?;
        let nbytes = rw.div_ceil(8);
        let limbs = b.limbs();
        let groups = b.groups();
        for (i, slot) in b.words.chunks_mut(limbs).enumerate() {
            let at = r.position();
            let word = lanes::from_bytes(r.take(nbytes)?, rw);
            let valid = rw.min(channels - (i % groups) * rw);
            let mask = lanes::valid_mask(valid, limbs);
            if word.iter().zip(&mask).any(|(w, m)| w & !m != 0) {
                return Err(WireError::invalid(at, "bits set beyond the last channel").into());
            }
            slot.copy_from_slice(&word);
        }
        FeatureMap::Bits(b)
    };
    if r.remaining() != 0 {
        return Err(WireError::invalid(r.position(), "trailing bytes").into());
    }
    Ok(map)
}

pub fn save_feature_map(m: &FeatureMap, path: impl AsRef<Path>) -> Result<(), BconvError> {
    fs::write(path, encode_feature_map(m))?;
    Ok(())
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap, BconvError> {
    decode_feature_map(&fs::read(path)?)
}

/// `BNO1`, u32 LE channels/height/width, then i32 LE values.
pub fn encode_output(m: &IntFeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * m.data.len());
    out.extend_from_slice(OUTPUT_MAGIC);
    for v in [m.channels, m.height, m.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_output(bytes: &[u8]) -> Result<IntFeatureMap, BconvError> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(OUTPUT_MAGIC)?;
    let channels = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let data = (0..channels * height * width)
        .map(|_| r.i32())
        .collect::<Result<Vec<_>, _>>()?;
    if r.remaining() != 0 {
        return Err(WireError::invalid(r.position(), "trailing bytes").into());
    }
    Ok(IntFeatureMap {
        channels,
        height,
        width,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bintensor::{channel_pack, BitSequence};
    use proptest::prelude::*;

    fn ones(channels: usize, h: usize, w: usize, r: usize) -> BitFeatureMap {
        BitFeatureMap::from_fn(channels, h, w, r, |_, _, _| true).unwrap()
    }

    #[test]
    fn binarize_boundary_and_nan() {
        let f = FloatFeatureMap::new(1, 1, 4, vec![0.0, -3.5, f32::NAN, 2.0]).unwrap();
        let b = binarize(&f, 8).unwrap();
        let bits: Vec<bool> = (0..4).map(|x| b.get(0, 0, x)).collect();
        assert_eq!(bits, vec![true, false, false, true]);
        let zeros = FloatFeatureMap::new(3, 2, 2, vec![0.0; 12]).unwrap();
        assert_eq!(binarize(&zeros, 2).unwrap(), ones(3, 2, 2, 2));
        let neg_zero = FloatFeatureMap::new(1, 1, 1, vec![-0.0]).unwrap();
        assert!(binarize(&neg_zero, 1).unwrap().get(0, 0, 0));
    }

    #[test]
    fn all_agree_and_all_disagree() {
        let w = BinaryKernel::from_indices(1, 1, &[511]).unwrap();
        let p = channel_pack(&w, 128).unwrap();
        let x = ones(1, 3, 3, 128);
        assert_eq!(
            conv_reference(&w, &x, 1, Padding::Valid).unwrap().data(),
            &[9]
        );
        assert_eq!(conv_packed(&p, &x, 1, Padding::Valid).unwrap().data(), &[9]);
        assert_eq!(
            conv_popcount(&p, &x, 1, Padding::Valid).unwrap().data(),
            &[9]
        );
        let neg = BitFeatureMap::zeros(1, 3, 3, 128).unwrap();
        assert_eq!(
            conv_reference(&w, &neg, 1, Padding::Valid).unwrap().data(),
            &[-9]
        );
        let w0 = channel_pack(&BinaryKernel::from_indices(1, 1, &[0]).unwrap(), 128).unwrap();
        assert_eq!(
            conv_packed(&w0, &x, 1, Padding::Valid).unwrap().data(),
            &[-9]
        );
    }

    #[test]
    fn minus_one_padding_counts_pads() {
        // corner output of an all +1 map sees 4 real taps and 5 pads
        let w = BinaryKernel::from_indices(1, 1, &[511]).unwrap();
        let x = ones(1, 3, 3, 8);
        let r = conv_reference(&w, &x, 1, Padding::MinusOne).unwrap();
        assert_eq!(r.dims(), (1, 3, 3));
        assert_eq!(r.get(0, 0, 0), 4 - 5);
        assert_eq!(r.get(0, 1, 1), 9);
        let p = conv_packed(&channel_pack(&w, 8).unwrap(), &x, 1, Padding::MinusOne).unwrap();
        assert_eq!(p, r);
    }

    #[test]
    fn shape_errors() {
        let w = BinaryKernel::from_indices(1, 2, &[0, 0]).unwrap();
        let x = ones(3, 4, 4, 8);
        assert!(matches!(
            conv_reference(&w, &x, 1, Padding::Valid),
            Err(BconvError::ChannelMismatch { kernel: 2, map: 3 })
        ));
        let small = ones(2, 2, 5, 8);
        assert!(matches!(
            conv_reference(&w, &small, 1, Padding::Valid),
            Err(BconvError::TooSmall { .. })
        ));
        assert!(conv_reference(&w, &small, 1, Padding::MinusOne).is_ok());
        assert!(matches!(
            conv_reference(&w, &small, 0, Padding::MinusOne),
            Err(BconvError::ZeroStride)
        ));
        let p = channel_pack(&w, 32).unwrap();
        assert!(matches!(
            conv_packed(&p, &ones(2, 3, 3, 8), 1, Padding::Valid),
            Err(BconvError::RegisterWidthMismatch {
                weights: 32,
                inputs: 8
            })
        ));
    }

    #[test]
    fn feature_file_roundtrip() {
        let f = FeatureMap::Float(
            FloatFeatureMap::new(2, 1, 2, vec![1.0, -1.0, 0.5, f32::MIN]).unwrap(),
        );
        let bytes = encode_feature_map(&f);
        assert_eq!(&bytes[..4], b"BNF1");
        assert_eq!(&bytes[16..20], &0u32.to_le_bytes());
        assert_eq!(decode_feature_map(&bytes).unwrap(), f);

        let b = BitFeatureMap::from_fn(10, 2, 3, 8, |c, y, x| (c + y + x) % 3 == 0).unwrap();
        let fm = FeatureMap::Bits(b.clone());
        let bytes = encode_feature_map(&fm);
        // 6 pixels x 2 groups x 1 byte
        assert_eq!(bytes.len(), 20 + 12);
        assert_eq!(decode_feature_map(&bytes).unwrap(), fm);
        assert_eq!(fm.to_bits(4).unwrap().repack(8).unwrap(), b);

        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() |= 0x80;
        assert!(matches!(
            decode_feature_map(&bad),
            Err(BconvError::Format(WireError::Invalid { .. }))
        ));
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode_feature_map(&trailing).is_err());
    }

    #[test]
    fn output_file_roundtrip() {
        let w = BinaryKernel::from_indices(2, 1, &[5, 300]).unwrap();
        let o = conv_reference(&w, &ones(1, 5, 4, 8), 2, Padding::Valid).unwrap();
        let bytes = encode_output(&o);
        assert_eq!(&bytes[..4], b"BNO1");
        assert_eq!(decode_output(&bytes).unwrap(), o);
    }

    fn instance() -> impl Strategy<Value = (BinaryKernel, BitFeatureMap, usize, usize, Padding)> {
        (
            prop::sample::select(vec![1usize, 3, 8, 32, 70, 128]),
            1usize..=3,
            3usize..=8,
            3usize..=8,
            prop::sample::select(vec![1usize, 8, 32, 64, 128]),
            1usize..=2,
            any::<bool>(),
            any::<u64>(),
        )
            .prop_map(|(c, oc, h, wd, r, stride, pad, seed)| {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let idx: Vec<u16> = (0..oc * c).map(|_| rng.gen_range(0..512)).collect();
                let k = BinaryKernel::from_indices(oc, c, &idx).unwrap();
                let x = BitFeatureMap::from_fn(c, h, wd, r, |_, _, _| rng.gen()).unwrap();
                let padding = if pad {
                    Padding::MinusOne
                } else {
                    Padding::Valid
                };
                (k, x, r, stride, padding)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn packed_matches_reference((k, x, r, stride, padding) in instance()) {
            let reference = conv_reference(&k, &x, stride, padding).unwrap();
            let packed = conv_packed(&channel_pack(&k, r).unwrap(), &x, stride, padding).unwrap();
            prop_assert_eq!(&packed, &reference);
            let n = 9 * k.in_channels() as i32;
            for &v in reference.data() {
                prop_assert!(v.abs() <= n);
                prop_assert_eq!(v.rem_euclid(2), n.rem_euclid(2));
            }
        }

        #[test]
        fn negating_weights_negates_output((k, x, _r, stride, padding) in instance()) {
            let neg = k.map_sequences(|s| BitSequence::new(511 - s.index()).unwrap());
            let a = conv_reference(&k, &x, stride, padding).unwrap();
            let b = conv_reference(&neg, &x, stride, padding).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert_eq!(*u, -*v);
            }
        }

        #[test]
        fn single_bit_flip_moves_outputs_by_two((k, x, _r, stride, padding) in instance(), ch in any::<prop::sample::Index>(), pos in 0usize..9) {
            let c = ch.index(k.channel_count());
            let mut flipped = k.clone();
            let (o, i) = (c / k.in_channels(), c % k.in_channels());
            flipped.set(o, i, k.get(o, i).flip(pos));
            let a = conv_reference(&k, &x, stride, padding).unwrap();
            let b = conv_reference(&flipped, &x, stride, padding).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!(matches!(u - v, 0 | 2 | -2));
            }
        }
    }
}
