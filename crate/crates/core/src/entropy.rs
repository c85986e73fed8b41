//! Lossless entropy coding: discretized-Gaussian CDF tables, a Martin-style
//! 32-bit range coder with 16-bit frequencies, and the two-layer container
//! format.
//!
//! Container layout (all integers little-endian):
//! `"LBSV" | u8 version=1 | u16 W | u16 H | u16 frame_count | u8 intra_period
//! | u8 layers=2` then per frame `u8 frame_type | u32 len + BL-motion |
//! u32 len + BL-frame | 1024-byte prior | u32 len + EL-motion | u32 len +
//! EL-frame`. Intra frames carry zero-length motion substreams.

use crate::error::{Error, Result};

pub const SYMBOL_MIN: i32 = -64;
pub const SYMBOL_MAX: i32 = 63;
pub const ALPHABET: usize = (SYMBOL_MAX - SYMBOL_MIN + 1) as usize;
pub const CDF_TOTAL: u32 = 1 << 16;

const RANGE_TOP: u32 = 1 << 24;

/// Abramowitz & Stegun 7.1.26 rational approximation, |err| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Probability that a Gaussian(mean, scale) rounds to integer `s` within
/// the clamped alphabet; tail mass is folded into the end buckets.
pub fn discretized_gaussian_pmf(mean: f64, scale: f64, offset: i32) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(ALPHABET);
    for i in 0..ALPHABET as i32 {
        let s = offset + i;
        let hi = if s == offset + ALPHABET as i32 - 1 {
            1.0
        } else {
            normal_cdf((s as f64 + 0.5 - mean) / scale)
        };
        let lo = if s == offset {
            0.0
        } else {
            normal_cdf((s as f64 - 0.5 - mean) / scale)
        };
        pmf.push((hi - lo).max(0.0));
    }
    pmf
}

/// Quantized cumulative distribution over the bounded symbol alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    /// `ALPHABET + 1` entries, strictly increasing, first 0, last 2^16.
    pub cdf: Vec<u32>,
    /// Value of the first symbol in the alphabet.
    pub offset: i32,
}

impl CdfTable {
    /// Quantize a pmf to 16-bit frequencies, each at least 1.
    pub fn from_pmf(pmf: &[f64], offset: i32) -> CdfTable {
        let n = pmf.len();
        let total: f64 = pmf.iter().sum();
        let mut freqs: Vec<u32> = pmf
            .iter()
            .map(|&p| ((p / total) * CDF_TOTAL as f64).round().max(1.0) as u32)
            .collect();
        // repair the sum to exactly 2^16 by nudging the largest buckets
        let mut sum: i64 = freqs.iter().map(|&f| f as i64).sum();
        while sum != CDF_TOTAL as i64 {
            let step = if sum > CDF_TOTAL as i64 { -1i64 } else { 1i64 };
            // pick the largest bucket that can absorb the step
            let idx = (0..n)
                .filter(|&i| step > 0 || freqs[i] > 1)
                .max_by_key(|&i| freqs[i])
                .expect("at least one adjustable bucket");
            freqs[idx] = (freqs[idx] as i64 + step) as u32;
            sum += step;
        }
        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for f in freqs {
            acc += f;
            cdf.push(acc);
        }
        CdfTable { cdf, offset }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cdf.first() != Some(&0) || self.cdf.last() != Some(&CDF_TOTAL) {
            return Err(Error::validation("cdf endpoints must be 0 and 2^16"));
        }
        if self.cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("cdf not strictly increasing"));
        }
        Ok(())
    }

    pub fn contains(&self, symbol: i32) -> bool {
        symbol >= self.offset && symbol < self.offset + (self.cdf.len() - 1) as i32
    }

    fn bounds(&self, symbol: i32) -> (u32, u32) {
        let i = (symbol - self.offset) as usize;
        (self.cdf[i], self.cdf[i + 1] - self.cdf[i])
    }

    /// Symbol whose cumulative span contains `val`.
    fn lookup(&self, val: u32) -> i32 {
        let mut lo = 0usize;
        let mut hi = self.cdf.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] <= val {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.offset + lo as i32
    }

    /// Ideal code length of `symbol` in bits under this quantized table.
    pub fn bits(&self, symbol: i32) -> f64 {
        let (_, freq) = self.bounds(symbol);
        -(freq as f64 / CDF_TOTAL as f64).log2()
    }
}

/// Discretized Gaussian CDF table centered near `mean`.
pub fn build_cdf(mean: f64, scale: f64) -> Result<CdfTable> {
    if !(scale > 0.0) {
        return Err(Error::validation(format!("scale must be positive, got {scale}")));
    }
    let center = mean.round() as i32;
    let offset = center + SYMBOL_MIN;
    let pmf = discretized_gaussian_pmf(mean, scale, offset);
    let t = CdfTable::from_pmf(&pmf, offset);
    t.validate()?;
    Ok(t)
}

/// Shared set of zero-mean CDF tables over log-spaced scale levels.
///
/// Latent symbols are coded as `round(y - mean)`, which is zero-mean
/// Gaussian under the entropy model, so only the scale needs quantizing.
pub struct ScaleCdfSet {
    pub scales: Vec<f64>,
    pub tables: Vec<CdfTable>,
}

pub const SCALE_LEVELS: usize = 128;
pub const SCALE_MIN: f64 = 0.03;
pub const SCALE_MAX: f64 = 256.0;

impl ScaleCdfSet {
    fn build() -> ScaleCdfSet {
        let log_min = SCALE_MIN.ln();
        let log_max = SCALE_MAX.ln();
        let mut scales = Vec::with_capacity(SCALE_LEVELS);
        let mut tables = Vec::with_capacity(SCALE_LEVELS);
        for i in 0..SCALE_LEVELS {
            let s = (log_min + (log_max - log_min) * i as f64 / (SCALE_LEVELS - 1) as f64).exp();
            scales.push(s);
            tables.push(build_cdf(0.0, s).expect("valid scale"));
        }
        ScaleCdfSet { scales, tables }
    }

    pub fn global() -> &'static ScaleCdfSet {
        use std::sync::OnceLock;
        static SET: OnceLock<ScaleCdfSet> = OnceLock::new();
        SET.get_or_init(ScaleCdfSet::build)
    }

    /// Smallest level index whose scale is >= `scale` (rounded up so the
    /// coded distribution is never narrower than the model's).
    pub fn index_for(&self, scale: f64) -> usize {
        let s = scale.clamp(SCALE_MIN, SCALE_MAX);
        match self
            .scales
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.min(SCALE_LEVELS - 1),
        }
    }

    pub fn table(&self, idx: usize) -> &CdfTable {
        &self.tables[idx]
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn encode(&mut self, table: &CdfTable, symbol: i32) -> Result<()> {
        if !table.contains(symbol) {
            return Err(Error::validation(format!(
                "symbol {symbol} outside alphabet [{}, {}]",
                table.offset,
                table.offset + (table.cdf.len() - 2) as i32
            )));
        }
        let (cum, freq) = table.bounds(symbol);
        let r = self.range >> 16;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < RANGE_TOP {
            self.shift_low();
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            input,
            pos: 1, // first byte is the encoder's initial cache
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    pub fn decode(&mut self, table: &CdfTable) -> i32 {
        let r = self.range >> 16;
        let val = (self.code / r).min(CDF_TOTAL - 1);
        let symbol = table.lookup(val);
        let (cum, freq) = table.bounds(symbol);
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < RANGE_TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
        symbol
    }
}

/// Encode one symbol per table.
pub fn range_encode(symbols: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    assert_eq!(symbols.len(), tables.len());
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables.iter()) {
        enc.encode(t, s)?;
    }
    Ok(enc.finish())
}

/// Decode `tables.len()` symbols.
pub fn range_decode(bytes: &[u8], tables: &[&CdfTable]) -> Vec<i32> {
    let mut dec = RangeDecoder::new(bytes);
    tables.iter().map(|t| dec.decode(t)).collect()
}

pub const MAGIC: [u8; 4] = *b"LBSV";
pub const VERSION: u8 = 1;
pub const PRIOR_BYTES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    Intra = 0,
    Inter = 1,
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_type: FrameType,
    pub bl_motion: Vec<u8>,
    pub bl_frame: Vec<u8>,
    pub prior: Vec<u8>,
    pub el_motion: Vec<u8>,
    pub el_frame: Vec<u8>,
}

impl FrameRecord {
    /// Bits counted toward bpp: the four coded substreams plus the prior
    /// sidecar. Length prefixes and the container header are excluded.
    pub fn substream_bits(&self) -> u64 {
        8 * (self.bl_motion.len() + self.bl_frame.len() + self.prior.len()
            + self.el_motion.len()
            + self.el_frame.len()) as u64
    }
}

#[derive(Debug, Clone)]
pub struct ScalableBitstream {
    pub width: u16,
    pub height: u16,
    pub intra_period: u8,
    pub frames: Vec<FrameRecord>,
}

impl ScalableBitstream {
    pub fn total_substream_bits(&self) -> u64 {
        self.frames.iter().map(|f| f.substream_bits()).sum()
    }

    /// Measured bits-per-pixel over both layers plus the prior sidecar.
    pub fn bpp(&self) -> f64 {
        self.total_substream_bits() as f64
            / (self.frames.len() as f64 * self.width as f64 * self.height as f64)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(format!(
                "truncated container: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn pack_container(stream: &ScalableBitstream) -> Result<Vec<u8>> {
    if stream.frames.len() > u16::MAX as usize {
        return Err(Error::validation("too many frames"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.extend_from_slice(&stream.height.to_le_bytes());
    out.extend_from_slice(&(stream.frames.len() as u16).to_le_bytes());
    out.push(stream.intra_period);
    out.push(2); // layers
    for f in &stream.frames {
        if f.prior.len() != PRIOR_BYTES {
            return Err(Error::validation(format!(
                "prior sidecar must be {PRIOR_BYTES} bytes, got {}",
                f.prior.len()
            )));
        }
        if f.frame_type == FrameType::Intra && (!f.bl_motion.is_empty() || !f.el_motion.is_empty())
        {
            return Err(Error::validation("intra frames carry no motion substreams"));
        }
        out.push(f.frame_type as u8);
        for sub in [&f.bl_motion, &f.bl_frame] {
            out.extend_from_slice(&(sub.len() as u32).to_le_bytes());
            out.extend_from_slice(sub);
        }
        out.extend_from_slice(&f.prior);
        for sub in [&f.el_motion, &f.el_frame] {
            out.extend_from_slice(&(sub.len() as u32).to_le_bytes());
            out.extend_from_slice(sub);
        }
    }
    Ok(out)
}

pub fn unpack_container(data: &[u8]) -> Result<ScalableBitstream> {
    let mut c = Cursor { data, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}")));
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let width = c.u16()?;
    let height = c.u16()?;
    let frame_count = c.u16()?;
    let intra_period = c.u8()?;
    let layers = c.u8()?;
    if layers != 2 {
        return Err(Error::format(format!("expected 2 layers, got {layers}")));
    }
    let mut frames = Vec::with_capacity(frame_count as usize);
    for _ in 0..frame_count {
        let ft = match c.u8()? {
            0 => FrameType::Intra,
            1 => FrameType::Inter,
            t => return Err(Error::format(format!("bad frame type {t}"))),
        };
        let sub = |c: &mut Cursor| -> Result<Vec<u8>> {
            let len = c.u32()? as usize;
            Ok(c.take(len)?.to_vec())
        };
        let bl_motion = sub(&mut c)?;
        let bl_frame = sub(&mut c)?;
        let prior = c.take(PRIOR_BYTES)?.to_vec();
        let el_motion = sub(&mut c)?;
        let el_frame = sub(&mut c)?;
        frames.push(FrameRecord {
            frame_type: ft,
            bl_motion,
            bl_frame,
            prior,
            el_motion,
            el_frame,
        });
    }
    if c.pos != data.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after last frame",
            data.len() - c.pos
        )));
    }
    Ok(ScalableBitstream {
        width,
        height,
        intra_period,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_symmetric_zero_mean() {
        let t = build_cdf(0.0, 2.0).unwrap();
        // symmetry around 0: P(s < 0) = P(s > 0), i.e. cdf below symbol 0
        // mirrors the complement of the cdf above it, within quantization
        let i = (0 - t.offset) as usize;
        let below = t.cdf[i] as i64;
        let above = CDF_TOTAL as i64 - t.cdf[i + 1] as i64;
        assert!((below - above).abs() <= 128, "below={below} above={above}");
    }

    #[test]
    fn cdf_strictly_increasing_across_scales() {
        for scale in [0.01, 0.05, 0.3, 1.0, 7.5, 40.0, 300.0] {
            let t = build_cdf(0.0, scale).unwrap();
            t.validate().unwrap();
        }
        assert!(build_cdf(0.0, 0.0).is_err());
        assert!(build_cdf(0.0, -1.0).is_err());
    }

    #[test]
    fn cdf_kl_from_exact_below_1e3_bits() {
        for scale in [0.5, 1.0, 3.0, 10.0] {
            let t = build_cdf(0.0, scale).unwrap();
            let pmf = discretized_gaussian_pmf(0.0, scale, t.offset);
            let total: f64 = pmf.iter().sum();
            let mut kl = 0.0;
            let mut entropy = 0.0;
            for (i, &p) in pmf.iter().enumerate() {
                let p = p / total;
                if p > 0.0 {
                    let q = (t.cdf[i + 1] - t.cdf[i]) as f64 / CDF_TOTAL as f64;
                    kl += p * (p / q).log2();
                    entropy -= p * p.log2();
                }
            }
            // quantized tables must cost < 1% of the source entropy in
            // excess bits (half the end-to-end 2% coded-length budget)
            assert!(kl < 0.01 * entropy, "scale={scale} kl={kl} entropy={entropy}");
        }
    }

    #[test]
    fn empty_stream_round_trips_small() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert!(bytes.len() <= 8);
        let back = range_decode(&bytes, &[]);
        assert!(back.is_empty());
    }

    #[test]
    fn coded_length_near_shannon_entropy() {
        // 1e5 iid symbols from a known discretized Gaussian
        let scale = 2.7;
        let table = build_cdf(0.0, scale).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut symbols = Vec::with_capacity(n);
        for _ in 0..n {
            // sample via inverse cdf on the quantized table itself
            let u = rng.gen_range(0..CDF_TOTAL);
            symbols.push(table.lookup(u));
        }
        let tables: Vec<&CdfTable> = symbols.iter().map(|_| &table).collect();
        let bytes = range_encode(&symbols, &tables).unwrap();
        // entropy computed from the table the symbols were drawn from
        let entropy_bits: f64 = {
            let mut h = 0.0;
            for i in 0..ALPHABET {
                let p = (table.cdf[i + 1] - table.cdf[i]) as f64 / CDF_TOTAL as f64;
                h -= p * p.log2();
            }
            h * n as f64
        };
        let coded_bits = bytes.len() as f64 * 8.0;
        assert!(
            coded_bits < entropy_bits * 1.02,
            "coded={coded_bits} entropy={entropy_bits}"
        );
        assert!(coded_bits > entropy_bits * 0.98);
        let back = range_decode(&bytes, &tables);
        assert_eq!(back, symbols);
    }

    #[test]
    fn fuzz_round_trip_random_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..200 {
            let n = rng.gen_range(0..400);
            let mut tables = Vec::with_capacity(n);
            let mut symbols = Vec::with_capacity(n);
            for _ in 0..n {
                let scale = 10f64.powf(rng.gen_range(-2.0..2.0));
                let mean = rng.gen_range(-20.0..20.0);
                let t = build_cdf(mean, scale).unwrap();
                let u = rng.gen_range(0..CDF_TOTAL);
                symbols.push(t.lookup(u));
                tables.push(t);
            }
            let refs: Vec<&CdfTable> = tables.iter().collect();
            let bytes = range_encode(&symbols, &refs).unwrap();
            let back = range_decode(&bytes, &refs);
            assert_eq!(back, symbols, "case {case}");
        }
    }

    #[test]
    fn out_of_alphabet_symbol_rejected_at_encode() {
        let t = build_cdf(0.0, 1.0).unwrap();
        let mut enc = RangeEncoder::new();
        assert!(enc.encode(&t, 1000).is_err());
    }

    #[test]
    fn actual_size_bounded_by_table_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut tables = Vec::new();
        let mut symbols = Vec::new();
        let mut estimate_bits = 0.0;
        for _ in 0..5000 {
            let t = build_cdf(0.0, 10f64.powf(rng.gen_range(-1.0..1.5))).unwrap();
            let u = rng.gen_range(0..CDF_TOTAL);
            let s = t.lookup(u);
            estimate_bits += t.bits(s);
            symbols.push(s);
            tables.push(t);
        }
        let refs: Vec<&CdfTable> = tables.iter().collect();
        let bytes = range_encode(&symbols, &refs).unwrap();
        let coded = bytes.len() as f64 * 8.0;
        assert!(coded >= estimate_bits - 8.0);
        assert!(coded <= estimate_bits * 1.05 + 256.0);
    }

    #[test]
    fn scale_set_rounds_up() {
        let set = ScaleCdfSet::global();
        for s in [0.01, 0.2, 1.0, 5.0, 100.0, 1000.0] {
            let idx = set.index_for(s);
            assert!(set.scales[idx] >= s.clamp(SCALE_MIN, SCALE_MAX) - 1e-12);
            if idx > 0 {
                assert!(set.scales[idx - 1] < s + 1e-12 || s < SCALE_MIN);
            }
        }
    }

    fn sample_stream() -> ScalableBitstream {
        ScalableBitstream {
            width: 64,
            height: 32,
            intra_period: 32,
            frames: vec![
                FrameRecord {
                    frame_type: FrameType::Intra,
                    bl_motion: vec![],
                    bl_frame: vec![1, 2, 3],
                    prior: vec![7u8; PRIOR_BYTES],
                    el_motion: vec![],
                    el_frame: vec![9, 9],
                },
                FrameRecord {
                    frame_type: FrameType::Inter,
                    bl_motion: vec![5; 10],
                    bl_frame: vec![6; 20],
                    prior: vec![8u8; PRIOR_BYTES],
                    el_motion: vec![4; 7],
                    el_frame: vec![3; 30],
                },
            ],
        }
    }

    #[test]
    fn container_round_trip_identity() {
        let s = sample_stream();
        let bytes = pack_container(&s).unwrap();
        let back = unpack_container(&bytes).unwrap();
        assert_eq!(back.width, 64);
        assert_eq!(back.height, 32);
        assert_eq!(back.intra_period, 32);
        assert_eq!(back.frames.len(), 2);
        assert_eq!(back.frames[1].bl_frame, vec![6; 20]);
        assert_eq!(back.frames[0].frame_type, FrameType::Intra);
        // repack is byte-identical
        assert_eq!(pack_container(&back).unwrap(), bytes);
    }

    #[test]
    fn container_bpp_accounting() {
        let s = sample_stream();
        let expect = (3 + PRIOR_BYTES + 2 + 10 + 20 + PRIOR_BYTES + 7 + 30) as f64 * 8.0
            / (2.0 * 64.0 * 32.0);
        assert!((s.bpp() - expect).abs() < 1e-12);
    }

    #[test]
    fn container_corruption_detected() {
        let s = sample_stream();
        let mut bytes = pack_container(&s).unwrap();
        bytes[0] ^= 0xFF;
        assert!(unpack_container(&bytes).unwrap_err().to_string().contains("magic"));

        let mut bytes = pack_container(&s).unwrap();
        bytes[4] = 99; // version
        assert!(unpack_container(&bytes)
            .unwrap_err()
            .to_string()
            .contains("version"));

        let bytes = pack_container(&s).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 13] {
            assert!(unpack_container(&bytes[..cut]).is_err());
        }
        // trailing garbage also rejected
        let mut bytes = pack_container(&s).unwrap();
        bytes.push(0);
        assert!(unpack_container(&bytes).is_err());
    }
}
