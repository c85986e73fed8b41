//! Two-layer conditional video codec: a base layer (BL) coding tone-mapped
//! LDR frames and an enhancement layer (EL) coding 12-bit PQ HDR frames,
//! conditioned on BL information through the bit-depth enhancement module.
//!
//! Each layer has a motion branch (optical flow estimation + motion
//! compression), a temporal context extractor producing contexts at 1x, 1/2x
//! and 1/4x resolution, and a contextual frame codec with a hyperprior
//! entropy model. Inference uses straight rounding and real range coding;
//! training uses an additive-uniform-noise surrogate and continuous
//! Gaussian rate estimates.

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{Conv2d, ConvTranspose2d, VarBuilder, VarMap};
use serde::{Deserialize, Serialize};

use crate::entropy::{
    range_decode, range_encode, CdfTable, FrameRecord, FrameType, ScalableBitstream, ScaleCdfSet,
};
use crate::error::{Error, Result};
use crate::frame::{Clip, HdrFrame, LdrFrame, LUMA_WEIGHTS};
use crate::nn::{
    add_uniform_noise, conv, gaussian_bits, leaky_relu, to_scale, up_conv, warp_bilinear,
    zero_conv,
};
use crate::prior::{
    deserialize_prior, extract_prior, serialize_prior, Bem, BemConfig, DynamicRangePrior,
    MotionRefiner,
};
use crate::transfer::{dequantize_pq12, pq_forward, quantize_pq12, Pq12Frame};

pub const DEFAULT_INTRA_PERIOD: usize = 32;
/// Spatial alignment required by the 5 downsampling stages (latent at 1/16,
/// hyperprior at 1/32).
pub const PAD_MULTIPLE: usize = 32;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// Feature channels N at full resolution.
    pub feature_ch: usize,
    /// Frame latent channels M at 1/16 resolution.
    pub latent_ch: usize,
    /// Motion latent channels at 1/16 resolution.
    pub motion_latent_ch: usize,
    /// Hyperprior channels at 1/32 resolution.
    pub hyper_ch: usize,
    /// When false the EL runs with zeroed conditioning (ablation).
    pub use_bem: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_ch: 32,
            latent_ch: 192,
            motion_latent_ch: 64,
            hyper_ch: 64,
            use_bem: true,
        }
    }
}

impl ModelConfig {
    fn ch2(&self) -> usize {
        self.feature_ch * 3 / 2
    }
    fn ch3(&self) -> usize {
        self.feature_ch * 2
    }
    fn enc3(&self) -> usize {
        self.feature_ch * 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Bl,
    El,
    Joint,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Bl => "BL",
            Stage::El => "EL",
            Stage::Joint => "JOINT",
        }
    }
    pub fn parse(s: &str) -> Result<Stage> {
        match s.to_ascii_uppercase().as_str() {
            "BL" => Ok(Stage::Bl),
            "EL" => Ok(Stage::El),
            "JOINT" => Ok(Stage::Joint),
            other => Err(Error::validation(format!("unknown stage {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// latent <-> bytes
// ---------------------------------------------------------------------------

/// Quantize a latent against its predicted means: s = round(y - mu),
/// clamped to the coder alphabet.
fn quantize_symbols(y: &Tensor, mu: &Tensor) -> Result<Vec<i32>> {
    let d = (y - mu)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(d.iter()
        .map(|&v| {
            (v.round() as i32)
                .clamp(crate::entropy::SYMBOL_MIN, crate::entropy::SYMBOL_MAX)
        })
        .collect())
}

/// Rebuild the dequantized latent: y_hat = s + mu. Encoder and decoder both
/// call this, so reconstructions are bit-identical.
fn reconstruct_latent(symbols: &[i32], mu: &Tensor) -> Result<Tensor> {
    let vals: Vec<f32> = symbols.iter().map(|&s| s as f32).collect();
    let t = Tensor::from_vec(vals, mu.shape(), mu.device())?;
    Ok((t + mu)?.detach())
}

fn scale_tables(sigma: &Tensor) -> Result<Vec<&'static CdfTable>> {
    let set = ScaleCdfSet::global();
    let sv = sigma.flatten_all()?.to_vec1::<f32>()?;
    Ok(sv
        .iter()
        .map(|&s| set.table(set.index_for(s as f64)))
        .collect())
}

struct CodedLatent {
    bytes: Vec<u8>,
    y_hat: Tensor,
    /// Entropy-model bits (quantized tables, pre-coder).
    est_bits: f64,
}

fn code_latent(y: &Tensor, mu: &Tensor, sigma: &Tensor) -> Result<CodedLatent> {
    let symbols = quantize_symbols(y, mu)?;
    let tables = scale_tables(sigma)?;
    let bytes = range_encode(&symbols, &tables)?;
    let est_bits = symbols
        .iter()
        .zip(tables.iter())
        .map(|(&s, t)| t.bits(s))
        .sum();
    let y_hat = reconstruct_latent(&symbols, mu)?;
    Ok(CodedLatent {
        bytes,
        y_hat,
        est_bits,
    })
}

fn decode_latent(bytes: &[u8], mu: &Tensor, sigma: &Tensor) -> Result<Tensor> {
    let tables = scale_tables(sigma)?;
    let symbols = range_decode(bytes, &tables);
    reconstruct_latent(&symbols, mu)
}

/// Substream layout: u32 hyper length | hyper bytes | latent bytes.
fn pack_substream(z: &[u8], y: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + z.len() + y.len());
    out.extend_from_slice(&(z.len() as u32).to_le_bytes());
    out.extend_from_slice(z);
    out.extend_from_slice(y);
    out
}

fn split_substream(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::format("substream shorter than its length prefix"));
    }
    let zlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if 4 + zlen > bytes.len() {
        return Err(Error::format("substream hyper length exceeds payload"));
    }
    Ok((&bytes[4..4 + zlen], &bytes[4 + zlen..]))
}

// ---------------------------------------------------------------------------
// network submodules
// ---------------------------------------------------------------------------

/// Hyperprior: z = enc(y) coded with per-channel learned Gaussians, decoded
/// back into entropy-parameter features.
struct HyperCoder {
    enc1: Conv2d,
    enc2: Conv2d,
    dec_up: ConvTranspose2d,
    dec_conv: Conv2d,
    z_mean: Tensor,
    z_scale_raw: Tensor,
    z_ch: usize,
}

impl HyperCoder {
    fn new(vb: &VarBuilder, name: &str, latent_ch: usize, z_ch: usize, out_ch: usize) -> Result<Self> {
        let vb = vb.pp(name);
        let enc1 = conv(&vb, "enc1", latent_ch, z_ch, 3, 2)?;
        let enc2 = conv(&vb, "enc2", z_ch, z_ch, 3, 1)?;
        let dec_up = up_conv(&vb, "dec_up", z_ch, out_ch)?;
        let dec_conv = conv(&vb, "dec_conv", out_ch, out_ch, 3, 1)?;
        let z_mean = vb.get_with_hints(z_ch, "z_mean", candle_nn::init::Init::Const(0.0))?;
        let z_scale_raw = vb.get_with_hints(z_ch, "z_scale_raw", candle_nn::init::Init::Const(1.0))?;
        Ok(HyperCoder {
            enc1,
            enc2,
            dec_up,
            dec_conv,
            z_mean,
            z_scale_raw,
            z_ch,
        })
    }

    fn encode(&self, y: &Tensor) -> Result<Tensor> {
        let h = leaky_relu(&self.enc1.forward(y)?)?;
        Ok(self.enc2.forward(&h)?)
    }

    fn decode(&self, z_hat: &Tensor) -> Result<Tensor> {
        let h = leaky_relu(&self.dec_up.forward(z_hat)?)?;
        Ok(leaky_relu(&self.dec_conv.forward(&h)?)?)
    }

    /// Per-channel factorized parameters broadcast to the z shape.
    fn z_params(&self, b: usize, h: usize, w: usize) -> Result<(Tensor, Tensor)> {
        let mu = self
            .z_mean
            .reshape((1, self.z_ch, 1, 1))?
            .broadcast_as((b, self.z_ch, h, w))?
            .contiguous()?;
        let sigma = to_scale(&self.z_scale_raw)?
            .reshape((1, self.z_ch, 1, 1))?
            .broadcast_as((b, self.z_ch, h, w))?
            .contiguous()?;
        Ok((mu, sigma))
    }

    fn code(&self, z: &Tensor) -> Result<CodedLatent> {
        let (b, _, h, w) = z.dims4()?;
        let (mu, sigma) = self.z_params(b, h, w)?;
        code_latent(z, &mu, &sigma)
    }

    fn decode_bytes(&self, bytes: &[u8], b: usize, h: usize, w: usize) -> Result<Tensor> {
        let (mu, sigma) = self.z_params(b, h, w)?;
        decode_latent(bytes, &mu, &sigma)
    }

    /// Training rate of a noisy z under the factorized model.
    fn bits(&self, z_noisy: &Tensor) -> Result<Tensor> {
        let (b, _, h, w) = z_noisy.dims4()?;
        let (mu, sigma) = self.z_params(b, h, w)?;
        Ok(gaussian_bits(z_noisy, &mu, &sigma)?.sum_all()?)
    }
}

/// Two 1x1 convolutions mapping concatenated conditioning features to
/// per-element (mean, scale) of the latent.
struct ParamHead {
    c1: Conv2d,
    c2: Conv2d,
    latent_ch: usize,
}

impl ParamHead {
    fn new(vb: &VarBuilder, name: &str, in_ch: usize, mid: usize, latent_ch: usize) -> Result<Self> {
        let vb = vb.pp(name);
        let c1 = conv(&vb, "c1", in_ch, mid, 1, 1)?;
        let c2 = conv(&vb, "c2", mid, latent_ch * 2, 1, 1)?;
        Ok(ParamHead { c1, c2, latent_ch })
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<(Tensor, Tensor)> {
        let x = if inputs.len() == 1 {
            inputs[0].clone()
        } else {
            Tensor::cat(inputs, 1)?
        };
        let h = leaky_relu(&self.c1.forward(&x)?)?;
        let p = self.c2.forward(&h)?;
        let mu = p.narrow(1, 0, self.latent_ch)?.contiguous()?;
        let sigma = to_scale(&p.narrow(1, self.latent_ch, self.latent_ch)?.contiguous()?)?;
        Ok((mu, sigma))
    }
}

/// 3-level pyramid optical flow estimator, zero-initialized output so the
/// untrained field is exactly zero.
struct FlowNet {
    f1: Conv2d,
    f2: Conv2d,
    h: Conv2d,
    u1: ConvTranspose2d,
    m1: Conv2d,
    u2: ConvTranspose2d,
    m2: Conv2d,
    out: Conv2d,
}

impl FlowNet {
    fn new(vb: &VarBuilder, name: &str) -> Result<Self> {
        let vb = vb.pp(name);
        Ok(FlowNet {
            f1: conv(&vb, "f1", 6, 32, 3, 2)?,
            f2: conv(&vb, "f2", 32, 48, 3, 2)?,
            h: conv(&vb, "h", 48, 48, 3, 1)?,
            u1: up_conv(&vb, "u1", 48, 32)?,
            m1: conv(&vb, "m1", 64, 32, 3, 1)?,
            u2: up_conv(&vb, "u2", 32, 16)?,
            m2: conv(&vb, "m2", 22, 16, 3, 1)?,
            out: zero_conv(&vb, "out", 16, 2, 3)?,
        })
    }

    fn forward(&self, x: &Tensor, reference: &Tensor) -> Result<Tensor> {
        let inp = Tensor::cat(&[x, reference], 1)?;
        let f1 = leaky_relu(&self.f1.forward(&inp)?)?;
        let f2 = leaky_relu(&self.f2.forward(&f1)?)?;
        let h = leaky_relu(&self.h.forward(&f2)?)?;
        let u1 = leaky_relu(&self.u1.forward(&h)?)?;
        let m1 = leaky_relu(&self.m1.forward(&Tensor::cat(&[&u1, &f1], 1)?)?)?;
        let u2 = leaky_relu(&self.u2.forward(&m1)?)?;
        let m2 = leaky_relu(&self.m2.forward(&Tensor::cat(&[&u2, &inp], 1)?)?)?;
        Ok(self.out.forward(&m2)?)
    }
}

/// Motion autoencoder with hyperprior. The EL variant concatenates the
/// refined BL motion as encoder conditioning and decodes a residual on it.
struct MotionCodec {
    e1: Conv2d,
    e2: Conv2d,
    e3: Conv2d,
    e4: Conv2d,
    hyper: HyperCoder,
    head: ParamHead,
    d1: ConvTranspose2d,
    d2: ConvTranspose2d,
    d3: ConvTranspose2d,
    d4: ConvTranspose2d,
    conditioned: bool,
}

impl MotionCodec {
    fn new(vb: &VarBuilder, name: &str, cfg: &ModelConfig, conditioned: bool) -> Result<Self> {
        let vb = vb.pp(name);
        let mv = cfg.motion_latent_ch;
        let in_ch = if conditioned { 4 } else { 2 };
        Ok(MotionCodec {
            e1: conv(&vb, "e1", in_ch, 32, 3, 2)?,
            e2: conv(&vb, "e2", 32, 48, 3, 2)?,
            e3: conv(&vb, "e3", 48, mv, 3, 2)?,
            e4: conv(&vb, "e4", mv, mv, 3, 2)?,
            hyper: HyperCoder::new(&vb, "hyper", mv, 32, 48)?,
            head: ParamHead::new(&vb, "head", 48, 128, mv)?,
            d1: up_conv(&vb, "d1", mv, 48)?,
            d2: up_conv(&vb, "d2", 48, 32)?,
            d3: up_conv(&vb, "d3", 32, 16)?,
            d4: up_conv(&vb, "d4", 16, 2)?,
            conditioned,
        })
    }

    fn encode(&self, v: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
        let inp = match (self.conditioned, cond) {
            (true, Some(c)) => Tensor::cat(&[v, c], 1)?,
            (false, None) => v.clone(),
            _ => return Err(Error::shape("motion conditioning mismatch")),
        };
        let h = leaky_relu(&self.e1.forward(&inp)?)?;
        let h = leaky_relu(&self.e2.forward(&h)?)?;
        let h = leaky_relu(&self.e3.forward(&h)?)?;
        Ok(self.e4.forward(&h)?)
    }

    /// Decode motion latent; conditioned variant adds the refined BL field.
    fn decode(&self, y_hat: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
        let h = leaky_relu(&self.d1.forward(y_hat)?)?;
        let h = leaky_relu(&self.d2.forward(&h)?)?;
        let h = leaky_relu(&self.d3.forward(&h)?)?;
        let v = self.d4.forward(&h)?;
        match (self.conditioned, cond) {
            (true, Some(c)) => Ok((v + c)?),
            (false, None) => Ok(v),
            _ => Err(Error::shape("motion conditioning mismatch")),
        }
    }

    fn params(&self, z_hat: &Tensor) -> Result<(Tensor, Tensor)> {
        let hf = self.hyper.decode(z_hat)?;
        self.head.forward(&[&hf])
    }
}

/// Temporal context extraction: warp the propagated feature by decoded
/// motion, refine with a zero-initialized residual, and downsample to the
/// three context scales. The EL variant fuses the enhanced BL feature.
struct ContextNet {
    refine: Conv2d,
    el_fuse: Option<Conv2d>,
    c2: Conv2d,
    c3: Conv2d,
}

pub struct ContextSet {
    pub c1: Tensor,
    pub c2: Tensor,
    pub c3: Tensor,
}

impl ContextNet {
    fn new(vb: &VarBuilder, name: &str, cfg: &ModelConfig, conditioned: bool) -> Result<Self> {
        let vb = vb.pp(name);
        let n = cfg.feature_ch;
        let el_fuse = if conditioned {
            Some(zero_conv(&vb, "el_fuse", 2 * n, n, 3)?)
        } else {
            None
        };
        Ok(ContextNet {
            refine: zero_conv(&vb, "refine", n, n, 3)?,
            el_fuse,
            c2: conv(&vb, "c2", n, cfg.ch2(), 3, 2)?,
            c3: conv(&vb, "c3", cfg.ch2(), cfg.ch3(), 3, 2)?,
        })
    }

    fn forward(&self, feature: &Tensor, motion: &Tensor, el_feat: Option<&Tensor>) -> Result<ContextSet> {
        let warped = warp_bilinear(feature, motion)?;
        let mut c1 = (&warped + self.refine.forward(&warped)?)?;
        match (&self.el_fuse, el_feat) {
            (Some(fuse), Some(f)) => {
                c1 = (&c1 + fuse.forward(&Tensor::cat(&[&c1, f], 1)?)?)?;
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::shape("EL context requires BL feature")),
            (None, Some(_)) => return Err(Error::shape("BL context takes no conditioning")),
        }
        let c2 = leaky_relu(&self.c2.forward(&c1)?)?;
        let c3 = leaky_relu(&self.c3.forward(&c2)?)?;
        Ok(ContextSet { c1, c2, c3 })
    }
}

/// Conditional inter-frame codec: contextual encoder, hyperprior + temporal
/// entropy model (EL additionally conditioned on the enhanced BL latent),
/// contextual decoder and frame generator producing the reconstruction and
/// the propagated feature.
struct FrameCodec {
    e1: Conv2d,
    e2: Conv2d,
    e3: Conv2d,
    e4: Conv2d,
    hyper: HyperCoder,
    tp1: Conv2d,
    tp2: Conv2d,
    head: ParamHead,
    d1: ConvTranspose2d,
    d2: ConvTranspose2d,
    g3: Conv2d,
    d3: ConvTranspose2d,
    g2: Conv2d,
    d4: ConvTranspose2d,
    g1: Conv2d,
    fuse: Option<Conv2d>,
    recon: Conv2d,
}

impl FrameCodec {
    fn new(vb: &VarBuilder, name: &str, cfg: &ModelConfig, conditioned: bool) -> Result<Self> {
        let vb = vb.pp(name);
        let n = cfg.feature_ch;
        let (ch2, ch3, e3c, m) = (cfg.ch2(), cfg.ch3(), cfg.enc3(), cfg.latent_ch);
        let head_in = e3c + ch3 + if conditioned { m } else { 0 };
        let fuse = if conditioned {
            Some(zero_conv(&vb, "fuse", 2 * n, n, 3)?)
        } else {
            None
        };
        Ok(FrameCodec {
            e1: conv(&vb, "e1", 3 + n, ch2, 3, 2)?,
            e2: conv(&vb, "e2", 2 * ch2, ch3, 3, 2)?,
            e3: conv(&vb, "e3", 2 * ch3, e3c, 3, 2)?,
            e4: conv(&vb, "e4", e3c, m, 3, 2)?,
            hyper: HyperCoder::new(&vb, "hyper", m, cfg.hyper_ch, e3c)?,
            tp1: conv(&vb, "tp1", ch3, ch3, 3, 2)?,
            tp2: conv(&vb, "tp2", ch3, ch3, 3, 2)?,
            head: ParamHead::new(&vb, "head", head_in, 256, m)?,
            d1: up_conv(&vb, "d1", m, e3c)?,
            d2: up_conv(&vb, "d2", e3c, ch3)?,
            g3: conv(&vb, "g3", 2 * ch3, ch3, 3, 1)?,
            d3: up_conv(&vb, "d3", ch3, ch2)?,
            g2: conv(&vb, "g2", 2 * ch2, ch2, 3, 1)?,
            d4: up_conv(&vb, "d4", ch2, n)?,
            g1: conv(&vb, "g1", 2 * n, n, 3, 1)?,
            fuse,
            recon: conv(&vb, "recon", n, 3, 3, 1)?,
        })
    }

    fn encode(&self, x: &Tensor, ctx: &ContextSet) -> Result<Tensor> {
        let h = leaky_relu(&self.e1.forward(&Tensor::cat(&[x, &ctx.c1], 1)?)?)?;
        let h = leaky_relu(&self.e2.forward(&Tensor::cat(&[&h, &ctx.c2], 1)?)?)?;
        let h = leaky_relu(&self.e3.forward(&Tensor::cat(&[&h, &ctx.c3], 1)?)?)?;
        Ok(self.e4.forward(&h)?)
    }

    fn temporal_prior(&self, ctx: &ContextSet) -> Result<Tensor> {
        let h = leaky_relu(&self.tp1.forward(&ctx.c3)?)?;
        Ok(leaky_relu(&self.tp2.forward(&h)?)?)
    }

    fn params(&self, z_hat: &Tensor, ctx: &ContextSet, cond: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let hf = self.hyper.decode(z_hat)?;
        let tp = self.temporal_prior(ctx)?;
        match (self.fuse.is_some(), cond) {
            (true, Some(c)) => self.head.forward(&[&hf, &tp, c]),
            (false, None) => self.head.forward(&[&hf, &tp]),
            _ => Err(Error::shape("frame entropy conditioning mismatch")),
        }
    }

    /// Decode + generate: reconstruction and the propagated feature.
    fn generate(&self, y_hat: &Tensor, ctx: &ContextSet, el_feat: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let h = leaky_relu(&self.d1.forward(y_hat)?)?;
        let h = leaky_relu(&self.d2.forward(&h)?)?;
        let h = leaky_relu(&self.g3.forward(&Tensor::cat(&[&h, &ctx.c3], 1)?)?)?;
        let h = leaky_relu(&self.d3.forward(&h)?)?;
        let h = leaky_relu(&self.g2.forward(&Tensor::cat(&[&h, &ctx.c2], 1)?)?)?;
        let h = leaky_relu(&self.d4.forward(&h)?)?;
        let mut feat = leaky_relu(&self.g1.forward(&Tensor::cat(&[&h, &ctx.c1], 1)?)?)?;
        match (&self.fuse, el_feat) {
            (Some(fuse), Some(f)) => {
                feat = (&feat + fuse.forward(&Tensor::cat(&[&feat, f], 1)?)?)?;
            }
            (None, None) => {}
            _ => return Err(Error::shape("frame generator conditioning mismatch")),
        }
        let recon = self.recon.forward(&feat)?;
        Ok((recon, feat))
    }
}

/// Intra-frame codec: image autoencoder with hyperprior, no temporal
/// context. Initializes the coding state.
struct IntraCodec {
    e1: Conv2d,
    e2: Conv2d,
    e3: Conv2d,
    e4: Conv2d,
    hyper: HyperCoder,
    head: ParamHead,
    u1: ConvTranspose2d,
    u2: ConvTranspose2d,
    u3: ConvTranspose2d,
    u4: ConvTranspose2d,
    fuse: Option<Conv2d>,
    recon: Conv2d,
}

impl IntraCodec {
    fn new(vb: &VarBuilder, name: &str, cfg: &ModelConfig, conditioned: bool) -> Result<Self> {
        let vb = vb.pp(name);
        let n = cfg.feature_ch;
        let (ch2, ch3, e3c, m) = (cfg.ch2(), cfg.ch3(), cfg.enc3(), cfg.latent_ch);
        let head_in = e3c + if conditioned { m } else { 0 };
        let fuse = if conditioned {
            Some(zero_conv(&vb, "fuse", 2 * n, n, 3)?)
        } else {
            None
        };
        Ok(IntraCodec {
            e1: conv(&vb, "e1", 3, ch2, 3, 2)?,
            e2: conv(&vb, "e2", ch2, ch3, 3, 2)?,
            e3: conv(&vb, "e3", ch3, e3c, 3, 2)?,
            e4: conv(&vb, "e4", e3c, m, 3, 2)?,
            hyper: HyperCoder::new(&vb, "hyper", m, cfg.hyper_ch, e3c)?,
            head: ParamHead::new(&vb, "head", head_in, 256, m)?,
            u1: up_conv(&vb, "u1", m, e3c)?,
            u2: up_conv(&vb, "u2", e3c, ch3)?,
            u3: up_conv(&vb, "u3", ch3, ch2)?,
            u4: up_conv(&vb, "u4", ch2, n)?,
            fuse,
            recon: conv(&vb, "recon", n, 3, 3, 1)?,
        })
    }

    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let h = leaky_relu(&self.e1.forward(x)?)?;
        let h = leaky_relu(&self.e2.forward(&h)?)?;
        let h = leaky_relu(&self.e3.forward(&h)?)?;
        Ok(self.e4.forward(&h)?)
    }

    fn params(&self, z_hat: &Tensor, cond: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let hf = self.hyper.decode(z_hat)?;
        match (self.fuse.is_some(), cond) {
            (true, Some(c)) => self.head.forward(&[&hf, c]),
            (false, None) => self.head.forward(&[&hf]),
            _ => Err(Error::shape("intra entropy conditioning mismatch")),
        }
    }

    fn generate(&self, y_hat: &Tensor, el_feat: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let h = leaky_relu(&self.u1.forward(y_hat)?)?;
        let h = leaky_relu(&self.u2.forward(&h)?)?;
        let h = leaky_relu(&self.u3.forward(&h)?)?;
        let mut feat = leaky_relu(&self.u4.forward(&h)?)?;
        match (&self.fuse, el_feat) {
            (Some(fuse), Some(f)) => {
                feat = (&feat + fuse.forward(&Tensor::cat(&[&feat, f], 1)?)?)?;
            }
            (None, None) => {}
            _ => return Err(Error::shape("intra generator conditioning mismatch")),
        }
        let recon = self.recon.forward(&feat)?;
        Ok((recon, feat))
    }
}

/// One coding layer (BL or EL): flow, motion compression, context
/// extraction, conditional frame codec, intra codec.
struct LayerCodec {
    flow: FlowNet,
    motion: MotionCodec,
    context: ContextNet,
    frame: FrameCodec,
    intra: IntraCodec,
}

impl LayerCodec {
    fn new(vb: &VarBuilder, name: &str, cfg: &ModelConfig, conditioned: bool) -> Result<Self> {
        let vb = vb.pp(name);
        Ok(LayerCodec {
            flow: FlowNet::new(&vb, "flow")?,
            motion: MotionCodec::new(&vb, "motion", cfg, conditioned)?,
            context: ContextNet::new(&vb, "context", cfg, conditioned)?,
            frame: FrameCodec::new(&vb, "frame", cfg, conditioned)?,
            intra: IntraCodec::new(&vb, "intra", cfg, conditioned)?,
        })
    }
}

/// Per-layer propagated state: decoded feature and previous reconstruction.
#[derive(Clone)]
pub struct LayerState {
    pub feature: Tensor,
    pub recon: Tensor,
    pub latent: Tensor,
}

pub struct CodingState {
    pub bl: LayerState,
    pub el: Option<LayerState>,
}

/// EL conditioning bundle produced by BEM (or zeros for the ablated model).
struct Conditioning {
    feature: Tensor,
    latent: Tensor,
    motion: Option<Tensor>,
}

pub struct LbsvcModel {
    pub varmap: VarMap,
    pub cfg: ModelConfig,
    bl: LayerCodec,
    el: LayerCodec,
    bem: Bem,
    refiner: MotionRefiner,
    device: Device,
}

impl LbsvcModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let device = Device::Cpu;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let bl = LayerCodec::new(&vb, "bl", &cfg, false)?;
        let el = LayerCodec::new(&vb, "el", &cfg, true)?;
        let bem = Bem::new(
            &vb,
            BemConfig {
                feature_ch: cfg.feature_ch,
                latent_ch: cfg.latent_ch,
                ..Default::default()
            },
        )?;
        let refiner = MotionRefiner::new(&vb, true)?;
        Ok(LbsvcModel {
            varmap,
            cfg,
            bl,
            el,
            bem,
            refiner,
            device,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn save(&self, path: &std::path::Path, stage: &str, lambda: f64, step: usize) -> Result<()> {
        let manifest = crate::nn::manifest_for(
            &self.varmap,
            stage,
            lambda,
            step,
            serde_json::to_value(self.cfg).unwrap(),
        );
        crate::nn::save_checkpoint(&self.varmap, &manifest, path)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, crate::nn::CheckpointManifest)> {
        let mpath = path.with_extension("json");
        let manifest: crate::nn::CheckpointManifest = serde_json::from_str(
            &std::fs::read_to_string(&mpath)
                .map_err(|e| Error::other(format!("missing checkpoint manifest {mpath:?}: {e}")))?,
        )
        .map_err(|e| Error::format(format!("bad checkpoint manifest: {e}")))?;
        let cfg: ModelConfig = serde_json::from_value(manifest.config.clone())
            .map_err(|e| Error::format(format!("bad model config in checkpoint: {e}")))?;
        let mut model = LbsvcModel::new(cfg)?;
        model.varmap.load(path.with_extension("safetensors"))?;
        Ok((model, manifest))
    }

    /// Load weights from another checkpoint into this model (same config).
    pub fn load_weights(&mut self, path: &std::path::Path) -> Result<()> {
        self.varmap.load(path.with_extension("safetensors"))?;
        Ok(())
    }

    fn conditioning(
        &self,
        bl_state: &LayerState,
        prior_e: &DynamicRangePrior,
        prior_b: &DynamicRangePrior,
        bl_motion: Option<&Tensor>,
    ) -> Result<Conditioning> {
        if self.cfg.use_bem {
            let pe = prior_e.to_tensor(DType::F32, &self.device)?;
            let pb = prior_b.to_tensor(DType::F32, &self.device)?;
            let out = self.bem.enhance(&bl_state.feature, &bl_state.latent, &pe, &pb)?;
            let motion = match bl_motion {
                Some(v) => Some(self.refiner.refine(v)?),
                None => None,
            };
            Ok(Conditioning {
                feature: out.feature,
                latent: out.latent,
                motion,
            })
        } else {
            Ok(Conditioning {
                feature: bl_state.feature.zeros_like()?,
                latent: bl_state.latent.zeros_like()?,
                motion: match bl_motion {
                    Some(v) => Some(v.zeros_like()?),
                    None => None,
                },
            })
        }
    }
}

// ---------------------------------------------------------------------------
// inference (real entropy coding)
// ---------------------------------------------------------------------------

struct CodedFrameLayer {
    motion_bytes: Vec<u8>,
    frame_bytes: Vec<u8>,
    state: LayerState,
    motion: Option<Tensor>,
    est_bits: f64,
}

impl LayerCodec {
    fn code_intra(
        &self,
        x: &Tensor,
        cond: Option<&Conditioning>,
    ) -> Result<CodedFrameLayer> {
        let y = self.intra.encode(x)?.detach();
        let z = self.intra.hyper.encode(&y)?.detach();
        let cz = self.intra.hyper.code(&z)?;
        let (mu, sigma) = self.intra.params(&cz.y_hat, cond.map(|c| &c.latent))?;
        let (mu, sigma) = (mu.detach(), sigma.detach());
        let cy = code_latent(&y, &mu, &sigma)?;
        let (recon, feature) = self.intra.generate(&cy.y_hat, cond.map(|c| &c.feature))?;
        Ok(CodedFrameLayer {
            motion_bytes: Vec::new(),
            frame_bytes: pack_substream(&cz.bytes, &cy.bytes),
            state: LayerState {
                feature: feature.detach(),
                recon: recon.detach(),
                latent: cy.y_hat,
            },
            motion: None,
            est_bits: cz.est_bits + cy.est_bits,
        })
    }

    fn decode_intra(
        &self,
        bytes: &[u8],
        dims: (usize, usize, usize),
        cond: Option<&Conditioning>,
    ) -> Result<LayerState> {
        let (b, h, w) = dims;
        let (zb, yb) = split_substream(bytes)?;
        let z_hat = self.intra.hyper.decode_bytes(zb, b, h / 32, w / 32)?;
        let (mu, sigma) = self.intra.params(&z_hat, cond.map(|c| &c.latent))?;
        let (mu, sigma) = (mu.detach(), sigma.detach());
        let y_hat = decode_latent(yb, &mu, &sigma)?;
        let (recon, feature) = self.intra.generate(&y_hat, cond.map(|c| &c.feature))?;
        Ok(LayerState {
            feature: feature.detach(),
            recon: recon.detach(),
            latent: y_hat,
        })
    }

    fn code_inter(
        &self,
        x: &Tensor,
        state: &LayerState,
        cond: Option<&Conditioning>,
    ) -> Result<CodedFrameLayer> {
        let motion_cond = match cond {
            Some(c) => Some(
                c.motion
                    .as_ref()
                    .ok_or_else(|| Error::shape("EL inter frame requires motion conditioning"))?,
            ),
            None => None,
        };
        let v = self.flow.forward(x, &state.recon)?.detach();
        let my = self.motion.encode(&v, motion_cond)?.detach();
        let mz = self.motion.hyper.encode(&my)?.detach();
        let cmz = self.motion.hyper.code(&mz)?;
        let (mmu, msigma) = self.motion.params(&cmz.y_hat)?;
        let (mmu, msigma) = (mmu.detach(), msigma.detach());
        let cmy = code_latent(&my, &mmu, &msigma)?;
        let v_hat = self.motion.decode(&cmy.y_hat, motion_cond)?.detach();

        let ctx = self.context.forward(&state.feature, &v_hat, cond.map(|c| &c.feature))?;
        let y = self.frame.encode(x, &ctx)?.detach();
        let z = self.frame.hyper.encode(&y)?.detach();
        let cz = self.frame.hyper.code(&z)?;
        let (mu, sigma) = self.frame.params(&cz.y_hat, &ctx, cond.map(|c| &c.latent))?;
        let (mu, sigma) = (mu.detach(), sigma.detach());
        let cy = code_latent(&y, &mu, &sigma)?;
        let (recon, feature) = self.frame.generate(&cy.y_hat, &ctx, cond.map(|c| &c.feature))?;
        Ok(CodedFrameLayer {
            motion_bytes: pack_substream(&cmz.bytes, &cmy.bytes),
            frame_bytes: pack_substream(&cz.bytes, &cy.bytes),
            state: LayerState {
                feature: feature.detach(),
                recon: recon.detach(),
                latent: cy.y_hat,
            },
            motion: Some(v_hat),
            est_bits: cmz.est_bits + cmy.est_bits + cz.est_bits + cy.est_bits,
        })
    }

    fn decode_inter(
        &self,
        motion_bytes: &[u8],
        frame_bytes: &[u8],
        state: &LayerState,
        dims: (usize, usize, usize),
        cond: Option<&Conditioning>,
    ) -> Result<(LayerState, Tensor)> {
        let motion_cond = match cond {
            Some(c) => Some(
                c.motion
                    .as_ref()
                    .ok_or_else(|| Error::shape("EL inter frame requires motion conditioning"))?,
            ),
            None => None,
        };
        let (b, h, w) = dims;
        let (mzb, myb) = split_substream(motion_bytes)?;
        let mz_hat = self.motion.hyper.decode_bytes(mzb, b, h / 32, w / 32)?;
        let (mmu, msigma) = self.motion.params(&mz_hat)?;
        let (mmu, msigma) = (mmu.detach(), msigma.detach());
        let my_hat = decode_latent(myb, &mmu, &msigma)?;
        let v_hat = self.motion.decode(&my_hat, motion_cond)?.detach();

        let ctx = self.context.forward(&state.feature, &v_hat, cond.map(|c| &c.feature))?;
        let (zb, yb) = split_substream(frame_bytes)?;
        let z_hat = self.frame.hyper.decode_bytes(zb, b, h / 32, w / 32)?;
        let (mu, sigma) = self.frame.params(&z_hat, &ctx, cond.map(|c| &c.latent))?;
        let (mu, sigma) = (mu.detach(), sigma.detach());
        let y_hat = decode_latent(yb, &mu, &sigma)?;
        let (recon, feature) = self.frame.generate(&y_hat, &ctx, cond.map(|c| &c.feature))?;
        Ok((
            LayerState {
                feature: feature.detach(),
                recon: recon.detach(),
                latent: y_hat,
            },
            v_hat,
        ))
    }
}

// ---------------------------------------------------------------------------
// frame <-> tensor plumbing
// ---------------------------------------------------------------------------

fn pad_to_multiple(x: &Tensor, multiple: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let ph = (multiple - h % multiple) % multiple;
    let pw = (multiple - w % multiple) % multiple;
    let mut out = x.clone();
    if pw > 0 {
        out = out.pad_with_same(3, 0, pw)?;
    }
    if ph > 0 {
        out = out.pad_with_same(2, 0, ph)?;
    }
    Ok(out)
}

fn crop(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    Ok(x.narrow(2, 0, h)?.narrow(3, 0, w)?.contiguous()?)
}

pub fn ldr_to_tensor(f: &LdrFrame, dev: &Device) -> Result<Tensor> {
    let (w, h) = (f.width, f.height);
    let mut data = Vec::with_capacity(3 * w * h);
    for p in &f.planes {
        data.extend(p.iter().map(|&v| v as f32 / 255.0));
    }
    Ok(Tensor::from_vec(data, (1, 3, h, w), dev)?)
}

/// HDR frame -> normalized 12-bit PQ codes in [0,1], the EL input domain.
pub fn hdr_to_pq_tensor(f: &HdrFrame, dev: &Device) -> Result<Tensor> {
    let q = quantize_pq12(f);
    let (w, h) = (q.width, q.height);
    let mut data = Vec::with_capacity(3 * w * h);
    for p in &q.planes {
        data.extend(p.iter().map(|&v| v as f32 / 4095.0));
    }
    Ok(Tensor::from_vec(data, (1, 3, h, w), dev)?)
}

pub fn tensor_to_ldr(t: &Tensor) -> Result<LdrFrame> {
    let (_, _, h, w) = t.dims4()?;
    let v = t.clamp(0.0, 1.0)?.flatten_all()?.to_vec1::<f32>()?;
    let plane = |c: usize| -> Vec<u8> {
        v[c * h * w..(c + 1) * h * w]
            .iter()
            .map(|&x| (x * 255.0).round() as u8)
            .collect()
    };
    LdrFrame::new(w, h, [plane(0), plane(1), plane(2)])
}

pub fn tensor_to_hdr(t: &Tensor) -> Result<HdrFrame> {
    let (_, _, h, w) = t.dims4()?;
    let v = t.clamp(0.0, 1.0)?.flatten_all()?.to_vec1::<f32>()?;
    let plane = |c: usize| -> Vec<u16> {
        v[c * h * w..(c + 1) * h * w]
            .iter()
            .map(|&x| (x * 4095.0).round() as u16)
            .collect()
    };
    let pq = Pq12Frame {
        width: w,
        height: h,
        planes: [plane(0), plane(1), plane(2)],
    };
    Ok(dequantize_pq12(&pq))
}

/// EL-side prior: PQ-normalized luminance of the original HDR frame.
pub fn prior_from_hdr(f: &HdrFrame) -> Result<DynamicRangePrior> {
    let y = crate::frame::luminance(f);
    let vals: Vec<f32> = y.data.iter().map(|&l| pq_forward(l as f64) as f32).collect();
    extract_prior(&vals)
}

/// BL-side prior from the decoded (possibly padded) BL reconstruction.
/// Uses the unpadded region only so encoder and decoder agree for any size.
pub fn prior_from_bl_tensor(t: &Tensor, h: usize, w: usize) -> Result<DynamicRangePrior> {
    let t = crop(&t.clamp(0.0, 1.0)?, h, w)?;
    let v = t.flatten_all()?.to_vec1::<f32>()?;
    let n = h * w;
    let mut luma = Vec::with_capacity(n);
    for i in 0..n {
        luma.push(
            LUMA_WEIGHTS[0] * v[i] + LUMA_WEIGHTS[1] * v[n + i] + LUMA_WEIGHTS[2] * v[2 * n + i],
        );
    }
    extract_prior(&luma)
}

// ---------------------------------------------------------------------------
// sequence coding
// ---------------------------------------------------------------------------

pub struct FrameStats {
    pub frame_type: FrameType,
    /// Measured substream bits including the prior sidecar.
    pub bits: u64,
    /// Entropy-model estimate (quantized tables) including the sidecar.
    pub est_bits: f64,
    pub bpp: f64,
}

pub struct SequenceResult {
    pub stream: ScalableBitstream,
    pub recon_ldr: Vec<LdrFrame>,
    pub recon_hdr: Vec<HdrFrame>,
    /// Raw decoded planes (BL then EL), cropped, for bit-exactness checks.
    pub recon_raw: Vec<(Vec<f32>, Vec<f32>)>,
    pub frame_stats: Vec<FrameStats>,
}

impl SequenceResult {
    pub fn total_est_bits(&self) -> f64 {
        self.frame_stats.iter().map(|f| f.est_bits).sum()
    }
}

pub struct DecodedSequence {
    pub recon_ldr: Vec<LdrFrame>,
    pub recon_hdr: Vec<HdrFrame>,
    pub recon_raw: Vec<(Vec<f32>, Vec<f32>)>,
}

fn raw_planes(bl: &Tensor, el: &Tensor, h: usize, w: usize) -> Result<(Vec<f32>, Vec<f32>)> {
    Ok((
        crop(bl, h, w)?.flatten_all()?.to_vec1::<f32>()?,
        crop(el, h, w)?.flatten_all()?.to_vec1::<f32>()?,
    ))
}

impl LbsvcModel {
    /// Encode a clip in low-delay order with the given intra period,
    /// producing the container stream, both reconstructions, and per-frame
    /// rate statistics.
    pub fn code_sequence(&self, clip: &Clip, intra_period: usize) -> Result<SequenceResult> {
        if clip.frames.is_empty() {
            return Err(Error::validation("empty clip"));
        }
        if intra_period == 0 {
            return Err(Error::validation("intra period must be positive"));
        }
        let (w, h) = (clip.frames[0].1.width, clip.frames[0].1.height);
        if w > u16::MAX as usize || h > u16::MAX as usize || clip.frames.len() > u16::MAX as usize {
            return Err(Error::validation("clip dimensions exceed container limits"));
        }
        let mut frames = Vec::with_capacity(clip.frames.len());
        let mut stats = Vec::with_capacity(clip.frames.len());
        let mut recon_ldr = Vec::new();
        let mut recon_hdr = Vec::new();
        let mut recon_raw = Vec::new();
        let mut state: Option<CodingState> = None;

        for (t, (hdr, ldr)) in clip.frames.iter().enumerate() {
            let x_b = pad_to_multiple(&ldr_to_tensor(ldr, &self.device)?, PAD_MULTIPLE)?;
            let x_e = pad_to_multiple(&hdr_to_pq_tensor(hdr, &self.device)?, PAD_MULTIPLE)?;
            let intra = t % intra_period == 0;

            let prior_e = prior_from_hdr(hdr)?;
            let prior_bytes = serialize_prior(&prior_e)?;
            // the decoder sees the deserialized sidecar; use the same values
            let prior_e = deserialize_prior(&prior_bytes)?;

            let (bl_out, el_out) = if intra {
                let bl = self.bl.code_intra(&x_b, None)?;
                let prior_b = prior_from_bl_tensor(&bl.state.recon, h, w)?;
                let cond = self.conditioning(&bl.state, &prior_e, &prior_b, None)?;
                let el = self.el.code_intra(&x_e, Some(&cond))?;
                (bl, el)
            } else {
                let st = state
                    .as_ref()
                    .ok_or_else(|| Error::validation("inter frame without state"))?;
                let bl = self.bl.code_inter(&x_b, &st.bl, None)?;
                let prior_b = prior_from_bl_tensor(&bl.state.recon, h, w)?;
                let cond =
                    self.conditioning(&bl.state, &prior_e, &prior_b, bl.motion.as_ref())?;
                let el_state = st
                    .el
                    .as_ref()
                    .ok_or_else(|| Error::validation("missing EL state"))?;
                let el = self.el.code_inter(&x_e, el_state, Some(&cond))?;
                (bl, el)
            };

            let record = FrameRecord {
                frame_type: if intra { FrameType::Intra } else { FrameType::Inter },
                bl_motion: bl_out.motion_bytes,
                bl_frame: bl_out.frame_bytes,
                prior: prior_bytes,
                el_motion: el_out.motion_bytes,
                el_frame: el_out.frame_bytes,
            };
            let bits = record.substream_bits();
            let est = bl_out.est_bits + el_out.est_bits + (crate::entropy::PRIOR_BYTES * 8) as f64;
            stats.push(FrameStats {
                frame_type: record.frame_type,
                bits,
                est_bits: est,
                bpp: bits as f64 / (w * h) as f64,
            });
            frames.push(record);

            recon_ldr.push(tensor_to_ldr(&crop(&bl_out.state.recon, h, w)?)?);
            recon_hdr.push(tensor_to_hdr(&crop(&el_out.state.recon, h, w)?)?);
            recon_raw.push(raw_planes(&bl_out.state.recon, &el_out.state.recon, h, w)?);
            state = Some(CodingState {
                bl: bl_out.state,
                el: Some(el_out.state),
            });
        }

        Ok(SequenceResult {
            stream: ScalableBitstream {
                width: w as u16,
                height: h as u16,
                intra_period: intra_period.min(255) as u8,
                frames,
            },
            recon_ldr,
            recon_hdr,
            recon_raw,
            frame_stats: stats,
        })
    }

    /// Decode a container stream back to both layers.
    pub fn decode_sequence(&self, stream: &ScalableBitstream) -> Result<DecodedSequence> {
        let (w, h) = (stream.width as usize, stream.height as usize);
        let ph = (h + PAD_MULTIPLE - 1) / PAD_MULTIPLE * PAD_MULTIPLE;
        let pw = (w + PAD_MULTIPLE - 1) / PAD_MULTIPLE * PAD_MULTIPLE;
        let dims = (1usize, ph, pw);
        let mut recon_ldr = Vec::new();
        let mut recon_hdr = Vec::new();
        let mut recon_raw = Vec::new();
        let mut state: Option<CodingState> = None;

        for record in &stream.frames {
            let prior_e = deserialize_prior(&record.prior)?;
            let (bl_state, el_state) = match record.frame_type {
                FrameType::Intra => {
                    let bl = self.bl.decode_intra(&record.bl_frame, dims, None)?;
                    let prior_b = prior_from_bl_tensor(&bl.recon, h, w)?;
                    let cond = self.conditioning(&bl, &prior_e, &prior_b, None)?;
                    let el = self.el.decode_intra(&record.el_frame, dims, Some(&cond))?;
                    (bl, el)
                }
                FrameType::Inter => {
                    let st = state
                        .as_ref()
                        .ok_or_else(|| Error::format("inter frame before any intra frame"))?;
                    let (bl, v_hat) = self.bl.decode_inter(
                        &record.bl_motion,
                        &record.bl_frame,
                        &st.bl,
                        dims,
                        None,
                    )?;
                    let prior_b = prior_from_bl_tensor(&bl.recon, h, w)?;
                    let cond = self.conditioning(&bl, &prior_e, &prior_b, Some(&v_hat))?;
                    let el_prev = st
                        .el
                        .as_ref()
                        .ok_or_else(|| Error::format("missing EL state"))?;
                    let (el, _) = self.el.decode_inter(
                        &record.el_motion,
                        &record.el_frame,
                        el_prev,
                        dims,
                        Some(&cond),
                    )?;
                    (bl, el)
                }
            };
            recon_ldr.push(tensor_to_ldr(&crop(&bl_state.recon, h, w)?)?);
            recon_hdr.push(tensor_to_hdr(&crop(&el_state.recon, h, w)?)?);
            recon_raw.push(raw_planes(&bl_state.recon, &el_state.recon, h, w)?);
            state = Some(CodingState {
                bl: bl_state,
                el: Some(el_state),
            });
        }

        Ok(DecodedSequence {
            recon_ldr,
            recon_hdr,
            recon_raw,
        })
    }
}

// ---------------------------------------------------------------------------
// training forwards (noise quantization, differentiable rate)
// ---------------------------------------------------------------------------

pub struct TrainFrameOut {
    pub recon: Tensor,
    pub feature: Tensor,
    pub latent: Tensor,
    pub motion: Option<Tensor>,
    /// Total bits of this frame's latents under the continuous model.
    pub bits: Tensor,
    /// Warp of the previous reconstruction by the raw flow (inter only),
    /// used for the photometric motion warm-up.
    pub warped_ref: Option<Tensor>,
}

impl LayerCodec {
    fn train_intra(&self, x: &Tensor, cond: Option<&Conditioning>) -> Result<TrainFrameOut> {
        let y = self.intra.encode(x)?;
        let z = self.intra.hyper.encode(&y)?;
        let z_noisy = add_uniform_noise(&z)?;
        let z_bits = self.intra.hyper.bits(&z_noisy)?;
        let (mu, sigma) = self.intra.params(&z_noisy, cond.map(|c| &c.latent))?;
        let y_noisy = add_uniform_noise(&y)?;
        let y_bits = gaussian_bits(&y_noisy, &mu, &sigma)?.sum_all()?;
        let (recon, feature) = self.intra.generate(&y_noisy, cond.map(|c| &c.feature))?;
        Ok(TrainFrameOut {
            recon,
            feature,
            latent: y_noisy,
            motion: None,
            bits: (z_bits + y_bits)?,
            warped_ref: None,
        })
    }

    fn train_inter(
        &self,
        x: &Tensor,
        prev: (&Tensor, &Tensor),
        cond: Option<&Conditioning>,
    ) -> Result<TrainFrameOut> {
        let (prev_feature, prev_recon) = prev;
        let motion_cond = match cond {
            Some(c) => Some(
                c.motion
                    .as_ref()
                    .ok_or_else(|| Error::shape("EL inter frame requires motion conditioning"))?,
            ),
            None => None,
        };
        let v = self.flow.forward(x, prev_recon)?;
        let warped_ref = warp_bilinear(prev_recon, &v)?;
        let my = self.motion.encode(&v, motion_cond)?;
        let mz = self.motion.hyper.encode(&my)?;
        let mz_noisy = add_uniform_noise(&mz)?;
        let mz_bits = self.motion.hyper.bits(&mz_noisy)?;
        let (mmu, msigma) = self.motion.params(&mz_noisy)?;
        let my_noisy = add_uniform_noise(&my)?;
        let my_bits = gaussian_bits(&my_noisy, &mmu, &msigma)?.sum_all()?;
        let v_hat = self.motion.decode(&my_noisy, motion_cond)?;

        let ctx = self.context.forward(prev_feature, &v_hat, cond.map(|c| &c.feature))?;
        let y = self.frame.encode(x, &ctx)?;
        let z = self.frame.hyper.encode(&y)?;
        let z_noisy = add_uniform_noise(&z)?;
        let z_bits = self.frame.hyper.bits(&z_noisy)?;
        let (mu, sigma) = self.frame.params(&z_noisy, &ctx, cond.map(|c| &c.latent))?;
        let y_noisy = add_uniform_noise(&y)?;
        let y_bits = gaussian_bits(&y_noisy, &mu, &sigma)?.sum_all()?;
        let (recon, feature) = self.frame.generate(&y_noisy, &ctx, cond.map(|c| &c.feature))?;
        Ok(TrainFrameOut {
            recon,
            feature,
            latent: y_noisy,
            motion: Some(v_hat),
            bits: (((mz_bits + my_bits)? + z_bits)? + y_bits)?,
            warped_ref: Some(warped_ref),
        })
    }
}

pub struct TrainForward {
    pub mse_b: Tensor,
    pub bits_b: Tensor,
    pub mse_e: Option<Tensor>,
    pub bits_e: Option<Tensor>,
    /// Mean photometric error of flow-warped references (motion warm-up).
    pub warp_mse: Option<Tensor>,
    /// Pixels per layer across the batch and all frames (for bpp).
    pub pixels: usize,
}

/// Extract per-sample priors from a (B,3,H,W) batch in a [0,1] code domain.
fn batch_priors(x: &Tensor, dev: &Device) -> Result<Tensor> {
    let (b, _, h, w) = x.dims4()?;
    let v = x.clamp(0.0, 1.0)?.flatten_all()?.to_vec1::<f32>()?;
    let n = h * w;
    let mut rows = Vec::with_capacity(b);
    for bi in 0..b {
        let base = bi * 3 * n;
        let mut luma = Vec::with_capacity(n);
        for i in 0..n {
            luma.push(
                LUMA_WEIGHTS[0] * v[base + i]
                    + LUMA_WEIGHTS[1] * v[base + n + i]
                    + LUMA_WEIGHTS[2] * v[base + 2 * n + i],
            );
        }
        rows.push(extract_prior(&luma)?.to_tensor(DType::F32, dev)?);
    }
    Ok(Tensor::cat(&rows, 0)?)
}

impl LbsvcModel {
    /// Recurrent training forward over a short clip. `x_b`/`x_e` hold one
    /// (B,3,H,W) tensor per frame. EL inputs may be empty for the BL stage.
    pub fn forward_train(&self, x_b: &[Tensor], x_e: &[Tensor], stage: Stage) -> Result<TrainForward> {
        if x_b.is_empty() {
            return Err(Error::validation("empty training clip"));
        }
        if stage != Stage::Bl && x_e.len() != x_b.len() {
            return Err(Error::validation("EL frames must pair with BL frames"));
        }
        let (b, _, h, w) = x_b[0].dims4()?;
        let dev = x_b[0].device().clone();
        let mut mse_b: Option<Tensor> = None;
        let mut bits_b: Option<Tensor> = None;
        let mut mse_e: Option<Tensor> = None;
        let mut bits_e: Option<Tensor> = None;
        let mut warp: Option<Tensor> = None;
        let mut bl_prev: Option<(Tensor, Tensor)> = None;
        let mut el_prev: Option<(Tensor, Tensor)> = None;

        for t in 0..x_b.len() {
            let xb = &x_b[t];
            // BL pass; detach its graph entirely during the frozen-BL stage
            let bl_out = match &bl_prev {
                None => self.bl.train_intra(xb, None)?,
                Some((f, r)) => self.bl.train_inter(xb, (f, r), None)?,
            };
            let bl_out = if stage == Stage::El {
                TrainFrameOut {
                    recon: bl_out.recon.detach(),
                    feature: bl_out.feature.detach(),
                    latent: bl_out.latent.detach(),
                    motion: bl_out.motion.as_ref().map(|m| m.detach()),
                    bits: bl_out.bits.detach(),
                    warped_ref: bl_out.warped_ref.as_ref().map(|m| m.detach()),
                }
            } else {
                bl_out
            };
            let d = (xb - &bl_out.recon)?.sqr()?.mean_all()?;
            mse_b = Some(match mse_b {
                None => d,
                Some(acc) => (acc + d)?,
            });
            bits_b = Some(match bits_b {
                None => bl_out.bits.clone(),
                Some(acc) => (acc + &bl_out.bits)?,
            });
            if let Some(wr) = &bl_out.warped_ref {
                let e = (xb - wr)?.sqr()?.mean_all()?;
                warp = Some(match warp {
                    None => e,
                    Some(acc) => (acc + e)?,
                });
            }

            if stage != Stage::Bl {
                let xe = &x_e[t];
                let prior_e = batch_priors(xe, &dev)?;
                let prior_b = batch_priors(&bl_out.recon.detach(), &dev)?;
                let cond = if self.cfg.use_bem {
                    let out = self.bem.enhance(&bl_out.feature, &bl_out.latent, &prior_e, &prior_b)?;
                    Conditioning {
                        feature: out.feature,
                        latent: out.latent,
                        motion: match &bl_out.motion {
                            Some(v) => Some(self.refiner.refine(v)?),
                            None => None,
                        },
                    }
                } else {
                    Conditioning {
                        feature: bl_out.feature.zeros_like()?,
                        latent: bl_out.latent.zeros_like()?,
                        motion: match &bl_out.motion {
                            Some(v) => Some(v.zeros_like()?),
                            None => None,
                        },
                    }
                };
                let el_out = match &el_prev {
                    None => self.el.train_intra(xe, Some(&cond))?,
                    Some((f, r)) => self.el.train_inter(xe, (f, r), Some(&cond))?,
                };
                let d = (xe - &el_out.recon)?.sqr()?.mean_all()?;
                mse_e = Some(match mse_e {
                    None => d,
                    Some(acc) => (acc + d)?,
                });
                bits_e = Some(match bits_e {
                    None => el_out.bits.clone(),
                    Some(acc) => (acc + &el_out.bits)?,
                });
                if let Some(wr) = &el_out.warped_ref {
                    let e = (xe - wr)?.sqr()?.mean_all()?;
                    warp = Some(match warp {
                        None => e,
                        Some(acc) => (acc + e)?,
                    });
                }
                el_prev = Some((el_out.feature, el_out.recon));
            }
            bl_prev = Some((bl_out.feature, bl_out.recon));
        }

        let frames = x_b.len() as f64;
        Ok(TrainForward {
            mse_b: (mse_b.unwrap() / frames)?,
            bits_b: bits_b.unwrap(),
            mse_e: match mse_e {
                Some(t) => Some((t / frames)?),
                None => None,
            },
            bits_e,
            warp_mse: match warp {
                Some(t) => Some((t / frames)?),
                None => None,
            },
            pixels: b * h * w * x_b.len(),
        })
    }
}
