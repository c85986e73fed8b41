//! Dynamic-range prior and the bit-depth enhancement module (BEM).
//!
//! The prior is a soft luminance histogram: k = 128 (center, width) pairs
//! defining Gaussian threshold functions t_j(x) = exp(-(x-c_j)^2 / sigma_j^2).
//! It travels as a 1024-byte sidecar (256 float-32 values). BEM conditions
//! base-layer code information on the HDR prior so the enhancement layer
//! can predict high-bit-depth content from the compressed base layer.

use candle_core::{DType, Module, Tensor};
use candle_nn::VarBuilder;

use crate::error::{Error, Result};
use crate::nn::{dw_conv, zero_conv};

pub const PRIOR_BINS: usize = 128;
pub const PRIOR_PAYLOAD_BYTES: usize = PRIOR_BINS * 2 * 4;

/// k = 128 (center, width) pairs in PQ-normalized luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRangePrior {
    pub centers: Vec<f32>,
    pub widths: Vec<f32>,
}

impl DynamicRangePrior {
    pub fn validate(&self) -> Result<()> {
        if self.centers.len() != PRIOR_BINS || self.widths.len() != PRIOR_BINS {
            return Err(Error::validation(format!(
                "prior must have {PRIOR_BINS} bins, got {}/{}",
                self.centers.len(),
                self.widths.len()
            )));
        }
        if self.widths.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::validation("prior widths must be positive"));
        }
        if self.centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("prior centers must be strictly increasing"));
        }
        Ok(())
    }

    /// Uniform fallback prior over [0, 1], used for degenerate content.
    pub fn uniform() -> Self {
        let k = PRIOR_BINS;
        let sigma = 1.0 / k as f32;
        let centers = (0..k)
            .map(|j| j as f32 / (k - 1) as f32)
            .collect();
        DynamicRangePrior {
            centers,
            widths: vec![sigma; k],
        }
    }

    /// (B=1, 256) tensor: centers then widths.
    pub fn to_tensor(&self, dtype: DType, dev: &candle_core::Device) -> Result<Tensor> {
        let mut v: Vec<f32> = Vec::with_capacity(PRIOR_BINS * 2);
        v.extend_from_slice(&self.centers);
        v.extend_from_slice(&self.widths);
        Ok(Tensor::from_vec(v, (1, PRIOR_BINS * 2), dev)?.to_dtype(dtype)?)
    }
}

/// Eq-style soft bin membership: exp(-(x - c)^2 / sigma^2).
pub fn soft_bin(x: f64, center: f64, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::validation(format!("width must be positive, got {width}")));
    }
    let d = (x - center) / width;
    Ok((-d * d).exp())
}

/// Analytic partial derivatives (d/dx, d/dc, d/dsigma) of `soft_bin`.
pub fn soft_bin_grad(x: f64, center: f64, width: f64) -> Result<(f64, f64, f64)> {
    let t = soft_bin(x, center, width)?;
    let d = x - center;
    let s2 = width * width;
    let dx = t * (-2.0 * d / s2);
    let dc = t * (2.0 * d / s2);
    let ds = t * (2.0 * d * d / (s2 * width));
    Ok((dx, dc, ds))
}

fn quantile(sorted: &[f32], q: f64) -> f32 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Extract the dynamic-range prior from a PQ-normalized luminance plane:
/// centers uniformly spaced between the 0.1 and 99.9 percentiles, widths
/// equal to the center spacing. Degenerate (constant) content falls back
/// to the uniform prior.
pub fn extract_prior(values: &[f32]) -> Result<DynamicRangePrior> {
    if values.is_empty() {
        return Err(Error::validation("empty luminance plane"));
    }
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = quantile(&sorted, 0.001) as f64;
    let hi = quantile(&sorted, 0.999) as f64;
    let spacing = (hi - lo) / (PRIOR_BINS - 1) as f64;
    if spacing <= f32::EPSILON as f64 {
        return Ok(DynamicRangePrior::uniform());
    }
    let centers: Vec<f32> = (0..PRIOR_BINS)
        .map(|j| (lo + spacing * j as f64) as f32)
        .collect();
    // f32 rounding may merge adjacent centers for very narrow ranges
    if centers.windows(2).any(|w| w[1] <= w[0]) {
        return Ok(DynamicRangePrior::uniform());
    }
    let prior = DynamicRangePrior {
        centers,
        widths: vec![spacing as f32; PRIOR_BINS],
    };
    prior.validate()?;
    Ok(prior)
}

/// Normalized soft histogram: h_j = sum_pixels t_j(x) / N.
pub fn soft_histogram(values: &[f32], prior: &DynamicRangePrior) -> Result<Vec<f64>> {
    prior.validate()?;
    let n = values.len() as f64;
    let mut hist = vec![0f64; PRIOR_BINS];
    for &v in values {
        for j in 0..PRIOR_BINS {
            hist[j] += soft_bin(v as f64, prior.centers[j] as f64, prior.widths[j] as f64)?;
        }
    }
    for h in hist.iter_mut() {
        *h /= n;
    }
    Ok(hist)
}

/// 1024-byte sidecar: 128 centers then 128 widths, IEEE-754 f32 LE.
pub fn serialize_prior(prior: &DynamicRangePrior) -> Result<Vec<u8>> {
    prior.validate()?;
    let mut out = Vec::with_capacity(PRIOR_PAYLOAD_BYTES);
    for v in prior.centers.iter().chain(prior.widths.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn deserialize_prior(bytes: &[u8]) -> Result<DynamicRangePrior> {
    if bytes.len() != PRIOR_PAYLOAD_BYTES {
        return Err(Error::format(format!(
            "prior payload must be {PRIOR_PAYLOAD_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    let read = |i: usize| f32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
    let centers: Vec<f32> = (0..PRIOR_BINS).map(read).collect();
    let widths: Vec<f32> = (PRIOR_BINS..2 * PRIOR_BINS).map(read).collect();
    let prior = DynamicRangePrior { centers, widths };
    prior.validate().map_err(|e| {
        Error::format(format!("corrupt prior payload: {e}"))
    })?;
    Ok(prior)
}

/// Soft-bin membership maps of a (B,1,H,W) plane under a (B,256) prior
/// tensor. Output (B,128,H,W), differentiable in plane and prior.
pub fn membership_maps(plane: &Tensor, prior: &Tensor) -> Result<Tensor> {
    let (b, _, h, w) = plane.dims4()?;
    let centers = prior
        .narrow(1, 0, PRIOR_BINS)?
        .reshape((b, PRIOR_BINS, 1, 1))?;
    let widths = prior
        .narrow(1, PRIOR_BINS, PRIOR_BINS)?
        .reshape((b, PRIOR_BINS, 1, 1))?;
    let x = plane.broadcast_as((b, PRIOR_BINS, h, w))?;
    let d = (x.broadcast_sub(&centers))?.broadcast_div(&widths)?;
    Ok(d.sqr()?.neg()?.exp()?)
}

#[derive(Debug, Clone, Copy)]
pub struct BemConfig {
    pub feature_ch: usize,
    pub latent_ch: usize,
    pub embed_dim: usize,
    pub member_ch: usize,
    /// Zero-init the fusion layers so the module is an exact identity
    /// before training. Tests disable this to probe gradients.
    pub identity_init: bool,
}

impl Default for BemConfig {
    fn default() -> Self {
        BemConfig {
            feature_ch: 32,
            latent_ch: 192,
            embed_dim: 64,
            member_ch: 16,
            identity_init: true,
        }
    }
}

pub struct BemOutput {
    pub feature: Tensor,
    pub latent: Tensor,
}

/// Bit-depth enhancement: aggregates the HDR prior and the BL prior into a
/// conditioning vector, modulates soft-bin membership maps of the BL
/// feature, and adds gated residuals onto the BL feature and latent.
/// The residuals vanish when the two priors coincide and at initialization.
pub struct Bem {
    embed1: candle_nn::Linear,
    embed2: candle_nn::Linear,
    affine: candle_nn::Linear,
    gate_feat: candle_nn::Linear,
    gate_lat: candle_nn::Linear,
    member_proj: candle_nn::Conv2d,
    feat_fuse: candle_nn::Conv2d,
    lat_fuse: candle_nn::Conv2d,
    cfg: BemConfig,
}

fn linear_no_bias(vb: &VarBuilder, name: &str, cin: usize, cout: usize) -> Result<candle_nn::Linear> {
    Ok(candle_nn::linear_no_bias(cin, cout, vb.pp(name))?)
}

impl Bem {
    pub fn new(vb: &VarBuilder, cfg: BemConfig) -> Result<Self> {
        let vb = vb.pp("bem");
        let embed1 = candle_nn::linear(PRIOR_BINS * 2, 128, vb.pp("embed1"))?;
        let embed2 = candle_nn::linear(128, cfg.embed_dim, vb.pp("embed2"))?;
        let affine = candle_nn::linear(cfg.embed_dim, PRIOR_BINS * 2, vb.pp("affine"))?;
        // no bias: gates vanish when the priors coincide
        let gate_feat = linear_no_bias(&vb, "gate_feat", cfg.embed_dim, cfg.feature_ch)?;
        let gate_lat = linear_no_bias(&vb, "gate_lat", cfg.embed_dim, cfg.latent_ch)?;
        let member_proj = crate::nn::conv(&vb, "member_proj", PRIOR_BINS, cfg.member_ch, 1, 1)?;
        let (feat_fuse, lat_fuse) = if cfg.identity_init {
            (
                zero_conv(&vb, "feat_fuse", cfg.feature_ch + cfg.member_ch, cfg.feature_ch, 3)?,
                zero_conv(
                    &vb,
                    "lat_fuse",
                    cfg.latent_ch + cfg.embed_dim,
                    cfg.latent_ch,
                    3,
                )?,
            )
        } else {
            (
                crate::nn::conv(&vb, "feat_fuse", cfg.feature_ch + cfg.member_ch, cfg.feature_ch, 3, 1)?,
                crate::nn::conv(&vb, "lat_fuse", cfg.latent_ch + cfg.embed_dim, cfg.latent_ch, 3, 1)?,
            )
        };
        Ok(Bem {
            embed1,
            embed2,
            affine,
            gate_feat,
            gate_lat,
            member_proj,
            feat_fuse,
            lat_fuse,
            cfg,
        })
    }

    fn embed(&self, prior: &Tensor) -> Result<Tensor> {
        let h = self.embed1.forward(prior)?.relu()?;
        Ok(self.embed2.forward(&h)?)
    }

    /// Enhance BL feature and latent toward EL statistics.
    pub fn enhance(
        &self,
        bl_feature: &Tensor,
        bl_latent: &Tensor,
        prior_e: &Tensor,
        prior_b: &Tensor,
    ) -> Result<BemOutput> {
        let (b, cf, _h, _w) = bl_feature.dims4()?;
        let (bl, cl, hl, wl) = bl_latent.dims4()?;
        if cf != self.cfg.feature_ch || cl != self.cfg.latent_ch || b != bl {
            return Err(Error::shape(format!(
                "bem inputs: feature {cf}ch latent {cl}ch batch {b}/{bl}"
            )));
        }
        let e_e = self.embed(prior_e)?;
        let e_b = self.embed(prior_b)?;
        let u = (&e_e - &e_b)?; // (B, embed_dim); zero when priors match

        // soft-bin membership of the feature's channel mean under prior_b
        let mean = bl_feature.mean_keepdim(1)?;
        let t = membership_maps(&mean, prior_b)?;
        // per-bin affine retargeting driven by the prior difference
        let coefs = self.affine.forward(&u)?;
        let gamma = (coefs.narrow(1, 0, PRIOR_BINS)? + 1.0)?.reshape((b, PRIOR_BINS, 1, 1))?;
        let beta = coefs
            .narrow(1, PRIOR_BINS, PRIOR_BINS)?
            .reshape((b, PRIOR_BINS, 1, 1))?;
        let t_mod = t.broadcast_mul(&gamma)?.broadcast_add(&beta)?;
        let members = self.member_proj.forward(&t_mod)?.relu()?;

        let g_f = self
            .gate_feat
            .forward(&u)?
            .tanh()?
            .reshape((b, cf, 1, 1))?;
        let feat_in = Tensor::cat(&[bl_feature, &members], 1)?;
        let feat_res = self.feat_fuse.forward(&feat_in)?.broadcast_mul(&g_f)?;
        let feature = (bl_feature + feat_res)?;

        let g_l = self
            .gate_lat
            .forward(&u)?
            .tanh()?
            .reshape((b, cl, 1, 1))?;
        let u_map = u
            .reshape((b, self.cfg.embed_dim, 1, 1))?
            .broadcast_as((b, self.cfg.embed_dim, hl, wl))?;
        let lat_in = Tensor::cat(&[bl_latent, &u_map.contiguous()?], 1)?;
        let lat_res = self.lat_fuse.forward(&lat_in)?.broadcast_mul(&g_l)?;
        let latent = (bl_latent + lat_res)?;

        Ok(BemOutput { feature, latent })
    }
}

/// Depthwise-convolution refinement of decoded BL motion, identity at init.
pub struct MotionRefiner {
    dw1: candle_nn::Conv2d,
    pw1: candle_nn::Conv2d,
    dw2: candle_nn::Conv2d,
    out: candle_nn::Conv2d,
}

impl MotionRefiner {
    pub fn new(vb: &VarBuilder, identity_init: bool) -> Result<Self> {
        let vb = vb.pp("motion_refiner");
        let dw1 = dw_conv(&vb, "dw1", 2, 3)?;
        let pw1 = crate::nn::conv(&vb, "pw1", 2, 8, 1, 1)?;
        let dw2 = dw_conv(&vb, "dw2", 8, 3)?;
        let out = if identity_init {
            zero_conv(&vb, "out", 8, 2, 1)?
        } else {
            crate::nn::conv(&vb, "out", 8, 2, 1, 1)?
        };
        Ok(MotionRefiner { dw1, pw1, dw2, out })
    }

    pub fn refine(&self, motion: &Tensor) -> Result<Tensor> {
        let h = self.dw1.forward(motion)?;
        let h = self.pw1.forward(&h)?.relu()?;
        let h = self.dw2.forward(&h)?;
        let res = self.out.forward(&h)?;
        Ok((motion + res)?)
    }
}
