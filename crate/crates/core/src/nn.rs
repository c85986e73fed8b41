//! Small building blocks on top of candle: differentiable bilinear warping,
//! convolution helpers with controlled initialization, Gaussian
//! rate estimation, and checkpoint I/O.

use candle_core::{DType, Device, Tensor, D};
use candle_nn::init::Init;
use candle_nn::{Conv2d, Conv2dConfig, ConvTranspose2d, ConvTranspose2dConfig, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn device() -> Device {
    Device::Cpu
}

/// 3x3 (or kxk) conv, kaiming-initialized, zero bias.
pub fn conv(
    vb: &VarBuilder,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
) -> Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride,
        dilation: 1,
        groups: 1,
    };
    Ok(candle_nn::conv2d(cin, cout, k, cfg, vb.pp(name))?)
}

/// Conv whose weight and bias are all zeros, so the block contributes an
/// exact zero residual until trained.
pub fn zero_conv(
    vb: &VarBuilder,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) -> Result<Conv2d> {
    let vb = vb.pp(name);
    let w = vb.get_with_hints((cout, cin, k, k), "weight", Init::Const(0.0))?;
    let b = vb.get_with_hints(cout, "bias", Init::Const(0.0))?;
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride: 1,
        dilation: 1,
        groups: 1,
    };
    Ok(Conv2d::new(w, Some(b), cfg))
}

/// Depthwise kxk conv (groups = channels).
pub fn dw_conv(vb: &VarBuilder, name: &str, ch: usize, k: usize) -> Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding: k / 2,
        stride: 1,
        dilation: 1,
        groups: ch,
    };
    let vb = vb.pp(name);
    let bound = 1.0 / ((k * k) as f64).sqrt();
    let w = vb.get_with_hints(
        (ch, 1, k, k),
        "weight",
        Init::Uniform {
            lo: -bound,
            up: bound,
        },
    )?;
    let b = vb.get_with_hints(ch, "bias", Init::Const(0.0))?;
    Ok(Conv2d::new(w, Some(b), cfg))
}

/// Depthwise stride-2 downsampler followed by a pointwise projection.
pub fn down_block(
    vb: &VarBuilder,
    name: &str,
    cin: usize,
    cout: usize,
) -> Result<(Conv2d, Conv2d)> {
    let vb = vb.pp(name);
    let cfg = Conv2dConfig {
        padding: 1,
        stride: 2,
        dilation: 1,
        groups: cin,
    };
    let bound = 1.0 / 3.0;
    let w = vb.get_with_hints(
        (cin, 1, 3, 3),
        "dw_weight",
        Init::Uniform {
            lo: -bound,
            up: bound,
        },
    )?;
    let b = vb.get_with_hints(cin, "dw_bias", Init::Const(0.0))?;
    let dw = Conv2d::new(w, Some(b), cfg);
    let pw = conv(&vb, "pw", cin, cout, 1, 1)?;
    Ok((dw, pw))
}

/// Transpose conv (k=4, s=2, p=1) used for 2x upsampling.
pub fn up_conv(
    vb: &VarBuilder,
    name: &str,
    cin: usize,
    cout: usize,
) -> Result<ConvTranspose2d> {
    let cfg = ConvTranspose2dConfig {
        padding: 1,
        output_padding: 0,
        stride: 2,
        dilation: 1,
    };
    Ok(candle_nn::conv_transpose2d(cin, cout, 4, cfg, vb.pp(name))?)
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, 0.1)?)
}

/// Numerically stable softplus.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let relu = x.relu()?;
    let nabs = x.abs()?.neg()?;
    Ok((relu + (nabs.exp()? + 1.0)?.log()?)?)
}

/// Bilinear warp of `feature` (B,C,H,W) by `flow` (B,2,H,W): output(p) =
/// feature(p + flow(p)), border-clamped. Differentiable in both inputs.
pub fn warp_bilinear(feature: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = feature.dims4()?;
    let dev = feature.device();
    let xs_base = Tensor::arange(0f32, w as f32, dev)?
        .reshape((1, 1, 1, w))?
        .broadcast_as((b, 1, h, w))?;
    let ys_base = Tensor::arange(0f32, h as f32, dev)?
        .reshape((1, 1, h, 1))?
        .broadcast_as((b, 1, h, w))?;
    let fx = flow.narrow(1, 0, 1)?;
    let fy = flow.narrow(1, 1, 1)?;
    let xs = (xs_base + fx)?.clamp(0f32, (w - 1) as f32)?;
    let ys = (ys_base + fy)?.clamp(0f32, (h - 1) as f32)?;
    let x0 = xs.floor()?.clamp(0f32, (w - 2) as f32)?;
    let y0 = ys.floor()?.clamp(0f32, (h - 2) as f32)?;
    let wx = (&xs - &x0)?; // in [0, 1]
    let wy = (&ys - &y0)?;

    let gather_at = |xi: &Tensor, yi: &Tensor| -> Result<Tensor> {
        // flat index yi*w + xi, expanded across channels
        let idx = ((yi * (w as f64))? + xi)?
            .to_dtype(DType::U32)?
            .reshape((b, 1, h * w))?
            .broadcast_as((b, c, h * w))?
            .contiguous()?;
        let flat = feature.reshape((b, c, h * w))?;
        Ok(flat.gather(&idx, D::Minus1)?.reshape((b, c, h, w))?)
    };

    let x1 = (&x0 + 1.0)?;
    let y1 = (&y0 + 1.0)?;
    let f00 = gather_at(&x0, &y0)?;
    let f10 = gather_at(&x1, &y0)?;
    let f01 = gather_at(&x0, &y1)?;
    let f11 = gather_at(&x1, &y1)?;

    let one = Tensor::ones_like(&wx)?;
    let w00 = ((&one - &wx)? * (&one - &wy)?)?;
    let w10 = (&wx * (&one - &wy)?)?;
    let w01 = ((&one - &wx)? * &wy)?;
    let w11 = (&wx * &wy)?;
    let out = (f00.broadcast_mul(&w00)?
        + f10.broadcast_mul(&w10)?)?
        .add(&(f01.broadcast_mul(&w01)? + f11.broadcast_mul(&w11)?)?)?;
    Ok(out)
}

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Standard normal CDF as a tensor op.
pub fn normal_cdf_t(x: &Tensor) -> Result<Tensor> {
    let t = (x / std::f64::consts::SQRT_2)?.erf()?;
    Ok(((t + 1.0)? * 0.5)?)
}

pub const MIN_SCALE: f64 = 0.04;
pub const MAX_SCALE: f64 = 256.0;

/// Bits needed per element under the discretized Gaussian model:
/// -log2 [ CDF((y - mean + .5)/scale) - CDF((y - mean - .5)/scale) ].
pub fn gaussian_bits(y: &Tensor, mean: &Tensor, scale: &Tensor) -> Result<Tensor> {
    let centered = (y - mean)?;
    let hi = normal_cdf_t(&((&centered + 0.5)? / scale)?)?;
    let lo = normal_cdf_t(&((&centered - 0.5)? / scale)?)?;
    let p = (hi - lo)?.clamp(1e-9, 1.0)?;
    Ok((p.log()? * -LOG2_E)?)
}

/// Map a raw tensor to a valid positive scale.
pub fn to_scale(raw: &Tensor) -> Result<Tensor> {
    Ok(softplus(raw)?.clamp(MIN_SCALE, MAX_SCALE)?)
}

/// Training-time quantization surrogate: additive uniform noise in
/// [-0.5, 0.5). Inference uses straight rounding.
pub fn add_uniform_noise(y: &Tensor) -> Result<Tensor> {
    let noise = (y.rand_like(0.0, 1.0)? - 0.5)?.detach();
    Ok((y + noise)?)
}

/// Checkpoint manifest stored next to the safetensors weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub stage: String,
    pub lambda: f64,
    pub step: usize,
    pub config: serde_json::Value,
    /// name -> shape, for loaders in other languages
    pub tensors: std::collections::BTreeMap<String, Vec<usize>>,
}

pub fn save_checkpoint(
    varmap: &candle_nn::VarMap,
    manifest: &CheckpointManifest,
    path: &std::path::Path,
) -> Result<()> {
    // atomic write: temp then rename
    let tmp = path.with_extension("safetensors.tmp");
    varmap.save(&tmp)?;
    std::fs::rename(&tmp, path.with_extension("safetensors"))?;
    let mtmp = path.with_extension("json.tmp");
    std::fs::write(&mtmp, serde_json::to_string_pretty(manifest).unwrap())?;
    std::fs::rename(&mtmp, path.with_extension("json"))?;
    Ok(())
}

pub fn load_checkpoint(
    varmap: &mut candle_nn::VarMap,
    path: &std::path::Path,
) -> Result<CheckpointManifest> {
    let mpath = path.with_extension("json");
    let manifest: CheckpointManifest = serde_json::from_str(
        &std::fs::read_to_string(&mpath)
            .map_err(|e| Error::other(format!("missing checkpoint manifest {mpath:?}: {e}")))?,
    )
    .map_err(|e| Error::format(format!("bad checkpoint manifest: {e}")))?;
    varmap.load(path.with_extension("safetensors"))?;
    Ok(manifest)
}

pub fn manifest_for(
    varmap: &candle_nn::VarMap,
    stage: &str,
    lambda: f64,
    step: usize,
    config: serde_json::Value,
) -> CheckpointManifest {
    let data = varmap.data().lock().unwrap();
    let tensors = data
        .iter()
        .map(|(k, v)| (k.clone(), v.shape().dims().to_vec()))
        .collect();
    CheckpointManifest {
        format_version: 1,
        stage: stage.to_string(),
        lambda,
        step,
        config,
        tensors,
    }
}

/// Total number of scalar parameters under a name prefix.
pub fn param_count(varmap: &candle_nn::VarMap, prefix: &str) -> usize {
    let data = varmap.data().lock().unwrap();
    data.iter()
        .filter(|(k, _)| k.starts_with(prefix))
        .map(|(_, v)| v.shape().elem_count())
        .sum()
}

/// SHA-256 over all parameters under a prefix, in name order. Used to prove
/// a parameter group did not change.
pub fn param_checksum(varmap: &candle_nn::VarMap, prefix: &str) -> String {
    use sha2::{Digest, Sha256};
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<&String> = data.keys().filter(|k| k.starts_with(prefix)).collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        let v = data[name]
            .flatten_all()
            .and_then(|t| t.to_vec1::<f32>())
            .expect("checksum read");
        for x in v {
            hasher.update(x.to_le_bytes());
        }
    }
    format!("{:x}", hasher.finalize())
}
