//! Synthetic HDR/LDR clip generators for tests, smoke training, and the
//! toy benchmark. The LDR member of every pair is produced by applying an
//! invertible tone curve to the HDR member, so the base layer genuinely
//! carries information about the enhancement layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{Clip, HdrFrame, LdrFrame};
use crate::transfer::{apply_tone_curve, fit_curve_for_frames, TransferCurve};

/// A smoothly drifting, wide-dynamic-range pattern: sinusoidal texture with
/// per-clip drift, a bright moving highlight blob, and a dark floor.
/// Luminance spans roughly [0.05, 2000] cd/m^2.
pub fn moving_gradient_hdr(w: usize, h: usize, frames: usize, seed: u64) -> Vec<HdrFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dx, dy): (f32, f32) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let phase: f32 = rng.gen_range(0.0..6.28);
    let freq: f32 = rng.gen_range(4.0..9.0);
    let (bx, by): (f32, f32) = (rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
    let (bvx, bvy): (f32, f32) = (rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
    let gains: [f32; 3] = [
        rng.gen_range(0.7..1.0),
        rng.gen_range(0.7..1.0),
        rng.gen_range(0.7..1.0),
    ];

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut planes: [Vec<f32>; 3] = [
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
            Vec::with_capacity(w * h),
        ];
        let cx = bx + bvx * t as f32;
        let cy = by + bvy * t as f32;
        for y in 0..h {
            for x in 0..w {
                let u = (x as f32 + dx * t as f32) / w as f32;
                let v = (y as f32 + dy * t as f32) / h as f32;
                let s = 0.5 + 0.5 * ((u * freq + v * 3.0 + phase).sin());
                // highlight blob in normalized coordinates
                let du = x as f32 / w as f32 - cx;
                let dv = y as f32 / h as f32 - cy;
                let blob = (-(du * du + dv * dv) / 0.02).exp();
                let base = 0.05 + s * s * 120.0 + blob * 1900.0;
                for (c, plane) in planes.iter_mut().enumerate() {
                    let tint = 0.85 + 0.15 * ((u * 2.0 + c as f32).cos());
                    plane.push(base * gains[c] * tint);
                }
            }
        }
        out.push(HdrFrame::new(w, h, planes).expect("synthetic frame"));
    }
    out
}

/// Tone curve fitted over a set of frames, used for the paired LDR inputs.
pub fn clip_tone_curve(frames: &[HdrFrame]) -> crate::error::Result<TransferCurve> {
    let refs: Vec<&HdrFrame> = frames.iter().collect();
    fit_curve_for_frames(&refs, 64, 255.0)
}

/// Paired HDR/LDR clip where LDR = tone_curve(HDR) with an invertible
/// per-clip curve.
pub fn moving_gradient_clip(w: usize, h: usize, frames: usize, seed: u64) -> Clip {
    let hdr = moving_gradient_hdr(w, h, frames, seed);
    let curve = clip_tone_curve(&hdr).expect("tone curve fit");
    let pairs: Vec<(HdrFrame, LdrFrame)> = hdr
        .into_iter()
        .map(|f| {
            let ldr = apply_tone_curve(&f, &curve);
            (f, ldr)
        })
        .collect();
    Clip {
        name: format!("synth-{seed}"),
        fps: 30.0,
        frames: pairs,
    }
}
