//! Quality metrics in the perceptually uniform (PU21) domain, BD-rate, and
//! the rate-distortion evaluation driver.

use rayon::prelude::*;

use crate::codec::LbsvcModel;
use crate::error::{Error, Result};
use crate::frame::{luminance, Clip, HdrFrame};
use crate::transfer::pu21_encode_plane;

/// PSNR reported for identical frames (infinity is not representable in
/// reports).
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub quality: f64,
}

#[derive(Debug, Clone)]
pub struct RdCurve {
    pub sequence: String,
    pub method: String,
    pub metric: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    /// Checks curve invariants; returns true when quality is also
    /// non-decreasing (expected but only warned about).
    pub fn validate(&self) -> Result<bool> {
        if self.points.iter().any(|p| !(p.bpp > 0.0) || !p.quality.is_finite()) {
            return Err(Error::validation("rd points must have positive bpp and finite quality"));
        }
        if self.points.windows(2).any(|w| w[1].bpp <= w[0].bpp) {
            return Err(Error::validation("rd curve bpp must be strictly increasing"));
        }
        Ok(self.points.windows(2).all(|w| w[1].quality >= w[0].quality))
    }
}

fn pu_planes(reference: &HdrFrame, distorted: &HdrFrame) -> Result<(Vec<f32>, Vec<f32>)> {
    if reference.width != distorted.width || reference.height != distorted.height {
        return Err(Error::shape(format!(
            "metric frames differ: {}x{} vs {}x{}",
            reference.width, reference.height, distorted.width, distorted.height
        )));
    }
    Ok((
        pu21_encode_plane(&luminance(reference).data),
        pu21_encode_plane(&luminance(distorted).data),
    ))
}

/// PSNR over PU21-encoded luminance, peak 1.0, capped at 100 dB.
pub fn pu_psnr(reference: &HdrFrame, distorted: &HdrFrame) -> Result<f64> {
    let (a, b) = pu_planes(reference, distorted)?;
    let mse: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// SSIM over PU21-encoded luminance: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, data range 1.0, averaged over fully valid windows.
pub fn pu_ssim(reference: &HdrFrame, distorted: &HdrFrame) -> Result<f64> {
    let (a, b) = pu_planes(reference, distorted)?;
    ssim_plane(&a, &b, reference.width, reference.height)
}

const SSIM_WIN: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WIN] {
    let mut w = [0f64; SSIM_WIN];
    let c = (SSIM_WIN / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Separable Gaussian blur, valid region only: output is
/// (w - 10) x (h - 10).
fn blur_valid(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let win = gaussian_window();
    let vw = w - SSIM_WIN + 1;
    let vh = h - SSIM_WIN + 1;
    // horizontal pass
    let mut tmp = vec![0f64; vw * h];
    for y in 0..h {
        for x in 0..vw {
            let mut acc = 0.0;
            for (k, &g) in win.iter().enumerate() {
                acc += g * plane[y * w + x + k];
            }
            tmp[y * vw + x] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0f64; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            let mut acc = 0.0;
            for (k, &g) in win.iter().enumerate() {
                acc += g * tmp[(y + k) * vw + x];
            }
            out[y * vw + x] = acc;
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], w: usize, h: usize) -> Result<f64> {
    if w < SSIM_WIN || h < SSIM_WIN {
        return Err(Error::validation(format!(
            "frame too small for an {SSIM_WIN}x{SSIM_WIN} SSIM window"
        )));
    }
    let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let bf: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let aa: Vec<f64> = af.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = bf.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = af.iter().zip(&bf).map(|(x, y)| x * y).collect();

    let mu_a = blur_valid(&af, w, h);
    let mu_b = blur_valid(&bf, w, h);
    let m_aa = blur_valid(&aa, w, h);
    let m_bb = blur_valid(&bb, w, h);
    let m_ab = blur_valid(&ab, w, h);

    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut acc = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(acc / mu_a.len() as f64)
}

// ---------------------------------------------------------------------------
// BD-rate
// ---------------------------------------------------------------------------

/// Least-squares cubic fit y = c0 + c1 x + c2 x^2 + c3 x^3.
fn cubic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 4]> {
    let n = xs.len();
    // normal equations A c = b
    let mut a = [[0f64; 4]; 4];
    let mut b = [0f64; 4];
    for i in 0..n {
        let px = [1.0, xs[i], xs[i] * xs[i], xs[i] * xs[i] * xs[i]];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += px[r] * px[c];
            }
            b[r] += px[r] * ys[i];
        }
    }
    // Gaussian elimination with partial pivoting
    let mut m = [[0f64; 5]; 4];
    for r in 0..4 {
        m[r][..4].copy_from_slice(&a[r]);
        m[r][4] = b[r];
    }
    for col in 0..4 {
        let (pivot, _) = m
            .iter()
            .enumerate()
            .skip(col)
            .map(|(i, row)| (i, row[col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-12 {
            return Err(Error::validation("degenerate rd curve (singular cubic fit)"));
        }
        m.swap(col, pivot);
        for r in 0..4 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..5 {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut out = [0f64; 4];
    for r in 0..4 {
        out[r] = m[r][4] / m[r][r];
    }
    Ok(out)
}

fn poly_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let eval = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 + c[3] * x * x * x * x / 4.0;
    eval(hi) - eval(lo)
}

/// Classic cubic-fit Bjontegaard delta rate: fit log10(bpp) as a cubic in
/// quality for both curves, integrate the difference over the overlapping
/// quality interval, and return the average rate change in percent.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    if anchor.points.len() < 4 || test.points.len() < 4 {
        return Err(Error::validation("bd-rate needs at least 4 points per curve"));
    }
    anchor.validate()?;
    test.validate()?;
    let lo = anchor
        .points
        .iter()
        .map(|p| p.quality)
        .fold(f64::INFINITY, f64::min)
        .max(test.points.iter().map(|p| p.quality).fold(f64::INFINITY, f64::min));
    let hi = anchor
        .points
        .iter()
        .map(|p| p.quality)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(
            test.points
                .iter()
                .map(|p| p.quality)
                .fold(f64::NEG_INFINITY, f64::max),
        );
    if !(hi > lo) {
        return Err(Error::validation("rd curves have no overlapping quality range"));
    }
    // normalize quality for conditioning of the cubic fit
    let norm = |q: f64| (q - lo) / (hi - lo);
    let fit = |curve: &RdCurve| -> Result<[f64; 4]> {
        let xs: Vec<f64> = curve.points.iter().map(|p| norm(p.quality)).collect();
        let ys: Vec<f64> = curve.points.iter().map(|p| p.bpp.log10()).collect();
        cubic_fit(&xs, &ys)
    };
    let ca = fit(anchor)?;
    let ct = fit(test)?;
    // mean over the normalized overlap [0, 1]
    let delta = poly_integral(&ct, 0.0, 1.0) - poly_integral(&ca, 0.0, 1.0);
    Ok(100.0 * (10f64.powf(delta) - 1.0))
}

// ---------------------------------------------------------------------------
// evaluation driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub sequence: String,
    pub lambda: f64,
    pub bpp: f64,
    pub bpp_bl: f64,
    pub bpp_el: f64,
    pub pu_psnr: f64,
    pub pu_ssim: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Per-sequence PU-PSNR curves plus an "average" curve.
    pub curves: Vec<RdCurve>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence,lambda,bpp,bpp_bl,bpp_el,pu_psnr,pu_ssim\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.4},{:.6}\n",
                r.sequence, r.lambda, r.bpp, r.bpp_bl, r.bpp_el, r.pu_psnr, r.pu_ssim
            ));
        }
        out
    }

    /// One machine-readable record per rate point.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "rdpoint sequence={} lambda={} bpp={:.6} bpp_bl={:.6} bpp_el={:.6} pu_psnr={:.4} pu_ssim={:.6}\n",
                r.sequence, r.lambda, r.bpp, r.bpp_bl, r.bpp_el, r.pu_psnr, r.pu_ssim
            ));
        }
        out
    }

    pub fn curve(&self, sequence: &str) -> Option<&RdCurve> {
        self.curves.iter().find(|c| c.sequence == sequence)
    }

    /// Simple RD plot: bpp on x, PU-PSNR on y, one polyline per curve.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 480.0);
        let pts: Vec<&RdPoint> = self.curves.iter().flat_map(|c| c.points.iter()).collect();
        if pts.is_empty() {
            return format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\"/>");
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &pts {
            x0 = x0.min(p.bpp);
            x1 = x1.max(p.bpp);
            y0 = y0.min(p.quality);
            y1 = y1.max(p.quality);
        }
        let sx = |v: f64| 60.0 + (v - x0) / (x1 - x0).max(1e-12) * (w - 100.0);
        let sy = |v: f64| h - 40.0 - (v - y0) / (y1 - y0).max(1e-12) * (h - 80.0);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
        );
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];
        for (i, c) in self.curves.iter().enumerate() {
            let col = colors[i % colors.len()];
            let path: Vec<String> = c
                .points
                .iter()
                .map(|p| format!("{:.1},{:.1}", sx(p.bpp), sy(p.quality)))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{col}\" points=\"{}\"/>\n",
                path.join(" ")
            ));
            svg.push_str(&format!(
                "<text x=\"70\" y=\"{}\" fill=\"{col}\" font-size=\"12\">{}</text>\n",
                20 + 14 * i,
                c.sequence
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Encode every sequence at every lambda point and collect RD statistics.
/// `models` pairs each lambda with its trained model; sequences run in
/// parallel.
pub fn evaluate_model(
    models: &[(f64, &LbsvcModel)],
    sequences: &[Clip],
    intra_period: usize,
    frames: usize,
    method: &str,
) -> Result<EvalReport> {
    if models.is_empty() || sequences.is_empty() {
        return Err(Error::validation("evaluation needs models and sequences"));
    }
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for (mi, _) in models.iter().enumerate() {
        for (si, _) in sequences.iter().enumerate() {
            jobs.push((mi, si));
        }
    }
    let results: Vec<Result<EvalRow>> = jobs
        .par_iter()
        .map(|&(mi, si)| -> Result<EvalRow> {
            let (lambda, model) = models[mi];
            let seq = &sequences[si];
            let n = frames.min(seq.frames.len());
            let sub = Clip {
                name: seq.name.clone(),
                fps: seq.fps,
                frames: seq.frames[..n].to_vec(),
            };
            let coded = model.code_sequence(&sub, intra_period)?;
            let px = (sub.frames[0].1.width * sub.frames[0].1.height * n) as f64;
            let mut bl_bits = 0u64;
            let mut el_bits = 0u64;
            for f in &coded.stream.frames {
                bl_bits += 8 * (f.bl_motion.len() + f.bl_frame.len()) as u64;
                el_bits += 8 * (f.prior.len() + f.el_motion.len() + f.el_frame.len()) as u64;
            }
            let mut psnr = 0.0;
            let mut ssim = 0.0;
            for (t, (hdr, _)) in sub.frames.iter().enumerate() {
                psnr += pu_psnr(hdr, &coded.recon_hdr[t])?;
                ssim += pu_ssim(hdr, &coded.recon_hdr[t])?;
            }
            Ok(EvalRow {
                sequence: seq.name.clone(),
                lambda,
                bpp: coded.stream.bpp(),
                bpp_bl: bl_bits as f64 / px,
                bpp_el: el_bits as f64 / px,
                pu_psnr: psnr / n as f64,
                pu_ssim: ssim / n as f64,
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }
    rows.sort_by(|a, b| (a.sequence.clone(), a.lambda).partial_cmp(&(b.sequence.clone(), b.lambda)).unwrap());

    let mut curves = Vec::new();
    for seq in sequences {
        let pts: Vec<RdPoint> = rows
            .iter()
            .filter(|r| r.sequence == seq.name)
            .map(|r| RdPoint {
                bpp: r.bpp,
                quality: r.pu_psnr,
            })
            .collect();
        curves.push(RdCurve {
            sequence: seq.name.clone(),
            method: method.to_string(),
            metric: "pu_psnr".to_string(),
            points: pts,
        });
    }
    // average curve: mean bpp / quality per lambda across sequences
    let mut avg = Vec::new();
    for (lambda, _) in models {
        let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.lambda == *lambda).collect();
        avg.push(RdPoint {
            bpp: sel.iter().map(|r| r.bpp).sum::<f64>() / sel.len() as f64,
            quality: sel.iter().map(|r| r.pu_psnr).sum::<f64>() / sel.len() as f64,
        });
    }
    avg.sort_by(|a, b| a.bpp.partial_cmp(&b.bpp).unwrap());
    curves.push(RdCurve {
        sequence: "average".to_string(),
        method: method.to_string(),
        metric: "pu_psnr".to_string(),
        points: avg,
    });
    Ok(EvalReport { rows, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::pu21_encode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_from_luma(w: usize, h: usize, vals: &[f32]) -> HdrFrame {
        HdrFrame::new(w, h, [vals.to_vec(), vals.to_vec(), vals.to_vec()]).unwrap()
    }

    fn random_frame(w: usize, h: usize, seed: u64) -> HdrFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.1..5000.0)).collect();
        frame_from_luma(w, h, &vals)
    }

    #[test]
    fn pu_psnr_identity_is_capped() {
        let f = random_frame(16, 16, 1);
        assert_eq!(pu_psnr(&f, &f).unwrap(), 100.0);
    }

    #[test]
    fn pu_psnr_constant_offset_closed_form() {
        // construct a pair whose PU-encoded luminances differ by a constant
        let w = 32;
        let delta = 0.01f64;
        let mut ref_pu = Vec::new();
        let mut dist_pu = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // invert PU numerically on a dense table
        let table: Vec<(f64, f64)> = (0..20000)
            .map(|i| {
                let l = 0.005 * (10000.0f64 / 0.005).powf(i as f64 / 19999.0);
                (pu21_encode(l), l)
            })
            .collect();
        let invert = |p: f64| -> f64 {
            let idx = table.partition_point(|e| e.0 < p).min(table.len() - 1);
            table[idx].1
        };
        for _ in 0..w * w {
            let p: f64 = rng.gen_range(0.2..0.8);
            ref_pu.push(invert(p) as f32);
            dist_pu.push(invert(p + delta) as f32);
        }
        let a = frame_from_luma(w, w, &ref_pu);
        let b = frame_from_luma(w, w, &dist_pu);
        let psnr = pu_psnr(&a, &b).unwrap();
        let expect = 20.0 * (1.0 / delta).log10();
        assert!(
            (psnr - expect).abs() < 0.01,
            "psnr {psnr} expect {expect}"
        );
    }

    #[test]
    fn pu_psnr_symmetric_and_monotone_in_noise() {
        let f = random_frame(24, 24, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut prev = f64::INFINITY;
        for amp in [1.0f32, 4.0, 16.0, 64.0, 256.0] {
            let noisy_vals: Vec<f32> = luminance(&f)
                .data
                .iter()
                .map(|&v| (v + rng.gen_range(-amp..amp)).max(0.0))
                .collect();
            let g = frame_from_luma(24, 24, &noisy_vals);
            let p = pu_psnr(&f, &g).unwrap();
            let q = pu_psnr(&g, &f).unwrap();
            assert!((p - q).abs() < 1e-9, "asymmetric psnr");
            assert!(p < prev, "psnr not decreasing with noise: {p} vs {prev}");
            prev = p;
        }
    }

    #[test]
    fn pu_ssim_identity_bounds_and_constant_case() {
        let f = random_frame(20, 20, 5);
        assert!((pu_ssim(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        let g = random_frame(20, 20, 6);
        let s = pu_ssim(&f, &g).unwrap();
        assert!((-1.0..=1.0).contains(&s));

        // constant-vs-constant: variance terms vanish; luminance term only
        let a = frame_from_luma(16, 16, &vec![100.0; 256]);
        let b = frame_from_luma(16, 16, &vec![300.0; 256]);
        let pa = pu21_encode(100.0);
        let pb = pu21_encode(300.0);
        let c1 = 0.01f64.powi(2);
        let c2 = 0.03f64.powi(2);
        // second factor is c2/c2 = 1 for zero variance
        let expect = (2.0 * pa * pb + c1) / (pa * pa + pb * pb + c1) * (c2 / c2);
        let s = pu_ssim(&a, &b).unwrap();
        assert!((s - expect).abs() < 1e-6, "ssim {s} expect {expect}");
        // too-small frames are rejected
        let tiny = frame_from_luma(8, 8, &vec![1.0; 64]);
        assert!(pu_ssim(&tiny, &tiny).is_err());
    }

    fn curve(points: &[(f64, f64)]) -> RdCurve {
        RdCurve {
            sequence: "s".into(),
            method: "m".into(),
            metric: "pu_psnr".into(),
            points: points.iter().map(|&(bpp, q)| RdPoint { bpp, quality: q }).collect(),
        }
    }

    #[test]
    fn bd_rate_identity_and_doubling() {
        let a = curve(&[(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (0.8, 39.0)]);
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        let doubled = curve(&[(0.2, 30.0), (0.4, 33.0), (0.8, 36.0), (1.6, 39.0)]);
        let bd = bd_rate(&a, &doubled).unwrap();
        assert!((bd - 100.0).abs() < 0.1, "bd {bd}");
        let bd_rev = bd_rate(&doubled, &a).unwrap();
        assert!(bd_rev < 0.0);
    }

    #[test]
    fn bd_rate_matches_numerical_integration_oracle() {
        let a = curve(&[(0.12, 29.0), (0.21, 32.5), (0.45, 35.5), (0.95, 38.0)]);
        let b = curve(&[(0.15, 30.0), (0.28, 33.0), (0.52, 36.0), (1.10, 38.5)]);
        let bd = bd_rate(&a, &b).unwrap();
        // oracle: trapezoid integration of the two fitted cubics
        let lo = 30.0f64;
        let hi = 38.0f64;
        let norm = |q: f64| (q - lo) / (hi - lo);
        let fit = |c: &RdCurve| {
            let xs: Vec<f64> = c.points.iter().map(|p| norm(p.quality)).collect();
            let ys: Vec<f64> = c.points.iter().map(|p| p.bpp.log10()).collect();
            cubic_fit(&xs, &ys).unwrap()
        };
        let (ca, cb) = (fit(&a), fit(&b));
        let eval = |c: &[f64; 4], x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let n = 1000;
        let mut acc = 0.0;
        for i in 0..n {
            let x0 = i as f64 / n as f64;
            let x1 = (i + 1) as f64 / n as f64;
            acc += 0.5 * ((eval(&cb, x0) - eval(&ca, x0)) + (eval(&cb, x1) - eval(&ca, x1))) * (x1 - x0);
        }
        let oracle = 100.0 * (10f64.powf(acc) - 1.0);
        assert!((bd - oracle).abs() < 0.1, "bd {bd} oracle {oracle}");
    }

    #[test]
    fn bd_rate_rejects_bad_curves() {
        let a = curve(&[(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (0.8, 39.0)]);
        let three = curve(&[(0.1, 30.0), (0.2, 33.0), (0.4, 36.0)]);
        assert!(bd_rate(&a, &three).is_err());
        let disjoint = curve(&[(0.1, 50.0), (0.2, 53.0), (0.4, 56.0), (0.8, 59.0)]);
        assert!(bd_rate(&a, &disjoint).is_err());
        let unsorted = curve(&[(0.4, 30.0), (0.2, 33.0), (0.5, 36.0), (0.8, 39.0)]);
        assert!(bd_rate(&a, &unsorted).is_err());
    }
}
