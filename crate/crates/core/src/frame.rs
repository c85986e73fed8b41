//! HDR/LDR frame containers and on-disk formats.
//!
//! HDR frames are stored as color PFM (32-bit float, little-endian, bottom-up
//! rows), LDR frames as binary PPM (P6, maxval 255). Directory layout for a
//! clip is `<clip>/{hdr,ldr}/%04d.{pfm,ppm}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Color primaries tag carried with HDR frames. BT.2020 throughout unless
/// the source says otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorPrimaries {
    #[default]
    Bt2020,
    Bt709,
}

/// Linear-light floating point HDR frame, three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrFrame {
    pub width: usize,
    pub height: usize,
    /// R, G, B planes, row-major, `width * height` each.
    pub planes: [Vec<f32>; 3],
    pub color_primaries: ColorPrimaries,
}

/// 8-bit tone-mapped LDR frame, three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrFrame {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<u8>; 3],
}

/// A single-channel plane of luminance values (cd/m² for absolute content).
#[derive(Debug, Clone, PartialEq)]
pub struct LumaPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// An ordered sequence of co-registered (HDR, LDR) frame pairs.
#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub fps: f64,
    pub frames: Vec<(HdrFrame, LdrFrame)>,
}

impl HdrFrame {
    pub fn new(width: usize, height: usize, planes: [Vec<f32>; 3]) -> Result<Self> {
        let f = HdrFrame {
            width,
            height,
            planes,
            color_primaries: ColorPrimaries::Bt2020,
        };
        f.validate()?;
        Ok(f)
    }

    /// Constant-valued frame, mostly for tests and synthetic data.
    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        HdrFrame {
            width,
            height,
            planes: [
                vec![value; width * height],
                vec![value; width * height],
                vec![value; width * height],
            ],
            color_primaries: ColorPrimaries::Bt2020,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (ci, plane) in self.planes.iter().enumerate() {
            if plane.len() != self.width * self.height {
                return Err(Error::shape(format!(
                    "plane {ci}: {} values for {}x{}",
                    plane.len(),
                    self.width,
                    self.height
                )));
            }
            for (i, &v) in plane.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::validation(format!(
                        "non-finite pixel at plane {ci} index {i}: {v}"
                    )));
                }
                if v < 0.0 {
                    return Err(Error::validation(format!(
                        "negative pixel at plane {ci} index {i}: {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl LdrFrame {
    pub fn new(width: usize, height: usize, planes: [Vec<u8>; 3]) -> Result<Self> {
        for (ci, plane) in planes.iter().enumerate() {
            if plane.len() != width * height {
                return Err(Error::shape(format!(
                    "plane {ci}: {} values for {width}x{height}",
                    plane.len()
                )));
            }
        }
        Ok(LdrFrame {
            width,
            height,
            planes,
        })
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        LdrFrame {
            width,
            height,
            planes: [
                vec![value; width * height],
                vec![value; width * height],
                vec![value; width * height],
            ],
        }
    }
}

impl Clip {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::validation("empty clip"));
        }
        let (w, h) = (self.frames[0].0.width, self.frames[0].0.height);
        for (i, (hdr, ldr)) in self.frames.iter().enumerate() {
            if hdr.width != w || hdr.height != h || ldr.width != w || ldr.height != h {
                return Err(Error::shape(format!("frame {i} dimensions differ")));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.frames[0].0.width
    }

    pub fn height(&self) -> usize {
        self.frames[0].0.height
    }
}

/// BT.2020 luma weights; the documented luminance definition for everything
/// downstream (histogram prior, metrics, stats).
pub const LUMA_WEIGHTS: [f32; 3] = [0.2627, 0.6780, 0.0593];

/// Y = 0.2627 R + 0.6780 G + 0.0593 B on linear-light planes.
pub fn luminance(frame: &HdrFrame) -> LumaPlane {
    let n = frame.width * frame.height;
    let mut data = vec![0f32; n];
    for (w, plane) in LUMA_WEIGHTS.iter().zip(frame.planes.iter()) {
        for (d, &v) in data.iter_mut().zip(plane.iter()) {
            *d += w * v;
        }
    }
    LumaPlane {
        width: frame.width,
        height: frame.height,
        data,
    }
}

/// Same weights applied to an 8-bit frame, result in [0,1].
pub fn luminance_ldr(frame: &LdrFrame) -> LumaPlane {
    let n = frame.width * frame.height;
    let mut data = vec![0f32; n];
    for (w, plane) in LUMA_WEIGHTS.iter().zip(frame.planes.iter()) {
        for (d, &v) in data.iter_mut().zip(plane.iter()) {
            *d += w * (v as f32 / 255.0);
        }
    }
    LumaPlane {
        width: frame.width,
        height: frame.height,
        data,
    }
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if !byte[0].is_ascii_whitespace() {
            break;
        }
    }
    tok.push(byte[0] as char);
    loop {
        if r.read_exact(&mut byte).is_err() {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            break;
        }
        tok.push(byte[0] as char);
    }
    Ok(tok)
}

/// Read a color PFM file. Grayscale ("Pf") files are rejected; the scale
/// factor's sign selects endianness, its magnitude is ignored.
pub fn read_pfm(path: impl AsRef<Path>) -> Result<HdrFrame> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let magic = read_token(&mut r)?;
    if magic == "Pf" {
        return Err(Error::format("color PFM required, got grayscale 'Pf'"));
    }
    if magic != "PF" {
        return Err(Error::format(format!("bad PFM magic {magic:?}")));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PFM width"))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PFM height"))?;
    let scale: f32 = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PFM scale"))?;
    if width == 0 || height == 0 {
        return Err(Error::format("zero PFM dimensions"));
    }
    let little_endian = scale < 0.0;
    let n = width * height;
    let mut raw = vec![0u8; n * 3 * 4];
    r.read_exact(&mut raw)?;

    let mut planes = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    // PFM rows run bottom-to-top.
    for row in 0..height {
        let src_row = height - 1 - row;
        for col in 0..width {
            let off = (src_row * width + col) * 12;
            let idx = row * width + col;
            for c in 0..3 {
                let b = &raw[off + c * 4..off + c * 4 + 4];
                let v = if little_endian {
                    LittleEndian::read_f32(b)
                } else {
                    byteorder::BigEndian::read_f32(b)
                };
                if !v.is_finite() {
                    return Err(Error::validation(format!(
                        "non-finite pixel at index {idx} channel {c}"
                    )));
                }
                planes[c][idx] = v;
            }
        }
    }
    HdrFrame::new(width, height, planes)
}

/// Write a color PFM file (little-endian, scale -1.0).
pub fn write_pfm(frame: &HdrFrame, path: impl AsRef<Path>) -> Result<()> {
    frame.validate()?;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "PF\n{} {}\n-1.0\n", frame.width, frame.height)?;
    let mut buf = vec![0u8; frame.width * 12];
    for row in (0..frame.height).rev() {
        for col in 0..frame.width {
            for c in 0..3 {
                let v = frame.planes[c][row * frame.width + col];
                LittleEndian::write_f32(&mut buf[col * 12 + c * 4..col * 12 + c * 4 + 4], v);
            }
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a binary PPM (P6, maxval 255).
pub fn read_ldr(path: impl AsRef<Path>) -> Result<LdrFrame> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let magic = read_token(&mut r)?;
    if magic != "P6" {
        return Err(Error::format(format!("bad PPM magic {magic:?}")));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PPM width"))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PPM height"))?;
    let maxval: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::format("bad PPM maxval"))?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported PPM maxval {maxval}")));
    }
    let n = width * height;
    let mut raw = vec![0u8; n * 3];
    r.read_exact(&mut raw)?;
    let mut planes = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
    for i in 0..n {
        planes[0][i] = raw[i * 3];
        planes[1][i] = raw[i * 3 + 1];
        planes[2][i] = raw[i * 3 + 2];
    }
    LdrFrame::new(width, height, planes)
}

/// Write a binary PPM (P6, maxval 255).
pub fn write_ldr(frame: &LdrFrame, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "P6\n{} {}\n255\n", frame.width, frame.height)?;
    let n = frame.width * frame.height;
    let mut raw = vec![0u8; n * 3];
    for i in 0..n {
        raw[i * 3] = frame.planes[0][i];
        raw[i * 3 + 1] = frame.planes[1][i];
        raw[i * 3 + 2] = frame.planes[2][i];
    }
    w.write_all(&raw)?;
    w.flush()?;
    Ok(())
}

/// Load a clip from the `<dir>/{hdr,ldr}/%04d.{pfm,ppm}` layout.
pub fn read_clip(dir: impl AsRef<Path>, fps: f64) -> Result<Clip> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let mut frames = Vec::new();
    for i in 0.. {
        let hdr_path = dir.join("hdr").join(format!("{i:04}.pfm"));
        let ldr_path = dir.join("ldr").join(format!("{i:04}.ppm"));
        if !hdr_path.exists() {
            break;
        }
        let hdr = read_pfm(&hdr_path)?;
        let ldr = read_ldr(&ldr_path)?;
        frames.push((hdr, ldr));
    }
    let clip = Clip { name, fps, frames };
    clip.validate()?;
    Ok(clip)
}

/// Write a clip in the standard directory layout.
pub fn write_clip(clip: &Clip, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("hdr"))?;
    std::fs::create_dir_all(dir.join("ldr"))?;
    for (i, (hdr, ldr)) in clip.frames.iter().enumerate() {
        write_pfm(hdr, dir.join("hdr").join(format!("{i:04}.pfm")))?;
        write_ldr(ldr, dir.join("ldr").join(format!("{i:04}.ppm")))?;
    }
    Ok(())
}

fn crop_hdr(f: &HdrFrame, x: usize, y: usize, size: usize) -> HdrFrame {
    let mut planes = [
        Vec::with_capacity(size * size),
        Vec::with_capacity(size * size),
        Vec::with_capacity(size * size),
    ];
    for c in 0..3 {
        for row in y..y + size {
            planes[c].extend_from_slice(&f.planes[c][row * f.width + x..row * f.width + x + size]);
        }
    }
    HdrFrame {
        width: size,
        height: size,
        planes,
        color_primaries: f.color_primaries,
    }
}

fn crop_ldr(f: &LdrFrame, x: usize, y: usize, size: usize) -> LdrFrame {
    let mut planes = [
        Vec::with_capacity(size * size),
        Vec::with_capacity(size * size),
        Vec::with_capacity(size * size),
    ];
    for c in 0..3 {
        for row in y..y + size {
            planes[c].extend_from_slice(&f.planes[c][row * f.width + x..row * f.width + x + size]);
        }
    }
    LdrFrame {
        width: size,
        height: size,
        planes,
    }
}

/// Cut `count` square patches out of a clip. One crop window per patch,
/// shared by every frame and by the HDR/LDR member of each pair.
pub fn crop_patches(clip: &Clip, size: usize, count: usize, seed: u64) -> Result<Vec<Clip>> {
    clip.validate()?;
    let (w, h) = (clip.width(), clip.height());
    if size > w || size > h {
        return Err(Error::validation(format!(
            "patch size {size} exceeds frame dimensions {w}x{h}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for p in 0..count {
        let x = rng.gen_range(0..=w - size);
        let y = rng.gen_range(0..=h - size);
        let frames = clip
            .frames
            .iter()
            .map(|(hdr, ldr)| (crop_hdr(hdr, x, y, size), crop_ldr(ldr, x, y, size)))
            .collect();
        out.push(Clip {
            name: format!("{}_p{p}", clip.name),
            fps: clip.fps,
            frames,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_hdr(w: usize, h: usize, seed: u64) -> HdrFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut planes = [vec![0f32; w * h], vec![0f32; w * h], vec![0f32; w * h]];
        for p in planes.iter_mut() {
            for v in p.iter_mut() {
                *v = rng.gen_range(0.0..1000.0);
            }
        }
        HdrFrame::new(w, h, planes).unwrap()
    }

    #[test]
    fn pfm_identity_payload() {
        let dir = tempfile::tempdir().unwrap();
        let f = HdrFrame::constant(2, 2, 1.0);
        let p = dir.path().join("a.pfm");
        write_pfm(&f, &p).unwrap();
        let g = read_pfm(&p).unwrap();
        assert_eq!(g.planes.iter().flatten().count(), 12);
        assert!(g.planes.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = random_hdr(7, 5, 3);
        let p = dir.path().join("a.pfm");
        write_pfm(&f, &p).unwrap();
        let g = read_pfm(&p).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn pfm_grayscale_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pfm");
        std::fs::write(&p, b"Pf\n1 1\n-1.0\n\x00\x00\x80\x3f").unwrap();
        let err = read_pfm(&p).unwrap_err();
        assert!(err.to_string().contains("color PFM required"));
    }

    #[test]
    fn pfm_nan_refused_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = HdrFrame::constant(2, 2, 1.0);
        f.planes[1][2] = f32::NAN;
        assert!(write_pfm(&f, dir.path().join("n.pfm")).is_err());
    }

    #[test]
    fn pfm_file_size_matches_format_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let f = HdrFrame::constant(192, 108, 0.5);
        let p = dir.path().join("s.pfm");
        write_pfm(&f, &p).unwrap();
        let header = format!("PF\n{} {}\n-1.0\n", 192, 108).len() as u64;
        assert_eq!(
            std::fs::metadata(&p).unwrap().len(),
            header + 192 * 108 * 3 * 4
        );
    }

    #[test]
    fn ppm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for value in [0u8, 255u8] {
            let f = LdrFrame::constant(4, 3, value);
            let p = dir.path().join("a.ppm");
            write_ldr(&f, &p).unwrap();
            assert_eq!(read_ldr(&p).unwrap(), f);
        }
    }

    #[test]
    fn ppm_16bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.ppm");
        std::fs::write(&p, b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(read_ldr(&p).unwrap_err().to_string().contains("65535"));
    }

    #[test]
    fn luminance_weights() {
        let f = HdrFrame::constant(2, 2, 3.0);
        let y = luminance(&f);
        for v in &y.data {
            assert!((v - 3.0).abs() < 1e-5);
        }
        let mut g = HdrFrame::constant(1, 1, 0.0);
        g.planes[1][0] = 1.0;
        assert!((luminance(&g).data[0] - 0.6780).abs() < 1e-7);
    }

    #[test]
    fn luminance_matches_scalar_oracle_and_is_linear() {
        let f = random_hdr(9, 4, 11);
        let y = luminance(&f);
        for i in 0..36 {
            let expect =
                0.2627 * f.planes[0][i] + 0.6780 * f.planes[1][i] + 0.0593 * f.planes[2][i];
            assert!((y.data[i] - expect).abs() <= 1e-4 * expect.abs().max(1.0));
        }
        // linearity
        let a = 2.5f32;
        let mut fa = f.clone();
        for p in fa.planes.iter_mut() {
            for v in p.iter_mut() {
                *v *= a;
            }
        }
        let ya = luminance(&fa);
        for (s, t) in ya.data.iter().zip(y.data.iter()) {
            assert!((s - a * t).abs() <= 1e-3 * s.abs().max(1.0));
        }
    }

    fn test_clip(w: usize, h: usize, n: usize) -> Clip {
        let frames = (0..n)
            .map(|i| {
                (
                    random_hdr(w, h, i as u64),
                    LdrFrame::constant(w, h, (i * 10) as u8),
                )
            })
            .collect();
        Clip {
            name: "t".into(),
            fps: 24.0,
            frames,
        }
    }

    #[test]
    fn crop_patches_deterministic_and_sized() {
        let clip = test_clip(64, 48, 3);
        let a = crop_patches(&clip, 16, 4, 7).unwrap();
        let b = crop_patches(&clip, 16, 4, 7).unwrap();
        assert_eq!(a.len(), 4);
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert_eq!(pa.width(), 16);
            assert_eq!(pa.height(), 16);
            for (fa, fb) in pa.frames.iter().zip(pb.frames.iter()) {
                assert_eq!(fa.0, fb.0);
                assert_eq!(fa.1, fb.1);
            }
        }
    }

    #[test]
    fn crop_patches_oversize_errors() {
        let clip = test_clip(8, 8, 1);
        assert!(crop_patches(&clip, 4000, 1, 0).is_err());
    }

    #[test]
    fn crop_windows_identical_for_hdr_and_ldr() {
        // encode the crop position in pixel values and check positional equality
        let w = 32;
        let h = 32;
        let mut hdr = HdrFrame::constant(w, h, 0.0);
        let mut ldr = LdrFrame::constant(w, h, 0);
        for y in 0..h {
            for x in 0..w {
                hdr.planes[0][y * w + x] = (y * w + x) as f32;
                ldr.planes[0][y * w + x] = ((y * w + x) % 251) as u8;
            }
        }
        let clip = Clip {
            name: "c".into(),
            fps: 24.0,
            frames: vec![(hdr, ldr)],
        };
        let patches = crop_patches(&clip, 8, 5, 123).unwrap();
        for p in &patches {
            let (ph, pl) = &p.frames[0];
            let origin = ph.planes[0][0] as usize;
            for (i, &v) in ph.planes[0].iter().enumerate() {
                let full = origin + (i / 8) * w + (i % 8);
                assert_eq!(v as usize, full);
                assert_eq!(pl.planes[0][i] as usize, full % 251);
            }
        }
    }

    #[test]
    fn clip_round_trip_via_directory() {
        let dir = tempfile::tempdir().unwrap();
        let clip = test_clip(8, 6, 2);
        write_clip(&clip, dir.path().join("c")).unwrap();
        let back = read_clip(dir.path().join("c"), 24.0).unwrap();
        assert_eq!(back.frames.len(), 2);
        assert_eq!(back.frames[0].0, clip.frames[0].0);
        assert_eq!(back.frames[1].1, clip.frames[1].1);
    }
}
