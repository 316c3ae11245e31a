//! Raw video ingest, GOP partitioning, PGM output and PSNR.
//!
//! Only the luma plane is coded and evaluated; for YUV 4:2:0 input the
//! chroma planes are skipped on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Raw planar input pixel formats (8-bit, headerless).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    /// Luma plane only, width*height bytes per frame.
    YOnly,
    /// 4:2:0 planar; luma plane retained, chroma skipped.
    Yuv420,
}

impl PixelFormat {
    pub fn frame_bytes(self, width: usize, height: usize) -> usize {
        match self {
            PixelFormat::YOnly => width * height,
            PixelFormat::Yuv420 => width * height * 3 / 2,
        }
    }
}

/// One grayscale frame. Pixels are stored as reals so intermediate
/// reconstructions can hold out-of-range values; clamping happens on write.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        assert_eq!(pixels.len(), width * height);
        Frame {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Frame::new(width, height, vec![value; width * height])
    }
}

/// Group of pictures: the temporal unit of the 3D transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Gop {
    pub frames: Vec<Frame>,
}

impl Gop {
    pub fn gop_size(&self) -> usize {
        self.frames.len()
    }

    /// (time, height, width)
    pub fn dims(&self) -> (usize, usize, usize) {
        let f = &self.frames[0];
        (self.frames.len(), f.height, f.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrResult {
    pub mse: f64,
    pub psnr_db: f64,
}

/// PSNR is capped here when the MSE is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Load a raw planar video file. The file length must be an exact multiple
/// of the per-frame byte size implied by `format`.
pub fn load_video(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    format: PixelFormat,
) -> Result<Vec<Frame>> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let frame_bytes = format.frame_bytes(width, height);
    if frame_bytes == 0 || data.len() % frame_bytes != 0 {
        return Err(Error::TruncatedVideo {
            path: path.display().to_string(),
            actual: data.len() as u64,
            frame_bytes: frame_bytes as u64,
        });
    }
    let luma = width * height;
    let frames = data
        .chunks_exact(frame_bytes)
        .map(|chunk| {
            let pixels = chunk[..luma].iter().map(|&b| b as f64).collect();
            Frame::new(width, height, pixels)
        })
        .collect();
    Ok(frames)
}

/// Split frames into consecutive GOPs of `gop_size`. A trailing partial
/// group is padded by repeating its last frame.
pub fn split_gops(frames: &[Frame], gop_size: usize) -> Result<Vec<Gop>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to split into GOPs"));
    }
    assert!(gop_size >= 1);
    let mut gops = Vec::with_capacity(frames.len().div_ceil(gop_size));
    for group in frames.chunks(gop_size) {
        let mut g: Vec<Frame> = group.to_vec();
        while g.len() < gop_size {
            g.push(g.last().unwrap().clone());
        }
        gops.push(Gop { frames: g });
    }
    Ok(gops)
}

/// Mean squared error and PSNR between two frames of identical dimensions.
pub fn compute_psnr(reference: &Frame, test: &Frame) -> Result<PsnrResult> {
    if reference.width != test.width || reference.height != test.height {
        return Err(Error::DimensionMismatch(
            reference.width,
            reference.height,
            test.width,
            test.height,
        ));
    }
    let n = reference.pixels.len() as f64;
    let mse = reference
        .pixels
        .iter()
        .zip(&test.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let psnr_db = if mse > 0.0 {
        20.0 * (255.0 / mse.sqrt()).log10()
    } else {
        PSNR_CAP_DB
    };
    Ok(PsnrResult { mse, psnr_db })
}

fn clamp_u8(v: f64) -> u8 {
    // round half up, then clamp
    let r = (v + 0.5).floor();
    if r < 0.0 {
        0
    } else if r > 255.0 {
        255
    } else {
        r as u8
    }
}

/// Write a frame as binary PGM (P5), rounding half-up and clamping to [0,255].
pub fn write_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(frame.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", frame.width, frame.height).unwrap();
    out.extend(frame.pixels.iter().map(|&v| clamp_u8(v)));
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Deterministic smooth-motion grayscale test sequence.
///
/// Low-frequency content that translates over time, so the 3D transform
/// compacts energy the way it does on natural video. Used by the test
/// suite and by the CLI when no raw input file is available.
pub fn synthetic_sequence(width: usize, height: usize, num_frames: usize) -> Vec<Frame> {
    use std::f64::consts::TAU;
    (0..num_frames)
        .map(|t| {
            let tf = t as f64;
            let pixels = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .map(|(x, y)| {
                    let u = x as f64 / width as f64;
                    let v = y as f64 / height as f64;
                    let a = (TAU * (1.5 * u + 0.013 * tf)).sin() * (TAU * (1.2 * v - 0.009 * tf)).cos();
                    let b = (TAU * (3.0 * (u + v) + 0.021 * tf)).cos();
                    let c = (TAU * (7.0 * u - 0.004 * tf)).sin() * (TAU * 5.0 * v).sin();
                    let val = 118.0 + 68.0 * a + 34.0 * b + 9.0 * c;
                    val.clamp(0.0, 255.0).round()
                })
                .collect();
            Frame::new(width, height, pixels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn load_y_only_identity() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("tiny.yuv");
        fs::write(&p, [0u8, 85, 170, 255]).unwrap();
        let frames = load_video(&p, 2, 2, PixelFormat::YOnly).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].pixels, vec![0.0, 85.0, 170.0, 255.0]);
    }

    #[test]
    fn load_yuv420_skips_chroma() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("cif.yuv");
        let (w, h) = (176, 144);
        let mut data = vec![7u8; w * h]; // luma
        data.extend(vec![0xEEu8; w * h / 2]); // sentinel chroma
        assert_eq!(data.len(), 38016);
        fs::write(&p, &data).unwrap();
        let frames = load_video(&p, w, h, PixelFormat::Yuv420).unwrap();
        assert_eq!(frames.len(), 1);
        assert!(frames[0].pixels.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn load_truncated_fails_with_sizes() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.yuv");
        fs::write(&p, vec![0u8; 5]).unwrap();
        let err = load_video(&p, 2, 2, PixelFormat::YOnly).unwrap_err();
        match err {
            Error::TruncatedVideo {
                actual, frame_bytes, ..
            } => {
                assert_eq!(actual, 5);
                assert_eq!(frame_bytes, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_missing_file_fails() {
        assert!(load_video("/nonexistent/foo.yuv", 2, 2, PixelFormat::YOnly).is_err());
    }

    #[test]
    fn split_exact_and_padded() {
        let frames: Vec<Frame> = (0..5).map(|i| Frame::constant(2, 2, i as f64)).collect();
        let gops = split_gops(&frames, 4).unwrap();
        assert_eq!(gops.len(), 2);
        assert_eq!(gops[0].gop_size(), 4);
        // trailing GOP filled by repeating frame 5 (value 4.0)
        assert!(gops[1].frames.iter().all(|f| f.pixels[0] == 4.0));

        let one = split_gops(&frames[..1], 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].gop_size(), 1);

        let many = split_gops(&vec![frames[0].clone(); 300], 4).unwrap();
        assert_eq!(many.len(), 75);

        assert!(split_gops(&[], 4).is_err());
    }

    #[test]
    fn psnr_cases() {
        let f = Frame::constant(4, 4, 100.0);
        let r = compute_psnr(&f, &f).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.psnr_db, 99.0);

        let zero = Frame::constant(4, 4, 0.0);
        let full = Frame::constant(4, 4, 255.0);
        let r = compute_psnr(&zero, &full).unwrap();
        assert!((r.mse - 255.0 * 255.0).abs() < 1e-9);
        assert!(r.psnr_db.abs() < 1e-9);

        // mse = 1.0 -> 20*log10(255), frozen from an independent evaluation
        let a = Frame::constant(4, 4, 10.0);
        let b = Frame::constant(4, 4, 11.0);
        let r = compute_psnr(&a, &b).unwrap();
        assert!((r.psnr_db - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn psnr_dimension_mismatch() {
        let a = Frame::constant(2, 2, 0.0);
        let b = Frame::constant(2, 3, 0.0);
        assert!(compute_psnr(&a, &b).is_err());
    }

    #[test]
    fn psnr_symmetric_and_offset_property() {
        let a = Frame::new(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let b = Frame::new(2, 2, vec![12.0, 25.0, 28.0, 47.0]);
        let ab = compute_psnr(&a, &b).unwrap();
        let ba = compute_psnr(&b, &a).unwrap();
        assert_eq!(ab, ba);

        let d = 4.0;
        let shifted = Frame::new(2, 2, a.pixels.iter().map(|v| v + d).collect());
        let r = compute_psnr(&a, &shifted).unwrap();
        assert!((r.psnr_db - 20.0 * (255.0 / d).log10()).abs() < 1e-9);
    }

    #[test]
    fn pgm_write_and_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("f.pgm");
        let f = Frame::new(2, 2, vec![0.0, 85.0, 170.0, 255.0]);
        write_frame(&f, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 85, 170, 255]);

        // clamping
        let g = Frame::new(1, 2, vec![255.7, -3.2]);
        write_frame(&g, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[255, 0]);
    }

    #[test]
    fn raw_round_trip_via_pgm_body() {
        // integer in-range pixels survive write (PGM body) exactly
        let f = Frame::new(3, 1, vec![1.0, 2.0, 254.0]);
        let dir = tempdir().unwrap();
        let p = dir.path().join("rt.pgm");
        write_frame(&f, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let body = &bytes[bytes.len() - 3..];
        assert_eq!(body, &[1, 2, 254]);
    }
}
