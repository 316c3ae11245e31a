//! 3D-DCT decorrelation, equal-size chunking with variance statistics, and
//! Walsh-Hadamard whitening.
//!
//! All transforms use orthonormal scaling so energy is preserved exactly
//! (Parseval) and every forward/inverse pair is an involution or transpose.

use crate::source::{Frame, Gop};
use crate::{Error, Result};

/// 3D array of DCT coefficients for one GOP, layout `[t][y][x]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCube {
    /// (time, height, width)
    pub dims: (usize, usize, usize),
    pub coeffs: Vec<f64>,
}

impl CoefficientCube {
    pub fn len(&self) -> usize {
        let (t, h, w) = self.dims;
        t * h * w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Equal-size block of coefficients sharing one variance statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub index: usize,
    pub samples: Vec<f64>,
    /// Population variance of `samples`.
    pub variance: f64,
}

/// Chunks plus the zero-pad count appended to make them uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    pub chunks: Vec<Chunk>,
    /// Zeros appended past the cube's coefficients.
    pub pad: usize,
}

/// Hadamard-whitened sample vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedPayload {
    pub samples: Vec<f64>,
    pub hadamard_order: usize,
    /// Zeros appended to fill the final block.
    pub pad: usize,
}

/// Orthonormal DCT-II basis matrix, row-major `[k][n]`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for j in 0..n {
            m[k * n + j] = s * (std::f64::consts::PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

/// Apply `mat` (n x n, row-major; transposed if `transpose`) to every line of
/// `data` along the axis with the given stride and line count layout.
fn apply_axis(data: &mut [f64], mat: &[f64], n: usize, transpose: bool, line_starts: impl Iterator<Item = usize>, stride: usize) {
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for start in line_starts {
        for (i, v) in line.iter_mut().enumerate() {
            *v = data[start + i * stride];
        }
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            if transpose {
                for j in 0..n {
                    acc += mat[j * n + k] * line[j];
                }
            } else {
                let row = &mat[k * n..(k + 1) * n];
                for j in 0..n {
                    acc += row[j] * line[j];
                }
            }
            *o = acc;
        }
        for (i, v) in out.iter().enumerate() {
            data[start + i * stride] = *v;
        }
    }
}

fn dct3_dir(dims: (usize, usize, usize), data: &mut [f64], inverse: bool) {
    let (t, h, w) = dims;
    // width axis
    let mw = dct_matrix(w);
    apply_axis(data, &mw, w, inverse, (0..t * h).map(|r| r * w), 1);
    // height axis
    let mh = dct_matrix(h);
    let starts = (0..t).flat_map(|ti| (0..w).map(move |x| ti * h * w + x));
    apply_axis(data, &mh, h, inverse, starts, w);
    // time axis
    let mt = dct_matrix(t);
    apply_axis(data, &mt, t, inverse, 0..h * w, h * w);
}

/// Separable orthonormal type-II DCT along width, height and time.
pub fn dct3(gop: &Gop) -> CoefficientCube {
    let (t, h, w) = gop.dims();
    assert!(t > 0 && h > 0 && w > 0);
    let mut data = Vec::with_capacity(t * h * w);
    for f in &gop.frames {
        assert_eq!((f.height, f.width), (h, w), "uniform frame sizes required");
        data.extend_from_slice(&f.pixels);
    }
    dct3_dir((t, h, w), &mut data, false);
    CoefficientCube {
        dims: (t, h, w),
        coeffs: data,
    }
}

/// Inverse of [`dct3`].
pub fn idct3(cube: &CoefficientCube) -> Gop {
    let (t, h, w) = cube.dims;
    let mut data = cube.coeffs.clone();
    dct3_dir((t, h, w), &mut data, true);
    let frames = data
        .chunks_exact(h * w)
        .map(|p| Frame::new(w, h, p.to_vec()))
        .collect();
    Gop { frames }
}

fn population_variance(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Split the cube's coefficients into `num_chunks` equal contiguous chunks.
///
/// Scan order is the cube's storage order: temporal plane 0 first, row-major
/// within each plane, so chunk index correlates with frequency band. The tail
/// is zero-padded up to a multiple of `num_chunks`.
pub fn chunk(cube: &CoefficientCube, num_chunks: usize) -> ChunkSet {
    assert!(num_chunks >= 1);
    let n = cube.len();
    let chunk_len = n.div_ceil(num_chunks);
    let padded = chunk_len * num_chunks;
    let mut data = cube.coeffs.clone();
    data.resize(padded, 0.0);
    let chunks = data
        .chunks_exact(chunk_len)
        .enumerate()
        .map(|(index, s)| Chunk {
            index,
            samples: s.to_vec(),
            variance: population_variance(s),
        })
        .collect();
    ChunkSet {
        chunks,
        pad: padded - n,
    }
}

/// Exact inverse of [`chunk`]: concatenate in index order and drop padding.
pub fn dechunk(set: &ChunkSet, dims: (usize, usize, usize)) -> Result<CoefficientCube> {
    let (t, h, w) = dims;
    let n = t * h * w;
    let total: usize = set.chunks.iter().map(|c| c.samples.len()).sum();
    if total != n + set.pad {
        return Err(Error::LengthMismatch(format!(
            "chunks hold {total} samples, dims imply {n} plus {} pad",
            set.pad
        )));
    }
    let mut coeffs = Vec::with_capacity(total);
    for c in &set.chunks {
        coeffs.extend_from_slice(&c.samples);
    }
    coeffs.truncate(n);
    Ok(CoefficientCube { dims, coeffs })
}

/// In-place fast Walsh-Hadamard transform (natural order), unnormalized.
fn fwht(block: &mut [f64]) {
    let n = block.len();
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = block[j];
                let b = block[j + h];
                block[j] = a + b;
                block[j + h] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

/// Multiply the payload by the normalized Walsh-Hadamard matrix
/// H/sqrt(order), applied to strided sample groups: group `j` collects the
/// samples at `j, j + stride, ..., j + (order-1)*stride` where
/// `stride = padded_len / order`. Each group therefore spans the whole
/// packet, so every output sample mixes `order` widely separated inputs —
/// nearby samples share a chunk (and its variance and correlation), and
/// mixing only those would concentrate rather than spread energy.
/// Self-inverse.
pub fn whiten(samples: &[f64], order: usize) -> Result<WhitenedPayload> {
    if order == 0 || !order.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "hadamard order {order} is not a power of two"
        )));
    }
    let padded = samples.len().div_ceil(order) * order;
    let mut out = samples.to_vec();
    out.resize(padded, 0.0);
    let stride = padded / order;
    let scale = 1.0 / (order as f64).sqrt();
    let mut group = vec![0.0; order];
    for j in 0..stride {
        for (i, g) in group.iter_mut().enumerate() {
            *g = out[j + i * stride];
        }
        fwht(&mut group);
        for (i, &g) in group.iter().enumerate() {
            out[j + i * stride] = g * scale;
        }
    }
    Ok(WhitenedPayload {
        samples: out,
        hadamard_order: order,
        pad: padded - samples.len(),
    })
}

/// Inverse whitening (same matrix); recorded padding is removed.
pub fn unwhiten(payload: &WhitenedPayload) -> Vec<f64> {
    let inv = whiten(&payload.samples, payload.hadamard_order).expect("order validated on build");
    let mut out = inv.samples;
    out.truncate(payload.samples.len() - payload.pad);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn energy(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }

    fn random_gop(t: usize, h: usize, w: usize, seed: u64) -> Gop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..t)
            .map(|_| {
                Frame::new(
                    w,
                    h,
                    (0..w * h).map(|_| rng.gen_range(0.0..255.0)).collect(),
                )
            })
            .collect();
        Gop { frames }
    }

    /// Brute-force orthonormal 3D DCT-II from the textbook triple-sum
    /// definition. Independent of the separable implementation.
    fn dct3_reference(gop: &Gop) -> Vec<f64> {
        let (t, h, w) = gop.dims();
        let mut x = Vec::new();
        for f in &gop.frames {
            x.extend_from_slice(&f.pixels);
        }
        let s = |k: usize, n: usize| {
            if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            }
        };
        let pi = std::f64::consts::PI;
        let mut out = vec![0.0; t * h * w];
        for kt in 0..t {
            for ky in 0..h {
                for kx in 0..w {
                    let mut acc = 0.0;
                    for it in 0..t {
                        for iy in 0..h {
                            for ix in 0..w {
                                acc += x[(it * h + iy) * w + ix]
                                    * (pi * (2 * it + 1) as f64 * kt as f64 / (2.0 * t as f64)).cos()
                                    * (pi * (2 * iy + 1) as f64 * ky as f64 / (2.0 * h as f64)).cos()
                                    * (pi * (2 * ix + 1) as f64 * kx as f64 / (2.0 * w as f64)).cos();
                            }
                        }
                    }
                    out[(kt * h + ky) * w + kx] = acc * s(kt, t) * s(ky, h) * s(kx, w);
                }
            }
        }
        out
    }

    #[test]
    fn dct3_constant_is_dc_only() {
        let (t, h, w) = (4, 3, 5);
        let v = 17.5;
        let gop = Gop {
            frames: vec![Frame::constant(w, h, v); t],
        };
        let cube = dct3(&gop);
        let expect = v * ((t * h * w) as f64).sqrt();
        assert!((cube.coeffs[0] - expect).abs() < 1e-9);
        assert!(cube.coeffs[1..].iter().all(|c| c.abs() < 1e-9));

        // inverse of the DC-only case
        let back = idct3(&cube);
        for f in &back.frames {
            assert!(f.pixels.iter().all(|&p| (p - v).abs() < 1e-9));
        }
    }

    #[test]
    fn dct3_matches_brute_force_definition() {
        let gop = random_gop(4, 4, 4, 11);
        let cube = dct3(&gop);
        let reference = dct3_reference(&gop);
        for (a, b) in cube.coeffs.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn dct3_parseval_and_round_trip() {
        let gop = random_gop(8, 16, 24, 3);
        let cube = dct3(&gop);
        let pe: f64 = gop.frames.iter().map(|f| energy(&f.pixels)).sum();
        let ce = energy(&cube.coeffs);
        assert!((pe - ce).abs() / pe < 1e-6);

        let back = idct3(&cube);
        for (f, g) in gop.frames.iter().zip(&back.frames) {
            for (a, b) in f.pixels.iter().zip(&g.pixels) {
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn idct3_zero_cube() {
        let cube = CoefficientCube {
            dims: (2, 2, 2),
            coeffs: vec![0.0; 8],
        };
        let gop = idct3(&cube);
        assert!(gop.frames.iter().all(|f| f.pixels.iter().all(|&p| p == 0.0)));
    }

    #[test]
    fn chunk_counts_and_padding() {
        let cube = CoefficientCube {
            dims: (1, 8, 8),
            coeffs: (0..64).map(|i| i as f64).collect(),
        };
        let set = chunk(&cube, 4);
        assert_eq!(set.chunks.len(), 4);
        assert!(set.chunks.iter().all(|c| c.samples.len() == 16));
        assert_eq!(set.pad, 0);

        let cube = CoefficientCube {
            dims: (1, 2, 5),
            coeffs: (0..10).map(|i| i as f64).collect(),
        };
        let set = chunk(&cube, 4);
        assert_eq!(set.pad, 2);
        assert!(set.chunks.iter().all(|c| c.samples.len() == 3));
        assert_eq!(dechunk(&set, (1, 2, 5)).unwrap(), cube);
    }

    #[test]
    fn chunk_variance_is_population() {
        let cube = CoefficientCube {
            dims: (1, 1, 4),
            coeffs: vec![1.0, -1.0, 1.0, -1.0],
        };
        let set = chunk(&cube, 1);
        assert!((set.chunks[0].variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dechunk_inverts_chunk() {
        let cube = CoefficientCube {
            dims: (2, 3, 7),
            coeffs: (0..42).map(|i| (i as f64).sin()).collect(),
        };
        for k in [1, 2, 5, 8] {
            let set = chunk(&cube, k);
            assert_eq!(dechunk(&set, cube.dims).unwrap(), cube);
        }
    }

    #[test]
    fn dechunk_rejects_inconsistent_lengths() {
        let cube = CoefficientCube {
            dims: (1, 2, 2),
            coeffs: vec![1.0; 4],
        };
        let set = chunk(&cube, 2);
        assert!(dechunk(&set, (1, 2, 3)).is_err());
    }

    #[test]
    fn whiten_first_column() {
        let w = whiten(&[1.0, 0.0], 2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w.samples[0] - r).abs() < 1e-12);
        assert!((w.samples[1] - r).abs() < 1e-12);
    }

    #[test]
    fn whiten_is_involution_and_energy_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let w = whiten(&x, 64).unwrap();
        // orthonormal: total energy preserved
        assert!((energy(&x) - energy(&w.samples)).abs() < 1e-9 * energy(&x));
        let back = unwhiten(&w);
        assert_eq!(back.len(), x.len());
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn whiten_rejects_non_power_of_two() {
        assert!(whiten(&[1.0], 3).is_err());
        assert!(whiten(&[1.0], 0).is_err());
    }

    #[test]
    fn unwhiten_zero() {
        let w = whiten(&[0.0; 16], 8).unwrap();
        assert!(unwhiten(&w).iter().all(|&v| v == 0.0));
    }
}
