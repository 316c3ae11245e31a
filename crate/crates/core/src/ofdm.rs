//! OFDM transmit path: I/Q mapping of real samples, 802.11a-style preamble,
//! carrier allocation with fixed pilots, unitary IFFT and cyclic prefix.
//!
//! Numerology follows the classic Wi-Fi layout: 64-point FFT, 16-sample CP,
//! 48 data carriers, 4 pilots at logical indices {-21, -7, +7, +21}, DC and
//! guard bands unused. Pilot polarity is fixed across symbols.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

pub const FFT_SIZE: usize = 64;
pub const CP_LEN: usize = 16;
pub const SHORT_TRAINING_LEN: usize = 160;
pub const LONG_TRAINING_LEN: usize = 160;
pub const PREAMBLE_LEN: usize = SHORT_TRAINING_LEN + LONG_TRAINING_LEN;
pub const SYMBOL_LEN: usize = FFT_SIZE + CP_LEN;

/// OFDM numerology and pilot definition.
#[derive(Debug, Clone)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub cp_len: usize,
    /// Logical subcarrier indices carrying payload, ascending.
    pub data_carriers: Vec<i32>,
    /// Logical subcarrier indices carrying pilots.
    pub pilot_carriers: Vec<i32>,
    /// Fixed BPSK pilot values, aligned with `pilot_carriers`.
    pub pilot_values: Vec<Complex64>,
    pub sample_rate: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        let pilots = vec![-21, -7, 7, 21];
        let data: Vec<i32> = (-26..=26)
            .filter(|&k| k != 0 && !pilots.contains(&k))
            .collect();
        debug_assert_eq!(data.len(), 48);
        OfdmConfig {
            fft_size: FFT_SIZE,
            cp_len: CP_LEN,
            data_carriers: data,
            pilot_carriers: pilots,
            pilot_values: vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(-1.0, 0.0),
            ],
            sample_rate: 20e6,
        }
    }
}

impl OfdmConfig {
    pub fn subcarrier_spacing(&self) -> f64 {
        self.sample_rate / self.fft_size as f64
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    /// Map a logical carrier index (-N/2..N/2) to an FFT bin.
    pub fn bin(&self, k: i32) -> usize {
        ((k + self.fft_size as i32) % self.fft_size as i32) as usize
    }
}

/// Complex payload symbols before carrier allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct IqPayload {
    pub symbols: Vec<Complex64>,
    /// One trailing real zero was appended to make the sample count even.
    pub padded: bool,
}

/// Time-domain transmit burst with its layout.
#[derive(Debug, Clone)]
pub struct OfdmFrame {
    pub samples: Vec<Complex64>,
    pub short_training_start: usize,
    pub long_training_start: usize,
    pub payload_start: usize,
    pub num_symbols: usize,
}

/// Pair consecutive real samples into complex I/Q values: (a, b) -> a + i*b.
pub fn map_iq(samples: &[f64]) -> IqPayload {
    let padded = samples.len() % 2 == 1;
    let symbols = samples
        .chunks(2)
        .map(|p| Complex64::new(p[0], if p.len() == 2 { p[1] } else { 0.0 }))
        .collect();
    IqPayload { symbols, padded }
}

/// Exact inverse of [`map_iq`], removing the recorded pad.
pub fn unmap_iq(payload: &IqPayload) -> Vec<f64> {
    let mut out = Vec::with_capacity(payload.symbols.len() * 2);
    for s in &payload.symbols {
        out.push(s.re);
        out.push(s.im);
    }
    if payload.padded {
        out.pop();
    }
    out
}

fn unitary_ifft(bins: &[Complex64], fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let n = bins.len();
    let mut buf = bins.to_vec();
    fft.process(&mut buf);
    let s = 1.0 / (n as f64).sqrt();
    for v in &mut buf {
        *v *= s;
    }
    buf
}

/// Frequency-domain short-training seed: sparse QPSK on every 4th carrier,
/// which makes the time-domain signal periodic with 16 samples.
fn short_training_bins(cfg: &OfdmConfig) -> Vec<Complex64> {
    let s = (13.0f64 / 6.0).sqrt();
    let p = Complex64::new(s, s);
    let m = Complex64::new(-s, -s);
    let seed: [(i32, Complex64); 12] = [
        (-24, p),
        (-20, m),
        (-16, p),
        (-12, m),
        (-8, m),
        (-4, p),
        (4, m),
        (8, m),
        (12, p),
        (16, p),
        (20, p),
        (24, p),
    ];
    let mut bins = vec![Complex64::default(); cfg.fft_size];
    for (k, v) in seed {
        bins[cfg.bin(k)] = v;
    }
    bins
}

/// Known BPSK long-training sequence on the 52 occupied carriers.
pub fn long_training_bins(cfg: &OfdmConfig) -> Vec<Complex64> {
    const NEG: [f64; 26] = [
        1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0,
        1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0,
    ];
    const POS: [f64; 26] = [
        1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0,
        -1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0,
    ];
    let mut bins = vec![Complex64::default(); cfg.fft_size];
    for (i, &v) in NEG.iter().enumerate() {
        bins[cfg.bin(i as i32 - 26)] = Complex64::new(v, 0.0);
    }
    for (i, &v) in POS.iter().enumerate() {
        bins[cfg.bin(i as i32 + 1)] = Complex64::new(v, 0.0);
    }
    bins
}

/// One period (64 samples) of the time-domain long training symbol.
pub fn long_training_time(cfg: &OfdmConfig) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    unitary_ifft(&long_training_bins(cfg), &fft)
}

/// Build the 320-sample preamble: 10 x 16-sample short training repetitions
/// followed by a 32-sample cyclic guard and two 64-sample long training
/// copies.
pub fn build_preamble(cfg: &OfdmConfig) -> Vec<Complex64> {
    let fft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    let sts64 = unitary_ifft(&short_training_bins(cfg), &fft);
    let lts64 = unitary_ifft(&long_training_bins(cfg), &fft);

    let mut out = Vec::with_capacity(PREAMBLE_LEN);
    for n in 0..SHORT_TRAINING_LEN {
        out.push(sts64[n % cfg.fft_size]);
    }
    out.extend_from_slice(&lts64[cfg.fft_size - 32..]);
    out.extend_from_slice(&lts64);
    out.extend_from_slice(&lts64);
    debug_assert_eq!(out.len(), PREAMBLE_LEN);
    out
}

/// Fill OFDM symbols: header bits BPSK-mapped on the data carriers of the
/// leading symbols, then payload values in carrier order, pilots at their
/// fixed values on every symbol, unused carriers zero. Unfilled data slots
/// in the final header symbol carry +1; unfilled payload slots are zero.
pub fn allocate_carriers(
    payload: &IqPayload,
    header_bits: &[u8],
    cfg: &OfdmConfig,
) -> Vec<Vec<Complex64>> {
    let nd = cfg.data_carriers.len();
    let header_syms = header_bits.len().div_ceil(nd);
    let payload_syms = payload.symbols.len().div_ceil(nd);
    let mut out = Vec::with_capacity(header_syms + payload_syms);

    let make_symbol = |values: &mut dyn Iterator<Item = Complex64>| {
        let mut bins = vec![Complex64::default(); cfg.fft_size];
        for (&k, &p) in cfg.pilot_carriers.iter().zip(&cfg.pilot_values) {
            bins[cfg.bin(k)] = p;
        }
        for &k in &cfg.data_carriers {
            bins[cfg.bin(k)] = values.next().unwrap();
        }
        bins
    };

    let mut header_iter = header_bits
        .iter()
        .map(|&b| Complex64::new(if b != 0 { 1.0 } else { -1.0 }, 0.0))
        .chain(std::iter::repeat(Complex64::new(1.0, 0.0)));
    for _ in 0..header_syms {
        out.push(make_symbol(&mut header_iter));
    }

    let mut payload_iter = payload
        .symbols
        .iter()
        .copied()
        .chain(std::iter::repeat(Complex64::default()));
    for _ in 0..payload_syms {
        out.push(make_symbol(&mut payload_iter));
    }
    out
}

/// Unitary IFFT per symbol, cyclic prefix insertion, preamble prepended.
pub fn modulate(freq_symbols: &[Vec<Complex64>], cfg: &OfdmConfig) -> OfdmFrame {
    let fft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    let mut samples = build_preamble(cfg);
    let payload_start = samples.len();
    for bins in freq_symbols {
        assert_eq!(bins.len(), cfg.fft_size);
        let time = unitary_ifft(bins, &fft);
        samples.extend_from_slice(&time[cfg.fft_size - cfg.cp_len..]);
        samples.extend_from_slice(&time);
    }
    OfdmFrame {
        samples,
        short_training_start: 0,
        long_training_start: SHORT_TRAINING_LEN,
        payload_start,
        num_symbols: freq_symbols.len(),
    }
}

/// Optional hard amplitude clipper modeling D/A range limits. Disabled by
/// passing `None` from the caller; preserves phase when active.
pub fn clip(samples: &mut [Complex64], amplitude: f64) {
    for s in samples.iter_mut() {
        let mag = s.norm();
        if mag > amplitude {
            *s *= amplitude / mag;
        }
    }
}

/// Dump a burst as interleaved little-endian f32 (I,Q,I,Q,...).
pub fn write_iq_trace(path: impl AsRef<Path>, samples: &[Complex64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(&out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Read an interleaved f32 I/Q trace.
pub fn read_iq_trace(path: impl AsRef<Path>) -> Result<Vec<Complex64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    if bytes.len() % 8 != 0 {
        return Err(Error::LengthMismatch(format!(
            "IQ trace {} has {} bytes, not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64;
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64;
            Complex64::new(re, im)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_iq_cases() {
        let p = map_iq(&[0.5, -0.25]);
        assert_eq!(p.symbols, vec![Complex64::new(0.5, -0.25)]);
        assert!(!p.padded);

        assert!(map_iq(&[]).symbols.is_empty());

        let p = map_iq(&[1.0, 2.0, 3.0]);
        assert_eq!(
            p.symbols,
            vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 0.0)]
        );
        assert!(p.padded);
    }

    #[test]
    fn unmap_round_trip() {
        for n in [0usize, 1, 2, 7, 8] {
            let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 - 1.0).collect();
            assert_eq!(unmap_iq(&map_iq(&x)), x);
        }
    }

    #[test]
    fn preamble_structure() {
        let cfg = OfdmConfig::default();
        let pre = build_preamble(&cfg);
        assert_eq!(pre.len(), 320);

        // short training: exact period-16 repetition
        let mut p = Complex64::default();
        let mut r = 0.0;
        for m in 0..SHORT_TRAINING_LEN - 16 {
            p += pre[m].conj() * pre[m + 16];
            r += pre[m + 16].norm_sqr();
        }
        assert!((p.norm() / r - 1.0).abs() < 1e-9);

        // long training halves identical
        for m in 0..64 {
            let a = pre[160 + 32 + m];
            let b = pre[160 + 32 + 64 + m];
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn allocator_symbol_counts_and_pilots() {
        let cfg = OfdmConfig::default();
        let payload = IqPayload {
            symbols: vec![Complex64::new(0.3, -0.1); 48],
            padded: false,
        };
        let syms = allocate_carriers(&payload, &[], &cfg);
        assert_eq!(syms.len(), 1);

        let payload49 = IqPayload {
            symbols: vec![Complex64::new(0.3, -0.1); 49],
            padded: false,
        };
        let syms = allocate_carriers(&payload49, &[], &cfg);
        assert_eq!(syms.len(), 2);
        // 47 zero-padded data slots in the final symbol
        let zeros = cfg
            .data_carriers
            .iter()
            .filter(|&&k| syms[1][cfg.bin(k)] == Complex64::default())
            .count();
        assert_eq!(zeros, 47);

        for sym in &syms {
            for (&k, &v) in cfg.pilot_carriers.iter().zip(&cfg.pilot_values) {
                assert_eq!(sym[cfg.bin(k)], v);
            }
            assert_eq!(sym[cfg.bin(0)], Complex64::default());
        }
    }

    #[test]
    fn header_bits_are_bpsk_on_leading_symbols() {
        let cfg = OfdmConfig::default();
        let payload = IqPayload {
            symbols: vec![],
            padded: false,
        };
        let bits = [1u8, 0, 1, 1];
        let syms = allocate_carriers(&payload, &bits, &cfg);
        assert_eq!(syms.len(), 1);
        let vals: Vec<f64> = cfg.data_carriers[..4]
            .iter()
            .map(|&k| syms[0][cfg.bin(k)].re)
            .collect();
        assert_eq!(vals, vec![1.0, -1.0, 1.0, 1.0]);
        // pad slots carry +1
        assert_eq!(syms[0][cfg.bin(cfg.data_carriers[4])].re, 1.0);
    }

    #[test]
    fn modulate_impulse_and_cp() {
        let cfg = OfdmConfig::default();
        let k = 3usize;
        let mut bins = vec![Complex64::default(); cfg.fft_size];
        bins[k] = Complex64::new(1.0, 0.0);
        let frame = modulate(&[bins], &cfg);
        let sym = &frame.samples[frame.payload_start..];
        assert_eq!(sym.len(), 80);
        // body is a complex exponential of frequency k
        let body = &sym[16..];
        let scale = 1.0 / 8.0; // 1/sqrt(64)
        for (n, v) in body.iter().enumerate() {
            let expect = Complex64::from_polar(
                scale,
                std::f64::consts::TAU * k as f64 * n as f64 / 64.0,
            );
            assert!((v - expect).norm() < 1e-9);
        }
        // cyclic prefix equals the final 16 samples
        for i in 0..16 {
            assert_eq!(sym[i], sym[64 + i]);
        }
        // Parseval
        let e: f64 = body.iter().map(|v| v.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_limits_amplitude() {
        let mut s = vec![Complex64::new(3.0, 4.0), Complex64::new(0.1, 0.0)];
        clip(&mut s, 1.0);
        assert!((s[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(s[1], Complex64::new(0.1, 0.0));
    }

    #[test]
    fn iq_trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.iq");
        let samples = vec![Complex64::new(0.5, -1.5), Complex64::new(2.0, 0.25)];
        write_iq_trace(&p, &samples).unwrap();
        let back = read_iq_trace(&p).unwrap();
        assert_eq!(back, samples);
    }
}
