//! Receiver front end: Schmidl & Cox frame detection, CFO estimation and
//! correction, long-training channel estimation, equalization with pilot
//! phase tracking, and payload extraction.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::ofdm::{self, IqPayload, OfdmConfig, PREAMBLE_LEN, SHORT_TRAINING_LEN};
use crate::power::NoiseEstimate;
use crate::{Error, Result};

/// Short-training repetition period driving the timing metric.
const METRIC_LAG: usize = 16;
/// Minimum consecutive above-threshold samples to accept a plateau.
// the genuine plateau spans ~128 samples; requiring a long run rejects
// short noise excursions above the threshold at low SNR
const MIN_PLATEAU: usize = 32;
// a run may dip below threshold for up to this many samples without closing
const PLATEAU_GAP: usize = 16;
// runs are closed once they reach the short-training span
const MAX_PLATEAU: usize = 160;
// minimum normalized long-training correlation to accept a detection
const LTS_QUALITY_FLOOR: f64 = 0.3;
// window for smoothing the per-symbol pilot common-phase track
const PHASE_SMOOTH_SYMBOLS: usize = 33;
/// Long-training cross-correlation search half-width around the coarse
/// timing estimate.
const REFINE_WINDOW: isize = 80;
/// Channel magnitudes below this on a data carrier are treated as erasures.
pub const ERASURE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    pub frame_start: usize,
    pub coarse_metric_peak: f64,
    pub cfo_hz: f64,
    pub detected: bool,
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Per-FFT-bin complex gain; unused bins are zero and flagged below.
    pub h: Vec<Complex64>,
    pub used: Vec<bool>,
    pub noise: NoiseEstimate,
}

/// Equalized symbols plus the data carriers flagged as erased (channel
/// magnitude below [`ERASURE_FLOOR`]).
#[derive(Debug, Clone)]
pub struct EqualizedSymbols {
    pub symbols: Vec<Vec<Complex64>>,
    pub erased_carriers: Vec<i32>,
}

/// Timing metric M(d) = |P(d)|^2 / R(d)^2 with a 16-sample lag, computed
/// incrementally over the whole input.
pub fn timing_metric(samples: &[Complex64]) -> Vec<f64> {
    let l = METRIC_LAG;
    if samples.len() < 2 * l + 1 {
        return Vec::new();
    }
    let n = samples.len() - 2 * l;
    let mut out = Vec::with_capacity(n);
    let mut p = Complex64::default();
    let mut r = 0.0;
    for m in 0..l {
        p += samples[m].conj() * samples[m + l];
        r += samples[m + l].norm_sqr();
    }
    for d in 0..n {
        let m = if r > 1e-30 {
            (p.norm_sqr() / (r * r)).min(1.0)
        } else {
            0.0
        };
        out.push(m);
        p += samples[d + l].conj() * samples[d + 2 * l] - samples[d].conj() * samples[d + l];
        r += samples[d + 2 * l].norm_sqr() - samples[d + l].norm_sqr();
    }
    out
}

/// Raw lag-16 autocorrelation at position `d`, averaged over `span` start
/// offsets. Used for the fine CFO estimate.
fn plateau_autocorr(samples: &[Complex64], d: usize, span: usize) -> Complex64 {
    let l = METRIC_LAG;
    let mut p = Complex64::default();
    let hi = (d + span + l + l).min(samples.len());
    for m in d..hi.saturating_sub(2 * l) {
        p += samples[m].conj() * samples[m + l];
    }
    p
}

/// Rotate `samples` by `-cfo_hz`, with zero phase at `reference` index.
pub fn correct_cfo(
    samples: &[Complex64],
    cfo_hz: f64,
    reference: usize,
    sample_rate: f64,
) -> Vec<Complex64> {
    let w = -std::f64::consts::TAU * cfo_hz / sample_rate;
    samples
        .iter()
        .enumerate()
        .map(|(n, &v)| v * Complex64::from_polar(1.0, w * (n as f64 - reference as f64)))
        .collect()
}

/// Schmidl & Cox detection: threshold the lag-16 timing metric, resolve the
/// plateau by its midpoint, then refine the frame start by cross-correlating
/// the known long training sequence (after local fine CFO correction).
pub fn detect_frame(samples: &[Complex64], cfg: &OfdmConfig, threshold: f64) -> SyncResult {
    let undetected = SyncResult {
        frame_start: 0,
        coarse_metric_peak: 0.0,
        cfo_hz: 0.0,
        detected: false,
    };
    let metric = timing_metric(samples);
    if metric.is_empty() {
        return undetected;
    }
    // moving average so single-sample dips at low SNR don't break the run
    let w = 17.min(metric.len());
    let smoothed: Vec<f64> = (0..metric.len())
        .map(|d| {
            let lo = d.saturating_sub(w / 2);
            let hi = (d + w / 2 + 1).min(metric.len());
            metric[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();

    // first plateau: run of at least MIN_PLATEAU above-threshold samples,
    // tolerating short dips (gap closing) so low-SNR runs are not split
    let mut run: Option<(usize, usize)> = None;
    let mut plateau = None;
    for (d, &m) in smoothed.iter().enumerate() {
        if m > threshold {
            match run {
                None => run = Some((d, d + 1)),
                Some((s, _)) => run = Some((s, d + 1)),
            }
            // the true plateau cannot outlast the short training; cap the
            // run so gap closing never chains into the payload
            if let Some((s, e)) = run {
                if e - s >= MAX_PLATEAU {
                    plateau = Some((s, e));
                    break;
                }
            }
        } else if let Some((s, e)) = run {
            if d - e >= PLATEAU_GAP {
                if e - s >= MIN_PLATEAU {
                    plateau = Some((s, e));
                    break;
                }
                run = None;
            }
        }
    }
    if plateau.is_none() {
        if let Some((s, e)) = run {
            if e - s >= MIN_PLATEAU {
                plateau = Some((s, e));
            }
        }
    }
    let Some((lo, hi)) = plateau else {
        return undetected;
    };
    let peak = metric[lo..hi].iter().cloned().fold(0.0, f64::max);
    // metric-weighted centroid: robust to runs lopsidedly extended by the
    // gap closing at low SNR
    let weight: f64 = smoothed[lo..hi].iter().sum();
    let mid = if weight > 0.0 {
        (smoothed[lo..hi]
            .iter()
            .enumerate()
            .map(|(i, &m)| (lo + i) as f64 * m)
            .sum::<f64>()
            / weight)
            .round() as usize
    } else {
        (lo + hi) / 2
    };
    // the metric plateau spans roughly [start, start + 128]
    let coarse_start = mid.saturating_sub(64);

    // fine CFO from the plateau autocorrelation phase. The lag-16 estimate
    // aliases with period sample_rate/16 = 4 subcarrier spacings; rather
    // than trusting a spectrum-energy test for the integer part (which is
    // unreliable at low SNR), every aliased candidate is tried in the long
    // training refinement below and the best normalized correlation wins.
    let p = plateau_autocorr(samples, lo, hi - lo);
    let fine = p.arg() * cfg.sample_rate / (std::f64::consts::TAU * METRIC_LAG as f64);

    // long-training cross-correlation refinement over timing offset and
    // integer CFO candidates, selected by normalized correlation (a matched
    // position scores ~1 clean and ~0.5 at 0 dB, noise ~1/sqrt(160))
    let lts = ofdm::long_training_time(cfg);
    let lts_nominal = coarse_start as isize + SHORT_TRAINING_LEN as isize + 32;
    let e_lts: f64 = lts.iter().map(|v| v.norm_sqr()).sum();
    let win_lo = lts_nominal.saturating_sub(REFINE_WINDOW).max(0) as usize;
    let win_hi = ((lts_nominal + REFINE_WINDOW) as usize + 64 + lts.len()).min(samples.len());
    let mut best = (f64::MIN, coarse_start, fine);
    for g in (-8..=8i32).step_by(4) {
        let cand_cfo = fine + g as f64 * cfg.subcarrier_spacing();
        let corrected = correct_cfo(&samples[win_lo..win_hi], cand_cfo, 0, cfg.sample_rate);
        for off in -REFINE_WINDOW..=REFINE_WINDOW {
            let d = lts_nominal + off - win_lo as isize;
            if d < 0 || (d as usize) + 64 + lts.len() > corrected.len() {
                continue;
            }
            let d = d as usize;
            let mut c1 = Complex64::default();
            let mut c2 = Complex64::default();
            let mut e1 = 0.0;
            let mut e2 = 0.0;
            for (m, &l) in lts.iter().enumerate() {
                c1 += l.conj() * corrected[d + m];
                c2 += l.conj() * corrected[d + 64 + m];
                e1 += corrected[d + m].norm_sqr();
                e2 += corrected[d + 64 + m].norm_sqr();
            }
            let norm = (e_lts * e1).sqrt() + (e_lts * e2).sqrt();
            let quality = if norm > 0.0 {
                (c1.norm() + c2.norm()) / norm
            } else {
                0.0
            };
            if quality > best.0 {
                best = (
                    quality,
                    (d + win_lo).saturating_sub(SHORT_TRAINING_LEN + 32),
                    cand_cfo,
                );
            }
        }
    }
    let cfo_hz = best.2;

    // validation: a real burst correlates strongly with the known long
    // training even at 0 dB, while a noise-triggered plateau does not
    if best.0 < LTS_QUALITY_FLOOR {
        return SyncResult {
            coarse_metric_peak: peak,
            ..undetected
        };
    }

    SyncResult {
        frame_start: best.1,
        coarse_metric_peak: peak,
        cfo_hz,
        detected: true,
    }
}

/// Integer subcarrier offset left after fine correction. The lag-16 fine
/// estimate aliases in steps of 4 subcarrier spacings, so only multiples of
/// 4 are searched. The metric is the occupied-mask energy of the shifted
/// long-training spectrum, which tolerates residual timing error.
fn integer_bin_offset(corrected: &[Complex64], lts_start: usize, cfg: &OfdmConfig) -> i32 {
    if lts_start + cfg.fft_size > corrected.len() {
        return 0;
    }
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut buf = corrected[lts_start..lts_start + cfg.fft_size].to_vec();
    fft.process(&mut buf);
    let occupied: Vec<i32> = (-26..=26).filter(|&k| k != 0).collect();
    let n = cfg.fft_size as i32;
    let mut best = (f64::MIN, 0i32);
    for g in (-8..=8i32).step_by(4) {
        let mut energy = 0.0;
        for &k in &occupied {
            let shifted = (((k + g) % n) + n) % n;
            energy += buf[shifted as usize].norm_sqr();
        }
        if energy > best.0 {
            best = (energy, g);
        }
    }
    best.1
}

/// Combined CFO estimate: the fine fractional part from the short training
/// (recomputed at the detected start) plus an integer number of subcarrier
/// spacings resolved from the long training spectrum.
pub fn estimate_cfo(samples: &[Complex64], sync: &SyncResult, cfg: &OfdmConfig) -> f64 {
    assert!(sync.detected, "estimate_cfo requires a detected frame");
    let p = plateau_autocorr(samples, sync.frame_start, 128);
    let fine = p.arg() * cfg.sample_rate / (std::f64::consts::TAU * METRIC_LAG as f64);
    let corrected = correct_cfo(samples, fine, sync.frame_start, cfg.sample_rate);
    let lts_start = sync.frame_start + SHORT_TRAINING_LEN + 32;
    let g = integer_bin_offset(&corrected, lts_start, cfg);
    fine + g as f64 * cfg.subcarrier_spacing()
}

/// Estimate the per-carrier channel from the two long training halves
/// (averaged) and the noise power from their half-difference residuals.
///
/// `long_training_rx` must be the CFO-corrected, time-aligned 160-sample
/// long training region (guard + two halves).
pub fn estimate_channel(long_training_rx: &[Complex64], cfg: &OfdmConfig) -> Result<ChannelEstimate> {
    if long_training_rx.len() < 32 + 2 * cfg.fft_size {
        return Err(Error::LengthMismatch(format!(
            "long training region has {} samples, need {}",
            long_training_rx.len(),
            32 + 2 * cfg.fft_size
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let scale = 1.0 / (cfg.fft_size as f64).sqrt();
    let half = |start: usize| {
        let mut buf = long_training_rx[start..start + cfg.fft_size].to_vec();
        fft.process(&mut buf);
        for v in &mut buf {
            *v *= scale;
        }
        buf
    };
    let f1 = half(32);
    let f2 = half(32 + cfg.fft_size);

    let known = ofdm::long_training_bins(cfg);
    let mut h = vec![Complex64::default(); cfg.fft_size];
    let mut used = vec![false; cfg.fft_size];
    let mut sigma_sq = 0.0;
    let mut signal = 0.0;
    let mut count = 0usize;
    for k in -26..=26i32 {
        if k == 0 {
            continue;
        }
        let b = cfg.bin(k);
        let avg = (f1[b] + f2[b]) * 0.5;
        h[b] = avg / known[b];
        used[b] = true;
        sigma_sq += (f1[b] - f2[b]).norm_sqr() * 0.5;
        signal += avg.norm_sqr();
        count += 1;
    }
    sigma_sq /= count as f64;
    signal /= count as f64;
    Ok(ChannelEstimate {
        h,
        used,
        noise: NoiseEstimate::new(sigma_sq, signal),
    })
}

/// CP removal and unitary FFT of every complete payload symbol following the
/// preamble of the detected frame.
pub fn demodulate(
    frame_samples: &[Complex64],
    sync: &SyncResult,
    cfg: &OfdmConfig,
) -> Result<Vec<Vec<Complex64>>> {
    let start = sync.frame_start + PREAMBLE_LEN;
    if start > frame_samples.len() {
        return Err(Error::LengthMismatch(
            "input shorter than preamble after frame start".into(),
        ));
    }
    let sym_len = cfg.symbol_len();
    let count = (frame_samples.len() - start) / sym_len;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let scale = 1.0 / (cfg.fft_size as f64).sqrt();
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let body = start + s * sym_len + cfg.cp_len;
        let mut buf = frame_samples[body..body + cfg.fft_size].to_vec();
        fft.process(&mut buf);
        for v in &mut buf {
            *v *= scale;
        }
        out.push(buf);
    }
    Ok(out)
}

/// Per-carrier division by the channel estimate, then per-symbol common
/// phase correction from the least-squares pilot phase.
pub fn equalize(
    symbols: &[Vec<Complex64>],
    est: &ChannelEstimate,
    cfg: &OfdmConfig,
) -> EqualizedSymbols {
    let mut erased = Vec::new();
    for &k in &cfg.data_carriers {
        if est.h[cfg.bin(k)].norm() < ERASURE_FLOOR {
            erased.push(k);
        }
    }
    let mut symbols: Vec<Vec<Complex64>> = symbols
        .iter()
        .map(|sym| {
            let mut eq = vec![Complex64::default(); cfg.fft_size];
            for b in 0..cfg.fft_size {
                if est.used[b] && est.h[b].norm() >= ERASURE_FLOOR {
                    eq[b] = sym[b] / est.h[b];
                }
            }
            eq
        })
        .collect();

    // Common phase error per symbol from the pilots. The raw 4-pilot
    // estimate is noisy enough to dominate the error on strong carriers,
    // but the true common phase (residual CFO, slow phase noise) drifts
    // smoothly, so the unwrapped per-symbol phases are smoothed with a
    // centered moving average before being applied.
    let mut phases = Vec::with_capacity(symbols.len());
    let mut prev = 0.0f64;
    for eq in &symbols {
        let mut acc = Complex64::default();
        for (&k, &p) in cfg.pilot_carriers.iter().zip(&cfg.pilot_values) {
            acc += eq[cfg.bin(k)] * p.conj();
        }
        let raw = if acc.norm() > 0.0 { acc.arg() } else { prev };
        // unwrap onto the branch nearest the previous symbol
        let mut th = raw;
        while th - prev > std::f64::consts::PI {
            th -= std::f64::consts::TAU;
        }
        while prev - th > std::f64::consts::PI {
            th += std::f64::consts::TAU;
        }
        phases.push(th);
        prev = th;
    }
    // linear fit (residual CFO is a linear ramp), then a moving average of
    // the residuals for any slow walk on top of it
    let n = phases.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    if phases.len() >= 2 {
        let mean_i = (n - 1.0) / 2.0;
        let mean_th = phases.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &th) in phases.iter().enumerate() {
            let di = i as f64 - mean_i;
            num += di * (th - mean_th);
            den += di * di;
        }
        b = if den > 0.0 { num / den } else { 0.0 };
        a = mean_th - b * mean_i;
    } else if phases.len() == 1 {
        a = phases[0];
    }
    let residual: Vec<f64> = phases
        .iter()
        .enumerate()
        .map(|(i, &th)| th - (a + b * i as f64))
        .collect();
    let half = PHASE_SMOOTH_SYMBOLS / 2;
    for (i, eq) in symbols.iter_mut().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(residual.len());
        let smooth = residual[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let rot = Complex64::from_polar(1.0, -(a + b * i as f64 + smooth));
        for v in eq.iter_mut() {
            *v *= rot;
        }
    }
    let symbols = symbols;
    EqualizedSymbols {
        symbols,
        erased_carriers: erased,
    }
}

/// Extract data-carrier values in allocator order and trim to the payload
/// length recorded in the metadata.
pub fn serialize(
    symbols: &[Vec<Complex64>],
    cfg: &OfdmConfig,
    payload_len: usize,
    padded: bool,
) -> Result<IqPayload> {
    let capacity = symbols.len() * cfg.data_carriers.len();
    if payload_len > capacity {
        return Err(Error::MetaInconsistent(format!(
            "metadata declares {payload_len} payload values, symbols carry {capacity}"
        )));
    }
    let mut out = Vec::with_capacity(payload_len);
    'outer: for sym in symbols {
        for &k in &cfg.data_carriers {
            if out.len() == payload_len {
                break 'outer;
            }
            out.push(sym[cfg.bin(k)]);
        }
    }
    Ok(IqPayload {
        symbols: out,
        padded,
    })
}
