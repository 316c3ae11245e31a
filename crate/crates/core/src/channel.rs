//! Channel impairments: multipath FIR, carrier frequency offset, phase
//! noise and AWGN, plus pilot-based SNR measurement.
//!
//! The noise power is tied to the measured power of the burst actually
//! entering the channel (preamble included), so the configured SNR and the
//! SNR used in theory comparisons refer to the same quantity: power per
//! complex sample.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::power::NoiseEstimate;
use crate::{Error, Result};

/// SNR estimates are capped here (linear 1e6).
pub const SNR_CAP_DB: f64 = 60.0;
/// Minimum pilot observations for a usable noise estimate.
pub const MIN_PILOT_OBS: usize = 8;

#[derive(Debug, Clone)]
pub struct ChannelParams {
    /// Per-complex-sample SNR in dB; `None` disables noise entirely.
    pub snr_db: Option<f64>,
    /// Multipath FIR taps; `[1]` is the flat channel.
    pub taps: Vec<Complex64>,
    pub cfo_hz: f64,
    /// Std-dev of the per-sample phase random walk, radians.
    pub phase_noise_std: f64,
    pub seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            snr_db: None,
            taps: vec![Complex64::new(1.0, 0.0)],
            cfo_hz: 0.0,
            phase_noise_std: 0.0,
            seed: 0,
        }
    }
}

impl ChannelParams {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        ChannelParams {
            snr_db: Some(snr_db),
            ..Default::default()
        }
        .with_seed(seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn gamma(&self) -> Option<f64> {
        self.snr_db.map(|db| 10f64.powf(db / 10.0))
    }
}

/// Draw block-fading Rayleigh taps: i.i.d. circular Gaussian, normalized to
/// unit total energy so the configured SNR is preserved on average.
pub fn rayleigh_taps(num_taps: usize, seed: u64) -> Vec<Complex64> {
    assert!(num_taps >= 1);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5261796c65696768);
    let mut taps: Vec<Complex64> = (0..num_taps)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    let energy: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
    let s = 1.0 / energy.sqrt();
    for t in &mut taps {
        *t *= s;
    }
    taps
}

/// y = phase_rotate(FIR(x)) + w. Output length is `input + taps - 1`; the
/// noise realization is fully determined by `params.seed`.
pub fn apply_channel(
    samples: &[Complex64],
    params: &ChannelParams,
    sample_rate: f64,
) -> Result<Vec<Complex64>> {
    if params.taps.is_empty() {
        return Err(Error::InvalidParameter("channel taps must be non-empty".into()));
    }
    if let Some(g) = params.gamma() {
        if g <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "non-positive linear SNR {g}"
            )));
        }
    }

    // multipath FIR
    let nt = params.taps.len();
    let mut out = vec![Complex64::default(); samples.len() + nt - 1];
    for (i, &x) in samples.iter().enumerate() {
        for (j, &t) in params.taps.iter().enumerate() {
            out[i + j] += x * t;
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);

    // CFO plus phase-noise random walk
    if params.cfo_hz != 0.0 || params.phase_noise_std > 0.0 {
        let w = std::f64::consts::TAU * params.cfo_hz / sample_rate;
        let mut walk = 0.0;
        for (n, v) in out.iter_mut().enumerate() {
            if params.phase_noise_std > 0.0 {
                let step: f64 = rng.sample(StandardNormal);
                walk += params.phase_noise_std * step;
            }
            *v *= Complex64::from_polar(1.0, w * n as f64 + walk);
        }
    }

    // AWGN scaled to the measured signal power
    if let Some(gamma) = params.gamma() {
        let signal_power =
            out.iter().map(|v| v.norm_sqr()).sum::<f64>() / out.len() as f64;
        let sigma = (signal_power / gamma / 2.0).sqrt();
        for v in &mut out {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(out)
}

/// Pilot-residual noise estimate: sigma^2 = mean |rx - H*known|^2, gamma =
/// received signal power over sigma^2, capped at 60 dB. Refuses to estimate
/// from fewer than [`MIN_PILOT_OBS`] observations.
pub fn measure_snr(
    rx_pilots: &[Complex64],
    known_pilots: &[Complex64],
    channel_gains: &[Complex64],
) -> Result<NoiseEstimate> {
    if rx_pilots.len() != known_pilots.len() || rx_pilots.len() != channel_gains.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rx pilots, {} known, {} gains",
            rx_pilots.len(),
            known_pilots.len(),
            channel_gains.len()
        )));
    }
    if rx_pilots.len() < MIN_PILOT_OBS {
        return Err(Error::TooFewPilots(rx_pilots.len(), MIN_PILOT_OBS));
    }
    let n = rx_pilots.len() as f64;
    let mut sigma_sq = 0.0;
    let mut signal = 0.0;
    for ((&rx, &known), &h) in rx_pilots.iter().zip(known_pilots).zip(channel_gains) {
        let expected = h * known;
        sigma_sq += (rx - expected).norm_sqr();
        signal += expected.norm_sqr();
    }
    sigma_sq /= n;
    signal /= n;
    let cap = 10f64.powf(SNR_CAP_DB / 10.0);
    let gamma = if sigma_sq > 0.0 {
        (signal / sigma_sq).min(cap)
    } else {
        cap
    };
    Ok(NoiseEstimate { sigma_sq, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(1.0, 0.01 * i as f64))
            .collect()
    }

    #[test]
    fn identity_channel() {
        let x = tone(256);
        let y = apply_channel(&x, &ChannelParams::default(), 20e6).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_db_noise_power() {
        let x = tone(200_000);
        let params = ChannelParams::awgn(0.0, 1);
        let y = apply_channel(&x, &params, 20e6).unwrap();
        let noise_power: f64 = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / x.len() as f64;
        // at 0 dB noise power equals signal power (= 1 for a unit tone)
        assert!((noise_power - 1.0).abs() < 0.02, "{noise_power}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x = tone(1000);
        let params = ChannelParams {
            snr_db: Some(10.0),
            cfo_hz: 1234.0,
            phase_noise_std: 0.001,
            ..Default::default()
        }
        .with_seed(77);
        let a = apply_channel(&x, &params, 20e6).unwrap();
        let b = apply_channel(&x, &params, 20e6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multipath_length_and_linearity() {
        let x = tone(64);
        let params = ChannelParams {
            taps: vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)],
            ..Default::default()
        };
        let y = apply_channel(&x, &params, 20e6).unwrap();
        assert_eq!(y.len(), 65);
        assert_eq!(y[0], x[0]);
        assert!((y[1] - (x[1] + x[0] * 0.5)).norm() < 1e-12);
    }

    #[test]
    fn cfo_rotates() {
        let x = vec![Complex64::new(1.0, 0.0); 16];
        let params = ChannelParams {
            cfo_hz: 1e6,
            ..Default::default()
        };
        let y = apply_channel(&x, &params, 20e6).unwrap();
        let w = std::f64::consts::TAU * 1e6 / 20e6;
        for (n, v) in y.iter().enumerate() {
            let expect = Complex64::from_polar(1.0, w * n as f64);
            assert!((v - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn awgn_moments_and_independence() {
        let n = 1_000_000;
        let x = tone(n);
        let params = ChannelParams::awgn(3.0, 5);
        let y = apply_channel(&x, &params, 20e6).unwrap();
        let noise: Vec<Complex64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();

        let mean = noise.iter().sum::<Complex64>() / n as f64;
        let var = noise.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        let expect_var = 10f64.powf(-0.3); // signal power 1 at 3 dB
        let sigma = expect_var.sqrt();
        assert!(mean.norm() < 3.0 * sigma / (n as f64).sqrt() * 2.0, "{mean}");
        assert!((var - expect_var).abs() / expect_var < 0.02);

        // correlation with the signal
        let corr = noise
            .iter()
            .zip(&x)
            .map(|(w, s)| w * s.conj())
            .sum::<Complex64>()
            / n as f64;
        assert!(corr.norm() < 1e-2);
    }

    #[test]
    fn rayleigh_taps_unit_energy() {
        let taps = rayleigh_taps(4, 9);
        let e: f64 = taps.iter().map(|t| t.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-12);
        assert_eq!(taps, rayleigh_taps(4, 9));
    }

    #[test]
    fn measure_snr_cases() {
        let ones = vec![Complex64::new(1.0, 0.0); 16];
        // noiseless, perfect H -> capped at 60 dB
        let est = measure_snr(&ones, &ones, &ones).unwrap();
        assert!((10.0 * est.gamma.log10() - 60.0).abs() < 1e-9);

        // refusal below 8 observations
        assert!(matches!(
            measure_snr(&ones[..4], &ones[..4], &ones[..4]),
            Err(Error::TooFewPilots(4, 8))
        ));
    }

    #[test]
    fn measure_snr_tracks_injected_awgn() {
        let n = 10_000;
        let known = vec![Complex64::new(1.0, 0.0); n];
        let h = vec![Complex64::new(1.0, 0.0); n];
        let params = ChannelParams::awgn(10.0, 3);
        let rx = apply_channel(&known, &params, 20e6).unwrap();
        let est = measure_snr(&rx, &known, &h).unwrap();
        let est_db = 10.0 * est.gamma.log10();
        assert!((est_db - 10.0).abs() < 0.1, "estimate {est_db} dB");
    }
}
