//! Closed-form performance oracles for a unit-variance Gaussian source over
//! an AWGN channel, plus a Monte Carlo check of the analog linear scheme.
//!
//! All functions take the linear channel SNR `gamma` and a source variance
//! `lambda`; distortions are mean squared error per source sample.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Gaussian rate-distortion bound: R(D) = 1/2 log2(lambda / D) bits per
/// sample, zero once D reaches lambda.
pub fn rate_distortion(lambda: f64, d: f64) -> Result<f64> {
    if lambda <= 0.0 || d <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "rate_distortion needs positive lambda and D, got {lambda}, {d}"
        )));
    }
    Ok((0.5 * (lambda / d).log2()).max(0.0))
}

/// AWGN capacity, bits per complex channel use: C = log2(1 + gamma).
pub fn awgn_capacity(gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative linear SNR {gamma}"
        )));
    }
    Ok((1.0 + gamma).log2())
}

/// Distortion floor for any digital scheme sending one real source sample
/// per real channel dimension: inverting R(D) at C/2 bits per real use
/// gives D = lambda / (1 + gamma).
pub fn min_distortion_digital(lambda: f64, gamma: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "non-positive source variance {lambda}"
        )));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative linear SNR {gamma}"
        )));
    }
    Ok(lambda / (1.0 + gamma))
}

/// MMSE distortion of the analog linear scheme x -> g*x + w with the power
/// budget spent on a single unit-length chunk: D = lambda * sigma^2 /
/// (g^2 lambda + sigma^2) = lambda / (1 + gamma). Matches the digital floor,
/// which is what makes uncoded linear transmission attractive.
pub fn analog_distortion(lambda: f64, gamma: f64) -> Result<f64> {
    min_distortion_digital(lambda, gamma)
}

/// Monte Carlo estimate of the analog-scheme distortion: draw x ~ N(0,
/// lambda), send g*x with g^2 lambda = gamma * sigma^2, MMSE-decode, average
/// the squared error. Deterministic in `seed`; sharded so the sample count
/// does not change the stream alignment.
pub fn monte_carlo_analog(lambda: f64, gamma: f64, samples: usize, seed: u64) -> Result<f64> {
    if lambda <= 0.0 || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "monte_carlo_analog needs positive lambda and gamma, got {lambda}, {gamma}"
        )));
    }
    if samples == 0 {
        return Err(Error::EmptyInput("zero Monte Carlo samples".into()));
    }
    let sigma_sq = 1.0;
    let g = (gamma * sigma_sq / lambda).sqrt();
    let coeff = g * lambda / (g * g * lambda + sigma_sq);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = lambda.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let w = sigma_sq.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let xhat = coeff * (g * x + w);
        acc += (x - xhat) * (x - xhat);
    }
    Ok(acc / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_distortion_basics() {
        assert!((rate_distortion(1.0, 0.25).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rate_distortion(1.0, 2.0).unwrap(), 0.0);
        assert!(rate_distortion(0.0, 0.1).is_err());
    }

    #[test]
    fn capacity_basics() {
        assert!((awgn_capacity(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((awgn_capacity(3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(awgn_capacity(-0.1).is_err());
    }

    #[test]
    fn opta_identity() {
        // the analog linear scheme meets the digital floor exactly
        for &gamma in &[0.1, 1.0, 10.0, 1000.0] {
            for &lambda in &[0.5, 1.0, 9.0] {
                let d_dig = min_distortion_digital(lambda, gamma).unwrap();
                let d_ana = analog_distortion(lambda, gamma).unwrap();
                assert!((d_dig - d_ana).abs() < 1e-12);
                assert!((d_dig - lambda / (1.0 + gamma)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rd_capacity_consistency() {
        // at D = lambda/(1+gamma), R(D) equals the capacity of one real use
        let gamma = 7.0;
        let d = min_distortion_digital(1.0, gamma).unwrap();
        let r = rate_distortion(1.0, d).unwrap();
        let c_real = awgn_capacity(gamma).unwrap() / 2.0;
        assert!((r - c_real).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let gamma = 10.0;
        let mse = monte_carlo_analog(1.0, gamma, 1_000_000, 42).unwrap();
        let expect = 1.0 / 11.0;
        assert!(
            (mse - expect).abs() / expect < 0.02,
            "mse {mse} vs {expect}"
        );
    }

    #[test]
    fn monte_carlo_deterministic() {
        let a = monte_carlo_analog(2.0, 5.0, 10_000, 9).unwrap();
        let b = monte_carlo_analog(2.0, 5.0, 10_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distortion_monotone_in_snr() {
        let mut last = f64::MAX;
        for i in 0..20 {
            let gamma = 10f64.powf(i as f64 / 4.0 - 2.0);
            let d = analog_distortion(1.0, gamma).unwrap();
            assert!(d < last);
            last = d;
        }
    }
}
