//! Conventional digital baseline primitives: uniform quantizer, rate-1/3
//! constraint-length-7 convolutional code with hard-decision Viterbi
//! decoding, and Gray-labeled 16-QAM.
//!
//! The convolutional code also protects the in-band metadata header of the
//! pseudo-analog chain. The full digital transmit/receive chain over the
//! OFDM PHY lives in [`crate::link`].

use num_complex::Complex64;

use crate::{Error, Result};

/// Rate-1/3, K=7 feedforward code, generators (octal) 133, 171, 165,
/// zero-terminated with 6 tail bits.
pub const GENERATORS: [u32; 3] = [0o133, 0o171, 0o165];
pub const CONSTRAINT_LEN: usize = 7;
pub const TAIL_BITS: usize = CONSTRAINT_LEN - 1;
const NUM_STATES: usize = 1 << TAIL_BITS;

/// 16-QAM per-axis levels before the 1/sqrt(10) unit-energy normalization.
const QAM_NORM: f64 = 0.316227766016837933; // 1/sqrt(10)

/// Encode with the rate-1/3 code, appending 6 zero tail bits. Input and
/// output are bit vectors (one bit per byte, 0/1).
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 * (bits.len() + TAIL_BITS));
    let mut sr: u32 = 0;
    for &b in bits.iter().chain(std::iter::repeat(&0u8).take(TAIL_BITS)) {
        sr = (sr << 1) | (b as u32 & 1);
        for g in GENERATORS {
            out.push(((sr & g).count_ones() & 1) as u8);
        }
    }
    out
}

/// Hard-decision Viterbi maximum-likelihood decoding. The coded length must
/// be 3 * (message + 6); the traceback ends in the all-zero state.
pub fn viterbi_decode(coded: &[u8]) -> Result<Vec<u8>> {
    if coded.len() % 3 != 0 || coded.len() / 3 < TAIL_BITS {
        return Err(Error::LengthMismatch(format!(
            "coded length {} is not 3*(message+{TAIL_BITS})",
            coded.len()
        )));
    }
    let steps = coded.len() / 3;

    // expected output bits for register value r = (state << 1) | input
    let mut expected = [[0u8; 3]; 2 * NUM_STATES];
    for (r, e) in expected.iter_mut().enumerate() {
        for (gi, g) in GENERATORS.iter().enumerate() {
            e[gi] = ((r as u32 & g).count_ones() & 1) as u8;
        }
    }

    let mut metrics = vec![u32::MAX / 2; NUM_STATES];
    metrics[0] = 0;
    let mut decisions: Vec<u64> = Vec::with_capacity(steps);
    let mut next = vec![0u32; NUM_STATES];
    for step in 0..steps {
        let rx = &coded[3 * step..3 * step + 3];
        let mut bitmap = 0u64;
        for (new_state, slot) in next.iter_mut().enumerate() {
            // predecessors of new_state under input b = new_state & 1
            let b = (new_state & 1) as u32;
            let upper = new_state >> 1;
            let mut best = u32::MAX;
            let mut from_high = false;
            for (idx, &pred) in [upper, upper | (NUM_STATES >> 1)].iter().enumerate() {
                let _ = idx;
                let reg = ((pred << 1) as u32 | b) as usize;
                let e = &expected[reg];
                let bm =
                    (e[0] ^ rx[0]) as u32 + (e[1] ^ rx[1]) as u32 + (e[2] ^ rx[2]) as u32;
                let cand = metrics[pred].saturating_add(bm);
                if cand < best {
                    best = cand;
                    from_high = pred >= NUM_STATES >> 1;
                }
            }
            if from_high {
                bitmap |= 1 << new_state;
            }
            *slot = best;
        }
        metrics.copy_from_slice(&next);
        decisions.push(bitmap);
    }

    // traceback from the zero state (tail-forced)
    let mut state = 0usize;
    let mut bits = vec![0u8; steps];
    for step in (0..steps).rev() {
        bits[step] = (state & 1) as u8;
        let upper = state >> 1;
        state = if decisions[step] >> state & 1 == 1 {
            upper | (NUM_STATES >> 1)
        } else {
            upper
        };
    }
    bits.truncate(steps - TAIL_BITS);
    Ok(bits)
}

/// Gray-coded 16-QAM with unit average energy. Bits map four at a time,
/// [b0 b1] selecting the I level and [b2 b3] the Q level via the Gray order
/// 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3 (scaled by 1/sqrt(10)). The input
/// is zero-padded to a multiple of 4; the pad bit count is returned.
pub fn qam16_map(bits: &[u8]) -> (Vec<Complex64>, usize) {
    let pad = (4 - bits.len() % 4) % 4;
    let level = |b0: u8, b1: u8| -> f64 {
        match (b0, b1) {
            (0, 0) => -3.0,
            (0, 1) => -1.0,
            (1, 1) => 1.0,
            _ => 3.0,
        }
    };
    let mut padded = bits.to_vec();
    padded.resize(bits.len() + pad, 0);
    let symbols = padded
        .chunks_exact(4)
        .map(|q| {
            Complex64::new(level(q[0], q[1]) * QAM_NORM, level(q[2], q[3]) * QAM_NORM)
        })
        .collect();
    (symbols, pad)
}

fn axis_bits(v: f64) -> [u8; 2] {
    let t = 2.0 * QAM_NORM;
    if v < -t {
        [0, 0]
    } else if v < 0.0 {
        [0, 1]
    } else if v < t {
        [1, 1]
    } else {
        [1, 0]
    }
}

/// Minimum-distance hard demapping; `pad` bits from the mapper are removed.
pub fn qam16_demap(symbols: &[Complex64], pad: usize) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 4);
    for s in symbols {
        bits.extend_from_slice(&axis_bits(s.re));
        bits.extend_from_slice(&axis_bits(s.im));
    }
    bits.truncate(bits.len() - pad.min(bits.len()));
    bits
}

/// Uniform midrise quantizer over `range`, clamped; returns one index per
/// coefficient packed as `bits_per_coeff` MSB-first bits.
pub fn quantize(coeffs: &[f64], bits_per_coeff: u8, range: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = range;
    if !(2..=16).contains(&bits_per_coeff) {
        return Err(Error::InvalidParameter(format!(
            "bits_per_coeff {bits_per_coeff} outside [2, 16]"
        )));
    }
    if lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "degenerate quantizer range [{lo}, {hi}]"
        )));
    }
    let levels = 1u32 << bits_per_coeff;
    let step = (hi - lo) / levels as f64;
    let mut bits = Vec::with_capacity(coeffs.len() * bits_per_coeff as usize);
    for &v in coeffs {
        let idx = (((v - lo) / step).floor() as i64).clamp(0, levels as i64 - 1) as u32;
        for b in (0..bits_per_coeff).rev() {
            bits.push(((idx >> b) & 1) as u8);
        }
    }
    Ok(bits)
}

/// Inverse of [`quantize`]: bin centers.
pub fn dequantize(bits: &[u8], bits_per_coeff: u8, range: (f64, f64)) -> Result<Vec<f64>> {
    let bpc = bits_per_coeff as usize;
    if bpc == 0 || bits.len() % bpc != 0 {
        return Err(Error::LengthMismatch(format!(
            "{} bits is not a multiple of {bpc}",
            bits.len()
        )));
    }
    let (lo, hi) = range;
    let levels = 1u32 << bits_per_coeff;
    let step = (hi - lo) / levels as f64;
    Ok(bits
        .chunks_exact(bpc)
        .map(|c| {
            let idx = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
            lo + (idx as f64 + 0.5) * step
        })
        .collect())
}

/// Pick how many leading (low-frequency) chunks the digital chain keeps so
/// its coded 16-QAM symbol count matches the pseudo-analog symbol count as
/// closely as possible.
///
/// Pseudo-analog sends about chunk_len * num_chunks / 2 complex symbols;
/// digital sends 3 * (kept * chunk_len * bits + tail) / 4.
pub fn parity_kept_chunks(
    chunk_len: usize,
    num_chunks: usize,
    bits_per_coeff: u8,
    analog_symbols: usize,
) -> usize {
    let mut best = (f64::MAX, 1usize);
    for m in 1..=num_chunks {
        let payload_bits = m * chunk_len * bits_per_coeff as usize + TAIL_BITS;
        let symbols = (3 * payload_bits).div_ceil(4);
        let ratio = symbols as f64 / analog_symbols as f64;
        let err = (ratio - 1.0).abs();
        if err < best.0 {
            best = (err, m);
        }
    }
    best.1
}

/// Digital-side packet metadata: per-kept-chunk quantizer ranges, carried
/// over the same CRC-protected header channel as the pseudo-analog side.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalMeta {
    pub gop_id: u32,
    pub dims: (u16, u16, u16),
    pub bits_per_coeff: u8,
    /// (min, max) per kept chunk, in chunk order.
    pub ranges: Vec<(f32, f32)>,
}

impl DigitalMeta {
    pub fn encoded_len(kept_chunks: usize) -> usize {
        4 + 6 + 1 + 8 * kept_chunks + 4
    }
}

pub fn encode_digital_meta(meta: &DigitalMeta) -> Result<Vec<u8>> {
    if meta.ranges.is_empty() {
        return Err(Error::EmptyInput("digital metadata with no ranges"));
    }
    let mut out = Vec::with_capacity(DigitalMeta::encoded_len(meta.ranges.len()));
    out.extend_from_slice(&meta.gop_id.to_le_bytes());
    out.extend_from_slice(&meta.dims.0.to_le_bytes());
    out.extend_from_slice(&meta.dims.1.to_le_bytes());
    out.extend_from_slice(&meta.dims.2.to_le_bytes());
    out.push(meta.bits_per_coeff);
    for &(lo, hi) in &meta.ranges {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_digital_meta(bytes: &[u8], kept_chunks: usize) -> Result<DigitalMeta> {
    let expect = DigitalMeta::encoded_len(kept_chunks);
    if bytes.len() != expect {
        return Err(Error::LengthMismatch(format!(
            "digital metadata block is {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let body = &bytes[..expect - 4];
    let crc = u32::from_le_bytes(bytes[expect - 4..].try_into().unwrap());
    if crc32fast::hash(body) != crc {
        return Err(Error::MetaCrc);
    }
    let u16_at = |o: usize| u16::from_le_bytes(body[o..o + 2].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().unwrap());
    Ok(DigitalMeta {
        gop_id: u32::from_le_bytes(body[0..4].try_into().unwrap()),
        dims: (u16_at(4), u16_at(6), u16_at(8)),
        bits_per_coeff: body[10],
        ranges: (0..kept_chunks)
            .map(|i| (f32_at(11 + 8 * i), f32_at(15 + 8 * i)))
            .collect(),
    })
}

/// Post-Viterbi bit error rate of the coded 16-QAM stack over plain AWGN at
/// the given symbol SNR. Deterministic in the seed.
pub fn coded_ber(snr_db: f64, num_bits: usize, seed: u64) -> f64 {
    use crate::channel::{apply_channel, ChannelParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let bits: Vec<u8> = (0..num_bits).map(|_| rng.gen_range(0..=1u8)).collect();
    let coded = conv_encode(&bits);
    let (symbols, pad) = qam16_map(&coded);
    let rx = apply_channel(&symbols, &ChannelParams::awgn(snr_db, seed ^ 0xBE12), 20e6).unwrap();
    let hard = qam16_demap(&rx[..symbols.len()], pad);
    let decoded = viterbi_decode(&hard).unwrap();
    let errors = bits
        .iter()
        .zip(&decoded)
        .filter(|(a, b)| a != b)
        .count();
    errors as f64 / num_bits as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_all_zero_input() {
        let coded = conv_encode(&[0; 40]);
        assert_eq!(coded.len(), 3 * 46);
        assert!(coded.iter().all(|&b| b == 0));
    }

    #[test]
    fn conv_round_trip_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [1usize, 7, 64, 333] {
            let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..=1)).collect();
            let coded = conv_encode(&bits);
            assert_eq!(coded.len(), 3 * (len + TAIL_BITS));
            assert_eq!(viterbi_decode(&coded).unwrap(), bits);
        }
    }

    #[test]
    fn conv_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<u8> = (0..100).map(|_| rng.gen_range(0..=1)).collect();
        let y: Vec<u8> = (0..100).map(|_| rng.gen_range(0..=1)).collect();
        let xy: Vec<u8> = x.iter().zip(&y).map(|(a, b)| a ^ b).collect();
        let sum: Vec<u8> = conv_encode(&x)
            .iter()
            .zip(conv_encode(&y))
            .map(|(a, b)| a ^ b)
            .collect();
        assert_eq!(conv_encode(&xy), sum);
    }

    #[test]
    fn conv_corrects_well_separated_double_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..100).map(|_| rng.gen_range(0..=1)).collect();
        let coded = conv_encode(&bits);
        // two flipped bits at a spread of separations, exhaustive over the
        // first position stride
        for first in (0..coded.len() - 40).step_by(17) {
            let second = first + 31;
            let mut corrupted = coded.clone();
            corrupted[first] ^= 1;
            corrupted[second] ^= 1;
            assert_eq!(viterbi_decode(&corrupted).unwrap(), bits, "flips at {first},{second}");
        }
    }

    #[test]
    fn viterbi_rejects_bad_length() {
        assert!(viterbi_decode(&[0; 7]).is_err());
        assert!(viterbi_decode(&[0; 3]).is_err());
    }

    #[test]
    fn qam_unit_energy_and_gray_corner() {
        let all: Vec<u8> = (0..16u8)
            .flat_map(|v| (0..4).rev().map(move |b| (v >> b) & 1))
            .collect();
        let (symbols, pad) = qam16_map(&all);
        assert_eq!(pad, 0);
        assert_eq!(symbols.len(), 16);
        let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / 16.0;
        assert!((energy - 1.0).abs() < 1e-12);

        // 0000 -> (-3 - 3i)/sqrt(10)
        let (s, _) = qam16_map(&[0, 0, 0, 0]);
        let expect = Complex64::new(-3.0, -3.0) * QAM_NORM;
        assert!((s[0] - expect).norm() < 1e-12);

        // Gray adjacency: nearest horizontal/vertical neighbors differ in one bit
        for (i, &a) in symbols.iter().enumerate() {
            for (j, &b) in symbols.iter().enumerate() {
                let d = (a - b).norm();
                if (d - 2.0 * QAM_NORM).abs() < 1e-9 {
                    let diff = (i ^ j).count_ones();
                    assert_eq!(diff, 1, "neighbors {i:04b} {j:04b}");
                }
            }
        }
    }

    #[test]
    fn qam_round_trip_with_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for len in [4usize, 5, 6, 7, 8, 101] {
            let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..=1)).collect();
            let (symbols, pad) = qam16_map(&bits);
            assert_eq!(qam16_demap(&symbols, pad), bits);
        }
    }

    #[test]
    fn quantizer_midpoint_and_clamp() {
        let r = (-1.0, 1.0);
        let bits = quantize(&[0.0], 8, r).unwrap();
        let back = dequantize(&bits, 8, r).unwrap();
        assert!((back[0] - 0.0).abs() <= 2.0 / 512.0);

        let bits = quantize(&[-5.0], 8, r).unwrap();
        let back = dequantize(&bits, 8, r).unwrap();
        assert!((back[0] - (-1.0 + 1.0 / 256.0)).abs() < 1e-12);

        assert!(quantize(&[0.0], 1, r).is_err());
        assert!(quantize(&[0.0], 8, (1.0, 1.0)).is_err());
    }

    #[test]
    fn quantizer_noise_matches_uniform_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r = (-2.0, 2.0);
        let bits = quantize(&xs, 12, r).unwrap();
        let back = dequantize(&bits, 12, r).unwrap();
        let mse: f64 = xs
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / xs.len() as f64;
        let step = 4.0 / 4096.0;
        assert!(mse <= step * step / 12.0 * 1.01, "mse {mse}");
    }

    #[test]
    fn digital_meta_round_trip_and_crc() {
        let meta = DigitalMeta {
            gop_id: 9,
            dims: (4, 144, 176),
            bits_per_coeff: 7,
            ranges: vec![(-10.0, 10.0), (-1.0, 2.0)],
        };
        let bytes = encode_digital_meta(&meta).unwrap();
        assert_eq!(decode_digital_meta(&bytes, 2).unwrap(), meta);
        let mut bad = bytes.clone();
        bad[3] ^= 1;
        assert!(decode_digital_meta(&bad, 2).is_err());
    }

    #[test]
    fn parity_solver_tracks_target() {
        // analog: 64 chunks of 1584 -> 50688 complex symbols
        let m = parity_kept_chunks(1584, 64, 7, 50688);
        let symbols = (3 * (m * 1584 * 7 + TAIL_BITS)).div_ceil(4);
        let ratio = symbols as f64 / 50688.0;
        assert!((ratio - 1.0).abs() < 0.05, "m = {m}, ratio = {ratio}");
    }

    #[test]
    fn coded_ber_clean_at_high_snr() {
        assert_eq!(coded_ber(20.0, 20_000, 1), 0.0);
    }
}
