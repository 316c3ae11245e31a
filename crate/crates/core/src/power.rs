//! Variance-driven gain allocation, packet normalization, MMSE decoding and
//! the in-band metadata format.
//!
//! Gains follow the closed-form rule g_i = c * lambda_i^(-1/4), which makes
//! per-chunk transmit power proportional to sqrt(lambda_i). The constant c
//! is set so the chunk powers g_i^2 * lambda_i, length-weighted relative to
//! the mean chunk length, sum to the budget P. With a single chunk this
//! reduces to g = sqrt(P / lambda).

use crate::transform::Chunk;
use crate::{Error, Result};

/// Variance floor applied to near-zero chunks so gains stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Per-chunk amplitude gains under a total power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector {
    pub gains: Vec<f64>,
    pub power_budget: f64,
}

/// Receiver-side noise statistics.
///
/// `sigma_sq` is the noise power per complex dimension; the per-real-sample
/// noise power seen by the MMSE stage is `sigma_sq / 2` because each complex
/// payload symbol carries two real samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub sigma_sq: f64,
    pub gamma: f64,
}

impl NoiseEstimate {
    pub fn new(sigma_sq: f64, signal_power: f64) -> Self {
        let gamma = if sigma_sq > 0.0 {
            signal_power / sigma_sq
        } else {
            f64::INFINITY
        };
        NoiseEstimate { sigma_sq, gamma }
    }
}

/// Per-packet side information carried in the frame header.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketMeta {
    pub gop_id: u32,
    /// (time, height, width)
    pub dims: (u16, u16, u16),
    /// Mean removed from the whole scaled packet.
    pub dc_mean: f32,
    /// Mean removed from each chunk before scaling.
    pub chunk_means: Vec<f32>,
    /// Per-chunk population variance after mean removal.
    pub chunk_variances: Vec<f32>,
}

impl PacketMeta {
    pub fn num_chunks(&self) -> usize {
        self.chunk_variances.len()
    }

    /// Serialized size in bytes for a given chunk count (CRC included).
    pub fn encoded_len(num_chunks: usize) -> usize {
        4 + 3 * 2 + 4 + 8 * num_chunks + 4
    }
}

/// Subtract the mean so the packet is zero-mean; the mean restores the
/// input exactly.
pub fn normalize_packet(samples: &[f64]) -> Result<(Vec<f64>, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("normalize_packet on empty vector"));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok((samples.iter().map(|v| v - mean).collect(), mean))
}

/// Closed-form gain allocation: g_i = c * lambda_i^(-1/4) with c chosen so
/// sum_i g_i^2 * lambda_i * (n_i / n_mean) = P. Variances below
/// [`VARIANCE_FLOOR`] are clamped to the floor.
pub fn allocate_gains(variances: &[f64], lengths: &[usize], power_budget: f64) -> Result<GainVector> {
    if variances.len() != lengths.len() {
        return Err(Error::LengthMismatch(format!(
            "{} variances vs {} lengths",
            variances.len(),
            lengths.len()
        )));
    }
    if variances.is_empty() {
        return Err(Error::EmptyInput("no chunk variances"));
    }
    if power_budget <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "power budget {power_budget} must be positive"
        )));
    }
    if variances.iter().all(|&v| v <= 0.0) {
        return Err(Error::DegenerateSource);
    }
    let n_mean = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    let floored: Vec<f64> = variances.iter().map(|&v| v.max(VARIANCE_FLOOR)).collect();
    let denom: f64 = floored
        .iter()
        .zip(lengths)
        .map(|(&v, &n)| v.sqrt() * n as f64 / n_mean)
        .sum();
    let c = (power_budget / denom).sqrt();
    let gains = floored.iter().map(|&v| c * v.powf(-0.25)).collect();
    Ok(GainVector {
        gains,
        power_budget,
    })
}

/// Sample-wise multiply of each chunk by its gain, concatenated in order.
pub fn scale(chunks: &[Chunk], gains: &GainVector) -> Result<Vec<f64>> {
    if chunks.len() != gains.gains.len() {
        return Err(Error::LengthMismatch(format!(
            "{} chunks vs {} gains",
            chunks.len(),
            gains.gains.len()
        )));
    }
    let total: usize = chunks.iter().map(|c| c.samples.len()).sum();
    let mut out = Vec::with_capacity(total);
    for (chunk, &g) in chunks.iter().zip(&gains.gains) {
        out.extend(chunk.samples.iter().map(|&s| g * s));
    }
    Ok(out)
}

/// Per-chunk linear MMSE estimate x_hat = g*lambda / (g^2*lambda + sigma^2) * y.
///
/// `received` is the concatenation of per-chunk observations in chunk order;
/// `noise_var` is the noise power per real sample. With sigma^2 = 0 this is
/// the zero-forcing limit y/g.
pub fn mmse_decode(
    received: &[f64],
    gains: &GainVector,
    variances: &[f64],
    lengths: &[usize],
    noise_var: f64,
) -> Result<Vec<Chunk>> {
    if gains.gains.len() != variances.len() || variances.len() != lengths.len() {
        return Err(Error::LengthMismatch(
            "gains/variances/lengths misaligned".into(),
        ));
    }
    let total: usize = lengths.iter().sum();
    if received.len() != total {
        return Err(Error::LengthMismatch(format!(
            "{} received samples, chunk lengths sum to {total}",
            received.len()
        )));
    }
    let mut out = Vec::with_capacity(lengths.len());
    let mut offset = 0;
    for (index, ((&g, &lambda), &n)) in gains.gains.iter().zip(variances).zip(lengths).enumerate() {
        let lambda = lambda.max(0.0);
        let coeff = if noise_var > 0.0 {
            g * lambda / (g * g * lambda + noise_var)
        } else {
            1.0 / g
        };
        let samples: Vec<f64> = received[offset..offset + n].iter().map(|&y| coeff * y).collect();
        offset += n;
        out.push(Chunk {
            index,
            samples,
            variance: lambda,
        });
    }
    Ok(out)
}

/// Fixed little-endian binary layout of [`PacketMeta`], CRC-32 protected:
///
/// ```text
/// offset  field
/// 0       gop_id          u32
/// 4       dims.t          u16
/// 6       dims.h          u16
/// 8       dims.w          u16
/// 10      dc_mean         f32
/// 14      chunk_means     f32 * K
/// 14+4K   chunk_variances f32 * K
/// 14+8K   crc32 (IEEE) over bytes [0, 14+8K)
/// ```
pub fn encode_meta(meta: &PacketMeta) -> Result<Vec<u8>> {
    if meta.chunk_variances.is_empty() {
        return Err(Error::EmptyInput("metadata with no chunk variances"));
    }
    if meta.chunk_means.len() != meta.chunk_variances.len() {
        return Err(Error::LengthMismatch(
            "chunk means/variances count differ".into(),
        ));
    }
    let mut out = Vec::with_capacity(PacketMeta::encoded_len(meta.num_chunks()));
    out.extend_from_slice(&meta.gop_id.to_le_bytes());
    out.extend_from_slice(&meta.dims.0.to_le_bytes());
    out.extend_from_slice(&meta.dims.1.to_le_bytes());
    out.extend_from_slice(&meta.dims.2.to_le_bytes());
    out.extend_from_slice(&meta.dc_mean.to_le_bytes());
    for m in &meta.chunk_means {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for v in &meta.chunk_variances {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Decode and CRC-validate a metadata block for the expected chunk count.
pub fn decode_meta(bytes: &[u8], num_chunks: usize) -> Result<PacketMeta> {
    let expect = PacketMeta::encoded_len(num_chunks);
    if bytes.len() != expect {
        return Err(Error::LengthMismatch(format!(
            "metadata block is {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let body = &bytes[..expect - 4];
    let crc = u32::from_le_bytes(bytes[expect - 4..].try_into().unwrap());
    if crc32fast::hash(body) != crc {
        return Err(Error::MetaCrc);
    }
    let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().unwrap());
    let u16_at = |o: usize| u16::from_le_bytes(body[o..o + 2].try_into().unwrap());
    let gop_id = u32::from_le_bytes(body[0..4].try_into().unwrap());
    let dims = (u16_at(4), u16_at(6), u16_at(8));
    let dc_mean = f32_at(10);
    let chunk_means = (0..num_chunks).map(|i| f32_at(14 + 4 * i)).collect();
    let chunk_variances = (0..num_chunks)
        .map(|i| f32_at(14 + 4 * num_chunks + 4 * i))
        .collect();
    Ok(PacketMeta {
        gop_id,
        dims,
        dc_mean,
        chunk_means,
        chunk_variances,
    })
}
