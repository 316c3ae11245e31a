//! Configuration-driven experiment runner: SNR sweeps over the
//! pseudo-analog and digital chains, CSV reports, frame dumps.
//!
//! Everything downstream of `RunConfig` is a pure function of (config,
//! seed): the (snr, trial) grid is evaluated in parallel but rows are
//! sorted before writing, and both schemes at a given grid cell share the
//! same channel seed so they see identical noise realizations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::{rayleigh_taps, ChannelParams};
use crate::link::{run_analog_chain, run_digital_chain, LinkConfig};
use crate::source::{
    compute_psnr, load_video, split_gops, synthetic_sequence, write_frame, Frame, Gop,
    PixelFormat,
};
use crate::theory::analog_distortion;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    PseudoAnalog,
    Digital,
    Both,
}

impl Scheme {
    fn runs_analog(self) -> bool {
        matches!(self, Scheme::PseudoAnalog | Scheme::Both)
    }
    fn runs_digital(self) -> bool {
        matches!(self, Scheme::Digital | Scheme::Both)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Raw video input; `None` generates the synthetic sequence instead.
    pub input: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub format: PixelFormat,
    pub gop_size: usize,
    pub num_chunks: usize,
    pub hadamard_order: usize,
    /// Transmit power budget per real payload sample.
    pub power_budget: f64,
    pub snr_list_db: Vec<f64>,
    /// Number of block-fading Rayleigh taps; 1 means a flat channel.
    pub num_taps: usize,
    pub cfo_hz: f64,
    pub phase_noise_std: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bits_per_coeff: u8,
    pub kept_chunks: Option<usize>,
    pub detect_threshold: f64,
    pub clip_amplitude: Option<f64>,
    /// Dump first/middle frame of each GOP at min/max SNR as PGM.
    pub dump_frames: bool,
    /// Dump the trial-0 transmit burst per SNR point as an IQ trace.
    pub dump_iq: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            width: 176,
            height: 144,
            num_frames: 32,
            format: PixelFormat::YOnly,
            gop_size: 4,
            num_chunks: 64,
            hadamard_order: 64,
            power_budget: 1.0,
            snr_list_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0],
            num_taps: 1,
            cfo_hz: 0.0,
            phase_noise_std: 0.0,
            scheme: Scheme::Both,
            trials: 10,
            seed: 1,
            output_dir: PathBuf::from("out"),
            bits_per_coeff: 7,
            kept_chunks: None,
            detect_threshold: 0.1,
            clip_amplitude: None,
            dump_frames: false,
            dump_iq: false,
        }
    }
}

impl RunConfig {
    /// Parse a flat `key = value` config file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = cfg.set(k.trim(), v.trim()) {
                        errors.push(format!("line {}: {e}", lineno + 1));
                    }
                }
                None => errors.push(format!("line {}: expected key = value", lineno + 1)),
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::InvalidParameter(errors.join("; ")))
        }
    }

    /// Apply one key/value override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}")))
        }
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "num_frames" => self.num_frames = parse(key, value)?,
            "format" => {
                self.format = match value {
                    "y" | "gray" => PixelFormat::YOnly,
                    "yuv420" => PixelFormat::Yuv420,
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "unknown format {value:?} (expected y or yuv420)"
                        )))
                    }
                }
            }
            "gop_size" => self.gop_size = parse(key, value)?,
            "num_chunks" => self.num_chunks = parse(key, value)?,
            "hadamard_order" => self.hadamard_order = parse(key, value)?,
            "power_budget" => self.power_budget = parse(key, value)?,
            "snr_list_db" => {
                let mut list = Vec::new();
                for tok in value.split(',') {
                    list.push(parse::<f64>(key, tok.trim())?);
                }
                self.snr_list_db = list;
            }
            "num_taps" => self.num_taps = parse(key, value)?,
            "cfo_hz" => self.cfo_hz = parse(key, value)?,
            "phase_noise_std" => self.phase_noise_std = parse(key, value)?,
            "scheme" => {
                self.scheme = match value {
                    "pseudo-analog" | "analog" => Scheme::PseudoAnalog,
                    "digital" => Scheme::Digital,
                    "both" => Scheme::Both,
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "unknown scheme {value:?} (expected pseudo-analog, digital or both)"
                        )))
                    }
                }
            }
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "bits_per_coeff" => self.bits_per_coeff = parse(key, value)?,
            "kept_chunks" => self.kept_chunks = Some(parse(key, value)?),
            "detect_threshold" => self.detect_threshold = parse(key, value)?,
            "clip_amplitude" => self.clip_amplitude = Some(parse(key, value)?),
            "dump_frames" => self.dump_frames = parse(key, value)?,
            "dump_iq" => self.dump_iq = parse(key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Validate every field, reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.width == 0 || self.height == 0 {
            errors.push("frame dimensions must be positive".to_string());
        }
        if self.num_frames == 0 {
            errors.push("num_frames must be positive".to_string());
        }
        if self.gop_size == 0 {
            errors.push("gop_size must be positive".to_string());
        }
        if self.num_chunks == 0 {
            errors.push("num_chunks must be positive".to_string());
        }
        if !self.hadamard_order.is_power_of_two() {
            errors.push(format!(
                "hadamard_order {} is not a power of two",
                self.hadamard_order
            ));
        }
        if self.power_budget <= 0.0 {
            errors.push("power_budget must be positive".to_string());
        }
        if self.snr_list_db.is_empty() {
            errors.push("snr_list_db must be non-empty".to_string());
        }
        if self.num_taps == 0 {
            errors.push("num_taps must be positive".to_string());
        }
        if self.trials == 0 {
            errors.push("trials must be positive".to_string());
        }
        if !(self.detect_threshold > 0.0 && self.detect_threshold < 1.0) {
            errors.push(format!(
                "detect_threshold {} outside (0, 1)",
                self.detect_threshold
            ));
        }
        if !(2..=16).contains(&self.bits_per_coeff) {
            errors.push(format!(
                "bits_per_coeff {} outside [2, 16]",
                self.bits_per_coeff
            ));
        }
        if let Some(k) = self.kept_chunks {
            if k == 0 || k > self.num_chunks {
                errors.push(format!("kept_chunks {k} outside [1, {}]", self.num_chunks));
            }
        }
        if let Some(a) = self.clip_amplitude {
            if a <= 0.0 {
                errors.push("clip_amplitude must be positive".to_string());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(errors.join("; ")))
        }
    }

    /// The provenance header written at the top of every CSV.
    pub fn header_lines(&self) -> Vec<String> {
        let input = self
            .input
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "synthetic".to_string());
        let fmt = match self.format {
            PixelFormat::YOnly => "y",
            PixelFormat::Yuv420 => "yuv420",
        };
        let scheme = match self.scheme {
            Scheme::PseudoAnalog => "pseudo-analog",
            Scheme::Digital => "digital",
            Scheme::Both => "both",
        };
        let snrs = self
            .snr_list_db
            .iter()
            .map(|s| format!("{s}"))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            format!("# input={input} width={} height={} num_frames={} format={fmt}",
                self.width, self.height, self.num_frames),
            format!(
                "# gop_size={} num_chunks={} hadamard_order={} power_budget={}",
                self.gop_size, self.num_chunks, self.hadamard_order, self.power_budget
            ),
            format!("# snr_list_db={snrs} trials={} seed={} scheme={scheme}", self.trials, self.seed),
            format!(
                "# num_taps={} cfo_hz={} phase_noise_std={} detect_threshold={} clip_amplitude={} \
                 bits_per_coeff={} kept_chunks={}",
                self.num_taps,
                self.cfo_hz,
                self.phase_noise_std,
                self.detect_threshold,
                self.clip_amplitude.map_or("off".to_string(), |a| a.to_string()),
                self.bits_per_coeff,
                self.kept_chunks.map_or("parity".to_string(), |k| k.to_string()),
            ),
        ]
    }

    fn link_config(&self) -> LinkConfig {
        LinkConfig {
            num_chunks: self.num_chunks,
            hadamard_order: self.hadamard_order,
            power_per_sample: self.power_budget,
            detect_threshold: self.detect_threshold,
            clip_amplitude: self.clip_amplitude,
            bits_per_coeff: self.bits_per_coeff,
            kept_chunks: self.kept_chunks,
            ..LinkConfig::default()
        }
    }
}

/// One CSV data row: a single frame of a single (scheme, snr, trial) run.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub scheme: &'static str,
    pub snr_db: f64,
    pub trial: usize,
    pub frame: usize,
    pub psnr_db: f64,
    pub measured_snr_db: Option<f64>,
    pub sync_failed: bool,
    pub meta_crc_failed: bool,
    pub frame_lost: bool,
}

/// Per-(scheme, snr) aggregate, plus the shared theory distortion columns.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub scheme: &'static str,
    pub snr_db: f64,
    pub mean_psnr_db: f64,
    pub min_psnr_db: f64,
    pub d_analog: f64,
    pub d_digital: f64,
}

#[derive(Debug, Clone)]
pub struct LinkReport {
    pub header: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
    /// Source variance used for the theory columns.
    pub source_variance: f64,
}

/// Per-SNR summary comparing schemes against each other and theory.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub mean_analog_db: Option<f64>,
    pub mean_digital_db: Option<f64>,
    pub gain_db: Option<f64>,
    pub d_analog: f64,
    pub d_digital: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Channel seed for one grid cell; both schemes use it unchanged so they
/// consume identical noise realizations.
fn cell_seed(seed: u64, snr_idx: usize, trial: usize, gop_id: usize) -> u64 {
    splitmix64(
        seed ^ splitmix64(snr_idx as u64 ^ splitmix64((trial as u64) << 20 ^ gop_id as u64)),
    )
}

fn load_source(cfg: &RunConfig) -> Result<Vec<Frame>> {
    let mut frames = match &cfg.input {
        Some(path) => load_video(path, cfg.width, cfg.height, cfg.format)?,
        None => synthetic_sequence(cfg.width, cfg.height, cfg.num_frames),
    };
    if frames.len() < cfg.num_frames {
        return Err(Error::InvalidParameter(format!(
            "input holds {} frames, config asks for {}",
            frames.len(),
            cfg.num_frames
        )));
    }
    frames.truncate(cfg.num_frames);
    Ok(frames)
}

fn pixel_variance(frames: &[Frame]) -> f64 {
    let n: usize = frames.iter().map(|f| f.pixels.len()).sum();
    let mean: f64 = frames
        .iter()
        .flat_map(|f| f.pixels.iter())
        .sum::<f64>()
        / n as f64;
    frames
        .iter()
        .flat_map(|f| f.pixels.iter())
        .map(|&p| (p - mean) * (p - mean))
        .sum::<f64>()
        / n as f64
}

fn channel_for(cfg: &RunConfig, snr_db: f64, seed: u64) -> ChannelParams {
    ChannelParams {
        snr_db: Some(snr_db),
        taps: if cfg.num_taps > 1 {
            rayleigh_taps(cfg.num_taps, seed)
        } else {
            vec![num_complex::Complex64::new(1.0, 0.0)]
        },
        cfo_hz: cfo_for(cfg),
        phase_noise_std: cfg.phase_noise_std,
        seed,
    }
}

fn cfo_for(cfg: &RunConfig) -> f64 {
    cfg.cfo_hz
}

/// Run the configured sweep. Per-GOP decode failures are recorded as lost
/// frames, never dropped; the returned rows are fully sorted.
pub fn run_experiment(cfg: &RunConfig) -> Result<LinkReport> {
    cfg.validate()?;
    let frames = load_source(cfg)?;
    let gops = split_gops(&frames, cfg.gop_size)?;
    let link = cfg.link_config();
    let source_variance = pixel_variance(&frames);

    let grid: Vec<(usize, usize)> = (0..cfg.snr_list_db.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();

    let results: Vec<Vec<ReportRow>> = grid
        .par_iter()
        .map(|&(snr_idx, trial)| {
            run_cell(cfg, &link, &gops, snr_idx, trial).unwrap_or_else(|e| {
                // configuration-level failures inside a cell are reported as
                // fully lost frames rather than aborting the sweep
                eprintln!("warning: cell snr_idx={snr_idx} trial={trial} failed: {e}");
                lost_cell_rows(cfg, &gops, snr_idx, trial)
            })
        })
        .collect();

    let mut rows: Vec<ReportRow> = results.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.scheme, a.snr_db, a.trial, a.frame)
            .partial_cmp(&(b.scheme, b.snr_db, b.trial, b.frame))
            .unwrap()
    });

    let aggregates = aggregate(&rows, source_variance);
    let report = LinkReport {
        header: cfg.header_lines(),
        rows,
        aggregates,
        source_variance,
    };

    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let report_path = cfg.output_dir.join("report.csv");
    fs::write(&report_path, render_report(&report)).map_err(io_err(&report_path))?;
    let summary_path = cfg.output_dir.join("summary.csv");
    fs::write(
        &summary_path,
        render_summary(&report.header, &sweep_summary(&report)?),
    )
    .map_err(io_err(&summary_path))?;
    if cfg.dump_frames {
        dump_frames(cfg, &link, &gops)?;
    }
    if cfg.dump_iq {
        dump_iq(cfg, &link, &gops)?;
    }
    Ok(report)
}

fn run_cell(
    cfg: &RunConfig,
    link: &LinkConfig,
    gops: &[Gop],
    snr_idx: usize,
    trial: usize,
) -> Result<Vec<ReportRow>> {
    let snr_db = cfg.snr_list_db[snr_idx];
    let mut rows = Vec::new();
    for (gop_id, gop) in gops.iter().enumerate() {
        let params = channel_for(cfg, snr_db, cell_seed(cfg.seed, snr_idx, trial, gop_id));
        if cfg.scheme.runs_analog() {
            let (recon, report) = run_analog_chain(gop, gop_id as u32, &params, link)?;
            push_rows(
                &mut rows,
                "pseudo-analog",
                snr_db,
                trial,
                gop_id * cfg.gop_size,
                gop,
                &recon,
                report.measured_snr_db,
                !report.sync.detected,
                !report.meta_crc_ok,
            )?;
        }
        if cfg.scheme.runs_digital() {
            let (recon, report) = run_digital_chain(gop, gop_id as u32, &params, link)?;
            push_rows(
                &mut rows,
                "digital",
                snr_db,
                trial,
                gop_id * cfg.gop_size,
                gop,
                &recon,
                report.measured_snr_db,
                !report.sync.detected,
                !report.meta_crc_ok,
            )?;
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn push_rows(
    rows: &mut Vec<ReportRow>,
    scheme: &'static str,
    snr_db: f64,
    trial: usize,
    frame_base: usize,
    original: &Gop,
    recon: &Gop,
    measured_snr_db: Option<f64>,
    sync_failed: bool,
    meta_crc_failed: bool,
) -> Result<()> {
    let lost = sync_failed || meta_crc_failed;
    for (i, (a, b)) in original.frames.iter().zip(&recon.frames).enumerate() {
        rows.push(ReportRow {
            scheme,
            snr_db,
            trial,
            frame: frame_base + i,
            psnr_db: compute_psnr(a, b)?.psnr_db,
            measured_snr_db,
            sync_failed,
            meta_crc_failed,
            frame_lost: lost,
        });
    }
    Ok(())
}

fn lost_cell_rows(
    cfg: &RunConfig,
    gops: &[Gop],
    snr_idx: usize,
    trial: usize,
) -> Vec<ReportRow> {
    let snr_db = cfg.snr_list_db[snr_idx];
    let mut rows = Vec::new();
    for (gop_id, gop) in gops.iter().enumerate() {
        let gray = crate::link::lost_gop(gop.dims());
        for scheme in ["pseudo-analog", "digital"] {
            let active = (scheme == "digital" && cfg.scheme.runs_digital())
                || (scheme == "pseudo-analog" && cfg.scheme.runs_analog());
            if !active {
                continue;
            }
            let _ = push_rows(
                &mut rows,
                scheme,
                snr_db,
                trial,
                gop_id * cfg.gop_size,
                gop,
                &gray,
                None,
                true,
                true,
            );
        }
    }
    rows
}

fn aggregate(rows: &[ReportRow], source_variance: f64) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(&'static str, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scheme, r.snr_db.to_bits()))
            .or_default()
            .push(r.psnr_db);
    }
    groups
        .into_iter()
        .map(|((scheme, snr_bits), psnrs)| {
            let snr_db = f64::from_bits(snr_bits);
            let gamma = 10f64.powf(snr_db / 10.0);
            let d = analog_distortion(source_variance, gamma).unwrap_or(f64::NAN);
            Aggregate {
                scheme,
                snr_db,
                mean_psnr_db: psnrs.iter().sum::<f64>() / psnrs.len() as f64,
                min_psnr_db: psnrs.iter().cloned().fold(f64::INFINITY, f64::min),
                d_analog: d,
                d_digital: d,
            }
        })
        .collect()
}

/// Per-SNR comparison table; the gain column is empty unless both schemes
/// are present in the report.
pub fn sweep_summary(report: &LinkReport) -> Result<Vec<SummaryRow>> {
    if report.rows.is_empty() {
        return Err(Error::EmptyInput("empty report".into()));
    }
    let mut snrs: Vec<f64> = report.aggregates.iter().map(|a| a.snr_db).collect();
    snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snrs.dedup();
    Ok(snrs
        .into_iter()
        .map(|snr| {
            let find = |scheme: &str| {
                report
                    .aggregates
                    .iter()
                    .find(|a| a.scheme == scheme && a.snr_db == snr)
            };
            let analog = find("pseudo-analog");
            let digital = find("digital");
            let gamma = 10f64.powf(snr / 10.0);
            let d = analog_distortion(report.source_variance, gamma).unwrap_or(f64::NAN);
            SummaryRow {
                snr_db: snr,
                mean_analog_db: analog.map(|a| a.mean_psnr_db),
                mean_digital_db: digital.map(|a| a.mean_psnr_db),
                gain_db: match (analog, digital) {
                    (Some(a), Some(d)) => Some(a.mean_psnr_db - d.mean_psnr_db),
                    _ => None,
                },
                d_analog: d,
                d_digital: d,
            }
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |x| format!("{x:.4}"))
}

/// Render the full report: provenance header, data rows, aggregate rows.
pub fn render_report(report: &LinkReport) -> String {
    let mut out = String::new();
    for line in &report.header {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(
        "scheme,snr_db,trial,frame,psnr_db,measured_snr_db,sync_failed,meta_crc_failed,frame_lost\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{:.2},{},{},{:.4},{},{},{},{}",
            r.scheme,
            r.snr_db,
            r.trial,
            r.frame,
            r.psnr_db,
            fmt_opt(r.measured_snr_db),
            r.sync_failed as u8,
            r.meta_crc_failed as u8,
            r.frame_lost as u8,
        );
    }
    out.push_str("# aggregates\n");
    out.push_str("scheme,snr_db,mean_psnr_db,min_psnr_db,d_analog,d_digital\n");
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{},{:.2},{:.4},{:.4},{:.6},{:.6}",
            a.scheme, a.snr_db, a.mean_psnr_db, a.min_psnr_db, a.d_analog, a.d_digital
        );
    }
    out
}

pub fn render_summary(header: &[String], summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    for line in header {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("snr_db,mean_analog_db,mean_digital_db,gain_db,d_analog,d_digital\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{:.2},{},{},{},{:.6},{:.6}",
            s.snr_db,
            fmt_opt(s.mean_analog_db),
            fmt_opt(s.mean_digital_db),
            fmt_opt(s.gain_db),
            s.d_analog,
            s.d_digital
        );
    }
    out
}

/// PGM dumps of the first and middle frame of each GOP, reconstructed at
/// the lowest and highest SNR of the sweep (trial 0).
fn dump_frames(cfg: &RunConfig, link: &LinkConfig, gops: &[Gop]) -> Result<()> {
    let mut idx: Vec<usize> = Vec::new();
    let lo = cfg
        .snr_list_db
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let hi = cfg
        .snr_list_db
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    idx.push(lo);
    if hi != lo {
        idx.push(hi);
    }
    let dir = cfg.output_dir.join("frames");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for snr_idx in idx {
        let snr_db = cfg.snr_list_db[snr_idx];
        for (gop_id, gop) in gops.iter().enumerate() {
            let params = channel_for(cfg, snr_db, cell_seed(cfg.seed, snr_idx, 0, gop_id));
            let mut outputs: Vec<(&str, Gop)> = Vec::new();
            if cfg.scheme.runs_analog() {
                outputs.push((
                    "analog",
                    run_analog_chain(gop, gop_id as u32, &params, link)?.0,
                ));
            }
            if cfg.scheme.runs_digital() {
                outputs.push((
                    "digital",
                    run_digital_chain(gop, gop_id as u32, &params, link)?.0,
                ));
            }
            for (name, recon) in outputs {
                for fi in [0, gop.frames.len() / 2] {
                    let frame_no = gop_id * cfg.gop_size + fi;
                    let path = dir.join(format!("{name}_snr{snr_db:+.1}_frame{frame_no:04}.pgm"));
                    write_frame(&recon.frames[fi], &path)?;
                }
            }
        }
    }
    Ok(())
}

/// Trial-0 transmit burst of the first GOP at each SNR, through the
/// channel, as an interleaved float32 IQ trace.
fn dump_iq(cfg: &RunConfig, link: &LinkConfig, gops: &[Gop]) -> Result<()> {
    use crate::link::{encode_gop, transmit};
    let dir = cfg.output_dir.join("iq");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let gop = &gops[0];
    for (snr_idx, &snr_db) in cfg.snr_list_db.iter().enumerate() {
        let tx = encode_gop(gop, 0, link)?;
        let params = channel_for(cfg, snr_db, cell_seed(cfg.seed, snr_idx, 0, 0));
        let rx = transmit(&tx.frame.samples, &params, link)?;
        crate::ofdm::write_iq_trace(dir.join(format!("rx_snr{snr_db:+.1}.ciq")), &rx)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn quick_cfg(dir: &Path) -> RunConfig {
        RunConfig {
            width: 32,
            height: 24,
            num_frames: 8,
            num_chunks: 16,
            hadamard_order: 16,
            snr_list_db: vec![0.0, 5.0, 10.0],
            trials: 1,
            scheme: Scheme::PseudoAnalog,
            output_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn row_arithmetic() {
        let dir = tempdir().unwrap();
        let cfg = quick_cfg(dir.path());
        let report = run_experiment(&cfg).unwrap();
        // 3 SNRs x 1 trial x 8 frames, one scheme
        assert_eq!(report.rows.len(), 24);
        assert_eq!(report.aggregates.len(), 3);
        assert!(dir.path().join("report.csv").exists());
        assert!(dir.path().join("summary.csv").exists());
    }

    #[test]
    fn byte_identical_reruns() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let r1 = run_experiment(&quick_cfg(d1.path())).unwrap();
        let r2 = run_experiment(&quick_cfg(d2.path())).unwrap();
        assert_eq!(render_report(&r1), render_report(&r2));
        assert_eq!(
            fs::read(d1.path().join("report.csv")).unwrap(),
            fs::read(d2.path().join("report.csv")).unwrap()
        );
    }

    #[test]
    fn fairness_shared_channel_seed() {
        // both schemes in one cell draw the same channel seed
        let s = cell_seed(7, 1, 2, 3);
        assert_eq!(s, cell_seed(7, 1, 2, 3));
        assert_ne!(s, cell_seed(7, 1, 2, 4));
        assert_ne!(s, cell_seed(7, 1, 3, 3));
        assert_ne!(s, cell_seed(7, 2, 2, 3));
        assert_ne!(s, cell_seed(8, 1, 2, 3));
    }

    #[test]
    fn summary_gain_column() {
        let dir = tempdir().unwrap();
        let mut report = run_experiment(&quick_cfg(dir.path())).unwrap();
        // one scheme: gain must be NA
        let summary = sweep_summary(&report).unwrap();
        assert!(summary.iter().all(|s| s.gain_db.is_none()));

        // constructed two-scheme aggregate reproduces the gain arithmetic
        report.aggregates = vec![
            Aggregate {
                scheme: "pseudo-analog",
                snr_db: 10.0,
                mean_psnr_db: 27.36,
                min_psnr_db: 27.36,
                d_analog: 1.0,
                d_digital: 1.0,
            },
            Aggregate {
                scheme: "digital",
                snr_db: 10.0,
                mean_psnr_db: 21.11,
                min_psnr_db: 21.11,
                d_analog: 1.0,
                d_digital: 1.0,
            },
        ];
        let summary = sweep_summary(&report).unwrap();
        let g = summary
            .iter()
            .find(|s| s.snr_db == 10.0)
            .unwrap()
            .gain_db
            .unwrap();
        assert!((g - 6.25).abs() < 1e-9);
    }

    #[test]
    fn config_file_and_validation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(
            &path,
            "width = 32\nheight=24 # comment\nsnr_list_db = 0, 10\nscheme = digital\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.width, 32);
        assert_eq!(cfg.height, 24);
        assert_eq!(cfg.snr_list_db, vec![0.0, 10.0]);
        assert_eq!(cfg.scheme, Scheme::Digital);

        // all validation errors reported at once
        let mut bad = cfg;
        bad.trials = 0;
        bad.snr_list_db.clear();
        bad.hadamard_order = 3;
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("trials"));
        assert!(msg.contains("snr_list"));
        assert!(msg.contains("hadamard_order"));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("format", "yuv9000").is_err());
    }
}
