use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pacast::experiment::{run_experiment, RunConfig};
use pacast::ofdm::{read_iq_trace, OfdmConfig};
use pacast::sync::{detect_frame, estimate_cfo};
use pacast::theory;

/// Pseudo-analog video transmission simulator.
#[derive(Parser)]
#[command(name = "pacast", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an SNR sweep over the configured link chains and write CSV
    /// reports (plus optional PGM frames and IQ traces).
    Simulate(SimulateArgs),
    /// Print the closed-form theory curves as CSV.
    Theory(TheoryArgs),
    /// Run frame detection on an IQ trace file and print sync diagnostics.
    SyncBench(SyncBenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat key=value config file; command-line overrides win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repeatable key=value override for any config field.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Raw video input; omit to use the built-in synthetic sequence.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// pseudo-analog, digital, or both
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated SNR list in dB.
    #[arg(long)]
    snr_list_db: Option<String>,
    #[arg(long)]
    dump_frames: bool,
    #[arg(long)]
    dump_iq: bool,
}

#[derive(Args)]
struct TheoryArgs {
    /// Source variance.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Comma-separated SNR list in dB.
    #[arg(long, default_value = "0,2.5,5,7.5,10,12.5,15,17.5,20,22.5,25")]
    snr_list_db: String,
}

#[derive(Args)]
struct SyncBenchArgs {
    /// Interleaved float32 IQ trace file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> pacast::Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Theory(args) => print_theory(args),
        Command::SyncBench(args) => sync_bench(args),
    }
}

fn simulate(args: SimulateArgs) -> pacast::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            pacast::Error::InvalidParameter(format!("override {kv:?} is not KEY=VALUE"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(input) = args.input {
        cfg.input = Some(input);
    }
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(scheme) = args.scheme {
        cfg.set("scheme", &scheme)?;
    }
    if let Some(list) = args.snr_list_db {
        cfg.set("snr_list_db", &list)?;
    }
    cfg.dump_frames |= args.dump_frames;
    cfg.dump_iq |= args.dump_iq;
    cfg.validate()?;

    let report = run_experiment(&cfg)?;
    println!(
        "wrote {} data rows to {}",
        report.rows.len(),
        cfg.output_dir.join("report.csv").display()
    );
    for a in &report.aggregates {
        println!(
            "{:>14} @ {:>5.1} dB: mean {:6.2} dB, min {:6.2} dB",
            a.scheme, a.snr_db, a.mean_psnr_db, a.min_psnr_db
        );
    }
    Ok(())
}

/// Print a line to stdout, exiting quietly if the reader went away (e.g.
/// the output is piped into `head`) instead of panicking on EPIPE.
fn emit(line: std::fmt::Arguments) -> pacast::Result<()> {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(line).and_then(|()| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        return Err(pacast::Error::Io {
            path: "<stdout>".into(),
            source: e,
        });
    }
    Ok(())
}

fn parse_snr_list(list: &str) -> pacast::Result<Vec<f64>> {
    list.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| pacast::Error::InvalidParameter(format!("bad SNR value {t:?}")))
        })
        .collect()
}

fn print_theory(args: TheoryArgs) -> pacast::Result<()> {
    if args.lambda <= 0.0 {
        return Err(pacast::Error::InvalidParameter(format!(
            "lambda must be positive, got {}",
            args.lambda
        )));
    }
    let snrs = parse_snr_list(&args.snr_list_db)?;
    if snrs.is_empty() {
        return Err(pacast::Error::InvalidParameter("empty SNR list".into()));
    }
    emit(format_args!("snr_db,capacity_bits,d_analog,d_digital,rate_at_d"))?;
    for snr in snrs {
        let gamma = 10f64.powf(snr / 10.0);
        let c = theory::awgn_capacity(gamma)?;
        let d = theory::analog_distortion(args.lambda, gamma)?;
        let r = theory::rate_distortion(args.lambda, d)?;
        emit(format_args!("{snr:.2},{c:.6},{d:.6e},{d:.6e},{r:.6}"))?;
    }
    Ok(())
}

fn sync_bench(args: SyncBenchArgs) -> pacast::Result<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(pacast::Error::InvalidParameter(format!(
            "threshold {} outside (0, 1)",
            args.threshold
        )));
    }
    let samples = read_iq_trace(&args.input)?;
    let ofdm = OfdmConfig::default();
    let sync = detect_frame(&samples, &ofdm, args.threshold);
    emit(format_args!("detected,frame_start,metric_peak,cfo_hz"))?;
    if sync.detected {
        let cfo = estimate_cfo(&samples, &sync, &ofdm);
        emit(format_args!(
            "1,{},{:.4},{:.2}",
            sync.frame_start, sync.coarse_metric_peak, cfo
        ))?;
    } else {
        emit(format_args!("0,NA,{:.4},NA", sync.coarse_metric_peak))?;
    }
    Ok(())
}
