//! Command-line front end for the speech encryption pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use voxcrypt_core::pipeline::{
    keygen, read_padding_metadata, write_encrypted_wav, write_trace_file, ChannelSpec, Pipeline,
    PipelineConfig, RmseReport, CSV_HEADER,
};
use voxcrypt_core::speech::SpeechAnalyzer;
use voxcrypt_core::{AudioBuffer, Seed};

#[derive(Parser)]
#[command(
    name = "voxcrypt",
    about = "Distortion-tolerant speech encryption over voice channels",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Channel impairment flags shared by simulate and sweep.
#[derive(clap::Args, Clone)]
struct ChannelArgs {
    /// Channel preset: clean, awgn, gain, offset, codec, or chain
    /// (chain applies every impairment flag that was given).
    #[arg(long, default_value = "chain")]
    channel: String,
    /// AWGN signal-to-noise ratio in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Amplitude gain factor.
    #[arg(long)]
    gain: Option<f64>,
    /// Fractional delay in milliseconds.
    #[arg(long)]
    offset_ms: Option<f64>,
    /// External codec command with {in} and {out} placeholders.
    #[arg(long)]
    codec_cmd: Option<String>,
    /// Seed of the channel noise generator.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

impl ChannelArgs {
    fn to_spec(&self) -> Result<ChannelSpec> {
        let mut spec = ChannelSpec {
            gain: self.gain,
            codec_cmd: self.codec_cmd.clone(),
            offset_ms: self.offset_ms,
            snr_db: self.snr_db,
            noise_seed: self.noise_seed,
        };
        match self.channel.as_str() {
            "chain" => {}
            "clean" => spec = ChannelSpec::default(),
            "awgn" => {
                if spec.snr_db.is_none() {
                    bail!("--channel awgn requires --snr-db");
                }
                spec = ChannelSpec {
                    snr_db: spec.snr_db,
                    noise_seed: spec.noise_seed,
                    ..ChannelSpec::default()
                };
            }
            "gain" => {
                if spec.gain.is_none() {
                    bail!("--channel gain requires --gain");
                }
                spec = ChannelSpec {
                    gain: spec.gain,
                    ..ChannelSpec::default()
                };
            }
            "offset" => {
                if spec.offset_ms.is_none() {
                    bail!("--channel offset requires --offset-ms");
                }
                spec = ChannelSpec {
                    offset_ms: spec.offset_ms,
                    ..ChannelSpec::default()
                };
            }
            "codec" => {
                if spec.codec_cmd.is_none() {
                    bail!("--channel codec requires --codec-cmd");
                }
                spec = ChannelSpec {
                    codec_cmd: spec.codec_cmd.clone(),
                    ..ChannelSpec::default()
                };
            }
            other => bail!("unknown channel preset {other:?}"),
        }
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Encrypt 8 kHz narrowband speech into 16 kHz pseudo-speech.
    Encrypt {
        /// Input WAV (mono PCM16, 8 kHz).
        input: PathBuf,
        /// Output WAV (16 kHz pseudo-speech).
        output: PathBuf,
        /// 64-character lowercase hex seed.
        #[arg(long)]
        seed: String,
        /// Pipeline configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// INSECURE: write the plaintext per-frame parameter trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Decrypt frame-aligned 16 kHz pseudo-speech back into 8 kHz speech.
    Decrypt {
        /// Input WAV (mono PCM16, 16 kHz).
        input: PathBuf,
        /// Output WAV (8 kHz speech).
        output: PathBuf,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Manual alignment correction applied before frame extraction, ms.
        #[arg(long)]
        offset_ms: Option<f64>,
        /// INSECURE: write the deciphered per-frame parameter trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Encrypt, pass through a simulated channel, decrypt, and report RMSE.
    Simulate {
        /// Input WAV (mono PCM16, 8 kHz).
        input: PathBuf,
        /// Where to write the decrypted speech.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        channel: ChannelArgs,
        /// Append one CSV row (with header if the file is new) here.
        #[arg(long)]
        csv_out: Option<PathBuf>,
        /// INSECURE: write the transmit-side parameter trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a simulation per SNR value and emit one CSV row each.
    Sweep {
        /// Input WAV (mono PCM16, 8 kHz).
        input: PathBuf,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated SNR values in dB.
        #[arg(long, default_value = "25,22.5,20,17.5,15,12.5,10,7.5,5")]
        snr_db: String,
        #[command(flatten)]
        channel: ChannelArgs,
        /// CSV output path (defaults to stdout).
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Generate a fresh random 256-bit seed.
    Keygen,
    /// Dump reference data and self-check reports.
    Eval {
        /// Write the mel filterbank edge table here (defaults to stdout).
        #[arg(long)]
        csv_out: Option<PathBuf>,
        /// Also run a clean round trip on a synthetic test signal and print
        /// the RMSE report.
        #[arg(long)]
        check: bool,
        /// Seed used for the self-check round trip.
        #[arg(long, default_value = "0000000000000000000000000000000000000000000000000000000000000000")]
        seed: String,
    },
}

fn load_pipeline(config: &Option<PathBuf>) -> Result<Pipeline> {
    let cfg = match config {
        Some(path) => PipelineConfig::from_json_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    Ok(Pipeline::new(cfg)?)
}

fn parse_seed(seed: &str) -> Result<Seed> {
    Seed::from_hex(seed).context("parsing --seed")
}

fn read_input(path: &Path, expect_rate: u32) -> Result<AudioBuffer> {
    let audio =
        AudioBuffer::read_wav(path).with_context(|| format!("reading {}", path.display()))?;
    if audio.rate != expect_rate {
        bail!(
            "{} is {} Hz, expected {} Hz",
            path.display(),
            audio.rate,
            expect_rate
        );
    }
    Ok(audio)
}

fn print_report(report: &RmseReport, channel: &str) {
    println!("channel:            {channel}");
    println!("frames:             {}", report.frames);
    println!("rmse kappa (rec):   {:.6}", report.rmse_kappa_rec);
    println!("rmse kappa (dec):   {:.6}", report.rmse_kappa_dec);
    println!("rmse rho   (rec):   {:.6}", report.rmse_rho_rec);
    println!("rmse rho   (dec):   {:.6}", report.rmse_rho_dec);
    println!("rmse D-tilde:       {:.6}", report.rmse_pseudo_timbre);
    println!("rmse D:             {:.6}", report.rmse_timbre);
    println!("guard violations:   {}", report.guard_violations);
    println!("gross pitch errors: {}", report.gross_pitch_errors);
}

fn append_csv_row(path: &Path, row: &str) -> Result<()> {
    use std::io::Write;
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if need_header {
        writeln!(file, "{CSV_HEADER}")?;
    }
    writeln!(file, "{row}")?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Encrypt {
            input,
            output,
            seed,
            config,
            trace,
        } => {
            let pipeline = load_pipeline(&config)?;
            let seed = parse_seed(&seed)?;
            let audio = read_input(&input, 8000)?;
            let enc = pipeline.encrypt(&audio, &seed)?;
            write_encrypted_wav(&output, &enc.audio, enc.padding)?;
            if let Some(path) = trace {
                write_trace_file(&path, &enc.trace)?;
                eprintln!(
                    "WARNING: wrote INSECURE plaintext parameter trace to {}",
                    path.display()
                );
            }
            eprintln!(
                "encrypted {:.2} s ({} frames) -> {}",
                audio.duration_secs(),
                enc.trace.len(),
                output.display()
            );
        }
        Cmd::Decrypt {
            input,
            output,
            seed,
            config,
            offset_ms,
            trace,
        } => {
            let pipeline = load_pipeline(&config)?;
            let seed = parse_seed(&seed)?;
            let mut audio = read_input(&input, 16000)?;
            if let Some(ms) = offset_ms {
                audio = voxcrypt_core::channel::sample_offset(&audio, ms);
            }
            let padding = read_padding_metadata(&input)?;
            let dec = pipeline.decrypt(&audio, &seed, padding)?;
            dec.audio.write_wav(&output)?;
            if let Some(path) = trace {
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&serde_json::json!({
                        "warning": "INSECURE: deciphered per-frame parameters",
                        "frames": dec.trace,
                    }))?,
                )?;
                eprintln!(
                    "WARNING: wrote INSECURE deciphered parameter trace to {}",
                    path.display()
                );
            }
            eprintln!(
                "decrypted {} frames -> {}",
                dec.trace.len(),
                output.display()
            );
        }
        Cmd::Simulate {
            input,
            output,
            seed,
            config,
            channel,
            csv_out,
            trace,
        } => {
            let pipeline = load_pipeline(&config)?;
            let seed = parse_seed(&seed)?;
            let audio = read_input(&input, 8000)?;
            let spec = channel.to_spec()?;
            let sim = pipeline.simulate(&audio, &seed, &spec)?;
            if let Some(path) = output {
                sim.decrypted.write_wav(&path)?;
            }
            if let Some(path) = trace {
                write_trace_file(&path, &sim.enc_trace)?;
                eprintln!(
                    "WARNING: wrote INSECURE plaintext parameter trace to {}",
                    path.display()
                );
            }
            print_report(&sim.report, &spec.describe());
            if let Some(path) = csv_out {
                append_csv_row(&path, &sim.report.csv_row(&spec.describe(), spec.snr_db))?;
            }
        }
        Cmd::Sweep {
            input,
            seed,
            config,
            snr_db,
            channel,
            csv_out,
        } => {
            let pipeline = load_pipeline(&config)?;
            let seed = parse_seed(&seed)?;
            let audio = read_input(&input, 8000)?;
            let base = channel.to_spec()?;
            let snrs: Vec<f64> = snr_db
                .split(',')
                .map(|s| s.trim().parse::<f64>().context("parsing --snr-db"))
                .collect::<Result<_>>()?;
            let reports = pipeline.sweep(&audio, &seed, &base, &snrs)?;
            let mut rows = vec![CSV_HEADER.to_string()];
            for (snr, report) in &reports {
                let spec = ChannelSpec {
                    snr_db: Some(*snr),
                    ..base.clone()
                };
                rows.push(report.csv_row(&spec.describe(), Some(*snr)));
            }
            match csv_out {
                Some(path) => std::fs::write(&path, rows.join("\n") + "\n")?,
                None => println!("{}", rows.join("\n")),
            }
        }
        Cmd::Keygen => {
            println!("{}", keygen().to_hex());
        }
        Cmd::Eval {
            csv_out,
            check,
            seed,
        } => {
            let edges = SpeechAnalyzer::new().filterbank().edges_csv();
            match &csv_out {
                Some(path) => std::fs::write(path, &edges)?,
                None => print!("{edges}"),
            }
            if check {
                let pipeline = load_pipeline(&None)?;
                let seed = parse_seed(&seed)?;
                let audio = voxcrypt_core::pipeline::synthetic_speech(2.0, 0);
                let sim = pipeline.simulate(&audio, &seed, &ChannelSpec::default())?;
                print_report(&sim.report, "clean");
            }
        }
    }
    Ok(())
}
