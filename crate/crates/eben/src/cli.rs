//! The `eben` command line.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use eben_core::degrade::{apply_psi_fixed, apply_psi_random, DEFAULT_FIR_LENGTH};
use eben_core::loss::{loss_breakdown, ser, si_sdr, DiscOutputs};
use eben_core::nn::{count_params, generator_layout, init_weights, validate_config, Discriminators, Generator};
use eben_core::pqmf::{DEFAULT_ATTEN_DB, DEFAULT_TAPS_PER_BAND};
use eben_core::sysid::{coherence, estimate_transfer, vad_mask, DEFAULT_VAD_THRESHOLD_DB};
use eben_core::{AudioBuffer, NetworkConfig, PqmfBank, ResponseBounds, WelchConfig, SAMPLE_RATE_HZ};
use serde::Serialize;
use serde_json::json;

use crate::batch::{batch_degrade, BatchMode};
use crate::bench::{bench_forward, BenchError};
use crate::formats::{load_bounds, load_config, save_config, write_sysid};
use crate::wav::{read_wav, write_wav, Encoding};
use crate::weights_file::{load_weights, load_weights_for, read_header, save_weights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Disables ANSI colors in diagnostics when set.
pub const NO_COLOR_ENV: &str = "EBEN_NO_COLOR";

#[derive(Parser, Debug)]
#[command(name = "eben", version, about = "Multiband speech enhancement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PQMF filter-bank design and checks
    #[command(subcommand)]
    Pqmf(PqmfCmd),
    /// Simulated in-ear degradations
    #[command(subcommand)]
    Degrade(DegradeCmd),
    /// Transfer-function and coherence estimation
    #[command(subcommand)]
    Sysid(SysidCmd),
    /// Weight files
    #[command(subcommand)]
    Weights(WeightsCmd),
    /// Runs the generator on a file
    Enhance(EnhanceArgs),
    /// Runs the discriminator ensemble on a file
    DiscForward(NetFileArgs),
    /// Adversarial and feature-matching losses
    #[command(subcommand)]
    Loss(LossCmd),
    /// SI-SDR and SER of an estimate against a reference
    Metrics(MetricsArgs),
    /// Times the generator forward pass
    Bench(BenchArgs),
    /// Network configurations
    #[command(subcommand)]
    Config(ConfigCmd),
}

#[derive(Args, Debug, Clone)]
struct BankArgs {
    #[arg(long, default_value_t = 4)]
    bands: usize,
    #[arg(long, default_value_t = DEFAULT_TAPS_PER_BAND)]
    taps_per_band: usize,
    #[arg(long, default_value_t = DEFAULT_ATTEN_DB)]
    atten: f64,
}

#[derive(Subcommand, Debug)]
enum PqmfCmd {
    /// Prints the prototype design; `--out` also writes the text report
    Design {
        #[command(flatten)]
        bank: BankArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analysis then synthesis of a file; prints the delay-compensated SER
    Roundtrip {
        #[command(flatten)]
        bank: BankArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EncodingArg {
    Pcm16,
    Float32,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Pcm16 => Encoding::Pcm16,
            EncodingArg::Float32 => Encoding::Float32,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PipelineArg {
    Fixed,
    Random,
}

#[derive(Args, Debug)]
struct DegradeFileArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "float32")]
    encoding: EncodingArg,
}

#[derive(Args, Debug)]
struct RandomArgs {
    /// Bounds CSV (`freq_hz,lower_db,upper_db` or a sysid table); the
    /// built-in placeholder envelope when omitted
    #[arg(long)]
    bounds: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FIR_LENGTH)]
    fir_length: usize,
}

#[derive(Subcommand, Debug)]
enum DegradeCmd {
    /// 600 Hz lowpass plus noise at -23 dB
    Fixed(DegradeFileArgs),
    /// Random device response drawn within bounds, plus noise
    Random {
        #[command(flatten)]
        file: DegradeFileArgs,
        #[command(flatten)]
        random: RandomArgs,
    },
    /// Degrades every WAV under a directory
    Batch {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        #[command(flatten)]
        random: RandomArgs,
        #[arg(long, value_enum, default_value = "float32")]
        encoding: EncodingArg,
    },
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Clean reference recording
    #[arg(long)]
    reference: PathBuf,
    /// Recording through the device
    #[arg(long = "in")]
    input: PathBuf,
    /// Peak-normalize both signals first
    #[arg(long)]
    normalize: bool,
}

#[derive(Subcommand, Debug)]
enum SysidCmd {
    /// Writes the percentile transfer table (CSV) and prints a summary
    Estimate {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        out: PathBuf,
        /// Frames quieter than this many dB below the loudest are inactive
        #[arg(long, default_value_t = DEFAULT_VAD_THRESHOLD_DB)]
        vad_db: f64,
    },
    /// Prints the coherence curve
    Coherence {
        #[command(flatten)]
        pair: PairArgs,
    },
}

#[derive(Subcommand, Debug)]
enum WeightsCmd {
    /// Seeded initialization for a configuration
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lists the tensors in a weights file
    Inspect {
        #[arg(long)]
        weights: PathBuf,
        /// Also check the tensors against this configuration
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct NetFileArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[command(flatten)]
    net: NetFileArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "float32")]
    encoding: EncodingArg,
}

#[derive(Subcommand, Debug)]
enum LossCmd {
    /// Scores the reference as real and the input as fake
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        net: NetFileArgs,
    },
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Samples by which the input lags the reference (SER only)
    #[arg(long, default_value_t = 0)]
    delay: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Reference configuration when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
}

#[derive(Subcommand, Debug)]
enum ConfigCmd {
    /// Prints (or writes) the reference configuration
    Reference {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validates a configuration and prints its parameter counts
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
}

fn data<E: Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn at<E: Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

type Outcome = Result<serde_json::Value, Failure>;

fn read_16k(path: &Path) -> Result<AudioBuffer, Failure> {
    let buf = read_wav(path).map_err(at(path))?;
    if buf.sample_rate_hz() != SAMPLE_RATE_HZ {
        return Err(Failure::Data(format!(
            "{}: expected {SAMPLE_RATE_HZ} Hz, got {} Hz (resample first)",
            path.display(),
            buf.sample_rate_hz()
        )));
    }
    Ok(buf)
}

fn read_pair(reference: &Path, input: &Path) -> Result<(AudioBuffer, AudioBuffer), Failure> {
    let y = read_16k(reference)?;
    let x = read_16k(input)?;
    if y.len() != x.len() {
        return Err(Failure::Data(format!(
            "length mismatch: reference {} samples, input {} samples",
            y.len(),
            x.len()
        )));
    }
    Ok((y, x))
}

fn load_net(cfg_path: &Path) -> Result<NetworkConfig, Failure> {
    let cfg = load_config(cfg_path).map_err(at(cfg_path))?;
    validate_config(&cfg).map_err(at(cfg_path))?;
    Ok(cfg)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

fn bank(a: &BankArgs) -> Result<PqmfBank, Failure> {
    PqmfBank::new(a.bands, a.taps_per_band, a.atten).map_err(|e| Failure::Usage(e.to_string()))
}

fn pqmf(cmd: PqmfCmd) -> Outcome {
    match cmd {
        PqmfCmd::Design { bank: args, out } => {
            let b = bank(&args)?;
            if let Some(out) = &out {
                std::fs::write(out, b.design_report()).map_err(at(out))?;
            }
            let p = b.prototype();
            Ok(json!({
                "bands": p.bands(),
                "taps_per_band": p.taps_per_band(),
                "length": p.len(),
                "atten_db": p.atten_db(),
                "achieved_atten_db": p.achieved_atten_db(),
                "kaiser_beta": p.beta(),
                "cutoff_normalized": p.cutoff_normalized(),
                "criterion_residual": p.criterion_residual(),
                "delay": b.delay(),
                "taps": p.taps(),
            }))
        }
        PqmfCmd::Roundtrip { bank: args, input, out } => {
            let b = bank(&args)?;
            let x = read_16k(&input)?;
            let y = b.synthesize(&b.analyze(&x).map_err(data)?).map_err(data)?;
            let ser_db = ser(&y, &x, b.delay()).map_err(data)?;
            let mut clips = None;
            if let Some(out) = &out {
                clips = Some(write_wav(out, &y, Encoding::Float32).map_err(at(out))?);
            }
            Ok(json!({
                "bands": args.bands,
                "taps_per_band": args.taps_per_band,
                "atten_db": args.atten,
                "delay": b.delay(),
                "samples": x.len(),
                "ser_db": ser_db,
                "clip_count": clips,
            }))
        }
    }
}

fn bounds_from(args: &RandomArgs) -> Result<ResponseBounds, Failure> {
    let b = match &args.bounds {
        Some(p) => load_bounds(p).map_err(at(p))?,
        None => ResponseBounds::placeholder(),
    };
    b.validate(SAMPLE_RATE_HZ as f64).map_err(data)?;
    Ok(b)
}

fn degrade(cmd: DegradeCmd) -> Outcome {
    let (file, random) = match cmd {
        DegradeCmd::Batch {
            input,
            out,
            seed,
            pipeline,
            random,
            encoding,
        } => {
            let mode = match pipeline {
                PipelineArg::Fixed => BatchMode::Fixed,
                PipelineArg::Random => BatchMode::Random {
                    bounds: bounds_from(&random)?,
                    fir_length: random.fir_length,
                },
            };
            let report = batch_degrade(&input, &out, &mode, seed, encoding.into()).map_err(at(&input))?;
            return Ok(to_value(&report));
        }
        DegradeCmd::Fixed(f) => (f, None),
        DegradeCmd::Random { file, random } => (file, Some(random)),
    };
    let x = read_16k(&file.input)?;
    let (y, report) = match random {
        None => apply_psi_fixed(&x, file.seed).map_err(at(&file.input))?,
        Some(r) => apply_psi_random(&x, &bounds_from(&r)?, r.fir_length, file.seed).map_err(at(&file.input))?,
    };
    write_wav(&file.out, &y, file.encoding.into()).map_err(at(&file.out))?;
    let mut v = to_value(&report);
    v["out"] = json!(file.out);
    Ok(v)
}

fn sysid(cmd: SysidCmd) -> Outcome {
    let cfg = WelchConfig::default();
    let prepare = |pair: &PairArgs| -> Result<(AudioBuffer, AudioBuffer), Failure> {
        let (y, x) = read_pair(&pair.reference, &pair.input)?;
        if pair.normalize {
            return Ok((y.peak_normalize(1.0).map_err(data)?, x.peak_normalize(1.0).map_err(data)?));
        }
        Ok((y, x))
    };
    match cmd {
        SysidCmd::Estimate { pair, out, vad_db } => {
            let (y, x) = prepare(&pair)?;
            let vad = vad_mask(&y, vad_db, cfg.fft_size).map_err(|e| Failure::Usage(e.to_string()))?;
            let est = estimate_transfer(&y, &x, &cfg, &vad).map_err(data)?;
            let coh = coherence(&y, &x, &cfg).map_err(data)?;
            let file = std::fs::File::create(&out).map_err(at(&out))?;
            write_sysid(&est, &coh, std::io::BufWriter::new(file)).map_err(at(&out))?;
            Ok(json!({
                "out": out,
                "bins": est.freq_grid_hz.len(),
                "n_segments": est.n_segments,
                "active_frames": vad.active_count(),
                "coherence_frames": coh.frames,
            }))
        }
        SysidCmd::Coherence { pair } => {
            let (y, x) = prepare(&pair)?;
            Ok(to_value(&coherence(&y, &x, &cfg).map_err(data)?))
        }
    }
}

fn weights(cmd: WeightsCmd) -> Outcome {
    match cmd {
        WeightsCmd::Init { config, seed, out } => {
            let cfg = load_net(&config)?;
            let w = init_weights(&cfg, seed).map_err(data)?;
            save_weights(&w, &out).map_err(at(&out))?;
            Ok(json!({ "out": out, "tensors": w.len(), "params": w.param_count(), "seed": seed }))
        }
        WeightsCmd::Inspect { weights, config } => {
            let bytes = std::fs::read(&weights).map_err(at(&weights))?;
            let (header, payload) = read_header(&bytes).map_err(at(&weights))?;
            let store = load_weights(&weights).map_err(at(&weights))?;
            let mut v = json!({
                "tensors": store.len(),
                "params": store.param_count(),
                "payload_bytes": payload.len(),
                "entries": header,
            });
            if let Some(c) = config {
                let cfg = load_net(&c)?;
                let layout = generator_layout(&cfg);
                let gen_ok = store.check_layout(&layout).is_ok();
                let disc_ok = store.check_layout(&eben_core::nn::discriminator_layout(&cfg)).is_ok();
                v["generator_layout_ok"] = json!(gen_ok);
                v["discriminator_layout_ok"] = json!(disc_ok);
            }
            Ok(v)
        }
    }
}

fn generator_for(net: &NetFileArgs) -> Result<Generator, Failure> {
    let cfg = load_net(&net.config)?;
    let w = load_weights_for(&net.weights, &generator_layout(&cfg)).map_err(at(&net.weights))?;
    Generator::new(&cfg, &w).map_err(data)
}

fn discriminators_for(net: &NetFileArgs) -> Result<Discriminators, Failure> {
    let cfg = load_net(&net.config)?;
    let w = load_weights_for(&net.weights, &eben_core::nn::discriminator_layout(&cfg)).map_err(at(&net.weights))?;
    Discriminators::new(&cfg, &w).map_err(data)
}

fn enhance(args: EnhanceArgs) -> Outcome {
    let g = generator_for(&args.net)?;
    let x = read_16k(&args.net.input)?;
    let y = g.forward(&x).map_err(data)?;
    let clips = write_wav(&args.out, &y, args.encoding.into()).map_err(at(&args.out))?;
    Ok(json!({
        "out": args.out,
        "samples": y.len(),
        "peak": y.peak(),
        "clip_count": clips,
    }))
}

fn disc_forward(net: NetFileArgs) -> Outcome {
    let d = discriminators_for(&net)?;
    let x = read_16k(&net.input)?;
    let outs = d.forward(&x).map_err(data)?;
    let scales: Vec<_> = outs
        .iter()
        .map(|s| {
            let mean = s.logits.iter().map(|&v| v as f64).sum::<f64>() / s.logits.len().max(1) as f64;
            json!({
                "scale": s.scale,
                "logits": s.logits.len(),
                "logit_mean": mean,
                "features": s.features.iter().map(|f| [f.channels, f.frames]).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "scales": scales }))
}

fn loss(cmd: LossCmd) -> Outcome {
    let LossCmd::Eval { reference, net } = cmd;
    let d = discriminators_for(&net)?;
    let (y, x) = read_pair(&reference, &net.input)?;
    let real = DiscOutputs::from(d.forward(&y).map_err(data)?.as_slice());
    let fake = DiscOutputs::from(d.forward(&x).map_err(data)?.as_slice());
    Ok(to_value(&loss_breakdown(&[(real, fake)]).map_err(data)?))
}

fn metrics(args: MetricsArgs) -> Outcome {
    let (y, x) = read_pair(&args.reference, &args.input)?;
    Ok(json!({
        "si_sdr_db": si_sdr(&x, &y).map_err(data)?,
        "ser_db": ser(&x, &y, args.delay).map_err(data)?,
        "length": x.len(),
        "delay": args.delay,
    }))
}

fn bench(args: BenchArgs) -> Outcome {
    let cfg = match &args.config {
        Some(p) => load_net(p)?,
        None => NetworkConfig::reference(),
    };
    match bench_forward(&cfg, args.seconds, args.reps, args.warmup, args.seed) {
        Ok(r) => Ok(to_value(&r)),
        Err(BenchError::InvalidParams(m)) => Err(Failure::Usage(m)),
        Err(e) => Err(data(e)),
    }
}

fn config(cmd: ConfigCmd) -> Outcome {
    match cmd {
        ConfigCmd::Reference { out } => {
            let cfg = NetworkConfig::reference();
            if let Some(out) = &out {
                save_config(&cfg, out).map_err(at(out))?;
            }
            Ok(to_value(&cfg))
        }
        ConfigCmd::Check { config } => {
            let cfg = load_config(&config).map_err(at(&config))?;
            let warnings = validate_config(&cfg).map_err(at(&config))?;
            let (g, d) = count_params(&cfg);
            Ok(json!({
                "valid": true,
                "warnings": warnings.iter().map(|w| w.message.clone()).collect::<Vec<_>>(),
                "generator_params": g,
                "discriminator_params": d,
            }))
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Pqmf(c) => pqmf(c),
        Command::Degrade(c) => degrade(c),
        Command::Sysid(c) => sysid(c),
        Command::Weights(c) => weights(c),
        Command::Enhance(a) => enhance(a),
        Command::DiscForward(a) => disc_forward(a),
        Command::Loss(c) => loss(c),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => bench(a),
        Command::Config(c) => config(c),
    }
}

/// Runs the CLI with explicit streams. Reports go to `out` as one JSON
/// document; diagnostics go to `err`.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write, color: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = if color { e.render().ansi().to_string() } else { e.render().to_string() };
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let (label, code, msg) = match dispatch(cli.command) {
        Ok(v) => {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"));
            return EXIT_OK;
        }
        Err(Failure::Usage(m)) => ("usage error", EXIT_USAGE, m),
        Err(Failure::Data(m)) => ("error", EXIT_DATA, m),
    };
    if color {
        let _ = writeln!(err, "\x1b[1;31m{label}:\x1b[0m {msg}");
    } else {
        let _ = writeln!(err, "{label}: {msg}");
    }
    code
}

/// Entry point of the `eben` binary: process streams, color on a terminal
/// unless `EBEN_NO_COLOR` is set.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let color = std::env::var_os(NO_COLOR_ENV).is_none() && std::io::stderr().is_terminal();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock(), color)
}
