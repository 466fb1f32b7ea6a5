//! `spsim`: simulate a demultiplexed quantum-dot single-photon source and
//! analyze time-tag streams.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 when an
//! analysis cannot converge or lacks data.

mod output;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use spsim::analysis::{
    bunching_envelope, count_nfold, fit_blinking, fit_pn, g2_histogram_par, g2_zero, hom_visibility, simulate_hom,
    split_hbt, CoincidenceMode,
};
use spsim::cavity::{budget, BudgetRequest};
use spsim::config::{RunConfig, SEED_ENV};
use spsim::demux::simulate_demux;
use spsim::roundtrip::roundtrip;
use spsim::source::{pairwise_overlap, simulate_source};
use spsim::timetag::{merge_streams, read_file, write_file, TagFileHeader, TimeTag};
use spsim::units::seconds_to_ps;
use spsim::{Error, Result};

use output::{emit, write_csv, write_json, RunDir};

#[derive(Parser)]
#[command(name = "spsim", version, about = "Quantum-dot single-photon source simulator and time-tag analyzer")]
struct Cli {
    /// Worker threads for simulation and histogramming (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Brightness budget of a cavity and emitter (JSON file, or - for stdin).
    Cavity {
        spec: PathBuf,
    },
    /// Simulate a run and write time tags under out/<run-id>/.
    Simulate(SimulateArgs),
    /// Run an estimator on time-tag files.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Simulate every experiment of a configuration and compare configured
    /// against recovered parameters.
    Roundtrip(RunArgs),
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// Run configuration (JSON). Defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Layout {
    /// Routed through the demultiplexer, one file per channel plus a merged file.
    Demux,
    /// Source split on a 50:50 beamsplitter onto channels 0 and 1.
    Hbt,
    /// Unbalanced Mach-Zehnder interferometer, outputs on channels 0 and 1.
    Hom,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "demux")]
    layout: Layout,
    #[arg(long)]
    n_pulses: Option<u64>,
    /// Interferometer delay for the hom layout (s); the first analysis delay by default.
    #[arg(long)]
    hom_delay: Option<f64>,
}

#[derive(Args, Serialize)]
struct Inputs {
    /// Tag file holding channel A (and channel B unless --input-b is given).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    input_b: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    channel_a: u8,
    #[arg(long, default_value_t = 1)]
    channel_b: u8,
    /// Write results under out/<run-id>/results instead of printing them.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Subcommand)]
enum Analyze {
    /// Zero-delay second-order correlation.
    G2 {
        #[command(flatten)]
        io: Inputs,
        #[command(flatten)]
        p: G2Flags,
    },
    /// Long-delay bunching envelope and telegraph fit.
    Blinking {
        #[command(flatten)]
        io: Inputs,
        #[command(flatten)]
        p: BlinkingFlags,
    },
    /// Two-photon interference visibility.
    Hom {
        #[command(flatten)]
        io: Inputs,
        #[command(flatten)]
        p: HomFlags,
    },
    /// n-fold slot coincidence rates of a demultiplexed run.
    Nfold(NfoldArgs),
    /// Per-channel efficiency from n-fold generation rates.
    Pn(PnArgs),
}

#[derive(Args, Serialize)]
struct G2Flags {
    #[arg(long, default_value_t = 12.1e-9)]
    pulse_period: f64,
    #[arg(long, default_value_t = 100e-12)]
    bin_width: f64,
    #[arg(long, default_value_t = 3e-9)]
    peak_halfwidth: f64,
    #[arg(long, default_value_t = 6)]
    n_side_peaks: usize,
}

#[derive(Args, Serialize)]
struct BlinkingFlags {
    #[arg(long, default_value_t = 12.1e-9)]
    pulse_period: f64,
    /// Histogram bin width (s); the pulse period by default.
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long, default_value_t = 40e-6)]
    max_tau: f64,
    #[arg(long, default_value_t = 100e-9)]
    smooth_halfwidth: f64,
}

#[derive(Args, Serialize)]
struct HomFlags {
    #[arg(long, default_value_t = 12.1e-9)]
    pulse_period: f64,
    #[arg(long, default_value_t = 12.1e-9)]
    delay: f64,
    #[arg(long, default_value_t = 1e-9)]
    bin_width: f64,
    #[arg(long, default_value_t = 3e-9)]
    peak_halfwidth: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    FirstN,
    AnyN,
}

#[derive(Args, Serialize)]
struct NfoldArgs {
    /// Merged tag file of a demux run.
    #[arg(long)]
    input: PathBuf,
    /// Configuration of the run; taken from the file metadata when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Integration time (s); n_pulses times the pulse period of the run by default.
    #[arg(long)]
    integration_time: Option<f64>,
    #[arg(long, value_enum, default_value = "first-n")]
    mode: ModeArg,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct PnArgs {
    /// Generation rates as n:rate pairs, e.g. 3:1494.4,4:54.2.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_rate)]
    rates: Vec<(usize, f64)>,
    #[arg(long, default_value_t = 6.4e6)]
    slots_per_second: f64,
    #[arg(long, default_value_t = 0.1)]
    source_prob: f64,
}

fn parse_rate(s: &str) -> std::result::Result<(usize, f64), String> {
    let (n, r) = s.split_once(':').ok_or_else(|| format!("expected n:rate, got {s:?}"))?;
    Ok((n.trim().parse().map_err(|e| format!("{e}"))?, r.trim().parse().map_err(|e| format!("{e}"))?))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_) | Error::InsufficientData(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Cavity { spec } => cmd_cavity(&spec),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Roundtrip(args) => cmd_roundtrip(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(fs::read_to_string(path)?)
    }
}

fn cmd_cavity(spec: &Path) -> Result<()> {
    let request: BudgetRequest = serde_json::from_str(&read_text(spec)?)?;
    let b = budget(&request)?;
    println!("{}", serde_json::to_string_pretty(&b)?);
    Ok(())
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(id) = &args.run_id {
        cfg.run.run_id = id.clone();
    }
    if let Some(d) = &args.output_dir {
        cfg.run.output_dir = d.clone();
    }
    if let Some(s) = args.seed {
        cfg.run.seed = Some(s);
    }
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve(env.as_deref())
}

#[derive(Serialize)]
struct ChannelSummary {
    channel: u8,
    detections: u64,
    rate_hz: f64,
}

#[derive(Serialize)]
struct SimulationSummary {
    n_pulses: u64,
    duration: f64,
    emitted: u64,
    impurity_photons: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    routed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discarded: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dark_counts: Option<u64>,
    channels: Vec<ChannelSummary>,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.run)?;
    if let Some(n) = args.n_pulses {
        cfg.run.n_pulses = n;
        cfg.validate()?;
    }
    let src = &cfg.source;
    let n_pulses = cfg.run.n_pulses;
    let period = src.pulse_period;
    let hom_delay = match args.layout {
        Layout::Hom => Some(args.hom_delay.or(cfg.analysis.hom_delays.first().copied()).ok_or_else(|| {
            Error::Config("the hom layout needs --hom-delay or analysis.hom_delays".into())
        })?),
        _ => None,
    };

    let events = simulate_source(src, n_pulses)?;
    let seed = cfg.seed();
    let (channels, routing) = match args.layout {
        Layout::Demux => {
            let out = simulate_demux(&events, &cfg.demux, period, n_pulses, seed)?;
            let r = (out.routed, out.discarded, out.dark_counts);
            (out.channels, Some(r))
        }
        Layout::Hbt => {
            let (a, b) = split_hbt(&events, period, seed);
            (vec![a, b], None)
        }
        Layout::Hom => {
            let overlap = |dt: f64| pairwise_overlap(dt, src).unwrap_or(0.0);
            let (a, b) = simulate_hom(&events, period, hom_delay.unwrap_or_default(), overlap, seed)?;
            (vec![a, b], None)
        }
    };

    let dir = RunDir::create(&cfg.run.output_dir, &cfg.run.run_id)?;
    let config_json = serde_json::to_value(&cfg)?;
    let layout = serde_json::to_value(args.layout)?;
    let meta = |file: Value| {
        json!({
            "command": "simulate",
            "layout": layout,
            "hom_delay": hom_delay,
            "file": file,
            "config": config_json,
        })
    };
    let n_channels = channels.len() as u8;
    for (c, tags) in channels.iter().enumerate() {
        let header = TagFileHeader::new(n_channels, &meta(json!({ "channel": c })));
        write_file(&dir.tags(&format!("channel_{c}.spstag")), &header, tags)?;
    }
    let refs: Vec<&[TimeTag]> = channels.iter().map(|c| c.as_slice()).collect();
    let merged = merge_streams(&refs)?;
    write_file(&dir.tags("merged.spstag"), &TagFileHeader::new(n_channels, &meta(json!("merged"))), &merged)?;

    let duration = n_pulses as f64 * period;
    let summary = SimulationSummary {
        n_pulses,
        duration,
        emitted: events.len() as u64,
        impurity_photons: events.iter().filter(|e| e.is_impurity).count() as u64,
        routed: routing.map(|r| r.0),
        discarded: routing.map(|r| r.1),
        dark_counts: routing.map(|r| r.2),
        channels: channels
            .iter()
            .enumerate()
            .map(|(c, t)| ChannelSummary { channel: c as u8, detections: t.len() as u64, rate_hz: t.len() as f64 / duration })
            .collect(),
    };
    write_json(&dir.results("summary.json"), &meta(json!("summary")), &summary)?;
    write_json(&dir.report("config.json"), &meta(json!("config")), &cfg)?;
    Ok(())
}

/// Timestamps of one channel of a tag file, with the file metadata.
fn load_channel(path: &Path, channel: u8) -> Result<(Vec<u64>, Value)> {
    let (header, tags) = read_file(path)?;
    let ts = tags.iter().filter(|t| t.channel == channel).map(|t| t.timestamp).collect();
    Ok((ts, header.metadata_json()?))
}

struct Loaded {
    a: Vec<u64>,
    b: Vec<u64>,
    inputs: Vec<Value>,
    dir: Option<RunDir>,
}

fn load_pair(io: &Inputs) -> Result<Loaded> {
    let (a, meta_a) = load_channel(&io.input, io.channel_a)?;
    let (b, inputs) = match &io.input_b {
        Some(p) => {
            let (b, meta_b) = load_channel(p, io.channel_b)?;
            (b, vec![meta_a, meta_b])
        }
        None => (load_channel(&io.input, io.channel_b)?.0, vec![meta_a]),
    };
    let dir = io.run_id.as_deref().map(|id| RunDir::create(&io.output_dir, id)).transpose()?;
    Ok(Loaded { a, b, inputs, dir })
}

fn analysis_meta<P: Serialize>(name: &str, io: &Inputs, p: &P, inputs: &[Value]) -> Result<Value> {
    Ok(json!({
        "command": format!("analyze {name}"),
        "channels": [io.channel_a, io.channel_b],
        "flags": serde_json::to_value(p)?,
        "inputs": inputs,
    }))
}

fn cmd_analyze(a: Analyze) -> Result<()> {
    let threads = rayon::current_num_threads();
    match a {
        Analyze::G2 { io, p } => {
            let l = load_pair(&io)?;
            let max_tau = (p.n_side_peaks as f64 + 0.5) * p.pulse_period;
            let hist = g2_histogram_par(&l.a, &l.b, p.bin_width, max_tau, threads)?;
            let g2 = g2_zero(&hist, p.pulse_period, p.peak_halfwidth, p.n_side_peaks)?;
            let meta = analysis_meta("g2", &io, &p, &l.inputs)?;
            if let Some(d) = &l.dir {
                write_csv(&d.results("g2_histogram.csv"), &hist)?;
            }
            emit(l.dir.as_ref(), "g2", &meta, &json!({ "g2_zero": g2, "coincidences": hist.total() }))
        }
        Analyze::Blinking { io, p } => {
            let l = load_pair(&io)?;
            let hist = g2_histogram_par(&l.a, &l.b, p.bin_width.unwrap_or(p.pulse_period), p.max_tau, threads)?;
            let env = bunching_envelope(&hist, p.pulse_period, p.smooth_halfwidth)?;
            let fit = fit_blinking(&env)?;
            let meta = analysis_meta("blinking", &io, &p, &l.inputs)?;
            if let Some(d) = &l.dir {
                write_csv(&d.results("blinking_histogram.csv"), &hist)?;
                write_json(&d.results("blinking_envelope.json"), &meta, &env)?;
            }
            emit(l.dir.as_ref(), "blinking", &meta, &fit)
        }
        Analyze::Hom { io, p } => {
            let l = load_pair(&io)?;
            let d = (p.delay / p.pulse_period).round();
            let max_tau = (d + 16.0).max(30.0) * p.pulse_period;
            let hist = g2_histogram_par(&l.a, &l.b, p.bin_width, max_tau, threads)?;
            let r = hom_visibility(&hist, p.pulse_period, p.peak_halfwidth, p.delay)?;
            let meta = analysis_meta("hom", &io, &p, &l.inputs)?;
            if let Some(d) = &l.dir {
                write_csv(&d.results("hom_histogram.csv"), &hist)?;
            }
            emit(l.dir.as_ref(), "hom", &meta, &r)
        }
        Analyze::Nfold(args) => cmd_nfold(&args),
        Analyze::Pn(args) => {
            let fit = fit_pn(&args.rates, args.slots_per_second, args.source_prob)?;
            let meta = json!({ "command": "analyze pn", "flags": serde_json::to_value(&args)? });
            emit(None, "pn", &meta, &fit)
        }
    }
}

fn cmd_nfold(args: &NfoldArgs) -> Result<()> {
    let (header, tags) = read_file(&args.input)?;
    let file_meta = header.metadata_json()?;
    let cfg: RunConfig = match &args.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p)?)?,
        None => match file_meta.get("config") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?,
            None => return Err(Error::Config("no --config given and the input carries no run configuration".into())),
        },
    };
    let period = cfg.source.pulse_period;
    let plan = cfg.demux.plan(period)?;
    let integration_time = args.integration_time.unwrap_or(cfg.run.n_pulses as f64 * period);
    let streams: Vec<Vec<u64>> = (0..plan.n_channels)
        .map(|c| tags.iter().filter(|t| t.channel as usize == c).map(|t| t.timestamp).collect())
        .collect();
    let refs: Vec<&[u64]> = streams.iter().map(|s| s.as_slice()).collect();
    let mode = match args.mode {
        ModeArg::FirstN => CoincidenceMode::FirstN,
        ModeArg::AnyN => CoincidenceMode::AnyN,
    };
    let table = count_nfold(
        &refs,
        &plan.slot_grid(),
        cfg.demux.coincidence_slot_tolerance,
        &plan.downstream,
        integration_time,
        mode,
    )?;
    let meta = json!({
        "command": "analyze nfold",
        "flags": serde_json::to_value(args)?,
        "tolerance_ps": seconds_to_ps(cfg.demux.coincidence_slot_tolerance),
        "inputs": [file_meta],
    });
    let dir = args.run_id.as_deref().map(|id| RunDir::create(&args.output_dir, id)).transpose()?;
    emit(dir.as_ref(), "nfold", &meta, &table)
}

fn cmd_roundtrip(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let report = roundtrip(&cfg)?;
    for c in &report.checks {
        println!("{}", c.line());
    }
    let dir = RunDir::create(&cfg.run.output_dir, &cfg.run.run_id)?;
    let meta = json!({ "command": "roundtrip", "config": serde_json::to_value(&cfg)? });
    write_json(&dir.report("roundtrip.json"), &meta, &report)?;
    Ok(())
}
