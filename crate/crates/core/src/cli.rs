//! Command-line front end: `synth`, `train`, `eval`, `simulate`, `dwt`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::{
    load_ranges, load_signals, make_fragments, split_chronological, synth_generate, write_ranges, write_signals,
    AnomalyRanges, FragmentSpec, MultiSeries, SynthConfig,
};
use crate::error::{ensure, Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{ConvSpec, ModelConfig};
use crate::numerics::Tensor;
use crate::streaming::{simulate, sweep_csv, write_text, VoteConfig, SWEEP_THRESHOLDS};
use crate::training::{predict_all, train, DetectorState, TrainConfig, TrainMode};
use crate::wavelet::{self, WaveletDecomposition, WaveletFamily};

#[derive(Debug, Parser)]
#[command(name = "waveletae", version, about = "Multi-scale wavelet autoencoder anomaly detection for multichannel signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic turbine dataset (signals.csv, ranges.csv, synth.cfg).
    Synth(SynthArgs),
    /// Train a detector and write its model file.
    Train(TrainArgs),
    /// Fragment-level metrics of a detector on labeled data.
    Eval(EvalArgs),
    /// Replay a series through the sliding-window vote engine.
    Simulate(SimulateArgs),
    /// Wavelet decomposition to coefficient files, or reconstruction from them.
    Dwt(DwtArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Key-value generator config; flags given explicitly override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of channels (channel 0 is the wind driver) [default: 8]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Duration in hours [default: 48]
    #[arg(long)]
    pub hours: Option<f64>,
    /// Sampling period in seconds [default: 7]
    #[arg(long)]
    pub sample_period: Option<f64>,
    /// Number of anomaly episodes [default: 4]
    #[arg(long)]
    pub anomalies: Option<usize>,
    /// Shortest episode in hours [default: 1.5]
    #[arg(long)]
    pub anomaly_min_hours: Option<f64>,
    /// Longest episode in hours [default: 2.5]
    #[arg(long)]
    pub anomaly_max_hours: Option<f64>,
    /// Perturbation strength inside episodes, 0..=2 [default: 0.6]
    #[arg(long)]
    pub severity: Option<f64>,
    /// Relative response noise [default: 0.15]
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Signals CSV with header `t,<ch1>,...`.
    #[arg(long)]
    pub signals: PathBuf,
    /// Anomaly ranges CSV (`start,end` per line); absent means all normal.
    #[arg(long)]
    pub ranges: Option<PathBuf>,
    /// Chronological slice of the series as fractions `FROM:TO`, e.g. `0:0.6`.
    #[arg(long, default_value = "0:1")]
    pub span: String,
}

#[derive(Debug, Args)]
pub struct FragmentArgs {
    /// Step between normal fragments.
    #[arg(long, default_value_t = 512)]
    pub neg_step: usize,
    /// Step between anomalous fragments.
    #[arg(long, default_value_t = 16)]
    pub pos_step: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fragments: FragmentArgs,
    /// `semi` (normal data only, threshold on reconstruction loss) or `supervised`.
    #[arg(long, default_value = "semi")]
    pub mode: String,
    /// Discard anomalous fragments before semi-supervised training instead of refusing.
    #[arg(long)]
    pub drop_anomalous: bool,
    /// Training epochs [default: 16 semi, 11 supervised]
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Reconstruction weight in the supervised loss
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Threshold multiplier on the mean training loss, 1..=2
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
    /// Fragment length T.
    #[arg(long, default_value_t = 512)]
    pub fragment_length: usize,
    /// Wavelet decomposition depth L
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Wavelet family: haar or db4
    #[arg(long, default_value = "haar")]
    pub family: String,
    /// Conv stack per scale as kernel:features:stride,...
    #[arg(long, default_value = "7:32:2,5:64:2")]
    pub conv: String,
    /// LSTM hidden size H
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of per-epoch mean losses.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fragments: FragmentArgs,
    /// Print a machine-readable CSV row instead of the table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Window length T_w (must equal the model's fragment length).
    #[arg(long, default_value_t = 512)]
    pub tw: usize,
    /// Block length T_s.
    #[arg(long, default_value_t = 16)]
    pub ts: usize,
    /// Positive-vote fraction needed for a positive block verdict.
    #[arg(long, default_value_t = 0.5, conflicts_with = "sweep")]
    pub vote_threshold: f64,
    /// Report metrics for vote thresholds 0.1..0.9 instead of one threshold.
    #[arg(long)]
    pub sweep: bool,
    /// Write the per-block report CSV here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DwtArgs {
    /// Signals CSV to decompose, or with --inverse a coefficient directory.
    pub input: PathBuf,
    /// Output directory, or with --inverse the reconstructed signals CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// haar or db4
    #[arg(long, default_value = "haar")]
    pub family: String,
    /// Decomposition depth L
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Reconstruct a signal from a coefficient directory.
    #[arg(long)]
    pub inverse: bool,
}

/// Parses `args` (including the program name) and runs the command.
/// Errors print as one line on stderr; clap usage errors exit with 2.
/// Writes to stdout. A closed reader (say `| head`) ends the process quietly
/// instead of panicking inside `println!`.
fn emit(args: std::fmt::Arguments<'_>) {
    let mut out = io::stdout().lock();
    if let Err(e) = out.write_fmt(args).and_then(|()| out.flush()) {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

macro_rules! out {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Dwt(a) => cmd_dwt(&a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:ident),*) => {$(
            if let Some(v) = a.$flag {
                cfg.$field = v;
            }
        )*};
    }
    set!(channels <- channels, hours <- hours, sample_period <- sample_period, anomaly_count <- anomalies,
         anomaly_min_hours <- anomaly_min_hours, anomaly_max_hours <- anomaly_max_hours,
         severity <- severity, noise <- noise);
    let (series, ranges) = synth_generate(&cfg, a.seed)?;
    ensure_dir(&a.out)?;
    write_signals(&a.out.join("signals.csv"), &series)?;
    write_ranges(&a.out.join("ranges.csv"), &ranges)?;
    let cfg_path = a.out.join("synth.cfg");
    fs::write(&cfg_path, format!("# seed {}\n{}", a.seed, cfg.to_text())).map_err(|e| Error::io(&cfg_path, e))?;
    outln!(
        "wrote {} channels × {} samples with {} anomaly ranges to {}",
        series.channels(),
        series.len(),
        ranges.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_span(span: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("span `{span}` must be FROM:TO fractions with 0 <= FROM < TO <= 1"));
    let (a, b) = span.split_once(':').ok_or_else(bad)?;
    let from: f64 = a.trim().parse().map_err(|_| bad())?;
    let to: f64 = b.trim().parse().map_err(|_| bad())?;
    ensure!((0.0..1.0).contains(&from) && from < to && to <= 1.0, Config, "{}", bad());
    Ok((from, to))
}

/// Loads signals and ranges and cuts out the requested span.
fn load_data(d: &DataArgs) -> Result<(MultiSeries, AnomalyRanges)> {
    let series = load_signals(&d.signals)?;
    let ranges = match &d.ranges {
        Some(p) => {
            let r = load_ranges(p)?;
            r.check_within(series.len())?;
            r
        }
        None => AnomalyRanges::empty(),
    };
    let (from, to) = parse_span(&d.span)?;
    if from == 0.0 && to == 1.0 {
        return Ok((series, ranges));
    }
    let mut fractions = Vec::new();
    if from > 0.0 {
        fractions.push(from);
    }
    fractions.push(to - from);
    if to < 1.0 {
        fractions.push(1.0 - to);
    }
    let pieces = split_chronological(&series, &ranges, &fractions)?;
    let piece = pieces.into_iter().nth(usize::from(from > 0.0)).expect("span piece exists");
    Ok((piece.series, piece.ranges))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mode: TrainMode = a.mode.parse()?;
    let family: WaveletFamily = a.family.parse()?;
    let conv: ConvSpec = a.conv.parse()?;
    let (series, ranges) = load_data(&a.data)?;
    let model = ModelConfig {
        channels: series.channels(),
        fragment_length: a.fragment_length,
        levels: a.levels,
        family,
        conv,
        lstm_hidden: a.hidden,
        classifier: mode == TrainMode::Supervised,
        seed: a.seed,
    };
    let mut cfg = TrainConfig::for_mode(mode, model);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.lr = a.lr;
    cfg.alpha = a.alpha;
    cfg.beta = a.beta;
    cfg.validate()?;
    let spec = FragmentSpec {
        window: a.fragment_length,
        neg_step: a.fragments.neg_step,
        pos_step: a.fragments.pos_step,
    };
    let mut fragments = make_fragments(&series, &ranges, spec)?;
    if mode == TrainMode::SemiSupervised && a.drop_anomalous {
        fragments.retain(|f| f.label == 0);
    }
    let positives = fragments.iter().filter(|f| f.label == 1).count();
    outln!(
        "training {mode} on {} fragments ({positives} anomalous) for {} epochs",
        fragments.len(),
        cfg.epochs
    );
    let (state, log) = train(&fragments, &cfg)?;
    for r in &log {
        outln!("epoch {:>3}/{}  mean loss {:.6}", r.epoch, cfg.epochs, r.mean_loss);
    }
    if let Some(t) = state.threshold {
        outln!("threshold {t:.6} (beta {} × mean training loss {:.6})", state.beta, state.train_loss_mean);
    }
    state.save(&a.out)?;
    if let Some(p) = &a.log {
        let mut s = String::from("epoch,mean_loss\n");
        for r in &log {
            let _ = writeln!(s, "{},{:?}", r.epoch, r.mean_loss);
        }
        fs::write(p, s).map_err(|e| Error::io(p, e))?;
    }
    outln!("wrote {}", a.out.display());
    Ok(())
}

fn load_detector(path: &Path, series: &MultiSeries) -> Result<DetectorState> {
    let state = DetectorState::load(path)?;
    ensure!(
        state.channels() == series.channels(),
        Dimension,
        "model expects {} channels but the data has {}",
        state.channels(),
        series.channels()
    );
    Ok(state)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (series, ranges) = load_data(&a.data)?;
    let state = load_detector(&a.model, &series)?;
    let spec = FragmentSpec {
        window: state.fragment_length(),
        neg_step: a.fragments.neg_step,
        pos_step: a.fragments.pos_step,
    };
    let fragments = make_fragments(&series, &ranges, spec)?;
    ensure!(!fragments.is_empty(), Data, "the data yields no fragments to evaluate");
    let (preds, _) = predict_all(&state, &fragments)?;
    let labels: Vec<u8> = fragments.iter().map(|f| f.label).collect();
    let report = compute_metrics(&preds, &labels)?;
    if a.csv {
        outln!("{}\n{}", MetricsReport::CSV_HEADER, report.csv_row());
    } else {
        outln!("{} fragments\n{report}", fragments.len());
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = VoteConfig {
        window: a.tw,
        step: a.ts,
        vote_threshold: a.vote_threshold,
    };
    cfg.validate()?;
    let (series, ranges) = load_data(&a.data)?;
    let state = load_detector(&a.model, &series)?;
    let result = simulate(&series, &ranges, &state, cfg)?;
    if let Some(p) = &a.report {
        write_text(p, &result.report_csv()?)?;
    }
    if a.sweep {
        out!("{}", sweep_csv(&result.sweep(&SWEEP_THRESHOLDS)?));
    } else {
        let finalized = result.blocks.iter().filter(|b| b.finalized).count();
        outln!(
            "{} blocks, {finalized} finalized with {} votes each, tau_vote {}\n{}",
            result.blocks.len(),
            cfg.votes_per_block(),
            cfg.vote_threshold,
            result.metrics(cfg.vote_threshold)?
        );
    }
    Ok(())
}

fn write_coefficients(path: &Path, names: &[String], t: &Tensor) -> Result<()> {
    let (channels, len) = t.dims2()?;
    let mut s = String::from("k");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for k in 0..len {
        let _ = write!(s, "{k}");
        for c in 0..channels {
            let _ = write!(s, ",{}", t.data()[c * len + k]);
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_coefficients(path: &Path) -> Result<(Vec<String>, Tensor)> {
    // Same layout as a signals file with `k` in place of `t`.
    let s = load_signals(path)?;
    let t = Tensor::new(&[s.channels(), s.len()], s.data().to_vec())?;
    Ok((s.channel_names().to_vec(), t))
}

/// Directory layout: `manifest.txt` (family, levels, length, sample period),
/// `detail_1.csv` .. `detail_L.csv` and `approx_L.csv`, each with header
/// `k,<channels>` and one row per coefficient index.
fn cmd_dwt(a: &DwtArgs) -> Result<()> {
    if a.inverse {
        return cmd_idwt(a);
    }
    let family: WaveletFamily = a.family.parse()?;
    let series = load_signals(&a.input)?;
    let decomp = wavelet::mdwd(&series, family, a.levels)?;
    ensure_dir(&a.out)?;
    let names = series.channel_names();
    for (l, d) in decomp.details.iter().enumerate() {
        write_coefficients(&a.out.join(format!("detail_{}.csv", l + 1)), names, d)?;
    }
    write_coefficients(&a.out.join(format!("approx_{}.csv", a.levels)), names, &decomp.approximation)?;
    let manifest = format!(
        "family {}\nlevels {}\nlength {}\nsample_period {:?}\n",
        family.name(),
        a.levels,
        series.len(),
        series.sample_period()
    );
    let mp = a.out.join("manifest.txt");
    fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    let lens: Vec<String> = decomp
        .details
        .iter()
        .chain(std::iter::once(&decomp.approximation))
        .map(|t| t.shape()[1].to_string())
        .collect();
    outln!("wrote {} levels of {} coefficients ({}) to {}", a.levels, family, lens.join("/"), a.out.display());
    Ok(())
}

fn cmd_idwt(a: &DwtArgs) -> Result<()> {
    let mp = a.input.join("manifest.txt");
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let mut family = None;
    let mut levels = None;
    let mut length = None;
    let mut period = None;
    for line in text.lines() {
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("bad manifest line `{line}`")))?;
        let bad = || Error::Format(format!("bad manifest value `{v}` for `{k}`"));
        match k {
            "family" => family = Some(v.parse::<WaveletFamily>()?),
            "levels" => levels = Some(v.parse::<usize>().map_err(|_| bad())?),
            "length" => length = Some(v.parse::<usize>().map_err(|_| bad())?),
            "sample_period" => period = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(Error::Format(format!("unknown manifest key `{k}`"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("manifest lacks `{k}`"));
    let family = family.ok_or_else(|| missing("family"))?;
    let levels = levels.ok_or_else(|| missing("levels"))?;
    let length = length.ok_or_else(|| missing("length"))?;
    let period = period.ok_or_else(|| missing("sample_period"))?;
    let mut details = Vec::with_capacity(levels);
    let mut names = Vec::new();
    for l in 1..=levels {
        let (n, t) = read_coefficients(&a.input.join(format!("detail_{l}.csv")))?;
        names = n;
        details.push(t);
    }
    let (_, approximation) = read_coefficients(&a.input.join(format!("approx_{levels}.csv")))?;
    let decomp = WaveletDecomposition {
        family,
        levels,
        original_length: length,
        details,
        approximation,
    };
    let rec = wavelet::reconstruct(&decomp)?;
    let series = MultiSeries::new(names, rec.into_data(), length, period)?;
    write_signals(&a.out, &series)?;
    outln!("wrote reconstruction of {} channels × {length} to {}", series.channels(), a.out.display());
    Ok(())
}
