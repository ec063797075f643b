//! Command-line entry point: synthesize recordings, render heatmaps, build
//! datasets, train, evaluate, and predict.
//!
//! Every flag can also be given in a config file of line-oriented
//! `key = value` pairs (`#` starts a comment); keys match the flag names
//! without the leading dashes. Precedence is defaults < config file <
//! flags, and `IMGNILM_SEED` serves as a seed of last resort when neither
//! a flag nor the config file provides one.
//!
//! Exit codes: 0 on success (including `--help`), 1 on usage errors, 2 on
//! data or validation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{
    load_checkpoint_file, save_checkpoint_file, CheckpointError, CheckpointMeta,
};
use crate::dataset::{
    build_classes, load_split, write_dataset, ActivityRule, DatasetError, DatasetManifest,
    EmissionPolicy, Split, SplitSpec,
};
use crate::heatmap::{
    encode_window, read_png, slice_windows, write_png, HeatmapError, HeatmapSpec,
};
use crate::nn::NetworkConfig;
use crate::series::{HouseRecording, SeriesError};
use crate::synth::{synth_house, ApplianceModel};
use crate::trainer::{
    evaluate, image_to_tensor, predict, to_samples, train, write_history, Sample, TrainConfig,
    TrainError,
};

/// Run the CLI against the process arguments and return its exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Run the CLI against an explicit argument list (the first entry is the
/// program name, as in `argv`).
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            2
        }
    }
}

#[derive(Debug)]
enum CliError {
    /// Malformed invocation: bad flag syntax, unknown config key, missing
    /// required setting. Exit code 1.
    Usage(String),
    /// The invocation was well-formed but the data or settings failed a
    /// module's preconditions. Exit code 2.
    Data(String),
}

macro_rules! data_error_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Data(err.to_string())
            }
        })*
    };
}

data_error_from!(
    SeriesError,
    HeatmapError,
    DatasetError,
    TrainError,
    CheckpointError,
    std::io::Error
);

/// Print one line to stdout. Returns `false` when the reader has closed
/// the pipe, which callers treat as "stop producing output" rather than
/// an error, per the usual convention for tools piped into `head`.
fn emit(args: std::fmt::Arguments<'_>) -> Result<bool, CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_fmt(args).and_then(|()| out.write_all(b"\n")) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(false),
        Err(e) => Err(e.into()),
    }
}

#[derive(Parser)]
#[command(
    name = "imgnilm",
    version,
    about = "Appliance on/off detection from heatmap-encoded power data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic house recording
    Synth(SynthArgs),
    /// Render a channel's daily windows as heatmap PNGs
    Heatmap(HeatmapArgs),
    /// Encode a house into a labeled, split image dataset
    BuildDataset(BuildDatasetArgs),
    /// Train a classifier on a dataset and write a checkpoint
    Train(TrainArgs),
    /// Report confusion metrics of a checkpoint on one dataset split
    Eval(EvalArgs),
    /// Classify heatmap images with a trained checkpoint
    Predict(PredictArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for all randomness [default: IMGNILM_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// House directory to write [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Days to generate [default: 30]
    #[arg(long)]
    days: Option<u32>,
    /// Constant base load in watts [default: 300]
    #[arg(long)]
    base_load: Option<f64>,
    /// Std of Gaussian meter noise in watts [default: 30]
    #[arg(long)]
    noise_std: Option<f64>,
    /// Sampling period in seconds [default: 6]
    #[arg(long)]
    period: Option<i64>,
    /// Appliance spec NAME=KIND:key=value,... — may repeat. KIND is
    /// two-state (watts, events, on-secs), multi-state (watts as W1/W2/...,
    /// events, on-secs), or cycling (watts, cycle-secs, on-secs); all take
    /// an optional noise. In a config file, separate specs with ';'.
    #[arg(long = "model", value_name = "SPEC")]
    model: Vec<String>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// House directory to read [required]
    #[arg(long, value_name = "DIR")]
    house: Option<PathBuf>,
    /// Directory for the PNGs [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Render this appliance channel instead of the aggregate
    #[arg(long, value_name = "NAME")]
    appliance: Option<String>,
    /// Window length in hours [default: 24]
    #[arg(long)]
    window_hours: Option<u32>,
    /// Within-hour aggregation step in seconds [default: 6]
    #[arg(long)]
    step_seconds: Option<u32>,
    /// Seconds between window starts [default: 86400]
    #[arg(long)]
    stride_seconds: Option<i64>,
    /// Sampling period in seconds [default: 6]
    #[arg(long)]
    period: Option<i64>,
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for the split shuffle [default: IMGNILM_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// House directory to read [required]
    #[arg(long, value_name = "DIR")]
    house: Option<PathBuf>,
    /// Appliance channel to label against [required]
    #[arg(long, value_name = "NAME")]
    appliance: Option<String>,
    /// Dataset directory to write [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Window length in hours [default: 24]
    #[arg(long)]
    window_hours: Option<u32>,
    /// Within-hour aggregation step in seconds [default: 6]
    #[arg(long)]
    step_seconds: Option<u32>,
    /// Seconds between window starts [default: 86400]
    #[arg(long)]
    stride_seconds: Option<i64>,
    /// Square side the images are resized to [default: 300]
    #[arg(long)]
    input_size: Option<usize>,
    /// Fraction of each class held out for test [default: 0.2]
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Fraction of the remaining train images held out for validation
    /// [default: 0.2]
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Watts above which a step counts as appliance activity [default: 10]
    #[arg(long)]
    on_threshold: Option<f64>,
    /// Consecutive active steps required to call a window active
    /// [default: 5]
    #[arg(long)]
    min_on_steps: Option<usize>,
    /// Also emit a Class I image for every inactive window
    #[arg(long)]
    include_inactive: bool,
    /// Sampling period in seconds [default: 6]
    #[arg(long)]
    period: Option<i64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for all randomness [default: IMGNILM_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset manifest.jsonl; images load from its directory [required]
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Directory for model.ckpt and history.txt [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Training epochs [default: 125]
    #[arg(long)]
    epochs: Option<u32>,
    /// Minibatch size [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Dropout rate after the last pool [default: 0]
    #[arg(long)]
    dropout: Option<f64>,
    /// Image side the network expects [default: 300]
    #[arg(long)]
    input_size: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Trained model checkpoint [required]
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Dataset manifest.jsonl; images load from its directory [required]
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Which split to score: train, val, or test [default: test]
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// Config file of key = value lines
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Trained model checkpoint [required]
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Heatmap PNGs to classify
    #[arg(value_name = "IMAGE", required = true, num_args = 1..)]
    images: Vec<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::BuildDataset(args) => cmd_build_dataset(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
    }
}

/// Every key a config file may define; the set mirrors the flags so one
/// file can drive several subcommands.
const KNOWN_KEYS: &[&str] = &[
    "appliance",
    "base-load",
    "batch-size",
    "checkpoint",
    "days",
    "dropout",
    "epochs",
    "house",
    "include-inactive",
    "input-size",
    "lr",
    "manifest",
    "min-on-steps",
    "model",
    "noise-std",
    "on-threshold",
    "out",
    "period",
    "seed",
    "split",
    "step-seconds",
    "stride-seconds",
    "test-fraction",
    "val-fraction",
    "window-hours",
];

/// Settings read from the config file, consulted when a flag is absent.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let values = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config file {}: {e}", p.display()))
                })?;
                parse_config(&text)?
            }
        };
        Ok(Self { values })
    }

    /// Flag value if given, else the config value, else the default.
    fn get<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get_opt(key, flag)?.unwrap_or(default))
    }

    fn get_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key}: bad value {raw:?}: {e}"))),
        }
    }

    /// Seed resolution: flag, then config, then IMGNILM_SEED, then 0.
    fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        if let Some(seed) = self.get_opt("seed", flag)? {
            return Ok(seed);
        }
        match std::env::var("IMGNILM_SEED") {
            Ok(raw) => raw
                .parse()
                .map_err(|e| CliError::Usage(format!("IMGNILM_SEED: bad value {raw:?}: {e}"))),
            Err(std::env::VarError::NotPresent) => Ok(0),
            Err(e) => Err(CliError::Usage(format!("IMGNILM_SEED: {e}"))),
        }
    }

    /// A switch: the flag can only turn it on; the config may say
    /// `key = true` or `key = false`.
    fn switch(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        self.get(key, None, false)
    }

    /// Appliance model specs: the repeated flag wins; otherwise the config
    /// key `model` may hold several specs separated by ';'.
    fn models(&self, flags: &[String]) -> Result<Vec<(String, ApplianceModel)>, CliError> {
        let specs: Vec<&str> = if !flags.is_empty() {
            flags.iter().map(String::as_str).collect()
        } else {
            self.values
                .get("model")
                .map(|raw| raw.split(';').map(str::trim).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default()
        };
        specs.into_iter().map(parse_model_spec).collect()
    }
}

fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {line_no}: expected `key = value`, got {line:?}"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("config line {line_no}: unknown key {key:?}")));
        }
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {line_no}: duplicate key {key:?}")));
        }
    }
    Ok(values)
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required setting --{key} (or `{key}` in the config file)")))
}

fn parse_model_spec(spec: &str) -> Result<(String, ApplianceModel), CliError> {
    let usage =
        |message: String| CliError::Usage(format!("appliance model {spec:?}: {message}"));
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| usage("expected NAME=KIND:key=value,...".into()))?;
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(usage(format!("name {name:?} must be non-empty letters, digits, or dashes")));
    }
    if name == "aggregate" {
        return Err(usage("the name `aggregate` is reserved for the mains channel".into()));
    }
    let (kind, params) = rest
        .split_once(':')
        .ok_or_else(|| usage("expected KIND:key=value,... after the name".into()))?;

    let mut watts: Option<Vec<f64>> = None;
    let mut events: Option<f64> = None;
    let mut on_secs: Option<f64> = None;
    let mut cycle_secs: Option<f64> = None;
    let mut noise: Option<f64> = None;
    let number = |key: &str, raw: &str| {
        raw.trim()
            .parse::<f64>()
            .map_err(|e| usage(format!("{key}: bad number {raw:?}: {e}")))
    };
    for piece in params.split(',') {
        let (key, value) = piece
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value, got {piece:?}")))?;
        match key.trim() {
            "watts" => {
                watts = Some(
                    value
                        .split('/')
                        .map(|w| number("watts", w))
                        .collect::<Result<Vec<f64>, CliError>>()?,
                )
            }
            "events" => events = Some(number("events", value)?),
            "on-secs" => on_secs = Some(number("on-secs", value)?),
            "cycle-secs" => cycle_secs = Some(number("cycle-secs", value)?),
            "noise" => noise = Some(number("noise", value)?),
            other => return Err(usage(format!("unknown key {other:?}"))),
        }
    }

    let need = |value: Option<f64>, key: &str| {
        value.ok_or_else(|| usage(format!("missing {key}= for kind {}", kind.trim())))
    };
    let reject = |value: Option<f64>, key: &str| match value {
        Some(_) => Err(usage(format!("{key}= does not apply to kind {}", kind.trim()))),
        None => Ok(()),
    };
    let watts = watts.ok_or_else(|| usage("missing watts=".into()))?;
    let one_watt = |watts: &[f64]| {
        if watts.len() == 1 {
            Ok(watts[0])
        } else {
            Err(usage(format!("kind {} takes a single watts value", kind.trim())))
        }
    };
    let mut model = match kind.trim() {
        "two-state" => {
            reject(cycle_secs, "cycle-secs")?;
            ApplianceModel::two_state(one_watt(&watts)?, need(events, "events")?, need(on_secs, "on-secs")?)
        }
        "multi-state" => {
            reject(cycle_secs, "cycle-secs")?;
            if watts.len() < 2 {
                return Err(usage("multi-state needs watts=W1/W2/... with at least two values".into()));
            }
            ApplianceModel::multi_state(watts, need(events, "events")?, need(on_secs, "on-secs")?)
        }
        "cycling" => {
            reject(events, "events")?;
            ApplianceModel::always_on_cycling(
                one_watt(&watts)?,
                need(cycle_secs, "cycle-secs")?,
                need(on_secs, "on-secs")?,
            )
        }
        other => {
            return Err(usage(format!(
                "unknown kind {other:?}, expected two-state, multi-state, or cycling"
            )))
        }
    };
    if let Some(std) = noise {
        model = model.with_noise(std);
    }
    Ok((name.to_string(), model))
}

fn parse_split(raw: &str) -> Result<Split, CliError> {
    match raw {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => {
            Err(CliError::Usage(format!("unknown split {other:?}, expected train, val, or test")))
        }
    }
}

/// Reject stride/window combinations the window slicer cannot represent
/// before any file is touched.
fn validate_windowing(spec: &HeatmapSpec, stride: i64, period: i64) -> Result<(), CliError> {
    spec.validate()?;
    if period <= 0 {
        return Err(CliError::Data(format!("sampling period must be > 0, got {period}")));
    }
    if stride <= 0 || stride % period != 0 {
        return Err(CliError::Data(format!(
            "stride of {stride}s must be a positive multiple of the {period}s sampling period"
        )));
    }
    if spec.window_seconds() % period != 0 {
        return Err(CliError::Data(format!(
            "a {}h window is not a whole number of {period}s samples",
            spec.window_hours
        )));
    }
    Ok(())
}

fn heatmap_spec(
    s: &Settings,
    window_hours: Option<u32>,
    step_seconds: Option<u32>,
) -> Result<HeatmapSpec, CliError> {
    let default = HeatmapSpec::default();
    Ok(HeatmapSpec {
        window_hours: s.get("window-hours", window_hours, default.window_hours)?,
        step_seconds: s.get("step-seconds", step_seconds, default.step_seconds)?,
        ..default
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let seed = s.seed(args.seed)?;
    let out: PathBuf = require(s.get_opt("out", args.out)?, "out")?;
    let days = s.get("days", args.days, 30)?;
    let base_load = s.get("base-load", args.base_load, 300.0)?;
    let noise_std = s.get("noise-std", args.noise_std, 30.0)?;
    let period = s.get("period", args.period, 6)?;
    let models = s.models(&args.model)?;

    let house = synth_house(&models, base_load, noise_std, days, period, seed)?;
    house.save_dir(&out)?;
    emit(format_args!(
        "wrote {days} days at {period}s period ({} appliance channels) to {}",
        models.len(),
        out.display()
    ))?;
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let house_dir: PathBuf = require(s.get_opt("house", args.house)?, "house")?;
    let out: PathBuf = require(s.get_opt("out", args.out)?, "out")?;
    let appliance = s.get_opt("appliance", args.appliance)?;
    let spec = heatmap_spec(&s, args.window_hours, args.step_seconds)?;
    let stride = s.get("stride-seconds", args.stride_seconds, 86400)?;
    let period = s.get("period", args.period, 6)?;
    validate_windowing(&spec, stride, period)?;

    let house = HouseRecording::load_dir(&house_dir, period)?;
    let (channel, series) = match &appliance {
        None => ("aggregate".to_string(), house.aggregate()),
        Some(name) => (
            name.clone(),
            house.appliance(name).ok_or_else(|| {
                CliError::Data(format!("house has no appliance channel named {name:?}"))
            })?,
        ),
    };
    let windows = slice_windows(series, &spec, stride);
    fs::create_dir_all(&out)?;
    for window in &windows {
        let image = encode_window(window, &spec)?;
        let path = out.join(format!("{channel}_{}.png", window.start()));
        write_png(&image, BufWriter::new(fs::File::create(path)?))?;
    }
    emit(format_args!("wrote {} heatmaps to {}", windows.len(), out.display()))?;
    Ok(())
}

fn cmd_build_dataset(args: BuildDatasetArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let seed = s.seed(args.seed)?;
    let house_dir: PathBuf = require(s.get_opt("house", args.house)?, "house")?;
    let appliance: String = require(s.get_opt("appliance", args.appliance)?, "appliance")?;
    let out: PathBuf = require(s.get_opt("out", args.out)?, "out")?;
    let spec = heatmap_spec(&s, args.window_hours, args.step_seconds)?;
    let stride = s.get("stride-seconds", args.stride_seconds, 86400)?;
    let period = s.get("period", args.period, 6)?;
    let input_size = s.get("input-size", args.input_size, 300)?;
    let rule_default = ActivityRule::default();
    let rule = ActivityRule {
        on_threshold: s.get("on-threshold", args.on_threshold, rule_default.on_threshold)?,
        min_consecutive: s.get("min-on-steps", args.min_on_steps, rule_default.min_consecutive)?,
    };
    let split_default = SplitSpec::new(seed);
    let split = SplitSpec {
        test_fraction: s.get("test-fraction", args.test_fraction, split_default.test_fraction)?,
        val_fraction_of_train: s.get(
            "val-fraction",
            args.val_fraction,
            split_default.val_fraction_of_train,
        )?,
        seed,
    };
    let policy = if s.switch("include-inactive", args.include_inactive)? {
        EmissionPolicy::WithInactiveClassI
    } else {
        EmissionPolicy::BalancedPairs
    };
    validate_windowing(&spec, stride, period)?;
    if input_size == 0 {
        return Err(CliError::Data("input size must be at least 1 pixel".into()));
    }

    let house = HouseRecording::load_dir(&house_dir, period)?;
    let house_id = house_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "house".to_string());
    let images = build_classes(&house_id, &house, &appliance, &spec, &rule, stride, policy)?;
    let manifest = write_dataset(&out, &images, &split, Some(input_size))?;

    let count = |split: Split| manifest.split_entries(split).count();
    emit(format_args!(
        "wrote {} images ({} train / {} val / {} test) and manifest.jsonl to {}",
        manifest.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        out.display()
    ))?;
    Ok(())
}

fn load_samples(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<Sample>, CliError> {
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(to_samples(&load_split(dir, manifest, split)?))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let seed = s.seed(args.seed)?;
    let manifest_path: PathBuf = require(s.get_opt("manifest", args.manifest)?, "manifest")?;
    let out: PathBuf = require(s.get_opt("out", args.out)?, "out")?;
    let defaults = TrainConfig::new(seed);
    let train_config = TrainConfig {
        epochs: s.get("epochs", args.epochs, defaults.epochs)?,
        batch_size: s.get("batch-size", args.batch_size, defaults.batch_size)?,
        lr: s.get("lr", args.lr, defaults.lr)?,
        seed,
        shuffle_each_epoch: true,
    };
    let net_config = NetworkConfig {
        input_side: s.get("input-size", args.input_size, NetworkConfig::default().input_side)?,
        dropout_rate: s.get("dropout", args.dropout, 0.0)?,
        ..NetworkConfig::default()
    };

    let manifest = DatasetManifest::load_path(&manifest_path)?;
    let train_set = load_samples(&manifest_path, &manifest, Split::Train)?;
    let val_set = load_samples(&manifest_path, &manifest, Split::Val)?;
    let (net, history) = train(net_config, &train_config, &train_set, &val_set)?;

    fs::create_dir_all(&out)?;
    let ckpt_path = out.join("model.ckpt");
    save_checkpoint_file(&net, CheckpointMeta { seed, epochs: train_config.epochs }, &ckpt_path)?;
    let history_path = out.join("history.txt");
    write_history(&history, BufWriter::new(fs::File::create(&history_path)?))?;
    if let Some(last) = history.last() {
        emit(format_args!(
            "epoch {}: train_loss {:.6} train_acc {:.4} val_acc {:.4}",
            last.epoch, last.train_loss, last.train_accuracy, last.val_accuracy
        ))?;
    }
    emit(format_args!("wrote {} and {}", ckpt_path.display(), history_path.display()))?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let checkpoint: PathBuf = require(s.get_opt("checkpoint", args.checkpoint)?, "checkpoint")?;
    let manifest_path: PathBuf = require(s.get_opt("manifest", args.manifest)?, "manifest")?;
    let split = parse_split(&s.get("split", args.split, "test".to_string())?)?;

    let (net, _meta) = load_checkpoint_file(&checkpoint)?;
    let manifest = DatasetManifest::load_path(&manifest_path)?;
    let samples = load_samples(&manifest_path, &manifest, split)?;
    let metrics = evaluate(&net, &samples)?;
    let report = format!(
        "split {split}\nimages {}\naccuracy {:.6}\ntrue_pos {}\ntrue_neg {}\n\
         false_pos {}\nfalse_neg {}",
        metrics.total(),
        metrics.accuracy(),
        metrics.true_pos,
        metrics.true_neg,
        metrics.false_pos,
        metrics.false_neg
    );
    emit(format_args!("{report}"))?;
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let s = Settings::load(args.config.as_deref())?;
    let checkpoint: PathBuf = require(s.get_opt("checkpoint", args.checkpoint)?, "checkpoint")?;
    let (net, _meta) = load_checkpoint_file(&checkpoint)?;
    for path in &args.images {
        let image = read_png(BufReader::new(fs::File::open(path)?))?;
        let pixels = image_to_tensor(&image);
        let (label, probs) = predict(&net, &pixels)?;
        let keep_going =
            emit(format_args!("{}\t{label}\t{:.6}\t{:.6}", path.display(), probs[0], probs[1]))?;
        if !keep_going {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ApplianceKind;

    #[test]
    fn config_parses_comments_and_whitespace() {
        let text = "# run settings\n\n  days = 10  # ten of them\nseed=42\nlr = 1e-3\n";
        let values = parse_config(text).unwrap();
        assert_eq!(values.get("days").map(String::as_str), Some("10"));
        assert_eq!(values.get("seed").map(String::as_str), Some("42"));
        assert_eq!(values.get("lr").map(String::as_str), Some("1e-3"));
        assert_eq!(values.len(), 3);
    }

    #[test]
    fn config_rejects_unknown_missing_and_duplicate_keys() {
        for (text, fragment) in [
            ("dayz = 10", "unknown key"),
            ("days 10", "expected `key = value`"),
            ("days = 1\ndays = 2", "duplicate key"),
        ] {
            match parse_config(text) {
                Err(CliError::Usage(msg)) => {
                    assert!(msg.contains(fragment), "{msg:?} should mention {fragment:?}")
                }
                other => panic!("expected usage error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let s = Settings { values: parse_config("epochs = 10").unwrap() };
        assert_eq!(s.get("epochs", Some(3u32), 125).unwrap(), 3, "flag wins");
        assert_eq!(s.get("epochs", None::<u32>, 125).unwrap(), 10, "config beats default");
        assert_eq!(s.get("batch-size", None::<u32>, 32).unwrap(), 32, "default fills the gap");
    }

    #[test]
    fn config_values_must_parse_when_used() {
        let s = Settings { values: parse_config("epochs = soon").unwrap() };
        assert!(matches!(s.get("epochs", None::<u32>, 125), Err(CliError::Usage(_))));
    }

    #[test]
    fn seed_prefers_flag_then_config() {
        let s = Settings { values: parse_config("seed = 9").unwrap() };
        assert_eq!(s.seed(Some(4)).unwrap(), 4);
        assert_eq!(s.seed(None).unwrap(), 9);
    }

    #[test]
    fn model_spec_two_state() {
        let (name, model) =
            parse_model_spec("kettle=two-state:watts=2400,events=4,on-secs=300").unwrap();
        assert_eq!(name, "kettle");
        assert_eq!(model.kind, ApplianceKind::TwoState);
        assert_eq!(model.rated_watts, vec![2400.0]);
        assert_eq!(model.events_per_day, 4.0);
        assert_eq!(model.mean_on_secs, 300.0);
        assert_eq!(model.noise_std, 0.0);
    }

    #[test]
    fn model_spec_multi_state_with_noise() {
        let (name, model) =
            parse_model_spec("dishwasher=multi-state:watts=2000/1200,events=1,on-secs=5400,noise=15")
                .unwrap();
        assert_eq!(name, "dishwasher");
        assert_eq!(model.kind, ApplianceKind::MultiState);
        assert_eq!(model.rated_watts, vec![2000.0, 1200.0]);
        assert_eq!(model.noise_std, 15.0);
    }

    #[test]
    fn model_spec_cycling() {
        let (_, model) =
            parse_model_spec("fridge=cycling:watts=120,cycle-secs=3600,on-secs=1500").unwrap();
        assert_eq!(model.kind, ApplianceKind::AlwaysOnCycling);
        assert_eq!(model.cycle_secs, 3600.0);
        assert_eq!(model.mean_on_secs, 1500.0);
    }

    #[test]
    fn model_spec_rejects_malformed_input() {
        for spec in [
            "kettle",
            "kettle=warm:watts=1",
            "kettle=two-state:watts=1,events=2",
            "kettle=two-state:watts=1,events=2,on-secs=3,volume=9",
            "kettle=two-state:watts=1/2,events=2,on-secs=3",
            "kettle=two-state:watts=1,events=2,on-secs=3,cycle-secs=4",
            "fridge=cycling:watts=120,cycle-secs=3600,on-secs=1500,events=2",
            "dishwasher=multi-state:watts=2000,events=1,on-secs=5400",
            "aggregate=two-state:watts=1,events=2,on-secs=3",
            "bad name=two-state:watts=1,events=2,on-secs=3",
        ] {
            assert!(
                matches!(parse_model_spec(spec), Err(CliError::Usage(_))),
                "{spec:?} should be a usage error"
            );
        }
    }

    #[test]
    fn models_come_from_flags_or_config() {
        let s = Settings {
            values: parse_config(
                "model = a=two-state:watts=1,events=2,on-secs=3; b=two-state:watts=2,events=2,on-secs=3",
            )
            .unwrap(),
        };
        let from_config = s.models(&[]).unwrap();
        assert_eq!(from_config.len(), 2);
        assert_eq!(from_config[0].0, "a");
        assert_eq!(from_config[1].0, "b");
        let flag = vec!["c=two-state:watts=3,events=2,on-secs=3".to_string()];
        let from_flags = s.models(&flag).unwrap();
        assert_eq!(from_flags.len(), 1, "flags replace the config list");
        assert_eq!(from_flags[0].0, "c");
    }

    #[test]
    fn split_names_parse() {
        assert_eq!(parse_split("train").unwrap(), Split::Train);
        assert_eq!(parse_split("val").unwrap(), Split::Val);
        assert_eq!(parse_split("test").unwrap(), Split::Test);
        assert!(matches!(parse_split("holdout"), Err(CliError::Usage(_))));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_from(["imgnilm"]), 1, "missing subcommand");
        assert_eq!(run_from(["imgnilm", "bogus"]), 1, "unknown subcommand");
        assert_eq!(run_from(["imgnilm", "synth", "--days", "soon", "--out", "x"]), 1);
        assert_eq!(run_from(["imgnilm", "synth"]), 1, "missing --out");
        assert_eq!(run_from(["imgnilm", "predict", "--checkpoint", "m.ckpt"]), 1, "no images");
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_from(["imgnilm", "--help"]), 0);
        assert_eq!(run_from(["imgnilm", "train", "--help"]), 0);
        assert_eq!(run_from(["imgnilm", "--version"]), 0);
    }

    #[test]
    fn module_validation_failures_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("maps");
        let code = run_from([
            "imgnilm",
            "heatmap",
            "--house",
            dir.path().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--step-seconds",
            "7",
        ]);
        assert_eq!(code, 2, "a step that does not divide 3600 is a validation error");
        assert!(!out.exists(), "nothing may be written when validation fails");
    }

    #[test]
    fn missing_input_files_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_from([
            "imgnilm",
            "eval",
            "--checkpoint",
            dir.path().join("no.ckpt").to_str().unwrap(),
            "--manifest",
            dir.path().join("no.jsonl").to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn synth_writes_a_deterministic_house() {
        let dir = tempfile::tempdir().unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        for out in [&out_a, &out_b] {
            let code = run_from([
                "imgnilm",
                "synth",
                "--days",
                "1",
                "--seed",
                "42",
                "--period",
                "60",
                "--model",
                "kettle=two-state:watts=2400,events=4,on-secs=300",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
        }
        let a = fs::read(out_a.join("channel_1.dat")).unwrap();
        let b = fs::read(out_b.join("channel_1.dat")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "same seed must write byte-identical channels");
        assert_eq!(
            fs::read_to_string(out_a.join("labels.dat")).unwrap(),
            "1 aggregate\n2 kettle\n"
        );
    }

    #[test]
    fn config_file_drives_synth_and_flags_override_it() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.conf");
        fs::write(&config, "days = 2\nseed = 1\nperiod = 3600\n").unwrap();
        let out = dir.path().join("house");
        let code = run_from([
            "imgnilm",
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--days",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = fs::read_to_string(out.join("channel_1.dat")).unwrap();
        assert_eq!(
            text.lines().count(),
            24,
            "one day at the config's 3600s period, --days overriding the config's 2"
        );
    }
}
