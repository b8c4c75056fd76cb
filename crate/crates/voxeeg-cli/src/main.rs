//! Command-line front end for the voxeeg pipeline.
//!
//! Each subcommand is one cacheable stage: synthesis, filtering,
//! feature extraction, kernel PCA, encoder training, evaluation, and
//! report aggregation. Stages hand artifacts to one another through
//! the filesystem, so any stage can be rerun in isolation. Flags may
//! be left unset and supplied by a TOML config file instead; explicit
//! flags win over the file, the file wins over built-in defaults.
//!
//! Exit codes: 0 success, 2 usage or validation, 3 data or
//! processing, 4 artifact compatibility.

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use voxeeg::checkpoint::{self, CheckpointError, TrainMeta};
use voxeeg::dataset::{
    self, DatasetError, DatasetManifest, SynthSpec, EEG_RATE,
};
use voxeeg::dsp::{BiquadCascade, DspError, DEFAULT_NOTCH_Q};
use voxeeg::encoder::CellKind;
use voxeeg::features::{
    feat_path, FeatureError, FeatureKind, FeatureSequence, InMemoryFeatureStore,
};
use voxeeg::kpca::{KernelParams, KpcaError, KpcaModel, DEFAULT_LANDMARKS};
use voxeeg::protocol::{self, ProtocolError, TrainConfig};

const EXIT_USAGE: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_COMPAT: i32 = 4;

/// A command failure carrying its process exit code.
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = match e {
            DatasetError::InvalidSpec(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        fail(code, e.to_string())
    }
}

impl From<DspError> for Failure {
    fn from(e: DspError) -> Self {
        let code = match e {
            DspError::InvalidBand(_) => EXIT_USAGE,
            DspError::NonFiniteInput => EXIT_DATA,
        };
        fail(code, e.to_string())
    }
}

impl From<FeatureError> for Failure {
    fn from(e: FeatureError) -> Self {
        fail(EXIT_DATA, e.to_string())
    }
}

impl From<KpcaError> for Failure {
    fn from(e: KpcaError) -> Self {
        fail(EXIT_DATA, e.to_string())
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let code = match e {
            ProtocolError::InvalidWindow(_)
            | ProtocolError::TooFewWindows { .. }
            | ProtocolError::InvalidConfig(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        fail(code, e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let code = match e {
            CheckpointError::VersionMismatch { .. } => EXIT_COMPAT,
            _ => EXIT_DATA,
        };
        fail(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail(EXIT_DATA, format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "voxeeg", version, about = "Speaker verification from speech and EEG")]
struct Cli {
    /// TOML file supplying values for flags left unset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired audio and EEG corpus.
    SynthData(SynthDataArgs),
    /// Filter every EEG recording into a new dataset directory.
    Preprocess(PreprocessArgs),
    /// Compute MFCC or statistical EEG features for every utterance.
    Extract(ExtractArgs),
    /// Fit the polynomial kernel PCA on train-subject EEG features.
    FitKpca(FitKpcaArgs),
    /// Project EEG features through a fitted kernel PCA model.
    Project(ProjectArgs),
    /// Train the recurrent d-vector encoder with the GE2E loss.
    Train(TrainArgs),
    /// Score a checkpoint through the rolling enrollment protocol.
    Evaluate(EvaluateArgs),
    /// Aggregate evaluation reports into table and plot CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthDataArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    subjects: Option<usize>,
    /// Sentence utterances per subject.
    #[arg(long)]
    utterances: Option<usize>,
    /// EEG channel count.
    #[arg(long)]
    channels: Option<usize>,
    /// Acoustic signal-to-noise ratio in dB.
    #[arg(long)]
    noise_db: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// EEG filter settings shared by preprocess and extract.
#[derive(Args)]
struct FilterArgs {
    /// Bandpass low cutoff in Hz.
    #[arg(long)]
    band_low: Option<f64>,
    /// Bandpass high cutoff in Hz.
    #[arg(long)]
    band_high: Option<f64>,
    /// Bandpass Butterworth order.
    #[arg(long)]
    band_order: Option<usize>,
    /// Mains notch center frequency in Hz.
    #[arg(long)]
    notch_hz: Option<f64>,
    /// Notch quality factor.
    #[arg(long)]
    notch_q: Option<f64>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset manifest to read.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
}

#[derive(Args)]
struct ExtractArgs {
    /// Dataset manifest to read.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Feature kind: mfcc13 or eeg155.
    #[arg(long)]
    kind: Option<String>,
    /// Output feature directory. Defaults to features/ next to the
    /// manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterArgs,
    /// Skip EEG filtering, for datasets already preprocessed.
    #[arg(long)]
    skip_filter: bool,
}

#[derive(Args)]
struct FitKpcaArgs {
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Directory holding eeg155 FEAT files.
    #[arg(long, value_name = "DIR")]
    feat_dir: Option<PathBuf>,
    /// Output model path. Defaults to kpca.model in the feature
    /// directory.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Retained components.
    #[arg(short = 'k', long)]
    components: Option<usize>,
    /// Landmark frame cap for the Gram matrix.
    #[arg(long)]
    landmarks: Option<usize>,
    /// Polynomial kernel degree.
    #[arg(long)]
    degree: Option<u32>,
    /// Polynomial kernel scale.
    #[arg(long)]
    gamma: Option<f64>,
    /// Polynomial kernel offset.
    #[arg(long)]
    coef0: Option<f64>,
    /// Landmark subsampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Directory holding eeg155 FEAT files; projections land beside
    /// them.
    #[arg(long, value_name = "DIR")]
    feat_dir: Option<PathBuf>,
    /// Fitted model path. Defaults to kpca.model in the feature
    /// directory.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Subjects to project: train, test, or all.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    feat_dir: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Feature kind: mfcc13, eeg155, eegkpca30, or concat43.
    #[arg(long)]
    features: Option<String>,
    /// Recurrent cell: lstm or gru.
    #[arg(long)]
    cell: Option<String>,
    /// Sentences per training window.
    #[arg(short = 'n', long)]
    sentences: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Global gradient norm clip.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Recurrent state width.
    #[arg(long)]
    hidden: Option<usize>,
    /// d-vector width.
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the per-step loss CSV here.
    #[arg(long, value_name = "PATH")]
    loss_log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    feat_dir: Option<PathBuf>,
    /// Trained checkpoint to score.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Sentences per enrollment window.
    #[arg(short = 'n', long)]
    sentences: Option<usize>,
    /// Report output path; stdout when unset.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON files.
    #[arg(value_name = "REPORT")]
    evals: Vec<PathBuf>,
    /// Output directory for the CSVs.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Training loss CSV to condense into a per-epoch curve.
    #[arg(long, value_name = "PATH")]
    loss_log: Option<PathBuf>,
}

// Config file sections mirror the subcommands; keys match the long
// flag names.

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    synth_data: SynthDataSection,
    preprocess: PreprocessSection,
    extract: ExtractSection,
    fit_kpca: FitKpcaSection,
    project: ProjectSection,
    train: TrainSection,
    evaluate: EvaluateSection,
    report: ReportSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct SynthDataSection {
    out: Option<PathBuf>,
    subjects: Option<usize>,
    utterances: Option<usize>,
    channels: Option<usize>,
    noise_db: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FilterSection {
    band_low: Option<f64>,
    band_high: Option<f64>,
    band_order: Option<usize>,
    notch_hz: Option<f64>,
    notch_q: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct PreprocessSection {
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(flatten)]
    filter: FilterSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct ExtractSection {
    manifest: Option<PathBuf>,
    kind: Option<String>,
    out: Option<PathBuf>,
    #[serde(flatten)]
    filter: FilterSection,
    skip_filter: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FitKpcaSection {
    manifest: Option<PathBuf>,
    feat_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    components: Option<usize>,
    landmarks: Option<usize>,
    degree: Option<u32>,
    gamma: Option<f64>,
    coef0: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct ProjectSection {
    manifest: Option<PathBuf>,
    feat_dir: Option<PathBuf>,
    model: Option<PathBuf>,
    split: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct TrainSection {
    manifest: Option<PathBuf>,
    feat_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    features: Option<String>,
    cell: Option<String>,
    sentences: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    grad_clip: Option<f64>,
    hidden: Option<usize>,
    embed: Option<usize>,
    seed: Option<u64>,
    loss_log: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct EvaluateSection {
    manifest: Option<PathBuf>,
    feat_dir: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    sentences: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct ReportSection {
    out_dir: Option<PathBuf>,
    loss_log: Option<PathBuf>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_USAGE, format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| fail(EXIT_USAGE, format!("config {}: {e}", path.display())))
}

/// A value that must come from the command line or the config file.
fn need<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| {
        fail(
            EXIT_USAGE,
            format!("missing --{flag}; pass the flag or set it in the config file"),
        )
    })
}

fn parse_cell(tag: &str) -> Result<CellKind, Failure> {
    CellKind::from_tag(tag)
        .ok_or_else(|| fail(EXIT_USAGE, format!("unknown cell {tag:?}, expected lstm or gru")))
}

fn parse_kind(tag: &str) -> Result<FeatureKind, Failure> {
    FeatureKind::from_tag(tag).ok_or_else(|| {
        fail(
            EXIT_USAGE,
            format!("unknown feature kind {tag:?}, expected mfcc13, eeg155, eegkpca30, or concat43"),
        )
    })
}

/// Sidecar path: the artifact path with `.json` appended.
fn json_sidecar(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| fail(EXIT_DATA, format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = load_file_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::SynthData(args) => cmd_synth_data(args, cfg.synth_data),
        Command::Preprocess(args) => cmd_preprocess(args, cfg.preprocess),
        Command::Extract(args) => cmd_extract(args, cfg.extract),
        Command::FitKpca(args) => cmd_fit_kpca(args, cfg.fit_kpca),
        Command::Project(args) => cmd_project(args, cfg.project),
        Command::Train(args) => cmd_train(args, cfg.train),
        Command::Evaluate(args) => cmd_evaluate(args, cfg.evaluate),
        Command::Report(args) => cmd_report(args, cfg.report),
    });
    if let Err(f) = result {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}

#[derive(Serialize)]
struct SynthEcho {
    tool_version: &'static str,
    subjects: usize,
    utterances: usize,
    channels: usize,
    noise_db: f64,
    seed: u64,
}

fn cmd_synth_data(args: SynthDataArgs, cfg: SynthDataSection) -> Result<(), Failure> {
    let out = need(args.out.or(cfg.out), "out")?;
    let spec = SynthSpec {
        num_subjects: args.subjects.or(cfg.subjects).unwrap_or(8),
        utterances_per_subject: args.utterances.or(cfg.utterances).unwrap_or(90),
        channel_count: args.channels.or(cfg.channels).unwrap_or(31),
        noise_db: args.noise_db.or(cfg.noise_db).unwrap_or(10.0),
        seed: args.seed.or(cfg.seed).unwrap_or(0),
    };
    let manifest = dataset::synth_dataset(&spec, &out)?;
    write_json(
        &out.join("synth_config.json"),
        &SynthEcho {
            tool_version: voxeeg::VERSION,
            subjects: spec.num_subjects,
            utterances: spec.utterances_per_subject,
            channels: spec.channel_count,
            noise_db: spec.noise_db,
            seed: spec.seed,
        },
    )?;
    eprintln!(
        "wrote {} subjects x {} utterances ({} train / {} test) to {}",
        spec.num_subjects,
        spec.utterances_per_subject,
        manifest.train_subjects.len(),
        manifest.test_subjects.len(),
        out.display()
    );
    Ok(())
}

/// Resolved EEG filter settings.
#[derive(Serialize, Clone, Copy)]
struct FilterSettings {
    band_low: f64,
    band_high: f64,
    band_order: usize,
    notch_hz: f64,
    notch_q: f64,
}

impl FilterSettings {
    fn resolve(args: &FilterArgs, cfg: &FilterSection) -> FilterSettings {
        FilterSettings {
            band_low: args.band_low.or(cfg.band_low).unwrap_or(0.1),
            band_high: args.band_high.or(cfg.band_high).unwrap_or(70.0),
            band_order: args.band_order.or(cfg.band_order).unwrap_or(4),
            notch_hz: args.notch_hz.or(cfg.notch_hz).unwrap_or(60.0),
            notch_q: args.notch_q.or(cfg.notch_q).unwrap_or(DEFAULT_NOTCH_Q),
        }
    }

    fn build(&self) -> Result<(BiquadCascade, BiquadCascade), Failure> {
        let band = BiquadCascade::bandpass(
            self.band_low,
            self.band_high,
            EEG_RATE as f64,
            self.band_order,
        )?;
        let notch = BiquadCascade::notch(self.notch_hz, EEG_RATE as f64, self.notch_q)?;
        Ok((band, notch))
    }
}

/// Bandpass then notch, channel by channel.
fn filter_eeg(
    eeg: &Array2<f32>,
    band: &BiquadCascade,
    notch: &BiquadCascade,
) -> Result<Array2<f32>, Failure> {
    let mut out = Array2::<f32>::zeros(eeg.dim());
    for (row, mut dst) in eeg.rows().into_iter().zip(out.rows_mut()) {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let y = notch.apply(&band.apply(&x)?)?;
        for (d, v) in dst.iter_mut().zip(y) {
            *d = v as f32;
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct PreprocessEcho {
    tool_version: &'static str,
    #[serde(flatten)]
    filter: FilterSettings,
    recordings: usize,
}

fn cmd_preprocess(args: PreprocessArgs, cfg: PreprocessSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let out = need(args.out.or(cfg.out), "out")?;
    let settings = FilterSettings::resolve(&args.filter, &cfg.filter);
    let (band, notch) = settings.build()?;
    let manifest = dataset::load_manifest(&manifest_path)?;

    for entry in &manifest.entries {
        let eeg = dataset::read_eeg(&manifest.resolve(&entry.eeg))?;
        let filtered = filter_eeg(&eeg, &band, &notch)?;
        let eeg_out = out.join(&entry.eeg);
        let audio_out = out.join(&entry.audio);
        if let Some(parent) = audio_out.parent() {
            std::fs::create_dir_all(parent)?;
        }
        dataset::write_eeg(&eeg_out, &filtered)?;
        std::fs::copy(manifest.resolve(&entry.audio), audio_out)?;
    }
    manifest.save(&out.join("manifest.json"))?;
    write_json(
        &out.join("preprocess_config.json"),
        &PreprocessEcho {
            tool_version: voxeeg::VERSION,
            filter: settings,
            recordings: manifest.entries.len(),
        },
    )?;
    eprintln!(
        "filtered {} recordings into {}",
        manifest.entries.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ExtractEcho {
    tool_version: &'static str,
    kind: String,
    filtered: bool,
    #[serde(flatten)]
    filter: FilterSettings,
    files_written: usize,
}

fn cmd_extract(args: ExtractArgs, cfg: ExtractSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let kind = parse_kind(&need(args.kind.or(cfg.kind), "kind")?)?;
    if !matches!(kind, FeatureKind::Mfcc13 | FeatureKind::Eeg155) {
        return Err(fail(
            EXIT_USAGE,
            "extract computes mfcc13 or eeg155; eegkpca30 comes from project, concat43 is built at train time",
        ));
    }
    let manifest = dataset::load_manifest(&manifest_path)?;
    let out = args
        .out
        .or(cfg.out)
        .unwrap_or_else(|| manifest.base_dir().join("features"));
    let skip_filter = args.skip_filter || cfg.skip_filter.unwrap_or(false);
    let settings = FilterSettings::resolve(&args.filter, &cfg.filter);
    let filters = if kind == FeatureKind::Eeg155 && !skip_filter {
        Some(settings.build()?)
    } else {
        None
    };
    if kind == FeatureKind::Eeg155 {
        let required = kind.dim() / voxeeg::features::FEATURES_PER_CHANNEL;
        if manifest.channel_count != required {
            return Err(fail(
                EXIT_DATA,
                format!(
                    "eeg155 needs {required} EEG channels, manifest has {}",
                    manifest.channel_count
                ),
            ));
        }
    }
    std::fs::create_dir_all(&out)?;

    let mut written = 0usize;
    let mut failures: Vec<String> = Vec::new();
    for entry in &manifest.entries {
        let result = extract_one(&manifest, entry, kind, filters.as_ref(), &out);
        match result {
            Ok(()) => written += 1,
            Err(f) => failures.push(format!("{} sentence {}: {}", entry.subject, entry.sentence, f.message)),
        }
        if entry.sentence as usize + 1 == manifest.utterances_per_subject {
            eprintln!("{}: {} utterances done", entry.subject, entry.sentence + 1);
        }
    }
    write_json(
        &out.join(format!("{}_extract.json", kind.tag())),
        &ExtractEcho {
            tool_version: voxeeg::VERSION,
            kind: kind.tag().to_string(),
            filtered: filters.is_some(),
            filter: settings,
            files_written: written,
        },
    )?;
    eprintln!("{written} {} files in {}", kind.tag(), out.display());
    if !failures.is_empty() {
        for line in &failures {
            eprintln!("failed: {line}");
        }
        return Err(fail(EXIT_DATA, format!("{} utterance(s) failed", failures.len())));
    }
    Ok(())
}

fn extract_one(
    manifest: &DatasetManifest,
    entry: &dataset::ManifestEntry,
    kind: FeatureKind,
    filters: Option<&(BiquadCascade, BiquadCascade)>,
    out: &Path,
) -> Result<(), Failure> {
    let frames = match kind {
        FeatureKind::Mfcc13 => {
            let (rate, audio) = dataset::read_wav_mono16(&manifest.resolve(&entry.audio))?;
            if rate != dataset::AUDIO_RATE {
                return Err(fail(
                    EXIT_DATA,
                    format!("{}: audio rate {rate} Hz", entry.audio),
                ));
            }
            let samples: Vec<f64> = audio.iter().map(|&v| v as f64).collect();
            voxeeg::features::mfcc13(&samples)?
        }
        FeatureKind::Eeg155 => {
            let eeg = dataset::read_eeg(&manifest.resolve(&entry.eeg))?;
            let eeg = match filters {
                Some((band, notch)) => filter_eeg(&eeg, band, notch)?,
                None => eeg,
            };
            let wide = eeg.mapv(|v| v as f64);
            voxeeg::features::eeg155(&wide, manifest.channel_count)?
        }
        _ => unreachable!("rejected above"),
    };
    let seq = FeatureSequence::new(kind, frames, &entry.subject, entry.sentence)?;
    seq.write_feat(&feat_path(out, &entry.subject, entry.sentence, kind))?;
    Ok(())
}

/// Stack every frame of the given subjects' FEAT files into one
/// row-per-frame matrix.
fn stack_frames(
    feat_dir: &Path,
    kind: FeatureKind,
    subjects: &[String],
    utterances: usize,
) -> Result<Array2<f64>, Failure> {
    let mut rows = 0usize;
    let mut data: Vec<f64> = Vec::new();
    for subject in subjects {
        for sentence in 0..utterances as u32 {
            let path = feat_path(feat_dir, subject, sentence, kind);
            let seq = FeatureSequence::read_feat(&path, subject, sentence)?;
            rows += seq.frames.nrows();
            data.extend(seq.frames.iter());
        }
    }
    Array2::from_shape_vec((rows, kind.dim()), data)
        .map_err(|e| fail(EXIT_DATA, format!("feature stacking: {e}")))
}

#[derive(Serialize)]
struct KpcaEcho {
    tool_version: &'static str,
    components: usize,
    landmarks: usize,
    degree: u32,
    gamma: f64,
    coef0: f64,
    seed: u64,
    train_subjects: usize,
    frames_used: usize,
}

fn cmd_fit_kpca(args: FitKpcaArgs, cfg: FitKpcaSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let manifest = dataset::load_manifest(&manifest_path)?;
    let feat_dir = args
        .feat_dir
        .or(cfg.feat_dir)
        .unwrap_or_else(|| manifest.base_dir().join("features"));
    let out = args
        .out
        .or(cfg.out)
        .unwrap_or_else(|| feat_dir.join("kpca.model"));
    let k = args.components.or(cfg.components).unwrap_or(30);
    let landmarks = args.landmarks.or(cfg.landmarks).unwrap_or(DEFAULT_LANDMARKS);
    let kernel = KernelParams {
        degree: args.degree.or(cfg.degree).unwrap_or(3),
        gamma: args.gamma.or(cfg.gamma).unwrap_or(1.0),
        coef0: args.coef0.or(cfg.coef0).unwrap_or(1.0),
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    if k == 0 || landmarks == 0 || kernel.degree == 0 {
        return Err(fail(EXIT_USAGE, "components, landmarks, and degree must be positive"));
    }
    if !(kernel.gamma.is_finite() && kernel.gamma > 0.0 && kernel.coef0.is_finite()) {
        return Err(fail(EXIT_USAGE, "gamma must be positive and coef0 finite"));
    }

    let frames = stack_frames(
        &feat_dir,
        FeatureKind::Eeg155,
        &manifest.train_subjects,
        manifest.utterances_per_subject,
    )?;
    let frames_used = frames.nrows();
    let model = voxeeg::kpca::fit(&frames, k, landmarks, seed, kernel)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save(&out)?;

    let csv_path = out
        .parent()
        .unwrap_or(Path::new("."))
        .join("explained_variance.csv");
    let mut csv = String::from("component,ratio,cumulative\n");
    for (component, ratio, cumulative) in model.explained_variance_table() {
        csv.push_str(&format!("{component},{ratio},{cumulative}\n"));
    }
    std::fs::write(&csv_path, csv)?;

    write_json(
        &json_sidecar(&out),
        &KpcaEcho {
            tool_version: voxeeg::VERSION,
            components: k,
            landmarks,
            degree: kernel.degree,
            gamma: kernel.gamma,
            coef0: kernel.coef0,
            seed,
            train_subjects: manifest.train_subjects.len(),
            frames_used,
        },
    )?;
    eprintln!(
        "fitted {k} components on {frames_used} frames ({} landmarks) into {}",
        model.num_landmarks(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ProjectEcho {
    tool_version: &'static str,
    model: String,
    split: String,
    files_written: usize,
}

fn cmd_project(args: ProjectArgs, cfg: ProjectSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let manifest = dataset::load_manifest(&manifest_path)?;
    let feat_dir = args
        .feat_dir
        .or(cfg.feat_dir)
        .unwrap_or_else(|| manifest.base_dir().join("features"));
    let model_path = args
        .model
        .or(cfg.model)
        .unwrap_or_else(|| feat_dir.join("kpca.model"));
    let split = args.split.or(cfg.split).unwrap_or_else(|| "all".into());
    let subjects: Vec<String> = match split.as_str() {
        "train" => manifest.train_subjects.clone(),
        "test" => manifest.test_subjects.clone(),
        "all" => manifest.subjects().map(str::to_string).collect(),
        other => {
            return Err(fail(
                EXIT_USAGE,
                format!("unknown split {other:?}, expected train, test, or all"),
            ))
        }
    };

    let model = KpcaModel::load(&model_path)?;
    let want = FeatureKind::EegKpca30.dim();
    if model.components() != want {
        return Err(fail(
            EXIT_DATA,
            format!(
                "model keeps {} components, {} features need {want}",
                model.components(),
                FeatureKind::EegKpca30.tag()
            ),
        ));
    }
    let mut written = 0usize;
    for subject in &subjects {
        for sentence in 0..manifest.utterances_per_subject as u32 {
            let src = feat_path(&feat_dir, subject, sentence, FeatureKind::Eeg155);
            let seq = FeatureSequence::read_feat(&src, subject, sentence)?;
            let projected = model.project_frames(&seq.frames)?;
            let out_seq =
                FeatureSequence::new(FeatureKind::EegKpca30, projected, subject, sentence)?;
            out_seq.write_feat(&feat_path(
                &feat_dir,
                subject,
                sentence,
                FeatureKind::EegKpca30,
            ))?;
            written += 1;
        }
    }
    write_json(
        &feat_dir.join("eegkpca30_project.json"),
        &ProjectEcho {
            tool_version: voxeeg::VERSION,
            model: model_path.display().to_string(),
            split,
            files_written: written,
        },
    )?;
    eprintln!("projected {written} utterances into {}", feat_dir.display());
    Ok(())
}

fn cmd_train(args: TrainArgs, cfg: TrainSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let out = need(args.out.or(cfg.out), "out")?;
    let manifest = dataset::load_manifest(&manifest_path)?;
    let feat_dir = args
        .feat_dir
        .or(cfg.feat_dir)
        .unwrap_or_else(|| manifest.base_dir().join("features"));
    let kind = parse_kind(
        &args
            .features
            .or(cfg.features)
            .unwrap_or_else(|| "concat43".into()),
    )?;
    let cell = parse_cell(&args.cell.or(cfg.cell).unwrap_or_else(|| "lstm".into()))?;

    let mut config = TrainConfig::new(cell, args.seed.or(cfg.seed).unwrap_or(0));
    config.sentences_per_step = args
        .sentences
        .or(cfg.sentences)
        .unwrap_or(protocol::DEFAULT_SENTENCES_PER_STEP);
    config.epochs = args.epochs.or(cfg.epochs).unwrap_or(protocol::DEFAULT_EPOCHS);
    config.learning_rate = args
        .learning_rate
        .or(cfg.learning_rate)
        .unwrap_or(protocol::DEFAULT_LEARNING_RATE);
    config.grad_clip_norm = args
        .grad_clip
        .or(cfg.grad_clip)
        .unwrap_or(protocol::DEFAULT_GRAD_CLIP);
    config.hidden = args.hidden.or(cfg.hidden).unwrap_or(config.hidden);
    config.embed = args.embed.or(cfg.embed).unwrap_or(config.embed);
    if config.epochs == 0 || config.learning_rate <= 0.0 || config.grad_clip_norm <= 0.0 {
        return Err(fail(
            EXIT_USAGE,
            "epochs must be positive, learning-rate and grad-clip must exceed 0",
        ));
    }

    let store = InMemoryFeatureStore::load(
        &feat_dir,
        kind,
        &manifest.train_subjects,
        manifest.utterances_per_subject,
    )?;
    let outcome = protocol::train(
        &store,
        &manifest.train_subjects,
        manifest.utterances_per_subject as u32,
        &config,
    )?;
    for epoch in 0..config.epochs {
        if let Some(mean) = protocol::mean_epoch_loss(&outcome.loss_log, epoch) {
            eprintln!("epoch {epoch}: mean loss {mean:.4}");
        }
    }

    let final_loss = outcome.loss_log.last().map(|e| e.loss).unwrap_or(f64::NAN);
    let meta = TrainMeta {
        version: checkpoint::CHECKPOINT_VERSION,
        feature_kind: kind.tag().to_string(),
        cell_kind: cell.tag().to_string(),
        hidden: config.hidden,
        embed: config.embed,
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        grad_clip_norm: config.grad_clip_norm,
        subjects_per_batch: config.subjects_per_batch,
        sentences_per_step: config.sentences_per_step,
        seed: config.seed,
        final_loss,
    };
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    checkpoint::save_checkpoint(&out, &outcome.params, outcome.w, outcome.b, &meta)?;

    if let Some(loss_path) = args.loss_log.or(cfg.loss_log) {
        let mut csv = String::from("epoch,step,loss\n");
        for e in &outcome.loss_log {
            csv.push_str(&format!("{},{},{}\n", e.epoch, e.step, e.loss));
        }
        std::fs::write(&loss_path, csv)?;
    }
    eprintln!(
        "trained {} on {} for {} epochs, final loss {final_loss:.4}, checkpoint {}",
        cell.tag(),
        kind.tag(),
        config.epochs,
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, cfg: EvaluateSection) -> Result<(), Failure> {
    let manifest_path = need(args.manifest.or(cfg.manifest), "manifest")?;
    let checkpoint_path = need(args.checkpoint.or(cfg.checkpoint), "checkpoint")?;
    let window = args
        .sentences
        .or(cfg.sentences)
        .unwrap_or(protocol::DEFAULT_SENTENCES_PER_STEP);
    let manifest = dataset::load_manifest(&manifest_path)?;
    let feat_dir = args
        .feat_dir
        .or(cfg.feat_dir)
        .unwrap_or_else(|| manifest.base_dir().join("features"));

    let (ckpt, meta) = checkpoint::load_checkpoint(&checkpoint_path)?;
    let kind = FeatureKind::from_tag(&meta.feature_kind).ok_or_else(|| {
        fail(
            EXIT_DATA,
            format!("checkpoint sidecar names unknown feature kind {:?}", meta.feature_kind),
        )
    })?;
    let store = InMemoryFeatureStore::load(
        &feat_dir,
        kind,
        &manifest.test_subjects,
        manifest.utterances_per_subject,
    )?;
    let report = protocol::evaluate(
        &ckpt.params,
        &store,
        &manifest.test_subjects,
        manifest.utterances_per_subject as u32,
        window,
        &meta.feature_kind,
        &meta.cell_kind,
    )?;
    let json = report.to_json();
    match args.out.or(cfg.out) {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, &json)?;
            eprintln!(
                "mean EER {:.4} over {} steps, report {}",
                report.mean_eer,
                report.num_steps,
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_report(args: ReportArgs, cfg: ReportSection) -> Result<(), Failure> {
    let out_dir = args.out_dir.or(cfg.out_dir).unwrap_or_else(|| ".".into());
    let loss_log = args.loss_log.or(cfg.loss_log);
    if args.evals.is_empty() && loss_log.is_none() {
        return Err(fail(
            EXIT_USAGE,
            "nothing to aggregate; pass report JSONs or --loss-log",
        ));
    }
    std::fs::create_dir_all(&out_dir)?;

    // cell -> N -> feature tag -> mean EER
    let mut tables: BTreeMap<String, BTreeMap<usize, BTreeMap<String, f64>>> = BTreeMap::new();
    for path in &args.evals {
        let text = std::fs::read_to_string(path)?;
        let report = protocol::EvalReport::from_json(&text)
            .map_err(|e| fail(EXIT_DATA, format!("{}: {e}", path.display())))?;
        tables
            .entry(report.cell_kind.clone())
            .or_default()
            .entry(report.n_sentences)
            .or_default()
            .insert(report.feature_kind.clone(), report.mean_eer);
    }
    for (cell, rows) in &tables {
        let mut csv = String::from("n_sentences,mfcc13,concat43\n");
        for (n, by_kind) in rows {
            let fmt = |tag: &str| {
                by_kind
                    .get(tag)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            };
            csv.push_str(&format!("{n},{},{}\n", fmt("mfcc13"), fmt("concat43")));
        }
        let path = out_dir.join(format!("eer_table_{cell}.csv"));
        std::fs::write(&path, csv)?;
        eprintln!("wrote {}", path.display());
    }

    if let Some(loss_path) = loss_log {
        let text = std::fs::read_to_string(&loss_path)?;
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || fail(EXIT_DATA, format!("{}: bad line {line:?}", loss_path.display()));
            if parts.len() != 3 {
                return Err(bad());
            }
            let epoch: usize = parts[0].parse().map_err(|_| bad())?;
            let loss: f64 = parts[2].parse().map_err(|_| bad())?;
            let slot = sums.entry(epoch).or_insert((0.0, 0));
            slot.0 += loss;
            slot.1 += 1;
        }
        let mut csv = String::from("epoch,mean_loss\n");
        for (epoch, (sum, count)) in &sums {
            csv.push_str(&format!("{epoch},{}\n", sum / *count as f64));
        }
        let path = out_dir.join("loss_curve.csv");
        std::fs::write(&path, csv)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
