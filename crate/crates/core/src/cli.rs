//! Command-line orchestration: train, predict, evaluate, audit, synth.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::fairness::{group_audit, AbrocaReport, AuditOptions};
use crate::features::{FeatureConfig, Vocabulary};
use crate::gbdt::{train_gbdt, GbdtConfig};
use crate::grouping::{slice, CountryClassification, Dimension, GroupTag};
use crate::manifest::{MappingInfo, ModelKind, RunManifest};
use crate::metrics::{auc_trapezoid, f1_at_threshold, roc_curve, Prediction};
use crate::model::{ModelFile, TrainedModel};
use crate::multitask::{train_multitask, MtConfig};
use crate::plot::render_roc_plot;
use crate::slam::{join_labels, parse_label_key, Dataset, Split, Track};
use crate::synth::{write_mini_dataset, BUNDLED_SEED};

#[derive(Debug, Parser)]
#[command(name = "slamfair", version, about = "Train knowledge-tracing models on SLAM data and audit them for between-group fairness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it (with a vocabulary sidecar) to --out.
    Train(TrainArgs),
    /// Score a data file and write per-instance predictions as CSV.
    Predict(PredictArgs),
    /// Overall, per-client and per-country AUC and F1.
    Evaluate(EvalArgs),
    /// ABROCA for every group pair along one dimension, with plots.
    Audit(AuditArgs),
    /// Regenerate the synthetic mini-dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training file in SLAM format; repeat together with --track.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Track of each --data file, in the same order.
    #[arg(long = "track", required = true)]
    pub tracks: Vec<Track>,
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    /// TOML file with optional [gbdt], [multitask] and [features] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Record the wall-clock time in the manifest.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct EvalData {
    #[arg(long = "model-file")]
    pub model_file: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub track: Track,
    /// Label key for data files without a label column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "dev")]
    pub split: Split,
    #[arg(long = "country-mapping")]
    pub country_mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: EvalData,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: EvalData,
    /// Decision threshold for F1.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: EvalData,
    #[arg(long, value_parser = parse_dimension)]
    pub dimension: Dimension,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long = "min-group-size", default_value_t = 50)]
    pub min_group_size: usize,
    /// Vocabulary sidecar that must match the model's vocabulary.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = BUNDLED_SEED)]
    pub seed: u64,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse()
}

fn parse_dimension(s: &str) -> std::result::Result<Dimension, String> {
    s.parse()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: FeatureConfig,
    pub gbdt: GbdtConfig,
    pub multitask: MtConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Synth(args) => {
            write_mini_dataset(&args.out, args.seed).with_context(|| format!("writing {}", args.out.display()))
        }
    }
}

fn read_dataset(path: &Path, track: Track, split: Split) -> Result<Dataset> {
    Dataset::from_path(path, track, split).with_context(|| format!("reading data file {}", path.display()))
}

pub fn vocab_sidecar_path(model_out: &Path) -> PathBuf {
    model_out.with_extension("vocab.json")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    if args.data.len() != args.tracks.len() {
        bail!(
            "got {} --data files but {} --track values; give one track per file",
            args.data.len(),
            args.tracks.len()
        );
    }
    if args.model == ModelKind::Gbdt && args.data.len() != 1 {
        bail!("gbdt trains on exactly one track");
    }
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.gbdt.seed = seed;
        config.multitask.seed = seed;
    }

    let datasets = args
        .data
        .iter()
        .zip(&args.tracks)
        .map(|(p, &t)| read_dataset(p, t, Split::Train))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let vocab = Vocabulary::build(&refs, &config.features).context("building vocabulary")?;

    let model = match args.model {
        ModelKind::Gbdt => TrainedModel::Gbdt(train_gbdt(&datasets[0], &vocab, &config.gbdt)?),
        ModelKind::Multitask => TrainedModel::Multitask(train_multitask(&refs, &vocab, &config.multitask)?),
    };

    let config_json = serde_json::to_string(&serde_json::json!({
        "features": config.features,
        "learner": serde_json::from_str::<serde_json::Value>(&model.config_json()?)?,
    }))?;
    let mut tracks = args.tracks.clone();
    tracks.sort();
    let mut manifest = RunManifest::new(args.model, tracks, sha256_hex(config_json), vocab.digest());
    manifest.split = Some(Split::Train);
    for p in &args.data {
        manifest.record_file(p).with_context(|| format!("hashing {}", p.display()))?;
    }
    manifest.stamp(args.timestamp);

    let file = ModelFile::new(manifest, model);
    write_file(&args.out, &file.to_json()?)?;
    write_file(&vocab_sidecar_path(&args.out), &vocab.to_json()?)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

pub struct LoadedEval {
    pub model: ModelFile,
    pub dataset: Dataset,
    pub mapping: CountryClassification,
}

pub fn load_eval(input: &EvalData, require_labels: bool) -> Result<LoadedEval> {
    let model = ModelFile::load(&input.model_file)
        .with_context(|| format!("loading model {}", input.model_file.display()))?;
    model.check_track(input.track)?;
    let mut dataset = read_dataset(&input.data, input.track, input.split)?;
    if let Some(labels) = &input.labels {
        let file = std::fs::File::open(labels).with_context(|| format!("reading label key {}", labels.display()))?;
        let key = parse_label_key(std::io::BufReader::new(file))
            .with_context(|| format!("parsing label key {}", labels.display()))?;
        dataset = join_labels(dataset, &key)
            .with_context(|| format!("joining labels from {}", labels.display()))?
            .dataset;
    }
    if require_labels && !dataset.is_labeled() {
        bail!(
            "{} has unlabeled instances; pass --labels with the key file",
            input.data.display()
        );
    }
    let mapping = match &input.country_mapping {
        Some(p) => {
            CountryClassification::from_path(p).with_context(|| format!("loading country mapping {}", p.display()))?
        }
        None => CountryClassification::bundled(),
    };
    Ok(LoadedEval {
        model,
        dataset,
        mapping,
    })
}

/// Scores every labeled instance. Unlabeled data is rejected.
pub fn predictions(loaded: &LoadedEval) -> Result<Vec<Prediction>> {
    loaded
        .dataset
        .instances
        .iter()
        .map(|inst| {
            let label = inst
                .label
                .with_context(|| format!("instance {} has no label", inst.instance_id))?;
            Ok(Prediction {
                instance_id: inst.instance_id.clone(),
                score: loaded.model.model.predict(inst)?,
                label,
                group: GroupTag::of(inst, &loaded.mapping),
            })
        })
        .collect()
}

fn report_manifest(loaded: &LoadedEval, input: &EvalData, threshold: f64, timestamp: bool) -> Result<RunManifest> {
    let mut manifest = loaded.model.manifest.clone();
    manifest.tracks = vec![input.track];
    manifest.split = Some(input.split);
    manifest.datasets.clear();
    manifest.record_file(&input.data)?;
    if let Some(l) = &input.labels {
        manifest.record_file(l)?;
    }
    manifest.country_mapping = Some(MappingInfo {
        source: loaded.mapping.source_name().to_string(),
        sha256: loaded.mapping.digest().to_string(),
    });
    manifest.threshold = Some(threshold);
    manifest.stamp(timestamp);
    Ok(manifest)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let loaded = load_eval(&args.input, false)?;
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    w.write_record(["instance_id", "score", "label", "client", "countries", "development"])?;
    for inst in &loaded.dataset.instances {
        let score = loaded.model.model.predict(inst)?;
        let tag = GroupTag::of(inst, &loaded.mapping);
        w.write_record([
            inst.instance_id.as_str(),
            &format!("{score}"),
            &inst.label.map_or_else(String::new, |l| l.bit().to_string()),
            tag.client.as_str(),
            &inst.meta.countries.join("|"),
            tag.development.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRow {
    /// `EN_ES`, `CLIENT_IOS_EN_ES`, `COUNTRY_DEVELOPED_EN_ES`, ...
    pub slice: String,
    pub model: ModelKind,
    pub n: usize,
    pub f1: f64,
    /// Absent when the slice holds a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub schema_version: u32,
    pub rows: Vec<AccuracyRow>,
    pub manifest: RunManifest,
}

fn accuracy_row(name: String, model: ModelKind, preds: &[Prediction], threshold: f64) -> AccuracyRow {
    AccuracyRow {
        slice: name,
        model,
        n: preds.len(),
        f1: f1_at_threshold(preds, threshold).f1,
        auc: roc_curve(preds).ok().map(|c| auc_trapezoid(&c)),
    }
}

/// Overall, per-client and per-development-status rows.
pub fn accuracy_rows(preds: &[Prediction], track: Track, model: ModelKind, threshold: f64) -> Vec<AccuracyRow> {
    let t = track.as_str().to_uppercase();
    let mut rows = vec![accuracy_row(t.clone(), model, preds, threshold)];
    for (dimension, prefix) in [(Dimension::Client, "CLIENT"), (Dimension::Development, "COUNTRY")] {
        for (group, members) in slice(preds, dimension).groups {
            let name = format!("{prefix}_{}_{t}", group.name().to_uppercase());
            rows.push(accuracy_row(name, model, &members, threshold));
        }
    }
    rows
}

pub fn accuracy_csv(rows: &[AccuracyRow]) -> String {
    let mut out = String::from("track,model,f1,auc,n\n");
    for r in rows {
        let auc = r.auc.map_or_else(String::new, |a| format!("{a:.6}"));
        out.push_str(&format!("{},{},{:.6},{},{}\n", r.slice, r.model.as_str(), r.f1, auc, r.n));
    }
    out
}

pub fn cmd_evaluate(args: &EvalArgs) -> Result<()> {
    let loaded = load_eval(&args.input, true)?;
    let preds = predictions(&loaded)?;
    let rows = accuracy_rows(&preds, args.input.track, loaded.model.model.kind(), args.threshold);
    let report = AccuracyReport {
        schema_version: 1,
        manifest: report_manifest(&loaded, &args.input, args.threshold, args.timestamp)?,
        rows,
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_file(&args.out.join("accuracy.csv"), &accuracy_csv(&report.rows))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&args.out.join("accuracy.json"), &json)?;
    Ok(())
}

pub fn plot_file_name(group_a: &str, group_b: &str) -> String {
    format!("roc_{group_a}_{group_b}.svg")
}

pub fn cmd_audit(args: &AuditArgs) -> Result<()> {
    let loaded = load_eval(&args.input, true)?;
    if let Some(path) = &args.vocab {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading vocabulary {}", path.display()))?;
        let found = Vocabulary::from_json(&text)?.digest();
        if found != loaded.model.manifest.vocab_sha256 {
            return Err(crate::error::Error::VocabMismatch {
                expected: loaded.model.manifest.vocab_sha256.clone(),
                found,
            }
            .into());
        }
    }
    let preds = predictions(&loaded)?;
    let options = AuditOptions {
        min_group_size: args.min_group_size,
        threshold: args.threshold,
    };
    let mut report: AbrocaReport = group_audit(&preds, args.dimension, &options)?;
    report.manifest = Some(report_manifest(&loaded, &args.input, args.threshold, args.timestamp)?);

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_file(&args.out.join("report.json"), &report.to_json()?)?;
    write_file(&args.out.join("fairness.csv"), &report.to_csv())?;
    let kind = loaded.model.model.kind();
    let t = args.input.track.as_str().to_uppercase();
    let prefix = match args.dimension {
        Dimension::Client => "CLIENT",
        Dimension::Development => "COUNTRY",
    };
    let rows: Vec<AccuracyRow> = report
        .groups
        .iter()
        .map(|g| AccuracyRow {
            slice: format!("{prefix}_{}_{t}", g.group.to_uppercase()),
            model: kind,
            n: g.n,
            f1: g.f1.f1,
            auc: Some(g.auc),
        })
        .collect();
    write_file(&args.out.join("accuracy.csv"), &accuracy_csv(&rows))?;
    for r in &report.results {
        let svg = render_roc_plot(&r.curve_a, &r.curve_b, (&r.group_a, &r.group_b), r.abroca);
        write_file(&args.out.join(plot_file_name(&r.group_a, &r.group_b)), &svg)?;
    }
    let mut written = std::collections::BTreeSet::new();
    for r in &report.results {
        for (name, curve) in [(&r.group_a, &r.curve_a), (&r.group_b, &r.curve_b)] {
            if written.insert(name.clone()) {
                write_file(&args.out.join(format!("roc_{name}.csv")), &curve.to_csv())?;
            }
        }
    }
    for s in &report.skipped {
        log::warn!("skipped group {}: {} (n = {})", s.group, s.reason, s.n);
    }
    Ok(())
}
