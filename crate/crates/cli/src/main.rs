//! `muhpc` command-line tool.
//!
//! Exit codes: 0 on success, 1 when the library rejects the input (invalid
//! dataset, unsatisfiable cluster count, unlabelled evaluation data, ...),
//! 2 on usage errors and unreadable or unwritable files.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use muhpc::eval::{
    cooccurrence, dataset_characters, frame_span, CharacterSource, CoOccurrenceMatrix, RelativeMatrix,
};
use muhpc::io::{load_config, load_dataset, load_result, save_dataset, save_json, save_result};
use muhpc::pipeline::{run_pipeline_with, stage1_cluster, PipelineResult, Stage};
use muhpc::synth::{generate, GeneratorParams};
use muhpc::threshold::{NegativeDistanceSample, NegativeSource};
use muhpc::{
    build_cannot_links, collect_voice_negatives, evaluate, filter_voice_tracks,
    learn_voice_threshold, ClusteringConfig, Dataset, Execution, MetricsReport, Protocol,
    Weighting,
};

#[derive(Parser)]
#[command(name = "muhpc", version, about = "Multi-modal person clustering of video tracks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the tracks of one or more datasets.
    Cluster(ClusterArgs),
    /// Score clustering results against ground-truth labels.
    Eval(EvalArgs),
    /// Learn the loose voice threshold from cannot-link negatives.
    LearnVoiceThreshold(LearnArgs),
    /// Character co-occurrence matrices.
    Cooccur(CooccurArgs),
    /// Generate a synthetic dataset with known identities.
    Synth(SynthArgs),
    /// Check a dataset file and report any violations.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Track file (one JSON record per line). Repeat to concatenate program sets.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: DatasetArgs,
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `at` (automatic termination) or `oc:<C>` (exactly C clusters).
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Where to write the result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate distances on all cores. Results are identical.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Labelled track file. Pair each with a --result, or give one result
    /// for the concatenation of all datasets.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long = "result", required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    #[arg(long, default_value_t = Weighting::Track)]
    weighting: Weighting,
    /// Where to write the report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    input: DatasetArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Percentile of negative voice distances kept above the threshold.
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CooccurArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Clustering result; adds the predicted and relative matrices.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Comma-separated characters; defaults to every labelled character.
    #[arg(long, value_delimiter = ',')]
    characters: Vec<String>,
    /// Frame count to normalize by; defaults to the span of all tracks.
    #[arg(long)]
    total_frames: Option<u64>,
    /// Directory for the matrix files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generator parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    characters: Option<usize>,
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the ground-truth manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
}

/// A problem with how the tool was invoked.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(muhpc::Error::Io(_)) = cause.downcast_ref::<muhpc::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::Eval(a) => cmd_eval(a),
        Command::LearnVoiceThreshold(a) => cmd_learn(a),
        Command::Cooccur(a) => cmd_cooccur(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_dataset(path: &Path, fps: f64) -> Result<Dataset> {
    load_dataset(path, fps).with_context(|| format!("reading dataset {}", path.display()))
}

/// Loads the datasets and concatenates them, offsetting frames and shots of
/// each file past the previous one.
fn read_datasets(input: &DatasetArgs) -> Result<Dataset> {
    if let [single] = input.datasets.as_slice() {
        return read_dataset(single, input.fps);
    }
    let parts = input
        .datasets
        .iter()
        .map(|p| Ok((program_name(p), read_dataset(p, input.fps)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut seen: BTreeMap<muhpc::TrackId, &str> = BTreeMap::new();
    for (name, part) in &parts {
        for t in part.tracks() {
            if let Some(first) = seen.insert(t.id, name) {
                bail!("track {} appears in both {first} and {name}; ids must be unique across datasets", t.id);
            }
        }
    }
    let dataset = Dataset::concat(parts)?;
    let violations = muhpc::validate_dataset(&dataset);
    if !violations.is_empty() {
        return Err(muhpc::Error::InvalidDataset(violations)).context("concatenating datasets");
    }
    Ok(dataset)
}

fn program_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_config(path: Option<&Path>) -> Result<ClusteringConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ClusteringConfig::default()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let mut config = read_config(args.config.as_deref())?;
    if let Some(p) = args.protocol {
        config.protocol = p;
    }
    let dataset = read_datasets(&args.input)?;
    let exec = if args.parallel { Execution::Parallel } else { Execution::Sequential };
    let result = run_pipeline_with(&dataset, &config, exec)?;
    print!("{}", cluster_summary(&dataset, &result));
    if let Some(out) = &args.out {
        save_result(&result, out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cluster_summary(dataset: &Dataset, r: &PipelineResult) -> String {
    let mut s = String::new();
    let backs = dataset.tracks().iter().filter(|t| t.face.is_none()).count();
    writeln!(s, "tracks: {} ({backs} backs), usable voices: {}", dataset.len(), r.usable_voice_tracks).unwrap();
    let levels: Vec<String> = r
        .history
        .iter()
        .filter(|h| h.stage == Stage::Stage1)
        .map(|h| h.num_clusters.to_string())
        .collect();
    writeln!(s, "stage 1: K = {}", levels.join(" -> ")).unwrap();
    match (r.tau_v_loose, r.learned_tau_v_loose) {
        (Some(t), Some(_)) => writeln!(s, "tau_v_loose: {t} (learned)").unwrap(),
        (Some(t), None) => writeln!(s, "tau_v_loose: {t} (configured)").unwrap(),
        _ => writeln!(s, "tau_v_loose: none").unwrap(),
    }
    let k1 = r.clusters_after(Stage::Stage1).unwrap_or(0);
    let k2 = r.clusters_after(Stage::Stage2).unwrap_or(k1);
    if r.bridges.is_empty() {
        writeln!(s, "stage 2: no-op (K = {k2})").unwrap();
    } else {
        writeln!(s, "stage 2: K = {k2}, {} bridges", r.bridges.len()).unwrap();
    }
    let k3 = r.clusters_after(Stage::Stage3).unwrap_or(k2);
    if r.back_assignments.is_empty() {
        writeln!(s, "stage 3: no-op (K = {k3}, {} backs unassigned)", r.unassigned_backs.len()).unwrap();
    } else {
        writeln!(
            s,
            "stage 3: K = {k3}, {} backs assigned, {} unassigned",
            r.back_assignments.len(),
            r.unassigned_backs.len()
        )
        .unwrap();
    }
    if let Protocol::OracleClusters(c) = r.protocol {
        writeln!(s, "oracle: K = {c}, {} cannot-link violations", r.oracle_violations.len()).unwrap();
    }
    writeln!(s, "final: K = {}", r.num_clusters()).unwrap();
    s
}

#[derive(Serialize)]
struct EpisodeReport {
    dataset: String,
    report: MetricsReport,
}

#[derive(Debug, Serialize, PartialEq)]
struct MeanMetrics {
    episodes: usize,
    wcp: f64,
    nmi: f64,
    cp: f64,
    cr: f64,
}

#[derive(Serialize)]
struct EvalReport {
    weighting: Weighting,
    episodes: Vec<EpisodeReport>,
    mean: MeanMetrics,
}

/// Unweighted mean of each metric over the episodes.
fn mean_metrics(reports: &[&MetricsReport]) -> MeanMetrics {
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    MeanMetrics {
        episodes: reports.len(),
        wcp: avg(|r| r.wcp),
        nmi: avg(|r| r.nmi),
        cp: avg(|r| r.cp),
        cr: avg(|r| r.cr),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pairs: Vec<(String, Dataset, PathBuf)> = match (args.datasets.len(), args.results.len()) {
        (d, r) if d == r => args
            .datasets
            .iter()
            .zip(&args.results)
            .map(|(d, r)| Ok((d.display().to_string(), read_dataset(d, args.fps)?, r.clone())))
            .collect::<Result<_>>()?,
        (_, 1) => {
            let input = DatasetArgs {
                datasets: args.datasets.clone(),
                fps: args.fps,
            };
            let names: Vec<String> = args.datasets.iter().map(|p| p.display().to_string()).collect();
            vec![(names.join("+"), read_datasets(&input)?, args.results[0].clone())]
        }
        (d, r) => bail!(Usage(format!(
            "{d} datasets and {r} results: give one result per dataset or a single result"
        ))),
    };

    let mut episodes = Vec::new();
    for (name, dataset, result_path) in pairs {
        let result = load_result(&result_path)
            .with_context(|| format!("reading result {}", result_path.display()))?;
        let report = evaluate(&result.assignment, &dataset, args.weighting)
            .with_context(|| format!("evaluating {name}"))?;
        episodes.push(EpisodeReport { dataset: name, report });
    }
    let mean = mean_metrics(&episodes.iter().map(|e| &e.report).collect::<Vec<_>>());

    for e in &episodes {
        println!("# {}", e.dataset);
        print!("{}", e.report.to_text());
    }
    if episodes.len() > 1 {
        println!("# mean over {} episodes", mean.episodes);
        println!("wcp: {}\nnmi: {}\ncp: {}\ncr: {}", mean.wcp, mean.nmi, mean.cp, mean.cr);
    }
    if let Some(out) = &args.out {
        let report = EvalReport {
            weighting: args.weighting,
            episodes,
            mean,
        };
        save_json(&report, out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdReport {
    tau_v_loose: f64,
    percentile: f64,
    usable_voice_tracks: usize,
    cannot_link_negatives: usize,
    cross_cluster_negatives: usize,
    negatives: Vec<NegativeDistanceSample>,
}

fn cmd_learn(args: LearnArgs) -> Result<()> {
    let mut config = read_config(args.config.as_deref())?;
    if let Some(p) = args.percentile {
        config.voice_percentile = p;
    }
    config.validate()?;
    let dataset = read_datasets(&args.input)?;
    let usable = filter_voice_tracks(&dataset, config.voice_overlap_max, config.voice_min_seconds);
    let masked = dataset.with_voice_mask(&usable);
    let cannot = build_cannot_links(&masked);
    let stage1 = stage1_cluster(&masked, &config, &cannot, Execution::Sequential)?;
    let negatives = collect_voice_negatives(stage1.last().expect("non-empty history"), &cannot, &masked);
    let tau = learn_voice_threshold(&negatives, config.voice_percentile)?;
    let count = |s: NegativeSource| negatives.iter().filter(|n| n.source == s).count();
    let report = ThresholdReport {
        tau_v_loose: tau,
        percentile: config.voice_percentile,
        usable_voice_tracks: usable.len(),
        cannot_link_negatives: count(NegativeSource::CannotLink),
        cross_cluster_negatives: count(NegativeSource::CrossCluster),
        negatives,
    };
    println!("usable voices: {}", report.usable_voice_tracks);
    println!(
        "negatives: {} ({} cannot-link, {} cross-cluster)",
        report.negatives.len(),
        report.cannot_link_negatives,
        report.cross_cluster_negatives
    );
    println!("tau_v_loose: {tau}");
    if let Some(out) = &args.out {
        save_json(&report, out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_cooccur(args: CooccurArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset, args.fps)?;
    let characters = if args.characters.is_empty() {
        dataset_characters(&dataset)
    } else {
        args.characters.clone()
    };
    let total = args.total_frames.unwrap_or_else(|| frame_span(&dataset));
    let gt = cooccurrence(&dataset, &characters, CharacterSource::GroundTruth, total)?;
    let mut outputs: Vec<(&str, String, String)> = vec![("ground_truth", gt.to_text(), json_of(&gt)?)];
    if let Some(path) = &args.result {
        let result = load_result(path).with_context(|| format!("reading result {}", path.display()))?;
        let pred: CoOccurrenceMatrix =
            cooccurrence(&dataset, &characters, CharacterSource::Predicted(&result.assignment), total)?;
        let rel = RelativeMatrix::new(&pred, &gt)?;
        outputs.push(("predicted", pred.to_text(), json_of(&pred)?));
        outputs.push(("relative", rel.to_text(), json_of(&rel)?));
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, text, json) in &outputs {
            write_file(&dir.join(format!("{name}.tsv")), text)?;
            write_file(&dir.join(format!("{name}.json")), json)?;
        }
    }
    for (name, text, _) in &outputs {
        println!("# {name}");
        print!("{text}");
    }
    Ok(())
}

fn json_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(muhpc::io::to_versioned_json(value)?)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut params: GeneratorParams = match &args.params {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading params {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing params {}", p.display()))?
        }
        None => GeneratorParams::default(),
    };
    if let Some(s) = args.seed {
        params.seed = s;
    }
    if let Some(c) = args.characters {
        params.n_characters = c;
    }
    if let Some(t) = args.tracks {
        params.n_tracks = t;
    }
    let (dataset, manifest) = generate(&params)?;
    save_dataset(&dataset, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(m) = &args.manifest {
        save_json(&manifest, m).with_context(|| format!("writing {}", m.display()))?;
    }
    let backs = dataset.tracks().iter().filter(|t| t.face.is_none()).count();
    let voices = dataset.tracks().iter().filter(|t| t.voice.is_some()).count();
    println!(
        "{} tracks ({backs} backs, {voices} speaking), {} characters, {} cannot-link pairs, seed {}",
        dataset.len(),
        params.n_characters,
        manifest.cannot_links.len(),
        params.seed
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset, args.fps)?;
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for t in dataset.tracks() {
        *kinds.entry(if t.face.is_some() { "face" } else { "back" }).or_default() += 1;
        if t.voice.is_some() {
            *kinds.entry("voice").or_default() += 1;
        }
        if t.label.is_some() {
            *kinds.entry("labelled").or_default() += 1;
        }
    }
    let counts: Vec<String> = kinds.iter().map(|(k, n)| format!("{n} {k}")).collect();
    println!("ok: {} tracks ({})", dataset.len(), counts.join(", "));
    Ok(())
}
