use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use audkit::cluster::{repetition_seed, run_repetitions, Init};
use audkit::embed::{embed_corpus, EmbedMethod};
use audkit::eval::{aggregate, BoundaryAverage, BoundaryMatching, NmiNorm};
use audkit::featio::{
    parse_alignment_file, read_feature_archive, report_to_json, serialize_alignment, write_atomic,
    write_feature_archive, Alignment, EvalReport, FeatureArchive, FrameMatrix,
};
use audkit::matrix::Matrix;
use audkit::pipeline::{
    format_reports, report_config, run_experiment, run_sweep, score_units, unit_label, ExperimentConfig, Mode,
};
use audkit::segment::{boundaries_from_labels, merge_adjacent_units, Segmentation};
use audkit::synth::{corrupt_corpus, generate_corpus};
use audkit::{Error, Result};

/// Segment-level acoustic unit discovery and evaluation.
#[derive(Parser)]
#[command(name = "audkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: feature archive plus gold alignment.
    Synth(SynthArgs),
    /// Corrupt a gold alignment into a noisy frame label stream.
    Corrupt(CorruptArgs),
    /// Derive segments from a frame label stream.
    Segment(SegmentArgs),
    /// Embed segments into fixed-dimension vectors.
    Embed(EmbedArgs),
    /// Cluster segment embeddings with repeated k-means.
    Cluster(ClusterArgs),
    /// Score clustered units against a gold alignment.
    Eval(EvalArgs),
    /// Run a full experiment in-process.
    Run(RunArgs),
    /// Run the experiment for several cluster counts.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::from_file(p),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Args)]
struct SynthFlags {
    #[arg(long)]
    n_phones: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_utts: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    centroid_scale: Option<f64>,
    #[arg(long)]
    synth_seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    flags: SynthFlags,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    gold: PathBuf,
}

#[derive(Args)]
struct CorruptFlags {
    #[arg(long)]
    jitter_frames: Option<usize>,
    #[arg(long)]
    substitution_rate: Option<f64>,
    #[arg(long)]
    min_dur_frames: Option<usize>,
    #[arg(long)]
    corrupt_seed: Option<u64>,
}

#[derive(Args)]
struct CorruptArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    flags: CorruptFlags,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    /// Frame label stream.
    #[arg(long)]
    labels: PathBuf,
    /// Segments, written as an alignment labelled `_`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedFlags {
    #[arg(long)]
    method: Option<EmbedMethod>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, action = clap::ArgAction::Set)]
    znorm: Option<bool>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    flags: EmbedFlags,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    /// Embeddings as a feature archive, one row per segment.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterFlags {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init: Option<Init>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    flags: ClusterFlags,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    segments: PathBuf,
    /// Receives `rep<r>.ali` per repetition and `cluster.json`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalFlags {
    #[arg(long)]
    tolerance_ms: Option<f64>,
    #[arg(long)]
    frame_shift_ms: Option<f64>,
    #[arg(long)]
    nmi_norm: Option<NmiNorm>,
    #[arg(long)]
    boundary_average: Option<BoundaryAverage>,
    #[arg(long)]
    boundary_matching: Option<BoundaryMatching>,
    #[arg(long, action = clap::ArgAction::Set)]
    merge_adjacent: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    flags: EvalFlags,
    /// Output directory of `cluster`.
    #[arg(long)]
    cluster_dir: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Embedding method, recorded in the report.
    #[arg(long)]
    method: Option<EmbedMethod>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentFlags {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthFlags,
    #[command(flatten)]
    corrupt: CorruptFlags,
    #[command(flatten)]
    embed: EmbedFlags,
    #[command(flatten)]
    cluster: ClusterFlags,
    #[command(flatten)]
    eval: EvalFlags,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// JSON output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Text table output.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ExperimentFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentFlags,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SynthFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.synth;
        set(&mut s.n_phones, self.n_phones);
        set(&mut s.dim, self.dim);
        set(&mut s.n_utts, self.n_utts);
        set(&mut s.noise_sigma, self.noise_sigma);
        set(&mut s.centroid_scale, self.centroid_scale);
        set(&mut s.seed, self.synth_seed);
    }
}

impl CorruptFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        let c = &mut cfg.corrupt;
        set(&mut c.jitter_frames, self.jitter_frames);
        set(&mut c.substitution_rate, self.substitution_rate);
        set(&mut c.min_dur_frames, self.min_dur_frames);
        set(&mut c.seed, self.corrupt_seed);
    }
}

impl EmbedFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.embed.method, self.method);
        set(&mut cfg.embed.s, self.s);
        set(&mut cfg.embed.znorm, self.znorm);
    }
}

impl ClusterFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.cluster.k, self.k);
        set(&mut cfg.cluster.seed, self.seed);
        set(&mut cfg.cluster.init, self.init);
        set(&mut cfg.cluster.max_iter, self.max_iter);
        set(&mut cfg.run.reps, self.reps);
    }
}

impl EvalFlags {
    fn apply(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.eval.tolerance_ms, self.tolerance_ms);
        if self.frame_shift_ms.is_some() {
            cfg.eval.frame_shift_ms = self.frame_shift_ms;
        }
        set(&mut cfg.eval.nmi_norm, self.nmi_norm);
        set(&mut cfg.eval.boundary_average, self.boundary_average);
        set(&mut cfg.eval.boundary_matching, self.boundary_matching);
        set(&mut cfg.run.merge_adjacent, self.merge_adjacent);
    }
}

impl ExperimentFlags {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut cfg = self.config.load()?;
        set(&mut cfg.run.mode, self.mode);
        if self.features.is_some() {
            cfg.io.features = self.features;
        }
        if self.gold.is_some() {
            cfg.io.gold = self.gold;
        }
        if self.labels.is_some() {
            cfg.io.labels = self.labels;
        }
        if self.report.is_some() {
            cfg.io.report = self.report;
        }
        if self.table.is_some() {
            cfg.io.table = self.table;
        }
        set(&mut cfg.run.threads, self.threads);
        self.synth.apply(&mut cfg);
        self.corrupt.apply(&mut cfg);
        self.embed.apply(&mut cfg);
        self.cluster.apply(&mut cfg);
        self.eval.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-run summary written by `cluster` and read back by `eval`.
#[derive(Debug, Serialize, Deserialize)]
struct ClusterSummary {
    k: usize,
    init: Init,
    seed: u64,
    max_iter: usize,
    frame_shift_ms: f64,
    seeds: Vec<u64>,
    inertias: Vec<f64>,
    n_iter: Vec<usize>,
}

const CLUSTER_SUMMARY: &str = "cluster.json";

fn rep_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("rep{rep}.ali"))
}

fn read_segments(path: &Path, archive: &FeatureArchive) -> Result<Vec<Segmentation>> {
    let counts = archive.frame_counts();
    Ok(parse_alignment_file(path, Some(&counts))?
        .iter()
        .map(Segmentation::from_entries)
        .collect())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.flags.apply(&mut cfg);
    let corpus = generate_corpus(&cfg.synth)?;
    write_feature_archive(&corpus.archive, &a.features)?;
    serialize_alignment(&corpus.gold, &a.gold)
}

fn cmd_corrupt(a: CorruptArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.flags.apply(&mut cfg);
    cfg.corrupt.validate()?;
    let gold = parse_alignment_file(&a.gold, None)?;
    serialize_alignment(&corrupt_corpus(&gold, &cfg.corrupt)?, &a.out)
}

fn cmd_segment(a: SegmentArgs) -> Result<()> {
    let labels = parse_alignment_file(&a.labels, None)?;
    let segs: Vec<Alignment> = labels.iter().map(|l| boundaries_from_labels(l).to_alignment("_")).collect();
    serialize_alignment(&segs, &a.out)
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.flags.apply(&mut cfg);
    let embed = cfg.embed.config()?;
    let mut archive = read_feature_archive(&a.features)?;
    if cfg.embed.znorm {
        archive = archive.znormalized();
    }
    let segs = read_segments(&a.segments, &archive)?;
    let set = embed_corpus(&archive, &segs, &embed)?;
    let mut out = FeatureArchive::new(archive.frame_shift_ms())?;
    let mut row = 0;
    for seg in &segs {
        let n = seg.n_segments();
        let values: Vec<f32> = set.rows.as_slice()[row * set.dim()..(row + n) * set.dim()]
            .iter()
            .map(|&v| v as f32)
            .collect();
        out.push(FrameMatrix::new(seg.utt_id(), n, set.dim(), values)?)?;
        row += n;
    }
    write_feature_archive(&out, &a.out)
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.flags.apply(&mut cfg);
    cfg.cluster.validate()?;
    let emb = read_feature_archive(&a.embeddings)?;
    let segs: Vec<Segmentation> = parse_alignment_file(&a.segments, None)?
        .iter()
        .map(Segmentation::from_entries)
        .collect();
    let dim = emb.dim().unwrap_or(0);
    let mut values = Vec::new();
    for seg in &segs {
        let fm = emb
            .get(seg.utt_id())
            .ok_or_else(|| Error::Key(format!("no embeddings for utterance {}", seg.utt_id())))?;
        if fm.n_frames() != seg.n_segments() {
            return Err(Error::Dimension(format!(
                "utterance {}: {} embeddings for {} segments",
                seg.utt_id(),
                fm.n_frames(),
                seg.n_segments()
            )));
        }
        values.extend(fm.values().iter().map(|&v| v as f64));
    }
    let data = Matrix::new(values.len() / dim.max(1), dim, values)?;
    let models = run_repetitions(&data, &cfg.cluster, cfg.run.reps)?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for (r, m) in models.iter().enumerate() {
        let mut off = 0;
        let units: Vec<Alignment> = segs
            .iter()
            .map(|seg| {
                let u = seg.label_segments(|i| unit_label(m.assignments[off + i]));
                off += seg.n_segments();
                u
            })
            .collect();
        serialize_alignment(&units, rep_path(&a.out_dir, r))?;
    }
    let summary = ClusterSummary {
        k: cfg.cluster.k,
        init: cfg.cluster.init,
        seed: cfg.cluster.seed,
        max_iter: cfg.cluster.max_iter,
        frame_shift_ms: emb.frame_shift_ms(),
        seeds: (0..cfg.run.reps).map(|r| repetition_seed(cfg.cluster.seed, r)).collect(),
        inertias: models.iter().map(|m| m.inertia).collect(),
        n_iter: models.iter().map(|m| m.n_iter).collect(),
    };
    write_atomic(&a.out_dir.join(CLUSTER_SUMMARY), report_to_json(&summary)?.as_bytes())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = a.config.load()?;
    a.flags.apply(&mut cfg);
    set(&mut cfg.embed.method, a.method);
    set(&mut cfg.embed.s, a.s);
    cfg.embed.config()?;

    let summary_path = a.cluster_dir.join(CLUSTER_SUMMARY);
    let text = std::fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let summary: ClusterSummary =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", summary_path.display())))?;
    cfg.cluster.k = summary.k;
    cfg.cluster.init = summary.init;
    cfg.cluster.seed = summary.seed;
    cfg.cluster.max_iter = summary.max_iter;
    cfg.run.reps = summary.inertias.len();
    cfg.run.mode = Mode::Segment;
    let shift = cfg.eval.frame_shift_ms.unwrap_or(summary.frame_shift_ms);

    let gold = parse_alignment_file(&a.gold, None)?;
    let rows = summary
        .inertias
        .iter()
        .enumerate()
        .map(|(r, &inertia)| {
            let mut units = parse_alignment_file(rep_path(&a.cluster_dir, r), None)?;
            if cfg.run.merge_adjacent {
                units = units.iter().map(merge_adjacent_units).collect();
            }
            score_units(&units, &gold, &cfg.eval, shift, inertia)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = aggregate(&rows)?;
    let report = EvalReport {
        per_rep: rows,
        mean,
        std,
        config: report_config(&cfg, shift)?,
    };
    write_atomic(&a.out, report_to_json(&report)?.as_bytes())?;
    print!("{}", format_reports(&[&report]));
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    let report = run_experiment(&cfg)?;
    let table = format_reports(&[&report]);
    if let Some(p) = &cfg.io.report {
        write_atomic(p, report_to_json(&report)?.as_bytes())?;
    }
    if let Some(p) = &cfg.io.table {
        write_atomic(p, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = a.common.resolve()?;
    set(&mut cfg.run.sweep_k, a.k_values);
    let sweep = run_sweep(&cfg, &cfg.run.sweep_k)?;
    let table = sweep.to_text();
    if let Some(p) = &cfg.io.report {
        write_atomic(p, report_to_json(&sweep)?.as_bytes())?;
    }
    if let Some(p) = &cfg.io.table {
        write_atomic(p, table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
