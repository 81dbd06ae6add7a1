//! End-to-end experiments: load or synthesize a corpus, derive segments,
//! embed, cluster with repeated k-means, score each repetition, aggregate.
//!
//! Three modes:
//! - `segment`: boundaries come from a frame label stream (a file, or the
//!   gold alignment corrupted by `[corrupt]`);
//! - `upperbound`: boundaries come from the gold alignment;
//! - `frame`: every frame is clustered on its own and unit boundaries are
//!   wherever the frame cluster label changes.
//!
//! Configuration is a TOML file with sections `[io] [synth] [corrupt]
//! [embed] [cluster] [eval] [run]`; every key is optional.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cluster::{repetition_seed, run_repetitions, KMeansConfig, KMeansModel};
use crate::embed::{embed_corpus, EmbedConfig, EmbedMethod};
use crate::error::{Error, Result, StageExt};
use crate::eval::{
    aggregate, corpus_boundary_prf, frame_confusion, nmi, tolerance_frames, BoundaryAverage,
    BoundaryMatching, NmiNorm,
};
use crate::featio::{
    parse_alignment_file, read_feature_archive, Alignment, EvalReport, FeatureArchive, MetricRow,
    ReportConfig,
};
use crate::matrix::Matrix;
use crate::segment::{boundaries_from_labels, broadcast_to_frames, merge_adjacent_units, Segmentation};
use crate::synth::{corrupt_corpus, generate_corpus, CorruptionSpec, SynthSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Segment,
    Frame,
    Upperbound,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Segment => "segment",
            Mode::Frame => "frame",
            Mode::Upperbound => "upperbound",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(Mode::Segment),
            "frame" => Ok(Mode::Frame),
            "upperbound" => Ok(Mode::Upperbound),
            other => Err(Error::Config(format!("unknown mode {other:?} (segment|frame|upperbound)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// AUDF feature archive. Without it the corpus is synthesized from `[synth]`.
    pub features: Option<PathBuf>,
    /// Gold phone alignment; required with `features`.
    pub gold: Option<PathBuf>,
    /// Frame label stream for segment mode. Without it the gold alignment is
    /// corrupted with `[corrupt]`.
    pub labels: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub method: EmbedMethod,
    pub s: usize,
    /// Per-dimension z-normalization of frame features before embedding.
    pub znorm: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            method: EmbedMethod::Avg,
            s: 1,
            znorm: false,
        }
    }
}

impl EmbedSection {
    pub fn config(&self) -> Result<EmbedConfig> {
        EmbedConfig::new(self.method, self.s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub tolerance_ms: f64,
    /// Overrides the archive's frame shift when set.
    pub frame_shift_ms: Option<f64>,
    pub nmi_norm: NmiNorm,
    pub boundary_average: BoundaryAverage,
    pub boundary_matching: BoundaryMatching,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            tolerance_ms: 20.0,
            frame_shift_ms: None,
            nmi_norm: NmiNorm::Arith,
            boundary_average: BoundaryAverage::Micro,
            boundary_matching: BoundaryMatching::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub reps: usize,
    /// Merge adjacent segments that received the same cluster.
    pub merge_adjacent: bool,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Cluster counts for `sweep`.
    pub sweep_k: Vec<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: Mode::Segment,
            reps: 5,
            merge_adjacent: true,
            threads: 0,
            sweep_k: vec![30, 40, 50, 60, 70],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub io: IoConfig,
    pub synth: SynthSpec,
    pub corrupt: CorruptionSpec,
    pub embed: EmbedSection,
    pub cluster: KMeansConfig,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.io.features.is_some() && self.io.gold.is_none() {
            return Err(Error::Config("io.features needs io.gold for evaluation".into()));
        }
        if self.io.features.is_none() {
            if self.io.gold.is_some() || self.io.labels.is_some() {
                return Err(Error::Config(
                    "io.gold / io.labels given without io.features".into(),
                ));
            }
            self.synth.validate()?;
        }
        if self.run.mode == Mode::Segment && self.io.labels.is_none() {
            self.corrupt.validate()?;
        }
        self.embed.config()?;
        self.cluster.validate()?;
        if self.run.reps == 0 {
            return Err(Error::Config("run.reps must be >= 1".into()));
        }
        if !(self.eval.tolerance_ms >= 0.0 && self.eval.tolerance_ms.is_finite()) {
            return Err(Error::Config("eval.tolerance_ms must be >= 0".into()));
        }
        if let Some(fs) = self.eval.frame_shift_ms {
            if !(fs > 0.0 && fs.is_finite()) {
                return Err(Error::Config("eval.frame_shift_ms must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Features plus gold alignments in archive order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub archive: FeatureArchive,
    pub gold: Vec<Alignment>,
}

impl Corpus {
    /// Checks that gold covers exactly the archive's utterances and frames,
    /// and reorders it to archive order.
    pub fn new(archive: FeatureArchive, gold: Vec<Alignment>) -> Result<Self> {
        let gold = align_to_archive(&archive, gold, "gold alignment")?;
        Ok(Self { archive, gold })
    }
}

fn align_to_archive(archive: &FeatureArchive, labels: Vec<Alignment>, what: &str) -> Result<Vec<Alignment>> {
    let mut by_id: HashMap<String, Alignment> = HashMap::with_capacity(labels.len());
    for a in labels {
        let id = a.utt_id().to_owned();
        if by_id.insert(id.clone(), a).is_some() {
            return Err(Error::DuplicateKey(format!("{what}: utterance {id}")));
        }
    }
    let mut out = Vec::with_capacity(archive.len());
    for fm in archive.iter() {
        let a = by_id
            .remove(fm.utt_id())
            .ok_or_else(|| Error::Key(format!("{what}: no entry for utterance {}", fm.utt_id())))?;
        a.check_coverage(fm.n_frames())?;
        out.push(a);
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(Error::Key(format!("{what}: utterance {extra} not in the feature archive")));
    }
    Ok(out)
}

/// Loads features and gold from `[io]`, or synthesizes them from `[synth]`.
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    match (&cfg.io.features, &cfg.io.gold) {
        (Some(features), Some(gold)) => {
            let archive = read_feature_archive(features).stage("reading features")?;
            let counts = archive.frame_counts();
            let gold = parse_alignment_file(gold, Some(&counts)).stage("reading gold alignment")?;
            Corpus::new(archive, gold).stage("matching gold to features")
        }
        (None, None) => {
            let c = generate_corpus(&cfg.synth).stage("synthesizing corpus")?;
            Ok(Corpus {
                archive: c.archive,
                gold: c.gold,
            })
        }
        _ => Err(Error::Config("io.features and io.gold must be given together".into())),
    }
}

/// Segment-mode label stream: `io.labels` if set, else corrupted gold.
pub fn label_stream(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Vec<Alignment>> {
    match &cfg.io.labels {
        Some(path) => {
            let counts = corpus.archive.frame_counts();
            let labels = parse_alignment_file(path, Some(&counts)).stage("reading label stream")?;
            align_to_archive(&corpus.archive, labels, "label stream").stage("matching label stream")
        }
        None => corrupt_corpus(&corpus.gold, &cfg.corrupt).stage("corrupting gold alignment"),
    }
}

/// Clustering input shared by every k of a sweep.
struct Prepared<'a> {
    corpus: &'a Corpus,
    /// Gold boundaries (label discontinuities) per utterance.
    reference: Vec<Segmentation>,
    gold_frames: IndexMap<String, Vec<&'a str>>,
    /// Segmentation per utterance; `None` in frame mode.
    hyp_segments: Option<Vec<Segmentation>>,
    /// One row per segment (or per frame in frame mode).
    data: Matrix,
    /// Row offset of each utterance in `data`.
    offsets: Vec<usize>,
    frame_shift_ms: f64,
}

fn prepare<'a>(cfg: &ExperimentConfig, corpus: &'a Corpus) -> Result<Prepared<'a>> {
    let reference: Vec<Segmentation> = corpus.gold.iter().map(boundaries_from_labels).collect();
    let gold_frames: IndexMap<String, Vec<&str>> = corpus
        .gold
        .iter()
        .map(|a| (a.utt_id().to_owned(), broadcast_to_frames(a)))
        .collect();

    let normalized;
    let archive = if cfg.embed.znorm {
        normalized = corpus.archive.znormalized();
        &normalized
    } else {
        &corpus.archive
    };

    let (hyp_segments, data, offsets) = match cfg.run.mode {
        Mode::Frame => {
            let dim = archive.dim().unwrap_or(0);
            let mut values = Vec::with_capacity(archive.total_frames() * dim);
            let mut offsets = Vec::with_capacity(archive.len());
            for fm in archive.iter() {
                offsets.push(values.len() / dim.max(1));
                values.extend(fm.values().iter().map(|&v| v as f64));
            }
            let data = Matrix::new(archive.total_frames(), dim, values)?;
            (None, data, offsets)
        }
        Mode::Segment | Mode::Upperbound => {
            let segs: Vec<Segmentation> = if cfg.run.mode == Mode::Upperbound {
                reference.clone()
            } else {
                label_stream(cfg, corpus)?.iter().map(boundaries_from_labels).collect()
            };
            let set = embed_corpus(archive, &segs, &cfg.embed.config()?).stage("embedding segments")?;
            let mut offsets = Vec::with_capacity(segs.len());
            let mut acc = 0;
            for s in &segs {
                offsets.push(acc);
                acc += s.n_segments();
            }
            (Some(segs), set.rows, offsets)
        }
    };

    Ok(Prepared {
        corpus,
        reference,
        gold_frames,
        hyp_segments,
        data,
        offsets,
        frame_shift_ms: cfg.eval.frame_shift_ms.unwrap_or(corpus.archive.frame_shift_ms()),
    })
}

/// Label of discovered unit `cluster`.
pub fn unit_label(cluster: usize) -> String {
    format!("c{cluster}")
}

/// Discovered-unit transcription of every utterance for one model.
fn discovered_units(cfg: &ExperimentConfig, prep: &Prepared, model: &KMeansModel) -> Vec<Alignment> {
    let a = &model.assignments;
    match &prep.hyp_segments {
        None => prep
            .corpus
            .archive
            .iter()
            .zip(&prep.offsets)
            .map(|(fm, &off)| {
                let labels: Vec<String> = a[off..off + fm.n_frames()].iter().map(|&c| unit_label(c)).collect();
                Alignment::from_frame_labels(fm.utt_id(), &labels).expect("non-empty utterance")
            })
            .collect(),
        Some(segs) => segs
            .iter()
            .zip(&prep.offsets)
            .map(|(seg, &off)| {
                let units = seg.label_segments(|i| unit_label(a[off + i]));
                if cfg.run.merge_adjacent {
                    merge_adjacent_units(&units)
                } else {
                    units
                }
            })
            .collect(),
    }
}

fn score_model(cfg: &ExperimentConfig, prep: &Prepared, model: &KMeansModel) -> Result<MetricRow> {
    let units = discovered_units(cfg, prep, model);
    score_against(&units, &prep.gold_frames, &prep.reference, &cfg.eval, prep.frame_shift_ms, model.inertia)
}

/// Scores discovered-unit transcriptions against gold alignments. `units`
/// are taken as given: merge them first if merging is wanted. Every entry
/// start of a unit transcription counts as a hypothesized boundary.
pub fn score_units(
    units: &[Alignment],
    gold: &[Alignment],
    eval: &EvalSection,
    frame_shift_ms: f64,
    inertia: f64,
) -> Result<MetricRow> {
    let gold_frames: IndexMap<String, Vec<&str>> =
        gold.iter().map(|a| (a.utt_id().to_owned(), broadcast_to_frames(a))).collect();
    let reference: Vec<Segmentation> = gold.iter().map(boundaries_from_labels).collect();
    let mut by_id: HashMap<&str, &Alignment> = HashMap::with_capacity(units.len());
    for u in units {
        if by_id.insert(u.utt_id(), u).is_some() {
            return Err(Error::DuplicateKey(format!("unit transcription: utterance {}", u.utt_id())));
        }
    }
    if units.len() != gold.len() {
        return Err(Error::Key(format!(
            "{} unit transcriptions for {} gold utterances",
            units.len(),
            gold.len()
        )));
    }
    let ordered: Vec<Alignment> = gold
        .iter()
        .map(|g| {
            by_id
                .get(g.utt_id())
                .map(|&u| u.clone())
                .ok_or_else(|| Error::Key(format!("no discovered units for utterance {}", g.utt_id())))
        })
        .collect::<Result<_>>()?;
    score_against(&ordered, &gold_frames, &reference, eval, frame_shift_ms, inertia)
}

/// `units` and `reference` must be in the same utterance order.
fn score_against(
    units: &[Alignment],
    gold_frames: &IndexMap<String, Vec<&str>>,
    reference: &[Segmentation],
    eval: &EvalSection,
    frame_shift_ms: f64,
    inertia: f64,
) -> Result<MetricRow> {
    let du_frames: IndexMap<String, Vec<&str>> = units
        .iter()
        .map(|u| (u.utt_id().to_owned(), broadcast_to_frames(u)))
        .collect();
    let cm = frame_confusion(&du_frames, gold_frames)?;
    let nmi_pct = nmi(&cm, eval.nmi_norm);

    // unmerged units keep every segment boundary, even between equal labels
    let hyp: Vec<Segmentation> = units.iter().map(Segmentation::from_entries).collect();
    let pairs: Vec<(&Segmentation, &Segmentation)> = hyp.iter().zip(reference).collect();
    let tol = tolerance_frames(eval.tolerance_ms, frame_shift_ms);
    let b = corpus_boundary_prf(&pairs, tol, eval.boundary_average, eval.boundary_matching)?;

    Ok(MetricRow {
        nmi_pct,
        precision_pct: b.precision_pct,
        recall_pct: b.recall_pct,
        fscore_pct: b.fscore_pct,
        n_hyp_boundaries: b.n_hyp as u64,
        n_ref_boundaries: b.n_ref as u64,
        inertia,
    })
}

/// Report header for `cfg`, embedding the resolved configuration.
pub fn report_config(cfg: &ExperimentConfig, frame_shift_ms: f64) -> Result<ReportConfig> {
    let method = match cfg.run.mode {
        Mode::Frame => "frame".to_owned(),
        _ => cfg.embed.method.to_string(),
    };
    // the worker count never changes results, so it stays out of the report
    let mut resolved = cfg.clone();
    resolved.run.threads = 0;
    Ok(ReportConfig {
        k: cfg.cluster.k,
        method,
        s: cfg.embed.s,
        tolerance_ms: cfg.eval.tolerance_ms,
        seeds: (0..cfg.run.reps).map(|r| repetition_seed(cfg.cluster.seed, r)).collect(),
        mode: cfg.run.mode.to_string(),
        frame_shift_ms,
        tolerance_frames: tolerance_frames(cfg.eval.tolerance_ms, frame_shift_ms),
        nmi_norm: cfg.eval.nmi_norm.to_string(),
        boundary_average: cfg.eval.boundary_average.to_string(),
        boundary_matching: cfg.eval.boundary_matching.to_string(),
        merge_adjacent: cfg.run.merge_adjacent,
        resolved: serde_json::to_value(&resolved)
            .map_err(|e| Error::Invariant(format!("config is not serializable: {e}")))?,
    })
}

fn evaluate(cfg: &ExperimentConfig, prep: &Prepared) -> Result<EvalReport> {
    let models = run_repetitions(&prep.data, &cfg.cluster, cfg.run.reps).stage("clustering")?;
    let per_rep: Vec<MetricRow> = models
        .iter()
        .map(|m| score_model(cfg, prep, m))
        .collect::<Result<_>>()
        .stage("scoring")?;
    let (mean, std) = aggregate(&per_rep)?;
    let report = EvalReport {
        per_rep,
        mean,
        std,
        config: report_config(cfg, prep.frame_shift_ms)?,
    };
    report.validate(cfg.run.reps)?;
    Ok(report)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}

/// Runs one experiment on an already loaded corpus.
pub fn run_experiment_on(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<EvalReport> {
    cfg.validate()?;
    with_threads(cfg.run.threads, || {
        let prep = prepare(cfg, corpus)?;
        evaluate(cfg, &prep)
    })
}

/// Loads (or synthesizes) the corpus and runs one experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let corpus = with_threads(cfg.run.threads, || load_corpus(cfg))?;
    run_experiment_on(cfg, &corpus)
}

/// Reports of a cluster-count sweep, one per k in the requested order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub k_values: Vec<usize>,
    pub reports: Vec<EvalReport>,
}

impl SweepTable {
    pub fn get(&self, k: usize) -> Option<&EvalReport> {
        self.k_values.iter().position(|&x| x == k).map(|i| &self.reports[i])
    }

    /// Columns per k; rows NMI and F-score as mean±std.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = self.k_values.iter().map(|k| k.to_string()).collect();
        let nmi: Vec<String> = self.reports.iter().map(|r| pm(r.mean.nmi_pct, r.std.nmi_pct)).collect();
        let f: Vec<String> = self.reports.iter().map(|r| pm(r.mean.fscore_pct, r.std.fscore_pct)).collect();
        render_table(&[
            std::iter::once("k".to_owned()).chain(header).collect(),
            std::iter::once("NMI (%)".to_owned()).chain(nmi).collect(),
            std::iter::once("F-score (%)".to_owned()).chain(f).collect(),
        ], 1)
    }
}

/// Runs the experiment once per k; the corpus, segments and embeddings are
/// shared, and each run derives its repetition seeds from `cluster.seed`
/// exactly as [`run_experiment`] does.
pub fn run_sweep_on(cfg: &ExperimentConfig, corpus: &Corpus, k_values: &[usize]) -> Result<SweepTable> {
    cfg.validate()?;
    let mut seen = BTreeSet::new();
    for &k in k_values {
        if !seen.insert(k) {
            return Err(Error::DuplicateKey(format!("k = {k} listed twice")));
        }
    }
    if k_values.is_empty() {
        return Err(Error::Config("sweep needs at least one k".into()));
    }
    with_threads(cfg.run.threads, || {
        let prep = prepare(cfg, corpus)?;
        let reports = k_values
            .iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.cluster.k = k;
                c.validate()?;
                evaluate(&c, &prep)
            })
            .collect::<Result<_>>()?;
        Ok(SweepTable {
            k_values: k_values.to_vec(),
            reports,
        })
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, k_values: &[usize]) -> Result<SweepTable> {
    cfg.validate()?;
    let corpus = with_threads(cfg.run.threads, || load_corpus(cfg))?;
    run_sweep_on(cfg, &corpus, k_values)
}

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

/// Aligns columns; the first `left` columns are left-aligned, the rest right.
fn render_table(rows: &[Vec<String>], left: usize) -> String {
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, &w))| {
                let pad = w - s.chars().count();
                if i < left {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    out
}

/// Short system name: `AVG`, `DS-3`, `AVG-gold`, `Baseline`.
pub fn system_name(report: &EvalReport) -> String {
    let c = &report.config;
    let base = match c.method.as_str() {
        "frame" => return "Baseline".into(),
        "ds" => format!("DS-{}", c.s),
        _ => "AVG".into(),
    };
    if c.mode == "upperbound" {
        format!("{base}-gold")
    } else {
        base
    }
}

/// One row per report: type, system, NMI, F (mean±std), recall, precision
/// (means).
pub fn format_reports(reports: &[&EvalReport]) -> String {
    let mut rows = vec![vec![
        "Type".to_owned(),
        "System".to_owned(),
        "NMI (%)".to_owned(),
        "F-score (%)".to_owned(),
        "Recall (%)".to_owned(),
        "Precision (%)".to_owned(),
    ]];
    for r in reports {
        rows.push(vec![
            if r.config.mode == "frame" { "Fra." } else { "Seg." }.to_owned(),
            system_name(r),
            pm(r.mean.nmi_pct, r.std.nmi_pct),
            pm(r.mean.fscore_pct, r.std.fscore_pct),
            format!("{:.2}", r.mean.recall_pct),
            format!("{:.2}", r.mean.precision_pct),
        ]);
    }
    render_table(&rows, 2)
}
