//! Python bindings. The extension module is named `audkit`.
//!
//! Alignments cross the boundary as `{utt_id: [(start, end, label), ...]}`
//! dicts in file order; frame matrices as lists of rows.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use audkit::cluster::{self, Init, KMeansConfig};
use audkit::embed::{self, EmbedConfig, EmbedMethod};
use audkit::eval::{self, BoundaryMatching, ConfusionMatrix, NmiNorm};
use audkit::featio::{self, Alignment, AlignmentEntry, FrameMatrix};
use audkit::matrix::Matrix;
use audkit::pipeline::{self, ExperimentConfig};
use audkit::segment::{self, Segmentation};
use audkit::synth::{self, CorruptionSpec, SynthSpec};

create_exception!(audkit, AudkitError, PyException, "Data, format or invariant error raised by audkit.");

fn py_err(e: audkit::Error) -> PyErr {
    match e.root() {
        audkit::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        audkit::Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => AudkitError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for audkit::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = audkit::Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

type Entries = Vec<(usize, usize, String)>;

fn alignments_from_py(d: &Bound<'_, PyDict>) -> PyResult<Vec<Alignment>> {
    d.iter()
        .map(|(k, v)| {
            let id: String = k.extract()?;
            let entries: Entries = v.extract()?;
            Alignment::new(id, entries.into_iter().map(|(s, e, l)| AlignmentEntry::new(s, e, l)).collect()).py()
        })
        .collect()
}

fn alignments_to_py<'py>(py: Python<'py>, al: &[Alignment]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for a in al {
        let entries: Entries = a.entries().iter().map(|e| (e.start, e.end, e.label.clone())).collect();
        d.set_item(a.utt_id(), entries)?;
    }
    Ok(d)
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).py()
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Utterance-keyed frame matrices sharing one dimension and frame shift.
#[pyclass(name = "FeatureArchive", module = "audkit")]
struct PyFeatureArchive {
    inner: featio::FeatureArchive,
}

#[pymethods]
impl PyFeatureArchive {
    #[new]
    #[pyo3(signature = (frame_shift_ms = 10.0))]
    fn new(frame_shift_ms: f64) -> PyResult<Self> {
        Ok(Self {
            inner: featio::FeatureArchive::new(frame_shift_ms).py()?,
        })
    }

    /// Appends an utterance given as a list of frames.
    fn add(&mut self, utt_id: String, frames: Vec<Vec<f32>>) -> PyResult<()> {
        let fm = FrameMatrix::from_rows(utt_id, &frames).py()?;
        self.inner.push(fm).py()
    }

    fn frames(&self, utt_id: &str) -> PyResult<Vec<Vec<f32>>> {
        let fm = self
            .inner
            .get(utt_id)
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(utt_id.to_owned()))?;
        Ok(fm.iter_frames().map(<[f32]>::to_vec).collect())
    }

    fn utt_ids(&self) -> Vec<String> {
        self.inner.iter().map(|fm| fm.utt_id().to_owned()).collect()
    }

    #[getter]
    fn frame_shift_ms(&self) -> f64 {
        self.inner.frame_shift_ms()
    }

    #[getter]
    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }

    fn total_frames(&self) -> usize {
        self.inner.total_frames()
    }

    fn znormalized(&self) -> Self {
        Self {
            inner: self.inner.znormalized(),
        }
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        featio::write_feature_archive(&self.inner, path).py()
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: featio::read_feature_archive(path).py()?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &featio::encode_feature_archive(&self.inner).py()?))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: featio::decode_feature_archive(data).py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "FeatureArchive(utterances={}, frames={}, dim={}, frame_shift_ms={})",
            self.inner.len(),
            self.inner.total_frames(),
            self.inner.dim().map_or("None".to_owned(), |d| d.to_string()),
            self.inner.frame_shift_ms()
        )
    }
}

/// Result of a k-means fit.
#[pyclass(name = "KMeansModel", module = "audkit", frozen, get_all)]
struct PyKMeansModel {
    centroids: Vec<Vec<f64>>,
    assignments: Vec<usize>,
    inertia: f64,
    n_iter: usize,
    inertia_history: Vec<f64>,
    seed: u64,
}

#[pymethods]
impl PyKMeansModel {
    #[getter]
    fn k(&self) -> usize {
        self.centroids.len()
    }

    fn __repr__(&self) -> String {
        format!("KMeansModel(k={}, inertia={}, n_iter={})", self.centroids.len(), self.inertia, self.n_iter)
    }
}

impl From<cluster::KMeansModel> for PyKMeansModel {
    fn from(m: cluster::KMeansModel) -> Self {
        Self {
            centroids: m.centroids.iter_rows().map(<[f64]>::to_vec).collect(),
            assignments: m.assignments,
            inertia: m.inertia,
            n_iter: m.n_iter,
            inertia_history: m.inertia_history,
            seed: m.seed,
        }
    }
}

#[pyfunction]
fn read_alignment<'py>(py: Python<'py>, path: std::path::PathBuf) -> PyResult<Bound<'py, PyDict>> {
    alignments_to_py(py, &featio::parse_alignment_file(path, None).py()?)
}

#[pyfunction]
fn write_alignment(path: std::path::PathBuf, alignments: &Bound<'_, PyDict>) -> PyResult<()> {
    featio::serialize_alignment(&alignments_from_py(alignments)?, path).py()
}

/// Synthetic corpus: returns `(archive, gold_alignments)`.
#[pyfunction]
#[pyo3(signature = (
    n_phones = 50, dim = 40, n_utts = 200, phones_per_utt = (20, 40), dur_frames = (3, 12),
    noise_sigma = 0.5, centroid_scale = 10.0, frame_shift_ms = 10.0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn generate_corpus<'py>(
    py: Python<'py>,
    n_phones: usize,
    dim: usize,
    n_utts: usize,
    phones_per_utt: (usize, usize),
    dur_frames: (usize, usize),
    noise_sigma: f64,
    centroid_scale: f64,
    frame_shift_ms: f64,
    seed: u64,
) -> PyResult<(PyFeatureArchive, Bound<'py, PyDict>)> {
    let spec = SynthSpec {
        n_phones,
        dim,
        n_utts,
        phones_per_utt,
        dur_frames,
        noise_sigma,
        centroid_scale,
        frame_shift_ms,
        seed,
    };
    let c = py.detach(|| synth::generate_corpus(&spec)).py()?;
    Ok((PyFeatureArchive { inner: c.archive }, alignments_to_py(py, &c.gold)?))
}

/// Jitters boundaries and substitutes labels of every gold alignment.
#[pyfunction]
#[pyo3(signature = (gold, jitter_frames = 3, substitution_rate = 0.1, min_dur_frames = 1, seed = 0))]
fn corrupt<'py>(
    py: Python<'py>,
    gold: &Bound<'py, PyDict>,
    jitter_frames: usize,
    substitution_rate: f64,
    min_dur_frames: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = CorruptionSpec {
        jitter_frames,
        substitution_rate,
        min_dur_frames,
        seed,
    };
    spec.validate().py()?;
    let al = alignments_from_py(gold)?;
    alignments_to_py(py, &synth::corrupt_corpus(&al, &spec).py()?)
}

/// Internal boundaries (frame indices where the label changes).
#[pyfunction]
fn boundaries_from_labels(labels: Vec<String>) -> PyResult<Vec<usize>> {
    let al = Alignment::from_frame_labels("u", &labels).py()?;
    Ok(segment::boundaries_from_labels(&al).boundaries().to_vec())
}

/// Fixed-dimension embedding of one segment given as a list of frames.
#[pyfunction]
#[pyo3(signature = (frames, method = "avg", s = 1))]
fn embed_segment(frames: Vec<Vec<f32>>, method: &str, s: usize) -> PyResult<Vec<f64>> {
    let cfg = EmbedConfig::new(parse::<EmbedMethod>(method)?, s).py()?;
    let dim = frames.first().map_or(0, Vec::len);
    if frames.iter().any(|f| f.len() != dim) {
        return Err(PyValueError::new_err("frames have different lengths"));
    }
    let flat: Vec<f32> = frames.concat();
    embed::embed_segment(&flat, dim, &cfg).py()
}

#[pyfunction]
#[pyo3(signature = (data, k = 50, init = "kmeanspp", max_iter = 300, tol = 0.0, seed = 0))]
fn kmeans_fit(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    k: usize,
    init: &str,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyKMeansModel> {
    let cfg = KMeansConfig {
        k,
        init: parse::<Init>(init)?,
        max_iter,
        tol,
        seed,
    };
    let m = matrix_from_rows(data)?;
    Ok(py.detach(|| cluster::kmeans_fit(&m, &cfg)).py()?.into())
}

/// NMI in percent of a DU x GU count matrix.
#[pyfunction]
#[pyo3(signature = (counts, norm = "arith"))]
fn nmi(counts: Vec<Vec<u64>>, norm: &str) -> PyResult<f64> {
    let cm = ConfusionMatrix::from_counts(counts).py()?;
    Ok(eval::nmi(&cm, parse::<NmiNorm>(norm)?))
}

/// Boundary precision, recall and F-score in percent.
#[pyfunction]
#[pyo3(signature = (hyp, reference, n_frames, tolerance_frames = 2, matching = "greedy"))]
fn boundary_prf(
    hyp: Vec<usize>,
    reference: Vec<usize>,
    n_frames: usize,
    tolerance_frames: usize,
    matching: &str,
) -> PyResult<(f64, f64, f64)> {
    let h = Segmentation::new("u", hyp, n_frames).py()?;
    let r = Segmentation::new("u", reference, n_frames).py()?;
    let c = eval::boundary_counts(&h, &r, tolerance_frames, parse::<BoundaryMatching>(matching)?).py()?;
    let s = c.score();
    Ok((s.precision_pct, s.recall_pct, s.fscore_pct))
}

fn config(toml: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_toml_str(toml).py()
}

/// Runs an experiment from TOML config text; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml)?;
    let report = py.detach(|| pipeline::run_experiment(&cfg)).py()?;
    json_to_py(py, &featio::report_to_json(&report).py()?)
}

/// Runs one experiment per k; returns `{"k_values": [...], "reports": [...]}`.
#[pyfunction]
#[pyo3(signature = (k_values, config_toml = ""))]
fn run_sweep<'py>(py: Python<'py>, k_values: Vec<usize>, config_toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml)?;
    let table = py.detach(|| pipeline::run_sweep(&cfg, &k_values)).py()?;
    json_to_py(py, &featio::report_to_json(&table).py()?)
}

#[pymodule]
#[pyo3(name = "audkit")]
pub fn audkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("AudkitError", m.py().get_type::<AudkitError>())?;
    m.add_class::<PyFeatureArchive>()?;
    m.add_class::<PyKMeansModel>()?;
    m.add_function(wrap_pyfunction!(read_alignment, m)?)?;
    m.add_function(wrap_pyfunction!(write_alignment, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt, m)?)?;
    m.add_function(wrap_pyfunction!(boundaries_from_labels, m)?)?;
    m.add_function(wrap_pyfunction!(embed_segment, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans_fit, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_prf, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
