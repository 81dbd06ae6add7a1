//! On-disk formats.
//!
//! * AUDF: little-endian binary feature archive ([`read_feature_archive`]).
//! * Alignment text: `utt_id start_frame end_frame label`, one entry per line,
//!   frames with exclusive ends ([`parse_alignment_file`]).
//! * Evaluation reports: JSON with six-decimal floats ([`write_report`]).
//!
//! All writers go through a temp file in the destination directory followed
//! by a rename, so readers never observe a half-written file.

mod alignment;
mod audf;
mod report;

use std::io::Write;
use std::path::Path;

pub use alignment::{
    alignment_to_string, parse_alignment_file, parse_alignment_str, serialize_alignment, Alignment,
    AlignmentEntry,
};
pub use audf::{
    decode_feature_archive, encode_feature_archive, read_feature_archive, write_feature_archive,
    FeatureArchive, FrameMatrix, AUDF_MAGIC, AUDF_VERSION,
};
pub use report::{
    read_report, report_to_json, write_report, EvalReport, MetricRow, MetricSummary, ReportConfig,
};

use crate::error::{Error, Result};

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
