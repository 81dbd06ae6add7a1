use std::path::Path;

use indexmap::IndexMap;

use super::write_atomic;
use crate::error::{Error, Result};

pub const AUDF_MAGIC: &[u8; 4] = b"AUDF";
pub const AUDF_VERSION: u32 = 1;

/// Frame-level features of one utterance: `n_frames` rows of `dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    utt_id: String,
    n_frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FrameMatrix {
    /// Builds a matrix from row-major values. Requires `n_frames >= 1`,
    /// `dim >= 1` and finite values.
    pub fn new(
        utt_id: impl Into<String>,
        n_frames: usize,
        dim: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        let utt_id = utt_id.into();
        if n_frames == 0 || dim == 0 {
            return Err(Error::Data(format!(
                "{utt_id}: frame matrix must be non-empty, got {n_frames}x{dim}"
            )));
        }
        if n_frames.checked_mul(dim) != Some(values.len()) {
            return Err(Error::Dimension(format!(
                "{utt_id}: {n_frames}x{dim} matrix given {} values",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{utt_id}: non-finite value at frame {}, dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            utt_id,
            n_frames,
            dim,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(utt_id: impl Into<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.as_ref().len() != dim {
                return Err(Error::Dimension("ragged frame rows".into()));
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(utt_id, rows.len(), dim, values)
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows `start..end` as one contiguous slice.
    pub fn frames(&self, start: usize, end: usize) -> &[f32] {
        &self.values[start * self.dim..end * self.dim]
    }

    pub fn iter_frames(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }
}

/// Ordered, uniquely keyed collection of utterance features sharing one
/// feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArchive {
    frame_shift_ms: f64,
    utterances: IndexMap<String, FrameMatrix>,
}

impl FeatureArchive {
    pub fn new(frame_shift_ms: f64) -> Result<Self> {
        if !(frame_shift_ms.is_finite() && frame_shift_ms > 0.0) {
            return Err(Error::Data(format!(
                "frame shift must be positive, got {frame_shift_ms}"
            )));
        }
        Ok(Self {
            frame_shift_ms,
            utterances: IndexMap::new(),
        })
    }

    pub fn frame_shift_ms(&self) -> f64 {
        self.frame_shift_ms
    }

    /// Feature dimension, or `None` for an empty archive.
    pub fn dim(&self) -> Option<usize> {
        self.utterances.values().next().map(FrameMatrix::dim)
    }

    pub fn push(&mut self, matrix: FrameMatrix) -> Result<()> {
        if let Some(d) = self.dim() {
            if matrix.dim() != d {
                return Err(Error::Dimension(format!(
                    "{} has dimension {}, archive has {d}",
                    matrix.utt_id(),
                    matrix.dim()
                )));
            }
        }
        if self.utterances.contains_key(matrix.utt_id()) {
            return Err(Error::DuplicateKey(matrix.utt_id().to_owned()));
        }
        self.utterances.insert(matrix.utt_id.clone(), matrix);
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<&FrameMatrix> {
        self.utterances.get(utt_id)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &FrameMatrix> + '_ {
        self.utterances.values()
    }

    pub fn total_frames(&self) -> usize {
        self.iter().map(FrameMatrix::n_frames).sum()
    }

    /// Map of utterance id to frame count, for alignment coverage checks.
    pub fn frame_counts(&self) -> std::collections::HashMap<String, usize> {
        self.iter()
            .map(|m| (m.utt_id().to_owned(), m.n_frames()))
            .collect()
    }

    /// Per-dimension z-normalization with statistics pooled over every frame.
    /// Constant dimensions are only centered.
    pub fn znormalized(&self) -> Self {
        let Some(dim) = self.dim() else {
            return self.clone();
        };
        let n = self.total_frames() as f64;
        let mut mean = vec![0.0f64; dim];
        for m in self.iter() {
            for f in m.iter_frames() {
                for (acc, &v) in mean.iter_mut().zip(f) {
                    *acc += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; dim];
        for m in self.iter() {
            for f in m.iter_frames() {
                for ((acc, &v), mu) in var.iter_mut().zip(f).zip(&mean) {
                    *acc += (v as f64 - mu).powi(2);
                }
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        let mut out = Self {
            frame_shift_ms: self.frame_shift_ms,
            utterances: IndexMap::with_capacity(self.len()),
        };
        for m in self.iter() {
            let values = m
                .values
                .chunks_exact(dim)
                .flat_map(|f| {
                    f.iter()
                        .zip(&mean)
                        .zip(&scale)
                        .map(|((&v, mu), sc)| ((v as f64 - mu) * sc) as f32)
                })
                .collect();
            out.utterances.insert(
                m.utt_id.clone(),
                FrameMatrix {
                    values,
                    ..m.clone()
                },
            );
        }
        out
    }
}

pub fn encode_feature_archive(archive: &FeatureArchive) -> Result<Vec<u8>> {
    let payload: usize = archive
        .iter()
        .map(|m| 12 + m.utt_id.len() + 4 * m.values.len())
        .sum();
    let mut buf = Vec::with_capacity(20 + payload);
    buf.extend_from_slice(AUDF_MAGIC);
    buf.extend_from_slice(&AUDF_VERSION.to_le_bytes());
    buf.extend_from_slice(&archive.frame_shift_ms.to_le_bytes());
    buf.extend_from_slice(&to_u32(archive.len(), "utterance count")?.to_le_bytes());
    for m in archive.iter() {
        buf.extend_from_slice(&to_u32(m.utt_id.len(), "utterance id length")?.to_le_bytes());
        buf.extend_from_slice(m.utt_id.as_bytes());
        buf.extend_from_slice(&to_u32(m.n_frames, "frame count")?.to_le_bytes());
        buf.extend_from_slice(&to_u32(m.dim, "dimension")?.to_le_bytes());
        for v in &m.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Data(format!("{what} {n} does not fit in u32")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::format(format!("truncated archive while reading {what} at byte {}", self.pos))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_feature_archive(bytes: &[u8]) -> Result<FeatureArchive> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != AUDF_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected \"AUDF\"")));
    }
    let version = cur.u32("version")?;
    if version != AUDF_VERSION {
        return Err(Error::format(format!("unsupported AUDF version {version}")));
    }
    let shift = cur.f64("frame shift")?;
    let mut archive = FeatureArchive::new(shift)?;
    let count = cur.u32("utterance count")?;
    for _ in 0..count {
        let id_len = cur.u32("utterance id length")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "utterance id")?)
            .map_err(|e| Error::format(format!("utterance id is not UTF-8: {e}")))?
            .to_owned();
        let n_frames = cur.u32("frame count")? as usize;
        let dim = cur.u32("dimension")? as usize;
        let n_values = n_frames
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(format!("{id}: matrix size overflows")))?;
        let raw = cur.take(n_values, "frame values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        archive.push(FrameMatrix::new(id, n_frames, dim, values)?)?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after last utterance",
            bytes.len() - cur.pos
        )));
    }
    Ok(archive)
}

pub fn read_feature_archive(path: impl AsRef<Path>) -> Result<FeatureArchive> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_archive(&bytes)
}

pub fn write_feature_archive(archive: &FeatureArchive, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_feature_archive(archive)?)
}
