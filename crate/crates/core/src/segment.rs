//! Segment boundaries from frame-label discontinuities, feature slicing, and
//! merging of adjacent identical units.
//!
//! Utterance endpoints (frame 0 and frame T) are never stored as boundaries.

use crate::error::{Error, Result};
use crate::featio::{Alignment, AlignmentEntry, FrameMatrix};

/// Internal boundaries of one utterance. `boundaries` is strictly increasing
/// with every value in `1..n_frames`, giving `boundaries.len() + 1` segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    utt_id: String,
    boundaries: Vec<usize>,
    n_frames: usize,
}

impl Segmentation {
    pub fn new(utt_id: impl Into<String>, boundaries: Vec<usize>, n_frames: usize) -> Result<Self> {
        let utt_id = utt_id.into();
        if n_frames == 0 {
            return Err(Error::Data(format!("{utt_id}: segmentation of zero frames")));
        }
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= n_frames {
                return Err(Error::Data(format!(
                    "{utt_id}: boundary {b} out of order or outside (0, {n_frames})"
                )));
            }
            prev = b;
        }
        Ok(Self {
            utt_id,
            boundaries,
            n_frames,
        })
    }

    /// Boundaries at the start of every entry after the first, without
    /// fusing equal labels.
    pub fn from_entries(alignment: &Alignment) -> Self {
        Self {
            utt_id: alignment.utt_id().to_owned(),
            boundaries: alignment.entries()[1..].iter().map(|e| e.start).collect(),
            n_frames: alignment.n_frames(),
        }
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_segments(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// `(start, end)` of each segment in order.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let starts = std::iter::once(0).chain(self.boundaries.iter().copied());
        let ends = self.boundaries.iter().copied().chain(std::iter::once(self.n_frames));
        starts.zip(ends)
    }

    /// Alignment with one entry per segment, each labeled `label`.
    pub fn to_alignment(&self, label: &str) -> Alignment {
        self.label_segments(|_| label.to_owned())
    }

    /// Alignment with segment `i` labeled `label(i)`.
    pub fn label_segments(&self, mut label: impl FnMut(usize) -> String) -> Alignment {
        let entries = self
            .spans()
            .enumerate()
            .map(|(i, (s, e))| AlignmentEntry::new(s, e, label(i)))
            .collect();
        Alignment::new(self.utt_id.clone(), entries).expect("segment spans tile the utterance")
    }
}

/// Boundaries at every frame whose label differs from the previous frame's.
pub fn boundaries_from_labels(labels: &Alignment) -> Segmentation {
    let entries = labels.entries();
    let boundaries = entries
        .windows(2)
        .filter(|w| w[0].label != w[1].label)
        .map(|w| w[1].start)
        .collect();
    Segmentation {
        utt_id: labels.utt_id().to_owned(),
        boundaries,
        n_frames: labels.n_frames(),
    }
}

/// One segment of an utterance: `frames` holds rows `start..end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSlice<'a> {
    pub start: usize,
    pub end: usize,
    pub frames: &'a [f32],
}

pub fn extract_segments<'a>(
    features: &'a FrameMatrix,
    seg: &Segmentation,
) -> Result<Vec<SegmentSlice<'a>>> {
    if features.n_frames() != seg.n_frames() {
        return Err(Error::Dimension(format!(
            "{}: segmentation covers {} frames, features have {}",
            seg.utt_id(),
            seg.n_frames(),
            features.n_frames()
        )));
    }
    Ok(seg
        .spans()
        .map(|(start, end)| SegmentSlice {
            start,
            end,
            frames: features.frames(start, end),
        })
        .collect())
}

/// Collapses maximal runs of consecutive entries with equal labels.
pub fn merge_adjacent_units(units: &Alignment) -> Alignment {
    let mut merged: Vec<AlignmentEntry> = Vec::with_capacity(units.len());
    for e in units.entries() {
        match merged.last_mut() {
            Some(last) if last.label == e.label => last.end = e.end,
            _ => merged.push(e.clone()),
        }
    }
    Alignment::new(units.utt_id(), merged).expect("merging preserves contiguity")
}

/// Label of every frame, length `n_frames`.
pub fn broadcast_to_frames(units: &Alignment) -> Vec<&str> {
    let mut out = Vec::with_capacity(units.n_frames());
    for e in units.entries() {
        out.extend(std::iter::repeat_n(e.label.as_str(), e.len()));
    }
    out
}
