use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};

/// One labeled interval `[start, end)` in frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentEntry {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl AlignmentEntry {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Contiguous labeled intervals tiling `[0, n_frames)` of one utterance.
///
/// Used for gold phone alignments, frame label streams and discovered-unit
/// transcriptions alike; labels are opaque strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    utt_id: String,
    entries: Vec<AlignmentEntry>,
}

impl Alignment {
    /// Validates that entries are non-empty, start at frame 0 and are
    /// contiguous.
    pub fn new(utt_id: impl Into<String>, entries: Vec<AlignmentEntry>) -> Result<Self> {
        let utt_id = utt_id.into();
        let contiguity = |msg: String| Error::Contiguity {
            utt_id: utt_id.clone(),
            msg,
        };
        let first = entries
            .first()
            .ok_or_else(|| contiguity("no entries".into()))?;
        if first.start != 0 {
            return Err(contiguity(format!("first entry starts at {}", first.start)));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.start >= e.end {
                return Err(contiguity(format!(
                    "entry {i} has start {} >= end {}",
                    e.start, e.end
                )));
            }
            if let Some(next) = entries.get(i + 1) {
                if next.start != e.end {
                    let kind = if next.start > e.end { "gap" } else { "overlap" };
                    return Err(contiguity(format!(
                        "{kind} between entry {i} (end {}) and entry {} (start {})",
                        e.end,
                        i + 1,
                        next.start
                    )));
                }
            }
        }
        Ok(Self { utt_id, entries })
    }

    /// Run-length encodes a per-frame label sequence.
    pub fn from_frame_labels<L: AsRef<str>>(utt_id: impl Into<String>, labels: &[L]) -> Result<Self> {
        let mut entries: Vec<AlignmentEntry> = Vec::new();
        for (t, l) in labels.iter().enumerate() {
            let l = l.as_ref();
            match entries.last_mut() {
                Some(last) if last.label == l => last.end = t + 1,
                _ => entries.push(AlignmentEntry::new(t, t + 1, l)),
            }
        }
        Self::new(utt_id, entries)
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn entries(&self) -> &[AlignmentEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<AlignmentEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Frame count covered, i.e. the last end frame.
    pub fn n_frames(&self) -> usize {
        self.entries.last().map_or(0, |e| e.end)
    }

    /// Distinct labels in first-appearance order.
    pub fn label_set(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .map(|e| e.label.as_str())
            .filter(|l| seen.insert(*l))
            .collect()
    }

    pub fn check_coverage(&self, n_frames: usize) -> Result<()> {
        if self.n_frames() != n_frames {
            return Err(Error::Coverage {
                utt_id: self.utt_id.clone(),
                msg: format!(
                    "alignment ends at frame {}, utterance has {n_frames} frames",
                    self.n_frames()
                ),
            });
        }
        Ok(())
    }
}

/// Parses alignment text. Blank and `#` lines are skipped. When
/// `expected_frames` is given, every alignment must end exactly at its
/// utterance's frame count.
pub fn parse_alignment_str(
    text: &str,
    expected_frames: Option<&HashMap<String, usize>>,
) -> Result<Vec<Alignment>> {
    let mut out: Vec<Alignment> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<(String, Vec<AlignmentEntry>, usize)> = None;

    let mut finish = |utt: String, entries: Vec<AlignmentEntry>, first_line: usize| -> Result<()> {
        let a = Alignment::new(utt, entries).map_err(|e| match e {
            Error::Contiguity { utt_id, msg } => Error::Contiguity {
                utt_id,
                msg: format!("{msg} (block starting at line {first_line})"),
            },
            other => other,
        })?;
        out.push(a);
        Ok(())
    };

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::format_at(
                lineno,
                format!("expected `utt_id start end label` separated by single spaces, got {line:?}"),
            ));
        }
        let parse_frame = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format_at(lineno, format!("{what} frame {s:?} is not a count")))
        };
        let start = parse_frame(fields[1], "start")?;
        let end = parse_frame(fields[2], "end")?;
        let utt = fields[0];
        let entry = AlignmentEntry::new(start, end, fields[3]);

        match &mut current {
            Some((id, entries, _)) if id == utt => entries.push(entry),
            _ => {
                if !seen.insert(utt.to_owned()) {
                    return Err(Error::format_at(
                        lineno,
                        format!("lines of utterance {utt} are not grouped together"),
                    ));
                }
                if let Some((id, entries, first)) = current.take() {
                    finish(id, entries, first)?;
                }
                current = Some((utt.to_owned(), vec![entry], lineno));
            }
        }
    }
    if let Some((id, entries, first)) = current.take() {
        finish(id, entries, first)?;
    }

    if let Some(expected) = expected_frames {
        for a in &out {
            let n = expected.get(a.utt_id()).ok_or_else(|| Error::Coverage {
                utt_id: a.utt_id().to_owned(),
                msg: "no frame count known for this utterance".into(),
            })?;
            a.check_coverage(*n)?;
        }
    }
    Ok(out)
}

pub fn parse_alignment_file(
    path: impl AsRef<Path>,
    expected_frames: Option<&HashMap<String, usize>>,
) -> Result<Vec<Alignment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment_str(&text, expected_frames)
}

fn check_token(token: &str, what: &str, utt: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::format(format!(
            "{what} {token:?} of utterance {utt} is empty or contains whitespace"
        )));
    }
    Ok(())
}

/// Renders alignments in the text format. Rejects tokens the format cannot
/// represent (empty, whitespace, an utterance id starting with `#`) and
/// utterance ids that repeat.
pub fn alignment_to_string(alignments: &[Alignment]) -> Result<String> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for a in alignments {
        check_token(a.utt_id(), "utterance id", a.utt_id())?;
        if a.utt_id().starts_with('#') {
            return Err(Error::format(format!(
                "utterance id {:?} would be read back as a comment",
                a.utt_id()
            )));
        }
        if !seen.insert(a.utt_id()) {
            return Err(Error::format(format!("utterance {} appears twice", a.utt_id())));
        }
        for e in a.entries() {
            check_token(&e.label, "label", a.utt_id())?;
            writeln!(out, "{} {} {} {}", a.utt_id(), e.start, e.end, e.label).unwrap();
        }
    }
    Ok(out)
}

pub fn serialize_alignment(alignments: &[Alignment], path: impl AsRef<Path>) -> Result<()> {
    let text = alignment_to_string(alignments)?;
    write_atomic(path.as_ref(), text.as_bytes())
}
