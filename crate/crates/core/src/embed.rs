//! Fixed-dimension segment embeddings.
//!
//! A segment of `L` frames is cut into `s` consecutive sub-segments and the
//! per-sub-segment means are concatenated, giving `s * d` values. With
//! `s = 1` this is the plain segment average.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featio::FeatureArchive;
use crate::matrix::Matrix;
use crate::segment::{extract_segments, Segmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMethod {
    /// Mean over all frames of the segment.
    Avg,
    /// Downsampling: concatenated means of `s` sub-segments.
    Ds,
}

impl fmt::Display for EmbedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMethod::Avg => "avg",
            EmbedMethod::Ds => "ds",
        })
    }
}

impl FromStr for EmbedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(EmbedMethod::Avg),
            "ds" => Ok(EmbedMethod::Ds),
            other => Err(Error::Config(format!("unknown embedding method {other:?} (avg|ds)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedConfig {
    method: EmbedMethod,
    s: usize,
}

impl EmbedConfig {
    pub fn avg() -> Self {
        Self {
            method: EmbedMethod::Avg,
            s: 1,
        }
    }

    pub fn ds(s: usize) -> Result<Self> {
        Self::new(EmbedMethod::Ds, s)
    }

    /// `s` must be at least 1; `Avg` requires `s == 1`.
    pub fn new(method: EmbedMethod, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Config("sub-segment count s must be >= 1".into()));
        }
        if method == EmbedMethod::Avg && s != 1 {
            return Err(Error::Config(format!("avg embedding implies s = 1, got s = {s}")));
        }
        Ok(Self { method, s })
    }

    pub fn method(&self) -> EmbedMethod {
        self.method
    }

    pub fn s(&self) -> usize {
        self.s
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self::avg()
    }
}

/// First frame of sub-segment `i` when `len` frames are split `s` ways.
#[inline]
fn slot_start(i: usize, len: usize, s: usize) -> usize {
    i * len / s
}

/// Embeds `frames` (row-major, `dim` columns) into `s * dim` values.
///
/// Sub-segment `i` covers frames `[i*L/s, (i+1)*L/s)` (integer division).
/// When `L < s` some of those ranges are empty; slot `i` then takes the single
/// frame `min(i*L/s, L-1)`. Means accumulate in `f64`.
pub fn embed_segment(frames: &[f32], dim: usize, cfg: &EmbedConfig) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Dimension("feature dimension is zero".into()));
    }
    if !frames.len().is_multiple_of(dim) {
        return Err(Error::Dimension(format!(
            "{} values do not form rows of {dim}",
            frames.len()
        )));
    }
    let len = frames.len() / dim;
    if len == 0 {
        return Err(Error::EmptySegment);
    }
    let s = cfg.s;
    let mut out = vec![0.0f64; s * dim];
    for (i, slot) in out.chunks_exact_mut(dim).enumerate() {
        let mut lo = slot_start(i, len, s);
        let mut hi = slot_start(i + 1, len, s);
        if hi <= lo {
            lo = lo.min(len - 1);
            hi = lo + 1;
        }
        for row in frames[lo * dim..hi * dim].chunks_exact(dim) {
            for (acc, &v) in slot.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        let n = (hi - lo) as f64;
        slot.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Back-reference from an embedding row to its segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRef {
    pub utt_id: String,
    pub start: usize,
    pub end: usize,
}

/// One embedding row per segment, ordered by utterance then segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbeddingSet {
    pub rows: Matrix,
    pub index: Vec<SegmentRef>,
}

impl SegmentEmbeddingSet {
    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Embeds every segment of every segmentation. Utterances are processed in
/// parallel; row order follows `segs`.
pub fn embed_corpus(
    archive: &FeatureArchive,
    segs: &[Segmentation],
    cfg: &EmbedConfig,
) -> Result<SegmentEmbeddingSet> {
    let d = archive.dim().unwrap_or(0);
    let out_dim = cfg.s * d;
    let per_utt: Vec<Vec<(SegmentRef, Vec<f64>)>> = segs
        .par_iter()
        .map(|seg| {
            let fm = archive.get(seg.utt_id()).ok_or_else(|| {
                Error::Dimension(format!("utterance {} missing from feature archive", seg.utt_id()))
            })?;
            extract_segments(fm, seg)?
                .into_iter()
                .map(|piece| {
                    let v = embed_segment(piece.frames, d, cfg)?;
                    let r = SegmentRef {
                        utt_id: seg.utt_id().to_owned(),
                        start: piece.start,
                        end: piece.end,
                    };
                    Ok((r, v))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n: usize = per_utt.iter().map(Vec::len).sum();
    let mut data = Vec::with_capacity(n * out_dim);
    let mut index = Vec::with_capacity(n);
    for (r, v) in per_utt.into_iter().flatten() {
        data.extend_from_slice(&v);
        index.push(r);
    }
    Ok(SegmentEmbeddingSet {
        rows: Matrix::new(n, out_dim, data)?,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featio::FrameMatrix;
    use proptest::prelude::*;

    /// Per-slot loop written independently of `embed_segment`.
    fn naive(rows: &[Vec<f32>], s: usize) -> Vec<f64> {
        let l = rows.len();
        let d = rows[0].len();
        let mut out = Vec::new();
        for i in 0..s {
            let (a, b) = ((i * l) / s, ((i + 1) * l) / s);
            let idx: Vec<usize> = if b > a { (a..b).collect() } else { vec![a.min(l - 1)] };
            for k in 0..d {
                let total: f64 = idx.iter().map(|&t| rows[t][k] as f64).sum();
                out.push(total / idx.len() as f64);
            }
        }
        out
    }

    fn flat(rows: &[Vec<f32>]) -> Vec<f32> {
        rows.iter().flatten().copied().collect()
    }

    #[test]
    fn halves_for_s2() {
        let f = [0.0f32, 0.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0];
        let v = embed_segment(&f, 2, &EmbedConfig::ds(2).unwrap()).unwrap();
        assert_eq!(v, [1.0, 1.0, 5.0, 5.0]);
    }

    #[test]
    fn s1_is_average() {
        let f = [1.0f32, 2.0, 3.0, 4.0, 8.0, 9.0];
        let ds1 = embed_segment(&f, 2, &EmbedConfig::ds(1).unwrap()).unwrap();
        let avg = embed_segment(&f, 2, &EmbedConfig::avg()).unwrap();
        assert_eq!(ds1, avg);
        assert_eq!(avg, [4.0, 5.0]);
    }

    #[test]
    fn replication_for_short_segments() {
        let v = embed_segment(&[3.0, 7.0], 2, &EmbedConfig::ds(3).unwrap()).unwrap();
        assert_eq!(v, [3.0, 7.0, 3.0, 7.0, 3.0, 7.0]);
    }

    #[test]
    fn seven_frames_three_slots() {
        let rows: Vec<Vec<f32>> = (0..7).map(|t| vec![(t * t) as f32 * 0.37 - 1.0, t as f32]).collect();
        let v = embed_segment(&flat(&rows), 2, &EmbedConfig::ds(3).unwrap()).unwrap();
        assert_eq!(v, naive(&rows, 3));
        // slots [0,2), [2,4), [4,7)
        assert_eq!(v[1], 0.5);
        assert_eq!(v[3], 2.5);
        assert_eq!(v[5], 5.0);
    }

    #[test]
    fn empty_segment_rejected() {
        assert!(matches!(
            embed_segment(&[], 3, &EmbedConfig::avg()),
            Err(Error::EmptySegment)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EmbedConfig::ds(0).is_err());
        assert!(EmbedConfig::new(EmbedMethod::Avg, 2).is_err());
        assert_eq!("ds".parse::<EmbedMethod>().unwrap(), EmbedMethod::Ds);
        assert!("mean".parse::<EmbedMethod>().is_err());
    }

    fn archive(utts: &[(&str, Vec<Vec<f32>>)]) -> FeatureArchive {
        let mut a = FeatureArchive::new(10.0).unwrap();
        for (id, rows) in utts {
            a.push(FrameMatrix::from_rows(*id, rows).unwrap()).unwrap();
        }
        a
    }

    #[test]
    fn corpus_single_segment_is_utterance_mean() {
        let a = archive(&[("u", vec![vec![1.0, 0.0], vec![3.0, 2.0]])]);
        let segs = [Segmentation::new("u", vec![], 2).unwrap()];
        let set = embed_corpus(&a, &segs, &EmbedConfig::avg()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.rows.row(0), &[2.0, 1.0]);
        assert_eq!(set.index[0], SegmentRef { utt_id: "u".into(), start: 0, end: 2 });
    }

    #[test]
    fn corpus_ds2_on_even_segments_splits_halves() {
        let rows: Vec<Vec<f32>> = (0..8).map(|t| vec![t as f32, (t % 3) as f32]).collect();
        let a = archive(&[("u", rows.clone())]);
        let seg = Segmentation::new("u", vec![4, 6], 8).unwrap();
        let set = embed_corpus(&a, std::slice::from_ref(&seg), &EmbedConfig::ds(2).unwrap()).unwrap();
        for (i, (s, e)) in seg.spans().enumerate() {
            let half = (e - s) / 2;
            let first = embed_segment(&flat(&rows[s..s + half]), 2, &EmbedConfig::avg()).unwrap();
            let second = embed_segment(&flat(&rows[s + half..e]), 2, &EmbedConfig::avg()).unwrap();
            assert_eq!(&set.rows.row(i)[..2], first.as_slice());
            assert_eq!(&set.rows.row(i)[2..], second.as_slice());
        }
    }

    #[test]
    fn empty_corpus_keeps_dimension() {
        let a = archive(&[("u", vec![vec![1.0, 2.0, 3.0]])]);
        let set = embed_corpus(&a, &[], &EmbedConfig::ds(3).unwrap()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.dim(), 9);
    }

    #[test]
    fn missing_utterance_or_length_mismatch() {
        let a = archive(&[("u", vec![vec![1.0]; 4])]);
        let missing = [Segmentation::new("v", vec![], 4).unwrap()];
        assert!(matches!(embed_corpus(&a, &missing, &EmbedConfig::avg()), Err(Error::Dimension(_))));
        let short = [Segmentation::new("u", vec![], 3).unwrap()];
        assert!(matches!(embed_corpus(&a, &short, &EmbedConfig::avg()), Err(Error::Dimension(_))));
    }

    fn arb_rows() -> impl Strategy<Value = Vec<Vec<f32>>> {
        (1usize..4).prop_flat_map(|d| {
            prop::collection::vec(prop::collection::vec(-100.0f32..100.0, d), 1..25)
        })
    }

    proptest! {
        #[test]
        fn matches_naive_oracle(rows in arb_rows(), s in 1usize..7) {
            let d = rows[0].len();
            let v = embed_segment(&flat(&rows), d, &EmbedConfig::ds(s).unwrap()).unwrap();
            prop_assert_eq!(v, naive(&rows, s));
        }

        #[test]
        fn constant_segment_repeats(v in prop::collection::vec(-50.0f32..50.0, 1..5), len in 1usize..12, s in 1usize..6) {
            let rows = vec![v.clone(); len];
            let e = embed_segment(&flat(&rows), v.len(), &EmbedConfig::ds(s).unwrap()).unwrap();
            let want: Vec<f64> = v.iter().map(|&x| x as f64).cycle().take(s * v.len()).collect();
            prop_assert_eq!(e, want);
        }

        #[test]
        fn means_are_contained(rows in arb_rows(), s in 1usize..7) {
            let d = rows[0].len();
            let l = rows.len();
            let e = embed_segment(&flat(&rows), d, &EmbedConfig::ds(s).unwrap()).unwrap();
            for i in 0..s {
                let (a, b) = ((i * l) / s, ((i + 1) * l) / s);
                let (a, b) = if b > a { (a, b) } else { (a.min(l - 1), a.min(l - 1) + 1) };
                for k in 0..d {
                    let lo = rows[a..b].iter().map(|r| r[k] as f64).fold(f64::INFINITY, f64::min);
                    let hi = rows[a..b].iter().map(|r| r[k] as f64).fold(f64::NEG_INFINITY, f64::max);
                    let x = e[i * d + k];
                    prop_assert!(lo - 1e-9 <= x && x <= hi + 1e-9);
                }
            }
        }

        #[test]
        fn swapping_segments_swaps_rows(rows in prop::collection::vec(prop::collection::vec(-5.0f32..5.0, 2), 4..20), cut in 1usize..3) {
            let t = rows.len();
            let b = (t * cut / 3).max(1);
            let a = archive(&[("u", rows.clone())]);
            let seg = Segmentation::new("u", vec![b], t).unwrap();
            let set = embed_corpus(&a, &[seg], &EmbedConfig::ds(2).unwrap()).unwrap();
            // same frames with the two segments exchanged
            let mut swapped = rows[b..].to_vec();
            swapped.extend_from_slice(&rows[..b]);
            let a2 = archive(&[("u", swapped)]);
            let seg2 = Segmentation::new("u", vec![t - b], t).unwrap();
            let set2 = embed_corpus(&a2, &[seg2], &EmbedConfig::ds(2).unwrap()).unwrap();
            prop_assert_eq!(set.rows.row(0), set2.rows.row(1));
            prop_assert_eq!(set.rows.row(1), set2.rows.row(0));
        }
    }
}
