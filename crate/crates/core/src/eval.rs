//! Frame-level NMI between discovered and gold units, tolerance-based
//! boundary precision / recall / F-score, and mean ± std aggregation over
//! k-means repetitions.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featio::{MetricRow, MetricSummary};
use crate::segment::Segmentation;

/// Frame counts of (discovered unit, gold unit) label pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    du_labels: Vec<String>,
    gu_labels: Vec<String>,
    /// Row-major `du_labels.len() x gu_labels.len()`.
    counts: Vec<u64>,
    total: u64,
}

impl ConfusionMatrix {
    pub fn new(du_labels: Vec<String>, gu_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let unique = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !unique(&du_labels) || !unique(&gu_labels) {
            return Err(Error::Data("confusion matrix labels must be unique".into()));
        }
        if counts.len() != du_labels.len() || counts.iter().any(|r| r.len() != gu_labels.len()) {
            return Err(Error::Dimension(format!(
                "counts must be {}x{}",
                du_labels.len(),
                gu_labels.len()
            )));
        }
        let counts: Vec<u64> = counts.into_iter().flatten().collect();
        let total = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput("confusion matrix has no frames".into()));
        }
        Ok(Self {
            du_labels,
            gu_labels,
            counts,
            total,
        })
    }

    /// Matrix with generated labels `d0.., g0..`; convenient for tests.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        Self::new(
            (0..rows).map(|i| format!("d{i}")).collect(),
            (0..cols).map(|j| format!("g{j}")).collect(),
            counts,
        )
    }

    pub fn du_labels(&self) -> &[String] {
        &self.du_labels
    }

    pub fn gu_labels(&self) -> &[String] {
        &self.gu_labels
    }

    pub fn count(&self, du: usize, gu: usize) -> u64 {
        self.counts[du * self.gu_labels.len() + gu]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn row_sums(&self) -> Vec<u64> {
        let g = self.gu_labels.len();
        self.counts.chunks_exact(g).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let g = self.gu_labels.len();
        let mut out = vec![0; g];
        for r in self.counts.chunks_exact(g) {
            for (o, c) in out.iter_mut().zip(r) {
                *o += c;
            }
        }
        out
    }

    pub fn transposed(&self) -> Self {
        let (d, g) = (self.du_labels.len(), self.gu_labels.len());
        let mut counts = vec![0; d * g];
        for i in 0..d {
            for j in 0..g {
                counts[j * d + i] = self.count(i, j);
            }
        }
        Self {
            du_labels: self.gu_labels.clone(),
            gu_labels: self.du_labels.clone(),
            counts,
            total: self.total,
        }
    }
}

/// Confusion matrix pooled over utterances. Labels are sorted; both maps
/// must hold the same utterances with equal frame counts.
pub fn frame_confusion<L: AsRef<str>>(
    du: &IndexMap<String, Vec<L>>,
    gu: &IndexMap<String, Vec<L>>,
) -> Result<ConfusionMatrix> {
    if let Some(missing) = du.keys().find(|k| !gu.contains_key(*k)) {
        return Err(Error::Key(format!("utterance {missing} has no gold labels")));
    }
    if let Some(missing) = gu.keys().find(|k| !du.contains_key(*k)) {
        return Err(Error::Key(format!("utterance {missing} has no discovered labels")));
    }
    for (utt, d) in du {
        let g = &gu[utt];
        if d.len() != g.len() {
            return Err(Error::Dimension(format!(
                "{utt}: {} discovered frame labels vs {} gold",
                d.len(),
                g.len()
            )));
        }
    }
    let index = |m: &IndexMap<String, Vec<L>>| -> (Vec<String>, HashMap<String, usize>) {
        let set: BTreeSet<&str> = m.values().flatten().map(AsRef::as_ref).collect();
        let labels: Vec<String> = set.into_iter().map(str::to_owned).collect();
        let pos = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        (labels, pos)
    };
    let (du_labels, du_pos) = index(du);
    let (gu_labels, gu_pos) = index(gu);
    let g = gu_labels.len();
    let mut counts = vec![0u64; du_labels.len() * g];
    for (utt, d) in du {
        for (a, b) in d.iter().zip(&gu[utt]) {
            counts[du_pos[a.as_ref()] * g + gu_pos[b.as_ref()]] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("no frames to compare".into()));
    }
    Ok(ConfusionMatrix {
        du_labels,
        gu_labels,
        counts,
        total,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    /// `2 I / (H(DU) + H(GU))`
    #[default]
    Arith,
    /// `I / H(GU)`
    Ref,
    /// `I / H(DU, GU)`
    Joint,
}

impl fmt::Display for NmiNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NmiNorm::Arith => "arith",
            NmiNorm::Ref => "ref",
            NmiNorm::Joint => "joint",
        })
    }
}

impl FromStr for NmiNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arith" => Ok(NmiNorm::Arith),
            "ref" => Ok(NmiNorm::Ref),
            "joint" => Ok(NmiNorm::Joint),
            other => Err(Error::Config(format!("unknown NMI normalization {other:?} (arith|ref|joint)"))),
        }
    }
}

fn entropy_bits(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Information quantities of a confusion matrix, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    pub mutual_information: f64,
    pub du: f64,
    pub gu: f64,
    pub joint: f64,
}

pub fn entropies(cm: &ConfusionMatrix) -> Entropies {
    let n = cm.total as f64;
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let g = cm.gu_labels.len();
    let mut mi = 0.0;
    for (i, r) in cm.counts.chunks_exact(g).enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                // p(i,j) log p(i,j) / (p(i) p(j)) = p(i,j) log c n / (r_i c_j)
                let p = c as f64 / n;
                mi += p * ((c as f64 * n) / (rows[i] as f64 * cols[j] as f64)).log2();
            }
        }
    }
    Entropies {
        mutual_information: mi.max(0.0),
        du: entropy_bits(rows.into_iter(), n),
        gu: entropy_bits(cols.into_iter(), n),
        joint: entropy_bits(cm.counts.iter().copied(), n),
    }
}

/// Normalized mutual information in percent, clamped to `[0, 100]`.
///
/// If both marginal entropies vanish (one unit on each side) the labelings
/// agree trivially and the score is 100; otherwise a zero denominator gives 0.
pub fn nmi(cm: &ConfusionMatrix, norm: NmiNorm) -> f64 {
    let e = entropies(cm);
    if e.du == 0.0 && e.gu == 0.0 {
        return 100.0;
    }
    let (num, den) = match norm {
        NmiNorm::Arith => (2.0 * e.mutual_information, e.du + e.gu),
        NmiNorm::Ref => (e.mutual_information, e.gu),
        NmiNorm::Joint => (e.mutual_information, e.joint),
    };
    if den <= 0.0 {
        return 0.0;
    }
    (100.0 * num / den).clamp(0.0, 100.0)
}

/// `floor(tol_ms / frame_shift_ms)`, with a little slack for inputs such as
/// 30 ms / 10 ms that are not exact in binary.
pub fn tolerance_frames(tol_ms: f64, frame_shift_ms: f64) -> usize {
    (tol_ms / frame_shift_ms + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMatching {
    /// Hypotheses in ascending order take the nearest free reference in
    /// tolerance; ties go to the earlier reference.
    #[default]
    Greedy,
    /// Maximum-cardinality one-to-one matching.
    Optimal,
}

impl fmt::Display for BoundaryMatching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMatching::Greedy => "greedy",
            BoundaryMatching::Optimal => "optimal",
        })
    }
}

impl FromStr for BoundaryMatching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(BoundaryMatching::Greedy),
            "optimal" => Ok(BoundaryMatching::Optimal),
            other => Err(Error::Config(format!("unknown boundary matching {other:?} (greedy|optimal)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryAverage {
    /// Pool counts over utterances.
    #[default]
    Micro,
    /// Average per-utterance precision and recall; F stays pooled.
    Macro,
}

impl fmt::Display for BoundaryAverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryAverage::Micro => "micro",
            BoundaryAverage::Macro => "macro",
        })
    }
}

impl FromStr for BoundaryAverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(BoundaryAverage::Micro),
            "macro" => Ok(BoundaryAverage::Macro),
            other => Err(Error::Config(format!("unknown boundary average {other:?} (micro|macro)"))),
        }
    }
}

/// Number of one-to-one matches between sorted boundary lists.
pub fn match_boundaries(hyp: &[usize], reference: &[usize], tol: usize, matching: BoundaryMatching) -> usize {
    let mut used = vec![false; reference.len()];
    let mut matched = 0;
    for &h in hyp {
        let lo = reference.partition_point(|&r| r + tol < h);
        let window = reference[lo..]
            .iter()
            .enumerate()
            .take_while(|(_, &r)| r <= h + tol)
            .filter(|(i, _)| !used[lo + i]);
        let pick = match matching {
            // min_by_key keeps the first of equal keys, i.e. the earlier ref
            BoundaryMatching::Greedy => window.min_by_key(|(_, &r)| r.abs_diff(h)),
            BoundaryMatching::Optimal => window.into_iter().next(),
        };
        if let Some((i, _)) = pick {
            used[lo + i] = true;
            matched += 1;
        }
    }
    matched
}

/// Raw boundary counts; add them up to pool over utterances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundaryCounts {
    pub n_hyp: usize,
    pub n_ref: usize,
    pub n_matched: usize,
}

impl std::ops::AddAssign for BoundaryCounts {
    fn add_assign(&mut self, o: Self) {
        self.n_hyp += o.n_hyp;
        self.n_ref += o.n_ref;
        self.n_matched += o.n_matched;
    }
}

impl BoundaryCounts {
    /// Precision in percent; with no hypotheses, 100 if there are also no
    /// references, else 0.
    pub fn precision_pct(&self) -> f64 {
        ratio_pct(self.n_matched, self.n_hyp, self.n_ref == 0)
    }

    /// Recall in percent; with no references, 100 if there are also no
    /// hypotheses, else 0.
    pub fn recall_pct(&self) -> f64 {
        ratio_pct(self.n_matched, self.n_ref, self.n_hyp == 0)
    }

    pub fn score(&self) -> BoundaryScore {
        let p = self.precision_pct();
        let r = self.recall_pct();
        BoundaryScore {
            precision_pct: p,
            recall_pct: r,
            fscore_pct: harmonic(p, r),
            n_hyp: self.n_hyp,
            n_ref: self.n_ref,
            n_matched: self.n_matched,
        }
    }
}

fn ratio_pct(num: usize, den: usize, other_empty: bool) -> f64 {
    if den == 0 {
        if other_empty {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryScore {
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub fscore_pct: f64,
    pub n_hyp: usize,
    pub n_ref: usize,
    pub n_matched: usize,
}

pub fn boundary_counts(
    hyp: &Segmentation,
    reference: &Segmentation,
    tol_frames: usize,
    matching: BoundaryMatching,
) -> Result<BoundaryCounts> {
    if hyp.n_frames() != reference.n_frames() {
        return Err(Error::Dimension(format!(
            "{}: hypothesis covers {} frames, reference {}",
            hyp.utt_id(),
            hyp.n_frames(),
            reference.n_frames()
        )));
    }
    Ok(BoundaryCounts {
        n_hyp: hyp.boundaries().len(),
        n_ref: reference.boundaries().len(),
        n_matched: match_boundaries(hyp.boundaries(), reference.boundaries(), tol_frames, matching),
    })
}

/// Internal-boundary precision, recall and F of one utterance, greedy matching.
pub fn boundary_prf(hyp: &Segmentation, reference: &Segmentation, tol_frames: usize) -> Result<BoundaryScore> {
    Ok(boundary_counts(hyp, reference, tol_frames, BoundaryMatching::Greedy)?.score())
}

/// Corpus-level boundary score over `(hypothesis, reference)` pairs.
pub fn corpus_boundary_prf(
    pairs: &[(&Segmentation, &Segmentation)],
    tol_frames: usize,
    average: BoundaryAverage,
    matching: BoundaryMatching,
) -> Result<BoundaryScore> {
    let per_utt: Vec<BoundaryCounts> = pairs
        .iter()
        .map(|(h, r)| boundary_counts(h, r, tol_frames, matching))
        .collect::<Result<_>>()?;
    let mut pooled = BoundaryCounts::default();
    for c in &per_utt {
        pooled += *c;
    }
    let mut score = pooled.score();
    if average == BoundaryAverage::Macro && !per_utt.is_empty() {
        let n = per_utt.len() as f64;
        score.precision_pct = per_utt.iter().map(BoundaryCounts::precision_pct).sum::<f64>() / n;
        score.recall_pct = per_utt.iter().map(BoundaryCounts::recall_pct).sum::<f64>() / n;
    }
    Ok(score)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Per-metric mean and sample standard deviation.
pub fn aggregate(rows: &[MetricRow]) -> Result<(MetricSummary, MetricSummary)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no repetitions to aggregate".into()));
    }
    Ok((MetricSummary::from_fn(rows, mean), MetricSummary::from_fn(rows, sample_std)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn seg(b: &[usize], t: usize) -> Segmentation {
        Segmentation::new("u", b.to_vec(), t).unwrap()
    }

    #[test]
    fn confusion_counts() {
        let du = IndexMap::from([("u".to_owned(), vec!["a", "a", "b"])]);
        let gu = IndexMap::from([("u".to_owned(), vec!["x", "x", "y"])]);
        let cm = frame_confusion(&du, &gu).unwrap();
        assert_eq!(cm.du_labels(), ["a", "b"]);
        assert_eq!(cm.gu_labels(), ["x", "y"]);
        assert_eq!([cm.count(0, 0), cm.count(0, 1), cm.count(1, 0), cm.count(1, 1)], [2, 0, 0, 1]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn confusion_errors() {
        let du = IndexMap::from([("u".to_owned(), vec!["a", "a"])]);
        let gu = IndexMap::from([("u".to_owned(), vec!["x"])]);
        assert!(matches!(frame_confusion(&du, &gu), Err(Error::Dimension(_))));
        let gu = IndexMap::from([("v".to_owned(), vec!["x", "x"])]);
        assert!(matches!(frame_confusion(&du, &gu), Err(Error::Key(_))));
        let empty: IndexMap<String, Vec<&str>> = IndexMap::new();
        assert!(matches!(frame_confusion(&empty, &empty), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn identical_labelings_give_diagonal() {
        let labels = vec!["p", "q", "q", "r", "p"];
        let du = IndexMap::from([("u".to_owned(), labels.clone())]);
        let cm = frame_confusion(&du, &du).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cm.count(i, j) > 0, i == j);
            }
        }
        assert_eq!(nmi(&cm, NmiNorm::Arith), 100.0);
    }

    #[test]
    fn nmi_unit_values() {
        let diag = ConfusionMatrix::from_counts(vec![vec![0, 5, 0], vec![3, 0, 0], vec![0, 0, 2]]).unwrap();
        for norm in [NmiNorm::Arith, NmiNorm::Ref, NmiNorm::Joint] {
            assert_abs_diff_eq!(nmi(&diag, norm), 100.0, epsilon = 1e-12);
        }
        let indep = ConfusionMatrix::from_counts(vec![vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(nmi(&indep, NmiNorm::Arith), 0.0);

        // I = 0.548795, H(DU) = 1, H(GU) = 0.954434, H(DU,GU) = 1.405639 bits,
        // computed separately from the definitions
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![0, 4]]).unwrap();
        let e = entropies(&cm);
        assert_abs_diff_eq!(e.mutual_information, 0.548_794_940_695_398_6, epsilon = 1e-12);
        assert_abs_diff_eq!(e.gu, 0.954_434_002_924_965, epsilon = 1e-12);
        assert_abs_diff_eq!(nmi(&cm, NmiNorm::Arith), 56.158_963_656_391_93, epsilon = 1e-9);
        assert_abs_diff_eq!(nmi(&cm, NmiNorm::Ref), 57.499_516_887_868_4, epsilon = 1e-9);
        assert_abs_diff_eq!(nmi(&cm, NmiNorm::Joint), 39.042_379_757_497_83, epsilon = 1e-9);
    }

    #[test]
    fn nmi_degenerate_entropies() {
        let one = ConfusionMatrix::from_counts(vec![vec![7]]).unwrap();
        assert_eq!(nmi(&one, NmiNorm::Arith), 100.0);
        assert_eq!(nmi(&one, NmiNorm::Ref), 100.0);
        // constant gold, varied discovery: nothing to explain
        let const_gu = ConfusionMatrix::from_counts(vec![vec![3], vec![4]]).unwrap();
        assert_eq!(nmi(&const_gu, NmiNorm::Ref), 0.0);
        assert_eq!(nmi(&const_gu, NmiNorm::Arith), 0.0);
    }

    #[test]
    fn boundary_example() {
        let s = boundary_prf(&seg(&[10, 21, 40], 50), &seg(&[10, 20, 30], 50), 2).unwrap();
        assert_eq!(s.n_matched, 2);
        assert_abs_diff_eq!(s.precision_pct, 200.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.recall_pct, 200.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.fscore_pct, 200.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn tolerance_edges() {
        let r = seg(&[10, 20, 30], 50);
        for tol in 0..4 {
            let shifted = seg(&[10 + tol, 20 + tol, 30 + tol], 50);
            assert_eq!(boundary_prf(&shifted, &r, tol).unwrap().fscore_pct, 100.0);
            let beyond = seg(&[11 + tol, 21 + tol, 31 + tol], 50);
            assert_eq!(boundary_prf(&beyond, &r, tol).unwrap().fscore_pct, 0.0);
        }
    }

    #[test]
    fn greedy_tie_goes_to_earlier_reference() {
        // hyp 10 is equidistant from 9 and 11; takes 9, leaving 11 for hyp 12
        assert_eq!(match_boundaries(&[10, 12], &[9, 11], 1, BoundaryMatching::Greedy), 2);
        // nearest beats earliest
        assert_eq!(match_boundaries(&[10, 12], &[8, 10], 2, BoundaryMatching::Greedy), 1);
        assert_eq!(match_boundaries(&[10, 12], &[8, 10], 2, BoundaryMatching::Optimal), 2);
    }

    #[test]
    fn zero_boundary_conventions() {
        let none = seg(&[], 10);
        let some = seg(&[5], 10);
        let s = boundary_prf(&none, &none, 2).unwrap();
        assert_eq!((s.precision_pct, s.recall_pct, s.fscore_pct), (100.0, 100.0, 100.0));
        let s = boundary_prf(&none, &some, 2).unwrap();
        assert_eq!((s.precision_pct, s.recall_pct, s.fscore_pct), (0.0, 0.0, 0.0));
        let s = boundary_prf(&some, &none, 2).unwrap();
        assert_eq!((s.precision_pct, s.recall_pct, s.fscore_pct), (0.0, 0.0, 0.0));
        assert!(boundary_prf(&seg(&[], 9), &none, 1).is_err());
    }

    #[test]
    fn micro_and_macro() {
        let a = (seg(&[5], 20), seg(&[5, 10, 15], 20));
        let b = (seg(&[3], 10), seg(&[3], 10));
        let pairs = [(&a.0, &a.1), (&b.0, &b.1)];
        let micro = corpus_boundary_prf(&pairs, 0, BoundaryAverage::Micro, BoundaryMatching::Greedy).unwrap();
        assert_eq!((micro.n_hyp, micro.n_ref, micro.n_matched), (2, 4, 2));
        assert_eq!(micro.precision_pct, 100.0);
        assert_eq!(micro.recall_pct, 50.0);
        let macro_ = corpus_boundary_prf(&pairs, 0, BoundaryAverage::Macro, BoundaryMatching::Greedy).unwrap();
        assert_abs_diff_eq!(macro_.recall_pct, (100.0 / 3.0 + 100.0) / 2.0, epsilon = 1e-12);
        assert_eq!(macro_.fscore_pct, micro.fscore_pct);
    }

    #[test]
    fn tolerance_conversion() {
        assert_eq!(tolerance_frames(20.0, 10.0), 2);
        assert_eq!(tolerance_frames(30.0, 10.0), 3);
        assert_eq!(tolerance_frames(25.0, 10.0), 2);
        assert_eq!(tolerance_frames(20.0, 12.5), 1);
        assert_eq!(tolerance_frames(0.0, 10.0), 0);
    }

    fn row(nmi: f64) -> MetricRow {
        MetricRow {
            nmi_pct: nmi,
            precision_pct: 50.0,
            recall_pct: 60.0,
            fscore_pct: 54.0,
            n_hyp_boundaries: 10,
            n_ref_boundaries: 12,
            inertia: 3.5,
        }
    }

    #[test]
    fn aggregate_examples() {
        let (m, s) = aggregate(&[row(43.1)]).unwrap();
        assert_eq!((m.nmi_pct, s.nmi_pct), (43.1, 0.0));
        let (m, s) = aggregate(&[row(43.1), row(42.9)]).unwrap();
        assert_abs_diff_eq!(m.nmi_pct, 43.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.nmi_pct, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.nmi_pct, 0.1414, epsilon = 1e-4);
        let (_, s) = aggregate(&vec![row(40.0); 5]).unwrap();
        assert_eq!(s, MetricSummary::default());
        assert!(matches!(aggregate(&[]), Err(Error::EmptyInput(_))));
    }

    fn arb_counts() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(0u64..20, c), r)
                .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
        })
    }

    fn arb_boundaries() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::btree_set(1usize..100, 0..15).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn nmi_in_range(c in arb_counts()) {
            let cm = ConfusionMatrix::from_counts(c).unwrap();
            for norm in [NmiNorm::Arith, NmiNorm::Ref, NmiNorm::Joint] {
                let v = nmi(&cm, norm);
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn nmi_symmetric(c in arb_counts()) {
            let cm = ConfusionMatrix::from_counts(c).unwrap();
            let t = cm.transposed();
            for norm in [NmiNorm::Arith, NmiNorm::Joint] {
                prop_assert!((nmi(&cm, norm) - nmi(&t, norm)).abs() < 1e-9);
            }
        }

        #[test]
        fn nmi_permutation_invariant(c in arb_counts(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = crate::rng::rng_from_seed(seed);
            let mut rows = c.clone();
            rows.shuffle(&mut rng);
            let mut perm: Vec<usize> = (0..c[0].len()).collect();
            perm.shuffle(&mut rng);
            let permuted: Vec<Vec<u64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            let a = ConfusionMatrix::from_counts(c).unwrap();
            let b = ConfusionMatrix::from_counts(permuted).unwrap();
            for norm in [NmiNorm::Arith, NmiNorm::Ref, NmiNorm::Joint] {
                prop_assert!((nmi(&a, norm) - nmi(&b, norm)).abs() < 1e-9);
            }
        }

        #[test]
        fn merging_rows_never_increases_information(c in arb_counts()) {
            prop_assume!(c.len() >= 2);
            let mut merged = c.clone();
            let last = merged.pop().unwrap();
            for (a, b) in merged[0].iter_mut().zip(last) {
                *a += b;
            }
            let before = entropies(&ConfusionMatrix::from_counts(c).unwrap()).mutual_information;
            let after = entropies(&ConfusionMatrix::from_counts(merged).unwrap()).mutual_information;
            prop_assert!(after <= before + 1e-12);
        }

        #[test]
        fn self_match_is_perfect(b in arb_boundaries(), tol in 0usize..5) {
            let s = seg(&b, 100);
            let r = boundary_prf(&s, &s, tol).unwrap();
            prop_assert_eq!((r.precision_pct, r.recall_pct, r.fscore_pct), (100.0, 100.0, 100.0));
        }

        #[test]
        fn monotone_in_tolerance(h in arb_boundaries(), r in arb_boundaries(), tol in 0usize..6) {
            let (h, r) = (seg(&h, 100), seg(&r, 100));
            let counts = |t| boundary_counts(&h, &r, t, BoundaryMatching::Optimal).unwrap();
            prop_assert!(counts(tol + 1).score().fscore_pct >= counts(tol).score().fscore_pct);
            let greedy = boundary_prf(&h, &r, tol).unwrap();
            prop_assert!(greedy.n_matched <= counts(tol).n_matched);
            prop_assert!(greedy.n_matched <= greedy.n_hyp.min(greedy.n_ref));
        }

        #[test]
        fn optimal_matching_matches_exhaustive(h in prop::collection::btree_set(1usize..30, 0..6), r in prop::collection::btree_set(1usize..30, 0..6), tol in 0usize..4) {
            let h: Vec<usize> = h.into_iter().collect();
            let r: Vec<usize> = r.into_iter().collect();
            fn best(h: &[usize], r: &[usize], used: &mut Vec<bool>, tol: usize) -> usize {
                let Some((&first, rest)) = h.split_first() else { return 0 };
                let mut top = best(rest, r, used, tol);
                for j in 0..r.len() {
                    if !used[j] && first.abs_diff(r[j]) <= tol {
                        used[j] = true;
                        top = top.max(1 + best(rest, r, used, tol));
                        used[j] = false;
                    }
                }
                top
            }
            let want = best(&h, &r, &mut vec![false; r.len()], tol);
            prop_assert_eq!(match_boundaries(&h, &r, tol, BoundaryMatching::Optimal), want);
        }
    }
}
