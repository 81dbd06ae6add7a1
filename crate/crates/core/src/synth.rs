//! Synthetic corpora with known phone structure, and corruption of gold
//! alignments into simulated out-of-domain label streams.
//!
//! Phones are Gaussian blobs: each phone has a centroid with coordinates
//! uniform in `[-centroid_scale, centroid_scale]`, and every frame of that
//! phone is the centroid plus isotropic Gaussian noise. Randomness comes from
//! the streams described in [`crate::rng`]: the centroids use `seed` directly,
//! utterance `i` uses `derive_seed(seed, i)`.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featio::{Alignment, AlignmentEntry, FeatureArchive, FrameMatrix};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_phones: usize,
    pub dim: usize,
    pub n_utts: usize,
    /// Inclusive range of phones per utterance.
    pub phones_per_utt: (usize, usize),
    /// Inclusive range of phone durations in frames.
    pub dur_frames: (usize, usize),
    pub noise_sigma: f64,
    pub centroid_scale: f64,
    pub frame_shift_ms: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_phones: 50,
            dim: 40,
            n_utts: 200,
            phones_per_utt: (20, 40),
            dur_frames: (3, 12),
            noise_sigma: 0.5,
            centroid_scale: 10.0,
            frame_shift_ms: 10.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_phones < 2 {
            return bad(format!("n_phones must be >= 2, got {}", self.n_phones));
        }
        if self.dim == 0 || self.n_utts == 0 {
            return bad("dim and n_utts must be positive".into());
        }
        for (name, (lo, hi)) in [("phones_per_utt", self.phones_per_utt), ("dur_frames", self.dur_frames)] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} must be a range 1 <= lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.centroid_scale > 0.0 && self.centroid_scale.is_finite()) {
            return bad(format!("centroid_scale must be > 0, got {}", self.centroid_scale));
        }
        if !(self.frame_shift_ms > 0.0 && self.frame_shift_ms.is_finite()) {
            return bad(format!("frame_shift_ms must be > 0, got {}", self.frame_shift_ms));
        }
        Ok(())
    }

    /// Mean phone duration in frames.
    pub fn mean_duration(&self) -> f64 {
        (self.dur_frames.0 + self.dur_frames.1) as f64 / 2.0
    }
}

/// Label used for phone `index`.
pub fn phone_label(index: usize) -> String {
    format!("p{index}")
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub archive: FeatureArchive,
    pub gold: Vec<Alignment>,
    /// Phone centroids, row `i` for label `p{i}`.
    pub centroids: Matrix,
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let scale = spec.centroid_scale;
    let centroids = Matrix::new(
        spec.n_phones,
        spec.dim,
        (0..spec.n_phones * spec.dim)
            .map(|_| rng.random_range(-scale..=scale))
            .collect(),
    )?;

    let utts: Vec<(FrameMatrix, Alignment)> = (0..spec.n_utts)
        .into_par_iter()
        .map(|i| generate_utterance(spec, &centroids, i))
        .collect::<Result<_>>()?;

    let mut archive = FeatureArchive::new(spec.frame_shift_ms)?;
    let mut gold = Vec::with_capacity(utts.len());
    for (fm, al) in utts {
        archive.push(fm)?;
        gold.push(al);
    }
    Ok(SynthCorpus {
        archive,
        gold,
        centroids,
    })
}

fn generate_utterance(spec: &SynthSpec, centroids: &Matrix, index: usize) -> Result<(FrameMatrix, Alignment)> {
    let mut rng = rng_from_seed(derive_seed(spec.seed, index as u64));
    let utt_id = format!("utt{index:05}");
    let n = rng.random_range(spec.phones_per_utt.0..=spec.phones_per_utt.1);
    let mut entries = Vec::with_capacity(n);
    let mut t = 0;
    for _ in 0..n {
        let phone = rng.random_range(0..spec.n_phones);
        let dur = rng.random_range(spec.dur_frames.0..=spec.dur_frames.1);
        entries.push((phone, AlignmentEntry::new(t, t + dur, phone_label(phone))));
        t += dur;
    }
    let mut values = Vec::with_capacity(t * spec.dim);
    for (phone, e) in &entries {
        let c = centroids.row(*phone);
        for _ in 0..e.len() {
            values.extend(c.iter().map(|&mu| {
                let z: f64 = rng.sample(StandardNormal);
                (mu + spec.noise_sigma * z) as f32
            }));
        }
    }
    let fm = FrameMatrix::new(utt_id.clone(), t, spec.dim, values)?;
    let al = Alignment::new(utt_id, entries.into_iter().map(|(_, e)| e).collect())?;
    Ok((fm, al))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Maximum boundary displacement in frames.
    pub jitter_frames: usize,
    /// Probability of replacing a segment label.
    pub substitution_rate: f64,
    pub min_dur_frames: usize,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            jitter_frames: 3,
            substitution_rate: 0.1,
            min_dur_frames: 1,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn identity() -> Self {
        Self {
            jitter_frames: 0,
            substitution_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return Err(Error::Config(format!(
                "substitution_rate must be in [0, 1], got {}",
                self.substitution_rate
            )));
        }
        if self.min_dur_frames == 0 {
            return Err(Error::Config("min_dur_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// Jitters boundaries and substitutes labels of one alignment, drawing
/// substitutes from the alignment's own label set.
///
/// Each internal boundary `b` moves to `b + u`, `u` uniform in
/// `[-j, j]`; a move that would leave a segment shorter than
/// `min_dur_frames` is dropped and `b` stays put. Boundaries are visited left
/// to right and checked against the already-moved left neighbour and the
/// gold right neighbour, so their order never changes. Then each segment
/// label is replaced with probability `substitution_rate` by a uniformly
/// chosen different label.
pub fn corrupt_alignment(gold: &Alignment, spec: &CorruptionSpec) -> Result<Alignment> {
    spec.validate()?;
    let inventory: BTreeSet<&str> = gold.entries().iter().map(|e| e.label.as_str()).collect();
    let inventory: Vec<&str> = inventory.into_iter().collect();
    corrupt_with(gold, &inventory, spec, &mut rng_from_seed(spec.seed))
}

/// Corrupts every alignment of a corpus. Substitutes come from the union of
/// all gold labels; utterance `i` uses the stream `derive_seed(seed, i)`.
pub fn corrupt_corpus(gold: &[Alignment], spec: &CorruptionSpec) -> Result<Vec<Alignment>> {
    spec.validate()?;
    let inventory: BTreeSet<&str> = gold
        .iter()
        .flat_map(|a| a.entries().iter().map(|e| e.label.as_str()))
        .collect();
    let inventory: Vec<&str> = inventory.into_iter().collect();
    gold.par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, i as u64));
            corrupt_with(a, &inventory, spec, &mut rng)
        })
        .collect()
}

fn corrupt_with(
    gold: &Alignment,
    inventory: &[&str],
    spec: &CorruptionSpec,
    rng: &mut impl Rng,
) -> Result<Alignment> {
    let entries = gold.entries();
    let n_frames = gold.n_frames() as i64;
    let j = spec.jitter_frames as i64;
    let min_dur = spec.min_dur_frames as i64;

    let gold_b: Vec<i64> = entries[1..].iter().map(|e| e.start as i64).collect();
    let mut moved: Vec<i64> = Vec::with_capacity(gold_b.len());
    for (i, &b) in gold_b.iter().enumerate() {
        let u = rng.random_range(-j..=j);
        let left = moved.last().copied().unwrap_or(0);
        let right = gold_b.get(i + 1).copied().unwrap_or(n_frames);
        let cand = b + u;
        let ok = cand - left >= min_dur && right - cand >= min_dur;
        moved.push(if ok { cand } else { b });
    }

    let mut out = Vec::with_capacity(entries.len());
    let starts = std::iter::once(0).chain(moved.iter().copied());
    let ends = moved.iter().copied().chain(std::iter::once(n_frames));
    for ((start, end), e) in starts.zip(ends).zip(entries) {
        let mut label = e.label.as_str();
        if rng.random::<f64>() < spec.substitution_rate {
            let others: Vec<&str> = inventory.iter().copied().filter(|l| *l != label).collect();
            if !others.is_empty() {
                label = others[rng.random_range(0..others.len())];
            }
        }
        out.push(AlignmentEntry::new(start as usize, end as usize, label));
    }
    Alignment::new(gold.utt_id(), out).map_err(|e| Error::Invariant(format!("corruption broke alignment: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featio::{alignment_to_string, encode_feature_archive};
    use crate::segment::broadcast_to_frames;

    fn small() -> SynthSpec {
        SynthSpec {
            n_phones: 5,
            dim: 3,
            n_utts: 8,
            phones_per_utt: (3, 6),
            dur_frames: (2, 5),
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_frames_equal_centroids() {
        let spec = SynthSpec { noise_sigma: 0.0, ..small() };
        let c = generate_corpus(&spec).unwrap();
        for (fm, al) in c.archive.iter().zip(&c.gold) {
            for e in al.entries() {
                let p: usize = e.label[1..].parse().unwrap();
                let want: Vec<f32> = c.centroids.row(p).iter().map(|&v| v as f32).collect();
                for t in e.start..e.end {
                    assert_eq!(fm.frame(t), want.as_slice());
                }
            }
        }
    }

    #[test]
    fn alignments_tile_utterances() {
        let spec = small();
        let c = generate_corpus(&spec).unwrap();
        assert_eq!(c.archive.len(), spec.n_utts);
        for (fm, al) in c.archive.iter().zip(&c.gold) {
            assert_eq!(fm.utt_id(), al.utt_id());
            al.check_coverage(fm.n_frames()).unwrap();
            for e in al.entries() {
                let p: usize = e.label[1..].parse().unwrap();
                assert!(p < spec.n_phones);
                assert!((2..=5).contains(&e.len()));
            }
            assert!((3..=6).contains(&al.len()));
        }
        let coords = c.centroids.as_slice();
        assert!(coords.iter().all(|v| v.abs() <= spec.centroid_scale));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(encode_feature_archive(&a.archive).unwrap(), encode_feature_archive(&b.archive).unwrap());
        assert_eq!(alignment_to_string(&a.gold).unwrap(), alignment_to_string(&b.gold).unwrap());
        let c = generate_corpus(&SynthSpec { seed: 43, ..small() }).unwrap();
        assert_ne!(encode_feature_archive(&a.archive).unwrap(), encode_feature_archive(&c.archive).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec { n_phones: 1, ..small() }.validate().is_err());
        assert!(SynthSpec { dur_frames: (4, 3), ..small() }.validate().is_err());
        assert!(SynthSpec { phones_per_utt: (0, 3), ..small() }.validate().is_err());
        assert!(SynthSpec { noise_sigma: -1.0, ..small() }.validate().is_err());
        assert!(CorruptionSpec { substitution_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(CorruptionSpec { min_dur_frames: 0, ..Default::default() }.validate().is_err());
    }

    fn gold_ab() -> Alignment {
        Alignment::new(
            "u",
            vec![
                AlignmentEntry::new(0, 10, "a"),
                AlignmentEntry::new(10, 20, "b"),
                AlignmentEntry::new(20, 30, "a"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_corruption() {
        let g = gold_ab();
        assert_eq!(corrupt_alignment(&g, &CorruptionSpec::identity()).unwrap(), g);
    }

    #[test]
    fn forced_substitution_flips_binary_labels() {
        let g = gold_ab();
        let spec = CorruptionSpec { jitter_frames: 0, substitution_rate: 1.0, seed: 3, ..Default::default() };
        let c = corrupt_alignment(&g, &spec).unwrap();
        let labels: Vec<&str> = c.entries().iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["b", "a", "b"]);
        assert_eq!(crate::segment::Segmentation::from_entries(&c).boundaries(), &[10, 20]);
    }

    #[test]
    fn single_entry_unchanged() {
        let g = Alignment::new("u", vec![AlignmentEntry::new(0, 9, "a")]).unwrap();
        let spec = CorruptionSpec { jitter_frames: 4, substitution_rate: 0.5, ..Default::default() };
        for seed in 0..20 {
            assert_eq!(corrupt_alignment(&g, &CorruptionSpec { seed, ..spec.clone() }).unwrap(), g);
        }
    }

    #[test]
    fn jitter_bounded_over_seed_sweep() {
        let g = gold_ab();
        let mut seen = BTreeSet::new();
        for seed in 0..1000 {
            let spec = CorruptionSpec { jitter_frames: 2, substitution_rate: 0.0, seed, ..Default::default() };
            let c = corrupt_alignment(&g, &spec).unwrap();
            assert_eq!(c.len(), 3);
            assert_eq!(c.n_frames(), 30);
            let b: Vec<usize> = c.entries()[1..].iter().map(|e| e.start).collect();
            assert!(b[0].abs_diff(10) <= 2 && b[1].abs_diff(20) <= 2, "{b:?}");
            seen.insert(b[0]);
        }
        // every displacement in [-2, 2] occurs
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), [8, 9, 10, 11, 12]);
    }

    #[test]
    fn min_duration_respected() {
        let g = Alignment::new(
            "u",
            (0..10).map(|i| AlignmentEntry::new(3 * i, 3 * i + 3, format!("l{}", i % 3))).collect(),
        )
        .unwrap();
        for seed in 0..300 {
            let spec = CorruptionSpec { jitter_frames: 5, substitution_rate: 0.3, min_dur_frames: 2, seed };
            let c = corrupt_alignment(&g, &spec).unwrap();
            assert_eq!(c.len(), g.len());
            assert_eq!(c.n_frames(), g.n_frames());
            assert!(c.entries().iter().all(|e| e.len() >= 2));
            for (x, y) in c.entries().iter().zip(g.entries()) {
                assert!(x.start.abs_diff(y.start) <= 5);
            }
        }
    }

    #[test]
    fn mismatch_grows_with_jitter() {
        let corpus = generate_corpus(&SynthSpec { n_utts: 20, ..small() }).unwrap();
        let mismatch = |j: usize| -> f64 {
            let mut total = 0.0;
            for seed in 0..30 {
                let spec = CorruptionSpec { jitter_frames: j, substitution_rate: 0.0, seed, ..Default::default() };
                let noisy = corrupt_corpus(&corpus.gold, &spec).unwrap();
                let (mut diff, mut n) = (0usize, 0usize);
                for (a, b) in corpus.gold.iter().zip(&noisy) {
                    let fa = broadcast_to_frames(a);
                    let fb = broadcast_to_frames(b);
                    diff += fa.iter().zip(&fb).filter(|(x, y)| x != y).count();
                    n += fa.len();
                }
                total += diff as f64 / n as f64;
            }
            total / 30.0
        };
        let m: Vec<f64> = [0, 1, 2, 4].into_iter().map(mismatch).collect();
        assert_eq!(m[0], 0.0);
        assert!(m.windows(2).all(|w| w[1] > w[0]), "{m:?}");
    }

    #[test]
    fn corpus_corruption_is_deterministic_and_valid() {
        let corpus = generate_corpus(&small()).unwrap();
        let spec = CorruptionSpec { seed: 5, ..Default::default() };
        let a = corrupt_corpus(&corpus.gold, &spec).unwrap();
        let b = corrupt_corpus(&corpus.gold, &spec).unwrap();
        assert_eq!(a, b);
        for (x, g) in a.iter().zip(&corpus.gold) {
            assert_eq!(x.len(), g.len());
            assert_eq!(x.n_frames(), g.n_frames());
        }
    }
}
