//! Lloyd's k-means with seeded k-means++ or random initialization.
//!
//! Distances are squared Euclidean; a sample equidistant from several
//! centroids goes to the lowest centroid index. Iteration stops at an
//! assignment fixed point (or, with `tol > 0`, when the total squared
//! centroid shift drops to `tol`) or after `max_iter` updates. Clusters
//! that lose all samples are re-seeded with the sample farthest from its
//! assigned centroid.
//!
//! The assignment step may run on the rayon pool; all reductions happen
//! sequentially in sample order, so a fit is bit-identical for any number of
//! worker threads.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

/// Work (samples x centroids x dims) below which assignment stays on the
/// calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    #[serde(rename = "kmeanspp")]
    KMeansPlusPlus,
    #[serde(rename = "random")]
    Random,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::KMeansPlusPlus => "kmeanspp",
            Init::Random => "random",
        })
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" => Ok(Init::KMeansPlusPlus),
            "random" => Ok(Init::Random),
            other => Err(Error::Config(format!("unknown init {other:?} (kmeanspp|random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub init: Init,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 50,
            init: Init::KMeansPlusPlus,
            max_iter: 300,
            tol: 0.0,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be a non-negative number, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of samples to their assigned centroid.
    pub inertia: f64,
    /// Number of centroid updates performed.
    pub n_iter: usize,
    /// Inertia after the initial assignment and after each update.
    pub inertia_history: Vec<f64>,
    pub seed: u64,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

/// Index of the nearest centroid (lowest index on ties) and its distance.
#[inline]
fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(data: &Matrix, centroids: &Matrix) -> Vec<(usize, f64)> {
    let work = data.rows() * centroids.rows() * data.cols().max(1);
    if work < PAR_THRESHOLD {
        data.iter_rows().map(|x| nearest(x, centroids)).collect()
    } else {
        (0..data.rows())
            .into_par_iter()
            .map(|i| nearest(data.row(i), centroids))
            .collect()
    }
}

fn total(dists: &[(usize, f64)]) -> f64 {
    dists.iter().map(|&(_, d)| d).sum()
}

fn init_centroids(data: &Matrix, k: usize, init: Init, rng: &mut impl Rng) -> Matrix {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    match init {
        Init::Random => {
            let picks = rand::seq::index::sample(rng, n, k);
            for (j, i) in picks.iter().enumerate() {
                centroids.row_mut(j).copy_from_slice(data.row(i));
            }
        }
        Init::KMeansPlusPlus => {
            let first = rng.random_range(0..n);
            centroids.row_mut(0).copy_from_slice(data.row(first));
            let mut d2: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(first))).collect();
            for j in 1..k {
                let weight: f64 = d2.iter().sum();
                let pick = if weight > 0.0 {
                    let target = rng.random::<f64>() * weight;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, &w) in d2.iter().enumerate() {
                        acc += w;
                        if w > 0.0 && acc > target {
                            pick = Some(i);
                            break;
                        }
                    }
                    // rounding can leave target just above the final sum
                    pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
                } else {
                    rng.random_range(0..n)
                };
                centroids.row_mut(j).copy_from_slice(data.row(pick));
                for (i, x) in data.iter_rows().enumerate() {
                    let d = sq_dist(x, data.row(pick));
                    if d < d2[i] {
                        d2[i] = d;
                    }
                }
            }
        }
    }
    centroids
}

/// Recomputes centroids as assignment means; empty clusters take the
/// farthest not-yet-used samples. Returns the total squared centroid shift.
fn update_centroids(data: &Matrix, assigned: &[(usize, f64)], centroids: &mut Matrix) -> f64 {
    let k = centroids.rows();
    let dim = data.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (x, &(j, _)) in data.iter_rows().zip(assigned) {
        counts[j] += 1;
        for (acc, v) in sums.row_mut(j).iter_mut().zip(x) {
            *acc += v;
        }
    }
    let mut far: Option<Vec<f64>> = None;
    let mut shift = 0.0;
    for (j, &count) in counts.iter().enumerate() {
        let new: Vec<f64> = if count > 0 {
            let n = count as f64;
            sums.row(j).iter().map(|s| s / n).collect()
        } else {
            let dists = far.get_or_insert_with(|| assigned.iter().map(|&(_, d)| d).collect());
            let mut pick = 0;
            for (i, &d) in dists.iter().enumerate() {
                if d > dists[pick] {
                    pick = i;
                }
            }
            dists[pick] = f64::NEG_INFINITY;
            data.row(pick).to_vec()
        };
        shift += sq_dist(&new, centroids.row(j));
        centroids.row_mut(j).copy_from_slice(&new);
    }
    shift
}

/// Fits k-means to the rows of `data`. Deterministic in `(data, cfg)`.
pub fn kmeans_fit(data: &Matrix, cfg: &KMeansConfig) -> Result<KMeansModel> {
    cfg.validate()?;
    let n = data.rows();
    if n < cfg.k {
        return Err(Error::InsufficientSamples { k: cfg.k, n });
    }
    if !data.is_finite() {
        return Err(Error::Data("k-means input contains non-finite values".into()));
    }

    let mut rng = rng_from_seed(cfg.seed);
    let centroids = init_centroids(data, cfg.k, cfg.init, &mut rng);
    Ok(lloyd(data, centroids, cfg))
}

/// Lloyd iterations from the given initial centroids.
fn lloyd(data: &Matrix, mut centroids: Matrix, cfg: &KMeansConfig) -> KMeansModel {
    let mut assigned = assign_all(data, &centroids);
    let mut history = vec![total(&assigned)];
    let mut n_iter = 0;

    while n_iter < cfg.max_iter {
        let shift = update_centroids(data, &assigned, &mut centroids);
        n_iter += 1;
        let next = assign_all(data, &centroids);
        history.push(total(&next));
        let changed = next.iter().zip(&assigned).any(|(a, b)| a.0 != b.0);
        assigned = next;
        if !changed || (cfg.tol > 0.0 && shift <= cfg.tol) {
            break;
        }
    }

    KMeansModel {
        centroids,
        inertia: *history.last().unwrap(),
        assignments: assigned.into_iter().map(|(j, _)| j).collect(),
        n_iter,
        inertia_history: history,
        seed: cfg.seed,
    }
}

/// Nearest-centroid assignment of new samples, same tie rule as the fit.
pub fn kmeans_assign(model: &KMeansModel, data: &Matrix) -> Result<Vec<usize>> {
    if data.cols() != model.centroids.cols() {
        return Err(Error::Dimension(format!(
            "data has {} columns, model centroids have {}",
            data.cols(),
            model.centroids.cols()
        )));
    }
    Ok(assign_all(data, &model.centroids).into_iter().map(|(j, _)| j).collect())
}

/// Seed of repetition `rep`: [`derive_seed`]`(seed, rep)`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, rep as u64)
}

/// `reps` independent fits, repetition `r` seeded with
/// [`repetition_seed`]`(cfg.seed, r)`. Models come back in repetition order.
pub fn run_repetitions(data: &Matrix, cfg: &KMeansConfig, reps: usize) -> Result<Vec<KMeansModel>> {
    if reps == 0 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let cfg = KMeansConfig {
                seed: repetition_seed(cfg.seed, r),
                ..*cfg
            };
            kmeans_fit(data, &cfg)
        })
        .collect()
}
