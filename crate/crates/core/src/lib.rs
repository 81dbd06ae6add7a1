//! Segment-level acoustic unit discovery.
//!
//! Given frame-level features and a frame label stream (or gold phone
//! alignments), this crate derives segment boundaries from label
//! discontinuities, embeds each variable-length segment as a fixed-size
//! vector (plain average, or concatenated means of `s` sub-segments), clusters
//! the segments with k-means, and scores the discovered units against gold
//! phones with frame-level NMI and a tolerance-based boundary F-score.
//!
//! A synthetic corpus generator with known phone structure stands in for real
//! data in tests and experiments.
//!
//! Modules:
//! - [`featio`]: AUDF feature archives, alignment files, JSON reports
//! - [`synth`]: synthetic corpora and label-stream corruption
//! - [`segment`]: boundaries, segment slicing, unit merging
//! - [`embed`]: fixed-dimension segment embeddings
//! - [`cluster`]: seeded Lloyd k-means with repetitions
//! - [`eval`]: NMI, boundary precision/recall/F, aggregation
//! - [`pipeline`]: end-to-end experiments and k sweeps

pub mod cluster;
pub mod embed;
pub mod error;
pub mod eval;
pub mod featio;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
