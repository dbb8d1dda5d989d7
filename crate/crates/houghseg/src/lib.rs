//! Registration-free volumetric segmentation through Hough voting on CNN features.
//!
//! The pipeline trains compact patch-classification networks from scratch,
//! indexes the deep features of foreground voxels into per-region vote
//! databases, and segments unseen volumes by weighted vote accumulation,
//! centroid localisation and patch back-projection:
//!
//! 1. [`phantom`] – synthetic cohort generation (volumes + label maps).
//! 2. [`patch`] – 2D / 2.5D / 3D patch extraction and balanced sampling.
//! 3. [`net`] – trainable feed-forward engine (conv / max-pool / dense with
//!    PReLU), gradient-checked backpropagation, SGD with momentum.
//! 4. [`dense`] – one-pass full-volume evaluation equal to sliding-window
//!    inference, plus the voxel-wise semantic baseline.
//! 5. [`houghdb`] – (feature, vote, segmentation-patch) databases with exact
//!    K-NN retrieval.
//! 6. [`hough`] – vote casting, vote-map smoothing and argmax localisation,
//!    back-projection and thresholding, single- and multi-region.
//! 7. [`eval`] – Dice, mean surface distance, failure accounting, histograms.

pub mod dense;
pub mod eval;
pub mod hough;
pub mod houghdb;
pub mod net;
pub mod patch;
pub mod phantom;
pub mod volume;

mod error;

pub use error::{Error, Result};
