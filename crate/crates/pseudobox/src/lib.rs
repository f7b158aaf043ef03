//! Point-set tracking head with pseudo-box supervision.
//!
//! The library trains a small single-object tracker whose localization head
//! predicts a set of points per grid bin instead of box coordinates. Point
//! sets are converted to axis-aligned pseudo boxes (min-max or moment
//! statistics), refined in a second stage that samples features at the
//! first-stage points, and supervised through interchangeable label
//! assignment strategies. A correlation loss ties classification scores to
//! localization quality so that the arg-max score bin is also the
//! best-localized bin.
//!
//! Everything runs on a self-contained reverse-mode tape ([`tape`]) over
//! dense `f64` tensors; no external autodiff or tensor framework is used.
//! Synthetic scenes ([`scenes`]) make every experiment deterministic and
//! desk-scale: a run is fully determined by its config and seed.
//!
//! # Layout
//!
//! | module | contents |
//! |---|---|
//! | [`tape`] | reverse-mode autodiff: [`Tensor`], [`Tape`], [`Value`], `grad_check` |
//! | [`geometry`] | boxes, IoU/GIoU, point-set converters (plain and on-tape) |
//! | [`assigner`] | one-to-one and one-to-many label assignment |
//! | [`loss`] | focal, stage GIoU, correlation, and total losses |
//! | [`model`] | encoder stub, two-stage point head, checkpoints |
//! | [`scenes`] | deterministic synthetic scenes and sequences |
//! | [`engine`] | AdamW training loop, experiments, ablations |
//! | [`metrics`] | tracking metrics (AO, success rate, AUC, precision) |
//! | [`config`] | flat JSON run configuration |
//! | [`cli`] | `train` / `eval` / `ablate` / `assign` / `gradcheck` subcommands |
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example autodiff_basics      # tape ops, backward, grad_check
//! cargo run --example box_geometry         # IoU/GIoU and point-set converters
//! cargo run --example label_assignment     # assignment strategies on a scene
//! cargo run --example correlation_loss     # score/IoU correlation and truncation
//! cargo run --example scene_zoo            # render scenes and a sequence to PGM
//! cargo run --example overfit_single_scene # 50 optimizer steps on one scene
//! cargo run --example train_and_eval       # tiny end-to-end experiment
//! cargo run --example leading_ablation     # leading vs plain assignment table
//! ```
//!
//! The `pseudobox` binary exposes the same machinery as subcommands; see the
//! README for the config key reference.

pub mod assigner;
pub mod cli;
pub mod config;
pub mod engine;
mod error;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scenes;
pub mod tape;

pub use error::Error;
pub use geometry::{BBox, PointSet};
pub use tape::{Tape, Tensor, Value};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
