//! Tracking evaluation: run the head frame by frame over a sequence, then
//! score the predicted boxes with average overlap, success rates, the
//! 21-point success-curve area, and center precision.
//!
//! Frame 0 carries the template and its ground truth box, so it is never
//! scored; every metric averages over frames `1..N`. Evaluation sequences
//! come from a seed namespace disjoint from training (`seed ^ EVAL_SEED_SALT`).

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};
use crate::model::{forward, params_to_tape, ModelConfig, Parameters};
use crate::scenes::{generate_sequence, SceneConfig, Sequence};
use crate::tape::Tape;
use crate::{Error, Result};

/// XORed into the run seed so evaluation sequences never collide with
/// training scenes.
pub const EVAL_SEED_SALT: u64 = 0x6576_616c_5f73_6571;

/// Center-error threshold in pixels on the 64-px canvas (a 20-px radius at
/// typical benchmark resolutions scales down to 5 px here).
pub const PRECISION_TAU_PX: f64 = 5.0;

/// Threshold for precision normalized by the ground truth box size.
pub const NORM_PRECISION_THRESHOLD: f64 = 0.2;

/// The 21 evenly spaced IoU thresholds 0.00, 0.05, …, 1.00.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

// ── Tracking ────────────────────────────────────────────────────────────────

/// Predicted boxes aligned with a sequence's frames; entry 0 is the given
/// template box, entries 1.. are the tracker's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub boxes: Vec<BBox>,
}

/// Tracks one sequence: the frame-0 crop is the template, every later frame
/// is searched in full, and the refine-stage box at the highest-scoring bin
/// is the prediction.
pub fn track_sequence(params: &Parameters, seq: &Sequence, cfg: &ModelConfig) -> TrackResult {
    let mut boxes = Vec::with_capacity(seq.frames.len());
    boxes.push(seq.frames[0].gt);
    for frame in &seq.frames[1..] {
        let tape = Tape::new();
        let p = params_to_tape(&tape, params);
        let out = forward(&tape, &p, &seq.template, &frame.search, cfg);
        boxes.push(out.predicted_box().1);
    }
    TrackResult { boxes }
}

/// Per-frame IoU against ground truth for the scored frames 1..N.
pub fn frame_ious(result: &TrackResult, seq: &Sequence) -> Vec<f64> {
    assert_eq!(result.boxes.len(), seq.frames.len(), "misaligned track result");
    (1..seq.frames.len())
        .map(|i| iou(&result.boxes[i], &seq.frames[i].gt))
        .collect()
}

// ── Scalar metrics over IoU lists ───────────────────────────────────────────

fn require_scored(ious: &[f64]) -> Result<()> {
    if ious.is_empty() {
        return Err(Error::Config("no scored frames: sequences need at least two frames".into()));
    }
    Ok(())
}

/// Mean IoU over the scored frames.
pub fn average_overlap(ious: &[f64]) -> Result<f64> {
    require_scored(ious)?;
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Fraction of scored frames with IoU at or above the threshold.
pub fn success_rate(ious: &[f64], threshold: f64) -> Result<f64> {
    require_scored(ious)?;
    let hits = ious.iter().filter(|&&v| v >= threshold).count();
    Ok(hits as f64 / ious.len() as f64)
}

/// Success rate at each of the 21 standard thresholds.
pub fn success_curve(ious: &[f64]) -> Result<Vec<f64>> {
    require_scored(ious)?;
    success_thresholds()
        .iter()
        .map(|&t| success_rate(ious, t))
        .collect()
}

/// Area under the success curve: the mean success rate over the 21
/// thresholds.
pub fn success_auc(ious: &[f64]) -> Result<f64> {
    let curve = success_curve(ious)?;
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// Fraction of scored frames whose predicted center lies within `tau` of
/// the ground truth center. Pixel mode measures Euclidean distance;
/// normalized mode divides the per-axis error by the ground truth width
/// and height first. Distances exactly at `tau` count as hits.
pub fn precision(result: &TrackResult, seq: &Sequence, tau: f64, normalized: bool) -> Result<f64> {
    assert_eq!(result.boxes.len(), seq.frames.len(), "misaligned track result");
    let errors: Vec<f64> = (1..seq.frames.len())
        .map(|i| {
            let (px, py) = result.boxes[i].center();
            let gt = &seq.frames[i].gt;
            let (gx, gy) = gt.center();
            if normalized {
                ((px - gx) / gt.width()).hypot((py - gy) / gt.height())
            } else {
                (px - gx).hypot(py - gy)
            }
        })
        .collect();
    require_scored(&errors)?;
    let hits = errors.iter().filter(|&&d| d <= tau).count();
    Ok(hits as f64 / errors.len() as f64)
}

// ── Aggregate evaluation ────────────────────────────────────────────────────

/// One sequence's contribution to an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStats {
    pub seq_id: u64,
    pub frames: usize,
    pub ao: f64,
    pub success_auc: f64,
}

/// Aggregate tracking quality over a set of held-out sequences. All ratios
/// are frame-weighted means in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
    pub success_auc: f64,
    pub precision_20px_equivalent: f64,
    pub norm_precision: f64,
    pub success_curve: Vec<f64>,
    pub sequences: Vec<SequenceStats>,
}

struct PooledErrors {
    ious: Vec<f64>,
    px_hits: usize,
    norm_hits: usize,
}

fn pool_sequence(result: &TrackResult, seq: &Sequence, pool: &mut PooledErrors) {
    pool.ious.extend(frame_ious(result, seq));
    for i in 1..seq.frames.len() {
        let (px, py) = result.boxes[i].center();
        let gt = &seq.frames[i].gt;
        let (gx, gy) = gt.center();
        if (px - gx).hypot(py - gy) <= PRECISION_TAU_PX {
            pool.px_hits += 1;
        }
        let nd = ((px - gx) / gt.width()).hypot((py - gy) / gt.height());
        if nd <= NORM_PRECISION_THRESHOLD {
            pool.norm_hits += 1;
        }
    }
}

fn report_from_pool(pool: &PooledErrors, sequences: Vec<SequenceStats>) -> Result<EvalReport> {
    let n = pool.ious.len() as f64;
    Ok(EvalReport {
        ao: average_overlap(&pool.ious)?,
        sr_050: success_rate(&pool.ious, 0.5)?,
        sr_075: success_rate(&pool.ious, 0.75)?,
        success_auc: success_auc(&pool.ious)?,
        precision_20px_equivalent: pool.px_hits as f64 / n,
        norm_precision: pool.norm_hits as f64 / n,
        success_curve: success_curve(&pool.ious)?,
        sequences,
    })
}

/// Generates `n_sequences` held-out sequences, tracks each, and pools every
/// scored frame into one report.
pub fn evaluate(
    params: &Parameters,
    model_cfg: &ModelConfig,
    scene_cfg: &SceneConfig,
    n_sequences: usize,
    seed: u64,
) -> EvalReport {
    assert!(n_sequences > 0, "need at least one evaluation sequence");
    assert!(scene_cfg.seq_len >= 2, "sequences need a frame beyond the template");
    let eval_seed = seed ^ EVAL_SEED_SALT;
    let mut pool = PooledErrors { ious: Vec::new(), px_hits: 0, norm_hits: 0 };
    let mut stats = Vec::with_capacity(n_sequences);
    for sid in 0..n_sequences as u64 {
        let seq = generate_sequence(eval_seed, sid, scene_cfg);
        let result = track_sequence(params, &seq, model_cfg);
        let ious = frame_ious(&result, &seq);
        stats.push(SequenceStats {
            seq_id: sid,
            frames: seq.frames.len(),
            ao: average_overlap(&ious).expect("seq_len >= 2"),
            success_auc: success_auc(&ious).expect("seq_len >= 2"),
        });
        pool_sequence(&result, &seq, &mut pool);
    }
    report_from_pool(&pool, stats).expect("pool is nonempty")
}

// ── Tests ───────────────────────────────────────────────────────────────────
