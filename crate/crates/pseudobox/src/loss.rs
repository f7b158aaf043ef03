//! Training objective: penalty-shaped focal classification loss, per-stage
//! GIoU box losses, a score/IoU concordance penalty with an optional
//! gradient stop on the IoU side, and their weighted sum.
//!
//! Targets and masks are plain `f64` built off-tape; every loss itself is a
//! tape [`Value`] so one backward sweep reaches all parameters.
//!
//! Conventions baked in here:
//!
//! - Classification targets are 1 exactly on positive bins and a Gaussian
//!   falloff elsewhere, capped strictly below 1; ignored bins carry zero
//!   weight.
//! - The focal sum is normalized by `max(1, #positives)`.
//! - The concordance coefficient uses population (divide-by-n) statistics
//!   throughout, so its covariance and Pearson routes agree exactly.
//! - Fewer than two sampled bins make the concordance term a constant zero.

use serde::{Deserialize, Serialize};

use crate::assigner::{AssignmentResult, BinLabel, GridSpec};
use crate::geometry::{bbox_const, giou_rows, BBox};
use crate::tape::Value;

/// Cap for non-positive classification targets, keeping them strictly
/// below the positive branch trigger.
pub const NEGATIVE_TARGET_CAP: f64 = 1.0 - 1e-4;

/// Epsilon added to the concordance denominator.
pub const CORR_EPSILON: f64 = 1e-9;

// ── Weights and bundles ─────────────────────────────────────────────────────

/// Scalar weights of the total objective plus the focal exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_det: f64,
    pub lambda_corr: f64,
    pub lambda_init: f64,
    pub lambda_refine: f64,
    /// Focal exponent on the predicted score.
    pub alpha: f64,
    /// Focal exponent on the soft-target penalty.
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cls: 2.0,
            lambda_det: 1.0,
            lambda_corr: 0.5,
            lambda_init: 1.0,
            lambda_refine: 2.0,
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

/// Which bins feed the concordance penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Positive bins only (the default).
    Pos,
    /// Positive and negative bins; ignored bins never participate.
    PosNeg,
}

/// All loss components of one scene, plus their weighted total.
#[derive(Debug, Clone)]
pub struct LossBundle {
    pub cls: Value,
    pub init: Value,
    pub refine: Value,
    pub corr: Value,
    pub total: Value,
}

// ── Classification targets ──────────────────────────────────────────────────

/// Soft classification targets and per-bin weights, row-major over the grid.
///
/// `targets[i] == 1.0` exactly on positive bins (the builder caps every
/// other bin strictly below 1), `mask[i] == 0.0` on ignored bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub targets: Vec<f64>,
    pub mask: Vec<f64>,
    pub num_positives: usize,
}

/// Builds the soft target map for one ground-truth box: 1 on positives,
/// a Gaussian falloff `exp(-d²/(2σ²))` elsewhere with `d` the distance from
/// bin center to box center and `σ = max(diagonal/6, stride/2)`, capped at
/// [`NEGATIVE_TARGET_CAP`]. Ignored bins get mask 0.
pub fn build_target_map(assignment: &AssignmentResult, gt: &BBox, grid: &GridSpec) -> TargetMap {
    assert_eq!(assignment.labels.len(), grid.bins(), "assignment/grid mismatch");
    let (gx, gy) = gt.center();
    let sigma = (gt.diagonal() / 6.0).max(grid.stride / 2.0);
    let two_sigma_sq = 2.0 * sigma * sigma;
    let mut targets = Vec::with_capacity(grid.bins());
    let mut mask = Vec::with_capacity(grid.bins());
    for (i, label) in assignment.labels.iter().enumerate() {
        match label {
            BinLabel::Positive => {
                targets.push(1.0);
                mask.push(1.0);
            }
            other => {
                let (cx, cy) = grid.center_of(i);
                let d_sq = (cx - gx) * (cx - gx) + (cy - gy) * (cy - gy);
                targets.push((-d_sq / two_sigma_sq).exp().min(NEGATIVE_TARGET_CAP));
                mask.push(if *other == BinLabel::Ignore { 0.0 } else { 1.0 });
            }
        }
    }
    TargetMap { targets, mask, num_positives: assignment.positives.len() }
}

// ── Loss terms ──────────────────────────────────────────────────────────────

/// Penalty-shaped focal loss over sigmoid scores.
///
/// Per unmasked bin: `-(1-P)^α·log(P)` where the target is exactly 1, and
/// `-(1-t)^β·P^α·log(1-P)` elsewhere; summed and divided by
/// `max(1, #positives)`. Scores must already be in (0,1); the upstream
/// logit clamp keeps both logs finite.
pub fn focal_loss(scores: &Value, target: &TargetMap, w: &LossWeights) -> Value {
    let n = target.targets.len();
    assert_eq!(scores.shape(), &[n, 1], "scores shape {:?} for {n} bins", scores.shape());
    let mut pos_coef = vec![0.0; n];
    let mut neg_coef = vec![0.0; n];
    for i in 0..n {
        if target.targets[i] == 1.0 {
            pos_coef[i] = target.mask[i];
        } else {
            neg_coef[i] = target.mask[i] * (1.0 - target.targets[i]).powf(w.beta);
        }
    }
    let tape = scores.tape();
    let pos_coef = tape.constant(crate::tape::Tensor::from_vec(vec![n, 1], pos_coef));
    let neg_coef = tape.constant(crate::tape::Tensor::from_vec(vec![n, 1], neg_coef));

    let one_minus = scores.affine(-1.0, 1.0);
    let pos_terms = one_minus.powf(w.alpha).mul(&scores.log()).mul(&pos_coef);
    let neg_terms = scores.powf(w.alpha).mul(&one_minus.log()).mul(&neg_coef);
    let norm = target.num_positives.max(1) as f64;
    pos_terms
        .add(&neg_terms)
        .sum_all()
        .scale(-1.0 / norm)
}

/// Mean `1 - GIoU(pred, gt)` over the positive bins of one stage.
pub fn stage_giou_loss(pred_boxes: &Value, gt: &BBox, positives: &[usize]) -> Value {
    assert!(!positives.is_empty(), "stage loss needs at least one positive bin");
    let gathered = pred_boxes.gather_rows(positives);
    let gt_row = bbox_const(&pred_boxes.tape(), gt);
    let g = giou_rows(&gathered, &gt_row);
    g.affine(-1.0, 1.0).mean_all()
}

/// Concordance coefficient between two aligned vectors of tape values,
/// in [-1, 1].
///
/// With population means and deviations: numerator
/// `2·pearson(s,b)·std(s)·std(b)`, denominator
/// `var(s) + var(b) + (mean(s)-mean(b))² + 1e-9`. Perfectly aligned
/// non-constant inputs score 1 up to the epsilon.
pub fn corr_rho(s: &Value, b: &Value) -> Value {
    assert_eq!(s.shape(), b.shape(), "concordance inputs must align");
    let n = s.tensor().numel();
    assert!(n >= 2, "concordance needs at least two samples");
    let inv_n = 1.0 / n as f64;

    let s_mean = s.mean_all();
    let b_mean = b.mean_all();
    let v_s = s.sub(&s_mean);
    let v_b = b.sub(&b_mean);

    let ss = v_s.square().sum_all();
    let bb = v_b.square().sum_all();
    let cross = v_s.mul(&v_b).sum_all();
    let pearson = cross.div(&ss.sqrt().mul(&bb.sqrt()));

    let var_s = ss.scale(inv_n);
    let var_b = bb.scale(inv_n);
    let std_s = var_s.sqrt();
    let std_b = var_b.sqrt();

    let numerator = pearson.mul(&std_s.mul(&std_b)).scale(2.0);
    let mean_gap = s_mean.sub(&b_mean).square();
    let denominator = var_s.add(&var_b).add(&mean_gap).add_scalar(CORR_EPSILON);
    numerator.div(&denominator)
}

/// `1 - ρ` between per-bin scores and per-bin box IoUs over the sampled
/// bins. With `truncate` the IoU side is detached, so the penalty shapes
/// only the classification branch. Fewer than two sampled bins yield a
/// constant zero.
pub fn corr_loss(
    scores: &Value,
    ious: &Value,
    assignment: &AssignmentResult,
    mode: SampleMode,
    truncate: bool,
) -> Value {
    let mut sampled: Vec<usize> = assignment.positives.clone();
    if mode == SampleMode::PosNeg {
        sampled.extend(assignment.negatives());
        sampled.sort_unstable();
    }
    if sampled.len() < 2 {
        return scores.tape().scalar(0.0);
    }
    let s = scores.gather_rows(&sampled);
    let b = ious.gather_rows(&sampled);
    let b = if truncate { b.detach() } else { b };
    corr_rho(&s, &b).affine(-1.0, 1.0)
}

/// Weighted sum of the components:
/// `λ_cls·cls + λ_det·(λ_init·init + λ_refine·refine) + λ_corr·corr`.
pub fn total_loss(
    cls: &Value,
    init: &Value,
    refine: &Value,
    corr: &Value,
    w: &LossWeights,
) -> LossBundle {
    let det = init.scale(w.lambda_init).add(&refine.scale(w.lambda_refine));
    let total = cls
        .scale(w.lambda_cls)
        .add(&det.scale(w.lambda_det))
        .add(&corr.scale(w.lambda_corr));
    LossBundle {
        cls: cls.clone(),
        init: init.clone(),
        refine: refine.clone(),
        corr: corr.clone(),
        total,
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
