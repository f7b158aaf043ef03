//! Label assignment: which grid bins supervise which loss terms.
//!
//! Four strategies cover the spectrum from a single positive per target to
//! adaptively thresholded candidate sets:
//!
//! - [`AssignStrategy::OneToOneCenter`]: the bin whose center is nearest the
//!   ground-truth center is the only positive.
//! - [`AssignStrategy::MaxIoU`]: fixed IoU thresholds split bins into
//!   positive (`> 0.5`), negative (`< 0.4`), and ignored; the arg-max bin is
//!   promoted when nothing clears the positive bar.
//! - [`AssignStrategy::TopKCd`]: the k bins nearest the target by center
//!   distance are candidates; a dynamic IoU threshold keeps the good ones.
//! - [`AssignStrategy::TopKIv`]: like CD but candidates are the k bins whose
//!   predicted boxes have the highest IoU with the target.
//!
//! The dynamic threshold is `mean + spread` over candidate IoUs, where the
//! spread is the population standard deviation or, as a variant, the
//! population variance. The arg-max candidate always survives the filter, so
//! every assignment has at least one positive.
//!
//! All decisions are made on plain `f64` values outside the tape; gradients
//! never flow through assignment. Every ranking breaks ties toward the
//! smaller row-major bin index so results are reproducible.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};
use crate::{Error, Result};

/// Per-bin role in the losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinLabel {
    Positive,
    Negative,
    Ignore,
}

/// Assignment strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignStrategy {
    #[serde(rename = "one2one")]
    OneToOneCenter,
    #[serde(rename = "maxiou")]
    MaxIoU,
    #[serde(rename = "cd")]
    TopKCd,
    #[serde(rename = "iv")]
    TopKIv,
}

/// Spread statistic added to the candidate-IoU mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spread {
    /// Population standard deviation (the usual choice).
    Std,
    /// Population variance (literal-formula variant).
    Var,
}

/// Knobs of the one-to-many assigners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignerConfig {
    pub strategy: AssignStrategy,
    /// Candidate count for the top-k strategies (12 suits CD, 16 suits IV).
    pub top_k: usize,
    /// Label the refine stage with init-stage pseudo boxes.
    pub leading: bool,
    pub spread: Spread,
    /// MaxIoU positive bar (strict).
    pub iou_pos_thr: f64,
    /// MaxIoU negative bar (strict).
    pub iou_neg_thr: f64,
}

impl Default for AssignerConfig {
    fn default() -> Self {
        AssignerConfig::for_strategy(AssignStrategy::TopKIv)
    }
}

impl AssignerConfig {
    /// Config with the per-strategy default candidate count and leading on
    /// for the one-to-many strategies.
    pub fn for_strategy(strategy: AssignStrategy) -> Self {
        AssignerConfig {
            strategy,
            top_k: Self::default_top_k(strategy),
            leading: matches!(strategy, AssignStrategy::TopKCd | AssignStrategy::TopKIv),
            spread: Spread::Std,
            iou_pos_thr: 0.5,
            iou_neg_thr: 0.4,
        }
    }

    /// 12 candidates for center-distance selection, 16 for IoU-value.
    pub fn default_top_k(strategy: AssignStrategy) -> usize {
        match strategy {
            AssignStrategy::TopKCd => 12,
            _ => 16,
        }
    }
}

/// Assignment grid: bin layout of the score map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: usize,
    pub w: usize,
    pub stride: f64,
}

impl GridSpec {
    pub fn new(h: usize, w: usize, stride: f64) -> Self {
        assert!(h > 0 && w > 0 && stride > 0.0, "bad grid {h}x{w} stride {stride}");
        GridSpec { h, w, stride }
    }

    pub fn bins(&self) -> usize {
        self.h * self.w
    }

    /// Center of bin `(row, col)` in image coordinates.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.stride, (row as f64 + 0.5) * self.stride)
    }

    /// Center of a row-major bin index.
    pub fn center_of(&self, idx: usize) -> (f64, f64) {
        self.center(idx / self.w, idx % self.w)
    }

    /// Image extent covered by the grid.
    pub fn extent(&self) -> (f64, f64) {
        (self.w as f64 * self.stride, self.h as f64 * self.stride)
    }
}

/// Outcome of an assignment over one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentResult {
    /// Per-bin labels, row-major.
    pub labels: Vec<BinLabel>,
    /// Positive bin indices, ascending.
    pub positives: Vec<usize>,
    /// Dynamic threshold actually used, for the top-k strategies.
    pub threshold_used: Option<f64>,
}

impl AssignmentResult {
    /// Negative bin indices, ascending.
    pub fn negatives(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == BinLabel::Negative)
            .map(|(i, _)| i)
            .collect()
    }
}

fn dist_to_center(grid: &GridSpec, idx: usize, gt: &BBox) -> f64 {
    let (cx, cy) = grid.center_of(idx);
    let (gx, gy) = gt.center();
    (cx - gx).hypot(cy - gy)
}

/// One positive: the bin whose center is nearest the ground-truth center.
/// Ties go to the smaller row-major index. Fails when the center lies
/// outside the grid extent.
pub fn assign_one_to_one_center(gt: &BBox, grid: &GridSpec) -> Result<AssignmentResult> {
    let (gx, gy) = gt.center();
    let (ex, ey) = grid.extent();
    if !(0.0..=ex).contains(&gx) || !(0.0..=ey).contains(&gy) {
        return Err(Error::CenterOutsideGrid { center: (gx, gy), extent: (ex, ey) });
    }
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for idx in 0..grid.bins() {
        let d = dist_to_center(grid, idx, gt);
        if d < best_d {
            best_d = d;
            best = idx;
        }
    }
    let mut labels = vec![BinLabel::Negative; grid.bins()];
    labels[best] = BinLabel::Positive;
    Ok(AssignmentResult { labels, positives: vec![best], threshold_used: None })
}

/// Static-threshold assignment over predicted boxes: positive above
/// `iou_pos_thr` (strict), negative below `iou_neg_thr` (strict), ignored
/// between. Without any positive, the first arg-max-IoU bin is promoted.
pub fn assign_max_iou(pred_boxes: &[BBox], gt: &BBox, cfg: &AssignerConfig) -> AssignmentResult {
    assert!(!pred_boxes.is_empty(), "max-iou assignment needs at least one box");
    let ious: Vec<f64> = pred_boxes.iter().map(|b| iou(b, gt)).collect();
    let mut labels: Vec<BinLabel> = ious
        .iter()
        .map(|&v| {
            if v > cfg.iou_pos_thr {
                BinLabel::Positive
            } else if v < cfg.iou_neg_thr {
                BinLabel::Negative
            } else {
                BinLabel::Ignore
            }
        })
        .collect();
    if !labels.contains(&BinLabel::Positive) {
        let mut best = 0usize;
        for (i, &v) in ious.iter().enumerate() {
            if v > ious[best] {
                best = i;
            }
        }
        labels[best] = BinLabel::Positive;
    }
    let positives = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == BinLabel::Positive)
        .map(|(i, _)| i)
        .collect();
    AssignmentResult { labels, positives, threshold_used: None }
}

/// The `k` bins nearest the ground-truth center, ascending distance,
/// row-major on ties.
pub fn select_candidates_cd(gt: &BBox, grid: &GridSpec, k: usize) -> Result<Vec<usize>> {
    if k > grid.bins() {
        return Err(Error::TopKExceedsBins { k, bins: grid.bins() });
    }
    let mut order: Vec<(usize, f64)> = (0..grid.bins())
        .map(|i| (i, dist_to_center(grid, i, gt)))
        .collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(order.into_iter().take(k).map(|(i, _)| i).collect())
}

/// The `k` bins with the highest predicted-box IoU against the ground
/// truth, descending IoU, row-major on ties.
pub fn select_candidates_iv(pred_boxes: &[BBox], gt: &BBox, k: usize) -> Result<Vec<usize>> {
    if k > pred_boxes.len() {
        return Err(Error::TopKExceedsBins { k, bins: pred_boxes.len() });
    }
    let mut order: Vec<(usize, f64)> = pred_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| (i, iou(b, gt)))
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(order.into_iter().take(k).map(|(i, _)| i).collect())
}

/// Keeps the candidates whose IoU clears `mean + spread` over the candidate
/// IoUs (population statistics); the first arg-max candidate always stays.
/// Returns the survivors in candidate order plus the threshold.
pub fn dynamic_threshold_filter(
    candidates: &[usize],
    candidate_ious: &[f64],
    spread: Spread,
) -> (Vec<usize>, f64) {
    assert_eq!(
        candidates.len(),
        candidate_ious.len(),
        "candidate/IoU lists must align"
    );
    assert!(!candidates.is_empty(), "dynamic filter needs candidates");
    let n = candidate_ious.len() as f64;
    let mean = candidate_ious.iter().sum::<f64>() / n;
    let var = candidate_ious.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let t = mean
        + match spread {
            Spread::Std => var.sqrt(),
            Spread::Var => var,
        };
    let mut arg_best = 0usize;
    for (i, &v) in candidate_ious.iter().enumerate() {
        if v > candidate_ious[arg_best] {
            arg_best = i;
        }
    }
    let mut keep: Vec<usize> = Vec::new();
    for (i, (&bin, &v)) in candidates.iter().zip(candidate_ious).enumerate() {
        if v >= t || i == arg_best {
            keep.push(bin);
        }
    }
    (keep, t)
}

/// Top-k candidate selection plus dynamic threshold. Candidate IoUs and, for
/// the IV strategy, the candidates themselves come from `labeling_boxes`.
/// Bins outside the surviving set are negative.
pub fn assign_one_to_many(
    labeling_boxes: &[BBox],
    gt: &BBox,
    grid: &GridSpec,
    cfg: &AssignerConfig,
) -> Result<AssignmentResult> {
    assert_eq!(
        labeling_boxes.len(),
        grid.bins(),
        "need one box per bin: {} vs {}",
        labeling_boxes.len(),
        grid.bins()
    );
    let candidates = match cfg.strategy {
        AssignStrategy::TopKCd => select_candidates_cd(gt, grid, cfg.top_k)?,
        AssignStrategy::TopKIv => select_candidates_iv(labeling_boxes, gt, cfg.top_k)?,
        other => panic!("assign_one_to_many does not handle {other:?}"),
    };
    let candidate_ious: Vec<f64> = candidates
        .iter()
        .map(|&i| iou(&labeling_boxes[i], gt))
        .collect();
    let (mut positives, t) = dynamic_threshold_filter(&candidates, &candidate_ious, cfg.spread);
    positives.sort_unstable();
    let mut labels = vec![BinLabel::Negative; grid.bins()];
    for &p in &positives {
        labels[p] = BinLabel::Positive;
    }
    Ok(AssignmentResult { labels, positives, threshold_used: Some(t) })
}

/// Strategy dispatch with the leading rule: when `cfg.leading` is set, the
/// box-driven strategies label the refine stage using the init-stage pseudo
/// boxes instead of its own. The purely geometric strategies ignore boxes.
pub fn leading_labels(
    init_boxes: &[BBox],
    refine_boxes: &[BBox],
    gt: &BBox,
    grid: &GridSpec,
    cfg: &AssignerConfig,
) -> Result<AssignmentResult> {
    let labeling = if cfg.leading { init_boxes } else { refine_boxes };
    match cfg.strategy {
        AssignStrategy::OneToOneCenter => assign_one_to_one_center(gt, grid),
        AssignStrategy::MaxIoU => Ok(assign_max_iou(labeling, gt, cfg)),
        AssignStrategy::TopKCd | AssignStrategy::TopKIv => {
            assign_one_to_many(labeling, gt, grid, cfg)
        }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
