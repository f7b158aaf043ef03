//! Boxes, overlap measures, and point-set to pseudo-box converters.
//!
//! Every measure exists twice: a plain `f64` version used by assigners,
//! metrics, and tests, and a vectorized on-tape version used inside losses.
//! The two share formulas and edge rules (empty union gives IoU 0, the
//! moment sigma is floored at `1e-6`), so cross-checking them against each
//! other is a meaningful test.
//!
//! On-tape boxes are rank-2 values with one box per row and columns
//! `[x1, y1, x2, y2]`; point sets are `[rows, n]` coordinate matrices,
//! x and y separately.

use serde::{Deserialize, Serialize};

use crate::tape::{concat_cols, Tape, Tensor, Value};

/// Sigma floor of the moment converter.
pub const MOMENT_SIGMA_FLOOR: f64 = 1e-6;

// ── Plain types ─────────────────────────────────────────────────────────────

/// Axis-aligned box in continuous image coordinates, `x1 <= x2`, `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Box from ordered corners; panics when the ordering is violated.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        assert!(
            x1 <= x2 && y1 <= y2,
            "box corners out of order: ({x1}, {y1}, {x2}, {y2})"
        );
        BBox { x1, y1, x2, y2 }
    }

    /// Box from two arbitrary corners, sorted per axis.
    pub fn from_corners(a: (f64, f64), b: (f64, f64)) -> Self {
        BBox::new(a.0.min(b.0), a.1.min(b.1), a.0.max(b.0), a.1.max(b.1))
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Corners as `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Set of `n >= 2` free points, the head's localization representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<(f64, f64)>,
}

impl PointSet {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        assert!(points.len() >= 2, "point set needs >= 2 points, got {}", points.len());
        PointSet { points }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Translated copy.
    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        PointSet::new(self.points.iter().map(|&(x, y)| (x + dx, y + dy)).collect())
    }
}

/// Positive scale factors applied to the moment converter's sigmas.
///
/// Trained models keep these as the exponential of an unconstrained
/// parameter; this plain struct carries the already-positive values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMultipliers {
    pub lambda_x: f64,
    pub lambda_y: f64,
}

impl Default for MomentMultipliers {
    fn default() -> Self {
        MomentMultipliers { lambda_x: 1.0, lambda_y: 1.0 }
    }
}

impl MomentMultipliers {
    pub fn new(lambda_x: f64, lambda_y: f64) -> Self {
        assert!(
            lambda_x > 0.0 && lambda_y > 0.0,
            "moment multipliers must be positive, got ({lambda_x}, {lambda_y})"
        );
        MomentMultipliers { lambda_x, lambda_y }
    }
}

// ── Plain measures ──────────────────────────────────────────────────────────

/// Intersection-over-union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Generalized IoU: `iou - (hull - union) / hull` over the convex hull box.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let hull = (a.x2.max(b.x2) - a.x1.min(b.x1)) * (a.y2.max(b.y2) - a.y1.min(b.y1));
    let base = if union > 0.0 { inter / union } else { 0.0 };
    if hull > 0.0 {
        base - (hull - union) / hull
    } else {
        base
    }
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Tight axis-aligned box around a point set.
pub fn convert_minmax(points: &PointSet) -> BBox {
    let mut x1 = f64::INFINITY;
    let mut y1 = f64::INFINITY;
    let mut x2 = f64::NEG_INFINITY;
    let mut y2 = f64::NEG_INFINITY;
    for &(x, y) in points.points() {
        x1 = x1.min(x);
        y1 = y1.min(y);
        x2 = x2.max(x);
        y2 = y2.max(y);
    }
    BBox::new(x1, y1, x2, y2)
}

/// Box centered on the point mean with half-extent `lambda * sigma` per
/// axis, sigma being the population standard deviation floored at `1e-6`.
pub fn convert_moment(points: &PointSet, m: &MomentMultipliers) -> BBox {
    let n = points.n() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for &(x, y) in points.points() {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    let (mut vx, mut vy) = (0.0, 0.0);
    for &(x, y) in points.points() {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    let sx = (vx / n).sqrt().max(MOMENT_SIGMA_FLOOR);
    let sy = (vy / n).sqrt().max(MOMENT_SIGMA_FLOOR);
    let (hx, hy) = (m.lambda_x * sx, m.lambda_y * sy);
    BBox::new(mx - hx, my - hy, mx + hx, my + hy)
}

/// Clips a box into `bounds`; corner ordering survives because both corners
/// move into the same interval.
pub fn clamp_box(b: &BBox, bounds: &BBox) -> BBox {
    BBox::new(
        b.x1.clamp(bounds.x1, bounds.x2),
        b.y1.clamp(bounds.y1, bounds.y2),
        b.x2.clamp(bounds.x1, bounds.x2),
        b.y2.clamp(bounds.y1, bounds.y2),
    )
}

// ── On-tape measures ────────────────────────────────────────────────────────

/// Constant `[1, 4]` box row for broadcasting against predicted boxes.
pub fn bbox_const(tape: &Tape, b: &BBox) -> Value {
    tape.constant(Tensor::from_vec(vec![1, 4], b.corners().to_vec()))
}

fn split_box_cols(b: &Value) -> (Value, Value, Value, Value) {
    assert_eq!(b.shape()[1], 4, "box value needs 4 columns, got {:?}", b.shape());
    (
        b.slice_cols(0, 1),
        b.slice_cols(1, 1),
        b.slice_cols(2, 1),
        b.slice_cols(3, 1),
    )
}

fn iou_parts(a: &Value, b: &Value) -> (Value, Value) {
    let (ax1, ay1, ax2, ay2) = split_box_cols(a);
    let (bx1, by1, bx2, by2) = split_box_cols(b);
    let iw = ax2.minimum(&bx2).sub(&ax1.maximum(&bx1)).relu();
    let ih = ay2.minimum(&by2).sub(&ay1.maximum(&by1)).relu();
    let inter = iw.mul(&ih);
    let area_a = ax2.sub(&ax1).mul(&ay2.sub(&ay1));
    let area_b = bx2.sub(&bx1).mul(&by2.sub(&by1));
    let union = area_a.add(&area_b).sub(&inter);
    (inter.div(&union), union)
}

/// Row-wise IoU of two box values (`[N, 4]` against `[N, 4]` or `[1, 4]`).
pub fn iou_rows(a: &Value, b: &Value) -> Value {
    iou_parts(a, b).0
}

/// Row-wise GIoU, same shapes as [`iou_rows`].
pub fn giou_rows(a: &Value, b: &Value) -> Value {
    let (iou, union) = iou_parts(a, b);
    let (ax1, ay1, ax2, ay2) = split_box_cols(a);
    let (bx1, by1, bx2, by2) = split_box_cols(b);
    let hull = ax2
        .maximum(&bx2)
        .sub(&ax1.minimum(&bx1))
        .mul(&ay2.maximum(&by2).sub(&ay1.minimum(&by1)));
    iou.sub(&hull.sub(&union).div(&hull))
}

/// On-tape min-max converter: `[N, n]` x and y coordinates to `[N, 4]` boxes.
pub fn convert_minmax_rows(xs: &Value, ys: &Value) -> Value {
    let x1 = xs.min_axis(1);
    let y1 = ys.min_axis(1);
    let x2 = xs.max_axis(1);
    let y2 = ys.max_axis(1);
    concat_cols(&[&x1, &y1, &x2, &y2])
}

/// On-tape moment converter. `lambdas` is a `[1, 2]` value holding the
/// already-exponentiated `(lambda_x, lambda_y)` pair.
pub fn convert_moment_rows(xs: &Value, ys: &Value, lambdas: &Value) -> Value {
    assert_eq!(lambdas.shape(), vec![1, 2], "lambdas must be [1, 2]");
    let convert_axis = |c: &Value, lam: &Value| -> (Value, Value) {
        let mu = c.mean_axis(1);
        let var = c.sub(&mu).square().mean_axis(1);
        let sigma = var.sqrt().maximum(&c.tape().scalar(MOMENT_SIGMA_FLOOR));
        let half = sigma.mul(lam);
        (mu.sub(&half), mu.add(&half))
    };
    let (x1, x2) = convert_axis(xs, &lambdas.slice_cols(0, 1));
    let (y1, y2) = convert_axis(ys, &lambdas.slice_cols(1, 1));
    concat_cols(&[&x1, &y1, &x2, &y2])
}

/// Clips every row of a `[N, 4]` box value into `bounds` on tape.
pub fn clamp_box_rows(b: &Value, bounds: &BBox) -> Value {
    let (x1, y1, x2, y2) = split_box_cols(b);
    concat_cols(&[
        &x1.clamp(bounds.x1, bounds.x2),
        &y1.clamp(bounds.y1, bounds.y2),
        &x2.clamp(bounds.x1, bounds.x2),
        &y2.clamp(bounds.y1, bounds.y2),
    ])
}

/// Reads row `r` of a `[N, 4]` box tensor back into a plain box.
pub fn bbox_from_row(t: &Tensor, r: usize) -> BBox {
    assert_eq!(t.shape()[1], 4, "box tensor needs 4 columns, got {:?}", t.shape());
    BBox::new(t.get2(r, 0), t.get2(r, 1), t.get2(r, 2), t.get2(r, 3))
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::tape::grad_check;
    use proptest::prelude::*;

    fn random_box(rng: &mut SplitMix64) -> BBox {
        let x1 = rng.uniform(-5.0, 5.0);
        let y1 = rng.uniform(-5.0, 5.0);
        BBox::new(x1, y1, x1 + rng.uniform(0.1, 6.0), y1 + rng.uniform(0.1, 6.0))
    }

    #[test]
    fn iou_hand_case_one_seventh() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        // Intersection 1, union 4 + 4 - 1 = 7.
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        assert!((iou(&b, &a) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn giou_hand_case_disjoint() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(2.0, 2.0, 3.0, 3.0);
        // IoU 0, union 2, hull 9: giou = -(9 - 2) / 9.
        assert!((giou(&a, &b) + 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn giou_of_identical_box_is_one() {
        let a = BBox::new(-1.0, 2.0, 4.0, 5.0);
        assert!((giou(&a, &a) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_self_iou_is_zero() {
        let p = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn center_distance_is_three_four_five() {
        let a = BBox::new(-1.0, -1.0, 1.0, 1.0);
        let b = BBox::new(2.0, 3.0, 4.0, 5.0);
        assert!((center_distance(&a, &b) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn minmax_hand_case() {
        let ps = PointSet::new(vec![(1.0, 2.0), (3.0, 0.0), (2.0, 5.0)]);
        assert_eq!(convert_minmax(&ps), BBox::new(1.0, 0.0, 3.0, 5.0));
    }

    #[test]
    fn moment_unit_square_with_unit_multipliers() {
        let ps = PointSet::new(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        let b = convert_moment(&ps, &MomentMultipliers::default());
        // Mean 0.5 per axis, population sigma 0.5.
        assert!((b.x1 - 0.0).abs() < 1e-12 && (b.y1 - 0.0).abs() < 1e-12);
        assert!((b.x2 - 1.0).abs() < 1e-12 && (b.y2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moment_sigma_floor_applies_to_coincident_points() {
        let ps = PointSet::new(vec![(2.0, 3.0), (2.0, 3.0)]);
        let b = convert_moment(&ps, &MomentMultipliers::default());
        assert!((b.width() - 2.0 * MOMENT_SIGMA_FLOOR).abs() < 1e-12);
    }

    #[test]
    fn clamp_box_hand_case() {
        let b = BBox::new(-5.0, -5.0, 3.0, 3.0);
        let bounds = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(clamp_box(&b, &bounds), BBox::new(0.0, 0.0, 3.0, 3.0));
    }

    #[test]
    #[should_panic(expected = "corners out of order")]
    fn unordered_corners_panic() {
        let _ = BBox::new(3.0, 0.0, 1.0, 2.0);
    }

    #[test]
    fn tape_matches_plain_on_random_pairs() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..200 {
            let a = random_box(&mut rng);
            let b = random_box(&mut rng);
            let tape = Tape::new();
            let av = bbox_const(&tape, &a);
            let bv = bbox_const(&tape, &b);
            let ti = iou_rows(&av, &bv).item();
            let tg = giou_rows(&av, &bv).item();
            assert!((ti - iou(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
            assert!((tg - giou(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn tape_converters_match_plain() {
        let mut rng = SplitMix64::new(6);
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = (0..9)
                .map(|_| (rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)))
                .collect();
            let ps = PointSet::new(pts.clone());
            let lam = MomentMultipliers::new(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0));

            let tape = Tape::new();
            let xs = tape.constant(Tensor::from_vec(
                vec![1, 9],
                pts.iter().map(|p| p.0).collect(),
            ));
            let ys = tape.constant(Tensor::from_vec(
                vec![1, 9],
                pts.iter().map(|p| p.1).collect(),
            ));
            let mm = convert_minmax_rows(&xs, &ys).tensor();
            let want = convert_minmax(&ps);
            assert!((bbox_from_row(&mm, 0).x1 - want.x1).abs() < 1e-12);
            assert!((bbox_from_row(&mm, 0).y2 - want.y2).abs() < 1e-12);

            let lv = tape.constant(Tensor::from_vec(vec![1, 2], vec![lam.lambda_x, lam.lambda_y]));
            let mo = convert_moment_rows(&xs, &ys, &lv).tensor();
            let want = convert_moment(&ps, &lam);
            let got = bbox_from_row(&mo, 0);
            for (g, w) in got.corners().iter().zip(want.corners()) {
                assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn tape_iou_gradients_match_finite_differences() {
        // Overlapping, non-degenerate, away from min/max ties.
        let a = Tensor::from_vec(vec![1, 4], vec![0.3, 0.1, 2.2, 1.9]);
        let b = Tensor::from_vec(vec![1, 4], vec![1.0, 0.7, 3.1, 2.6]);
        let f_iou = |_: &Tape, vals: &[Value]| iou_rows(&vals[0], &vals[1]).sum_all();
        let report = grad_check(f_iou, &[a.clone(), b.clone()], 1e-5);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
        let f_giou = |_: &Tape, vals: &[Value]| giou_rows(&vals[0], &vals[1]).sum_all();
        let report = grad_check(f_giou, &[a, b], 1e-5);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn tape_converter_gradients_match_finite_differences() {
        let mut rng = SplitMix64::new(8);
        let xs = Tensor::from_vec(vec![2, 5], (0..10).map(|_| rng.uniform(-3.0, 3.0)).collect());
        let ys = Tensor::from_vec(vec![2, 5], (0..10).map(|_| rng.uniform(-3.0, 3.0)).collect());
        let gt = BBox::new(-1.0, -1.0, 1.5, 2.0);
        let f_minmax = move |tape: &Tape, vals: &[Value]| {
            let boxes = convert_minmax_rows(&vals[0], &vals[1]);
            giou_rows(&boxes, &bbox_const(tape, &gt)).mean_all()
        };
        let report = grad_check(f_minmax, &[xs.clone(), ys.clone()], 1e-5);
        assert!(report.max_rel_err < 1e-5, "minmax {report:?}");

        let log_lam = Tensor::from_vec(vec![1, 2], vec![0.2, -0.1]);
        let f_moment = move |tape: &Tape, vals: &[Value]| {
            let boxes = convert_moment_rows(&vals[0], &vals[1], &vals[2].exp());
            giou_rows(&boxes, &bbox_const(tape, &gt)).mean_all()
        };
        let report = grad_check(f_moment, &[xs, ys, log_lam], 1e-5);
        assert!(report.max_rel_err < 1e-5, "moment {report:?}");
    }

    #[test]
    fn clamp_box_rows_matches_plain() {
        let bounds = BBox::new(0.0, 0.0, 10.0, 10.0);
        let tape = Tape::new();
        let raw = tape.constant(Tensor::from_vec(
            vec![2, 4],
            vec![-5.0, -5.0, 3.0, 3.0, 2.0, 8.0, 14.0, 12.0],
        ));
        let clamped = clamp_box_rows(&raw, &bounds).tensor();
        assert_eq!(bbox_from_row(&clamped, 0), BBox::new(0.0, 0.0, 3.0, 3.0));
        assert_eq!(bbox_from_row(&clamped, 1), BBox::new(2.0, 8.0, 10.0, 10.0));
    }

    proptest! {
        #[test]
        fn iou_bounds_and_giou_dominance(
            ax in -5.0..5.0f64, ay in -5.0..5.0f64, aw in 0.05..6.0f64, ah in 0.05..6.0f64,
            bx in -5.0..5.0f64, by in -5.0..5.0f64, bw in 0.05..6.0f64, bh in 0.05..6.0f64,
        ) {
            let a = BBox::new(ax, ay, ax + aw, ay + ah);
            let b = BBox::new(bx, by, bx + bw, by + bh);
            let i = iou(&a, &b);
            let g = giou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&i));
            prop_assert!(g > -1.0 && g <= 1.0 + 1e-15);
            prop_assert!(g <= i + 1e-12);
        }

        #[test]
        fn converters_are_translation_equivariant(
            seed in 0u64..1000,
            dx in -20.0..20.0f64,
            dy in -20.0..20.0f64,
        ) {
            let mut rng = SplitMix64::new(seed);
            let pts: Vec<(f64, f64)> = (0..7)
                .map(|_| (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)))
                .collect();
            let ps = PointSet::new(pts);
            let moved = ps.shifted(dx, dy);
            for (base, shifted) in [
                (convert_minmax(&ps), convert_minmax(&moved)),
                (
                    convert_moment(&ps, &MomentMultipliers::default()),
                    convert_moment(&moved, &MomentMultipliers::default()),
                ),
            ] {
                prop_assert!((shifted.x1 - base.x1 - dx).abs() < 1e-9);
                prop_assert!((shifted.y1 - base.y1 - dy).abs() < 1e-9);
                prop_assert!((shifted.x2 - base.x2 - dx).abs() < 1e-9);
                prop_assert!((shifted.y2 - base.y2 - dy).abs() < 1e-9);
            }
        }

        #[test]
        fn minmax_is_tight(seed in 0u64..1000) {
            let mut rng = SplitMix64::new(seed);
            let pts: Vec<(f64, f64)> = (0..9)
                .map(|_| (rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)))
                .collect();
            let b = convert_minmax(&PointSet::new(pts.clone()));
            for (x, y) in &pts {
                prop_assert!(*x >= b.x1 && *x <= b.x2 && *y >= b.y1 && *y <= b.y2);
            }
            // Tightness: some point touches each side.
            prop_assert!(pts.iter().any(|p| p.0 == b.x1));
            prop_assert!(pts.iter().any(|p| p.0 == b.x2));
            prop_assert!(pts.iter().any(|p| p.1 == b.y1));
            prop_assert!(pts.iter().any(|p| p.1 == b.y2));
        }
    }
}
