//! Deterministic synthetic tracking scenes: one bright shape (axis-rotated
//! ellipse or rectangle) over noisy background, with the tight axis-aligned
//! box of the shape's pixel support as ground truth, plus multi-frame
//! sequences where the shape drifts, rescales, and rotates.
//!
//! Everything is a pure function of `(seed, id)` through a keyed
//! [`SplitMix64`] stream. The per-scene draw order is part of the contract:
//!
//! 1. shape kind (one index draw: 0 ellipse, 1 rectangle)
//! 2. intensity, uniform in [0.55, 0.95]
//! 3. placement attempts, each drawing (cx, cy, half_w, half_h, rotation)
//!    until the margin and area invariants hold (bounded retries, then a
//!    deterministic centered fallback)
//! 4. search background, `w·h` uniforms in [0, 0.45], row-major
//! 5. search pixel noise, `w·h` gaussians N(0, 0.1²), row-major
//! 6. template background, then template noise, same pattern
//!
//! Sequences render frame 0 exactly as [`generate_scene`] and then evolve
//! the shape with a separate stream (salted seed, same id): per frame a
//! ±3 px center step per axis, a multiplicative scale drift in
//! [0.97, 1.03] (half extents clamped back to the legal range), a ±0.1 rad
//! rotation drift, then fresh background and noise draws. Centers live in a
//! fixed band that keeps any legal shape two pixels clear of the border, so
//! reflecting a step off the band never moves the center farther than the
//! step itself.
//!
//! A pixel `(px, py)` belongs to the shape's support when its center
//! `(px + 0.5, py + 0.5)` lies inside the shape; the ground-truth box spans
//! `[min_px, max_px + 1] × [min_py, max_py + 1]` of the support.

use std::io::Write as _;
use std::path::Path;

use crate::geometry::BBox;
use crate::rng::SplitMix64;

/// Smallest legal half extent of a shape, in pixels.
pub const SHAPE_HALF_MIN: f64 = 4.0;
/// Largest legal half extent of a shape, in pixels.
pub const SHAPE_HALF_MAX: f64 = 13.0;
/// Shape centers stay this far from every border; covers the worst-case
/// reach of a maximal rotated rectangle (`hypot(13,13) ≈ 18.4`) plus the
/// two-pixel box margin and pixel rounding.
pub const CENTER_MARGIN: f64 = 21.0;
/// Required distance between the ground-truth box and the image border.
pub const BOX_MARGIN: f64 = 2.0;
/// Minimum ground-truth box area in square pixels.
pub const MIN_BOX_AREA: f64 = 36.0;
/// Background intensity ceiling.
pub const BACKGROUND_MAX: f64 = 0.45;
/// Additive pixel noise standard deviation.
pub const NOISE_STD: f64 = 0.1;
/// Placement attempts before the deterministic fallback shape.
pub const MAX_PLACE_ATTEMPTS: usize = 64;
/// Per-axis center step bound between consecutive frames, in pixels.
pub const STEP_MAX: f64 = 3.0;
/// Multiplicative per-frame scale drift range.
pub const SCALE_DRIFT: (f64, f64) = (0.97, 1.03);
/// Per-frame rotation drift bound in radians.
pub const ROT_DRIFT: f64 = 0.1;
/// Seed salt separating the motion stream from the frame-0 scene stream.
const MOTION_SALT: u64 = 0x6472_6966_7473_3031;

// ── Images ──────────────────────────────────────────────────────────────────

/// Grayscale image, values in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(w: usize, h: usize) -> Self {
        assert!(w > 0 && h > 0, "empty image {w}x{h}");
        Image { w, h, data: vec![0.0; w * h] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.w + x] = v;
    }

    /// Binary 8-bit PGM encoding (`P5`).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.w, self.h).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Writes an image as a binary PGM file.
pub fn write_pgm(img: &Image, path: &Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&img.to_pgm_bytes())
}

// ── Shapes ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
}

/// One rendered target: a rotated ellipse or rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub half_w: f64,
    pub half_h: f64,
    /// Rotation in [0, π).
    pub rot: f64,
    pub intensity: f64,
}

impl Shape {
    /// Whether a continuous point lies inside the shape.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (sin, cos) = self.rot.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        match self.kind {
            ShapeKind::Ellipse => {
                let a = u / self.half_w;
                let b = v / self.half_h;
                a * a + b * b <= 1.0
            }
            ShapeKind::Rectangle => u.abs() <= self.half_w && v.abs() <= self.half_h,
        }
    }

    /// Tight box of the pixel support on a `w×h` canvas, or `None` when no
    /// pixel center falls inside.
    pub fn support_box(&self, w: usize, h: usize) -> Option<BBox> {
        let (mut x1, mut y1) = (usize::MAX, usize::MAX);
        let (mut x2, mut y2) = (0usize, 0usize);
        let mut any = false;
        for py in 0..h {
            for px in 0..w {
                if self.contains(px as f64 + 0.5, py as f64 + 0.5) {
                    any = true;
                    x1 = x1.min(px);
                    y1 = y1.min(py);
                    x2 = x2.max(px);
                    y2 = y2.max(py);
                }
            }
        }
        any.then(|| {
            BBox::new(x1 as f64, y1 as f64, (x2 + 1) as f64, (y2 + 1) as f64)
        })
    }
}

// ── Configuration ───────────────────────────────────────────────────────────

/// Canvas sizes and sequence length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub search_size: usize,
    pub template_size: usize,
    pub seq_len: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { search_size: 64, template_size: 32, seq_len: 32 }
    }
}

impl SceneConfig {
    fn check(&self) {
        assert!(
            self.search_size as f64 > 2.0 * CENTER_MARGIN,
            "search canvas {} too small for the center band",
            self.search_size
        );
        assert!(self.template_size >= 8, "template too small");
        assert!(self.seq_len >= 2, "sequences need at least two frames");
    }
}

// ── Scenes ──────────────────────────────────────────────────────────────────

/// One template/search training pair with its tight ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub template: Image,
    pub search: Image,
    pub gt: BBox,
    pub scene_id: u64,
    /// The generating shape, kept as an oracle hook for tests and tooling.
    pub shape: Shape,
}

/// One evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub search: Image,
    pub gt: BBox,
    pub shape: Shape,
}

/// An evaluation sequence: the frame-0 template plus every frame's search
/// image and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub seq_id: u64,
    pub template: Image,
    pub frames: Vec<Frame>,
}

fn box_invariants_hold(gt: &BBox, w: usize, h: usize) -> bool {
    gt.x1 >= BOX_MARGIN
        && gt.y1 >= BOX_MARGIN
        && gt.x2 <= w as f64 - BOX_MARGIN
        && gt.y2 <= h as f64 - BOX_MARGIN
        && gt.area() >= MIN_BOX_AREA
}

/// Draws shape geometry until the support box satisfies the margin and
/// area invariants; falls back to a centered default after
/// [`MAX_PLACE_ATTEMPTS`].
fn place_shape(
    rng: &mut SplitMix64,
    kind: ShapeKind,
    intensity: f64,
    w: usize,
    h: usize,
) -> (Shape, BBox) {
    for _ in 0..MAX_PLACE_ATTEMPTS {
        let shape = Shape {
            kind,
            cx: rng.uniform(CENTER_MARGIN, w as f64 - CENTER_MARGIN),
            cy: rng.uniform(CENTER_MARGIN, h as f64 - CENTER_MARGIN),
            half_w: rng.uniform(SHAPE_HALF_MIN, SHAPE_HALF_MAX),
            half_h: rng.uniform(SHAPE_HALF_MIN, SHAPE_HALF_MAX),
            rot: rng.uniform(0.0, std::f64::consts::PI),
            intensity,
        };
        if let Some(gt) = shape.support_box(w, h) {
            if box_invariants_hold(&gt, w, h) {
                return (shape, gt);
            }
        }
    }
    let fallback = Shape {
        kind,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        half_w: 10.0,
        half_h: 10.0,
        rot: 0.0,
        intensity,
    };
    let gt = fallback.support_box(w, h).expect("fallback shape renders");
    assert!(box_invariants_hold(&gt, w, h), "fallback shape violates invariants");
    (fallback, gt)
}

/// Renders the shape over fresh background and noise draws: background
/// uniforms first (row-major), then one gaussian per pixel, clamped.
fn render(shape: &Shape, w: usize, h: usize, rng: &mut SplitMix64) -> Image {
    let mut img = Image::new(w, h);
    for v in img.data.iter_mut() {
        *v = rng.uniform(0.0, BACKGROUND_MAX);
    }
    for py in 0..h {
        for px in 0..w {
            if shape.contains(px as f64 + 0.5, py as f64 + 0.5) {
                img.set(px, py, shape.intensity);
            }
        }
    }
    for v in img.data.iter_mut() {
        *v = (*v + NOISE_STD * rng.next_gaussian()).clamp(0.0, 1.0);
    }
    img
}

/// Generates one training scene from the stream keyed by `(seed, scene_id)`.
pub fn generate_scene(seed: u64, scene_id: u64, cfg: &SceneConfig) -> Scene {
    cfg.check();
    let mut rng = SplitMix64::keyed(seed, scene_id);
    let kind = if rng.next_index(2) == 0 { ShapeKind::Ellipse } else { ShapeKind::Rectangle };
    let intensity = rng.uniform(0.55, 0.95);
    let (shape, gt) = place_shape(&mut rng, kind, intensity, cfg.search_size, cfg.search_size);
    let search = render(&shape, cfg.search_size, cfg.search_size, &mut rng);

    let t = cfg.template_size;
    let centered = Shape { cx: t as f64 / 2.0, cy: t as f64 / 2.0, ..shape };
    let template = render(&centered, t, t, &mut rng);

    Scene { template, search, gt, scene_id, shape }
}

/// Reflects `x` into `[lo, hi]`.
fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    while x < lo || x > hi {
        if x < lo {
            x = 2.0 * lo - x;
        } else {
            x = 2.0 * hi - x;
        }
    }
    x
}

/// Generates an evaluation sequence whose frame 0 equals
/// [`generate_scene`] for the same `(seed, seq_id)`.
pub fn generate_sequence(seed: u64, seq_id: u64, cfg: &SceneConfig) -> Sequence {
    cfg.check();
    let scene = generate_scene(seed, seq_id, cfg);
    let mut frames = Vec::with_capacity(cfg.seq_len);
    let mut shape = scene.shape;
    frames.push(Frame { search: scene.search, gt: scene.gt, shape });

    let size = cfg.search_size as f64;
    let (lo, hi) = (CENTER_MARGIN, size - CENTER_MARGIN);
    let mut rng = SplitMix64::keyed(seed ^ MOTION_SALT, seq_id);
    for _ in 1..cfg.seq_len {
        let dx = rng.uniform(-STEP_MAX, STEP_MAX);
        let dy = rng.uniform(-STEP_MAX, STEP_MAX);
        let scale = rng.uniform(SCALE_DRIFT.0, SCALE_DRIFT.1);
        let drot = rng.uniform(-ROT_DRIFT, ROT_DRIFT);
        shape.cx = reflect(shape.cx + dx, lo, hi);
        shape.cy = reflect(shape.cy + dy, lo, hi);
        shape.half_w = (shape.half_w * scale).clamp(SHAPE_HALF_MIN, SHAPE_HALF_MAX);
        shape.half_h = (shape.half_h * scale).clamp(SHAPE_HALF_MIN, SHAPE_HALF_MAX);
        shape.rot = (shape.rot + drot).rem_euclid(std::f64::consts::PI);

        let search = render(&shape, cfg.search_size, cfg.search_size, &mut rng);
        let gt = shape
            .support_box(cfg.search_size, cfg.search_size)
            .expect("moving shape keeps support");
        frames.push(Frame { search, gt, shape });
    }
    Sequence { seq_id, template: scene.template, frames }
}

// ── Tests ───────────────────────────────────────────────────────────────────
