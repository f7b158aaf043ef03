//! The trainable network: a small template/search fusion encoder over
//! non-overlapping patches, a per-bin classification head, and a two-stage
//! point head that emits `n` sample points per bin, converts them to pseudo
//! boxes, then refines the points from features bilinearly sampled at their
//! own locations.
//!
//! Layer map (weights are `[in, out]`, biases `[1, out]`):
//!
//! | name                 | shape            | role                        |
//! |----------------------|------------------|-----------------------------|
//! | `patch_embed.w/.b`   | `[stride², F]`   | search patches → features   |
//! | `template_embed.w/.b`| `[stride², F]`   | pooled template → one vector|
//! | `cls.w1/.b1/.w2/.b2` | `[F,H]`,`[H,1]`  | per-bin score logit         |
//! | `init.*`             | `[F,H]`,`[H,2n]` | first-stage point offsets   |
//! | `refine.*`           | `[nF,H]`,`[H,2n]`| residuals from sampled feats|
//! | `moment.log_lambda`  | `[1, 2]`         | log of the moment multipliers|
//!
//! Offsets are in grid-cell units and scaled by the stride; the refine
//! stage adds `stride·residual` to the init points. Initialization draws
//! weights uniformly in `±√(1/fan_in)` from a seeded stream in the fixed
//! order above (biases and the log multipliers start at zero and draw
//! nothing); both offset output layers are scaled by 0.01 so early boxes
//! hug their bin centers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assigner::GridSpec;
use crate::geometry::{clamp_box_rows, convert_minmax_rows, convert_moment_rows, BBox};
use crate::rng::SplitMix64;
use crate::scenes::Image;
use crate::tape::{concat_cols, Tape, Tensor, Value};
use crate::Result;

/// Pseudo-box converter selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Converter {
    MinMax,
    Moment,
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub search_size: usize,
    pub template_size: usize,
    pub stride: usize,
    pub feature_dim: usize,
    pub n_points: usize,
    pub hidden_dim: usize,
    pub converter: Converter,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            search_size: 64,
            template_size: 32,
            stride: 4,
            feature_dim: 32,
            n_points: 9,
            hidden_dim: 64,
            converter: Converter::MinMax,
        }
    }
}

impl ModelConfig {
    /// Score-map side length.
    pub fn grid(&self) -> usize {
        self.search_size / self.stride
    }

    /// Bins in the score map.
    pub fn bins(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid(), self.grid(), self.stride as f64)
    }

    pub fn validate(&self) {
        assert!(self.stride > 0 && self.search_size % self.stride == 0,
            "search size {} not divisible by stride {}", self.search_size, self.stride);
        assert!(self.template_size % self.stride == 0,
            "template size {} not divisible by stride {}", self.template_size, self.stride);
        assert!(self.grid() >= 2, "grid must be at least 2x2");
        assert!(self.n_points >= 2, "need at least two sample points");
        assert!(self.feature_dim > 0 && self.hidden_dim > 0, "empty layer");
    }
}

/// Plain named parameter tensors, ordered by name.
pub type Parameters = BTreeMap<String, Tensor>;

/// Tape-inserted parameters for one forward/backward pass.
pub type TapeParams = BTreeMap<String, Value>;

// ── Initialization ──────────────────────────────────────────────────────────

fn draw_weight(rng: &mut SplitMix64, rows: usize, cols: usize, out_scale: f64) -> Tensor {
    let bound = (1.0 / rows as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| out_scale * rng.uniform(-bound, bound))
        .collect();
    Tensor::from_vec(vec![rows, cols], data)
}

/// Seeded parameter construction. The draw order is fixed (see module
/// docs); identical `(cfg, seed)` give bitwise-identical parameters.
pub fn init_parameters(cfg: &ModelConfig, seed: u64) -> Parameters {
    cfg.validate();
    let mut rng = SplitMix64::keyed(seed, 0x707a_7261_6d73);
    let (p, f, h, n2) = (
        cfg.stride * cfg.stride,
        cfg.feature_dim,
        cfg.hidden_dim,
        2 * cfg.n_points,
    );
    let mut params = Parameters::new();
    let put = |m: &mut Parameters, name: &str, t: Tensor| {
        m.insert(name.to_string(), t);
    };
    put(&mut params, "patch_embed.w", draw_weight(&mut rng, p, f, 1.0));
    put(&mut params, "patch_embed.b", Tensor::zeros(vec![1, f]));
    put(&mut params, "template_embed.w", draw_weight(&mut rng, p, f, 1.0));
    put(&mut params, "template_embed.b", Tensor::zeros(vec![1, f]));
    put(&mut params, "cls.w1", draw_weight(&mut rng, f, h, 1.0));
    put(&mut params, "cls.b1", Tensor::zeros(vec![1, h]));
    put(&mut params, "cls.w2", draw_weight(&mut rng, h, 1, 1.0));
    put(&mut params, "cls.b2", Tensor::zeros(vec![1, 1]));
    put(&mut params, "init.w1", draw_weight(&mut rng, f, h, 1.0));
    put(&mut params, "init.b1", Tensor::zeros(vec![1, h]));
    put(&mut params, "init.w2", draw_weight(&mut rng, h, n2, 0.01));
    put(&mut params, "init.b2", Tensor::zeros(vec![1, n2]));
    put(&mut params, "refine.w1", draw_weight(&mut rng, cfg.n_points * f, h, 1.0));
    put(&mut params, "refine.b1", Tensor::zeros(vec![1, h]));
    put(&mut params, "refine.w2", draw_weight(&mut rng, h, n2, 0.01));
    put(&mut params, "refine.b2", Tensor::zeros(vec![1, n2]));
    put(&mut params, "moment.log_lambda", Tensor::zeros(vec![1, 2]));
    params
}

/// Inserts every parameter into a tape as a gradient-tracked leaf, in name
/// order.
pub fn params_to_tape(tape: &Tape, params: &Parameters) -> TapeParams {
    params
        .iter()
        .map(|(name, t)| (name.clone(), tape.param(t.clone())))
        .collect()
}

fn get<'a>(p: &'a TapeParams, name: &str) -> &'a Value {
    p.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))
}

// ── Encoder ─────────────────────────────────────────────────────────────────

/// Row-major `[bins, stride²]` matrix of non-overlapping image patches.
fn patch_matrix(img: &Image, stride: usize) -> Tensor {
    let g = img.w / stride;
    let gy = img.h / stride;
    let mut data = Vec::with_capacity(g * gy * stride * stride);
    for by in 0..gy {
        for bx in 0..g {
            for r in 0..stride {
                for c in 0..stride {
                    data.push(img.get(bx * stride + c, by * stride + r));
                }
            }
        }
    }
    Tensor::from_vec(vec![g * gy, stride * stride], data)
}

/// Mean over all template patches: one `[1, stride²]` pooled patch.
fn pooled_template(img: &Image, stride: usize) -> Tensor {
    let m = patch_matrix(img, stride);
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mut pooled = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            pooled[c] += m.data()[r * cols + c];
        }
    }
    for v in pooled.iter_mut() {
        *v /= rows as f64;
    }
    Tensor::from_vec(vec![1, cols], pooled)
}

/// Template-conditioned per-bin features: search patches are embedded
/// linearly, the pooled template becomes one global vector `t`, and each
/// bin's fused feature is `relu(s + s⊙t)`. Output `[bins, F]`.
pub fn encode(tape: &Tape, p: &TapeParams, template: &Image, search: &Image, cfg: &ModelConfig) -> Value {
    cfg.validate();
    assert_eq!(
        (search.w, search.h),
        (cfg.search_size, cfg.search_size),
        "search image size mismatch"
    );
    assert_eq!(
        (template.w, template.h),
        (cfg.template_size, cfg.template_size),
        "template image size mismatch"
    );
    let patches = tape.constant(patch_matrix(search, cfg.stride));
    let s = patches
        .matmul(get(p, "patch_embed.w"))
        .add(get(p, "patch_embed.b"));
    let pooled = tape.constant(pooled_template(template, cfg.stride));
    let t = pooled
        .matmul(get(p, "template_embed.w"))
        .add(get(p, "template_embed.b"));
    s.add(&s.mul(&t)).relu()
}

// ── Heads ───────────────────────────────────────────────────────────────────

fn mlp2(x: &Value, p: &TapeParams, prefix: &str) -> Value {
    x.matmul(get(p, &format!("{prefix}.w1")))
        .add(get(p, &format!("{prefix}.b1")))
        .relu()
        .matmul(get(p, &format!("{prefix}.w2")))
        .add(get(p, &format!("{prefix}.b2")))
}

/// Per-bin sigmoid scores `[bins, 1]`, logits clamped to ±15.
pub fn classify(fg: &Value, p: &TapeParams) -> Value {
    mlp2(fg, p, "cls").clamp(-15.0, 15.0).sigmoid()
}

fn bin_center_columns(tape: &Tape, grid: &GridSpec) -> (Value, Value) {
    let mut cx = Vec::with_capacity(grid.bins());
    let mut cy = Vec::with_capacity(grid.bins());
    for idx in 0..grid.bins() {
        let (x, y) = grid.center_of(idx);
        cx.push(x);
        cy.push(y);
    }
    (
        tape.constant(Tensor::from_vec(vec![grid.bins(), 1], cx)),
        tape.constant(Tensor::from_vec(vec![grid.bins(), 1], cy)),
    )
}

fn convert(xs: &Value, ys: &Value, p: &TapeParams, cfg: &ModelConfig) -> Value {
    let boxes = match cfg.converter {
        Converter::MinMax => convert_minmax_rows(xs, ys),
        Converter::Moment => {
            let lambdas = get(p, "moment.log_lambda").exp();
            convert_moment_rows(xs, ys, &lambdas)
        }
    };
    let s = cfg.search_size as f64;
    clamp_box_rows(&boxes, &BBox::new(0.0, 0.0, s, s))
}

/// First-stage points: per bin an MLP over the bin feature emits `2n`
/// offsets (x block then y block, grid-cell units); point k sits at
/// `bin_center + stride·offset_k`. Returns `(offsets, xs, ys, boxes)`.
pub fn init_stage(
    fg: &Value,
    p: &TapeParams,
    cfg: &ModelConfig,
) -> (Value, Value, Value, Value) {
    let n = cfg.n_points;
    let offsets = mlp2(fg, p, "init");
    let grid = cfg.grid_spec();
    let (cx, cy) = bin_center_columns(&fg.tape(), &grid);
    let stride = cfg.stride as f64;
    let xs = offsets.slice_cols(0, n).scale(stride).add(&cx);
    let ys = offsets.slice_cols(n, n).scale(stride).add(&cy);
    let boxes = convert(&xs, &ys, p, cfg);
    (offsets, xs, ys, boxes)
}

/// Bilinear feature sampling at each point, concatenated per bin to
/// `[bins, n·F]`. Point coordinates map to grid space as
/// `pixel/stride − 0.5`, clamped to `[0, grid−1]`; gradients flow to both
/// the features and the point coordinates (the interpolation cell is
/// treated as fixed).
pub fn sample_point_features(fg: &Value, xs: &Value, ys: &Value, cfg: &ModelConfig) -> Value {
    let g = cfg.grid();
    let hw = cfg.bins();
    let n = cfg.n_points;
    assert_eq!(xs.shape(), &[hw, n], "xs shape {:?}", xs.shape());
    assert_eq!(ys.shape(), &[hw, n], "ys shape {:?}", ys.shape());
    let tape = fg.tape();
    let stride = cfg.stride as f64;
    let gmax = (g - 1) as f64;

    let gx = xs.scale(1.0 / stride).add_scalar(-0.5).clamp(0.0, gmax);
    let gy = ys.scale(1.0 / stride).add_scalar(-0.5).clamp(0.0, gmax);
    let gx_now = gx.tensor();
    let gy_now = gy.tensor();

    let mut parts = Vec::with_capacity(n);
    for k in 0..n {
        let mut i00 = Vec::with_capacity(hw);
        let mut i10 = Vec::with_capacity(hw);
        let mut i01 = Vec::with_capacity(hw);
        let mut i11 = Vec::with_capacity(hw);
        let mut x0v = Vec::with_capacity(hw);
        let mut y0v = Vec::with_capacity(hw);
        for b in 0..hw {
            let x0 = (gx_now.data()[b * n + k].floor() as usize).min(g - 2);
            let y0 = (gy_now.data()[b * n + k].floor() as usize).min(g - 2);
            i00.push(y0 * g + x0);
            i10.push(y0 * g + x0 + 1);
            i01.push((y0 + 1) * g + x0);
            i11.push((y0 + 1) * g + x0 + 1);
            x0v.push(x0 as f64);
            y0v.push(y0 as f64);
        }
        let x0c = tape.constant(Tensor::from_vec(vec![hw, 1], x0v));
        let y0c = tape.constant(Tensor::from_vec(vec![hw, 1], y0v));
        let fx = gx.slice_cols(k, 1).sub(&x0c);
        let fy = gy.slice_cols(k, 1).sub(&y0c);
        let fx1 = fx.affine(-1.0, 1.0);
        let fy1 = fy.affine(-1.0, 1.0);

        let sampled = fg
            .gather_rows(&i00)
            .mul(&fx1.mul(&fy1))
            .add(&fg.gather_rows(&i10).mul(&fx.mul(&fy1)))
            .add(&fg.gather_rows(&i01).mul(&fx1.mul(&fy)))
            .add(&fg.gather_rows(&i11).mul(&fx.mul(&fy)));
        parts.push(sampled);
    }
    let refs: Vec<&Value> = parts.iter().collect();
    concat_cols(&refs)
}

/// Second-stage points: an MLP over the features sampled at the init
/// points emits `2n` residuals; refine point k is
/// `init point k + stride·residual_k`. Returns `(residuals, xs, ys, boxes)`.
pub fn refine_stage(
    fg: &Value,
    init_xs: &Value,
    init_ys: &Value,
    p: &TapeParams,
    cfg: &ModelConfig,
) -> (Value, Value, Value, Value) {
    let n = cfg.n_points;
    let sampled = sample_point_features(fg, init_xs, init_ys, cfg);
    let residuals = mlp2(&sampled, p, "refine");
    let stride = cfg.stride as f64;
    let xs = init_xs.add(&residuals.slice_cols(0, n).scale(stride));
    let ys = init_ys.add(&residuals.slice_cols(n, n).scale(stride));
    let boxes = convert(&xs, &ys, p, cfg);
    (residuals, xs, ys, boxes)
}

// ── Full forward ────────────────────────────────────────────────────────────

/// Everything one scene's losses and inference need, all tape-carried.
#[derive(Debug, Clone)]
pub struct HeadOutput {
    /// Sigmoid scores `[bins, 1]`.
    pub scores: Value,
    /// Raw init offsets `[bins, 2n]`, grid-cell units.
    pub init_offsets: Value,
    pub init_xs: Value,
    pub init_ys: Value,
    /// Clamped init pseudo boxes `[bins, 4]`.
    pub init_boxes: Value,
    /// Raw refine residuals `[bins, 2n]`, grid-cell units.
    pub refine_residuals: Value,
    pub refine_xs: Value,
    pub refine_ys: Value,
    /// Clamped refine pseudo boxes `[bins, 4]`.
    pub refine_boxes: Value,
}

impl HeadOutput {
    /// First arg-max-score bin.
    pub fn argmax_bin(&self) -> usize {
        let data = self.scores.tensor();
        let mut best = 0usize;
        for (i, &v) in data.data().iter().enumerate() {
            if v > data.data()[best] {
                best = i;
            }
        }
        best
    }

    /// Plain box from one row of the refine-box matrix.
    pub fn refine_box_at(&self, bin: usize) -> BBox {
        let t = self.refine_boxes.tensor();
        let d = t.data();
        BBox::new(d[bin * 4], d[bin * 4 + 1], d[bin * 4 + 2], d[bin * 4 + 3])
    }

    /// Inference output: the refine box at the arg-max-score bin.
    pub fn predicted_box(&self) -> (usize, BBox) {
        let bin = self.argmax_bin();
        (bin, self.refine_box_at(bin))
    }
}

/// Full pipeline: encode, classify, init stage, refine stage.
pub fn forward(
    tape: &Tape,
    p: &TapeParams,
    template: &Image,
    search: &Image,
    cfg: &ModelConfig,
) -> HeadOutput {
    let fg = encode(tape, p, template, search, cfg);
    let scores = classify(&fg, p);
    let (init_offsets, init_xs, init_ys, init_boxes) = init_stage(&fg, p, cfg);
    let (refine_residuals, refine_xs, refine_ys, refine_boxes) =
        refine_stage(&fg, &init_xs, &init_ys, p, cfg);
    HeadOutput {
        scores,
        init_offsets,
        init_xs,
        init_ys,
        init_boxes,
        refine_residuals,
        refine_xs,
        refine_ys,
        refine_boxes,
    }
}

/// Reads an `[N, 4]` tensor of corner boxes back into plain values.
pub fn boxes_from_rows(t: &Tensor) -> Vec<BBox> {
    let d = t.data();
    (0..t.shape()[0])
        .map(|r| BBox::new(d[r * 4], d[r * 4 + 1], d[r * 4 + 2], d[r * 4 + 3]))
        .collect()
}

/// Runs one forward pass and returns both stages' pseudo boxes as plain
/// values, which is what the box-driven assigners consume.
pub fn leading_boxes(
    params: &Parameters,
    template: &Image,
    search: &Image,
    cfg: &ModelConfig,
) -> (Vec<BBox>, Vec<BBox>) {
    let tape = Tape::new();
    let p = params_to_tape(&tape, params);
    let out = forward(&tape, &p, template, search, cfg);
    (boxes_from_rows(&out.init_boxes.tensor()), boxes_from_rows(&out.refine_boxes.tensor()))
}

// ── Checkpoints ─────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    seed: u64,
    config: ModelConfig,
    params: BTreeMap<String, TensorRecord>,
}

/// Writes parameters plus the config echo and seed as JSON. The f64 values
/// round-trip bit-exactly through the shortest-representation encoding.
pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, seed: u64, params: &Parameters) -> Result<()> {
    let file = CheckpointFile {
        seed,
        config: *cfg,
        params: params
            .iter()
            .map(|(k, t)| {
                (k.clone(), TensorRecord { shape: t.shape().to_vec(), data: t.data().to_vec() })
            })
            .collect(),
    };
    let out = std::fs::File::create(path)?;
    serde_json::to_writer(std::io::BufWriter::new(out), &file)?;
    Ok(())
}

/// Reads a checkpoint back; exact inverse of [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, u64, Parameters)> {
    let data = std::fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&data)?;
    let params = file
        .params
        .into_iter()
        .map(|(k, r)| (k, Tensor::from_vec(r.shape, r.data)))
        .collect();
    Ok((file.config, file.seed, params))
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{generate_scene, SceneConfig};
    use crate::tape::grad_check;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            search_size: 16,
            template_size: 8,
            stride: 4,
            feature_dim: 4,
            n_points: 3,
            hidden_dim: 8,
            converter: Converter::MinMax,
        }
    }

    fn zero_params(cfg: &ModelConfig) -> Parameters {
        init_parameters(cfg, 0)
            .into_iter()
            .map(|(k, t)| (k, Tensor::zeros(t.shape().to_vec())))
            .collect()
    }

    fn blank_images(cfg: &ModelConfig) -> (Image, Image) {
        (
            Image::new(cfg.template_size, cfg.template_size),
            Image::new(cfg.search_size, cfg.search_size),
        )
    }

    fn default_scene() -> (Image, Image) {
        let s = generate_scene(42, 0, &SceneConfig::default());
        (s.template, s.search)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = ModelConfig::default();
        let a = init_parameters(&cfg, 7);
        let b = init_parameters(&cfg, 7);
        assert_eq!(a, b);
        let c = init_parameters(&cfg, 8);
        assert_ne!(a.get("patch_embed.w"), c.get("patch_embed.w"));
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let cfg = ModelConfig::default();
        let total: usize = init_parameters(&cfg, 1).values().map(|t| t.numel()).sum();
        let (p, f, h, n2) = (16, 32, 64, 18);
        let expect = (p * f + f) * 2          // patch + template embeds
            + (f * h + h) + (h + 1)           // cls
            + (f * h + h) + (h * n2 + n2)     // init
            + (9 * f * h + h) + (h * n2 + n2) // refine
            + 2;                              // moment multipliers
        assert_eq!(total, expect);
    }

    #[test]
    fn offset_output_layers_start_small() {
        let cfg = ModelConfig::default();
        let params = init_parameters(&cfg, 3);
        let bound = 0.01 * (1.0f64 / 64.0).sqrt();
        for name in ["init.w2", "refine.w2"] {
            for &v in params[name].data() {
                assert!(v.abs() <= bound, "{name} entry {v}");
            }
        }
        assert!(params["cls.w2"].data().iter().any(|v| v.abs() > bound));
    }

    #[test]
    fn zero_everything_gives_zero_features_and_half_scores() {
        let cfg = tiny_cfg();
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &zero_params(&cfg));
        let fg = encode(&tape, &p, &template, &search, &cfg);
        assert!(fg.tensor().data().iter().all(|v| *v == 0.0));
        let scores = classify(&fg, &p);
        assert!(scores.tensor().data().iter().all(|v| *v == 0.5));
        assert_eq!(scores.shape(), &[cfg.bins(), 1]);
    }

    #[test]
    fn encoder_is_local_to_the_changed_patch() {
        let cfg = tiny_cfg();
        let params = init_parameters(&cfg, 11);
        let (template, mut search) = blank_images(&cfg);
        for (i, v) in search.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 10.0;
        }
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let base = encode(&tape, &p, &template, &search, &cfg);

        // Poke one pixel inside bin (row 1, col 2) of the 4x4 grid.
        search.set(2 * 4 + 1, 1 * 4 + 2, 0.93);
        let poked = encode(&tape, &p, &template, &search, &cfg);

        let f = cfg.feature_dim;
        for bin in 0..cfg.bins() {
            let same = (0..f).all(|c| {
                base.tensor().data()[bin * f + c] == poked.tensor().data()[bin * f + c]
            });
            assert_eq!(same, bin != 1 * 4 + 2, "bin {bin}");
        }
    }

    #[test]
    fn scores_respect_the_logit_clamp() {
        let cfg = tiny_cfg();
        let mut params = zero_params(&cfg);
        params.insert("cls.b2".into(), Tensor::from_vec(vec![1, 1], vec![1e6]));
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let scores = classify(&encode(&tape, &p, &template, &search, &cfg), &p);
        let ceiling = 1.0 / (1.0 + (-15.0f64).exp());
        for &s in scores.tensor().data() {
            assert!((s - ceiling).abs() < 1e-15, "score {s}");
            assert!(s > 3.05e-7 && s < 1.0 - 3.05e-7);
        }
    }

    #[test]
    fn zero_offsets_put_points_and_boxes_at_bin_centers() {
        let cfg = tiny_cfg();
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &zero_params(&cfg));
        let fg = encode(&tape, &p, &template, &search, &cfg);
        let (_, xs, _, boxes) = init_stage(&fg, &p, &cfg);
        let grid = cfg.grid_spec();
        let xs = xs.tensor();
        let boxes = boxes.tensor();
        for bin in 0..cfg.bins() {
            let (cx, cy) = grid.center_of(bin);
            for k in 0..cfg.n_points {
                assert_eq!(xs.data()[bin * cfg.n_points + k], cx);
            }
            let row = &boxes.data()[bin * 4..bin * 4 + 4];
            assert_eq!(row, &[cx, cy, cx, cy]);
        }
    }

    #[test]
    fn half_cell_offsets_give_the_expected_box() {
        // Offsets ±0.5 in both axes at stride 4: every bin's min-max box is
        // its center ± 2 px; bin (2,2) of the 4x4 grid has center (10,10),
        // so its box is (8,8,12,12).
        let cfg = tiny_cfg();
        let n = cfg.n_points;
        let mut b2 = vec![0.0; 2 * n];
        for k in 0..n {
            let sign = if k % 2 == 0 { -0.5 } else { 0.5 };
            b2[k] = sign;
            b2[n + k] = -sign;
        }
        let mut params = zero_params(&cfg);
        params.insert("init.b2".into(), Tensor::from_vec(vec![1, 2 * n], b2));
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let fg = encode(&tape, &p, &template, &search, &cfg);
        let (_, _, _, boxes) = init_stage(&fg, &p, &cfg);
        let bin = 2 * 4 + 2;
        let boxes = boxes.tensor();
        let row = &boxes.data()[bin * 4..bin * 4 + 4];
        assert_eq!(row, &[8.0, 8.0, 12.0, 12.0]);
    }

    #[test]
    fn neighboring_bins_shift_points_by_exactly_one_stride() {
        let cfg = tiny_cfg();
        let mut params = zero_params(&cfg);
        // Dyadic offsets keep center + stride·offset exact, so the shift
        // between neighboring bins is bitwise one stride.
        params.insert(
            "init.b2".into(),
            Tensor::from_vec(vec![1, 6], vec![0.25, -0.375, 0.125, 0.1875, -0.3125, 0.0625]),
        );
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let fg = encode(&tape, &p, &template, &search, &cfg);
        let (_, xs, ys, _) = init_stage(&fg, &p, &cfg);
        let n = cfg.n_points;
        let x = xs.tensor();
        let y = ys.tensor();
        for k in 0..n {
            // bin 5 == (row 1, col 1); bin 6 is one column right.
            assert_eq!(x.data()[6 * n + k] - x.data()[5 * n + k], 4.0);
            assert_eq!(y.data()[6 * n + k], y.data()[5 * n + k]);
            // bin 9 == (row 2, col 1): one row down.
            assert_eq!(y.data()[9 * n + k] - y.data()[5 * n + k], 4.0);
        }
    }

    #[test]
    fn sampling_at_bin_centers_returns_bin_features() {
        let cfg = tiny_cfg();
        let mut params = init_parameters(&cfg, 13);
        // Zeroed offset output puts every point exactly on its bin center.
        params.insert("init.w2".into(), Tensor::zeros(vec![8, 6]));
        let (template, search) = default_tiny_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let fg = encode(&tape, &p, &template, &search, &cfg);
        let (_, xs, ys, _) = init_stage(&fg, &p, &cfg);
        let sampled = sample_point_features(&fg, &xs, &ys, &cfg);
        let f = cfg.feature_dim;
        let sampled_t = sampled.tensor();
        let fg_t = fg.tensor();
        for bin in 0..cfg.bins() {
            for k in 0..cfg.n_points {
                for c in 0..f {
                    assert_eq!(
                        sampled_t.data()[bin * cfg.n_points * f + k * f + c],
                        fg_t.data()[bin * f + c],
                        "bin {bin} point {k} channel {c}"
                    );
                }
            }
        }
    }

    fn default_tiny_images(cfg: &ModelConfig) -> (Image, Image) {
        let mut template = Image::new(cfg.template_size, cfg.template_size);
        let mut search = Image::new(cfg.search_size, cfg.search_size);
        for (i, v) in template.data.iter_mut().enumerate() {
            *v = ((i * 13) % 97) as f64 / 97.0;
        }
        for (i, v) in search.data.iter_mut().enumerate() {
            *v = ((i * 29) % 83) as f64 / 83.0;
        }
        (template, search)
    }

    #[test]
    fn sampling_midway_between_centers_averages_them() {
        let cfg = tiny_cfg();
        let tape = Tape::new();
        let hw = cfg.bins();
        let f = cfg.feature_dim;
        let fg = tape.param(Tensor::from_vec(
            vec![hw, f],
            (0..hw * f).map(|i| (i as f64 * 0.37).sin()).collect(),
        ));
        // One point per bin, half a stride right of the bin center; use the
        // interior bin (1,1) to stay away from the clamp.
        let cfg1 = ModelConfig { n_points: 2, ..cfg };
        let grid = cfg1.grid_spec();
        let mut xv = Vec::new();
        let mut yv = Vec::new();
        for b in 0..hw {
            let (cx, cy) = grid.center_of(b.min(hw - 2));
            for _ in 0..2 {
                xv.push(cx + 2.0); // +0.5 grid cells
                yv.push(cy);
            }
        }
        let xs = tape.constant(Tensor::from_vec(vec![hw, 2], xv));
        let ys = tape.constant(Tensor::from_vec(vec![hw, 2], yv));
        let sampled = sample_point_features(&fg, &xs, &ys, &cfg1);
        let bin = 1 * 4 + 1;
        for c in 0..f {
            let want = 0.5 * (fg.tensor().data()[bin * f + c] + fg.tensor().data()[(bin + 1) * f + c]);
            let got = sampled.tensor().data()[bin * 2 * f + c];
            assert!((got - want).abs() < 1e-15, "channel {c}: {got} vs {want}");
        }
    }

    #[test]
    fn sampling_gradients_match_finite_differences() {
        let cfg = ModelConfig { n_points: 2, ..tiny_cfg() };
        let hw = cfg.bins();
        let f = cfg.feature_dim;
        let features = Tensor::from_vec(
            vec![hw, f],
            (0..hw * f).map(|i| (i as f64 * 0.61).cos()).collect(),
        );
        // Point coordinates as parameters, placed off integer grid lines so
        // finite differences never cross an interpolation cell.
        let grid = cfg.grid_spec();
        let mut xv = Vec::new();
        let mut yv = Vec::new();
        for b in 0..hw {
            let (cx, cy) = grid.center_of(b);
            xv.push(cx + 1.3);
            xv.push(cx - 0.9);
            yv.push(cy + 0.7);
            yv.push(cy - 1.1);
        }
        let xs = Tensor::from_vec(vec![hw, 2], xv);
        let ys = Tensor::from_vec(vec![hw, 2], yv);
        let report = grad_check(
            |_, p| sample_point_features(&p[0], &p[1], &p[2], &cfg).mean_all(),
            &[features, xs, ys],
            1e-5,
        );
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn zero_refine_layers_keep_init_points() {
        let cfg = tiny_cfg();
        let mut params = init_parameters(&cfg, 17);
        params.insert("refine.w1".into(), Tensor::zeros(vec![cfg.n_points * 4, 8]));
        params.insert("refine.w2".into(), Tensor::zeros(vec![8, 6]));
        let (template, search) = default_tiny_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        assert_eq!(out.init_xs.tensor().data(), out.refine_xs.tensor().data());
        assert_eq!(out.init_ys.tensor().data(), out.refine_ys.tensor().data());
    }

    #[test]
    fn unit_residual_shifts_the_box_by_one_stride() {
        let cfg = tiny_cfg();
        let n = cfg.n_points;
        let mut params = zero_params(&cfg);
        // x residual 1 on every point, y residual 0.
        let mut b2 = vec![0.0; 2 * n];
        for v in b2.iter_mut().take(n) {
            *v = 1.0;
        }
        params.insert("refine.b2".into(), Tensor::from_vec(vec![1, 2 * n], b2));
        // Nonzero init spread so boxes are not degenerate.
        let mut ib = vec![0.0; 2 * n];
        for (k, v) in ib.iter_mut().enumerate() {
            *v = if k % 2 == 0 { -0.25 } else { 0.25 };
        }
        params.insert("init.b2".into(), Tensor::from_vec(vec![1, 2 * n], ib));
        let (template, search) = blank_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        let bin = 1 * 4 + 1; // interior: no clamping on either box
        let init_t = out.init_boxes.tensor();
        let refine_t = out.refine_boxes.tensor();
        let init = &init_t.data()[bin * 4..bin * 4 + 4];
        let refine = &refine_t.data()[bin * 4..bin * 4 + 4];
        assert_eq!(refine[0], init[0] + 4.0);
        assert_eq!(refine[2], init[2] + 4.0);
        assert_eq!(refine[1], init[1]);
        assert_eq!(refine[3], init[3]);
    }

    #[test]
    fn refine_points_are_init_plus_scaled_residuals() {
        let cfg = tiny_cfg();
        let params = init_parameters(&cfg, 19);
        let (template, search) = default_tiny_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        let n = cfg.n_points;
        let res = out.refine_residuals.tensor();
        let ix = out.init_xs.tensor();
        let rx = out.refine_xs.tensor();
        for b in 0..cfg.bins() {
            for k in 0..n {
                let want = ix.data()[b * n + k] + 4.0 * res.data()[b * 2 * n + k];
                let got = rx.data()[b * n + k];
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_boxes_center_on_the_point_centroid() {
        let cfg = ModelConfig { converter: Converter::Moment, ..tiny_cfg() };
        let params = init_parameters(&cfg, 23);
        let (template, search) = default_tiny_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        let n = cfg.n_points;
        let xs_t = out.refine_xs.tensor();
        let boxes_t = out.refine_boxes.tensor();
        for b in 0..cfg.bins() {
            let xs = &xs_t.data()[b * n..(b + 1) * n];
            let centroid = xs.iter().sum::<f64>() / n as f64;
            let row = &boxes_t.data()[b * 4..b * 4 + 4];
            let center = 0.5 * (row[0] + row[2]);
            assert!((center - centroid).abs() < 1e-9, "bin {b}: {center} vs {centroid}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_cfg();
        let params = init_parameters(&cfg, 29);
        let (template, search) = default_tiny_images(&cfg);
        let run = || {
            let tape = Tape::new();
            let p = params_to_tape(&tape, &params);
            let out = forward(&tape, &p, &template, &search, &cfg);
            (
                out.scores.tensor().data().to_vec(),
                out.refine_boxes.tensor().data().to_vec(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn backward_reaches_every_parameter() {
        let cfg = ModelConfig { converter: Converter::Moment, ..tiny_cfg() };
        let params = init_parameters(&cfg, 31);
        let (template, search) = default_tiny_images(&cfg);
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        let loss = out
            .scores
            .sum_all()
            .add(&out.refine_boxes.sum_all())
            .add(&out.init_boxes.sum_all());
        let grads = loss.backward();
        for (name, v) in &p {
            let g = grads.get(v).unwrap_or_else(|| panic!("no gradient for {name}"));
            assert_eq!(g.shape(), v.tensor().shape(), "{name}");
        }
    }

    #[test]
    fn full_default_forward_has_expected_shapes() {
        let cfg = ModelConfig::default();
        let params = init_parameters(&cfg, 42);
        let (template, search) = default_scene();
        let tape = Tape::new();
        let p = params_to_tape(&tape, &params);
        let out = forward(&tape, &p, &template, &search, &cfg);
        assert_eq!(out.scores.shape(), &[256, 1]);
        assert_eq!(out.init_xs.shape(), &[256, 9]);
        assert_eq!(out.refine_boxes.shape(), &[256, 4]);
        let (bin, bbox) = out.predicted_box();
        assert!(bin < 256);
        assert!(bbox.x1 >= 0.0 && bbox.x2 <= 64.0 && bbox.y1 >= 0.0 && bbox.y2 <= 64.0);
        // Small offset init keeps early boxes near their bin centers.
        assert!(bbox.width() < 2.0 && bbox.height() < 2.0);
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly() {
        let cfg = ModelConfig::default();
        let params = init_parameters(&cfg, 37);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        save_checkpoint(&path, &cfg, 37, &params).unwrap();
        let (cfg2, seed2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(seed2, 37);
        assert_eq!(params2, params);
    }
}
