//! Training loop: scenes stream in deterministically, every scene builds
//! its losses on a fresh tape, gradients are batch-averaged, clipped at a
//! global norm of 10, and applied with AdamW (decoupled weight decay).
//!
//! Wiring per scene: the init stage is always supervised at the bin whose
//! center is nearest the ground truth; the refine stage is labeled by the
//! configured assigner (with the leading flag labeling it from init-stage
//! boxes); classification targets come from the refine assignment; the
//! concordance penalty sees the refine assignment's sampled bins.
//!
//! Scene ids are `epoch_index · scenes_per_epoch + position`, so no id
//! repeats within a run. The learning rate drops by the configured factor
//! from the epoch at 80% of the schedule onward (1-based, ceiling).
//!
//! Every [`MetricsRecord`] is a pure function of `(config, seed)`; the
//! `wall_time_s` column is pinned to zero so emitted files are byte-stable,
//! and real timings go to stderr only.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assigner::{assign_one_to_one_center, leading_labels, AssignStrategy, AssignerConfig};
use crate::geometry::{bbox_const, iou, iou_rows};
use crate::loss::{
    build_target_map, corr_loss, focal_loss, stage_giou_loss, total_loss, LossWeights, SampleMode,
};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    boxes_from_rows, forward, init_parameters, params_to_tape, ModelConfig, Parameters,
};
use crate::scenes::{generate_scene, Scene, SceneConfig};
use crate::tape::{Tape, Tensor};
use crate::{Error, Result};

/// Gradient global-norm ceiling applied before every optimizer step.
pub const GRAD_CLIP_NORM: f64 = 10.0;

/// Header of the per-epoch CSV emitted by the experiment commands.
pub const METRICS_CSV_HEADER: &str =
    "epoch,mean_train_iou,loss_cls,loss_init,loss_refine,loss_corr,loss_total,positives_per_scene,wall_time_s";

// ── Configuration ───────────────────────────────────────────────────────────

/// Everything one training run depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub scenes_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_factor: f64,
    pub weight_decay: f64,
    pub assigner: AssignerConfig,
    pub loss_weights: LossWeights,
    pub model: ModelConfig,
    pub sample_mode: SampleMode,
    pub truncate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            epochs: 30,
            scenes_per_epoch: 1000,
            batch_size: 32,
            lr: 1e-3,
            lr_drop_factor: 0.1,
            weight_decay: 1e-4,
            assigner: AssignerConfig::default(),
            loss_weights: LossWeights::default(),
            model: ModelConfig::default(),
            sample_mode: SampleMode::Pos,
            truncate: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate();
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.scenes_per_epoch {
            return Err(Error::Config(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.scenes_per_epoch
            )));
        }
        Ok(())
    }

    /// Scene canvas matching the model's input sizes.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            search_size: self.model.search_size,
            template_size: self.model.template_size,
            ..SceneConfig::default()
        }
    }

    /// First 1-based epoch that runs at the dropped learning rate.
    pub fn lr_drop_epoch(&self) -> usize {
        ((0.8 * self.epochs as f64).ceil() as usize).max(1)
    }

    fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_drop_epoch() {
            self.lr * self.lr_drop_factor
        } else {
            self.lr
        }
    }
}

// ── Optimizer ───────────────────────────────────────────────────────────────

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over every named gradient:
    /// `w ← w − lr·(m̂/(√v̂ + ε)) − lr·wd·w` with bias-corrected moments.
    pub fn apply(&mut self, params: &mut Parameters, grads: &BTreeMap<String, Tensor>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let w = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(w.shape().to_vec()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(w.shape().to_vec()));
            let wd = w.data_mut();
            let gd = g.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..wd.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                wd[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps))
                    + self.lr * self.weight_decay * wd[i];
            }
        }
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|t| t.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.values_mut() {
            for g in t.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

// ── Per-batch training ──────────────────────────────────────────────────────

/// Per-batch loss statistics, all means over the batch's scenes.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub scenes: usize,
    pub cls: f64,
    pub init: f64,
    pub refine: f64,
    pub corr: f64,
    pub total: f64,
    /// IoU of the refine box at the arg-max-score bin against the GT.
    pub argmax_iou: f64,
    pub positives: f64,
}

struct SceneGrads {
    grads: BTreeMap<String, Tensor>,
    cls: f64,
    init: f64,
    refine: f64,
    corr: f64,
    total: f64,
    argmax_iou: f64,
    positives: f64,
}

fn scene_backward(scene: &Scene, params: &Parameters, cfg: &RunConfig) -> Result<SceneGrads> {
    let tape = Tape::new();
    let p = params_to_tape(&tape, params);
    let out = forward(&tape, &p, &scene.template, &scene.search, &cfg.model);
    let grid = cfg.model.grid_spec();

    let init_assign = assign_one_to_one_center(&scene.gt, &grid)?;
    let refine_assign = if cfg.assigner.strategy == AssignStrategy::OneToOneCenter {
        init_assign.clone()
    } else {
        let init_boxes = boxes_from_rows(&out.init_boxes.tensor());
        let refine_boxes = boxes_from_rows(&out.refine_boxes.tensor());
        leading_labels(&init_boxes, &refine_boxes, &scene.gt, &grid, &cfg.assigner)?
    };

    let target = build_target_map(&refine_assign, &scene.gt, &grid);
    let l_cls = focal_loss(&out.scores, &target, &cfg.loss_weights);
    let l_init = stage_giou_loss(&out.init_boxes, &scene.gt, &init_assign.positives);
    let l_refine = stage_giou_loss(&out.refine_boxes, &scene.gt, &refine_assign.positives);
    let gt_row = bbox_const(&tape, &scene.gt);
    let refine_ious = iou_rows(&out.refine_boxes, &gt_row);
    let l_corr = corr_loss(
        &out.scores,
        &refine_ious,
        &refine_assign,
        cfg.sample_mode,
        cfg.truncate,
    );
    let bundle = total_loss(&l_cls, &l_init, &l_refine, &l_corr, &cfg.loss_weights);
    if !bundle.total.item().is_finite() {
        return Err(Error::NonFiniteLoss { scene_id: scene.scene_id });
    }

    let store = bundle.total.backward();
    let grads = p
        .iter()
        .filter_map(|(name, v)| store.get(v).map(|g| (name.clone(), g.clone())))
        .collect();
    let (_, pred) = out.predicted_box();
    Ok(SceneGrads {
        grads,
        cls: bundle.cls.item(),
        init: bundle.init.item(),
        refine: bundle.refine.item(),
        corr: bundle.corr.item(),
        total: bundle.total.item(),
        argmax_iou: iou(&pred, &scene.gt),
        positives: refine_assign.positives.len() as f64,
    })
}

/// One optimizer step over a batch of scenes: per-scene backward passes on
/// fresh tapes, gradients averaged, clipped, then applied. A non-finite op
/// anywhere in a scene's graph aborts with that scene's id.
pub fn train_step(
    batch: &[Scene],
    params: &mut Parameters,
    opt: &mut AdamW,
    cfg: &RunConfig,
) -> Result<StepStats> {
    assert!(!batch.is_empty(), "empty batch");
    let scale = 1.0 / batch.len() as f64;
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut stats = StepStats { scenes: batch.len(), ..StepStats::default() };

    for scene in batch {
        let sg = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            scene_backward(scene, params, cfg)
        }))
        .unwrap_or(Err(Error::NonFiniteLoss { scene_id: scene.scene_id }))?;
        for (name, g) in sg.grads {
            let slot = acc
                .entry(name)
                .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            let sd = slot.data_mut();
            for (s, v) in sd.iter_mut().zip(g.data()) {
                *s += scale * v;
            }
        }
        stats.cls += scale * sg.cls;
        stats.init += scale * sg.init;
        stats.refine += scale * sg.refine;
        stats.corr += scale * sg.corr;
        stats.total += scale * sg.total;
        stats.argmax_iou += scale * sg.argmax_iou;
        stats.positives += scale * sg.positives;
    }

    clip_global_norm(&mut acc, GRAD_CLIP_NORM);
    opt.apply(params, &acc);
    Ok(stats)
}

// ── Experiment loop ─────────────────────────────────────────────────────────

/// One epoch's summary row. `wall_time_s` is always zero in emitted files;
/// real timings go to stderr.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub mean_train_iou: f64,
    pub loss_cls: f64,
    pub loss_init: f64,
    pub loss_refine: f64,
    pub loss_corr: f64,
    pub loss_total: f64,
    pub positives_per_scene: f64,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    /// CSV row matching [`METRICS_CSV_HEADER`], floats in scientific
    /// notation with nine significant digits.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            self.epoch,
            self.mean_train_iou,
            self.loss_cls,
            self.loss_init,
            self.loss_refine,
            self.loss_corr,
            self.loss_total,
            self.positives_per_scene,
            self.wall_time_s
        )
    }
}

/// Trains from scratch, returning the final parameters and one record per
/// epoch. Identical `(cfg, seed)` produce bitwise-identical records.
pub fn run_experiment(cfg: &RunConfig) -> Result<(Parameters, Vec<MetricsRecord>)> {
    cfg.validate()?;
    let mut params = init_parameters(&cfg.model, cfg.seed);
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let scene_cfg = cfg.scene_config();
    let mut records = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        opt.lr = cfg.lr_for_epoch(epoch);
        let epoch_started = Instant::now();
        let mut sums = StepStats::default();
        let base = (epoch - 1) as u64 * cfg.scenes_per_epoch as u64;
        let mut pos = 0usize;
        while pos < cfg.scenes_per_epoch {
            let take = cfg.batch_size.min(cfg.scenes_per_epoch - pos);
            let batch: Vec<Scene> = (0..take)
                .map(|i| generate_scene(cfg.seed, base + (pos + i) as u64, &scene_cfg))
                .collect();
            let stats = train_step(&batch, &mut params, &mut opt, cfg)?;
            let w = stats.scenes as f64;
            sums.cls += stats.cls * w;
            sums.init += stats.init * w;
            sums.refine += stats.refine * w;
            sums.corr += stats.corr * w;
            sums.total += stats.total * w;
            sums.argmax_iou += stats.argmax_iou * w;
            sums.positives += stats.positives * w;
            pos += take;
        }
        let n = cfg.scenes_per_epoch as f64;
        let record = MetricsRecord {
            epoch,
            mean_train_iou: sums.argmax_iou / n,
            loss_cls: sums.cls / n,
            loss_init: sums.init / n,
            loss_refine: sums.refine / n,
            loss_corr: sums.corr / n,
            loss_total: sums.total / n,
            positives_per_scene: sums.positives / n,
            wall_time_s: 0.0,
        };
        eprintln!(
            "epoch {:>3}/{}: total {:.4} iou {:.4} positives {:.2} lr {:.1e} ({:.1}s, {:.1}s elapsed)",
            epoch,
            cfg.epochs,
            record.loss_total,
            record.mean_train_iou,
            record.positives_per_scene,
            opt.lr,
            epoch_started.elapsed().as_secs_f64(),
            started.elapsed().as_secs_f64(),
        );
        records.push(record);
    }
    Ok((params, records))
}

/// First 1-based epoch whose mean train IoU reaches `threshold`.
pub fn epochs_to_iou(records: &[MetricsRecord], threshold: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.mean_train_iou >= threshold)
        .map(|r| r.epoch)
}

// ── Ablation ────────────────────────────────────────────────────────────────

/// One ablation table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub final_train_iou: f64,
    pub epochs_to_half_iou: Option<usize>,
    pub ao: f64,
    pub final_total_loss: f64,
}

/// A fully trained and evaluated ablation variant.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub row: AblationRow,
    pub params: Parameters,
    pub records: Vec<MetricsRecord>,
    pub report: EvalReport,
}

/// Runs every named variant on the identical seed/scene stream and
/// evaluates each on the same held-out sequences.
pub fn run_ablation(
    variants: &[(String, RunConfig)],
    eval_sequences: usize,
) -> Result<Vec<VariantOutcome>> {
    assert!(!variants.is_empty(), "no ablation variants");
    let mut outcomes = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        eprintln!("── variant {name} ──");
        let (params, records) = run_experiment(cfg)?;
        let report = evaluate(
            &params,
            &cfg.model,
            &cfg.scene_config(),
            eval_sequences,
            cfg.seed,
        );
        let last = records.last().expect("at least one epoch");
        outcomes.push(VariantOutcome {
            row: AblationRow {
                variant: name.clone(),
                final_train_iou: last.mean_train_iou,
                epochs_to_half_iou: epochs_to_iou(&records, 0.5),
                ao: report.ao,
                final_total_loss: last.loss_total,
            },
            params,
            records,
            report,
        });
    }
    Ok(outcomes)
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assigner::AssignStrategy;

    /// Default-size canvases with a slim model: quick to train in tests.
    fn slim_cfg() -> RunConfig {
        RunConfig {
            model: ModelConfig {
                feature_dim: 8,
                n_points: 5,
                hidden_dim: 16,
                ..ModelConfig::default()
            },
            scenes_per_epoch: 8,
            batch_size: 4,
            epochs: 2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn adamw_matches_the_closed_form_single_step() {
        // f(w) = w² at w=1: g=2, m=0.2, v=0.004, m̂=2, v̂=4;
        // update = lr·2/(2+ε) + lr·wd·1.
        let mut params = Parameters::new();
        params.insert("w".into(), Tensor::from_vec(vec![1], vec![1.0]));
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::from_vec(vec![1], vec![2.0]));
        let (lr, wd) = (0.1, 0.01);
        let mut opt = AdamW::new(lr, wd);
        opt.apply(&mut params, &grads);
        let want = 1.0 - lr * (2.0 / (2.0 + 1e-8)) - lr * wd * 1.0;
        assert!((params["w"].data()[0] - want).abs() < 1e-12);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn adamw_second_step_tracks_hand_rolled_moments() {
        let mut params = Parameters::new();
        params.insert("w".into(), Tensor::from_vec(vec![1], vec![0.5]));
        let mut opt = AdamW::new(0.05, 0.0);
        let g1 = 1.2;
        let g2 = -0.4;

        let mut w = 0.5;
        let (mut m, mut v) = (0.0, 0.0);
        for (t, g) in [(1, g1), (2, g2)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            w -= 0.05 * (m_hat / (v_hat.sqrt() + 1e-8));
        }

        for g in [g1, g2] {
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), Tensor::from_vec(vec![1], vec![g]));
            opt.apply(&mut params, &grads);
        }
        assert!((params["w"].data()[0] - w).abs() < 1e-15);
    }

    #[test]
    fn clipping_rescales_only_above_the_ceiling() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Tensor::from_vec(vec![2], vec![3.0, 4.0]));
        let norm = clip_global_norm(&mut grads, 10.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads["a"].data(), &[3.0, 4.0]);

        grads.insert("b".to_string(), Tensor::from_vec(vec![1], vec![24.0]));
        // Joint norm √(9+16+576) = √601 ≈ 24.52 > 10: rescaled to norm 10.
        let norm = clip_global_norm(&mut grads, 10.0);
        assert!((norm - 601f64.sqrt()).abs() < 1e-12);
        let total: f64 = grads
            .values()
            .flat_map(|t| t.data().iter())
            .map(|g| g * g)
            .sum();
        assert!((total.sqrt() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let cfg = RunConfig { lr: 0.0, ..slim_cfg() };
        let mut params = init_parameters(&cfg.model, cfg.seed);
        let snapshot = params.clone();
        let mut opt = AdamW::new(0.0, cfg.weight_decay);
        let batch: Vec<Scene> = (0..2)
            .map(|i| generate_scene(cfg.seed, i, &cfg.scene_config()))
            .collect();
        train_step(&batch, &mut params, &mut opt, &cfg).unwrap();
        assert_eq!(params, snapshot);
    }

    #[test]
    fn training_reduces_loss_on_a_repeated_scene() {
        // One positive bin throughout (stable loss normalization) and a
        // step size large enough to overfit one scene in 50 steps.
        let cfg = RunConfig {
            assigner: AssignerConfig::for_strategy(AssignStrategy::OneToOneCenter),
            lr: 1e-2,
            ..slim_cfg()
        };
        let scene = generate_scene(cfg.seed, 0, &cfg.scene_config());
        let mut params = init_parameters(&cfg.model, cfg.seed);
        let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..50 {
            let stats =
                train_step(std::slice::from_ref(&scene), &mut params, &mut opt, &cfg).unwrap();
            first.get_or_insert(stats.total);
            last = stats.total;
        }
        let first = first.unwrap();
        assert!(last < 0.5 * first, "loss went {first} -> {last}");
    }

    #[test]
    fn run_is_deterministic_and_scene_stream_never_repeats() {
        let cfg = slim_cfg();
        let (pa, ra) = run_experiment(&cfg).unwrap();
        let (pb, rb) = run_experiment(&cfg).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(ra, rb);
        assert_eq!(ra.len(), cfg.epochs);
        for r in &ra {
            assert!((0.0..=1.0).contains(&r.mean_train_iou));
            assert_eq!(r.wall_time_s, 0.0);
        }
        // Scene ids across the whole run: epoch·N + index, all distinct.
        let ids: Vec<u64> = (0..cfg.epochs as u64)
            .flat_map(|e| {
                (0..cfg.scenes_per_epoch as u64).map(move |i| e * cfg.scenes_per_epoch as u64 + i)
            })
            .collect();
        let unique: std::collections::BTreeSet<u64> = ids.iter().cloned().collect();
        assert_eq!(unique.len(), ids.len());
    }

    #[test]
    fn assigner_choice_changes_the_run() {
        let base = slim_cfg();
        let one2one = RunConfig {
            assigner: AssignerConfig::for_strategy(AssignStrategy::OneToOneCenter),
            ..base
        };
        let (_, ra) = run_experiment(&base).unwrap();
        let (_, rb) = run_experiment(&one2one).unwrap();
        assert_ne!(ra[0].positives_per_scene, rb[0].positives_per_scene);
        assert_eq!(rb[0].positives_per_scene, 1.0);
    }

    #[test]
    fn lr_schedule_drops_at_eighty_percent() {
        let cfg = RunConfig { epochs: 30, ..RunConfig::default() };
        assert_eq!(cfg.lr_drop_epoch(), 24);
        assert_eq!(cfg.lr_for_epoch(23), 1e-3);
        assert!((cfg.lr_for_epoch(24) - 1e-4).abs() < 1e-18);
        let five = RunConfig { epochs: 5, ..RunConfig::default() };
        assert_eq!(five.lr_drop_epoch(), 4);
    }

    #[test]
    fn csv_rows_pin_the_number_format() {
        let r = MetricsRecord {
            epoch: 3,
            mean_train_iou: 0.5,
            loss_cls: 0.123456789,
            loss_init: 1.0,
            loss_refine: 2.0,
            loss_corr: 0.25,
            loss_total: 5.0,
            positives_per_scene: 4.0,
            wall_time_s: 0.0,
        };
        assert_eq!(
            r.to_csv_row(),
            "3,5.00000000e-1,1.23456789e-1,1.00000000e0,2.00000000e0,2.50000000e-1,5.00000000e0,4.00000000e0,0.00000000e0"
        );
        assert_eq!(METRICS_CSV_HEADER.split(',').count(), 9);
    }

    #[test]
    fn epochs_to_iou_finds_the_first_crossing() {
        let mk = |epoch, iou| MetricsRecord {
            epoch,
            mean_train_iou: iou,
            loss_cls: 0.0,
            loss_init: 0.0,
            loss_refine: 0.0,
            loss_corr: 0.0,
            loss_total: 0.0,
            positives_per_scene: 1.0,
            wall_time_s: 0.0,
        };
        let records = vec![mk(1, 0.1), mk(2, 0.4), mk(3, 0.52), mk(4, 0.49)];
        assert_eq!(epochs_to_iou(&records, 0.5), Some(3));
        assert_eq!(epochs_to_iou(&records, 0.9), None);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg = RunConfig { epochs: 0, ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig { batch_size: 2000, scenes_per_epoch: 100, ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
