//! Command-line surface binding everything into reproducible runs:
//! `train`, `eval`, `ablate`, `assign`, and `gradcheck`.
//!
//! Exit codes: 0 on success, 2 on usage errors (clap's convention), 1 on
//! runtime errors. Every run echoes its fully resolved config, and every
//! output directory contains a config echo sufficient to reproduce the run.
//! All emitted files are pure functions of config and seed: CSV floats use
//! nine significant digits with `.` decimal, and JSON comes from the same
//! serializer everywhere.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::assigner::{
    AssignStrategy, AssignerConfig, AssignmentResult, BinLabel, GridSpec, Spread,
};
use crate::config::ExperimentConfig;
use crate::engine::{
    epochs_to_iou, run_ablation, run_experiment, MetricsRecord, RunConfig, METRICS_CSV_HEADER,
};
use crate::geometry::{bbox_const, convert_minmax_rows, convert_moment_rows, iou_rows, BBox};
use crate::loss::{
    build_target_map, corr_loss, focal_loss, stage_giou_loss, total_loss, LossWeights, SampleMode,
};
use crate::metrics::{evaluate, success_thresholds, EvalReport};
use crate::model::{
    forward, init_parameters, leading_boxes, load_checkpoint, save_checkpoint, Converter,
    ModelConfig,
};
use crate::rng::SplitMix64;
use crate::scenes::{generate_scene, write_pgm, Image, SceneConfig};
use crate::tape::{grad_check, Tensor};
use crate::{Error, Result};

// ── Argument grammar ────────────────────────────────────────────────────────

#[derive(Debug, Parser)]
#[command(name = "pseudobox", version, about = "Point-set tracking head experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tracking head; writes metrics.csv, summary.json, checkpoint.json.
    Train {
        /// Flat JSON config file; `{}` runs the defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the first training scenes as PGM images plus a JSON
        /// sidecar of ground truth boxes.
        #[arg(long, value_name = "DIR")]
        dump_scenes: Option<PathBuf>,
        /// How many scenes to dump.
        #[arg(long, default_value_t = 8)]
        dump_count: usize,
    },
    /// Track held-out sequences with a checkpoint; writes eval_report.json
    /// and success_curve.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of held-out sequences to score.
        #[arg(long)]
        sequences: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Frames per sequence (frame 0 is the template and is not scored).
        #[arg(long, default_value_t = 32)]
        seq_len: usize,
    },
    /// Train several assigner variants on the identical scene stream and
    /// tabulate convergence and held-out quality.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated variant tokens: one2one, maxiou, cd, iv, each
        /// optionally suffixed with -lead (e.g. "one2one,iv,iv-lead").
        #[arg(long)]
        variants: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one scene's label assignment as JSON.
    Assign {
        /// Strategy: one2one, maxiou, cd, or iv.
        #[arg(long)]
        assigner: String,
        #[arg(long)]
        scene_seed: u64,
        /// Scene index within the seed's stream.
        #[arg(long, default_value_t = 0)]
        scene_id: u64,
        /// Label from init-stage boxes instead of refine-stage boxes.
        #[arg(long)]
        leading: bool,
        /// Candidate count override for the top-k strategies.
        #[arg(long)]
        top_k: Option<usize>,
        /// Dynamic-threshold spread: std or var.
        #[arg(long, default_value = "std")]
        spread: String,
    },
    /// Compare every analytic gradient against central finite differences;
    /// exits nonzero if any check fails.
    Gradcheck,
}

/// Parses argv and dispatches; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { config, out, seed, dump_scenes, dump_count } => {
            cmd_train(&config, &out, seed, dump_scenes.as_deref(), dump_count)
        }
        Command::Eval { checkpoint, sequences, seed, out, seq_len } => {
            cmd_eval(&checkpoint, sequences, seed, &out, seq_len)
        }
        Command::Ablate { config, variants, out } => cmd_ablate(&config, &variants, &out),
        Command::Assign { assigner, scene_seed, scene_id, leading, top_k, spread } => {
            let dump = assignment_dump(&assigner, scene_seed, scene_id, leading, top_k, &spread)?;
            println!("{dump}");
            Ok(())
        }
        Command::Gradcheck => cmd_gradcheck(),
    }
}

// ── Shared writers ──────────────────────────────────────────────────────────

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    seed: u64,
    epochs_to_half_iou: Option<usize>,
    r#final: &'a MetricsRecord,
    config: &'a ExperimentConfig,
}

/// Writes the standard training artifacts into `dir`.
fn write_train_outputs(
    dir: &Path,
    flat: &ExperimentConfig,
    run_cfg: &RunConfig,
    params: &crate::model::Parameters,
    records: &[MetricsRecord],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(records))?;
    save_checkpoint(&dir.join("checkpoint.json"), &run_cfg.model, run_cfg.seed, params)?;
    let summary = SummaryFile {
        seed: run_cfg.seed,
        epochs_to_half_iou: epochs_to_iou(records, 0.5),
        r#final: records.last().expect("at least one epoch"),
        config: flat,
    };
    write_json(&dir.join("summary.json"), &summary)
}

// ── train ───────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct DumpEntry {
    scene_id: u64,
    gt: [f64; 4],
}

fn dump_scene_images(dir: &Path, cfg: &ExperimentConfig, count: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let scene_cfg = cfg.scene_config();
    let mut entries = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let scene = generate_scene(cfg.seed, id, &scene_cfg);
        write_pgm(&scene.search, &dir.join(format!("scene_{id:04}_search.pgm")))?;
        write_pgm(&scene.template, &dir.join(format!("scene_{id:04}_template.pgm")))?;
        entries.push(DumpEntry {
            scene_id: id,
            gt: [scene.gt.x1, scene.gt.y1, scene.gt.x2, scene.gt.y2],
        });
    }
    write_json(&dir.join("scenes.json"), &entries)
}

fn cmd_train(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    dump_scenes: Option<&Path>,
    dump_count: usize,
) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let flat = cfg.resolved();
    println!("{}", serde_json::to_string_pretty(&flat)?);
    if let Some(dir) = dump_scenes {
        dump_scene_images(dir, &cfg, dump_count)?;
    }
    let run_cfg = cfg.run_config();
    let (params, records) = run_experiment(&run_cfg)?;
    write_train_outputs(out, &flat, &run_cfg, &params, &records)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct EvalEcho {
    checkpoint: String,
    sequences: usize,
    seed: u64,
    seq_len: usize,
    model: ModelConfig,
}

#[derive(Serialize)]
struct EvalFile {
    config: EvalEcho,
    #[serde(flatten)]
    report: EvalReport,
}

fn success_curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold,success_rate\n");
    for (t, sr) in success_thresholds().iter().zip(&report.success_curve) {
        let _ = writeln!(out, "{t:.2},{sr:.8e}");
    }
    out
}

fn cmd_eval(checkpoint: &Path, sequences: usize, seed: u64, out: &Path, seq_len: usize) -> Result<()> {
    if sequences == 0 {
        return Err(Error::Config("need at least one evaluation sequence".into()));
    }
    if seq_len < 2 {
        return Err(Error::Config("seq_len must be at least 2 (frame 0 is never scored)".into()));
    }
    let (model_cfg, _, params) = load_checkpoint(checkpoint)?;
    let scene_cfg = SceneConfig {
        search_size: model_cfg.search_size,
        template_size: model_cfg.template_size,
        seq_len,
    };
    let report = evaluate(&params, &model_cfg, &scene_cfg, sequences, seed);
    std::fs::create_dir_all(out)?;
    let file = EvalFile {
        config: EvalEcho {
            checkpoint: checkpoint.display().to_string(),
            sequences,
            seed,
            seq_len,
            model: model_cfg,
        },
        report,
    };
    write_json(&out.join("eval_report.json"), &file)?;
    write_text(&out.join("success_curve.csv"), &success_curve_csv(&file.report))?;
    println!(
        "ao {:.4}  auc {:.4}  sr@0.5 {:.4}  sr@0.75 {:.4}  precision {:.4}  norm {:.4}",
        file.report.ao,
        file.report.success_auc,
        file.report.sr_050,
        file.report.sr_075,
        file.report.precision_20px_equivalent,
        file.report.norm_precision
    );
    println!("wrote {}", out.display());
    Ok(())
}

// ── ablate ──────────────────────────────────────────────────────────────────

fn ablation_csv(rows: &[crate::engine::AblationRow]) -> String {
    let mut out = String::from("variant,final_train_iou,epochs_to_half_iou,ao,final_total_loss\n");
    for r in rows {
        let epochs = r.epochs_to_half_iou.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.8e},{epochs},{:.8e},{:.8e}",
            r.variant, r.final_train_iou, r.ao, r.final_total_loss
        );
    }
    out
}

fn cmd_ablate(config: &Path, variants: &str, out: &Path) -> Result<()> {
    let base = ExperimentConfig::from_file(config)?;
    let tokens: Vec<&str> = variants
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::Config("no ablation variants given".into()));
    }
    let flats: Vec<(String, ExperimentConfig)> = tokens
        .iter()
        .map(|t| Ok((t.to_string(), base.with_variant(t)?)))
        .collect::<Result<_>>()?;
    let named: Vec<(String, RunConfig)> =
        flats.iter().map(|(t, c)| (t.clone(), c.run_config())).collect();

    let outcomes = run_ablation(&named, base.eval_sequences)?;
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(outcomes.len());
    for ((token, flat), outcome) in flats.iter().zip(&outcomes) {
        let run_cfg = flat.run_config();
        write_train_outputs(
            &out.join(token),
            &flat.resolved(),
            &run_cfg,
            &outcome.params,
            &outcome.records,
        )?;
        write_json(&out.join(token).join("eval_report.json"), &outcome.report)?;
        rows.push(outcome.row.clone());
    }
    write_text(&out.join("ablation.csv"), &ablation_csv(&rows))?;
    write_json(&out.join("ablation.json"), &rows)?;

    println!("{:<14} {:>10} {:>12} {:>8} {:>12}", "variant", "final_iou", "epochs->0.5", "ao", "final_loss");
    for r in &rows {
        let epochs = r.epochs_to_half_iou.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:>10.4} {:>12} {:>8.4} {:>12.4}",
            r.variant, r.final_train_iou, epochs, r.ao, r.final_total_loss
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

// ── assign ──────────────────────────────────────────────────────────────────

fn parse_strategy(name: &str) -> Result<AssignStrategy> {
    serde_json::from_str(&format!("\"{name}\"")).map_err(|_| {
        Error::Config(format!("unknown assigner `{name}`; expected one2one, maxiou, cd, or iv"))
    })
}

fn parse_spread(name: &str) -> Result<Spread> {
    serde_json::from_str(&format!("\"{name}\""))
        .map_err(|_| Error::Config(format!("unknown spread `{name}`; expected std or var")))
}

#[derive(Serialize)]
struct AssignDump {
    scene_seed: u64,
    scene_id: u64,
    assigner: AssignStrategy,
    leading: bool,
    top_k: usize,
    spread: Spread,
    grid: GridSpec,
    gt: [f64; 4],
    threshold_used: Option<f64>,
    positives: Vec<usize>,
    labels: Vec<String>,
}

fn label_grid_rows(result: &AssignmentResult, grid: &GridSpec) -> Vec<String> {
    (0..grid.h)
        .map(|r| {
            (0..grid.w)
                .map(|c| match result.labels[r * grid.w + c] {
                    BinLabel::Positive => '+',
                    BinLabel::Negative => '.',
                    BinLabel::Ignore => 'x',
                })
                .collect()
        })
        .collect()
}

/// Labels one synthetic scene with a fresh (untrained) default model and
/// renders the assignment as pretty JSON.
fn assignment_dump(
    assigner: &str,
    scene_seed: u64,
    scene_id: u64,
    leading: bool,
    top_k: Option<usize>,
    spread: &str,
) -> Result<String> {
    let strategy = parse_strategy(assigner)?;
    let spread = parse_spread(spread)?;
    let assigner_cfg = AssignerConfig {
        strategy,
        top_k: top_k.unwrap_or_else(|| AssignerConfig::default_top_k(strategy)),
        leading,
        spread,
        ..AssignerConfig::for_strategy(strategy)
    };
    let model_cfg = ModelConfig::default();
    let scene = generate_scene(scene_seed, scene_id, &SceneConfig::default());
    let params = init_parameters(&model_cfg, scene_seed);
    let grid = model_cfg.grid_spec();
    let (init_boxes, refine_boxes) =
        leading_boxes(&params, &scene.template, &scene.search, &model_cfg);
    let result = crate::assigner::leading_labels(
        &init_boxes,
        &refine_boxes,
        &scene.gt,
        &grid,
        &assigner_cfg,
    )?;
    let dump = AssignDump {
        scene_seed,
        scene_id,
        assigner: strategy,
        leading,
        top_k: assigner_cfg.top_k,
        spread,
        grid,
        gt: [scene.gt.x1, scene.gt.y1, scene.gt.x2, scene.gt.y2],
        threshold_used: result.threshold_used,
        positives: result.positives.clone(),
        labels: label_grid_rows(&result, &grid),
    };
    Ok(serde_json::to_string_pretty(&dump)?)
}

// ── gradcheck ───────────────────────────────────────────────────────────────

/// One finite-difference comparison in the gradient suite.
#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl SuiteCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn hand_assignment() -> (AssignmentResult, BBox, GridSpec) {
    let grid = GridSpec { h: 3, w: 3, stride: 4.0 };
    let gt = BBox::new(2.0, 3.0, 9.0, 10.0);
    let mut labels = vec![BinLabel::Negative; 9];
    labels[4] = BinLabel::Positive;
    labels[5] = BinLabel::Ignore;
    let result = AssignmentResult { labels, positives: vec![4], threshold_used: None };
    (result, gt, grid)
}

fn focal_check() -> SuiteCheck {
    let (assignment, gt, grid) = hand_assignment();
    let target = build_target_map(&assignment, &gt, &grid);
    let scores = Tensor::from_vec(vec![9, 1], (0..9).map(|i| 0.1 + 0.08 * i as f64).collect());
    let report = grad_check(
        |_, vals| focal_loss(&vals[0], &target, &LossWeights::default()),
        &[scores],
        1e-5,
    );
    SuiteCheck { name: "focal", max_rel_err: report.max_rel_err, tolerance: 1e-4 }
}

fn point_params() -> (Tensor, Tensor, BBox) {
    let xs = Tensor::from_vec(vec![2, 3], vec![3.1, 7.3, 5.2, 6.4, 10.9, 8.15]);
    let ys = Tensor::from_vec(vec![2, 3], vec![4.3, 8.7, 6.1, 5.9, 11.3, 9.05]);
    (xs, ys, BBox::new(4.0, 5.0, 9.0, 11.0))
}

fn giou_minmax_check() -> SuiteCheck {
    let (xs, ys, gt) = point_params();
    let report = grad_check(
        |_, vals| {
            let boxes = convert_minmax_rows(&vals[0], &vals[1]);
            stage_giou_loss(&boxes, &gt, &[0, 1])
        },
        &[xs, ys],
        1e-5,
    );
    SuiteCheck { name: "stage-giou-minmax", max_rel_err: report.max_rel_err, tolerance: 1e-4 }
}

fn giou_moment_check() -> SuiteCheck {
    let (xs, ys, gt) = point_params();
    let log_lambda = Tensor::from_vec(vec![1, 2], vec![0.12, -0.2]);
    let report = grad_check(
        |_, vals| {
            let lambdas = vals[2].exp();
            let boxes = convert_moment_rows(&vals[0], &vals[1], &lambdas);
            stage_giou_loss(&boxes, &gt, &[0, 1])
        },
        &[xs, ys, log_lambda],
        1e-5,
    );
    SuiteCheck { name: "stage-giou-moment", max_rel_err: report.max_rel_err, tolerance: 1e-4 }
}

fn corr_assignment() -> AssignmentResult {
    let labels = vec![
        BinLabel::Positive,
        BinLabel::Negative,
        BinLabel::Positive,
        BinLabel::Positive,
        BinLabel::Negative,
        BinLabel::Positive,
    ];
    AssignmentResult { labels, positives: vec![0, 2, 3, 5], threshold_used: None }
}

fn corr_checks() -> (SuiteCheck, SuiteCheck) {
    let assignment = corr_assignment();
    let scores = Tensor::from_vec(vec![6, 1], vec![0.2, 0.5, 0.7, 0.35, 0.6, 0.85]);
    let ious = Tensor::from_vec(vec![6, 1], vec![0.3, 0.1, 0.65, 0.4, 0.2, 0.75]);

    // Truncated: IoUs are held constant, so finite differences see exactly
    // the same detached landscape the analytic pass does.
    let ious_fixed = ious.clone();
    let a = &assignment;
    let truncated = grad_check(
        move |tape, vals| {
            let fixed = tape.constant(ious_fixed.clone());
            corr_loss(&vals[0], &fixed, a, SampleMode::Pos, true)
        },
        &[scores.clone()],
        1e-5,
    );
    let full = grad_check(
        |_, vals| corr_loss(&vals[0], &vals[1], &assignment, SampleMode::Pos, false),
        &[scores, ious],
        1e-5,
    );
    (
        SuiteCheck { name: "corr-truncated", max_rel_err: truncated.max_rel_err, tolerance: 1e-4 },
        SuiteCheck { name: "corr-full", max_rel_err: full.max_rel_err, tolerance: 1e-4 },
    )
}

fn noise_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    let mut img = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            img.set(x, y, rng.next_f64());
        }
    }
    img
}

/// Full pipeline on a 4x4-grid model: encoder, both stages, bilinear
/// sampling, converter, and all four loss terms (untruncated so finite
/// differences see the IoU path too), with frozen hand-picked labels.
fn end_to_end_check() -> SuiteCheck {
    let cfg = ModelConfig {
        search_size: 16,
        template_size: 8,
        stride: 4,
        feature_dim: 4,
        n_points: 3,
        hidden_dim: 8,
        converter: Converter::MinMax,
    };
    let template = noise_image(8, 8, 11);
    let search = noise_image(16, 16, 12);
    let gt = BBox::new(3.0, 4.0, 12.0, 13.0);
    let grid = cfg.grid_spec();
    let mut labels = vec![BinLabel::Negative; 16];
    labels[5] = BinLabel::Positive;
    labels[9] = BinLabel::Positive;
    labels[10] = BinLabel::Ignore;
    let assignment = AssignmentResult { labels, positives: vec![5, 9], threshold_used: None };
    let target = build_target_map(&assignment, &gt, &grid);
    let weights = LossWeights::default();

    let mut params = init_parameters(&cfg, 7);
    // Fixed offset biases keep every sample point clear of integer grid
    // coordinates (bilinear cells freeze there) and keep the per-bin point
    // clouds spread so min/max never ties under the probe step.
    params.insert(
        "init.b2".into(),
        Tensor::from_vec(vec![1, 6], vec![0.3, -0.45, 0.15, 0.55, -0.3, 0.2]),
    );
    params.insert(
        "refine.b2".into(),
        Tensor::from_vec(vec![1, 6], vec![0.5, 0.15, -0.3, -0.25, 0.45, 0.5]),
    );
    // Nonzero hidden biases keep relu preactivations away from their kink:
    // with zero biases, any bin whose encoder features are all inactive
    // would sit exactly at 0, where finite differences straddle the corner.
    params.insert(
        "cls.b1".into(),
        Tensor::from_vec(vec![1, 8], vec![0.11, -0.07, 0.16, -0.13, 0.05, 0.19, -0.17, 0.08]),
    );
    params.insert(
        "init.b1".into(),
        Tensor::from_vec(vec![1, 8], vec![-0.09, 0.14, -0.05, 0.18, -0.15, 0.07, 0.12, -0.19]),
    );
    params.insert(
        "refine.b1".into(),
        Tensor::from_vec(vec![1, 8], vec![0.13, -0.11, 0.06, -0.16, 0.09, -0.06, 0.15, -0.08]),
    );
    let names: Vec<String> = params.keys().cloned().collect();
    let tensors: Vec<Tensor> = params.values().cloned().collect();

    let report = grad_check(
        |tape, vals| {
            let p = names.iter().cloned().zip(vals.iter().cloned()).collect();
            let out = forward(tape, &p, &template, &search, &cfg);
            let l_cls = focal_loss(&out.scores, &target, &weights);
            let l_init = stage_giou_loss(&out.init_boxes, &gt, &assignment.positives);
            let l_refine = stage_giou_loss(&out.refine_boxes, &gt, &assignment.positives);
            let gt_row = bbox_const(tape, &gt);
            let ious = iou_rows(&out.refine_boxes, &gt_row);
            let l_corr = corr_loss(&out.scores, &ious, &assignment, SampleMode::Pos, false);
            total_loss(&l_cls, &l_init, &l_refine, &l_corr, &weights).total
        },
        &tensors,
        1e-5,
    );
    SuiteCheck { name: "end-to-end", max_rel_err: report.max_rel_err, tolerance: 1e-3 }
}

/// Every finite-difference comparison the `gradcheck` command runs.
pub fn gradient_suite() -> Vec<SuiteCheck> {
    let (corr_truncated, corr_full) = corr_checks();
    vec![
        focal_check(),
        giou_minmax_check(),
        giou_moment_check(),
        corr_truncated,
        corr_full,
        end_to_end_check(),
    ]
}

fn cmd_gradcheck() -> Result<()> {
    let checks = gradient_suite();
    let mut ok = true;
    for c in &checks {
        println!(
            "{:<20} max rel err {:.3e}  tol {:.0e}  {}",
            c.name,
            c.max_rel_err,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        );
        ok &= c.passed();
    }
    if ok {
        Ok(())
    } else {
        Err(Error::Config("gradient check failed".into()))
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
