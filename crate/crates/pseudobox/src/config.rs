//! Flat JSON experiment configuration: one documented key per knob, strict
//! about unknown keys so a misspelled ablation switch fails loudly instead
//! of silently running the default.
//!
//! Every key has a default, so `{}` is a valid config describing the
//! standard run. `leading` and `top_k` default per strategy (leading suits
//! the top-k assigners; 12 candidates suit CD, 16 suit IV), which is why
//! they are optional; [`ExperimentConfig::resolved`] pins them to concrete
//! values for config echoes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assigner::{AssignStrategy, AssignerConfig, Spread};
use crate::engine::RunConfig;
use crate::loss::{LossWeights, SampleMode};
use crate::model::{Converter, ModelConfig};
use crate::scenes::SceneConfig;
use crate::{Error, Result};

fn d_seed() -> u64 { 42 }
fn d_epochs() -> usize { 30 }
fn d_scenes_per_epoch() -> usize { 1000 }
fn d_batch_size() -> usize { 32 }
fn d_lr() -> f64 { 1e-3 }
fn d_lr_drop_factor() -> f64 { 0.1 }
fn d_weight_decay() -> f64 { 1e-4 }
fn d_assigner() -> AssignStrategy { AssignStrategy::TopKIv }
fn d_spread() -> Spread { Spread::Std }
fn d_iou_pos_thr() -> f64 { 0.5 }
fn d_iou_neg_thr() -> f64 { 0.4 }
fn d_sample_mode() -> SampleMode { SampleMode::Pos }
fn d_truncate() -> bool { true }
fn d_lambda_cls() -> f64 { 2.0 }
fn d_lambda_det() -> f64 { 1.0 }
fn d_lambda_corr() -> f64 { 0.5 }
fn d_lambda_init() -> f64 { 1.0 }
fn d_lambda_refine() -> f64 { 2.0 }
fn d_focal_alpha() -> f64 { 2.0 }
fn d_focal_beta() -> f64 { 4.0 }
fn d_search_size() -> usize { 64 }
fn d_template_size() -> usize { 32 }
fn d_stride() -> usize { 4 }
fn d_feature_dim() -> usize { 32 }
fn d_n_points() -> usize { 9 }
fn d_hidden_dim() -> usize { 64 }
fn d_converter() -> Converter { Converter::MinMax }
fn d_seq_len() -> usize { 32 }
fn d_eval_sequences() -> usize { 64 }

/// The experiment config file: a flat key set covering every run knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_scenes_per_epoch")]
    pub scenes_per_epoch: usize,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_lr_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default = "d_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "d_assigner")]
    pub assigner: AssignStrategy,
    /// Defaults to the strategy's natural mode when omitted.
    #[serde(default)]
    pub leading: Option<bool>,
    /// Defaults to the strategy's natural candidate count when omitted.
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default = "d_spread")]
    pub spread: Spread,
    #[serde(default = "d_iou_pos_thr")]
    pub iou_pos_thr: f64,
    #[serde(default = "d_iou_neg_thr")]
    pub iou_neg_thr: f64,
    #[serde(default = "d_sample_mode")]
    pub sample_mode: SampleMode,
    #[serde(default = "d_truncate")]
    pub truncate: bool,
    #[serde(default = "d_lambda_cls")]
    pub lambda_cls: f64,
    #[serde(default = "d_lambda_det")]
    pub lambda_det: f64,
    #[serde(default = "d_lambda_corr")]
    pub lambda_corr: f64,
    #[serde(default = "d_lambda_init")]
    pub lambda_init: f64,
    #[serde(default = "d_lambda_refine")]
    pub lambda_refine: f64,
    #[serde(default = "d_focal_alpha")]
    pub focal_alpha: f64,
    #[serde(default = "d_focal_beta")]
    pub focal_beta: f64,
    #[serde(default = "d_search_size")]
    pub search_size: usize,
    #[serde(default = "d_template_size")]
    pub template_size: usize,
    #[serde(default = "d_stride")]
    pub stride: usize,
    #[serde(default = "d_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "d_n_points")]
    pub n_points: usize,
    #[serde(default = "d_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "d_converter")]
    pub converter: Converter,
    /// Frames per held-out evaluation sequence.
    #[serde(default = "d_seq_len")]
    pub seq_len: usize,
    /// Held-out sequences scored by `ablate` (and `eval` when unset).
    #[serde(default = "d_eval_sequences")]
    pub eval_sequences: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl ExperimentConfig {
    /// Parses a config file, rejecting unknown keys.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// The same config with `leading` and `top_k` pinned to concrete
    /// values, so echoes show exactly what ran.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.leading = Some(self.assigner_config().leading);
        out.top_k = Some(self.assigner_config().top_k);
        out
    }

    pub fn assigner_config(&self) -> AssignerConfig {
        let base = AssignerConfig::for_strategy(self.assigner);
        AssignerConfig {
            strategy: self.assigner,
            top_k: self.top_k.unwrap_or_else(|| AssignerConfig::default_top_k(self.assigner)),
            leading: self.leading.unwrap_or(base.leading),
            spread: self.spread,
            iou_pos_thr: self.iou_pos_thr,
            iou_neg_thr: self.iou_neg_thr,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_cls: self.lambda_cls,
            lambda_det: self.lambda_det,
            lambda_corr: self.lambda_corr,
            lambda_init: self.lambda_init,
            lambda_refine: self.lambda_refine,
            alpha: self.focal_alpha,
            beta: self.focal_beta,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            search_size: self.search_size,
            template_size: self.template_size,
            stride: self.stride,
            feature_dim: self.feature_dim,
            n_points: self.n_points,
            hidden_dim: self.hidden_dim,
            converter: self.converter,
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            search_size: self.search_size,
            template_size: self.template_size,
            seq_len: self.seq_len,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            epochs: self.epochs,
            scenes_per_epoch: self.scenes_per_epoch,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_drop_factor: self.lr_drop_factor,
            weight_decay: self.weight_decay,
            assigner: self.assigner_config(),
            loss_weights: self.loss_weights(),
            model: self.model_config(),
            sample_mode: self.sample_mode,
            truncate: self.truncate,
        }
    }

    /// Applies an ablation variant token: a strategy name optionally
    /// suffixed with `-lead` (e.g. `iv`, `maxiou-lead`).
    pub fn with_variant(&self, token: &str) -> Result<Self> {
        let (name, leading) = match token.strip_suffix("-lead") {
            Some(base) => (base, true),
            None => (token, false),
        };
        let strategy = match name {
            "one2one" => AssignStrategy::OneToOneCenter,
            "maxiou" => AssignStrategy::MaxIoU,
            "cd" => AssignStrategy::TopKCd,
            "iv" => AssignStrategy::TopKIv,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant `{other}`; expected one2one, maxiou, cd, or iv, \
                     optionally suffixed with -lead"
                )))
            }
        };
        if strategy == AssignStrategy::OneToOneCenter && leading {
            return Err(Error::Config("one2one has a single fixed positive; -lead does not apply".into()));
        }
        let mut out = self.clone();
        out.assigner = strategy;
        out.leading = Some(leading);
        out.top_k = None;
        Ok(out)
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default_run() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let run = cfg.run_config();
        assert_eq!(run, RunConfig::default());
        assert_eq!(cfg.eval_sequences, 64);
        assert_eq!(cfg.seq_len, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"learning_rate": 0.1}"#).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn assigner_defaults_follow_the_strategy() {
        let cd = ExperimentConfig::from_json(r#"{"assigner": "cd"}"#).unwrap();
        let ac = cd.assigner_config();
        assert_eq!(ac.top_k, 12);
        assert!(ac.leading);
        let maxiou = ExperimentConfig::from_json(r#"{"assigner": "maxiou"}"#).unwrap();
        let ac = maxiou.assigner_config();
        assert_eq!(ac.top_k, 16);
        assert!(!ac.leading);
        let overridden =
            ExperimentConfig::from_json(r#"{"assigner": "cd", "top_k": 5, "leading": false}"#)
                .unwrap();
        let ac = overridden.assigner_config();
        assert_eq!(ac.top_k, 5);
        assert!(!ac.leading);
    }

    #[test]
    fn resolved_configs_round_trip() {
        let cfg = ExperimentConfig::default().resolved();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.run_config(), cfg.run_config());
    }

    #[test]
    fn variant_tokens_map_to_strategies() {
        let base = ExperimentConfig::default();
        let v = base.with_variant("maxiou-lead").unwrap();
        assert_eq!(v.assigner, AssignStrategy::MaxIoU);
        assert_eq!(v.leading, Some(true));
        let v = base.with_variant("iv").unwrap();
        assert_eq!(v.assigner, AssignStrategy::TopKIv);
        assert_eq!(v.leading, Some(false));
        let v = base.with_variant("one2one").unwrap();
        assert_eq!(v.assigner, AssignStrategy::OneToOneCenter);
        assert!(base.with_variant("one2one-lead").is_err());
        assert!(base.with_variant("atss").is_err());
        // The variant run matches a standalone config with the same knobs.
        let standalone =
            ExperimentConfig::from_json(r#"{"assigner": "maxiou", "leading": true}"#).unwrap();
        assert_eq!(
            base.with_variant("maxiou-lead").unwrap().run_config(),
            standalone.run_config()
        );
    }

    #[test]
    fn weights_and_model_map_through() {
        let cfg = ExperimentConfig::from_json(
            r#"{"lambda_corr": 0.0, "focal_beta": 2.0, "converter": "moment", "n_points": 5}"#,
        )
        .unwrap();
        let lw = cfg.loss_weights();
        assert_eq!(lw.lambda_corr, 0.0);
        assert_eq!(lw.beta, 2.0);
        assert_eq!(lw.lambda_cls, 2.0);
        let mc = cfg.model_config();
        assert_eq!(mc.converter, Converter::Moment);
        assert_eq!(mc.n_points, 5);
    }
}
