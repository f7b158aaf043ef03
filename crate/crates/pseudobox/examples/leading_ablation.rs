//! Head-to-head comparison of label-assignment variants on an identical
//! scene stream: one-to-one center assignment versus top-k IoU assignment
//! with and without the leading rule.
//!
//! A slim model and a small scene budget keep the run under a minute, which
//! is enough to see the one-to-many variants pull ahead of the one-to-one
//! baseline; the finer lead-versus-plain gaps need full-length runs to
//! settle. The `ablate` CLI subcommand runs the same comparison at any
//! scale and writes the per-variant artifacts to disk.

use pseudobox::config::ExperimentConfig;
use pseudobox::engine::run_ablation;

fn main() {
    let mut base = ExperimentConfig::default();
    base.epochs = 6;
    base.scenes_per_epoch = 800;
    base.batch_size = 16;
    base.lr = 3e-3;
    base.feature_dim = 16;
    base.hidden_dim = 32;
    base.n_points = 5;
    base.seq_len = 8;

    let variants: Vec<(String, _)> = ["one2one", "iv", "iv-lead"]
        .iter()
        .map(|&tok| {
            let cfg = base.with_variant(tok).expect("known variant");
            (tok.to_string(), cfg.run_config())
        })
        .collect();

    let outcomes = run_ablation(&variants, 16).expect("ablation run");

    println!(
        "\n{:<10} {:>10} {:>14} {:>8} {:>10}",
        "variant", "final_iou", "epochs_to_0.5", "ao", "total_loss"
    );
    for o in &outcomes {
        let epochs = o
            .row
            .epochs_to_half_iou
            .map(|e| e.to_string())
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:<10} {:>10.4} {:>14} {:>8.4} {:>10.4}",
            o.row.variant, o.row.final_train_iou, epochs, o.row.ao, o.row.final_total_loss
        );
    }
}
