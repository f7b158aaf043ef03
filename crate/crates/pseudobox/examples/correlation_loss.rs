//! The score/IoU concordance penalty: what it measures, how truncation
//! redirects its gradient, and how sampling negatives changes its value.

use pseudobox::assigner::{AssignmentResult, BinLabel};
use pseudobox::loss::{corr_loss, corr_rho, SampleMode};
use pseudobox::tape::{Tape, Tensor};

fn column(tape: &Tape, vals: &[f64]) -> pseudobox::tape::Value {
    tape.param(Tensor::from_vec(vec![vals.len(), 1], vals.to_vec()))
}

fn main() {
    // Concordance rewards scores that rank AND scale like the IoUs.
    let tape = Tape::new();
    let ious = column(&tape, &[0.2, 0.4, 0.6, 0.8]);
    for (tag, scores) in [
        ("identical", vec![0.2, 0.4, 0.6, 0.8]),
        ("same order, compressed", vec![0.45, 0.5, 0.55, 0.6]),
        ("shuffled", vec![0.6, 0.2, 0.8, 0.4]),
        ("reversed", vec![0.8, 0.6, 0.4, 0.2]),
    ] {
        let s = column(&tape, &scores);
        println!("rho({tag:>24}) = {:+.4}", corr_rho(&s, &ious).item());
    }

    // corr_loss = 1 - rho over the sampled bins of an assignment.
    let labels = vec![
        BinLabel::Positive,
        BinLabel::Negative,
        BinLabel::Positive,
        BinLabel::Ignore,
        BinLabel::Positive,
        BinLabel::Negative,
    ];
    let assignment = AssignmentResult {
        positives: vec![0, 2, 4],
        labels,
        threshold_used: None,
    };
    let tape = Tape::new();
    let scores = column(&tape, &[0.9, 0.1, 0.4, 0.5, 0.7, 0.2]);
    let ious = column(&tape, &[0.8, 0.05, 0.55, 0.3, 0.6, 0.1]);

    let pos_only = corr_loss(&scores, &ious, &assignment, SampleMode::Pos, true);
    let pos_neg = corr_loss(&scores, &ious, &assignment, SampleMode::PosNeg, true);
    println!("\nloss over positives only: {:.4}", pos_only.item());
    println!("loss over pos + neg bins: {:.4}", pos_neg.item());

    // Truncation detaches the IoU side: the penalty pushes scores toward
    // the IoUs but never drags boxes toward the scores.
    for truncate in [true, false] {
        let tape = Tape::new();
        let scores = column(&tape, &[0.9, 0.1, 0.4, 0.5, 0.7, 0.2]);
        let ious = column(&tape, &[0.8, 0.05, 0.55, 0.3, 0.6, 0.1]);
        let loss = corr_loss(&scores, &ious, &assignment, SampleMode::Pos, truncate);
        let grads = loss.backward();
        let g_iou_norm: f64 = grads
            .get(&ious)
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>().sqrt())
            .unwrap_or(0.0);
        println!(
            "truncate={truncate}: loss {:.4}, |d loss / d ious| = {:.4}",
            loss.item(),
            g_iou_norm
        );
    }
}
