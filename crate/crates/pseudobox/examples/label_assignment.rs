//! The four label-assignment strategies side by side on one scene, plus the
//! leading rule that labels the refine stage from the init-stage boxes.

use pseudobox::assigner::{
    leading_labels, AssignStrategy, AssignerConfig, AssignmentResult, BinLabel,
};
use pseudobox::model::{init_parameters, leading_boxes, ModelConfig};
use pseudobox::scenes::{generate_scene, SceneConfig};

fn render(tag: &str, result: &AssignmentResult, grid: usize) {
    let rows: Vec<String> = result
        .labels
        .chunks(grid)
        .map(|row| {
            row.iter()
                .map(|l| match l {
                    BinLabel::Positive => '+',
                    BinLabel::Negative => '.',
                    BinLabel::Ignore => 'x',
                })
                .collect()
        })
        .collect();
    println!("\n{tag}: {} positives, threshold {:?}", result.positives.len(), result.threshold_used);
    for r in rows {
        println!("  {r}");
    }
}

fn main() {
    let model_cfg = ModelConfig::default();
    let scene = generate_scene(7, 0, &SceneConfig::default());
    println!("ground truth: {:?}", scene.gt);

    // Box-driven strategies need per-bin pseudo boxes; an untrained model
    // supplies them, one per grid bin, for both stages.
    let params = init_parameters(&model_cfg, 7);
    let (init_boxes, refine_boxes) = leading_boxes(&params, &scene.template, &scene.search, &model_cfg);
    let grid = model_cfg.grid_spec();

    for strategy in [
        AssignStrategy::OneToOneCenter,
        AssignStrategy::MaxIoU,
        AssignStrategy::TopKCd,
        AssignStrategy::TopKIv,
    ] {
        let cfg = AssignerConfig::for_strategy(strategy);
        let result = leading_labels(&init_boxes, &refine_boxes, &scene.gt, &grid, &cfg)
            .expect("assignment");
        render(&format!("{strategy:?} (leading {})", cfg.leading), &result, model_cfg.grid());
    }

    // The leading rule changes which boxes drive the labels. With an
    // untrained model both stages emit near-identical boxes, so the sets
    // usually agree here; during training they drift apart.
    let mut plain = AssignerConfig::for_strategy(AssignStrategy::TopKIv);
    plain.leading = false;
    let lead = AssignerConfig::for_strategy(AssignStrategy::TopKIv);
    let from_refine = leading_labels(&init_boxes, &refine_boxes, &scene.gt, &grid, &plain).unwrap();
    let from_init = leading_labels(&init_boxes, &refine_boxes, &scene.gt, &grid, &lead).unwrap();
    println!(
        "\ntop-k IV positives, labels from refine boxes: {:?}",
        from_refine.positives
    );
    println!("top-k IV positives, labels from init boxes:   {:?}", from_init.positives);
}
