//! Sanity drill: hammer one scene with repeated optimizer steps and watch
//! the loss collapse while the arg-max-score box locks onto the target.

use pseudobox::assigner::{AssignStrategy, AssignerConfig};
use pseudobox::engine::{train_step, AdamW, RunConfig};
use pseudobox::model::init_parameters;
use pseudobox::scenes::generate_scene;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.assigner = AssignerConfig::for_strategy(AssignStrategy::OneToOneCenter);
    cfg.lr = 1e-2;

    let scene = generate_scene(cfg.seed, 0, &cfg.scene_config());
    let batch = vec![scene];
    let mut params = init_parameters(&cfg.model, cfg.seed);
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);

    println!("{:>4} {:>10} {:>10} {:>10} {:>10} {:>8}", "step", "total", "cls", "boxes", "corr", "iou");
    let mut first = None;
    let mut last = 0.0;
    for step in 1..=50 {
        let stats = train_step(&batch, &mut params, &mut opt, &cfg).expect("finite step");
        first.get_or_insert(stats.total);
        last = stats.total;
        if step == 1 || step % 5 == 0 {
            println!(
                "{:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.3}",
                step,
                stats.total,
                stats.cls,
                stats.init + stats.refine,
                stats.corr,
                stats.argmax_iou
            );
        }
    }
    println!(
        "\nloss {:.3} -> {:.3} ({:.1}% of start)",
        first.unwrap(),
        last,
        100.0 * last / first.unwrap()
    );
}
