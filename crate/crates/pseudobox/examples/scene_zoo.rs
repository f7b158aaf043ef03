//! A tour of the synthetic scene generator: single training scenes, a
//! tracking sequence with drift, and PGM renders you can open in any image
//! viewer.

use pseudobox::scenes::{generate_scene, generate_sequence, write_pgm, SceneConfig};

fn main() -> std::io::Result<()> {
    let cfg = SceneConfig::default();
    let out = std::env::temp_dir().join("pseudobox_scene_zoo");
    std::fs::create_dir_all(&out)?;

    // Scenes are pure functions of (seed, scene_id, cfg): same inputs,
    // same pixels, same ground truth.
    println!("{:<6} {:<10} {:>7} {:>6}  gt", "scene", "shape", "area", "fill");
    for scene_id in 0..6u64 {
        let scene = generate_scene(42, scene_id, &cfg);
        let mut inside = 0usize;
        for py in 0..cfg.search_size {
            for px in 0..cfg.search_size {
                if scene.shape.contains(px as f64 + 0.5, py as f64 + 0.5) {
                    inside += 1;
                }
            }
        }
        let gt = scene.gt;
        println!(
            "{:<6} {:<10} {:>7.1} {:>5.1}%  ({:.1}, {:.1})..({:.1}, {:.1})",
            scene_id,
            format!("{:?}", scene.shape.kind),
            gt.area(),
            100.0 * inside as f64 / (cfg.search_size * cfg.search_size) as f64,
            gt.x1,
            gt.y1,
            gt.x2,
            gt.y2
        );
        write_pgm(&scene.search, &out.join(format!("scene_{scene_id}_search.pgm")))?;
        write_pgm(&scene.template, &out.join(format!("scene_{scene_id}_template.pgm")))?;
    }

    // Sequences drift the same shape frame to frame: bounded center steps,
    // mild scale and rotation changes.
    let seq = generate_sequence(42, 0, &cfg);
    println!("\nsequence 0, {} frames:", seq.frames.len());
    for (i, frame) in seq.frames.iter().enumerate().take(8) {
        let (cx, cy) = frame.gt.center();
        println!(
            "  frame {i:>2}: center ({cx:>5.1}, {cy:>5.1}), size {:>4.1} x {:>4.1}",
            frame.gt.width(),
            frame.gt.height()
        );
        write_pgm(&frame.search, &out.join(format!("seq0_frame_{i:02}.pgm")))?;
    }
    write_pgm(&seq.template, &out.join("seq0_template.pgm"))?;

    println!("\nPGM renders written to {}", out.display());
    Ok(())
}
