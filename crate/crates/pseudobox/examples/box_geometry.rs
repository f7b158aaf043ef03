//! Boxes, point sets, and the two point-to-box converters, plus the
//! differentiable row-wise variants of the same functions.

use pseudobox::geometry::{
    bbox_const, convert_minmax, convert_moment, giou, giou_rows, iou, MomentMultipliers,
    PointSet,
};
use pseudobox::tape::{Tape, Tensor};
use pseudobox::BBox;

fn main() {
    let a = BBox::new(0.0, 0.0, 4.0, 4.0);
    let b = BBox::new(2.0, 2.0, 6.0, 6.0);
    println!("a = {:?}  area {}", a, a.area());
    println!("b = {:?}  area {}", b, b.area());
    println!("iou(a, b)  = {:.6}", iou(&a, &b));
    println!("giou(a, b) = {:.6}", giou(&a, &b));

    // GIoU separates disjoint boxes that IoU cannot tell apart.
    let near = BBox::new(5.0, 0.0, 9.0, 4.0);
    let far = BBox::new(20.0, 0.0, 24.0, 4.0);
    println!(
        "disjoint: iou {} / {}, giou {:.4} / {:.4}",
        iou(&a, &near),
        iou(&a, &far),
        giou(&a, &near),
        giou(&a, &far)
    );

    // A cloud of points collapses to a pseudo box two ways: the exact
    // min/max envelope, or a mean +/- scaled-std estimate that every
    // point influences.
    let cloud = PointSet::new(vec![
        (1.0, 2.0),
        (3.0, 5.0),
        (2.0, 3.0),
        (5.0, 4.0),
        (4.0, 1.0),
    ]);
    let envelope = convert_minmax(&cloud);
    let moment = convert_moment(&cloud, &MomentMultipliers::new(1.0, 1.0));
    println!("min/max envelope: {:?}", envelope);
    println!("moment box:       {:?}", moment);

    // The row-wise converters run on the tape, so the conversion is
    // differentiable end to end: here, the gradient of GIoU against a
    // target box with respect to every point coordinate.
    let tape = Tape::new();
    let xs = tape.param(Tensor::from_vec(vec![1, 5], vec![1.0, 3.0, 2.0, 5.0, 4.0]));
    let ys = tape.param(Tensor::from_vec(vec![1, 5], vec![2.0, 5.0, 3.0, 4.0, 1.0]));
    let pred = pseudobox::geometry::convert_minmax_rows(&xs, &ys);
    let target = bbox_const(&tape, &BBox::new(1.5, 1.5, 4.5, 4.5));
    let g = giou_rows(&pred, &target);
    println!("tape giou = {:.6}", g.item());
    let grads = g.backward();
    println!("d giou / d xs = {:?}", grads.get(&xs).unwrap().data());
    println!("d giou / d ys = {:?}", grads.get(&ys).unwrap().data());
    println!("(only the envelope points carry gradient under min/max)");
}
