//! Tape fundamentals: build a small expression, read gradients back, and
//! confirm them against central finite differences.

use pseudobox::tape::{grad_check, Tape, Tensor};

fn main() {
    // f(x, w) = mean(sigmoid(x · w)) for x [2,3], w [3,1].
    let tape = Tape::new();
    let x = tape.param(Tensor::from_vec(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]));
    let w = tape.param(Tensor::from_vec(vec![3, 1], vec![0.8, -0.4, 0.6]));
    let loss = x.matmul(&w).sigmoid().mean_all();
    println!("loss = {:.6}", loss.item());

    let grads = loss.backward();
    let gx = grads.get(&x).expect("x participates");
    let gw = grads.get(&w).expect("w participates");
    println!("dloss/dx = {:?}", gx.data());
    println!("dloss/dw = {:?}", gw.data());

    // The same function as a closure over leaf tensors, probed with ±1e-5.
    let report = grad_check(
        |_, vals| vals[0].matmul(&vals[1]).sigmoid().mean_all(),
        &[
            Tensor::from_vec(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]),
            Tensor::from_vec(vec![3, 1], vec![0.8, -0.4, 0.6]),
        ],
        1e-5,
    );
    println!("finite differences agree to {:.3e}", report.max_rel_err);

    // Values are tensors: reductions, broadcasting, and structural ops
    // compose freely.
    let tape = Tape::new();
    let a = tape.param(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let row_sums = a.sum_axis(1);
    let centered = a.sub(&a.mean_all());
    println!("row sums = {:?}", row_sums.tensor().data());
    println!("centered = {:?}", centered.tensor().data());

    // detach() blocks gradient flow without changing values.
    let b = a.square().detach().mul(&a);
    let grads = b.sum_all().backward();
    println!(
        "d(sum(detach(a^2) * a))/da = {:?} (just a^2: the squared factor is frozen)",
        grads.get(&a).unwrap().data()
    );
}
