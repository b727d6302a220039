//! Adam and SGD with momentum on an ill-conditioned quadratic, with the
//! step-decay schedule used in training.

use rpl::nn::Parameter;
use rpl::optim::{lr_schedule, Optimizer, OptimizerKind};
use rpl::tensor::Tensor;

fn run(kind: OptimizerKind, lr: f64) -> rpl::Result<Vec<f64>> {
    let mut p = Parameter::new("w", Tensor::from_vec(vec![3.0, -2.0]));
    let mut opt = Optimizer::new(kind);
    let scales = [1.0, 10.0];
    for _ in 0..200 {
        // f(w) = sum_i s_i w_i^2
        let g: Vec<f64> = p.value.data().iter().zip(scales).map(|(w, s)| 2.0 * s * w).collect();
        p.grad = Tensor::from_vec(g);
        opt.step(&mut [&mut p], lr)?;
    }
    Ok(p.value.data().to_vec())
}

fn main() -> rpl::Result<()> {
    println!("adam -> {:?}", run(OptimizerKind::Adam, 0.05)?);
    println!("sgd  -> {:?}", run(OptimizerKind::Sgd, 0.01)?);
    for epoch in [0, 29, 30, 60, 99] {
        println!("lr at epoch {epoch:>2}: {}", lr_schedule(epoch, 0.01));
    }
    Ok(())
}
