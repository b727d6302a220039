//! Build a tiny graph by hand, run backward, and check the gradients
//! against finite differences.

use rpl::tensor::{gradient_check, Graph, Tensor};

fn main() -> rpl::Result<()> {
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.0, -0.5])?;
    let w = Tensor::new(vec![3, 2], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6])?;

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let wv = g.param(w.clone());
    let h = g.matmul(xv, wv)?;
    let h = g.relu(h)?;
    let lse = g.logsumexp(h)?;
    let loss = g.mean(lse)?;
    g.backward(loss)?;

    println!("loss = {:.6}", g.value(loss).item()?);
    println!("dL/dx = {:?}", g.grad(xv).data());
    println!("dL/dw = {:?}", g.grad(wv).data());

    let report = gradient_check(
        |g, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.relu(h)?;
            let lse = g.logsumexp(h)?;
            g.mean(lse)
        },
        &[x, w],
        1e-5,
    )?;
    println!(
        "gradient check: {} coordinates, max relative error {:.2e}, {} skipped at kinks",
        report.checked,
        report.max_rel_error,
        report.skipped.len()
    );
    Ok(())
}
