mod common;

use common::{gradient_cases, run_gradient_case, GRAD_INSTANCES, GRAD_TOL};

#[test]
fn every_op_and_loss_matches_finite_differences() {
    let mut failures = Vec::new();
    for (name, make) in gradient_cases() {
        let res = run_gradient_case(name, make, GRAD_INSTANCES);
        assert!(res.checked > 0, "{name}: nothing checked");
        if res.max_rel_error > GRAD_TOL {
            failures.push(format!("{name}: {:.3e}", res.max_rel_error));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    use rpl::nn::{Encoder, EncoderConfig};
    use rpl::tensor::gradient_check;

    let enc = Encoder::new(EncoderConfig::conv_small((1, 6, 6), 3)).unwrap();
    let mut r = common::rng(5);
    let x = common::randn(&mut r, &[2, 1, 6, 6], 1.0);
    let w0 = enc.params()[0].value.clone();
    let report = gradient_check(
        |g, v| {
            let mut vars = enc.bind(g, false);
            vars[0] = v[0];
            let xin = g.input(x.clone());
            let e = enc.forward(g, &vars, xin)?;
            g.sum(e)
        },
        &[w0],
        common::GRAD_EPS,
    )
    .unwrap();
    assert!(report.checked > 200);
    assert!(report.max_rel_error <= GRAD_TOL, "{}", report.max_rel_error);
}
