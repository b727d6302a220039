use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    /// Max over checked coordinates of
    /// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input, flat coordinate)` pairs whose probes straddle a kink of a
    /// piecewise op (relu, max pool) and were therefore not compared.
    pub skipped: Vec<(usize, usize)>,
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, Vec<usize>)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok((g.value(out).item()?, g.kink_signature()))
}

/// Compare the graph's analytic gradients of a scalar function against
/// central differences with step `eps`, coordinate by coordinate.
pub fn gradient_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::contract(format!("gradient_check step must be positive, got {eps}")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if !g.value(out).is_scalar() {
        return Err(Error::contract(format!(
            "gradient_check needs a scalar function, found shape {:?}",
            g.value(out).shape()
        )));
    }
    let base_sig = g.kink_signature();
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut report = GradCheckReport::default();
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let (plus, sig_plus) = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = orig - eps;
            let (minus, sig_minus) = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = orig;

            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped.push((i, j));
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
