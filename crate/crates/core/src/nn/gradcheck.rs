use super::matrix::Matrix;
use super::mlp::{mlp_gradient, Mlp, MlpSpec, OutputLoss};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub pass: bool,
}

/// Relative error with a `max(|a|, |b|, 1e-8)` denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `params`.
pub fn check_gradient(
    params: &[f64],
    analytic: &[f64],
    f: impl Fn(&[f64]) -> f64,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert!(step > 0.0 && tolerance > 0.0);
    assert_eq!(params.len(), analytic.len());
    let mut probe = params.to_vec();
    let mut worst = 0.0;
    let mut worst_index = None;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f(&probe);
        probe[i] = orig - step;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > worst || (err.is_nan() && worst_index.is_none()) {
            worst = err;
            worst_index = Some(i);
        }
    }
    GradCheckReport {
        max_relative_error: worst,
        worst_index,
        pass: worst < tolerance,
    }
}

/// Checks [`mlp_gradient`] for `loss(network(inputs))` coordinate-wise.
pub fn finite_diff_check(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &Matrix,
    loss: &OutputLoss<'_>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = mlp_gradient(spec, params, inputs, loss)?;
    let eval = |p: &[f64]| {
        let net = Mlp::new(spec.clone(), p.to_vec()).expect("probe parameters are valid");
        loss(&net.forward_batch(inputs)).0
    };
    Ok(check_gradient(params, &analytic, eval, step, tolerance))
}
