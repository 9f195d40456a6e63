//! Central finite-difference verification of tape gradients.

use crate::{Tape, Tensor, TensorError, Var};

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over all entries of `|analytic − numeric| / max(1, |analytic|)`
    pub max_rel_error: f64,
    /// `(parameter, element)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    /// Number of scalar entries compared.
    pub checked: usize,
}

fn evaluate<F, E>(f: &F, params: &[Tensor]) -> Result<(Tape, Vec<Var>, Var), E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.variable(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Value of `f` at `params` and its gradient with respect to each parameter.
pub fn analytic_gradients<F, E>(f: &F, params: &[Tensor]) -> Result<(f64, Vec<Tensor>), E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let (mut tape, vars, out) = evaluate(f, params)?;
    let value = tape.value(out).item()?;
    tape.backward(out)?;
    let grads = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            let data = tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
            Tensor::new(p.shape().to_vec(), data)
        })
        .collect::<Result<Vec<_>, TensorError>>()?;
    Ok((value, grads))
}

/// Compares supplied gradients against central differences of `f`.
pub fn compare_gradients<F, E>(f: &F, params: &[Tensor], analytic: &[Tensor]) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = params.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        for k in 0..params[p].len() {
            let original = params[p].data()[k];
            let mut side = |delta: f64| -> Result<f64, E> {
                probe[p].data_mut()[k] = original + delta;
                let (tape, _, out) = evaluate(f, &probe)?;
                let v = tape.value(out).item()?;
                if !v.is_finite() {
                    return Err(TensorError::NonFinite { param: p, index: k }.into());
                }
                Ok(v)
            };
            let plus = side(FD_STEP)?;
            let minus = side(-FD_STEP)?;
            probe[p].data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad.data()[k];
            if !a.is_finite() {
                return Err(TensorError::NonFinite { param: p, index: k }.into());
            }
            let err = (a - numeric).abs() / a.abs().max(1.0);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = Some((p, k));
            }
        }
    }
    Ok(report)
}

/// Differentiates `f` on the tape and checks every parameter entry against
/// central differences with step [`FD_STEP`]. `f` may fail with any error
/// type that tape errors convert into.
pub fn grad_check<F, E>(f: F, params: &[Tensor]) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let (_, analytic) = analytic_gradients(&f, params)?;
    compare_gradients(&f, params, &analytic)
}
