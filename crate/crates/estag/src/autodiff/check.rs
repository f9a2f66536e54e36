//! Gradient verification against central finite differences.

use super::{Tape, Value};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Compare the analytic gradient of `f` with central finite differences
/// over every scalar entry of every parameter.
///
/// Returns the worst relative error
/// `|analytic − central| / max(|analytic|, |central|, 1e-8)`.
///
/// `f` must build the scalar loss on the supplied tape from the supplied
/// parameter store, deterministically.
pub fn finite_diff_check<F>(f: F, params: &ParamStore, eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &ParamStore) -> Result<Value>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }

    let eval = |store: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let loss = f(&tape, store)?;
        let v = tape.value(loss);
        if !v.is_scalar() {
            return Err(Error::LossNotScalar(v.shape().to_vec()));
        }
        let x = v.item();
        if !x.is_finite() {
            return Err(Error::Numerical(format!(
                "objective returned a non-finite value: {x}"
            )));
        }
        Ok(x)
    };

    // Analytic gradients from one recorded pass.
    let tape = Tape::new();
    let loss = f(&tape, params)?;
    if !tape.value(loss).item().is_finite() {
        return Err(Error::Numerical(
            "objective returned a non-finite value at the base point".into(),
        ));
    }
    let analytic = tape.backward(loss)?;

    let mut worst = 0.0_f64;
    for (name, tensor) in params.iter() {
        let grad = &analytic[name];
        for i in 0..tensor.len() {
            let mut probe = params.clone();
            let entry = probe.get_mut(name).unwrap();
            let base = entry.data()[i];

            entry.data_mut()[i] = base + eps;
            let plus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = base - eps;
            let minus = eval(&probe)?;

            let central = (plus - minus) / (2.0 * eps);
            let a = grad.data()[i];
            let rel = (a - central).abs() / a.abs().max(central.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

/// Convenience wrapper: check a loss of a single unnamed tensor input.
/// Used by the per-op gradient tests.
#[cfg(test)]
pub fn check_single_input<F>(input: &Tensor, eps: f64, f: F) -> f64
where
    F: Fn(&Tape, Value) -> Result<Value>,
{
    let mut store = ParamStore::new();
    store.insert("x", input.clone());
    finite_diff_check(
        |tape, ps| {
            let x = tape.param("x", ps.get("x").unwrap().clone());
            f(tape, x)
        },
        &store,
        eps,
    )
    .unwrap()
}
