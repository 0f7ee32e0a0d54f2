use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the reverse-mode gradient of a scalar function with central
/// finite differences and returns the worst component-wise relative error,
/// `|a - b| / max(|a|, |b|, 1e-6)`.
///
/// `f` receives a fresh tape and the input leaf and must return a scalar.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Config(format!("finite-difference step {eps} must be positive")));
    }
    let mut tape = Tape::new();
    let leaf = tape.param(x.clone());
    let loss = f(&mut tape, leaf)?;
    tape.backward(loss)?;
    let analytic = tape
        .grad(leaf)
        .ok_or_else(|| Error::Autodiff("input leaf received no gradient".into()))?
        .clone();
    if !analytic.is_finite() {
        return Err(Error::NonFinite("analytic gradient".into()));
    }

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.constant(probe.clone());
        let out = f(&mut tape, leaf)?;
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("function value".into()))
        }
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for k in 0..x.numel() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[k] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.data()[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
