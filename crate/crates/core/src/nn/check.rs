use std::fmt::Display;

use super::params::ParameterStore;
use super::session::{Mode, Session};
use crate::tensor::{relative_error, GradCheckError, Var};

/// Absolute disagreement below this is central-difference rounding noise;
/// it matters for gradients that vanish identically, such as attention key
/// biases under softmax shift invariance.
pub const ABS_NOISE: f64 = 1e-9;

/// Central-difference check of the gradients of a scalar function of every
/// parameter in `store`.
///
/// `f` builds the scalar on a fresh session; it must not depend on dropout.
/// At most `max_coords` coordinates per parameter are probed, spread evenly.
/// Returns the worst relative error, as in
/// [`finite_difference_check`](crate::tensor::finite_difference_check),
/// over coordinates whose absolute disagreement exceeds [`ABS_NOISE`].
pub fn parameter_gradient_check<F, E>(
    store: &ParameterStore,
    f: F,
    epsilon: f64,
    max_coords: usize,
) -> Result<f64, GradCheckError>
where
    F: for<'s, 'p> Fn(&'s mut Session<'p>) -> Result<Var, E>,
    E: Display,
{
    if !(epsilon > 0.0) {
        return Err(GradCheckError::BadEpsilon(epsilon));
    }
    let analytic = {
        let mut s = Session::new(store, Mode::Train, 0);
        let out = f(&mut s).map_err(|e| GradCheckError::Eval(e.to_string()))?;
        if s.graph.value(out).len() != 1 {
            return Err(GradCheckError::NotScalar);
        }
        s.graph.backward(out).map_err(|e| GradCheckError::Eval(e.to_string()))?;
        s.param_grads()
    };
    let value = |probe: &ParameterStore| -> Result<f64, GradCheckError> {
        let mut s = Session::new(probe, Mode::Eval, 0);
        let out = f(&mut s).map_err(|e| GradCheckError::Eval(e.to_string()))?;
        Ok(s.graph.value(out).item())
    };

    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for (p, grad) in analytic.iter().enumerate() {
        let len = store.tensors()[p].len();
        let stride = len.div_ceil(max_coords.max(1)).max(1);
        for index in (0..len).step_by(stride) {
            let original = store.tensors()[p].data()[index];
            probe.tensors_mut()[p].data_mut()[index] = original + epsilon;
            let plus = value(&probe)?;
            probe.tensors_mut()[p].data_mut()[index] = original - epsilon;
            let minus = value(&probe)?;
            probe.tensors_mut()[p].data_mut()[index] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(GradCheckError::NonFinite { index: flat + index });
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.as_ref().map_or(0.0, |g| g[index]);
            if (a - numeric).abs() > ABS_NOISE {
                worst = worst.max(relative_error(a, numeric));
            }
        }
        flat += len;
    }
    Ok(worst)
}
