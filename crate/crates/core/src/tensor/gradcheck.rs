use std::fmt::Display;

use thiserror::Error;

use super::{Graph, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradCheckError {
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("function evaluation failed: {0}")]
    Eval(String),
    #[error("non-finite function value at probe of coordinate {index}")]
    NonFinite { index: usize },
    #[error("function output is not a scalar")]
    NotScalar,
}

/// Compares the tape gradient of `f` at `x` against central differences.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn finite_difference_check<F, E>(f: F, x: &Tensor, epsilon: f64) -> Result<f64, GradCheckError>
where
    F: for<'g> Fn(&mut Graph<'g>, Var) -> Result<Var, E>,
    E: Display,
{
    if !(epsilon > 0.0) {
        return Err(GradCheckError::BadEpsilon(epsilon));
    }
    let eval = |point: Tensor, requires_grad: bool| -> Result<(f64, Option<Vec<f64>>), GradCheckError> {
        let mut g = Graph::new();
        let input = g.leaf(point, requires_grad);
        let out = f(&mut g, input).map_err(|e| GradCheckError::Eval(e.to_string()))?;
        if g.value(out).len() != 1 {
            return Err(GradCheckError::NotScalar);
        }
        let value = g.value(out).item();
        if !requires_grad {
            return Ok((value, None));
        }
        g.backward(out).map_err(|e| GradCheckError::Eval(e.to_string()))?;
        let grad = g.grad(input).map(<[f64]>::to_vec);
        Ok((value, grad))
    };

    let (_, analytic) = eval(x.clone(), true)?;
    let analytic = analytic.unwrap_or_else(|| vec![0.0; x.len()]);
    let mut worst: f64 = 0.0;
    for index in 0..x.len() {
        let mut probe = x.clone();
        probe.data_mut()[index] += epsilon;
        let (plus, _) = eval(probe.clone(), false)?;
        probe.data_mut()[index] -= 2.0 * epsilon;
        let (minus, _) = eval(probe, false)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(GradCheckError::NonFinite { index });
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[index], numeric));
    }
    Ok(worst)
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}
