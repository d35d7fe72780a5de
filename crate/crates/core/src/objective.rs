//! Answer loss, attention-supervision loss and their weighted combination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::supervision::{SupervisionKind, SupervisionMatrix};
use crate::tensor::{Graph, Tensor, TensorError, Var};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("answer position set is empty")]
    NoAnswerPositions,
    #[error("attention is {attention}x{attention} but supervision matrix is {supervision}x{supervision}")]
    DimensionMismatch { attention: usize, supervision: usize },
    #[error("loss component `{component}` is not finite ({value})")]
    NonFinite { component: String, value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `-ln(sum of probabilities at the answer positions)` on the tape.
pub fn answer_loss(g: &mut Graph, probs: Var, positions: &[usize]) -> Result<Var, ObjectiveError> {
    if positions.is_empty() {
        return Err(ObjectiveError::NoAnswerPositions);
    }
    let picked = g.gather_rows(probs, positions)?;
    let mass = g.sum_all(picked)?;
    let mass = g.clamp_min(mass, PROB_FLOOR);
    let log = g.log(mass)?;
    Ok(g.neg(log))
}

/// Attention-target loss for one head.
///
/// For each row `i` with targets: `-ln(sum_j A_ij S_ij) * sum_j S_ij`
/// (the multiplier is 1 when `weighted` is false), averaged over the `k`
/// rows that have targets. Returns `None` when `k = 0`, so no gradient flows.
pub fn supervision_loss(
    g: &mut Graph,
    attention: Var,
    targets: &SupervisionMatrix,
    weighted: bool,
) -> Result<Option<Var>, ObjectiveError> {
    let n = g.shape(attention)[0];
    if g.shape(attention) != [targets.n, targets.n] {
        return Err(ObjectiveError::DimensionMismatch {
            attention: n,
            supervision: targets.n,
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| !targets.rows[i].is_empty()).collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let weights: Vec<f64> = rows
        .iter()
        .map(|&i| if weighted { targets.rows[i].len() as f64 } else { 1.0 })
        .collect();
    let mask = g.constant(targets.to_dense());
    let on_target = g.mul(attention, mask)?;
    let mass = g.sum_axis(on_target, 1)?;
    let mass = g.gather_rows(mass, &rows)?;
    let mass = g.clamp_min(mass, PROB_FLOOR);
    let log = g.log(mass)?;
    let weights = g.constant(Tensor::vector(weights));
    let weighted_log = g.mul(log, weights)?;
    let total = g.sum_all(weighted_log)?;
    Ok(Some(g.scale(total, -1.0 / rows.len() as f64)))
}

/// Per-target-row mass `sum_j A_ij S_ij` for rows that have targets.
pub fn target_mass(attention: &Tensor, targets: &SupervisionMatrix) -> Vec<Option<f64>> {
    (0..targets.n)
        .map(|i| {
            let row = &targets.rows[i];
            (!row.is_empty()).then(|| row.iter().map(|&j| attention.get(&[i, j])).sum())
        })
        .collect()
}

/// Loss components of one instance or the mean over a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub answer_loss: f64,
    pub supervision_losses: BTreeMap<SupervisionKind, f64>,
    pub lambda: f64,
    pub total: f64,
}

/// Combines components as `answer + lambda * sum(supervision)`. Several
/// heads carrying the same kind are summed under that kind.
pub fn total_loss(
    answer: f64,
    supervision: &[(SupervisionKind, f64)],
    lambda: f64,
) -> Result<LossBreakdown, ObjectiveError> {
    let check = |component: String, value: f64| {
        if value.is_finite() {
            Ok(())
        } else {
            Err(ObjectiveError::NonFinite { component, value })
        }
    };
    check("answer".into(), answer)?;
    check("lambda".into(), lambda)?;
    let mut losses = BTreeMap::new();
    for &(kind, value) in supervision {
        check(kind.to_string(), value)?;
        *losses.entry(kind).or_insert(0.0) += value;
    }
    let aux: f64 = losses.values().sum();
    Ok(LossBreakdown {
        answer_loss: answer,
        total: answer + lambda * aux,
        supervision_losses: losses,
        lambda,
    })
}

/// Component-wise mean over instances.
pub fn mean_breakdown(items: &[LossBreakdown]) -> Option<LossBreakdown> {
    let first = items.first()?;
    let count = items.len() as f64;
    let mut losses: BTreeMap<SupervisionKind, f64> = BTreeMap::new();
    for item in items {
        for (&k, &v) in &item.supervision_losses {
            *losses.entry(k).or_insert(0.0) += v / count;
        }
    }
    Some(LossBreakdown {
        answer_loss: items.iter().map(|b| b.answer_loss).sum::<f64>() / count,
        total: items.iter().map(|b| b.total).sum::<f64>() / count,
        supervision_losses: losses,
        lambda: first.lambda,
    })
}
