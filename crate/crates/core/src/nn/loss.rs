use crate::error::{Error, Result};

/// Probability mass over discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyPmf {
    probs: Vec<f64>,
}

impl PolicyPmf {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Wraps an explicit distribution; entries must be non-negative and sum to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument("not a probability vector".into()));
        }
        Ok(Self { probs })
    }
}

/// Max-shifted softmax.
pub fn softmax(q: &[f64]) -> Result<PolicyPmf> {
    if q.is_empty() {
        return Err(Error::shape("softmax of an empty vector"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(PolicyPmf {
        probs: exps.into_iter().map(|e| e / total).collect(),
    })
}

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WorstActionLoss {
    pub loss: f64,
    /// Gradient of the loss with respect to the logits that produced the pmf.
    pub logit_grad: Vec<f64>,
    /// Set when `pmf[worst]` fell below [`PROB_FLOOR`] and was clamped.
    pub clamped: bool,
}

/// Cross-entropy against the one-hot distribution on `worst`:
/// `-log pmf[worst]`, with gradient `pmf - onehot(worst)` through the softmax.
pub fn worst_action_loss(pmf: &PolicyPmf, worst: usize) -> Result<WorstActionLoss> {
    cross_entropy_onehot(pmf, worst)
}

pub(crate) fn cross_entropy_onehot(pmf: &PolicyPmf, target: usize) -> Result<WorstActionLoss> {
    let p = *pmf.probs.get(target).ok_or_else(|| {
        Error::Argument(format!("action index {target} out of range for {} actions", pmf.len()))
    })?;
    let clamped = p < PROB_FLOOR;
    let loss = -p.max(PROB_FLOOR).ln();
    let logit_grad = pmf
        .probs
        .iter()
        .enumerate()
        .map(|(i, &pi)| if i == target { pi - 1.0 } else { pi })
        .collect();
    Ok(WorstActionLoss {
        loss,
        logit_grad,
        clamped,
    })
}
