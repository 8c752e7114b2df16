//! Recursive discrete Bayesian localization over tree nodes.
//!
//! The posterior starts as a one-hot vector on the root. Each later frame
//! runs a prediction through the transition prior and, when the gate policy
//! allows it, multiplies in the frame likelihood. Everything stays in linear
//! space and is renormalized every step.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodVector;
use crate::tree::{TransitionModel, TreeModel};

/// When the likelihood is multiplied into the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum GatePolicy {
    /// Only on frames where the branching-point detector fires.
    #[default]
    BranchGated,
    AlwaysUpdate,
    NeverUpdate,
}

impl GatePolicy {
    pub fn should_update(self, is_branch: bool) -> bool {
        match self {
            GatePolicy::BranchGated => is_branch,
            GatePolicy::AlwaysUpdate => true,
            GatePolicy::NeverUpdate => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GatePolicy::BranchGated => "branch",
            GatePolicy::AlwaysUpdate => "always",
            GatePolicy::NeverUpdate => "never",
        }
    }
}

impl FromStr for GatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branch" => Ok(GatePolicy::BranchGated),
            "always" => Ok(GatePolicy::AlwaysUpdate),
            "never" => Ok(GatePolicy::NeverUpdate),
            other => Err(Error::InvalidParam(format!("unknown gate policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    probs: Vec<f64>,
    frame: usize,
}

impl Posterior {
    /// Arbitrary starting distribution at frame 0.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let v = crate::likelihood::normalize(&probs)?;
        Ok(Self {
            probs: v.into_inner(),
            frame: 0,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn argmax(&self) -> usize {
        crate::likelihood::argmax(&self.probs)
    }
}

/// One-hot on the root node at frame 0.
pub fn init_posterior(tree: &TreeModel) -> Posterior {
    let mut probs = vec![0.0; tree.len()];
    probs[tree.root_index()] = 1.0;
    Posterior { probs, frame: 0 }
}

/// `out[i] = sum_j prior(j -> i) * posterior[j]`, renormalized.
pub fn predict(posterior: &[f64], transition: &TransitionModel) -> Result<Vec<f64>> {
    let n = transition.len();
    if posterior.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: posterior.len(),
        });
    }
    let mut out = vec![0.0; n];
    for (from, &p) in posterior.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, &t) in out.iter_mut().zip(transition.row(from)) {
            *o += t * p;
        }
    }
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// `posterior ∝ likelihood ⊙ predicted`.
pub fn update(predicted: &[f64], likelihood: &LikelihoodVector) -> Result<Vec<f64>> {
    if predicted.len() != likelihood.len() {
        return Err(Error::Dimension {
            expected: predicted.len(),
            actual: likelihood.len(),
        });
    }
    let mut out: Vec<f64> = predicted
        .iter()
        .zip(likelihood.as_slice())
        .map(|(p, l)| p * l)
        .collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

/// Running filter for one sequence.
#[derive(Debug, Clone)]
pub struct FilterState<'a> {
    posterior: Posterior,
    transition: &'a TransitionModel,
    gate: GatePolicy,
}

impl<'a> FilterState<'a> {
    pub fn new(tree: &TreeModel, transition: &'a TransitionModel, gate: GatePolicy) -> Result<Self> {
        Self::with_prior(init_posterior(tree), transition, gate)
    }

    pub fn with_prior(posterior: Posterior, transition: &'a TransitionModel, gate: GatePolicy) -> Result<Self> {
        if posterior.probs.len() != transition.len() {
            return Err(Error::Dimension {
                expected: transition.len(),
                actual: posterior.probs.len(),
            });
        }
        Ok(Self {
            posterior,
            transition,
            gate,
        })
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn gate(&self) -> GatePolicy {
        self.gate
    }

    /// Advances one frame. Returns whether the likelihood was applied.
    pub fn step(&mut self, likelihood: &LikelihoodVector, is_branch: bool) -> Result<bool> {
        let predicted = predict(&self.posterior.probs, self.transition)?;
        let apply = self.gate.should_update(is_branch);
        let probs = if apply {
            update(&predicted, likelihood)?
        } else {
            predicted
        };
        self.posterior = Posterior {
            probs,
            frame: self.posterior.frame + 1,
        };
        Ok(apply)
    }
}

/// The `k` most probable nodes, descending; ties go to the lower index.
pub fn top_k(probs: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > probs.len() {
        return Err(Error::InvalidParam(format!(
            "k must be in 1..={}, got {k}",
            probs.len()
        )));
    }
    let mut order = ranking(probs);
    order.truncate(k);
    Ok(order.into_iter().map(|i| (i, probs[i])).collect())
}

/// All node indices sorted by descending probability, ties by index.
pub fn ranking(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}
