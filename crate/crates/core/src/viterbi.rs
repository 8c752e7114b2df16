//! Offline most-likely-path decoding with the trachea start/end constraint.

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodVector;
use crate::tree::TransitionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub states: Vec<usize>,
    pub log_score: f64,
}

/// Forward max-product pass: scores and backpointers.
struct Trellis {
    n: usize,
    scores: Vec<f64>,
    back: Vec<usize>,
}

fn log_transitions(transition: &TransitionModel) -> Vec<f64> {
    let n = transition.len();
    (0..n * n).map(|k| transition.prob(k / n, k % n).ln()).collect()
}

fn check_inputs(likelihoods: &[LikelihoodVector], transition: &TransitionModel, root: usize) -> Result<usize> {
    let n = transition.len();
    if likelihoods.is_empty() {
        return Err(Error::EmptySequence);
    }
    if root >= n {
        return Err(Error::NodeIndex { index: root, n });
    }
    if let Some(bad) = likelihoods.iter().find(|l| l.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: bad.len(),
        });
    }
    Ok(n)
}

fn forward(likelihoods: &[LikelihoodVector], log_t: &[f64], n: usize, root: usize) -> Trellis {
    let steps = likelihoods.len();
    let mut scores = vec![f64::NEG_INFINITY; steps * n];
    let mut back = vec![0usize; steps * n];
    for (s, (score, l)) in scores.iter_mut().zip(likelihoods[0].as_slice()).enumerate() {
        let init: f64 = if s == root { 1.0 } else { 0.0 };
        *score = init.ln() + l.ln();
    }
    for t in 1..steps {
        let (prev, cur) = scores.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        let emissions = likelihoods[t].as_slice();
        for s in 0..n {
            let mut best = 0;
            let mut best_score = prev[0] + log_t[s];
            for j in 1..n {
                let candidate = prev[j] + log_t[j * n + s];
                if candidate > best_score {
                    best = j;
                    best_score = candidate;
                }
            }
            cur[s] = best_score + emissions[s].ln();
            back[t * n + s] = best;
        }
    }
    Trellis { n, scores, back }
}

/// Most likely state path under a one-hot start on `root`.
///
/// Maximizes the sum of per-frame log likelihoods plus log transition
/// probabilities. With `constrain_endpoints` the path must also end at
/// `root`. Ties go to the lower node index at every backtracking step.
pub fn viterbi_decode(
    likelihoods: &[LikelihoodVector],
    transition: &TransitionModel,
    root: usize,
    constrain_endpoints: bool,
) -> Result<DecodedPath> {
    let n = check_inputs(likelihoods, transition, root)?;
    let log_t = log_transitions(transition);
    let trellis = forward(likelihoods, &log_t, n, root);
    let steps = likelihoods.len();
    let last = &trellis.scores[(steps - 1) * n..];
    let end = if constrain_endpoints {
        root
    } else {
        crate::likelihood::argmax(last)
    };
    Ok(DecodedPath {
        states: backtrack(&trellis, steps, end),
        log_score: last[end],
    })
}

fn backtrack(trellis: &Trellis, steps: usize, end: usize) -> Vec<usize> {
    let n = trellis.n;
    let mut states = vec![0; steps];
    states[steps - 1] = end;
    for t in (1..steps).rev() {
        states[t - 1] = trellis.back[t * n + states[t]];
    }
    states
}

/// Per-frame node rankings consistent with the decoded path.
///
/// Each node is scored by the best path through it at that frame (forward
/// plus backward max-product). The decoded state always ranks first; other
/// nodes follow by descending score, ties by index.
pub fn viterbi_rankings(
    likelihoods: &[LikelihoodVector],
    transition: &TransitionModel,
    root: usize,
    constrain_endpoints: bool,
) -> Result<(DecodedPath, Vec<Vec<usize>>)> {
    let n = check_inputs(likelihoods, transition, root)?;
    let log_t = log_transitions(transition);
    let trellis = forward(likelihoods, &log_t, n, root);
    let steps = likelihoods.len();
    let last = &trellis.scores[(steps - 1) * n..];
    let end = if constrain_endpoints {
        root
    } else {
        crate::likelihood::argmax(last)
    };
    let path = DecodedPath {
        states: backtrack(&trellis, steps, end),
        log_score: last[end],
    };

    // backward[t][s]: best continuation score from state s at frame t
    let mut backward = vec![f64::NEG_INFINITY; steps * n];
    for s in 0..n {
        if !constrain_endpoints || s == root {
            backward[(steps - 1) * n + s] = 0.0;
        }
    }
    for t in (0..steps - 1).rev() {
        let emissions = likelihoods[t + 1].as_slice();
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for next in 0..n {
                let candidate = log_t[s * n + next] + emissions[next].ln() + backward[(t + 1) * n + next];
                if candidate > best {
                    best = candidate;
                }
            }
            backward[t * n + s] = best;
        }
    }

    let rankings = (0..steps)
        .map(|t| {
            let score = |s: usize| trellis.scores[t * n + s] + backward[t * n + s];
            let decoded = path.states[t];
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                (b == decoded)
                    .cmp(&(a == decoded))
                    .then(score(b).total_cmp(&score(a)))
                    .then(a.cmp(&b))
            });
            order
        })
        .collect();
    Ok((path, rankings))
}
