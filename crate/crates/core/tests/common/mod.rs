//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except to build inputs.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::Rng;

use broncholoc::TreeModel;

/// Random tree on `n` nodes: node `i > 0` hangs off a uniformly chosen
/// earlier node. Node 0 is the root.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> (Vec<String>, Vec<(usize, usize)>) {
    let mut nodes = vec!["TRA".to_owned()];
    nodes.extend((1..n).map(|i| format!("N{i}")));
    let edges = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    (nodes, edges)
}

pub fn random_tree_model(n: usize, rng: &mut impl Rng) -> TreeModel {
    let (nodes, edges) = random_tree(n, rng);
    TreeModel::new(nodes, edges, 0).unwrap()
}

/// All-pairs hop counts by Floyd-Warshall over the edge list.
pub fn floyd_distances(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u64>> {
    let inf = u64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Row-normalized distance prior evaluated entry by entry.
pub fn transition_oracle(n: usize, edges: &[(usize, usize)], alpha: f64, m: u64) -> Vec<Vec<f64>> {
    let d = floyd_distances(n, edges);
    d.iter()
        .map(|row| {
            let w: Vec<f64> = row
                .iter()
                .map(|&dist| {
                    let a = alpha * (dist as f64 + 1.0);
                    if dist <= m {
                        1.0 - a
                    } else {
                        a
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
        .collect()
}

pub fn random_distribution(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Odometer over all `n^len` index sequences.
fn for_each_path(n: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut path = vec![0usize; len];
    loop {
        f(&path);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Posterior over the state at frame `t` by summing the weight of every
/// path `s_0 = root, s_1, ..., s_t`. Frame 0's likelihood is not used; frame
/// `u`'s is multiplied in when `gates[u]` is set.
pub fn filter_oracle(
    matrix: &[Vec<f64>],
    root: usize,
    likelihoods: &[Vec<f64>],
    gates: &[bool],
    t: usize,
) -> Vec<f64> {
    let n = matrix.len();
    let mut marginal = vec![0.0; n];
    if t == 0 {
        marginal[root] = 1.0;
        return marginal;
    }
    for_each_path(n, t, |tail| {
        let mut w = 1.0;
        let mut prev = root;
        for (u, &s) in tail.iter().enumerate() {
            w *= matrix[prev][s];
            if gates[u + 1] {
                w *= likelihoods[u + 1][s];
            }
            prev = s;
        }
        marginal[prev] += w;
    });
    let total: f64 = marginal.iter().sum();
    marginal.iter().map(|x| x / total).collect()
}

/// Best path by exhaustive enumeration. Scores accumulate left to right as
/// `((score + ln T) + ln L)`. Among equal scores the path that is smallest
/// when read from the last frame backwards wins.
pub fn viterbi_oracle(
    log_t: &[Vec<f64>],
    root: usize,
    likelihoods: &[Vec<f64>],
    constrained: bool,
) -> (Vec<usize>, f64) {
    let n = log_t.len();
    let steps = likelihoods.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_path(n, steps - 1, |tail| {
        if constrained && steps > 1 && tail[steps - 2] != root {
            return;
        }
        let mut score = likelihoods[0][root].ln();
        let mut prev = root;
        for (u, &s) in tail.iter().enumerate() {
            score = (score + log_t[prev][s]) + likelihoods[u + 1][s].ln();
            prev = s;
        }
        let mut path = vec![root];
        path.extend_from_slice(tail);
        let better = match &best {
            None => true,
            Some((bp, bs)) => score > *bs || (score == *bs && path.iter().rev().lt(bp.iter().rev())),
        };
        if better {
            best = Some((path, score));
        }
    });
    best.unwrap()
}

/// Exact within-cluster sum of squares for the given contiguous groups of
/// `(value, count)` pairs.
pub fn exact_sse(groups: &[&[(u64, u64)]]) -> Ratio<i128> {
    groups
        .iter()
        .map(|g| {
            let w: i128 = g.iter().map(|&(_, c)| c as i128).sum();
            if w == 0 {
                return Ratio::from_integer(0);
            }
            let s1: i128 = g.iter().map(|&(v, c)| v as i128 * c as i128).sum();
            let s2: i128 = g.iter().map(|&(v, c)| (v * v) as i128 * c as i128).sum();
            Ratio::new(w * s2 - s1 * s1, w)
        })
        .sum()
}

/// Global optimum of 1-D k-means by trying every placement of `k - 1`
/// thresholds between consecutive distinct values.
pub fn exhaustive_kmeans(values: &[(u64, u64)], k: usize) -> Ratio<i128> {
    let d = values.len();
    if d <= k {
        return Ratio::from_integer(0);
    }
    let mut best: Option<Ratio<i128>> = None;
    let mut cuts = Vec::with_capacity(k - 1);
    fn recurse(
        values: &[(u64, u64)],
        k: usize,
        start: usize,
        cuts: &mut Vec<usize>,
        best: &mut Option<Ratio<i128>>,
    ) {
        if cuts.len() == k - 1 {
            let mut bounds = vec![0];
            bounds.extend(cuts.iter().copied());
            bounds.push(values.len());
            let groups: Vec<&[(u64, u64)]> = bounds.windows(2).map(|w| &values[w[0]..w[1]]).collect();
            let sse = exact_sse(&groups);
            if best.as_ref().is_none_or(|b| sse < *b) {
                *best = Some(sse);
            }
            return;
        }
        for c in start..values.len() {
            cuts.push(c);
            recurse(values, k, c + 1, cuts, best);
            cuts.pop();
        }
    }
    recurse(values, k, 1, &mut cuts, &mut best);
    best.unwrap()
}

/// Pixels whose centers fall inside the axis-aligned ellipse.
pub fn ellipse_pixels(cx: f64, cy: f64, ax: f64, ay: f64, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let dx = (x as f64 + 0.5 - cx) / ax;
            let dy = (y as f64 + 0.5 - cy) / ay;
            if dx * dx + dy * dy <= 1.0 {
                out.push((x, y));
            }
        }
    }
    out
}

/// True if the pixel set is one 4-connected piece made of one horizontal
/// run per row, with runs in consecutive rows sharing a column.
pub fn is_row_convex_4_connected(pixels: &[(usize, usize)]) -> bool {
    use std::collections::BTreeMap;
    let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(x, y) in pixels {
        rows.entry(y).or_default().push(x);
    }
    let mut prev: Option<(usize, usize, usize)> = None;
    for (&y, xs) in &rows {
        let (lo, hi) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
        if hi - lo + 1 != xs.len() {
            return false;
        }
        if let Some((py, plo, phi)) = prev {
            if y != py + 1 || hi < plo || lo > phi {
                return false;
            }
        }
        prev = Some((y, lo, hi));
    }
    !rows.is_empty()
}

/// Nearest-rank percentile of a multiset of intensities.
pub fn nearest_rank(values: &[u8], percentile: f64) -> u8 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank - 1]
}
