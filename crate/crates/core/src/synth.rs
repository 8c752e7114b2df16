//! Synthetic bronchoscopy-like sequences with ground truth.
//!
//! Frames show a bright background with flat dark elliptical lumens. While
//! the scope dwells inside a segment one lumen is visible; while it passes a
//! branching node at least two are. Each transition window flips its truth
//! label from the old node to the new one at its midpoint.
//!
//! Likelihood rows mix the true node with a per-frame confusion class drawn
//! uniformly over all nodes: `(1 - noise) * onehot(truth) + noise *
//! onehot(confusion)`. With `noise = 0` rows are exact one-hots.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::format_truth;
use crate::frames::{frame_file_name, write_gray};
use crate::imaging::GrayImage;
use crate::likelihood::{normalize, save_likelihood_file, LikelihoodVector};
use crate::tree::TreeModel;

/// Filled dark ellipse, axis-aligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lumen {
    pub cx: f64,
    pub cy: f64,
    pub ax: f64,
    pub ay: f64,
    pub intensity: u8,
}

impl Lumen {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.ax;
        let dy = (y - self.cy) / self.ay;
        dx * dx + dy * dy <= 1.0
    }
}

/// Renders lumens over a constant background. Pixel `(x, y)` is inside a
/// lumen when its center `(x + 0.5, y + 0.5)` is.
pub fn render_frame(lumens: &[Lumen], background: u8, width: usize, height: usize) -> Result<GrayImage> {
    for l in lumens {
        let inside = l.ax > 0.0
            && l.ay > 0.0
            && l.cx - l.ax >= 0.0
            && l.cy - l.ay >= 0.0
            && l.cx + l.ax <= width as f64
            && l.cy + l.ay <= height as f64;
        if !inside {
            return Err(Error::EllipseOutOfBounds {
                cx: l.cx,
                cy: l.cy,
                ax: l.ax,
                ay: l.ay,
                width,
                height,
            });
        }
        if l.intensity >= background {
            return Err(Error::InvalidParam(format!(
                "lumen intensity {} must be darker than background {background}",
                l.intensity
            )));
        }
    }
    GrayImage::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        lumens
            .iter()
            .find(|l| l.contains(px, py))
            .map_or(background, |l| l.intensity)
    })
}

/// Lumens of roughly `area_fraction` of the frame each, spread evenly on a
/// circle around the frame center. Non-overlapping for up to 4 lumens of
/// at most 5% each.
pub fn lumen_layout(count: usize, area_fraction: f64, size: usize, intensity: u8, rng: &mut impl Rng) -> Vec<Lumen> {
    let s = size as f64;
    let area = area_fraction * s * s;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let ring = if count == 1 { 0.08 * s } else { 0.25 * s };
    (0..count)
        .map(|i| {
            let aspect: f64 = rng.random_range(0.75..1.3);
            let radius = (area / std::f64::consts::PI).sqrt();
            let angle = phase + i as f64 * std::f64::consts::TAU / count as f64;
            Lumen {
                cx: s / 2.0 + ring * angle.cos(),
                cy: s / 2.0 + ring * angle.sin(),
                ax: radius * aspect.sqrt(),
                ay: radius / aspect.sqrt(),
                intensity,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub frames_per_node: usize,
    pub frames_per_transition: usize,
    pub noise: f64,
    /// Square frame side in pixels.
    pub size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frames_per_node: 1,
            frames_per_transition: 4,
            noise: 0.0,
            size: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<GrayImage>,
    pub truth: Vec<usize>,
    pub walk: Vec<usize>,
    /// Frames rendered with two or more lumens.
    pub branch_frames: Vec<bool>,
    pub likelihoods: Vec<LikelihoodVector>,
    pub seed: u64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn validate_walk(tree: &TreeModel, walk: &[usize]) -> Result<()> {
    let first = *walk.first().ok_or_else(|| Error::InvalidWalk("walk is empty".into()))?;
    if first != tree.root_index() {
        return Err(Error::InvalidWalk(format!("walk must start at {}", tree.label(tree.root_index()))));
    }
    for pair in walk.windows(2) {
        if pair[0] >= tree.len() || pair[1] >= tree.len() {
            return Err(Error::NodeIndex {
                index: pair[0].max(pair[1]),
                n: tree.len(),
            });
        }
        if !tree.are_adjacent(pair[0], pair[1]) {
            return Err(Error::InvalidWalk(format!(
                "{} and {} are not adjacent",
                tree.label(pair[0]),
                tree.label(pair[1])
            )));
        }
    }
    Ok(())
}

/// Parses a comma-separated list of node labels.
pub fn parse_walk(tree: &TreeModel, text: &str) -> Result<Vec<usize>> {
    let walk = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|label| {
            tree.index_of(label)
                .ok_or_else(|| Error::InvalidWalk(format!("unknown node {label}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_walk(tree, &walk)?;
    Ok(walk)
}

/// Root to a random node of depth `1..=max_depth` and back to the root.
pub fn random_walk(tree: &TreeModel, max_depth: u32, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let targets: Vec<usize> = (0..tree.len())
        .filter(|&i| i != tree.root_index() && tree.depth(i) <= max_depth)
        .collect();
    if targets.is_empty() {
        return Err(Error::InvalidWalk(format!("no nodes within depth {max_depth}")));
    }
    let target = targets[rng.random_range(0..targets.len())];
    let mut walk = tree.path(tree.root_index(), target)?;
    let back: Vec<usize> = walk.iter().rev().skip(1).copied().collect();
    walk.extend(back);
    Ok(walk)
}

/// `count` independent [`random_walk`]s from one seeded generator.
pub fn random_walks(tree: &TreeModel, count: usize, max_depth: u32, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_walk(tree, max_depth, &mut rng)).collect()
}

/// Number of lumens seen while passing between adjacent nodes `a` and `b`:
/// the child count of the shallower node, at least two.
fn branch_lumens(tree: &TreeModel, a: usize, b: usize) -> usize {
    let upper = if tree.depth(a) <= tree.depth(b) { a } else { b };
    let children = tree
        .neighbors(upper)
        .iter()
        .filter(|&&c| tree.depth(c) > tree.depth(upper))
        .count();
    children.clamp(2, 4)
}

fn lumen_fraction(count: usize) -> f64 {
    // keeps the dark total under the 10th percentile and each lumen over 1%
    (0.09 / count as f64).min(0.05)
}

pub fn generate_sequence(tree: &TreeModel, walk: &[usize], config: &SynthConfig, seed: u64) -> Result<SyntheticSequence> {
    validate_walk(tree, walk)?;
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::InvalidParam(format!("noise must be in [0, 1], got {}", config.noise)));
    }
    if config.size < 32 {
        return Err(Error::InvalidParam("frame size must be at least 32".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tree.len();

    // (truth, lumen count)
    let mut plan: Vec<(usize, usize)> = Vec::new();
    for (i, &node) in walk.iter().enumerate() {
        plan.extend(std::iter::repeat_n((node, 1), config.frames_per_node));
        if let Some(&next) = walk.get(i + 1) {
            let lumens = branch_lumens(tree, node, next);
            let m = config.frames_per_transition;
            plan.extend((0..m).map(|j| (if 2 * j < m { node } else { next }, lumens)));
        }
    }
    if plan.is_empty() {
        return Err(Error::EmptySequence);
    }

    let mut frames = Vec::with_capacity(plan.len());
    let mut truth = Vec::with_capacity(plan.len());
    let mut branch_frames = Vec::with_capacity(plan.len());
    let mut likelihoods = Vec::with_capacity(plan.len());
    for &(node, lumens) in &plan {
        let background: u8 = rng.random_range(150..=220);
        let intensity: u8 = rng.random_range(5..=40);
        let layout = lumen_layout(lumens, lumen_fraction(lumens), config.size, intensity, &mut rng);
        frames.push(render_frame(&layout, background, config.size, config.size)?);
        truth.push(node);
        branch_frames.push(lumens >= 2);

        let confusion = rng.random_range(0..n);
        let mut row = vec![0.0; n];
        row[node] += 1.0 - config.noise;
        row[confusion] += config.noise;
        likelihoods.push(normalize(&row)?);
    }

    Ok(SyntheticSequence {
        frames,
        truth,
        walk: walk.to_vec(),
        branch_frames,
        likelihoods,
        seed,
    })
}

/// Writes `frames/frame_NNNNN.pgm`, `truth.txt`, `likelihoods.csv` and
/// `tree.txt` under `dir`.
pub fn write_sequence(dir: impl AsRef<Path>, tree: &TreeModel, seq: &SyntheticSequence) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for (i, frame) in seq.frames.iter().enumerate() {
        write_gray(frames_dir.join(frame_file_name(i, "pgm")), frame)?;
    }
    let truth_path = dir.join("truth.txt");
    std::fs::write(&truth_path, format_truth(&seq.truth, tree)).map_err(|e| Error::io(&truth_path, e))?;
    save_likelihood_file(dir.join("likelihoods.csv"), tree, &seq.likelihoods)?;
    tree.save(dir.join("tree.txt"))
}
