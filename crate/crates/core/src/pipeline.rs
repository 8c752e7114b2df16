//! Online localization pipeline and batch helpers.
//!
//! [`Localizer`] consumes frames in order and emits one posterior per frame
//! as soon as that frame is processed. Frame 0 reports the initial one-hot
//! root posterior; its likelihood is never applied.

use crate::detector::{detect_branch, BranchDetection, DetectorParams};
use crate::error::{Error, Result};
use crate::eval::SequenceResult;
use crate::filter::{ranking, FilterState, GatePolicy};
use crate::imaging::{quantize_levels, GrayImage, KMeansParams, QuantizedImage};
use crate::likelihood::{FrameClassifier, LikelihoodVector, PROBABILITY_FLOOR};
use crate::par::{self, Execution};
use crate::tree::{TransitionModel, TreeModel};

/// Where per-frame likelihoods come from.
#[derive(Clone, Copy)]
pub enum LikelihoodSource<'a> {
    /// Precomputed rows, one per frame.
    Table(&'a [LikelihoodVector]),
    /// A classifier applied to each quantized frame.
    Classifier(&'a dyn FrameClassifier),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detector: DetectorParams,
    pub kmeans: KMeansParams,
    pub gate: GatePolicy,
    /// Lower bound applied to every likelihood entry before the update.
    pub floor: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detector: DetectorParams::default(),
            kmeans: KMeansParams::default(),
            gate: GatePolicy::default(),
            floor: PROBABILITY_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: usize,
    pub lumen_count: usize,
    pub is_branch: bool,
    /// Whether the likelihood was multiplied in on this frame.
    pub updated: bool,
    pub posterior: Vec<f64>,
}

pub struct Localizer<'a> {
    tree: &'a TreeModel,
    state: FilterState<'a>,
    source: LikelihoodSource<'a>,
    config: PipelineConfig,
    next_frame: usize,
}

impl<'a> Localizer<'a> {
    pub fn new(
        tree: &'a TreeModel,
        transition: &'a TransitionModel,
        source: LikelihoodSource<'a>,
        config: PipelineConfig,
    ) -> Result<Self> {
        config.detector.validate()?;
        if transition.len() != tree.len() {
            return Err(Error::Dimension {
                expected: tree.len(),
                actual: transition.len(),
            });
        }
        if let LikelihoodSource::Table(rows) = source {
            if let Some(bad) = rows.iter().find(|r| r.len() != tree.len()) {
                return Err(Error::Dimension {
                    expected: tree.len(),
                    actual: bad.len(),
                });
            }
        }
        Ok(Self {
            tree,
            state: FilterState::new(tree, transition, config.gate)?,
            source,
            config,
            next_frame: 0,
        })
    }

    pub fn tree(&self) -> &TreeModel {
        self.tree
    }

    fn likelihood(&self, frame: usize, gray: &GrayImage) -> Result<LikelihoodVector> {
        match self.source {
            LikelihoodSource::Table(rows) => rows.get(frame).cloned().ok_or_else(|| {
                Error::LikelihoodFormat(format!("no likelihood row for frame {frame} ({} rows)", rows.len()))
            }),
            LikelihoodSource::Classifier(c) => {
                let q = quantize_levels(gray, &self.config.kmeans)?;
                Ok(c.classify(&q))
            }
        }
    }

    /// Runs detection and one filter step on the next frame.
    pub fn process(&mut self, gray: &GrayImage) -> Result<FrameOutput> {
        let detection = detect_branch(gray, &self.config.detector)?;
        let frame = self.next_frame;
        let updated = if frame == 0 {
            false
        } else if self.config.gate.should_update(detection.is_branch) {
            let l = self.likelihood(frame, gray)?.floored(self.config.floor);
            self.state.step(&l, detection.is_branch)?
        } else {
            // likelihood is not consulted on frames the gate skips
            self.state.step(&LikelihoodVector::uniform(self.tree.len()), detection.is_branch)?
        };
        self.next_frame += 1;
        Ok(FrameOutput {
            frame,
            lumen_count: detection.lumen_count,
            is_branch: detection.is_branch,
            updated,
            posterior: self.state.posterior().probs().to_vec(),
        })
    }
}

/// Runs a [`Localizer`] over a whole in-memory sequence.
pub fn localize_sequence(
    tree: &TreeModel,
    transition: &TransitionModel,
    frames: &[GrayImage],
    source: LikelihoodSource<'_>,
    config: &PipelineConfig,
) -> Result<Vec<FrameOutput>> {
    let mut localizer = Localizer::new(tree, transition, source, config.clone())?;
    frames.iter().map(|f| localizer.process(f)).collect()
}

pub fn detect_all(frames: &[GrayImage], params: &DetectorParams, exec: Execution) -> Result<Vec<BranchDetection>> {
    par::try_map(exec, frames, |f| detect_branch(f, params))
}

pub fn quantize_all(frames: &[GrayImage], params: &KMeansParams, exec: Execution) -> Result<Vec<QuantizedImage>> {
    par::try_map(exec, frames, |f| quantize_levels(f, params))
}

/// Filter posteriors given likelihoods and detector flags, frame 0 being
/// the initial posterior.
pub fn filter_posteriors(
    tree: &TreeModel,
    transition: &TransitionModel,
    likelihoods: &[LikelihoodVector],
    is_branch: &[bool],
    gate: GatePolicy,
    floor: f64,
) -> Result<Vec<Vec<f64>>> {
    if likelihoods.len() != is_branch.len() {
        return Err(Error::Dimension {
            expected: likelihoods.len(),
            actual: is_branch.len(),
        });
    }
    if likelihoods.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut state = FilterState::new(tree, transition, gate)?;
    let mut out = Vec::with_capacity(likelihoods.len());
    out.push(state.posterior().probs().to_vec());
    for (l, &b) in likelihoods.iter().zip(is_branch).skip(1) {
        state.step(&l.floored(floor), b)?;
        out.push(state.posterior().probs().to_vec());
    }
    Ok(out)
}

/// Rankings for the three compared estimators on one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    /// Per-frame argmax of the likelihood alone.
    pub raw: SequenceResult,
    pub always: SequenceResult,
    pub gated: SequenceResult,
}

pub fn ablation(
    id: &str,
    tree: &TreeModel,
    transition: &TransitionModel,
    likelihoods: &[LikelihoodVector],
    is_branch: &[bool],
    truth: &[usize],
    floor: f64,
) -> Result<Ablation> {
    let run = |gate| -> Result<SequenceResult> {
        let post = filter_posteriors(tree, transition, likelihoods, is_branch, gate, floor)?;
        SequenceResult::from_distributions(id, &post, truth.to_vec())
    };
    let raw_rankings = likelihoods.iter().map(|l| ranking(l.as_slice())).collect();
    Ok(Ablation {
        raw: SequenceResult::new(id, raw_rankings, truth.to_vec())?,
        always: run(GatePolicy::AlwaysUpdate)?,
        gated: run(GatePolicy::BranchGated)?,
    })
}

/// One sequence's inputs for [`ablation_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub id: String,
    pub frames: Vec<GrayImage>,
    pub likelihoods: Vec<LikelihoodVector>,
    pub truth: Vec<usize>,
}

/// Detects branches and runs [`ablation`] on every sequence; sequences are
/// processed in parallel under [`Execution::Parallel`].
pub fn ablation_batch(
    tree: &TreeModel,
    transition: &TransitionModel,
    sequences: &[SequenceInput],
    detector: &DetectorParams,
    floor: f64,
    exec: Execution,
) -> Result<Vec<Ablation>> {
    par::try_map(exec, sequences, |s| {
        let flags = s
            .frames
            .iter()
            .map(|f| detect_branch(f, detector).map(|d| d.is_branch))
            .collect::<Result<Vec<_>>>()?;
        ablation(&s.id, tree, transition, &s.likelihoods, &flags, &s.truth, floor)
    })
}
