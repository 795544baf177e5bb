//! Likelihood of observed motion under the model, gap inpainting, and
//! candidate selection by overlap with future detections.

use alloc::vec::Vec;
use rand::Rng;

use crate::codebook::{ClassIndex4, Codebook};
use crate::error::{Error, Result};
use crate::geometry::{apply_velocity, iou, BoundingBox, FrameDims, Velocity};
use crate::math::ln;
use crate::nn::tape::multinomial;
use crate::nn::{CellState, InteractionRep, MotionModel, StepDistribution, PROB_FLOOR};

pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Frame rate below which a single lookahead frame is used.
pub const LOW_FRAME_RATE: f64 = 20.0;

/// Lookahead depth for candidate rejection at a given frame rate.
pub fn default_lookahead(fps: f64) -> usize {
    if fps < LOW_FRAME_RATE {
        1
    } else {
        2
    }
}

/// Cost of assigning one detection to one tracklet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub tracklet: u64,
    pub detection: usize,
    pub nll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Top1,
    Multinomial,
}

/// One sampled continuation of a tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintCandidate {
    pub boxes: Vec<BoundingBox>,
    /// Sum of the log-probabilities of the sampled classes.
    pub log_prob: f64,
}

/// Recurrent state of a tracklet: the cell state and the velocity it will
/// consume on the next step (the zero start token before any motion).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionCursor {
    pub state: CellState,
    pub input: Velocity,
    /// Number of velocities consumed or pending so far.
    pub steps: usize,
}

impl MotionCursor {
    pub fn start(model: &MotionModel) -> Self {
        Self {
            state: model.artist_init(),
            input: Velocity::ZERO,
            steps: 0,
        }
    }

    pub fn at_start(&self) -> bool {
        self.steps == 0
    }

    /// Distribution of the next velocity together with the advanced state.
    pub fn predict(
        &self,
        model: &MotionModel,
        interaction: &InteractionRep,
    ) -> Result<(CellState, StepDistribution)> {
        model.artist_step(&self.state, &self.input, interaction)
    }

    /// Cursor after the predicted step has been resolved to `observed`.
    pub fn advance(&self, state: CellState, observed: Velocity) -> Self {
        Self {
            state,
            input: observed,
            steps: self.steps + 1,
        }
    }
}

/// Log-likelihood of a velocity under a step distribution; always `<= 0`.
pub fn score_next(dist: &StepDistribution, cb: &Codebook, observed: &Velocity) -> f64 {
    let c = cb.quantize(observed).to_array();
    (0..4)
        .map(|j| ln(dist.probs[j][c[j]].max(PROB_FLOOR)))
        .sum()
}

/// Score `velocities` starting from `cursor`, one interaction vector per step.
/// Returns the total log-likelihood and the cursor after the last velocity.
pub fn score_from(
    model: &MotionModel,
    cursor: &MotionCursor,
    velocities: &[Velocity],
    interactions: &[InteractionRep],
) -> Result<(f64, MotionCursor)> {
    if interactions.len() != velocities.len() {
        return Err(Error::Shape(
            "one interaction vector per velocity is required".into(),
        ));
    }
    let mut cur = cursor.clone();
    let mut total = 0.0;
    for (v, i) in velocities.iter().zip(interactions) {
        let (state, dist) = cur.predict(model, i)?;
        total += score_next(&dist, &model.codebook, v);
        cur = cur.advance(state, *v);
    }
    Ok((total, cur))
}

/// Autoregressive log-likelihood of a whole velocity sequence.
pub fn score_sequence(
    model: &MotionModel,
    velocities: &[Velocity],
    interactions: &[InteractionRep],
) -> Result<f64> {
    if velocities.is_empty() {
        return Err(Error::EmptySequence { needed: 1, got: 0 });
    }
    Ok(score_from(model, &MotionCursor::start(model), velocities, interactions)?.0)
}

/// Replay a velocity history; the returned cursor predicts the velocity
/// following the last one.
pub fn warm_up(
    model: &MotionModel,
    velocities: &[Velocity],
    interactions: &[InteractionRep],
) -> Result<MotionCursor> {
    Ok(score_from(model, &MotionCursor::start(model), velocities, interactions)?.1)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in p.iter().enumerate() {
        if q > p[best] {
            best = i;
        }
    }
    best
}

/// Draw motion classes from a step distribution.
pub fn sample_next<R: Rng + ?Sized>(
    dist: &StepDistribution,
    mode: SampleMode,
    rng: &mut R,
) -> ClassIndex4 {
    ClassIndex4::from_array(core::array::from_fn(|j| match mode {
        SampleMode::Top1 => argmax(&dist.probs[j]),
        SampleMode::Multinomial => multinomial(&dist.probs[j], rng),
    }))
}

/// Sample `s` continuations of `steps` boxes each, starting after `last`.
/// The same interaction vector is used for every generated step. Top-1
/// mode always returns a single candidate.
#[allow(clippy::too_many_arguments)]
pub fn inpaint_from<R: Rng + ?Sized>(
    model: &MotionModel,
    cursor: &MotionCursor,
    last: &BoundingBox,
    dims: FrameDims,
    interaction: &InteractionRep,
    steps: usize,
    s: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<InpaintCandidate>> {
    if steps == 0 || s == 0 {
        return Err(Error::Contract(
            "inpainting needs at least one step and one sample".into(),
        ));
    }
    let n = if mode == SampleMode::Top1 { 1 } else { s };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut cur = cursor.clone();
        let mut b = *last;
        let mut boxes = Vec::with_capacity(steps);
        let mut log_prob = 0.0;
        for _ in 0..steps {
            let (state, dist) = cur.predict(model, interaction)?;
            let c = sample_next(&dist, mode, rng);
            let ca = c.to_array();
            log_prob += (0..4)
                .map(|j| ln(dist.probs[j][ca[j]].max(PROB_FLOOR)))
                .sum::<f64>();
            let v = model.codebook.dequantize(&c)?;
            b = apply_velocity(&b, &v, dims);
            boxes.push(b);
            cur = cur.advance(state, v);
        }
        out.push(InpaintCandidate { boxes, log_prob });
    }
    Ok(out)
}

/// Warm the model on a box history, then sample `gap + lookahead` boxes per
/// candidate. `interactions` holds one vector per history velocity plus one
/// for the generated steps.
#[allow(clippy::too_many_arguments)]
pub fn inpaint<R: Rng + ?Sized>(
    model: &MotionModel,
    history: &[BoundingBox],
    dims: FrameDims,
    interactions: &[InteractionRep],
    gap: usize,
    lookahead: usize,
    s: usize,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<InpaintCandidate>> {
    let last = history
        .last()
        .ok_or(Error::EmptySequence { needed: 1, got: 0 })?;
    if gap == 0 {
        return Err(Error::Contract(
            "inpainting needs a gap of at least one frame".into(),
        ));
    }
    let vels: Vec<Velocity> = history
        .windows(2)
        .map(|w| Velocity::between(&w[0], &w[1], dims))
        .collect();
    if interactions.len() != vels.len() + 1 {
        return Err(Error::Shape(
            "one interaction vector per history velocity plus one is required".into(),
        ));
    }
    let cursor = warm_up(model, &vels, &interactions[..vels.len()])?;
    inpaint_from(
        model,
        &cursor,
        last,
        dims,
        &interactions[vels.len()],
        gap + lookahead,
        s,
        mode,
        rng,
    )
}

/// Outcome of candidate rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrsChoice {
    pub index: usize,
    pub iou_sum: f64,
    /// Whether the chosen candidate overlapped some detection above the
    /// threshold; `false` means the log-probability fallback was used.
    pub cleared: bool,
}

/// Per-candidate sum over the final `detections.len()` boxes of the best IoU
/// with that frame's detections, and whether any of those best IoUs reached
/// `iou_threshold`.
pub fn iou_sums(
    candidates: &[InpaintCandidate],
    detections: &[Vec<BoundingBox>],
    iou_threshold: f64,
) -> Vec<(f64, bool)> {
    candidates
        .iter()
        .map(|c| {
            let tail = &c.boxes[c.boxes.len().saturating_sub(detections.len())..];
            let frames = &detections[detections.len() - tail.len()..];
            let mut sum = 0.0;
            let mut cleared = false;
            for (b, dets) in tail.iter().zip(frames) {
                let best = dets.iter().map(|d| iou(b, d)).fold(0.0, f64::max);
                sum += best;
                cleared |= best >= iou_threshold;
            }
            (sum, cleared)
        })
        .collect()
}

/// Choose among candidates by overlap with the detections of the final
/// frames (`detections[i]` holds the detections of the i-th of those frames).
/// Only candidates whose best per-frame IoU reached `iou_threshold` at least
/// once compete on the IoU sum; without any, the most probable sample wins.
/// Ties go to the higher log-probability, then the lower index.
pub fn trs_select(
    candidates: &[InpaintCandidate],
    detections: &[Vec<BoundingBox>],
    iou_threshold: f64,
) -> Result<TrsChoice> {
    if candidates.is_empty() {
        return Err(Error::Contract(
            "candidate rejection needs at least one candidate".into(),
        ));
    }
    let scored = iou_sums(candidates, detections, iou_threshold);
    let any_cleared = scored.iter().any(|s| s.1);
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if any_cleared && !scored[i].1 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let key = |k: usize| if any_cleared { scored[k].0 } else { 0.0 };
                if key(i) > key(b) || (key(i) == key(b) && c.log_prob > candidates[b].log_prob) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let index = best.expect("at least one candidate");
    Ok(TrsChoice {
        index,
        iou_sum: scored[index].0,
        cleared: any_cleared,
    })
}
