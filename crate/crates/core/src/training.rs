//! Joint training of the interaction autoencoder and the motion model.
//!
//! The objective is `λ(iter)·NLL + L_rec` where `λ` follows a logistic ramp
//! from ~0 to ~1. Parameters are updated with Adam after clipping the global
//! gradient norm.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::codebook::{fit_codebooks, ClassIndex4, Codebook, DEFAULT_MAX_ITERS};
use crate::error::{Error, Result};
use crate::geometry::{jitter, seq_to_velocities, BoundingBox, FrameDims, Velocity};
use crate::math::{exp, sqrt};
use crate::nn::tape::{sample_loss, TeacherForcing, TrainSample};
use crate::nn::{ModelConfig, MotionModel, StepDistribution, Weights};
use crate::rng::{self, TrackRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Inclusive range of window lengths, in frames (boxes).
    pub seq_len_range: (usize, usize),
    pub grad_clip_norm: f64,
    /// Probability of feeding the model's own sampled velocity.
    pub teacher_force_prob: f64,
    /// Fraction of the window after which own samples may be fed.
    pub teacher_force_onset: f64,
    pub jitter_magnitude: f64,
    pub anneal_midpoint: f64,
    pub anneal_steepness: f64,
    pub interactions: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 110_000,
            batch_size: 256,
            learning_rate: 0.001,
            seq_len_range: (5, 100),
            grad_clip_norm: 5.0,
            teacher_force_prob: 0.2,
            teacher_force_onset: 0.7,
            jitter_magnitude: crate::geometry::DEFAULT_JITTER,
            anneal_midpoint: 0.3,
            anneal_steepness: 20.0,
            interactions: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule: 10k iterations with batches of 32.
    pub fn desk() -> Self {
        Self {
            iterations: 10_000,
            batch_size: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.seq_len_range;
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "iterations and batch_size must be positive".into(),
            ));
        }
        if lo < 2 || hi < lo {
            return Err(Error::Config(format!(
                "invalid sequence length range [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.teacher_force_prob)
            || !(0.0..=1.0).contains(&self.teacher_force_onset)
        {
            return Err(Error::Config(
                "teacher forcing parameters must lie in [0, 1]".into(),
            ));
        }
        if !(self.learning_rate > 0.0)
            || !(self.grad_clip_norm > 0.0)
            || !(self.jitter_magnitude >= 0.0)
        {
            return Err(Error::Config(
                "learning rate and clip norm must be positive, jitter non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A contiguous run of ground-truth boxes for one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeq {
    pub start: u32,
    pub boxes: Vec<BoundingBox>,
}

impl TrackSeq {
    pub fn end(&self) -> u32 {
        self.start + self.boxes.len() as u32 - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingScene {
    pub dims: FrameDims,
    pub tracks: Vec<TrackSeq>,
}

/// Ground-truth trajectories used for codebook fitting and training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub scenes: Vec<TrainingScene>,
}

impl Corpus {
    /// All consecutive-frame velocities in the corpus.
    pub fn velocities(&self) -> Vec<Velocity> {
        let mut out = Vec::new();
        for scene in &self.scenes {
            for t in &scene.tracks {
                if t.boxes.len() >= 2 {
                    out.extend(seq_to_velocities(&t.boxes, scene.dims).unwrap_or_default());
                }
            }
        }
        out
    }

    fn trainable(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, scene) in self.scenes.iter().enumerate() {
            for (t, track) in scene.tracks.iter().enumerate() {
                if track.boxes.len() >= 2 {
                    out.push((s, t));
                }
            }
        }
        out
    }
}

/// Fit codebooks on the corpus and initialise weights.
pub fn init_model(corpus: &Corpus, config: ModelConfig, seed: u64) -> Result<MotionModel> {
    let cb = fit_codebooks(&corpus.velocities(), config.k, seed, DEFAULT_MAX_ITERS)?;
    MotionModel::new(config, cb, seed)
}

/// Mean over steps of the summed negative log-probabilities of the targets.
pub fn nll_loss(dists: &[StepDistribution], targets: &[ClassIndex4]) -> Result<f64> {
    if dists.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} distributions vs {} targets",
            dists.len(),
            targets.len()
        )));
    }
    if dists.is_empty() {
        return Err(Error::EmptySequence { needed: 1, got: 0 });
    }
    let total: f64 = dists
        .iter()
        .zip(targets)
        .map(|(d, t)| {
            let t = t.to_array();
            -(0..4).map(|j| d.log_prob(j, t[j])).sum::<f64>()
        })
        .sum();
    Ok(total / dists.len() as f64)
}

/// Mean squared error over every component of every step.
pub fn reconstruction_loss(
    reconstructed: &[Vec<Velocity>],
    target: &[Vec<Velocity>],
) -> Result<f64> {
    if reconstructed.len() != target.len()
        || reconstructed
            .iter()
            .zip(target)
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Shape(
            "reconstruction and target shapes differ".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in reconstructed.iter().zip(target) {
        for (u, v) in a.iter().zip(b) {
            for (x, y) in u.to_array().iter().zip(v.to_array()) {
                sum += (x - y) * (x - y);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Logistic weight on the likelihood term.
pub fn anneal_lambda(iter: usize, cfg: &TrainConfig) -> f64 {
    let t = iter as f64 / cfg.iterations.max(1) as f64;
    let z = cfg.anneal_steepness * (t - cfg.anneal_midpoint);
    1.0 / (1.0 + exp(-z))
}

/// Scale `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norms before and after.
pub fn clip_global_norm(grads: &mut Weights, max_norm: f64) -> (f64, f64) {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, _, d) in grads.named_arrays_mut() {
            for v in d.iter_mut() {
                *v *= s;
            }
        }
        (norm, global_norm(grads))
    } else {
        (norm, norm)
    }
}

pub fn global_norm(w: &Weights) -> f64 {
    sqrt(
        w.named_arrays()
            .iter()
            .flat_map(|(_, _, d)| d.iter())
            .map(|v| v * v)
            .sum(),
    )
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(weights: &Weights, lr: f64) -> Self {
        let shapes: Vec<usize> = weights
            .named_arrays()
            .iter()
            .map(|(_, _, d)| d.len())
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| alloc::vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, weights: &mut Weights, grads: &Weights) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let gs = grads.named_arrays();
        for (((_, _, w), (_, _, g)), (m, v)) in weights
            .named_arrays_mut()
            .into_iter()
            .zip(gs)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= self.lr * (m[i] / c1) / (sqrt(v[i] / c2) + self.eps);
            }
        }
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub nll: f64,
    pub rec: f64,
    pub lambda: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MotionModel,
    pub trace: Vec<LossRecord>,
}

/// Draw one training sample: a window over a target trajectory plus every
/// other trajectory of the scene that spans the same window.
pub fn draw_sample<R: Rng + ?Sized>(
    corpus: &Corpus,
    codebook: &Codebook,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainSample> {
    let pool = corpus.trainable();
    if pool.is_empty() {
        return Err(Error::InsufficientData(
            "corpus has no trajectory with two or more boxes".into(),
        ));
    }
    let (s, t) = pool[rng.random_range(0..pool.len())];
    let scene = &corpus.scenes[s];
    let track = &scene.tracks[t];
    let len = track.boxes.len();
    let (lo, hi) = cfg.seq_len_range;
    let (lo, hi) = (lo.min(len), hi.min(len));
    let window = rng.random_range(lo..=hi);
    let offset = rng.random_range(0..=len - window);
    let first = track.start + offset as u32;
    let last = first + window as u32 - 1;

    let mut jittered = |boxes: &[BoundingBox]| -> Vec<Velocity> {
        let j: Vec<BoundingBox> = boxes
            .iter()
            .map(|b| jitter(b, scene.dims, cfg.jitter_magnitude, rng))
            .collect();
        seq_to_velocities(&j, scene.dims).expect("window has at least two boxes")
    };
    let target = jittered(&track.boxes[offset..offset + window]);
    let mut others = Vec::new();
    for (o, other) in scene.tracks.iter().enumerate() {
        if o == t || other.start > first || other.end() < last {
            continue;
        }
        let a = (first - other.start) as usize;
        others.push(jittered(&other.boxes[a..a + window]));
    }
    let classes = target.iter().map(|v| codebook.quantize(v)).collect();
    Ok(TrainSample {
        target,
        classes,
        others,
    })
}

/// Mean loss and (optionally) gradient over a batch.
pub fn batch_loss(
    model: &MotionModel,
    batch: &[TrainSample],
    lambda: f64,
    interactions: bool,
    teacher: Option<(TeacherForcing, &mut TrackRng)>,
    mut grad: Option<&mut Weights>,
) -> (f64, f64) {
    let scale = 1.0 / batch.len() as f64;
    let (mut nll, mut rec) = (0.0, 0.0);
    let (tf, mut tf_rng) = match teacher {
        Some((tf, r)) => (Some(tf), Some(r)),
        None => (None, None),
    };
    for s in batch {
        let t = match (tf, tf_rng.as_deref_mut()) {
            (Some(tf), Some(r)) => Some((tf, r as &mut dyn rand::RngCore)),
            _ => None,
        };
        let l = sample_loss(
            model,
            s,
            lambda,
            interactions,
            t,
            grad.as_deref_mut(),
            scale,
        );
        nll += l.nll * scale;
        rec += l.rec * scale;
    }
    (nll, rec)
}

/// Train `model` on `corpus`, returning the final model and loss trace.
pub fn train(corpus: &Corpus, model: MotionModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(corpus, model, cfg, |_| {})
}

/// [`train`] with a callback invoked after every iteration.
pub fn train_with_progress(
    corpus: &Corpus,
    mut model: MotionModel,
    cfg: &TrainConfig,
    mut on_iteration: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.trainable().is_empty() {
        return Err(Error::InsufficientData("training corpus is empty".into()));
    }
    let mut batch_rng = rng::derived(cfg.seed, 1, 0);
    let mut tf_rng = rng::derived(cfg.seed, 2, 0);
    let teacher = TeacherForcing {
        prob: cfg.teacher_force_prob,
        onset: cfg.teacher_force_onset,
    };
    let mut adam = Adam::new(&model.weights, cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let batch = (0..cfg.batch_size)
            .map(|_| draw_sample(corpus, &model.codebook, cfg, &mut batch_rng))
            .collect::<Result<Vec<_>>>()?;
        let lambda = anneal_lambda(iteration, cfg);
        let mut grads = Weights::zeros(&model.config);
        let tf = (teacher.prob > 0.0).then_some((teacher, &mut tf_rng));
        let (nll, rec) = batch_loss(
            &model,
            &batch,
            lambda,
            cfg.interactions,
            tf,
            Some(&mut grads),
        );
        let total = lambda * nll + rec;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became non-finite at iteration {iteration} (nll {nll}, rec {rec}, lambda {lambda})"
            )));
        }
        clip_global_norm(&mut grads, cfg.grad_clip_norm);
        adam.step(&mut model.weights, &grads);
        let rec_row = LossRecord {
            iteration,
            nll,
            rec,
            lambda,
            total,
        };
        on_iteration(&rec_row);
        trace.push(rec_row);
    }
    model.weights.snap_to_f32();
    if !model.weights.is_finite() {
        return Err(Error::Numeric(
            "training produced non-finite weights".into(),
        ));
    }
    Ok(TrainOutcome { model, trace })
}

/// Mean per-step NLL of `model` on freshly drawn samples (ground-truth inputs).
pub fn evaluate_nll(
    model: &MotionModel,
    corpus: &Corpus,
    cfg: &TrainConfig,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut r = rng::derived(seed, 3, 0);
    let mut total = 0.0;
    let mut steps = 0usize;
    for _ in 0..samples {
        let s = draw_sample(corpus, &model.codebook, cfg, &mut r)?;
        let l = sample_loss(model, &s, 1.0, cfg.interactions, None, None, 1.0);
        total += l.nll * l.steps as f64;
        steps += l.steps;
    }
    Ok(total / steps.max(1) as f64)
}

/// Uniform-distribution NLL per step: `4 ln K`.
pub fn uniform_nll(k: usize) -> f64 {
    4.0 * crate::math::ln(k as f64)
}

#[cfg(test)]
mod tests;
