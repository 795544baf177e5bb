//! Flat `key = value` configuration with `#` comments.
//!
//! Keys are namespaced: `model.*`, `train.*`, `tracker.*` and `synth.*`.
//! Values given later (for instance on the command line) replace earlier ones.

use artist_core::scoring::SampleMode;
use artist_core::synth::{self, SyntheticScenario};
use artist_core::tracker::{InpaintingMode, TrackerConfig};
use artist_core::training::TrainConfig;
use artist_core::{FrameDims, ModelConfig};
use rand::Rng;

use crate::error::{Result, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// One agent at constant velocity (`synth.vx`, `synth.vy`).
    Single,
    /// Two agents crossing, the second hidden for `synth.occlusion` frames.
    Crossing,
    /// `synth.agents` agents at constant velocity up to `synth.max_speed`.
    Constant,
    /// `synth.agents` agents with random lifetimes and motion families.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub scenario: ScenarioKind,
    pub width: f64,
    pub height: f64,
    pub fps: f64,
    pub frames: u32,
    pub agents: usize,
    pub occlusion: u32,
    pub vx: f64,
    pub vy: f64,
    pub max_speed: f64,
    pub path_noise: f64,
    pub detection_jitter: f64,
    pub miss_rate: f64,
    pub false_positive_rate: f64,
    pub seed: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Random,
            width: 1920.0,
            height: 1080.0,
            fps: 30.0,
            frames: 100,
            agents: 5,
            occlusion: 10,
            vx: 4.0,
            vy: 0.0,
            max_speed: 8.0,
            path_noise: 0.0,
            detection_jitter: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSettings {
    pub fn dims(&self) -> Result<FrameDims> {
        Ok(FrameDims::new(self.width, self.height)?)
    }

    pub fn scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SyntheticScenario> {
        let dims = self.dims()?;
        let mut s = match self.scenario {
            ScenarioKind::Single => synth::single_agent(dims, self.frames, (self.vx, self.vy)),
            ScenarioKind::Crossing => synth::crossing_pair(dims, self.frames, self.occlusion, rng),
            ScenarioKind::Constant => synth::constant_velocity_scenario(
                dims,
                self.frames,
                self.agents,
                self.max_speed,
                rng,
            ),
            ScenarioKind::Random => synth::random_scenario(dims, self.frames, self.agents, rng),
        };
        s.fps = self.fps;
        s.path_noise = self.path_noise;
        s.detection_jitter = self.detection_jitter;
        s.miss_rate = self.miss_rate;
        s.false_positive_rate = self.false_positive_rate;
        s.validate()?;
        Ok(s)
    }
}

/// Everything a subcommand may need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub synth: SynthSettings,
}

fn bad(key: &str, value: &str, what: &str) -> ToolError {
    ToolError::Config(format!("{key} = {value:?}: expected {what}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "a number"))
}

fn real(key: &str, value: &str) -> Result<f64> {
    let v: f64 = num(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, value, "a finite number"))
    }
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

pub fn parse_inpainting(key: &str, value: &str) -> Result<InpaintingMode> {
    match value {
        "off" => Ok(InpaintingMode::Off),
        "invisible" => Ok(InpaintingMode::Invisible),
        "visible" => Ok(InpaintingMode::Visible),
        _ => Err(bad(key, value, "off, invisible or visible")),
    }
}

impl Settings {
    /// Set one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key, value.trim());
        let m = &mut self.model;
        let t = &mut self.train;
        let c = &mut self.tracker;
        let s = &mut self.synth;
        match k {
            "model.k" => m.k = num(k, v)?,
            "model.interaction_dim" => m.interaction_dim = num(k, v)?,
            "model.manet_embed_dim" => m.manet_embed_dim = num(k, v)?,
            "model.manet_hidden_dim" => m.manet_hidden_dim = num(k, v)?,
            "model.artist_embed_dim" => m.artist_embed_dim = num(k, v)?,
            "model.artist_hidden_dim" => m.artist_hidden_dim = num(k, v)?,
            "model.width" => {
                let d: usize = num(k, v)?;
                *m = ModelConfig::desk(m.k, d);
            }

            "train.iterations" => t.iterations = num(k, v)?,
            "train.batch_size" => t.batch_size = num(k, v)?,
            "train.learning_rate" => t.learning_rate = real(k, v)?,
            "train.seq_len_min" => t.seq_len_range.0 = num(k, v)?,
            "train.seq_len_max" => t.seq_len_range.1 = num(k, v)?,
            "train.grad_clip_norm" => t.grad_clip_norm = real(k, v)?,
            "train.teacher_force_prob" => t.teacher_force_prob = real(k, v)?,
            "train.teacher_force_onset" => t.teacher_force_onset = real(k, v)?,
            "train.jitter_magnitude" => t.jitter_magnitude = real(k, v)?,
            "train.anneal_midpoint" => t.anneal_midpoint = real(k, v)?,
            "train.anneal_steepness" => t.anneal_steepness = real(k, v)?,
            "train.interactions" => t.interactions = flag(k, v)?,
            "train.seed" => t.seed = num(k, v)?,

            "tracker.mode" => {
                c.mode = match v {
                    "top1" => SampleMode::Top1,
                    "multinomial" => SampleMode::Multinomial,
                    _ => return Err(bad(k, v, "top1 or multinomial")),
                }
            }
            "tracker.trs" => c.trs_enabled = flag(k, v)?,
            "tracker.interactions" => c.interactions_enabled = flag(k, v)?,
            "tracker.inpainting" => c.inpainting = parse_inpainting(k, v)?,
            "tracker.samples" => c.samples = num(k, v)?,
            "tracker.gate" => c.gate = if v == "auto" { None } else { Some(real(k, v)?) },
            "tracker.termination_gap" => c.termination_gap = num(k, v)?,
            "tracker.iou_threshold" => c.iou_threshold = real(k, v)?,
            "tracker.lookahead" => c.lookahead = num(k, v)?,
            "tracker.confidence_threshold" => c.confidence_threshold = real(k, v)?,
            "tracker.confirm_hits" => c.confirm_hits = num(k, v)?,
            "tracker.drop_misses" => c.drop_misses = num(k, v)?,
            "tracker.seed" => c.seed = num(k, v)?,

            "synth.scenario" => {
                s.scenario = match v {
                    "single" => ScenarioKind::Single,
                    "crossing" => ScenarioKind::Crossing,
                    "constant" => ScenarioKind::Constant,
                    "random" => ScenarioKind::Random,
                    _ => return Err(bad(k, v, "single, crossing, constant or random")),
                }
            }
            "synth.width" => s.width = real(k, v)?,
            "synth.height" => s.height = real(k, v)?,
            "synth.fps" => s.fps = real(k, v)?,
            "synth.frames" => s.frames = num(k, v)?,
            "synth.agents" => s.agents = num(k, v)?,
            "synth.occlusion" => s.occlusion = num(k, v)?,
            "synth.vx" => s.vx = real(k, v)?,
            "synth.vy" => s.vy = real(k, v)?,
            "synth.max_speed" => s.max_speed = real(k, v)?,
            "synth.path_noise" => s.path_noise = real(k, v)?,
            "synth.detection_jitter" => s.detection_jitter = real(k, v)?,
            "synth.miss_rate" => s.miss_rate = real(k, v)?,
            "synth.false_positive_rate" => s.false_positive_rate = real(k, v)?,
            "synth.seed" => s.seed = num(k, v)?,
            _ => {
                return Err(ToolError::Config(format!(
                    "unknown configuration key {k:?}"
                )))
            }
        }
        Ok(())
    }

    /// Apply a `key=value` assignment.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            ToolError::Config(format!("{assignment:?} is not of the form key=value"))
        })?;
        self.set(k.trim(), v)
    }

    /// Apply every assignment of a configuration file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply(line).map_err(|e| match e {
                ToolError::Config(msg) => ToolError::Parse { line: i + 1, msg },
                e => e,
            })?;
        }
        Ok(())
    }

    /// Set one seed everywhere.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.tracker.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.tracker.validate()?;
        Ok(())
    }
}

/// Whether a command-line argument is a `namespace.key=value` override.
pub fn is_override(arg: &str) -> bool {
    arg.split_once('=').is_some_and(|(k, _)| {
        k.split_once('.').is_some_and(|(ns, rest)| {
            matches!(ns, "model" | "train" | "tracker" | "synth")
                && !rest.is_empty()
                && rest
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        })
    })
}
