//! Synthetic scenes: parametric trajectories, detector noise and occlusions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{jitter, BoundingBox, Detection, FrameDims};
use crate::math::{abs, cos, round, sin};
use crate::rng;
use crate::tracklet::{sort_rows, TrackRow};
use crate::training::{Corpus, TrackSeq, TrainingScene};

/// Centre trajectory family, in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Constant {
        vx: f64,
        vy: f64,
    },
    /// Constant drift plus a vertical oscillation.
    Sinusoid {
        vx: f64,
        vy: f64,
        amplitude: f64,
        period: f64,
    },
    /// Constant speed with a constant heading change per frame (radians).
    Turn {
        speed: f64,
        heading: f64,
        rate: f64,
    },
}

impl Motion {
    /// Centre displacement after `t` frames.
    pub fn offset(&self, t: f64) -> (f64, f64) {
        match *self {
            Motion::Constant { vx, vy } => (vx * t, vy * t),
            Motion::Sinusoid {
                vx,
                vy,
                amplitude,
                period,
            } => (vx * t, vy * t + amplitude * sin(2.0 * PI * t / period)),
            Motion::Turn {
                speed,
                heading,
                rate,
            } => {
                if abs(rate) < 1e-12 {
                    (speed * cos(heading) * t, speed * sin(heading) * t)
                } else {
                    let a = heading + rate * t;
                    (
                        speed / rate * (sin(a) - sin(heading)),
                        -speed / rate * (cos(a) - cos(heading)),
                    )
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    /// First and last frame (inclusive) the agent exists.
    pub start: u32,
    pub end: u32,
    pub init: BoundingBox,
    pub motion: Motion,
    /// Width and height change per frame, in pixels.
    pub growth: (f64, f64),
}

/// Frames (inclusive) during which an agent produces no detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    pub agent: usize,
    pub from: u32,
    pub to: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub dims: FrameDims,
    pub fps: f64,
    pub frames: u32,
    pub agents: Vec<AgentSpec>,
    pub occlusions: Vec<Occlusion>,
    /// Standard deviation (pixels) of per-frame Gaussian wobble on the true path.
    pub path_noise: f64,
    /// Detector noise magnitude, as in [`jitter`].
    pub detection_jitter: f64,
    /// Probability of a missed detection outside occlusions.
    pub miss_rate: f64,
    /// Expected number of spurious detections per frame.
    pub false_positive_rate: f64,
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("scenario needs at least one frame".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.start < 1 || a.start > a.end || a.end > self.frames {
                return Err(Error::Config(format!(
                    "agent {i} lifetime {}..={} outside 1..={}",
                    a.start, a.end, self.frames
                )));
            }
        }
        if let Some(o) = self
            .occlusions
            .iter()
            .find(|o| o.agent >= self.agents.len() || o.from > o.to)
        {
            return Err(Error::Config(format!("bad occlusion {o:?}")));
        }
        let probs = [
            self.miss_rate,
            self.detection_jitter,
            self.path_noise,
            self.false_positive_rate,
        ];
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || self.miss_rate > 1.0 {
            return Err(Error::Config(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth and detections of one generated scene. Identities are
/// numbered from 1 in agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub dims: FrameDims,
    pub fps: f64,
    pub frames: u32,
    pub gt: Vec<TrackRow>,
    pub detections: Vec<Detection>,
}

/// Render a scenario. Equal seeds give identical output.
pub fn generate(scn: &SyntheticScenario, seed: u64) -> Result<SyntheticSequence> {
    scn.validate()?;
    let mut r = rng::derived(seed, 0x5e, 0);
    let wobble = Normal::new(0.0, scn.path_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("{e}")))?;
    let mut gt = Vec::new();
    let mut detections = Vec::new();
    for (i, a) in scn.agents.iter().enumerate() {
        for f in a.start..=a.end {
            let t = (f - a.start) as f64;
            let (ox, oy) = a.motion.offset(t);
            let (nx, ny) = if scn.path_noise > 0.0 {
                (wobble.sample(&mut r), wobble.sample(&mut r))
            } else {
                (0.0, 0.0)
            };
            let w = (a.init.w + a.growth.0 * t).max(4.0);
            let h = (a.init.h + a.growth.1 * t).max(4.0);
            let (cx, cy) = a.init.center();
            let bbox = BoundingBox::new(cx + ox + nx - w / 2.0, cy + oy + ny - h / 2.0, w, h)?;
            gt.push(TrackRow {
                frame: f,
                id: i as u64 + 1,
                bbox,
            });

            let occluded = scn
                .occlusions
                .iter()
                .any(|o| o.agent == i && (o.from..=o.to).contains(&f));
            let missed = scn.miss_rate > 0.0 && r.random::<f64>() < scn.miss_rate;
            if !occluded && !missed {
                let d = jitter(&bbox, scn.dims, scn.detection_jitter, &mut r);
                detections.push(Detection::new(d, 1.0, f)?);
            }
        }
    }
    if scn.false_positive_rate > 0.0 {
        for f in 1..=scn.frames {
            let mut budget = scn.false_positive_rate;
            while budget > 0.0 {
                if r.random::<f64>() < budget.min(1.0) {
                    let w = r.random_range(20.0..80.0);
                    let h = w * r.random_range(1.5..3.0);
                    let x = r.random_range(0.0..(scn.dims.width - w).max(1.0));
                    let y = r.random_range(0.0..(scn.dims.height - h).max(1.0));
                    detections.push(Detection::new(
                        BoundingBox::new(x, y, w, h)?,
                        r.random_range(0.3..1.0),
                        f,
                    )?);
                }
                budget -= 1.0;
            }
        }
    }
    sort_rows(&mut gt);
    detections.sort_by_key(|d| d.frame);
    Ok(SyntheticSequence {
        dims: scn.dims,
        fps: scn.fps,
        frames: scn.frames,
        gt,
        detections,
    })
}

fn base(dims: FrameDims, frames: u32) -> SyntheticScenario {
    SyntheticScenario {
        dims,
        fps: 30.0,
        frames,
        agents: Vec::new(),
        occlusions: Vec::new(),
        path_noise: 0.0,
        detection_jitter: 0.0,
        miss_rate: 0.0,
        false_positive_rate: 0.0,
    }
}

fn pedestrian<R: Rng + ?Sized>(dims: FrameDims, rng: &mut R) -> (f64, f64) {
    let h = rng.random_range(0.15..0.3) * dims.height;
    (h * rng.random_range(0.35..0.5), h)
}

/// One agent moving at constant velocity through the whole sequence.
pub fn single_agent(dims: FrameDims, frames: u32, velocity: (f64, f64)) -> SyntheticScenario {
    let (w, h) = (0.06 * dims.width, 0.25 * dims.height);
    let span = (velocity.0 * frames as f64, velocity.1 * frames as f64);
    let x = (dims.width - w) / 2.0 - span.0 / 2.0;
    let y = (dims.height - h) / 2.0 - span.1 / 2.0;
    let mut s = base(dims, frames);
    s.agents.push(AgentSpec {
        start: 1,
        end: frames,
        init: BoundingBox { x, y, w, h },
        motion: Motion::Constant {
            vx: velocity.0,
            vy: velocity.1,
        },
        growth: (0.0, 0.0),
    });
    s
}

/// Two agents walking towards each other along nearby horizontal lines. The
/// second agent is hidden behind the first for `occlusion` frames centred on
/// the crossing.
pub fn crossing_pair<R: Rng + ?Sized>(
    dims: FrameDims,
    frames: u32,
    occlusion: u32,
    rng: &mut R,
) -> SyntheticScenario {
    let mut s = base(dims, frames);
    let (w, h) = pedestrian(dims, rng);
    let cross = rng.random_range(0.4..0.6) * frames as f64;
    let speed = rng.random_range(0.45..0.75) * dims.width / frames as f64;
    let cx = rng.random_range(0.4..0.6) * dims.width;
    let cy = rng.random_range(0.35..0.55) * dims.height;
    let lane = rng.random_range(0.25..0.4) * h;
    for (dir, dy) in [(1.0, 0.0), (-1.0, lane)] {
        let vx = dir * speed;
        let vy = rng.random_range(-0.05..0.05) * speed;
        let x0 = cx - vx * (cross - 1.0) - w / 2.0;
        let y0 = cy + dy - vy * (cross - 1.0) - h / 2.0;
        s.agents.push(AgentSpec {
            start: 1,
            end: frames,
            init: BoundingBox { x: x0, y: y0, w, h },
            motion: Motion::Constant { vx, vy },
            growth: (0.0, 0.0),
        });
    }
    if occlusion > 0 {
        let from = (round(cross) as u32).saturating_sub(occlusion / 2).max(2);
        let to = (from + occlusion - 1).min(frames - 1);
        s.occlusions.push(Occlusion { agent: 1, from, to });
    }
    s
}

/// A scene with `agents` pedestrians of random lifetimes and motion families.
pub fn random_scenario<R: Rng + ?Sized>(
    dims: FrameDims,
    frames: u32,
    agents: usize,
    rng: &mut R,
) -> SyntheticScenario {
    let mut s = base(dims, frames);
    for _ in 0..agents {
        let (w, h) = pedestrian(dims, rng);
        let len = rng.random_range((frames / 3).max(2)..=frames);
        let start = rng.random_range(1..=frames - len + 1);
        let speed = rng.random_range(0.0005..0.006) * dims.width;
        let heading = rng.random_range(0.0..2.0 * PI);
        let motion = match rng.random_range(0..3) {
            0 => Motion::Constant {
                vx: speed * cos(heading),
                vy: speed * sin(heading),
            },
            1 => Motion::Sinusoid {
                vx: speed * cos(heading),
                vy: speed * sin(heading),
                amplitude: rng.random_range(0.0..0.02) * dims.height,
                period: rng.random_range(20.0..60.0),
            },
            _ => Motion::Turn {
                speed,
                heading,
                rate: rng.random_range(-0.02..0.02),
            },
        };
        let x = rng.random_range(0.1..0.9) * dims.width - w / 2.0;
        let y = rng.random_range(0.1..0.9) * dims.height - h / 2.0;
        let g = rng.random_range(-0.05..0.05);
        s.agents.push(AgentSpec {
            start,
            end: start + len - 1,
            init: BoundingBox { x, y, w, h },
            motion,
            growth: (g * w / h, g),
        });
    }
    s
}

/// A scene of constant-velocity agents spanning the whole sequence.
pub fn constant_velocity_scenario<R: Rng + ?Sized>(
    dims: FrameDims,
    frames: u32,
    agents: usize,
    max_speed: f64,
    rng: &mut R,
) -> SyntheticScenario {
    let mut s = base(dims, frames);
    for _ in 0..agents {
        let (w, h) = pedestrian(dims, rng);
        let vx = rng.random_range(-max_speed..=max_speed);
        let vy = rng.random_range(-max_speed..=max_speed) * 0.5;
        let x = rng.random_range(0.2..0.8) * dims.width - w / 2.0 - vx * frames as f64 / 2.0;
        let y = rng.random_range(0.2..0.8) * dims.height - h / 2.0 - vy * frames as f64 / 2.0;
        s.agents.push(AgentSpec {
            start: 1,
            end: frames,
            init: BoundingBox { x, y, w, h },
            motion: Motion::Constant { vx, vy },
            growth: (0.0, 0.0),
        });
    }
    s
}

/// Group ground-truth rows into per-identity runs of consecutive frames.
pub fn tracks_from_rows(rows: &[TrackRow]) -> Vec<TrackSeq> {
    let mut by_id: BTreeMap<u64, Vec<&TrackRow>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (_, mut rs) in by_id {
        rs.sort_by_key(|r| r.frame);
        let mut cur: Option<TrackSeq> = None;
        for r in rs {
            match cur.as_mut() {
                Some(t) if t.end() + 1 == r.frame => t.boxes.push(r.bbox),
                _ => {
                    out.extend(cur.take());
                    cur = Some(TrackSeq {
                        start: r.frame,
                        boxes: alloc::vec![r.bbox],
                    });
                }
            }
        }
        out.extend(cur);
    }
    out
}

/// Training corpus from the ground truth of generated sequences.
pub fn corpus_from(sequences: &[SyntheticSequence]) -> Corpus {
    Corpus {
        scenes: sequences
            .iter()
            .map(|s| TrainingScene {
                dims: s.dims,
                tracks: tracks_from_rows(&s.gt),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;

    fn dims() -> FrameDims {
        FrameDims::new(640.0, 480.0).unwrap()
    }

    #[test]
    fn motion_families_start_at_origin() {
        for m in [
            Motion::Constant { vx: 1.0, vy: 2.0 },
            Motion::Sinusoid {
                vx: 1.0,
                vy: 0.0,
                amplitude: 5.0,
                period: 10.0,
            },
            Motion::Turn {
                speed: 2.0,
                heading: 0.3,
                rate: 0.1,
            },
            Motion::Turn {
                speed: 2.0,
                heading: 0.3,
                rate: 0.0,
            },
        ] {
            assert_eq!(m.offset(0.0), (0.0, 0.0));
        }
        let (x, y) = Motion::Turn {
            speed: 2.0,
            heading: 0.0,
            rate: 1e-7,
        }
        .offset(3.0);
        assert!((x - 6.0).abs() < 1e-5 && y.abs() < 1e-5);
        let (x, y) = Motion::Turn {
            speed: 1.0,
            heading: 0.0,
            rate: PI / 10.0,
        }
        .offset(10.0);
        assert!(x.abs() < 1e-9 && (y - 20.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let s = generate(&single_agent(dims(), 20, (3.0, -1.0)), 1).unwrap();
        assert_eq!(s.gt.len(), 20);
        assert_eq!(s.detections.len(), 20);
        for (g, d) in s.gt.iter().zip(&s.detections) {
            assert_eq!((g.frame, g.bbox), (d.frame, d.bbox));
        }
        let c0 = s.gt[0].bbox.center();
        let c5 = s.gt[5].bbox.center();
        assert!((c5.0 - c0.0 - 15.0).abs() < 1e-9 && (c5.1 - c0.1 + 5.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_pair_occludes_the_second_agent() {
        let mut r = rng::seeded(4);
        let scn = crossing_pair(dims(), 60, 10, &mut r);
        let s = generate(&scn, 2).unwrap();
        assert_eq!(s.gt.len(), 120);
        assert_eq!(s.detections.len(), 110);
        let o = scn.occlusions[0];
        assert_eq!(o.to - o.from + 1, 10);
        // the two agents overlap somewhere inside the occlusion window
        let at = |id: u64, f: u32| {
            s.gt.iter()
                .find(|g| g.id == id && g.frame == f)
                .unwrap()
                .bbox
        };
        assert!((o.from..=o.to).any(|f| iou(&at(1, f), &at(2, f)) > 0.0));
    }

    #[test]
    fn generation_is_reproducible() {
        let mut r = rng::seeded(5);
        let mut scn = random_scenario(dims(), 50, 6, &mut r);
        scn.path_noise = 1.0;
        scn.detection_jitter = 0.01;
        scn.miss_rate = 0.1;
        scn.false_positive_rate = 0.5;
        assert_eq!(generate(&scn, 9).unwrap(), generate(&scn, 9).unwrap());
        assert_ne!(generate(&scn, 9).unwrap(), generate(&scn, 10).unwrap());
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut scn = single_agent(dims(), 10, (1.0, 0.0));
        scn.agents[0].end = 11;
        assert!(matches!(generate(&scn, 0), Err(Error::Config(_))));
        let mut scn = single_agent(dims(), 10, (1.0, 0.0));
        scn.occlusions.push(Occlusion {
            agent: 3,
            from: 1,
            to: 2,
        });
        assert!(generate(&scn, 0).is_err());
    }

    #[test]
    fn rows_group_into_contiguous_runs() {
        let b = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
        let rows: Vec<TrackRow> = [(1, 1), (2, 1), (3, 1), (5, 1), (6, 1), (2, 2)]
            .iter()
            .map(|&(frame, id)| TrackRow { frame, id, bbox: b })
            .collect();
        let t = tracks_from_rows(&rows);
        assert_eq!(
            t.iter()
                .map(|t| (t.start, t.boxes.len()))
                .collect::<Vec<_>>(),
            alloc::vec![(1, 3), (5, 2), (2, 1)]
        );
    }

    #[test]
    fn corpus_velocities_are_constant_for_constant_motion() {
        let s = generate(&single_agent(dims(), 10, (6.4, 0.0)), 0).unwrap();
        let v = corpus_from(&[s]).velocities();
        assert_eq!(v.len(), 9);
        assert!(v
            .iter()
            .all(|v| (v.dx - 0.01).abs() < 1e-12 && v.dy.abs() < 1e-12));
    }
}
