//! Online tracking loop: score, inpaint, associate, update, emit.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::assignment::{two_pass_assign, AssignmentResult, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, FrameDims, Velocity};
use crate::math::ln;
use crate::nn::{aggregate_interactions, CellState, InteractionRep, MotionModel};
use crate::rng;
use crate::scoring::{
    inpaint_from, score_next, trs_select, MotionCursor, SampleMode, DEFAULT_IOU_THRESHOLD,
    DEFAULT_SAMPLES,
};
use crate::tracklet::{sort_rows, BoxOrigin, TrackRow, TrackedBox, Tracklet, TrackletStatus};

/// Frames without a detection after which a tracklet is terminated.
pub const DEFAULT_TERMINATION_GAP: u32 = 30;

/// Cost of a pairing whose velocity the codebook cannot represent. Finite so
/// the solver stays well defined, and far above any gate.
const INFEASIBLE: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InpaintingMode {
    /// Gaps are scored as a single jump from the last box.
    Off,
    /// Gaps are filled for scoring but not reported.
    Invisible,
    /// Gaps are filled and reported.
    Visible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub mode: SampleMode,
    pub trs_enabled: bool,
    pub interactions_enabled: bool,
    pub inpainting: InpaintingMode,
    /// Candidates drawn per gap in multinomial mode.
    pub samples: usize,
    /// Largest accepted assignment cost; `None` means the uniform NLL `4 ln K`.
    pub gate: Option<f64>,
    pub termination_gap: u32,
    pub iou_threshold: f64,
    /// Lookahead frames for candidate rejection; also the output delay.
    pub lookahead: usize,
    pub confidence_threshold: f64,
    /// Consecutive hits that confirm a tentative tracklet.
    pub confirm_hits: u32,
    /// Consecutive misses that drop a tentative tracklet.
    pub drop_misses: u32,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: SampleMode::Multinomial,
            trs_enabled: true,
            interactions_enabled: true,
            inpainting: InpaintingMode::Visible,
            samples: DEFAULT_SAMPLES,
            gate: None,
            termination_gap: DEFAULT_TERMINATION_GAP,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            lookahead: 2,
            confidence_threshold: 0.0,
            confirm_hits: 2,
            drop_misses: 2,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.termination_gap == 0 {
            return Err(Error::Config("termination gap must be at least 1".into()));
        }
        if self.confirm_hits == 0 || self.drop_misses == 0 {
            return Err(Error::Config(
                "confirmation and drop counts must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::Config("iou threshold must lie in [0, 1]".into()));
        }
        if self.gate.is_some_and(|g| !g.is_finite()) {
            return Err(Error::Config("gate must be finite".into()));
        }
        Ok(())
    }

    /// Frames of lookahead actually buffered.
    pub fn delay(&self) -> usize {
        if self.trs_enabled && self.inpainting != InpaintingMode::Off {
            self.lookahead
        } else {
            0
        }
    }

    fn emits(&self, origin: BoxOrigin) -> bool {
        origin == BoxOrigin::Detected || self.inpainting == InpaintingMode::Visible
    }
}

/// Per-tracklet recurrent state alongside the box history.
#[derive(Debug, Clone)]
struct Track {
    tracklet: Tracklet,
    /// Motion state over every committed velocity; the newest one is pending.
    cursor: MotionCursor,
    /// Interaction-encoder state over every committed velocity.
    latent: Vec<f64>,
}

impl Track {
    fn has_motion(&self) -> bool {
        !self.cursor.at_start()
    }
}

/// How a tracklet was scored this frame; needed to commit a match.
#[derive(Debug, Clone)]
struct Scored {
    id: u64,
    costs: Vec<f64>,
    /// Boxes filling the gap, to commit on a match.
    filled: Vec<BoundingBox>,
    /// Cursor after the filled boxes, before the current frame.
    cursor: MotionCursor,
    /// Cell state after predicting the current frame.
    state: CellState,
    from: BoundingBox,
}

/// Online tracker over one sequence.
#[derive(Debug, Clone)]
pub struct Tracker<'m> {
    model: &'m MotionModel,
    dims: FrameDims,
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    buffer: VecDeque<(u32, Vec<Detection>)>,
    last_input: u32,
    next_id: u64,
}

impl<'m> Tracker<'m> {
    pub fn new(model: &'m MotionModel, dims: FrameDims, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            dims,
            cfg,
            tracks: Vec::new(),
            buffer: VecDeque::new(),
            last_input: 0,
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live (not terminated) tracklets in id order.
    pub fn tracklets(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracks.iter().map(|t| &t.tracklet)
    }

    pub fn gate(&self) -> f64 {
        self.cfg
            .gate
            .unwrap_or(4.0 * ln(self.model.config.k as f64))
    }

    /// Feed the detections of the next frame (frames are numbered from 1 and
    /// must arrive without holes). Returns the rows that became final, which
    /// may belong to earlier frames.
    pub fn track_frame(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackRow>> {
        if frame != self.last_input + 1 {
            return Err(Error::Contract(format!(
                "expected frame {}, got {frame}",
                self.last_input + 1
            )));
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::Contract(format!(
                "detection stamped {} fed at frame {frame}",
                d.frame
            )));
        }
        self.last_input = frame;
        let kept = detections
            .iter()
            .filter(|d| d.confidence >= self.cfg.confidence_threshold)
            .copied()
            .collect();
        self.buffer.push_back((frame, kept));
        let mut rows = Vec::new();
        while self.buffer.len() > self.cfg.delay() {
            rows.extend(self.process_front()?);
        }
        Ok(rows)
    }

    /// Resolve every buffered frame with whatever lookahead remains.
    pub fn finish(&mut self) -> Result<Vec<TrackRow>> {
        let mut rows = Vec::new();
        while !self.buffer.is_empty() {
            rows.extend(self.process_front()?);
        }
        Ok(rows)
    }

    fn process_front(&mut self) -> Result<Vec<TrackRow>> {
        let (frame, dets) = self.buffer.pop_front().expect("buffer is not empty");
        let future: Vec<Vec<BoundingBox>> = self
            .buffer
            .iter()
            .map(|(_, d)| d.iter().map(|d| d.bbox).collect())
            .collect();
        let scored = self.score_all(frame, &dets, &future)?;

        let cols: Vec<usize> = (0..dets.len()).collect();
        let (mut full_rows, mut full_costs, mut inp_rows, mut inp_costs) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (t, s) in self.tracks.iter().zip(&scored) {
            if t.tracklet.gap == 0 {
                full_rows.push(s.id);
                full_costs.extend_from_slice(&s.costs);
            } else {
                inp_rows.push(s.id);
                inp_costs.extend_from_slice(&s.costs);
            }
        }
        let full = CostMatrix::new(full_rows, cols.clone(), full_costs)?;
        let inp = CostMatrix::new(inp_rows, cols, inp_costs)?;
        let result = two_pass_assign(&full, &inp, self.gate())?;
        self.lifecycle_update(frame, &dets, &result, scored)
    }

    fn interaction(&self, idx: usize) -> InteractionRep {
        let dim = self.model.config.interaction_dim;
        if !self.cfg.interactions_enabled || !self.tracks[idx].has_motion() {
            return InteractionRep::zeros(dim);
        }
        let others: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .enumerate()
            .filter(|(j, t)| *j != idx && t.has_motion())
            .map(|(_, t)| t.latent.clone())
            .collect();
        aggregate_interactions(&others, dim)
    }

    fn score_all(
        &self,
        frame: u32,
        dets: &[Detection],
        future: &[Vec<BoundingBox>],
    ) -> Result<Vec<Scored>> {
        let mut out = Vec::with_capacity(self.tracks.len());
        for (idx, t) in self.tracks.iter().enumerate() {
            let interaction = self.interaction(idx);
            let last = t.tracklet.last().bbox;
            let gap = t.tracklet.gap as usize;
            if dets.is_empty() {
                // nothing to score; the tracklet can only age this frame
                out.push(Scored {
                    id: t.tracklet.id,
                    costs: Vec::new(),
                    filled: Vec::new(),
                    cursor: t.cursor.clone(),
                    state: t.cursor.state.clone(),
                    from: last,
                });
                continue;
            }
            let (filled, cursor, from) = if gap == 0 || self.cfg.inpainting == InpaintingMode::Off {
                (Vec::new(), t.cursor.clone(), last)
            } else {
                self.fill_gap(t, frame, gap, &interaction, dets, future)?
            };
            let (state, dist) = cursor.predict(self.model, &interaction)?;
            let costs = dets
                .iter()
                .map(|d| {
                    let v = Velocity::between(&from, &d.bbox, self.dims);
                    if self.model.codebook.covers(&v) {
                        -score_next(&dist, &self.model.codebook, &v)
                    } else {
                        INFEASIBLE
                    }
                })
                .collect();
            out.push(Scored {
                id: t.tracklet.id,
                costs,
                filled,
                cursor,
                state,
                from,
            });
        }
        Ok(out)
    }

    /// Sample candidate continuations over the gap, pick one, and replay it.
    fn fill_gap(
        &self,
        t: &Track,
        frame: u32,
        gap: usize,
        interaction: &InteractionRep,
        dets: &[Detection],
        future: &[Vec<BoundingBox>],
    ) -> Result<(Vec<BoundingBox>, MotionCursor, BoundingBox)> {
        let last = t.tracklet.last().bbox;
        let mut r = rng::derived(self.cfg.seed, t.tracklet.id, frame as u64);
        let trs = self.cfg.trs_enabled;
        let steps = if trs { gap + 1 + future.len() } else { gap };
        let candidates = inpaint_from(
            self.model,
            &t.cursor,
            &last,
            self.dims,
            interaction,
            steps,
            self.cfg.samples,
            self.cfg.mode,
            &mut r,
        )?;
        let chosen = if trs {
            let mut frames = Vec::with_capacity(1 + future.len());
            frames.push(dets.iter().map(|d| d.bbox).collect());
            frames.extend(future.iter().cloned());
            trs_select(&candidates, &frames, self.cfg.iou_threshold)?.index
        } else {
            let mut best = 0;
            for (i, c) in candidates.iter().enumerate() {
                if c.log_prob > candidates[best].log_prob {
                    best = i;
                }
            }
            best
        };
        let filled: Vec<BoundingBox> = candidates[chosen].boxes[..gap].to_vec();
        let mut cursor = t.cursor.clone();
        let mut prev = last;
        for b in &filled {
            let (state, _) = cursor.predict(self.model, interaction)?;
            cursor = cursor.advance(state, Velocity::between(&prev, b, self.dims));
            prev = *b;
        }
        Ok((filled, cursor, prev))
    }

    fn emit(&self, t: &Tracklet, boxes: &[TrackedBox], rows: &mut Vec<TrackRow>) {
        rows.extend(
            boxes
                .iter()
                .filter(|b| self.cfg.emits(b.origin))
                .map(|b| TrackRow {
                    frame: b.frame,
                    id: t.id,
                    bbox: b.bbox,
                }),
        );
    }

    /// Apply an assignment: extend matched tracklets, age unmatched ones,
    /// confirm, drop or terminate, and spawn tracklets for unassigned
    /// detections.
    fn lifecycle_update(
        &mut self,
        frame: u32,
        dets: &[Detection],
        result: &AssignmentResult,
        scored: Vec<Scored>,
    ) -> Result<Vec<TrackRow>> {
        let mut rows = Vec::new();
        let mut keep = Vec::with_capacity(self.tracks.len());
        let tracks = core::mem::take(&mut self.tracks);
        for (mut t, s) in tracks.into_iter().zip(scored) {
            match result.detection_for(t.tracklet.id) {
                Some(d) => {
                    if t.tracklet.is_terminated() {
                        return Err(Error::Contract(format!(
                            "detection assigned to terminated tracklet {}",
                            t.tracklet.id
                        )));
                    }
                    let before = t.tracklet.len();
                    let first_new = t.tracklet.last().frame + 1;
                    let mut prev_box = t.tracklet.last().bbox;
                    for (k, b) in s.filled.iter().enumerate() {
                        t.tracklet
                            .push(first_new + k as u32, *b, BoxOrigin::Inpainted)?;
                        t.latent = self
                            .model
                            .encode_step(&t.latent, &Velocity::between(&prev_box, b, self.dims));
                        prev_box = *b;
                    }
                    let det = dets[d].bbox;
                    let v = Velocity::between(&s.from, &det, self.dims);
                    t.tracklet.push(frame, det, BoxOrigin::Detected)?;
                    t.latent = self.model.encode_step(&t.latent, &v);
                    t.cursor = s.cursor.advance(s.state, v);
                    t.tracklet.gap = 0;

                    let tl = &mut t.tracklet;
                    if tl.status == TrackletStatus::Tentative {
                        tl.hits += 1;
                        tl.misses = 0;
                        if tl.hits >= self.cfg.confirm_hits {
                            tl.status = TrackletStatus::Alive;
                            self.emit(&t.tracklet, t.tracklet.boxes(), &mut rows);
                        }
                    } else {
                        tl.status = TrackletStatus::Alive;
                        self.emit(&t.tracklet, &t.tracklet.boxes()[before..], &mut rows);
                    }
                    keep.push(t);
                }
                None => {
                    let tl = &mut t.tracklet;
                    tl.gap += 1;
                    if tl.status == TrackletStatus::Tentative {
                        tl.hits = 0;
                        tl.misses += 1;
                        if tl.misses >= self.cfg.drop_misses {
                            continue;
                        }
                    } else {
                        tl.status = TrackletStatus::TentativelyAlive;
                        if tl.gap > self.cfg.termination_gap {
                            tl.status = TrackletStatus::Terminated;
                            continue;
                        }
                    }
                    keep.push(t);
                }
            }
        }
        for &d in &result.unassigned_detections {
            let id = self.next_id;
            self.next_id += 1;
            let mut tracklet = Tracklet::born(id, frame, dets[d].bbox);
            if self.cfg.confirm_hits <= 1 {
                tracklet.status = TrackletStatus::Alive;
                rows.push(TrackRow {
                    frame,
                    id,
                    bbox: dets[d].bbox,
                });
            }
            keep.push(Track {
                tracklet,
                cursor: MotionCursor::start(self.model),
                latent: alloc::vec![0.0; self.model.config.manet_hidden_dim],
            });
        }
        self.tracks = keep;
        Ok(rows)
    }
}

/// Track a whole detection stream. Frames run from 1 to the last detection
/// frame (or `frames`, if larger); missing frames count as empty.
pub fn run_sequence(
    detections: &[Detection],
    model: &MotionModel,
    dims: FrameDims,
    cfg: &TrackerConfig,
    frames: Option<u32>,
) -> Result<Vec<TrackRow>> {
    let last = detections
        .iter()
        .map(|d| d.frame)
        .max()
        .unwrap_or(0)
        .max(frames.unwrap_or(0));
    if detections.iter().any(|d| d.frame == 0) {
        return Err(Error::Data("frame numbers start at 1".into()));
    }
    let mut per_frame: Vec<Vec<Detection>> = alloc::vec![Vec::new(); last as usize];
    for d in detections {
        per_frame[d.frame as usize - 1].push(*d);
    }
    let mut tracker = Tracker::new(model, dims, cfg.clone())?;
    let mut rows = Vec::new();
    for (i, dets) in per_frame.iter().enumerate() {
        rows.extend(tracker.track_frame(i as u32 + 1, dets)?);
    }
    rows.extend(tracker.finish()?);
    sort_rows(&mut rows);
    Ok(rows)
}
