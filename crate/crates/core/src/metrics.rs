//! CLEAR-MOT counters and identity F1.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::assignment::solve;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::tracklet::TrackRow;

/// Minimum IoU for a ground-truth / prediction correspondence.
pub const MATCH_IOU: f64 = 0.5;
/// Coverage fraction at or above which a trajectory is mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage fraction at or below which a trajectory is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

/// Correspondences of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// (gt id, predicted id)
    pub pairs: Vec<(u64, u64)>,
    pub fp: usize,
    pub fn_: usize,
    /// Ground-truth ids whose predicted id changed.
    pub switches: Vec<u64>,
}

/// Match one frame. `last` maps each ground-truth id to the predicted id it
/// was last matched with; carried-over pairs that still overlap are kept
/// before the remaining boxes are assigned by minimum `1 - IoU`. `last` is
/// updated in place.
pub fn match_frame(
    gt: &[(u64, BoundingBox)],
    pred: &[(u64, BoundingBox)],
    last: &mut BTreeMap<u64, u64>,
) -> FrameMatch {
    let mut out = FrameMatch::default();
    let mut gt_used = alloc::vec![false; gt.len()];
    let mut pred_used = alloc::vec![false; pred.len()];

    for (i, (g, gb)) in gt.iter().enumerate() {
        let Some(&p) = last.get(g) else { continue };
        if let Some(j) = pred.iter().position(|(q, _)| *q == p) {
            if !pred_used[j] && iou(gb, &pred[j].1) >= MATCH_IOU {
                gt_used[i] = true;
                pred_used[j] = true;
                out.pairs.push((*g, p));
            }
        }
    }

    let gi: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let pj: Vec<usize> = (0..pred.len()).filter(|&j| !pred_used[j]).collect();
    if !gi.is_empty() && !pj.is_empty() {
        // pairs below the threshold get a cost no valid pair can reach
        let forbidden = (gi.len() + pj.len()) as f64 + 1.0;
        let mut costs = Vec::with_capacity(gi.len() * pj.len());
        for &i in &gi {
            for &j in &pj {
                let o = iou(&gt[i].1, &pred[j].1);
                costs.push(if o >= MATCH_IOU { 1.0 - o } else { forbidden });
            }
        }
        for (a, col) in solve(&costs, gi.len(), pj.len()).into_iter().enumerate() {
            let Some(b) = col else { continue };
            if costs[a * pj.len() + b] >= forbidden {
                continue;
            }
            let (g, p) = (gt[gi[a]].0, pred[pj[b]].0);
            gt_used[gi[a]] = true;
            pred_used[pj[b]] = true;
            if last.get(&g).is_some_and(|&q| q != p) {
                out.switches.push(g);
            }
            out.pairs.push((g, p));
        }
    }
    for &(g, p) in &out.pairs {
        last.insert(g, p);
    }
    out.fn_ = gt_used.iter().filter(|u| !**u).count();
    out.fp = pred_used.iter().filter(|u| !**u).count();
    out
}

/// Evaluation counters and the metrics derived from them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub mota: f64,
    pub idf1: f64,
    pub ids: usize,
    pub mt: f64,
    pub ml: f64,
    pub fp: usize,
    pub fn_: usize,
    pub gt_total: usize,
    pub pred_total: usize,
    pub matches: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub gt_tracks: usize,
    pub mt_count: usize,
    pub ml_count: usize,
}

impl MetricsReport {
    fn finish(mut self) -> Self {
        let gt = self.gt_total.max(1) as f64;
        self.mota = 1.0 - (self.fn_ + self.fp + self.ids) as f64 / gt;
        let denom = 2 * self.idtp + self.idfp + self.idfn;
        self.idf1 = if denom == 0 {
            0.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        };
        let tracks = self.gt_tracks.max(1) as f64;
        self.mt = self.mt_count as f64 / tracks;
        self.ml = self.ml_count as f64 / tracks;
        self
    }
}

/// Pool the counters of several sequences.
pub fn combine(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let mut t = MetricsReport::default();
    for r in reports {
        t.ids += r.ids;
        t.fp += r.fp;
        t.fn_ += r.fn_;
        t.gt_total += r.gt_total;
        t.pred_total += r.pred_total;
        t.matches += r.matches;
        t.idtp += r.idtp;
        t.idfp += r.idfp;
        t.idfn += r.idfn;
        t.gt_tracks += r.gt_tracks;
        t.mt_count += r.mt_count;
        t.ml_count += r.ml_count;
    }
    if t.gt_total == 0 {
        return Err(Error::InsufficientData(
            "metrics are undefined without ground truth".into(),
        ));
    }
    Ok(t.finish())
}

fn by_frame(rows: &[TrackRow]) -> BTreeMap<u32, Vec<(u64, BoundingBox)>> {
    let mut m: BTreeMap<u32, Vec<(u64, BoundingBox)>> = BTreeMap::new();
    for r in rows {
        m.entry(r.frame).or_default().push((r.id, r.bbox));
    }
    m
}

/// Score a predicted track table against ground truth.
pub fn evaluate(gt: &[TrackRow], pred: &[TrackRow]) -> Result<MetricsReport> {
    if gt.is_empty() {
        return Err(Error::InsufficientData(
            "metrics are undefined without ground truth".into(),
        ));
    }
    let gt_frames = by_frame(gt);
    let pred_frames = by_frame(pred);
    let frames: BTreeSet<u32> = gt_frames
        .keys()
        .chain(pred_frames.keys())
        .copied()
        .collect();

    let mut rep = MetricsReport {
        gt_total: gt.len(),
        pred_total: pred.len(),
        ..Default::default()
    };
    let mut last = BTreeMap::new();
    let mut covered: BTreeMap<u64, usize> = BTreeMap::new();
    let mut lifespan: BTreeMap<u64, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let empty = Vec::new();
    for f in frames {
        let g = gt_frames.get(&f).unwrap_or(&empty);
        let p = pred_frames.get(&f).unwrap_or(&empty);
        let m = match_frame(g, p, &mut last);
        rep.fp += m.fp;
        rep.fn_ += m.fn_;
        rep.ids += m.switches.len();
        rep.matches += m.pairs.len();
        for (id, _) in g {
            *lifespan.entry(*id).or_default() += 1;
        }
        for (gid, _) in &m.pairs {
            *covered.entry(*gid).or_default() += 1;
        }
        for (gid, gb) in g {
            for (pid, pb) in p {
                if iou(gb, pb) >= MATCH_IOU {
                    *overlap.entry((*gid, *pid)).or_default() += 1;
                }
            }
        }
    }

    rep.gt_tracks = lifespan.len();
    for (id, &n) in &lifespan {
        let frac = covered.get(id).copied().unwrap_or(0) as f64 / n as f64;
        if frac >= MOSTLY_TRACKED {
            rep.mt_count += 1;
        } else if frac <= MOSTLY_LOST {
            rep.ml_count += 1;
        }
    }

    rep.idtp = identity_true_positives(&overlap);
    rep.idfn = rep.gt_total - rep.idtp;
    rep.idfp = rep.pred_total - rep.idtp;
    Ok(rep.finish())
}

/// Largest total overlap achievable by a one-to-one map between
/// ground-truth and predicted identities.
fn identity_true_positives(overlap: &BTreeMap<(u64, u64), usize>) -> usize {
    let gids: Vec<u64> = overlap
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pids: Vec<u64> = overlap
        .keys()
        .map(|k| k.1)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if gids.is_empty() {
        return 0;
    }
    let mut costs = Vec::with_capacity(gids.len() * pids.len());
    for g in &gids {
        for p in &pids {
            costs.push(-(overlap.get(&(*g, *p)).copied().unwrap_or(0) as f64));
        }
    }
    solve(&costs, gids.len(), pids.len())
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap.get(&(gids[i], pids[j])).copied().unwrap_or(0)))
        .sum()
}
