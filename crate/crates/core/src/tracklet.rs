//! Identity-level box sequences and their lifecycle status.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{seq_to_velocities, BoundingBox, FrameDims, Velocity};

/// Where a tracklet box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxOrigin {
    Detected,
    Inpainted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackletStatus {
    /// Born from an unassigned detection, not yet confirmed.
    Tentative,
    /// Confirmed and assigned a detection in the last processed frame.
    Alive,
    /// Confirmed but missing detections for `gap` frames.
    TentativelyAlive,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedBox {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub origin: BoxOrigin,
}

/// One row of a track table: an identity's box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Sort rows by frame, then id.
pub fn sort_rows(rows: &mut [TrackRow]) {
    rows.sort_by_key(|r| (r.frame, r.id));
}

/// One identity's box history.
///
/// Boxes are strictly increasing in frame. `gap` counts frames since the last
/// `Detected` box, relative to the most recently processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub start: u32,
    boxes: Vec<TrackedBox>,
    pub gap: u32,
    pub status: TrackletStatus,
    /// Consecutive assignments while tentative (the birth detection counts).
    pub hits: u32,
    /// Consecutive misses while tentative.
    pub misses: u32,
}

impl Tracklet {
    pub fn born(id: u64, frame: u32, bbox: BoundingBox) -> Self {
        Self {
            id,
            start: frame,
            boxes: alloc::vec![TrackedBox {
                frame,
                bbox,
                origin: BoxOrigin::Detected
            }],
            gap: 0,
            status: TrackletStatus::Tentative,
            hits: 1,
            misses: 0,
        }
    }

    pub fn boxes(&self) -> &[TrackedBox] {
        &self.boxes
    }

    pub fn last(&self) -> &TrackedBox {
        self.boxes.last().expect("tracklets are never empty")
    }

    pub fn last_detected(&self) -> &TrackedBox {
        self.boxes
            .iter()
            .rev()
            .find(|b| b.origin == BoxOrigin::Detected)
            .expect("tracklets start with a detection")
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(
            self.status,
            TrackletStatus::Alive | TrackletStatus::TentativelyAlive
        )
    }

    pub fn is_terminated(&self) -> bool {
        self.status == TrackletStatus::Terminated
    }

    /// Append a box; frames must strictly increase.
    pub fn push(&mut self, frame: u32, bbox: BoundingBox, origin: BoxOrigin) -> Result<()> {
        if self.is_terminated() {
            return Err(Error::Contract(alloc::format!(
                "tracklet {} is terminated",
                self.id
            )));
        }
        if frame <= self.last().frame {
            return Err(Error::Contract(alloc::format!(
                "tracklet {}: frame {frame} not after {}",
                self.id,
                self.last().frame
            )));
        }
        self.boxes.push(TrackedBox {
            frame,
            bbox,
            origin,
        });
        Ok(())
    }

    pub fn plain_boxes(&self) -> Vec<BoundingBox> {
        self.boxes.iter().map(|b| b.bbox).collect()
    }

    /// Velocities between consecutive stored boxes (empty for a single box).
    pub fn velocities(&self, dims: FrameDims) -> Vec<Velocity> {
        if self.boxes.len() < 2 {
            return Vec::new();
        }
        seq_to_velocities(&self.plain_boxes(), dims).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_enforces_order_and_termination() {
        let b = BoundingBox::new(0.0, 0.0, 5.0, 5.0).unwrap();
        let mut t = Tracklet::born(1, 3, b);
        assert!(t.push(3, b, BoxOrigin::Detected).is_err());
        t.push(4, b, BoxOrigin::Inpainted).unwrap();
        t.push(6, b, BoxOrigin::Detected).unwrap();
        assert_eq!(t.last_detected().frame, 6);
        assert_eq!(
            t.velocities(FrameDims {
                width: 10.0,
                height: 10.0
            })
            .len(),
            2
        );
        t.status = TrackletStatus::Terminated;
        assert!(matches!(
            t.push(7, b, BoxOrigin::Detected),
            Err(Error::Contract(_))
        ));
    }
}
