//! MOTChallenge sequence directories: `seqinfo.ini`, `gt/gt.txt`, `det/det.txt`.

use std::path::{Path, PathBuf};

use artist_core::synth::{tracks_from_rows, SyntheticSequence};
use artist_core::training::{Corpus, TrainingScene};
use artist_core::{Detection, TrackRow};

use crate::error::{self, Result};
use crate::motfile::{self, SeqInfo, PEDESTRIAN};

pub fn seqinfo_path(dir: &Path) -> PathBuf {
    dir.join("seqinfo.ini")
}

pub fn gt_path(dir: &Path) -> PathBuf {
    dir.join("gt").join("gt.txt")
}

pub fn det_path(dir: &Path) -> PathBuf {
    dir.join("det").join("det.txt")
}

pub fn read_info(dir: &Path) -> Result<SeqInfo> {
    let mut info = motfile::parse_seqinfo(&error::read_to_string(seqinfo_path(dir))?)?;
    if info.name.is_empty() {
        info.name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(info)
}

/// Pedestrian ground truth of a sequence.
pub fn read_gt(dir: &Path) -> Result<Vec<TrackRow>> {
    let rows = motfile::parse_gt(&error::read_to_string(gt_path(dir))?, Some(&[PEDESTRIAN]))?;
    Ok(rows.iter().map(|r| r.track_row()).collect())
}

/// Detections, with the count of rows dropped for degenerate sizes.
pub fn read_detections(dir: &Path) -> Result<(Vec<Detection>, usize)> {
    let s = motfile::parse_detections(&error::read_to_string(det_path(dir))?)?;
    Ok((s.detections, s.dropped))
}

/// Write a generated sequence in MOTChallenge layout.
pub fn write_sequence(dir: &Path, name: &str, seq: &SyntheticSequence) -> Result<()> {
    let info = SeqInfo {
        name: name.to_string(),
        dims: seq.dims,
        fps: seq.fps,
        length: seq.frames,
    };
    error::write(seqinfo_path(dir), motfile::write_seqinfo(&info))?;
    error::write(gt_path(dir), motfile::write_gt(&seq.gt))?;
    error::write(det_path(dir), motfile::write_detections(&seq.detections))
}

/// Training corpus from the ground truth of several sequences.
pub fn corpus(dirs: &[PathBuf]) -> Result<Corpus> {
    let scenes = dirs
        .iter()
        .map(|d| {
            Ok(TrainingScene {
                dims: read_info(d)?.dims,
                tracks: tracks_from_rows(&read_gt(d)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { scenes })
}
