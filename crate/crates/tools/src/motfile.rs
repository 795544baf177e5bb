//! MOTChallenge text formats: detections, ground truth, results and
//! `seqinfo.ini`.

use std::fmt::Write as _;
use std::str::FromStr;

use artist_core::tracklet::{sort_rows, TrackRow};
use artist_core::{BoundingBox, Detection, FrameDims};

use crate::error::{Result, ToolError};

/// Class id of pedestrians in ground-truth files.
pub const PEDESTRIAN: i64 = 1;
/// Placeholder for an unused field.
const UNSET: f64 = -1.0;

/// Parsed detection file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionStream {
    pub detections: Vec<Detection>,
    /// Rows skipped for a non-positive width or height.
    pub dropped: usize,
}

/// One ground-truth row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtRow {
    pub frame: u32,
    pub id: u64,
    pub bbox: BoundingBox,
    pub class: i64,
    pub visibility: f64,
}

impl GtRow {
    pub fn track_row(&self) -> TrackRow {
        TrackRow {
            frame: self.frame,
            id: self.id,
            bbox: self.bbox,
        }
    }
}

fn field<T: FromStr>(fields: &[&str], i: usize, name: &str, line: usize) -> Result<T> {
    let raw = fields[i].trim();
    raw.parse().map_err(|_| ToolError::Parse {
        line,
        msg: format!("{name} field {raw:?} is not a valid number"),
    })
}

fn real(fields: &[&str], i: usize, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field(fields, i, name, line)?;
    if !v.is_finite() {
        return Err(ToolError::Parse {
            line,
            msg: format!("{name} is not finite"),
        });
    }
    Ok(v)
}

fn rows(text: &str, min_fields: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(move |(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() < min_fields {
                Err(ToolError::Parse {
                    line: i + 1,
                    msg: format!(
                        "expected at least {min_fields} comma-separated fields, found {}",
                        fields.len()
                    ),
                })
            } else {
                Ok((i + 1, fields))
            }
        })
}

fn frame(fields: &[&str], line: usize) -> Result<u32> {
    let f: u32 = field(fields, 0, "frame", line)?;
    if f == 0 {
        return Err(ToolError::Parse {
            line,
            msg: "frame numbers start at 1".into(),
        });
    }
    Ok(f)
}

/// Parse `frame,id,left,top,width,height,conf[,x,y,z]` lines. The id field is
/// ignored; rows with a non-positive size are counted and skipped.
pub fn parse_detections(text: &str) -> Result<DetectionStream> {
    let mut out = DetectionStream::default();
    for row in rows(text, 7) {
        let (line, f) = row?;
        let frame = frame(&f, line)?;
        let _: f64 = real(&f, 1, "id", line)?;
        let (x, y, w, h) = (
            real(&f, 2, "left", line)?,
            real(&f, 3, "top", line)?,
            real(&f, 4, "width", line)?,
            real(&f, 5, "height", line)?,
        );
        let conf = real(&f, 6, "confidence", line)?;
        if w <= 0.0 || h <= 0.0 {
            out.dropped += 1;
            continue;
        }
        let bbox = BoundingBox::new(x, y, w, h)?;
        out.detections.push(Detection::new(bbox, conf, frame)?);
    }
    Ok(out)
}

/// Parse `frame,id,left,top,width,height,flag,class,visibility` lines. Rows
/// with flag 0 are excluded, as are rows whose class is not in `classes`
/// (when given). Missing class and visibility default to pedestrian and 1;
/// the value -1 marks either as unset, which also lets results files
/// (`conf,-1,-1,-1` tail) be read back with this parser.
pub fn parse_gt(text: &str, classes: Option<&[i64]>) -> Result<Vec<GtRow>> {
    let mut out = Vec::new();
    for row in rows(text, 6) {
        let (line, f) = row?;
        let frame = frame(&f, line)?;
        let id: i64 = field(&f, 1, "id", line)?;
        if id <= 0 {
            return Err(ToolError::Parse {
                line,
                msg: format!("ground-truth id {id} is not positive"),
            });
        }
        let (x, y, w, h) = (
            real(&f, 2, "left", line)?,
            real(&f, 3, "top", line)?,
            real(&f, 4, "width", line)?,
            real(&f, 5, "height", line)?,
        );
        let flag: i64 = if f.len() > 6 {
            field(&f, 6, "flag", line)?
        } else {
            1
        };
        let class: i64 = if f.len() > 7 {
            field(&f, 7, "class", line)?
        } else {
            PEDESTRIAN
        };
        let visibility = if f.len() > 8 {
            real(&f, 8, "visibility", line)?
        } else {
            UNSET
        };
        let visibility = if visibility == UNSET { 1.0 } else { visibility };
        if !(0.0..=1.0).contains(&visibility) {
            return Err(ToolError::Parse {
                line,
                msg: format!("visibility {visibility} outside [0, 1]"),
            });
        }
        if flag == 0 || (class != UNSET as i64 && classes.is_some_and(|c| !c.contains(&class))) {
            continue;
        }
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| ToolError::Parse {
            line,
            msg: e.to_string(),
        })?;
        out.push(GtRow {
            frame,
            id: id as u64,
            bbox,
            class,
            visibility,
        });
    }
    Ok(out)
}

/// Tracker output: rows sorted by (frame, id), coordinates to 0.01 px.
pub fn write_results(rows: &[TrackRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut s = String::new();
    for r in &sorted {
        let b = r.bbox;
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1",
            r.frame, r.id, b.x, b.y, b.w, b.h
        )
        .unwrap();
    }
    s
}

/// Ground truth in the 9-column layout, every row flagged, pedestrian, fully visible.
pub fn write_gt(rows: &[TrackRow]) -> String {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut s = String::new();
    for r in &sorted {
        let b = r.bbox;
        writeln!(
            s,
            "{},{},{:.2},{:.2},{:.2},{:.2},1,{PEDESTRIAN},1",
            r.frame, r.id, b.x, b.y, b.w, b.h
        )
        .unwrap();
    }
    s
}

pub fn write_detections(dets: &[Detection]) -> String {
    let mut sorted = dets.to_vec();
    sorted.sort_by_key(|d| d.frame);
    let mut s = String::new();
    for d in &sorted {
        let b = d.bbox;
        writeln!(
            s,
            "{},-1,{:.2},{:.2},{:.2},{:.2},{:.3},-1,-1,-1",
            d.frame, b.x, b.y, b.w, b.h, d.confidence
        )
        .unwrap();
    }
    s
}

/// The fields of `seqinfo.ini` used here.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqInfo {
    pub name: String,
    pub dims: FrameDims,
    pub fps: f64,
    pub length: u32,
}

pub fn parse_seqinfo(text: &str) -> Result<SeqInfo> {
    let mut name = String::new();
    let (mut w, mut h, mut fps, mut len) = (None, None, None, None);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let v = v.trim();
        let num = |v: &str| {
            v.parse::<f64>().map_err(|_| ToolError::Parse {
                line: i + 1,
                msg: format!("{k} value {v:?} is not a number"),
            })
        };
        match k.trim() {
            "name" => name = v.to_string(),
            "imWidth" => w = Some(num(v)?),
            "imHeight" => h = Some(num(v)?),
            "frameRate" => fps = Some(num(v)?),
            "seqLength" => len = Some(num(v)? as u32),
            _ => {}
        }
    }
    let missing = |k: &str| ToolError::Parse {
        line: 0,
        msg: format!("seqinfo is missing {k}"),
    };
    let dims = FrameDims::new(
        w.ok_or_else(|| missing("imWidth"))?,
        h.ok_or_else(|| missing("imHeight"))?,
    )?;
    Ok(SeqInfo {
        name,
        dims,
        fps: fps.unwrap_or(30.0),
        length: len.unwrap_or(0),
    })
}

pub fn write_seqinfo(info: &SeqInfo) -> String {
    format!(
        "[Sequence]\nname={}\nimDir=img1\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\nimExt=.jpg\n",
        info.name, info.fps, info.length, info.dims.width, info.dims.height
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_fields_map_by_position() {
        let s = parse_detections("1,-1,100,200,50,120,0.9,-1,-1,-1\n").unwrap();
        assert_eq!(
            s.detections,
            vec![
                Detection::new(BoundingBox::new(100.0, 200.0, 50.0, 120.0).unwrap(), 0.9, 1)
                    .unwrap()
            ]
        );
        assert_eq!(parse_detections("").unwrap(), DetectionStream::default());
    }

    #[test]
    fn short_lines_name_their_line() {
        let e = parse_detections("1,-1,1,1,5,5,1,-1,-1,-1\n1,-1,100,200,50\n").unwrap_err();
        assert!(matches!(e, ToolError::Parse { line: 2, .. }), "{e}");
        assert!(e.to_string().starts_with("line 2"));
    }

    #[test]
    fn malformed_numbers_are_rejected() {
        assert!(parse_detections("1,-1,abc,200,50,120,0.9\n").is_err());
        assert!(parse_detections("1.5,-1,1,200,50,120,0.9\n").is_err());
        assert!(parse_detections("0,-1,1,200,50,120,0.9\n").is_err());
        assert!(parse_detections("1,-1,NaN,200,50,120,0.9\n").is_err());
        assert!(parse_gt("1,1,1,1,5,5,1,1,1.5\n", None).is_err());
    }

    #[test]
    fn degenerate_detections_are_counted() {
        let s = parse_detections("1,-1,1,1,0,5,1\n2,-1,1,1,5,-2,1\n3,-1,1,1,5,5,1\n").unwrap();
        assert_eq!((s.detections.len(), s.dropped), (1, 2));
    }

    #[test]
    fn result_line_format() {
        let r = TrackRow {
            frame: 3,
            id: 7,
            bbox: BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap(),
        };
        assert_eq!(write_results(&[r]), "3,7,1.00,2.00,3.00,4.00,1,-1,-1,-1\n");
        assert_eq!(write_results(&[]), "");
    }

    #[test]
    fn ground_truth_filters() {
        let text = "1,1,0,0,10,10,1,1,1\n1,2,0,0,10,10,0,1,1\n1,3,0,0,10,10,1,7,0.25\n";
        let all = parse_gt(text, None).unwrap();
        assert_eq!(all.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(all[1].visibility, 0.25);
        let peds = parse_gt(text, Some(&[PEDESTRIAN])).unwrap();
        assert_eq!(peds.len(), 1);
    }

    #[test]
    fn ground_truth_counts_rows() {
        let mut text = String::new();
        for f in 1..=5 {
            for id in 1..=2 {
                text.push_str(&format!("{f},{id},{},{},10,20,1,1,1\n", 10 * id, f));
            }
        }
        assert_eq!(parse_gt(&text, None).unwrap().len(), 10);
    }

    #[test]
    fn results_round_trip_through_the_gt_parser() {
        let rows: Vec<TrackRow> = (1..=20)
            .map(|i| TrackRow {
                frame: i / 3 + 1,
                id: (i % 3 + 1) as u64,
                bbox: BoundingBox::new(
                    i as f64 * 1.234567,
                    0.5 + i as f64 / 7.0,
                    10.0 + i as f64 / 3.0,
                    20.004,
                )
                .unwrap(),
            })
            .collect();
        let back = parse_gt(&write_results(&rows), None).unwrap();
        let mut want = rows.clone();
        sort_rows(&mut want);
        assert_eq!(back.len(), want.len());
        for (a, b) in back.iter().zip(&want) {
            assert_eq!((a.frame, a.id), (b.frame, b.id));
            for (p, q) in [
                (a.bbox.x, b.bbox.x),
                (a.bbox.y, b.bbox.y),
                (a.bbox.w, b.bbox.w),
                (a.bbox.h, b.bbox.h),
            ] {
                assert!((p - q).abs() <= 0.005 + 1e-9);
            }
        }
    }

    #[test]
    fn writer_is_deterministic() {
        let rows = [
            TrackRow {
                frame: 2,
                id: 1,
                bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            },
            TrackRow {
                frame: 1,
                id: 2,
                bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            },
        ];
        assert_eq!(write_results(&rows), write_results(&[rows[1], rows[0]]));
    }

    #[test]
    fn seqinfo_round_trip() {
        let info = SeqInfo {
            name: "s".into(),
            dims: FrameDims::new(1920.0, 1080.0).unwrap(),
            fps: 25.0,
            length: 40,
        };
        assert_eq!(parse_seqinfo(&write_seqinfo(&info)).unwrap(), info);
        assert!(parse_seqinfo("[Sequence]\nimWidth=3\n").is_err());
    }
}
