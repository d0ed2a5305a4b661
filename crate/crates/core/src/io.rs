//! File formats: detection CSV in, MOT-style track CSV in/out, and one JSON
//! record per window out.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::TrackSet;
use crate::pipeline::WindowOutput;
use crate::types::{BBox, Collective, Detection, Individual, Interaction};

/// Parse a detection stream.
///
/// Line format: `frame,x,y,w,h,confidence[,f1,..,fF]` with an optional
/// `# F=<n>` header declaring the appearance dimension. Frames must be
/// non-decreasing. Blank lines and `#` comments are skipped.
pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<Detection>> {
    let mut detections = Vec::new();
    let mut feature_dim: Option<usize> = None;
    let mut last_frame: Option<u64> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(dim) = rest.trim().strip_prefix("F=") {
                feature_dim = Some(dim.trim().parse().map_err(|_| Error::MalformedInput {
                    line: lineno,
                    reason: format!("bad feature dimension {dim:?}"),
                })?);
            }
            continue;
        }

        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let expect = 6 + feature_dim.unwrap_or(0);
        if fields.len() != expect {
            return Err(Error::MalformedInput {
                line: lineno,
                reason: format!("expected {expect} fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedInput {
                line: lineno,
                reason: format!("bad {what} {s:?}"),
            })
        };
        let frame: u64 = fields[0].parse().map_err(|_| Error::MalformedInput {
            line: lineno,
            reason: format!("bad frame {:?}", fields[0]),
        })?;
        if let Some(last) = last_frame {
            if frame < last {
                return Err(Error::OutOfOrderFrame { frame, line: lineno });
            }
        }
        last_frame = Some(frame);
        let x = parse_f(fields[1], "x")?;
        let y = parse_f(fields[2], "y")?;
        let w = parse_f(fields[3], "w")?;
        let h = parse_f(fields[4], "h")?;
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::MalformedInput {
                line: lineno,
                reason: format!("non-positive box {w}x{h}"),
            });
        }
        let confidence = parse_f(fields[5], "confidence")?;
        let appearance = match feature_dim {
            Some(dim) if dim > 0 => {
                let mut f = Vec::with_capacity(dim);
                for s in &fields[6..] {
                    f.push(parse_f(s, "feature")?);
                }
                Some(f)
            }
            _ => None,
        };
        detections.push(Detection {
            frame,
            bbox: BBox::new(x, y, w, h),
            confidence,
            appearance,
        });
    }
    Ok(detections)
}

/// Write detections in the format [`read_detections`] parses.
pub fn write_detections<W: Write>(mut w: W, detections: &[Detection]) -> Result<()> {
    let dim = detections
        .iter()
        .filter_map(|d| d.appearance.as_ref().map(Vec::len))
        .max()
        .unwrap_or(0);
    if dim > 0 {
        writeln!(w, "# F={dim}")?;
    }
    for d in detections {
        write!(
            w,
            "{},{},{},{},{},{}",
            d.frame, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence
        )?;
        if dim > 0 {
            let zero = vec![0.0; dim];
            for v in d.appearance.as_deref().unwrap_or(&zero) {
                write!(w, ",{v}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write tracks as MOT rows: `frame,id,x,y,w,h,1,-1,-1,-1`, frame-major.
pub fn write_tracks<W: Write>(mut w: W, tracks: &TrackSet) -> Result<()> {
    let mut rows: Vec<(u64, u64, &BBox)> = tracks
        .iter()
        .flat_map(|(&id, frames)| frames.iter().map(move |(&f, b)| (f, id, b)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (frame, id, b) in rows {
        writeln!(w, "{},{},{},{},{},{},1,-1,-1,-1", frame, id, b.x, b.y, b.w, b.h)?;
    }
    Ok(())
}

/// Parse MOT rows as written by [`write_tracks`]; extra trailing fields are
/// ignored.
pub fn read_tracks<R: BufRead>(reader: R) -> Result<TrackSet> {
    let mut tracks: TrackSet = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(Error::MalformedInput {
                line: lineno,
                reason: format!("expected at least 6 fields, got {}", fields.len()),
            });
        }
        let err = |what: &str, s: &str| Error::MalformedInput {
            line: lineno,
            reason: format!("bad {what} {s:?}"),
        };
        let frame: u64 = fields[0].parse().map_err(|_| err("frame", fields[0]))?;
        let id: u64 = fields[1].parse().map_err(|_| err("id", fields[1]))?;
        let x: f64 = fields[2].parse().map_err(|_| err("x", fields[2]))?;
        let y: f64 = fields[3].parse().map_err(|_| err("y", fields[3]))?;
        let w: f64 = fields[4].parse().map_err(|_| err("w", fields[4]))?;
        let h: f64 = fields[5].parse().map_err(|_| err("h", fields[5]))?;
        if w <= 0.0 || h <= 0.0 {
            return Err(err("box size", trimmed));
        }
        tracks.entry(id).or_default().insert(frame, BBox::new(x, y, w, h));
    }
    Ok(tracks)
}

#[derive(Serialize)]
struct WindowRecord<'a> {
    window: (u64, u64),
    individual: &'a BTreeMap<u64, Individual>,
    interactions: Vec<(u64, u64, Interaction, f64)>,
    collective: &'a BTreeMap<u64, BTreeMap<Collective, f64>>,
    scene: Option<Collective>,
}

/// Write one JSON object per window: individual labels, committed pairwise
/// interactions, per-target collective posteriors, and the scene label.
pub fn write_windows<W: Write>(mut w: W, outputs: &[WindowOutput]) -> Result<()> {
    for out in outputs {
        let record = WindowRecord {
            window: out.window,
            individual: &out.individual,
            interactions: out
                .interactions
                .iter()
                .map(|(&(i, j), &(label, p))| (i, j, label, p))
                .collect(),
            collective: &out.collective,
            scene: out.scene,
        };
        serde_json::to_writer(&mut w, &record).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}
