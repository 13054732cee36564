//! Text frame log:
//!
//! ```text
//! FRAME <id> <timestamp> <tx ty tz qx qy qz qw>
//! <x y z>            (points, sensor frame, any number)
//! OPT <id> <tx ty tz qx qy qz qw>
//! ```
//!
//! Records are replayed in file order, which stands for arrival order. Blank
//! lines and `#` comments are ignored.

use std::fmt::Write as _;

use skimap::posegraph::{FrameId, Pose};
use skimap::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FrameLogError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub enum Record {
    Frame {
        id: FrameId,
        timestamp: f64,
        pose: Pose,
        points: Vec<Point>,
        line: usize,
    },
    Opt {
        id: FrameId,
        pose: Pose,
        line: usize,
    },
}

fn err(line: usize, message: impl Into<String>) -> FrameLogError {
    FrameLogError {
        line,
        message: message.into(),
    }
}

fn floats<const N: usize>(fields: &[&str], line: usize) -> Result<[f64; N], FrameLogError> {
    let mut out = [0.0; N];
    for (slot, field) in out.iter_mut().zip(fields) {
        let v: f64 = field
            .parse()
            .map_err(|_| err(line, format!("not a number: {field:?}")))?;
        if !v.is_finite() {
            return Err(err(line, format!("non-finite value {field:?}")));
        }
        *slot = v;
    }
    Ok(out)
}

fn pose(fields: &[&str], line: usize) -> Result<Pose, FrameLogError> {
    let [tx, ty, tz, qx, qy, qz, qw] = floats::<7>(fields, line)?;
    Pose::from_tq([tx, ty, tz], [qx, qy, qz, qw]).map_err(|e| err(line, e.to_string()))
}

fn frame_id(field: &str, line: usize) -> Result<FrameId, FrameLogError> {
    field
        .parse()
        .map_err(|_| err(line, format!("bad frame id {field:?}")))
}

pub fn parse(text: &str) -> Result<Vec<Record>, FrameLogError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match fields[0] {
            "FRAME" => {
                if fields.len() != 10 {
                    return Err(err(line, format!("FRAME needs 9 fields, got {}", fields.len() - 1)));
                }
                let [timestamp] = floats::<1>(&fields[2..3], line)?;
                records.push(Record::Frame {
                    id: frame_id(fields[1], line)?,
                    timestamp,
                    pose: pose(&fields[3..], line)?,
                    points: Vec::new(),
                    line,
                });
            }
            "OPT" => {
                if fields.len() != 9 {
                    return Err(err(line, format!("OPT needs 8 fields, got {}", fields.len() - 1)));
                }
                records.push(Record::Opt {
                    id: frame_id(fields[1], line)?,
                    pose: pose(&fields[2..], line)?,
                    line,
                });
            }
            _ => {
                if fields.len() != 3 {
                    return Err(err(line, format!("expected `x y z`, got {} fields", fields.len())));
                }
                let [x, y, z] = floats::<3>(&fields, line)?;
                match records.last_mut() {
                    Some(Record::Frame { points, .. }) => points.push(Point::new(x, y, z)),
                    _ => return Err(err(line, "point outside a FRAME block")),
                }
            }
        }
    }
    Ok(records)
}

fn write_pose(out: &mut String, pose: &Pose) {
    let (t, q) = pose.to_tq();
    for v in t.iter().chain(&q) {
        write!(out, " {v}").unwrap();
    }
}

/// Appends a FRAME block. Values use shortest round-trip formatting, so a
/// parsed log reproduces the written values exactly.
pub fn write_frame(out: &mut String, id: FrameId, timestamp: f64, pose: &Pose, points: &[Point]) {
    write!(out, "FRAME {id} {timestamp}").unwrap();
    write_pose(out, pose);
    out.push('\n');
    for p in points {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
}

pub fn write_opt(out: &mut String, id: FrameId, pose: &Pose) {
    write!(out, "OPT {id}").unwrap();
    write_pose(out, pose);
    out.push('\n');
}
