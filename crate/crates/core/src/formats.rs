//! File formats.
//!
//! Trajectories are JSON lines, one sample per line:
//!
//! ```text
//! {"t": 0.0, "position": [0.4, 0.0, 0.5], "orientation": [1.0, 0.0, 0.0, 0.0], "gripper": "open"}
//! ```
//!
//! Orientations are `[w, x, y, z]` quaternions. Ones that are off unit norm
//! by more than [`QUATERNION_NORM_TOLERANCE`] are normalized on load with a
//! warning. Every other artifact (segment files, task instances, waypoint
//! lists, joint paths, reports) is pretty-printed JSON of the library type.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::screw::Pose;
use crate::segment::{Demonstration, Gripper};

pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Json(String),
    #[error("invalid trajectory: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One line of a trajectory file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub position: [f64; 3],
    pub orientation: [f64; 4],
    pub gripper: Gripper,
}

/// Something fixed up while loading.
#[derive(Clone, Debug, PartialEq)]
pub struct Warning {
    pub line: usize,
    pub message: String,
}

/// Parses a trajectory. Blank lines are skipped; line numbers in errors and
/// warnings are 1-based.
pub fn read_trajectory<R: Read>(reader: R, id: &str) -> Result<(Demonstration, Vec<Warning>), FormatError> {
    let mut poses = Vec::new();
    let mut timestamps = Vec::new();
    let mut gripper = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| FormatError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| FormatError::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        let fail = |message: String| FormatError::Line { line: line_no, message };
        if !rec.t.is_finite() || rec.position.iter().chain(&rec.orientation).any(|v| !v.is_finite()) {
            return Err(fail("non-finite value".into()));
        }
        if timestamps.last().is_some_and(|&prev| rec.t <= prev) {
            return Err(fail(format!("time {} does not increase", rec.t)));
        }
        let n = rec.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-9 {
            return Err(fail("orientation quaternion has zero norm".into()));
        }
        let (pose, normalized) = Pose::from_wxyz_within(rec.orientation, rec.position, QUATERNION_NORM_TOLERANCE);
        if normalized {
            let message = format!("orientation norm {n:.9} normalized");
            log::warn!("{id} line {line_no}: {message}");
            warnings.push(Warning { line: line_no, message });
        }
        poses.push(pose);
        timestamps.push(rec.t);
        gripper.push(rec.gripper);
    }
    let demo = Demonstration {
        id: id.into(),
        poses,
        timestamps,
        gripper,
    };
    demo.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok((demo, warnings))
}

pub fn write_trajectory<W: Write>(mut w: W, demo: &Demonstration) -> io::Result<()> {
    for ((p, &t), &g) in demo.poses.iter().zip(&demo.timestamps).zip(&demo.gripper) {
        let rec = TrajectoryRecord {
            t,
            position: p.translation.into(),
            orientation: p.wxyz(),
            gripper: g,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Loads a trajectory file; the demonstration id is the file stem.
pub fn load_trajectory(path: &Path) -> Result<(Demonstration, Vec<Warning>), FormatError> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_trajectory(fs::File::open(path).map_err(io_err(path))?, &id)
}

pub fn save_trajectory(path: &Path, demo: &Demonstration) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, demo).map_err(io_err(path))?;
    fs::write(path, buf).map_err(io_err(path))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn from_json<T: DeserializeOwned>(s: &str) -> Result<T, FormatError> {
    serde_json::from_str(s).map_err(|e| FormatError::Json(e.to_string()))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    from_json(&s).map_err(|e| FormatError::Json(format!("{}: {e}", path.display())))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    fs::write(path, to_json(value)).map_err(io_err(path))
}
