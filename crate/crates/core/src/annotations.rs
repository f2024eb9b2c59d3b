//! Beat and downbeat annotation files.
//!
//! One event per line, either `time` (every line is a downbeat) or
//! `time index` where index 1 marks a downbeat and every line is a beat.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub downbeat_times: Vec<f64>,
    pub beat_times: Option<Vec<f64>>,
    /// Dataset name this annotation came from.
    pub source: String,
}

impl AnnotationSet {
    pub fn new(downbeat_times: Vec<f64>, beat_times: Option<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        check_times(&downbeat_times, "downbeat")?;
        if let Some(b) = &beat_times {
            check_times(b, "beat")?;
        }
        Ok(Self {
            downbeat_times,
            beat_times,
            source: source.into(),
        })
    }

    /// Two-column text when beats are present, one column otherwise.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match &self.beat_times {
            Some(beats) => {
                let mut next_down = 0;
                let mut index = 0usize;
                for &b in beats {
                    if next_down < self.downbeat_times.len() && same_time(self.downbeat_times[next_down], b) {
                        index = 1;
                        next_down += 1;
                    } else {
                        index += 1;
                    }
                    let _ = writeln!(out, "{b:.6} {index}");
                }
            }
            None => {
                for &d in &self.downbeat_times {
                    let _ = writeln!(out, "{d:.6}");
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() < 5e-7
}

fn check_times(times: &[f64], what: &str) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::invalid(format!("{what} time {t} is not a nonnegative number")));
    }
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!(
            "{what} times must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub fn parse_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_annotation_text(&text, path, source)
}

pub fn parse_annotation_text(text: &str, origin: &Path, source: String) -> Result<AnnotationSet> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<(usize, f64, Option<i64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let time: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad time `{}`", fields[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_err(line_no, format!("time {time} is not a nonnegative number")));
        }
        let index = match fields.len() {
            1 => None,
            2 => Some(
                fields[1]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0)
                    .map(|v| v as i64)
                    .ok_or_else(|| parse_err(line_no, format!("bad beat index `{}`", fields[1])))?,
            ),
            n => return Err(parse_err(line_no, format!("expected 1 or 2 columns, found {n}"))),
        };
        if let Some(&(prev_line, prev, _)) = rows.last() {
            if !(time > prev) {
                return Err(parse_err(
                    line_no,
                    format!("time {time} does not follow {prev} on line {prev_line}"),
                ));
            }
            if rows[0].2.is_some() != index.is_some() {
                return Err(parse_err(line_no, "mixed one- and two-column lines".into()));
            }
        }
        rows.push((line_no, time, index));
    }
    let two_column = rows.first().is_some_and(|r| r.2.is_some());
    if two_column {
        let downbeats = rows.iter().filter(|r| r.2 == Some(1)).map(|r| r.1).collect();
        let beats = rows.iter().map(|r| r.1).collect();
        Ok(AnnotationSet {
            downbeat_times: downbeats,
            beat_times: Some(beats),
            source,
        })
    } else {
        Ok(AnnotationSet {
            downbeat_times: rows.iter().map(|r| r.1).collect(),
            beat_times: None,
            source,
        })
    }
}
