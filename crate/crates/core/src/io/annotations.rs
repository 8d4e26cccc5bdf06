//! Dataset annotation parsers.

use log::warn;
use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::geometry::{ImagePoint, LaneCurve};

/// TuSimple marks rows where a lane is absent with this x value.
pub const TUSIMPLE_ABSENT: f64 = -2.0;

/// Parses a CULane `.lines.txt` body: one lane per line, `x1 y1 x2 y2 ...`.
///
/// Points are sorted by ascending `y`. Lines with fewer than two points are
/// skipped. Lane ids count the kept lanes from 0.
pub fn parse_culane_annotation(text: &str) -> Result<Vec<LaneCurve>, FormatError> {
    let mut lanes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !tokens.len().is_multiple_of(2) {
            return Err(FormatError::Parse {
                line: lineno,
                msg: format!("odd number of coordinates ({})", tokens.len()),
            });
        }
        let mut values = Vec::with_capacity(tokens.len());
        for t in &tokens {
            let v: f64 = t.parse().map_err(|_| FormatError::Parse {
                line: lineno,
                msg: format!("not a number: {t:?}"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Parse {
                    line: lineno,
                    msg: format!("non-finite coordinate {t:?}"),
                });
            }
            values.push(v);
        }
        let mut pts: Vec<ImagePoint> = values.chunks_exact(2).map(|c| ImagePoint::new(c[0], c[1])).collect();
        if pts.len() < 2 {
            warn!("line {lineno}: lane with {} point skipped", pts.len());
            continue;
        }
        pts.sort_by(|a, b| a.y.total_cmp(&b.y));
        let curve = LaneCurve::new(lanes.len() as u32, pts).map_err(|e| FormatError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        lanes.push(curve);
    }
    Ok(lanes)
}

/// One line of a TuSimple label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TusimpleRecord {
    pub lanes: Vec<Vec<f64>>,
    pub h_samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_file: Option<String>,
}

/// Converts a record to curves, dropping absent rows. Lanes with fewer than
/// two present rows are dropped; the remaining lanes keep their index as id.
pub fn parse_tusimple_record(rec: &TusimpleRecord) -> Result<Vec<LaneCurve>, FormatError> {
    let mut out = Vec::new();
    for (i, xs) in rec.lanes.iter().enumerate() {
        if xs.len() != rec.h_samples.len() {
            return Err(FormatError::Schema(format!(
                "lane {i} has {} values but h_samples has {}",
                xs.len(),
                rec.h_samples.len()
            )));
        }
        let mut pts: Vec<ImagePoint> = xs
            .iter()
            .zip(&rec.h_samples)
            .filter(|(&x, _)| x != TUSIMPLE_ABSENT)
            .map(|(&x, &y)| ImagePoint::new(x, y))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        pts.sort_by(|a, b| a.y.total_cmp(&b.y));
        let curve = LaneCurve::new(i as u32, pts).map_err(|e| FormatError::Schema(format!("lane {i}: {e}")))?;
        out.push(curve);
    }
    Ok(out)
}

pub fn parse_tusimple_line(line: &str) -> Result<TusimpleRecord, FormatError> {
    Ok(serde_json::from_str(line)?)
}
