//! JSON lane documents.
//!
//! ```json
//! {"image_size": [976, 590],
//!  "lanes": [{"id": 0, "points": [[412.5, 300.0], [420.25, 310.0]], "score": 0.98}]}
//! ```
//!
//! Points are `[x, y]` with strictly increasing `y`. `score` is optional.
//! Coordinates are written in shortest round-trip form, so reading back a
//! written file reproduces every value exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::decoder::DecodedLane;
use crate::geometry::{ImagePoint, ImageSpec, LaneCurve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneRecord {
    pub id: u32,
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneFile {
    pub image_size: [u32; 2],
    pub lanes: Vec<LaneRecord>,
}

impl LaneFile {
    pub fn from_curves(spec: ImageSpec, curves: &[LaneCurve]) -> Self {
        let lanes = curves
            .iter()
            .map(|c| LaneRecord {
                id: c.id(),
                points: c.points().iter().map(|p| [p.x, p.y]).collect(),
                score: None,
            })
            .collect();
        Self {
            image_size: [spec.width, spec.height],
            lanes,
        }
    }

    /// Decoded lanes get consecutive ids and their mean point score.
    pub fn from_decoded(spec: ImageSpec, decoded: &[DecodedLane]) -> Self {
        let lanes = decoded
            .iter()
            .enumerate()
            .map(|(i, d)| LaneRecord {
                id: i as u32,
                points: d.points.iter().map(|p| [p.x, p.y]).collect(),
                score: Some(d.mean_score() as f64),
            })
            .collect();
        Self {
            image_size: [spec.width, spec.height],
            lanes,
        }
    }

    pub fn image_spec(&self) -> Result<ImageSpec, FormatError> {
        ImageSpec::new(self.image_size[0], self.image_size[1]).map_err(|e| FormatError::Schema(e.to_string()))
    }

    pub fn to_curves(&self) -> Result<Vec<LaneCurve>, FormatError> {
        self.lanes
            .iter()
            .map(|l| {
                let pts = l.points.iter().map(|&[x, y]| ImagePoint::new(x, y)).collect();
                LaneCurve::new(l.id, pts).map_err(|e| FormatError::Schema(format!("lane {}: {e}", l.id)))
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let f: Self = serde_json::from_str(text)?;
        f.image_spec()?;
        f.to_curves()?;
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lane files always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let f = LaneFile::from_json(
            r#"{"image_size": [976, 590],
                "lanes": [{"id": 0, "points": [[412.5, 300.0], [420.25, 310.0]], "score": 0.98}]}"#,
        )
        .unwrap();
        assert_eq!(f.image_size, [976, 590]);
        assert_eq!(f.lanes[0].score, Some(0.98));
        let c = f.to_curves().unwrap();
        assert_eq!(c[0].points()[1], ImagePoint::new(420.25, 310.0));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(LaneFile::from_json(r#"{"image_size": [10, 10], "lanes": [], "extra": 1}"#).is_err());
        assert!(LaneFile::from_json(r#"{"image_size": [0, 10], "lanes": []}"#).is_err());
        assert!(
            LaneFile::from_json(r#"{"image_size": [10, 10], "lanes": [{"id": 0, "points": [[1, 5], [2, 4]]}]}"#)
                .is_err()
        );
        assert!(LaneFile::from_json(r#"{"image_size": [10, 10], "lanes": [{"id": 0, "points": [[1, 5]]}]}"#).is_err());
    }

    #[test]
    fn score_is_omitted_when_absent() {
        let c = LaneCurve::from_xy(3, &[(1.0, 2.0), (3.0, 4.0)]).unwrap();
        let f = LaneFile::from_curves(ImageSpec::new(8, 8).unwrap(), &[c]);
        assert!(!f.to_json().contains("score"));
    }

    proptest! {
        #[test]
        fn round_trip_is_value_exact(
            xs in prop::collection::vec(-1e4f64..1e4, 2..20),
            y0 in -100.0f64..100.0,
            steps in prop::collection::vec(1e-3f64..50.0, 20),
            score in prop::option::of(0.0f64..1.0),
        ) {
            let mut y = y0;
            let points: Vec<[f64; 2]> = xs.iter().zip(&steps).map(|(&x, &s)| { y += s; [x, y] }).collect();
            let f = LaneFile { image_size: [976, 590], lanes: vec![LaneRecord { id: 7, points, score }] };
            let back = LaneFile::from_json(&f.to_json()).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
