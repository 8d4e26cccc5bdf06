//! Turning per-pixel keypoint scores and local offsets into lane instances.
//!
//! Both decoders only look at the rows of the `dy` grid (`0, dy, 2dy, ...`),
//! where the keypoints live:
//!
//! - [`greedy_decode`] seeds lanes on the row with the most local maxima and
//!   grows each lane point by point, refining every point with the same-row
//!   offset before proposing its neighbors. Seeding repeats on the remaining
//!   (unclaimed) maxima until none are left.
//! - [`efficient_decode`] extracts all keypoints at once, predicts neighbor
//!   positions for all of them in one pass, links each keypoint to the
//!   nearest keypoint in the adjacent rows and groups linked chains.

mod efficient;
mod greedy;

pub use efficient::efficient_decode;
pub use greedy::greedy_decode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, ImagePoint, LaneCurve};
use crate::plane::Plane;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("invalid decoder config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Minimum heatmap score for a keypoint.
    pub theta_h: f32,
    #[serde(skip)]
    pub dy: u32,
    /// Half-width of the row-wise maximum window, pixels.
    pub nms_window: usize,
    /// Association gate for the efficient decoder; `None` means `2 * dy`.
    pub max_assoc_dist: Option<f64>,
    /// Lanes with fewer points are dropped.
    pub min_points: usize,
    /// Apply the same-row offset to every decoded point.
    pub refine: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            theta_h: 0.5,
            dy: 10,
            nms_window: 4,
            max_assoc_dist: None,
            min_points: 2,
            refine: true,
        }
    }
}

impl DecoderConfig {
    pub fn assoc_dist(&self) -> f64 {
        self.max_assoc_dist.unwrap_or(2.0 * self.dy as f64)
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.theta_h > 0.0 && self.theta_h < 1.0) {
            return Err(DecodeError::InvalidConfig(format!(
                "theta_h must be in (0, 1), got {}",
                self.theta_h
            )));
        }
        if self.dy < 1 {
            return Err(DecodeError::InvalidConfig("dy must be at least 1".into()));
        }
        if self.nms_window < 1 {
            return Err(DecodeError::InvalidConfig("nms_window must be at least 1".into()));
        }
        if self.min_points < 2 {
            return Err(DecodeError::InvalidConfig("min_points must be at least 2".into()));
        }
        if self.assoc_dist().is_nan() || self.assoc_dist() < 0.0 {
            return Err(DecodeError::InvalidConfig("max_assoc_dist must be >= 0".into()));
        }
        Ok(())
    }
}

/// One decoded lane: points on consecutive grid rows, top to bottom, with the
/// heatmap score that admitted each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedLane {
    pub points: Vec<ImagePoint>,
    pub scores: Vec<f32>,
}

impl DecodedLane {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_score(&self) -> f32 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().sum::<f32>() / self.scores.len() as f32
    }

    pub fn to_curve(&self, id: u32) -> Result<LaneCurve, GeometryError> {
        LaneCurve::new(id, self.points.clone())
    }
}

/// Columns of local maxima in one row of scores.
///
/// A column qualifies when its score is at least `theta`, strictly greater
/// than every score to its left within `window`, and no smaller than every
/// score to its right within `window`. Plateaus therefore emit only their
/// leftmost column.
pub fn local_maxima(row: &[f32], theta: f32, window: usize) -> Vec<usize> {
    let n = row.len();
    let mut out = Vec::new();
    let mut c = 0;
    while c < n {
        let v = row[c];
        if v < theta {
            c += 1;
            continue;
        }
        let lo = c.saturating_sub(window);
        let hi = (c + window).min(n - 1);
        let left_ok = row[lo..c].iter().all(|&u| u < v);
        let right_ok = left_ok && row[c + 1..=hi].iter().all(|&u| u <= v);
        if left_ok && right_ok {
            out.push(c);
            // nothing within the window to the right can qualify
            c = hi + 1;
        } else {
            c += 1;
        }
    }
    out
}

/// Local maxima of `score` on one row.
pub fn row_local_maxima(score: &Plane, row: usize, cfg: &DecoderConfig) -> Vec<usize> {
    local_maxima(score.row(row), cfg.theta_h, cfg.nms_window)
}

/// Grid row with the largest number of local maxima, ties toward the bottom
/// of the image, together with its maxima columns.
pub(crate) fn best_row<'a>(
    rows: impl Iterator<Item = (usize, &'a [f32])>,
    cfg: &DecoderConfig,
) -> Option<(usize, Vec<usize>)> {
    let mut best: Option<(usize, Vec<usize>)> = None;
    for (idx, row) in rows {
        let cols = local_maxima(row, cfg.theta_h, cfg.nms_window);
        if cols.is_empty() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| cols.len() >= b.len()) {
            best = Some((idx, cols));
        }
    }
    best
}

/// Row (on the `dy` grid) containing the most local maxima; `None` for an
/// empty scene.
pub fn select_start_row(score: &Plane, cfg: &DecoderConfig) -> Option<(usize, Vec<usize>)> {
    let step = cfg.dy.max(1) as usize;
    best_row((0..score.height()).step_by(step).map(|r| (r, score.row(r))), cfg)
}


#[cfg(test)]
mod round_trip {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::geometry::ImageSpec;
    use crate::loss::LogitMaps;
    use crate::synth::render_ideal;
    use proptest::prelude::*;

    type Decoder = fn(&LogitMaps, &DecoderConfig) -> Result<Vec<DecodedLane>, DecodeError>;
    const DECODERS: [(&str, Decoder); 2] = [("greedy", greedy_decode), ("efficient", efficient_decode)];

    fn ideal(w: u32, h: u32, lanes: &[LaneCurve]) -> LogitMaps {
        render_ideal(lanes, ImageSpec::new(w, h).unwrap(), &EncoderConfig::default()).unwrap()
    }

    fn line(id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> LaneCurve {
        LaneCurve::from_xy(id, &[(x0, y0), (x1, y1)]).unwrap()
    }

    fn check_invariants(lanes: &[DecodedLane], cfg: &DecoderConfig) {
        for l in lanes {
            assert_eq!(l.points.len(), l.scores.len());
            assert!(l.len() >= cfg.min_points);
            for pair in l.points.windows(2) {
                assert_eq!(pair[1].y - pair[0].y, cfg.dy as f64);
            }
            assert!(l.points.iter().all(|p| (p.y as u32).is_multiple_of(cfg.dy)));
            assert!(l.scores.iter().all(|&s| s >= cfg.theta_h));
        }
    }

    #[test]
    fn vertical_line() {
        let logits = ideal(200, 600, &[line(0, 100.0, 0.0, 100.0, 599.0)]);
        let cfg = DecoderConfig::default();
        for (name, dec) in DECODERS {
            let lanes = dec(&logits, &cfg).unwrap();
            assert_eq!(lanes.len(), 1, "{name}");
            assert_eq!(lanes[0].len(), 60, "{name}");
            assert!(lanes[0].points.iter().all(|p| (p.x - 100.0).abs() <= 0.5), "{name}");
            check_invariants(&lanes, &cfg);
        }
    }

    #[test]
    fn blank_image_has_no_lanes() {
        let logits = LogitMaps::zeros(ImageSpec::new(64, 64).unwrap());
        for (_, dec) in DECODERS {
            assert!(dec(&logits, &DecoderConfig::default()).unwrap().is_empty());
        }
    }

    #[test]
    fn parallel_lines_stay_apart() {
        let logits = ideal(
            300,
            400,
            &[line(0, 100.0, 0.0, 100.0, 399.0), line(1, 180.0, 0.0, 180.0, 399.0)],
        );
        for (name, dec) in DECODERS {
            let mut lanes = dec(&logits, &DecoderConfig::default()).unwrap();
            assert_eq!(lanes.len(), 2, "{name}");
            lanes.sort_by(|a, b| a.points[0].x.total_cmp(&b.points[0].x));
            assert!(lanes[0].points.iter().all(|p| (p.x - 100.0).abs() <= 0.5));
            assert!(lanes[1].points.iter().all(|p| (p.x - 180.0).abs() <= 0.5));
        }
    }

    #[test]
    fn isolated_keypoint_is_dropped() {
        let mut logits = LogitMaps::zeros(ImageSpec::new(64, 64).unwrap());
        logits.score.set(30, 20, 1.0);
        for (_, dec) in DECODERS {
            assert!(dec(&logits, &DecoderConfig::default()).unwrap().is_empty());
        }
    }

    #[test]
    fn slanted_lines_agree_between_decoders() {
        let logits = ideal(
            400,
            300,
            &[
                line(0, 60.0, 40.0, 150.0, 290.0),
                line(1, 330.0, 20.0, 220.0, 280.0),
                line(2, 200.0, 100.0, 200.0, 200.0),
            ],
        );
        let cfg = DecoderConfig::default();
        let mut g = greedy_decode(&logits, &cfg).unwrap();
        let mut e = efficient_decode(&logits, &cfg).unwrap();
        check_invariants(&g, &cfg);
        check_invariants(&e, &cfg);
        let key = |l: &DecodedLane| (l.points[0].y as i64, l.points[0].x as i64);
        g.sort_by_key(key);
        e.sort_by_key(key);
        assert_eq!(g.len(), 3);
        assert_eq!(g, e);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn decoding_commutes_with_horizontal_shift(k in -40i64..40, x0 in 120.0f64..160.0, slope in -0.4f64..0.4) {
            let lanes = [line(0, x0, 30.0, x0 + 200.0 * slope, 230.0), line(1, x0 + 60.0, 30.0, x0 + 60.0 + 200.0 * slope, 230.0)];
            let logits = ideal(400, 260, &lanes);
            let shifted = ideal(400, 260, &[lanes[0].translated(k as f64, 0.0), lanes[1].translated(k as f64, 0.0)]);
            prop_assert_eq!(&logits.shifted_x(k).score, &shifted.score);
            let cfg = DecoderConfig::default();
            for (_, dec) in DECODERS {
                let a = dec(&logits, &cfg).unwrap();
                let b = dec(&shifted, &cfg).unwrap();
                prop_assert_eq!(a.len(), b.len());
                for (la, lb) in a.iter().zip(&b) {
                    prop_assert_eq!(la.len(), lb.len());
                    for (p, q) in la.points.iter().zip(&lb.points) {
                        prop_assert_eq!(p.y, q.y);
                        prop_assert!((q.x - p.x - k as f64).abs() < 1e-3);
                    }
                }
            }
        }
    }
}
