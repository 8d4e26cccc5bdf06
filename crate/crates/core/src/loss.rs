//! Training objective as pure scalar functions.
//!
//! The heatmap head uses a penalty-reduced focal loss over all pixels,
//! normalized by the number of positive pixels. The offset head is scored
//! with horizontal L1 distances: directly for the up/down offsets and, for the
//! same-row offset, at the pixels the predicted up/down offsets land on
//! (coarse-to-fine). All reductions run sequentially in row-major order.
//!
//! Regression targets are rounded to `f32` exactly as the encoder stores them,
//! so a prediction equal to the encoded targets scores exactly zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{densify_all, offset_target, GroundTruthMaps};
use crate::geometry::{GeometryError, ImagePoint, ImageSpec, LaneCurve};
use crate::plane::Plane;

/// Lower clamp applied to `s_hat` before taking its logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("heatmap target has no positive pixels; loss is undefined")]
    NoPositives,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("ground truth does not match the given curves: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The four per-pixel network outputs: keypoint score and the three
/// horizontal offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMaps {
    pub score: Plane,
    pub off_up: Plane,
    pub off_mid: Plane,
    pub off_down: Plane,
}

impl LogitMaps {
    pub fn new(score: Plane, off_up: Plane, off_mid: Plane, off_down: Plane) -> Result<Self, LossError> {
        let shape = score.shape();
        for (name, p) in [("off_up", &off_up), ("off_mid", &off_mid), ("off_down", &off_down)] {
            if p.shape() != shape {
                return Err(LossError::Shape(format!(
                    "{name} is {:?}, score is {:?}",
                    p.shape(),
                    shape
                )));
            }
        }
        if let Some(v) = score.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LossError::Domain(format!("score {v} outside [0, 1]")));
        }
        Ok(Self {
            score,
            off_up,
            off_mid,
            off_down,
        })
    }

    pub fn zeros(spec: ImageSpec) -> Self {
        Self {
            score: Plane::for_image(spec),
            off_up: Plane::for_image(spec),
            off_mid: Plane::for_image(spec),
            off_down: Plane::for_image(spec),
        }
    }

    pub fn width(&self) -> usize {
        self.score.width()
    }

    pub fn height(&self) -> usize {
        self.score.height()
    }

    pub fn image_spec(&self) -> ImageSpec {
        ImageSpec {
            width: self.width() as u32,
            height: self.height() as u32,
        }
    }

    /// Shifts all four planes horizontally by `k` columns.
    pub fn shifted_x(&self, k: i64) -> Self {
        Self {
            score: self.score.shifted_x(k),
            off_up: self.off_up.shifted_x(k),
            off_mid: self.off_mid.shifted_x(k),
            off_down: self.off_down.shifted_x(k),
        }
    }

    pub fn planes(&self) -> [&Plane; 4] {
        [&self.score, &self.off_up, &self.off_mid, &self.off_down]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Penalty-reduction exponent for pixels near positives.
    pub beta: f64,
    /// Focusing exponent for easy pixels.
    pub gamma: f64,
    /// Weight of the regression terms.
    pub lambda: f64,
    #[serde(skip)]
    pub dy: u32,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 4.0,
            gamma: 2.0,
            lambda: 0.02,
            dy: 10,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LossError::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.dy < 1 {
            return Err(LossError::Domain("dy must be at least 1".into()));
        }
        Ok(())
    }
}

/// All loss components for one image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub heat_loss: f64,
    pub loss_up: f64,
    pub loss_down: f64,
    pub loss_mid: f64,
    pub total: f64,
    /// Number of pixels with target exactly 1.
    pub n_pos: usize,
    /// Number of pixels in the offset supervision mask.
    pub supervised: usize,
}

impl LossReport {
    /// Combines components as `heat + lambda * (up + down + mid)`.
    pub fn from_components(heat: f64, up: f64, down: f64, mid: f64, lambda: f64) -> Self {
        Self {
            heat_loss: heat,
            loss_up: up,
            loss_down: down,
            loss_mid: mid,
            total: heat + lambda * (up + down + mid),
            n_pos: 0,
            supervised: 0,
        }
    }

    /// True when no pixel carried offset supervision; regression terms are
    /// then reported as zero.
    pub fn empty_supervision(&self) -> bool {
        self.supervised == 0
    }
}

/// Up/down regression losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpDownLoss {
    pub up: f64,
    pub down: f64,
    pub supervised: usize,
}

impl UpDownLoss {
    pub fn empty_supervision(&self) -> bool {
        self.supervised == 0
    }
}

/// Penalty coefficients `(g_hat, s_hat)` for target `g` and score `s`.
pub fn penalty_coefficients(g: f64, s: f64) -> Result<(f64, f64), LossError> {
    if !(0.0..=1.0).contains(&g) {
        return Err(LossError::Domain(format!("target {g} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(LossError::Domain(format!("score {s} outside [0, 1]")));
    }
    Ok(if g == 1.0 { (0.0, s) } else { (g, 1.0 - s) })
}

fn check_shape(a: &Plane, b: &Plane, what: &str) -> Result<(), LossError> {
    if a.shape() != b.shape() {
        return Err(LossError::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Penalty-reduced focal loss; returns `(loss, n_pos)`.
fn heatmap_loss_with_count(score: &Plane, heat: &Plane, cfg: &LossConfig) -> Result<(f64, usize), LossError> {
    check_shape(score, heat, "score vs heat")?;
    let mut sum = 0.0f64;
    let mut n_pos = 0usize;
    for (&s, &g) in score.data().iter().zip(heat.data()) {
        let (g, s) = (g as f64, s as f64);
        if g == 1.0 {
            n_pos += 1;
        }
        let (g_hat, s_hat) = penalty_coefficients(g, s)?;
        let s_hat = s_hat.clamp(LOG_EPS, 1.0);
        if s_hat == 1.0 {
            continue;
        }
        sum += (1.0 - g_hat).powf(cfg.beta) * (1.0 - s_hat).powf(cfg.gamma) * s_hat.ln();
    }
    if n_pos == 0 {
        return Err(LossError::NoPositives);
    }
    Ok((-sum / n_pos as f64, n_pos))
}

/// Heatmap loss summed over all pixels and divided by the number of
/// positive (`g == 1`) pixels.
pub fn heatmap_loss(score: &Plane, heat: &Plane, cfg: &LossConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    heatmap_loss_with_count(score, heat, cfg).map(|(l, _)| l)
}

/// Local curve around `p`: the points predicted `dy` above, on the same row
/// and `dy` below. Offsets are read at the pixel nearest to `p`.
pub fn recover_local_curve(p: ImagePoint, logits: &LogitMaps, dy: u32) -> Result<[ImagePoint; 3], LossError> {
    let (c, r) = p.pixel();
    if !logits.image_spec().contains_pixel(c, r) {
        return Err(LossError::Domain(format!("point ({}, {}) outside the image", p.x, p.y)));
    }
    let (c, r) = (c as usize, r as usize);
    let dy = dy as f64;
    Ok([
        ImagePoint::new(p.x + logits.off_up.get(c, r) as f64, p.y - dy),
        ImagePoint::new(p.x + logits.off_mid.get(c, r) as f64, p.y),
        ImagePoint::new(p.x + logits.off_down.get(c, r) as f64, p.y + dy),
    ])
}

fn check_inputs(logits: &LogitMaps, gt: &GroundTruthMaps, curves: &[LaneCurve]) -> Result<(), LossError> {
    check_shape(&logits.score, &gt.heat, "logits vs ground truth")?;
    if let Some(bad) = gt.owner.iter().flatten().find(|&&i| i as usize >= curves.len()) {
        return Err(LossError::Inconsistent(format!(
            "mask refers to curve index {bad}, only {} curves given",
            curves.len()
        )));
    }
    Ok(())
}

/// Per-curve means aggregated with weights equal to each curve's keypoint
/// count (densified rows).
fn weighted_mean(sums: &[f64], counts: &[usize], weights: &[usize], scale: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&s, &n), &w) in sums.iter().zip(counts).zip(weights) {
        if n == 0 {
            continue;
        }
        num += w as f64 * (s / (scale * n as f64));
        den += w as f64;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn target(dense: &LaneCurve, col: usize, row: i64) -> Result<f64, LossError> {
    offset_target(dense, col, row).map(f64::from).ok_or_else(|| {
        LossError::Inconsistent(format!(
            "row {row} outside the span of curve {} at a supervised pixel",
            dense.id()
        ))
    })
}

/// L1 losses of the up and down offsets over each curve's supervision
/// neighborhood.
pub fn offset_loss_updown(
    logits: &LogitMaps,
    gt: &GroundTruthMaps,
    curves: &[LaneCurve],
    cfg: &LossConfig,
) -> Result<UpDownLoss, LossError> {
    cfg.validate()?;
    check_inputs(logits, gt, curves)?;
    let dense = densify_all(curves)?;
    let n = dense.len();
    let (mut up, mut down, mut count) = (vec![0.0; n], vec![0.0; n], vec![0usize; n]);
    let dy = cfg.dy as i64;
    let w = gt.width();
    for (i, owner) in gt.owner.iter().enumerate() {
        let Some(l) = *owner else { continue };
        let l = l as usize;
        let (col, row) = (i % w, (i / w) as i64);
        let t_up = target(&dense[l], col, row - dy)?;
        let t_down = target(&dense[l], col, row + dy)?;
        up[l] += (logits.off_up.data()[i] as f64 - t_up).abs();
        down[l] += (logits.off_down.data()[i] as f64 - t_down).abs();
        count[l] += 1;
    }
    let weights: Vec<usize> = dense.iter().map(LaneCurve::len).collect();
    let supervised = count.iter().sum::<usize>();
    if supervised == 0 {
        log::warn!("offset loss: supervision mask is empty");
    }
    Ok(UpDownLoss {
        up: weighted_mean(&up, &count, &weights, 1.0),
        down: weighted_mean(&down, &count, &weights, 1.0),
        supervised,
    })
}

/// Coarse-to-fine loss of the same-row offset.
///
/// For every supervised pixel the predicted up/down offsets give coarse
/// points one interval above and below; each is rounded to the nearest pixel
/// (clamped into the image) and the same-row offset read there must land on
/// the curve.
pub fn offset_loss_c2f(
    logits: &LogitMaps,
    gt: &GroundTruthMaps,
    curves: &[LaneCurve],
    cfg: &LossConfig,
) -> Result<f64, LossError> {
    cfg.validate()?;
    check_inputs(logits, gt, curves)?;
    let dense = densify_all(curves)?;
    let n = dense.len();
    let (mut sums, mut count) = (vec![0.0; n], vec![0usize; n]);
    let dy = cfg.dy as i64;
    let w = gt.width();
    let mid = &logits.off_mid;
    for (i, owner) in gt.owner.iter().enumerate() {
        let Some(l) = *owner else { continue };
        let l = l as usize;
        let (col, row) = (i % w, (i / w) as i64);
        let mut term = 0.0;
        for (plane, target_row) in [(&logits.off_up, row - dy), (&logits.off_down, row + dy)] {
            let coarse_x = col as f64 + plane.data()[i] as f64;
            let (qc, qr) = mid.clamp_pixel(coarse_x, target_row as f64);
            let t = target(&dense[l], qc, target_row)?;
            term += (mid.get(qc, qr) as f64 - t).abs();
        }
        sums[l] += term;
        count[l] += 1;
    }
    let weights: Vec<usize> = dense.iter().map(LaneCurve::len).collect();
    Ok(weighted_mean(&sums, &count, &weights, 2.0))
}

/// Complete objective: `heat + lambda * (up + down + mid)`.
pub fn total_loss(
    logits: &LogitMaps,
    gt: &GroundTruthMaps,
    curves: &[LaneCurve],
    cfg: &LossConfig,
) -> Result<LossReport, LossError> {
    cfg.validate()?;
    let (heat, n_pos) = heatmap_loss_with_count(&logits.score, &gt.heat, cfg)?;
    let ud = offset_loss_updown(logits, gt, curves, cfg)?;
    let mid = offset_loss_c2f(logits, gt, curves, cfg)?;
    let mut report = LossReport::from_components(heat, ud.up, ud.down, mid, cfg.lambda);
    report.n_pos = n_pos;
    report.supervised = ud.supervised;
    Ok(report)
}
