//! Seeded synthetic scenes standing in for annotated imagery and for the
//! network's output maps.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! Uniform draws are `(next_u64 >> 11) * 2^-53`; Gaussian draws use the
//! cosine branch of Box-Muller on two uniforms, `u1` taken as `1 - uniform`.
//! Every random quantity is drawn in a fixed documented order, so a seed
//! reproduces the same scene in any implementation of these rules.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{local_maxima, DecodedLane};
use crate::encoder::{render_heatmap, render_offsets_per_channel, EncoderConfig};
use crate::geometry::{GeometryError, ImagePoint, ImageSpec, LaneCurve};
use crate::loss::LogitMaps;
use crate::plane::Plane;

/// Upper bound on rejection-sampling attempts per scene.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene constraints not satisfied after {0} attempts")]
    Infeasible(usize),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Portable seeded random source.
pub struct SceneRng(ChaCha8Rng);

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFamily {
    Straight,
    Quadratic,
    Cubic,
}

impl CurveFamily {
    pub const ALL: [CurveFamily; 3] = [Self::Straight, Self::Quadratic, Self::Cubic];
}

/// Parameters of a synthetic road scene.
///
/// Lanes converge toward a vanishing point above the image; a lateral bend
/// `k * width * u^n` (with `u` running from 0 at the bottom row to 1 at the
/// horizon, `n` = 2 for quadratic and 3 for cubic) is shared by all lanes of
/// a scene, each lane scaling it by a small jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub n_lanes: usize,
    pub family: CurveFamily,
    /// Maximum |k| of the bend coefficient, as a fraction of the width.
    pub curvature: f64,
    /// Horizon row as a fraction of the height.
    pub horizon: f64,
    /// Range of lane top rows, fractions of the height.
    pub top_range: [f64; 2],
    /// Range of lane bottom rows, fractions of the height.
    pub bottom_range: [f64; 2],
    /// Minimum horizontal gap between lanes on any shared row, pixels.
    pub min_separation: f64,
    /// Maximum |dx/dy| of any lane.
    pub max_slope: f64,
    /// Lane ends are snapped to multiples of this row interval.
    #[serde(skip)]
    pub row_step: u32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 976,
            height: 590,
            n_lanes: 4,
            family: CurveFamily::Quadratic,
            curvature: 0.12,
            horizon: 0.3,
            top_range: [0.38, 0.6],
            bottom_range: [0.85, 1.0],
            min_separation: 10.0,
            max_slope: 1.6,
            row_step: 10,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn image_spec(&self) -> Result<ImageSpec, SynthError> {
        Ok(ImageSpec::new(self.width, self.height)?)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        self.image_spec()?;
        if !(1..=5).contains(&self.n_lanes) {
            return bad(format!("n_lanes must be 1..=5, got {}", self.n_lanes));
        }
        if self.row_step < 1 {
            return bad("row_step must be at least 1".into());
        }
        for (name, [lo, hi]) in [("top_range", self.top_range), ("bottom_range", self.bottom_range)] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return bad(format!("{name} must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"));
            }
        }
        if self.horizon.is_nan() || self.horizon >= self.top_range[0] {
            return bad("horizon must lie above the lowest allowed lane top".into());
        }
        if self.top_range[1] >= self.bottom_range[0] {
            return bad("top_range must lie above bottom_range".into());
        }
        if !(self.curvature >= 0.0 && self.min_separation >= 0.0 && self.max_slope > 0.0) {
            return bad("curvature, min_separation and max_slope must be non-negative".into());
        }
        Ok(())
    }
}

/// Generates non-crossing lanes by rejection sampling.
///
/// Draw order per attempt: vanishing-point x, bend coefficient, then per
/// lane (bottom x, bend jitter, top row, bottom row). Lanes are returned
/// left to right with ids `0..n`.
pub fn gen_scene(spec: &SceneSpec) -> Result<Vec<LaneCurve>, SynthError> {
    spec.validate()?;
    let mut rng = SceneRng::new(spec.seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(lanes) = try_scene(spec, &mut rng)? {
            return Ok(lanes);
        }
    }
    Err(SynthError::Infeasible(MAX_ATTEMPTS))
}

fn snap(row: f64, step: u32) -> i64 {
    let step = step as f64;
    ((row / step).round() * step) as i64
}

fn try_scene(spec: &SceneSpec, rng: &mut SceneRng) -> Result<Option<Vec<LaneCurve>>, SynthError> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let last_row = spec.height as i64 - 1;
    let horizon_y = spec.horizon * h;
    let vanish_x = rng.range(0.35, 0.65) * w;
    let bend = rng.range(-spec.curvature, spec.curvature) * w;
    let power = match spec.family {
        CurveFamily::Straight => 0,
        CurveFamily::Quadratic => 2,
        CurveFamily::Cubic => 3,
    };

    let mut raw = Vec::with_capacity(spec.n_lanes);
    for _ in 0..spec.n_lanes {
        let bottom_x = rng.range(0.05, 0.95) * w;
        let jitter = rng.range(0.9, 1.1);
        let top = snap(rng.range(spec.top_range[0], spec.top_range[1]) * h, spec.row_step);
        let grid_last = last_row - last_row.rem_euclid(spec.row_step as i64);
        let bottom = snap(rng.range(spec.bottom_range[0], spec.bottom_range[1]) * h, spec.row_step).min(grid_last);
        raw.push((bottom_x, jitter, top.max(0), bottom));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut lanes = Vec::with_capacity(spec.n_lanes);
    for (id, &(bottom_x, jitter, top, bottom)) in raw.iter().enumerate() {
        if bottom - top < 2 * spec.row_step as i64 {
            return Ok(None);
        }
        let mut pts = Vec::with_capacity((bottom - top + 1) as usize);
        for row in top..=bottom {
            let y = row as f64;
            let u = (h - 1.0 - y) / (h - 1.0 - horizon_y);
            let mut x = bottom_x + (vanish_x - bottom_x) * u;
            if power > 0 {
                x += jitter * bend * u.powi(power);
            }
            if !(0.0..=w - 1.0).contains(&x) {
                return Ok(None);
            }
            pts.push(ImagePoint::new(x, y));
        }
        let step = spec.row_step as usize;
        if pts
            .windows(step + 1)
            .any(|win| (win[step].x - win[0].x).abs() > spec.max_slope * step as f64)
        {
            return Ok(None);
        }
        lanes.push(LaneCurve::new(id as u32, pts)?);
    }

    for i in 0..lanes.len() {
        for j in i + 1..lanes.len() {
            if !separated(&lanes[i], &lanes[j], spec.min_separation) {
                return Ok(None);
            }
        }
    }
    Ok(Some(lanes))
}

/// True when `b` stays to the right of `a` by at least `min_gap` on every
/// shared integer row.
pub fn separated(a: &LaneCurve, b: &LaneCurve, min_gap: f64) -> bool {
    let (at, ab) = a.y_span();
    let (bt, bb) = b.y_span();
    let (top, bottom) = (at.max(bt).ceil() as i64, ab.min(bb).floor() as i64);
    (top..=bottom).all(|row| {
        let y = row as f64;
        match (a.sample_x(y), b.sample_x(y)) {
            (Some(xa), Some(xb)) => xb - xa >= min_gap,
            _ => true,
        }
    })
}

/// Network outputs a perfect model would produce: the score plane equals the
/// target heatmap and each offset channel equals its target wherever that
/// target exists (zero elsewhere).
pub fn render_ideal(curves: &[LaneCurve], spec: ImageSpec, cfg: &EncoderConfig) -> Result<LogitMaps, SynthError> {
    let heat = render_heatmap(curves, spec, cfg)?;
    let off = render_offsets_per_channel(curves, spec, cfg)?;
    Ok(LogitMaps {
        score: heat,
        off_up: off.off_up,
        off_mid: off.off_mid,
        off_down: off.off_down,
    })
}

/// Noise model applied to ideal outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Additive Gaussian sd on the score plane (result clamped to [0, 1]).
    pub score_noise_sd: f64,
    /// Additive Gaussian sd on the offset planes, pixels.
    pub offset_noise_sd: f64,
    /// Probability that a grid-row keypoint is erased from the score plane.
    pub dropout_prob: f64,
    /// Radius of the erased disk around a dropped keypoint, pixels.
    pub dropout_radius: f64,
    pub noise_up: bool,
    pub noise_mid: bool,
    pub noise_down: bool,
    pub seed: u64,
    #[serde(skip)]
    pub row_step: u32,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            score_noise_sd: 0.0,
            offset_noise_sd: 0.0,
            dropout_prob: 0.0,
            dropout_radius: 6.0,
            noise_up: true,
            noise_mid: true,
            noise_down: true,
            seed: 0,
            row_step: 10,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.score_noise_sd >= 0.0
            && self.offset_noise_sd >= 0.0
            && self.dropout_radius >= 0.0
            && (0.0..=1.0).contains(&self.dropout_prob)
            && self.row_step >= 1;
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!("invalid noise spec {self:?}")))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.score_noise_sd == 0.0 && self.offset_noise_sd == 0.0 && self.dropout_prob == 0.0
    }
}

/// Keypoint detection used to pick dropout targets.
const DROPOUT_THRESHOLD: f32 = 0.5;

/// Applies dropout, score noise and offset noise, in that order.
///
/// Dropout draws one uniform per grid-row keypoint (row-major) and erases a
/// disk of `dropout_radius` around each selected one. Score noise then draws
/// one normal per pixel, followed by one normal per pixel for each enabled
/// offset channel (up, mid, down). Channels with zero sd draw nothing.
pub fn perturb(logits: &LogitMaps, noise: &NoiseSpec) -> Result<LogitMaps, SynthError> {
    noise.validate()?;
    let mut out = logits.clone();
    if noise.is_identity() {
        return Ok(out);
    }
    let mut rng = SceneRng::new(noise.seed);
    let (w, h) = (logits.width(), logits.height());

    if noise.dropout_prob > 0.0 {
        let mut dropped = Vec::new();
        for row in (0..h).step_by(noise.row_step as usize) {
            for col in local_maxima(logits.score.row(row), DROPOUT_THRESHOLD, 1) {
                if rng.uniform() < noise.dropout_prob {
                    dropped.push((col, row));
                }
            }
        }
        let r = noise.dropout_radius;
        let ri = r.floor() as i64;
        for (col, row) in dropped {
            for dr in -ri..=ri {
                for dc in -ri..=ri {
                    let (c, rr) = (col as i64 + dc, row as i64 + dr);
                    if c < 0 || rr < 0 || c >= w as i64 || rr >= h as i64 {
                        continue;
                    }
                    if ((dr * dr + dc * dc) as f64) <= r * r {
                        out.score.set(c as usize, rr as usize, 0.0);
                    }
                }
            }
        }
    }

    if noise.score_noise_sd > 0.0 {
        for v in out.score.data_mut() {
            *v = (*v as f64 + noise.score_noise_sd * rng.normal()).clamp(0.0, 1.0) as f32;
        }
    }

    if noise.offset_noise_sd > 0.0 {
        let channels: [(bool, &mut Plane); 3] = [
            (noise.noise_up, &mut out.off_up),
            (noise.noise_mid, &mut out.off_mid),
            (noise.noise_down, &mut out.off_down),
        ];
        for (enabled, plane) in channels {
            if !enabled {
                continue;
            }
            for v in plane.data_mut() {
                *v = (*v as f64 + noise.offset_noise_sd * rng.normal()) as f32;
            }
        }
    }
    Ok(out)
}

/// How well decoded lanes reproduce the true curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub n_true: usize,
    pub n_decoded: usize,
    /// `(decoded index, true index)` pairs.
    pub matched: Vec<(usize, usize)>,
    /// Horizontal error of every point of every matched decoded lane.
    pub point_errors: Vec<f64>,
}

impl RecoveryStats {
    pub fn count_ok(&self) -> bool {
        self.n_true == self.n_decoded && self.matched.len() == self.n_true
    }

    pub fn mean_error(&self) -> f64 {
        if self.point_errors.is_empty() {
            return 0.0;
        }
        self.point_errors.iter().sum::<f64>() / self.point_errors.len() as f64
    }

    pub fn max_error(&self) -> f64 {
        self.point_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Horizontal distance from `p` to `curve`, evaluating the curve at the
/// nearest row of its span when `p` lies above or below it.
pub fn horizontal_error(curve: &LaneCurve, p: ImagePoint) -> f64 {
    let (top, bottom) = curve.y_span();
    let y = p.y.clamp(top, bottom);
    (p.x - curve.sample_x(y).unwrap_or(f64::NAN)).abs()
}

/// Pairs decoded lanes with true curves by ascending mean horizontal error
/// (pairs further apart than `gate` pixels on average are never matched) and
/// collects per-point errors of the matched lanes.
pub fn recovery_stats(decoded: &[DecodedLane], truth: &[LaneCurve], gate: f64) -> RecoveryStats {
    let mut pairs = Vec::new();
    for (d, lane) in decoded.iter().enumerate() {
        for (t, curve) in truth.iter().enumerate() {
            let err = lane.points.iter().map(|&p| horizontal_error(curve, p)).sum::<f64>() / lane.len().max(1) as f64;
            if err <= gate {
                pairs.push((err, d, t));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; decoded.len()];
    let mut used_t = vec![false; truth.len()];
    let mut stats = RecoveryStats {
        n_true: truth.len(),
        n_decoded: decoded.len(),
        ..Default::default()
    };
    for (_, d, t) in pairs {
        if used_d[d] || used_t[t] {
            continue;
        }
        used_d[d] = true;
        used_t[t] = true;
        stats.matched.push((d, t));
        stats
            .point_errors
            .extend(decoded[d].points.iter().map(|&p| horizontal_error(&truth[t], p)));
    }
    stats.matched.sort_unstable();
    stats
}
