use super::{best_row, DecodeError, DecodedLane, DecoderConfig};
use crate::geometry::ImagePoint;
use crate::loss::LogitMaps;
use crate::plane::Plane;

/// Scores of the grid rows, mutated as decoded points claim their
/// neighborhoods.
struct WorkingRows {
    width: usize,
    step: usize,
    data: Vec<f32>,
}

impl WorkingRows {
    fn new(logits: &LogitMaps, step: usize) -> Self {
        let width = logits.width();
        let mut data = Vec::with_capacity(width * logits.height().div_ceil(step));
        for r in (0..logits.height()).step_by(step) {
            data.extend_from_slice(logits.score.row(r));
        }
        Self { width, step, data }
    }

    fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    fn row(&self, k: usize) -> &[f32] {
        &self.data[k * self.width..(k + 1) * self.width]
    }

    fn get(&self, k: usize, col: usize) -> f32 {
        self.data[k * self.width + col]
    }

    /// Suppresses the window of half-width `w` around `x` on grid row `k`.
    fn claim(&mut self, k: usize, x: f64, w: usize) {
        let c = (x.round().max(0.0) as usize).min(self.width - 1);
        let lo = c.saturating_sub(w);
        let hi = (c + w).min(self.width - 1);
        self.data[k * self.width + lo..=k * self.width + hi].fill(0.0);
    }
}

/// Decodes lanes by growing them from seed keypoints.
///
/// Each round picks the grid row with the most local maxima among unclaimed
/// scores and seeds one lane per maximum. A lane grows upward and downward
/// independently: the current point is refined with its same-row offset, the
/// neighbor one interval away is proposed from the offsets read at the
/// refined point, and the proposal is accepted while its score reaches
/// `theta_h`. Decoded points claim their neighborhood so later rounds and
/// other lanes cannot reuse them. Rounds repeat until no maxima remain.
pub fn greedy_decode(logits: &LogitMaps, cfg: &DecoderConfig) -> Result<Vec<DecodedLane>, DecodeError> {
    cfg.validate()?;
    let step = cfg.dy as usize;
    let mut work = WorkingRows::new(logits, step);
    let mut lanes = Vec::new();

    while let Some((k, seeds)) = best_row((0..work.rows()).map(|k| (k, work.row(k))), cfg) {
        for col in seeds {
            if work.get(k, col) < cfg.theta_h {
                continue;
            }
            let lane = grow(logits, &mut work, cfg, k, col);
            if lane.len() >= cfg.min_points {
                lanes.push(lane);
            }
        }
    }
    Ok(lanes)
}

/// Follows the offset stored at the pixel nearest `x`. Offsets are measured
/// from pixel centers, so the result starts from that pixel, not from `x`.
fn follow(plane: &Plane, x: f64, row: usize) -> f64 {
    let (c, r) = plane.clamp_pixel(x, row as f64);
    c as f64 + plane.get(c, r) as f64
}

fn refine(logits: &LogitMaps, cfg: &DecoderConfig, x: f64, row: usize) -> f64 {
    if cfg.refine {
        follow(&logits.off_mid, x, row)
    } else {
        x
    }
}

fn grow(logits: &LogitMaps, work: &mut WorkingRows, cfg: &DecoderConfig, k: usize, col: usize) -> DecodedLane {
    let step = work.step;
    let width = work.width as f64;
    let seed_score = work.get(k, col);
    work.claim(k, col as f64, cfg.nms_window);
    let seed_x = refine(logits, cfg, col as f64, k * step);
    work.claim(k, seed_x, cfg.nms_window);

    let mut up: Vec<(ImagePoint, f32)> = Vec::new();
    let mut down: Vec<(ImagePoint, f32)> = Vec::new();
    for (dir, out) in [(-1i64, &mut up), (1i64, &mut down)] {
        let mut cur_x = seed_x;
        let mut cur_k = k as i64;
        loop {
            let next_k = cur_k + dir;
            if next_k < 0 || next_k as usize >= work.rows() {
                break;
            }
            let offsets = if dir < 0 { &logits.off_up } else { &logits.off_down };
            let prop_x = follow(offsets, cur_x, cur_k as usize * step);
            let pc = prop_x.round();
            if pc < 0.0 || pc >= width {
                break;
            }
            let next_k = next_k as usize;
            let s = work.get(next_k, pc as usize);
            if s < cfg.theta_h {
                break;
            }
            work.claim(next_k, prop_x, cfg.nms_window);
            let x = refine(logits, cfg, prop_x, next_k * step);
            work.claim(next_k, x, cfg.nms_window);
            out.push((ImagePoint::new(x, (next_k * step) as f64), s));
            cur_x = x;
            cur_k = next_k as i64;
        }
    }

    let n = up.len() + 1 + down.len();
    let mut points = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for (p, s) in up.into_iter().rev() {
        points.push(p);
        scores.push(s);
    }
    points.push(ImagePoint::new(seed_x, (k * step) as f64));
    scores.push(seed_score);
    for (p, s) in down {
        points.push(p);
        scores.push(s);
    }
    DecodedLane { points, scores }
}
