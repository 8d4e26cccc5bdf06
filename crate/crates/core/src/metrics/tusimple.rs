use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geometry::LaneCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TusimpleParams {
    /// A point is correct when `|x_pred - x_gt| < pt_thresh` pixels.
    pub pt_thresh: f64,
    /// A lane is a true positive when at least this fraction of its points
    /// are correct.
    pub match_thresh: f64,
}

impl Default for TusimpleParams {
    fn default() -> Self {
        Self {
            pt_thresh: 20.0,
            match_thresh: 0.85,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TusimpleImageResult {
    pub correct_points: usize,
    pub gt_points: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_pred: usize,
    pub n_gt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TusimpleReport {
    pub accuracy: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub images: Vec<TusimpleImageResult>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Number of ground-truth rows where `pred` lies within `thresh` pixels.
/// Rows where the prediction does not reach count as misses.
fn correct_points(pred: &LaneCurve, gt: &LaneCurve, thresh: f64) -> usize {
    gt.points()
        .iter()
        .filter(|g| pred.sample_x(g.y).is_some_and(|x| (x - g.x).abs() < thresh))
        .count()
}

/// Scores one image. Ground-truth lanes are visited in order; each takes the
/// not-yet-matched prediction with the highest point accuracy (ties: lowest
/// index). The best prediction's correct points always count toward
/// accuracy, but it is consumed only when it clears `match_thresh`.
pub fn eval_tusimple_image(pred: &[LaneCurve], gt: &[LaneCurve], params: &TusimpleParams) -> TusimpleImageResult {
    let mut used = vec![false; pred.len()];
    let mut res = TusimpleImageResult {
        n_pred: pred.len(),
        n_gt: gt.len(),
        ..Default::default()
    };
    for g in gt {
        res.gt_points += g.len();
        let mut best: Option<(usize, usize)> = None;
        for (i, p) in pred.iter().enumerate() {
            if used[i] {
                continue;
            }
            let c = correct_points(p, g, params.pt_thresh);
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((i, c));
            }
        }
        match best {
            Some((i, c)) => {
                res.correct_points += c;
                if ratio(c, g.len()) >= params.match_thresh {
                    used[i] = true;
                    res.tp += 1;
                } else {
                    res.fn_ += 1;
                }
            }
            None => res.fn_ += 1,
        }
    }
    res.fp = used.iter().filter(|u| !**u).count();
    res
}

/// Point accuracy plus false-positive and false-negative rates, aggregated
/// as ratios of sums over all images.
pub fn eval_tusimple(
    pred: &[Vec<LaneCurve>],
    gt: &[Vec<LaneCurve>],
    params: &TusimpleParams,
) -> Result<TusimpleReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ImageCount {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let images: Vec<TusimpleImageResult> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| eval_tusimple_image(p, g, params))
        .collect();
    let sum = |f: fn(&TusimpleImageResult) -> usize| images.iter().map(f).sum::<usize>();
    Ok(TusimpleReport {
        accuracy: ratio(sum(|r| r.correct_points), sum(|r| r.gt_points)),
        fp_rate: ratio(sum(|r| r.fp), sum(|r| r.n_pred)),
        fn_rate: ratio(sum(|r| r.fn_), sum(|r| r.n_gt)),
        images,
    })
}
