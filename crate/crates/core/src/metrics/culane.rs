use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geometry::{densify, ImageSpec, LaneCurve};

/// Native CULane image width the 30 px lane width refers to.
pub const CULANE_NATIVE_WIDTH: u32 = 1640;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CulaneParams {
    /// A prediction matches when `IoU > iou_thresh`.
    pub iou_thresh: f64,
    /// Rasterized lane width in pixels.
    pub lane_width: f64,
}

impl Default for CulaneParams {
    fn default() -> Self {
        Self {
            iou_thresh: 0.5,
            lane_width: 30.0,
        }
    }
}

impl CulaneParams {
    /// Default parameters with the lane width scaled from the native
    /// 1640 px wide frame to `spec`.
    pub fn scaled_to(spec: ImageSpec) -> Self {
        Self {
            lane_width: 30.0 * spec.width as f64 / CULANE_NATIVE_WIDTH as f64,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CulaneReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CulaneReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Binary image mask stored as a bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneMask {
    width: usize,
    height: usize,
    bits: Vec<u64>,
}

impl LaneMask {
    pub fn new(spec: ImageSpec) -> Self {
        let n = spec.w() * spec.h();
        Self {
            width: spec.w(),
            height: spec.h(),
            bits: vec![0; n.div_ceil(64)],
        }
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize) {
        let i = row * self.width + col;
        self.bits[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        let i = row * self.width + col;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intersection over union; 0 when both masks are empty.
    pub fn iou(&self, other: &LaneMask) -> f64 {
        let (mut inter, mut union) = (0u64, 0u64);
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (a & b).count_ones() as u64;
            union += (a | b).count_ones() as u64;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Every pixel whose center lies within `width / 2` of the densified
/// polyline (round joins and caps), clipped to the image.
pub fn rasterize_lane(lane: &LaneCurve, spec: ImageSpec, width: f64) -> Result<LaneMask, MetricsError> {
    if width.is_nan() || width < 1.0 {
        return Err(MetricsError::InvalidParam(format!(
            "lane width must be >= 1, got {width}"
        )));
    }
    let dense = densify(lane)?;
    let r = width / 2.0;
    let r2 = r * r;
    let mut mask = LaneMask::new(spec);
    let (wmax, hmax) = (spec.w() as f64 - 1.0, spec.h() as f64 - 1.0);
    for seg in dense.points().windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let c0 = (a.x.min(b.x) - r).ceil().max(0.0);
        let c1 = (a.x.max(b.x) + r).floor().min(wmax);
        let r0 = (a.y - r).ceil().max(0.0);
        let r1 = (b.y + r).floor().min(hmax);
        if c1 < c0 || r1 < r0 {
            continue;
        }
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        for row in r0 as usize..=r1 as usize {
            for col in c0 as usize..=c1 as usize {
                let (px, py) = (col as f64 - a.x, row as f64 - a.y);
                let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
                let (ex, ey) = (px - t * dx, py - t * dy);
                if ex * ex + ey * ey <= r2 {
                    mask.set(col, row);
                }
            }
        }
    }
    Ok(mask)
}

/// Maximum-cardinality matching on a boolean adjacency matrix
/// (`adj[pred][gt]`), by augmenting paths. Returns `(pred, gt)` pairs sorted
/// by prediction index.
pub fn max_bipartite_matching(adj: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n_gt = adj.iter().map(Vec::len).max().unwrap_or(0);
    let mut gt_owner: Vec<Option<usize>> = vec![None; n_gt];

    fn augment(p: usize, adj: &[Vec<bool>], seen: &mut [bool], gt_owner: &mut [Option<usize>]) -> bool {
        for g in 0..adj[p].len() {
            if !adj[p][g] || seen[g] {
                continue;
            }
            seen[g] = true;
            if gt_owner[g].is_none_or(|q| augment(q, adj, seen, gt_owner)) {
                gt_owner[g] = Some(p);
                return true;
            }
        }
        false
    }

    for p in 0..adj.len() {
        let mut seen = vec![false; n_gt];
        augment(p, adj, &mut seen, &mut gt_owner);
    }
    let mut pairs: Vec<(usize, usize)> = gt_owner
        .iter()
        .enumerate()
        .filter_map(|(g, p)| p.map(|p| (p, g)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// `(tp, fp, fn)` for one image.
pub fn eval_culane_image(
    pred: &[LaneCurve],
    gt: &[LaneCurve],
    spec: ImageSpec,
    params: &CulaneParams,
) -> Result<(usize, usize, usize), MetricsError> {
    let pm = pred
        .iter()
        .map(|l| rasterize_lane(l, spec, params.lane_width))
        .collect::<Result<Vec<_>, _>>()?;
    let gm = gt
        .iter()
        .map(|l| rasterize_lane(l, spec, params.lane_width))
        .collect::<Result<Vec<_>, _>>()?;
    let adj: Vec<Vec<bool>> = pm
        .iter()
        .map(|p| gm.iter().map(|g| p.iou(g) > params.iou_thresh).collect())
        .collect();
    let tp = max_bipartite_matching(&adj).len();
    Ok((tp, pred.len() - tp, gt.len() - tp))
}

/// Mask-IoU lane matching, counts summed over images before computing
/// precision, recall and F1.
pub fn eval_culane(
    pred: &[Vec<LaneCurve>],
    gt: &[Vec<LaneCurve>],
    spec: ImageSpec,
    params: &CulaneParams,
) -> Result<CulaneReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ImageCount {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gt) {
        let (t, f, n) = eval_culane_image(p, g, spec, params)?;
        tp += t;
        fp += f;
        fn_ += n;
    }
    Ok(CulaneReport::from_counts(tp, fp, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ImageSpec {
        ImageSpec::new(200, 100).unwrap()
    }

    fn vline(x: f64) -> LaneCurve {
        LaneCurve::from_xy(0, &[(x, 10.0), (x, 90.0)]).unwrap()
    }

    /// Direct per-pixel distance check against every densified segment.
    fn brute_mask(lane: &LaneCurve, spec: ImageSpec, width: f64) -> Vec<bool> {
        let dense = densify(lane).unwrap();
        let r = width / 2.0;
        let mut out = vec![false; spec.w() * spec.h()];
        for row in 0..spec.h() {
            for col in 0..spec.w() {
                let (px, py) = (col as f64, row as f64);
                out[row * spec.w() + col] = dense.points().windows(2).any(|s| {
                    let (a, b) = (s[0], s[1]);
                    let (dx, dy) = (b.x - a.x, b.y - a.y);
                    let t = (((px - a.x) * dx + (py - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                    let (qx, qy) = (a.x + t * dx, a.y + t * dy);
                    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt() <= r
                });
            }
        }
        out
    }

    #[test]
    fn vertical_line_rows_are_30_or_31_wide() {
        for x in [100.0, 100.5, 100.25] {
            let m = rasterize_lane(&vline(x), spec(), 30.0).unwrap();
            for row in 10..=90 {
                let n = (0..200).filter(|&c| m.get(c, row)).count();
                assert!(n == 30 || n == 31, "x={x} row={row} n={n}");
            }
            let want = brute_mask(&vline(x), spec(), 30.0);
            for row in 0..100 {
                for col in 0..200 {
                    assert_eq!(m.get(col, row), want[row * 200 + col]);
                }
            }
        }
    }

    #[test]
    fn slanted_lane_matches_brute_force() {
        let lane = LaneCurve::from_xy(0, &[(20.0, 0.0), (90.0, 50.0), (60.0, 99.0)]).unwrap();
        let m = rasterize_lane(&lane, spec(), 13.0).unwrap();
        let want = brute_mask(&lane, spec(), 13.0);
        for row in 0..100 {
            for col in 0..200 {
                assert_eq!(m.get(col, row), want[row * 200 + col], "({col},{row})");
            }
        }
    }

    #[test]
    fn width_one_is_the_pixel_set() {
        let m = rasterize_lane(&vline(50.0), spec(), 1.0).unwrap();
        assert_eq!(m.count(), 81);
        for row in 10..=90 {
            assert!(m.get(50, row));
        }
    }

    #[test]
    fn clipped_at_border() {
        let m = rasterize_lane(&vline(2.0), spec(), 30.0).unwrap();
        for row in 10..=90 {
            assert_eq!((0..200).filter(|&c| m.get(c, row)).count(), 18);
        }
        let m = rasterize_lane(&vline(250.0), spec(), 30.0).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn degenerate_and_bad_width() {
        assert!(rasterize_lane(&vline(10.0), spec(), 0.5).is_err());
        let tiny = LaneCurve::from_xy(0, &[(1.0, 0.2), (1.0, 0.8)]).unwrap();
        assert!(rasterize_lane(&tiny, spec(), 30.0).is_err());
    }

    #[test]
    fn third_overlap_is_not_a_match() {
        // two 10x20 rectangles sharing half of each: |A & B| = 100, union = 300
        let s = ImageSpec::new(40, 40).unwrap();
        let mut a = LaneMask::new(s);
        let mut b = LaneMask::new(s);
        for row in 0..20 {
            for col in 0..10 {
                a.set(col, row);
                b.set(col + 5, row);
            }
        }
        let iou = a.iou(&b);
        assert!((iou - 1.0 / 3.0).abs() < 1e-12);
        assert!(iou <= 0.5);
        assert_eq!(a.iou(&b), b.iou(&a));
    }

    #[test]
    fn identical_sets_score_one() {
        let lanes: Vec<LaneCurve> = [30.0, 80.0, 130.0, 180.0].iter().map(|&x| vline(x)).collect();
        let r = eval_culane(
            std::slice::from_ref(&lanes),
            std::slice::from_ref(&lanes),
            spec(),
            &CulaneParams::default(),
        )
        .unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (4, 0, 0));
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn disjoint_sets_score_zero() {
        let r = eval_culane(
            &[vec![vline(20.0)]],
            &[vec![vline(150.0)]],
            spec(),
            &CulaneParams::default(),
        )
        .unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.f1), (0, 1, 1, 0.0));
    }

    #[test]
    fn matching_prefers_cardinality() {
        // pred 0 overlaps gt 0 and gt 1; pred 1 only gt 0
        let adj = vec![vec![true, true], vec![true, false]];
        assert_eq!(max_bipartite_matching(&adj), vec![(0, 1), (1, 0)]);
        assert!(max_bipartite_matching(&[]).is_empty());
    }
}
