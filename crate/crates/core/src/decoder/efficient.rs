use super::{local_maxima, DecodeError, DecodedLane, DecoderConfig};
use crate::geometry::ImagePoint;
use crate::loss::LogitMaps;

struct Keypoint {
    col: usize,
    score: f32,
    mid_x: f64,
    up_x: f64,
    down_x: f64,
}

/// Index of the column in `cols` (sorted ascending) nearest to `x`, within
/// `max_dist`. Ties resolve to the smaller column.
fn nearest(cols: &[Keypoint], x: f64, max_dist: f64) -> Option<(usize, f64)> {
    let i = cols.partition_point(|k| (k.col as f64) < x);
    let mut best: Option<(usize, f64)> = None;
    for j in [i.wrapping_sub(1), i] {
        let Some(k) = cols.get(j) else { continue };
        let d = (k.col as f64 - x).abs();
        if d <= max_dist && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

/// Decodes lanes by linking all keypoints at once.
///
/// Keypoints are the local maxima of every grid row. For each keypoint the
/// predicted positions one interval above and below are matched to the
/// nearest keypoint of the adjacent rows (within `max_assoc_dist`). Between
/// each pair of adjacent rows the candidate links are accepted in order of
/// increasing distance so every keypoint keeps at most one link upward and
/// one downward; the resulting chains are the lanes.
pub fn efficient_decode(logits: &LogitMaps, cfg: &DecoderConfig) -> Result<Vec<DecodedLane>, DecodeError> {
    cfg.validate()?;
    let step = cfg.dy as usize;
    let max_dist = cfg.assoc_dist();

    let rows: Vec<Vec<Keypoint>> = (0..logits.height())
        .step_by(step)
        .map(|r| {
            local_maxima(logits.score.row(r), cfg.theta_h, cfg.nms_window)
                .into_iter()
                .map(|col| {
                    let c = col as f64;
                    Keypoint {
                        col,
                        score: logits.score.get(col, r),
                        mid_x: c + logits.off_mid.get(col, r) as f64,
                        up_x: c + logits.off_up.get(col, r) as f64,
                        down_x: c + logits.off_down.get(col, r) as f64,
                    }
                })
                .collect()
        })
        .collect();

    // links[k][i] = (index above in row k-1, index below in row k+1)
    let mut links: Vec<Vec<(Option<usize>, Option<usize>)>> =
        rows.iter().map(|r| vec![(None, None); r.len()]).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for k in 1..rows.len() {
        let (upper, lower) = (&rows[k - 1], &rows[k]);
        if upper.is_empty() || lower.is_empty() {
            continue;
        }
        candidates.clear();
        for (i, p) in lower.iter().enumerate() {
            if let Some((j, d)) = nearest(upper, p.up_x, max_dist) {
                candidates.push((d, j, i));
            }
        }
        for (j, q) in upper.iter().enumerate() {
            if let Some((i, d)) = nearest(lower, q.down_x, max_dist) {
                candidates.push((d, j, i));
            }
        }
        candidates.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(upper[a.1].col.cmp(&upper[b.1].col))
                .then(lower[a.2].col.cmp(&lower[b.2].col))
        });
        for &(_, j, i) in candidates.iter() {
            if links[k - 1][j].1.is_none() && links[k][i].0.is_none() {
                links[k - 1][j].1 = Some(i);
                links[k][i].0 = Some(j);
            }
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].len().cmp(&rows[a].len()).then(b.cmp(&a)));
    let mut taken: Vec<Vec<bool>> = rows.iter().map(|r| vec![false; r.len()]).collect();
    let mut lanes = Vec::new();
    for k0 in order {
        for i0 in 0..rows[k0].len() {
            if taken[k0][i0] {
                continue;
            }
            let (mut k, mut i) = (k0, i0);
            while let Some(j) = links[k][i].0 {
                k -= 1;
                i = j;
            }
            let mut points = Vec::new();
            let mut scores = Vec::new();
            loop {
                taken[k][i] = true;
                let kp = &rows[k][i];
                let x = if cfg.refine { kp.mid_x } else { kp.col as f64 };
                points.push(ImagePoint::new(x, (k * step) as f64));
                scores.push(kp.score);
                match links[k][i].1 {
                    Some(next) => {
                        k += 1;
                        i = next;
                    }
                    None => break,
                }
            }
            if points.len() >= cfg.min_points {
                lanes.push(DecodedLane { points, scores });
            }
        }
    }
    Ok(lanes)
}
