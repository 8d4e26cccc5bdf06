//! Ground-truth rendering: keypoint heatmaps, local offset targets and the
//! supervision mask.
//!
//! Every densified curve pixel is a keypoint. The heatmap takes, per pixel,
//! the maximum of the unnormalized Gaussians centered on all keypoints. The
//! offset targets point from a pixel to the nearest curve on the same row and
//! on the rows `dy` above and below; they exist only where all three rows lie
//! inside that curve's span.

use serde::{Deserialize, Serialize};

use crate::geometry::{densify, GeometryError, ImageSpec, LaneCurve};
use crate::plane::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Standard deviation of the heatmap Gaussian, pixels.
    pub sigma_h: f64,
    /// Horizontal radius of the offset supervision neighborhood, pixels.
    pub sigma_g: f64,
    /// Vertical keypoint interval, pixels.
    #[serde(skip)]
    pub dy: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            sigma_h: 2.0,
            sigma_g: 5.0,
            dy: 10,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.sigma_h > 0.0 && self.sigma_h.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "sigma_h must be positive, got {}",
                self.sigma_h
            )));
        }
        if !(self.sigma_g > 0.0 && self.sigma_g.is_finite()) {
            return Err(GeometryError::InvalidConfig(format!(
                "sigma_g must be positive, got {}",
                self.sigma_g
            )));
        }
        if self.dy < 1 {
            return Err(GeometryError::InvalidConfig("dy must be at least 1".into()));
        }
        Ok(())
    }
}

/// Offset targets and the pixels they are defined on.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetMaps {
    pub off_up: Plane,
    pub off_mid: Plane,
    pub off_down: Plane,
    /// 1 where all three targets are defined, 0 elsewhere.
    pub mask: Plane,
    /// Index (into the input curve slice) of the curve supervising each
    /// masked pixel.
    pub owner: Vec<Option<u32>>,
}

/// Full set of training targets for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMaps {
    pub heat: Plane,
    pub off_up: Plane,
    pub off_mid: Plane,
    pub off_down: Plane,
    pub mask: Plane,
    pub owner: Vec<Option<u32>>,
}

impl GroundTruthMaps {
    pub fn width(&self) -> usize {
        self.heat.width()
    }

    pub fn height(&self) -> usize {
        self.heat.height()
    }

    /// Curve index supervising pixel `(col, row)`, if masked.
    pub fn owner_at(&self, col: usize, row: usize) -> Option<u32> {
        self.owner[row * self.width() + col]
    }

    pub fn supervised_count(&self) -> usize {
        self.owner.iter().filter(|o| o.is_some()).count()
    }
}

/// Horizontal offset from column `col` to the (densified) curve at `row`,
/// rounded to plane precision. Shared with the losses so ideal predictions
/// compare bit-exactly.
pub(crate) fn offset_target(dense: &LaneCurve, col: usize, row: i64) -> Option<f32> {
    dense.sample_x(row as f64).map(|x| (x - col as f64) as f32)
}

pub(crate) fn densify_all(curves: &[LaneCurve]) -> Result<Vec<LaneCurve>, GeometryError> {
    curves.iter().map(densify).collect()
}

/// Renders the keypoint heatmap target.
///
/// Contributions below `exp(-4.5)` (beyond `3 * sigma_h`) are dropped.
pub fn render_heatmap(curves: &[LaneCurve], spec: ImageSpec, cfg: &EncoderConfig) -> Result<Plane, GeometryError> {
    cfg.validate()?;
    let dense = densify_all(curves)?;
    let mut heat = Plane::for_image(spec);

    let radius = (3.0 * cfg.sigma_h).floor() as i64;
    let cutoff = 9.0 * cfg.sigma_h * cfg.sigma_h;
    let two_var = 2.0 * cfg.sigma_h * cfg.sigma_h;
    let side = (2 * radius + 1) as usize;
    // kernel[(dr + r) * side + (dc + r)]
    let kernel: Vec<f32> = (-radius..=radius)
        .flat_map(|dr| {
            (-radius..=radius).map(move |dc| {
                let d2 = (dr * dr + dc * dc) as f64;
                if d2 > cutoff {
                    0.0
                } else {
                    (-d2 / two_var).exp() as f32
                }
            })
        })
        .collect();

    for curve in &dense {
        for p in curve.points() {
            let (kc, kr) = p.pixel();
            for dr in -radius..=radius {
                let r = kr + dr;
                if r < 0 || r >= spec.height as i64 {
                    continue;
                }
                let krow = &kernel[(dr + radius) as usize * side..][..side];
                let row = heat.row_mut(r as usize);
                for dc in -radius..=radius {
                    let c = kc + dc;
                    if c < 0 || c >= spec.width as i64 {
                        continue;
                    }
                    let v = krow[(dc + radius) as usize];
                    let cell = &mut row[c as usize];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    }
    Ok(heat)
}

/// Renders the up/mid/down offset targets and the supervision mask.
///
/// Each pixel within horizontal distance `sigma_g` of some curve on its row
/// is assigned to the nearest such curve (ties: lowest curve id, then lowest
/// index).
pub fn render_offsets(curves: &[LaneCurve], spec: ImageSpec, cfg: &EncoderConfig) -> Result<OffsetMaps, GeometryError> {
    offsets_impl(curves, spec, cfg, false)
}

/// Like [`render_offsets`], but every channel is filled wherever its own
/// target row lies in the assigned curve's span, not only where all three
/// do. The mask and owner planes are unchanged.
pub fn render_offsets_per_channel(
    curves: &[LaneCurve],
    spec: ImageSpec,
    cfg: &EncoderConfig,
) -> Result<OffsetMaps, GeometryError> {
    offsets_impl(curves, spec, cfg, true)
}

fn offsets_impl(
    curves: &[LaneCurve],
    spec: ImageSpec,
    cfg: &EncoderConfig,
    per_channel: bool,
) -> Result<OffsetMaps, GeometryError> {
    cfg.validate()?;
    let dense = densify_all(curves)?;
    let (w, h) = (spec.w(), spec.h());
    let mut off_up = Plane::zeros(w, h);
    let mut off_mid = Plane::zeros(w, h);
    let mut off_down = Plane::zeros(w, h);
    let mut mask = Plane::zeros(w, h);
    let mut owner = vec![None; w * h];
    let dy = cfg.dy as i64;

    let mut best: Vec<Option<(f64, u32, usize)>> = vec![None; w];
    for row in 0..h {
        best.iter_mut().for_each(|b| *b = None);
        let y = row as f64;
        let mut any = false;
        for (idx, curve) in dense.iter().enumerate() {
            let Some(cx) = curve.sample_x(y) else {
                continue;
            };
            let lo = (cx - cfg.sigma_g).ceil().max(0.0);
            let hi = (cx + cfg.sigma_g).floor().min(w as f64 - 1.0);
            if hi < lo {
                continue;
            }
            let lo = lo as usize;
            for (i, slot) in best[lo..=hi as usize].iter_mut().enumerate() {
                let d = ((lo + i) as f64 - cx).abs();
                let key = (d, curve.id(), idx);
                if slot.is_none_or(|b| key < b) {
                    *slot = Some(key);
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        for (col, b) in best.iter().enumerate() {
            let Some((_, _, idx)) = *b else { continue };
            let curve = &dense[idx];
            let r = row as i64;
            let targets = (
                offset_target(curve, col, r - dy),
                offset_target(curve, col, r),
                offset_target(curve, col, r + dy),
            );
            if let (Some(u), Some(m), Some(d)) = targets {
                off_up.set(col, row, u);
                off_mid.set(col, row, m);
                off_down.set(col, row, d);
                mask.set(col, row, 1.0);
                owner[row * w + col] = Some(idx as u32);
            } else if per_channel {
                for (plane, t) in [
                    (&mut off_up, targets.0),
                    (&mut off_mid, targets.1),
                    (&mut off_down, targets.2),
                ] {
                    if let Some(t) = t {
                        plane.set(col, row, t);
                    }
                }
            }
        }
    }

    Ok(OffsetMaps {
        off_up,
        off_mid,
        off_down,
        mask,
        owner,
    })
}

/// Renders heatmap and offset targets together.
pub fn encode(curves: &[LaneCurve], spec: ImageSpec, cfg: &EncoderConfig) -> Result<GroundTruthMaps, GeometryError> {
    let heat = render_heatmap(curves, spec, cfg)?;
    let OffsetMaps {
        off_up,
        off_mid,
        off_down,
        mask,
        owner,
    } = render_offsets(curves, spec, cfg)?;
    Ok(GroundTruthMaps {
        heat,
        off_up,
        off_mid,
        off_down,
        mask,
        owner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w: u32, h: u32) -> ImageSpec {
        ImageSpec::new(w, h).unwrap()
    }

    fn vline(x: f64, y0: f64, y1: f64) -> LaneCurve {
        LaneCurve::from_xy(0, &[(x, y0), (x, y1)]).unwrap()
    }

    #[test]
    fn heat_is_one_on_curve_and_gaussian_nearby() {
        let cfg = EncoderConfig::default();
        let heat = render_heatmap(&[vline(20.0, 0.0, 59.0)], spec(40, 60), &cfg).unwrap();
        for r in 0..60 {
            assert_eq!(heat.get(20, r), 1.0);
        }
        // isolated vertical line: nearest keypoint sits on the same row
        let at_sigma = heat.get(22, 30) as f64;
        assert!((at_sigma - (-0.5f64).exp()).abs() < 1e-6, "{at_sigma}");
        assert!((at_sigma - 0.6065).abs() < 1e-4);
        // truncated beyond 3 sigma
        assert_eq!(heat.get(27, 30), 0.0);
        assert!(heat.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn empty_scene_is_blank() {
        let cfg = EncoderConfig::default();
        let heat = render_heatmap(&[], spec(8, 8), &cfg).unwrap();
        assert!(heat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlapping_curves_keep_max_not_sum() {
        let cfg = EncoderConfig::default();
        let s = spec(40, 40);
        let a = vline(18.0, 0.0, 39.0);
        let b = LaneCurve::from_xy(1, &[(22.0, 0.0), (22.0, 39.0)]).unwrap();
        let both = render_heatmap(&[a.clone(), b.clone()], s, &cfg).unwrap();
        let ha = render_heatmap(&[a], s, &cfg).unwrap();
        let hb = render_heatmap(&[b], s, &cfg).unwrap();
        // column 20 is equidistant from both lines
        let v = both.get(20, 20);
        assert_eq!(v, ha.get(20, 20).max(hb.get(20, 20)));
        assert!((v as f64 - (-0.5f64).exp()).abs() < 1e-6);
        for (i, &v) in both.data().iter().enumerate() {
            assert_eq!(v, ha.data()[i].max(hb.data()[i]));
        }
    }

    #[test]
    fn heat_is_permutation_invariant() {
        let cfg = EncoderConfig::default();
        let s = spec(64, 64);
        let a = LaneCurve::from_xy(0, &[(10.0, 0.0), (30.0, 63.0)]).unwrap();
        let b = LaneCurve::from_xy(1, &[(25.0, 5.0), (20.0, 40.0), (40.0, 60.0)]).unwrap();
        let h1 = render_heatmap(&[a.clone(), b.clone()], s, &cfg).unwrap();
        let h2 = render_heatmap(&[b, a], s, &cfg).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn offsets_on_vertical_line() {
        let cfg = EncoderConfig::default();
        let off = render_offsets(&[vline(100.0, 0.0, 400.0)], spec(200, 401), &cfg).unwrap();
        assert_eq!(off.mask.get(97, 200), 1.0);
        assert_eq!(
            (
                off.off_up.get(97, 200),
                off.off_mid.get(97, 200),
                off.off_down.get(97, 200)
            ),
            (3.0, 3.0, 3.0)
        );
        assert_eq!(
            (
                off.off_up.get(100, 200),
                off.off_mid.get(100, 200),
                off.off_down.get(100, 200)
            ),
            (0.0, 0.0, 0.0)
        );
        // outside sigma_g, and rows whose neighbor rows leave the span
        assert_eq!(off.mask.get(94, 200), 0.0);
        assert_eq!(off.mask.get(105, 200), 1.0);
        assert_eq!(off.mask.get(100, 5), 0.0);
        assert_eq!(off.mask.get(100, 10), 1.0);
        assert_eq!(off.mask.get(100, 391), 0.0);
        assert_eq!(off.off_mid.get(100, 5), 0.0);
    }

    #[test]
    fn offsets_on_slanted_line() {
        // x = 50 + 0.5 y
        let cfg = EncoderConfig::default();
        let c = LaneCurve::from_xy(0, &[(50.0, 0.0), (100.0, 100.0)]).unwrap();
        let off = render_offsets(&[c], spec(200, 101), &cfg).unwrap();
        assert_eq!(off.mask.get(60, 20), 1.0);
        assert_eq!(
            (
                off.off_up.get(60, 20),
                off.off_mid.get(60, 20),
                off.off_down.get(60, 20)
            ),
            (-5.0, 0.0, 5.0)
        );
        // off_down - off_up = 2 * slope * dy on every masked pixel
        for r in 0..101 {
            for c in 0..200 {
                if off.mask.get(c, r) == 1.0 {
                    assert_eq!(off.off_down.get(c, r) - off.off_up.get(c, r), 10.0);
                }
            }
        }
    }

    #[test]
    fn nearest_curve_wins_ties_by_id() {
        let cfg = EncoderConfig::default();
        let a = LaneCurve::from_xy(7, &[(20.0, 0.0), (20.0, 50.0)]).unwrap();
        let b = LaneCurve::from_xy(2, &[(28.0, 0.0), (28.0, 50.0)]).unwrap();
        let off = render_offsets(&[a, b], spec(50, 51), &cfg).unwrap();
        // column 24 is 4 px from both; curve id 2 (index 1) wins
        assert_eq!(off.owner[25 * 50 + 24], Some(1));
        assert_eq!(off.off_mid.get(24, 25), 4.0);
        assert_eq!(off.owner[25 * 50 + 23], Some(0));
        assert_eq!(off.off_mid.get(23, 25), -3.0);
    }

    #[test]
    fn masked_targets_recover_curve() {
        let cfg = EncoderConfig::default();
        let c = LaneCurve::from_xy(0, &[(30.0, 0.0), (50.0, 40.0), (45.0, 99.0)]).unwrap();
        let dense = densify(&c).unwrap();
        let off = render_offsets(std::slice::from_ref(&c), spec(100, 100), &cfg).unwrap();
        for r in 0..100usize {
            for col in 0..100usize {
                if off.mask.get(col, r) == 0.0 {
                    continue;
                }
                let up_x = col as f64 + off.off_up.get(col, r) as f64;
                let want = c.sample_x(r as f64 - 10.0).unwrap();
                assert!((up_x - want).abs() <= 0.5);
                let mid_x = col as f64 + off.off_mid.get(col, r) as f64;
                assert!((mid_x - dense.sample_x(r as f64).unwrap()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = EncoderConfig {
            sigma_h: 0.0,
            ..Default::default()
        };
        assert!(render_heatmap(&[], spec(4, 4), &cfg).is_err());
    }

    mod props {
        use super::*;
        use crate::geometry::densify;
        use proptest::prelude::*;

        fn lanes() -> impl Strategy<Value = Vec<LaneCurve>> {
            prop::collection::vec((5.0f64..75.0, -20.0f64..20.0, 0.0f64..20.0, 40.0f64..59.0), 1..4).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (x, dx, y0, y1))| LaneCurve::from_xy(i as u32, &[(x, y0), (x + dx, y1)]).unwrap())
                    .collect()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn heat_is_bounded_and_peaks_on_keypoints(curves in lanes()) {
                let s = spec(80, 60);
                let heat = render_heatmap(&curves, s, &EncoderConfig::default()).unwrap();
                prop_assert!(heat.data().iter().all(|v| (0.0..=1.0).contains(v)));
                for c in &curves {
                    for p in densify(c).unwrap().points() {
                        let (col, row) = p.pixel();
                        if s.contains_pixel(col, row) {
                            prop_assert_eq!(heat.get(col as usize, row as usize), 1.0);
                        }
                    }
                }
            }

            #[test]
            fn mask_lies_within_sigma_g_and_targets_stay_on_curves(curves in lanes()) {
                let cfg = EncoderConfig::default();
                let gt = encode(&curves, spec(80, 60), &cfg).unwrap();
                for row in 0..gt.height() {
                    for col in 0..gt.width() {
                        let Some(l) = gt.owner_at(col, row) else {
                            prop_assert_eq!(gt.mask.get(col, row), 0.0);
                            continue;
                        };
                        prop_assert_eq!(gt.mask.get(col, row), 1.0);
                        let dense = densify(&curves[l as usize]).unwrap();
                        let y = row as f64;
                        let x = dense.sample_x(y).unwrap();
                        prop_assert!((x - col as f64).abs() <= cfg.sigma_g);
                        let mid = col as f64 + gt.off_mid.get(col, row) as f64;
                        let up = col as f64 + gt.off_up.get(col, row) as f64;
                        let down = col as f64 + gt.off_down.get(col, row) as f64;
                        prop_assert!((mid - x).abs() < 1e-3);
                        prop_assert!((up - dense.sample_x(y - 10.0).unwrap()).abs() < 1e-3);
                        prop_assert!((down - dense.sample_x(y + 10.0).unwrap()).abs() < 1e-3);
                    }
                }
            }

            #[test]
            fn encoding_ignores_curve_order(curves in lanes()) {
                let s = spec(80, 60);
                let cfg = EncoderConfig::default();
                let a = encode(&curves, s, &cfg).unwrap();
                let rev: Vec<LaneCurve> = curves.iter().rev().cloned().collect();
                let b = encode(&rev, s, &cfg).unwrap();
                prop_assert_eq!(&a.heat, &b.heat);
                prop_assert_eq!(&a.off_up, &b.off_up);
                prop_assert_eq!(&a.off_mid, &b.off_mid);
                prop_assert_eq!(&a.off_down, &b.off_down);
                prop_assert_eq!(&a.mask, &b.mask);
            }
        }
    }
}
