//! Mask-space augmentations: convex-hull overlay of anatomy classes, affine
//! resampling and per-class morphology.

use rand::Rng;

use crate::error::{Result, TcnnError};
use crate::mask::{ClassKind, SegMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MorphMode {
    Erode,
    Dilate,
    /// Erode or dilate, drawn per call.
    Both,
}

impl MorphMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MorphMode::Erode => "erode",
            MorphMode::Dilate => "dilate",
            MorphMode::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "erode" => Some(MorphMode::Erode),
            "dilate" => Some(MorphMode::Dilate),
            "both" => Some(MorphMode::Both),
            _ => None,
        }
    }
}

/// Ranges for the online augmentation draw. Each of the three strategies is
/// applied independently with its own probability.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationSpec {
    /// Rotations are drawn from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    pub scale_range: (f64, f64),
    pub morph_kernels: Vec<usize>,
    pub morph_mode: MorphMode,
    pub hull_probability: f64,
    pub affine_probability: f64,
    pub morph_probability: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            rotation_range: 20.0,
            scale_range: (0.8, 1.2),
            morph_kernels: vec![1, 3, 5],
            morph_mode: MorphMode::Both,
            hull_probability: 0.5,
            affine_probability: 0.5,
            morph_probability: 0.5,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.rotation_range.is_finite() || self.rotation_range < 0.0 {
            return Err(TcnnError::invalid(format!(
                "rotation_range must be finite and non-negative, got {}",
                self.rotation_range
            )));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(TcnnError::invalid(format!(
                "scale_range must satisfy 0 < min <= max, got ({lo}, {hi})"
            )));
        }
        if self.morph_kernels.is_empty() {
            return Err(TcnnError::invalid("morph_kernels is empty"));
        }
        if let Some(k) = self.morph_kernels.iter().find(|&&k| k % 2 == 0) {
            return Err(TcnnError::invalid(format!("morph kernel {k} is not odd")));
        }
        for (name, p) in [
            ("hull_probability", self.hull_probability),
            ("affine_probability", self.affine_probability),
            ("morph_probability", self.morph_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TcnnError::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// Draws one autoencoder training pair from a ground-truth mask. Hull
    /// overlay and affine resampling synthesise a new target mask; morphology
    /// then degrades only the input.
    pub fn training_pair<R: Rng + ?Sized>(
        &self,
        mask: &SegMask,
        rng: &mut R,
    ) -> Result<(SegMask, SegMask)> {
        self.validate()?;
        let mut target = mask.clone();
        if rng.random::<f64>() < self.hull_probability {
            target = convex_hull_overlay(&target);
        }
        if rng.random::<f64>() < self.affine_probability {
            let r = self.rotation_range;
            let deg = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
            let (lo, hi) = self.scale_range;
            let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            target = affine_augment(&target, deg, scale)?;
        }
        let input = if rng.random::<f64>() < self.morph_probability {
            let k = self.morph_kernels[rng.random_range(0..self.morph_kernels.len())];
            morph_degrade(&target, k, self.morph_mode, rng)?
        } else {
            target.clone()
        };
        Ok((input, target))
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull of integer points, without collinear
/// vertices. Degenerate inputs yield one or two vertices.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Whether integer point `p` lies inside or on the hull returned by
/// [`convex_hull`].
fn in_hull(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Pixels `(y, x)` covered by the convex hull of a pixel set, filled row by
/// row over the hull's bounding box.
pub fn rasterize_hull(pixels: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let pts: Vec<(i64, i64)> = pixels.iter().map(|&(y, x)| (x as i64, y as i64)).collect();
    let hull = convex_hull(&pts);
    if hull.is_empty() {
        return Vec::new();
    }
    let (x0, x1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y0, y1) = hull.iter().fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if in_hull(&hull, (x, y)) {
                out.push((y as usize, x as usize));
            }
        }
    }
    out
}

/// Replaces every anatomy class by its filled convex hull, painting classes
/// in ascending id order. Instrument pixels are never overwritten.
pub fn convex_hull_overlay(mask: &SegMask) -> SegMask {
    let mut out = mask.clone();
    let classes = mask.classes().clone();
    for class in classes.anatomy() {
        let pixels = mask.pixels_of(class);
        if pixels.is_empty() {
            continue;
        }
        for (y, x) in rasterize_hull(&pixels) {
            if classes.kind(out.get(y, x)) != Some(ClassKind::Instrument) {
                out.set(y, x, class);
            }
        }
    }
    out
}

/// Rotates (degrees, counter-clockwise in image coordinates) and scales the
/// mask about its centre with nearest-neighbour lookup. Pixels that map
/// outside the frame become background.
pub fn affine_augment(mask: &SegMask, rotation: f64, scale: f64) -> Result<SegMask> {
    if !rotation.is_finite() || !(scale > 0.0 && scale.is_finite()) {
        return Err(TcnnError::invalid(format!(
            "affine parameters out of range: rotation {rotation}, scale {scale}"
        )));
    }
    let (h, w) = (mask.height(), mask.width());
    let bg = mask.classes().background();
    let (sin, cos) = rotation.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = SegMask::filled(h, w, mask.classes().clone());
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: rotate by -angle, divide by scale
            let sx = (cos * dx + sin * dy) / scale + cx;
            let sy = (-sin * dx + cos * dy) / scale + cy;
            let (rx, ry) = (sx.round(), sy.round());
            let v = if rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64 {
                mask.get(ry as usize, rx as usize)
            } else {
                bg
            };
            if v != bg {
                out.set(y, x, v);
            }
        }
    }
    Ok(out)
}

/// Binary erosion or dilation with a `k x k` square. Pixels outside the
/// image never change the outcome.
pub fn binary_morph(bits: &[bool], h: usize, w: usize, k: usize, dilate: bool) -> Vec<bool> {
    let r = k / 2;
    fn combine(dilate: bool, mut window: impl Iterator<Item = bool>) -> bool {
        if dilate {
            window.any(|b| b)
        } else {
            window.all(|b| b)
        }
    }
    let mut rows = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = combine(dilate, (lo..=hi).map(|xx| bits[y * w + xx]));
        }
    }
    let mut out = vec![false; h * w];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = combine(dilate, (lo..=hi).map(|yy| rows[yy * w + x]));
        }
    }
    out
}

/// Erodes or dilates every non-background class separately and repaints the
/// results onto background in ascending class order.
pub fn morph_degrade<R: Rng + ?Sized>(
    mask: &SegMask,
    kernel: usize,
    mode: MorphMode,
    rng: &mut R,
) -> Result<SegMask> {
    if kernel % 2 == 0 {
        return Err(TcnnError::invalid(format!("morph kernel {kernel} is not odd")));
    }
    let dilate = match mode {
        MorphMode::Erode => false,
        MorphMode::Dilate => true,
        MorphMode::Both => rng.random::<bool>(),
    };
    if kernel == 1 {
        return Ok(mask.clone());
    }
    let (h, w) = (mask.height(), mask.width());
    let bg = mask.classes().background();
    let mut out = SegMask::filled(h, w, mask.classes().clone());
    for class in mask.present_classes() {
        if class == bg {
            continue;
        }
        let bits: Vec<bool> = mask.grid().iter().map(|&v| v == class).collect();
        let morphed = binary_morph(&bits, h, w, kernel, dilate);
        for (i, on) in morphed.into_iter().enumerate() {
            if on {
                out.set(i / w, i % w, class);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::ClassTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> ClassTable {
        ClassTable::synthetic(6).unwrap()
    }

    fn from_rows(rows: &[&str]) -> SegMask {
        let h = rows.len();
        let w = rows[0].len();
        let grid = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b - b'0'))
            .collect();
        SegMask::new(h, w, grid, table()).unwrap()
    }

    #[test]
    fn rectangle_is_unchanged_by_hull() {
        let m = from_rows(&["00000", "01110", "01110", "00000"]);
        assert_eq!(convex_hull_overlay(&m), m);
    }

    #[test]
    fn l_shape_fills_to_triangle() {
        let m = from_rows(&["1000", "1000", "1000", "1111"]);
        let out = convex_hull_overlay(&m);
        let expected = from_rows(&["1000", "1100", "1110", "1111"]);
        assert_eq!(out, expected);
    }

    #[test]
    fn hull_leaves_instruments_alone() {
        let m = from_rows(&["4000", "0400", "0044"]);
        assert_eq!(convex_hull_overlay(&m), m);
        // the anatomy hull would cover the tool pixel at (1, 1)
        let m = from_rows(&["1000", "0400", "1011"]);
        let out = convex_hull_overlay(&m);
        assert_eq!(out.get(1, 1), 4);
        assert_eq!(out.get(1, 0), 1);
    }

    #[test]
    fn collinear_hull_is_the_segment() {
        let px = rasterize_hull(&[(0, 0), (2, 2), (4, 4)]);
        assert_eq!(px, vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]);
        assert_eq!(rasterize_hull(&[(3, 1)]), vec![(3, 1)]);
    }

    #[test]
    fn identity_affine_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid: Vec<u8> = (0..64).map(|_| rng.random_range(0..6)).collect();
        let m = SegMask::new(8, 8, grid, table()).unwrap();
        assert_eq!(affine_augment(&m, 0.0, 1.0).unwrap(), m);
    }

    #[test]
    fn quarter_turn_of_centred_square() {
        let m = from_rows(&["000000", "000000", "002200", "002200", "000000", "000000"]);
        assert_eq!(affine_augment(&m, 90.0, 1.0).unwrap(), m);
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid: Vec<u8> = (0..48).map(|_| rng.random_range(0..6)).collect();
        let m = SegMask::new(6, 8, grid, table()).unwrap();
        let once = affine_augment(&m, 180.0, 1.0).unwrap();
        assert_ne!(once, m);
        assert_eq!(affine_augment(&once, 180.0, 1.0).unwrap(), m);
    }

    #[test]
    fn thin_line_vanishes_under_erosion() {
        let m = from_rows(&["00000", "33333", "00000"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = morph_degrade(&m, 3, MorphMode::Erode, &mut rng).unwrap();
        assert_eq!(out.count(3), 0);
        assert_eq!(morph_degrade(&m, 1, MorphMode::Dilate, &mut rng).unwrap(), m);
    }

    #[test]
    fn even_kernel_rejected() {
        let m = from_rows(&["0"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(morph_degrade(&m, 2, MorphMode::Erode, &mut rng).is_err());
        let bad = AugmentationSpec {
            morph_kernels: vec![1, 4],
            ..AugmentationSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
