//! Axis-aligned box arithmetic used to match OCR text regions against
//! predicted address bars.
//!
//! Boxes are continuous regions stored as `(x, y, width, height)` in photo
//! pixel coordinates. A box never has zero area, so the cover-rate
//! denominator is always positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box dimensions must be positive (got {width}x{height})")]
    ZeroArea { width: f64, height: f64 },
    #[error("box coordinates must be finite and non-negative")]
    InvalidCoordinate,
    #[error("resolution must be positive (got {width}x{height})")]
    InvalidResolution { width: u32, height: u32 },
    #[error("box {0:?} exceeds the source resolution")]
    BoxOutOfBounds(BoundingBox),
}

/// An axis-aligned rectangle in photo pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    x: f64,
    y: f64,
    width: f64,
    height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        if ![x, y, width, height].iter().all(|v| v.is_finite()) || x < 0.0 || y < 0.0 {
            return Err(GeometryError::InvalidCoordinate);
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::ZeroArea { width, height });
        }
        Ok(Self {
            x,
            y,
            width,
            height,
        })
    }

    /// Builds a box from a top-left / bottom-right corner pair, the form
    /// OCR engines usually report.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(x0.min(x1), y0.min(y1), (x1 - x0).abs(), (y1 - y0).abs())
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn fits_within(&self, resolution: Resolution) -> bool {
        self.right() <= f64::from(resolution.width) && self.bottom() <= f64::from(resolution.height)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = overlap_1d(self.x, self.width, other.x, other.width);
        let h = overlap_1d(self.y, self.height, other.y, other.height);
        w * h
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }
}

// Length of the overlap of two intervals. A contained interval reports its
// own length exactly so that containment yields a ratio of exactly 1.
fn overlap_1d(a0: f64, a_len: f64, b0: f64, b_len: f64) -> f64 {
    let (a1, b1) = (a0 + a_len, b0 + b_len);
    if a0 >= b0 && a1 <= b1 {
        return a_len;
    }
    if b0 >= a0 && b1 <= a1 {
        return b_len;
    }
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x: f64,
            y: f64,
            width: f64,
            height: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        BoundingBox::new(raw.x, raw.y, raw.width, raw.height).map_err(serde::de::Error::custom)
    }
}

pub fn area(b: &BoundingBox) -> f64 {
    b.area()
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.intersection_area(b)
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// Fraction of the text box covered by the address-bar box.
///
/// Not symmetric: the denominator is always the text box area.
pub fn cover_rate(text: &BoundingBox, addrbar: &BoundingBox) -> f64 {
    (text.intersection_area(addrbar) / text.area()).clamp(0.0, 1.0)
}

/// Photo resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Resolution {
    width: u32,
    height: u32,
}

impl Resolution {
    pub const FULL_HD: Resolution = Resolution {
        width: 1920,
        height: 1080,
    };

    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidResolution { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            width: u32,
            height: u32,
        }
        let raw = Raw::deserialize(deserializer)?;
        Resolution::new(raw.width, raw.height).map_err(serde::de::Error::custom)
    }
}

/// Maps a box from one photo resolution into another, scaling uniformly by
/// the limiting axis so the aspect ratio is preserved. No letterbox offset
/// is added.
pub fn rescale_box(
    b: &BoundingBox,
    from: Resolution,
    to: Resolution,
) -> Result<BoundingBox, GeometryError> {
    if !b.fits_within(from) {
        return Err(GeometryError::BoxOutOfBounds(*b));
    }
    if from == to {
        return Ok(*b);
    }
    let (fw, fh) = (f64::from(from.width), f64::from(from.height));
    let (tw, th) = (f64::from(to.width), f64::from(to.height));
    // Keep the ratio as numerator/denominator so integer inputs stay exact.
    let (num, den) = if tw / fw <= th / fh { (tw, fw) } else { (th, fh) };
    let scale = |v: f64| v * num / den;
    let x = scale(b.x);
    let y = scale(b.y);
    let width = scale(b.width).min(tw - x);
    let height = scale(b.height).min(th - y);
    BoundingBox::new(x, y, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(bb(0.0, 0.0, 10.0, 10.0).area(), 100.0);
        assert_eq!(bb(5.0, 5.0, 1.0, 1.0).area(), 1.0);
        assert_eq!(bb(0.0, 0.0, 1920.0, 1080.0).area(), 2_073_600.0);
    }

    #[test]
    fn zero_area_and_negative_boxes_are_rejected() {
        assert!(matches!(
            BoundingBox::new(0.0, 0.0, 0.0, 5.0),
            Err(GeometryError::ZeroArea { .. })
        ));
        assert!(matches!(
            BoundingBox::new(-1.0, 0.0, 2.0, 5.0),
            Err(GeometryError::InvalidCoordinate)
        ));
        assert!(BoundingBox::new(f64::NAN, 0.0, 2.0, 5.0).is_err());
        assert!(Resolution::new(0, 10).is_err());
    }

    #[test]
    fn intersection_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(intersection_area(&a, &a), 100.0);
        assert_eq!(intersection_area(&a, &bb(20.0, 20.0, 5.0, 5.0)), 0.0);
        // touching edges share no area
        assert_eq!(intersection_area(&a, &bb(10.0, 0.0, 5.0, 5.0)), 0.0);
        // rasterized count: columns 5..10 of a 10-row strip = 50 pixels
        assert_eq!(intersection_area(&a, &bb(5.0, 0.0, 10.0, 10.0)), 50.0);
    }

    #[test]
    fn iou_and_cover_rate_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(5.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(50.0, 50.0, 1.0, 1.0)), 0.0);
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(cover_rate(&bb(2.0, 2.0, 3.0, 3.0), &a), 1.0);
        assert_eq!(cover_rate(&a, &bb(50.0, 50.0, 1.0, 1.0)), 0.0);
        assert_eq!(cover_rate(&a, &b), 0.5);
        // denominator is the text box, so the reverse direction differs
        assert_eq!(cover_rate(&a, &bb(0.0, 0.0, 100.0, 100.0)), 1.0);
        assert_eq!(cover_rate(&bb(0.0, 0.0, 100.0, 100.0), &a), 0.01);
    }

    #[test]
    fn contained_fractional_box_has_cover_rate_exactly_one() {
        let bar = bb(13.7, 52.1, 1500.3, 44.9);
        let text = bb(120.1, 60.33, 310.7, 27.01);
        assert_eq!(cover_rate(&text, &bar), 1.0);
    }

    #[test]
    fn rescale_examples() {
        let from = Resolution::new(4000, 3000).unwrap();
        let to = Resolution::new(1920, 1440).unwrap();
        assert_eq!(
            rescale_box(&bb(0.0, 0.0, 4000.0, 3000.0), from, to).unwrap(),
            bb(0.0, 0.0, 1920.0, 1440.0)
        );
        let r = rescale_box(&bb(400.0, 300.0, 400.0, 300.0), from, to).unwrap();
        assert_eq!(r, bb(192.0, 144.0, 192.0, 144.0));
        let b = bb(1.5, 2.5, 3.5, 4.5);
        assert_eq!(rescale_box(&b, from, from).unwrap(), b);
    }

    #[test]
    fn rescale_letterboxes_on_aspect_change() {
        // 4:3 into 16:9 is limited by height
        let from = Resolution::new(4000, 3000).unwrap();
        let r = rescale_box(&bb(0.0, 0.0, 4000.0, 3000.0), from, Resolution::FULL_HD).unwrap();
        assert_eq!(r, bb(0.0, 0.0, 1440.0, 1080.0));
        assert!(r.fits_within(Resolution::FULL_HD));
    }

    #[test]
    fn rescale_rejects_out_of_bounds_box() {
        let from = Resolution::new(100, 100).unwrap();
        let err = rescale_box(&bb(90.0, 0.0, 20.0, 10.0), from, Resolution::FULL_HD);
        assert!(matches!(err, Err(GeometryError::BoxOutOfBounds(_))));
    }

    #[test]
    fn corners_normalize_order() {
        assert_eq!(
            BoundingBox::from_corners(10.0, 20.0, 0.0, 5.0).unwrap(),
            bb(0.0, 5.0, 10.0, 15.0)
        );
    }

    #[test]
    fn deserialize_validates() {
        let ok: BoundingBox =
            serde_json::from_str(r#"{"x":1,"y":2,"width":3,"height":4}"#).unwrap();
        assert_eq!(ok, bb(1.0, 2.0, 3.0, 4.0));
        assert!(serde_json::from_str::<BoundingBox>(r#"{"x":1,"y":2,"width":0,"height":4}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn int_box() -> impl Strategy<Value = BoundingBox> {
            (0u32..100, 0u32..100, 1u32..=100, 1u32..=100)
                .prop_map(|(x, y, w, h)| bb(x.into(), y.into(), w.into(), h.into()))
        }

        fn real_box() -> impl Strategy<Value = BoundingBox> {
            (0.0..500.0f64, 0.0..500.0f64, 0.01..300.0f64, 0.01..300.0f64)
                .prop_map(|(x, y, w, h)| bb(x, y, w, h))
        }

        proptest! {
            #[test]
            fn iou_bounded_and_symmetric(a in real_box(), b in real_box()) {
                let v = iou(&a, &b);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, iou(&b, &a));
                prop_assert_eq!(iou(&a, &a), 1.0);
            }

            #[test]
            fn intersection_bounded_by_smaller_area(a in real_box(), b in real_box()) {
                let i = intersection_area(&a, &b);
                prop_assert!(i >= 0.0);
                prop_assert!(i <= a.area().min(b.area()));
                prop_assert_eq!(i, intersection_area(&b, &a));
            }

            #[test]
            fn cover_rate_one_iff_contained(t in int_box(), a in int_box()) {
                let cr = cover_rate(&t, &a);
                prop_assert!((0.0..=1.0).contains(&cr));
                prop_assert_eq!(cr == 1.0, a.contains(&t));
            }

            #[test]
            fn rescale_identity(b in int_box()) {
                let r = Resolution::new(200, 200).unwrap();
                prop_assert_eq!(rescale_box(&b, r, r).unwrap(), b);
            }

            // Composition holds when both steps are limited by the same axis.
            #[test]
            fn rescale_composes(
                b in int_box(),
                w1 in 200u32..4000, h1 in 200u32..4000,
                w2 in 100u32..4000, h2 in 100u32..4000,
                w3 in 100u32..4000, h3 in 100u32..4000,
            ) {
                let r1 = Resolution::new(w1, h1).unwrap();
                let r2 = Resolution::new(w2, h2).unwrap();
                let r3 = Resolution::new(w3, h3).unwrap();
                let width_limited = |a: Resolution, b: Resolution| {
                    f64::from(b.width) / f64::from(a.width) <= f64::from(b.height) / f64::from(a.height)
                };
                prop_assume!(width_limited(r1, r2) == width_limited(r2, r3));
                let direct = rescale_box(&b, r1, r3).unwrap();
                let mid = rescale_box(&b, r1, r2).unwrap();
                let chained = rescale_box(&mid, r2, r3).unwrap();
                prop_assert!((direct.x() - chained.x()).abs() < 1e-6);
                prop_assert!((direct.y() - chained.y()).abs() < 1e-6);
                prop_assert!((direct.width() - chained.width()).abs() < 1e-6);
                prop_assert!((direct.height() - chained.height()).abs() < 1e-6);
                prop_assert!(direct.fits_within(r3));
            }
        }
    }
}
