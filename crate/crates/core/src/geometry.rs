//! Axis-aligned box arithmetic in image pixel space.
//!
//! Coordinates are continuous: `x` grows rightward and `y` grows downward.
//! Image rotations are counter-clockwise quarter turns. A 90° turn of a
//! `W × H` image maps a point `(x, y)` to `(y, W − x)` in the resulting
//! `H × W` image; the other angles are compositions of that map.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate box {0}: width and height must be positive and finite")]
    Degenerate(BBox),
    #[error("box {bbox} lies outside a {dims} image")]
    OutOfBounds { bbox: BBox, dims: ImageDims },
    #[error("unsupported rotation {0}°: expected 0, 90, 180 or 270")]
    BadRotation(i64),
    #[error("image dimensions must be positive, got {0}")]
    BadDims(ImageDims),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        let dims = Self { width, height };
        dims.validate()?;
        Ok(dims)
    }

    /// Square dimensions for one of the detector input resolutions (640, 1280).
    pub const fn square(side: u32) -> Self {
        Self {
            width: side,
            height: side,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::BadDims(*self));
        }
        Ok(())
    }

    pub fn w(&self) -> f64 {
        f64::from(self.width)
    }

    pub fn h(&self) -> f64 {
        f64::from(self.height)
    }

    /// Dimensions of the image after rotating it by `rotation`.
    pub fn rotated(&self, rotation: Rotation) -> Self {
        match rotation {
            Rotation::R0 | Rotation::R180 => *self,
            Rotation::R90 | Rotation::R270 => Self {
                width: self.height,
                height: self.width,
            },
        }
    }

    pub fn contains(&self, b: &BBox) -> bool {
        b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= self.w() && b.y_max <= self.h()
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Counter-clockwise quarter-turn image rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Rotation {
    #[default]
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    /// All four rotations in the order they are tried and tie-broken.
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn from_degrees(degrees: i64) -> Result<Self, GeometryError> {
        match degrees {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            _ => Err(GeometryError::BadRotation(degrees)),
        }
    }

    pub const fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub const fn quarter_turns(self) -> u8 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 1,
            Rotation::R180 => 2,
            Rotation::R270 => 3,
        }
    }

    pub const fn from_quarter_turns(turns: u8) -> Self {
        match turns % 4 {
            0 => Rotation::R0,
            1 => Rotation::R90,
            2 => Rotation::R180,
            _ => Rotation::R270,
        }
    }

    /// The rotation that undoes `self`.
    pub const fn inverse(self) -> Self {
        Self::from_quarter_turns(4 - self.quarter_turns())
    }

    /// Rotation equivalent to applying `self` and then `next`.
    pub const fn then(self, next: Rotation) -> Self {
        Self::from_quarter_turns(self.quarter_turns() + next.quarter_turns())
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degrees())
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u16(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let degrees = i64::deserialize(deserializer)?;
        Rotation::from_degrees(degrees).map_err(serde::de::Error::custom)
    }
}

/// Rotate a point of a `dims`-sized image by `rotation`.
pub fn rotate_point(p: Point, rotation: Rotation, dims: ImageDims) -> Point {
    let (w, h) = (dims.w(), dims.h());
    match rotation {
        Rotation::R0 => p,
        Rotation::R90 => Point::new(p.y, w - p.x),
        Rotation::R180 => Point::new(w - p.x, h - p.y),
        Rotation::R270 => Point::new(h - p.y, p.x),
    }
}

/// Axis-aligned bounding box `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x_min, y_min, x_max, y_max]: [f64; 4]) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

impl BBox {
    /// Checked constructor; rejects empty, inverted and non-finite boxes.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(GeometryError::Degenerate(*self));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Box translated by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Axis-aligned hull of a set of points; `None` when the hull is degenerate.
    fn hull(points: &[Point]) -> Option<BBox> {
        let mut b = BBox {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for p in points {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        b.validate().ok().map(|_| b)
    }
}

/// Intersection over union of two boxes, using continuous areas.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64, GeometryError> {
    a.validate()?;
    b.validate()?;
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Box covering the same glyph after rotating a `dims`-sized image by `rotation`.
pub fn rotate_box(b: &BBox, rotation: Rotation, dims: ImageDims) -> Result<BBox, GeometryError> {
    b.validate()?;
    dims.validate()?;
    if !dims.contains(b) {
        return Err(GeometryError::OutOfBounds { bbox: *b, dims });
    }
    if rotation == Rotation::R0 {
        return Ok(*b);
    }
    let corners = [
        Point::new(b.x_min, b.y_min),
        Point::new(b.x_max, b.y_max),
    ]
    .map(|p| rotate_point(p, rotation, dims));
    BBox::hull(&corners).ok_or(GeometryError::Degenerate(*b))
}

/// Centre of a box.
pub fn centroid(b: &BBox) -> Result<Point, GeometryError> {
    b.validate()?;
    Ok(b.centroid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Counts unit pixels covered by a box with integer corners.
    fn pixel_iou(a: &BBox, b: &BBox, side: i64) -> f64 {
        let inside = |bb: &BBox, x: i64, y: i64| {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            cx > bb.x_min && cx < bb.x_max && cy > bb.y_min && cy < bb.y_max
        };
        let (mut inter, mut union) = (0u64, 0u64);
        for y in 0..side {
            for x in 0..side {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
        let b = bx(5.0, 0.0, 15.0, 10.0);
        assert!((pixel_iou(&a, &b, 30) - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn shared_edge_has_zero_iou() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(10.0, 0.0, 20.0, 10.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let flat = BBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 10.0,
            y_max: 0.0,
        };
        assert!(matches!(
            iou(&flat, &bx(0.0, 0.0, 1.0, 1.0)),
            Err(GeometryError::Degenerate(_))
        ));
        assert!(BBox::new(3.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn rotate_box_examples() {
        let dims = ImageDims::square(10);
        let b = bx(0.0, 0.0, 2.0, 1.0);
        assert_eq!(rotate_box(&b, Rotation::R0, dims).unwrap(), b);
        assert_eq!(
            rotate_box(&b, Rotation::R180, dims).unwrap(),
            bx(8.0, 9.0, 10.0, 10.0)
        );

        // 10 wide, 8 tall; map every corner through (x, y) -> (y, W - x).
        let dims = ImageDims::new(10, 8).unwrap();
        let b = bx(1.0, 2.0, 3.0, 5.0);
        let corners = [(1.0, 2.0), (3.0, 2.0), (1.0, 5.0), (3.0, 5.0)]
            .map(|(x, y): (f64, f64)| (y, 10.0 - x));
        let xs = corners.map(|c| c.0);
        let ys = corners.map(|c| c.1);
        let expected = bx(
            xs.iter().cloned().fold(f64::INFINITY, f64::min),
            ys.iter().cloned().fold(f64::INFINITY, f64::min),
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        let rotated = rotate_box(&b, Rotation::R90, dims).unwrap();
        assert_eq!(rotated, expected);
        assert!(dims.rotated(Rotation::R90).contains(&rotated));
    }

    #[test]
    fn rotate_box_rejects_out_of_bounds() {
        let dims = ImageDims::square(10);
        assert!(matches!(
            rotate_box(&bx(5.0, 5.0, 11.0, 6.0), Rotation::R90, dims),
            Err(GeometryError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&bx(0.0, 0.0, 10.0, 10.0)).unwrap(), Point::new(5.0, 5.0));
        assert_eq!(centroid(&bx(2.0, 4.0, 4.0, 8.0)).unwrap(), Point::new(3.0, 6.0));
    }

    #[test]
    fn rotation_degrees_round_trip() {
        for r in Rotation::ALL {
            assert_eq!(Rotation::from_degrees(i64::from(r.degrees())).unwrap(), r);
            assert_eq!(r.then(r.inverse()), Rotation::R0);
        }
        assert!(Rotation::from_degrees(45).is_err());
        assert!(Rotation::from_degrees(360).is_err());
        assert!(Rotation::from_degrees(-90).is_err());
    }

    fn int_box(side: u32) -> impl Strategy<Value = BBox> {
        let s = side as i64;
        (0..s, 0..s, 1..=s, 1..=s).prop_filter_map("non-empty", move |(x0, y0, w, h)| {
            let (x1, y1) = (x0 + w, y0 + h);
            (x1 <= s && y1 <= s).then_some(BBox {
                x_min: x0 as f64,
                y_min: y0 as f64,
                x_max: x1 as f64,
                y_max: y1 as f64,
            })
        })
    }

    fn rotation() -> impl Strategy<Value = Rotation> {
        (0u8..4).prop_map(Rotation::from_quarter_turns)
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in int_box(40), b in int_box(40)) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn iou_matches_pixel_counting(a in int_box(24), b in int_box(24)) {
            let expect = pixel_iou(&a, &b, 24);
            prop_assert!((iou(&a, &b).unwrap() - expect).abs() < 1e-6);
        }

        #[test]
        fn four_quarter_turns_are_identity(b in int_box(50), w in 50u32..80, h in 50u32..80) {
            let mut dims = ImageDims::new(w, h).unwrap();
            let mut cur = b;
            for _ in 0..4 {
                cur = rotate_box(&cur, Rotation::R90, dims).unwrap();
                dims = dims.rotated(Rotation::R90);
            }
            prop_assert_eq!(cur, b);
        }

        #[test]
        fn rotation_inverse_restores_box(b in int_box(50), r in rotation()) {
            let dims = ImageDims::new(50, 64).unwrap();
            let there = rotate_box(&b, r, dims).unwrap();
            let back = rotate_box(&there, r.inverse(), dims.rotated(r)).unwrap();
            prop_assert_eq!(back, b);
        }

        #[test]
        fn centroid_commutes_with_rotation(b in int_box(60), r in rotation()) {
            let dims = ImageDims::new(60, 70).unwrap();
            let lhs = rotate_box(&b, r, dims).unwrap().centroid();
            let rhs = rotate_point(b.centroid(), r, dims);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn iou_invariant_under_joint_rotation(a in int_box(40), b in int_box(40), r in rotation()) {
            let dims = ImageDims::new(40, 52).unwrap();
            let before = iou(&a, &b).unwrap();
            let after = iou(
                &rotate_box(&a, r, dims).unwrap(),
                &rotate_box(&b, r, dims).unwrap(),
            ).unwrap();
            prop_assert!((before - after).abs() <= 1e-12);
        }
    }
}
