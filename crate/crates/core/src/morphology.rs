//! Binary erosion, dilation, opening and closing with flat structuring
//! elements.
//!
//! Pixels outside the frame count as background for both erosion and
//! dilation: foreground touching the border erodes, and nothing grows in
//! from outside.

use crate::raster::BinaryMask;

/// A flat structuring element: a set of (dx, dy) offsets including (0, 0).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StructuringElement {
    name: String,
    offsets: Vec<(i32, i32)>,
}

impl StructuringElement {
    /// Panics if `offsets` is empty or does not contain (0, 0).
    pub fn new(name: impl Into<String>, offsets: Vec<(i32, i32)>) -> Self {
        assert!(!offsets.is_empty(), "structuring element must be non-empty");
        assert!(
            offsets.contains(&(0, 0)),
            "structuring element must contain (0, 0)"
        );
        Self {
            name: name.into(),
            offsets,
        }
    }

    /// The full 3x3 neighborhood (8-connected).
    pub fn square3() -> Self {
        let mut offsets = Vec::with_capacity(9);
        for dy in -1..=1 {
            for dx in -1..=1 {
                offsets.push((dx, dy));
            }
        }
        Self::new("square3", offsets)
    }

    /// The 3x3 cross (4-connected).
    pub fn cross3() -> Self {
        Self::new("cross3", vec![(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// True iff the offset set equals its point reflection.
    pub fn is_symmetric(&self) -> bool {
        self.offsets
            .iter()
            .all(|&(dx, dy)| self.offsets.contains(&(-dx, -dy)))
    }

    fn reflected_offsets(&self) -> Vec<(i32, i32)> {
        self.offsets.iter().map(|&(dx, dy)| (-dx, -dy)).collect()
    }
}

/// Erode `iterations` times: a pixel survives one pass iff every offset of
/// `se` lands inside the frame on a foreground pixel.
pub fn erode(mask: &BinaryMask, se: &StructuringElement, iterations: u32) -> BinaryMask {
    assert!(iterations >= 1, "iterations must be at least 1");
    let mut out = mask.clone();
    for _ in 0..iterations {
        out = erode_once(&out, se.offsets());
    }
    out
}

/// Dilate `iterations` times: a pixel lights up in one pass iff any offset
/// of the reflected `se` lands inside the frame on a foreground pixel.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement, iterations: u32) -> BinaryMask {
    assert!(iterations >= 1, "iterations must be at least 1");
    let reflected = se.reflected_offsets();
    let mut out = mask.clone();
    for _ in 0..iterations {
        out = dilate_once(&out, &reflected);
    }
    out
}

/// Opening: erode then dilate, each `iterations` times.
pub fn open(mask: &BinaryMask, se: &StructuringElement, iterations: u32) -> BinaryMask {
    dilate(&erode(mask, se, iterations), se, iterations)
}

/// Closing: dilate then erode, each `iterations` times.
pub fn close(mask: &BinaryMask, se: &StructuringElement, iterations: u32) -> BinaryMask {
    erode(&dilate(mask, se, iterations), se, iterations)
}

fn erode_once(mask: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        if mask.get(x, y) == 0 {
            return false;
        }
        offsets.iter().all(|&(dx, dy)| {
            let nx = x as i64 + dx as i64;
            let ny = y as i64 + dy as i64;
            nx >= 0
                && ny >= 0
                && (nx as usize) < w
                && (ny as usize) < h
                && mask.get(nx as usize, ny as usize) == 1
        })
    })
}

fn dilate_once(mask: &BinaryMask, offsets: &[(i32, i32)]) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        offsets.iter().any(|&(dx, dy)| {
            let nx = x as i64 + dx as i64;
            let ny = y as i64 + dy as i64;
            nx >= 0
                && ny >= 0
                && (nx as usize) < w
                && (ny as usize) < h
                && mask.get(nx as usize, ny as usize) == 1
        })
    })
}
