//! Distance-transform-based separation of touching particles: exact
//! Euclidean distance transform, marker extraction from its local maxima,
//! and priority-flood watershed segmentation.

use std::collections::BinaryHeap;

use thiserror::Error;

use crate::labeling::{label_components, Connectivity};
use crate::raster::{BinaryMask, LabelMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WatershedError {
    #[error("marker at ({x}, {y}) lies outside the mask foreground")]
    MarkerOutsideMask { x: usize, y: usize },
    #[error("dimension mismatch between {what}")]
    DimensionMismatch { what: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
}

/// Per-pixel Euclidean distance to the nearest background pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
    pub metric: DistanceMetric,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// True when the source mask had no background pixel at all; every
    /// distance is then the +infinity sentinel.
    pub fn is_degenerate(&self) -> bool {
        self.data.iter().any(|d| d.is_infinite())
    }
}

/// Exact Euclidean distance transform.
///
/// Outside the frame counts as foreground, so there is no artificial zero
/// ring: a mask with no background yields the degenerate all-infinity map.
/// Squared distances are computed in integer arithmetic (two-pass
/// lower-envelope scan), so the result equals the brute-force
/// minimum-over-all-background-pixels distance exactly.
pub fn distance_transform(mask: &BinaryMask) -> DistanceMap {
    let (w, h) = (mask.width(), mask.height());
    if mask.data().iter().all(|&v| v == 1) {
        return DistanceMap {
            width: w,
            height: h,
            data: vec![f64::INFINITY; w * h],
            metric: DistanceMetric::Euclidean,
        };
    }

    // Vertical pass: g[x, y] = distance to nearest background in column x,
    // or the sentinel when the column has none. With at least one background
    // pixel in the image, sentinel-based candidates never win below.
    let g_inf = (w + h) as i64;
    let mut g = vec![g_inf; w * h];
    for x in 0..w {
        for y in 0..h {
            let i = y * w + x;
            if mask.get(x, y) == 0 {
                g[i] = 0;
            } else if y > 0 {
                g[i] = (g[i - w] + 1).min(g_inf);
            }
        }
        for y in (0..h.saturating_sub(1)).rev() {
            let i = y * w + x;
            if g[i + w] + 1 < g[i] {
                g[i] = g[i + w] + 1;
            }
        }
    }

    // Horizontal pass (Meijster): per row, the lower envelope of the
    // parabolas f(x, i) = (x - i)^2 + g[i]^2.
    let mut sq = vec![0i64; w * h];
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let f = |x: i64, i: usize| -> i64 {
            let dx = x - i as i64;
            dx * dx + row[i] * row[i]
        };
        let sep = |i: usize, u: usize| -> i64 {
            let (iu, ii) = (u as i64, i as i64);
            (iu * iu - ii * ii + row[u] * row[u] - row[i] * row[i]) / (2 * (iu - ii))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let candidate = 1 + sep(s[q as usize], u);
                if candidate < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = candidate;
                }
            }
        }
        for u in (0..w).rev() {
            sq[y * w + u] = f(u as i64, s[q as usize]);
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }

    let data = sq.iter().map(|&d2| (d2 as f64).sqrt()).collect();
    DistanceMap {
        width: w,
        height: h,
        data,
        metric: DistanceMetric::Euclidean,
    }
}

/// Markers for watershed flooding: connected plateaus of 8-neighborhood
/// local maxima whose distance value is at least `min_distance`, labeled in
/// raster order.
pub fn find_markers(dm: &DistanceMap, min_distance: f64) -> LabelMap {
    assert!(min_distance >= 1.0, "min_distance must be at least 1");
    let (w, h) = (dm.width(), dm.height());
    let peaks = BinaryMask::from_fn(w, h, |x, y| {
        let v = dm.get(x, y);
        if v < min_distance {
            return false;
        }
        neighbors8(x, y, w, h).all(|(nx, ny)| v >= dm.get(nx, ny))
    });
    label_components(&peaks, Connectivity::Eight)
}

#[derive(PartialEq)]
struct FloodEntry {
    dist: f64,
    seq: u64,
    idx: usize,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: larger distance first, FIFO among equal distances so
        // wavefronts advance breadth-first across plateaus.
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Flood the mask from `markers` in order of decreasing distance. Every
/// foreground pixel joins the basin whose front reaches it from the highest
/// distance level; fronts arriving at equal level tie and the lower label
/// wins. Marker pixels always keep their own label. Components the flood
/// cannot reach (no marker inside them) each receive one fresh label, so the
/// output support equals the mask support exactly.
pub fn watershed_segment(
    dm: &DistanceMap,
    markers: &LabelMap,
    mask: &BinaryMask,
) -> Result<LabelMap, WatershedError> {
    let (w, h) = (mask.width(), mask.height());
    if (dm.width(), dm.height()) != (w, h) {
        return Err(WatershedError::DimensionMismatch {
            what: "distance map and mask",
        });
    }
    if (markers.width(), markers.height()) != (w, h) {
        return Err(WatershedError::DimensionMismatch {
            what: "markers and mask",
        });
    }

    let mut labels = vec![0u32; w * h];
    // Best claim per unlabeled pixel: the level the claiming front popped
    // at and the lowest basin label claiming from that level.
    let mut claim_label = vec![0u32; w * h];
    let mut claim_level = vec![f64::NEG_INFINITY; w * h];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for y in 0..h {
        for x in 0..w {
            let m = markers.get(x, y);
            if m == 0 {
                continue;
            }
            if mask.get(x, y) == 0 {
                return Err(WatershedError::MarkerOutsideMask { x, y });
            }
            labels[y * w + x] = m;
            heap.push(FloodEntry {
                dist: dm.get(x, y),
                seq,
                idx: y * w + x,
            });
            seq += 1;
        }
    }

    let mut visited = vec![false; w * h];
    while let Some(entry) = heap.pop() {
        if visited[entry.idx] {
            continue;
        }
        visited[entry.idx] = true;
        if labels[entry.idx] == 0 {
            labels[entry.idx] = claim_label[entry.idx];
        }
        let basin = labels[entry.idx];
        let level = dm.get(entry.idx % w, entry.idx / w);
        let (x, y) = (entry.idx % w, entry.idx / w);
        for (nx, ny) in neighbors8(x, y, w, h) {
            let ni = ny * w + nx;
            if mask.get(nx, ny) == 1 && !visited[ni] && labels[ni] == 0 {
                if claim_label[ni] == 0 {
                    claim_label[ni] = basin;
                    claim_level[ni] = level;
                    heap.push(FloodEntry {
                        dist: dm.get(nx, ny),
                        seq,
                        idx: ni,
                    });
                    seq += 1;
                } else if level > claim_level[ni] {
                    claim_label[ni] = basin;
                    claim_level[ni] = level;
                } else if level == claim_level[ni] && basin < claim_label[ni] {
                    claim_label[ni] = basin;
                }
            }
        }
    }

    // Components no basin reached fall back to a fresh label apiece.
    let mut next = markers.count();
    for start in 0..w * h {
        if mask.data()[start] == 0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for (nx, ny) in neighbors8(x, y, w, h) {
                let ni = ny * w + nx;
                if mask.get(nx, ny) == 1 && labels[ni] == 0 {
                    labels[ni] = next;
                    stack.push(ni);
                }
            }
        }
    }

    Ok(LabelMap::new(w, h, labels, next))
}

fn neighbors8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    const OFFSETS: [(i32, i32); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (-1, 0),
        (1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    OFFSETS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as i64 + dx as i64;
        let ny = y as i64 + dy as i64;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}
