//! Connected-component labeling of binary masks.
//!
//! Labels are assigned in raster-scan order of each component's first pixel,
//! so identical inputs always produce identical numbering.

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, LabelMap};

/// Pixel adjacency rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    /// Neighbor offsets in the half-plane already scanned (above / left).
    fn prior_offsets(self) -> &'static [(i32, i32)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
        }
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            self.parent[i as usize] = self.parent[self.parent[i as usize] as usize];
            i = self.parent[i as usize];
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        // Lower root wins so representatives stay raster-ordered.
        match ra.cmp(&rb) {
            std::cmp::Ordering::Less => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Greater => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Equal => {}
        }
    }
}

/// Two-pass union-find labeling: every maximal connected set of foreground
/// pixels under `conn` gets one label from `1..=count`.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0u32; w * h]; // pixel index + 1, 0 = background
    let mut uf = UnionFind::new(w * h);
    let offsets = conn.prior_offsets();

    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == 0 {
                continue;
            }
            let idx = (y * w + x) as u32;
            provisional[idx as usize] = idx + 1;
            for &(dx, dy) in offsets {
                let nx = x as i64 + dx as i64;
                let ny = y as i64 + dy as i64;
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                if mask.get(nx as usize, ny as usize) == 1 {
                    uf.union(idx, (ny as usize * w + nx as usize) as u32);
                }
            }
        }
    }

    // Second pass: compact roots to 1..=count in raster order of first pixel.
    let mut root_to_label = vec![0u32; w * h];
    let mut data = vec![0u32; w * h];
    let mut count = 0u32;
    for i in 0..w * h {
        if provisional[i] == 0 {
            continue;
        }
        let root = uf.find(i as u32) as usize;
        if root_to_label[root] == 0 {
            count += 1;
            root_to_label[root] = count;
        }
        data[i] = root_to_label[root];
    }
    LabelMap::new(w, h, data, count)
}

/// Pixel count per label, ordered by label.
pub fn component_sizes(lm: &LabelMap) -> Vec<(u32, u64)> {
    let mut sizes = vec![0u64; lm.count() as usize];
    for &l in lm.data() {
        if l != 0 {
            sizes[(l - 1) as usize] += 1;
        }
    }
    sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (i as u32 + 1, n))
        .collect()
}

/// Drop components smaller than `min_area` pixels and relabel the survivors
/// compactly, preserving raster order.
pub fn filter_small(lm: &LabelMap, min_area: u64) -> LabelMap {
    let sizes = component_sizes(lm);
    let mut remap = vec![0u32; lm.count() as usize + 1];
    let mut next = 0u32;
    for (label, size) in sizes {
        if size >= min_area {
            next += 1;
            remap[label as usize] = next;
        }
    }
    let data = lm.data().iter().map(|&l| remap[l as usize]).collect();
    LabelMap::new(lm.width(), lm.height(), data, next)
}
