//! Maximally stable extremal regions.
//!
//! For one polarity the extremal regions at level `t` are the 4-connected
//! components of `{p : I(p) ≤ t}`. Components are tracked across all 256
//! levels with a union-find component tree; each tree node covers the span
//! of levels over which its pixel set does not change.
//!
//! Stability of the region `Q` at level `t`:
//! `v = (|Q_{t+Δ}| − |Q_{t−Δ}|) / |Q_t|`, where `Q_{t+Δ}` is the component
//! containing `Q` at level `min(t+Δ, 255)` and `Q_{t−Δ}` is the largest
//! component inside `Q` at level `max(t−Δ, 0)` (ties go to the component
//! holding the lowest raster index; zero when there is none). A region is
//! accepted when its area is within bounds, `v ≤ max_variation`, and `v` is
//! no larger than at the neighboring levels `t ± 1` along the same lineage.
//! The bright polarity is the same procedure on the inverted image.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::{Detector, Keypoint, KeypointPool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MserParams {
    pub delta: u8,
    pub min_area: usize,
    pub max_area: usize,
    pub max_variation: f64,
}

impl MserParams {
    /// delta 5, areas 30 to 1% of the image, max variation 0.25.
    pub fn for_image(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            delta: 5,
            min_area: 30,
            max_area: (n / 100).max(31),
            max_variation: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableRegion {
    /// Raster indices, ascending.
    pub pixels: Vec<u32>,
    /// Threshold at which the region was most stable.
    pub level: u8,
    pub variation: f64,
    /// Brighter than its surroundings.
    pub bright: bool,
}

#[derive(Debug)]
struct Node {
    start: u8,
    end: u8,
    size: u32,
    parent: Option<usize>,
    children: Vec<usize>,
    min_pixel: u32,
    own: Vec<u32>,
}

struct ComponentTree {
    nodes: Vec<Node>,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }
}

impl ComponentTree {
    fn build(values: &[u8], width: usize, height: usize) -> Self {
        let n = values.len();
        let mut by_level: Vec<Vec<u32>> = vec![Vec::new(); 256];
        for (i, &v) in values.iter().enumerate() {
            by_level[v as usize].push(i as u32);
        }
        let mut uf = UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        };
        let mut added = vec![false; n];
        let mut node_of_root: Vec<Option<usize>> = vec![None; n];
        let mut pending: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut dirty = vec![false; n];
        let mut nodes: Vec<Node> = Vec::new();

        for (level, pixels) in by_level.iter().enumerate() {
            if pixels.is_empty() {
                continue;
            }
            let mut touched: Vec<u32> = Vec::new();
            let touch = |r: u32,
                         dirty: &mut Vec<bool>,
                         pending: &mut Vec<Vec<usize>>,
                         touched: &mut Vec<u32>,
                         node_of_root: &Vec<Option<usize>>| {
                if !dirty[r as usize] {
                    dirty[r as usize] = true;
                    if let Some(node) = node_of_root[r as usize] {
                        pending[r as usize].push(node);
                    }
                    touched.push(r);
                }
            };
            for &p in pixels {
                added[p as usize] = true;
                node_of_root[p as usize] = None;
                touch(p, &mut dirty, &mut pending, &mut touched, &node_of_root);
                let (x, y) = (p as usize % width, p as usize / width);
                let mut neighbors = [None; 4];
                if x > 0 {
                    neighbors[0] = Some(p - 1);
                }
                if x + 1 < width {
                    neighbors[1] = Some(p + 1);
                }
                if y > 0 {
                    neighbors[2] = Some(p - width as u32);
                }
                if y + 1 < height {
                    neighbors[3] = Some(p + width as u32);
                }
                for q in neighbors.into_iter().flatten() {
                    if !added[q as usize] {
                        continue;
                    }
                    let (ra, rb) = (uf.find(p), uf.find(q));
                    if ra == rb {
                        continue;
                    }
                    touch(ra, &mut dirty, &mut pending, &mut touched, &node_of_root);
                    touch(rb, &mut dirty, &mut pending, &mut touched, &node_of_root);
                    let (win, lose) = if uf.size[ra as usize] >= uf.size[rb as usize] {
                        (ra, rb)
                    } else {
                        (rb, ra)
                    };
                    uf.parent[lose as usize] = win;
                    uf.size[win as usize] += uf.size[lose as usize];
                    let moved = std::mem::take(&mut pending[lose as usize]);
                    pending[win as usize].extend(moved);
                }
            }
            for &r in &touched {
                dirty[r as usize] = false;
                if uf.find(r) != r {
                    continue;
                }
                let id = nodes.len();
                let children = std::mem::take(&mut pending[r as usize]);
                for &c in &children {
                    nodes[c].parent = Some(id);
                    nodes[c].end = level as u8 - 1;
                }
                nodes.push(Node {
                    start: level as u8,
                    end: 255,
                    size: uf.size[r as usize],
                    parent: None,
                    children,
                    min_pixel: u32::MAX,
                    own: Vec::new(),
                });
                node_of_root[r as usize] = Some(id);
            }
            for &p in pixels {
                let r = uf.find(p);
                let id = node_of_root[r as usize].expect("root has a node");
                nodes[id].own.push(p);
            }
        }
        // children always precede parents, so one forward pass settles min_pixel
        for id in 0..nodes.len() {
            let own_min = nodes[id].own.iter().copied().min().unwrap_or(u32::MAX);
            let child_min = nodes[id]
                .children
                .iter()
                .map(|&c| nodes[c].min_pixel)
                .min()
                .unwrap_or(u32::MAX);
            nodes[id].min_pixel = own_min.min(child_min);
        }
        Self { nodes }
    }

    fn largest_child(&self, id: usize) -> Option<usize> {
        self.nodes[id].children.iter().copied().max_by(|&a, &b| {
            let (na, nb) = (&self.nodes[a], &self.nodes[b]);
            na.size
                .cmp(&nb.size)
                .then_with(|| nb.min_pixel.cmp(&na.min_pixel))
        })
    }

    /// Above the node: the ancestor alive at `level`. Below: the largest
    /// descendant alive at `level`, ties to the lowest raster index.
    fn at_level(&self, mut id: usize, level: u8) -> Option<usize> {
        while self.nodes[id].end < level {
            id = self.nodes[id].parent?;
        }
        if self.nodes[id].start <= level {
            return Some(id);
        }
        let mut best: Option<usize> = None;
        let mut stack = self.nodes[id].children.clone();
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.start > level {
                stack.extend_from_slice(&node.children);
                continue;
            }
            let better = best.is_none_or(|b| {
                let nb = &self.nodes[b];
                (node.size, std::cmp::Reverse(node.min_pixel))
                    > (nb.size, std::cmp::Reverse(nb.min_pixel))
            });
            if better {
                best = Some(n);
            }
        }
        best
    }

    fn size_at(&self, id: usize, level: u8) -> u32 {
        self.at_level(id, level).map_or(0, |n| self.nodes[n].size)
    }

    fn variation(&self, id: usize, level: u8, delta: u8) -> f64 {
        let above = self.size_at(id, level.saturating_add(delta));
        let below = self.size_at(id, level.saturating_sub(delta));
        (above as f64 - below as f64) / self.nodes[id].size as f64
    }

    fn members(&self, id: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes[id].size as usize);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.extend_from_slice(&self.nodes[n].own);
            stack.extend_from_slice(&self.nodes[n].children);
        }
        out.sort_unstable();
        out
    }
}

/// Accepted regions for the dark-on-bright polarity (`I ≤ t`).
fn regions_one_polarity(values: &[u8], width: usize, height: usize, p: &MserParams) -> Vec<StableRegion> {
    let tree = ComponentTree::build(values, width, height);
    let mut out = Vec::new();
    for id in 0..tree.nodes.len() {
        let node = &tree.nodes[id];
        let size = node.size as usize;
        if size < p.min_area || size > p.max_area {
            continue;
        }
        let mut best: Option<(u8, f64)> = None;
        for level in node.start..=node.end {
            let v = tree.variation(id, level, p.delta);
            if v > p.max_variation {
                continue;
            }
            let prev = if level == 0 {
                None
            } else if level > node.start {
                Some(tree.variation(id, level - 1, p.delta))
            } else {
                tree.largest_child(id)
                    .map(|c| tree.variation(c, level - 1, p.delta))
            };
            let next = if level == 255 {
                None
            } else if level < node.end {
                Some(tree.variation(id, level + 1, p.delta))
            } else {
                node.parent.map(|q| tree.variation(q, level + 1, p.delta))
            };
            let is_min = prev.is_none_or(|pv| v <= pv) && next.is_none_or(|nv| v <= nv);
            if is_min && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((level, v));
            }
        }
        if let Some((level, variation)) = best {
            out.push(StableRegion {
                pixels: tree.members(id),
                level,
                variation,
                bright: false,
            });
        }
    }
    out
}

/// Accepted regions of both polarities; dark regions come first.
pub fn stable_regions(gray: &GrayImage, params: &MserParams) -> Vec<StableRegion> {
    let (w, h) = gray.dimensions();
    let (w, h) = (w as usize, h as usize);
    let values = gray.as_raw();
    let mut out = regions_one_polarity(values, w, h, params);
    let inverted: Vec<u8> = values.iter().map(|v| 255 - v).collect();
    out.extend(
        regions_one_polarity(&inverted, w, h, params)
            .into_iter()
            .map(|r| StableRegion {
                level: 255 - r.level,
                bright: true,
                ..r
            }),
    );
    out
}

/// Pool of every pixel inside an accepted region, scored by the negated
/// variation of the most stable region containing it.
pub fn detect_stable_regions(gray: &GrayImage, params: &MserParams) -> KeypointPool {
    let w = gray.width();
    let mut best: Vec<Option<f64>> = vec![None; gray.as_raw().len()];
    for region in stable_regions(gray, params) {
        let score = -region.variation;
        for &p in &region.pixels {
            let slot = &mut best[p as usize];
            if slot.is_none_or(|s| score > s) {
                *slot = Some(score);
            }
        }
    }
    let mut points: Vec<Keypoint> = best
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            s.map(|score| Keypoint {
                row: i as u32 / w,
                col: i as u32 % w,
                score,
            })
        })
        .collect();
    KeypointPool::sort_points(&mut points);
    KeypointPool {
        detector: Detector::StableRegion,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn params() -> MserParams {
        MserParams {
            delta: 5,
            min_area: 10,
            max_area: 500,
            max_variation: 0.25,
        }
    }

    #[test]
    fn constant_image_has_no_regions() {
        let img = GrayImage::from_pixel(32, 32, Luma([128]));
        assert!(stable_regions(&img, &params()).is_empty());
    }

    #[test]
    fn gray_disk_on_black() {
        let img = GrayImage::from_fn(32, 32, |x, y| {
            let (dx, dy) = (x as f64 - 15.5, y as f64 - 15.5);
            Luma([if dx * dx + dy * dy <= 36.0 { 160 } else { 0 }])
        });
        let disk: Vec<u32> = (0..32 * 32)
            .filter(|&i| img.as_raw()[i as usize] == 160)
            .collect();
        let regions = stable_regions(&img, &params());
        assert_eq!(regions.len(), 1, "{regions:?}");
        assert!(regions[0].bright);
        assert_eq!(regions[0].pixels, disk);
        assert_eq!(regions[0].variation, 0.0);
    }

    #[test]
    fn tree_sizes_are_consistent() {
        let values: Vec<u8> = (0..64u32).map(|i| ((i * 37) % 11 * 20) as u8).collect();
        let tree = ComponentTree::build(&values, 8, 8);
        let roots: Vec<_> = tree.nodes.iter().filter(|n| n.parent.is_none()).collect();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].size, 64);
        for (id, node) in tree.nodes.iter().enumerate() {
            let child_sum: u32 = node.children.iter().map(|&c| tree.nodes[c].size).sum();
            assert_eq!(node.size, child_sum + node.own.len() as u32);
            assert_eq!(tree.members(id).len(), node.size as usize);
            assert!(node.start <= node.end);
        }
    }

    #[test]
    fn stricter_variation_gives_subset_pool() {
        let img = GrayImage::from_fn(32, 32, |x, y| {
            let noise = (x * 7919 + y * 104_729) % 23;
            let blob = if (8..20).contains(&x) && (10..18).contains(&y) { 150 } else { 40 };
            Luma([(blob + noise) as u8])
        });
        let loose = detect_stable_regions(&img, &MserParams { max_variation: 1.0, ..params() });
        let strict = detect_stable_regions(&img, &MserParams { max_variation: 0.0, ..params() });
        for p in &strict.points {
            assert!(loose.points.iter().any(|q| q.row == p.row && q.col == p.col));
        }
    }
}
