//! SLIC-style superpixels on grayscale images: k-means in
//! (x, y, intensity) with a compactness-weighted spatial term, followed by a
//! connectivity pass.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::LimeError;
use crate::imgproc::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Target number of superpixels.
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self { k: 40, compactness: 20.0, iterations: 10 }
    }
}

/// A total partition of the image into `d` superpixels labelled `0..d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<usize>,
    d: usize,
}

impl Segmentation {
    /// Validates coverage and label density.
    pub fn new(width: usize, height: usize, labels: Vec<usize>) -> Result<Self, LimeError> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(LimeError::DimensionMismatch(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        let d = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; d];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(LimeError::InvalidSegmentation("label range has gaps".into()));
        }
        if d < 2 {
            return Err(LimeError::InvalidSegmentation(format!("need at least 2 superpixels, got {d}")));
        }
        Ok(Self { width, height, labels, d })
    }

    /// Regular `cols` x `rows` block grid.
    pub fn grid(width: usize, height: usize, cols: usize, rows: usize) -> Result<Self, LimeError> {
        if cols == 0 || rows == 0 || cols > width || rows > height {
            return Err(LimeError::InvalidSegmentation(format!("{cols}x{rows} grid on {width}x{height}")));
        }
        let labels = (0..width * height)
            .map(|i| {
                let (x, y) = (i % width, i / width);
                (y * rows / height) * cols + x * cols / width
            })
            .collect();
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_segments(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.d];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Pixel belongs to a segment and has a 4-neighbour in another segment.
    pub fn is_boundary(&self, x: usize, y: usize) -> bool {
        let l = self.label(x, y);
        (x > 0 && self.label(x - 1, y) != l)
            || (x + 1 < self.width && self.label(x + 1, y) != l)
            || (y > 0 && self.label(x, y - 1) != l)
            || (y + 1 < self.height && self.label(x, y + 1) != l)
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    v: f64,
}

/// Grid layout `(cols, rows)` whose product is closest to `k`, preferring
/// the aspect ratio closest to the image's and then more columns.
fn grid_layout(k: usize, w: usize, h: usize) -> (usize, usize) {
    let aspect = w as f64 / h as f64;
    let mut best = (k, 1);
    let mut best_score = (usize::MAX, f64::MAX);
    for cols in 1..=k.min(w) {
        let rows = ((k as f64 / cols as f64).round() as usize).clamp(1, h);
        let score = (cols * rows).abs_diff(k);
        let shape = ((cols as f64 / rows as f64).ln() - aspect.ln()).abs();
        if score < best_score.0 || (score == best_score.0 && shape <= best_score.1 + 1e-12) {
            best = (cols, rows);
            best_score = (score, shape);
        }
    }
    best
}

fn initial_centers(img: &GrayImage, k: usize) -> Vec<Center> {
    let (w, h) = (img.width(), img.height());
    let (cols, rows) = grid_layout(k, w, h);
    let mut centers = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let cx = ((c as f64 + 0.5) * w as f64 / cols as f64).floor() as usize;
            let cy = ((r as f64 + 0.5) * h as f64 / rows as f64).floor() as usize;
            // move off edges: lowest gradient in the 3x3 neighbourhood
            let (mut bx, mut by, mut bg) = (cx, cy, f64::MAX);
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let gx = img.get((x + 1).min(w - 1), y) as f64 - img.get(x.saturating_sub(1), y) as f64;
                    let gy = img.get(x, (y + 1).min(h - 1)) as f64 - img.get(x, y.saturating_sub(1)) as f64;
                    let g = gx * gx + gy * gy;
                    if g < bg {
                        (bx, by, bg) = (x, y, g);
                    }
                }
            }
            centers.push(Center { x: bx as f64, y: by as f64, v: img.get(bx, by) as f64 });
        }
    }
    centers
}

/// Segments `img` into roughly `k` superpixels. Fully deterministic.
pub fn slic_segment(img: &GrayImage, params: &SlicParams) -> Result<Segmentation, LimeError> {
    let (w, h) = (img.width(), img.height());
    let k = params.k;
    if k < 2 || k > w * h {
        return Err(LimeError::BadK { k, pixels: w * h });
    }
    let step = ((w * h) as f64 / k as f64).sqrt();
    let spatial = params.compactness / step;
    let mut centers = initial_centers(img, k);
    let mut labels = vec![usize::MAX; w * h];
    let mut dist = vec![f64::MAX; w * h];
    let reach = (2.0 * step).ceil() as isize;

    for _ in 0..params.iterations.max(1) {
        dist.iter_mut().for_each(|d| *d = f64::MAX);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x.round() as isize - reach).max(0) as usize;
            let x1 = ((c.x.round() as isize + reach) as usize).min(w - 1);
            let y0 = (c.y.round() as isize - reach).max(0) as usize;
            let y1 = ((c.y.round() as isize + reach) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dv = img.get(x, y) as f64 - c.v;
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    let d = dv * dv + spatial * spatial * (dx * dx + dy * dy);
                    let i = y * w + x;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci;
                    }
                }
            }
        }
        // pixels outside every search window go to the nearest centre
        for i in 0..w * h {
            if labels[i] == usize::MAX {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                labels[i] = nearest_center(&centers, x, y);
            }
        }
        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l];
            s.0 += (i % w) as f64;
            s.1 += (i / w) as f64;
            s.2 += img.pixels()[i] as f64;
            s.3 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                *c = Center { x: s.0 / n, y: s.1 / n, v: s.2 / n };
            }
        }
    }
    let labels = enforce_connectivity(&labels, w, h);
    Segmentation::new(w, h, labels)
}

fn nearest_center(centers: &[Center], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut bd = f64::MAX;
    for (i, c) in centers.iter().enumerate() {
        let d = (c.x - x).powi(2) + (c.y - y).powi(2);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

/// 4-connected components of an arbitrary labelling, in raster order of
/// first pixel. Returns (component id per pixel, size per component).
fn components(labels: &[usize], w: usize, h: usize) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == usize::MAX && labels[j] == l {
                    comp[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Keeps the largest fragment of every cluster; each other fragment is
/// merged into its largest adjacent region. Output labels are dense and
/// numbered in raster order.
fn enforce_connectivity(labels: &[usize], w: usize, h: usize) -> Vec<usize> {
    let (comp, sizes) = components(labels, w, h);
    let n = sizes.len();
    let mut comp_label = vec![0usize; n];
    for (i, &c) in comp.iter().enumerate() {
        comp_label[c] = labels[i];
    }
    let mut largest: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for c in 0..n {
        let l = comp_label[c];
        let e = largest.entry(l).or_insert(c);
        if sizes[c] > sizes[*e] {
            *e = c;
        }
    }
    // region each component currently belongs to
    let mut owner: Vec<usize> = (0..n).collect();
    let mut region_size = sizes.clone();
    let mut orphans: Vec<usize> = (0..n).filter(|&c| largest[&comp_label[c]] != c).collect();
    orphans.sort_by_key(|&c| (sizes[c], c));

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = comp[ny * w + nx];
                    if a != b {
                        adjacency[a].push(b);
                        adjacency[b].push(a);
                    }
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }
    fn find(owner: &mut [usize], c: usize) -> usize {
        let mut r = c;
        while owner[r] != r {
            r = owner[r];
        }
        let mut c = c;
        while owner[c] != r {
            let next = owner[c];
            owner[c] = r;
            c = next;
        }
        r
    }
    for o in orphans {
        let me = find(&mut owner, o);
        let mut target = None;
        let mut best = 0;
        for &nb in &adjacency[o] {
            let r = find(&mut owner, nb);
            if r != me && (region_size[r] > best || (region_size[r] == best && Some(r) < target)) {
                best = region_size[r];
                target = Some(r);
            }
        }
        if let Some(t) = target {
            owner[me] = t;
            region_size[t] += region_size[me];
        }
    }
    let mut dense = std::collections::HashMap::new();
    comp.iter()
        .map(|&c| {
            let r = find(&mut owner, c);
            let next = dense.len();
            *dense.entry(r).or_insert(next)
        })
        .collect()
}
