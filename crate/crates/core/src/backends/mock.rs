//! Deterministic stand-ins for the four model roles.
//!
//! The mock world is defined on grey levels (BT.601 luma):
//!
//! * grounding thresholds at a fixed absolute level and returns the tight box
//!   of the largest 8-connected bright component;
//! * segmentation applies Otsu's threshold inside the box, keeps the largest
//!   4-connected component hit by the box centre or a point prompt (else the
//!   largest one) and fills its holes;
//! * features are per-window `(mean R, mean G, mean B, |dx|, |dy|, std)`;
//! * scoring measures which fraction of the non-black pixels falls in each
//!   label's grey band, softmax-normalised for classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BackendError, FeatureBackend, GroundingBackend, ScoringBackend, SegmentationBackend};
use crate::prompt_boost::{anchor_point, FeatureMap};
use crate::types::{luma, BBox, BinaryMask, ImageRgb8, Point2D};

/// Label of the target structure in the default mock world.
pub const SYNTHETIC_TARGET: &str = "bright lesion";
pub const SYNTHETIC_DISTRACTOR: &str = "dark nodule";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockWorldSpec {
    /// Grey level at or above which grounding sees foreground.
    pub threshold: u8,
    /// Grey band of the target, used for image-text matching.
    pub target_band: (u8, u8),
    /// Grey band per classification label; unknown labels score zero.
    pub class_bands: BTreeMap<String, (u8, u8)>,
    /// Feature window edge in pixels.
    pub feature_window: u32,
}

impl Default for MockWorldSpec {
    fn default() -> Self {
        let target_band = (130, 160);
        let class_bands = BTreeMap::from([
            (SYNTHETIC_TARGET.to_owned(), target_band),
            ("background".to_owned(), (95, 129)),
            (SYNTHETIC_DISTRACTOR.to_owned(), (40, 94)),
        ]);
        Self {
            threshold: 200,
            target_band,
            class_bands,
            feature_window: 8,
        }
    }
}

impl MockWorldSpec {
    pub fn validate(&self) -> Result<(), String> {
        let bad = |name: &str, (lo, hi): (u8, u8)| (lo > hi).then(|| format!("band `{name}` has lo > hi"));
        if let Some(e) = bad("target", self.target_band) {
            return Err(e);
        }
        for (name, band) in &self.class_bands {
            if let Some(e) = bad(name, *band) {
                return Err(e);
            }
        }
        if self.feature_window == 0 {
            return Err("feature window must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MockWorld {
    spec: MockWorldSpec,
}

impl MockWorld {
    pub fn new(spec: MockWorldSpec) -> Self {
        spec.validate().expect("invalid mock world specification");
        Self { spec }
    }

    pub fn spec(&self) -> &MockWorldSpec {
        &self.spec
    }

    /// Fraction of non-black pixels whose grey level lies in `band`.
    pub fn band_fraction(image: &ImageRgb8, band: (u8, u8)) -> f64 {
        let mut visible = 0usize;
        let mut inside = 0usize;
        for p in image.pixels() {
            if p == [0, 0, 0] {
                continue;
            }
            visible += 1;
            let g = luma(p).round() as u8;
            if (band.0..=band.1).contains(&g) {
                inside += 1;
            }
        }
        if visible == 0 {
            0.0
        } else {
            inside as f64 / visible as f64
        }
    }
}

impl GroundingBackend for MockWorld {
    fn ground(&self, image: &ImageRgb8, sentence: &str) -> Result<BBox, BackendError> {
        if sentence.trim().is_empty() {
            return Err(BackendError::Rejected("empty grounding sentence".into()));
        }
        let (w, h) = image.dimensions();
        let fg: Vec<bool> = image.to_gray().iter().map(|&g| g >= self.spec.threshold).collect();
        let components = label_components(&fg, w as usize, h as usize, Connectivity::Eight);
        let largest = components
            .stats
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.area.cmp(&b.area).then(ib.cmp(ia)))
            .map(|(_, s)| s)
            .ok_or(BackendError::NoDetection)?;
        Ok(largest.bbox)
    }
}

impl SegmentationBackend for MockWorld {
    fn segment(
        &self,
        image: &ImageRgb8,
        bbox: BBox,
        points: &[Point2D],
    ) -> Result<BinaryMask, BackendError> {
        let (w, h) = image.dimensions();
        if !bbox.is_valid_for(w, h) {
            return Err(BackendError::Rejected(format!("box {bbox:?} outside image")));
        }
        let gray = image.to_gray();
        let (bw, bh) = (bbox.width() as usize, bbox.height() as usize);
        let sub: Vec<u8> = (bbox.y_min..bbox.y_max)
            .flat_map(|y| (bbox.x_min..bbox.x_max).map(move |x| (x, y)))
            .map(|(x, y)| gray[y as usize * w as usize + x as usize])
            .collect();

        let keep: Vec<bool> = match otsu_threshold(&sub) {
            None => vec![true; sub.len()],
            Some(t) => {
                let fg: Vec<bool> = sub.iter().map(|&v| v > t).collect();
                let comps = label_components(&fg, bw, bh, Connectivity::Four);
                let seeds = std::iter::once(anchor_point(bbox))
                    .chain(points.iter().copied())
                    .filter(|p| bbox.contains(*p) || p.is_inside_image(w, h))
                    .map(|p| {
                        let (x, y) = p.to_pixel(w, h);
                        let x = x.clamp(bbox.x_min, bbox.x_max - 1) - bbox.x_min;
                        let y = y.clamp(bbox.y_min, bbox.y_max - 1) - bbox.y_min;
                        y as usize * bw + x as usize
                    });
                let seeded = seeds
                    .map(|i| comps.labels[i])
                    .filter(|&l| l > 0)
                    .max_by(|&a, &b| comps.area(a).cmp(&comps.area(b)).then(b.cmp(&a)));
                let chosen = seeded.or_else(|| comps.largest());
                match chosen {
                    Some(label) => fill_holes(
                        &comps.labels.iter().map(|&l| l == label).collect::<Vec<_>>(),
                        bw,
                        bh,
                    ),
                    None => vec![false; sub.len()],
                }
            }
        };

        let mut data = vec![false; w as usize * h as usize];
        for (i, &k) in keep.iter().enumerate() {
            if k {
                let x = bbox.x_min as usize + i % bw;
                let y = bbox.y_min as usize + i / bw;
                data[y * w as usize + x] = true;
            }
        }
        Ok(BinaryMask::new(w, h, data).expect("image dimensions"))
    }
}

impl FeatureBackend for MockWorld {
    fn features(&self, image: &ImageRgb8) -> Result<FeatureMap, BackendError> {
        Ok(window_features(image, self.spec.feature_window))
    }
}

impl ScoringBackend for MockWorld {
    fn classify(&self, image: &ImageRgb8, labels: &[String]) -> Result<Vec<f64>, BackendError> {
        if labels.is_empty() {
            return Err(BackendError::Rejected("no labels".into()));
        }
        let fractions: Vec<f64> = labels
            .iter()
            .map(|l| {
                self.spec
                    .class_bands
                    .get(l)
                    .map_or(0.0, |band| Self::band_fraction(image, *band))
            })
            .collect();
        Ok(softmax(&fractions))
    }

    fn match_texts(&self, image: &ImageRgb8, texts: &[String]) -> Result<Vec<f64>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::Rejected("no texts".into()));
        }
        let s = Self::band_fraction(image, self.spec.target_band);
        Ok(vec![s; texts.len()])
    }
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-window descriptor grid with `ceil(h / window) x ceil(w / window)` cells.
pub fn window_features(image: &ImageRgb8, window: u32) -> FeatureMap {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let win = window as usize;
    let (wc, hc) = (w.div_ceil(win), h.div_ceil(win));
    let gray: Vec<f64> = image.pixels().map(luma).collect();
    let mut data = Vec::with_capacity(wc * hc * 6);
    for r in 0..hc {
        for c in 0..wc {
            let (y0, y1) = (r * win, ((r + 1) * win).min(h));
            let (x0, x1) = (c * win, ((c + 1) * win).min(w));
            let mut rgb = [0.0f64; 3];
            let (mut gx, mut ngx, mut gy, mut ngy) = (0.0, 0usize, 0.0, 0usize);
            let (mut sum, mut sum2) = (0.0, 0.0);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.pixel(x as u32, y as u32);
                    for k in 0..3 {
                        rgb[k] += p[k] as f64;
                    }
                    let g = gray[y * w + x];
                    sum += g;
                    sum2 += g * g;
                    if x + 1 < w {
                        gx += (gray[y * w + x + 1] - g).abs();
                        ngx += 1;
                    }
                    if y + 1 < h {
                        gy += (gray[(y + 1) * w + x] - g).abs();
                        ngy += 1;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let mean = sum / n;
            let std = (sum2 / n - mean * mean).max(0.0).sqrt();
            let avg = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
            data.extend([
                rgb[0] / n,
                rgb[1] / n,
                rgb[2] / n,
                avg(gx, ngx),
                avg(gy, ngy),
                std,
            ]
            .map(|v| v as f32));
        }
    }
    FeatureMap::new(hc, wc, 6, data, w as u32, h as u32).expect("well-formed grid")
}

/// Otsu's threshold `t` (foreground is `v > t`); `None` for a constant input.
pub fn otsu_threshold(values: &[u8]) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in values {
        hist[v as usize] += 1;
    }
    let total = values.len() as f64;
    let first = hist.iter().position(|&c| c > 0)?;
    let last = hist.iter().rposition(|&c| c > 0)?;
    if first == last {
        return None;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, first as u8);
    for t in first..last {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentStats {
    pub area: usize,
    pub bbox: BBox,
}

/// Component labelling; label 0 is background, labels follow raster order of
/// each component's first pixel.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    pub stats: Vec<ComponentStats>,
}

impl Components {
    pub fn area(&self, label: u32) -> usize {
        self.stats[label as usize - 1].area
    }

    /// Largest component, lowest label on ties.
    pub fn largest(&self) -> Option<u32> {
        self.stats
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.area.cmp(&b.area).then(ib.cmp(ia)))
            .map(|(i, _)| i as u32 + 1)
    }
}

pub fn label_components(fg: &[bool], w: usize, h: usize, conn: Connectivity) -> Components {
    let mut labels = vec![0u32; fg.len()];
    let mut stats = Vec::new();
    let mut stack = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        let label = stats.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for_each_neighbour(x, y, w, h, conn, |j| {
                if fg[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            });
        }
        stats.push(ComponentStats {
            area,
            bbox: BBox {
                x_min: x0 as u32,
                y_min: y0 as u32,
                x_max: x1 as u32 + 1,
                y_max: y1 as u32 + 1,
            },
        });
    }
    Components { labels, stats }
}

fn for_each_neighbour(x: usize, y: usize, w: usize, h: usize, conn: Connectivity, mut f: impl FnMut(usize)) {
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if (dx == 0 && dy == 0) || (conn == Connectivity::Four && dx != 0 && dy != 0) {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                f(ny as usize * w + nx as usize);
            }
        }
    }
}

/// Marks as foreground every background pixel not 4-connected to the border.
pub fn fill_holes(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut outside = vec![false; mask.len()];
    let mut stack: Vec<usize> = (0..mask.len())
        .filter(|&i| {
            let (x, y) = (i % w, i / w);
            !mask[i] && (x == 0 || y == 0 || x == w - 1 || y == h - 1)
        })
        .collect();
    for &i in &stack {
        outside[i] = true;
    }
    while let Some(i) = stack.pop() {
        for_each_neighbour(i % w, i / w, w, h, Connectivity::Four, |j| {
            if !mask[j] && !outside[j] {
                outside[j] = true;
                stack.push(j);
            }
        });
    }
    outside.iter().map(|&o| !o).collect()
}
