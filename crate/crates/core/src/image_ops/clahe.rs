//! Contrast limited adaptive histogram equalisation on luma.
//!
//! Colour images are equalised through their BT.601 luma only: every channel
//! receives the same luma offset, which leaves both chroma differences intact.

use crate::types::{luma, ImageRgb8};

const BINS: usize = 256;

/// Clip values at or below this are treated as "CLAHE disabled".
pub const CLIP_DISABLED_BELOW: f64 = 1e-9;

pub fn clahe(img: &ImageRgb8, clip: f64, grid: u32) -> ImageRgb8 {
    if clip <= CLIP_DISABLED_BELOW {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let lum: Vec<f64> = img.pixels().map(luma).collect();
    let bins: Vec<usize> = lum.iter().map(|&y| luma_bin(y)).collect();

    let xs = TileAxis::new(w, grid);
    let ys = TileAxis::new(h, grid);
    let mut luts = Vec::with_capacity(xs.count() * ys.count());
    for ty in 0..ys.count() {
        for tx in 0..xs.count() {
            let mut hist = [0.0f64; BINS];
            for y in ys.edges[ty]..ys.edges[ty + 1] {
                let row = y as usize * w as usize;
                for x in xs.edges[tx]..xs.edges[tx + 1] {
                    hist[bins[row + x as usize]] += 1.0;
                }
            }
            let pixels = ((xs.edges[tx + 1] - xs.edges[tx]) * (ys.edges[ty + 1] - ys.edges[ty])) as f64;
            clip_histogram(&mut hist, clip_limit(clip, pixels));
            luts.push(equalisation_lut(&hist, pixels));
        }
    }

    let mut out = Vec::with_capacity(img.as_raw().len());
    for y in 0..h {
        let (ty0, ty1, fy) = ys.locate(y);
        for x in 0..w {
            let (tx0, tx1, fx) = xs.locate(x);
            let i = y as usize * w as usize + x as usize;
            let bin = bins[i];
            let lut = |tx: usize, ty: usize| luts[ty * xs.count() + tx][bin];
            let top = lut(tx0, ty0) * (1.0 - fx) + lut(tx1, ty0) * fx;
            let bottom = lut(tx0, ty1) * (1.0 - fx) + lut(tx1, ty1) * fx;
            let mapped = top * (1.0 - fy) + bottom * fy;
            let delta = mapped - lum[i];
            let p = img.pixel(x, y);
            out.extend(p.map(|c| (c as f64 + delta).round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageRgb8::new(w, h, out).expect("same dimensions as input")
}

pub(crate) fn luma_bin(y: f64) -> usize {
    y.round().clamp(0.0, 255.0) as usize
}

/// Per-bin ceiling for a tile of `pixels` pixels.
pub fn clip_limit(clip: f64, pixels: f64) -> f64 {
    clip * pixels / BINS as f64
}

/// Clips every bin at `limit` and spreads the excess evenly over all bins.
/// Returns the amount added to each bin.
pub fn clip_histogram(hist: &mut [f64; BINS], limit: f64) -> f64 {
    let mut excess = 0.0;
    for count in hist.iter_mut() {
        if *count > limit {
            excess += *count - limit;
            *count = limit;
        }
    }
    let share = excess / BINS as f64;
    for count in hist.iter_mut() {
        *count += share;
    }
    share
}

/// Maps grey level `v` to `255 * cdf(v) / pixels`.
fn equalisation_lut(hist: &[f64; BINS], pixels: f64) -> [f64; BINS] {
    let mut lut = [0.0; BINS];
    let mut acc = 0.0;
    for (v, count) in hist.iter().enumerate() {
        acc += count;
        lut[v] = 255.0 * acc / pixels;
    }
    lut
}

/// Tile partition along one axis, with tile centres for interpolation.
struct TileAxis {
    edges: Vec<u32>,
    centers: Vec<f64>,
}

impl TileAxis {
    fn new(len: u32, grid: u32) -> Self {
        let n = grid.clamp(1, len);
        let edges: Vec<u32> = (0..=n)
            .map(|i| (i as u64 * len as u64 / n as u64) as u32)
            .collect();
        let centers = edges
            .windows(2)
            .map(|e| (e[0] + e[1]) as f64 / 2.0 - 0.5)
            .collect();
        Self { edges, centers }
    }

    fn count(&self) -> usize {
        self.centers.len()
    }

    /// Neighbouring tiles and interpolation weight toward the second one.
    fn locate(&self, pos: u32) -> (usize, usize, f64) {
        let p = pos as f64;
        let last = self.count() - 1;
        if p <= self.centers[0] {
            return (0, 0, 0.0);
        }
        if p >= self.centers[last] {
            return (last, last, 0.0);
        }
        let i = self.centers.partition_point(|&c| c <= p) - 1;
        let f = (p - self.centers[i]) / (self.centers[i + 1] - self.centers[i]);
        (i, i + 1, f)
    }
}
