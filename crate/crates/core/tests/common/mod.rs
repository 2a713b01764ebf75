//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use automiseg::prompt_boost::FeatureMap;
use automiseg::search_space::{Configuration, ParamSpec, ParamValue, SearchSpace};
use automiseg::types::{BBox, ImageRgb8, Point2D};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(w: u32, h: u32, seed: u64) -> ImageRgb8 {
    let mut data = vec![0u8; (w * h * 3) as usize];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut data);
    ImageRgb8::new(w, h, data).unwrap()
}

/// Smooth-ish image: a random gradient plus noise, so CLAHE has real work to do.
pub fn textured_image(w: u32, h: u32, seed: u64) -> ImageRgb8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ax, ay, base) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(40.0..200.0));
    let noise = rng.random_range(0.0..40.0);
    let tint: [f64; 3] = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let v = base + ax * x as f64 + ay * y as f64 + rng.random_range(-noise..=noise);
            for t in tint {
                data.push((v + t).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb8::new(w, h, data).unwrap()
}

// ---------------------------------------------------------------------------
// CLAHE reference
// ---------------------------------------------------------------------------

/// Straight per-pixel CLAHE: each tile gets its own clipped equalisation
/// curve and every pixel blends the curves of the (up to) four tiles whose
/// centres surround it. The luma change is added to every channel.
pub fn clahe_reference(img: &ImageRgb8, clip: f64, grid: u32) -> ImageRgb8 {
    if clip <= 1e-9 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let nx = grid.min(w).max(1) as usize;
    let ny = grid.min(h).max(1) as usize;
    let edge = |i: usize, len: u32, n: usize| (i as u64 * len as u64 / n as u64) as u32;
    let y_of = |p: [u8; 3]| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
    let bin_of = |p: [u8; 3]| y_of(p).round().clamp(0.0, 255.0) as usize;

    // curves[ty][tx][v]
    let mut curves = vec![vec![vec![0.0f64; 256]; nx]; ny];
    for (ty, row) in curves.iter_mut().enumerate() {
        for (tx, curve) in row.iter_mut().enumerate() {
            let (x0, x1) = (edge(tx, w, nx), edge(tx + 1, w, nx));
            let (y0, y1) = (edge(ty, h, ny), edge(ty + 1, h, ny));
            let pixels = ((x1 - x0) * (y1 - y0)) as f64;
            let mut hist = vec![0.0f64; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.pixel(x, y))] += 1.0;
                }
            }
            let limit = clip * pixels / 256.0;
            let excess: f64 = hist.iter().map(|&c| (c - limit).max(0.0)).sum();
            for v in 0..256 {
                let clipped = hist[v].min(limit) + excess / 256.0;
                let below: f64 = if v == 0 { 0.0 } else { curve[v - 1] * pixels / 255.0 };
                curve[v] = 255.0 * (below + clipped) / pixels;
            }
        }
    }

    let centre = |i: usize, len: u32, n: usize| (edge(i, len, n) + edge(i + 1, len, n)) as f64 / 2.0 - 0.5;
    // tile pair and weight of the second tile along one axis
    let blend = |p: f64, len: u32, n: usize| -> (usize, usize, f64) {
        if p <= centre(0, len, n) {
            return (0, 0, 0.0);
        }
        if p >= centre(n - 1, len, n) {
            return (n - 1, n - 1, 0.0);
        }
        let mut i = 0;
        while centre(i + 1, len, n) <= p {
            i += 1;
        }
        let (c0, c1) = (centre(i, len, n), centre(i + 1, len, n));
        (i, i + 1, (p - c0) / (c1 - c0))
    };

    let mut out = Vec::with_capacity(img.as_raw().len());
    for y in 0..h {
        let (ty0, ty1, wy) = blend(y as f64, h, ny);
        for x in 0..w {
            let (tx0, tx1, wx) = blend(x as f64, w, nx);
            let p = img.pixel(x, y);
            let b = bin_of(p);
            let mapped = (1.0 - wy) * ((1.0 - wx) * curves[ty0][tx0][b] + wx * curves[ty0][tx1][b])
                + wy * ((1.0 - wx) * curves[ty1][tx0][b] + wx * curves[ty1][tx1][b]);
            let delta = mapped - y_of(p);
            for c in p {
                out.push((c as f64 + delta).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb8::new(w, h, out).unwrap()
}

// ---------------------------------------------------------------------------
// Unsharp reference: full 2D convolution with replicated borders
// ---------------------------------------------------------------------------

pub fn unsharp_reference(img: &ImageRgb8, strength: f64, sigma: f64, radius: i64) -> ImageRgb8 {
    if strength == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut k2 = Vec::new();
    let mut total = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let g = (-((dx * dx) as f64) / (2.0 * sigma * sigma)).exp() * (-((dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            k2.push((dx, dy, g));
            total += g;
        }
    }
    let mut out = Vec::with_capacity(img.as_raw().len());
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x as u32, y as u32);
            for c in 0..3 {
                let mut blur = 0.0;
                for &(dx, dy, g) in &k2 {
                    let sx = (x + dx).clamp(0, w - 1) as u32;
                    let sy = (y + dy).clamp(0, h - 1) as u32;
                    blur += g / total * img.pixel(sx, sy)[c] as f64;
                }
                let v = p[c] as f64;
                out.push((v + strength * (v - blur)).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb8::new(w as u32, h as u32, out).unwrap()
}

// ---------------------------------------------------------------------------
// Prompt boosting references
// ---------------------------------------------------------------------------

pub fn random_feature_map(rng: &mut ChaCha8Rng) -> FeatureMap {
    let hc = rng.random_range(1..=12usize);
    let wc = rng.random_range(1..=12usize);
    let d = rng.random_range(1..=8usize);
    let img_w = rng.random_range(wc as u32..=96);
    let img_h = rng.random_range(hc as u32..=96);
    // a coarse value lattice produces exact ties now and then
    let coarse = rng.random_bool(0.3);
    let data = (0..hc * wc * d)
        .map(|_| {
            if coarse {
                rng.random_range(-2..=2) as f32
            } else {
                rng.random_range(-1.0f32..1.0)
            }
        })
        .collect();
    FeatureMap::new(hc, wc, d, data, img_w, img_h).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    let x0 = rng.random_range(0..w);
    let y0 = rng.random_range(0..h);
    let x1 = rng.random_range(x0 + 1..=w);
    let y1 = rng.random_range(y0 + 1..=h);
    BBox::new(x0, y0, x1, y1, w, h).unwrap()
}

/// Pixel coordinate of a cell centre, written from the grid definition.
pub fn cell_centre_px(row: usize, col: usize, fm: &FeatureMap) -> (f64, f64) {
    let (iw, ih) = fm.image_size();
    let sx = iw as f64 / fm.width_cells() as f64;
    let sy = ih as f64 / fm.height_cells() as f64;
    (sx * (col as f64 + 0.5) - 0.5, sy * (row as f64 + 0.5) - 0.5)
}

fn cosine(a: &[f64], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * *y as f64).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| (*y as f64) * (*y as f64)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Scores every cell, keeps in-box centres other than the anchor's own cell,
/// then sorts by similarity (descending) with row-major index breaking ties.
/// `None` when no centre falls inside the box.
pub fn topk_reference(fm: &FeatureMap, anchor_feat: &[f64], bbox: BBox, k: usize) -> Option<Vec<((f64, f64), f64)>> {
    let (iw, ih) = fm.image_size();
    let ax = (bbox.x_min as f64 + bbox.x_max as f64) / 2.0;
    let ay = (bbox.y_min as f64 + bbox.y_max as f64) / 2.0;
    // nearest cell centre to the anchor is the cell containing it
    let acol = (((ax + 0.5) * fm.width_cells() as f64 / iw as f64).floor().max(0.0) as usize).min(fm.width_cells() - 1);
    let arow = (((ay + 0.5) * fm.height_cells() as f64 / ih as f64).floor().max(0.0) as usize).min(fm.height_cells() - 1);

    let mut all = Vec::new();
    let mut inside = 0;
    for row in 0..fm.height_cells() {
        for col in 0..fm.width_cells() {
            let (cx, cy) = cell_centre_px(row, col, fm);
            let in_box = cx >= bbox.x_min as f64 && cx < bbox.x_max as f64 && cy >= bbox.y_min as f64 && cy < bbox.y_max as f64;
            if !in_box {
                continue;
            }
            inside += 1;
            if (row, col) != (arow, acol) {
                all.push((row * fm.width_cells() + col, (cx, cy), cosine(anchor_feat, fm.cell(row, col))));
            }
        }
    }
    if inside == 0 {
        return None;
    }
    all.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    Some(all.into_iter().take(k).map(|(_, p, s)| (p, s)).collect())
}

/// Four-term bilinear blend of the cells around `p`, clamped at the borders.
pub fn bilinear_reference(fm: &FeatureMap, p: Point2D) -> Vec<f64> {
    let (iw, ih) = fm.image_size();
    let (wc, hc) = (fm.width_cells() as f64, fm.height_cells() as f64);
    let gx = ((p.x + 0.5) * wc / iw as f64 - 0.5).max(0.0).min(wc - 1.0);
    let gy = ((p.y + 0.5) * hc / ih as f64 - 0.5).max(0.0).min(hc - 1.0);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (x1, y1) = ((x0 + 1.0).min(wc - 1.0), (y0 + 1.0).min(hc - 1.0));
    let (tx, ty) = (gx - x0, gy - y0);
    let at = |r: f64, c: f64, k: usize| fm.cell(r as usize, c as usize)[k] as f64;
    (0..fm.dim())
        .map(|k| {
            at(y0, x0, k) * (1.0 - tx) * (1.0 - ty)
                + at(y0, x1, k) * tx * (1.0 - ty)
                + at(y1, x0, k) * (1.0 - tx) * ty
                + at(y1, x1, k) * tx * ty
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Optimiser benchmarks (all maximised)
// ---------------------------------------------------------------------------

pub struct Benchmark {
    pub name: &'static str,
    pub space: SearchSpace,
    pub objective: fn(&Configuration) -> f64,
}

fn f(c: &Configuration, n: &str) -> f64 {
    c.get_f64(n).unwrap()
}

fn choice(c: &Configuration, n: &str) -> i64 {
    match c.get(n).unwrap() {
        ParamValue::Int(i) => i,
        v => panic!("categorical stored as {v:?}"),
    }
}

fn quadratic_bowl(c: &Configuration) -> f64 {
    let n = c.get_i64("n").unwrap() as f64;
    -((f(c, "x") - 1.5).powi(2) + (f(c, "y") + 2.0).powi(2) + ((n - 13.0) / 4.0).powi(2))
}

fn categorical_gated(c: &Configuration) -> f64 {
    let x = f(c, "x");
    let k = c.get_i64("k").unwrap() as f64;
    match choice(c, "kind") {
        2 => 1.0 - 4.0 * (x - 0.7).powi(2) - (k - 3.0).abs() / 10.0,
        0 => 0.5 - (x - 0.2).powi(2),
        _ => 0.2 * x,
    }
}

fn shifted_optimum(c: &Configuration) -> f64 {
    let mut v = 0.0;
    for name in ["u0", "u1", "u2", "u3"] {
        v -= (f(c, name) - 0.93).powi(2);
    }
    v -= 0.1 * (c.get_i64("level").unwrap() as f64 - 4.0).powi(2);
    if choice(c, "mode") == 2 {
        v += 0.3;
    }
    v
}

pub fn benchmarks() -> Vec<Benchmark> {
    let cats = |n: usize| (0..n).map(|i| format!("c{i}")).collect::<Vec<_>>();
    vec![
        Benchmark {
            name: "quadratic_bowl",
            space: SearchSpace::new(vec![
                ParamSpec::float("x", -5.0, 5.0).unwrap(),
                ParamSpec::float("y", -5.0, 5.0).unwrap(),
                ParamSpec::integer("n", 0, 20).unwrap(),
            ])
            .unwrap(),
            objective: quadratic_bowl,
        },
        Benchmark {
            name: "categorical_gated",
            space: SearchSpace::new(vec![
                ParamSpec::categorical("kind", cats(4)).unwrap(),
                ParamSpec::float("x", 0.0, 1.0).unwrap(),
                ParamSpec::integer("k", 0, 10).unwrap(),
            ])
            .unwrap(),
            objective: categorical_gated,
        },
        Benchmark {
            name: "shifted_optimum",
            space: SearchSpace::new(vec![
                ParamSpec::float("u0", 0.0, 1.0).unwrap(),
                ParamSpec::float("u1", 0.0, 1.0).unwrap(),
                ParamSpec::float("u2", 0.0, 1.0).unwrap(),
                ParamSpec::float("u3", 0.0, 1.0).unwrap(),
                ParamSpec::integer("level", 1, 4).unwrap(),
                ParamSpec::categorical("mode", cats(3)).unwrap(),
            ])
            .unwrap(),
            objective: shifted_optimum,
        },
    ]
}

/// Best objective of `n` uniform draws.
pub fn random_search_best(space: &SearchSpace, objective: fn(&Configuration) -> f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    (0..n).map(|_| objective(&space.sample_uniform(&mut rng))).fold(f64::NEG_INFINITY, f64::max)
}

/// `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k);
    }
    p / 2f64.powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
