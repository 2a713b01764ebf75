use crate::types::ImageRgb8;

/// RGB to HSV with `h` in degrees `[0, 360)` and `s`, `v` on the 0..=255 scale.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max * 255.0 } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h.rem_euclid(360.0), s, v)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let chroma = v * (s / 255.0);
    let sector = h.rem_euclid(360.0) / 60.0;
    let x = chroma * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = v - chroma;
    [r, g, b].map(|c| (c + m).round().clamp(0.0, 255.0) as u8)
}

/// Rotates hue by `2 * hue` degrees and raises saturation and value by `sat`
/// and `val` (clamped to 255). All-zero offsets return the input untouched.
pub fn hsv_shift(img: &ImageRgb8, hue: i32, sat: i32, val: i32) -> ImageRgb8 {
    if hue == 0 && sat == 0 && val == 0 {
        return img.clone();
    }
    let dh = 2.0 * hue as f64;
    img.map_pixels(|p| {
        let (h, s, v) = rgb_to_hsv(p);
        hsv_to_rgb(
            (h + dh).rem_euclid(360.0),
            (s + sat as f64).clamp(0.0, 255.0),
            (v + val as f64).clamp(0.0, 255.0),
        )
    })
}

/// Adds a per-channel offset with saturation at 0 and 255.
pub fn rgb_shift(img: &ImageRgb8, r: i32, g: i32, b: i32) -> ImageRgb8 {
    if r == 0 && g == 0 && b == 0 {
        return img.clone();
    }
    let shift = [r, g, b];
    img.map_pixels(|p| std::array::from_fn(|c| (p[c] as i32 + shift[c]).clamp(0, 255) as u8))
}
