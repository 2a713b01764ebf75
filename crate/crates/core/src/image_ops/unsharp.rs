use crate::types::ImageRgb8;

pub const BLUR_SIGMA: f64 = 2.0;
pub const BLUR_RADIUS: usize = 5;

/// Normalised 1D Gaussian taps, length `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with edge replication, per channel, in f64.
pub fn gaussian_blur(img: &ImageRgb8, sigma: f64, radius: usize) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma, radius);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.as_raw();
    let r = radius as isize;

    let mut horizontal = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, tap) in kernel.iter().enumerate() {
                    let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += tap * src[(y * w + sx) * 3 + c] as f64;
                }
                horizontal[(y * w + x) * 3 + c] = acc;
            }
        }
    }

    let mut out = vec![0.0; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, tap) in kernel.iter().enumerate() {
                    let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += tap * horizontal[(sy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    out
}

/// `in + strength * (in - blur(in))`, rounded and clamped per channel.
pub fn unsharp_mask(img: &ImageRgb8, strength: f64) -> ImageRgb8 {
    if strength == 0.0 {
        return img.clone();
    }
    let blurred = gaussian_blur(img, BLUR_SIGMA, BLUR_RADIUS);
    let data = img
        .as_raw()
        .iter()
        .zip(&blurred)
        .map(|(&v, &b)| {
            let v = v as f64;
            (v + strength * (v - b)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageRgb8::new(img.width(), img.height(), data).expect("same dimensions as input")
}
