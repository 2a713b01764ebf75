//! Seeded synthetic benchmark living in the mock world.
//!
//! Each 128x128 grey image has a noisy background texture, one uniformly
//! filled target ellipse in the target band (slightly brighter than the
//! background, well below the mock grounding threshold) and one or two
//! uniformly filled dark distractor ellipses. Every grey level is clamped
//! into its class band, so the mock scorer sees a clean closed world.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetManifest, EvalError};
use crate::backends::mock::{SYNTHETIC_DISTRACTOR, SYNTHETIC_TARGET};
use crate::backends::MockWorldSpec;
use crate::io::{save_image, save_mask};
use crate::pipeline::Sample;
use crate::task::{save_task, TaskDefinition, BACKGROUND_CLASS};
use crate::types::{BinaryMask, ImageRgb8};

pub const IMAGE_SIZE: u32 = 128;
pub const BACKGROUND_MEAN: f64 = 120.0;
pub const BACKGROUND_STD: f64 = 8.0;
pub const TARGET_MEAN: f64 = 140.0;
pub const TARGET_STD: f64 = 5.0;
pub const DISTRACTOR_MEAN: f64 = 70.0;
pub const DISTRACTOR_STD: f64 = 5.0;
/// Full axis lengths of the target ellipse, in pixels.
pub const TARGET_AXES: (f64, f64) = (12.0, 30.0);
pub const DISTRACTOR_AXES: (f64, f64) = (10.0, 22.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Full axis lengths.
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = (dx * c + dy * s) / (self.a / 2.0);
        let v = (-dx * s + dy * c) / (self.b / 2.0);
        u * u + v * v <= 1.0
    }

    fn radius(&self) -> f64 {
        self.a.max(self.b) / 2.0
    }

    fn random<R: Rng>(rng: &mut R, axes: (f64, f64), margin: f64) -> Self {
        let a = rng.random_range(axes.0..=axes.1);
        let b = rng.random_range(axes.0..=axes.1);
        let r = a.max(b) / 2.0 + margin;
        let size = IMAGE_SIZE as f64;
        Self {
            cx: rng.random_range(r..size - r),
            cy: rng.random_range(r..size - r),
            a,
            b,
            theta: rng.random_range(0.0..PI),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub sample: Sample,
    pub truth: BinaryMask,
    pub target: Ellipse,
    pub distractors: Vec<Ellipse>,
}

fn draw_clamped<R: Rng>(rng: &mut R, dist: &Normal<f64>, band: (u8, u8)) -> u8 {
    dist.sample(rng).round().clamp(band.0 as f64, band.1 as f64) as u8
}

/// Generates `n` samples; the same `(n, seed, spec)` always yields the same data.
pub fn generate_synthetic_benchmark(n: usize, seed: u64, spec: &MockWorldSpec) -> Vec<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Normal::new(BACKGROUND_MEAN, BACKGROUND_STD).expect("valid normal");
    let target = Normal::new(TARGET_MEAN, TARGET_STD).expect("valid normal");
    let distractor = Normal::new(DISTRACTOR_MEAN, DISTRACTOR_STD).expect("valid normal");
    let distractor_band = spec
        .class_bands
        .get(SYNTHETIC_DISTRACTOR)
        .copied()
        .unwrap_or((1, spec.target_band.0.saturating_sub(1).max(1)));
    let background_band = spec.class_bands.get(BACKGROUND_CLASS).copied().unwrap_or((1, 255));
    let size = IMAGE_SIZE as usize;

    (0..n)
        .map(|i| {
            let t = Ellipse::random(&mut rng, TARGET_AXES, 4.0);
            let n_distractors = rng.random_range(1..=2);
            let mut distractors: Vec<Ellipse> = Vec::with_capacity(n_distractors);
            while distractors.len() < n_distractors {
                let d = Ellipse::random(&mut rng, DISTRACTOR_AXES, 2.0);
                let clear = |o: &Ellipse| ((d.cx - o.cx).powi(2) + (d.cy - o.cy).powi(2)).sqrt() > d.radius() + o.radius() + 4.0;
                if clear(&t) && distractors.iter().all(clear) {
                    distractors.push(d);
                }
            }
            // ellipses are filled with one level each; only the background is textured
            let target_level = draw_clamped(&mut rng, &target, spec.target_band);
            let distractor_levels: Vec<u8> = distractors
                .iter()
                .map(|_| draw_clamped(&mut rng, &distractor, distractor_band))
                .collect();
            let mut gray = vec![0u8; size * size];
            let mut truth = vec![false; size * size];
            for (k, g) in gray.iter_mut().enumerate() {
                let (x, y) = ((k % size) as f64, (k / size) as f64);
                *g = if t.contains(x, y) {
                    truth[k] = true;
                    target_level
                } else if let Some(j) = distractors.iter().position(|d| d.contains(x, y)) {
                    distractor_levels[j]
                } else {
                    draw_clamped(&mut rng, &background, background_band)
                };
            }
            SyntheticSample {
                sample: Sample::new(
                    format!("synth_{i:03}"),
                    ImageRgb8::from_gray(IMAGE_SIZE, IMAGE_SIZE, &gray).expect("square image"),
                ),
                truth: BinaryMask::new(IMAGE_SIZE, IMAGE_SIZE, truth).expect("square mask"),
                target: t,
                distractors,
            }
        })
        .collect()
}

/// Task assets matching the synthetic world.
pub fn synthetic_task() -> TaskDefinition {
    TaskDefinition::new(
        SYNTHETIC_TARGET,
        "synthetic scan",
        vec![
            "Find the bright lesion in the synthetic scan.".into(),
            "Locate the oval region that is brighter than the surrounding tissue.".into(),
            "Where is the bright lesion?".into(),
            "Detect the lesion, a smooth light blob on a textured background.".into(),
        ],
        vec![SYNTHETIC_DISTRACTOR.into(), BACKGROUND_CLASS.into()],
        vec![
            "a bright oval lesion".into(),
            "a smooth light region with a clear boundary".into(),
            "a homogeneous blob brighter than the tissue around it".into(),
        ],
    )
    .expect("valid synthetic task")
}

/// Writes `images/`, `masks/` and the task assets under `out`.
pub fn write_synthetic_benchmark(
    out: impl AsRef<Path>,
    n: usize,
    seed: u64,
    spec: &MockWorldSpec,
) -> Result<DatasetManifest, EvalError> {
    let out = out.as_ref();
    fs::create_dir_all(out.join("images"))?;
    fs::create_dir_all(out.join("masks"))?;
    for s in generate_synthetic_benchmark(n, seed, spec) {
        save_image(&s.sample.image, out.join("images").join(format!("{}.png", s.sample.id)))?;
        save_mask(&s.truth, out.join("masks").join(format!("{}.png", s.sample.id)))?;
    }
    save_task(&synthetic_task(), out)?;
    DatasetManifest::scan(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = MockWorldSpec::default();
        let a = generate_synthetic_benchmark(3, 1, &spec);
        let b = generate_synthetic_benchmark(3, 1, &spec);
        assert_eq!(a, b);
        let c = generate_synthetic_benchmark(3, 2, &spec);
        assert_ne!(a[0].sample.image, c[0].sample.image);
    }

    #[test]
    fn targets_stay_below_grounding_threshold() {
        let spec = MockWorldSpec::default();
        for s in generate_synthetic_benchmark(10, 7, &spec) {
            let gray = s.sample.image.to_gray();
            assert!(gray.iter().all(|&g| g < spec.threshold));
            assert!(s.truth.count() > 0);
            for (g, t) in gray.iter().zip(s.truth.as_slice()) {
                if *t {
                    assert!((spec.target_band.0..=spec.target_band.1).contains(g));
                }
            }
            assert!((1..=2).contains(&s.distractors.len()));
        }
    }

    #[test]
    fn ellipse_membership() {
        let e = Ellipse {
            cx: 10.0,
            cy: 10.0,
            a: 20.0,
            b: 10.0,
            theta: 0.0,
        };
        assert!(e.contains(19.9, 10.0) && !e.contains(10.0, 15.1) && e.contains(10.0, 14.9));
        let r = Ellipse { theta: PI / 2.0, ..e };
        assert!(r.contains(10.0, 19.9) && !r.contains(19.9, 10.0));
    }
}
