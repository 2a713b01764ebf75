//! Deterministic input-side image transforms and their fixed-order chain.
//!
//! All operators are pure, preserve dimensions and keep values in `0..=255`.

mod clahe;
mod color;
mod unsharp;

pub use clahe::{clahe, clip_histogram, clip_limit, CLIP_DISABLED_BELOW};
pub use color::{hsv_shift, hsv_to_rgb, rgb_shift, rgb_to_hsv};
pub use unsharp::{gaussian_blur, gaussian_kernel, unsharp_mask, BLUR_RADIUS, BLUR_SIGMA};

use serde::{Deserialize, Serialize};

use crate::search_space::{ConfigError, Configuration};
use crate::types::ImageRgb8;

/// One transform block of an adaptor configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub hsv_hue_shift: i32,
    pub hsv_sat_shift: i32,
    pub hsv_val_shift: i32,
    pub r_shift: i32,
    pub g_shift: i32,
    pub b_shift: i32,
    pub clahe_clip: f64,
    pub clahe_grid: u32,
    pub edge_strength: f64,
}

impl Default for TransformParams {
    /// The identity block.
    fn default() -> Self {
        Self {
            hsv_hue_shift: 0,
            hsv_sat_shift: 0,
            hsv_val_shift: 0,
            r_shift: 0,
            g_shift: 0,
            b_shift: 0,
            clahe_clip: 0.0,
            clahe_grid: 1,
            edge_strength: 0.0,
        }
    }
}

impl TransformParams {
    /// Reads the block whose parameter names start with `prefix`.
    pub fn from_config(config: &Configuration, prefix: &str) -> Result<Self, ConfigError> {
        let int = |name: &str| -> Result<i64, ConfigError> {
            let key = format!("{prefix}{name}");
            match config.get(&key) {
                None => Err(ConfigError::Missing(key)),
                Some(_) => config.get_i64(&key).ok_or(ConfigError::KindMismatch {
                    name: key,
                    expected: "integer",
                }),
            }
        };
        let float = |name: &str| -> Result<f64, ConfigError> {
            let key = format!("{prefix}{name}");
            config.get_f64(&key).ok_or(ConfigError::Missing(key))
        };
        let p = Self {
            hsv_hue_shift: int("hsv_hue_shift")? as i32,
            hsv_sat_shift: int("hsv_sat_shift")? as i32,
            hsv_val_shift: int("hsv_val_shift")? as i32,
            r_shift: int("r_shift")? as i32,
            g_shift: int("g_shift")? as i32,
            b_shift: int("b_shift")? as i32,
            clahe_clip: float("clahe_clip")?,
            clahe_grid: int("clahe_grid")? as u32,
            edge_strength: float("edge_strength")?,
        };
        p.validate(prefix)?;
        Ok(p)
    }

    fn validate(&self, prefix: &str) -> Result<(), ConfigError> {
        let check = |name: &str, ok: bool, value: String| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfBounds {
                    name: format!("{prefix}{name}"),
                    value,
                })
            }
        };
        let int_in = |v: i32, hi: i32| (0..=hi).contains(&v);
        check("hsv_hue_shift", int_in(self.hsv_hue_shift, 20), self.hsv_hue_shift.to_string())?;
        check("hsv_sat_shift", int_in(self.hsv_sat_shift, 30), self.hsv_sat_shift.to_string())?;
        check("hsv_val_shift", int_in(self.hsv_val_shift, 30), self.hsv_val_shift.to_string())?;
        check("r_shift", int_in(self.r_shift, 20), self.r_shift.to_string())?;
        check("g_shift", int_in(self.g_shift, 20), self.g_shift.to_string())?;
        check("b_shift", int_in(self.b_shift, 20), self.b_shift.to_string())?;
        check(
            "clahe_clip",
            (0.0..=4.0).contains(&self.clahe_clip),
            self.clahe_clip.to_string(),
        )?;
        check("clahe_grid", (1..=4).contains(&self.clahe_grid), self.clahe_grid.to_string())?;
        check(
            "edge_strength",
            (0.0..=1.0).contains(&self.edge_strength),
            self.edge_strength.to_string(),
        )
    }
}

/// HSV shift, then RGB shift, then CLAHE, then unsharp masking.
pub fn apply_transform_chain(img: &ImageRgb8, p: &TransformParams) -> ImageRgb8 {
    let img = hsv_shift(img, p.hsv_hue_shift, p.hsv_sat_shift, p.hsv_val_shift);
    let img = rgb_shift(&img, p.r_shift, p.g_shift, p.b_shift);
    let img = clahe(&img, p.clahe_clip, p.clahe_grid);
    unsharp_mask(&img, p.edge_strength)
}
