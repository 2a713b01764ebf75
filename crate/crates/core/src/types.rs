//! Raster and geometry primitives shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    BufferLength {
        width: u32,
        height: u32,
        channels: u32,
        actual: usize,
    },
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max}) for {width}x{height} image")]
    InvalidBox {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
        width: u32,
        height: u32,
    },
}

/// 8-bit interleaved RGB image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRgb8 {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageRgb8 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageRgb8")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageRgb8 {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ShapeError> {
        if width == 0 || height == 0 {
            return Err(ShapeError::EmptyImage { width, height });
        }
        if data.len() != width as usize * height as usize * 3 {
            return Err(ShapeError::BufferLength {
                width,
                height,
                channels: 3,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single colour.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ShapeError> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, data)
    }

    /// Replicates a single-channel buffer into three identical channels.
    pub fn from_gray(width: u32, height: u32, gray: &[u8]) -> Result<Self, ShapeError> {
        if gray.len() != width as usize * height as usize {
            return Err(ShapeError::BufferLength {
                width,
                height,
                channels: 1,
                actual: gray.len(),
            });
        }
        let data = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Builds a new image of the same size by mapping every pixel.
    pub fn map_pixels(&self, mut f: impl FnMut([u8; 3]) -> [u8; 3]) -> Self {
        let data = self.pixels().flat_map(&mut f).collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// BT.601 luma, rounded to the nearest grey level.
    pub fn to_gray(&self) -> Vec<u8> {
        self.pixels().map(luma8).collect()
    }
}

/// BT.601 luma of one pixel in floating point.
pub fn luma(rgb: [u8; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

pub fn luma8(rgb: [u8; 3]) -> u8 {
    luma(rgb).round().clamp(0.0, 255.0) as u8
}

/// Row-major binary mask, `true` marks foreground.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("foreground", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, ShapeError> {
        if width == 0 || height == 0 {
            return Err(ShapeError::EmptyImage { width, height });
        }
        if data.len() != width as usize * height as usize {
            return Err(ShapeError::BufferLength {
                width,
                height,
                channels: 1,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, ShapeError> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn full(width: u32, height: u32) -> Result<Self, ShapeError> {
        Self::new(width, height, vec![true; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Result<Self, ShapeError> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn ensure_same_size(&self, width: u32, height: u32) -> Result<(), ShapeError> {
        if (self.width, self.height) != (width, height) {
            return Err(ShapeError::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: width,
                b_height: height,
            });
        }
        Ok(())
    }

    /// Tight half-open bounding box of the foreground, `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<BBox> {
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = bounds.get_or_insert((x, y, x, y));
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| BBox {
            x_min: x0,
            y_min: y0,
            x_max: x1 + 1,
            y_max: y1 + 1,
        })
    }
}

/// Axis-aligned box with half-open max edges, so `width = x_max - x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    /// Validated constructor against the owning image size.
    pub fn new(
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
        width: u32,
        height: u32,
    ) -> Result<Self, ShapeError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid_for(width, height) {
            Ok(b)
        } else {
            Err(ShapeError::InvalidBox {
                x_min,
                y_min,
                x_max,
                y_max,
                width,
                height,
            })
        }
    }

    pub fn is_valid_for(&self, width: u32, height: u32) -> bool {
        self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.x_max <= width
            && self.y_max <= height
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// Whether a continuous point lies inside `[x_min, x_max) x [y_min, y_max)`.
    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.x_min as f64
            && p.x < self.x_max as f64
            && p.y >= self.y_min as f64
            && p.y < self.y_max as f64
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Continuous pixel coordinate; integer values address pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_inside_image(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x <= width as f64 && self.y <= height as f64
    }

    pub fn dist2(&self, other: &Point2D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Nearest pixel, clamped to the image.
    pub fn to_pixel(&self, width: u32, height: u32) -> (u32, u32) {
        let x = (self.x.round().max(0.0) as u32).min(width - 1);
        let y = (self.y.round().max(0.0) as u32).min(height - 1);
        (x, y)
    }
}
