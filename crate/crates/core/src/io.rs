//! PNG ingestion and export for images and masks.
//!
//! Everything entering the pipeline is normalised to 8-bit RGB: grey inputs are
//! replicated to three channels, alpha is dropped, and 16-bit rasters are
//! rescaled by their own maximum value.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use thiserror::Error;

use crate::types::{BinaryMask, ImageRgb8, ShapeError};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode PNG: {0}")]
    Png(#[from] image::ImageError),
    #[error("unsupported pixel layout {0:?}")]
    Unsupported(image::ColorType),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("failed to encode PNG: {0}")]
    Png(#[from] image::ImageError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb8, DecodeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DecodeError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_png(&bytes)
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageRgb8, DecodeError> {
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    to_rgb8(dynamic)
}

fn to_rgb8(dynamic: DynamicImage) -> Result<ImageRgb8, DecodeError> {
    let (w, h) = (dynamic.width(), dynamic.height());
    match dynamic {
        DynamicImage::ImageLuma8(buf) => Ok(ImageRgb8::from_gray(w, h, buf.as_raw())?),
        DynamicImage::ImageLumaA8(buf) => {
            let gray: Vec<u8> = buf.as_raw().chunks_exact(2).map(|c| c[0]).collect();
            Ok(ImageRgb8::from_gray(w, h, &gray)?)
        }
        DynamicImage::ImageRgb8(buf) => Ok(ImageRgb8::new(w, h, buf.into_raw())?),
        DynamicImage::ImageRgba8(buf) => {
            let rgb = buf
                .as_raw()
                .chunks_exact(4)
                .flat_map(|c| [c[0], c[1], c[2]])
                .collect();
            Ok(ImageRgb8::new(w, h, rgb)?)
        }
        DynamicImage::ImageLuma16(buf) => {
            let gray = rescale16(buf.as_raw().iter().copied());
            Ok(ImageRgb8::from_gray(w, h, &gray)?)
        }
        DynamicImage::ImageLumaA16(buf) => {
            let gray = rescale16(buf.as_raw().chunks_exact(2).map(|c| c[0]));
            Ok(ImageRgb8::from_gray(w, h, &gray)?)
        }
        DynamicImage::ImageRgb16(buf) => {
            Ok(ImageRgb8::new(w, h, rescale16(buf.as_raw().iter().copied()))?)
        }
        DynamicImage::ImageRgba16(buf) => {
            let rgb = buf
                .as_raw()
                .chunks_exact(4)
                .flat_map(|c| [c[0], c[1], c[2]]);
            Ok(ImageRgb8::new(w, h, rescale16(rgb))?)
        }
        other => Err(DecodeError::Unsupported(other.color())),
    }
}

/// Max-normalisation: the brightest sample maps to 255.
fn rescale16(samples: impl Iterator<Item = u16> + Clone) -> Vec<u8> {
    let max = samples.clone().max().unwrap_or(0);
    if max == 0 {
        return samples.map(|_| 0).collect();
    }
    let scale = 255.0 / max as f64;
    samples.map(|v| (v as f64 * scale).round() as u8).collect()
}

pub fn encode_png(img: &ImageRgb8) -> Result<Vec<u8>, EncodeError> {
    let buf = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec())
        .expect("ImageRgb8 buffer length is validated at construction");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_image(img: &ImageRgb8, path: impl AsRef<Path>) -> Result<(), EncodeError> {
    write_bytes(path.as_ref(), &encode_png(img)?)
}

/// Masks are written as 8-bit grey PNGs with values 0 and 255.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, EncodeError> {
    let raw = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width(), mask.height(), raw)
        .expect("BinaryMask buffer length is validated at construction");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Any non-zero grey level counts as foreground, so both 0/1 and 0/255 masks load.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, DecodeError> {
    let img = decode_png(bytes)?;
    let data = img.pixels().map(|p| p.iter().any(|&c| c > 0)).collect();
    Ok(BinaryMask::new(img.width(), img.height(), data)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, DecodeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DecodeError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_mask_png(&bytes)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), EncodeError> {
    write_bytes(path.as_ref(), &encode_mask_png(mask)?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), EncodeError> {
    std::fs::write(path, bytes).map_err(|source| EncodeError::Io {
        path: path.to_owned(),
        source,
    })
}
