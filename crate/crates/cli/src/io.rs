//! Reading and writing the image files the tool consumes and produces.
//!
//! Inputs: 8-bit PGM (P5) and 8-bit PNG, gray or RGB(A); RGB is reduced to
//! luminance `0.299R + 0.587G + 0.114B`. JPEG is accepted only with the
//! `jpeg` feature. Outputs: binary PGM and PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use pvseg_core::synth::GroundTruth;
use pvseg_core::{ImageGray, ImageRgb, LabelMap};

use crate::error::{CliError, Result};

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

/// Loads an image as normalized grayscale in `[0, 1]`.
pub fn load_grayscale(path: &Path) -> Result<ImageGray> {
    let reader = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?;
    if reader.format().is_none() {
        return Err(CliError::format(path, "unrecognized image format"));
    }
    let img = reader
        .decode()
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
        other => {
            return Err(CliError::format(
                path,
                format!(
                    "unsupported pixel format {:?}; only 8-bit images are accepted",
                    other.color()
                ),
            ))
        }
    };
    if w == 0 || h == 0 {
        return Err(CliError::format(path, "image has zero size"));
    }
    Ok(ImageGray::new(w, h, pixels)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn encode_err(path: &Path, e: image::ImageError) -> CliError {
    match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::format(path, other.to_string()),
    }
}

fn check_size(path: &Path, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(CliError::format(
            path,
            "refusing to write a zero-size image",
        ));
    }
    if width > u32::MAX as usize || height > u32::MAX as usize {
        return Err(CliError::format(path, "image too large"));
    }
    Ok(())
}

/// Writes raw 8-bit samples as a binary PGM (`P5`).
pub fn write_pgm_bytes(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    check_size(path, width, height)?;
    let mut out = create(path)?;
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(bytes, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| encode_err(path, e))?;
    finish(path, out)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    bytes: &[u8],
    color: ExtendedColorType,
) -> Result<()> {
    check_size(path, width, height)?;
    let mut out = create(path)?;
    PngEncoder::new(&mut out)
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| encode_err(path, e))?;
    finish(path, out)
}

pub fn save_pgm(image: &ImageGray, path: &Path) -> Result<()> {
    write_pgm_bytes(path, image.width(), image.height(), &image.to_u8())
}

pub fn save_png(image: &ImageGray, path: &Path) -> Result<()> {
    write_png(
        path,
        image.width(),
        image.height(),
        &image.to_u8(),
        ExtendedColorType::L8,
    )
}

pub fn save_rgb_png(image: &ImageRgb, path: &Path) -> Result<()> {
    write_png(
        path,
        image.width(),
        image.height(),
        &image.to_bytes(),
        ExtendedColorType::Rgb8,
    )
}

/// Cluster ids stored directly as 8-bit pixel values.
pub fn save_labels_pgm(labels: &LabelMap, path: &Path) -> Result<()> {
    let bytes = labels
        .ids()
        .iter()
        .map(|&l| u8::try_from(l))
        .collect::<Result<Vec<u8>, _>>()
        .map_err(|_| CliError::format(path, "cluster id does not fit in 8 bits"))?;
    write_pgm_bytes(path, labels.width(), labels.height(), &bytes)
}

/// Reads back a label map written by [`save_labels_pgm`].
pub fn load_labels_pgm(path: &Path) -> Result<LabelMap> {
    let img = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::format(path, e.to_string()))?;
    let DynamicImage::ImageLuma8(buf) = img else {
        return Err(CliError::format(path, "label map must be 8-bit grayscale"));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    Ok(LabelMap::new(
        h,
        w,
        buf.into_raw().into_iter().map(u32::from).collect(),
    )?)
}

/// Ground-truth classes as indices 0..=3.
pub fn save_truth_pgm(truth: &GroundTruth, path: &Path) -> Result<()> {
    write_pgm_bytes(path, truth.width(), truth.height(), &truth.to_indices())
}
