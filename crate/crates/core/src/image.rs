//! In-memory grayscale/RGB images and the pure transforms around them:
//! intensity histogram, label colouring and cluster-mean gray rendering.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::net::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::shape("ImageGray::new", width * height, pixels.len()));
        }
        if let Some(&v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::PixelRange(v));
        }
        Ok(ImageGray {
            width,
            height,
            pixels,
        })
    }

    /// From 8-bit samples, `v / 255`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// `round(p·255)` per pixel.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }

    /// `1 − p` per pixel.
    pub fn inverted(&self) -> Self {
        ImageGray {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| 1.0 - p).collect(),
        }
    }

    /// The `1 × H × W` network input.
    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::EmptyImage);
        }
        Tensor::from_vec(1, self.height, self.width, self.pixels.clone())
    }
}

#[inline]
fn quantize(p: f64) -> u8 {
    math::round(p.clamp(0.0, 1.0) * 255.0) as u8
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageRgb {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// Bin `b` counts pixels with `round(p·255) == b`.
pub fn histogram(image: &ImageGray) -> [u64; 256] {
    let mut bins = [0u64; 256];
    for &p in &image.pixels {
        bins[quantize(p) as usize] += 1;
    }
    bins
}

/// Colour `index` of a `q_max`-entry palette: hues evenly spaced around the
/// wheel at full saturation and value, starting from red.
pub fn palette_color(index: usize, q_max: usize) -> [u8; 3] {
    let h = 6.0 * index as f64 / q_max.max(1) as f64;
    let sector = math::floor(h);
    let f = h - sector;
    let up = quantize(f);
    let down = quantize(1.0 - f);
    match sector as usize % 6 {
        0 => [255, up, 0],
        1 => [down, 255, 0],
        2 => [0, 255, up],
        3 => [0, down, 255],
        4 => [up, 0, 255],
        _ => [255, 0, down],
    }
}

/// Renders each cluster id in its palette colour.
pub fn colorize(labels: &LabelMap, q_max: usize) -> Result<ImageRgb> {
    if let Some(bad) = labels.max_id().filter(|&m| m as usize >= q_max) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            channels: q_max,
        });
    }
    let palette: Vec<[u8; 3]> = (0..q_max).map(|i| palette_color(i, q_max)).collect();
    Ok(ImageRgb {
        width: labels.width(),
        height: labels.height(),
        pixels: labels.ids().iter().map(|&l| palette[l as usize]).collect(),
    })
}

/// Paints every cluster at the mean source intensity of its pixels, so hot
/// regions stay bright.
pub fn labels_to_gray(labels: &LabelMap, source: &ImageGray) -> Result<ImageGray> {
    if labels.width() != source.width || labels.height() != source.height {
        return Err(Error::shape(
            "labels_to_gray",
            format_args!("{}×{} labels", source.height, source.width),
            format_args!("{}×{}", labels.height(), labels.width()),
        ));
    }
    let k = labels.max_id().map_or(0, |m| m as usize + 1);
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (&l, &p) in labels.ids().iter().zip(&source.pixels) {
        sum[l as usize] += p;
        count[l as usize] += 1;
    }
    let mean: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| {
            if c == 0 {
                0.0
            } else {
                (s / c as f64).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(ImageGray {
        width: source.width,
        height: source.height,
        pixels: labels.ids().iter().map(|&l| mean[l as usize]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::count_unique;

    #[test]
    fn histogram_cases() {
        let black = ImageGray::new(2, 2, vec![0.0; 4]).unwrap();
        let h = histogram(&black);
        assert_eq!(h[0], 4);
        assert_eq!(h.iter().sum::<u64>(), 4);

        let split = ImageGray::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let h = histogram(&split);
        assert_eq!((h[0], h[255]), (2, 2));
    }

    #[test]
    fn normalization_of_bytes() {
        let img = ImageGray::from_u8(3, 1, &[0, 128, 255]).unwrap();
        assert_eq!(img.pixels()[0], 0.0);
        assert!((img.pixels()[1] - 0.501_960_784).abs() < 1e-8);
        assert_eq!(img.pixels()[2], 1.0);
        assert_eq!(img.to_u8(), vec![0, 128, 255]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            ImageGray::new(1, 1, vec![1.5]),
            Err(Error::PixelRange(_))
        ));
        assert!(ImageGray::new(2, 1, vec![0.5]).is_err());
        assert!(matches!(
            ImageGray::new(0, 0, vec![]).unwrap().to_tensor(),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn palette_is_injective() {
        for q in (1..=64).chain([255, 256]) {
            let mut colors: Vec<[u8; 3]> = (0..q).map(|i| palette_color(i, q)).collect();
            colors.sort_unstable();
            colors.dedup();
            assert_eq!(colors.len(), q, "q_max = {q}");
        }
        assert_eq!(palette_color(0, 18), [255, 0, 0]);
    }

    #[test]
    fn colorize_follows_labels() {
        let labels = LabelMap::new(2, 2, vec![3, 3, 0, 17]).unwrap();
        let rgb = colorize(&labels, 18).unwrap();
        assert_eq!((rgb.width(), rgb.height()), (2, 2));
        assert_eq!(rgb.get(0, 0), rgb.get(1, 0));
        assert_ne!(rgb.get(0, 1), rgb.get(1, 1));
        assert_ne!(rgb.get(0, 0), rgb.get(0, 1));
        assert!(colorize(&labels, 17).is_err());
    }

    #[test]
    fn cluster_means() {
        let src = ImageGray::new(2, 2, vec![0.5; 4]).unwrap();
        let one = LabelMap::new(2, 2, vec![7; 4]).unwrap();
        assert_eq!(labels_to_gray(&one, &src).unwrap().pixels(), &[0.5; 4]);

        let src = ImageGray::new(4, 1, vec![0.1, 0.3, 0.8, 1.0]).unwrap();
        let two = LabelMap::new(1, 4, vec![0, 0, 2, 2]).unwrap();
        let g = labels_to_gray(&two, &src).unwrap();
        let mut levels: Vec<f64> = g.pixels().to_vec();
        levels.dedup();
        assert_eq!(levels.len(), 2);
        assert!((levels[0] - 0.2).abs() < 1e-12 && (levels[1] - 0.9).abs() < 1e-12);
        let nonzero = histogram(&g).iter().filter(|&&c| c > 0).count();
        assert!(nonzero <= count_unique(&two));
    }
}
