//! Image containers, netpbm codecs, and the preprocessing / augmentation
//! pipeline applied before images reach the classifier.

mod pnm;
mod transform;

pub use pnm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_pgm, write_pgm, write_ppm};
pub use transform::{
    align_by_eyes, alignment_angle, augment, gamma_correct, hflip, homogenize, preprocess_test,
    resize_bilinear, rotate_about, to_gray, translate_crop, AugmentConfig, EyePair, SourceImage,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("bad magic number: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("shift ({dx}, {dy}) too large for a {width}x{height} image")]
    ShiftTooLarge { dx: i64, dy: i64, width: usize, height: usize },
    #[error("zero output dimension {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("degenerate eye landmarks: left {left:?}, right {right:?}")]
    DegenerateLandmarks { left: (f64, f64), right: (f64, f64) },
    #[error("pixel buffer of length {len} does not match {width}x{height}x{channels}")]
    BufferSize { len: usize, width: usize, height: usize, channels: usize },
    #[error("invalid augmentation config: {0}")]
    InvalidAugmentConfig(String),
    #[error("image of {width}x{height} too small for a {shift}px translation")]
    TooSmallForAugment { width: usize, height: usize, shift: usize },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize { len: pixels.len(), width, height, channels: 1 });
        }
        Ok(Self { width, height, pixels })
    }

    /// Image filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Intensities scaled into `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }
}

/// 8-bit RGB raster, row-major interleaved triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if pixels.len() != 3 * width * height {
            return Err(ImageError::BufferSize { len: pixels.len(), width, height, channels: 3 });
        }
        Ok(Self { width, height, pixels })
    }

    /// Replicates a grayscale image into all three channels.
    pub fn from_gray(img: &GrayImage) -> Self {
        let pixels = img.pixels().iter().flat_map(|&p| [p, p, p]).collect();
        Self { width: img.width(), height: img.height(), pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}
