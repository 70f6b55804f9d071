use serde::{Deserialize, Serialize};

use super::{GrayImage, ImageError, RgbImage};

/// Left and right eye centres in pixel coordinates.
pub type EyePair = ((f64, f64), (f64, f64));

/// A decoded input image before preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

#[inline]
fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Luma conversion with 0.299 / 0.587 / 0.114 weights.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let pixels = img
        .pixels()
        .chunks_exact(3)
        .map(|c| clamp_u8(0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64))
        .collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("dimensions carried over")
}

/// Power-law intensity transfer `out = 255 * (in / 255)^gamma`.
pub fn gamma_correct(img: &GrayImage, gamma: f64) -> Result<GrayImage, ImageError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(ImageError::NonPositiveGamma(gamma));
    }
    let mut table = [0u8; 256];
    for (i, t) in table.iter_mut().enumerate() {
        *t = clamp_u8(255.0 * (i as f64 / 255.0).powf(gamma));
    }
    let pixels = img.pixels().iter().map(|&p| table[p as usize]).collect();
    Ok(GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions"))
}

pub fn hflip(img: &GrayImage) -> GrayImage {
    let w = img.width();
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for row in img.pixels().chunks_exact(w) {
        pixels.extend(row.iter().rev());
    }
    GrayImage::new(w, img.height(), pixels).expect("same dimensions")
}

/// Shifts the view by `(dx, dy)` and keeps only the part that stays inside
/// the original frame; nothing is padded.
pub fn translate_crop(img: &GrayImage, dx: i64, dy: i64) -> Result<GrayImage, ImageError> {
    let (w, h) = (img.width(), img.height());
    if dx.unsigned_abs() as usize >= w || dy.unsigned_abs() as usize >= h {
        return Err(ImageError::ShiftTooLarge { dx, dy, width: w, height: h });
    }
    let out_w = w - dx.unsigned_abs() as usize;
    let out_h = h - dy.unsigned_abs() as usize;
    let x0 = dx.max(0) as usize;
    let y0 = dy.max(0) as usize;
    GrayImage::from_fn(out_w, out_h, |x, y| img.get(x0 + x, y0 + y))
}

#[inline]
fn bilinear_sample(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    let x0 = (sx.floor() as usize).min(w - 1);
    let y0 = (sy.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
    let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize with corner-aligned sampling: output corners land exactly
/// on input corners.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension { width: out_w, height: out_h });
    }
    if out_w == img.width() && out_h == img.height() {
        return Ok(img.clone());
    }
    let scale = |n_in: usize, n_out: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let sx = scale(img.width(), out_w);
    let sy = scale(img.height(), out_h);
    GrayImage::from_fn(out_w, out_h, |x, y| clamp_u8(bilinear_sample(img, x as f64 * sx, y as f64 * sy)))
}

/// Rotates `img` by `angle` radians about `center`, in y-down pixel
/// coordinates. Samples falling outside the source frame are filled with 0.
pub fn rotate_about(img: &GrayImage, center: (f64, f64), angle: f64) -> GrayImage {
    if angle == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    // inverse map: source = R(-angle) (dest - c) + c
    let (s, c) = (-angle).sin_cos();
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let dx = x as f64 - center.0;
        let dy = y as f64 - center.1;
        let sx = c * dx - s * dy + center.0;
        let sy = s * dx + c * dy + center.1;
        if sx < 0.0 || sy < 0.0 || sx > w - 1.0 || sy > h - 1.0 {
            0
        } else {
            clamp_u8(bilinear_sample(img, sx, sy))
        }
    })
    .expect("same dimensions")
}

/// Rotation (radians) that `align_by_eyes` applies for the given landmarks.
pub fn alignment_angle(left: (f64, f64), right: (f64, f64)) -> Result<f64, ImageError> {
    if left == right || !(left.0 < right.0) {
        return Err(ImageError::DegenerateLandmarks { left, right });
    }
    Ok(-(right.1 - left.1).atan2(right.0 - left.0))
}

/// Rotates the image about the eye midpoint so the eye line becomes horizontal.
pub fn align_by_eyes(img: &GrayImage, left: (f64, f64), right: (f64, f64)) -> Result<GrayImage, ImageError> {
    let angle = alignment_angle(left, right)?;
    let mid = ((left.0 + right.0) / 2.0, (left.1 + right.1) / 2.0);
    Ok(rotate_about(img, mid, angle))
}

/// Training-time augmentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub gamma_values: Vec<f64>,
    pub translate_px: usize,
    pub include_translation: bool,
    pub include_flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { gamma_values: vec![0.6, 1.4, 1.8], translate_px: 4, include_translation: true, include_flip: true }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), ImageError> {
        if self.gamma_values.is_empty() {
            return Err(ImageError::InvalidAugmentConfig("gamma_values must not be empty".into()));
        }
        if let Some(g) = self.gamma_values.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(ImageError::NonPositiveGamma(*g));
        }
        Ok(())
    }

    /// Number of images `augment` yields per input.
    pub fn variant_count(&self) -> usize {
        (1 + self.gamma_values.len())
            * (1 + usize::from(self.include_translation))
            * (1 + usize::from(self.include_flip))
    }
}

/// Expands one preprocessed training image into its augmented variants.
///
/// Variants enumerate `{original, gamma_1, ..}` x `{as is, translated}` x
/// `{as is, flipped}` in that nesting order, each resized to
/// `output_size` x `output_size`. The first variant is the resized original
/// and flipped variants immediately follow their unflipped partner.
pub fn augment(img: &GrayImage, cfg: &AugmentConfig, output_size: usize) -> Result<Vec<GrayImage>, ImageError> {
    cfg.validate()?;
    if cfg.include_translation && (img.width() <= cfg.translate_px || img.height() <= cfg.translate_px) {
        return Err(ImageError::TooSmallForAugment {
            width: img.width(),
            height: img.height(),
            shift: cfg.translate_px,
        });
    }
    let mut tones = vec![img.clone()];
    for &g in &cfg.gamma_values {
        tones.push(gamma_correct(img, g)?);
    }
    let shift = cfg.translate_px as i64;
    let mut out = Vec::with_capacity(cfg.variant_count());
    for tone in &tones {
        let mut frames = vec![resize_bilinear(tone, output_size, output_size)?];
        if cfg.include_translation {
            let moved = translate_crop(tone, shift, shift)?;
            frames.push(resize_bilinear(&moved, output_size, output_size)?);
        }
        for frame in frames {
            if cfg.include_flip {
                let flipped = hflip(&frame);
                out.push(frame);
                out.push(flipped);
            } else {
                out.push(frame);
            }
        }
    }
    Ok(out)
}

/// Grayscale conversion and eye alignment shared by the train and test paths.
pub fn homogenize(src: &SourceImage, eyes: Option<EyePair>) -> Result<GrayImage, ImageError> {
    let gray = match src {
        SourceImage::Gray(g) => g.clone(),
        SourceImage::Rgb(c) => to_gray(c),
    };
    match eyes {
        Some((l, r)) => align_by_eyes(&gray, l, r),
        None => Ok(gray),
    }
}

/// Test-time preprocessing: align (when landmarks exist), grayscale, resize.
/// No augmentation is applied.
pub fn preprocess_test(src: &SourceImage, eyes: Option<EyePair>, output_size: usize) -> Result<GrayImage, ImageError> {
    let gray = homogenize(src, eyes)?;
    resize_bilinear(&gray, output_size, output_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
        })
    }

    #[test]
    fn luma_weights() {
        let img = RgbImage::new(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(to_gray(&img).pixels(), &[255, 0, 76]);
    }

    #[test]
    fn gamma_reference_values() {
        let img = GrayImage::new(3, 1, vec![0, 64, 255]).unwrap();
        assert_eq!(gamma_correct(&img, 0.5).unwrap().pixels(), &[0, 128, 255]);
        assert!(matches!(gamma_correct(&img, 0.0), Err(ImageError::NonPositiveGamma(_))));
        assert!(matches!(gamma_correct(&img, -1.0), Err(ImageError::NonPositiveGamma(_))));
    }

    #[test]
    fn gamma_matches_brute_force_table() {
        let all = GrayImage::from_fn(256, 1, |x, _| x as u8).unwrap();
        for gamma in [0.5, 0.6, 1.4, 1.8] {
            let out = gamma_correct(&all, gamma).unwrap();
            for v in 0..256usize {
                let expected = (255.0 * (v as f64 / 255.0).powf(gamma)).round() as u8;
                assert_eq!(out.get(v, 0), expected, "gamma {gamma} input {v}");
            }
        }
    }

    #[test]
    fn flip_and_crop_geometry() {
        let img = GrayImage::new(2, 1, vec![1, 2]).unwrap();
        assert_eq!(hflip(&img).pixels(), &[2, 1]);

        let six = GrayImage::from_fn(6, 6, |x, y| (y * 6 + x) as u8).unwrap();
        let win = translate_crop(&six, 4, 4).unwrap();
        assert_eq!((win.width(), win.height()), (2, 2));
        assert_eq!(win.pixels(), &[28, 29, 34, 35]);
        assert_eq!(translate_crop(&six, 0, 0).unwrap(), six);
        let neg = translate_crop(&six, -2, 1).unwrap();
        assert_eq!((neg.width(), neg.height(), neg.get(0, 0)), (4, 5, 6));
        assert!(matches!(translate_crop(&six, 6, 0), Err(ImageError::ShiftTooLarge { .. })));
    }

    #[test]
    fn resize_reference_values() {
        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 1).unwrap().pixels(), &[0, 128, 255]);
        let flat = GrayImage::filled(7, 5, 128).unwrap();
        let big = resize_bilinear(&flat, 13, 2).unwrap();
        assert!(big.pixels().iter().all(|&p| p == 128));
        assert!(matches!(resize_bilinear(&flat, 0, 3), Err(ImageError::ZeroDimension { .. })));
    }

    #[test]
    fn alignment_angles() {
        assert_eq!(alignment_angle((10.0, 10.0), (20.0, 10.0)).unwrap(), 0.0);
        let a = alignment_angle((10.0, 10.0), (20.0, 20.0)).unwrap();
        assert!((a + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(alignment_angle((20.0, 10.0), (10.0, 10.0)).is_err());
        assert!(alignment_angle((10.0, 10.0), (10.0, 10.0)).is_err());
    }

    #[test]
    fn horizontal_eyes_leave_image_unchanged() {
        let img = GrayImage::from_fn(9, 7, |x, y| (x * 20 + y * 3) as u8).unwrap();
        assert_eq!(align_by_eyes(&img, (2.0, 3.0), (6.0, 3.0)).unwrap(), img);
    }

    #[test]
    fn alignment_undoes_a_known_rotation() {
        // smooth blob so bilinear resampling error stays small
        let img = GrayImage::from_fn(48, 48, |x, y| {
            let dx = x as f64 - 24.0;
            let dy = y as f64 - 26.0;
            (200.0 * (-(dx * dx / 180.0 + dy * dy / 90.0)).exp() + 30.0) as u8
        })
        .unwrap();
        let left = (16.0, 20.0);
        let right = (32.0, 20.0);
        let center = (24.0, 20.0);
        let theta: f64 = 0.2;
        let rotated = rotate_about(&img, center, theta);
        let rot = |p: (f64, f64)| {
            let (s, c) = theta.sin_cos();
            let (dx, dy) = (p.0 - center.0, p.1 - center.1);
            (c * dx - s * dy + center.0, s * dx + c * dy + center.1)
        };
        let aligned = align_by_eyes(&rotated, rot(left), rot(right)).unwrap();
        let mut total = 0.0;
        let mut n = 0.0;
        for y in 12..36 {
            for x in 12..36 {
                total += (aligned.get(x, y) as f64 - img.get(x, y) as f64).abs();
                n += 1.0;
            }
        }
        assert!(total / n < 6.0, "mean abs diff {}", total / n);
    }

    #[test]
    fn default_augmentation_yields_sixteen() {
        let img = GrayImage::from_fn(20, 20, |x, y| (x * 10 + y) as u8).unwrap();
        let cfg = AugmentConfig::default();
        assert_eq!(cfg.variant_count(), 16);
        let out = augment(&img, &cfg, 12).unwrap();
        assert_eq!(out.len(), 16);
        assert_eq!(out[0], resize_bilinear(&img, 12, 12).unwrap());
        for pair in out.chunks_exact(2) {
            assert_eq!(pair[1], hflip(&pair[0]));
        }
        assert!(out.iter().all(|v| v.width() == 12 && v.height() == 12));
    }

    #[test]
    fn degenerate_augmentation() {
        let img = GrayImage::from_fn(10, 10, |x, y| (x * y) as u8).unwrap();
        let cfg = AugmentConfig { gamma_values: vec![], ..Default::default() };
        assert!(augment(&img, &cfg, 10).is_err());
        let cfg = AugmentConfig {
            gamma_values: vec![1.0],
            include_translation: false,
            include_flip: false,
            ..Default::default()
        };
        let out = augment(&img, &cfg, 10).unwrap();
        assert_eq!(out, vec![img.clone(), img]);
    }

    #[test]
    fn preprocess_test_paths() {
        let g = GrayImage::from_fn(8, 8, |x, _| x as u8).unwrap();
        assert_eq!(preprocess_test(&SourceImage::Gray(g.clone()), None, 8).unwrap(), g);
        let rgb = RgbImage::new(4, 4, vec![10; 48]).unwrap();
        let out = preprocess_test(&SourceImage::Rgb(rgb), None, 6).unwrap();
        assert_eq!((out.width(), out.height()), (6, 6));
        assert!(out.pixels().iter().all(|&p| p == 10));
    }

    proptest! {
        #[test]
        fn gamma_fixed_points_and_monotone(g in 0.05f64..5.0) {
            let all = GrayImage::from_fn(256, 1, |x, _| x as u8).unwrap();
            let out = gamma_correct(&all, g).unwrap();
            prop_assert_eq!(out.get(0, 0), 0);
            prop_assert_eq!(out.get(255, 0), 255);
            prop_assert!(out.pixels().windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn hflip_involution_and_commutes_with_gamma(img in arb_image(), g in 0.1f64..3.0) {
            prop_assert_eq!(hflip(&hflip(&img)), img.clone());
            prop_assert_eq!(
                hflip(&gamma_correct(&img, g).unwrap()),
                gamma_correct(&hflip(&img), g).unwrap()
            );
        }

        #[test]
        fn resize_stays_in_range(img in arb_image(), w in 1usize..20, h in 1usize..20) {
            let out = resize_bilinear(&img, w, h).unwrap();
            let lo = *img.pixels().iter().min().unwrap();
            let hi = *img.pixels().iter().max().unwrap();
            prop_assert!(out.pixels().iter().all(|&p| p >= lo.saturating_sub(1) && p <= hi.saturating_add(1)));
        }

        #[test]
        fn augment_count_matches_formula(
            n_gamma in 1usize..4,
            translate in any::<bool>(),
            flip in any::<bool>(),
            px in 0usize..4,
        ) {
            let img = GrayImage::from_fn(9, 9, |x, y| (x * 17 + y * 5) as u8).unwrap();
            let cfg = AugmentConfig {
                gamma_values: (0..n_gamma).map(|i| 0.5 + i as f64 * 0.4).collect(),
                translate_px: px,
                include_translation: translate,
                include_flip: flip,
            };
            let out = augment(&img, &cfg, 7).unwrap();
            prop_assert_eq!(out.len(), cfg.variant_count());
        }
    }
}
