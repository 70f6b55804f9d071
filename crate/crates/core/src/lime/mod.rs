//! Local surrogate explanations for single image predictions.
//!
//! The image is cut into superpixels, random on/off patterns of those
//! superpixels are pushed through the black-box classifier, and a
//! proximity-weighted ridge model over the on/off indicators is fitted to
//! the target-class probability. Superpixels with the largest absolute
//! coefficients explain the prediction.

mod overlay;
mod segment;
mod surrogate;

pub use overlay::{render_overlay, sidecar_text, write_explanation};
pub use segment::{slic_segment, Segmentation, SlicParams};
pub use surrogate::{cholesky_solve, fit_weighted_ridge, weighted_r2, RidgeFit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::EmotionLabel;
use crate::imgproc::{GrayImage, ImageError};
use crate::nn::{CnnModel, NnError, Real};

#[derive(Debug, Error)]
pub enum LimeError {
    #[error("superpixel count k={k} must lie in [2, {pixels}]")]
    BadK { k: usize, pixels: usize },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("perturbation vector has length {got}, segmentation has {expected} superpixels")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weighted least-squares system is singular")]
    SingularSystem,
    #[error("not enough usable samples: {0}")]
    InsufficientSamples(String),
    #[error("invalid LIME parameters: {0}")]
    InvalidParams(String),
    #[error("top_k={top_k} exceeds the {d} available superpixels")]
    TopKTooLarge { top_k: usize, d: usize },
    #[error("predictor failed: {0}")]
    Predictor(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl From<NnError> for LimeError {
    fn from(e: NnError) -> Self {
        LimeError::Predictor(e.to_string())
    }
}

/// Black-box image classifier returning six class probabilities.
pub trait Predictor {
    fn predict_proba(&self, img: &GrayImage) -> Result<[f64; 6], LimeError>;
}

impl<F> Predictor for F
where
    F: Fn(&GrayImage) -> [f64; 6],
{
    fn predict_proba(&self, img: &GrayImage) -> Result<[f64; 6], LimeError> {
        Ok(self(img))
    }
}

/// Adapter exposing a trained network as a [`Predictor`].
pub struct ModelPredictor<'a, T>(pub &'a CnnModel<T>);

impl<T: Real> Predictor for ModelPredictor<'_, T> {
    fn predict_proba(&self, img: &GrayImage) -> Result<[f64; 6], LimeError> {
        Ok(self.0.probabilities(img)?)
    }
}

/// Intensity used for switched-off superpixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Replacement {
    /// Each superpixel's own rounded mean intensity.
    SuperpixelMean,
    Constant(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeParams {
    pub num_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub top_k: usize,
    pub seed: u64,
    pub segmentation: SlicParams,
    pub replacement: Replacement,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            kernel_width: 0.25,
            ridge_lambda: 1.0,
            top_k: 10,
            seed: 0,
            segmentation: SlicParams::default(),
            replacement: Replacement::SuperpixelMean,
        }
    }
}

impl LimeParams {
    pub fn validate(&self) -> Result<(), LimeError> {
        if self.num_samples < 2 {
            return Err(LimeError::InvalidParams("num_samples must be at least 2".into()));
        }
        if !(self.kernel_width > 0.0) {
            return Err(LimeError::InvalidParams("kernel_width must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(LimeError::InvalidParams("ridge_lambda must be non-negative".into()));
        }
        if self.top_k == 0 {
            return Err(LimeError::InvalidParams("top_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target_class: EmotionLabel,
    /// Surrogate coefficient per superpixel.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// `(superpixel, weight)` sorted by |weight| descending, ties by id.
    pub top_features: Vec<(usize, f64)>,
    /// Weighted R^2 of the surrogate; `None` when the predictions carry no
    /// variance.
    pub fidelity: Option<f64>,
    pub original_prob: f64,
    /// Every sampled prediction was identical; there is nothing to explain.
    pub degenerate: bool,
    /// Fewer samples than superpixels were drawn.
    pub undersampled: bool,
}

impl Explanation {
    /// The `k` superpixels with the largest positive weights, descending.
    pub fn top_positive(&self, k: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.weights.iter().copied().enumerate().filter(|(_, w)| *w > 0.0).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(k);
        v
    }
}

/// `n` perturbation rows over `d` superpixels: row 0 keeps everything,
/// the rest are i.i.d. fair coin flips.
pub fn sample_perturbations(d: usize, n: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    if n > 0 {
        rows.push(vec![true; d]);
    }
    for _ in 1..n {
        rows.push((0..d).map(|_| rng.gen::<bool>()).collect());
    }
    rows
}

fn segment_means(img: &GrayImage, seg: &Segmentation) -> Vec<u8> {
    let mut sums = vec![(0u64, 0u64); seg.num_segments()];
    for (&l, &p) in seg.labels().iter().zip(img.pixels()) {
        sums[l].0 += p as u64;
        sums[l].1 += 1;
    }
    sums.iter().map(|&(s, n)| ((s as f64 / n as f64).round()) as u8).collect()
}

fn check_dims(img: &GrayImage, seg: &Segmentation) -> Result<(), LimeError> {
    if img.width() != seg.width() || img.height() != seg.height() {
        return Err(LimeError::DimensionMismatch(format!(
            "image {}x{} vs segmentation {}x{}",
            img.width(),
            img.height(),
            seg.width(),
            seg.height()
        )));
    }
    Ok(())
}

/// Switches off the superpixels with `z[i] == false`.
pub fn mask_image_with(
    img: &GrayImage,
    seg: &Segmentation,
    z: &[bool],
    replacement: Replacement,
) -> Result<GrayImage, LimeError> {
    check_dims(img, seg)?;
    if z.len() != seg.num_segments() {
        return Err(LimeError::LengthMismatch { expected: seg.num_segments(), got: z.len() });
    }
    let fill = match replacement {
        Replacement::SuperpixelMean => segment_means(img, seg),
        Replacement::Constant(v) => vec![v; seg.num_segments()],
    };
    let mut out = img.clone();
    for (p, &l) in out.pixels_mut().iter_mut().zip(seg.labels()) {
        if !z[l] {
            *p = fill[l];
        }
    }
    Ok(out)
}

/// [`mask_image_with`] using per-superpixel mean replacement.
pub fn mask_image(img: &GrayImage, seg: &Segmentation, z: &[bool]) -> Result<GrayImage, LimeError> {
    mask_image_with(img, seg, z, Replacement::SuperpixelMean)
}

/// Cosine distance between `z` and the all-ones vector:
/// `1 - sqrt(active / d)`, with the all-off vector at distance 1.
pub fn cosine_distance_to_ones(z: &[bool]) -> f64 {
    let active = z.iter().filter(|&&b| b).count();
    if active == 0 || z.is_empty() {
        return 1.0;
    }
    1.0 - (active as f64 / z.len() as f64).sqrt()
}

/// Exponential proximity kernel `exp(-D^2 / sigma^2)`.
pub fn kernel_weight(z: &[bool], sigma: f64) -> f64 {
    let d = cosine_distance_to_ones(z);
    (-(d * d) / (sigma * sigma)).exp()
}

/// Explains `target` using the SLIC segmentation configured in `params`.
pub fn explain<P: Predictor + ?Sized>(
    predictor: &P,
    img: &GrayImage,
    target: EmotionLabel,
    params: &LimeParams,
) -> Result<(Segmentation, Explanation), LimeError> {
    params.validate()?;
    let seg = slic_segment(img, &params.segmentation)?;
    let expl = explain_with_segmentation(predictor, img, &seg, target, params)?;
    Ok((seg, expl))
}

/// Explains `target` over a caller-supplied segmentation.
pub fn explain_with_segmentation<P: Predictor + ?Sized>(
    predictor: &P,
    img: &GrayImage,
    seg: &Segmentation,
    target: EmotionLabel,
    params: &LimeParams,
) -> Result<Explanation, LimeError> {
    params.validate()?;
    check_dims(img, seg)?;
    let d = seg.num_segments();
    if params.top_k > d {
        return Err(LimeError::TopKTooLarge { top_k: params.top_k, d });
    }
    let rows = sample_perturbations(d, params.num_samples, params.seed);
    let t = target.index();
    let mut y = Vec::with_capacity(rows.len());
    for z in &rows {
        let masked = mask_image_with(img, seg, z, params.replacement)?;
        y.push(predictor.predict_proba(&masked)?[t]);
    }
    let weights: Vec<f64> = rows.iter().map(|z| kernel_weight(z, params.kernel_width)).collect();
    let design: Vec<Vec<f64>> = rows.iter().map(|z| z.iter().map(|&b| f64::from(u8::from(b))).collect()).collect();
    let original_prob = y[0];
    let undersampled = params.num_samples < d;

    if y.iter().all(|&v| v == y[0]) {
        return Ok(Explanation {
            target_class: target,
            weights: vec![0.0; d],
            intercept: y[0],
            top_features: Vec::new(),
            fidelity: None,
            original_prob,
            degenerate: true,
            undersampled,
        });
    }
    let fit = fit_weighted_ridge(&design, &y, &weights, params.ridge_lambda)?;
    let fidelity = weighted_r2(&fit, &design, &y, &weights);
    let mut ranked: Vec<(usize, f64)> = fit.coefficients.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    ranked.truncate(params.top_k.min(d));
    Ok(Explanation {
        target_class: target,
        weights: fit.coefficients,
        intercept: fit.intercept,
        top_features: ranked,
        fidelity,
        original_prob,
        degenerate: false,
        undersampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x * 37 + y * 91) % 200 + 20) as u8).unwrap()
    }

    #[test]
    fn perturbation_rows() {
        let rows = sample_perturbations(5, 20, 3);
        assert_eq!(rows.len(), 20);
        assert!(rows[0].iter().all(|&b| b));
        assert_eq!(rows, sample_perturbations(5, 20, 3));

        let rows = sample_perturbations(16, 4000, 11);
        for j in 0..16 {
            let mean = rows[1..].iter().filter(|r| r[j]).count() as f64 / 3999.0;
            assert!((0.45..=0.55).contains(&mean), "coordinate {j}: {mean}");
        }
    }

    #[test]
    fn masking_rules() {
        let img = textured(8, 4);
        let seg = Segmentation::grid(8, 4, 2, 1).unwrap();
        assert_eq!(mask_image(&img, &seg, &[true, true]).unwrap(), img);
        let off = mask_image(&img, &seg, &[false, false]).unwrap();
        for l in 0..2 {
            let vals: Vec<u8> = (0..32).filter(|i| seg.labels()[*i] == l).map(|i| off.pixels()[i]).collect();
            assert!(vals.iter().all(|&v| v == vals[0]));
        }
        let flat = GrayImage::filled(8, 4, 77).unwrap();
        assert_eq!(mask_image(&flat, &seg, &[false, true]).unwrap(), flat);
        assert!(matches!(mask_image(&img, &seg, &[true]), Err(LimeError::LengthMismatch { .. })));
        let half = mask_image(&img, &seg, &[true, false]).unwrap();
        for i in 0..32 {
            if seg.labels()[i] == 0 {
                assert_eq!(half.pixels()[i], img.pixels()[i]);
            }
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_weight(&[true; 4], 0.25), 1.0);
        assert!((kernel_weight(&[false; 4], 0.25) - (-16f64).exp()).abs() < 1e-18);
        let z = [true, true, false, false];
        let dist = 1.0 - 0.5f64.sqrt();
        assert!((cosine_distance_to_ones(&z) - 0.29289).abs() < 1e-5);
        assert!((kernel_weight(&z, 0.25) - (-dist * dist / 0.0625).exp()).abs() < 1e-15);
        assert!((kernel_weight(&z, 0.25) - 0.2534).abs() < 1e-4);
    }

    #[test]
    fn kernel_monotone_in_dropped() {
        let d = 10;
        let mut prev = f64::INFINITY;
        for dropped in 0..=d {
            let z: Vec<bool> = (0..d).map(|i| i >= dropped).collect();
            let k = kernel_weight(&z, 0.25);
            assert!(k > 0.0 && k <= 1.0 && k <= prev);
            prev = k;
        }
    }

    #[test]
    fn constant_predictor_is_degenerate() {
        let img = textured(16, 16);
        let seg = Segmentation::grid(16, 16, 4, 2).unwrap();
        let predictor = |_: &GrayImage| [0.1, 0.2, 0.3, 0.1, 0.2, 0.1];
        let params = LimeParams { num_samples: 200, top_k: 4, ..Default::default() };
        let e = explain_with_segmentation(&predictor, &img, &seg, EmotionLabel::Fear, &params).unwrap();
        assert!(e.degenerate);
        assert!(e.fidelity.is_none());
        assert!(e.weights.iter().all(|w| w.abs() < 1e-9));
    }

    #[test]
    fn explanation_is_deterministic_and_sorted() {
        let img = textured(16, 16);
        let seg = Segmentation::grid(16, 16, 4, 2).unwrap();
        let predictor = |g: &GrayImage| {
            let m = g.mean() / 255.0;
            [m, 1.0 - m, 0.0, 0.0, 0.0, 0.0]
        };
        let params = LimeParams { num_samples: 300, top_k: 5, seed: 4, ..Default::default() };
        let a = explain_with_segmentation(&predictor, &img, &seg, EmotionLabel::Angry, &params).unwrap();
        let b = explain_with_segmentation(&predictor, &img, &seg, EmotionLabel::Angry, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.top_features.len(), 5);
        assert!(a.top_features.windows(2).all(|p| p[0].1.abs() >= p[1].1.abs()));
        let too_many = LimeParams { top_k: 9, ..params };
        assert!(matches!(
            explain_with_segmentation(&predictor, &img, &seg, EmotionLabel::Angry, &too_many),
            Err(LimeError::TopKTooLarge { .. })
        ));
    }
}
