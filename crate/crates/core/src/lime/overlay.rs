//! Visual rendering of explanations.

use std::fmt::Write as _;
use std::path::Path;

use super::{Explanation, LimeError, Segmentation};
use crate::imgproc::{write_ppm, GrayImage, RgbImage};

const TINT: f64 = 0.4;
const BOUNDARY: [u8; 3] = [255, 255, 0];

fn toward_full(v: u8) -> u8 {
    (v as f64 + TINT * (255.0 - v as f64)).round() as u8
}

/// Tints the `selected` superpixels: green where the weight is positive,
/// red where it is negative, with a yellow outline.
pub fn render_overlay(
    img: &GrayImage,
    seg: &Segmentation,
    weights: &[f64],
    selected: &[usize],
) -> Result<RgbImage, LimeError> {
    if img.width() != seg.width() || img.height() != seg.height() {
        return Err(LimeError::DimensionMismatch("overlay image and segmentation differ in size".into()));
    }
    if weights.len() != seg.num_segments() {
        return Err(LimeError::LengthMismatch { expected: seg.num_segments(), got: weights.len() });
    }
    let mut on = vec![false; seg.num_segments()];
    for &s in selected {
        if s >= on.len() {
            return Err(LimeError::InvalidSegmentation(format!("no superpixel {s}")));
        }
        on[s] = true;
    }
    let mut out = RgbImage::from_gray(img);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let l = seg.label(x, y);
            if !on[l] {
                continue;
            }
            if seg.is_boundary(x, y) {
                out.set(x, y, BOUNDARY);
                continue;
            }
            let mut px = out.get(x, y);
            if weights[l] > 0.0 {
                px[1] = toward_full(px[1]);
            } else if weights[l] < 0.0 {
                px[0] = toward_full(px[0]);
            }
            out.set(x, y, px);
        }
    }
    Ok(out)
}

/// Plain-text summary stored next to each overlay.
pub fn sidecar_text(expl: &Explanation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "target {}", expl.target_class.name());
    let _ = writeln!(s, "original_prob {:.6}", expl.original_prob);
    match expl.fidelity {
        Some(f) => {
            let _ = writeln!(s, "fidelity {f:.6}");
        }
        None => {
            let _ = writeln!(s, "fidelity none");
        }
    }
    if expl.degenerate {
        let _ = writeln!(s, "degenerate");
    }
    for (id, w) in &expl.top_features {
        let _ = writeln!(s, "{id} {w:.6}");
    }
    s
}

/// Writes `<stem>.ppm` and `<stem>.txt` into `dir`.
pub fn write_explanation(
    dir: &Path,
    stem: &str,
    img: &GrayImage,
    seg: &Segmentation,
    expl: &Explanation,
) -> Result<(), LimeError> {
    let selected: Vec<usize> = expl.top_features.iter().map(|(id, _)| *id).collect();
    let overlay = render_overlay(img, seg, &expl.weights, &selected)?;
    write_ppm(dir.join(format!("{stem}.ppm")), &overlay)?;
    let txt = dir.join(format!("{stem}.txt"));
    std::fs::write(&txt, sidecar_text(expl)).map_err(|source| LimeError::Io { path: txt.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EmotionLabel;

    #[test]
    fn tint_and_outline() {
        let img = GrayImage::filled(8, 8, 100).unwrap();
        let seg = Segmentation::grid(8, 8, 2, 1).unwrap();
        let out = render_overlay(&img, &seg, &[0.5, -0.5], &[0, 1]).unwrap();
        // interior of the left half
        assert_eq!(out.get(1, 3), [100, 162, 100]);
        assert_eq!(out.get(6, 3), [162, 100, 100]);
        assert_eq!(out.get(3, 3), BOUNDARY);
        let none = render_overlay(&img, &seg, &[0.5, -0.5], &[]).unwrap();
        assert_eq!(none, RgbImage::from_gray(&img));
    }

    #[test]
    fn sidecar_lists_features() {
        let e = Explanation {
            target_class: EmotionLabel::Sad,
            weights: vec![0.1, -0.3],
            intercept: 0.2,
            top_features: vec![(1, -0.3), (0, 0.1)],
            fidelity: Some(0.75),
            original_prob: 0.5,
            degenerate: false,
            undersampled: false,
        };
        let t = sidecar_text(&e);
        assert!(t.contains("fidelity 0.750000"));
        assert!(t.contains("1 -0.300000\n0 0.100000\n"));
    }
}
