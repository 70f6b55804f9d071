//! Parametric face-glyph generator used as a stand-in for a licensed
//! facial-expression corpus.
//!
//! Each emotion is a fixed set of geometric parameters (brow height and tilt,
//! eye opening, mouth width, curvature and opening). The two groups are drawn
//! with different styles: stroke weight, face proportions, tone, and the
//! vertical placement of facial features. Subjects add their own jitter on
//! top, and every image adds a little more plus a small head rotation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_manifest, DatasetError, EmotionLabel, GroupTag, ManifestEntry};
use crate::imgproc::{write_pgm, GrayImage};

/// Rendering style shared by every subject of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStyle {
    /// Stroke width in pixels at a 48 px image size.
    pub stroke_width: f64,
    /// Face width / face height.
    pub face_aspect: f64,
    pub face_intensity: f64,
    pub background_intensity: f64,
    pub feature_intensity: f64,
    /// Vertical offset of the eye/brow block, in face half-heights.
    pub eye_offset: f64,
    /// Vertical offset of the mouth, in face half-heights.
    pub mouth_offset: f64,
    /// Multiplier on expression amplitude (curvature, tilt, opening).
    pub expressiveness: f64,
}

impl GroupStyle {
    pub fn male_default() -> Self {
        Self {
            stroke_width: 1.2,
            face_aspect: 0.84,
            face_intensity: 150.0,
            background_intensity: 35.0,
            feature_intensity: 25.0,
            eye_offset: 0.0,
            mouth_offset: 0.0,
            expressiveness: 1.0,
        }
    }

    pub fn female_default() -> Self {
        Self {
            stroke_width: 2.4,
            face_aspect: 0.7,
            face_intensity: 195.0,
            background_intensity: 110.0,
            feature_intensity: 85.0,
            eye_offset: 0.12,
            mouth_offset: -0.1,
            expressiveness: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects_per_group: usize,
    pub images_per_emotion: usize,
    pub image_size: usize,
    pub male_style: GroupStyle,
    pub female_style: GroupStyle,
    /// Uniform pixel noise amplitude.
    pub noise: f64,
    pub max_rotation_deg: f64,
    /// Emit eye landmarks in the manifest.
    pub with_landmarks: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subjects_per_group: 12,
            images_per_emotion: 4,
            image_size: 48,
            male_style: GroupStyle::male_default(),
            female_style: GroupStyle::female_default(),
            noise: 8.0,
            max_rotation_deg: 6.0,
            with_landmarks: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.subjects_per_group == 0 || self.images_per_emotion == 0 {
            return Err(DatasetError::InvalidSpec("subject and image counts must be positive".into()));
        }
        if self.image_size < 16 {
            return Err(DatasetError::InvalidSpec(format!("image size {} is below 16 px", self.image_size)));
        }
        for style in [&self.male_style, &self.female_style] {
            if !(style.stroke_width > 0.0) || !(style.face_aspect > 0.2) || !(style.face_aspect <= 1.2) {
                return Err(DatasetError::InvalidSpec("degenerate group style".into()));
            }
        }
        if !(self.noise >= 0.0) || !(self.max_rotation_deg >= 0.0) {
            return Err(DatasetError::InvalidSpec("noise and rotation must be non-negative".into()));
        }
        Ok(())
    }

    pub fn style(&self, group: GroupTag) -> &GroupStyle {
        match group {
            GroupTag::Female => &self.female_style,
            GroupTag::Male => &self.male_style,
        }
    }

    pub fn image_count(&self) -> usize {
        2 * self.subjects_per_group * EmotionLabel::COUNT * self.images_per_emotion
    }
}

#[derive(Debug, Clone, Copy)]
struct Expression {
    brow_raise: f64,
    brow_tilt: f64,
    eye_open: f64,
    mouth_width: f64,
    mouth_curve: f64,
    mouth_open: f64,
    asymmetry: f64,
    wrinkle: bool,
}

fn expression(label: EmotionLabel) -> Expression {
    let base = Expression {
        brow_raise: 0.0,
        brow_tilt: 0.0,
        eye_open: 0.85,
        mouth_width: 0.3,
        mouth_curve: 0.0,
        mouth_open: 0.0,
        asymmetry: 0.0,
        wrinkle: false,
    };
    match label {
        EmotionLabel::Angry => Expression { brow_raise: -0.05, brow_tilt: 0.2, eye_open: 0.65, mouth_width: 0.28, ..base },
        EmotionLabel::Disgust => Expression {
            brow_raise: -0.02,
            brow_tilt: 0.1,
            eye_open: 0.5,
            mouth_width: 0.26,
            mouth_curve: -0.06,
            asymmetry: 0.1,
            wrinkle: true,
            ..base
        },
        EmotionLabel::Fear => Expression {
            brow_raise: 0.12,
            brow_tilt: -0.12,
            eye_open: 1.4,
            mouth_width: 0.34,
            mouth_curve: -0.03,
            mouth_open: 0.07,
            ..base
        },
        EmotionLabel::Happy => Expression { mouth_width: 0.34, mouth_curve: 0.15, ..base },
        EmotionLabel::Sad => Expression {
            brow_raise: 0.06,
            brow_tilt: -0.17,
            eye_open: 0.75,
            mouth_width: 0.24,
            mouth_curve: -0.13,
            ..base
        },
        EmotionLabel::Surprise => Expression {
            brow_raise: 0.22,
            eye_open: 1.5,
            mouth_width: 0.13,
            mouth_open: 0.2,
            ..base
        },
    }
}

/// Per-subject identity parameters.
#[derive(Debug, Clone, Copy)]
struct Identity {
    center: (f64, f64),
    scale: f64,
    aspect: f64,
    tone: f64,
    brow_base: f64,
    eye_spacing: f64,
}

struct Canvas {
    size: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn new(size: usize, fill: f64) -> Self {
        Self { size, px: vec![fill; size * size] }
    }

    /// Blends `value` into pixels where `coverage(x, y)` is positive.
    fn paint(&mut self, bbox: (f64, f64, f64, f64), value: f64, coverage: impl Fn(f64, f64) -> f64) {
        let n = self.size as f64;
        let x0 = bbox.0.floor().clamp(0.0, n - 1.0) as usize;
        let y0 = bbox.1.floor().clamp(0.0, n - 1.0) as usize;
        let x1 = bbox.2.ceil().clamp(0.0, n - 1.0) as usize;
        let y1 = bbox.3.ceil().clamp(0.0, n - 1.0) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let a = coverage(x as f64, y as f64).clamp(0.0, 1.0);
                if a > 0.0 {
                    let p = &mut self.px[y * self.size + x];
                    *p = *p * (1.0 - a) + value * a;
                }
            }
        }
    }

    fn ellipse(&mut self, c: (f64, f64), r: (f64, f64), angle: f64, value: f64) {
        let (s, co) = angle.sin_cos();
        let reach = r.0.max(r.1) + 1.0;
        let bbox = (c.0 - reach, c.1 - reach, c.0 + reach, c.1 + reach);
        let mean_r = 0.5 * (r.0 + r.1);
        self.paint(bbox, value, |x, y| {
            let dx = x - c.0;
            let dy = y - c.1;
            let u = co * dx + s * dy;
            let v = -s * dx + co * dy;
            let q = ((u / r.0).powi(2) + (v / r.1).powi(2)).sqrt();
            // soft edge about one pixel wide
            (1.0 - q) * mean_r + 0.5
        });
    }

    fn polyline(&mut self, pts: &[(f64, f64)], width: f64, value: f64) {
        let half = 0.5 * width;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            x0 = x0.min(p.0);
            y0 = y0.min(p.1);
            x1 = x1.max(p.0);
            y1 = y1.max(p.1);
        }
        let bbox = (x0 - half - 1.0, y0 - half - 1.0, x1 + half + 1.0, y1 + half + 1.0);
        self.paint(bbox, value, |x, y| {
            let d = pts
                .windows(2)
                .map(|seg| point_segment_distance((x, y), seg[0], seg[1]))
                .fold(f64::MAX, f64::min);
            half + 0.5 - d
        });
    }

    fn into_image(self, noise: f64, rng: &mut ChaCha8Rng) -> GrayImage {
        let size = self.size;
        let pixels = self
            .px
            .into_iter()
            .map(|v| {
                let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                (v + jitter).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        GrayImage::new(size, size, pixels).expect("square canvas")
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn quad_bezier(a: (f64, f64), ctrl: (f64, f64), b: (f64, f64), steps: usize) -> Vec<(f64, f64)> {
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            let u = 1.0 - t;
            (u * u * a.0 + 2.0 * u * t * ctrl.0 + t * t * b.0, u * u * a.1 + 2.0 * u * t * ctrl.1 + t * t * b.1)
        })
        .collect()
}

struct FaceFrame {
    center: (f64, f64),
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
}

impl FaceFrame {
    /// Face-normalised coordinates (u right, v down, both in half-axes) to pixels.
    fn to_px(&self, u: f64, v: f64) -> (f64, f64) {
        let x = u * self.rx;
        let y = v * self.ry;
        (self.center.0 + self.cos * x - self.sin * y, self.center.1 + self.sin * x + self.cos * y)
    }
}

fn render_face(
    spec: &SynthSpec,
    style: &GroupStyle,
    id: &Identity,
    label: EmotionLabel,
    rng: &mut ChaCha8Rng,
) -> (GrayImage, ((f64, f64), (f64, f64))) {
    let n = spec.image_size as f64;
    let unit = n / 48.0;
    let gain = style.expressiveness * rng.gen_range(0.85..1.15);
    let ex = expression(label);
    let angle = if spec.max_rotation_deg > 0.0 {
        rng.gen_range(-spec.max_rotation_deg..=spec.max_rotation_deg).to_radians()
    } else {
        0.0
    };
    let ry = 0.42 * n * id.scale;
    let frame = FaceFrame {
        center: (id.center.0 + rng.gen_range(-0.5..0.5) * unit, id.center.1 + rng.gen_range(-0.5..0.5) * unit),
        rx: ry * (style.face_aspect + id.aspect),
        ry,
        cos: angle.cos(),
        sin: angle.sin(),
    };
    let stroke = style.stroke_width * unit;
    let ink = style.feature_intensity;

    let mut canvas = Canvas::new(spec.image_size, style.background_intensity);
    canvas.ellipse(frame.center, (frame.rx, frame.ry), angle, style.face_intensity + id.tone);

    // eyes
    let eye_v = -0.18 + style.eye_offset;
    let eye_u = id.eye_spacing;
    let open = 0.85 + (ex.eye_open - 0.85) * gain;
    let eye_r = (0.17 * frame.rx, (0.02 + 0.07 * open) * frame.ry);
    let left_eye = frame.to_px(-eye_u, eye_v);
    let right_eye = frame.to_px(eye_u, eye_v);
    canvas.ellipse(left_eye, eye_r, angle, ink);
    canvas.ellipse(right_eye, eye_r, angle, ink);

    // brows: outer end, optional arch, inner end
    let brow_v = eye_v - id.brow_base - ex.brow_raise * gain;
    for side in [-1.0, 1.0] {
        let outer = frame.to_px(side * (eye_u + 0.2), brow_v);
        let inner = frame.to_px(side * (eye_u - 0.2), brow_v + ex.brow_tilt * gain);
        let arch_lift = if label == EmotionLabel::Surprise { 0.1 * gain } else { 0.02 };
        let mid = frame.to_px(side * eye_u, brow_v - arch_lift + 0.5 * ex.brow_tilt * gain);
        canvas.polyline(&quad_bezier(outer, mid, inner, 8), stroke, ink);
    }

    // nose
    canvas.polyline(&[frame.to_px(0.0, 0.0), frame.to_px(0.0, 0.14)], stroke * 0.8, ink);
    if ex.wrinkle {
        for side in [-1.0, 1.0] {
            canvas.polyline(&[frame.to_px(side * 0.1, 0.02), frame.to_px(side * 0.2, 0.12)], stroke, ink);
        }
    }

    // mouth
    let mouth_v = 0.48 + style.mouth_offset;
    let w = ex.mouth_width;
    let curve = ex.mouth_curve * gain;
    let left = frame.to_px(-w, mouth_v - curve - ex.asymmetry * gain);
    let right = frame.to_px(w, mouth_v - curve + ex.asymmetry * gain);
    let ctrl = frame.to_px(0.0, mouth_v + curve);
    if ex.mouth_open > 0.0 {
        let c = frame.to_px(0.0, mouth_v + 0.5 * ex.mouth_open * gain);
        canvas.ellipse(c, (w * frame.rx, (0.5 * ex.mouth_open * gain + 0.03) * frame.ry), angle, ink);
    }
    canvas.polyline(&quad_bezier(left, ctrl, right, 12), stroke, ink);

    let img = canvas.into_image(spec.noise, rng);
    (img, (left_eye, right_eye))
}

fn subject_rng(seed: u64, group: GroupTag, subject: usize) -> ChaCha8Rng {
    let g = match group {
        GroupTag::Female => 1u64,
        GroupTag::Male => 2u64,
    };
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(g.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(subject as u64 + 1);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Renders the whole synthetic corpus in memory. Entry paths are relative
/// (`<subject>/<label>_<k>.pgm`).
pub fn render_synth(spec: &SynthSpec, seed: u64) -> Result<Vec<(ManifestEntry, GrayImage)>, DatasetError> {
    spec.validate()?;
    let n = spec.image_size as f64;
    let mut out = Vec::with_capacity(spec.image_count());
    for group in GroupTag::ALL {
        let style = spec.style(group);
        let prefix = match group {
            GroupTag::Female => "F",
            GroupTag::Male => "M",
        };
        for s in 0..spec.subjects_per_group {
            let mut rng = subject_rng(seed, group, s);
            let id = Identity {
                center: (n * (0.5 + rng.gen_range(-0.03..0.03)), n * (0.52 + rng.gen_range(-0.03..0.03))),
                scale: rng.gen_range(0.92..1.04),
                aspect: rng.gen_range(-0.04..0.04),
                tone: rng.gen_range(-15.0..15.0),
                brow_base: rng.gen_range(0.12..0.17),
                eye_spacing: rng.gen_range(0.36..0.44),
            };
            let subject_id = format!("{prefix}{:03}", s + 1);
            for label in EmotionLabel::ALL {
                for k in 0..spec.images_per_emotion {
                    let (img, eyes) = render_face(spec, style, &id, label, &mut rng);
                    let entry = ManifestEntry {
                        path: format!("{subject_id}/{}_{k}.pgm", label.name().to_lowercase()),
                        label,
                        group,
                        subject_id: subject_id.clone(),
                        eye_landmarks: spec.with_landmarks.then_some(eyes),
                    };
                    out.push((entry, img));
                }
            }
        }
    }
    Ok(out)
}

/// Renders the corpus into `out_dir` and writes `out_dir/manifest.csv`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64, out_dir: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let rendered = render_synth(spec, seed)?;
    let io = |path: &Path, source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut entries = Vec::with_capacity(rendered.len());
    for (entry, img) in rendered {
        let path = out_dir.join(&entry.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        write_pgm(&path, &img)?;
        entries.push(entry);
    }
    write_manifest(out_dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec { subjects_per_group: 3, images_per_emotion: 2, image_size: 48, ..Default::default() }
    }

    #[test]
    fn counts_follow_the_spec() {
        let spec = small_spec();
        let out = render_synth(&spec, 7).unwrap();
        assert_eq!(out.len(), 72);
        assert_eq!(spec.image_count(), 72);
        assert!(out.iter().all(|(_, img)| img.width() == 48 && img.height() == 48));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = small_spec();
        let a = render_synth(&spec, 7).unwrap();
        let b = render_synth(&spec, 7).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.1.pixels() == y.1.pixels() && x.0 == y.0));
        let c = render_synth(&spec, 8).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.1 != y.1));
    }

    #[test]
    fn groups_differ_for_every_emotion() {
        let out = render_synth(&small_spec(), 7).unwrap();
        for label in EmotionLabel::ALL {
            let mean = |g: GroupTag| {
                let imgs: Vec<_> = out.iter().filter(|(e, _)| e.label == label && e.group == g).collect();
                imgs.iter().map(|(_, i)| i.mean()).sum::<f64>() / imgs.len() as f64
            };
            assert!((mean(GroupTag::Female) - mean(GroupTag::Male)).abs() > 0.0, "{label}");
        }
    }

    #[test]
    fn landmarks_are_ordered() {
        for (e, img) in render_synth(&small_spec(), 1).unwrap() {
            let ((lx, ly), (rx, ry)) = e.eye_landmarks.unwrap();
            assert!(lx < rx);
            for v in [lx, ly, rx, ry] {
                assert!(v > 0.0 && v < img.width() as f64);
            }
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        let mut spec = small_spec();
        spec.subjects_per_group = 0;
        assert!(matches!(render_synth(&spec, 0), Err(DatasetError::InvalidSpec(_))));
        let mut spec = small_spec();
        spec.image_size = 4;
        assert!(matches!(render_synth(&spec, 0), Err(DatasetError::InvalidSpec(_))));
    }
}
