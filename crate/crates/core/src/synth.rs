//! Procedural fixture corpora.
//!
//! Renders small fundus-photograph-like images: a dark retinal disc, a
//! bright optic disc, vessel-like random walks, plus per-class effects
//! (lens haze, microaneurysm spots, enlarged optic cup). The same
//! primitives drive two tasks:
//!
//! * the 4-class target corpus (`cataract`, `diabetic_retinopathy`,
//!   `glaucoma`, `normal`) used by tests and demos, and
//! * an 8-class source task (spot density × vessel thickness × haze) used
//!   to pretrain the backbone on related low-level features.
//!
//! Everything is seeded and deterministic.

use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ImageTensor;

pub const FUNDUS_CLASSES: [&str; 4] = ["cataract", "diabetic_retinopathy", "glaucoma", "normal"];
pub const SOURCE_CLASSES: usize = 8;

struct Canvas {
    px: Array3<f32>, // (H, W, 3)
    side: usize,
}

impl Canvas {
    fn new(side: usize) -> Self {
        Self {
            px: Array3::zeros((side, side, 3)),
            side,
        }
    }

    fn blend(&mut self, x: i64, y: i64, color: [f32; 3], alpha: f32) {
        if x < 0 || y < 0 || x >= self.side as i64 || y >= self.side as i64 {
            return;
        }
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            let v = self.px[[y, x, c]];
            self.px[[y, x, c]] = (v * (1.0 - alpha) + color[c] * alpha).clamp(0.0, 1.0);
        }
    }

    fn disc(&mut self, cx: f32, cy: f32, r: f32, color: [f32; 3], alpha: f32) {
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                if d2 <= r * r {
                    self.blend(x, y, color, alpha);
                }
            }
        }
    }

    /// Radially shaded retina background.
    fn retina(&mut self, rng: &mut ChaCha8Rng) {
        let s = self.side as f32;
        let (cx, cy) = (s / 2.0, s / 2.0);
        let r = s * 0.48;
        let tint = rng.gen_range(-0.04f32..0.04);
        for y in 0..self.side {
            for x in 0..self.side {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                if d <= r {
                    let shade = 1.0 - 0.5 * (d / r).powi(2);
                    self.px[[y, x, 0]] = (0.62 + tint) * shade;
                    self.px[[y, x, 1]] = (0.28 + tint * 0.5) * shade;
                    self.px[[y, x, 2]] = 0.10 * shade;
                }
            }
        }
    }

    /// Vessel-like random walk out of the optic disc.
    fn vessel(&mut self, rng: &mut ChaCha8Rng, start: (f32, f32), thickness: f32) {
        let color = [0.34, 0.07, 0.05];
        let mut angle = rng.gen_range(0.0f32..std::f32::consts::TAU);
        let (mut x, mut y) = start;
        let steps = self.side * 2;
        for _ in 0..steps {
            angle += rng.gen_range(-0.35f32..0.35);
            x += angle.cos() * 0.9;
            y += angle.sin() * 0.9;
            self.disc(x, y, thickness, color, 0.85);
        }
    }

    fn haze(&mut self, strength: f32) {
        let gray = [0.82, 0.80, 0.72];
        let s = self.side as f32;
        let (cx, cy) = (s / 2.0, s / 2.0);
        let r = s * 0.48;
        for y in 0..self.side {
            for x in 0..self.side {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                if d <= r {
                    for c in 0..3 {
                        let v = self.px[[y, x, c]];
                        self.px[[y, x, c]] = v * (1.0 - strength) + gray[c] * strength;
                    }
                }
            }
        }
    }

    fn noise(&mut self, rng: &mut ChaCha8Rng, amp: f32) {
        for v in self.px.iter_mut() {
            *v = (*v + rng.gen_range(-amp..amp)).clamp(0.0, 1.0);
        }
    }
}

struct SceneParams {
    optic_scale: f32,
    cup: bool,
    vessels: usize,
    vessel_thickness: f32,
    spots: usize,
    exudates: usize,
    haze: f32,
}

fn render(side: usize, rng: &mut ChaCha8Rng, p: &SceneParams) -> Array3<f32> {
    let mut canvas = Canvas::new(side);
    let s = side as f32;
    canvas.retina(rng);

    // optic disc somewhere off-center
    let angle = rng.gen_range(0.0f32..std::f32::consts::TAU);
    let dist = rng.gen_range(0.12f32..0.22) * s;
    let (ox, oy) = (s / 2.0 + angle.cos() * dist, s / 2.0 + angle.sin() * dist);
    let od_r = s * 0.07 * p.optic_scale;
    canvas.disc(ox, oy, od_r, [0.95, 0.82, 0.50], 0.9);
    if p.cup {
        canvas.disc(ox, oy, od_r * 0.72, [1.0, 0.97, 0.80], 0.9);
    }

    for _ in 0..p.vessels {
        canvas.vessel(rng, (ox, oy), p.vessel_thickness);
    }

    // lesions: dark spots then bright exudates
    for _ in 0..p.spots {
        let a = rng.gen_range(0.0f32..std::f32::consts::TAU);
        let d = rng.gen_range(0.0f32..0.42) * s;
        let r = rng.gen_range(0.8f32..2.0);
        canvas.disc(
            s / 2.0 + a.cos() * d,
            s / 2.0 + a.sin() * d,
            r,
            [0.30, 0.04, 0.04],
            0.95,
        );
    }
    for _ in 0..p.exudates {
        let a = rng.gen_range(0.0f32..std::f32::consts::TAU);
        let d = rng.gen_range(0.05f32..0.40) * s;
        let r = rng.gen_range(1.0f32..2.5);
        canvas.disc(
            s / 2.0 + a.cos() * d,
            s / 2.0 + a.sin() * d,
            r,
            [0.92, 0.88, 0.42],
            0.9,
        );
    }

    if p.haze > 0.0 {
        canvas.haze(p.haze);
    }
    canvas.noise(rng, 0.02);
    canvas.px
}

/// Render one target-task image for class index `label`
/// (order matches [`FUNDUS_CLASSES`]).
pub fn fundus_image(label: usize, side: usize, rng: &mut ChaCha8Rng) -> Array3<f32> {
    let params = match label {
        // cataract: strong lens haze washes out contrast
        0 => SceneParams {
            optic_scale: 1.0,
            cup: false,
            vessels: 6,
            vessel_thickness: 1.0,
            spots: 0,
            exudates: 0,
            haze: 0.45,
        },
        // diabetic retinopathy: microaneurysms and exudates
        1 => SceneParams {
            optic_scale: 1.0,
            cup: false,
            vessels: 6,
            vessel_thickness: 1.0,
            spots: 20,
            exudates: 4,
            haze: 0.0,
        },
        // glaucoma: enlarged optic disc with a pale cup
        2 => SceneParams {
            optic_scale: 1.9,
            cup: true,
            vessels: 6,
            vessel_thickness: 1.0,
            spots: 0,
            exudates: 0,
            haze: 0.0,
        },
        // normal
        3 => SceneParams {
            optic_scale: 1.0,
            cup: false,
            vessels: 6,
            vessel_thickness: 1.0,
            spots: 0,
            exudates: 0,
            haze: 0.0,
        },
        _ => panic!("fundus class index out of range: {label}"),
    };
    render(side, rng, &params)
}

/// Render one source-task image. The 8 classes are the combinations of
/// (many spots, thick vessels, haze), sharing the target task's visual
/// primitives without replicating its labels.
pub fn source_image(label: usize, side: usize, rng: &mut ChaCha8Rng) -> Array3<f32> {
    assert!(label < SOURCE_CLASSES);
    let many_spots = label & 1 != 0;
    let thick = label & 2 != 0;
    let haze = label & 4 != 0;
    let params = SceneParams {
        optic_scale: rng.gen_range(0.8f32..1.3),
        cup: false,
        vessels: if thick { 4 } else { 7 },
        vessel_thickness: if thick { 2.0 } else { 1.0 },
        spots: if many_spots { 18 } else { 2 },
        exudates: if many_spots { 3 } else { 0 },
        haze: if haze { 0.4 } else { 0.0 },
    };
    render(side, rng, &params)
}

fn image_rng(seed: u64, label: usize, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (label as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03),
    )
}

/// In-memory source corpus for pretraining: (images HWC in [0,1], labels).
pub fn source_corpus(per_class: usize, side: usize, seed: u64) -> (Vec<Array3<f32>>, Vec<usize>) {
    let mut images = Vec::with_capacity(per_class * SOURCE_CLASSES);
    let mut labels = Vec::with_capacity(per_class * SOURCE_CLASSES);
    for label in 0..SOURCE_CLASSES {
        for i in 0..per_class {
            let mut rng = image_rng(seed, label, i);
            images.push(source_image(label, side, &mut rng));
            labels.push(label);
        }
    }
    (images, labels)
}

/// Write a folder-per-class target corpus of PNGs under `dir`.
pub fn write_fundus_corpus(
    dir: &Path,
    per_class: usize,
    side: usize,
    seed: u64,
) -> std::io::Result<()> {
    for (label, name) in FUNDUS_CLASSES.iter().enumerate() {
        let class_dir = dir.join(name);
        std::fs::create_dir_all(&class_dir)?;
        for i in 0..per_class {
            let mut rng = image_rng(seed, label, i);
            let px = fundus_image(label, side, &mut rng);
            ImageTensor::from_pixels(px)
                .save_png(&class_dir.join(format!("{name}_{i:04}.png")))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
    }
    Ok(())
}
