//! Seeded synthetic scenes: a tinted background with a slow brightness
//! gradient and soft-edged elliptical blobs of distinct colors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::patchgrid::FeatureMap;
use crate::ppm::PpmImage;

/// Background tints (blue/green water).
const BACKGROUNDS: [[f64; 3]; 3] = [[0.10, 0.45, 0.55], [0.08, 0.35, 0.60], [0.12, 0.50, 0.45]];
/// Blob colors, all far in hue from the backgrounds.
const BLOBS: [[f64; 3]; 5] = [
    [0.95, 0.45, 0.10],
    [0.90, 0.15, 0.30],
    [0.85, 0.80, 0.10],
    [0.75, 0.20, 0.85],
    [0.95, 0.95, 0.90],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Three channels in `[0, 1]`.
    pub image: FeatureMap,
    /// Row-major, `true` inside some blob.
    pub truth_mask: Vec<bool>,
}

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    color: [f64; 3],
}

impl Blob {
    /// Normalized elliptical radius; `< 1` inside.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        (u * u + v * v).sqrt()
    }
}

pub fn synth_scene(seed: u64, width: usize, height: usize, n_blobs: usize) -> Result<SyntheticScene> {
    if width == 0 || height == 0 {
        return Err(Error::Config("scene dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let short = w.min(h);

    let tint = BACKGROUNDS[rng.gen_range(0..BACKGROUNDS.len())];
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (gx, gy) = (angle.cos(), angle.sin());

    let first_color = rng.gen_range(0..BLOBS.len());
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|k| {
            let rx = rng.gen_range(0.2..0.3) * short;
            let ry = rng.gen_range(0.2..0.3) * short;
            let margin = rx.max(ry);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Blob {
                cx: rng.gen_range(margin.min(w / 2.0)..=(w - margin).max(w / 2.0)),
                cy: rng.gen_range(margin.min(h / 2.0)..=(h - margin).max(h / 2.0)),
                rx,
                ry,
                cos: theta.cos(),
                sin: theta.sin(),
                color: BLOBS[(first_color + k) % BLOBS.len()],
            }
        })
        .collect();

    // Edge softness in pixels.
    let soft = 0.75;
    let mut truth_mask = vec![false; width * height];
    let mut data = Vec::with_capacity(width * height * 3);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let t = ((x / w - 0.5) * gx + (y / h - 0.5) * gy) * 0.5 + 0.5;
            let brightness = 0.65 + 0.3 * t;
            let mut px = tint.map(|v| v * brightness);
            for blob in &blobs {
                let rad = blob.radius(x, y);
                if rad < 1.0 {
                    truth_mask[r * width + c] = true;
                }
                let edge_px = (1.0 - rad) * blob.rx.min(blob.ry);
                let a = (edge_px / soft * 0.5 + 0.5).clamp(0.0, 1.0);
                for (p, b) in px.iter_mut().zip(blob.color) {
                    *p = (1.0 - a) * *p + a * b;
                }
            }
            data.extend(px.iter().map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Ok(SyntheticScene {
        image: FeatureMap::new(height, width, 3, data)?,
        truth_mask,
    })
}

impl SyntheticScene {
    /// The image quantized to 8 bits per channel.
    pub fn to_ppm(&self) -> PpmImage {
        let samples = self
            .image
            .data()
            .iter()
            .map(|v| (v * 255.0).round() as u16)
            .collect();
        PpmImage::new(self.image.width(), self.image.height(), 255, samples).expect("scene shape is valid")
    }
}

/// Majority vote of a pixel mask over `cell × cell` blocks.
pub fn pool_mask(mask: &[bool], width: usize, height: usize, cell: usize) -> Vec<bool> {
    let (rows, cols) = (height / cell, width / cell);
    let mut out = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let mut on = 0;
            for r in pr * cell..(pr + 1) * cell {
                for c in pc * cell..(pc + 1) * cell {
                    on += mask[r * width + c] as usize;
                }
            }
            out.push(2 * on >= cell * cell);
        }
    }
    out
}

pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
