//! Dense feature maps, per-patch deformation prediction and deformed patch
//! resampling.
//!
//! Coordinates are continuous feature-cell units: cell `(row, col)` covers
//! `[col, col + 1) × [row, row + 1)` and its center sits at
//! `(col + 0.5, row + 0.5)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softplus, softplus_inverse};

/// Lower and upper bound applied to predicted patch scales.
pub const SCALE_MIN: f64 = 0.8;
pub const SCALE_MAX: f64 = 1.2;

/// Dense `height × width × channels` grid, row-major by (row, col, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "feature map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Config(format!(
                "feature map data has {} values, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                patch: pos / channels,
                what: "feature map value",
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(height > 0 && width > 0 && channels > 0);
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, height: usize, width: usize, channels: usize) -> Self {
        let data = (0..height * width * channels)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Fixed tiling of a feature map into `rows × cols` square patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGridConfig {
    pub pitch: usize,
    pub rows: usize,
    pub cols: usize,
    pub samples_per_side: usize,
}

impl PatchGridConfig {
    /// Derives rows and cols from the map, failing when the pitch does not
    /// divide both spatial dimensions.
    pub fn for_map(fmap: &FeatureMap, pitch: usize, samples_per_side: usize) -> Result<Self> {
        if pitch == 0 || samples_per_side == 0 {
            return Err(Error::Config(
                "patch pitch and samples_per_side must be positive".into(),
            ));
        }
        if fmap.height % pitch != 0 || fmap.width % pitch != 0 {
            return Err(Error::Config(format!(
                "patch pitch {pitch} does not divide a {}x{} map",
                fmap.height, fmap.width
            )));
        }
        Ok(Self {
            pitch,
            rows: fmap.height / pitch,
            cols: fmap.width / pitch,
            samples_per_side,
        })
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn check(&self, fmap: &FeatureMap) -> Result<()> {
        if self.pitch == 0 || self.rows == 0 || self.cols == 0 || self.samples_per_side == 0 {
            return Err(Error::Config("patch grid fields must be positive".into()));
        }
        if self.pitch * self.rows != fmap.height || self.pitch * self.cols != fmap.width {
            return Err(Error::Config(format!(
                "patch grid {}x{} with pitch {} does not tile a {}x{} map",
                self.rows, self.cols, self.pitch, fmap.height, fmap.width
            )));
        }
        Ok(())
    }

    /// Center of the undeformed patch at `(row, col)`.
    pub fn fixed_center(&self, row: usize, col: usize) -> (f64, f64) {
        let p = self.pitch as f64;
        (col as f64 * p + 0.5 * p, row as f64 * p + 0.5 * p)
    }
}

/// Offset and scale for one patch. Offsets are in units of half the pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl Deformation {
    pub const IDENTITY: Self = Self {
        dx: 0.0,
        dy: 0.0,
        dw: 1.0,
        dh: 1.0,
    };

    pub fn in_range(&self) -> bool {
        (-1.0..=1.0).contains(&self.dx)
            && (-1.0..=1.0).contains(&self.dy)
            && (SCALE_MIN..=SCALE_MAX).contains(&self.dw)
            && (SCALE_MIN..=SCALE_MAX).contains(&self.dh)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub patches: Vec<Deformation>,
}

impl DeformationField {
    pub fn identity(count: usize) -> Self {
        Self {
            patches: vec![Deformation::IDENTITY; count],
        }
    }
}

/// Weights of the deformation predictor.
///
/// `conv3x3` holds nine `C × C` blocks, one per neighborhood tap, ordered
/// row-major over the taps `(dr, dc) ∈ {-1, 0, 1}²`; each block is row-major
/// `output × input`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationWeights {
    pub channels: usize,
    pub conv3x3: Vec<f64>,
    pub w_offset: [Vec<f64>; 2],
    pub w_scale: [Vec<f64>; 2],
    pub b_scale: [f64; 2],
}

impl DeformationWeights {
    /// All-zero weights with the bias chosen so that scales are exactly one.
    pub fn identity(channels: usize) -> Self {
        let b = softplus_inverse(1.0);
        Self {
            channels,
            conv3x3: vec![0.0; 9 * channels * channels],
            w_offset: [vec![0.0; channels], vec![0.0; channels]],
            w_scale: [vec![0.0; channels], vec![0.0; channels]],
            b_scale: [b, b],
        }
    }

    /// Uniform weights in `±scale` around the identity predictor.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, channels: usize, scale: f64) -> Self {
        let mut w = Self::identity(channels);
        let mut fill = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
        };
        fill(&mut w.conv3x3);
        for k in 0..2 {
            fill(&mut w.w_offset[k]);
            fill(&mut w.w_scale[k]);
        }
        w
    }

    #[inline]
    pub fn conv_tap(&self, tap: usize, out: usize, inp: usize) -> f64 {
        let c = self.channels;
        self.conv3x3[(tap * c + out) * c + inp]
    }

    fn check(&self, channels: usize) -> Result<()> {
        let c = self.channels;
        if c != channels
            || self.conv3x3.len() != 9 * c * c
            || self.w_offset.iter().chain(&self.w_scale).any(|r| r.len() != c)
        {
            return Err(Error::Config(format!(
                "deformation weights are shaped for {c} channels, map has {channels}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchNode {
    pub id: usize,
    pub grid_pos: (usize, usize),
    pub center: (f64, f64),
    pub extent: (f64, f64),
    pub feature: Vec<f64>,
}

pub fn pool_fixed_patches(fmap: &FeatureMap, cfg: &PatchGridConfig) -> Result<Vec<PatchNode>> {
    cfg.check(fmap)?;
    let p = cfg.pitch;
    let count = (p * p) as f64;
    let nodes = (0..cfg.node_count())
        .map(|id| {
            let (pr, pc) = (id / cfg.cols, id % cfg.cols);
            let mut feature = vec![0.0; fmap.channels];
            for r in pr * p..(pr + 1) * p {
                for c in pc * p..(pc + 1) * p {
                    for (acc, v) in feature.iter_mut().zip(fmap.pixel(r, c)) {
                        *acc += v;
                    }
                }
            }
            for v in feature.iter_mut() {
                *v /= count;
            }
            PatchNode {
                id,
                grid_pos: (pr, pc),
                center: cfg.fixed_center(pr, pc),
                extent: (p as f64, p as f64),
                feature,
            }
        })
        .collect();
    Ok(nodes)
}

/// Runs the 3×3 neighborhood predictor over pooled patch features and maps
/// the hidden vector to offsets (`tanh`) and clamped scales (`softplus`).
pub fn predict_deformation(
    fmap: &FeatureMap,
    cfg: &PatchGridConfig,
    weights: &DeformationWeights,
) -> Result<DeformationField> {
    weights.check(fmap.channels)?;
    let pooled = pool_fixed_patches(fmap, cfg)?;
    let c = fmap.channels;
    let (rows, cols) = (cfg.rows as isize, cfg.cols as isize);

    let mut patches = Vec::with_capacity(pooled.len());
    let mut hidden = vec![0.0; c];
    for node in &pooled {
        let (pr, pc) = (node.grid_pos.0 as isize, node.grid_pos.1 as isize);
        hidden.iter_mut().for_each(|h| *h = 0.0);
        for tap in 0..9 {
            let (nr, nc) = (pr + tap as isize / 3 - 1, pc + tap as isize % 3 - 1);
            if nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                continue;
            }
            let neighbor = &pooled[(nr * cols + nc) as usize].feature;
            for (o, h) in hidden.iter_mut().enumerate() {
                for (i, x) in neighbor.iter().enumerate() {
                    *h += weights.conv_tap(tap, o, i) * x;
                }
            }
        }
        let proj = |row: &[f64]| -> f64 { row.iter().zip(&hidden).map(|(w, h)| w * h).sum() };
        let d = Deformation {
            dx: proj(&weights.w_offset[0]).tanh(),
            dy: proj(&weights.w_offset[1]).tanh(),
            dw: softplus(proj(&weights.w_scale[0]) + weights.b_scale[0]).clamp(SCALE_MIN, SCALE_MAX),
            dh: softplus(proj(&weights.w_scale[1]) + weights.b_scale[1]).clamp(SCALE_MIN, SCALE_MAX),
        };
        if ![d.dx, d.dy, d.dw, d.dh].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                patch: node.id,
                what: "deformation parameter",
            });
        }
        patches.push(d);
    }
    Ok(DeformationField { patches })
}

/// Bilinear interpolation between cell centers; coordinates outside the map
/// are clamped to the outermost centers.
pub fn bilinear_sample(fmap: &FeatureMap, x: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; fmap.channels];
    bilinear_accumulate(fmap, x, y, &mut out);
    out
}

/// Adds the bilinear sample at `(x, y)` into `acc`.
pub(crate) fn bilinear_accumulate(fmap: &FeatureMap, x: f64, y: f64, acc: &mut [f64]) {
    let u = (x - 0.5).clamp(0.0, (fmap.width - 1) as f64);
    let v = (y - 0.5).clamp(0.0, (fmap.height - 1) as f64);
    let (c0, r0) = (u.floor() as usize, v.floor() as usize);
    let (c1, r1) = ((c0 + 1).min(fmap.width - 1), (r0 + 1).min(fmap.height - 1));
    let (fu, fv) = (u - c0 as f64, v - r0 as f64);
    let w00 = (1.0 - fu) * (1.0 - fv);
    let w01 = fu * (1.0 - fv);
    let w10 = (1.0 - fu) * fv;
    let w11 = fu * fv;
    let (p00, p01, p10, p11) = (
        fmap.pixel(r0, c0),
        fmap.pixel(r0, c1),
        fmap.pixel(r1, c0),
        fmap.pixel(r1, c1),
    );
    for ch in 0..fmap.channels {
        acc[ch] += w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
    }
}

/// Largest representable value strictly below a positive `bound`.
fn below(bound: f64) -> f64 {
    f64::from_bits(bound.to_bits() - 1)
}

/// Resamples every patch inside its deformed window.
pub fn extract_deformed_patches(
    fmap: &FeatureMap,
    cfg: &PatchGridConfig,
    field: &DeformationField,
) -> Result<Vec<PatchNode>> {
    cfg.check(fmap)?;
    if field.patches.len() != cfg.node_count() {
        return Err(Error::Config(format!(
            "deformation field has {} patches, grid has {}",
            field.patches.len(),
            cfg.node_count()
        )));
    }
    let pitch = cfg.pitch as f64;
    let (w_map, h_map) = (fmap.width as f64, fmap.height as f64);
    let s = cfg.samples_per_side;

    let nodes = field
        .patches
        .par_iter()
        .enumerate()
        .map(|(id, d)| {
            let (pr, pc) = (id / cfg.cols, id % cfg.cols);
            let (fx, fy) = cfg.fixed_center(pr, pc);
            let (cx, cy) = (fx + d.dx * 0.5 * pitch, fy + d.dy * 0.5 * pitch);
            let (ew, eh) = (d.dw * pitch, d.dh * pitch);

            let x0 = (cx - 0.5 * ew).max(0.0);
            let x1 = (cx + 0.5 * ew).min(w_map);
            let y0 = (cy - 0.5 * eh).max(0.0);
            let y1 = (cy + 0.5 * eh).min(h_map);
            let (sx, sy) = ((x1 - x0) / s as f64, (y1 - y0) / s as f64);

            let mut feature = vec![0.0; fmap.channels];
            for i in 0..s {
                let y = y0 + (i as f64 + 0.5) * sy;
                for j in 0..s {
                    let x = x0 + (j as f64 + 0.5) * sx;
                    bilinear_accumulate(fmap, x, y, &mut feature);
                }
            }
            let count = (s * s) as f64;
            for v in feature.iter_mut() {
                *v /= count;
            }
            PatchNode {
                id,
                grid_pos: (pr, pc),
                center: (cx.clamp(0.0, below(w_map)), cy.clamp(0.0, below(h_map))),
                extent: (ew, eh),
                feature,
            }
        })
        .collect();
    Ok(nodes)
}
