use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::block::{Backbone, BackboneOutput, BlockDiagnostics, STEM_POOL};
use crate::error::Result;
use crate::hsw::CutMethod;
use crate::patchgrid::FeatureMap;
use crate::ppm::{self, PpmImage};

pub const REPORT_VERSION: &str = "1.0.0";

pub const MASK_FILE: &str = "mask.ppm";
pub const TREE_FILE: &str = "tree.svg";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub spec_version: &'static str,
    pub image: ImageInfo,
    pub config: RunConfig,
    pub timing_ms: Timing,
    pub mask: MaskInfo,
    pub stages: Vec<StageReport>,
    pub artifacts: Artifacts,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub total: f64,
    pub stages: Vec<f64>,
}

/// The first block of the first stage.
#[derive(Debug, Clone, Serialize)]
pub struct MaskInfo {
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub foreground_fraction: f64,
    pub ncut_value: Option<f64>,
    pub cut_method: Option<CutMethod>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub sha256: String,
    pub blocks: Vec<BlockReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub ncut_value: Option<f64>,
    pub cut_method: Option<CutMethod>,
    pub foreground_fraction: f64,
    pub mst_total_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub mask_sha256: String,
    pub tree_sha256: String,
}

/// Everything `forward` writes, held in memory.
#[derive(Debug, Clone)]
pub struct ForwardArtifacts {
    pub mask_ppm: Vec<u8>,
    pub tree_svg: String,
    pub report: RunReport,
}

impl ForwardArtifacts {
    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MASK_FILE), &self.mask_ppm)?;
        std::fs::write(dir.join(TREE_FILE), &self.tree_svg)?;
        std::fs::write(dir.join(REPORT_FILE), self.report_json())?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// SHA-256 of the tensor's values as little-endian `f64` bytes.
pub fn tensor_sha256(fmap: &FeatureMap) -> String {
    let bytes: Vec<u8> = fmap.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

fn block_report(d: &BlockDiagnostics) -> BlockReport {
    let mask = d.mask();
    BlockReport {
        ncut_value: d.ncut_value(),
        cut_method: d.partition.as_ref().map(|p| p.method),
        foreground_fraction: fraction(&mask),
        mst_total_weight: d.tree.total_weight(),
    }
}

fn fraction(mask: &[bool]) -> f64 {
    mask.iter().filter(|&&m| m).count() as f64 / mask.len().max(1) as f64
}

/// Patch mask of the first stage's first block, expanded to image pixels.
pub fn image_mask(d: &BlockDiagnostics, width: usize, height: usize) -> Vec<bool> {
    let unit = STEM_POOL * d.grid.pitch;
    let mask = d.mask();
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (pr, pc) = ((r / unit).min(d.grid.rows - 1), (c / unit).min(d.grid.cols - 1));
            out.push(mask[pr * d.grid.cols + pc]);
        }
    }
    out
}

/// MST edges over patch centers in image pixels, stroke width proportional
/// to `exp(−w)`; foreground nodes filled red, background blue.
pub fn tree_svg(d: &BlockDiagnostics, width: usize, height: usize) -> String {
    let scale = STEM_POOL as f64;
    let unit = scale * d.grid.pitch as f64;
    let max_sim = d
        .tree
        .edges()
        .iter()
        .map(|e| (-e.weight).exp())
        .fold(0.0, f64::max);
    let stroke_scale = if max_sim > 0.0 { 0.3 * unit / max_sim } else { 0.0 };
    let mask = d.mask();
    let center = |i: usize| (d.nodes[i].center.0 * scale, d.nodes[i].center.1 * scale);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<g stroke="#333333" stroke-linecap="round">"##);
    for e in d.tree.edges() {
        let ((x1, y1), (x2, y2)) = (center(e.a), center(e.b));
        let _ = writeln!(
            s,
            r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke-width="{:.4}"/>"#,
            stroke_scale * (-e.weight).exp()
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "<g>");
    let radius = 0.15 * unit;
    for (i, &fg) in mask.iter().enumerate() {
        let (x, y) = center(i);
        let fill = if fg { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{radius:.3}" fill="{fill}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

/// Runs the backbone on an image and renders every artifact.
pub fn run_forward(image: &PpmImage, config: &RunConfig) -> Result<(ForwardArtifacts, BackboneOutput)> {
    config.check()?;
    let backbone = Backbone::seeded(config.backbone_config(), 3, config.seed)?;
    let start = Instant::now();
    let output = backbone.forward(&image.to_feature_map())?;
    let total = start.elapsed().as_secs_f64() * 1e3;

    let first = &output.diagnostics[0][0];
    let (w, h) = (image.width, image.height);
    let mask_ppm = ppm::encode(&PpmImage::from_mask(w, h, &image_mask(first, w, h))?);
    let tree_svg = tree_svg(first, w, h);
    let first_mask = first.mask();

    let image_bytes = ppm::encode(image);
    let report = RunReport {
        spec_version: REPORT_VERSION,
        image: ImageInfo {
            width: w,
            height: h,
            maxval: image.maxval,
            sha256: sha256_hex(&image_bytes),
        },
        config: config.clone(),
        timing_ms: Timing {
            total,
            stages: output.stage_millis.clone(),
        },
        mask: MaskInfo {
            patch_rows: first.grid.rows,
            patch_cols: first.grid.cols,
            foreground_fraction: fraction(&first_mask),
            ncut_value: first.ncut_value(),
            cut_method: first.partition.as_ref().map(|p| p.method),
        },
        stages: output
            .stages
            .iter()
            .zip(&output.diagnostics)
            .map(|(fmap, diags)| StageReport {
                height: fmap.height(),
                width: fmap.width(),
                channels: fmap.channels(),
                sha256: tensor_sha256(fmap),
                blocks: diags.iter().map(block_report).collect(),
            })
            .collect(),
        artifacts: Artifacts {
            mask_sha256: sha256_hex(&mask_ppm),
            tree_sha256: sha256_hex(tree_svg.as_bytes()),
        },
    };
    Ok((
        ForwardArtifacts {
            mask_ppm,
            tree_svg,
            report,
        },
        output,
    ))
}
