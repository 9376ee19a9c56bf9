//! The tree-scan block and the staged backbone built from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsw::{hidden_state_weaken, HswConfig, Partition};
use crate::mst::{boruvka_mst, build_lattice, EdgeWeightConfig, SpanningTree};
use crate::nn::{layer_norm_in_place, sigmoid, Linear};
use crate::patchgrid::{
    extract_deformed_patches, predict_deformation, DeformationWeights, FeatureMap, PatchGridConfig,
    PatchNode,
};
use crate::ssm::{tree_scan, ScanOptions, SsmParams};

/// Spatial reduction of the stem.
pub const STEM_POOL: usize = 4;
/// Spatial reduction between consecutive stages.
pub const STAGE_DOWNSAMPLE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// `C → D`
    pub in_proj: Linear,
    /// `D → C`
    pub out_proj: Linear,
    /// `C → D`, squashed by a sigmoid.
    pub gate_proj: Linear,
    pub ssm: SsmParams,
    pub deform: DeformationWeights,
    pub edge_cfg: EdgeWeightConfig,
    pub hsw_cfg: HswConfig,
}

impl BlockParams {
    /// Seeded weights with a near-identity deformation predictor.
    pub fn random(
        rng: &mut ChaCha8Rng,
        channels: usize,
        inner: usize,
        state_size: usize,
        edge_cfg: EdgeWeightConfig,
        hsw_cfg: HswConfig,
    ) -> Self {
        Self {
            in_proj: Linear::random(rng, channels, inner, 1.0),
            out_proj: Linear::random(rng, inner, channels, 1.0),
            gate_proj: Linear::random(rng, channels, inner, 1.0),
            ssm: SsmParams::random(rng, inner, state_size),
            deform: DeformationWeights::random(rng, channels, 0.01),
            edge_cfg,
            hsw_cfg,
        }
    }

    pub fn channels(&self) -> usize {
        self.in_proj.inputs
    }

    pub fn check(&self, channels: usize) -> Result<()> {
        let d = self.ssm.channels;
        self.ssm.check()?;
        self.edge_cfg.check()?;
        self.hsw_cfg.check()?;
        let ok = [&self.in_proj, &self.out_proj, &self.gate_proj].iter().all(|l| l.shape_ok())
            && (self.in_proj.inputs, self.in_proj.outputs) == (channels, d)
            && (self.gate_proj.inputs, self.gate_proj.outputs) == (channels, d)
            && (self.out_proj.inputs, self.out_proj.outputs) == (d, channels)
            && self.deform.channels == channels;
        if !ok {
            return Err(Error::Config(format!(
                "block parameters do not match {channels} channels / inner width {d}"
            )));
        }
        Ok(())
    }
}

/// Per-block intermediate results.
#[derive(Debug, Clone)]
pub struct BlockDiagnostics {
    pub grid: PatchGridConfig,
    pub nodes: Vec<PatchNode>,
    pub tree: SpanningTree,
    pub partition: Option<Partition>,
    pub phi: Vec<f64>,
}

impl BlockDiagnostics {
    pub fn ncut_value(&self) -> Option<f64> {
        self.partition.as_ref().map(|p| p.ncut_value)
    }

    /// Foreground mask; a single patch counts as foreground.
    pub fn mask(&self) -> Vec<bool> {
        match &self.partition {
            Some(p) => p.mask.clone(),
            None => vec![true; self.nodes.len()],
        }
    }
}

fn normalize_positions(fmap: &FeatureMap) -> FeatureMap {
    let mut out = fmap.clone();
    let c = out.channels();
    for px in out.data_mut().chunks_mut(c) {
        layer_norm_in_place(px);
    }
    out
}

/// One tree-scan block: normalize, deform patches, build the spanning tree,
/// partition it, scan, gate, project back and add to the input.
pub fn uis_vss_block(
    fmap: &FeatureMap,
    params: &BlockParams,
    cfg: &PatchGridConfig,
) -> Result<(FeatureMap, BlockDiagnostics)> {
    params.check(fmap.channels())?;
    cfg.check(fmap)?;

    let normed = normalize_positions(fmap);
    let field = predict_deformation(&normed, cfg, &params.deform)?;
    let nodes = extract_deformed_patches(&normed, cfg, &field)?;
    let graph = build_lattice(&nodes, cfg.rows, cfg.cols, &params.edge_cfg)?;
    let tree = boruvka_mst(&graph)?;
    let (partition, phi) = hidden_state_weaken(&tree, &params.hsw_cfg)?;

    let inner: Vec<Vec<f64>> = nodes.iter().map(|n| params.in_proj.apply(&n.feature)).collect();
    let scan = tree_scan(&tree, &inner, &params.ssm, &phi.phi, ScanOptions::default())?;

    let mut out = fmap.clone();
    let p = cfg.pitch;
    let mut gated = vec![0.0; params.ssm.channels];
    let mut delta = vec![0.0; fmap.channels()];
    for node in &nodes {
        let gate = params.gate_proj.apply(&node.feature);
        for ((g, y), z) in gated.iter_mut().zip(scan.output(node.id)).zip(&gate) {
            *g = y * sigmoid(*z);
        }
        params.out_proj.apply_into(&gated, &mut delta);
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                patch: node.id,
                what: "block output",
            });
        }
        let (pr, pc) = node.grid_pos;
        for r in pr * p..(pr + 1) * p {
            for c in pc * p..(pc + 1) * p {
                for (o, d) in out.pixel_mut(r, c).iter_mut().zip(&delta) {
                    *o += d;
                }
            }
        }
    }

    let diagnostics = BlockDiagnostics {
        grid: *cfg,
        nodes,
        tree,
        partition,
        phi: phi.phi,
    };
    Ok((out, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub depth: usize,
    pub channels: usize,
    pub patch_pitch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stages: Vec<StageConfig>,
    pub state_size: usize,
    pub samples_per_side: usize,
    pub alpha: f64,
    pub hsw: HswConfig,
}

impl BackboneConfig {
    /// Desk-scale preset: widths 8/16/32/64, depths 1/1/2/1, pitch 1.
    pub fn tiny() -> Self {
        let stage = |depth, channels| StageConfig {
            depth,
            channels,
            patch_pitch: 1,
        };
        Self {
            stages: vec![stage(1, 8), stage(1, 16), stage(2, 32), stage(1, 64)],
            state_size: 4,
            samples_per_side: 2,
            alpha: 0.5,
            hsw: HswConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if let Some(s) = self
            .stages
            .iter()
            .find(|s| s.depth == 0 || s.channels == 0 || s.patch_pitch == 0)
        {
            return Err(Error::Config(format!("invalid stage {s:?}")));
        }
        if self.state_size == 0 || self.samples_per_side == 0 {
            return Err(Error::Config("state_size and samples_per_side must be positive".into()));
        }
        EdgeWeightConfig::new(self.alpha, 1.0)?;
        self.hsw.check()
    }

    /// Spatial reduction from the image to stage `k` (0-based).
    pub fn stage_stride(&self, k: usize) -> usize {
        STEM_POOL * STAGE_DOWNSAMPLE.pow(k as u32)
    }

    /// Fails unless every stage grid is tiled exactly by its patch pitch.
    pub fn check_image(&self, height: usize, width: usize) -> Result<()> {
        for (k, s) in self.stages.iter().enumerate() {
            let unit = self.stage_stride(k) * s.patch_pitch;
            if height % unit != 0 || width % unit != 0 {
                return Err(Error::ImageShape(format!(
                    "image {height}x{width} not divisible by {unit} (stage {} stride x pitch)",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    /// Channel projection after 2×2 pooling; `None` for the first stage.
    pub downsample: Option<Linear>,
    pub blocks: Vec<BlockParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub in_channels: usize,
    pub stem: Linear,
    pub stages: Vec<StageParams>,
}

#[derive(Debug, Clone)]
pub struct BackboneOutput {
    pub stages: Vec<FeatureMap>,
    /// Per stage, per block.
    pub diagnostics: Vec<Vec<BlockDiagnostics>>,
    /// Wall time of each stage in milliseconds.
    pub stage_millis: Vec<f64>,
}

impl Backbone {
    pub fn seeded(config: BackboneConfig, in_channels: usize, seed: u64) -> Result<Self> {
        config.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Linear::random(&mut rng, in_channels, config.stages[0].channels, 1.0);
        let mut prev = config.stages[0].channels;
        let mut stages = Vec::with_capacity(config.stages.len());
        for (k, s) in config.stages.iter().enumerate() {
            let downsample = (k > 0).then(|| Linear::random(&mut rng, prev, s.channels, 1.0));
            let edge_cfg = EdgeWeightConfig::new(config.alpha, s.patch_pitch as f64)?;
            let blocks = (0..s.depth)
                .map(|_| {
                    BlockParams::random(&mut rng, s.channels, s.channels, config.state_size, edge_cfg, config.hsw)
                })
                .collect();
            stages.push(StageParams { downsample, blocks });
            prev = s.channels;
        }
        Ok(Self {
            config,
            in_channels,
            stem,
            stages,
        })
    }

    /// Zeroes every block's output projection so each block is the identity.
    pub fn zero_out_projections(&mut self) {
        for stage in &mut self.stages {
            for block in &mut stage.blocks {
                let (i, o) = (block.out_proj.inputs, block.out_proj.outputs);
                block.out_proj = Linear::zeros(i, o);
            }
        }
    }

    pub fn forward(&self, image: &FeatureMap) -> Result<BackboneOutput> {
        backbone_forward(image, self)
    }
}

/// Non-overlapping `factor × factor` mean pooling followed by a per-pixel
/// channel projection.
pub fn pool_project(fmap: &FeatureMap, factor: usize, proj: &Linear) -> Result<FeatureMap> {
    if fmap.height() % factor != 0 || fmap.width() % factor != 0 {
        return Err(Error::Config(format!(
            "{}x{} map not divisible by pooling factor {factor}",
            fmap.height(),
            fmap.width()
        )));
    }
    if proj.inputs != fmap.channels() {
        return Err(Error::Config(format!(
            "projection expects {} channels, map has {}",
            proj.inputs,
            fmap.channels()
        )));
    }
    let (h, w) = (fmap.height() / factor, fmap.width() / factor);
    let c = fmap.channels();
    let norm = (factor * factor) as f64;
    let mut data = Vec::with_capacity(h * w * proj.outputs);
    let mut pooled = vec![0.0; c];
    let mut projected = vec![0.0; proj.outputs];
    for r in 0..h {
        for col in 0..w {
            pooled.iter_mut().for_each(|v| *v = 0.0);
            for rr in r * factor..(r + 1) * factor {
                for cc in col * factor..(col + 1) * factor {
                    for (acc, v) in pooled.iter_mut().zip(fmap.pixel(rr, cc)) {
                        *acc += v;
                    }
                }
            }
            pooled.iter_mut().for_each(|v| *v /= norm);
            proj.apply_into(&pooled, &mut projected);
            data.extend_from_slice(&projected);
        }
    }
    FeatureMap::new(h, w, proj.outputs, data)
}

pub fn backbone_forward(image: &FeatureMap, backbone: &Backbone) -> Result<BackboneOutput> {
    let config = &backbone.config;
    config.check()?;
    config.check_image(image.height(), image.width())?;
    if image.channels() != backbone.in_channels {
        return Err(Error::ImageShape(format!(
            "backbone expects {} input channels, image has {}",
            backbone.in_channels,
            image.channels()
        )));
    }

    let mut x = pool_project(image, STEM_POOL, &backbone.stem)?;
    let mut outputs = Vec::with_capacity(config.stages.len());
    let mut diagnostics = Vec::with_capacity(config.stages.len());
    let mut stage_millis = Vec::with_capacity(config.stages.len());
    for (stage_cfg, stage) in config.stages.iter().zip(&backbone.stages) {
        let start = std::time::Instant::now();
        if let Some(proj) = &stage.downsample {
            x = pool_project(&x, STAGE_DOWNSAMPLE, proj)?;
        }
        let grid = PatchGridConfig::for_map(&x, stage_cfg.patch_pitch, config.samples_per_side)?;
        let mut stage_diag = Vec::with_capacity(stage.blocks.len());
        for block in &stage.blocks {
            let (next, diag) = uis_vss_block(&x, block, &grid)?;
            x = next;
            stage_diag.push(diag);
        }
        stage_millis.push(start.elapsed().as_secs_f64() * 1e3);
        outputs.push(x.clone());
        diagnostics.push(stage_diag);
    }
    Ok(BackboneOutput {
        stages: outputs,
        diagnostics,
        stage_millis,
    })
}
