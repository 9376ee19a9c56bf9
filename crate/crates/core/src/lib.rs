//! Forward-inference engine for dynamic tree-scan selective state space
//! blocks.
//!
//! A block deforms a fixed patch tiling of a feature map, links the patches
//! into a minimum spanning tree over hybrid spatial/semantic dissimilarities,
//! splits the tree into foreground and background by normalized cut, and
//! propagates hidden states along tree paths with background source terms
//! weakened.

pub mod block;
pub mod cli;
pub mod error;
pub mod hsw;
pub mod mst;
pub mod nn;
pub mod oracle;
pub mod patchgrid;
pub mod ppm;
pub mod scene;
pub mod spectral;
pub mod ssm;

pub use error::{Error, Result};
