//! The HRAN network: shallow feature extraction, residual groups of hybrid
//! residual attention blocks, binarized (or hierarchical) feature fusion with
//! a global skip, and a sub-pixel reconstruction head.
//!
//! Blocks are stateless descriptions holding parameter names; values live in a
//! [`ParamStore`]. Every block exposes a forward pass that returns a cache and
//! a backward pass that consumes it, accumulating parameter gradients into the
//! store and returning the gradient with respect to the block input.

mod blocks;
mod checkpoint;
mod fusion;
mod network;
mod params;

use std::fmt;

use crate::{Error, Result};

pub use blocks::{ChannelAttention, Conv, Hrab, ResidualGroup, SpatialAttention};
pub use checkpoint::{Checkpoint, OptimizerSnapshot, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fusion::Fusion;
pub use network::{init_params, param_breakdown, param_count, BlockOutputCache, Hran, Reconstruct};
pub use params::{Param, ParamSpec, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// Pairwise tree of concat + 1×1 merges over residual group outputs.
    Binarized,
    /// A single concat of all residual group outputs reduced by one 1×1 conv.
    Hierarchical,
}

impl FusionMode {
    pub fn code(self) -> u32 {
        match self {
            FusionMode::Binarized => 0,
            FusionMode::Hierarchical => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(FusionMode::Binarized),
            1 => Ok(FusionMode::Hierarchical),
            other => Err(Error::Config(format!("unknown fusion mode code {other}"))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Binarized => "bff",
            FusionMode::Hierarchical => "hff",
        })
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bff" | "binarized" => Ok(FusionMode::Binarized),
            "hff" | "hierarchical" => Ok(FusionMode::Hierarchical),
            other => Err(Error::Config(format!(
                "unknown fusion mode `{other}` (expected bff or hff)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub scale: usize,
    pub channels: usize,
    pub rg_count: usize,
    pub hrab_per_rg: usize,
    pub dilations: (usize, usize),
    pub ca_reduction: usize,
    pub leaky_slope: f32,
    pub fusion: FusionMode,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scale: 4,
            channels: 64,
            rg_count: 4,
            hrab_per_rg: 8,
            dilations: (1, 2),
            ca_reduction: 4,
            leaky_slope: 0.2,
            fusion: FusionMode::Binarized,
            in_channels: 3,
            out_channels: 3,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by the gradient and overfit checks.
    pub fn tiny() -> Self {
        ModelConfig {
            scale: 2,
            channels: 4,
            rg_count: 2,
            hrab_per_rg: 1,
            ca_reduction: 2,
            ..ModelConfig::default()
        }
    }

    pub fn with_scale(mut self, scale: usize) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_fusion(mut self, fusion: FusionMode) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if ![2, 3, 4, 8].contains(&self.scale) {
            return bad(format!("scale {} not in {{2, 3, 4, 8}}", self.scale));
        }
        if self.channels == 0 || self.ca_reduction == 0 || !self.channels.is_multiple_of(self.ca_reduction) {
            return bad(format!(
                "channels {} must be a positive multiple of ca_reduction {}",
                self.channels, self.ca_reduction
            ));
        }
        if self.rg_count == 0 || self.hrab_per_rg == 0 {
            return bad("rg_count and hrab_per_rg must be at least 1".into());
        }
        if self.fusion == FusionMode::Binarized && !self.rg_count.is_power_of_two() {
            return bad(format!(
                "binarized fusion needs a power-of-two rg_count, got {}",
                self.rg_count
            ));
        }
        if self.dilations.0 == 0 || self.dilations.1 == 0 {
            return bad("dilations must be positive".into());
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} not in (0, 1)", self.leaky_slope));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("image channel counts must be positive".into());
        }
        Ok(())
    }
}
