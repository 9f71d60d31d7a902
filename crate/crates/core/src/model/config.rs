use std::path::Path;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::ingest::OMNI_FEATURES;

/// Widths, bins and seed of the network. Persisted as `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_steps: usize,
    pub output_steps: usize,
    pub image_dim: usize,
    pub satellite_dim: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Bins of the per-branch alignment distributions.
    pub bins: usize,
    pub conv_width: usize,
    pub positional_encoding: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_steps: 40,
            output_steps: 24,
            image_dim: 512,
            satellite_dim: OMNI_FEATURES.len(),
            model_dim: 64,
            heads: 4,
            ffn_dim: 128,
            dropout: 0.1,
            bins: 28,
            conv_width: 3,
            positional_encoding: false,
            seed: 0,
        }
    }
}

/// Classes per output step: 28 + 10 + 3 + 1.
pub const HEAD_WIDTH: usize = 42;

impl ModelConfig {
    /// The shrunken configuration used for end-to-end gradient checks.
    pub fn micro(image_dim: usize, satellite_dim: usize, output_steps: usize) -> Self {
        ModelConfig {
            input_steps: 4,
            output_steps,
            image_dim,
            satellite_dim,
            model_dim: 8,
            heads: 2,
            ffn_dim: 8,
            dropout: 0.1,
            bins: 5,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_steps", self.input_steps),
            ("output_steps", self.output_steps),
            ("image_dim", self.image_dim),
            ("satellite_dim", self.satellite_dim),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("bins", self.bins),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.conv_width.is_multiple_of(2) {
            return Err(Error::Config(format!("conv_width {} must be odd", self.conv_width)));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        Ok(())
    }

    /// Reads keys from `section` of `cfg`, falling back to defaults.
    pub fn from_config(cfg: &Config, section: &str) -> Result<Self> {
        let d = ModelConfig::default();
        let m = ModelConfig {
            input_steps: cfg.value(section, "input_steps", d.input_steps)?,
            output_steps: cfg.value(section, "output_steps", d.output_steps)?,
            image_dim: cfg.value(section, "image_dim", d.image_dim)?,
            satellite_dim: cfg.value(section, "satellite_dim", d.satellite_dim)?,
            model_dim: cfg.value(section, "model_dim", d.model_dim)?,
            heads: cfg.value(section, "heads", d.heads)?,
            ffn_dim: cfg.value(section, "ffn_dim", d.ffn_dim)?,
            dropout: cfg.value(section, "dropout", d.dropout)?,
            bins: cfg.value(section, "bins", d.bins)?,
            conv_width: cfg.value(section, "conv_width", d.conv_width)?,
            positional_encoding: cfg.value(section, "positional_encoding", d.positional_encoding)?,
            seed: cfg.value(section, "seed", d.seed)?,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut c = Config::default();
        c.set("", "input_steps", self.input_steps);
        c.set("", "output_steps", self.output_steps);
        c.set("", "image_dim", self.image_dim);
        c.set("", "satellite_dim", self.satellite_dim);
        c.set("", "model_dim", self.model_dim);
        c.set("", "heads", self.heads);
        c.set("", "ffn_dim", self.ffn_dim);
        c.set("", "dropout", self.dropout);
        c.set("", "bins", self.bins);
        c.set("", "conv_width", self.conv_width);
        c.set("", "positional_encoding", self.positional_encoding);
        c.set("", "seed", self.seed);
        c.to_text()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelConfig::from_config(&Config::load(path)?, "")
    }
}
