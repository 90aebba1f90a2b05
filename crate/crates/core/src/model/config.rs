use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegraph::GraphConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Multi-stage goal selection followed by trajectory completion.
    #[default]
    Goal,
    /// Direct regression of trajectories and scores from the query features.
    Baseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Goal => "goal",
            Variant::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goal" => Ok(Variant::Goal),
            "baseline" => Ok(Variant::Baseline),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant `{other}` (expected goal or baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_h: usize,
    pub heads: usize,
    /// Number of predicted modes per agent.
    pub k: usize,
    pub t_history: usize,
    pub t_future: usize,
    pub dropout: f64,
    pub variant: Variant,
    /// Hidden width of the feed-forward block after each attention layer.
    pub ffn_hidden: usize,
    pub graph: GraphConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 128,
            heads: 8,
            k: 6,
            t_history: 10,
            t_future: 30,
            dropout: 0.1,
            variant: Variant::Goal,
            ffn_hidden: 512,
            graph: GraphConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_h == 0 || self.heads == 0 || !self.d_h.is_multiple_of(self.heads) {
            return bad(format!(
                "d_h ({}) must be a positive multiple of heads ({})",
                self.d_h, self.heads
            ));
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if self.t_history < 1 || self.t_future < 1 {
            return bad("t_history and t_future must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.ffn_hidden == 0 {
            return bad("ffn_hidden must be positive".into());
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &std::path::Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::parse(origin, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }
}
