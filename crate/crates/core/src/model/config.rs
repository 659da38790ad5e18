use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{DEFAULT_N_PROMPTS, DEFAULT_PROMPT_WIDTH};
use crate::local::{SigmaMode, DEFAULT_K_NEIGHBORS};
use crate::serialize::{CodeMode, OrderKind, SerializationOrder, DEFAULT_GRID_N};
use crate::ssm::block::{DEFAULT_CONV_WIDTH, DEFAULT_EXPAND};
use crate::ssm::selective::DEFAULT_D_STATE;
use crate::ssm::DiscretizeMode;
use crate::{Error, Result};

pub const DEFAULT_POINTS: [usize; 4] = [1024, 512, 256, 128];
pub const DEFAULT_CLS_CLASSES: usize = 15;
pub const DEFAULT_SEG_CLASSES: usize = 50;
pub const DEFAULT_HEAD_HIDDEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Classification,
    PartSegmentation,
}

impl Task {
    pub fn default_classes(self) -> usize {
        match self {
            Self::Classification => DEFAULT_CLS_CLASSES,
            Self::PartSegmentation => DEFAULT_SEG_CLASSES,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" | "classification" => Ok(Self::Classification),
            "seg" | "part_segmentation" => Ok(Self::PartSegmentation),
            other => Err(Error::InvalidArgument(format!(
                "unknown task '{other}' (expected cls|seg)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Classification => "classification",
            Self::PartSegmentation => "part_segmentation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub channels: usize,
    pub num_layers: usize,
    /// One order per layer.
    pub serializations: Vec<OrderKind>,
    /// Token count after downsampling.
    pub points: usize,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
}

fn default_k() -> usize {
    DEFAULT_K_NEIGHBORS
}

impl StageConfig {
    fn new(channels: usize, points: usize, serializations: Vec<OrderKind>) -> Self {
        Self {
            channels,
            num_layers: serializations.len(),
            serializations,
            points,
            k_neighbors: DEFAULT_K_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub name: String,
    pub stages: Vec<StageConfig>,
    pub n_p: usize,
    pub prompt_width: usize,
    pub grid_n: u64,
    pub code_mode: CodeMode,
    pub task: Task,
    pub num_classes: usize,
    pub seed: u64,
    /// Extra per-point input channels besides the coordinates.
    pub input_features: usize,
    pub head_hidden: usize,
    pub expand: usize,
    pub d_state: usize,
    pub conv_width: usize,
    pub sigma_mode: SigmaMode,
    pub scan_mode: DiscretizeMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::pcm_tiny()
    }
}

fn orders(names: &[&str]) -> Vec<OrderKind> {
    names.iter().map(|n| n.parse().expect("preset order names are valid")).collect()
}

impl ModelConfig {
    fn with_stages(name: &str, channels: [usize; 4], layer_orders: [&[&str]; 4]) -> Self {
        let stages = (0..4)
            .map(|s| StageConfig::new(channels[s], DEFAULT_POINTS[s], orders(layer_orders[s])))
            .collect();
        Self {
            name: name.into(),
            stages,
            n_p: DEFAULT_N_PROMPTS,
            prompt_width: DEFAULT_PROMPT_WIDTH,
            grid_n: DEFAULT_GRID_N,
            code_mode: CodeMode::Bijective,
            task: Task::Classification,
            num_classes: DEFAULT_CLS_CLASSES,
            seed: 0,
            input_features: 0,
            head_hidden: DEFAULT_HEAD_HIDDEN,
            expand: DEFAULT_EXPAND,
            d_state: DEFAULT_D_STATE,
            conv_width: DEFAULT_CONV_WIDTH,
            sigma_mode: SigmaMode::Global,
            scan_mode: DiscretizeMode::Euler,
        }
    }

    pub fn pcm() -> Self {
        Self::with_stages(
            "pcm",
            [384, 384, 768, 768],
            [&["xyz"], &["xzy", "yxz"], &["yzx", "zxy"], &["zyx", "hilbert", "z", "z-trans"]],
        )
    }

    pub fn pcm_tiny() -> Self {
        Self::with_stages(
            "pcm-tiny",
            [192, 192, 384, 384],
            [&["xyz"], &["xzy"], &["yxz", "yzx"], &["zxy", "zyx"]],
        )
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pcm" => Ok(Self::pcm()),
            "pcm-tiny" => Ok(Self::pcm_tiny()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected pcm|pcm-tiny)"
            ))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// A preset name, or the path of a TOML config file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Ok(cfg) = Self::preset(name_or_path) {
            return Ok(cfg);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(Error::Config(format!(
                "'{name_or_path}' is neither a preset (pcm|pcm-tiny) nor an existing file"
            )));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Switches the task and its default class count.
    pub fn for_task(mut self, task: Task) -> Self {
        self.task = task;
        self.num_classes = task.default_classes();
        self
    }

    /// Depth and orders of every stage, for quick comparisons.
    pub fn layer_orders(&self) -> Vec<Vec<OrderKind>> {
        self.stages.iter().map(|s| s.serializations.clone()).collect()
    }

    pub fn order(&self, kind: OrderKind) -> SerializationOrder {
        SerializationOrder::with_mode(kind, self.code_mode)
    }

    /// Smallest accepted input size.
    pub fn min_points(&self) -> usize {
        self.stages.last().map_or(1, |s| s.points)
    }

    /// Per-stage token counts for an input of `n` points.
    pub fn schedule(&self, n: usize) -> Result<Vec<usize>> {
        let min = self.min_points();
        if n < min {
            return Err(Error::InvalidInput(format!(
                "the model needs at least {min} points, got {n}"
            )));
        }
        Ok(self.stages.iter().map(|s| s.points.min(n)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        for (name, v) in [
            ("head_hidden", self.head_hidden),
            ("expand", self.expand),
            ("d_state", self.d_state),
            ("conv_width", self.conv_width),
            ("prompt_width", self.prompt_width),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        let mut prev_points = usize::MAX;
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.points == 0 || s.k_neighbors == 0 {
                return bad(format!("stage {i}: channels, points and k_neighbors must be positive"));
            }
            if s.serializations.len() != s.num_layers {
                return bad(format!(
                    "stage {i}: {} serializations for {} layers",
                    s.serializations.len(),
                    s.num_layers
                ));
            }
            if s.points > prev_points {
                return bad(format!("stage {i}: point count {} exceeds the previous stage", s.points));
            }
            if s.k_neighbors > self.min_points() {
                return bad(format!(
                    "stage {i}: k_neighbors = {} exceeds the smallest accepted input",
                    s.k_neighbors
                ));
            }
            prev_points = s.points;
            for &kind in &s.serializations {
                self.order(kind).code([0, 0, 0], self.grid_n).map_err(|e| {
                    Error::Config(format!("stage {i}: order {kind} at grid {}: {e}", self.grid_n))
                })?;
            }
        }
        Ok(())
    }
}
