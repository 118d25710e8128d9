//! Run configuration: a TOML file with flat key = value sections.
//!
//! ```toml
//! [run]
//! mode = "higher-order"      # or "pairwise"
//! m = 120                    # sampled subsets (higher-order mode)
//! alpha = 3                  # subset size
//! k = 3                      # clusters
//! members = 1                # ensemble size M
//! d = 64                     # projected dimension; omit to auto-choose
//! eps = 1.0                  # distortion knob for the auto choice
//! ridge = 1e-6
//! metric = "accuracy"        # or "macro-f1"
//! seed = 42
//! lambda_min = 1.0           # rounding threshold grid: c / n
//! lambda_max = 10.0
//! lambda_step = 0.25
//! loss_mode = false          # true if scores are losses (lower is better)
//! compare_oracle = false     # also run the full-training oracle
//!
//! [train]
//! epochs = 30
//! batch_size = 32
//! learning_rate = 0.1
//! momentum = 0.9
//! l2_penalty = 0.0
//!
//! [model]
//! kind = "mlp1"              # or "linear"
//! hidden_dim = 8
//! input_dim = 16             # optional; defaults to the data's
//! num_classes = 2
//!
//! [synth]                    # consumed by the synth subcommand
//! n_tasks = 12
//! k_true = 3
//! input_dim = 16
//! train_per_task = 30
//! val_per_task = 10
//! test_per_task = 20
//! teacher_noise = 0.0
//! flip_rate = 0.02
//! cross_cluster_angle_deg = 90.0
//! ```
//!
//! A run is reproducible from the config alone: all randomness derives from
//! `run.seed` through the tree documented in the `pipeline` module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ArchitectureSpec, LossKind, Metric, TrainConfig};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffinityMode {
    #[serde(rename = "pairwise")]
    Pairwise,
    #[serde(rename = "higher-order")]
    HigherOrder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub mode: AffinityMode,
    pub m: usize,
    pub alpha: usize,
    pub k: usize,
    pub members: usize,
    pub d: Option<usize>,
    pub eps: f64,
    pub ridge: f64,
    pub metric: String,
    pub seed: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_step: f64,
    pub loss_mode: bool,
    pub compare_oracle: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: AffinityMode::HigherOrder,
            m: 120,
            alpha: 3,
            k: 3,
            members: 1,
            d: None,
            eps: 1.0,
            ridge: 1e-6,
            metric: "accuracy".into(),
            seed: 0,
            lambda_min: 1.0,
            lambda_max: 10.0,
            lambda_step: 0.25,
            loss_mode: false,
            compare_oracle: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_penalty: f64,
    pub loss: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            l2_penalty: 0.0,
            loss: "logistic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub kind: String,
    pub hidden_dim: usize,
    /// Falls back to the data's input dimension when absent.
    pub input_dim: Option<usize>,
    pub num_classes: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "linear".into(),
            hidden_dim: 8,
            input_dim: None,
            num_classes: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_tasks: usize,
    pub k_true: usize,
    pub input_dim: usize,
    pub train_per_task: usize,
    pub val_per_task: usize,
    pub test_per_task: usize,
    pub teacher_noise: f64,
    pub flip_rate: f64,
    pub cross_cluster_angle_deg: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_tasks: d.n_tasks,
            k_true: d.k_true,
            input_dim: d.input_dim,
            train_per_task: d.train_per_task,
            val_per_task: d.val_per_task,
            test_per_task: d.test_per_task,
            teacher_noise: d.teacher_noise,
            flip_rate: d.flip_rate,
            cross_cluster_angle_deg: d.cross_cluster_angle_deg,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub model: ModelSection,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// FNV-1a hash of the canonical serialized config, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100_0000_01B3);
        }
        Ok(format!("{h:016x}"))
    }

    pub fn metric(&self) -> Result<Metric> {
        match self.run.metric.as_str() {
            "accuracy" => Ok(Metric::Accuracy),
            "macro-f1" => Ok(Metric::MacroF1),
            other => Err(Error::Config(format!(
                "unknown metric '{other}' (accuracy | macro-f1)"
            ))),
        }
    }

    pub fn arch(&self, data_input_dim: usize) -> Result<ArchitectureSpec> {
        let input_dim = self.model.input_dim.unwrap_or(data_input_dim);
        if input_dim != data_input_dim {
            return Err(Error::Config(format!(
                "model input_dim {input_dim} does not match data dimension {data_input_dim}"
            )));
        }
        let spec = match self.model.kind.as_str() {
            "linear" => ArchitectureSpec::linear(input_dim),
            "mlp1" => ArchitectureSpec::mlp1(input_dim, self.model.hidden_dim),
            other => {
                return Err(Error::Config(format!(
                    "unknown model kind '{other}' (linear | mlp1)"
                )))
            }
        };
        let spec = spec.with_classes(self.model.num_classes);
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let loss = match self.train.loss.as_str() {
            "logistic" => LossKind::Logistic,
            "squared" => LossKind::Squared,
            other => {
                return Err(Error::Config(format!(
                    "unknown loss '{other}' (logistic | squared)"
                )))
            }
        };
        let cfg = TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            l2_penalty: self.train.l2_penalty,
            seed: 0,
            loss,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_tasks: self.synth.n_tasks,
            k_true: self.synth.k_true,
            input_dim: self.synth.input_dim,
            train_per_task: self.synth.train_per_task,
            val_per_task: self.synth.val_per_task,
            test_per_task: self.synth.test_per_task,
            teacher_noise: self.synth.teacher_noise,
            flip_rate: self.synth.flip_rate,
            cross_cluster_angle_deg: self.synth.cross_cluster_angle_deg,
            seed: self.run.seed,
        }
    }

    /// Rounding threshold grid `c` values.
    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        let (lo, hi, step) = (
            self.run.lambda_min,
            self.run.lambda_max,
            self.run.lambda_step,
        );
        if !(lo >= 1.0 && hi >= lo && step > 0.0) {
            return Err(Error::Config(
                "need 1 <= lambda_min <= lambda_max and lambda_step > 0".into(),
            ));
        }
        let mut grid = Vec::new();
        let mut c = lo;
        while c <= hi + 1e-12 {
            grid.push(c);
            c += step;
        }
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.metric()?;
        self.train_config()?;
        self.lambda_grid()?;
        if self.run.members == 0 {
            return Err(Error::Config("members must be >= 1".into()));
        }
        if self.run.m == 0 || self.run.alpha == 0 {
            return Err(Error::Config("m and alpha must be >= 1".into()));
        }
        if self.run.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.run.eps > 0.0 && self.run.eps <= 1.0) {
            return Err(Error::Config("eps must be in (0, 1]".into()));
        }
        Ok(())
    }
}
