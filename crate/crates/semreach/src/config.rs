//! Experiment configuration: one TOML file describes a whole run.
//!
//! Sections cover the environment, the network, training, the semantic
//! pipeline, and run bookkeeping. Every field has the standard default, so
//! an empty file is a valid baseline experiment; unknown keys are rejected
//! by name so typos cannot silently fall back to defaults. Cross-field
//! rules (semantic mode versus embedding width, arm size versus the
//! supported geometries) are checked in [`ExperimentConfig::validate`].

use crate::a3c::TrainConfig;
use crate::arena::EnvConfig;
use crate::arena::perceived_entities;
use crate::kge::{
    fallback_word_vectors, graph_vocabulary, scene_embedding_for_mode, KgeError, KgeMode,
    KnowledgeGraph, SceneEmbedding, WORD_DIM,
};
use crate::policy::{AgentConfig, ConvSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kge(#[from] KgeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Arm size; the supported geometries have 2 or 3 links.
    pub n_links: usize,
    pub image_size: usize,
    pub dr_colors: bool,
    pub mpi: f64,
    pub max_steps: usize,
    pub success_dist: f64,
    pub success_deg: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            n_links: 3,
            image_size: 64,
            dr_colors: false,
            mpi: 0.15,
            max_steps: 50,
            success_dist: 0.05,
            success_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub fc_width: usize,
    pub lstm_width: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            conv1_channels: 16,
            conv2_channels: 32,
            fc_width: 128,
            lstm_width: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub gamma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub t_max: usize,
    pub grad_clip: f64,
    pub total_steps: u64,
    pub n_workers: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub stop_at_success_rate: Option<f64>,
    pub hogwild: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            gamma: t.gamma,
            beta: t.beta,
            lambda: t.lambda,
            lr: t.lr,
            rms_decay: t.rms_decay,
            rms_eps: t.rms_eps,
            t_max: t.t_max,
            grad_clip: t.grad_clip,
            total_steps: t.total_steps,
            n_workers: t.n_workers,
            eval_every: t.eval_every,
            eval_episodes: t.eval_episodes,
            stop_at_success_rate: t.stop_at_success_rate,
            hogwild: t.hogwild,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KgeSection {
    pub mode: KgeMode,
    /// Scene embedding width. Defaults to 300 in full mode under domain
    /// randomization and 150 in the other semantic modes; must be absent
    /// when the mode is none.
    pub target_dim: Option<usize>,
    /// Word vector file (token followed by whitespace-separated floats per
    /// line). Seeded fallback vectors are generated when absent.
    pub word_vectors: Option<PathBuf>,
    /// Knowledge graph file (tab-separated triples). The built-in tabletop
    /// graph is used when absent.
    pub graph: Option<PathBuf>,
}

impl Default for KgeSection {
    fn default() -> Self {
        KgeSection {
            mode: KgeMode::None,
            target_dim: None,
            word_vectors: None,
            graph: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Run directory for checkpoints and logs. Commands that write output
    /// require it here or on the command line.
    pub out_dir: Option<PathBuf>,
    /// Post-training evaluation episode count.
    pub eval_episodes: usize,
    pub eval_dist_threshold: f64,
    pub eval_deg_threshold: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            out_dir: None,
            eval_episodes: 1000,
            eval_dist_threshold: 0.10,
            eval_deg_threshold: 17.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub agent: AgentSection,
    pub train: TrainSection,
    pub kge: KgeSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            // Flatten the multi-line toml report to one machine-parseable
            // line, keeping the location.
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(n) => ConfigError::Parse(format!("line {n}: {}", e.message())),
                None => ConfigError::Parse(e.message().to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Effective scene embedding width for the configured semantic mode.
    pub fn kge_dim(&self) -> usize {
        match self.kge.mode {
            KgeMode::None => 0,
            KgeMode::Partial => self.kge.target_dim.unwrap_or(150),
            KgeMode::Full => self
                .kge
                .target_dim
                .unwrap_or(if self.env.dr_colors { 300 } else { 150 }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !matches!(self.env.n_links, 2 | 3) {
            return Err(ConfigError::Invalid(format!(
                "env.n_links must be 2 or 3, got {}",
                self.env.n_links
            )));
        }
        if self.kge.mode == KgeMode::None {
            if let Some(d) = self.kge.target_dim {
                return Err(ConfigError::Invalid(format!(
                    "kge.target_dim is {d} but kge.mode is none; drop the \
                     dimension or pick a semantic mode"
                )));
            }
            if self.kge.word_vectors.is_some() || self.kge.graph.is_some() {
                return Err(ConfigError::Invalid(
                    "kge.word_vectors/kge.graph are set but kge.mode is none".into(),
                ));
            }
        } else if self.kge.target_dim == Some(0) {
            return Err(ConfigError::Invalid(
                "kge.target_dim must be positive in a semantic mode".into(),
            ));
        }
        self.to_env_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.to_agent_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.to_train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.run.eval_episodes == 0 {
            return Err(ConfigError::Invalid(
                "run.eval_episodes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_env_config(&self) -> EnvConfig {
        let base = if self.env.n_links == 2 {
            EnvConfig::reach2()
        } else {
            EnvConfig::reach3()
        };
        EnvConfig {
            image_size: self.env.image_size,
            dr_colors: self.env.dr_colors,
            mpi: self.env.mpi,
            max_steps: self.env.max_steps,
            success_dist: self.env.success_dist,
            success_deg: self.env.success_deg,
            ..base
        }
    }

    pub fn to_agent_config(&self) -> AgentConfig {
        AgentConfig {
            n_joints: self.env.n_links,
            actions_per_joint: 7,
            kge_dim: self.kge_dim(),
            image_size: self.env.image_size,
            conv1: ConvSpec {
                kernel: 3,
                stride: 4,
                channels: self.agent.conv1_channels,
            },
            conv2: ConvSpec {
                kernel: 5,
                stride: 2,
                channels: self.agent.conv2_channels,
            },
            fc_width: self.agent.fc_width,
            lstm_width: self.agent.lstm_width,
        }
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            gamma: self.train.gamma,
            beta: self.train.beta,
            lambda: self.train.lambda,
            lr: self.train.lr,
            rms_decay: self.train.rms_decay,
            rms_eps: self.train.rms_eps,
            t_max: self.train.t_max,
            grad_clip: self.train.grad_clip,
            total_steps: self.train.total_steps,
            n_workers: self.train.n_workers,
            eval_every: self.train.eval_every,
            eval_episodes: self.train.eval_episodes,
            stop_at_success_rate: self.train.stop_at_success_rate,
            hogwild: self.train.hogwild,
        }
    }

    /// Builds the static scene embedding for this experiment, or None when
    /// the semantic mode is off. The graph and word vectors come from the
    /// configured files, falling back to the built-in tabletop graph and
    /// seeded random vectors.
    pub fn scene_embedding(&self) -> Result<Option<SceneEmbedding>, ConfigError> {
        if self.kge.mode == KgeMode::None {
            return Ok(None);
        }
        let graph = match &self.kge.graph {
            Some(path) => KnowledgeGraph::from_file(path)?,
            None => KnowledgeGraph::desk_default(self.env.dr_colors),
        };
        let table = match &self.kge.word_vectors {
            Some(path) => crate::kge::load_word_vectors(path, WORD_DIM)?,
            None => {
                let vocab = graph_vocabulary(&graph);
                let tokens: Vec<&str> = vocab.iter().map(String::as_str).collect();
                fallback_word_vectors(&tokens, WORD_DIM, self.run.seed)
            }
        };
        let perceived = perceived_entities(self.kge.mode);
        let embedding = scene_embedding_for_mode(
            &graph,
            self.kge.mode,
            self.env.dr_colors,
            &perceived,
            &table,
            Some(self.kge_dim()),
        )?;
        Ok(embedding)
    }
}
