//! Run configuration, read from and written back to TOML.
//!
//! Every field has a default, so a file only needs the values it changes.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::Directions;
use crate::federation::RoundConfig;
use crate::fusion::FusionConfig;
use crate::kg::SplitKind;
use crate::model::{CorruptionMode, MarginMode, ModelKind, Norm, TrainHyper};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::settings::LocalConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Single,
    Entire,
    Fed,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Single => "single",
            Setting::Entire => "entire",
            Setting::Fed => "fed",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" => Ok(Setting::Single),
            "entire" => Ok(Setting::Entire),
            "fed" => Ok(Setting::Fed),
            other => Err(format!("unknown setting `{other}` (expected single, entire or fed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    TransE,
    DistMult,
    ComplEx,
    RotatE,
}

impl std::str::FromStr for KindName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(KindName::TransE),
            "distmult" => Ok(KindName::DistMult),
            "complex" => Ok(KindName::ComplEx),
            "rotate" => Ok(KindName::RotatE),
            other => Err(format!("unknown model `{other}` (expected transe, distmult, complex or rotate)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionName {
    Alternate,
    TailOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginName {
    Auto,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Split manifest written by `fede split`.
    pub manifest: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            manifest: PathBuf::from("data/manifest.tsv"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: KindName,
    /// Distance norm of TransE.
    pub norm: NormName,
    pub dim: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub negatives: usize,
    pub corruption: CorruptionName,
    pub strict_negatives: bool,
    pub margin: MarginName,
}

impl Default for ModelSection {
    fn default() -> Self {
        let h = TrainHyper::default();
        ModelSection {
            kind: KindName::TransE,
            norm: NormName::L2,
            dim: h.dim,
            gamma: h.gamma,
            alpha: h.alpha,
            negatives: h.negatives,
            corruption: CorruptionName::Alternate,
            strict_negatives: h.strict_negatives,
            margin: MarginName::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerName,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimizerConfig::default();
        OptimizerSection {
            kind: OptimizerName::Adam,
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub max_rounds: u64,
    pub eval_every: u64,
    pub patience: u32,
    pub reset_optimizer: bool,
}

impl Default for FederationSection {
    fn default() -> Self {
        let r = RoundConfig::default();
        FederationSection {
            fraction: r.fraction,
            local_epochs: r.local_epochs,
            batch_size: r.batch_size,
            max_rounds: r.max_rounds,
            eval_every: r.eval_every,
            patience: r.patience,
            reset_optimizer: r.reset_optimizer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalSection {
    pub max_epochs: u64,
    pub batch_size: usize,
    pub eval_every: u64,
    pub patience: u32,
}

impl Default for LocalSection {
    fn default() -> Self {
        let l = LocalConfig::default();
        LocalSection {
            max_epochs: l.max_epochs,
            batch_size: l.batch_size,
            eval_every: l.eval_every,
            patience: l.patience,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub margin: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub fit_split: SplitKind,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        FusionSection {
            margin: f.margin,
            negatives: f.negatives,
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            fit_split: f.fit_split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub directions: Directions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub setting: Setting,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub threads: usize,
    /// Run directory. Relative paths here and in `data` are resolved
    /// against the config file's directory.
    pub output: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub optimizer: OptimizerSection,
    pub federation: FederationSection,
    pub local: LocalSection,
    pub fusion: FusionSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            setting: Setting::Fed,
            seed: 0,
            threads: 1,
            output: PathBuf::from("runs/default"),
            data: DataSection::default(),
            model: ModelSection::default(),
            optimizer: OptimizerSection::default(),
            federation: FederationSection::default(),
            local: LocalSection::default(),
            fusion: FusionSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative manifest and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data.manifest, &mut cfg.output] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Canonical TOML of every field, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        let hyper = self.hyper();
        if hyper.dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        self.kind().validate_dim(hyper.dim)?;
        if hyper.negatives == 0 {
            return Err(Error::config("at least one negative sample is required"));
        }
        if !(hyper.gamma.is_finite() && hyper.alpha.is_finite() && hyper.alpha >= 0.0) {
            return Err(Error::config("gamma must be finite and alpha finite and non-negative"));
        }
        self.optimizer().validate()?;
        self.rounds().validate()?;
        self.local().validate()?;
        self.fusion().validate()?;
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        match self.model.kind {
            KindName::TransE => ModelKind::TransE {
                norm: match self.model.norm {
                    NormName::L1 => Norm::L1,
                    NormName::L2 => Norm::L2,
                },
            },
            KindName::DistMult => ModelKind::DistMult,
            KindName::ComplEx => ModelKind::ComplEx,
            KindName::RotatE => ModelKind::RotatE,
        }
    }

    pub fn hyper(&self) -> TrainHyper {
        let m = &self.model;
        TrainHyper {
            gamma: m.gamma,
            alpha: m.alpha,
            negatives: m.negatives,
            dim: m.dim,
            corruption: match m.corruption {
                CorruptionName::Alternate => CorruptionMode::Alternate,
                CorruptionName::TailOnly => CorruptionMode::TailOnly,
            },
            strict_negatives: m.strict_negatives,
            margin: match m.margin {
                MarginName::Auto => MarginMode::Auto,
                MarginName::Literal => MarginMode::Literal,
            },
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            kind: match o.kind {
                OptimizerName::Adam => OptimizerKind::Adam,
                OptimizerName::Sgd => OptimizerKind::Sgd,
            },
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        }
    }

    pub fn rounds(&self) -> RoundConfig {
        let f = &self.federation;
        RoundConfig {
            fraction: f.fraction,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            max_rounds: f.max_rounds,
            eval_every: f.eval_every,
            patience: f.patience,
            reset_optimizer: f.reset_optimizer,
        }
    }

    pub fn local(&self) -> LocalConfig {
        let l = &self.local;
        LocalConfig {
            max_epochs: l.max_epochs,
            batch_size: l.batch_size,
            eval_every: l.eval_every,
            patience: l.patience,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        let f = &self.fusion;
        FusionConfig {
            margin: f.margin,
            negatives: f.negatives,
            epochs: f.epochs,
            lr: f.lr,
            batch_size: f.batch_size,
            fit_split: f.fit_split,
        }
    }

    pub fn directions(&self) -> Directions {
        self.eval.directions
    }
}
