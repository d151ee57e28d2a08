//! Experiment configuration: transfer methods, hyperparameters, and the flat
//! key-value configuration file (one experiment per file, unknown keys
//! rejected).

use crate::tasks::{DatasetId, InputType, ScenarioKind};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// The twelve transfer strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodId {
    Basis,
    AdaBn,
    MkMmd,
    Jmmd,
    Coral,
    Dann,
    Cdan,
    Pada,
    Osbp,
    Uan,
    MsUada,
    Ian,
}

impl MethodId {
    pub const ALL: [MethodId; 12] = [
        MethodId::Basis,
        MethodId::AdaBn,
        MethodId::MkMmd,
        MethodId::Jmmd,
        MethodId::Coral,
        MethodId::Dann,
        MethodId::Cdan,
        MethodId::Pada,
        MethodId::Osbp,
        MethodId::Uan,
        MethodId::MsUada,
        MethodId::Ian,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Basis => "basis",
            MethodId::AdaBn => "adabn",
            MethodId::MkMmd => "mkmmd",
            MethodId::Jmmd => "jmmd",
            MethodId::Coral => "coral",
            MethodId::Dann => "dann",
            MethodId::Cdan => "cdan",
            MethodId::Pada => "pada",
            MethodId::Osbp => "osbp",
            MethodId::Uan => "uan",
            MethodId::MsUada => "msuada",
            MethodId::Ian => "ian",
        }
    }

    /// Scenario kinds this method is registered for.
    pub fn supports(self, scenario: ScenarioKind) -> bool {
        use ScenarioKind::*;
        match self {
            // source-only training runs under every scenario as the baseline
            MethodId::Basis => true,
            MethodId::AdaBn => matches!(scenario, ClosedSet | Partial),
            MethodId::MkMmd | MethodId::Jmmd | MethodId::Coral | MethodId::Dann | MethodId::Cdan => {
                matches!(scenario, ClosedSet | Partial)
            }
            MethodId::Pada => matches!(scenario, Partial),
            MethodId::Osbp => matches!(scenario, OpenSet),
            MethodId::Uan => matches!(scenario, ClosedSet | Partial | OpenSet | Universal),
            MethodId::MsUada => matches!(scenario, MultiAdaptation),
            MethodId::Ian => matches!(scenario, DomainGeneralization),
        }
    }

    /// Epoch at which the transfer term activates: label-consistent methods
    /// pre-train source-only first, the others start immediately.
    pub fn activation_epoch(self, pretrain_epochs: usize) -> usize {
        match self {
            MethodId::MkMmd | MethodId::Jmmd | MethodId::Coral | MethodId::Dann | MethodId::Cdan => pretrain_epochs,
            _ => 0,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_epochs() -> usize {
    300
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    0.001
}
fn default_decay_epochs() -> Vec<usize> {
    vec![150, 250]
}
fn default_decay_factor() -> f64 {
    0.1
}
fn default_pretrain() -> usize {
    50
}
fn default_zeta() -> f64 {
    10.0
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_tau() -> f64 {
    0.5
}
fn default_omega0() -> f64 {
    0.5
}
fn default_kernel_count() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_cdan_max() -> usize {
    8192
}
fn default_synth_windows() -> usize {
    200
}
fn default_synth_speeds() -> Vec<f64> {
    vec![1.0, 1.2, 0.85]
}
fn default_synth_noise() -> Vec<f64> {
    vec![0.15, 0.75, 0.45]
}
fn default_synth_amplitude() -> Vec<f64> {
    vec![1.0, 1.0, 1.0]
}

/// Method hyperparameters with the registered defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MethodHyper {
    /// Open-set boundary position.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Unknown-decision threshold on the transferability weight.
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    /// If set, samples with transferability weight above the threshold are
    /// declared unknown (the inverted reading of the decision sentence).
    #[serde(default)]
    pub unknown_above_threshold: bool,
    /// Gaussian kernels in the ladder.
    #[serde(default = "default_kernel_count")]
    pub kernel_count: usize,
    /// Entropy conditioning for the conditional adversarial method.
    #[serde(default = "default_true")]
    pub entropy_conditioning: bool,
    /// Guard for the multilinear embedding size (features x classes).
    #[serde(default = "default_cdan_max")]
    pub max_embedding_dim: usize,
}

impl Default for MethodHyper {
    fn default() -> Self {
        MethodHyper {
            tau: default_tau(),
            omega0: default_omega0(),
            unknown_above_threshold: false,
            kernel_count: default_kernel_count(),
            entropy_conditioning: true,
            max_embedding_dim: default_cdan_max(),
        }
    }
}

/// Parameters of the synthetic domain-shift generator. Each domain rescales
/// the class impulse periods by `speed`, adds Gaussian noise, and scales the
/// signal amplitude.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_synth_windows")]
    pub windows_per_class: usize,
    /// Number of classes; class `c` gets a distinct impulse period.
    #[serde(default = "default_synth_classes")]
    pub classes: usize,
    #[serde(default = "default_synth_speeds")]
    pub speed_factors: Vec<f64>,
    #[serde(default = "default_synth_noise")]
    pub noise_stds: Vec<f64>,
    #[serde(default = "default_synth_amplitude")]
    pub amplitude_scales: Vec<f64>,
}

fn default_synth_classes() -> usize {
    3
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            windows_per_class: default_synth_windows(),
            classes: default_synth_classes(),
            speed_factors: default_synth_speeds(),
            noise_stds: default_synth_noise(),
            amplitude_scales: default_synth_amplitude(),
        }
    }
}

impl SynthSpec {
    pub fn domains(&self) -> usize {
        self.speed_factors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("synthetic generator needs at least 2 classes".into()));
        }
        if self.domains() < 2 {
            return Err(Error::Config("synthetic generator needs at least 2 domains".into()));
        }
        if self.noise_stds.len() != self.domains() || self.amplitude_scales.len() != self.domains() {
            return Err(Error::Config("synthetic domain parameter lists must have equal lengths".into()));
        }
        if self.windows_per_class == 0 {
            return Err(Error::Config("windows_per_class must be positive".into()));
        }
        if self.speed_factors.iter().any(|&s| s <= 0.0)
            || self.noise_stds.iter().any(|&s| s < 0.0)
            || self.amplitude_scales.iter().any(|&s| s <= 0.0)
        {
            return Err(Error::Config("invalid synthetic domain parameters".into()));
        }
        Ok(())
    }
}

/// One experiment: a method applied to one transfer task under the training
/// protocol.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: MethodId,
    pub dataset: DatasetId,
    pub scenario: ScenarioKind,
    /// Task name, e.g. `"0-1"` or `"123-0"`.
    pub task: String,
    pub input_type: InputType,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub base_lr: f64,
    #[serde(default = "default_decay_epochs")]
    pub lr_decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default = "default_pretrain")]
    pub pretrain_epochs: usize,
    #[serde(default = "default_zeta")]
    pub tradeoff_zeta: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyper: MethodHyper,
    #[serde(default)]
    pub synth: SynthSpec,
    /// Directory with the prepared dataset cache (unused for `synth`).
    #[serde(default)]
    pub data_root: Option<String>,
    /// Optional cap on windows kept per class during preparation.
    #[serde(default)]
    pub max_windows_per_class: Option<usize>,
}

impl ExperimentConfig {
    /// Minimal config with protocol defaults.
    pub fn new(method: MethodId, dataset: DatasetId, scenario: ScenarioKind, task: &str, input_type: InputType) -> Self {
        ExperimentConfig {
            method,
            dataset,
            scenario,
            task: task.to_string(),
            input_type,
            epochs: default_epochs(),
            batch_size: default_batch(),
            base_lr: default_lr(),
            lr_decay_epochs: default_decay_epochs(),
            lr_decay_factor: default_decay_factor(),
            pretrain_epochs: default_pretrain(),
            tradeoff_zeta: default_zeta(),
            seeds: default_seeds(),
            hyper: MethodHyper::default(),
            synth: SynthSpec::default(),
            data_root: None,
            max_windows_per_class: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.pretrain_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "pretrain_epochs ({}) must be smaller than epochs ({})",
                self.pretrain_epochs, self.epochs
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.base_lr <= 0.0 || self.lr_decay_factor <= 0.0 || self.tradeoff_zeta <= 0.0 {
            return Err(Error::Config("all rates must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !self.method.supports(self.scenario) {
            return Err(Error::Config(format!(
                "method {} is not registered for scenario {}",
                self.method, self.scenario
            )));
        }
        if !(0.0..1.0).contains(&self.hyper.tau) || self.hyper.tau <= 0.0 {
            return Err(Error::Config("tau must lie strictly between 0 and 1".into()));
        }
        if self.hyper.kernel_count == 0 {
            return Err(Error::Config("kernel_count must be positive".into()));
        }
        if self.dataset == DatasetId::Synth {
            self.synth.validate()?;
        }
        Ok(())
    }

    /// Parse from the flat TOML document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Digest identifying the run cell (used for idempotent re-runs).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("config serialization cannot fail"));
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolve the task name against the registry.
    pub fn resolve_task(&self) -> Result<crate::tasks::TransferTask> {
        crate::tasks::find_task(self.dataset, self.scenario, self.input_type, &self.task)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_round_trip() {
        let text = r#"
method = "mkmmd"
dataset = "synth"
scenario = "closed-set"
task = "0-1"
input_type = "frequency"
epochs = 60
pretrain_epochs = 10
seeds = [0, 1, 2]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.method, MethodId::MkMmd);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.lr_decay_epochs, vec![150, 250]);
        let round = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, round);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"
method = "basis"
dataset = "synth"
scenario = "closed-set"
task = "0-1"
input_type = "time"
learning_rate_typo = 0.1
"#;
        let err = ExperimentConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("learning_rate_typo"), "{err}");
    }

    #[test]
    fn invariants_enforced() {
        let mut cfg = ExperimentConfig::new(
            MethodId::Dann,
            DatasetId::Synth,
            ScenarioKind::ClosedSet,
            "0-1",
            InputType::Time,
        );
        cfg.validate().unwrap();
        cfg.pretrain_epochs = cfg.epochs;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::new(MethodId::Osbp, DatasetId::Synth, ScenarioKind::ClosedSet, "0-1", InputType::Time);
        assert!(cfg.validate().is_err(), "osbp is open-set only");
        cfg.scenario = ScenarioKind::OpenSet;
        cfg.validate().unwrap();
        cfg.batch_size = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_method_schedule() {
        assert_eq!(MethodId::MkMmd.activation_epoch(50), 50);
        assert_eq!(MethodId::Cdan.activation_epoch(50), 50);
        assert_eq!(MethodId::Osbp.activation_epoch(50), 0);
        assert_eq!(MethodId::MsUada.activation_epoch(50), 0);
        assert_eq!(MethodId::Basis.activation_epoch(50), 0);
    }

    #[test]
    fn content_hash_distinguishes_configs() {
        let a = ExperimentConfig::new(MethodId::Basis, DatasetId::Synth, ScenarioKind::ClosedSet, "0-1", InputType::Time);
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.epochs = 10;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
