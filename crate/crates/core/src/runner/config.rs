//! Experiment configuration: one JSON document describing the plant, the
//! goal, the candidate topology, the cognition parameters, and the
//! repetition schedule.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::cognition::SelectionPolicy;
use crate::conceptual::KnowledgeBase;
use crate::sim::GroundTruthConfig;
use crate::smbo::{DesignKind, DesignSpec};

/// How the per-cycle module loops are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    /// One fixed, documented order: plant, preprocessing, pipelines (in
    /// candidate order), cognition, business logic.
    #[serde(alias = "det")]
    Deterministic,
    /// Pipeline fits and searches run on their own threads each cycle;
    /// everything else is identical. Produces the same CycleRecords up to
    /// cpu-time fields.
    #[serde(alias = "conc")]
    Concurrent,
}

/// Everything one experiment needs. All fields have defaults, so `{}` is a
/// valid configuration document (the default popcorn study).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub ground_truth: GroundTruthConfig,
    /// Declarative goal kind, resolved against the knowledge-base topology.
    pub goal_kind: String,
    /// Scalarization weights for (energy, time, corn).
    pub weights: [f64; 3],
    pub design: DesignSpec,
    pub knowledge: KnowledgeBase,
    pub policy: SelectionPolicy,
    /// Drift-detector window (median over this many recent errors).
    pub drift_window: usize,
    /// Drift fires when the recent median exceeds `ratio * baseline`.
    pub drift_trigger_ratio: f64,
    /// Scored cycles before the cognition selects a pipeline.
    pub phase1_cycles: u64,
    /// Forgetting window activated on re-calibration.
    pub recalibration_window: Option<usize>,
    pub n_cycles: u64,
    pub n_repetitions: usize,
    /// One base seed per repetition.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub mode: ExecutionMode,
    /// Directory of schema JSON documents overriding the built-in schemas.
    pub schema_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ground_truth: GroundTruthConfig::default(),
            goal_kind: "optimization".to_string(),
            weights: [1.0 / 3.0; 3],
            design: DesignSpec {
                kind: DesignKind::Equidistant,
                n_initial: 5,
                seed: 0,
            },
            knowledge: KnowledgeBase::default_popcorn(),
            policy: SelectionPolicy::default(),
            drift_window: 5,
            drift_trigger_ratio: 2.0,
            phase1_cycles: 10,
            recalibration_window: Some(15),
            n_cycles: 20,
            n_repetitions: 10,
            seeds: (1..=10).collect(),
            output_dir: PathBuf::from("out"),
            mode: ExecutionMode::Deterministic,
            schema_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let config = |msg: String| Err(RunError::Config(msg));
        self.ground_truth
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        self.knowledge
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.design.n_initial < 2 {
            return config(format!(
                "design n_initial must be at least 2, got {}",
                self.design.n_initial
            ));
        }
        if self.n_cycles < self.design.n_initial as u64 {
            return config(format!(
                "n_cycles ({}) must be at least the design size ({})",
                self.n_cycles, self.design.n_initial
            ));
        }
        if self.n_repetitions == 0 {
            return config("n_repetitions must be at least 1".into());
        }
        if self.seeds.len() != self.n_repetitions {
            return config(format!(
                "seeds list has {} entries for {} repetitions",
                self.seeds.len(),
                self.n_repetitions
            ));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return config("weights must be positive".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return config(format!("weights sum to {sum}, not 1"));
        }
        if self.drift_window < 3 {
            return config("drift_window must be at least 3".into());
        }
        if self.drift_trigger_ratio <= 1.0 {
            return config("drift_trigger_ratio must exceed 1".into());
        }
        if self.phase1_cycles == 0 {
            return config("phase1_cycles must be at least 1".into());
        }
        if !(self.policy.alpha >= 0.0 && self.policy.alpha <= 1.0) {
            return config(format!(
                "alpha must lie in [0, 1], got {}",
                self.policy.alpha
            ));
        }
        if !self.knowledge.bounds.contains_key("x") {
            return config("knowledge base lacks bounds for signal x".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_document_parses_to_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_cycles, 20);
        assert_eq!(cfg.n_repetitions, 10);
        assert_eq!(cfg.design.n_initial, 5);
    }

    #[test]
    fn cycle_budget_below_design_is_rejected() {
        let cfg = ExperimentConfig {
            n_cycles: 3,
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(RunError::Config(_))));
    }

    #[test]
    fn seed_count_must_match_repetitions() {
        let cfg = ExperimentConfig {
            seeds: vec![1, 2],
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(RunError::Config(_))));
    }

    #[test]
    fn mode_aliases_parse() {
        let det: ExecutionMode = serde_json::from_str("\"det\"").unwrap();
        assert_eq!(det, ExecutionMode::Deterministic);
        let conc: ExecutionMode = serde_json::from_str("\"concurrent\"").unwrap();
        assert_eq!(conc, ExecutionMode::Concurrent);
    }
}
