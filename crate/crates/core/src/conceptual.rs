//! Conceptual-layer services: the knowledge base (algorithm topology,
//! bounds, constraints), business logic (constraint checks and adaption
//! decisions), and run record-keeping with CSV export.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{AdaptionCommand, ObjectiveWeights};
use crate::smbo::InfillSpec;
use crate::surrogates::{ForestConfig, KrigingConfig, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ConceptError {
    #[error("duplicate cycle record for (cycle {cycle}, pipeline {pipeline_id})")]
    DuplicateRecord { cycle: u64, pipeline_id: String },
    #[error("report io error: {0}")]
    Io(String),
    #[error("invalid knowledge base: {0}")]
    InvalidKnowledge(String),
}

/// One algorithm plus a hyperparameter setup from the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSetup {
    /// Setup label, e.g. "a1".
    pub name: String,
    #[serde(flatten)]
    pub model: ModelSpec,
    #[serde(default)]
    pub infill: InfillSpec,
}

/// User-definable process constraints.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    /// Maximum grams of corn allowed in the reactor per batch.
    pub max_corn: Option<f64>,
    /// Nominal feed rate used to translate runtime into corn mass.
    pub feed_rate: Option<f64>,
}

/// Static a-priori knowledge: goal-to-algorithm topology, parameter bounds
/// per plant signal, constraints, and the minimum expected improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// Goal kind → feasible (algorithm, setup) pairs, in declaration order.
    pub goals: BTreeMap<String, Vec<AlgorithmSetup>>,
    /// Plant signal name → inclusive bounds.
    pub bounds: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub constraints: Constraints,
    /// Minimum expected improvement δ before an adaption is issued.
    #[serde(default)]
    pub min_improvement: f64,
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<(), ConceptError> {
        for (goal, setups) in &self.goals {
            if setups.is_empty() {
                return Err(ConceptError::InvalidKnowledge(format!(
                    "goal {goal} lists no algorithm setup"
                )));
            }
        }
        for (signal, (lo, hi)) in &self.bounds {
            if lo >= hi {
                return Err(ConceptError::InvalidKnowledge(format!(
                    "bounds for {signal} are not well-ordered"
                )));
            }
        }
        if self.min_improvement < 0.0 {
            return Err(ConceptError::InvalidKnowledge(
                "min_improvement must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConceptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConceptError::Io(e.to_string()))?;
        let kb: KnowledgeBase = serde_json::from_str(&text)
            .map_err(|e| ConceptError::InvalidKnowledge(e.to_string()))?;
        kb.validate()?;
        Ok(kb)
    }

    /// Built-in topology for the popcorn optimization goal: Kriging and
    /// random forest, two setups each.
    pub fn default_popcorn() -> Self {
        let kriging = |nugget_min: f64| {
            ModelSpec::Kriging(KrigingConfig {
                nugget_min,
                ..KrigingConfig::default()
            })
        };
        let forest = |min_leaf: usize| {
            ModelSpec::Forest(ForestConfig {
                min_leaf,
                ..ForestConfig::default()
            })
        };
        let setups = vec![
            AlgorithmSetup {
                name: "a1".into(),
                model: kriging(1e-10),
                infill: InfillSpec::default(),
            },
            AlgorithmSetup {
                name: "a2".into(),
                model: kriging(1e-6),
                infill: InfillSpec::default(),
            },
            AlgorithmSetup {
                name: "b1".into(),
                model: forest(2),
                infill: InfillSpec::default(),
            },
            AlgorithmSetup {
                name: "b2".into(),
                model: forest(5),
                infill: InfillSpec::default(),
            },
        ];
        let mut goals = BTreeMap::new();
        goals.insert("optimization".to_string(), setups);
        let mut bounds = BTreeMap::new();
        bounds.insert("x".to_string(), (1.0, 10.0));
        KnowledgeBase {
            goals,
            bounds,
            constraints: Constraints {
                max_corn: Some(250.0),
                feed_rate: Some(20.0),
            },
            min_improvement: 0.0,
        }
    }
}

/// A declarative goal: what to optimize, with the scalarization weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub kind: String,
    pub weights: ObjectiveWeights,
}

/// Topology lookup by goal kind; empty for unknown kinds. Order matches
/// the knowledge-base declaration.
pub fn feasible_algorithms<'a>(goal_kind: &str, kb: &'a KnowledgeBase) -> &'a [AlgorithmSetup] {
    kb.goals.get(goal_kind).map_or(&[], Vec::as_slice)
}

/// Outcome of a constraint check. A violation is a value, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintCheck {
    Ok,
    Violation(String),
}

impl ConstraintCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ConstraintCheck::Ok)
    }
}

/// Verify a candidate conveyor runtime against the knowledge-base bounds
/// and the implied-corn constraint (bounds inclusive).
pub fn check_constraints(x: f64, kb: &KnowledgeBase) -> ConstraintCheck {
    if let Some(&(lo, hi)) = kb.bounds.get("x") {
        if x < lo || x > hi {
            return ConstraintCheck::Violation(format!("x = {x} outside bounds [{lo}, {hi}]"));
        }
    }
    if let (Some(max_corn), Some(feed_rate)) = (kb.constraints.max_corn, kb.constraints.feed_rate) {
        if feed_rate * x > max_corn {
            return ConstraintCheck::Violation(format!(
                "too much corn in the reactor: {} g > {max_corn} g",
                feed_rate * x
            ));
        }
    }
    ConstraintCheck::Ok
}

/// Issue an adaption command iff the predicted improvement over the current
/// best reaches the knowledge-base threshold δ. The candidate must already
/// have passed [`check_constraints`].
pub fn decide_adaption(
    current_best_y: f64,
    candidate_x: f64,
    predicted_y: f64,
    kb: &KnowledgeBase,
    cycle: u64,
    pipeline_id: &str,
) -> Option<AdaptionCommand> {
    if current_best_y - predicted_y >= kb.min_improvement {
        Some(AdaptionCommand {
            parameter: "x".to_string(),
            value: candidate_x,
            cycle,
            pipeline_id: pipeline_id.to_string(),
        })
    } else {
        None
    }
}

/// Per-cycle, per-pipeline monitoring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub pipeline_id: String,
    pub x_evaluated: f64,
    pub y_observed: f64,
    pub predicted_optimum: f64,
    pub pred_error: f64,
    pub cpu_ms: f64,
    pub model_bytes: usize,
    pub selected: bool,
    pub adapted: bool,
    pub drift: bool,
}

pub const REPORT_HEADER: &str =
    "cycle,pipeline_id,x,y,predicted_optimum,pred_error,cpu_ms,model_bytes,selected,adapted,drift";

/// Append-only run log: one record per (cycle, pipeline).
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    records: Vec<CycleRecord>,
    keys: HashSet<(u64, String)>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog::default()
    }

    pub fn record_cycle(&mut self, record: CycleRecord) -> Result<(), ConceptError> {
        let key = (record.cycle, record.pipeline_id.clone());
        if !self.keys.insert(key) {
            return Err(ConceptError::DuplicateRecord {
                cycle: record.cycle,
                pipeline_id: record.pipeline_id,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[CycleRecord] {
        &self.records
    }

    pub fn drift_events(&self) -> usize {
        self.records.iter().filter(|r| r.drift).count()
    }

    /// All records sorted by (cycle, pipeline_id), as CSV.
    pub fn to_csv(&self) -> String {
        let mut sorted = self.records.clone();
        sorted.sort_by(|a, b| {
            a.cycle
                .cmp(&b.cycle)
                .then(a.pipeline_id.cmp(&b.pipeline_id))
        });
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &sorted {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.cycle,
                r.pipeline_id,
                r.x_evaluated,
                r.y_observed,
                r.predicted_optimum,
                r.pred_error,
                r.cpu_ms,
                r.model_bytes,
                u8::from(r.selected),
                u8::from(r.adapted),
                u8::from(r.drift),
            ));
        }
        out
    }

    pub fn export_report(&self, path: &Path) -> Result<(), ConceptError> {
        let mut file = std::fs::File::create(path).map_err(|e| ConceptError::Io(e.to_string()))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| ConceptError::Io(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_algorithms_lookup() {
        let kb = KnowledgeBase::default_popcorn();
        let setups = feasible_algorithms("optimization", &kb);
        assert_eq!(setups.len(), 4);
        assert_eq!(setups[0].model.algorithm(), "kriging");
        assert_eq!(setups[2].model.algorithm(), "random-forest");
        assert!(feasible_algorithms("unknown", &kb).is_empty());
        // declaration order is preserved
        let names: Vec<&str> = setups.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["a1", "a2", "b1", "b2"]);
    }

    #[test]
    fn constraint_checks() {
        let kb = KnowledgeBase::default_popcorn();
        assert!(check_constraints(5.0, &kb).is_ok());
        // bounds inclusive
        assert!(check_constraints(10.0, &kb).is_ok());
        assert!(!check_constraints(10.5, &kb).is_ok());
        // implied corn: 20 g/s * 13 s > 250 g would be out of bounds anyway;
        // tighten the corn limit to see the dedicated violation
        let mut tight = kb.clone();
        tight.constraints.max_corn = Some(100.0);
        match check_constraints(6.0, &tight) {
            ConstraintCheck::Violation(reason) => assert!(reason.contains("corn")),
            ConstraintCheck::Ok => panic!("expected corn violation"),
        }
    }

    #[test]
    fn adaption_threshold() {
        let mut kb = KnowledgeBase::default_popcorn();
        // δ = 0: any non-worsening candidate is adapted
        assert!(decide_adaption(1.0, 3.0, 1.0, &kb, 7, "p").is_some());
        kb.min_improvement = 0.05;
        assert!(decide_adaption(1.0, 3.0, 0.99, &kb, 7, "p").is_none());
        let cmd = decide_adaption(1.0, 3.0, 0.9, &kb, 7, "p").unwrap();
        assert_eq!(cmd.value, 3.0);
        assert_eq!(cmd.cycle, 7);
    }

    fn record(cycle: u64, pipeline: &str) -> CycleRecord {
        CycleRecord {
            cycle,
            pipeline_id: pipeline.to_string(),
            x_evaluated: 3.0,
            y_observed: 0.5,
            predicted_optimum: 0.45,
            pred_error: 0.02,
            cpu_ms: 1.5,
            model_bytes: 420,
            selected: false,
            adapted: true,
            drift: false,
        }
    }

    #[test]
    fn run_log_rejects_duplicates_and_sorts_export() {
        let mut log = RunLog::new();
        for cycle in (5..=20).rev() {
            log.record_cycle(record(cycle, "b")).unwrap();
            log.record_cycle(record(cycle, "a")).unwrap();
        }
        assert_eq!(
            log.record_cycle(record(5, "a")),
            Err(ConceptError::DuplicateRecord {
                cycle: 5,
                pipeline_id: "a".into()
            })
        );
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 32);
        assert_eq!(lines[0], REPORT_HEADER);
        assert!(lines[1].starts_with("5,a,"));
        assert!(lines[2].starts_with("5,b,"));
        assert!(lines[32].starts_with("20,b,"));
    }

    #[test]
    fn empty_log_exports_header_only() {
        let log = RunLog::new();
        assert_eq!(log.to_csv(), format!("{REPORT_HEADER}\n"));
    }

    #[test]
    fn knowledge_base_round_trips_through_json() {
        let kb = KnowledgeBase::default_popcorn();
        let json = serde_json::to_string_pretty(&kb).unwrap();
        let back: KnowledgeBase = serde_json::from_str(&json).unwrap();
        assert_eq!(kb, back);
        back.validate().unwrap();
    }

    #[test]
    fn knowledge_base_validation() {
        let mut kb = KnowledgeBase::default_popcorn();
        kb.bounds.insert("x".into(), (5.0, 5.0));
        assert!(kb.validate().is_err());
        let mut kb2 = KnowledgeBase::default_popcorn();
        kb2.goals.insert("empty".into(), vec![]);
        assert!(kb2.validate().is_err());
    }
}
