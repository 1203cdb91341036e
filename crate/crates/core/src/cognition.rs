//! The cognitive module: instantiates candidate pipelines from the
//! knowledge base, scores them on accuracy and predicted optimum, selects
//! one after the initialization phase, monitors its prediction error for
//! drift during operation, and re-calibrates on drift.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conceptual::{feasible_algorithms, KnowledgeBase};
use crate::smbo::InfillSpec;
use crate::surrogates::ModelSpec;

#[derive(Debug, Error, PartialEq)]
pub enum CognitionError {
    #[error("no feasible algorithm for goal: {0}")]
    UnsupportedGoal(String),
    #[error("no performance records to score")]
    EmptyPerformance,
    #[error("performance records span multiple cycles: {0} and {1}")]
    MixedCycles(u64, u64),
}

/// One candidate processing pipeline: preprocessing reference, model
/// algorithm with hyperparameters, infill search, and its consumer group on
/// the preprocessed-data topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub pipeline_id: String,
    /// Normalization reference for the process input (denormalized bounds).
    pub normalization: (f64, f64),
    pub model: ModelSpec,
    pub infill: InfillSpec,
    pub consumer_group: String,
    /// Sliding-window forgetting; activated on re-calibration.
    pub window: Option<usize>,
}

/// Measured quality/cost record of one pipeline in one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePerformance {
    pub pipeline_id: String,
    pub cycle: u64,
    pub pred_error: f64,
    pub predicted_optimum: f64,
    pub cpu_time_s: f64,
    pub model_size_bytes: usize,
}

/// How accuracy and predicted optimum are combined into one score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    /// Weight of prediction accuracy vs. predicted optimum, in [0, 1].
    pub alpha: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy { alpha: 0.5 }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Instantiate one candidate pipeline per (algorithm, setup) pair the
/// knowledge base lists as feasible for the goal, each with its own
/// consumer group.
pub fn init_candidates(
    goal_kind: &str,
    kb: &KnowledgeBase,
    bounds: (f64, f64),
) -> Result<Vec<PipelineSpec>, CognitionError> {
    let setups = feasible_algorithms(goal_kind, kb);
    if setups.is_empty() {
        return Err(CognitionError::UnsupportedGoal(goal_kind.to_string()));
    }
    Ok(setups
        .iter()
        .map(|setup| {
            let pipeline_id = format!("{}-{}", setup.model.algorithm(), setup.name);
            let consumer_group = format!("grp-{pipeline_id}");
            PipelineSpec {
                pipeline_id,
                normalization: bounds,
                model: setup.model.clone(),
                infill: setup.infill.clone(),
                consumer_group,
                window: None,
            }
        })
        .collect())
}

/// Rank pipelines for one cycle: `alpha * norm(pred_error) +
/// (1-alpha) * norm(predicted_optimum)` with min-max normalization across
/// the cycle's records, ascending; ties broken by cpu time then model size.
pub fn score(
    perfs: &[PipelinePerformance],
    policy: &SelectionPolicy,
) -> Result<Vec<String>, CognitionError> {
    if perfs.is_empty() {
        return Err(CognitionError::EmptyPerformance);
    }
    let cycle = perfs[0].cycle;
    if let Some(other) = perfs.iter().find(|p| p.cycle != cycle) {
        return Err(CognitionError::MixedCycles(cycle, other.cycle));
    }
    let norm = |values: Vec<f64>| -> Vec<f64> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            vec![0.0; values.len()]
        } else {
            values.iter().map(|v| (v - lo) / (hi - lo)).collect()
        }
    };
    let err_n = norm(perfs.iter().map(|p| p.pred_error).collect());
    let opt_n = norm(perfs.iter().map(|p| p.predicted_optimum).collect());
    let mut order: Vec<usize> = (0..perfs.len()).collect();
    let scores: Vec<f64> = (0..perfs.len())
        .map(|i| policy.alpha * err_n[i] + (1.0 - policy.alpha) * opt_n[i])
        .collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap()
            .then(
                perfs[a]
                    .cpu_time_s
                    .partial_cmp(&perfs[b].cpu_time_s)
                    .unwrap(),
            )
            .then(perfs[a].model_size_bytes.cmp(&perfs[b].model_size_bytes))
    });
    Ok(order
        .into_iter()
        .map(|i| perfs[i].pipeline_id.clone())
        .collect())
}

/// Top of the ranking.
pub fn select_pipeline(ranking: &[String]) -> &str {
    &ranking[0]
}

/// Prediction-error drift monitor for the selected pipeline. The baseline
/// is the median error over the first `window` post-selection cycles; a
/// drift fires once the median of the last `window` errors exceeds
/// `trigger_ratio * baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDetector {
    pub window: usize,
    pub trigger_ratio: f64,
    baseline: Option<f64>,
    forming: Vec<f64>,
    recent: VecDeque<f64>,
}

impl DriftDetector {
    pub fn new(window: usize, trigger_ratio: f64) -> Self {
        assert!(window >= 3, "drift window must be at least 3");
        assert!(trigger_ratio > 1.0, "trigger ratio must exceed 1");
        DriftDetector {
            window,
            trigger_ratio,
            baseline: None,
            forming: Vec::new(),
            recent: VecDeque::new(),
        }
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Feed one prediction error; returns the drift verdict after it.
    pub fn observe(&mut self, error: f64) -> bool {
        match self.baseline {
            None => {
                self.forming.push(error);
                if self.forming.len() == self.window {
                    let mut v = self.forming.clone();
                    self.baseline = Some(median(&mut v).max(1e-12));
                }
                false
            }
            Some(_) => {
                self.recent.push_back(error);
                while self.recent.len() > self.window {
                    self.recent.pop_front();
                }
                self.drifted()
            }
        }
    }

    /// True iff the median of the last `window` errors exceeds the trigger.
    pub fn drifted(&self) -> bool {
        let Some(baseline) = self.baseline else {
            return false;
        };
        if self.recent.len() < self.window {
            return false;
        }
        let mut v: Vec<f64> = self.recent.iter().copied().collect();
        median(&mut v) > self.trigger_ratio * baseline
    }

    pub fn reset(&mut self) {
        self.baseline = None;
        self.forming.clear();
        self.recent.clear();
    }
}

/// Phase of the cognition state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initialization,
    Operation,
}

/// What the cognition decided for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDecision {
    /// Whose candidate is evaluated on the plant this cycle.
    pub chosen_pipeline: String,
    /// Set in the cycle the cognition transitions to operation.
    pub selected_now: Option<String>,
    pub drift: bool,
    pub recalibrated: bool,
}

/// The cognition driver across cycles: Phase-1 candidate scoring and
/// selection, Phase-2 drift monitoring and re-calibration.
#[derive(Debug, Clone)]
pub struct Cognition {
    pub candidates: Vec<PipelineSpec>,
    pub policy: SelectionPolicy,
    pub phase: Phase,
    /// Scored cycles after which Phase-1 selects.
    pub phase1_len: u64,
    cycles_in_phase: u64,
    selected: Option<String>,
    detector: DriftDetector,
    recalibrations: u64,
    /// Forgetting window activated on re-calibration.
    recalibration_window: Option<usize>,
}

impl Cognition {
    pub fn new(
        goal_kind: &str,
        kb: &KnowledgeBase,
        bounds: (f64, f64),
        policy: SelectionPolicy,
        phase1_len: u64,
        detector: DriftDetector,
        recalibration_window: Option<usize>,
    ) -> Result<Self, CognitionError> {
        let candidates = init_candidates(goal_kind, kb, bounds)?;
        Ok(Cognition {
            candidates,
            policy,
            phase: Phase::Initialization,
            phase1_len,
            cycles_in_phase: 0,
            selected: None,
            detector,
            recalibrations: 0,
            recalibration_window,
        })
    }

    pub fn selected(&self) -> Option<&str> {
        self.selected.as_deref()
    }

    pub fn recalibration_count(&self) -> u64 {
        self.recalibrations
    }

    /// Re-enter Phase-1: re-instantiate candidate specs with forgetting
    /// windows activated and reset the drift baseline.
    pub fn recalibrate(&mut self) -> Vec<PipelineSpec> {
        for spec in &mut self.candidates {
            spec.window = self.recalibration_window;
        }
        self.phase = Phase::Initialization;
        self.cycles_in_phase = 0;
        self.selected = None;
        self.detector.reset();
        self.recalibrations += 1;
        self.candidates.clone()
    }

    /// Consume one cycle's performance records and decide whose candidate
    /// runs on the plant.
    pub fn handle_cycle(
        &mut self,
        perfs: &[PipelinePerformance],
    ) -> Result<CycleDecision, CognitionError> {
        let ranking = score(perfs, &self.policy)?;
        match self.phase {
            Phase::Initialization => {
                let chosen = select_pipeline(&ranking).to_string();
                self.cycles_in_phase += 1;
                let selected_now = if self.cycles_in_phase >= self.phase1_len {
                    self.selected = Some(chosen.clone());
                    self.phase = Phase::Operation;
                    self.cycles_in_phase = 0;
                    self.detector.reset();
                    Some(chosen.clone())
                } else {
                    None
                };
                Ok(CycleDecision {
                    chosen_pipeline: chosen,
                    selected_now,
                    drift: false,
                    recalibrated: false,
                })
            }
            Phase::Operation => {
                let chosen = self.selected.clone().expect("operation implies selection");
                let perf = perfs
                    .iter()
                    .find(|p| p.pipeline_id == chosen)
                    .ok_or(CognitionError::EmptyPerformance)?;
                let drift = self.detector.observe(perf.pred_error);
                let recalibrated = if drift {
                    self.recalibrate();
                    true
                } else {
                    false
                };
                Ok(CycleDecision {
                    chosen_pipeline: chosen,
                    selected_now: None,
                    drift,
                    recalibrated,
                })
            }
        }
    }
}
