//! The sequential model-based optimization loop: evaluate an initial
//! design, then repeat fit → search → evaluate, one plant evaluation per
//! cycle.

pub mod design;
pub mod infill;

pub use design::{generate_design, DesignKind, DesignSpec};
pub use infill::{expected_improvement, optimize_infill, InfillCriterion, InfillSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::surrogates::{Dataset, FitReport, FittedModel, ModelSpec, SurrogateError};

#[derive(Debug, Error)]
pub enum SmboError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("evaluator failure: {0}")]
    Evaluator(String),
}

/// Loop state: full evaluation history plus the running best.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SmboState<F: Real> {
    pub history: Dataset<F>,
    pub best_x: Vec<F>,
    pub best_y: F,
    /// Completed SMBO cycles (evaluations after the initial design).
    pub cycle: u64,
}

impl<F: Real> SmboState<F> {
    /// Empty state; history fills via [`SmboState::observe`].
    pub fn new(dim: usize) -> Self {
        SmboState {
            history: Dataset::new(dim),
            best_x: Vec::new(),
            best_y: F::infinity(),
            cycle: 0,
        }
    }

    /// Initialize from evaluated design points.
    pub fn from_design(points: Vec<(Vec<F>, F)>, window: Option<usize>) -> Self {
        assert!(!points.is_empty(), "design must contain evaluations");
        let mut history = Dataset::new(points[0].0.len());
        history.window = window;
        let mut best_x = points[0].0.clone();
        let mut best_y = F::infinity();
        for (x, y) in points {
            if y < best_y {
                best_y = y;
                best_x = x.clone();
            }
            history.push(x, y);
        }
        SmboState {
            history,
            best_x,
            best_y,
            cycle: 0,
        }
    }

    /// Record one observed evaluation and maintain the running minimum.
    pub fn observe(&mut self, x: Vec<F>, y: F) {
        if y < self.best_y {
            self.best_y = y;
            self.best_x = x.clone();
        }
        self.history.push(x, y);
        self.cycle += 1;
    }
}

/// What one fit-and-search pass produced, before any evaluation.
#[derive(Debug, Clone)]
pub struct Proposal<F: Real> {
    pub x_candidate: Vec<F>,
    /// Model prediction at the candidate.
    pub predicted_optimum: F,
    /// `|prediction - true objective|` at the candidate.
    pub pred_error: F,
    pub report: FitReport,
    pub model: FittedModel<F>,
}

/// Apply forgetting, fit the surrogate, and search it for the next
/// candidate. The true objective is used only for the prediction-error
/// metric.
pub fn propose<F: Real>(
    state: &SmboState<F>,
    model_spec: &ModelSpec,
    infill_spec: &InfillSpec,
    bounds: &[(F, F)],
    truth: &dyn Fn(&[F]) -> F,
    seed: u64,
) -> Result<Proposal<F>, SmboError> {
    let train = state.history.windowed();
    let (model, report) = model_spec.fit(&train)?;
    let (x_candidate, predicted_optimum) =
        optimize_infill(&model, infill_spec, bounds, state.best_y, seed);
    let pred_error = (predicted_optimum - truth(&x_candidate)).abs();
    Ok(Proposal {
        x_candidate,
        predicted_optimum,
        pred_error,
        report,
        model,
    })
}

/// Result of one full SMBO cycle.
#[derive(Debug, Clone)]
pub struct StepOutcome<F: Real> {
    pub x_candidate: Vec<F>,
    pub predicted_optimum: F,
    pub pred_error: F,
    pub y_observed: F,
    pub report: FitReport,
}

/// One SMBO cycle: fit, search, evaluate the candidate, update the state.
/// An evaluator failure propagates without consuming a cycle.
pub fn smbo_step<F: Real>(
    state: &mut SmboState<F>,
    model_spec: &ModelSpec,
    infill_spec: &InfillSpec,
    bounds: &[(F, F)],
    evaluator: &mut dyn FnMut(&[F]) -> Result<F, String>,
    truth: &dyn Fn(&[F]) -> F,
    seed: u64,
) -> Result<StepOutcome<F>, SmboError> {
    let proposal = propose(state, model_spec, infill_spec, bounds, truth, seed)?;
    let y_observed = evaluator(&proposal.x_candidate).map_err(SmboError::Evaluator)?;
    state.observe(proposal.x_candidate.clone(), y_observed);
    Ok(StepOutcome {
        x_candidate: proposal.x_candidate,
        predicted_optimum: proposal.predicted_optimum,
        pred_error: proposal.pred_error,
        y_observed,
        report: proposal.report,
    })
}
