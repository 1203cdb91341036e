//! Surrogate models behind one fit/predict interface: ordinary Kriging and
//! random-forest regression, with sliding-window forgetting and fit
//! instrumentation (CPU time, serialized model size).

pub mod forest;
pub mod kriging;
mod linalg;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
pub use forest::{ForestConfig, ForestModel};
pub use kriging::{KrigingConfig, KrigingModel};

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("need at least {need} training points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("singular design: all inputs identical")]
    SingularDesign,
    #[error("correlation matrix not positive definite at any nugget level")]
    IllConditioned,
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Normalized training history: inputs in `[0,1]^d`, aggregated objective
/// values, and an optional sliding window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Dataset<F: Real> {
    pub x: Vec<Vec<F>>,
    pub y: Vec<F>,
    /// When set, [`Dataset::windowed`] keeps only the newest `window` points.
    pub window: Option<usize>,
}

impl<F: Real> Dataset<F> {
    pub fn new(dim: usize) -> Self {
        let _ = dim;
        Dataset {
            x: Vec::new(),
            y: Vec::new(),
            window: None,
        }
    }

    pub fn with_window(window: usize) -> Self {
        Dataset {
            x: Vec::new(),
            y: Vec::new(),
            window: Some(window),
        }
    }

    pub fn push(&mut self, x: Vec<F>, y: F) {
        debug_assert!(x.iter().all(|v| *v >= F::zero() && *v <= F::one()));
        self.x.push(x);
        self.y.push(y);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Sliding-window forgetting: keep only the most recent `window` points.
    /// Identity when no window is set or the data already fits.
    pub fn windowed(&self) -> Dataset<F> {
        match self.window {
            Some(w) if self.len() > w => Dataset {
                x: self.x[self.len() - w..].to_vec(),
                y: self.y[self.len() - w..].to_vec(),
                window: self.window,
            },
            _ => self.clone(),
        }
    }

    pub(crate) fn all_inputs_identical(&self) -> bool {
        self.x.windows(2).all(|w| w[0] == w[1])
    }
}

/// Free-function form of the forgetting step.
pub fn apply_forgetting<F: Real>(data: &Dataset<F>) -> Dataset<F> {
    data.windowed()
}

/// Model prediction: mean plus an uncertainty measure (predictive standard
/// deviation for Kriging, across-tree spread for the forest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<F> {
    pub mean: F,
    pub sd: F,
}

/// Instrumentation of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Processor time spent inside the fit, in seconds.
    pub cpu_time_s: f64,
    /// Byte length of the serialized model.
    pub model_size_bytes: usize,
    pub n_points: usize,
}

/// A fitted surrogate of either kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub enum FittedModel<F: Real> {
    Kriging(KrigingModel<F>),
    Forest(ForestModel<F>),
}

impl<F: Real> FittedModel<F> {
    pub fn predict(&self, x: &[F]) -> Prediction<F> {
        match self {
            FittedModel::Kriging(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
        }
    }

    pub fn algorithm(&self) -> &'static str {
        match self {
            FittedModel::Kriging(_) => "kriging",
            FittedModel::Forest(_) => "random-forest",
        }
    }

    pub fn serialized_len(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(0)
    }
}

/// Which surrogate to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum ModelSpec {
    Kriging(KrigingConfig),
    #[serde(rename = "random-forest")]
    Forest(ForestConfig),
}

impl ModelSpec {
    pub fn algorithm(&self) -> &'static str {
        match self {
            ModelSpec::Kriging(_) => "kriging",
            ModelSpec::Forest(_) => "random-forest",
        }
    }

    /// Whether the model exposes a genuine predictive standard deviation.
    pub fn has_uncertainty(&self) -> bool {
        matches!(self, ModelSpec::Kriging(_))
    }

    pub fn fit<F: Real>(
        &self,
        data: &Dataset<F>,
    ) -> Result<(FittedModel<F>, FitReport), SurrogateError> {
        let start = thread_cpu_time_s();
        let model = match self {
            ModelSpec::Kriging(cfg) => FittedModel::Kriging(kriging::kriging_fit(data, cfg)?),
            ModelSpec::Forest(cfg) => FittedModel::Forest(forest::rf_fit(data, cfg)?),
        };
        let cpu_time_s = (thread_cpu_time_s() - start).max(0.0);
        let report = FitReport {
            cpu_time_s,
            model_size_bytes: model.serialized_len(),
            n_points: data.len(),
        };
        Ok((model, report))
    }
}

/// CPU time of the calling thread, in seconds.
pub fn thread_cpu_time_s() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: ts is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}
