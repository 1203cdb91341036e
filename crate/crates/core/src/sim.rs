//! Ground-truth simulator of the popcorn dosing process.
//!
//! The dosing parameter `x` is the conveyor runtime in seconds; it controls
//! how much corn enters the reactor. Each batch must fill one box of popped
//! corn. Underdosing wastes the whole batch (shortfall penalty on corn),
//! overdosing wastes corn, time, and energy, so the three objectives
//! conflict and the optimum sits just above the fill threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("parameter {value} outside bounds [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown drift field: {0}")]
    UnknownDriftField(String),
    #[error("drift cycle {cycle} is not in the future (current cycle {current})")]
    DriftInPast { cycle: u64, current: u64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Ground-truth fields a drift may change mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftField {
    /// Unpopped-rate mean `u`.
    UnpoppedRate,
    /// Feed rate `r` in grams per second of conveyor runtime.
    FeedRate,
    /// Box requirement `B` in grams of popped corn.
    BoxRequirement,
}

impl std::str::FromStr for DriftField {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "u" | "unpopped_rate" => Ok(DriftField::UnpoppedRate),
            "r" | "feed_rate" => Ok(DriftField::FeedRate),
            "b" | "box_requirement" => Ok(DriftField::BoxRequirement),
            other => Err(SimError::UnknownDriftField(other.to_string())),
        }
    }
}

/// A scheduled change of a ground-truth field from a given cycle on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub cycle: u64,
    pub field: DriftField,
    pub value: f64,
}

/// Process parameters of the simulated plant. All values are configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTruthConfig {
    /// Feed rate r: grams of corn per second of conveyor runtime.
    pub feed_rate: f64,
    /// Mean fraction of corn that does not pop.
    pub unpopped_rate: f64,
    /// Standard deviation of the unpopped fraction (batch-to-batch noise).
    pub unpopped_sd: f64,
    /// Grams of popped corn required to fill one box.
    pub box_requirement: f64,
    /// Base processing time in seconds.
    pub base_time: f64,
    /// Processing seconds per second of conveyor runtime.
    pub time_per_second: f64,
    /// Handling seconds per gram of corn.
    pub handling_per_gram: f64,
    /// Base energy in kWh.
    pub base_energy: f64,
    /// Energy in kWh per second of processing time.
    pub energy_per_second: f64,
    /// Corn-equivalent penalty for an unfilled box, in grams.
    pub shortfall_penalty: f64,
    /// Conveyor-runtime bounds in seconds.
    pub bounds: (f64, f64),
    pub seed: u64,
    /// Scheduled ground-truth changes.
    pub drift_schedule: Vec<DriftEvent>,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig {
            feed_rate: 20.0,
            unpopped_rate: 0.15,
            unpopped_sd: 0.03,
            box_requirement: 50.0,
            base_time: 30.0,
            time_per_second: 5.0,
            handling_per_gram: 0.5,
            base_energy: 0.05,
            energy_per_second: 0.002,
            shortfall_penalty: 200.0,
            bounds: (1.0, 10.0),
            seed: 0,
            drift_schedule: Vec::new(),
        }
    }
}

impl GroundTruthConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.feed_rate <= 0.0
            || self.time_per_second <= 0.0
            || self.handling_per_gram <= 0.0
            || self.energy_per_second <= 0.0
        {
            return Err(SimError::InvalidConfig("rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.unpopped_rate) {
            return Err(SimError::InvalidConfig(
                "unpopped rate must be in [0, 1)".into(),
            ));
        }
        if self.unpopped_sd < 0.0 {
            return Err(SimError::InvalidConfig(
                "unpopped sd must be non-negative".into(),
            ));
        }
        if self.shortfall_penalty <= 0.0 {
            return Err(SimError::InvalidConfig(
                "shortfall penalty must be positive".into(),
            ));
        }
        if self.bounds.0 >= self.bounds.1 {
            return Err(SimError::InvalidConfig(
                "bounds must satisfy lo < hi".into(),
            ));
        }
        Ok(())
    }
}

/// The three raw objectives of one production batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub cycle: u64,
    pub x_used: f64,
    /// Energy consumption in kWh.
    pub f1: f64,
    /// Processing time in seconds.
    pub f2: f64,
    /// Corn consumed per filled box in grams (penalized when unfilled).
    pub f3: f64,
    pub popped: f64,
    pub box_filled: bool,
}

/// Scalarization weights plus the per-objective normalization ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub weights: [f64; 3],
    /// `[lo_i, hi_i]` normalization range per objective.
    pub ranges: [(f64, f64); 3],
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(SimError::InvalidWeights("weights must be positive".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SimError::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        if self.ranges.iter().any(|&(lo, hi)| hi <= lo) {
            return Err(SimError::InvalidWeights(
                "ranges must satisfy hi > lo".into(),
            ));
        }
        Ok(())
    }

    pub fn equal(ranges: [(f64, f64); 3]) -> Self {
        ObjectiveWeights {
            weights: [1.0 / 3.0; 3],
            ranges,
        }
    }
}

/// Weighted sum of min-max normalized objectives.
pub fn aggregate(result: &BatchResult, weights: &ObjectiveWeights) -> f64 {
    aggregate_raw([result.f1, result.f2, result.f3], weights)
}

pub fn aggregate_raw(f: [f64; 3], weights: &ObjectiveWeights) -> f64 {
    f.iter()
        .zip(weights.weights.iter())
        .zip(weights.ranges.iter())
        .map(|((fi, wi), (lo, hi))| wi * (fi - lo) / (hi - lo))
        .sum()
}

/// A vetted parameter change for the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptionCommand {
    pub parameter: String,
    pub value: f64,
    pub cycle: u64,
    pub pipeline_id: String,
}

/// Acknowledgement returned by the plant after applying an adaption.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptionAck {
    pub cycle: u64,
    pub x: f64,
}

/// The simulated plant. One batch runs at a time.
pub struct VpsSimulator {
    config: GroundTruthConfig,
    current_x: f64,
    cycle: u64,
    rng: ChaCha12Rng,
    drift_schedule: Vec<DriftEvent>,
    /// Out-of-bounds adaptions that reached the plant despite the upstream
    /// business-logic check. Must stay zero in a healthy system.
    violations: u64,
}

impl VpsSimulator {
    pub fn new(config: GroundTruthConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut drift_schedule = config.drift_schedule.clone();
        drift_schedule.sort_by_key(|d| d.cycle);
        let current_x = config.bounds.0;
        let rng = ChaCha12Rng::seed_from_u64(config.seed);
        Ok(VpsSimulator {
            config,
            current_x,
            cycle: 0,
            rng,
            drift_schedule,
            violations: 0,
        })
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.config.bounds
    }

    pub fn config(&self) -> &GroundTruthConfig {
        &self.config
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn current_x(&self) -> f64 {
        self.current_x
    }

    pub fn violation_count(&self) -> u64 {
        self.violations
    }

    fn check_bounds(&self, x: f64) -> Result<(), SimError> {
        let (lo, hi) = self.config.bounds;
        if x < lo || x > hi || !x.is_finite() {
            Err(SimError::OutOfBounds { value: x, lo, hi })
        } else {
            Ok(())
        }
    }

    fn apply_due_drifts(&mut self) {
        while let Some(event) = self.drift_schedule.first() {
            if event.cycle > self.cycle {
                break;
            }
            let event = self.drift_schedule.remove(0);
            match event.field {
                DriftField::UnpoppedRate => self.config.unpopped_rate = event.value,
                DriftField::FeedRate => self.config.feed_rate = event.value,
                DriftField::BoxRequirement => self.config.box_requirement = event.value,
            }
        }
    }

    /// Run one batch at conveyor runtime `x`. Consumes one cycle on success;
    /// an out-of-bounds `x` does not run a batch.
    pub fn run_batch(&mut self, x: f64) -> Result<BatchResult, SimError> {
        self.check_bounds(x)?;
        self.cycle += 1;
        self.apply_due_drifts();
        let c = &self.config;
        let corn = c.feed_rate * x;
        let u = if c.unpopped_sd > 0.0 {
            let normal = Normal::new(c.unpopped_rate, c.unpopped_sd)
                .expect("validated sd is finite and non-negative");
            normal.sample(&mut self.rng).clamp(0.0, 0.95)
        } else {
            c.unpopped_rate
        };
        let popped = corn * (1.0 - u);
        let box_filled = popped >= c.box_requirement;
        let result = BatchResult {
            cycle: self.cycle,
            x_used: x,
            f1: c.base_energy + c.energy_per_second * (c.base_time + c.time_per_second * x),
            f2: c.base_time + c.time_per_second * x + c.handling_per_gram * corn,
            f3: if box_filled {
                corn
            } else {
                corn + c.shortfall_penalty
            },
            popped,
            box_filled,
        };
        Ok(result)
    }

    /// Run one batch at the currently adapted parameter.
    pub fn run_current_batch(&mut self) -> Result<BatchResult, SimError> {
        self.run_batch(self.current_x)
    }

    /// Apply a vetted parameter change. Bounds are re-checked defensively;
    /// a violation is rejected and counted.
    pub fn apply_adaption(&mut self, command: &AdaptionCommand) -> Result<AdaptionAck, SimError> {
        if let Err(e) = self.check_bounds(command.value) {
            self.violations += 1;
            return Err(e);
        }
        self.current_x = command.value;
        Ok(AdaptionAck {
            cycle: self.cycle,
            x: self.current_x,
        })
    }

    /// Schedule a ground-truth change for a future cycle.
    pub fn inject_drift(
        &mut self,
        cycle: u64,
        field: DriftField,
        value: f64,
    ) -> Result<(), SimError> {
        if cycle <= self.cycle {
            return Err(SimError::DriftInPast {
                cycle,
                current: self.cycle,
            });
        }
        self.drift_schedule.push(DriftEvent {
            cycle,
            field,
            value,
        });
        self.drift_schedule.sort_by_key(|d| d.cycle);
        Ok(())
    }

    /// Noise-free raw objectives at `x` under the current configuration.
    pub fn noise_free_objectives(&self, x: f64) -> Result<[f64; 3], SimError> {
        self.check_bounds(x)?;
        let c = &self.config;
        let corn = c.feed_rate * x;
        let popped = corn * (1.0 - c.unpopped_rate);
        let box_filled = popped >= c.box_requirement;
        Ok([
            c.base_energy + c.energy_per_second * (c.base_time + c.time_per_second * x),
            c.base_time + c.time_per_second * x + c.handling_per_gram * corn,
            if box_filled {
                corn
            } else {
                corn + c.shortfall_penalty
            },
        ])
    }

    /// Noise-free expected aggregated objective at `x`. Used by tests and
    /// the prediction-error metric only, never by pipelines.
    pub fn ground_truth_objective(
        &self,
        x: f64,
        weights: &ObjectiveWeights,
    ) -> Result<f64, SimError> {
        Ok(aggregate_raw(self.noise_free_objectives(x)?, weights))
    }

    /// Min/max of each raw objective over an `n`-point grid across the
    /// bounds, noise-free. The default normalization reference.
    pub fn objective_ranges(&self, n: usize) -> [(f64, f64); 3] {
        assert!(n >= 2);
        let (lo, hi) = self.config.bounds;
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 3];
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let f = self.noise_free_objectives(x).expect("grid point in bounds");
            for k in 0..3 {
                ranges[k].0 = ranges[k].0.min(f[k]);
                ranges[k].1 = ranges[k].1.max(f[k]);
            }
        }
        ranges
    }

    /// Brute-force grid argmin of the noise-free aggregated objective.
    pub fn grid_optimum(&self, weights: &ObjectiveWeights, n: usize) -> (f64, f64) {
        assert!(n >= 2);
        let (lo, hi) = self.config.bounds;
        let mut best = (lo, f64::INFINITY);
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let y = self
                .ground_truth_objective(x, weights)
                .expect("grid point in bounds");
            if y < best.1 {
                best = (x, y);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_free_config() -> GroundTruthConfig {
        GroundTruthConfig {
            unpopped_sd: 0.0,
            ..GroundTruthConfig::default()
        }
    }

    fn unit_ranges() -> [(f64, f64); 3] {
        [(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]
    }

    #[test]
    fn batch_formulas_at_defaults() {
        // r=20, u=0.15, sd=0, B=50, x=5: corn=100, popped=85
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        let b = sim.run_batch(5.0).unwrap();
        assert_eq!(b.x_used, 5.0);
        assert!((b.popped - 85.0).abs() < 1e-12);
        assert!(b.box_filled);
        assert!((b.f3 - 100.0).abs() < 1e-12);
        // f1 = 0.05 + 0.002*(30 + 5*5) = 0.16
        assert!((b.f1 - 0.16).abs() < 1e-12);
        // f2 = 30 + 25 + 0.5*100 = 105
        assert!((b.f2 - 105.0).abs() < 1e-12);
    }

    #[test]
    fn underdosed_batch_is_penalized() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        let b = sim.run_batch(2.0).unwrap();
        assert!((b.popped - 34.0).abs() < 1e-12);
        assert!(!b.box_filled);
        assert!((b.f3 - (40.0 + 200.0)).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_x_consumes_no_cycle() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        assert!(matches!(
            sim.run_batch(0.5),
            Err(SimError::OutOfBounds { .. })
        ));
        assert_eq!(sim.cycle(), 0);
    }

    #[test]
    fn aggregate_reference_points() {
        let w = ObjectiveWeights {
            weights: [1.0 / 3.0; 3],
            ranges: unit_ranges(),
        };
        w.validate().unwrap();
        // all objectives at hi -> 1
        assert!((aggregate_raw([1.0, 1.0, 1.0], &w) - 1.0).abs() < 1e-12);
        // normalized values (0.3, 0.6, 0.9) with equal weights -> 0.6
        assert!((aggregate_raw([0.3, 0.6, 0.9], &w) - 0.6).abs() < 1e-12);
        // weight concentrated on f1 at its lower reference -> 0
        let w1 = ObjectiveWeights {
            weights: [0.999_999_999_999, 5e-13, 5e-13],
            ranges: unit_ranges(),
        };
        w1.validate().unwrap();
        assert!(aggregate_raw([0.0, 0.0, 0.0], &w1).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let w = ObjectiveWeights {
            weights: [0.5, 0.3, 0.2],
            ranges: [(0.0, 2.0), (1.0, 3.0), (10.0, 30.0)],
        };
        let y = aggregate_raw([1.0, 2.0, 15.0], &w);
        let wp = ObjectiveWeights {
            weights: [0.3, 0.2, 0.5],
            ranges: [(1.0, 3.0), (10.0, 30.0), (0.0, 2.0)],
        };
        let yp = aggregate_raw([2.0, 15.0, 1.0], &wp);
        assert!((y - yp).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        let bad = ObjectiveWeights {
            weights: [0.5, 0.5, 0.1],
            ranges: unit_ranges(),
        };
        assert!(bad.validate().is_err());
        let neg = ObjectiveWeights {
            weights: [1.2, -0.1, -0.1],
            ranges: unit_ranges(),
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn ground_truth_matches_noise_free_batch() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        let ranges = sim.objective_ranges(1001);
        let w = ObjectiveWeights::equal(ranges);
        for &x in &[1.0, 2.5, 3.0, 7.0, 10.0] {
            let truth = sim.ground_truth_objective(x, &w).unwrap();
            let batch = sim.run_batch(x).unwrap();
            assert!((aggregate(&batch, &w) - truth).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_argmin_sits_at_fill_threshold() {
        // smallest x with r*x*(1-u) >= B, i.e. x >= 50/17
        let sim = VpsSimulator::new(noise_free_config()).unwrap();
        let w = ObjectiveWeights::equal(sim.objective_ranges(1001));
        let threshold = 50.0 / 17.0;
        let (x_star, _) = sim.grid_optimum(&w, 1000);
        let coarse_step = 9.0 / 999.0;
        assert!(x_star >= threshold && x_star < threshold + coarse_step + 1e-12);
        // stable under grid refinement
        let (x_fine, _) = sim.grid_optimum(&w, 10_000);
        assert!((x_star - x_fine).abs() < coarse_step);
    }

    #[test]
    fn objective_is_monotone_above_threshold() {
        let sim = VpsSimulator::new(noise_free_config()).unwrap();
        let w = ObjectiveWeights::equal(sim.objective_ranges(1001));
        let mut prev = sim.ground_truth_objective(3.0, &w).unwrap();
        let mut x = 3.05;
        while x <= 10.0 {
            let y = sim.ground_truth_objective(x, &w).unwrap();
            assert!(y > prev);
            prev = y;
            x += 0.05;
        }
    }

    #[test]
    fn f3_jumps_by_penalty_at_threshold() {
        let sim = VpsSimulator::new(noise_free_config()).unwrap();
        let threshold = 50.0 / 17.0;
        let below = sim.noise_free_objectives(threshold - 1e-9).unwrap();
        let above = sim.noise_free_objectives(threshold + 1e-9).unwrap();
        let jump = below[2] - above[2];
        assert!((jump - 200.0).abs() < 1e-3);
    }

    #[test]
    fn seeded_runs_reproduce() {
        let config = GroundTruthConfig {
            seed: 42,
            ..GroundTruthConfig::default()
        };
        let xs = [2.0, 3.0, 4.0, 2.5, 3.5];
        let mut a = VpsSimulator::new(config.clone()).unwrap();
        let mut b = VpsSimulator::new(config).unwrap();
        for &x in &xs {
            assert_eq!(a.run_batch(x).unwrap(), b.run_batch(x).unwrap());
        }
    }

    #[test]
    fn adaption_applies_and_respects_bounds() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        let cmd = AdaptionCommand {
            parameter: "x".into(),
            value: 3.2,
            cycle: 0,
            pipeline_id: "p".into(),
        };
        sim.apply_adaption(&cmd).unwrap();
        let b = sim.run_current_batch().unwrap();
        assert_eq!(b.x_used, 3.2);
        // boundary inclusive
        let hi = AdaptionCommand {
            value: 10.0,
            ..cmd.clone()
        };
        sim.apply_adaption(&hi).unwrap();
        assert_eq!(sim.current_x(), 10.0);
        assert_eq!(sim.violation_count(), 0);
        // just past the boundary is rejected and counted
        let over = AdaptionCommand { value: 10.1, ..cmd };
        assert!(sim.apply_adaption(&over).is_err());
        assert_eq!(sim.current_x(), 10.0);
        assert_eq!(sim.violation_count(), 1);
    }

    #[test]
    fn drift_changes_future_batches() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        sim.inject_drift(10, DriftField::UnpoppedRate, 0.30)
            .unwrap();
        for _ in 0..9 {
            let b = sim.run_batch(5.0).unwrap();
            assert!((b.popped - 85.0).abs() < 1e-12);
        }
        // cycle 10 onward uses the new rate: popped drops by factor 0.70/0.85
        let b = sim.run_batch(5.0).unwrap();
        assert_eq!(b.cycle, 10);
        assert!((b.popped - 70.0).abs() < 1e-12);
    }

    #[test]
    fn drift_errors() {
        let mut sim = VpsSimulator::new(noise_free_config()).unwrap();
        sim.run_batch(5.0).unwrap();
        assert!(matches!(
            sim.inject_drift(1, DriftField::FeedRate, 25.0),
            Err(SimError::DriftInPast { .. })
        ));
        assert!(matches!(
            "color".parse::<DriftField>(),
            Err(SimError::UnknownDriftField(_))
        ));
    }
}
