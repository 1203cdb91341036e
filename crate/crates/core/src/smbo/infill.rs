//! Infill search: the criterion (predicted mean or expected improvement)
//! and the multi-start pattern search that minimizes it over the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{norm_cdf, norm_pdf, Real};
use crate::surrogates::FittedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfillCriterion {
    PredictedMean,
    ExpectedImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfillSpec {
    pub criterion: InfillCriterion,
    pub n_starts: usize,
    pub max_iter: usize,
    /// Initial step as a fraction of the range per dimension.
    pub initial_step: f64,
    /// Step shrink factor in (0, 1).
    pub shrink: f64,
    /// Stop once the step falls below this fraction of the range.
    pub tolerance: f64,
}

impl Default for InfillSpec {
    fn default() -> Self {
        InfillSpec {
            criterion: InfillCriterion::PredictedMean,
            n_starts: 10,
            max_iter: 100,
            initial_step: 0.1,
            shrink: 0.5,
            tolerance: 1e-4,
        }
    }
}

/// Expected improvement of a Gaussian prediction over the incumbent:
/// `EI = (best - mean) * Phi(z) + sd * phi(z)` with `z = (best - mean)/sd`,
/// degenerating to `max(best - mean, 0)` at `sd = 0`.
pub fn expected_improvement<F: Real>(mean: F, sd: F, best_y: F) -> F {
    debug_assert!(sd >= F::zero());
    let diff = best_y - mean;
    if sd <= F::zero() {
        return diff.max(F::zero());
    }
    let z = diff / sd;
    diff * norm_cdf(z) + sd * norm_pdf(z)
}

fn criterion_value<F: Real>(
    model: &FittedModel<F>,
    criterion: InfillCriterion,
    x: &[F],
    best_y: F,
) -> F {
    let p = model.predict(x);
    match criterion {
        InfillCriterion::PredictedMean => p.mean,
        InfillCriterion::ExpectedImprovement => -expected_improvement(p.mean, p.sd, best_y),
    }
}

fn clip<F: Real>(x: &mut [F], bounds: &[(F, F)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = (*v).max(lo).min(hi);
    }
}

/// Multi-start pattern search over the model. Starts are stratified uniform
/// draws under `seed`; each descends the criterion, shrinking the step until
/// it falls below the tolerance or the iteration cap is hit. Returns the
/// best point found (always in bounds) and the model's predicted objective
/// there.
pub fn optimize_infill<F: Real>(
    model: &FittedModel<F>,
    spec: &InfillSpec,
    bounds: &[(F, F)],
    best_y: F,
    seed: u64,
) -> (Vec<F>, F) {
    let d = bounds.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_starts = spec.n_starts.max(1);
    let mut best_x: Option<Vec<F>> = None;
    let mut best_val = F::infinity();

    for s in 0..n_starts {
        // stratified along the first dimension, uniform in the rest
        let mut x: Vec<F> = bounds
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| {
                let u: f64 = rng.gen();
                let frac = if k == 0 {
                    (s as f64 + u) / n_starts as f64
                } else {
                    u
                };
                lo + (hi - lo) * F::of(frac)
            })
            .collect();
        clip(&mut x, bounds);
        let mut val = criterion_value(model, spec.criterion, &x, best_y);
        let mut steps: Vec<F> = bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) * F::of(spec.initial_step))
            .collect();
        let tols: Vec<F> = bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) * F::of(spec.tolerance))
            .collect();

        for _ in 0..spec.max_iter {
            let mut improved = false;
            for k in 0..d {
                for sign in [F::one(), -F::one()] {
                    let mut cand = x.clone();
                    cand[k] = cand[k] + sign * steps[k];
                    clip(&mut cand, bounds);
                    let cv = criterion_value(model, spec.criterion, &cand, best_y);
                    if cv < val {
                        x = cand;
                        val = cv;
                        improved = true;
                    }
                }
            }
            if !improved {
                for step in &mut steps {
                    *step = *step * F::of(spec.shrink);
                }
                if steps.iter().zip(&tols).all(|(s, t)| *s < *t) {
                    break;
                }
            }
        }

        if val < best_val || best_x.is_none() {
            best_val = val;
            best_x = Some(x);
        }
    }

    let x = best_x.expect("at least one start");
    let predicted = model.predict(&x).mean;
    (x, predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogates::{kriging::kriging_fit, Dataset, KrigingConfig};

    #[test]
    fn ei_deterministic_limit() {
        let ei = expected_improvement(0.3_f64, 0.0, 0.5);
        assert!((ei - 0.2).abs() < 1e-12);
        assert_eq!(expected_improvement(0.9_f64, 0.0, 0.5), 0.0);
    }

    #[test]
    fn ei_symmetric_case_closed_form() {
        // mean = best, sd = 1 -> EI = phi(0)
        let ei = expected_improvement(1.0_f64, 1.0, 1.0);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn ei_nonnegative_on_random_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..500 {
            let mean: f64 = rng.gen_range(-10.0..10.0);
            let sd: f64 = rng.gen_range(0.0..5.0);
            let best: f64 = rng.gen_range(-10.0..10.0);
            assert!(expected_improvement(mean, sd, best) >= 0.0);
        }
    }

    fn quadratic_model() -> FittedModel<f64> {
        let mut d = Dataset::new(1);
        for i in 0..9 {
            let x = i as f64 / 8.0;
            d.push(vec![x], (x - 0.3) * (x - 0.3));
        }
        FittedModel::Kriging(kriging_fit(&d, &KrigingConfig::default()).unwrap())
    }

    #[test]
    fn finds_the_model_minimum() {
        let model = quadratic_model();
        let spec = InfillSpec::default();
        let (x, _) = optimize_infill(&model, &spec, &[(0.0, 1.0)], 0.0, 7);
        // compare against a dense grid argmin of the same fitted model
        let mut grid_best = (0.0, f64::INFINITY);
        for i in 0..10_001 {
            let g = i as f64 / 10_000.0;
            let v = model.predict(&[g]).mean;
            if v < grid_best.1 {
                grid_best = (g, v);
            }
        }
        assert!(
            (x[0] - grid_best.0).abs() < 0.02,
            "x={} grid={}",
            x[0],
            grid_best.0
        );
        assert!((x[0] - 0.3).abs() < 0.02);
    }

    #[test]
    fn predicted_value_matches_model_at_returned_point() {
        let model = quadratic_model();
        let (x, v) = optimize_infill(&model, &InfillSpec::default(), &[(0.0, 1.0)], 0.0, 3);
        assert_eq!(v, model.predict(&x).mean);
    }

    #[test]
    fn stays_in_bounds() {
        let model = quadratic_model();
        for seed in 0..20 {
            let (x, _) = optimize_infill(&model, &InfillSpec::default(), &[(0.2, 0.8)], 0.0, seed);
            assert!(x[0] >= 0.2 && x[0] <= 0.8);
        }
    }

    #[test]
    fn flat_model_returns_some_in_bounds_point() {
        let mut d = Dataset::new(1);
        for i in 0..5 {
            d.push(vec![i as f64 / 4.0], 2.0);
        }
        let model = FittedModel::Kriging(kriging_fit(&d, &KrigingConfig::default()).unwrap());
        let (x, v) = optimize_infill(&model, &InfillSpec::default(), &[(0.0, 1.0)], 2.0, 1);
        assert!(x[0] >= 0.0 && x[0] <= 1.0);
        assert!((v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ei_criterion_prefers_uncertain_regions_over_known_minimum() {
        let model = quadratic_model();
        let spec = InfillSpec {
            criterion: InfillCriterion::ExpectedImprovement,
            ..InfillSpec::default()
        };
        let (x, _) = optimize_infill(&model, &spec, &[(0.0, 1.0)], 0.0, 11);
        assert!(x[0] >= 0.0 && x[0] <= 1.0);
    }
}
