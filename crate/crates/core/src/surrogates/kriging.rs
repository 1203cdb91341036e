//! Ordinary Kriging with a Gaussian (squared-exponential) correlation
//! kernel and a constant trend.
//!
//! The correlation decay `theta` is chosen by maximizing the concentrated
//! log-likelihood over a log-spaced grid, followed by pattern-search
//! refinement in log space. The nugget is raised in decades from
//! `nugget_min` until the correlation matrix factorizes.

use serde::{Deserialize, Serialize};

use super::linalg::{cho_solve, cholesky, dot, log_det_from_chol};
use super::{Dataset, Prediction, SurrogateError};
use crate::scalar::Real;

/// Hyperparameter-search configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingConfig {
    /// Log10 range of the theta grid.
    pub theta_log10_lo: f64,
    pub theta_log10_hi: f64,
    /// Number of log-spaced grid candidates.
    pub theta_grid: usize,
    /// Pattern-search refinement steps after the grid.
    pub refine_steps: usize,
    /// Smallest nugget tried; escalated in decades up to `nugget_max`.
    pub nugget_min: f64,
    pub nugget_max: f64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        KrigingConfig {
            theta_log10_lo: -3.0,
            theta_log10_hi: 3.0,
            theta_grid: 25,
            refine_steps: 20,
            nugget_min: 1e-10,
            nugget_max: 1e-2,
        }
    }
}

/// A fitted ordinary-Kriging model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct KrigingModel<F: Real> {
    pub theta: Vec<F>,
    pub nugget: F,
    pub mu: F,
    pub sigma2: F,
    /// Concentrated log-likelihood at the selected theta.
    pub log_likelihood: F,
    chol: Vec<Vec<F>>,
    /// `R^{-1} (y - mu)`.
    alpha: Vec<F>,
    /// `R^{-1} 1`.
    r_inv_ones: Vec<F>,
    one_r_one: F,
    pub data: Dataset<F>,
}

struct LikelihoodEval<F: Real> {
    ll: F,
    nugget: F,
    mu: F,
    sigma2: F,
    chol: Vec<Vec<F>>,
}

fn correlation<F: Real>(a: &[F], b: &[F], theta: &[F]) -> F {
    let mut s = F::zero();
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s = s + theta[k] * d * d;
    }
    (-s).exp()
}

fn build_corr_matrix<F: Real>(x: &[Vec<F>], theta: &[F], nugget: F) -> Vec<Vec<F>> {
    let n = x.len();
    let mut r = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        r[i][i] = F::one() + nugget;
        for j in 0..i {
            let c = correlation(&x[i], &x[j], theta);
            r[i][j] = c;
            r[j][i] = c;
        }
    }
    r
}

/// Concentrated log-likelihood of a theta candidate, escalating the nugget
/// until the factorization succeeds.
fn evaluate_theta<F: Real>(
    data: &Dataset<F>,
    theta: &[F],
    cfg: &KrigingConfig,
) -> Option<LikelihoodEval<F>> {
    let n = data.len();
    let mut nugget = cfg.nugget_min;
    while nugget <= cfg.nugget_max * (1.0 + 1e-9) {
        let r = build_corr_matrix(&data.x, theta, F::of(nugget));
        if let Some(chol) = cholesky(&r) {
            let ones = vec![F::one(); n];
            let r_inv_ones = cho_solve(&chol, &ones);
            let one_r_one = dot(&ones, &r_inv_ones);
            let r_inv_y = cho_solve(&chol, &data.y);
            let mu = dot(&ones, &r_inv_y) / one_r_one;
            let resid: Vec<F> = data.y.iter().map(|&v| v - mu).collect();
            let r_inv_resid = cho_solve(&chol, &resid);
            let sigma2 = dot(&resid, &r_inv_resid) / F::of(n as f64);
            let sigma2_safe = sigma2.max(F::of(1e-300));
            let ll = -(F::of(n as f64) * sigma2_safe.ln() + log_det_from_chol(&chol)) * F::of(0.5);
            return Some(LikelihoodEval {
                ll,
                nugget: F::of(nugget),
                mu,
                sigma2: sigma2.max(F::zero()),
                chol,
            });
        }
        nugget *= 10.0;
    }
    None
}

/// Fit an ordinary-Kriging model on normalized data.
pub fn kriging_fit<F: Real>(
    data: &Dataset<F>,
    cfg: &KrigingConfig,
) -> Result<KrigingModel<F>, SurrogateError> {
    let n = data.len();
    if n < 2 {
        return Err(SurrogateError::TooFewPoints { need: 2, got: n });
    }
    if data.all_inputs_identical() {
        return Err(SurrogateError::SingularDesign);
    }
    let d = data.dim();

    // isotropic grid sweep in log10 space
    let mut best_log10: Option<(Vec<f64>, LikelihoodEval<F>)> = None;
    let span = cfg.theta_log10_hi - cfg.theta_log10_lo;
    for i in 0..cfg.theta_grid {
        let l = cfg.theta_log10_lo + span * i as f64 / (cfg.theta_grid.max(2) - 1) as f64;
        let theta: Vec<F> = vec![F::of(10f64.powf(l)); d];
        if let Some(eval) = evaluate_theta(data, &theta, cfg) {
            if best_log10.as_ref().is_none_or(|(_, b)| eval.ll > b.ll) {
                best_log10 = Some((vec![l; d], eval));
            }
        }
    }
    let (mut log10_theta, mut best) = best_log10.ok_or(SurrogateError::IllConditioned)?;

    // pattern-search refinement per dimension, improvements only
    let grid_step = span / (cfg.theta_grid.max(2) - 1) as f64;
    let mut step = grid_step;
    for _ in 0..cfg.refine_steps {
        let mut improved = false;
        for k in 0..d {
            for sign in [-1.0, 1.0] {
                let mut cand = log10_theta.clone();
                cand[k] = (cand[k] + sign * step).clamp(cfg.theta_log10_lo, cfg.theta_log10_hi);
                let theta: Vec<F> = cand.iter().map(|&l| F::of(10f64.powf(l))).collect();
                if let Some(eval) = evaluate_theta(data, &theta, cfg) {
                    if eval.ll > best.ll {
                        best = eval;
                        log10_theta = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let theta: Vec<F> = log10_theta.iter().map(|&l| F::of(10f64.powf(l))).collect();
    let ones = vec![F::one(); n];
    let r_inv_ones = cho_solve(&best.chol, &ones);
    let one_r_one = dot(&ones, &r_inv_ones);
    let resid: Vec<F> = data.y.iter().map(|&v| v - best.mu).collect();
    let alpha = cho_solve(&best.chol, &resid);
    Ok(KrigingModel {
        theta,
        nugget: best.nugget,
        mu: best.mu,
        sigma2: best.sigma2,
        log_likelihood: best.ll,
        chol: best.chol,
        alpha,
        r_inv_ones,
        one_r_one,
        data: data.clone(),
    })
}

impl<F: Real> KrigingModel<F> {
    /// Ordinary-Kriging predictor: mean and predictive standard deviation.
    pub fn predict(&self, x: &[F]) -> Prediction<F> {
        let r: Vec<F> = self
            .data
            .x
            .iter()
            .map(|xi| correlation(x, xi, &self.theta))
            .collect();
        let mean = self.mu + dot(&r, &self.alpha);
        let r_inv_r = cho_solve(&self.chol, &r);
        let one_r_inv_r = dot(&self.r_inv_ones, &r);
        let gap = F::one() - one_r_inv_r;
        let var = self.sigma2 * (F::one() - dot(&r, &r_inv_r) + gap * gap / self.one_r_one);
        Prediction {
            mean,
            sd: var.max(F::zero()).sqrt(),
        }
    }

    /// Concentrated log-likelihood of an arbitrary theta on this model's
    /// training data. Exposed so tests can compare grid candidates.
    pub fn likelihood_of(&self, theta: &[F], cfg: &KrigingConfig) -> Option<F> {
        evaluate_theta(&self.data, theta, cfg).map(|e| e.ll)
    }
}
