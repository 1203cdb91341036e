//! Random-forest regression from scratch: bootstrap-resampled regression
//! trees with variance-reduction splits over midpoints of sorted unique
//! values. Deterministic given (data, hyperparameters, seed).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Prediction, SurrogateError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Recursion stops once a node holds this many samples or fewer.
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub enum Node<F> {
    Leaf {
        value: F,
    },
    Split {
        feature: usize,
        threshold: F,
        left: Box<Node<F>>,
        right: Box<Node<F>>,
    },
}

impl<F: Real> Node<F> {
    fn predict(&self, x: &[F]) -> F {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ForestModel<F: Real> {
    pub trees: Vec<Node<F>>,
    pub config: ForestConfig,
    /// Target range of the training data; every leaf mean lies inside it.
    pub y_range: (F, F),
}

fn mean<F: Real>(ys: &[F]) -> F {
    ys.iter().copied().sum::<F>() / F::of(ys.len() as f64)
}

struct Split<F> {
    feature: usize,
    threshold: F,
    score: F,
}

/// Best variance-reduction split over all features, or `None` when every
/// feature is constant on the sample.
fn best_split<F: Real>(xs: &[&[F]], ys: &[F], dim: usize) -> Option<Split<F>> {
    let n = ys.len();
    let total: F = ys.iter().copied().sum();
    let mut best: Option<Split<F>> = None;
    #[allow(clippy::needless_range_loop)] // `feature` indexes columns, not `xs` rows
    for feature in 0..dim {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            xs[a][feature]
                .partial_cmp(&xs[b][feature])
                .expect("finite inputs")
        });
        let mut left_sum = F::zero();
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            let i = order[w];
            left_sum = left_sum + ys[i];
            left_n += 1;
            let here = xs[i][feature];
            let next = xs[order[w + 1]][feature];
            if here == next {
                continue;
            }
            let right_sum = total - left_sum;
            let right_n = n - left_n;
            // maximizing sum_l^2/n_l + sum_r^2/n_r maximizes SSE reduction
            let score = left_sum * left_sum / F::of(left_n as f64)
                + right_sum * right_sum / F::of(right_n as f64);
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Split {
                    feature,
                    threshold: (here + next) / F::of(2.0),
                    score,
                });
            }
        }
    }
    best
}

fn grow<F: Real>(xs: &[&[F]], ys: &[F], dim: usize, min_leaf: usize) -> Node<F> {
    let n = ys.len();
    let m = mean(ys);
    let zero_var = ys.iter().all(|&y| y == ys[0]);
    if n <= min_leaf || zero_var {
        return Node::Leaf { value: m };
    }
    let Some(split) = best_split(xs, ys, dim) else {
        return Node::Leaf { value: m };
    };
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut rx = Vec::new();
    let mut ry = Vec::new();
    for i in 0..n {
        if xs[i][split.feature] <= split.threshold {
            lx.push(xs[i]);
            ly.push(ys[i]);
        } else {
            rx.push(xs[i]);
            ry.push(ys[i]);
        }
    }
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(&lx, &ly, dim, min_leaf)),
        right: Box::new(grow(&rx, &ry, dim, min_leaf)),
    }
}

/// Fit a random forest: each tree is grown on a seeded bootstrap resample.
pub fn rf_fit<F: Real>(
    data: &Dataset<F>,
    cfg: &ForestConfig,
) -> Result<ForestModel<F>, SurrogateError> {
    let n = data.len();
    if n < 2 {
        return Err(SurrogateError::TooFewPoints { need: 2, got: n });
    }
    let dim = data.dim();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut rng = ChaCha12Rng::seed_from_u64(
            cfg.seed
                .wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let mut xs: Vec<&[F]> = Vec::with_capacity(n);
        let mut ys: Vec<F> = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            xs.push(&data.x[i]);
            ys.push(data.y[i]);
        }
        trees.push(grow(&xs, &ys, dim, cfg.min_leaf));
    }
    let y_lo = data.y.iter().copied().fold(F::infinity(), F::min);
    let y_hi = data.y.iter().copied().fold(F::neg_infinity(), F::max);
    Ok(ForestModel {
        trees,
        config: cfg.clone(),
        y_range: (y_lo, y_hi),
    })
}

impl<F: Real> ForestModel<F> {
    /// Mean of per-tree predictions; spread is the per-tree standard
    /// deviation, used as the uncertainty proxy.
    pub fn predict(&self, x: &[F]) -> Prediction<F> {
        let preds: Vec<F> = self.trees.iter().map(|t| t.predict(x)).collect();
        let m = mean(&preds);
        let var = preds.iter().map(|&p| (p - m) * (p - m)).sum::<F>() / F::of(preds.len() as f64);
        Prediction {
            mean: m,
            sd: var.max(F::zero()).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn step_dataset(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut d = Dataset::new(1);
        for _ in 0..n {
            let x: f64 = rng.gen();
            d.push(vec![x], if x > 0.5 { 1.0 } else { 0.0 });
        }
        d
    }

    /// Test-only oracle: one greedy tree grown to purity on the full data.
    fn reference_tree(d: &Dataset<f64>) -> Node<f64> {
        let xs: Vec<&[f64]> = d.x.iter().map(Vec::as_slice).collect();
        grow(&xs, &d.y, 1, 1)
    }

    #[test]
    fn constant_targets_predict_the_constant() {
        let mut d = Dataset::new(1);
        for i in 0..10 {
            d.push(vec![i as f64 / 9.0], 7.0);
        }
        let m = rf_fit(&d, &ForestConfig::default()).unwrap();
        for &x in &[0.0, 0.3, 0.99] {
            assert_eq!(m.predict(&[x]).mean, 7.0);
        }
    }

    #[test]
    fn same_seed_gives_identical_forest() {
        let d = step_dataset(40, 3);
        let cfg = ForestConfig {
            n_trees: 25,
            ..ForestConfig::default()
        };
        let a = rf_fit(&d, &cfg).unwrap();
        let b = rf_fit(&d, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_function_is_recovered() {
        let d = step_dataset(100, 7);
        let m = rf_fit(&d, &ForestConfig::default()).unwrap();
        let low = m.predict(&[0.25]).mean;
        let high = m.predict(&[0.75]).mean;
        assert!((0.0..=0.2).contains(&low), "low side {low}");
        assert!((0.8..=1.0).contains(&high), "high side {high}");
        // the reference single-tree fit agrees away from the step
        let tree = reference_tree(&d);
        assert!((tree.predict(&[0.25]) - 0.0).abs() < 1e-12);
        assert!((tree.predict(&[0.75]) - 1.0).abs() < 1e-12);
        // transition region sits between the plateaus
        let mid = m.predict(&[0.5]).mean;
        assert!(mid > 0.2 && mid < 0.8, "transition {mid}");
    }

    #[test]
    fn single_tree_has_zero_spread() {
        let d = step_dataset(30, 1);
        let cfg = ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        };
        let m = rf_fit(&d, &cfg).unwrap();
        assert_eq!(m.predict(&[0.4]).sd, 0.0);
    }

    #[test]
    fn predictions_bounded_by_target_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut d = Dataset::new(1);
        for _ in 0..60 {
            let x: f64 = rng.gen();
            d.push(vec![x], (x * 13.0).sin() * 3.0 - 1.0);
        }
        let m = rf_fit(&d, &ForestConfig::default()).unwrap();
        for i in 0..200 {
            let p = m.predict(&[i as f64 / 199.0]).mean;
            assert!(p >= m.y_range.0 - 1e-12 && p <= m.y_range.1 + 1e-12);
        }
    }

    #[test]
    fn two_points_yield_stumps() {
        let mut d = Dataset::new(1);
        d.push(vec![0.0], 0.0);
        d.push(vec![1.0], 1.0);
        let m = rf_fit(&d, &ForestConfig::default()).unwrap();
        let p = m.predict(&[0.5]).mean;
        assert!((0.0..=1.0).contains(&p));
    }
}
