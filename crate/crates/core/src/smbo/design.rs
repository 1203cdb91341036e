//! Initial design generation: equidistant spacing and Latin hypercube
//! sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::SmboError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Equidistant,
    LatinHypercube,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n_initial: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Generate the initial design over the given box bounds.
///
/// Equidistant (one-dimensional only): `x_i = lo + i*(hi-lo)/(n-1)`.
/// Latin hypercube: one point per equal-probability stratum per dimension,
/// strata randomly permuted under the spec's seed.
pub fn generate_design<F: Real>(
    spec: &DesignSpec,
    bounds: &[(F, F)],
) -> Result<Vec<Vec<F>>, SmboError> {
    let n = spec.n_initial;
    if n < 2 {
        return Err(SmboError::InvalidDesign(format!(
            "n_initial must be at least 2, got {n}"
        )));
    }
    let d = bounds.len();
    match spec.kind {
        DesignKind::Equidistant => {
            if d != 1 {
                return Err(SmboError::InvalidDesign(
                    "equidistant design is only valid in one dimension".into(),
                ));
            }
            let (lo, hi) = bounds[0];
            Ok((0..n)
                .map(|i| vec![lo + (hi - lo) * F::of(i as f64) / F::of((n - 1) as f64)])
                .collect())
        }
        DesignKind::LatinHypercube => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            let mut columns: Vec<Vec<F>> = Vec::with_capacity(d);
            for &(lo, hi) in bounds {
                let mut strata: Vec<usize> = (0..n).collect();
                strata.shuffle(&mut rng);
                let column = strata
                    .into_iter()
                    .map(|s| {
                        let u: f64 = rng.gen();
                        lo + (hi - lo) * F::of((s as f64 + u) / n as f64)
                    })
                    .collect();
                columns.push(column);
            }
            Ok((0..n)
                .map(|i| (0..d).map(|k| columns[k][i]).collect())
                .collect())
        }
    }
}
