use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::MetricsError;

const QUANTILE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub posterior_mean: f64,
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta function.
pub fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Equal-tailed credible interval for a binomial proportion under a uniform
/// Beta(1, 1) prior: the posterior is Beta(s + 1, n - s + 1).
pub fn beta_interval(successes: u64, trials: u64, mass: f64) -> Result<CredibleInterval, MetricsError> {
    if trials == 0 || successes > trials {
        return Err(MetricsError::Domain(format!(
            "need 0 <= s <= n and n >= 1, got s={successes}, n={trials}"
        )));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(MetricsError::Domain(format!("mass {mass} outside (0, 1)")));
    }
    let a = successes as f64 + 1.0;
    let b = (trials - successes) as f64 + 1.0;
    let tail = (1.0 - mass) / 2.0;
    Ok(CredibleInterval {
        lo: beta_quantile(a, b, tail),
        hi: beta_quantile(a, b, 1.0 - tail),
        mass,
        posterior_mean: a / (a + b),
    })
}
