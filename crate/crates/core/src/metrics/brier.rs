use crate::scalar::Scalar;

use super::MetricsError;

fn check<T: Scalar>(forecasts: &[T], outcomes: &[bool]) -> Result<(), MetricsError> {
    if forecasts.len() != outcomes.len() {
        return Err(MetricsError::MisalignedInputs(format!(
            "{} forecasts vs {} outcomes",
            forecasts.len(),
            outcomes.len()
        )));
    }
    if forecasts.is_empty() {
        return Err(MetricsError::Empty);
    }
    for p in forecasts {
        if !(*p >= T::zero() && *p <= T::one()) {
            return Err(MetricsError::OutOfRange(format!("{p:?}")));
        }
    }
    Ok(())
}

/// Per-question squared errors `(p_i - o_i)^2`.
pub fn brier_terms<T: Scalar>(forecasts: &[T], outcomes: &[bool]) -> Result<Vec<T>, MetricsError> {
    check(forecasts, outcomes)?;
    Ok(forecasts
        .iter()
        .zip(outcomes)
        .map(|(&p, &o)| {
            let d = p - T::indicator(o);
            d * d
        })
        .collect())
}

/// Mean squared error between probability forecasts and binary outcomes.
pub fn brier<T: Scalar>(forecasts: &[T], outcomes: &[bool]) -> Result<T, MetricsError> {
    let terms = brier_terms(forecasts, outcomes)?;
    let sum = terms.into_iter().fold(T::zero(), |acc, t| acc + t);
    Ok(sum / T::from_count(forecasts.len()))
}

/// Equal-width bin for `p` in `[0, 1]`: bin `k` covers `[k/K, (k+1)/K)` and the
/// last bin is closed at 1. Computed by exact comparisons so rationals land on
/// the correct side of every edge.
pub fn bin_index<T: Scalar>(p: T, k: usize) -> usize {
    let scaled = p * T::from_count(k);
    // Largest j in [0, k-1] with j <= p*K.
    let (mut lo, mut hi) = (0usize, k - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if T::from_count(mid) <= scaled {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBin<T> {
    pub index: usize,
    pub lower: T,
    pub upper: T,
    pub count: usize,
    /// Mean forecast in the bin; `None` for empty bins.
    pub mean_forecast: Option<T>,
    /// Observed yes-frequency in the bin; `None` for empty bins.
    pub observed_frequency: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins<T> {
    pub k: usize,
    pub bins: Vec<ReliabilityBin<T>>,
    pub total: usize,
    pub base_rate: T,
}

/// Binned Brier decomposition.
///
/// `brier` is the score of the binned forecasts (each forecast replaced by its
/// bin mean), for which `brier == calibration - refinement + uncertainty`
/// holds as an algebraic identity. `raw_brier` is the ordinary score and
/// `within_bin = raw_brier - brier` is what binning hides; it is zero when
/// every bin holds a single forecast value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrierDecomposition<T> {
    pub brier: T,
    pub calibration: T,
    pub refinement: T,
    pub uncertainty: T,
    pub raw_brier: T,
    pub within_bin: T,
}

impl<T: Scalar> BrierDecomposition<T> {
    /// `brier - (calibration - refinement + uncertainty)`.
    pub fn identity_residual(&self) -> T {
        self.brier - (self.calibration - self.refinement + self.uncertainty)
    }

    pub fn to_f64(&self) -> BrierDecomposition<f64> {
        BrierDecomposition {
            brier: self.brier.to_f64_lossy(),
            calibration: self.calibration.to_f64_lossy(),
            refinement: self.refinement.to_f64_lossy(),
            uncertainty: self.uncertainty.to_f64_lossy(),
            raw_brier: self.raw_brier.to_f64_lossy(),
            within_bin: self.within_bin.to_f64_lossy(),
        }
    }
}

impl<T: Scalar> ReliabilityBins<T> {
    pub fn to_f64(&self) -> ReliabilityBins<f64> {
        ReliabilityBins {
            k: self.k,
            total: self.total,
            base_rate: self.base_rate.to_f64_lossy(),
            bins: self
                .bins
                .iter()
                .map(|b| ReliabilityBin {
                    index: b.index,
                    lower: b.lower.to_f64_lossy(),
                    upper: b.upper.to_f64_lossy(),
                    count: b.count,
                    mean_forecast: b.mean_forecast.map(Scalar::to_f64_lossy),
                    observed_frequency: b.observed_frequency.map(Scalar::to_f64_lossy),
                })
                .collect(),
        }
    }
}

/// Reliability bins and the calibration / refinement / uncertainty terms over
/// `k` equal-width bins.
pub fn decompose<T: Scalar>(
    forecasts: &[T],
    outcomes: &[bool],
    k: usize,
) -> Result<(ReliabilityBins<T>, BrierDecomposition<T>), MetricsError> {
    if k < 2 {
        return Err(MetricsError::BadBinCount(k));
    }
    check(forecasts, outcomes)?;
    let n = forecasts.len();
    let big_n = T::from_count(n);
    let kk = T::from_count(k);

    let mut counts = vec![0usize; k];
    let mut forecast_sums = vec![T::zero(); k];
    let mut yes_counts = vec![0usize; k];
    for (&p, &o) in forecasts.iter().zip(outcomes) {
        let b = bin_index(p, k);
        counts[b] += 1;
        forecast_sums[b] = forecast_sums[b] + p;
        yes_counts[b] += usize::from(o);
    }
    let total_yes: usize = yes_counts.iter().sum();
    let base_rate = T::from_count(total_yes) / big_n;

    let mut bins = Vec::with_capacity(k);
    let mut calibration = T::zero();
    let mut refinement = T::zero();
    let mut means = vec![T::zero(); k];
    for b in 0..k {
        let count = counts[b];
        let (mean_forecast, observed_frequency) = if count == 0 {
            (None, None)
        } else {
            let nk = T::from_count(count);
            let f = forecast_sums[b] / nk;
            let o = T::from_count(yes_counts[b]) / nk;
            means[b] = f;
            calibration = calibration + nk * (f - o) * (f - o);
            refinement = refinement + nk * (o - base_rate) * (o - base_rate);
            (Some(f), Some(o))
        };
        bins.push(ReliabilityBin {
            index: b,
            lower: T::from_count(b) / kk,
            upper: T::from_count(b + 1) / kk,
            count,
            mean_forecast,
            observed_frequency,
        });
    }
    calibration = calibration / big_n;
    refinement = refinement / big_n;
    let uncertainty = base_rate * (T::one() - base_rate);

    let mut binned = T::zero();
    for (&p, &o) in forecasts.iter().zip(outcomes) {
        let d = means[bin_index(p, k)] - T::indicator(o);
        binned = binned + d * d;
    }
    let binned = binned / big_n;
    let raw_brier = brier(forecasts, outcomes)?;

    Ok((
        ReliabilityBins {
            k,
            bins,
            total: n,
            base_rate,
        },
        BrierDecomposition {
            brier: binned,
            calibration,
            refinement,
            uncertainty,
            raw_brier,
            within_bin: raw_brier - binned,
        },
    ))
}
