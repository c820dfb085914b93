use serde::{Deserialize, Serialize};

use super::{bin_index, MetricsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub yes: usize,
    pub no: usize,
}

/// Forecast distribution split by resolved outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub bins: Vec<HistogramBin>,
    pub n_yes: usize,
    pub n_no: usize,
    /// Absent when no question resolved yes.
    pub mean_forecast_yes: Option<f64>,
    /// Absent when no question resolved no.
    pub mean_forecast_no: Option<f64>,
    pub mean_forecast: f64,
    pub base_rate: f64,
}

pub fn distribution_summary(
    forecasts: &[f64],
    outcomes: &[bool],
    bins: usize,
) -> Result<DistributionSummary, MetricsError> {
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
    if bins < 1 {
        return Err(MetricsError::BadBinCount(bins));
    }
    let mut hist: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            yes: 0,
            no: 0,
        })
        .collect();
    let (mut sum_yes, mut sum_no) = (0.0, 0.0);
    let (mut n_yes, mut n_no) = (0usize, 0usize);
    for (&p, &o) in forecasts.iter().zip(outcomes) {
        if !(0.0..=1.0).contains(&p) {
            return Err(MetricsError::OutOfRange(p.to_string()));
        }
        let b = if bins == 1 { 0 } else { bin_index(p, bins) };
        if o {
            hist[b].yes += 1;
            sum_yes += p;
            n_yes += 1;
        } else {
            hist[b].no += 1;
            sum_no += p;
            n_no += 1;
        }
    }
    let n = forecasts.len() as f64;
    Ok(DistributionSummary {
        bins: hist,
        n_yes,
        n_no,
        mean_forecast_yes: (n_yes > 0).then(|| sum_yes / n_yes as f64),
        mean_forecast_no: (n_no > 0).then(|| sum_no / n_no as f64),
        mean_forecast: (sum_yes + sum_no) / n,
        base_rate: n_yes as f64 / n,
    })
}
