//! Time regularity of the empirical measure: log-log fit of `E[W1(S_t, S_s)^p]` against
//! the lag `|t - s|`.

use super::transport::{wasserstein1, TransportError};
use crate::particles::EmpiricalMeasure;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolderError {
    #[error("need at least 2 replicas, got {0}")]
    Replicas(usize),
    #[error("need at least 2 distinct usable lags, got {0}")]
    Lags(usize),
    #[error("replicas have different snapshot counts")]
    Ragged,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HolderOutcome {
    Fit { slope: f64, intercept: f64 },
    /// Every averaged distance is zero; no exponent can be fitted.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    pub outcome: HolderOutcome,
    /// `(lag, mean W1^p)` per lag.
    pub points: Vec<(f64, f64)>,
}

/// `replicas[r][k]` is the empirical measure of replica `r` at `times[k]`; `lags` are in
/// snapshot-index units. Every pair `(k, k + lag)` is averaged over all replicas.
pub fn holder_w1_fit(
    replicas: &[Vec<EmpiricalMeasure>],
    times: &[f64],
    p: f64,
    lags: &[usize],
) -> Result<HolderFit, HolderError> {
    if replicas.len() < 2 {
        return Err(HolderError::Replicas(replicas.len()));
    }
    if replicas.iter().any(|r| r.len() != times.len()) {
        return Err(HolderError::Ragged);
    }
    let mut usable: Vec<usize> = lags.iter().copied().filter(|&l| l > 0 && l < times.len()).collect();
    usable.sort_unstable();
    usable.dedup();
    if usable.len() < 2 {
        return Err(HolderError::Lags(usable.len()));
    }
    let mut points = Vec::with_capacity(usable.len());
    for &lag in &usable {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut tau = 0.0;
        for rep in replicas {
            for k in 0..times.len() - lag {
                sum += wasserstein1(&rep[k], &rep[k + lag])?.value.powf(p);
                tau += times[k + lag] - times[k];
                count += 1;
            }
        }
        points.push((tau / count as f64, sum / count as f64));
    }
    if points.iter().all(|(_, m)| *m <= 0.0) {
        return Ok(HolderFit { outcome: HolderOutcome::Degenerate, points });
    }
    let logs: Vec<(f64, f64)> = points.iter().filter(|(_, m)| *m > 0.0).map(|(l, m)| (l.ln(), m.ln())).collect();
    if logs.len() < 2 {
        return Ok(HolderFit { outcome: HolderOutcome::Degenerate, points });
    }
    let (slope, intercept) = least_squares(&logs);
    Ok(HolderFit { outcome: HolderOutcome::Fit { slope, intercept }, points })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frozen(n: usize) -> Vec<EmpiricalMeasure> {
        let m = EmpiricalMeasure::uniform((0..n).map(|i| [i as f64 / n as f64, 0.3]).collect(), vec![[0.0; 2]; n]);
        vec![m; 5]
    }

    #[test]
    fn frozen_dynamics_is_degenerate() {
        let reps = vec![frozen(4), frozen(4)];
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.1).collect();
        let fit = holder_w1_fit(&reps, &times, 1.0, &[1, 2, 3]).unwrap();
        assert_eq!(fit.outcome, HolderOutcome::Degenerate);
    }

    #[test]
    fn requires_replicas_and_lags() {
        let times = [0.0, 0.1, 0.2, 0.3, 0.4];
        assert_eq!(holder_w1_fit(&[frozen(3)], &times, 1.0, &[1, 2]), Err(HolderError::Replicas(1)));
        assert_eq!(holder_w1_fit(&[frozen(3), frozen(3)], &times, 1.0, &[1, 9]), Err(HolderError::Lags(1)));
    }

    #[test]
    fn single_translating_atom_has_unit_slope() {
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.02).collect();
        let rep: Vec<EmpiricalMeasure> =
            times.iter().map(|t| EmpiricalMeasure::uniform(vec![[0.1 + 0.5 * t, 0.2]], vec![[0.5, 0.0]])).collect();
        let fit = holder_w1_fit(&[rep.clone(), rep], &times, 1.0, &[1, 2, 3, 4]).unwrap();
        match fit.outcome {
            HolderOutcome::Fit { slope, intercept } => {
                assert!((slope - 1.0).abs() < 1e-9);
                assert!((intercept - 0.5f64.ln()).abs() < 1e-9);
            }
            HolderOutcome::Degenerate => panic!("unexpected degenerate fit"),
        }
    }
}
