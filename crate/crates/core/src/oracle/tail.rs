//! Empirical decay rate of the stationary max-age tail.

use crate::analysis::{default_burn_in, TailHistogram};
use crate::channels::bec_source;
use crate::engine::{run_streaming, Occupancy, SystemParams};
use crate::error::{AoiError, Result};
use crate::mobility::static_source;
use crate::policies::{PolicyKind, PolicyParams};
use crate::stats::weighted_least_squares;

/// Points with fewer tail samples than this are left out of the fit.
pub const MIN_TAIL_COUNT: u64 = 200;
/// Fits start this many mean inter-success gaps into the tail.
pub const GAP_MULTIPLE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    /// Slope of `ln P(max age >= k)` against `k`, weighted by tail counts.
    pub slope: f64,
    pub std_error: f64,
    pub k_lo: u64,
    pub k_hi: u64,
    /// Mean number of slots between successes, system-wide.
    pub mean_gap: f64,
    /// `(k, P(max age >= k))` over the fitted range.
    pub points: Vec<(u64, f64)>,
    pub histogram: TailHistogram,
}

/// Simulates `policy` on static single-cell users with erasure channels for
/// `horizon` slots and fits the log tail of the per-slot maximum age.
///
/// Without an explicit `k_range` the fit runs from five mean inter-success
/// gaps up to the last `k` with at least [`MIN_TAIL_COUNT`] samples.
pub fn ld_tail_oracle(
    p: &[f64],
    policy: PolicyKind,
    horizon: u64,
    k_range: Option<(u64, u64)>,
    seed: u64,
) -> Result<TailFit> {
    let n = p.len();
    let params = SystemParams::new(n, 1, p.to_vec(), horizon, seed)?;
    let mut pol = PolicyParams {
        kind: policy,
        success_probs: p.to_vec(),
        seed,
    }
    .build(n)?;
    let mut channels = bec_source(p, seed)?;
    let mut mobility = static_source(Occupancy::single_cell(n));

    let burn_in = default_burn_in(horizon);
    let mut hist = TailHistogram::new();
    let mut successes = 0u64;
    run_streaming(&params, pol.as_mut(), &mut channels, &mut mobility, |rec| {
        if rec.t > burn_in {
            hist.push(rec.ages_after.max());
            successes += rec.successes.iter().filter(|&&s| s).count() as u64;
        }
    })?;
    if successes == 0 {
        return Err(AoiError::InsufficientData("no successes after burn-in".into()));
    }
    let mean_gap = hist.total() as f64 / successes as f64;

    let (k_lo, k_hi) = match k_range {
        Some(r) => r,
        None => {
            let lo = (GAP_MULTIPLE * mean_gap).ceil() as u64;
            let hi = (1..=hist.max_observed())
                .rev()
                .find(|&k| hist.tail_count(k) >= MIN_TAIL_COUNT)
                .unwrap_or(0);
            (lo, hi)
        }
    };
    if k_hi < k_lo + 2 {
        return Err(AoiError::InsufficientData(format!(
            "tail range [{k_lo}, {k_hi}] too short for a fit"
        )));
    }
    let mut points = Vec::new();
    for k in k_lo..=k_hi {
        let c = hist.tail_count(k);
        if c == 0 {
            return Err(AoiError::InsufficientData(format!("no samples with max age >= {k}")));
        }
        points.push((k, hist.tail_prob(k)));
    }
    // The log of a tail estimate built from c samples has variance about 1/c.
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ws: Vec<f64> = points.iter().map(|p| hist.tail_count(p.0) as f64).collect();
    let fit = weighted_least_squares(&xs, &ys, &ws)
        .ok_or_else(|| AoiError::InsufficientData("degenerate tail fit".into()))?;
    Ok(TailFit {
        slope: fit.slope,
        std_error: fit.slope_std_error,
        k_lo,
        k_hi,
        mean_gap,
        points,
        histogram: hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_tail_is_geometric() {
        // A lone user's age is geometric from k = 1, so a short range suffices.
        let fit = ld_tail_oracle(&[0.5], PolicyKind::Cma, 1_000_000, Some((1, 10)), 3).unwrap();
        let target = 0.5f64.ln();
        assert!((fit.slope - target).abs() <= 0.05 * target.abs(), "{fit:?}");
        assert!((fit.mean_gap - 2.0).abs() < 0.05);
        assert_eq!(fit.points.len(), 10);
    }

    #[test]
    fn short_runs_report_insufficient_data() {
        assert!(matches!(
            ld_tail_oracle(&[0.99], PolicyKind::Cma, 20_000, None, 1),
            Err(AoiError::InsufficientData(_))
        ));
    }
}
