//! Closed-form bounds and constants.

use crate::engine::validate_probs;
use crate::error::{AoiError, Result};
use crate::mobility::g_uniform;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub value: f64,
    /// Inputs echoed as `key=value` pairs.
    pub inputs: Vec<(String, String)>,
    pub formula: &'static str,
    /// Set when constants or lower-order terms are suppressed.
    pub asymptotic: bool,
}

fn check_probs(p: &[f64]) -> Result<()> {
    validate_probs(p)?;
    if p.is_empty() {
        return Err(AoiError::invalid("need at least one success probability"));
    }
    Ok(())
}

fn inv_sqrt_sum(p: &[f64]) -> f64 {
    p.iter().map(|x| 1.0 / x.sqrt()).sum()
}

/// Lower bound on the optimal average age under stationary mobility with
/// `g` expected nonempty cells: `(sum 1/sqrt(p_i))^2 / (2 N g) + 1/2`.
pub fn avg_converse(p: &[f64], g: f64) -> Result<f64> {
    Ok(avg_converse_leading(p, g)? + 0.5)
}

/// The bound above without its additive `1/2`.
pub fn avg_converse_leading(p: &[f64], g: f64) -> Result<f64> {
    check_probs(p)?;
    let n = p.len() as f64;
    if !(g > 0.0) || g > n * (1.0 + 1e-12) {
        return Err(AoiError::invalid(format!("g must lie in (0, N] (got {g})")));
    }
    let s = inv_sqrt_sum(p);
    Ok(s * s / (2.0 * n * g))
}

/// Average-age guarantee of max-weight scheduling for identical users with
/// i.i.d. uniform mobility: `N / (M p (1 - (1 - 1/M)^N))`.
pub fn mmw_upper_identical(n: usize, m: usize, p: f64) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(AoiError::invalid("N and M must be positive"));
    }
    check_probs(&[p])?;
    Ok(n as f64 / (p * g_uniform(n, m)))
}

/// Optimal long-run peak age for static single-cell users: `sum 1/p_i`.
pub fn peak_optimum(p: &[f64]) -> Result<f64> {
    check_probs(p)?;
    Ok(p.iter().map(|x| 1.0 / x).sum())
}

/// Optimal decay rate of the max-age tail, `-ln(1 - min p_i)`; infinite when
/// every channel is always Good.
pub fn ld_exponent(p: &[f64]) -> Result<f64> {
    check_probs(p)?;
    let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if p_min >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-(1.0 - p_min).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxBounds {
    /// Lower bound on any online policy's average-age competitive ratio: `N/2 + 1/(2N)`.
    pub avg_lb: f64,
    /// Sharper average-age bound known for two users.
    pub improved_avg_lb: Option<f64>,
    /// `N / ln N`: shape of the peak-age lower bound, constant suppressed.
    /// Absent for N < 2.
    pub peak_shape: Option<f64>,
}

impl MinimaxBounds {
    /// The peak form is only an asymptotic shape.
    pub const PEAK_IS_ASYMPTOTIC: bool = true;
}

pub fn minimax_lower_bounds(n: usize) -> Result<MinimaxBounds> {
    if n == 0 {
        return Err(AoiError::invalid("N must be positive"));
    }
    let nf = n as f64;
    Ok(MinimaxBounds {
        avg_lb: nf / 2.0 + 1.0 / (2.0 * nf),
        improved_avg_lb: (n == 2).then_some(1.5),
        peak_shape: (n >= 2).then(|| nf / nf.ln()),
    })
}

/// Renewal quantities of one user under the one-Good-user-per-slot input
/// distribution, with `q = 1/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YaoRenewal {
    pub q: f64,
    /// Expected summed age over one renewal cycle, `1 / (q^2 (1 - q))`.
    pub cycle_cost: f64,
    /// Expected cycle length, `1 / (q (1 - q))`.
    pub cycle_length: f64,
    /// Long-run average age of one user, `cycle_cost / cycle_length = N`.
    pub per_user_rate: f64,
    /// Long-run summed age of the clairvoyant optimum, `N^2`.
    pub opt_total: f64,
}

pub fn yao_renewal_constants(n: usize) -> Result<YaoRenewal> {
    if n < 2 {
        return Err(AoiError::invalid(format!(
            "renewal constants are degenerate for N = {n} (1 - q = 0)"
        )));
    }
    let q = 1.0 / n as f64;
    let cycle_cost = 1.0 / (q * q * (1.0 - q));
    let cycle_length = 1.0 / (q * (1.0 - q));
    let per_user_rate = cycle_cost / cycle_length;
    Ok(YaoRenewal {
        q,
        cycle_cost,
        cycle_length,
        per_user_rate,
        opt_total: n as f64 * per_user_rate,
    })
}

/// Finite-N upper bound on the clairvoyant optimum's expected peak age under
/// the one-Good-user input: `1 + (N/a) ln(N/(1-a))` with `a = 1 - 1/ln N`.
/// Grows like `N ln N`.
pub fn peak_opt_upper_yao(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(AoiError::invalid(format!("needs N >= 3 (got {n})")));
    }
    let nf = n as f64;
    let a = 1.0 - 1.0 / nf.ln();
    Ok(1.0 + (nf / a) * (nf / (1.0 - a)).ln())
}

/// `(M (1 - e^{-N/M}), M (1 - (1 - 1/M)^N), M (1 - e^{-1.387 N/M}))`: the
/// expected number of nonempty cells under uniform occupancy with its
/// exponential sandwich.
pub fn g_uniform_sandwich(n: usize, m: usize) -> (f64, f64, f64) {
    let (nf, mf) = (n as f64, m as f64);
    (
        mf * (1.0 - (-nf / mf).exp()),
        g_uniform(n, m),
        mf * (1.0 - (-1.387 * nf / mf).exp()),
    )
}

fn fmt_probs(p: &[f64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every bound that applies to `(N, M, p)`. `g` defaults to the uniform
/// occupancy value.
pub fn bound_table(n_cells: usize, p: &[f64], g: Option<f64>) -> Result<Vec<BoundReport>> {
    check_probs(p)?;
    let n = p.len();
    if n_cells == 0 {
        return Err(AoiError::invalid("M must be positive"));
    }
    let g = g.unwrap_or_else(|| g_uniform(n, n_cells));
    let probs = fmt_probs(p);
    let base = vec![("N".to_string(), n.to_string()), ("M".to_string(), n_cells.to_string())];
    let with = |extra: &[(&str, String)]| -> Vec<(String, String)> {
        let mut v = base.clone();
        v.extend(extra.iter().map(|(k, x)| (k.to_string(), x.clone())));
        v
    };
    let mut out = vec![
        BoundReport {
            name: "avg_converse",
            value: avg_converse(p, g)?,
            inputs: with(&[("p", probs.clone()), ("g", g.to_string())]),
            formula: "(sum_i 1/sqrt(p_i))^2 / (2 N g) + 1/2",
            asymptotic: false,
        },
        BoundReport {
            name: "peak_optimum",
            value: peak_optimum(p)?,
            inputs: with(&[("p", probs.clone())]),
            formula: "sum_i 1/p_i",
            asymptotic: false,
        },
        BoundReport {
            name: "ld_exponent",
            value: ld_exponent(p)?,
            inputs: with(&[("p", probs.clone())]),
            formula: "-ln(1 - min_i p_i)",
            asymptotic: false,
        },
    ];
    if p.iter().all(|&x| x == p[0]) {
        out.push(BoundReport {
            name: "mmw_upper_identical",
            value: mmw_upper_identical(n, n_cells, p[0])?,
            inputs: with(&[("p", p[0].to_string())]),
            formula: "N / (M p (1 - (1 - 1/M)^N))",
            asymptotic: false,
        });
    }
    let mm = minimax_lower_bounds(n)?;
    out.push(BoundReport {
        name: "minimax_avg_lb",
        value: mm.avg_lb,
        inputs: base.clone(),
        formula: "N/2 + 1/(2N)",
        asymptotic: false,
    });
    if let Some(v) = mm.improved_avg_lb {
        out.push(BoundReport {
            name: "minimax_avg_lb_two_users",
            value: v,
            inputs: base.clone(),
            formula: "3/2",
            asymptotic: false,
        });
    }
    if let Some(v) = mm.peak_shape {
        out.push(BoundReport {
            name: "minimax_peak_shape",
            value: v,
            inputs: base.clone(),
            formula: "N / ln N (constant suppressed)",
            asymptotic: MinimaxBounds::PEAK_IS_ASYMPTOTIC,
        });
    }
    if let Ok(y) = yao_renewal_constants(n) {
        for (name, value, formula) in [
            ("yao_cycle_cost", y.cycle_cost, "1 / (q^2 (1 - q)), q = 1/N"),
            ("yao_cycle_length", y.cycle_length, "1 / (q (1 - q)), q = 1/N"),
            ("yao_per_user_rate", y.per_user_rate, "N"),
            ("yao_opt_total", y.opt_total, "N^2"),
        ] {
            out.push(BoundReport {
                name,
                value,
                inputs: base.clone(),
                formula,
                asymptotic: false,
            });
        }
    }
    if let Ok(v) = peak_opt_upper_yao(n) {
        out.push(BoundReport {
            name: "yao_peak_opt_upper",
            value: v,
            inputs: base.clone(),
            formula: "1 + (N/a) ln(N/(1-a)), a = 1 - 1/ln N",
            asymptotic: false,
        });
    }
    Ok(out)
}
