//! Small statistics helpers shared by the estimators.

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    /// True when `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Streaming batch-means estimator. Observations are grouped into batches of
/// a fixed size; the spread of batch averages gives a standard error that
/// stays honest under short-range autocorrelation.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_size: u64,
    in_batch: u64,
    batch_sum: f64,
    batch_means: Vec<f64>,
    total: f64,
    count: u64,
}

impl BatchMeans {
    /// Sized so that `expected_samples` observations fill about `n_batches` batches.
    pub fn new(expected_samples: u64, n_batches: u64) -> Self {
        let batch_size = (expected_samples / n_batches.max(1)).max(1);
        BatchMeans {
            batch_size,
            in_batch: 0,
            batch_sum: 0.0,
            batch_means: Vec::new(),
            total: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.total += x;
        self.count += 1;
        self.batch_sum += x;
        self.in_batch += 1;
        if self.in_batch == self.batch_size {
            self.batch_means.push(self.batch_sum / self.batch_size as f64);
            self.batch_sum = 0.0;
            self.in_batch = 0;
        }
    }

    pub fn estimate(&self) -> Estimate {
        let mean = if self.count == 0 {
            f64::NAN
        } else {
            self.total / self.count as f64
        };
        let k = self.batch_means.len();
        let std_error = if k < 2 {
            f64::INFINITY
        } else {
            let m = self.batch_means.iter().sum::<f64>() / k as f64;
            let var = self
                .batch_means
                .iter()
                .map(|b| (b - m) * (b - m))
                .sum::<f64>()
                / (k - 1) as f64;
            (var / k as f64).sqrt()
        };
        Estimate {
            mean,
            std_error,
            samples: self.count,
        }
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_error = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_std_error,
    })
}

/// Weighted least squares with weights proportional to inverse variance.
/// The slope standard error assumes those variances are exact.
pub fn weighted_least_squares(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || ws.len() != n || ws.iter().any(|&w| !(w > 0.0)) {
        return None;
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        slope_std_error: (1.0 / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = least_squares(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.slope_std_error < 1e-12);
    }

    #[test]
    fn weighted_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 3.0 * x).collect();
        let fit = weighted_least_squares(&xs, &ys, &[1.0, 10.0, 0.5, 2.0]).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!(weighted_least_squares(&xs, &ys, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn degenerate_fit() {
        assert!(least_squares(&[1.0], &[1.0]).is_none());
        assert!(least_squares(&[2.0, 2.0], &[1.0, 3.0]).is_none());
    }

    #[test]
    fn batch_means_constant_series() {
        let mut bm = BatchMeans::new(100, 10);
        (0..100).for_each(|_| bm.push(3.0));
        let e = bm.estimate();
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.samples, 100);
    }
}
