//! Disorder averages and least-squares fits.

use serde::{Deserialize, Serialize};

/// Sample mean with its standard error; `stderr` is `None` below two samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: Option<f64>,
    pub n: usize,
}

impl MeanStderr {
    /// `stderr`, or zero when undefined.
    pub fn stderr_or_zero(&self) -> f64 {
        self.stderr.unwrap_or(0.0)
    }
}

/// Two-pass mean/standard error, summed strictly in slice order so the
/// result is bit-reproducible for a fixed input order.
pub fn summarize(values: &[f64]) -> MeanStderr {
    let n = values.len();
    if n == 0 {
        return MeanStderr { mean: f64::NAN, stderr: None, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    MeanStderr { mean, stderr, n }
}

/// Column-wise [`summarize`] of equally long rows.
pub fn summarize_columns(rows: &[Vec<f64>]) -> Vec<MeanStderr> {
    let width = rows.first().map_or(0, Vec::len);
    let mut column = Vec::with_capacity(rows.len());
    (0..width)
        .map(|k| {
            column.clear();
            column.extend(rows.iter().map(|r| r[k]));
            summarize(&column)
        })
        .collect()
}

/// Straight-line fit `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares with optional weights `w_i = 1/σ_i²`.
///
/// With weights the parameter covariance is `(XᵀWX)⁻¹` (absolute errors);
/// without, it is scaled by the residual variance `RSS/(n-2)`.
pub fn line_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || weights.is_some_and(|w| w.len() != n) {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        s += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    let (xm, ym) = (sx / s, sy / s);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - xm, y[i] - ym);
        sxx += w(i) * dx * dx;
        sxy += w(i) * dx * dy;
        syy += w(i) * dy * dy;
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..n).map(|i| w(i) * (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let scale = match weights {
        Some(_) => 1.0,
        None if n > 2 => rss / (n - 2) as f64,
        None => 0.0,
    };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / s + xm * xm / sxx);
    Some(LineFit {
        intercept,
        slope,
        intercept_stderr: intercept_var.sqrt(),
        slope_stderr: slope_var.sqrt(),
        r_squared,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((s.stderr.unwrap() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[7.0]).stderr, None);
        assert_eq!(summarize(&[2.0, 2.0]).stderr, Some(0.0));
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.25 * v).collect();
        let f = line_fit(&x, &y, None).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-14 && (f.intercept - 1.5).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
        let w = [1.0, 4.0, 9.0, 16.0];
        let g = line_fit(&x, &y, Some(&w)).unwrap();
        assert!((g.slope + 0.25).abs() < 1e-14);
    }

    #[test]
    fn degenerate_fit() {
        assert!(line_fit(&[1.0, 1.0], &[0.0, 1.0], None).is_none());
        assert!(line_fit(&[1.0], &[0.0], None).is_none());
    }
}
