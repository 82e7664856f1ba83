//! Small regression helpers shared by the diagnostics.

/// Least-squares slope of y against x.
pub fn linear_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of ln y against ln x over the positive pairs.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let points: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if points.len() < 2 {
        return f64::NAN;
    }
    linear_slope(&points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law_exponent() {
        let xs: Vec<f64> = (1..10).map(|i| 0.1 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_nan());
    }
}
