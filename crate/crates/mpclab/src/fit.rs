//! Least-squares fits on logarithmic scales.

use serde::Serialize;

/// Ordinary least squares line y ≈ intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when the responses are constant.
    pub r_squared: f64,
    pub points: usize,
}

/// Fits a line; `None` with fewer than two points or all-equal abscissae.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mean_x = xs[..n].iter().sum::<f64>() / n as f64;
    let mean_y = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = ys[..n].iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot <= 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Fits ln y against x, keeping only points with y > `floor`.
pub fn log_linear_fit(xs: &[f64], ys: &[f64], floor: f64) -> Option<LineFit> {
    let (px, py): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > floor)
        .map(|(x, y)| (*x, y.ln()))
        .unzip();
    line_fit(&px, &py)
}

/// Fits ln y against ln x, keeping points with x > 0 and y > `floor`.
pub fn log_log_fit(xs: &[f64], ys: &[f64], floor: f64) -> Option<LineFit> {
    let (px, py): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > floor)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    line_fit(&px, &py)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = line_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 2.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn geometric_sequence_slope_is_log_rate() {
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * 0.7f64.powf(*x)).collect();
        let fit = log_linear_fit(&xs, &ys, 0.0).unwrap();
        assert!((fit.slope.exp() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn constant_response_has_unit_quality() {
        let fit = line_fit(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(fit.r_squared, 1.0);
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn floor_drops_points() {
        assert!(log_linear_fit(&[0.0, 1.0], &[1.0, 0.0], 1e-10).is_none());
    }
}
