//! Ordinary least squares on a single regressor.

/// Result of fitting `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination. `1.0` when `y` is constant.
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// True when the spread of `y` is at rounding level, so the fit carries
    /// no shape information.
    pub flat: bool,
}

impl LinearFit {
    /// Normal-approximation 95% interval for the slope.
    pub fn slope_interval(&self) -> (f64, f64) {
        let half = 1.96 * self.slope_stderr;
        (self.slope - half, self.slope + half)
    }
}

/// Fits `ys` against `xs`. Returns `None` for fewer than three points or a
/// constant regressor.
pub fn fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
    let flat = syy.sqrt() <= 1e-12 * scale * nf.sqrt();
    if flat {
        return Some(LinearFit {
            slope: 0.0,
            intercept: my,
            r_squared: 1.0,
            slope_stderr: 0.0,
            flat: true,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = (1.0 - sse / syy).clamp(0.0, 1.0);
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
        flat: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
    }

    #[test]
    fn noisy_line() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.9, 2.1, 2.9, 4.1];
        let f = fit(&xs, &ys).unwrap();
        assert!((f.slope - 1.0).abs() < 0.05);
        assert!(f.r_squared > 0.99 && f.r_squared < 1.0);
        let (lo, hi) = f.slope_interval();
        assert!(lo < f.slope && f.slope < hi);
    }

    #[test]
    fn flat_and_degenerate() {
        let f = fit(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(f.flat);
        assert_eq!(f.slope, 0.0);
        assert!(fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        assert!(fit(&[1.0, 2.0], &[1.0, 2.0]).is_none());
    }
}
