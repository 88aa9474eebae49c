//! Piecewise cubic Hermite interpolation.

/// A piecewise cubic Hermite interpolant on strictly increasing knots.
///
/// Outside the knot range the interpolant continues linearly with the end
/// slopes, so it stays monotone if the data are.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error("need at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissae must be finite and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("knot arrays have different lengths")]
    LengthMismatch,
    #[error("ordinates are not monotone (index {0})")]
    NotMonotone(usize),
}

impl CubicHermite {
    /// Builds an interpolant from values and derivatives at the knots.
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Result<Self, InterpError> {
        if xs.len() != ys.len() || xs.len() != ds.len() {
            return Err(InterpError::LengthMismatch);
        }
        if xs.len() < 2 {
            return Err(InterpError::TooFewKnots(xs.len()));
        }
        for i in 1..xs.len() {
            if !(xs[i] > xs[i - 1]) || !xs[i].is_finite() {
                return Err(InterpError::NotIncreasing(i));
            }
        }
        Ok(Self { xs, ys, ds })
    }

    /// Fritsch–Carlson monotone interpolant (PCHIP) through monotone data.
    pub fn monotone(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, InterpError> {
        let n = xs.len();
        if ys.len() != n {
            return Err(InterpError::LengthMismatch);
        }
        if n < 2 {
            return Err(InterpError::TooFewKnots(n));
        }
        let increasing = ys[n - 1] >= ys[0];
        for i in 1..n {
            if !(xs[i] > xs[i - 1]) {
                return Err(InterpError::NotIncreasing(i));
            }
            let step = ys[i] - ys[i - 1];
            if (increasing && step < 0.0) || (!increasing && step > 0.0) {
                return Err(InterpError::NotMonotone(i));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = delta[0];
            ds[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            ds[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            ds[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, ds })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.ds[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.ds[n - 1] * (x - self.xs[n - 1]);
        }
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ds[0];
        }
        if x >= self.xs[n - 1] {
            return self.ds[n - 1];
        }
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.ds[i] + d01 * self.ys[i + 1] + d11 * self.ds[i + 1]
    }

    /// Solves `value(x) = y` for a monotone interpolant. Targets beyond the
    /// tabulated range are resolved on the linear extension.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.xs.len();
        let increasing = self.ys[n - 1] >= self.ys[0];
        let (lo_y, hi_y) = if increasing { (self.ys[0], self.ys[n - 1]) } else { (self.ys[n - 1], self.ys[0]) };
        let extrapolate = |k: usize| {
            if self.ds[k] == 0.0 {
                self.xs[k]
            } else {
                self.xs[k] + (y - self.ys[k]) / self.ds[k]
            }
        };
        if y <= lo_y {
            return extrapolate(if increasing { 0 } else { n - 1 });
        }
        if y >= hi_y {
            return extrapolate(if increasing { n - 1 } else { 0 });
        }
        // Find the bracketing knot interval, then bisect/Newton inside it.
        let i = if increasing {
            self.ys.partition_point(|&v| v <= y).saturating_sub(1).min(n - 2)
        } else {
            self.ys.partition_point(|&v| v >= y).saturating_sub(1).min(n - 2)
        };
        let g = |x: f64| self.value(x) - y;
        super::roots::solve_monotone(g, |x| self.derivative(x), self.xs[i], self.xs[i + 1], 1e-15)
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let xs: Vec<f64> = (0..=4).map(|i| i as f64 * 0.5).collect();
        let h = CubicHermite::with_slopes(
            xs.clone(),
            xs.iter().map(|&x| f(x)).collect(),
            xs.iter().map(|&x| df(x)).collect(),
        )
        .unwrap();
        for k in 0..=40 {
            let x = k as f64 * 0.05;
            assert!((h.value(x) - f(x)).abs() < 1e-12);
            assert!((h.derivative(x) - df(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn pchip_stays_monotone_and_inverts() {
        let xs = vec![0.0, 0.1, 0.2, 0.5, 0.9, 1.0];
        let ys = vec![0.0, 0.0, 0.3, 0.31, 0.9, 1.0];
        let p = CubicHermite::monotone(xs, ys).unwrap();
        let mut prev = p.value(0.0);
        for k in 1..=1000 {
            let x = k as f64 / 1000.0;
            let v = p.value(x);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        for &y in &[0.05, 0.305, 0.5, 0.95] {
            assert!((p.value(p.inverse(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decreasing_data_inverts() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (1.0 - x) * (1.0 - x)).collect();
        let p = CubicHermite::monotone(xs, ys).unwrap();
        let x = p.inverse(0.25);
        assert!((x - 0.5).abs() < 1e-3);
        assert!((p.value(x) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(CubicHermite::monotone(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(CubicHermite::monotone(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5]).is_err());
    }
}
