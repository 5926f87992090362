//! Shape-preserving piecewise cubic Hermite interpolation (Fritsch–Carlson
//! slopes, the same construction as the usual PCHIP).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(Error::Structural(format!(
                "interpolation needs matching knots and values, got {} and {}",
                n,
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Structural("interpolation knots must increase strictly".into()));
        }
        let widths: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let secants: Vec<f64> = values
            .windows(2)
            .zip(&widths)
            .map(|(v, h)| (v[1] - v[0]) / h)
            .collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = secants[0];
            slopes[1] = secants[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (secants[k - 1], secants[k]);
                if d0 * d1 <= 0.0 {
                    slopes[k] = 0.0;
                } else {
                    let (h0, h1) = (widths[k - 1], widths[k]);
                    let w1 = 2.0 * h1 + h0;
                    let w2 = h1 + 2.0 * h0;
                    slopes[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slopes[0] = edge_slope(widths[0], widths[1], secants[0], secants[1]);
            slopes[n - 1] =
                edge_slope(widths[n - 2], widths[n - 3], secants[n - 2], secants[n - 3]);
        }
        Ok(Self { knots, values, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let k = self.knots.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
        let h = self.knots[k + 1] - self.knots[k];
        let t = (x - self.knots[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k]
            + h10 * h * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * h * self.slopes[k + 1]
    }
}

/// One-sided three-point end slope with the shape-preserving corrections.
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
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
    fn reproduces_knot_values_exactly() {
        let knots: Vec<f64> = (0..20).map(|k| k as f64 * 0.3).collect();
        let values: Vec<f64> = knots.iter().map(|x| x.sin()).collect();
        let p = MonotoneCubic::new(knots.clone(), values.clone()).unwrap();
        for (x, y) in knots.iter().zip(&values) {
            assert_eq!(p.eval(*x), *y);
        }
    }

    #[test]
    fn preserves_monotone_data() {
        let knots = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let values = vec![0.0, 0.0, 1.0, 1.0, 5.0];
        let p = MonotoneCubic::new(knots, values).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=400 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn converges_on_smooth_data() {
        let err = |n: usize| {
            let knots: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let values: Vec<f64> = knots.iter().map(|x| (2.0 * x).exp()).collect();
            let p = MonotoneCubic::new(knots, values).unwrap();
            (0..1000)
                .map(|i| {
                    let x = (i as f64 + 0.5) / 1000.0;
                    (p.eval(x) - (2.0 * x).exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(err(40) / err(80) > 7.0);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
