//! Tabulated potentials with monotone piecewise-cubic (Fritsch–Carlson)
//! interpolation. Evaluation outside the grid is an error.

use rug::Float;

use super::EnsembleError;

#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedPotential {
    xs: Vec<f64>,
    vs: Vec<f64>,
    slopes: Vec<f64>,
}

impl TabulatedPotential {
    pub fn new(xs: Vec<f64>, vs: Vec<f64>) -> Result<Self, EnsembleError> {
        if xs.len() != vs.len() || xs.len() < 2 {
            return Err(EnsembleError::Invalid(format!(
                "potential table needs ≥ 2 points with matching lengths (got {} x, {} V)",
                xs.len(),
                vs.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EnsembleError::Invalid(
                "potential table abscissae must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&vs).any(|v| !v.is_finite()) {
            return Err(EnsembleError::Invalid(
                "potential table has non-finite entries".into(),
            ));
        }
        let slopes = pchip_slopes(&xs, &vs);
        Ok(Self { xs, vs, slopes })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn vs(&self) -> &[f64] {
        &self.vs
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn locate(&self, x: f64) -> Result<usize, EnsembleError> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(EnsembleError::TableRange { x, lo, hi });
        }
        let i = self.xs.partition_point(|&k| k <= x).saturating_sub(1);
        Ok(i.min(self.xs.len() - 2))
    }

    pub fn eval(&self, x: f64) -> Result<f64, EnsembleError> {
        let i = self.locate(x)?;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        Ok(h00 * self.vs[i]
            + h10 * h * self.slopes[i]
            + h01 * self.vs[i + 1]
            + h11 * h * self.slopes[i + 1])
    }

    /// The same cubic evaluated in extended precision.
    pub(crate) fn eval_mp(&self, x: &Float, bits: u32) -> Result<Float, EnsembleError> {
        let i = self.locate(x.to_f64())?;
        let x0 = Float::with_val(bits, self.xs[i]);
        let h = Float::with_val(bits, self.xs[i + 1]) - &x0;
        let t = Float::with_val(bits, x - &x0) / &h;
        let one = Float::with_val(bits, 1u32);
        let s = Float::with_val(bits, &one - &t);
        let t2 = Float::with_val(bits, t.square_ref());
        let s2 = Float::with_val(bits, s.square_ref());
        // h00 = (1 + 2t)(1-t)^2, h10 = t(1-t)^2, h01 = t^2(3 - 2t), h11 = t^2(t - 1)
        let h00 = Float::with_val(bits, &t * 2u32) + 1u32;
        let h00 = h00 * &s2;
        let h10 = Float::with_val(bits, &t * &s2);
        let h01 = (Float::with_val(bits, 3u32) - Float::with_val(bits, &t * 2u32)) * &t2;
        let h11 = Float::with_val(bits, &t2 * &s);
        let mut out = h00 * self.vs[i];
        out += h10 * &h * self.slopes[i];
        out += h01 * self.vs[i + 1];
        out -= h11 * &h * self.slopes[i + 1];
        Ok(out)
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

/// Fritsch–Carlson slopes: zero at local extrema of the data, harmonic-mean
/// weighting elsewhere, which keeps the interpolant monotone between knots.
fn pchip_slopes(xs: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (vs[i + 1] - vs[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
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
    fn interpolates_knots_exactly() {
        let xs = vec![0.0, 1.0, 2.5, 4.0];
        let vs = vec![0.0, 1.0, 1.5, 4.0];
        let t = TabulatedPotential::new(xs.clone(), vs.clone()).unwrap();
        for (x, v) in xs.iter().zip(&vs) {
            assert!((t.eval(*x).unwrap() - v).abs() < 1e-14);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let vs = vec![0.0, 0.1, 0.1, 0.2, 3.0, 3.1, 3.1, 3.1, 5.0, 9.0, 9.5, 20.0];
        let t = TabulatedPotential::new(xs, vs).unwrap();
        let mut prev = t.eval(0.0).unwrap();
        for k in 1..=1100 {
            let v = t.eval(k as f64 * 0.01).unwrap();
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn extrapolation_is_forbidden() {
        let t = TabulatedPotential::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert!(matches!(t.eval(1.5), Err(EnsembleError::TableRange { .. })));
        assert!(matches!(
            t.eval(-0.1),
            Err(EnsembleError::TableRange { .. })
        ));
    }

    #[test]
    fn extended_precision_matches_double() {
        let xs = vec![0.0, 0.5, 1.0, 2.0, 3.0];
        let vs = vec![1.0, 0.7, 0.8, 2.0, 2.1];
        let t = TabulatedPotential::new(xs, vs).unwrap();
        for k in 0..=30 {
            let x = k as f64 * 0.1;
            let a = t.eval(x).unwrap();
            let b = t.eval_mp(&Float::with_val(200, x), 200).unwrap().to_f64();
            assert!((a - b).abs() < 1e-13, "{x}: {a} {b}");
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(TabulatedPotential::new(vec![0.0], vec![1.0]).is_err());
        assert!(TabulatedPotential::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TabulatedPotential::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }
}
