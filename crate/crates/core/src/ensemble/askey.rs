//! The Askey (critical-ensemble) potential
//! `V(x; q) = Σ_{n≥0} ln[1 + 2 q^{n+1} cosh(2 asin x) + q^{2n+2}]` on `[-1, 1]`.

use rug::Float;

use super::EnsembleError;

fn check_args(x: f64, q: f64) -> Result<(), EnsembleError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(EnsembleError::Invalid(format!(
            "Askey parameter q = {q} must lie in (0, 1)"
        )));
    }
    if !(x.abs() <= 1.0) {
        return Err(EnsembleError::OutsideSupport {
            x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// Truncated series for the Askey potential.
///
/// Summation stops once `2 q^{n+1} (cosh(2 asin x) + 1) < tol`, which bounds
/// every remaining term, so the discarded tail is below `tol / (1 - q)`.
pub fn askey_potential(x: f64, q: f64, tol: f64) -> Result<f64, EnsembleError> {
    check_args(x, q)?;
    let c = (2.0 * x.asin()).cosh();
    let mut sum = 0.0;
    let mut qn = q;
    while 2.0 * qn * (c + 1.0) >= tol {
        sum += (2.0 * qn * c + qn * qn).ln_1p();
        qn *= q;
    }
    Ok(sum)
}

/// `exp(-V(x; q))` at extended precision, computed as the reciprocal of the
/// factor product so that only one division is needed per point.
pub(crate) fn askey_weight_mp(x: &Float, q: f64, bits: u32) -> Float {
    let two_asin = Float::with_val(bits, x.clone().asin() * 2u32);
    let c = two_asin.cosh();
    let q_mp = Float::with_val(bits, q);
    let mut qn = q_mp.clone();
    let mut product = Float::with_val(bits, 1u32);
    let tol = Float::with_val(bits, 1u32) >> (bits as i32 + 8);
    let cp1 = Float::with_val(bits, &c + 1u32);
    loop {
        let bound = Float::with_val(bits, &qn * &cp1) * 2u32;
        if bound < tol {
            break;
        }
        // 1 + 2 q^{n+1} c + q^{2n+2}
        let mut factor = Float::with_val(bits, &qn * &c);
        factor *= 2u32;
        factor += Float::with_val(bits, qn.square_ref());
        factor += 1u32;
        product *= &factor;
        qn *= &q_mp;
    }
    product.recip()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct summation at x = 0: each term is ln((1 + q^{n+1})^2).
    fn series_oracle_at_zero(q: f64) -> f64 {
        (0..2000).map(|n| 2.0 * (q.powi(n + 1)).ln_1p()).sum()
    }

    #[test]
    fn vanishes_as_q_goes_to_zero() {
        let v = askey_potential(0.4, 1e-300, 1e-16).unwrap();
        assert!(v.abs() < 1e-290);
    }

    #[test]
    fn matches_series_oracle_at_origin() {
        let tol = 1e-14;
        let v = askey_potential(0.0, 0.5, tol).unwrap();
        let oracle = series_oracle_at_zero(0.5);
        assert!((v - oracle).abs() < tol / 0.5, "{v} vs {oracle}");
    }

    #[test]
    fn increases_away_from_origin() {
        let v0 = askey_potential(0.0, 0.5, 1e-15).unwrap();
        let v9 = askey_potential(0.9, 0.5, 1e-15).unwrap();
        assert!(v9 > v0);
    }

    #[test]
    fn halving_tolerance_moves_value_by_less_than_old_bound() {
        for &(x, q) in &[(0.0, 0.5), (0.7, 0.9), (-1.0, 0.3), (0.95, 0.99)] {
            let mut tol = 1e-2;
            let mut prev = askey_potential(x, q, tol).unwrap();
            for _ in 0..30 {
                let next = askey_potential(x, q, tol / 2.0).unwrap();
                assert!((next - prev).abs() <= tol / (1.0 - q));
                prev = next;
                tol /= 2.0;
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(askey_potential(1.5, 0.5, 1e-10).is_err());
        assert!(askey_potential(0.5, 1.0, 1e-10).is_err());
        assert!(askey_potential(0.5, 0.0, 1e-10).is_err());
    }

    #[test]
    fn extended_precision_weight_agrees_with_series() {
        for &(x, q) in &[(0.0, 0.5), (0.6, 0.7), (-0.99, 0.9)] {
            let v = askey_potential(x, q, 1e-17).unwrap();
            let w = askey_weight_mp(&Float::with_val(200, x), q, 200);
            let log_w = w.ln().to_f64();
            assert!(
                (log_w + v).abs() < 1e-14 * v.max(1.0),
                "{x} {q}: {log_w} {v}"
            );
        }
    }
}
