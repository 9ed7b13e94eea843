use std::f64::consts::PI;

use super::{Monomial, PolyError, Polynomial};

/// Number of uniform points used to bound the interpolation remainder.
pub const VALIDATION_POINTS: usize = 10_001;
/// Safety factor applied to the observed grid error.
pub const REMAINDER_INFLATION: f64 = 1.25;

/// Power-basis Chebyshev interpolant of a scalar function on an interval.
#[derive(Clone, Debug)]
pub struct ChebyshevFit {
    pub poly: Polynomial,
    pub domain: (f64, f64),
    pub degree: u32,
    pub remainder_bound: f64,
}

impl ChebyshevFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.poly.eval_unchecked(&[x])
    }

    /// Power-basis coefficients, index = exponent.
    pub fn coefficients(&self) -> Vec<f64> {
        (0..=self.degree).map(|e| self.poly.coeff(&Monomial::new(vec![e]))).collect()
    }
}

/// Interpolates `f` at the `degree + 1` Chebyshev points of the second kind
/// mapped to `domain` and converts the result to the power basis.
pub fn chebyshev_fit<F>(f: F, domain: (f64, f64), degree: u32) -> Result<ChebyshevFit, PolyError>
where
    F: Fn(f64) -> f64,
{
    let (a, b) = domain;
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(PolyError::InvalidDomain(a, b));
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let k = degree as usize;

    let cheb = if k == 0 {
        let v = f(mid);
        check_finite(v, mid)?;
        vec![v]
    } else {
        let values: Vec<f64> = (0..=k)
            .map(|j| {
                let x = mid + half * (j as f64 * PI / k as f64).cos();
                let v = f(x);
                check_finite(v, x).map(|_| v)
            })
            .collect::<Result<_, _>>()?;
        // discrete cosine transform on the Lobatto grid
        (0..=k)
            .map(|n| {
                let mut s = 0.0;
                for (j, v) in values.iter().enumerate() {
                    let w = if j == 0 || j == k { 0.5 } else { 1.0 };
                    s += w * v * (n as f64 * j as f64 * PI / k as f64).cos();
                }
                let c = 2.0 * s / k as f64;
                if n == 0 || n == k {
                    0.5 * c
                } else {
                    c
                }
            })
            .collect()
    };

    // sum c_n T_n(t) in the power basis of t
    let mut t_prev = vec![1.0];
    let mut t_cur = vec![0.0, 1.0];
    let mut in_t = vec![0.0; k + 1];
    for (n, c) in cheb.iter().enumerate() {
        let tn: &[f64] = match n {
            0 => &t_prev,
            1 => &t_cur,
            _ => {
                let mut next = vec![0.0; n + 1];
                for (i, v) in t_cur.iter().enumerate() {
                    next[i + 1] += 2.0 * v;
                }
                for (i, v) in t_prev.iter().enumerate() {
                    next[i] -= v;
                }
                t_prev = std::mem::replace(&mut t_cur, next);
                &t_cur
            }
        };
        for (i, v) in tn.iter().enumerate() {
            in_t[i] += c * v;
        }
    }

    // t = (x - mid) / half
    let t_of_x = Polynomial::from_exps(1, &[(&[1], 1.0 / half), (&[0], -mid / half)]);
    let in_t_poly =
        Polynomial::from_terms(1, in_t.iter().enumerate().map(|(e, c)| (Monomial::new(vec![e as u32]), *c)));
    let poly = in_t_poly.compose(&[t_of_x])?;

    let mut worst: f64 = 0.0;
    for i in 0..VALIDATION_POINTS {
        let x = a + (b - a) * i as f64 / (VALIDATION_POINTS - 1) as f64;
        let v = f(x);
        check_finite(v, x)?;
        worst = worst.max((v - poly.eval_unchecked(&[x])).abs());
    }

    Ok(ChebyshevFit { poly, domain, degree, remainder_bound: REMAINDER_INFLATION * worst })
}

fn check_finite(v: f64, x: f64) -> Result<(), PolyError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(PolyError::NonFinite(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_polynomials() {
        let f = |x: f64| 2.0 - x + 0.5 * x * x * x;
        let fit = chebyshev_fit(f, (-2.0, 1.0), 3).unwrap();
        assert!(fit.remainder_bound < 1e-10);
        let c = fit.coefficients();
        assert!((c[0] - 2.0).abs() < 1e-10);
        assert!((c[1] + 1.0).abs() < 1e-10);
        assert!(c[2].abs() < 1e-10);
        assert!((c[3] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn sin_degree_nine_is_odd() {
        let fit = chebyshev_fit(f64::sin, (-3.0, 3.0), 9).unwrap();
        for (e, c) in fit.coefficients().iter().enumerate() {
            if e % 2 == 0 {
                assert!(c.abs() < 1e-10, "even coefficient {e} = {c}");
            }
        }
        // frozen from an independent numpy chebfit on the same 10001-point grid
        assert!((fit.remainder_bound - 8.882390796771666e-06).abs() < 1e-10);
    }

    #[test]
    fn refinement_shrinks_bound() {
        let lo = chebyshev_fit(f64::sin, (-3.0, 3.0), 1).unwrap();
        let hi = chebyshev_fit(f64::sin, (-3.0, 3.0), 9).unwrap();
        assert!((lo.remainder_bound - 1.1590203595110147).abs() < 1e-9);
        assert!(lo.remainder_bound > hi.remainder_bound);
    }

    #[test]
    fn degree_zero_is_midpoint_value() {
        let fit = chebyshev_fit(|x| x * x, (1.0, 3.0), 0).unwrap();
        assert_eq!(fit.coefficients(), vec![4.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(chebyshev_fit(f64::sin, (1.0, 1.0), 3), Err(PolyError::InvalidDomain(..))));
        assert!(matches!(chebyshev_fit(|x: f64| 1.0 / x, (-1.0, 1.0), 4), Err(PolyError::NonFinite(_))));
    }
}
