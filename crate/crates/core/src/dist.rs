//! Normal, Student t, chi-square and Fisher F distributions with real-valued
//! degrees of freedom.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, FisherF, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solve::{brent, RootOptions};
use crate::special::{
    beta_inc_pair, gamma_inc_pair, ln_gamma, normal_cdf_pair, normal_pdf, normal_quantile,
};

/// Beyond this many denominator degrees of freedom the F CDF switches to a
/// second-order expansion around the chi-square limit.
const LARGE_DF: f64 = 1e6;

/// A fully parameterised continuous distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DistSpec {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64 },
    ChiSquare { df: f64 },
    FisherF { d1: f64, d2: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be > 0, got {v}")))
    }
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistSpec::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::Parameter(format!("mean must be finite, got {mean}")));
                }
                positive("sd", sd)?;
                if sd.is_infinite() {
                    return Err(Error::Parameter("sd must be finite".into()));
                }
                Ok(())
            }
            DistSpec::StudentT { df } | DistSpec::ChiSquare { df } => positive("df", df),
            DistSpec::FisherF { d1, d2 } => {
                positive("d1", d1)?;
                positive("d2", d2)
            }
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::Domain("x is NaN".into()));
        }
        Ok(self.cdf_pair(x).0)
    }

    /// Survival function `1 − cdf(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::Domain("x is NaN".into()));
        }
        Ok(self.cdf_pair(x).1)
    }

    /// `(cdf, sf)` without validation.
    pub(crate) fn cdf_pair(&self, x: f64) -> (f64, f64) {
        match *self {
            DistSpec::Normal { mean, sd } => normal_cdf_pair((x - mean) / sd),
            DistSpec::StudentT { df } => t_cdf_pair(df, x),
            DistSpec::ChiSquare { df } => chisq_cdf_pair(df, x),
            DistSpec::FisherF { d1, d2 } => f_cdf_pair(d1, d2, x),
        }
    }

    /// Inverse CDF for `0 < p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
        }
        match *self {
            DistSpec::Normal { mean, sd } => Ok(mean + sd * normal_quantile(p)),
            DistSpec::StudentT { df } => {
                if p == 0.5 {
                    return Ok(0.0);
                }
                let upper = p.max(1.0 - p);
                let q = positive_quantile(|x| t_cdf_pair(df, x), upper, normal_quantile(upper))?;
                Ok(if p < 0.5 { -q } else { q })
            }
            DistSpec::ChiSquare { df } => {
                positive_quantile(|x| chisq_cdf_pair(df, x), p, df.max(1.0))
            }
            DistSpec::FisherF { d1, d2 } => {
                positive_quantile(|x| f_cdf_pair(d1, d2, x), p, 1.0)
            }
        }
    }

    /// Draw one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        let bad = |e: &dyn std::fmt::Display| Error::Parameter(e.to_string());
        Ok(match *self {
            DistSpec::Normal { mean, sd } => Normal::new(mean, sd).map_err(|e| bad(&e))?.sample(rng),
            DistSpec::StudentT { df } => StudentT::new(df).map_err(|e| bad(&e))?.sample(rng),
            DistSpec::ChiSquare { df } => ChiSquared::new(df).map_err(|e| bad(&e))?.sample(rng),
            DistSpec::FisherF { d1, d2 } => FisherF::new(d1, d2).map_err(|e| bad(&e))?.sample(rng),
        })
    }
}

/// Solve `cdf(x) = p` on `[0, ∞)`, given `cdf(0) < p`.
///
/// `pair` returns `(cdf, sf)`; the upper tail is matched through the survival
/// function so that probabilities near 1 keep full relative precision.
fn positive_quantile<F>(pair: F, p: f64, guess: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let q = 1.0 - p;
    let h = |x: f64| {
        let (c, s) = pair(x);
        if p <= 0.5 {
            c - p
        } else {
            q - s
        }
    };
    let (mut lo, mut f_lo) = (0.0, h(0.0));
    let mut hi = guess.max(1e-3);
    let mut f_hi = h(hi);
    if f_hi >= 0.0 {
        // Guess overshoots: halve towards zero for a tighter lower end.
        for _ in 0..60 {
            let mid = 0.5 * hi;
            let fm = h(mid);
            if fm < 0.0 {
                lo = mid;
                f_lo = fm;
                break;
            }
            hi = mid;
            f_hi = fm;
        }
    } else {
        let mut n = 0;
        while f_hi < 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            f_hi = h(hi);
            n += 1;
            if n > 2000 || !hi.is_finite() {
                return Err(Error::NoConvergence {
                    what: format!("quantile bracket for p = {p}"),
                    achieved: f_hi.abs(),
                });
            }
        }
    }
    let root = brent(h, lo, hi, f_lo, f_hi, RootOptions::default())?;
    if !root.converged {
        return Err(Error::NoConvergence {
            what: format!("quantile for p = {p}"),
            achieved: root.fx.abs(),
        });
    }
    Ok(root.x)
}

/// Chi-square `(cdf, sf)` for real `df`.
pub(crate) fn chisq_cdf_pair(df: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    gamma_inc_pair(0.5 * df, 0.5 * x)
}

/// Chi-square density.
pub(crate) fn chisq_pdf(df: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Student t `(cdf, sf)`.
pub(crate) fn t_cdf_pair(df: f64, x: f64) -> (f64, f64) {
    if x.is_infinite() {
        return if x > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    if df >= LARGE_DF {
        // Φ(x) − φ(x)(x³ + x)/(4ν) + O(ν⁻²)
        let (c, s) = normal_cdf_pair(x);
        let adj = normal_pdf(x) * (x * x * x + x) / (4.0 * df);
        return (c - adj, s + adj);
    }
    let x2 = x * x;
    let (tail2, _) = beta_inc_pair(0.5 * df, 0.5, df / (df + x2), x2 / (df + x2));
    let tail = 0.5 * tail2;
    if x >= 0.0 {
        (1.0 - tail, tail)
    } else {
        (tail, 1.0 - tail)
    }
}

/// Fisher F `(cdf, sf)` for real degrees of freedom.
pub(crate) fn f_cdf_pair(d1: f64, d2: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    if d2 >= LARGE_DF && d1 < LARGE_DF {
        return f_large_d2(d1, d2, x);
    }
    if d1 >= LARGE_DF && d2 < LARGE_DF {
        let (c, s) = f_large_d2(d2, d1, 1.0 / x);
        return (s, c);
    }
    let a = d1 * x;
    beta_inc_pair(0.5 * d1, 0.5 * d2, a / (a + d2), d2 / (a + d2))
}

/// F CDF for huge `d2`: with `S = χ²_{d2}/d2`, expand `E[G(d1·x·S)]` to second
/// order in `S − 1`, where `G` is the chi-square CDF on `d1` degrees of freedom.
fn f_large_d2(d1: f64, d2: f64, x: f64) -> (f64, f64) {
    let z = d1 * x;
    let (c, s) = chisq_cdf_pair(d1, z);
    // z² G''(z) = z f(z) [(d1/2 − 1) − z/2]
    let corr = z * chisq_pdf(d1, z) * (0.5 * d1 - 1.0 - 0.5 * z) / d2;
    ((c + corr).clamp(0.0, 1.0), (s - corr).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn closed_form_values() {
        let n = DistSpec::Normal { mean: 0.0, sd: 1.0 };
        assert_eq!(n.cdf(0.0).unwrap(), 0.5);
        assert!(close(n.cdf(1.96).unwrap(), 0.975_002_104_851_780, 1e-12));
        let c2 = DistSpec::ChiSquare { df: 2.0 };
        assert!(close(c2.cdf(2.0).unwrap(), 1.0 - (-1.0f64).exp(), 1e-14));
        let t1 = DistSpec::StudentT { df: 1.0 };
        // Cauchy
        assert!(close(t1.cdf(1.0).unwrap(), 0.75, 1e-14));
        assert!(close(t1.cdf(-3.0).unwrap(), 0.5 + (-3.0f64).atan() / std::f64::consts::PI, 1e-14));
    }

    #[test]
    fn quantile_values() {
        let t4 = DistSpec::StudentT { df: 4.0 };
        assert!(close(t4.quantile(0.975).unwrap(), 2.776_445_105_197_799, 1e-9));
        let f = DistSpec::FisherF { d1: 1.0, d2: 1e12 };
        assert!(close(f.quantile(0.95).unwrap(), 3.841_458_820_694_124, 1e-6));
        let n = DistSpec::Normal { mean: 0.0, sd: 1.0 };
        assert_eq!(n.quantile(0.5).unwrap(), 0.0);
        assert!(n.quantile(0.0).is_err());
        assert!(n.quantile(1.0).is_err());
        let t1 = DistSpec::StudentT { df: 1.0 };
        assert!(close(t1.quantile(0.975).unwrap(), 12.706_204_736_174_7, 1e-8));
    }

    #[test]
    fn roundtrip_over_grid() {
        let specs = [
            DistSpec::Normal { mean: 1.0, sd: 2.5 },
            DistSpec::StudentT { df: 0.7 },
            DistSpec::StudentT { df: 29.0 },
            DistSpec::StudentT { df: 3e6 },
            DistSpec::ChiSquare { df: 0.3 },
            DistSpec::ChiSquare { df: 4.0 },
            DistSpec::ChiSquare { df: 400.5 },
            DistSpec::FisherF { d1: 4.0, d2: 17.5 },
            DistSpec::FisherF { d1: 0.5, d2: 2.3 },
            DistSpec::FisherF { d1: 29.0, d2: 5e7 },
            DistSpec::FisherF { d1: 5e7, d2: 3.0 },
        ];
        for s in specs {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let x = s.quantile(p).unwrap();
                let back = s.cdf(x).unwrap();
                assert!((back - p).abs() <= 1e-9, "{s:?} p={p} x={x} back={back}");
            }
        }
    }

    #[test]
    fn f_reciprocal_symmetry() {
        for &(d1, d2) in &[(3.0, 7.5), (1.0, 1.0), (12.0, 2e6), (0.8, 40.0)] {
            for &x in &[0.05, 0.5, 1.0, 2.0, 9.0] {
                let a = f_cdf_pair(d1, d2, x).0;
                let b = 1.0 - f_cdf_pair(d2, d1, 1.0 / x).0;
                assert!(close(a, b, 1e-12), "d1={d1} d2={d2} x={x}");
            }
        }
    }

    #[test]
    fn large_d2_expansion_is_continuous() {
        // Either side of the switch should agree to well below the accuracy target.
        for &x in &[0.2, 1.0, 3.0] {
            let below = f_cdf_pair(4.0, LARGE_DF * 0.999_999, x).0;
            let above = f_cdf_pair(4.0, LARGE_DF, x).0;
            assert!(close(below, above, 1e-11), "x={x} {below} {above}");
        }
    }

    #[test]
    fn invalid_parameters() {
        let bad = DistSpec::Normal { mean: 5.0, sd: 0.0 };
        assert!(bad.cdf(0.0).is_err());
        let mut rng = SeededRng::new(1);
        assert!(bad.sample(&mut rng).is_err());
        assert!(DistSpec::ChiSquare { df: -1.0 }.quantile(0.5).is_err());
        assert!(DistSpec::FisherF { d1: 1.0, d2: f64::NAN }.cdf(1.0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = DistSpec::ChiSquare { df: 3.5 };
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..50 {
            assert_eq!(s.sample(&mut a).unwrap(), s.sample(&mut b).unwrap());
        }
    }
}
