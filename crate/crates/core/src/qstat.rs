//! Cochran's Q as a function of τ², its Welch-type corrected moments for mean
//! differences, and the moment-matched scaled F approximation.

use crate::dist::{chisq_cdf_pair, f_cdf_pair, DistSpec};
use crate::error::{Error, Result};
use crate::study::{Dataset, StudySummary};

/// Weights and aggregates at a given τ².
#[derive(Debug, Clone, PartialEq)]
pub struct QContext {
    pub tau2: f64,
    /// `wᵢ = 1/(vᵢ² + τ²)`
    pub weights: Vec<f64>,
    /// `Σ wᵢ`
    pub w: f64,
    /// `Σ wᵢ²`
    pub w2: f64,
    /// `pᵢ = 1 − wᵢ/W`
    pub p: Vec<f64>,
    pub pooled_mean: f64,
    pub q: f64,
}

pub(crate) fn check_tau2(tau2: f64) -> Result<()> {
    if tau2 >= 0.0 && tau2.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau2 must be finite and >= 0, got {tau2}")))
    }
}

pub fn q_context(ds: &Dataset, tau2: f64) -> Result<QContext> {
    check_tau2(tau2)?;
    let weights: Vec<f64> = ds.v2().iter().map(|v| 1.0 / (v + tau2)).collect();
    let w: f64 = weights.iter().sum();
    let w2: f64 = weights.iter().map(|x| x * x).sum();
    let pooled_mean = weights.iter().zip(ds.y()).map(|(w, y)| w * y).sum::<f64>() / w;
    let q = weights
        .iter()
        .zip(ds.y())
        .map(|(wi, y)| wi * (y - pooled_mean) * (y - pooled_mean))
        .sum();
    let p = weights.iter().map(|wi| 1.0 - wi / w).collect();
    Ok(QContext { tau2, weights, w, w2, p, pooled_mean, q })
}

/// `Q(τ²) = Σ wᵢ(τ²)(yᵢ − μ̂(τ²))²`.
pub fn q_statistic(ds: &Dataset, tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    Ok(q_value(ds.y(), ds.v2(), tau2))
}

/// Allocation-free Q for the hot loops.
pub(crate) fn q_value(y: &[f64], v2: &[f64], tau2: f64) -> f64 {
    let (mut w, mut wy) = (0.0, 0.0);
    for (yi, vi) in y.iter().zip(v2) {
        let wi = 1.0 / (vi + tau2);
        w += wi;
        wy += wi * yi;
    }
    let m = wy / w;
    y.iter().zip(v2).map(|(yi, vi)| (yi - m) * (yi - m) / (vi + tau2)).sum()
}

/// Q with arbitrary fixed weights `aᵢ`: `Σ aᵢ(yᵢ − ȳ_a)²`.
pub(crate) fn q_fixed(y: &[f64], a: &[f64]) -> f64 {
    let aa: f64 = a.iter().sum();
    let m = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>() / aa;
    a.iter().zip(y).map(|(ai, yi)| ai * (yi - m) * (yi - m)).sum()
}

/// `Σ wᵢ² gᵢ pᵢ²` at τ², the common correction term of both moments.
pub(crate) fn correction_sum(v2: &[f64], g: &[f64], tau2: f64) -> f64 {
    let w: f64 = v2.iter().map(|v| 1.0 / (v + tau2)).sum();
    v2.iter()
        .zip(g)
        .map(|(v, gi)| {
            let wi = 1.0 / (v + tau2);
            let pi = 1.0 - wi / w;
            wi * wi * gi * pi * pi
        })
        .sum()
}

/// Welch-type term for one study.
pub fn welch_g(study: &StudySummary) -> f64 {
    study.welch_g()
}

/// Corrected first two moments of Q and the matched approximation.
///
/// When `f2` is finite, Q is approximated by `c · F(K−1, f2)`. When variance
/// matching is infeasible, `f2` is `+∞` and Q is approximated by
/// `c · χ²(K−1)` with `c = κ₁/(K−1)`, which keeps the mean matched; `degenerate`
/// is then set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchMoments {
    pub kappa1: f64,
    pub kappa2: f64,
    pub df1: f64,
    pub c: f64,
    pub f2: f64,
    pub degenerate: bool,
}

impl WelchMoments {
    /// `(cdf, sf)` of the approximating distribution at `q`.
    pub fn cdf_pair(&self, q: f64) -> (f64, f64) {
        if self.f2.is_infinite() {
            chisq_cdf_pair(self.df1, q / self.c)
        } else {
            f_cdf_pair(self.df1, self.f2, q / self.c)
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        let base = if self.f2.is_infinite() {
            DistSpec::ChiSquare { df: self.df1 }
        } else {
            DistSpec::FisherF { d1: self.df1, d2: self.f2 }
        };
        Ok(self.c * base.quantile(p)?)
    }
}

/// `κ₁ = (K−1) + 2S`, `κ₂ = 2(K−1) + 14S` with `S = Σ wᵢ² gᵢ pᵢ²` evaluated
/// at τ², followed by the scaled F match.
pub fn welch_null_moments(ds: &Dataset, tau2: f64) -> Result<WelchMoments> {
    check_tau2(tau2)?;
    Ok(moments_from_sum(ds.k(), correction_sum(ds.v2(), ds.g(), tau2)))
}

pub(crate) fn moments_from_sum(k: usize, s: f64) -> WelchMoments {
    let d1 = (k - 1) as f64;
    welch_approx(d1 + 2.0 * s, 2.0 * d1 + 14.0 * s, k)
}

/// Match mean and variance of `c · F(K−1, f2)` to `(κ₁, κ₂)`.
///
/// With `d1 = K−1` and `r = κ₂/κ₁²`: `f2 = (4 r d1 + 2 d1 − 4)/(r d1 − 2)` and
/// `c = κ₁(f2 − 2)/f2`.
pub fn f_approx(kappa1: f64, kappa2: f64, k: usize) -> Result<(f64, f64)> {
    if !(kappa1 > 0.0 && kappa2 > 0.0) {
        return Err(Error::Parameter(format!(
            "moments must be positive, got ({kappa1}, {kappa2})"
        )));
    }
    if k < 2 {
        return Err(Error::InsufficientStudies(k));
    }
    let d1 = (k - 1) as f64;
    let r = kappa2 / (kappa1 * kappa1);
    let denom = r * d1 - 2.0;
    if !(denom > 0.0) {
        return Err(Error::DegenerateMatching(format!(
            "r·d1 = {} does not exceed 2",
            r * d1
        )));
    }
    let f2 = (4.0 * r * d1 + 2.0 * d1 - 4.0) / denom;
    if !(f2 > 4.0) || !f2.is_finite() {
        return Err(Error::DegenerateMatching(format!("f2 = {f2} must exceed 4")));
    }
    Ok((kappa1 * (f2 - 2.0) / f2, f2))
}

/// [`f_approx`] with the scaled chi-square fallback.
pub(crate) fn welch_approx(kappa1: f64, kappa2: f64, k: usize) -> WelchMoments {
    let df1 = (k - 1) as f64;
    match f_approx(kappa1, kappa2, k) {
        Ok((c, f2)) => WelchMoments { kappa1, kappa2, df1, c, f2, degenerate: false },
        Err(_) => WelchMoments {
            kappa1,
            kappa2,
            df1,
            c: kappa1 / df1,
            f2: f64::INFINITY,
            degenerate: true,
        },
    }
}

/// Approximate `E[Q]` under τ², with fixed-effect weights:
/// `(K−1) + 2 Σ wᵢ² gᵢ pᵢ² + τ²(W − W₂/W)`.
pub fn expected_q_alternative(ds: &Dataset, tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    let ctx = q_context(ds, 0.0)?;
    let s = correction_sum(ds.v2(), ds.g(), 0.0);
    Ok((ds.k() - 1) as f64 + 2.0 * s + tau2 * (ctx.w - ctx.w2 / ctx.w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        // n = 2 per arm, unit variances: g = 0.5 each, v2 = 1 each
        let s = |m| StudySummary { n_t: 2, mean_t: m, var_t: 1.0, n_c: 2, mean_c: 0.0, var_c: 1.0 };
        Dataset::new(vec![s(0.0), s(2.0)]).unwrap()
    }

    #[test]
    fn context_values() {
        let d = Dataset::from_effects(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let c = q_context(&d, 0.0).unwrap();
        assert_eq!(c.weights, vec![1.0, 1.0]);
        assert_eq!(c.w, 2.0);
        assert_eq!(c.p, vec![0.5, 0.5]);
        assert_eq!(q_context(&d, 1.0).unwrap().weights, vec![0.5, 0.5]);

        let d = Dataset::from_effects(&[0.0, 0.0], &[1.0, 3.0]).unwrap();
        let c = q_context(&d, 1.0).unwrap();
        assert_eq!(c.weights, vec![0.5, 0.25]);
        assert_eq!(c.w, 0.75);
        assert!((c.p[0] - 1.0 / 3.0).abs() < 1e-15 && (c.p[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(q_context(&d, -1.0).is_err());
    }

    #[test]
    fn q_values() {
        let d = Dataset::from_effects(&[1.0, 1.0], &[0.3, 2.0]).unwrap();
        assert_eq!(q_statistic(&d, 0.0).unwrap(), 0.0);
        let d = Dataset::from_effects(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(q_statistic(&d, 0.0).unwrap(), 2.0);
        assert_eq!(q_statistic(&d, 1.0).unwrap(), 1.0);
        assert_eq!(q_context(&d, 1.0).unwrap().q, 1.0);
    }

    #[test]
    fn null_moments_toy() {
        let m = welch_null_moments(&toy(), 0.0).unwrap();
        assert!((m.kappa1 - 1.5).abs() < 1e-15);
        assert!((m.kappa2 - 5.5).abs() < 1e-15);
        assert!((m.f2 - 17.5).abs() < 1e-12);
        assert!((m.c - 1.5 * 15.5 / 17.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_five_study_correction() {
        let s = StudySummary { n_t: 3, mean_t: 0.0, var_t: 2.0, n_c: 4, mean_c: 0.0, var_c: 1.0 };
        let d = Dataset::new(vec![s; 5]).unwrap();
        let w = 1.0 / d.v2()[0];
        let expect = 5.0 * w * w * d.g()[0] * 0.64;
        assert!((correction_sum(d.v2(), d.g(), 0.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn classical_limit_falls_back() {
        for k in [2usize, 5, 30] {
            let d1 = (k - 1) as f64;
            assert!(f_approx(d1, 2.0 * d1, k).is_err());
            let m = welch_approx(d1, 2.0 * d1, k);
            assert!(m.degenerate && m.f2.is_infinite());
            assert_eq!(m.c, 1.0);
        }
    }

    #[test]
    fn f_match_reproduces_moments() {
        for &(k1, k2, k) in &[(1.5, 5.5, 2usize), (4.3, 9.9, 5), (31.0, 72.0, 30)] {
            let (c, f2) = f_approx(k1, k2, k).unwrap();
            let d1 = (k - 1) as f64;
            let mean = c * f2 / (f2 - 2.0);
            let var = c * c * 2.0 * f2 * f2 * (d1 + f2 - 2.0) / (d1 * (f2 - 2.0).powi(2) * (f2 - 4.0));
            assert!(((mean - k1) / k1).abs() < 1e-12);
            assert!(((var - k2) / k2).abs() < 1e-12);
        }
    }

    #[test]
    fn alternative_expectation() {
        let d = toy();
        let k1 = welch_null_moments(&d, 0.0).unwrap().kappa1;
        assert!((expected_q_alternative(&d, 0.0).unwrap() - k1).abs() < 1e-15);
        assert!((expected_q_alternative(&d, 1.0).unwrap() - (k1 + 1.0)).abs() < 1e-15);
    }
}
