//! Confidence intervals for τ²: Q-profile, Welch-type profile, profile
//! likelihood, and the two generalised Q-profile intervals with exact
//! chi-square-mixture calibration.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chisq_mix::{chisq_mix_cdf, ChiSqMix};
use crate::dist::DistSpec;
use crate::eigen::quadratic_form_weights;
use crate::error::{Error, Result};
use crate::qstat::{correction_sum, moments_from_sum, q_fixed, q_value};
use crate::solve::{brent, expand_upper, RootOptions};
use crate::study::Dataset;
use crate::tau2::{reml_loglik, tau2_reml};

/// Upper search limit, relative to the largest within-study variance.
const CAP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tau2CiMethod {
    QP,
    WT,
    PL,
    BJ,
    J,
}

impl Tau2CiMethod {
    pub const ALL: [Tau2CiMethod; 5] = [
        Tau2CiMethod::QP,
        Tau2CiMethod::WT,
        Tau2CiMethod::PL,
        Tau2CiMethod::BJ,
        Tau2CiMethod::J,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tau2CiMethod::QP => "QP",
            Tau2CiMethod::WT => "WT",
            Tau2CiMethod::PL => "PL",
            Tau2CiMethod::BJ => "BJ",
            Tau2CiMethod::J => "J",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Tau2CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tau2Interval {
    pub method: Tau2CiMethod,
    pub lower: f64,
    /// `+∞` when the upper search hit its cap.
    pub upper: f64,
    pub level: f64,
    /// Lower bound set to zero because the data sit below the target quantile.
    pub lower_truncated: bool,
    /// Upper bound set to zero likewise.
    pub upper_truncated: bool,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

impl Tau2Interval {
    pub fn contains(&self, tau2: f64) -> bool {
        self.lower <= tau2 && tau2 <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub(crate) fn check_level(level: f64) -> Result<f64> {
    if level > 0.0 && level < 1.0 {
        Ok(1.0 - level)
    } else {
        Err(Error::Domain(format!("level must lie in (0, 1), got {level}")))
    }
}

/// Dispatch by method.
pub fn interval(ds: &Dataset, method: Tau2CiMethod, level: f64) -> Result<Tau2Interval> {
    match method {
        Tau2CiMethod::QP => ci_qprofile(ds, level),
        Tau2CiMethod::WT => ci_wt(ds, level),
        Tau2CiMethod::PL => ci_pl(ds, level),
        Tau2CiMethod::BJ => ci_bj(ds, level),
        Tau2CiMethod::J => ci_j(ds, level),
    }
}

/// One solved bound.
#[derive(Debug, Clone, Copy)]
struct Bound {
    value: f64,
    truncated: bool,
    converged: bool,
}

/// Where to look for the sign change of a bound equation.
enum Search {
    /// `h(hi) ≤ 0` is known analytically.
    Known(f64),
    /// Double from `start` until `h ≤ 0` or `cap` is passed.
    Expand { start: f64, cap: f64 },
}

/// Root of `h` on the half line, where `h > 0` just right of zero when the
/// bound is interior. A nonpositive `h(0)` truncates the bound to zero.
fn solve_bound<F: FnMut(f64) -> f64>(mut h: F, search: Search) -> Result<Bound> {
    let h0 = h(0.0);
    if h0.is_nan() {
        return Err(Error::NoConvergence { what: "bound equation undefined at 0".into(), achieved: f64::NAN });
    }
    if !(h0 > 0.0) {
        return Ok(Bound { value: 0.0, truncated: true, converged: true });
    }
    let (lo, f_lo, hi, f_hi) = match search {
        Search::Known(hi) => (0.0, h0, hi, h(hi)),
        Search::Expand { start, cap } => match expand_upper(&mut h, 0.0, h0, start.min(cap), cap) {
            Some(b) => (b.lo, b.f_lo, b.hi, b.f_hi),
            None => return Ok(Bound { value: f64::INFINITY, truncated: false, converged: true }),
        },
    };
    let root = brent(h, lo, hi, f_lo, f_hi, RootOptions::default())?;
    Ok(Bound { value: root.x.max(0.0), truncated: false, converged: root.converged })
}

fn assemble(method: Tau2CiMethod, level: f64, lo: Bound, up: Bound) -> Tau2Interval {
    let converged = lo.converged && up.converged;
    // Guard against roundoff crossing when both bounds nearly coincide.
    let upper = up.value.max(lo.value);
    Tau2Interval {
        method,
        lower: lo.value,
        upper,
        level,
        lower_truncated: lo.truncated,
        upper_truncated: up.truncated,
        converged,
        diagnostic: (!converged).then(|| "bound solver hit its iteration cap".to_string()),
    }
}

fn chisq_quantile(df: f64, p: f64) -> Result<f64> {
    DistSpec::ChiSquare { df }.quantile(p)
}

/// Q-profile: `Q(τ_L²) = χ²_{K−1; 1−α/2}` and `Q(τ_U²) = χ²_{K−1; α/2}`.
pub fn ci_qprofile(ds: &Dataset, level: f64) -> Result<Tau2Interval> {
    let alpha = check_level(level)?;
    let df = (ds.k() - 1) as f64;
    let (y, v2) = (ds.y(), ds.v2());
    let ss = ds.raw_ss();
    let bound = |target: f64| {
        // Q(τ²) < SS/τ², so τ² = SS/target is past the crossing.
        solve_bound(|t| q_value(y, v2, t) - target, Search::Known(ss / target))
    };
    let lo = bound(chisq_quantile(df, 1.0 - 0.5 * alpha)?)?;
    let up = bound(chisq_quantile(df, 0.5 * alpha)?)?;
    Ok(assemble(Tau2CiMethod::QP, level, lo, up))
}

/// Welch-type profile interval: Q(τ²) is referred to the scaled F
/// approximation whose moments are recomputed at every candidate τ².
pub fn ci_wt(ds: &Dataset, level: f64) -> Result<Tau2Interval> {
    let alpha = check_level(level)?;
    let k = ds.k();
    let df = (k - 1) as f64;
    let (y, v2, g) = (ds.y(), ds.v2(), ds.g());
    let ss = ds.raw_ss();
    let cap = CAP_FACTOR * ds.max_v2();
    let tail = |t: f64| moments_from_sum(k, correction_sum(v2, g, t)).cdf_pair(q_value(y, v2, t));

    // Lower: the observed Q is the 1 − α/2 point, i.e. sf = α/2.
    let start_lo = ss / chisq_quantile(df, 1.0 - 0.5 * alpha)?;
    let lo = solve_bound(|t| 0.5 * alpha - tail(t).1, Search::Expand { start: start_lo, cap })?;
    let start_up = ss / chisq_quantile(df, 0.5 * alpha)?;
    let up = solve_bound(|t| tail(t).0 - 0.5 * alpha, Search::Expand { start: start_up, cap })?;
    Ok(assemble(Tau2CiMethod::WT, level, lo, up))
}

/// Profile likelihood on the restricted likelihood: all τ² whose deviance
/// from the REML maximum is at most the χ²₁ critical value.
pub fn ci_pl(ds: &Dataset, level: f64) -> Result<Tau2Interval> {
    check_level(level)?;
    let reml = tau2_reml(ds)?;
    let top = reml.value;
    let lmax = reml_loglik(ds, top);
    let crit = chisq_quantile(1.0, level)?;
    let dev = |t: f64| 2.0 * (lmax - reml_loglik(ds, t));

    let lo = if top <= 0.0 {
        Bound { value: 0.0, truncated: true, converged: true }
    } else {
        let h0 = dev(0.0) - crit;
        if h0 <= 0.0 {
            Bound { value: 0.0, truncated: true, converged: true }
        } else {
            let r = brent(|t| dev(t) - crit, 0.0, top, h0, -crit, RootOptions::default())?;
            Bound { value: r.x, truncated: false, converged: r.converged }
        }
    };

    let cap = CAP_FACTOR * ds.max_v2();
    let start = (2.0 * top).max(ds.max_v2());
    let up = match expand_upper(|t| crit - dev(t), top, crit, start, cap.max(start)) {
        None => Bound { value: f64::INFINITY, truncated: false, converged: true },
        Some(b) => {
            let r = brent(|t| crit - dev(t), b.lo, b.hi, b.f_lo, b.f_hi, RootOptions::default())?;
            Bound { value: r.x, truncated: false, converged: r.converged }
        }
    };
    let mut out = assemble(Tau2CiMethod::PL, level, lo, up);
    if !reml.converged {
        out.converged = false;
        out.diagnostic = reml.diagnostic;
    }
    Ok(out)
}

/// Generalised Q-profile interval with fixed weights `a`.
///
/// `Q_a = Σ aᵢ(yᵢ − ȳ_a)²` is distributed as `Σ λⱼ(τ²) χ²₁`, where `λⱼ` are the
/// nonzero eigenvalues of `S^{½}(diag a − a aᵀ/A)S^{½}`, `S = diag(vᵢ² + τ²)`.
/// Its CDF at the observed value is decreasing in τ².
fn generalised_q_interval(ds: &Dataset, a: &[f64], method: Tau2CiMethod, level: f64) -> Result<Tau2Interval> {
    let alpha = check_level(level)?;
    let df = (ds.k() - 1) as f64;
    let v2 = ds.v2();
    let q_obs = q_fixed(ds.y(), a);

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let cdf_at = |t: f64| -> f64 {
        let s: Vec<f64> = v2.iter().map(|v| v + t).collect();
        let lam = quadratic_form_weights(a, &s);
        match ChiSqMix::unit_df(lam).and_then(|mix| chisq_mix_cdf(&mix, q_obs)) {
            Ok(p) => p,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };

    // Since S ⪰ τ² I, every λⱼ(τ²) ≥ τ² μ_min with μ_min the smallest nonzero
    // eigenvalue of the unscaled form, so P(Q_a ≤ q) ≤ F_{χ²(K−1)}(q/(τ² μ_min)).
    let mu_min = quadratic_form_weights(a, &vec![1.0; a.len()])[0];
    let known = |p: f64| -> Result<Search> { Ok(Search::Known(q_obs / (mu_min * chisq_quantile(df, p)?))) };

    let run = |target: f64, search: Search| {
        let r = solve_bound(|t| cdf_at(t) - target, search);
        match failure.borrow_mut().take() {
            Some(e) => Err(e),
            None => r,
        }
    };
    let lo = run(1.0 - 0.5 * alpha, known(1.0 - 0.5 * alpha)?)?;
    let up = run(0.5 * alpha, known(0.5 * alpha)?)?;
    Ok(assemble(method, level, lo, up))
}

/// Generalised Q-profile interval with inverse-variance weights `1/vᵢ²`.
pub fn ci_bj(ds: &Dataset, level: f64) -> Result<Tau2Interval> {
    let a: Vec<f64> = ds.v2().iter().map(|v| 1.0 / v).collect();
    generalised_q_interval(ds, &a, Tau2CiMethod::BJ, level)
}

/// Generalised Q-profile interval with reciprocal standard-error weights `1/vᵢ`.
pub fn ci_j(ds: &Dataset, level: f64) -> Result<Tau2Interval> {
    let a: Vec<f64> = ds.v2().iter().map(|v| 1.0 / v.sqrt()).collect();
    generalised_q_interval(ds, &a, Tau2CiMethod::J, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::StudySummary;
    use crate::tau2::{tau2_mp, tau2_reml};

    fn fx(y: &[f64], v2: &[f64]) -> Dataset {
        Dataset::from_effects(y, v2).unwrap()
    }

    #[test]
    fn qp_double_truncation() {
        // Q(0) tiny: below the α/2 point of χ²₂.
        let d = fx(&[0.0, 0.01, 0.02], &[1.0; 3]);
        let ci = ci_qprofile(&d, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (0.0, 0.0));
        assert!(ci.lower_truncated && ci.upper_truncated);
    }

    #[test]
    fn qp_two_study_closed_form() {
        // Q(τ²) = 2/(1 + τ²) for y = (0, 2), v² = (1, 1).
        let d = fx(&[0.0, 2.0], &[1.0, 1.0]);
        let ci = ci_qprofile(&d, 0.95).unwrap();
        let hi_q = chisq_quantile(1.0, 0.975).unwrap();
        let lo_q = chisq_quantile(1.0, 0.025).unwrap();
        assert!(ci.lower_truncated); // 2 < 5.02
        assert!((ci.upper - (2.0 / lo_q - 1.0)).abs() < 1e-8 * ci.upper);
        assert!(hi_q > 2.0);
        let mp = tau2_mp(&d).unwrap().value;
        assert!(ci.contains(mp));
    }

    #[test]
    fn wt_reduces_to_qp_without_correction() {
        let d = fx(&[0.3, 2.1, -1.0, 1.4, 3.3], &[0.5, 0.8, 1.1, 0.4, 0.9]);
        let a = ci_qprofile(&d, 0.95).unwrap();
        let b = ci_wt(&d, 0.95).unwrap();
        assert!((a.lower - b.lower).abs() < 1e-9 * (1.0 + a.lower), "{a:?} {b:?}");
        assert!((a.upper - b.upper).abs() < 1e-9 * (1.0 + a.upper), "{a:?} {b:?}");
    }

    #[test]
    fn pl_contains_reml_and_hits_critical_value() {
        let d = fx(&[0.3, 2.1, -1.0, 1.4, 3.3], &[0.5, 0.8, 1.1, 0.4, 0.9]);
        let ci = ci_pl(&d, 0.95).unwrap();
        let top = tau2_reml(&d).unwrap().value;
        assert!(ci.contains(top));
        let crit = chisq_quantile(1.0, 0.95).unwrap();
        let lmax = reml_loglik(&d, top);
        for b in [ci.lower, ci.upper] {
            if b > 0.0 {
                assert!((2.0 * (lmax - reml_loglik(&d, b)) - crit).abs() < 1e-6);
            }
        }
        let flat = ci_pl(&fx(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.95).unwrap();
        assert_eq!(flat.lower, 0.0);
    }

    #[test]
    fn bj_equal_variances_is_qp() {
        let d = fx(&[0.3, 2.1, -1.0, 1.4, 3.3], &[0.7; 5]);
        let a = ci_qprofile(&d, 0.95).unwrap();
        let b = ci_bj(&d, 0.95).unwrap();
        let j = ci_j(&d, 0.95).unwrap();
        for (x, y) in [(a.lower, b.lower), (a.upper, b.upper), (b.lower, j.lower), (b.upper, j.upper)] {
            assert!((x - y).abs() < 1e-6 * (1.0 + x), "{x} vs {y}");
        }
    }

    #[test]
    fn nested_levels() {
        let s = |m, v| StudySummary { n_t: 6, mean_t: m, var_t: v, n_c: 5, mean_c: 0.0, var_c: 1.0 };
        let d = Dataset::new(vec![s(0.2, 1.0), s(1.9, 2.0), s(-0.7, 0.6), s(1.2, 1.4)]).unwrap();
        for m in Tau2CiMethod::ALL {
            let a = interval(&d, m, 0.95).unwrap();
            let b = interval(&d, m, 0.99).unwrap();
            assert!(b.lower <= a.lower + 1e-12 && a.upper <= b.upper + 1e-9, "{m}: {a:?} {b:?}");
        }
    }

    #[test]
    fn rejects_bad_level() {
        let d = fx(&[0.0, 1.0], &[1.0, 1.0]);
        assert!(ci_qprofile(&d, 1.0).is_err());
        assert!(ci_bj(&d, 0.0).is_err());
    }
}
