//! Point estimators of the between-study variance τ².

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstat::{correction_sum, q_context, q_fixed, q_value};
use crate::solve::{brent, expand_upper, RootOptions};
use crate::study::Dataset;

/// REML iteration cap.
const REML_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tau2Method {
    DL,
    REML,
    MP,
    J,
    WT,
    CDL,
}

impl Tau2Method {
    pub const ALL: [Tau2Method; 6] = [
        Tau2Method::DL,
        Tau2Method::REML,
        Tau2Method::MP,
        Tau2Method::J,
        Tau2Method::WT,
        Tau2Method::CDL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tau2Method::DL => "DL",
            Tau2Method::REML => "REML",
            Tau2Method::MP => "MP",
            Tau2Method::J => "J",
            Tau2Method::WT => "WT",
            Tau2Method::CDL => "CDL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Tau2Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tau2Result {
    pub method: Tau2Method,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The estimate sits on the zero boundary.
    pub truncated: bool,
    pub diagnostic: Option<String>,
}

impl Tau2Result {
    fn closed(method: Tau2Method, raw: f64) -> Self {
        Tau2Result {
            method,
            value: raw.max(0.0),
            converged: true,
            iterations: 0,
            truncated: !(raw > 0.0),
            diagnostic: None,
        }
    }
}

/// Dispatch by method.
pub fn estimate(ds: &Dataset, method: Tau2Method) -> Result<Tau2Result> {
    match method {
        Tau2Method::DL => tau2_dl(ds),
        Tau2Method::REML => tau2_reml(ds),
        Tau2Method::MP => tau2_mp(ds),
        Tau2Method::J => tau2_j(ds),
        Tau2Method::WT => tau2_wt(ds),
        Tau2Method::CDL => tau2_cdl(ds),
    }
}

fn moment_estimate(ds: &Dataset, correction: f64, method: Tau2Method) -> Result<Tau2Result> {
    let ctx = q_context(ds, 0.0)?;
    let k1 = (ds.k() - 1) as f64;
    let raw = (ctx.q - k1 - correction) / (ctx.w - ctx.w2 / ctx.w);
    Ok(Tau2Result::closed(method, raw))
}

/// DerSimonian–Laird: `(Q(0) − (K−1)) / (W − W₂/W)`, truncated at zero.
pub fn tau2_dl(ds: &Dataset) -> Result<Tau2Result> {
    moment_estimate(ds, 0.0, Tau2Method::DL)
}

/// Corrected DL: the numerator also subtracts `2 Σ wᵢ² gᵢ pᵢ²`.
pub fn tau2_cdl(ds: &Dataset) -> Result<Tau2Result> {
    let s = correction_sum(ds.v2(), ds.g(), 0.0);
    moment_estimate(ds, 2.0 * s, Tau2Method::CDL)
}

/// Jackson's moment estimator with fixed weights `aᵢ = 1/vᵢ`.
pub fn tau2_j(ds: &Dataset) -> Result<Tau2Result> {
    let a: Vec<f64> = ds.v2().iter().map(|v| 1.0 / v.sqrt()).collect();
    let aa: f64 = a.iter().sum();
    let qa = q_fixed(ds.y(), &a);
    let (mut base, mut slope) = (0.0, 0.0);
    for (ai, vi) in a.iter().zip(ds.v2()) {
        let lev = ai * (1.0 - ai / aa);
        base += lev * vi;
        slope += lev;
    }
    Ok(Tau2Result::closed(Tau2Method::J, (qa - base) / slope))
}

/// Solve `h(τ²) = 0` for a function positive at 0 and negative at `hi`.
fn solve_decreasing<F>(method: Tau2Method, h: F, h0: f64, hi: f64, max_iter: usize) -> Result<Tau2Result>
where
    F: FnMut(f64) -> f64,
{
    let mut h = h;
    if !(h0 > 0.0) {
        return Ok(Tau2Result::closed(method, 0.0));
    }
    let h_hi = h(hi);
    let root = brent(&mut h, 0.0, hi, h0, h_hi, RootOptions::default().with_max_iter(max_iter))?;
    Ok(Tau2Result {
        method,
        value: root.x.max(0.0),
        converged: root.converged,
        iterations: root.iterations,
        truncated: false,
        diagnostic: (!root.converged).then(|| {
            format!("iteration cap {max_iter} reached, residual {:e}", root.fx)
        }),
    })
}

/// Upper bracket for `Q(τ²) = target` with `target ≥ K−1`: since
/// `Q(τ²) < Σ(yᵢ − ȳ)²/τ²`, any `τ² ≥ SS/(K−1)` lies past the root.
fn moment_upper_bracket(ds: &Dataset) -> f64 {
    ds.raw_ss() / (ds.k() - 1) as f64
}

/// Mandel–Paule: `Q(τ²) = K − 1`.
pub fn tau2_mp(ds: &Dataset) -> Result<Tau2Result> {
    let (y, v2) = (ds.y(), ds.v2());
    let target = (ds.k() - 1) as f64;
    let h = |t: f64| q_value(y, v2, t) - target;
    solve_decreasing(Tau2Method::MP, h, h(0.0), moment_upper_bracket(ds), 200)
}

/// Welch-type moment estimator: `Q(τ²) = κ₁(τ²)`, with the correction
/// weights re-evaluated at each τ².
pub fn tau2_wt(ds: &Dataset) -> Result<Tau2Result> {
    let (y, v2, g) = (ds.y(), ds.v2(), ds.g());
    let d1 = (ds.k() - 1) as f64;
    let h = |t: f64| q_value(y, v2, t) - d1 - 2.0 * correction_sum(v2, g, t);
    solve_decreasing(Tau2Method::WT, h, h(0.0), moment_upper_bracket(ds), 200)
}

/// Restricted log-likelihood up to a constant:
/// `−½ Σ log(vᵢ²+τ²) − ½ log Σwᵢ − ½ Q(τ²)`.
pub fn reml_loglik(ds: &Dataset, tau2: f64) -> f64 {
    let (mut w, mut wy, mut logs) = (0.0, 0.0, 0.0);
    for (y, v) in ds.y().iter().zip(ds.v2()) {
        let s = v + tau2;
        logs += s.ln();
        w += 1.0 / s;
        wy += y / s;
    }
    let m = wy / w;
    let q: f64 = ds.y().iter().zip(ds.v2()).map(|(y, v)| (y - m) * (y - m) / (v + tau2)).sum();
    -0.5 * (logs + w.ln() + q)
}

/// `dℓ_R/dτ² = ½[Σ wᵢ²(yᵢ − μ̂)² − W + W₂/W]`.
pub fn reml_score(ds: &Dataset, tau2: f64) -> f64 {
    let (mut w, mut w2, mut wy) = (0.0, 0.0, 0.0);
    for (y, v) in ds.y().iter().zip(ds.v2()) {
        let wi = 1.0 / (v + tau2);
        w += wi;
        w2 += wi * wi;
        wy += wi * y;
    }
    let m = wy / w;
    let r: f64 = ds
        .y()
        .iter()
        .zip(ds.v2())
        .map(|(y, v)| {
            let wi = 1.0 / (v + tau2);
            wi * wi * (y - m) * (y - m)
        })
        .sum();
    0.5 * (r - w + w2 / w)
}

/// Restricted maximum likelihood.
///
/// The score is positive at 0 unless the boundary is the maximiser, and is
/// negative once `τ² > max(4 SS/(K−1), max vᵢ²)`; Brent then keeps a
/// (+, −) bracket and so converges to a local maximum.
pub fn tau2_reml(ds: &Dataset) -> Result<Tau2Result> {
    let s0 = reml_score(ds, 0.0);
    if !(s0 > 0.0) {
        return Ok(Tau2Result::closed(Tau2Method::REML, 0.0));
    }
    let start = (4.0 * moment_upper_bracket(ds)).max(ds.max_v2()) * 1.01;
    let score = |t: f64| reml_score(ds, t);
    let Some(br) = expand_upper(score, 0.0, s0, start, start * 1e6) else {
        return Err(Error::NoConvergence {
            what: "REML score stays positive".into(),
            achieved: f64::INFINITY,
        });
    };
    let root = brent(
        score,
        br.lo,
        br.hi,
        br.f_lo,
        br.f_hi,
        RootOptions::default().with_max_iter(REML_MAX_ITER),
    )?;
    Ok(Tau2Result {
        method: Tau2Method::REML,
        value: root.x.max(0.0),
        converged: root.converged,
        iterations: root.iterations,
        truncated: false,
        diagnostic: (!root.converged).then(|| {
            format!("iteration cap {REML_MAX_ITER} reached, score {:e}", root.fx)
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::StudySummary;

    fn fx(y: &[f64], v2: &[f64]) -> Dataset {
        Dataset::from_effects(y, v2).unwrap()
    }

    fn toy() -> Dataset {
        let s = |m| StudySummary { n_t: 2, mean_t: m, var_t: 1.0, n_c: 2, mean_c: 0.0, var_c: 1.0 };
        Dataset::new(vec![s(0.0), s(2.0)]).unwrap()
    }

    #[test]
    fn dl_hand_values() {
        assert_eq!(tau2_dl(&fx(&[0.0, 1.0, 2.0], &[1.0; 3])).unwrap().value, 0.0);
        assert_eq!(tau2_dl(&fx(&[0.0, 2.0], &[1.0, 1.0])).unwrap().value, 1.0);
        let r = tau2_dl(&fx(&[3.0, 3.0, 3.0], &[1.0, 2.0, 0.5])).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.truncated);
    }

    #[test]
    fn cdl_toy() {
        let d = toy();
        assert!((tau2_cdl(&d).unwrap().value - 0.5).abs() < 1e-14);
        assert_eq!(tau2_dl(&d).unwrap().value, 1.0);
        let r = tau2_cdl(&fx(&[0.0, 0.5], &[1.0, 1.0]).with_g(&[0.5, 0.5]).unwrap()).unwrap();
        assert!(r.truncated && r.value == 0.0);
    }

    #[test]
    fn mp_hand_values() {
        let r = tau2_mp(&fx(&[0.0, 2.0], &[1.0, 1.0])).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(r.converged && !r.truncated);
        let r = tau2_mp(&fx(&[0.0, 0.5, 1.0], &[1.0; 3])).unwrap();
        assert!(r.truncated && r.value == 0.0);
    }

    #[test]
    fn wt_toy_solves_its_equation() {
        let d = toy();
        let r = tau2_wt(&d).unwrap();
        let k1 = 1.0 + 2.0 * correction_sum(d.v2(), d.g(), r.value);
        assert!((2.0 / (1.0 + r.value) - k1).abs() < 1e-12);
        assert!(r.value > 0.0 && r.value < 1.0);
    }

    #[test]
    fn reml_hand_cases() {
        let r = tau2_reml(&fx(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(r.value, 0.0);
        // K = 2, equal variances: REML solves (y1 − y2)²/2 = v² + τ², i.e. τ² = 1.
        let d = fx(&[0.0, 2.0], &[1.0, 1.0]);
        let r = tau2_reml(&d).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!(reml_score(&d, r.value).abs() < 1e-12);
    }

    #[test]
    fn j_reduces_and_matches_hand() {
        let d = fx(&[0.1, 1.7, -0.4, 2.2], &[0.7; 4]);
        assert!((tau2_j(&d).unwrap().value - tau2_dl(&d).unwrap().value).abs() < 1e-12);
        // y = (0, 2), v2 = (1, 4): a = (1, ½), A = 3/2, ȳ_a = 2/3,
        // Q_a = 4/9 + ½·16/9 = 4/3, base = ⅓ + 4·⅓ = 5/3, slope = ⅓ + ⅓ = ⅔
        // raw = (4/3 − 5/3)/(2/3) < 0
        let r = tau2_j(&fx(&[0.0, 2.0], &[1.0, 4.0])).unwrap();
        assert!(r.truncated && r.value == 0.0);
        // y = (0, 4): Q_a = 16/3, raw = (16/3 − 5/3)/(2/3) = 11/2
        let r = tau2_j(&fx(&[0.0, 4.0], &[1.0, 4.0])).unwrap();
        assert!((r.value - 5.5).abs() < 1e-12);
        assert_eq!(tau2_j(&fx(&[2.0, 2.0], &[1.0, 4.0])).unwrap().value, 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Tau2Method::ALL {
            assert_eq!(Tau2Method::parse(m.name()), Some(m));
        }
        assert_eq!(Tau2Method::parse("reml"), Some(Tau2Method::REML));
        assert_eq!(Tau2Method::parse("XX"), None);
    }
}
