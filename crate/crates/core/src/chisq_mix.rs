//! Distribution of a positive linear combination of independent chi-square
//! variables, `Σ λⱼ χ²(hⱼ)`.
//!
//! The primary route is Ruben's expansion in chi-square CDFs of increasing
//! degrees of freedom, taken about the smallest weight so that every mixing
//! coefficient is nonnegative; this gives a rigorous truncation bound. When
//! the series would need too many terms (weights spread over many orders of
//! magnitude) the CDF falls back to Imhof's inversion integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma_inc_pair, ln_poisson_term};

/// Target absolute error of the series, and of the integral fallback.
const SERIES_TOL: f64 = 1e-10;
const INTEGRAL_TOL: f64 = 1e-8;
const MAX_SERIES_TERMS: usize = 20_000;

/// Weights and degrees of freedom of a chi-square mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSqMix {
    coefficients: Vec<f64>,
    dfs: Vec<f64>,
}

impl ChiSqMix {
    pub fn new(coefficients: Vec<f64>, dfs: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Parameter("mixture needs at least one term".into()));
        }
        if coefficients.len() != dfs.len() {
            return Err(Error::Parameter(format!(
                "{} coefficients but {} degrees of freedom",
                coefficients.len(),
                dfs.len()
            )));
        }
        for (&l, &h) in coefficients.iter().zip(&dfs) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Parameter(format!("mixture weight must be > 0, got {l}")));
            }
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("mixture df must be > 0, got {h}")));
            }
        }
        Ok(ChiSqMix { coefficients, dfs })
    }

    /// Every term on one degree of freedom.
    pub fn unit_df(coefficients: Vec<f64>) -> Result<Self> {
        let dfs = vec![1.0; coefficients.len()];
        Self::new(coefficients, dfs)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn dfs(&self) -> &[f64] {
        &self.dfs
    }

    pub fn mean(&self) -> f64 {
        self.coefficients.iter().zip(&self.dfs).map(|(l, h)| l * h).sum()
    }

    /// Terms with equal weights merged (their degrees of freedom add).
    fn merged(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pairs: Vec<(f64, f64)> =
            self.coefficients.iter().copied().zip(self.dfs.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut lam: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut dfs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (l, h) in pairs {
            match lam.last() {
                Some(&prev) if (l - prev).abs() <= 1e-14 * l => *dfs.last_mut().unwrap() += h,
                _ => {
                    lam.push(l);
                    dfs.push(h);
                }
            }
        }
        (lam, dfs)
    }
}

/// `P(Σ λⱼ χ²(hⱼ) ≤ x)`.
pub fn chisq_mix_cdf(mix: &ChiSqMix, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("x is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (lam, dfs) = mix.merged();
    if let Some(p) = ruben(&lam, &dfs, x, SERIES_TOL, MAX_SERIES_TERMS) {
        return Ok(p);
    }
    imhof(&lam, &dfs, x, INTEGRAL_TOL)
}

/// Ruben's series about `β = min λ`; `None` if the term budget runs out.
///
/// `P = Σₖ cₖ F_{m+2k}(x/β)` with `c₀ = Π(β/λⱼ)^{hⱼ/2}`,
/// `k cₖ = Σ_{r<k} g_{k−r} c_r`, `g_k = ½ Σ hⱼ γⱼᵏ`, `γⱼ = 1 − β/λⱼ`.
fn ruben(lam: &[f64], dfs: &[f64], x: f64, tol: f64, max_terms: usize) -> Option<f64> {
    let beta = lam[0];
    let m: f64 = dfs.iter().sum();
    let y = x / beta;
    let half_y = 0.5 * y;

    let ln_c0: f64 = lam.iter().zip(dfs).map(|(l, h)| 0.5 * h * (beta / l).ln()).sum();
    let c0 = ln_c0.exp();
    if c0 < 1e-280 {
        return None;
    }
    let gamma: Vec<f64> = lam.iter().map(|l| 1.0 - beta / l).collect();
    let mut gpow = gamma.clone();

    let mut c = Vec::with_capacity(64);
    let mut g = Vec::with_capacity(64);
    c.push(c0);
    g.push(0.0); // unused g_0

    let (mut f_d, _) = gamma_inc_pair(0.5 * m, half_y);
    let mut d = m;
    let mut sum_c = c0;
    let mut p = c0 * f_d;

    for k in 1..=max_terms {
        // F_{d+2}(y) = F_d(y) − e^{−y/2}(y/2)^{d/2}/Γ(d/2 + 1)
        f_d = (f_d - ln_poisson_term(half_y, 0.5 * d).exp()).max(0.0);
        d += 2.0;
        // Remaining mass times the largest remaining CDF bounds the tail.
        if (1.0 - sum_c).max(0.0) * f_d < tol {
            return Some(p.clamp(0.0, 1.0));
        }
        let gk: f64 = gpow.iter().zip(dfs).map(|(gp, h)| 0.5 * h * gp).sum();
        for (gp, gm) in gpow.iter_mut().zip(&gamma) {
            *gp *= gm;
        }
        g.push(gk);
        let ck = (0..k).map(|r| g[k - r] * c[r]).sum::<f64>() / k as f64;
        c.push(ck);
        sum_c += ck;
        p += ck * f_d;
    }
    None
}

/// Imhof's inversion integral,
/// `P(Q > x) = ½ + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du`.
fn imhof(lam: &[f64], dfs: &[f64], x: f64, tol: f64) -> Result<f64> {
    let k: f64 = 0.5 * dfs.iter().sum::<f64>();
    let ln_prod: f64 = lam.iter().zip(dfs).map(|(l, h)| 0.5 * h * l.ln()).sum();
    // Truncation bound: 1 / (π k U^k Π λⱼ^{hⱼ/2}) ≤ tol/2.
    let ln_u = (-(std::f64::consts::PI * k * 0.5 * tol).ln() - ln_prod) / k;
    let upper = ln_u.exp();
    if !upper.is_finite() {
        return Err(Error::NoConvergence {
            what: "Imhof truncation point overflowed".into(),
            achieved: f64::INFINITY,
        });
    }
    let integrand = |u: f64| {
        if u == 0.0 {
            // limit of sin θ / (u ρ) as u → 0
            return 0.5 * (lam.iter().zip(dfs).map(|(l, h)| l * h).sum::<f64>() - x);
        }
        let mut theta = -0.5 * x * u;
        let mut ln_rho = 0.0;
        for (l, h) in lam.iter().zip(dfs) {
            theta += 0.5 * h * (l * u).atan();
            ln_rho += 0.25 * h * (l * l * u * u).ln_1p();
        }
        theta.sin() / (u * ln_rho.exp())
    };

    let lmax = lam.iter().cloned().fold(0.0, f64::max);
    let mut a = 0.0;
    let mut b = (1.0 / lmax.max(x)).min(upper);
    let mut total = 0.0;
    let mut err = 0.0;
    let n_seg = ((upper / b).log2().ceil() as usize).max(1);
    let seg_tol = 0.5 * tol / n_seg as f64;
    while a < upper {
        let (v, e) = adaptive_gk15(&integrand, a, b, seg_tol, 5_000);
        total += v;
        err += e;
        a = b;
        b = (2.0 * b).min(upper);
    }
    let err = err / std::f64::consts::PI;
    if err > 1e-6 {
        return Err(Error::NoConvergence {
            what: "Imhof integral".into(),
            achieved: err,
        });
    }
    let sf = 0.5 + total / std::f64::consts::PI;
    Ok((1.0 - sf).clamp(0.0, 1.0))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel and its embedded 7-point Gauss error estimate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WK[7] * fc;
    let mut gauss = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WK[i] * s;
        if i % 2 == 1 {
            gauss += GK_WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod, bisecting the worst panel until the summed error
/// estimate drops below `tol` or `max_panels` is reached.
fn adaptive_gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_panels: usize) -> (f64, f64) {
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let (mut total, mut err) = (v, e);
    while err > tol && panels.len() < max_panels {
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = gk15(f, pa, mid);
        let (v2, e2) = gk15(f, mid, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
    (total, err.max(0.0))
}
