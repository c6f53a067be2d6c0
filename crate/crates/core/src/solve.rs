//! One-dimensional root finding: Brent's method plus bracket expansion on the
//! half line, which is all the profile and moment estimators need.

use crate::error::{Error, Result};

/// Stopping rules for [`brent`].
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub xtol: f64,
    pub rtol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            xtol: 1e-300,
            rtol: 4.0 * f64::EPSILON,
            max_iter: 200,
        }
    }
}

impl RootOptions {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `x` is then the best iterate.
    pub converged: bool,
}

/// Brent's method on a sign-changing bracket `[a, b]` with known endpoint values.
///
/// Errors only when the bracket is invalid or the objective yields NaN.
pub fn brent<F>(mut f: F, a: f64, b: f64, fa: f64, fb: f64, opts: RootOptions) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let (mut xpre, mut xcur, mut fpre, mut fcur) = (a, b, fa, fb);
    let (mut xblk, mut fblk) = (0.0, 0.0);
    let (mut spre, mut scur) = (0.0, 0.0);

    if fpre == 0.0 {
        return Ok(Root { x: xpre, fx: 0.0, iterations: 0, converged: true });
    }
    if fcur == 0.0 {
        return Ok(Root { x: xcur, fx: 0.0, iterations: 0, converged: true });
    }
    if fpre.is_nan() || fcur.is_nan() || fpre.signum() == fcur.signum() {
        return Err(Error::NoConvergence {
            what: format!("root not bracketed on [{a}, {b}] (f = {fa}, {fb})"),
            achieved: f64::INFINITY,
        });
    }

    for iter in 1..=opts.max_iter {
        if fpre != 0.0 && fcur != 0.0 && fpre.signum() != fcur.signum() {
            xblk = xpre;
            fblk = fpre;
            spre = xcur - xpre;
            scur = spre;
        }
        if fblk.abs() < fcur.abs() {
            xpre = xcur;
            xcur = xblk;
            xblk = xpre;
            fpre = fcur;
            fcur = fblk;
            fblk = fpre;
        }

        let delta = 0.5 * (opts.xtol + opts.rtol * xcur.abs());
        let sbis = 0.5 * (xblk - xcur);
        if fcur == 0.0 || sbis.abs() < delta {
            return Ok(Root { x: xcur, fx: fcur, iterations: iter, converged: true });
        }

        if spre.abs() > delta && fcur.abs() < fpre.abs() {
            let stry = if xpre == xblk {
                // secant
                -fcur * (xcur - xpre) / (fcur - fpre)
            } else {
                // inverse quadratic interpolation
                let dpre = (fpre - fcur) / (xpre - xcur);
                let dblk = (fblk - fcur) / (xblk - xcur);
                -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            };
            if 2.0 * stry.abs() < spre.abs().min(3.0 * sbis.abs() - delta) {
                spre = scur;
                scur = stry;
            } else {
                spre = sbis;
                scur = sbis;
            }
        } else {
            spre = sbis;
            scur = sbis;
        }

        xpre = xcur;
        fpre = fcur;
        if scur.abs() > delta {
            xcur += scur;
        } else {
            xcur += if sbis > 0.0 { delta } else { -delta };
        }
        fcur = f(xcur);
        if fcur.is_nan() {
            return Err(Error::NoConvergence {
                what: format!("objective returned NaN at {xcur}"),
                achieved: (xblk - xcur).abs(),
            });
        }
    }
    Ok(Root {
        x: xcur,
        fx: fcur,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// A sign-changing bracket on the half line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub f_lo: f64,
    pub hi: f64,
    pub f_hi: f64,
}

/// Find `hi` with `h(hi) <= 0`, given `h(lo) > 0`, by doubling from `start`.
///
/// Returns `None` when `cap` is exceeded before the sign changes. The last
/// point with `h > 0` is kept as the lower end, so the bracket stays tight.
pub fn expand_upper<F>(mut h: F, lo: f64, f_lo: f64, start: f64, cap: f64) -> Option<Bracket>
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(f_lo > 0.0);
    let (mut lo, mut f_lo) = (lo, f_lo);
    let mut hi = start.max(lo * 2.0).max(f64::MIN_POSITIVE);
    loop {
        if hi > cap {
            hi = cap;
        }
        let f_hi = h(hi);
        if f_hi <= 0.0 {
            return Some(Bracket { lo, f_lo, hi, f_hi });
        }
        if hi >= cap || f_hi.is_nan() {
            return None;
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
    }
}
