//! Special functions backing the distribution kernel: log-gamma, log-beta,
//! regularized incomplete gamma and beta, and the standard normal quantile.
//!
//! All routines work in `f64` and assume arguments have been validated by the
//! caller; out-of-domain inputs yield `NaN`.

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = f64::EPSILON;
const TINY: f64 = 1e-300;

/// Iteration cap shared by the series and continued fractions.
const MAX_ITER: usize = 20_000;

/// Stirling series remainder: ln Γ(z) − [(z − ½) ln z − z + ½ ln 2π], for z ≥ 10.
fn stirling_tail(z: f64) -> f64 {
    // B_{2k} / (2k (2k − 1)), k = 1..8
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let z2 = 1.0 / (z * z);
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * z2 + c;
    }
    acc / z
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_tail(x);
    }
    // Shift up into the Stirling range: Γ(x) = Γ(x + n) / (x (x + 1) ... (x + n − 1)).
    let mut z = x;
    let mut prod = 1.0;
    while z < 10.0 {
        prod *= z;
        z += 1.0;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + stirling_tail(z) - prod.ln()
}

/// ln Γ(a + b) − ln Γ(b), computed without cancellation when `b` is large.
fn ln_gamma_ratio(a: f64, b: f64) -> f64 {
    if b < 10.0 {
        return ln_gamma(a + b) - ln_gamma(b);
    }
    a * b.ln() + (a + b - 0.5) * (a / b).ln_1p() - a + stirling_tail(a + b) - stirling_tail(b)
}

/// Natural log of the beta function B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    if !(a > 0.0 && b > 0.0) {
        return f64::NAN;
    }
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    if large < 10.0 {
        return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    }
    if small < 10.0 {
        return ln_gamma(small) - ln_gamma_ratio(small, large);
    }
    let s = small + large;
    LN_SQRT_2PI - 0.5 * large.ln() + (small - 0.5) * (small / s).ln() + large * (-small / s).ln_1p()
        + stirling_tail(small)
        + stirling_tail(large)
        - stirling_tail(s)
}

/// Regularized incomplete gamma functions `(P(a, x), Q(a, x))`.
pub fn gamma_inc_pair(a: f64, x: f64) -> (f64, f64) {
    if !(a > 0.0) || x.is_nan() || x < 0.0 {
        return (f64::NAN, f64::NAN);
    }
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let ln_front = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum * ln_front.exp()).min(1.0);
        (p, 1.0 - p)
    } else {
        // Modified Lentz on the continued fraction for Q.
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (ln_front.exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

/// Continued fraction for the incomplete beta function (Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `(I_x(a, b), 1 − I_x(a, b))`.
///
/// `y` must equal `1 − x`; passing it separately lets callers supply a
/// complement computed without cancellation.
pub fn beta_inc_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if !(a > 0.0 && b > 0.0) || x.is_nan() || y.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let (ln_x, ln_y) = if x < 0.5 {
        (x.ln(), (-x).ln_1p())
    } else {
        ((-y).ln_1p(), y.ln())
    };
    let ln_front = a * ln_x + b * ln_y - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let i = (ln_front.exp() * beta_cf(a, b, x) / a).min(1.0);
        (i, 1.0 - i)
    } else {
        let j = (ln_front.exp() * beta_cf(b, a, y) / b).min(1.0);
        (1.0 - j, j)
    }
}

/// Standard normal CDF and survival function `(Φ(x), 1 − Φ(x))`.
pub fn normal_cdf_pair(x: f64) -> (f64, f64) {
    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let z = x / std::f64::consts::SQRT_2;
    // erfc(|z|) = Q(1/2, z^2)
    let (p, q) = gamma_inc_pair(0.5, z * z);
    let tail = 0.5 * q;
    if x < 0.0 {
        (tail, 0.5 + 0.5 * p)
    } else {
        (0.5 + 0.5 * p, tail)
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal quantile: Wichura's AS 241 followed by one Newton step.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return match p {
            p if p == 0.0 => f64::NEG_INFINITY,
            p if p == 1.0 => f64::INFINITY,
            _ => f64::NAN,
        };
    }
    let q = p - 0.5;
    let x = if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        q * (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            / (((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
                + 3.930_789_580_009_271e4)
                * r
                + 2.121_379_430_158_659_7e4)
                * r
                + 5.394_196_021_424_751e3)
                * r
                + 6.871_870_074_920_579e2)
                * r
                + 4.231_333_070_160_091e1)
                * r
                + 1.0)
    } else {
        let mut r = if q < 0.0 { p } else { 1.0 - p };
        r = (-r.ln()).sqrt();
        let v = if r <= 5.0 {
            let r = r - 1.6;
            (((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
                + 2.417_807_251_774_506e-1)
                * r
                + 1.270_458_252_452_368_4)
                * r
                + 3.647_848_324_763_204_5)
                * r
                + 5.769_497_221_460_691)
                * r
                + 4.630_337_846_156_546)
                * r
                + 1.423_437_110_749_683_5)
                / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                    + 1.519_866_656_361_645_7e-2)
                    * r
                    + 1.481_039_764_274_800_8e-1)
                    * r
                    + 6.897_673_349_851e-1)
                    * r
                    + 1.676_384_830_183_803_8)
                    * r
                    + 2.053_191_626_637_759)
                    * r
                    + 1.0)
        } else {
            let r = r - 5.0;
            (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
                + 1.242_660_947_388_078_4e-3)
                * r
                + 2.653_218_952_657_612_4e-2)
                * r
                + 2.965_605_718_285_048_7e-1)
                * r
                + 1.784_826_539_917_291_3)
                * r
                + 5.463_784_911_164_114)
                * r
                + 6.657_904_643_501_103)
                / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                    + 1.846_318_317_510_054_8e-5)
                    * r
                    + 7.868_691_311_456_133e-4)
                    * r
                    + 1.487_536_129_085_061_5e-2)
                    * r
                    + 1.369_298_809_227_358e-1)
                    * r
                    + 5.998_322_065_558_88e-1)
                    * r
                    + 1.0)
        };
        if q < 0.0 {
            -v
        } else {
            v
        }
    };
    // Polish against the incomplete-gamma CDF.
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        let (cdf, sf) = normal_cdf_pair(x);
        let resid = if p < 0.5 { cdf - p } else { (1.0 - p) - sf };
        x - resid / pdf
    } else {
        x
    }
}

/// ln of the Poisson-type term `e^{-h} h^k / Γ(k + 1)`.
pub(crate) fn ln_poisson_term(half_y: f64, k: f64) -> f64 {
    if half_y == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k * half_y.ln() - half_y - ln_gamma(k + 1.0)
}
