//! Eigenvalues of a diagonal matrix minus a rank-one term, `D − z zᵀ/ρ`,
//! via the secular equation. This is the structure of every generalised
//! Q quadratic form, so no dense decomposition is needed.

use crate::solve::{brent, RootOptions};

/// Nonzero eigenvalues of `diag(d) − b bᵀ / A`, ascending, for the case
/// `Σ bᵢ²/(A dᵢ) = 1`, where the matrix is singular with a single zero
/// eigenvalue.
///
/// Equal diagonal entries of multiplicity m contribute that entry m − 1 times;
/// each gap between consecutive distinct entries holds exactly one root of
/// `1 − Σ (bᵢ²/A)/(dᵢ − λ)`.
pub fn downdate_eigenvalues(d: &[f64], b: &[f64], a_total: f64) -> Vec<f64> {
    let mut pairs: Vec<(f64, f64)> = d
        .iter()
        .zip(b)
        .map(|(&di, &bi)| (di, bi * bi / a_total))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));

    // Merge equal poles: the extra copies are eigenvalues themselves.
    let mut out = Vec::with_capacity(d.len());
    let mut poles: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (di, zi) in pairs {
        match poles.last_mut() {
            Some(last) if (di - last.0).abs() <= 4.0 * f64::EPSILON * di => {
                last.1 += zi;
                out.push(di);
            }
            _ => poles.push((di, zi)),
        }
    }

    for j in 1..poles.len() {
        let (lo, z_lo) = poles[j - 1];
        let (hi, z_hi) = poles[j];
        let gap = hi - lo;
        // Secular function multiplied by (λ − lo)(hi − λ), written in the
        // offset t = λ − lo; positive at t = 0, negative at t = gap.
        let h = |t: f64| {
            let mut rest = 1.0;
            for (k, &(dk, zk)) in poles.iter().enumerate() {
                if k != j - 1 && k != j {
                    rest -= zk / ((dk - lo) - t);
                }
            }
            t * (gap - t) * rest + z_lo * (gap - t) - z_hi * t
        };
        let t = brent(h, 0.0, gap, z_lo * gap, -z_hi * gap, RootOptions::default())
            .map(|r| r.x)
            .unwrap_or(0.5 * gap);
        out.push(lo + t);
    }
    out.sort_by(|x, y| x.total_cmp(y));
    out
}

/// Weights of the chi-square mixture followed by `Σ aᵢ(yᵢ − ȳ_a)²` when
/// `yᵢ ~ N(μ, sᵢ)` independently.
pub fn quadratic_form_weights(a: &[f64], s: &[f64]) -> Vec<f64> {
    let a_total: f64 = a.iter().sum();
    let d: Vec<f64> = a.iter().zip(s).map(|(ai, si)| ai * si).collect();
    let b: Vec<f64> = a.iter().zip(s).map(|(ai, si)| ai * si.sqrt()).collect();
    let mut lam = downdate_eigenvalues(&d, &b, a_total);
    let top = lam.last().copied().unwrap_or(0.0);
    lam.retain(|&l| l > 1e-12 * top);
    lam
}
