//! Estimators of the overall mean difference μ and their intervals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::qstat::check_tau2;
use crate::study::Dataset;
use crate::tau2::Tau2Method;
use crate::tau2_ci::check_level;

/// Point estimators of μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MuMethod {
    /// Inverse-variance weights at the given τ² estimate.
    Iv(Tau2Method),
    /// Effective-sample-size weights.
    Ssw,
}

impl MuMethod {
    pub const ALL: [MuMethod; 7] = [
        MuMethod::Iv(Tau2Method::DL),
        MuMethod::Iv(Tau2Method::REML),
        MuMethod::Iv(Tau2Method::MP),
        MuMethod::Iv(Tau2Method::J),
        MuMethod::Iv(Tau2Method::WT),
        MuMethod::Iv(Tau2Method::CDL),
        MuMethod::Ssw,
    ];

    pub fn name(self) -> String {
        match self {
            MuMethod::Iv(t) => format!("IV-{t}"),
            MuMethod::Ssw => "SSW".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for MuMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Interval estimators of μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MuCiMethod {
    /// Normal quantiles around the IV mean.
    Z(Tau2Method),
    /// Hartung–Knapp–Sidik–Jonkman with DL weights.
    Hksj,
    /// HKSJ with WT weights.
    HksjWt,
    /// SSW centre, t quantiles, variance at the WT estimate.
    SswWt,
    /// SSW centre, t quantiles, variance at the CDL estimate.
    SswCdl,
}

impl MuCiMethod {
    pub const ALL: [MuCiMethod; 10] = [
        MuCiMethod::Z(Tau2Method::DL),
        MuCiMethod::Z(Tau2Method::REML),
        MuCiMethod::Z(Tau2Method::MP),
        MuCiMethod::Z(Tau2Method::J),
        MuCiMethod::Z(Tau2Method::WT),
        MuCiMethod::Z(Tau2Method::CDL),
        MuCiMethod::Hksj,
        MuCiMethod::HksjWt,
        MuCiMethod::SswWt,
        MuCiMethod::SswCdl,
    ];

    pub fn name(self) -> String {
        match self {
            MuCiMethod::Z(t) => format!("z-{t}"),
            MuCiMethod::Hksj => "HKSJ".into(),
            MuCiMethod::HksjWt => "HKSJ-WT".into(),
            MuCiMethod::SswWt => "SSW-WT".into(),
            MuCiMethod::SswCdl => "SSW-CDL".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// The τ² estimator the interval is built on.
    pub fn tau2_method(self) -> Tau2Method {
        match self {
            MuCiMethod::Z(t) => t,
            MuCiMethod::Hksj => Tau2Method::DL,
            MuCiMethod::HksjWt | MuCiMethod::SswWt => Tau2Method::WT,
            MuCiMethod::SswCdl => Tau2Method::CDL,
        }
    }
}

impl fmt::Display for MuCiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuResult {
    pub method: MuMethod,
    pub estimate: f64,
    /// Estimated variance of `estimate`; NaN for SSW until a τ² is supplied.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuInterval {
    pub method: MuCiMethod,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Set when the t quantile has a single degree of freedom (K = 2).
    pub one_df: bool,
}

impl MuInterval {
    pub fn contains(&self, mu: f64) -> bool {
        self.lower <= mu && mu <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn symmetric(method: MuCiMethod, center: f64, half: f64, level: f64, one_df: bool) -> Self {
        MuInterval { method, center, lower: center - half, upper: center + half, level, one_df }
    }
}

fn weighted_mean(w: &[f64], y: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let m = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / total;
    (m, total)
}

/// Inverse-variance mean at `tau2hat`, with variance `1/Σŵᵢ`.
pub fn mu_iv(ds: &Dataset, tau2hat: f64, method: Tau2Method) -> Result<MuResult> {
    check_tau2(tau2hat)?;
    let w: Vec<f64> = ds.v2().iter().map(|v| 1.0 / (v + tau2hat)).collect();
    let (m, total) = weighted_mean(&w, ds.y());
    Ok(MuResult { method: MuMethod::Iv(method), estimate: m, variance: 1.0 / total })
}

/// Mean weighted by effective sample sizes.
pub fn mu_ssw(ds: &Dataset) -> MuResult {
    let (m, _) = weighted_mean(ds.eff_n(), ds.y());
    MuResult { method: MuMethod::Ssw, estimate: m, variance: f64::NAN }
}

/// `Σ ñᵢ²(vᵢ² + τ̂²) / (Σ ñᵢ)²`.
pub fn var_ssw(ds: &Dataset, tau2hat: f64) -> Result<f64> {
    check_tau2(tau2hat)?;
    let n = ds.eff_n();
    let total: f64 = n.iter().sum();
    let num: f64 = n.iter().zip(ds.v2()).map(|(n, v)| n * n * (v + tau2hat)).sum();
    Ok(num / (total * total))
}

/// `estimate ± z_{1−α/2} √variance`.
pub fn ci_mu_z(mu: &MuResult, level: f64) -> Result<MuInterval> {
    let alpha = check_level(level)?;
    if !(mu.variance >= 0.0) {
        return Err(Error::Parameter(format!("variance must be >= 0, got {}", mu.variance)));
    }
    let t = match mu.method {
        MuMethod::Iv(t) => t,
        MuMethod::Ssw => {
            return Err(Error::Parameter("normal intervals are defined for IV means only".into()))
        }
    };
    let z = DistSpec::Normal { mean: 0.0, sd: 1.0 }.quantile(1.0 - 0.5 * alpha)?;
    Ok(MuInterval::symmetric(MuCiMethod::Z(t), mu.estimate, z * mu.variance.sqrt(), level, false))
}

fn t_quantile(k: usize, alpha: f64) -> Result<f64> {
    DistSpec::StudentT { df: (k - 1) as f64 }.quantile(1.0 - 0.5 * alpha)
}

/// HKSJ: IV centre at τ̂², variance `Σŵᵢ(yᵢ − μ̂)² / ((K−1)Σŵᵢ)`, `t_{K−1}`
/// quantile. `method` is [`MuCiMethod::Hksj`] or [`MuCiMethod::HksjWt`].
pub fn ci_mu_hksj(ds: &Dataset, tau2hat: f64, level: f64, method: MuCiMethod) -> Result<MuInterval> {
    let alpha = check_level(level)?;
    check_tau2(tau2hat)?;
    if !matches!(method, MuCiMethod::Hksj | MuCiMethod::HksjWt) {
        return Err(Error::Parameter(format!("{method} is not an HKSJ interval")));
    }
    let k = ds.k();
    let w: Vec<f64> = ds.v2().iter().map(|v| 1.0 / (v + tau2hat)).collect();
    let (m, total) = weighted_mean(&w, ds.y());
    let ss: f64 = w.iter().zip(ds.y()).map(|(w, y)| w * (y - m) * (y - m)).sum();
    let var = ss / ((k - 1) as f64 * total);
    let half = t_quantile(k, alpha)? * var.sqrt();
    Ok(MuInterval::symmetric(method, m, half, level, k == 2))
}

/// SSW centre with half-width `t_{K−1;1−α/2} √var_ssw(τ̂²)`. `method` is
/// [`MuCiMethod::SswWt`] or [`MuCiMethod::SswCdl`].
pub fn ci_mu_ssw_t(ds: &Dataset, tau2hat: f64, level: f64, method: MuCiMethod) -> Result<MuInterval> {
    let alpha = check_level(level)?;
    if !matches!(method, MuCiMethod::SswWt | MuCiMethod::SswCdl) {
        return Err(Error::Parameter(format!("{method} is not an SSW interval")));
    }
    let k = ds.k();
    let center = mu_ssw(ds).estimate;
    let half = t_quantile(k, alpha)? * var_ssw(ds, tau2hat)?.sqrt();
    Ok(MuInterval::symmetric(method, center, half, level, k == 2))
}
