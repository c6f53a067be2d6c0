//! Built-in consistency checks: closed-form values, reduction identities
//! and equivariance spot checks, each with a named tolerance.

use crate::chisq_mix::{chisq_mix_cdf, ChiSqMix};
use crate::dist::DistSpec;
use crate::error::Result;
use crate::mu::{ci_mu_hksj, mu_iv, mu_ssw, MuCiMethod};
use crate::qstat::{q_statistic, welch_null_moments};
use crate::sim::{coverage_estimate, run_scenario, MethodSelection, Scenario, SizePattern};
use crate::study::{shift_scale, Dataset, StudySummary};
use crate::tau2::{estimate, tau2_cdl, tau2_dl, tau2_mp, tau2_reml, tau2_wt, Tau2Method};
use crate::tau2_ci::{ci_bj, ci_j, ci_qprofile};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Checker {
    scale: f64,
    out: Vec<CheckOutcome>,
}

impl Checker {
    fn close(&mut self, name: &'static str, got: Result<f64>, want: f64, tol: f64) {
        let (passed, detail) = match got {
            Ok(g) => {
                let err = (g - want).abs();
                (err <= tol * self.scale, format!("got {g:e}, expected {want:e}, |diff| {err:.3e}, tol {:.1e}", tol * self.scale))
            }
            Err(e) => (false, e.to_string()),
        };
        self.out.push(CheckOutcome { name, passed, detail });
    }

    fn holds(&mut self, name: &'static str, result: Result<bool>, what: &str) {
        let (passed, detail) = match result {
            Ok(b) => (b, what.to_string()),
            Err(e) => (false, e.to_string()),
        };
        self.out.push(CheckOutcome { name, passed, detail });
    }
}

fn sample_studies() -> Vec<StudySummary> {
    let rows = [
        (12, 0.8, 1.9, 10, 0.1, 1.2),
        (30, 0.2, 0.8, 25, 0.3, 1.1),
        (8, 1.6, 2.5, 9, 0.4, 2.0),
        (20, -0.1, 1.0, 22, 0.0, 0.9),
        (15, 0.9, 1.4, 16, 0.2, 1.7),
    ];
    rows.iter()
        .map(|&(n_t, mean_t, var_t, n_c, mean_c, var_c)| StudySummary { n_t, mean_t, var_t, n_c, mean_c, var_c })
        .collect()
}

/// Run every check. Tolerances are multiplied by `tolerance_scale`; 1 is
/// the shipped setting.
pub fn run_checks(tolerance_scale: f64) -> Vec<CheckOutcome> {
    let mut c = Checker { scale: tolerance_scale, out: Vec::new() };

    c.close("dist.normal_cdf", DistSpec::Normal { mean: 0.0, sd: 1.0 }.cdf(1.96), 0.975_002_104_851_780, 1e-13);
    c.close("dist.t_quantile", DistSpec::StudentT { df: 4.0 }.quantile(0.975), 2.776_445_105_197_799, 1e-10);
    c.close("dist.chisq_quantile", DistSpec::ChiSquare { df: 1.0 }.quantile(0.95), 3.841_458_820_694_124, 1e-10);
    c.close("dist.f_large_df", DistSpec::FisherF { d1: 1.0, d2: 1e12 }.quantile(0.95), 3.841_458_820_694_124, 1e-8);
    c.close(
        "dist.chisq_cdf",
        DistSpec::ChiSquare { df: 2.0 }.cdf(3.0),
        1.0 - (-1.5f64).exp(),
        1e-13,
    );
    c.close(
        "chisq_mix.equal_weights",
        ChiSqMix::unit_df(vec![2.0, 2.0]).and_then(|m| chisq_mix_cdf(&m, 6.0)),
        1.0 - (-1.5f64).exp(),
        1e-9,
    );

    // Two studies with unit variances and effects 0 and 3: Q = 4.5 and every
    // moment-type estimate is 3.5.
    let toy = Dataset::from_effects(&[0.0, 3.0], &[1.0, 1.0]);
    match &toy {
        Ok(ds) => {
            c.close("q_engine.q_at_zero", q_statistic(ds, 0.0), 4.5, 1e-14);
            c.close("q_engine.null_mean_without_g", welch_null_moments(ds, 0.0).map(|m| m.kappa1), 1.0, 1e-14);
            c.close("tau2.dl_toy", tau2_dl(ds).map(|r| r.value), 3.5, 1e-12);
            c.close("tau2.mp_toy", tau2_mp(ds).map(|r| r.value), 3.5, 1e-8);
            c.close("tau2.reml_toy", tau2_reml(ds).map(|r| r.value), 3.5, 1e-6);
        }
        Err(e) => c.holds("tau2.toy_dataset", Err(e.clone()), ""),
    }

    let studies = sample_studies();
    match Dataset::new(studies.clone()) {
        Ok(ds) => {
            let zero_g = ds.clone().with_g(&[0.0; 5]);
            c.holds(
                "tau2.cdl_equals_dl_without_g",
                zero_g.as_ref().map_err(Clone::clone).and_then(|d| {
                    Ok((tau2_cdl(d)?.value - tau2_dl(d)?.value).abs() <= 1e-10 * c.scale.max(0.0))
                }),
                "CDL = DL when all g are zero",
            );
            c.holds(
                "tau2.wt_equals_mp_without_g",
                zero_g.as_ref().map_err(Clone::clone).and_then(|d| {
                    Ok((tau2_wt(d)?.value - tau2_mp(d)?.value).abs() <= 1e-8 * c.scale.max(0.0))
                }),
                "WT = MP when all g are zero",
            );
            c.holds(
                "tau2_ci.qp_contains_mp",
                ci_qprofile(&ds, 0.95).and_then(|ci| Ok(ci.contains(tau2_mp(&ds)?.value))),
                "Q-profile interval contains the MP estimate",
            );
            c.holds(
                "mu.hksj_centred_on_dl",
                tau2_dl(&ds).and_then(|t| {
                    let m = mu_iv(&ds, t.value, Tau2Method::DL)?.estimate;
                    let ci = ci_mu_hksj(&ds, t.value, 0.95, MuCiMethod::Hksj)?;
                    Ok(((ci.lower + ci.upper) / 2.0 - m).abs() <= 1e-12 * c.scale.max(0.0) * (1.0 + m.abs()))
                }),
                "HKSJ interval is symmetric about the DL-weighted mean",
            );
            let (shift, scale) = (1.7, 2.5);
            c.holds(
                "equivariance.shift_scale",
                shift_scale(&studies, shift, scale).and_then(Dataset::new).and_then(|moved| {
                    let mut ok = true;
                    for m in Tau2Method::ALL {
                        let a = estimate(&ds, m)?.value * scale * scale;
                        let b = estimate(&moved, m)?.value;
                        ok &= (a - b).abs() <= 1e-9 * c.scale.max(0.0) * a.abs().max(1e-12);
                    }
                    let a = mu_ssw(&ds).estimate * scale + shift;
                    ok &= (a - mu_ssw(&moved).estimate).abs() <= 1e-9 * c.scale.max(0.0) * a.abs().max(1.0);
                    Ok(ok)
                }),
                "τ² scales by scale², μ by scale plus shift",
            );
        }
        Err(e) => c.holds("study.sample_dataset", Err(e), ""),
    }

    c.holds(
        "tau2_ci.j_equals_bj_for_equal_variances",
        Dataset::from_effects(&[0.1, 0.9, -0.4, 1.3], &[0.5; 4]).and_then(|d| {
            let (a, b) = (ci_j(&d, 0.95)?, ci_bj(&d, 0.95)?);
            let tol = 1e-6 * c.scale.max(0.0);
            Ok((a.lower - b.lower).abs() <= tol * (1.0 + b.lower) && (a.upper - b.upper).abs() <= tol * (1.0 + b.upper))
        }),
        "J and BJ intervals agree when within-study variances are equal",
    );

    c.close("sim.coverage_mc_se", Ok(coverage_estimate(9500, 10_000).mc_se), 0.002_179_449_471_770_337, 1e-12);

    let sc = Scenario {
        k: 5,
        sizes: SizePattern::Equal(20),
        q: 0.5,
        sigma2_c: 1.0,
        sigma2_t: 1.0,
        tau2: 0.2,
        mu: 0.0,
        reps: 40,
        seed: 11,
    };
    let sel = MethodSelection::default();
    c.holds(
        "sim.deterministic",
        run_scenario(&sc, &sel, 0.95).and_then(|a| Ok(a == run_scenario(&sc, &sel, 0.95)?)),
        "two runs of the same scenario agree",
    );

    c.out
}
