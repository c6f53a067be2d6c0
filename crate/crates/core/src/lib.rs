//! Estimation of the between-study variance and the overall mean difference
//! in random-effects meta-analysis, with a seeded Monte Carlo harness.

pub mod chisq_mix;
pub mod dist;
pub mod eigen;
pub mod error;
pub mod io;
pub mod mu;
pub mod qstat;
pub mod rng;
pub mod selftest;
pub mod sim;
pub mod solve;
pub mod special;
pub mod study;
pub mod tau2;
pub mod tau2_ci;

pub use chisq_mix::{chisq_mix_cdf, ChiSqMix};
pub use dist::DistSpec;
pub use error::{Error, Result};
pub use mu::{
    ci_mu_hksj, ci_mu_ssw_t, ci_mu_z, mu_iv, mu_ssw, var_ssw, MuCiMethod, MuInterval, MuMethod,
    MuResult,
};
pub use qstat::{
    expected_q_alternative, f_approx, q_context, q_statistic, welch_g, welch_null_moments,
    QContext, WelchMoments,
};
pub use io::{
    figure_panels, parse_dataset, read_dataset, read_results, rows_from_metrics, write_results,
    DatasetFile, FigureFamily, GridBlock, GridConfig, MethodNames, Panel, ResultRow,
};
pub use rng::SeededRng;
pub use sim::{
    expand_grid, generate_dataset, preset, run_replication, run_scenario, AggregateMetrics,
    MethodSelection, Scenario, SizePattern,
};
pub use study::{md_effect, shift_scale, validate_dataset, Dataset, EffectRow, StudySummary};
pub use tau2::{
    tau2_cdl, tau2_dl, tau2_j, tau2_mp, tau2_reml, tau2_wt, Tau2Method, Tau2Result,
};
pub use tau2_ci::{ci_bj, ci_j, ci_pl, ci_qprofile, ci_wt, Tau2CiMethod, Tau2Interval};
