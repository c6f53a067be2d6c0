//! Monte Carlo harness: synthetic meta-analyses, per-replication estimation,
//! and aggregation of bias, coverage and MSE over a scenario grid.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::io::{GridBlock, GridConfig};
use crate::mu::{ci_mu_hksj, ci_mu_ssw_t, ci_mu_z, mu_iv, mu_ssw, MuCiMethod, MuMethod};
use crate::rng::SeededRng;
use crate::study::{Dataset, StudySummary};
use crate::tau2::{estimate, Tau2Method, Tau2Result};
use crate::tau2_ci::{interval, Tau2CiMethod};

/// Study sizes: one common size, or a base pattern repeated to fill K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizePattern {
    Equal(u32),
    Unequal(Vec<u32>),
}

impl SizePattern {
    /// `"20"` for equal sizes, `"u30"` (mean size) for an unequal pattern.
    pub fn label(&self) -> String {
        match self {
            SizePattern::Equal(n) => n.to_string(),
            SizePattern::Unequal(p) => format!("u{}", self.mean_size_of(p)),
        }
    }

    fn mean_size_of(&self, p: &[u32]) -> f64 {
        p.iter().map(|&n| n as f64).sum::<f64>() / p.len() as f64
    }

    fn order_key(&self) -> (u8, f64) {
        match self {
            SizePattern::Equal(n) => (0, *n as f64),
            SizePattern::Unequal(p) => (1, self.mean_size_of(p)),
        }
    }

    /// Total sizes for K studies.
    pub fn sizes(&self, k: usize) -> Result<Vec<u32>> {
        let out: Vec<u32> = match self {
            SizePattern::Equal(n) => vec![*n; k],
            SizePattern::Unequal(p) => {
                if p.is_empty() || k % p.len() != 0 {
                    return Err(Error::Config(format!(
                        "size pattern of length {} does not tile K = {k}",
                        p.len()
                    )));
                }
                p.iter().copied().cycle().take(k).collect()
            }
        };
        if let Some(n) = out.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!("study size {n} is below the minimum of 4")));
        }
        Ok(out)
    }
}

/// One cell of the simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k: usize,
    pub sizes: SizePattern,
    /// Proportion of each study in the control arm.
    pub q: f64,
    pub sigma2_c: f64,
    pub sigma2_t: f64,
    pub tau2: f64,
    pub mu: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("K must be at least 2, got {}", self.k)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1), got {}", self.q)));
        }
        for (name, v) in [("sigma2_c", self.sigma2_c), ("sigma2_t", self.sigma2_t)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::Config(format!("tau2 must be >= 0, got {}", self.tau2)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be finite, got {}", self.mu)));
        }
        for n in self.sizes.sizes(self.k)? {
            arm_split(n, self.q)?;
        }
        Ok(())
    }

    /// Identifies the scenario's random stream: a hash of its design values,
    /// so a scenario draws the same data whatever grid it appears in.
    pub fn stream_id(&self) -> u64 {
        let key = format!(
            "{}|{}|{}|{}|{}|{}|{}",
            self.k,
            self.sizes.label(),
            self.q,
            self.sigma2_c,
            self.sigma2_t,
            self.tau2,
            self.mu
        );
        // FNV-1a
        key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        let (ka, na) = self.sizes.order_key();
        let (kb, nb) = other.sizes.order_key();
        self.k
            .cmp(&other.k)
            .then(ka.cmp(&kb))
            .then(na.total_cmp(&nb))
            .then(self.q.total_cmp(&other.q))
            .then(self.sigma2_c.total_cmp(&other.sigma2_c))
            .then(self.sigma2_t.total_cmp(&other.sigma2_t))
            .then(self.tau2.total_cmp(&other.tau2))
            .then(self.mu.total_cmp(&other.mu))
    }
}

/// `n_t = ⌈(1 − q) n⌉`, `n_c = n − n_t`; both arms need at least 2 subjects.
pub fn arm_split(n: u32, q: f64) -> Result<(u32, u32)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1), got {q}")));
    }
    // The small offset keeps products such as 0.25·20 from rounding up.
    let n_t = ((1.0 - q) * n as f64 - 1e-9).ceil().max(0.0) as u32;
    let n_c = n.saturating_sub(n_t);
    if n_t < 2 || n_c < 2 {
        return Err(Error::Config(format!(
            "n = {n}, q = {q} leaves an arm with fewer than 2 subjects ({n_t}, {n_c})"
        )));
    }
    Ok((n_t, n_c))
}

/// Draw one meta-analysis. Sample variances are `σ² χ²_{m−1}/(m−1)` per arm
/// and `yᵢ ~ N(μ, σ²_T/n_T + σ²_C/n_C + τ²)`; `yᵢ` is carried as the treatment
/// mean with a zero control mean.
pub fn generate_dataset<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<Vec<StudySummary>> {
    let sizes = sc.sizes.sizes(sc.k)?;
    let mut out = Vec::with_capacity(sc.k);
    for n in sizes {
        let (n_t, n_c) = arm_split(n, sc.q)?;
        let df_t = (n_t - 1) as f64;
        let df_c = (n_c - 1) as f64;
        let var_t = sc.sigma2_t * DistSpec::ChiSquare { df: df_t }.sample(rng)? / df_t;
        let var_c = sc.sigma2_c * DistSpec::ChiSquare { df: df_c }.sample(rng)? / df_c;
        let sd = (sc.sigma2_t / n_t as f64 + sc.sigma2_c / n_c as f64 + sc.tau2).sqrt();
        let y = DistSpec::Normal { mean: sc.mu, sd }.sample(rng)?;
        out.push(StudySummary { n_t, mean_t: y, var_t, n_c, mean_c: 0.0, var_c });
    }
    Ok(out)
}

/// Which estimators a run evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSelection {
    pub tau2: Vec<Tau2Method>,
    pub tau2_ci: Vec<Tau2CiMethod>,
    pub mu: Vec<MuMethod>,
    pub mu_ci: Vec<MuCiMethod>,
}

impl Default for MethodSelection {
    fn default() -> Self {
        MethodSelection {
            tau2: Tau2Method::ALL.to_vec(),
            tau2_ci: Tau2CiMethod::ALL.to_vec(),
            mu: MuMethod::ALL.to_vec(),
            mu_ci: MuCiMethod::ALL.to_vec(),
        }
    }
}

impl MethodSelection {
    pub fn empty() -> Self {
        MethodSelection { tau2: vec![], tau2_ci: vec![], mu: vec![], mu_ci: vec![] }
    }
}

/// Outcomes of one replication, aligned with the [`MethodSelection`] lists.
/// `None` marks an estimator that failed or did not converge.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub tau2: Vec<Option<f64>>,
    pub tau2_ci: Vec<Option<(f64, f64)>>,
    pub mu: Vec<Option<f64>>,
    pub mu_ci: Vec<Option<(f64, f64)>>,
}

/// Lazily computed τ² estimates shared by the μ estimators.
struct Tau2Cache<'a> {
    ds: &'a Dataset,
    slots: [Option<Option<f64>>; 6],
}

impl<'a> Tau2Cache<'a> {
    fn new(ds: &'a Dataset) -> Self {
        Tau2Cache { ds, slots: [None; 6] }
    }

    fn get(&mut self, m: Tau2Method) -> Option<f64> {
        let i = m as usize;
        *self.slots[i].get_or_insert_with(|| match estimate(self.ds, m) {
            Ok(Tau2Result { value, converged: true, .. }) => Some(value),
            _ => None,
        })
    }
}

/// Run every selected estimator on one freshly generated dataset.
pub fn run_replication<R: Rng + ?Sized>(
    sc: &Scenario,
    sel: &MethodSelection,
    level: f64,
    rng: &mut R,
) -> Result<ReplicationRecord> {
    let ds = Dataset::new(generate_dataset(sc, rng)?)?;
    let mut cache = Tau2Cache::new(&ds);

    let tau2 = sel.tau2.iter().map(|&m| cache.get(m)).collect();
    let tau2_ci = sel
        .tau2_ci
        .iter()
        .map(|&m| match interval(&ds, m, level) {
            Ok(ci) if ci.converged => Some((ci.lower, ci.upper)),
            _ => None,
        })
        .collect();
    let mu = sel
        .mu
        .iter()
        .map(|&m| match m {
            MuMethod::Ssw => Some(mu_ssw(&ds).estimate),
            MuMethod::Iv(t) => {
                let t2 = cache.get(t)?;
                mu_iv(&ds, t2, t).ok().map(|r| r.estimate)
            }
        })
        .collect();
    let mu_ci = sel
        .mu_ci
        .iter()
        .map(|&m| {
            let t2 = cache.get(m.tau2_method())?;
            let ci = match m {
                MuCiMethod::Z(t) => mu_iv(&ds, t2, t).and_then(|r| ci_mu_z(&r, level)),
                MuCiMethod::Hksj | MuCiMethod::HksjWt => ci_mu_hksj(&ds, t2, level, m),
                MuCiMethod::SswWt | MuCiMethod::SswCdl => ci_mu_ssw_t(&ds, t2, level, m),
            };
            ci.ok().map(|c| (c.lower, c.upper))
        })
        .collect();
    Ok(ReplicationRecord { tau2, tau2_ci, mu, mu_ci })
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub mc_se: f64,
}

/// Summary of a point estimator over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub bias: Estimate,
    pub mse: Estimate,
    pub used: usize,
    pub nonconverged: usize,
}

/// Summary of an interval estimator over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSummary {
    pub coverage: Estimate,
    pub width: Estimate,
    pub used: usize,
    pub nonconverged: usize,
}

/// `MSE(numerator) / MSE(denominator)`, `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSummary {
    pub numerator: MuMethod,
    pub denominator: MuMethod,
    pub ratio: Option<Estimate>,
}

impl RatioSummary {
    pub fn name(&self) -> String {
        format!("{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub scenario: Scenario,
    pub reps: usize,
    pub tau2: Vec<(Tau2Method, PointSummary)>,
    pub tau2_ci: Vec<(Tau2CiMethod, IntervalSummary)>,
    pub mu: Vec<(MuMethod, PointSummary)>,
    pub mu_ci: Vec<(MuCiMethod, IntervalSummary)>,
    pub ratios: Vec<RatioSummary>,
}

impl AggregateMetrics {
    pub fn tau2_summary(&self, m: Tau2Method) -> Option<&PointSummary> {
        self.tau2.iter().find(|(k, _)| *k == m).map(|(_, s)| s)
    }

    pub fn tau2_ci_summary(&self, m: Tau2CiMethod) -> Option<&IntervalSummary> {
        self.tau2_ci.iter().find(|(k, _)| *k == m).map(|(_, s)| s)
    }

    pub fn mu_summary(&self, m: MuMethod) -> Option<&PointSummary> {
        self.mu.iter().find(|(k, _)| *k == m).map(|(_, s)| s)
    }

    pub fn mu_ci_summary(&self, m: MuCiMethod) -> Option<&IntervalSummary> {
        self.mu_ci.iter().find(|(k, _)| *k == m).map(|(_, s)| s)
    }
}

/// Mean and standard error of the mean, by two passes.
fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, mc_se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if !mean.is_finite() || n < 2 {
        return Estimate { value: mean, mc_se: f64::NAN };
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Estimate { value: mean, mc_se: (ss / (n - 1) as f64 / n as f64).sqrt() }
}

/// Binomial proportion with `√(p(1−p)/n)`.
pub fn coverage_estimate(hits: usize, n: usize) -> Estimate {
    if n == 0 {
        return Estimate { value: f64::NAN, mc_se: f64::NAN };
    }
    let p = hits as f64 / n as f64;
    Estimate { value: p, mc_se: (p * (1.0 - p) / n as f64).sqrt() }
}

fn point_summary(values: impl Iterator<Item = Option<f64>>, truth: f64) -> PointSummary {
    let mut err = Vec::new();
    let mut missing = 0;
    for v in values {
        match v {
            Some(x) => err.push(x - truth),
            None => missing += 1,
        }
    }
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    PointSummary { bias: mean_se(&err), mse: mean_se(&sq), used: err.len(), nonconverged: missing }
}

fn interval_summary(values: impl Iterator<Item = Option<(f64, f64)>>, truth: f64) -> IntervalSummary {
    let mut widths = Vec::new();
    let mut hits = 0;
    let mut missing = 0;
    for v in values {
        match v {
            Some((lo, up)) => {
                if lo <= truth && truth <= up {
                    hits += 1;
                }
                widths.push(up - lo);
            }
            None => missing += 1,
        }
    }
    IntervalSummary {
        coverage: coverage_estimate(hits, widths.len()),
        width: mean_se(&widths),
        used: widths.len(),
        nonconverged: missing,
    }
}

/// Ratio of mean squared errors over replications where both estimators
/// succeeded, with a delta-method standard error.
pub fn mse_ratio(num: &[Option<f64>], den: &[Option<f64>], truth: f64) -> Result<Estimate> {
    let pairs: Vec<(f64, f64)> = num
        .iter()
        .zip(den)
        .filter_map(|(a, b)| Some(((a.as_ref()? - truth).powi(2), (b.as_ref()? - truth).powi(2))))
        .collect();
    let n = pairs.len();
    if n == 0 {
        return Err(Error::Parameter("no replications with both estimates".into()));
    }
    let nf = n as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    if !(mb > 0.0) {
        return Err(Error::Parameter("MSE of the denominator estimator is zero".into()));
    }
    let r = ma / mb;
    let mc_se = if n < 2 {
        f64::NAN
    } else {
        let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
        for (a, b) in &pairs {
            vaa += (a - ma) * (a - ma);
            vbb += (b - mb) * (b - mb);
            vab += (a - ma) * (b - mb);
        }
        let d = nf - 1.0;
        let var = (vaa / d - 2.0 * r * vab / d + r * r * vbb / d) / (mb * mb * nf);
        var.max(0.0).sqrt()
    };
    Ok(Estimate { value: r, mc_se })
}

/// Comparisons reported when the needed estimators are selected.
const RATIO_PAIRS: [(MuMethod, MuMethod); 2] = [
    (MuMethod::Ssw, MuMethod::Iv(Tau2Method::MP)),
    (MuMethod::Ssw, MuMethod::Iv(Tau2Method::WT)),
];

/// Aggregate replication records in order.
pub fn aggregate(sc: &Scenario, sel: &MethodSelection, records: &[ReplicationRecord]) -> AggregateMetrics {
    let tau2 = sel
        .tau2
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, point_summary(records.iter().map(|r| r.tau2[i]), sc.tau2)))
        .collect();
    let tau2_ci = sel
        .tau2_ci
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, interval_summary(records.iter().map(|r| r.tau2_ci[i]), sc.tau2)))
        .collect();
    let mu = sel
        .mu
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, point_summary(records.iter().map(|r| r.mu[i]), sc.mu)))
        .collect();
    let mu_ci = sel
        .mu_ci
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, interval_summary(records.iter().map(|r| r.mu_ci[i]), sc.mu)))
        .collect();
    let column = |m: MuMethod| -> Option<Vec<Option<f64>>> {
        let i = sel.mu.iter().position(|&x| x == m)?;
        Some(records.iter().map(|r| r.mu[i]).collect())
    };
    let ratios = RATIO_PAIRS
        .iter()
        .filter_map(|&(a, b)| {
            let (ca, cb) = (column(a)?, column(b)?);
            Some(RatioSummary { numerator: a, denominator: b, ratio: mse_ratio(&ca, &cb, sc.mu).ok() })
        })
        .collect();
    AggregateMetrics { scenario: sc.clone(), reps: records.len(), tau2, tau2_ci, mu, mu_ci, ratios }
}

/// Run all replications of a scenario (in parallel on the current rayon
/// pool) and aggregate. Replication `r` always uses the stream derived from
/// `(seed, scenario, r)` and records are merged in replication order, so the
/// result does not depend on the number of threads.
pub fn run_scenario(sc: &Scenario, sel: &MethodSelection, level: f64) -> Result<AggregateMetrics> {
    if sc.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    sc.validate()?;
    let id = sc.stream_id();
    let records: Vec<ReplicationRecord> = (0..sc.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = SeededRng::for_replication(sc.seed, id, r);
            run_replication(sc, sel, level, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(sc, sel, &records))
}

/// The τ² values used throughout the design: `0(0.01)0.1 ∪ 0(0.1)1`.
pub fn tau2_design_grid() -> Vec<f64> {
    let mut v: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
    v.extend((2..=10).map(|i| i as f64 / 10.0));
    v
}

/// `0(0.1)1`.
pub fn tau2_coarse_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Base patterns of five unequal study sizes.
pub const UNEQUAL_PATTERNS: [[u32; 5]; 4] = [
    [12, 16, 18, 20, 84],
    [24, 32, 36, 40, 168],
    [64, 72, 76, 80, 208],
    [124, 132, 136, 140, 268],
];

pub const EQUAL_SIZES: [u32; 4] = [20, 40, 100, 250];

/// Cross product of every grid block, deduplicated and sorted by scenario key.
pub fn expand_grid(config: &GridConfig) -> Result<Vec<Scenario>> {
    config.validate()?;
    let mut out = Vec::new();
    for block in &config.grids {
        expand_block(block, config.reps, config.seed, &mut out)?;
    }
    out.sort_by(|a, b| a.cmp_key(b));
    out.dedup_by(|a, b| a.cmp_key(b) == Ordering::Equal);
    Ok(out)
}

fn expand_block(b: &GridBlock, reps: usize, seed: u64, out: &mut Vec<Scenario>) -> Result<()> {
    for &k in &b.k {
        for sizes in &b.sizes {
            for &q in &b.q {
                for &[sigma2_c, sigma2_t] in &b.sigma2 {
                    for &tau2 in &b.tau2 {
                        for &mu in &b.mu {
                            let sc = Scenario {
                                k,
                                sizes: sizes.clone(),
                                q,
                                sigma2_c,
                                sigma2_t,
                                tau2,
                                mu,
                                reps,
                                seed,
                            };
                            sc.validate()?;
                            out.push(sc);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 2] = ["table2-small", "table2-full"];

/// Built-in grids. `table2-small` is the equal-size arm of the first design
/// row at reduced replication; `table2-full` is the whole design at 10,000
/// replications.
pub fn preset(name: &str) -> Option<GridConfig> {
    let equal: Vec<SizePattern> = EQUAL_SIZES.iter().map(|&n| SizePattern::Equal(n)).collect();
    let mut all_sizes = equal.clone();
    all_sizes.extend(UNEQUAL_PATTERNS.iter().map(|p| SizePattern::Unequal(p.to_vec())));
    let block = |sizes: Vec<SizePattern>, sigma2: Vec<[f64; 2]>, tau2: Vec<f64>| GridBlock {
        k: vec![5, 10, 30],
        sizes,
        q: vec![0.5, 0.75],
        sigma2,
        tau2,
        mu: vec![0.0],
    };
    match name {
        "table2-small" => Some(GridConfig {
            reps: 200,
            seed: 20_180_101,
            level: 0.95,
            output: None,
            methods: None,
            grids: vec![block(equal, vec![[1.0, 1.0], [1.0, 2.0]], tau2_design_grid())],
        }),
        "table2-full" => Some(GridConfig {
            reps: 10_000,
            seed: 20_180_101,
            level: 0.95,
            output: None,
            methods: None,
            grids: vec![
                block(all_sizes.clone(), vec![[1.0, 1.0], [1.0, 2.0]], tau2_design_grid()),
                block(all_sizes, vec![[10.0, 10.0], [10.0, 20.0]], tau2_coarse_grid()),
            ],
        }),
        _ => None,
    }
}
