//! File formats: study CSV input, simulation grid configuration, long-format
//! results, and per-panel figure tables.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mu::{MuCiMethod, MuMethod};
use crate::sim::{AggregateMetrics, MethodSelection, SizePattern};
use crate::study::StudySummary;
use crate::tau2::Tau2Method;
use crate::tau2_ci::Tau2CiMethod;

/// Column names of the study input file, in order.
pub const DATASET_HEADER: [&str; 7] = ["study_id", "n_t", "mean_t", "sd_t", "n_c", "mean_c", "sd_c"];

/// Parsed study input: labels plus summaries with variances (`sd²`).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub ids: Vec<String>,
    pub studies: Vec<StudySummary>,
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(file)
}

/// Parse study rows. Errors carry the 1-based line and column of the
/// offending field.
pub fn parse_dataset<R: Read>(input: R) -> Result<DatasetFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse { line: 1, column: 1, message: "empty file: missing header row".into() });
    }
    for (i, want) in DATASET_HEADER.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            got => {
                return Err(Error::Parse {
                    line: 1,
                    column: i + 1,
                    message: format!("expected header `{want}`, found `{}`", got.unwrap_or("")),
                })
            }
        }
    }
    if header.len() != DATASET_HEADER.len() {
        return Err(Error::Parse {
            line: 1,
            column: DATASET_HEADER.len() + 1,
            message: format!("unexpected extra column `{}`", &header[DATASET_HEADER.len()]),
        });
    }

    let mut out = DatasetFile { ids: Vec::new(), studies: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |col: usize| -> &str { rec.get(col).unwrap_or("") };
        let int = |col: usize| -> Result<u32> {
            field(col).parse::<u32>().map_err(|_| bad_field(line, col, field(col), "a non-negative integer"))
        };
        let num = |col: usize| -> Result<f64> {
            match field(col).parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad_field(line, col, field(col), "a finite number")),
            }
        };
        let (sd_t, sd_c) = (num(3)?, num(6)?);
        out.ids.push(field(0).to_string());
        out.studies.push(StudySummary {
            n_t: int(1)?,
            mean_t: num(2)?,
            var_t: sd_t * sd_t,
            n_c: int(4)?,
            mean_c: num(5)?,
            var_c: sd_c * sd_c,
        });
    }
    if out.studies.is_empty() {
        return Err(Error::Parse { line: 2, column: 1, message: "no study rows".into() });
    }
    Ok(out)
}

fn bad_field(line: u64, col: usize, text: &str, want: &str) -> Error {
    Error::Parse {
        line,
        column: col + 1,
        message: format!("`{}`: expected {want} in column `{}`", text, DATASET_HEADER[col]),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => Error::Parse {
            line,
            column: *len as usize + 1,
            message: format!("expected {} fields, found {len}", DATASET_HEADER.len()),
        },
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => Error::Parse { line, column: 1, message: e.to_string() },
    }
}

/// Method names as they appear in a grid config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodNames {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2_ci: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_ci: Option<Vec<String>>,
}

impl MethodNames {
    /// Resolve names; an omitted list selects every method of that kind.
    pub fn resolve(&self) -> Result<MethodSelection> {
        let all = MethodSelection::default();
        Ok(MethodSelection {
            tau2: parse_list(&self.tau2, all.tau2, Tau2Method::parse)?,
            tau2_ci: parse_list(&self.tau2_ci, all.tau2_ci, Tau2CiMethod::parse)?,
            mu: parse_list(&self.mu, all.mu, MuMethod::parse)?,
            mu_ci: parse_list(&self.mu_ci, all.mu_ci, MuCiMethod::parse)?,
        })
    }
}

/// Parse a list of method names, or return `default` when absent.
pub fn parse_list<T: PartialEq>(
    names: &Option<Vec<String>>,
    default: Vec<T>,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>> {
    let Some(names) = names else { return Ok(default) };
    let mut out = Vec::new();
    for n in names {
        let m = parse(n).ok_or_else(|| Error::Config(format!("unknown method `{n}`")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// A rectangular block of scenarios: the cross product of its lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub sizes: Vec<SizePattern>,
    pub q: Vec<f64>,
    /// `[σ²_C, σ²_T]` pairs.
    pub sigma2: Vec<[f64; 2]>,
    pub tau2: Vec<f64>,
    #[serde(default = "default_mu")]
    pub mu: Vec<f64>,
}

fn default_mu() -> Vec<f64> {
    vec![0.0]
}

fn default_level() -> f64 {
    0.95
}

/// Simulation configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<MethodNames>,
    pub grids: Vec<GridBlock>,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.grids.is_empty() {
            return Err(Error::Config("no grid blocks".into()));
        }
        for (i, b) in self.grids.iter().enumerate() {
            let lens = [b.k.len(), b.sizes.len(), b.q.len(), b.sigma2.len(), b.tau2.len(), b.mu.len()];
            if lens.contains(&0) {
                return Err(Error::Config(format!("grid block {i} has an empty list")));
            }
        }
        self.selection()?;
        Ok(())
    }

    pub fn selection(&self) -> Result<MethodSelection> {
        self.methods.clone().unwrap_or_default().resolve()
    }
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub k: usize,
    pub n_pattern: String,
    pub q: f64,
    pub sigma2_c: f64,
    pub sigma2_t: f64,
    pub tau2: f64,
    pub mu: f64,
    /// Family-prefixed name, e.g. `tau2:DL`, `muci:HKSJ`, `ratio:SSW/IV-MP`.
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub mc_se: f64,
}

pub const RESULTS_HEADER: [&str; 11] =
    ["K", "n_pattern", "q", "sigma2_c", "sigma2_t", "tau2", "mu", "method", "metric", "value", "mc_se"];

/// `inf` / `-inf` / `na` for non-finite values, shortest round-trip otherwise.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "na".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn parse_number(s: &str) -> Option<f64> {
    match s {
        "na" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// Flatten one scenario's aggregates into results rows.
pub fn rows_from_metrics(m: &AggregateMetrics) -> Vec<ResultRow> {
    let sc = &m.scenario;
    let mut rows = Vec::new();
    let mut push = |method: String, metric: &str, value: f64, mc_se: f64| {
        rows.push(ResultRow {
            k: sc.k,
            n_pattern: sc.sizes.label(),
            q: sc.q,
            sigma2_c: sc.sigma2_c,
            sigma2_t: sc.sigma2_t,
            tau2: sc.tau2,
            mu: sc.mu,
            method,
            metric: metric.to_string(),
            value,
            mc_se,
        })
    };
    for (meth, s) in &m.tau2 {
        let name = format!("tau2:{meth}");
        push(name.clone(), "bias_tau2", s.bias.value, s.bias.mc_se);
        push(name, "nonconverged", s.nonconverged as f64, f64::NAN);
    }
    for (meth, s) in &m.tau2_ci {
        let name = format!("tau2ci:{meth}");
        push(name.clone(), "cov_tau2", s.coverage.value, s.coverage.mc_se);
        push(name.clone(), "width", s.width.value, s.width.mc_se);
        push(name, "nonconverged", s.nonconverged as f64, f64::NAN);
    }
    for (meth, s) in &m.mu {
        let name = format!("mu:{meth}");
        push(name.clone(), "bias_mu", s.bias.value, s.bias.mc_se);
        push(name.clone(), "mse_mu", s.mse.value, s.mse.mc_se);
        push(name, "nonconverged", s.nonconverged as f64, f64::NAN);
    }
    for (meth, s) in &m.mu_ci {
        let name = format!("muci:{meth}");
        push(name.clone(), "cov_mu", s.coverage.value, s.coverage.mc_se);
        push(name.clone(), "width", s.width.value, s.width.mc_se);
        push(name, "nonconverged", s.nonconverged as f64, f64::NAN);
    }
    for r in &m.ratios {
        let (v, se) = r.ratio.map_or((f64::NAN, f64::NAN), |e| (e.value, e.mc_se));
        push(format!("ratio:{}", r.name()), "mse_ratio", v, se);
    }
    rows
}

/// Sort key of the size-pattern label: equal sizes before unequal, then by size.
fn pattern_key(label: &str) -> (u8, f64) {
    match label.strip_prefix('u') {
        Some(rest) => (1, rest.parse().unwrap_or(f64::NAN)),
        None => (0, label.parse().unwrap_or(f64::NAN)),
    }
}

fn scenario_cmp(a: &ResultRow, b: &ResultRow) -> std::cmp::Ordering {
    let (pa, na) = pattern_key(&a.n_pattern);
    let (pb, nb) = pattern_key(&b.n_pattern);
    a.k.cmp(&b.k)
        .then(pa.cmp(&pb))
        .then(na.total_cmp(&nb))
        .then(a.n_pattern.cmp(&b.n_pattern))
        .then(a.q.total_cmp(&b.q))
        .then(a.sigma2_c.total_cmp(&b.sigma2_c))
        .then(a.sigma2_t.total_cmp(&b.sigma2_t))
        .then(a.tau2.total_cmp(&b.tau2))
        .then(a.mu.total_cmp(&b.mu))
}

/// Write rows ordered by scenario key; the order of rows within a scenario
/// is kept.
pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| scenario_cmp(a, b));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER).map_err(csv_error)?;
    for r in sorted {
        w.write_record([
            r.k.to_string(),
            r.n_pattern.clone(),
            format_number(r.q),
            format_number(r.sigma2_c),
            format_number(r.sigma2_t),
            format_number(r.tau2),
            format_number(r.mu),
            r.method.clone(),
            r.metric.clone(),
            format_number(r.value),
            format_number(r.mc_se),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, column: 1, message: "not a results file header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |col: usize| Error::Parse {
            line,
            column: col + 1,
            message: format!("bad value `{}` for `{}`", &rec[col], RESULTS_HEADER[col]),
        };
        let num = |col: usize| parse_number(&rec[col]).ok_or_else(|| err(col));
        rows.push(ResultRow {
            k: rec[0].parse().map_err(|_| err(0))?,
            n_pattern: rec[1].to_string(),
            q: num(2)?,
            sigma2_c: num(3)?,
            sigma2_t: num(4)?,
            tau2: num(5)?,
            mu: num(6)?,
            method: rec[7].to_string(),
            metric: rec[8].to_string(),
            value: num(9)?,
            mc_se: num(10)?,
        });
    }
    Ok(rows)
}

/// Figure families: A for τ², B for μ; odd numbers are point-estimator
/// panels, even numbers interval panels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureFamily {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

/// Which τ² values and variance setting a family plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Range {
    /// τ² = 0(0.1)1, σ²_C = 1.
    Coarse,
    /// τ² = 0(0.01)0.1, σ²_C = 1.
    Fine,
    /// τ² = 0(0.1)1, σ²_C = 10.
    LargeVariance,
}

impl FigureFamily {
    pub const ALL: [FigureFamily; 12] = [
        FigureFamily::A1,
        FigureFamily::A2,
        FigureFamily::A3,
        FigureFamily::A4,
        FigureFamily::A5,
        FigureFamily::A6,
        FigureFamily::B1,
        FigureFamily::B2,
        FigureFamily::B3,
        FigureFamily::B4,
        FigureFamily::B5,
        FigureFamily::B6,
    ];

    pub fn name(self) -> &'static str {
        ["A1", "A2", "A3", "A4", "A5", "A6", "B1", "B2", "B3", "B4", "B5", "B6"][self as usize]
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }

    fn range(self) -> Range {
        match (self as usize % 6) / 2 {
            0 => Range::Coarse,
            1 => Range::Fine,
            _ => Range::LargeVariance,
        }
    }

    /// `(method prefix, metric)` pairs, one table each.
    fn tables(self) -> &'static [(&'static str, &'static str)] {
        let is_a = (self as usize) < 6;
        let is_point = self as usize % 2 == 0;
        match (is_a, is_point) {
            (true, true) => &[("tau2:", "bias_tau2")],
            (true, false) => &[("tau2ci:", "cov_tau2")],
            (false, true) => &[("mu:", "bias_mu"), ("ratio:", "mse_ratio")],
            (false, false) => &[("muci:", "cov_mu")],
        }
    }

    fn includes(self, sigma2_c: f64, tau2: f64) -> bool {
        let on_step = |step: f64, max: f64| {
            let i = (tau2 / step).round();
            tau2 <= max + 1e-9 && (tau2 - i * step).abs() < 1e-9
        };
        match self.range() {
            Range::Coarse => sigma2_c == 1.0 && on_step(0.1, 1.0),
            Range::Fine => sigma2_c == 1.0 && on_step(0.01, 0.1),
            Range::LargeVariance => sigma2_c == 10.0 && on_step(0.1, 1.0),
        }
    }
}

/// One plot-ready table: `tau2` then one column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub file_name: String,
    pub metric: String,
    pub methods: Vec<String>,
    /// `(τ², values aligned with `methods`)`, ascending in τ².
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl Panel {
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["tau2".to_string()];
        header.extend(self.methods.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for (t, vals) in &self.rows {
            let mut rec = vec![format_number(*t)];
            rec.extend(vals.iter().map(|&v| format_number(v)));
            w.write_record(&rec).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pivot results into the panels of `family` for size pattern `n` and `k`
/// studies: one panel per `(q, σ² pair, μ)`.
pub fn figure_panels(rows: &[ResultRow], family: FigureFamily, n: &str, k: usize) -> Result<Vec<Panel>> {
    let mut panels = Vec::new();
    for &(prefix, metric) in family.tables() {
        let sel: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| {
                r.k == k
                    && r.n_pattern == n
                    && r.metric == metric
                    && r.method.starts_with(prefix)
                    && family.includes(r.sigma2_c, r.tau2)
            })
            .collect();
        let mut facets: Vec<(f64, f64, f64, f64)> = Vec::new();
        for r in &sel {
            let f = (r.q, r.sigma2_c, r.sigma2_t, r.mu);
            if !facets.contains(&f) {
                facets.push(f);
            }
        }
        facets.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)).then(a.3.total_cmp(&b.3))
        });
        for f in facets {
            let in_facet: Vec<&&ResultRow> =
                sel.iter().filter(|r| (r.q, r.sigma2_c, r.sigma2_t, r.mu) == f).collect();
            let mut methods: Vec<String> = Vec::new();
            let mut taus: Vec<f64> = Vec::new();
            for r in &in_facet {
                let m = r.method[prefix.len()..].to_string();
                if !methods.contains(&m) {
                    methods.push(m);
                }
                if !taus.contains(&r.tau2) {
                    taus.push(r.tau2);
                }
            }
            taus.sort_by(f64::total_cmp);
            let table = taus
                .iter()
                .map(|&t| {
                    let vals = methods
                        .iter()
                        .map(|m| {
                            in_facet
                                .iter()
                                .find(|r| r.tau2 == t && &r.method[prefix.len()..] == m)
                                .map_or(f64::NAN, |r| r.value)
                        })
                        .collect();
                    (t, vals)
                })
                .collect();
            let tag = if metric == "mse_ratio" { "_mse_ratio" } else { "" };
            panels.push(Panel {
                file_name: format!(
                    "{}{tag}_n{n}_K{k}_q{}_s{}-{}_mu{}.csv",
                    family.name(),
                    format_number(f.0),
                    format_number(f.1),
                    format_number(f.2),
                    format_number(f.3)
                ),
                metric: metric.to_string(),
                methods,
                rows: table,
            });
        }
    }
    if panels.iter().all(|p| p.metric == "mse_ratio") {
        let available: BTreeSet<String> = FigureFamily::ALL
            .iter()
            .flat_map(|&fam| {
                rows.iter().filter(move |r| {
                    fam.tables().iter().any(|(p, m)| r.metric == *m && r.method.starts_with(p))
                        && fam.includes(r.sigma2_c, r.tau2)
                })
                .map(move |r| format!("{} --n {} --K {}", fam.name(), r.n_pattern, r.k))
            })
            .collect();
        let list = if available.is_empty() {
            "none".to_string()
        } else {
            available.into_iter().collect::<Vec<_>>().join("; ")
        };
        return Err(Error::Config(format!(
            "no results for family {} with n = {n}, K = {k}; available panels: {list}",
            family.name()
        )));
    }
    Ok(panels)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\nA,10,1.5,2,12,1.0,3\nB,8,0.5,1,8,0.2,1.5\n";

    #[test]
    fn dataset_parses_and_squares_sd() {
        let d = parse_dataset(TOY.as_bytes()).unwrap();
        assert_eq!(d.ids, vec!["A", "B"]);
        assert_eq!(d.studies[0].var_t, 4.0);
        assert_eq!(d.studies[0].var_c, 9.0);
        assert_eq!(d.studies[1].n_c, 8);
    }

    #[test]
    fn dataset_errors_name_position() {
        let bad = "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\nA,10,1.5,2,12,1.0,3\nB,8,x,1,8,0.2,1.5\n";
        match parse_dataset(bad.as_bytes()) {
            Err(Error::Parse { line: 3, column: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_dataset("".as_bytes()), Err(Error::Parse { line: 1, .. })));
        let short = "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\nA,10,1.5\n";
        assert!(matches!(parse_dataset(short.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let header_only = "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\n";
        assert!(parse_dataset(header_only.as_bytes()).is_err());
        let wrong = "id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\n";
        assert!(matches!(parse_dataset(wrong.as_bytes()), Err(Error::Parse { line: 1, column: 1, .. })));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok = r#"{"reps": 10, "seed": 1, "grids": [{"K": [5], "sizes": [{"equal": 20}],
            "q": [0.5], "sigma2": [[1, 1]], "tau2": [0.1]}]}"#;
        let cfg = GridConfig::from_json(ok).unwrap();
        assert_eq!(cfg.level, 0.95);
        assert_eq!(cfg.grids[0].mu, vec![0.0]);
        let bad = ok.replace("\"seed\"", "\"sede\": 2, \"seed\"");
        assert!(GridConfig::from_json(&bad).is_err());
        let bad_method = ok.replace("\"grids\"", "\"methods\": {\"tau2\": [\"XX\"]}, \"grids\"");
        assert!(GridConfig::from_json(&bad_method).is_err());
        let round = GridConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn number_tokens_round_trip() {
        for x in [0.1, 1e-300, -2.5, f64::INFINITY, f64::NEG_INFINITY] {
            assert_eq!(parse_number(&format_number(x)), Some(x));
        }
        assert!(parse_number("na").unwrap().is_nan());
        assert_eq!(parse_number("NaN"), None);
    }

    #[test]
    fn family_ranges() {
        assert!(FigureFamily::A1.includes(1.0, 0.3));
        assert!(!FigureFamily::A1.includes(1.0, 0.05));
        assert!(FigureFamily::A3.includes(1.0, 0.05));
        assert!(!FigureFamily::A3.includes(1.0, 0.2));
        assert!(FigureFamily::B5.includes(10.0, 0.7));
        assert!(!FigureFamily::B5.includes(1.0, 0.7));
        assert_eq!(FigureFamily::parse("b4"), Some(FigureFamily::B4));
    }
}
