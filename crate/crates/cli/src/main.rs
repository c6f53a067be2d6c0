use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use remeta_core::io::MethodNames;
use remeta_core::selftest::run_checks;
use remeta_core::sim::PRESETS;
use remeta_core::{
    ci_mu_hksj, ci_mu_ssw_t, ci_mu_z, expand_grid, figure_panels, mu_iv, mu_ssw, preset, read_dataset,
    read_results, rows_from_metrics, run_scenario, tau2_ci, tau2::estimate, write_results, Dataset, Error,
    FigureFamily, GridConfig, MuCiMethod, MuMethod, Result, Tau2Method,
};

#[derive(Parser)]
#[command(name = "remeta", version, about = "Random-effects meta-analysis of mean differences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate heterogeneity and the overall effect for a study file.
    Analyze {
        /// CSV with columns study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c.
        file: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// τ² point estimators (comma separated); default all.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// τ² interval estimators; default all.
        #[arg(long, value_delimiter = ',')]
        ci_methods: Option<Vec<String>>,
        /// Overall-effect estimators; default all.
        #[arg(long, value_delimiter = ',')]
        mu_methods: Option<Vec<String>>,
        /// Overall-effect interval estimators; default all.
        #[arg(long, value_delimiter = ',')]
        mu_ci_methods: Option<Vec<String>>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a simulation grid from a JSON config or a built-in preset.
    Simulate {
        /// Config file path, or one of: table2-small, table2-full.
        config: String,
        /// Worker threads (default: all cores).
        #[arg(long, env = "REMETA_THREADS")]
        threads: Option<usize>,
        /// Required to run the full-size preset.
        #[arg(long)]
        full: bool,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Results file; defaults to the config's `output`, else stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pivot a results file into per-panel plot tables.
    FigureData {
        results: PathBuf,
        /// A1 … A6 (τ²), B1 … B6 (μ).
        #[arg(long)]
        family: String,
        /// Size pattern label, e.g. 20 or u30.
        #[arg(long)]
        n: String,
        #[arg(long = "K")]
        k: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the built-in consistency checks.
    Selftest {
        #[arg(long, default_value_t = 1.0, hide = true)]
        tolerance_scale: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze { file, level, methods, ci_methods, mu_methods, mu_ci_methods, output } => {
            let names = MethodNames { tau2: methods, tau2_ci: ci_methods, mu: mu_methods, mu_ci: mu_ci_methods };
            analyze(&file, level, &names, output.as_deref())
        }
        Command::Simulate { config, threads, full, reps, output } => {
            simulate(&config, threads, full, reps, output.as_deref())
        }
        Command::FigureData { results, family, n, k, out_dir } => figure_data(&results, &family, &n, k, &out_dir),
        Command::Selftest { tolerance_scale } => selftest(tolerance_scale),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn analyze(file: &Path, level: f64, names: &MethodNames, output: Option<&Path>) -> Result<ExitCode> {
    let sel = names.resolve()?;
    let input = read_dataset(file)?;
    let ds = Dataset::new(input.studies.clone())?;
    let mut out = open_output(output)?;

    writeln!(out, "studies: {}  level: {level}", ds.k())?;
    writeln!(out, "{:<16} {:>14} {:>14}", "study", "y", "v2")?;
    for (id, e) in input.ids.iter().zip(ds.effects()) {
        writeln!(out, "{:<16} {:>14.6} {:>14.6}", id, e.y, e.v2)?;
    }

    let mut tau2_cache: Vec<(Tau2Method, Option<f64>)> = Vec::new();
    let mut tau2_of = |m: Tau2Method| -> Option<f64> {
        if let Some((_, v)) = tau2_cache.iter().find(|(k, _)| *k == m) {
            return *v;
        }
        let v = estimate(&ds, m).ok().filter(|r| r.converged).map(|r| r.value);
        tau2_cache.push((m, v));
        v
    };

    writeln!(out, "\nbetween-study variance")?;
    writeln!(out, "{:<10} {:>14} {:>10}", "method", "estimate", "note")?;
    for &m in &sel.tau2 {
        match estimate(&ds, m) {
            Ok(r) => {
                let note = if !r.converged { "no-conv" } else if r.truncated { "at 0" } else { "" };
                writeln!(out, "{:<10} {:>14.6} {:>10}", m.name(), r.value, note)?
            }
            Err(e) => writeln!(out, "{:<10} {:>14} {e}", m.name(), "na")?,
        }
    }
    if !sel.tau2_ci.is_empty() {
        writeln!(out, "\nbetween-study variance intervals")?;
        writeln!(out, "{:<10} {:>14} {:>14}", "method", "lower", "upper")?;
    }
    for &m in &sel.tau2_ci {
        match tau2_ci::interval(&ds, m, level) {
            Ok(ci) => writeln!(out, "{:<10} {:>14.6} {:>14.6}", m.name(), ci.lower, ci.upper)?,
            Err(e) => writeln!(out, "{:<10} {:>14} {:>14} {e}", m.name(), "na", "na")?,
        }
    }

    writeln!(out, "\noverall effect")?;
    writeln!(out, "{:<10} {:>14} {:>14}", "method", "estimate", "std.err")?;
    for &m in &sel.mu {
        let r = match m {
            MuMethod::Ssw => Ok(mu_ssw(&ds)),
            MuMethod::Iv(t) => match tau2_of(t) {
                Some(t2) => mu_iv(&ds, t2, t),
                None => Err(Error::Parameter(format!("{t} estimate unavailable"))),
            },
        };
        match r {
            // SSW carries no variance of its own; its intervals plug one in.
            Ok(r) if r.variance.is_nan() => writeln!(out, "{:<10} {:>14.6} {:>14}", m.name(), r.estimate, "na")?,
            Ok(r) => writeln!(out, "{:<10} {:>14.6} {:>14.6}", m.name(), r.estimate, r.variance.sqrt())?,
            Err(e) => writeln!(out, "{:<10} {:>14} {e}", m.name(), "na")?,
        }
    }
    if !sel.mu_ci.is_empty() {
        writeln!(out, "\noverall effect intervals")?;
        writeln!(out, "{:<10} {:>14} {:>14}", "method", "lower", "upper")?;
    }
    for &m in &sel.mu_ci {
        let ci = match tau2_of(m.tau2_method()) {
            None => Err(Error::Parameter(format!("{} estimate unavailable", m.tau2_method()))),
            Some(t2) => match m {
                MuCiMethod::Z(t) => mu_iv(&ds, t2, t).and_then(|r| ci_mu_z(&r, level)),
                MuCiMethod::Hksj | MuCiMethod::HksjWt => ci_mu_hksj(&ds, t2, level, m),
                MuCiMethod::SswWt | MuCiMethod::SswCdl => ci_mu_ssw_t(&ds, t2, level, m),
            },
        };
        match ci {
            Ok(ci) => writeln!(out, "{:<10} {:>14.6} {:>14.6}", m.name(), ci.lower, ci.upper)?,
            Err(e) => writeln!(out, "{:<10} {:>14} {:>14} {e}", m.name(), "na", "na")?,
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn load_config(source: &str, full: bool) -> Result<GridConfig> {
    let path = Path::new(source);
    if path.exists() {
        return GridConfig::load(path);
    }
    match preset(source) {
        Some(_) if source == "table2-full" && !full => Err(Error::Config(
            "table2-full runs 3072 scenarios at 10,000 replications; pass --full to confirm".into(),
        )),
        Some(cfg) => Ok(cfg),
        None => Err(Error::Config(format!(
            "`{source}` is neither a config file nor a preset ({})",
            PRESETS.join(", ")
        ))),
    }
}

fn simulate(source: &str, threads: Option<usize>, full: bool, reps: Option<usize>, output: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = load_config(source, full)?;
    if let Some(r) = reps {
        cfg.reps = r;
    }
    let sel = cfg.selection()?;
    let scenarios = expand_grid(&cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let start = Instant::now();
    let mut rows = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        let t0 = Instant::now();
        let agg = pool.install(|| run_scenario(sc, &sel, cfg.level))?;
        rows.extend(rows_from_metrics(&agg));
        eprintln!(
            "[{}/{}] K={} n={} q={} sigma2=({}, {}) tau2={} mu={}  {:.2}s",
            i + 1,
            scenarios.len(),
            sc.k,
            sc.sizes.label(),
            sc.q,
            sc.sigma2_c,
            sc.sigma2_t,
            sc.tau2,
            sc.mu,
            t0.elapsed().as_secs_f64()
        );
    }
    eprintln!("done: {} scenarios in {:.1}s", scenarios.len(), start.elapsed().as_secs_f64());

    let target = output.map(Path::to_path_buf).or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let out = open_output(target.as_deref())?;
    write_results(&rows, out)?;
    Ok(ExitCode::SUCCESS)
}

fn figure_data(results: &Path, family: &str, n: &str, k: usize, out_dir: &Path) -> Result<ExitCode> {
    let fam = FigureFamily::parse(family).ok_or_else(|| {
        let names: Vec<&str> = FigureFamily::ALL.iter().map(|f| f.name()).collect();
        Error::Config(format!("unknown family `{family}` (expected one of {})", names.join(", ")))
    })?;
    let file = File::open(results).map_err(|e| Error::Io(format!("{}: {e}", results.display())))?;
    let rows = read_results(file)?;
    let panels = figure_panels(&rows, fam, n, k)?;
    std::fs::create_dir_all(out_dir)?;
    for p in panels {
        let path = out_dir.join(&p.file_name);
        let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        p.write(BufWriter::new(f))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest(scale: f64) -> Result<ExitCode> {
    let start = Instant::now();
    let outcomes = run_checks(scale);
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    for o in &outcomes {
        println!("{} {:<42} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!(
        "{} checks, {} failed ({:.2}s)",
        outcomes.len(),
        failed,
        start.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
