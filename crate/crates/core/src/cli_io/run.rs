//! Subcommand drivers. Every artifact is produced as in-memory text first,
//! so runs can be compared byte for byte before anything touches the disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::analysis::{self, effective_probe, AnalysisReport};
use crate::domain::Field;
use crate::error::{Error, Result};
use crate::freeboundary;
use crate::solver::{solve_1d_oracle, solve_casting, SolveReport};
use crate::verify::{self, SuiteOptions, SuiteReport};

use super::config::RunConfig;
use super::snapshot::{field_to_string, load_field, profile_to_csv};

/// File name and contents, in write order.
pub type Artifacts = Vec<(String, String)>;

pub fn solve(cfg: &RunConfig) -> Result<(Field, SolveReport)> {
    let bc = cfg.boundary()?;
    solve_casting(&cfg.params, &cfg.grid, &bc, &cfg.schedule)
}

/// Runs the analysis configured in `cfg` on `u`, which must live on the
/// configured grid (the ramp width and probe depend on it).
pub fn analyze(cfg: &RunConfig, u: &Field) -> Result<AnalysisReport> {
    if u.grid() != &cfg.grid {
        let g = u.grid();
        return Err(Error::InvalidGrid(format!(
            "field is {}x{} on {}x{} but the config describes {}x{} on {}x{}",
            g.nx, g.nz, g.width, g.height, cfg.grid.nx, cfg.grid.nz, cfg.grid.width, cfg.grid.height
        )));
    }
    analysis::analyze(u, &cfg.params, &cfg.analysis.options)
}

/// `field.csv`, `solve_report.json` and `free_boundary.csv`.
pub fn solve_artifacts(cfg: &RunConfig, u: &Field, report: &SolveReport) -> Result<Artifacts> {
    let fb = freeboundary::extract(u, cfg.analysis.options.level);
    let probe = effective_probe(&cfg.params, &cfg.grid, cfg.analysis.options.probe);
    let stefan = freeboundary::stefan_residual(u, &fb, &cfg.params, probe);
    Ok(vec![
        ("field.csv".into(), field_to_string(u)),
        ("solve_report.json".into(), serde_json::to_string_pretty(report)? + "\n"),
        ("free_boundary.csv".into(), fb.to_csv(&stefan)),
    ])
}

pub fn analysis_artifact(report: &AnalysisReport) -> Result<(String, String)> {
    Ok(("analysis.json".into(), serde_json::to_string_pretty(report)? + "\n"))
}

pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in artifacts {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

/// Solve, and analyze when enabled: everything a sweep point writes.
pub struct RunOutput {
    pub field: Field,
    pub artifacts: Artifacts,
    pub report: SolveReport,
    pub analysis: Option<AnalysisReport>,
}

pub fn solve_and_analyze(cfg: &RunConfig) -> Result<RunOutput> {
    let (u, report) = solve(cfg)?;
    let mut artifacts = solve_artifacts(cfg, &u, &report)?;
    let analysis = if cfg.analysis.enabled {
        let rep = analyze(cfg, &u)?;
        artifacts.push(analysis_artifact(&rep)?);
        Some(rep)
    } else {
        None
    };
    Ok(RunOutput { field: u, artifacts, report, analysis })
}

/// Applies `f` to every item on up to `threads` workers; results keep the
/// input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                slots.lock().expect("no worker panicked holding the lock")[k] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every item ran")).collect()
}

/// One line of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dir: String,
    pub label: String,
    /// `ok` or the error message.
    pub status: String,
    pub newton_iterations: Option<usize>,
    pub final_residual: Option<f64>,
    /// `h+` in the column nearest `W / 2`.
    pub interface_height: Option<f64>,
    pub monotonicity_min: Option<f64>,
    pub graph_deviation: Option<f64>,
    pub stefan_median: Option<f64>,
    pub fb_gradient_max: Option<f64>,
}

impl SweepRow {
    pub const HEADER: &'static str = "run,label,status,newton_iterations,final_residual,interface_height,monotonicity_min,graph_deviation,stefan_median,fb_gradient_max";

    fn csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map_or(String::new(), |v| v.to_string())
        }
        let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.dir,
            quote(&self.label),
            quote(&self.status),
            opt(self.newton_iterations),
            self.final_residual.map_or(String::new(), |v| format!("{v:e}")),
            opt(self.interface_height),
            opt(self.monotonicity_min),
            opt(self.graph_deviation),
            opt(self.stefan_median),
            opt(self.fb_gradient_max),
        )
    }
}

fn sweep_point(dir: String, label: String, cfg: &RunConfig, root: &Path) -> SweepRow {
    let mut row = SweepRow {
        dir,
        label,
        status: "ok".into(),
        newton_iterations: None,
        final_residual: None,
        interface_height: None,
        monotonicity_min: None,
        graph_deviation: None,
        stefan_median: None,
        fb_gradient_max: None,
    };
    let result = (|| -> Result<()> {
        let RunOutput { field, mut artifacts, report, analysis } = solve_and_analyze(cfg)?;
        artifacts.insert(0, ("config.toml".into(), cfg.to_toml()));
        write_artifacts(&root.join(&row.dir), &artifacts)?;
        row.newton_iterations = Some(report.newton_iterations);
        row.final_residual = Some(report.final_residual);
        let fb = freeboundary::extract(&field, cfg.analysis.options.level);
        let mid = fb.columns.iter().min_by(|a, b| (a.x - 0.5 * cfg.grid.width).abs().total_cmp(&(b.x - 0.5 * cfg.grid.width).abs()));
        row.interface_height = mid.and_then(|c| c.h_plus);
        if let Some(a) = analysis {
            row.monotonicity_min = Some(a.monotonicity_min);
            row.graph_deviation = Some(a.graph_deviation);
            row.stefan_median = a.stefan.median;
            row.fb_gradient_max = a.fb_gradient_max;
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.status = e.to_string();
    }
    row
}

/// Runs every point of the sweep into `out/run_NNN/` and writes
/// `out/summary.csv`. Points fail independently.
pub fn sweep(cfg: &RunConfig, out: &Path, threads: usize) -> Result<Vec<SweepRow>> {
    let points = cfg.expand_sweep()?;
    std::fs::create_dir_all(out)?;
    let jobs: Vec<(String, String, RunConfig)> = points
        .into_iter()
        .enumerate()
        .map(|(k, (label, c))| (format!("run_{k:03}"), label, c))
        .collect();
    let rows = parallel_map(&jobs, threads, |(dir, label, c)| sweep_point(dir.clone(), label.clone(), c, out));
    let mut summary = format!("{}\n", SweepRow::HEADER);
    for row in &rows {
        summary.push_str(&row.csv());
        summary.push('\n');
    }
    std::fs::write(out.join("summary.csv"), summary)?;
    Ok(rows)
}

/// Which subcommand to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Oracle1d,
    Analyze,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    super::config::parse_config(&text)
}

/// Runs a subcommand, printing a short summary to stdout. `Ok(false)` means
/// the work ran but did not pass: a failed criterion or a failed sweep point.
pub fn execute(inv: &Invocation) -> Result<bool> {
    let cfg = inv.config.as_deref().map(load_config).transpose()?;
    if inv.command == Command::Verify {
        let seed = cfg.as_ref().map_or(0, |c| c.output.seed);
        let report = verify::run_suite(&SuiteOptions { threads: inv.threads, seed });
        let text = suite_text(&report);
        print!("{text}");
        let out = inv.out.clone().or_else(|| cfg.as_ref().map(|c| c.output.dir.clone()));
        if let Some(dir) = out {
            write_artifacts(&dir, &vec![("verify.txt".into(), text)])?;
        }
        return Ok(report.passed());
    }
    let cfg = cfg.ok_or_else(|| Error::Config(vec!["--config is required for this subcommand".into()]))?;
    let out = inv.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match inv.command {
        Command::Solve => {
            let (u, report) = solve(&cfg)?;
            write_artifacts(&out, &solve_artifacts(&cfg, &u, &report)?)?;
            println!(
                "solved {}x{} in {} Newton steps over {} stages, residual {:.3e}, {:.2} s",
                cfg.grid.nx,
                cfg.grid.nz,
                report.newton_iterations,
                report.stages.len(),
                report.final_residual,
                report.wall_time.as_secs_f64()
            );
            println!("wrote field.csv, solve_report.json, free_boundary.csv to {}", out.display());
            Ok(true)
        }
        Command::Oracle1d => {
            let prof = solve_1d_oracle(&cfg.params, cfg.grid.height, cfg.grid.nz)?;
            write_artifacts(&out, &vec![("profile1d.csv".into(), profile_to_csv(&prof))])?;
            println!("z0 = {:.12}, flux jump = {}", prof.z0, prof.flux_jump());
            println!("wrote profile1d.csv to {}", out.display());
            Ok(true)
        }
        Command::Analyze => {
            let path = cfg.analysis.snapshot.clone().unwrap_or_else(|| out.join("field.csv"));
            let u = load_field(&path)?;
            let rep = analyze(&cfg, &u)?;
            write_artifacts(&out, &vec![analysis_artifact(&rep)?])?;
            print!("{}", analysis_summary(&rep, cfg.analysis.stefan_threshold));
            println!("wrote analysis.json to {}", out.display());
            Ok(true)
        }
        Command::Sweep => {
            let rows = sweep(&cfg, &out, inv.threads)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("{} runs, {failed} failed; summary in {}", rows.len(), out.join("summary.csv").display());
            Ok(failed == 0)
        }
        Command::Verify => unreachable!("handled above"),
    }
}

pub fn suite_text(report: &SuiteReport) -> String {
    let mut text = String::new();
    for c in &report.criteria {
        writeln!(text, "{}", c.line()).expect("writing to a string");
    }
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    writeln!(text, "{passed}/{} criteria passed in {:.1} s", report.criteria.len(), report.elapsed.as_secs_f64())
        .expect("writing to a string");
    text
}

pub fn analysis_summary(rep: &AnalysisReport, stefan_threshold: f64) -> String {
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4e}"));
    let mut s = String::new();
    let _ = writeln!(s, "monotonicity_min  {:.4e}", rep.monotonicity_min);
    let _ = writeln!(s, "graph_deviation   {:.4e} ({:.2} cells)", rep.graph_deviation, rep.graph_deviation_cells);
    for g in &rep.growth {
        let _ = writeln!(
            s,
            "growth ({:.3}, {:.3}) {:?}: alpha {:.3}, C {:.3}",
            g.center.x, g.center.z, g.kind, g.exponent, g.constant
        );
    }
    for c in &rep.campanato {
        let _ = writeln!(s, "campanato ({:.3}, {:.3}): spread {:.3}", c.center.x, c.center.z, c.spread());
    }
    let below = rep.stefan.median.is_some_and(|m| m < stefan_threshold);
    let _ = writeln!(
        s,
        "stefan median {} (threshold {stefan_threshold}: {}), max {}",
        fmt(rep.stefan.median),
        if below { "below" } else { "NOT below" },
        fmt(rep.stefan.max)
    );
    let _ = writeln!(
        s,
        "hopf {} discs, {} flagged, min margin {}, min derivative {}",
        rep.hopf.checked,
        rep.hopf.flagged,
        fmt(rep.hopf.min_margin),
        fmt(rep.hopf.min_derivative)
    );
    for c in &rep.caccioppoli {
        let _ = writeln!(s, "caccioppoli r={}: {:.5e}", c.radius, c.energy);
    }
    let _ = writeln!(s, "fb_gradient_max {}", fmt(rep.fb_gradient_max));
    s
}
