//! Run configuration: TOML schema, presets and validation.
//!
//! A config may name a `preset` at the top level and then override any key
//! of the sections `[params]`, `[grid]`, `[bc]`, `[schedule]`, `[analysis]`,
//! `[output]` and `[sweep]`. Unknown keys, ill-typed values and violated
//! invariants are all collected and reported together.

use std::path::PathBuf;

use toml::{Table, Value};

use crate::analysis::AnalysisOptions;
use crate::assembly::{Convection, Quadrature, Scheme};
use crate::domain::{interface_level, make_monotone_g, BoundaryData, Grid, Params, RampShape};
use crate::error::{Error, Result};
use crate::freeboundary::Probe;
use crate::solver::{solve_1d_oracle, Schedule};

pub const PRESETS: [&str; 5] = ["one_phase_p2", "one_phase_p3", "one_phase_p4", "two_phase_p3", "oracle_embed"];

/// Keys a `[sweep]` section may list, with the section they override.
pub const SWEEP_KEYS: [(&str, &str); 10] = [
    ("p", "params"),
    ("a", "params"),
    ("ell", "params"),
    ("m_plus", "params"),
    ("m_minus", "params"),
    ("width", "grid"),
    ("height", "grid"),
    ("nx", "grid"),
    ("nz", "grid"),
    ("onset", "bc"),
];

const ROOT_KEYS: [&str; 8] = ["preset", "params", "grid", "bc", "schedule", "analysis", "output", "sweep"];
const PARAMS_KEYS: [&str; 5] = ["p", "a", "ell", "m_plus", "m_minus"];
const GRID_KEYS: [&str; 4] = ["width", "height", "nx", "nz"];
const BC_KEYS: [&str; 3] = ["preset", "ramp", "onset"];
const SCHEDULE_KEYS: [&str; 10] = [
    "eps0",
    "delta0",
    "rho",
    "eps_target",
    "delta_target",
    "tol",
    "max_iter",
    "nested",
    "convection",
    "quadrature",
];
const ANALYSIS_KEYS: [&str; 10] = [
    "enabled",
    "level",
    "probe_cells",
    "growth_radius",
    "campanato_radius",
    "campanato_levels",
    "hopf_radius",
    "caccioppoli_radius",
    "stefan_threshold",
    "snapshot",
];
const OUTPUT_KEYS: [&str; 2] = ["dir", "seed"];

/// Lateral boundary data family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcPreset {
    /// Monotone ramp from 0 to `m+`; needs `m- = 0`.
    OnePhase,
    /// Monotone ramp from `-m-` to `m+`; needs `m- > 0`.
    TwoPhase,
    /// The exact one-dimensional profile on both walls.
    OracleEmbed,
}

impl BcPreset {
    pub fn name(self) -> &'static str {
        match self {
            BcPreset::OnePhase => "one_phase",
            BcPreset::TwoPhase => "two_phase",
            BcPreset::OracleEmbed => "oracle_embed",
        }
    }

    fn parse(s: &str) -> Option<BcPreset> {
        [BcPreset::OnePhase, BcPreset::TwoPhase, BcPreset::OracleEmbed].into_iter().find(|b| b.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcConfig {
    pub preset: BcPreset,
    pub ramp: RampShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub enabled: bool,
    /// `level` defaults to the interface level of the target ramp.
    pub options: AnalysisOptions,
    /// `analyze` reports whether the median Stefan residual is below this.
    pub stefan_threshold: f64,
    /// Field snapshot read by `analyze`; defaults to `<out>/field.csv`.
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Seed for every randomized check.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Physical parameters; `eps` and `delta` hold the schedule targets.
    pub params: Params,
    pub grid: Grid,
    pub bc: BcConfig,
    pub schedule: Schedule,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
    pub sweep: Vec<SweepAxis>,
    table: Table,
}

impl RunConfig {
    /// The Dirichlet data on the configured grid.
    pub fn boundary(&self) -> Result<BoundaryData> {
        match self.bc.preset {
            BcPreset::OnePhase | BcPreset::TwoPhase => make_monotone_g(&self.params, &self.grid, self.bc.ramp),
            BcPreset::OracleEmbed => {
                let prof = solve_1d_oracle(&self.params, self.grid.height, self.grid.nz)?;
                BoundaryData::from_profile(&self.grid, &self.params, &prof.u, false)
            }
        }
    }

    /// The merged document (preset plus overrides) this config was built from.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.table).expect("config tables serialize")
    }

    /// One config per point of the cartesian product of the sweep axes. Axes
    /// are taken in alphabetical key order, the last varying fastest; each
    /// config is labelled `key=value,...`.
    pub fn expand_sweep(&self) -> Result<Vec<(String, RunConfig)>> {
        let mut out = Vec::new();
        let counts: Vec<usize> = self.sweep.iter().map(|a| a.values.len()).collect();
        let total: usize = counts.iter().product();
        for k in 0..total {
            let mut table = self.table.clone();
            table.remove("sweep");
            let mut rem = k;
            let mut label = Vec::new();
            for (axis, &n) in self.sweep.iter().zip(&counts).rev() {
                let v = axis.values[rem % n];
                rem /= n;
                let section = SWEEP_KEYS.iter().find(|(key, _)| *key == axis.key).expect("validated").1;
                let value = if section == "grid" && (axis.key == "nx" || axis.key == "nz") {
                    Value::Integer(v as i64)
                } else {
                    Value::Float(v)
                };
                let sec = table.entry(section).or_insert_with(|| Value::Table(Table::new()));
                if let Value::Table(t) = sec {
                    t.insert(axis.key.clone(), value);
                }
                label.push(format!("{}={v}", axis.key));
            }
            label.reverse();
            out.push((label.join(","), resolve(table)?));
        }
        Ok(out)
    }
}

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "one_phase_p2" => {
            "[params]\np = 2.0\nm_minus = 0.0\n[bc]\npreset = \"one_phase\"\nramp = \"piecewise_cubic\"\nonset = 0.25\n"
        }
        "one_phase_p3" => {
            "[params]\np = 3.0\nm_minus = 0.0\n[bc]\npreset = \"one_phase\"\nramp = \"piecewise_cubic\"\nonset = 0.25\n"
        }
        "one_phase_p4" => {
            "[params]\np = 4.0\nm_minus = 0.0\n[bc]\npreset = \"one_phase\"\nramp = \"piecewise_cubic\"\nonset = 0.25\n"
        }
        "two_phase_p3" => "[params]\np = 3.0\nm_minus = 0.5\n[bc]\npreset = \"two_phase\"\nramp = \"smoothstep\"\n",
        "oracle_embed" => "[params]\np = 2.0\nm_minus = 0.0\n[grid]\nnx = 9\n[bc]\npreset = \"oracle_embed\"\n",
        _ => return None,
    })
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let user: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    let mut table = Table::new();
    match user.get("preset") {
        None => {}
        Some(Value::String(name)) => match preset_text(name) {
            Some(text) => table = text.parse().expect("preset documents parse"),
            None => {
                return Err(Error::Config(vec![format!(
                    "unknown preset \"{name}\" (expected one of {})",
                    PRESETS.join(", ")
                )]))
            }
        },
        Some(v) => return Err(Error::Config(vec![format!("preset: expected a string, found {}", v.type_str())])),
    }
    for (key, value) in user {
        match (table.get_mut(&key), value) {
            (Some(Value::Table(base)), Value::Table(over)) => base.extend(over),
            (_, value) => {
                table.insert(key, value);
            }
        }
    }
    resolve(table)
}

/// The config a preset name stands for, on an `n x n` grid.
pub fn preset_config(name: &str, n: usize) -> Result<RunConfig> {
    parse_config(&format!("preset = \"{name}\"\n[grid]\nnx = {n}\nnz = {n}\n"))
}

#[derive(Default)]
struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn section<'t>(&mut self, root: &'t Table, name: &str, allowed: &[&str]) -> Option<&'t Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                for key in t.keys() {
                    if !allowed.contains(&key.as_str()) {
                        self.errors.push(format!("[{name}] unknown key \"{key}\""));
                    }
                }
                Some(t)
            }
            Some(v) => {
                self.errors.push(format!("[{name}] must be a table, found {}", v.type_str()));
                None
            }
        }
    }

    fn get<'t>(&self, t: Option<&'t Table>, key: &str) -> Option<&'t Value> {
        t.and_then(|t| t.get(key))
    }

    fn mismatch(&mut self, sec: &str, key: &str, want: &str, v: &Value) {
        self.errors.push(format!("[{sec}] {key}: expected {want}, found {}", v.type_str()));
    }

    fn num(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<f64> {
        match self.get(t, key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            v => {
                self.mismatch(sec, key, "a number", v);
                None
            }
        }
    }

    fn int(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<u64> {
        match self.get(t, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(i) => {
                self.errors.push(format!("[{sec}] {key} must be nonnegative, got {i}"));
                None
            }
            v => {
                self.mismatch(sec, key, "an integer", v);
                None
            }
        }
    }

    fn boolean(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<bool> {
        match self.get(t, key)? {
            Value::Boolean(b) => Some(*b),
            v => {
                self.mismatch(sec, key, "a boolean", v);
                None
            }
        }
    }

    fn string(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<String> {
        match self.get(t, key)? {
            Value::String(s) => Some(s.clone()),
            v => {
                self.mismatch(sec, key, "a string", v);
                None
            }
        }
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

fn resolve(table: Table) -> Result<RunConfig> {
    let mut r = Reader::default();
    for key in table.keys() {
        if !ROOT_KEYS.contains(&key.as_str()) {
            r.errors.push(format!("unknown key \"{key}\""));
        }
    }
    let preset = match table.get("preset") {
        Some(Value::String(s)) => Some(s.clone()),
        _ => None,
    };

    let t = r.section(&table, "params", &PARAMS_KEYS);
    let p = r.num(t, "params", "p");
    if p.is_none() && r.get(t, "p").is_none() {
        r.errors.push("[params] p is required".into());
    }
    let mut params = Params {
        p: p.unwrap_or(f64::NAN),
        a: r.num(t, "params", "a").unwrap_or(1.0),
        ell: r.num(t, "params", "ell").unwrap_or(1.0),
        m_plus: r.num(t, "params", "m_plus").unwrap_or(1.0),
        m_minus: r.num(t, "params", "m_minus").unwrap_or(0.0),
        eps: 0.0,
        delta: 1.0,
    };
    if p.is_some() {
        r.errors.extend(params.violations());
    }

    let t = r.section(&table, "grid", &GRID_KEYS);
    let width = r.num(t, "grid", "width").unwrap_or(1.0);
    let height = r.num(t, "grid", "height").unwrap_or(1.0);
    let nx = r.int(t, "grid", "nx").unwrap_or(129) as usize;
    let nz = r.int(t, "grid", "nz").unwrap_or(129) as usize;
    let grid = match Grid::new(width, height, nx, nz) {
        Ok(g) => Some(g),
        Err(e) => {
            r.errors.push(format!("[grid] {e}"));
            None
        }
    };

    let t = r.section(&table, "bc", &BC_KEYS);
    let bc_preset = match r.string(t, "bc", "preset") {
        None => BcPreset::OnePhase,
        Some(s) => BcPreset::parse(&s).unwrap_or_else(|| {
            r.errors.push(format!("[bc] unknown preset \"{s}\" (expected one_phase, two_phase or oracle_embed)"));
            BcPreset::OnePhase
        }),
    };
    let onset = r.num(t, "bc", "onset");
    let ramp_name = r.string(t, "bc", "ramp").unwrap_or_else(|| {
        if bc_preset == BcPreset::OnePhase { "piecewise_cubic" } else { "smoothstep" }.to_string()
    });
    let ramp = match ramp_name.as_str() {
        "smoothstep" => {
            r.check(onset.is_none(), "[bc] onset applies only to ramp = \"piecewise_cubic\"");
            RampShape::Smoothstep
        }
        "piecewise_cubic" => {
            let onset = onset.unwrap_or(0.25);
            r.check((0.0..1.0).contains(&onset), format!("[bc] onset must lie in [0, 1), got {onset}"));
            RampShape::PiecewiseCubic { onset }
        }
        other => {
            r.errors.push(format!("[bc] unknown ramp \"{other}\" (expected smoothstep or piecewise_cubic)"));
            RampShape::Smoothstep
        }
    };
    match bc_preset {
        BcPreset::OnePhase => r.check(params.m_minus == 0.0, "bc preset \"one_phase\" requires m_minus = 0"),
        BcPreset::TwoPhase => r.check(params.m_minus > 0.0, "bc preset \"two_phase\" requires m_minus > 0"),
        BcPreset::OracleEmbed => r.check(
            params.m_minus == 0.0 || params.p == 2.0,
            "bc preset \"oracle_embed\" requires m_minus = 0 or p = 2",
        ),
    }

    let t = r.section(&table, "schedule", &SCHEDULE_KEYS);
    let mut schedule = match grid {
        Some(g) if params.violations().is_empty() => Schedule::for_problem(&params, &g),
        _ => Schedule::single(0.0, 1.0, 1e-9),
    };
    let fields: [(&str, &mut f64); 6] = [
        ("eps0", &mut schedule.eps0),
        ("delta0", &mut schedule.delta0),
        ("rho", &mut schedule.rho),
        ("eps_target", &mut schedule.eps_target),
        ("delta_target", &mut schedule.delta_target),
        ("tol", &mut schedule.tol),
    ];
    for (key, slot) in fields {
        if let Some(v) = r.num(t, "schedule", key) {
            *slot = v;
        }
    }
    if let Some(v) = r.int(t, "schedule", "max_iter") {
        schedule.max_iter = v as usize;
    }
    if let Some(v) = r.boolean(t, "schedule", "nested") {
        schedule.nested = v;
    }
    let mut scheme = Scheme::default();
    match r.string(t, "schedule", "convection").as_deref() {
        None => {}
        Some("upwind") => scheme.convection = Convection::Upwind,
        Some("central") => scheme.convection = Convection::Central,
        Some(other) => r.errors.push(format!("[schedule] unknown convection \"{other}\" (expected upwind or central)")),
    }
    match r.string(t, "schedule", "quadrature").as_deref() {
        None => {}
        Some("cell_center") => scheme.quadrature = Quadrature::CellCenter,
        Some("gauss2") => scheme.quadrature = Quadrature::Gauss2,
        Some(other) => {
            r.errors.push(format!("[schedule] unknown quadrature \"{other}\" (expected cell_center or gauss2)"))
        }
    }
    schedule.scheme = scheme;
    if p.is_some() && params.violations().is_empty() {
        r.errors.extend(schedule.violations(params.p).into_iter().map(|e| format!("[schedule] {e}")));
    }
    params = params.with_regularization(schedule.eps_target, schedule.delta_target);

    let t = r.section(&table, "analysis", &ANALYSIS_KEYS);
    let defaults = AnalysisOptions::default();
    let mut options = AnalysisOptions {
        level: r.num(t, "analysis", "level").unwrap_or(f64::NAN),
        probe: Probe { cells: r.num(t, "analysis", "probe_cells").unwrap_or(defaults.probe.cells) },
        growth_radius: r.num(t, "analysis", "growth_radius").unwrap_or(defaults.growth_radius),
        campanato_radius: r.num(t, "analysis", "campanato_radius").unwrap_or(defaults.campanato_radius),
        campanato_levels: r.int(t, "analysis", "campanato_levels").map_or(defaults.campanato_levels, |v| v as usize),
        hopf_radius: r.num(t, "analysis", "hopf_radius").unwrap_or(defaults.hopf_radius),
        caccioppoli_radius: r.num(t, "analysis", "caccioppoli_radius").unwrap_or(defaults.caccioppoli_radius),
    };
    let explicit_level = !options.level.is_nan();
    if !explicit_level {
        options.level = interface_level(params.p, schedule.delta_target);
    }
    // a derived level is only meaningful once p and delta are
    r.check(!explicit_level || options.level.is_finite(), "[analysis] level must be finite");
    r.check(options.probe.cells >= 1.0, "[analysis] probe_cells must be at least 1");
    for (key, v) in [
        ("growth_radius", options.growth_radius),
        ("campanato_radius", options.campanato_radius),
        ("hopf_radius", options.hopf_radius),
        ("caccioppoli_radius", options.caccioppoli_radius),
    ] {
        r.check(v > 0.0 && v <= 1.0, format!("[analysis] {key} must lie in (0, 1], got {v}"));
    }
    r.check(options.campanato_levels >= 1, "[analysis] campanato_levels must be at least 1");
    let stefan_threshold = r.num(t, "analysis", "stefan_threshold").unwrap_or(0.1);
    r.check(stefan_threshold > 0.0, "[analysis] stefan_threshold must be positive");
    let analysis = AnalysisConfig {
        enabled: r.boolean(t, "analysis", "enabled").unwrap_or(true),
        options,
        stefan_threshold,
        snapshot: r.string(t, "analysis", "snapshot").map(PathBuf::from),
    };

    let t = r.section(&table, "output", &OUTPUT_KEYS);
    let output = OutputConfig {
        dir: r.string(t, "output", "dir").map_or_else(|| PathBuf::from("castflow-out"), PathBuf::from),
        seed: r.int(t, "output", "seed").unwrap_or(0),
    };

    let mut sweep = Vec::new();
    if let Some(Value::Table(t)) = table.get("sweep") {
        for (key, value) in t {
            if !SWEEP_KEYS.iter().any(|(k, _)| k == key) {
                r.errors.push(format!("[sweep] unknown key \"{key}\""));
                continue;
            }
            let Value::Array(items) = value else {
                r.mismatch("sweep", key, "an array of numbers", value);
                continue;
            };
            let mut values = Vec::new();
            for item in items {
                match item {
                    Value::Float(x) => values.push(*x),
                    Value::Integer(i) => values.push(*i as f64),
                    v => r.mismatch("sweep", key, "numbers", v),
                }
            }
            r.check(!values.is_empty(), format!("[sweep] {key} lists no values"));
            if key == "nx" || key == "nz" {
                r.check(
                    values.iter().all(|v| v.fract() == 0.0 && *v >= 0.0),
                    format!("[sweep] {key} values must be nonnegative integers"),
                );
            }
            sweep.push(SweepAxis { key: key.clone(), values });
        }
    } else if let Some(v) = table.get("sweep") {
        r.errors.push(format!("[sweep] must be a table, found {}", v.type_str()));
    }

    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors));
    }
    Ok(RunConfig {
        preset,
        params,
        grid: grid.expect("grid errors were reported"),
        bc: BcConfig { preset: bc_preset, ramp },
        schedule,
        analysis,
        output,
        sweep,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(errs)) => errs,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_documented_defaults() {
        let cfg = parse_config("[params]\np = 3\n").unwrap();
        assert_eq!(cfg.params.p, 3.0);
        assert_eq!((cfg.params.a, cfg.params.ell, cfg.params.m_plus, cfg.params.m_minus), (1.0, 1.0, 1.0, 0.0));
        assert_eq!((cfg.grid.nx, cfg.grid.nz, cfg.grid.width, cfg.grid.height), (129, 129, 1.0, 1.0));
        assert_eq!(cfg.bc.preset, BcPreset::OnePhase);
        assert_eq!(cfg.bc.ramp, RampShape::PiecewiseCubic { onset: 0.25 });
        let base = Params { eps: 0.0, delta: 1.0, ..cfg.params };
        assert_eq!(cfg.schedule, Schedule::for_problem(&base, &cfg.grid));
        assert_eq!(cfg.params.delta, cfg.schedule.delta_target);
        assert_eq!(cfg.analysis.options.level, interface_level(3.0, cfg.schedule.delta_target));
        assert!(cfg.analysis.enabled);
        assert_eq!(cfg.output.dir, PathBuf::from("castflow-out"));
        assert_eq!(cfg.output.seed, 0);
        assert!(cfg.sweep.is_empty());
    }

    #[test]
    fn p_below_one_is_rejected() {
        let errs = errors("[params]\np = 0.5\n");
        assert!(errs.iter().any(|e| e == "p must exceed 1"), "{errs:?}");
    }

    #[test]
    fn two_phase_needs_a_bottom_magnitude() {
        let errs = errors("[params]\np = 3\nm_minus = 0\n[bc]\npreset = \"two_phase\"\n");
        assert!(errs.iter().any(|e| e.contains("requires m_minus > 0")), "{errs:?}");
        let errs = errors("preset = \"two_phase_p3\"\n[params]\nm_minus = 0\n");
        assert!(errs.iter().any(|e| e.contains("requires m_minus > 0")), "{errs:?}");
    }

    #[test]
    fn all_errors_are_collected() {
        let errs = errors("colour = 1\n[params]\np = \"three\"\nq = 2\n[grid]\nnx = 1\n[analysis]\nprobe_cells = 0.5\n");
        assert!(errs.iter().any(|e| e == "unknown key \"colour\""), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("[params] p: expected a number, found string")), "{errs:?}");
        assert!(errs.iter().any(|e| e == "[params] unknown key \"q\""), "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("[grid]")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("probe_cells")), "{errs:?}");
        assert!(errs.len() >= 5);
    }

    #[test]
    fn missing_p_is_reported() {
        assert_eq!(errors("[grid]\nnx = 33\n"), vec!["[params] p is required".to_string()]);
    }

    #[test]
    fn syntax_errors_are_config_errors() {
        assert_eq!(errors("[params\n").len(), 1);
    }

    #[test]
    fn presets_resolve_and_overrides_win() {
        for name in PRESETS {
            let cfg = preset_config(name, 33).unwrap();
            assert_eq!(cfg.preset.as_deref(), Some(name));
            assert_eq!(cfg.grid.nz, 33);
            cfg.boundary().unwrap();
        }
        let cfg = parse_config("preset = \"one_phase_p4\"\n[params]\nell = 2.5\n[output]\nseed = 7\n").unwrap();
        assert_eq!((cfg.params.p, cfg.params.ell, cfg.output.seed), (4.0, 2.5, 7));
        assert_eq!(cfg.bc.preset, BcPreset::OnePhase);
        let errs = errors("preset = \"nope\"\n");
        assert!(errs[0].contains("unknown preset"));
    }

    #[test]
    fn explicit_schedule_and_scheme() {
        let cfg = parse_config(
            "[params]\np = 3\n[schedule]\neps0 = 0.2\neps_target = 0.01\ndelta_target = 0.05\ndelta0 = 0.05\nnested = false\nconvection = \"central\"\nquadrature = \"gauss2\"\nmax_iter = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.schedule.eps0, 0.2);
        assert_eq!((cfg.params.eps, cfg.params.delta), (0.01, 0.05));
        assert!(!cfg.schedule.nested);
        assert_eq!(cfg.schedule.scheme, Scheme { convection: Convection::Central, quadrature: Quadrature::Gauss2 });
        assert_eq!(cfg.schedule.max_iter, 7);
        let errs = errors("[params]\np = 3\n[schedule]\nrho = 2\nconvection = \"sideways\"\n");
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn sweep_expands_the_cartesian_product() {
        let cfg = parse_config("preset = \"one_phase_p3\"\n[grid]\nnx = 17\nnz = 17\n[sweep]\np = [2.5, 3]\nnz = [17, 33]\n")
            .unwrap();
        let runs = cfg.expand_sweep().unwrap();
        let labels: Vec<&str> = runs.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["nz=17,p=2.5", "nz=17,p=3", "nz=33,p=2.5", "nz=33,p=3"]);
        assert_eq!(runs[2].1.grid.nz, 33);
        assert_eq!(runs[1].1.params.p, 3.0);
        assert!(runs.iter().all(|(_, c)| c.sweep.is_empty()));
        let errs = errors("[params]\np = 3\n[sweep]\ncolour = [1]\nnx = [16.5]\n");
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn merged_document_round_trips() {
        let cfg = parse_config("preset = \"two_phase_p3\"\n[grid]\nnx = 33\nnz = 33\n").unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}
