//! Run configuration: a line-oriented `section.key = value` file.
//!
//! ```text
//! # convex potential
//! problem.mobility = logistic
//! problem.diffusion = quadratic
//! problem.potential = harmonic
//! problem.potential_params = 10, 0
//! grid.n_cells = 128
//! time.dt = 2^-7
//! time.steady = true
//! initial.kind = constant
//! initial.value = 0.3
//! ```
//!
//! Numbers accept the power shorthand `b^e` (`2^-7`); lists are comma
//! separated. Unknown keys are errors. The full key table is in
//! `docs/config.md`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::{RefinementAxis, SteadyCriterion, SteadyDetector};
use crate::grid::{project_initial, DensityField, Grid1D};
use crate::model::{DiffusionFamily, MobilityFamily, PotentialFamily, ProblemSpec, RegularizationParams};
use crate::scheme::{SchemeConfig, TieRule};
use crate::steady::barenblatt_with_curvature;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// `line` is 0 for command-line overrides.
    #[error("{}: {msg}", if *.line == 0 { "override".to_string() } else { format!("line {line}") })]
    Parse { line: usize, key: Option<String>, msg: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Every key the parser accepts.
pub const KEYS: &[&str] = &[
    "problem.alpha",
    "problem.mobility",
    "problem.mobility_params",
    "problem.diffusion",
    "problem.diffusion_params",
    "problem.potential",
    "problem.potential_params",
    "grid.n_cells",
    "time.dt",
    "time.t_end",
    "time.steady",
    "time.max_steps",
    "steady.criterion",
    "steady.tol_rate",
    "steady.tol_e",
    "steady.patience",
    "solver.newton_tol",
    "solver.newton_max_iter",
    "solver.damping_min",
    "solver.homotopy_stages",
    "solver.clamp_margin",
    "solver.sign_at_zero",
    "solver.max_halvings",
    "regularization.epsilon",
    "regularization.kappa",
    "regularization.s0",
    "regularization.band_width",
    "regularization.quadrature_tol",
    "initial.kind",
    "initial.value",
    "initial.base",
    "initial.height",
    "initial.center",
    "initial.width",
    "initial.depth",
    "initial.mass",
    "initial.exponent",
    "initial.curvature",
    "initial.masses",
    "initial.centers",
    "initial.path",
    "output.directory",
    "output.snapshot_stride",
    "output.trajectory",
    "output.steady",
    "output.reports",
    "audit.pairs",
    "audit.steps",
    "audit.seed",
    "study.axis",
    "study.levels",
    "study.reference",
    "study.dt_ratio",
    "study.epsilons",
    "study.t_end",
];

/// Initial data registry.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Constant { value: f64 },
    /// `base + height · exp(−(x − c)²/(2 w²))`, clamped to `[0, α]`.
    Gaussian { base: f64, height: f64, center: f64, width: f64 },
    /// `height` on `|x − c| < w`, `base` elsewhere.
    Indicator { base: f64, height: f64, center: f64, width: f64 },
    /// Discrete Barenblatt of the given mass for `k|x − c|²/2`.
    Barenblatt { mass: f64, exponent: f64, center: f64, curvature: f64 },
    /// `α − depth · (1 − ((x − c)/w)²)₊`.
    AlphaMinusBump { depth: f64, center: f64, width: f64 },
    /// Two raised-cosine bumps of half-width `w` with masses `M_L, M_K`.
    TwoBump { masses: [f64; 2], centers: [f64; 2], width: f64 },
    File { path: PathBuf },
}

fn raised_cosine(x: f64, center: f64, width: f64, mass: f64) -> f64 {
    let d = (x - center) / width;
    if d.abs() < 1.0 {
        mass / width * 0.5 * (1.0 + (std::f64::consts::PI * d).cos())
    } else {
        0.0
    }
}

impl InitialData {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Gaussian { .. } => "gaussian",
            Self::Indicator { .. } => "indicator",
            Self::Barenblatt { .. } => "barenblatt",
            Self::AlphaMinusBump { .. } => "alpha_minus_bump",
            Self::TwoBump { .. } => "two_bump",
            Self::File { .. } => "file",
        }
    }

    /// The datum as a function of `x`, if it has a closed form.
    pub fn profile(&self, alpha: f64) -> Option<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        Some(match *self {
            Self::Constant { value } => Box::new(move |_| value),
            Self::Gaussian {
                base,
                height,
                center,
                width,
            } => Box::new(move |x| {
                (base + height * (-(x - center).powi(2) / (2.0 * width * width)).exp()).clamp(0.0, alpha)
            }),
            Self::Indicator {
                base,
                height,
                center,
                width,
            } => Box::new(move |x| if (x - center).abs() < width { height } else { base }),
            Self::AlphaMinusBump { depth, center, width } => Box::new(move |x| {
                let d = (x - center) / width;
                alpha - depth * (1.0 - d * d).max(0.0)
            }),
            Self::TwoBump { masses, centers, width } => Box::new(move |x| {
                raised_cosine(x, centers[0], width, masses[0]) + raised_cosine(x, centers[1], width, masses[1])
            }),
            Self::Barenblatt { .. } | Self::File { .. } => return None,
        })
    }

    /// The datum on `grid`: cell averages, or the discrete profile itself.
    pub fn build(&self, grid: Grid1D, alpha: f64) -> Result<DensityField, String> {
        match self {
            Self::Barenblatt {
                mass,
                exponent,
                center,
                curvature,
            } => {
                let p = barenblatt_with_curvature(*mass, *exponent, *center, *curvature, grid).map_err(|e| e.to_string())?;
                if p.values().iter().any(|&v| v > alpha) {
                    return Err(format!("Barenblatt bump exceeds alpha = {alpha}"));
                }
                Ok(p.field)
            }
            Self::File { path } => {
                let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let field = DensityField::read_csv(BufReader::new(f)).map_err(|e| e.to_string())?;
                if field.grid() != grid {
                    return Err(format!(
                        "{} holds {} cells, the grid has {}",
                        path.display(),
                        field.grid().n_cells(),
                        grid.n_cells()
                    ));
                }
                if !field.within_bounds(alpha, 0.0) {
                    return Err(format!("{} has values outside [0, {alpha}]", path.display()));
                }
                Ok(field)
            }
            other => {
                let f = other.profile(alpha).expect("closed form");
                project_initial(f, grid, alpha).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub alpha: f64,
    pub mobility: MobilityFamily,
    pub diffusion: DiffusionFamily,
    pub potential: PotentialFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: Option<f64>,
    /// Run until the steady detector fires (bounded by `max_steps`).
    pub steady: bool,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Density snapshot every `stride` steps; 0 disables snapshots.
    pub snapshot_stride: usize,
    pub trajectory: bool,
    pub steady: bool,
    pub reports: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub pairs: usize,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub axis: RefinementAxis,
    pub levels: Vec<usize>,
    pub reference: Option<usize>,
    /// `Δt = dt_ratio · Δx` on the joint axis.
    pub dt_ratio: f64,
    pub epsilons: Vec<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub n_cells: usize,
    pub time: TimeConfig,
    pub detector: SteadyDetector,
    pub solver: SchemeConfig,
    pub regularization: Option<RegularizationParams>,
    pub initial: InitialData,
    pub output: OutputConfig,
    pub audit: AuditConfig,
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.n_cells).expect("validated")
    }

    /// The problem, regularized when an ε block is present.
    pub fn spec(&self) -> Result<ProblemSpec, crate::model::ModelError> {
        let p = &self.problem;
        let base = ProblemSpec::from_families(p.alpha, &p.mobility, &p.diffusion, &p.potential)?;
        match &self.regularization {
            Some(r) => crate::model::regularize(&base, r),
            None => Ok(base),
        }
    }

    pub fn initial_field(&self) -> Result<DensityField, String> {
        self.initial.build(self.grid(), self.problem.alpha)
    }
}

/// Raw `key → (line, value)` pairs in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (k, line) in text.lines().enumerate() {
            let n = k + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: n,
                    key: None,
                    msg: format!("expected `section.key = value`, found `{content}`"),
                });
            };
            raw.insert(n, key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    fn insert(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let err = |msg: String| ConfigError::Parse {
            line,
            key: Some(key.to_string()),
            msg,
        };
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(err(format!("`{key}` has no value")));
        }
        if let Some((first, _)) = self.entries.get(key) {
            return Err(err(format!("`{key}` already set on line {first}")));
        }
        self.entries.insert(key.to_string(), (line, value.to_string()));
        Ok(())
    }

    /// Applies a `key=value` override, replacing any existing entry.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = |msg: String| ConfigError::Parse { line: 0, key: None, msg };
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| err(format!("override `{assignment}` is not `key=value`")))?;
        let (key, value) = (key.trim(), value.trim());
        self.entries.remove(key);
        self.insert(0, key, value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// `2^-7`, `1e-3`, `0.25`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        let base: f64 = b.trim().parse().ok()?;
        let exp: f64 = e.trim().parse().ok()?;
        return Some(base.powf(exp));
    }
    s.parse().ok()
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

/// Typed lookups that collect every violation instead of stopping at the first.
struct Reader<'a> {
    raw: &'a RawConfig,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn loc(&self, key: &str) -> String {
        match self.raw.entries.get(key) {
            Some((0, _)) => format!("{key} (override)"),
            Some((line, _)) => format!("{key} (line {line})"),
            None => key.to_string(),
        }
    }

    fn num(&mut self, key: &str, default: Option<f64>) -> f64 {
        match self.raw.get(key) {
            Some(v) => match parse_number(v) {
                Some(x) if x.is_finite() => x,
                _ => {
                    self.errors.push(format!("{}: `{v}` is not a number", self.loc(key)));
                    f64::NAN
                }
            },
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("{key} is required"));
                f64::NAN
            }),
        }
    }

    fn opt_num(&mut self, key: &str) -> Option<f64> {
        self.raw.get(key).map(|_| self.num(key, None))
    }

    fn count(&mut self, key: &str, default: usize) -> usize {
        match self.raw.get(key) {
            Some(v) => match parse_number(v) {
                Some(x) if x >= 0.0 && x.fract() == 0.0 && x < 1e15 => x as usize,
                _ => {
                    self.errors.push(format!("{}: `{v}` is not a nonnegative integer", self.loc(key)));
                    default
                }
            },
            None => default,
        }
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.raw.get(key)?;
        match parse_list(v) {
            Some(xs) => Some(xs),
            None => {
                self.errors.push(format!("{}: `{v}` is not a comma-separated list of numbers", self.loc(key)));
                None
            }
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> bool {
        match self.raw.get(key) {
            Some("true") => true,
            Some("false") => false,
            Some(v) => {
                self.errors.push(format!("{}: `{v}` is not true/false", self.loc(key)));
                default
            }
            None => default,
        }
    }

    fn text(&self, key: &str) -> Option<String> {
        self.raw.get(key).map(str::to_string)
    }

    fn fail(&mut self, msg: String) {
        self.errors.push(msg);
    }
}

const INITIAL_KEYS: &[(&str, &[&str])] = &[
    ("constant", &["value"]),
    ("gaussian", &["base", "height", "center", "width"]),
    ("indicator", &["base", "height", "center", "width"]),
    ("barenblatt", &["mass", "exponent", "center", "curvature"]),
    ("alpha_minus_bump", &["depth", "center", "width"]),
    ("two_bump", &["masses", "centers", "width"]),
    ("file", &["path"]),
];

fn read_initial(r: &mut Reader<'_>, alpha: f64, base_dir: &Path) -> InitialData {
    let kind = r.text("initial.kind").unwrap_or_else(|| "constant".into());
    let Some((_, allowed)) = INITIAL_KEYS.iter().find(|(k, _)| *k == kind) else {
        let names: Vec<&str> = INITIAL_KEYS.iter().map(|(k, _)| *k).collect();
        r.fail(format!("{}: unknown kind `{kind}` (one of {})", r.loc("initial.kind"), names.join(", ")));
        return InitialData::Constant { value: 0.0 };
    };
    let stray: Vec<String> = r
        .raw
        .keys()
        .filter_map(|k| k.strip_prefix("initial."))
        .filter(|k| *k != "kind" && !allowed.contains(k))
        .map(|k| format!("initial.{k} does not apply to initial.kind = {kind}"))
        .collect();
    r.errors.extend(stray);
    let in_unit = |r: &mut Reader<'_>, key: &str, x: f64| {
        if !(0.0..=1.0).contains(&x) {
            r.fail(format!("{}: {x} must lie in [0, 1]", r.loc(key)));
        }
    };
    let positive = |r: &mut Reader<'_>, key: &str, x: f64| {
        if !(x > 0.0) {
            r.fail(format!("{}: {x} must be positive", r.loc(key)));
        }
    };
    let admissible = |r: &mut Reader<'_>, key: &str, x: f64| {
        if !(0.0..=alpha).contains(&x) {
            r.fail(format!("{}: {x} must lie in [0, alpha = {alpha}]", r.loc(key)));
        }
    };
    match kind.as_str() {
        "constant" => {
            let value = r.num("initial.value", None);
            admissible(r, "initial.value", value);
            InitialData::Constant { value }
        }
        "gaussian" | "indicator" => {
            let base = r.num("initial.base", Some(0.0));
            let height = r.num("initial.height", None);
            let center = r.num("initial.center", Some(0.5));
            let width = r.num("initial.width", None);
            admissible(r, "initial.base", base);
            in_unit(r, "initial.center", center);
            positive(r, "initial.width", width);
            if kind == "gaussian" {
                InitialData::Gaussian {
                    base,
                    height,
                    center,
                    width,
                }
            } else {
                admissible(r, "initial.height", height);
                InitialData::Indicator {
                    base,
                    height,
                    center,
                    width,
                }
            }
        }
        "barenblatt" => {
            let mass = r.num("initial.mass", None);
            let exponent = r.num("initial.exponent", Some(2.0));
            let center = r.num("initial.center", Some(0.5));
            let curvature = r.num("initial.curvature", Some(1.0));
            positive(r, "initial.mass", mass);
            positive(r, "initial.curvature", curvature);
            in_unit(r, "initial.center", center);
            if !(exponent > 1.0) {
                r.fail(format!("{}: {exponent} must exceed 1", r.loc("initial.exponent")));
            }
            InitialData::Barenblatt {
                mass,
                exponent,
                center,
                curvature,
            }
        }
        "alpha_minus_bump" => {
            let depth = r.num("initial.depth", None);
            let center = r.num("initial.center", Some(0.5));
            let width = r.num("initial.width", None);
            admissible(r, "initial.depth", depth);
            in_unit(r, "initial.center", center);
            positive(r, "initial.width", width);
            InitialData::AlphaMinusBump { depth, center, width }
        }
        "two_bump" => {
            let masses = r.list("initial.masses");
            let centers = r.list("initial.centers");
            let width = r.num("initial.width", None);
            positive(r, "initial.width", width);
            let pair = |r: &mut Reader<'_>, key: &str, v: Option<Vec<f64>>| -> [f64; 2] {
                match v.as_deref() {
                    Some(&[a, b]) => [a, b],
                    Some(_) => {
                        r.fail(format!("{}: expected two values", r.loc(key)));
                        [f64::NAN; 2]
                    }
                    None => {
                        if r.raw.get(key).is_none() {
                            r.fail(format!("{key} is required"));
                        }
                        [f64::NAN; 2]
                    }
                }
            };
            let masses = pair(r, "initial.masses", masses);
            let centers = pair(r, "initial.centers", centers);
            for &m in &masses {
                positive(r, "initial.masses", m);
            }
            // peak of a raised cosine of mass M and half-width w is M/w
            let capacity = alpha * width;
            if masses.iter().any(|&m| m > capacity) {
                r.fail(format!(
                    "{}: masses {masses:?} exceed the bump capacity alpha * width = {capacity}",
                    r.loc("initial.masses")
                ));
            }
            if centers.iter().any(|c| !(c - width >= 0.0 && c + width <= 1.0)) || (centers[1] - centers[0]).abs() < 2.0 * width {
                r.fail(format!(
                    "{}: bumps of half-width {width} at {centers:?} must fit in [0, 1] without overlapping",
                    r.loc("initial.centers")
                ));
            }
            InitialData::TwoBump { masses, centers, width }
        }
        "file" => {
            let path = PathBuf::from(r.text("initial.path").unwrap_or_default());
            if path.as_os_str().is_empty() {
                r.fail("initial.path is required".into());
            }
            let path = if path.is_relative() { base_dir.join(path) } else { path };
            if !path.is_file() {
                r.fail(format!("initial.path: {} does not exist", path.display()));
            }
            InitialData::File { path }
        }
        _ => unreachable!(),
    }
}

/// Builds and validates a [`RunConfig`]; relative paths resolve against `base_dir`.
pub fn build_config(raw: &RawConfig, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let mut r = Reader {
        raw,
        errors: Vec::new(),
    };

    let alpha = r.num("problem.alpha", Some(1.0));
    if !(alpha > 0.0) {
        r.fail(format!("{}: alpha = {alpha} must be positive", r.loc("problem.alpha")));
    }
    let mob_params = r.list("problem.mobility_params").unwrap_or_default();
    let mobility = match MobilityFamily::from_name(&r.text("problem.mobility").unwrap_or_else(|| "logistic".into()), &mob_params) {
        Ok(m) => m,
        Err(e) => {
            r.fail(format!("{}: {e}", r.loc("problem.mobility")));
            MobilityFamily::logistic()
        }
    };
    let u_params = r.list("problem.diffusion_params").unwrap_or_default();
    let diffusion = match DiffusionFamily::from_name(&r.text("problem.diffusion").unwrap_or_else(|| "quadratic".into()), &u_params) {
        Ok(u) => u,
        Err(e) => {
            r.fail(format!("{}: {e}", r.loc("problem.diffusion")));
            DiffusionFamily::Quadratic
        }
    };
    let v_params = r.list("problem.potential_params").unwrap_or_default();
    let potential = match PotentialFamily::from_name(&r.text("problem.potential").unwrap_or_else(|| "zero".into()), &v_params) {
        Ok(v) => v,
        Err(e) => {
            r.fail(format!("{}: {e}", r.loc("problem.potential")));
            PotentialFamily::zero()
        }
    };
    if alpha > 0.0 && r.errors.is_empty() {
        if let Err(e) = ProblemSpec::from_families(alpha, &mobility, &diffusion, &potential) {
            r.fail(format!("problem: {e}"));
        }
    }

    let n_cells = r.count("grid.n_cells", 0);
    if n_cells < 2 {
        r.fail(format!("{}: n_cells must be at least 2", r.loc("grid.n_cells")));
    }

    let dt = r.num("time.dt", None);
    let t_end = r.opt_num("time.t_end");
    let steady = r.flag("time.steady", false);
    let max_steps = r.count("time.max_steps", 1_000_000);
    if let Some(t) = t_end {
        if !(t >= 0.0) {
            r.fail(format!("{}: {t} must be nonnegative", r.loc("time.t_end")));
        }
    }
    if t_end.is_none() && !steady {
        r.fail("time: set time.t_end or time.steady = true".into());
    }

    let mut detector = SteadyDetector::default();
    if let Some(c) = r.text("steady.criterion") {
        detector.criterion = match c.as_str() {
            "step_change" => SteadyCriterion::StepChange,
            "energy_plateau" => SteadyCriterion::EnergyPlateau,
            "dual_step_change" => SteadyCriterion::DualStepChange,
            other => {
                r.fail(format!(
                    "{}: unknown criterion `{other}` (step_change, energy_plateau, dual_step_change)",
                    r.loc("steady.criterion")
                ));
                SteadyCriterion::StepChange
            }
        };
    }
    detector.tol_rate = r.num("steady.tol_rate", Some(detector.tol_rate));
    detector.tol_e = r.num("steady.tol_e", Some(detector.tol_e));
    detector.patience = r.count("steady.patience", detector.patience);
    if let Err(e) = detector.validate() {
        r.fail(format!("steady: {e}"));
    }

    let mut solver = SchemeConfig::new(dt);
    solver.newton_tol = r.opt_num("solver.newton_tol");
    solver.newton_max_iter = r.count("solver.newton_max_iter", solver.newton_max_iter);
    solver.damping_min = r.num("solver.damping_min", Some(solver.damping_min));
    if let Some(st) = r.list("solver.homotopy_stages") {
        solver.homotopy_stages = st;
    }
    solver.clamp_margin = r.num("solver.clamp_margin", Some(solver.clamp_margin));
    solver.sign_at_zero = match r.text("solver.sign_at_zero").as_deref() {
        None | Some("positive") => TieRule::Positive,
        Some("negative") => TieRule::Negative,
        Some(other) => {
            r.fail(format!("{}: `{other}` is not positive/negative", r.loc("solver.sign_at_zero")));
            TieRule::Positive
        }
    };
    solver.max_halvings = r.count("solver.max_halvings", solver.max_halvings as usize) as u32;
    if let Err(e) = solver.validate() {
        r.fail(format!("solver: {e}"));
    }

    let regularization = r.opt_num("regularization.epsilon").map(|eps| {
        let mut p = RegularizationParams::new(eps, alpha);
        p.kappa = r.num("regularization.kappa", Some(p.kappa));
        p.s0 = r.num("regularization.s0", Some(p.s0));
        p.band_width = r.num("regularization.band_width", Some(p.band_width));
        p.quadrature_tol = r.num("regularization.quadrature_tol", Some(p.quadrature_tol));
        if alpha > 0.0 {
            if let Err(e) = p.validate(alpha) {
                r.fail(format!("regularization: {e}"));
            }
        }
        p
    });
    if regularization.is_none() {
        let stray: Vec<String> = raw
            .keys()
            .filter(|k| k.starts_with("regularization."))
            .map(|k| format!("{k} needs regularization.epsilon"))
            .collect();
        r.errors.extend(stray);
    }

    let base_dir = base_dir.to_path_buf();
    let initial = read_initial(&mut r, alpha, &base_dir);

    let output = OutputConfig {
        directory: {
            let d = PathBuf::from(r.text("output.directory").unwrap_or_else(|| "out".into()));
            if d.is_relative() {
                base_dir.join(d)
            } else {
                d
            }
        },
        snapshot_stride: r.count("output.snapshot_stride", 0),
        trajectory: r.flag("output.trajectory", true),
        steady: r.flag("output.steady", true),
        reports: r.flag("output.reports", true),
    };

    let audit = AuditConfig {
        pairs: r.count("audit.pairs", 100),
        steps: r.count("audit.steps", 20),
        seed: r.count("audit.seed", 1) as u64,
    };

    let axis = match r.text("study.axis") {
        None => RefinementAxis::DxDtJoint,
        Some(a) => RefinementAxis::from_name(&a).unwrap_or_else(|| {
            r.fail(format!(
                "{}: unknown axis `{a}` (dx_dt_joint, dt_only, dx_only, epsilon)",
                r.loc("study.axis")
            ));
            RefinementAxis::DxDtJoint
        }),
    };
    let levels: Vec<usize> = r
        .list("study.levels")
        .unwrap_or_else(|| vec![16.0, 32.0, 64.0, 128.0])
        .into_iter()
        .map(|x| x as usize)
        .collect();
    let reference = r.raw.get("study.reference").map(|_| r.count("study.reference", 0));
    let study = StudyConfig {
        axis,
        levels,
        reference,
        dt_ratio: r.num("study.dt_ratio", Some(1.0)),
        epsilons: r.list("study.epsilons").unwrap_or_default(),
        t_end: r.num("study.t_end", Some(0.25)),
    };
    if study.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        r.fail(format!("{}: every epsilon must lie in (0, 1]", r.loc("study.epsilons")));
    }

    if !r.errors.is_empty() {
        return Err(ConfigError::Validation(r.errors));
    }
    Ok(RunConfig {
        problem: ProblemConfig {
            alpha,
            mobility,
            diffusion,
            potential,
        },
        n_cells,
        time: TimeConfig {
            dt,
            t_end,
            steady,
            max_steps,
        },
        detector,
        solver,
        regularization,
        initial,
        output,
        audit,
        study,
    })
}

/// Parses text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    build_config(&RawConfig::parse(text)?, base_dir)
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}
