//! Experiment configuration, drivers and reports.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::applications::{
    build_semiconjugacy, find_periodic_center_leaf, find_periodic_center_leaf_from_leaf_return, ApplicationError,
    LEAF_TOLERANCE,
};
use crate::geometry::{ChartConfig, GeometryError, Point3};
use crate::orbit::{find_near_return, fmt_f64, generate_noisy, OrbitError, ReturnMode, RNG_NAME};
use crate::solver::{shadow, ContractionEstimates, SolverConfig, SolverError};
use crate::systems::{CatCircle, PartiallyHyperbolicSystem, SplitConfig, SplittingMode, SystemError};

pub const TOOL_NAME: &str = "qshadow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bound on the center component of every tracing vector.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Application(#[from] ApplicationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub name: String,
    pub alpha: f64,
    pub kappa: f64,
    /// Analytic for `kappa = 0`, numerical otherwise, when left out.
    pub splitting_mode: Option<SplittingMode>,
    pub n_split: usize,
    pub split_tol: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        Self {
            name: "cat-circle".into(),
            alpha: 0.0,
            kappa: 0.0,
            splitting_mode: None,
            n_split: split.n_split,
            split_tol: split.tol,
        }
    }
}

impl SystemConfig {
    fn mode(&self) -> SplittingMode {
        self.splitting_mode.unwrap_or(if self.kappa == 0.0 {
            SplittingMode::Analytic
        } else {
            SplittingMode::Numerical
        })
    }

    pub fn build(&self) -> Result<CatCircle, ReportError> {
        if self.name != "cat-circle" {
            return Err(ReportError::Config(format!("unknown system {:?}", self.name)));
        }
        let split = SplitConfig {
            n_split: self.n_split,
            tol: self.split_tol,
        };
        Ok(CatCircle::new(self.alpha, self.kappa, self.mode(), split)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitConfig {
    pub x0: [f64; 3],
    /// The window is `x_{-N..N}`.
    pub half_width: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            x0: [0.1, 0.2, 0.3],
            half_width: 100,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadowSpec {
    /// Bound on `max d(x_k, y_k)`; `epsilon` applies in any case.
    pub max_distance: Option<f64>,
    /// Bound on `max |τ̃_k|` as a multiple of the largest fiber defect.
    pub flow_time_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloseSpec {
    pub mode: ReturnMode,
    pub max_n: usize,
    pub threshold: f64,
    pub leaf_tolerance: f64,
    /// Leaf mode only: build the cycle from the recurrence chain of the
    /// returning leaf instead of a single segment.
    pub chain: bool,
    pub max_chain: usize,
}

impl Default for CloseSpec {
    fn default() -> Self {
        Self {
            mode: ReturnMode::Point,
            max_n: 5000,
            threshold: 1e-3,
            leaf_tolerance: LEAF_TOLERANCE,
            chain: false,
            max_chain: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySpec {
    /// Grid points per axis.
    pub grid: usize,
    pub half_width: usize,
    /// The perturbed map `g` has `alpha + alpha_shift`, `kappa + kappa_shift`.
    pub alpha_shift: f64,
    pub kappa_shift: f64,
    pub max_residual: f64,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        Self {
            grid: 10,
            half_width: 200,
            alpha_shift: 1e-3,
            kappa_shift: 0.0,
            max_residual: 1e-6,
        }
    }
}

/// Cartesian product over the listed values; a missing list keeps the
/// base value, an empty list gives an empty sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub child: Box<Experiment>,
    #[serde(default)]
    pub noise: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa: Option<Vec<f64>>,
    #[serde(default)]
    pub half_width: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    Shadow(ShadowSpec),
    Close(CloseSpec),
    Stability(StabilitySpec),
    Sweep(SweepSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Shadow(_) => "shadow",
            Experiment::Close(_) => "close",
            Experiment::Stability(_) => "stability",
            Experiment::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Make every implicit choice explicit.
    pub fn resolve(&mut self) {
        self.system.splitting_mode = Some(self.system.mode());
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        self.chart.validate()?;
        self.solver.validate(self.chart.rho)?;
        if self.orbit.x0.iter().any(|c| !c.is_finite()) {
            return Err(ReportError::Config("orbit.x0 must be finite".into()));
        }
        if let Experiment::Sweep(s) = &self.experiment {
            if matches!(*s.child, Experiment::Sweep(_)) {
                return Err(ReportError::Config("sweeps cannot be nested".into()));
            }
        }
        Ok(())
    }
}

/// One declared bound and whether it held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<="` or `"<"`.
    pub relation: String,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=".into(),
            bound,
            passed: value <= bound,
        }
    }

    pub fn lt(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<".into(),
            bound,
            passed: value < bound,
        }
    }

    /// Re-evaluate from the stored value and bound.
    pub fn holds(&self) -> bool {
        match self.relation.as_str() {
            "<" => self.value < self.bound,
            _ => self.value <= self.bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub rng: String,
    pub seed: u64,
    /// The config file as given.
    pub config_text: Option<String>,
    /// The config with every default filled in.
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub summary: Value,
    pub diagnostics: Option<ContractionEstimates>,
    pub runtime_seconds: f64,
}

impl Report {
    pub fn verdict(&self) -> bool {
        self.checks.iter().all(Check::holds)
    }
}

/// A data file written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

struct Body {
    checks: Vec<Check>,
    summary: Value,
    diagnostics: Option<ContractionEstimates>,
    artifacts: Vec<Artifact>,
}

fn csv_string<F>(write: F) -> Result<String, ReportError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| ReportError::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Run the experiment described by `config`.
pub fn run(config: &ExperimentConfig, config_text: Option<&str>) -> Result<Outcome, ReportError> {
    let start = Instant::now();
    config.validate()?;
    let body = match &config.experiment {
        Experiment::Shadow(spec) => run_shadow(config, spec)?,
        Experiment::Close(spec) => run_close(config, spec)?,
        Experiment::Stability(spec) => run_stability(config, spec)?,
        Experiment::Sweep(spec) => run_sweep(config, spec)?,
    };
    let passed = body.checks.iter().all(|c| c.passed);
    let report = Report {
        tool: TOOL_NAME.into(),
        version: VERSION.into(),
        kind: config.experiment.kind().into(),
        rng: RNG_NAME.into(),
        seed: config.orbit.seed,
        config_text: config_text.map(str::to_owned),
        config: config.clone(),
        passed,
        checks: body.checks,
        summary: body.summary,
        diagnostics: body.diagnostics,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Outcome {
        report,
        artifacts: body.artifacts,
    })
}

fn run_shadow(config: &ExperimentConfig, spec: &ShadowSpec) -> Result<Body, ReportError> {
    let sys = config.system.build()?;
    let x0 = Point3::wrap(config.orbit.x0)?;
    let orbit = generate_noisy(&sys, &config.chart, x0, config.orbit.half_width, config.orbit.noise, config.orbit.seed)?;
    let res = shadow(&sys, &config.chart, &orbit, &config.solver)?;

    let mut max_fiber_defect = 0.0_f64;
    for i in 1..orbit.len() {
        let d = orbit.points[i].displacement_to(&sys.forward(&orbit.points[i - 1]));
        max_fiber_defect = max_fiber_defect.max(d[2].abs());
    }
    let max_flow_time = res.flow_times.as_ref().map(|t| t.iter().fold(0.0_f64, |m, x| m.max(x.abs())));

    let cfg = &config.solver;
    let mut checks = vec![
        Check::lt("max_distance_below_epsilon", res.max_distance, cfg.epsilon),
        Check::le("max_step_residual", res.max_step_residual, cfg.fixed_point_tol),
        Check::le("max_center_component", res.max_center_component, NORMALIZATION_TOL),
    ];
    if let Some(b) = spec.max_distance {
        checks.push(Check::le("max_distance", res.max_distance, b));
    }
    if let (Some(factor), Some(t)) = (spec.flow_time_factor, max_flow_time) {
        checks.push(Check::le("max_flow_time", t, factor * max_fiber_defect));
    }

    let summary = json!({
        "points": orbit.len(),
        "first_index": orbit.first_index,
        "defect": orbit.measured_defect,
        "variant": res.variant,
        "max_distance": res.max_distance,
        "max_correction": res.max_correction(),
        "max_step_residual": res.max_step_residual,
        "max_center_component": res.max_center_component,
        "max_leaf_residual": res.max_leaf_residual,
        "max_fiber_defect": max_fiber_defect,
        "max_flow_time": max_flow_time,
        "k1": res.k1,
        "iterations": res.step_norms.len(),
        "step_norms": res.step_norms,
    });
    let artifacts = vec![
        Artifact {
            name: "orbit.csv".into(),
            contents: csv_string(|b| orbit.write_csv(b))?,
        },
        Artifact {
            name: "trajectory.csv".into(),
            contents: csv_string(|b| res.write_csv(b))?,
        },
    ];
    Ok(Body {
        checks,
        summary,
        diagnostics: Some(res.diagnostics),
        artifacts,
    })
}

fn run_close(config: &ExperimentConfig, spec: &CloseSpec) -> Result<Body, ReportError> {
    let sys = config.system.build()?;
    let x0 = Point3::wrap(config.orbit.x0)?;
    let leaf = if spec.mode == ReturnMode::Leaf && spec.chain {
        find_periodic_center_leaf_from_leaf_return(
            &sys,
            &config.chart,
            x0,
            spec.max_n,
            spec.threshold,
            spec.max_chain,
            &config.solver,
            spec.leaf_tolerance,
        )?
    } else {
        let ret = find_near_return(&sys, x0, spec.max_n, spec.threshold, spec.mode)?;
        find_periodic_center_leaf(&sys, &config.chart, &ret, &config.solver, spec.leaf_tolerance)?
    };
    let checks = vec![
        Check::le("leaf_residual", leaf.leaf_residual, spec.leaf_tolerance),
        Check::lt("max_distance_below_epsilon", leaf.max_distance, config.solver.epsilon),
    ];
    let summary = json!({
        "mode": leaf.mode,
        "variant": leaf.variant,
        "period": leaf.period,
        "return_time": leaf.return_time,
        "segments": leaf.segments,
        "representative": leaf.representative,
        "reference": leaf.reference,
        "leaf_residual": leaf.leaf_residual,
        "direct_return_gap": leaf.direct_return_gap,
        "max_distance": leaf.max_distance,
    });
    let rows = csv_string(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["k", "x1", "x2", "x3", "y1", "y2", "y3"])?;
        for (k, (x, y)) in leaf.cycle.iter().zip(&leaf.tracing).enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.coords().iter().chain(y.coords()).map(|c| fmt_f64(*c)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(Body {
        checks,
        summary,
        diagnostics: Some(leaf.diagnostics),
        artifacts: vec![Artifact {
            name: "cycle.csv".into(),
            contents: rows,
        }],
    })
}

fn run_stability(config: &ExperimentConfig, spec: &StabilitySpec) -> Result<Body, ReportError> {
    let f = config.system.build()?;
    let g = f.with_parameters(f.alpha() + spec.alpha_shift, f.kappa() + spec.kappa_shift)?;
    let map = build_semiconjugacy(&f, &g, &config.chart, spec.grid, spec.half_width, &config.solver)?;
    let checks = vec![
        Check::lt("max_displacement_below_epsilon", map.max_displacement, config.solver.epsilon),
        Check::le("semiconjugacy_residual", map.residual.max, spec.max_residual),
        Check::le("max_center_component", map.max_center_component, NORMALIZATION_TOL),
        Check::le("covering_radius", map.covering_radius, map.covering_bound),
    ];
    let summary = json!({
        "grid_points": map.samples.len(),
        "grid_spacing": map.grid_spacing,
        "half_width": map.half_width,
        "perturbation": map.perturbation,
        "max_displacement": map.max_displacement,
        "max_center_component": map.max_center_component,
        "residual_max": map.residual.max,
        "residual_mean": map.residual.mean,
        "continuity_modulus": map.continuity_modulus,
        "covering_radius": map.covering_radius,
        "covering_bound": map.covering_bound,
        "max_observed_contraction": map.max_observed_contraction,
        "lambda_tilde": map.lambda_tilde,
    });
    Ok(Body {
        checks,
        summary,
        diagnostics: None,
        artifacts: vec![Artifact {
            name: "conjugacy.csv".into(),
            contents: csv_string(|b| map.write_csv(b))?,
        }],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise: f64,
    pub kappa: f64,
    pub half_width: usize,
    pub passed: Option<bool>,
    pub max_distance: Option<f64>,
    /// `max_distance / noise`.
    pub ratio: Option<f64>,
    pub error: Option<String>,
    pub report: Option<Box<Report>>,
}

fn child_config(config: &ExperimentConfig, child: &Experiment, noise: f64, kappa: f64, n: usize) -> ExperimentConfig {
    let mut c = config.clone();
    c.experiment = child.clone();
    c.orbit.noise = noise;
    c.orbit.half_width = n;
    if let Experiment::Stability(s) = &mut c.experiment {
        s.half_width = n;
    }
    if c.system.kappa != kappa {
        c.system.kappa = kappa;
        c.system.splitting_mode = Some(if kappa == 0.0 {
            c.system.splitting_mode.unwrap_or(SplittingMode::Analytic)
        } else {
            SplittingMode::Numerical
        });
    }
    c
}

fn run_sweep(config: &ExperimentConfig, spec: &SweepSpec) -> Result<Body, ReportError> {
    let noises = spec.noise.clone().unwrap_or_else(|| vec![config.orbit.noise]);
    let kappas = spec.kappa.clone().unwrap_or_else(|| vec![config.system.kappa]);
    let widths = spec.half_width.clone().unwrap_or_else(|| vec![config.orbit.half_width]);
    let mut grid = Vec::new();
    for &k in &kappas {
        for &e in &noises {
            for &n in &widths {
                grid.push((e, k, n));
            }
        }
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(noise, kappa, n)| {
            let child = child_config(config, &spec.child, noise, kappa, n);
            match run(&child, None) {
                Ok(out) => {
                    let max_distance = out.report.summary.get("max_distance").and_then(Value::as_f64);
                    SweepRow {
                        noise,
                        kappa,
                        half_width: n,
                        passed: Some(out.report.passed),
                        max_distance,
                        ratio: max_distance.filter(|_| noise > 0.0).map(|d| d / noise),
                        error: None,
                        report: Some(Box::new(out.report)),
                    }
                }
                Err(e) => SweepRow {
                    noise,
                    kappa,
                    half_width: n,
                    passed: None,
                    max_distance: None,
                    ratio: None,
                    error: Some(e.to_string()),
                    report: None,
                },
            }
        })
        .collect();

    // in sweep order, up to the first kappa whose system is rejected or
    // whose runs do not all pass
    let mut last_valid_kappa = None;
    for &k in &kappas {
        if child_config(config, &spec.child, 0.0, k, 1).system.build().is_err() {
            break;
        }
        last_valid_kappa = Some(k);
    }
    let mut last_passing_kappa = None;
    for &k in &kappas {
        if !rows.iter().filter(|r| r.kappa == k).all(|r| r.passed == Some(true)) {
            break;
        }
        last_passing_kappa = Some(k);
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let ratio_spread = if ratios.is_empty() {
        None
    } else {
        let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
        let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
        Some(hi / lo)
    };
    let checks = rows
        .iter()
        .filter(|r| r.passed.is_some())
        .map(|r| {
            Check::le(
                &format!("child noise={} kappa={} n={}", r.noise, r.kappa, r.half_width),
                if r.passed == Some(true) { 0.0 } else { 1.0 },
                0.0,
            )
        })
        .collect();
    let table = csv_string(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["noise", "kappa", "half_width", "passed", "max_distance", "ratio", "error"])?;
        for r in &rows {
            let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
            w.write_record([
                fmt_f64(r.noise),
                fmt_f64(r.kappa),
                r.half_width.to_string(),
                r.passed.map(|p| p.to_string()).unwrap_or_default(),
                opt(r.max_distance),
                opt(r.ratio),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let summary = json!({
        "runs": rows.len(),
        "errors": rows.iter().filter(|r| r.error.is_some()).count(),
        "last_valid_kappa": last_valid_kappa,
        "last_passing_kappa": last_passing_kappa,
        "ratio_spread": ratio_spread,
        "rows": rows,
    });
    Ok(Body {
        checks,
        summary,
        diagnostics: None,
        artifacts: vec![Artifact {
            name: "sweep.csv".into(),
            contents: table,
        }],
    })
}
