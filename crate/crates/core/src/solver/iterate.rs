use std::io;

use serde::{Deserialize, Serialize};

use crate::geometry::{ChartConfig, Point3};
use crate::orbit::{fmt_f64, PseudoOrbit};
use crate::systems::{Bundle, PartiallyHyperbolicSystem, Vec3};

use super::estimate::{estimate_with, ContractionEstimates};
use super::problem::{SequenceVector, ShadowProblem};
use super::{SolverConfig, SolverError, Variant};

/// The tracing sequence and its certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowResult {
    pub variant: Variant,
    pub first_index: i64,
    pub cyclic: bool,
    /// The pseudo orbit that was traced.
    pub x: Vec<Point3>,
    /// Tracing points `y_k = exp_{x_k}(v_k)`.
    pub y: Vec<Point3>,
    /// `v_k ∈ E^s ⊕ E^u`, chart components.
    pub v: Vec<[f64; 3]>,
    /// Center vectors `u_k ∈ E^c(x_k)` (first variant).
    #[serde(rename = "u", skip_serializing_if = "Option::is_none", default)]
    pub center_corrections: Option<Vec<[f64; 3]>>,
    /// Flow times `τ̃_k` (third variant).
    #[serde(rename = "tau", skip_serializing_if = "Option::is_none", default)]
    pub flow_times: Option<Vec<f64>>,
    pub max_distance: f64,
    /// Largest violation of the step relation over positions with a
    /// predecessor.
    pub max_step_residual: f64,
    /// Largest `|center coordinate of exp_{x_k}^{-1} y_k|`.
    pub max_center_component: f64,
    /// Largest leaf distance between `f(y_{k-1})` and `y_k`.
    pub max_leaf_residual: f64,
    /// Measured `sup d(τ_x(y), x) / d(y, x)` for the leaf slide.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k1: Option<f64>,
    /// `‖w^{(i)} - w^{(i-1)}‖₁` per iteration.
    pub step_norms: Vec<f64>,
    pub diagnostics: ContractionEstimates,
}

impl ShadowResult {
    pub fn correction_norm(&self, i: usize) -> f64 {
        if let Some(u) = &self.center_corrections {
            crate::geometry::norm(&u[i])
        } else if let Some(t) = &self.flow_times {
            t[i].abs()
        } else {
            0.0
        }
    }

    pub fn max_correction(&self) -> f64 {
        (0..self.y.len()).map(|i| self.correction_norm(i)).fold(0.0, f64::max)
    }

    /// CSV with columns `k,x1,x2,x3,y1,y2,y3,dist,correction_norm`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "x1", "x2", "x3", "y1", "y2", "y3", "dist", "correction_norm"])?;
        for i in 0..self.y.len() {
            let (x, y) = (self.x[i].coords(), self.y[i].coords());
            let mut row = vec![(self.first_index + i as i64).to_string()];
            row.extend(x.iter().chain(y).map(|c| fmt_f64(*c)));
            row.push(fmt_f64(self.x[i].dist(&self.y[i])));
            row.push(fmt_f64(self.correction_norm(i)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Quasi-shadow `orbit` with the configured variant.
pub fn shadow<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    orbit: &PseudoOrbit,
    cfg: &SolverConfig,
) -> Result<ShadowResult, SolverError> {
    let problem = ShadowProblem::new(sys, *chart, orbit, cfg)?;
    solve(&problem, cfg, None)
}

/// Fixed-point iteration of `Φ` for the configured variant, optionally from
/// a given starting sequence (zero otherwise).
pub fn iterate_phi<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    orbit: &PseudoOrbit,
    cfg: &SolverConfig,
    initial: Option<&SequenceVector>,
) -> Result<ShadowResult, SolverError> {
    let problem = ShadowProblem::new(sys, *chart, orbit, cfg)?;
    solve(&problem, cfg, initial)
}

/// Trace along center leaves.
pub fn shadow_tau2<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    orbit: &PseudoOrbit,
    cfg: &SolverConfig,
) -> Result<ShadowResult, SolverError> {
    shadow(sys, chart, orbit, &SolverConfig { variant: Variant::Tau2, ..*cfg })
}

/// Trace with center-flow times.
pub fn shadow_tau3<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    orbit: &PseudoOrbit,
    cfg: &SolverConfig,
) -> Result<ShadowResult, SolverError> {
    shadow(sys, chart, orbit, &SolverConfig { variant: Variant::Tau3, ..*cfg })
}

fn solve<S: PartiallyHyperbolicSystem + ?Sized>(
    problem: &ShadowProblem<'_, S>,
    cfg: &SolverConfig,
    initial: Option<&SequenceVector>,
) -> Result<ShadowResult, SolverError> {
    let mut diagnostics = estimate_with(problem, cfg.epsilon, cfg.probes, cfg.probe_seed)?;
    if !(diagnostics.observed_contraction < 1.0) {
        return Err(SolverError::NoContraction(diagnostics.observed_contraction));
    }
    if !(diagnostics.predicted_radius < cfg.epsilon) {
        return Err(SolverError::NotAdmissible {
            predicted: diagnostics.predicted_radius,
            epsilon: cfg.epsilon,
        });
    }

    let n = problem.len();
    let mut w = match initial {
        Some(w0) if w0.len() == n => w0.clone(),
        Some(w0) => {
            return Err(SolverError::InvalidConfig(format!(
                "initial guess has {} entries, orbit has {n}",
                w0.len()
            )))
        }
        None => SequenceVector::zeros(n),
    };
    let mut step_norms = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iterations {
        let next = problem.phi(&w)?;
        let size = problem.norm1(&next);
        if !(size <= cfg.epsilon) {
            return Err(SolverError::Escaped { iteration, norm: size });
        }
        let step = problem.norm1(&(&next - &w));
        step_norms.push(step);
        w = next;
        if step < cfg.fixed_point_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolverError::MaxIterations {
            iterations: cfg.max_iterations,
            last_step: step_norms.last().copied().unwrap_or(f64::NAN),
        });
    }
    diagnostics.iterations = step_norms.len();
    diagnostics.final_residual = step_norms.last().copied().unwrap_or(0.0);
    assemble(problem, w, step_norms, diagnostics)
}

fn assemble<S: PartiallyHyperbolicSystem + ?Sized>(
    problem: &ShadowProblem<'_, S>,
    w: SequenceVector,
    step_norms: Vec<f64>,
    diagnostics: ContractionEstimates,
) -> Result<ShadowResult, SolverError> {
    let sys = problem.system();
    let chart = problem.chart();
    let orbit = problem.orbit();
    let n = problem.len();
    let variant = problem.variant();

    let mut y = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let c = &w.coords[i];
        let comps = problem.to_chart(i, &Vec3::new(c[0], 0.0, c[2]));
        let yi = chart
            .exp_components(&orbit.points[i], &comps)
            .map_err(|source| SolverError::ChartOverflow { index: i, source })?;
        y.push(yi);
        v.push(comps);
    }
    let center = w.center_values();
    let (center_corrections, flow_times) = match variant {
        Variant::Tau1 => {
            let u: Vec<[f64; 3]> = (0..n)
                .map(|i| {
                    let e = problem.splitting(i).direction(Bundle::Center) * center[i];
                    [e[0], e[1], e[2]]
                })
                .collect();
            (Some(u), None)
        }
        Variant::Tau2 => (None, None),
        Variant::Tau3 => (None, Some(center)),
    };

    let mut max_distance = 0.0_f64;
    let mut max_center_component = 0.0_f64;
    for (i, yi) in y.iter().enumerate() {
        max_distance = max_distance.max(orbit.points[i].dist(yi));
        let back = chart
            .log_components(&orbit.points[i], yi)
            .map_err(|source| SolverError::ChartOverflow { index: i, source })?;
        max_center_component = max_center_component.max(problem.to_splitting(i, &back)[1].abs());
    }

    let mut max_step_residual = 0.0_f64;
    let mut max_leaf_residual = 0.0_f64;
    let mut k1 = None::<f64>;
    for i in 0..n {
        let Some(p) = problem.predecessor(i) else { continue };
        let image = sys.forward(&y[p]);
        let expected = match variant {
            Variant::Tau1 => {
                let u = center_corrections.as_ref().expect("tau1 corrections")[i];
                let d = chart
                    .log_components(&orbit.points[i], &image)
                    .map_err(|source| SolverError::ChartOverflow { index: i, source })?;
                orbit.points[i].translate(&[u[0] + d[0], u[1] + d[1], u[2] + d[2]])
            }
            Variant::Tau2 => {
                let (slid, _) = problem.slide_to_transversal(i, &image)?;
                let d_in = image.dist(&orbit.points[i]);
                if d_in > 0.0 {
                    let ratio = slid.dist(&orbit.points[i]) / d_in;
                    k1 = Some(k1.map_or(ratio, |k| k.max(ratio)));
                }
                slid
            }
            Variant::Tau3 => sys.center_flow(&image, flow_times.as_ref().expect("tau3 times")[i]),
        };
        max_step_residual = max_step_residual.max(expected.dist(&y[i]));
        max_leaf_residual = max_leaf_residual.max(sys.leaf_distance(&image, &y[i]));
    }

    Ok(ShadowResult {
        variant,
        first_index: orbit.first_index,
        cyclic: orbit.cyclic,
        x: orbit.points.clone(),
        y,
        v,
        center_corrections,
        flow_times,
        max_distance,
        max_step_residual,
        max_center_component,
        max_leaf_residual,
        k1,
        step_norms,
        diagnostics,
    })
}
