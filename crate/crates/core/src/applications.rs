//! Periodic center leaves from near returns, and the semiconjugacy between
//! a perturbed map and the original one.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartConfig, Point3};
use crate::orbit::{find_near_return, fmt_f64, make_cyclic, true_orbit, NearReturn, OrbitError, PseudoOrbit, ReturnMode};
use crate::solver::{shadow, BoundaryPolicy, ContractionEstimates, ShadowResult, SolverConfig, SolverError, Variant};
use crate::systems::PartiallyHyperbolicSystem;

/// Default bound on the stepwise leaf residual of a closed cycle.
pub const LEAF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplicationError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("solver failed at grid point {point:?}: {source}")]
    GridPoint {
        point: [f64; 3],
        #[source]
        source: SolverError,
    },
    #[error("leaf residual {residual:e} exceeds tolerance {tolerance:e}")]
    LeafResidual { residual: f64, tolerance: f64 },
    #[error("no recurrence in the leaf chain after {steps} steps")]
    NoRecurrence { steps: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCenterLeaf {
    /// `p = y_0`; its center leaf is periodic.
    pub representative: Point3,
    pub period: usize,
    /// Largest leaf distance between `f(y_{k-1})` and `y_k` around the
    /// cycle.
    pub leaf_residual: f64,
    /// Leaf distance between `f^n(p)` and `p` by direct iteration. Grows
    /// like the unstable rate to the power `n` times round-off; reported
    /// only.
    pub direct_return_gap: f64,
    /// The point of the original leaf that `p` traces.
    pub reference: Point3,
    pub max_distance: f64,
    /// Near-return time `n` and number of chain segments.
    pub return_time: usize,
    pub segments: usize,
    pub mode: ReturnMode,
    pub variant: Variant,
    pub cycle: Vec<Point3>,
    pub tracing: Vec<Point3>,
    pub diagnostics: ContractionEstimates,
}

fn cyclic_config(cfg: &SolverConfig) -> SolverConfig {
    let variant = match cfg.variant {
        Variant::Tau1 => Variant::Tau2,
        v => v,
    };
    SolverConfig {
        variant,
        boundary_policy: BoundaryPolicy::Cyclic,
        ..*cfg
    }
}

fn close_cycle<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    cycle: PseudoOrbit,
    cfg: &SolverConfig,
    leaf_tolerance: f64,
) -> Result<(ShadowResult, f64), ApplicationError> {
    let res = shadow(sys, chart, &cycle, &cyclic_config(cfg))?;
    if !(res.max_leaf_residual <= leaf_tolerance) {
        return Err(ApplicationError::LeafResidual {
            residual: res.max_leaf_residual,
            tolerance: leaf_tolerance,
        });
    }
    let p = res.y[0];
    let direct = sys.leaf_distance(&sys.iterate(&p, cycle.len()), &p);
    Ok((res, direct))
}

/// Close up a near return into a periodic center leaf by a cyclic leaf
/// (or flow) solve.
pub fn find_periodic_center_leaf<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    ret: &NearReturn,
    cfg: &SolverConfig,
    leaf_tolerance: f64,
) -> Result<PeriodicCenterLeaf, ApplicationError> {
    let cycle = make_cyclic(sys, ret);
    let (res, direct) = close_cycle(sys, chart, cycle, cfg, leaf_tolerance)?;
    Ok(PeriodicCenterLeaf {
        representative: res.y[0],
        period: ret.return_time,
        leaf_residual: res.max_leaf_residual,
        direct_return_gap: direct,
        reference: res.x[0],
        max_distance: res.max_distance,
        return_time: ret.return_time,
        segments: 1,
        mode: ret.mode,
        variant: res.variant,
        cycle: res.x.clone(),
        tracing: res.y.clone(),
        diagnostics: res.diagnostics,
    })
}

/// Chain construction for a leaf that nearly returns in the Hausdorff
/// sense: `x_i ∈ W^c(x)` nearest to `f^n(x_{i-1})`, stopped at the first
/// pair `i < j` with `d(x_i, x_j) < δ - d(f^n(x_{j-1}), x_j)`. The orbit
/// segments of `x_i, ..., x_{j-1}` form a cycle of period `n (j - i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafChain {
    pub return_time: usize,
    pub points: Vec<Point3>,
    pub start: usize,
    pub end: usize,
}

impl LeafChain {
    pub fn period(&self) -> usize {
        self.return_time * (self.end - self.start)
    }

    pub fn cycle<S: PartiallyHyperbolicSystem + ?Sized>(&self, sys: &S) -> PseudoOrbit {
        let mut points = Vec::with_capacity(self.period());
        for x in &self.points[self.start..self.end] {
            let mut z = *x;
            for _ in 0..self.return_time {
                points.push(z);
                z = sys.forward(&z);
            }
        }
        PseudoOrbit::cyclic(sys, points)
    }
}

pub fn leaf_chain<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    x: Point3,
    return_time: usize,
    delta: f64,
    max_steps: usize,
) -> Result<LeafChain, ApplicationError> {
    if return_time == 0 {
        return Err(ApplicationError::InvalidParameter("return time must be positive".into()));
    }
    let mut points = vec![x];
    for j in 1..=max_steps {
        let image = sys.iterate(&points[j - 1], return_time);
        let xj = sys.nearest_on_leaf(&x, &image);
        let slack = delta - image.dist(&xj);
        points.push(xj);
        if let Some(i) = (0..j).find(|&i| points[i].dist(&xj) < slack) {
            return Ok(LeafChain {
                return_time,
                points,
                start: i,
                end: j,
            });
        }
    }
    Err(ApplicationError::NoRecurrence { steps: max_steps })
}

/// Periodic center leaf near `x` from a leaf return `d_H(W^c(x),
/// f^n W^c(x)) < δ` with `n <= max_n`.
#[allow(clippy::too_many_arguments)]
pub fn find_periodic_center_leaf_from_leaf_return<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    x: Point3,
    max_n: usize,
    delta: f64,
    max_chain: usize,
    cfg: &SolverConfig,
    leaf_tolerance: f64,
) -> Result<PeriodicCenterLeaf, ApplicationError> {
    let ret = find_near_return(sys, x, max_n, delta, ReturnMode::Leaf)?;
    let chain = leaf_chain(sys, x, ret.return_time, delta, max_chain)?;
    let cycle = chain.cycle(sys);
    let (res, direct) = close_cycle(sys, chart, cycle, cfg, leaf_tolerance)?;
    Ok(PeriodicCenterLeaf {
        representative: res.y[0],
        period: chain.period(),
        leaf_residual: res.max_leaf_residual,
        direct_return_gap: direct,
        reference: chain.points[chain.start],
        max_distance: res.max_distance,
        return_time: ret.return_time,
        segments: chain.end - chain.start,
        mode: ReturnMode::Leaf,
        variant: res.variant,
        cycle: res.x.clone(),
        tracing: res.y.clone(),
        diagnostics: res.diagnostics,
    })
}

/// `m³` points `(i, j, l) / m`.
pub fn uniform_grid(per_axis: usize) -> Vec<Point3> {
    let m = per_axis as f64;
    let mut out = Vec::with_capacity(per_axis.pow(3));
    for i in 0..per_axis {
        for j in 0..per_axis {
            for l in 0..per_axis {
                out.push(Point3::wrap_unchecked([i as f64 / m, j as f64 / m, l as f64 / m]));
            }
        }
    }
    out
}

/// `h` and the center section `u` at one point and at its image under `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacySample {
    pub x: Point3,
    pub h: Point3,
    pub u: [f64; 3],
    pub gx: Point3,
    pub h_gx: Point3,
    pub u_gx: [f64; 3],
    pub displacement: f64,
    pub center_component: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyMap {
    pub half_width: usize,
    pub grid_spacing: f64,
    pub samples: Vec<ConjugacySample>,
    /// `sup d(f, g)` over the grid.
    pub perturbation: f64,
    pub max_displacement: f64,
    pub max_center_component: f64,
    pub residual: SemiconjugacyReport,
    /// Largest `d(h(x), h(x'))` over grid neighbours.
    pub continuity_modulus: f64,
    /// Largest distance from a cell center to the image of the grid.
    pub covering_radius: f64,
    /// `2 (spacing + max displacement)`.
    pub covering_bound: f64,
    pub max_observed_contraction: f64,
    pub lambda_tilde: f64,
}

impl ConjugacyMap {
    pub fn is_dense(&self) -> bool {
        self.covering_radius <= self.covering_bound
    }

    /// CSV with columns `x1,x2,x3,h1,h2,h3,displacement,residual`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x1", "x2", "x3", "h1", "h2", "h3", "displacement", "residual"])?;
        for s in &self.samples {
            let row: Vec<String> = s
                .x
                .coords()
                .iter()
                .chain(s.h.coords())
                .chain([&s.displacement, &s.residual])
                .map(|c| fmt_f64(*c))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyReport {
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

struct Solved {
    h: Point3,
    u: [f64; 3],
    center: f64,
    contraction: f64,
    lambda_tilde: f64,
}

fn solve_at<F, G>(f: &F, g: &G, chart: &ChartConfig, x: Point3, n: usize, cfg: &SolverConfig) -> Result<Solved, ApplicationError>
where
    F: PartiallyHyperbolicSystem + ?Sized,
    G: PartiallyHyperbolicSystem + ?Sized,
{
    let orbit = true_orbit(g, x, n);
    let res = shadow(f, chart, &orbit, cfg).map_err(|source| ApplicationError::GridPoint {
        point: *x.coords(),
        source,
    })?;
    Ok(Solved {
        h: res.y[n],
        u: res.center_corrections.as_ref().map_or([0.0; 3], |u| u[n]),
        center: res.max_center_component,
        contraction: res.diagnostics.observed_contraction,
        lambda_tilde: res.diagnostics.lambda_tilde,
    })
}

/// `τ^{(1)}_z(w) = exp_z(u + exp_z^{-1} w)`.
fn tau1(chart: &ChartConfig, z: &Point3, u: &[f64; 3], w: &Point3) -> Option<Point3> {
    let d = chart.log_components(z, w).ok()?;
    Some(z.translate(&[u[0] + d[0], u[1] + d[1], u[2] + d[2]]))
}

fn sample_residual<F: PartiallyHyperbolicSystem + ?Sized>(f: &F, chart: &ChartConfig, s: &ConjugacySample) -> f64 {
    tau1(chart, &s.gx, &s.u_gx, &f.forward(&s.h)).map_or(f64::INFINITY, |p| p.dist(&s.h_gx))
}

/// `h(x) = y_0` of the `f`-shadow of the `g`-orbit window of half-width
/// `half_width` through each grid point; `h(g(x))` is solved the same way.
pub fn build_semiconjugacy<F, G>(
    f: &F,
    g: &G,
    chart: &ChartConfig,
    per_axis: usize,
    half_width: usize,
    cfg: &SolverConfig,
) -> Result<ConjugacyMap, ApplicationError>
where
    F: PartiallyHyperbolicSystem + ?Sized,
    G: PartiallyHyperbolicSystem + ?Sized,
{
    if per_axis == 0 || half_width == 0 {
        return Err(ApplicationError::InvalidParameter("grid size and window must be positive".into()));
    }
    let cfg = SolverConfig {
        variant: Variant::Tau1,
        boundary_policy: BoundaryPolicy::Truncated,
        ..*cfg
    };
    let grid = uniform_grid(per_axis);
    let solved: Vec<(ConjugacySample, f64, f64)> = grid
        .par_iter()
        .map(|x| {
            let at_x = solve_at(f, g, chart, *x, half_width, &cfg)?;
            let gx = g.forward(x);
            let at_gx = solve_at(f, g, chart, gx, half_width, &cfg)?;
            let mut s = ConjugacySample {
                x: *x,
                h: at_x.h,
                u: at_x.u,
                gx,
                h_gx: at_gx.h,
                u_gx: at_gx.u,
                displacement: x.dist(&at_x.h),
                center_component: at_x.center.max(at_gx.center),
                residual: 0.0,
            };
            s.residual = sample_residual(f, chart, &s);
            Ok((
                s,
                at_x.contraction.max(at_gx.contraction),
                at_x.lambda_tilde.max(at_gx.lambda_tilde),
            ))
        })
        .collect::<Result<_, ApplicationError>>()?;

    let perturbation = grid.iter().map(|x| f.forward(x).dist(&g.forward(x))).fold(0.0, f64::max);
    let max_observed_contraction = solved.iter().map(|t| t.1).fold(0.0, f64::max);
    let lambda_tilde = solved.iter().map(|t| t.2).fold(0.0, f64::max);
    let samples: Vec<ConjugacySample> = solved.into_iter().map(|t| t.0).collect();
    let max_displacement = samples.iter().map(|s| s.displacement).fold(0.0, f64::max);
    let max_center_component = samples.iter().map(|s| s.center_component).fold(0.0, f64::max);

    let m = per_axis;
    let index = |i: usize, j: usize, l: usize| (i % m) * m * m + (j % m) * m + l % m;
    let mut continuity_modulus = 0.0_f64;
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                let h = &samples[index(i, j, l)].h;
                for nb in [index(i + 1, j, l), index(i, j + 1, l), index(i, j, l + 1)] {
                    continuity_modulus = continuity_modulus.max(h.dist(&samples[nb].h));
                }
            }
        }
    }

    let spacing = 1.0 / m as f64;
    let covering_radius = grid
        .par_iter()
        .map(|x| {
            let center = x.translate(&[spacing / 2.0; 3]);
            samples.iter().map(|s| s.h.dist(&center)).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);

    let mut map = ConjugacyMap {
        half_width,
        grid_spacing: spacing,
        samples,
        perturbation,
        max_displacement,
        max_center_component,
        residual: SemiconjugacyReport {
            max: 0.0,
            mean: 0.0,
            count: 0,
        },
        continuity_modulus,
        covering_radius,
        covering_bound: 2.0 * (spacing + max_displacement),
        max_observed_contraction,
        lambda_tilde,
    };
    map.residual = verify_semiconjugacy(&map, f, chart);
    Ok(map)
}

/// Max and mean of `d(h(g x), τ^{(1)}_{g x}(f(h x)))` recomputed from the
/// stored samples.
pub fn verify_semiconjugacy<F: PartiallyHyperbolicSystem + ?Sized>(
    map: &ConjugacyMap,
    f: &F,
    chart: &ChartConfig,
) -> SemiconjugacyReport {
    let residuals: Vec<f64> = map.samples.iter().map(|s| sample_residual(f, chart, s)).collect();
    let count = residuals.len();
    SemiconjugacyReport {
        max: residuals.iter().copied().fold(0.0, f64::max),
        mean: if count == 0 { 0.0 } else { residuals.iter().sum::<f64>() / count as f64 },
        count,
    }
}
