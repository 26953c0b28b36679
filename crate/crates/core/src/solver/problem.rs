use std::ops::Sub;

use crate::geometry::{ChartConfig, Point3};
use crate::orbit::PseudoOrbit;
use crate::systems::{Bundle, Mat3, PartiallyHyperbolicSystem, Splitting, Vec3};

use super::{BoundaryPolicy, SolverConfig, SolverError, Variant};

const S: usize = 0;
const C: usize = 1;
const U: usize = 2;

/// A sequence of tangent vectors along the orbit, entry `i` stored in the
/// splitting coordinates `(s, c, u)` at the `i`-th orbit point.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceVector {
    pub coords: Vec<Vec3>,
}

impl SequenceVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            coords: vec![Vec3::zeros(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// The `E^s ⊕ E^u` part (center coordinate cleared).
    pub fn us_part(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| Vec3::new(c[S], 0.0, c[U])).collect(),
        }
    }

    /// Center coordinates; for a unit center field these are also the
    /// signed lengths of the center parts.
    pub fn center_values(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c[C]).collect()
    }
}

impl Sub for &SequenceVector {
    type Output = SequenceVector;

    fn sub(self, rhs: &SequenceVector) -> SequenceVector {
        SequenceVector {
            coords: self.coords.iter().zip(&rhs.coords).map(|(a, b)| a - b).collect(),
        }
    }
}

/// The linearization of the step relation along one pseudo orbit: frames,
/// Jacobians and the scalar hyperbolic blocks `A^s_{k-1}`, `A^u_{k-1}`.
pub struct ShadowProblem<'a, Sys: PartiallyHyperbolicSystem + ?Sized> {
    sys: &'a Sys,
    chart: ChartConfig,
    orbit: &'a PseudoOrbit,
    variant: Variant,
    splittings: Vec<Splitting>,
    jacobians: Vec<Mat3>,
    // (A^s, A^u) of the step into position i; None without a predecessor
    blocks: Vec<Option<(f64, f64)>>,
    center_coords: Vec<Vec3>,
    lambda_tilde: f64,
}

impl<'a, Sys: PartiallyHyperbolicSystem + ?Sized> ShadowProblem<'a, Sys> {
    pub fn new(sys: &'a Sys, chart: ChartConfig, orbit: &'a PseudoOrbit, cfg: &SolverConfig) -> Result<Self, SolverError> {
        cfg.validate(chart.rho)?;
        let n = orbit.len();
        match (cfg.boundary_policy, orbit.cyclic) {
            (BoundaryPolicy::Truncated, false) if n < 2 => return Err(SolverError::WindowTooShort(n)),
            (BoundaryPolicy::Cyclic, true) if n == 0 => return Err(SolverError::WindowTooShort(n)),
            (BoundaryPolicy::Truncated, false) | (BoundaryPolicy::Cyclic, true) => {}
            (policy, cyclic) => return Err(SolverError::PolicyMismatch { policy, cyclic }),
        }
        if cfg.variant != Variant::Tau1 && sys.center_dimension() != 1 {
            return Err(SolverError::CenterDimension(cfg.variant));
        }
        let splittings = orbit
            .points
            .iter()
            .map(|x| sys.splitting_at(x))
            .collect::<Result<Vec<_>, _>>()?;
        let jacobians: Vec<Mat3> = orbit.points.iter().map(|x| sys.differential(x)).collect();
        let center_coords = orbit
            .points
            .iter()
            .zip(&splittings)
            .map(|(x, sp)| sp.coordinates(&sys.center_field(x)))
            .collect();

        let mut problem = Self {
            sys,
            chart,
            orbit,
            variant: cfg.variant,
            splittings,
            jacobians,
            blocks: vec![None; n],
            center_coords,
            lambda_tilde: 0.0,
        };
        let mut lambda_tilde = 0.0_f64;
        for i in 0..n {
            let Some(p) = problem.predecessor(i) else { continue };
            let jac = &problem.jacobians[p];
            let sp = &problem.splittings[p];
            let next = &problem.splittings[i];
            let a_s = next.coordinates(&(jac * sp.direction(Bundle::Stable)))[S];
            let a_u = next.coordinates(&(jac * sp.direction(Bundle::Unstable)))[U];
            let factor = a_s.abs().max(1.0 / a_u.abs());
            if !(factor < 1.0) {
                return Err(SolverError::BlockNotContracting { index: i, factor });
            }
            lambda_tilde = lambda_tilde.max(factor);
            problem.blocks[i] = Some((a_s, a_u));
        }
        problem.lambda_tilde = lambda_tilde;
        Ok(problem)
    }

    pub fn len(&self) -> usize {
        self.orbit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbit.is_empty()
    }

    pub fn orbit(&self) -> &PseudoOrbit {
        self.orbit
    }

    pub fn system(&self) -> &Sys {
        self.sys
    }

    pub fn chart(&self) -> &ChartConfig {
        &self.chart
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn splitting(&self, i: usize) -> &Splitting {
        &self.splittings[i]
    }

    /// Measured `λ̃ = max(|A^s|, |A^u|^{-1})` over the orbit.
    pub fn lambda_tilde(&self) -> f64 {
        self.lambda_tilde
    }

    /// The `(A^s, A^u)` scalars of the step into position `i`.
    pub fn block(&self, i: usize) -> Option<(f64, f64)> {
        self.blocks[i]
    }

    pub fn predecessor(&self, i: usize) -> Option<usize> {
        let n = self.orbit.len();
        if i > 0 {
            Some(i - 1)
        } else if self.orbit.cyclic {
            Some(n - 1)
        } else {
            None
        }
    }

    /// Chart components of splitting coordinates at position `i`.
    pub fn to_chart(&self, i: usize, c: &Vec3) -> [f64; 3] {
        let w = self.splittings[i].from_coordinates(c);
        [w[0], w[1], w[2]]
    }

    pub fn to_splitting(&self, i: usize, w: &[f64; 3]) -> Vec3 {
        self.splittings[i].coordinates(&Vec3::new(w[0], w[1], w[2]))
    }

    /// `‖w‖ = sup_k ‖w_k‖`.
    pub fn sup_norm(&self, w: &SequenceVector) -> f64 {
        w.coords
            .iter()
            .zip(&self.splittings)
            .map(|(c, sp)| sp.from_coordinates(c).norm())
            .fold(0.0, f64::max)
    }

    fn center_sup(&self, w: &SequenceVector) -> f64 {
        w.coords
            .iter()
            .zip(&self.splittings)
            .map(|(c, sp)| (sp.direction(Bundle::Center) * c[C]).norm())
            .fold(0.0, f64::max)
    }

    fn us_sup(&self, w: &SequenceVector) -> f64 {
        w.coords
            .iter()
            .zip(&self.splittings)
            .map(|(c, sp)| (sp.direction(Bundle::Stable) * c[S] + sp.direction(Bundle::Unstable) * c[U]).norm())
            .fold(0.0, f64::max)
    }

    /// `‖w‖₁ = sup_k ‖u_k‖ + sup_k ‖v_k‖`.
    pub fn norm1(&self, w: &SequenceVector) -> f64 {
        self.center_sup(w) + self.us_sup(w)
    }

    fn overflow(index: usize) -> impl Fn(crate::geometry::GeometryError) -> SolverError {
        move |source| SolverError::ChartOverflow { index, source }
    }

    /// Move `y` along its center leaf onto the transversal disk
    /// `exp_{x_i}(E^s ⊕ E^u)`. Returns the moved point and the flow time.
    pub fn slide_to_transversal(&self, i: usize, y: &Point3) -> Result<(Point3, f64), SolverError> {
        let x = &self.orbit.points[i];
        let sp = &self.splittings[i];
        let z = self.chart.log_components(x, y).map_err(Self::overflow(i))?;
        let field = self.sys.center_field(y);
        let system = Mat3::from_columns(&[sp.direction(Bundle::Stable), sp.direction(Bundle::Unstable), -field]);
        let sol = system
            .lu()
            .solve(&Vec3::new(z[0], z[1], z[2]))
            .ok_or(SolverError::SingularCycle { bundle: "transversal" })?;
        let t = sol[2];
        if !(t.abs() < self.chart.rho0) {
            return Err(SolverError::ChartOverflow {
                index: i,
                source: crate::geometry::GeometryError::NormTooLarge {
                    norm: t.abs(),
                    radius: self.chart.rho0,
                },
            });
        }
        Ok((self.sys.center_flow(y, t), t))
    }

    fn push_forward(&self, p: usize, v: &Vec3) -> Result<Point3, SolverError> {
        let comps = self.to_chart(p, &Vec3::new(v[S], 0.0, v[U]));
        let z = self
            .chart
            .exp_components(&self.orbit.points[p], &comps)
            .map_err(Self::overflow(p))?;
        Ok(self.sys.forward(&z))
    }

    /// `β(v)_k = exp_{x_k}^{-1} ∘ τ ∘ f ∘ exp_{x_{k-1}} v_{k-1}`, where `τ`
    /// is the identity for the first and third variants and the slide onto
    /// the transversal for the second. Positions without a predecessor get 0.
    pub fn apply_beta(&self, v: &SequenceVector) -> Result<SequenceVector, SolverError> {
        self.beta_impl(v, None)
    }

    /// `β(v, τ̃)` with the center flow `φ^{τ̃_k}` applied before the chart.
    pub fn apply_beta_with_flow(&self, v: &SequenceVector, times: &[f64]) -> Result<SequenceVector, SolverError> {
        self.beta_impl(v, Some(times))
    }

    fn beta_impl(&self, v: &SequenceVector, times: Option<&[f64]>) -> Result<SequenceVector, SolverError> {
        let n = self.len();
        let mut out = SequenceVector::zeros(n);
        for i in 0..n {
            let Some(p) = self.predecessor(i) else { continue };
            let mut target = self.push_forward(p, &v.coords[p])?;
            if self.variant == Variant::Tau2 {
                target = self.slide_to_transversal(i, &target)?.0;
            }
            if let Some(t) = times {
                target = self.sys.center_flow(&target, t[i]);
            }
            let d = self
                .chart
                .log_components(&self.orbit.points[i], &target)
                .map_err(Self::overflow(i))?;
            out.coords[i] = self.to_splitting(i, &d);
        }
        Ok(out)
    }

    /// `(Av)_k = (A^s_{k-1} + A^u_{k-1}) v_{k-1}`; the center is annihilated.
    pub fn apply_a(&self, v: &SequenceVector) -> SequenceVector {
        let n = self.len();
        let mut out = SequenceVector::zeros(n);
        for i in 0..n {
            if let (Some(p), Some((a_s, a_u))) = (self.predecessor(i), self.blocks[i]) {
                let prev = &v.coords[p];
                out.coords[i] = Vec3::new(a_s * prev[S], 0.0, a_u * prev[U]);
            }
        }
        out
    }

    /// `η = β − A`.
    pub fn eta(&self, v: &SequenceVector) -> Result<SequenceVector, SolverError> {
        let beta = self.apply_beta(&v.us_part())?;
        Ok(&beta - &self.apply_a(&v.us_part()))
    }

    /// `P^{-1} r` for `P w = -u + (id - A) v`.
    ///
    /// The center part is `-r^c` (left at zero for the second variant,
    /// whose operator acts on `E^s ⊕ E^u` only). On a finite window the
    /// stable part is the forward recursion started from `r^s` at the left
    /// edge and the unstable part is the backward recursion started from
    /// zero at the right edge; `r^u` at the left edge has no equation and is
    /// ignored. Cyclic orbits solve the periodic recursions exactly.
    pub fn solve_p(&self, rhs: &SequenceVector) -> Result<SequenceVector, SolverError> {
        let n = self.len();
        let mut out = SequenceVector::zeros(n);
        if self.variant != Variant::Tau2 {
            for (o, r) in out.coords.iter_mut().zip(&rhs.coords) {
                o[C] = -r[C];
            }
        }
        let r_s: Vec<f64> = rhs.coords.iter().map(|c| c[S]).collect();
        let r_u: Vec<f64> = rhs.coords.iter().map(|c| c[U]).collect();
        let (s, u) = if self.orbit.cyclic {
            let a_s: Vec<f64> = self.blocks.iter().map(|b| b.expect("cyclic blocks").0).collect();
            let a_u: Vec<f64> = self.blocks.iter().map(|b| b.expect("cyclic blocks").1).collect();
            (
                periodic_contracting(&a_s, &r_s).ok_or(SolverError::SingularCycle { bundle: "stable" })?,
                periodic_expanding(&a_u, &r_u).ok_or(SolverError::SingularCycle { bundle: "unstable" })?,
            )
        } else {
            let mut s = vec![0.0; n];
            s[0] = r_s[0];
            for i in 1..n {
                s[i] = self.blocks[i].expect("interior block").0 * s[i - 1] + r_s[i];
            }
            let mut u = vec![0.0; n];
            for i in (1..n).rev() {
                u[i - 1] = (u[i] - r_u[i]) / self.blocks[i].expect("interior block").1;
            }
            (s, u)
        };
        for i in 0..n {
            out.coords[i][S] = s[i];
            out.coords[i][U] = u[i];
        }
        Ok(out)
    }

    /// `Φ(w) = P^{-1} η(v)`, `v` the `E^s ⊕ E^u` part of `w`.
    ///
    /// For the flow variant the center coordinates of `w` are the flow
    /// times; they enter `β` through `φ^{τ̃}` and are removed again so that
    /// `η` is the flow-free remainder.
    pub fn phi(&self, w: &SequenceVector) -> Result<SequenceVector, SolverError> {
        let v = w.us_part();
        let eta = match self.variant {
            Variant::Tau1 | Variant::Tau2 => self.eta(&v)?,
            Variant::Tau3 => {
                let times = w.center_values();
                let mut beta = self.apply_beta_with_flow(&v, &times)?;
                for (i, b) in beta.coords.iter_mut().enumerate() {
                    if self.predecessor(i).is_some() {
                        *b -= self.center_coords[i] * times[i];
                    }
                }
                &beta - &self.apply_a(&v)
            }
        };
        self.solve_p(&eta)
    }

    /// `Df` at the `i`-th orbit point.
    pub fn jacobian(&self, i: usize) -> &Mat3 {
        &self.jacobians[i]
    }
}

/// Solve `x_i = a_i x_{i-1} + r_i` with indices mod `n`, `|∏ a| < 1`,
/// by sweeping forward in the unknown `t = x_{n-1}`.
fn periodic_contracting(a: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    // x_i = g_i t + z_i
    let (mut g, mut z) = (a[0], r[0]);
    for i in 1..n {
        g *= a[i];
        z = a[i] * z + r[i];
    }
    let denom = 1.0 - g;
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let t = z / denom;
    let mut x = vec![0.0; n];
    x[0] = a[0] * t + r[0];
    for i in 1..n {
        x[i] = a[i] * x[i - 1] + r[i];
    }
    Some(x)
}

/// Same system with `|a_i| > 1`, swept backward in `t = x_0` through
/// `x_{i-1} = (x_i - r_i) / a_i`.
fn periodic_expanding(a: &[f64], r: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    // x_{n-1} = (t - r_0)/a_0 = h t + w, then sweep down to x_0
    let (mut h, mut w) = (1.0 / a[0], -r[0] / a[0]);
    for i in (1..n).rev() {
        h /= a[i];
        w = (w - r[i]) / a[i];
    }
    let denom = 1.0 - h;
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let t = w / denom;
    let mut x = vec![0.0; n];
    x[0] = t;
    if n > 1 {
        x[n - 1] = (t - r[0]) / a[0];
        for i in (1..n - 1).rev() {
            x[i] = (x[i + 1] - r[i + 1]) / a[i + 1];
        }
    }
    Some(x)
}
