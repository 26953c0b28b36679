//! Partially hyperbolic skew products on `T^3` and their invariant splittings.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Smaller eigenvalue of the cat matrix `[[2,1],[1,1]]`, `(3 - sqrt 5)/2`.
pub const CAT_LAMBDA: f64 = 0.381_966_011_250_105_1;
/// Larger eigenvalue of the cat matrix, `(3 + sqrt 5)/2`.
pub const CAT_MU: f64 = 2.618_033_988_749_895;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("rate ordering violated: {0:?}")]
    RateOrdering(HyperbolicityRates),
    #[error("kappa={kappa} too large: {rates:?} violates the partial hyperbolicity ordering")]
    KappaTooLarge { kappa: f64, rates: HyperbolicityRates },
    #[error("power iteration for the {bundle:?} bundle did not settle (angle change {change:e})")]
    SplittingNotConverged { bundle: Bundle, change: f64 },
    #[error("singular splitting frame")]
    SingularFrame,
}

/// One-step rates `0 < lambda < 1 < mu`, `lambda < lambda' <= mu' < mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityRates {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub mu_prime: f64,
    pub mu: f64,
}

impl HyperbolicityRates {
    pub fn is_ordered(&self) -> bool {
        0.0 < self.lambda
            && self.lambda < 1.0
            && 1.0 < self.mu
            && self.lambda < self.lambda_prime
            && self.lambda_prime <= self.mu_prime
            && self.mu_prime < self.mu
    }

    pub fn validate(self) -> Result<Self, SystemError> {
        if self.is_ordered() {
            Ok(self)
        } else {
            Err(SystemError::RateOrdering(self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplittingMode {
    Analytic,
    Numerical,
}

/// Power-iteration settings for numerically estimated bundles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub n_split: usize,
    pub tol: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_split: 40,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bundle {
    Stable,
    Center,
    Unstable,
}

impl Bundle {
    pub const ALL: [Bundle; 3] = [Bundle::Stable, Bundle::Center, Bundle::Unstable];

    fn column(self) -> usize {
        match self {
            Bundle::Stable => 0,
            Bundle::Center => 1,
            Bundle::Unstable => 2,
        }
    }
}

/// `T_x T^3 = E^s + E^c + E^u` at a point, each bundle one-dimensional.
///
/// Splitting coordinates of a vector `w` are the coefficients `(s, c, u)`
/// with `w = s e_s + c e_c + u e_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splitting {
    frame: Mat3,
    inverse: Mat3,
}

impl Splitting {
    /// Build from unit direction vectors of the three bundles.
    pub fn from_directions(stable: Vec3, center: Vec3, unstable: Vec3) -> Result<Self, SystemError> {
        let frame = Mat3::from_columns(&[stable, center, unstable]);
        let inverse = frame.try_inverse().ok_or(SystemError::SingularFrame)?;
        Ok(Self { frame, inverse })
    }

    pub fn direction(&self, bundle: Bundle) -> Vec3 {
        self.frame.column(bundle.column()).into_owned()
    }

    pub fn frame(&self) -> &Mat3 {
        &self.frame
    }

    /// `Π^i`, the projection onto `E^i` along the other two bundles.
    pub fn projection(&self, bundle: Bundle) -> Mat3 {
        let j = bundle.column();
        self.frame.column(j) * self.inverse.row(j)
    }

    pub fn coordinates(&self, w: &Vec3) -> Vec3 {
        self.inverse * w
    }

    pub fn from_coordinates(&self, c: &Vec3) -> Vec3 {
        self.frame * c
    }
}

/// A partially hyperbolic diffeomorphism of `T^3` whose center leaves are
/// straight lines along a unit field (closed circles for the built-ins).
pub trait PartiallyHyperbolicSystem: Send + Sync {
    fn forward(&self, x: &Point3) -> Point3;
    fn inverse(&self, x: &Point3) -> Point3;
    /// Jacobian of the chart map at `x`.
    fn differential(&self, x: &Point3) -> Mat3;
    /// Nominal one-step rates.
    fn rates(&self) -> HyperbolicityRates;
    fn splitting_at(&self, x: &Point3) -> Result<Splitting, SystemError>;
    fn center_dimension(&self) -> usize {
        1
    }
    /// Unit field tangent to the center foliation.
    fn center_field(&self, x: &Point3) -> Vec3;
    /// Flow of [`Self::center_field`] for time `t`.
    fn center_flow(&self, x: &Point3, t: f64) -> Point3;
    /// Hausdorff distance between the center leaves through `a` and `b`.
    fn leaf_distance(&self, a: &Point3, b: &Point3) -> f64;
    /// The point of the center leaf through `leaf` closest to `target`.
    fn nearest_on_leaf(&self, leaf: &Point3, target: &Point3) -> Point3;

    fn iterate(&self, x: &Point3, n: usize) -> Point3 {
        (0..n).fold(*x, |p, _| self.forward(&p))
    }
}

/// `F(b, θ) = (A b, θ + α + κ sin 2π b₁)` with `A = [[2,1],[1,1]]`,
/// coordinates ordered `(b₁, b₂, θ)`.
///
/// The base is the cat map; each circle fiber `{b} × S¹` is mapped
/// rigidly onto the fiber over `A b`, so the fibers form an invariant,
/// smooth, uniformly compact center foliation with `E^c = ∂θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CatCircle {
    alpha: f64,
    kappa: f64,
    mode: SplittingMode,
    split: SplitConfig,
    rates: HyperbolicityRates,
}

const RATE_SAMPLES: usize = 64;
const RATE_SEED: u64 = 0;

impl CatCircle {
    pub fn new(alpha: f64, kappa: f64, mode: SplittingMode, split: SplitConfig) -> Result<Self, SystemError> {
        if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
            return Err(SystemError::InvalidParameter(format!("alpha={alpha} not in [0,1)")));
        }
        if !kappa.is_finite() {
            return Err(SystemError::InvalidParameter(format!("kappa={kappa} not finite")));
        }
        if mode == SplittingMode::Analytic && kappa != 0.0 {
            return Err(SystemError::InvalidParameter(
                "analytic splitting is only available for kappa = 0".into(),
            ));
        }
        if split.n_split < 2 || !(split.tol > 0.0) {
            return Err(SystemError::InvalidParameter(format!("bad split config {split:?}")));
        }
        let mut sys = Self {
            alpha,
            kappa,
            mode,
            split,
            rates: HyperbolicityRates {
                lambda: CAT_LAMBDA,
                lambda_prime: 1.0,
                mu_prime: 1.0,
                mu: CAT_MU,
            },
        };
        if kappa != 0.0 {
            let samples = sample_points(RATE_SAMPLES, RATE_SEED);
            let est = verify_rates(&sys, &samples).map_err(|e| match e {
                SystemError::RateOrdering(rates) => SystemError::KappaTooLarge { kappa, rates },
                other => other,
            })?;
            sys.rates = est.rates;
        }
        Ok(sys)
    }

    /// Linear case `κ = 0` with the closed-form splitting.
    pub fn linear(alpha: f64) -> Result<Self, SystemError> {
        Self::new(alpha, 0.0, SplittingMode::Analytic, SplitConfig::default())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mode(&self) -> SplittingMode {
        self.mode
    }

    pub fn split_config(&self) -> SplitConfig {
        self.split
    }

    /// Same map with different parameters and the splitting mode that
    /// suits them.
    pub fn with_parameters(&self, alpha: f64, kappa: f64) -> Result<Self, SystemError> {
        let mode = if kappa == 0.0 { self.mode } else { SplittingMode::Numerical };
        Self::new(alpha.rem_euclid(1.0), kappa, mode, self.split)
    }

    /// The map on the covering space `R^3`, without reduction.
    pub fn forward_raw(&self, c: &[f64; 3]) -> [f64; 3] {
        [
            2.0 * c[0] + c[1],
            c[0] + c[1],
            c[2] + self.alpha + self.kappa * (2.0 * PI * c[0]).sin(),
        ]
    }

    fn numerical_splitting(&self, x: &Point3) -> Result<Splitting, SystemError> {
        let n = self.split.n_split;
        // E^u: push a generic vector forward along the backward orbit of x.
        let mut back = Vec::with_capacity(n);
        let mut z = *x;
        for _ in 0..n {
            z = self.inverse(&z);
            back.push(z);
        }
        let start = Vec3::new(0.3, 0.7, 0.2).normalize();
        let push = |depth: usize| {
            back[..depth]
                .iter()
                .rev()
                .fold(start, |v, p| (self.differential(p) * v).normalize())
        };
        let v = push(n);
        let change = sin_angle(&v, &push(n - 1));
        if !(change <= self.split.tol) {
            return Err(SystemError::SplittingNotConverged {
                bundle: Bundle::Unstable,
                change,
            });
        }
        let unstable = orient(v);

        // E^s: pull a generic vector back along the forward orbit of x.
        let mut fwd = Vec::with_capacity(n);
        let mut z = *x;
        for _ in 0..n {
            fwd.push(z);
            z = self.forward(&z);
        }
        let start = Vec3::new(-0.6, 0.5, 0.3).normalize();
        let inverses = fwd
            .iter()
            .map(|p| self.differential(p).try_inverse().ok_or(SystemError::SingularFrame))
            .collect::<Result<Vec<_>, _>>()?;
        let pull = |depth: usize| inverses[..depth].iter().rev().fold(start, |w, inv| (inv * w).normalize());
        let w = pull(n);
        let change = sin_angle(&w, &pull(n - 1));
        if !(change <= self.split.tol) {
            return Err(SystemError::SplittingNotConverged {
                bundle: Bundle::Stable,
                change,
            });
        }
        let stable = orient(w);
        Splitting::from_directions(stable, Vec3::z(), unstable)
    }
}

/// Analytic bundles of the linear system: eigenvectors of the cat matrix.
pub fn cat_eigendirections() -> (Vec3, Vec3) {
    let stable = Vec3::new(CAT_LAMBDA - 1.0, 1.0, 0.0).normalize();
    let unstable = Vec3::new(CAT_MU - 1.0, 1.0, 0.0).normalize();
    (stable, unstable)
}

// Fix the sign so that the b₂-component is positive.
fn orient(v: Vec3) -> Vec3 {
    if v[1] < 0.0 {
        -v
    } else {
        v
    }
}

/// Sine of the angle between two nonzero vectors.
pub fn sin_angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm() / (a.norm() * b.norm())
}

impl PartiallyHyperbolicSystem for CatCircle {
    fn forward(&self, x: &Point3) -> Point3 {
        Point3::wrap_unchecked(self.forward_raw(x.coords()))
    }

    fn inverse(&self, x: &Point3) -> Point3 {
        let [b1, b2, t] = *x.coords();
        let a1 = b1 - b2;
        let a2 = 2.0 * b2 - b1;
        let a1r = crate::geometry::reduce_unit(a1);
        Point3::wrap_unchecked([
            a1,
            a2,
            t - self.alpha - self.kappa * (2.0 * PI * a1r).sin(),
        ])
    }

    fn differential(&self, x: &Point3) -> Mat3 {
        let b1 = x.coords()[0];
        let shear = 2.0 * PI * self.kappa * (2.0 * PI * b1).cos();
        Mat3::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.0, shear, 0.0, 1.0)
    }

    fn rates(&self) -> HyperbolicityRates {
        self.rates
    }

    fn splitting_at(&self, x: &Point3) -> Result<Splitting, SystemError> {
        match self.mode {
            SplittingMode::Analytic => {
                let (s, u) = cat_eigendirections();
                Splitting::from_directions(s, Vec3::z(), u)
            }
            SplittingMode::Numerical => self.numerical_splitting(x),
        }
    }

    fn center_field(&self, _x: &Point3) -> Vec3 {
        Vec3::z()
    }

    fn center_flow(&self, x: &Point3, t: f64) -> Point3 {
        x.translate(&[0.0, 0.0, t])
    }

    fn leaf_distance(&self, a: &Point3, b: &Point3) -> f64 {
        let d = a.displacement_to(b);
        d[0].hypot(d[1])
    }

    fn nearest_on_leaf(&self, leaf: &Point3, target: &Point3) -> Point3 {
        let c = leaf.coords();
        Point3::wrap_unchecked([c[0], c[1], target.coords()[2]])
    }
}

/// Deterministic uniform sample of `T^3`.
pub fn sample_points(count: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point3::wrap_unchecked([rng.random(), rng.random(), rng.random()]))
        .collect()
}

/// Empirical one-step rates over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatesEstimate {
    pub rates: HyperbolicityRates,
    /// Largest multi-step constant `C` relative to the asymptotic base
    /// rates, over horizons `1..=8`.
    pub constant_c: f64,
    /// Worst bundle-invariance angle (sine) `∠(Df E^i(x), E^i(f x))`.
    pub invariance_angle: f64,
    pub samples: usize,
}

const C_HORIZON: usize = 8;

/// Per-step contraction/expansion factors of the bundles over `samples`.
pub fn verify_rates<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    samples: &[Point3],
) -> Result<RatesEstimate, SystemError> {
    let mut lambda = 0.0_f64;
    let mut lambda_prime = f64::INFINITY;
    let mut mu_prime = 0.0_f64;
    let mut mu = f64::INFINITY;
    let mut constant_c = 1.0_f64;
    let mut invariance_angle = 0.0_f64;
    for x in samples {
        let split = sys.splitting_at(x)?;
        let df = sys.differential(x);
        let fx = sys.forward(x);
        let split_next = sys.splitting_at(&fx)?;
        for bundle in Bundle::ALL {
            let e = split.direction(bundle);
            let image = df * e;
            let factor = image.norm() / e.norm();
            match bundle {
                Bundle::Stable => lambda = lambda.max(factor),
                Bundle::Center => {
                    lambda_prime = lambda_prime.min(factor);
                    mu_prime = mu_prime.max(factor);
                }
                Bundle::Unstable => mu = mu.min(factor),
            }
            invariance_angle = invariance_angle.max(sin_angle(&image, &split_next.direction(bundle)));
        }
        // multi-step constant against the base eigenvalues
        let mut es = split.direction(Bundle::Stable);
        let mut eu = split.direction(Bundle::Unstable);
        let mut z = *x;
        for n in 1..=C_HORIZON {
            let d = sys.differential(&z);
            es = d * es;
            eu = d * eu;
            z = sys.forward(&z);
            let ni = n as i32;
            constant_c = constant_c
                .max(es.norm() / CAT_LAMBDA.powi(ni))
                .max(CAT_MU.powi(ni) / eu.norm());
        }
    }
    let rates = HyperbolicityRates {
        lambda,
        lambda_prime,
        mu_prime,
        mu,
    };
    if !rates.is_ordered() {
        return Err(SystemError::RateOrdering(rates));
    }
    Ok(RatesEstimate {
        rates,
        constant_c,
        invariance_angle,
        samples: samples.len(),
    })
}
