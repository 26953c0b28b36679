//! Pseudo orbits: noisy trajectories, near returns, and cyclic orbits.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartConfig, Point3};
use crate::systems::PartiallyHyperbolicSystem;

/// Name of the generator behind every seeded computation.
pub const RNG_NAME: &str = "ChaCha8Rng";

const NOISE_SHRINK: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error("noise {noise} must be below the working chart radius {rho}")]
    NoiseTooLarge { noise: f64, rho: f64 },
    #[error("invalid orbit parameter: {0}")]
    InvalidParameter(String),
    #[error("no return below {threshold} within {max_n} iterates")]
    NoReturn { max_n: usize, threshold: f64 },
}

/// A finite window `x_{first}, ..., x_{first+len-1}` of a pseudo orbit, or a
/// cyclic orbit of period `len` (indices taken mod `len`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub points: Vec<Point3>,
    pub first_index: i64,
    pub cyclic: bool,
    pub measured_defect: f64,
}

impl PseudoOrbit {
    pub fn window<S: PartiallyHyperbolicSystem + ?Sized>(sys: &S, points: Vec<Point3>, first_index: i64) -> Self {
        let mut orbit = Self {
            points,
            first_index,
            cyclic: false,
            measured_defect: 0.0,
        };
        orbit.measured_defect = measure_defect(sys, &orbit).value;
        orbit
    }

    pub fn cyclic<S: PartiallyHyperbolicSystem + ?Sized>(sys: &S, points: Vec<Point3>) -> Self {
        let mut orbit = Self {
            points,
            first_index: 0,
            cyclic: true,
            measured_defect: 0.0,
        };
        orbit.measured_defect = measure_defect(sys, &orbit).value;
        orbit
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Storage position of orbit index `k`.
    pub fn position(&self, k: i64) -> Option<usize> {
        let n = self.points.len() as i64;
        if n == 0 {
            return None;
        }
        if self.cyclic {
            Some((k - self.first_index).rem_euclid(n) as usize)
        } else {
            let i = k - self.first_index;
            (0..n).contains(&i).then_some(i as usize)
        }
    }

    pub fn point(&self, k: i64) -> Option<&Point3> {
        self.position(k).map(|i| &self.points[i])
    }

    /// Orbit index of storage position `i`.
    pub fn index_of(&self, i: usize) -> i64 {
        self.first_index + i as i64
    }

    /// CSV with columns `k,x1,x2,x3`, 17 significant digits.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "x1", "x2", "x3"])?;
        for (i, p) in self.points.iter().enumerate() {
            let c = p.coords();
            out.write_record([
                self.index_of(i).to_string(),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(c[2]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Largest one-step error of an orbit and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub value: f64,
    /// Storage position `i` of the worst pair `(x_i, x_{i+1})`.
    pub argmax: Option<usize>,
}

/// `max d(f(x_k), x_{k+1})`, including the pair `(x_{n-1}, x_0)` for
/// cyclic orbits.
pub fn measure_defect<S: PartiallyHyperbolicSystem + ?Sized>(sys: &S, orbit: &PseudoOrbit) -> Defect {
    let n = orbit.points.len();
    let pairs = if orbit.cyclic { n } else { n.saturating_sub(1) };
    let mut best = Defect {
        value: 0.0,
        argmax: None,
    };
    for i in 0..pairs {
        let next = &orbit.points[(i + 1) % n];
        let d = sys.forward(&orbit.points[i]).dist(next);
        if best.argmax.is_none() || d > best.value {
            best = Defect {
                value: d,
                argmax: Some(i),
            };
        }
    }
    best
}

fn sample_ball(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 3] {
    loop {
        let c: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if c.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return c.map(|x| x * radius);
        }
    }
}

/// A window `x_{-N..N}` through `x0`, with uniform ball noise of radius
/// `noise` applied after each step of the map (forward half) or before each
/// step of the inverse (backward half).
pub fn generate_noisy<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    x0: Point3,
    half_width: usize,
    noise: f64,
    seed: u64,
) -> Result<PseudoOrbit, OrbitError> {
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(OrbitError::InvalidParameter(format!("noise={noise}")));
    }
    if noise >= chart.rho {
        return Err(OrbitError::NoiseTooLarge { noise, rho: chart.rho });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = noise * NOISE_SHRINK;
    let mut forward = Vec::with_capacity(half_width);
    let mut x = x0;
    for _ in 0..half_width {
        x = sys.forward(&x);
        if noise > 0.0 {
            x = x.translate(&sample_ball(&mut rng, radius));
        }
        forward.push(x);
    }
    let mut backward = Vec::with_capacity(half_width);
    let mut x = x0;
    for _ in 0..half_width {
        if noise > 0.0 {
            x = x.translate(&sample_ball(&mut rng, radius));
        }
        x = sys.inverse(&x);
        backward.push(x);
    }
    let mut points = Vec::with_capacity(2 * half_width + 1);
    points.extend(backward.into_iter().rev());
    points.push(x0);
    points.extend(forward);
    Ok(PseudoOrbit::window(sys, points, -(half_width as i64)))
}

/// The true orbit window `f^k(x0)`, `k = -N..N`.
pub fn true_orbit<S: PartiallyHyperbolicSystem + ?Sized>(sys: &S, x0: Point3, half_width: usize) -> PseudoOrbit {
    let mut points = vec![x0; 2 * half_width + 1];
    for i in (0..half_width).rev() {
        points[i] = sys.inverse(&points[i + 1]);
    }
    for i in half_width + 1..points.len() {
        points[i] = sys.forward(&points[i - 1]);
    }
    PseudoOrbit::window(sys, points, -(half_width as i64))
}

/// How a return is measured: point distance, or Hausdorff distance between
/// center leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnMode {
    Point,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearReturn {
    pub base_point: Point3,
    pub return_time: usize,
    pub gap: f64,
    pub mode: ReturnMode,
}

/// Smallest `n <= max_n` with `d(x, f^n x) < threshold` (point mode) or
/// `d_H(W^c(x), W^c(f^n x)) < threshold` (leaf mode).
pub fn find_near_return<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    x0: Point3,
    max_n: usize,
    threshold: f64,
    mode: ReturnMode,
) -> Result<NearReturn, OrbitError> {
    if max_n == 0 {
        return Err(OrbitError::InvalidParameter("max_n must be at least 1".into()));
    }
    let mut z = x0;
    for n in 1..=max_n {
        z = sys.forward(&z);
        let gap = match mode {
            ReturnMode::Point => x0.dist(&z),
            ReturnMode::Leaf => sys.leaf_distance(&x0, &z),
        };
        if gap < threshold {
            return Ok(NearReturn {
                base_point: x0,
                return_time: n,
                gap,
                mode,
            });
        }
    }
    Err(OrbitError::NoReturn { max_n, threshold })
}

/// Cyclic pseudo orbit of period `n` from a near return.
///
/// Point mode repeats `x, f x, ..., f^{n-1} x`; only the wrap pair is
/// inexact. Leaf mode starts from the point of `W^c(x)` nearest to
/// `f^n(x)` and repeats its orbit segment.
pub fn make_cyclic<S: PartiallyHyperbolicSystem + ?Sized>(sys: &S, ret: &NearReturn) -> PseudoOrbit {
    let start = match ret.mode {
        ReturnMode::Point => ret.base_point,
        ReturnMode::Leaf => {
            let image = sys.iterate(&ret.base_point, ret.return_time);
            sys.nearest_on_leaf(&ret.base_point, &image)
        }
    };
    let mut points = Vec::with_capacity(ret.return_time);
    let mut z = start;
    for _ in 0..ret.return_time {
        points.push(z);
        z = sys.forward(&z);
    }
    PseudoOrbit::cyclic(sys, points)
}
