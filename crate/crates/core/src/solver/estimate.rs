use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::ChartConfig;
use crate::orbit::PseudoOrbit;
use crate::systems::{Bundle, Mat3, PartiallyHyperbolicSystem, Vec3};

use super::problem::{SequenceVector, ShadowProblem};
use super::{SolverConfig, SolverError};

/// Measured constants of the contraction argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimates {
    /// Pointwise `sup ‖w‖₁/‖w‖` over random probes.
    pub l: f64,
    /// `sup_k ‖Π^c_k‖ + sup_k ‖Π^{us}_k‖`, a guaranteed constant for
    /// `‖w‖₁ ≤ L ‖w‖` on sequences.
    pub l_sequence: f64,
    pub lambda_tilde: f64,
    /// Largest `‖η(v) - η(v')‖ / ‖v - v'‖` seen.
    pub c_delta: f64,
    /// Largest `‖P^{-1} r‖₁ / ‖r‖₁` seen.
    pub p_inv_norm: f64,
    /// Largest `‖Φ(w) - Φ(w')‖₁ / ‖w - w'‖₁` seen.
    pub observed_contraction: f64,
    /// Orbit defect `sup d(f(x_{k-1}), x_k)`.
    pub delta: f64,
    /// `L δ / ((1 - λ̃)(1 - c))` with the sequence constant.
    pub predicted_radius: f64,
    /// `L δ / (1 - λ̃)` with the pointwise constant.
    pub sufficient_bound: f64,
    /// Whether `sufficient_bound < ε/2`.
    pub sufficient_condition: bool,
    pub probes: usize,
    pub iterations: usize,
    pub final_residual: f64,
}

/// Probe the constants for `orbit` without solving.
pub fn estimate_contraction<S: PartiallyHyperbolicSystem + ?Sized>(
    sys: &S,
    chart: &ChartConfig,
    orbit: &PseudoOrbit,
    cfg: &SolverConfig,
    probes: usize,
    seed: u64,
) -> Result<ContractionEstimates, SolverError> {
    let problem = ShadowProblem::new(sys, *chart, orbit, cfg)?;
    estimate_with(&problem, cfg.epsilon, probes, seed)
}

fn spectral_norm(m: &Mat3) -> f64 {
    m.singular_values().max()
}

fn random_sequence(rng: &mut ChaCha8Rng, n: usize) -> SequenceVector {
    SequenceVector {
        coords: (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect(),
    }
}

fn scaled(w: &SequenceVector, factor: f64) -> SequenceVector {
    SequenceVector {
        coords: w.coords.iter().map(|c| c * factor).collect(),
    }
}

pub(crate) fn estimate_with<S: PartiallyHyperbolicSystem + ?Sized>(
    problem: &ShadowProblem<'_, S>,
    epsilon: f64,
    probes: usize,
    seed: u64,
) -> Result<ContractionEstimates, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.len();
    let sys = problem.system();
    let orbit = problem.orbit();

    let mut l = 1.0_f64;
    let (mut pc_max, mut pus_max) = (0.0_f64, 0.0_f64);
    for i in 0..n {
        let sp = problem.splitting(i);
        let pc = sp.projection(Bundle::Center);
        let pus = Mat3::identity() - pc;
        pc_max = pc_max.max(spectral_norm(&pc));
        pus_max = pus_max.max(spectral_norm(&pus));
        for _ in 0..probes {
            let w = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let len = w.norm();
            if len > 0.0 {
                l = l.max(((pc * w).norm() + (pus * w).norm()) / len);
            }
        }
    }
    let l_sequence = pc_max + pus_max;

    let mut delta = 0.0_f64;
    for i in 0..n {
        if let Some(p) = problem.predecessor(i) {
            delta = delta.max(sys.forward(&orbit.points[p]).dist(&orbit.points[i]));
        }
    }

    // probe pairs live in the ε-ball where the solver operates
    let mut c_delta = 0.0_f64;
    let mut p_inv_norm = 0.0_f64;
    let mut observed = 0.0_f64;
    for _ in 0..probes {
        let a = random_sequence(&mut rng, n).us_part();
        let b = random_sequence(&mut rng, n).us_part();
        let a = scaled(&a, epsilon * rng.random_range(0.0..1.0) / problem.sup_norm(&a).max(f64::MIN_POSITIVE));
        let b = scaled(&b, epsilon * rng.random_range(0.0..1.0) / problem.sup_norm(&b).max(f64::MIN_POSITIVE));
        let gap = problem.sup_norm(&(&a - &b));
        if gap > 0.0 {
            let d = &problem.eta(&a)? - &problem.eta(&b)?;
            c_delta = c_delta.max(problem.sup_norm(&d) / gap);
        }

        let r = random_sequence(&mut rng, n);
        let size = problem.norm1(&r);
        if size > 0.0 {
            p_inv_norm = p_inv_norm.max(problem.norm1(&problem.solve_p(&r)?) / size);
        }

        let w = random_sequence(&mut rng, n);
        let w2 = random_sequence(&mut rng, n);
        let w = scaled(&w, epsilon * rng.random_range(0.0..1.0) / problem.norm1(&w).max(f64::MIN_POSITIVE));
        let w2 = scaled(&w2, epsilon * rng.random_range(0.0..1.0) / problem.norm1(&w2).max(f64::MIN_POSITIVE));
        let gap = problem.norm1(&(&w - &w2));
        if gap > 0.0 {
            let d = &problem.phi(&w)? - &problem.phi(&w2)?;
            observed = observed.max(problem.norm1(&d) / gap);
        }
    }

    let lambda_tilde = problem.lambda_tilde();
    let predicted_radius = if observed < 1.0 {
        l_sequence * delta / ((1.0 - lambda_tilde) * (1.0 - observed))
    } else {
        f64::INFINITY
    };
    let sufficient_bound = l * delta / (1.0 - lambda_tilde);
    Ok(ContractionEstimates {
        l,
        l_sequence,
        lambda_tilde,
        c_delta,
        p_inv_norm,
        observed_contraction: observed,
        delta,
        predicted_radius,
        sufficient_bound,
        sufficient_condition: sufficient_bound < epsilon / 2.0,
        probes,
        iterations: 0,
        final_residual: 0.0,
    })
}
