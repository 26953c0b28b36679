#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SymmetricEigen, Vector3};
use quasishadow::geometry::Point3;
use quasishadow::systems::{
    CatCircle, HyperbolicityRates, Mat3, PartiallyHyperbolicSystem, Splitting, SystemError, Vec3,
};

pub type V3 = Vector3<f64>;

/// Eigenbasis of the cat matrix computed from scratch: columns
/// `(stable, fiber, unstable)` and the eigenvalues `(λ, μ)`.
pub fn cat_basis() -> (Matrix3<f64>, f64, f64) {
    let eig = SymmetricEigen::new(Matrix2::new(2.0, 1.0, 1.0, 1.0));
    let (i_s, i_u) = if eig.eigenvalues[0] < eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let es = eig.eigenvectors.column(i_s);
    let eu = eig.eigenvectors.column(i_u);
    let basis = Matrix3::new(es[0], 0.0, eu[0], es[1], 0.0, eu[1], 0.0, 1.0, 0.0);
    (basis, eig.eigenvalues[i_s], eig.eigenvalues[i_u])
}

pub fn cat_matrix() -> Matrix3<f64> {
    Matrix3::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0)
}

fn min_rep(d: f64) -> f64 {
    d - d.round()
}

/// Lifted map of the linear skew product, reduced mod 1.
pub fn cat_forward(x: &Point3, alpha: f64) -> [f64; 3] {
    let c = x.coords();
    [
        (2.0 * c[0] + c[1]).rem_euclid(1.0),
        (c[0] + c[1]).rem_euclid(1.0),
        (c[2] + alpha).rem_euclid(1.0),
    ]
}

/// Minimal displacement from `a` to `b` on the torus.
pub fn displacement(a: &[f64; 3], b: &[f64; 3]) -> V3 {
    V3::new(min_rep(b[0] - a[0]), min_rep(b[1] - a[1]), min_rep(b[2] - a[2]))
}

/// The step defects `d_k = (f(x_{k-1}) - x_k)` of the linear system,
/// `d_0 = 0`.
pub fn linear_defects(points: &[Point3], alpha: f64) -> Vec<V3> {
    let mut d = vec![V3::zeros(); points.len()];
    for k in 1..points.len() {
        d[k] = displacement(points[k].coords(), &cat_forward(&points[k - 1], alpha));
    }
    d
}

/// Dense solve of the truncated block system
///
/// ```text
/// s_k e_s + a_k e_u - c_k e_c - M (s_{k-1} e_s + a_{k-1} e_u) = r_k,  k >= 1
/// s_0 = r_0^s,  -c_0 = r_0^c,  a_{n-1} = 0
/// ```
///
/// in standard coordinates. Returns `(s_k, c_k, a_k)` per index.
pub fn dense_block_solve(rhs: &[V3]) -> Vec<V3> {
    let n = rhs.len();
    let (basis, _, _) = cat_basis();
    let m = cat_matrix();
    let es = basis.column(0).into_owned();
    let ec = basis.column(1).into_owned();
    let eu = basis.column(2).into_owned();
    let mes = m * es;
    let meu = m * eu;
    let dim = 3 * n;
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    let col = |k: usize, j: usize| 3 * k + j;
    let r0 = basis.try_inverse().unwrap() * rhs[0];
    mat[(0, col(0, 0))] = 1.0;
    b[0] = r0[0];
    mat[(1, col(0, 1))] = -1.0;
    b[1] = r0[1];
    mat[(2, col(n - 1, 2))] = 1.0;
    b[2] = 0.0;
    for k in 1..n {
        for row in 0..3 {
            let r = 3 * k + row;
            mat[(r, col(k, 0))] = es[row];
            mat[(r, col(k, 2))] = eu[row];
            mat[(r, col(k, 1))] = -ec[row];
            mat[(r, col(k - 1, 0))] = -mes[row];
            mat[(r, col(k - 1, 2))] = -meu[row];
            b[r] = rhs[k][row];
        }
    }
    let sol = mat.lu().solve(&b).expect("dense system is regular");
    (0..n).map(|k| V3::new(sol[3 * k], sol[3 * k + 1], sol[3 * k + 2])).collect()
}

/// Tracing displacements `v_k` (standard coordinates) and center values
/// `c_k` of the linear system from the dense solve.
pub fn dense_linear_shadow(points: &[Point3], alpha: f64) -> (Vec<V3>, Vec<f64>) {
    let (basis, _, _) = cat_basis();
    let d = linear_defects(points, alpha);
    let sol = dense_block_solve(&d);
    let v = sol
        .iter()
        .map(|w| basis.column(0) * w[0] + basis.column(2) * w[2])
        .collect();
    let c = sol.iter().map(|w| w[1]).collect();
    (v, c)
}

/// `A^n` over the integers.
pub fn integer_power(n: usize) -> [[i128; 2]; 2] {
    let mut acc = [[1i128, 0], [0, 1]];
    for _ in 0..n {
        acc = [
            [2 * acc[0][0] + acc[1][0], 2 * acc[0][1] + acc[1][1]],
            [acc[0][0] + acc[1][0], acc[0][1] + acc[1][1]],
        ];
    }
    acc
}

/// The periodic point of the cat map near `b` of period `n`: solves
/// `(A^n - I) p = m` with the integer vector `m` nearest to
/// `(A^n - I) b`.
pub fn periodic_base_point(b: [f64; 2], n: usize) -> [f64; 2] {
    let a = integer_power(n);
    let k = [[a[0][0] - 1, a[0][1]], [a[1][0], a[1][1] - 1]];
    let kb = [
        k[0][0] as f64 * b[0] + k[0][1] as f64 * b[1],
        k[1][0] as f64 * b[0] + k[1][1] as f64 * b[1],
    ];
    let m = [kb[0].round(), kb[1].round()];
    let det = (k[0][0] * k[1][1] - k[0][1] * k[1][0]) as f64;
    let p = [
        (k[1][1] as f64 * m[0] - k[0][1] as f64 * m[1]) / det,
        (-(k[1][0] as f64) * m[0] + k[0][0] as f64 * m[1]) / det,
    ];
    [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)]
}

/// Smallest `n <= max_n` with `|A^n b - b|` below `threshold` on the base
/// torus, by direct scan of the base orbit.
pub fn base_return_scan(b: [f64; 2], max_n: usize, threshold: f64) -> Option<usize> {
    let mut z = b;
    for n in 1..=max_n {
        z = [(2.0 * z[0] + z[1]).rem_euclid(1.0), (z[0] + z[1]).rem_euclid(1.0)];
        let d0 = min_rep(z[0] - b[0]);
        let d1 = min_rep(z[1] - b[1]);
        if d0.hypot(d1) < threshold {
            return Some(n);
        }
    }
    None
}

/// `g = f ∘ (b ↦ b + s)`: a perturbation of `f` with a hyperbolic
/// component, unlike shifts of `alpha` or `kappa`, which only move points
/// along the fibers.
pub struct BaseShifted {
    pub inner: CatCircle,
    pub shift: [f64; 2],
}

impl BaseShifted {
    fn shifted(&self, x: &Point3, sign: f64) -> Point3 {
        x.translate(&[sign * self.shift[0], sign * self.shift[1], 0.0])
    }
}

impl PartiallyHyperbolicSystem for BaseShifted {
    fn forward(&self, x: &Point3) -> Point3 {
        self.inner.forward(&self.shifted(x, 1.0))
    }

    fn inverse(&self, x: &Point3) -> Point3 {
        self.shifted(&self.inner.inverse(x), -1.0)
    }

    fn differential(&self, x: &Point3) -> Mat3 {
        self.inner.differential(&self.shifted(x, 1.0))
    }

    fn rates(&self) -> HyperbolicityRates {
        self.inner.rates()
    }

    fn splitting_at(&self, x: &Point3) -> Result<Splitting, SystemError> {
        self.inner.splitting_at(&self.shifted(x, 1.0))
    }

    fn center_field(&self, x: &Point3) -> Vec3 {
        self.inner.center_field(x)
    }

    fn center_flow(&self, x: &Point3, t: f64) -> Point3 {
        self.inner.center_flow(x, t)
    }

    fn leaf_distance(&self, a: &Point3, b: &Point3) -> f64 {
        self.inner.leaf_distance(a, b)
    }

    fn nearest_on_leaf(&self, leaf: &Point3, target: &Point3) -> Point3 {
        self.inner.nearest_on_leaf(leaf, target)
    }
}
