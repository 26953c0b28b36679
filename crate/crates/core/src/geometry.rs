//! Flat-torus geometry.
//!
//! Points live in `[0,1)^D`. The metric is the Euclidean metric of the
//! covering space, so `exp_x` and `exp_x^{-1}` are translations by the
//! minimal lattice representative and are exact below the injectivity
//! radius `rho0 = 1/2`.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeTuple, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by chart operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("tangent vector norm {norm} is not below the chart radius {radius}")]
    NormTooLarge { norm: f64, radius: f64 },
    #[error("points are {dist} apart, not below the chart radius {radius}")]
    PointsTooFar { dist: f64, radius: f64 },
    #[error("tangent vector is based at a different point")]
    BaseMismatch,
    #[error("invalid chart radii: rho0={rho0}, rho={rho} (need 0 < rho < rho0/2, rho0 <= 1/2)")]
    InvalidChart { rho0: f64, rho: f64 },
}

/// Reduce a real number into `[0, 1)`.
#[inline]
pub fn reduce_unit(c: f64) -> f64 {
    let r = c.rem_euclid(1.0);
    // rem_euclid rounds tiny negative inputs up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduce a coordinate difference into `[-1/2, 1/2]`.
#[inline]
pub fn reduce_centered(c: f64) -> f64 {
    let r = c - c.round();
    if r < -0.5 {
        r + 1.0
    } else if r > 0.5 {
        r - 1.0
    } else {
        r
    }
}

pub(crate) fn norm<const D: usize>(v: &[f64; D]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// A point of the flat torus `T^D`, every coordinate in `[0, 1)`.
#[derive(Clone, Copy, PartialEq)]
pub struct TorusPoint<const D: usize> {
    coords: [f64; D],
}

/// Points of `T^3`, the phase space of the built-in systems.
pub type Point3 = TorusPoint<3>;

impl<const D: usize> TorusPoint<D> {
    /// Reduce raw coordinates mod 1.
    pub fn wrap(raw: [f64; D]) -> Result<Self, GeometryError> {
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(GeometryError::NonFinite { index, value });
            }
        }
        Ok(Self::wrap_unchecked(raw))
    }

    pub(crate) fn wrap_unchecked(raw: [f64; D]) -> Self {
        Self {
            coords: raw.map(reduce_unit),
        }
    }

    pub fn origin() -> Self {
        Self { coords: [0.0; D] }
    }

    pub fn coords(&self) -> &[f64; D] {
        &self.coords
    }

    /// Translate by `delta` in the covering space and reduce.
    pub fn translate(&self, delta: &[f64; D]) -> Self {
        let mut raw = self.coords;
        for (c, d) in raw.iter_mut().zip(delta) {
            *c += d;
        }
        Self::wrap_unchecked(raw)
    }

    /// Minimal lattice representative of `other - self`.
    pub fn displacement_to(&self, other: &Self) -> [f64; D] {
        std::array::from_fn(|i| reduce_centered(other.coords[i] - self.coords[i]))
    }

    pub fn dist(&self, other: &Self) -> f64 {
        norm(&self.displacement_to(other))
    }
}

/// Torus distance.
pub fn dist<const D: usize>(x: &TorusPoint<D>, y: &TorusPoint<D>) -> f64 {
    x.dist(y)
}

impl<const D: usize> fmt::Debug for TorusPoint<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TorusPoint{:?}", self.coords)
    }
}

impl<const D: usize> Serialize for TorusPoint<D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(D)?;
        for c in &self.coords {
            t.serialize_element(c)?;
        }
        t.end()
    }
}

impl<'de, const D: usize> Deserialize<'de> for TorusPoint<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        let arr: [f64; D] = raw
            .try_into()
            .map_err(|v: Vec<f64>| de::Error::invalid_length(v.len(), &"a point of the torus"))?;
        TorusPoint::wrap(arr).map_err(de::Error::custom)
    }
}

/// A chart-space vector at a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector<const D: usize> {
    pub base: TorusPoint<D>,
    pub components: [f64; D],
}

impl<const D: usize> TangentVector<D> {
    pub fn new(base: TorusPoint<D>, components: [f64; D]) -> Self {
        Self { base, components }
    }

    pub fn zero(base: TorusPoint<D>) -> Self {
        Self {
            base,
            components: [0.0; D],
        }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

/// Chart radii: `rho0` bounds where `exp` is injective, `rho` is the
/// working radius of the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub rho0: f64,
    pub rho: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            rho0: 0.5,
            rho: 0.05,
        }
    }
}

impl ChartConfig {
    pub fn new(rho0: f64, rho: f64) -> Result<Self, GeometryError> {
        let cfg = Self { rho0, rho };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.rho0.is_finite()
            && self.rho.is_finite()
            && self.rho0 > 0.0
            && self.rho0 <= 0.5
            && self.rho > 0.0
            && self.rho < self.rho0 / 2.0;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidChart {
                rho0: self.rho0,
                rho: self.rho,
            })
        }
    }

    /// `exp_x(v)`.
    pub fn exp<const D: usize>(
        &self,
        x: &TorusPoint<D>,
        v: &TangentVector<D>,
    ) -> Result<TorusPoint<D>, GeometryError> {
        if v.base != *x {
            return Err(GeometryError::BaseMismatch);
        }
        self.exp_components(x, &v.components)
    }

    /// `exp_x` on raw chart components.
    pub fn exp_components<const D: usize>(
        &self,
        x: &TorusPoint<D>,
        v: &[f64; D],
    ) -> Result<TorusPoint<D>, GeometryError> {
        let n = norm(v);
        if !(n < self.rho0) {
            return Err(GeometryError::NormTooLarge {
                norm: n,
                radius: self.rho0,
            });
        }
        Ok(x.translate(v))
    }

    /// `exp_x^{-1}(y)`.
    pub fn log<const D: usize>(
        &self,
        x: &TorusPoint<D>,
        y: &TorusPoint<D>,
    ) -> Result<TangentVector<D>, GeometryError> {
        Ok(TangentVector::new(*x, self.log_components(x, y)?))
    }

    pub fn log_components<const D: usize>(
        &self,
        x: &TorusPoint<D>,
        y: &TorusPoint<D>,
    ) -> Result<[f64; D], GeometryError> {
        let d = x.displacement_to(y);
        let n = norm(&d);
        if !(n < self.rho0) {
            return Err(GeometryError::PointsTooFar {
                dist: n,
                radius: self.rho0,
            });
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: [f64; 3]) -> Point3 {
        Point3::wrap(c).unwrap()
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(p([1.5, -0.25, 0.0]).coords(), &[0.5, 0.75, 0.0]);
        assert_eq!(p([0.0, 0.0, 0.0]).coords(), &[0.0, 0.0, 0.0]);
        assert_eq!(p([2.0, 3.0, -1.0]).coords(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn wrap_tiny_negative_stays_in_range() {
        let q = p([-1e-18, -0.0, 1.0 - 1e-17]);
        assert!(q.coords().iter().all(|&c| (0.0..1.0).contains(&c)));
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(matches!(
            Point3::wrap([0.0, f64::NAN, 0.0]),
            Err(GeometryError::NonFinite { index: 1, .. })
        ));
        assert!(Point3::wrap([f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn dist_examples() {
        assert!((dist(&p([0.9, 0.0, 0.0]), &p([0.1, 0.0, 0.0])) - 0.2).abs() < 1e-15);
        let x = p([0.3, 0.7, 0.2]);
        assert_eq!(dist(&x, &x), 0.0);
        let d = dist(&p([0.25, 0.25, 0.0]), &p([0.5, 0.5, 0.0]));
        assert!((d - 0.353_553_390_593_273_8).abs() < 1e-15);
    }

    #[test]
    fn exp_examples() {
        let chart = ChartConfig::default();
        let x = p([0.95, 0.5, 0.5]);
        let y = chart
            .exp(&x, &TangentVector::new(x, [0.1, 0.0, 0.0]))
            .unwrap();
        assert!(dist(&y, &p([0.05, 0.5, 0.5])) < 1e-15);
        assert_eq!(chart.exp(&x, &TangentVector::zero(x)).unwrap(), x);

        let o = Point3::origin();
        // norm 0.5 sits on the chart boundary: the translation is fine,
        // the chart map refuses it
        let z = o.translate(&[0.3, 0.4, 0.0]);
        assert!(dist(&z, &p([0.3, 0.4, 0.0])) < 1e-15);
        assert!((dist(&o, &z) - 0.5).abs() < 1e-15);
        assert!(chart.exp(&o, &TangentVector::new(o, [0.3, 0.4, 0.0])).is_err());
    }

    #[test]
    fn exp_errors() {
        let chart = ChartConfig::default();
        let x = p([0.1, 0.1, 0.1]);
        let big = TangentVector::new(x, [0.4, 0.4, 0.0]);
        assert!(matches!(
            chart.exp(&x, &big),
            Err(GeometryError::NormTooLarge { .. })
        ));
        let other = TangentVector::zero(p([0.2, 0.1, 0.1]));
        assert_eq!(chart.exp(&x, &other), Err(GeometryError::BaseMismatch));
    }

    #[test]
    fn log_examples() {
        let chart = ChartConfig::default();
        let v = chart.log(&p([0.05, 0.0, 0.0]), &p([0.95, 0.0, 0.0])).unwrap();
        assert!((v.components[0] + 0.1).abs() < 1e-15);
        assert_eq!(&v.components[1..], &[0.0, 0.0]);
        let x = p([0.4, 0.6, 0.8]);
        assert_eq!(chart.log(&x, &x).unwrap().components, [0.0; 3]);
        assert!(matches!(
            chart.log(&p([0.0, 0.0, 0.0]), &p([0.5, 0.5, 0.0])),
            Err(GeometryError::PointsTooFar { .. })
        ));
    }

    #[test]
    fn chart_validation() {
        assert!(ChartConfig::new(0.5, 0.05).is_ok());
        assert!(ChartConfig::new(0.5, 0.25).is_err());
        assert!(ChartConfig::new(0.6, 0.1).is_err());
        assert!(ChartConfig::new(0.5, 0.0).is_err());
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let x = p([0.1, 0.2 + 1e-17, 0.123_456_789_012_345_67]);
        let s = serde_json::to_string(&x).unwrap();
        let back: Point3 = serde_json::from_str(&s).unwrap();
        assert_eq!(x, back);
        assert!(serde_json::from_str::<Point3>("[0.1, 0.2]").is_err());
    }
}
