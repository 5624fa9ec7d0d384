//! Distance between configurations after inverse stereographic projection.

use serde::{Deserialize, Serialize};

use super::{Configuration, Region};
use crate::scalar::Scalar;
use crate::Rational;

/// `(colatitude, longitude)`; the north pole is `(0, 0)`.
pub fn project(x: f64, y: f64) -> (f64, f64) {
    let r = x.hypot(y);
    (2.0 * (1.0 / r).atan(), y.atan2(x))
}

/// Great-circle distance on the unit sphere.
pub fn sphere_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let unit = |(phi, lambda): (f64, f64)| [phi.sin() * lambda.cos(), phi.sin() * lambda.sin(), phi.cos()];
    let (u, v) = (unit(a), unit(b));
    let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt().atan2(dot)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffReport {
    pub distance: f64,
    /// Every center outside `[-R, R]²` projects within this of the north pole.
    pub truncation_bound: f64,
}

fn projected(g: &Configuration, radius: &Rational) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> =
        g.centers_in_region(&Region::square(radius)).iter().map(|c| project(c.0.to_f64(), c.1.to_f64())).collect();
    pts.push((0.0, 0.0));
    pts
}

fn directed(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter().map(|p| b.iter().map(|q| sphere_distance(*p, *q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
}

/// Hausdorff distance of the projected centers within `[-R, R]²`, each set
/// with the north pole adjoined.
pub fn hausdorff_distance(g1: &Configuration, g2: &Configuration, radius: &Rational) -> HausdorffReport {
    let (a, b) = (projected(g1, radius), projected(g2, radius));
    HausdorffReport {
        distance: directed(&a, &b).max(directed(&b, &a)),
        truncation_bound: 2.0 * (1.0 / radius.to_f64()).atan(),
    }
}
