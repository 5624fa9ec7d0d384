//! First-return map of the wind-tree billiard to the tree boundaries.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{Center, Configuration, Region, WindTreeError};
use crate::scalar::Scalar;
use crate::section::{SectionSystem, StopReason, Transition};
use crate::Rational;

/// A direction `(a, b)` of the plane with `a, b ≠ 0` and `|a| ≠ |b|`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindDirection {
    #[serde(with = "crate::scalar::as_rational_string")]
    pub a: Rational,
    #[serde(with = "crate::scalar::as_rational_string")]
    pub b: Rational,
}

/// Index into the class `{(a, b), (-b, -a), (-a, -b), (b, a)}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadrant(u8);

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant(1), Quadrant(2), Quadrant(3), Quadrant(4)];

    pub fn new(index: u8) -> Option<Self> {
        (1..=4).contains(&index).then_some(Quadrant(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Reflection in a side of slope `+1`.
    pub fn across_rising(self) -> Self {
        Quadrant([0, 4, 3, 2, 1][self.0 as usize])
    }

    /// Reflection in a side of slope `-1`.
    pub fn across_falling(self) -> Self {
        Quadrant([0, 2, 1, 4, 3][self.0 as usize])
    }

    pub fn negated(self) -> Self {
        Quadrant([0, 3, 4, 1, 2][self.0 as usize])
    }
}

impl WindDirection {
    pub fn new(a: Rational, b: Rational) -> Result<Self, WindTreeError> {
        if a.is_zero() || b.is_zero() || a.abs() == b.abs() {
            return Err(WindTreeError::SideParallel);
        }
        Ok(WindDirection { a, b })
    }

    /// `(1, slope)`.
    pub fn from_slope(slope: Rational) -> Result<Self, WindTreeError> {
        Self::new(Rational::from_ratio(1, 1), slope)
    }

    pub fn member(&self, q: Quadrant) -> (Rational, Rational) {
        let (a, b) = (&self.a, &self.b);
        match q.0 {
            1 => (a.clone(), b.clone()),
            2 => (-b.clone(), -a.clone()),
            3 => (-a.clone(), -b.clone()),
            _ => (b.clone(), a.clone()),
        }
    }

    /// Which member of the class `v` is, if any.
    pub fn quadrant_of(&self, v: &(Rational, Rational)) -> Option<Quadrant> {
        Quadrant::ALL.into_iter().find(|q| self.member(*q) == *v)
    }
}

/// Sides of a tree, named by their outward normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    NorthEast,
    NorthWest,
    SouthWest,
    SouthEast,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::NorthEast, Side::NorthWest, Side::SouthWest, Side::SouthEast];

    fn normal(self) -> (i64, i64) {
        match self {
            Side::NorthEast => (1, 1),
            Side::NorthWest => (-1, 1),
            Side::SouthWest => (-1, -1),
            Side::SouthEast => (1, -1),
        }
    }

    fn reflect(self, q: Quadrant) -> Quadrant {
        match self {
            Side::NorthEast | Side::SouthWest => q.across_falling(),
            Side::NorthWest | Side::SouthEast => q.across_rising(),
        }
    }
}

fn dot(n: (i64, i64), v: &(Rational, Rational)) -> Rational {
    &v.0 * Rational::from_integer(n.0.into()) + &v.1 * Rational::from_integer(n.1.into())
}

/// A point on a tree boundary with its outgoing direction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundaryState {
    pub center: Center,
    /// Offset along the horizontal diagonal when the outgoing direction is
    /// steeper than the sides, along the vertical one otherwise; in `[0, s]`.
    #[serde(with = "crate::scalar::as_rational_string")]
    pub s_coord: Rational,
    pub quadrant: Quadrant,
}

impl BoundaryState {
    /// The point and side; `None` at a corner or off `[0, s]`.
    pub fn locate(&self, theta: &WindDirection, s: &Rational) -> Option<(Center, Side)> {
        let r = s / Rational::from_ratio(2, 1);
        if self.s_coord.is_negative() || self.s_coord > *s || self.s_coord == r {
            return None;
        }
        let v = theta.member(self.quadrant);
        let (cx, cy) = (&self.center.0, &self.center.1);
        let offset = &self.s_coord - &r;
        let along_x = v.1.abs() > v.0.abs();
        let candidates = match (along_x, offset.is_positive()) {
            (true, true) => [Side::NorthEast, Side::SouthEast],
            (true, false) => [Side::NorthWest, Side::SouthWest],
            (false, true) => [Side::NorthEast, Side::NorthWest],
            (false, false) => [Side::SouthEast, Side::SouthWest],
        };
        let side = candidates.into_iter().find(|sd| dot(sd.normal(), &v).is_positive())?;
        let (nx, ny) = side.normal();
        let rest = &r - offset.abs();
        let p = if along_x {
            Center(cx + &offset, cy + rest * Rational::from_integer(ny.into()))
        } else {
            Center(cx + rest * Rational::from_integer(nx.into()), cy + &offset)
        };
        Some((p, side))
    }

    /// The boundary point is not inside or on another tree. Sides shared
    /// with a neighbour are not part of the phase space.
    pub fn is_exposed(&self, g: &Configuration, theta: &WindDirection) -> bool {
        let Some((p, _)) = self.locate(theta, g.diameter()) else {
            return false;
        };
        let r = g.radius();
        let near = Region::new(Center(&p.0 - &r, &p.1 - &r), Center(&p.0 + &r, &p.1 + &r));
        g.centers_in_region(&near).iter().all(|c| *c == self.center || c.l1(&p) > r)
    }

    /// `|v · n|` for the outgoing direction and the side's normal `(±1, ±1)`:
    /// the transverse width of the beam per unit of `s_coord`. Lengths
    /// weighted by it are preserved by `billiard_step`.
    pub fn flux_density(&self, theta: &WindDirection, s: &Rational) -> Option<Rational> {
        let (_, side) = self.locate(theta, s)?;
        Some(dot(side.normal(), &theta.member(self.quadrant)).abs())
    }

    fn at(center: Center, point: &Center, quadrant: Quadrant, theta: &WindDirection, s: &Rational) -> Self {
        let r = s / Rational::from_ratio(2, 1);
        let v = theta.member(quadrant);
        let s_coord = if v.1.abs() > v.0.abs() {
            &point.0 - (&center.0 - &r)
        } else {
            &point.1 - (&center.1 - &r)
        };
        BoundaryState { center, s_coord, quadrant }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BilliardOutcome {
    Hit {
        state: BoundaryState,
        /// L1 length of the free flight.
        flight_length: Rational,
    },
    CornerStop {
        corner: Center,
    },
    Escape {
        traveled: Rational,
    },
}

impl BilliardOutcome {
    /// Euclidean length of the flight, for `Hit`.
    pub fn euclidean_flight(&self, theta: &WindDirection) -> Option<f64> {
        match self {
            BilliardOutcome::Hit { state, flight_length } => {
                let v = theta.member(state.quadrant);
                let (a, b) = (v.0.to_f64(), v.1.to_f64());
                Some(flight_length.to_f64() * (a * a + b * b).sqrt() / (a.abs() + b.abs()))
            }
            _ => None,
        }
    }
}

/// Earliest entry `t > 0` of `p + t v` into the tree at `c`, and whether the
/// entry point is a corner.
fn entry(p: &Center, v: &(Rational, Rational), c: &Center, r: &Rational) -> Option<(Rational, Side, bool)> {
    let mut best: Option<(Rational, Side, bool)> = None;
    for side in Side::ALL {
        let n = side.normal();
        let nv = dot(n, v);
        if !nv.is_negative() {
            continue;
        }
        // n · (x - c) = r on the side's line
        let rel = (&p.0 - &c.0, &p.1 - &c.1);
        let t = (r - dot(n, &rel)) / nv;
        if !t.is_positive() {
            continue;
        }
        let hx = &rel.0 + &t * &v.0;
        let hy = &rel.1 + &t * &v.1;
        if hx.abs() + hy.abs() != *r {
            continue;
        }
        let corner = hx.is_zero() || hy.is_zero();
        if best.as_ref().is_none_or(|(bt, _, _)| t < *bt) {
            best = Some((t, side, corner));
        }
    }
    best
}

/// Marches the ray in boxes of side `4 s`; `r_max` bounds the L1 length.
pub fn billiard_step(
    g: &Configuration,
    theta: &WindDirection,
    b: &BoundaryState,
    r_max: &Rational,
) -> Result<BilliardOutcome, WindTreeError> {
    let s = g.diameter();
    let r = g.radius();
    let (p, _) = b.locate(theta, s).ok_or(WindTreeError::BadState)?;
    if !b.is_exposed(g, theta) {
        return Err(WindTreeError::BadState);
    }
    let v = theta.member(b.quadrant);
    let speed = v.0.abs() + v.1.abs();
    let chunk = s * Rational::from_ratio(4, 1) / &speed;
    let mut t0 = Rational::zero();
    loop {
        let t1 = &t0 + &chunk;
        let a = (&p.0 + &t0 * &v.0, &p.1 + &t0 * &v.1);
        let z = (&p.0 + &t1 * &v.0, &p.1 + &t1 * &v.1);
        let region = Region::new(
            Center(a.0.clone().min(z.0.clone()) - &r, a.1.clone().min(z.1.clone()) - &r),
            Center(a.0.max(z.0) + &r, a.1.max(z.1) + &r),
        );
        let mut best: Option<(Rational, Center, Side, bool)> = None;
        for c in g.centers_in_region(&region) {
            if c == b.center {
                continue;
            }
            if let Some((t, side, corner)) = entry(&p, &v, &c, &r) {
                if best.as_ref().is_none_or(|(bt, ..)| t < *bt) {
                    best = Some((t, c, side, corner));
                }
            }
        }
        if let Some((t, c, side, corner)) = best {
            if t <= t1 {
                let hit = Center(&p.0 + &t * &v.0, &p.1 + &t * &v.1);
                if corner {
                    return Ok(BilliardOutcome::CornerStop { corner: hit });
                }
                let q = side.reflect(b.quadrant);
                return Ok(BilliardOutcome::Hit {
                    state: BoundaryState::at(c, &hit, q, theta, s),
                    flight_length: t * speed,
                });
            }
        }
        t0 = t1;
        if &t0 * &speed > *r_max {
            return Ok(BilliardOutcome::Escape { traveled: t0 * speed });
        }
    }
}

/// Same point, reversed and reflected: the state whose flight retraces the
/// one that arrived here.
pub fn reverse_state(b: &BoundaryState, theta: &WindDirection, s: &Rational) -> Result<BoundaryState, WindTreeError> {
    let (p, side) = b.locate(theta, s).ok_or(WindTreeError::BadState)?;
    let q = side.reflect(b.quadrant.negated());
    Ok(BoundaryState::at(b.center.clone(), &p, q, theta, s))
}

/// The billiard map as a section system: components are `(tree, quadrant)`
/// pairs, each an interval of length `s`.
#[derive(Clone, Debug)]
pub struct WindTreeSystem {
    pub table: Configuration,
    pub theta: WindDirection,
    pub r_max: Rational,
}

impl WindTreeSystem {
    /// Escape radius `10^4 s`.
    pub fn new(table: Configuration, theta: WindDirection) -> Self {
        let r_max = table.diameter() * Rational::from_ratio(10_000, 1);
        WindTreeSystem { table, theta, r_max }
    }

    fn transition(&self, b: &BoundaryState) -> Transition<BoundaryState, Quadrant> {
        match billiard_step(&self.table, &self.theta, b, &self.r_max) {
            Ok(BilliardOutcome::Hit { state, .. }) => {
                let q = state.quadrant;
                Transition::Moved { to: state, symbol: q }
            }
            Ok(BilliardOutcome::CornerStop { .. }) | Err(_) => Transition::Stopped(StopReason::Corner),
            Ok(BilliardOutcome::Escape { .. }) => Transition::Stopped(StopReason::Escaped),
        }
    }
}

impl SectionSystem for WindTreeSystem {
    type Component = (Center, Quadrant);
    type Coord = Rational;
    type Point = BoundaryState;
    type Symbol = Quadrant;

    fn forward(&self, p: &BoundaryState) -> Transition<BoundaryState, Quadrant> {
        self.transition(p)
    }

    fn backward(&self, p: &BoundaryState) -> Transition<BoundaryState, Quadrant> {
        let s = self.table.diameter();
        let Ok(rev) = reverse_state(p, &self.theta, s) else {
            return Transition::Stopped(StopReason::Corner);
        };
        match self.transition(&rev) {
            Transition::Moved { to, .. } => match reverse_state(&to, &self.theta, s) {
                Ok(back) => {
                    let q = back.quadrant;
                    Transition::Moved { to: back, symbol: q }
                }
                Err(_) => Transition::Stopped(StopReason::Corner),
            },
            stop => stop,
        }
    }

    fn component(&self, p: &BoundaryState) -> (Center, Quadrant) {
        (p.center.clone(), p.quadrant)
    }

    fn coordinate(&self, p: &BoundaryState) -> Rational {
        p.s_coord.clone()
    }

    fn point(&self, c: &(Center, Quadrant), x: Rational) -> Option<BoundaryState> {
        let b = BoundaryState { center: c.0.clone(), s_coord: x, quadrant: c.1 };
        b.locate(&self.theta, self.table.diameter()).map(|_| b)
    }

    fn measure(&self, _c: &(Center, Quadrant)) -> Rational {
        self.table.diameter().clone()
    }

    fn is_circle(&self, _c: &(Center, Quadrant)) -> bool {
        false
    }

    /// Not enumerated for wind-tree tables.
    fn singular_points(&self, _c: &(Center, Quadrant)) -> Option<Vec<Rational>> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windtree::ringed_config;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn class_closure() {
        let theta = WindDirection::new(q(3, 1), q(1, 1)).unwrap();
        for quad in Quadrant::ALL {
            let (a, b) = theta.member(quad);
            assert_eq!(theta.member(quad.across_rising()), (b.clone(), a.clone()));
            assert_eq!(theta.member(quad.across_falling()), (-b.clone(), -a.clone()));
            assert_eq!(theta.member(quad.negated()), (-a, -b));
        }
        assert!(WindDirection::new(q(1, 1), q(-1, 1)).is_err());
    }

    #[test]
    fn shared_vertex_is_a_corner() {
        let s = q(1, 1);
        let g = Configuration::explicit(
            s.clone(),
            vec![Center(q(0, 1), q(0, 1)), Center(q(1, 2), q(1, 2)), Center(q(4, 1), q(-3, 1))],
        )
        .unwrap();
        // the two upper trees share the side from (1/2, 0) to (0, 1/2)
        let theta = WindDirection::new(q(-13, 1), q(11, 1)).unwrap();
        let start = Center(q(15, 4), q(-11, 4));
        let st = BoundaryState::at(Center(q(4, 1), q(-3, 1)), &start, Quadrant(1), &theta, &s);
        assert_eq!(st.locate(&theta, &s).unwrap().0, start);
        match billiard_step(&g, &theta, &st, &q(100, 1)).unwrap() {
            BilliardOutcome::CornerStop { corner } => assert_eq!(corner, Center(q(1, 2), q(0, 1))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn escape_on_empty_table() {
        let s = q(1, 1);
        let g = Configuration::explicit(s.clone(), vec![Center(q(0, 1), q(0, 1))]).unwrap();
        let theta = WindDirection::new(q(1, 1), q(2, 1)).unwrap();
        let st = BoundaryState { center: Center(q(0, 1), q(0, 1)), s_coord: q(3, 4), quadrant: Quadrant(1) };
        assert!(matches!(billiard_step(&g, &theta, &st, &q(50, 1)).unwrap(), BilliardOutcome::Escape { .. }));
    }

    #[test]
    fn reversal_retraces() {
        let s = q(1, 1);
        let g = ringed_config(2, s.clone()).unwrap();
        let theta = WindDirection::new(q(1, 1), q(7, 3)).unwrap();
        let mut b = BoundaryState { center: Center(q(1, 1), q(1, 1)), s_coord: q(1, 7), quadrant: Quadrant(3) };
        b.locate(&theta, &s).unwrap();
        for _ in 0..200 {
            let BilliardOutcome::Hit { state, .. } = billiard_step(&g, &theta, &b, &q(1000, 1)).unwrap() else {
                panic!()
            };
            let back = reverse_state(&state, &theta, &s).unwrap();
            let BilliardOutcome::Hit { state: again, .. } = billiard_step(&g, &theta, &back, &q(1000, 1)).unwrap()
            else {
                panic!()
            };
            assert_eq!(again, reverse_state(&b, &theta, &s).unwrap());
            b = state;
        }
    }
}
