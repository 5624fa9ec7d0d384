//! Piecewise isometries on countable unions of circles, and what can be
//! computed for any of them: orbits, interval pushforward, box escape
//! measures and the conservativity certificate.

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::hash::Hash;
use std::io::Write;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::staircase::{SectionPoint, Slit, Staircase, StepOutcome, VerticalSign};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SectionError {
    #[error("interval [{left}, {right}) is not inside [0, {measure})")]
    BadInterval { left: String, right: String, measure: String },
    #[error("the singular set of this system is not available")]
    SingularSetUnavailable,
    #[error("box list is empty")]
    EmptyBoxes,
    #[error("box {0} does not strictly contain box {1}")]
    NotIncreasing(usize, usize),
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("piece at {0} is not an isometry")]
    NotIsometric(String),
}

/// Why a step could not be taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopReason {
    Singular,
    Corner,
    Escaped,
}

/// One step of a section system.
#[derive(Clone, Debug, PartialEq)]
pub enum Transition<P, Sym> {
    Moved { to: P, symbol: Sym },
    Stopped(StopReason),
}

impl<P, Sym> Transition<P, Sym> {
    pub fn moved(self) -> Option<(P, Sym)> {
        match self {
            Transition::Moved { to, symbol } => Some((to, symbol)),
            Transition::Stopped(_) => None,
        }
    }
}

/// A first-return map on a disjoint union of components, each an interval
/// (or circle) of finite length carrying the length measure.
pub trait SectionSystem: Sync {
    type Component: Clone + Ord + Hash + Debug + Send + Sync;
    type Coord: Scalar;
    type Point: Clone + Debug + PartialEq + Send + Sync;
    type Symbol: Copy + Debug + PartialEq + Eq + Hash + Send + Sync;

    fn forward(&self, p: &Self::Point) -> Transition<Self::Point, Self::Symbol>;

    fn backward(&self, p: &Self::Point) -> Transition<Self::Point, Self::Symbol>;

    fn component(&self, p: &Self::Point) -> Self::Component;

    fn coordinate(&self, p: &Self::Point) -> Self::Coord;

    fn coordinate_f64(&self, p: &Self::Point) -> f64 {
        self.coordinate(p).to_f64()
    }

    /// `None` when `x` is not a valid coordinate on `c`.
    fn point(&self, c: &Self::Component, x: Self::Coord) -> Option<Self::Point>;

    /// Length of the component.
    fn measure(&self, c: &Self::Component) -> Self::Coord;

    /// Whether the component is a circle (coordinates wrap at `measure`).
    fn is_circle(&self, c: &Self::Component) -> bool;

    /// Coordinates on `c` at which `forward` is singular; `None` when the
    /// system cannot list them.
    fn singular_points(&self, c: &Self::Component) -> Option<Vec<Self::Coord>>;

    /// `Up` applies the system's own map, `Down` its inverse. The sign is
    /// relative: on a system built for downward flow, `Up` still means `forward`.
    fn step(&self, p: &Self::Point, sign: VerticalSign) -> Transition<Self::Point, Self::Symbol> {
        match sign {
            VerticalSign::Up => self.forward(p),
            VerticalSign::Down => self.backward(p),
        }
    }
}

impl<S: Scalar> SectionSystem for Staircase<S> {
    type Component = i64;
    type Coord = S;
    type Point = SectionPoint<S>;
    type Symbol = Slit;

    fn forward(&self, p: &SectionPoint<S>) -> Transition<SectionPoint<S>, Slit> {
        lift(self.step(p))
    }

    fn backward(&self, p: &SectionPoint<S>) -> Transition<SectionPoint<S>, Slit> {
        lift(self.inverse_step(p))
    }

    fn component(&self, p: &SectionPoint<S>) -> i64 {
        p.level
    }

    fn coordinate(&self, p: &SectionPoint<S>) -> S {
        p.x.clone()
    }

    fn point(&self, c: &i64, x: S) -> Option<SectionPoint<S>> {
        SectionPoint::new(*c, x).ok()
    }

    fn measure(&self, _: &i64) -> S {
        S::two()
    }

    fn is_circle(&self, _: &i64) -> bool {
        true
    }

    fn singular_points(&self, c: &i64) -> Option<Vec<S>> {
        let mut xs: Vec<S> = self.singular_points(*c).into_iter().map(|(_, x)| x).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        xs.dedup();
        Some(xs)
    }
}

fn lift<S>(out: StepOutcome<S>) -> Transition<SectionPoint<S>, Slit> {
    match out {
        StepOutcome::Moved { to, slit } => Transition::Moved { to, symbol: slit },
        StepOutcome::SingularHit { .. } => Transition::Stopped(StopReason::Singular),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Budget,
    Stopped(StopReason),
}

/// An orbit segment: `steps[i]` is the point reached after `i + 1` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRecord<P, Sym> {
    pub start: P,
    pub steps: Vec<(P, Sym)>,
    pub termination: Termination,
}

impl<P: Clone, Sym: Copy> OrbitRecord<P, Sym> {
    pub fn points(&self) -> impl Iterator<Item = &P> {
        std::iter::once(&self.start).chain(self.steps.iter().map(|(p, _)| p))
    }

    pub fn symbols(&self) -> Vec<Sym> {
        self.steps.iter().map(|(_, s)| *s).collect()
    }

    pub fn last(&self) -> &P {
        self.steps.last().map(|(p, _)| p).unwrap_or(&self.start)
    }
}

/// Iterates `budget` steps, stopping early only when the map is undefined.
pub fn orbit<Sys: SectionSystem>(
    sys: &Sys,
    start: &Sys::Point,
    budget: usize,
    sign: VerticalSign,
) -> OrbitRecord<Sys::Point, Sys::Symbol> {
    let mut steps = Vec::with_capacity(budget.min(1 << 20));
    let mut current = start.clone();
    for _ in 0..budget {
        match sys.step(&current, sign) {
            Transition::Moved { to, symbol } => {
                steps.push((to.clone(), symbol));
                current = to;
            }
            Transition::Stopped(reason) => {
                return OrbitRecord { start: start.clone(), steps, termination: Termination::Stopped(reason) };
            }
        }
    }
    OrbitRecord { start: start.clone(), steps, termination: Termination::Budget }
}

/// Writes `step,level,x_num,x_den,slit_symbol`; row 0 is the start point.
pub fn write_orbit_csv<S: Scalar, W: Write>(
    record: &OrbitRecord<SectionPoint<S>, Slit>,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "step,level,x_num,x_den,slit_symbol")?;
    let (n, d) = scalar::num_den(&record.start.x);
    writeln!(out, "0,{},{},{},", record.start.level, n, d)?;
    for (i, (p, slit)) in record.steps.iter().enumerate() {
        let (n, d) = scalar::num_den(&p.x);
        writeln!(out, "{},{},{},{},{}", i + 1, p.level, n, d, slit.symbol())?;
    }
    Ok(())
}

/// An arc `[left, right)` on one component, `left < right`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Arc<C, X> {
    pub component: C,
    pub left: X,
    pub right: X,
}

impl<C, X: Scalar> Arc<C, X> {
    pub fn length(&self) -> X {
        self.right.clone() - self.left.clone()
    }
}

type SystemArc<Sys> = Arc<<Sys as SectionSystem>::Component, <Sys as SectionSystem>::Coord>;

/// Image of `[left, right)` on `component` under one forward step, as a list
/// of arcs. The interval is cut at singular points; each piece is moved by
/// the local isometry read off from two interior points.
pub fn pushforward_interval<Sys: SectionSystem>(
    sys: &Sys,
    component: &Sys::Component,
    left: Sys::Coord,
    right: Sys::Coord,
) -> Result<Vec<SystemArc<Sys>>, SectionError> {
    let measure = sys.measure(component);
    let zero = Sys::Coord::zero();
    if left < zero || right > measure || left >= right {
        return Err(SectionError::BadInterval {
            left: format!("{left}"),
            right: format!("{right}"),
            measure: format!("{measure}"),
        });
    }
    let singular = sys.singular_points(component).ok_or(SectionError::SingularSetUnavailable)?;
    let mut cuts = vec![left.clone()];
    cuts.extend(singular.into_iter().filter(|x| *x > left && *x < right));
    cuts.push(right);
    let mut images = Vec::with_capacity(cuts.len());
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0].clone(), pair[1].clone());
        let mid = (a.clone() + b.clone()).half();
        let probe = (a.clone() + mid.clone()).half();
        let (to_mid, to_probe) = match (
            sys.point(component, mid.clone()).map(|p| sys.forward(&p)),
            sys.point(component, probe.clone()).map(|p| sys.forward(&p)),
        ) {
            (Some(Transition::Moved { to: m, .. }), Some(Transition::Moved { to: q, .. })) => (m, q),
            _ => return Err(SectionError::NotIsometric(format!("{mid}"))),
        };
        let target = sys.component(&to_mid);
        if sys.component(&to_probe) != target {
            return Err(SectionError::NotIsometric(format!("{mid}")));
        }
        let image_measure = sys.measure(&target);
        let xm = sys.coordinate(&to_mid);
        let mut dq = sys.coordinate(&to_probe) - xm.clone();
        let dx = probe - mid.clone();
        if sys.is_circle(&target) {
            // undo a wrap between the two probes
            let half = image_measure.half();
            if dq > half {
                dq = dq - image_measure.clone();
            } else if dq < -half.clone() {
                dq = dq + image_measure.clone();
            }
        }
        let orientation = if dq == dx {
            Sys::Coord::one()
        } else if dq == -dx.clone() {
            -Sys::Coord::one()
        } else if !Sys::Coord::EXACT {
            if dq.clone() * dx.clone() > zero { Sys::Coord::one() } else { -Sys::Coord::one() }
        } else {
            return Err(SectionError::NotIsometric(format!("{mid}")));
        };
        let ia = xm.clone() + orientation.clone() * (a - mid.clone());
        let ib = xm + orientation.clone() * (b - mid);
        let (lo, hi) = if orientation > zero { (ia, ib) } else { (ib, ia) };
        let circle = sys.is_circle(&target);
        push_arc(&mut images, target, lo, hi, &image_measure, circle);
    }
    Ok(images)
}

fn push_arc<C, X: Scalar>(out: &mut Vec<Arc<C, X>>, component: C, lo: X, hi: X, measure: &X, circle: bool)
where
    C: Clone,
{
    if !circle {
        out.push(Arc { component, left: lo, right: hi });
        return;
    }
    let zero = X::zero();
    if lo < zero {
        out.push(Arc { component: component.clone(), left: lo + measure.clone(), right: measure.clone() });
        out.push(Arc { component, left: zero, right: hi });
    } else if hi > *measure {
        out.push(Arc { component: component.clone(), left: lo, right: measure.clone() });
        out.push(Arc { component, left: zero, right: hi - measure.clone() });
    } else {
        out.push(Arc { component, left: lo, right: hi });
    }
}

/// `μ(T(Y) \ Y)`: the total length pushed out of the finite set `Y` of
/// components by one forward step.
pub fn box_escape_measure<Sys: SectionSystem>(sys: &Sys, boxed: &[Sys::Component]) -> Result<Sys::Coord, SectionError> {
    let members: BTreeSet<&Sys::Component> = boxed.iter().collect();
    let mut escape = Sys::Coord::zero();
    for c in &members {
        for arc in pushforward_interval(sys, c, Sys::Coord::zero(), sys.measure(c))? {
            if !members.contains(&arc.component) {
                escape = escape + arc.length();
            }
        }
    }
    Ok(escape)
}

/// An increasing family of finite component sets.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSequence<C> {
    boxes: Vec<Vec<C>>,
}

impl<C: Ord + Clone> BoxSequence<C> {
    pub fn new(boxes: Vec<Vec<C>>) -> Result<Self, SectionError> {
        if boxes.is_empty() {
            return Err(SectionError::EmptyBoxes);
        }
        for i in 1..boxes.len() {
            let prev: BTreeSet<&C> = boxes[i - 1].iter().collect();
            let next: BTreeSet<&C> = boxes[i].iter().collect();
            if !prev.is_subset(&next) || prev.len() == next.len() {
                return Err(SectionError::NotIncreasing(i, i - 1));
            }
        }
        Ok(BoxSequence { boxes })
    }

    pub fn boxes(&self) -> &[Vec<C>] {
        &self.boxes
    }
}

impl BoxSequence<i64> {
    /// Level bands `{-m+1, ..., m}` for `m = 1..=depth`.
    pub fn symmetric_bands(depth: i64) -> Result<Self, SectionError> {
        Self::new((1..=depth).map(|m| (-m + 1..=m).collect()).collect())
    }

    /// Level bands `{-m, ..., m}` for `m = 0..depth`.
    pub fn centered_bands(depth: i64) -> Result<Self, SectionError> {
        Self::new((0..depth).map(|m| (-m..=m).collect()).collect())
    }
}

pub const CERTIFICATE_DISCLAIMER: &str =
    "finite-depth check of the box-sequence hypothesis; it does not by itself prove conservativity";

#[derive(Clone, Debug, PartialEq)]
pub struct BoxRow<X> {
    pub index: usize,
    pub components: usize,
    pub measure: X,
    pub escape: X,
    pub below_epsilon: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservativityReport<X> {
    pub rows: Vec<BoxRow<X>>,
    pub epsilon: X,
    /// First box index from which every checked escape is at most `epsilon`.
    pub certified_from: Option<usize>,
    pub disclaimer: &'static str,
}

impl<X> ConservativityReport<X> {
    pub fn certified(&self) -> bool {
        self.certified_from.is_some()
    }
}

/// Checks the three box conditions up to the given depth: the boxes
/// increase, each has finite measure, and escapes fall to `epsilon` or below
/// and stay there.
pub fn certify_conservativity<Sys: SectionSystem>(
    sys: &Sys,
    boxes: &BoxSequence<Sys::Component>,
    epsilon: Sys::Coord,
) -> Result<ConservativityReport<Sys::Coord>, SectionError> {
    if epsilon <= Sys::Coord::zero() {
        return Err(SectionError::NonPositiveEpsilon);
    }
    let mut rows = Vec::with_capacity(boxes.boxes.len());
    for (index, b) in boxes.boxes.iter().enumerate() {
        let escape = box_escape_measure(sys, b)?;
        let measure = b.iter().fold(Sys::Coord::zero(), |acc, c| acc + sys.measure(c));
        let below_epsilon = escape <= epsilon;
        rows.push(BoxRow { index, components: b.len(), measure, escape, below_epsilon });
    }
    let certified_from = match rows.iter().rposition(|r| !r.below_epsilon) {
        None => Some(0),
        Some(i) if i + 1 < rows.len() => Some(i + 1),
        Some(_) => None,
    };
    Ok(ConservativityReport { rows, epsilon, certified_from, disclaimer: CERTIFICATE_DISCLAIMER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::staircase::{Direction, WidthSequence};
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn stair(w: WidthSequence<Q>, delta: Q) -> Staircase<Q> {
        Staircase::new(w, Direction::from_half_step(delta).unwrap())
    }

    #[test]
    fn empty_orbit() {
        let s = stair(WidthSequence::zero(), q(1, 4));
        let rec = orbit(&s, &SectionPoint::new(0, q(0, 1)).unwrap(), 0, VerticalSign::Up);
        assert!(rec.steps.is_empty());
        assert_eq!(rec.termination, Termination::Budget);
    }

    #[test]
    fn rotation_orbit() {
        let s = stair(WidthSequence::zero(), q(1, 4));
        let start = SectionPoint::new(0, q(1, 3)).unwrap();
        let rec = orbit(&s, &start, 8, VerticalSign::Up);
        let xs: Vec<Q> = rec.points().take(8).map(|p| p.x.clone() - q(1, 3)).map(|x| x.modulo(&q(2, 1))).collect();
        let expected: Vec<Q> = [0, 1, 2, 3, 0, 1, 2, 3].iter().map(|&i| q(i, 2)).collect();
        assert_eq!(xs, expected);
    }

    #[test]
    fn rotation_orbit_from_zero_is_singular() {
        let s = stair(WidthSequence::zero(), q(1, 4));
        let rec = orbit(&s, &SectionPoint::new(0, q(0, 1)).unwrap(), 8, VerticalSign::Up);
        let xs: Vec<Q> = rec.points().map(|p| p.x.clone()).collect();
        assert_eq!(xs, [0, 1, 2, 3, 0, 1, 2, 3, 0].iter().map(|&i| q(i, 2)).collect::<Vec<_>>());
    }

    #[test]
    fn full_circle_splits_in_three() {
        let w = WidthSequence::periodic(0, vec![q(1, 3), q(1, 5)]).unwrap();
        let s = stair(w, q(1, 7));
        let arcs = pushforward_interval(&s, &1, q(0, 1), q(2, 1)).unwrap();
        let mut by_level = std::collections::BTreeMap::new();
        for a in &arcs {
            *by_level.entry(a.component).or_insert(q(0, 1)) += a.length();
        }
        assert_eq!(by_level[&0], q(1, 3));
        assert_eq!(by_level[&2], q(1, 5));
        assert_eq!(by_level[&1], q(2, 1) - q(1, 3) - q(1, 5));
    }

    #[test]
    fn no_slits_single_arc() {
        let s = stair(WidthSequence::zero(), q(1, 9));
        let arcs = pushforward_interval(&s, &0, q(1, 2), q(3, 4)).unwrap();
        assert_eq!(arcs, vec![Arc { component: 0, left: q(1, 2) + q(2, 9), right: q(3, 4) + q(2, 9) }]);
    }

    #[test]
    fn bad_intervals_rejected() {
        let s = stair(WidthSequence::zero(), q(1, 9));
        assert!(pushforward_interval(&s, &0, q(1, 2), q(1, 2)).is_err());
        assert!(pushforward_interval(&s, &0, q(0, 1), q(5, 2)).is_err());
    }

    #[test]
    fn band_escape_formula() {
        let w = WidthSequence::new(-3, vec![q(1, 2), q(1, 3), q(1, 4), q(1, 5), q(1, 6), q(1, 7)], Tail::Zero).unwrap();
        let s = stair(w, q(3, 11));
        for (j, i) in [(-3, 1), (-2, 2), (-1, 0)] {
            let band: Vec<i64> = (j + 1..=i).collect();
            assert_eq!(box_escape_measure(&s, &band).unwrap(), s.band_escape(j + 1, i));
        }
        let flat = stair(WidthSequence::zero(), q(3, 11));
        assert_eq!(box_escape_measure(&flat, &[0, 1, 2]).unwrap(), q(0, 1));
    }

    use crate::staircase::Tail;

    #[test]
    fn certificates() {
        let s = stair(WidthSequence::decaying(), q(1, 7));
        let report = certify_conservativity(&s, &BoxSequence::symmetric_bands(12).unwrap(), q(1, 5)).unwrap();
        for row in &report.rows {
            let m = row.index as i64 + 1;
            assert_eq!(row.escape, q(2, m + 2));
        }
        assert_eq!(report.certified_from, Some(7));
        let half = stair(WidthSequence::constant(q(1, 2)).unwrap(), q(1, 7));
        let report = certify_conservativity(&half, &BoxSequence::centered_bands(5).unwrap(), q(1, 100)).unwrap();
        assert!(report.rows.iter().all(|r| r.escape == q(1, 1)));
        assert!(!report.certified());
        assert_eq!(BoxSequence::<i64>::new(vec![]), Err(SectionError::EmptyBoxes));
        assert!(BoxSequence::new(vec![vec![0, 1], vec![1]]).is_err());
    }
}
