//! Staircase surfaces and the first-return map to the mid-height section.
//!
//! Level `k` of the staircase is a flat torus of circumference 2 and height 1.
//! The top edge of level `k` is cut at `u ∈ {0, w_{k-1}, 2 - w_k}`:
//!
//! * `(2 - w_k, 2)` is the slit shared with the bottom of level `k + 1`,
//! * `(0, w_{k-1})` is glued to the bottom of level `k - 1` at `u - w_{k-1}`,
//! * the middle arc is glued back to the bottom of level `k`.
//!
//! Every gluing is a vertical translation in the planar picture, so the flow
//! in a fixed direction crosses half a level, translates its boundary
//! coordinate by the gluing, and crosses the second half. With `δ = τ/2`
//! (half the horizontal displacement per unit ascent) the return map is
//!
//! ```text
//! u  = x + δ (mod 2)
//! u' = u - w_{k-1} (down), u (stay), u + w_k (up)     (mod 2)
//! x' = u' + δ (mod 2)
//! ```
//!
//! and the three cut values of `u` are the cone points.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar, ScalarError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaircaseError {
    #[error("width {value} at level {level} is outside [0, 1]")]
    WidthOutOfRange { level: i64, value: String },
    #[error("periodic tail needs a non-empty window")]
    EmptyPeriodicWindow,
    #[error("section coordinate {0} is outside [0, 2)")]
    CoordinateOutOfRange(String),
    #[error("non-finite scalar: {0}")]
    NonFinite(String),
    #[error("negative height budget")]
    NegativeBudget,
    #[error("ringed inner window must have odd length 2N-1, got {0}")]
    EvenRingWindow(usize),
    #[error("cannot override a single width of a periodic sequence")]
    PeriodicOverride,
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// Rule for widths outside the explicit window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail<S: Scalar> {
    Constant {
        #[serde(with = "scalar::as_rational_string")]
        value: S,
    },
    Zero,
    /// Repeat the window with period `window.len()`, anchored at `window_start`.
    Periodic,
    Decay { rule: DecayRule },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayRule {
    /// `w_k = 1 / (|k| + 2)`.
    InverseShifted,
}

impl DecayRule {
    fn width<S: Scalar>(self, level: i64) -> S {
        match self {
            DecayRule::InverseShifted => S::from_ratio(1, level.abs() + 2),
        }
    }
}

/// Staircase parameter `w ∈ [0,1]^Z`: an explicit window plus a tail rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WidthSequence<S: Scalar> {
    window_start: i64,
    #[serde(with = "scalar::as_rational_strings")]
    window: Vec<S>,
    tail: Tail<S>,
}

impl<S: Scalar> WidthSequence<S> {
    pub fn new(window_start: i64, window: Vec<S>, tail: Tail<S>) -> Result<Self, StaircaseError> {
        let seq = WidthSequence { window_start, window, tail };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), StaircaseError> {
        for (i, w) in self.window.iter().enumerate() {
            check_width(self.window_start + i as i64, w)?;
        }
        match &self.tail {
            Tail::Constant { value } => check_width(i64::MIN, value)?,
            Tail::Periodic if self.window.is_empty() => return Err(StaircaseError::EmptyPeriodicWindow),
            _ => {}
        }
        Ok(())
    }

    pub fn constant(value: S) -> Result<Self, StaircaseError> {
        Self::new(0, Vec::new(), Tail::Constant { value })
    }

    pub fn zero() -> Self {
        WidthSequence { window_start: 0, window: Vec::new(), tail: Tail::Zero }
    }

    pub fn periodic(window_start: i64, window: Vec<S>) -> Result<Self, StaircaseError> {
        Self::new(window_start, window, Tail::Periodic)
    }

    /// `w_k = 1/(|k| + 2)`.
    pub fn decaying() -> Self {
        WidthSequence {
            window_start: 0,
            window: Vec::new(),
            tail: Tail::Decay { rule: DecayRule::InverseShifted },
        }
    }

    /// The `N`-ringed sequence with the given inner widths `w_{-N+1..N-1}`,
    /// zero at `±N`, and zero beyond.
    pub fn ringed(inner: Vec<S>) -> Result<Self, StaircaseError> {
        let n = (inner.len() as i64 + 1) / 2;
        if inner.len().is_multiple_of(2) {
            return Err(StaircaseError::EvenRingWindow(inner.len()));
        }
        let mut window = Vec::with_capacity(inner.len() + 2);
        window.push(S::zero());
        window.extend(inner);
        window.push(S::zero());
        Self::new(-n, window, Tail::Zero)
    }

    pub fn window_start(&self) -> i64 {
        self.window_start
    }

    pub fn window(&self) -> &[S] {
        &self.window
    }

    pub fn tail(&self) -> &Tail<S> {
        &self.tail
    }

    /// `w_k`; total over all integers.
    pub fn width(&self, level: i64) -> S {
        let offset = level - self.window_start;
        if offset >= 0 && (offset as usize) < self.window.len() {
            return self.window[offset as usize].clone();
        }
        match &self.tail {
            Tail::Constant { value } => value.clone(),
            Tail::Zero => S::zero(),
            Tail::Periodic => {
                let len = self.window.len() as i64;
                self.window[offset.rem_euclid(len) as usize].clone()
            }
            Tail::Decay { rule } => rule.width(level),
        }
    }

    /// Copy with `w_level` replaced, widening the window as needed.
    pub fn with_width(&self, level: i64, value: S) -> Result<Self, StaircaseError> {
        check_width(level, &value)?;
        if matches!(self.tail, Tail::Periodic) {
            return Err(StaircaseError::PeriodicOverride);
        }
        let (lo, hi) = if self.window.is_empty() {
            (level, level)
        } else {
            let hi = self.window_start + self.window.len() as i64 - 1;
            (self.window_start.min(level), hi.max(level))
        };
        let mut window: Vec<S> = (lo..=hi).map(|k| self.width(k)).collect();
        window[(level - lo) as usize] = value;
        Ok(WidthSequence { window_start: lo, window, tail: self.tail.clone() })
    }

    /// `w_N = w_{-N} = 0` and `w_j ∉ {0, 1}` for `|j| < N`.
    pub fn is_ringed(&self, n: i64) -> bool {
        if n < 1 {
            return false;
        }
        if !self.width(n).is_zero() || !self.width(-n).is_zero() {
            return false;
        }
        (-n + 1..n).all(|j| {
            let w = self.width(j);
            !w.is_zero() && !w.is_one()
        })
    }

    /// `sup_{lo <= k <= hi} |w_k - other_k|`.
    pub fn distance_on(&self, other: &Self, lo: i64, hi: i64) -> S {
        (lo..=hi).fold(S::zero(), |acc, k| S::max_of(acc, (self.width(k) - other.width(k)).abs()))
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, StaircaseError> {
        let seq: Self = serde_json::from_str(text)
            .map_err(|e| StaircaseError::Scalar(ScalarError::Malformed(e.to_string())))?;
        seq.validate()?;
        Ok(seq)
    }
}

fn check_width<S: Scalar>(level: i64, w: &S) -> Result<(), StaircaseError> {
    if !w.is_finite() {
        return Err(StaircaseError::NonFinite(format!("{w:?}")));
    }
    if *w < S::zero() || *w > S::one() {
        return Err(StaircaseError::WidthOutOfRange { level, value: format!("{w}") });
    }
    Ok(())
}

/// Which way the flow crosses the levels. `Down` runs the inverse map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerticalSign {
    Up,
    Down,
}

impl VerticalSign {
    pub fn flip(self) -> Self {
        match self {
            VerticalSign::Up => VerticalSign::Down,
            VerticalSign::Down => VerticalSign::Up,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            VerticalSign::Up => 1,
            VerticalSign::Down => -1,
        }
    }
}

/// A flow direction stored as its slope `τ` against the vertical axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction<S: Scalar> {
    slope: S,
    vertical_sign: VerticalSign,
}

impl<S: Scalar> Direction<S> {
    pub fn new(slope: S) -> Result<Self, StaircaseError> {
        Self::with_sign(slope, VerticalSign::Up)
    }

    pub fn with_sign(slope: S, vertical_sign: VerticalSign) -> Result<Self, StaircaseError> {
        if !slope.is_finite() {
            return Err(StaircaseError::NonFinite(format!("{slope:?}")));
        }
        Ok(Direction { slope, vertical_sign })
    }

    /// Direction whose half-level displacement is `delta`.
    pub fn from_half_step(delta: S) -> Result<Self, StaircaseError> {
        Self::new(delta * S::two())
    }

    pub fn slope(&self) -> &S {
        &self.slope
    }

    pub fn vertical_sign(&self) -> VerticalSign {
        self.vertical_sign
    }

    /// `δ = τ / 2`.
    pub fn half_step(&self) -> S {
        self.slope.half()
    }

    pub fn reversed(&self) -> Self {
        Direction { slope: self.slope.clone(), vertical_sign: self.vertical_sign.flip() }
    }
}

/// A point `(k, x)` of the section `Z × [0, 2)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SectionPoint<S> {
    pub level: i64,
    pub x: S,
}

impl<S: Scalar> SectionPoint<S> {
    pub fn new(level: i64, x: S) -> Result<Self, StaircaseError> {
        if !x.is_finite() {
            return Err(StaircaseError::NonFinite(format!("{x:?}")));
        }
        if x < S::zero() || x >= S::two() {
            return Err(StaircaseError::CoordinateOutOfRange(format!("{x}")));
        }
        Ok(SectionPoint { level, x })
    }

    /// Reduces `x` mod 2.
    pub fn wrapped(level: i64, x: S) -> Self {
        SectionPoint { level, x: x.modulo(&S::two()) }
    }
}

impl<S: fmt::Display> fmt::Display for SectionPoint<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.x)
    }
}

/// Level change of one return.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slit {
    Down,
    Stay,
    Up,
}

impl Slit {
    pub fn level_change(self) -> i64 {
        match self {
            Slit::Down => -1,
            Slit::Stay => 0,
            Slit::Up => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Slit::Down => 'D',
            Slit::Stay => 'S',
            Slit::Up => 'U',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'D' => Some(Slit::Down),
            'S' => Some(Slit::Stay),
            'U' => Some(Slit::Up),
            _ => None,
        }
    }

    /// The slit taken by the inverse of a step that took `self`.
    pub fn reversed(self) -> Self {
        match self {
            Slit::Down => Slit::Up,
            Slit::Stay => Slit::Stay,
            Slit::Up => Slit::Down,
        }
    }
}

impl fmt::Display for Slit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Cut values on a level's crossing circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Singularity {
    /// `u = w_{k-1}`.
    LowerSlit,
    /// `u = 2 - w_k`.
    UpperSlit,
    /// `u = 0 ≡ 2`.
    Corner,
}

impl Singularity {
    pub const ALL: [Singularity; 3] = [Singularity::LowerSlit, Singularity::UpperSlit, Singularity::Corner];

    /// `u` of this cut on a circle with lower width `w_lower = w_{k-1}` and
    /// upper width `w_upper = w_k`, in `[0, 2)`.
    pub fn position<S: Scalar>(self, w_lower: &S, w_upper: &S) -> S {
        match self {
            Singularity::LowerSlit => w_lower.clone(),
            Singularity::UpperSlit => (S::two() - w_upper.clone()).modulo(&S::two()),
            Singularity::Corner => S::zero(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Singularity::LowerSlit => "lower_slit",
            Singularity::UpperSlit => "upper_slit",
            Singularity::Corner => "corner",
        }
    }
}

impl fmt::Display for Singularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one return-map step.
#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome<S> {
    Moved { to: SectionPoint<S>, slit: Slit },
    /// The flow reached a cone point before the next section crossing. `u` is
    /// the exact crossing coordinate and `singularity` the first matching cut
    /// (cuts may coincide where a width vanishes).
    SingularHit { level: i64, singularity: Singularity, u: S },
}

impl<S> StepOutcome<S> {
    pub fn moved(&self) -> Option<&SectionPoint<S>> {
        match self {
            StepOutcome::Moved { to, .. } => Some(to),
            StepOutcome::SingularHit { .. } => None,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, StepOutcome::SingularHit { .. })
    }
}

/// Side from which a one-sided limit is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// All cuts at crossing coordinate `u` on a circle with widths
/// `(w_lower, w_upper)`.
pub fn singularities_at<S: Scalar>(u: &S, w_lower: &S, w_upper: &S) -> Vec<Singularity> {
    Singularity::ALL
        .into_iter()
        .filter(|s| s.position(w_lower, w_upper) == *u)
        .collect()
}

/// Exchange of crossing coordinates for a given slit, mod 2.
fn exchange<S: Scalar>(u: S, slit: Slit, w_lower: &S, w_upper: &S) -> S {
    match slit {
        Slit::Down => (u - w_lower.clone()).modulo(&S::two()),
        Slit::Stay => u,
        Slit::Up => (u + w_upper.clone()).modulo(&S::two()),
    }
}

/// The arc of the crossing circle containing `u`, or `None` on a cut.
fn classify<S: Scalar>(u: &S, w_lower: &S, w_upper: &S) -> Option<Slit> {
    let upper_cut = S::two() - w_upper.clone();
    if u.is_zero() || u == w_lower || *u == upper_cut {
        return None;
    }
    if u < w_lower {
        Some(Slit::Down)
    } else if *u > upper_cut {
        Some(Slit::Up)
    } else {
        Some(Slit::Stay)
    }
}

/// The arc on the given side of `u` (always defined).
fn classify_one_sided<S: Scalar>(u: &S, side: Side, w_lower: &S, w_upper: &S) -> Slit {
    let upper_cut = S::two() - w_upper.clone();
    match side {
        Side::Right => {
            if u < w_lower {
                Slit::Down
            } else if *u < upper_cut {
                Slit::Stay
            } else {
                Slit::Up
            }
        }
        Side::Left => {
            let u = if u.is_zero() { S::two() } else { u.clone() };
            if u <= *w_lower && !u.is_zero() {
                Slit::Down
            } else if u <= upper_cut {
                Slit::Stay
            } else {
                Slit::Up
            }
        }
    }
}

/// A staircase surface with a fixed flow direction: the section system `T^{w,θ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Staircase<S: Scalar> {
    widths: WidthSequence<S>,
    direction: Direction<S>,
    delta: S,
}

impl<S: Scalar> Staircase<S> {
    pub fn new(widths: WidthSequence<S>, direction: Direction<S>) -> Self {
        let delta = direction.half_step();
        Staircase { widths, direction, delta }
    }

    pub fn widths(&self) -> &WidthSequence<S> {
        &self.widths
    }

    pub fn direction(&self) -> &Direction<S> {
        &self.direction
    }

    /// `δ`, the half-level displacement for upward crossing.
    pub fn half_step(&self) -> &S {
        &self.delta
    }

    /// The same surface flown the other way: its `step` is this one's inverse.
    pub fn reversed(&self) -> Self {
        Staircase::new(self.widths.clone(), self.direction.reversed())
    }

    /// `(w_{k-1}, w_k)`.
    pub fn level_widths(&self, level: i64) -> (S, S) {
        (self.widths.width(level - 1), self.widths.width(level))
    }

    /// One return to the section in the configured direction.
    pub fn step(&self, p: &SectionPoint<S>) -> StepOutcome<S> {
        match self.direction.vertical_sign {
            VerticalSign::Up => self.forward_step(p),
            VerticalSign::Down => self.backward_step(p),
        }
    }

    /// One return in the opposite direction.
    pub fn inverse_step(&self, p: &SectionPoint<S>) -> StepOutcome<S> {
        match self.direction.vertical_sign {
            VerticalSign::Up => self.backward_step(p),
            VerticalSign::Down => self.forward_step(p),
        }
    }

    fn forward_step(&self, p: &SectionPoint<S>) -> StepOutcome<S> {
        let two = S::two();
        let (w_lower, w_upper) = self.level_widths(p.level);
        let u = (p.x.clone() + self.delta.clone()).modulo(&two);
        match classify(&u, &w_lower, &w_upper) {
            None => singular_hit(p.level, u, &w_lower, &w_upper),
            Some(slit) => {
                let u_next = exchange(u, slit, &w_lower, &w_upper);
                let x = (u_next + self.delta.clone()).modulo(&two);
                StepOutcome::Moved { to: SectionPoint { level: p.level + slit.level_change(), x }, slit }
            }
        }
    }

    fn backward_step(&self, p: &SectionPoint<S>) -> StepOutcome<S> {
        let two = S::two();
        // crossing the bottom of level k: arrivals from below occupy
        // (0, w_{k-1}), arrivals from above (2 - w_k, 2)
        let (w_lower, w_upper) = self.level_widths(p.level);
        let u = (p.x.clone() - self.delta.clone()).modulo(&two);
        match classify(&u, &w_lower, &w_upper) {
            None => singular_hit(p.level, u, &w_lower, &w_upper),
            Some(arc) => {
                let (slit, u_prev) = match arc {
                    Slit::Down => (Slit::Down, (u + two.clone() - w_lower).modulo(&two)),
                    Slit::Stay => (Slit::Stay, u),
                    Slit::Up => (Slit::Up, (u - two.clone() + w_upper).modulo(&two)),
                };
                let x = (u_prev - self.delta.clone()).modulo(&two);
                StepOutcome::Moved { to: SectionPoint { level: p.level + slit.level_change(), x }, slit }
            }
        }
    }

    /// One-sided limit of `step` at `p`: the image of `p ± 0`. Always defined;
    /// the image carries the same side.
    pub fn step_one_sided(&self, p: &SectionPoint<S>, side: Side) -> (SectionPoint<S>, Slit) {
        let forward = self.direction.vertical_sign == VerticalSign::Up;
        let two = S::two();
        let (w_lower, w_upper) = self.level_widths(p.level);
        let shift = if forward { self.delta.clone() } else { -self.delta.clone() };
        let u = (p.x.clone() + shift.clone()).modulo(&two);
        let arc = classify_one_sided(&u, side, &w_lower, &w_upper);
        let (slit, u_next) = if forward {
            (arc, exchange(u, arc, &w_lower, &w_upper))
        } else {
            match arc {
                Slit::Down => (Slit::Down, (u + two.clone() - w_lower).modulo(&two)),
                Slit::Stay => (Slit::Stay, u),
                Slit::Up => (Slit::Up, (u - two.clone() + w_upper).modulo(&two)),
            }
        };
        let x = (u_next + shift).modulo(&two);
        (SectionPoint { level: p.level + slit.level_change(), x }, slit)
    }

    /// Section coordinates `x` on `level` at which `step` is singular:
    /// `(j - δ) mod 2` for `j ∈ {w_{k-1}, 2 - w_k, 2}` (mirrored for the
    /// downward sign). Coinciding cuts are listed once per identity.
    pub fn singular_points(&self, level: i64) -> Vec<(Singularity, S)> {
        let (w_lower, w_upper) = self.level_widths(level);
        let shift = match self.direction.vertical_sign {
            VerticalSign::Up => -self.delta.clone(),
            VerticalSign::Down => self.delta.clone(),
        };
        Singularity::ALL
            .into_iter()
            .map(|s| (s, (s.position(&w_lower, &w_upper) + shift.clone()).modulo(&S::two())))
            .collect()
    }

    /// Exact measure leaving the level band `lo..=hi` in one step:
    /// `w_hi` through the top slit plus `w_{lo-1}` through the bottom one.
    pub fn band_escape(&self, lo: i64, hi: i64) -> S {
        self.widths.width(hi) + self.widths.width(lo - 1)
    }
}

fn singular_hit<S: Scalar>(level: i64, u: S, w_lower: &S, w_upper: &S) -> StepOutcome<S> {
    let singularity = singularities_at(&u, w_lower, w_upper)
        .into_iter()
        .next()
        .unwrap_or(Singularity::Corner);
    StepOutcome::SingularHit { level, singularity, u }
}

/// `T^{w,θ}(p)`.
pub fn step<S: Scalar>(w: &WidthSequence<S>, d: &Direction<S>, p: &SectionPoint<S>) -> StepOutcome<S> {
    Staircase::new(w.clone(), d.clone()).step(p)
}

/// `(T^{w,θ})^{-1}(p)`.
pub fn inverse_step<S: Scalar>(w: &WidthSequence<S>, d: &Direction<S>, p: &SectionPoint<S>) -> StepOutcome<S> {
    Staircase::new(w.clone(), d.clone()).inverse_step(p)
}

/// `true` iff `w` is `n`-ringed.
pub fn ringed<S: Scalar>(w: &WidthSequence<S>, n: i64) -> bool {
    w.is_ringed(n)
}

/// Why a flow trace stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowStop<S> {
    Budget,
    Singular { level: i64, singularity: Singularity, u: S },
}

/// Continuous trajectory in the planar picture: level `k` occupies
/// `[o_k, o_k + 2] × [k - 1/2, k + 1/2]` with `o_0 = 0` and
/// `o_{k+1} = o_k + 2 - w_k`; the section of level `k` is the line `y = k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrace<S> {
    /// Maximal continuous pieces of the trajectory, each a polyline.
    pub segments: Vec<Vec<(S, S)>>,
    /// Section crossings after the start, in order.
    pub crossings: Vec<SectionPoint<S>>,
    pub stop: FlowStop<S>,
}

impl<S: Scalar> FlowTrace<S> {
    pub fn end_point(&self) -> Option<&(S, S)> {
        self.segments.last().and_then(|s| s.last())
    }
}

struct Tracer<S: Scalar> {
    sign: S,
    slope: S,
    level: i64,
    offset: S,
    x: S,
    y: S,
    segments: Vec<Vec<(S, S)>>,
}

impl<S: Scalar> Tracer<S> {
    fn planar(&self) -> (S, S) {
        (self.offset.clone() + self.x.clone(), S::from_i64(self.level) + self.y.clone())
    }

    fn push(&mut self) {
        let p = self.planar();
        self.segments.last_mut().expect("segment").push(p);
    }

    fn start_segment(&mut self) {
        let p = self.planar();
        self.segments.push(vec![p]);
    }

    /// Move `rise` units along the flow inside the current level, wrapping
    /// across the identified left and right edges.
    fn advance(&mut self, rise: S) {
        let two = S::two();
        let mut rise = rise;
        let mut drift = self.sign.clone() * self.slope.clone() * rise.clone();
        loop {
            if drift.is_zero() {
                self.y = self.y.clone() + self.sign.clone() * rise;
                self.push();
                return;
            }
            let forward = drift > S::zero();
            if forward && self.x == two {
                self.x = S::zero();
                self.start_segment();
                continue;
            }
            if !forward && self.x.is_zero() {
                self.x = two.clone();
                self.start_segment();
                continue;
            }
            let room = if forward { two.clone() - self.x.clone() } else { -self.x.clone() };
            if drift.abs() <= room.abs() {
                self.x = self.x.clone() + drift;
                self.y = self.y.clone() + self.sign.clone() * rise;
                self.push();
                return;
            }
            let used = room.clone() * rise.clone() / drift.clone();
            self.x = self.x.clone() + room.clone();
            self.y = self.y.clone() + self.sign.clone() * used.clone();
            self.push();
            drift = drift - room;
            rise = rise - used;
        }
    }
}

/// Traces the continuous flow for `height_budget` units of vertical travel.
/// Its section crossings reproduce iterated [`Staircase::step`].
pub fn flow_trace<S: Scalar>(
    stair: &Staircase<S>,
    start: &SectionPoint<S>,
    height_budget: S,
) -> Result<FlowTrace<S>, StaircaseError> {
    if height_budget < S::zero() {
        return Err(StaircaseError::NegativeBudget);
    }
    let up = stair.direction.vertical_sign == VerticalSign::Up;
    let sign = if up { S::one() } else { -S::one() };
    let mut tracer = Tracer {
        sign,
        slope: stair.direction.slope().clone(),
        level: start.level,
        offset: level_offset(stair.widths(), start.level),
        x: start.x.clone(),
        y: S::zero(),
        segments: Vec::new(),
    };
    tracer.start_segment();
    let half = S::one().half();
    let mut budget = height_budget;
    let mut crossings = Vec::new();
    loop {
        if budget.is_zero() {
            return Ok(FlowTrace { segments: tracer.segments, crossings, stop: FlowStop::Budget });
        }
        // first half: mid-height to the crossing edge
        let rise = S::min_of(half.clone(), budget.clone());
        tracer.advance(rise.clone());
        budget = budget - rise.clone();
        if rise < half {
            return Ok(FlowTrace { segments: tracer.segments, crossings, stop: FlowStop::Budget });
        }
        let (w_lower, w_upper) = stair.level_widths(tracer.level);
        let u = tracer.x.modulo(&S::two());
        let Some(arc) = classify(&u, &w_lower, &w_upper) else {
            let singularity = singularities_at(&u, &w_lower, &w_upper)
                .into_iter()
                .next()
                .unwrap_or(Singularity::Corner);
            return Ok(FlowTrace {
                segments: tracer.segments,
                crossings,
                stop: FlowStop::Singular { level: tracer.level, singularity, u },
            });
        };
        // cross the edge: the planar x is unchanged for every gluing; the
        // level and the rectangle offset jump
        let (slit, u_next) = if up {
            (arc, exchange(u, arc, &w_lower, &w_upper))
        } else {
            match arc {
                Slit::Down => (Slit::Down, (u + S::two() - w_lower.clone()).modulo(&S::two())),
                Slit::Stay => (Slit::Stay, u),
                Slit::Up => (Slit::Up, (u - S::two() + w_upper.clone()).modulo(&S::two())),
            }
        };
        let new_level = tracer.level + slit.level_change();
        tracer.offset = match slit {
            Slit::Up => tracer.offset.clone() + S::two() - stair.widths().width(tracer.level),
            Slit::Down => tracer.offset.clone() - (S::two() - stair.widths().width(new_level)),
            Slit::Stay => tracer.offset.clone(),
        };
        tracer.level = new_level;
        tracer.x = u_next;
        // glued edge points share their planar position
        tracer.y = -tracer.sign.clone() * half.clone();
        // second half: crossing edge to mid-height
        let rise = S::min_of(half.clone(), budget.clone());
        tracer.advance(rise.clone());
        budget = budget - rise.clone();
        if rise < half {
            return Ok(FlowTrace { segments: tracer.segments, crossings, stop: FlowStop::Budget });
        }
        tracer.x = tracer.x.modulo(&S::two());
        crossings.push(SectionPoint { level: tracer.level, x: tracer.x.clone() });
    }
}

/// Horizontal offset `o_k` of level `k` in the planar picture.
pub fn level_offset<S: Scalar>(w: &WidthSequence<S>, level: i64) -> S {
    let mut offset = S::zero();
    if level >= 0 {
        for k in 0..level {
            offset = offset + S::two() - w.width(k);
        }
    } else {
        for k in level..0 {
            offset = offset - (S::two() - w.width(k));
        }
    }
    offset
}
