//! Integer-lattice engine for closed bands of a staircase.
//!
//! When the band `lo..=hi` is closed (`w_{lo-1} = w_hi = 0`) and every width
//! and the half step are rational, the return map is an interval exchange on
//! the lattice `(1 / scale) Z`. All arithmetic is on `i64`, so long orbits are
//! exact and cheap.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::section::{SectionSystem, StopReason, Transition};
use crate::staircase::{SectionPoint, Singularity, Slit, Staircase, VerticalSign};
use crate::Rational;

/// Lattice coordinates stay below this so that sums of two never overflow.
const MAX_CIRCUMFERENCE: i64 = 1 << 61;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IetError {
    #[error("band {lo}..={hi} is open: w_{{lo-1}} = {below}, w_hi = {above}")]
    OpenBand { lo: i64, hi: i64, below: String, above: String },
    #[error("empty band {lo}..={hi}")]
    EmptyBand { lo: i64, hi: i64 },
    #[error("lattice of circumference {0} does not fit in 64 bits")]
    Overflow(String),
    #[error("refinement must be positive")]
    BadRefinement,
    #[error("point {0} is not on the lattice")]
    OffLattice(String),
    #[error("level {0} is outside the band")]
    OutsideBand(i64),
}

/// A point of the band in lattice units: `x = coord / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    pub level: i64,
    pub coord: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LevelCuts {
    /// `w_{k-1}` in lattice units.
    lower: i64,
    /// `2 - w_k` in lattice units.
    upper_cut: i64,
}

/// The return map of a closed band, compiled to integers.
#[derive(Clone, Debug, PartialEq)]
pub struct RingIet {
    lo: i64,
    hi: i64,
    scale: i64,
    circumference: i64,
    shift: i64,
    sign: VerticalSign,
    levels: Vec<LevelCuts>,
}

impl RingIet {
    /// Compiles the band `lo..=hi` of `stair`. With `refine = r` the lattice
    /// is `r` times finer than the coarsest one carrying every cut, so that
    /// odd multiples of the fine unit never meet a cut when `r` is even.
    pub fn compile(stair: &Staircase<Rational>, lo: i64, hi: i64, refine: i64) -> Result<Self, IetError> {
        if hi < lo {
            return Err(IetError::EmptyBand { lo, hi });
        }
        if refine < 1 {
            return Err(IetError::BadRefinement);
        }
        let w = stair.widths();
        let below = w.width(lo - 1);
        let above = w.width(hi);
        if !below.is_zero() || !above.is_zero() {
            return Err(IetError::OpenBand {
                lo,
                hi,
                below: scalar::format_rational(&below),
                above: scalar::format_rational(&above),
            });
        }
        let widths: Vec<Rational> = (lo - 1..=hi).map(|k| w.width(k)).collect();
        let delta = stair.half_step().modulo(&Rational::from_ratio(2, 1));
        let denominator = scalar::common_denominator(widths.iter().chain(std::iter::once(&delta)));
        let scale_big = denominator * BigInt::from(refine);
        let circumference_big = &scale_big * BigInt::from(2);
        let circumference = circumference_big
            .to_i64()
            .filter(|c| *c < MAX_CIRCUMFERENCE)
            .ok_or_else(|| IetError::Overflow(circumference_big.to_string()))?;
        let scale = circumference / 2;
        let units = |r: &Rational| -> i64 {
            let v = r * Rational::from_integer(BigInt::from(scale));
            debug_assert!(v.is_integer());
            v.to_integer().to_i64().expect("fits by construction")
        };
        let levels = (0..=(hi - lo) as usize)
            .map(|i| {
                let lower = units(&widths[i]);
                let upper = units(&widths[i + 1]);
                LevelCuts { lower, upper_cut: circumference - upper }
            })
            .collect();
        Ok(RingIet {
            lo,
            hi,
            scale,
            circumference,
            shift: units(&delta),
            sign: stair.direction().vertical_sign(),
            levels,
        })
    }

    /// The `N`-ring band `-N+1..=N`.
    pub fn ring(stair: &Staircase<Rational>, n: i64, refine: i64) -> Result<Self, IetError> {
        Self::compile(stair, -n + 1, n, refine)
    }

    pub fn band(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// Lattice units per unit length.
    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn circumference(&self) -> i64 {
        self.circumference
    }

    pub fn levels(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn to_lattice(&self, p: &SectionPoint<Rational>) -> Result<LatticePoint, IetError> {
        if p.level < self.lo || p.level > self.hi {
            return Err(IetError::OutsideBand(p.level));
        }
        let v = &p.x * Rational::from_integer(BigInt::from(self.scale));
        if !v.is_integer() {
            return Err(IetError::OffLattice(format!("{p}")));
        }
        Ok(LatticePoint { level: p.level, coord: v.to_integer().to_i64().expect("below circumference") })
    }

    pub fn to_section(&self, p: &LatticePoint) -> SectionPoint<Rational> {
        SectionPoint { level: p.level, x: Rational::new(BigInt::from(p.coord), BigInt::from(self.scale)) }
    }

    pub fn x_f64(&self, p: &LatticePoint) -> f64 {
        p.coord as f64 / self.scale as f64
    }

    fn cuts(&self, level: i64) -> &LevelCuts {
        &self.levels[(level - self.lo) as usize]
    }

    #[inline]
    fn singular_tag(c: &LevelCuts, u: i64) -> Option<Singularity> {
        if u == c.lower {
            Some(Singularity::LowerSlit)
        } else if u == c.upper_cut {
            Some(Singularity::UpperSlit)
        } else if u == 0 {
            Some(Singularity::Corner)
        } else {
            None
        }
    }

    /// One upward return. `Err` carries the cut that was hit.
    #[inline]
    pub fn up(&self, p: LatticePoint) -> Result<(LatticePoint, Slit), Singularity> {
        let c = self.cuts(p.level);
        let n = self.circumference;
        let mut u = p.coord + self.shift;
        if u >= n {
            u -= n;
        }
        if let Some(tag) = Self::singular_tag(c, u) {
            return Err(tag);
        }
        let (slit, mut v) = if u < c.lower {
            (Slit::Down, u - c.lower + n)
        } else if u > c.upper_cut {
            (Slit::Up, u - c.upper_cut)
        } else {
            (Slit::Stay, u)
        };
        v += self.shift;
        if v >= n {
            v -= n;
        }
        Ok((LatticePoint { level: p.level + slit.level_change(), coord: v }, slit))
    }

    /// One downward return (the inverse of [`RingIet::up`]).
    #[inline]
    pub fn down(&self, p: LatticePoint) -> Result<(LatticePoint, Slit), Singularity> {
        let c = self.cuts(p.level);
        let n = self.circumference;
        let mut u = p.coord - self.shift;
        if u < 0 {
            u += n;
        }
        if let Some(tag) = Self::singular_tag(c, u) {
            return Err(tag);
        }
        let (slit, mut v) = if u < c.lower {
            (Slit::Down, u + n - c.lower)
        } else if u > c.upper_cut {
            (Slit::Up, u - c.upper_cut)
        } else {
            (Slit::Stay, u)
        };
        v -= self.shift;
        if v < 0 {
            v += n;
        }
        Ok((LatticePoint { level: p.level + slit.level_change(), coord: v }, slit))
    }

    /// One return in the compiled direction, or against it.
    #[inline]
    pub fn advance(&self, p: LatticePoint, with_flow: bool) -> Result<(LatticePoint, Slit), Singularity> {
        match (self.sign, with_flow) {
            (VerticalSign::Up, true) | (VerticalSign::Down, false) => self.up(p),
            _ => self.down(p),
        }
    }

    /// Points of the lattice on `level` where the map in the compiled
    /// direction is singular.
    pub fn singular_coords(&self, level: i64) -> Vec<i64> {
        let c = self.cuts(level);
        let shift = match self.sign {
            VerticalSign::Up => -self.shift,
            VerticalSign::Down => self.shift,
        };
        let mut xs: Vec<i64> = [c.lower, c.upper_cut, 0]
            .iter()
            .map(|u| (u + shift).rem_euclid(self.circumference))
            .collect();
        xs.sort_unstable();
        xs.dedup();
        xs
    }

    pub fn with_flow_sign(&self) -> VerticalSign {
        self.sign
    }
}

impl SectionSystem for RingIet {
    type Component = i64;
    type Coord = Rational;
    type Point = LatticePoint;
    type Symbol = Slit;

    fn forward(&self, p: &LatticePoint) -> Transition<LatticePoint, Slit> {
        match self.advance(*p, true) {
            Ok((to, symbol)) => Transition::Moved { to, symbol },
            Err(_) => Transition::Stopped(StopReason::Singular),
        }
    }

    fn backward(&self, p: &LatticePoint) -> Transition<LatticePoint, Slit> {
        match self.advance(*p, false) {
            Ok((to, symbol)) => Transition::Moved { to, symbol },
            Err(_) => Transition::Stopped(StopReason::Singular),
        }
    }

    fn component(&self, p: &LatticePoint) -> i64 {
        p.level
    }

    fn coordinate(&self, p: &LatticePoint) -> Rational {
        self.to_section(p).x
    }

    fn coordinate_f64(&self, p: &LatticePoint) -> f64 {
        self.x_f64(p)
    }

    fn point(&self, c: &i64, x: Rational) -> Option<LatticePoint> {
        if x.is_negative() || x >= Rational::from_integer(BigInt::from(2)) {
            return None;
        }
        self.to_lattice(&SectionPoint { level: *c, x }).ok()
    }

    fn measure(&self, _: &i64) -> Rational {
        Rational::from_integer(BigInt::from(2))
    }

    fn is_circle(&self, _: &i64) -> bool {
        true
    }

    fn singular_points(&self, c: &i64) -> Option<Vec<Rational>> {
        if *c < self.lo || *c > self.hi {
            return None;
        }
        let scale = BigInt::from(self.scale);
        Some(
            self.singular_coords(*c)
                .into_iter()
                .map(|u| Rational::new(BigInt::from(u), scale.clone()))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::staircase::{Direction, WidthSequence};

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn ring(delta: Rational) -> Staircase<Rational> {
        Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::from_half_step(delta).unwrap())
    }

    #[test]
    fn open_band_rejected() {
        let s = Staircase::new(WidthSequence::constant(q(1, 2)).unwrap(), Direction::new(q(1, 3)).unwrap());
        assert!(matches!(RingIet::compile(&s, 0, 1, 1), Err(IetError::OpenBand { .. })));
        assert!(matches!(RingIet::compile(&ring(q(1, 7)), 1, 0, 1), Err(IetError::EmptyBand { .. })));
    }

    #[test]
    fn overflow_rejected() {
        let huge = Rational::new(BigInt::from(1), BigInt::from(1u64 << 62) + 1);
        assert!(matches!(RingIet::ring(&ring(huge), 1, 1), Err(IetError::Overflow(_))));
    }

    #[test]
    fn agrees_with_exact_steps() {
        let s = ring(q(377, 1220));
        let iet = RingIet::ring(&s, 1, 1).unwrap();
        let mut p = SectionPoint::new(0, q(3, 61)).unwrap();
        let mut lp = iet.to_lattice(&p).unwrap();
        for _ in 0..2000 {
            match (s.step(&p).moved().cloned(), iet.up(lp)) {
                (Some(next), Ok((lnext, _))) => {
                    assert_eq!(iet.to_section(&lnext), next);
                    p = next;
                    lp = lnext;
                }
                (None, Err(_)) => break,
                other => panic!("engines disagree: {other:?}"),
            }
        }
        for _ in 0..2000 {
            let (back, _) = iet.down(lp).unwrap();
            let prev = s.inverse_step(&p).moved().cloned().unwrap();
            assert_eq!(iet.to_section(&back), prev);
            p = prev;
            lp = back;
        }
    }

    #[test]
    fn singular_coords_match() {
        let s = ring(q(1, 8));
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        for level in iet.levels() {
            let exact: Vec<Rational> = SectionSystem::singular_points(&s, &level).unwrap();
            assert_eq!(SectionSystem::singular_points(&iet, &level).unwrap(), exact);
            for x in &exact {
                let lp = iet.to_lattice(&SectionPoint { level, x: x.clone() }).unwrap();
                assert!(iet.up(lp).is_err());
            }
        }
    }

    #[test]
    fn odd_fine_points_never_hit_cuts() {
        let s = ring(q(5, 13));
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        let mut p = LatticePoint { level: 1, coord: 7 };
        for _ in 0..10_000 {
            p = iet.up(p).unwrap().0;
            assert_eq!(p.coord % 2, 1);
        }
    }
}
