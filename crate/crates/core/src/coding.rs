//! Itineraries of section maps through their continuity pieces.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::section::{SectionSystem, Transition};
use crate::singular::ContinuityPartition;
use crate::staircase::{SectionPoint, Slit, Staircase, VerticalSign};
use crate::Rational;

/// Finite coding of an orbit; `complete` is false when the map stopped
/// before the requested depth.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Itinerary<Sym> {
    pub word: Vec<Sym>,
    pub complete: bool,
}

impl<Sym: Copy> Itinerary<Sym> {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Drops the first symbol.
    pub fn shift(&self) -> Self {
        Itinerary { word: self.word.iter().skip(1).copied().collect(), complete: self.complete }
    }
}

impl<Sym: fmt::Display> fmt::Display for Itinerary<Sym> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.word {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Labels of the first `depth` steps from `z`.
pub fn itinerary<Sys: SectionSystem>(sys: &Sys, z: &Sys::Point, depth: usize, sign: VerticalSign) -> Itinerary<Sys::Symbol> {
    let mut word = Vec::with_capacity(depth);
    let mut p = z.clone();
    for _ in 0..depth {
        match sys.step(&p, sign) {
            Transition::Moved { to, symbol } => {
                word.push(symbol);
                p = to;
            }
            Transition::Stopped(_) => return Itinerary { word, complete: false },
        }
    }
    Itinerary { word, complete: true }
}

/// A slit symbol refined by the arc of `partition` the point sat in before
/// the step; `None` off the partition's band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RefinedLabel {
    pub slit: Slit,
    pub cell: Option<usize>,
}

impl fmt::Display for RefinedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cell {
            Some(c) => write!(f, "{}{c}", self.slit),
            None => write!(f, "{}", self.slit),
        }
    }
}

pub fn refined_itinerary(
    stair: &Staircase<Rational>,
    partition: &ContinuityPartition,
    z: &SectionPoint<Rational>,
    depth: usize,
) -> Itinerary<RefinedLabel> {
    let mut word = Vec::with_capacity(depth);
    let mut p = z.clone();
    for _ in 0..depth {
        let cell = partition.locate(p.level, &p.x);
        match stair.step(&p) {
            crate::staircase::StepOutcome::Moved { to, slit } => {
                word.push(RefinedLabel { slit, cell });
                p = to;
            }
            crate::staircase::StepOutcome::SingularHit { .. } => return Itinerary { word, complete: false },
        }
    }
    Itinerary { word, complete: true }
}

/// `i(T z) = σ(i(z))` on the first `depth` symbols. Vacuous when either
/// coding is incomplete.
pub fn shift_conjugacy_holds<Sys: SectionSystem>(sys: &Sys, z: &Sys::Point, depth: usize, sign: VerticalSign) -> bool {
    let long = itinerary(sys, z, depth + 1, sign);
    let Transition::Moved { to, .. } = sys.step(z, sign) else {
        return true;
    };
    let short = itinerary(sys, &to, depth, sign);
    if !long.complete || !short.complete {
        return true;
    }
    long.shift().word == short.word
}

/// Word counts over a sample, plus the number of incomplete codings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub depth: usize,
    pub counts: BTreeMap<String, u64>,
    #[serde(skip)]
    pub incomplete: usize,
}

impl Census {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn frequencies(&self) -> BTreeMap<&str, f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|(w, c)| (w.as_str(), *c as f64 / total)).collect()
    }

    /// Largest frequency difference over the union of words.
    pub fn max_gap(&self, other: &Census) -> f64 {
        let a = self.frequencies();
        let b = other.frequencies();
        a.keys()
            .chain(b.keys())
            .map(|w| (a.get(w).copied().unwrap_or(0.0) - b.get(w).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }
}

/// Counts of completed depth-`depth` words over a sample of points.
pub fn cylinder_census<Sys>(sys: &Sys, depth: usize, sample: &[Sys::Point], sign: VerticalSign) -> Census
where
    Sys: SectionSystem,
    Sys::Symbol: fmt::Display,
{
    let words: Vec<Option<String>> = sample
        .par_iter()
        .map(|z| {
            let it = itinerary(sys, z, depth, sign);
            it.complete.then(|| it.to_string())
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut incomplete = 0;
    for w in words {
        match w {
            Some(w) => *counts.entry(w).or_insert(0) += 1,
            None => incomplete += 1,
        }
    }
    Census { depth, counts, incomplete }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring_iet::{LatticePoint, RingIet};
    use crate::section::orbit;
    use crate::singular::continuity_partition;
    use crate::scalar::Scalar;
    use crate::staircase::{Direction, WidthSequence};

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn ring() -> Staircase<Rational> {
        Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::from_half_step(q(377, 1220)).unwrap())
    }

    #[test]
    fn no_slits_stay() {
        let s = Staircase::new(WidthSequence::zero(), Direction::from_half_step(q(1, 3)).unwrap());
        let z = SectionPoint::new(0, q(1, 7)).unwrap();
        let it = itinerary(&s, &z, 12, VerticalSign::Up);
        assert!(it.complete);
        assert_eq!(it.to_string(), "S".repeat(12));
        let census = cylinder_census(&s, 5, &[z], VerticalSign::Up);
        assert_eq!(census.to_json().unwrap(), r#"{"depth":5,"counts":{"SSSSS":1}}"#);
    }

    #[test]
    fn depth_zero_census() {
        let s = ring();
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        let sample = [LatticePoint { level: 0, coord: 1 }, LatticePoint { level: 1, coord: 7 }];
        let c = cylinder_census(&iet, 0, &sample, VerticalSign::Up);
        assert_eq!(c.frequencies().get(""), Some(&1.0));
    }

    #[test]
    fn agrees_with_orbit_trace() {
        let s = ring();
        let z = SectionPoint::new(0, q(2, 9)).unwrap();
        let rec = orbit(&s, &z, 300, VerticalSign::Up);
        assert_eq!(itinerary(&s, &z, 300, VerticalSign::Up).word, rec.symbols());
    }

    #[test]
    fn conjugacy_on_lattice_and_exact() {
        let s = ring();
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        for c in (1..iet.circumference()).step_by(97) {
            let z = LatticePoint { level: c % 2, coord: c | 1 };
            assert!(shift_conjugacy_holds(&iet, &z, 200, VerticalSign::Up));
            assert!(shift_conjugacy_holds(&iet, &z, 200, VerticalSign::Down));
        }
        let z = SectionPoint::new(1, q(3, 11)).unwrap();
        assert!(shift_conjugacy_holds(&s, &z, 100, VerticalSign::Up));
    }

    #[test]
    fn partition_arcs_share_words() {
        let s = ring();
        let ell = 6;
        let part = continuity_partition(&s, 1, ell).unwrap();
        for iv in part.intervals() {
            let a = SectionPoint::wrapped(iv.level, &iv.left + &iv.length / Rational::from_ratio(3, 1));
            let b = SectionPoint::wrapped(iv.level, &iv.left + &iv.length * Rational::from_ratio(2, 3));
            assert_eq!(itinerary(&s, &a, ell + 1, VerticalSign::Up), itinerary(&s, &b, ell + 1, VerticalSign::Up));
            let zero = continuity_partition(&s, 1, 0).unwrap();
            let ra = refined_itinerary(&s, &zero, &a, ell + 1);
            assert_eq!(ra, refined_itinerary(&s, &zero, &b, ell + 1));
        }
    }
}
