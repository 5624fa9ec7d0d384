//! Singular sets of ring bands, continuity partitions of `T^ℓ`, the gap
//! statistics built on them, and the matching between partitions of nearby
//! parameters.
//!
//! Everything here runs on exact rationals.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::ring_iet::RingIet;
use crate::scalar::{self, Scalar};
use crate::staircase::{Direction, SectionPoint, Side, Singularity, Slit, Staircase, StepOutcome, WidthSequence};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularError {
    #[error("band size N must be at least 1, got {0}")]
    BadBand(i64),
    #[error("saddle connection: {from} reaches the {hit} cut of level {hit_level} after {steps} backward steps")]
    SaddleConnectionFound { from: CutId, steps: usize, hit_level: i64, hit: Singularity },
    #[error("cannot match intervals on level {level}: {reason}")]
    MatchFailed { level: i64, reason: String },
}

fn two() -> Rational {
    Rational::from_ratio(2, 1)
}

/// Circular distance on a section circle.
pub fn circle_distance(a: &Rational, b: &Rational) -> Rational {
    let d = (a - b).abs().modulo(&two());
    let other = two() - d.clone();
    Rational::min_of(d, other)
}

/// A cut point of level `level` (the level where the singular point lies)
/// carried `index` steps backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CutId {
    pub level: i64,
    pub tag: Singularity,
    pub index: usize,
}

impl std::fmt::Display for CutId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.level, self.tag, self.index)
    }
}

/// Singular points of one level; coinciding cuts share an entry.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPoint {
    pub x: Rational,
    pub tags: Vec<Singularity>,
}

impl SigmaPoint {
    /// Two or three cuts in one place.
    pub fn is_blocking(&self) -> bool {
        self.tags.len() > 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularSet {
    pub levels: BTreeMap<i64, Vec<SigmaPoint>>,
}

impl SingularSet {
    pub fn points(&self) -> impl Iterator<Item = (i64, &SigmaPoint)> {
        self.levels.iter().flat_map(|(k, ps)| ps.iter().map(move |p| (*k, p)))
    }

    pub fn blocking_levels(&self) -> Vec<i64> {
        self.levels
            .iter()
            .filter(|(_, ps)| ps.iter().any(SigmaPoint::is_blocking))
            .map(|(k, _)| *k)
            .collect()
    }
}

fn check_band(n: i64) -> Result<(), SingularError> {
    if n < 1 {
        Err(SingularError::BadBand(n))
    } else {
        Ok(())
    }
}

/// Points of levels `-N+1..=N` where `stair.step` is singular.
pub fn sigma_set(stair: &Staircase<Rational>, n: i64) -> Result<SingularSet, SingularError> {
    check_band(n)?;
    let mut levels = BTreeMap::new();
    for k in -n + 1..=n {
        let mut grouped: BTreeMap<Rational, Vec<Singularity>> = BTreeMap::new();
        for (tag, x) in stair.singular_points(k) {
            grouped.entry(x).or_default().push(tag);
        }
        levels.insert(k, grouped.into_iter().map(|(x, tags)| SigmaPoint { x, tags }).collect());
    }
    Ok(SingularSet { levels })
}

/// A distinct cut position with every identity landing on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub x: Rational,
    pub ids: BTreeSet<CutId>,
}

/// An arc between consecutive cuts; `left + length` may exceed 2 on the
/// last arc of a level.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub level: i64,
    pub left: Rational,
    pub length: Rational,
    pub left_ids: BTreeSet<CutId>,
    pub right_ids: BTreeSet<CutId>,
}

impl Interval {
    pub fn right(&self) -> Rational {
        (&self.left + &self.length).modulo(&two())
    }

    pub fn midpoint(&self) -> SectionPoint<Rational> {
        SectionPoint::wrapped(self.level, &self.left + self.length.half())
    }

    /// Whether `x` lies strictly inside the arc.
    pub fn contains(&self, x: &Rational) -> bool {
        let offset = (x - &self.left).modulo(&two());
        !offset.is_zero() && offset < self.length
    }
}

/// Cut points `T^{-j} Σ`, `0 <= j <= ℓ`, on the band `-N+1..=N`, and the
/// arcs between them.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityPartition {
    pub n: i64,
    pub ell: usize,
    pub cuts: BTreeMap<i64, Vec<Cut>>,
}

impl ContinuityPartition {
    pub fn band(&self) -> (i64, i64) {
        (-self.n + 1, self.n)
    }

    pub fn cut_count(&self) -> usize {
        self.cuts.values().map(Vec::len).sum()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        let mut out = Vec::new();
        for (level, cuts) in &self.cuts {
            out.extend(level_intervals(*level, cuts));
        }
        out
    }

    /// `η`: the shortest arc.
    pub fn min_gap(&self) -> Rational {
        self.intervals().into_iter().map(|i| i.length).min().unwrap_or_else(two)
    }

    /// Index of the arc containing `x` on `level`, `None` on a cut.
    pub fn locate(&self, level: i64, x: &Rational) -> Option<usize> {
        let cuts = self.cuts.get(&level)?;
        match cuts.binary_search_by(|c| c.x.cmp(x)) {
            Ok(_) => None,
            Err(0) => Some(cuts.len() - 1),
            Err(i) => Some(i - 1),
        }
    }

    /// CSV: `level,cut_x,source,backward_index`, one row per identity.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "level,cut_x,source,backward_index")?;
        for (level, cuts) in &self.cuts {
            for cut in cuts {
                for id in &cut.ids {
                    writeln!(
                        out,
                        "{},{},{}:{},{}",
                        level,
                        scalar::format_rational(&cut.x),
                        id.level,
                        id.tag,
                        id.index
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn level_intervals(level: i64, cuts: &[Cut]) -> Vec<Interval> {
    if cuts.is_empty() {
        return vec![Interval {
            level,
            left: Rational::zero(),
            length: two(),
            left_ids: BTreeSet::new(),
            right_ids: BTreeSet::new(),
        }];
    }
    (0..cuts.len())
        .map(|i| {
            let a = &cuts[i];
            let b = &cuts[(i + 1) % cuts.len()];
            let mut length = &b.x - &a.x;
            if length <= Rational::zero() {
                length += two();
            }
            Interval { level, left: a.x.clone(), length, left_ids: a.ids.clone(), right_ids: b.ids.clone() }
        })
        .collect()
}

type CutOrbit = Vec<(SectionPoint<Rational>, CutId)>;

/// Builds the partition of the band into arcs on which `T^ℓ` is continuous.
/// Backward orbits that leave the band are not followed further.
pub fn continuity_partition(
    stair: &Staircase<Rational>,
    n: i64,
    ell: usize,
) -> Result<ContinuityPartition, SingularError> {
    check_band(n)?;
    let (lo, hi) = (-n + 1, n);
    let mut positions: BTreeMap<i64, BTreeMap<Rational, BTreeSet<CutId>>> =
        (lo..=hi).map(|k| (k, BTreeMap::new())).collect();
    let orbits: Vec<Result<CutOrbit, SingularError>> = (lo..=hi)
        .flat_map(|k| stair.singular_points(k).into_iter().map(move |(tag, x)| (k, tag, x)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, tag, x)| {
            let mut trail = Vec::with_capacity(ell + 1);
            let mut p = SectionPoint { level: k, x };
            trail.push((p.clone(), CutId { level: k, tag, index: 0 }));
            for j in 1..=ell {
                match stair.inverse_step(&p) {
                    StepOutcome::Moved { to, .. } => {
                        if to.level < lo || to.level > hi {
                            break;
                        }
                        trail.push((to.clone(), CutId { level: k, tag, index: j }));
                        p = to;
                    }
                    StepOutcome::SingularHit { level, singularity, .. } => {
                        return Err(SingularError::SaddleConnectionFound {
                            from: CutId { level: k, tag, index: 0 },
                            steps: j - 1,
                            hit_level: level,
                            hit: singularity,
                        });
                    }
                }
            }
            Ok(trail)
        })
        .collect();
    for trail in orbits {
        for (p, id) in trail? {
            positions.get_mut(&p.level).expect("inside band").entry(p.x).or_default().insert(id);
        }
    }
    let cuts = positions
        .into_iter()
        .map(|(k, m)| (k, m.into_iter().map(|(x, ids)| Cut { x, ids }).collect()))
        .collect();
    Ok(ContinuityPartition { n, ell, cuts })
}

/// Result of comparing the two inward one-sided limits of every arc.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    pub intervals: usize,
    /// Arcs whose endpoint itineraries differ, as `(level, left)`.
    pub mismatches: Vec<(i64, Rational)>,
}

impl WitnessReport {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Checks that on every arc the right limit at the left end and the left
/// limit at the right end have the same `ℓ`-step itinerary.
///
/// Closed bands run on the integer engine at doubled resolution, where the
/// odd lattice points next to a cut follow its one-sided limits exactly;
/// other bands use exact one-sided steps.
pub fn continuity_witness(stair: &Staircase<Rational>, partition: &ContinuityPartition) -> WitnessReport {
    let intervals = partition.intervals();
    let (lo, hi) = partition.band();
    let ell = partition.ell;
    let mismatches: Vec<(i64, Rational)> = match RingIet::compile(stair, lo, hi, 2) {
        Ok(iet) => intervals
            .par_iter()
            .filter(|iv| {
                let left = iet.to_lattice(&SectionPoint { level: iv.level, x: iv.left.clone() });
                let right = iet.to_lattice(&SectionPoint { level: iv.level, x: iv.right() });
                let (Ok(left), Ok(right)) = (left, right) else { return true };
                let n = iet.circumference();
                let a = left.coord + 1;
                let b = (right.coord - 1).rem_euclid(n);
                lattice_itinerary(&iet, iv.level, a, ell) != lattice_itinerary(&iet, iv.level, b, ell)
            })
            .map(|iv| (iv.level, iv.left.clone()))
            .collect(),
        Err(_) => intervals
            .par_iter()
            .filter(|iv| {
                let a = SectionPoint { level: iv.level, x: iv.left.clone() };
                let b = SectionPoint { level: iv.level, x: iv.right() };
                one_sided_itinerary(stair, a, Side::Right, ell) != one_sided_itinerary(stair, b, Side::Left, ell)
            })
            .map(|iv| (iv.level, iv.left.clone()))
            .collect(),
    };
    WitnessReport { intervals: intervals.len(), mismatches }
}

fn lattice_itinerary(iet: &RingIet, level: i64, coord: i64, ell: usize) -> Option<Vec<Slit>> {
    let mut p = crate::ring_iet::LatticePoint { level, coord };
    let mut word = Vec::with_capacity(ell);
    for _ in 0..ell {
        let (next, slit) = iet.advance(p, true).ok()?;
        word.push(slit);
        p = next;
    }
    Some(word)
}

/// Itinerary of a one-sided limit point.
pub fn one_sided_itinerary(stair: &Staircase<Rational>, start: SectionPoint<Rational>, side: Side, ell: usize) -> Vec<Slit> {
    let mut p = start;
    let mut word = Vec::with_capacity(ell);
    for _ in 0..ell {
        let (next, slit) = stair.step_one_sided(&p, side);
        word.push(slit);
        p = next;
    }
    word
}

/// A saddle connection of combinatorial length `steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaddleWitness {
    pub start_level: i64,
    pub start: Singularity,
    pub steps: usize,
    pub end_level: i64,
    pub end: Singularity,
}

/// Follows every outgoing singular point (where the inverse map is singular)
/// forward for up to `ℓ` steps and reports the first one that reaches a cut.
pub fn detect_saddle(stair: &Staircase<Rational>, n: i64, ell: usize) -> Result<Option<SaddleWitness>, SingularError> {
    check_band(n)?;
    let (lo, hi) = (-n + 1, n);
    let reversed = stair.reversed();
    let starts: Vec<(i64, Singularity, Rational)> = (lo..=hi)
        .flat_map(|k| reversed.singular_points(k).into_iter().map(move |(tag, x)| (k, tag, x)))
        .collect();
    let found: Vec<Option<SaddleWitness>> = starts
        .into_par_iter()
        .map(|(k, tag, x)| {
            let mut p = SectionPoint { level: k, x };
            for i in 1..=ell {
                match stair.step(&p) {
                    StepOutcome::Moved { to, .. } => {
                        if to.level < lo || to.level > hi {
                            return None;
                        }
                        p = to;
                    }
                    StepOutcome::SingularHit { level, singularity, .. } => {
                        return Some(SaddleWitness { start_level: k, start: tag, steps: i, end_level: level, end: singularity });
                    }
                }
            }
            None
        })
        .collect();
    Ok(found.into_iter().flatten().min_by_key(|w| w.steps))
}

/// Closest pair between backward orbits of incoming cuts and forward orbits of
/// outgoing ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub iota: Rational,
    pub level: i64,
    pub incoming: Rational,
    pub outgoing: Rational,
}

impl Separation {
    /// A zero separation means some orbit joins two cone points.
    pub fn is_saddle_evidence(&self) -> bool {
        self.iota.is_zero()
    }
}

/// `ι`: the least distance, level by level, between `T^{-j} Σ` and `T^{j} Σ⁻`
/// for `0 <= j <= ℓ`.
pub fn separation_iota(stair: &Staircase<Rational>, n: i64, ell: usize) -> Result<Separation, SingularError> {
    let incoming = continuity_partition(stair, n, ell)?;
    let outgoing = continuity_partition(&stair.reversed(), n, ell)?;
    let mut best: Option<Separation> = None;
    for (level, cuts) in &incoming.cuts {
        let mut merged: Vec<(Rational, bool)> = cuts.iter().map(|c| (c.x.clone(), true)).collect();
        if let Some(out) = outgoing.cuts.get(level) {
            merged.extend(out.iter().map(|c| (c.x.clone(), false)));
        }
        merged.sort();
        let m = merged.len();
        for i in 0..m {
            let (a, a_in) = &merged[i];
            let (b, b_in) = &merged[(i + 1) % m];
            if a_in == b_in {
                continue;
            }
            let d = circle_distance(a, b);
            if best.as_ref().is_none_or(|s| d < s.iota) {
                let (inc, out) = if *a_in { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                best = Some(Separation { iota: d, level: *level, incoming: inc, outgoing: out });
            }
        }
    }
    Ok(best.unwrap_or(Separation { iota: two(), level: -n + 1, incoming: Rational::zero(), outgoing: Rational::zero() }))
}

/// One affine piece of the matching: the arc `source` of the perturbed
/// partition is sent onto the arc `target` of the ringed one.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedPair {
    pub level: i64,
    pub source: Interval,
    pub target: Interval,
}

impl MatchedPair {
    pub fn apply(&self, x: &Rational) -> Rational {
        let offset = (x - &self.source.left).modulo(&two());
        let scaled = offset * &self.target.length / &self.source.length;
        (&self.target.left + scaled).modulo(&two())
    }

    pub fn displacement(&self) -> Rational {
        Rational::max_of(
            circle_distance(&self.source.left, &self.target.left),
            circle_distance(&self.source.right(), &self.target.right()),
        )
    }
}

/// Piecewise affine, injective, order-preserving map from the arcs of the
/// perturbed partition to the arcs of the ringed one. Arcs born from split
/// blocking points are left out of the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingMap {
    pub pairs: Vec<MatchedPair>,
    pub new_intervals: Vec<Interval>,
    /// `sup |ζ - id|` over the domain.
    pub sup_displacement: Rational,
}

impl MatchingMap {
    pub fn excluded_measure(&self) -> Rational {
        self.new_intervals.iter().fold(Rational::zero(), |acc, iv| acc + &iv.length)
    }

    pub fn max_new_width(&self) -> Rational {
        self.new_intervals.iter().map(|iv| iv.length.clone()).max().unwrap_or_else(Rational::zero)
    }

    /// `ζ(level, x)`, or `None` off the domain.
    pub fn apply(&self, level: i64, x: &Rational) -> Option<Rational> {
        self.pairs
            .iter()
            .find(|p| p.level == level && p.source.contains(x))
            .map(|p| p.apply(x))
    }
}

/// Matches the arcs of the `ℓ`-partition for `w` to those for `w_ringed` by
/// cut identity. Both use the direction `d`.
pub fn zeta_map(
    w_ringed: &WidthSequence<Rational>,
    w: &WidthSequence<Rational>,
    d: &Direction<Rational>,
    n: i64,
    ell: usize,
) -> Result<MatchingMap, SingularError> {
    let ring = continuity_partition(&Staircase::new(w_ringed.clone(), d.clone()), n, ell)?;
    let pert = continuity_partition(&Staircase::new(w.clone(), d.clone()), n, ell)?;
    match_partitions(&ring, &pert)
}

/// Pairs arcs of `pert` with arcs of `ring` sharing their end identities.
pub fn match_partitions(ring: &ContinuityPartition, pert: &ContinuityPartition) -> Result<MatchingMap, SingularError> {
    let mut pairs = Vec::new();
    let mut new_intervals = Vec::new();
    for (level, ring_cuts) in &ring.cuts {
        let ring_ivs = level_intervals(*level, ring_cuts);
        let pert_ivs = level_intervals(*level, pert.cuts.get(level).map(Vec::as_slice).unwrap_or(&[]));
        let mut used = vec![false; pert_ivs.len()];
        for target in ring_ivs {
            let candidates: Vec<usize> = pert_ivs
                .iter()
                .enumerate()
                .filter(|(_, iv)| {
                    !iv.left_ids.is_disjoint(&target.left_ids) && !iv.right_ids.is_disjoint(&target.right_ids)
                })
                .map(|(i, _)| i)
                .collect();
            let [i] = candidates[..] else {
                return Err(SingularError::MatchFailed {
                    level: *level,
                    reason: format!("{} candidates for the arc at {}", candidates.len(), target.left),
                });
            };
            if used[i] {
                return Err(SingularError::MatchFailed { level: *level, reason: "arc matched twice".into() });
            }
            used[i] = true;
            pairs.push(MatchedPair { level: *level, source: pert_ivs[i].clone(), target });
        }
        for (i, iv) in pert_ivs.into_iter().enumerate() {
            if used[i] {
                continue;
            }
            let born = ring_cuts
                .iter()
                .any(|c| iv.left_ids.is_subset(&c.ids) && iv.right_ids.is_subset(&c.ids));
            if !born {
                return Err(SingularError::MatchFailed {
                    level: *level,
                    reason: format!("unmatched arc at {} of length {}", iv.left, iv.length),
                });
            }
            new_intervals.push(iv);
        }
    }
    let sup_displacement = pairs.iter().map(MatchedPair::displacement).max().unwrap_or_else(Rational::zero);
    Ok(MatchingMap { pairs, new_intervals, sup_displacement })
}

/// The ring `w_ringed` with `w_{±N}` raised to `epsilon`.
pub fn open_ring(w_ringed: &WidthSequence<Rational>, n: i64, epsilon: &Rational) -> WidthSequence<Rational> {
    w_ringed
        .with_width(n, epsilon.clone())
        .and_then(|w| w.with_width(-n, epsilon.clone()))
        .expect("epsilon in [0, 1] and a non-periodic ring")
}

/// `sup_{|j| <= N} |w_j - w'_j|`.
pub fn parameter_distance(a: &WidthSequence<Rational>, b: &WidthSequence<Rational>, n: i64) -> Rational {
    a.distance_on(b, -n, n)
}

/// Least inner width distance to `{0, 1}` of a ring: the largest admissible
/// perturbation radius.
pub fn inner_margin(w_ringed: &WidthSequence<Rational>, n: i64) -> Rational {
    (-n + 1..n)
        .map(|j| {
            let w = w_ringed.width(j);
            let other = Rational::one() - w.clone();
            Rational::min_of(w, other)
        })
        .min()
        .unwrap_or_else(Rational::one)
}
