//! Test functions on ring bands, Hopf ratio averages, and the checks built on
//! them.
//!
//! Orbit sums are accumulated in `f64` in orbit order, so a run is
//! reproducible bit for bit.

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ring_iet::RingIet;
use crate::scalar::{self, Scalar};
use crate::section::{SectionSystem, Transition};
use crate::singular::{self, ContinuityPartition, MatchingMap, SingularError};
use crate::staircase::{Direction, SectionPoint, Staircase, VerticalSign, WidthSequence};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("denominator orbit sum vanishes at ell = {0}")]
    DenominatorZero(usize),
    #[error("orbit from grid point {index} stops after {steps} steps")]
    SingularOrbit { index: usize, steps: usize },
    #[error("direction carries a saddle connection of length {0}")]
    SaddleDirection(usize),
    #[error("test function parameter: {0}")]
    BadFunction(String),
    #[error(transparent)]
    Singular(#[from] SingularError),
}

/// Piecewise linear periodic profile on `[0, 2)` with nodes at `2i / 2^depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    depth: u32,
    nodes: Vec<Rational>,
    cache: Vec<f64>,
}

impl Profile {
    pub fn new(depth: u32, nodes: Vec<Rational>) -> Result<Self, ObservableError> {
        if nodes.len() != 1usize << depth {
            return Err(ObservableError::BadFunction(format!("{} nodes at depth {depth}", nodes.len())));
        }
        if nodes.iter().any(Signed::is_negative) {
            return Err(ObservableError::BadFunction("negative node value".into()));
        }
        let cache = nodes.iter().map(Scalar::to_f64).collect();
        Ok(Profile { depth, nodes, cache })
    }

    /// Unit tent at node `i`.
    pub fn tent(depth: u32, i: usize) -> Result<Self, ObservableError> {
        let mut nodes = vec![Rational::zero(); 1usize << depth];
        let slot = nodes
            .get_mut(i)
            .ok_or_else(|| ObservableError::BadFunction(format!("node {i} at depth {depth}")))?;
        *slot = Rational::one();
        Self::new(depth, nodes)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn nodes(&self) -> &[Rational] {
        &self.nodes
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.cache.len();
        if n == 1 {
            return self.cache[0];
        }
        let t = x * (n as f64) * 0.5;
        let i = (t.floor() as usize).min(n - 1);
        let frac = t - i as f64;
        let a = self.cache[i];
        let b = self.cache[(i + 1) % n];
        a + (b - a) * frac
    }

    pub fn eval_exact(&self, x: &Rational) -> Rational {
        let n = self.nodes.len();
        let t = x.modulo(&Rational::from_ratio(2, 1)) * Rational::from_integer(BigInt::from(n)) / Rational::from_ratio(2, 1);
        let i = num_traits::ToPrimitive::to_usize(&t.floor().to_integer()).expect("in range") % n;
        let frac = &t - Rational::from_integer(BigInt::from(i));
        let a = &self.nodes[i];
        let b = &self.nodes[(i + 1) % n];
        a + (b - a) * frac
    }

    /// `∫_0^2`; exact because the trapezoid rule is exact on each linear piece.
    pub fn integral(&self) -> Rational {
        let n = self.nodes.len() as i64;
        self.nodes.iter().fold(Rational::zero(), |acc, v| acc + v) * Rational::from_ratio(2, n)
    }

    fn scaled(&self, c: &Rational) -> Self {
        Self::new(self.depth, self.nodes.iter().map(|v| v * c).collect()).expect("same shape")
    }
}

/// A non-negative continuous function on the band `lo..=hi`: a floor plus a
/// profile on some levels. Zero off the band.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    lo: i64,
    hi: i64,
    floor: Rational,
    floor_f64: f64,
    profiles: Vec<Option<Profile>>,
}

impl TestFunction {
    pub fn new(n: i64, floor: Rational, profiles: BTreeMap<i64, Profile>) -> Result<Self, ObservableError> {
        if n < 1 {
            return Err(ObservableError::BadFunction(format!("band size {n}")));
        }
        if floor.is_negative() {
            return Err(ObservableError::BadFunction("negative floor".into()));
        }
        let (lo, hi) = (-n + 1, n);
        let mut slots = vec![None; (hi - lo + 1) as usize];
        for (level, p) in profiles {
            if level < lo || level > hi {
                return Err(ObservableError::BadFunction(format!("level {level} outside the band")));
            }
            slots[(level - lo) as usize] = Some(p);
        }
        Ok(TestFunction { lo, hi, floor_f64: floor.to_f64(), floor, profiles: slots })
    }

    /// `c` on every level of the band.
    pub fn constant(n: i64, c: Rational) -> Result<Self, ObservableError> {
        Self::new(n, c, BTreeMap::new())
    }

    /// Floor `2^{-q}` plus a unit tent at node `i` of level `level`.
    pub fn tent(n: i64, level: i64, depth: u32, i: usize, q: u32) -> Result<Self, ObservableError> {
        let profiles = BTreeMap::from([(level, Profile::tent(depth, i)?)]);
        Self::new(n, floor_of(q), profiles)
    }

    /// `j`-th member of the family: `j = 0` is the constant `1`, then tents
    /// enumerated by depth, then level, then node, each over the floor `2^{-q}`.
    pub fn family(n: i64, j: usize, q: u32) -> Result<Self, ObservableError> {
        if j == 0 {
            return Self::constant(n, Rational::one());
        }
        let levels = (2 * n) as usize;
        let mut rest = j - 1;
        let mut depth = 0u32;
        loop {
            let block = levels << depth;
            if rest < block {
                let per_level = 1usize << depth;
                let level = -n + 1 + (rest / per_level) as i64;
                return Self::tent(n, level, depth, rest % per_level, q);
            }
            rest -= block;
            depth += 1;
            if depth > 40 {
                return Err(ObservableError::BadFunction(format!("family index {j}")));
            }
        }
    }

    pub fn band(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn floor(&self) -> &Rational {
        &self.floor
    }

    pub fn scaled(&self, c: &Rational) -> Self {
        TestFunction {
            lo: self.lo,
            hi: self.hi,
            floor: &self.floor * c,
            floor_f64: (&self.floor * c).to_f64(),
            profiles: self.profiles.iter().map(|p| p.as_ref().map(|p| p.scaled(c))).collect(),
        }
    }

    #[inline]
    pub fn eval(&self, level: i64, x: f64) -> f64 {
        if level < self.lo || level > self.hi {
            return 0.0;
        }
        match &self.profiles[(level - self.lo) as usize] {
            Some(p) => self.floor_f64 + p.eval(x),
            None => self.floor_f64,
        }
    }

    pub fn eval_exact(&self, level: i64, x: &Rational) -> Rational {
        if level < self.lo || level > self.hi {
            return Rational::zero();
        }
        match &self.profiles[(level - self.lo) as usize] {
            Some(p) => &self.floor + p.eval_exact(x),
            None => self.floor.clone(),
        }
    }

    /// `∫ h dμ` over the band.
    pub fn integral(&self) -> Rational {
        let levels = Rational::from_integer(BigInt::from(self.hi - self.lo + 1));
        let floors = &self.floor * Rational::from_ratio(2, 1) * levels;
        self.profiles.iter().flatten().fold(floors, |acc, p| acc + p.integral())
    }
}

fn floor_of(q: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << q)
}

/// Exact `∫h_j / ∫h_n`.
pub fn target_ratio(h_j: &TestFunction, h_n: &TestFunction) -> Result<Rational, ObservableError> {
    let den = h_n.integral();
    if den.is_zero() {
        return Err(ObservableError::BadFunction("denominator integrates to zero".into()));
    }
    Ok(h_j.integral() / den)
}

/// `100, 1000, ...` below `ell`, then `ell`.
pub fn checkpoints(ell: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = 100usize;
    while c < ell {
        out.push(c);
        c = c.saturating_mul(10);
    }
    out.push(ell);
    out
}

/// Orbit sums `Σ_{k=0}^{c} h(T^k z)` for each function, at each checkpoint `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSums {
    pub rows: Vec<(usize, Vec<f64>)>,
    /// Steps completed before the map became undefined, if it did.
    pub stopped_after: Option<usize>,
}

/// Accumulates every function along one orbit. `checkpoints` must increase.
pub fn orbit_sums<Sys>(
    sys: &Sys,
    functions: &[&TestFunction],
    z: &Sys::Point,
    sign: VerticalSign,
    checkpoints: &[usize],
) -> OrbitSums
where
    Sys: SectionSystem<Component = i64>,
{
    let mut sums = vec![0.0f64; functions.len()];
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut next = 0usize;
    let mut p = z.clone();
    let last = checkpoints.last().copied().unwrap_or(0);
    let mut k = 0usize;
    loop {
        let level = sys.component(&p);
        let x = sys.coordinate_f64(&p);
        for (s, h) in sums.iter_mut().zip(functions) {
            *s += h.eval(level, x);
        }
        while next < checkpoints.len() && checkpoints[next] == k {
            rows.push((k, sums.clone()));
            next += 1;
        }
        if k >= last {
            return OrbitSums { rows, stopped_after: None };
        }
        match sys.step(&p, sign) {
            Transition::Moved { to, .. } => p = to,
            Transition::Stopped(_) => return OrbitSums { rows, stopped_after: Some(k) },
        }
        k += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub ell: usize,
    pub num: f64,
    pub den: f64,
    pub ratio: f64,
    pub target: f64,
    pub abs_dev: f64,
}

/// Hopf ratio averages of one orbit at a list of horizons.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
    pub target: Rational,
    pub sign: VerticalSign,
    pub stopped_after: Option<usize>,
}

impl RatioReport {
    pub fn from_sums(
        sums: &OrbitSums,
        num: usize,
        den: usize,
        target: Rational,
        sign: VerticalSign,
    ) -> Result<Self, ObservableError> {
        let t = target.to_f64();
        let mut rows = Vec::with_capacity(sums.rows.len());
        for (ell, s) in &sums.rows {
            if s[den] == 0.0 {
                continue;
            }
            let ratio = s[num] / s[den];
            rows.push(RatioRow { ell: *ell, num: s[num], den: s[den], ratio, target: t, abs_dev: (ratio - t).abs() });
        }
        if rows.last().map(|r| r.ell) != sums.rows.last().map(|(ell, _)| *ell) || rows.is_empty() {
            let at = sums.rows.last().map(|(ell, _)| *ell).or(sums.stopped_after).unwrap_or(0);
            return Err(ObservableError::DenominatorZero(at));
        }
        Ok(RatioReport { rows, target, sign, stopped_after: sums.stopped_after })
    }

    pub fn last(&self) -> &RatioRow {
        self.rows.last().expect("non-empty by construction")
    }

    /// `|H - target| / target` at the last horizon.
    pub fn relative_deviation(&self) -> f64 {
        let r = self.last();
        r.abs_dev / r.target.abs()
    }

    /// CSV: `ell,num,den,ratio,target,abs_dev`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "ell,num,den,ratio,target,abs_dev")?;
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?},{:?},{:?},{:?}", r.ell, r.num, r.den, r.ratio, r.target, r.abs_dev)?;
        }
        Ok(())
    }
}

/// `H_{j,n,ℓ}(z)` at the standard checkpoints up to `ell`.
pub fn hopf_average<Sys>(
    sys: &Sys,
    h_j: &TestFunction,
    h_n: &TestFunction,
    z: &Sys::Point,
    ell: usize,
    sign: VerticalSign,
) -> Result<RatioReport, ObservableError>
where
    Sys: SectionSystem<Component = i64>,
{
    let sums = orbit_sums(sys, &[h_j, h_n], z, sign, &checkpoints(ell));
    RatioReport::from_sums(&sums, 0, 1, target_ratio(h_j, h_n)?, sign)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformRow {
    pub ell: usize,
    pub sup_dev: f64,
}

/// `sup_z |H_{j,n,ℓ}(z) - target|` over a grid, for each `ℓ` in `ells`.
pub fn uniform_hopf_profile<Sys>(
    sys: &Sys,
    h_j: &TestFunction,
    h_n: &TestFunction,
    ells: &[usize],
    grid: &[Sys::Point],
) -> Result<Vec<UniformRow>, ObservableError>
where
    Sys: SectionSystem<Component = i64>,
{
    let target = target_ratio(h_j, h_n)?.to_f64();
    let mut marks: Vec<usize> = ells.to_vec();
    marks.sort_unstable();
    marks.dedup();
    let per_point: Vec<Result<Vec<f64>, ObservableError>> = grid
        .par_iter()
        .enumerate()
        .map(|(index, z)| {
            let sums = orbit_sums(sys, &[h_j, h_n], z, VerticalSign::Up, &marks);
            if let Some(steps) = sums.stopped_after {
                return Err(ObservableError::SingularOrbit { index, steps });
            }
            sums.rows
                .iter()
                .map(|(ell, s)| {
                    if s[1] == 0.0 {
                        Err(ObservableError::DenominatorZero(*ell))
                    } else {
                        Ok((s[0] / s[1] - target).abs())
                    }
                })
                .collect()
        })
        .collect();
    let mut sup = vec![0.0f64; marks.len()];
    for devs in per_point {
        for (s, d) in sup.iter_mut().zip(devs?) {
            *s = s.max(d);
        }
    }
    Ok(marks.into_iter().zip(sup).map(|(ell, sup_dev)| UniformRow { ell, sup_dev }).collect())
}

/// Refuses directions with a saddle connection of length at most `ell`.
pub fn saddle_gate(stair: &Staircase<Rational>, n: i64, ell: usize) -> Result<(), ObservableError> {
    match singular::detect_saddle(stair, n, ell)? {
        Some(w) => Err(ObservableError::SaddleDirection(w.steps)),
        None => Ok(()),
    }
}

/// Evenly spaced grid of odd points of the doubled lattice on each level of
/// a closed band: none of them ever meets a cut.
pub fn regular_grid(iet: &RingIet, per_level: usize) -> Vec<crate::ring_iet::LatticePoint> {
    let n = iet.circumference();
    let per_level = per_level.max(1) as i64;
    let mut out = Vec::new();
    for level in iet.levels() {
        for i in 0..per_level {
            let mut coord = (n * i) / per_level;
            if coord % 2 == 0 {
                coord += 1;
            }
            out.push(crate::ring_iet::LatticePoint { level, coord: coord % n });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ForwardOk,
    BackwardOk,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionReport {
    pub verdicts: Vec<Verdict>,
    pub tolerance: f64,
    pub ell: usize,
}

impl CriterionReport {
    pub fn passing_fraction(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 1.0;
        }
        let ok = self.verdicts.iter().filter(|v| **v != Verdict::Fail).count();
        ok as f64 / self.verdicts.len() as f64
    }

    /// Every sampled point passes in at least one time direction.
    pub fn certified(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| *v != Verdict::Fail)
    }
}

/// For each sampled point: do forward (else backward) Hopf averages of every
/// pair land within relative `tol` of the Lebesgue ratio at horizon `ell`?
pub fn uniqueness_criterion_check<Sys>(
    sys: &Sys,
    pairs: &[(TestFunction, TestFunction)],
    sample: &[Sys::Point],
    ell: usize,
    tol: f64,
) -> Result<CriterionReport, ObservableError>
where
    Sys: SectionSystem<Component = i64>,
{
    let targets: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| target_ratio(a, b).map(|t| t.to_f64()))
        .collect::<Result<_, _>>()?;
    let mut functions: Vec<&TestFunction> = Vec::with_capacity(2 * pairs.len());
    for (a, b) in pairs {
        functions.push(a);
        functions.push(b);
    }
    let passes = |sign: VerticalSign, z: &Sys::Point| -> bool {
        let sums = orbit_sums(sys, &functions, z, sign, &[ell]);
        let Some((_, s)) = sums.rows.last() else { return false };
        targets.iter().enumerate().all(|(i, t)| {
            let den = s[2 * i + 1];
            den > 0.0 && ((s[2 * i] / den - t) / t).abs() <= tol
        })
    };
    let verdicts = sample
        .par_iter()
        .map(|z| {
            if passes(VerticalSign::Up, z) {
                Verdict::ForwardOk
            } else if passes(VerticalSign::Down, z) {
                Verdict::BackwardOk
            } else {
                Verdict::Fail
            }
        })
        .collect();
    Ok(CriterionReport { verdicts, tolerance: tol, ell })
}

/// One of the four scale conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleCheck {
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ScaleCheck {
    fn below(value: f64, threshold: f64) -> Self {
        ScaleCheck { value, threshold, pass: value < threshold }
    }

    fn above(value: f64, threshold: f64) -> Self {
        ScaleCheck { value, threshold, pass: value > threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    #[serde(with = "scalar::as_rational_string")]
    pub slope: Rational,
    /// Perturbation radius against the inner-width margin of the ring.
    pub a0: ScaleCheck,
    /// Shortest matched arc against half the ring's shortest arc.
    pub a1: ScaleCheck,
    /// Forward Hopf transport error against `gamma`.
    pub a2_forward: ScaleCheck,
    pub a2_backward: ScaleCheck,
    /// Separation against half the ring's separation.
    pub a3: ScaleCheck,
    /// Smallest `gamma` for which both transport checks would pass.
    pub minimal_gamma: f64,
    pub new_intervals: usize,
}

impl GenericityReport {
    pub fn all_pass(&self) -> bool {
        self.a0.pass && self.a1.pass && self.a2_forward.pass && self.a2_backward.pass && self.a3.pass
    }
}

/// Checks the four scale conditions for `w` against the ring `w_ringed` in
/// each direction of `directions`.
#[allow(clippy::too_many_arguments)]
pub fn genericity_scale_check(
    w_ringed: &WidthSequence<Rational>,
    w: &WidthSequence<Rational>,
    directions: &[Direction<Rational>],
    n: i64,
    ell: usize,
    gamma: f64,
    h_j: &TestFunction,
    h_n: &TestFunction,
) -> Result<Vec<GenericityReport>, ObservableError> {
    let radius = singular::parameter_distance(w_ringed, w, n).to_f64();
    let margin = singular::inner_margin(w_ringed, n).to_f64();
    directions
        .par_iter()
        .map(|d| {
            let ring = Staircase::new(w_ringed.clone(), d.clone());
            let pert = Staircase::new(w.clone(), d.clone());
            let ring_part = singular::continuity_partition(&ring, n, ell)?;
            let pert_part = singular::continuity_partition(&pert, n, ell)?;
            let zeta = singular::match_partitions(&ring_part, &pert_part)?;
            let eta_ring = ring_part.min_gap().to_f64();
            let eta_pert = zeta.pairs.iter().map(|p| p.source.length.clone()).min().unwrap_or_else(Rational::zero);
            let forward = transport_error(&ring, &pert, &zeta, ell, h_j, h_n)?;
            let ring_back = ring.reversed();
            let pert_back = pert.reversed();
            let zeta_back = singular::match_partitions(
                &singular::continuity_partition(&ring_back, n, ell)?,
                &singular::continuity_partition(&pert_back, n, ell)?,
            )?;
            let backward = transport_error(&ring_back, &pert_back, &zeta_back, ell, h_j, h_n)?;
            let iota_ring = singular::separation_iota(&ring, n, ell)?.iota.to_f64();
            let iota_pert = singular::separation_iota(&pert, n, ell)?.iota.to_f64();
            Ok(GenericityReport {
                slope: d.slope().clone(),
                a0: ScaleCheck::below(radius, margin),
                a1: ScaleCheck::above(eta_pert.to_f64(), eta_ring / 2.0),
                a2_forward: ScaleCheck::below(forward, gamma),
                a2_backward: ScaleCheck::below(backward, gamma),
                a3: ScaleCheck::above(iota_pert, iota_ring / 2.0),
                minimal_gamma: forward.max(backward),
                new_intervals: zeta.new_intervals.len(),
            })
        })
        .collect()
}

/// `max |H^w(z) - H^ring(ζ z)|` over midpoints `z` of the matched arcs.
fn transport_error(
    ring: &Staircase<Rational>,
    pert: &Staircase<Rational>,
    zeta: &MatchingMap,
    ell: usize,
    h_j: &TestFunction,
    h_n: &TestFunction,
) -> Result<f64, ObservableError> {
    let ring_engine = HopfEngine::new(ring, h_j.band().1);
    let pert_engine = HopfEngine::new(pert, h_j.band().1);
    let devs: Vec<Result<f64, ObservableError>> = zeta
        .pairs
        .par_iter()
        .map(|pair| {
            let z = pair.source.midpoint();
            let zz = pair.target.midpoint();
            let a = pert_engine.hopf_last(h_j, h_n, &z, ell)?;
            let b = ring_engine.hopf_last(h_j, h_n, &zz, ell)?;
            Ok((a - b).abs())
        })
        .collect();
    devs.into_iter().try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
}

/// Runs orbit sums on the integer engine when some band around the ring is
/// closed, else on exact rational steps. Starts off the lattice also take
/// the exact path.
pub enum HopfEngine<'a> {
    Lattice(RingIet, &'a Staircase<Rational>),
    Exact(&'a Staircase<Rational>),
}

impl<'a> HopfEngine<'a> {
    pub fn new(stair: &'a Staircase<Rational>, n: i64) -> Self {
        for extra in 0..4 {
            if let Ok(iet) = RingIet::compile(stair, -n + 1 - extra, n + extra, 2) {
                return HopfEngine::Lattice(iet, stair);
            }
        }
        HopfEngine::Exact(stair)
    }

    /// Sums in the staircase's own direction of flow.
    pub fn sums(&self, functions: &[&TestFunction], z: &SectionPoint<Rational>, marks: &[usize]) -> OrbitSums {
        match self {
            HopfEngine::Lattice(iet, stair) => match iet.to_lattice(z) {
                Ok(p) => orbit_sums(iet, functions, &p, VerticalSign::Up, marks),
                Err(_) => orbit_sums(*stair, functions, z, VerticalSign::Up, marks),
            },
            HopfEngine::Exact(stair) => orbit_sums(*stair, functions, z, VerticalSign::Up, marks),
        }
    }

    fn hopf_last(
        &self,
        h_j: &TestFunction,
        h_n: &TestFunction,
        z: &SectionPoint<Rational>,
        ell: usize,
    ) -> Result<f64, ObservableError> {
        let sums = self.sums(&[h_j, h_n], z, &[ell]);
        match sums.rows.last() {
            Some((_, s)) if s[1] > 0.0 => Ok(s[0] / s[1]),
            Some(_) => Err(ObservableError::DenominatorZero(ell)),
            None => Err(ObservableError::SingularOrbit { index: 0, steps: sums.stopped_after.unwrap_or(0) }),
        }
    }
}

/// Continuity partition and its shortest arc, for reports.
pub fn eta(stair: &Staircase<Rational>, n: i64, ell: usize) -> Result<(ContinuityPartition, Rational), ObservableError> {
    let part = singular::continuity_partition(stair, n, ell)?;
    let gap = part.min_gap();
    Ok((part, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::staircase::WidthSequence;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn ring(delta: Rational) -> Staircase<Rational> {
        Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::from_half_step(delta).unwrap())
    }

    #[test]
    fn family_enumeration() {
        let h0 = TestFunction::family(1, 0, 3).unwrap();
        assert_eq!(h0.integral(), q(4, 1));
        // depth 0: one constant tent per level
        let h1 = TestFunction::family(1, 1, 3).unwrap();
        assert_eq!(h1.eval_exact(0, &q(1, 3)), q(9, 8));
        assert_eq!(h1.eval_exact(1, &q(1, 3)), q(1, 8));
        let h3 = TestFunction::family(1, 3, 3).unwrap();
        assert_eq!(h3.eval_exact(0, &q(0, 1)), q(9, 8));
        assert_eq!(h3.eval_exact(0, &q(1, 1)), q(1, 8));
        assert_eq!(h3.eval_exact(0, &q(1, 2)), q(5, 8));
        assert_eq!(h3.eval_exact(0, &q(3, 2)), q(5, 8));
        assert_eq!(h3.eval_exact(3, &q(1, 2)), q(0, 1));
    }

    #[test]
    fn integrals_match_quadrature() {
        for j in 0..20 {
            let h = TestFunction::family(2, j, 2).unwrap();
            let n = 1 << 16;
            let mut acc = 0.0;
            for level in -1..=2 {
                for i in 0..n {
                    let x = 2.0 * (i as f64 + 0.5) / n as f64;
                    acc += h.eval(level, x) * 2.0 / n as f64;
                }
            }
            assert!((acc - h.integral().to_f64()).abs() < 1e-12, "j = {j}");
        }
    }

    #[test]
    fn identical_functions_give_one() {
        let s = ring(q(377, 1220));
        let h = TestFunction::family(1, 5, 3).unwrap();
        let z = SectionPoint::new(0, q(1, 7)).unwrap();
        let rep = hopf_average(&s, &h, &h, &z, 500, VerticalSign::Up).unwrap();
        assert!(rep.rows.iter().all(|r| r.ratio == 1.0));
        assert_eq!(rep.rows.iter().map(|r| r.ell).collect::<Vec<_>>(), vec![100, 500]);
    }

    #[test]
    fn scaling_is_exact() {
        let s = ring(q(377, 1220));
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        let a = TestFunction::family(1, 4, 3).unwrap();
        let b = TestFunction::family(1, 9, 2).unwrap();
        let z = crate::ring_iet::LatticePoint { level: 0, coord: 3 };
        let base = hopf_average(&iet, &a, &b, &z, 5000, VerticalSign::Up).unwrap();
        for c in [q(4, 1), q(1, 8)] {
            let scaled = hopf_average(&iet, &a.scaled(&c), &b.scaled(&c), &z, 5000, VerticalSign::Up).unwrap();
            assert_eq!(
                base.rows.iter().map(|r| r.ratio).collect::<Vec<_>>(),
                scaled.rows.iter().map(|r| r.ratio).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn constant_denominator_is_birkhoff() {
        let s = ring(q(5, 17));
        let h = TestFunction::family(1, 6, 3).unwrap();
        let c = TestFunction::constant(1, q(1, 4)).unwrap();
        let z = SectionPoint::new(1, q(2, 9)).unwrap();
        let rep = hopf_average(&s, &h, &c, &z, 300, VerticalSign::Up).unwrap();
        let mut p = z.clone();
        let mut sum = Rational::zero();
        for _ in 0..=300 {
            sum += h.eval_exact(p.level, &p.x);
            p = s.step(&p).moved().cloned().unwrap();
        }
        let birkhoff = (sum / Rational::from_ratio(301, 1) / q(1, 4)).to_f64();
        assert!((rep.last().ratio - birkhoff).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator() {
        let s = ring(q(5, 17));
        let h = TestFunction::family(1, 6, 3).unwrap();
        let zero = TestFunction::constant(1, q(0, 1)).unwrap();
        let z = SectionPoint::new(1, q(2, 9)).unwrap();
        assert!(matches!(hopf_average(&s, &h, &zero, &z, 10, VerticalSign::Up), Err(ObservableError::BadFunction(_))));
    }

    #[test]
    fn uniform_profile_of_identical_pair() {
        let s = ring(q(377, 1220));
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        let h = TestFunction::family(1, 2, 3).unwrap();
        let rows = uniform_hopf_profile(&iet, &h, &h, &[100, 1000], &regular_grid(&iet, 10)).unwrap();
        assert!(rows.iter().all(|r| r.sup_dev == 0.0));
    }

    #[test]
    fn saddle_gate_rejects_vertical() {
        assert!(matches!(saddle_gate(&ring(q(0, 1)), 1, 10), Err(ObservableError::SaddleDirection(1))));
        assert!(saddle_gate(&ring(q(377, 1220)), 1, 10).is_ok());
    }

    #[test]
    fn empty_pairs_pass() {
        let s = ring(q(377, 1220));
        let iet = RingIet::ring(&s, 1, 2).unwrap();
        let report = uniqueness_criterion_check(&iet, &[], &regular_grid(&iet, 3), 100, 0.05).unwrap();
        assert!(report.certified());
        let none = uniqueness_criterion_check(&iet, &[], &[], 100, 0.05).unwrap();
        assert!(!none.certified());
        assert_eq!(none.passing_fraction(), 1.0);
    }

    #[test]
    fn ring_itself_passes_scale_checks() {
        let w = WidthSequence::ringed(vec![q(1, 2)]).unwrap();
        let d = Direction::from_half_step(q(377, 1220)).unwrap();
        let h_j = TestFunction::family(1, 3, 3).unwrap();
        let h_n = TestFunction::family(1, 0, 3).unwrap();
        let reports = genericity_scale_check(&w, &w, &[d], 1, 20, 1e-9, &h_j, &h_n).unwrap();
        let r = &reports[0];
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.minimal_gamma, 0.0);
        assert_eq!(r.new_intervals, 0);
    }
}
