//! Periodic staircases as skew products over a finite union of circles,
//! conformal measures for the level cocycle, and Maharam measures.

use std::io::Write;
use std::ops::RangeInclusive;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{format_rational, Scalar};
use crate::staircase::{Direction, SectionPoint, Slit, Staircase, StepOutcome, Tail, WidthSequence};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkewError {
    #[error("width sequence is not periodic")]
    NotPeriodic,
    #[error("the two parameters coincide")]
    EqualParameters,
    #[error("refinement of {cells} cells per circle cannot resolve depth {depth}")]
    BadRefinement { cells: usize, depth: u32 },
    #[error("no cell count given")]
    NoCells,
    #[error("solver stopped at residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize, trace: Vec<f64> },
}

/// `χ_a(n) = a n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Homomorphism<S = f64>(pub S);

impl<S: Scalar> Homomorphism<S> {
    pub fn apply(&self, n: i64) -> S {
        self.0.clone() * S::from_i64(n)
    }

    /// `e^{-χ(n)}`.
    pub fn weight(&self, n: i64) -> f64 {
        (-self.apply(n).to_f64()).exp()
    }
}

/// Interval `[left, right)` of one base circle carried by a translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub component: usize,
    pub left: Rational,
    pub right: Rational,
    /// `τ(x) = x + shift mod 2`.
    pub shift: Rational,
    pub target: usize,
    pub slit: Slit,
}

impl Piece {
    pub fn psi(&self) -> i64 {
        self.slit.level_change()
    }
}

/// `T(x, n) = (τ(x), n + ψ(x))` for a `p`-periodic staircase, `x` in one of
/// `p` base circles.
#[derive(Clone, Debug)]
pub struct SkewSystem {
    stair: Staircase<Rational>,
    period: usize,
    pieces: Vec<Piece>,
}

/// Smallest period of `w`, if it has one.
pub fn period_of(w: &WidthSequence<Rational>) -> Option<usize> {
    let tail_value = match w.tail() {
        Tail::Periodic => return Some(w.window().len()),
        Tail::Decay { .. } => return None,
        Tail::Zero => Rational::zero(),
        Tail::Constant { value } => value.clone(),
    };
    w.window().iter().all(|v| *v == tail_value).then_some(1)
}

/// Quotient of the periodic staircase by the level shift.
pub fn quotient_base(w: &WidthSequence<Rational>, d: &Direction<Rational>) -> Result<SkewSystem, SkewError> {
    let period = period_of(w).ok_or(SkewError::NotPeriodic)?;
    let stair = Staircase::new(w.clone(), d.clone());
    let two = Rational::from_ratio(2, 1);
    let mut pieces = Vec::new();
    for comp in 0..period {
        let mut cuts: Vec<Rational> = stair.singular_points(comp as i64).into_iter().map(|(_, x)| x).collect();
        cuts.push(Rational::zero());
        cuts.sort();
        cuts.dedup();
        cuts.push(two.clone());
        for pair in cuts.windows(2) {
            let mid = (&pair[0] + &pair[1]) / Rational::from_ratio(2, 1);
            let StepOutcome::Moved { to, slit } = stair.step(&SectionPoint::wrapped(comp as i64, mid.clone())) else {
                unreachable!("midpoints between cuts are regular")
            };
            pieces.push(Piece {
                component: comp,
                left: pair[0].clone(),
                right: pair[1].clone(),
                shift: (&to.x - &mid).modulo(&two),
                target: to.level.rem_euclid(period as i64) as usize,
                slit,
            });
        }
    }
    Ok(SkewSystem { stair, period, pieces })
}

impl SkewSystem {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn staircase(&self) -> &Staircase<Rational> {
        &self.stair
    }

    /// Circular runs of constant `ψ` on one circle, as `(length, ψ)`.
    pub fn psi_arcs(&self, component: usize) -> Vec<(Rational, i64)> {
        let mut runs: Vec<(Rational, i64)> = Vec::new();
        for p in self.pieces.iter().filter(|p| p.component == component) {
            let len = &p.right - &p.left;
            match runs.last_mut() {
                Some((l, psi)) if *psi == p.psi() => *l += len,
                _ => runs.push((len, p.psi())),
            }
        }
        if runs.len() > 1 && runs[0].1 == runs[runs.len() - 1].1 {
            let (l, _) = runs.pop().expect("non-empty");
            runs[0].0 += l;
        }
        // start the listing at the descending arc when there is one
        if let Some(i) = runs.iter().position(|r| r.1 == -1) {
            runs.rotate_left(i);
        }
        runs
    }

    /// Base map `τ` and cocycle value on one point; `None` on a singularity.
    pub fn base_step(&self, component: usize, x: &Rational) -> Option<(usize, Rational, i64)> {
        match self.stair.step(&SectionPoint::wrapped(component as i64, x.clone())) {
            StepOutcome::Moved { to, slit } => {
                Some((to.level.rem_euclid(self.period as i64) as usize, to.x, slit.level_change()))
            }
            StepOutcome::SingularHit { .. } => None,
        }
    }

    /// `T((c, x), n)`.
    pub fn step(&self, component: usize, x: &Rational, fiber: i64) -> Option<(usize, Rational, i64)> {
        self.base_step(component, x).map(|(c, y, psi)| (c, y, fiber + psi))
    }

    /// Mass transfer of `τ` between the cells of a uniform refinement.
    pub fn transfer(&self, cells: usize) -> Result<Transfer, SkewError> {
        if cells == 0 {
            return Err(SkewError::NoCells);
        }
        let two = Rational::from_ratio(2, 1);
        let h = Rational::from_ratio(2, cells as i64);
        let mut entries = Vec::new();
        for comp in 0..self.period {
            let comp_pieces: Vec<&Piece> = self.pieces.iter().filter(|p| p.component == comp).collect();
            for c in 0..cells {
                let lo = &h * Rational::from_integer(c.into());
                let hi = &lo + &h;
                for p in &comp_pieces {
                    let a = lo.clone().max(p.left.clone());
                    let b = hi.clone().min(p.right.clone());
                    if a >= b {
                        continue;
                    }
                    let ia = (&a + &p.shift).modulo(&two);
                    let len = &b - &a;
                    spread(&mut entries, comp * cells + c, p, ia, len, &h, cells);
                }
            }
        }
        Ok(Transfer { cells, period: self.period, entries })
    }
}

/// Splits the image arc `[start, start + len)` of the target circle over cells.
fn spread(out: &mut Vec<Entry>, source: usize, p: &Piece, start: Rational, len: Rational, h: &Rational, cells: usize) {
    let two = Rational::from_ratio(2, 1);
    let mut pos = start;
    let mut left = len;
    while left.is_positive() {
        let cell = num_traits::ToPrimitive::to_usize(&(&pos / h).floor().to_integer()).expect("on circle") % cells;
        let cell_end = h * Rational::from_integer((cell + 1).into());
        let take = (&cell_end - &pos).min(left.clone());
        let frac = &take / h;
        out.push(Entry { source, target: p.target * cells + cell, frac_exact: frac.clone(), frac: frac.to_f64(), psi: p.psi() });
        left -= &take;
        pos = (&pos + &take).modulo(&two);
    }
}

/// One block of mass: `frac` of `source` lands in `target`, crossing with `psi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub source: usize,
    pub target: usize,
    pub frac_exact: Rational,
    pub frac: f64,
    pub psi: i64,
}

#[derive(Clone, Debug)]
pub struct Transfer {
    cells: usize,
    period: usize,
    entries: Vec<Entry>,
}

impl Transfer {
    pub fn len(&self) -> usize {
        self.cells * self.period
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// `Some(image)` when `τ` maps cells onto cells.
    pub fn permutation(&self) -> Option<(Vec<usize>, Vec<i64>)> {
        let mut image = vec![usize::MAX; self.len()];
        let mut psi = vec![0; self.len()];
        let mut hit = vec![false; self.len()];
        for e in &self.entries {
            if !e.frac_exact.is_one() || image[e.source] != usize::MAX || hit[e.target] {
                return None;
            }
            image[e.source] = e.target;
            psi[e.source] = e.psi;
            hit[e.target] = true;
        }
        Some((image, psi))
    }

    /// `(L μ)_t = Σ_s e^{aψ} frac μ_s`.
    pub fn apply(&self, a: f64, masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; masses.len()];
        for e in &self.entries {
            out[e.target] += e.frac * (a * e.psi as f64).exp() * masses[e.source];
        }
        out
    }

    /// `max_t |(L μ)_t − μ_t|`.
    pub fn residual(&self, a: f64, masses: &[f64]) -> f64 {
        self.apply(a, masses).iter().zip(masses).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Piecewise constant probability measure on the base, quasi-invariant with
/// derivative `e^{aψ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalMeasure {
    pub a: f64,
    pub cells: usize,
    pub period: usize,
    /// Mass per cell, circle by circle.
    pub masses: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl ConformalMeasure {
    pub fn cell_width(&self) -> Rational {
        Rational::from_ratio(2, self.cells as i64)
    }

    /// Density with respect to length on each cell.
    pub fn density(&self, index: usize) -> f64 {
        self.masses[index] * self.cells as f64 / 2.0
    }

    /// Density of `x ↦ 2 − x` applied cellwise on each circle.
    pub fn reflected(&self) -> Vec<f64> {
        let n = self.cells;
        (0..self.masses.len())
            .map(|i| {
                let (comp, c) = (i / n, i % n);
                self.density(comp * n + (n - 1 - c))
            })
            .collect()
    }

    /// CSV: `base,cell_left,cell_right,density`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "base,cell_left,cell_right,density")?;
        let h = self.cell_width();
        for i in 0..self.masses.len() {
            let (comp, c) = (i / self.cells, i % self.cells);
            let left = &h * Rational::from_integer(c.into());
            let right = &left + &h;
            writeln!(out, "{comp},{},{},{:?}", format_rational(&left), format_rational(&right), self.density(i))?;
        }
        Ok(())
    }
}

/// Conformal measure on `cells` cells per circle. When `τ` permutes the cells
/// the solution is built cycle by cycle (cycles whose `ψ` drift is nonzero
/// carry no mass, each other cycle carries mass in proportion to its length);
/// otherwise a damped normalized iteration of the transfer operator runs.
pub fn solve_conformal(
    skew: &SkewSystem,
    a: f64,
    cells: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ConformalMeasure, SkewError> {
    let transfer = skew.transfer(cells)?;
    let total = transfer.len();
    if a == 0.0 {
        let masses = vec![1.0 / total as f64; total];
        let residual = exact_uniform_residual(&transfer);
        return Ok(ConformalMeasure { a, cells, period: skew.period, masses, residual, iterations: 0 });
    }
    if let Some((image, psi)) = transfer.permutation() {
        let masses = cycle_masses(&image, &psi, a);
        if masses.iter().all(|m| *m == 0.0) {
            return Err(SkewError::NonConvergence { residual: f64::INFINITY, iterations: 0, trace: Vec::new() });
        }
        let residual = transfer.residual(a, &masses);
        return Ok(ConformalMeasure { a, cells, period: skew.period, masses, residual, iterations: 0 });
    }
    let mut masses = vec![1.0 / total as f64; total];
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let image = transfer.apply(a, &masses);
        let mut next: Vec<f64> = masses.iter().zip(&image).map(|(m, l)| 0.5 * (m + l)).collect();
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|m| *m /= sum);
        masses = next;
        let residual = transfer.residual(a, &masses);
        trace.push(residual);
        if residual <= tol {
            return Ok(ConformalMeasure { a, cells, period: skew.period, masses, residual, iterations: it });
        }
    }
    Err(SkewError::NonConvergence { residual: trace.last().copied().unwrap_or(f64::INFINITY), iterations: max_iter, trace })
}

/// Length is `τ`-invariant, so uniform mass leaves a zero residual; computed
/// over the exact fractions.
fn exact_uniform_residual(transfer: &Transfer) -> f64 {
    let mut inflow = vec![Rational::zero(); transfer.len()];
    for e in &transfer.entries {
        inflow[e.target] += &e.frac_exact;
    }
    let worst = inflow.iter().map(|f| (f - Rational::one()).abs()).max().unwrap_or_else(Rational::zero);
    worst.to_f64() / transfer.len() as f64
}

fn cycle_masses(image: &[usize], psi: &[i64], a: f64) -> Vec<f64> {
    let mut masses = vec![0.0; image.len()];
    let mut seen = vec![false; image.len()];
    for start in 0..image.len() {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut sums = Vec::new();
        let (mut c, mut s) = (start, 0i64);
        while !seen[c] {
            seen[c] = true;
            cycle.push(c);
            sums.push(s);
            s += psi[c];
            c = image[c];
        }
        if s != 0 {
            continue;
        }
        let weights: Vec<f64> = sums.iter().map(|k| (a * *k as f64).exp()).collect();
        let norm = cycle.len() as f64 / weights.iter().sum::<f64>();
        for (c, w) in cycle.iter().zip(weights) {
            masses[*c] = w * norm;
        }
    }
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter_mut().for_each(|m| *m /= total);
    }
    masses
}

/// `dm(x, n) = scale · e^{−a n} dμ_a(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaharamMeasure {
    pub conformal: ConformalMeasure,
    pub scale: f64,
}

impl MaharamMeasure {
    pub fn new(conformal: ConformalMeasure) -> Self {
        MaharamMeasure { conformal, scale: 1.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        MaharamMeasure { conformal: self.conformal.clone(), scale: self.scale * c }
    }

    pub fn homomorphism(&self) -> Homomorphism {
        Homomorphism(self.conformal.a)
    }

    pub fn fiber_mass(&self, n: i64) -> f64 {
        self.scale * self.homomorphism().weight(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub max_residual: f64,
    pub cylinders: usize,
    /// Residual allowed by the solver residual after weight cancellation,
    /// plus rounding slack.
    pub propagated_bound: f64,
}

/// `max |m(T^{-1}E) − m(E)|` over `E = C × {n}` with `C` one of `2^depth`
/// equal cells per circle and `n` in `fibers`.
pub fn maharam_invariance_check(
    skew: &SkewSystem,
    m: &MaharamMeasure,
    depth: u32,
    fibers: RangeInclusive<i64>,
) -> Result<InvarianceReport, SkewError> {
    let mu = &m.conformal;
    let coarse = 1usize << depth;
    if !mu.cells.is_multiple_of(coarse) {
        return Err(SkewError::BadRefinement { cells: mu.cells, depth });
    }
    let per = mu.cells / coarse;
    let transfer = skew.transfer(mu.cells)?;
    let cyl = |fine: usize| (fine / mu.cells) * coarse + (fine % mu.cells) / per;
    let count = coarse * mu.period;
    let mut own = vec![0.0; count];
    for (i, mass) in mu.masses.iter().enumerate() {
        own[cyl(i)] += mass;
    }
    // preimage mass by crossing symbol -1, 0, +1
    let mut pre = vec![[0.0f64; 3]; count];
    for e in &transfer.entries {
        pre[cyl(e.target)][(e.psi + 1) as usize] += e.frac * mu.masses[e.source];
    }
    let chi = Homomorphism(mu.a);
    if mu.a == 0.0 {
        return Ok(InvarianceReport {
            max_residual: exact_unweighted_residual(&transfer, mu, &cyl, count) * m.scale,
            cylinders: count * fibers.count(),
            propagated_bound: 0.0,
        });
    }
    let mut worst = 0.0f64;
    for n in fibers.clone() {
        for (c, p) in pre.iter().enumerate() {
            let back: f64 = (-1..=1).map(|psi| chi.weight(n - psi) * p[(psi + 1) as usize]).sum();
            worst = worst.max((back - chi.weight(n) * own[c]).abs());
        }
    }
    let max_weight = fibers.clone().map(|n| chi.weight(n)).fold(0.0, f64::max);
    let max_mass = mu.masses.iter().copied().fold(0.0, f64::max);
    let bound = per as f64 * max_weight * (mu.residual + 4.0 * f64::EPSILON * max_mass) * 10.0;
    Ok(InvarianceReport {
        max_residual: worst * m.scale,
        cylinders: count * fibers.count(),
        propagated_bound: bound * m.scale,
    })
}

/// With all weights equal to one the check is carried out in exact arithmetic
/// on the stored masses.
fn exact_unweighted_residual(transfer: &Transfer, mu: &ConformalMeasure, cyl: &dyn Fn(usize) -> usize, count: usize) -> f64 {
    let masses: Vec<Rational> =
        mu.masses.iter().map(|m| Rational::from_float(*m).expect("finite mass")).collect();
    let mut diff = vec![Rational::zero(); count];
    for (i, m) in masses.iter().enumerate() {
        diff[cyl(i)] -= m;
    }
    for e in &transfer.entries {
        diff[cyl(e.target)] += &e.frac_exact * &masses[e.source];
    }
    diff.iter().map(|d| d.abs()).max().unwrap_or_else(Rational::zero).to_f64()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoReport {
    pub first: MaharamMeasure,
    pub second: MaharamMeasure,
    pub invariance: [InvarianceReport; 2],
    /// `(n, m_1(fiber n) / m_2(fiber n))` for `n = 0, 1, 2`.
    pub fiber_ratios: Vec<(i64, f64)>,
}

impl DemoReport {
    /// The two measures are not proportional.
    pub fn non_constant(&self) -> bool {
        self.fiber_ratios.windows(2).any(|w| w[0].1 != w[1].1)
    }
}

/// Two Maharam measures for distinct homomorphisms, each checked for
/// invariance, with their fiber-mass ratios.
pub fn non_uniqueness_demo(
    skew: &SkewSystem,
    a1: f64,
    a2: f64,
    cells: usize,
    tol: f64,
    max_iter: usize,
    depth: u32,
) -> Result<DemoReport, SkewError> {
    if a1 == a2 {
        return Err(SkewError::EqualParameters);
    }
    let first = MaharamMeasure::new(solve_conformal(skew, a1, cells, tol, max_iter)?);
    let second = MaharamMeasure::new(solve_conformal(skew, a2, cells, tol, max_iter)?);
    let invariance = [
        maharam_invariance_check(skew, &first, depth, -2..=2)?,
        maharam_invariance_check(skew, &second, depth, -2..=2)?,
    ];
    let fiber_ratios = (0..=2).map(|n| (n, first.fiber_mass(n) / second.fiber_mass(n))).collect();
    Ok(DemoReport { first, second, invariance, fiber_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn half_skew(delta: Rational) -> SkewSystem {
        let w = WidthSequence::constant(q(1, 2)).unwrap();
        quotient_base(&w, &Direction::from_half_step(delta).unwrap()).unwrap()
    }

    #[test]
    fn constant_width_arcs() {
        let w = WidthSequence::constant(q(1, 3)).unwrap();
        let skew = quotient_base(&w, &Direction::from_half_step(q(2, 7)).unwrap()).unwrap();
        assert_eq!(skew.psi_arcs(0), vec![(q(1, 3), -1), (q(4, 3), 0), (q(1, 3), 1)]);
        let zero = quotient_base(&WidthSequence::zero(), &Direction::from_half_step(q(2, 7)).unwrap()).unwrap();
        assert_eq!(zero.psi_arcs(0), vec![(q(2, 1), 0)]);
        assert!(matches!(
            quotient_base(&WidthSequence::decaying(), &Direction::from_half_step(q(2, 7)).unwrap()),
            Err(SkewError::NotPeriodic)
        ));
    }

    #[test]
    fn skew_orbit_tracks_levels() {
        let w = WidthSequence::periodic(0, vec![q(1, 3), q(3, 5)]).unwrap();
        let d = Direction::from_half_step(q(377, 1220)).unwrap();
        let skew = quotient_base(&w, &d).unwrap();
        let stair = Staircase::new(w, d);
        let mut p = SectionPoint::new(0, q(1, 9)).unwrap();
        let (mut c, mut x, mut n) = (0usize, q(1, 9), 0i64);
        for _ in 0..2000 {
            p = stair.step(&p).moved().cloned().unwrap();
            (c, x, n) = skew.step(c, &x, n).unwrap();
            assert_eq!((n, &x), (p.level, &p.x));
            assert_eq!(c as i64, p.level.rem_euclid(2));
        }
    }

    #[test]
    fn transfer_conserves_mass() {
        let skew = half_skew(q(3, 11));
        let t = skew.transfer(64).unwrap();
        assert!(t.permutation().is_none());
        let mut out = vec![Rational::zero(); t.len()];
        for e in t.entries() {
            out[e.source] += &e.frac_exact;
        }
        assert!(out.iter().all(One::is_one));
    }

    #[test]
    fn zero_parameter_is_lebesgue() {
        let skew = half_skew(q(3, 11));
        let mu = solve_conformal(&skew, 0.0, 64, 1e-12, 10).unwrap();
        assert_eq!(mu.residual, 0.0);
        assert!(mu.masses.iter().all(|m| *m == 1.0 / 64.0));
        let m = MaharamMeasure::new(mu);
        assert_eq!(maharam_invariance_check(&skew, &m, 3, -2..=2).unwrap().max_residual, 0.0);
    }

    #[test]
    fn dyadic_direction_permutes_cells() {
        let skew = half_skew(q(5063, 8192));
        let mu = solve_conformal(&skew, 0.1, 1 << 14, 1e-8, 0).unwrap();
        assert!(mu.residual < 1e-12, "{}", mu.residual);
        assert!((mu.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let rep = maharam_invariance_check(&skew, &MaharamMeasure::new(mu.clone()), 10, -2..=2).unwrap();
        assert!(rep.max_residual <= rep.propagated_bound, "{rep:?}");
        let tripled = maharam_invariance_check(&skew, &MaharamMeasure::new(mu).scaled(3.0), 10, -2..=2).unwrap();
        assert_eq!(tripled.max_residual, 3.0 * rep.max_residual);
    }

    #[test]
    fn iteration_reports_residual() {
        let skew = half_skew(q(3, 11));
        match solve_conformal(&skew, 0.1, 32, 1e-30, 5) {
            Err(SkewError::NonConvergence { trace, iterations, .. }) => {
                assert_eq!(iterations, 5);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn demo_rejects_equal_parameters() {
        let skew = half_skew(q(5063, 8192));
        assert_eq!(non_uniqueness_demo(&skew, 0.1, 0.1, 1 << 14, 1e-8, 0, 4).unwrap_err(), SkewError::EqualParameters);
        let rep = non_uniqueness_demo(&skew, 0.0, 0.1, 1 << 14, 1e-8, 0, 4).unwrap();
        assert!(rep.non_constant());
        assert_eq!(rep.fiber_ratios[0].1, 1.0);
        assert!((rep.fiber_ratios[1].1 - 0.1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn weight_cancellation() {
        let chi = Homomorphism(q(1, 10));
        for n in -5..=5 {
            assert_eq!(chi.apply(n + 3), chi.apply(n) + chi.apply(3));
            // e^{-a(n + ψ)} e^{aψ} = e^{-an}, as exponents
            for psi in -1..=1 {
                assert_eq!(-chi.apply(n + psi) + chi.apply(psi), -chi.apply(n));
            }
        }
    }

    #[test]
    fn reversal_symmetry() {
        let skew = half_skew(q(5063, 8192));
        let plus = solve_conformal(&skew, 0.1, 1 << 14, 1e-8, 0).unwrap();
        let minus = solve_conformal(&skew, -0.1, 1 << 14, 1e-8, 0).unwrap();
        let reflected = plus.reflected();
        for (i, r) in reflected.iter().enumerate() {
            assert!((minus.density(i) - r).abs() < 1e-8);
        }
    }
}
