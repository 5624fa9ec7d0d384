//! Wind-tree tables: configurations of square scatterers turned by 45°, each
//! an L1 ball of diameter `s`.

mod billiard;
mod hausdorff;

use std::cmp::Ordering;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::Rational;

pub use billiard::{
    billiard_step, reverse_state, BilliardOutcome, BoundaryState, Quadrant, Side, WindDirection, WindTreeSystem,
};
pub use hausdorff::{hausdorff_distance, project, sphere_distance, HausdorffReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindTreeError {
    #[error("tree diameter must be positive")]
    NonPositiveDiameter,
    #[error("centers {0} and {1} are closer than the tree diameter")]
    Overlap(String, String),
    #[error("lattice spacing too small for the tree diameter")]
    SpacingTooSmall,
    #[error("a union may contain at most one infinite part")]
    TwoInfiniteParts,
    #[error("ring size must be at least 1")]
    EmptyRing,
    #[error("direction is parallel to a tree side or vanishes")]
    SideParallel,
    #[error("s_coord outside [0, s] or on a corner")]
    BadState,
    #[error("configuration JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Scalar(#[from] scalar::ScalarError),
}

/// An exact point of the plane, serialized as `["p/q", "p/q"]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Center(
    #[serde(with = "scalar::as_rational_string")] pub Rational,
    #[serde(with = "scalar::as_rational_string")] pub Rational,
);

impl Center {
    pub fn new(x: Rational, y: Rational) -> Self {
        Center(x, y)
    }

    pub fn from_ratios(x: (i64, i64), y: (i64, i64)) -> Self {
        Center(Rational::from_ratio(x.0, x.1), Rational::from_ratio(y.0, y.1))
    }

    pub fn l1(&self, other: &Center) -> Rational {
        (&self.0 - &other.0).abs() + (&self.1 - &other.1).abs()
    }

    pub fn l1_norm(&self) -> Rational {
        self.0.abs() + self.1.abs()
    }

    /// Angle proxy in `[0, 4)` increasing counterclockwise from the positive
    /// x-axis; `0` at the origin.
    pub fn diamond_angle(&self) -> Rational {
        let (x, y) = (&self.0, &self.1);
        let d = self.l1_norm();
        if d.is_zero() {
            return Rational::zero();
        }
        let turn = |k: i64, t: Rational| Rational::from_integer(BigInt::from(k)) + t / &d;
        match (x.is_negative(), y.is_negative()) {
            (false, false) if !x.is_zero() || y.is_zero() => turn(0, y.clone()),
            (false, false) | (true, false) => turn(1, -x.clone()),
            (true, true) => turn(2, -y.clone()),
            (false, true) => turn(3, x.clone()),
        }
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.0.to_f64(), self.1.to_f64())
    }
}

impl std::fmt::Display for Center {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", scalar::format_rational(&self.0), scalar::format_rational(&self.1))
    }
}

/// Where the centers come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Explicit {
        centers: Vec<Center>,
    },
    /// `offset + spacing · Z²`.
    Lattice {
        #[serde(with = "scalar::as_rational_string")]
        spacing: Rational,
        offset: Center,
    },
    /// A lattice with every site displaced by at most `amplitude` in each
    /// coordinate, pseudo-randomly from `seed`.
    Perturbed {
        #[serde(with = "scalar::as_rational_string")]
        spacing: Rational,
        offset: Center,
        #[serde(with = "scalar::as_rational_string")]
        amplitude: Rational,
        seed: u64,
    },
    /// The ring `|x| + |y| = n s`, covered side to side.
    Ringed { n: u32 },
    Union { parts: Vec<Source> },
}

impl Source {
    fn is_finite(&self) -> bool {
        match self {
            Source::Explicit { .. } | Source::Ringed { .. } => true,
            Source::Lattice { .. } | Source::Perturbed { .. } => false,
            Source::Union { parts } => parts.iter().all(Source::is_finite),
        }
    }
}

const DISPLACEMENT_STEPS: i64 = 1 << 16;

fn fnv1a(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn displacement(amplitude: &Rational, seed: u64, i: i64, j: i64, axis: u64) -> Rational {
    let h = fnv1a(&[seed, i as u64, j as u64, axis]);
    let u = (h % (DISPLACEMENT_STEPS as u64 + 1)) as i64;
    amplitude * Rational::from_ratio(2 * u - DISPLACEMENT_STEPS, DISPLACEMENT_STEPS)
}

/// Axis-aligned closed box `[lo.0, hi.0] × [lo.1, hi.1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lo: Center,
    pub hi: Center,
}

impl Region {
    pub fn new(lo: Center, hi: Center) -> Self {
        Region { lo, hi }
    }

    /// `[-r, r]²`.
    pub fn square(r: &Rational) -> Self {
        Region { lo: Center(-r.clone(), -r.clone()), hi: Center(r.clone(), r.clone()) }
    }

    pub fn contains(&self, c: &Center) -> bool {
        c.0 >= self.lo.0 && c.0 <= self.hi.0 && c.1 >= self.lo.1 && c.1 <= self.hi.1
    }

    fn grown(&self, by: &Rational) -> Self {
        Region {
            lo: Center(&self.lo.0 - by, &self.lo.1 - by),
            hi: Center(&self.hi.0 + by, &self.hi.1 + by),
        }
    }
}

fn floor_div(a: &Rational, b: &Rational) -> i64 {
    num_traits::ToPrimitive::to_i64(&(a / b).floor().to_integer()).expect("index fits i64")
}

fn ceil_div(a: &Rational, b: &Rational) -> i64 {
    num_traits::ToPrimitive::to_i64(&(a / b).ceil().to_integer()).expect("index fits i64")
}

#[derive(Clone, Debug)]
enum Part {
    Finite { grid: HashMap<(i64, i64), Vec<Center>> },
    Lattice { spacing: Rational, offset: Center },
    Perturbed { spacing: Rational, offset: Center, amplitude: Rational, seed: u64 },
}

/// A wind-tree table: tree diameter plus a queryable set of centers.
#[derive(Clone, Debug)]
pub struct Configuration {
    s: Rational,
    source: Source,
    parts: Vec<Part>,
}

#[derive(Serialize, Deserialize)]
struct ConfigurationJson {
    #[serde(with = "scalar::as_rational_string")]
    s: Rational,
    source: Source,
}

impl Configuration {
    pub fn new(s: Rational, source: Source) -> Result<Self, WindTreeError> {
        if !s.is_positive() {
            return Err(WindTreeError::NonPositiveDiameter);
        }
        let mut finite = Vec::new();
        let mut infinite = Vec::new();
        flatten(&s, &source, &mut finite, &mut infinite)?;
        if infinite.len() > 1 {
            return Err(WindTreeError::TwoInfiniteParts);
        }
        let mut grid: HashMap<(i64, i64), Vec<Center>> = HashMap::new();
        for c in finite {
            grid.entry((floor_div(&c.0, &s), floor_div(&c.1, &s))).or_default().push(c);
        }
        let mut parts = infinite;
        for bucket in grid.values_mut() {
            bucket.sort();
            bucket.dedup();
        }
        parts.insert(0, Part::Finite { grid });
        let g = Configuration { s, source, parts };
        g.check_finite_spacing()?;
        Ok(g)
    }

    /// Empty table.
    pub fn empty(s: Rational) -> Result<Self, WindTreeError> {
        Self::new(s, Source::Explicit { centers: Vec::new() })
    }

    pub fn explicit(s: Rational, centers: Vec<Center>) -> Result<Self, WindTreeError> {
        Self::new(s, Source::Explicit { centers })
    }

    pub fn diameter(&self) -> &Rational {
        &self.s
    }

    /// L1 radius `s / 2`.
    pub fn radius(&self) -> Rational {
        &self.s / Rational::from_ratio(2, 1)
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ConfigurationJson { s: self.s.clone(), source: self.source.clone() })
            .expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, WindTreeError> {
        let raw: ConfigurationJson = serde_json::from_str(text).map_err(|e| WindTreeError::Json(e.to_string()))?;
        Self::new(raw.s, raw.source)
    }

    /// Centers in a closed box, sorted lexicographically.
    pub fn centers_in_region(&self, region: &Region) -> Vec<Center> {
        let mut out = Vec::new();
        for part in &self.parts {
            match part {
                Part::Finite { grid } => {
                    let (i0, i1) = (floor_div(&region.lo.0, &self.s), floor_div(&region.hi.0, &self.s));
                    let (j0, j1) = (floor_div(&region.lo.1, &self.s), floor_div(&region.hi.1, &self.s));
                    if (i1 - i0 + 1).saturating_mul(j1 - j0 + 1) as usize > grid.len() {
                        out.extend(grid.values().flatten().filter(|c| region.contains(c)).cloned());
                    } else {
                        for i in i0..=i1 {
                            for j in j0..=j1 {
                                if let Some(b) = grid.get(&(i, j)) {
                                    out.extend(b.iter().filter(|c| region.contains(c)).cloned());
                                }
                            }
                        }
                    }
                }
                Part::Lattice { spacing, offset } => {
                    for (i, j) in lattice_range(region, spacing, offset, &Rational::zero()) {
                        let c = lattice_site(spacing, offset, i, j);
                        if region.contains(&c) {
                            out.push(c);
                        }
                    }
                }
                Part::Perturbed { spacing, offset, amplitude, seed } => {
                    for (i, j) in lattice_range(region, spacing, offset, amplitude) {
                        let base = lattice_site(spacing, offset, i, j);
                        let c = Center(
                            base.0 + displacement(amplitude, *seed, i, j, 0),
                            base.1 + displacement(amplitude, *seed, i, j, 1),
                        );
                        if region.contains(&c) {
                            out.push(c);
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Every finite center keeps L1 distance `≥ s` from every other center.
    fn check_finite_spacing(&self) -> Result<(), WindTreeError> {
        let Part::Finite { grid } = &self.parts[0] else { return Ok(()) };
        for c in grid.values().flatten() {
            let near = Region::new(c.clone(), c.clone()).grown(&self.s);
            for d in self.centers_in_region(&near) {
                if &d != c && d.l1(c) < self.s {
                    return Err(WindTreeError::Overlap(c.to_string(), d.to_string()));
                }
            }
        }
        Ok(())
    }
}

fn lattice_site(spacing: &Rational, offset: &Center, i: i64, j: i64) -> Center {
    Center(
        &offset.0 + spacing * Rational::from_integer(i.into()),
        &offset.1 + spacing * Rational::from_integer(j.into()),
    )
}

fn lattice_range(region: &Region, spacing: &Rational, offset: &Center, slack: &Rational) -> Vec<(i64, i64)> {
    let i0 = ceil_div(&(&region.lo.0 - &offset.0 - slack), spacing);
    let i1 = floor_div(&(&region.hi.0 - &offset.0 + slack), spacing);
    let j0 = ceil_div(&(&region.lo.1 - &offset.1 - slack), spacing);
    let j1 = floor_div(&(&region.hi.1 - &offset.1 + slack), spacing);
    let mut out = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            out.push((i, j));
        }
    }
    out
}

fn flatten(s: &Rational, source: &Source, finite: &mut Vec<Center>, infinite: &mut Vec<Part>) -> Result<(), WindTreeError> {
    match source {
        Source::Explicit { centers } => finite.extend(centers.iter().cloned()),
        Source::Ringed { n } => finite.extend(ring_centers(*n, s)?),
        Source::Lattice { spacing, offset } => {
            if spacing < s {
                return Err(WindTreeError::SpacingTooSmall);
            }
            infinite.push(Part::Lattice { spacing: spacing.clone(), offset: offset.clone() });
        }
        Source::Perturbed { spacing, offset, amplitude, seed } => {
            let four = Rational::from_ratio(4, 1);
            if amplitude.is_negative() || spacing - &four * amplitude < *s {
                return Err(WindTreeError::SpacingTooSmall);
            }
            infinite.push(Part::Perturbed {
                spacing: spacing.clone(),
                offset: offset.clone(),
                amplitude: amplitude.clone(),
                seed: *seed,
            });
        }
        Source::Union { parts } => {
            if parts.iter().filter(|p| !p.is_finite()).count() > 1 {
                return Err(WindTreeError::TwoInfiniteParts);
            }
            for p in parts {
                flatten(s, p, finite, infinite)?;
            }
        }
    }
    Ok(())
}

fn ring_centers(n: u32, s: &Rational) -> Result<Vec<Center>, WindTreeError> {
    if n == 0 {
        return Err(WindTreeError::EmptyRing);
    }
    let half = s / Rational::from_ratio(2, 1);
    let ns = s * Rational::from_integer(n.into());
    let mut out = Vec::with_capacity(8 * n as usize);
    // quarter edge from (ns, 0) to (0, ns), rotated by quarter turns
    for j in 0..2 * n as i64 {
        let t = &half * Rational::from_integer(j.into());
        let (x, y) = (&ns - &t, t);
        out.push(Center(x.clone(), y.clone()));
        out.push(Center(-y.clone(), x.clone()));
        out.push(Center(-x.clone(), -y.clone()));
        out.push(Center(y, -x));
    }
    Ok(out)
}

/// The `8n` trees covering `|x| + |y| = n s`; consecutive trees share a side.
pub fn ringed_config(n: u32, s: Rational) -> Result<Configuration, WindTreeError> {
    Configuration::new(s, Source::Ringed { n })
}

/// Centers within L1 distance `radius` of the origin, by L1 distance, then
/// angle counterclockwise from the positive x-axis, then coordinates.
pub fn enumerate_trees(g: &Configuration, radius: &Rational) -> Vec<Center> {
    let mut out: Vec<Center> =
        g.centers_in_region(&Region::square(radius)).into_iter().filter(|c| c.l1_norm() <= *radius).collect();
    out.sort_by(enumeration_order);
    out
}

pub fn enumeration_order(a: &Center, b: &Center) -> Ordering {
    a.l1_norm()
        .cmp(&b.l1_norm())
        .then_with(|| a.diamond_angle().cmp(&b.diamond_angle()))
        .then_with(|| a.cmp(b))
}

impl BoundaryState {
    /// Position of this state's tree in the enumeration within `radius`.
    pub fn index_of(&self, g: &Configuration, radius: &Rational) -> Option<usize> {
        enumerate_trees(g, radius).iter().position(|c| *c == self.center)
    }
}
