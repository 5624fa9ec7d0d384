//! Experiment configs. Every rational travels as a `"p/q"` string; JSON
//! numbers are refused where an exact value is expected.

use serde::{Deserialize, Serialize};

use stairtree::observables::TestFunction;
use stairtree::scalar::parse_rational;
use stairtree::staircase::{Direction, SectionPoint, Staircase, VerticalSign, WidthSequence};
use stairtree::windtree::{BoundaryState, Center, Configuration, Quadrant, WindDirection};
use stairtree::Rational;

use crate::LabError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn rational(field: &str, text: &str) -> Result<Rational, LabError> {
    parse_rational(text).map_err(|e| LabError::InvalidConfig(format!("{field}: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseSpec {
    pub widths: WidthSequence<Rational>,
    pub slope: String,
    #[serde(default = "up")]
    pub sign: VerticalSign,
}

fn up() -> VerticalSign {
    VerticalSign::Up
}

impl StaircaseSpec {
    pub fn build(&self) -> Result<Staircase<Rational>, LabError> {
        self.widths.validate().map_err(|e| LabError::InvalidConfig(format!("widths: {e}")))?;
        let slope = rational("slope", &self.slope)?;
        let d = Direction::with_sign(slope, self.sign).map_err(|e| LabError::InvalidConfig(format!("slope: {e}")))?;
        Ok(Staircase::new(self.widths.clone(), d))
    }
}

/// `widths` of a ring: the inner widths `w_{-N+1..N-1}` as `"p/q"` strings.
pub fn ring_widths(inner: &[String]) -> Result<WidthSequence<Rational>, LabError> {
    let values = inner.iter().map(|s| rational("ring_inner", s)).collect::<Result<Vec<_>, _>>()?;
    WidthSequence::ringed(values).map_err(|e| LabError::InvalidConfig(format!("ring_inner: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub level: i64,
    pub x: String,
}

impl StartSpec {
    pub fn build(&self) -> Result<SectionPoint<Rational>, LabError> {
        SectionPoint::new(self.level, rational("start.x", &self.x)?)
            .map_err(|e| LabError::InvalidConfig(format!("start: {e}")))
    }
}

/// Numerator and denominator picked from the enumerated test-function family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionPair {
    pub numerator: usize,
    pub denominator: usize,
    pub floor_exp: u32,
}

impl FunctionPair {
    pub fn build(&self, n: i64) -> Result<(TestFunction, TestFunction), LabError> {
        let f = |j| TestFunction::family(n, j, self.floor_exp).map_err(|e| LabError::InvalidConfig(e.to_string()));
        Ok((f(self.numerator)?, f(self.denominator)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub staircase: StaircaseSpec,
    pub start: StartSpec,
    pub budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandRule {
    /// `{-m+1, ..., m}`.
    #[default]
    Symmetric,
    /// `{-m, ..., m}`.
    Centered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxesConfig {
    pub staircase: StaircaseSpec,
    pub depth: i64,
    pub epsilon: String,
    #[serde(default)]
    pub bands: BandRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    pub staircase: StaircaseSpec,
    pub n: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub staircase: StaircaseSpec,
    pub n: i64,
    pub ell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfConfig {
    pub staircase: StaircaseSpec,
    pub n: i64,
    pub ell: usize,
    pub functions: FunctionPair,
    pub start: StartSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformConfig {
    pub staircase: StaircaseSpec,
    pub n: i64,
    pub ells: Vec<usize>,
    pub grid_per_level: usize,
    pub functions: FunctionPair,
    /// Directions with a saddle connection this short are refused.
    pub saddle_ell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericConfig {
    pub ring_inner: Vec<String>,
    /// Opening of the ring: `w_{±N}` becomes this value.
    pub perturbation: String,
    pub slopes: Vec<String>,
    pub n: i64,
    pub ell: usize,
    pub gamma: f64,
    pub functions: FunctionPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaharamConfig {
    pub staircase: StaircaseSpec,
    pub a: [f64; 2],
    pub cells: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub cylinder_depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionSpec {
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub center: [String; 2],
    pub s_coord: String,
    pub quadrant: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindtreeOrbitConfig {
    /// `{"s": "p/q", "source": {...}}`.
    pub table: serde_json::Value,
    pub direction: DirectionSpec,
    pub start: StateSpec,
    pub budget: usize,
    #[serde(default)]
    pub r_max: Option<String>,
}

impl WindtreeOrbitConfig {
    pub fn build(&self) -> Result<(Configuration, WindDirection, BoundaryState, Rational), LabError> {
        let table = Configuration::from_json(&self.table.to_string())
            .map_err(|e| LabError::InvalidConfig(format!("table: {e}")))?;
        let theta = WindDirection::new(rational("direction.a", &self.direction.a)?, rational("direction.b", &self.direction.b)?)
            .map_err(|e| LabError::InvalidConfig(format!("direction: {e}")))?;
        let quadrant = Quadrant::new(self.start.quadrant)
            .ok_or_else(|| LabError::InvalidConfig(format!("quadrant {}", self.start.quadrant)))?;
        let state = BoundaryState {
            center: Center::new(rational("center", &self.start.center[0])?, rational("center", &self.start.center[1])?),
            s_coord: rational("s_coord", &self.start.s_coord)?,
            quadrant,
        };
        if state.locate(&theta, table.diameter()).is_none() {
            return Err(LabError::InvalidConfig("start state is a corner or off the tree".into()));
        }
        let r_max = match &self.r_max {
            Some(r) => rational("r_max", r)?,
            None => table.diameter() * Rational::from_integer(10_000.into()),
        };
        Ok((table, theta, state, r_max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaScanConfig {
    pub ring_inner: Vec<String>,
    pub n: i64,
    pub ell: usize,
    pub slopes: Vec<String>,
    pub hopf_ell: usize,
    pub functions: FunctionPair,
    pub start: StartSpec,
}

/// Parses a config, mapping every failure to `InvalidConfig`.
pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, LabError> {
    serde_json::from_str(text).map_err(|e| LabError::InvalidConfig(e.to_string()))
}
