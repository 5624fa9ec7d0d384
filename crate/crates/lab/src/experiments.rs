//! One runner per subcommand. Each returns the bytes of its output files;
//! the caller prefixes CSVs with the manifest hash and writes them.

use std::io::Write;

use num_traits::Zero;
use serde_json::json;

use stairtree::observables::{self, HopfEngine, RatioReport, TestFunction};
use stairtree::ring_iet::RingIet;
use stairtree::scalar::{format_rational, Scalar};
use stairtree::section::{certify_conservativity, orbit, write_orbit_csv, BoxSequence};
use stairtree::singular::{self, continuity_partition, continuity_witness, detect_saddle, sigma_set};
use stairtree::skew::{self, SkewError};
use stairtree::staircase::{Direction, SectionPoint, Staircase, VerticalSign};
use stairtree::windtree::{billiard_step, BilliardOutcome};
use stairtree::Rational;

use crate::config::*;
use crate::{Backend, LabError};

/// Name and contents of one output file.
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
    pub csv: bool,
}

impl Output {
    fn csv(name: &str, bytes: Vec<u8>) -> Self {
        Output { name: name.into(), bytes, csv: true }
    }

    fn json(name: &str, value: serde_json::Value) -> Self {
        let mut bytes = serde_json::to_vec_pretty(&value).expect("plain data");
        bytes.push(b'\n');
        Output { name: name.into(), bytes, csv: false }
    }
}

fn experiment<E: std::fmt::Display>(e: E) -> LabError {
    LabError::Experiment(e.to_string())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn orbit_run(cfg: &OrbitConfig, backend: Backend) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let start = cfg.start.build()?;
    let mut buf = Vec::new();
    match backend {
        Backend::Rational => {
            let rec = orbit(&stair, &start, cfg.budget, VerticalSign::Up);
            write_orbit_csv(&rec, &mut buf)?;
        }
        Backend::Float64 => {
            let w = stair.widths();
            let window: Vec<f64> = w.window().iter().map(Scalar::to_f64).collect();
            let tail = match w.tail() {
                stairtree::staircase::Tail::Constant { value } => {
                    stairtree::staircase::Tail::Constant { value: value.to_f64() }
                }
                stairtree::staircase::Tail::Zero => stairtree::staircase::Tail::Zero,
                stairtree::staircase::Tail::Periodic => stairtree::staircase::Tail::Periodic,
                stairtree::staircase::Tail::Decay { rule } => stairtree::staircase::Tail::Decay { rule: *rule },
            };
            let wf = stairtree::staircase::WidthSequence::new(w.window_start(), window, tail).map_err(experiment)?;
            let d = Direction::with_sign(stair.direction().slope().to_f64(), stair.direction().vertical_sign())
                .map_err(experiment)?;
            let sf = Staircase::new(wf, d);
            let p = SectionPoint::new(start.level, start.x.to_f64()).map_err(experiment)?;
            let rec = orbit(&sf, &p, cfg.budget, VerticalSign::Up);
            write_orbit_csv(&rec, &mut buf)?;
        }
    }
    Ok(vec![Output::csv("orbit.csv", buf)])
}

pub fn boxes_run(cfg: &BoxesConfig) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let eps = rational("epsilon", &cfg.epsilon)?;
    let (boxes, first_m) = match cfg.bands {
        BandRule::Symmetric => (BoxSequence::symmetric_bands(cfg.depth), 1),
        BandRule::Centered => (BoxSequence::centered_bands(cfg.depth), 0),
    };
    let boxes = boxes.map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let report = certify_conservativity(&stair, &boxes, eps).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let mut buf = Vec::new();
    writeln!(buf, "m,escape,below_epsilon")?;
    for row in &report.rows {
        writeln!(buf, "{},{},{}", row.index + first_m, format_rational(&row.escape), row.below_epsilon)?;
    }
    let summary = json!({
        "epsilon": format_rational(&report.epsilon),
        "certified_from_m": report.certified_from.map(|i| i + first_m),
        "certified": report.certified(),
        "disclaimer": report.disclaimer,
    });
    Ok(vec![Output::csv("boxes.csv", buf), Output::json("certificate.json", summary)])
}

pub fn sigma_run(cfg: &SigmaConfig) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let set = sigma_set(&stair, cfg.n).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let mut buf = Vec::new();
    writeln!(buf, "level,x,tags,blocking")?;
    for (level, p) in set.points() {
        let tags: Vec<&str> = p.tags.iter().map(|t| t.name()).collect();
        writeln!(buf, "{},{},{},{}", level, format_rational(&p.x), tags.join("+"), p.is_blocking())?;
    }
    Ok(vec![Output::csv("sigma.csv", buf)])
}

pub fn partition_run(cfg: &PartitionConfig) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let saddle = detect_saddle(&stair, cfg.n, cfg.ell).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    if let Some(w) = saddle {
        let summary = json!({
            "saddle": true,
            "steps": w.steps,
            "start_level": w.start_level,
            "start": w.start.name(),
            "end_level": w.end_level,
            "end": w.end.name(),
        });
        return Ok(vec![Output::json("partition.json", summary)]);
    }
    let part = continuity_partition(&stair, cfg.n, cfg.ell).map_err(experiment)?;
    let witness = continuity_witness(&stair, &part);
    let mut buf = Vec::new();
    part.write_csv(&mut buf)?;
    let summary = json!({
        "saddle": false,
        "cuts": part.cut_count(),
        "intervals": part.intervals().len(),
        "min_gap": format_rational(&part.min_gap()),
        "witness_holds": witness.holds(),
    });
    Ok(vec![Output::csv("partition.csv", buf), Output::json("partition.json", summary)])
}

/// Exact orbit sums, rendered in floating point only at the end.
fn exact_hopf(
    stair: &Staircase<Rational>,
    h_j: &TestFunction,
    h_n: &TestFunction,
    z: &SectionPoint<Rational>,
    ell: usize,
) -> Result<RatioReport, LabError> {
    let marks = observables::checkpoints(ell);
    let target = observables::target_ratio(h_j, h_n).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let mut num = Rational::zero();
    let mut den = Rational::zero();
    let mut rows = Vec::new();
    let mut p = z.clone();
    let mut next = 0;
    let mut stopped_after = None;
    for k in 0..=ell {
        num += h_j.eval_exact(p.level, &p.x);
        den += h_n.eval_exact(p.level, &p.x);
        if marks.get(next) == Some(&k) {
            next += 1;
            if !den.is_zero() {
                rows.push((k, vec![num.to_f64(), den.to_f64(), (&num / &den).to_f64()]));
            }
        }
        if k == ell {
            break;
        }
        match stair.step(&p).moved() {
            Some(q) => p = q.clone(),
            None => {
                stopped_after = Some(k);
                break;
            }
        }
    }
    if rows.last().map(|r| r.0) != Some(ell) {
        return Err(experiment(observables::ObservableError::DenominatorZero(ell)));
    }
    let t = target.to_f64();
    Ok(RatioReport {
        rows: rows
            .into_iter()
            .map(|(ell, v)| observables::RatioRow { ell, num: v[0], den: v[1], ratio: v[2], target: t, abs_dev: (v[2] - t).abs() })
            .collect(),
        target,
        sign: VerticalSign::Up,
        stopped_after,
    })
}

pub fn hopf_run(cfg: &HopfConfig, backend: Backend) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let (h_j, h_n) = cfg.functions.build(cfg.n)?;
    let z = cfg.start.build()?;
    let report = match backend {
        Backend::Rational => exact_hopf(&stair, &h_j, &h_n, &z, cfg.ell)?,
        Backend::Float64 => {
            let engine = HopfEngine::new(&stair, cfg.n);
            let sums = engine.sums(&[&h_j, &h_n], &z, &observables::checkpoints(cfg.ell));
            let target = observables::target_ratio(&h_j, &h_n).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
            RatioReport::from_sums(&sums, 0, 1, target, VerticalSign::Up).map_err(experiment)?
        }
    };
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    Ok(vec![Output::csv("hopf.csv", buf)])
}

pub fn uniform_run(cfg: &UniformConfig) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    observables::saddle_gate(&stair, cfg.n, cfg.saddle_ell).map_err(experiment)?;
    let (h_j, h_n) = cfg.functions.build(cfg.n)?;
    let iet = RingIet::ring(&stair, cfg.n, 2).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let grid = observables::regular_grid(&iet, cfg.grid_per_level);
    let rows = observables::uniform_hopf_profile(&iet, &h_j, &h_n, &cfg.ells, &grid).map_err(experiment)?;
    let mut buf = Vec::new();
    writeln!(buf, "ell,sup_dev")?;
    for r in rows {
        writeln!(buf, "{},{:?}", r.ell, r.sup_dev)?;
    }
    Ok(vec![Output::csv("uniform.csv", buf)])
}

pub fn generic_run(cfg: &GenericConfig) -> Result<Vec<Output>, LabError> {
    let ring = ring_widths(&cfg.ring_inner)?;
    let eps = rational("perturbation", &cfg.perturbation)?;
    let w = singular::open_ring(&ring, cfg.n, &eps);
    w.validate().map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let dirs = cfg
        .slopes
        .iter()
        .map(|s| Direction::new(rational("slopes", s)?).map_err(|e| LabError::InvalidConfig(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let (h_j, h_n) = cfg.functions.build(cfg.n)?;
    let reports = observables::genericity_scale_check(&ring, &w, &dirs, cfg.n, cfg.ell, cfg.gamma, &h_j, &h_n)
        .map_err(experiment)?;
    let all_pass = reports.iter().all(|r| r.all_pass());
    Ok(vec![Output::json("generic.json", json!({ "all_pass": all_pass, "directions": reports }))])
}

pub fn maharam_run(cfg: &MaharamConfig) -> Result<Vec<Output>, LabError> {
    let stair = cfg.staircase.build()?;
    let base = skew::quotient_base(stair.widths(), stair.direction()).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
    let demo = skew::non_uniqueness_demo(&base, cfg.a[0], cfg.a[1], cfg.cells, cfg.tol, cfg.max_iter, cfg.cylinder_depth)
        .map_err(|e| match e {
            SkewError::NonConvergence { .. } => LabError::NonConvergence(e.to_string()),
            SkewError::EqualParameters | SkewError::BadRefinement { .. } | SkewError::NoCells | SkewError::NotPeriodic => {
                LabError::InvalidConfig(e.to_string())
            }
        })?;
    let mut outputs = Vec::new();
    for (i, m) in [&demo.first, &demo.second].into_iter().enumerate() {
        let mut buf = Vec::new();
        m.conformal.write_csv(&mut buf)?;
        outputs.push(Output::csv(&format!("density_{i}.csv"), buf));
    }
    let summary = json!({
        "a": cfg.a,
        "solver_residual": [demo.first.conformal.residual, demo.second.conformal.residual],
        "iterations": [demo.first.conformal.iterations, demo.second.conformal.iterations],
        "invariance": demo.invariance,
        "fiber_ratios": demo.fiber_ratios,
        "non_constant": demo.non_constant(),
    });
    outputs.push(Output::json("maharam.json", summary));
    Ok(outputs)
}

pub fn windtree_orbit_run(cfg: &WindtreeOrbitConfig) -> Result<Vec<Output>, LabError> {
    let (table, theta, mut state, r_max) = cfg.build()?;
    let mut buf = Vec::new();
    writeln!(buf, "step,center_x,center_y,s_coord,quadrant,flight_length,outcome")?;
    let row = |buf: &mut Vec<u8>, k: usize, s: &stairtree::windtree::BoundaryState, flight: &str, outcome: &str| {
        writeln!(
            buf,
            "{},{},{},{},{},{},{}",
            k,
            format_rational(&s.center.0),
            format_rational(&s.center.1),
            format_rational(&s.s_coord),
            s.quadrant.index(),
            flight,
            outcome
        )
    };
    row(&mut buf, 0, &state, "", "start")?;
    for k in 1..=cfg.budget {
        match billiard_step(&table, &theta, &state, &r_max).map_err(experiment)? {
            BilliardOutcome::Hit { state: next, flight_length } => {
                row(&mut buf, k, &next, &format_rational(&flight_length), "hit")?;
                state = next;
            }
            BilliardOutcome::CornerStop { corner } => {
                writeln!(buf, "{k},{},{},,,,corner", format_rational(&corner.0), format_rational(&corner.1))?;
                break;
            }
            BilliardOutcome::Escape { traveled } => {
                writeln!(buf, "{k},,,,,{},escape", format_rational(&traveled))?;
                break;
            }
        }
    }
    Ok(vec![Output::csv("windtree_orbit.csv", buf)])
}

/// One row of a direction scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub slope: Rational,
    pub saddle: bool,
    pub eta: Option<f64>,
    pub iota: Option<f64>,
    pub hopf_dev: Option<f64>,
}

/// Per slope: saddle connection of length `≤ ell` on the ring, and for
/// unflagged slopes the partition scale `η`, separation `ι`, and the Hopf
/// deviation from the pinned start at `hopf_ell`.
pub fn theta_scan(cfg: &ThetaScanConfig) -> Result<Vec<ScanRow>, LabError> {
    use rayon::prelude::*;
    let ring = ring_widths(&cfg.ring_inner)?;
    let slopes = cfg.slopes.iter().map(|s| rational("slopes", s)).collect::<Result<Vec<_>, _>>()?;
    let (h_j, h_n) = cfg.functions.build(cfg.n)?;
    let target = observables::target_ratio(&h_j, &h_n).map_err(|e| LabError::InvalidConfig(e.to_string()))?.to_f64();
    let start = cfg.start.build()?;
    slopes
        .par_iter()
        .map(|slope| {
            let d = Direction::new(slope.clone()).map_err(|e| LabError::InvalidConfig(e.to_string()))?;
            let stair = Staircase::new(ring.clone(), d);
            let saddle = detect_saddle(&stair, cfg.n, cfg.ell).map_err(experiment)?.is_some();
            if saddle {
                return Ok(ScanRow { slope: slope.clone(), saddle, eta: None, iota: None, hopf_dev: None });
            }
            let eta = continuity_partition(&stair, cfg.n, cfg.ell).ok().map(|p| p.min_gap().to_f64());
            let iota = singular::separation_iota(&stair, cfg.n, cfg.ell).ok().map(|s| s.iota.to_f64());
            let engine = HopfEngine::new(&stair, cfg.n);
            let sums = engine.sums(&[&h_j, &h_n], &start, &[cfg.hopf_ell]);
            let hopf_dev = match (sums.stopped_after, sums.rows.last()) {
                (None, Some((_, s))) if s[1] > 0.0 => Some((s[0] / s[1] - target).abs()),
                _ => None,
            };
            Ok(ScanRow { slope: slope.clone(), saddle, eta, iota, hopf_dev })
        })
        .collect()
}

pub fn theta_scan_run(cfg: &ThetaScanConfig) -> Result<Vec<Output>, LabError> {
    let rows = theta_scan(cfg)?;
    let mut buf = Vec::new();
    writeln!(buf, "slope,saddle,eta,iota,hopf_dev")?;
    for r in rows {
        writeln!(buf, "{},{},{},{},{}", format_rational(&r.slope), r.saddle, opt(r.eta), opt(r.iota), opt(r.hopf_dev))?;
    }
    Ok(vec![Output::csv("theta_scan.csv", buf)])
}

/// Parsed config as JSON for the manifest. Object keys come out sorted.
pub fn canonical<T: serde::Serialize>(cfg: &T) -> serde_json::Value {
    serde_json::to_value(cfg).expect("plain data")
}
