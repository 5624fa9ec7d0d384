use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stairtree::coding::{cylinder_census, itinerary, refined_itinerary};
use stairtree::observables::{hopf_average, TestFunction};
use stairtree::ring_iet::{LatticePoint, RingIet};
use stairtree::section::{pushforward_interval, SectionSystem};
use stairtree::singular::continuity_partition;
use stairtree::staircase::{Direction, SectionPoint, Staircase, StepOutcome, VerticalSign, WidthSequence};
use stairtree::windtree::{
    billiard_step, hausdorff_distance, reverse_state, BilliardOutcome, BoundaryState, Center, Configuration, Quadrant,
    Side, Source, WindDirection,
};
use stairtree::Rational;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn ratio(max_den: i64, lo: i64, hi_num_per_den: i64) -> impl Strategy<Value = Rational> {
    (1..=max_den).prop_flat_map(move |d| (lo * d..=hi_num_per_den * d).prop_map(move |n| q(n, d)))
}

/// Periodic widths with a short window of small-denominator values.
fn widths() -> impl Strategy<Value = WidthSequence<Rational>> {
    (-3i64..=3, prop::collection::vec(ratio(12, 0, 1), 1..5))
        .prop_map(|(start, window)| WidthSequence::periodic(start, window).unwrap())
}

fn staircase() -> impl Strategy<Value = Staircase<Rational>> {
    (widths(), ratio(24, -2, 2), any::<bool>()).prop_map(|(w, delta, down)| {
        let d = Direction::from_half_step(delta).unwrap();
        Staircase::new(w, if down { d.reversed() } else { d })
    })
}

fn point() -> impl Strategy<Value = SectionPoint<Rational>> {
    (-6i64..=6, ratio(97, 0, 2)).prop_filter_map("x < 2", |(k, x)| SectionPoint::new(k, x).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn step_and_inverse_are_mutually_inverse(stair in staircase(), p in point()) {
        if let StepOutcome::Moved { to, slit } = stair.step(&p) {
            prop_assert!(slit.level_change() == to.level - p.level);
            prop_assert!(!to.x.is_negative() && to.x < q(2, 1));
            let back = stair.inverse_step(&to);
            prop_assert_eq!(back.moved(), Some(&p));
        }
        if let StepOutcome::Moved { to, .. } = stair.inverse_step(&p) {
            let fwd = stair.step(&to);
            prop_assert_eq!(fwd.moved(), Some(&p));
        }
    }

    #[test]
    fn pushforward_conserves_length(stair in staircase(), k in -4i64..=4, a in ratio(60, 0, 2), b in ratio(60, 0, 2)) {
        prop_assume!(a != b);
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let arcs = pushforward_interval(&stair, &k, left.clone(), right.clone()).unwrap();
        let total = arcs.iter().fold(Rational::zero(), |acc, arc| acc + arc.length());
        prop_assert_eq!(total, right - left);
    }

    /// Scanning `step` over a lattice fine enough to carry every cut finds
    /// exactly `{(j - δ) mod 2 : j ∈ {w_{k-1}, 2 - w_k, 2}}`.
    #[test]
    fn singular_scan_matches_formula(stair in staircase(), k in -4i64..=4) {
        let (lower, upper) = stair.level_widths(k);
        prop_assume!(!lower.is_zero() && !upper.is_zero());
        let delta = stair.half_step().clone();
        let sign = if stair.direction().vertical_sign() == VerticalSign::Up { q(1, 1) } else { q(-1, 1) };
        let two = q(2, 1);
        let expected: BTreeSet<Rational> = [lower.clone(), &two - &upper, two.clone()]
            .into_iter()
            .map(|j| {
                let x = j - &sign * &delta;
                ((x % &two) + &two) % &two
            })
            .collect();
        let den = stairtree::scalar::common_denominator([&lower, &upper, &delta]);
        let n: i64 = num_traits::ToPrimitive::to_i64(&den).unwrap();
        let found: BTreeSet<Rational> = (0..2 * n)
            .map(|i| q(i, n))
            .filter(|x| stair.step(&SectionPoint { level: k, x: x.clone() }).is_singular())
            .collect();
        prop_assert_eq!(found, expected);
    }

    #[test]
    fn hopf_ratio_is_scale_invariant(e in -6i32..=6, j in 1usize..6, ell in 50usize..400) {
        let stair = Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::new(q(764939, 524288)).unwrap());
        let iet = RingIet::ring(&stair, 1, 2).unwrap();
        let z = iet.to_lattice(&SectionPoint { level: 0, x: q(1, 2097152) }).unwrap();
        let a = TestFunction::family(1, j, 6).unwrap();
        let b = TestFunction::family(1, 0, 6).unwrap();
        let c = if e >= 0 { q(1 << e, 1) } else { q(1, 1 << -e) };
        let base = hopf_average(&iet, &a, &b, &z, ell, VerticalSign::Up).unwrap();
        let scaled = hopf_average(&iet, &a.scaled(&c), &b.scaled(&c), &z, ell, VerticalSign::Up).unwrap();
        prop_assert_eq!(base.last().ratio, scaled.last().ratio);
    }
}

#[test]
fn itineraries_agree_within_continuity_intervals() {
    let stair = Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::new(q(7919, 10007)).unwrap());
    let ell = 60;
    let part = continuity_partition(&stair, 1, ell).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for iv in part.intervals() {
        let word = |t: Rational| {
            let x = &iv.left + &iv.length * t;
            let p = SectionPoint::wrapped(iv.level, x);
            refined_itinerary(&stair, &part, &p, ell).word.iter().map(|l| l.slit).collect::<Vec<_>>()
        };
        let mid = word(q(1, 2));
        let t = q(rng.random_range(1..1000), 1000);
        assert_eq!(word(t), mid, "interval at level {} from {}", iv.level, iv.left);
    }
}

#[test]
fn census_is_stable_across_samples() {
    let stair = Staircase::new(WidthSequence::ringed(vec![q(1, 2)]).unwrap(), Direction::new(q(764939, 524288)).unwrap());
    let iet = RingIet::ring(&stair, 1, 2).unwrap();
    let n = iet.circumference();
    let sample = |seed: u64| -> Vec<LatticePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..40_000).map(|_| LatticePoint { level: rng.random_range(0..=1), coord: 2 * rng.random_range(0..n / 2) + 1 }).collect()
    };
    let a = cylinder_census(&iet, 6, &sample(1), VerticalSign::Up);
    let b = cylinder_census(&iet, 6, &sample(2), VerticalSign::Up);
    assert_eq!(a.incomplete + b.incomplete, 0);
    assert!(a.max_gap(&b) <= 0.02, "gap {}", a.max_gap(&b));
}

#[test]
fn itinerary_symbols_follow_the_orbit() {
    let stair = Staircase::new(WidthSequence::ringed(vec![q(1, 3), q(2, 3), q(1, 2)]).unwrap(), Direction::new(q(13, 29)).unwrap());
    let z = SectionPoint { level: 0, x: q(1, 7) };
    let word = itinerary(&stair, &z, 300, VerticalSign::Up);
    let rec = stairtree::section::orbit(&stair, &z, 300, VerticalSign::Up);
    assert_eq!(word.word, rec.symbols());
}

// ---- wind-tree ----

fn table() -> Configuration {
    Configuration::new(
        q(1, 1),
        Source::Union {
            parts: vec![Source::Ringed { n: 3 }, Source::Explicit { centers: vec![Center::from_ratios((0, 1), (0, 1)), Center::from_ratios((3, 2), (1, 4))] }],
        },
    )
    .unwrap()
}

fn reflect(v: &(Rational, Rational), side: Side) -> (Rational, Rational) {
    match side {
        // slope -1 sides
        Side::NorthEast | Side::SouthWest => (-v.1.clone(), -v.0.clone()),
        Side::NorthWest | Side::SouthEast => (v.1.clone(), v.0.clone()),
    }
}

/// A state on an uncovered part of some tree near the origin.
fn random_state(rng: &mut ChaCha8Rng, g: &Configuration, theta: &WindDirection, s: &Rational) -> BoundaryState {
    let centers = g.centers_in_region(&stairtree::windtree::Region::square(&q(4, 1)));
    loop {
        let c = centers[rng.random_range(0..centers.len())].clone();
        let s_coord = s * q(rng.random_range(1..4096), 4096);
        let quadrant = Quadrant::new(rng.random_range(1..=4)).unwrap();
        let b = BoundaryState { center: c, s_coord, quadrant };
        if b.s_coord != s / q(2, 1) && b.is_exposed(g, theta) {
            return b;
        }
    }
}

fn random_theta(rng: &mut ChaCha8Rng) -> WindDirection {
    loop {
        let a = q(rng.random_range(1..50), 7);
        let b = q(rng.random_range(1..50), 11);
        if let Ok(t) = WindDirection::new(a, b) {
            return t;
        }
    }
}

#[test]
fn reflections_stay_in_the_class() {
    let g = table();
    let s = g.diameter().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r_max = q(200, 1);
    for _ in 0..2000 {
        let theta = random_theta(&mut rng);
        let b = random_state(&mut rng, &g, &theta, &s);
        let v = theta.member(b.quadrant);
        if let BilliardOutcome::Hit { state, .. } = billiard_step(&g, &theta, &b, &r_max).unwrap() {
            let (_, side) = state.locate(&theta, &s).unwrap();
            assert_eq!(theta.member(state.quadrant), reflect(&v, side));
            assert!(theta.quadrant_of(&reflect(&v, side)).is_some());
        }
    }
}

#[test]
fn reversal_retraces_flights() {
    let g = table();
    let s = g.diameter().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r_max = q(200, 1);
    for _ in 0..2000 {
        let theta = random_theta(&mut rng);
        let b = random_state(&mut rng, &g, &theta, &s);
        let BilliardOutcome::Hit { state, flight_length } = billiard_step(&g, &theta, &b, &r_max).unwrap() else {
            continue;
        };
        let back = reverse_state(&state, &theta, &s).unwrap();
        match billiard_step(&g, &theta, &back, &r_max).unwrap() {
            BilliardOutcome::Hit { state: home, flight_length: l } => {
                assert_eq!(home, reverse_state(&b, &theta, &s).unwrap());
                assert_eq!(l, flight_length);
            }
            other => panic!("reverse flight ended in {other:?}"),
        }
    }
}

/// Ray against every tree edge by Cramer's rule.
fn brute_force_flight(g: &Configuration, theta: &WindDirection, b: &BoundaryState) -> Option<Rational> {
    let s = g.diameter();
    let r = g.radius();
    let (p, _) = b.locate(theta, s).unwrap();
    let v = theta.member(b.quadrant);
    let mut best: Option<Rational> = None;
    for c in g.centers_in_region(&stairtree::windtree::Region::square(&q(10, 1))) {
        if c == b.center {
            continue;
        }
        let verts = [
            (&c.0 + &r, c.1.clone()),
            (c.0.clone(), &c.1 + &r),
            (&c.0 - &r, c.1.clone()),
            (c.0.clone(), &c.1 - &r),
        ];
        for i in 0..4 {
            let (a0, b0) = (&verts[i], &verts[(i + 1) % 4]);
            let e = (&b0.0 - &a0.0, &b0.1 - &a0.1);
            let det = &v.0 * -&e.1 + &e.0 * &v.1;
            if det.is_zero() {
                continue;
            }
            let d = (&a0.0 - &p.0, &a0.1 - &p.1);
            let t = (&d.0 * -&e.1 + &e.0 * &d.1) / &det;
            let u = (&v.0 * &d.1 - &v.1 * &d.0) / &det;
            if t.is_positive() && !u.is_negative() && u <= q(1, 1) && best.as_ref().is_none_or(|bt| t < *bt) {
                best = Some(t);
            }
        }
    }
    best.map(|t| t * (v.0.abs() + v.1.abs()))
}

#[test]
fn flight_length_matches_brute_force() {
    let g = Configuration::new(
        q(1, 1),
        Source::Union { parts: vec![Source::Ringed { n: 2 }, Source::Explicit { centers: vec![Center::from_ratios((0, 1), (0, 1))] }] },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let theta = random_theta(&mut rng);
        let b = BoundaryState {
            center: Center::from_ratios((0, 1), (0, 1)),
            s_coord: q(rng.random_range(1..1024), 1024),
            quadrant: Quadrant::new(rng.random_range(1..=4)).unwrap(),
        };
        if b.s_coord == q(1, 2) {
            continue;
        }
        match billiard_step(&g, &theta, &b, &q(100, 1)).unwrap() {
            BilliardOutcome::Hit { flight_length, .. } => assert_eq!(Some(flight_length), brute_force_flight(&g, &theta, &b)),
            BilliardOutcome::CornerStop { .. } => assert!(brute_force_flight(&g, &theta, &b).is_some()),
            BilliardOutcome::Escape { .. } => panic!("the ring is closed"),
        }
    }
}

/// Endpoints of a short interval landing on the same side carry the same
/// flux-weighted length.
#[test]
fn transverse_length_is_preserved() {
    let g = table();
    let s = g.diameter().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r_max = q(200, 1);
    let mut checked = 0;
    for _ in 0..3000 {
        let theta = random_theta(&mut rng);
        let a = random_state(&mut rng, &g, &theta, &s);
        let b = BoundaryState { s_coord: &a.s_coord + q(1, 1 << 20), ..a.clone() };
        if a.locate(&theta, &s).map(|x| x.1) != b.locate(&theta, &s).map(|x| x.1) {
            continue;
        }
        let (BilliardOutcome::Hit { state: ta, .. }, BilliardOutcome::Hit { state: tb, .. }) =
            (billiard_step(&g, &theta, &a, &r_max).unwrap(), billiard_step(&g, &theta, &b, &r_max).unwrap())
        else {
            continue;
        };
        if ta.center != tb.center || ta.locate(&theta, &s).map(|x| x.1) != tb.locate(&theta, &s).map(|x| x.1) {
            continue;
        }
        let before = (&b.s_coord - &a.s_coord) * a.flux_density(&theta, &s).unwrap();
        let after = (&tb.s_coord - &ta.s_coord).abs() * ta.flux_density(&theta, &s).unwrap();
        assert_eq!(before, after);
        checked += 1;
    }
    assert!(checked > 1000, "{checked}");
}

fn random_config(rng: &mut ChaCha8Rng) -> Configuration {
    let mut centers: Vec<Center> = Vec::new();
    for _ in 0..rng.random_range(0..6) {
        let c = Center::from_ratios((rng.random_range(-12..=12), 2), (rng.random_range(-12..=12), 2));
        if centers.iter().all(|d| d.l1(&c) >= q(1, 1)) {
            centers.push(c);
        }
    }
    Configuration::explicit(q(1, 1), centers).unwrap()
}

#[test]
fn hausdorff_is_a_metric_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let r = q(20, 1);
    let d = |a: &Configuration, b: &Configuration| hausdorff_distance(a, b, &r).distance;
    for _ in 0..100 {
        let (a, b, c) = (random_config(&mut rng), random_config(&mut rng), random_config(&mut rng));
        assert_eq!(d(&a, &a), 0.0);
        assert_eq!(d(&a, &b), d(&b, &a));
        assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        let same = a.centers_in_region(&stairtree::windtree::Region::square(&r)) == b.centers_in_region(&stairtree::windtree::Region::square(&r));
        assert_eq!(d(&a, &b) == 0.0, same);
    }
}

#[test]
fn ring_orbit_stays_inside() {
    let g = table();
    let theta = WindDirection::new(q(3, 7), q(10, 11)).unwrap();
    let sys = stairtree::windtree::WindTreeSystem::new(g, theta);
    let mut b = BoundaryState { center: Center::from_ratios((0, 1), (0, 1)), s_coord: q(1, 3), quadrant: Quadrant::new(1).unwrap() };
    for _ in 0..20_000 {
        match sys.forward(&b) {
            stairtree::section::Transition::Moved { to, .. } => b = to,
            stairtree::section::Transition::Stopped(reason) => {
                assert_ne!(reason, stairtree::section::StopReason::Escaped);
                break;
            }
        }
        assert!(b.center.l1_norm() <= q(3, 1), "left the ring at {}", b.center);
    }
}
