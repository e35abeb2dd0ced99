use std::sync::{Arc, OnceLock};

use nalgebra::{Vector3, Vector6};
use proptest::prelude::*;
use semfilter::filter::CertStatus;
use semfilter::geometry::EnvelopeOptions;
use semfilter::io::CommandStream;
use semfilter::sim::*;
use semfilter::{KinematicChain, PoseConstraint, Relationship};

fn books() -> Arc<World> {
    static WORLD: OnceLock<Arc<World>> = OnceLock::new();
    WORLD
        .get_or_init(|| {
            let scene = builtin_scene("books", 7).unwrap();
            Arc::new(World::new(KinematicChain::fr3(), scene, EnvelopeOptions::default()).unwrap())
        })
        .clone()
}

fn laptop_books() -> Arc<World> {
    static WORLD: OnceLock<Arc<World>> = OnceLock::new();
    WORLD
        .get_or_init(|| {
            let scene = builtin_scene("laptop_books", 7).unwrap();
            Arc::new(World::new(KinematicChain::fr3(), scene, EnvelopeOptions::default()).unwrap())
        })
        .clone()
}

fn session(held: &str, filter: bool) -> SimSession {
    let mut s = SimSession::new(books(), SessionConfig { filter, ..Default::default() }).unwrap();
    s.set_held_object(held, &builtin_fixture()).unwrap();
    s
}

fn toward_books(s: &SimSession, speed: f64, duration: f64) -> CommandStream {
    let start = s.world.chain.frames(&s.q).unwrap().ee.translation.vector;
    let (target, _) = stream_target(&s.world.scene.clouds[0]);
    constant_stream((target - start).normalize() * speed, duration)
}

#[test]
fn home_is_safe_for_every_held_object() {
    for (held, _) in HELD_OBJECTS {
        let s = session(held, true);
        assert!(s.barriers().unwrap().min_all() > 0.0, "{held}");
    }
}

#[test]
fn cup_of_water_forbids_above_books() {
    let s = session("cup of water", true);
    assert!(s.context.spatial.iter().any(|c| c.object == "books" && c.relationship == Relationship::Above));
    assert_eq!(s.context.pose, PoseConstraint::ConstrainedRotation);
    assert_eq!(s.stack.sem.len(), s.context.spatial.len());
}

#[test]
fn zero_twist_keeps_configuration() {
    let mut s = session("knife", true);
    let q0 = s.q.clone();
    for _ in 0..20 {
        let r = s.step(&Vector6::zeros()).unwrap();
        assert_eq!(r.status, CertStatus::Optimal);
    }
    assert!((&s.q - &q0).amax() < 1e-12);
    assert_eq!(s.tick, 20);
}

#[test]
fn empty_stream_scores_zero() {
    let mut s = session("knife", true);
    let (r, log) = s.run_stream(&constant_stream(Vector3::x(), 0.0), "empty").unwrap();
    assert!(log.is_empty());
    assert_eq!(r.violation_fraction, 0.0);
}

#[test]
fn replays_are_deterministic() {
    let stream = random_stream(4.0, 0.2, 3);
    let run = || {
        let mut log = session("lit candle", true).run_stream(&stream, "r").unwrap().1;
        // wall-clock timing is the one field allowed to differ
        log.iter_mut().for_each(|t| t.solve_time = 0.0);
        serde_json::to_string(&log).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn unfiltered_pierce_is_flagged_by_barrier_and_oracle() {
    let mut s = session("none", false);
    let stream = toward_books(&s, 0.15, 6.0);
    let (r, log) = s.run_stream(&stream, "pierce").unwrap();
    assert!(r.violation_fraction > 0.0);
    let rep = brute_force_oracle(&s, &log, &OracleConfig::default());
    assert!(rep.ticks.iter().any(|t| t.oracle && t.barrier));
    assert!(rep.agreement_rate() > 0.95);
}

#[test]
fn filtered_pierce_stays_safe() {
    let mut s = session("cup of water", true);
    let stream = toward_books(&s, 0.15, 6.0);
    let (r, log) = s.run_stream(&stream, "pierce").unwrap();
    assert_eq!(r.violation_fraction, 0.0);
    assert!(log.iter().all(|t| t.min_h() >= -1e-3));
    assert_eq!(brute_force_oracle(&s, &log, &OracleConfig::default()).violations(), 0);
}

#[test]
fn unit_caution_weight_changes_nothing() {
    let mut s = session("knife", true);
    let stream = toward_books(&s, 0.02, 3.0);
    // knife has no spatial rows here; give it one so the comparison applies
    let mut ctx = s.context.clone();
    ctx.spatial = vec![semfilter::semantic::SpatialConstraint { object: "books".into(), relationship: Relationship::Above }];
    s.set_context("knife", ctx).unwrap();
    let c = caution_comparison(&s, &stream, 1.0).unwrap();
    assert_eq!(c.nominal.h, c.cautious.h);
}

#[test]
fn unknown_object_warns_and_is_permissive() {
    let s = session("rubber duck", true);
    assert_eq!(s.warnings.len(), 1);
    assert!(s.context.spatial.is_empty());
    assert_eq!(s.context.pose, PoseConstraint::FreeRotation);
}

#[test]
fn non_positive_dt_is_rejected() {
    let err = SimSession::new(books(), SessionConfig { dt: 0.0, ..Default::default() }).unwrap_err();
    assert!(matches!(err, SimError::InvalidConfig(_)));
}

#[test]
fn envelope_cache_returns_the_same_members() {
    let w = books();
    let id = w.scene.clouds[0].object_id.clone();
    assert_eq!(w.envelope(&id, Relationship::Above).unwrap(), w.envelope(&id, Relationship::Above).unwrap());
}

/// Lines up with the laptop at end effector height, then pushes along -y
/// across it for `push_time` seconds.
fn push_over_laptop(held: &str, push_time: f64) -> (SimSession, Vec<semfilter::io::TickRecord>) {
    let mut s = SimSession::new(laptop_books(), SessionConfig::default()).unwrap();
    s.set_held_object(held, &builtin_fixture()).unwrap();
    let laptop = s.world.scene.clouds.iter().find(|c| c.label == "laptop").unwrap();
    let (center, _) = stream_target(laptop);
    let start = s.world.chain.frames(&s.q).unwrap().ee.translation.vector;
    let lineup = Vector3::new(center.x, start.y, start.z) - start;
    let (t1, speed) = (4.0, 0.03);
    let stream = path_stream(
        STREAM_RATE,
        t1 + push_time,
        |t| if t < t1 { lineup * (t / t1) } else { lineup - Vector3::y() * speed * (t - t1) },
        |_| Vector3::zeros(),
    );
    let (_, log) = s.run_stream(&stream, "over").unwrap();
    (s, log)
}

fn over_laptop_footprint(s: &SimSession, x: &[f64; 3]) -> bool {
    let bb = s.world.scene.clouds.iter().find(|c| c.label == "laptop").unwrap().aabb();
    (0..2).all(|k| x[k] > bb.min[k] && x[k] < bb.max[k])
}

#[test]
fn cup_of_water_stops_at_the_above_laptop_envelope() {
    let (s, log) = push_over_laptop("cup of water", 90.0);
    let ev = s.barriers().unwrap();
    let h_end = (0..ev.rows())
        .filter(|&r| ev.labels[r].object.as_deref().is_some_and(|o| o.starts_with("laptop")) && ev.labels[r].detail.starts_with("above"))
        .map(|r| ev.h[r])
        .fold(f64::INFINITY, f64::min);
    assert!((0.0..=0.05).contains(&h_end), "terminal h {h_end}");
    assert!(log.iter().all(|t| t.min_h() >= -1e-3));
    assert!(log.iter().all(|t| !over_laptop_footprint(&s, &t.x_ee)));
}

#[test]
fn dry_sponge_passes_over_the_laptop() {
    let (s, log) = push_over_laptop("dry sponge", 10.0);
    assert!(s.stack.sem.is_empty());
    assert!(log.iter().any(|t| over_laptop_footprint(&s, &t.x_ee)));
}

#[test]
fn clearing_the_held_object_frees_rotation() {
    let mut s = SimSession::new(laptop_books(), SessionConfig::default()).unwrap();
    s.set_held_object("cup of water", &builtin_fixture()).unwrap();
    assert!(s.rotation.is_active());
    s.set_held_object("none", &builtin_fixture()).unwrap();
    assert_eq!(s.rotation.w_rot, [0.0, 0.0]);
    assert!(s.stack.sem.is_empty());
}

#[test]
fn median_handles_even_and_odd() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn filtered_random_streams_never_violate(seed in 0u64..1000, held in 0usize..5, speed in 0.05f64..0.4) {
        let mut s = session(HELD_OBJECTS[held].0, true);
        let (r, log) = s.run_stream(&random_stream(3.0, speed, seed), "p").unwrap();
        prop_assert_eq!(r.violation_fraction, 0.0);
        prop_assert!(log.iter().all(|t| t.status != CertStatus::FallbackZero));
        let q = &s.q;
        prop_assert!(s.world.chain.limits.contains(q));
    }
}
