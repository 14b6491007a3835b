use std::sync::Arc;

use dia_sgn::dynamic_env::*;
use dia_sgn::static_env::{FrenetPose, LightState, PathId, RefPointKind, ReferencePath, RoadMap, Vec2};

fn straight(id: &str, from: (f64, f64), to: (f64, f64), limit: f64) -> ReferencePath<f64> {
    ReferencePath::new(id, &[Vec2::new(from.0, from.1), Vec2::new(to.0, to.1)], limit).unwrap()
}

fn agent(id: u32, path: &str, s: f64, v: f64) -> AgentState {
    AgentState { id: AgentId(id), path: PathId::new(path), pose: FrenetPose::new(s, 0.0), v, a: 0.0, length: 4.0 }
}

fn crossing_map() -> Arc<RoadMap> {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 12.0);
    let mut b = straight("b", (60.0, -60.0), (60.0, 60.0), 10.0);
    a.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("b".into()), None).unwrap();
    b.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("a".into()), None).unwrap();
    Arc::new(RoadMap::new(vec![a, b], &[]).unwrap())
}

fn cfg() -> DynamicEnvConfig {
    DynamicEnvConfig::default()
}

#[test]
fn red_light_is_active() {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 12.0);
    a.add_reference_point(RefPointKind::TrafficLight, Vec2::new(40.0, 0.0), None, Some(LightState::Red))
        .unwrap();
    let map = Arc::new(RoadMap::new(vec![a], &[]).unwrap());
    let scene = SceneSnapshot::new(0.0, map, vec![agent(0, "a", 10.0, 5.0)]);
    let rpt = select_active_reference_point(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::TrafficLight);
    assert_eq!(rpt.point.s_on_path, 40.0);

    let dias = extract_dias(&scene, AgentId(0), &rpt, &cfg()).unwrap();
    assert_eq!(dias.len(), 1);
    assert_eq!(dias[0].front_source, BoundarySource::StopLine);
    assert_eq!(dias[0].front.v, 0.0);
    let f = dia_features(&dias[0], &rpt, &scene.map, &cfg()).unwrap();
    assert_eq!((f.v_f, f.a_f), (0.0, 0.0));
    assert_eq!(f.theta, 0.0);
    assert_eq!(dia_state(&dias[0], 0.1), DiaState::PartiallyMoving);
}

#[test]
fn green_light_is_skipped() {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 12.0);
    a.add_reference_point(RefPointKind::TrafficLight, Vec2::new(40.0, 0.0), None, Some(LightState::Red))
        .unwrap();
    let map = Arc::new(RoadMap::new(vec![a], &[]).unwrap());
    let light = map.traffic_lights()[0].clone();
    let mut scene = SceneSnapshot::new(0.0, map, vec![agent(0, "a", 10.0, 5.0)]);
    scene.light_states.insert(light, LightState::Green);
    let rpt = select_active_reference_point(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::Horizon);
    assert_eq!(rpt.point.s_on_path, 44.0);
}

#[test]
fn occupied_crossing_is_active() {
    let scene = SceneSnapshot::new(0.0, crossing_map(), vec![agent(0, "a", 10.0, 8.0), agent(1, "b", 20.0, 8.0)]);
    let rpt = select_active_reference_point(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::PointOverlap);
    assert_eq!(rpt.point.s_on_path, 60.0);
}

#[test]
fn empty_crossing_falls_back_to_horizon() {
    let scene = SceneSnapshot::new(0.0, crossing_map(), vec![agent(0, "a", 10.0, 8.0)]);
    let rpt = select_active_reference_point(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::Horizon);
    assert_eq!(rpt.point.s_on_path, 14.0 + 30.0);
    assert_eq!(rpt.point.location, Vec2::new(44.0, 0.0));
}

#[test]
fn horizon_clipped_to_path_end() {
    let scene = SceneSnapshot::new(0.0, crossing_map(), vec![agent(0, "a", 100.0, 8.0)]);
    let rpt = select_active_reference_point(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.s_on_path, 120.0);
}

#[test]
fn point_overlap_scene() {
    // ego behind a lead car, one car approaching the crossing
    let scene = SceneSnapshot::new(
        0.0,
        crossing_map(),
        vec![agent(0, "a", 10.0, 8.0), agent(1, "a", 30.0, 8.0), agent(2, "b", 25.0, 9.0)],
    );
    let ex = extract_scene(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(ex.dias.len(), 2);
    let a1 = &ex.dias[ex.reference];
    assert_eq!(a1.front_source, BoundarySource::Agent(AgentId(1)));
    assert_eq!(a1.rear_source, BoundarySource::Agent(AgentId(0)));
    let a2 = ex.dias.iter().find(|d| d.ref_path.as_str() == "b").unwrap();
    assert_eq!(a2.front_source, BoundarySource::ActiveRefPoint);
    assert_eq!(a2.front.v, 10.0);
    assert_eq!(a2.front.a, 0.0);
    // A1: front at s=30, rear bumper at 14, crossing at 60
    let f1 = ex.features[ex.reference];
    assert_eq!((f1.d_lon_f, f1.d_lon_r, f1.l), (30.0, 46.0, 16.0));
    let f2 = ex.features[ex.position(&a2.key).unwrap()];
    assert_eq!((f2.d_lon_f, f2.d_lon_r), (0.0, 60.0 - 29.0));
    assert!((f2.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
}

#[test]
fn lead_past_active_point_does_not_bound() {
    let scene = SceneSnapshot::new(
        0.0,
        crossing_map(),
        vec![agent(0, "a", 10.0, 8.0), agent(1, "a", 70.0, 8.0), agent(2, "b", 25.0, 9.0)],
    );
    let ex = extract_scene(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(ex.dias[ex.reference].front_source, BoundarySource::ActiveRefPoint);
}

#[test]
fn undecided_overlap_scene() {
    let a = straight("a", (0.0, 0.0), (200.0, 0.0), 12.0);
    let b = straight("b", (0.0, 3.5), (200.0, 3.5), 12.0);
    let map = Arc::new(RoadMap::new(vec![a, b], &[("a".into(), "b".into())]).unwrap());
    let scene = SceneSnapshot::new(
        0.0,
        map,
        vec![agent(0, "a", 50.0, 10.0), agent(1, "b", 40.0, 10.0), agent(2, "b", 90.0, 10.0)],
    );
    let ex = extract_scene(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(ex.active.point.kind, RefPointKind::Horizon);
    assert_eq!(ex.dias.len(), 2);
    let gap = ex.dias.iter().find(|d| d.ref_path.as_str() == "b").unwrap();
    assert_eq!(gap.key.rear_agent, AgentId(1));
    assert_eq!(gap.front_source, BoundarySource::SpeedLimitHorizon);
    let f = ex.features[ex.position(&gap.key).unwrap()];
    assert!((f.d_lon_f - 0.0).abs() < 1e-9 && (f.d_lon_r - (84.0 - 44.0)).abs() < 1e-9);
}

#[test]
fn stop_sign_two_stage() {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 10.0);
    let mut b = straight("b", (60.0, -60.0), (60.0, 60.0), 12.0);
    a.add_reference_point(RefPointKind::StopLine, Vec2::new(50.0, 0.0), None, None).unwrap();
    a.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("b".into()), None).unwrap();
    b.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("a".into()), None).unwrap();
    let map = Arc::new(RoadMap::new(vec![a, b], &[]).unwrap());
    let c = cfg();

    let approaching = SceneSnapshot::new(0.0, map.clone(), vec![agent(0, "a", 30.0, 8.0), agent(1, "b", 20.0, 8.0)]);
    let t = apply_regulatory_transform(&approaching, AgentId(0), &c).unwrap();
    let rpt = select_active_reference_point(&t, AgentId(0), &c).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::VirtualStopLine);
    assert_eq!(rpt.point.s_on_path, 45.0);
    let ex = extract_scene(&approaching, AgentId(0), &c).unwrap();
    assert_eq!(ex.dias.len(), 1);
    assert_eq!(ex.dias[0].front_source, BoundarySource::VirtualStopLine);

    let stopped = SceneSnapshot::new(0.0, map, vec![agent(0, "a", 45.0, 0.0), agent(1, "b", 20.0, 8.0)]);
    let t = apply_regulatory_transform(&stopped, AgentId(0), &c).unwrap();
    assert!(t.overrides.virtual_points.is_empty());
    let rpt = select_active_reference_point(&t, AgentId(0), &c).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::PointOverlap);
    assert_eq!(extract_scene(&stopped, AgentId(0), &c).unwrap().dias.len(), 2);
}

#[test]
fn fast_yield_sign_is_transparent() {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 12.0);
    let mut b = straight("b", (60.0, -60.0), (60.0, 60.0), 12.0);
    a.add_reference_point(RefPointKind::YieldLine, Vec2::new(50.0, 0.0), None, None).unwrap();
    a.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("b".into()), None).unwrap();
    b.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("a".into()), None).unwrap();
    let map = Arc::new(RoadMap::new(vec![a, b], &[]).unwrap());
    let scene = SceneSnapshot::new(0.0, map, vec![agent(0, "a", 30.0, 8.0), agent(1, "b", 20.0, 8.0)]);
    let t = apply_regulatory_transform(&scene, AgentId(0), &cfg()).unwrap();
    assert!(t.overrides.virtual_points.is_empty());
    assert_eq!(t.overrides.suppressed.len(), 1);
    let rpt = select_active_reference_point(&t, AgentId(0), &cfg()).unwrap();
    assert_eq!(rpt.point.kind, RefPointKind::PointOverlap);
}

#[test]
fn slow_yield_sign_gets_virtual_line() {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), 6.0);
    let mut b = straight("b", (60.0, -60.0), (60.0, 60.0), 12.0);
    a.add_reference_point(RefPointKind::YieldLine, Vec2::new(50.0, 0.0), None, None).unwrap();
    a.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("b".into()), None).unwrap();
    b.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("a".into()), None).unwrap();
    let map = Arc::new(RoadMap::new(vec![a, b], &[]).unwrap());
    let scene = SceneSnapshot::new(0.0, map, vec![agent(0, "a", 30.0, 6.0)]);
    let t = apply_regulatory_transform(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(t.overrides.virtual_points.len(), 1);
}

#[test]
fn states() {
    let mut dia = Dia {
        key: DiaKey { path: "a".into(), rear_agent: AgentId(0) },
        ref_path: "a".into(),
        front: BoundaryState { position: Vec2::new(0.0, 0.0), s: 10.0, d: 0.0, v: 10.0, a: 0.0 },
        rear: BoundaryState { position: Vec2::new(0.0, 0.0), s: 0.0, d: 0.0, v: 8.0, a: 0.0 },
        front_source: BoundarySource::ActiveRefPoint,
        rear_source: BoundarySource::Agent(AgentId(0)),
    };
    assert_eq!(dia_state(&dia, 0.1), DiaState::Moving);
    dia.front.v = 0.0;
    dia.rear.v = 5.0;
    assert_eq!(dia_state(&dia, 0.1), DiaState::PartiallyMoving);
    dia.rear.v = 0.0;
    assert_eq!(dia_state(&dia, 0.1), DiaState::Stopped);
}

#[test]
fn unplaced_ego() {
    let scene = SceneSnapshot::new(0.0, crossing_map(), vec![agent(0, "zz", 10.0, 8.0)]);
    assert_eq!(select_active_reference_point(&scene, AgentId(0), &cfg()), Err(dia_sgn::error::DiaError::NoEgoPath(0)));
    assert!(extract_scene(&scene, AgentId(7), &cfg()).is_err());
}

#[test]
fn extraction_is_deterministic_and_shares_origin() {
    let scene = SceneSnapshot::new(
        0.0,
        crossing_map(),
        vec![agent(0, "a", 10.0, 8.0), agent(2, "b", 25.0, 9.0), agent(3, "b", 5.0, 9.0), agent(1, "a", 30.0, 8.0)],
    );
    let a = extract_scene(&scene, AgentId(0), &cfg()).unwrap();
    let mut shuffled = scene.clone();
    shuffled.agents.reverse();
    let b = extract_scene(&shuffled, AgentId(0), &cfg()).unwrap();
    assert_eq!(a.dias, b.dias);
    assert_eq!(a.features, b.features);
    assert!(a.features.iter().all(|f| f.l >= 0.0 && f.l == (f.d_lon_f - f.d_lon_r).abs()));
    assert_eq!(a.dias.iter().filter(|d| d.ref_path.as_str() == "a").count(), 1);
}
