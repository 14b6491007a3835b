use std::sync::Arc;

use dia_sgn::semantic_graph::*;
use dia_sgn::dynamic_env::{AgentId, AgentState, DiaFeatures, DynamicEnvConfig, SceneSnapshot};
use dia_sgn::sgn::GmmParams;
use dia_sgn::static_env::{FrenetPose, RefPointKind, ReferencePath, RoadMap, Vec2};

fn agent(id: u32, path: &str, s: f64, v: f64) -> AgentState {
    AgentState { id: AgentId(id), path: path.into(), pose: FrenetPose::new(s, 0.0), v, a: 0.0, length: 4.0 }
}

fn crossing() -> Arc<RoadMap> {
    let mut a = ReferencePath::new("a", &[Vec2::new(0.0, 0.0), Vec2::new(120.0, 0.0)], 12.0).unwrap();
    let mut b = ReferencePath::new("b", &[Vec2::new(60.0, -60.0), Vec2::new(60.0, 60.0)], 10.0).unwrap();
    a.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("b".into()), None).unwrap();
    b.add_reference_point(RefPointKind::PointOverlap, Vec2::new(60.0, 0.0), Some("a".into()), None).unwrap();
    Arc::new(RoadMap::new(vec![a, b], &[]).unwrap())
}

fn cfg() -> DynamicEnvConfig {
    DynamicEnvConfig::default()
}

#[test]
fn graph_sizes() {
    let scene = SceneSnapshot::new(
        0.0,
        crossing(),
        vec![agent(0, "a", 10.0, 8.0), agent(1, "a", 30.0, 8.0), agent(2, "b", 25.0, 9.0)],
    );
    let g = build_2dsg(&scene, AgentId(0), &cfg()).unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(g.reference_node().key.rear_agent, AgentId(0));
    assert_eq!(g.edges().count(), 4);

    let empty = SceneSnapshot::new(0.0, crossing(), vec![agent(0, "a", 10.0, 8.0)]);
    let g = build_2dsg(&empty, AgentId(0), &cfg()).unwrap();
    assert_eq!((g.len(), g.reference), (1, 0));

    // three cars queued on the crossing path: three gaps plus the front DIA
    let busy = SceneSnapshot::new(
        0.0,
        crossing(),
        vec![agent(0, "a", 10.0, 8.0), agent(1, "b", 5.0, 9.0), agent(2, "b", 20.0, 9.0), agent(3, "b", 40.0, 9.0)],
    );
    assert_eq!(build_2dsg(&busy, AgentId(0), &cfg()).unwrap().len(), 4);
}

#[test]
fn relative_features() {
    let xi = DiaFeatures { d_lon_f: 5.0, theta: 0.0, ..Default::default() };
    let xj = DiaFeatures { d_lon_f: 20.0, theta: std::f64::consts::FRAC_PI_2, ..Default::default() };
    let self_rel = relative_node_feature(&xi, &xi);
    assert!(self_rel[..10].iter().all(|&v| v == 0.0));
    let r = relative_node_feature(&xi, &xj);
    assert_eq!(r[6], 15.0);
    assert_eq!(r[1], std::f64::consts::FRAC_PI_2);
    assert_eq!(r[16], 20.0);
    let wrapped = relative_node_feature(
        &DiaFeatures { theta: 3.0, ..Default::default() },
        &DiaFeatures { theta: -3.0, ..Default::default() },
    );
    assert!((wrapped[1] - (2.0 * std::f64::consts::PI - 6.0)).abs() < 1e-12);
    assert!(relative_node_feature_slice(&[0.0; 9], &[0.0; 10]).is_err());
    assert_eq!(relative_node_feature_slice(&xi.to_array(), &xj.to_array()).unwrap(), r.to_vec());
}

#[test]
fn crossing_angle_difference() {
    let scene = SceneSnapshot::new(
        0.0,
        crossing(),
        vec![agent(0, "a", 10.0, 8.0), agent(2, "b", 25.0, 9.0)],
    );
    let g = build_2dsg(&scene, AgentId(0), &cfg()).unwrap();
    let other = 1 - g.reference;
    let r = relative_node_feature(&g.reference_node().features, &g.nodes[other].features);
    assert!((r[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
}

#[test]
fn history_alignment() {
    let s0 = SceneSnapshot::new(0.0, crossing(), vec![agent(0, "a", 10.0, 8.0), agent(2, "b", 25.0, 9.0)]);
    let mut s1 = s0.clone();
    s1.timestamp = 0.1;
    let h = align_history(&[s0.clone(), s1.clone()], AgentId(0), &cfg(), 2).unwrap();
    assert_eq!(h.len(), 2);
    assert!(h.correspondence().iter().all(|c| c.iter().all(Option::is_some)));

    let mut s2 = s1.clone();
    s2.timestamp = 0.2;
    s2.agents.push(agent(3, "b", 5.0, 9.0));
    let h = align_history(&[s1.clone(), s2.clone()], AgentId(0), &cfg(), 2).unwrap();
    let input = h.to_input(&Normalization::default()).unwrap();
    assert_eq!(input.node_count(), 3);
    let newborn = input.keys.iter().position(|k| k.rear_agent == AgentId(3)).unwrap();
    assert!(input.frames[0].as_ref().unwrap().relative[newborn].is_none());
    assert!(input.frames[1].as_ref().unwrap().relative[newborn].is_some());

    let h = align_history(&[s0.clone(), s1.clone(), s2.clone()], AgentId(0), &cfg(), 2).unwrap();
    assert_eq!(h.len(), 2);
    assert_eq!(h.frames[0].timestamp, 0.1);

    assert!(align_history(&[s1, s0], AgentId(0), &cfg(), 2).is_err());
}

#[test]
fn three_d_sampling() {
    let scene = SceneSnapshot::new(3.0, crossing(), vec![agent(0, "a", 10.0, 8.0), agent(2, "b", 25.0, 9.0)]);
    let g = build_2dsg(&scene, AgentId(0), &cfg()).unwrap();
    let gmm = GmmParams {
        alpha: vec![1.0],
        mu: vec![[4.0, 2.0, 1.5]],
        sigma: vec![[[1e-12, 0.0, 0.0], [0.0, 1e-12, 0.0], [0.0, 0.0, 1e-12]]],
    };
    let outs = vec![(gmm.clone(), 0.25), (gmm, 0.75)];
    let a = assemble_3dsg(&g, &outs, 50, 7).unwrap();
    assert_eq!(a.len(), 50);
    for s in &a {
        let total: f64 = s.edges.iter().map(|e| e.w).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for e in &s.edges {
            assert!((e.y[0] - 4.0).abs() < 1e-4 && (e.t_j - 4.5).abs() < 1e-4);
            assert!(e.t_j >= e.t_i);
            assert_eq!(e.i, g.reference);
        }
    }
    assert_eq!(export_3dsg_json(&a), export_3dsg_json(&assemble_3dsg(&g, &outs, 50, 7).unwrap()));
    let bad = vec![(GmmParams { alpha: vec![0.5], ..outs[0].0.clone() }, 1.0), outs[1].clone()];
    assert!(assemble_3dsg(&g, &bad, 1, 7).is_err());
}
