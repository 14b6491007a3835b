//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset: `cargo test --test acceptance -- 1 5`.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use dia_sgn::dynamic_env::{extract_scene, AgentId, AgentState, BoundarySource, DynamicEnvConfig, SceneSnapshot};
use dia_sgn::semantic_graph::{assemble_3dsg, export_3dsg_json, GraphHistory, Normalization, SemanticGraph2D};
use dia_sgn::sgn::{
    cholesky3, encode_model, forward, forward_tape, gmm_head, loss, record_loss, GmmParams, Preset, SgnConfig, SgnParams,
    GMM_OUTPUTS_PER_COMPONENT,
};
use dia_sgn::sim::{episode_csv, episode_samples, generate, labels_csv, GenerationConfig, SampleConfig, TemplateKind};
use dia_sgn::static_env::{FrenetPose, LightState, PathId, RefPointKind, ReferencePath, RoadMap, Vec2};
use dia_sgn::train::{evaluate, gradients, train, Sample, TrainConfig};
use dia_sgn::autodiff::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

// Pinned tolerances and budgets.
const FRENET_TOL: f64 = 1e-6;
const ARC_TOL: f64 = 1e-3;
const GEOMETRY_BUDGET: Duration = Duration::from_secs(5);
const DENSITY_REL_TOL: f64 = 1e-9;
const INTEGRAL_TOL: f64 = 0.02;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
/// Denominator floor of the relative gradient error, for parameters whose
/// gradient vanishes.
const GRAD_FLOOR: f64 = 1e-5;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const STRUCTURE_TOL: f64 = 1e-9;
const LEARN_ACCURACY: f64 = 0.90;
const LEARN_LOSS_DROP: f64 = 0.5;
const LEARN_BUDGET: Duration = Duration::from_secs(600);
const TRANSFER_MAX_DROP: f64 = 0.10;
const TRANSFER_BUDGET: Duration = Duration::from_secs(1200);
const ABLATION_TIE: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(t: Duration, budget: Duration) -> bool {
    t <= budget
}

// ---------------------------------------------------------------- 1

/// Random smooth path: constant-step polyline with slowly drifting heading.
fn random_path(rng: &mut ChaCha8Rng, id: usize) -> ReferencePath<f64> {
    let n = rng.gen_range(200..600);
    let mut p = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let mut heading: f64 = rng.gen_range(-PI..PI);
    let mut pts = vec![p];
    for _ in 0..n {
        heading += rng.gen_range(-0.01..0.01);
        p = p + Vec2::new(heading.cos(), heading.sin()) * 0.5;
        pts.push(p);
    }
    ReferencePath::new(format!("r{id}").as_str(), &pts, 10.0).unwrap()
}

fn crit_geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let path = random_path(&mut rng, k);
        for _ in 0..1000 {
            let s = rng.gen_range(0.0..path.length());
            let d = rng.gen_range(-3.0..3.0);
            let p = path.to_cartesian(FrenetPose::new(s, d)).unwrap();
            let f = path.to_frenet(p).unwrap();
            let back = path.to_cartesian(f).unwrap();
            worst = worst.max(p.distance(back));
        }
    }
    let arc: Vec<Vec2<f64>> = (0..64)
        .map(|i| {
            let a = PI / 2.0 * i as f64 / 63.0;
            Vec2::new(10.0 * a.cos(), 10.0 * a.sin())
        })
        .collect();
    let len = ReferencePath::new("arc", &arc, 10.0).unwrap().length();
    let arc_err = (len - 5.0 * PI).abs();
    let t = start.elapsed();
    outcome(
        worst < FRENET_TOL && arc_err < ARC_TOL && within(t, GEOMETRY_BUDGET),
        format!("max round-trip {worst:.2e} m over 20000 points, quarter arc error {arc_err:.2e}, {t:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

fn straight(id: &str, from: (f64, f64), to: (f64, f64), limit: f64) -> ReferencePath<f64> {
    ReferencePath::new(id, &[Vec2::new(from.0, from.1), Vec2::new(to.0, to.1)], limit).unwrap()
}

fn car(id: u32, path: &str, s: f64, v: f64) -> AgentState {
    AgentState { id: AgentId(id), path: PathId::new(path), pose: FrenetPose::new(s, 0.0), v, a: 0.0, length: 4.0 }
}

fn annotate(p: &mut ReferencePath<f64>, kind: RefPointKind, at: (f64, f64), partner: Option<&str>, light: Option<LightState>) {
    p.add_reference_point(kind, Vec2::new(at.0, at.1), partner.map(PathId::new), light).unwrap();
}

/// `a` runs east, `b` north, crossing at (60, 0); `a_extra` adds points on `a`.
fn crossing(a_limit: f64, b_limit: f64, a_extra: &[(RefPointKind, f64, Option<LightState>)]) -> Arc<RoadMap> {
    let mut a = straight("a", (0.0, 0.0), (120.0, 0.0), a_limit);
    let mut b = straight("b", (60.0, -60.0), (60.0, 60.0), b_limit);
    for &(kind, x, light) in a_extra {
        annotate(&mut a, kind, (x, 0.0), None, light);
    }
    annotate(&mut a, RefPointKind::PointOverlap, (60.0, 0.0), Some("b"), None);
    annotate(&mut b, RefPointKind::PointOverlap, (60.0, 0.0), Some("a"), None);
    Arc::new(RoadMap::new(vec![a, b], &[]).unwrap())
}

/// `ramp` joins `main` at (100, 0) and shares its tail.
fn merge() -> Arc<RoadMap> {
    let mut main = straight("main", (0.0, 0.0), (200.0, 0.0), 15.0);
    let mut ramp = ReferencePath::new("ramp", &[Vec2::new(40.0, -40.0), Vec2::new(100.0, 0.0), Vec2::new(200.0, 0.0)], 15.0).unwrap();
    annotate(&mut main, RefPointKind::LineOverlap, (100.0, 0.0), Some("ramp"), None);
    annotate(&mut ramp, RefPointKind::LineOverlap, (100.0, 0.0), Some("main"), None);
    Arc::new(RoadMap::new(vec![main, ramp], &[]).unwrap())
}

fn parallel() -> Arc<RoadMap> {
    let a = straight("a", (0.0, 0.0), (200.0, 0.0), 12.0);
    let b = straight("b", (0.0, 3.5), (200.0, 3.5), 12.0);
    Arc::new(RoadMap::new(vec![a, b], &[("a".into(), "b".into())]).unwrap())
}

type Expected = (RefPointKind, f64, Vec<(&'static str, u32, BoundarySource)>);

struct HandScene {
    name: &'static str,
    scene: SceneSnapshot,
    expected: Expected,
}

fn hand_scenes() -> Vec<HandScene> {
    use BoundarySource as B;
    use RefPointKind as K;
    let agent = |i| B::Agent(AgentId(i));
    let ramp_merge_s = (60.0f64 * 60.0 + 40.0 * 40.0).sqrt();
    let light_map = crossing(12.0, 10.0, &[(K::TrafficLight, 40.0, Some(LightState::Red))]);
    let mut green = SceneSnapshot::new(0.0, light_map.clone(), vec![car(0, "a", 10.0, 8.0), car(2, "b", 25.0, 9.0)]);
    let light = light_map.traffic_lights()[0].clone();
    green.light_states.insert(light, LightState::Green);
    let stop_map = crossing(10.0, 12.0, &[(K::StopLine, 50.0, None)]);
    let yield_map = crossing(12.0, 12.0, &[(K::YieldLine, 50.0, None)]);
    vec![
        HandScene {
            name: "crossing without cross traffic",
            scene: SceneSnapshot::new(0.0, crossing(12.0, 10.0, &[]), vec![car(0, "a", 10.0, 8.0)]),
            expected: (K::Horizon, 44.0, vec![("a", 0, B::SpeedLimitHorizon)]),
        },
        HandScene {
            name: "crossing with leader and cross traffic",
            scene: SceneSnapshot::new(0.0, crossing(12.0, 10.0, &[]), vec![car(0, "a", 10.0, 8.0), car(1, "a", 30.0, 8.0), car(2, "b", 25.0, 9.0)]),
            expected: (K::PointOverlap, 60.0, vec![("a", 0, agent(1)), ("b", 2, B::ActiveRefPoint)]),
        },
        HandScene {
            name: "crossing with a platoon",
            scene: SceneSnapshot::new(0.0, crossing(12.0, 10.0, &[]), vec![car(0, "a", 10.0, 8.0), car(2, "b", 25.0, 9.0), car(3, "b", 5.0, 9.0)]),
            expected: (K::PointOverlap, 60.0, vec![("a", 0, B::ActiveRefPoint), ("b", 3, agent(2)), ("b", 2, B::ActiveRefPoint)]),
        },
        HandScene {
            name: "crossing occupied by cross traffic",
            scene: SceneSnapshot::new(0.0, crossing(12.0, 10.0, &[]), vec![car(0, "a", 10.0, 8.0), car(2, "b", 58.0, 9.0), car(3, "b", 30.0, 9.0)]),
            expected: (K::PointOverlap, 60.0, vec![("a", 0, B::ActiveRefPoint), ("b", 3, agent(2))]),
        },
        HandScene {
            name: "merge with two upstream vehicles",
            scene: SceneSnapshot::new(0.0, merge(), vec![car(0, "ramp", 30.0, 10.0), car(1, "main", 50.0, 12.0), car(2, "main", 80.0, 12.0)]),
            expected: (K::LineOverlap, ramp_merge_s, vec![("main", 1, agent(2)), ("main", 2, B::ActiveRefPoint), ("ramp", 0, B::ActiveRefPoint)]),
        },
        HandScene {
            name: "merge with one vehicle already through",
            scene: SceneSnapshot::new(0.0, merge(), vec![car(0, "ramp", 30.0, 10.0), car(1, "main", 101.0, 12.0), car(2, "main", 60.0, 12.0)]),
            expected: (K::LineOverlap, ramp_merge_s, vec![("main", 2, B::ActiveRefPoint), ("ramp", 0, B::ActiveRefPoint)]),
        },
        HandScene {
            name: "parallel lanes",
            scene: SceneSnapshot::new(0.0, parallel(), vec![car(0, "a", 50.0, 10.0), car(1, "b", 40.0, 10.0), car(2, "b", 70.0, 10.0)]),
            expected: (K::Horizon, 84.0, vec![("a", 0, B::SpeedLimitHorizon), ("b", 1, agent(2)), ("b", 2, B::SpeedLimitHorizon)]),
        },
        HandScene {
            name: "red light before a crossing",
            scene: SceneSnapshot::new(0.0, light_map.clone(), vec![car(0, "a", 10.0, 8.0), car(2, "b", 25.0, 9.0)]),
            expected: (K::TrafficLight, 40.0, vec![("a", 0, B::StopLine)]),
        },
        HandScene { name: "green light before a crossing", scene: green, expected: (K::PointOverlap, 60.0, vec![("a", 0, B::ActiveRefPoint), ("b", 2, B::ActiveRefPoint)]) },
        HandScene {
            name: "stop sign, approaching",
            scene: SceneSnapshot::new(0.0, stop_map.clone(), vec![car(0, "a", 30.0, 8.0), car(1, "b", 20.0, 8.0)]),
            expected: (K::VirtualStopLine, 45.0, vec![("a", 0, B::VirtualStopLine)]),
        },
        HandScene {
            name: "stop sign, stopped",
            scene: SceneSnapshot::new(0.0, stop_map, vec![car(0, "a", 45.0, 0.0), car(1, "b", 20.0, 8.0)]),
            expected: (K::PointOverlap, 60.0, vec![("a", 0, B::ActiveRefPoint), ("b", 1, B::ActiveRefPoint)]),
        },
        HandScene {
            name: "yield sign on an equal-speed road",
            scene: SceneSnapshot::new(
                0.0,
                yield_map,
                vec![car(0, "a", 20.0, 8.0), car(3, "a", 35.0, 8.0), car(1, "b", 20.0, 8.0), car(2, "b", 40.0, 8.0)],
            ),
            expected: (K::PointOverlap, 60.0, vec![("a", 0, agent(3)), ("b", 1, agent(2)), ("b", 2, B::ActiveRefPoint)]),
        },
    ]
}

fn crit_extraction() -> Outcome {
    let scenes = hand_scenes();
    let mut failures = Vec::new();
    for hs in &scenes {
        let ex = extract_scene(&hs.scene, AgentId(0), &DynamicEnvConfig::default()).unwrap();
        let got: Vec<(String, u32, BoundarySource, BoundarySource)> =
            ex.dias.iter().map(|d| (d.key.path.to_string(), d.key.rear_agent.0, d.front_source, d.rear_source)).collect();
        let want: Vec<(String, u32, BoundarySource, BoundarySource)> = hs
            .expected
            .2
            .iter()
            .map(|&(p, r, f)| (p.to_string(), r, f, BoundarySource::Agent(AgentId(r))))
            .collect();
        let rpt_ok = ex.active.point.kind == hs.expected.0 && (ex.active.point.s_on_path - hs.expected.1).abs() < 1e-9;
        if got != want || !rpt_ok {
            failures.push(format!("{}: got {:?} at {:.3} with {got:?}", hs.name, ex.active.point.kind, ex.active.point.s_on_path));
        }
    }
    outcome(failures.is_empty(), if failures.is_empty() { format!("{} scenes match", scenes.len()) } else { failures.join("; ") })
}

// ---------------------------------------------------------------- 3

type M3 = [[f64; 3]; 3];

fn det3(a: &M3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inv3(a: &M3) -> M3 {
    let d = det3(a);
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
    [
        [c(1, 2, 1, 2) / d, -c(0, 2, 1, 2) / d, c(0, 1, 1, 2) / d],
        [-c(1, 2, 0, 2) / d, c(0, 2, 0, 2) / d, -c(0, 1, 0, 2) / d],
        [c(1, 2, 0, 1) / d, -c(0, 2, 0, 1) / d, c(0, 1, 0, 1) / d],
    ]
}

/// Mixture density from the textbook formula with explicit inverse and
/// determinant.
fn oracle_pdf(g: &GmmParams<f64>, y: [f64; 3]) -> f64 {
    (0..g.alpha.len())
        .map(|k| {
            let inv = inv3(&g.sigma[k]);
            let r = [y[0] - g.mu[k][0], y[1] - g.mu[k][1], y[2] - g.mu[k][2]];
            let q: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| r[i] * inv[i][j] * r[j]).sum();
            g.alpha[k] * (2.0 * PI).powf(-1.5) * det3(&g.sigma[k]).powf(-0.5) * (-0.5 * q).exp()
        })
        .sum()
}

fn oracle_cholesky(a: &M3) -> M3 {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (a[i][i] - s).sqrt() } else { (a[i][j] - s) / l[j][j] };
        }
    }
    l
}

fn random_mixture(rng: &mut ChaCha8Rng) -> GmmParams<f64> {
    let m = rng.gen_range(1..=5);
    let mut raw = vec![0.0; GMM_OUTPUTS_PER_COMPONENT * m];
    for (i, v) in raw.iter_mut().enumerate() {
        *v = if i < m {
            rng.gen_range(-2.0..2.0)
        } else if i < 4 * m {
            rng.gen_range(-2.0..2.0)
        } else {
            rng.gen_range(-0.5..0.5)
        };
    }
    gmm_head(&raw, m, 1e-3, false).unwrap()
}

fn crit_gmm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_rel = 0.0f64;
    let mut not_pd = 0;
    for _ in 0..1000 {
        let g = random_mixture(&mut rng);
        for s in &g.sigma {
            if cholesky3(s).is_none() {
                not_pd += 1;
            }
        }
        let k = rng.gen_range(0..g.alpha.len());
        let y = [0, 1, 2].map(|i| g.mu[k][i] + rng.gen_range(-2.0..2.0));
        let want = oracle_pdf(&g, y);
        let got = g.pdf(y).unwrap();
        worst_rel = worst_rel.max((got - want).abs() / want);
    }
    // importance sampling with each component's covariance inflated four
    // times, so the weight p/q stays bounded
    let mut worst_int = 0.0f64;
    for _ in 0..20 {
        let g = random_mixture(&mut rng);
        let wide = GmmParams { alpha: g.alpha.clone(), mu: g.mu.clone(), sigma: g.sigma.iter().map(|s| s.map(|r| r.map(|v| 4.0 * v))).collect() };
        let chol: Vec<M3> = wide.sigma.iter().map(oracle_cholesky).collect();
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let u: f64 = rng.gen();
            let mut k = 0;
            let mut c = wide.alpha[0];
            while u > c && k + 1 < wide.alpha.len() {
                k += 1;
                c += wide.alpha[k];
            }
            let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let l = &chol[k];
            let x = [0, 1, 2].map(|i| wide.mu[k][i] + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>());
            acc += g.pdf(x).unwrap() / oracle_pdf(&wide, x);
        }
        worst_int = worst_int.max((acc / n as f64 - 1.0).abs());
    }
    outcome(
        worst_rel < DENSITY_REL_TOL && worst_int < INTEGRAL_TOL && not_pd == 0,
        format!("max density rel err {worst_rel:.2e}, max |integral - 1| {worst_int:.4}, {not_pd} non-factorizable covariances"),
    )
}

// ---------------------------------------------------------------- 4

fn desk(seed: u64, ua: bool) -> SgnParams<f64> {
    let cfg = SgnConfig { dropout: 0.0, ua_sgn: ua, ..SgnConfig::preset(Preset::Desk) };
    SgnParams::init(cfg, seed).unwrap()
}

fn crit_gradient() -> Outcome {
    let start = Instant::now();
    let mut p = desk(4, false);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // biases start at zero; randomize them so every parameter is exercised
    for t in p.tensors.clone() {
        if t.name.ends_with(".bias") {
            for v in &mut p.data[t.offset..t.offset + t.len()] {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for (b, nodes) in [2usize, 3, 2, 3, 1].into_iter().enumerate() {
        let input = common::random_input(&mut rng, nodes, 2);
        let target = rng.gen_range(0..nodes);
        let y = common::random_y(&mut rng);
        let batch = [(&input, target, y)];
        let mut grad = vec![0.0; p.len()];
        let mut tape = Tape::new(&p.data);
        let tr = forward_tape::<f64, ChaCha8Rng>(&mut tape, &p, &input, None).unwrap();
        let l = record_loss(&mut tape, &p, &tr, target, y, 1.0).unwrap();
        tape.backward(l, 1.0, &mut grad);
        for i in 0..p.len() {
            let orig = p.data[i];
            p.data[i] = orig + GRAD_STEP;
            let up = loss(&p, &batch, 1.0).unwrap();
            p.data[i] = orig - GRAD_STEP;
            let down = loss(&p, &batch, 1.0).unwrap();
            p.data[i] = orig;
            let num = (up - down) / (2.0 * GRAD_STEP);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(GRAD_FLOOR);
            if rel > worst {
                worst = rel;
                worst_name = format!("{} (batch {b})", p.name_of(i));
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < GRAD_REL_TOL && within(t, GRADIENT_BUDGET),
        format!("{} parameters x 5 batches, max rel err {worst:.2e} at {worst_name}, {t:.1?}", p.len()),
    )
}

// ---------------------------------------------------------------- 5

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn gmm_flat(g: &GmmParams<f64>) -> Vec<f64> {
    g.alpha.iter().copied().chain(g.mu.iter().flatten().copied()).chain(g.sigma.iter().flatten().flatten().copied()).collect()
}

fn crit_structure() -> Outcome {
    let p = desk(5, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut perm_err = 0.0f64;
    let mut simplex_err = 0.0f64;
    for n in 1..=8usize {
        for _ in 0..5 {
            let input = common::random_input(&mut rng, n, 2);
            let a = forward(&p, &input).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let b = forward(&p, &input.permuted(&perm)).unwrap();
            for (q, &old) in perm.iter().enumerate() {
                perm_err = perm_err.max((b.edges[q].w - a.edges[old].w).abs());
                perm_err = perm_err.max(max_abs_diff(&gmm_flat(&b.edges[q].gmm), &gmm_flat(&a.edges[old].gmm)));
                let row: Vec<f64> = perm.iter().map(|&o| a.attention[old][o]).collect();
                perm_err = perm_err.max(max_abs_diff(&b.attention[q], &row));
            }
            assert_eq!(a.edges.len(), n);
            simplex_err = simplex_err.max((a.edges.iter().map(|e| e.w).sum::<f64>() - 1.0).abs());
            for row in &a.attention {
                simplex_err = simplex_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            for e in &a.edges {
                simplex_err = simplex_err.max((e.gmm.alpha.iter().sum::<f64>() - 1.0).abs());
                assert!(gmm_flat(&e.gmm).iter().all(|v| v.is_finite()));
            }
        }
    }
    let ua = desk(5, true);
    let batch: Vec<Sample> = (0..4)
        .map(|k| {
            let input = common::random_input(&mut rng, k + 2, 2);
            Sample { target: rng.gen_range(0..k + 2), input, y: common::random_y(&mut rng) }
        })
        .collect();
    let (_, g) = gradients(&ua, &batch, 1.0, None).unwrap();
    let ua_max = ua.attention_ranges().into_iter().flat_map(|r| g[r].to_vec()).fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        perm_err <= STRUCTURE_TOL && simplex_err <= STRUCTURE_TOL && ua_max == 0.0,
        format!("node counts 1-8 on one parameter set, permutation err {perm_err:.1e}, simplex err {simplex_err:.1e}, uniform-attention scorer |grad| {ua_max}"),
    )
}

// ---------------------------------------------------------------- 6, 9

struct Split {
    train: Vec<Sample>,
    test: Vec<Sample>,
}

/// Episodes with index divisible by five are held out.
fn split_dataset(kind: TemplateKind, episodes: usize, seed: u64, stride: usize, min_candidates: usize) -> Split {
    let gen = GenerationConfig::new(kind, episodes, seed);
    let sc = SampleConfig { stride, min_candidates, ..SampleConfig::default() };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    generate(&gen, |item, exs| {
        let s = episode_samples(exs, &item.labels, &sc)?;
        if item.index % 5 == 0 {
            test.extend(s);
        } else {
            train.extend(s);
        }
        Ok::<(), dia_sgn::error::SimError>(())
    })
    .unwrap();
    Split { train, test }
}

fn gap_acceptance_data() -> &'static Split {
    static DATA: OnceLock<Split> = OnceLock::new();
    DATA.get_or_init(|| split_dataset(TemplateKind::Merge, 2000, 7, 5, 3))
}

struct Trained {
    accuracy: f64,
    first_loss: f64,
    last_loss: f64,
}

fn train_variant(data: &Split, ua: bool, nc: bool, epochs: usize) -> Trained {
    let cfg = TrainConfig { epochs, ua_sgn: ua, nc_sgn: nc, seed: 7, ..TrainConfig::desk() };
    let (p, m) = train(&data.train, &cfg).unwrap();
    let eval = evaluate(&p, &data.test, 1, 7).unwrap();
    Trained {
        accuracy: eval.intention_accuracy,
        first_loss: m.loss_curve[0].mean_loss,
        last_loss: m.loss_curve.last().unwrap().mean_loss,
    }
}

fn full_model() -> &'static Trained {
    static FULL: OnceLock<Trained> = OnceLock::new();
    FULL.get_or_init(|| train_variant(gap_acceptance_data(), false, false, 50))
}

fn crit_learnability() -> Outcome {
    let start = Instant::now();
    let data = gap_acceptance_data();
    let m = full_model();
    // the loss is a negative log density and goes below zero, so the drop
    // is measured against the magnitude of the first epoch's loss
    let drop = (m.first_loss - m.last_loss) / m.first_loss.abs();
    let t = start.elapsed();
    outcome(
        m.accuracy >= LEARN_ACCURACY && drop >= LEARN_LOSS_DROP && within(t, LEARN_BUDGET),
        format!(
            "{} train / {} held-out samples, accuracy {:.4}, loss {:.3} -> {:.3} (drop {:.0}%), {t:.0?}",
            data.train.len(),
            data.test.len(),
            m.accuracy,
            m.first_loss,
            m.last_loss,
            100.0 * drop
        ),
    )
}

fn crit_ablation() -> Outcome {
    let data = gap_acceptance_data();
    let full = full_model().accuracy;
    let ua = train_variant(data, true, false, 50).accuracy;
    let nc = train_variant(data, false, true, 50).accuracy;
    outcome(
        full + ABLATION_TIE >= ua && ua + ABLATION_TIE >= nc,
        format!("held-out accuracy full {full:.4}, uniform attention {ua:.4}, no concatenation {nc:.4}"),
    )
}

// ---------------------------------------------------------------- 7

fn crit_transfer() -> Outcome {
    let start = Instant::now();
    let source = split_dataset(TemplateKind::Roundabout { n_ways: 8, radius: 25.0 }, 1000, 11, 5, 2);
    let target = split_dataset(TemplateKind::TIntersection, 1000, 13, 5, 2);
    let cfg = TrainConfig { epochs: 30, seed: 7, ..TrainConfig::desk() };
    let (transfer, _) = train(&source.train, &cfg).unwrap();
    let (same, _) = train(&target.train, &cfg).unwrap();
    let acc_transfer = evaluate(&transfer, &target.test, 1, 7).unwrap().intention_accuracy;
    let acc_same = evaluate(&same, &target.test, 1, 7).unwrap().intention_accuracy;
    let drop = acc_same - acc_transfer;
    let t = start.elapsed();
    outcome(
        drop <= TRANSFER_MAX_DROP && within(t, TRANSFER_BUDGET),
        format!(
            "on {} held-out T-junction samples: roundabout-trained {acc_transfer:.4}, T-junction-trained {acc_same:.4}, drop {:.1} points, {t:.0?}",
            target.test.len(),
            100.0 * drop
        ),
    )
}

// ---------------------------------------------------------------- 8

fn digest(bytes: impl AsRef<[u8]>) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Stage name and digest of every artifact of a small end-to-end run.
fn pipeline_digests() -> Vec<(&'static str, String)> {
    let gen = GenerationConfig::new(TemplateKind::TIntersection, 12, 3);
    let sc = SampleConfig { stride: 4, ..SampleConfig::default() };
    let mut episodes = Sha256::new();
    let mut labels = Sha256::new();
    let mut samples = Vec::new();
    let mut first = None;
    let (template, _) = generate(&gen, |item, exs| {
        episodes.update(episode_csv(&item.episode));
        labels.update(labels_csv(&item.episode, &item.labels));
        samples.extend(episode_samples(exs, &item.labels, &sc)?);
        if first.is_none() {
            first = Some(SemanticGraph2D::from_extraction(&exs[item.labels[0].frame]).unwrap());
        }
        Ok::<(), dia_sgn::error::SimError>(())
    })
    .unwrap();
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::desk() };
    let (params, metrics) = train(&samples, &cfg).unwrap();
    let eval = evaluate(&params, &samples, 50, 1).unwrap();
    let graph = first.unwrap();
    let mut history = GraphHistory::new(1);
    history.push(graph.clone()).unwrap();
    let pred = forward(&params, &history.to_input(&Normalization::default()).unwrap()).unwrap();
    let outs: Vec<_> = pred.edges.iter().map(|e| (e.gmm.clone(), e.w)).collect();
    let sg3 = export_3dsg_json(&assemble_3dsg(&graph, &outs, 50, 2).unwrap());
    vec![
        ("map", digest(template.map.to_json())),
        ("episodes", digest(episodes.finalize())),
        ("labels", digest(labels.finalize())),
        ("samples", digest(serde_json::to_vec(&samples).unwrap())),
        ("model", digest(encode_model(&params))),
        ("loss curve", digest(metrics.loss_curve_csv())),
        ("metrics", digest(eval.to_json())),
        ("3d graph", digest(sg3)),
    ]
}

fn crit_determinism() -> Outcome {
    let a = pipeline_digests();
    let b = pipeline_digests();
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0).collect();
    let summary: Vec<String> = a.iter().map(|(n, d)| format!("{n} {d}")).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() { format!("two runs identical: {}", summary.join(", ")) } else { format!("stages differ: {}", differing.join(", ")) },
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "geometry oracle suite", crit_geometry),
        (2, "DIA extraction on hand-built scenes", crit_extraction),
        (3, "mixture density correctness", crit_gmm),
        (4, "desk-preset gradient check", crit_gradient),
        (5, "structural invariants", crit_structure),
        (6, "learnability on gap acceptance", crit_learnability),
        (7, "zero-shot transfer roundabout to T-junction", crit_transfer),
        (8, "bit-reproducible pipeline", crit_determinism),
        (9, "ablation ordering", crit_ablation),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!("{verdict} criterion {id} ({name}): {} [{:.1?}]", result.detail, start.elapsed());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
