use std::collections::BTreeSet;

use super::dia::{BoundarySource, BoundaryState, Dia, DiaFeatures, DiaKey};
use super::scene::{AgentId, AgentState, DynamicEnvConfig, SceneSnapshot};
use crate::error::DiaError;
use crate::static_env::{FrenetPose, LightState, PathId, PointId, RefPointKind, ReferencePath, ReferencePoint, RoadMap};

/// Locations closer than this are treated as the same reference point.
const POINT_MATCH_TOLERANCE: f64 = 0.1;

/// The active reference point of a snapshot: the common origin of all
/// longitudinal DIA distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePoint {
    /// Path the point was selected on (the predicted vehicle's path).
    pub path: PathId,
    pub point: ReferencePoint<f64>,
    /// Annotated map point, if the point is not synthetic.
    pub id: Option<PointId>,
}

fn ego_state(scene: &SceneSnapshot, ego: AgentId) -> Result<(&AgentState, &ReferencePath<f64>), DiaError> {
    let agent = scene.agent(ego).ok_or(DiaError::NoEgoPath(ego.0))?;
    let path = scene.map.path(&agent.path).ok_or(DiaError::NoEgoPath(ego.0))?;
    Ok((agent, path))
}

/// Walks the reference points ahead of the predicted vehicle and returns the
/// first traffic sign or red light, or the first topological point whose
/// partner path carries another vehicle. Falls back to a synthetic point
/// `d_uo` ahead, clipped to the path end.
pub fn select_active_reference_point(
    scene: &SceneSnapshot,
    ego: AgentId,
    cfg: &DynamicEnvConfig,
) -> Result<ActivePoint, DiaError> {
    let (agent, path) = ego_state(scene, ego)?;
    let front = agent.front_s();
    for ep in scene.effective_points(&agent.path) {
        if ep.point.s_on_path <= front {
            continue;
        }
        let kind = ep.point.kind;
        let selected = if kind.is_regulatory() {
            kind.is_sign() || (kind == RefPointKind::TrafficLight && ep.point.light_state == Some(LightState::Red))
        } else if kind.is_topological() {
            let partner = ep.point.partner_path.as_ref().expect("topological points carry a partner");
            scene.agents_on(partner).any(|a| a.id != ego)
        } else {
            false
        };
        if selected {
            return Ok(ActivePoint { path: agent.path.clone(), point: ep.point, id: ep.id });
        }
    }
    let s = (front + cfg.d_uo).min(path.length()).max(0.0);
    Ok(ActivePoint {
        path: agent.path.clone(),
        point: ReferencePoint {
            location: path.point_at(s),
            s_on_path: s,
            kind: RefPointKind::Horizon,
            partner_path: None,
            light_state: None,
        },
        id: None,
    })
}

/// Arc length of the active point on `path`: its own annotation when the
/// path is the selection path, a matching topological annotation, or else
/// the projection of its location.
pub fn active_point_s_on(map: &RoadMap, rpt: &ActivePoint, path: &PathId, cfg: &DynamicEnvConfig) -> Result<f64, DiaError> {
    if path == &rpt.path {
        return Ok(rpt.point.s_on_path);
    }
    let p = map.require(path)?;
    if let Some(rp) = p
        .ref_points()
        .iter()
        .find(|rp| rp.kind.is_topological() && rp.location.distance(rpt.point.location) < POINT_MATCH_TOLERANCE)
    {
        return Ok(rp.s_on_path);
    }
    Ok(p.to_frenet_within(rpt.point.location, cfg.corridor_half_width)?.s)
}

fn boundary(path: &ReferencePath<f64>, s: f64, d: f64, v: f64, a: f64) -> Result<BoundaryState, DiaError> {
    let s_c = s.max(0.0).min(path.length());
    let position = path.to_cartesian(FrenetPose::new(s_c, d))?;
    Ok(BoundaryState { position, s, d, v, a })
}

fn agent_rear(path: &ReferencePath<f64>, ag: &AgentState) -> Result<BoundaryState, DiaError> {
    boundary(path, ag.rear_s(), ag.pose.d, ag.v, ag.a)
}

fn agent_front(path: &ReferencePath<f64>, ag: &AgentState) -> Result<BoundaryState, DiaError> {
    boundary(path, ag.front_s(), ag.pose.d, ag.v, ag.a)
}

/// Boundary placed at the active point when no vehicle bounds the area.
fn point_boundary(
    path: &ReferencePath<f64>,
    rpt: &ActivePoint,
    s: f64,
    own_path: bool,
) -> Result<(BoundaryState, BoundarySource), DiaError> {
    let kind = rpt.point.kind;
    let (source, v) = match kind {
        RefPointKind::VirtualStopLine if own_path => (BoundarySource::VirtualStopLine, 0.0),
        RefPointKind::StopLine | RefPointKind::TrafficLight | RefPointKind::YieldLine if own_path => {
            (BoundarySource::StopLine, 0.0)
        }
        RefPointKind::Horizon => (BoundarySource::SpeedLimitHorizon, path.speed_limit()),
        _ => (BoundarySource::ActiveRefPoint, path.speed_limit()),
    };
    Ok((boundary(path, s, 0.0, v, 0.0)?, source))
}

/// Paths whose DIAs are extracted besides the predicted vehicle's own: paths
/// passing through the active point, and paths declared parallel.
fn related_paths(map: &RoadMap, rpt: &ActivePoint) -> BTreeSet<PathId> {
    let mut out = BTreeSet::new();
    if rpt.point.kind.is_topological() {
        if let Some(partner) = &rpt.point.partner_path {
            out.insert(partner.clone());
        }
        for p in map.paths() {
            if p.ref_points().iter().any(|rp| {
                rp.kind.is_topological() && rp.location.distance(rpt.point.location) < POINT_MATCH_TOLERANCE
            }) {
                out.insert(p.id().clone());
            }
        }
    }
    for p in map.parallel_to(&rpt.path) {
        out.insert(p.clone());
    }
    out.remove(&rpt.path);
    out
}

/// Extracts the DIAs of a snapshot up to the active point: the single area in
/// front of the predicted vehicle on its own path, and every area between
/// consecutive vehicles on related paths. Output is sorted by
/// `(path id, rear s)`.
pub fn extract_dias(
    scene: &SceneSnapshot,
    ego: AgentId,
    rpt: &ActivePoint,
    cfg: &DynamicEnvConfig,
) -> Result<Vec<Dia>, DiaError> {
    let (agent, path) = ego_state(scene, ego)?;
    let map = &scene.map;
    let mut dias = Vec::new();

    let s_rpt = rpt.point.s_on_path.max(agent.front_s());
    let leader = scene
        .agents_on(&agent.path)
        .filter(|a| a.id != ego && a.rear_s() > agent.rear_s())
        .min_by(|a, b| a.rear_s().total_cmp(&b.rear_s()).then(a.id.cmp(&b.id)));
    let (front, front_source) = match leader {
        Some(l) if l.rear_s() <= s_rpt => (agent_rear(path, l)?, BoundarySource::Agent(l.id)),
        _ => point_boundary(path, rpt, s_rpt, true)?,
    };
    dias.push(Dia {
        key: DiaKey { path: agent.path.clone(), rear_agent: ego },
        ref_path: agent.path.clone(),
        front,
        rear: agent_front(path, agent)?,
        front_source,
        rear_source: BoundarySource::Agent(ego),
    });

    for other in related_paths(map, rpt) {
        let other_path = map.require(&other)?;
        let s_cut = match active_point_s_on(map, rpt, &other, cfg) {
            Ok(s) => s,
            Err(DiaError::Projection(crate::error::GeometryError::OffCorridor { .. })) => continue,
            Err(e) => return Err(e),
        };
        let mut upstream: Vec<&AgentState> = scene
            .agents_on(&other)
            .filter(|a| a.id != ego && a.rear_s() < s_cut && a.rear_s() >= s_cut - cfg.observation_range)
            .collect();
        upstream.sort_by(|a, b| a.rear_s().total_cmp(&b.rear_s()).then(a.id.cmp(&b.id)));
        for (i, rear_agent) in upstream.iter().enumerate() {
            let (front, front_source) = match upstream.get(i + 1) {
                Some(ahead) => (agent_rear(other_path, ahead)?, BoundarySource::Agent(ahead.id)),
                None => {
                    if rear_agent.front_s() > s_cut {
                        // occupying the active point: nothing to insert into ahead of it
                        continue;
                    }
                    point_boundary(other_path, rpt, s_cut, false)?
                }
            };
            dias.push(Dia {
                key: DiaKey { path: other.clone(), rear_agent: rear_agent.id },
                ref_path: other.clone(),
                front,
                rear: agent_front(other_path, rear_agent)?,
                front_source,
                rear_source: BoundarySource::Agent(rear_agent.id),
            });
        }
    }
    dias.sort_by(|a, b| a.ref_path.cmp(&b.ref_path).then(a.rear.s.total_cmp(&b.rear.s)));
    Ok(dias)
}

/// Node features of a DIA relative to the active point.
pub fn dia_features(
    dia: &Dia,
    rpt: &ActivePoint,
    map: &RoadMap,
    cfg: &DynamicEnvConfig,
) -> Result<DiaFeatures<f64>, DiaError> {
    let path = map.require(&dia.ref_path)?;
    let s_rpt = active_point_s_on(map, rpt, &dia.ref_path, cfg)?;
    let d_lon_f = s_rpt - dia.front.s;
    let d_lon_r = s_rpt - dia.rear.s;
    let center = (0.5 * (dia.front.s + dia.rear.s)).max(0.0).min(path.length());
    Ok(DiaFeatures {
        l: (d_lon_f - d_lon_r).abs(),
        theta: path.tangent_heading(center)?,
        v_f: dia.front.v,
        v_r: dia.rear.v,
        a_f: dia.front.a,
        a_r: dia.rear.a,
        d_lon_f,
        d_lon_r,
        d_lat_f: dia.front.d,
        d_lat_r: dia.rear.d,
    })
}

/// Two-stage handling of stop and yield signs on the predicted vehicle's
/// path. The first sign ahead is replaced by a virtual stop line `d_tr`
/// before it while the vehicle is still approaching (moving and short of
/// the virtual line); afterwards the sign is retired so that selection
/// advances to the downstream topological point. Yield signs need the two
/// stages only when their path is slower than the path yielded to.
pub fn apply_regulatory_transform(
    scene: &SceneSnapshot,
    ego: AgentId,
    cfg: &DynamicEnvConfig,
) -> Result<SceneSnapshot, DiaError> {
    let (agent, path) = ego_state(scene, ego)?;
    let mut out = scene.clone();
    let front = agent.front_s();
    let points = scene.effective_points(&agent.path);
    let Some(pos) = points.iter().position(|ep| {
        ep.point.s_on_path > front && matches!(ep.point.kind, RefPointKind::StopLine | RefPointKind::YieldLine)
    }) else {
        return Ok(out);
    };
    let sign = &points[pos];
    let two_stage = match sign.point.kind {
        RefPointKind::StopLine => true,
        _ => points[pos + 1..]
            .iter()
            .find(|ep| ep.point.kind.is_topological())
            .and_then(|ep| ep.point.partner_path.as_ref())
            .and_then(|main| scene.map.path(main))
            .is_some_and(|main| path.speed_limit() < main.speed_limit()),
    };
    if let Some(id) = &sign.id {
        out.overrides.suppressed.push(id.clone());
    }
    if two_stage {
        let s_virtual = (sign.point.s_on_path - cfg.d_tr).max(0.0);
        let stage_one = agent.v > cfg.v_eps && front < s_virtual;
        if stage_one {
            out.overrides.virtual_points.push((
                agent.path.clone(),
                ReferencePoint {
                    location: path.point_at(s_virtual),
                    s_on_path: s_virtual,
                    kind: RefPointKind::VirtualStopLine,
                    partner_path: None,
                    light_state: None,
                },
            ));
        }
    }
    Ok(out)
}

/// Result of running the full extraction on one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub scene: SceneSnapshot,
    pub active: ActivePoint,
    pub dias: Vec<Dia>,
    pub features: Vec<DiaFeatures<f64>>,
    /// Index of the DIA in front of the predicted vehicle.
    pub reference: usize,
}

impl Extraction {
    pub fn position(&self, key: &DiaKey) -> Option<usize> {
        self.dias.iter().position(|d| &d.key == key)
    }
}

/// Regulatory transform, active-point selection, DIA extraction and feature
/// computation in one pass.
pub fn extract_scene(scene: &SceneSnapshot, ego: AgentId, cfg: &DynamicEnvConfig) -> Result<Extraction, DiaError> {
    let scene = apply_regulatory_transform(scene, ego, cfg)?;
    let active = select_active_reference_point(&scene, ego, cfg)?;
    let dias = extract_dias(&scene, ego, &active, cfg)?;
    let features = dias
        .iter()
        .map(|d| dia_features(d, &active, &scene.map, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let ego_path = &scene.agent(ego).expect("checked by extraction").path;
    let reference = dias
        .iter()
        .position(|d| d.key.rear_agent == ego && &d.key.path == ego_path)
        .expect("the predicted vehicle always has a front DIA");
    Ok(Extraction { scene, active, dias, features, reference })
}
