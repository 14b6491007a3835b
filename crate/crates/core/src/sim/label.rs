use serde::{Deserialize, Serialize};

use super::engine::Episode;
use crate::dynamic_env::{active_point_s_on, extract_scene, DiaKey, DynamicEnvConfig, Extraction};
use crate::error::SimError;
use crate::static_env::{FrenetPose, PathId};

/// Ground truth of one frame: the DIA the predicted vehicle will insert
/// into and `y = [y_s1, y_s2, y_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub frame: usize,
    pub key: DiaKey,
    pub y: [f64; 3],
}

/// The detected insertion event.
#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    /// First frame after the event.
    pub frame: usize,
    pub key: DiaKey,
}

fn extract_all(ep: &Episode, cfg: &DynamicEnvConfig) -> Result<Vec<Extraction>, SimError> {
    (0..ep.len()).map(|i| Ok(extract_scene(&ep.snapshot(i), ep.ego, cfg)?)).collect()
}

/// Finds the first frame at which the predicted vehicle passes the
/// topological active point of the previous frame, or crosses half way into
/// a parallel lane. The inserted DIA is the one bounded behind by the
/// nearest partner vehicle that has not yet reached the point; without such
/// a vehicle it is the front DIA.
pub fn detect_insertion(ep: &Episode, exs: &[Extraction], cfg: &DynamicEnvConfig) -> Result<Insertion, SimError> {
    let map = &ep.map;
    for f in 1..ep.len() {
        let prev = &exs[f - 1];
        let Some(ego_now) = ep.frames[f].agents.iter().find(|a| a.id == ep.ego) else { break };
        let ego_prev = prev.scene.agent(ep.ego).expect("extraction succeeded");
        let front_key = DiaKey { path: ego_prev.path.clone(), rear_agent: ep.ego };
        let point = &prev.active.point;
        if point.kind.is_topological() {
            if ego_now.front_s() < point.s_on_path {
                continue;
            }
            let partner = point.partner_path.clone().expect("topological points carry a partner");
            let s_p = active_point_s_on(map, &prev.active, &partner, cfg)?;
            let behind = ep.frames[f]
                .agents
                .iter()
                .filter(|a| a.path == partner && a.id != ep.ego && a.front_s() < s_p)
                .max_by(|a, b| a.front_s().total_cmp(&b.front_s()));
            let key = match behind {
                Some(b) => DiaKey { path: partner, rear_agent: b.id },
                None => front_key,
            };
            return if prev.position(&key).is_some() { Ok(Insertion { frame: f, key }) } else { Err(SimError::NoInsertion) };
        }
        let half = 0.5;
        for other in map.parallel_to(&ego_prev.path) {
            let ego_path = map.require(&ego_prev.path)?;
            let other_path = map.require(other)?;
            let offset = ego_path.to_frenet(other_path.waypoints()[0])?.d;
            let crossed = |d: f64| d * offset.signum() >= half * offset.abs();
            if crossed(ego_now.pose.d) && !crossed(ego_prev.pose.d) {
                let front_pt = ego_path.to_cartesian(FrenetPose::new(ego_now.front_s(), ego_now.pose.d))?;
                let s_front = other_path.to_frenet_within(front_pt, cfg.corridor_half_width)?.s;
                let lag = ep.frames[f]
                    .agents
                    .iter()
                    .filter(|a| &a.path == other && a.front_s() <= s_front)
                    .max_by(|a, b| a.front_s().total_cmp(&b.front_s()));
                let key = lag.map(|b| DiaKey { path: other.clone(), rear_agent: b.id }).ok_or(SimError::NoInsertion)?;
                return if prev.position(&key).is_some() { Ok(Insertion { frame: f, key }) } else { Err(SimError::NoInsertion) };
            }
        }
    }
    Err(SimError::NoInsertion)
}

/// Labels every frame of the contiguous run before the insertion in which
/// the inserted DIA is present.
///
/// `y_s1` is the distance from the frame's active point to the centre of
/// the inserted DIA as it stood at the last frame before insertion, `y_s2`
/// the offset of the predicted vehicle's front bumper ahead of that DIA's
/// rear boundary at the same instant, and `y_t` the time left until the
/// insertion frame.
pub fn label_episode(ep: &Episode, cfg: &DynamicEnvConfig) -> Result<Vec<FrameLabel>, SimError> {
    let exs = extract_all(ep, cfg)?;
    label_with(ep, &exs, cfg)
}

pub(crate) fn label_with(ep: &Episode, exs: &[Extraction], cfg: &DynamicEnvConfig) -> Result<Vec<FrameLabel>, SimError> {
    let ins = detect_insertion(ep, exs, cfg)?;
    let last = ins.frame - 1;
    let ex = &exs[last];
    let pos = ex.position(&ins.key).ok_or(SimError::NoInsertion)?;
    let dia = &ex.dias[pos];
    let center = (dia.front.s + dia.rear.s) / 2.0;
    let y_s2 = ex.features[pos].d_lon_r - ex.features[ex.reference].d_lon_r;
    let t_ins = ep.frames[ins.frame].t;
    let path: &PathId = &dia.ref_path;

    let mut out = Vec::new();
    let mut f = last as isize;
    while f >= 0 {
        let e = &exs[f as usize];
        if e.position(&ins.key).is_none() {
            break;
        }
        let s_rpt = active_point_s_on(&ep.map, &e.active, path, cfg)?;
        out.push(FrameLabel {
            frame: f as usize,
            key: ins.key.clone(),
            y: [s_rpt - center, y_s2, t_ins - ep.frames[f as usize].t],
        });
        f -= 1;
    }
    out.reverse();
    Ok(out)
}
