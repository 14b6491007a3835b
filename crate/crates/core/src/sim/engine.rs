use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::policy::{DriverPolicy, EMERGENCY_DECEL};
use super::template::{Conflict, MapTemplate, Scenario, TemplateKind};
use crate::dynamic_env::{AgentId, AgentState, SceneSnapshot};
use crate::error::SimError;
use crate::static_env::{FrenetPose, LightState, PathId, PointId, RefPointKind, RoadMap};

/// Simulation and recording step (10 Hz).
pub const SIM_DT: f64 = 0.1;
pub const MAX_DURATION: f64 = 120.0;
/// Distance to a conflict point at which a yielding driver starts judging gaps.
pub const DECISION_DISTANCE: f64 = 60.0;
/// Priority vehicles farther upstream than this are ignored.
pub const PRIORITY_RANGE: f64 = 150.0;
/// Standstill time required at a stop line.
pub const STOP_HOLD: f64 = 1.0;
pub const LANE_CHANGE_TIME: f64 = 3.0;
/// Recording continues this long after the predicted vehicle passes its
/// conflict point or lane boundary.
pub const AFTER_INSERTION: f64 = 1.0;
pub const VEHICLE_LENGTH: f64 = 4.5;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub id: AgentId,
    pub path: PathId,
    /// Rear-bumper arc length.
    pub s: f64,
    pub v: f64,
    pub length: f64,
    pub policy: DriverPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub agents: Vec<AgentState>,
    pub lights: BTreeMap<PointId, LightState>,
}

/// Recorded 10 Hz trajectories of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Generating layout; `None` for external recordings.
    pub template: Option<TemplateKind>,
    pub map: Arc<RoadMap>,
    pub ego: AgentId,
    pub frames: Vec<Frame>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn snapshot(&self, i: usize) -> SceneSnapshot {
        let f = &self.frames[i];
        let mut s = SceneSnapshot::new(f.t, self.map.clone(), f.agents.clone());
        s.light_states = f.lights.clone();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lane {
    Keep,
    Changing(f64),
    Done,
}

#[derive(Debug, Clone)]
struct Live {
    id: AgentId,
    path: PathId,
    length: f64,
    policy: DriverPolicy,
    v0: f64,
    path_len: f64,
    s: f64,
    v: f64,
    a: f64,
    d: f64,
    stops: Vec<(f64, bool)>,
    hold: f64,
    conflict: Option<Conflict>,
    committed: bool,
    lane: Lane,
}

impl Live {
    fn front(&self) -> f64 {
        self.s + self.length
    }

    fn state(&self) -> AgentState {
        AgentState {
            id: self.id,
            path: self.path.clone(),
            pose: FrenetPose::new(self.s, self.d),
            v: self.v,
            a: self.a,
            length: self.length,
        }
    }

    fn stop_pending(&self) -> Option<f64> {
        self.stops.iter().find(|(s, served)| !served && *s > self.front() - 0.5).map(|(s, _)| *s)
    }
}

struct Engine<'t> {
    template: &'t MapTemplate,
    agents: Vec<Live>,
    ego: AgentId,
    /// Target path and signed lateral offset of the lane change, if any.
    lane_target: Option<(PathId, f64)>,
}

impl Engine<'_> {
    /// Rear bumper of `y` expressed on `x`'s path, when `y` is in `x`'s lane.
    fn rear_on(&self, x: &Live, y: &Live) -> Option<f64> {
        if y.path == x.path {
            return Some(y.s);
        }
        if let Some(f) = self.template.map_shared(&y.path, y.front(), &x.path) {
            return Some(f - y.length);
        }
        if let Some((target, _)) = &self.lane_target {
            let x_joined = x.id == self.ego && x.lane != Lane::Keep && &y.path == target;
            let y_joined = y.id == self.ego && y.lane != Lane::Keep && &x.path == target;
            if x_joined || y_joined {
                return Some(y.s);
            }
        }
        None
    }

    fn leader(&self, i: usize) -> Option<(f64, f64)> {
        let x = &self.agents[i];
        let mut best: Option<(f64, f64)> = None;
        for (j, y) in self.agents.iter().enumerate() {
            if j == i {
                continue;
            }
            if let Some(rear) = self.rear_on(x, y) {
                if rear > x.s {
                    let gap = rear - x.front();
                    if best.map_or(true, |(g, _)| gap < g) {
                        best = Some((gap, x.v - y.v));
                    }
                }
            }
        }
        best
    }

    fn gap_acceptable(&self, x: &Live, c: &Conflict) -> bool {
        let dist = c.s_minor - x.front();
        let t_e = x.policy.time_to_cover(dist, x.v, x.v0);
        for y in self.agents.iter().filter(|y| y.path == c.major) {
            let front = y.front();
            if front < c.s_major {
                if c.s_major - front > PRIORITY_RANGE {
                    continue;
                }
                let t_y = (c.s_major - front) / y.v.max(0.5);
                if t_y - t_e < x.policy.gap_acceptance {
                    return false;
                }
            } else if y.s < c.s_major + PRIORITY_RANGE {
                let clearance = y.s + y.v * t_e - c.s_major;
                if clearance < x.policy.min_gap {
                    return false;
                }
            }
        }
        true
    }

    fn lane_gap_acceptable(&self, x: &Live, target: &PathId) -> bool {
        let cx = x.s + x.length / 2.0;
        let mut lead: Option<&Live> = None;
        let mut lag: Option<&Live> = None;
        for y in self.agents.iter().filter(|y| &y.path == target) {
            let cy = y.s + y.length / 2.0;
            if cy > cx {
                if lead.map_or(true, |l| y.s < l.s) {
                    lead = Some(y);
                }
            } else if lag.map_or(true, |l| y.s > l.s) {
                lag = Some(y);
            }
        }
        let p = &x.policy;
        let lead_ok = lead.map_or(true, |l| {
            l.s - x.front() >= p.min_gap + 0.5 * x.v * p.time_headway + (x.v - l.v).max(0.0) * 1.5
        });
        let lag_ok = lag.map_or(true, |l| {
            x.s - l.front() >= p.min_gap + 0.5 * l.v * p.time_headway + (l.v - x.v).max(0.0) * 1.5
        });
        lead_ok && lag_ok
    }

    fn acceleration(&mut self, i: usize) -> f64 {
        let leader = self.leader(i);
        let x = &self.agents[i];
        let p = x.policy;
        let mut a = p.idm(x.v, x.v0, leader);
        let mut commit = false;
        let mut hold = None;
        if let Some(stop) = x.stop_pending() {
            let gap = stop - x.front();
            a = a.min(p.idm(x.v, x.v0, Some((gap, x.v))));
            hold = Some(x.v < 0.1 && gap < p.min_gap + 2.5);
        } else if let Some(c) = x.conflict.as_ref().filter(|_| !x.committed) {
            let dist = c.s_minor - x.front();
            if dist <= 0.0 {
                commit = true;
            } else if dist <= DECISION_DISTANCE {
                if self.gap_acceptable(x, c) || dist < x.v * x.v / (4.0 * p.max_decel) {
                    commit = true;
                } else {
                    a = a.min(p.idm(x.v, x.v0, Some((dist, x.v))));
                }
            }
        }
        let x = &mut self.agents[i];
        if commit {
            x.committed = true;
        }
        match hold {
            Some(true) => {
                x.hold += SIM_DT;
                if x.hold >= STOP_HOLD - 1e-9 {
                    if let Some(st) = x.stops.iter_mut().find(|(_, served)| !served) {
                        st.1 = true;
                    }
                    x.hold = 0.0;
                }
            }
            Some(false) => x.hold = 0.0,
            None => {}
        }
        a.clamp(-EMERGENCY_DECEL, p.max_accel)
    }

    fn lateral(&mut self, t: f64) {
        let Some((target, offset)) = self.lane_target.clone() else { return };
        let Some(i) = self.agents.iter().position(|a| a.id == self.ego) else { return };
        match self.agents[i].lane {
            Lane::Keep => {
                if t >= 0.5 - 1e-9 && self.lane_gap_acceptable(&self.agents[i], &target) {
                    self.agents[i].lane = Lane::Changing(t);
                }
            }
            Lane::Changing(t0) => {
                let u = ((t - t0) / LANE_CHANGE_TIME).min(1.0);
                let x = &mut self.agents[i];
                x.d = offset * u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
                if u >= 1.0 {
                    x.lane = Lane::Done;
                }
            }
            Lane::Done => {}
        }
    }

    fn step(&mut self, t: f64) {
        self.lateral(t);
        let acc: Vec<f64> = (0..self.agents.len()).map(|i| self.acceleration(i)).collect();
        for (x, a) in self.agents.iter_mut().zip(acc) {
            let v1 = x.v + a * SIM_DT;
            let (ds, v1) = if v1 < 0.0 {
                (if a < 0.0 { x.v * x.v / (-2.0 * a) } else { 0.0 }, 0.0)
            } else {
                ((x.v + v1) / 2.0 * SIM_DT, v1)
            };
            x.a = (v1 - x.v) / SIM_DT;
            x.v = v1;
            x.s += ds;
        }
        // kinematic safety net: never let a follower run into its leader
        for i in 0..self.agents.len() {
            if let Some((gap, _)) = self.leader(i) {
                let limit = gap - 0.2;
                if limit < 0.0 {
                    let lead_v = self.leader_speed(i);
                    let x = &mut self.agents[i];
                    x.s += limit.max(-(x.s.max(0.0)));
                    x.v = x.v.min(lead_v);
                }
            }
        }
        let ego = self.ego;
        self.agents.retain(|x| x.id == ego || x.front() < x.path_len);
    }

    fn leader_speed(&self, i: usize) -> f64 {
        let x = &self.agents[i];
        let mut best: Option<(f64, f64)> = None;
        for (j, y) in self.agents.iter().enumerate() {
            if j != i {
                if let Some(rear) = self.rear_on(x, y) {
                    if rear > x.s && best.map_or(true, |(r, _)| rear < r) {
                        best = Some((rear, y.v));
                    }
                }
            }
        }
        best.map_or(x.v, |(_, v)| v)
    }

    fn frame(&self, t: f64) -> Frame {
        let mut agents: Vec<AgentState> = self.agents.iter().map(Live::state).collect();
        agents.sort_by_key(|a| a.id);
        Frame { t, agents, lights: BTreeMap::new() }
    }

    fn ego_inserted(&self) -> bool {
        let Some(x) = self.agents.iter().find(|a| a.id == self.ego) else { return true };
        if let Some((_, offset)) = &self.lane_target {
            return x.d.abs() >= offset.abs() / 2.0;
        }
        x.conflict.as_ref().map_or(false, |c| x.front() >= c.s_minor)
    }
}

fn scenario_for<'a>(template: &'a MapTemplate, path: &PathId) -> Option<&'a Scenario> {
    template.scenarios.iter().find(|s| &s.ego_path == path)
}

/// Runs the simulation from explicit initial states. Agents on a path that
/// must give way inherit that conflict; the predicted vehicle additionally
/// performs the lane change of its scenario, if it has one.
pub fn simulate(template: &MapTemplate, setups: Vec<AgentSetup>, ego: AgentId, duration: f64) -> Result<Episode, SimError> {
    if !(duration > 0.0 && duration <= MAX_DURATION) {
        return Err(SimError::InvalidParams(format!("duration must lie in (0, {MAX_DURATION}] s, got {duration}")));
    }
    if setups.is_empty() {
        return Err(SimError::InvalidParams("at least one agent is required".into()));
    }
    let mut agents = Vec::with_capacity(setups.len());
    for st in setups {
        st.policy.validate()?;
        let path = template
            .map
            .path(&st.path)
            .ok_or_else(|| SimError::InvalidParams(format!("unknown path `{}`", st.path)))?;
        if !(st.length > 0.0) || st.s < 0.0 || st.s + st.length > path.length() || st.v < 0.0 {
            return Err(SimError::SpawnFailure(format!("agent {} does not fit on `{}`", st.id, st.path)));
        }
        let stops = path
            .ref_points()
            .iter()
            .filter(|rp| rp.kind == RefPointKind::StopLine && rp.s_on_path > st.s + st.length)
            .map(|rp| (rp.s_on_path, false))
            .collect();
        let conflict = template.scenarios.iter().filter_map(|s| s.conflict.as_ref()).find(|c| c.minor == st.path).cloned();
        agents.push(Live {
            id: st.id,
            v0: st.policy.desired_speed.min(path.speed_limit()),
            path_len: path.length(),
            path: st.path,
            length: st.length,
            policy: st.policy,
            s: st.s,
            v: st.v,
            a: 0.0,
            d: 0.0,
            stops,
            hold: 0.0,
            conflict,
            committed: false,
            lane: Lane::Keep,
        });
    }
    let ego_live = agents
        .iter()
        .find(|a| a.id == ego)
        .ok_or_else(|| SimError::InvalidParams(format!("agent {ego} is not among the setups")))?;
    for (i, x) in agents.iter().enumerate() {
        for y in &agents[i + 1..] {
            if x.id == y.id {
                return Err(SimError::InvalidParams(format!("duplicate agent id {}", x.id)));
            }
            if x.path == y.path && x.s < y.front() && y.s < x.front() {
                return Err(SimError::SpawnFailure(format!("agents {} and {} overlap", x.id, y.id)));
            }
        }
    }
    let lane_target = match scenario_for(template, &ego_live.path) {
        Some(sc) if sc.conflict.is_none() => {
            let ego_path = template.path(&sc.ego_path);
            let other = template.path(&sc.traffic_path);
            let offset = ego_path.to_frenet(other.waypoints()[0])?.d;
            Some((sc.traffic_path.clone(), offset))
        }
        _ => None,
    };

    let mut eng = Engine { template, agents, ego, lane_target };
    let steps = (duration / SIM_DT).round() as usize;
    let mut frames = vec![eng.frame(0.0)];
    let mut end_step: Option<usize> = None;
    for k in 1..=steps {
        let t = k as f64 * SIM_DT;
        eng.step((k - 1) as f64 * SIM_DT);
        frames.push(eng.frame(t));
        let ego_done = eng.agents.iter().find(|a| a.id == ego).map_or(true, |x| x.front() >= x.path_len);
        if end_step.is_none() && eng.ego_inserted() {
            end_step = Some(k + (AFTER_INSERTION / SIM_DT).round() as usize);
        }
        if ego_done || end_step.map_or(false, |e| k >= e) {
            break;
        }
    }
    Ok(Episode { template: Some(template.kind), map: template.map.clone(), ego, frames })
}

/// Places the predicted vehicle (id 0) and `n_agents - 1` interaction
/// partners for a randomly chosen scenario of the template, jitters every
/// driver's policy and simulates. Everything derives from `seed`.
pub fn simulate_episode(
    template: &MapTemplate,
    n_agents: usize,
    base: &DriverPolicy,
    seed: u64,
    duration: f64,
) -> Result<Episode, SimError> {
    if n_agents == 0 {
        return Err(SimError::InvalidParams("n_agents must be at least 1".into()));
    }
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if template.scenarios.is_empty() {
        return Err(SimError::InvalidParams("template has no scenarios".into()));
    }
    let sc = template.scenarios[rng.gen_range(0..template.scenarios.len())].clone();
    let setups = match &sc.conflict {
        Some(c) => spawn_conflict(template, &sc, c, n_agents, base, &mut rng)?,
        None => spawn_lane_change(template, &sc, n_agents, base, &mut rng)?,
    };
    simulate(template, setups, AgentId(0), duration)
}

fn vehicle_length(rng: &mut ChaCha8Rng) -> f64 {
    VEHICLE_LENGTH * rng.gen_range(0.93..1.07)
}

fn spawn_conflict(
    template: &MapTemplate,
    sc: &Scenario,
    c: &Conflict,
    n_agents: usize,
    base: &DriverPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AgentSetup>, SimError> {
    let ego_path = template.path(&sc.ego_path);
    let policy = base.jittered(ego_path.speed_limit(), rng);
    let length = vehicle_length(rng);
    let stop = ego_path
        .ref_points()
        .iter()
        .find(|rp| rp.kind == RefPointKind::StopLine && rp.s_on_path < c.s_minor)
        .map(|rp| rp.s_on_path);
    let (front, wait) = match stop {
        Some(s) => (s - rng.gen_range(15.0..40.0), 3.5),
        None => (c.s_minor - rng.gen_range(35.0..70.0), 0.0),
    };
    let v0 = policy.desired_speed.min(ego_path.speed_limit());
    let v = v0 * rng.gen_range(0.8..1.0);
    if front - length < 0.0 {
        return Err(SimError::SpawnFailure("approach too short for the predicted vehicle".into()));
    }
    let t_e = policy.time_to_cover(c.s_minor - front, v, v0) + wait;
    let mut setups = vec![AgentSetup { id: AgentId(0), path: sc.ego_path.clone(), s: front - length, v, length, policy }];

    let major = template.path(&c.major);
    'attempt: for _ in 0..64 {
        let mut cars = Vec::with_capacity(n_agents - 1);
        let mut arrival = t_e + rng.gen_range(-3.0..6.0);
        let mut prev_rear = f64::INFINITY;
        for i in 1..n_agents {
            let p = base.jittered(major.speed_limit(), rng);
            let len = vehicle_length(rng);
            let v = p.desired_speed.min(major.speed_limit()) * rng.gen_range(0.9..1.0);
            let front = (c.s_major - arrival * v).min(prev_rear - p.min_gap - 1.0);
            let rear = front - len;
            if rear < 0.0 || front > major.length() - 1.0 {
                continue 'attempt;
            }
            cars.push(AgentSetup { id: AgentId(i as u32), path: c.major.clone(), s: rear, v, length: len, policy: p });
            prev_rear = rear;
            arrival += rng.gen_range(1.0..10.0);
        }
        setups.extend(cars);
        return Ok(setups);
    }
    Err(SimError::SpawnFailure(format!("cannot place {} vehicles on `{}`", n_agents - 1, c.major)))
}

fn spawn_lane_change(
    template: &MapTemplate,
    sc: &Scenario,
    n_agents: usize,
    base: &DriverPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AgentSetup>, SimError> {
    let ego_path = template.path(&sc.ego_path);
    let target = template.path(&sc.traffic_path);
    let policy = base.jittered(ego_path.speed_limit(), rng);
    let length = vehicle_length(rng);
    let s = rng.gen_range(40.0..80.0);
    let v = policy.desired_speed.min(ego_path.speed_limit()) * rng.gen_range(0.85..1.0);
    let center = s + length / 2.0;
    let mut setups = vec![AgentSetup { id: AgentId(0), path: sc.ego_path.clone(), s, v, length, policy }];
    if n_agents == 1 {
        return Ok(setups);
    }
    'attempt: for _ in 0..64 {
        let mut offsets: Vec<f64> = (1..n_agents).map(|_| rng.gen_range(-60.0..60.0)).collect();
        offsets.sort_by(f64::total_cmp);
        if offsets[0] > -VEHICLE_LENGTH {
            continue;
        }
        if offsets.windows(2).any(|w| w[1] - w[0] < 12.0) {
            continue;
        }
        let mut cars = Vec::with_capacity(offsets.len());
        for (i, off) in offsets.iter().enumerate() {
            let p = base.jittered(target.speed_limit(), rng);
            let len = vehicle_length(rng);
            let rear = center + off - len / 2.0;
            if rear < 0.0 || rear + len > target.length() {
                continue 'attempt;
            }
            let v = p.desired_speed.min(target.speed_limit());
            cars.push(AgentSetup { id: AgentId(i as u32 + 1), path: sc.traffic_path.clone(), s: rear, v, length: len, policy: p });
        }
        setups.extend(cars);
        return Ok(setups);
    }
    Err(SimError::SpawnFailure(format!("cannot place {} vehicles on `{}`", n_agents - 1, sc.traffic_path)))
}
