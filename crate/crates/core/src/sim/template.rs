use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::static_env::{classify_overlap, densify, Overlap, PathId, RefPointKind, ReferencePath, RoadMap, Vec2};

/// Maximum waypoint spacing of generated paths.
pub const MAX_WAYPOINT_SPACING: f64 = 0.5;
pub const LANE_WIDTH: f64 = 3.5;

/// Parametric road layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Roundabout { n_ways: usize, radius: f64 },
    TIntersection,
    Merge,
    LaneChange,
}

impl TemplateKind {
    pub fn validate(&self) -> Result<(), SimError> {
        if let Self::Roundabout { n_ways, radius } = *self {
            if !(3..=12).contains(&n_ways) {
                return Err(SimError::InvalidParams(format!("roundabout needs 3 to 12 ways, got {n_ways}")));
            }
            if !(10.0..=40.0).contains(&radius) {
                return Err(SimError::InvalidParams(format!("roundabout radius must lie in 10..=40 m, got {radius}")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for TemplateKind {
    type Err = SimError;

    /// Accepts `merge`, `lane-change`, `t-intersection`, `roundabout` and
    /// `roundabout:N:R`.
    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidParams(format!("unknown template `{s}`"));
        let kind = match s {
            "merge" => Self::Merge,
            "lane-change" => Self::LaneChange,
            "t-intersection" => Self::TIntersection,
            "roundabout" => Self::Roundabout { n_ways: 8, radius: 25.0 },
            _ => {
                let rest = s.strip_prefix("roundabout:").ok_or_else(bad)?;
                let (n, r) = rest.split_once(':').ok_or_else(bad)?;
                Self::Roundabout {
                    n_ways: n.parse().map_err(|_| bad())?,
                    radius: r.parse().map_err(|_| bad())?,
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Roundabout { n_ways, radius } => write!(f, "roundabout:{n_ways}:{radius}"),
            Self::TIntersection => f.write_str("t-intersection"),
            Self::Merge => f.write_str("merge"),
            Self::LaneChange => f.write_str("lane-change"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRole {
    Entry,
    Exit,
    Circulating,
    Through,
}

/// A point where `minor` must give way to traffic on `major`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub minor: PathId,
    pub s_minor: f64,
    pub major: PathId,
    pub s_major: f64,
}

/// Stretch where two paths carry identical geometry: `a` at
/// `a_start + x` coincides with `b` at `b_start + x` for `x` in `[0, len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedSection {
    pub a: PathId,
    pub a_start: f64,
    pub b: PathId,
    pub b_start: f64,
    pub len: f64,
}

/// Which path the simulated predicted vehicle drives and where its
/// interaction partners come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ego_path: PathId,
    pub traffic_path: PathId,
    /// `Some` for conflict scenarios, `None` for a lane change onto the
    /// traffic path.
    pub conflict: Option<Conflict>,
}

#[derive(Debug, Clone)]
pub struct MapTemplate {
    pub kind: TemplateKind,
    pub map: Arc<RoadMap>,
    pub roles: Vec<(PathId, PathRole)>,
    pub shared: Vec<SharedSection>,
    pub scenarios: Vec<Scenario>,
}

impl MapTemplate {
    pub fn count_role(&self, role: PathRole) -> usize {
        self.roles.iter().filter(|(_, r)| *r == role).count()
    }

    /// Maps arc length `s` on `from` to `to` when `s` lies on a section the
    /// two paths share.
    pub fn map_shared(&self, from: &PathId, s: f64, to: &PathId) -> Option<f64> {
        for sec in &self.shared {
            let (fs, ts) = if &sec.a == from && &sec.b == to {
                (sec.a_start, sec.b_start)
            } else if &sec.b == from && &sec.a == to {
                (sec.b_start, sec.a_start)
            } else {
                continue;
            };
            let x = s - fs;
            if (0.0..=sec.len).contains(&x) {
                return Some(ts + x);
            }
        }
        None
    }

    pub fn path(&self, id: &PathId) -> &ReferencePath<f64> {
        self.map.path(id).expect("template paths are registered")
    }
}

fn line(points: &[Vec2<f64>]) -> Vec<Vec2<f64>> {
    densify(points, MAX_WAYPOINT_SPACING)
}

/// Appends `tail`, skipping its first point when it repeats the last one.
fn join(mut head: Vec<Vec2<f64>>, tail: &[Vec2<f64>]) -> Vec<Vec2<f64>> {
    let skip = match (head.last(), tail.first()) {
        (Some(a), Some(b)) if a.distance(*b) < 1e-12 => 1,
        _ => 0,
    };
    head.extend_from_slice(&tail[skip..]);
    head
}

/// Arc around `center` from angle `a0` to `a1` with exact endpoints.
fn arc(center: Vec2<f64>, r: f64, a0: f64, a1: f64, start: Vec2<f64>, end: Vec2<f64>) -> Vec<Vec2<f64>> {
    let n = ((r * (a1 - a0).abs()) / MAX_WAYPOINT_SPACING).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(start);
    for i in 1..n {
        let a = a0 + (a1 - a0) * i as f64 / n as f64;
        out.push(center + Vec2::new(a.cos(), a.sin()) * r);
    }
    out.push(end);
    out
}

/// Index of the first waypoint of `pts` equal to `p`.
fn vertex_index(pts: &[Vec2<f64>], p: Vec2<f64>) -> usize {
    pts.iter().position(|q| q.distance(p) < 1e-9).expect("junction vertex present")
}

fn s_of(path: &ReferencePath<f64>, p: Vec2<f64>) -> Result<f64, SimError> {
    Ok(path.to_frenet(p)?.s)
}

/// Builds a layout. The seed jitters approach lengths and angles only, so
/// the same seed always yields the same geometry.
pub fn make_map(kind: TemplateKind, seed: u64) -> Result<MapTemplate, SimError> {
    kind.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        TemplateKind::Merge => merge(&mut rng),
        TemplateKind::LaneChange => lane_change(&mut rng),
        TemplateKind::TIntersection => t_intersection(&mut rng),
        TemplateKind::Roundabout { n_ways, radius } => roundabout(&mut rng, n_ways, radius),
    }
    .map(|mut t| {
        t.kind = kind;
        t
    })
}

fn merge(rng: &mut ChaCha8Rng) -> Result<MapTemplate, SimError> {
    let angle = rng.gen_range(12.0..18.0_f64).to_radians();
    let ramp_len = rng.gen_range(110.0..130.0);
    let junction = Vec2::new(0.0, 0.0);
    let main_pts = line(&[Vec2::new(-350.0, 0.0), junction, Vec2::new(120.0, 0.0)]);
    let k = vertex_index(&main_pts, junction);
    let ramp_pts = join(line(&[Vec2::new(-ramp_len * angle.cos(), -ramp_len * angle.sin()), junction]), &main_pts[k..]);

    let mut main = ReferencePath::new("main", &main_pts, 15.0)?;
    let mut ramp = ReferencePath::new("ramp", &ramp_pts, 15.0)?;
    main.add_reference_point(RefPointKind::LineOverlap, junction, Some("ramp".into()), None)?;
    ramp.add_reference_point(RefPointKind::LineOverlap, junction, Some("main".into()), None)?;
    let (sm, sr) = (s_of(&main, junction)?, s_of(&ramp, junction)?);
    let len = main.length() - sm;
    let map = RoadMap::new(vec![main, ramp], &[])?;
    Ok(MapTemplate {
        kind: TemplateKind::Merge,
        map: Arc::new(map),
        roles: vec![("main".into(), PathRole::Through), ("ramp".into(), PathRole::Entry)],
        shared: vec![SharedSection { a: "ramp".into(), a_start: sr, b: "main".into(), b_start: sm, len }],
        scenarios: vec![Scenario {
            ego_path: "ramp".into(),
            traffic_path: "main".into(),
            conflict: Some(Conflict { minor: "ramp".into(), s_minor: sr, major: "main".into(), s_major: sm }),
        }],
    })
}

fn lane_change(rng: &mut ChaCha8Rng) -> Result<MapTemplate, SimError> {
    let width = LANE_WIDTH + rng.gen_range(-0.1..0.1);
    let right = ReferencePath::new("right", &line(&[Vec2::new(0.0, 0.0), Vec2::new(500.0, 0.0)]), 20.0)?;
    let left = ReferencePath::new("left", &line(&[Vec2::new(0.0, width), Vec2::new(500.0, width)]), 20.0)?;
    let map = RoadMap::new(vec![right, left], &[("right".into(), "left".into())])?;
    Ok(MapTemplate {
        kind: TemplateKind::LaneChange,
        map: Arc::new(map),
        roles: vec![("right".into(), PathRole::Through), ("left".into(), PathRole::Through)],
        shared: Vec::new(),
        scenarios: vec![Scenario { ego_path: "right".into(), traffic_path: "left".into(), conflict: None }],
    })
}

/// Main road along x (eastbound lane at y = -w/2, westbound at +w/2) with a
/// stem from the south. Six routes: both straight movements, both turns
/// into the stem and both turns out of it.
fn t_intersection(rng: &mut ChaCha8Rng) -> Result<MapTemplate, SimError> {
    let arm = rng.gen_range(280.0..300.0_f64);
    let h = LANE_WIDTH / 2.0;
    let (r_right, r_left) = (5.0, 8.0);

    // junction vertices
    let eb_merge = Vec2::new(h + r_right, -h); // eastbound: stem -> east merges here
    let eb_diverge = Vec2::new(-h - r_right, -h); // eastbound: west -> stem leaves here
    let wb_leave = Vec2::new(-h + r_left, h); // westbound: east -> stem leaves here
    let wb_merge = Vec2::new(h - r_left, h); // westbound: stem -> west merges here
    let sb_join = Vec2::new(-h, -h - r_right); // southbound stem start
    let nb_split = Vec2::new(h, -h - r_right); // northbound stem end of the shared run

    let eastbound = line(&[Vec2::new(-arm, -h), eb_diverge, eb_merge, Vec2::new(arm, -h)]);
    let westbound = line(&[Vec2::new(arm, h), wb_leave, wb_merge, Vec2::new(-arm, h)]);
    let southbound = line(&[sb_join, Vec2::new(-h, -arm)]);
    let northbound = line(&[Vec2::new(h, -arm), nb_split]);

    let ie = |p| vertex_index(&eastbound, p);
    let iw = |p| vertex_index(&westbound, p);

    // west -> stem, right turn
    let c = Vec2::new(-h - r_right, -h - r_right);
    let w_s = join(join(eastbound[..=ie(eb_diverge)].to_vec(), &arc(c, r_right, PI / 2.0, 0.0, eb_diverge, sb_join)), &southbound);
    // east -> stem, left turn
    let c = Vec2::new(-h + r_left, h - r_left);
    let e_s_end = Vec2::new(-h, h - r_left);
    let e_s = join(
        join(join(westbound[..=iw(wb_leave)].to_vec(), &arc(c, r_left, PI / 2.0, PI, wb_leave, e_s_end)), &[sb_join]),
        &southbound,
    );
    // stem -> east, right turn
    let c = Vec2::new(h + r_right, -h - r_right);
    let s_e = join(join(northbound.clone(), &arc(c, r_right, PI, PI / 2.0, nb_split, eb_merge)), &eastbound[ie(eb_merge)..]);
    // stem -> west, left turn
    let c = Vec2::new(h - r_left, h - r_left);
    let turn_start = Vec2::new(h, h - r_left);
    let s_w = join(join(join(northbound, &[turn_start]), &arc(c, r_left, 0.0, PI / 2.0, turn_start, wb_merge)), &westbound[iw(wb_merge)..]);

    let routes: Vec<(&str, Vec<Vec2<f64>>, f64, PathRole)> = vec![
        ("w_e", eastbound.clone(), 14.0, PathRole::Through),
        ("e_w", westbound.clone(), 14.0, PathRole::Through),
        ("w_s", w_s, 14.0, PathRole::Through),
        ("e_s", e_s, 14.0, PathRole::Through),
        ("s_e", s_e, 10.0, PathRole::Entry),
        ("s_w", s_w, 10.0, PathRole::Entry),
    ];
    let mut paths = routes
        .iter()
        .map(|(id, pts, v, _)| ReferencePath::new(*id, pts, *v))
        .collect::<Result<Vec<_>, _>>()?;

    let mut marks: Vec<(usize, RefPointKind, Vec2<f64>, PathId)> = Vec::new();
    for i in 0..paths.len() {
        for j in 0..paths.len() {
            if i == j {
                continue;
            }
            let kind = match classify_overlap(&paths[i], &paths[j])? {
                Overlap::PointOverlap(p) => Some((RefPointKind::PointOverlap, p)),
                Overlap::LineOverlap(p) => Some((RefPointKind::LineOverlap, p)),
                Overlap::UndecidedOverlap => None,
            };
            if let Some((k, p)) = kind {
                marks.push((i, k, p, paths[j].id().clone()));
            }
        }
    }
    for (i, k, p, partner) in marks {
        paths[i].add_reference_point(k, p, Some(partner), None)?;
    }
    let stem_line = Vec2::new(h, -h - r_left - 3.0);
    for (i, (id, _, _, _)) in routes.iter().enumerate() {
        let (kind, at) = match *id {
            "s_e" | "s_w" => (RefPointKind::StopLine, stem_line),
            "w_e" | "w_s" => (RefPointKind::YieldLine, Vec2::new(eb_diverge.x - 6.0, -h)),
            _ => (RefPointKind::YieldLine, Vec2::new(wb_leave.x + 6.0, h)),
        };
        paths[i].add_reference_point(kind, at, None, None)?;
    }

    let s_minor = s_of(&paths[4], eb_merge)?;
    let s_major = s_of(&paths[0], eb_merge)?;
    let mut shared = Vec::new();
    shared.push(SharedSection {
        a: "s_e".into(),
        a_start: s_minor,
        b: "w_e".into(),
        b_start: s_major,
        len: paths[0].length() - s_major,
    });
    let a = s_of(&paths[5], wb_merge)?;
    let b = s_of(&paths[1], wb_merge)?;
    shared.push(SharedSection { a: "s_w".into(), a_start: a, b: "e_w".into(), b_start: b, len: paths[1].length() - b });
    let a = s_of(&paths[3], sb_join)?;
    let b = s_of(&paths[2], sb_join)?;
    shared.push(SharedSection { a: "e_s".into(), a_start: a, b: "w_s".into(), b_start: b, len: paths[2].length() - b });

    let roles = routes.iter().map(|(id, _, _, r)| (PathId::new(*id), *r)).collect();
    let map = RoadMap::new(paths, &[])?;
    Ok(MapTemplate {
        kind: TemplateKind::TIntersection,
        map: Arc::new(map),
        roles,
        shared,
        scenarios: vec![Scenario {
            ego_path: "s_e".into(),
            traffic_path: "w_e".into(),
            conflict: Some(Conflict { minor: "s_e".into(), s_minor, major: "w_e".into(), s_major }),
        }],
    })
}

/// Counter-clockwise ring of radius `radius`. Entry `k` joins the ring at
/// angle `2πk/n`, circulates one and a half sectors and leaves. Each entry
/// has its own member of the circulating family, a ring arc passing its
/// junction, and each exit path leaves the ring between two entries.
fn roundabout(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Result<MapTemplate, SimError> {
    let per_way = 2 * ((2.0 * PI * radius / (n as f64 * 0.45 * 2.0)).ceil() as usize);
    let grid = n * per_way;
    let ring = |j: i64| {
        let j = j.rem_euclid(grid as i64) as f64;
        let a = 2.0 * PI * j / grid as f64;
        Vec2::new(radius * a.cos(), radius * a.sin())
    };
    let ring_run = |from: i64, to: i64| (from..=to).map(ring).collect::<Vec<_>>();
    let tangent = |j: i64| {
        let a = 2.0 * PI * j as f64 / grid as f64;
        (Vec2::new(-a.sin(), a.cos()), Vec2::new(a.cos(), a.sin()))
    };
    let skew = 30.0_f64.to_radians();
    let pw = per_way as i64;
    let down = 2 * pw;
    let up = grid as i64 - down - (grid as i64 / 36).max(4);

    let mut paths = Vec::new();
    let mut roles = Vec::new();
    let mut shared = Vec::new();
    let mut scenarios = Vec::new();
    for k in 0..n {
        let j0 = k as i64 * pw;
        let jx = j0 + pw + pw / 2;
        let approach = rng.gen_range(70.0..90.0);
        let (t, u) = tangent(j0);
        let start = ring(j0) - (t * skew.cos() - u * skew.sin()) * approach;
        let (tx, ux) = tangent(jx);
        let end = ring(jx) + (tx * skew.cos() + ux * skew.sin()) * 60.0;
        let entry = join(join(line(&[start, ring(j0)]), &ring_run(j0, jx)), &line(&[ring(jx), end]));
        let circ = ring_run(j0 - up, j0 + down);
        let (entry_id, circ_id) = (PathId::new(format!("entry{k}")), PathId::new(format!("circ{k}")));
        let mut e = ReferencePath::new(entry_id.clone(), &entry, 9.0)?;
        let mut c = ReferencePath::new(circ_id.clone(), &circ, 9.0)?;
        let yield_at = ring(j0) - (t * skew.cos() - u * skew.sin()) * 3.0;
        e.add_reference_point(RefPointKind::YieldLine, yield_at, None, None)?;
        e.add_reference_point(RefPointKind::LineOverlap, ring(j0), Some(circ_id.clone()), None)?;
        c.add_reference_point(RefPointKind::LineOverlap, ring(j0), Some(entry_id.clone()), None)?;
        let (se, sc) = (s_of(&e, ring(j0))?, s_of(&c, ring(j0))?);
        let len = s_of(&e, ring(jx))? - se;
        shared.push(SharedSection { a: entry_id.clone(), a_start: se, b: circ_id.clone(), b_start: sc, len });
        scenarios.push(Scenario {
            ego_path: entry_id.clone(),
            traffic_path: circ_id.clone(),
            conflict: Some(Conflict { minor: entry_id.clone(), s_minor: se, major: circ_id.clone(), s_major: sc }),
        });
        paths.push(e);
        paths.push(c);
        roles.push((entry_id, PathRole::Entry));
        roles.push((circ_id, PathRole::Circulating));
    }
    for m in 0..n {
        let jx = m as i64 * pw + pw / 2;
        let (tx, ux) = tangent(jx);
        let end = ring(jx) + (tx * skew.cos() + ux * skew.sin()) * 60.0;
        let pts = join(ring_run(jx - pw, jx), &line(&[ring(jx), end]));
        let id = PathId::new(format!("exit{m}"));
        paths.push(ReferencePath::new(id.clone(), &pts, 9.0)?);
        roles.push((id, PathRole::Exit));
    }
    let map = RoadMap::new(paths, &[])?;
    Ok(MapTemplate {
        kind: TemplateKind::Roundabout { n_ways: n, radius },
        map: Arc::new(map),
        roles,
        shared,
        scenarios,
    })
}
