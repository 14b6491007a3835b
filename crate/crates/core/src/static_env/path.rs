use std::fmt;

use serde::{Deserialize, Serialize};

use super::vec2::Vec2;
use crate::error::GeometryError;
use crate::scalar::{wrap_angle, Scalar};

/// Default lateral corridor half-width for projections, meters.
pub const DEFAULT_CORRIDOR_HALF_WIDTH: f64 = 15.0;
/// Minimum admissible segment length, meters.
pub const MIN_SEGMENT_LENGTH: f64 = 1e-9;
/// Maximum lateral offset of an annotated reference point from its path.
pub const REFERENCE_POINT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathId(pub String);

impl PathId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PathId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RefPointKind {
    PointOverlap,
    LineOverlap,
    StopLine,
    TrafficLight,
    YieldLine,
    /// Inserted by the regulatory transform ahead of a stop or yield line.
    VirtualStopLine,
    /// Synthetic point a fixed distance ahead of the predicted vehicle.
    Horizon,
}

impl RefPointKind {
    pub fn is_topological(self) -> bool {
        matches!(self, Self::PointOverlap | Self::LineOverlap)
    }

    pub fn is_regulatory(self) -> bool {
        matches!(self, Self::StopLine | Self::TrafficLight | Self::YieldLine | Self::VirtualStopLine)
    }

    /// Traffic signs in the sense of active-point selection.
    pub fn is_sign(self) -> bool {
        matches!(self, Self::StopLine | Self::YieldLine | Self::VirtualStopLine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LightState {
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint<T> {
    pub location: Vec2<T>,
    pub s_on_path: T,
    pub kind: RefPointKind,
    pub partner_path: Option<PathId>,
    pub light_state: Option<LightState>,
}

/// Path-relative coordinates: arc length `s` and signed lateral offset `d`
/// (positive to the left of the travel direction).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrenetPose<T> {
    pub s: T,
    pub d: T,
}

impl<T: Scalar> FrenetPose<T> {
    pub fn new(s: T, d: T) -> Self {
        Self { s, d }
    }
}

/// Arc-length parameterized piecewise-linear reference path.
///
/// The Frenet frame uses vertex normals (bisectors of adjacent segment
/// normals) interpolated along each segment, which makes the map between
/// Cartesian and path coordinates continuous across vertices and exactly
/// invertible inside the corridor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath<T> {
    id: PathId,
    waypoints: Vec<Vec2<T>>,
    arclen: Vec<T>,
    normals: Vec<Vec2<T>>,
    speed_limit: T,
    ref_points: Vec<ReferencePoint<T>>,
}

/// Builds a reference path from raw waypoints. Consecutive duplicates are
/// dropped; fewer than two distinct points is an error.
pub fn fit_reference_path<T: Scalar>(
    id: impl Into<PathId>,
    waypoints: &[Vec2<T>],
    speed_limit: T,
) -> Result<ReferencePath<T>, GeometryError> {
    ReferencePath::new(id, waypoints, speed_limit)
}

impl<T: Scalar> ReferencePath<T> {
    pub fn new(
        id: impl Into<PathId>,
        waypoints: &[Vec2<T>],
        speed_limit: T,
    ) -> Result<Self, GeometryError> {
        let id = id.into();
        let min_len = T::lit(MIN_SEGMENT_LENGTH);
        let mut pts: Vec<Vec2<T>> = Vec::with_capacity(waypoints.len());
        for &p in waypoints {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            match pts.last() {
                Some(&last) if p.distance(last) <= min_len => {}
                _ => pts.push(p),
            }
        }
        if pts.len() < 2 {
            return Err(GeometryError::DegeneratePath { id: id.0 });
        }
        let mut arclen = Vec::with_capacity(pts.len());
        arclen.push(T::zero());
        for w in pts.windows(2) {
            let prev = *arclen.last().unwrap();
            arclen.push(prev + w[1].distance(w[0]));
        }
        let seg_normals: Vec<Vec2<T>> = pts.windows(2).map(|w| (w[1] - w[0]).normalized().perp()).collect();
        let mut normals = Vec::with_capacity(pts.len());
        normals.push(seg_normals[0]);
        for w in seg_normals.windows(2) {
            let sum = w[0] + w[1];
            // a full reversal has no bisector; fall back to the incoming normal
            if sum.norm() < T::lit(1e-9) {
                normals.push(w[0]);
            } else {
                normals.push(sum.normalized());
            }
        }
        normals.push(*seg_normals.last().unwrap());
        Ok(Self { id, waypoints: pts, arclen, normals, speed_limit, ref_points: Vec::new() })
    }

    /// Annotates a reference point, projecting it onto the path.
    pub fn add_reference_point(
        &mut self,
        kind: RefPointKind,
        location: Vec2<T>,
        partner_path: Option<PathId>,
        light_state: Option<LightState>,
    ) -> Result<&ReferencePoint<T>, GeometryError> {
        if kind.is_topological() != partner_path.is_some() {
            return Err(GeometryError::InvalidReferencePoint {
                path: self.id.0.clone(),
                reason: "partner path must be given exactly for topological points".into(),
            });
        }
        if (kind == RefPointKind::TrafficLight) != light_state.is_some() {
            return Err(GeometryError::InvalidReferencePoint {
                path: self.id.0.clone(),
                reason: "light state must be given exactly for traffic lights".into(),
            });
        }
        let pose = self.to_frenet(location)?;
        if pose.d.abs() >= T::lit(REFERENCE_POINT_TOLERANCE) {
            return Err(GeometryError::InvalidReferencePoint {
                path: self.id.0.clone(),
                reason: format!("point lies {} m off the path", pose.d.abs()),
            });
        }
        let point = ReferencePoint { location, s_on_path: pose.s, kind, partner_path, light_state };
        let idx = self.ref_points.partition_point(|p| p.s_on_path <= point.s_on_path);
        self.ref_points.insert(idx, point);
        Ok(&self.ref_points[idx])
    }

    pub fn id(&self) -> &PathId {
        &self.id
    }

    pub fn waypoints(&self) -> &[Vec2<T>] {
        &self.waypoints
    }

    pub fn arclen_table(&self) -> &[T] {
        &self.arclen
    }

    pub fn speed_limit(&self) -> T {
        self.speed_limit
    }

    /// Reference points sorted by arc length.
    pub fn ref_points(&self) -> &[ReferencePoint<T>] {
        &self.ref_points
    }

    pub fn length(&self) -> T {
        *self.arclen.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    fn check_s(&self, s: T) -> Result<(), GeometryError> {
        let eps = T::lit(1e-9);
        if !(s >= -eps && s <= self.length() + eps) {
            return Err(GeometryError::OutOfRange { s: s.to_f64_lossy(), length: self.length().to_f64_lossy() });
        }
        Ok(())
    }

    /// Segment index and fraction for an arc length already range-checked.
    fn locate(&self, s: T) -> (usize, T) {
        let n = self.segment_count();
        let k = self.arclen.partition_point(|&a| a <= s).saturating_sub(1).min(n - 1);
        let seg_len = self.arclen[k + 1] - self.arclen[k];
        let u = ((s - self.arclen[k]) / seg_len).max(T::zero()).min(T::one());
        (k, u)
    }

    fn frame_at(&self, k: usize, u: T) -> (Vec2<T>, Vec2<T>) {
        let a = self.waypoints[k];
        let b = self.waypoints[k + 1];
        let pos = a + (b - a) * u;
        let n = (self.normals[k] * (T::one() - u) + self.normals[k + 1] * u).normalized();
        (pos, n)
    }

    /// Cartesian position of path coordinates `(s, d)`.
    pub fn to_cartesian(&self, pose: FrenetPose<T>) -> Result<Vec2<T>, GeometryError> {
        self.check_s(pose.s)?;
        let (k, u) = self.locate(pose.s);
        let (pos, n) = self.frame_at(k, u);
        Ok(pos + n * pose.d)
    }

    /// Point on the path centerline at arc length `s`, clamped to the path.
    pub fn point_at(&self, s: T) -> Vec2<T> {
        let s = s.max(T::zero()).min(self.length());
        let (k, u) = self.locate(s);
        self.frame_at(k, u).0
    }

    /// Heading of the travel direction at `s`, in `(-pi, pi]`.
    pub fn tangent_heading(&self, s: T) -> Result<T, GeometryError> {
        self.check_s(s)?;
        let (k, u) = self.locate(s);
        let (_, n) = self.frame_at(k, u);
        // tangent is the normal rotated by -90 degrees
        Ok(wrap_angle(Vec2::new(n.y, -n.x).heading()))
    }

    /// Projects with the default corridor half-width.
    pub fn to_frenet(&self, point: Vec2<T>) -> Result<FrenetPose<T>, GeometryError> {
        self.to_frenet_within(point, T::lit(DEFAULT_CORRIDOR_HALF_WIDTH))
    }

    /// Projects `point` onto the path. Among all segments whose interpolated
    /// normal passes through the point, the one with the smallest `|d|` wins;
    /// ties go to the smallest `s`. Points beyond the path ends fall back to
    /// the nearest endpoint.
    pub fn to_frenet_within(&self, point: Vec2<T>, half_width: T) -> Result<FrenetPose<T>, GeometryError> {
        let tie = T::lit(1e-12);
        let mut best: Option<FrenetPose<T>> = None;
        let mut consider = |cand: FrenetPose<T>| match best {
            Some(b) if cand.d.abs() >= b.d.abs() - tie => {}
            _ => best = Some(cand),
        };
        for k in 0..self.segment_count() {
            if let Some(u) = self.segment_root(k, point) {
                let (pos, n) = self.frame_at(k, u);
                let d = (point - pos).dot(n);
                let s = self.arclen[k] + (self.arclen[k + 1] - self.arclen[k]) * u;
                consider(FrenetPose::new(s, d));
            }
        }
        for (idx, s) in [(0usize, T::zero()), (self.waypoints.len() - 1, self.length())] {
            let p = self.waypoints[idx];
            let n = self.normals[idx];
            let diff = point - p;
            let sign = if diff.dot(n) < T::zero() { -T::one() } else { T::one() };
            consider(FrenetPose::new(s, sign * diff.norm()));
        }
        let pose = best.expect("endpoints always considered");
        if pose.d.abs() > half_width {
            return Err(GeometryError::OffCorridor {
                distance: pose.d.abs().to_f64_lossy(),
                limit: half_width.to_f64_lossy(),
            });
        }
        Ok(pose)
    }

    /// Fraction `u` in `[0, 1]` on segment `k` whose interpolated normal line
    /// passes through `point`, if any. Solves
    /// `cross(n0 + u (n1 - n0), r - u e) = 0`.
    fn segment_root(&self, k: usize, point: Vec2<T>) -> Option<T> {
        let a = self.waypoints[k];
        let e = self.waypoints[k + 1] - a;
        let n0 = self.normals[k];
        let delta = self.normals[k + 1] - n0;
        let r = point - a;
        let qa = -delta.cross(e);
        let qb = delta.cross(r) - n0.cross(e);
        let qc = n0.cross(r);
        let two = T::lit(2.0);
        let u = if qa.abs() <= T::lit(1e-14) * qb.abs().max(T::one()) {
            if qb == T::zero() {
                return None;
            }
            -qc / qb
        } else {
            let disc = qb * qb - T::lit(4.0) * qa * qc;
            if disc < T::zero() {
                return None;
            }
            let sq = disc.sqrt();
            let denom = qb + if qb >= T::zero() { sq } else { -sq };
            if denom == T::zero() {
                return None;
            }
            // root closest to the linearized solution
            -two * qc / denom
        };
        let eps = T::lit(1e-12);
        if u >= -eps && u <= T::one() + eps {
            Some(u.max(T::zero()).min(T::one()))
        } else {
            None
        }
    }

    /// Resamples the path so that no segment exceeds `max_spacing` meters.
    /// Original vertices are kept.
    pub fn densified(&self, max_spacing: T) -> Result<Self, GeometryError> {
        let pts = densify(&self.waypoints, max_spacing);
        let mut out = Self::new(self.id.clone(), &pts, self.speed_limit)?;
        for rp in &self.ref_points {
            out.add_reference_point(rp.kind, rp.location, rp.partner_path.clone(), rp.light_state)?;
        }
        Ok(out)
    }

    pub fn cast<U: Scalar>(&self) -> Result<ReferencePath<U>, GeometryError> {
        let pts: Vec<Vec2<U>> = self.waypoints.iter().map(|p| p.cast()).collect();
        let mut out = ReferencePath::new(self.id.clone(), &pts, U::lit(self.speed_limit.to_f64_lossy()))?;
        for rp in &self.ref_points {
            out.add_reference_point(rp.kind, rp.location.cast(), rp.partner_path.clone(), rp.light_state)?;
        }
        Ok(out)
    }
}

/// Inserts evenly spaced points so that consecutive points are at most
/// `max_spacing` apart.
pub fn densify<T: Scalar>(points: &[Vec2<T>], max_spacing: T) -> Vec<Vec2<T>> {
    let mut out = Vec::with_capacity(points.len());
    if let Some(&first) = points.first() {
        out.push(first);
    }
    for w in points.windows(2) {
        let len = w[1].distance(w[0]);
        let pieces = (len / max_spacing).ceil().to_usize().unwrap_or(1).max(1);
        for i in 1..=pieces {
            let u = T::lit(i as f64) / T::lit(pieces as f64);
            out.push(if i == pieces { w[1] } else { w[0] + (w[1] - w[0]) * u });
        }
    }
    out
}
