use super::path::{ReferencePath, DEFAULT_CORRIDOR_HALF_WIDTH};
use super::vec2::Vec2;
use crate::error::GeometryError;
use crate::scalar::Scalar;

/// Topological relation between two reference paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Overlap<T> {
    /// Paths cross at a single point.
    PointOverlap(Vec2<T>),
    /// Paths share a run of identical waypoints; carries the junction where
    /// the shared run starts (merge) or ends (diverge).
    LineOverlap(Vec2<T>),
    /// Paths run side by side without a fixed reference point.
    UndecidedOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OverlapKind {
    Point,
    Line,
    Undecided,
}

impl<T> Overlap<T> {
    pub fn kind(&self) -> OverlapKind {
        match self {
            Self::PointOverlap(_) => OverlapKind::Point,
            Self::LineOverlap(_) => OverlapKind::Line,
            Self::UndecidedOverlap => OverlapKind::Undecided,
        }
    }
}

pub fn classify_overlap<T: Scalar>(a: &ReferencePath<T>, b: &ReferencePath<T>) -> Result<Overlap<T>, GeometryError> {
    classify_overlap_within(a, b, T::lit(DEFAULT_CORRIDOR_HALF_WIDTH))
}

/// Classifies the relation between two paths: a shared suffix (merge) or
/// prefix (diverge) of at least two identical waypoints is a line overlap,
/// any proper crossing is a point overlap, and paths that come within the
/// corridor half-width without touching are undecided.
pub fn classify_overlap_within<T: Scalar>(
    a: &ReferencePath<T>,
    b: &ReferencePath<T>,
    half_width: T,
) -> Result<Overlap<T>, GeometryError> {
    let tol = T::lit(1e-9);
    let wa = a.waypoints();
    let wb = b.waypoints();

    let suffix = wa.iter().rev().zip(wb.iter().rev()).take_while(|(p, q)| p.distance(**q) <= tol).count();
    if suffix >= 2 {
        return Ok(Overlap::LineOverlap(wa[wa.len() - suffix]));
    }
    let prefix = wa.iter().zip(wb.iter()).take_while(|(p, q)| p.distance(**q) <= tol).count();
    if prefix >= 2 {
        return Ok(Overlap::LineOverlap(wa[prefix - 1]));
    }

    if let Some(p) = first_crossing(a, b) {
        return Ok(Overlap::PointOverlap(p));
    }
    if polyline_distance(wa, wb) <= half_width {
        Ok(Overlap::UndecidedOverlap)
    } else {
        Err(GeometryError::NoRelation { a: a.id().0.clone(), b: b.id().0.clone() })
    }
}

fn bbox<T: Scalar>(p: Vec2<T>, q: Vec2<T>) -> (Vec2<T>, Vec2<T>) {
    (Vec2::new(p.x.min(q.x), p.y.min(q.y)), Vec2::new(p.x.max(q.x), p.y.max(q.y)))
}

/// Intersection of segments `p0p1` and `q0q1`, endpoints inclusive.
pub(crate) fn segment_intersection<T: Scalar>(p0: Vec2<T>, p1: Vec2<T>, q0: Vec2<T>, q1: Vec2<T>) -> Option<Vec2<T>> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    if denom.abs() <= T::lit(1e-15) * r.norm() * s.norm() {
        return None;
    }
    let qp = q0 - p0;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    let eps = T::lit(1e-12);
    if t >= -eps && t <= T::one() + eps && u >= -eps && u <= T::one() + eps {
        Some(p0 + r * t)
    } else {
        None
    }
}

/// First crossing along `a` in travel order.
fn first_crossing<T: Scalar>(a: &ReferencePath<T>, b: &ReferencePath<T>) -> Option<Vec2<T>> {
    let wa = a.waypoints();
    let wb = b.waypoints();
    let (lo_b, hi_b) = wb.iter().fold((wb[0], wb[0]), |(lo, hi), p| {
        (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y)))
    });
    for sa in wa.windows(2) {
        let (lo, hi) = bbox(sa[0], sa[1]);
        if hi.x < lo_b.x || lo.x > hi_b.x || hi.y < lo_b.y || lo.y > hi_b.y {
            continue;
        }
        let mut hit: Option<(T, Vec2<T>)> = None;
        for sb in wb.windows(2) {
            if let Some(p) = segment_intersection(sa[0], sa[1], sb[0], sb[1]) {
                let t = p.distance(sa[0]);
                if hit.map_or(true, |(bt, _)| t < bt) {
                    hit = Some((t, p));
                }
            }
        }
        if let Some((_, p)) = hit {
            return Some(p);
        }
    }
    None
}

fn point_segment_distance<T: Scalar>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> T {
    let e = b - a;
    let len2 = e.dot(e);
    let t = ((p - a).dot(e) / len2).max(T::zero()).min(T::one());
    p.distance(a + e * t)
}

fn polyline_distance<T: Scalar>(wa: &[Vec2<T>], wb: &[Vec2<T>]) -> T {
    let mut best = T::infinity();
    for sa in wa.windows(2) {
        for sb in wb.windows(2) {
            let d = point_segment_distance(sa[0], sb[0], sb[1])
                .min(point_segment_distance(sa[1], sb[0], sb[1]))
                .min(point_segment_distance(sb[0], sa[0], sa[1]))
                .min(point_segment_distance(sb[1], sa[0], sa[1]));
            if d < best {
                best = d;
            }
        }
    }
    best
}
