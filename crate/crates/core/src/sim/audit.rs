//! Offline safety checks over a trace.

use super::config::Footprint;
use super::trace::TraceRecord;
use crate::partition::{g, PartitionGeometry, Rule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// A lower-priority vehicle deep inside a higher one's protected sector.
    ProtectedRegion,
    /// Footprint rectangles intersect.
    Overlap,
    /// Centre outside the road band.
    RoadDeparture,
}

impl ViolationKind {
    pub fn is_hard(self) -> bool {
        !matches!(self, ViolationKind::ProtectedRegion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub time: f64,
    pub kind: ViolationKind,
    pub vehicle: usize,
    /// The other vehicle of a pairwise check.
    pub other: Option<usize>,
    /// Sector depth, overlap flag 1, or distance outside the band, m.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub geometry: PartitionGeometry,
    pub footprint: Footprint,
    /// Tolerated sector depth before a protected-region entry is reported.
    pub slack: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            geometry: PartitionGeometry::default(),
            footprint: Footprint::default(),
            slack: 0.5,
        }
    }
}

/// Planar pose `(x, y, yaw)`.
pub type Pose2 = (f64, f64, f64);

/// Separating-axis test on two equal rectangles. Touching edges count as
/// separated.
pub fn rectangles_overlap(a: Pose2, b: Pose2, fp: &Footprint) -> bool {
    let corners = |p: Pose2| {
        let (c, s) = (p.2.cos(), p.2.sin());
        [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].map(|(l, w)| {
            let (dx, dy) = (l * fp.half_length, w * fp.half_width);
            (p.0 + c * dx - s * dy, p.1 + s * dx + c * dy)
        })
    };
    let (ca, cb) = (corners(a), corners(b));
    let axes = [a.2, a.2 + std::f64::consts::FRAC_PI_2, b.2, b.2 + std::f64::consts::FRAC_PI_2];
    axes.iter().all(|&angle| {
        let (ux, uy) = (angle.cos(), angle.sin());
        let project = |pts: &[(f64, f64); 4]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p.0 * ux + p.1 * uy;
                (lo.min(d), hi.max(d))
            })
        };
        let (alo, ahi) = project(&ca);
        let (blo, bhi) = project(&cb);
        ahi > blo && bhi > alo
    })
}

/// How far `point` lies inside the protected sector of `vehicle`; positive
/// only inside.
pub fn sector_depth(vehicle: (f64, f64), geom: &PartitionGeometry, point: (f64, f64)) -> f64 {
    Rule::ALL
        .iter()
        .map(|&rule| g(rule, vehicle, geom, point))
        .fold(f64::INFINITY, f64::min)
}

/// Checks every tick of `trace`: sector entries for each ordered pair of
/// the active priority list, footprint overlaps, and road departures.
pub fn audit_safety(trace: &[TraceRecord], settings: &AuditSettings) -> Vec<SafetyViolation> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < trace.len() {
        let time = trace[start].time;
        let end = start + trace[start..].iter().take_while(|r| r.time == time).count();
        audit_tick(&trace[start..end], settings, &mut out);
        start = end;
    }
    out
}

fn audit_tick(tick: &[TraceRecord], settings: &AuditSettings, out: &mut Vec<SafetyViolation>) {
    for rec in tick {
        let excess = (rec.r - rec.road_left).max(rec.road_right - rec.r);
        if excess > 0.0 {
            out.push(SafetyViolation {
                time: rec.time,
                kind: ViolationKind::RoadDeparture,
                vehicle: rec.vehicle,
                other: None,
                value: excess,
            });
        }
    }
    for (n, hi) in tick.iter().enumerate() {
        for lo in &tick[n + 1..] {
            let (hi, lo) = if hi.rank <= lo.rank { (hi, lo) } else { (lo, hi) };
            let depth = sector_depth((hi.s, hi.r), &settings.geometry, (lo.s, lo.r));
            if depth > settings.slack {
                out.push(SafetyViolation {
                    time: hi.time,
                    kind: ViolationKind::ProtectedRegion,
                    vehicle: lo.vehicle,
                    other: Some(hi.vehicle),
                    value: depth,
                });
            }
            if rectangles_overlap((hi.x, hi.y, hi.yaw), (lo.x, lo.y, lo.yaw), &settings.footprint) {
                out.push(SafetyViolation {
                    time: hi.time,
                    kind: ViolationKind::Overlap,
                    vehicle: lo.vehicle,
                    other: Some(hi.vehicle),
                    value: 1.0,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::tests::record;
    use proptest::prelude::*;

    fn at(time: f64, vehicle: usize, s: f64, r: f64) -> TraceRecord {
        let mut rec = record(time, vehicle);
        rec.s = s;
        rec.r = r;
        rec.x = s;
        rec.y = r;
        rec.yaw = 0.0;
        rec
    }

    #[test]
    fn perfect_formation_is_clean() {
        let mut trace = Vec::new();
        for step in 0..50 {
            let t = step as f64 * 0.064;
            let lead = 6.0 * t;
            trace.push(at(t, 0, lead, 0.0));
            trace.push(at(t, 1, lead - 10.0, 3.0));
            trace.push(at(t, 2, lead - 10.0, -3.0));
        }
        assert!(audit_safety(&trace, &AuditSettings::default()).is_empty());
    }

    #[test]
    fn coincident_vehicles_flagged_hard() {
        let trace = vec![at(0.0, 0, 50.0, 0.0), at(0.0, 1, 50.0, 0.0)];
        let found = audit_safety(&trace, &AuditSettings::default());
        assert!(found.iter().any(|v| v.kind == ViolationKind::Overlap && v.kind.is_hard()));
        assert!(found.iter().any(|v| v.kind == ViolationKind::ProtectedRegion && v.vehicle == 1));
    }

    #[test]
    fn road_departure_flagged() {
        let trace = vec![at(0.0, 0, 10.0, 5.5)];
        let found = audit_safety(&trace, &AuditSettings::default());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, ViolationKind::RoadDeparture);
        assert!((found[0].value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shallow_sector_entry_tolerated() {
        // Abreast 2.7 m to the left: depth 0.1 inside the sector.
        let trace = vec![at(0.0, 0, 50.0, 0.0), at(0.0, 1, 50.0, 2.7)];
        let found = audit_safety(&trace, &AuditSettings::default());
        assert!(found.iter().all(|v| v.kind != ViolationKind::ProtectedRegion));
    }

    #[test]
    fn rectangle_cases() {
        let fp = Footprint {
            half_length: 2.0,
            half_width: 0.85,
        };
        assert!(rectangles_overlap((0.0, 0.0, 0.0), (3.9, 0.0, 0.0), &fp));
        assert!(!rectangles_overlap((0.0, 0.0, 0.0), (4.1, 0.0, 0.0), &fp));
        assert!(!rectangles_overlap((0.0, 0.0, 0.0), (0.0, 1.75, 0.0), &fp));
        assert!(rectangles_overlap((0.0, 0.0, 0.0), (0.0, 1.65, 0.0), &fp));
        // Rotated a quarter turn: long side now spans y.
        assert!(rectangles_overlap((0.0, 0.0, 0.0), (0.0, 2.7, std::f64::consts::FRAC_PI_2), &fp));
        assert!(!rectangles_overlap((0.0, 0.0, 0.0), (0.0, 2.9, std::f64::consts::FRAC_PI_2), &fp));
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_distance_consistent(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64, ah in -3.2..3.2f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64, bh in -3.2..3.2f64,
        ) {
            let fp = Footprint::default();
            let o = rectangles_overlap((ax, ay, ah), (bx, by, bh), &fp);
            prop_assert_eq!(o, rectangles_overlap((bx, by, bh), (ax, ay, ah), &fp));
            let far = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            if far > 2.0 * (fp.half_length.hypot(fp.half_width)) + 1e-9 {
                prop_assert!(!o);
            }
            if far < 2.0 * fp.half_width - 1e-9 {
                prop_assert!(o);
            }
        }

        #[test]
        fn depth_positive_only_in_protected_sector(
            ds in -30.0..30.0f64, dr in -10.0..10.0f64,
        ) {
            let geom = PartitionGeometry::default();
            let depth = sector_depth((0.0, 0.0), &geom, (ds, dr));
            let inside = crate::partition::classify_region((0.0, 0.0), &geom, (ds, dr))
                == crate::partition::RegionLabel::A0;
            prop_assert_eq!(depth > 0.0, inside);
        }
    }
}
