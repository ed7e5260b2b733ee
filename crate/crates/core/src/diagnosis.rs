//! Behaviour-guided diagnosis: poses on successful trajectories where the
//! direction of motion swings by more than a threshold between consecutive
//! segments.

use crate::world::{wrap_angle, Pose};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosisConfig {
    /// Turn threshold, radians, in (0, pi].
    pub eta: f64,
    /// Segments shorter than this have no defined direction, meters.
    pub min_segment_m: f64,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            eta: std::f64::consts::FRAC_PI_2,
            min_segment_m: 1e-6,
        }
    }
}

impl DiagnosisConfig {
    pub fn with_eta_degrees(deg: f64) -> Self {
        Self {
            eta: deg.to_radians(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.eta > 0.0 && self.eta <= std::f64::consts::PI) {
            return Err(format!("eta {} outside (0, pi]", self.eta));
        }
        if !(self.min_segment_m >= 0.0) {
            return Err(format!("min_segment_m {} must be non-negative", self.min_segment_m));
        }
        Ok(())
    }
}

/// A detected point with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrPoint {
    pub pose: Pose,
    /// Index of the source trajectory in the diagnosed batch.
    pub source: usize,
    /// Index of the pose within its trajectory.
    pub index: usize,
}

/// Set of high-resistance poses, deduplicated within 1e-6 m / 1e-6 rad.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HighResistanceArea {
    pub points: Vec<HrPoint>,
}

impl HighResistanceArea {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.points.iter().map(|p| &p.pose)
    }

    pub fn contains(&self, pose: &Pose) -> bool {
        self.points.iter().any(|p| same_pose(&p.pose, pose))
    }

    fn insert(&mut self, point: HrPoint) {
        if !self.contains(&point.pose) {
            self.points.push(point);
        }
    }
}

fn same_pose(a: &Pose, b: &Pose) -> bool {
    (a.x - b.x).abs() <= 1e-6 && (a.y - b.y).abs() <= 1e-6 && wrap_angle(a.w - b.w).abs() <= 1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("angle is not finite: {0}")]
pub struct NonFiniteAngle(pub f64);

/// Wraps an angle into (-pi, pi].
pub fn wrap_to_pi(angle: f64) -> Result<f64, NonFiniteAngle> {
    if !angle.is_finite() {
        return Err(NonFiniteAngle(angle));
    }
    Ok(wrap_angle(angle))
}

/// Direction of travel from `a` to `b` (two-argument arctangent), or `None`
/// for a segment shorter than `min_segment_m`.
pub fn segment_orientation(a: &Pose, b: &Pose, min_segment_m: f64) -> Option<f64> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx.hypot(dy) < min_segment_m {
        return None;
    }
    Some(dy.atan2(dx))
}

/// Orientation change at each interior pose: `(i, wrap(rho_{i+1} - rho_i))`
/// for every triplet `(p_i, p_{i+1}, p_{i+2})` whose segments are defined.
pub fn orientation_changes(poses: &[Pose], min_segment_m: f64) -> Vec<(usize, f64)> {
    poses
        .windows(3)
        .enumerate()
        .filter_map(|(i, w)| {
            let r0 = segment_orientation(&w[0], &w[1], min_segment_m)?;
            let r1 = segment_orientation(&w[1], &w[2], min_segment_m)?;
            Some((i, wrap_angle(r1 - r0)))
        })
        .collect()
}

/// Collects `p_i` for every triplet whose orientation change exceeds
/// `eta` in magnitude. Only successful trajectories are examined.
pub fn get_hr_area(trajectories: &[Trajectory], config: &DiagnosisConfig) -> HighResistanceArea {
    diagnose(trajectories, config, true)
}

/// As [`get_hr_area`], optionally keeping failed trajectories too.
pub fn diagnose(trajectories: &[Trajectory], config: &DiagnosisConfig, filter_failures: bool) -> HighResistanceArea {
    let mut area = HighResistanceArea::default();
    for (source, traj) in trajectories.iter().enumerate() {
        if filter_failures && traj.outcome != Outcome::Success {
            continue;
        }
        for (index, delta) in orientation_changes(&traj.poses, config.min_segment_m) {
            if delta.abs() > config.eta {
                area.insert(HrPoint {
                    pose: traj.poses[index],
                    source,
                    index,
                });
            }
        }
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn traj(pts: &[(f64, f64)], outcome: Outcome) -> Trajectory {
        Trajectory {
            poses: pts.iter().map(|&(x, y)| Pose::new(x, y, 0.0)).collect(),
            outcome,
        }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_to_pi(0.0).unwrap(), 0.0);
        assert!((wrap_to_pi(1.5 * PI).unwrap() + FRAC_PI_2).abs() < 1e-12);
        assert_eq!(wrap_to_pi(-PI).unwrap(), PI);
        assert_eq!(wrap_to_pi(PI).unwrap(), PI);
        assert!(wrap_to_pi(f64::NAN).is_err());
        assert!(wrap_to_pi(f64::INFINITY).is_err());
    }

    #[test]
    fn orientation_is_quadrant_aware() {
        let o = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(segment_orientation(&o, &Pose::new(1.0, 0.0, 0.0), 1e-6), Some(0.0));
        assert_eq!(segment_orientation(&o, &Pose::new(-1.0, 0.0, 0.0), 1e-6), Some(PI));
        assert_eq!(segment_orientation(&o, &o, 1e-6), None);
    }

    #[test]
    fn straight_line_has_no_points() {
        let t = traj(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], Outcome::Success);
        assert!(get_hr_area(&[t], &DiagnosisConfig::default()).is_empty());
    }

    #[test]
    fn back_and_forth_is_detected_on_success_only() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)];
        let h = get_hr_area(&[traj(&pts, Outcome::Success)], &DiagnosisConfig::default());
        assert_eq!(h.len(), 1);
        assert_eq!(h.points[0].pose, Pose::new(0.0, 0.0, 0.0));
        assert_eq!(h.points[0].index, 0);
        assert!(get_hr_area(&[traj(&pts, Outcome::Collision)], &DiagnosisConfig::default()).is_empty());
        assert_eq!(diagnose(&[traj(&pts, Outcome::Collision)], &DiagnosisConfig::default(), false).len(), 1);
    }

    #[test]
    fn right_angle_is_a_strict_threshold() {
        let t = traj(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)], Outcome::Success);
        assert_eq!(get_hr_area(std::slice::from_ref(&t), &DiagnosisConfig::with_eta_degrees(80.0)).len(), 1);
        assert!(get_hr_area(&[t], &DiagnosisConfig::with_eta_degrees(90.0)).is_empty());
    }

    #[test]
    fn stationary_segments_are_skipped() {
        let t = traj(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (0.0, 0.0)], Outcome::Success);
        let h = get_hr_area(&[t], &DiagnosisConfig::default());
        assert_eq!(h.points.iter().map(|p| p.index).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn duplicates_collapse() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)];
        let ts = vec![traj(&pts, Outcome::Success), traj(&pts, Outcome::Success)];
        assert_eq!(get_hr_area(&ts, &DiagnosisConfig::default()).len(), 1);
    }

    #[test]
    fn collinear_change_is_zero_not_pi() {
        let pts: Vec<Pose> = (0..5).map(|k| Pose::new(-(k as f64), 0.0, 0.0)).collect();
        for (_, d) in orientation_changes(&pts, 1e-6) {
            assert_eq!(d, 0.0);
        }
    }
}
