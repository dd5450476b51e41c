use serde::{Deserialize, Serialize};

use super::SimResult;
use crate::angle;
use crate::error::{config_err, Result};
use crate::trajectory::Trajectory;
use crate::vehicle_model::VehicleState;

/// Curvature below which a segment counts as straight for overshoot, 1/m.
const CURVED_SEGMENT: f64 = 1e-3;

/// Tracking errors of one state against the reference polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathErrors {
    /// Signed lateral distance to the nearest segment, positive to the left.
    pub cross_track: f64,
    /// Heading minus interpolated reference heading, wrapped.
    pub heading: f64,
    /// Speed minus interpolated reference speed.
    pub speed: f64,
    /// Index of the nearest segment (between waypoints `segment` and `segment + 1`).
    pub segment: usize,
}

/// Projects the rear axle onto the nearest trajectory segment. Ties go to
/// the lower segment index.
pub fn path_errors(traj: &Trajectory, state: &VehicleState) -> PathErrors {
    let wps = traj.waypoints();
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for i in 0..wps.len() - 1 {
        let (a, b) = (&wps[i], &wps[i + 1]);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len_sq = dx * dx + dy * dy;
        let t = (((state.x - a.x) * dx + (state.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
        let (px, py) = (a.x + t * dx, a.y + t * dy);
        let d = (state.x - px).powi(2) + (state.y - py).powi(2);
        if d < best.0 {
            best = (d, i, t);
        }
    }
    let (d_sq, i, t) = best;
    let (a, b) = (&wps[i], &wps[i + 1]);
    let cross = (b.x - a.x) * (state.y - a.y) - (b.y - a.y) * (state.x - a.x);
    let dist = d_sq.sqrt();
    let cross_track = if cross < 0.0 { -dist } else { dist };
    let theta_ref = a.theta + t * angle::diff(b.theta, a.theta);
    let v_ref = a.v + t * (b.v - a.v);
    PathErrors {
        cross_track,
        heading: angle::diff(state.theta, theta_ref),
        speed: state.v - v_ref,
        segment: i,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub max_cross_track: f64,
    pub rms_cross_track: f64,
    /// Largest excursion to the outside of a curve, meters. Negative when
    /// the vehicle stays on the inside of every curved segment.
    pub max_overshoot: f64,
    pub final_position_error: f64,
    pub final_speed: f64,
    /// Largest change of the commanded road-wheel angle between ticks, rad/step.
    pub max_steering_rate: f64,
    pub steps_at_constraint: usize,
}

/// Summarizes a run; cross-track errors are recomputed from the recorded
/// states.
pub fn compute_metrics(result: &SimResult, trajectory: &Trajectory) -> Result<Metrics> {
    let Some(last) = result.samples.last() else {
        return config_err("cannot compute metrics of an empty run");
    };
    let wps = trajectory.waypoints();
    let mut max_ct: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut overshoot = f64::NEG_INFINITY;
    for s in &result.samples {
        let e = path_errors(trajectory, &s.state);
        max_ct = max_ct.max(e.cross_track.abs());
        sum_sq += e.cross_track * e.cross_track;
        let (a, b) = (&wps[e.segment], &wps[e.segment + 1]);
        let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
        let curvature = angle::diff(b.theta, a.theta) / len;
        if curvature.abs() > CURVED_SEGMENT {
            overshoot = overshoot.max(-curvature.signum() * e.cross_track);
        }
    }
    let max_steering_rate = result
        .samples
        .windows(2)
        .map(|w| (w[1].command.delta_cmd - w[0].command.delta_cmd).abs())
        .fold(0.0, f64::max);
    let end = trajectory.last();
    Ok(Metrics {
        max_cross_track: max_ct,
        rms_cross_track: (sum_sq / result.samples.len() as f64).sqrt(),
        max_overshoot: if overshoot.is_finite() { overshoot } else { 0.0 },
        final_position_error: ((last.state.x - end.x).powi(2) + (last.state.y - end.y).powi(2)).sqrt(),
        final_speed: last.state.v.abs(),
        max_steering_rate,
        steps_at_constraint: result.samples.iter().filter(|s| s.constraint_active).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::ControlCommand;
    use crate::sim::{SimSample, Termination};
    use crate::trajectory::Waypoint;

    fn sample(t: f64, state: VehicleState, delta: f64) -> SimSample {
        let mut command = ControlCommand::idle();
        command.delta_cmd = delta;
        SimSample {
            t,
            state,
            command,
            cross_track_error: 0.0,
            heading_error: 0.0,
            v_error: 0.0,
            qp_iterations: 0,
            constraint_active: false,
        }
    }

    fn result(samples: Vec<SimSample>) -> SimResult {
        SimResult {
            samples,
            termination: Termination::Duration,
            failure: None,
        }
    }

    fn line() -> Trajectory {
        Trajectory::new((0..5).map(|i| Waypoint::new(i as f64, 0.0, 0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn sign_is_positive_to_the_left() {
        let traj = line();
        assert!((path_errors(&traj, &VehicleState::new(1.5, 0.3, 1.0, 0.0)).cross_track - 0.3).abs() < 1e-15);
        assert!((path_errors(&traj, &VehicleState::new(1.5, -0.3, 1.0, 0.0)).cross_track + 0.3).abs() < 1e-15);
    }

    #[test]
    fn samples_on_the_trajectory_have_zero_error() {
        let traj = line();
        let samples = traj
            .waypoints()
            .iter()
            .enumerate()
            .map(|(i, w)| sample(i as f64, VehicleState::new(w.x, w.y, 0.0, w.theta), 0.0))
            .collect();
        let m = compute_metrics(&result(samples), &traj).unwrap();
        assert_eq!(m.max_cross_track, 0.0);
        assert_eq!(m.rms_cross_track, 0.0);
        assert_eq!(m.final_position_error, 0.0);
        assert_eq!(m.max_steering_rate, 0.0);
        assert_eq!(m.max_overshoot, 0.0);
    }

    #[test]
    fn single_offset_sample() {
        let traj = line();
        let r = result(vec![sample(0.0, VehicleState::new(2.0, 0.2, 0.0, 0.0), 0.0)]);
        let m = compute_metrics(&r, &traj).unwrap();
        assert!((m.max_cross_track - 0.2).abs() < 1e-15);
        assert!(m.rms_cross_track <= m.max_cross_track);
    }

    #[test]
    fn steering_rate_and_empty_run() {
        let traj = line();
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let r = result(vec![sample(0.0, s, 0.0), sample(0.05, s, 0.03), sample(0.1, s, -0.02)]);
        let m = compute_metrics(&r, &traj).unwrap();
        assert!((m.max_steering_rate - 0.05).abs() < 1e-15);
        assert!(compute_metrics(&result(vec![]), &traj).is_err());
    }

    #[test]
    fn overshoot_counts_the_outside_of_a_left_turn() {
        // quarter circle of radius 5 turning left
        let traj = Trajectory::new(
            (0..=10)
                .map(|i| {
                    let a = i as f64 * std::f64::consts::FRAC_PI_2 / 10.0;
                    Waypoint::new(5.0 * a.sin(), 5.0 - 5.0 * a.cos(), a, 1.0)
                })
                .collect(),
        )
        .unwrap();
        let a: f64 = 0.4;
        let outside = VehicleState::new(5.3 * a.sin(), 5.0 - 5.3 * a.cos(), 1.0, a);
        let m = compute_metrics(&result(vec![sample(0.0, outside, 0.0)]), &traj).unwrap();
        assert!(m.max_overshoot > 0.25, "{}", m.max_overshoot);
        let inside = VehicleState::new(4.7 * a.sin(), 5.0 - 4.7 * a.cos(), 1.0, a);
        let m = compute_metrics(&result(vec![sample(0.0, inside, 0.0)]), &traj).unwrap();
        assert!(m.max_overshoot < 0.0);
    }

    #[test]
    fn heading_and_speed_errors() {
        let traj = line();
        let e = path_errors(&traj, &VehicleState::new(2.5, 0.0, 1.5, 0.1));
        assert!((e.heading - 0.1).abs() < 1e-15);
        assert!((e.speed - 0.5).abs() < 1e-15);
        assert_eq!(e.segment, 2);
    }
}
