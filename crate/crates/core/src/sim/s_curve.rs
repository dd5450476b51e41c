use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{config_err, Result};
use crate::trajectory::{Trajectory, Waypoint};

/// Upper speed bound for the kinematic model, m/s.
pub const MAX_KINEMATIC_SPEED: f64 = 10.0;
/// Waypoint spacing along x, meters.
pub const S_CURVE_SPACING: f64 = 0.5;
/// Acceleration of the speed ramps, m/s^2.
pub const RAMP_ACCEL: f64 = 0.5;
/// Straight run added after the ramp distance before the lateral shift starts, meters.
const LEAD_MARGIN: f64 = 1.0;

/// Generator parameters for a lateral S-shaped shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SCurveSpec {
    /// Lateral displacement, meters (sign picks the direction).
    pub lateral_offset: f64,
    /// Longitudinal length of the shift, meters.
    pub transition_length: f64,
    /// Cruise speed, m/s.
    pub cruise_speed: f64,
}

impl SCurveSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.lateral_offset.is_finite() {
            out.push(format!("s_curve.lateral_offset must be finite, got {}", self.lateral_offset));
        }
        if !(self.transition_length.is_finite() && self.transition_length > 0.0) {
            out.push(format!(
                "s_curve.transition_length must be > 0, got {}",
                self.transition_length
            ));
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed < MAX_KINEMATIC_SPEED) {
            out.push(format!(
                "s_curve.cruise_speed must be in (0, {MAX_KINEMATIC_SPEED}) m/s, got {}",
                self.cruise_speed
            ));
        }
        out
    }

    /// Straight run before and after the shift: long enough to reach the
    /// cruise speed, rounded up to the waypoint spacing.
    fn lead_length(&self) -> f64 {
        let ramp = self.cruise_speed.powi(2) / (2.0 * RAMP_ACCEL) + LEAD_MARGIN;
        (ramp / S_CURVE_SPACING).ceil() * S_CURVE_SPACING
    }

    /// Nominal time to drive the profile, seconds.
    pub fn nominal_duration(&self, length: f64) -> f64 {
        let ramp_time = self.cruise_speed / RAMP_ACCEL;
        let ramp_dist = self.cruise_speed.powi(2) / RAMP_ACCEL;
        2.0 * ramp_time + (length - ramp_dist).max(0.0) / self.cruise_speed
    }
}

/// Smoothstep lateral profile `h (3u^2 - 2u^3)` and its slope.
fn smoothstep(x: f64, start: f64, length: f64, offset: f64) -> (f64, f64) {
    let u = ((x - start) / length).clamp(0.0, 1.0);
    let y = offset * u * u * (3.0 - 2.0 * u);
    let slope = if (0.0..=1.0).contains(&((x - start) / length)) {
        offset * 6.0 * u * (1.0 - u) / length
    } else {
        0.0
    };
    (y, slope)
}

/// Waypoints along x with a straight lead-in, the lateral shift and a
/// straight lead-out. Speed ramps up from rest with constant acceleration,
/// cruises and ramps back down to rest at the last waypoint.
pub fn s_curve_waypoints(spec: &SCurveSpec) -> Result<Trajectory> {
    let v = spec.violations();
    if !v.is_empty() {
        return config_err(v.join("; "));
    }
    let lead = spec.lead_length();
    let length = 2.0 * lead + spec.transition_length;
    let n = (length / S_CURVE_SPACING).ceil() as usize;
    let mut waypoints: Vec<Waypoint> = (0..=n)
        .map(|i| {
            let x = i as f64 * S_CURVE_SPACING;
            let (y, slope) = smoothstep(x, lead, spec.transition_length, spec.lateral_offset);
            Waypoint::new(x, y, slope.atan(), 0.0)
        })
        .collect();

    let mut s = vec![0.0; waypoints.len()];
    for i in 1..waypoints.len() {
        let (a, b) = (&waypoints[i - 1], &waypoints[i]);
        s[i] = s[i - 1] + ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    }
    let total = *s.last().unwrap();
    for (w, &si) in waypoints.iter_mut().zip(&s) {
        let up = (2.0 * RAMP_ACCEL * si).sqrt();
        let down = (2.0 * RAMP_ACCEL * (total - si).max(0.0)).sqrt();
        w.v = spec.cruise_speed.min(up).min(down);
    }
    waypoints.last_mut().unwrap().v = 0.0;
    Trajectory::new(waypoints)
}

/// S-curve scenario with default tuning; the vehicle starts at rest on the
/// first waypoint and the time limit leaves ample room to stop.
pub fn make_s_curve_scenario(
    lateral_offset: f64,
    transition_length: f64,
    cruise_speed: f64,
) -> Result<Scenario> {
    let spec = SCurveSpec {
        lateral_offset,
        transition_length,
        cruise_speed,
    };
    let trajectory = s_curve_waypoints(&spec)?;
    let duration = (1.5 * spec.nominal_duration(trajectory.total_length()) + 10.0).ceil();
    Ok(Scenario::new(trajectory, duration))
}
