//! Reference trajectory handling: nearest-waypoint search, local cubic
//! resampling and the horizon reference preview.

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{config_err, Error, Result};
use crate::vehicle_model::VehicleState;

/// Minimum distance between consecutive trajectory points.
pub const MIN_POINT_SEPARATION: f64 = 1e-6;
/// Accepted spacing range for planner-supplied trajectories, in meters.
pub const INPUT_SPACING_RANGE: (f64, f64) = (0.25, 2.0);
/// Default resampling step, in meters of stencil parameter.
pub const DEFAULT_RESAMPLE_SPACING: f64 = 0.1;
/// Number of outputs in one reference row (lateral position, speed, heading).
pub const OUTPUTS_PER_ROW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Global heading reference, radians.
    pub theta: f64,
    /// Target longitudinal speed, m/s.
    pub v: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    fn distance_sq(&self, x: f64, y: f64) -> f64 {
        (self.x - x).powi(2) + (self.y - y).powi(2)
    }
}

/// An ordered, validated sequence of waypoints with cached arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    cumulative: Vec<f64>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return config_err(format!(
                "trajectory needs at least 2 waypoints, got {}",
                waypoints.len()
            ));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len());
        cumulative.push(0.0);
        for (i, w) in waypoints.iter().enumerate() {
            if !(w.x.is_finite() && w.y.is_finite() && w.theta.is_finite() && w.v.is_finite()) {
                return config_err(format!("waypoint {i} has a non-finite field"));
            }
            if w.v < 0.0 {
                return config_err(format!("waypoint {i} has negative speed {}", w.v));
            }
            if i > 0 {
                let prev = &waypoints[i - 1];
                let d = prev.distance_sq(w.x, w.y).sqrt();
                if d <= MIN_POINT_SEPARATION {
                    return config_err(format!("waypoints {} and {i} coincide", i - 1));
                }
                cumulative.push(cumulative[i - 1] + d);
            }
        }
        Ok(Self {
            waypoints,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Cumulative arc length at each waypoint, starting at zero.
    pub fn cumulative_arclength(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn first(&self) -> &Waypoint {
        &self.waypoints[0]
    }

    pub fn last(&self) -> &Waypoint {
        self.waypoints.last().unwrap()
    }

    pub fn max_speed(&self) -> f64 {
        self.waypoints.iter().map(|w| w.v).fold(0.0, f64::max)
    }

    /// Checks the planner resolution: consecutive waypoints 0.25–2.0 m apart.
    pub fn check_input_spacing(&self) -> Result<()> {
        let (lo, hi) = INPUT_SPACING_RANGE;
        for (i, pair) in self.cumulative.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            if d < lo || d > hi {
                return config_err(format!(
                    "waypoints {i} and {} are {d:.4} m apart, outside [{lo}, {hi}] m",
                    i + 1
                ));
            }
        }
        Ok(())
    }

    /// Reference values at arc length `s` by linear interpolation between
    /// points. Returns `None` at or beyond the trajectory end.
    fn sample_at(&self, s: f64) -> Option<Waypoint> {
        let end = self.total_length();
        if s >= end {
            return None;
        }
        let s = s.max(0.0);
        // first index with cumulative > s; s < end guarantees 1..len
        let hi = self.cumulative.partition_point(|&c| c <= s);
        let lo = hi - 1;
        let (a, b) = (&self.waypoints[lo], &self.waypoints[hi]);
        let frac = (s - self.cumulative[lo]) / (self.cumulative[hi] - self.cumulative[lo]);
        Some(Waypoint {
            x: a.x + frac * (b.x - a.x),
            y: a.y + frac * (b.y - a.y),
            theta: angle::wrap(a.theta + frac * angle::diff(b.theta, a.theta)),
            v: a.v + frac * (b.v - a.v),
        })
    }
}

/// Index of the waypoint closest to `position`; ties go to the lower index.
pub fn find_nearest_waypoint(traj: &Trajectory, position: (f64, f64)) -> Result<usize> {
    let (px, py) = position;
    if !(px.is_finite() && py.is_finite()) {
        return Err(Error::NonFinite("nearest-waypoint query"));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in traj.waypoints.iter().enumerate() {
        let d = w.distance_sq(px, py);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

/// Parameter used for the cubic fit through a stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Cumulative chord length between stencil points.
    #[default]
    ChordLength,
    /// Point index scaled by the mean chord, i.e. equally spaced knots.
    Uniform,
}

/// Cubic (Lagrange) interpolant through four consecutive waypoints.
#[derive(Debug, Clone)]
pub struct CubicStencil {
    knots: [f64; 4],
    points: [Waypoint; 4],
}

impl CubicStencil {
    /// Builds the stencil starting at `start`; headings are unwrapped so the
    /// fit never crosses the +-pi seam.
    pub fn new(traj: &Trajectory, start: usize, param: Parameterization) -> Result<Self> {
        if start + 4 > traj.len() {
            return config_err(format!(
                "stencil at {start} needs 4 waypoints, trajectory has {}",
                traj.len()
            ));
        }
        let mut points = [traj.waypoints[start]; 4];
        points.copy_from_slice(&traj.waypoints[start..start + 4]);
        for i in 1..4 {
            points[i].theta = points[i - 1].theta + angle::diff(points[i].theta, points[i - 1].theta);
        }
        let base = traj.cumulative[start];
        let mut knots = [0.0; 4];
        for (i, k) in knots.iter_mut().enumerate() {
            *k = traj.cumulative[start + i] - base;
        }
        if param == Parameterization::Uniform {
            let step = knots[3] / 3.0;
            for (i, k) in knots.iter_mut().enumerate() {
                *k = step * i as f64;
            }
        }
        Ok(Self { knots, points })
    }

    pub fn knots(&self) -> &[f64; 4] {
        &self.knots
    }

    pub fn span(&self) -> f64 {
        self.knots[3]
    }

    /// Interpolated waypoint at stencil parameter `t`. The heading is
    /// re-wrapped and the speed is kept nonnegative.
    pub fn eval(&self, t: f64) -> Waypoint {
        let mut out = Waypoint::new(0.0, 0.0, 0.0, 0.0);
        for i in 0..4 {
            let mut basis = 1.0;
            for j in 0..4 {
                if i != j {
                    basis *= (t - self.knots[j]) / (self.knots[i] - self.knots[j]);
                }
            }
            let p = &self.points[i];
            out.x += basis * p.x;
            out.y += basis * p.y;
            out.theta += basis * p.theta;
            out.v += basis * p.v;
        }
        out.theta = angle::wrap(out.theta);
        out.v = out.v.max(0.0);
        out
    }
}

/// First index of the four-point stencil around `nearest`: one waypoint
/// behind and three ahead, shifted inward at the trajectory ends.
pub fn stencil_start(len: usize, nearest: usize) -> usize {
    nearest.saturating_sub(1).min(len.saturating_sub(4))
}

fn check_resample_args(traj: &Trajectory, nearest: usize, spacing: f64) -> Result<()> {
    if traj.len() < 4 {
        return config_err(format!(
            "cubic resampling needs at least 4 waypoints, got {}",
            traj.len()
        ));
    }
    if nearest >= traj.len() {
        return config_err(format!("nearest index {nearest} out of range"));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return config_err(format!("resample spacing must be positive, got {spacing}"));
    }
    Ok(())
}

/// Resamples the stencil around `nearest` every `spacing` meters of stencil
/// parameter. The output ends exactly at the last stencil point.
pub fn resample_cubic(
    traj: &Trajectory,
    nearest: usize,
    spacing: f64,
    param: Parameterization,
) -> Result<Trajectory> {
    check_resample_args(traj, nearest, spacing)?;
    let stencil = CubicStencil::new(traj, stencil_start(traj.len(), nearest), param)?;
    let span = stencil.span();
    let mut points = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * spacing;
        if t >= span - MIN_POINT_SEPARATION {
            break;
        }
        points.push(stencil.eval(t));
        k += 1;
    }
    points.push(stencil.eval(span));
    Trajectory::new(points)
}

/// Dense trajectory from one waypoint behind `nearest` forward until at least
/// `lookahead` meters past it (or the trajectory end). Each waypoint interval
/// is sampled from the cubic stencil anchored at that interval, so the
/// result ends at the true final waypoint whenever the window reaches it.
pub fn resample_window(
    traj: &Trajectory,
    nearest: usize,
    spacing: f64,
    lookahead: f64,
    param: Parameterization,
) -> Result<Trajectory> {
    check_resample_args(traj, nearest, spacing)?;
    let n = traj.len();
    let first = nearest.saturating_sub(1);
    let origin = traj.cumulative[nearest];
    let mut points = Vec::new();
    let mut j = first;
    while j + 1 < n {
        let start = stencil_start(n, j);
        let stencil = CubicStencil::new(traj, start, param)?;
        let (t0, t1) = (stencil.knots[j - start], stencil.knots[j + 1 - start]);
        let pieces = ((t1 - t0) / spacing - 1e-9).ceil().max(1.0) as usize;
        for k in 0..pieces {
            points.push(stencil.eval(t0 + (t1 - t0) * k as f64 / pieces as f64));
        }
        j += 1;
        if traj.cumulative[j] - origin >= lookahead {
            break;
        }
    }
    let end = &traj.waypoints[j];
    points.push(Waypoint { v: end.v.max(0.0), ..*end });
    Trajectory::new(points)
}

/// How the horizon reference advances along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviewMode {
    /// Row i sits where the reference speed profile carries the vehicle after i steps.
    #[default]
    Advancing,
    /// Every row repeats the first advanced reference.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewSettings {
    pub mode: PreviewMode,
    /// Lower bound on the speed used to advance the preview, m/s. Zero gives
    /// the pure integrated-reference-speed rule.
    pub min_advance_speed: f64,
}

impl Default for PreviewSettings {
    fn default() -> Self {
        Self {
            mode: PreviewMode::Advancing,
            min_advance_speed: 0.0,
        }
    }
}

/// One output reference: lateral position, speed and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewRow {
    pub arc_length: f64,
    pub y_ref: f64,
    pub v_ref: f64,
    pub theta_ref: f64,
    /// Set once the preview has run past the trajectory end.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePreview {
    /// Arc length of the point nearest the vehicle.
    pub start_arc_length: f64,
    pub rows: Vec<PreviewRow>,
}

impl ReferencePreview {
    /// Stacks the rows into the horizon reference vector `[y, v, theta]*N_p`.
    /// Headings are unwrapped so consecutive entries (and the first one with
    /// respect to `theta_now`) differ by at most pi.
    pub fn stacked(&self, theta_now: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len() * OUTPUTS_PER_ROW);
        let mut prev = theta_now;
        for row in &self.rows {
            let theta = prev + angle::diff(row.theta_ref, prev);
            out.extend_from_slice(&[row.y_ref, row.v_ref, theta]);
            prev = theta;
        }
        out
    }
}

/// Builds the `n_p`-row output reference from a (resampled) trajectory.
pub fn build_reference_preview(
    resampled: &Trajectory,
    state: &VehicleState,
    n_p: usize,
    sample_time: f64,
    settings: PreviewSettings,
) -> Result<ReferencePreview> {
    if n_p == 0 {
        return config_err("prediction horizon must be at least 1");
    }
    if !(sample_time.is_finite() && sample_time > 0.0) {
        return config_err(format!("sample time must be positive, got {sample_time}"));
    }
    let nearest = find_nearest_waypoint(resampled, (state.x, state.y))?;
    let s0 = resampled.cumulative[nearest];
    let final_row = |s: f64| {
        let w = resampled.last();
        PreviewRow {
            arc_length: s.max(resampled.total_length()),
            y_ref: w.y,
            v_ref: 0.0,
            theta_ref: w.theta,
            clamped: true,
        }
    };
    let row_at = |s: f64| match resampled.sample_at(s) {
        Some(w) => PreviewRow {
            arc_length: s,
            y_ref: w.y,
            v_ref: w.v.max(0.0),
            theta_ref: w.theta,
            clamped: false,
        },
        None => final_row(s),
    };

    let start = resampled.waypoints[nearest];
    let mut current = if nearest + 1 == resampled.len() {
        final_row(s0)
    } else {
        PreviewRow {
            arc_length: s0,
            y_ref: start.y,
            v_ref: start.v.max(0.0),
            theta_ref: start.theta,
            clamped: false,
        }
    };
    let steps = match settings.mode {
        PreviewMode::Advancing => n_p,
        PreviewMode::Hold => 1,
    };
    let mut rows = Vec::with_capacity(n_p);
    for _ in 0..steps {
        current = if current.clamped {
            current
        } else {
            let speed = current.v_ref.max(settings.min_advance_speed);
            row_at(current.arc_length + speed * sample_time)
        };
        rows.push(current);
    }
    while rows.len() < n_p {
        rows.push(rows[0]);
    }
    Ok(ReferencePreview {
        start_arc_length: s0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64, v: f64) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| Waypoint::new(i as f64 * spacing, 0.0, 0.0, v))
                .collect(),
        )
        .unwrap()
    }

    fn at(x: f64, y: f64) -> VehicleState {
        VehicleState::new(x, y, 0.0, 0.0)
    }

    #[test]
    fn rejects_degenerate_trajectories() {
        assert!(Trajectory::new(vec![]).is_err());
        assert!(Trajectory::new(vec![Waypoint::new(0.0, 0.0, 0.0, 1.0)]).is_err());
        let same = Waypoint::new(1.0, 1.0, 0.0, 1.0);
        assert!(Trajectory::new(vec![same, same]).is_err());
        let neg = Waypoint::new(1.0, 0.0, 0.0, -0.1);
        assert!(Trajectory::new(vec![Waypoint::new(0.0, 0.0, 0.0, 0.0), neg]).is_err());
        let nan = Waypoint::new(1.0, 0.0, f64::NAN, 0.0);
        assert!(Trajectory::new(vec![Waypoint::new(0.0, 0.0, 0.0, 0.0), nan]).is_err());
    }

    #[test]
    fn input_spacing_window() {
        assert!(line(5, 0.5, 1.0).check_input_spacing().is_ok());
        assert!(line(5, 0.1, 1.0).check_input_spacing().is_err());
        assert!(line(5, 2.5, 1.0).check_input_spacing().is_err());
    }

    #[test]
    fn nearest_waypoint_examples() {
        let traj = line(2, 1.0, 0.0);
        assert_eq!(find_nearest_waypoint(&traj, (0.9, 0.2)).unwrap(), 1);
        assert_eq!(find_nearest_waypoint(&traj, (0.5, 0.0)).unwrap(), 0);
        assert!(find_nearest_waypoint(&traj, (f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn resampled_line_stays_on_line() {
        let traj = line(4, 1.0, 1.0);
        let dense = resample_cubic(&traj, 1, 0.1, Parameterization::ChordLength).unwrap();
        assert!(dense.waypoints().iter().all(|w| w.y.abs() < 1e-9));
        assert!(dense.len() >= 30);
        assert!((dense.first().x - 0.0).abs() < 1e-12);
        assert!((dense.last().x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_knots_reproduce_a_cubic() {
        let traj = Trajectory::new(
            [-1.0f64, 0.0, 1.0, 2.0]
                .iter()
                .map(|&x| Waypoint::new(x, x.powi(3), 0.0, 1.0))
                .collect(),
        )
        .unwrap();
        let dense = resample_cubic(&traj, 1, 0.1, Parameterization::Uniform).unwrap();
        for w in dense.waypoints() {
            assert!((w.y - w.x.powi(3)).abs() < 1e-9, "{w:?}");
        }
    }

    #[test]
    fn chord_knots_pass_through_stencil() {
        let pts = [(0.0, 0.0), (0.7, 0.2), (1.5, 0.1), (2.1, -0.4)];
        let traj = Trajectory::new(
            pts.iter()
                .map(|&(x, y)| Waypoint::new(x, y, 0.3, 1.0))
                .collect(),
        )
        .unwrap();
        let stencil = CubicStencil::new(&traj, 0, Parameterization::ChordLength).unwrap();
        for (k, &(x, y)) in stencil.knots().iter().zip(pts.iter()) {
            let w = stencil.eval(*k);
            assert!((w.x - x).abs() < 1e-9 && (w.y - y).abs() < 1e-9);
        }
    }

    #[test]
    fn heading_fit_crosses_the_seam() {
        use std::f64::consts::PI;
        let thetas = [PI - 0.1, PI - 0.05, -PI + 0.0, -PI + 0.05];
        let traj = Trajectory::new(
            thetas
                .iter()
                .enumerate()
                .map(|(i, &t)| Waypoint::new(i as f64, 0.0, t, 1.0))
                .collect(),
        )
        .unwrap();
        let dense = resample_cubic(&traj, 1, 0.1, Parameterization::ChordLength).unwrap();
        for w in dense.waypoints() {
            // all samples stay near the seam rather than swinging through 0
            assert!(w.theta.abs() > PI - 0.2, "{}", w.theta);
        }
    }

    #[test]
    fn stencil_shifts_inward_at_ends() {
        assert_eq!(stencil_start(10, 0), 0);
        assert_eq!(stencil_start(10, 1), 0);
        assert_eq!(stencil_start(10, 5), 4);
        assert_eq!(stencil_start(10, 8), 6);
        assert_eq!(stencil_start(10, 9), 6);
        assert!(resample_cubic(&line(3, 1.0, 1.0), 1, 0.1, Parameterization::ChordLength).is_err());
    }

    #[test]
    fn window_reaches_true_end() {
        let traj = line(8, 0.5, 1.0);
        let dense = resample_window(&traj, 6, 0.1, 10.0, Parameterization::ChordLength).unwrap();
        assert!((dense.first().x - 2.5).abs() < 1e-12);
        assert!((dense.last().x - 3.5).abs() < 1e-12);
        let short = resample_window(&traj, 0, 0.1, 1.0, Parameterization::ChordLength).unwrap();
        assert!((short.last().x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn preview_advances_by_reference_speed() {
        let dense = line(50, 0.1, 1.0);
        let p = build_reference_preview(&dense, &at(1.0, 0.0), 3, 0.1, PreviewSettings::default())
            .unwrap();
        let s: Vec<f64> = p.rows.iter().map(|r| r.arc_length - p.start_arc_length).collect();
        for (got, want) in s.iter().zip([0.1, 0.2, 0.3]) {
            assert!((got - want).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn zero_speed_preview_holds_nearest_point() {
        let dense = Trajectory::new(
            (0..20)
                .map(|i| Waypoint::new(i as f64 * 0.1, 0.05 * i as f64, 0.02 * i as f64, 0.0))
                .collect(),
        )
        .unwrap();
        let p = build_reference_preview(&dense, &at(0.71, 0.36), 5, 0.1, PreviewSettings::default())
            .unwrap();
        let w = dense.waypoints()[7];
        for r in &p.rows {
            assert_eq!((r.y_ref, r.v_ref, r.theta_ref), (w.y, w.v, w.theta));
        }
    }

    #[test]
    fn preview_clamps_past_the_end() {
        let dense = line(9, 0.125, 1.0);
        let p = build_reference_preview(&dense, &at(0.75, 0.0), 6, 0.125, PreviewSettings::default())
            .unwrap();
        let first_clamped = p.rows.iter().position(|r| r.clamped).unwrap();
        assert_eq!(first_clamped, 1);
        for r in &p.rows[first_clamped..] {
            assert!(r.clamped);
            assert_eq!(r.v_ref, 0.0);
            assert!((r.arc_length - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hold_mode_repeats_first_row() {
        let dense = line(50, 0.1, 1.0);
        let settings = PreviewSettings {
            mode: PreviewMode::Hold,
            ..PreviewSettings::default()
        };
        let p = build_reference_preview(&dense, &at(1.0, 0.0), 4, 0.1, settings).unwrap();
        assert!(p.rows.iter().all(|r| *r == p.rows[0]));
        assert!((p.rows[0].arc_length - 1.1).abs() < 1e-12);
    }

    #[test]
    fn min_advance_speed_moves_off_a_standstill_reference() {
        let dense = line(50, 0.1, 0.0);
        let settings = PreviewSettings {
            min_advance_speed: 0.5,
            ..PreviewSettings::default()
        };
        let p = build_reference_preview(&dense, &at(0.0, 0.0), 4, 0.1, settings).unwrap();
        assert!((p.rows[3].arc_length - 0.2).abs() < 1e-12);
    }

    #[test]
    fn stacked_reference_unwraps_heading() {
        use std::f64::consts::PI;
        let p = ReferencePreview {
            start_arc_length: 0.0,
            rows: vec![PreviewRow {
                arc_length: 0.0,
                y_ref: 1.0,
                v_ref: 2.0,
                theta_ref: -PI + 0.01,
                clamped: false,
            }],
        };
        let r = p.stacked(PI - 0.01);
        assert_eq!(r.len(), 3);
        assert!((r[2] - (PI + 0.01)).abs() < 1e-12);
    }
}
