//! Kinematic bicycle model referenced to the rear-axle center.
//!
//! State is `[x, y, v, theta]`, input is `[a, tan(delta)]`. The yaw rate is
//! `v * tan(delta) / L`, so the path curvature is `tan(delta) / L`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Rear-axle global X, meters.
    pub x: f64,
    /// Rear-axle global Y, meters.
    pub y: f64,
    /// Longitudinal velocity, m/s.
    pub v: f64,
    /// Heading, radians in (-pi, pi].
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            v,
            theta: angle::wrap(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.x, self.y, self.v, self.theta])
    }

    /// Measured outputs `[y, v, theta]`.
    pub fn outputs(&self) -> [f64; OUTPUT_DIM] {
        [self.y, self.v, self.theta]
    }
}

/// Longitudinal acceleration and the tangent of the front road-wheel angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub tan_delta: f64,
}

impl ControlInput {
    pub fn new(accel: f64, tan_delta: f64) -> Self {
        Self { accel, tan_delta }
    }

    pub fn as_array(&self) -> [f64; INPUT_DIM] {
        [self.accel, self.tan_delta]
    }

    pub fn road_wheel_angle(&self) -> f64 {
        self.tan_delta.atan()
    }

    /// Path curvature, 1/m.
    pub fn curvature(&self, wheelbase: f64) -> f64 {
        self.tan_delta / wheelbase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Front-to-rear axle distance, meters.
    pub wheelbase: f64,
    /// Controller sample time, seconds.
    pub sample_time: f64,
    /// Road-wheel angle saturation, radians.
    pub delta_max: f64,
    pub a_max: f64,
    pub a_min: f64,
    /// Road-wheel angle change per controller step, radians.
    pub d_delta_max: f64,
    /// Acceleration change per controller step, m/s^2.
    pub d_a_max: f64,
    /// Speed floor used when linearizing near standstill, m/s.
    pub v_floor: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            sample_time: 0.05,
            delta_max: 0.6,
            a_max: 2.0,
            a_min: -2.0,
            d_delta_max: 0.05,
            d_a_max: 0.5,
            v_floor: 0.05,
        }
    }
}

impl VehicleParams {
    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let fields = [
            ("wheelbase", self.wheelbase),
            ("sample_time", self.sample_time),
            ("delta_max", self.delta_max),
            ("a_max", self.a_max),
            ("a_min", self.a_min),
            ("d_delta_max", self.d_delta_max),
            ("d_a_max", self.d_a_max),
            ("v_floor", self.v_floor),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                out.push(format!("vehicle.{name} must be finite, got {value}"));
            }
        }
        if !(self.wheelbase > 0.0) {
            out.push(format!("vehicle.wheelbase must be > 0, got {}", self.wheelbase));
        }
        if !(self.sample_time > 0.0) {
            out.push(format!("vehicle.sample_time must be > 0, got {}", self.sample_time));
        }
        if !(self.delta_max > 0.0 && self.delta_max < std::f64::consts::FRAC_PI_2) {
            out.push(format!(
                "vehicle.delta_max must be in (0, pi/2), got {}",
                self.delta_max
            ));
        }
        if !(self.a_min < 0.0) {
            out.push(format!("vehicle.a_min must be < 0, got {}", self.a_min));
        }
        if !(self.a_max > 0.0) {
            out.push(format!("vehicle.a_max must be > 0, got {}", self.a_max));
        }
        if !(self.d_delta_max > 0.0) {
            out.push(format!("vehicle.d_delta_max must be > 0, got {}", self.d_delta_max));
        }
        if !(self.d_a_max > 0.0) {
            out.push(format!("vehicle.d_a_max must be > 0, got {}", self.d_a_max));
        }
        if !(self.v_floor > 0.0) {
            out.push(format!("vehicle.v_floor must be > 0, got {}", self.v_floor));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Steering amplitude bound in the tan domain.
    pub fn tan_delta_max(&self) -> f64 {
        self.delta_max.tan()
    }

    /// Per-step bound on the change of `tan(delta)`. Because `atan` has slope
    /// at most one, a tan-domain step of `d_delta_max` never moves the
    /// road-wheel angle by more than `d_delta_max`.
    pub fn d_tan_delta_max(&self) -> f64 {
        self.d_delta_max
    }
}

/// Discrete linear model `x+ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Output selector picking `y`, `v` and `theta` from the state.
pub fn output_matrix() -> DMatrix<f64> {
    let mut c = DMatrix::zeros(OUTPUT_DIM, STATE_DIM);
    c[(0, 1)] = 1.0;
    c[(1, 2)] = 1.0;
    c[(2, 3)] = 1.0;
    c
}

/// One forward-Euler step of the nonlinear kinematics, all right-hand sides
/// evaluated at the pre-step state.
pub fn nonlinear_step(
    state: &VehicleState,
    input: &ControlInput,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state"));
    }
    if !(input.accel.is_finite() && input.tan_delta.is_finite()) {
        return Err(Error::NonFinite("plant input"));
    }
    let (sin, cos) = state.theta.sin_cos();
    Ok(VehicleState {
        x: state.x + dt * state.v * cos,
        y: state.y + dt * state.v * sin,
        v: state.v + dt * input.accel,
        theta: angle::wrap(state.theta + dt * state.v * input.curvature(params.wheelbase)),
    })
}

/// Speed at which the input matrix is evaluated: magnitude floored at
/// `v_floor`, sign kept (zero counts as forward).
pub fn linearization_speed(v: f64, v_floor: f64) -> f64 {
    if v >= 0.0 {
        v.max(v_floor)
    } else {
        v.min(-v_floor)
    }
}

/// Discrete model frozen at the current heading and speed. The position rows
/// only couple to the speed; heading enters as a scheduling parameter.
pub fn linearize(state: &VehicleState, params: &VehicleParams) -> LinearModel {
    let ts = params.sample_time;
    let v = linearization_speed(state.v, params.v_floor);
    let (sin, cos) = state.theta.sin_cos();

    let mut a = DMatrix::identity(STATE_DIM, STATE_DIM);
    a[(0, 2)] = ts * cos;
    a[(1, 2)] = ts * sin;

    let mut b = DMatrix::zeros(STATE_DIM, INPUT_DIM);
    b[(2, 0)] = ts;
    b[(3, 1)] = ts * v / params.wheelbase;

    LinearModel {
        a,
        b,
        c: output_matrix(),
        d: DMatrix::zeros(OUTPUT_DIM, INPUT_DIM),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params() -> VehicleParams {
        VehicleParams {
            sample_time: 0.1,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn standstill_is_a_fixed_point() {
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let out = nonlinear_step(&s, &ControlInput::new(0.0, 0.3), 0.1, &params()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn straight_motion() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0);
        let out = nonlinear_step(&s, &ControlInput::default(), 0.1, &params()).unwrap();
        assert_eq!(out, VehicleState::new(0.1, 0.0, 1.0, 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = VehicleState::new(0.0, 0.0, 1.0, 0.0);
        let p = params();
        assert!(nonlinear_step(&s, &ControlInput::default(), 0.0, &p).is_err());
        assert!(nonlinear_step(&s, &ControlInput::new(f64::NAN, 0.0), 0.1, &p).is_err());
        let bad = VehicleState { x: f64::INFINITY, ..s };
        assert!(nonlinear_step(&bad, &ControlInput::default(), 0.1, &p).is_err());
    }

    #[test]
    fn heading_stays_wrapped() {
        let s = VehicleState::new(0.0, 0.0, 5.0, PI - 0.01);
        let out = nonlinear_step(&s, &ControlInput::new(0.0, 1.0), 0.1, &params()).unwrap();
        assert!(out.theta > -PI && out.theta <= PI);
        assert!(out.theta < 0.0);
    }

    #[test]
    fn linearize_examples() {
        let p = VehicleParams {
            sample_time: 0.1,
            wheelbase: 2.7,
            ..VehicleParams::default()
        };
        let m = linearize(&VehicleState::new(0.0, 0.0, 1.0, 0.0), &p);
        assert_eq!(m.a[(0, 2)], 0.1);
        assert_eq!(m.a[(1, 2)], 0.0);
        assert_eq!(m.b[(3, 1)], 0.1 / 2.7);
        assert_eq!(m.b[(2, 0)], 0.1);

        let m = linearize(&VehicleState::new(0.0, 0.0, 1.0, FRAC_PI_2), &p);
        assert!(m.a[(0, 2)].abs() < 1e-16);
        assert_eq!(m.a[(1, 2)], 0.1);
    }

    #[test]
    fn linearize_floors_speed() {
        let p = params();
        let m = linearize(&VehicleState::new(0.0, 0.0, 0.0, 0.0), &p);
        assert!((m.b[(3, 1)] - p.sample_time * p.v_floor / p.wheelbase).abs() < 1e-15);
        let m = linearize(&VehicleState::new(0.0, 0.0, -0.01, 0.0), &p);
        assert!((m.b[(3, 1)] + p.sample_time * p.v_floor / p.wheelbase).abs() < 1e-15);
    }

    #[test]
    fn output_matrix_selects_y_v_theta() {
        let s = VehicleState::new(7.0, 1.0, 2.0, 0.5);
        let y = output_matrix() * s.to_vector();
        assert_eq!(y.as_slice(), &s.outputs());
        let m = linearize(&s, &params());
        assert_eq!(m.a.shape(), (4, 4));
        assert_eq!(m.b.shape(), (4, 2));
        assert_eq!(m.c.shape(), (3, 4));
        assert!(m.d.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn violations_name_each_bound() {
        let p = VehicleParams {
            delta_max: 1.6,
            a_min: 0.5,
            ..VehicleParams::default()
        };
        let v = p.violations();
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v[0].contains("delta_max"));
        assert!(v[1].contains("a_min"));
        assert!(VehicleParams::default().validate().is_ok());
    }
}
