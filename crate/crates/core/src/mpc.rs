//! Incremental (augmented-state) model predictive controller.
//!
//! Each tick the kinematic model is re-linearized at the measured heading and
//! speed and lifted to the augmented state `[dx; y]`, whose input is the
//! input increment. Stacking the horizon gives `Y = F x + S dU`; the cost
//! `|R_s - Y|^2 + r_w |dU|^2` under rate and amplitude bounds is solved with
//! Hildreth's method and only the first increment is applied.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{config_err, Error, Result};
use crate::qp::{self, QpProblem, QpSolution};
use crate::trajectory::{
    self, Parameterization, PreviewMode, PreviewSettings, ReferencePreview, Trajectory,
};
use crate::vehicle_model::{
    self, ControlInput, LinearModel, VehicleParams, VehicleState, INPUT_DIM, OUTPUT_DIM,
    STATE_DIM,
};

/// Longitudinal output of the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Command the optimized acceleration.
    #[default]
    Acceleration,
    /// Forward the previewed reference speed to a subordinate speed loop.
    VelocityPassthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon, steps.
    pub n_p: usize,
    /// Control horizon, steps.
    pub n_c: usize,
    /// Input-increment weight.
    pub r_w: f64,
    pub preview_mode: PreviewMode,
    pub output_mode: OutputMode,
    /// Resampling step for the local reference, meters.
    pub resample_spacing: f64,
    /// Floor on the speed that advances the preview, m/s.
    pub preview_min_speed: f64,
    pub parameterization: Parameterization,
    pub max_qp_sweeps: usize,
    pub qp_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_p: 20,
            n_c: 5,
            r_w: 0.5,
            preview_mode: PreviewMode::Advancing,
            output_mode: OutputMode::Acceleration,
            resample_spacing: trajectory::DEFAULT_RESAMPLE_SPACING,
            preview_min_speed: 0.5,
            parameterization: Parameterization::ChordLength,
            max_qp_sweeps: qp::DEFAULT_MAX_SWEEPS,
            qp_tol: qp::DEFAULT_TOL,
        }
    }
}

impl MpcConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_p < 1 {
            out.push(format!("mpc.n_p must be >= 1, got {}", self.n_p));
        }
        if self.n_c < 1 {
            out.push(format!("mpc.n_c must be >= 1, got {}", self.n_c));
        }
        if self.n_c > self.n_p {
            out.push(format!(
                "mpc.n_c must be <= mpc.n_p, got n_c = {} > n_p = {}",
                self.n_c, self.n_p
            ));
        }
        // the constrained QP needs a positive definite hessian
        if !(self.r_w.is_finite() && self.r_w > 0.0) {
            out.push(format!("mpc.r_w must be > 0, got {}", self.r_w));
        }
        if !(self.resample_spacing.is_finite() && self.resample_spacing > 0.0) {
            out.push(format!(
                "mpc.resample_spacing must be > 0, got {}",
                self.resample_spacing
            ));
        }
        if !(self.preview_min_speed.is_finite() && self.preview_min_speed >= 0.0) {
            out.push(format!(
                "mpc.preview_min_speed must be >= 0, got {}",
                self.preview_min_speed
            ));
        }
        if self.max_qp_sweeps < 1 {
            out.push("mpc.max_qp_sweeps must be >= 1".to_string());
        }
        if !(self.qp_tol.is_finite() && self.qp_tol > 0.0) {
            out.push(format!("mpc.qp_tol must be > 0, got {}", self.qp_tol));
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
}

/// Incremental model with state `[dx; y]` and input `du`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl AugmentedModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// `[[A, 0], [C A, I]]`, `[[B], [C B]]` and `[0, I]`.
pub fn build_augmented(model: &LinearModel) -> Result<AugmentedModel> {
    let (m, k, nu) = (STATE_DIM, OUTPUT_DIM, INPUT_DIM);
    if model.a.shape() != (m, m) || model.b.shape() != (m, nu) || model.c.shape() != (k, m) {
        return config_err(format!(
            "linear model has shapes A {:?}, B {:?}, C {:?}; expected ({m}, {m}), ({m}, {nu}), ({k}, {m})",
            model.a.shape(),
            model.b.shape(),
            model.c.shape()
        ));
    }
    let n = m + k;
    let ca = &model.c * &model.a;
    let cb = &model.c * &model.b;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (m, m)).copy_from(&model.a);
    a.view_mut((m, 0), (k, m)).copy_from(&ca);
    a.view_mut((m, m), (k, k)).fill_with_identity();

    let mut b = DMatrix::zeros(n, nu);
    b.view_mut((0, 0), (m, nu)).copy_from(&model.b);
    b.view_mut((m, 0), (k, nu)).copy_from(&cb);

    let mut c = DMatrix::zeros(k, n);
    c.view_mut((0, m), (k, k)).fill_with_identity();

    Ok(AugmentedModel { a, b, c })
}

/// Horizon matrices of `Y = F x + S dU`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub f: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n_p: usize,
    pub n_c: usize,
    pub n_outputs: usize,
    pub n_inputs: usize,
}

impl PredictionMatrices {
    pub fn predict(&self, x: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        &self.f * x + &self.s * du
    }
}

pub fn build_prediction(aug: &AugmentedModel, n_p: usize, n_c: usize) -> Result<PredictionMatrices> {
    if n_p < 1 || n_c < 1 || n_c > n_p {
        return config_err(format!("horizons must satisfy 1 <= n_c <= n_p, got n_c = {n_c}, n_p = {n_p}"));
    }
    let (n, k, nu) = (aug.state_dim(), aug.output_dim(), aug.input_dim());

    // markov[i] = C A^i B for i in 0..n_p, f row-block i = C A^(i+1)
    let mut f = DMatrix::zeros(n_p * k, n);
    let mut markov = Vec::with_capacity(n_p);
    let mut c_pow = aug.c.clone();
    for i in 0..n_p {
        markov.push(&c_pow * &aug.b);
        c_pow = &c_pow * &aug.a;
        f.view_mut((i * k, 0), (k, n)).copy_from(&c_pow);
    }

    let mut s = DMatrix::zeros(n_p * k, n_c * nu);
    for i in 0..n_p {
        for j in 0..n_c.min(i + 1) {
            s.view_mut((i * k, j * nu), (k, nu)).copy_from(&markov[i - j]);
        }
    }
    Ok(PredictionMatrices {
        f,
        s,
        n_p,
        n_c,
        n_outputs: k,
        n_inputs: nu,
    })
}

fn check_vectors(pred: &PredictionMatrices, r_s: &DVector<f64>, x_aug: &DVector<f64>) -> Result<()> {
    if r_s.len() != pred.f.nrows() {
        return config_err(format!(
            "reference has length {}, expected {}",
            r_s.len(),
            pred.f.nrows()
        ));
    }
    if x_aug.len() != pred.f.ncols() {
        return config_err(format!(
            "augmented state has length {}, expected {}",
            x_aug.len(),
            pred.f.ncols()
        ));
    }
    Ok(())
}

/// Closed-form optimum `(S'S + r_w I)^-1 S' (R_s - F x)`.
pub fn solve_unconstrained(
    pred: &PredictionMatrices,
    r_s: &DVector<f64>,
    x_aug: &DVector<f64>,
    r_w: f64,
) -> Result<DVector<f64>> {
    check_vectors(pred, r_s, x_aug)?;
    if !(r_w.is_finite() && r_w >= 0.0) {
        return config_err(format!("r_w must be >= 0, got {r_w}"));
    }
    let n = pred.s.ncols();
    let normal = pred.s.transpose() * &pred.s + DMatrix::identity(n, n) * r_w;
    let rhs = pred.s.transpose() * (r_s - &pred.f * x_aug);
    let du = match normal.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => normal
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("normal matrix S'S + R is singular".into()))?,
    };
    if du.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("normal matrix S'S + R is singular".into()));
    }
    Ok(du)
}

/// Box bounds on the inputs in the `[accel, tan_delta]` domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBounds {
    pub lower: [f64; INPUT_DIM],
    pub upper: [f64; INPUT_DIM],
    pub rate: [f64; INPUT_DIM],
}

impl InputBounds {
    pub fn from_params(params: &VehicleParams) -> Self {
        let t = params.tan_delta_max();
        Self {
            lower: [params.a_min, -t],
            upper: [params.a_max, t],
            rate: [params.d_a_max, params.d_tan_delta_max()],
        }
    }

    /// Clamps `u` into the amplitude box and within one rate step of
    /// `prev`. Returns the clamped input and whether anything changed.
    pub fn clamp(&self, prev: &ControlInput, u: &ControlInput) -> (ControlInput, bool) {
        let p = prev.as_array();
        let mut out = u.as_array();
        let mut changed = false;
        for i in 0..INPUT_DIM {
            let lo = self.lower[i].max(p[i] - self.rate[i]);
            let hi = self.upper[i].min(p[i] + self.rate[i]);
            // an infeasible prev can make lo > hi; amplitude wins
            let v = out[i].max(lo).min(hi).clamp(self.lower[i], self.upper[i]);
            if v != out[i] {
                changed = true;
            }
            out[i] = v;
        }
        (ControlInput::new(out[0], out[1]), changed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledQp {
    pub problem: QpProblem,
    /// The previous input lies so far outside the amplitude box that the
    /// rate limits cannot bring it back within the control horizon.
    pub infeasible: bool,
}

/// Builds `E = 2(S'S + r_w I)`, `f = -2 S'(R_s - F x)` and the inequality
/// rows. For every step `j` and input `l` there are four rows, in order:
/// `du <= rate`, `-du <= rate`, `u_j <= upper`, `-u_j <= -lower`, with
/// `u_j = u_prev + sum_{i<=j} du_i`.
pub fn assemble_qp(
    pred: &PredictionMatrices,
    r_s: &DVector<f64>,
    x_aug: &DVector<f64>,
    r_w: f64,
    u_prev: &ControlInput,
    params: &VehicleParams,
    n_c: usize,
) -> Result<AssembledQp> {
    check_vectors(pred, r_s, x_aug)?;
    if !(r_w.is_finite() && r_w > 0.0) {
        return config_err(format!("constrained problem needs r_w > 0, got {r_w}"));
    }
    let nu = pred.n_inputs;
    if n_c != pred.n_c || nu != INPUT_DIM {
        return config_err(format!(
            "prediction built for n_c = {} with {} inputs, asked for n_c = {n_c}",
            pred.n_c, pred.n_inputs
        ));
    }
    let n = n_c * nu;
    let st = pred.s.transpose();
    let hessian = (&st * &pred.s + DMatrix::identity(n, n) * r_w) * 2.0;
    let linear = &st * (r_s - &pred.f * x_aug) * -2.0;

    let bounds = InputBounds::from_params(params);
    let prev = u_prev.as_array();
    let rows = 4 * n;
    let mut m = DMatrix::zeros(rows, n);
    let mut gamma = DVector::zeros(rows);
    let mut infeasible = false;
    for j in 0..n_c {
        for l in 0..nu {
            let r = 4 * (j * nu + l);
            let col = j * nu + l;
            m[(r, col)] = 1.0;
            gamma[r] = bounds.rate[l];
            m[(r + 1, col)] = -1.0;
            gamma[r + 1] = bounds.rate[l];
            for i in 0..=j {
                m[(r + 2, i * nu + l)] = 1.0;
                m[(r + 3, i * nu + l)] = -1.0;
            }
            gamma[r + 2] = bounds.upper[l] - prev[l];
            gamma[r + 3] = prev[l] - bounds.lower[l];
        }
    }
    for l in 0..nu {
        let reach = n_c as f64 * bounds.rate[l];
        if prev[l] > bounds.upper[l] + reach || prev[l] < bounds.lower[l] - reach {
            infeasible = true;
        }
    }
    Ok(AssembledQp {
        problem: QpProblem {
            hessian,
            linear,
            constraints: m,
            bounds: gamma,
        },
        infeasible,
    })
}

/// Persistent controller memory between ticks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerState {
    /// Last commanded input in the `[accel, tan_delta]` domain.
    pub u_prev: ControlInput,
    /// Measured state at the previous tick.
    pub prev_state: Option<VehicleState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Predicted outputs `[y, v, theta]` over the horizon.
    pub predicted_outputs: Vec<f64>,
    /// Stacked reference the prediction was optimized against.
    pub reference: Vec<f64>,
    /// Increment actually applied this tick.
    pub applied_increment: [f64; INPUT_DIM],
    /// Full optimizer output.
    pub delta_u: Vec<f64>,
    pub qp_iterations: usize,
    pub qp_converged: bool,
    pub constraint_active: bool,
    /// The first increment had to be clamped into the input boxes.
    pub clamped: bool,
    pub bounds_infeasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand {
    /// Front road-wheel angle, radians.
    pub delta_cmd: f64,
    /// Acceleration from the optimizer, m/s^2.
    pub a_cmd: f64,
    /// Reference speed forwarded in passthrough mode, m/s.
    pub v_cmd: Option<f64>,
    pub input: ControlInput,
    pub diagnostics: Diagnostics,
}

impl ControlCommand {
    /// Command applied before the first controller output is available.
    pub fn idle() -> Self {
        Self {
            delta_cmd: 0.0,
            a_cmd: 0.0,
            v_cmd: None,
            input: ControlInput::default(),
            diagnostics: Diagnostics {
                predicted_outputs: Vec::new(),
                reference: Vec::new(),
                applied_increment: [0.0; INPUT_DIM],
                delta_u: Vec::new(),
                qp_iterations: 0,
                qp_converged: true,
                constraint_active: false,
                clamped: false,
                bounds_infeasible: false,
            },
        }
    }
}

/// Builds the augmented state `[x_k - x_{k-1}; C x_k]`; the increment block
/// is zero without a previous measurement.
pub fn augmented_state(state: &VehicleState, prev: Option<&VehicleState>) -> DVector<f64> {
    let mut x = DVector::zeros(STATE_DIM + OUTPUT_DIM);
    if let Some(p) = prev {
        x[0] = state.x - p.x;
        x[1] = state.y - p.y;
        x[2] = state.v - p.v;
        x[3] = angle::diff(state.theta, p.theta);
    }
    x.rows_mut(STATE_DIM, OUTPUT_DIM)
        .copy_from_slice(&state.outputs());
    x
}

/// Everything a tick computes before solving: the reference preview and the
/// lifted problem data.
#[derive(Debug, Clone)]
pub struct TickProblem {
    pub preview: ReferencePreview,
    pub reference: DVector<f64>,
    pub x_aug: DVector<f64>,
    pub prediction: PredictionMatrices,
}

/// Reference preview and prediction matrices for the current measurement.
pub fn prepare_tick(
    ctrl: &ControllerState,
    state: &VehicleState,
    traj: &Trajectory,
    cfg: &MpcConfig,
    params: &VehicleParams,
) -> Result<TickProblem> {
    if !state.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    let ts = params.sample_time;
    let nearest = trajectory::find_nearest_waypoint(traj, (state.x, state.y))?;
    let step = traj.max_speed().max(cfg.preview_min_speed) * ts;
    let lookahead = cfg.n_p as f64 * step + cfg.resample_spacing;
    let dense = trajectory::resample_window(
        traj,
        nearest,
        cfg.resample_spacing,
        lookahead,
        cfg.parameterization,
    )?;
    let settings = PreviewSettings {
        mode: cfg.preview_mode,
        min_advance_speed: cfg.preview_min_speed,
    };
    let preview = trajectory::build_reference_preview(&dense, state, cfg.n_p, ts, settings)?;
    let reference = DVector::from_vec(preview.stacked(state.theta));

    let linear = vehicle_model::linearize(state, params);
    let aug = build_augmented(&linear)?;
    let prediction = build_prediction(&aug, cfg.n_p, cfg.n_c)?;
    let x_aug = augmented_state(state, ctrl.prev_state.as_ref());
    Ok(TickProblem {
        preview,
        reference,
        x_aug,
        prediction,
    })
}

/// One receding-horizon tick: preview, linearize, solve, apply the first
/// increment and update the controller memory.
pub fn control_step(
    ctrl: &mut ControllerState,
    state: &VehicleState,
    traj: &Trajectory,
    cfg: &MpcConfig,
    params: &VehicleParams,
) -> Result<ControlCommand> {
    let tick = prepare_tick(ctrl, state, traj, cfg, params)?;
    let assembled = assemble_qp(
        &tick.prediction,
        &tick.reference,
        &tick.x_aug,
        cfg.r_w,
        &ctrl.u_prev,
        params,
        cfg.n_c,
    )?;
    let solution: QpSolution = qp::solve_hildreth(&assembled.problem, cfg.max_qp_sweeps, cfg.qp_tol)?;

    let du = &solution.x;
    let proposed = ControlInput::new(ctrl.u_prev.accel + du[0], ctrl.u_prev.tan_delta + du[1]);
    let bounds = InputBounds::from_params(params);
    let (input, clamped) = bounds.clamp(&ctrl.u_prev, &proposed);
    let applied = [
        input.accel - ctrl.u_prev.accel,
        input.tan_delta - ctrl.u_prev.tan_delta,
    ];
    let predicted = tick.prediction.predict(&tick.x_aug, du);

    ctrl.u_prev = input;
    ctrl.prev_state = Some(*state);

    let v_cmd = match cfg.output_mode {
        OutputMode::Acceleration => None,
        OutputMode::VelocityPassthrough => Some(tick.preview.rows[0].v_ref),
    };
    Ok(ControlCommand {
        delta_cmd: input.road_wheel_angle(),
        a_cmd: input.accel,
        v_cmd,
        input,
        diagnostics: Diagnostics {
            predicted_outputs: predicted.as_slice().to_vec(),
            reference: tick.reference.as_slice().to_vec(),
            applied_increment: applied,
            delta_u: du.as_slice().to_vec(),
            qp_iterations: solution.iterations,
            qp_converged: solution.converged,
            constraint_active: solution.any_active() || clamped,
            clamped,
            bounds_infeasible: assembled.infeasible,
        },
    })
}
