//! Hierarchical controller: load virtual control → tension allocation →
//! desired vehicle positions → per-vehicle position control → thrust and
//! attitude extraction → quaternion attitude control.
//!
//! Sign convention: the load virtual control is the resultant of the desired
//! cable forces, `u_L = Σ T_id α_id`, and `u_L = −m_L(g e3 + ẍ_Ld) − ν_L`.
//! At hover this gives `Σ T_id α_id = −m_L g e3`, which is what the load
//! equation of motion needs for equilibrium.

use serde::{Deserialize, Serialize};

use crate::dynamics::{PlantInputs, SystemParams, SystemState};
use crate::quat::{basic_rotation, quat_error, Axis, Quaternion};
use crate::scenario::gain_matrix;
use crate::{e3, Error, Mat3, Result, Vec3};

/// Thrust-direction singularity margin: `û3 > −1 + SINGULARITY_MARGIN`.
pub const SINGULARITY_MARGIN: f64 = 1e-6;

/// Proportional, derivative and integral gain matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    #[serde(with = "gain_matrix")]
    pub kp: Mat3,
    #[serde(with = "gain_matrix")]
    pub kd: Mat3,
    #[serde(with = "gain_matrix")]
    pub ki: Mat3,
}

impl PidGains {
    pub fn diagonal(kp: [f64; 3], kd: [f64; 3], ki: [f64; 3]) -> Self {
        Self {
            kp: Mat3::from_diagonal(&Vec3::from(kp)),
            kd: Mat3::from_diagonal(&Vec3::from(kd)),
            ki: Mat3::from_diagonal(&Vec3::from(ki)),
        }
    }

    pub fn zero() -> Self {
        Self {
            kp: Mat3::zeros(),
            kd: Mat3::zeros(),
            ki: Mat3::zeros(),
        }
    }

    /// `ν = −kp e − kd ė − ki ∫e`.
    pub fn feedback(&self, error: &Vec3, error_rate: &Vec3, integral: &Vec3) -> Vec3 {
        -(self.kp * error) - self.kd * error_rate - self.ki * integral
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGains {
    pub position: PidGains,
    /// Manifold gain `ρ_i`.
    #[serde(with = "gain_matrix")]
    pub rho: Mat3,
    /// Attitude gain `K_di`.
    #[serde(with = "gain_matrix")]
    pub attitude: Mat3,
    #[serde(with = "gain_matrix")]
    pub beta: Mat3,
    #[serde(with = "gain_matrix")]
    pub gamma: Mat3,
}

impl VehicleGains {
    pub fn reference() -> Self {
        Self {
            position: PidGains::diagonal([40.0, 40.0, 60.0], [10.0, 10.0, 12.0], [2.0, 2.0, 4.0]),
            rho: Mat3::identity() * 62.5,
            attitude: Mat3::identity() * 16.0,
            beta: Mat3::zeros(),
            gamma: Mat3::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub load: PidGains,
    pub vehicles: Vec<VehicleGains>,
}

impl ControllerGains {
    pub fn reference(n: usize) -> Self {
        Self {
            load: PidGains::diagonal([9.0; 3], [3.5; 3], [0.2; 3]),
            vehicles: vec![VehicleGains::reference(); n],
        }
    }

    /// PID gains must be non-negative on the diagonal; the manifold and
    /// attitude gains strictly positive; `β`, `γ` non-negative.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.vehicles.len() != n {
            return Err(Error::config(
                "gains.vehicles",
                format!("expected {n} entries, got {}", self.vehicles.len()),
            ));
        }
        check_pid(&self.load, "gains.load")?;
        for (i, v) in self.vehicles.iter().enumerate() {
            let path = format!("gains.vehicles[{i}]");
            check_pid(&v.position, &format!("{path}.position"))?;
            check_diag(&v.rho, &format!("{path}.rho"), true)?;
            check_diag(&v.attitude, &format!("{path}.attitude"), true)?;
            check_diag(&v.beta, &format!("{path}.beta"), false)?;
            check_diag(&v.gamma, &format!("{path}.gamma"), false)?;
        }
        Ok(())
    }
}

fn check_pid(g: &PidGains, path: &str) -> Result<()> {
    check_diag(&g.kp, &format!("{path}.kp"), false)?;
    check_diag(&g.kd, &format!("{path}.kd"), false)?;
    check_diag(&g.ki, &format!("{path}.ki"), false)
}

fn check_diag(m: &Mat3, path: &str, strict: bool) -> Result<()> {
    for k in 0..3 {
        let d = m[(k, k)];
        let ok = if strict { d > 0.0 } else { d >= 0.0 };
        if !ok || !d.is_finite() {
            let need = if strict { "positive" } else { "non-negative" };
            return Err(Error::config(
                path,
                format!("diagonal entry {k} must be {need}, got {d}"),
            ));
        }
    }
    Ok(())
}

/// Desired load position and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl ReferenceSample {
    pub fn hold(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }
}

/// How the resultant desired cable force is split among the vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "strategy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AllocationStrategy {
    /// Agents 1 and 2 take constant gravity shares along their initial cable
    /// directions; agent 3 takes the residual. Three agents only.
    #[default]
    PaperFixedShare,
    /// Agents `1..n−1` take the given constant force vectors (N); agent `n`
    /// takes the residual.
    FixedShare { shares: Vec<[f64; 3]> },
    /// Equal split `u_L / n`.
    Uniform,
    /// Minimum weighted-norm split: minimises `Σ w_i ‖F_i‖²` subject to
    /// `Σ F_i = u_L`. Unit weights reduce to the uniform split.
    MinNorm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

/// Rotations placing the three cable tops of the reference experiment.
pub fn reference_formation_rotations() -> [crate::quat::RotationMatrix; 3] {
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};
    [
        basic_rotation(Axis::Z, -FRAC_PI_4) * basic_rotation(Axis::Y, -FRAC_PI_6),
        basic_rotation(Axis::Z, FRAC_PI_4) * basic_rotation(Axis::Y, -FRAC_PI_6),
        basic_rotation(Axis::Y, FRAC_PI_6),
    ]
}

/// Splits `u_L` into per-vehicle desired cable forces `T_id α_id` with
/// `Σ T_id α_id = u_L`.
pub fn allocate_tensions(
    u_l: &Vec3,
    strategy: &AllocationStrategy,
    n: usize,
    load_mass: f64,
    gravity: f64,
) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::Allocation("no vehicles".into()));
    }
    match strategy {
        AllocationStrategy::PaperFixedShare => {
            if n != 3 {
                return Err(Error::Allocation(format!(
                    "paper-fixed-share requires exactly 3 vehicles, got {n}"
                )));
            }
            let rot = reference_formation_rotations();
            let share = |r: &crate::quat::RotationMatrix| -(r * &(e3() * gravity)) * (load_mass / 3.0);
            Ok(with_residual(u_l, vec![share(&rot[0]), share(&rot[1])]))
        }
        AllocationStrategy::FixedShare { shares } => {
            if shares.len() + 1 != n {
                return Err(Error::Allocation(format!(
                    "fixed-share needs {} share vectors for {n} vehicles, got {}",
                    n - 1,
                    shares.len()
                )));
            }
            Ok(with_residual(u_l, shares.iter().map(|s| Vec3::from(*s)).collect()))
        }
        AllocationStrategy::Uniform => Ok(vec![u_l / n as f64; n]),
        AllocationStrategy::MinNorm { weights } => {
            let w = match weights {
                Some(w) => {
                    if w.len() != n || w.iter().any(|x| !(*x > 0.0)) {
                        return Err(Error::Allocation(format!(
                            "min-norm needs {n} positive weights"
                        )));
                    }
                    w.clone()
                }
                None => vec![1.0; n],
            };
            // Lagrangian stationarity: 2 w_i F_i = λ, Σ F_i = u_L
            let inv_sum: f64 = w.iter().map(|x| 1.0 / x).sum();
            let mut out: Vec<Vec3> = w.iter().map(|x| u_l * (1.0 / x / inv_sum)).collect();
            // absorb rounding so the sum constraint holds to machine precision
            let partial: Vec3 = out[..n - 1].iter().sum();
            out[n - 1] = u_l - partial;
            Ok(out)
        }
    }
}

fn with_residual(u_l: &Vec3, mut shares: Vec<Vec3>) -> Vec<Vec3> {
    let mut last = *u_l;
    for s in &shares {
        last -= s;
    }
    shares.push(last);
    shares
}

/// Virtual load control `u_L = −m_L(g e3 + ẍ_Ld) − ν_L`.
pub fn load_control(
    load_position: &Vec3,
    load_velocity: &Vec3,
    integral: &Vec3,
    reference: &ReferenceSample,
    gains: &PidGains,
    load_mass: f64,
    gravity: f64,
) -> Vec3 {
    let e = load_position - reference.position;
    let e_dot = load_velocity - reference.velocity;
    let nu = gains.feedback(&e, &e_dot, integral);
    -(e3() * gravity + reference.acceleration) * load_mass - nu
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredPose {
    pub position: Vec3,
    pub direction: Vec3,
    pub tension: f64,
    /// The desired force was below the floor and the previous direction was
    /// kept.
    pub held: bool,
}

/// `T_id = ‖F_i‖`, `α_id = F_i / T_id`, `x_id = x_Ld − L_i α_id`.
///
/// A force below `tension_floor` has no usable direction, so
/// `previous_direction` is kept.
pub fn desired_vehicle_position(
    reference: &ReferenceSample,
    tension_vector: &Vec3,
    cable_length: f64,
    previous_direction: &Vec3,
    tension_floor: f64,
) -> DesiredPose {
    let tension = tension_vector.norm();
    let (direction, held) = if tension > tension_floor {
        (tension_vector / tension, false)
    } else {
        (*previous_direction, true)
    };
    DesiredPose {
        position: reference.position - direction * cable_length,
        direction,
        tension,
        held,
    }
}

/// Inputs to the per-vehicle position law.
#[derive(Debug, Clone, Copy)]
pub struct PositionLoopInput<'a> {
    pub position: &'a Vec3,
    pub velocity: &'a Vec3,
    pub integral: &'a Vec3,
    pub reference: &'a ReferenceSample,
    pub direction: &'a Vec3,
    pub direction_rate: &'a Vec3,
    pub tension_vector: &'a Vec3,
    pub mass: f64,
    pub cable_length: f64,
    pub gravity: f64,
}

/// `u_id = m_i(g e3 + ẍ_Ld) − T_id α_id + ν_i` with
/// `ν_i = −kp x_ei − kd ẋ_ei − ki ∫x_ei`,
/// `x_ei = x_i − x_Ld + L_i α_id`.
pub fn vehicle_position_control(input: &PositionLoopInput<'_>, gains: &PidGains) -> Vec3 {
    let (e, e_dot) = vehicle_errors(input);
    let nu = gains.feedback(&e, &e_dot, input.integral);
    (e3() * input.gravity + input.reference.acceleration) * input.mass - input.tension_vector + nu
}

fn vehicle_errors(input: &PositionLoopInput<'_>) -> (Vec3, Vec3) {
    let e = input.position - input.reference.position + input.direction * input.cable_length;
    let e_dot = input.velocity - input.reference.velocity + input.direction_rate * input.cable_length;
    (e, e_dot)
}

/// Thrust magnitude and zero-yaw attitude that realise the thrust vector
/// `u = f R(q) e3`.
pub fn attitude_extraction(u: &Vec3) -> Result<(f64, Quaternion)> {
    let f = u.norm();
    if !(f > 1e-6) {
        return Err(Error::ZeroThrust);
    }
    let uh = u / f;
    if !(uh.z > -1.0 + SINGULARITY_MARGIN) {
        return Err(Error::ThrustSingularity { u3: uh.z });
    }
    let w = (2.0 * uh.z + 2.0).sqrt();
    Ok((f, Quaternion::from_parts(0.5 * w, Vec3::new(-uh.y / w, uh.x / w, 0.0))))
}

/// Body rate of the zero-yaw desired attitude given the thrust direction
/// `û` and its derivative.
///
/// The yaw component is `−(û1 u̇2 − û2 u̇1)/(û3 + 1)`, the sign that agrees
/// with `q̇_d = ½ q_d ⊗ [0, Ω_d]`.
pub fn desired_rate(u_hat: &Vec3, u_hat_dot: &Vec3) -> Result<Vec3> {
    if !(u_hat.z > -1.0 + SINGULARITY_MARGIN) {
        return Err(Error::ThrustSingularity { u3: u_hat.z });
    }
    let den = u_hat.z + 1.0;
    Ok(Vec3::new(
        -u_hat_dot.y + u_hat_dot.z * u_hat.y / den,
        u_hat_dot.x - u_hat_dot.z * u_hat.x / den,
        -(u_hat.x * u_hat_dot.y - u_hat.y * u_hat_dot.x) / den,
    ))
}

/// `τ = −K_d s − β sat(γ s)` with `s = Ω_e + ρ q_e`; `sat` clamps each
/// component to `[−1, 1]`.
pub fn attitude_control(error: &Quaternion, rate_error: &Vec3, gains: &VehicleGains) -> Vec3 {
    let s = rate_error + gains.rho * error.vector();
    let sat = (gains.gamma * s).map(|x| x.clamp(-1.0, 1.0));
    -(gains.attitude * s) - gains.beta * sat
}

/// Backward-difference derivative through a first-order low-pass filter.
/// The first sample yields a zero derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredDerivative {
    previous: Option<Vec3>,
    value: Vec3,
    cutoff: f64,
}

impl FilteredDerivative {
    pub fn new(cutoff: f64) -> Self {
        Self {
            previous: None,
            value: Vec3::zeros(),
            cutoff,
        }
    }

    pub fn update(&mut self, x: &Vec3, dt: f64) -> Vec3 {
        if let Some(prev) = self.previous {
            let raw = (x - prev) / dt;
            let a = dt * self.cutoff / (1.0 + dt * self.cutoff);
            self.value += (raw - self.value) * a;
        }
        self.previous = Some(*x);
        self.value
    }

    pub fn value(&self) -> Vec3 {
        self.value
    }
}

/// Trapezoidal integral with symmetric clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorIntegral {
    value: Vec3,
    previous: Option<Vec3>,
    limit: f64,
}

impl ErrorIntegral {
    pub fn new(limit: f64) -> Self {
        Self {
            value: Vec3::zeros(),
            previous: None,
            limit,
        }
    }

    pub fn update(&mut self, e: &Vec3, dt: f64) -> Vec3 {
        if let Some(prev) = self.previous {
            self.value += (prev + e) * (0.5 * dt);
            let l = self.limit;
            self.value = self.value.map(|x| x.clamp(-l, l));
        }
        self.previous = Some(*e);
        self.value
    }

    pub fn value(&self) -> Vec3 {
        self.value
    }
}

/// Tunables of the controller that are not gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub allocation: AllocationStrategy,
    /// Anti-windup bound on every integrator component (m·s).
    #[serde(default = "ControllerConfig::default_integral_limit")]
    pub integral_limit: f64,
    /// Cutoff of the derivative low-pass filters (rad/s).
    #[serde(default = "ControllerConfig::default_derivative_cutoff")]
    pub derivative_cutoff: f64,
    /// Desired tension below which the cable direction is held (N).
    #[serde(default = "ControllerConfig::default_tension_floor")]
    pub tension_floor: f64,
}

impl ControllerConfig {
    fn default_integral_limit() -> f64 {
        10.0
    }
    fn default_derivative_cutoff() -> f64 {
        50.0
    }
    fn default_tension_floor() -> f64 {
        1e-6
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            allocation: AllocationStrategy::default(),
            integral_limit: Self::default_integral_limit(),
            derivative_cutoff: Self::default_derivative_cutoff(),
            tension_floor: Self::default_tension_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VehicleMemory {
    integral: ErrorIntegral,
    direction: Vec3,
    direction_rate: FilteredDerivative,
    thrust_direction_rate: FilteredDerivative,
}

/// Integrators and derivative histories owned by one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    load_integral: ErrorIntegral,
    vehicles: Vec<VehicleMemory>,
}

impl ControllerState {
    pub fn new(n: usize, config: &ControllerConfig) -> Self {
        Self {
            load_integral: ErrorIntegral::new(config.integral_limit),
            vehicles: (0..n)
                .map(|_| VehicleMemory {
                    integral: ErrorIntegral::new(config.integral_limit),
                    direction: -e3(),
                    direction_rate: FilteredDerivative::new(config.derivative_cutoff),
                    thrust_direction_rate: FilteredDerivative::new(config.derivative_cutoff),
                })
                .collect(),
        }
    }

    pub fn load_integral(&self) -> Vec3 {
        self.load_integral.value()
    }

    pub fn vehicle_integral(&self, i: usize) -> Vec3 {
        self.vehicles[i].integral.value()
    }
}

/// Everything the controller decided for one vehicle at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCommand {
    pub thrust: f64,
    pub attitude: Quaternion,
    pub rate: Vec3,
    /// `T_id α_id` (N).
    pub tension_vector: Vec3,
    pub tension: f64,
    pub direction: Vec3,
    pub direction_rate: Vec3,
    pub position: Vec3,
    /// `ẋ_Ld − L_i α̇_id`.
    pub velocity: Vec3,
    /// `u_id = f_id R_id e3`.
    pub thrust_vector: Vec3,
    pub torque: Vec3,
    pub position_error: Vec3,
    pub velocity_error: Vec3,
    pub integral: Vec3,
    pub direction_held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub inputs: PlantInputs,
    pub commands: Vec<AgentCommand>,
    pub load_command: Vec3,
    pub load_error: Vec3,
    pub load_integral: Vec3,
}

/// One tick of the full control stack.
pub fn controller_step(
    state: &SystemState,
    memory: &mut ControllerState,
    reference: &ReferenceSample,
    gains: &ControllerGains,
    params: &SystemParams,
    config: &ControllerConfig,
    dt: f64,
) -> Result<ControllerOutput> {
    let n = params.n();
    if state.n() != n || gains.vehicles.len() != n || memory.vehicles.len() != n {
        return Err(Error::Dimension(format!(
            "controller expects {n} vehicles (state {}, gains {}, memory {})",
            state.n(),
            gains.vehicles.len(),
            memory.vehicles.len()
        )));
    }
    let g = params.gravity;

    let load_error = state.load_position - reference.position;
    let load_integral = memory.load_integral.update(&load_error, dt);
    let u_l = load_control(
        &state.load_position,
        &state.load_velocity,
        &load_integral,
        reference,
        &gains.load,
        params.load_mass,
        g,
    );
    let allocation = allocate_tensions(&u_l, &config.allocation, n, params.load_mass, g)?;

    let mut inputs = PlantInputs::zero(n);
    let mut commands = Vec::with_capacity(n);
    for i in 0..n {
        let vp = &params.vehicles[i];
        let vg = &gains.vehicles[i];
        let vs = &state.vehicles[i];
        let mem = &mut memory.vehicles[i];

        let pose = desired_vehicle_position(
            reference,
            &allocation[i],
            vp.cable_length(),
            &mem.direction,
            config.tension_floor,
        );
        mem.direction = pose.direction;
        let direction_rate = mem.direction_rate.update(&pose.direction, dt);

        let position_error =
            vs.position - reference.position + pose.direction * vp.cable_length();
        let integral = mem.integral.update(&position_error, dt);
        let loop_input = PositionLoopInput {
            position: &vs.position,
            velocity: &vs.velocity,
            integral: &integral,
            reference,
            direction: &pose.direction,
            direction_rate: &direction_rate,
            tension_vector: &allocation[i],
            mass: vp.mass(),
            cable_length: vp.cable_length(),
            gravity: g,
        };
        let u = vehicle_position_control(&loop_input, &vg.position);
        let (_, velocity_error) = vehicle_errors(&loop_input);

        let (thrust, attitude) = attitude_extraction(&u)?;
        let u_hat = u / thrust;
        let u_hat_dot = mem.thrust_direction_rate.update(&u_hat, dt);
        let rate = desired_rate(&u_hat, &u_hat_dot)?;

        let q_err = quat_error(&attitude, &vs.attitude);
        let torque = attitude_control(&q_err, &(vs.rate - rate), vg);

        inputs.thrust[i] = match params.thrust_ceiling {
            Some(c) => thrust.clamp(0.0, c),
            None => thrust.max(0.0),
        };
        inputs.torque[i] = torque;
        commands.push(AgentCommand {
            thrust,
            attitude,
            rate,
            tension_vector: allocation[i],
            tension: pose.tension,
            direction: pose.direction,
            direction_rate,
            position: pose.position,
            velocity: reference.velocity - direction_rate * vp.cable_length(),
            thrust_vector: u,
            torque,
            position_error,
            velocity_error,
            integral,
            direction_held: pose.held,
        });
    }

    Ok(ControllerOutput {
        inputs,
        commands,
        load_command: u_l,
        load_error,
        load_integral,
    })
}
