//! Constrained Newton-Euler model of `n` quadrotors carrying a point-mass
//! load on rigid, mass-less cables.
//!
//! Vehicle `i`:  `m_i ẍ_i = f_i R_i e3 − m_i g e3 + T_i α_i`,
//!               `q̇_i = ½ q_i ⊗ [0, Ω_i]`, `J_i Ω̇_i + Ω_i × J_i Ω_i = τ_i`.
//! Load:         `m_L ẍ_L = −m_L g e3 − Σ T_i α_i`.
//!
//! The cable tensions are the constraint forces that keep
//! `½(‖x_i − x_L‖² − L_i²) = 0`. They are found at every derivative
//! evaluation from the twice-differentiated constraint with Baumgarte
//! stabilisation, which yields an SPD `n × n` linear system.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::quat::{hamilton_raw, quat_to_rot, Quaternion};
use crate::{e3, Error, Mat3, Result, Vec3, GRAVITY};

/// Constraint residual above which an integration step is reported as diverged.
pub const DIVERGENCE_RESIDUAL: f64 = 1e-4;
/// Condition number of the tension system above which it is rejected.
pub const MAX_TENSION_CONDITION: f64 = 1e12;

const LOAD_DOF: usize = 6;
const VEHICLE_DOF: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
    cable_length: f64,
}

impl VehicleParams {
    pub fn new(mass: f64, inertia: Mat3, cable_length: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::config("mass", format!("must be positive, got {mass}")));
        }
        if !(cable_length > 0.0 && cable_length.is_finite()) {
            return Err(Error::config(
                "cable_length",
                format!("must be positive, got {cable_length}"),
            ));
        }
        if (inertia - inertia.transpose()).amax() > 1e-12 * inertia.amax().max(1.0) {
            return Err(Error::config("inertia", "must be symmetric"));
        }
        let min_eig = inertia.symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(Error::config("inertia", "must be positive definite"));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::config("inertia", "not invertible"))?;
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
            cable_length,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn cable_length(&self) -> f64 {
        self.cable_length
    }
}

/// Constraint stabilisation gains: `c̈ + 2ζω ċ + ω² c = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baumgarte {
    #[serde(default = "Baumgarte::default_omega")]
    pub omega: f64,
    #[serde(default = "Baumgarte::default_zeta")]
    pub zeta: f64,
}

impl Baumgarte {
    fn default_omega() -> f64 {
        20.0
    }

    fn default_zeta() -> f64 {
        1.0
    }

    fn position_gain(&self) -> f64 {
        self.omega * self.omega
    }

    fn velocity_gain(&self) -> f64 {
        2.0 * self.zeta * self.omega
    }
}

impl Default for Baumgarte {
    fn default() -> Self {
        Self {
            omega: Self::default_omega(),
            zeta: Self::default_zeta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub vehicles: Vec<VehicleParams>,
    pub load_mass: f64,
    pub gravity: f64,
    pub baumgarte: Baumgarte,
    /// Upper thrust limit per vehicle (N). `None` means unbounded.
    pub thrust_ceiling: Option<f64>,
}

impl SystemParams {
    pub fn new(vehicles: Vec<VehicleParams>, load_mass: f64) -> Result<Self> {
        if vehicles.is_empty() {
            return Err(Error::config("agents", "at least one vehicle is required"));
        }
        if !(load_mass > 0.0 && load_mass.is_finite()) {
            return Err(Error::config(
                "load.mass",
                format!("must be positive, got {load_mass}"),
            ));
        }
        Ok(Self {
            vehicles,
            load_mass,
            gravity: GRAVITY,
            baumgarte: Baumgarte::default(),
            thrust_ceiling: None,
        })
    }

    pub fn n(&self) -> usize {
        self.vehicles.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.load_mass + self.vehicles.iter().map(|v| v.mass).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quaternion,
    /// Body-frame angular rate (rad/s).
    pub rate: Vec3,
}

impl VehicleState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            attitude: Quaternion::identity(),
            rate: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: f64,
    pub load_position: Vec3,
    pub load_velocity: Vec3,
    pub vehicles: Vec<VehicleState>,
}

impl SystemState {
    pub fn n(&self) -> usize {
        self.vehicles.len()
    }

    /// `| ‖x_i − x_L‖ − L_i |` per vehicle.
    pub fn constraint_residuals(&self, params: &SystemParams) -> Vec<f64> {
        self.vehicles
            .iter()
            .zip(&params.vehicles)
            .map(|(v, p)| ((v.position - self.load_position).norm() - p.cable_length).abs())
            .collect()
    }

    pub fn max_constraint_residual(&self, params: &SystemParams) -> f64 {
        self.constraint_residuals(params)
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn center_of_mass(&self, params: &SystemParams) -> Vec3 {
        let mut acc = self.load_position * params.load_mass;
        for (v, p) in self.vehicles.iter().zip(&params.vehicles) {
            acc += v.position * p.mass;
        }
        acc / params.total_mass()
    }

    pub fn linear_momentum(&self, params: &SystemParams) -> Vec3 {
        let mut acc = self.load_velocity * params.load_mass;
        for (v, p) in self.vehicles.iter().zip(&params.vehicles) {
            acc += v.velocity * p.mass;
        }
        acc
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(LOAD_DOF + VEHICLE_DOF * self.n());
        y.extend_from_slice(self.load_position.as_slice());
        y.extend_from_slice(self.load_velocity.as_slice());
        for v in &self.vehicles {
            y.extend_from_slice(v.position.as_slice());
            y.extend_from_slice(v.velocity.as_slice());
            y.extend_from_slice(&v.attitude.to_array());
            y.extend_from_slice(v.rate.as_slice());
        }
        y
    }

    fn from_flat(time: f64, y: &[f64]) -> Self {
        let n = (y.len() - LOAD_DOF) / VEHICLE_DOF;
        let vehicles = (0..n)
            .map(|i| {
                let b = LOAD_DOF + VEHICLE_DOF * i;
                VehicleState {
                    position: vec3_at(y, b),
                    velocity: vec3_at(y, b + 3),
                    attitude: Quaternion::new(y[b + 6], y[b + 7], y[b + 8], y[b + 9]),
                    rate: vec3_at(y, b + 10),
                }
            })
            .collect();
        Self {
            time,
            load_position: vec3_at(y, 0),
            load_velocity: vec3_at(y, 3),
            vehicles,
        }
    }
}

fn vec3_at(y: &[f64], at: usize) -> Vec3 {
    Vec3::new(y[at], y[at + 1], y[at + 2])
}

/// Per-vehicle thrust (N, clamped at 0) and body torque (N·m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantInputs {
    pub thrust: Vec<f64>,
    pub torque: Vec<Vec3>,
}

impl PlantInputs {
    pub fn zero(n: usize) -> Self {
        Self {
            thrust: vec![0.0; n],
            torque: vec![Vec3::zeros(); n],
        }
    }

    fn effective_thrust(&self, i: usize, params: &SystemParams) -> f64 {
        let f = self.thrust[i].max(0.0);
        match params.thrust_ceiling {
            Some(c) => f.min(c),
            None => f,
        }
    }
}

/// Result of the cable tension solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TensionSolution {
    pub tensions: Vec<f64>,
    /// Unit cable directions from each vehicle toward the load.
    pub directions: Vec<Vec3>,
    /// `T_i ≤ 0`: the cable would go slack; the rigid model is outside its
    /// validity region but the computed value is still used.
    pub slack: Vec<bool>,
    pub min_eigenvalue: f64,
    pub condition: f64,
}

impl TensionSolution {
    /// `T_i α_i` for every cable.
    pub fn tension_vectors(&self) -> Vec<Vec3> {
        self.tensions
            .iter()
            .zip(&self.directions)
            .map(|(t, a)| a * *t)
            .collect()
    }

    pub fn any_slack(&self) -> bool {
        self.slack.iter().any(|&s| s)
    }
}

/// Unit cable directions `α_i = (x_L − x_i) / ‖x_L − x_i‖`.
///
/// On the constraint manifold this equals `(x_L − x_i) / L_i`.
pub fn cable_directions(state: &SystemState) -> Result<Vec<Vec3>> {
    state
        .vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| direction(&state.load_position, &v.position, i))
        .collect()
}

fn direction(load: &Vec3, vehicle: &Vec3, index: usize) -> Result<Vec3> {
    let d = load - vehicle;
    let r = d.norm();
    if !(r > 1e-12) {
        return Err(Error::DegenerateGeometry { vehicle: index });
    }
    Ok(d / r)
}

/// Solves for the cable tensions given world-frame thrust vectors
/// `f_i R_i e3`.
pub fn solve_tensions(
    state: &SystemState,
    thrust_vectors: &[Vec3],
    params: &SystemParams,
) -> Result<TensionSolution> {
    let xs: Vec<Vec3> = state.vehicles.iter().map(|v| v.position).collect();
    let vs: Vec<Vec3> = state.vehicles.iter().map(|v| v.velocity).collect();
    tensions_raw(
        &state.load_position,
        &state.load_velocity,
        &xs,
        &vs,
        thrust_vectors,
        params,
    )
}

fn tensions_raw(
    xl: &Vec3,
    vl: &Vec3,
    xs: &[Vec3],
    vs: &[Vec3],
    thrust_vectors: &[Vec3],
    params: &SystemParams,
) -> Result<TensionSolution> {
    let n = params.n();
    let ml = params.load_mass;
    let kp = params.baumgarte.position_gain();
    let kv = params.baumgarte.velocity_gain();

    let mut directions = Vec::with_capacity(n);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let d = xs[i] - xl;
        let r = d.norm();
        if !(r > 1e-12) {
            return Err(Error::DegenerateGeometry { vehicle: i });
        }
        let alpha = -d / r;
        let p = &params.vehicles[i];
        let dv = vs[i] - vl;
        let c = 0.5 * (d.norm_squared() - p.cable_length * p.cable_length);
        let c_dot = d.dot(&dv);
        b[i] = (dv.norm_squared() + kv * c_dot + kp * c) / r
            - alpha.dot(&thrust_vectors[i]) / p.mass;
        directions.push(alpha);
    }

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut v = directions[i].dot(&directions[j]) / ml;
            if i == j {
                v += 1.0 / params.vehicles[i].mass;
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }

    let eig = m.clone().symmetric_eigenvalues();
    let min_eigenvalue = eig.min();
    let max_eigenvalue = eig.max();
    if !(min_eigenvalue > 0.0) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let condition = max_eigenvalue / min_eigenvalue;
    if condition > MAX_TENSION_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Singular("tension matrix is not positive definite".into()))?;
    let t = chol.solve(&b);
    let tensions: Vec<f64> = t.iter().copied().collect();
    let slack = tensions.iter().map(|&t| t <= 0.0).collect();
    Ok(TensionSolution {
        tensions,
        directions,
        slack,
        min_eigenvalue,
        condition,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleDerivative {
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// `q̇` as `[q̇0, q̇1, q̇2, q̇3]`.
    pub attitude_rate: [f64; 4],
    pub angular_acceleration: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDerivative {
    pub load_velocity: Vec3,
    pub load_acceleration: Vec3,
    pub vehicles: Vec<VehicleDerivative>,
    pub tensions: TensionSolution,
}

/// Full time derivative of the state under inputs held constant.
pub fn system_derivative(
    state: &SystemState,
    inputs: &PlantInputs,
    params: &SystemParams,
) -> Result<SystemDerivative> {
    check_inputs(state, inputs, params)?;
    let y = state.to_flat();
    let mut dy = vec![0.0; y.len()];
    let tensions = flat_derivative(&y, inputs, params, &mut dy)?;
    let vehicles = (0..state.n())
        .map(|i| {
            let b = LOAD_DOF + VEHICLE_DOF * i;
            VehicleDerivative {
                velocity: vec3_at(&dy, b),
                acceleration: vec3_at(&dy, b + 3),
                attitude_rate: [dy[b + 6], dy[b + 7], dy[b + 8], dy[b + 9]],
                angular_acceleration: vec3_at(&dy, b + 10),
            }
        })
        .collect();
    Ok(SystemDerivative {
        load_velocity: vec3_at(&dy, 0),
        load_acceleration: vec3_at(&dy, 3),
        vehicles,
        tensions,
    })
}

fn check_inputs(state: &SystemState, inputs: &PlantInputs, params: &SystemParams) -> Result<()> {
    let n = params.n();
    if state.n() != n || inputs.thrust.len() != n || inputs.torque.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} vehicles, state has {}, inputs have {}/{}",
            state.n(),
            inputs.thrust.len(),
            inputs.torque.len()
        )));
    }
    Ok(())
}

/// World-frame thrust vectors `f_i R(q_i) e3` for the given state.
pub fn thrust_vectors(state: &SystemState, inputs: &PlantInputs, params: &SystemParams) -> Vec<Vec3> {
    state
        .vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| quat_to_rot(&v.attitude) * e3() * inputs.effective_thrust(i, params))
        .collect()
}

fn flat_derivative(
    y: &[f64],
    inputs: &PlantInputs,
    params: &SystemParams,
    dy: &mut [f64],
) -> Result<TensionSolution> {
    let n = params.n();
    let g = params.gravity;
    let xl = vec3_at(y, 0);
    let vl = vec3_at(y, 3);

    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut thrusts = Vec::with_capacity(n);
    for i in 0..n {
        let b = LOAD_DOF + VEHICLE_DOF * i;
        xs.push(vec3_at(y, b));
        vs.push(vec3_at(y, b + 3));
        // stage quaternions are off the unit sphere by O(h^5); R uses the
        // normalised attitude
        let q = Quaternion::new(y[b + 6], y[b + 7], y[b + 8], y[b + 9]);
        thrusts.push(quat_to_rot(&q) * e3() * inputs.effective_thrust(i, params));
    }

    let sol = tensions_raw(&xl, &vl, &xs, &vs, &thrusts, params)?;

    let mut load_force = Vec3::zeros();
    for i in 0..n {
        load_force -= sol.directions[i] * sol.tensions[i];
    }
    dy[0..3].copy_from_slice(vl.as_slice());
    let al = load_force / params.load_mass - e3() * g;
    dy[3..6].copy_from_slice(al.as_slice());

    for i in 0..n {
        let b = LOAD_DOF + VEHICLE_DOF * i;
        let p = &params.vehicles[i];
        let acc = (thrusts[i] + sol.directions[i] * sol.tensions[i]) / p.mass - e3() * g;
        dy[b..b + 3].copy_from_slice(vs[i].as_slice());
        dy[b + 3..b + 6].copy_from_slice(acc.as_slice());

        let q0 = y[b + 6];
        let qv = vec3_at(y, b + 7);
        let w = vec3_at(y, b + 10);
        let (d0, dv) = hamilton_raw(q0, &qv, 0.0, &w);
        dy[b + 6] = 0.5 * d0;
        dy[b + 7] = 0.5 * dv.x;
        dy[b + 8] = 0.5 * dv.y;
        dy[b + 9] = 0.5 * dv.z;

        let w_dot = p.inertia_inv * (inputs.torque[i] - w.cross(&(p.inertia * w)));
        dy[b + 10..b + 13].copy_from_slice(w_dot.as_slice());
    }
    Ok(sol)
}

/// One classical fourth-order Runge-Kutta step with inputs held constant.
/// Quaternions are renormalised after the step.
pub fn rk4_step(
    state: &SystemState,
    inputs: &PlantInputs,
    dt: f64,
    params: &SystemParams,
) -> Result<SystemState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config("dt", format!("must be positive, got {dt}")));
    }
    check_inputs(state, inputs, params)?;
    let y0 = state.to_flat();
    let len = y0.len();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];

    flat_derivative(&y0, inputs, params, &mut k1)?;
    axpy(&y0, 0.5 * dt, &k1, &mut tmp);
    flat_derivative(&tmp, inputs, params, &mut k2)?;
    axpy(&y0, 0.5 * dt, &k2, &mut tmp);
    flat_derivative(&tmp, inputs, params, &mut k3)?;
    axpy(&y0, dt, &k3, &mut tmp);
    flat_derivative(&tmp, inputs, params, &mut k4)?;

    let y1: Vec<f64> = (0..len)
        .map(|k| y0[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
        .collect();
    let time = state.time + dt;
    if let Some(bad) = y1.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("state component {bad}"),
            step: 0,
            time,
        });
    }
    let next = SystemState::from_flat(time, &y1);
    let residual = next.max_constraint_residual(params);
    if residual > DIVERGENCE_RESIDUAL {
        return Err(Error::ConstraintDivergence { residual, time });
    }
    Ok(next)
}

fn axpy(y: &[f64], h: f64, k: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(k) {
        *o = a + h * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::{basic_rotation, Axis};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6, PI};

    fn reference_vehicle() -> VehicleParams {
        VehicleParams::new(
            0.5,
            Mat3::from_diagonal(&Vec3::new(0.0232, 0.0232, 0.04)),
            1.0,
        )
        .unwrap()
    }

    fn params(n: usize) -> SystemParams {
        SystemParams::new(vec![reference_vehicle(); n], 0.225).unwrap()
    }

    fn single(vehicle_offset: Vec3) -> SystemState {
        SystemState {
            time: 0.0,
            load_position: Vec3::new(0.3, -0.2, 1.0),
            load_velocity: Vec3::zeros(),
            vehicles: vec![VehicleState::at_rest(Vec3::new(0.3, -0.2, 1.0) + vehicle_offset)],
        }
    }

    /// Three cables at 120° azimuth spacing, each π/6 from vertical.
    fn symmetric_hover() -> (SystemState, SystemParams, Vec<Vec3>) {
        let p = params(3);
        let theta = FRAC_PI_6;
        let t_eq = 0.225 * GRAVITY / (3.0 * theta.cos());
        let mut vehicles = Vec::new();
        let mut thrusts = Vec::new();
        for k in 0..3 {
            let phi = 2.0 * PI * k as f64 / 3.0;
            let up = basic_rotation(Axis::Z, phi) * (basic_rotation(Axis::Y, theta) * Vec3::z());
            vehicles.push(VehicleState::at_rest(up));
            thrusts.push(Vec3::z() * 0.5 * GRAVITY + up * t_eq);
        }
        let s = SystemState {
            time: 0.0,
            load_position: Vec3::zeros(),
            load_velocity: Vec3::zeros(),
            vehicles,
        };
        (s, p, thrusts)
    }

    #[test]
    fn cable_direction_examples() {
        let s = single(Vec3::z());
        assert_abs_diff_eq!(cable_directions(&s).unwrap()[0], -Vec3::z(), epsilon = 1e-15);
        let s = single(Vec3::x());
        assert_abs_diff_eq!(cable_directions(&s).unwrap()[0], -Vec3::x(), epsilon = 1e-15);

        let r = basic_rotation(Axis::Z, -FRAC_PI_4) * basic_rotation(Axis::Y, -FRAC_PI_6);
        let s = SystemState {
            time: 0.0,
            load_position: Vec3::zeros(),
            load_velocity: Vec3::zeros(),
            vehicles: vec![VehicleState::at_rest(r * Vec3::z())],
        };
        assert_abs_diff_eq!(
            cable_directions(&s).unwrap()[0],
            -(r * Vec3::z()),
            epsilon = 1e-15
        );
    }

    #[test]
    fn coincident_vehicle_is_rejected() {
        let s = single(Vec3::zeros());
        assert!(matches!(
            cable_directions(&s),
            Err(Error::DegenerateGeometry { vehicle: 0 })
        ));
        assert!(solve_tensions(&s, &[Vec3::zeros()], &params(1)).is_err());
    }

    #[test]
    fn single_vehicle_static_hover_tension() {
        let p = params(1);
        let s = single(Vec3::z());
        let thrust = Vec3::z() * (0.5 + 0.225) * GRAVITY;
        let sol = solve_tensions(&s, &[thrust], &p).unwrap();
        assert_abs_diff_eq!(sol.tensions[0], 0.225 * GRAVITY, epsilon = 1e-12);
        assert!(!sol.any_slack());
    }

    #[test]
    fn free_fall_needs_no_tension() {
        let (s, p, _) = symmetric_hover();
        let sol = solve_tensions(&s, &[Vec3::zeros(); 3], &p).unwrap();
        for t in &sol.tensions {
            assert_abs_diff_eq!(*t, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetric_hover_tension_oracle() {
        let (s, p, thrusts) = symmetric_hover();
        let sol = solve_tensions(&s, &thrusts, &p).unwrap();
        let oracle = 0.225 * 9.81 / (3.0 * (PI / 6.0).cos());
        assert_abs_diff_eq!(oracle, 0.8496, epsilon = 1e-4);
        for t in &sol.tensions {
            assert_abs_diff_eq!(*t, oracle, epsilon = 1e-12);
        }
        assert!(sol.min_eigenvalue > 0.0);
    }

    #[test]
    fn zero_thrust_derivative_is_free_fall() {
        let (s, p, _) = symmetric_hover();
        let d = system_derivative(&s, &PlantInputs::zero(3), &p).unwrap();
        assert_abs_diff_eq!(d.load_acceleration, -Vec3::z() * GRAVITY, epsilon = 1e-12);
        for v in &d.vehicles {
            assert_abs_diff_eq!(v.acceleration, -Vec3::z() * GRAVITY, epsilon = 1e-12);
        }
    }

    #[test]
    fn principal_axis_spin_has_no_gyroscopic_torque() {
        let p = params(1);
        let mut s = single(Vec3::z());
        s.vehicles[0].rate = Vec3::new(0.0, 0.0, 3.0);
        let d = system_derivative(&s, &PlantInputs::zero(1), &p).unwrap();
        assert_abs_diff_eq!(d.vehicles[0].angular_acceleration, Vec3::zeros(), epsilon = 0.0);
    }

    #[test]
    fn hover_equilibrium_is_a_fixed_point() {
        let (s, p, thrusts) = symmetric_hover();
        let mut inputs = PlantInputs::zero(3);
        let mut s = s;
        for (i, f) in thrusts.iter().enumerate() {
            let u = f.normalize();
            let q = crate::controller::attitude_extraction(f).unwrap().1;
            s.vehicles[i].attitude = q;
            inputs.thrust[i] = f.norm();
            assert_abs_diff_eq!(q.rotate(&Vec3::z()), u, epsilon = 1e-12);
        }
        let d = system_derivative(&s, &inputs, &p).unwrap();
        assert_abs_diff_eq!(d.load_acceleration, Vec3::zeros(), epsilon = 1e-9);
        for v in &d.vehicles {
            assert_abs_diff_eq!(v.acceleration, Vec3::zeros(), epsilon = 1e-9);
        }
        let next = rk4_step(&s, &inputs, 1e-3, &p).unwrap();
        assert_abs_diff_eq!(next.load_position, s.load_position, epsilon = 1e-12);
        for (a, b) in next.vehicles.iter().zip(&s.vehicles) {
            assert_abs_diff_eq!(a.position, b.position, epsilon = 1e-12);
            assert_abs_diff_eq!(a.velocity, b.velocity, epsilon = 1e-12);
        }
    }

    #[test]
    fn ballistic_single_vehicle_matches_closed_form() {
        let p = params(1);
        let mut s = single(Vec3::z());
        let z0 = s.load_position.z;
        let dt = 1e-2;
        for _ in 0..100 {
            s = rk4_step(&s, &PlantInputs::zero(1), dt, &p).unwrap();
        }
        assert_abs_diff_eq!(s.load_position.z, z0 - 0.5 * GRAVITY * s.time.powi(2), epsilon = 1e-9);
    }

    #[test]
    fn rk4_rejects_bad_step_and_dimensions() {
        let p = params(1);
        let s = single(Vec3::z());
        assert!(rk4_step(&s, &PlantInputs::zero(1), 0.0, &p).is_err());
        assert!(matches!(
            rk4_step(&s, &PlantInputs::zero(2), 1e-3, &p),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn large_constraint_violation_reports_divergence() {
        let p = params(1);
        let s = single(Vec3::z() * 1.01);
        assert!(matches!(
            rk4_step(&s, &PlantInputs::zero(1), 1e-3, &p),
            Err(Error::ConstraintDivergence { .. })
        ));
    }

    #[test]
    fn negative_tension_is_flagged() {
        // vehicle pushed down toward the load by its thrust
        let p = params(1);
        let s = single(Vec3::z());
        let sol = solve_tensions(&s, &[-Vec3::z() * 10.0], &p).unwrap();
        assert!(sol.tensions[0] < 0.0);
        assert!(sol.slack[0]);
    }

    #[test]
    fn vehicle_params_validation() {
        assert!(VehicleParams::new(-1.0, Mat3::identity(), 1.0).is_err());
        assert!(VehicleParams::new(1.0, Mat3::identity(), 0.0).is_err());
        assert!(VehicleParams::new(1.0, -Mat3::identity(), 1.0).is_err());
        let mut asym = Mat3::identity();
        asym[(0, 1)] = 0.5;
        assert!(VehicleParams::new(1.0, asym, 1.0).is_err());
        assert!(SystemParams::new(vec![], 1.0).is_err());
    }
}
