//! Reference trajectories, initial conditions and the scenario configuration
//! document.
//!
//! Every field of the configuration is optional; an empty document `{}`
//! describes the three-vehicle spiral experiment with the reference
//! parameters (`m_i = 0.5`, `m_L = 0.225`, `L_i = 1`, `J_i = 0.01·diag(2.32, 2.32, 4)`).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{
    allocate_tensions, attitude_extraction, load_control, reference_formation_rotations,
    AllocationStrategy, ControllerConfig, ControllerGains, PidGains, ReferenceSample,
    VehicleGains,
};
use crate::dynamics::{Baumgarte, SystemParams, SystemState, VehicleParams, VehicleState};
use crate::quat::Quaternion;
use crate::{e3, Error, Mat3, Result, Vec3, GRAVITY};

/// Tolerance on the cable-length constraint of user supplied initial poses.
pub const INITIAL_CONSTRAINT_TOL: f64 = 1e-9;

pub type TrajectorySample = ReferenceSample;

/// Serde adapter for 3×3 matrices: accepts a scalar (`s·I`), a 3-vector
/// diagonal or a row-major nested array. Diagonal matrices are written back
/// as 3-vectors.
pub mod mat3_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Scalar(f64),
        Diagonal([f64; 3]),
        Full([[f64; 3]; 3]),
    }

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> std::result::Result<S::Ok, S::Error> {
        let off_diagonal_zero = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .all(|(r, c)| r == c || m[(r, c)] == 0.0);
        let repr = if off_diagonal_zero {
            Repr::Diagonal([m[(0, 0)], m[(1, 1)], m[(2, 2)]])
        } else {
            let mut rows = [[0.0; 3]; 3];
            for (r, row) in rows.iter_mut().enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = m[(r, c)];
                }
            }
            Repr::Full(rows)
        };
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat3, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(v) => Mat3::identity() * v,
            Repr::Diagonal(v) => Mat3::from_diagonal(&Vec3::from(v)),
            Repr::Full(rows) => Mat3::from_fn(|r, c| rows[r][c]),
        })
    }
}

pub(crate) use mat3_serde as gain_matrix;

/// The ascending spiral `[1 − cos(2πt/5), sin(2πt/5), t/10]` with exact
/// derivatives.
pub fn spiral_reference(t: f64) -> ReferenceSample {
    Trajectory::Spiral {
        radius: 1.0,
        period: 5.0,
        climb_rate: 0.1,
    }
    .sample(t)
}

/// Desired load trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trajectory {
    /// `[r(1 − cos ωt), r sin ωt, c t]`, `ω = 2π / period`.
    Spiral {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "five")]
        period: f64,
        #[serde(default = "tenth")]
        climb_rate: f64,
    },
    /// Constant set point.
    Hover {
        #[serde(default)]
        position: [f64; 3],
    },
    /// Straight line with a trapezoidal speed profile, starting at rest.
    Line {
        start: [f64; 3],
        end: [f64; 3],
        max_speed: f64,
        max_acceleration: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn tenth() -> f64 {
    0.1
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Spiral {
            radius: 1.0,
            period: 5.0,
            climb_rate: 0.1,
        }
    }
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Trajectory::Spiral {
                radius,
                period,
                climb_rate,
            } => {
                let w = 2.0 * PI / period;
                let (s, c) = (w * t).sin_cos();
                ReferenceSample {
                    position: Vec3::new(radius * (1.0 - c), radius * s, climb_rate * t),
                    velocity: Vec3::new(radius * w * s, radius * w * c, *climb_rate),
                    acceleration: Vec3::new(radius * w * w * c, -radius * w * w * s, 0.0),
                }
            }
            Trajectory::Hover { position } => ReferenceSample::hold(Vec3::from(*position)),
            Trajectory::Line {
                start,
                end,
                max_speed,
                max_acceleration,
            } => {
                let a = Vec3::from(*start);
                let delta = Vec3::from(*end) - a;
                let dist = delta.norm();
                if dist == 0.0 {
                    return ReferenceSample::hold(a);
                }
                let dir = delta / dist;
                let (s, v, acc) = trapezoid(dist, *max_speed, *max_acceleration, t);
                ReferenceSample {
                    position: a + dir * s,
                    velocity: dir * v,
                    acceleration: dir * acc,
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Spiral { period, .. } if !(*period > 0.0) => {
                Err(Error::config("trajectory.period", "must be positive"))
            }
            Trajectory::Line {
                max_speed,
                max_acceleration,
                ..
            } if !(*max_speed > 0.0 && *max_acceleration > 0.0) => Err(Error::config(
                "trajectory.max_speed",
                "speed and acceleration limits must be positive",
            )),
            _ => Ok(()),
        }
    }
}

/// Distance, speed and acceleration along a rest-to-rest trapezoidal
/// profile.
fn trapezoid(dist: f64, vmax: f64, amax: f64, t: f64) -> (f64, f64, f64) {
    let t = t.max(0.0);
    // triangular when the cruise speed is never reached
    let vpeak = vmax.min((dist * amax).sqrt());
    let ta = vpeak / amax;
    let da = 0.5 * amax * ta * ta;
    let tc = (dist - 2.0 * da) / vpeak;
    let total = 2.0 * ta + tc;
    if t < ta {
        (0.5 * amax * t * t, amax * t, amax)
    } else if t < ta + tc {
        (da + vpeak * (t - ta), vpeak, 0.0)
    } else if t < total {
        let r = total - t;
        (dist - 0.5 * amax * r * r, amax * r, -amax)
    } else {
        (dist, 0.0, 0.0)
    }
}

/// Load at the origin, vehicles at `R_(z,−π/4)R_(y,−π/6)L_1e3`,
/// `R_(z,π/4)R_(y,−π/6)L_2e3`, `R_(y,π/6)L_3e3`, everything at rest with
/// identity attitude.
pub fn reference_initial_conditions(params: &SystemParams) -> Result<SystemState> {
    if params.n() != 3 {
        return Err(Error::config(
            "initial.preset",
            format!("the reference preset needs 3 vehicles, got {}", params.n()),
        ));
    }
    let rot = reference_formation_rotations();
    let vehicles = rot
        .iter()
        .zip(&params.vehicles)
        .map(|(r, p)| VehicleState::at_rest(r * &(e3() * p.cable_length())))
        .collect();
    Ok(SystemState {
        time: 0.0,
        load_position: Vec3::zeros(),
        load_velocity: Vec3::zeros(),
        vehicles,
    })
}

/// The closed-loop equilibrium for the reference at `t = 0`: zero tracking
/// errors, vehicles at their desired positions with the attitude that
/// realises the commanded thrust.
pub fn equilibrium_initial_conditions(
    params: &SystemParams,
    reference: &ReferenceSample,
    gains: &ControllerGains,
    allocation: &AllocationStrategy,
) -> Result<SystemState> {
    let g = params.gravity;
    let z = Vec3::zeros();
    let u_l = load_control(
        &reference.position,
        &reference.velocity,
        &z,
        reference,
        &gains.load,
        params.load_mass,
        g,
    );
    let forces = allocate_tensions(&u_l, allocation, params.n(), params.load_mass, g)?;
    let mut vehicles = Vec::with_capacity(params.n());
    for (i, (f, p)) in forces.iter().zip(&params.vehicles).enumerate() {
        let t = f.norm();
        if !(t > 1e-9) {
            return Err(Error::config(
                format!("initial.vehicles[{i}]"),
                "zero desired tension leaves the cable direction undefined",
            ));
        }
        let alpha = f / t;
        let u = (e3() * g + reference.acceleration) * p.mass() - f;
        let (_, attitude) = attitude_extraction(&u)?;
        vehicles.push(VehicleState {
            position: reference.position - alpha * p.cable_length(),
            velocity: reference.velocity,
            attitude,
            rate: Vec3::zeros(),
        });
    }
    Ok(SystemState {
        time: 0.0,
        load_position: reference.position,
        load_velocity: reference.velocity,
        vehicles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    #[serde(default = "VehicleSpec::default_mass")]
    pub mass: f64,
    #[serde(default = "VehicleSpec::default_inertia", with = "mat3_serde")]
    pub inertia: Mat3,
    #[serde(default = "one")]
    pub cable_length: f64,
}

impl VehicleSpec {
    fn default_mass() -> f64 {
        0.5
    }
    fn default_inertia() -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(2.32, 2.32, 4.0)) * 0.01
    }
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            mass: Self::default_mass(),
            inertia: Self::default_inertia(),
            cable_length: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default = "LoadSpec::default_mass")]
    pub mass: f64,
}

impl LoadSpec {
    fn default_mass() -> f64 {
        0.225
    }
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            mass: Self::default_mass(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    #[serde(default = "GainsSpec::default_load")]
    pub load: PidGains,
    /// One entry per vehicle; empty means the reference gains for all.
    #[serde(default)]
    pub vehicles: Vec<VehicleGains>,
}

impl GainsSpec {
    fn default_load() -> PidGains {
        ControllerGains::reference(0).load
    }
}

impl Default for GainsSpec {
    fn default() -> Self {
        Self {
            load: Self::default_load(),
            vehicles: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BodyInit {
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleInit {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub attitude: Quaternion,
    #[serde(default)]
    pub rate: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// The reference three-vehicle formation around a load at the origin.
    #[default]
    Reference,
    /// Exact closed-loop equilibrium for the reference at `t = 0`.
    Equilibrium,
    Explicit {
        #[serde(default)]
        load: BodyInit,
        vehicles: Vec<VehicleInit>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Keep every k-th integrator step in the log.
    #[serde(default = "OutputSpec::default_decimate")]
    pub decimate: usize,
    #[serde(default)]
    pub plots: bool,
}

impl OutputSpec {
    fn default_decimate() -> usize {
        1
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            decimate: 1,
            plots: false,
        }
    }
}

/// A validated, fully expanded experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "ScenarioConfig::default_agents")]
    pub agents: usize,
    /// Per-vehicle parameters; empty means the reference vehicle for all.
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default = "ScenarioConfig::default_gravity")]
    pub gravity: f64,
    #[serde(default)]
    pub gains: GainsSpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub trajectory: Trajectory,
    #[serde(default = "ScenarioConfig::default_dt")]
    pub dt: f64,
    #[serde(default = "ScenarioConfig::default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub baumgarte: Baumgarte,
    #[serde(default)]
    pub thrust_ceiling: Option<f64>,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        // infallible: the reference scenario always validates
        load_config(&serde_json::json!({})).expect("default scenario is valid")
    }
}

impl ScenarioConfig {
    fn default_agents() -> usize {
        3
    }
    fn default_gravity() -> f64 {
        GRAVITY
    }
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_duration() -> f64 {
        20.0
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: serde_json::Value = serde_json::from_str(&text)?;
        load_config(&doc)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let vehicles = self
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                VehicleParams::new(v.mass, v.inertia, v.cable_length).map_err(|e| match e {
                    Error::Config { path, message } => {
                        Error::config(format!("vehicles[{i}].{path}"), message)
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut p = SystemParams::new(vehicles, self.load.mass)?;
        p.gravity = self.gravity;
        p.baumgarte = self.baumgarte;
        p.thrust_ceiling = self.thrust_ceiling;
        Ok(p)
    }

    pub fn controller_gains(&self) -> ControllerGains {
        ControllerGains {
            load: self.gains.load.clone(),
            vehicles: self.gains.vehicles.clone(),
        }
    }

    pub fn initial_state(&self) -> Result<SystemState> {
        let params = self.system_params()?;
        match &self.initial {
            InitialSpec::Reference => reference_initial_conditions(&params),
            InitialSpec::Equilibrium => equilibrium_initial_conditions(
                &params,
                &self.trajectory.sample(0.0),
                &self.controller_gains(),
                &self.controller.allocation,
            ),
            InitialSpec::Explicit { load, vehicles } => {
                if vehicles.len() != params.n() {
                    return Err(Error::config(
                        "initial.vehicles",
                        format!("expected {} entries, got {}", params.n(), vehicles.len()),
                    ));
                }
                let state = SystemState {
                    time: 0.0,
                    load_position: Vec3::from(load.position),
                    load_velocity: Vec3::from(load.velocity),
                    vehicles: vehicles
                        .iter()
                        .map(|v| VehicleState {
                            position: Vec3::from(v.position),
                            velocity: Vec3::from(v.velocity),
                            attitude: v.attitude,
                            rate: Vec3::from(v.rate),
                        })
                        .collect(),
                };
                for (i, r) in state.constraint_residuals(&params).iter().enumerate() {
                    if *r > INITIAL_CONSTRAINT_TOL {
                        return Err(Error::config(
                            format!("initial.vehicles[{i}].position"),
                            format!("cable length violated by {r:.3e} m"),
                        ));
                    }
                }
                Ok(state)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::config("agents", "at least one vehicle is required"));
        }
        if self.vehicles.len() != self.agents {
            return Err(Error::config(
                "vehicles",
                format!("expected {} entries, got {}", self.agents, self.vehicles.len()),
            ));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.mass > 0.0 && v.mass.is_finite()) {
                return Err(Error::config(format!("vehicles[{i}].mass"), "must be positive"));
            }
            if !(v.cable_length > 0.0 && v.cable_length.is_finite()) {
                return Err(Error::config(
                    format!("vehicles[{i}].cable_length"),
                    "must be positive",
                ));
            }
        }
        if !(self.load.mass > 0.0 && self.load.mass.is_finite()) {
            return Err(Error::config(
                "load.mass",
                format!("must be positive, got {}", self.load.mass),
            ));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::config("gravity", "must be non-negative"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::config("dt", format!("must lie in (0, 0.01], got {}", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be positive"));
        }
        if !(self.baumgarte.omega >= 0.0 && self.baumgarte.zeta >= 0.0) {
            return Err(Error::config("baumgarte", "gains must be non-negative"));
        }
        if let Some(c) = self.thrust_ceiling {
            if !(c > 0.0) {
                return Err(Error::config("thrust_ceiling", "must be positive"));
            }
        }
        if self.output.decimate == 0 {
            return Err(Error::config("output.decimate", "must be at least 1"));
        }
        let c = &self.controller;
        if !(c.integral_limit > 0.0) {
            return Err(Error::config("controller.integral_limit", "must be positive"));
        }
        if !(c.derivative_cutoff > 0.0) {
            return Err(Error::config("controller.derivative_cutoff", "must be positive"));
        }
        if !(c.tension_floor >= 0.0) {
            return Err(Error::config("controller.tension_floor", "must be non-negative"));
        }
        allocate_tensions(
            &Vec3::zeros(),
            &c.allocation,
            self.agents,
            self.load.mass,
            self.gravity,
        )
        .map_err(|e| Error::config("controller.allocation", e.to_string()))?;
        self.controller_gains().validate(self.agents)?;
        self.trajectory.validate()?;
        self.system_params()?;
        self.initial_state()?;
        Ok(())
    }
}

/// Parses and validates a configuration document. Missing fields take the
/// reference-experiment defaults; vehicle and gain lists are expanded to
/// one entry per agent.
pub fn load_config(document: &serde_json::Value) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = serde_json::from_value(document.clone())
        .map_err(|e| Error::config("<document>", e.to_string()))?;
    if cfg.vehicles.is_empty() {
        cfg.vehicles = vec![VehicleSpec::default(); cfg.agents];
    }
    if cfg.gains.vehicles.is_empty() {
        cfg.gains.vehicles = vec![VehicleGains::reference(); cfg.agents];
    }
    if matches!(cfg.initial, InitialSpec::Reference) && cfg.agents != 3 {
        return Err(Error::config(
            "initial.preset",
            format!("the reference preset needs 3 vehicles, got {}", cfg.agents),
        ));
    }
    cfg.validate()?;
    Ok(cfg)
}
