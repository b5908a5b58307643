//! Per-step simulation log and its CSV form.
//!
//! One row per logged integrator step. Every value is written with 17
//! significant digits so a parsed log reproduces the in-memory values
//! exactly. Columns (vehicle index `i` is 1-based):
//!
//! | column group | meaning |
//! |---|---|
//! | `t` | time (s) |
//! | `xL_{x,y,z}`, `vL_*` | load position (m), velocity (m/s) |
//! | `xLd_*`, `vLd_*`, `aLd_*` | load reference and its derivatives |
//! | `xe_*` | load error `x_L − x_Ld` (m) |
//! | `uL_*` | load virtual control `Σ T_id α_id` (N) |
//! | `x{i}_*`, `v{i}_*` | vehicle position, velocity |
//! | `q{i}_{0,1,2,3}`, `w{i}_*` | attitude quaternion, body rate (rad/s) |
//! | `f{i}`, `tau{i}_*` | applied thrust (N), torque (N·m) |
//! | `T{i}`, `alpha{i}_*` | actual tension (N), cable direction |
//! | `Td{i}_*` | desired cable force `T_id α_id` (N) |
//! | `xd{i}_*`, `vd{i}_*` | desired vehicle position, velocity |
//! | `alphad{i}_*` | desired cable direction |
//! | `qd{i}_*`, `wd{i}_*` | desired attitude, desired body rate |
//! | `ud{i}_*` | desired thrust vector `u_id` (N) |
//! | `zeta{i}_*` | thrust disturbance `f_i R_i e3 − u_id` (N) |
//! | `zetaL{i}_*` | tension disturbance `T_i α_i − T_id α_id` (N) |
//! | `slack{i}` | 1 if the computed tension was not positive |
//! | `residual` | max cable-length residual (m) |

use std::fmt::Write as _;
use std::path::Path;

use crate::quat::Quaternion;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quaternion,
    pub rate: Vec3,
    pub thrust: f64,
    pub torque: Vec3,
    pub tension: f64,
    pub direction: Vec3,
    pub desired_force: Vec3,
    pub desired_position: Vec3,
    pub desired_velocity: Vec3,
    pub desired_direction: Vec3,
    pub desired_attitude: Quaternion,
    pub desired_rate: Vec3,
    pub desired_thrust_vector: Vec3,
    pub thrust_error: Vec3,
    pub tension_error: Vec3,
    pub slack: bool,
}

impl VehicleRecord {
    /// `x_i − x_id`.
    pub fn position_error(&self) -> Vec3 {
        self.position - self.desired_position
    }

    /// `ẋ_i − ẋ_id`.
    pub fn velocity_error(&self) -> Vec3 {
        self.velocity - self.desired_velocity
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub load_position: Vec3,
    pub load_velocity: Vec3,
    pub reference_position: Vec3,
    pub reference_velocity: Vec3,
    pub reference_acceleration: Vec3,
    pub load_error: Vec3,
    pub load_command: Vec3,
    pub vehicles: Vec<VehicleRecord>,
    pub residual: f64,
}

impl LogRecord {
    pub fn load_velocity_error(&self) -> Vec3 {
        self.load_velocity - self.reference_velocity
    }

    fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(column_count(self.vehicles.len()));
        v.push(self.time);
        for x in [
            &self.load_position,
            &self.load_velocity,
            &self.reference_position,
            &self.reference_velocity,
            &self.reference_acceleration,
            &self.load_error,
            &self.load_command,
        ] {
            v.extend_from_slice(x.as_slice());
        }
        for r in &self.vehicles {
            v.extend_from_slice(r.position.as_slice());
            v.extend_from_slice(r.velocity.as_slice());
            v.extend_from_slice(&r.attitude.to_array());
            v.extend_from_slice(r.rate.as_slice());
            v.push(r.thrust);
            v.extend_from_slice(r.torque.as_slice());
            v.push(r.tension);
            v.extend_from_slice(r.direction.as_slice());
            v.extend_from_slice(r.desired_force.as_slice());
            v.extend_from_slice(r.desired_position.as_slice());
            v.extend_from_slice(r.desired_velocity.as_slice());
            v.extend_from_slice(r.desired_direction.as_slice());
            v.extend_from_slice(&r.desired_attitude.to_array());
            v.extend_from_slice(r.desired_rate.as_slice());
            v.extend_from_slice(r.desired_thrust_vector.as_slice());
            v.extend_from_slice(r.thrust_error.as_slice());
            v.extend_from_slice(r.tension_error.as_slice());
            v.push(if r.slack { 1.0 } else { 0.0 });
        }
        v.push(self.residual);
        v
    }

    fn from_values(n: usize, v: &[f64]) -> Self {
        let mut c = Cursor { v, at: 0 };
        let time = c.scalar();
        let load_position = c.vec3();
        let load_velocity = c.vec3();
        let reference_position = c.vec3();
        let reference_velocity = c.vec3();
        let reference_acceleration = c.vec3();
        let load_error = c.vec3();
        let load_command = c.vec3();
        let vehicles = (0..n)
            .map(|_| VehicleRecord {
                position: c.vec3(),
                velocity: c.vec3(),
                attitude: c.quat(),
                rate: c.vec3(),
                thrust: c.scalar(),
                torque: c.vec3(),
                tension: c.scalar(),
                direction: c.vec3(),
                desired_force: c.vec3(),
                desired_position: c.vec3(),
                desired_velocity: c.vec3(),
                desired_direction: c.vec3(),
                desired_attitude: c.quat(),
                desired_rate: c.vec3(),
                desired_thrust_vector: c.vec3(),
                thrust_error: c.vec3(),
                tension_error: c.vec3(),
                slack: c.scalar() != 0.0,
            })
            .collect();
        let residual = c.scalar();
        Self {
            time,
            load_position,
            load_velocity,
            reference_position,
            reference_velocity,
            reference_acceleration,
            load_error,
            load_command,
            vehicles,
            residual,
        }
    }
}

struct Cursor<'a> {
    v: &'a [f64],
    at: usize,
}

impl Cursor<'_> {
    fn scalar(&mut self) -> f64 {
        self.at += 1;
        self.v[self.at - 1]
    }

    fn vec3(&mut self) -> Vec3 {
        Vec3::new(self.scalar(), self.scalar(), self.scalar())
    }

    fn quat(&mut self) -> Quaternion {
        let a = [self.scalar(), self.scalar(), self.scalar(), self.scalar()];
        // logged quaternions are unit to 17 digits; keep them bit-exact
        Quaternion::from_parts_unchecked(a[0], Vec3::new(a[1], a[2], a[3]))
    }
}

const LOAD_COLUMNS: usize = 1 + 7 * 3;
const VEHICLE_COLUMNS: usize = 3 * 13 + 4 * 2 + 1 + 1 + 1;

pub fn column_count(n: usize) -> usize {
    LOAD_COLUMNS + VEHICLE_COLUMNS * n + 1
}

/// Column names in file order.
pub fn columns(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for p in ["xL", "vL", "xLd", "vLd", "aLd", "xe", "uL"] {
        push_vec(&mut c, p);
    }
    for i in 1..=n {
        push_vec(&mut c, &format!("x{i}"));
        push_vec(&mut c, &format!("v{i}"));
        push_quat(&mut c, &format!("q{i}"));
        push_vec(&mut c, &format!("w{i}"));
        c.push(format!("f{i}"));
        push_vec(&mut c, &format!("tau{i}"));
        c.push(format!("T{i}"));
        for p in ["alpha", "Td", "xd", "vd", "alphad"] {
            push_vec(&mut c, &format!("{p}{i}"));
        }
        push_quat(&mut c, &format!("qd{i}"));
        for p in ["wd", "ud", "zeta", "zetaL"] {
            push_vec(&mut c, &format!("{p}{i}"));
        }
        c.push(format!("slack{i}"));
    }
    c.push("residual".to_string());
    c
}

fn push_vec(c: &mut Vec<String>, prefix: &str) {
    for a in ["x", "y", "z"] {
        c.push(format!("{prefix}_{a}"));
    }
}

fn push_quat(c: &mut Vec<String>, prefix: &str) {
    for a in 0..4 {
        c.push(format!("{prefix}_{a}"));
    }
}

/// Infers the vehicle count from a column count.
fn vehicles_for_columns(count: usize) -> Option<usize> {
    let rest = count.checked_sub(LOAD_COLUMNS + 1)?;
    (rest % VEHICLE_COLUMNS == 0).then_some(rest / VEHICLE_COLUMNS)
}

/// Time series of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub vehicles: usize,
    pub records: Vec<LogRecord>,
}

impl SimLog {
    pub fn new(vehicles: usize) -> Self {
        Self {
            vehicles,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: LogRecord) -> Result<()> {
        if record.vehicles.len() != self.vehicles {
            return Err(Error::Dimension(format!(
                "record has {} vehicles, log has {}",
                record.vehicles.len(),
                self.vehicles
            )));
        }
        self.records.push(record);
        Ok(())
    }

    /// Sample spacing; zero for logs with fewer than two rows.
    pub fn dt(&self) -> f64 {
        match self.records.as_slice() {
            [a, b, ..] => b.time - a.time,
            _ => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = columns(self.vehicles).join(",");
        out.push('\n');
        for r in &self.records {
            for (k, v) in r.values().iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Log("empty log".into()))?
            .split(',')
            .collect();
        let n = vehicles_for_columns(header.len()).ok_or_else(|| {
            Error::Log(format!(
                "found {} columns, which matches no vehicle count (expected {} + {}·n)",
                header.len(),
                LOAD_COLUMNS + 1,
                VEHICLE_COLUMNS
            ))
        })?;
        let expected = columns(n);
        if let Some(k) = (0..expected.len()).find(|&k| expected[k] != header[k]) {
            return Err(Error::Log(format!(
                "column {k}: expected `{}`, found `{}`",
                expected[k], header[k]
            )));
        }
        let mut log = SimLog::new(n);
        for (row, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let values: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Log(format!("row {}: {e}", row + 1)))?;
            if values.len() != expected.len() {
                return Err(Error::Log(format!(
                    "row {}: expected {} columns, found {}",
                    row + 1,
                    expected.len(),
                    values.len()
                )));
            }
            log.records.push(LogRecord::from_values(n, &values));
        }
        Ok(log)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Keeps every `k`-th record.
    pub fn decimated(&self, k: usize) -> Self {
        Self {
            vehicles: self.vehicles,
            records: self.records.iter().step_by(k.max(1)).cloned().collect(),
        }
    }
}
