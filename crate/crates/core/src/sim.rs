//! Closed-loop runner: controller tick, plant step, log.
//!
//! The controller runs once per integrator step and its inputs are held
//! over the step. A run is sequential and bitwise reproducible.

use crate::controller::{controller_step, ControllerGains, ControllerState};
use crate::dynamics::{rk4_step, solve_tensions, thrust_vectors, SystemParams, SystemState};
use crate::log::{LogRecord, SimLog, VehicleRecord};
use crate::scenario::ScenarioConfig;
use crate::{Error, Result, Vec3};

/// Aggregate figures of a run, computed over every integrator step
/// (independent of log decimation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub steps: usize,
    pub max_constraint_residual: f64,
    pub slack_samples: usize,
    pub max_load_error: f64,
    pub final_load_error: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: SimLog,
    pub final_state: SystemState,
    pub stats: RunStats,
}

/// Runs `config` for its configured duration.
pub fn simulate(config: &ScenarioConfig) -> Result<SimOutcome> {
    simulate_with_state(config, config.initial_state()?)
}

/// Runs `config` from an explicit initial state.
pub fn simulate_with_state(config: &ScenarioConfig, initial: SystemState) -> Result<SimOutcome> {
    let partial = simulate_partial(config, initial)?;
    match partial.error {
        Some(e) => Err(e),
        None => Ok(partial.outcome),
    }
}

/// A run that may have stopped early. On failure, `outcome` holds everything
/// logged before the failing step and `final_state` is the last good state.
#[derive(Debug)]
pub struct PartialRun {
    pub outcome: SimOutcome,
    pub error: Option<Error>,
}

/// Like [`simulate_with_state`] but keeps the log of a diverging run.
/// Configuration errors still fail outright.
pub fn simulate_partial(config: &ScenarioConfig, initial: SystemState) -> Result<PartialRun> {
    let params = config.system_params()?;
    let gains = config.controller_gains();
    let n = params.n();
    let mut run = Runner {
        config,
        params,
        gains,
        memory: ControllerState::new(n, &config.controller),
        state: initial,
        log: SimLog::new(n),
        stats: RunStats {
            steps: config.steps(),
            ..Default::default()
        },
    };

    let mut error = None;
    for k in 0..config.steps() {
        if let Err(e) = run.step(k) {
            run.stats.steps = k;
            error = Some(e);
            break;
        }
    }

    Ok(PartialRun {
        outcome: SimOutcome {
            log: run.log,
            final_state: run.state,
            stats: run.stats,
        },
        error,
    })
}

struct Runner<'a> {
    config: &'a ScenarioConfig,
    params: SystemParams,
    gains: ControllerGains,
    memory: ControllerState,
    state: SystemState,
    log: SimLog,
    stats: RunStats,
}

impl Runner<'_> {
    /// Controller tick, log, integrator step. Leaves `state` untouched on error.
    fn step(&mut self, k: usize) -> Result<()> {
        let config = self.config;
        let params = &self.params;
        let n = params.n();
        let dt = config.dt;
        let t = k as f64 * dt;
        let state = &mut self.state;
        let stats = &mut self.stats;

        state.time = t;
        let reference = config.trajectory.sample(t);
        let out = controller_step(state, &mut self.memory, &reference, &self.gains, params, &config.controller, dt)
            .map_err(|e| at_step(e, k, t))?;
        let thrusts = thrust_vectors(state, &out.inputs, params);
        let tensions = solve_tensions(state, &thrusts, params).map_err(|e| at_step(e, k, t))?;

        let residual = state.max_constraint_residual(params);
        stats.max_constraint_residual = stats.max_constraint_residual.max(residual);
        if tensions.any_slack() {
            stats.slack_samples += 1;
        }
        let load_error = out.load_error.norm();
        stats.max_load_error = stats.max_load_error.max(load_error);
        stats.final_load_error = load_error;

        if k.is_multiple_of(config.output.decimate.max(1)) {
            let vehicles = (0..n)
                .map(|i| {
                    let v = &state.vehicles[i];
                    let c = &out.commands[i];
                    let actual_force = tensions.directions[i] * tensions.tensions[i];
                    VehicleRecord {
                        position: v.position,
                        velocity: v.velocity,
                        attitude: v.attitude,
                        rate: v.rate,
                        thrust: out.inputs.thrust[i],
                        torque: out.inputs.torque[i],
                        tension: tensions.tensions[i],
                        direction: tensions.directions[i],
                        desired_force: c.tension_vector,
                        desired_position: c.position,
                        desired_velocity: c.velocity,
                        desired_direction: c.direction,
                        desired_attitude: c.attitude,
                        desired_rate: c.rate,
                        desired_thrust_vector: c.thrust_vector,
                        thrust_error: thrusts[i] - c.thrust_vector,
                        tension_error: actual_force - c.tension_vector,
                        slack: tensions.slack[i],
                    }
                })
                .collect();
            let record = LogRecord {
                time: t,
                load_position: state.load_position,
                load_velocity: state.load_velocity,
                reference_position: reference.position,
                reference_velocity: reference.velocity,
                reference_acceleration: reference.acceleration,
                load_error: out.load_error,
                load_command: out.load_command,
                vehicles,
                residual,
            };
            check_finite(&record, k)?;
            self.log.push(record)?;
        }

        let mut next = rk4_step(state, &out.inputs, dt, params).map_err(|e| at_step(e, k, t))?;
        next.time = (k + 1) as f64 * dt;
        stats.max_constraint_residual = stats
            .max_constraint_residual
            .max(next.max_constraint_residual(params));
        *state = next;
        Ok(())
    }
}

fn at_step(e: Error, step: usize, time: f64) -> Error {
    match e {
        Error::NonFinite { what, .. } => Error::NonFinite { what, step, time },
        other => other,
    }
}

fn check_finite(r: &LogRecord, step: usize) -> Result<()> {
    let bad = |what: &str| Error::NonFinite {
        what: what.to_string(),
        step,
        time: r.time,
    };
    let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
    if !finite(&r.load_position) || !finite(&r.load_velocity) || !finite(&r.load_command) {
        return Err(bad("load state"));
    }
    for (i, v) in r.vehicles.iter().enumerate() {
        let ok = finite(&v.position)
            && finite(&v.velocity)
            && finite(&v.rate)
            && finite(&v.torque)
            && v.thrust.is_finite()
            && v.tension.is_finite()
            && finite(&v.desired_position);
        if !ok {
            return Err(bad(&format!("vehicle {}", i + 1)));
        }
    }
    Ok(())
}
