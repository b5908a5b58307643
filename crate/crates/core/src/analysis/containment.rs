//! Disturbance bounds, error-state reconstruction and containment checks
//! on a logged run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{EllipsoidCertificate, BODY_STATES};
use crate::log::{LogRecord, SimLog};
use crate::{Error, Result, Vec3};

/// Per-vehicle bounds on `‖ζ_i‖²` (`c1`), `‖α̈_id‖²` (`c2`) and `‖ζ_Li‖²` (`c3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBounds {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
}

impl DisturbanceBounds {
    pub fn uniform(n: usize, c1: f64, c2: f64, c3: f64) -> Self {
        Self {
            c1: vec![c1; n],
            c2: vec![c2; n],
            c3: vec![c3; n],
        }
    }

    /// `Σ_i (c1_i + c2_i + c3_i)`.
    pub fn total(&self) -> f64 {
        self.c1.iter().chain(&self.c2).chain(&self.c3).sum()
    }
}

/// Maxima of the squared disturbance norms over samples with `t ≥ cutoff`.
///
/// `α̈_id` comes from central differences of the logged desired directions,
/// so the first and last samples only contribute to `c1` and `c3`.
pub fn estimate_disturbance_bounds(log: &SimLog, cutoff: f64) -> Result<DisturbanceBounds> {
    let n = log.vehicles;
    let recs = &log.records;
    let first = recs
        .iter()
        .position(|r| r.time >= cutoff)
        .ok_or_else(|| Error::Log(format!("log ends before the cutoff t = {cutoff} s")))?;
    if recs.len() < 3 {
        return Err(Error::Log(format!(
            "{} samples are too few for second differences",
            recs.len()
        )));
    }

    let mut b = DisturbanceBounds::uniform(n, 0.0, 0.0, 0.0);
    for (k, r) in recs.iter().enumerate().skip(first) {
        for (i, v) in r.vehicles.iter().enumerate() {
            b.c1[i] = b.c1[i].max(v.thrust_error.norm_squared());
            b.c3[i] = b.c3[i].max(v.tension_error.norm_squared());
            if k >= 1 && k + 1 < recs.len() {
                let acc = second_difference(
                    &recs[k - 1].vehicles[i].desired_direction,
                    &v.desired_direction,
                    &recs[k + 1].vehicles[i].desired_direction,
                    r.time - recs[k - 1].time,
                    recs[k + 1].time - r.time,
                );
                b.c2[i] = b.c2[i].max(acc.norm_squared());
            }
        }
    }
    Ok(b)
}

/// Second derivative through three samples with spacings `h0`, `h1`.
fn second_difference(a: &Vec3, b: &Vec3, c: &Vec3, h0: f64, h1: f64) -> Vec3 {
    ((c - b) / h1 - (b - a) / h0) * (2.0 / (h0 + h1))
}

/// Rebuilds `χ` sample by sample; the integral states are trapezoidal
/// accumulations of the logged errors from the first sample on.
#[derive(Debug, Clone)]
pub struct ChiAccumulator {
    n: usize,
    integrals: Vec<Vec3>,
    previous: Option<(f64, Vec<Vec3>)>,
}

impl ChiAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            integrals: vec![Vec3::zeros(); n + 1],
            previous: None,
        }
    }

    pub fn push(&mut self, r: &LogRecord) -> Result<DVector<f64>> {
        if r.vehicles.len() != self.n {
            return Err(Error::Dimension(format!(
                "record has {} vehicles, expected {}",
                r.vehicles.len(),
                self.n
            )));
        }
        let mut errors = Vec::with_capacity(self.n + 1);
        let mut rates = Vec::with_capacity(self.n + 1);
        errors.push(r.load_error);
        rates.push(r.load_velocity_error());
        for v in &r.vehicles {
            errors.push(v.position_error());
            rates.push(v.velocity_error());
        }

        if let Some((t0, prev)) = &self.previous {
            let h = r.time - t0;
            for (acc, (e0, e1)) in self.integrals.iter_mut().zip(prev.iter().zip(&errors)) {
                *acc += (e0 + e1) * (0.5 * h);
            }
        }

        let mut chi = DVector::zeros(BODY_STATES * (self.n + 1));
        for b in 0..=self.n {
            let o = BODY_STATES * b;
            chi.rows_mut(o, 3).copy_from(&self.integrals[b]);
            chi.rows_mut(o + 3, 3).copy_from(&errors[b]);
            chi.rows_mut(o + 6, 3).copy_from(&rates[b]);
        }
        self.previous = Some((r.time, errors));
        Ok(chi)
    }
}

/// `χ` at every sample of `log`.
pub fn chi_series(log: &SimLog) -> Result<Vec<DVector<f64>>> {
    let mut acc = ChiAccumulator::new(log.vehicles);
    log.records.iter().map(|r| acc.push(r)).collect()
}

/// `(level ≤ 1, level)` with `level = χᵀPχ · α/β`.
pub fn ellipsoid_membership(chi: &DVector<f64>, cert: &EllipsoidCertificate) -> Result<(bool, f64)> {
    if chi.len() != cert.dim() {
        return Err(Error::Dimension(format!(
            "χ has {} entries, certificate expects {}",
            chi.len(),
            cert.dim()
        )));
    }
    let v = chi.dot(&(&cert.p * chi));
    let level = if v == 0.0 {
        0.0
    } else if cert.radius_sq > 0.0 {
        v / cert.radius_sq
    } else {
        f64::INFINITY
    };
    Ok((level <= 1.0, level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    pub samples: usize,
    pub violations: usize,
    pub satisfied_fraction: f64,
}

/// Relative slack on the discrete decrease test.
pub const DECREASE_TOLERANCE: f64 = 1e-6;

/// Checks `V(t+dt) − V(t) ≤ (−αV(t) + β)dt + tol` with `V = χᵀPχ` on
/// consecutive pairs starting at `t ≥ cutoff`; `tol = 1e-6 (1 + V(t))`.
pub fn lyapunov_decrease(
    times: &[f64],
    chi: &[DVector<f64>],
    cert: &EllipsoidCertificate,
    cutoff: f64,
) -> Result<DecreaseReport> {
    if times.len() != chi.len() {
        return Err(Error::Dimension(format!(
            "{} times for {} states",
            times.len(),
            chi.len()
        )));
    }
    let mut v = Vec::with_capacity(chi.len());
    for x in chi {
        if x.len() != cert.dim() {
            return Err(Error::Dimension(format!(
                "χ has {} entries, certificate expects {}",
                x.len(),
                cert.dim()
            )));
        }
        v.push(x.dot(&(&cert.p * x)));
    }
    let mut samples = 0;
    let mut violations = 0;
    for k in 0..v.len().saturating_sub(1) {
        if times[k] < cutoff {
            continue;
        }
        let dt = times[k + 1] - times[k];
        let tol = DECREASE_TOLERANCE * (1.0 + v[k]);
        samples += 1;
        if v[k + 1] - v[k] > (-cert.alpha * v[k] + cert.beta) * dt + tol {
            violations += 1;
        }
    }
    let satisfied_fraction = if samples == 0 {
        1.0
    } else {
        (samples - violations) as f64 / samples as f64
    };
    Ok(DecreaseReport {
        samples,
        violations,
        satisfied_fraction,
    })
}

/// Containment of a logged run in a certificate's ellipsoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub cutoff: f64,
    /// Samples at or after `cutoff`.
    pub samples: usize,
    pub inside: usize,
    pub inside_fraction: f64,
    pub max_level: f64,
    pub decrease: DecreaseReport,
    /// `(bin start, fraction inside)` over one-second bins of the whole run.
    pub timeline: Vec<(f64, f64)>,
}

pub fn containment_report(log: &SimLog, cert: &EllipsoidCertificate, cutoff: f64) -> Result<ContainmentReport> {
    let chi = chi_series(log)?;
    let times: Vec<f64> = log.records.iter().map(|r| r.time).collect();
    let mut samples = 0;
    let mut inside = 0;
    let mut max_level: f64 = 0.0;
    let mut bins: Vec<(f64, usize, usize)> = Vec::new();
    for (t, x) in times.iter().zip(&chi) {
        let (ok, level) = ellipsoid_membership(x, cert)?;
        let start = t.floor();
        match bins.last_mut() {
            Some(b) if b.0 == start => {
                b.1 += ok as usize;
                b.2 += 1;
            }
            _ => bins.push((start, ok as usize, 1)),
        }
        if *t >= cutoff {
            samples += 1;
            inside += ok as usize;
            max_level = max_level.max(level);
        }
    }
    let decrease = lyapunov_decrease(&times, &chi, cert, cutoff)?;
    Ok(ContainmentReport {
        cutoff,
        samples,
        inside,
        inside_fraction: if samples == 0 { 0.0 } else { inside as f64 / samples as f64 },
        max_level,
        decrease,
        timeline: bins.into_iter().map(|(t, i, c)| (t, i as f64 / c as f64)).collect(),
    })
}
