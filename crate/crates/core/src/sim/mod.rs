//! Deterministic fixed-step simulation of the protocol dynamics.
//!
//! The integrator is classical fourth-order Runge-Kutta with a fixed step,
//! which keeps runs bit-reproducible and makes a communication delay an
//! exact offset into a ring buffer (the delay must be an integer multiple
//! of `dt`). Step events (reference changes) are applied exactly at their
//! timestamps, which therefore must also sit on the step grid.

mod buffer;
mod integrator;
mod sweep;

pub use buffer::{DelayBuffer, DelayTap};
pub use integrator::{
    analytic_linear_solution, analytic_linear_trajectory, integrate, integrate_dde,
    integrate_delayed, run_protocol, DelaySystem, OdeSystem,
};
pub use sweep::{
    default_eps_grid, epsilon_sweep, Classification, SweepBracket, SweepConfig, SweepReport,
    SweepRun,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e9;

/// Fixed-step integration parameters.
///
/// `delay_r` must be an exact integer multiple of `dt` (checked on load).
/// When the full two-time-scale system is simulated the step must also
/// satisfy `dt <= epsilon/10`; that guard is enforced by the runners that
/// know `epsilon` ([`run_protocol`], the sweep, the wind-farm harness).
/// For delayed runs `dt <= delay_r/10` is recommended, since the delayed
/// term is held over the internal stages of each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Step size in seconds.
    pub dt: T,
    /// Horizon in seconds; must be an integer number of steps.
    pub t_end: T,
    /// Communication delay in seconds (0 disables the history buffer).
    pub delay_r: T,
    /// Keep every `record_stride`-th step in the trajectory.
    pub record_stride: usize,
}

impl<T: Scalar> SimConfig<T> {
    pub fn new(dt: T, t_end: T, delay_r: T, record_stride: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            delay_r,
            record_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn undelayed(dt: T, t_end: T, record_stride: usize) -> Result<Self> {
        Self::new(dt, t_end, T::zero(), record_stride)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= T::zero() {
            return Err(Error::config("dt must be positive and finite"));
        }
        if !self.t_end.is_finite() || self.t_end < T::zero() {
            return Err(Error::config("t_end must be non-negative and finite"));
        }
        if !self.delay_r.is_finite() || self.delay_r < T::zero() {
            return Err(Error::config("delay_r must be non-negative and finite"));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        self.n_steps()?;
        self.delay_steps()?;
        Ok(())
    }

    /// Number of integration steps covering the horizon.
    pub fn n_steps(&self) -> Result<usize> {
        grid_index(self.t_end, self.dt, "t_end")
    }

    /// Delay expressed in steps.
    pub fn delay_steps(&self) -> Result<usize> {
        grid_index(self.delay_r, self.dt, "delay_r")
    }
}

/// Maps a time onto the step grid, rejecting values that are not an
/// integer multiple of `dt` (up to rounding slack in the quotient).
pub(crate) fn grid_index<T: Scalar>(value: T, dt: T, what: &str) -> Result<usize> {
    let ratio = (value / dt).to_real();
    let idx = ratio.round();
    if !idx.is_finite() || idx < 0.0 {
        return Err(Error::config(format!(
            "{what} must be non-negative and finite"
        )));
    }
    if (ratio - idx).abs() > 1e-6 * idx.max(1.0) {
        return Err(Error::config(format!(
            "{what} = {} is not an integer multiple of dt = {} (ratio {ratio})",
            value, dt
        )));
    }
    Ok(idx as usize)
}

/// Scheduled step changes of the reference value (`z_star` or `P_d`),
/// sorted by time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventSchedule<T> {
    events: Vec<(T, T)>,
}

impl<T: Scalar> EventSchedule<T> {
    pub fn new(events: Vec<(T, T)>) -> Result<Self> {
        let mut prev: Option<T> = None;
        for &(t, v) in &events {
            if !t.is_finite() || t < T::zero() {
                return Err(Error::config("event times must be finite and non-negative"));
            }
            if !v.is_finite() {
                return Err(Error::config("event values must be finite"));
            }
            if let Some(p) = prev {
                if t <= p {
                    return Err(Error::config("event times must be strictly increasing"));
                }
            }
            prev = Some(t);
        }
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self { events: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[(T, T)] {
        &self.events
    }

    pub fn last_event_time(&self) -> Option<T> {
        self.events.last().map(|&(t, _)| t)
    }

    /// Converts event times to step indices on the grid of `sim`. Events
    /// must lie on the grid and within the horizon.
    pub(crate) fn to_step_indices(&self, sim: &SimConfig<T>) -> Result<Vec<(usize, T)>> {
        let n_steps = sim.n_steps()?;
        let mut out = Vec::with_capacity(self.events.len());
        for &(t, v) in &self.events {
            let idx = grid_index(t, sim.dt, "event time")?;
            if idx > n_steps {
                return Err(Error::config(format!(
                    "event at t = {t} lies beyond the horizon t_end = {}",
                    sim.t_end
                )));
            }
            out.push((idx, v));
        }
        Ok(out)
    }
}

/// Recorded trajectory: uniformly spaced sample times and the state rows,
/// plus a snapshot of the integration parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    labels: Vec<String>,
    times: Vec<T>,
    data: Vec<T>,
    dim: usize,
    meta: Option<SimConfig<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub(crate) fn with_capacity(dim: usize, capacity: usize, meta: Option<SimConfig<T>>) -> Self {
        Self {
            labels: (0..dim).map(|i| format!("x_{}", i + 1)).collect(),
            times: Vec::with_capacity(capacity),
            data: Vec::with_capacity(capacity * dim),
            dim,
            meta,
        }
    }

    pub(crate) fn push(&mut self, t: T, state: &[T]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.data.extend_from_slice(state);
    }

    /// Builds a trajectory from raw parts (row-major `data` with one row
    /// of `labels.len()` values per time).
    pub fn from_parts(labels: Vec<String>, times: Vec<T>, data: Vec<T>) -> Result<Self> {
        let dim = labels.len();
        if dim == 0 {
            return Err(Error::config("trajectory needs at least one state column"));
        }
        if data.len() != times.len() * dim {
            return Err(Error::config(format!(
                "{} data values do not fill {} rows of width {dim}",
                data.len(),
                times.len()
            )));
        }
        Ok(Self {
            labels,
            times,
            data,
            dim,
            meta: None,
        })
    }

    /// Replaces the per-component labels used in exports.
    pub fn set_labels(&mut self, labels: Vec<String>) -> Result<()> {
        if labels.len() != self.dim {
            return Err(Error::config(format!(
                "{} labels for state dimension {}",
                labels.len(),
                self.dim
            )));
        }
        self.labels = labels;
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn time(&self, i: usize) -> T {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> Option<&[T]> {
        if self.is_empty() {
            None
        } else {
            Some(self.state(self.len() - 1))
        }
    }

    pub fn meta(&self) -> Option<&SimConfig<T>> {
        self.meta.as_ref()
    }

    /// Row indices whose times fall inside `[lo, hi]`.
    pub fn window_indices(&self, lo: T, hi: T) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.times[i] >= lo && self.times[i] <= hi)
            .collect()
    }

    /// CSV export: header `t,<label>,..`, one row per recorded step,
    /// 17-significant-digit scientific floats (lossless for f64).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push('t');
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.times[i]));
            for v in self.state(i) {
                out.push_str(&format!(",{:.16e}", v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a CSV produced by [`Trajectory::to_csv`]. The integration
    /// metadata is not part of the CSV and comes back as `None`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("empty trajectory CSV"))?;
        let mut cols = header.split(',').map(str::trim);
        if cols.next() != Some("t") {
            return Err(Error::config("trajectory CSV header must start with 't'"));
        }
        let labels: Vec<String> = cols.map(String::from).collect();
        if labels.is_empty() {
            return Err(Error::config("trajectory CSV has no state columns"));
        }
        let dim = labels.len();
        let mut traj = Trajectory {
            labels,
            times: Vec::new(),
            data: Vec::new(),
            dim,
            meta: None,
        };
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let t_field = fields
                .next()
                .ok_or_else(|| Error::config(format!("row {}: missing time", lineno + 2)))?;
            let t = T::parse_str(t_field).ok_or_else(|| {
                Error::config(format!("row {}: bad time value '{t_field}'", lineno + 2))
            })?;
            let mut row = Vec::with_capacity(dim);
            for f in fields {
                let v = T::parse_str(f)
                    .ok_or_else(|| Error::config(format!("row {}: bad value '{f}'", lineno + 2)))?;
                row.push(v);
            }
            if row.len() != dim {
                return Err(Error::config(format!(
                    "row {}: expected {dim} state values, got {}",
                    lineno + 2,
                    row.len()
                )));
            }
            traj.push(t, &row);
        }
        Ok(traj)
    }
}

pub(crate) fn norm_inf<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}
