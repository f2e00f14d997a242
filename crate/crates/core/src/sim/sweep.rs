//! Empirical sweep over the time-scale parameter.
//!
//! For each `(n, epsilon)` pair the full coupled system is integrated from
//! the standard perturbed start (`z = 0`, `xi_h = 0`, `z_star = n`) and
//! classified by whether it reaches the equilibrium within tolerance by
//! the horizon. The reported boundary is an empirical bracket between grid
//! points, not a certified bound.

use super::{integrate, EventSchedule, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::protocol::{equilibrium, P1System, ProtocolConfig, SystemState};
use crate::scalar::{real, Scalar};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Outcome of a single sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    /// Reached the equilibrium within tolerance by the horizon.
    Converged,
    /// Still finite at the horizon but outside tolerance.
    Slow,
    /// Integration hit the divergence fault.
    Diverged,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Converged => write!(f, "converged"),
            Classification::Slow => write!(f, "slow"),
            Classification::Diverged => write!(f, "diverged"),
        }
    }
}

/// Default logarithmic grid spanning `[1e-3, 10]`.
pub fn default_eps_grid<T: Scalar>() -> Vec<T> {
    [
        0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0,
    ]
    .iter()
    .map(|&v| real(v))
    .collect()
}

fn default_n_list() -> Vec<usize> {
    vec![10]
}

fn default_t_end<T: Scalar>() -> T {
    real(10.0)
}

fn default_dt_max<T: Scalar>() -> T {
    real(1e-3)
}

fn default_conv_tol<T: Scalar>() -> T {
    real(1e-4)
}

fn default_stride() -> usize {
    10
}

/// Sweep parameters. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct SweepConfig<T> {
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<T>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_t_end")]
    pub t_end: T,
    /// Step-size cap; each run uses `min(dt_max, epsilon/10)` fitted to
    /// divide the horizon.
    #[serde(default = "default_dt_max")]
    pub dt_max: T,
    /// Convergence test: L2 distance to the equilibrium at the horizon.
    #[serde(default = "default_conv_tol")]
    pub conv_tol: T,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl<T: Scalar> Default for SweepConfig<T> {
    fn default() -> Self {
        Self {
            eps_grid: default_eps_grid(),
            n_list: default_n_list(),
            t_end: default_t_end(),
            dt_max: default_dt_max(),
            conv_tol: default_conv_tol(),
            record_stride: default_stride(),
        }
    }
}

impl<T: Scalar> SweepConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::config("eps_grid must not be empty"));
        }
        let mut prev: Option<T> = None;
        for &e in &self.eps_grid {
            if !e.is_finite() || e <= T::zero() {
                return Err(Error::config(
                    "eps_grid entries must be positive and finite",
                ));
            }
            if let Some(p) = prev {
                if e <= p {
                    return Err(Error::config("eps_grid must be strictly ascending"));
                }
            }
            prev = Some(e);
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::config("n_list must contain agent counts >= 2"));
        }
        let positive = |v: T| v.is_finite() && v > T::zero();
        if !positive(self.t_end) || !positive(self.dt_max) || !positive(self.conv_tol) {
            return Err(Error::config("t_end, dt_max and conv_tol must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        Ok(())
    }
}

/// One `(n, epsilon)` classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun<T> {
    pub n: usize,
    pub epsilon: T,
    pub classification: Classification,
    /// First recorded time after which the error stays within tolerance.
    pub settling_time: Option<T>,
    /// L2 distance to the equilibrium at the horizon (absent on divergence).
    pub final_error: Option<T>,
}

/// Empirical stability boundary for one agent count: the last grid point
/// of the converged prefix and the first non-converged point after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBracket<T> {
    pub n: usize,
    pub largest_converged: Option<T>,
    pub first_non_converged: Option<T>,
}

impl<T> SweepBracket<T> {
    /// True when both endpoints exist, i.e. the boundary was actually
    /// enclosed by the grid.
    pub fn bracketed(&self) -> bool {
        self.largest_converged.is_some() && self.first_non_converged.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SweepReport<T> {
    pub config: SweepConfig<T>,
    pub runs: Vec<SweepRun<T>>,
    pub brackets: Vec<SweepBracket<T>>,
    /// Reminder that the boundary is grid data, not a certified bound.
    pub note: String,
}

impl<T: Scalar> SweepReport<T> {
    /// CSV rows `eps,n,converged,settling_time,classification`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,n,converged,settling_time,classification\n");
        for r in &self.runs {
            let settling = r
                .settling_time
                .map(|t| format!("{:.16e}", t))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:.16e},{},{},{},{}\n",
                r.epsilon,
                r.n,
                r.classification == Classification::Converged,
                settling,
                r.classification
            ));
        }
        out
    }
}

/// Runs the sweep. Grid points execute in parallel; results are merged in
/// grid order, so the report is deterministic.
pub fn epsilon_sweep<T: Scalar>(config: &SweepConfig<T>) -> Result<SweepReport<T>> {
    config.validate()?;
    let mut pairs = Vec::new();
    for &n in &config.n_list {
        for &eps in &config.eps_grid {
            pairs.push((n, eps));
        }
    }
    let runs: Vec<SweepRun<T>> = pairs
        .par_iter()
        .map(|&(n, eps)| sweep_one(n, eps, config))
        .collect::<Result<_>>()?;

    let mut brackets = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        let per_n: Vec<&SweepRun<T>> = runs.iter().filter(|r| r.n == n).collect();
        let prefix_len = per_n
            .iter()
            .take_while(|r| r.classification == Classification::Converged)
            .count();
        brackets.push(SweepBracket {
            n,
            largest_converged: prefix_len.checked_sub(1).map(|i| per_n[i].epsilon),
            first_non_converged: per_n.get(prefix_len).map(|r| r.epsilon),
        });
    }
    Ok(SweepReport {
        config: config.clone(),
        runs,
        brackets,
        note: "empirical grid classification; the reported boundary is a bracket between \
               grid points, not a certified bound"
            .into(),
    })
}

fn sweep_one<T: Scalar>(n: usize, eps: T, config: &SweepConfig<T>) -> Result<SweepRun<T>> {
    let z_star = real::<T>(n as f64);
    let cfg = ProtocolConfig::from_epsilon(n, eps, z_star)?;

    // fit the step below min(dt_max, eps/10) so that it divides the
    // horizon and the stride divides the step count
    let dt_raw = config.dt_max.min(eps * real::<T>(0.1));
    let mut steps = (config.t_end / dt_raw).to_real().ceil() as usize;
    let stride = config.record_stride;
    steps = steps.div_ceil(stride) * stride;
    let dt = config.t_end / real::<T>(steps as f64);
    let sim = SimConfig::new(dt, config.t_end, T::zero(), stride)?;

    let mut system = P1System::new(cfg);
    let x0 = SystemState::zeros(n).to_flat();
    let traj = match integrate(&mut system, &x0, &sim, &EventSchedule::empty()) {
        Ok(t) => t,
        Err(Error::Divergence { .. }) => {
            return Ok(SweepRun {
                n,
                epsilon: eps,
                classification: Classification::Diverged,
                settling_time: None,
                final_error: None,
            });
        }
        Err(e) => return Err(e),
    };

    let eq = equilibrium(&cfg).to_flat();
    let (settling, final_error) = settling_profile(&traj, &eq, config.conv_tol);
    let classification = if final_error <= config.conv_tol {
        Classification::Converged
    } else {
        Classification::Slow
    };
    Ok(SweepRun {
        n,
        epsilon: eps,
        classification,
        settling_time: if classification == Classification::Converged {
            settling
        } else {
            None
        },
        final_error: Some(final_error),
    })
}

/// Earliest recorded time after which the L2 error stays within `tol`,
/// plus the error at the horizon.
fn settling_profile<T: Scalar>(traj: &Trajectory<T>, eq: &[T], tol: T) -> (Option<T>, T) {
    let err_at = |i: usize| {
        traj.state(i)
            .iter()
            .zip(eq)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    };
    let mut settle_idx = None;
    for i in 0..traj.len() {
        if err_at(i) <= tol {
            if settle_idx.is_none() {
                settle_idx = Some(i);
            }
        } else {
            settle_idx = None;
        }
    }
    let final_error = err_at(traj.len() - 1);
    (settle_idx.map(|i| traj.time(i)), final_error)
}
