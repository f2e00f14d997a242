//! Storage coordination for a fleet of wind generators.
//!
//! Each generator feeds the grid the stator power `pe_i`, the rotor-side
//! power `pr_i`, and its storage power `x_i`. The fleet must track a
//! committed output `P_d` while every storage contributes equally. Setting
//! `z_star = P_d - sum_i (pe_i + pr_i)` turns this into the sum-constrained
//! consensus protocol: the consensus states `z_i` converge to the common
//! per-generator storage share, and each storage tracks its `z_i` through a
//! first-order lag that is much faster than the consensus loop.
//!
//! The harness runs step-change scenarios on `P_d`, with or without a
//! communication delay `r` applied to every inter-agent signal (the
//! neighbor links and the leader's aggregate sum; per-link overrides are
//! available), and evaluates fairness over a tail window.

use crate::error::{Error, Result};
use crate::protocol::{p1_derivative, p2_reference, ProtocolConfig, SystemState};
use crate::scalar::{real, Scalar};
use crate::sim::{
    grid_index, integrate_dde, DelaySystem, DelayTap, EventSchedule, SimConfig, Trajectory,
};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Deterministic per-generator wind signals `(pe, pr)` as functions of
/// time. The rotor-side signal is a constant parameter in every kind; the
/// stator signal carries the variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindProfile<T> {
    Constant {
        pe_mw: T,
        pr_mw: T,
    },
    Step {
        pe_before_mw: T,
        pe_after_mw: T,
        at_s: T,
        pr_mw: T,
    },
    Sinusoid {
        pe_mean_mw: T,
        pe_amplitude_mw: T,
        period_s: T,
        pr_mw: T,
        /// Offset each generator's phase by `2 pi i / n`.
        #[serde(default)]
        stagger: bool,
    },
    SeededNoise {
        pe_mean_mw: T,
        pe_amplitude_mw: T,
        /// Each generator holds a fresh sample for this long.
        hold_s: T,
        seed: u64,
    },
}

impl<T: Scalar> WindProfile<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: T, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "wind profile field {name} must be finite"
                )))
            }
        };
        match self {
            WindProfile::Constant { pe_mw, pr_mw } => {
                finite(*pe_mw, "pe_mw")?;
                finite(*pr_mw, "pr_mw")
            }
            WindProfile::Step {
                pe_before_mw,
                pe_after_mw,
                at_s,
                pr_mw,
            } => {
                finite(*pe_before_mw, "pe_before_mw")?;
                finite(*pe_after_mw, "pe_after_mw")?;
                finite(*pr_mw, "pr_mw")?;
                if !at_s.is_finite() || *at_s < T::zero() {
                    return Err(Error::config("wind step time must be non-negative"));
                }
                Ok(())
            }
            WindProfile::Sinusoid {
                pe_mean_mw,
                pe_amplitude_mw,
                period_s,
                pr_mw,
                ..
            } => {
                finite(*pe_mean_mw, "pe_mean_mw")?;
                finite(*pe_amplitude_mw, "pe_amplitude_mw")?;
                finite(*pr_mw, "pr_mw")?;
                if !period_s.is_finite() || *period_s <= T::zero() {
                    return Err(Error::config("sinusoid period must be positive"));
                }
                Ok(())
            }
            WindProfile::SeededNoise {
                pe_mean_mw,
                pe_amplitude_mw,
                hold_s,
                ..
            } => {
                finite(*pe_mean_mw, "pe_mean_mw")?;
                if !pe_amplitude_mw.is_finite() || *pe_amplitude_mw < T::zero() {
                    return Err(Error::config("noise amplitude must be non-negative"));
                }
                if !hold_s.is_finite() || *hold_s <= T::zero() {
                    return Err(Error::config("noise hold time must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Stator power of generator `i` (0-based of `n`) at time `t`.
    pub fn pe_at(&self, i: usize, n: usize, t: T) -> T {
        let t = t.max(T::zero());
        match self {
            WindProfile::Constant { pe_mw, .. } => *pe_mw,
            WindProfile::Step {
                pe_before_mw,
                pe_after_mw,
                at_s,
                ..
            } => {
                if t < *at_s {
                    *pe_before_mw
                } else {
                    *pe_after_mw
                }
            }
            WindProfile::Sinusoid {
                pe_mean_mw,
                pe_amplitude_mw,
                period_s,
                stagger,
                ..
            } => {
                let two_pi = real::<T>(std::f64::consts::TAU);
                let phase = if *stagger {
                    two_pi * real::<T>(i as f64) / real::<T>(n as f64)
                } else {
                    T::zero()
                };
                *pe_mean_mw + *pe_amplitude_mw * (two_pi * t / *period_s + phase).sin()
            }
            WindProfile::SeededNoise {
                pe_mean_mw,
                pe_amplitude_mw,
                hold_s,
                seed,
            } => {
                let segment = (t / *hold_s).floor().to_real() as u64;
                let u = noise_unit(*seed, i as u64, segment);
                let spread = real::<T>(2.0) * u - T::one();
                *pe_mean_mw + *pe_amplitude_mw * spread
            }
        }
    }

    /// Rotor-side power of generator `i` at time `t`.
    pub fn pr_at(&self, _i: usize, _n: usize, _t: T) -> T {
        match self {
            WindProfile::Constant { pr_mw, .. } => *pr_mw,
            WindProfile::Step { pr_mw, .. } => *pr_mw,
            WindProfile::Sinusoid { pr_mw, .. } => *pr_mw,
            WindProfile::SeededNoise { .. } => T::zero(),
        }
    }

    /// Fleet-wide sample `(pe, pr)` at time `t`.
    pub fn sample(&self, n: usize, t: T) -> (Vec<T>, Vec<T>) {
        let pe = (0..n).map(|i| self.pe_at(i, n, t)).collect();
        let pr = (0..n).map(|i| self.pr_at(i, n, t)).collect();
        (pe, pr)
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            WindProfile::SeededNoise { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

/// Uniform sample in `[0, 1)` keyed by `(seed, generator, segment)`: a
/// fresh ChaCha8 stream per key keeps the signal a pure function of time.
fn noise_unit<T: Scalar>(seed: u64, generator: u64, segment: u64) -> T {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&generator.to_le_bytes());
    key[16..24].copy_from_slice(&segment.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let bits = rng.next_u64() >> 11; // top 53 bits
    T::from_real(bits as f64 / (1u64 << 53) as f64)
}

/// First-order storage tracking: `dx/dt = (z - x) / t_storage`, so the
/// physical storage power converges to the consensus target with time
/// constant `t_storage`.
pub fn storage_dynamics<T: Scalar>(x: T, z: T, t_storage: T) -> T {
    (z - x) / t_storage
}

/// Test fixture: scales one follower's gain to break the fleet's settling
/// (a tiny factor leaves that generator far from consensus within any
/// practical window, so fairness checks fail).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFault<T> {
    /// 1-based agent index in `2..=n`.
    pub agent: usize,
    pub factor: T,
}

/// Per-link communication delay overrides (seconds); links not listed use
/// the scenario's uniform `delay_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayOverrides<T> {
    /// The leader's aggregate-sum link.
    pub aggregate: Option<T>,
    /// Neighbor links keyed by the receiving agent's 1-based index (2..=n).
    pub neighbors: BTreeMap<usize, T>,
}

impl<T> Default for DelayOverrides<T> {
    fn default() -> Self {
        Self {
            aggregate: None,
            neighbors: BTreeMap::new(),
        }
    }
}

/// Optional overrides for the fairness verdict; unset fields fall back to
/// 1% of the per-generator share, 1% of `P_d`, and 2% respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairnessTolerances<T> {
    pub fairness_tol_mw: Option<T>,
    pub power_tol_mw: Option<T>,
    pub xz_tol_rel: Option<T>,
}

impl<T> Default for FairnessTolerances<T> {
    fn default() -> Self {
        Self {
            fairness_tol_mw: None,
            power_tol_mw: None,
            xz_tol_rel: None,
        }
    }
}

/// Optional output file names, relative to the run's output directory;
/// unset fields use the defaults shown.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub trajectory_csv: Option<String>,
    pub fairness_json: Option<String>,
    pub fairness_txt: Option<String>,
}

impl OutputPaths {
    pub fn trajectory_csv(&self) -> &str {
        self.trajectory_csv.as_deref().unwrap_or("trajectory.csv")
    }

    pub fn fairness_json(&self) -> &str {
        self.fairness_json.as_deref().unwrap_or("fairness.json")
    }

    pub fn fairness_txt(&self) -> &str {
        self.fairness_txt.as_deref().unwrap_or("fairness.txt")
    }

    fn validate(&self) -> Result<()> {
        for name in [
            &self.trajectory_csv,
            &self.fairness_json,
            &self.fairness_txt,
        ]
        .into_iter()
        .flatten()
        {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(Error::config(format!(
                    "output file name '{name}' must be a plain file name"
                )));
            }
        }
        Ok(())
    }
}

fn default_record_stride() -> usize {
    10
}

fn default_tail_window<T: Scalar>() -> T {
    real(2.0)
}

/// Full scenario description; doubles as the JSON config schema of the
/// `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct WindFarmScenario<T> {
    pub n: usize,
    pub k_alpha: T,
    /// Storage tracking time constant (seconds); must stay at or below
    /// `epsilon/10` so the storage is the fastest loop.
    pub t_storage: T,
    pub dt: T,
    pub t_end: T,
    /// Uniform communication delay (seconds, integer multiple of dt).
    pub delay_r: T,
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
    /// `[time, P_d]` pairs; the first entry must be at t = 0 and sets the
    /// initial committed output.
    pub pd_schedule: Vec<(T, T)>,
    pub wind: WindProfile<T>,
    #[serde(default)]
    pub delay_overrides: DelayOverrides<T>,
    #[serde(default)]
    pub tolerances: FairnessTolerances<T>,
    /// Length (seconds) of the evaluation window ending at `t_end`.
    #[serde(default = "default_tail_window")]
    pub tail_window_s: T,
    #[serde(default)]
    pub fault: Option<GainFault<T>>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl<T: Scalar> WindFarmScenario<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("scenario needs at least 2 generators"));
        }
        if !self.k_alpha.is_finite() || self.k_alpha <= T::zero() {
            return Err(Error::config("k_alpha must be positive and finite"));
        }
        let epsilon = T::one() / self.k_alpha;
        let guard = epsilon * real::<T>(0.1) * (T::one() + real::<T>(1e-9));
        if !self.t_storage.is_finite() || self.t_storage <= T::zero() || self.t_storage > guard {
            return Err(Error::config(format!(
                "t_storage must be in (0, epsilon/10] = (0, {}]",
                epsilon * real::<T>(0.1)
            )));
        }
        if self.dt > guard {
            return Err(Error::config(format!(
                "dt = {} violates the stiffness guard dt <= epsilon/10 = {}",
                self.dt,
                epsilon * real::<T>(0.1)
            )));
        }
        let sim = self.sim_config()?;
        sim.validate()?;
        if !self.tail_window_s.is_finite()
            || self.tail_window_s <= T::zero()
            || self.tail_window_s > self.t_end
        {
            return Err(Error::config("tail_window_s must be in (0, t_end]"));
        }
        if self.pd_schedule.is_empty() {
            return Err(Error::config(
                "pd_schedule must contain at least the initial P_d",
            ));
        }
        if self.pd_schedule[0].0 != T::zero() {
            return Err(Error::config(
                "pd_schedule must start with an entry at t = 0",
            ));
        }
        EventSchedule::new(self.pd_schedule[1..].to_vec())?;
        for &(t, _) in &self.pd_schedule[1..] {
            grid_index(t, self.dt, "pd_schedule time")?;
            if t > self.t_end {
                return Err(Error::config(
                    "pd_schedule times must lie within the horizon",
                ));
            }
        }
        self.wind.validate()?;
        if let Some(agg) = self.delay_overrides.aggregate {
            grid_index(agg, self.dt, "aggregate delay override")?;
        }
        for (&agent, &r) in &self.delay_overrides.neighbors {
            if agent < 2 || agent > self.n {
                return Err(Error::config(format!(
                    "neighbor delay override for agent {agent} is outside 2..={}",
                    self.n
                )));
            }
            grid_index(r, self.dt, "neighbor delay override")?;
        }
        if let Some(fault) = &self.fault {
            if fault.agent < 2 || fault.agent > self.n {
                return Err(Error::config(format!(
                    "fault agent {} is outside 2..={}",
                    fault.agent, self.n
                )));
            }
            if !fault.factor.is_finite() || fault.factor <= T::zero() {
                return Err(Error::config("fault factor must be positive and finite"));
            }
        }
        self.output.validate()?;
        Ok(())
    }

    pub fn epsilon(&self) -> T {
        T::one() / self.k_alpha
    }

    fn sim_config(&self) -> Result<SimConfig<T>> {
        SimConfig::new(self.dt, self.t_end, self.delay_r, self.record_stride)
    }

    /// Committed output in force at time `t`.
    pub fn pd_at(&self, t: T) -> T {
        let mut pd = self.pd_schedule[0].1;
        for &(time, value) in &self.pd_schedule {
            if time <= t {
                pd = value;
            } else {
                break;
            }
        }
        pd
    }

    pub fn last_event_time(&self) -> T {
        self.pd_schedule
            .last()
            .map(|&(t, _)| t)
            .unwrap_or_else(T::zero)
    }

    /// Column labels of the scenario state `[xi_h, z_1.., x_1..]`.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = vec!["xi_h".to_string()];
        labels.extend((1..=self.n).map(|i| format!("z_{i}")));
        labels.extend((1..=self.n).map(|i| format!("x_{i}")));
        labels
    }
}

/// Per-generator snapshot at one instant: signals plus the two states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindGenerator<T> {
    /// 1-based index; 1 is the leader.
    pub id: usize,
    pub pe: T,
    pub pr: T,
    /// Storage power (positive discharging).
    pub x: T,
    /// Consensus state, the storage target.
    pub z: T,
}

/// Decodes a flat scenario state row into per-generator snapshots.
pub fn generator_snapshots<T: Scalar>(
    scenario: &WindFarmScenario<T>,
    state: &[T],
    t: T,
) -> Result<Vec<WindGenerator<T>>> {
    let n = scenario.n;
    if state.len() != 2 * n + 1 {
        return Err(Error::config(format!(
            "state has {} entries, expected {}",
            state.len(),
            2 * n + 1
        )));
    }
    Ok((0..n)
        .map(|i| WindGenerator {
            id: i + 1,
            pe: scenario.wind.pe_at(i, n, t),
            pr: scenario.wind.pr_at(i, n, t),
            z: state[1 + i],
            x: state[1 + n + i],
        })
        .collect())
}

/// The coupled scenario dynamics over `[xi_h, z_1..z_n, x_1..x_n]`.
///
/// Followers read their neighbor's consensus state through the delayed
/// link; the leader assembles the aggregate from its own live state plus
/// the delayed per-generator bundles `(pe_i + z_i + pr_i)(t - r)`. With
/// all delays zero this is exactly the undelayed protocol plus storage.
pub struct WindFarmSystem<T> {
    n: usize,
    k_alpha: T,
    t_storage: T,
    pd: T,
    wind: WindProfile<T>,
    aggregate_lag: usize,
    aggregate_delay_s: T,
    neighbor_lags: Vec<usize>,
    fault: Option<(usize, T)>,
}

impl<T: Scalar> WindFarmSystem<T> {
    pub fn new(scenario: &WindFarmScenario<T>) -> Result<Self> {
        scenario.validate()?;
        let agg_s = scenario
            .delay_overrides
            .aggregate
            .unwrap_or(scenario.delay_r);
        let aggregate_lag = grid_index(agg_s, scenario.dt, "aggregate delay")?;
        // neighbor_lags[j] is the incoming-link lag of 0-based follower j
        let mut neighbor_lags = vec![0usize; scenario.n];
        for (j, lag) in neighbor_lags.iter_mut().enumerate().skip(1) {
            let r = scenario
                .delay_overrides
                .neighbors
                .get(&(j + 1))
                .copied()
                .unwrap_or(scenario.delay_r);
            *lag = grid_index(r, scenario.dt, "neighbor delay")?;
        }
        Ok(Self {
            n: scenario.n,
            k_alpha: scenario.k_alpha,
            t_storage: scenario.t_storage,
            pd: scenario.pd_schedule[0].1,
            wind: scenario.wind.clone(),
            aggregate_lag,
            aggregate_delay_s: agg_s,
            neighbor_lags,
            fault: scenario.fault.as_ref().map(|f| (f.agent - 1, f.factor)),
        })
    }
}

impl<T: Scalar> DelaySystem<T> for WindFarmSystem<T> {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }

    fn max_lag_steps(&self) -> usize {
        self.neighbor_lags
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(self.aggregate_lag)
    }

    fn rhs(&self, t: T, x: &[T], delayed: &DelayTap<'_, T>, dx: &mut [T]) {
        let n = self.n;
        let k = self.k_alpha;
        // wind bundles travel with the consensus values: followers'
        // signals are seen by the leader at the aggregate-link age
        let t_agg = t - self.aggregate_delay_s;
        let mut available = self.wind.pe_at(0, n, t) + self.wind.pr_at(0, n, t);
        for j in 1..n {
            available = available + (self.wind.pe_at(j, n, t_agg) + self.wind.pr_at(j, n, t_agg));
        }
        let z_star_now = self.pd - available;
        let mut sum_z = x[1];
        for j in 1..n {
            sum_z = sum_z + delayed.get(self.aggregate_lag, 1 + j);
        }
        dx[0] = z_star_now - sum_z;

        dx[1] = -k * (x[1] - x[0]);
        for j in 1..n {
            let neighbor = delayed.get(self.neighbor_lags[j], 1 + (j - 1));
            let mut gain = k;
            if let Some((agent, factor)) = self.fault {
                if agent == j {
                    gain = k * factor;
                }
            }
            dx[1 + j] = -gain * (x[1 + j] - neighbor);
        }
        for j in 0..n {
            dx[1 + n + j] = storage_dynamics(x[1 + n + j], x[1 + j], self.t_storage);
        }
    }

    fn apply_event(&mut self, new_reference: T) {
        self.pd = new_reference;
    }
}

/// Undelayed, fault-free scenario vector field, expressed by delegation:
/// the consensus block is the protocol derivative with the substituted
/// reference `z_star = P_d - sum(pe + pr)`, the storage block is the
/// first-order tracking law.
pub fn p2_derivative<T: Scalar>(
    scenario: &WindFarmScenario<T>,
    state: &[T],
    t: T,
) -> Result<Vec<T>> {
    let n = scenario.n;
    if state.len() != 2 * n + 1 {
        return Err(Error::config(format!(
            "state has {} entries, expected {}",
            state.len(),
            2 * n + 1
        )));
    }
    let (pe, pr) = scenario.wind.sample(n, t);
    let z_star = p2_reference(scenario.pd_at(t), &pe, &pr)?;
    let cfg = ProtocolConfig::new(n, scenario.k_alpha, z_star)?;
    let consensus = SystemState {
        xi_h: state[0],
        z: state[1..=n].to_vec(),
    };
    let d = p1_derivative(&consensus, &cfg)?;
    let mut out = Vec::with_capacity(2 * n + 1);
    out.push(d.d_xi_h);
    out.extend_from_slice(&d.d_z);
    for j in 0..n {
        out.push(storage_dynamics(
            state[1 + n + j],
            state[1 + j],
            scenario.t_storage,
        ));
    }
    Ok(out)
}

/// Physical fleet output `sum_i (pe_i(t) + pr_i(t) + x_i)`; uses the
/// storage state, not the consensus target.
pub fn total_output<T: Scalar>(scenario: &WindFarmScenario<T>, state: &[T], t: T) -> Result<T> {
    let n = scenario.n;
    if state.len() != 2 * n + 1 {
        return Err(Error::config("state length mismatch"));
    }
    let mut total = T::zero();
    for j in 0..n {
        total =
            total + scenario.wind.pe_at(j, n, t) + scenario.wind.pr_at(j, n, t) + state[1 + n + j];
    }
    Ok(total)
}

/// Fairness metrics over an evaluation window: the storage spread
/// `max_{i,j} |x_i - x_j|`, the total storage power, and the tracking
/// mismatch `|P_d - total_output|`, evaluated at the window's final
/// sample, worst-case over the window, and window-averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport<T> {
    pub window: (T, T),
    /// Worst spread over the window.
    pub spread: T,
    pub spread_final: T,
    pub spread_avg: T,
    /// Total storage power at the window's final sample.
    pub sum_storage: T,
    /// Worst tracking mismatch over the window.
    pub mismatch: T,
    pub mismatch_final: T,
    pub mismatch_avg: T,
    /// Worst relative gap between storage and its consensus target.
    pub max_xz_gap_rel: T,
    pub fairness_tol_mw: T,
    pub power_tol_mw: T,
    pub xz_tol_rel: T,
    pub fair: bool,
    /// Present when the wind profile is seeded noise.
    pub seed: Option<u64>,
}

impl<T: Scalar> FairnessReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "fairness over window [{}, {}]: {}\n",
            self.window.0,
            self.window.1,
            if self.fair { "FAIR" } else { "NOT FAIR" }
        ));
        out.push_str(&format!(
            "  storage spread   max {:.6e}  final {:.6e}  avg {:.6e}  (tol {:.3e} MW)\n",
            self.spread, self.spread_final, self.spread_avg, self.fairness_tol_mw
        ));
        out.push_str(&format!(
            "  tracking mismatch max {:.6e}  final {:.6e}  avg {:.6e}  (tol {:.3e} MW)\n",
            self.mismatch, self.mismatch_final, self.mismatch_avg, self.power_tol_mw
        ));
        out.push_str(&format!(
            "  total storage power {:.6e} MW\n",
            self.sum_storage
        ));
        out.push_str(&format!(
            "  storage/target gap {:.6e} (tol {:.3e} relative)\n",
            self.max_xz_gap_rel, self.xz_tol_rel
        ));
        if let Some(seed) = self.seed {
            out.push_str(&format!("  wind noise seed {seed}\n"));
        }
        out
    }
}

/// Evaluates fairness over `[window.0, window.1]` on a recorded scenario
/// trajectory.
pub fn fairness_report<T: Scalar>(
    scenario: &WindFarmScenario<T>,
    traj: &Trajectory<T>,
    window: (T, T),
) -> Result<FairnessReport<T>> {
    let n = scenario.n;
    if traj.dim() != 2 * n + 1 {
        return Err(Error::config(
            "trajectory dimension does not match the scenario",
        ));
    }
    if traj.is_empty() {
        return Err(Error::config("trajectory is empty"));
    }
    let span = (traj.time(0), traj.time(traj.len() - 1));
    if !window.0.is_finite()
        || !window.1.is_finite()
        || window.0 < span.0
        || window.1 > span.1
        || window.0 > window.1
    {
        return Err(Error::config(format!(
            "window [{}, {}] is outside the trajectory span [{}, {}]",
            window.0, window.1, span.0, span.1
        )));
    }
    let rows = traj.window_indices(window.0, window.1);
    if rows.is_empty() {
        return Err(Error::config(
            "evaluation window contains no recorded samples",
        ));
    }

    let floor = real::<T>(1e-6);
    let mut spread_max = T::zero();
    let mut spread_sum = T::zero();
    let mut mismatch_max = T::zero();
    let mut mismatch_sum = T::zero();
    let mut xz_gap_max = T::zero();
    let mut spread_final = T::zero();
    let mut mismatch_final = T::zero();
    let mut sum_storage_final = T::zero();
    for (pos, &i) in rows.iter().enumerate() {
        let t = traj.time(i);
        let state = traj.state(i);
        let xs = &state[1 + n..];
        let zs = &state[1..=n];
        let hi = xs.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let lo = xs.iter().fold(T::infinity(), |a, &v| a.min(v));
        let spread = hi - lo;
        let mismatch = (scenario.pd_at(t) - total_output(scenario, state, t)?).abs();
        for j in 0..n {
            let gap = (xs[j] - zs[j]).abs() / zs[j].abs().max(floor);
            xz_gap_max = xz_gap_max.max(gap);
        }
        spread_max = spread_max.max(spread);
        mismatch_max = mismatch_max.max(mismatch);
        spread_sum = spread_sum + spread;
        mismatch_sum = mismatch_sum + mismatch;
        if pos == rows.len() - 1 {
            spread_final = spread;
            mismatch_final = mismatch;
            sum_storage_final = xs.iter().fold(T::zero(), |a, &v| a + v);
        }
    }
    let count = real::<T>(rows.len() as f64);

    // default tolerances: 1% of the per-generator share and 1% of P_d
    let t_hi = window.1;
    let (pe, pr) = scenario.wind.sample(n, t_hi);
    let z_star_final = p2_reference(scenario.pd_at(t_hi), &pe, &pr)?;
    let one_pct = real::<T>(0.01);
    let fairness_tol = scenario
        .tolerances
        .fairness_tol_mw
        .unwrap_or_else(|| (one_pct * z_star_final.abs() / real::<T>(n as f64)).max(floor));
    let power_tol = scenario
        .tolerances
        .power_tol_mw
        .unwrap_or_else(|| (one_pct * scenario.pd_at(t_hi).abs()).max(floor));
    let xz_tol = scenario
        .tolerances
        .xz_tol_rel
        .unwrap_or_else(|| real::<T>(0.02));

    Ok(FairnessReport {
        window,
        spread: spread_max,
        spread_final,
        spread_avg: spread_sum / count,
        sum_storage: sum_storage_final,
        mismatch: mismatch_max,
        mismatch_final,
        mismatch_avg: mismatch_sum / count,
        max_xz_gap_rel: xz_gap_max,
        fairness_tol_mw: fairness_tol,
        power_tol_mw: power_tol,
        xz_tol_rel: xz_tol,
        fair: spread_max <= fairness_tol && mismatch_max <= power_tol,
        seed: scenario.wind.seed(),
    })
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioResult<T> {
    pub trajectory: Trajectory<T>,
    pub fairness: FairnessReport<T>,
    /// Time from the last reference event until the fleet output stays
    /// within the tracking band; `None` if it never settles.
    pub settling_time: Option<T>,
    pub pd_final: T,
}

/// Runs a scenario from rest (`xi_h = z = x = 0`) and evaluates the tail
/// window ending at the horizon.
pub fn run_scenario<T: Scalar>(scenario: &WindFarmScenario<T>) -> Result<ScenarioResult<T>> {
    scenario.validate()?;
    let mut system = WindFarmSystem::new(scenario)?;
    let sim = scenario.sim_config()?;
    let events = EventSchedule::new(scenario.pd_schedule[1..].to_vec())?;
    let x0 = vec![T::zero(); 2 * scenario.n + 1];
    let mut traj = integrate_dde(&mut system, &x0, &sim, &events)?;
    traj.set_labels(scenario.labels())?;

    let window = (scenario.t_end - scenario.tail_window_s, scenario.t_end);
    let fairness = fairness_report(scenario, &traj, window)?;
    let settling_time = settling_after_last_event(scenario, &traj, fairness.power_tol_mw)?;
    Ok(ScenarioResult {
        trajectory: traj,
        fairness,
        settling_time,
        pd_final: scenario.pd_at(scenario.t_end),
    })
}

/// First recorded time after the last reference event from which the
/// tracking mismatch stays within `band` for the rest of the run,
/// expressed as an offset from that event.
pub fn settling_after_last_event<T: Scalar>(
    scenario: &WindFarmScenario<T>,
    traj: &Trajectory<T>,
    band: T,
) -> Result<Option<T>> {
    let t_ref = scenario.last_event_time();
    let mut settle: Option<T> = None;
    for i in 0..traj.len() {
        let t = traj.time(i);
        if t < t_ref {
            continue;
        }
        let mismatch = (scenario.pd_at(t) - total_output(scenario, traj.state(i), t)?).abs();
        if mismatch <= band {
            if settle.is_none() {
                settle = Some(t - t_ref);
            }
        } else {
            settle = None;
        }
    }
    Ok(settle)
}
