//! Leader-follower consensus protocol with a sum constraint.
//!
//! A fleet of `n` agents agrees on a common value subject to
//! `sum(z_i) = z_star`. Agent 1 is the leader and carries an auxiliary
//! integrator `xi_h` that accumulates the sum mismatch; every other agent
//! chases its chain neighbor:
//!
//! ```text
//! d(xi_h)/dt = z_star - sum_i z_i
//! d(z_1)/dt  = -k_alpha (z_1 - xi_h)
//! d(z_i)/dt  = -k_alpha (z_i - z_{i-1})      i = 2..n
//! ```
//!
//! For large `k_alpha` the consensus states are fast relative to the
//! integrator; `epsilon = 1/k_alpha` is the time-scale separation
//! parameter used throughout the stability analysis and the sweep tooling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::OdeSystem;
use serde::{Deserialize, Serialize};

/// Protocol parameters: agent count, uniform gain, and the sum target.
///
/// `epsilon` is always derived as `1/k_alpha`; it is never stored, so the
/// two can not drift apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig<T> {
    n: usize,
    k_alpha: T,
    z_star: T,
}

impl<T: Scalar> ProtocolConfig<T> {
    /// Builds a config from the gain. Requires `n >= 2` (a leader and at
    /// least one follower) and a positive finite gain.
    pub fn new(n: usize, k_alpha: T, z_star: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::config(format!(
                "agent count must be at least 2, got {n}"
            )));
        }
        if !k_alpha.is_finite() || k_alpha <= T::zero() {
            return Err(Error::config("gain k_alpha must be positive and finite"));
        }
        if !z_star.is_finite() {
            return Err(Error::config("z_star must be finite"));
        }
        Ok(Self { n, k_alpha, z_star })
    }

    /// Builds a config from the time-scale parameter, storing `1/epsilon`
    /// as the gain.
    pub fn from_epsilon(n: usize, epsilon: T, z_star: T) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= T::zero() {
            return Err(Error::config("epsilon must be positive and finite"));
        }
        Self::new(n, T::one() / epsilon, z_star)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_alpha(&self) -> T {
        self.k_alpha
    }

    /// Time-scale separation parameter, derived as `1/k_alpha`.
    pub fn epsilon(&self) -> T {
        T::one() / self.k_alpha
    }

    pub fn z_star(&self) -> T {
        self.z_star
    }

    /// Replaces the sum target (used by step events).
    pub fn set_z_star(&mut self, z_star: T) -> Result<()> {
        if !z_star.is_finite() {
            return Err(Error::config("z_star must be finite"));
        }
        self.z_star = z_star;
        Ok(())
    }
}

/// Full protocol state: leader integrator plus the consensus vector.
/// `z[0]` is the leader's consensus state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState<T> {
    pub xi_h: T,
    pub z: Vec<T>,
}

impl<T: Scalar> SystemState<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            xi_h: T::zero(),
            z: vec![T::zero(); n],
        }
    }

    /// Checks the dimension against a config and that every entry is
    /// finite; a non-finite entry is a simulation fault, not valid data.
    pub fn validate(&self, cfg: &ProtocolConfig<T>) -> Result<()> {
        if self.z.len() != cfg.n() {
            return Err(Error::config(format!(
                "state has {} consensus entries, config expects {}",
                self.z.len(),
                cfg.n()
            )));
        }
        if !self.xi_h.is_finite() || self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("state entries must be finite"));
        }
        Ok(())
    }

    /// Flat layout `[xi_h, z_1, .., z_n]` used by the integrators.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(1 + self.z.len());
        v.push(self.xi_h);
        v.extend_from_slice(&self.z);
        v
    }

    pub fn from_flat(flat: &[T]) -> Result<Self> {
        if flat.is_empty() {
            return Err(Error::config("flat state must have at least one entry"));
        }
        Ok(Self {
            xi_h: flat[0],
            z: flat[1..].to_vec(),
        })
    }
}

/// Time derivative of a [`SystemState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative<T> {
    pub d_xi_h: T,
    pub d_z: Vec<T>,
}

/// State in the shifted coordinates used by the stability analysis:
/// `psi_h = xi_h - z_star/n` and `y_i = z_i - xi_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedState<T> {
    pub psi_h: T,
    pub y: Vec<T>,
}

/// Time derivative of a [`ShiftedState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDerivative<T> {
    pub d_psi_h: T,
    pub d_y: Vec<T>,
}

/// Right-hand side of the protocol at `state`.
pub fn p1_derivative<T: Scalar>(
    state: &SystemState<T>,
    cfg: &ProtocolConfig<T>,
) -> Result<StateDerivative<T>> {
    state.validate(cfg)?;
    let k = cfg.k_alpha();
    let sum_z = state.z.iter().fold(T::zero(), |acc, &v| acc + v);
    let d_xi_h = cfg.z_star() - sum_z;
    let mut d_z = Vec::with_capacity(cfg.n());
    d_z.push(-k * (state.z[0] - state.xi_h));
    for i in 1..cfg.n() {
        d_z.push(-k * (state.z[i] - state.z[i - 1]));
    }
    Ok(StateDerivative { d_xi_h, d_z })
}

/// The unique equilibrium: `xi_h = z_star/n` and every consensus state
/// equal to it, i.e. the point of the consensus subspace that meets the
/// sum constraint.
pub fn equilibrium<T: Scalar>(cfg: &ProtocolConfig<T>) -> SystemState<T> {
    let beta = cfg.z_star() / T::from_real(cfg.n() as f64);
    SystemState {
        xi_h: beta,
        z: vec![beta; cfg.n()],
    }
}

/// Moves the equilibrium to the origin: `psi_h = xi_h - z_star/n`,
/// `y_i = z_i - xi_h`.
pub fn to_shifted<T: Scalar>(state: &SystemState<T>, cfg: &ProtocolConfig<T>) -> ShiftedState<T> {
    let xi_h0 = cfg.z_star() / T::from_real(cfg.n() as f64);
    ShiftedState {
        psi_h: state.xi_h - xi_h0,
        y: state.z.iter().map(|&z| z - state.xi_h).collect(),
    }
}

/// Inverse of [`to_shifted`].
pub fn from_shifted<T: Scalar>(
    shifted: &ShiftedState<T>,
    cfg: &ProtocolConfig<T>,
) -> SystemState<T> {
    let xi_h0 = cfg.z_star() / T::from_real(cfg.n() as f64);
    let xi_h = shifted.psi_h + xi_h0;
    SystemState {
        xi_h,
        z: shifted.y.iter().map(|&y| y + xi_h).collect(),
    }
}

/// Shifted-coordinate vector field, written directly in `(psi_h, y)`:
///
/// ```text
/// d(psi_h)/dt = -n psi_h - sum_i y_i
/// d(y_1)/dt   = -k_alpha y_1             - d(psi_h)/dt
/// d(y_i)/dt   = -k_alpha (y_i - y_{i-1}) - d(psi_h)/dt
/// ```
///
/// Used to cross-check the coordinate change against [`p1_derivative`].
pub fn shifted_derivative<T: Scalar>(
    shifted: &ShiftedState<T>,
    cfg: &ProtocolConfig<T>,
) -> Result<ShiftedDerivative<T>> {
    if shifted.y.len() != cfg.n() {
        return Err(Error::config(format!(
            "shifted state has {} entries, config expects {}",
            shifted.y.len(),
            cfg.n()
        )));
    }
    let k = cfg.k_alpha();
    let n_t = T::from_real(cfg.n() as f64);
    let sum_y = shifted.y.iter().fold(T::zero(), |acc, &v| acc + v);
    let d_psi_h = -n_t * shifted.psi_h - sum_y;
    let mut d_y = Vec::with_capacity(cfg.n());
    d_y.push(-k * shifted.y[0] - d_psi_h);
    for i in 1..cfg.n() {
        d_y.push(-k * (shifted.y[i] - shifted.y[i - 1]) - d_psi_h);
    }
    Ok(ShiftedDerivative { d_psi_h, d_y })
}

/// Sum target that turns the protocol into the storage-coordination
/// protocol: `z_star = p_d - sum_i (pe_i + pr_i)`, the committed output
/// minus the power currently available from the fleet.
pub fn p2_reference<T: Scalar>(p_d: T, pe: &[T], pr: &[T]) -> Result<T> {
    if pe.len() != pr.len() {
        return Err(Error::config(format!(
            "pe has {} entries but pr has {}",
            pe.len(),
            pr.len()
        )));
    }
    let available = pe
        .iter()
        .zip(pr)
        .fold(T::zero(), |acc, (&e, &r)| acc + (e + r));
    Ok(p_d - available)
}

/// Dense matrix form of the undelayed protocol, `x' = A x + b` over the
/// flat layout `[xi_h, z]`. This is what the matrix-exponential oracle
/// integrates.
pub fn p1_system_matrix<T: Scalar>(cfg: &ProtocolConfig<T>) -> (crate::linalg::Matrix<T>, Vec<T>) {
    let n = cfg.n();
    let k = cfg.k_alpha();
    let mut a = crate::linalg::Matrix::zeros(n + 1, n + 1);
    for j in 1..=n {
        a[(0, j)] = -T::one();
    }
    a[(1, 0)] = k;
    a[(1, 1)] = -k;
    for i in 2..=n {
        a[(i, i)] = -k;
        a[(i, i - 1)] = k;
    }
    let mut b = vec![T::zero(); n + 1];
    b[0] = cfg.z_star();
    (a, b)
}

/// The protocol as an integrable system over the flat layout
/// `[xi_h, z_1..z_n]`. Step events replace `z_star`.
#[derive(Debug, Clone)]
pub struct P1System<T> {
    cfg: ProtocolConfig<T>,
}

impl<T: Scalar> P1System<T> {
    pub fn new(cfg: ProtocolConfig<T>) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &ProtocolConfig<T> {
        &self.cfg
    }
}

impl<T: Scalar> OdeSystem<T> for P1System<T> {
    fn dim(&self) -> usize {
        self.cfg.n() + 1
    }

    fn rhs(&self, _t: T, x: &[T], dx: &mut [T]) {
        let n = self.cfg.n();
        let k = self.cfg.k_alpha();
        let sum_z = x[1..=n].iter().fold(T::zero(), |acc, &v| acc + v);
        dx[0] = self.cfg.z_star() - sum_z;
        dx[1] = -k * (x[1] - x[0]);
        for i in 2..=n {
            dx[i] = -k * (x[i] - x[i - 1]);
        }
    }

    fn apply_event(&mut self, new_reference: T) {
        // schedules are validated before integration starts
        self.cfg.z_star = new_reference;
    }
}
