//! Fixed-step integration engines and the matrix-exponential oracle.

use super::buffer::{DelayBuffer, DelayTap};
use super::{norm_inf, EventSchedule, SimConfig, Trajectory, DIVERGENCE_NORM};
use crate::error::{Error, Result};
use crate::linalg::{expm, Matrix};
use crate::protocol::{P1System, ProtocolConfig, SystemState};
use crate::scalar::{real, Scalar};

/// An autonomous-in-structure ODE `x' = f(t, x)` whose reference value can
/// be replaced by scheduled events.
pub trait OdeSystem<T: Scalar> {
    fn dim(&self) -> usize;
    fn rhs(&self, t: T, x: &[T], dx: &mut [T]);
    /// Applies a scheduled reference change (`z_star` / `P_d` step).
    fn apply_event(&mut self, new_reference: T);
}

/// A delay system `x' = f(t, x, x(t - r_1), ..)` with lags fixed in steps.
///
/// The right-hand side reads delayed values through a [`DelayTap`]; lag 0
/// is the live stage vector, so an all-zero-lag system reduces exactly to
/// the undelayed integrator.
pub trait DelaySystem<T: Scalar> {
    fn dim(&self) -> usize;
    /// Largest lag (in steps) the right-hand side will request.
    fn max_lag_steps(&self) -> usize;
    fn rhs(&self, t: T, x: &[T], delayed: &DelayTap<'_, T>, dx: &mut [T]);
    fn apply_event(&mut self, new_reference: T);
}

struct OdeAsDelay<'a, S>(&'a mut S);

impl<T: Scalar, S: OdeSystem<T>> DelaySystem<T> for OdeAsDelay<'_, S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn max_lag_steps(&self) -> usize {
        0
    }

    fn rhs(&self, t: T, x: &[T], _delayed: &DelayTap<'_, T>, dx: &mut [T]) {
        self.0.rhs(t, x, dx);
    }

    fn apply_event(&mut self, new_reference: T) {
        self.0.apply_event(new_reference);
    }
}

/// Integrates an ODE system over the configured horizon, applying events
/// at their step boundaries. Identical inputs produce bit-identical
/// trajectories.
pub fn integrate<T: Scalar, S: OdeSystem<T>>(
    system: &mut S,
    x0: &[T],
    sim: &SimConfig<T>,
    events: &EventSchedule<T>,
) -> Result<Trajectory<T>> {
    integrate_dde(&mut OdeAsDelay(system), x0, sim, events)
}

/// Method-of-steps integration of a delay system. The delayed terms are
/// read from the history buffer at the step's base time and held across
/// the internal RK stages; with every lag zero this is classical RK4.
pub fn integrate_dde<T: Scalar, S: DelaySystem<T>>(
    system: &mut S,
    x0: &[T],
    sim: &SimConfig<T>,
    events: &EventSchedule<T>,
) -> Result<Trajectory<T>> {
    sim.validate()?;
    let dim = system.dim();
    if x0.len() != dim {
        return Err(Error::config(format!(
            "initial state has {} entries, system dimension is {dim}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("initial state must be finite"));
    }
    let n_steps = sim.n_steps()?;
    let event_steps = events.to_step_indices(sim)?;

    let dt = sim.dt;
    let half = dt * real::<T>(0.5);
    let sixth = dt / real::<T>(6.0);
    let two = real::<T>(2.0);
    let blowup = real::<T>(DIVERGENCE_NORM);

    let mut buffer = DelayBuffer::new(system.max_lag_steps(), dt, x0);
    let mut x = x0.to_vec();
    let mut k1 = vec![T::zero(); dim];
    let mut k2 = vec![T::zero(); dim];
    let mut k3 = vec![T::zero(); dim];
    let mut k4 = vec![T::zero(); dim];
    let mut xs = vec![T::zero(); dim];

    let mut traj = Trajectory::with_capacity(dim, n_steps / sim.record_stride + 1, Some(*sim));
    traj.push(T::zero(), &x);

    let mut next_event = 0usize;
    for step in 0..n_steps {
        while next_event < event_steps.len() && event_steps[next_event].0 == step {
            system.apply_event(event_steps[next_event].1);
            next_event += 1;
        }
        let t = T::from_real(step as f64) * dt;

        system.rhs(t, &x, &DelayTap::new(&x, &buffer), &mut k1);
        for i in 0..dim {
            xs[i] = x[i] + half * k1[i];
        }
        system.rhs(t + half, &xs, &DelayTap::new(&xs, &buffer), &mut k2);
        for i in 0..dim {
            xs[i] = x[i] + half * k2[i];
        }
        system.rhs(t + half, &xs, &DelayTap::new(&xs, &buffer), &mut k3);
        for i in 0..dim {
            xs[i] = x[i] + dt * k3[i];
        }
        system.rhs(t + dt, &xs, &DelayTap::new(&xs, &buffer), &mut k4);
        for i in 0..dim {
            x[i] = x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }

        let t_next = T::from_real((step + 1) as f64) * dt;
        if x.iter().any(|v| !v.is_finite()) || norm_inf(&x) > blowup {
            return Err(Error::Divergence {
                t: t_next.to_real(),
                detail: "state became non-finite or exceeded the divergence norm".into(),
            });
        }
        buffer.push(t_next, &x);
        if (step + 1) % sim.record_stride == 0 {
            traj.push(t_next, &x);
        }
    }
    // events scheduled exactly at t_end still update the reference
    while next_event < event_steps.len() {
        system.apply_event(event_steps[next_event].1);
        next_event += 1;
    }
    Ok(traj)
}

/// Linear delay system `y' = A0 y(t) + A1 y(t - r)` with constant
/// pre-history, integrated by the method of steps. With `delay_r = 0` the
/// run matches the undelayed integrator on `A0 + A1`.
pub fn integrate_delayed<T: Scalar>(
    a0: &Matrix<T>,
    a1: &Matrix<T>,
    history: &[T],
    sim: &SimConfig<T>,
) -> Result<Trajectory<T>> {
    if !a0.is_square() || !a1.is_square() || a0.rows() != a1.rows() {
        return Err(Error::config("A0 and A1 must be square with equal size"));
    }
    if history.len() != a0.rows() {
        return Err(Error::config(format!(
            "history has {} entries, system dimension is {}",
            history.len(),
            a0.rows()
        )));
    }
    let lag = sim.delay_steps()?;
    let mut system = LinearDde { a0, a1, lag };
    let mut traj = integrate_dde(&mut system, history, sim, &EventSchedule::empty())?;
    traj.set_labels((1..=a0.rows()).map(|i| format!("y_{i}")).collect())?;
    Ok(traj)
}

struct LinearDde<'a, T> {
    a0: &'a Matrix<T>,
    a1: &'a Matrix<T>,
    lag: usize,
}

impl<T: Scalar> DelaySystem<T> for LinearDde<'_, T> {
    fn dim(&self) -> usize {
        self.a0.rows()
    }

    fn max_lag_steps(&self) -> usize {
        self.lag
    }

    fn rhs(&self, _t: T, x: &[T], delayed: &DelayTap<'_, T>, dx: &mut [T]) {
        let n = self.a0.rows();
        for (i, out) in dx.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, &xj) in x.iter().enumerate() {
                acc = acc + self.a0[(i, j)] * xj;
            }
            for j in 0..n {
                let a = self.a1[(i, j)];
                if a != T::zero() {
                    acc = acc + a * delayed.get(self.lag, j);
                }
            }
            *out = acc;
        }
    }

    fn apply_event(&mut self, _new_reference: T) {}
}

/// Runs the undelayed protocol from `x0`, enforcing the stiffness guard
/// `dt <= epsilon/10` for the two-time-scale system. The trajectory
/// columns are labeled `xi_h, z_1..z_n`.
pub fn run_protocol<T: Scalar>(
    cfg: &ProtocolConfig<T>,
    x0: &SystemState<T>,
    sim: &SimConfig<T>,
    events: &EventSchedule<T>,
) -> Result<Trajectory<T>> {
    x0.validate(cfg)?;
    check_stiffness_guard(sim.dt, cfg.epsilon())?;
    let mut system = P1System::new(*cfg);
    let mut traj = integrate(&mut system, &x0.to_flat(), sim, events)?;
    let mut labels = vec!["xi_h".to_string()];
    labels.extend((1..=cfg.n()).map(|i| format!("z_{i}")));
    traj.set_labels(labels)?;
    Ok(traj)
}

pub(crate) fn check_stiffness_guard<T: Scalar>(dt: T, epsilon: T) -> Result<()> {
    let limit = epsilon * real::<T>(0.1);
    if dt > limit * (T::one() + real::<T>(1e-9)) {
        return Err(Error::config(format!(
            "dt = {dt} violates the stiffness guard dt <= epsilon/10 = {limit}"
        )));
    }
    Ok(())
}

/// Closed-form solution of `x' = A x + b` at time `t`, via the matrix
/// exponential of the augmented system `[[A, b], [0, 0]]`. This is the
/// oracle the fixed-step integrator is tested against; it never touches
/// the RK path.
pub fn analytic_linear_solution<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    x0: &[T],
    t: T,
) -> Result<Vec<T>> {
    if !a.is_square() {
        return Err(Error::config("A must be square"));
    }
    let n = a.rows();
    if b.len() != n || x0.len() != n {
        return Err(Error::config("b and x0 must match the dimension of A"));
    }
    if !t.is_finite() || t < T::zero() {
        return Err(Error::config("t must be non-negative and finite"));
    }
    let (phi, psi) = transition(a, b, t)?;
    let mut x = phi.matvec(x0)?;
    for i in 0..n {
        x[i] = x[i] + psi[i];
    }
    Ok(x)
}

/// States of `x' = A x + b` at the uniform instants `0, dt, 2 dt, ..`,
/// propagated with a single exact transition matrix per step.
pub fn analytic_linear_trajectory<T: Scalar>(
    a: &Matrix<T>,
    b: &[T],
    x0: &[T],
    dt: T,
    n_points: usize,
) -> Result<Vec<Vec<T>>> {
    if !a.is_square() || b.len() != a.rows() || x0.len() != a.rows() {
        return Err(Error::config("dimension mismatch in analytic propagation"));
    }
    let n = a.rows();
    let (phi, psi) = transition(a, b, dt)?;
    let mut out = Vec::with_capacity(n_points + 1);
    out.push(x0.to_vec());
    let mut x = x0.to_vec();
    for _ in 0..n_points {
        let mut next = phi.matvec(&x)?;
        for i in 0..n {
            next[i] = next[i] + psi[i];
        }
        x = next;
        out.push(x.clone());
    }
    Ok(out)
}

/// Exact one-step transition `(e^{At}, int_0^t e^{As} b ds)` from the
/// exponential of the augmented matrix.
fn transition<T: Scalar>(a: &Matrix<T>, b: &[T], t: T) -> Result<(Matrix<T>, Vec<T>)> {
    let n = a.rows();
    let mut m = Matrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)] * t;
        }
        m[(i, n)] = b[i] * t;
    }
    let e = expm(&m)?;
    let phi = Matrix::from_fn(n, n, |i, j| e[(i, j)]);
    let psi = (0..n).map(|i| e[(i, n)]).collect();
    Ok((phi, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::build_fast_matrix;

    struct Decay;

    impl OdeSystem<f64> for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
        fn apply_event(&mut self, _v: f64) {}
    }

    #[test]
    fn rk4_matches_scalar_exponential() {
        let sim = SimConfig::new(1e-3, 1.0, 0.0, 1000).unwrap();
        let traj = integrate(&mut Decay, &[1.0], &sim, &EventSchedule::empty()).unwrap();
        let end = traj.last_state().unwrap()[0];
        assert!((end - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_works_with_f32() {
        struct Decay32;
        impl OdeSystem<f32> for Decay32 {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f32, x: &[f32], dx: &mut [f32]) {
                dx[0] = -x[0];
            }
            fn apply_event(&mut self, _v: f32) {}
        }
        let sim = SimConfig::<f32>::new(1e-3, 1.0, 0.0, 1000).unwrap();
        let traj = integrate(&mut Decay32, &[1.0f32], &sim, &EventSchedule::empty()).unwrap();
        let end = traj.last_state().unwrap()[0];
        assert!((end - (-1.0f32).exp()).abs() < 1e-5);
    }

    #[test]
    fn analytic_scalar_exponential() {
        let a = Matrix::new(1, 1, vec![-1.0f64]).unwrap();
        let x = analytic_linear_solution(&a, &[0.0], &[1.0], 1.0).unwrap();
        assert!((x[0] - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn analytic_affine_term() {
        // x' = -x + 1 from 0: x(t) = 1 - e^{-t}
        let a = Matrix::new(1, 1, vec![-1.0]).unwrap();
        let x = analytic_linear_solution(&a, &[1.0], &[0.0], 2.0).unwrap();
        assert!((x[0] - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn fast_subsystem_decays_to_origin() {
        let a = build_fast_matrix::<f64>(2).unwrap();
        let x = analytic_linear_solution(&a, &[0.0, 0.0], &[1.0, 0.0], 40.0).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_fault_reports_first_bad_time() {
        struct Explode;
        impl OdeSystem<f64> for Explode {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
                dx[0] = x[0] * x[0]; // finite-time blowup of x' = x^2
            }
            fn apply_event(&mut self, _v: f64) {}
        }
        let sim = SimConfig::new(1e-3, 2.0, 0.0, 1).unwrap();
        let err = integrate(&mut Explode, &[10.0], &sim, &EventSchedule::empty());
        match err {
            Err(Error::Divergence { t, .. }) => {
                assert!(
                    t > 0.0 && t < 0.2,
                    "blowup of 1/(0.1 - t) expected near 0.1, got {t}"
                )
            }
            other => panic!("expected divergence fault, got {other:?}"),
        }
    }

    #[test]
    fn delayed_r0_matches_undelayed() {
        let n = 2;
        let a0 = Matrix::new(n, n, vec![-1.0, 0.0, 0.0, -1.0]).unwrap();
        let a1 = Matrix::new(n, n, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let sim = SimConfig::new(1e-3, 5.0, 0.0, 100).unwrap();
        let delayed = integrate_delayed(&a0, &a1, &[1.0, 1.0], &sim).unwrap();

        struct Fast(Matrix<f64>);
        impl OdeSystem<f64> for Fast {
            fn dim(&self) -> usize {
                self.0.rows()
            }
            fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
                let out = self.0.matvec(x).unwrap();
                dx.copy_from_slice(&out);
            }
            fn apply_event(&mut self, _v: f64) {}
        }
        let af = a0.add(&a1).unwrap();
        let plain = integrate(&mut Fast(af), &[1.0, 1.0], &sim, &EventSchedule::empty()).unwrap();
        for i in 0..plain.len() {
            for j in 0..n {
                assert!((delayed.state(i)[j] - plain.state(i)[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn delayed_fast_subsystem_converges() {
        let a0 = Matrix::new(2, 2, vec![-1.0, 0.0, 0.0, -1.0]).unwrap();
        let a1 = Matrix::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let sim = SimConfig::new(1e-3, 30.0, 0.1, 1000).unwrap();
        let traj = integrate_delayed(&a0, &a1, &[1.0, 0.0], &sim).unwrap();
        let end = traj.last_state().unwrap();
        assert!(norm_inf(end) <= 1e-6, "terminal state {end:?}");
    }

    #[test]
    fn constant_trajectory_at_fixed_point() {
        let cfg = ProtocolConfig::<f64>::new(4, 10.0, 8.0).unwrap();
        let eq = crate::protocol::equilibrium(&cfg);
        let sim = SimConfig::new(1e-3, 10.0, 0.0, 1000).unwrap();
        let traj = run_protocol(&cfg, &eq, &sim, &EventSchedule::empty()).unwrap();
        let eq_flat = eq.to_flat();
        for i in 0..traj.len() {
            for (v, e) in traj.state(i).iter().zip(&eq_flat) {
                assert!((v - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn stiffness_guard_enforced() {
        let cfg = ProtocolConfig::new(3, 100.0, 6.0).unwrap(); // epsilon = 0.01
        let x0 = SystemState::zeros(3);
        let sim = SimConfig::new(5e-3, 1.0, 0.0, 1).unwrap();
        assert!(run_protocol(&cfg, &x0, &sim, &EventSchedule::empty()).is_err());
    }

    #[test]
    fn protocol_converges_and_events_retarget() {
        // z_star 6 -> 9 at t = 5: all states move from 2 to 3
        let cfg = ProtocolConfig::<f64>::new(3, 100.0, 6.0).unwrap();
        let sim = SimConfig::new(1e-3, 10.0, 0.0, 100).unwrap();
        let events = EventSchedule::new(vec![(5.0, 9.0)]).unwrap();
        let traj = run_protocol(&cfg, &SystemState::zeros(3), &sim, &events).unwrap();
        let mid_idx = traj.window_indices(4.9, 5.0)[0];
        for v in traj.state(mid_idx) {
            assert!((v - 2.0).abs() < 1e-6, "pre-event state {v}");
        }
        for v in traj.last_state().unwrap() {
            assert!((v - 3.0).abs() < 1e-6, "post-event state {v}");
        }
    }

    #[test]
    fn determinism_bitwise() {
        let cfg = ProtocolConfig::new(5, 50.0, 3.0).unwrap();
        let sim = SimConfig::new(1e-3, 2.0, 0.0, 10).unwrap();
        let run = || {
            run_protocol(&cfg, &SystemState::zeros(5), &sim, &EventSchedule::empty())
                .unwrap()
                .to_csv()
        };
        assert_eq!(run(), run());
    }
}
