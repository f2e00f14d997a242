//! Property tests for the protocol, certificate, and simulation invariants.

use proptest::prelude::*;
use sumcons::linalg::Matrix;
use sumcons::protocol::{
    equilibrium, from_shifted, p1_derivative, shifted_derivative, to_shifted, ProtocolConfig,
    SystemState,
};
use sumcons::sim::{integrate_delayed, SimConfig, Trajectory};
use sumcons::stability::{
    build_delay_matrices, build_fast_matrix, build_q1_tilde, is_negative_definite,
    schur_complement_report, solve_lyapunov,
};

proptest! {
    #[test]
    fn shift_round_trip_is_identity(
        n in 2usize..30,
        k in 0.1f64..1e3,
        z_star in -1e3f64..1e3,
        seed_xi in -1e3f64..1e3,
    ) {
        let cfg = ProtocolConfig::new(n, k, z_star).unwrap();
        let state = SystemState {
            xi_h: seed_xi,
            z: (0..n).map(|i| (i as f64 * 0.7 + seed_xi).sin() * 100.0).collect(),
        };
        let back = from_shifted(&to_shifted(&state, &cfg), &cfg);
        let scale = state.xi_h.abs().max(100.0);
        prop_assert!((back.xi_h - state.xi_h).abs() <= 1e-12 * scale);
        for (b, s) in back.z.iter().zip(&state.z) {
            prop_assert!((b - s).abs() <= 1e-12 * s.abs().max(scale));
        }
    }

    #[test]
    fn derivative_superposition(
        n in 2usize..20,
        k in 0.1f64..1e3,
        z_star in -1e2f64..1e2,
        sa in -10.0f64..10.0,
        sb in -10.0f64..10.0,
    ) {
        let cfg = ProtocolConfig::new(n, k, z_star).unwrap();
        let mk = |s: f64| SystemState {
            xi_h: s,
            z: (0..n).map(|i| ((i as f64 + 1.3) * s).sin() * 50.0).collect(),
        };
        let a = mk(sa);
        let b = mk(sb);
        let zero = SystemState::zeros(n);
        let f = |s: &SystemState<f64>| p1_derivative(s, &cfg).unwrap();
        let fa = f(&a);
        let fb = f(&b);
        let f0 = f(&zero);
        let sum_state = SystemState {
            xi_h: a.xi_h + b.xi_h,
            z: a.z.iter().zip(&b.z).map(|(x, y)| x + y).collect(),
        };
        let fsum = f(&sum_state);
        // affine superposition: f(a + b) - f(0) = (f(a) - f(0)) + (f(b) - f(0))
        let tol = 1e-9 * k.max(1.0);
        prop_assert!(
            ((fsum.d_xi_h - f0.d_xi_h) - ((fa.d_xi_h - f0.d_xi_h) + (fb.d_xi_h - f0.d_xi_h)))
                .abs()
                <= tol
        );
        for i in 0..n {
            let lhs = fsum.d_z[i] - f0.d_z[i];
            let rhs = (fa.d_z[i] - f0.d_z[i]) + (fb.d_z[i] - f0.d_z[i]);
            prop_assert!((lhs - rhs).abs() <= tol * (lhs.abs().max(1.0)));
        }
    }

    #[test]
    fn equilibrium_is_stationary_for_all_sizes(
        n in 2usize..=100,
        z_star in -1e4f64..1e4,
    ) {
        let cfg = ProtocolConfig::new(n, 10.0, z_star).unwrap();
        let d = p1_derivative(&equilibrium(&cfg), &cfg).unwrap();
        // chain terms vanish exactly; the integrator term carries only the
        // rounding of summing n copies of z_star/n
        for v in &d.d_z {
            prop_assert_eq!(*v, 0.0);
        }
        prop_assert!(d.d_xi_h.abs() <= 4.0 * n as f64 * f64::EPSILON * z_star.abs().max(1.0));
        let eq = equilibrium(&cfg);
        for v in &eq.z {
            prop_assert_eq!(*v, eq.z[0]); // consensus subspace membership
        }
    }

    #[test]
    fn shifted_field_matches_coordinate_change(
        n in 2usize..20,
        k in 0.5f64..500.0,
        z_star in -1e2f64..1e2,
        phase in 0.0f64..6.0,
    ) {
        let cfg = ProtocolConfig::new(n, k, z_star).unwrap();
        let state = SystemState {
            xi_h: phase.cos() * 10.0,
            z: (0..n).map(|i| ((i as f64) * phase).sin() * 10.0).collect(),
        };
        let d = p1_derivative(&state, &cfg).unwrap();
        let ds = shifted_derivative(&to_shifted(&state, &cfg), &cfg).unwrap();
        let scale = (k * 20.0 + z_star.abs() + n as f64 * 10.0).max(1.0);
        prop_assert!((ds.d_psi_h - d.d_xi_h).abs() <= 1e-12 * scale);
        for i in 0..n {
            prop_assert!((ds.d_y[i] - (d.d_z[i] - d.d_xi_h)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn lyapunov_residual_on_random_instances(
        n in 2usize..10,
        seed in 0u64..1000,
    ) {
        let mut lcg = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut a = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = -0.2 - 1.8 * next();
            for j in 0..i {
                a[(i, j)] = 2.0 * next() - 1.0;
            }
        }
        let g = Matrix::<f64>::from_fn(n, n, |_, _| 2.0 * next() - 1.0);
        let q = g.matmul(&g.transpose()).unwrap()
            .add(&Matrix::identity(n).scale(0.1)).unwrap();
        let p = solve_lyapunov(&a, &q).unwrap();
        let residual = p
            .matmul(&a).unwrap()
            .add(&a.transpose().matmul(&p).unwrap()).unwrap()
            .add(&q).unwrap()
            .norm_max();
        prop_assert!(residual <= 1e-10 * q.norm_max());
        prop_assert!(p.symmetric_eigenvalues().unwrap()[0] > 0.0);
    }

    #[test]
    fn schur_and_direct_routes_agree(
        n in 2usize..12,
        seed in 0u64..2000,
    ) {
        let mut lcg = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        let mut next = || {
            lcg = lcg.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            (lcg >> 11) as f64 / (1u64 << 53) as f64
        };
        // spans feasible and infeasible regions (q can exceed 2p)
        let p: Vec<f64> = (0..n).map(|_| 0.05 + 2.0 * next()).collect();
        let q: Vec<f64> = (0..n).map(|_| 0.05 + 2.2 * next()).collect();
        let schur_verdict = match schur_complement_report(&p, &q) {
            Ok(report) => report.feasible,
            // a non-positive denominator implies the diagonal block is not
            // negative definite, so the pair is infeasible
            Err(_) => false,
        };
        let direct = is_negative_definite(&build_q1_tilde(&p, &q, n).unwrap()).unwrap();
        prop_assert_eq!(schur_verdict, direct);
    }

    #[test]
    fn trajectory_csv_round_trip_bitwise(
        rows in 1usize..30,
        dim in 1usize..6,
        seed in 0u64..10_000,
    ) {
        let mut lcg = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((lcg >> 12) | 0x3FF0000000000000) - 1.0
        };
        let labels: Vec<String> = (0..dim).map(|i| format!("c_{i}")).collect();
        let times: Vec<f64> = (0..rows).map(|i| i as f64 * 0.125).collect();
        let data: Vec<f64> = (0..rows * dim)
            .map(|_| (next() - 0.5) * 10f64.powi((next() * 60.0 - 30.0) as i32))
            .collect();
        let traj = Trajectory::from_parts(labels, times, data).unwrap();
        let back = Trajectory::<f64>::from_csv(&traj.to_csv()).unwrap();
        prop_assert_eq!(back.labels(), traj.labels());
        prop_assert_eq!(back.times(), traj.times());
        for i in 0..traj.len() {
            prop_assert_eq!(back.state(i), traj.state(i));
        }
    }
}

/// Delay-independent decay of the fast subsystem over a delay grid
/// spanning four orders of magnitude.
#[test]
fn delay_robustness_over_four_orders_of_magnitude() {
    let n = 5;
    let (a0, a1) = build_delay_matrices::<f64>(n).unwrap();
    for r in [5e-4f64, 5e-3, 5e-2, 5e-1, 5.0] {
        let dt = (r / 10.0).min(0.01);
        let steps = (80.0 / dt).round();
        let sim = SimConfig::new(dt, steps * dt, r, steps as usize).unwrap();
        let traj = integrate_delayed(&a0, &a1, &[1.0; 5], &sim).unwrap();
        let end = traj.last_state().unwrap();
        let norm = end.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-6, "r = {r}: terminal norm {norm}");
    }
}

/// The spectrum read off the triangular fast matrix is exactly {-1}.
#[test]
fn fast_matrix_spectrum_read_off() {
    for n in 1..=200usize {
        let a = build_fast_matrix::<f64>(n).unwrap();
        for i in 0..n {
            assert_eq!(a[(i, i)], -1.0);
            for j in (i + 1)..n {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
    }
}
