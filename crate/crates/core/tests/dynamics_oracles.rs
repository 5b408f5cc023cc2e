use chaosfb_core::dynamics::{
    control_signal_f, integrate, largest_lyapunov, mechanical_amplitude, IntegrationSettings,
    LyapunovSettings, ModeState, PhysicalParams, Stepping,
};
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Moderate rates in rad/µs so the linear regime is cheap to integrate.
fn slow_params() -> PhysicalParams {
    let mut p = PhysicalParams::fig4();
    p.delta1 = 5.0;
    p.delta2 = -3.0;
    p.gamma1 = 2.0;
    p.gamma2 = 4.0;
    p.gamma_f = 0.5;
    p.mech_gamma1 = 0.2;
    p.mech_gamma2 = 0.3;
    p.omega1 = 10.0;
    p.omega2 = 8.0;
    p.g1 = 0.0;
    p.g2 = 0.0;
    p.epsilon1 = c(0.0, 0.0);
    p.epsilon2 = c(0.0, 0.0);
    p
}

/// Hand-written cavity block of the mean-field equations with the couplings off.
fn cavity_block(p: &PhysicalParams) -> Matrix2<Complex64> {
    let i = c(0.0, 1.0);
    let self1 = 0.5 * (p.gamma1.sqrt() + p.gamma_f.sqrt()).powi(2);
    Matrix2::new(
        -i * p.delta1 - self1,
        c(-(p.gamma2 * p.gamma_f).sqrt(), 0.0),
        c(-(p.gamma1 * p.gamma2).sqrt(), 0.0),
        -i * p.delta2 - 0.5 * p.gamma2,
    )
}

fn fixed(t_final: f64, transient: f64, dt: f64, stride: usize) -> IntegrationSettings {
    IntegrationSettings {
        t_final,
        transient,
        stepping: Stepping::Fixed { dt },
        sample_stride: stride,
    }
}

#[test]
fn undriven_cavities_decay_like_the_matrix_exponential() {
    let p = slow_params();
    let init = ModeState::new(c(1.0, 0.5), c(-0.3, 0.2), c(0.0, 0.0), c(0.0, 0.0));
    let t_final = 2.0;
    let traj = integrate(&p, &init, &fixed(t_final, 0.0, 1e-3, 100)).unwrap();
    let last = traj.last();

    let exact = (cavity_block(&p) * c(t_final, 0.0)).exp() * Vector2::new(init.a1, init.a2);
    assert!(
        (last.a1 - exact[0]).norm() < 1e-10,
        "{} vs {}",
        last.a1,
        exact[0]
    );
    assert!((last.a2 - exact[1]).norm() < 1e-10);

    // loose envelope on the controlled cavity
    let rate = 0.5 * (p.gamma1.sqrt() + p.gamma_f.sqrt()).powi(2);
    assert!(last.a1.norm() <= init.a1.norm() * (-0.9 * rate * t_final).exp());
}

#[test]
fn driven_linear_system_settles_on_the_linear_solve() {
    let mut p = slow_params();
    p.epsilon1 = c(3.0, 0.0);
    p.epsilon2 = c(-1.0, 2.0);
    p.g1 = 0.7;
    let drive = Vector2::new(p.epsilon1, p.epsilon2);
    let steady = cavity_block(&p).lu().solve(&(-drive)).unwrap();

    let settings = IntegrationSettings {
        t_final: 30.0,
        transient: 25.0,
        stepping: Stepping::adaptive(0.01),
        sample_stride: 10,
    };
    let traj = integrate(&p, &ModeState::default(), &settings).unwrap();
    for s in &traj.samples {
        assert!((s.a1 - steady[0]).norm() <= 1e-6 * steady[0].norm());
        assert!((s.a2 - steady[1]).norm() <= 1e-6 * steady[1].norm());
    }
}

#[test]
fn rotating_the_controlled_drive_only_rotates_the_cavities() {
    let mut p = PhysicalParams::fig4();
    p.epsilon2 = c(0.0, 0.0);
    let phi = 0.83;
    let mut q = p;
    q.epsilon1 = p.epsilon1 * Complex64::from_polar(1.0, phi);
    let settings = fixed(0.5, 0.0, 1e-5, 100);
    let init = ModeState::membrane_excited();
    let a = integrate(&p, &init, &settings).unwrap();
    let b = integrate(&q, &init, &settings).unwrap();
    let fa = control_signal_f(&a, p.g1);
    let fb = control_signal_f(&b, q.g1);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x.a1.norm() - y.a1.norm()).abs() <= 1e-9 * x.a1.norm().max(1.0));
    }
    for (x, y) in fa.iter().zip(&fb) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
}

#[test]
fn fixed_step_converges_at_fourth_order() {
    let mut p = slow_params();
    p.epsilon1 = c(1.0, 0.0);
    p.epsilon2 = c(0.0, 1.0);
    let init = ModeState::new(c(0.5, 0.0), c(0.0, 0.5), c(1.0, 0.0), c(0.2, 0.0));
    let end = |dt: f64| {
        let traj = integrate(&p, &init, &fixed(1.0, 0.0, dt, 1)).unwrap();
        traj.last().to_array()
    };
    let dist = |x: [f64; 8], y: [f64; 8]| {
        x.iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let (y1, y2, y4) = (end(0.004), end(0.002), end(0.001));
    let order = (dist(y1, y2) / dist(y2, y4)).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn closed_form_membrane_matches_the_integrated_one() {
    let mut p = slow_params();
    p.g1 = 0.8;
    p.epsilon1 = c(8.0, 0.0);
    p.epsilon2 = c(0.0, 1.5);
    let init = ModeState::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
    let traj = integrate(&p, &init, &fixed(5.0, 0.0, 1e-4, 1)).unwrap();
    let f = control_signal_f(&traj, p.g1);
    // f is far from constant here: the cavities ring up from zero
    let spread =
        f.iter().cloned().fold(f64::MIN, f64::max) - f.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 1.0);
    let closed = mechanical_amplitude(
        &f,
        traj.dt_sample,
        p.omega1,
        p.mech_gamma1,
        traj.samples[0].b1,
    );
    for (k, (s, b)) in traj.samples.iter().zip(&closed).enumerate() {
        assert!(
            (s.b1 - b).norm() <= 1e-6 * s.b1.norm(),
            "sample {k}: {} vs {}",
            s.b1,
            b
        );
    }
}

#[test]
fn lyapunov_of_a_linear_system_is_the_slowest_eigenvalue() {
    let mut p = slow_params();
    p.mech_gamma1 = 4.0;
    p.mech_gamma2 = 5.0;
    let block = cavity_block(&p);
    let tr = block.trace() / 2.0;
    let root = (tr * tr - block.determinant()).sqrt();
    let cavity_max = (tr + root).re.max((tr - root).re);
    let oracle = cavity_max
        .max(-0.5 * p.mech_gamma1)
        .max(-0.5 * p.mech_gamma2);
    assert!(oracle < 0.0);

    let settings = LyapunovSettings {
        dt: 1e-3,
        transient: 1.0,
        horizon: 100.0,
        renorm_interval: 0.05,
        perturbation: 1e-8,
    };
    let lambda = largest_lyapunov(&p, &ModeState::membrane_excited(), &settings).unwrap();
    assert!(
        (lambda / oracle - 1.0).abs() <= 0.05,
        "lambda {lambda}, oracle {oracle}"
    );
}

#[test]
fn lyapunov_of_a_pure_rotation_vanishes() {
    let mut p = slow_params();
    p.gamma1 = 0.0;
    p.gamma2 = 0.0;
    p.gamma_f = 0.0;
    p.mech_gamma1 = 0.0;
    p.mech_gamma2 = 0.0;
    let settings = LyapunovSettings {
        dt: 1e-3,
        transient: 0.0,
        horizon: 50.0,
        renorm_interval: 0.05,
        perturbation: 1e-8,
    };
    let init = ModeState::new(c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(0.5, 0.5));
    let lambda = largest_lyapunov(&p, &init, &settings).unwrap();
    assert!(lambda.abs() <= 1e-3, "lambda {lambda}");
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let p = PhysicalParams::fig4();
    let settings = fixed(0.2, 0.0, 1e-5, 10);
    let a = integrate(&p, &ModeState::membrane_excited(), &settings).unwrap();
    let b = integrate(&p, &ModeState::membrane_excited(), &settings).unwrap();
    assert_eq!(a, b);
}
