//! Mean-field dynamics of the two-cavity chaotic feedback loop.
//!
//! State is the classical amplitude set `(α₁, α₂, β₁, β₂)`: controlled
//! cavity, controller cavity, controlled membrane, controller mechanics. The
//! α-block is linear apart from the radiation-pressure term of the controller;
//! its linear part is exactly the drift produced by the SLH composition of
//! the loop (see [`feedback_network`]). The membrane's backaction on α₁ is
//! neglected, so β₁ is driven by α₁ but does not act back.
//!
//! Two misprints in the commonly quoted form of these equations are resolved
//! here: the controller cavity couples to its own mechanics through
//! `β₂* + β₂`, and the controller mechanics rotates at Ω₂.

pub mod ode;
mod params;

use std::io::{self, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::slh::{self, SlhError, SlhTriple};
pub use ode::OdeError;
pub use params::{LoopParamsHz, PhysicalParams};

/// Largest allowed `dt · fastest_rate` for fixed-step runs.
pub const RESOLUTION_LIMIT: f64 = 0.05;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("step {dt:e} µs does not resolve the fastest rate; need dt <= {max_dt:e} µs")]
    Resolution { dt: f64, max_dt: f64 },
    #[error("integration diverged at t = {t} µs")]
    Divergence { t: f64 },
    #[error("invalid integration settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Network(#[from] SlhError),
}

/// Complex mode amplitudes `(α₁, α₂, β₁, β₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeState {
    pub a1: Complex64,
    pub a2: Complex64,
    pub b1: Complex64,
    pub b2: Complex64,
}

pub type InitialConditions = ModeState;

impl ModeState {
    pub fn new(a1: Complex64, a2: Complex64, b1: Complex64, b2: Complex64) -> Self {
        ModeState { a1, a2, b1, b2 }
    }

    /// All amplitudes zero except the membrane, `β₁ = 1`.
    pub fn membrane_excited() -> Self {
        ModeState {
            b1: Complex64::new(1.0, 0.0),
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.a1.re, self.a1.im, self.a2.re, self.a2.im, self.b1.re, self.b1.im, self.b2.re,
            self.b2.im,
        ]
    }

    pub fn from_array(y: &[f64; 8]) -> Self {
        ModeState {
            a1: Complex64::new(y[0], y[1]),
            a2: Complex64::new(y[2], y[3]),
            b1: Complex64::new(y[4], y[5]),
            b2: Complex64::new(y[6], y[7]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Right-hand side of the mean-field equations.
pub fn mean_field_derivative(s: &ModeState, p: &PhysicalParams) -> ModeState {
    let exchange_12 = (p.gamma2 * p.gamma_f).sqrt();
    let exchange_21 = (p.gamma1 * p.gamma2).sqrt();
    let da1 = -I * p.delta1 * s.a1 - p.cavity1_decay() * s.a1 + p.epsilon1 - exchange_12 * s.a2;
    let da2 = -I * p.delta2 * s.a2 - 0.5 * p.gamma2 * s.a2 - I * p.g2 * s.a2 * (s.b2.conj() + s.b2)
        + p.epsilon2
        - exchange_21 * s.a1;
    let db1 = -I * p.omega1 * s.b1 - I * p.g1 * s.a1.norm_sqr() * s.b1 - 0.5 * p.mech_gamma1 * s.b1;
    let db2 = -I * p.omega2 * s.b2 - I * p.g2 * s.a2.norm_sqr() - 0.5 * p.mech_gamma2 * s.b2;
    ModeState::new(da1, da2, db1, db2)
}

fn rhs(p: &PhysicalParams) -> impl Fn(&[f64; 8]) -> [f64; 8] + '_ {
    move |y| mean_field_derivative(&ModeState::from_array(y), p).to_array()
}

/// SLH description of the loop. The bilinear part carries detunings, damping
/// and the feedback exchange; the optomechanical terms are attached as tags.
pub fn feedback_network(p: &PhysicalParams) -> Result<SlhTriple, SlhError> {
    let controlled = SlhTriple::cavity("a1", p.gamma1, p.delta1)
        .with_tag("quadratic optomechanics G1 a1^dag a1 b1^dag b1");
    let controller = SlhTriple::cavity("a2", p.gamma2, p.delta2)
        .with_tag("radiation pressure G2 a2^dag a2 (b2^dag + b2)");
    let feedback = SlhTriple::new(
        nalgebra::DMatrix::identity(1, 1),
        vec![slh::CouplingOperator::damping("a1", p.gamma_f)],
        &[],
    )?;
    slh::feedback_compose(&controlled, &controller, &feedback)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    /// Classical RK4 with a constant step (µs). Bit-reproducible.
    Fixed { dt: f64 },
    /// Dormand–Prince 5(4); samples land on multiples of `output_dt` (µs).
    Adaptive {
        rel_tol: f64,
        abs_tol: f64,
        output_dt: f64,
    },
}

impl Stepping {
    pub fn adaptive(output_dt: f64) -> Self {
        Stepping::Adaptive {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            output_dt,
        }
    }

    fn base_dt(&self) -> f64 {
        match *self {
            Stepping::Fixed { dt } => dt,
            Stepping::Adaptive { output_dt, .. } => output_dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    /// End time, µs.
    pub t_final: f64,
    /// Leading span discarded before sampling starts, µs.
    pub transient: f64,
    pub stepping: Stepping,
    /// Samples are kept every `sample_stride` base steps.
    pub sample_stride: usize,
}

impl IntegrationSettings {
    /// Fixed step of 1e-5 µs, sampling every 10 steps.
    pub fn fixed(t_final: f64, transient: f64) -> Self {
        IntegrationSettings {
            t_final,
            transient,
            stepping: Stepping::Fixed { dt: 1e-5 },
            sample_stride: 10,
        }
    }
}

/// Uniformly sampled solution after the transient.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Time of the first sample, µs.
    pub t0: f64,
    /// Sample spacing, µs.
    pub dt_sample: f64,
    pub samples: Vec<ModeState>,
    pub transient_discarded: f64,
    pub params_fingerprint: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_sample
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt_sample
    }

    pub fn alpha1(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.a1).collect()
    }

    pub fn alpha2(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.a2).collect()
    }

    pub fn beta1(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.b1).collect()
    }

    pub fn beta2(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.b2).collect()
    }

    pub fn last(&self) -> &ModeState {
        self.samples
            .last()
            .expect("trajectory has at least two samples")
    }

    /// CSV with header `t,re_a1,im_a1,re_a2,im_a2,re_b1,im_b1,re_b2,im_b2`,
    /// time in µs, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,re_a1,im_a1,re_a2,im_a2,re_b1,im_b1,re_b2,im_b2")?;
        for (k, s) in self.samples.iter().enumerate() {
            write!(w, "{:.16e}", self.time(k))?;
            for v in s.to_array() {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates the mean-field equations from `t = 0` and samples the
/// solution on `[transient, t_final]`.
pub fn integrate(
    params: &PhysicalParams,
    init: &InitialConditions,
    settings: &IntegrationSettings,
) -> Result<Trajectory, DynamicsError> {
    let IntegrationSettings {
        t_final,
        transient,
        stepping,
        sample_stride,
    } = *settings;
    if !init.is_finite() {
        return Err(DynamicsError::Settings(
            "initial conditions must be finite".into(),
        ));
    }
    if !(transient >= 0.0 && t_final > transient) {
        return Err(DynamicsError::Settings(format!(
            "need t_final > transient >= 0 (got t_final = {t_final}, transient = {transient})"
        )));
    }
    if sample_stride == 0 {
        return Err(DynamicsError::Settings("sample_stride must be >= 1".into()));
    }
    let base = stepping.base_dt();
    if !(base > 0.0 && base.is_finite()) {
        return Err(DynamicsError::Settings("step must be positive".into()));
    }
    if let Stepping::Fixed { dt } = stepping {
        let fastest = params.fastest_rate();
        if fastest > 0.0 && dt > RESOLUTION_LIMIT / fastest {
            return Err(DynamicsError::Resolution {
                dt,
                max_dt: RESOLUTION_LIMIT / fastest,
            });
        }
    }

    let n_total = (t_final / base + 1e-9).floor() as usize;
    let n_transient = (transient / base).round() as usize;
    let n_samples = (n_total - n_transient.min(n_total)) / sample_stride + 1;
    if n_samples < 2 {
        return Err(DynamicsError::Settings(
            "fewer than two samples after the transient".into(),
        ));
    }

    let f = rhs(params);
    let mut y = init.to_array();
    let mut samples = Vec::with_capacity(n_samples);
    let mut adaptive_h = base;
    let last_step = n_transient + (n_samples - 1) * sample_stride;
    for step in 0..=last_step {
        if step >= n_transient && (step - n_transient).is_multiple_of(sample_stride) {
            samples.push(ModeState::from_array(&y));
        }
        if step == last_step {
            break;
        }
        match stepping {
            Stepping::Fixed { dt } => y = ode::rk4_step(&f, &y, dt),
            Stepping::Adaptive {
                rel_tol, abs_tol, ..
            } => {
                let solver = ode::Dopri5 {
                    rel_tol,
                    abs_tol,
                    ..Default::default()
                };
                solver
                    .advance(&f, &mut y, step as f64 * base, base, &mut adaptive_h)
                    .map_err(|e| match e {
                        OdeError::NonFinite { t } | OdeError::StepUnderflow { t, .. } => {
                            DynamicsError::Divergence { t }
                        }
                        other => DynamicsError::Ode(other),
                    })?;
            }
        }
        if !ode::is_finite(&y) {
            return Err(DynamicsError::Divergence {
                t: (step + 1) as f64 * base,
            });
        }
    }

    Ok(Trajectory {
        t0: n_transient as f64 * base,
        dt_sample: sample_stride as f64 * base,
        samples,
        transient_discarded: n_transient as f64 * base,
        params_fingerprint: params.fingerprint(),
    })
}

/// Intensity-induced membrane frequency shift `f_k = G₁ |α₁(t_k)|²` (rad/µs).
pub fn control_signal_f(traj: &Trajectory, g1: f64) -> Vec<f64> {
    traj.samples.iter().map(|s| g1 * s.a1.norm_sqr()).collect()
}

/// Trapezoidal running integral with `out[0] = 0`.
pub fn cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(f.len());
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(f.len());
    out
}

/// Closed-form membrane amplitude under a frequency shift `f(t)`:
/// `β₁(t) = β₁(0) exp[−iΩ₁t − i∫f − Γ₁t/2]`, with `t` measured from the
/// first sample.
pub fn mechanical_amplitude(
    f: &[f64],
    dt: f64,
    omega1: f64,
    mech_gamma1: f64,
    beta1_0: Complex64,
) -> Vec<Complex64> {
    cumulative_trapezoid(f, dt)
        .into_iter()
        .enumerate()
        .map(|(k, phase)| {
            let t = k as f64 * dt;
            beta1_0 * Complex64::new(-0.5 * mech_gamma1 * t, -omega1 * t - phase).exp()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSettings {
    /// RK4 step, µs.
    pub dt: f64,
    /// Time integrated before the two trajectories are split, µs.
    pub transient: f64,
    /// Span over which growth is averaged, µs.
    pub horizon: f64,
    pub renorm_interval: f64,
    /// Initial separation relative to `max(|y|, 1)`.
    pub perturbation: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings {
            dt: 1e-5,
            transient: 20.0,
            horizon: 20.0,
            renorm_interval: 0.05,
            perturbation: 1e-8,
        }
    }
}

/// Benettin two-trajectory estimate of the largest Lyapunov exponent (1/µs).
pub fn largest_lyapunov(
    params: &PhysicalParams,
    init: &InitialConditions,
    settings: &LyapunovSettings,
) -> Result<f64, DynamicsError> {
    let LyapunovSettings {
        dt,
        transient,
        horizon,
        renorm_interval,
        perturbation,
    } = *settings;
    if !(dt > 0.0 && renorm_interval >= dt && horizon >= renorm_interval && perturbation > 0.0)
        || transient < 0.0
    {
        return Err(DynamicsError::Settings(
            "need horizon >= renorm_interval >= dt > 0, perturbation > 0, transient >= 0".into(),
        ));
    }
    let fastest = params.fastest_rate();
    if fastest > 0.0 && dt > RESOLUTION_LIMIT / fastest {
        return Err(DynamicsError::Resolution {
            dt,
            max_dt: RESOLUTION_LIMIT / fastest,
        });
    }
    let f = rhs(params);
    let check = |y: &[f64; 8], t: f64| {
        if ode::is_finite(y) {
            Ok(())
        } else {
            Err(DynamicsError::Divergence { t })
        }
    };

    let mut y = init.to_array();
    let n_transient = (transient / dt).round() as usize;
    for k in 0..n_transient {
        y = ode::rk4_step(&f, &y, dt);
        check(&y, (k + 1) as f64 * dt)?;
    }

    let norm = |v: &[f64; 8]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d0 = perturbation * norm(&y).max(1.0);
    let dir = 1.0 / (8f64).sqrt();
    let mut z = y;
    z.iter_mut().for_each(|v| *v += d0 * dir);

    let per = (renorm_interval / dt).round().max(1.0) as usize;
    let periods = (horizon / (per as f64 * dt)).floor() as usize;
    let mut t = n_transient as f64 * dt;
    let mut log_growth = 0.0;
    for _ in 0..periods {
        for _ in 0..per {
            y = ode::rk4_step(&f, &y, dt);
            z = ode::rk4_step(&f, &z, dt);
        }
        t += per as f64 * dt;
        check(&y, t)?;
        check(&z, t)?;
        let mut diff = [0.0; 8];
        for i in 0..8 {
            diff[i] = z[i] - y[i];
        }
        let d = norm(&diff);
        if d == 0.0 {
            return Err(DynamicsError::Settings(
                "perturbation collapsed below floating-point resolution".into(),
            ));
        }
        log_growth += (d / d0).ln();
        for i in 0..8 {
            z[i] = y[i] + diff[i] * d0 / d;
        }
    }
    Ok(log_growth / (periods as f64 * per as f64 * dt))
}
