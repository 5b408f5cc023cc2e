use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DynamicsError;
use crate::units::hz_to_rad_per_us;

/// Loop parameters as quoted in Hz ("X/2π"), named after the usual symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopParamsHz {
    /// Δ₁/2π, controlled cavity detuning.
    pub delta1_over_2pi_hz: f64,
    /// Δ₂/2π, controller cavity detuning.
    pub delta2_over_2pi_hz: f64,
    /// γ₁/2π, controlled cavity damping.
    pub gamma1_over_2pi_hz: f64,
    /// γ₂/2π, controller cavity damping.
    pub gamma2_over_2pi_hz: f64,
    /// γ_f/2π, damping of the controlled cavity through the feedback port.
    pub gamma_f_over_2pi_hz: f64,
    /// Γ₁/2π, controlled mechanical damping.
    pub mech_gamma1_over_2pi_hz: f64,
    /// Γ₂/2π, controller mechanical damping.
    pub mech_gamma2_over_2pi_hz: f64,
    /// Ω₁/2π, controlled mechanical frequency.
    pub omega1_over_2pi_hz: f64,
    /// Ω₂/2π, controller mechanical frequency.
    pub omega2_over_2pi_hz: f64,
    /// G₁/2π, quadratic optomechanical coupling.
    pub g1_over_2pi_hz: f64,
    /// G₂/2π, radiation-pressure coupling of the controller.
    pub g2_over_2pi_hz: f64,
    /// ε₁/2π, drive of the controlled cavity.
    pub epsilon1_over_2pi_hz: f64,
    /// ε₂/2π, drive of the controller cavity.
    pub epsilon2_over_2pi_hz: f64,
    /// Enters ε₁ with a minus sign when set (sensitivity check only).
    #[serde(default)]
    pub invert_epsilon1: bool,
}

impl LoopParamsHz {
    /// Parameters of the chaotic-feedback figure: controlled membrane cavity
    /// plus optomechanical controller with the feedback port open.
    pub fn fig4() -> Self {
        LoopParamsHz {
            delta1_over_2pi_hz: 0.75e9,
            delta2_over_2pi_hz: 0.12e9,
            gamma1_over_2pi_hz: 1e6,
            gamma2_over_2pi_hz: 0.24e9,
            gamma_f_over_2pi_hz: 0.05e6,
            mech_gamma1_over_2pi_hz: 0.01e6,
            mech_gamma2_over_2pi_hz: 1.4e6,
            omega1_over_2pi_hz: 1e6,
            omega2_over_2pi_hz: 0.345e9,
            g1_over_2pi_hz: 0.1e6,
            g2_over_2pi_hz: 0.1e6,
            epsilon1_over_2pi_hz: 6.6e9,
            epsilon2_over_2pi_hz: 13.2e9,
            invert_epsilon1: false,
        }
    }

    /// Same as [`Self::fig4`] with the feedback return path removed (γ_f = 0).
    pub fn fig4_without_feedback() -> Self {
        LoopParamsHz {
            gamma_f_over_2pi_hz: 0.0,
            ..Self::fig4()
        }
    }
}

/// Loop parameters in internal units (rad/µs), built once from [`LoopParamsHz`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    source: LoopParamsHz,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_f: f64,
    pub mech_gamma1: f64,
    pub mech_gamma2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub g1: f64,
    pub g2: f64,
    /// Drives are complex so a phase can be put on them; configs give real values.
    pub epsilon1: Complex64,
    pub epsilon2: Complex64,
}

impl PhysicalParams {
    pub fn from_hz(hz: LoopParamsHz) -> Result<Self, DynamicsError> {
        let all = [
            ("delta1_over_2pi_hz", hz.delta1_over_2pi_hz),
            ("delta2_over_2pi_hz", hz.delta2_over_2pi_hz),
            ("gamma1_over_2pi_hz", hz.gamma1_over_2pi_hz),
            ("gamma2_over_2pi_hz", hz.gamma2_over_2pi_hz),
            ("gamma_f_over_2pi_hz", hz.gamma_f_over_2pi_hz),
            ("mech_gamma1_over_2pi_hz", hz.mech_gamma1_over_2pi_hz),
            ("mech_gamma2_over_2pi_hz", hz.mech_gamma2_over_2pi_hz),
            ("omega1_over_2pi_hz", hz.omega1_over_2pi_hz),
            ("omega2_over_2pi_hz", hz.omega2_over_2pi_hz),
            ("g1_over_2pi_hz", hz.g1_over_2pi_hz),
            ("g2_over_2pi_hz", hz.g2_over_2pi_hz),
            ("epsilon1_over_2pi_hz", hz.epsilon1_over_2pi_hz),
            ("epsilon2_over_2pi_hz", hz.epsilon2_over_2pi_hz),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(DynamicsError::InvalidParameter {
                name,
                reason: "must be finite",
            });
        }
        let damping = [
            ("gamma1_over_2pi_hz", hz.gamma1_over_2pi_hz),
            ("gamma2_over_2pi_hz", hz.gamma2_over_2pi_hz),
            ("gamma_f_over_2pi_hz", hz.gamma_f_over_2pi_hz),
            ("mech_gamma1_over_2pi_hz", hz.mech_gamma1_over_2pi_hz),
            ("mech_gamma2_over_2pi_hz", hz.mech_gamma2_over_2pi_hz),
        ];
        if let Some((name, _)) = damping.iter().find(|(_, v)| *v < 0.0) {
            return Err(DynamicsError::InvalidParameter {
                name,
                reason: "damping rates must be >= 0",
            });
        }
        for (name, v) in [
            ("omega1_over_2pi_hz", hz.omega1_over_2pi_hz),
            ("omega2_over_2pi_hz", hz.omega2_over_2pi_hz),
        ] {
            if v <= 0.0 {
                return Err(DynamicsError::InvalidParameter {
                    name,
                    reason: "mechanical frequencies must be > 0",
                });
            }
        }
        let sign = if hz.invert_epsilon1 { -1.0 } else { 1.0 };
        Ok(PhysicalParams {
            source: hz,
            delta1: hz_to_rad_per_us(hz.delta1_over_2pi_hz),
            delta2: hz_to_rad_per_us(hz.delta2_over_2pi_hz),
            gamma1: hz_to_rad_per_us(hz.gamma1_over_2pi_hz),
            gamma2: hz_to_rad_per_us(hz.gamma2_over_2pi_hz),
            gamma_f: hz_to_rad_per_us(hz.gamma_f_over_2pi_hz),
            mech_gamma1: hz_to_rad_per_us(hz.mech_gamma1_over_2pi_hz),
            mech_gamma2: hz_to_rad_per_us(hz.mech_gamma2_over_2pi_hz),
            omega1: hz_to_rad_per_us(hz.omega1_over_2pi_hz),
            omega2: hz_to_rad_per_us(hz.omega2_over_2pi_hz),
            g1: hz_to_rad_per_us(hz.g1_over_2pi_hz),
            g2: hz_to_rad_per_us(hz.g2_over_2pi_hz),
            epsilon1: Complex64::new(sign * hz_to_rad_per_us(hz.epsilon1_over_2pi_hz), 0.0),
            epsilon2: Complex64::new(hz_to_rad_per_us(hz.epsilon2_over_2pi_hz), 0.0),
        })
    }

    pub fn fig4() -> Self {
        Self::from_hz(LoopParamsHz::fig4()).expect("caption parameters are valid")
    }

    pub fn fig4_without_feedback() -> Self {
        Self::from_hz(LoopParamsHz::fig4_without_feedback()).expect("caption parameters are valid")
    }

    /// The Hz-valued inputs this value was built from.
    pub fn source(&self) -> &LoopParamsHz {
        &self.source
    }

    /// Total damping of the controlled cavity, `½(√γ₁ + √γ_f)²`.
    pub fn cavity1_decay(&self) -> f64 {
        0.5 * (self.gamma1.sqrt() + self.gamma_f.sqrt()).powi(2)
    }

    /// Largest rate the fixed-step integrator has to resolve.
    pub fn fastest_rate(&self) -> f64 {
        [
            self.delta1.abs(),
            self.delta2.abs(),
            self.gamma2,
            self.omega2,
            self.omega1,
            self.cavity1_decay(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Stable 16-hex-digit digest of the internal parameter values.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in [
            self.delta1,
            self.delta2,
            self.gamma1,
            self.gamma2,
            self.gamma_f,
            self.mech_gamma1,
            self.mech_gamma2,
            self.omega1,
            self.omega2,
            self.g1,
            self.g2,
            self.epsilon1.re,
            self.epsilon1.im,
            self.epsilon2.re,
            self.epsilon2.im,
        ] {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
