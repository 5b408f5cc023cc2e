//! JSON run configuration. Frequencies are Hz-valued `X/2π` numbers and
//! times are in µs; everything is converted once when resolved.

use std::fs;
use std::path::Path;

use chaosfb_core::dynamics::{
    IntegrationSettings, LoopParamsHz, LyapunovSettings, ModeState, PhysicalParams, Stepping,
};
use chaosfb_core::memory::{nu_from_physical, thermal_occupancy};
use chaosfb_core::spectral::WelchSettings;
use chaosfb_core::units::{hz_to_rad_per_s, hz_to_rad_per_us};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<LoopParamsHz>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integration: Option<IntegrationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub t_final_us: f64,
    #[serde(default)]
    pub transient_us: f64,
    #[serde(default)]
    pub stepping: SteppingConfig,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default)]
    pub initial: InitialConfig,
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SteppingConfig {
    Fixed {
        dt_us: f64,
    },
    Adaptive {
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
        #[serde(default = "default_abs_tol")]
        abs_tol: f64,
        output_dt_us: f64,
    },
}

impl Default for SteppingConfig {
    fn default() -> Self {
        SteppingConfig::Fixed { dt_us: 1e-5 }
    }
}

fn default_rel_tol() -> f64 {
    1e-9
}

fn default_abs_tol() -> f64 {
    1e-12
}

/// Complex amplitudes as `[re, im]`. Omitting the whole block starts the
/// membrane at `β₁ = 1`; omitting a single field sets that amplitude to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub a1: [f64; 2],
    #[serde(default)]
    pub a2: [f64; 2],
    #[serde(default)]
    pub b1: [f64; 2],
    #[serde(default)]
    pub b2: [f64; 2],
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            a1: [0.0; 2],
            a2: [0.0; 2],
            b1: [1.0, 0.0],
            b2: [0.0; 2],
        }
    }
}

impl InitialConfig {
    pub fn to_state(self) -> ModeState {
        let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
        ModeState::new(c(self.a1), c(self.a2), c(self.b1), c(self.b2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_l_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_u_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renorm_interval_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_s_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_s_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    /// Membrane frequency for the thermal occupancy; falls back to the
    /// `physical` block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega1_hz: Option<f64>,
    pub gamma1_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_factor: Option<f64>,
    #[serde(default = "default_s_list")]
    pub s_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_hz_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<f64>>,
}

fn default_s_list() -> Vec<f64> {
    vec![0.0]
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

impl RunConfig {
    pub fn physical_params(&self) -> Result<PhysicalParams, CliError> {
        let hz = self
            .physical
            .ok_or_else(|| CliError::Config("missing `physical` block".into()))?;
        PhysicalParams::from_hz(hz).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Integration settings; `fixed_step` (µs) overrides the configured stepping.
    pub fn integration_settings(
        &self,
        fixed_step: Option<f64>,
    ) -> Result<(IntegrationSettings, ModeState), CliError> {
        let cfg = self
            .integration
            .ok_or_else(|| CliError::Config("missing `integration` block".into()))?;
        let stepping = match (fixed_step, cfg.stepping) {
            (Some(dt), _) | (None, SteppingConfig::Fixed { dt_us: dt }) => Stepping::Fixed { dt },
            (
                None,
                SteppingConfig::Adaptive {
                    rel_tol,
                    abs_tol,
                    output_dt_us,
                },
            ) => Stepping::Adaptive {
                rel_tol,
                abs_tol,
                output_dt: output_dt_us,
            },
        };
        Ok((
            IntegrationSettings {
                t_final: cfg.t_final_us,
                transient: cfg.transient_us,
                stepping,
                sample_stride: cfg.sample_stride,
            },
            cfg.initial.to_state(),
        ))
    }

    /// Lyapunov settings over the sampled window unless overridden.
    pub fn lyapunov_settings(&self, integration: &IntegrationSettings) -> LyapunovSettings {
        let defaults = LyapunovSettings::default();
        let cfg = self.analysis.and_then(|a| a.lyapunov).unwrap_or_default();
        let step = match integration.stepping {
            Stepping::Fixed { dt } => dt,
            Stepping::Adaptive { .. } => defaults.dt,
        };
        LyapunovSettings {
            dt: cfg.dt_us.unwrap_or(step),
            transient: cfg.transient_us.unwrap_or(integration.transient),
            horizon: cfg
                .horizon_us
                .unwrap_or(integration.t_final - integration.transient),
            renorm_interval: cfg.renorm_interval_us.unwrap_or(defaults.renorm_interval),
            perturbation: cfg.perturbation.unwrap_or(defaults.perturbation),
        }
    }

    pub fn welch(&self, n_samples: usize) -> WelchSettings {
        let analysis = self.analysis.unwrap_or_default();
        let default = WelchSettings::eight_segments(n_samples);
        WelchSettings {
            segment_length: analysis.segment_length.unwrap_or(default.segment_length),
            overlap: analysis.overlap.unwrap_or(default.overlap),
        }
    }

    /// Decoupling band in rad/µs. Missing edges fall back to the Welch grid.
    pub fn band(&self, welch: &WelchSettings, dt: f64) -> Option<(f64, f64)> {
        let analysis = self.analysis.unwrap_or_default();
        if analysis.omega_l_hz.is_none() && analysis.omega_u_hz.is_none() {
            return None;
        }
        let d_omega = 2.0 * std::f64::consts::PI / (welch.segment_length as f64 * dt);
        let lo = analysis.omega_l_hz.map(hz_to_rad_per_us).unwrap_or(d_omega);
        let hi = analysis
            .omega_u_hz
            .map(hz_to_rad_per_us)
            .unwrap_or((welch.segment_length / 2) as f64 * d_omega);
        Some((lo, hi))
    }

    pub fn memory(&self) -> Result<&MemoryConfig, CliError> {
        self.memory
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `memory` block".into()))
    }
}

impl MemoryConfig {
    /// `ν/2π` in Hz, given directly or from `(G_s|α_d|)²/γ_s`.
    pub fn nu_hz(&self) -> Result<f64, CliError> {
        match (self.nu_hz, self.g_s_hz, self.alpha_d, self.gamma_s_hz) {
            (Some(nu), None, None, None) => Ok(nu),
            (None, Some(g), Some(a), Some(gamma)) => {
                let nu = nu_from_physical(hz_to_rad_per_s(g), a.abs(), hz_to_rad_per_s(gamma))
                    .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(nu / (2.0 * std::f64::consts::PI))
            }
            _ => Err(CliError::Config(
                "memory: give either `nu_hz` or all of `g_s_hz`, `alpha_d`, `gamma_s_hz`".into(),
            )),
        }
    }

    pub fn occupancy(&self, physical: Option<&LoopParamsHz>) -> Result<f64, CliError> {
        match (self.n, self.temperature_k) {
            (Some(n), None) => Ok(n),
            (None, Some(t)) => {
                let omega1_hz = self
                    .omega1_hz
                    .or(physical.map(|p| p.omega1_over_2pi_hz))
                    .ok_or_else(|| {
                        CliError::Config(
                            "memory: `temperature_k` needs `omega1_hz` or a `physical` block"
                                .into(),
                        )
                    })?;
                if !(t >= 0.0 && omega1_hz > 0.0) {
                    return Err(CliError::Config(
                        "memory: need temperature_k >= 0 and omega1_hz > 0".into(),
                    ));
                }
                Ok(thermal_occupancy(t, hz_to_rad_per_s(omega1_hz)))
            }
            _ => Err(CliError::Config(
                "memory: give exactly one of `n` and `temperature_k`".into(),
            )),
        }
    }

    pub fn nu_grid_hz(&self) -> Result<Vec<f64>, CliError> {
        match &self.nu_hz_grid {
            Some(g) => Ok(g.clone()),
            None => Ok(vec![self.nu_hz()?]),
        }
    }

    pub fn n_grid(&self, physical: Option<&LoopParamsHz>) -> Result<Vec<f64>, CliError> {
        match &self.n_grid {
            Some(g) => Ok(g.clone()),
            None => Ok(vec![self.occupancy(physical)?]),
        }
    }
}
