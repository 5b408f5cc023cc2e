//! End-to-end loop analysis: integrate, extract `f(t)`, estimate `M` both
//! ways, characterize the membrane spectrum and optionally the largest
//! Lyapunov exponent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    control_signal_f, integrate, largest_lyapunov, DynamicsError, InitialConditions,
    IntegrationSettings, LyapunovSettings, PhysicalParams, Trajectory,
};
use crate::spectral::{
    analyze_decoupling, flatness, mode_spectrum, DecouplingResult, ModeSpectrum, SpectralError,
    WelchSettings,
};
use crate::units::rad_per_us_to_hz;

/// Upper edge of the membrane band used for flatness, in units of `Ω₁`.
pub const FLATNESS_BAND_FACTOR: f64 = 20.0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopAnalysisSettings {
    pub integration: IntegrationSettings,
    pub init: InitialConditions,
    /// Welch segmentation; `None` uses eight segments at 50% overlap.
    pub welch: Option<WelchSettings>,
    /// Band for the spectral `M`, rad/µs; `None` uses the whole Welch grid.
    pub band: Option<(f64, f64)>,
    pub lyapunov: Option<LyapunovSettings>,
}

impl LoopAnalysisSettings {
    /// 100 µs at a fixed 1e-5 µs step, 20 µs transient, membrane started at
    /// `β₁ = 1`, Lyapunov estimate with default settings.
    pub fn fig4() -> Self {
        LoopAnalysisSettings {
            integration: IntegrationSettings::fixed(100.0, 20.0),
            init: InitialConditions::membrane_excited(),
            welch: None,
            band: None,
            lyapunov: Some(LyapunovSettings::default()),
        }
    }
}

/// Scalar results of a loop analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub decoupling: DecouplingResult,
    /// Time-mean of `f/2π`, Hz.
    pub mean_f_hz: f64,
    /// Standard deviation of `f/2π`, Hz.
    pub std_f_hz: f64,
    /// Flatness of the membrane spectrum over `(0, 20Ω₁]`.
    pub beta1_flatness: f64,
    pub beta1_peak_over_median_db: f64,
    /// Largest Lyapunov exponent, 1/µs.
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LoopAnalysis {
    pub trajectory: Trajectory,
    pub control_signal: Vec<f64>,
    pub beta1_spectrum: ModeSpectrum,
    pub summary: LoopSummary,
}

pub fn analyze_loop(
    params: &PhysicalParams,
    settings: &LoopAnalysisSettings,
) -> Result<LoopAnalysis, PipelineError> {
    let trajectory = integrate(params, &settings.init, &settings.integration)?;
    let f = control_signal_f(&trajectory, params.g1);
    let dt = trajectory.dt_sample;
    let welch = settings
        .welch
        .unwrap_or_else(|| WelchSettings::eight_segments(f.len()));
    let decoupling = analyze_decoupling(&f, dt, &welch, settings.band)?;

    let beta1_spectrum = mode_spectrum(&trajectory.beta1(), dt, &welch)?;
    let band = beta1_spectrum.band(f64::MIN_POSITIVE, FLATNESS_BAND_FACTOR * params.omega1);
    let beta1_flatness = flatness(&band)?;
    let beta1_peak_over_median_db = beta1_spectrum.peak_over_median_db();

    let lambda_max = settings
        .lyapunov
        .map(|l| largest_lyapunov(params, &settings.init, &l))
        .transpose()?;

    let mean = decoupling.mean_f;
    let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64;
    let summary = LoopSummary {
        decoupling,
        mean_f_hz: rad_per_us_to_hz(mean),
        std_f_hz: rad_per_us_to_hz(var.sqrt()),
        beta1_flatness,
        beta1_peak_over_median_db,
        lambda_max,
    };
    Ok(LoopAnalysis {
        trajectory,
        control_signal: f,
        beta1_spectrum,
        summary,
    })
}
