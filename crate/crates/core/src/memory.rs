//! Optomechanical quantum memory with a noise-decoupled membrane.
//!
//! After adiabatic elimination of the write cavity the stored mode obeys
//! `ḃ = −(ν+Γ₁)/2 · b − √ν a_d − √Γ₁ b_in`. Its quadrature covariance follows
//! the Lyapunov equation `V̇ = AV + VAᵀ + Γ₁(n+½)I + νΛ` with the scalar drift
//! `A = −(ν+Γ₁)/2 · I`, so the steady state and the storage fidelity of a
//! pure Gaussian input have closed forms. Vacuum covariance is `I/2`.
//!
//! Rates are angular frequencies in any consistent unit; times passed to
//! [`evolve_covariance`] must use the reciprocal unit.

use nalgebra::Matrix2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{BOLTZMANN, HBAR};

/// Largest `dt · (ν + Γ₁)` used by [`evolve_covariance`].
pub const LYAPUNOV_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("decoupling factor must lie in [0, 1], got {0}")]
    DecouplingOutOfRange(f64),
    #[error("invalid memory parameters: {0}")]
    Params(String),
    #[error("cavity damping gamma_s must be positive")]
    ZeroCavityDamping,
    #[error("evolution time must be finite and >= 0, got {0}")]
    Time(f64),
    #[error("empty grid")]
    EmptyGrid,
}

/// `Γ₁′ = M Γ₁`.
pub fn effective_damping(m_factor: f64, gamma1: f64) -> Result<f64, MemoryError> {
    if !(0.0..=1.0).contains(&m_factor) {
        return Err(MemoryError::DecouplingOutOfRange(m_factor));
    }
    Ok(m_factor * gamma1)
}

/// Transfer rate `ν = (G_s |α_d|)² / γ_s`.
pub fn nu_from_physical(g_s: f64, alpha_d_mag: f64, gamma_s: f64) -> Result<f64, MemoryError> {
    if !(gamma_s > 0.0) {
        return Err(MemoryError::ZeroCavityDamping);
    }
    Ok((g_s * alpha_d_mag).powi(2) / gamma_s)
}

/// High-temperature occupancy `k_B T / ħΩ₁`, with `omega1` in rad/s.
pub fn thermal_occupancy(temperature: f64, omega1: f64) -> f64 {
    BOLTZMANN * temperature / (HBAR * omega1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryParams {
    /// Transfer rate ν.
    pub nu: f64,
    /// Mechanical damping Γ₁ (or Γ₁′ under decoupling).
    pub gamma1: f64,
    /// Mean thermal occupancy n.
    pub n: f64,
}

impl MemoryParams {
    pub fn new(nu: f64, gamma1: f64, n: f64) -> Result<Self, MemoryError> {
        let p = MemoryParams { nu, gamma1, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        let finite = self.nu.is_finite() && self.gamma1.is_finite() && self.n.is_finite();
        if !finite || self.nu < 0.0 || self.gamma1 < 0.0 || self.n < 0.0 {
            return Err(MemoryError::Params(format!(
                "need finite nu, gamma1, n >= 0 (got {self:?})"
            )));
        }
        if self.nu + self.gamma1 <= 0.0 {
            return Err(MemoryError::Params("nu + gamma1 must be positive".into()));
        }
        Ok(())
    }

    /// Total relaxation rate `ν + Γ₁`.
    pub fn total_rate(&self) -> f64 {
        self.nu + self.gamma1
    }
}

/// Pure squeezed-input statistics: effective photon number `N` and the
/// (real, phase-aligned) squeezing parameter `M_sq` with `M_sq² = N(N+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSpec {
    pub s: f64,
    pub n_photons: f64,
    pub m_sq: f64,
}

/// `r = s/2`, `N = sinh² r`, `M_sq = sinh r cosh r`.
pub fn squeezing_from_s(s: f64) -> SqueezingSpec {
    let r = 0.5 * s;
    SqueezingSpec {
        s,
        n_photons: r.sinh().powi(2),
        m_sq: r.sinh() * r.cosh(),
    }
}

/// Symmetrized 2×2 quadrature covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(pub Matrix2<f64>);

impl CovarianceMatrix {
    pub fn diag(x: f64, p: f64) -> Self {
        CovarianceMatrix(Matrix2::new(x, 0.0, 0.0, p))
    }

    pub fn vacuum() -> Self {
        Self::diag(0.5, 0.5)
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[(0, 1)] - self.0[(1, 0)]).abs() <= tol
    }

    /// Largest elementwise difference.
    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

/// `V₀ = diag(e^s, e^{−s})/2`.
pub fn input_covariance(s: f64) -> CovarianceMatrix {
    CovarianceMatrix::diag(0.5 * s.exp(), 0.5 * (-s).exp())
}

/// `Λ = ½ diag(2N+1+2M_sq, 2N+1−2M_sq)` for real `M_sq`.
pub fn lambda_matrix(spec: &SqueezingSpec) -> CovarianceMatrix {
    let base = 2.0 * spec.n_photons + 1.0;
    CovarianceMatrix::diag(
        0.5 * (base + 2.0 * spec.m_sq),
        0.5 * (base - 2.0 * spec.m_sq),
    )
}

/// `⟨b(∞)⟩ = −2√ν α_d / (ν + Γ₁)`.
pub fn steady_state_mean(params: &MemoryParams, alpha_d: Complex64) -> Complex64 {
    -2.0 * params.nu.sqrt() * alpha_d / params.total_rate()
}

/// `V_∞ = [Γ₁(n+½)I + νΛ] / (ν+Γ₁)`.
pub fn steady_state_covariance(params: &MemoryParams, lam: &CovarianceMatrix) -> CovarianceMatrix {
    let thermal = params.gamma1 * (params.n + 0.5) * Matrix2::identity();
    CovarianceMatrix((thermal + params.nu * lam.0) / params.total_rate())
}

fn lyapunov_rhs(params: &MemoryParams, lam: &CovarianceMatrix) -> impl Fn(&[f64; 4]) -> [f64; 4] {
    let a = -0.5 * params.total_rate();
    let diffusion = params.gamma1 * (params.n + 0.5) * Matrix2::identity() + params.nu * lam.0;
    move |v| {
        let v = Matrix2::new(v[0], v[1], v[2], v[3]);
        // A V + V Aᵀ with A = a·I
        let dv = 2.0 * a * v + diffusion;
        [dv[(0, 0)], dv[(0, 1)], dv[(1, 0)], dv[(1, 1)]]
    }
}

/// RK4 integration of the covariance Lyapunov equation from `v0` over `t`.
pub fn evolve_covariance(
    params: &MemoryParams,
    lam: &CovarianceMatrix,
    v0: &CovarianceMatrix,
    t: f64,
) -> Result<CovarianceMatrix, MemoryError> {
    params.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(MemoryError::Time(t));
    }
    if t == 0.0 {
        return Ok(*v0);
    }
    let steps = (t * params.total_rate() / LYAPUNOV_STEP).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let f = lyapunov_rhs(params, lam);
    let m = v0.0;
    let mut y = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
    for _ in 0..steps {
        y = crate::dynamics::ode::rk4_step(&f, &y, dt);
        // keep the iterate exactly symmetric
        let off = 0.5 * (y[1] + y[2]);
        y[1] = off;
        y[2] = off;
    }
    Ok(CovarianceMatrix(Matrix2::new(y[0], y[1], y[2], y[3])))
}

/// Steady-state storage fidelity of a pure squeezed input,
/// `∏_{j=±s} [e^j + Γ₁(2n+1−e^j) / 2(ν+Γ₁)]^{−1/2}`.
pub fn fidelity_squeezed(params: &MemoryParams, s: f64) -> f64 {
    let ratio = params.gamma1 / (2.0 * params.total_rate());
    [s, -s]
        .iter()
        .map(|j| {
            let e = j.exp();
            (e + ratio * (2.0 * params.n + 1.0 - e)).powf(-0.5)
        })
        .product()
}

/// Same quantity as [`fidelity_squeezed`] via `1/√det(V_∞ + V₀)`.
pub fn fidelity_from_covariances(v_inf: &CovarianceMatrix, v0: &CovarianceMatrix) -> f64 {
    1.0 / (v_inf.0 + v0.0).determinant().sqrt()
}

/// Coherent-input fidelity `[1 + Γ₁n/(ν+Γ₁)]^{−1}`.
pub fn fidelity_coherent(params: &MemoryParams) -> f64 {
    1.0 / (1.0 + params.gamma1 * params.n / params.total_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub nu: f64,
    pub n: f64,
    pub s: f64,
    pub fidelity: f64,
}

/// Fidelity on the grid `nu × n × s`, row-major with `s` fastest.
pub fn fidelity_surface(
    nu_grid: &[f64],
    n_grid: &[f64],
    s_grid: &[f64],
    gamma1: f64,
) -> Result<Vec<SurfacePoint>, MemoryError> {
    if nu_grid.is_empty() || n_grid.is_empty() || s_grid.is_empty() {
        return Err(MemoryError::EmptyGrid);
    }
    let total = nu_grid.len() * n_grid.len() * s_grid.len();
    (0..total)
        .into_par_iter()
        .map(|k| {
            let s = s_grid[k % s_grid.len()];
            let n = n_grid[(k / s_grid.len()) % n_grid.len()];
            let nu = nu_grid[k / (s_grid.len() * n_grid.len())];
            let p = MemoryParams::new(nu, gamma1, n)?;
            Ok(SurfacePoint {
                nu,
                n,
                s,
                fidelity: fidelity_squeezed(&p, s),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    #[test]
    fn effective_damping_cases() {
        assert_eq!(effective_damping(1.0, 3.0).unwrap(), 3.0);
        assert_eq!(effective_damping(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(
            effective_damping(1.5, 3.0),
            Err(MemoryError::DecouplingOutOfRange(1.5))
        );
        assert!(effective_damping(-0.1, 3.0).is_err());
    }

    #[test]
    fn nu_cases() {
        assert_eq!(nu_from_physical(1.0, 10.0, 2.0).unwrap(), 50.0);
        assert_eq!(nu_from_physical(0.0, 7.0, 2.0).unwrap(), 0.0);
        let a = nu_from_physical(0.3, 1.1, 0.7).unwrap();
        let b = nu_from_physical(0.3, 2.2, 0.7).unwrap();
        assert!((b / a - 4.0).abs() < 1e-14);
        assert_eq!(
            nu_from_physical(1.0, 1.0, 0.0),
            Err(MemoryError::ZeroCavityDamping)
        );
    }

    #[test]
    fn occupancy() {
        assert_eq!(thermal_occupancy(0.0, TWO_PI * 1e6), 0.0);
        let n = thermal_occupancy(300.0, TWO_PI * 1e6);
        assert!((n - 6.25e6).abs() < 0.01e6, "{n}");
        assert!((thermal_occupancy(600.0, TWO_PI * 1e6) / n - 2.0).abs() < 1e-14);
    }

    #[test]
    fn squeezing_values() {
        let z = squeezing_from_s(0.0);
        assert_eq!((z.n_photons, z.m_sq), (0.0, 0.0));
        let p = squeezing_from_s(2.0);
        assert!((p.n_photons - 1.3811).abs() < 1e-4);
        assert!((p.m_sq - 1.8134).abs() < 1e-4);
        let m = squeezing_from_s(-2.0);
        assert_eq!(m.n_photons, p.n_photons);
        assert_eq!(m.m_sq, -p.m_sq);
    }

    #[test]
    fn input_covariance_values() {
        assert_eq!(input_covariance(0.0), CovarianceMatrix::vacuum());
        let v = input_covariance(2.0);
        assert!((v.0[(0, 0)] - 3.69453).abs() < 1e-5);
        assert!((v.0[(1, 1)] - 0.067668).abs() < 1e-6);
    }

    #[test]
    fn lambda_values() {
        assert_eq!(
            lambda_matrix(&squeezing_from_s(0.0)),
            CovarianceMatrix::vacuum()
        );
        let lam = lambda_matrix(&squeezing_from_s(2.0));
        assert!(lam.max_abs_diff(&input_covariance(2.0)) < 1e-14);
        let spec = squeezing_from_s(1.3);
        assert!((lambda_matrix(&spec).0.trace() - (2.0 * spec.n_photons + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn mean_values() {
        let p = MemoryParams::new(4.0, 4.0, 0.0).unwrap();
        assert_eq!(
            steady_state_mean(&p, Complex64::new(0.0, 0.0)),
            Complex64::new(0.0, 0.0)
        );
        assert!((steady_state_mean(&p, Complex64::new(1.0, 0.0)).re + 0.5).abs() < 1e-15);
        let p = MemoryParams::new(9.0, 0.0, 0.0).unwrap();
        let alpha = Complex64::new(0.3, -0.2);
        assert!((steady_state_mean(&p, alpha) + 2.0 * alpha / 3.0).norm() < 1e-15);
    }

    #[test]
    fn steady_covariance_limits() {
        let vac = CovarianceMatrix::vacuum();
        let p = MemoryParams::new(3.0, 2.0, 0.0).unwrap();
        assert!(steady_state_covariance(&p, &vac).max_abs_diff(&vac) < 1e-15);
        let p = MemoryParams::new(0.0, 2.0, 7.0).unwrap();
        assert!(
            steady_state_covariance(&p, &vac).max_abs_diff(&CovarianceMatrix::diag(7.5, 7.5))
                < 1e-14
        );
    }

    #[test]
    fn evolution_edge_cases() {
        let p = MemoryParams::new(1.0, 0.5, 3.0).unwrap();
        let lam = lambda_matrix(&squeezing_from_s(0.7));
        let v0 = input_covariance(-1.0);
        assert_eq!(evolve_covariance(&p, &lam, &v0, 0.0).unwrap(), v0);
        let v_inf = steady_state_covariance(&p, &lam);
        let v = evolve_covariance(&p, &lam, &v_inf, 123.0).unwrap();
        assert!(v.max_abs_diff(&v_inf) < 1e-10);
        assert_eq!(
            evolve_covariance(&p, &lam, &v0, -1.0),
            Err(MemoryError::Time(-1.0))
        );
    }

    #[test]
    fn fidelity_limits() {
        let p = MemoryParams::new(2.0, 0.0, 1e5).unwrap();
        assert!((fidelity_squeezed(&p, 3.0) - 1.0).abs() < 1e-12);
        let p = MemoryParams::new(2.0, 0.3, 1e3).unwrap();
        assert!((fidelity_squeezed(&p, 0.0) - fidelity_coherent(&p)).abs() < 1e-15);
        let p = MemoryParams::new(2.0, 0.3, 0.0).unwrap();
        assert_eq!(fidelity_coherent(&p), 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(MemoryParams::new(0.0, 0.0, 1.0).is_err());
        assert!(MemoryParams::new(-1.0, 1.0, 1.0).is_err());
        assert!(MemoryParams::new(1.0, 1.0, -1.0).is_err());
        assert!(MemoryParams::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn surface_ordering_and_empty_grid() {
        let rows = fidelity_surface(&[1.0, 2.0], &[0.0, 10.0], &[-1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!((rows[0].nu, rows[0].n, rows[0].s), (1.0, 0.0, -1.0));
        assert_eq!((rows[4].nu, rows[4].n, rows[4].s), (1.0, 10.0, 0.0));
        assert_eq!((rows[11].nu, rows[11].n, rows[11].s), (2.0, 10.0, 1.0));
        assert_eq!(
            fidelity_surface(&[], &[1.0], &[0.0], 1.0),
            Err(MemoryError::EmptyGrid)
        );
    }
}
