//! Spectral analysis of the control signal and the decoupling factor `M`.
//!
//! Densities are one-sided over angular frequency and normalized so that a
//! tone `A cos(ω₀ t)` integrates to `A²/(2π)`. With that convention the
//! small-modulation estimate `M = exp[−π ∫ S_f(ω)/ω² dω]` reduces to
//! `exp(−A²/2ω₀²) ≈ J₀(A/ω₀)²` for a single tone.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::cumulative_trapezoid;

/// Floor applied to densities before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid Welch settings: {0}")]
    Settings(String),
    #[error("empty or invalid band [{lo}, {hi}] (spectrum covers [{min}, {max}])")]
    EmptyBand {
        lo: f64,
        hi: f64,
        min: f64,
        max: f64,
    },
    #[error("spectrum is identically zero")]
    ZeroSpectrum,
}

/// Normalization of [`PowerSpectrum::density`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// A tone `A cos(ω₀t)` integrates to `A²/(2π)` over angular frequency.
    #[serde(rename = "tone-integral A^2/(2pi)")]
    ToneIntegral,
}

/// One-sided density over strictly positive angular frequencies (rad/µs).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub omega: Vec<f64>,
    pub density: Vec<f64>,
    pub convention: Convention,
}

impl PowerSpectrum {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Trapezoidal `∫ S dω` over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.omega, &self.density)
    }

    /// Sub-spectrum with `lo <= ω <= hi`.
    pub fn band(&self, lo: f64, hi: f64) -> PowerSpectrum {
        let (omega, density) = self
            .omega
            .iter()
            .zip(&self.density)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, d)| (*w, *d))
            .unzip();
        PowerSpectrum {
            omega,
            density,
            convention: self.convention,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "omega_rad_per_us,density")?;
        for (o, d) in self.omega.iter().zip(&self.density) {
            writeln!(w, "{o:.16e},{d:.16e}")?;
        }
        Ok(())
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Welch segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchSettings {
    pub segment_length: usize,
    pub overlap: f64,
}

impl WelchSettings {
    /// Eight Hann segments at 50% overlap spanning `n` samples.
    pub fn eight_segments(n: usize) -> Self {
        WelchSettings {
            segment_length: (2 * n / 9).max(2),
            overlap: 0.5,
        }
    }

    fn segments(&self, n: usize) -> Result<(usize, usize), SpectralError> {
        let len = self.segment_length;
        if len < 2 {
            return Err(SpectralError::Settings(
                "segment_length must be >= 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(SpectralError::Settings(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        let hop = ((len as f64) * (1.0 - self.overlap)).round().max(1.0) as usize;
        let count = if n >= len { (n - len) / hop + 1 } else { 0 };
        Ok((hop, count))
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / len as f64).cos()))
        .collect()
}

/// Averages `|FFT(w · segment)|²` over Welch segments. `prepare` maps each raw
/// segment to the complex FFT input before windowing.
fn welch_average<T: Copy>(
    x: &[T],
    settings: &WelchSettings,
    prepare: impl Fn(&[T]) -> Vec<Complex64>,
) -> Result<(Vec<f64>, f64), SpectralError> {
    let (hop, count) = settings.segments(x.len())?;
    let len = settings.segment_length;
    if count == 0 {
        return Err(SpectralError::InsufficientData {
            needed: len,
            got: x.len(),
        });
    }
    let window = hann(len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut acc = vec![0.0; len];
    let mut buf = Vec::with_capacity(len);
    for seg in 0..count {
        let start = seg * hop;
        buf.clear();
        buf.extend(
            prepare(&x[start..start + len])
                .into_iter()
                .zip(&window)
                .map(|(v, w)| v * *w),
        );
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok((acc, window_power))
}

/// Welch estimate of the one-sided density of a real signal sampled every
/// `dt` µs, Hann-windowed, mean removed per segment, DC bin dropped.
pub fn estimate_psd(
    signal: &[f64],
    dt: f64,
    segment_length: usize,
    overlap_fraction: f64,
) -> Result<PowerSpectrum, SpectralError> {
    if signal.len() < 2 * segment_length {
        return Err(SpectralError::InsufficientData {
            needed: 2 * segment_length,
            got: signal.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(SpectralError::Settings("dt must be positive".into()));
    }
    let settings = WelchSettings {
        segment_length,
        overlap: overlap_fraction,
    };
    // Window-weighted mean: a plain mean leaves DC residue in bin 1 after
    // windowing, which the 1/ω² weight of the decoupling integral amplifies.
    let window = hann(segment_length);
    let window_sum: f64 = window.iter().sum();
    let (power, window_power) = welch_average(signal, &settings, |seg| {
        let mean = seg.iter().zip(&window).map(|(v, w)| v * w).sum::<f64>() / window_sum;
        seg.iter().map(|v| Complex64::new(v - mean, 0.0)).collect()
    })?;
    let len = segment_length;
    let d_omega = 2.0 * PI / (len as f64 * dt);
    let (omega, density) = (1..=len / 2)
        .map(|m| {
            let one_sided = if 2 * m == len { 1.0 } else { 2.0 };
            let per_hz = one_sided * power[m] * dt / window_power;
            (m as f64 * d_omega, per_hz / (2.0 * PI * PI))
        })
        .unzip();
    Ok(PowerSpectrum {
        omega,
        density,
        convention: Convention::ToneIntegral,
    })
}

/// `M = exp[−π ∫_{ω_l}^{ω_u} S(ω)/ω² dω]`, trapezoidal with linear
/// interpolation at the band edges.
pub fn decoupling_factor_spectral(
    psd: &PowerSpectrum,
    omega_l: f64,
    omega_u: f64,
) -> Result<f64, SpectralError> {
    let min = psd.omega.first().copied().unwrap_or(f64::NAN);
    let max = psd.omega.last().copied().unwrap_or(f64::NAN);
    let tol = 1e-12 * max.abs();
    if !(omega_l > 0.0 && omega_l < omega_u && omega_l >= min - tol && omega_u <= max + tol) {
        return Err(SpectralError::EmptyBand {
            lo: omega_l,
            hi: omega_u,
            min,
            max,
        });
    }
    let omega_l = omega_l.max(min);
    let omega_u = omega_u.min(max);
    let integrand: Vec<f64> = psd
        .omega
        .iter()
        .zip(&psd.density)
        .map(|(w, s)| s / (w * w))
        .collect();
    let interp = |w: f64| -> f64 {
        let k = psd.omega.partition_point(|x| *x < w);
        if k == 0 {
            return integrand[0];
        }
        if k >= psd.omega.len() {
            return integrand[psd.omega.len() - 1];
        }
        let (x0, x1) = (psd.omega[k - 1], psd.omega[k]);
        let t = (w - x0) / (x1 - x0);
        integrand[k - 1] * (1.0 - t) + integrand[k] * t
    };
    let mut xs = vec![omega_l];
    let mut ys = vec![interp(omega_l)];
    for (w, v) in psd.omega.iter().zip(&integrand) {
        if *w > omega_l && *w < omega_u {
            xs.push(*w);
            ys.push(*v);
        }
    }
    xs.push(omega_u);
    ys.push(interp(omega_u));
    Ok((-PI * trapezoid(&xs, &ys)).exp())
}

/// `M = |⟨exp(−iθ)⟩|²` with `θ` the trapezoidal running integral of the
/// mean-removed signal.
pub fn decoupling_factor_direct(f: &[f64], dt: f64) -> f64 {
    if f.len() < 2 {
        return 1.0;
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let centered: Vec<f64> = f.iter().map(|v| v - mean).collect();
    let theta = cumulative_trapezoid(&centered, dt);
    let avg = theta
        .iter()
        .map(|th| Complex64::from_polar(1.0, -th))
        .sum::<Complex64>()
        / theta.len() as f64;
    avg.norm_sqr().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingResult {
    pub m_spectral: f64,
    pub m_direct: f64,
    /// rad/µs
    pub omega_l: f64,
    /// rad/µs
    pub omega_u: f64,
    /// Time-mean of `f`, rad/µs.
    pub mean_f: f64,
}

/// Both estimators on one signal. The band defaults to the full Welch grid
/// (first nonzero bin to Nyquist).
pub fn analyze_decoupling(
    f: &[f64],
    dt: f64,
    welch: &WelchSettings,
    band: Option<(f64, f64)>,
) -> Result<DecouplingResult, SpectralError> {
    let psd = estimate_psd(f, dt, welch.segment_length, welch.overlap)?;
    let (omega_l, omega_u) = band.unwrap_or((psd.omega[0], *psd.omega.last().unwrap()));
    Ok(DecouplingResult {
        m_spectral: decoupling_factor_spectral(&psd, omega_l, omega_u)?,
        m_direct: decoupling_factor_direct(f, dt),
        omega_l,
        omega_u,
        mean_f: f.iter().sum::<f64>() / f.len() as f64,
    })
}

/// Two-sided density of a complex mode amplitude, presented so that a
/// component `e^{−iωt}` appears at `+ω`. Normalized per rad/µs so that the
/// integral equals the mean of `|x|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub omega: Vec<f64>,
    pub density: Vec<f64>,
}

impl ModeSpectrum {
    pub fn band(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.omega
            .iter()
            .zip(&self.density)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(_, d)| *d)
            .collect()
    }

    pub fn to_db(&self, reference_power: f64) -> Vec<f64> {
        self.density
            .iter()
            .map(|d| 10.0 * (d.max(DENSITY_FLOOR) / reference_power).log10())
            .collect()
    }

    /// `(ω, density)` of the largest bin.
    pub fn peak(&self) -> (f64, f64) {
        self.omega
            .iter()
            .zip(&self.density)
            .fold((f64::NAN, f64::NEG_INFINITY), |best, (w, d)| {
                if *d > best.1 {
                    (*w, *d)
                } else {
                    best
                }
            })
    }

    /// Peak height above the median bin, dB.
    pub fn peak_over_median_db(&self) -> f64 {
        let mut sorted = self.density.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = sorted[sorted.len() / 2].max(DENSITY_FLOOR);
        10.0 * (self.peak().1.max(DENSITY_FLOOR) / median).log10()
    }

    pub fn write_db_csv<W: Write>(&self, reference_power: f64, mut w: W) -> io::Result<()> {
        writeln!(w, "omega_rad_per_us,db")?;
        for (o, db) in self.omega.iter().zip(self.to_db(reference_power)) {
            writeln!(w, "{o:.16e},{db:.16e}")?;
        }
        Ok(())
    }
}

/// Welch spectrum of a complex mode amplitude.
pub fn mode_spectrum(
    x: &[Complex64],
    dt: f64,
    welch: &WelchSettings,
) -> Result<ModeSpectrum, SpectralError> {
    if x.len() < 256 {
        return Err(SpectralError::InsufficientData {
            needed: 256,
            got: x.len(),
        });
    }
    let (power, window_power) = welch_average(x, welch, |seg| seg.to_vec())?;
    let len = welch.segment_length;
    let d_omega = 2.0 * PI / (len as f64 * dt);
    let mut pairs: Vec<(f64, f64)> = (0..len)
        .map(|m| {
            let signed = if m <= len / 2 {
                m as f64
            } else {
                m as f64 - len as f64
            };
            (-signed * d_omega, power[m] * dt / (window_power * 2.0 * PI))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (omega, density) = pairs.into_iter().unzip();
    Ok(ModeSpectrum { omega, density })
}

/// `(ω, dB)` of a complex mode amplitude relative to `reference_power`,
/// eight Hann segments at 50% overlap.
pub fn mode_spectrum_db(
    x: &[Complex64],
    dt: f64,
    reference_power: f64,
) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let spec = mode_spectrum(x, dt, &WelchSettings::eight_segments(x.len()))?;
    let db = spec.to_db(reference_power);
    Ok((spec.omega, db))
}

/// Geometric over arithmetic mean of a set of densities.
pub fn flatness(density: &[f64]) -> Result<f64, SpectralError> {
    if density.is_empty() || density.iter().all(|d| *d <= 0.0) {
        return Err(SpectralError::ZeroSpectrum);
    }
    let n = density.len() as f64;
    let log_mean = density
        .iter()
        .map(|d| d.max(DENSITY_FLOOR).ln())
        .sum::<f64>()
        / n;
    let mean = density.iter().map(|d| d.max(0.0)).sum::<f64>() / n;
    Ok((log_mean.exp() / mean).min(1.0))
}

pub fn spectral_flatness(psd: &PowerSpectrum) -> Result<f64, SpectralError> {
    flatness(&psd.density)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(amp: f64, omega: f64, dt: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|k| amp * (omega * k as f64 * dt + phase).cos())
            .collect()
    }

    #[test]
    fn zero_signal_zero_density() {
        let psd = estimate_psd(&vec![0.0; 4096], 0.01, 1024, 0.5).unwrap();
        assert!(psd.density.iter().all(|d| *d == 0.0));
        assert_eq!(
            decoupling_factor_spectral(&psd, psd.omega[0], 100.0).unwrap(),
            1.0
        );
    }

    #[test]
    fn short_signal_is_rejected() {
        assert_eq!(
            estimate_psd(&vec![0.0; 100], 0.01, 64, 0.5),
            Err(SpectralError::InsufficientData {
                needed: 128,
                got: 100
            })
        );
    }

    #[test]
    fn bad_overlap_is_rejected() {
        assert!(matches!(
            estimate_psd(&vec![0.0; 1000], 0.01, 100, 1.0),
            Err(SpectralError::Settings(_))
        ));
    }

    #[test]
    fn tone_integral_convention() {
        let (dt, n) = (0.01, 1 << 16);
        let psd = estimate_psd(&tone(2.0, 37.3, dt, n, 0.4), dt, n / 8, 0.5).unwrap();
        let expect = 4.0 / (2.0 * PI);
        assert!(
            (psd.integral() / expect - 1.0).abs() < 0.01,
            "{}",
            psd.integral()
        );
        assert_eq!(psd.convention, Convention::ToneIntegral);
        assert!(psd.omega.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn two_tones_add() {
        let (dt, n) = (0.01, 1 << 16);
        let a = tone(1.0, 20.0, dt, n, 0.0);
        let b = tone(0.5, 70.0, dt, n, 1.0);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let integral = |s: &[f64]| estimate_psd(s, dt, n / 8, 0.5).unwrap().integral();
        let (ia, ib, is) = (integral(&a), integral(&b), integral(&sum));
        assert!((is / (ia + ib) - 1.0).abs() < 0.02);
    }

    #[test]
    fn single_tone_spectral_factor() {
        let (dt, n) = (0.002, 1 << 18);
        let omega0 = 50.0;
        let psd = estimate_psd(&tone(0.1 * omega0, omega0, dt, n, 0.0), dt, n / 8, 0.5).unwrap();
        let m = decoupling_factor_spectral(&psd, psd.omega[0], *psd.omega.last().unwrap()).unwrap();
        assert!((m - 0.995012).abs() < 1e-5, "{m}");
    }

    #[test]
    fn empty_band_is_rejected() {
        let psd = estimate_psd(&vec![1.0; 1024], 0.01, 256, 0.5).unwrap();
        for (lo, hi) in [(5.0, 5.0), (0.0, 10.0), (10.0, 1e6), (20.0, 10.0)] {
            assert!(matches!(
                decoupling_factor_spectral(&psd, lo, hi),
                Err(SpectralError::EmptyBand { .. })
            ));
        }
    }

    #[test]
    fn direct_factor_constant_signal() {
        assert_eq!(decoupling_factor_direct(&vec![3.7; 1000], 0.1), 1.0);
    }

    #[test]
    fn line_spectrum_peak() {
        let (dt, n, omega1) = (0.01, 1 << 14, 6.3);
        let x: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, -omega1 * k as f64 * dt))
            .collect();
        let spec = mode_spectrum(&x, dt, &WelchSettings::eight_segments(n)).unwrap();
        let (w, _) = spec.peak();
        let resolution = 2.0 * PI / (spec.omega.len() as f64 * dt);
        assert!((w - omega1).abs() <= resolution, "{w}");
        assert!(spec.peak_over_median_db() >= 40.0);
        let (omega, db) = mode_spectrum_db(&x, dt, 1.0).unwrap();
        assert_eq!(omega.len(), db.len());
    }

    #[test]
    fn mode_spectrum_needs_256_samples() {
        assert!(matches!(
            mode_spectrum_db(&vec![Complex64::new(1.0, 0.0); 255], 0.1, 1.0),
            Err(SpectralError::InsufficientData { needed: 256, .. })
        ));
    }

    #[test]
    fn flatness_extremes() {
        assert!((flatness(&vec![2.5; 64]).unwrap() - 1.0).abs() < 1e-12);
        let mut line = vec![0.0; 64];
        line[10] = 1.0;
        assert!(flatness(&line).unwrap() < 1e-100);
        assert_eq!(flatness(&[0.0; 8]), Err(SpectralError::ZeroSpectrum));
    }

    #[test]
    fn result_json_fields() {
        let r = DecouplingResult {
            m_spectral: 0.5,
            m_direct: 0.4,
            omega_l: 1.0,
            omega_u: 2.0,
            mean_f: 3.0,
        };
        let v = serde_json::to_value(r).unwrap();
        for key in ["m_spectral", "m_direct", "omega_l", "omega_u", "mean_f"] {
            assert!(v.get(key).is_some());
        }
    }
}
