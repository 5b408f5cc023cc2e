use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chaosfb_core::dynamics::{
    control_signal_f, integrate, largest_lyapunov, LoopParamsHz, PhysicalParams, Stepping,
};
use chaosfb_core::memory::{effective_damping, fidelity_squeezed, fidelity_surface, MemoryParams};
use chaosfb_core::pipeline::{
    analyze_loop, LoopAnalysis, LoopAnalysisSettings, FLATNESS_BAND_FACTOR,
};
use chaosfb_core::spectral::{analyze_decoupling, DecouplingResult, ModeSpectrum};
use chaosfb_core::units::{hz_to_rad_per_s, rad_per_us_to_hz};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{json_string, write_atomic, write_json};
use crate::{CliError, Figure};

pub struct Context {
    pub config: Option<RunConfig>,
    pub out: Option<PathBuf>,
    pub fixed_step: Option<f64>,
}

impl Context {
    fn config(&self) -> Result<&RunConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config".into()))
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs --out DIR".into()))
    }

    /// Writes to --out if given, stdout otherwise.
    fn emit(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => write_atomic(path, |w| w.write_all(text.as_bytes()))?,
            None => io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    /// 1/µs
    lambda_max: f64,
    mean_f_hz: f64,
    t_final_us: f64,
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let params = cfg.physical_params()?;
    let (settings, init) = cfg.integration_settings(ctx.fixed_step)?;
    let trajectory = integrate(&params, &init, &settings)?;
    let f = control_signal_f(&trajectory, params.g1);
    let mean_f = f.iter().sum::<f64>() / f.len() as f64;
    let lambda_max = largest_lyapunov(&params, &init, &cfg.lyapunov_settings(&settings))?;
    let summary = SimulateSummary {
        lambda_max,
        mean_f_hz: rad_per_us_to_hz(mean_f),
        t_final_us: settings.t_final,
    };
    write_atomic(&dir.join("trajectory.csv"), |w| trajectory.write_csv(w))?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DecoupleReport {
    #[serde(flatten)]
    result: DecouplingResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    memory: Option<MemoryReport>,
}

#[derive(Debug, Serialize)]
struct MemoryReport {
    nu_hz: f64,
    n: f64,
    gamma1_hz: f64,
    /// `Γ₁′/2π = M_direct Γ₁/2π`.
    gamma1_eff_hz: f64,
    fidelity: Vec<SqueezedFidelity>,
}

#[derive(Debug, Serialize)]
struct SqueezedFidelity {
    s: f64,
    fidelity: f64,
}

pub fn decouple(ctx: &Context, signal: Option<&Path>) -> Result<(), CliError> {
    let default_cfg = RunConfig::default();
    let (f, dt, cfg) = match signal {
        Some(path) => {
            let (f, dt) = read_signal(path)?;
            (f, dt, ctx.config.as_ref().unwrap_or(&default_cfg))
        }
        None => {
            let cfg = ctx.config()?;
            let params = cfg.physical_params()?;
            let (settings, init) = cfg.integration_settings(ctx.fixed_step)?;
            let trajectory = integrate(&params, &init, &settings)?;
            let dt = trajectory.dt_sample;
            (control_signal_f(&trajectory, params.g1), dt, cfg)
        }
    };
    let welch = cfg.welch(f.len());
    let result = analyze_decoupling(&f, dt, &welch, cfg.band(&welch, dt))?;
    let memory = match &cfg.memory {
        Some(mem) => {
            let nu_hz = mem.nu_hz()?;
            let n = mem.occupancy(cfg.physical.as_ref())?;
            let gamma1_eff_hz = effective_damping(result.m_direct, mem.gamma1_hz)?;
            let p = MemoryParams::new(hz_to_rad_per_s(nu_hz), hz_to_rad_per_s(gamma1_eff_hz), n)?;
            let fidelity = mem
                .s_list
                .iter()
                .map(|&s| SqueezedFidelity {
                    s,
                    fidelity: fidelity_squeezed(&p, s),
                })
                .collect();
            Some(MemoryReport {
                nu_hz,
                n,
                gamma1_hz: mem.gamma1_hz,
                gamma1_eff_hz,
                fidelity,
            })
        }
        None => None,
    };
    ctx.emit(&json_string(&DecoupleReport { result, memory }))
}

/// Two-column CSV `t_us,f_rad_per_us`; a non-numeric first line is a header.
fn read_signal(path: &Path) -> Result<(Vec<f64>, f64), CliError> {
    let text = fs::read_to_string(path)?;
    let bad =
        |line: usize, what: &str| CliError::Config(format!("{}:{line}: {what}", path.display()));
    let mut t = Vec::new();
    let mut f = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(bad(k + 1, "expected two columns"));
        }
        match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                t.push(a);
                f.push(b);
            }
            _ if k == 0 => continue,
            _ => return Err(bad(k + 1, "not a number")),
        }
    }
    if t.len() < 2 {
        return Err(bad(0, "need at least two samples"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(bad(0, "time must increase"));
    }
    for (k, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) / dt - 1.0).abs() > 1e-6 {
            return Err(bad(k + 2, "time grid is not uniform"));
        }
    }
    Ok((f, dt))
}

pub fn fidelity(
    ctx: &Context,
    nu_hz: f64,
    gamma1_hz: f64,
    n: f64,
    s: f64,
    m: Option<f64>,
) -> Result<(), CliError> {
    let gamma1_hz = match m {
        Some(m) => effective_damping(m, gamma1_hz)?,
        None => gamma1_hz,
    };
    let p = MemoryParams::new(hz_to_rad_per_s(nu_hz), hz_to_rad_per_s(gamma1_hz), n)?;
    let line = format!("{{\"fidelity\": {:.6}}}\n", fidelity_squeezed(&p, s));
    print!("{line}");
    if let Some(path) = &ctx.out {
        write_atomic(path, |w| w.write_all(line.as_bytes()))?;
    }
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let mem = cfg.memory()?;
    let gamma1_hz = match mem.m_factor {
        Some(m) => effective_damping(m, mem.gamma1_hz)?,
        None => mem.gamma1_hz,
    };
    let csv = surface_csv(
        &mem.nu_grid_hz()?,
        &mem.n_grid(cfg.physical.as_ref())?,
        &mem.s_list,
        gamma1_hz,
    )?;
    ctx.emit(&csv)
}

/// Fidelity grid as CSV `nu_hz,n,s,fidelity`, `s` varying fastest.
fn surface_csv(nu_hz: &[f64], n: &[f64], s: &[f64], gamma1_hz: f64) -> Result<String, CliError> {
    let nu: Vec<f64> = nu_hz.iter().map(|&v| hz_to_rad_per_s(v)).collect();
    let points = fidelity_surface(&nu, n, s, hz_to_rad_per_s(gamma1_hz))?;
    let mut out = String::from("nu_hz,n,s,fidelity\n");
    for (k, p) in points.iter().enumerate() {
        let nu_k = nu_hz[k / (s.len() * n.len())];
        writeln!(out, "{nu_k},{},{},{}", p.n, p.s, p.fidelity).expect("string write");
    }
    Ok(out)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn repro(ctx: &Context, figure: Figure) -> Result<(), CliError> {
    let dir = ctx.out_dir()?;
    let bundle = match figure {
        Figure::Fig4 => fig4_bundle(ctx.fixed_step)?,
        Figure::Fig7 => fig7_bundle()?,
        Figure::Fig8 => fig8_bundle()?,
    };
    let files: Vec<&str> = bundle.files.iter().map(|(name, _)| name.as_str()).collect();
    let mut manifest = bundle.manifest;
    manifest["files"] = json!(files);
    for (name, text) in &bundle.files {
        write_atomic(&dir.join(name), |w| w.write_all(text.as_bytes()))?;
    }
    write_json(&dir.join("MANIFEST.json"), &manifest)?;
    Ok(())
}

struct Bundle {
    files: Vec<(String, String)>,
    manifest: serde_json::Value,
}

/// Loop-figure tolerances, matching the acceptance thresholds.
const FIG4_M_WITH_FEEDBACK_MAX: f64 = 0.05;
const FIG4_M_WITHOUT_FEEDBACK_MIN: f64 = 0.9;
const FIG4_FLATNESS_RATIO_MIN: f64 = 10.0;
const FIG4_PEAK_DB_MIN: f64 = 40.0;

fn fig4_bundle(fixed_step: Option<f64>) -> Result<Bundle, CliError> {
    let mut settings = LoopAnalysisSettings::fig4();
    if let Some(dt) = fixed_step {
        settings.integration.stepping = Stepping::Fixed { dt };
        if let Some(l) = settings.lyapunov.as_mut() {
            l.dt = dt;
        }
    }
    let runs = [
        ("with_feedback", LoopParamsHz::fig4()),
        ("without_feedback", LoopParamsHz::fig4_without_feedback()),
    ];
    let mut files = Vec::new();
    let mut summaries = serde_json::Map::new();
    let mut parameters = serde_json::Map::new();
    let mut analyses = Vec::new();
    for (label, hz) in runs {
        let params = PhysicalParams::from_hz(hz).map_err(CliError::from)?;
        let analysis = analyze_loop(&params, &settings)?;
        files.push((
            format!("beta1_db_{label}.csv"),
            band_db_csv(
                &analysis.beta1_spectrum,
                FLATNESS_BAND_FACTOR * params.omega1,
            ),
        ));
        files.push((
            format!("decoupling_{label}.json"),
            json_string(&analysis.summary.decoupling),
        ));
        summaries.insert(label.into(), json!(analysis.summary));
        parameters.insert(
            label.into(),
            json!({ "physical_hz": hz, "fingerprint": params.fingerprint() }),
        );
        analyses.push(analysis);
    }
    let (with, without) = (&analyses[0].summary, &analyses[1].summary);
    let flatness_ratio = with.beta1_flatness / without.beta1_flatness;
    let checks = fig4_checks(&analyses[0], &analyses[1], flatness_ratio);
    files.push(("summary.json".into(), json_string(&json!(summaries))));
    let integration = settings.integration;
    let lyapunov = settings.lyapunov.expect("fig4 settings include Lyapunov");
    let manifest = json!({
        "figure": "fig4",
        "parameters": parameters,
        "settings": {
            "t_final_us": integration.t_final,
            "transient_us": integration.transient,
            "dt_us": match integration.stepping {
                Stepping::Fixed { dt } => dt,
                Stepping::Adaptive { output_dt, .. } => output_dt,
            },
            "sample_stride": integration.sample_stride,
            "initial": "beta1 = 1, other modes empty",
            "welch": "eight segments, 50% overlap, periodic Hann",
            "flatness_band_rad_per_us": [0.0, FLATNESS_BAND_FACTOR * PhysicalParams::fig4().omega1],
            "lyapunov": {
                "dt_us": lyapunov.dt,
                "transient_us": lyapunov.transient,
                "horizon_us": lyapunov.horizon,
                "renorm_interval_us": lyapunov.renorm_interval,
                "perturbation": lyapunov.perturbation,
            },
        },
        "tolerances": {
            "m_direct_with_feedback_max": FIG4_M_WITH_FEEDBACK_MAX,
            "m_direct_without_feedback_min": FIG4_M_WITHOUT_FEEDBACK_MIN,
            "flatness_ratio_min": FIG4_FLATNESS_RATIO_MIN,
            "peak_over_median_db_min": FIG4_PEAK_DB_MIN,
        },
        "derived": {
            "flatness_ratio": flatness_ratio,
            "m_direct_with_feedback": with.decoupling.m_direct,
            "m_direct_without_feedback": without.decoupling.m_direct,
            "checks": checks,
        },
    });
    Ok(Bundle { files, manifest })
}

fn fig4_checks(
    with: &LoopAnalysis,
    without: &LoopAnalysis,
    flatness_ratio: f64,
) -> serde_json::Value {
    let (w, wo) = (&with.summary, &without.summary);
    json!({
        "m_with_feedback_small": w.decoupling.m_direct <= FIG4_M_WITH_FEEDBACK_MAX,
        "m_without_feedback_near_one": wo.decoupling.m_direct >= FIG4_M_WITHOUT_FEEDBACK_MIN,
        "spectrum_flattened": flatness_ratio >= FIG4_FLATNESS_RATIO_MIN,
        "uncontrolled_peak": wo.beta1_peak_over_median_db >= FIG4_PEAK_DB_MIN,
        "positive_lyapunov": w.lambda_max.is_some_and(|l| l > 0.0),
    })
}

/// Density in dB (re 1 per rad/µs) over `(0, upper]`.
fn band_db_csv(spectrum: &ModeSpectrum, upper: f64) -> String {
    let mut out = String::from("omega_rad_per_us,db\n");
    for (o, db) in spectrum.omega.iter().zip(spectrum.to_db(1.0)) {
        if *o > 0.0 && *o <= upper {
            writeln!(out, "{o:.16e},{db:.16e}").expect("string write");
        }
    }
    out
}

const MEMORY_GAMMA1_HZ: f64 = 5.0;
const MEMORY_M_FACTOR: f64 = 0.0074;

fn memory_gammas() -> Result<(f64, f64), CliError> {
    Ok((
        MEMORY_GAMMA1_HZ,
        effective_damping(MEMORY_M_FACTOR, MEMORY_GAMMA1_HZ)?,
    ))
}

fn fig7_bundle() -> Result<Bundle, CliError> {
    let (g, g_eff) = memory_gammas()?;
    let nu = linspace(0.0, 5e4, 51);
    let n = linspace(0.0, 1e5, 51);
    let s = [0.0];
    let plain = surface_csv(&nu, &n, &s, g)?;
    let controlled = surface_csv(&nu, &n, &s, g_eff)?;
    let corner = |gamma: f64| -> Result<f64, CliError> {
        let p = MemoryParams::new(hz_to_rad_per_s(5e4), hz_to_rad_per_s(gamma), 1e5)?;
        Ok(fidelity_squeezed(&p, 0.0))
    };
    let manifest = json!({
        "figure": "fig7",
        "parameters": {
            "gamma1_hz": g,
            "gamma1_eff_hz": g_eff,
            "m_factor": MEMORY_M_FACTOR,
            "s": 0.0,
        },
        "settings": {
            "nu_hz": {"from": 0.0, "to": 5e4, "points": nu.len()},
            "n": {"from": 0.0, "to": 1e5, "points": n.len()},
        },
        "tolerances": {"csv_float_format": "shortest round-trip"},
        "derived": {
            "fidelity_at_nu_50khz_n_1e5": corner(g)?,
            "fidelity_at_nu_50khz_n_1e5_controlled": corner(g_eff)?,
            "controlled_dominates": dominates(&controlled, &plain),
        },
    });
    Ok(Bundle {
        files: vec![
            ("fidelity_gamma1.csv".into(), plain),
            ("fidelity_gamma1_controlled.csv".into(), controlled),
        ],
        manifest,
    })
}

fn fig8_bundle() -> Result<Bundle, CliError> {
    let (g, g_eff) = memory_gammas()?;
    let nu = [1e4];
    let n = linspace(0.0, 1e5, 51);
    let s = linspace(-5.0, 5.0, 41);
    let plain = surface_csv(&nu, &n, &s, g)?;
    let controlled = surface_csv(&nu, &n, &s, g_eff)?;
    let manifest = json!({
        "figure": "fig8",
        "parameters": {
            "nu_hz": nu[0],
            "gamma1_hz": g,
            "gamma1_eff_hz": g_eff,
            "m_factor": MEMORY_M_FACTOR,
        },
        "settings": {
            "s": {"from": -5.0, "to": 5.0, "points": s.len()},
            "n": {"from": 0.0, "to": 1e5, "points": n.len()},
        },
        "tolerances": {"csv_float_format": "shortest round-trip"},
        "derived": {
            "controlled_dominates": dominates(&controlled, &plain),
            "even_in_s": even_in_s(&plain, s.len()) && even_in_s(&controlled, s.len()),
        },
    });
    Ok(Bundle {
        files: vec![
            ("fidelity_gamma1.csv".into(), plain),
            ("fidelity_gamma1_controlled.csv".into(), controlled),
        ],
        manifest,
    })
}

fn fidelity_column(csv: &str) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

fn dominates(high: &str, low: &str) -> bool {
    fidelity_column(high)
        .iter()
        .zip(fidelity_column(low))
        .all(|(h, l)| *h >= l)
}

fn even_in_s(csv: &str, s_len: usize) -> bool {
    fidelity_column(csv)
        .chunks(s_len)
        .all(|row| row.iter().eq(row.iter().rev()))
}
