//! SLH algebra for passive-linear open quantum networks.
//!
//! A component is the triple `(S, L, H)`: a unitary scattering matrix over
//! its field channels, one coupling operator per channel, and a Hamiltonian.
//! Coupling operators are restricted to linear combinations of annihilation
//! operators and the Hamiltonian to its bilinear part `Σ h_ij a_i† a_j`, which
//! is closed under the series product. Anything else a component carries
//! (Kerr-type or optomechanical terms) is recorded as an opaque tag and left to
//! the dynamics code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Add;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Tolerance for the unitarity and Hermiticity checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlhError {
    #[error("channel count mismatch: downstream has {downstream}, upstream has {upstream}")]
    ChannelMismatch { downstream: usize, upstream: usize },
    #[error("{what} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Dimension {
        what: &'static str,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("scattering matrix is not unitary: |SS^dag - I| = {0:e}")]
    NotUnitary(f64),
    #[error("bilinear Hamiltonian is not Hermitian: |H - H^dag| = {0:e}")]
    NotHermitian(f64),
    #[error("feedback path couples to mode `{0}`, which the controlled component does not carry")]
    FeedbackMode(ModeId),
    #[error("component carries non-bilinear content {0:?}; handle it in the dynamics")]
    NonBilinear(Vec<String>),
    #[error("expected a single output channel, found {0}")]
    NotSingleChannel(usize),
}

/// Label of a bosonic mode. Equality and ordering are by label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeId(String);

impl ModeId {
    pub fn new(label: impl Into<String>) -> Self {
        ModeId(label.into())
    }

    pub fn label(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ModeId {
    fn from(s: &str) -> Self {
        ModeId::new(s)
    }
}

/// A linear coupling operator `Σ c_k a_k`, stored without zero coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CouplingOperator {
    terms: BTreeMap<ModeId, Complex64>,
}

impl CouplingOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `coefficient · a_mode`.
    pub fn single(mode: impl Into<ModeId>, coefficient: Complex64) -> Self {
        Self::zero().with_term(mode, coefficient)
    }

    /// `sqrt(rate) · a_mode`, the usual damping channel of a cavity.
    pub fn damping(mode: impl Into<ModeId>, rate: f64) -> Self {
        Self::single(mode, Complex64::new(rate.sqrt(), 0.0))
    }

    /// Adds `coefficient · a_mode` to the operator.
    pub fn with_term(mut self, mode: impl Into<ModeId>, coefficient: Complex64) -> Self {
        let mode = mode.into();
        let c = self.terms.get(&mode).copied().unwrap_or_default() + coefficient;
        if c == Complex64::new(0.0, 0.0) {
            self.terms.remove(&mode);
        } else {
            self.terms.insert(mode, c);
        }
        self
    }

    pub fn coefficient(&self, mode: &ModeId) -> Complex64 {
        self.terms.get(mode).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ModeId, &Complex64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.terms.iter().fold(Self::zero(), |acc, (m, c)| {
            acc.with_term(m.clone(), c * factor)
        })
    }
}

impl Add for CouplingOperator {
    type Output = CouplingOperator;

    fn add(self, rhs: CouplingOperator) -> CouplingOperator {
        rhs.terms
            .into_iter()
            .fold(self, |acc, (m, c)| acc.with_term(m, c))
    }
}

/// An open network component `(S, L, H)`.
///
/// `coupling` is the `n_ch × n_modes` matrix of `L` over the sorted mode list
/// and `hamiltonian[(i, j)]` is the coefficient of `a_i† a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlhTriple {
    modes: Vec<ModeId>,
    scattering: DMatrix<Complex64>,
    coupling: DMatrix<Complex64>,
    hamiltonian: DMatrix<Complex64>,
    tags: Vec<String>,
}

impl SlhTriple {
    /// Validated constructor. `hamiltonian` lists `(row, col, h)` meaning
    /// `h · a_row† a_col`; repeated entries accumulate.
    pub fn new(
        scattering: DMatrix<Complex64>,
        couplings: Vec<CouplingOperator>,
        hamiltonian: &[(ModeId, ModeId, Complex64)],
    ) -> Result<Self, SlhError> {
        let n_ch = scattering.nrows();
        if scattering.ncols() != n_ch || couplings.len() != n_ch {
            return Err(SlhError::Dimension {
                what: "scattering matrix",
                rows: scattering.nrows(),
                cols: scattering.ncols(),
                expected_rows: couplings.len(),
                expected_cols: couplings.len(),
            });
        }
        let modes: Vec<ModeId> = couplings
            .iter()
            .flat_map(|l| l.terms().map(|(m, _)| m.clone()))
            .chain(
                hamiltonian
                    .iter()
                    .flat_map(|(r, c, _)| [r.clone(), c.clone()]),
            )
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = |m: &ModeId| modes.binary_search(m).expect("mode collected above");

        let mut coupling = DMatrix::zeros(n_ch, modes.len());
        for (ch, l) in couplings.iter().enumerate() {
            for (m, c) in l.terms() {
                coupling[(ch, index(m))] = *c;
            }
        }
        let mut h = DMatrix::zeros(modes.len(), modes.len());
        for (r, c, v) in hamiltonian {
            h[(index(r), index(c))] += *v;
        }
        let triple = SlhTriple {
            modes,
            scattering,
            coupling,
            hamiltonian: h,
            tags: Vec::new(),
        };
        triple.check()?;
        Ok(triple)
    }

    /// The identity component on `n_ch` channels: `(I, 0, 0)`.
    pub fn identity(n_ch: usize) -> Self {
        SlhTriple {
            modes: Vec::new(),
            scattering: DMatrix::identity(n_ch, n_ch),
            coupling: DMatrix::zeros(n_ch, 0),
            hamiltonian: DMatrix::zeros(0, 0),
            tags: Vec::new(),
        }
    }

    /// Single-channel cavity `(1, sqrt(rate) a, detuning a† a)`.
    pub fn cavity(mode: impl Into<ModeId>, rate: f64, detuning: f64) -> Self {
        let mode = mode.into();
        let h = if detuning != 0.0 {
            vec![(mode.clone(), mode.clone(), Complex64::new(detuning, 0.0))]
        } else {
            Vec::new()
        };
        let mut triple = SlhTriple::new(
            DMatrix::identity(1, 1),
            vec![CouplingOperator::damping(mode.clone(), rate)],
            &h,
        )
        .expect("cavity triple is well formed");
        if triple.modes.is_empty() {
            triple.modes.push(mode);
            triple.coupling = DMatrix::zeros(1, 1);
            triple.hamiltonian = DMatrix::zeros(1, 1);
        }
        triple
    }

    /// Attaches an opaque marker for Hamiltonian content outside the bilinear algebra.
    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.push(tag.into());
        self
    }

    /// Same triple with all opaque tags removed.
    pub fn bilinear_part(&self) -> Self {
        SlhTriple {
            tags: Vec::new(),
            ..self.clone()
        }
    }

    pub fn channels(&self) -> usize {
        self.scattering.nrows()
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn scattering(&self) -> &DMatrix<Complex64> {
        &self.scattering
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Dense Hamiltonian matrix over [`Self::modes`].
    pub fn hamiltonian_matrix(&self) -> &DMatrix<Complex64> {
        &self.hamiltonian
    }

    /// Dense coupling matrix, `n_ch × n_modes`.
    pub fn coupling_matrix(&self) -> &DMatrix<Complex64> {
        &self.coupling
    }

    pub fn coupling_operator(&self, channel: usize) -> CouplingOperator {
        self.modes
            .iter()
            .enumerate()
            .fold(CouplingOperator::zero(), |acc, (k, m)| {
                acc.with_term(m.clone(), self.coupling[(channel, k)])
            })
    }

    /// Coefficient of `a_row† a_col` in the bilinear Hamiltonian.
    pub fn hamiltonian_coefficient(&self, row: &ModeId, col: &ModeId) -> Complex64 {
        match (self.mode_index(row), self.mode_index(col)) {
            (Some(r), Some(c)) => self.hamiltonian[(r, c)],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Real rate `g` of the exchange term `-i g (a_to† a_from − a_from† a_to)`
    /// contained in the Hamiltonian, i.e. `i · h[to, from]`.
    ///
    /// For a cascade `from → to` with damping rates `γ_from, γ_to` this is
    /// `sqrt(γ_from γ_to) / 2`.
    pub fn exchange_rate(&self, from: &ModeId, to: &ModeId) -> f64 {
        (I * self.hamiltonian_coefficient(to, from)).re
    }

    pub fn mode_index(&self, mode: &ModeId) -> Option<usize> {
        self.modes.binary_search(mode).ok()
    }

    /// `‖S S† − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.channels();
        (&self.scattering * self.scattering.adjoint() - DMatrix::<Complex64>::identity(n, n)).norm()
    }

    /// `‖H − H†‖_F`.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.hamiltonian - self.hamiltonian.adjoint()).norm()
    }

    fn check(&self) -> Result<(), SlhError> {
        let u = self.unitarity_defect();
        if u > STRUCTURE_TOL {
            return Err(SlhError::NotUnitary(u));
        }
        let h = self.hermiticity_defect();
        if h > STRUCTURE_TOL {
            return Err(SlhError::NotHermitian(h));
        }
        Ok(())
    }

    /// Coupling and Hamiltonian matrices re-indexed onto `modes`, a superset
    /// of this triple's own modes.
    fn embed(&self, modes: &[ModeId]) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let map: Vec<usize> = self
            .modes
            .iter()
            .map(|m| modes.binary_search(m).expect("superset"))
            .collect();
        let mut l = DMatrix::zeros(self.channels(), modes.len());
        for ch in 0..self.channels() {
            for (k, &dst) in map.iter().enumerate() {
                l[(ch, dst)] = self.coupling[(ch, k)];
            }
        }
        let mut h = DMatrix::zeros(modes.len(), modes.len());
        for (r, &dr) in map.iter().enumerate() {
            for (c, &dc) in map.iter().enumerate() {
                h[(dr, dc)] = self.hamiltonian[(r, c)];
            }
        }
        (l, h)
    }

    /// Debug dump: matrices as nested arrays of `[re, im]` pairs.
    pub fn to_json(&self) -> Value {
        fn mat(m: &DMatrix<Complex64>) -> Value {
            Value::Array(
                (0..m.nrows())
                    .map(|r| {
                        Value::Array(
                            (0..m.ncols())
                                .map(|c| json!([m[(r, c)].re, m[(r, c)].im]))
                                .collect(),
                        )
                    })
                    .collect(),
            )
        }
        json!({
            "modes": self.modes.iter().map(|m| m.label()).collect::<Vec<_>>(),
            "S": mat(&self.scattering),
            "L": mat(&self.coupling),
            "H": mat(&self.hamiltonian),
            "tags": self.tags,
        })
    }
}

/// Cascade `upstream`'s output into `downstream`'s input:
/// `(S₂S₁, L₂ + S₂L₁, H₁ + H₂ + (L₂†S₂L₁ − L₁†S₂†L₂)/2i)`.
pub fn series_product(downstream: &SlhTriple, upstream: &SlhTriple) -> Result<SlhTriple, SlhError> {
    if downstream.channels() != upstream.channels() {
        return Err(SlhError::ChannelMismatch {
            downstream: downstream.channels(),
            upstream: upstream.channels(),
        });
    }
    let modes: Vec<ModeId> = downstream
        .modes
        .iter()
        .chain(upstream.modes.iter())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (l2, h2) = downstream.embed(&modes);
    let (l1, h1) = upstream.embed(&modes);
    let s2 = &downstream.scattering;

    // cross[(i, j)] is the coefficient of a_i† a_j in L₂† S₂ L₁
    let cross = l2.adjoint() * s2 * &l1;
    let correction = (&cross - cross.adjoint()) / (I * 2.0);

    let mut tags = upstream.tags.clone();
    tags.extend(downstream.tags.iter().cloned());

    let out = SlhTriple {
        modes,
        scattering: s2 * &upstream.scattering,
        coupling: &l2 + s2 * &l1,
        hamiltonian: h1 + h2 + correction,
        tags,
    };
    out.check()?;
    Ok(out)
}

/// Closes the loop `G_f ▷ G₂ ▷ G₁`: the controlled component `g1` feeds the
/// controller `g2`, whose output re-enters the controlled modes through `gf`.
pub fn feedback_compose(
    g1: &SlhTriple,
    g2: &SlhTriple,
    gf: &SlhTriple,
) -> Result<SlhTriple, SlhError> {
    for m in gf.modes() {
        let idx = gf.mode_index(m).expect("own mode");
        let couples = (0..gf.channels()).any(|ch| gf.coupling[(ch, idx)].norm() > 0.0);
        if couples && g1.mode_index(m).is_none() {
            return Err(SlhError::FeedbackMode(m.clone()));
        }
    }
    series_product(gf, &series_product(g2, g1)?)
}

/// Coupling operator of a single-channel network's output field.
pub fn total_dissipation(composed: &SlhTriple) -> Result<CouplingOperator, SlhError> {
    if composed.channels() != 1 {
        return Err(SlhError::NotSingleChannel(composed.channels()));
    }
    Ok(composed.coupling_operator(0))
}

/// Linear quantum Langevin equations `ȧ = drift · a + input_map · b_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDrift {
    pub modes: Vec<ModeId>,
    pub drift: DMatrix<Complex64>,
    pub input_map: DMatrix<Complex64>,
}

impl LinearDrift {
    pub fn entry(&self, row: &ModeId, col: &ModeId) -> Complex64 {
        let r = self.modes.binary_search(row);
        let c = self.modes.binary_search(col);
        match (r, c) {
            (Ok(r), Ok(c)) => self.drift[(r, c)],
            _ => Complex64::new(0.0, 0.0),
        }
    }
}

/// Drift `−iH − ½ L†L` and noise map `−L†` of the mode annihilation operators.
pub fn langevin_linear_drift(composed: &SlhTriple) -> Result<LinearDrift, SlhError> {
    if !composed.tags.is_empty() {
        return Err(SlhError::NonBilinear(composed.tags.clone()));
    }
    let l = &composed.coupling;
    let drift = -(&composed.hamiltonian * I) - l.adjoint() * l * Complex64::new(0.5, 0.0);
    Ok(LinearDrift {
        modes: composed.modes.clone(),
        drift,
        input_map: -l.adjoint(),
    })
}

/// The two-cavity loop: controlled cavity `a1` (rate `gamma1`), controller
/// cavity `a2` (rate `gamma2`) and a feedback port back into `a1` (rate
/// `gamma_f`). Detunings enter the bilinear Hamiltonian.
pub fn two_cavity_loop(
    gamma1: f64,
    gamma2: f64,
    gamma_f: f64,
    delta1: f64,
    delta2: f64,
) -> Result<SlhTriple, SlhError> {
    let g1 = SlhTriple::cavity("a1", gamma1, delta1);
    let g2 = SlhTriple::cavity("a2", gamma2, delta2);
    let gf = SlhTriple::new(
        DMatrix::identity(1, 1),
        vec![CouplingOperator::damping("a1", gamma_f)],
        &[],
    )?;
    feedback_compose(&g1, &g2, &gf)
}
