//! Chaotic coherent-feedback noise decoupling of an optomechanical membrane.
//!
//! The pipeline runs in four stages:
//!
//! * [`slh`] composes the feedback loop of controlled cavity, controller and
//!   feedback port, giving the exchange Hamiltonian and linear drift;
//! * [`dynamics`] integrates the mean-field loop equations and extracts the
//!   intensity-induced membrane frequency shift `f(t) = G₁|α₁(t)|²`;
//! * [`spectral`] turns `f(t)` into the decoupling factor `M` (from its power
//!   spectrum and from the direct phase average);
//! * [`memory`] evaluates storage fidelity of coherent and squeezed inputs
//!   with the mechanical damping reduced to `Γ₁′ = MΓ₁`.
//!
//! [`pipeline`] chains the first three for a given parameter set.

pub mod dynamics;
pub mod memory;
pub mod pipeline;
pub mod slh;
pub mod spectral;
pub mod units;
