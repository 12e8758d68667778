//! Liouville-space simulator of "observer qubit" spectral readout for small
//! NMR quantum registers.
//!
//! A weakly coupled spin-1/2 system is described by a [`spin::SpinSystem`]:
//! one observer spin (index 0) whose multiplet encodes the state of the
//! remaining work spins, plus resonance offsets and scalar couplings. The
//! crate covers the full experiment pipeline:
//!
//! * [`spin`] — product basis, polarization operators, the diagonal
//!   weak-coupling Hamiltonian and the observer transition table.
//! * [`engine`] — deviation density matrices evolved under hard pulses,
//!   free-evolution delays, crusher gradients and transition-selective
//!   pulses; a line-oriented pulse-program text format.
//! * [`prep`] — thermal equilibrium state and subsystem pseudopure state
//!   preparation by pair-of-pseudopure-states (POPS) subtraction.
//! * [`compiler`] — lowering of logic gates (Hadamard, pseudo-Hadamard,
//!   controlled phase gates, z rotations, Pauli-z strings) to pulse
//!   programs, with effective-unitary verification.
//! * [`algorithms`] — pulse programs and gate-level reference states for
//!   Grover search, approximate counting, Bernstein-Vazirani and Hogg's
//!   1-SAT / 3-SAT search.
//! * [`acquisition`] — 1D and 2D FID synthesis, FFT processing and peak
//!   decoding back to work-register labels.

pub mod acquisition;
pub mod algorithms;
pub mod compiler;
pub mod engine;
pub mod matrix;
pub mod prep;
pub mod spin;

pub use engine::{DeviationMatrix, EvolutionMode, PulseEvent, PulseProgram};
pub use matrix::{C64, CMat};
pub use spin::{BitLabel, SpinSystem, TransitionTable};
