//! Numerical laboratory for position-dependent-mass (PDM) quantum particles
//! in two-dimensional magnetic fields.
//!
//! The crate assembles the minimally coupled PDM Hamiltonian built from the
//! Hermitian PDM momentum, its term-by-term expansion, a von Roos family of
//! orderings and the construction that couples `A/M` to the constant-mass
//! momentum, then compares their spectra. Classical PDM trajectories and 1D
//! Ehrenfest checks round out the toolkit.

pub mod acceptance;
pub mod classical;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod grid;
pub mod linop;
pub mod operators;
pub mod spectral;

pub use error::{PdmError, Result};
pub use fields::{gauge_transform, make_mass_profile, make_vector_potential, MassProfile, PhysicalConstants, ScalarField, VectorPotential};
pub use grid::{build_derivative, make_grid, sample_diagonal, Axis, Domain, Grid1D, Grid2D};
pub use linop::{LinearOperator, C64};
pub use operators::{
    build_corrected_hamiltonian, build_dutra_oliveira_hamiltonian, build_expanded_hamiltonian, build_hamiltonian,
    build_pdm_momentum, build_von_roos, hermiticity_defect, make_ordering, Builder, MomentumForm, OrderingParams, Physics,
};
