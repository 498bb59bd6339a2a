//! Finite-volume simulation of zero-temperature ac-conductivity in the
//! Anderson tight-binding model.
//!
//! The crate samples iid random potentials on a discrete torus, diagonalizes
//! the Hamiltonian `H = -Δ + V`, and from the eigendata estimates the
//! conductivity measure `Σ`, the correlation measure `Ψ`, the density of
//! states, and the regularized conductivity and response currents. The
//! [`diagnostics`] module measures the eigenvalue-statistics and
//! localization inputs (Wegner, Minami, fractional moments, Fermi-projection
//! decay, level spacings), and [`scaling`] fits the low-frequency behaviour
//! `y ≈ c ν² (log 1/ν)^γ`.

pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod measures;
pub mod model;
pub mod scaling;
pub mod spectral;
pub mod stats;

pub use ensemble::Ensemble;
pub use error::{Error, Result};
pub use measures::{BinnedMeasure, FieldProfile, PairStatistic, PsiEstimator, Symmetry};
pub use model::{
    build_hamiltonian, position_operator, velocity_operator, DisorderModel, LatticeOperator,
    Realization, TorusLattice, VelocityVariant,
};
pub use spectral::{diagonalize, EigenSystem, EnergyWindows, Interval};
