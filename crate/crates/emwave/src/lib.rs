//! Nodal finite-element solver for time-harmonic and transient Maxwell
//! problems in the vector/scalar potential formulation.
//!
//! The electric field is represented as `E = A + grad(psi)` (harmonic) or
//! `E = -dA/dt - grad(dpsi/dt)` (transient), with the vector potential `A`
//! and scalar potential `psi` carried as four unknowns per mesh node.
//! Exterior problems are truncated by a first-order absorbing boundary
//! condition; symmetry planes are handled by extruding a thin patch of
//! elements and constraining `A·n = 0` on its outer face and `psi = 0` on
//! its nodes.
//!
//! Modules:
//! - [`model`]: physical constants, materials, incident waves and pulses
//! - [`elements`]: B27/W18 reference elements, quadrature, isoparametric maps
//! - [`meshgen`]: structured meshes (shells, balls, cuboids) and thin patches
//! - [`dofmap`]: global equation numbering and Dirichlet constraints
//! - [`sparsela`]: sparse storage, direct LU and GMRES/ILU solvers
//! - [`assembly`]: element and global assembly of the block systems
//! - [`harmonic`]: time-harmonic driver and field evaluation
//! - [`transient`]: implicit-midpoint time integration and probes
//! - [`oracles`]: Mie/Stratton series and cavity closed forms

pub mod assembly;
pub mod dofmap;
pub mod elements;
pub mod harmonic;
pub mod meshgen;
pub mod model;
pub mod oracles;
pub mod sparsela;
pub mod transient;

pub use model::C64;

/// Library-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Geometric or mesh-construction failure.
    Geometry(String),
    /// Degenerate element (non-positive Jacobian), with element id.
    DegenerateElement { element: usize, detail: String },
    /// Conflicting Dirichlet constraints on one dof slot.
    ConstraintConflict { node: usize, slot: usize },
    /// Linear solver failure (singular, out of budget, no convergence).
    Solve(String),
    /// Point location / inverse mapping failure during field evaluation.
    Probe(String),
    /// Invalid configuration or unsupported parameter combination.
    Config(String),
    /// Series oracle failed to converge within its term cap.
    SeriesDivergence(String),
    /// Malformed input file.
    Format(String),
}

impl std::fmt::Display for Error {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Error::Geometry(s) => write!(f, "geometry error: {s}"),
            Error::DegenerateElement { element, detail } => {
                write!(f, "degenerate element {element}: {detail}")
            }
            Error::ConstraintConflict { node, slot } => {
                write!(f, "conflicting constraints on node {node} slot {slot}")
            }
            Error::Solve(s) => write!(f, "linear solve failed: {s}"),
            Error::Probe(s) => write!(f, "probe error: {s}"),
            Error::Config(s) => write!(f, "config error: {s}"),
            Error::SeriesDivergence(s) => write!(f, "series did not converge: {s}"),
            Error::Format(s) => write!(f, "format error: {s}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
