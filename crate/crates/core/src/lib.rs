//! Matrix-free geometric multigrid for the constant-coefficient Stokes system
//! on hierarchical hybrid tetrahedral grids.
//!
//! An unstructured coarse tetrahedral mesh is refined uniformly inside each
//! macro-cell; unknowns split into eight structurally identical groups
//! (vertices plus seven micro-edge orientations), so the discrete operators
//! act through constant group stencils in each macro-cell interior. On top of
//! that sit stabilized equal-order (P1-P1 with PSPG) and Taylor-Hood (P2-P1)
//! discretizations, an inexact-Uzawa smoother, a variable-depth V-cycle and a
//! full-multigrid driver, plus an exact rational work-unit cost model.

pub mod cost;
pub mod dense;
pub mod fem;
pub mod grid;
pub mod mesh;
pub mod multigrid;
pub mod oracle;
pub mod refine;
pub mod scalar;
pub mod stencil;

pub use scalar::{real, Real};

/// Concrete f64 instantiations; the benchmark CLI and the test suites use these.
pub type MacroMesh64 = mesh::MacroMesh<f64>;
pub type GridFunction64 = grid::GridFunction<f64>;
pub type StokesOperator64 = stencil::StokesOperator<f64>;
pub type Hierarchy64 = multigrid::Hierarchy<f64>;
