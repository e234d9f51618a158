//! Overhead line constants and the traveling-wave line model.

pub mod cp;
pub mod geometry;
pub mod modal;

pub use cp::{cp_line_step, CpLineModel, CpLineState, Mode};
pub use geometry::{line_parameters, Conductor, ConductorGeometry, ConductorRole, LineParameters};
pub use modal::{modal_decompose, ModalDecomposition};
