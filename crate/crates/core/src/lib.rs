//! Lightning-surge transient simulation for overhead lines feeding a solar
//! plant: netlists, a fixed-step nodal solver, traveling-wave lines,
//! component models, shielding analysis and spectral post-processing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod components;
pub mod config;
pub mod egm;
pub mod error;
pub mod line;
pub mod netlist;
pub mod scenario;
pub mod solver;
pub mod waveform;

pub use config::{InitMode, Probe, Quantity, SimulationConfig};
pub use error::{Error, Result};
pub use netlist::{build_circuit, BranchKind, Circuit, CircuitBuilder, CircuitSpec, ElementSpec, NodeRef, SourceFn};
pub use solver::{assemble, run, RunResult, Solver};
pub use waveform::{resample, Unit, Waveform};
