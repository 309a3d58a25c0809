//! Simulation of transistor-memristor-sensor (TMS) crossbars and of an
//! analog neural pipeline that recognises 8-dot Braille from a 4x2 tactile
//! patch.
//!
//! Layers, bottom up:
//! - [`devices`]: force sensor, memristor and switch models, series cells.
//! - [`crossbar`]: ideal MAC readouts, nodal analysis with parasitics,
//!   differential weight encoding.
//! - [`analog`]: exponential, summation and division blocks of the softmax.
//! - [`braille`]: the 125-symbol table and force-grid datasets.
//! - [`pipeline`]: training, weight mapping and noisy evaluation.
//! - [`cost`]: area and power accounting.

pub mod analog;
pub mod braille;
pub mod config;
pub mod cost;
pub mod crossbar;
pub mod devices;
pub mod error;
pub mod pipeline;

pub use analog::{softmax_circuit, SoftmaxParams};
pub use braille::{BrailleSymbol, Dataset, ForceGrid, Group, Selection, SymbolTable};
pub use config::{FlatConfig, SimConfig};
pub use cost::{CostReport, CostTable, Processing, Style};
pub use crossbar::{CrossbarSpec, Parasitics, ReadoutMode, ReadoutVector};
pub use devices::{CellConfig, CellState, DeviceConfig, MemristorModel, SensorModel, SwitchModel};
pub use error::{Error, Result};
pub use pipeline::{
    EvalReport, Hyper, NetworkArch, NoiseSpec, ReadoutScaling, SignalMode, TrainedNetwork,
};

/// Crate version, embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
