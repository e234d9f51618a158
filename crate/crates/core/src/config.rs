//! Solver configuration and probe definitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Voltage,
    Current,
}

/// A recorded quantity. `target` is a node name (voltage to ground) or a
/// branch label; for multiport branches `port` selects the terminal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub name: String,
    pub target: String,
    pub quantity: Quantity,
    #[serde(default)]
    pub port: usize,
}

impl Probe {
    pub fn voltage(target: &str) -> Self {
        Probe { name: format!("v({target})"), target: target.to_string(), quantity: Quantity::Voltage, port: 0 }
    }

    pub fn current(target: &str) -> Self {
        Probe { name: format!("i({target})"), target: target.to_string(), quantity: Quantity::Current, port: 0 }
    }

    /// Parses `v(node)` or `i(branch)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = |p: &str| s.strip_prefix(p).and_then(|r| r.strip_suffix(')')).filter(|t| !t.is_empty());
        if let Some(t) = inner("v(") {
            Ok(Probe::voltage(t))
        } else if let Some(t) = inner("i(") {
            Ok(Probe::current(t))
        } else {
            Err(Error::InvalidConfig(format!("probe '{s}' is not of the form v(node) or i(branch)")))
        }
    }

    pub fn port(mut self, port: usize) -> Self {
        self.port = port;
        self.name = format!("{}[{port}]", self.name);
        self
    }
}

/// How the state at `t = 0` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Sinusoidal steady state if any source is sinusoidal, else element initial conditions.
    #[default]
    Auto,
    /// Element initial conditions (zero unless given); first step by backward Euler.
    InitialConditions,
    /// Power-frequency phasor steady state.
    SteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Relative voltage tolerance of the nonlinear iteration.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub probes: Vec<Probe>,
    #[serde(default)]
    pub init: InitMode,
}

pub const DEFAULT_DT: f64 = 10e-9;
pub const DEFAULT_T_END: f64 = 200e-6;

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            newton_tol: 1e-6,
            newton_max_iter: 50,
            probes: Vec::new(),
            init: InitMode::Auto,
        }
    }
}

impl SimulationConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SimulationConfig { dt, t_end, ..Default::default() }
    }

    pub fn with_probe(mut self, p: Probe) -> Self {
        self.probes.push(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::InvalidConfig(format!("t_end = {} must be at least dt", self.t_end)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig("newton_tol must be positive".into()));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidConfig("newton_max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of samples in every output waveform.
    pub fn samples(&self) -> usize {
        (self.t_end / self.dt).round() as usize + 1
    }
}
