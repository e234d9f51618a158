//! Scenario definitions, sweeps and their file outputs.

pub mod config;
pub mod output;
pub mod study;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::components::cigre::Polarity;
use crate::components::LightningSpec;
use crate::config::{InitMode, Probe, SimulationConfig};
use crate::egm::CriticalCurrentOracle;
use crate::error::{Error, Result};
use crate::solver::run;
use crate::waveform::Waveform;

pub use config::{parse_config, parse_config_str, preset, preset_config, preset_names, ConfigFile};
pub use output::{Header, Summary};
pub use study::{build_study, Strike, StrikeTarget, StudyCircuit, StudyLayout};
pub use sweep::{run_sweep, sensitivity_tables, ScenarioFailure, SensitivityTables, SweepReport, WaveformSet, WaveformSink};

/// Solver settings carried by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub dt: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { dt: 10e-9, t_end: 200e-6, newton_tol: 1e-6, newton_max_iter: 50 }
    }
}

/// One fully resolved simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Group label used for ordering results, e.g. `set1`.
    pub set: String,
    pub peak_ka: f64,
    pub front_us: f64,
    pub tail_us: f64,
    pub polarity: Polarity,
    /// Maximum front steepness; the median for `peak_ka` when absent.
    pub steepness_ka_us: Option<f64>,
    /// Stroke inception time (us).
    pub start_us: f64,
    pub target: StrikeTarget,
    /// Distance from the plant bus (m).
    pub distance: f64,
    pub arrester: bool,
    pub channel_resistance: Option<f64>,
    /// Phase-a source angle at stroke inception (degrees); 0 is the positive crest.
    pub point_on_wave_deg: f64,
    pub layout: StudyLayout,
    pub sim: SimSettings,
    /// Extra recorded quantities, `v(node)` or `i(branch)`.
    #[serde(default)]
    pub probes: Vec<String>,
}

impl Scenario {
    pub fn lightning(&self) -> LightningSpec {
        let mut l = LightningSpec::from_ka_us(self.peak_ka, self.front_us, self.tail_us);
        l.polarity = self.polarity;
        l.steepness = self.steepness_ka_us.map(|s| s * 1e9);
        l.start = self.start_us * 1e-6;
        l
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_at(&self.name)
    }

    /// Validates, reporting errors under the key path `path`.
    pub fn validate_at(&self, path: &str) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::ConfigValue { key: format!("{path}.{key}"), message });
        if !(self.peak_ka > 0.0) {
            return bad("peak_ka", format!("{} must be positive", self.peak_ka));
        }
        if !(self.front_us > 0.0 && self.front_us < self.tail_us) {
            return bad("front_us", format!("need 0 < front ({}) < tail ({})", self.front_us, self.tail_us));
        }
        if !(self.distance > 0.0 && self.distance < self.layout.study_length) {
            return bad("distance", format!("{} m outside (0, {}) m", self.distance, self.layout.study_length));
        }
        if !(self.start_us >= 0.0) {
            return bad("start_us", format!("{} must be non-negative", self.start_us));
        }
        if let Some(r) = self.channel_resistance {
            if !(r > 0.0) {
                return bad("channel_resistance", format!("{r} must be positive"));
            }
        }
        if !(self.sim.dt > 0.0 && self.sim.t_end >= self.sim.dt && self.sim.newton_tol > 0.0) {
            return bad("sim", "need dt > 0, t_end >= dt, newton_tol > 0".into());
        }
        for p in &self.probes {
            if let Err(e) = Probe::parse(p) {
                return bad("probes", e.to_string());
            }
        }
        self.layout.validate().map_err(|e| Error::ConfigValue { key: format!("{path}.layout"), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flashover {
    pub gap: String,
    pub time_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub index: usize,
    pub name: String,
    pub set: String,
    pub distance: f64,
    pub arrester: bool,
    pub peak_ka: f64,
    pub front_us: f64,
    pub tail_us: f64,
    /// Peak |phase-to-ground voltage| at the plant bus per phase (kV).
    pub peak_kv: [f64; 3],
    /// Largest of `peak_kv`.
    pub overvoltage_kv: f64,
    /// Largest arrester current magnitude over the three phases (kA).
    pub arrester_current_ka: f64,
    /// Energy absorbed by all arresters (kJ).
    pub arrester_energy_kj: f64,
    pub flashovers: Vec<Flashover>,
    pub newton_iterations: usize,
    pub waveform_files: Vec<String>,
}

/// Result plus the recorded waveforms, by probe name.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub result: ScenarioResult,
    pub waveforms: Vec<(String, Waveform)>,
}

impl ScenarioRun {
    pub fn waveform(&self, name: &str) -> Option<&Waveform> {
        self.waveforms.iter().find(|(n, _)| n == name).map(|(_, w)| w)
    }

    /// Phase-a plant bus voltage.
    pub fn bus_voltage(&self) -> &Waveform {
        self.waveform("v(bus_a)").expect("bus probe is always recorded")
    }
}

/// Builds and runs one scenario.
pub fn run_scenario(index: usize, sc: &Scenario) -> Result<ScenarioRun> {
    sc.validate()?;
    let strike = study::Strike {
        lightning: sc.lightning(),
        target: sc.target,
        distance: sc.distance,
        channel_resistance: sc.channel_resistance,
    };
    let pow = sc.point_on_wave_deg.to_radians();
    let st = build_study(&sc.layout, &strike, sc.arrester, pow, sc.sim.dt, sc.sim.t_end)?;
    let mut cfg = SimulationConfig::new(sc.sim.dt, sc.sim.t_end);
    cfg.newton_tol = sc.sim.newton_tol;
    cfg.newton_max_iter = sc.sim.newton_max_iter;
    cfg.init = InitMode::SteadyState;
    for n in &st.bus_nodes {
        cfg.probes.push(Probe::voltage(n));
    }
    cfg.probes.push(Probe::voltage(&st.strike_node));
    cfg.probes.push(Probe::current("lightning"));
    if let (Some(labels), Some(nodes)) = (&st.arresters, &st.arrester_nodes) {
        for (l, n) in labels.iter().zip(nodes) {
            cfg.probes.push(Probe::current(l));
            if !st.bus_nodes.contains(n) {
                cfg.probes.push(Probe::voltage(n));
            }
        }
    }
    for p in &sc.probes {
        let p = Probe::parse(p)?;
        if !cfg.probes.iter().any(|q| q.name == p.name) {
            cfg.probes.push(p);
        }
    }
    let out = run(&st.circuit, &cfg)?;
    let get = |name: &str| out.get(name).expect("probe recorded");
    let peak_kv: [f64; 3] = std::array::from_fn(|k| get(&format!("v({})", st.bus_nodes[k])).peak_abs() * 1e-3);
    let overvoltage_kv = peak_kv.iter().copied().fold(0.0, f64::max);
    let (mut arrester_current_ka, mut arrester_energy_kj) = (0.0_f64, 0.0);
    if let (Some(labels), Some(nodes)) = (&st.arresters, &st.arrester_nodes) {
        for (l, n) in labels.iter().zip(nodes) {
            let i = get(&format!("i({l})"));
            let v = get(&format!("v({n})"));
            arrester_current_ka = arrester_current_ka.max(i.peak_abs() * 1e-3);
            let p: Vec<f64> = v.samples().iter().zip(i.samples()).map(|(a, b)| a * b).collect();
            let mut e = 0.0;
            for w in p.windows(2) {
                e += 0.5 * (w[0] + w[1]) * sc.sim.dt;
            }
            arrester_energy_kj += e * 1e-3;
        }
    }
    let result = ScenarioResult {
        index,
        name: sc.name.clone(),
        set: sc.set.clone(),
        distance: sc.distance,
        arrester: sc.arrester,
        peak_ka: sc.peak_ka,
        front_us: sc.front_us,
        tail_us: sc.tail_us,
        peak_kv,
        overvoltage_kv,
        arrester_current_ka,
        arrester_energy_kj,
        flashovers: out.flashovers.iter().map(|(g, t)| Flashover { gap: g.clone(), time_us: t * 1e6 }).collect(),
        newton_iterations: out.diagnostics.max_iterations,
        waveform_files: Vec::new(),
    };
    Ok(ScenarioRun { result, waveforms: out.waveforms })
}

/// Smallest stroke current (kA) whose transient flashes a line insulator,
/// bracketed between `lo_ka` and `hi_ka` to within `tol_ka`. Arresters are
/// off; only tower gaps count, not the plant gantry. Steepness is capped
/// at ten times the mean front rate.
pub fn critical_current(base: &Scenario, lo_ka: f64, hi_ka: f64, tol_ka: f64) -> Result<f64> {
    if !(lo_ka > 0.0 && hi_ka > lo_ka && tol_ka > 0.0) {
        return Err(Error::InvalidConfig("need 0 < lo < hi and tol > 0".into()));
    }
    let flashes = |i: f64| -> Result<bool> {
        let mut s = base.clone();
        s.peak_ka = i;
        s.arrester = false;
        // median steepness, capped where low currents have no valid front shape
        let median = crate::components::cigre::median_steepness(i * 1e3) * 1e-9;
        s.steepness_ka_us = Some(base.steepness_ka_us.unwrap_or(median).min(10.0 * i / s.front_us));
        let run = run_scenario(0, &s)?;
        Ok(run.result.flashovers.iter().any(|f| f.gap.starts_with("tw.")))
    };
    if flashes(lo_ka)? {
        return Ok(lo_ka);
    }
    if !flashes(hi_ka)? {
        return Err(Error::InvalidConfig(format!("no line flashover up to {hi_ka} kA")));
    }
    let (mut lo, mut hi) = (lo_ka, hi_ka);
    while hi - lo > tol_ka {
        let mid = 0.5 * (lo + hi);
        if flashes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Critical-current flashover oracle from bracketed transient runs: a
/// mid-span phase-a strike and a tower-top strike, both on the study layout.
pub fn critical_current_oracle(layout: &StudyLayout, sim: &SimSettings) -> Result<CriticalCurrentOracle> {
    let towers = layout.tower_positions();
    let (t0, t1) = match towers.as_slice() {
        [_, a, b, ..] => (*a, *b),
        _ => return Err(Error::InvalidConfig("need at least three towers".into())),
    };
    let base = |target: StrikeTarget, distance: f64| Scenario {
        name: "critical".into(),
        set: "critical".into(),
        peak_ka: 1.0,
        front_us: 3.0,
        tail_us: 75.0,
        polarity: Polarity::Positive,
        steepness_ka_us: None,
        start_us: 0.0,
        target,
        distance,
        arrester: false,
        channel_resistance: None,
        point_on_wave_deg: 0.0,
        layout: layout.clone(),
        sim: sim.clone(),
        probes: Vec::new(),
    };
    let phase_ka = critical_current(&base(StrikeTarget::PhaseA, 0.5 * (t0 + t1)), 0.5, 100.0, 0.05)?;
    let shield_ka = critical_current(&base(StrikeTarget::TowerTop, t0), 0.5, 400.0, 0.1)?;
    Ok(CriticalCurrentOracle { phase_ka, shield_ka })
}
