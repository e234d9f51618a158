//! TOML scenario files and built-in presets.
//!
//! Grammar (all sections optional, at least one scenario required):
//!
//! ```toml
//! seed = 7                    # recorded in every output header
//!
//! [sim]                       # solver settings for every scenario
//! t_end = 1e-4
//!
//! [layout]                    # study layout overrides, merged over the defaults
//! footing_ohms = 10.0
//!
//! [[preset]]                  # built-in simulation set
//! name = "set3"
//! arrester = [false, true]
//!
//! [[scenario]]                # single run
//! peak_ka = 50.4
//! distance = 100.0
//! arrester = true
//! layout = { footing_ohms = 5.0 }
//!
//! [[sweep]]                   # cartesian product of the listed values
//! set = "tf"
//! peak_ka = 50.4
//! front_us = [2.0, 3.0, 5.0, 8.0]
//! distances = [100.0]
//! ```
//!
//! Nested tables (`layout`, `sim`) are merged key by key over the enclosing
//! level, so a scenario only lists what it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{Scenario, SimSettings, StrikeTarget, StudyLayout};
use crate::components::cigre::Polarity;
use crate::error::{Error, Result};

/// The eight strike distances of the simulation sets (m).
pub const PRESET_DISTANCES: [f64; 8] = [100.0, 300.0, 500.0, 700.0, 900.0, 1100.0, 1300.0, 1500.0];

const PRESETS: [(&str, f64); 3] = [("set1", 31.0), ("set2", 10.0), ("set3", 50.4)];

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

impl ConfigFile {
    /// SHA-256 of the resolved scenarios, independent of formatting and key order.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(&self.scenarios).expect("scenarios serialize");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    sim: Option<Table>,
    layout: Option<Table>,
    #[serde(default)]
    preset: Vec<RawPreset>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
    #[serde(default)]
    sweep: Vec<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPreset {
    name: String,
    arrester: Option<OneOrMany<bool>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    set: Option<String>,
    peak_ka: f64,
    front_us: Option<f64>,
    tail_us: Option<f64>,
    #[serde(default)]
    polarity: Polarity,
    steepness_ka_us: Option<f64>,
    start_us: Option<f64>,
    target: Option<StrikeTarget>,
    distance: f64,
    #[serde(default)]
    arrester: bool,
    channel_resistance: Option<f64>,
    point_on_wave_deg: Option<f64>,
    #[serde(default)]
    probes: Vec<String>,
    layout: Option<Table>,
    sim: Option<Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    set: String,
    peak_ka: OneOrMany<f64>,
    front_us: Option<OneOrMany<f64>>,
    tail_us: Option<OneOrMany<f64>>,
    distances: OneOrMany<f64>,
    arrester: Option<OneOrMany<bool>>,
    #[serde(default)]
    polarity: Polarity,
    steepness_ka_us: Option<f64>,
    start_us: Option<f64>,
    target: Option<StrikeTarget>,
    channel_resistance: Option<f64>,
    point_on_wave_deg: Option<f64>,
    #[serde(default)]
    probes: Vec<String>,
    layout: Option<Table>,
    sim: Option<Table>,
}

/// Reads and resolves a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Resolves configuration text into fully specified scenarios.
pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    let raw: RawFile = toml::from_str(text).map_err(|e| syntax_error(text, &e))?;
    let base_layout = merged(defaults_table(&StudyLayout::default()), raw.layout.as_ref());
    let base_sim = merged(defaults_table(&SimSettings::default()), raw.sim.as_ref());
    let resolve_layout = |path: &str, over: Option<&Table>| -> Result<StudyLayout> {
        let t = merged(base_layout.clone(), over);
        let layout: StudyLayout = Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigValue { key: format!("{path}.layout"), message: e.message().to_string() })?;
        layout.validate().map_err(|e| Error::ConfigValue { key: format!("{path}.layout"), message: e.to_string() })?;
        Ok(layout)
    };
    let resolve_sim = |path: &str, over: Option<&Table>| -> Result<SimSettings> {
        Value::Table(merged(base_sim.clone(), over))
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigValue { key: format!("{path}.sim"), message: e.message().to_string() })
    };

    let mut out: Vec<(String, Scenario)> = Vec::new();
    for (k, p) in raw.preset.iter().enumerate() {
        let path = format!("preset[{k}]");
        let arr = p.arrester.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![false]);
        let set = preset(&p.name).map_err(|e| Error::ConfigValue { key: format!("{path}.name"), message: e.to_string() })?;
        let layout = resolve_layout(&path, None)?;
        let sim = resolve_sim(&path, None)?;
        for &a in &arr {
            for s in &set {
                let mut s = s.clone();
                s.arrester = a;
                s.name = scenario_name(&s.set, None, None, s.distance, a);
                s.layout = layout.clone();
                s.sim = sim.clone();
                out.push((path.clone(), s));
            }
        }
    }
    for (k, r) in raw.scenario.iter().enumerate() {
        let path = format!("scenario[{k}]");
        let set = r.set.clone().unwrap_or_else(|| "custom".into());
        let s = Scenario {
            name: r.name.clone().unwrap_or_else(|| scenario_name(&set, None, None, r.distance, r.arrester)),
            set,
            peak_ka: r.peak_ka,
            front_us: r.front_us.unwrap_or(3.0),
            tail_us: r.tail_us.unwrap_or(75.0),
            polarity: r.polarity,
            steepness_ka_us: r.steepness_ka_us,
            start_us: r.start_us.unwrap_or(0.0),
            target: r.target.unwrap_or(StrikeTarget::PhaseA),
            distance: r.distance,
            arrester: r.arrester,
            channel_resistance: r.channel_resistance,
            point_on_wave_deg: r.point_on_wave_deg.unwrap_or(0.0),
            layout: resolve_layout(&path, r.layout.as_ref())?,
            sim: resolve_sim(&path, r.sim.as_ref())?,
            probes: r.probes.clone(),
        };
        out.push((path, s));
    }
    for (k, w) in raw.sweep.iter().enumerate() {
        let path = format!("sweep[{k}]");
        let layout = resolve_layout(&path, w.layout.as_ref())?;
        let sim = resolve_sim(&path, w.sim.as_ref())?;
        let currents = w.peak_ka.values();
        let fronts = w.front_us.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![3.0]);
        let tails = w.tail_us.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![75.0]);
        let arrs = w.arrester.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![false]);
        let dists = w.distances.values();
        for (key, n) in [("peak_ka", currents.len()), ("front_us", fronts.len()), ("tail_us", tails.len()), ("distances", dists.len()), ("arrester", arrs.len())] {
            if n == 0 {
                return Err(Error::ConfigValue { key: format!("{path}.{key}"), message: "empty list".into() });
            }
        }
        for &i in &currents {
            for &tf in &fronts {
                for &tr in &tails {
                    for &a in &arrs {
                        for &d in &dists {
                            let mut name = w.set.clone();
                            if currents.len() > 1 {
                                name.push_str(&format!("-{i}ka"));
                            }
                            let name = scenario_name(
                                &name,
                                (fronts.len() > 1).then_some(tf),
                                (tails.len() > 1).then_some(tr),
                                d,
                                a,
                            );
                            let s = Scenario {
                                name,
                                set: w.set.clone(),
                                peak_ka: i,
                                front_us: tf,
                                tail_us: tr,
                                polarity: w.polarity,
                                steepness_ka_us: w.steepness_ka_us,
                                start_us: w.start_us.unwrap_or(0.0),
                                target: w.target.unwrap_or(StrikeTarget::PhaseA),
                                distance: d,
                                arrester: a,
                                channel_resistance: w.channel_resistance,
                                point_on_wave_deg: w.point_on_wave_deg.unwrap_or(0.0),
                                layout: layout.clone(),
                                sim: sim.clone(),
                                probes: w.probes.clone(),
                            };
                            out.push((path.clone(), s));
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoScenarios);
    }
    let mut seen = std::collections::HashSet::new();
    for (path, s) in &out {
        s.validate_at(path)?;
        if !seen.insert(s.name.as_str()) {
            return Err(Error::ConfigValue { key: format!("{path}.name"), message: format!("duplicate scenario name '{}'", s.name) });
        }
    }
    Ok(ConfigFile { seed: raw.seed.unwrap_or(1), scenarios: out.into_iter().map(|(_, s)| s).collect() })
}

/// Names of the built-in simulation sets.
pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// The eight arrester-off scenarios of a built-in simulation set.
pub fn preset(name: &str) -> Result<Vec<Scenario>> {
    let &(set, peak) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown preset '{name}', expected one of {:?}", preset_names())))?;
    Ok(PRESET_DISTANCES
        .iter()
        .map(|&d| Scenario {
            name: scenario_name(set, None, None, d, false),
            set: set.into(),
            peak_ka: peak,
            front_us: 3.0,
            tail_us: 75.0,
            polarity: Polarity::Positive,
            steepness_ka_us: None,
            start_us: 0.0,
            target: StrikeTarget::PhaseA,
            distance: d,
            arrester: false,
            channel_resistance: None,
            point_on_wave_deg: 0.0,
            layout: StudyLayout::default(),
            sim: SimSettings::default(),
            probes: Vec::new(),
        })
        .collect())
}

/// Configuration text that runs the named presets with and without arrester.
pub fn preset_config(names: &[&str]) -> Result<String> {
    let mut s = String::from("seed = 1\n");
    for n in names {
        preset(n)?;
        s.push_str(&format!("\n[[preset]]\nname = \"{n}\"\narrester = [false, true]\n"));
    }
    Ok(s)
}

fn scenario_name(set: &str, tf: Option<f64>, tr: Option<f64>, d: f64, arrester: bool) -> String {
    let mut n = set.to_string();
    if let Some(tf) = tf {
        n.push_str(&format!("-tf{tf}"));
    }
    if let Some(tr) = tr {
        n.push_str(&format!("-tr{tr}"));
    }
    n.push_str(&format!("-{d}m-{}", if arrester { "arr" } else { "noarr" }));
    n
}

fn defaults_table<T: Serialize>(v: &T) -> Table {
    Table::try_from(v).expect("defaults serialize to a table")
}

fn merged(mut base: Table, over: Option<&Table>) -> Table {
    if let Some(over) = over {
        for (k, v) in over {
            match (base.get_mut(k), v) {
                (Some(Value::Table(b)), Value::Table(o)) => {
                    let t = merged(std::mem::take(b), Some(o));
                    *b = t;
                }
                _ => {
                    base.insert(k.clone(), v.clone());
                }
            }
        }
    }
    base
}

pub(crate) fn syntax_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
    Error::ConfigSyntax { line, message: e.message().to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_simulation_sets() {
        let s1 = preset("set1").unwrap();
        assert_eq!(s1.len(), 8);
        assert!(s1.iter().all(|s| s.peak_ka == 31.0 && s.front_us == 3.0 && s.tail_us == 75.0));
        assert_eq!(s1.iter().map(|s| s.distance).collect::<Vec<_>>(), PRESET_DISTANCES.to_vec());
        let s3 = preset("set3").unwrap();
        assert!(s3.iter().all(|s| s.peak_ka == 50.4));
        assert_eq!(preset("set2").unwrap()[0].peak_ka, 10.0);
        assert!(preset("set9").is_err());
    }

    #[test]
    fn empty_file_has_no_scenarios() {
        let e = parse_config_str("").unwrap_err();
        assert!(matches!(e, Error::NoScenarios));
        assert!(e.to_string().contains("no scenarios"));
        assert!(matches!(parse_config_str("seed = 3\n").unwrap_err(), Error::NoScenarios));
    }

    #[test]
    fn syntax_error_reports_line() {
        let e = parse_config_str("seed = 1\n\n[[scenario]]\npeak_ka = = 3\n").unwrap_err();
        match e {
            Error::ConfigSyntax { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse_config_str("[[scenario]]\npeak_ka = 3\ndistance = 100\ncolour = 1\n").unwrap_err();
        match e {
            Error::ConfigSyntax { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("colour"));
            }
            other => panic!("{other:?}"),
        }
        let e = parse_config_str("[[scenario]]\npeak_ka = 3\ndistance = 100\nlayout = { footting_ohms = 1 }\n").unwrap_err();
        assert!(matches!(e, Error::ConfigValue { ref key, .. } if key == "scenario[0].layout"), "{e:?}");
    }

    #[test]
    fn range_error_carries_key_path() {
        let e = parse_config_str("[[scenario]]\npeak_ka = 3\ndistance = 100\n\n[[scenario]]\npeak_ka = -1\ndistance = 100\n").unwrap_err();
        match e {
            Error::ConfigValue { key, .. } => assert_eq!(key, "scenario[1].peak_ka"),
            other => panic!("{other:?}"),
        }
        let e = parse_config_str("[[sweep]]\nset = \"s\"\npeak_ka = 10\ndistances = [100, 5000]\n").unwrap_err();
        assert!(matches!(e, Error::ConfigValue { ref key, .. } if key == "sweep[0].distance"), "{e:?}");
    }

    #[test]
    fn layers_merge_over_defaults() {
        let text = "[layout]\nfooting_ohms = 10.0\n[sim]\nt_end = 5e-5\n\n[[scenario]]\npeak_ka = 10\ndistance = 300\nlayout = { gap_on_resistance = 2.0 }\n[[scenario]]\npeak_ka = 10\ndistance = 500\nsim = { dt = 2e-8 }\n";
        let c = parse_config_str(text).unwrap();
        let (a, b) = (&c.scenarios[0], &c.scenarios[1]);
        assert_eq!(a.layout.footing_ohms, 10.0);
        assert_eq!(a.layout.gap_on_resistance, 2.0);
        assert_eq!(b.layout.gap_on_resistance, StudyLayout::default().gap_on_resistance);
        assert_eq!(a.sim.t_end, 5e-5);
        assert_eq!((b.sim.t_end, b.sim.dt), (5e-5, 2e-8));
        assert_eq!(a.layout.plant, StudyLayout::default().plant);
    }

    #[test]
    fn sweep_expands_cartesian_product() {
        let text = "[[sweep]]\nset = \"tf\"\npeak_ka = 50.4\nfront_us = [2, 3, 5, 8]\ndistances = [100.0]\narrester = [false, true]\n";
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.scenarios.len(), 8);
        assert!(c.scenarios.iter().any(|s| s.name == "tf-tf8-100m-arr"));
        let c = parse_config_str("[[preset]]\nname = \"set2\"\narrester = [false, true]\n").unwrap();
        assert_eq!(c.scenarios.len(), 16);
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn preset_config_round_trips() {
        let text = preset_config(&preset_names()).unwrap();
        let c = parse_config_str(&text).unwrap();
        assert_eq!(c.scenarios.len(), 48);
        assert_eq!(parse_config_str(&text).unwrap().hash(), c.hash());
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = "[[scenario]]\npeak_ka = 3\ndistance = 100\n[[scenario]]\npeak_ka = 4\ndistance = 100\n";
        assert!(matches!(parse_config_str(text).unwrap_err(), Error::ConfigValue { .. }));
    }
}
