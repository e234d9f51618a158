//! CSV and JSON artifacts. Every file starts with the provenance header:
//! config hash, seed and crate version.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::ScenarioFailure;
use super::ScenarioResult;
use crate::error::{Error, Result};
use crate::waveform::{Unit, Waveform};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Header {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Header { config_hash: config_hash.into(), seed, version: env!("CARGO_PKG_VERSION").to_string() }
    }

    fn lines(&self) -> String {
        format!("# config_hash: {}\n# seed: {}\n# version: {}\n", self.config_hash, self.seed, self.version)
    }
}

/// Writes `# key: value` metadata followed by `time_s,value` rows.
pub fn write_waveform_csv(mut out: impl Write, header: &Header, meta: &[(&str, String)], w: &Waveform) -> Result<()> {
    let mut s = header.lines();
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&format!("# unit: {}\n# dt: {:e}\n# t0: {:e}\ntime_s,value\n", w.unit().symbol(), w.dt(), w.t0()));
    for (t, v) in w.times().zip(w.samples()) {
        s.push_str(&format!("{t:e},{v:e}\n"));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Parses a waveform CSV. `dt` and `t0` come from the metadata when present,
/// otherwise from the time column, which must then be uniformly spaced.
pub fn read_waveform_csv(text: &str) -> Result<(Waveform, BTreeMap<String, String>)> {
    let mut meta = BTreeMap::new();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut seen_columns = false;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(m) = line.strip_prefix('#') {
            if let Some((key, v)) = m.split_once(':') {
                meta.insert(key.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !seen_columns {
            seen_columns = true;
            if line.starts_with("time") {
                continue;
            }
        }
        let bad = |m: &str| Error::ConfigSyntax { line: k + 1, message: m.to_string() };
        let (t, v) = line.split_once(',').ok_or_else(|| bad("expected time_s,value"))?;
        times.push(t.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        values.push(v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
    }
    if times.len() < 2 {
        return Err(Error::InvalidConfig("waveform needs at least two samples".into()));
    }
    let num = |key: &str| meta.get(key).and_then(|v| v.parse::<f64>().ok());
    let dt = num("dt").unwrap_or(times[1] - times[0]);
    let t0 = num("t0").unwrap_or(times[0]);
    let tol = 1e-6 * dt.abs();
    if times.iter().enumerate().any(|(k, &t)| (t - (t0 + k as f64 * dt)).abs() > tol.max(1e-12 * t.abs())) {
        return Err(Error::InvalidConfig("time column is not uniformly spaced".into()));
    }
    let unit = meta.get("unit").and_then(|u| Unit::parse(u)).unwrap_or(Unit::Volt);
    Ok((Waveform::new(dt, t0, values, unit)?, meta))
}

/// Writes a header plus a comma-separated table.
pub fn write_table_csv(mut out: impl Write, header: &Header, meta: &[(&str, String)], columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = header.lines();
    for (k, v) in meta {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// One row per scenario result.
pub fn write_results_csv(mut out: impl Write, header: &Header, results: &[ScenarioResult]) -> Result<()> {
    let mut s = header.lines();
    s.push_str("index,name,set,distance_m,arrester,peak_ka,front_us,tail_us,peak_a_kv,peak_b_kv,peak_c_kv,overvoltage_kv,arrester_current_ka,arrester_energy_kj,flashovers\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.5},{:.5},{}\n",
            r.index,
            r.name,
            r.set,
            r.distance,
            r.arrester,
            r.peak_ka,
            r.front_us,
            r.tail_us,
            r.peak_kv[0],
            r.peak_kv[1],
            r.peak_kv[2],
            r.overvoltage_kv,
            r.arrester_current_ka,
            r.arrester_energy_kj,
            r.flashovers.len()
        ));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Sweep summary written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub header: Header,
    pub results: Vec<ScenarioResult>,
    pub failures: Vec<ScenarioFailure>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// File-name-safe form of a probe or scenario name.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect::<String>().trim_matches('_').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_csv_round_trip() {
        let w = Waveform::from_fn(1e-8, 0.0, 101, Unit::Volt, |t| (2e5 * t).sin() * 1e5 + 1.0 / 3.0).unwrap();
        let h = Header::new("abc", 7);
        let mut buf = Vec::new();
        write_waveform_csv(&mut buf, &h, &[("probe", "v(bus_a)".into())], &w).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# config_hash: abc\n# seed: 7\n# version: "));
        assert!(text.contains("\ntime_s,value\n"));
        let (r, meta) = read_waveform_csv(&text).unwrap();
        assert_eq!(r.samples(), w.samples());
        assert_eq!(r.dt(), w.dt());
        assert_eq!(meta["probe"], "v(bus_a)");
    }

    #[test]
    fn bare_csv_infers_spacing() {
        let (w, _) = read_waveform_csv("time_s,value\n0,1\n1e-6,2\n2e-6,3\n").unwrap();
        assert_eq!(w.len(), 3);
        assert!((w.dt() - 1e-6).abs() < 1e-18);
        assert!(read_waveform_csv("0,1\n1e-6,2\n3e-6,3\n").is_err());
        assert!(read_waveform_csv("0,1\nx,2\n").is_err());
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("v(bus_a)"), "v_bus_a");
        assert_eq!(file_stem("set3-100m-arr"), "set3-100m-arr");
    }
}
