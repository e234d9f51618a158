//! Parallel scenario sweeps and front/tail-time sensitivity tables.

use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{file_stem, write_table_csv, write_waveform_csv, Header, Summary};
use super::{run_scenario, Scenario, ScenarioResult, ScenarioRun};
use crate::error::{Error, Result};

/// Front times of the sensitivity table (us).
pub const FRONT_TIMES: [f64; 4] = [2.0, 3.0, 5.0, 8.0];
/// Tail times of the sensitivity table (us).
pub const TAIL_TIMES: [f64; 4] = [75.0, 150.0, 300.0, 500.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub index: usize,
    pub name: String,
    pub error: String,
}

/// Which recorded waveforms a sweep writes to disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveformSet {
    None,
    /// The three plant-bus phase voltages.
    #[default]
    Bus,
    All,
}

/// Destination for per-scenario waveform files.
#[derive(Debug, Clone)]
pub struct WaveformSink {
    pub dir: PathBuf,
    pub header: Header,
    pub select: WaveformSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Successful runs sorted by (set, distance), ties in input order.
    pub results: Vec<ScenarioResult>,
    pub failures: Vec<ScenarioFailure>,
}

impl SweepReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self, header: Header) -> Summary {
        Summary { header, results: self.results.clone(), failures: self.failures.clone() }
    }

    /// Result rows whose `set` equals `set`, in distance order.
    pub fn set(&self, set: &str) -> Vec<&ScenarioResult> {
        self.results.iter().filter(|r| r.set == set).collect()
    }
}

/// Runs every scenario on `jobs` worker threads (0 = all cores). Results do
/// not depend on `jobs`; a failing scenario is recorded and the rest continue.
pub fn run_sweep(scenarios: &[Scenario], jobs: usize, sink: Option<&WaveformSink>) -> Result<SweepReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let write_lock = Mutex::new(());
    let outcomes: Vec<std::result::Result<ScenarioResult, ScenarioFailure>> = pool.install(|| {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(k, sc)| {
                let fail = |e: Error| ScenarioFailure { index: k, name: sc.name.clone(), error: e.to_string() };
                let run = run_scenario(k, sc).map_err(fail)?;
                match sink {
                    Some(sink) if sink.select != WaveformSet::None => {
                        let _guard = write_lock.lock().unwrap_or_else(|p| p.into_inner());
                        write_waveforms(sink, sc, run).map_err(fail)
                    }
                    _ => Ok(run.result),
                }
            })
            .collect()
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| a.set.cmp(&b.set).then(a.distance.total_cmp(&b.distance)).then(a.index.cmp(&b.index)));
    Ok(SweepReport { results, failures })
}

fn write_waveforms(sink: &WaveformSink, sc: &Scenario, run: ScenarioRun) -> Result<ScenarioResult> {
    let mut result = run.result;
    let bus: Vec<String> = ["a", "b", "c"].iter().map(|p| format!("v(bus_{p})")).collect();
    for (name, w) in &run.waveforms {
        if sink.select == WaveformSet::Bus && !bus.contains(name) {
            continue;
        }
        let file = format!("{}_{}.csv", file_stem(&sc.name), file_stem(name));
        let meta = [("scenario", sc.name.clone()), ("probe", name.clone())];
        let f = std::fs::File::create(sink.dir.join(&file))?;
        write_waveform_csv(std::io::BufWriter::new(f), &sink.header, &meta, w)?;
        result.waveform_files.push(file);
    }
    Ok(result)
}

/// Plant overvoltage against front time and against tail time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTables {
    /// (front time us, overvoltage kV) at the base tail time.
    pub front: Vec<(f64, f64)>,
    /// (tail time us, overvoltage kV) at the base front time.
    pub tail: Vec<(f64, f64)>,
}

impl SensitivityTables {
    pub fn front_csv(&self, header: &Header) -> Result<String> {
        table(header, "front_us", &self.front)
    }

    pub fn tail_csv(&self, header: &Header) -> Result<String> {
        table(header, "tail_us", &self.tail)
    }
}

fn table(header: &Header, col: &str, rows: &[(f64, f64)]) -> Result<String> {
    let mut buf = Vec::new();
    let rows: Vec<Vec<f64>> = rows.iter().map(|&(a, b)| vec![a, b]).collect();
    write_table_csv(&mut buf, header, &[], &[col, "overvoltage_kv"], &rows)?;
    Ok(String::from_utf8(buf).expect("ascii"))
}

/// Varies the front time over [`FRONT_TIMES`] and the tail time over
/// [`TAIL_TIMES`] around `base`.
pub fn sensitivity_tables(base: &Scenario, jobs: usize) -> Result<SensitivityTables> {
    let mut cases: Vec<(f64, f64)> = Vec::new();
    for &tf in &FRONT_TIMES {
        cases.push((tf, base.tail_us));
    }
    for &tr in &TAIL_TIMES {
        if !cases.contains(&(base.front_us, tr)) {
            cases.push((base.front_us, tr));
        }
    }
    let scenarios: Vec<Scenario> = cases
        .iter()
        .map(|&(tf, tr)| {
            let mut s = base.clone();
            s.front_us = tf;
            s.tail_us = tr;
            s.name = format!("{}-tf{tf}-tr{tr}", base.name);
            s
        })
        .collect();
    let report = run_sweep(&scenarios, jobs, None)?;
    if let Some(f) = report.failures.first() {
        return Err(Error::InvalidConfig(format!("sensitivity case {} failed: {}", f.name, f.error)));
    }
    let ov = |tf: f64, tr: f64| -> f64 {
        let k = cases.iter().position(|&c| c == (tf, tr)).expect("case listed");
        report.results.iter().find(|r| r.index == k).expect("case ran").overvoltage_kv
    };
    Ok(SensitivityTables {
        front: FRONT_TIMES.iter().map(|&tf| (tf, ov(tf, base.tail_us))).collect(),
        tail: TAIL_TIMES.iter().map(|&tr| (tr, ov(base.front_us, tr))).collect(),
    })
}
