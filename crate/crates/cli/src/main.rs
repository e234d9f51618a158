use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use surge_core::analysis::{emd, fft_magnitude, filter_characterize, hilbert_marginal, EmdOptions, MarginalOptions};
use surge_core::egm::{monte_carlo_incidence, CriticalCurrentOracle, EgmFile};
use surge_core::scenario::output::{file_stem, read_waveform_csv, write_results_csv, write_table_csv};
use surge_core::scenario::{
    critical_current_oracle, parse_config, preset, preset_config, preset_names, run_sweep, sensitivity_tables, Header,
    SimSettings, StudyLayout, WaveformSet, WaveformSink,
};

#[derive(Parser)]
#[command(name = "surge", version, about = "Lightning surge studies for a line feeding a solar plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Waveforms {
    None,
    Bus,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a config file.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads, 0 for all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Overrides the seed recorded in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Waveforms::Bus)]
        waveforms: Waveforms,
    },
    /// Front-time and tail-time overvoltage tables around one preset scenario.
    Sensitivity {
        #[arg(long, default_value = "set3")]
        preset: String,
        #[arg(long, default_value_t = 1500.0)]
        distance: f64,
        #[arg(long)]
        arrester: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Shielding analysis and Monte Carlo lightning incidence.
    Egm {
        /// TOML with [egm], [[wire]] and [oracle] tables.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Critical current for phase strikes (kA).
        #[arg(long, requires = "shield_ka")]
        phase_ka: Option<f64>,
        /// Critical current for shield and tower strikes (kA).
        #[arg(long, requires = "phase_ka")]
        shield_ka: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Spectra and Hilbert marginal spectra of waveform CSVs.
    Analyze {
        files: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Input signal for filter characterization of every other file.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Print built-in preset configs.
    Preset { names: Vec<String> },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, out, jobs, seed, waveforms } => run(&config, &out, jobs, seed, waveforms),
        Command::Sensitivity { preset: name, distance, arrester, out, jobs } => {
            let mut base = preset(&name)?
                .into_iter()
                .find(|s| s.distance == distance)
                .with_context(|| format!("{name} has no scenario at {distance} m"))?;
            base.arrester = arrester;
            let t = sensitivity_tables(&base, jobs)?;
            create_dir(&out)?;
            let header = Header::new(format!("preset:{name}"), 0);
            std::fs::write(out.join("front_time.csv"), t.front_csv(&header)?)?;
            std::fs::write(out.join("tail_time.csv"), t.tail_csv(&header)?)?;
            for (tf, v) in &t.front {
                println!("t_f {tf:>4} us  {v:>9.2} kV");
            }
            for (tr, v) in &t.tail {
                println!("t_r {tr:>4} us  {v:>9.2} kV");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Egm { config, seed, samples, phase_ka, shield_ka, json } => {
            let mut file = match &config {
                Some(p) => EgmFile::parse(&read(p)?).with_context(|| format!("in {}", p.display()))?,
                None => EgmFile::default(),
            };
            if let Some(s) = seed {
                file.egm.seed = s;
            }
            if let Some(n) = samples {
                file.egm.samples = n;
            }
            if let (Some(phase_ka), Some(shield_ka)) = (phase_ka, shield_ka) {
                file.oracle = Some(CriticalCurrentOracle { phase_ka, shield_ka });
            }
            let oracle = match file.oracle {
                Some(o) => o,
                None => {
                    let sim = SimSettings { t_end: 20e-6, ..SimSettings::default() };
                    critical_current_oracle(&StudyLayout::default(), &sim)?
                }
            };
            let report = monte_carlo_incidence(&file.geometry()?, &file.egm, &oracle)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
                println!("critical currents: phase {:.2} kA, shield {:.2} kA", oracle.phase_ka, oracle.shield_ka);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { files, out, reference } => {
            analyze(&files, &out, reference.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { names } => {
            let names: Vec<&str> = if names.is_empty() { preset_names() } else { names.iter().map(String::as_str).collect() };
            print!("{}", preset_config(&names)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn run(config: &Path, out: &Path, jobs: usize, seed: Option<u64>, waveforms: Waveforms) -> Result<ExitCode> {
    let cfg = parse_config(config).with_context(|| format!("in {}", config.display()))?;
    let header = Header::new(cfg.hash(), seed.unwrap_or(cfg.seed));
    create_dir(out)?;
    let select = match waveforms {
        Waveforms::None => WaveformSet::None,
        Waveforms::Bus => WaveformSet::Bus,
        Waveforms::All => WaveformSet::All,
    };
    let wave_dir = out.join("waveforms");
    if select != WaveformSet::None {
        create_dir(&wave_dir)?;
    }
    let sink = WaveformSink { dir: wave_dir, header: header.clone(), select };
    let report = run_sweep(&cfg.scenarios, jobs, Some(&sink))?;
    let summary = report.summary(header.clone());
    summary.write(out.join("summary.json"))?;
    let f = std::fs::File::create(out.join("results.csv"))?;
    write_results_csv(std::io::BufWriter::new(f), &header, &report.results)?;
    for r in &report.results {
        println!("{:<28} {:>9.2} kV  I_ar {:>7.3} kA", r.name, r.overvoltage_kv, r.arrester_current_ka);
    }
    let manifest = out.join("failures.json");
    if report.is_success() {
        if manifest.exists() {
            std::fs::remove_file(&manifest)?;
        }
        return Ok(ExitCode::SUCCESS);
    }
    std::fs::write(&manifest, serde_json::to_string_pretty(&report.failures)?)?;
    for f in &report.failures {
        eprintln!("failed: {} (#{}): {}", f.name, f.index, f.error);
    }
    eprintln!("{} of {} scenarios failed, see {}", report.failures.len(), cfg.scenarios.len(), manifest.display());
    Ok(ExitCode::from(1))
}

fn analyze(files: &[PathBuf], out: &Path, reference: Option<&Path>) -> Result<()> {
    if files.is_empty() {
        bail!("no waveform files given");
    }
    create_dir(out)?;
    let load = |p: &Path| -> Result<_> {
        let (w, meta) = read_waveform_csv(&read(p)?).with_context(|| format!("in {}", p.display()))?;
        let header = Header::new(
            meta.get("config_hash").cloned().unwrap_or_default(),
            meta.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0),
        );
        let stem = file_stem(&p.file_stem().unwrap_or_default().to_string_lossy());
        Ok((w, header, stem))
    };
    let reference = match reference {
        Some(p) => {
            let (w, _, stem) = load(p)?;
            Some((fft_magnitude(&w)?, stem))
        }
        None => None,
    };
    for p in files {
        let (w, header, stem) = load(p)?;
        let spec = fft_magnitude(&w)?;
        let rows: Vec<Vec<f64>> = spec.frequencies().zip(&spec.magnitude).map(|(f, m)| vec![f, *m]).collect();
        let src = [("source", p.display().to_string())];
        write_table_csv(create(&out.join(format!("{stem}_spectrum.csv")))?, &header, &src, &["frequency_hz", "magnitude"], &rows)?;
        let imfs = emd(&w, &EmdOptions::default())?;
        let marginal = hilbert_marginal(&imfs.imfs, w.dt(), &MarginalOptions::default())?;
        let rows: Vec<Vec<f64>> = marginal.amplitude.iter().enumerate().map(|(k, a)| vec![marginal.center(k), *a]).collect();
        write_table_csv(create(&out.join(format!("{stem}_marginal.csv")))?, &header, &src, &["frequency_hz", "amplitude"], &rows)?;
        let peak = spec.dominant_peak().map_or(0.0, |p| p.0);
        let hht = marginal.peak().map_or(0.0, |p| marginal.center(p.0));
        print!("{stem}: peak {:.2} kHz, {} IMFs, marginal peak {:.2} kHz", peak * 1e-3, imfs.imfs.len(), hht * 1e-3);
        if let Some((x, xs)) = &reference {
            let f = filter_characterize(x, &spec)?;
            let rows: Vec<Vec<f64>> =
                f.ratio_db.iter().zip(&f.smoothed_db).enumerate().map(|(k, (r, s))| vec![k as f64 * f.df, *r, *s]).collect();
            let meta = [("input", xs.clone()), ("output", stem.clone())];
            write_table_csv(
                create(&out.join(format!("{stem}_filter.csv")))?,
                &header,
                &meta,
                &["frequency_hz", "ratio_db", "smoothed_db"],
                &rows,
            )?;
            match f.bandwidth_hz {
                Some(b) => print!(", power ratio {:.3}, bandwidth {:.2} kHz", f.power_ratio, b * 1e-3),
                None => print!(", power ratio {:.3}, no -3 dB point", f.power_ratio),
            }
        }
        println!();
    }
    Ok(())
}

fn create(p: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
}
