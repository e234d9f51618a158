//! Electro-geometric shielding model and Monte Carlo lightning incidence.
//!
//! A vertical leader descending at lateral position `x` attaches to the
//! object whose striking surface it meets first: the upper half of a
//! circle of radius `r_c` around each wire, or the horizontal plane at
//! height `r_g` for earth. The attachment map is the upper envelope of
//! these surfaces; it is piecewise constant between breakpoints that are
//! computed exactly, so exposure widths carry no discretization error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::line::geometry::{ConductorGeometry, ConductorRole};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgmConfig {
    /// Striking distance coefficient `a` in `r_c = a I^b` (m, I in kA).
    pub a: f64,
    /// Striking distance exponent `b`.
    pub b: f64,
    /// Ratio of the earth striking distance to `r_c`.
    pub k_g: f64,
    /// Median first-stroke current (kA).
    pub median_ka: f64,
    /// Log-normal shape parameter.
    pub sigma_ln: f64,
    /// Ground flash density (flashes / km^2 / yr).
    pub ground_flash_density: f64,
    /// Line length the rates are scaled to (km).
    pub line_length_km: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for EgmConfig {
    fn default() -> Self {
        EgmConfig {
            a: 10.0,
            b: 0.65,
            k_g: DEFAULT_K_G,
            median_ka: 31.0,
            sigma_ln: 0.48,
            ground_flash_density: DEFAULT_GROUND_FLASH_DENSITY,
            line_length_km: 100.0,
            samples: 20_000,
            seed: 1,
        }
    }
}

pub const DEFAULT_K_G: f64 = 0.58;
/// Flash density implied by 45.6 strokes per 100 km over a 180.62 m width.
pub const DEFAULT_GROUND_FLASH_DENSITY: f64 = 45.6 / (0.180_62 * 100.0);

impl EgmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEgm(m));
        if !(self.a > 0.0) {
            return bad(format!("a = {} must be positive", self.a));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return bad(format!("b = {} must lie in (0, 1)", self.b));
        }
        if !(self.k_g > 0.5 && self.k_g <= 1.5) {
            return bad(format!("k_g = {} must lie in (0.5, 1.5]", self.k_g));
        }
        if !(self.sigma_ln > 0.0) {
            return bad(format!("sigma_ln = {} must be positive", self.sigma_ln));
        }
        if !(self.median_ka > 0.0) {
            return bad(format!("median current {} kA must be positive", self.median_ka));
        }
        if !(self.ground_flash_density >= 0.0) || !(self.line_length_km > 0.0) {
            return bad("flash density must be >= 0 and line length > 0".into());
        }
        if self.samples == 0 {
            return bad("sample count must be positive".into());
        }
        Ok(())
    }

    /// Striking distance to a wire (m) for a current in kA.
    pub fn r_c(&self, i_ka: f64) -> f64 {
        self.a * i_ka.powf(self.b)
    }

    pub fn r_g(&self, i_ka: f64) -> f64 {
        self.k_g * self.r_c(i_ka)
    }
}

/// Where a stroke terminates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Ground,
    Shield,
    Phase(ConductorRole),
}

/// Cross-section used by the EGM: wire positions at midspan height.
#[derive(Debug, Clone, PartialEq)]
pub struct EgmGeometry {
    wires: Vec<(ConductorRole, f64, f64)>,
}

impl EgmGeometry {
    pub fn from_line(geom: &ConductorGeometry) -> Result<Self> {
        geom.validate()?;
        if geom.index_of(ConductorRole::Shield).is_none() {
            return Err(Error::InvalidEgm("geometry has no shield wire".into()));
        }
        let wires = geom.conductors.iter().map(|c| (c.role, c.x, c.y_midspan)).collect();
        Ok(EgmGeometry { wires })
    }

    /// Arbitrary wires as `(role, x, y)`.
    pub fn new(wires: Vec<(ConductorRole, f64, f64)>) -> Result<Self> {
        if wires.is_empty() || wires.iter().any(|w| !(w.2 > 0.0) || !w.1.is_finite()) {
            return Err(Error::InvalidEgm("wires need finite x and positive height".into()));
        }
        Ok(EgmGeometry { wires })
    }

    fn x_extent(&self) -> f64 {
        self.wires.iter().fold(0.0_f64, |m, w| m.max(w.1.abs()))
    }

    /// Height at which a leader at `x` reaches each surface; highest wins.
    fn winner(&self, x: f64, rc: f64, rg: f64) -> Option<usize> {
        let mut best = rg;
        let mut who = None;
        for (k, &(_, xc, yc)) in self.wires.iter().enumerate() {
            let d = rc * rc - (x - xc) * (x - xc);
            if d >= 0.0 {
                let y = yc + d.sqrt();
                if y > best {
                    best = y;
                    who = Some(k);
                }
            }
        }
        who
    }

    /// Termination of a stroke at lateral position `x` (m).
    pub fn classify(&self, x: f64, i_ka: f64, cfg: &EgmConfig) -> Termination {
        match self.winner(x, cfg.r_c(i_ka), cfg.r_g(i_ka)) {
            None => Termination::Ground,
            Some(k) => match self.wires[k].0 {
                ConductorRole::Shield => Termination::Shield,
                role => Termination::Phase(role),
            },
        }
    }

    fn breakpoints(&self, rc: f64, rg: f64) -> Vec<f64> {
        let mut xs = Vec::new();
        for (k, &(_, x1, y1)) in self.wires.iter().enumerate() {
            xs.push(x1 - rc);
            xs.push(x1 + rc);
            let h = rc * rc - (rg - y1) * (rg - y1);
            if h >= 0.0 {
                xs.push(x1 - h.sqrt());
                xs.push(x1 + h.sqrt());
            }
            for &(_, x2, y2) in &self.wires[k + 1..] {
                // equal-radius circles meet on the perpendicular bisector
                let (dx, dy) = (x2 - x1, y2 - y1);
                let d2 = dx * dx + dy * dy;
                let h2 = rc * rc - d2 / 4.0;
                if d2 == 0.0 || h2 < 0.0 {
                    continue;
                }
                let s = (h2 / d2).sqrt();
                let (mx, _) = ((x1 + x2) / 2.0, (y1 + y2) / 2.0);
                xs.push(mx - dy * s);
                xs.push(mx + dy * s);
            }
        }
        xs.retain(|x| x.is_finite());
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    /// Total lateral width (m) attaching to wires accepted by `select`.
    fn width_where(&self, i_ka: f64, cfg: &EgmConfig, select: impl Fn(ConductorRole) -> bool) -> f64 {
        let (rc, rg) = (cfg.r_c(i_ka), cfg.r_g(i_ka));
        let xs = self.breakpoints(rc, rg);
        let mut w = 0.0;
        for p in xs.windows(2) {
            if p[1] <= p[0] {
                continue;
            }
            if let Some(k) = self.winner(0.5 * (p[0] + p[1]), rc, rg) {
                if select(self.wires[k].0) {
                    w += p[1] - p[0];
                }
            }
        }
        w
    }

    /// Width of the band in which strokes attach to any phase conductor.
    pub fn exposure_width(&self, i_ka: f64, cfg: &EgmConfig) -> f64 {
        self.width_where(i_ka, cfg, ConductorRole::is_phase)
    }

    /// Width of the band in which strokes attach to any wire.
    pub fn collection_width(&self, i_ka: f64, cfg: &EgmConfig) -> f64 {
        self.width_where(i_ka, cfg, |_| true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MaxShieldingCurrent {
    /// Exposure closes at this current (kA).
    Finite(f64),
    /// No exposure at any current.
    FullyShielded,
    /// Exposure stays open up to the search limit.
    NeverShielded,
}

impl MaxShieldingCurrent {
    pub fn value_ka(self) -> f64 {
        match self {
            MaxShieldingCurrent::Finite(i) => i,
            MaxShieldingCurrent::FullyShielded => 0.0,
            MaxShieldingCurrent::NeverShielded => f64::INFINITY,
        }
    }
}

const I_SEARCH_MAX_KA: f64 = 1000.0;

/// Smallest current above which no stroke reaches a phase conductor.
pub fn max_shielding_failure_current(geom: &EgmGeometry, cfg: &EgmConfig) -> Result<MaxShieldingCurrent> {
    cfg.validate()?;
    let w = |i: f64| geom.exposure_width(i, cfg);
    // locate the exposure maximum on a log grid, then bisect above it
    let grid: Vec<f64> = (0..=400).map(|k| 0.1 * (I_SEARCH_MAX_KA / 0.1f64).powf(k as f64 / 400.0)).collect();
    let Some(last_open) = grid.iter().rposition(|&i| w(i) > 0.0) else {
        return Ok(MaxShieldingCurrent::FullyShielded);
    };
    if last_open == grid.len() - 1 {
        return Ok(MaxShieldingCurrent::NeverShielded);
    }
    let (mut lo, mut hi) = (grid[last_open], grid[last_open + 1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if w(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    Ok(MaxShieldingCurrent::Finite(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub index: usize,
    pub current_ka: f64,
    pub x: f64,
    pub termination: Termination,
}

/// Decides whether a stroke that hit the line causes an insulator flashover.
pub trait FlashoverOracle: Sync {
    fn flashover(&self, stroke: &Stroke) -> std::result::Result<bool, String>;
}

/// Flashover whenever the current reaches a critical value per termination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCurrentOracle {
    /// Critical current for a direct phase strike (kA).
    pub phase_ka: f64,
    /// Critical back-flashover current for a shield or tower strike (kA).
    pub shield_ka: f64,
}

impl FlashoverOracle for CriticalCurrentOracle {
    fn flashover(&self, stroke: &Stroke) -> std::result::Result<bool, String> {
        Ok(match stroke.termination {
            Termination::Ground => false,
            Termination::Shield => stroke.current_ka >= self.shield_ka,
            Termination::Phase(_) => stroke.current_ka >= self.phase_ka,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgmReport {
    /// Attractive width (m).
    pub w_e: f64,
    /// Strokes to the line per `line_length_km` per year.
    pub n_l: f64,
    /// Median current of strokes collected by the line (kA).
    pub i_m: f64,
    pub i_max: MaxShieldingCurrent,
    /// Shielding failure rate per `line_length_km` per year.
    pub sfr: f64,
    pub sffr: f64,
    pub bfr: f64,
    pub samples: usize,
    pub collected: usize,
    pub phase_strokes: usize,
    pub seed: u64,
    pub config: EgmConfig,
}

impl EgmReport {
    /// Text table in the layout of the line-performance summary.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<40}{:>12}\n", "Quantity", "Value"));
        s.push_str(&format!("{:<40}{:>12.2}\n", "Attractive width W_E (m)", self.w_e));
        s.push_str(&format!("{:<40}{:>12.2}\n", "Strokes to line N_L (/100 km/yr)", self.n_l));
        s.push_str(&format!("{:<40}{:>12.2}\n", "Median collected current I_M (kA)", self.i_m));
        s.push_str(&format!("{:<40}{:>12.2}\n", "Max shielding failure current I_MAX (kA)", self.i_max.value_ka()));
        s.push_str(&format!("{:<40}{:>12.4}\n", "Shielding failure rate SFR", self.sfr));
        s.push_str(&format!("{:<40}{:>12.4}\n", "Shielding failure flashover rate SFFR", self.sffr));
        s.push_str(&format!("{:<40}{:>12.4}\n", "Back-flashover rate BFR", self.bfr));
        s
    }
}

fn sample_strokes(geom: &EgmGeometry, cfg: &EgmConfig) -> Result<Vec<(Stroke, f64)>> {
    let dist = LogNormal::new(cfg.median_ka.ln(), cfg.sigma_ln)
        .map_err(|e| Error::InvalidEgm(format!("current distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let extent = geom.x_extent();
    let mut out = Vec::with_capacity(cfg.samples);
    for index in 0..cfg.samples {
        let current_ka: f64 = dist.sample(&mut rng);
        // beyond r_c from every wire the leader always reaches earth first
        let half = extent + cfg.r_c(current_ka) + 1.0;
        let x = rng.gen_range(-half..half);
        let termination = geom.classify(x, current_ka, cfg);
        out.push((Stroke { index, current_ka, x, termination }, 2.0 * half));
    }
    Ok(out)
}

/// Samples strokes, assigns terminations and evaluates the oracle.
///
/// Each stroke carries the width of its own lateral band, which scales
/// with its striking distance, so `W_E` is the mean of band width times
/// the collection indicator.
pub fn monte_carlo_incidence(geom: &EgmGeometry, cfg: &EgmConfig, oracle: &dyn FlashoverOracle) -> Result<EgmReport> {
    cfg.validate()?;
    let strokes = sample_strokes(geom, cfg)?;
    let flashes: Vec<bool> = strokes
        .par_iter()
        .map(|(s, _)| {
            if s.termination == Termination::Ground {
                Ok(false)
            } else {
                oracle.flashover(s).map_err(|reason| Error::Oracle { stroke: s.index, reason })
            }
        })
        .collect::<Result<_>>()?;

    let n = cfg.samples as f64;
    let (mut w_e, mut w_sf, mut w_sff, mut w_bf) = (0.0, 0.0, 0.0, 0.0);
    let mut collected_currents = Vec::new();
    let mut phase_strokes = 0;
    for ((s, band), &flash) in strokes.iter().zip(&flashes) {
        match s.termination {
            Termination::Ground => continue,
            Termination::Shield => {
                if flash {
                    w_bf += band;
                }
            }
            Termination::Phase(_) => {
                phase_strokes += 1;
                w_sf += band;
                if flash {
                    w_sff += band;
                }
            }
        }
        w_e += band;
        collected_currents.push(s.current_ka);
    }
    if collected_currents.is_empty() {
        return Err(Error::InvalidEgm("no strokes were collected by the line".into()));
    }
    let rate = |w: f64| cfg.ground_flash_density * (w / n / 1000.0) * cfg.line_length_km;
    collected_currents.sort_by(f64::total_cmp);
    let m = collected_currents.len();
    let i_m = if m % 2 == 1 {
        collected_currents[m / 2]
    } else {
        0.5 * (collected_currents[m / 2 - 1] + collected_currents[m / 2])
    };
    Ok(EgmReport {
        w_e: w_e / n,
        n_l: rate(w_e),
        i_m,
        i_max: max_shielding_failure_current(geom, cfg)?,
        sfr: rate(w_sf),
        sffr: rate(w_sff),
        bfr: rate(w_bf),
        samples: cfg.samples,
        collected: m,
        phase_strokes,
        seed: cfg.seed,
        config: cfg.clone(),
    })
}

/// Wire position in an EGM input file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wire {
    pub role: ConductorRole,
    pub x: f64,
    pub y: f64,
}

/// EGM input file: an `[egm]` table, optional `[[wire]]` entries (the study
/// line when absent) and optional `[oracle]` critical currents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgmFile {
    #[serde(default)]
    pub egm: EgmConfig,
    #[serde(default)]
    pub wire: Vec<Wire>,
    pub oracle: Option<CriticalCurrentOracle>,
}

impl EgmFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: EgmFile = toml::from_str(text).map_err(|e| crate::scenario::config::syntax_error(text, &e))?;
        f.egm.validate()?;
        Ok(f)
    }

    pub fn geometry(&self) -> Result<EgmGeometry> {
        if self.wire.is_empty() {
            EgmGeometry::from_line(&ConductorGeometry::study_line())
        } else {
            EgmGeometry::new(self.wire.iter().map(|w| (w.role, w.x, w.y)).collect())
        }
    }
}
