//! Scenario assembly: binds endowments, extraction probabilities, `nu0`
//! values, price/demand assumptions and ensemble/substitution settings
//! into a validated, runnable description.
//!
//! Configs are TOML. Validation reports every problem it finds with a
//! path-like locator, not just the first. Units convert at ingestion:
//! costs in $/GJ (or $/boe at 6.12 GJ per barrel of oil equivalent),
//! demand in EJ/y.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::calibration::default_nu0;
use crate::distribution::{read_endowment_csv, CostDistribution, CostGrid, UncertainEndowment};
use crate::ensemble::{
    run_ensemble, EnsembleError, EnsembleResult, EnsembleSpec, SamplingLaw, ScenarioInputs,
};
use crate::inverse::{run_reverse, InversionError, InversionSettings};
use crate::io::Table;
use crate::kinetics::{
    run_forward, DepletionState, ExtractionProbability, TimeSeries,
};
use crate::substitution::{
    run_coupled, ShareState, SubstitutionError, Technology,
};

/// GJ per barrel of oil equivalent, for `$/boe` ingestion.
pub const GJ_PER_BOE: f64 = 6.12;

/// One validation finding with its config locator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read config `{path}`: {message}")]
    Read { path: String, message: String },
    #[error("cannot parse config `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("config invalid:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

/// Runtime failures while executing a validated scenario.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Substitution(#[from] SubstitutionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Reverse,
    Coupled,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Forward => write!(f, "forward"),
            Mode::Reverse => write!(f, "reverse"),
            Mode::Coupled => write!(f, "coupled"),
        }
    }
}

// ---------------------------------------------------------------------
// Raw config (mirrors the TOML schema)
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub horizon: HorizonConfig,
    pub resources: BTreeMap<String, ResourceConfig>,
    #[serde(default)]
    pub demand: Option<SharedDemandConfig>,
    #[serde(default)]
    pub technologies: Vec<TechnologyConfig>,
    #[serde(default)]
    pub substitution: Option<SubstitutionConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub inversion: Option<InversionConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub start_year: f64,
    pub end_year: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    /// R/P ratio in years; `nu0 = 1 / value`.
    #[serde(default)]
    pub nu0_inverse_years: Option<f64>,
    /// The rate itself, per year.
    #[serde(default)]
    pub nu0_per_year: Option<f64>,
    /// Name in the shipped default table (oil, gas, coal, uranium).
    #[serde(default)]
    pub calibration: Option<String>,
    #[serde(default)]
    pub f: Option<ProbabilityConfig>,
    pub endowment: EndowmentConfig,
    #[serde(default)]
    pub price: Option<PathConfig>,
    #[serde(default)]
    pub demand: Option<PathConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilityConfig {
    pub kind: String,
    #[serde(default)]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EndowmentConfig {
    /// Flat density between two costs.
    Uniform {
        cost_min: f64,
        cost_max: f64,
        #[serde(default)]
        density: Option<f64>,
        #[serde(default)]
        density_low: Option<f64>,
        #[serde(default)]
        density_high: Option<f64>,
        #[serde(default)]
        bins: Option<usize>,
    },
    /// Explicit bin edges and densities.
    Bins {
        edges: Vec<f64>,
        #[serde(default)]
        density: Option<Vec<f64>>,
        #[serde(default)]
        density_low: Option<Vec<f64>>,
        #[serde(default)]
        density_high: Option<Vec<f64>>,
    },
    /// CSV file in the endowment schema.
    Csv { path: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathConfig {
    /// `value(t) = start + slope * (t - start_year)`.
    Linear {
        start: f64,
        slope: f64,
        #[serde(default)]
        unit: Option<String>,
    },
    /// Piecewise-linear between `[time, value]` breakpoints, clamped at
    /// the ends.
    Points {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        unit: Option<String>,
    },
    /// Per-step series from a CSV with columns `year,value`.
    Csv {
        path: String,
        #[serde(default)]
        column: Option<String>,
        #[serde(default)]
        unit: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedDemandConfig {
    pub total: PathConfig,
    /// Per-resource demand shares (reverse mode); coupled mode splits by
    /// technology shares instead.
    #[serde(default)]
    pub shares: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyConfig {
    pub name: String,
    #[serde(default)]
    pub resource: Option<String>,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
    #[serde(default)]
    pub offset: f64,
    pub share: f64,
}

fn default_intensity() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstitutionConfig {
    #[serde(default = "default_turnover")]
    pub turnover_per_year: f64,
    #[serde(default = "default_preference_width")]
    pub preference_width: f64,
}

fn default_turnover() -> f64 {
    0.1
}

fn default_preference_width() -> f64 {
    1.0
}

impl Default for SubstitutionConfig {
    fn default() -> Self {
        Self {
            turnover_per_year: default_turnover(),
            preference_width: default_preference_width(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Monte Carlo runs; bands are stable to ~1% at the default of 500.
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub percentiles: Option<Vec<f64>>,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
}

fn default_runs() -> usize {
    500
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SamplingConfig {
    Named(String),
    Fixed { fixed: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub p_max: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Steps between remaining.csv rows (the final row always appears).
    #[serde(default = "default_remaining_every")]
    pub remaining_every: usize,
}

fn default_remaining_every() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            remaining_every: default_remaining_every(),
        }
    }
}

/// Parses a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let raw = std::fs::read_to_string(path).map_err(|e| ScenarioError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    toml::from_str(&raw).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

// ---------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------

/// Uniform step grid of the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub start_year: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl Horizon {
    pub fn end_year(&self) -> f64 {
        self.start_year + self.dt * self.n_steps as f64
    }

    /// Start time of step `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.start_year + self.dt * k as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedResource {
    pub endowment: UncertainEndowment,
    pub nu0: f64,
    pub probability: ExtractionProbability,
    pub inversion: InversionSettings,
    /// Price path (forward) or demand path (reverse); absent in coupled
    /// mode.
    pub path: Option<TimeSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCoupled {
    pub technologies: Vec<Technology>,
    pub initial_shares: Vec<f64>,
    pub turnover_per_year: f64,
    pub preference_width: f64,
    pub total_demand: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    pub mode: Mode,
    pub horizon: Horizon,
    pub resources: BTreeMap<String, ResolvedResource>,
    pub coupled: Option<ResolvedCoupled>,
    pub ensemble: Option<EnsembleSpec>,
    pub output: OutputSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputSettings {
    pub remaining_every: usize,
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue {
            path: path.into(),
            message: message.into(),
        });
    }
}

/// A linearly extrapolated path on the horizon's step grid:
/// `value(t_k) = start + slope * (t_k - start_year)`.
pub fn linear_path(start: f64, slope: f64, horizon: &Horizon) -> TimeSeries {
    let values = (0..horizon.n_steps)
        .map(|k| start + slope * (horizon.time_at(k) - horizon.start_year))
        .collect();
    TimeSeries::new(horizon.start_year, horizon.dt, values).expect("finite linear path")
}

/// Splits a total demand into per-resource series by fixed shares.
/// Shares must sum to 1 within 1e-9.
pub fn fixed_share_demand(
    total: &TimeSeries,
    shares: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, TimeSeries>, ScenarioError> {
    let sum: f64 = shares.values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ScenarioError::Invalid(vec![Issue {
            path: "demand.shares".into(),
            message: format!("shares must sum to 1, got {sum}"),
        }]));
    }
    Ok(shares
        .iter()
        .map(|(name, &share)| {
            let values = total.values().iter().map(|v| share * v).collect();
            (
                name.clone(),
                total.with_values(values).expect("finite shares"),
            )
        })
        .collect())
}

fn piecewise_value(points: &[[f64; 2]], t: f64) -> f64 {
    if t <= points[0][0] {
        return points[0][1];
    }
    let last = points[points.len() - 1];
    if t >= last[0] {
        return last[1];
    }
    for pair in points.windows(2) {
        let [t0, v0] = pair[0];
        let [t1, v1] = pair[1];
        if t <= t1 {
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
    }
    last[1]
}

/// Whether a path carries prices or demand, for unit handling.
#[derive(Clone, Copy, PartialEq, Eq)]
enum PathRole {
    Price,
    Demand,
}

fn unit_factor(unit: Option<&str>, role: PathRole, locator: &str, issues: &mut Issues) -> f64 {
    match (role, unit) {
        (PathRole::Price, None | Some("$/GJ")) => 1.0,
        (PathRole::Price, Some("$/boe")) => 1.0 / GJ_PER_BOE,
        (PathRole::Demand, None | Some("EJ/y") | Some("EJ")) => 1.0,
        (_, Some(other)) => {
            issues.push(locator, format!("unsupported unit `{other}`"));
            1.0
        }
    }
}

fn resolve_path(
    spec: &PathConfig,
    horizon: &Horizon,
    base_dir: &Path,
    role: PathRole,
    locator: &str,
    issues: &mut Issues,
) -> Option<TimeSeries> {
    let series = match spec {
        PathConfig::Linear { start, slope, unit } => {
            let factor = unit_factor(unit.as_deref(), role, locator, issues);
            let raw = linear_path(*start, *slope, horizon);
            let values = raw.values().iter().map(|v| v * factor).collect();
            raw.with_values(values).ok()?
        }
        PathConfig::Points { points, unit } => {
            if points.is_empty() {
                issues.push(locator, "needs at least one breakpoint");
                return None;
            }
            if points.windows(2).any(|w| w[0][0] >= w[1][0]) {
                issues.push(locator, "breakpoint times must be strictly increasing");
                return None;
            }
            let factor = unit_factor(unit.as_deref(), role, locator, issues);
            let values = (0..horizon.n_steps)
                .map(|k| factor * piecewise_value(points, horizon.time_at(k)))
                .collect();
            TimeSeries::new(horizon.start_year, horizon.dt, values).ok()?
        }
        PathConfig::Csv { path, column, unit } => {
            let factor = unit_factor(unit.as_deref(), role, locator, issues);
            let file = base_dir.join(path);
            let table = match Table::read(&file) {
                Ok(t) => t,
                Err(e) => {
                    issues.push(locator, e.to_string());
                    return None;
                }
            };
            let year_col = match table.column("year") {
                Some(c) => c,
                None => {
                    issues.push(locator, "series CSV needs a `year` column");
                    return None;
                }
            };
            let value_name = column.as_deref().unwrap_or("value");
            let value_col = match table.column(value_name) {
                Some(c) => c,
                None => {
                    issues.push(locator, format!("series CSV has no column `{value_name}`"));
                    return None;
                }
            };
            if table.rows.len() != horizon.n_steps {
                issues.push(
                    locator,
                    format!(
                        "series length {} != horizon steps {}",
                        table.rows.len(),
                        horizon.n_steps
                    ),
                );
                return None;
            }
            let mut values = Vec::with_capacity(horizon.n_steps);
            for (k, row) in table.rows.iter().enumerate() {
                let want_t = horizon.time_at(k);
                let year: f64 = match row[year_col].parse() {
                    Ok(v) => v,
                    Err(_) => {
                        issues.push(locator, format!("row {}: bad year `{}`", k + 2, row[year_col]));
                        return None;
                    }
                };
                if (year - want_t).abs() > 1e-6 * want_t.abs().max(1.0) {
                    issues.push(
                        locator,
                        format!("row {}: year {year} != expected step time {want_t}", k + 2),
                    );
                    return None;
                }
                match row[value_col].parse::<f64>() {
                    Ok(v) => values.push(v * factor),
                    Err(_) => {
                        issues.push(
                            locator,
                            format!("row {}: bad value `{}`", k + 2, row[value_col]),
                        );
                        return None;
                    }
                }
            }
            TimeSeries::new(horizon.start_year, horizon.dt, values).ok()?
        }
    };
    if role == PathRole::Demand {
        if let Some(&bad) = series.values().iter().find(|v| **v < 0.0) {
            issues.push(locator, format!("demand must be >= 0, found {bad}"));
            return None;
        }
    }
    Some(series)
}

fn resolve_endowment(
    spec: &EndowmentConfig,
    base_dir: &Path,
    locator: &str,
    issues: &mut Issues,
) -> Option<UncertainEndowment> {
    match spec {
        EndowmentConfig::Uniform {
            cost_min,
            cost_max,
            density,
            density_low,
            density_high,
            bins,
        } => {
            let bins = bins.unwrap_or(200);
            if bins == 0 {
                issues.push(locator, "bins must be >= 1");
                return None;
            }
            let (lo, hi) = match (density, density_low, density_high) {
                (Some(d), None, None) => (*d, *d),
                (None, Some(lo), Some(hi)) => (*lo, *hi),
                _ => {
                    issues.push(
                        locator,
                        "give either `density` or both `density_low` and `density_high`",
                    );
                    return None;
                }
            };
            let grid = match CostGrid::uniform(*cost_min, *cost_max, bins) {
                Ok(g) => g,
                Err(e) => {
                    issues.push(locator, e.to_string());
                    return None;
                }
            };
            let build = |d: f64| CostDistribution::new(grid.clone(), vec![d; bins]);
            match (build(lo), build(hi)) {
                (Ok(low), Ok(high)) => match UncertainEndowment::new(low, high) {
                    Ok(u) => Some(u),
                    Err(e) => {
                        issues.push(locator, e.to_string());
                        None
                    }
                },
                (Err(e), _) | (_, Err(e)) => {
                    issues.push(locator, e.to_string());
                    None
                }
            }
        }
        EndowmentConfig::Bins {
            edges,
            density,
            density_low,
            density_high,
        } => {
            let (lo, hi) = match (density, density_low, density_high) {
                (Some(d), None, None) => (d.clone(), d.clone()),
                (None, Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
                _ => {
                    issues.push(
                        locator,
                        "give either `density` or both `density_low` and `density_high`",
                    );
                    return None;
                }
            };
            let low = CostDistribution::from_bins(edges, &lo);
            let high = CostDistribution::from_bins(edges, &hi);
            match (low, high) {
                (Ok(low), Ok(high)) => match UncertainEndowment::new(low, high) {
                    Ok(u) => Some(u),
                    Err(e) => {
                        issues.push(locator, e.to_string());
                        None
                    }
                },
                (Err(e), _) | (_, Err(e)) => {
                    issues.push(locator, e.to_string());
                    None
                }
            }
        }
        EndowmentConfig::Csv { path } => {
            let file = base_dir.join(path);
            match read_endowment_csv(&file) {
                Ok(u) => Some(u),
                Err(e) => {
                    issues.push(locator, e.to_string());
                    None
                }
            }
        }
    }
}

fn resolve_probability(
    spec: Option<&ProbabilityConfig>,
    locator: &str,
    issues: &mut Issues,
) -> Option<ExtractionProbability> {
    let Some(cfg) = spec else {
        return Some(ExtractionProbability::default());
    };
    let width = cfg.width.unwrap_or(0.5);
    let result = match cfg.kind.as_str() {
        "sharp" => Ok(ExtractionProbability::sharp()),
        "logistic" => ExtractionProbability::logistic(width),
        "erf" => ExtractionProbability::erf(width),
        other => {
            issues.push(
                locator,
                format!("unknown probability kind `{other}` (sharp, logistic, erf)"),
            );
            return None;
        }
    };
    match result {
        Ok(f) => Some(f),
        Err(e) => {
            issues.push(locator, e.to_string());
            None
        }
    }
}

fn resolve_nu0(cfg: &ResourceConfig, locator: &str, issues: &mut Issues) -> Option<f64> {
    let given = [
        cfg.nu0_inverse_years.is_some(),
        cfg.nu0_per_year.is_some(),
        cfg.calibration.is_some(),
    ]
    .iter()
    .filter(|b| **b)
    .count();
    if given != 1 {
        issues.push(
            locator,
            "give exactly one of `nu0_inverse_years`, `nu0_per_year`, `calibration`",
        );
        return None;
    }
    let inverse_years = if let Some(inv) = cfg.nu0_inverse_years {
        inv
    } else if let Some(rate) = cfg.nu0_per_year {
        if !rate.is_finite() || rate <= 0.0 {
            issues.push(locator, format!("nu0_per_year must be > 0, got {rate}"));
            return None;
        }
        1.0 / rate
    } else {
        let name = cfg.calibration.as_deref().unwrap();
        match default_nu0(name) {
            Some(default) => default.inverse_years,
            None => {
                issues.push(
                    locator,
                    format!("no default calibration for `{name}` (oil, gas, coal, uranium)"),
                );
                return None;
            }
        }
    };
    if !inverse_years.is_finite() || inverse_years <= 0.0 {
        issues.push(
            locator,
            format!("nu0 inverse must be > 0 years, got {inverse_years}"),
        );
        return None;
    }
    Some(1.0 / inverse_years)
}

/// Validates a parsed config against a base directory for file
/// references, returning either a runnable scenario or every problem
/// found.
pub fn validate(cfg: &ScenarioConfig, base_dir: &Path) -> Result<ValidatedScenario, ScenarioError> {
    let mut issues = Issues(Vec::new());

    // Horizon.
    let span = cfg.horizon.end_year - cfg.horizon.start_year;
    let mut n_steps = 0usize;
    if !cfg.horizon.dt.is_finite() || cfg.horizon.dt <= 0.0 {
        issues.push("horizon.dt", format!("must be > 0, got {}", cfg.horizon.dt));
    } else if span < 0.0 {
        issues.push("horizon", "end_year must be >= start_year");
    } else {
        let steps = span / cfg.horizon.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            issues.push(
                "horizon",
                format!(
                    "dt {} does not divide the span {} (steps = {steps})",
                    cfg.horizon.dt, span
                ),
            );
        } else {
            n_steps = steps.round() as usize;
        }
    }
    let horizon = Horizon {
        start_year: cfg.horizon.start_year,
        dt: cfg.horizon.dt,
        n_steps,
    };

    if cfg.resources.is_empty() {
        issues.push("resources", "at least one resource is required");
    }
    for name in cfg.resources.keys() {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            issues.push(
                format!("resources.{name}"),
                "names must be non-empty [A-Za-z0-9_]",
            );
        }
    }

    // Shared demand (reverse split or coupled total).
    let shared_total = cfg.demand.as_ref().map(|d| {
        resolve_path(
            &d.total,
            &horizon,
            base_dir,
            PathRole::Demand,
            "demand.total",
            &mut issues,
        )
    });

    // Per-resource resolution.
    let mut resources = BTreeMap::new();
    for (name, res) in &cfg.resources {
        let locator = format!("resources.{name}");
        let endowment = resolve_endowment(
            &res.endowment,
            base_dir,
            &format!("{locator}.endowment"),
            &mut issues,
        );
        let probability = resolve_probability(res.f.as_ref(), &format!("{locator}.f"), &mut issues);
        let nu0 = resolve_nu0(res, &locator, &mut issues);

        match (cfg.mode, &res.price, &res.demand) {
            (Mode::Forward, Some(_), None) => {}
            (Mode::Forward, _, Some(_)) => {
                issues.push(format!("{locator}.demand"), "forward mode takes prices, not demand")
            }
            (Mode::Forward, None, None) => {
                issues.push(format!("{locator}.price"), "forward mode needs a price path")
            }
            (Mode::Reverse, Some(_), _) => {
                issues.push(format!("{locator}.price"), "reverse mode takes demand, not prices")
            }
            (Mode::Reverse, None, Some(_)) if cfg.demand.is_some() => issues.push(
                format!("{locator}.demand"),
                "give either per-resource demand or a shared [demand], not both",
            ),
            (Mode::Reverse, None, Some(_)) => {}
            (Mode::Reverse, None, None) if cfg.demand.is_none() => issues.push(
                format!("{locator}.demand"),
                "reverse mode needs a demand path (or a shared [demand] with shares)",
            ),
            (Mode::Reverse, None, None) => {}
            (Mode::Coupled, None, None) => {}
            (Mode::Coupled, _, _) => issues.push(
                locator.clone(),
                "coupled mode drives demand through technologies; remove price/demand paths",
            ),
        }

        let path = match cfg.mode {
            Mode::Forward => res.price.as_ref().and_then(|p| {
                resolve_path(
                    p,
                    &horizon,
                    base_dir,
                    PathRole::Price,
                    &format!("{locator}.price"),
                    &mut issues,
                )
            }),
            Mode::Reverse => res.demand.as_ref().and_then(|p| {
                resolve_path(
                    p,
                    &horizon,
                    base_dir,
                    PathRole::Demand,
                    &format!("{locator}.demand"),
                    &mut issues,
                )
            }),
            Mode::Coupled => None,
        };

        if let (Some(endowment), Some(probability), Some(nu0)) = (endowment, probability, nu0) {
            let mut inversion = InversionSettings::for_grid(endowment.low().grid());
            if let Some(inv) = &cfg.inversion {
                if let Some(t) = inv.tolerance {
                    inversion.tolerance = t;
                }
                if let Some(p) = inv.p_max {
                    inversion.p_max = p;
                }
                if let Some(m) = inv.max_iterations {
                    inversion.max_iterations = m;
                }
            }
            if let Err(e) = inversion.validate() {
                issues.push("inversion", e.to_string());
            }
            resources.insert(
                name.clone(),
                ResolvedResource {
                    endowment,
                    nu0,
                    probability,
                    inversion,
                    path,
                },
            );
        }
    }

    // Reverse-mode shared demand split.
    if cfg.mode == Mode::Reverse {
        if let Some(shared) = &cfg.demand {
            match &shared.shares {
                None => issues.push("demand.shares", "reverse mode with [demand] needs shares"),
                Some(shares) => {
                    for name in shares.keys() {
                        if !cfg.resources.contains_key(name) {
                            issues.push(
                                format!("demand.shares.{name}"),
                                "share names an unknown resource",
                            );
                        }
                    }
                    for name in cfg.resources.keys() {
                        if !shares.contains_key(name) {
                            issues.push(
                                format!("demand.shares.{name}"),
                                "resource missing from the shares",
                            );
                        }
                    }
                    if let Some(Some(total)) = &shared_total {
                        match fixed_share_demand(total, shares) {
                            Ok(split) => {
                                for (name, series) in split {
                                    if let Some(resource) = resources.get_mut(&name) {
                                        resource.path = Some(series);
                                    }
                                }
                            }
                            Err(ScenarioError::Invalid(more)) => issues.0.extend(more),
                            Err(_) => unreachable!("fixed_share_demand only returns Invalid"),
                        }
                    }
                }
            }
        }
    } else if cfg.mode == Mode::Forward && cfg.demand.is_some() {
        issues.push("demand", "forward mode takes per-resource prices, not [demand]");
    }

    // Technologies and substitution (coupled mode only).
    let mut coupled = None;
    match cfg.mode {
        Mode::Coupled => {
            if cfg.technologies.is_empty() {
                issues.push("technologies", "coupled mode needs at least one technology");
            }
            match &cfg.demand {
                None => issues.push("demand.total", "coupled mode needs a total demand path"),
                Some(shared) if shared.shares.is_some() => issues.push(
                    "demand.shares",
                    "coupled mode splits demand by technology shares; remove [demand] shares",
                ),
                Some(_) => {}
            }
            let mut technologies = Vec::with_capacity(cfg.technologies.len());
            let mut initial_shares = Vec::with_capacity(cfg.technologies.len());
            let mut seen = std::collections::BTreeSet::new();
            for (i, tech) in cfg.technologies.iter().enumerate() {
                let locator = format!("technologies[{i}]");
                if tech.name.is_empty()
                    || !tech.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    issues.push(locator.clone(), "names must be non-empty [A-Za-z0-9_]");
                }
                if !seen.insert(tech.name.clone()) {
                    issues.push(locator.clone(), format!("duplicate name `{}`", tech.name));
                }
                if let Some(resource) = &tech.resource {
                    if !cfg.resources.contains_key(resource) {
                        issues.push(
                            locator.clone(),
                            format!("links to unknown resource `{resource}`"),
                        );
                    }
                    if !tech.intensity.is_finite() || tech.intensity <= 0.0 {
                        issues.push(
                            locator.clone(),
                            format!("intensity must be > 0, got {}", tech.intensity),
                        );
                    }
                }
                if !(0.0..=1.0).contains(&tech.share) {
                    issues.push(locator, format!("share must lie in [0, 1], got {}", tech.share));
                }
                technologies.push(Technology {
                    name: tech.name.clone(),
                    resource: tech.resource.clone(),
                    intensity: tech.intensity,
                    offset: tech.offset,
                });
                initial_shares.push(tech.share);
            }
            let share_sum: f64 = initial_shares.iter().sum();
            if !cfg.technologies.is_empty() && (share_sum - 1.0).abs() > 1e-9 {
                issues.push(
                    "technologies",
                    format!("shares must sum to 1, got {share_sum}"),
                );
            }
            let substitution = cfg.substitution.clone().unwrap_or_default();
            if !substitution.turnover_per_year.is_finite() || substitution.turnover_per_year < 0.0 {
                issues.push("substitution.turnover_per_year", "must be >= 0");
            }
            if !substitution.preference_width.is_finite() || substitution.preference_width <= 0.0 {
                issues.push("substitution.preference_width", "must be > 0");
            }
            if let Some(Some(total)) = shared_total {
                coupled = Some(ResolvedCoupled {
                    technologies,
                    initial_shares,
                    turnover_per_year: substitution.turnover_per_year,
                    preference_width: substitution.preference_width,
                    total_demand: total,
                });
            }
        }
        _ => {
            if !cfg.technologies.is_empty() {
                issues.push("technologies", "only coupled mode takes technologies");
            }
            if cfg.substitution.is_some() {
                issues.push("substitution", "only coupled mode takes [substitution]");
            }
        }
    }

    // Ensemble.
    let mut ensemble = None;
    if let Some(ens) = &cfg.ensemble {
        if cfg.mode == Mode::Coupled {
            issues.push("ensemble", "ensemble runs support forward and reverse modes only");
        } else {
            let mut spec = EnsembleSpec::new(ens.runs, ens.seed);
            if let Some(p) = &ens.percentiles {
                spec.percentiles = p.clone();
            }
            match &ens.sampling {
                None => {}
                Some(SamplingConfig::Named(name)) if name == "uniform" => {}
                Some(SamplingConfig::Named(name)) => {
                    issues.push("ensemble.sampling", format!("unknown law `{name}`"));
                }
                Some(SamplingConfig::Fixed { fixed }) => {
                    spec.sampling = SamplingLaw::Fixed(*fixed);
                }
            }
            if let Err(e) = spec.validate() {
                issues.push("ensemble", e.to_string());
            } else {
                ensemble = Some(spec);
            }
        }
    }

    if cfg.output.remaining_every == 0 {
        issues.push("output.remaining_every", "must be >= 1");
    }

    if !issues.0.is_empty() {
        return Err(ScenarioError::Invalid(issues.0));
    }
    Ok(ValidatedScenario {
        mode: cfg.mode,
        horizon,
        resources,
        coupled,
        ensemble,
        output: OutputSettings {
            remaining_every: cfg.output.remaining_every,
        },
    })
}

/// Loads and validates in one call. Relative file references resolve
/// against the config's directory.
pub fn load_and_validate(path: &Path) -> Result<ValidatedScenario, ScenarioError> {
    let cfg = load_config(path)?;
    let base_dir: PathBuf = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    validate(&cfg, &base_dir)
}

// ---------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------

/// Per-resource outputs of one scenario run.
#[derive(Debug, Clone)]
pub struct ResourceOutput {
    /// Forward mode: step-average flows.
    pub flows: Option<TimeSeries>,
    /// Reverse/coupled modes: marginal costs.
    pub prices: Option<TimeSeries>,
    /// Reverse/coupled modes: unmet demand.
    pub unmet: Option<TimeSeries>,
    /// Reverse/coupled modes: per-step divergence flags.
    pub diverged: Option<Vec<bool>>,
    /// Remaining totals, index 0 initial, then one per step.
    pub remaining: Vec<f64>,
    /// Percentile bands when an ensemble was configured.
    pub bands: Option<EnsembleResult>,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutputs {
    pub mode: Mode,
    pub horizon: Horizon,
    pub resources: BTreeMap<String, ResourceOutput>,
    /// Coupled mode: technology names and share trajectories.
    pub technology_shares: Option<(Vec<String>, Vec<TimeSeries>)>,
    /// Steps between remaining-total rows in emitted output.
    pub snapshot_every: usize,
}

impl ScenarioOutputs {
    pub fn snapshot_every(&self) -> usize {
        self.snapshot_every.max(1)
    }
}

/// Executes a validated scenario. The central estimate (interpolation
/// fraction 0.5) drives the single-run outputs; bands come from the
/// configured ensemble.
pub fn run_scenario(scenario: &ValidatedScenario) -> Result<ScenarioOutputs, RunError> {
    let mut outputs = BTreeMap::new();
    let start = scenario.horizon.start_year;
    match scenario.mode {
        Mode::Forward | Mode::Reverse => {
            for (name, resource) in &scenario.resources {
                let path = resource.path.as_ref().expect("validated path");
                let central = resource
                    .endowment
                    .sample(0.5)
                    .expect("0.5 is a valid fraction");
                let state = DepletionState::new(central, resource.nu0, start)
                    .expect("validated nu0");
                let inputs = match scenario.mode {
                    Mode::Forward => ScenarioInputs::Forward {
                        prices: path.clone(),
                    },
                    _ => ScenarioInputs::Reverse {
                        demand: path.clone(),
                        settings: resource.inversion,
                    },
                };
                let bands = match &scenario.ensemble {
                    Some(spec) => Some(run_ensemble(
                        &resource.endowment,
                        &resource.probability,
                        resource.nu0,
                        start,
                        &inputs,
                        spec,
                    )?),
                    None => None,
                };
                let output = match scenario.mode {
                    Mode::Forward => {
                        let run = run_forward(&state, &resource.probability, path, 0);
                        ResourceOutput {
                            flows: Some(run.flows),
                            prices: None,
                            unmet: None,
                            diverged: None,
                            remaining: run.remaining,
                            bands,
                        }
                    }
                    _ => {
                        let run =
                            run_reverse(&state, &resource.probability, path, &resource.inversion)?;
                        ResourceOutput {
                            flows: Some(run.flows_delivered),
                            prices: Some(run.prices),
                            unmet: Some(run.unmet_demand),
                            diverged: Some(run.diverged),
                            remaining: run.remaining,
                            bands,
                        }
                    }
                };
                outputs.insert(name.clone(), output);
            }
            Ok(ScenarioOutputs {
                mode: scenario.mode,
                horizon: scenario.horizon,
                resources: outputs,
                technology_shares: None,
                snapshot_every: scenario.output.remaining_every,
            })
        }
        Mode::Coupled => {
            let coupled = scenario.coupled.as_ref().expect("validated coupled setup");
            let mut states = BTreeMap::new();
            let mut probabilities = BTreeMap::new();
            let mut inversion = BTreeMap::new();
            for (name, resource) in &scenario.resources {
                let central = resource
                    .endowment
                    .sample(0.5)
                    .expect("0.5 is a valid fraction");
                states.insert(
                    name.clone(),
                    DepletionState::new(central, resource.nu0, start).expect("validated nu0"),
                );
                probabilities.insert(name.clone(), resource.probability);
                inversion.insert(name.clone(), resource.inversion);
            }
            let shares = ShareState::new(
                coupled.initial_shares.clone(),
                coupled.turnover_per_year,
            )
            .expect("validated shares");
            let result = run_coupled(
                states,
                &probabilities,
                &inversion,
                &coupled.technologies,
                &shares,
                coupled.preference_width,
                &coupled.total_demand,
            )?;
            for (name, prices) in result.prices {
                outputs.insert(
                    name.clone(),
                    ResourceOutput {
                        flows: None,
                        prices: Some(prices),
                        unmet: Some(result.unmet[&name].clone()),
                        diverged: Some(result.diverged[&name].clone()),
                        remaining: result.remaining[&name].clone(),
                        bands: None,
                    },
                );
            }
            let names = coupled
                .technologies
                .iter()
                .map(|t| t.name.clone())
                .collect();
            Ok(ScenarioOutputs {
                mode: scenario.mode,
                horizon: scenario.horizon,
                resources: outputs,
                technology_shares: Some((names, result.shares)),
                snapshot_every: scenario.output.remaining_every,
            })
        }
    }
}
