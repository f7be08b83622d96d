//! Estimation of the reserve-consumption rate `nu0` from historical
//! reserve and production series.
//!
//! The inverse of `nu0` is the reserve-to-production (R/P) ratio, which is
//! near-constant at the global level for the major stock resources. The
//! global ratio must be formed as a ratio of sums across regions, never a
//! mean of per-region ratios: regional markets trade into one another and
//! only their aggregate tracks the world price.

use std::path::Path;

use thiserror::Error;

use crate::io::{self, parse_f64, Table};
use crate::kinetics::TimeSeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("scope selects no regions")]
    EmptyScope,
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("production is zero or negative in year {0}")]
    ZeroProduction(i32),
    #[error("window {0}..={1} selects no years of the series")]
    EmptyWindow(i32, i32),
    #[error("adjustment series has {got} entries, series has {expected} years")]
    AdjustmentLength { expected: usize, got: usize },
    #[error("adjustment {adjustment} exceeds reserves {reserves} for region `{region}` in year {year}")]
    AdjustmentExceedsReserves {
        region: String,
        year: i32,
        adjustment: f64,
        reserves: f64,
    },
    #[error("series columns have unequal lengths (years {years}, region `{region}` has {got})")]
    LengthMismatch {
        years: usize,
        region: String,
        got: usize,
    },
    #[error("series needs at least one region and one year")]
    Empty,
    #[error("value for region `{region}` in year {year} must be finite and >= 0, got {value}")]
    BadValue {
        region: String,
        year: i32,
        value: f64,
    },
}

/// Per-region reserve and production history on a shared year axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RpSeries {
    years: Vec<i32>,
    regions: Vec<RegionSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub name: String,
    /// Reserves per year (EJ or any unit consistent within the series).
    pub reserves: Vec<f64>,
    /// Production per year (same unit per year).
    pub production: Vec<f64>,
}

impl RpSeries {
    pub fn new(years: Vec<i32>, regions: Vec<RegionSeries>) -> Result<Self, CalibrationError> {
        if years.is_empty() || regions.is_empty() {
            return Err(CalibrationError::Empty);
        }
        for r in &regions {
            if r.reserves.len() != years.len() {
                return Err(CalibrationError::LengthMismatch {
                    years: years.len(),
                    region: r.name.clone(),
                    got: r.reserves.len(),
                });
            }
            if r.production.len() != years.len() {
                return Err(CalibrationError::LengthMismatch {
                    years: years.len(),
                    region: r.name.clone(),
                    got: r.production.len(),
                });
            }
            for (i, &year) in years.iter().enumerate() {
                for v in [r.reserves[i], r.production[i]] {
                    if !v.is_finite() || v < 0.0 {
                        return Err(CalibrationError::BadValue {
                            region: r.name.clone(),
                            year,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Self { years, regions })
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn regions(&self) -> &[RegionSeries] {
        &self.regions
    }

    pub fn region_names(&self) -> Vec<&str> {
        self.regions.iter().map(|r| r.name.as_str()).collect()
    }
}

/// Region selection for aggregation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    /// All regions summed.
    Global,
    /// Named subset summed.
    Regions(Vec<String>),
}

/// Per-year ratio of summed reserves to summed production over the scope,
/// in years. Aggregation is ratio-of-sums.
pub fn rp_ratio(series: &RpSeries, scope: &Scope) -> Result<TimeSeries, CalibrationError> {
    let selected: Vec<&RegionSeries> = match scope {
        Scope::Global => series.regions.iter().collect(),
        Scope::Regions(names) => {
            if names.is_empty() {
                return Err(CalibrationError::EmptyScope);
            }
            let mut picked = Vec::with_capacity(names.len());
            for name in names {
                let region = series
                    .regions
                    .iter()
                    .find(|r| &r.name == name)
                    .ok_or_else(|| CalibrationError::UnknownRegion(name.clone()))?;
                picked.push(region);
            }
            picked
        }
    };
    let mut ratios = Vec::with_capacity(series.years.len());
    for (i, &year) in series.years.iter().enumerate() {
        let reserves: f64 = selected.iter().map(|r| r.reserves[i]).sum();
        let production: f64 = selected.iter().map(|r| r.production[i]).sum();
        if production <= 0.0 {
            return Err(CalibrationError::ZeroProduction(year));
        }
        ratios.push(reserves / production);
    }
    Ok(TimeSeries::new(series.years[0] as f64, 1.0, ratios).expect("finite ratios"))
}

/// `nu0` estimate expressed through its inverse, the R/P ratio in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nu0Estimate {
    /// Mean R/P over the window, years.
    pub inverse_mean: f64,
    /// Sample standard deviation of R/P over the window, years.
    pub inverse_std: f64,
    /// Year range the estimate used, inclusive.
    pub window: (i32, i32),
}

impl Nu0Estimate {
    /// The rate itself, per year.
    pub fn nu0(&self) -> f64 {
        1.0 / self.inverse_mean
    }
}

/// Mean and sample standard deviation of the ratio series over an
/// inclusive year window.
pub fn estimate_nu0(
    ratios: &TimeSeries,
    window: (i32, i32),
) -> Result<Nu0Estimate, CalibrationError> {
    let (start, end) = window;
    let selected: Vec<f64> = ratios
        .iter()
        .filter(|(t, _)| {
            let year = t.round() as i32;
            year >= start && year <= end
        })
        .map(|(_, v)| v)
        .collect();
    if selected.is_empty() {
        return Err(CalibrationError::EmptyWindow(start, end));
    }
    let n = selected.len() as f64;
    let mean = selected.iter().sum::<f64>() / n;
    let std = if selected.len() < 2 {
        0.0
    } else {
        let ss: f64 = selected.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    Ok(Nu0Estimate {
        inverse_mean: mean,
        inverse_std: std,
        window,
    })
}

/// Returns a copy of the series with per-year quantities subtracted from
/// one region's reserves (e.g. removing an unconventional category).
/// Production is untouched.
pub fn exclude_category(
    series: &RpSeries,
    region: &str,
    adjustments: &[f64],
) -> Result<RpSeries, CalibrationError> {
    if adjustments.len() != series.years.len() {
        return Err(CalibrationError::AdjustmentLength {
            expected: series.years.len(),
            got: adjustments.len(),
        });
    }
    let mut out = series.clone();
    let target = out
        .regions
        .iter_mut()
        .find(|r| r.name == region)
        .ok_or_else(|| CalibrationError::UnknownRegion(region.to_string()))?;
    for (i, (&adj, &year)) in adjustments.iter().zip(&series.years).enumerate() {
        if adj > target.reserves[i] {
            return Err(CalibrationError::AdjustmentExceedsReserves {
                region: region.to_string(),
                year,
                adjustment: adj,
                reserves: target.reserves[i],
            });
        }
        target.reserves[i] -= adj;
    }
    Ok(out)
}

/// Shipped R/P defaults per resource, overridable by calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nu0Default {
    pub resource: &'static str,
    /// Default R/P ratio, years.
    pub inverse_years: f64,
    /// Uncertainty on the ratio, years.
    pub inverse_std_years: f64,
}

/// Default R/P table: oil 44±10 y, gas 56±6 y, coal 125±50 y,
/// uranium 16±1 y.
pub const DEFAULT_NU0_TABLE: [Nu0Default; 4] = [
    Nu0Default {
        resource: "oil",
        inverse_years: 44.0,
        inverse_std_years: 10.0,
    },
    Nu0Default {
        resource: "gas",
        inverse_years: 56.0,
        inverse_std_years: 6.0,
    },
    Nu0Default {
        resource: "coal",
        inverse_years: 125.0,
        inverse_std_years: 50.0,
    },
    Nu0Default {
        resource: "uranium",
        inverse_years: 16.0,
        inverse_std_years: 1.0,
    },
];

/// Looks up a default by resource name (case-insensitive).
pub fn default_nu0(resource: &str) -> Option<&'static Nu0Default> {
    DEFAULT_NU0_TABLE
        .iter()
        .find(|d| d.resource.eq_ignore_ascii_case(resource))
}

/// Reads an R/P history from CSV.
///
/// Schema: header `year,region,reserves,production`, long format, one row
/// per (year, region). Every region must cover the same ascending year
/// set. `reserves_scale` and `production_scale` convert native units at
/// ingestion.
pub fn read_rp_csv(
    path: &Path,
    reserves_scale: f64,
    production_scale: f64,
) -> Result<RpSeries, io::CsvError> {
    let table = Table::read(path)?;
    table.expect_headers(&["year", "region", "reserves", "production"])?;
    let mut years: Vec<i32> = Vec::new();
    let mut regions: Vec<RegionSeries> = Vec::new();
    for (r, row) in table.rows.iter().enumerate() {
        let row_no = r + 2;
        let year = row[0].parse::<i32>().map_err(|_| io::CsvError::Schema {
            path: path.display().to_string(),
            row: row_no,
            message: format!("column `year`: not an integer: `{}`", row[0]),
        })?;
        let region = row[1].as_str();
        let reserves = parse_f64(path, row_no, "reserves", &row[2])? * reserves_scale;
        let production = parse_f64(path, row_no, "production", &row[3])? * production_scale;
        let entry = match regions.iter_mut().find(|g| g.name == region) {
            Some(entry) => entry,
            None => {
                regions.push(RegionSeries {
                    name: region.to_string(),
                    reserves: Vec::new(),
                    production: Vec::new(),
                });
                regions.last_mut().unwrap()
            }
        };
        let slot = entry.reserves.len();
        match years.get(slot) {
            Some(&expected) if expected == year => {}
            Some(&expected) => {
                return Err(io::CsvError::Schema {
                    path: path.display().to_string(),
                    row: row_no,
                    message: format!(
                        "region `{region}`: expected year {expected} at position {slot}, got {year}"
                    ),
                });
            }
            None => {
                if let Some(&last) = years.last() {
                    if year <= last {
                        return Err(io::CsvError::Schema {
                            path: path.display().to_string(),
                            row: row_no,
                            message: format!("years must ascend: {year} after {last}"),
                        });
                    }
                }
                years.push(year);
            }
        }
        entry.reserves.push(reserves);
        entry.production.push(production);
    }
    RpSeries::new(years, regions).map_err(|e| io::CsvError::Schema {
        path: path.display().to_string(),
        row: 1,
        message: e.to_string(),
    })
}
