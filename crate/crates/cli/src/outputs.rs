//! CSV and JSON emission for scenario outputs.
//!
//! Column layout: `year` first, then one column per resource per
//! quantity. Reverse and coupled runs add `<resource>_unmet` and
//! `<resource>_diverged` (0/1) columns; ensemble bands add
//! `<resource>_p02,p50,p98` triples plus the bounding endpoint runs and,
//! in reverse mode, `<resource>_diverged_frac`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use stockflow::ensemble::EnsembleResult;
use stockflow::io::{fmt_f64, Table};
use stockflow::kinetics::TimeSeries;
use stockflow::scenario::{Horizon, Mode, ScenarioOutputs};

use crate::error::CliError;

fn write_table(table: &Table, out_dir: &Path, name: &str) -> Result<(), CliError> {
    let path = out_dir.join(name);
    table
        .write(&path)
        .map_err(|e| CliError::Io(e.to_string()))
}

fn series_columns(horizon: &Horizon, columns: &[(String, &TimeSeries)]) -> Table {
    let mut headers = vec!["year".to_string()];
    headers.extend(columns.iter().map(|(name, _)| name.clone()));
    let mut table = Table::new(headers);
    let n = columns.first().map(|(_, s)| s.len()).unwrap_or(0);
    for k in 0..n {
        let mut row = vec![fmt_f64(horizon.time_at(k))];
        for (_, series) in columns {
            row.push(fmt_f64(series.values()[k]));
        }
        table.push_row(row);
    }
    table
}

/// Percentile column suffix: 0.02 -> `p02`, 0.5 -> `p50`, 0.125 -> `p12.5`.
fn percentile_label(p: f64) -> String {
    let pct = p * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("p{:02}", pct.round() as u32)
    } else {
        format!("p{pct}")
    }
}

/// Writes every artefact of a finished scenario run; returns the file
/// names written (CSV first, then sidecars).
pub fn write_scenario(out: &ScenarioOutputs, out_dir: &Path) -> Result<Vec<String>, CliError> {
    let mut written = Vec::new();
    let horizon = &out.horizon;

    // Flows (forward and reverse deliver them; coupled reports prices only).
    let flow_columns: Vec<(String, &TimeSeries)> = out
        .resources
        .iter()
        .filter_map(|(name, r)| r.flows.as_ref().map(|s| (name.clone(), s)))
        .collect();
    if !flow_columns.is_empty() {
        write_table(&series_columns(horizon, &flow_columns), out_dir, "flows.csv")?;
        written.push("flows.csv".to_string());
    }

    // Prices with unmet demand and divergence flags.
    if out.resources.values().any(|r| r.prices.is_some()) {
        let mut headers = vec!["year".to_string()];
        for (name, r) in &out.resources {
            if r.prices.is_some() {
                headers.push(name.clone());
                headers.push(format!("{name}_unmet"));
                headers.push(format!("{name}_diverged"));
            }
        }
        let mut table = Table::new(headers);
        for k in 0..horizon.n_steps {
            let mut row = vec![fmt_f64(horizon.time_at(k))];
            for r in out.resources.values() {
                let (Some(prices), Some(unmet), Some(diverged)) =
                    (&r.prices, &r.unmet, &r.diverged)
                else {
                    continue;
                };
                row.push(fmt_f64(prices.values()[k]));
                row.push(fmt_f64(unmet.values()[k]));
                row.push(if diverged[k] { "1" } else { "0" }.to_string());
            }
            table.push_row(row);
        }
        write_table(&table, out_dir, "prices.csv")?;
        written.push("prices.csv".to_string());
    }

    // Remaining totals at snapshot cadence (always including both ends).
    {
        let mut headers = vec!["year".to_string()];
        headers.extend(out.resources.keys().map(|n| format!("{n}_remaining")));
        let mut table = Table::new(headers);
        let rows = horizon.n_steps + 1;
        for k in 0..rows {
            if k % out.snapshot_every() != 0 && k != rows - 1 {
                continue;
            }
            let mut row = vec![fmt_f64(horizon.time_at(k))];
            for r in out.resources.values() {
                row.push(fmt_f64(r.remaining[k]));
            }
            table.push_row(row);
        }
        write_table(&table, out_dir, "remaining.csv")?;
        written.push("remaining.csv".to_string());
    }

    // Technology shares (coupled mode).
    if let Some((names, shares)) = &out.technology_shares {
        let columns: Vec<(String, &TimeSeries)> = names
            .iter()
            .cloned()
            .zip(shares.iter())
            .collect();
        write_table(&series_columns(horizon, &columns), out_dir, "shares.csv")?;
        written.push("shares.csv".to_string());
    }

    // Ensemble bands: CSV plus a plot-ready JSON sidecar.
    if out.resources.values().any(|r| r.bands.is_some()) {
        let mut headers = vec!["year".to_string()];
        for (name, r) in &out.resources {
            let Some(bands) = &r.bands else { continue };
            for (p, _) in &bands.percentiles {
                headers.push(format!("{name}_{}", percentile_label(*p)));
            }
            headers.push(format!("{name}_low"));
            headers.push(format!("{name}_high"));
            if bands.divergence_fraction.is_some() {
                headers.push(format!("{name}_diverged_frac"));
            }
        }
        let mut table = Table::new(headers);
        for k in 0..horizon.n_steps {
            let mut row = vec![fmt_f64(horizon.time_at(k))];
            for r in out.resources.values() {
                let Some(bands) = &r.bands else { continue };
                for (_, series) in &bands.percentiles {
                    row.push(fmt_f64(series.values()[k]));
                }
                row.push(fmt_f64(bands.low_run.values()[k]));
                row.push(fmt_f64(bands.high_run.values()[k]));
                if let Some(frac) = &bands.divergence_fraction {
                    row.push(fmt_f64(frac.values()[k]));
                }
            }
            table.push_row(row);
        }
        write_table(&table, out_dir, "bands.csv")?;
        written.push("bands.csv".to_string());

        let sidecar = bands_sidecar(out);
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| CliError::Runtime(format!("bands sidecar: {e}")))?;
        std::fs::write(out_dir.join("bands.json"), text + "\n")
            .map_err(|e| CliError::io("writing bands.json", e))?;
        written.push("bands.json".to_string());
    }

    Ok(written)
}

#[derive(Debug, Serialize)]
struct BandsSidecar {
    mode: String,
    years: Vec<f64>,
    resources: BTreeMap<String, ResourceBands>,
}

#[derive(Debug, Serialize)]
struct ResourceBands {
    quantity: String,
    percentiles: BTreeMap<String, Vec<f64>>,
    low_run: Vec<f64>,
    high_run: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence_fraction: Option<Vec<f64>>,
}

fn bands_sidecar(out: &ScenarioOutputs) -> BandsSidecar {
    let years = (0..out.horizon.n_steps)
        .map(|k| out.horizon.time_at(k))
        .collect();
    let quantity = match out.mode {
        Mode::Forward => "flow_ej_per_year",
        _ => "marginal_cost_usd_per_gj",
    };
    let resources = out
        .resources
        .iter()
        .filter_map(|(name, r)| {
            let bands: &EnsembleResult = r.bands.as_ref()?;
            let percentiles = bands
                .percentiles
                .iter()
                .map(|(p, s)| (percentile_label(*p), s.values().to_vec()))
                .collect();
            Some((
                name.clone(),
                ResourceBands {
                    quantity: quantity.to_string(),
                    percentiles,
                    low_run: bands.low_run.values().to_vec(),
                    high_run: bands.high_run.values().to_vec(),
                    divergence_fraction: bands
                        .divergence_fraction
                        .as_ref()
                        .map(|s| s.values().to_vec()),
                },
            ))
        })
        .collect();
    BandsSidecar {
        mode: out.mode.to_string(),
        years,
        resources,
    }
}
