//! `stockflow sensitivity`: one run per nu0 value over a chosen resource,
//! with a summary of how the peak (forward) or price level (reverse)
//! moves.

use stockflow::ensemble::{mean, peak, sensitivity_sweep, ScenarioInputs};
use stockflow::io::{fmt_f64, Table};
use stockflow::scenario::{load_and_validate, Mode};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::SensitivityArgs;

fn parse_nu0_inverse(raw: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("--nu0-inverse: `{s}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Validation(
            "--nu0-inverse needs at least one value (years)".into(),
        ));
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(CliError::Validation(format!(
            "--nu0-inverse values must be > 0 years, got {bad}"
        )));
    }
    Ok(values)
}

/// File-name fragment for a value: `44` or `44p5`.
fn value_label(v: f64) -> String {
    fmt_f64(v).replace('.', "p").replace('-', "m")
}

pub fn execute(args: SensitivityArgs) -> Result<(), CliError> {
    crate::configure_threads(args.threads)?;
    let (mut manifest, started) = RunManifest::new("sensitivity", &args.config)?;
    manifest.threads = args.threads;
    let inverse_years = parse_nu0_inverse(&args.nu0_inverse)?;

    let scenario = load_and_validate(&args.config)?;
    if scenario.mode == Mode::Coupled {
        return Err(CliError::Validation(
            "sensitivity sweeps take forward or reverse configs".into(),
        ));
    }
    let resource_name = match (&args.resource, scenario.resources.len()) {
        (Some(name), _) => name.clone(),
        (None, 1) => scenario.resources.keys().next().unwrap().clone(),
        (None, n) => {
            return Err(CliError::Validation(format!(
                "config has {n} resources; pick one with --resource"
            )))
        }
    };
    let resource = scenario.resources.get(&resource_name).ok_or_else(|| {
        CliError::Validation(format!("config has no resource `{resource_name}`"))
    })?;
    let path = resource.path.as_ref().expect("validated path");
    let inputs = match scenario.mode {
        Mode::Forward => ScenarioInputs::Forward {
            prices: path.clone(),
        },
        _ => ScenarioInputs::Reverse {
            demand: path.clone(),
            settings: resource.inversion,
        },
    };
    let endowment = resource.endowment.sample(0.5).expect("valid fraction");
    let nu0_values: Vec<f64> = inverse_years.iter().map(|inv| 1.0 / inv).collect();
    let sweep = sensitivity_sweep(
        &endowment,
        &resource.probability,
        &nu0_values,
        scenario.horizon.start_year,
        &inputs,
    )?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(&format!("creating {}", args.out.display()), e))?;
    let quantity = match scenario.mode {
        Mode::Forward => "flows",
        _ => "prices",
    };
    let mut summary = Table::new(match scenario.mode {
        Mode::Forward => vec![
            "nu0_inverse_years".into(),
            "peak_year".into(),
            "peak_flow".into(),
        ],
        _ => vec![
            "nu0_inverse_years".into(),
            "mean_price".into(),
            "max_price".into(),
            "diverged".into(),
        ],
    });
    for (inv, run) in inverse_years.iter().zip(&sweep) {
        let name = format!("{quantity}_nu0inv_{}.csv", value_label(*inv));
        let mut table = Table::new(vec!["year".into(), resource_name.clone()]);
        for (t, v) in run.output.iter() {
            table.push_row(vec![fmt_f64(t), fmt_f64(v)]);
        }
        table
            .write(&args.out.join(&name))
            .map_err(|e| CliError::Io(e.to_string()))?;
        manifest.outputs.push(name);
        match scenario.mode {
            Mode::Forward => {
                let (peak_t, peak_v) = peak(&run.output).unwrap_or((f64::NAN, f64::NAN));
                println!(
                    "nu0_inverse={} y: peak {} EJ/y at {}",
                    fmt_f64(*inv),
                    fmt_f64(peak_v),
                    fmt_f64(peak_t)
                );
                summary.push_row(vec![fmt_f64(*inv), fmt_f64(peak_t), fmt_f64(peak_v)]);
            }
            _ => {
                let avg = mean(&run.output);
                let max = run.output.values().iter().cloned().fold(f64::NAN, f64::max);
                println!(
                    "nu0_inverse={} y: mean marginal cost {} $/GJ, max {} $/GJ{}",
                    fmt_f64(*inv),
                    fmt_f64(avg),
                    fmt_f64(max),
                    if run.diverged_at.is_some() {
                        " (diverged)"
                    } else {
                        ""
                    }
                );
                summary.push_row(vec![
                    fmt_f64(*inv),
                    fmt_f64(avg),
                    fmt_f64(max),
                    if run.diverged_at.is_some() { "1" } else { "0" }.to_string(),
                ]);
            }
        }
    }
    summary
        .write(&args.out.join("summary.csv"))
        .map_err(|e| CliError::Io(e.to_string()))?;
    manifest.outputs.push("summary.csv".into());
    manifest.outputs.push("manifest.json".into());
    manifest.finish(started, &args.out)
}
