//! `stockflow calibrate`: nu0 from a reserve/production history.

use stockflow::calibration::{estimate_nu0, read_rp_csv, rp_ratio, Scope};
use stockflow::io::{fmt_f64, Table};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::CalibrateArgs;

fn parse_window(raw: &str) -> Result<(i32, i32), CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || CliError::Validation(format!("--window wants START:END years, got `{raw}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let start = parts[0].parse::<i32>().map_err(|_| bad())?;
    let end = parts[1].parse::<i32>().map_err(|_| bad())?;
    if start > end {
        return Err(bad());
    }
    Ok((start, end))
}

pub fn execute(args: CalibrateArgs) -> Result<(), CliError> {
    let (mut manifest, started) = RunManifest::new("calibrate", &args.data)?;
    if args.reserves_scale <= 0.0 || args.production_scale <= 0.0 {
        return Err(CliError::Validation("unit scales must be > 0".into()));
    }
    let series = read_rp_csv(&args.data, args.reserves_scale, args.production_scale)?;
    let scope = match &args.regions {
        None => Scope::Global,
        Some(list) => Scope::Regions(
            list.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        ),
    };
    let ratios = rp_ratio(&series, &scope).map_err(|e| CliError::Validation(e.to_string()))?;
    let window = match &args.window {
        Some(raw) => parse_window(raw)?,
        None => (
            series.years()[0],
            series.years()[series.years().len() - 1],
        ),
    };
    let estimate =
        estimate_nu0(&ratios, window).map_err(|e| CliError::Validation(e.to_string()))?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(&format!("creating {}", args.out.display()), e))?;
    let mut table = Table::new(vec!["year".into(), "ratio_years".into()]);
    for (t, v) in ratios.iter() {
        table.push_row(vec![fmt_f64(t), fmt_f64(v)]);
    }
    table
        .write(&args.out.join("ratios.csv"))
        .map_err(|e| CliError::Io(e.to_string()))?;
    manifest.outputs = vec!["ratios.csv".into(), "manifest.json".into()];

    let scope_label = match &scope {
        Scope::Global => "global".to_string(),
        Scope::Regions(names) => names.join("+"),
    };
    println!(
        "scope={} window={}:{} inverse_mean_years={} inverse_std_years={} nu0_per_year={}",
        scope_label,
        estimate.window.0,
        estimate.window.1,
        fmt_f64(estimate.inverse_mean),
        fmt_f64(estimate.inverse_std),
        fmt_f64(estimate.nu0()),
    );
    manifest.finish(started, &args.out)
}
