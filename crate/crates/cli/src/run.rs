//! `stockflow run`: execute a scenario config and emit its artefacts.

use stockflow::scenario::{load_and_validate, run_scenario};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::outputs::write_scenario;
use crate::RunArgs;

pub fn execute(args: RunArgs) -> Result<(), CliError> {
    crate::configure_threads(args.threads)?;
    let (mut manifest, started) = RunManifest::new("run", &args.config)?;
    manifest.threads = args.threads;

    let mut scenario = load_and_validate(&args.config)?;
    if let Some(seed) = args.seed {
        match scenario.ensemble.as_mut() {
            Some(spec) => spec.seed = seed,
            None => {
                return Err(CliError::Validation(
                    "--seed only applies to configs with an [ensemble] section".into(),
                ))
            }
        }
    }
    manifest.seed = scenario.ensemble.as_ref().map(|e| e.seed);

    let outputs = run_scenario(&scenario)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(&format!("creating {}", args.out.display()), e))?;
    manifest.outputs = write_scenario(&outputs, &args.out)?;
    manifest.outputs.push("manifest.json".to_string());

    for (name, resource) in &outputs.resources {
        if let Some(flows) = &resource.flows {
            if let Some((peak_t, peak_v)) = stockflow::ensemble::peak(flows) {
                println!("{name}: peak flow {peak_v:.4} EJ/y at {peak_t}");
            }
        }
        if let Some(prices) = &resource.prices {
            let max = prices.values().iter().cloned().fold(f64::NAN, f64::max);
            let diverged = resource
                .diverged
                .as_ref()
                .and_then(|d| d.iter().position(|&x| x))
                .map(|k| format!(", diverged at step {k}"))
                .unwrap_or_default();
            println!("{name}: max marginal cost {max:.4} $/GJ{diverged}");
        }
    }
    println!(
        "{} mode, {} steps -> {}",
        outputs.mode,
        outputs.horizon.n_steps,
        args.out.display()
    );
    manifest.finish(started, &args.out)
}
