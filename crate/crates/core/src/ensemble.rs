//! Monte Carlo runs over endowment uncertainty, and `nu0` sensitivity
//! sweeps.
//!
//! Each run samples one endowment from the low/high range by drawing an
//! interpolation fraction, simulates it independently, and the runs are
//! reduced to empirical per-step percentiles (2nd/50th/98th by default,
//! the 96% band plus the median). Per-run random substreams are derived
//! from the seed and the run index, so parallel and serial execution give
//! bitwise-identical results at any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::distribution::{CostDistribution, DistributionError, UncertainEndowment};
use crate::inverse::{run_reverse, InversionError, InversionSettings};
use crate::kinetics::{run_forward, DepletionState, ExtractionProbability, KineticsError, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least 1 run")]
    NoRuns,
    #[error("percentiles must be strictly increasing within (0, 1): {0:?}")]
    BadPercentiles(Vec<f64>),
    #[error("fixed sampling fraction must lie in [0, 1], got {0}")]
    BadFixedFraction(f64),
    #[error("nu0 values must all be finite and > 0, got {0}")]
    BadNu0(f64),
    #[error("no nu0 values supplied")]
    NoNu0Values,
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
}

/// How the interpolation fraction is drawn for each run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingLaw {
    /// Uniform on [0, 1] (the default).
    Uniform,
    /// Every run uses the same fraction (degenerate ensembles, tests).
    Fixed(f64),
}

/// Ensemble controls.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub runs: usize,
    pub sampling: SamplingLaw,
    pub seed: u64,
    /// Strictly increasing percentiles within (0, 1).
    pub percentiles: Vec<f64>,
}

impl EnsembleSpec {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            sampling: SamplingLaw::Uniform,
            seed,
            percentiles: vec![0.02, 0.50, 0.98],
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.runs < 1 {
            return Err(EnsembleError::NoRuns);
        }
        let ok = !self.percentiles.is_empty()
            && self.percentiles.windows(2).all(|w| w[0] < w[1])
            && self.percentiles.iter().all(|&p| p > 0.0 && p < 1.0);
        if !ok {
            return Err(EnsembleError::BadPercentiles(self.percentiles.clone()));
        }
        if let SamplingLaw::Fixed(x) = self.sampling {
            if !(0.0..=1.0).contains(&x) {
                return Err(EnsembleError::BadFixedFraction(x));
            }
        }
        Ok(())
    }
}

/// Exogenous inputs of one simulation; the variant selects the mode.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioInputs {
    /// Exogenous price path, flows out.
    Forward { prices: TimeSeries },
    /// Exogenous demand path, marginal costs out.
    Reverse {
        demand: TimeSeries,
        settings: InversionSettings,
    },
}

impl ScenarioInputs {
    fn horizon(&self) -> &TimeSeries {
        match self {
            ScenarioInputs::Forward { prices } => prices,
            ScenarioInputs::Reverse { demand, .. } => demand,
        }
    }
}

/// One simulated trajectory of the ensemble's output quantity.
#[derive(Debug, Clone)]
struct RunOutput {
    series: TimeSeries,
    diverged_at: Option<usize>,
}

/// Per-step percentile bands plus the bounding endpoint runs.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// `(percentile, series)` pairs, ascending in percentile.
    pub percentiles: Vec<(f64, TimeSeries)>,
    /// Run on the pure low endowment (x = 0).
    pub low_run: TimeSeries,
    /// Run on the pure high endowment (x = 1).
    pub high_run: TimeSeries,
    /// Reverse mode only: fraction of runs diverged at or before each step.
    pub divergence_fraction: Option<TimeSeries>,
}

fn simulate(
    endowment: CostDistribution,
    f: &ExtractionProbability,
    nu0: f64,
    start_time: f64,
    inputs: &ScenarioInputs,
) -> Result<RunOutput, EnsembleError> {
    let state = DepletionState::new(endowment, nu0, start_time)?;
    match inputs {
        ScenarioInputs::Forward { prices } => {
            let run = run_forward(&state, f, prices, 0);
            Ok(RunOutput {
                series: run.flows,
                diverged_at: None,
            })
        }
        ScenarioInputs::Reverse { demand, settings } => {
            let run = run_reverse(&state, f, demand, settings)?;
            Ok(RunOutput {
                series: run.prices,
                diverged_at: run.diverged_at,
            })
        }
    }
}

/// Runs the Monte Carlo ensemble over the endowment range.
///
/// Deterministic for a fixed spec and seed, independent of thread count:
/// run `i` draws its fraction from a ChaCha substream keyed by `i`.
pub fn run_ensemble(
    endowment: &UncertainEndowment,
    f: &ExtractionProbability,
    nu0: f64,
    start_time: f64,
    inputs: &ScenarioInputs,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, EnsembleError> {
    spec.validate()?;
    let fractions: Vec<f64> = (0..spec.runs)
        .map(|i| match spec.sampling {
            SamplingLaw::Fixed(x) => x,
            SamplingLaw::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i as u64);
                rng.random_range(0.0..=1.0)
            }
        })
        .collect();
    let runs: Vec<RunOutput> = fractions
        .into_par_iter()
        .map(|x| {
            let sampled = endowment.sample(x)?;
            simulate(sampled, f, nu0, start_time, inputs)
        })
        .collect::<Result<_, _>>()?;

    let horizon = inputs.horizon();
    let n_steps = horizon.len();
    let mut percentiles = Vec::with_capacity(spec.percentiles.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.runs); n_steps];
    for run in &runs {
        for (k, &v) in run.series.values().iter().enumerate() {
            columns[k].push(v);
        }
    }
    for column in &mut columns {
        column.sort_by(f64::total_cmp);
    }
    for &p in &spec.percentiles {
        let values: Vec<f64> = columns.iter().map(|c| percentile_sorted(c, p)).collect();
        percentiles.push((p, horizon.with_values(values)?));
    }

    let divergence_fraction = match inputs {
        ScenarioInputs::Forward { .. } => None,
        ScenarioInputs::Reverse { .. } => {
            let mut fraction = vec![0.0; n_steps];
            for run in &runs {
                if let Some(at) = run.diverged_at {
                    for slot in fraction.iter_mut().skip(at) {
                        *slot += 1.0;
                    }
                }
            }
            for slot in &mut fraction {
                *slot /= spec.runs as f64;
            }
            Some(horizon.with_values(fraction)?)
        }
    };

    let low_run = simulate(endowment.sample(0.0)?, f, nu0, start_time, inputs)?;
    let high_run = simulate(endowment.sample(1.0)?, f, nu0, start_time, inputs)?;
    Ok(EnsembleResult {
        percentiles,
        low_run: low_run.series,
        high_run: high_run.series,
        divergence_fraction,
    })
}

/// Linear-interpolation empirical percentile of a sorted sample.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// One sweep entry: the run produced by a single `nu0` value.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub nu0: f64,
    /// Flows (forward) or marginal costs (reverse).
    pub output: TimeSeries,
    pub diverged_at: Option<usize>,
}

/// Runs one full simulation per `nu0` value on a fixed endowment,
/// otherwise identical inputs.
pub fn sensitivity_sweep(
    endowment: &CostDistribution,
    f: &ExtractionProbability,
    nu0_values: &[f64],
    start_time: f64,
    inputs: &ScenarioInputs,
) -> Result<Vec<SweepRun>, EnsembleError> {
    if nu0_values.is_empty() {
        return Err(EnsembleError::NoNu0Values);
    }
    if let Some(&bad) = nu0_values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(EnsembleError::BadNu0(bad));
    }
    nu0_values
        .iter()
        .map(|&nu0| {
            let run = simulate(endowment.clone(), f, nu0, start_time, inputs)?;
            Ok(SweepRun {
                nu0,
                output: run.series,
                diverged_at: run.diverged_at,
            })
        })
        .collect()
}

/// First maximum of a series: `(time, value)`.
pub fn peak(series: &TimeSeries) -> Option<(f64, f64)> {
    let (k, &v) = series
        .values()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    Some((series.time_at(k), v))
}

/// Arithmetic mean of a series.
pub fn mean(series: &TimeSeries) -> f64 {
    if series.is_empty() {
        return f64::NAN;
    }
    series.values().iter().sum::<f64>() / series.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::CostDistribution;

    fn endowment(scale: f64) -> UncertainEndowment {
        let edges: Vec<f64> = (0..=60).map(|i| 1.0 + 9.0 * i as f64 / 60.0).collect();
        let low: Vec<f64> = (0..60)
            .map(|i| {
                let c = 0.5 * (edges[i] + edges[i + 1]);
                let hump = |mu: f64| (-(c - mu) * (c - mu) / 0.5).exp();
                scale * (hump(3.0) + hump(6.5))
            })
            .collect();
        let high: Vec<f64> = low.iter().map(|d| 2.0 * d).collect();
        UncertainEndowment::new(
            CostDistribution::from_bins(&edges, &low).unwrap(),
            CostDistribution::from_bins(&edges, &high).unwrap(),
        )
        .unwrap()
    }

    fn forward_inputs() -> ScenarioInputs {
        let prices: Vec<f64> = (0..80).map(|k| 1.0 + 0.15 * k as f64).collect();
        ScenarioInputs::Forward {
            prices: TimeSeries::new(2008.0, 0.5, prices).unwrap(),
        }
    }

    #[test]
    fn single_run_bands_collapse_to_the_run() {
        let u = endowment(20.0);
        let f = ExtractionProbability::default();
        let mut spec = EnsembleSpec::new(1, 9);
        spec.sampling = SamplingLaw::Fixed(0.5);
        let result = run_ensemble(&u, &f, 1.0 / 44.0, 2008.0, &forward_inputs(), &spec).unwrap();
        let sampled = u.sample(0.5).unwrap();
        let state = DepletionState::new(sampled, 1.0 / 44.0, 2008.0).unwrap();
        let ScenarioInputs::Forward { prices } = forward_inputs() else {
            unreachable!()
        };
        let direct = run_forward(&state, &f, &prices, 0);
        for (_, band) in &result.percentiles {
            assert_eq!(band.values(), direct.flows.values());
        }
    }

    #[test]
    fn zero_width_range_gives_zero_width_bands() {
        let d = CostDistribution::from_bins(&[1.0, 5.0, 10.0], &[10.0, 4.0]).unwrap();
        let u = UncertainEndowment::exact(d);
        let f = ExtractionProbability::default();
        let spec = EnsembleSpec::new(32, 3);
        let result = run_ensemble(&u, &f, 0.05, 0.0, &forward_inputs(), &spec).unwrap();
        let first = &result.percentiles[0].1;
        let last = &result.percentiles[result.percentiles.len() - 1].1;
        assert_eq!(first.values(), last.values());
    }

    #[test]
    fn bands_ordered_and_bracketed_by_endpoint_runs() {
        let u = endowment(30.0);
        let f = ExtractionProbability::default();
        let spec = EnsembleSpec::new(100, 42);
        let result = run_ensemble(&u, &f, 1.0 / 44.0, 2008.0, &forward_inputs(), &spec).unwrap();
        for pair in result.percentiles.windows(2) {
            for (a, b) in pair[0].1.values().iter().zip(pair[1].1.values()) {
                assert!(a <= b);
            }
        }
        for (_, band) in &result.percentiles {
            for ((v, lo), hi) in band
                .values()
                .iter()
                .zip(result.low_run.values())
                .zip(result.high_run.values())
            {
                assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
        // Median peak value sits between the endpoint peaks.
        let median = &result.percentiles[1].1;
        let (_, peak_med) = peak(median).unwrap();
        let (_, peak_lo) = peak(&result.low_run).unwrap();
        let (_, peak_hi) = peak(&result.high_run).unwrap();
        assert!(peak_med >= peak_lo && peak_med <= peak_hi);
    }

    #[test]
    fn identical_seed_bitwise_identical_any_thread_count() {
        let u = endowment(30.0);
        let f = ExtractionProbability::default();
        let spec = EnsembleSpec::new(64, 1234);
        let inputs = forward_inputs();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| run_ensemble(&u, &f, 0.02, 2008.0, &inputs, &spec).unwrap())
        };
        let a = run(1);
        let b = run(4);
        for ((pa, sa), (pb, sb)) in a.percentiles.iter().zip(&b.percentiles) {
            assert_eq!(pa, pb);
            let bits = |s: &TimeSeries| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(sa), bits(sb));
        }
    }

    #[test]
    fn reverse_mode_reports_divergence_fraction_and_ordering() {
        let u = endowment(1.0); // small endowment, demand will outrun it
        let f = ExtractionProbability::logistic(0.3).unwrap();
        let demand = TimeSeries::new(2008.0, 0.5, vec![0.8; 80]).unwrap();
        let settings = InversionSettings::for_grid(u.low().grid());
        let inputs = ScenarioInputs::Reverse { demand, settings };
        let spec = EnsembleSpec::new(40, 5);
        let result = run_ensemble(&u, &f, 1.0 / 16.0, 2008.0, &inputs, &spec).unwrap();
        let frac = result.divergence_fraction.unwrap();
        // Non-decreasing and eventually positive.
        for pair in frac.values().windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        assert!(*frac.values().last().unwrap() > 0.0);
        // Larger endowment => pointwise lower-or-equal prices.
        for (lo_p, hi_p) in result.high_run.values().iter().zip(result.low_run.values()) {
            assert!(lo_p <= hi_p);
        }
    }

    #[test]
    fn sweep_single_value_matches_plain_run() {
        let u = endowment(30.0);
        let d = u.sample(0.5).unwrap();
        let f = ExtractionProbability::default();
        let inputs = forward_inputs();
        let sweep = sensitivity_sweep(&d, &f, &[1.0 / 44.0], 2008.0, &inputs).unwrap();
        assert_eq!(sweep.len(), 1);
        let state = DepletionState::new(d.clone(), 1.0 / 44.0, 2008.0).unwrap();
        let ScenarioInputs::Forward { prices } = &inputs else {
            unreachable!()
        };
        let direct = run_forward(&state, &f, prices, 0);
        assert_eq!(sweep[0].output.values(), direct.flows.values());
    }

    #[test]
    fn sweep_rejects_empty_and_non_positive() {
        let u = endowment(30.0);
        let d = u.sample(0.5).unwrap();
        let f = ExtractionProbability::default();
        let inputs = forward_inputs();
        assert!(matches!(
            sensitivity_sweep(&d, &f, &[], 2008.0, &inputs),
            Err(EnsembleError::NoNu0Values)
        ));
        assert!(matches!(
            sensitivity_sweep(&d, &f, &[0.02, -1.0], 2008.0, &inputs),
            Err(EnsembleError::BadNu0(v)) if v == -1.0
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&sorted, 0.5), 2.5);
        assert_eq!(percentile_sorted(&sorted, 0.02), 1.06);


        let single = [7.0];
        assert_eq!(percentile_sorted(&single, 0.02), 7.0);
        assert_eq!(percentile_sorted(&single, 0.98), 7.0);
    }

    #[test]
    fn spec_validation() {
        let mut spec = EnsembleSpec::new(0, 1);
        assert!(matches!(spec.validate(), Err(EnsembleError::NoRuns)));
        spec.runs = 10;
        spec.percentiles = vec![0.5, 0.5];
        assert!(matches!(spec.validate(), Err(EnsembleError::BadPercentiles(_))));
        spec.percentiles = vec![0.02, 0.5, 0.98];
        spec.sampling = SamplingLaw::Fixed(1.5);
        assert!(matches!(spec.validate(), Err(EnsembleError::BadFixedFraction(_))));
        spec.sampling = SamplingLaw::Uniform;
        assert!(spec.validate().is_ok());
    }
}
