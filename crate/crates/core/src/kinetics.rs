//! Depletion kinetics: the reserve-consumption equation and the forward
//! solver.
//!
//! Each cost bin of the remaining distribution decays at rate
//! `nu0 * f(P - C)`, where `f` is a step-like extraction probability that
//! separates reserves (economical at price `P`) from the rest of the
//! resource base. Over a step of length `dt` at constant price the decay
//! is integrated exactly, so each step multiplies bin `i` by
//! `exp(-nu0 * f(p - C_i) * dt)` with `C_i` the bin midpoint. The update
//! is unconditionally stable, preserves positivity, and reproduces the
//! closed-form solutions for piecewise-constant price paths to roundoff.

use thiserror::Error;

use crate::distribution::CostDistribution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KineticsError {
    #[error("probability width must be finite and > 0 for smooth kinds, got {0}")]
    BadWidth(f64),
    #[error("nu0 must be finite and > 0, got {0}")]
    BadNu0(f64),
    #[error("time step dt must be finite and > 0, got {0}")]
    BadDt(f64),
    #[error("time series value {index} must be finite, got {value}")]
    BadValue { index: usize, value: f64 },
}

/// Shape of the extraction-probability step `f(P - C)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityKind {
    /// Unit step: 1 where the price covers the cost, 0 above.
    Sharp,
    /// Logistic rounding of the step.
    Logistic,
    /// Normal-CDF rounding of the step.
    Erf,
}

/// The continuous step-like probability of extraction `f(P - C)`.
///
/// Evaluates within [0, 1], is non-decreasing in `P - C`, tends to 1 as
/// `P - C -> +inf` and to 0 as `P - C -> -inf`, with `f(0) = 1/2` for the
/// smooth kinds. The width parameter sets the cost scale of the rounding
/// and is ignored by the sharp kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionProbability {
    kind: ProbabilityKind,
    width: f64,
}

impl ExtractionProbability {
    pub fn sharp() -> Self {
        Self {
            kind: ProbabilityKind::Sharp,
            width: 0.0,
        }
    }

    pub fn logistic(width: f64) -> Result<Self, KineticsError> {
        if !width.is_finite() || width <= 0.0 {
            return Err(KineticsError::BadWidth(width));
        }
        Ok(Self {
            kind: ProbabilityKind::Logistic,
            width,
        })
    }

    pub fn erf(width: f64) -> Result<Self, KineticsError> {
        if !width.is_finite() || width <= 0.0 {
            return Err(KineticsError::BadWidth(width));
        }
        Ok(Self {
            kind: ProbabilityKind::Erf,
            width,
        })
    }

    /// Erf kind whose width combines a cost-uncertainty scale and a
    /// price-volatility scale in quadrature.
    pub fn erf_from_widths(cost_width: f64, price_width: f64) -> Result<Self, KineticsError> {
        Self::erf((cost_width * cost_width + price_width * price_width).sqrt())
    }

    pub fn kind(&self) -> ProbabilityKind {
        self.kind
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `f(price - cost)`.
    pub fn probability(&self, price: f64, cost: f64) -> f64 {
        let x = price - cost;
        match self.kind {
            ProbabilityKind::Sharp => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ProbabilityKind::Logistic => 1.0 / (1.0 + (-x / self.width).exp()),
            ProbabilityKind::Erf => {
                // Standard normal CDF of x / width.
                0.5 * statrs::function::erf::erfc(-x / self.width / std::f64::consts::SQRT_2)
            }
        }
    }
}

impl Default for ExtractionProbability {
    /// Logistic with width 0.5 $/GJ.
    fn default() -> Self {
        Self {
            kind: ProbabilityKind::Logistic,
            width: 0.5,
        }
    }
}

/// Uniformly stepped sequence of values: prices, demands or flows.
///
/// `values[k]` applies over the step starting at `t0 + k * dt`; paths are
/// piecewise constant within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self, KineticsError> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(KineticsError::BadDt(dt));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(KineticsError::BadValue { index, value });
        }
        Ok(Self { t0, dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Start time of step `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    /// `(time, value)` pairs at step starts.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &v)| (self.time_at(k), v))
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, KineticsError> {
        Self::new(self.t0, self.dt, values)
    }
}

/// Remaining endowment plus the cumulative-extraction ledger.
///
/// `extracted + remaining total` stays equal to the initial total to
/// accumulation roundoff: every step books the mass difference it removed.
#[derive(Debug, Clone, PartialEq)]
pub struct DepletionState {
    remaining: CostDistribution,
    extracted: f64,
    time: f64,
    nu0: f64,
}

impl DepletionState {
    /// Fresh state at `time` with nothing extracted yet.
    pub fn new(initial: CostDistribution, nu0: f64, time: f64) -> Result<Self, KineticsError> {
        if !nu0.is_finite() || nu0 <= 0.0 {
            return Err(KineticsError::BadNu0(nu0));
        }
        Ok(Self {
            remaining: initial,
            extracted: 0.0,
            time,
            nu0,
        })
    }

    pub fn remaining(&self) -> &CostDistribution {
        &self.remaining
    }

    pub fn extracted(&self) -> f64 {
        self.extracted
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    /// Cost-distributed reserves at price `p`: the integral of
    /// `n(C) * f(p - C)` over the grid.
    ///
    /// For the sharp kind the integral is exact, including partially
    /// covered bins (it reduces to the cumulative quantity below `p`).
    /// Smooth kinds use midpoint quadrature, consistent with the per-bin
    /// depletion update.
    pub fn reserves(&self, f: &ExtractionProbability, p: f64) -> f64 {
        match f.kind() {
            ProbabilityKind::Sharp => self.remaining.cumulative_below(p),
            _ => {
                let grid = self.remaining.grid();
                let density = self.remaining.density();
                let mut acc = 0.0;
                for (i, &d) in density.iter().enumerate() {
                    acc += d * f.probability(p, grid.midpoint(i)) * grid.width(i);
                }
                acc
            }
        }
    }

    /// Instantaneous supply at price `p`: `nu0` times the reserves.
    pub fn instantaneous_flow(&self, f: &ExtractionProbability, p: f64) -> f64 {
        self.nu0 * self.reserves(f, p)
    }

    /// Mass that one step at price `p` over `dt` would extract, without
    /// building the new state. Arithmetic mirrors [`step`](Self::step)
    /// exactly so a trial and the applied step agree bitwise.
    pub fn trial_extraction(&self, f: &ExtractionProbability, p: f64, dt: f64) -> f64 {
        let grid = self.remaining.grid();
        let density = self.remaining.density();
        let mut total_after = 0.0;
        for (i, &d) in density.iter().enumerate() {
            let fi = f.probability(p, grid.midpoint(i));
            let after = d * (-self.nu0 * fi * dt).exp();
            total_after += after * grid.width(i);
        }
        self.remaining.total_quantity() - total_after
    }

    /// Advances one step at constant price `p`, returning the new state
    /// and the mass extracted during the step.
    ///
    /// Each bin decays by `exp(-nu0 * f(p - C_i) * dt)` with `C_i` the bin
    /// midpoint, the exact solution for a price held constant over the
    /// step. Under the sharp kind a bin is consumed iff `p >= C_i`; with
    /// `p` on a bin edge the bin above is therefore excluded.
    pub fn step(&self, f: &ExtractionProbability, p: f64, dt: f64) -> (Self, f64) {
        assert!(dt.is_finite() && dt > 0.0, "dt must be > 0, got {dt}");
        let grid = self.remaining.grid();
        let density = self.remaining.density();
        let mut new_density = Vec::with_capacity(density.len());
        let mut total_after = 0.0;
        for (i, &d) in density.iter().enumerate() {
            let fi = f.probability(p, grid.midpoint(i));
            let after = d * (-self.nu0 * fi * dt).exp();
            total_after += after * grid.width(i);
            new_density.push(after);
        }
        let extracted_now = self.remaining.total_quantity() - total_after;
        let next = Self {
            remaining: CostDistribution::from_validated(grid.clone(), new_density),
            extracted: self.extracted + extracted_now,
            time: self.time + dt,
            nu0: self.nu0,
        };
        (next, extracted_now)
    }
}

/// Output of [`run_forward`].
#[derive(Debug, Clone)]
pub struct ForwardRun {
    /// Step-average flow per step (mass extracted divided by dt), EJ/y.
    pub flows: TimeSeries,
    /// Remaining totals: index 0 is the initial total, index k+1 the total
    /// after step k.
    pub remaining: Vec<f64>,
    /// State snapshots at the configured cadence.
    pub snapshots: Vec<DepletionState>,
    pub final_state: DepletionState,
}

/// Integrates the depletion equation along an exogenous price path.
///
/// `flows[k]` is the step-average flow over step k. `snapshot_every = m`
/// keeps a state snapshot after every m-th step (0 keeps none); the final
/// state is always returned.
pub fn run_forward(
    initial: &DepletionState,
    f: &ExtractionProbability,
    prices: &TimeSeries,
    snapshot_every: usize,
) -> ForwardRun {
    let dt = prices.dt();
    let mut state = initial.clone();
    let mut flows = Vec::with_capacity(prices.len());
    let mut remaining = Vec::with_capacity(prices.len() + 1);
    let mut snapshots = Vec::new();
    remaining.push(state.remaining().total_quantity());
    for (k, &p) in prices.values().iter().enumerate() {
        let (next, extracted_now) = state.step(f, p, dt);
        state = next;
        flows.push(extracted_now / dt);
        remaining.push(state.remaining().total_quantity());
        if snapshot_every > 0 && (k + 1) % snapshot_every == 0 {
            snapshots.push(state.clone());
        }
    }
    ForwardRun {
        flows: TimeSeries::new(prices.t0(), dt, flows).expect("dt validated by prices"),
        remaining,
        snapshots,
        final_state: state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::CostDistribution;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Uniform density 10 EJ/($/GJ) on [1, 10] with unit-width bins, so
    /// integer prices land on bin edges.
    fn uniform_unit_bins() -> CostDistribution {
        let edges: Vec<f64> = (1..=10).map(f64::from).collect();
        CostDistribution::from_bins(&edges, &[10.0; 9]).unwrap()
    }

    fn state(nu0: f64) -> DepletionState {
        DepletionState::new(uniform_unit_bins(), nu0, 0.0).unwrap()
    }

    #[test]
    fn sharp_probability_is_unit_step() {
        let f = ExtractionProbability::sharp();
        assert_eq!(f.probability(5.0, 3.0), 1.0);
        assert_eq!(f.probability(3.0, 5.0), 0.0);
        assert_eq!(f.probability(4.0, 4.0), 1.0); // ties count as economical
    }

    #[test]
    fn logistic_probability_midpoint_and_limits() {
        let f = ExtractionProbability::logistic(0.5).unwrap();
        assert_eq!(f.probability(4.0, 4.0), 0.5);
        assert!(f.probability(100.0, 0.0) > 1.0 - 1e-12);
        assert!(f.probability(0.0, 100.0) < 1e-12);
    }

    #[test]
    fn erf_probability_matches_normal_cdf() {
        let f = ExtractionProbability::erf(1.0).unwrap();
        // Phi(1) from tables.
        assert_relative_eq!(f.probability(1.0, 0.0), 0.8413447460685429, max_relative = 1e-9);
        assert_eq!(f.probability(2.0, 2.0), 0.5);
    }

    #[test]
    fn erf_widths_combine_in_quadrature() {
        let f = ExtractionProbability::erf_from_widths(3.0, 4.0).unwrap();
        assert_eq!(f.width(), 5.0);
    }

    #[test]
    fn smooth_kinds_reject_non_positive_width() {
        assert!(ExtractionProbability::logistic(0.0).is_err());
        assert!(ExtractionProbability::erf(-1.0).is_err());
    }

    #[test]
    fn reserves_sharp_equals_cumulative() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        assert_eq!(s.reserves(&f, 5.0), 40.0);
        assert_eq!(s.reserves(&f, 0.5), 0.0);
        assert_eq!(s.reserves(&f, 50.0), 90.0);
    }

    #[test]
    fn reserves_smooth_approaches_total_above_grid() {
        let s = state(0.05);
        let f = ExtractionProbability::logistic(0.5).unwrap();
        assert_relative_eq!(s.reserves(&f, 100.0), 90.0, max_relative = 1e-9);
    }

    #[test]
    fn instantaneous_flow_scales_with_nu0() {
        let f = ExtractionProbability::sharp();
        let flow = state(0.05).instantaneous_flow(&f, 5.0);
        assert_relative_eq!(flow, 2.0, max_relative = 1e-15);
        let doubled = state(0.1).instantaneous_flow(&f, 5.0);
        assert_relative_eq!(doubled, 2.0 * flow, max_relative = 1e-15);
    }

    #[test]
    fn step_matches_closed_form_exponential() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let (next, extracted) = s.step(&f, 5.0, 1.0);
        let expect = 40.0 * (1.0 - (-0.05f64).exp()); // ~1.9508 EJ
        assert_relative_eq!(extracted, expect, max_relative = 1e-12);
        // Density below 5 scaled by e^-0.05, at and above 5 untouched.
        let factor = (-0.05f64).exp();
        for (i, &d) in next.remaining().density().iter().enumerate() {
            if next.remaining().grid().midpoint(i) < 5.0 {
                assert_relative_eq!(d, 10.0 * factor, max_relative = 1e-15);
            } else {
                assert_eq!(d, 10.0);
            }
        }
        assert_eq!(next.time(), 1.0);
        assert_relative_eq!(next.extracted(), extracted, max_relative = 1e-15);
    }

    #[test]
    fn step_extraction_vanishes_as_dt_shrinks() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let (_, extracted) = s.step(&f, 5.0, 1e-9);
        assert!(extracted < 1e-8);
    }

    #[test]
    fn step_below_all_costs_is_identity() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let (next, extracted) = s.step(&f, 0.5, 1.0);
        assert_eq!(extracted, 0.0);
        assert_eq!(next.remaining().density(), s.remaining().density());
    }

    #[test]
    fn trial_extraction_agrees_with_step_bitwise() {
        let s = state(0.031);
        let f = ExtractionProbability::logistic(0.7).unwrap();
        let trial = s.trial_extraction(&f, 4.3, 0.25);
        let (_, extracted) = s.step(&f, 4.3, 0.25);
        assert_eq!(trial.to_bits(), extracted.to_bits());
    }

    #[test]
    fn nu0_dt_unity_reduces_reserves_by_e() {
        // nu0 = 1/dt: one step shrinks every economical bin by e^-1.
        let s = state(0.5);
        let f = ExtractionProbability::sharp();
        let (next, _) = s.step(&f, 5.0, 2.0);
        let factor = (-1.0f64).exp();
        assert_relative_eq!(
            next.remaining().cumulative_below(5.0),
            40.0 * factor,
            max_relative = 1e-12
        );
    }

    #[test]
    fn large_nu0_dt_exploits_in_cost_order() {
        // As nu0*dt grows, bins below the price empty while bins above
        // keep their mass: extraction approaches perfect cost order.
        let s = state(50.0);
        let f = ExtractionProbability::sharp();
        let (next, _) = s.step(&f, 5.0, 1.0);
        for (i, &d) in next.remaining().density().iter().enumerate() {
            if next.remaining().grid().midpoint(i) < 5.0 {
                assert!(d <= 10.0 * (-50.0f64).exp());
            } else {
                assert_eq!(d, 10.0);
            }
        }
    }

    #[test]
    fn run_forward_matches_constant_price_decay() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let dt = 0.25;
        let n = 200; // 50 years
        let prices = TimeSeries::new(0.0, dt, vec![5.0; n]).unwrap();
        let run = run_forward(&s, &f, &prices, 0);
        // Step-average flow vs the analytic flow at the step midpoint.
        for (k, &flow) in run.flows.values().iter().enumerate() {
            let t_mid = (k as f64 + 0.5) * dt;
            let analytic = 0.05 * 40.0 * (-0.05 * t_mid).exp();
            assert_relative_eq!(flow, analytic, max_relative = 1e-4);
        }
    }

    #[test]
    fn run_forward_snapshot_cadence() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let prices = TimeSeries::new(0.0, 1.0, vec![5.0; 10]).unwrap();
        let run = run_forward(&s, &f, &prices, 4);
        assert_eq!(run.snapshots.len(), 2);
        assert_eq!(run.snapshots[0].time(), 4.0);
        assert_eq!(run.remaining.len(), 11);
    }

    #[test]
    fn run_forward_empty_horizon() {
        let s = state(0.05);
        let f = ExtractionProbability::sharp();
        let prices = TimeSeries::new(0.0, 1.0, vec![]).unwrap();
        let run = run_forward(&s, &f, &prices, 1);
        assert!(run.flows.is_empty());
        assert_eq!(run.final_state.extracted(), 0.0);
    }

    #[test]
    fn hysteresis_two_paths_same_endpoint() {
        // Path A: 20 y at p=2 then 20 y at p=8. Path B: 40 y at p=8.
        let f = ExtractionProbability::sharp();
        let s = state(0.05);
        let mut path_a = vec![2.0; 20];
        path_a.extend(vec![8.0; 20]);
        let a = run_forward(&s, &f, &TimeSeries::new(0.0, 1.0, path_a).unwrap(), 0);
        let b = run_forward(&s, &f, &TimeSeries::new(0.0, 1.0, vec![8.0; 40]).unwrap(), 0);
        let rem_a = a.final_state.remaining().total_quantity();
        let rem_b = b.final_state.remaining().total_quantity();
        // Closed form: A = 10 e^-2 + 60 e^-1 + 20, B = 70 e^-2 + 20.
        assert_relative_eq!(
            rem_a,
            10.0 * (-2.0f64).exp() + 60.0 * (-1.0f64).exp() + 20.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(rem_b, 70.0 * (-2.0f64).exp() + 20.0, max_relative = 1e-12);
        assert!((rem_a - rem_b).abs() > 1.0);
    }

    #[test]
    fn two_hump_endowment_single_peaked_flow() {
        // Two humps at 3 and 6 $/GJ; a linearly rising price unlocks the
        // second hump before the first is gone, so the flow has a single
        // peak and then declines.
        let edges: Vec<f64> = (0..=100).map(|i| 1.0 + 9.0 * i as f64 / 100.0).collect();
        let density: Vec<f64> = (0..100)
            .map(|i| {
                let c = 0.5 * (edges[i] + edges[i + 1]);
                let hump = |mu: f64| (-(c - mu) * (c - mu) / 0.5).exp();
                40.0 * (hump(3.0) + hump(6.0))
            })
            .collect();
        let d = CostDistribution::from_bins(&edges, &density).unwrap();
        let s = DepletionState::new(d, 0.05, 0.0).unwrap();
        let f = ExtractionProbability::logistic(0.5).unwrap();
        let n = 240;
        let prices: Vec<f64> = (0..n).map(|k| 1.0 + 11.0 * k as f64 / n as f64).collect();
        let run = run_forward(&s, &f, &TimeSeries::new(0.0, 0.25, prices).unwrap(), 0);
        let flows = run.flows.values();
        let peak = flows
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(peak > 0 && peak < n - 1);
        // Single-peaked: non-decreasing to the peak, non-increasing after,
        // with a small tolerance for discretization ripple.
        let tol = 1e-6 * flows[peak];
        for k in 1..=peak {
            assert!(flows[k] >= flows[k - 1] - tol, "rise violated at {k}");
        }
        for k in peak + 1..n {
            assert!(flows[k] <= flows[k - 1] + tol, "fall violated at {k}");
        }
        assert!(*flows.last().unwrap() < flows[peak]);
    }

    proptest! {
        /// Mass conservation: extracted + remaining equals the initial
        /// total to accumulation roundoff for any price path.
        #[test]
        fn conservation_any_price_path(
            prices in proptest::collection::vec(0.0f64..15.0, 1..80),
            nu0 in 0.01f64..0.9,
        ) {
            let s = state(nu0);
            let initial = s.remaining().total_quantity();
            let f = ExtractionProbability::logistic(0.5).unwrap();
            let run = run_forward(&s, &f, &TimeSeries::new(0.0, 0.5, prices).unwrap(), 0);
            let total = run.final_state.extracted()
                + run.final_state.remaining().total_quantity();
            prop_assert!((total - initial).abs() <= 1e-9 * initial);
        }

        /// Every bin's density is non-increasing across steps.
        #[test]
        fn densities_monotone_non_increasing(
            prices in proptest::collection::vec(0.0f64..15.0, 1..40),
        ) {
            let mut s = state(0.1);
            let f = ExtractionProbability::erf(0.8).unwrap();
            for &p in &prices {
                let (next, _) = s.step(&f, p, 0.5);
                for (a, b) in next.remaining().density().iter()
                    .zip(s.remaining().density()) {
                    prop_assert!(a <= b);
                }
                s = next;
            }
        }

        /// Instantaneous flow is non-decreasing in price for a fixed state.
        #[test]
        fn flow_monotone_in_price(
            p in 0.0f64..12.0,
            dp in 0.0f64..3.0,
            width in 0.1f64..2.0,
        ) {
            let s = state(0.05);
            for f in [
                ExtractionProbability::sharp(),
                ExtractionProbability::logistic(width).unwrap(),
                ExtractionProbability::erf(width).unwrap(),
            ] {
                prop_assert!(
                    s.instantaneous_flow(&f, p + dp) >= s.instantaneous_flow(&f, p)
                );
            }
        }

        /// The stepped solution equals n0 * exp(-nu0 * sum_k f_k * dt)
        /// per bin, for any stepwise price path.
        #[test]
        fn general_solution_per_bin(
            prices in proptest::collection::vec(0.0f64..15.0, 1..60),
            width in 0.2f64..2.0,
        ) {
            let s = state(0.08);
            let dt = 0.5;
            let f = ExtractionProbability::logistic(width).unwrap();
            let run = run_forward(&s, &f, &TimeSeries::new(0.0, dt, prices.clone()).unwrap(), 0);
            let grid = s.remaining().grid();
            for i in 0..grid.n_bins() {
                let exponent: f64 = prices.iter()
                    .map(|&p| f.probability(p, grid.midpoint(i)) * dt)
                    .sum();
                let expect = s.remaining().density()[i] * (-0.08 * exponent).exp();
                let got = run.final_state.remaining().density()[i];
                prop_assert!((got - expect).abs() <= 1e-12 * expect.max(1e-300));
            }
        }
    }
}
