//! The reverse problem: find the price that unlocks exactly the demanded
//! flow at each step.
//!
//! Step-average flow is non-decreasing in price (inherited from the
//! kinetics), so each step is a monotone root-finding problem solved by
//! bisection on `[grid floor - 6 * width, p_max]`. When even pricing all
//! remaining resources as economical cannot supply the demand, the step
//! is flagged as diverged, the maximum achievable flow is delivered at
//! `p_max`, the unmet remainder is recorded, and the run keeps going so
//! that later steps (and ensemble statistics) stay meaningful.

use thiserror::Error;

use crate::distribution::CostGrid;
use crate::kinetics::{DepletionState, ExtractionProbability, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("inversion settings invalid: {0}")]
    BadSettings(String),
    #[error("demand must be finite and >= 0, got {0}")]
    BadDemand(f64),
    #[error(
        "bisection did not converge within {iterations} iterations \
         (flow tolerance {tolerance}); grid or width pathology"
    )]
    NonConvergence { iterations: usize, tolerance: f64 },
}

/// Controls for the per-step price search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    /// Relative flow tolerance for accepting a price.
    pub tolerance: f64,
    /// Price ceiling, $/GJ.
    pub p_max: f64,
    /// Bisection iteration cap.
    pub max_iterations: usize,
}

impl InversionSettings {
    /// Defaults for a given cost grid: tolerance 1e-6, ceiling at 10x the
    /// last grid edge, 200 iterations.
    pub fn for_grid(grid: &CostGrid) -> Self {
        Self {
            tolerance: 1e-6,
            p_max: 10.0 * grid.last_edge(),
            max_iterations: 200,
        }
    }

    pub fn validate(&self) -> Result<(), InversionError> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(InversionError::BadSettings(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(InversionError::BadSettings(format!(
                "p_max must be > 0, got {}",
                self.p_max
            )));
        }
        if self.max_iterations < 1 {
            return Err(InversionError::BadSettings(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of inverting a single step.
#[derive(Debug, Clone)]
pub struct InvertedStep {
    /// Price found (clamped to `p_max` on divergence).
    pub price: f64,
    /// State advanced by one step at that price.
    pub state: DepletionState,
    /// Step-average flow actually delivered, EJ/y.
    pub delivered: f64,
    /// `Some(shortfall)` when the demand was unreachable at `p_max`.
    /// The shortfall is measured against the instantaneous capacity
    /// ceiling `nu0 * reserves(p_max)`, so it is independent of `dt`.
    pub shortfall: Option<f64>,
    /// Bisection iterations spent; bounded by
    /// `ceil(log2(bracket / price resolution))`.
    pub iterations: usize,
}

/// Finds the price whose step-average flow meets `demand` within
/// `cfg.tolerance * demand`, then advances the state at that price.
///
/// Zero demand returns the bracket floor and (for the sharp kind) an
/// unchanged distribution. Demand above what `p_max` can unlock is a
/// divergence, not an error: the step is taken at `p_max` and the
/// shortfall reported.
pub fn invert_step(
    state: &DepletionState,
    f: &ExtractionProbability,
    demand: f64,
    dt: f64,
    cfg: &InversionSettings,
) -> Result<InvertedStep, InversionError> {
    cfg.validate()?;
    if !demand.is_finite() || demand < 0.0 {
        return Err(InversionError::BadDemand(demand));
    }
    assert!(dt.is_finite() && dt > 0.0, "dt must be > 0, got {dt}");

    let floor = state.remaining().grid().first_edge() - 6.0 * f.width();
    let take = |price: f64, shortfall: Option<f64>, iterations: usize| {
        let (next, extracted) = state.step(f, price, dt);
        InvertedStep {
            price,
            state: next,
            delivered: extracted / dt,
            shortfall,
            iterations,
        }
    };

    if demand == 0.0 {
        return Ok(take(floor, None, 0));
    }

    // Divergence check at the ceiling.
    let max_delivered = state.trial_extraction(f, cfg.p_max, dt) / dt;
    if max_delivered < demand * (1.0 - cfg.tolerance) {
        let shortfall = demand - state.instantaneous_flow(f, cfg.p_max);
        return Ok(take(cfg.p_max, Some(shortfall), 0));
    }

    let delivered_at = |p: f64| state.trial_extraction(f, p, dt) / dt;
    let within = |d: f64| (d - demand).abs() <= cfg.tolerance * demand;

    let mut lo = floor;
    let mut hi = cfg.p_max;
    let d_lo = delivered_at(lo);
    if within(d_lo) || d_lo > demand {
        // The bracket floor already meets (or over-delivers) the demand;
        // the price cannot go below the floor.
        return Ok(take(lo, None, 0));
    }
    // Bracket collapse threshold: well below any physically meaningful
    // price resolution, reached long before the iteration cap on default
    // settings.
    let price_eps = 1e-9 * (1.0 + cfg.p_max.abs());
    for iteration in 1..=cfg.max_iterations {
        let mid = 0.5 * (lo + hi);
        let d_mid = delivered_at(mid);
        if within(d_mid) {
            return Ok(take(mid, None, iteration));
        }
        if d_mid < demand {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= price_eps {
            // Flow jumps across the demand inside an interval narrower
            // than the price resolution (sharp kind on a coarse grid):
            // settle on the side that covers the demand.
            return Ok(take(hi, None, iteration));
        }
    }
    Err(InversionError::NonConvergence {
        iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
    })
}

/// Full reverse run along a demand path.
#[derive(Debug, Clone)]
pub struct ReverseResult {
    /// Marginal cost of production per step, $/GJ.
    pub prices: TimeSeries,
    /// Step-average flow actually delivered, EJ/y.
    pub flows_delivered: TimeSeries,
    /// `max(0, demand - delivered)` per step, EJ/y.
    pub unmet_demand: TimeSeries,
    /// Per-step divergence flags.
    pub diverged: Vec<bool>,
    /// First diverged step, if any.
    pub diverged_at: Option<usize>,
    /// Capacity shortfall at the first diverged step, EJ/y.
    pub shortfall_at_divergence: Option<f64>,
    /// Remaining totals: index 0 initial, index k+1 after step k.
    pub remaining: Vec<f64>,
    pub final_state: DepletionState,
}

/// Solves the reverse problem step by step: the price path that unlocks
/// just the demanded flow, with divergence recorded but never aborting.
pub fn run_reverse(
    initial: &DepletionState,
    f: &ExtractionProbability,
    demand: &TimeSeries,
    cfg: &InversionSettings,
) -> Result<ReverseResult, InversionError> {
    let dt = demand.dt();
    let mut state = initial.clone();
    let n = demand.len();
    let mut prices = Vec::with_capacity(n);
    let mut delivered = Vec::with_capacity(n);
    let mut unmet = Vec::with_capacity(n);
    let mut diverged = Vec::with_capacity(n);
    let mut remaining = Vec::with_capacity(n + 1);
    let mut diverged_at = None;
    let mut shortfall_at_divergence = None;
    remaining.push(state.remaining().total_quantity());
    for (k, &want) in demand.values().iter().enumerate() {
        let step = invert_step(&state, f, want, dt, cfg)?;
        prices.push(step.price);
        delivered.push(step.delivered);
        unmet.push((want - step.delivered).max(0.0));
        diverged.push(step.shortfall.is_some());
        if let Some(shortfall) = step.shortfall {
            if diverged_at.is_none() {
                diverged_at = Some(k);
                shortfall_at_divergence = Some(shortfall);
            }
        }
        state = step.state;
        remaining.push(state.remaining().total_quantity());
    }
    Ok(ReverseResult {
        prices: demand.with_values(prices).expect("finite prices"),
        flows_delivered: demand.with_values(delivered).expect("finite flows"),
        unmet_demand: demand.with_values(unmet).expect("finite unmet"),
        diverged,
        diverged_at,
        shortfall_at_divergence,
        remaining,
        final_state: state,
    })
}
