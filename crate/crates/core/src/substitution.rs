//! Minimal technology-substitution layer.
//!
//! Demand for an energy service is split across technologies; shares
//! drift toward cheaper options through pairwise-comparison replicator
//! dynamics with a logistic preference in the cost difference. Coupled to
//! the reverse solver this damps price escalation: demand leaves a
//! depleting resource before its marginal cost runs away.
//!
//! Deliberately small: no capacity constraints, learning curves or grid
//! detail, just the minimum structure that exhibits the damping effect.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::inverse::{invert_step, InversionError, InversionSettings};
use crate::kinetics::{DepletionState, ExtractionProbability, TimeSeries};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubstitutionError {
    #[error("shares must be non-negative and sum to 1 (got sum {0})")]
    NotASimplex(f64),
    #[error("turnover rate must be finite and >= 0, got {0}")]
    BadTurnover(f64),
    #[error("preference width must be finite and > 0, got {0}")]
    BadWidth(f64),
    #[error("technology `{0}` links to unknown resource `{1}`")]
    UnknownResource(String, String),
    #[error("conversion intensity must be > 0 for resource-linked technology `{0}`")]
    BadIntensity(String),
    #[error("{got} shares for {expected} technologies")]
    ShareCount { expected: usize, got: usize },
    #[error("resource `{0}` missing from {1}")]
    MissingResourceEntry(String, &'static str),
    #[error(transparent)]
    Inversion(#[from] InversionError),
}

/// One way of supplying the demanded service.
#[derive(Debug, Clone, PartialEq)]
pub struct Technology {
    pub name: String,
    /// Endowment this technology consumes; `None` for a backstop whose
    /// cost is independent of any depleting resource.
    pub resource: Option<String>,
    /// EJ of resource per EJ of service.
    pub intensity: f64,
    /// Non-fuel cost offset, $/GJ of service.
    pub offset: f64,
}

impl Technology {
    /// Service cost given the marginal cost of the linked resource:
    /// `intensity * marginal_cost + offset`. A backstop costs its offset
    /// regardless of resource prices.
    pub fn service_cost(&self, marginal_cost: f64) -> f64 {
        match self.resource {
            Some(_) => self.intensity * marginal_cost + self.offset,
            None => self.offset,
        }
    }
}

/// Technology shares on the unit simplex plus the turnover rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareState {
    shares: Vec<f64>,
    /// Turnover rate tau^-1, per year.
    turnover: f64,
}

impl ShareState {
    pub fn new(shares: Vec<f64>, turnover: f64) -> Result<Self, SubstitutionError> {
        if !turnover.is_finite() || turnover < 0.0 {
            return Err(SubstitutionError::BadTurnover(turnover));
        }
        let sum: f64 = shares.iter().sum();
        if shares.iter().any(|&s| !(0.0..=1.0).contains(&s)) || (sum - 1.0).abs() > 1e-12 {
            return Err(SubstitutionError::NotASimplex(sum));
        }
        Ok(Self { shares, turnover })
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn turnover(&self) -> f64 {
        self.turnover
    }
}

/// Advances the shares one step toward the cheaper technologies.
///
/// Replicator form: each share is multiplied by
/// `1 + dt * tau^-1 * sum_j S_j * sigma(cost_j - cost_i)` and the vector
/// is renormalized, with `sigma` a logistic preference of the given
/// width. The step is internally subdivided so no substep moves any share
/// by more than 0.2. Zero shares stay zero, and equal costs leave the
/// state unchanged.
pub fn step_shares(
    state: &ShareState,
    costs: &[f64],
    preference_width: f64,
    dt: f64,
) -> Result<ShareState, SubstitutionError> {
    if costs.len() != state.shares.len() {
        return Err(SubstitutionError::ShareCount {
            expected: state.shares.len(),
            got: costs.len(),
        });
    }
    if !preference_width.is_finite() || preference_width <= 0.0 {
        return Err(SubstitutionError::BadWidth(preference_width));
    }
    let h_total = dt * state.turnover;
    if h_total == 0.0 {
        return Ok(state.clone());
    }
    let substeps = (h_total / 0.2).ceil().max(1.0) as usize;
    let h = h_total / substeps as f64;
    let sigma = |delta: f64| 1.0 / (1.0 + (-delta / preference_width).exp());
    let n = state.shares.len();
    let mut shares = state.shares.clone();
    for _ in 0..substeps {
        let mut grown = vec![0.0; n];
        for i in 0..n {
            let mut preference = 0.0;
            for j in 0..n {
                preference += shares[j] * sigma(costs[j] - costs[i]);
            }
            grown[i] = shares[i] * (1.0 + h * preference);
        }
        // Equal growth factors mean the costs carry no signal; keep the
        // state bit-identical rather than renormalizing noise in.
        let equal_growth = match shares.iter().position(|&s| s > 0.0) {
            Some(p) => {
                let g = grown[p] / shares[p];
                (0..n).all(|i| shares[i] == 0.0 || grown[i] / shares[i] == g)
            }
            None => true,
        };
        if equal_growth {
            continue;
        }
        let total: f64 = grown.iter().sum();
        for i in 0..n {
            shares[i] = grown[i] / total;
        }
    }
    ShareState::new(shares, state.turnover)
}

/// Everything a coupled run produces.
#[derive(Debug, Clone)]
pub struct CoupledResult {
    /// Marginal cost per resource, $/GJ.
    pub prices: BTreeMap<String, TimeSeries>,
    /// Unmet resource demand per resource, EJ/y.
    pub unmet: BTreeMap<String, TimeSeries>,
    /// Per-step divergence flags per resource.
    pub diverged: BTreeMap<String, Vec<bool>>,
    /// First diverged step per resource, if any.
    pub diverged_at: BTreeMap<String, Option<usize>>,
    /// Remaining totals per resource (index 0 initial).
    pub remaining: BTreeMap<String, Vec<f64>>,
    /// Share of each technology at each step start; one series per
    /// technology in input order.
    pub shares: Vec<TimeSeries>,
    pub final_states: BTreeMap<String, DepletionState>,
}

/// Couples demand splitting, per-resource price inversion and share
/// dynamics.
///
/// Each step: split the service demand by the current shares, invert each
/// resource's price for its summed resource demand, convert to service
/// costs, then update the shares. Divergence is handled per resource as
/// in the reverse solver and surfaced in the flags.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled(
    states: BTreeMap<String, DepletionState>,
    probabilities: &BTreeMap<String, ExtractionProbability>,
    inversion: &BTreeMap<String, InversionSettings>,
    technologies: &[Technology],
    initial_shares: &ShareState,
    preference_width: f64,
    total_demand: &TimeSeries,
) -> Result<CoupledResult, SubstitutionError> {
    if initial_shares.shares().len() != technologies.len() {
        return Err(SubstitutionError::ShareCount {
            expected: technologies.len(),
            got: initial_shares.shares().len(),
        });
    }
    for tech in technologies {
        if let Some(resource) = &tech.resource {
            if !states.contains_key(resource) {
                return Err(SubstitutionError::UnknownResource(
                    tech.name.clone(),
                    resource.clone(),
                ));
            }
            if !tech.intensity.is_finite() || tech.intensity <= 0.0 {
                return Err(SubstitutionError::BadIntensity(tech.name.clone()));
            }
        }
    }
    for name in states.keys() {
        if !probabilities.contains_key(name) {
            return Err(SubstitutionError::MissingResourceEntry(
                name.clone(),
                "probabilities",
            ));
        }
        if !inversion.contains_key(name) {
            return Err(SubstitutionError::MissingResourceEntry(
                name.clone(),
                "inversion settings",
            ));
        }
    }

    let dt = total_demand.dt();
    let n_steps = total_demand.len();
    let mut states = states;
    let mut shares = initial_shares.clone();
    let mut share_tracks: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps); technologies.len()];
    let mut prices: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut unmet: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut diverged: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut diverged_at: BTreeMap<String, Option<usize>> = BTreeMap::new();
    let mut remaining: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, state) in &states {
        prices.insert(name.clone(), Vec::with_capacity(n_steps));
        unmet.insert(name.clone(), Vec::with_capacity(n_steps));
        diverged.insert(name.clone(), Vec::with_capacity(n_steps));
        diverged_at.insert(name.clone(), None);
        remaining.insert(
            name.clone(),
            vec![state.remaining().total_quantity()],
        );
    }

    for (k, &total) in total_demand.values().iter().enumerate() {
        for (i, track) in share_tracks.iter_mut().enumerate() {
            track.push(shares.shares()[i]);
        }
        // Split the service demand and sum per resource.
        let mut resource_demand: BTreeMap<String, f64> =
            states.keys().map(|name| (name.clone(), 0.0)).collect();
        for (tech, &share) in technologies.iter().zip(shares.shares()) {
            if let Some(resource) = &tech.resource {
                *resource_demand.get_mut(resource).unwrap() += tech.intensity * share * total;
            }
        }
        // Invert each resource at its summed demand.
        let mut marginal: BTreeMap<String, f64> = BTreeMap::new();
        for (name, want) in resource_demand {
            let state = states.get(&name).unwrap();
            let f = &probabilities[&name];
            let cfg = &inversion[&name];
            let step = invert_step(state, f, want, dt, cfg)?;
            prices.get_mut(&name).unwrap().push(step.price);
            unmet
                .get_mut(&name)
                .unwrap()
                .push((want - step.delivered).max(0.0));
            diverged.get_mut(&name).unwrap().push(step.shortfall.is_some());
            if step.shortfall.is_some() {
                let slot = diverged_at.get_mut(&name).unwrap();
                if slot.is_none() {
                    *slot = Some(k);
                }
            }
            remaining
                .get_mut(&name)
                .unwrap()
                .push(step.state.remaining().total_quantity());
            marginal.insert(name.clone(), step.price);
            states.insert(name, step.state);
        }
        // Service costs at the prices just found, then the share update.
        let costs: Vec<f64> = technologies
            .iter()
            .map(|tech| match &tech.resource {
                Some(resource) => tech.service_cost(marginal[resource]),
                None => tech.offset,
            })
            .collect();
        shares = step_shares(&shares, &costs, preference_width, dt)?;
    }

    let wrap = |values: Vec<f64>| total_demand.with_values(values).expect("finite values");
    Ok(CoupledResult {
        prices: prices.into_iter().map(|(k, v)| (k, wrap(v))).collect(),
        unmet: unmet.into_iter().map(|(k, v)| (k, wrap(v))).collect(),
        diverged,
        diverged_at,
        remaining,
        shares: share_tracks.into_iter().map(wrap).collect(),
        final_states: states,
    })
}
