//! Cost-distributed resource endowments and cost-supply curves.
//!
//! The state variable of the whole engine is a piecewise-constant density
//! `n(C)` over extraction cost: EJ of resource per $/GJ of cost, on a
//! user-supplied bin grid. Integrals over the grid are exact, which keeps
//! every downstream mass balance testable to roundoff.

use std::path::Path;

use thiserror::Error;

use crate::io::{self, parse_f64, Table};

/// Errors raised while constructing or querying cost distributions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("cost grid needs at least 2 edges, got {0}")]
    TooFewEdges(usize),
    #[error("cost edge {index} must be finite and >= 0, got {value}")]
    BadEdge { index: usize, value: f64 },
    #[error("cost edges must be strictly increasing: edges[{index}] = {prev} >= edges[{next_index}] = {next}")]
    NonMonotoneEdges {
        index: usize,
        next_index: usize,
        prev: f64,
        next: f64,
    },
    #[error("expected {expected} density values for {expected} bins, got {got}")]
    DensityLengthMismatch { expected: usize, got: usize },
    #[error("density at bin {index} must be finite and >= 0, got {value}")]
    BadDensity { index: usize, value: f64 },
    #[error("low estimate exceeds high estimate at bin {index}: {low} > {high}")]
    BoundsCross { index: usize, low: f64, high: f64 },
    #[error("low and high estimates must share the same cost grid")]
    GridMismatch,
    #[error("interpolation fraction must lie in [0, 1], got {0}")]
    FractionOutOfRange(f64),
    #[error("quantity {quantity} outside the supply curve range [0, {total}]")]
    QuantityOutOfRange { quantity: f64, total: f64 },
}

/// Ordered cost-bin edges in $/GJ. `edges[i]..edges[i+1]` is bin `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    edges: Vec<f64>,
}

impl CostGrid {
    /// Builds a grid from strictly increasing, finite, non-negative edges.
    pub fn new(edges: Vec<f64>) -> Result<Self, DistributionError> {
        if edges.len() < 2 {
            return Err(DistributionError::TooFewEdges(edges.len()));
        }
        for (i, &e) in edges.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(DistributionError::BadEdge { index: i, value: e });
            }
        }
        for i in 0..edges.len() - 1 {
            if edges[i] >= edges[i + 1] {
                return Err(DistributionError::NonMonotoneEdges {
                    index: i,
                    next_index: i + 1,
                    prev: edges[i],
                    next: edges[i + 1],
                });
            }
        }
        Ok(Self { edges })
    }

    /// Uniform grid of `bins` equal-width bins spanning `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self, DistributionError> {
        let edges = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins.max(1) as f64)
            .collect();
        Self::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    pub fn first_edge(&self) -> f64 {
        self.edges[0]
    }

    pub fn last_edge(&self) -> f64 {
        *self.edges.last().unwrap()
    }
}

/// A cost-binned resource endowment: density in EJ per $/GJ, one value per
/// grid bin. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDistribution {
    grid: CostGrid,
    density: Vec<f64>,
}

impl CostDistribution {
    /// Validates densities against the grid: one finite non-negative value
    /// per bin, finite total.
    pub fn new(grid: CostGrid, density: Vec<f64>) -> Result<Self, DistributionError> {
        if density.len() != grid.n_bins() {
            return Err(DistributionError::DensityLengthMismatch {
                expected: grid.n_bins(),
                got: density.len(),
            });
        }
        for (i, &d) in density.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(DistributionError::BadDensity { index: i, value: d });
            }
        }
        let out = Self { grid, density };
        let total = out.total_quantity();
        if !total.is_finite() {
            return Err(DistributionError::BadDensity {
                index: 0,
                value: total,
            });
        }
        Ok(out)
    }

    /// Convenience constructor from raw edge and density slices.
    pub fn from_bins(edges: &[f64], densities: &[f64]) -> Result<Self, DistributionError> {
        let grid = CostGrid::new(edges.to_vec())?;
        Self::new(grid, densities.to_vec())
    }

    /// Internal constructor for densities already known to satisfy the
    /// invariants (e.g. produced by multiplying a valid density by factors
    /// in [0, 1]).
    pub(crate) fn from_validated(grid: CostGrid, density: Vec<f64>) -> Self {
        debug_assert_eq!(density.len(), grid.n_bins());
        Self { grid, density }
    }

    pub fn grid(&self) -> &CostGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Total remaining quantity in EJ: the integral of the density over
    /// the whole grid.
    pub fn total_quantity(&self) -> f64 {
        self.partial_integral(self.grid.n_bins(), self.grid.last_edge())
    }

    /// Quantity available below cost `c` (EJ): the integral of the density
    /// from the grid origin to `c`, linear within a partially covered bin.
    pub fn cumulative_below(&self, c: f64) -> f64 {
        if c <= self.grid.first_edge() {
            return 0.0;
        }
        if c >= self.grid.last_edge() {
            return self.total_quantity();
        }
        // Locate the bin containing c, integrate whole bins before it plus
        // the covered part of it. Summation order matches total_quantity so
        // that cumulative_below(last_edge) == total_quantity exactly.
        let mut bin = self.grid.n_bins() - 1;
        for i in 0..self.grid.n_bins() {
            if c < self.grid.edges[i + 1] {
                bin = i;
                break;
            }
        }
        self.partial_integral(bin, c)
    }

    /// Integral of the first `whole_bins` bins plus the stretch from
    /// `edges[whole_bins]` to `upto` (callers guarantee `upto` lies in bin
    /// `whole_bins`, or pass `whole_bins == n_bins`).
    fn partial_integral(&self, whole_bins: usize, upto: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..whole_bins {
            acc += self.density[i] * self.grid.width(i);
        }
        if whole_bins < self.grid.n_bins() {
            acc += self.density[whole_bins] * (upto - self.grid.edges[whole_bins]);
        }
        acc
    }

    /// Marginal cost at cumulative quantity `q`: the inverse of
    /// [`cumulative_below`](Self::cumulative_below), linear within a bin.
    ///
    /// Within a zero-density stretch the cumulative curve is flat and the
    /// inverse is set-valued; the lowest cost of the stretch is returned.
    pub fn marginal_cost_at(&self, q: f64) -> Result<f64, DistributionError> {
        let total = self.total_quantity();
        if !(0.0..=total).contains(&q) {
            return Err(DistributionError::QuantityOutOfRange { quantity: q, total });
        }
        let mut rem = q;
        for i in 0..self.grid.n_bins() {
            let mass = self.density[i] * self.grid.width(i);
            if rem > mass {
                rem -= mass;
            } else if self.density[i] > 0.0 {
                return Ok(self.grid.edges[i] + rem / self.density[i]);
            } else if rem <= 0.0 {
                return Ok(self.grid.edges[i]);
            }
        }
        Ok(self.grid.last_edge())
    }

    /// Static cost-quantity curve of this distribution.
    pub fn supply_curve(&self) -> CostSupplyCurve {
        let mut quantities = Vec::with_capacity(self.grid.edges.len());
        let mut acc = 0.0;
        quantities.push(acc);
        for i in 0..self.grid.n_bins() {
            acc += self.density[i] * self.grid.width(i);
            quantities.push(acc);
        }
        CostSupplyCurve {
            costs: self.grid.edges.clone(),
            quantities,
        }
    }
}

/// Cumulative quantity available below each grid edge: `N(C)` and its
/// inverse `C(N)`, the cost-quantity curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSupplyCurve {
    costs: Vec<f64>,
    quantities: Vec<f64>,
}

impl CostSupplyCurve {
    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Non-decreasing cumulative quantities, starting at 0.
    pub fn quantities(&self) -> &[f64] {
        &self.quantities
    }

    pub fn total(&self) -> f64 {
        *self.quantities.last().unwrap()
    }

    /// `N(C)`: quantity available below cost `c`, clamped to the curve ends.
    pub fn quantity_below(&self, c: f64) -> f64 {
        if c <= self.costs[0] {
            return 0.0;
        }
        if c >= *self.costs.last().unwrap() {
            return self.total();
        }
        for i in 0..self.costs.len() - 1 {
            if c < self.costs[i + 1] {
                let frac = (c - self.costs[i]) / (self.costs[i + 1] - self.costs[i]);
                return self.quantities[i] + frac * (self.quantities[i + 1] - self.quantities[i]);
            }
        }
        self.total()
    }

    /// `C(N)`: marginal cost after `q` units have been exploited.
    pub fn cost_at(&self, q: f64) -> Result<f64, DistributionError> {
        let total = self.total();
        if !(0.0..=total).contains(&q) {
            return Err(DistributionError::QuantityOutOfRange { quantity: q, total });
        }
        for i in 0..self.quantities.len() - 1 {
            let lo = self.quantities[i];
            let hi = self.quantities[i + 1];
            if q <= hi {
                if hi > lo {
                    let frac = (q - lo) / (hi - lo);
                    return Ok(self.costs[i] + frac * (self.costs[i + 1] - self.costs[i]));
                }
                return Ok(self.costs[i]);
            }
        }
        Ok(*self.costs.last().unwrap())
    }
}

/// Bounding pair of distributions on a shared grid, used to sample the
/// resource-assessment uncertainty range.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainEndowment {
    low: CostDistribution,
    high: CostDistribution,
}

impl UncertainEndowment {
    pub fn new(low: CostDistribution, high: CostDistribution) -> Result<Self, DistributionError> {
        if low.grid != high.grid {
            return Err(DistributionError::GridMismatch);
        }
        for i in 0..low.density.len() {
            if low.density[i] > high.density[i] {
                return Err(DistributionError::BoundsCross {
                    index: i,
                    low: low.density[i],
                    high: high.density[i],
                });
            }
        }
        Ok(Self { low, high })
    }

    /// Degenerate range with zero width (a single best estimate).
    pub fn exact(d: CostDistribution) -> Self {
        Self {
            low: d.clone(),
            high: d,
        }
    }

    pub fn low(&self) -> &CostDistribution {
        &self.low
    }

    pub fn high(&self) -> &CostDistribution {
        &self.high
    }

    /// Per-bin linear interpolation between the low (`x = 0`) and high
    /// (`x = 1`) estimates.
    pub fn sample(&self, x: f64) -> Result<CostDistribution, DistributionError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(DistributionError::FractionOutOfRange(x));
        }
        let density = self
            .low
            .density
            .iter()
            .zip(&self.high.density)
            .map(|(&lo, &hi)| lo + x * (hi - lo))
            .collect();
        Ok(CostDistribution::from_validated(
            self.low.grid.clone(),
            density,
        ))
    }
}

/// Reads an endowment range from CSV.
///
/// Schema: header `cost_low,cost_high,density_low,density_high`, one row
/// per bin, bins contiguous (row i's `cost_high` equals row i+1's
/// `cost_low`). A single-estimate file repeats the density in both density
/// columns.
pub fn read_endowment_csv(path: &Path) -> Result<UncertainEndowment, io::CsvError> {
    let table = Table::read(path)?;
    table.expect_headers(&["cost_low", "cost_high", "density_low", "density_high"])?;
    if table.rows.is_empty() {
        return Err(io::CsvError::Schema {
            path: path.display().to_string(),
            row: 1,
            message: "no bins: at least one data row is required".into(),
        });
    }
    let mut edges = Vec::with_capacity(table.rows.len() + 1);
    let mut low = Vec::with_capacity(table.rows.len());
    let mut high = Vec::with_capacity(table.rows.len());
    for (r, row) in table.rows.iter().enumerate() {
        let row_no = r + 2; // 1-based, after the header line
        let c_lo = parse_f64(path, row_no, "cost_low", &row[0])?;
        let c_hi = parse_f64(path, row_no, "cost_high", &row[1])?;
        let d_lo = parse_f64(path, row_no, "density_low", &row[2])?;
        let d_hi = parse_f64(path, row_no, "density_high", &row[3])?;
        if let Some(&prev_hi) = edges.last() {
            if c_lo != prev_hi {
                return Err(io::CsvError::Schema {
                    path: path.display().to_string(),
                    row: row_no,
                    message: format!(
                        "bins not contiguous: cost_low {c_lo} != previous cost_high {prev_hi}"
                    ),
                });
            }
        } else {
            edges.push(c_lo);
        }
        edges.push(c_hi);
        low.push(d_lo);
        high.push(d_hi);
    }
    let schema_err = |e: DistributionError| io::CsvError::Schema {
        path: path.display().to_string(),
        row: 1,
        message: e.to_string(),
    };
    let grid = CostGrid::new(edges).map_err(schema_err)?;
    let low = CostDistribution::new(grid.clone(), low).map_err(schema_err)?;
    let high = CostDistribution::new(grid, high).map_err(schema_err)?;
    UncertainEndowment::new(low, high).map_err(schema_err)
}
