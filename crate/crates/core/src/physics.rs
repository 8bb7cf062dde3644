//! Temperature-density relation of fresh water, density-depth monotonicity and
//! the physical inconsistency metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uq::McSampleSet;

/// Temperature (°C) at which the density equation reaches 1000 kg/m³ exactly.
pub const TEMPERATURE_OF_MAX_DENSITY_C: f64 = 3.9863;
/// Pole of the density equation; temperatures must stay above it.
pub const DENSITY_POLE_C: f64 = -68.12963;

const A: f64 = 288.9414;
const B: f64 = 508929.2;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("temperature {0} °C is outside the domain of the density equation")]
    Domain(f64),
    #[error("a density profile needs at least 2 depths, got {0}")]
    TooFewDepths(usize),
    #[error("depth indices must be strictly increasing")]
    DepthOrder,
    #[error("profile has {depths} depth indices but {densities} densities")]
    Ragged { depths: usize, densities: usize },
    #[error("tolerance must be >= 0, got {0}")]
    NegativeTolerance(f64),
    #[error("no samples to evaluate")]
    Empty,
}

/// Density in kg/m³ without the domain check. Callers guarantee `y > DENSITY_POLE_C`.
#[inline]
pub fn density_unchecked(y: f64) -> f64 {
    let d = y - TEMPERATURE_OF_MAX_DENSITY_C;
    1000.0 * (1.0 - (y + A) * d * d / (B * (y - DENSITY_POLE_C)))
}

/// Water density (kg/m³) for a temperature in °C.
pub fn density_from_temperature(y: f64) -> Result<f64, PhysicsError> {
    if !y.is_finite() || y <= DENSITY_POLE_C {
        return Err(PhysicsError::Domain(y));
    }
    Ok(density_unchecked(y))
}

/// `dZ/dY` of [`density_unchecked`].
pub fn density_derivative(y: f64) -> f64 {
    let d = y - TEMPERATURE_OF_MAX_DENSITY_C;
    let num = (y + A) * d * d;
    let num_prime = d * d + 2.0 * (y + A) * d;
    let den = B * (y - DENSITY_POLE_C);
    -1000.0 * (num_prime * den - num * B) / (den * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    density_tol: f64,
}

impl ToleranceSpec {
    pub fn new(density_tol: f64) -> Result<Self, PhysicsError> {
        if density_tol.is_nan() || density_tol < 0.0 {
            return Err(PhysicsError::NegativeTolerance(density_tol));
        }
        Ok(Self { density_tol })
    }

    pub fn kg_per_m3(&self) -> f64 {
        self.density_tol
    }
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { density_tol: 1e-5 }
    }
}

/// Densities ordered from the surface down.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    depth_indices: Vec<usize>,
    densities: Vec<f64>,
}

impl DensityProfile {
    pub fn new(depth_indices: Vec<usize>, densities: Vec<f64>) -> Result<Self, PhysicsError> {
        if depth_indices.len() != densities.len() {
            return Err(PhysicsError::Ragged {
                depths: depth_indices.len(),
                densities: densities.len(),
            });
        }
        if depth_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PhysicsError::DepthOrder);
        }
        Ok(Self {
            depth_indices,
            densities,
        })
    }

    /// Profile over consecutive depth indices `0..n`.
    pub fn from_densities(densities: Vec<f64>) -> Self {
        Self {
            depth_indices: (0..densities.len()).collect(),
            densities,
        }
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn depth_indices(&self) -> &[usize] {
        &self.depth_indices
    }
}

/// `(violations, pairs)` for one profile: a consecutive pair violates when
/// the deeper density is lower than the shallower one by more than `tol`.
pub fn monotonicity_violation_count(
    profile: &DensityProfile,
    tol: ToleranceSpec,
) -> Result<(usize, usize), PhysicsError> {
    count_violations(profile.densities(), tol)
}

fn count_violations(densities: &[f64], tol: ToleranceSpec) -> Result<(usize, usize), PhysicsError> {
    if densities.len() < 2 {
        return Err(PhysicsError::TooFewDepths(densities.len()));
    }
    let violations = densities
        .windows(2)
        .filter(|w| w[1] < w[0] - tol.density_tol)
        .count();
    Ok((violations, densities.len() - 1))
}

/// Pooled violation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencyCount {
    pub violations: usize,
    pub pairs: usize,
}

impl InconsistencyCount {
    pub fn fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.violations as f64 / self.pairs as f64
        }
    }

    pub fn merge(&mut self, other: InconsistencyCount) {
        self.violations += other.violations;
        self.pairs += other.pairs;
    }
}

/// Pooled counts over an arbitrary set of density profiles (kg/m³).
pub fn inconsistency_of_profiles<'a>(
    profiles: impl IntoIterator<Item = &'a [f64]>,
    tol: ToleranceSpec,
) -> Result<InconsistencyCount, PhysicsError> {
    let mut total = InconsistencyCount::default();
    let mut any = false;
    for p in profiles {
        let (violations, pairs) = count_violations(p, tol)?;
        total.merge(InconsistencyCount { violations, pairs });
        any = true;
    }
    if !any {
        return Err(PhysicsError::Empty);
    }
    Ok(total)
}

/// Per-date and pooled inconsistency of MC samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InconsistencyBreakdown {
    pub pooled: InconsistencyCount,
    pub per_date: Vec<InconsistencyCount>,
}

/// Fraction of consecutive-depth pairs whose density decreases by more than
/// the tolerance, pooled over every sample row, date and pair. The density
/// rows of each set are used; for temperature-only models those rows hold
/// the temperatures mapped through the density equation.
pub fn physical_inconsistency(
    samples: &[McSampleSet],
    tol: ToleranceSpec,
) -> Result<InconsistencyBreakdown, PhysicsError> {
    if samples.is_empty() {
        return Err(PhysicsError::Empty);
    }
    let mut pooled = InconsistencyCount::default();
    let mut per_date = Vec::with_capacity(samples.len());
    for set in samples {
        let c = inconsistency_of_profiles(set.density_rows(), tol)?;
        pooled.merge(c);
        per_date.push(c);
    }
    Ok(InconsistencyBreakdown { pooled, per_date })
}
