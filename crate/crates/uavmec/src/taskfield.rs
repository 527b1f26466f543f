//! Gaussian-process estimation of the task field from per-MSA queue
//! observations, plus discretized fields and the NMSE comparison metric.
//!
//! Hyperparameters are chosen by a deterministic log-marginal-likelihood grid
//! search: the length scale over fixed fractions of the region diagonal, the
//! variance over fixed multiples of the sample variance, the mean fixed to
//! the sample mean.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{Grid, Region};
use crate::Vec2;

/// Length-scale grid, as fractions of the region diagonal.
const LENGTH_SCALE_FRACTIONS: [f64; 6] = [0.01, 0.02, 0.05, 0.10, 0.20, 0.40];
/// Variance grid, as multiples of the sample variance.
const VARIANCE_MULTIPLES: [f64; 3] = [0.25, 1.0, 4.0];
/// Diagonal jitter, relative to the kernel variance.
pub const JITTER_REL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TaskFieldError {
    #[error("need at least 2 observations with 2 distinct positions")]
    TooFewObservations,
    #[error("all observation positions are identical")]
    DegeneratePositions,
    #[error("non-finite observation target")]
    NonFiniteTarget,
    #[error("kernel matrix factorization failed for every hyperparameter candidate")]
    FactorizationFailed,
    #[error("field grids do not match")]
    GridMismatch,
    #[error("true field is constant; NMSE denominator is zero")]
    ConstantField,
    #[error("MSA {0} visited no cells")]
    EmptyVisits(usize),
}

/// One queue reading: an MSA position on the sensing plane and the task bits
/// it accumulated over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Vec2,
    pub tasks: f64,
}

/// Discretized scalar field over the sensing plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    /// Row-major per-cell values, bits (or bits/m^2 depending on use).
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, TaskFieldError> {
        if values.len() != grid.num_cells() {
            return Err(TaskFieldError::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.num_cells();
        Self { grid, values: vec![value; n] }
    }

    /// Sum of per-cell values times cell area.
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

/// Squared exponential kernel `phi^2 * exp(-||x - y||^2 / L^2)`.
pub fn kernel(x: Vec2, y: Vec2, variance: f64, length_scale: f64) -> f64 {
    variance * (-(x - y).norm_squared() / (length_scale * length_scale)).exp()
}

/// Fitted GP posterior over the task field.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub mean: f64,
    pub variance: f64,
    pub length_scale: f64,
    pub train_x: Vec<Vec2>,
    pub train_y: Vec<f64>,
    /// Precomputed (K + jitter I)^-1 (y - mean).
    alpha: DVector<f64>,
}

fn kernel_matrix(points: &[Vec2], variance: f64, length_scale: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut k = kernel(points[i], points[j], variance, length_scale);
        if i == j {
            k += JITTER_REL * variance;
        }
        k
    })
}

/// Log marginal likelihood of mean-centered targets under the given
/// hyperparameters, or None if the factorization fails.
fn log_marginal_likelihood(
    points: &[Vec2],
    centered: &DVector<f64>,
    variance: f64,
    length_scale: f64,
) -> Option<f64> {
    let k = kernel_matrix(points, variance, length_scale);
    let chol = Cholesky::new(k)?;
    let alpha = chol.solve(centered);
    let n = points.len() as f64;
    let log_det_half: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    Some(-0.5 * centered.dot(&alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Fit a GP to the observations: mean = sample mean; (variance, length scale)
/// maximize the log marginal likelihood over the fixed candidate grid.
pub fn fit_gp(obs: &[Observation], region: &Region) -> Result<GpModel, TaskFieldError> {
    if obs.len() < 2 {
        return Err(TaskFieldError::TooFewObservations);
    }
    if obs.iter().any(|o| !o.tasks.is_finite()) {
        return Err(TaskFieldError::NonFiniteTarget);
    }
    let first = obs[0].position;
    if obs.iter().all(|o| (o.position - first).norm() == 0.0) {
        return Err(TaskFieldError::DegeneratePositions);
    }

    let points: Vec<Vec2> = obs.iter().map(|o| o.position).collect();
    let targets: Vec<f64> = obs.iter().map(|o| o.tasks).collect();
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sample_var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    // Degenerate (constant) targets still need a positive kernel variance.
    let var_base = if sample_var > 0.0 { sample_var } else { 1.0 };
    let centered = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - mean));
    let diagonal = region.diagonal();

    let mut best: Option<(f64, f64, f64)> = None; // (lml, variance, length_scale)
    for &vm in &VARIANCE_MULTIPLES {
        let variance = vm * var_base;
        for &lf in &LENGTH_SCALE_FRACTIONS {
            let length_scale = lf * diagonal;
            if let Some(lml) = log_marginal_likelihood(&points, &centered, variance, length_scale) {
                if best.map_or(true, |(b, _, _)| lml > b) {
                    best = Some((lml, variance, length_scale));
                }
            }
        }
    }
    let (_, variance, length_scale) = best.ok_or(TaskFieldError::FactorizationFailed)?;

    let factor = Cholesky::new(kernel_matrix(&points, variance, length_scale))
        .ok_or(TaskFieldError::FactorizationFailed)?;
    let alpha = factor.solve(&centered);
    Ok(GpModel {
        mean,
        variance,
        length_scale,
        train_x: points,
        train_y: targets,
        alpha,
    })
}

/// GP posterior mean at `x`, clamped below at 0 (task mass is non-negative).
pub fn predict(model: &GpModel, x: Vec2) -> f64 {
    let k_star: f64 = model
        .train_x
        .iter()
        .zip(model.alpha.iter())
        .map(|(xi, a)| kernel(x, *xi, model.variance, model.length_scale) * a)
        .sum();
    (model.mean + k_star).max(0.0)
}

/// Evaluate the posterior mean at every cell center.
pub fn field_from_model(model: &GpModel, grid: &Grid) -> GridField {
    let values = grid.centers().map(|c| predict(model, c)).collect();
    GridField { grid: grid.clone(), values }
}

/// Discretized true task field: each MSA's window tasks split equally over
/// the distinct cells it visited. Total mass (sum of cell values) is the sum
/// of the task inputs.
pub fn field_from_trajectories(
    visits: &[Vec<usize>],
    tasks: &[f64],
    grid: &Grid,
) -> Result<GridField, TaskFieldError> {
    assert_eq!(visits.len(), tasks.len());
    let mut values = vec![0.0; grid.num_cells()];
    for (n, (cells, &total)) in visits.iter().zip(tasks).enumerate() {
        let unique: BTreeSet<usize> = cells.iter().copied().collect();
        if unique.is_empty() {
            return Err(TaskFieldError::EmptyVisits(n));
        }
        let share = total / unique.len() as f64;
        for c in unique {
            values[c] += share;
        }
    }
    Ok(GridField { grid: grid.clone(), values })
}

/// Normalized mean-square error: Frobenius norm of (estimate - truth) over
/// the range of the truth.
pub fn nmse(estimate: &GridField, truth: &GridField) -> Result<f64, TaskFieldError> {
    if estimate.grid != truth.grid {
        return Err(TaskFieldError::GridMismatch);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &truth.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return Err(TaskFieldError::ConstantField);
    }
    let frob = estimate
        .values
        .iter()
        .zip(&truth.values)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        .sqrt();
    Ok(frob / (hi - lo))
}
