//! The two distributed repositioning algorithms: consensus projected gradient
//! descent on the total offloading cost (transmission-rate maximization) and
//! capacity balancing, plus the consensus weight matrix and its spectral
//! conditions.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::geometry::{
    adjacency_graph, compute_partition, project_to_region, region_volume, CommGraph,
    GeometryError, Region, VoronoiPartition,
};
use crate::taskfield::GridField;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("consensus weight xi={xi} violates {condition}")]
    InvalidXi { xi: f64, condition: &'static str },
    #[error("weight matrix eigenvalue {0} outside (-1, 1]")]
    SpectralViolation(f64),
    #[error("non-finite gradient at iteration {0}")]
    NonFiniteGradient(usize),
    #[error("imbalance diverged at iteration {iter}: {imbalance} vs initial {initial}; step size too large")]
    Diverged { iter: usize, imbalance: f64, initial: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Symmetric consensus mixing matrix `W = I - xi (D - A)`.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    pub matrix: DMatrix<f64>,
    pub xi: f64,
}

impl WeightMatrix {
    pub fn entry(&self, m: usize, j: usize) -> f64 {
        self.matrix[(m, j)]
    }
}

/// Build and validate the consensus weight matrix for a communication graph.
/// Requires `0 < xi <= 1/delta`, strictly when the graph is bipartite; the
/// eigenvalues of the result are verified to lie in (-1, 1].
pub fn build_weights(graph: &CommGraph, xi: f64) -> Result<WeightMatrix, OptimizeError> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(OptimizeError::InvalidXi { xi, condition: "xi > 0" });
    }
    if graph.max_degree > 0 {
        let bound = 1.0 / graph.max_degree as f64;
        if graph.bipartite {
            if xi >= bound {
                return Err(OptimizeError::InvalidXi {
                    xi,
                    condition: "xi < 1/delta (bipartite graph)",
                });
            }
        } else if xi > bound {
            return Err(OptimizeError::InvalidXi { xi, condition: "xi <= 1/delta" });
        }
    }

    let n = graph.num_vertices;
    let mut w = DMatrix::identity(n, n);
    for &(a, b) in &graph.edges {
        w[(a, b)] = xi;
        w[(b, a)] = xi;
        w[(a, a)] -= xi;
        w[(b, b)] -= xi;
    }

    for m in 0..n {
        let row_sum: f64 = w.row(m).iter().sum();
        debug_assert!((row_sum - 1.0).abs() < 1e-12);
    }
    let eig = nalgebra::SymmetricEigen::new(w.clone());
    for &lambda in eig.eigenvalues.iter() {
        if !(lambda > -1.0 - 1e-9 && lambda <= 1.0 + 1e-9) {
            return Err(OptimizeError::SpectralViolation(lambda));
        }
    }
    Ok(WeightMatrix { matrix: w, xi })
}

/// Consensus weight for a graph per the Table-I rule `xi = 1/delta`, stepped
/// down to `1/(delta+1)` when the graph is bipartite (the strict-inequality
/// case) and defaulting to 1 for edgeless graphs.
pub fn default_xi(graph: &CommGraph) -> f64 {
    if graph.max_degree == 0 {
        1.0
    } else if graph.bipartite {
        1.0 / (graph.max_degree as f64 + 1.0)
    } else {
        1.0 / graph.max_degree as f64
    }
}

/// Quadrature of the per-agent offloading cost: integral of the field times
/// the latency from agent `m`'s position over `m`'s Voronoi cells, with the
/// partition computed from the full position vector.
pub fn agent_cost(
    m: usize,
    positions: &[Vec2],
    field: &GridField,
    channel: &ChannelParams,
) -> Result<f64, OptimizeError> {
    let partition = compute_partition(positions, &field.grid, channel)?;
    Ok(agent_cost_with_partition(m, positions[m], &partition, field, channel))
}

fn agent_cost_with_partition(
    m: usize,
    u_m: Vec2,
    partition: &VoronoiPartition,
    field: &GridField,
    channel: &ChannelParams,
) -> f64 {
    let grid = &partition.grid;
    let gap = grid.region.altitude_gap();
    let area = grid.cell_area();
    let mut cost = 0.0;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let i = grid.index(ix, iy);
            if partition.owner[i] != m || field.values[i] == 0.0 {
                continue;
            }
            cost += field.values[i] * channel.latency_planar(u_m, grid.center(ix, iy), gap) * area;
        }
    }
    cost
}

/// Total cost of a shared position vector: sum of all agent costs under the
/// single induced partition.
pub fn total_cost(
    positions: &[Vec2],
    field: &GridField,
    channel: &ChannelParams,
) -> Result<f64, OptimizeError> {
    let partition = compute_partition(positions, &field.grid, channel)?;
    Ok((0..positions.len())
        .map(|m| agent_cost_with_partition(m, positions[m], &partition, field, channel))
        .sum())
}

/// Gradient of agent `m`'s cost with respect to the full estimate vector.
/// Only the component with respect to `m`'s own position is nonzero: the
/// boundary-motion terms vanish because the latency cost is continuous across
/// Voronoi boundaries.
pub fn local_gradient(
    m: usize,
    positions: &[Vec2],
    field: &GridField,
    channel: &ChannelParams,
) -> Result<Vec<Vec2>, OptimizeError> {
    let partition = compute_partition(positions, &field.grid, channel)?;
    let grid = &field.grid;
    let gap = grid.region.altitude_gap();
    let area = grid.cell_area();
    let mut grad = vec![Vec2::zeros(); positions.len()];
    let mut g = Vec2::zeros();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let i = grid.index(ix, iy);
            if partition.owner[i] != m || field.values[i] == 0.0 {
                continue;
            }
            g += channel.latency_gradient(positions[m], grid.center(ix, iy), gap)
                * (field.values[i] * area);
        }
    }
    grad[m] = g;
    Ok(grad)
}

/// Gradient step size schedule across iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `eta_0 / (l + 1)`: summable-squares schedule.
    Diminishing(f64),
}

impl StepSchedule {
    pub fn at(&self, iter: usize) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Diminishing(eta0) => eta0 / (iter as f64 + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMaxIter {
    pub iter: usize,
    /// Decomposed objective: sum over agents of their cost at their own
    /// estimate vector.
    pub objective: f64,
    /// Max pairwise distance between stacked estimate vectors.
    pub disagreement: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RateMaxDiagnostics {
    pub iterations: Vec<RateMaxIter>,
}

fn stacked_disagreement(estimates: &[Vec<Vec2>]) -> f64 {
    let m = estimates.len();
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in (a + 1)..m {
            let d: f64 = estimates[a]
                .iter()
                .zip(&estimates[b])
                .map(|(p, q)| (p - q).norm_squared())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(d);
        }
    }
    worst
}

/// Distributed projected gradient consensus on the offloading cost. Each
/// agent keeps an estimate of every agent's position, takes a projected
/// gradient step on its own cost, and mixes estimates with its graph
/// neighbors using the weight matrix. Returns the average of the final
/// estimate vectors as the agreed positions.
pub fn rate_max_solve(
    initial_positions: &[Vec2],
    field: &GridField,
    graph: &CommGraph,
    weights: &WeightMatrix,
    schedule: StepSchedule,
    t1: usize,
    region: &Region,
    channel: &ChannelParams,
) -> Result<(Vec<Vec2>, RateMaxDiagnostics), OptimizeError> {
    let m_agents = initial_positions.len();
    assert_eq!(graph.num_vertices, m_agents);
    assert!(t1 >= 1);

    let mut estimates: Vec<Vec<Vec2>> = vec![initial_positions.to_vec(); m_agents];
    let mut diagnostics = RateMaxDiagnostics::default();

    for iter in 0..t1 {
        let eta = schedule.at(iter);
        // projected gradient step, per agent
        let mut z: Vec<Vec<Vec2>> = Vec::with_capacity(m_agents);
        for m in 0..m_agents {
            let grad = local_gradient(m, &estimates[m], field, channel)?;
            let mut stepped = Vec::with_capacity(m_agents);
            for k in 0..m_agents {
                let p = estimates[m][k] - grad[k] * eta;
                if !(p.x.is_finite() && p.y.is_finite()) {
                    return Err(OptimizeError::NonFiniteGradient(iter));
                }
                stepped.push(project_to_region(p, region));
            }
            z.push(stepped);
        }
        // consensus averaging over the full stacked estimate vector
        let mut next = vec![vec![Vec2::zeros(); m_agents]; m_agents];
        for m in 0..m_agents {
            for j in 0..m_agents {
                let w = weights.entry(m, j);
                if w == 0.0 {
                    continue;
                }
                for k in 0..m_agents {
                    next[m][k] += z[j][k] * w;
                }
            }
        }
        estimates = next;

        let objective: f64 = (0..m_agents)
            .map(|m| agent_cost(m, &estimates[m], field, channel))
            .sum::<Result<f64, _>>()?;
        diagnostics.iterations.push(RateMaxIter {
            iter,
            objective,
            disagreement: stacked_disagreement(&estimates),
        });
    }

    // agreed positions: average of the final estimate vectors
    let mut agreed = vec![Vec2::zeros(); m_agents];
    for est in &estimates {
        for (k, p) in est.iter().enumerate() {
            agreed[k] += p / m_agents as f64;
        }
    }
    let agreed = agreed
        .into_iter()
        .map(|p| project_to_region(p, region))
        .collect();
    Ok((agreed, diagnostics))
}

/// Capacity-balancing direction for agent `m`: each adjacent neighbor pushes
/// or pulls along the shared-boundary normal in proportion to the workload
/// imbalance and the boundary mass.
pub fn balance_direction(
    m: usize,
    partition: &VoronoiPartition,
    field: &GridField,
    capacities: &[f64],
) -> Result<Vec2, OptimizeError> {
    let graph = adjacency_graph(partition);
    let v_m = region_volume(partition, m, field)?;
    let mut d = Vec2::zeros();
    for j in graph.neighbors(m) {
        let v_j = region_volume(partition, j, field)?;
        let imbalance = v_m / capacities[m] - v_j / capacities[j];
        // n_mj times the boundary line integral, evaluated segment-wise: the
        // grid boundary is a staircase, so the normal rides inside the sum
        let mut weighted_normal = Vec2::zeros();
        for s in partition.boundary_segments(m, j) {
            let rho = field.values[partition.grid.cell_of(s.midpoint)];
            weighted_normal += s.normal * (rho * s.length);
        }
        d += weighted_normal * imbalance;
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceIter {
    pub iter: usize,
    /// `max_m |(V_m/c_m) * (sum c / sum V) - 1|`.
    pub imbalance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BalanceDiagnostics {
    pub iterations: Vec<BalanceIter>,
}

/// Normalized workload imbalance of a partition against capacities.
pub fn workload_imbalance(
    partition: &VoronoiPartition,
    field: &GridField,
    capacities: &[f64],
) -> Result<f64, OptimizeError> {
    let volumes: Vec<f64> = (0..capacities.len())
        .map(|m| region_volume(partition, m, field))
        .collect::<Result<_, _>>()?;
    let total_v: f64 = volumes.iter().sum();
    if total_v == 0.0 {
        return Ok(0.0);
    }
    let total_c: f64 = capacities.iter().sum();
    Ok(volumes
        .iter()
        .zip(capacities)
        .map(|(v, c)| (v / c * total_c / total_v - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Gradient flow that drives Voronoi workloads proportional to capacities.
/// The partition and neighbor set are recomputed every iteration.
pub fn capacity_balance_solve(
    initial_positions: &[Vec2],
    field: &GridField,
    capacities: &[f64],
    alpha: f64,
    t2: usize,
    region: &Region,
    channel: &ChannelParams,
) -> Result<(Vec<Vec2>, BalanceDiagnostics), OptimizeError> {
    assert_eq!(initial_positions.len(), capacities.len());
    assert!(capacities.iter().sum::<f64>() > 0.0);
    assert!(t2 >= 1);

    let mut positions = initial_positions.to_vec();
    let mut diagnostics = BalanceDiagnostics::default();
    let mut initial_imbalance = None;
    // fixed-step gradient flow can oscillate around the equilibrium, so the
    // returned iterate is the one with the lowest observed imbalance
    let mut best: Option<(f64, Vec<Vec2>)> = None;

    for iter in 0..=t2 {
        let partition = compute_partition(&positions, &field.grid, channel)?;
        let imbalance = workload_imbalance(&partition, field, capacities)?;
        let init = *initial_imbalance.get_or_insert(imbalance);
        // divergence guard; the lower bound keeps near-balanced starts from
        // tripping on quadrature noise
        if imbalance > 10.0 * init && imbalance > 0.5 {
            return Err(OptimizeError::Diverged { iter, imbalance, initial: init });
        }
        diagnostics.iterations.push(BalanceIter { iter, imbalance });
        if best.as_ref().map_or(true, |(b, _)| imbalance < *b) {
            best = Some((imbalance, positions.clone()));
        }
        if iter == t2 {
            break;
        }

        let directions: Vec<Vec2> = (0..positions.len())
            .map(|m| balance_direction(m, &partition, field, capacities))
            .collect::<Result<_, _>>()?;
        for (p, d) in positions.iter_mut().zip(&directions) {
            *p = project_to_region(*p - d * alpha, region);
        }
    }
    Ok((best.expect("at least one iterate").1, diagnostics))
}
