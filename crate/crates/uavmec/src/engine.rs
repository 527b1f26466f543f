//! Tumbling-window simulation protocol: task-field estimation, distributed
//! repositioning, MCA motion, and continuous offloading/processing under
//! per-agent capacity limits.
//!
//! Each run is a deterministic state machine driven by a seeded RNG. Windows
//! are `delta` seconds of `dt` steps; in the first window the MCAs hover, and
//! from window 2 onward the adaptive approaches fit a GP to the previous
//! window's queue observations, optimize positions over the estimated field,
//! and fly to the result while processing continues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::ChannelParams;
use crate::geometry::{
    adjacency_graph, compute_partition, project_to_region, Grid, Region, VoronoiPartition,
};
use crate::optimize::{
    build_weights, capacity_balance_solve, default_xi, rate_max_solve, OptimizeError,
    StepSchedule,
};
use crate::taskfield::{
    field_from_model, field_from_trajectories, fit_gp, nmse, GridField, Observation,
    TaskFieldError,
};
use crate::workload::{generate_tasks, init_msa, step_msa, MobilityParams, MsaState, PoiScenario};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("task field estimation failed: {0}")]
    TaskField(#[from] TaskFieldError),
}

/// The three comparison approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Approach {
    /// Fixed MCA positions; each MSA offloads to its nearest MCA.
    Baseline,
    /// Estimate the field and run the transmission-rate maximization only.
    RateMax,
    /// Rate maximization followed by capacity balancing.
    Full,
}

impl Approach {
    pub fn name(&self) -> &'static str {
        match self {
            Approach::Baseline => "baseline",
            Approach::RateMax => "ratemax",
            Approach::Full => "full",
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Approach::Baseline),
            "ratemax" | "rate-max" | "rate_max" => Ok(Approach::RateMax),
            "full" => Ok(Approach::Full),
            other => Err(format!("unknown approach '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlgorithmParams {
    /// Rate-maximization iterations.
    pub t1: usize,
    /// Rate-maximization step size.
    pub eta: f64,
    /// Capacity-balancing iterations.
    pub t2: usize,
    /// Capacity-balancing step size.
    pub alpha: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self { t1: 100, eta: 1e-4, t2: 200, alpha: 1e-2 }
    }
}

/// Full simulation configuration, all units linear.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub region: Region,
    pub grid_cell: f64,
    /// Tumbling window length, s.
    pub delta: f64,
    /// Time step, s.
    pub dt: f64,
    /// Total run length, s.
    pub horizon: f64,
    pub num_msas: usize,
    pub channel: ChannelParams,
    pub mobility: MobilityParams,
    pub scenario: PoiScenario,
    /// Per-MCA processing capacities, bits/s; length sets M.
    pub capacities: Vec<f64>,
    pub mca_speed: f64,
    pub approach: Approach,
    pub algorithm: AlgorithmParams,
    pub seed: u64,
    /// When false, MCAs in transit do not process (hover-only processing).
    pub process_while_moving: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.dt <= 0.0 {
            return err(format!("dt must be positive, got {}", self.dt));
        }
        if self.delta < self.dt || self.horizon < self.delta {
            return err(format!(
                "need dt <= delta <= horizon, got dt={} delta={} horizon={}",
                self.dt, self.delta, self.horizon
            ));
        }
        let steps = self.delta / self.dt;
        if (steps - steps.round()).abs() > 1e-9 {
            return err(format!("delta {} must be a multiple of dt {}", self.delta, self.dt));
        }
        let windows = self.horizon / self.delta;
        if (windows - windows.round()).abs() > 1e-9 {
            return err(format!(
                "horizon {} must be a multiple of delta {}",
                self.horizon, self.delta
            ));
        }
        if self.num_msas == 0 {
            return err("num_msas must be at least 1".into());
        }
        if self.capacities.is_empty() {
            return err("capacities must list at least one MCA".into());
        }
        if self.capacities.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return err(format!("capacities must be finite and non-negative: {:?}", self.capacities));
        }
        if self.mca_speed <= 0.0 {
            return err(format!("mca_speed must be positive, got {}", self.mca_speed));
        }
        if self.grid_cell <= 0.0 {
            return err(format!("grid_cell must be positive, got {}", self.grid_cell));
        }
        if self.scenario.exponent <= 0.0 || self.scenario.total_rate <= 0.0 {
            return err("scenario exponent and total_rate must be positive".into());
        }
        if let crate::workload::PoiKind::Fixed { points } = &self.scenario.kind {
            if points.is_empty() {
                return err("fixed POI scenario needs at least one point".into());
            }
        }
        Ok(())
    }

    pub fn num_mcas(&self) -> usize {
        self.capacities.len()
    }

    pub fn steps_per_window(&self) -> usize {
        (self.delta / self.dt).round() as usize
    }

    pub fn num_windows(&self) -> usize {
        (self.horizon / self.delta).round() as usize
    }
}

/// Mobile compute agent.
#[derive(Debug, Clone, PartialEq)]
pub struct McaState {
    pub position: Vec2,
    /// Processing capacity, bits/s.
    pub capacity: f64,
    pub target: Vec2,
    pub speed: f64,
    /// Offload rate committed this step, bits/s.
    pub committed_rate: f64,
}

/// Row of the per-step metrics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// Bits processed by each MCA this step.
    pub processed: Vec<f64>,
    /// Total bits queued across all MSAs after this step.
    pub total_queued: f64,
}

/// One optimizer iteration, kept for the run's diagnostic output.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRecord {
    pub window: usize,
    /// "ratemax" or "balance".
    pub algorithm: &'static str,
    pub iteration: usize,
    /// Decomposed rate-max objective (rate-max only).
    pub objective: Option<f64>,
    /// Max pairwise estimate distance, m (rate-max only).
    pub disagreement: Option<f64>,
    /// Normalized workload imbalance (balance only).
    pub imbalance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub window: usize,
    /// Bits processed during the window.
    pub processed: f64,
    /// NMSE of the estimated field against the window's discretized true
    /// field; present from window 2 onward for adaptive approaches.
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub steps: Vec<StepRecord>,
    pub windows: Vec<WindowRecord>,
    /// Total bits processed over the whole run.
    pub cold_total: f64,
    /// Total excluding the first (hover-only) window.
    pub warm_total: f64,
    pub total_generated: f64,
    /// Worst relative violation of generated = processed + queued.
    pub max_conservation_error: f64,
    /// Steps on which any MCA exceeded its capacity (must stay 0).
    pub capacity_violations: usize,
    /// Per-iteration optimizer diagnostics across all windows.
    pub optimizer: Vec<OptimizerRecord>,
}

/// Per-window world snapshot for external plotting and inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub window: usize,
    pub estimated: Option<GridField>,
    pub truth: GridField,
    pub mca_positions: Vec<Vec2>,
    pub owner: Vec<usize>,
}

/// Initial MCA lattice: rows x cols of cell centers covering the region,
/// near-square, row-major. Six agents give two rows of three.
pub fn initial_layout(m: usize, region: &Region) -> Vec<Vec2> {
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    (0..m)
        .map(|i| {
            let col = i % cols;
            let row = i / cols;
            Vec2::new(
                region.x_min + (col as f64 + 0.5) * region.width() / cols as f64,
                region.y_min + (row as f64 + 0.5) * region.height() / rows as f64,
            )
        })
        .collect()
}

/// Total field mass for which the balance step `alpha * d` moves an agent
/// about 1% of the region diagonal at unit imbalance. The estimated field is
/// rescaled to this mass before optimization so the Table-I step sizes behave
/// at any region scale.
pub fn balance_mass_target(region: &Region, capacities: &[f64], alpha: f64) -> f64 {
    let area = region.width() * region.height();
    let mean_extent = 0.5 * (region.width() + region.height());
    let mean_cap = capacities.iter().sum::<f64>() / capacities.len() as f64;
    let target_step = 0.01 * region.diagonal();
    (target_step * capacities.len() as f64 * mean_cap * area / (alpha * mean_extent)).sqrt()
}

/// Round-robin rate assignment: MSAs are visited in ascending index; each is
/// granted the minimum of its link rate, the owner MCA's remaining capacity,
/// and its queue drain rate. Queues are drained in place.
pub fn assign_rates(
    assignment: &[usize],
    msas: &mut [MsaState],
    mcas: &mut [McaState],
    channel: &ChannelParams,
    altitude_gap: f64,
    dt: f64,
) -> Vec<f64> {
    for mca in mcas.iter_mut() {
        mca.committed_rate = 0.0;
    }
    let mut remaining: Vec<f64> = mcas.iter().map(|m| m.capacity).collect();
    let mut rates = vec![0.0; msas.len()];
    for (n, msa) in msas.iter_mut().enumerate() {
        let m = assignment[n];
        let link = channel.rate_planar(mcas[m].position, msa.position, altitude_gap);
        let tau = link.min(remaining[m]).min(msa.queue / dt);
        debug_assert!(tau >= 0.0);
        remaining[m] -= tau;
        msa.queue -= tau * dt;
        mcas[m].committed_rate += tau;
        rates[n] = tau;
    }
    rates
}

/// Live simulation state.
pub struct World {
    pub config: SimConfig,
    pub grid: Grid,
    pub msas: Vec<MsaState>,
    msa_rngs: Vec<ChaCha8Rng>,
    pub mcas: Vec<McaState>,
    pub partition: VoronoiPartition,
    pub metrics: Metrics,
    pub snapshots: Vec<Snapshot>,
    time: f64,
    step_index: usize,
    /// Bits generated per MSA in the current window.
    window_generated: Vec<f64>,
    /// Cells visited per MSA in the current window.
    window_visits: Vec<Vec<usize>>,
    /// Previous window's per-MSA generated bits (GP observations).
    prev_generated: Vec<f64>,
    window_processed: f64,
    cumulative_generated: f64,
    cumulative_processed: f64,
    /// Estimated field fitted at the current window's start.
    estimated: Option<GridField>,
}

impl World {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let grid = Grid::new(config.region, config.grid_cell)?;
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let mut msas = Vec::with_capacity(config.num_msas);
        let mut msa_rngs = Vec::with_capacity(config.num_msas);
        for _ in 0..config.num_msas {
            let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
            msas.push(init_msa(&mut rng, &config.region, &config.mobility));
            msa_rngs.push(rng);
        }
        let positions = initial_layout(config.num_mcas(), &config.region);
        let mcas = positions
            .iter()
            .zip(&config.capacities)
            .map(|(p, c)| McaState {
                position: *p,
                capacity: *c,
                target: *p,
                speed: config.mca_speed,
                committed_rate: 0.0,
            })
            .collect::<Vec<_>>();
        let partition = compute_partition(&positions, &grid, &config.channel)?;
        let n = config.num_msas;
        Ok(Self {
            config,
            grid,
            msas,
            msa_rngs,
            mcas,
            partition,
            metrics: Metrics::default(),
            snapshots: Vec::new(),
            time: 0.0,
            step_index: 0,
            window_generated: vec![0.0; n],
            window_visits: vec![Vec::new(); n],
            prev_generated: vec![0.0; n],
            window_processed: 0.0,
            cumulative_generated: 0.0,
            cumulative_processed: 0.0,
            estimated: None,
        })
    }

    fn msa_assignment(&self) -> Vec<usize> {
        match self.config.approach {
            // nearest MCA by horizontal distance
            Approach::Baseline => self
                .msas
                .iter()
                .map(|msa| {
                    self.mcas
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| {
                            (a.position - msa.position)
                                .norm()
                                .partial_cmp(&(b.position - msa.position).norm())
                                .unwrap()
                        })
                        .unwrap()
                        .0
                })
                .collect(),
            // Voronoi owner of the MSA's containing cell
            _ => self
                .msas
                .iter()
                .map(|msa| self.partition.owner[self.grid.cell_of(msa.position)])
                .collect(),
        }
    }

    /// One `dt` step: MSA motion, task generation, MCA motion, partition
    /// refresh, rate assignment, metrics.
    pub fn step(&mut self, mca_motion: bool) -> Result<(), SimError> {
        let dt = self.config.dt;
        let region = self.config.region;

        // 1. MSAs move
        for (n, msa) in self.msas.iter_mut().enumerate() {
            step_msa(msa, dt, &region, &mut self.msa_rngs[n], &self.config.mobility);
            self.window_visits[n].push(self.grid.cell_of(msa.position));
        }

        // 2. task generation
        let positions: Vec<Vec2> = self.msas.iter().map(|m| m.position).collect();
        let tasks = generate_tasks(&positions, &self.config.scenario, dt, self.time, &region);
        for (n, bits) in tasks.iter().enumerate() {
            self.msas[n].queue += bits;
            self.window_generated[n] += bits;
            self.cumulative_generated += bits;
        }

        // 3. MCAs advance toward targets
        if mca_motion {
            for mca in &mut self.mcas {
                let to_target = mca.target - mca.position;
                let dist = to_target.norm();
                let step = mca.speed * dt;
                if step >= dist {
                    mca.position = mca.target;
                } else {
                    mca.position += to_target * (step / dist);
                }
            }
        }

        // 4. partition from current MCA positions
        let mca_positions: Vec<Vec2> = self.mcas.iter().map(|m| m.position).collect();
        self.partition = compute_partition(&mca_positions, &self.grid, &self.config.channel)?;

        // 5. rate assignment
        let assignment = self.msa_assignment();
        let gap = region.altitude_gap();
        let in_transit: Vec<bool> = self
            .mcas
            .iter()
            .map(|m| (m.position - m.target).norm() > 0.0)
            .collect();
        if !self.config.process_while_moving {
            for (mca, transit) in self.mcas.iter_mut().zip(&in_transit) {
                if *transit {
                    mca.capacity = 0.0;
                }
            }
        }
        assign_rates(&assignment, &mut self.msas, &mut self.mcas, &self.config.channel, gap, dt);
        if !self.config.process_while_moving {
            for (mca, cap) in self.mcas.iter_mut().zip(&self.config.capacities) {
                mca.capacity = *cap;
            }
        }

        // 6. metrics
        let processed: Vec<f64> = self.mcas.iter().map(|m| m.committed_rate * dt).collect();
        let step_processed: f64 = processed.iter().sum();
        self.cumulative_processed += step_processed;
        self.window_processed += step_processed;
        for (mca, cap) in self.mcas.iter().zip(&self.config.capacities) {
            if mca.committed_rate > cap * (1.0 + 1e-12) {
                self.metrics.capacity_violations += 1;
            }
        }
        let total_queued: f64 = self.msas.iter().map(|m| m.queue).sum();
        let imbalance = (self.cumulative_generated - self.cumulative_processed - total_queued)
            .abs()
            / self.cumulative_generated.max(1.0);
        self.metrics.max_conservation_error = self.metrics.max_conservation_error.max(imbalance);
        self.metrics.steps.push(StepRecord {
            step: self.step_index,
            time: self.time + dt,
            processed,
            total_queued,
        });

        self.time += dt;
        self.step_index += 1;
        Ok(())
    }

    /// Fit the GP to last window's observations and run the optimizers to set
    /// new MCA targets. Returns false when the fit is degenerate (targets
    /// left unchanged).
    fn optimize_targets(&mut self, window: usize) -> Result<bool, SimError> {
        let obs: Vec<Observation> = self
            .msas
            .iter()
            .zip(&self.prev_generated)
            .map(|(msa, bits)| Observation { position: msa.position, tasks: *bits })
            .collect();
        let model = match fit_gp(&obs, &self.config.region) {
            Ok(m) => m,
            Err(TaskFieldError::DegeneratePositions | TaskFieldError::TooFewObservations) => {
                return Ok(false)
            }
            Err(e) => return Err(e.into()),
        };
        let estimated = field_from_model(&model, &self.grid);

        // rescale so Table-I step sizes behave at this region scale
        let mass = estimated.total_mass();
        let field = if mass > 0.0 {
            let target =
                balance_mass_target(&self.config.region, &self.config.capacities, self.config.algorithm.alpha);
            let s = target / mass;
            GridField::new(
                self.grid.clone(),
                estimated.values.iter().map(|v| v * s).collect(),
            )
            .expect("same grid")
        } else {
            estimated.clone()
        };
        self.estimated = Some(estimated);

        let graph = adjacency_graph(&self.partition);
        let weights = build_weights(&graph, default_xi(&graph))?;
        let current: Vec<Vec2> = self.mcas.iter().map(|m| m.position).collect();
        let (rate_positions, rate_diag) = rate_max_solve(
            &current,
            &field,
            &graph,
            &weights,
            StepSchedule::Constant(self.config.algorithm.eta),
            self.config.algorithm.t1,
            &self.config.region,
            &self.config.channel,
        )?;
        for it in &rate_diag.iterations {
            self.metrics.optimizer.push(OptimizerRecord {
                window,
                algorithm: "ratemax",
                iteration: it.iter,
                objective: Some(it.objective),
                disagreement: Some(it.disagreement),
                imbalance: None,
            });
        }
        let targets = if self.config.approach == Approach::Full {
            let (balanced, balance_diag) = capacity_balance_solve(
                &rate_positions,
                &field,
                &self.config.capacities,
                self.config.algorithm.alpha,
                self.config.algorithm.t2,
                &self.config.region,
                &self.config.channel,
            )?;
            for it in &balance_diag.iterations {
                self.metrics.optimizer.push(OptimizerRecord {
                    window,
                    algorithm: "balance",
                    iteration: it.iter,
                    objective: None,
                    disagreement: None,
                    imbalance: Some(it.imbalance),
                });
            }
            balanced
        } else {
            rate_positions
        };
        for (mca, t) in self.mcas.iter_mut().zip(targets) {
            mca.target = project_to_region(t, &self.config.region);
        }
        Ok(true)
    }

    /// Run one tumbling window of `delta` seconds.
    pub fn run_window(&mut self, window: usize) -> Result<(), SimError> {
        self.window_processed = 0.0;
        self.estimated = None;
        let steps = self.config.steps_per_window();
        let adaptive = self.config.approach != Approach::Baseline;

        let mut remaining = steps;
        if window >= 1 && adaptive {
            self.optimize_targets(window)?;
            // computation pause: one step with processing but no MCA motion
            self.step(false)?;
            remaining -= 1;
        }
        for _ in 0..remaining {
            self.step(true)?;
        }

        // window bookkeeping: discretized true field, NMSE, snapshot
        let truth = field_from_trajectories(&self.window_visits, &self.window_generated, &self.grid)?;
        let window_nmse = self
            .estimated
            .as_ref()
            .and_then(|e| nmse(e, &truth).ok());
        self.metrics.windows.push(WindowRecord {
            window,
            processed: self.window_processed,
            nmse: window_nmse,
        });
        self.snapshots.push(Snapshot {
            window,
            estimated: self.estimated.clone(),
            truth,
            mca_positions: self.mcas.iter().map(|m| m.position).collect(),
            owner: self.partition.owner.clone(),
        });

        self.prev_generated = std::mem::replace(&mut self.window_generated, vec![0.0; self.msas.len()]);
        for v in &mut self.window_visits {
            v.clear();
        }
        Ok(())
    }

    fn finish(&mut self) {
        self.metrics.cold_total = self.metrics.windows.iter().map(|w| w.processed).sum();
        self.metrics.warm_total = self.metrics.cold_total
            - self.metrics.windows.first().map_or(0.0, |w| w.processed);
        self.metrics.total_generated = self.cumulative_generated;
    }
}

/// Run a full simulation: `horizon / delta` windows, deterministic for a
/// fixed seed.
pub fn run(config: SimConfig) -> Result<(Metrics, Vec<Snapshot>), SimError> {
    let mut world = World::new(config)?;
    for window in 0..world.config.num_windows() {
        world.run_window(window)?;
    }
    world.finish();
    Ok((world.metrics, world.snapshots))
}

/// Estimation-accuracy experiment: run the MSAs alone for two windows, fit
/// the GP to the first window's observations, and return the NMSE of the
/// estimate against the second window's discretized true field.
pub fn nmse_experiment(
    region: Region,
    grid_cell: f64,
    num_msas: usize,
    scenario: &PoiScenario,
    mobility: &MobilityParams,
    delta: f64,
    dt: f64,
    seed: u64,
) -> Result<f64, SimError> {
    let grid = Grid::new(region, grid_cell)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut msas = Vec::with_capacity(num_msas);
    let mut rngs = Vec::with_capacity(num_msas);
    for _ in 0..num_msas {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        msas.push(init_msa(&mut rng, &region, mobility));
        rngs.push(rng);
    }
    let steps = (delta / dt).round() as usize;

    // window 1: accumulate observations
    let mut generated = vec![0.0; num_msas];
    let mut t = 0.0;
    for _ in 0..steps {
        for (n, msa) in msas.iter_mut().enumerate() {
            step_msa(msa, dt, &region, &mut rngs[n], mobility);
        }
        let positions: Vec<Vec2> = msas.iter().map(|m| m.position).collect();
        for (n, bits) in generate_tasks(&positions, scenario, dt, t, &region).iter().enumerate() {
            generated[n] += bits;
        }
        t += dt;
    }
    let obs: Vec<Observation> = msas
        .iter()
        .zip(&generated)
        .map(|(m, g)| Observation { position: m.position, tasks: *g })
        .collect();
    let model = fit_gp(&obs, &region)?;
    let estimate = field_from_model(&model, &grid);

    // window 2: discretized true field
    let mut visits: Vec<Vec<usize>> = vec![Vec::new(); num_msas];
    let mut generated2 = vec![0.0; num_msas];
    for _ in 0..steps {
        for (n, msa) in msas.iter_mut().enumerate() {
            step_msa(msa, dt, &region, &mut rngs[n], mobility);
            visits[n].push(grid.cell_of(msa.position));
        }
        let positions: Vec<Vec2> = msas.iter().map(|m| m.position).collect();
        for (n, bits) in generate_tasks(&positions, scenario, dt, t, &region).iter().enumerate() {
            generated2[n] += bits;
        }
        t += dt;
    }
    let truth = field_from_trajectories(&visits, &generated2, &grid)?;
    Ok(nmse(&estimate, &truth)?)
}
