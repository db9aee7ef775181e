//! Slot-driven cluster simulation and batch runner.
//!
//! Within a slot, workloads whose lifetime ended are released first, then the
//! slot's arrivals are scheduled in FIFO order. Rejected workloads are dropped.
//! A workload accepted at slot `t` with duration `d` is released at the start
//! of slot `t + d`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fragmentation::cluster_severity;
use crate::mig_model::{ClusterState, InstanceId, ModelError, SLICES_PER_GPU};
use crate::schedulers::{Decision, Scheduler, SchedulerKind, SchedulerPolicy};
use crate::workload::{
    compute_horizon, generate_trace, ProfileDistribution, Trace, TraceConfig, WorkloadError, WorkloadRequest,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("request {workload_id} arrives at slot {arrival} but the simulation is at slot {current}")]
    OutOfOrder { workload_id: u64, arrival: u32, current: u32 },
    #[error("internal consistency violation: {0}")]
    Consistency(#[from] ModelError),
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Default demand grid: 5% to 100% in 5% steps (85% included).
pub fn default_snapshot_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 5.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cluster_size: usize,
    pub distribution: ProfileDistribution,
    pub scheduler: SchedulerKind,
    pub runs: usize,
    pub seed: u64,
    pub snapshot_grid: Vec<f64>,
    pub policy: SchedulerPolicy,
    pub arrivals_per_slot: usize,
}

impl SimConfig {
    pub fn new(cluster_size: usize, distribution: ProfileDistribution, scheduler: SchedulerKind) -> Self {
        SimConfig {
            cluster_size,
            distribution,
            scheduler,
            runs: 1,
            seed: 0,
            snapshot_grid: default_snapshot_grid(),
            policy: SchedulerPolicy::default(),
            arrivals_per_slot: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cluster_size == 0 {
            return Err(SimError::InvalidConfig("cluster_size must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(SimError::InvalidConfig("runs must be at least 1".into()));
        }
        if self.arrivals_per_slot == 0 {
            return Err(SimError::InvalidConfig("arrivals_per_slot must be at least 1".into()));
        }
        if let Some(g) = self.snapshot_grid.iter().find(|&&g| !(g > 0.0 && g <= 100.0)) {
            return Err(SimError::InvalidConfig(format!("snapshot grid value {g} outside (0, 100]")));
        }
        Ok(())
    }

    pub fn horizon(&self) -> Result<u32, SimError> {
        Ok(compute_horizon(self.cluster_size, &self.distribution, self.arrivals_per_slot)?)
    }

    fn sorted_grid(&self) -> Vec<f64> {
        let mut grid = self.snapshot_grid.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

/// Cluster observables at the end of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub slot: u32,
    /// Grid point this snapshot was taken for; `None` for the end-of-run snapshot.
    pub grid_pct: Option<f64>,
    pub demand_pct: f64,
    pub arrived: u64,
    pub accepted: u64,
    pub hosted: u64,
    pub acceptance_rate: f64,
    pub utilization_pct: f64,
    pub active_gpus_pct: f64,
    pub frag_severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheduler: SchedulerKind,
    pub distribution: String,
    pub cluster_size: usize,
    pub run_index: u64,
    pub seed: u64,
    pub horizon: u32,
    pub snapshots: Vec<MetricsSnapshot>,
    /// Mean of the cluster fragmentation severity over every slot end.
    pub mean_frag_severity: f64,
    pub arrived: u64,
    pub accepted: u64,
}

/// Live simulation state for one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    cluster: ClusterState,
    scheduler: Scheduler,
    /// termination slot -> (gpu, workload) released at the start of that slot
    terminations: BTreeMap<u32, Vec<(usize, InstanceId)>>,
    slot: u32,
    arrived: u64,
    accepted: u64,
    demand_slices: u64,
}

impl Simulation {
    pub fn new(cluster_size: usize, kind: SchedulerKind, policy: SchedulerPolicy) -> Self {
        Simulation {
            cluster: ClusterState::new(cluster_size),
            scheduler: Scheduler::new(kind, policy),
            terminations: BTreeMap::new(),
            slot: 0,
            arrived: 0,
            accepted: 0,
            demand_slices: 0,
        }
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn arrived(&self) -> u64 {
        self.arrived
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Moves the clock forward to `slot`, releasing every workload due by then.
    pub fn advance_to(&mut self, slot: u32) -> Result<(), SimError> {
        assert!(slot >= self.slot, "simulation clock cannot move backwards");
        self.slot = slot;
        while let Some(entry) = self.terminations.first_entry() {
            if *entry.key() > slot {
                break;
            }
            for (gpu_id, id) in entry.remove() {
                self.cluster.release(gpu_id, id)?;
            }
        }
        Ok(())
    }

    /// Schedules one request arriving in the current slot and commits an accepted placement.
    pub fn submit(&mut self, request: &WorkloadRequest) -> Result<Decision, SimError> {
        if request.arrival_slot != self.slot {
            return Err(SimError::OutOfOrder {
                workload_id: request.workload_id,
                arrival: request.arrival_slot,
                current: self.slot,
            });
        }
        self.arrived += 1;
        self.demand_slices += request.profile.mem_slices as u64;
        let decision = self.scheduler.decide(&self.cluster, request.profile);
        if let Some(placement) = decision.placement(request.profile) {
            let id = InstanceId(request.workload_id);
            self.cluster.allocate(placement, id)?;
            self.accepted += 1;
            let end = request.arrival_slot + request.duration_slots;
            self.terminations.entry(end).or_default().push((placement.gpu_id, id));
        }
        Ok(decision)
    }

    /// Release-then-schedule for a single request.
    pub fn step(&mut self, request: &WorkloadRequest) -> Result<Decision, SimError> {
        self.advance_to(request.arrival_slot)?;
        self.submit(request)
    }

    pub fn demand_pct(&self) -> f64 {
        100.0 * self.demand_slices as f64 / self.capacity() as f64
    }

    fn capacity(&self) -> u64 {
        (SLICES_PER_GPU * self.cluster.len()) as u64
    }

    pub fn snapshot(&self, grid_pct: Option<f64>) -> Result<MetricsSnapshot, SimError> {
        let m = self.cluster.len() as f64;
        Ok(MetricsSnapshot {
            slot: self.slot,
            grid_pct,
            demand_pct: self.demand_pct(),
            arrived: self.arrived,
            accepted: self.accepted,
            hosted: self.cluster.hosted_instances() as u64,
            acceptance_rate: if self.arrived == 0 { 1.0 } else { self.accepted as f64 / self.arrived as f64 },
            utilization_pct: 100.0 * self.cluster.occupied_slices() as f64 / self.capacity() as f64,
            active_gpus_pct: 100.0 * self.cluster.active_gpus() as f64 / m,
            frag_severity: cluster_severity(&self.cluster)?,
        })
    }
}

/// Outcome of replaying a trace, with the decision taken for every request in order.
#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub result: RunResult,
    pub decisions: Vec<Decision>,
}

/// Replays `trace` on an empty cluster, snapshotting whenever demand crosses a grid point.
pub fn simulate_trace(config: &SimConfig, trace: &Trace, run_index: u64) -> Result<TraceOutcome, SimError> {
    config.validate()?;
    let grid = config.sorted_grid();
    let mut next_grid = 0;
    let mut sim = Simulation::new(config.cluster_size, config.scheduler, config.policy);
    let mut snapshots = Vec::new();
    let mut decisions = Vec::with_capacity(trace.requests.len());
    let mut severity_sum = 0.0;
    let mut requests = trace.requests.iter().peekable();

    for slot in 0..trace.horizon {
        sim.advance_to(slot)?;
        while let Some(request) = requests.next_if(|r| r.arrival_slot == slot) {
            decisions.push(sim.submit(request)?);
        }
        if let Some(r) = requests.peek() {
            if r.arrival_slot < slot {
                return Err(SimError::OutOfOrder {
                    workload_id: r.workload_id,
                    arrival: r.arrival_slot,
                    current: slot,
                });
            }
        }
        let demand = sim.demand_pct();
        let mut current: Option<MetricsSnapshot> = None;
        while next_grid < grid.len() && demand >= grid[next_grid] {
            let snap = match &current {
                Some(s) => s.clone(),
                None => sim.snapshot(None)?,
            };
            current = Some(snap.clone());
            snapshots.push(MetricsSnapshot { grid_pct: Some(grid[next_grid]), ..snap });
            next_grid += 1;
        }
        let severity = match &current {
            Some(s) => s.frag_severity,
            None => cluster_severity(sim.cluster())?,
        };
        severity_sum += severity;
        if slot + 1 == trace.horizon {
            snapshots.push(match current {
                Some(s) => s,
                None => sim.snapshot(None)?,
            });
        }
    }
    if let Some(r) = requests.next() {
        return Err(SimError::OutOfOrder {
            workload_id: r.workload_id,
            arrival: r.arrival_slot,
            current: trace.horizon,
        });
    }

    let result = RunResult {
        scheduler: config.scheduler,
        distribution: config.distribution.name.clone(),
        cluster_size: config.cluster_size,
        run_index,
        seed: config.seed,
        horizon: trace.horizon,
        snapshots,
        mean_frag_severity: severity_sum / trace.horizon.max(1) as f64,
        arrived: sim.arrived(),
        accepted: sim.accepted(),
    };
    Ok(TraceOutcome { result, decisions })
}

pub fn trace_for_run(config: &SimConfig, run_index: u64) -> Result<Trace, SimError> {
    let trace_config = TraceConfig {
        cluster_size: config.cluster_size,
        distribution: config.distribution.clone(),
        seed: config.seed,
        run_index,
        horizon: config.horizon()?,
        arrivals_per_slot: config.arrivals_per_slot,
    };
    Ok(generate_trace(&trace_config)?)
}

pub fn run_single(config: &SimConfig, run_index: u64) -> Result<RunResult, SimError> {
    let trace = trace_for_run(config, run_index)?;
    Ok(simulate_trace(config, &trace, run_index)?.result)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single observation.
    pub std: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() == 1 {
            return Stat { mean, std: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Stat { mean, std: var.sqrt() }
    }
}

/// Across-run statistics for one grid point (or the end-of-run snapshot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub grid_pct: Option<f64>,
    /// Runs whose demand reached this grid point.
    pub runs: usize,
    pub slot: Stat,
    pub demand_pct: Stat,
    pub arrived: Stat,
    pub accepted: Stat,
    pub hosted: Stat,
    pub acceptance_rate: Stat,
    pub utilization_pct: Stat,
    pub active_gpus_pct: Stat,
    pub frag_severity: Stat,
}

impl AggregatePoint {
    fn from_snapshots(grid_pct: Option<f64>, snaps: &[&MetricsSnapshot]) -> Self {
        let stat =
            |f: &dyn Fn(&MetricsSnapshot) -> f64| Stat::from_values(&snaps.iter().map(|s| f(s)).collect::<Vec<_>>());
        AggregatePoint {
            grid_pct,
            runs: snaps.len(),
            slot: stat(&|s| s.slot as f64),
            demand_pct: stat(&|s| s.demand_pct),
            arrived: stat(&|s| s.arrived as f64),
            accepted: stat(&|s| s.accepted as f64),
            hosted: stat(&|s| s.hosted as f64),
            acceptance_rate: stat(&|s| s.acceptance_rate),
            utilization_pct: stat(&|s| s.utilization_pct),
            active_gpus_pct: stat(&|s| s.active_gpus_pct),
            frag_severity: stat(&|s| s.frag_severity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub points: Vec<AggregatePoint>,
    pub mean_frag_severity: Stat,
    pub arrived: Stat,
    pub accepted: Stat,
}

impl Aggregate {
    /// Folds runs in the order given.
    pub fn from_runs(runs: &[RunResult]) -> Self {
        let mut keys: Vec<Option<f64>> = Vec::new();
        for run in runs {
            for s in &run.snapshots {
                if !keys.iter().any(|k| k.map(f64::to_bits) == s.grid_pct.map(f64::to_bits)) {
                    keys.push(s.grid_pct);
                }
            }
        }
        // grid points ascending, end-of-run snapshot last
        keys.sort_by(|a, b| match (a, b) {
            (Some(x), Some(y)) => x.total_cmp(y),
            (None, None) => std::cmp::Ordering::Equal,
            (None, _) => std::cmp::Ordering::Greater,
            (_, None) => std::cmp::Ordering::Less,
        });
        let points = keys
            .into_iter()
            .map(|key| {
                let snaps: Vec<&MetricsSnapshot> = runs
                    .iter()
                    .filter_map(|r| r.snapshots.iter().find(|s| s.grid_pct.map(f64::to_bits) == key.map(f64::to_bits)))
                    .collect();
                AggregatePoint::from_snapshots(key, &snaps)
            })
            .collect();
        let per_run = |f: &dyn Fn(&RunResult) -> f64| Stat::from_values(&runs.iter().map(f).collect::<Vec<_>>());
        Aggregate {
            points,
            mean_frag_severity: per_run(&|r| r.mean_frag_severity),
            arrived: per_run(&|r| r.arrived as f64),
            accepted: per_run(&|r| r.accepted as f64),
        }
    }

    pub fn at_grid(&self, grid_pct: f64) -> Option<&AggregatePoint> {
        self.points.iter().find(|p| p.grid_pct == Some(grid_pct))
    }

    pub fn final_point(&self) -> Option<&AggregatePoint> {
        self.points.iter().find(|p| p.grid_pct.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub config: SimConfig,
    pub horizon: u32,
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

/// Runs `config.runs` independent simulations, on up to `parallelism` threads
/// (rayon's global pool when `None`). Results are ordered by run index.
pub fn run_batch(config: &SimConfig, parallelism: Option<usize>) -> Result<BatchResult, SimError> {
    config.validate()?;
    let horizon = config.horizon()?;
    let work = || -> Result<Vec<RunResult>, SimError> {
        (0..config.runs as u64).into_par_iter().map(|r| run_single(config, r)).collect()
    };
    let runs = match parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?.install(work)?,
        None => work()?,
    };
    let aggregate = Aggregate::from_runs(&runs);
    Ok(BatchResult { config: config.clone(), horizon, runs, aggregate })
}
