//! Experiment specs, result files, comparison tables and plot data.
//!
//! An experiment is a TOML file naming a grid of (distribution × scheduler)
//! cells plus shared simulation settings. Running it writes, into the output
//! directory:
//!
//! * `results.csv` with one row per snapshot per run per cell,
//! * `aggregates.csv` with across-run mean/std per cell and grid point,
//! * `results.json` holding the cell configs, aggregates and run totals,
//! * `runs.jsonl` with every [`RunResult`] on its own line,
//! * `manifest.json` recording the spec, seeds, generator and file digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fragmentation::{contributions, frag_score, is_fragmented};
use crate::mig_model::{profile_catalog, ClusterState, MigProfile, Occupancy};
use crate::schedulers::{best_index_order, mfi_deltas, SchedulerKind, SchedulerPolicy};
use crate::sim::{
    default_snapshot_grid, run_batch, Aggregate, AggregatePoint, BatchResult, RunResult, SimConfig, SimError,
};
use crate::workload::{ProfileDistribution, WorkloadError, RNG_ALGORITHM};

pub const RESULTS_SCHEMA: &str = "migsched.results/v1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("failed to parse spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("incompatible result files: {0}")]
    Incompatible(String),
    #[error("no cells")]
    NoCells,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn one() -> usize {
    1
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, formats: all_formats() }
    }
}

/// Declarative description of a batch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub cluster_size: usize,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    pub distributions: Vec<String>,
    pub schedulers: Vec<String>,
    #[serde(default = "default_snapshot_grid")]
    pub snapshot_grid: Vec<f64>,
    #[serde(default)]
    pub strict_first_choice: bool,
    #[serde(default = "one")]
    pub arrivals_per_slot: usize,
    /// Extra distributions by name: profile name -> probability.
    #[serde(default)]
    pub custom_distributions: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Command-line values that take precedence over the spec file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub cluster_size: Option<usize>,
    pub schedulers: Vec<String>,
    pub distributions: Vec<String>,
    pub strict_first_choice: bool,
    pub out: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// The experiment matrix comparing every scheduler on every built-in distribution: 100 GPUs, 500 runs,
    /// four distributions by five schedulers.
    pub fn full_matrix() -> Self {
        ExperimentSpec {
            name: Some("full-matrix".into()),
            cluster_size: 100,
            runs: 500,
            seed: 2025,
            distributions: ProfileDistribution::BUILTIN.iter().map(|s| s.to_string()).collect(),
            schedulers: SchedulerKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
            snapshot_grid: default_snapshot_grid(),
            strict_first_choice: false,
            arrivals_per_slot: 1,
            custom_distributions: BTreeMap::new(),
            output: OutputSpec::default(),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(runs) = o.runs {
            self.runs = runs;
        }
        if let Some(m) = o.cluster_size {
            self.cluster_size = m;
        }
        if !o.schedulers.is_empty() {
            self.schedulers = o.schedulers.clone();
        }
        if !o.distributions.is_empty() {
            self.distributions = o.distributions.clone();
        }
        if o.strict_first_choice {
            self.strict_first_choice = true;
        }
        if let Some(out) = &o.out {
            self.output.dir = Some(out.clone());
        }
        if !o.formats.is_empty() {
            self.output.formats = o.formats.clone();
        }
    }

    fn distribution(&self, name: &str) -> Result<ProfileDistribution, ReportError> {
        match self.custom_distributions.get(name) {
            Some(pmf) => Ok(ProfileDistribution::custom(name, pmf)?),
            None => Ok(ProfileDistribution::builtin(name)?),
        }
    }

    /// Resolves and validates every cell, distribution-major.
    pub fn cells(&self) -> Result<Vec<SimConfig>, ReportError> {
        if self.distributions.is_empty() || self.schedulers.is_empty() {
            return Err(ReportError::Spec("at least one distribution and one scheduler are required".into()));
        }
        let kinds = self
            .schedulers
            .iter()
            .map(|s| s.parse::<SchedulerKind>().map_err(|e| ReportError::Spec(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cells = Vec::new();
        for name in &self.distributions {
            let distribution = self.distribution(name)?;
            for &scheduler in &kinds {
                let config = SimConfig {
                    cluster_size: self.cluster_size,
                    distribution: distribution.clone(),
                    scheduler,
                    runs: self.runs,
                    seed: self.seed,
                    snapshot_grid: self.snapshot_grid.clone(),
                    policy: SchedulerPolicy { strict_first_choice: self.strict_first_choice },
                    arrivals_per_slot: self.arrivals_per_slot,
                };
                config.validate()?;
                config.horizon()?;
                cells.push(config);
            }
        }
        Ok(cells)
    }
}

/// Per-run totals kept in `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: u64,
    pub arrived: u64,
    pub accepted: u64,
    pub mean_frag_severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scheduler: SchedulerKind,
    pub distribution: String,
    pub pmf: BTreeMap<String, f64>,
    pub cluster_size: usize,
    pub horizon: u32,
    pub runs: usize,
    pub seed: u64,
    pub strict_first_choice: bool,
    pub arrivals_per_slot: usize,
    pub aggregate: Aggregate,
    pub run_summaries: Vec<RunSummary>,
}

impl CellResult {
    pub fn from_batch(batch: &BatchResult) -> Self {
        let c = &batch.config;
        CellResult {
            scheduler: c.scheduler,
            distribution: c.distribution.name.clone(),
            pmf: c.distribution.pmf().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            cluster_size: c.cluster_size,
            horizon: batch.horizon,
            runs: c.runs,
            seed: c.seed,
            strict_first_choice: c.policy.strict_first_choice,
            arrivals_per_slot: c.arrivals_per_slot,
            aggregate: batch.aggregate.clone(),
            run_summaries: batch
                .runs
                .iter()
                .map(|r| RunSummary {
                    run_index: r.run_index,
                    arrived: r.arrived,
                    accepted: r.accepted,
                    mean_frag_severity: r.mean_frag_severity,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema: String,
    pub name: Option<String>,
    pub cells: Vec<CellResult>,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let path = if path.is_dir() { path.join("results.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let file: ResultsFile = serde_json::from_str(&text)?;
        if file.schema != RESULTS_SCHEMA {
            return Err(ReportError::Incompatible(format!(
                "{}: schema `{}`, expected `{RESULTS_SCHEMA}`",
                path.display(),
                file.schema
            )));
        }
        Ok(file)
    }
}

pub struct Experiment {
    pub spec: ExperimentSpec,
    pub batches: Vec<BatchResult>,
}

impl Experiment {
    pub fn run(spec: ExperimentSpec, parallelism: Option<usize>) -> Result<Self, ReportError> {
        let cells = spec.cells()?;
        let mut batches = Vec::with_capacity(cells.len());
        for config in &cells {
            log::info!("running {} / {} ({} runs)", config.distribution.name, config.scheduler, config.runs);
            batches.push(run_batch(config, parallelism)?);
        }
        Ok(Experiment { spec, batches })
    }

    pub fn results_file(&self) -> ResultsFile {
        ResultsFile {
            schema: RESULTS_SCHEMA.to_string(),
            name: self.spec.name.clone(),
            cells: self.batches.iter().map(CellResult::from_batch).collect(),
        }
    }

    /// Writes the requested formats plus `manifest.json` into `dir`; returns the files written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut written = Vec::new();
        let formats = &self.spec.output.formats;
        if formats.contains(&Format::Csv) {
            let path = dir.join("results.csv");
            write_file(&path, &snapshots_csv(&self.batches)?)?;
            written.push(path);
            let path = dir.join("aggregates.csv");
            write_file(&path, &aggregates_csv(&self.results_file().cells)?)?;
            written.push(path);
        }
        if formats.contains(&Format::Json) {
            let path = dir.join("results.json");
            write_file(&path, &(serde_json::to_string_pretty(&self.results_file())? + "\n"))?;
            written.push(path);
            let path = dir.join("runs.jsonl");
            let mut lines = String::new();
            for run in self.batches.iter().flat_map(|b| &b.runs) {
                lines.push_str(&serde_json::to_string(run)?);
                lines.push('\n');
            }
            write_file(&path, &lines)?;
            written.push(path);
        }
        let manifest = Manifest::new(&self.spec, &written)?;
        let path = dir.join("manifest.json");
        write_file(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
        written.push(path);
        Ok(written)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SNAPSHOT_COLUMNS: [&str; 16] = [
    "scheduler",
    "distribution",
    "cluster_size",
    "horizon",
    "run",
    "seed",
    "slot",
    "grid_pct",
    "demand_pct",
    "arrived",
    "accepted",
    "hosted",
    "acceptance_rate",
    "utilization_pct",
    "active_gpus_pct",
    "frag_severity",
];

pub fn snapshots_csv(batches: &[BatchResult]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SNAPSHOT_COLUMNS)?;
    for run in batches.iter().flat_map(|b| &b.runs) {
        write_run_rows(&mut w, run)?;
    }
    finish(w)
}

fn write_run_rows(w: &mut csv::Writer<Vec<u8>>, run: &RunResult) -> Result<(), ReportError> {
    for s in &run.snapshots {
        w.write_record([
            run.scheduler.as_str().to_string(),
            run.distribution.clone(),
            run.cluster_size.to_string(),
            run.horizon.to_string(),
            run.run_index.to_string(),
            run.seed.to_string(),
            s.slot.to_string(),
            opt(s.grid_pct),
            s.demand_pct.to_string(),
            s.arrived.to_string(),
            s.accepted.to_string(),
            s.hosted.to_string(),
            s.acceptance_rate.to_string(),
            s.utilization_pct.to_string(),
            s.active_gpus_pct.to_string(),
            s.frag_severity.to_string(),
        ])?;
    }
    Ok(())
}

const POINT_METRICS: [&str; 9] = [
    "slot",
    "demand_pct",
    "arrived",
    "accepted",
    "hosted",
    "acceptance_rate",
    "utilization_pct",
    "active_gpus_pct",
    "frag_severity",
];

fn point_stats(p: &AggregatePoint) -> [crate::sim::Stat; 9] {
    [
        p.slot,
        p.demand_pct,
        p.arrived,
        p.accepted,
        p.hosted,
        p.acceptance_rate,
        p.utilization_pct,
        p.active_gpus_pct,
        p.frag_severity,
    ]
}

pub fn aggregates_csv(cells: &[CellResult]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["scheduler", "distribution", "cluster_size", "horizon", "grid_pct", "runs"].map(String::from).to_vec();
    for m in POINT_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    header.push("mean_frag_severity_mean".into());
    header.push("mean_frag_severity_std".into());
    w.write_record(&header)?;
    for cell in cells {
        for p in &cell.aggregate.points {
            let mut row = vec![
                cell.scheduler.as_str().to_string(),
                cell.distribution.clone(),
                cell.cluster_size.to_string(),
                cell.horizon.to_string(),
                opt(p.grid_pct),
                p.runs.to_string(),
            ];
            for s in point_stats(p) {
                row.push(s.mean.to_string());
                row.push(s.std.to_string());
            }
            row.push(cell.aggregate.mean_frag_severity.mean.to_string());
            row.push(cell.aggregate.mean_frag_severity.std.to_string());
            w.write_record(&row)?;
        }
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub rng: String,
    /// Run `r` of every cell draws its trace from the base seed on stream `r`.
    pub seed_derivation: String,
    pub spec: ExperimentSpec,
    pub files: Vec<ManifestFile>,
}

impl Manifest {
    fn new(spec: &ExperimentSpec, files: &[PathBuf]) -> Result<Self, ReportError> {
        let files = files
            .iter()
            .map(|path| {
                let bytes = fs::read(path).map_err(io_err(path))?;
                Ok(ManifestFile {
                    path: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>, ReportError>>()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: RNG_ALGORITHM.to_string(),
            seed_derivation: format!("trace(run r) = generator(seed = {}, stream = r)", spec.seed),
            spec: spec.clone(),
            files,
        })
    }
}

/// Metrics of one cell at one demand point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheduler: SchedulerKind,
    pub distribution: String,
    pub grid_pct: f64,
    pub acceptance_rate: f64,
    pub accepted: f64,
    pub utilization_pct: f64,
    pub active_gpus_pct: f64,
    pub frag_severity: f64,
    /// Fragmentation severity averaged over every slot of every run.
    pub mean_frag_severity: f64,
}

impl ComparisonRow {
    const METRICS: [&'static str; 6] =
        ["acceptance_rate", "accepted", "utilization_pct", "active_gpus_pct", "frag_severity", "mean_frag_severity"];

    fn values(&self) -> [f64; 6] {
        [
            self.acceptance_rate,
            self.accepted,
            self.utilization_pct,
            self.active_gpus_pct,
            self.frag_severity,
            self.mean_frag_severity,
        ]
    }

    fn with_values(&self, v: [f64; 6]) -> Self {
        ComparisonRow {
            acceptance_rate: v[0],
            accepted: v[1],
            utilization_pct: v[2],
            active_gpus_pct: v[3],
            frag_severity: v[4],
            mean_frag_severity: v[5],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub demand_point: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Each metric divided by its maximum over the rows. A metric whose maximum is 0
    /// maps every row to 1.0 since all rows then share the maximum.
    pub fn normalized(&self) -> ComparisonTable {
        let mut max = [f64::MIN; 6];
        for row in &self.rows {
            for (m, v) in max.iter_mut().zip(row.values()) {
                *m = m.max(v);
            }
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut v = row.values();
                for (x, m) in v.iter_mut().zip(max) {
                    *x = if m > 0.0 { *x / m } else { 1.0 };
                }
                row.with_values(v)
            })
            .collect();
        ComparisonTable { demand_point: self.demand_point, rows }
    }

    pub fn get(&self, scheduler: SchedulerKind, distribution: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scheduler == scheduler && r.distribution == distribution)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scheduler", "distribution", "grid_pct"];
        header.extend(ComparisonRow::METRICS);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.scheduler.as_str().to_string(), row.distribution.clone(), row.grid_pct.to_string()];
            rec.extend(row.values().iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        finish(w)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<12} {:>6} {:>10} {:>10} {:>8} {:>8} {:>9} {:>9}",
            "sched", "dist", "grid%", "accept", "accepted", "util%", "active%", "frag", "frag_avg"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<12} {:>6} {:>10.4} {:>10.2} {:>8.2} {:>8.2} {:>9.4} {:>9.4}",
                r.scheduler.label(),
                r.distribution,
                r.grid_pct,
                r.acceptance_rate,
                r.accepted,
                r.utilization_pct,
                r.active_gpus_pct,
                r.frag_severity,
                r.mean_frag_severity
            );
        }
        out
    }
}

/// All cells of the given files, checking that they describe the same cluster and horizons.
pub fn merge_cells(files: &[ResultsFile]) -> Result<Vec<CellResult>, ReportError> {
    let cells: Vec<CellResult> = files.iter().flat_map(|f| f.cells.iter().cloned()).collect();
    let first = cells.first().ok_or(ReportError::NoCells)?;
    if let Some(c) = cells.iter().find(|c| c.cluster_size != first.cluster_size) {
        return Err(ReportError::Incompatible(format!(
            "cluster size {} ({}/{}) differs from {}",
            c.cluster_size, c.distribution, c.scheduler, first.cluster_size
        )));
    }
    let mut horizons: BTreeMap<&str, u32> = BTreeMap::new();
    for c in &cells {
        let h = *horizons.entry(&c.distribution).or_insert(c.horizon);
        if h != c.horizon {
            return Err(ReportError::Incompatible(format!(
                "distribution {} has horizons {h} and {} across files",
                c.distribution, c.horizon
            )));
        }
    }
    Ok(cells)
}

fn nearest_point(aggregate: &Aggregate, demand_point: f64) -> Option<&AggregatePoint> {
    aggregate.points.iter().filter(|p| p.grid_pct.is_some()).min_by(|a, b| {
        let da = (a.grid_pct.unwrap() - demand_point).abs();
        let db = (b.grid_pct.unwrap() - demand_point).abs();
        da.total_cmp(&db)
    })
}

pub fn compare(cells: &[CellResult], demand_point: f64) -> Result<ComparisonTable, ReportError> {
    if cells.is_empty() {
        return Err(ReportError::NoCells);
    }
    let mut rows = Vec::with_capacity(cells.len());
    for c in cells {
        let p = nearest_point(&c.aggregate, demand_point).ok_or_else(|| {
            ReportError::Incompatible(format!("{}/{} has no grid snapshots", c.distribution, c.scheduler))
        })?;
        rows.push(ComparisonRow {
            scheduler: c.scheduler,
            distribution: c.distribution.clone(),
            grid_pct: p.grid_pct.unwrap(),
            acceptance_rate: p.acceptance_rate.mean,
            accepted: p.accepted.mean,
            utilization_pct: p.utilization_pct.mean,
            active_gpus_pct: p.active_gpus_pct.mean,
            frag_severity: p.frag_severity.mean,
            mean_frag_severity: c.aggregate.mean_frag_severity.mean,
        });
    }
    Ok(ComparisonTable { demand_point, rows })
}

/// Plot-ready files: four curves against demand and one bar chart.
pub const PLOT_FILES: [&str; 5] = [
    "acceptance_vs_demand.csv",
    "scheduled_vs_demand.csv",
    "utilization_vs_demand.csv",
    "active_gpus_vs_demand.csv",
    "frag_severity.csv",
];

fn series_name(c: &CellResult) -> String {
    format!("{}/{}", c.distribution, c.scheduler.label())
}

fn curve_csv(cells: &[CellResult], metric: impl Fn(&AggregatePoint) -> f64) -> Result<String, ReportError> {
    let mut xs: Vec<f64> = cells.iter().flat_map(|c| c.aggregate.points.iter().filter_map(|p| p.grid_pct)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["demand_pct".to_string()];
    header.extend(cells.iter().map(series_name));
    w.write_record(&header)?;
    for x in xs {
        let mut row = vec![x.to_string()];
        for c in cells {
            row.push(c.aggregate.at_grid(x).map(|p| metric(p).to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    finish(w)
}

fn severity_bars_csv(cells: &[CellResult]) -> Result<String, ReportError> {
    let mut schedulers: Vec<SchedulerKind> = Vec::new();
    let mut distributions: Vec<&str> = Vec::new();
    for c in cells {
        if !schedulers.contains(&c.scheduler) {
            schedulers.push(c.scheduler);
        }
        if !distributions.contains(&c.distribution.as_str()) {
            distributions.push(&c.distribution);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["distribution".to_string()];
    header.extend(schedulers.iter().map(|k| k.label().to_string()));
    w.write_record(&header)?;
    for d in distributions {
        let mut row = vec![d.to_string()];
        for &k in &schedulers {
            let cell = cells.iter().find(|c| c.scheduler == k && c.distribution == d);
            row.push(cell.map(|c| c.aggregate.mean_frag_severity.mean.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// Contents of every file in [`PLOT_FILES`], in that order.
pub fn plot_data(cells: &[CellResult]) -> Result<Vec<(&'static str, String)>, ReportError> {
    if cells.is_empty() {
        return Err(ReportError::NoCells);
    }
    Ok(vec![
        (PLOT_FILES[0], curve_csv(cells, |p| p.acceptance_rate.mean)?),
        (PLOT_FILES[1], curve_csv(cells, |p| p.accepted.mean)?),
        (PLOT_FILES[2], curve_csv(cells, |p| p.utilization_pct.mean)?),
        (PLOT_FILES[3], curve_csv(cells, |p| p.active_gpus_pct.mean)?),
        (PLOT_FILES[4], severity_bars_csv(cells)?),
    ])
}

pub fn write_plot_data(cells: &[CellResult], dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, contents) in plot_data(cells)? {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}

/// Human-readable breakdown of the score of `occupancy`, plus the MFI dry-run table for `profile`.
pub fn inspect_report(occupancy: Occupancy, profile: Option<&'static MigProfile>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "occupancy     {occupancy}");
    let _ = writeln!(out, "free slices   {}", occupancy.free_slices());
    let _ = writeln!(out, "frag score    {}", frag_score(occupancy));
    let parts = contributions(occupancy);
    if profile_catalog().iter().all(|p| p.width() > occupancy.free_slices()) {
        let _ = writeln!(out, "note          no profile passes the ΔS precheck");
    }
    let _ = writeln!(out, "contributions");
    for p in profile_catalog() {
        let blocked: Vec<String> = parts.iter().filter(|c| c.profile == p).map(|c| c.start_index.to_string()).collect();
        let total: u32 = parts.iter().filter(|c| c.profile == p).map(|c| c.weight).sum();
        let status = if p.width() > occupancy.free_slices() {
            "skipped (ΔS < width)".to_string()
        } else if blocked.is_empty() {
            "-".to_string()
        } else {
            format!("blocked at {{{}}}", blocked.join(","))
        };
        let _ = writeln!(out, "  {:<8} {:>2}  {status}", p.name, total);
    }
    if let Some(p) = profile {
        let _ = writeln!(out, "profile       {}", p.name);
        let _ = writeln!(out, "fragmented    {}", is_fragmented(occupancy, p));
        let cluster = ClusterState::from_occupancies(&[occupancy]);
        let deltas = mfi_deltas(&cluster, p);
        if deltas.is_empty() {
            let _ = writeln!(out, "dry run       no free legal span");
        } else {
            let _ = writeln!(out, "dry run       index -> ΔF");
            for d in &deltas {
                let _ = writeln!(out, "  {:>2} -> {}", d.start_index, d.delta);
            }
            let best = deltas.iter().min_by_key(|d| (d.delta, d.start_index)).expect("non-empty");
            let _ = writeln!(out, "recommended   index {}", best.start_index);
        }
        let _ = writeln!(out, "best-index order {:?}", best_index_order(p));
    }
    out
}
