//! Synthetic workload traces.
//!
//! A trace has `T` scheduling slots with a fixed number of arrivals per slot.
//! Each request draws its profile from a [`ProfileDistribution`] and its
//! duration uniformly from `[1, T]`, where `T` is the number of slots whose
//! expected requested slices equal the cluster capacity.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mig_model::{lookup_profile, profile_catalog, MigProfile, ModelError, SLICES_PER_GPU};

/// Generator behind every trace. Run `r` of a batch seeded with `s` uses
/// `ChaCha12Rng::seed_from_u64(s)` on stream `r`.
pub type SimRng = ChaCha12Rng;

/// Identifier recorded in result manifests.
pub const RNG_ALGORITHM: &str = "chacha12/seed_from_u64+stream=run_index";

pub fn run_rng(base_seed: u64, run_index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(base_seed);
    rng.set_stream(run_index);
    rng
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown distribution `{0}` (expected uniform, skew-small, skew-big, bimodal or a custom name)")]
    UnknownDistribution(String),
    #[error("probabilities must be non-negative and sum to 1, got sum {0}")]
    InvalidPmf(f64),
    #[error("distribution has zero expected width")]
    ZeroExpectation,
    #[error("invalid trace config: {0}")]
    InvalidConfig(String),
    #[error("trace i/o: {0}")]
    Io(#[from] csv::Error),
    #[error("invalid trace record {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

const PMF_TOLERANCE: f64 = 1e-9;

/// Probability of each catalog profile, indexed by catalog position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDistribution {
    pub name: String,
    pmf: [f64; 6],
}

impl ProfileDistribution {
    pub const BUILTIN: [&'static str; 4] = ["uniform", "skew-small", "skew-big", "bimodal"];

    /// Catalog order: 1g.10gb, 1g.20gb, 2g.20gb, 3g.40gb, 4g.40gb, 7g.80gb.
    fn from_array(name: &str, pmf: [f64; 6]) -> Result<Self, WorkloadError> {
        let sum: f64 = pmf.iter().sum();
        if pmf.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > PMF_TOLERANCE {
            return Err(WorkloadError::InvalidPmf(sum));
        }
        Ok(ProfileDistribution { name: name.to_string(), pmf })
    }

    pub fn uniform() -> Self {
        let p = 1.0 / 6.0;
        Self::from_array("uniform", [p; 6]).expect("valid pmf")
    }

    pub fn skew_small() -> Self {
        Self::from_array("skew-small", [0.30, 0.25, 0.20, 0.10, 0.10, 0.05]).expect("valid pmf")
    }

    pub fn skew_big() -> Self {
        Self::from_array("skew-big", [0.05, 0.10, 0.10, 0.20, 0.25, 0.30]).expect("valid pmf")
    }

    pub fn bimodal() -> Self {
        Self::from_array("bimodal", [0.30, 0.15, 0.05, 0.05, 0.15, 0.30]).expect("valid pmf")
    }

    pub fn builtin(name: &str) -> Result<Self, WorkloadError> {
        match name {
            "uniform" => Ok(Self::uniform()),
            "skew-small" => Ok(Self::skew_small()),
            "skew-big" => Ok(Self::skew_big()),
            "bimodal" => Ok(Self::bimodal()),
            _ => Err(WorkloadError::UnknownDistribution(name.to_string())),
        }
    }

    /// Distribution from profile-name probabilities; missing profiles get 0.
    pub fn custom(name: &str, pmf: &BTreeMap<String, f64>) -> Result<Self, WorkloadError> {
        let mut weights = [0.0; 6];
        for (profile, &p) in pmf {
            weights[lookup_profile(profile)?.catalog_index()] = p;
        }
        Self::from_array(name, weights)
    }

    pub fn probability(&self, profile: &MigProfile) -> f64 {
        self.pmf[profile.catalog_index()]
    }

    pub fn pmf(&self) -> BTreeMap<&'static str, f64> {
        profile_catalog().iter().zip(self.pmf).map(|(p, w)| (p.name, w)).collect()
    }

    /// E[w(p)] in memory slices.
    pub fn expected_width(&self) -> f64 {
        profile_catalog().iter().zip(self.pmf).map(|(p, w)| w * p.mem_slices as f64).sum()
    }

    /// Inverse-CDF draw over the catalog order.
    pub fn sample(&self, rng: &mut impl Rng) -> &'static MigProfile {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (profile, &p) in profile_catalog().iter().zip(&self.pmf) {
            cumulative += p;
            if u < cumulative {
                return profile;
            }
        }
        // u landed in the rounding gap above the last cumulative sum
        let last = self.pmf.iter().rposition(|&p| p > 0.0).expect("pmf sums to 1");
        &profile_catalog()[last]
    }
}

/// `T = ceil(8M / (k·E[w]))` for `k` arrivals per slot.
pub fn compute_horizon(
    cluster_size: usize,
    distribution: &ProfileDistribution,
    arrivals_per_slot: usize,
) -> Result<u32, WorkloadError> {
    let expected = distribution.expected_width();
    if expected.is_nan() || expected <= 0.0 {
        return Err(WorkloadError::ZeroExpectation);
    }
    if cluster_size == 0 || arrivals_per_slot == 0 {
        return Err(WorkloadError::InvalidConfig("cluster size and arrivals per slot must be positive".into()));
    }
    let slots = (SLICES_PER_GPU * cluster_size) as f64 / (arrivals_per_slot as f64 * expected);
    // absorb rounding in E[w] so that exact quotients are not pushed up a slot
    Ok(((slots - 1e-9).ceil() as u32).max(1))
}

pub fn sample_duration(horizon: u32, rng: &mut impl Rng) -> u32 {
    rng.random_range(1..=horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadRequest {
    pub workload_id: u64,
    pub profile: &'static MigProfile,
    pub arrival_slot: u32,
    pub duration_slots: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    pub cluster_size: usize,
    pub distribution: ProfileDistribution,
    pub seed: u64,
    pub run_index: u64,
    pub horizon: u32,
    pub arrivals_per_slot: usize,
}

impl TraceConfig {
    /// Config with the saturating horizon for `distribution` on `cluster_size` GPUs.
    pub fn saturating(
        cluster_size: usize,
        distribution: ProfileDistribution,
        seed: u64,
        run_index: u64,
    ) -> Result<Self, WorkloadError> {
        let horizon = compute_horizon(cluster_size, &distribution, 1)?;
        Ok(TraceConfig { cluster_size, distribution, seed, run_index, horizon, arrivals_per_slot: 1 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub horizon: u32,
    pub requests: Vec<WorkloadRequest>,
}

impl Trace {
    /// Writes one `workload_id,profile,arrival_slot,duration_slots` record per request.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), WorkloadError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["workload_id", "profile", "arrival_slot", "duration_slots"])?;
        for r in &self.requests {
            w.write_record([
                r.workload_id.to_string(),
                r.profile.name.to_string(),
                r.arrival_slot.to_string(),
                r.duration_slots.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads records written by [`Trace::write_csv`]. The horizon is the last arrival slot + 1
    /// unless `horizon` is given.
    pub fn read_csv(reader: impl Read, horizon: Option<u32>) -> Result<Self, WorkloadError> {
        #[derive(Deserialize)]
        struct Record {
            workload_id: u64,
            profile: String,
            arrival_slot: u32,
            duration_slots: u32,
        }
        let mut requests = Vec::new();
        let mut ids = std::collections::HashSet::new();
        for (n, record) in csv::Reader::from_reader(reader).deserialize::<Record>().enumerate() {
            let line = n + 2;
            let record = record?;
            let bad = |reason: String| WorkloadError::BadRecord { line, reason };
            if !ids.insert(record.workload_id) {
                return Err(bad(format!("duplicate workload id {}", record.workload_id)));
            }
            if record.duration_slots == 0 {
                return Err(bad("duration must be at least 1".into()));
            }
            if requests.last().is_some_and(|prev: &WorkloadRequest| prev.arrival_slot > record.arrival_slot) {
                return Err(bad("arrival slots must be non-decreasing".into()));
            }
            requests.push(WorkloadRequest {
                workload_id: record.workload_id,
                profile: lookup_profile(&record.profile)?,
                arrival_slot: record.arrival_slot,
                duration_slots: record.duration_slots,
            });
        }
        let horizon = horizon.unwrap_or_else(|| requests.last().map_or(1, |r| r.arrival_slot + 1));
        if let Some(r) = requests.iter().find(|r| r.arrival_slot >= horizon) {
            return Err(WorkloadError::InvalidConfig(format!(
                "workload {} arrives at slot {} beyond horizon {horizon}",
                r.workload_id, r.arrival_slot
            )));
        }
        Ok(Trace { horizon, requests })
    }
}

pub fn generate_trace(config: &TraceConfig) -> Result<Trace, WorkloadError> {
    if config.horizon == 0 || config.cluster_size == 0 || config.arrivals_per_slot == 0 {
        return Err(WorkloadError::InvalidConfig(
            "horizon, cluster size and arrivals per slot must be positive".into(),
        ));
    }
    let mut rng = run_rng(config.seed, config.run_index);
    let mut requests = Vec::with_capacity(config.horizon as usize * config.arrivals_per_slot);
    for slot in 0..config.horizon {
        for _ in 0..config.arrivals_per_slot {
            let profile = config.distribution.sample(&mut rng);
            let duration_slots = sample_duration(config.horizon, &mut rng);
            requests.push(WorkloadRequest {
                workload_id: requests.len() as u64,
                profile,
                arrival_slot: slot,
                duration_slots,
            });
        }
    }
    Ok(Trace { horizon: config.horizon, requests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str) -> ProfileDistribution {
        ProfileDistribution::custom("single", &BTreeMap::from([(name.to_string(), 1.0)])).unwrap()
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(compute_horizon(100, &ProfileDistribution::uniform(), 1).unwrap(), 229);
        assert_eq!(compute_horizon(1, &single("7g.80gb"), 1).unwrap(), 1);
        assert_eq!(compute_horizon(100, &ProfileDistribution::skew_small(), 1).unwrap(), 334);
        assert_eq!(compute_horizon(100, &ProfileDistribution::skew_big(), 1).unwrap(), 173);
        assert_eq!(compute_horizon(100, &ProfileDistribution::bimodal(), 1).unwrap(), 206);
    }

    #[test]
    fn expected_widths() {
        assert!((ProfileDistribution::uniform().expected_width() - 3.5).abs() < 1e-12);
        assert!((ProfileDistribution::skew_small().expected_width() - 2.4).abs() < 1e-12);
    }

    #[test]
    fn invalid_pmfs_rejected() {
        let bad = BTreeMap::from([("1g.10gb".to_string(), 0.6), ("7g.80gb".to_string(), 0.6)]);
        assert!(matches!(ProfileDistribution::custom("x", &bad), Err(WorkloadError::InvalidPmf(_))));
        let neg = BTreeMap::from([("1g.10gb".to_string(), 1.5), ("7g.80gb".to_string(), -0.5)]);
        assert!(matches!(ProfileDistribution::custom("x", &neg), Err(WorkloadError::InvalidPmf(_))));
        let unknown = BTreeMap::from([("9g.90gb".to_string(), 1.0)]);
        assert!(matches!(ProfileDistribution::custom("x", &unknown), Err(WorkloadError::Model(_))));
        assert!(ProfileDistribution::builtin("zipf").is_err());
    }

    #[test]
    fn degenerate_sampling() {
        let dist = single("1g.10gb");
        let mut rng = run_rng(3, 0);
        assert!((0..1000).all(|_| dist.sample(&mut rng).name == "1g.10gb"));
        assert!((0..1000).all(|_| sample_duration(1, &mut rng) == 1));
        assert!((0..1000).all(|_| (1..=229).contains(&sample_duration(229, &mut rng))));
    }

    #[test]
    fn skew_big_full_gpu_frequency() {
        let dist = ProfileDistribution::skew_big();
        let mut rng = run_rng(11, 0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| dist.sample(&mut rng).name == "7g.80gb").count();
        assert!((hits as f64 / n as f64 - 0.30).abs() < 0.005);
    }

    #[test]
    fn duration_mean() {
        let mut rng = run_rng(5, 1);
        let n = 1_000_000u64;
        let total: u64 = (0..n).map(|_| sample_duration(229, &mut rng) as u64).sum();
        assert!((total as f64 / n as f64 - 115.0).abs() < 0.5);
    }

    #[test]
    fn traces_are_reproducible() {
        let config = TraceConfig::saturating(100, ProfileDistribution::uniform(), 42, 0).unwrap();
        let a = generate_trace(&config).unwrap();
        assert_eq!(a, generate_trace(&config).unwrap());
        assert_eq!(a.requests.len(), 229);
        assert!(a.requests.iter().enumerate().all(|(i, r)| r.arrival_slot == i as u32));
        let other = generate_trace(&TraceConfig { run_index: 1, ..config }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn full_gpu_trace_on_two_gpus() {
        let config = TraceConfig::saturating(2, single("7g.80gb"), 1, 0).unwrap();
        let trace = generate_trace(&config).unwrap();
        assert_eq!(trace.requests.len(), 2);
        assert!(trace.requests.iter().all(|r| r.profile.name == "7g.80gb"));
    }

    #[test]
    fn trace_csv_round_trip() {
        let config = TraceConfig::saturating(10, ProfileDistribution::bimodal(), 8, 2).unwrap();
        let trace = generate_trace(&config).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = Trace::read_csv(buf.as_slice(), Some(trace.horizon)).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn trace_csv_rejects_bad_records() {
        let dup = "workload_id,profile,arrival_slot,duration_slots\n0,1g.10gb,0,1\n0,1g.10gb,1,1\n";
        assert!(matches!(Trace::read_csv(dup.as_bytes(), None), Err(WorkloadError::BadRecord { line: 3, .. })));
        let zero = "workload_id,profile,arrival_slot,duration_slots\n0,1g.10gb,0,0\n";
        assert!(Trace::read_csv(zero.as_bytes(), None).is_err());
        let unknown = "workload_id,profile,arrival_slot,duration_slots\n0,5g.50gb,0,1\n";
        assert!(Trace::read_csv(unknown.as_bytes(), None).is_err());
    }
}
