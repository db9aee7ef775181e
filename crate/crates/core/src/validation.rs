//! Self-checks run by `migsched validate`: the score against the reference
//! oracle, every scheduler against exhaustive search, and the simulation
//! invariants on randomly generated small clusters.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::fragmentation::oracle::{frag_score_oracle, oracle_from_bits};
use crate::fragmentation::{frag_score, FragScore};
use crate::mig_model::{profile_catalog, ClusterState, InstanceId, MigProfile, Occupancy, Placement};
use crate::schedulers::{Decision, Scheduler, SchedulerKind, SchedulerPolicy};
use crate::sim::{simulate_trace, trace_for_run, SimConfig, Simulation};
use crate::workload::{ProfileDistribution, SimRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// First counterexample found, if any.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.failure {
            None => write!(f, "PASS {} ({} cases)", self.name, self.cases),
            Some(why) => write!(f, "FAIL {} ({} cases): {why}", self.name, self.cases),
        }
    }
}

fn outcome(name: &'static str, cases: usize, result: Result<(), String>) -> CheckOutcome {
    CheckOutcome { name, cases, failure: result.err() }
}

/// Cluster of `m` GPUs filled by placing random profiles at random free legal spans.
pub fn random_cluster(rng: &mut impl Rng, m: usize) -> ClusterState {
    let mut cluster = ClusterState::new(m);
    let mut next_id = 0;
    for gpu_id in 0..m {
        let attempts = rng.random_range(0..8);
        for _ in 0..attempts {
            let profile = profile_catalog().choose(rng).expect("catalog is non-empty");
            let start = *profile.feasible_indexes.choose(rng).expect("every profile has an index") as usize;
            let placement = Placement { gpu_id, start_index: start, profile };
            if cluster.allocate(placement, InstanceId(next_id)).is_ok() {
                next_id += 1;
            }
        }
    }
    cluster
}

fn span_free(occupied: [bool; 8], start: usize, width: usize) -> bool {
    (start..start + width).all(|i| !occupied[i])
}

fn with_span(mut occupied: [bool; 8], start: usize, width: usize) -> [bool; 8] {
    for slot in &mut occupied[start..start + width] {
        *slot = true;
    }
    occupied
}

/// Every `(gpu, index)` at which `profile` can legally be placed, in ascending order.
pub fn feasible_placements(cluster: &ClusterState, profile: &MigProfile) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for gpu in cluster.gpus() {
        let occupied = gpu.occupancy().to_array();
        for &i in profile.feasible_indexes {
            if span_free(occupied, i as usize, profile.width()) {
                out.push((gpu.id(), i as usize));
            }
        }
    }
    out
}

/// MFI decision by exhaustive search, scoring every candidate with the oracle.
pub fn exhaustive_mfi(cluster: &ClusterState, profile: &MigProfile) -> Decision {
    let mut best: Option<(i64, usize, usize)> = None;
    for (gpu_id, start) in feasible_placements(cluster, profile) {
        let occupied = cluster.gpus()[gpu_id].occupancy().to_array();
        let delta =
            frag_score_oracle(with_span(occupied, start, profile.width())) as i64 - frag_score_oracle(occupied) as i64;
        if best.is_none_or(|b| (delta, gpu_id, start) < b) {
            best = Some((delta, gpu_id, start));
        }
    }
    match best {
        Some((_, gpu_id, start_index)) => Decision::Accept { gpu_id, start_index },
        None => Decision::Reject,
    }
}

pub fn check_oracle_equivalence() -> CheckOutcome {
    let result = (0..=u8::MAX).try_for_each(|bits| {
        let fast = frag_score(Occupancy::from_bits(bits)).0;
        let slow = oracle_from_bits(bits);
        if fast == slow {
            Ok(())
        } else {
            Err(format!("{}: score {fast}, oracle {slow}", Occupancy::from_bits(bits)))
        }
    });
    outcome("score matches oracle", 256, result)
}

pub fn check_score_bounds() -> CheckOutcome {
    let result = (|| {
        if frag_score(Occupancy::EMPTY).0 != 0 || frag_score(Occupancy::FULL).0 != 0 {
            return Err("empty or full gpu has a non-zero score".to_string());
        }
        for bits in 0..=u8::MAX {
            let s = frag_score(Occupancy::from_bits(bits)).0;
            if s > FragScore::UPPER_BOUND {
                return Err(format!("{} scores {s}", Occupancy::from_bits(bits)));
            }
        }
        Ok(())
    })();
    outcome("score within bounds", 256, result)
}

pub fn check_mfi_optimality(cases: usize, rng: &mut impl Rng) -> CheckOutcome {
    let result = (0..cases).try_for_each(|_| {
        let cluster = {
            let m = rng.random_range(1..=5);
            random_cluster(rng, m)
        };
        let profile = profile_catalog().choose(rng).expect("catalog is non-empty");
        let got = Scheduler::new(SchedulerKind::Mfi, SchedulerPolicy::default()).decide(&cluster, profile);
        let want = exhaustive_mfi(&cluster, profile);
        if got == want {
            Ok(())
        } else {
            Err(format!("{} on {:?}: got {got:?}, exhaustive {want:?}", profile.name, cluster.occupancies()))
        }
    });
    outcome("mfi matches exhaustive search", cases, result)
}

pub fn check_scheduler_soundness(cases: usize, rng: &mut impl Rng) -> CheckOutcome {
    let result = (0..cases).try_for_each(|_| {
        let cluster = {
            let m = rng.random_range(1..=5);
            random_cluster(rng, m)
        };
        let profile = profile_catalog().choose(rng).expect("catalog is non-empty");
        let feasible = feasible_placements(&cluster, profile);
        for kind in SchedulerKind::ALL {
            let mut scheduler = Scheduler::new(kind, SchedulerPolicy::default());
            for _ in 0..rng.random_range(0..cluster.len()) {
                scheduler.decide(&cluster, profile);
            }
            let decision = scheduler.decide(&cluster, profile);
            let ok = match decision {
                Decision::Reject => feasible.is_empty(),
                Decision::Accept { gpu_id, start_index } => feasible.contains(&(gpu_id, start_index)),
            };
            if !ok {
                return Err(format!("{kind} placing {} on {:?}: {decision:?}", profile.name, cluster.occupancies()));
            }
        }
        Ok(())
    });
    outcome("schedulers accept exactly when a placement exists", cases, result)
}

pub fn check_reversibility(cases: usize, rng: &mut impl Rng) -> CheckOutcome {
    let result = (0..cases).try_for_each(|_| {
        let mut cluster = {
            let m = rng.random_range(1..=4);
            random_cluster(rng, m)
        };
        let before = cluster.clone();
        let profile = profile_catalog().choose(rng).expect("catalog is non-empty");
        let Some(&(gpu_id, start_index)) = feasible_placements(&cluster, profile).choose(rng) else {
            return Ok(());
        };
        let id = InstanceId(u64::MAX);
        cluster.allocate(Placement { gpu_id, start_index, profile }, id).map_err(|e| e.to_string())?;
        cluster.release(gpu_id, id).map_err(|e| e.to_string())?;
        if cluster == before {
            Ok(())
        } else {
            Err(format!("allocate+release of {} at {gpu_id}:{start_index} changed the cluster", profile.name))
        }
    });
    outcome("allocate then release restores the state", cases, result)
}

fn random_config(rng: &mut impl Rng) -> SimConfig {
    let names = ProfileDistribution::BUILTIN;
    let distribution = ProfileDistribution::builtin(names.choose(rng).expect("builtins exist")).expect("builtin");
    let kind = *SchedulerKind::ALL.choose(rng).expect("schedulers exist");
    let mut config = SimConfig::new(rng.random_range(1..=6), distribution, kind);
    config.seed = rng.random();
    config.policy.strict_first_choice = rng.random_bool(0.3);
    config.arrivals_per_slot = rng.random_range(1..=2);
    config
}

/// Replays a random trace slot by slot and checks that the cluster hosts exactly the
/// accepted workloads still inside their lifetime, with slice accounting intact.
fn check_one_simulation(config: &SimConfig) -> Result<(), String> {
    let trace = trace_for_run(config, 0).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(config.cluster_size, config.scheduler, config.policy);
    // workload id -> (gpu, width, release slot)
    let mut live: BTreeMap<u64, (usize, usize, u32)> = BTreeMap::new();
    let mut requests = trace.requests.iter().peekable();
    for slot in 0..trace.horizon {
        sim.advance_to(slot).map_err(|e| e.to_string())?;
        live.retain(|_, &mut (_, _, end)| end > slot);
        while let Some(r) = requests.next_if(|r| r.arrival_slot == slot) {
            if let Decision::Accept { gpu_id, .. } = sim.submit(r).map_err(|e| e.to_string())? {
                live.insert(r.workload_id, (gpu_id, r.profile.width(), slot + r.duration_slots));
            }
        }
        let cluster = sim.cluster();
        let mut hosted: Vec<(u64, usize)> =
            cluster.gpus().iter().flat_map(|g| g.instances().keys().map(move |id| (id.0, g.id()))).collect();
        hosted.sort_unstable();
        let expected: Vec<(u64, usize)> = live.iter().map(|(&id, &(gpu, _, _))| (id, gpu)).collect();
        if hosted != expected {
            return Err(format!("slot {slot}: hosted {hosted:?}, expected {expected:?}"));
        }
        let slices: usize = live.values().map(|&(_, w, _)| w).sum();
        if slices != cluster.occupied_slices() {
            return Err(format!(
                "slot {slot}: {} occupied slices, {slices} from hosted widths",
                cluster.occupied_slices()
            ));
        }
    }
    let again = simulate_trace(config, &trace, 0).map_err(|e| e.to_string())?;
    let replay =
        simulate_trace(config, &trace_for_run(config, 0).map_err(|e| e.to_string())?, 0).map_err(|e| e.to_string())?;
    if again.result != replay.result || again.decisions != replay.decisions {
        return Err("same seed produced different runs".into());
    }
    Ok(())
}

pub fn check_simulation_invariants(cases: usize, rng: &mut impl Rng) -> CheckOutcome {
    let result = (0..cases).try_for_each(|_| {
        let config = random_config(rng);
        check_one_simulation(&config).map_err(|e| format!("{config:?}: {e}"))
    });
    outcome("simulation lifetimes, conservation, determinism", cases, result)
}

/// Every check, `cases` random instances each, drawn from `seed`.
pub fn run_all(cases: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = SimRng::seed_from_u64(seed);
    vec![
        check_oracle_equivalence(),
        check_score_bounds(),
        check_mfi_optimality(cases, &mut rng),
        check_scheduler_soundness(cases, &mut rng),
        check_reversibility(cases, &mut rng),
        check_simulation_invariants(cases.div_ceil(10), &mut rng),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for check in run_all(300, 11) {
            assert!(check.passed(), "{check}");
        }
    }

    #[test]
    fn exhaustive_mfi_on_empty_gpu() {
        let p = crate::mig_model::lookup_profile("1g.10gb").unwrap();
        assert_eq!(exhaustive_mfi(&ClusterState::new(2), p), Decision::Accept { gpu_id: 0, start_index: 6 });
        assert_eq!(exhaustive_mfi(&ClusterState::from_occupancies(&[Occupancy::FULL]), p), Decision::Reject);
    }
}
