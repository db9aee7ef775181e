//! Placement heuristics.
//!
//! Every scheduler is a pure decision over a borrowed [`ClusterState`]; the
//! caller commits an accepted placement. Round robin additionally threads a
//! cursor through successive calls.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fragmentation::cached_frag_score;
use crate::mig_model::{profile_catalog, ClusterState, GpuState, MigProfile, Occupancy, Placement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept { gpu_id: usize, start_index: usize },
    Reject,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        matches!(self, Decision::Accept { .. })
    }

    pub fn placement(self, profile: &'static MigProfile) -> Option<Placement> {
        match self {
            Decision::Accept { gpu_id, start_index } => Some(Placement { gpu_id, start_index, profile }),
            Decision::Reject => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "mfi")]
    Mfi,
    #[serde(rename = "ff")]
    FirstFit,
    #[serde(rename = "rr")]
    RoundRobin,
    #[serde(rename = "bf-bi")]
    BestFitBestIndex,
    #[serde(rename = "wf-bi")]
    WorstFitBestIndex,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Mfi,
        SchedulerKind::BestFitBestIndex,
        SchedulerKind::WorstFitBestIndex,
        SchedulerKind::FirstFit,
        SchedulerKind::RoundRobin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::Mfi => "mfi",
            SchedulerKind::FirstFit => "ff",
            SchedulerKind::RoundRobin => "rr",
            SchedulerKind::BestFitBestIndex => "bf-bi",
            SchedulerKind::WorstFitBestIndex => "wf-bi",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchedulerKind::Mfi => "MFI",
            SchedulerKind::FirstFit => "FF",
            SchedulerKind::RoundRobin => "RR",
            SchedulerKind::BestFitBestIndex => "BF-BI",
            SchedulerKind::WorstFitBestIndex => "WF-BI",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scheduler `{0}` (expected one of mfi, ff, rr, bf-bi, wf-bi)")]
pub struct UnknownScheduler(pub String);

impl FromStr for SchedulerKind {
    type Err = UnknownScheduler;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mfi" => Ok(SchedulerKind::Mfi),
            "ff" => Ok(SchedulerKind::FirstFit),
            "rr" => Ok(SchedulerKind::RoundRobin),
            "bf-bi" | "bf_bi" => Ok(SchedulerKind::BestFitBestIndex),
            "wf-bi" | "wf_bi" => Ok(SchedulerKind::WorstFitBestIndex),
            _ => Err(UnknownScheduler(s.to_string())),
        }
    }
}

/// Baseline behavior when the GPU picked by the selection rule has enough free
/// slices but no legal free span.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerPolicy {
    /// Reject instead of moving on to the next candidate GPU. MFI ignores it.
    pub strict_first_choice: bool,
}

/// Change in fragmentation score a dry-run placement would cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragDelta {
    pub gpu_id: usize,
    pub start_index: usize,
    pub delta: i64,
}

fn span_mask(profile: &MigProfile, index: usize) -> u8 {
    Occupancy::span_mask(index, profile.width()).expect("catalog spans fit the gpu")
}

fn has_room(gpu: &GpuState, profile: &MigProfile) -> bool {
    profile.width() <= gpu.free_slices()
}

fn first_free_index(
    occupancy: Occupancy,
    profile: &MigProfile,
    order: impl IntoIterator<Item = usize>,
) -> Option<usize> {
    order.into_iter().find(|&i| occupancy.bits() & span_mask(profile, i) == 0)
}

fn ascending(profile: &MigProfile) -> impl Iterator<Item = usize> + '_ {
    profile.feasible_indexes.iter().map(|&i| i as usize)
}

/// Legal indexes in preference order for the best-index baselines: highest first.
pub fn best_index_order(profile: &MigProfile) -> Vec<usize> {
    let mut order: Vec<usize> = ascending(profile).collect();
    order.sort_unstable_by(|a, b| b.cmp(a));
    order
}

/// Dry-run deltas for every GPU with enough free slices and every legal index whose span is free.
pub fn mfi_deltas(cluster: &ClusterState, profile: &MigProfile) -> Vec<FragDelta> {
    let mut out = Vec::new();
    for gpu in cluster.gpus().iter().filter(|g| has_room(g, profile)) {
        let occupancy = gpu.occupancy();
        let before = cached_frag_score(occupancy).0 as i64;
        for index in ascending(profile) {
            let mask = span_mask(profile, index);
            if occupancy.bits() & mask != 0 {
                continue;
            }
            let after = cached_frag_score(occupancy.with_mask(mask)).0 as i64;
            out.push(FragDelta { gpu_id: gpu.id(), start_index: index, delta: after - before });
        }
    }
    out
}

type MfiTable = [[Option<(i8, u8)>; 6]; 256];

/// Best dry-run outcome `(delta, index)` per occupancy and catalog profile, lowest index
/// among equal deltas; `None` when no legal span is free.
fn mfi_table() -> &'static MfiTable {
    static TABLE: OnceLock<MfiTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|bits| {
            let occupancy = Occupancy::from_bits(bits as u8);
            let cluster = ClusterState::from_occupancies(&[occupancy]);
            std::array::from_fn(|p| {
                mfi_deltas(&cluster, &profile_catalog()[p])
                    .into_iter()
                    .min_by_key(|d| (d.delta, d.start_index))
                    .map(|d| (d.delta as i8, d.start_index as u8))
            })
        })
    })
}

/// Minimum Fragmentation Increment: the feasible `(gpu, index)` whose dry run raises
/// the score least. Ties go to the lowest gpu id, then the lowest index.
pub fn mfi_schedule(cluster: &ClusterState, profile: &MigProfile) -> Decision {
    let column = profile.catalog_index();
    let table = mfi_table();
    let mut best: Option<(i8, usize, u8)> = None;
    for gpu in cluster.gpus() {
        if let Some((delta, index)) = table[gpu.occupancy().bits() as usize][column] {
            if best.is_none_or(|(d, _, _)| delta < d) {
                best = Some((delta, gpu.id(), index));
            }
        }
    }
    match best {
        Some((_, gpu_id, start_index)) => Decision::Accept { gpu_id, start_index: start_index as usize },
        None => Decision::Reject,
    }
}

/// Scans `order` for the first GPU with enough free slices and places at its first
/// free index; under `strict_first_choice` a blocked first candidate rejects.
fn scan_in_order<'a>(
    gpus: impl Iterator<Item = &'a GpuState>,
    profile: &MigProfile,
    index_order: &[usize],
    policy: SchedulerPolicy,
) -> Decision {
    for gpu in gpus.filter(|g| has_room(g, profile)) {
        match first_free_index(gpu.occupancy(), profile, index_order.iter().copied()) {
            Some(start_index) => return Decision::Accept { gpu_id: gpu.id(), start_index },
            None if policy.strict_first_choice => return Decision::Reject,
            None => {}
        }
    }
    Decision::Reject
}

pub fn ff_schedule(cluster: &ClusterState, profile: &MigProfile, policy: SchedulerPolicy) -> Decision {
    let order: Vec<usize> = ascending(profile).collect();
    scan_in_order(cluster.gpus().iter(), profile, &order, policy)
}

/// Round robin from `cursor`, wrapping. Returns the decision and the next cursor.
pub fn rr_schedule(
    cursor: usize,
    cluster: &ClusterState,
    profile: &MigProfile,
    policy: SchedulerPolicy,
) -> (Decision, usize) {
    let m = cluster.len();
    if m == 0 {
        return (Decision::Reject, cursor);
    }
    let start = cursor % m;
    let gpus = cluster.gpus();
    let order: Vec<usize> = ascending(profile).collect();
    let decision = scan_in_order((0..m).map(|k| &gpus[(start + k) % m]), profile, &order, policy);
    match decision {
        Decision::Accept { gpu_id, .. } => (decision, (gpu_id + 1) % m),
        Decision::Reject => (decision, cursor),
    }
}

/// Shared body of BF-BI and WF-BI: rank GPUs by free slices left after placing,
/// then place at the first free index in [`best_index_order`].
fn fit_best_index(
    cluster: &ClusterState,
    profile: &MigProfile,
    policy: SchedulerPolicy,
    prefer_fuller: bool,
) -> Decision {
    let order = best_index_order(profile);
    let mut best: Option<(usize, usize, Option<usize>)> = None;
    for gpu in cluster.gpus().iter().filter(|g| has_room(g, profile)) {
        let index = first_free_index(gpu.occupancy(), profile, order.iter().copied());
        if index.is_none() && !policy.strict_first_choice {
            continue;
        }
        let left = gpu.free_slices() - profile.width();
        let better = match best {
            None => true,
            Some((b, _, _)) if prefer_fuller => left < b,
            Some((b, _, _)) => left > b,
        };
        if better {
            best = Some((left, gpu.id(), index));
        }
    }
    match best {
        Some((_, gpu_id, Some(start_index))) => Decision::Accept { gpu_id, start_index },
        _ => Decision::Reject,
    }
}

pub fn bfbi_schedule(cluster: &ClusterState, profile: &MigProfile, policy: SchedulerPolicy) -> Decision {
    fit_best_index(cluster, profile, policy, true)
}

pub fn wfbi_schedule(cluster: &ClusterState, profile: &MigProfile, policy: SchedulerPolicy) -> Decision {
    fit_best_index(cluster, profile, policy, false)
}

/// A scheduler kind together with the state it carries between decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduler {
    kind: SchedulerKind,
    policy: SchedulerPolicy,
    cursor: usize,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, policy: SchedulerPolicy) -> Self {
        Scheduler { kind, policy, cursor: 0 }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    /// Round-robin cursor; always 0 for the other kinds.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn decide(&mut self, cluster: &ClusterState, profile: &MigProfile) -> Decision {
        match self.kind {
            SchedulerKind::Mfi => mfi_schedule(cluster, profile),
            SchedulerKind::FirstFit => ff_schedule(cluster, profile, self.policy),
            SchedulerKind::RoundRobin => {
                let (decision, cursor) = rr_schedule(self.cursor, cluster, profile, self.policy);
                self.cursor = cursor;
                decision
            }
            SchedulerKind::BestFitBestIndex => bfbi_schedule(cluster, profile, self.policy),
            SchedulerKind::WorstFitBestIndex => wfbi_schedule(cluster, profile, self.policy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mig_model::lookup_profile;

    fn p(name: &str) -> &'static MigProfile {
        lookup_profile(name).unwrap()
    }

    fn cluster(occ: &[&str]) -> ClusterState {
        let occ: Vec<Occupancy> = occ.iter().map(|s| s.parse().unwrap()).collect();
        ClusterState::from_occupancies(&occ)
    }

    fn accept(gpu_id: usize, start_index: usize) -> Decision {
        Decision::Accept { gpu_id, start_index }
    }

    const SKIP: SchedulerPolicy = SchedulerPolicy { strict_first_choice: false };
    const STRICT: SchedulerPolicy = SchedulerPolicy { strict_first_choice: true };

    #[test]
    fn mfi_prefers_index_six_on_empty_gpu() {
        let c = ClusterState::new(2);
        let deltas: Vec<_> = mfi_deltas(&c, p("1g.10gb"))
            .into_iter()
            .filter(|d| d.gpu_id == 0)
            .map(|d| (d.start_index, d.delta))
            .collect();
        assert_eq!(deltas, [(0, 13), (1, 13), (2, 13), (3, 13), (4, 9), (5, 9), (6, 7)]);
        assert_eq!(mfi_schedule(&c, p("1g.10gb")), accept(0, 6));
    }

    #[test]
    fn mfi_rejects_on_full_cluster() {
        let c = cluster(&["########", "########"]);
        for prof in crate::profile_catalog() {
            assert_eq!(mfi_schedule(&c, prof), Decision::Reject);
        }
    }

    #[test]
    fn mfi_skips_gpu_with_blocked_index() {
        let c = cluster(&["##......", "........"]);
        assert_eq!(mfi_schedule(&c, p("4g.40gb")), accept(1, 0));
    }

    #[test]
    fn first_fit_cases() {
        assert_eq!(ff_schedule(&ClusterState::new(2), p("2g.20gb"), SKIP), accept(0, 0));
        let c = cluster(&["#.#.#.#.", "........"]);
        assert_eq!(ff_schedule(&c, p("1g.20gb"), SKIP), accept(1, 0));
        assert_eq!(ff_schedule(&c, p("1g.20gb"), STRICT), Decision::Reject);
        assert_eq!(ff_schedule(&cluster(&["########"]), p("1g.10gb"), SKIP), Decision::Reject);
    }

    #[test]
    fn round_robin_cases() {
        let c = ClusterState::new(3);
        assert_eq!(rr_schedule(0, &c, p("1g.10gb"), SKIP), (accept(0, 0), 1));
        let c = cluster(&["........", "........", "########"]);
        assert_eq!(rr_schedule(2, &c, p("1g.10gb"), SKIP), (accept(0, 0), 1));
        let full = cluster(&["########", "########", "########"]);
        assert_eq!(rr_schedule(2, &full, p("1g.10gb"), SKIP), (Decision::Reject, 2));
    }

    #[test]
    fn best_index_orders() {
        assert_eq!(best_index_order(p("1g.10gb")), [6, 5, 4, 3, 2, 1, 0]);
        assert_eq!(best_index_order(p("3g.40gb")), [4, 0]);
        assert_eq!(best_index_order(p("7g.80gb")), [0]);
    }

    #[test]
    fn best_fit_cases() {
        let c = cluster(&["####....", "........"]);
        assert_eq!(bfbi_schedule(&c, p("2g.20gb"), SKIP), accept(0, 4));
        assert_eq!(bfbi_schedule(&ClusterState::new(1), p("1g.10gb"), SKIP), accept(0, 6));
        assert_eq!(bfbi_schedule(&cluster(&["########"]), p("1g.10gb"), SKIP), Decision::Reject);
    }

    #[test]
    fn worst_fit_cases() {
        let c = cluster(&["####....", "........"]);
        assert_eq!(wfbi_schedule(&c, p("2g.20gb"), SKIP), accept(1, 4));
        assert_eq!(wfbi_schedule(&ClusterState::new(2), p("1g.10gb"), SKIP), accept(0, 6));
        assert_eq!(wfbi_schedule(&cluster(&["########"]), p("1g.10gb"), SKIP), Decision::Reject);
    }

    #[test]
    fn strict_best_fit_fails_on_blocked_choice() {
        // gpu0 has 4 free slices but no free 1g.20gb span; it is the best fit.
        let c = cluster(&["#.#.#.#.", "##......"]);
        assert_eq!(bfbi_schedule(&c, p("1g.20gb"), SKIP), accept(1, 6));
        assert_eq!(bfbi_schedule(&c, p("1g.20gb"), STRICT), Decision::Reject);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SchedulerKind::ALL {
            assert_eq!(kind.as_str().parse::<SchedulerKind>(), Ok(kind));
        }
        assert!("lifo".parse::<SchedulerKind>().is_err());
    }
}
