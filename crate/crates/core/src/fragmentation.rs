//! Fragmentation predicate and score.
//!
//! A GPU is fragmented with respect to a profile when it has enough free
//! slices for the profile but every legal start index overlaps an allocated
//! slice. The score sums, over profiles that pass the free-slice precheck, the
//! memory-slice width of every blocked start index.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::mig_model::{profile_catalog, ClusterState, MigProfile, ModelError, Occupancy};

pub mod oracle;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FragScore(pub u32);

impl FragScore {
    /// Largest score any occupancy can reach: Σ_p |I_p|·w(p).
    pub const UPPER_BOUND: u32 = 41;

    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for FragScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn span_blocked(occupancy: Occupancy, start: usize, width: usize) -> bool {
    !occupancy.span_free(start, width).expect("catalog spans fit the gpu")
}

pub fn is_fragmented(occupancy: Occupancy, profile: &MigProfile) -> bool {
    profile.width() <= occupancy.free_slices()
        && profile.feasible_indexes.iter().all(|&i| span_blocked(occupancy, i as usize, profile.width()))
}

/// Score contribution of a single profile.
pub fn profile_contribution(occupancy: Occupancy, profile: &MigProfile) -> u32 {
    if profile.width() > occupancy.free_slices() {
        return 0;
    }
    profile
        .feasible_indexes
        .iter()
        .filter(|&&i| span_blocked(occupancy, i as usize, profile.width()))
        .map(|_| profile.mem_slices as u32)
        .sum()
}

pub fn frag_score(occupancy: Occupancy) -> FragScore {
    FragScore(profile_catalog().iter().map(|p| profile_contribution(occupancy, p)).sum())
}

/// [`frag_score`] memoized over all 256 occupancies, for scheduler and metric hot paths.
pub fn cached_frag_score(occupancy: Occupancy) -> FragScore {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    let table = TABLE.get_or_init(|| std::array::from_fn(|bits| frag_score(Occupancy::from_bits(bits as u8)).0 as u8));
    FragScore(table[occupancy.bits() as usize] as u32)
}

/// One blocked `(profile, index)` pair and the weight it adds to the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contribution {
    pub profile: &'static MigProfile,
    pub start_index: usize,
    pub weight: u32,
}

/// Every `(profile, index)` pair counted by [`frag_score`], in catalog then index order.
pub fn contributions(occupancy: Occupancy) -> Vec<Contribution> {
    let mut out = Vec::new();
    for profile in profile_catalog() {
        if profile.width() > occupancy.free_slices() {
            continue;
        }
        for &i in profile.feasible_indexes {
            if span_blocked(occupancy, i as usize, profile.width()) {
                out.push(Contribution { profile, start_index: i as usize, weight: profile.mem_slices as u32 });
            }
        }
    }
    out
}

/// Mean fragmentation score over every GPU of the cluster.
pub fn cluster_severity(cluster: &ClusterState) -> Result<f64, ModelError> {
    if cluster.is_empty() {
        return Err(ModelError::EmptyCluster);
    }
    let total: u64 = cluster.gpus().iter().map(|g| cached_frag_score(g.occupancy()).0 as u64).sum();
    Ok(total as f64 / cluster.len() as f64)
}
