//! MIG profile catalog and per-GPU slice occupancy.
//!
//! A GPU exposes [`SLICES_PER_GPU`] memory-slice positions. A profile occupies a
//! contiguous run of `mem_slices` positions starting at one of its feasible
//! indexes. Compute slices are carried as metadata only; every placement and
//! scoring rule works on the memory-slice vector.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Memory-slice positions per GPU (A100-80GB).
pub const SLICES_PER_GPU: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("span [{start}, {start}+{width}) does not fit in {SLICES_PER_GPU} slices")]
    SpanOutOfRange { start: usize, width: usize },
    #[error("index {index} is not a legal start index for profile {profile}")]
    InfeasibleIndex { profile: &'static str, index: usize },
    #[error("span [{start}, {start}+{width}) on gpu {gpu} overlaps an allocated slice")]
    SliceConflict { gpu: usize, start: usize, width: usize },
    #[error("instance {0} is already hosted")]
    DuplicateInstance(InstanceId),
    #[error("instance {0} is not hosted on this gpu")]
    UnknownInstance(InstanceId),
    #[error("gpu {0} does not exist")]
    UnknownGpu(usize),
    #[error("unknown MIG profile `{0}`")]
    UnknownProfile(String),
    #[error("malformed occupancy string `{0}`: expected 8 characters over '.' and '#'")]
    MalformedOccupancy(String),
    #[error("cluster must contain at least one gpu")]
    EmptyCluster,
}

/// A named MIG partition type.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct MigProfile {
    pub name: &'static str,
    pub compute_slices: u8,
    pub mem_slices: u8,
    pub feasible_indexes: &'static [u8],
}

impl MigProfile {
    pub fn width(&self) -> usize {
        self.mem_slices as usize
    }

    pub fn is_feasible_index(&self, index: usize) -> bool {
        self.feasible_indexes.iter().any(|&i| i as usize == index)
    }

    /// Position of the profile in [`profile_catalog`].
    pub fn catalog_index(&self) -> usize {
        CATALOG.iter().position(|p| p.name == self.name).expect("profile not from catalog")
    }
}

impl fmt::Display for MigProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

// 7g.80gb spans all eight memory slices: a full GPU.
static CATALOG: [MigProfile; 6] = [
    MigProfile { name: "1g.10gb", compute_slices: 1, mem_slices: 1, feasible_indexes: &[0, 1, 2, 3, 4, 5, 6] },
    MigProfile { name: "1g.20gb", compute_slices: 1, mem_slices: 2, feasible_indexes: &[0, 2, 4, 6] },
    MigProfile { name: "2g.20gb", compute_slices: 2, mem_slices: 2, feasible_indexes: &[0, 2, 4] },
    MigProfile { name: "3g.40gb", compute_slices: 3, mem_slices: 4, feasible_indexes: &[0, 4] },
    MigProfile { name: "4g.40gb", compute_slices: 4, mem_slices: 4, feasible_indexes: &[0] },
    MigProfile { name: "7g.80gb", compute_slices: 7, mem_slices: 8, feasible_indexes: &[0] },
];

/// The A100-80GB profiles, ascending by `(mem_slices, compute_slices)`.
pub fn profile_catalog() -> &'static [MigProfile] {
    &CATALOG
}

pub fn lookup_profile(name: &str) -> Result<&'static MigProfile, ModelError> {
    CATALOG.iter().find(|p| p.name == name).ok_or_else(|| ModelError::UnknownProfile(name.to_string()))
}

/// Occupancy of the eight memory-slice positions; bit `i` set means slice `i` is allocated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupancy(u8);

impl Occupancy {
    pub const EMPTY: Occupancy = Occupancy(0);
    pub const FULL: Occupancy = Occupancy(u8::MAX);

    pub const fn from_bits(bits: u8) -> Self {
        Occupancy(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn from_positions(positions: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = 0u8;
        for p in positions {
            assert!(p < SLICES_PER_GPU, "slice position {p} out of range");
            bits |= 1 << p;
        }
        Occupancy(bits)
    }

    pub fn to_array(self) -> [bool; SLICES_PER_GPU] {
        std::array::from_fn(|i| self.is_occupied(i))
    }

    pub fn is_occupied(self, position: usize) -> bool {
        position < SLICES_PER_GPU && self.0 & (1 << position) != 0
    }

    pub fn occupied_count(self) -> usize {
        self.0.count_ones() as usize
    }

    /// ΔS_m: number of unallocated slices.
    pub fn free_slices(self) -> usize {
        SLICES_PER_GPU - self.occupied_count()
    }

    /// Bit mask covering `start..start + width`.
    pub fn span_mask(start: usize, width: usize) -> Result<u8, ModelError> {
        if width == 0 || start + width > SLICES_PER_GPU {
            return Err(ModelError::SpanOutOfRange { start, width });
        }
        Ok(((1u16 << width) - 1).wrapping_shl(start as u32) as u8)
    }

    pub fn span_free(self, start: usize, width: usize) -> Result<bool, ModelError> {
        Ok(self.0 & Self::span_mask(start, width)? == 0)
    }

    /// Occupancy with `mask` set, used for dry-run allocations.
    pub const fn with_mask(self, mask: u8) -> Self {
        Occupancy(self.0 | mask)
    }
}

impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..SLICES_PER_GPU {
            f.write_str(if self.is_occupied(i) { "#" } else { "." })?;
        }
        Ok(())
    }
}

impl FromStr for Occupancy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ModelError::MalformedOccupancy(s.to_string());
        if s.chars().count() != SLICES_PER_GPU {
            return Err(malformed());
        }
        let mut bits = 0u8;
        for (i, c) in s.chars().enumerate() {
            match c {
                '.' => {}
                '#' => bits |= 1 << i,
                _ => return Err(malformed()),
            }
        }
        Ok(Occupancy(bits))
    }
}

/// Caller-chosen identity of a hosted instance (the workload id in the simulator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostedInstance {
    pub profile: &'static MigProfile,
    pub start_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub gpu_id: usize,
    pub start_index: usize,
    pub profile: &'static MigProfile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpuState {
    gpu_id: usize,
    occupancy: Occupancy,
    instances: BTreeMap<InstanceId, HostedInstance>,
}

impl GpuState {
    pub fn new(gpu_id: usize) -> Self {
        GpuState { gpu_id, occupancy: Occupancy::EMPTY, instances: BTreeMap::new() }
    }

    pub fn id(&self) -> usize {
        self.gpu_id
    }

    pub fn occupancy(&self) -> Occupancy {
        self.occupancy
    }

    pub fn instances(&self) -> &BTreeMap<InstanceId, HostedInstance> {
        &self.instances
    }

    pub fn free_slices(&self) -> usize {
        self.occupancy.free_slices()
    }

    pub fn is_active(&self) -> bool {
        !self.instances.is_empty()
    }

    pub fn span_free(&self, start: usize, width: usize) -> Result<bool, ModelError> {
        self.occupancy.span_free(start, width)
    }

    /// Checks that `profile` may start at `start_index` on this GPU right now.
    pub fn check_placement(&self, profile: &'static MigProfile, start_index: usize) -> Result<u8, ModelError> {
        if !profile.is_feasible_index(start_index) {
            return Err(ModelError::InfeasibleIndex { profile: profile.name, index: start_index });
        }
        let mask = Occupancy::span_mask(start_index, profile.width())?;
        if self.occupancy.bits() & mask != 0 {
            return Err(ModelError::SliceConflict { gpu: self.gpu_id, start: start_index, width: profile.width() });
        }
        Ok(mask)
    }

    pub fn allocate(
        &mut self,
        profile: &'static MigProfile,
        start_index: usize,
        id: InstanceId,
    ) -> Result<(), ModelError> {
        let mask = self.check_placement(profile, start_index)?;
        if self.instances.contains_key(&id) {
            return Err(ModelError::DuplicateInstance(id));
        }
        self.occupancy = self.occupancy.with_mask(mask);
        self.instances.insert(id, HostedInstance { profile, start_index });
        Ok(())
    }

    pub fn release(&mut self, id: InstanceId) -> Result<HostedInstance, ModelError> {
        let hosted = self.instances.remove(&id).ok_or(ModelError::UnknownInstance(id))?;
        let mask = Occupancy::span_mask(hosted.start_index, hosted.profile.width())
            .expect("hosted span validated at allocation");
        debug_assert_eq!(self.occupancy.bits() & mask, mask);
        self.occupancy = Occupancy::from_bits(self.occupancy.bits() & !mask);
        Ok(hosted)
    }

    /// `name@index` for each hosted instance, ordered by start index.
    pub fn describe_instances(&self) -> Vec<String> {
        let mut hosted: Vec<_> = self.instances.values().collect();
        hosted.sort_by_key(|h| h.start_index);
        hosted.iter().map(|h| format!("{}@{}", h.profile.name, h.start_index)).collect()
    }
}

impl fmt::Display for GpuState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.occupancy)?;
        let instances = self.describe_instances();
        if !instances.is_empty() {
            write!(f, " {}", instances.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    gpus: Vec<GpuState>,
}

impl ClusterState {
    /// `size` empty GPUs with ids `0..size`.
    pub fn new(size: usize) -> Self {
        ClusterState { gpus: (0..size).map(GpuState::new).collect() }
    }

    /// Cluster whose GPUs carry the given raw occupancies and no instance records.
    /// Only schedulers and scoring may be applied to it; `release` has nothing to find.
    pub fn from_occupancies(occupancies: &[Occupancy]) -> Self {
        let gpus = occupancies
            .iter()
            .enumerate()
            .map(|(id, &occupancy)| GpuState { gpu_id: id, occupancy, instances: BTreeMap::new() })
            .collect();
        ClusterState { gpus }
    }

    pub fn len(&self) -> usize {
        self.gpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gpus.is_empty()
    }

    pub fn gpus(&self) -> &[GpuState] {
        &self.gpus
    }

    pub fn gpu(&self, gpu_id: usize) -> Result<&GpuState, ModelError> {
        self.gpus.get(gpu_id).ok_or(ModelError::UnknownGpu(gpu_id))
    }

    pub fn occupancies(&self) -> Vec<Occupancy> {
        self.gpus.iter().map(GpuState::occupancy).collect()
    }

    pub fn allocate(&mut self, placement: Placement, id: InstanceId) -> Result<(), ModelError> {
        let gpu = self.gpus.get_mut(placement.gpu_id).ok_or(ModelError::UnknownGpu(placement.gpu_id))?;
        gpu.allocate(placement.profile, placement.start_index, id)
    }

    pub fn release(&mut self, gpu_id: usize, id: InstanceId) -> Result<HostedInstance, ModelError> {
        self.gpus.get_mut(gpu_id).ok_or(ModelError::UnknownGpu(gpu_id))?.release(id)
    }

    pub fn occupied_slices(&self) -> usize {
        self.gpus.iter().map(|g| g.occupancy.occupied_count()).sum()
    }

    pub fn active_gpus(&self) -> usize {
        self.gpus.iter().filter(|g| g.is_active()).count()
    }

    pub fn hosted_instances(&self) -> usize {
        self.gpus.iter().map(|g| g.instances.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str) -> &'static MigProfile {
        lookup_profile(name).unwrap()
    }

    #[test]
    fn catalog_matches_a100_table() {
        let names: Vec<_> = profile_catalog().iter().map(|p| p.name).collect();
        assert_eq!(names, ["1g.10gb", "1g.20gb", "2g.20gb", "3g.40gb", "4g.40gb", "7g.80gb"]);
        assert_eq!(p("3g.40gb").mem_slices, 4);
        assert_eq!(p("3g.40gb").feasible_indexes, &[0, 4]);
        assert_eq!(p("1g.10gb").feasible_indexes, &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(p("7g.80gb").mem_slices, 8);
        assert!(matches!(lookup_profile("5g.50gb"), Err(ModelError::UnknownProfile(_))));
    }

    #[test]
    fn catalog_invariants() {
        let keys: Vec<_> = profile_catalog().iter().map(|p| (p.mem_slices, p.compute_slices)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for prof in profile_catalog() {
            let (g, mem) = prof.name.split_once("g.").unwrap();
            assert_eq!(g.parse::<u8>().unwrap(), prof.compute_slices);
            assert_eq!(mem.strip_suffix("gb").unwrap().parse::<u32>().unwrap(), 10 * prof.mem_slices as u32);
            assert!((1..=7).contains(&prof.compute_slices));
            for &i in prof.feasible_indexes {
                assert!(i as usize + prof.width() <= SLICES_PER_GPU);
            }
        }
    }

    #[test]
    fn span_free_cases() {
        assert!(Occupancy::EMPTY.span_free(0, 8).unwrap());
        let occ = Occupancy::from_positions([5]);
        assert!(!occ.span_free(4, 2).unwrap());
        assert!(occ.span_free(0, 4).unwrap());
        assert_eq!(occ.span_free(7, 2), Err(ModelError::SpanOutOfRange { start: 7, width: 2 }));
    }

    #[test]
    fn allocate_sets_span() {
        let mut gpu = GpuState::new(0);
        gpu.allocate(p("3g.40gb"), 4, InstanceId(1)).unwrap();
        assert_eq!(gpu.occupancy().to_string(), "....####");

        let mut gpu = GpuState::new(0);
        assert_eq!(
            gpu.allocate(p("2g.20gb"), 1, InstanceId(1)),
            Err(ModelError::InfeasibleIndex { profile: "2g.20gb", index: 1 })
        );

        gpu.allocate(p("7g.80gb"), 0, InstanceId(2)).unwrap();
        assert_eq!(gpu.occupancy(), Occupancy::FULL);
        assert!(matches!(gpu.allocate(p("1g.10gb"), 3, InstanceId(3)), Err(ModelError::SliceConflict { .. })));
    }

    #[test]
    fn duplicate_instance_rejected() {
        let mut gpu = GpuState::new(0);
        gpu.allocate(p("1g.10gb"), 0, InstanceId(1)).unwrap();
        assert_eq!(gpu.allocate(p("1g.10gb"), 1, InstanceId(1)), Err(ModelError::DuplicateInstance(InstanceId(1))));
        assert_eq!(gpu.occupancy().to_string(), "#.......");
    }

    #[test]
    fn release_clears_exactly_the_span() {
        let mut gpu = GpuState::new(0);
        gpu.allocate(p("1g.10gb"), 3, InstanceId(7)).unwrap();
        gpu.release(InstanceId(7)).unwrap();
        assert_eq!(gpu.occupancy(), Occupancy::EMPTY);

        gpu.allocate(p("1g.20gb"), 0, InstanceId(1)).unwrap();
        gpu.allocate(p("1g.10gb"), 5, InstanceId(2)).unwrap();
        gpu.release(InstanceId(1)).unwrap();
        assert_eq!(gpu.occupancy(), Occupancy::from_positions([5]));
        assert_eq!(gpu.to_string(), ".....#.. 1g.10gb@5");

        let mut empty = GpuState::new(0);
        assert_eq!(empty.release(InstanceId(9)), Err(ModelError::UnknownInstance(InstanceId(9))));
    }

    #[test]
    fn free_slice_counts() {
        assert_eq!(Occupancy::EMPTY.free_slices(), 8);
        assert_eq!(Occupancy::from_positions([5]).free_slices(), 7);
        assert_eq!(Occupancy::FULL.free_slices(), 0);
    }

    #[test]
    fn occupancy_text_encoding() {
        let occ: Occupancy = ".....#..".parse().unwrap();
        assert_eq!(occ, Occupancy::from_positions([5]));
        assert_eq!(occ.to_string(), ".....#..");
        assert!(".....#.".parse::<Occupancy>().is_err());
        assert!(".....x..".parse::<Occupancy>().is_err());
    }

    #[test]
    fn cluster_ids_are_dense() {
        let cluster = ClusterState::new(4);
        let ids: Vec<_> = cluster.gpus().iter().map(GpuState::id).collect();
        assert_eq!(ids, [0, 1, 2, 3]);
        assert_eq!(cluster.gpu(4), Err(ModelError::UnknownGpu(4)));
    }
}
