//! C interface to the cluster model and schedulers.
//!
//! A `MigschedCluster` handle owns a cluster of GPUs and one scheduler. Every
//! fallible call returns a `MigschedStatus`; on failure the message is kept
//! per thread and readable through `migsched_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use migsched::{
    cluster_severity, frag_score, lookup_profile, ClusterState, Decision, InstanceId, MigProfile, ModelError,
    Occupancy, Placement, Scheduler, SchedulerKind, SchedulerPolicy,
};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigschedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownProfile = 3,
    InfeasibleIndex = 4,
    SliceConflict = 5,
    UnknownInstance = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Outcome of `migsched_cluster_schedule`. `gpu_id` and `start_index` are only set when accepted.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MigschedDecision {
    pub accepted: bool,
    pub gpu_id: usize,
    pub start_index: usize,
}

/// Opaque cluster handle.
pub struct MigschedCluster {
    cluster: ClusterState,
    scheduler: Scheduler,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: MigschedStatus, msg: impl std::fmt::Display) -> MigschedStatus {
    set_error(&msg.to_string());
    status
}

fn model_status(e: &ModelError) -> MigschedStatus {
    match e {
        ModelError::InfeasibleIndex { .. } | ModelError::SpanOutOfRange { .. } => MigschedStatus::InfeasibleIndex,
        ModelError::SliceConflict { .. } | ModelError::DuplicateInstance(_) => MigschedStatus::SliceConflict,
        ModelError::UnknownInstance(_) => MigschedStatus::UnknownInstance,
        ModelError::UnknownProfile(_) => MigschedStatus::UnknownProfile,
        _ => MigschedStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> MigschedStatus) -> MigschedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(MigschedStatus::Ok) => {
            set_error("");
            MigschedStatus::Ok
        }
        Ok(status) => status,
        Err(_) => fail(MigschedStatus::Internal, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a nul-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, MigschedStatus> {
    if s.is_null() {
        return Err(fail(MigschedStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(MigschedStatus::InvalidArgument, format!("{what} is not utf-8")))
}

unsafe fn read_profile(s: *const c_char) -> Result<&'static MigProfile, MigschedStatus> {
    let name = read_str(s, "profile")?;
    lookup_profile(name).map_err(|e| fail(MigschedStatus::UnknownProfile, e))
}

/// Creates a cluster of `gpus` empty GPUs driven by `scheduler` ("mfi", "ff", "rr", "bf-bi", "wf-bi").
/// Returns null on an unknown scheduler name or zero GPUs.
///
/// # Safety
/// `scheduler` must be null or a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_new(
    gpus: usize,
    scheduler: *const c_char,
    strict_first_choice: bool,
) -> *mut MigschedCluster {
    let result = catch_unwind(AssertUnwindSafe(|| {
        let name = read_str(scheduler, "scheduler").ok()?;
        let kind = match name.parse::<SchedulerKind>() {
            Ok(k) => k,
            Err(e) => {
                set_error(&e.to_string());
                return None;
            }
        };
        if gpus == 0 {
            set_error("cluster needs at least one gpu");
            return None;
        }
        let policy = SchedulerPolicy { strict_first_choice };
        Some(Box::new(MigschedCluster { cluster: ClusterState::new(gpus), scheduler: Scheduler::new(kind, policy) }))
    }));
    match result {
        Ok(Some(b)) => Box::into_raw(b),
        _ => ptr::null_mut(),
    }
}

/// # Safety
/// `cluster` must be null or a handle from `migsched_cluster_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_free(cluster: *mut MigschedCluster) {
    if !cluster.is_null() {
        drop(Box::from_raw(cluster));
    }
}

/// Number of GPUs; 0 for a null handle.
///
/// # Safety
/// `cluster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_len(cluster: *const MigschedCluster) -> usize {
    cluster.as_ref().map_or(0, |c| c.cluster.len())
}

/// Asks the handle's scheduler to place `profile` and commits an accepted placement under `workload_id`.
///
/// # Safety
/// `cluster` must be a live handle, `profile` a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_schedule(
    cluster: *mut MigschedCluster,
    profile: *const c_char,
    workload_id: u64,
    out: *mut MigschedDecision,
) -> MigschedStatus {
    guarded(|| {
        let (Some(c), false) = (cluster.as_mut(), out.is_null()) else {
            return fail(MigschedStatus::NullPointer, "cluster or out is null");
        };
        let profile = match read_profile(profile) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if c.cluster.gpus().iter().any(|g| g.instances().contains_key(&InstanceId(workload_id))) {
            return fail(MigschedStatus::SliceConflict, format!("workload {workload_id} is already hosted"));
        }
        let decision = c.scheduler.decide(&c.cluster, profile);
        let mut result = MigschedDecision::default();
        if let Decision::Accept { gpu_id, start_index } = decision {
            if let Err(e) = c.cluster.allocate(Placement { gpu_id, start_index, profile }, InstanceId(workload_id)) {
                return fail(model_status(&e), e);
            }
            result = MigschedDecision { accepted: true, gpu_id, start_index };
        }
        *out = result;
        MigschedStatus::Ok
    })
}

/// Places `profile` at an explicit position, bypassing the scheduler.
///
/// # Safety
/// `cluster` must be a live handle and `profile` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_allocate(
    cluster: *mut MigschedCluster,
    gpu_id: usize,
    start_index: usize,
    profile: *const c_char,
    workload_id: u64,
) -> MigschedStatus {
    guarded(|| {
        let Some(c) = cluster.as_mut() else {
            return fail(MigschedStatus::NullPointer, "cluster is null");
        };
        let profile = match read_profile(profile) {
            Ok(p) => p,
            Err(s) => return s,
        };
        if gpu_id >= c.cluster.len() {
            return fail(MigschedStatus::InvalidArgument, format!("no gpu {gpu_id}"));
        }
        match c.cluster.allocate(Placement { gpu_id, start_index, profile }, InstanceId(workload_id)) {
            Ok(()) => MigschedStatus::Ok,
            Err(e) => fail(model_status(&e), e),
        }
    })
}

/// # Safety
/// `cluster` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_release(
    cluster: *mut MigschedCluster,
    gpu_id: usize,
    workload_id: u64,
) -> MigschedStatus {
    guarded(|| {
        let Some(c) = cluster.as_mut() else {
            return fail(MigschedStatus::NullPointer, "cluster is null");
        };
        if gpu_id >= c.cluster.len() {
            return fail(MigschedStatus::InvalidArgument, format!("no gpu {gpu_id}"));
        }
        match c.cluster.release(gpu_id, InstanceId(workload_id)) {
            Ok(_) => MigschedStatus::Ok,
            Err(e) => fail(model_status(&e), e),
        }
    })
}

/// Mean fragmentation score over all GPUs.
///
/// # Safety
/// `cluster` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_severity(cluster: *const MigschedCluster, out: *mut f64) -> MigschedStatus {
    guarded(|| {
        let (Some(c), false) = (cluster.as_ref(), out.is_null()) else {
            return fail(MigschedStatus::NullPointer, "cluster or out is null");
        };
        match cluster_severity(&c.cluster) {
            Ok(s) => {
                *out = s;
                MigschedStatus::Ok
            }
            Err(e) => fail(model_status(&e), e),
        }
    })
}

/// Writes the occupancy of one GPU as 8 characters plus a nul (`.` free, `#` allocated).
/// `buf` must hold at least 9 bytes.
///
/// # Safety
/// `cluster` must be a live handle and `buf` writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn migsched_cluster_occupancy(
    cluster: *const MigschedCluster,
    gpu_id: usize,
    buf: *mut c_char,
    len: usize,
) -> MigschedStatus {
    guarded(|| {
        let (Some(c), false) = (cluster.as_ref(), buf.is_null()) else {
            return fail(MigschedStatus::NullPointer, "cluster or buf is null");
        };
        let gpu = match c.cluster.gpu(gpu_id) {
            Ok(g) => g,
            Err(e) => return fail(MigschedStatus::InvalidArgument, e),
        };
        let text = gpu.occupancy().to_string();
        if len < text.len() + 1 {
            return fail(MigschedStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast::<c_char>(), buf, text.len());
        *buf.add(text.len()) = 0;
        MigschedStatus::Ok
    })
}

/// Fragmentation score of an 8-character occupancy string.
///
/// # Safety
/// `occupancy` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn migsched_frag_score(occupancy: *const c_char, out: *mut u32) -> MigschedStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MigschedStatus::NullPointer, "out is null");
        }
        let text = match read_str(occupancy, "occupancy") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match text.parse::<Occupancy>() {
            Ok(o) => {
                *out = frag_score(o).0;
                MigschedStatus::Ok
            }
            Err(e) => fail(MigschedStatus::InvalidArgument, e),
        }
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn migsched_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn migsched_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
