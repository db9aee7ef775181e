use std::ffi::{CStr, CString};
use std::ptr;

use migsched_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(migsched_last_error()) }.to_string_lossy().into_owned()
}

fn occupancy(c: *const MigschedCluster, gpu: usize) -> String {
    let mut buf = [0 as std::ffi::c_char; 9];
    assert_eq!(unsafe { migsched_cluster_occupancy(c, gpu, buf.as_mut_ptr(), buf.len()) }, MigschedStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn mfi_handle_lifecycle() {
    unsafe {
        let c = migsched_cluster_new(2, cstr("mfi").as_ptr(), false);
        assert!(!c.is_null());
        assert_eq!(migsched_cluster_len(c), 2);
        let mut d = MigschedDecision::default();
        assert_eq!(migsched_cluster_schedule(c, cstr("1g.10gb").as_ptr(), 1, &mut d), MigschedStatus::Ok);
        assert_eq!(d, MigschedDecision { accepted: true, gpu_id: 0, start_index: 6 });
        assert_eq!(occupancy(c, 0), "......#.");
        assert_eq!(last_error(), "");

        let mut sev = -1.0;
        assert_eq!(migsched_cluster_severity(c, &mut sev), MigschedStatus::Ok);
        assert_eq!(sev, 3.5);

        assert_eq!(migsched_cluster_release(c, 0, 1), MigschedStatus::Ok);
        assert_eq!(occupancy(c, 0), "........");
        assert_eq!(migsched_cluster_release(c, 0, 1), MigschedStatus::UnknownInstance);
        assert!(!last_error().is_empty());
        migsched_cluster_free(c);
    }
}

#[test]
fn explicit_allocation_errors() {
    unsafe {
        let c = migsched_cluster_new(1, cstr("ff").as_ptr(), false);
        let p = cstr("2g.20gb");
        assert_eq!(migsched_cluster_allocate(c, 0, 6, p.as_ptr(), 1), MigschedStatus::InfeasibleIndex);
        assert_eq!(migsched_cluster_allocate(c, 0, 2, p.as_ptr(), 1), MigschedStatus::Ok);
        assert_eq!(migsched_cluster_allocate(c, 0, 2, p.as_ptr(), 2), MigschedStatus::SliceConflict);
        assert_eq!(migsched_cluster_allocate(c, 3, 0, p.as_ptr(), 2), MigschedStatus::InvalidArgument);
        assert_eq!(migsched_cluster_allocate(c, 0, 0, cstr("9g.90gb").as_ptr(), 2), MigschedStatus::UnknownProfile);
        assert!(last_error().contains("9g.90gb"));
        let mut d = MigschedDecision::default();
        assert_eq!(migsched_cluster_schedule(c, p.as_ptr(), 1, &mut d), MigschedStatus::SliceConflict);
        assert_eq!(migsched_cluster_schedule(c, cstr("7g.80gb").as_ptr(), 3, &mut d), MigschedStatus::Ok);
        assert!(!d.accepted);
        let mut small = [0 as std::ffi::c_char; 4];
        assert_eq!(migsched_cluster_occupancy(c, 0, small.as_mut_ptr(), small.len()), MigschedStatus::BufferTooSmall);
        migsched_cluster_free(c);
    }
}

#[test]
fn strict_round_robin_rejects_blocked_choice() {
    unsafe {
        let c = migsched_cluster_new(2, cstr("rr").as_ptr(), true);
        let one = cstr("1g.10gb");
        for (i, idx) in [0usize, 2, 4, 6].into_iter().enumerate() {
            assert_eq!(migsched_cluster_allocate(c, 0, idx, one.as_ptr(), 10 + i as u64), MigschedStatus::Ok);
        }
        let mut d = MigschedDecision::default();
        assert_eq!(migsched_cluster_schedule(c, cstr("1g.20gb").as_ptr(), 1, &mut d), MigschedStatus::Ok);
        assert!(!d.accepted);
        migsched_cluster_free(c);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        assert!(migsched_cluster_new(2, cstr("lottery").as_ptr(), false).is_null());
        assert!(last_error().contains("lottery"));
        assert!(migsched_cluster_new(0, cstr("mfi").as_ptr(), false).is_null());
        assert!(migsched_cluster_new(1, ptr::null(), false).is_null());
        migsched_cluster_free(ptr::null_mut());
        assert_eq!(migsched_cluster_len(ptr::null()), 0);
        let mut d = MigschedDecision::default();
        assert_eq!(
            migsched_cluster_schedule(ptr::null_mut(), cstr("1g.10gb").as_ptr(), 0, &mut d),
            MigschedStatus::NullPointer
        );
        let mut sev = 0.0;
        assert_eq!(migsched_cluster_severity(ptr::null(), &mut sev), MigschedStatus::NullPointer);
    }
}

#[test]
fn frag_score_from_string() {
    let mut out = 99;
    unsafe {
        assert_eq!(migsched_frag_score(cstr("........").as_ptr(), &mut out), MigschedStatus::Ok);
        assert_eq!(out, 0);
        assert_eq!(migsched_frag_score(cstr(".....#..").as_ptr(), &mut out), MigschedStatus::Ok);
        assert_eq!(out, 9);
        assert_eq!(migsched_frag_score(cstr("..#").as_ptr(), &mut out), MigschedStatus::InvalidArgument);
        assert_eq!(migsched_frag_score(ptr::null(), &mut out), MigschedStatus::NullPointer);
        assert_eq!(migsched_frag_score(cstr("........").as_ptr(), ptr::null_mut()), MigschedStatus::NullPointer);
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(migsched_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/migsched.h")).unwrap();
    for name in [
        "migsched_cluster_new",
        "migsched_cluster_free",
        "migsched_cluster_len",
        "migsched_cluster_schedule",
        "migsched_cluster_allocate",
        "migsched_cluster_release",
        "migsched_cluster_severity",
        "migsched_cluster_occupancy",
        "migsched_frag_score",
        "migsched_last_error",
        "migsched_version",
        "typedef struct MigschedCluster MigschedCluster",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
