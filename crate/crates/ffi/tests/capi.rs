use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use lcfc_ffi::*;

fn last_error() -> String {
    let p = lcfc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

/// Two tight groups far apart on a line.
fn blobs() -> (Vec<f64>, Vec<usize>) {
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for i in 0..20 {
        let c = i / 10;
        data.extend([c as f64 * 5.0 + (i % 10) as f64 * 0.01, 0.5]);
        truth.push(c);
    }
    (data, truth)
}

#[test]
fn reconstruct_cluster_and_score() {
    let (data, truth) = blobs();
    unsafe {
        let mut scheme = ptr::null_mut();
        assert_eq!(lcfc_scheme_new(0, 16, 3, 1, 1, &mut scheme), LcfcStatus::Ok);
        assert_eq!(lcfc_scheme_threshold(scheme), 3);

        let mut matrix = ptr::null_mut();
        let s = lcfc_reconstruct(scheme, data.as_ptr(), 20, 2, truth.as_ptr(), LCFC_PARTITION_SKEW, 1.0, 7, &mut matrix);
        assert_eq!(s, LcfcStatus::Ok, "{}", if s == LcfcStatus::Ok { String::new() } else { last_error() });
        assert_eq!(lcfc_matrix_n(matrix), 20);

        let mut buf = vec![0.0; 400];
        assert_eq!(lcfc_matrix_copy(matrix, buf.as_mut_ptr(), buf.len()), LcfcStatus::Ok);
        for i in 0..20 {
            for j in 0..20 {
                let exact: f64 = (0..2).map(|f| (data[2 * i + f] - data[2 * j + f]).powi(2)).sum();
                assert!((buf[i * 20 + j] - exact).abs() < 1e-3, "({i},{j}) {} vs {exact}", buf[i * 20 + j]);
            }
        }
        let mut v = 0.0;
        assert_eq!(lcfc_matrix_get(matrix, 0, 19, &mut v), LcfcStatus::Ok);
        assert_eq!(v, buf[19]);

        let mut labels = vec![0i64; 20];
        for backend in [LCFC_BACKEND_KM, LCFC_BACKEND_KMED, LCFC_BACKEND_SC, LCFC_BACKEND_HC] {
            assert_eq!(lcfc_cluster(matrix, backend, 2, 0, labels.as_mut_ptr(), 20), LcfcStatus::Ok);
            let mut kappa = 0.0;
            let mut nmi = 0.0;
            assert_eq!(lcfc_kappa(labels.as_ptr(), truth.as_ptr(), 20, &mut kappa), LcfcStatus::Ok);
            assert_eq!(lcfc_nmi(labels.as_ptr(), truth.as_ptr(), 20, &mut nmi), LcfcStatus::Ok);
            assert_eq!(kappa, 1.0);
            assert!((nmi - 1.0).abs() < 1e-12);
        }

        lcfc_matrix_free(matrix);
        lcfc_scheme_free(scheme);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut scheme = ptr::null_mut();
        assert_eq!(lcfc_scheme_new(0, 16, 2, 2, 2, &mut scheme), LcfcStatus::Infeasible);
        assert!(scheme.is_null());
        assert!(last_error().contains("infeasible"));

        assert_eq!(lcfc_scheme_new(0, 16, 3, 1, 1, ptr::null_mut()), LcfcStatus::NullPointer);

        assert_eq!(lcfc_scheme_new(0, 16, 3, 1, 1, &mut scheme), LcfcStatus::Ok);
        let mut matrix = ptr::null_mut();
        let data = [0.0; 6];
        let s = lcfc_reconstruct(scheme, data.as_ptr(), 3, 2, ptr::null(), LCFC_PARTITION_SKEW, 0.5, 0, &mut matrix);
        assert_eq!(s, LcfcStatus::InvalidArgument);
        assert!(last_error().contains("labels"));
        let s = lcfc_reconstruct(scheme, data.as_ptr(), 3, 2, ptr::null(), 9, 0.0, 0, &mut matrix);
        assert_eq!(s, LcfcStatus::InvalidArgument);
        let s = lcfc_reconstruct(scheme, ptr::null(), 3, 2, ptr::null(), LCFC_PARTITION_IID, 0.0, 0, &mut matrix);
        assert_eq!(s, LcfcStatus::NullPointer);
        lcfc_scheme_free(scheme);

        let dense = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(lcfc_matrix_from_dense(dense.as_ptr(), 2, &mut matrix), LcfcStatus::Ok);
        let mut small = [0.0; 3];
        assert_eq!(lcfc_matrix_copy(matrix, small.as_mut_ptr(), 3), LcfcStatus::BufferTooSmall);
        let mut v = 0.0;
        assert_eq!(lcfc_matrix_get(matrix, 2, 0, &mut v), LcfcStatus::InvalidArgument);
        let mut labels = [0i64; 2];
        assert_eq!(lcfc_cluster(matrix, 42, 1, 0, labels.as_mut_ptr(), 2), LcfcStatus::InvalidArgument);
        assert_eq!(lcfc_cluster(matrix, LCFC_BACKEND_KM, 5, 0, labels.as_mut_ptr(), 2), LcfcStatus::InvalidArgument);
        lcfc_matrix_free(matrix);

        lcfc_matrix_free(ptr::null_mut());
        lcfc_scheme_free(ptr::null_mut());
        assert_eq!(lcfc_matrix_n(ptr::null()), 0);
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(lcfc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lcfc.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["lcfc_scheme_new", "lcfc_reconstruct", "lcfc_cluster", "lcfc_last_error", "LCFC_STATUS_INFEASIBLE"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
