use std::ffi::{CStr, CString};
use std::ptr;

use agu_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(agu_last_error()) }.to_string_lossy().into_owned()
}

fn sbm() -> *mut AguGraph {
    let mut g = ptr::null_mut();
    let st = unsafe { agu_graph_generate_sbm(60, 3, 0.2, 0.01, 6, 2.0, 7, &mut g) };
    assert_eq!(st, AguStatus::Ok);
    g
}

#[test]
fn train_predict_unlearn_round_trip() {
    unsafe {
        let g = sbm();
        assert_eq!(agu_graph_num_nodes(g), 60);
        assert!(agu_graph_num_edges(g) > 0);

        let mut m = ptr::null_mut();
        assert_eq!(agu_model_train(g, AguArch::Gcn, 2, 16, 50, 1, &mut m), AguStatus::Ok);
        let mut f1 = 0.0;
        assert_eq!(agu_model_test_f1(m, g, &mut f1), AguStatus::Ok);
        assert!((0.0..=1.0).contains(&f1));

        let mut labels = vec![0u32; 60];
        assert_eq!(agu_model_predict(m, g, labels.as_mut_ptr(), 60), AguStatus::Ok);
        assert!(labels.iter().all(|&l| l < 3));
        assert_eq!(agu_model_predict(m, g, labels.as_mut_ptr(), 59), AguStatus::InvalidArgument);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.bin").to_str().unwrap()).unwrap();
        assert_eq!(agu_model_save(m, path.as_ptr()), AguStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(agu_model_load(path.as_ptr(), &mut back), AguStatus::Ok);
        let mut again = vec![0u32; 60];
        assert_eq!(agu_model_predict(back, g, again.as_mut_ptr(), 60), AguStatus::Ok);
        assert_eq!(labels, again);

        let mut r = ptr::null_mut();
        assert_eq!(agu_request_sample(g, AguRequestKind::Edge, 0.05, 3, &mut r), AguStatus::Ok);
        assert!(agu_request_len(r) > 0);

        let mut json = ptr::null_mut();
        assert_eq!(agu_neighbors_json(m, g, r, 0, &mut json), AguStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        agu_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["n_ac"].is_array());

        let mut u = ptr::null_mut();
        assert_eq!(agu_unlearn(m, g, r, 5, 0, &mut u), AguStatus::Ok);
        assert!(!u.is_null());

        agu_model_free(u);
        agu_model_free(back);
        agu_model_free(m);
        agu_request_free(r);
        agu_graph_free(g);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut g = ptr::null_mut();
        let missing = CString::new("/nonexistent/graph.tsv").unwrap();
        assert_eq!(agu_graph_load(missing.as_ptr(), ptr::null(), &mut g), AguStatus::Io);
        assert!(g.is_null());
        assert!(last_error().contains("nonexistent"));

        assert_eq!(agu_graph_load(ptr::null(), ptr::null(), &mut g), AguStatus::NullArgument);
        assert_eq!(
            agu_graph_generate_sbm(61, 3, 0.2, 0.01, 6, 2.0, 7, &mut g),
            AguStatus::Config
        );

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"AGUMODEL not really").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(agu_model_load(bad.as_ptr(), &mut m), AguStatus::Checkpoint);

        // Null handles are tolerated by queries and frees.
        assert_eq!(agu_graph_num_nodes(ptr::null()), 0);
        agu_graph_free(ptr::null_mut());
        agu_model_free(ptr::null_mut());
        agu_string_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/agu.h")).unwrap();
    for f in [
        "agu_last_error",
        "agu_graph_load",
        "agu_graph_generate_sbm",
        "agu_graph_free",
        "agu_request_load",
        "agu_request_sample",
        "agu_model_train",
        "agu_model_save",
        "agu_model_load",
        "agu_model_predict",
        "agu_unlearn",
        "agu_neighbors_json",
        "agu_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct AguGraph AguGraph;"));
}

/// Compiles `tests/smoke.c` against the generated header and the static
/// library. Skipped when no C compiler or archive is available.
#[test]
fn c_program_links_and_runs() {
    use std::path::PathBuf;
    use std::process::Command;

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.join("../../target"));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let archive = target.join(profile).join("libagu_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no archive at {} or no cc", archive.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("f1 "));
}
