use std::ffi::{CStr, CString};
use std::ptr;

use grokforge_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = gf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn add(g: *mut GfGraph, h: &str, r: &str, t: &str) -> GfStatus {
    gf_graph_add_fact(g, c(h).as_ptr(), c(r).as_ptr(), c(t).as_ptr())
}

#[test]
fn example_graph_ratio_through_the_abi() {
    unsafe {
        let g = gf_graph_new();
        assert_eq!(add(g, "Michelle", "wife of", "Obama"), GfStatus::Ok);
        assert_eq!(add(g, "Michelle", "born in", "1964"), GfStatus::Ok);
        assert_eq!(add(g, "Mary Poppins", "aired in", "1964"), GfStatus::Ok);
        assert_eq!(add(g, "Mary Poppins", "aired in", "1964"), GfStatus::Ok);
        assert_eq!(gf_graph_node_count(g), 4);
        assert_eq!(gf_graph_edge_count(g), 3);

        let (mut num, mut den) = (0u64, 0u64);
        assert_eq!(
            gf_graph_phi(g, 2, false, GfMode::Undirected, &mut num, &mut den),
            GfStatus::Ok
        );
        assert_eq!((num, den), (2, 3));

        add(g, "Michelle", "educated at", "Princeton University");
        add(g, "The Beatles", "debuted in", "1964");
        assert_eq!(
            gf_graph_phi(g, 2, false, GfMode::Undirected, &mut num, &mut den),
            GfStatus::Ok
        );
        assert_eq!((num, den), (6, 5));

        let mut json = ptr::null_mut();
        assert_eq!(
            gf_graph_phi_json(g, 2, false, GfMode::Undirected, &mut json),
            GfStatus::Ok
        );
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        gf_string_free(json);
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["phi"], "6/5");
        gf_graph_free(g);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let g = gf_graph_new();
        assert_eq!(add(g, "A", "r", "A"), GfStatus::InvalidFact);
        assert!(last_error().contains('A'));
        assert_eq!(
            gf_graph_add_fact(g, ptr::null(), c("r").as_ptr(), c("B").as_ptr()),
            GfStatus::NullPointer
        );
        let bad = [0xffu8, 0];
        assert_eq!(
            gf_graph_add_fact(g, bad.as_ptr().cast(), c("r").as_ptr(), c("B").as_ptr()),
            GfStatus::InvalidUtf8
        );
        let (mut num, mut den) = (0u64, 0u64);
        assert_eq!(
            gf_graph_phi(g, 2, false, GfMode::Directed, &mut num, &mut den),
            GfStatus::InvalidParameter
        );
        assert_eq!(
            gf_graph_phi(ptr::null(), 2, false, GfMode::Directed, &mut num, &mut den),
            GfStatus::NullPointer
        );
        add(g, "A", "r", "B");
        assert_eq!(
            gf_graph_phi(g, 1, false, GfMode::Directed, &mut num, &mut den),
            GfStatus::InvalidParameter
        );
        gf_graph_free(g);
        gf_graph_free(ptr::null_mut());
        gf_string_free(ptr::null_mut());

        let mut out = ptr::null_mut();
        assert_eq!(
            gf_graph_load_tsv(c("/nonexistent/graph.tsv").as_ptr(), &mut out),
            GfStatus::Io
        );
        assert!(out.is_null());
    }
}

#[test]
fn load_tsv_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.tsv");
    std::fs::write(&path, "a\tr\tb\nb\tr\tc\n").unwrap();
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(
            gf_graph_load_tsv(c(path.to_str().unwrap()).as_ptr(), &mut g),
            GfStatus::Ok
        );
        let (mut num, mut den) = (0u64, 0u64);
        assert_eq!(
            gf_graph_phi(g, 2, false, GfMode::Directed, &mut num, &mut den),
            GfStatus::Ok
        );
        assert_eq!((num, den), (1, 2));
        gf_graph_free(g);
    }
}

#[test]
fn bounds_through_the_abi() {
    unsafe {
        let mut x = 0.0;
        assert_eq!(gf_expected_path_count(1000, 3, 2, 1, &mut x), GfStatus::Ok);
        assert!((x - 1500.0).abs() < 1e-9);
        assert_eq!(gf_phi_upper_bound(0, 2, 1, 3, &mut x), GfStatus::Ok);
        assert!((x - 4.0).abs() < 1e-12);
        assert_eq!(gf_expected_phi(40, 2, 1, 3, &mut x), GfStatus::Ok);
        assert!(x > 3.0 && x < 4.0);
        assert_eq!(gf_expected_phi(40, 2, 0, 3, &mut x), GfStatus::InvalidParameter);

        let mut nodes = 0u64;
        assert_eq!(gf_min_node_count(18, 5, 2, 1, 3, 1_000_000, &mut nodes), GfStatus::Ok);
        assert_eq!(nodes, 31);
        assert_eq!(
            gf_min_node_count(18, 5, 3, 2, 3, 1_000_000, &mut nodes),
            GfStatus::Infeasible
        );
        assert!(last_error().contains("branching"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/grokforge.h")).unwrap();
    for name in [
        "gf_last_error",
        "gf_graph_new",
        "gf_graph_load_tsv",
        "gf_graph_free",
        "gf_graph_add_fact",
        "gf_graph_node_count",
        "gf_graph_edge_count",
        "gf_graph_phi",
        "gf_graph_phi_json",
        "gf_string_free",
        "gf_expected_path_count",
        "gf_expected_phi",
        "gf_phi_upper_bound",
        "gf_min_node_count",
        "typedef struct GfGraph GfGraph",
        "GF_STATUS_INFEASIBLE",
    ] {
        assert!(header.contains(name), "header is missing {name}");
    }
}
