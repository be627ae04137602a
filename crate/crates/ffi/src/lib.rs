//! C ABI over the grokforge knowledge-graph toolkit.
//!
//! Graphs are opaque `GfGraph` handles. Every fallible call returns a
//! `GfStatus`; on failure, `gf_last_error` describes what went wrong on the
//! calling thread. Strings handed out by this library must be released with
//! `gf_string_free`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grokforge::bounds::{self, BoundParams, NodeCountBound};
use grokforge::{compute_phi, Error, HopOrder, KnowledgeGraph, Mode};
use num_rational::Ratio;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    InvalidFact = 4,
    Io = 5,
    Parse = 6,
    /// The requested ratio has no atomic facts to divide by.
    Undefined = 7,
    /// No node count satisfies the threshold at this branching factor.
    Infeasible = 8,
    /// The search gave up at its cutoff.
    NotFound = 9,
    Panic = 10,
    Internal = 11,
}

/// Path-counting convention.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfMode {
    Directed = 0,
    Undirected = 1,
}

impl From<GfMode> for Mode {
    fn from(m: GfMode) -> Self {
        match m {
            GfMode::Directed => Mode::Directed,
            GfMode::Undirected => Mode::Undirected,
        }
    }
}

/// Opaque knowledge-graph handle.
pub struct GfGraph {
    kg: KnowledgeGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: GfStatus, msg: impl Into<String>) -> GfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> GfStatus {
    let status = match &e {
        Error::SelfLoop { .. } | Error::EmptyLabel => GfStatus::InvalidFact,
        Error::Io { .. } => GfStatus::Io,
        Error::Parse { .. } | Error::NothingParsed { .. } | Error::Json(_) => GfStatus::Parse,
        Error::InvalidParameter(_) | Error::HopOrder { .. } | Error::EmptyGraph => GfStatus::InvalidParameter,
        _ => GfStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `GfStatus::Panic`.
fn guard(f: impl FnOnce() -> GfStatus) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(GfStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, GfStatus> {
    if p.is_null() {
        return Err(fail(GfStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GfStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn ratio_arg(num: u64, den: u64, name: &str) -> Result<Ratio<u64>, GfStatus> {
    if den == 0 {
        return Err(fail(
            GfStatus::InvalidParameter,
            format!("`{name}` has a zero denominator"),
        ));
    }
    Ok(Ratio::new(num, den))
}

fn hop_order(hops: usize, up_to: bool) -> HopOrder {
    if up_to {
        HopOrder::UpTo(hops)
    } else {
        HopOrder::Exact(hops)
    }
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates an empty graph. Release it with `gf_graph_free`.
#[no_mangle]
pub extern "C" fn gf_graph_new() -> *mut GfGraph {
    Box::into_raw(Box::new(GfGraph {
        kg: KnowledgeGraph::new(),
    }))
}

/// Loads a `head<TAB>relation<TAB>tail` file into a new graph.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_load_tsv(path: *const c_char, out: *mut *mut GfGraph) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let path = try_status!(str_arg(path, "path"));
        match KnowledgeGraph::load_tsv(path) {
            Ok(kg) => {
                *out = Box::into_raw(Box::new(GfGraph { kg }));
                GfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `graph` must come from `gf_graph_new` or `gf_graph_load_tsv` and must not
/// be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_free(graph: *mut GfGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Adds one atomic fact. Duplicates are ignored.
///
/// # Safety
/// `graph` must be a live handle; the labels must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_add_fact(
    graph: *mut GfGraph,
    head: *const c_char,
    relation: *const c_char,
    tail: *const c_char,
) -> GfStatus {
    guard(|| {
        let Some(g) = graph.as_mut() else {
            return fail(GfStatus::NullPointer, "`graph` is null");
        };
        let head = try_status!(str_arg(head, "head"));
        let relation = try_status!(str_arg(relation, "relation"));
        let tail = try_status!(str_arg(tail, "tail"));
        match g.kg.add_fact(head, relation, tail) {
            Ok(_) => GfStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Number of entities, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_node_count(graph: *const GfGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.kg.node_count())
}

/// Number of distinct facts, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_edge_count(graph: *const GfGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.kg.edge_count())
}

/// Global inferred/atomic ratio as an exact fraction. With `up_to` set, paths
/// of 2..=`hops` hops are counted; otherwise exactly `hops`.
///
/// # Safety
/// `graph` must be a live handle; `num` and `den` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_phi(
    graph: *const GfGraph,
    hops: usize,
    up_to: bool,
    mode: GfMode,
    num: *mut u64,
    den: *mut u64,
) -> GfStatus {
    guard(|| {
        let Some(g) = graph.as_ref() else {
            return fail(GfStatus::NullPointer, "`graph` is null");
        };
        if num.is_null() || den.is_null() {
            return fail(GfStatus::NullPointer, "output pointer is null");
        }
        let report = match compute_phi(&g.kg, hop_order(hops, up_to), mode.into()) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        match report.global_phi {
            Some(phi) => {
                *num = *phi.numer();
                *den = *phi.denom();
                GfStatus::Ok
            }
            None => fail(GfStatus::Undefined, "graph has no atomic facts"),
        }
    })
}

/// Full ratio report (global and per relation) as a JSON string. Release the
/// string with `gf_string_free`.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_phi_json(
    graph: *const GfGraph,
    hops: usize,
    up_to: bool,
    mode: GfMode,
    out: *mut *mut c_char,
) -> GfStatus {
    guard(|| {
        let Some(g) = graph.as_ref() else {
            return fail(GfStatus::NullPointer, "`graph` is null");
        };
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let report = match compute_phi(&g.kg, hop_order(hops, up_to), mode.into()) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        match CString::new(report.to_json().to_string()) {
            Ok(s) => {
                *out = s.into_raw();
                GfStatus::Ok
            }
            Err(_) => fail(GfStatus::Internal, "report contains a NUL byte"),
        }
    })
}

/// # Safety
/// `s` must be a string returned by this library, not yet freed, or null.
#[no_mangle]
pub unsafe extern "C" fn gf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Expected number of `hops`-hop paths in a random graph with `nodes`
/// entities and branching factor `b_num / b_den`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_expected_path_count(
    nodes: u64,
    b_num: u64,
    b_den: u64,
    hops: usize,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let b = try_status!(ratio_arg(b_num, b_den, "b"));
        match bounds::expected_path_count(&BoundParams::new(nodes, b, hops)) {
            Ok(est) => {
                *out = est.value;
                GfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Expected inferred/atomic ratio for the same random-graph parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_expected_phi(nodes: u64, b_num: u64, b_den: u64, hops: usize, out: *mut f64) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let b = try_status!(ratio_arg(b_num, b_den, "b"));
        match bounds::expected_phi(&BoundParams::new(nodes, b, hops)) {
            Ok(est) => {
                *out = est.value;
                GfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Upper bound on the ratio; `nodes == 0` means an unbounded graph.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_phi_upper_bound(
    nodes: u64,
    b_num: u64,
    b_den: u64,
    hops: usize,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let b = try_status!(ratio_arg(b_num, b_den, "b"));
        let params = if nodes == 0 {
            BoundParams::infinite(b, hops)
        } else {
            BoundParams::new(nodes, b, hops)
        };
        match bounds::phi_upper_bound(&params) {
            Ok(v) => {
                *out = v;
                GfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Smallest node count whose ratio bound reaches `phi_g` for a relation with
/// branching factor `b_r`. Returns `Infeasible` when none exists and
/// `NotFound` when the search stops at `cutoff`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_min_node_count(
    phi_g_num: u64,
    phi_g_den: u64,
    b_num: u64,
    b_den: u64,
    hops: usize,
    cutoff: u64,
    out: *mut u64,
) -> GfStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfStatus::NullPointer, "`out` is null");
        }
        let phi_g = try_status!(ratio_arg(phi_g_num, phi_g_den, "phi_g"));
        let b = try_status!(ratio_arg(b_num, b_den, "b"));
        let map = BTreeMap::from([("r".to_string(), b)]);
        match bounds::min_node_count(phi_g, &map, hops, cutoff) {
            Ok(NodeCountBound::Found { nodes }) => {
                *out = nodes;
                GfStatus::Ok
            }
            Ok(NodeCountBound::Infeasible { .. }) => {
                fail(GfStatus::Infeasible, "branching factor too small for this threshold")
            }
            Ok(NodeCountBound::NotFoundBelowCutoff { cutoff }) => {
                fail(GfStatus::NotFound, format!("no node count found up to {cutoff}"))
            }
            Err(e) => from_error(e),
        }
    })
}
