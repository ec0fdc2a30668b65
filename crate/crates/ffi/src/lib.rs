//! C interface to `agu`.
//!
//! Objects cross the boundary as opaque pointers (`AguGraph`, `AguModel`,
//! `AguRequest`) created by `agu_*` constructors and released with the
//! matching `*_free`. Every fallible call returns an [`AguStatus`]; on
//! failure the message is available from [`agu_last_error`] on the same
//! thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use agu::bench::{fit, generate_sbm, micro_f1, sample_unlearn_request, SbmSpec};
use agu::graph::{load_graph, load_request, Graph, RequestKind, UnlearnRequest};
use agu::model::{default_dims, load_checkpoint, save_checkpoint, Arch, Model, TrainConfig};
use agu::neighbors::{build_neighbor_report, FilterConfig};
use agu::unlearn::{unlearn, UnlearnConfig};
use agu::AguError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AguStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Reference = 5,
    Config = 6,
    Diverged = 7,
    Checkpoint = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AguArch {
    Gcn = 0,
    Sgc = 1,
    Gat = 2,
    Gin = 3,
    Sage = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AguRequestKind {
    Node = 0,
    Edge = 1,
    Feature = 2,
}

pub struct AguGraph(Graph);
pub struct AguModel(Model);
pub struct AguRequest(UnlearnRequest);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &AguError) -> AguStatus {
    match e {
        AguError::Io { .. } => AguStatus::Io,
        AguError::Parse { .. } => AguStatus::Parse,
        AguError::Reference(_) => AguStatus::Reference,
        AguError::Config(_) | AguError::AttackImpossible(_) => AguStatus::Config,
        AguError::TrainingDiverged { .. } | AguError::UnlearnDiverged { .. } => AguStatus::Diverged,
        AguError::Checkpoint(_) => AguStatus::Checkpoint,
        _ => AguStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Agu(AguError),
}

impl From<AguError> for Fail {
    fn from(e: AguError) -> Self {
        Fail::Agu(e)
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AguStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AguStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            AguStatus::NullArgument
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            AguStatus::InvalidArgument
        }
        Ok(Err(Fail::Agu(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            AguStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail::Arg(format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("output pointer"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

fn arch_of(a: AguArch) -> Arch {
    match a {
        AguArch::Gcn => Arch::Gcn,
        AguArch::Sgc => Arch::Sgc,
        AguArch::Gat => Arch::Gat,
        AguArch::Gin => Arch::Gin,
        AguArch::Sage => Arch::Sage,
    }
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn agu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads `graph.tsv` and optionally `masks.tsv` (`masks_path` may be null).
///
/// # Safety
/// Paths must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agu_graph_load(
    graph_path: *const c_char,
    masks_path: *const c_char,
    out: *mut *mut AguGraph,
) -> AguStatus {
    guard(|| {
        let gp = path(graph_path, "graph_path")?;
        let mp = if masks_path.is_null() {
            None
        } else {
            Some(path(masks_path, "masks_path")?)
        };
        put(out, AguGraph(load_graph(&gp, mp.as_deref())?))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agu_graph_generate_sbm(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    d: usize,
    s: f64,
    seed: u64,
    out: *mut *mut AguGraph,
) -> AguStatus {
    guard(|| {
        let spec = SbmSpec {
            n,
            blocks,
            p_in,
            p_out,
            d,
            s,
            seed,
        };
        put(out, AguGraph(generate_sbm(&spec)?))
    })
}

/// Node count, or 0 for a null graph.
///
/// # Safety
/// `g` must be null or a live graph.
#[no_mangle]
pub unsafe extern "C" fn agu_graph_num_nodes(g: *const AguGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// # Safety
/// `g` must be null or a live graph.
#[no_mangle]
pub unsafe extern "C" fn agu_graph_num_edges(g: *const AguGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.num_edges())
}

/// # Safety
/// `g` must be null or a graph not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agu_graph_free(g: *mut AguGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Reads a request file, checking node ids against `g`.
///
/// # Safety
/// Arguments must be live objects or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn agu_request_load(
    request_path: *const c_char,
    g: *const AguGraph,
    out: *mut *mut AguRequest,
) -> AguStatus {
    guard(|| {
        let p = path(request_path, "request_path")?;
        let g = deref(g, "graph")?;
        let r = load_request(&p, g.0.num_nodes())?;
        r.validate(&g.0)?;
        put(out, AguRequest(r))
    })
}

/// Uniform sample of `ratio` of the train nodes (node, feature) or edges.
///
/// # Safety
/// `g` must be a live graph; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agu_request_sample(
    g: *const AguGraph,
    kind: AguRequestKind,
    ratio: f64,
    seed: u64,
    out: *mut *mut AguRequest,
) -> AguStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        let kind = match kind {
            AguRequestKind::Node => RequestKind::Node,
            AguRequestKind::Edge => RequestKind::Edge,
            AguRequestKind::Feature => RequestKind::Feature,
        };
        put(out, AguRequest(sample_unlearn_request(&g.0, kind, ratio, seed)?))
    })
}

/// Number of elements in the request, or 0 for null.
///
/// # Safety
/// `r` must be null or a live request.
#[no_mangle]
pub unsafe extern "C" fn agu_request_len(r: *const AguRequest) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `r` must be null or a request not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agu_request_free(r: *mut AguRequest) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Trains a fresh model with default optimizer settings.
///
/// # Safety
/// `g` must be a live graph; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agu_model_train(
    g: *const AguGraph,
    arch: AguArch,
    layers: usize,
    hidden: usize,
    epochs: usize,
    seed: u64,
    out: *mut *mut AguModel,
) -> AguStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        if layers == 0 || hidden == 0 {
            return Err(Fail::Arg("layers and hidden must be positive".into()));
        }
        let mut dims = default_dims(g.0.num_features(), g.0.num_classes(), layers);
        for d in &mut dims[1..layers] {
            *d = hidden;
        }
        let cfg = TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        };
        put(out, AguModel(fit(arch_of(arch), &dims, &g.0, &cfg)?))
    })
}

/// # Safety
/// `m` must be a live model; `model_path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn agu_model_save(m: *const AguModel, model_path: *const c_char) -> AguStatus {
    guard(|| {
        let m = deref(m, "model")?;
        save_checkpoint(&path(model_path, "model_path")?, &m.0)?;
        Ok(())
    })
}

/// # Safety
/// `model_path` NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agu_model_load(model_path: *const c_char, out: *mut *mut AguModel) -> AguStatus {
    guard(|| put(out, AguModel(load_checkpoint(&path(model_path, "model_path")?)?)))
}

/// Writes one predicted class per node into `labels`, which must hold
/// exactly `len == num_nodes` entries.
///
/// # Safety
/// `labels` must point to `len` writable `u32`s.
#[no_mangle]
pub unsafe extern "C" fn agu_model_predict(
    m: *const AguModel,
    g: *const AguGraph,
    labels: *mut u32,
    len: usize,
) -> AguStatus {
    guard(|| {
        let (m, g) = (deref(m, "model")?, deref(g, "graph")?);
        if labels.is_null() {
            return Err(Fail::Null("labels"));
        }
        if len != g.0.num_nodes() {
            return Err(Fail::Arg(format!("buffer holds {len} labels, graph has {} nodes", g.0.num_nodes())));
        }
        let pred = m.0.predict(&g.0)?;
        let dst = std::slice::from_raw_parts_mut(labels, len);
        for (d, &p) in dst.iter_mut().zip(&pred.labels) {
            *d = p as u32;
        }
        Ok(())
    })
}

/// Micro-F1 on the graph's test mask.
///
/// # Safety
/// Arguments must be live objects; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn agu_model_test_f1(m: *const AguModel, g: *const AguGraph, out: *mut f64) -> AguStatus {
    guard(|| {
        let (m, g) = (deref(m, "model")?, deref(g, "graph")?);
        if out.is_null() {
            return Err(Fail::Null("output pointer"));
        }
        let pred = m.0.predict(&g.0)?;
        *out = micro_f1(&pred.labels, g.0.labels(), g.0.test_mask())?;
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a model not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agu_model_free(m: *mut AguModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Unlearns `r` from `m` (trained on `g`) with default settings and the
/// given epoch count; the input model is left untouched.
///
/// # Safety
/// Arguments must be live objects; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn agu_unlearn(
    m: *const AguModel,
    g: *const AguGraph,
    r: *const AguRequest,
    epochs: usize,
    seed: u64,
    out: *mut *mut AguModel,
) -> AguStatus {
    guard(|| {
        let (m, g, r) = (deref(m, "model")?, deref(g, "graph")?, deref(r, "request")?);
        let cfg = UnlearnConfig {
            epochs,
            seed,
            filter: FilterConfig {
                probe_seed: seed,
                ..FilterConfig::default()
            },
            ..UnlearnConfig::default()
        };
        put(out, AguModel(unlearn(&m.0, &g.0, &r.0, &cfg)?.model))
    })
}

/// Neighbor report as a JSON string; release it with [`agu_string_free`].
///
/// # Safety
/// Arguments must be live objects; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn agu_neighbors_json(
    m: *const AguModel,
    g: *const AguGraph,
    r: *const AguRequest,
    seed: u64,
    out: *mut *mut c_char,
) -> AguStatus {
    guard(|| {
        let (m, g, r) = (deref(m, "model")?, deref(g, "graph")?, deref(r, "request")?);
        if out.is_null() {
            return Err(Fail::Null("output pointer"));
        }
        let delta = r.0.apply(&g.0)?;
        let cfg = FilterConfig {
            probe_seed: seed,
            ..FilterConfig::default()
        };
        let report = build_neighbor_report(&m.0, &g.0, &delta, &r.0, &cfg)?;
        let text = serde_json::to_string(&report).map_err(|e| Fail::Arg(e.to_string()))?;
        *out = CString::new(text).map_err(|e| Fail::Arg(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn agu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
