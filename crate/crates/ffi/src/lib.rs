//! C ABI over `ising-moments`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `ism_*_free`. Every fallible call returns an [`IsmStatus`];
//! on failure the message is available from [`ism_last_error`] on the same
//! thread until the next failing call. Strings returned through out
//! parameters are owned by the caller and released with [`ism_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ising_moments::fields::{learn_fields, schedule_fields_practical};
use ising_moments::generate::{generate_model, GeneratorSpec, Topology};
use ising_moments::known_structure::learn_known_structure;
use ising_moments::moments::{build_moments, exact_table};
use ising_moments::optimizer::{schedule_practical, Overrides};
use ising_moments::sampling::sample_exact;
use ising_moments::screening::{learn_couplings, CouplingEstimate};
use ising_moments::structure::{threshold_edges, EdgeSet};
use ising_moments::{Error, IsingModel, MomentTable};

/// Result codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsmStatus {
    Ok = 0,
    Error = 1,
    Schema = 2,
    MissingMoment = 3,
    Infeasible = 4,
    TheoryUnconfirmed = 5,
    NullPointer = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

impl From<&Error> for IsmStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => IsmStatus::Schema,
            3 => IsmStatus::MissingMoment,
            4 => IsmStatus::Infeasible,
            5 => IsmStatus::TheoryUnconfirmed,
            _ => IsmStatus::Error,
        }
    }
}

/// Opaque model handle.
pub struct IsmModel(IsingModel);
/// Opaque moment table handle.
pub struct IsmMomentTable(MomentTable);
/// Opaque coupling/field estimate handle.
pub struct IsmEstimate(CouplingEstimate);
/// Opaque edge set handle.
pub struct IsmEdgeSet(EdgeSet);

/// Optimizer settings for the practical schedule. Negative or zero values
/// select the library default for that field.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IsmScheduleOptions {
    /// Taylor degree; negative for the default.
    pub d: i32,
    /// Iteration count; 0 for the default.
    pub iterations: u64,
    /// Step size; non-positive for the default.
    pub eta: f64,
    /// Target error used to pick the default degree; non-positive for the default.
    pub epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F>(f: F) -> IsmStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsmStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let status = IsmStatus::from(&e);
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            IsmStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(name))) => {
            set_error(format!("`{name}` is not valid UTF-8"));
            IsmStatus::InvalidUtf8
        }
        Err(_) => {
            set_error("internal panic".into());
            IsmStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure::Utf8(name))
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = CString::new(s)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn overrides(opts: &IsmScheduleOptions) -> Overrides {
    Overrides {
        d: (opts.d >= 0).then_some(opts.d as usize),
        t: (opts.iterations > 0).then_some(opts.iterations),
        eta: (opts.eta > 0.0).then_some(opts.eta),
        epsilon: (opts.epsilon > 0.0).then_some(opts.epsilon),
        ..Overrides::default()
    }
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ism_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ism_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ism_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default options: every field selects the library default.
#[no_mangle]
pub extern "C" fn ism_schedule_options_default() -> IsmScheduleOptions {
    IsmScheduleOptions {
        d: -1,
        iterations: 0,
        eta: 0.0,
        epsilon: 0.0,
    }
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_model_from_json(json: *const c_char, out: *mut *mut IsmModel) -> IsmStatus {
    guard(|| {
        let model = IsingModel::from_json(read_str(json, "json")?)?;
        put(out, IsmModel(model), "out")
    })
}

/// Draws a model; `topology` is one of `er`, `regular`, `ring`, `grid`.
///
/// # Safety
/// `topology` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_model_generate(
    p: usize,
    topology: *const c_char,
    gamma: f64,
    alpha: f64,
    seed: u64,
    out: *mut *mut IsmModel,
) -> IsmStatus {
    guard(|| {
        let topo: Topology = read_str(topology, "topology")?.parse()?;
        let model = generate_model(&GeneratorSpec::new(p, topo, gamma, alpha, seed))?;
        put(out, IsmModel(model), "out")
    })
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_model_to_json(model: *const IsmModel, out: *mut *mut c_char) -> IsmStatus {
    guard(|| put_string(out, borrow(model, "model")?.0.to_json()?))
}

/// Number of spins, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ism_model_p(model: *const IsmModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.p())
}

/// # Safety
/// `model` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ism_model_free(model: *mut IsmModel) {
    free(model)
}

/// Exact moments of `model` up to `degree` by enumeration.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_table_exact(
    model: *const IsmModel,
    degree: usize,
    out: *mut *mut IsmMomentTable,
) -> IsmStatus {
    guard(|| {
        let table = exact_table(&borrow(model, "model")?.0, degree)?;
        put(out, IsmMomentTable(table), "out")
    })
}

/// Empirical moments up to `degree` from `n` exact samples of `model`.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_table_sampled(
    model: *const IsmModel,
    n: usize,
    seed: u64,
    degree: usize,
    out: *mut *mut IsmMomentTable,
) -> IsmStatus {
    guard(|| {
        let data = sample_exact(&borrow(model, "model")?.0, n, seed)?;
        put(out, IsmMomentTable(build_moments(&data, degree)?), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_table_from_json(json: *const c_char, out: *mut *mut IsmMomentTable) -> IsmStatus {
    guard(|| {
        let table = MomentTable::from_json(read_str(json, "json")?)?;
        put(out, IsmMomentTable(table), "out")
    })
}

/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_table_to_json(table: *const IsmMomentTable, out: *mut *mut c_char) -> IsmStatus {
    guard(|| put_string(out, borrow(table, "table")?.0.to_json()?))
}

/// Looks up the moment of the monomial over `indices[0..len]` (repeats reduce
/// mod 2).
///
/// # Safety
/// `table` must be a live handle, `indices` valid for `len` reads (or NULL
/// when `len` is 0), and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_table_query(
    table: *const IsmMomentTable,
    indices: *const usize,
    len: usize,
    out: *mut f64,
) -> IsmStatus {
    guard(|| {
        let table = borrow(table, "table")?;
        let idx: &[usize] = if len == 0 {
            &[]
        } else if indices.is_null() {
            return Err(Failure::Null("indices"));
        } else {
            std::slice::from_raw_parts(indices, len)
        };
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = table.0.query(idx)?;
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ism_table_free(table: *mut IsmMomentTable) {
    free(table)
}

/// Learns every node's couplings and first-stage field by moment-based
/// screening with the practical schedule.
///
/// # Safety
/// `table` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_learn_couplings(
    table: *const IsmMomentTable,
    gamma: f64,
    options: IsmScheduleOptions,
    out: *mut *mut IsmEstimate,
) -> IsmStatus {
    guard(|| {
        let table = &borrow(table, "table")?.0;
        let sched = schedule_practical(table.p(), gamma, &overrides(&options), table.n())?;
        put(out, IsmEstimate(learn_couplings(table, &sched)?), "out")
    })
}

/// Re-fits fields on `edges` with couplings fixed, storing them in `estimate`.
///
/// # Safety
/// All handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ism_learn_fields(
    estimate: *mut IsmEstimate,
    edges: *const IsmEdgeSet,
    table: *const IsmMomentTable,
    gamma: f64,
    options: IsmScheduleOptions,
) -> IsmStatus {
    guard(|| {
        let est = estimate.as_mut().ok_or(Failure::Null("estimate"))?;
        let edges = &borrow(edges, "edges")?.0;
        let table = &borrow(table, "table")?.0;
        let sched = schedule_fields_practical(gamma, &overrides(&options), table.n())?;
        let fe = learn_fields(&est.0, edges, table, &sched, None)?;
        est.0.fields_stage2 = Some(fe);
        Ok(())
    })
}

/// Learns all parameters on a known edge set. A non-positive `eta` selects
/// `2 gamma / (L sqrt T)`.
///
/// # Safety
/// `table` and `edges` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_learn_known_structure(
    table: *const IsmMomentTable,
    edges: *const IsmEdgeSet,
    gamma: f64,
    iterations: u64,
    eta: f64,
    out: *mut *mut IsmEstimate,
) -> IsmStatus {
    guard(|| {
        let table = &borrow(table, "table")?.0;
        let edges = &borrow(edges, "edges")?.0;
        let eta = if eta > 0.0 {
            eta
        } else {
            let l = 2.0 * ((edges.max_degree(table.p()) + 1) as f64).sqrt() * gamma.exp();
            2.0 * gamma / (l * (iterations as f64).sqrt())
        };
        let est = learn_known_structure(table, edges, gamma, iterations, eta)?;
        put(out, IsmEstimate(est), "out")
    })
}

/// Symmetrized coupling estimate for the pair `(u, v)`.
///
/// # Safety
/// `estimate` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_estimate_coupling(
    estimate: *const IsmEstimate,
    u: usize,
    v: usize,
    out: *mut f64,
) -> IsmStatus {
    guard(|| {
        let est = &borrow(estimate, "estimate")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if u >= est.p || v >= est.p || u == v {
            return Err(Error::InvalidParameter(format!("no pair ({u}, {v}) for p = {}", est.p)).into());
        }
        *out = est.coupling(u, v);
        Ok(())
    })
}

/// Best available field estimate for node `u` (second stage when present).
///
/// # Safety
/// `estimate` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_estimate_field(estimate: *const IsmEstimate, u: usize, out: *mut f64) -> IsmStatus {
    guard(|| {
        let est = &borrow(estimate, "estimate")?.0;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let fields = est.best_fields();
        *out = *fields.get(u).ok_or(Error::IndexOutOfRange { index: u, p: est.p })?;
        Ok(())
    })
}

/// # Safety
/// `estimate` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_estimate_to_json(estimate: *const IsmEstimate, out: *mut *mut c_char) -> IsmStatus {
    guard(|| put_string(out, borrow(estimate, "estimate")?.0.to_json()?))
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_estimate_from_json(json: *const c_char, out: *mut *mut IsmEstimate) -> IsmStatus {
    guard(|| {
        let est = CouplingEstimate::from_json(read_str(json, "json")?)?;
        put(out, IsmEstimate(est), "out")
    })
}

/// # Safety
/// `estimate` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ism_estimate_free(estimate: *mut IsmEstimate) {
    free(estimate)
}

/// Edges whose symmetrized coupling magnitude exceeds `alpha / 2`.
///
/// # Safety
/// `estimate` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_threshold_edges(
    estimate: *const IsmEstimate,
    alpha: f64,
    out: *mut *mut IsmEdgeSet,
) -> IsmStatus {
    guard(|| {
        let edges = threshold_edges(&borrow(estimate, "estimate")?.0, alpha)?;
        put(out, IsmEdgeSet(edges), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_edges_from_json(json: *const c_char, out: *mut *mut IsmEdgeSet) -> IsmStatus {
    guard(|| {
        let edges = EdgeSet::from_json(read_str(json, "json")?)?;
        put(out, IsmEdgeSet(edges), "out")
    })
}

/// # Safety
/// `edges` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ism_edges_to_json(edges: *const IsmEdgeSet, out: *mut *mut c_char) -> IsmStatus {
    guard(|| put_string(out, borrow(edges, "edges")?.0.to_json()?))
}

/// Number of edges, or 0 for NULL.
///
/// # Safety
/// `edges` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ism_edges_len(edges: *const IsmEdgeSet) -> usize {
    edges.as_ref().map_or(0, |e| e.0.len())
}

/// The `index`-th edge in ascending `(u, v)` order, with `u < v`.
///
/// # Safety
/// `edges` must be a live handle and `u`, `v` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ism_edges_get(edges: *const IsmEdgeSet, index: usize, u: *mut usize, v: *mut usize) -> IsmStatus {
    guard(|| {
        let edges = &borrow(edges, "edges")?.0;
        if u.is_null() || v.is_null() {
            return Err(Failure::Null("u/v"));
        }
        let (a, b) = edges.iter().nth(index).ok_or(Error::IndexOutOfRange {
            index,
            p: edges.len(),
        })?;
        *u = a;
        *v = b;
        Ok(())
    })
}

/// # Safety
/// `edges` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ism_edges_free(edges: *mut IsmEdgeSet) {
    free(edges)
}
