//! C ABI over the graphforget core.
//!
//! Objects cross the boundary as opaque handles created by `gf_*_new` /
//! `gf_*_load` functions and released with the matching `gf_*_free`.
//! Every fallible function returns a [`GfStatus`]; on failure the message
//! is available from [`gf_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use graphforget::bench::{build_benchmark, emit_dataset, BenchConfig, BenchmarkCase, TemplateBank};
use graphforget::error::Error;
use graphforget::eval::{roc_auc, rouge_l};
use graphforget::kg::algo::geodesic_distance;
use graphforget::kg::io::{dump_world, load_world};
use graphforget::kg::world::generate_world_with_reserved;
use graphforget::kg::{KnowledgeGraph, WorldConfig};
use graphforget::lm::checkpoint::{load_checkpoint, model_hash, save_checkpoint};
use graphforget::lm::Model;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    MissingArtifact = 4,
    Numeric = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// A generated or loaded knowledge graph.
pub struct GfWorld {
    graph: KnowledgeGraph,
}

/// Benchmark cases built from a world.
pub struct GfBenchmark {
    cases: Vec<BenchmarkCase>,
}

/// A model checkpoint.
pub struct GfModel {
    model: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GfStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::InsufficientTargets { .. } => GfStatus::Config,
        Error::MissingArtifact(_) => GfStatus::MissingArtifact,
        Error::Numeric(_) => GfStatus::Numeric,
        Error::Io { .. } => GfStatus::Io,
        _ => GfStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), GfStatus>) -> GfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            GfStatus::Panic
        }
    }
}

fn lift<T>(r: graphforget::Result<T>) -> Result<T, GfStatus> {
    r.map_err(|e| {
        let s = status_of(&e);
        set_error(e.to_string());
        s
    })
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, GfStatus> {
    if p.is_null() {
        set_error("null string argument".into());
        return Err(GfStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        GfStatus::InvalidUtf8
    })
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, GfStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer".into());
        GfStatus::NullPointer
    })
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, GfStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        GfStatus::NullPointer
    })
}

/// Copy the last error message into `buf` (NUL-terminated). Returns the
/// message length excluding the NUL, 0 when there is none, or -1 if `buf`
/// is too small.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null with `len` 0.
#[no_mangle]
pub unsafe extern "C" fn gf_last_error_message(buf: *mut c_char, len: usize) -> c_int {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if buf.is_null() || len < bytes.len() {
            return -1;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        (bytes.len() - 1) as c_int
    })
}

/// Generate the default world with `seed`.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`gf_world_free`].
#[no_mangle]
pub unsafe extern "C" fn gf_world_generate(seed: u64, out: *mut *mut GfWorld) -> GfStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let bank = TemplateBank::default_bank();
        let graph = lift(generate_world_with_reserved(&WorldConfig { seed, ..Default::default() }, bank.lexicon()))?;
        *out = Box::into_raw(Box::new(GfWorld { graph }));
        Ok(())
    })
}

/// Load a world from a directory holding `triples.tsv` and `schema.tsv`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_world_load(dir: *const c_char, out: *mut *mut GfWorld) -> GfStatus {
    guard(|| {
        let dir = str_arg(dir)?;
        let out = out_ptr(out)?;
        let graph = lift(load_world(Path::new(dir)))?;
        *out = Box::into_raw(Box::new(GfWorld { graph }));
        Ok(())
    })
}

/// Write `triples.tsv` and `schema.tsv` into `dir`.
///
/// # Safety
/// `world` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gf_world_dump(world: *const GfWorld, dir: *const c_char) -> GfStatus {
    guard(|| {
        let w = handle(world)?;
        lift(dump_world(&w.graph, Path::new(str_arg(dir)?)))
    })
}

/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_world_num_entities(world: *const GfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.graph.num_entities())
}

/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_world_num_triples(world: *const GfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.graph.triples().len())
}

/// Undirected hop distance between two entities by label; -1 when disconnected.
///
/// # Safety
/// `world` must be a live handle, labels NUL-terminated strings, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gf_world_geodesic(world: *const GfWorld, a: *const c_char, b: *const c_char, out: *mut i64) -> GfStatus {
    guard(|| {
        let w = handle(world)?;
        let (a, b) = (str_arg(a)?, str_arg(b)?);
        let out = out_ptr(out)?;
        let ea = lift(w.graph.entity_by_label(a))?;
        let eb = lift(w.graph.entity_by_label(b))?;
        let d = lift(geodesic_distance(&w.graph, ea, eb))?;
        *out = d.finite().map_or(-1, |v| v as i64);
        Ok(())
    })
}

/// # Safety
/// `world` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gf_world_free(world: *mut GfWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Build `n_targets` benchmark cases from `world`.
///
/// # Safety
/// `world` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_bench_build(world: *const GfWorld, n_targets: usize, seed: u64, out: *mut *mut GfBenchmark) -> GfStatus {
    guard(|| {
        let w = handle(world)?;
        let out = out_ptr(out)?;
        let cfg = BenchConfig { n_targets, seed, ..Default::default() };
        let (cases, _) = lift(build_benchmark(&w.graph, &TemplateBank::default_bank(), &cfg))?;
        *out = Box::into_raw(Box::new(GfBenchmark { cases }));
        Ok(())
    })
}

/// # Safety
/// `bench` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_bench_num_cases(bench: *const GfBenchmark) -> usize {
    bench.as_ref().map_or(0, |b| b.cases.len())
}

/// # Safety
/// `bench` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gf_bench_num_probes(bench: *const GfBenchmark) -> usize {
    bench.as_ref().map_or(0, |b| b.cases.iter().map(|c| c.probes.len()).sum())
}

/// Write the probe dataset (line-delimited JSON plus case sidecar) to `path`.
///
/// # Safety
/// `bench` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gf_bench_write(bench: *const GfBenchmark, path: *const c_char) -> GfStatus {
    guard(|| {
        let b = handle(bench)?;
        lift(emit_dataset(&b.cases, Path::new(str_arg(path)?)))
    })
}

/// # Safety
/// `bench` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gf_bench_free(bench: *mut GfBenchmark) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}

/// Load a binary model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gf_model_load(path: *const c_char, out: *mut *mut GfModel) -> GfStatus {
    guard(|| {
        let p = str_arg(path)?;
        let out = out_ptr(out)?;
        let model = lift(load_checkpoint(Path::new(p)))?;
        *out = Box::into_raw(Box::new(GfModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gf_model_save(model: *const GfModel, path: *const c_char) -> GfStatus {
    guard(|| {
        let m = handle(model)?;
        lift(save_checkpoint(&m.model, Path::new(str_arg(path)?)))
    })
}

/// Write the checkpoint's content hash (hex, NUL-terminated) into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gf_model_hash(model: *const GfModel, buf: *mut c_char, len: usize) -> GfStatus {
    guard(|| {
        let m = handle(model)?;
        if buf.is_null() {
            set_error("null buffer".into());
            return Err(GfStatus::NullPointer);
        }
        let h = model_hash(&m.model);
        if len < h.len() + 1 {
            set_error(format!("hash needs {} bytes", h.len() + 1));
            return Err(GfStatus::BufferTooSmall);
        }
        std::ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gf_model_free(model: *mut GfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// ROUGE-L recall of `hypothesis` against `reference`.
///
/// # Safety
/// Both strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gf_rouge_l_recall(hypothesis: *const c_char, reference: *const c_char, out: *mut f64) -> GfStatus {
    guard(|| {
        let (h, r) = (str_arg(hypothesis)?, str_arg(reference)?);
        *out_ptr(out)? = rouge_l(h, r).recall;
        Ok(())
    })
}

/// ROC-AUC that a forget score falls below a retain score, ties counting half.
///
/// # Safety
/// `forget` and `retain` must point to `n_forget` and `n_retain` doubles.
#[no_mangle]
pub unsafe extern "C" fn gf_roc_auc(forget: *const f64, n_forget: usize, retain: *const f64, n_retain: usize, out: *mut f64) -> GfStatus {
    guard(|| {
        if forget.is_null() || retain.is_null() {
            set_error("null score array".into());
            return Err(GfStatus::NullPointer);
        }
        let f = std::slice::from_raw_parts(forget, n_forget);
        let r = std::slice::from_raw_parts(retain, n_retain);
        *out_ptr(out)? = lift(roc_auc(f, r))?;
        Ok(())
    })
}

/// Run the command-line interface with `argv[0..argc]`; returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gf_run_cli(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    for i in 0..argc.max(0) as usize {
        match str_arg(*argv.add(i)) {
            Ok(s) => args.push(s.to_string()),
            Err(_) => return graphforget::cli::EXIT_USAGE,
        }
    }
    catch_unwind(|| graphforget::cli::run(args)).unwrap_or(graphforget::cli::EXIT_FAILURE)
}
