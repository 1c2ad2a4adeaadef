//! C interface to `relay_harq`.
//!
//! Every function returns an `int32_t` status (`RH_OK` on success) and
//! writes results through out-pointers. On failure `rh_last_error` returns a
//! message for the calling thread. Networks are opaque handles created with
//! `rh_network_new` and released with `rh_network_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relay_harq::link::{Exactness, FadingMode, NetworkConfig};
use relay_harq::optimizer::{exhaustive_search, ftml_ff, list_algorithm_sf};
use relay_harq::pdp::{pdp, ArqAllocation, PdpQuery, Strategy};
use relay_harq::sim::{run_ensemble, DelayParams};
use relay_harq::special::{marcum_qm, SeriesControl};
use relay_harq::Error;

pub const RH_OK: i32 = 0;
pub const RH_NULL_POINTER: i32 = 1;
pub const RH_INVALID_ARGUMENT: i32 = 2;
pub const RH_NO_CONVERGENCE: i32 = 3;
pub const RH_UNSUPPORTED: i32 = 4;
pub const RH_INFEASIBLE: i32 = 5;
pub const RH_SEARCH_TOO_LARGE: i32 = 6;
pub const RH_BUFFER_TOO_SMALL: i32 = 7;
pub const RH_INTERNAL: i32 = 8;
pub const RH_PANIC: i32 = 9;

pub const RH_FADING_SLOW: u32 = 0;
pub const RH_FADING_FAST: u32 = 1;

pub const RH_STRATEGY_NON_CUMULATIVE: u32 = 0;
pub const RH_STRATEGY_FULLY_CUMULATIVE: u32 = 1;
pub const RH_STRATEGY_TYPE1: u32 = 2;
pub const RH_STRATEGY_TYPE1_CUMULATIVE: u32 = 3;

pub const RH_EXACT: u32 = 0;
pub const RH_APPROX: u32 = 1;

/// Opaque network handle.
pub struct RhNetwork {
    inner: NetworkConfig,
}

/// Timing parameters in seconds. `tau_total <= 0` means no deadline: the
/// deadline is then `q_sum` attempt slots.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RhDelayParams {
    pub tau_p: f64,
    pub tau_d: f64,
    pub tau_nack: f64,
    pub alpha: f64,
    pub tau_total: f64,
}

/// Ensemble statistics. `eta` and `avg_delay` are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RhEnsembleSummary {
    pub n_packets: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub late: u64,
    pub p_drop: f64,
    pub p_deadline: f64,
    pub pdv: f64,
    pub eta: f64,
    pub avg_delay: f64,
    pub deadline: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Precondition(_) => RH_INVALID_ARGUMENT,
            Error::NoConvergence { .. } => RH_NO_CONVERGENCE,
            Error::Unsupported(_) => RH_UNSUPPORTED,
            Error::Infeasible(_) => RH_INFEASIBLE,
            Error::SearchTooLarge { .. } => RH_SEARCH_TOO_LARGE,
            Error::Internal(_) => RH_INTERNAL,
        };
        Fail(code, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(RH_INVALID_ARGUMENT, msg.into())
}

fn null(what: &str) -> Fail {
    Fail(RH_NULL_POINTER, format!("{what} is null"))
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RH_OK
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            RH_PANIC
        }
    }
}

fn fading(x: u32) -> Result<FadingMode, Fail> {
    match x {
        RH_FADING_SLOW => Ok(FadingMode::Slow),
        RH_FADING_FAST => Ok(FadingMode::Fast),
        _ => Err(invalid(format!("unknown fading mode {x}"))),
    }
}

fn strategy(x: u32) -> Result<Strategy, Fail> {
    match x {
        RH_STRATEGY_NON_CUMULATIVE => Ok(Strategy::NonCumulative),
        RH_STRATEGY_FULLY_CUMULATIVE => Ok(Strategy::FullyCumulative),
        RH_STRATEGY_TYPE1 => Ok(Strategy::Type1),
        RH_STRATEGY_TYPE1_CUMULATIVE => Ok(Strategy::Type1Cumulative),
        _ => Err(invalid(format!("unknown strategy {x}"))),
    }
}

fn exactness(x: u32) -> Result<Exactness, Fail> {
    match x {
        RH_EXACT => Ok(Exactness::Exact),
        RH_APPROX => Ok(Exactness::Approx),
        _ => Err(invalid(format!("unknown exactness {x}"))),
    }
}

unsafe fn network<'a>(h: *const RhNetwork) -> Result<&'a NetworkConfig, Fail> {
    h.as_ref().map(|n| &n.inner).ok_or_else(|| null("network"))
}

unsafe fn allocation(q: *const u32, len: usize) -> Result<ArqAllocation, Fail> {
    if q.is_null() {
        return Err(null("allocation"));
    }
    Ok(ArqAllocation::new(std::slice::from_raw_parts(q, len).to_vec())?)
}

unsafe fn write_alloc(alloc: &ArqAllocation, out: *mut u32, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("allocation output"));
    }
    if len < alloc.hop_count() {
        return Err(Fail(RH_BUFFER_TOO_SMALL, format!("need {} entries, got {len}", alloc.hop_count())));
    }
    ptr::copy_nonoverlapping(alloc.as_slice().as_ptr(), out, alloc.hop_count());
    Ok(())
}

unsafe fn put<T>(out: *mut T, v: T) {
    if !out.is_null() {
        *out = v;
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Create a network from `n` LOS fractions, the rate in bits/s/Hz and the
/// linear SNR.
///
/// # Safety
/// `los` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rh_network_new(
    los: *const f64,
    n: usize,
    rate: f64,
    snr: f64,
    out: *mut *mut RhNetwork,
) -> i32 {
    guard(|| {
        if los.is_null() {
            return Err(null("los"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let c = std::slice::from_raw_parts(los, n).to_vec();
        let inner = NetworkConfig::new(c, rate, snr)?;
        *out = Box::into_raw(Box::new(RhNetwork { inner }));
        Ok(())
    })
}

/// Release a network. Null is ignored.
///
/// # Safety
/// `net` must come from `rh_network_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rh_network_free(net: *mut RhNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of hops, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rh_network_hop_count(net: *const RhNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.hop_count())
}

/// Generalised Marcum-Q function `Q_m(a, b)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rh_marcum_q(m: u32, a: f64, b: f64, out: *mut f64) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = marcum_qm(m, a, b, &SeriesControl::default())?;
        Ok(())
    })
}

/// Packet-drop probability of an allocation.
///
/// # Safety
/// `q` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rh_pdp(
    net: *const RhNetwork,
    q: *const u32,
    len: usize,
    fading_mode: u32,
    strategy_kind: u32,
    exactness_kind: u32,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let network = network(net)?;
        let alloc = allocation(q, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = pdp(&PdpQuery {
            network,
            alloc: &alloc,
            fading: fading(fading_mode)?,
            strategy: strategy(strategy_kind)?,
            exactness: exactness(exactness_kind)?,
        })?;
        Ok(())
    })
}

/// Exhaustive search for the best allocation of `q_sum` attempts.
/// `alloc_out` receives one entry per hop; `pdp_out` may be null.
///
/// # Safety
/// `alloc_out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rh_exhaustive_search(
    net: *const RhNetwork,
    q_sum: u32,
    fading_mode: u32,
    exactness_kind: u32,
    strategy_kind: u32,
    alloc_out: *mut u32,
    len: usize,
    pdp_out: *mut f64,
) -> i32 {
    guard(|| {
        let network = network(net)?;
        let r = exhaustive_search(
            network,
            q_sum,
            fading(fading_mode)?,
            exactness(exactness_kind)?,
            strategy(strategy_kind)?,
        )?;
        write_alloc(&r.alloc, alloc_out, len)?;
        put(pdp_out, r.pdp);
        Ok(())
    })
}

/// Low-complexity allocation: Algorithm 1 for slow fading, FTML for fast
/// fading. `pdp_out` receives the approximate PDP; `pdp_out` and
/// `list_len_out` may be null.
///
/// # Safety
/// `alloc_out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rh_list_search(
    net: *const RhNetwork,
    q_sum: u32,
    fading_mode: u32,
    alloc_out: *mut u32,
    len: usize,
    pdp_out: *mut f64,
    list_len_out: *mut usize,
) -> i32 {
    guard(|| {
        let network = network(net)?;
        let (best, p, size) = match fading(fading_mode)? {
            FadingMode::Slow => {
                let o = list_algorithm_sf(network, q_sum)?;
                (o.best, o.pdp, o.candidates.len())
            }
            FadingMode::Fast => {
                let o = ftml_ff(network, q_sum)?;
                (o.best, o.pdp, o.candidates.len())
            }
        };
        write_alloc(&best, alloc_out, len)?;
        put(pdp_out, p);
        put(list_len_out, size);
        Ok(())
    })
}

/// Simulate `n_packets` packets and summarise them.
///
/// # Safety
/// `q` must point to `len` readable values; `delays` must be readable and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rh_run_ensemble(
    net: *const RhNetwork,
    q: *const u32,
    len: usize,
    fading_mode: u32,
    strategy_kind: u32,
    delays: *const RhDelayParams,
    n_packets: u64,
    seed: u64,
    out: *mut RhEnsembleSummary,
) -> i32 {
    guard(|| {
        let network = network(net)?;
        let alloc = allocation(q, len)?;
        let d = delays.as_ref().ok_or_else(|| null("delays"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let tau_total = (d.tau_total > 0.0).then_some(d.tau_total);
        let params = DelayParams::new(d.tau_p, d.tau_d, d.tau_nack, d.alpha, tau_total)?;
        let m =
            run_ensemble(network, &alloc, fading(fading_mode)?, strategy(strategy_kind)?, &params, n_packets, seed)?;
        *out = RhEnsembleSummary {
            n_packets: m.n_packets,
            delivered: m.delivered,
            dropped: m.p_drop_count,
            late: m.p_deadline_count,
            p_drop: m.p_drop(),
            p_deadline: m.p_deadline(),
            pdv: m.pdv,
            eta: m.eta.unwrap_or(f64::NAN),
            avg_delay: m.avg_delay.unwrap_or(f64::NAN),
            deadline: m.deadline,
        };
        Ok(())
    })
}
