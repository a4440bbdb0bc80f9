//! C ABI for the blow-up laboratory: opaque handles for model parameters and
//! quadrature grids, flat arrays for states, and integer status codes.
//!
//! Ownership rules: every `*_new` has a matching `*_free`; all other calls
//! borrow. Arrays are caller-allocated with lengths passed explicitly; the
//! library never retains pointers across calls. All functions are
//! thread-safe for distinct handles; grids may be shared across threads.

use std::os::raw::c_char;
use std::sync::Arc;

use wavelab_core::functionals::{self, FieldPair};
use wavelab_core::grid::{self, Field, ModelParams, WeightedGrid};
use wavelab_core::modulation::{self, FitConfig};
use wavelab_core::solitons::{self, SolitonParam};
use wavelab_core::verify;

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WavelabStatus {
    Ok = 0,
    /// A parameter was outside its domain (p <= 1, |d| >= 1, bad sizes).
    InvalidArgument = 1,
    /// The computation failed numerically (singular system, no convergence).
    NumericError = 2,
    /// A required pointer was null.
    NullPointer = 3,
}

/// Opaque model-parameter handle (`p` and derived constants).
pub struct WavelabParams {
    inner: ModelParams,
}

/// Opaque quadrature-grid handle for the weighted interval.
pub struct WavelabGrid {
    params: ModelParams,
    inner: Arc<WeightedGrid>,
}

/// Summary of a modulation fit returned through [`wavelab_fit`].
#[repr(C)]
pub struct WavelabFitResult {
    /// 1 when every projection dropped below the tolerance.
    pub converged: i32,
    pub iterations: u32,
    pub residual_norm: f64,
    /// Exponential coupling of consecutive fitted solitons.
    pub j_m: f64,
}

/// Creates a parameter handle; returns null when `p <= 1`.
#[no_mangle]
pub extern "C" fn wavelab_params_new(p: f64) -> *mut WavelabParams {
    match ModelParams::new(p) {
        Ok(inner) => Box::into_raw(Box::new(WavelabParams { inner })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a parameter handle (null is ignored).
#[no_mangle]
pub extern "C" fn wavelab_params_free(params: *mut WavelabParams) {
    if !params.is_null() {
        drop(unsafe { Box::from_raw(params) });
    }
}

/// The ODE blow-up amplitude `kappa0`; NaN on a null handle.
#[no_mangle]
pub extern "C" fn wavelab_params_kappa0(params: *const WavelabParams) -> f64 {
    match unsafe { params.as_ref() } {
        Some(p) => p.inner.kappa0(),
        None => f64::NAN,
    }
}

/// Energy of the constant profile, `E(kappa0)`; NaN on a null handle.
#[no_mangle]
pub extern "C" fn wavelab_energy_kappa0(params: *const WavelabParams) -> f64 {
    match unsafe { params.as_ref() } {
        Some(p) => functionals::energy_kappa0(&p.inner),
        None => f64::NAN,
    }
}

/// Builds a Gauss quadrature grid of `n >= 8` nodes; null on failure.
#[no_mangle]
pub extern "C" fn wavelab_grid_new(params: *const WavelabParams, n: usize) -> *mut WavelabGrid {
    let Some(p) = (unsafe { params.as_ref() }) else {
        return std::ptr::null_mut();
    };
    match grid::build_grid(p.inner, n) {
        Ok(inner) => Box::into_raw(Box::new(WavelabGrid { params: p.inner, inner })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Frees a grid handle (null is ignored).
#[no_mangle]
pub extern "C" fn wavelab_grid_free(grid: *mut WavelabGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

/// Number of quadrature nodes; 0 on a null handle.
#[no_mangle]
pub extern "C" fn wavelab_grid_size(grid: *const WavelabGrid) -> usize {
    match unsafe { grid.as_ref() } {
        Some(g) => g.inner.len(),
        None => 0,
    }
}

/// Copies the nodes into `out` (length `len` must equal the grid size).
#[no_mangle]
pub extern "C" fn wavelab_grid_nodes(
    grid: *const WavelabGrid,
    out: *mut f64,
    len: usize,
) -> WavelabStatus {
    let Some(g) = (unsafe { grid.as_ref() }) else {
        return WavelabStatus::NullPointer;
    };
    if out.is_null() {
        return WavelabStatus::NullPointer;
    }
    if len != g.inner.len() {
        return WavelabStatus::InvalidArgument;
    }
    let slice = unsafe { std::slice::from_raw_parts_mut(out, len) };
    slice.copy_from_slice(&g.inner.nodes);
    WavelabStatus::Ok
}

/// Pointwise stationary soliton `kappa(d, y)`; NaN outside the domain.
#[no_mangle]
pub extern "C" fn wavelab_kappa(params: *const WavelabParams, d: f64, y: f64) -> f64 {
    match unsafe { params.as_ref() } {
        Some(p) if d.abs() < 1.0 && y.abs() < 1.0 => solitons::kappa_at(&p.inner, d, y),
        _ => f64::NAN,
    }
}

/// Amplitude factor `lambda(d, nu)`; NaN outside the admissible region.
#[no_mangle]
pub extern "C" fn wavelab_lambda(params: *const WavelabParams, d: f64, nu: f64) -> f64 {
    match unsafe { params.as_ref() } {
        Some(p) if d.abs() < 1.0 && 1.0 + nu - d.abs() > 0.0 => {
            solitons::lambda(&p.inner, d, nu)
        }
        _ => f64::NAN,
    }
}

unsafe fn pair_from_raw(
    grid: &WavelabGrid,
    q1: *const f64,
    q2: *const f64,
    len: usize,
) -> Result<FieldPair, WavelabStatus> {
    if q1.is_null() || q2.is_null() {
        return Err(WavelabStatus::NullPointer);
    }
    if len != grid.inner.len() {
        return Err(WavelabStatus::InvalidArgument);
    }
    let a = unsafe { std::slice::from_raw_parts(q1, len) }.to_vec();
    let b = unsafe { std::slice::from_raw_parts(q2, len) }.to_vec();
    let f1 = Field::new(&grid.inner, a).map_err(|_| WavelabStatus::InvalidArgument)?;
    let f2 = Field::new(&grid.inner, b).map_err(|_| WavelabStatus::InvalidArgument)?;
    FieldPair::new(f1, f2).map_err(|_| WavelabStatus::InvalidArgument)
}

/// Energy-space norm of the state `(q1, q2)` sampled on the grid nodes.
#[no_mangle]
pub extern "C" fn wavelab_norm_h(
    grid: *const WavelabGrid,
    q1: *const f64,
    q2: *const f64,
    len: usize,
    out: *mut f64,
) -> WavelabStatus {
    let Some(g) = (unsafe { grid.as_ref() }) else {
        return WavelabStatus::NullPointer;
    };
    if out.is_null() {
        return WavelabStatus::NullPointer;
    }
    let pair = match unsafe { pair_from_raw(g, q1, q2, len) } {
        Ok(p) => p,
        Err(s) => return s,
    };
    match functionals::norm_h(&g.inner, &pair) {
        Ok(v) => {
            unsafe { *out = v };
            WavelabStatus::Ok
        }
        Err(_) => WavelabStatus::NumericError,
    }
}

/// Lyapunov energy of the state `(q1, q2)`.
#[no_mangle]
pub extern "C" fn wavelab_energy(
    grid: *const WavelabGrid,
    q1: *const f64,
    q2: *const f64,
    len: usize,
    out: *mut f64,
) -> WavelabStatus {
    let Some(g) = (unsafe { grid.as_ref() }) else {
        return WavelabStatus::NullPointer;
    };
    if out.is_null() {
        return WavelabStatus::NullPointer;
    }
    let pair = match unsafe { pair_from_raw(g, q1, q2, len) } {
        Ok(p) => p,
        Err(s) => return s,
    };
    match functionals::energy(&g.params, &g.inner, &pair) {
        Ok(v) => {
            unsafe { *out = v };
            WavelabStatus::Ok
        }
        Err(_) => WavelabStatus::NumericError,
    }
}

/// Dual-pairing projection `pi_l^d(q)` for `l` in `{0, 1}`.
#[no_mangle]
pub extern "C" fn wavelab_project(
    grid: *const WavelabGrid,
    d: f64,
    l: u32,
    q1: *const f64,
    q2: *const f64,
    len: usize,
    out: *mut f64,
) -> WavelabStatus {
    let Some(g) = (unsafe { grid.as_ref() }) else {
        return WavelabStatus::NullPointer;
    };
    if out.is_null() {
        return WavelabStatus::NullPointer;
    }
    if !(d.abs() < 1.0) || l > 1 {
        return WavelabStatus::InvalidArgument;
    }
    let pair = match unsafe { pair_from_raw(g, q1, q2, len) } {
        Ok(p) => p,
        Err(s) => return s,
    };
    match functionals::project(&g.params, d, l as usize, &pair, &g.inner) {
        Ok(v) => {
            unsafe { *out = v };
            WavelabStatus::Ok
        }
        Err(_) => WavelabStatus::NumericError,
    }
}

/// Newton fit of `m` generalized solitons with alternating signs starting at
/// `theta1` (+1 or -1). `init_d`/`init_nu` hold the initialization and
/// receive the fitted parameters on success.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn wavelab_fit(
    grid: *const WavelabGrid,
    q1: *const f64,
    q2: *const f64,
    len: usize,
    theta1: f64,
    m: usize,
    init_d: *mut f64,
    init_nu: *mut f64,
    newton_tol: f64,
    max_iter: usize,
    out: *mut WavelabFitResult,
) -> WavelabStatus {
    let Some(g) = (unsafe { grid.as_ref() }) else {
        return WavelabStatus::NullPointer;
    };
    if init_d.is_null() || init_nu.is_null() || out.is_null() {
        return WavelabStatus::NullPointer;
    }
    if m == 0 || (theta1 != 1.0 && theta1 != -1.0) {
        return WavelabStatus::InvalidArgument;
    }
    let pair = match unsafe { pair_from_raw(g, q1, q2, len) } {
        Ok(p) => p,
        Err(s) => return s,
    };
    let ds = unsafe { std::slice::from_raw_parts_mut(init_d, m) };
    let nus = unsafe { std::slice::from_raw_parts_mut(init_nu, m) };
    let mut init = Vec::with_capacity(m);
    for i in 0..m {
        match SolitonParam::new(&g.params, ds[i], nus[i]) {
            Ok(sp) => init.push(sp),
            Err(_) => return WavelabStatus::InvalidArgument,
        }
    }
    let cfg = FitConfig {
        newton_tol: if newton_tol > 0.0 { newton_tol } else { 1e-10 },
        max_iter: if max_iter > 0 { max_iter } else { 50 },
        ..Default::default()
    };
    match modulation::fit(&g.params, &pair, theta1, &init, &cfg, &g.inner) {
        Ok(fit) => {
            for (i, sp) in fit.params.iter().enumerate() {
                ds[i] = sp.d;
                nus[i] = sp.nu;
            }
            unsafe {
                *out = WavelabFitResult {
                    converged: i32::from(fit.converged),
                    iterations: fit.iterations as u32,
                    residual_norm: fit.residual_norm,
                    j_m: fit.j_m,
                };
            }
            WavelabStatus::Ok
        }
        Err(_) => WavelabStatus::NumericError,
    }
}

/// Runs the full identity-check suite for the exponent `p`; writes the
/// number of failed checks and returns Ok when the suite ran.
#[no_mangle]
pub extern "C" fn wavelab_verify(p: f64, failed_out: *mut usize) -> WavelabStatus {
    if failed_out.is_null() {
        return WavelabStatus::NullPointer;
    }
    match verify::run_all(p) {
        Ok(reports) => {
            let failed = reports.iter().filter(|r| !r.pass).count();
            unsafe { *failed_out = failed };
            WavelabStatus::Ok
        }
        Err(_) => WavelabStatus::NumericError,
    }
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn wavelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
