//! Energy space machinery: the `H`/`H0` norms, the bilinear pairing `phi`,
//! the Lyapunov energy `E`, the dual directions `W_l(d)` (a degenerate
//! elliptic solve), projections `pi_l^d`, linearized operators, and the
//! quadratic-form diagnostics used by the decomposition pipeline.
//!
//! The dual solve works in the `xi = argtanh(y)` chart where `-L + 1` becomes
//! a uniformly elliptic 1-D operator with a `sech^2` potential; solutions
//! decay like `e^{-2|xi|/(p-1)}`, so homogeneous Dirichlet conditions at
//! `xi = +-Xi` with `Xi = 30 + |argtanh d|` lose nothing at double precision.
//! The discretization is Numerov's O(h^4) tridiagonal scheme.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::Error;
use crate::grid::{Field, ModelParams, WeightKind, WeightedGrid};
use crate::linalg;
use crate::solitons::{self, SolitonSum};
use crate::Result;

/// A sampled element `(q1, q2)` of the energy space `H`.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub q1: Field,
    pub q2: Field,
}

impl FieldPair {
    pub fn new(q1: Field, q2: Field) -> Result<Self> {
        if !q1.same_grid(&q2) {
            return Err(Error::shape("field pair components live on different grids"));
        }
        Ok(FieldPair { q1, q2 })
    }

    pub fn zeros(grid: &Arc<WeightedGrid>) -> Self {
        FieldPair { q1: Field::zeros(grid), q2: Field::zeros(grid) }
    }

    pub fn from_fns(
        grid: &Arc<WeightedGrid>,
        f1: impl Fn(f64) -> f64,
        f2: impl Fn(f64) -> f64,
    ) -> Self {
        FieldPair { q1: Field::from_fn(grid, f1), q2: Field::from_fn(grid, f2) }
    }

    pub fn grid(&self) -> &Arc<WeightedGrid> {
        self.q1.grid()
    }

    /// `self + c * other`, componentwise.
    pub fn axpy(&mut self, c: f64, other: &FieldPair) {
        for (a, b) in self.q1.values.iter_mut().zip(&other.q1.values) {
            *a += c * b;
        }
        for (a, b) in self.q2.values.iter_mut().zip(&other.q2.values) {
            *a += c * b;
        }
    }
}

fn check_grid(grid: &Arc<WeightedGrid>, f: &Field, what: &str) -> Result<()> {
    if f.grid().id() != grid.id() {
        return Err(Error::shape(format!("{what}: field aligned to a different grid")));
    }
    Ok(())
}

/// `||q1||_{H0}^2 = ∫ (q1^2 + (q1')^2 (1-y^2)) rho dy`.
pub fn norm_h0(grid: &Arc<WeightedGrid>, f: &Field) -> Result<f64> {
    check_grid(grid, f, "norm_h0")?;
    let df = grid.differentiate(&f.values);
    let sq: Vec<f64> = f.values.iter().map(|v| v * v).collect();
    let dsq: Vec<f64> = df.iter().map(|v| v * v).collect();
    let val = grid.integrate_samples(&sq, WeightKind::Rho)
        + grid.integrate_samples(&dsq, WeightKind::RhoTimes);
    Ok(val.max(0.0).sqrt())
}

/// `||(q1,q2)||_H`.
pub fn norm_h(grid: &Arc<WeightedGrid>, v: &FieldPair) -> Result<f64> {
    check_grid(grid, &v.q1, "norm_h")?;
    let n0 = norm_h0(grid, &v.q1)?;
    let sq: Vec<f64> = v.q2.values.iter().map(|v| v * v).collect();
    let val = n0 * n0 + grid.integrate_samples(&sq, WeightKind::Rho);
    Ok(val.max(0.0).sqrt())
}

/// `H`-norm truncated to the node range `lo..=hi` (used for windowed
/// similarity slices where the field is only valid inside the light cone).
pub fn norm_h_range(grid: &Arc<WeightedGrid>, v: &FieldPair, lo: usize, hi: usize) -> f64 {
    let d = grid.differentiate_range(&v.q1.values, lo, hi);
    let mut acc = 0.0;
    for j in lo..=hi {
        acc += v.q1.values[j] * v.q1.values[j] * grid.weights_rho[j]
            + d[j] * d[j] * grid.weights_rho_times[j]
            + v.q2.values[j] * v.q2.values[j] * grid.weights_rho[j];
    }
    acc.max(0.0).sqrt()
}

/// The bilinear form `phi(q, r) = ∫ (q1 r1 + q1' r1' (1-y^2) + q2 r2) rho dy`.
pub fn phi(grid: &Arc<WeightedGrid>, a: &FieldPair, b: &FieldPair) -> Result<f64> {
    check_grid(grid, &a.q1, "phi")?;
    check_grid(grid, &b.q1, "phi")?;
    let da = grid.differentiate(&a.q1.values);
    let db = grid.differentiate(&b.q1.values);
    let mut acc = 0.0;
    for j in 0..grid.len() {
        acc += a.q1.values[j] * b.q1.values[j] * grid.weights_rho[j]
            + da[j] * db[j] * grid.weights_rho_times[j]
            + a.q2.values[j] * b.q2.values[j] * grid.weights_rho[j];
    }
    Ok(acc)
}

/// The Lyapunov functional
/// `E(V) = ∫ (1/2 V2^2 + 1/2 (V1')^2 (1-y^2) + (p+1)/(p-1)^2 V1^2 - |V1|^{p+1}/(p+1)) rho dy`.
pub fn energy(params: &ModelParams, grid: &Arc<WeightedGrid>, v: &FieldPair) -> Result<f64> {
    check_grid(grid, &v.q1, "energy")?;
    let d = grid.differentiate(&v.q1.values);
    Ok(energy_with_grad(params, grid, v, &d, 0, grid.len() - 1))
}

/// Energy restricted to a node range, with the derivative of the first
/// component supplied by the caller.
pub fn energy_with_grad(
    params: &ModelParams,
    grid: &Arc<WeightedGrid>,
    v: &FieldPair,
    dq1: &[f64],
    lo: usize,
    hi: usize,
) -> f64 {
    let p = params.p();
    let c = (p + 1.0) / ((p - 1.0) * (p - 1.0));
    let mut acc = 0.0;
    for j in lo..=hi {
        let v1 = v.q1.values[j];
        let v2 = v.q2.values[j];
        acc += (0.5 * v2 * v2 + c * v1 * v1 - v1.abs().powf(p + 1.0) / (p + 1.0))
            * grid.weights_rho[j]
            + 0.5 * dq1[j] * dq1[j] * grid.weights_rho_times[j];
    }
    acc
}

/// Energy of the constant ODE profile: `E(kappa0) = (p-1)/(2(p+1)) kappa0^{p+1} ∫ rho`.
pub fn energy_kappa0(params: &ModelParams) -> f64 {
    let p = params.p();
    let mass = crate::special::weight_mass(params.alpha());
    (p - 1.0) / (2.0 * (p + 1.0)) * params.kappa0().powf(p + 1.0) * mass
}

/// Closed form of `E(kappa*(d,nu))` from the flat-chart reduction:
/// `E(kappa0) ((p+1)/(p-1) lambda^2 - 2/(p-1) lambda^{p+1} + 2/(p-1) nu^2/(1-d^2) lambda^{p+1})`.
pub fn energy_kappa_star_closed(params: &ModelParams, d: f64, nu: f64) -> f64 {
    let p = params.p();
    let lam = solitons::lambda(params, d, nu);
    let e0 = energy_kappa0(params);
    e0 * ((p + 1.0) / (p - 1.0) * lam * lam - 2.0 / (p - 1.0) * lam.powf(p + 1.0)
        + 2.0 / (p - 1.0) * nu * nu / (1.0 - d * d) * lam.powf(p + 1.0))
}

/// `L q1 = (1-y^2) q1'' - 2 y (p+1)/(p-1) q1'` on the quadrature nodes.
pub fn apply_l(params: &ModelParams, grid: &Arc<WeightedGrid>, f: &[f64]) -> Vec<f64> {
    let d1 = grid.differentiate(f);
    let d2 = grid.differentiate2(f);
    let c = (params.p() + 1.0) / (params.p() - 1.0);
    grid.nodes
        .iter()
        .enumerate()
        .map(|(j, &y)| (1.0 - y * y) * d2[j] - 2.0 * c * y * d1[j])
        .collect()
}

/// The linearization around `kappa(d)`:
/// `L_d (q1,q2) = (q2, L q1 + psi*(d) q1 - (p+3)/(p-1) q2 - 2 y q2')`
/// with `psi*(d) = p kappa(d)^{p-1} - 2(p+1)/(p-1)^2`.
pub fn linearized_apply(
    params: &ModelParams,
    d: f64,
    v: &FieldPair,
    grid: &Arc<WeightedGrid>,
) -> Result<FieldPair> {
    check_grid(grid, &v.q1, "linearized_apply")?;
    let p = params.p();
    let lq1 = apply_l(params, grid, &v.q1.values);
    let dq2 = grid.differentiate(&v.q2.values);
    let c1 = (p + 3.0) / (p - 1.0);
    let c2 = 2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0));
    let out2: Vec<f64> = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            let psi = p * solitons::kappa_at(params, d, y).powf(p - 1.0) - c2;
            lq1[j] + psi * v.q1.values[j] - c1 * v.q2.values[j] - 2.0 * y * dq2[j]
        })
        .collect();
    FieldPair::new(v.q2.clone(), Field::new(grid, out2)?)
}

// ---------------------------------------------------------------------------
// Dual directions W_l(d)
// ---------------------------------------------------------------------------

/// A dual direction `W_l(d) = (W_{l,1}, W_{l,2})` sampled on a grid, together
/// with its `d`-derivative (needed by the modulation Jacobian).
#[derive(Debug)]
pub struct DualDirection {
    pub d: f64,
    pub l: usize,
    pub w1: Vec<f64>,
    pub w1_dy: Vec<f64>,
    pub w2: Vec<f64>,
    pub dw1_dd: Vec<f64>,
    pub dw1_dd_dy: Vec<f64>,
    pub dw2_dd: Vec<f64>,
    /// Residual of the Numerov system in the chart L2 norm (machine level).
    pub solve_residual: f64,
}

/// Closed-form ingredients of the source term of the `W_{l,1}` equation and
/// their `d`-derivatives at fixed `xi`.
struct SourceEval {
    value: f64,
    d_deriv: f64,
}

fn source_at(params: &ModelParams, d: f64, l: usize, c1: f64, dc1: f64, c0: f64, xi: f64) -> SourceEval {
    let p = params.p();
    let q = params.q();
    let y = xi.tanh();
    let u = 1.0 / (xi.cosh() * xi.cosh()); // 1 - y^2
    let c = (1.0 - d * d).powf(q);
    let cd = -2.0 * d * q * (1.0 - d * d).powf(q - 1.0);
    let b = 1.0 + d * y;
    let g = b.powf(-(2.0 * q + 1.0));
    let gd = -(2.0 * q + 1.0) * y * b.powf(-(2.0 * q + 2.0));
    let gp = -(2.0 * q + 1.0) * d * b.powf(-(2.0 * q + 2.0));
    let gpd = -(2.0 * q + 1.0)
        * (b.powf(-(2.0 * q + 2.0)) - (2.0 * q + 2.0) * d * y * b.powf(-(2.0 * q + 3.0)));
    let c_sink = (p + 3.0) / (p - 1.0);
    let c_hardy = 8.0 / (p - 1.0);
    match l {
        1 => {
            // W_{1,2} = c1 c u g; the (1-y^2) cancels the Hardy factor.
            let core = (1.0 - c_sink) * u * g + 4.0 * y * y * g - 2.0 * y * u * gp + c_hardy * g;
            let core_d =
                (1.0 - c_sink) * u * gd + 4.0 * y * y * gd - 2.0 * y * u * gpd + c_hardy * gd;
            let a = c1 * c;
            let ad = dc1 * c + c1 * cd;
            let w = u.powf(1.0 + q);
            SourceEval { value: w * a * core, d_deriv: w * (ad * core + a * core_d) }
        }
        0 => {
            let m = y + d;
            let core = -c_sink * u * m * g - 2.0 * y * u * (g + m * gp) + c_hardy * m * g;
            let core_d = -c_sink * u * (g + m * gd)
                - 2.0 * y * u * (gd + gp + m * gpd)
                + c_hardy * (g + m * gd);
            let bconst = c0 * c;
            let bd = c0 * cd;
            let w = u.powf(q);
            SourceEval { value: w * bconst * core, d_deriv: w * (bd * core + bconst * core_d) }
        }
        _ => unreachable!("dual index is 0 or 1"),
    }
}

/// Numerov (O(h^4)) solve of `-r'' + V r = s` on `[-Xi, Xi]` with Dirichlet
/// ends; returns the solution on the uniform chart grid.
fn numerov_solve(v: &[f64], s: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = v.len();
    assert!(n >= 3 && s.len() == n);
    let m = n - 2;
    let h2 = h * h / 12.0;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let k = i + 1;
        diag[i] = 2.0 + 10.0 * h2 * v[k];
        if i > 0 {
            sub[i] = -(1.0 - h2 * v[k - 1]);
        }
        if i + 1 < m {
            sup[i] = -(1.0 - h2 * v[k + 1]);
        }
        rhs[i] = h2 * (s[k - 1] + 10.0 * s[k] + s[k + 1]);
    }
    linalg::solve_tridiagonal(&sub, &diag, &sup, &mut rhs)?;
    let mut out = vec![0.0; n];
    out[1..=m].copy_from_slice(&rhs);
    Ok(out)
}

/// Residual of the Numerov system (chart L2 norm).
fn numerov_residual(v: &[f64], s: &[f64], h: f64, r: &[f64]) -> f64 {
    let n = v.len();
    let h2 = h * h / 12.0;
    let mut acc = 0.0;
    for k in 1..n - 1 {
        let lhs = -(1.0 - h2 * v[k - 1]) * r[k - 1] + (2.0 + 10.0 * h2 * v[k]) * r[k]
            - (1.0 - h2 * v[k + 1]) * r[k + 1];
        let res = (lhs - h2 * (s[k - 1] + 10.0 * s[k] + s[k + 1])) / (h * h);
        acc += res * res * h;
    }
    acc.sqrt()
}

/// Chart-grid centered 4th-order first derivative (2nd order at the two
/// boundary-adjacent points, where the solution is at the decay floor).
fn chart_derivative(r: &[f64], h: f64) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = if i >= 2 && i + 2 < n {
            (r[i - 2] - 8.0 * r[i - 1] + 8.0 * r[i + 1] - r[i + 2]) / (12.0 * h)
        } else if i >= 1 && i + 1 < n {
            (r[i + 1] - r[i - 1]) / (2.0 * h)
        } else if i == 0 {
            (r[1] - r[0]) / h
        } else {
            (r[n - 1] - r[n - 2]) / h
        };
    }
    out
}

fn cubic_on_uniform(xi0: f64, h: f64, data: &[f64], x: f64) -> (f64, f64) {
    let n = data.len();
    let t = (x - xi0) / h;
    let i = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let f = [data[i], data[i + 1], data[i + 2], data[i + 3]];
    linalg::cubic_interp(xi0 + i as f64 * h, h, &f, x)
}

/// Solves for the dual direction `W_l(d)` on the given grid.
pub fn solve_dual_w1(
    params: &ModelParams,
    d: f64,
    l: usize,
    grid: &Arc<WeightedGrid>,
) -> Result<DualDirection> {
    if !(d.abs() < 1.0) {
        return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
    }
    if l > 1 {
        return Err(Error::parameter(format!("dual index must be 0 or 1, got {l}")));
    }
    let q = params.q();
    let xi_max = 30.0 + d.atanh().abs();
    let h_target = 2.0e-3;
    let n = ((2.0 * xi_max / h_target).ceil() as usize).next_power_of_two().max(16384);
    let h = 2.0 * xi_max / n as f64;
    let npts = n + 1;

    let cs = solitons::constants_c(params, d, grid)?;
    let dc1 = solitons::c1_dd(params, d, grid);

    let vpot_c = 1.0 - 2.0 * q - 4.0 * q * q;
    let mut vpot = Vec::with_capacity(npts);
    let mut src = Vec::with_capacity(npts);
    let mut src_dd = Vec::with_capacity(npts);
    for i in 0..npts {
        let xi = -xi_max + i as f64 * h;
        let u = 1.0 / (xi.cosh() * xi.cosh());
        vpot.push(4.0 * q * q + vpot_c * u);
        let se = source_at(params, d, l, cs.c1, dc1, cs.c0, xi);
        src.push(se.value);
        src_dd.push(se.d_deriv);
    }
    let rbar = numerov_solve(&vpot, &src, h)?;
    let solve_residual = numerov_residual(&vpot, &src, h, &rbar);
    let rbar_dd = numerov_solve(&vpot, &src_dd, h)?;
    let rbar_p = chart_derivative(&rbar, h);
    let rbar_dd_p = chart_derivative(&rbar_dd, h);

    let m = grid.len();
    let mut w1 = vec![0.0; m];
    let mut w1_dy = vec![0.0; m];
    let mut dw1_dd = vec![0.0; m];
    let mut dw1_dd_dy = vec![0.0; m];
    for j in 0..m {
        let xi = grid.xi_nodes[j];
        let y = grid.nodes[j];
        let u = 1.0 - y * y;
        let (rv, _) = cubic_on_uniform(-xi_max, h, &rbar, xi);
        let (rp, _) = cubic_on_uniform(-xi_max, h, &rbar_p, xi);
        let (rdv, _) = cubic_on_uniform(-xi_max, h, &rbar_dd, xi);
        let (rdp, _) = cubic_on_uniform(-xi_max, h, &rbar_dd_p, xi);
        let um_q = u.powf(-q);
        w1[j] = rv * um_q;
        w1_dy[j] = (rp + 2.0 * q * y * rv) * um_q / u;
        dw1_dd[j] = rdv * um_q;
        dw1_dd_dy[j] = (rdp + 2.0 * q * y * rdv) * um_q / u;
    }

    // Closed-form W_{l,2} and its d-derivative.
    let c = (1.0 - d * d).powf(q);
    let cd = -2.0 * d * q * (1.0 - d * d).powf(q - 1.0);
    let mut w2 = vec![0.0; m];
    let mut dw2_dd = vec![0.0; m];
    for (j, &y) in grid.nodes.iter().enumerate() {
        let b = 1.0 + d * y;
        let g = b.powf(-(2.0 * q + 1.0));
        let gd = -(2.0 * q + 1.0) * y * b.powf(-(2.0 * q + 2.0));
        match l {
            1 => {
                let u = 1.0 - y * y;
                w2[j] = cs.c1 * c * u * g;
                dw2_dd[j] = (dc1 * c + cs.c1 * cd) * u * g + cs.c1 * c * u * gd;
            }
            _ => {
                let mfac = y + d;
                w2[j] = cs.c0 * c * mfac * g;
                dw2_dd[j] = cs.c0 * (cd * mfac * g + c * g + c * mfac * gd);
            }
        }
    }

    Ok(DualDirection {
        d,
        l,
        w1,
        w1_dy,
        w2,
        dw1_dd,
        dw1_dd_dy,
        dw2_dd,
        solve_residual,
    })
}

#[derive(PartialEq, Eq, Hash)]
struct DualKey {
    p_bits: u64,
    d_bits: u64,
    l: usize,
    grid_id: u64,
}

type DualCache = RwLock<HashMap<DualKey, Arc<DualDirection>>>;

fn dual_cache() -> &'static DualCache {
    static CACHE: OnceLock<DualCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached dual direction per `(p, d, l, grid)`. Safe for concurrent readers;
/// writes are serialized by the lock.
pub fn dual_direction(
    params: &ModelParams,
    d: f64,
    l: usize,
    grid: &Arc<WeightedGrid>,
) -> Result<Arc<DualDirection>> {
    let key = DualKey {
        p_bits: params.p().to_bits(),
        d_bits: d.to_bits(),
        l,
        grid_id: grid.id(),
    };
    if let Some(hit) = dual_cache().read().expect("dual cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let solved = Arc::new(solve_dual_w1(params, d, l, grid)?);
    let mut w = dual_cache().write().expect("dual cache poisoned");
    if w.len() > 4096 {
        w.clear();
    }
    Ok(w.entry(key).or_insert(solved).clone())
}

/// `pi_l^d(r) = phi(W_l(d), r)`.
pub fn project(
    params: &ModelParams,
    d: f64,
    l: usize,
    r: &FieldPair,
    grid: &Arc<WeightedGrid>,
) -> Result<f64> {
    check_grid(grid, &r.q1, "project")?;
    let dual = dual_direction(params, d, l, grid)?;
    let dr = grid.differentiate(&r.q1.values);
    Ok(pairing_with_dual(&dual, grid, r, &dr, false))
}

/// `phi(W_l(d), r)` (or `phi(d/dd W_l(d), r)` when `use_d_deriv`) with the
/// derivative of `r1` supplied by the caller.
pub fn pairing_with_dual(
    dual: &DualDirection,
    grid: &Arc<WeightedGrid>,
    r: &FieldPair,
    r1_dy: &[f64],
    use_d_deriv: bool,
) -> f64 {
    let (w1, w1p, w2) = if use_d_deriv {
        (&dual.dw1_dd, &dual.dw1_dd_dy, &dual.dw2_dd)
    } else {
        (&dual.w1, &dual.w1_dy, &dual.w2)
    };
    let mut acc = 0.0;
    for j in 0..grid.len() {
        acc += w1[j] * r.q1.values[j] * grid.weights_rho[j]
            + w1p[j] * r1_dy[j] * grid.weights_rho_times[j]
            + w2[j] * r.q2.values[j] * grid.weights_rho[j];
    }
    acc
}

// ---------------------------------------------------------------------------
// Quadratic form around a soliton sum, Lyapunov diagnostics
// ---------------------------------------------------------------------------

/// The potential `psi(y) = p |K*_1(y)|^{p-1} - 2(p+1)/(p-1)^2` of the
/// linearization around the sum.
fn psi_of_sum(params: &ModelParams, sum: &SolitonSum, y: f64) -> f64 {
    let p = params.p();
    let k = sum.first_component_at(params, y);
    p * k.abs().powf(p - 1.0) - 2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0))
}

/// `varphi(a, b) = ∫ (a1' b1' (1-y^2) - psi a1 b1 + a2 b2) rho dy`.
pub fn varphi(
    params: &ModelParams,
    sum: &SolitonSum,
    a: &FieldPair,
    b: &FieldPair,
    grid: &Arc<WeightedGrid>,
) -> Result<f64> {
    check_grid(grid, &a.q1, "varphi")?;
    check_grid(grid, &b.q1, "varphi")?;
    let da = grid.differentiate(&a.q1.values);
    let db = grid.differentiate(&b.q1.values);
    let mut acc = 0.0;
    for (j, &y) in grid.nodes.iter().enumerate() {
        let psi = psi_of_sum(params, sum, y);
        acc += da[j] * db[j] * grid.weights_rho_times[j]
            + (-psi * a.q1.values[j] * b.q1.values[j]
                + a.q2.values[j] * b.q2.values[j])
                * grid.weights_rho[j];
    }
    Ok(acc)
}

/// `A_- = varphi(q, q)`; coercive (`A_- >= ||q||^2 / C`) under the
/// orthogonality conditions and the smallness condition.
pub fn quadratic_form_varphi(
    params: &ModelParams,
    sum: &SolitonSum,
    q: &FieldPair,
    grid: &Arc<WeightedGrid>,
) -> Result<f64> {
    varphi(params, sum, q, q, grid)
}

/// The nonlinear remainder `F(q1)` integrated against `rho`:
/// `F(q1) = |K+q1|^{p+1}/(p+1) - |K|^{p+1}/(p+1) - |K|^{p-1} K q1 - p/2 |K|^{p-1} q1^2`.
fn integral_f(params: &ModelParams, sum: &SolitonSum, q: &FieldPair, grid: &Arc<WeightedGrid>) -> f64 {
    let p = params.p();
    let vals: Vec<f64> = grid
        .nodes
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            let k = sum.first_component_at(params, y);
            let q1 = q.q1.values[j];
            (k + q1).abs().powf(p + 1.0) / (p + 1.0) - k.abs().powf(p + 1.0) / (p + 1.0)
                - k.abs().powf(p - 1.0) * k * q1
                - 0.5 * p * k.abs().powf(p - 1.0) * q1 * q1
        })
        .collect();
    grid.integrate_samples(&vals, WeightKind::Rho)
}

/// The two trapped functionals `h1`, `h2` and the remainder `R_-`:
/// `h1 = 1/2 ||q||_H^2 - ∫ F(q1) rho`,
/// `h2 = 1/2 varphi(q,q) - ∫ F(q1) rho + eta ∫ q1 q2 rho`,
/// `R_- = -∫ F(q1) rho`.
pub fn lyapunov_diagnostics(
    params: &ModelParams,
    sum: &SolitonSum,
    q: &FieldPair,
    eta: f64,
    grid: &Arc<WeightedGrid>,
) -> Result<(f64, f64, f64)> {
    check_grid(grid, &q.q1, "lyapunov_diagnostics")?;
    let nf = integral_f(params, sum, q, grid);
    let nh = norm_h(grid, q)?;
    let a_minus = quadratic_form_varphi(params, sum, q, grid)?;
    let cross: Vec<f64> = q.q1.values.iter().zip(&q.q2.values).map(|(a, b)| a * b).collect();
    let cross_int = grid.integrate_samples(&cross, WeightKind::Rho);
    let h1 = 0.5 * nh * nh - nf;
    let h2 = 0.5 * a_minus - nf + eta * cross_int;
    Ok((h1, h2, -nf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, ModelParams};
    use crate::solitons::{eigen_f, kappa, kappa_at, SolitonParam};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ModelParams, Arc<WeightedGrid>) {
        let params = ModelParams::new(3.0).unwrap();
        let grid = build_grid(params, 64).unwrap();
        (params, grid)
    }

    fn random_pair(grid: &Arc<WeightedGrid>, rng: &mut ChaCha8Rng) -> FieldPair {
        // Smooth random fields: low-order polynomials times a taming factor.
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FieldPair::from_fns(
            grid,
            move |y| c.iter().enumerate().map(|(k, ck)| ck * y.powi(k as i32)).sum(),
            move |y| e.iter().enumerate().map(|(k, ek)| ek * y.powi(k as i32)).sum(),
        )
    }

    #[test]
    fn norm_zero_and_positive() {
        let (_, grid) = setup();
        let z = FieldPair::zeros(&grid);
        assert_eq!(norm_h(&grid, &z).unwrap(), 0.0);
        let f = FieldPair::from_fns(&grid, |y| y, |_| 1.0);
        assert!(norm_h(&grid, &f).unwrap() > 0.0);
    }

    #[test]
    fn norm_of_constant_kappa0() {
        let (params, grid) = setup();
        let v = FieldPair::from_fns(&grid, |_| params.kappa0(), |_| 0.0);
        let n = norm_h(&grid, &v).unwrap();
        assert!((n - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn triangle_inequality_random_pairs() {
        let (_, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_pair(&grid, &mut rng);
            let b = random_pair(&grid, &mut rng);
            let mut sum = a.clone();
            sum.axpy(1.0, &b);
            let (na, nb, ns) = (
                norm_h(&grid, &a).unwrap(),
                norm_h(&grid, &b).unwrap(),
                norm_h(&grid, &sum).unwrap(),
            );
            assert!(ns <= na + nb + 1e-12);
        }
    }

    #[test]
    fn phi_symmetric_and_diagonal() {
        let (_, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a = random_pair(&grid, &mut rng);
            let b = random_pair(&grid, &mut rng);
            let ab = phi(&grid, &a, &b).unwrap();
            let ba = phi(&grid, &b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12 * ab.abs().max(1.0));
            let aa = phi(&grid, &a, &a).unwrap();
            let na = norm_h(&grid, &a).unwrap();
            assert!((aa - na * na).abs() < 1e-12 * aa.max(1.0));
        }
    }

    #[test]
    fn phi_integration_by_parts_identity() {
        // Gradient form vs (-L + 1) form on fields compactly supported in xi.
        let (params, grid) = setup();
        let bump = |y: f64| {
            let xi = y.atanh();
            (-0.5 * xi * xi).exp()
        };
        let a = FieldPair::from_fns(&grid, |y| bump(y) * (1.0 + 0.3 * y), |y| 0.2 * bump(y));
        let b = FieldPair::from_fns(&grid, |y| bump(y) * (y - 0.1), |y| -bump(y));
        let grad_form = phi(&grid, &a, &b).unwrap();
        let lb = apply_l(&params, &grid, &b.q1.values);
        let vals: Vec<f64> = (0..grid.len())
            .map(|j| {
                a.q1.values[j] * (-lb[j] + b.q1.values[j]) + a.q2.values[j] * b.q2.values[j]
            })
            .collect();
        let op_form = grid.integrate_samples(&vals, WeightKind::Rho);
        assert!(
            (grad_form - op_form).abs() < 1e-6 * grad_form.abs().max(1.0),
            "{grad_form} vs {op_form}"
        );
    }

    #[test]
    fn energy_reference_values() {
        let (params, grid) = setup();
        // E(kappa0, 0) = 4/3 for p = 3.
        let v = FieldPair::from_fns(&grid, |_| params.kappa0(), |_| 0.0);
        let e = energy(&params, &grid, &v).unwrap();
        assert!((e - 4.0 / 3.0).abs() < 1e-12);
        assert!((energy_kappa0(&params) - 4.0 / 3.0).abs() < 1e-13);
        // E(kappa(d), 0) = E(kappa0) for all d.
        for &d in &[0.5, -0.5, 0.9, -0.9] {
            let k = kappa(&params, d, &grid).unwrap();
            let v = FieldPair::new(k, Field::zeros(&grid)).unwrap();
            let e = energy(&params, &grid, &v).unwrap();
            assert!((e - 4.0 / 3.0).abs() < 1e-8, "d={d}: {e}");
        }
    }

    #[test]
    fn energy_kappa_star_half_lambda() {
        // p=3, d=0, lambda=1/2 (nu=1): E = 2/3 both by closed form and quadrature.
        let (params, grid) = setup();
        let closed = energy_kappa_star_closed(&params, 0.0, 1.0);
        assert!((closed - 2.0 / 3.0).abs() < 1e-12);
        let sp = SolitonParam::new(&params, 0.0, 1.0).unwrap();
        let ks = crate::solitons::kappa_star(&params, &sp, &grid);
        let e = energy(&params, &grid, &ks).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-8, "{e}");
    }

    #[test]
    fn energy_continuity_bound() {
        let (params, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_pair(&grid, &mut rng);
            let b = random_pair(&grid, &mut rng);
            let (ea, eb) = (energy(&params, &grid, &a).unwrap(), energy(&params, &grid, &b).unwrap());
            let mut diff = a.clone();
            diff.axpy(-1.0, &b);
            let nd = norm_h(&grid, &diff).unwrap();
            let (na, nb) = (norm_h(&grid, &a).unwrap(), norm_h(&grid, &b).unwrap());
            let p = params.p();
            let bound = 40.0 * nd * (1.0 + na.powf(p) + nb.powf(p));
            assert!((ea - eb).abs() <= bound, "|dE|={} bound={}", (ea - eb).abs(), bound);
        }
    }

    #[test]
    fn hardy_sobolev_battery() {
        let (_, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let q = 0.5; // 1/(p-1) for p=3
        for _ in 0..20 {
            let f = random_pair(&grid, &mut rng).q1;
            let h0 = norm_h0(&grid, &f).unwrap();
            let sq: Vec<f64> = f.values.iter().map(|v| v * v).collect();
            let l2_hardy = grid.integrate_samples(&sq, WeightKind::RhoOver).sqrt();
            let sup = grid
                .nodes
                .iter()
                .zip(&f.values)
                .map(|(&y, &v)| (v * (1.0 - y * y).powf(q)).abs())
                .fold(0.0f64, f64::max);
            assert!(l2_hardy + sup <= 20.0 * h0, "{l2_hardy} + {sup} vs {h0}");
        }
    }

    #[test]
    fn linearized_on_eigenfunctions() {
        let (params, grid) = setup();
        for &d in &[0.0, 0.4, -0.7] {
            for l in 0..2usize {
                let f = eigen_f(&params, d, l, &grid).unwrap();
                let lf = linearized_apply(&params, d, &f, &grid).unwrap();
                let mut res = lf.clone();
                res.axpy(-(l as f64), &f);
                let r = norm_h(&grid, &res).unwrap();
                assert!(r < 1e-6, "d={d}, l={l}: residual {r}");
            }
        }
    }

    #[test]
    fn linearized_on_constant_profile() {
        let (params, grid) = setup();
        let p = params.p();
        let v = FieldPair::from_fns(&grid, |_| params.kappa0(), |_| 0.0);
        let lv = linearized_apply(&params, 0.0, &v, &grid).unwrap();
        let expect = (p - 1.0) * 2.0 * (p + 1.0) / ((p - 1.0) * (p - 1.0)) * params.kappa0();
        for v2 in &lv.q2.values {
            assert!((v2 - expect).abs() < 1e-7, "{v2} vs {expect}");
        }
        assert!(lv.q1.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dual_duality_delta() {
        let params = ModelParams::new(3.0).unwrap();
        let grid = build_grid(params, 128).unwrap();
        for &d in &[-0.8, 0.0, 0.8] {
            for l in 0..2usize {
                let dual = dual_direction(&params, d, l, &grid).unwrap();
                assert!(dual.solve_residual < 1e-8, "solve residual {}", dual.solve_residual);
                for m in 0..2usize {
                    let f = eigen_f(&params, d, m, &grid).unwrap();
                    let df = grid.differentiate(&f.q1.values);
                    let v = pairing_with_dual(&dual, &grid, &f, &df, false);
                    let expect = if l == m { 1.0 } else { 0.0 };
                    assert!(
                        (v - expect).abs() < 1e-6,
                        "d={d}, l={l}, m={m}: pairing {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn dual_norm_bounded() {
        let (params, grid) = setup();
        for &d in &[-0.9, -0.5, 0.0, 0.5, 0.9] {
            for l in 0..2usize {
                let dual = dual_direction(&params, d, l, &grid).unwrap();
                let w = FieldPair::new(
                    Field::new(&grid, dual.w1.clone()).unwrap(),
                    Field::new(&grid, dual.w2.clone()).unwrap(),
                )
                .unwrap();
                let n = norm_h(&grid, &w).unwrap();
                assert!(n < 12.0, "d={d}, l={l}: |W| = {n}");
            }
        }
    }

    #[test]
    fn dual_pointwise_hardy_bound() {
        // |W_{l,2}| + |L W_{l,1} - W_{l,1}| <= C kappa(d,y)/(1-y^2) on nodes;
        // the operator side equals the (analytic) source of the equation.
        let (params, grid) = setup();
        let p = params.p();
        for &d in &[-0.6, 0.0, 0.6] {
            for l in 0..2usize {
                let cs = crate::solitons::constants_c(&params, d, &grid).unwrap();
                let dc1 = crate::solitons::c1_dd(&params, d, &grid);
                let dual = dual_direction(&params, d, l, &grid).unwrap();
                for (j, &y) in grid.nodes.iter().enumerate() {
                    let u = 1.0 - y * y;
                    let xi = grid.xi_nodes[j];
                    let rhs =
                        source_at(&params, d, l, cs.c1, dc1, cs.c0, xi).value * u.powf(-1.0 - params.q());
                    let lhs = dual.w2[j].abs() + rhs.abs();
                    let bound = kappa_at(&params, d, y) / u;
                    assert!(lhs <= 12.0 * bound, "d={d} l={l} y={y}: {lhs} vs {bound}");
                }
            }
            let _ = p;
        }
    }

    #[test]
    fn dual_solution_refines() {
        // The chart solve at the default resolution agrees with a solve on a
        // grid of twice the density far below the duality tolerance.
        let (params, grid) = setup();
        let d = 0.5;
        let dual = solve_dual_w1(&params, d, 1, &grid).unwrap();
        // Denser reference via a fresh grid object (cache not involved).
        let params_hi = params;
        let dense = {
            // A denser reference by solving on the same grid but sampling
            // through a refined chart: reuse solve with halved target step by
            // temporarily scaling. Simplest: rebuild with n doubled and
            // compare at shared nodes via interpolation.
            let grid2 = build_grid(params_hi, 128).unwrap();
            solve_dual_w1(&params_hi, d, 1, &grid2).unwrap()
        };
        let grid2 = build_grid(params, 128).unwrap();
        // Compare w1 at the coarse nodes by interpolating the dense samples.
        let dense_field = Field::new(&grid2, dense.w1.clone()).unwrap();
        for (j, &y) in grid.nodes.iter().enumerate() {
            let v = grid2.interpolate(&dense_field.values, y);
            assert!((v - dual.w1[j]).abs() < 1e-8, "y={y}: {v} vs {}", dual.w1[j]);
        }
    }

    #[test]
    fn source_d_derivative_matches_fd() {
        let (params, grid) = setup();
        let h = 1e-6;
        for l in 0..2usize {
            for &d in &[0.0, 0.35, -0.55] {
                for &xi in &[-3.0, -0.7, 0.0, 1.3, 4.0] {
                    let cs = crate::solitons::constants_c(&params, d, &grid).unwrap();
                    let dc1 = crate::solitons::c1_dd(&params, d, &grid);
                    let cs_p = crate::solitons::constants_c(&params, d + h, &grid).unwrap();
                    let cs_m = crate::solitons::constants_c(&params, d - h, &grid).unwrap();
                    let vp = source_at(&params, d + h, l, cs_p.c1, 0.0, cs_p.c0, xi).value;
                    let vm = source_at(&params, d - h, l, cs_m.c1, 0.0, cs_m.c0, xi).value;
                    let fd = (vp - vm) / (2.0 * h);
                    let an = source_at(&params, d, l, cs.c1, dc1, cs.c0, xi).d_deriv;
                    assert!(
                        (fd - an).abs() < 2e-5 * an.abs().max(1.0),
                        "l={l} d={d} xi={xi}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let (params, grid) = setup();
        // pi_l^d(0) = 0.
        let z = FieldPair::zeros(&grid);
        assert_eq!(project(&params, 0.3, 0, &z, &grid).unwrap(), 0.0);
        // pi_0^{d*}(d/dnu kappa*) = 0 at (d, nu) = (0.3, 0.2).
        let sp = SolitonParam::new(&params, 0.3, 0.2).unwrap();
        let (_, dnu) = crate::solitons::kappa_star_derivs(&params, &sp, &grid);
        let v = project(&params, sp.d_star, 0, &dnu, &grid).unwrap();
        assert!(v.abs() < 1e-6, "pi_0(d_nu kappa*) = {v}");
        // pi_1^{d*}(d/dnu kappa*) < 0 and within the bracket on a small lattice.
        for &(d, nu) in &[(0.0, 0.0), (0.3, 0.2), (-0.5, 0.4), (0.6, -0.2)] {
            let sp = SolitonParam::new(&params, d, nu).unwrap();
            let (_, dnu) = crate::solitons::kappa_star_derivs(&params, &sp, &grid);
            let v = project(&params, sp.d_star, 1, &dnu, &grid).unwrap();
            let scaled = v * (1.0 - sp.d_star * sp.d_star);
            assert!(scaled < -1e-2 && scaled > -1e2, "(d,nu)=({d},{nu}): {scaled}");
        }
    }

    #[test]
    fn varphi_coercive_on_orthogonal_complement() {
        let params = ModelParams::new(3.0).unwrap();
        let grid = build_grid(params, 128).unwrap();
        let d = 0.25;
        let sp = SolitonParam::new(&params, d, 0.0).unwrap();
        let sum = SolitonSum::new(1.0, vec![sp]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let raw = random_pair(&grid, &mut rng);
            // Project out the l = 0, 1 directions with the duality pairing.
            let mut q = raw.clone();
            for l in 0..2usize {
                let c = project(&params, sp.d_star, l, &q, &grid).unwrap();
                let f = eigen_f(&params, sp.d_star, l, &grid).unwrap();
                q.axpy(-c, &f);
            }
            for l in 0..2usize {
                let c = project(&params, sp.d_star, l, &q, &grid).unwrap();
                assert!(c.abs() < 1e-6, "projection {l} not killed: {c}");
            }
            let a = quadratic_form_varphi(&params, &sum, &q, &grid).unwrap();
            let n = norm_h(&grid, &q).unwrap();
            assert!(a >= n * n / 100.0, "A- = {a}, |q|^2 = {}", n * n);
        }
    }

    #[test]
    fn varphi_continuity() {
        let (params, grid) = setup();
        let sp = SolitonParam::new(&params, 0.2, 0.1).unwrap();
        let sum = SolitonSum::new(1.0, vec![sp]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let a = random_pair(&grid, &mut rng);
            let b = random_pair(&grid, &mut rng);
            let v = varphi(&params, &sum, &a, &b, &grid).unwrap();
            let bound =
                25.0 * norm_h(&grid, &a).unwrap() * norm_h(&grid, &b).unwrap();
            assert!(v.abs() <= bound);
        }
    }

    #[test]
    fn lyapunov_zero_and_scaling() {
        let (params, grid) = setup();
        let sp = SolitonParam::new(&params, 0.3, 0.05).unwrap();
        let sum = SolitonSum::new(-1.0, vec![sp]).unwrap();
        let z = FieldPair::zeros(&grid);
        let (h1, h2, rm) = lyapunov_diagnostics(&params, &sum, &z, 0.1, &grid).unwrap();
        assert_eq!((h1, h2, rm), (0.0, 0.0, 0.0));
        // h1 / ||q||^2 -> 1/2 as q -> 0 (Taylor scaling over q, q/2, q/4).
        let base = FieldPair::from_fns(&grid, |y| 1e-3 * (1.0 - y * y), |y| 1e-3 * y);
        let mut ratios = Vec::new();
        for k in 0..3 {
            let mut q = base.clone();
            let scale = 0.5f64.powi(k);
            for v in q.q1.values.iter_mut().chain(q.q2.values.iter_mut()) {
                *v *= scale;
            }
            let n = norm_h(&grid, &q).unwrap();
            let (h1, _, _) = lyapunov_diagnostics(&params, &sum, &q, 0.1, &grid).unwrap();
            ratios.push(h1 / (n * n));
        }
        for (k, r) in ratios.iter().enumerate() {
            assert!((r - 0.5).abs() < 1e-2 / 4.0f64.powi(k as i32), "ratio {r}");
        }
        // |R_-| <= C ||q||^3 for p = 3 on small random fields.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let mut q = random_pair(&grid, &mut rng);
            for v in q.q1.values.iter_mut().chain(q.q2.values.iter_mut()) {
                *v *= 1e-2;
            }
            let n = norm_h(&grid, &q).unwrap();
            let (_, _, rm) = lyapunov_diagnostics(&params, &sum, &q, 0.1, &grid).unwrap();
            assert!(rm.abs() <= 30.0 * n.powi(3), "|R-| = {} vs {}", rm.abs(), n.powi(3));
        }
    }

    #[test]
    fn energy_kappa_star_below_ground_level_on_lattice() {
        let params = ModelParams::new(3.0).unwrap();
        let grid = build_grid(params, 128).unwrap();
        let e0 = energy_kappa0(&params);
        for &d in &[-0.9f64, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9] {
            for &mu in &[-0.9f64, -0.5, 0.0, 1.0, 3.0] {
                let nu = mu * (1.0 - d.abs());
                if 1.0 + nu - d.abs() <= 1e-10 {
                    continue;
                }
                let sp = SolitonParam::new(&params, d, nu).unwrap();
                let ks = crate::solitons::kappa_star(&params, &sp, &grid);
                let e = energy(&params, &grid, &ks).unwrap();
                let closed = energy_kappa_star_closed(&params, d, nu);
                assert!((e - closed).abs() < 1e-8, "(d,nu)=({d},{nu}): {e} vs {closed}");
                assert!(closed <= e0 + 1e-12, "(d,nu)=({d},{nu})");
            }
        }
    }

    #[test]
    fn kappa_star_h_norm_bound() {
        // ||kappa*(d,nu)||_H <= C lambda + C 1_{nu<0} |nu| lambda^{(p+1)/2} / sqrt(1-d^2).
        let (params, grid) = setup();
        for &d in &[-0.6f64, 0.0, 0.7] {
            for &mu in &[-0.8f64, -0.3, 0.0, 0.5, 2.0] {
                let nu = mu * (1.0 - d.abs());
                let sp = SolitonParam::new(&params, d, nu).unwrap();
                let ks = crate::solitons::kappa_star(&params, &sp, &grid);
                let n = norm_h(&grid, &ks).unwrap();
                let extra = if nu < 0.0 {
                    nu.abs() / (1.0 - d * d).sqrt() * sp.lambda.powf((params.p() + 1.0) / 2.0)
                } else {
                    0.0
                };
                let bound = 10.0 * (sp.lambda + extra);
                assert!(n <= bound, "(d,nu)=({d},{nu}): {n} vs {bound}");
            }
        }
    }

    #[test]
    fn kappa_star_lipschitz_in_zeta_eta() {
        let (params, grid) = setup();
        let pairs = [
            ((0.3, 0.2), (0.32, 0.22)),
            ((-0.5, 0.1), (-0.48, 0.12)),
            ((0.0, 0.5), (0.05, 0.45)),
        ];
        for &((d1, n1), (d2, n2)) in &pairs {
            let s1 = SolitonParam::new(&params, d1, n1).unwrap();
            let s2 = SolitonParam::new(&params, d2, n2).unwrap();
            let k1 = crate::solitons::kappa_star(&params, &s1, &grid);
            let mut diff = crate::solitons::kappa_star(&params, &s2, &grid);
            diff.axpy(-1.0, &k1);
            let dist = norm_h(&grid, &diff).unwrap();
            let param_dist = (s1.mu_ratio - s2.mu_ratio).abs()
                + (d1.atanh() - d2.atanh()).abs();
            assert!(dist <= 20.0 * param_dist, "dist {dist} vs params {param_dist}");
        }
    }

    #[test]
    fn dual_cache_concurrent_readers() {
        let (params, grid) = setup();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..4 {
                let grid = grid.clone();
                handles.push(scope.spawn(move || {
                    let d = 0.1 * t as f64;
                    let r = FieldPair::from_fns(&grid, |y| y, |y| 1.0 - y * y);
                    let a = project(&params, d, 0, &r, &grid).unwrap();
                    let b = project(&params, d, 0, &r, &grid).unwrap();
                    assert_eq!(a, b);
                }));
            }
            for h in handles {
                h.join().unwrap();
            }
        });
    }
}
