//! Fitting a signed sum of generalized solitons to a state in `H` by Newton
//! iteration on the `2m` orthogonality conditions `pi_l^{d_i*}(q) = 0`.
//!
//! Newton runs in the `(zeta_i, eta_i) = (-argtanh d_i, nu_i/(1-d_i^2))`
//! coordinates, where the change-of-variables Jacobian stays uniformly
//! conditioned as `d -> +-1`. The analytic block Jacobian pairs the closed
//! form soliton derivatives with the dual directions and carries the
//! `d`-derivative correction of the projector itself.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Error;
use crate::functionals::{self, FieldPair};
use crate::grid::{ModelParams, WeightedGrid};
use crate::linalg;
use crate::solitons::{self, SolitonParam};
use crate::Result;

/// `(d, nu) -> (zeta, eta) = (-argtanh d, nu/(1-d^2))`.
pub fn change_vars(d: f64, nu: f64) -> (f64, f64) {
    (-d.atanh(), nu / (1.0 - d * d))
}

/// Inverse map `(zeta, eta) -> (d, nu) = (-tanh zeta, eta (1 - tanh^2 zeta))`.
pub fn change_vars_inverse(zeta: f64, eta: f64) -> (f64, f64) {
    let d = -zeta.tanh();
    (d, eta * (1.0 - d * d))
}

/// Jacobian of `(d, nu)` with respect to `(zeta, eta)`, row-major
/// `[dd/dzeta, dd/deta, dnu/dzeta, dnu/deta]`.
pub fn jac_zeta_eta(d: f64, nu: f64) -> [f64; 4] {
    let omd = 1.0 - d * d;
    [-omd, 0.0, 2.0 * nu * d, omd]
}

/// Jacobian of `(zeta*, lambda)` with respect to `(d, nu)` (row-major).
pub fn jac_dnu_zetastar_lambda(params: &ModelParams, d: f64, nu: f64) -> [f64; 4] {
    let p = params.p();
    let lam = solitons::lambda(params, d, nu);
    let denom = (1.0 + nu) * (1.0 + nu) - d * d;
    let l2p = lam.powf(2.0 - p);
    [
        -(1.0 + nu) / denom,
        d / denom,
        2.0 * d * l2p * (1.0 - (1.0 + nu) * (1.0 + nu)) / ((p - 1.0) * denom * denom),
        -2.0 * (1.0 + nu) * l2p * (1.0 - d * d) / ((p - 1.0) * denom * denom),
    ]
}

/// Closed-form inverse of [`jac_dnu_zetastar_lambda`].
pub fn jac_dnu_zetastar_lambda_inv(params: &ModelParams, d: f64, nu: f64) -> [f64; 4] {
    let p = params.p();
    let lam = solitons::lambda(params, d, nu);
    let denom = (1.0 + nu) * (1.0 + nu) - d * d;
    let lp2 = lam.powf(p - 2.0);
    [
        -(1.0 + nu) * (1.0 - d * d),
        -d * lp2 * (p - 1.0) * denom / 2.0,
        -d * (1.0 - (1.0 + nu) * (1.0 + nu)),
        -(1.0 + nu) * lp2 * (p - 1.0) * denom / 2.0,
    ]
}

/// Fit configuration; the defaults suit synthetic and trace data alike.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Convergence threshold on the largest projection.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Initial step scale in `(0, 1]`; steps halve when they leave the
    /// admissible region.
    pub damping: f64,
    /// Admissible-region bound `A`: `-1 + 1/A <= nu/(1-|d|) <= A` (relaxed
    /// internally to the usual `(-1 + 1/(2A), A + 1)` slack).
    pub a_bound: f64,
    /// Minimal accepted separation of consecutive centers `zeta*`.
    pub e_gap_min: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { newton_tol: 1e-10, max_iter: 50, damping: 1.0, a_bound: 10.0, e_gap_min: 0.5 }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.newton_tol <= 0.0 || self.max_iter == 0 || self.e_gap_min <= 0.0 {
            return Err(Error::config("fit tolerances must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("damping must lie in (0, 1]"));
        }
        if self.a_bound < 1.0 {
            return Err(Error::config("a_bound must be >= 1"));
        }
        Ok(())
    }
}

/// Result of a modulation fit.
#[derive(Debug, Clone)]
pub struct ModulationFit {
    pub theta1: f64,
    pub params: Vec<SolitonParam>,
    pub residual: FieldPair,
    pub residual_norm: f64,
    /// Projections ordered `(i, l=0), (i, l=1)` for `i = 0..m`.
    pub projections: Vec<f64>,
    pub j_m: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Serializable view matching the external JSON schema.
#[derive(Debug, Serialize)]
pub struct FitReport {
    pub m: usize,
    pub params: Vec<SolitonParam>,
    pub residual_norm: f64,
    pub projections: Vec<f64>,
    #[serde(rename = "J_m")]
    pub j_m: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ModulationFit {
    pub fn report(&self) -> FitReport {
        FitReport {
            m: self.params.len(),
            params: self.params.clone(),
            residual_norm: self.residual_norm,
            projections: self.projections.clone(),
            j_m: self.j_m,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// `J_m = sum_n e^{-(zeta*_{n+1} - zeta*_n)/(p-1)}`, the exponential coupling
/// between consecutive solitons.
pub fn coupling_j(params: &ModelParams, solitons: &[SolitonParam]) -> f64 {
    solitons
        .windows(2)
        .map(|w| (-(w[1].zeta_star - w[0].zeta_star) / (params.p() - 1.0)).exp())
        .sum()
}

/// True iff the soliton has "vanished" below the scale `e^{-L/(p-1)}`.
pub fn vanishing_check(params: &ModelParams, sp: &SolitonParam, l_scale: f64) -> bool {
    sp.lambda <= (-l_scale / (params.p() - 1.0)).exp()
}

struct IterState {
    zeta_eta: Vec<(f64, f64)>,
    sps: Vec<SolitonParam>,
    q: FieldPair,
    dq1: Vec<f64>,
    projections: Vec<f64>,
}

fn sign_of(theta1: f64, i: usize) -> f64 {
    if i % 2 == 0 {
        theta1
    } else {
        -theta1
    }
}

fn build_state(
    params: &ModelParams,
    v: &FieldPair,
    theta1: f64,
    zeta_eta: &[(f64, f64)],
    grid: &Arc<WeightedGrid>,
) -> Result<IterState> {
    let mut sps = Vec::with_capacity(zeta_eta.len());
    for &(z, e) in zeta_eta {
        let (d, nu) = change_vars_inverse(z, e);
        sps.push(SolitonParam::new(params, d, nu)?);
    }
    let mut q = v.clone();
    for (i, sp) in sps.iter().enumerate() {
        let ks = solitons::kappa_star(params, sp, grid);
        q.axpy(-sign_of(theta1, i), &ks);
    }
    let dq1 = grid.differentiate(&q.q1.values);
    let mut projections = Vec::with_capacity(2 * sps.len());
    for sp in &sps {
        for l in 0..2usize {
            let dual = functionals::dual_direction(params, sp.d_star, l, grid)?;
            projections.push(functionals::pairing_with_dual(&dual, grid, &q, &dq1, false));
        }
    }
    Ok(IterState { zeta_eta: zeta_eta.to_vec(), sps, q, dq1, projections })
}

fn admissible(state: &[SolitonParam], cfg: &FitConfig) -> Result<()> {
    let lo = -1.0 + 1.0 / (2.0 * cfg.a_bound);
    let hi = cfg.a_bound + 1.0;
    for (i, sp) in state.iter().enumerate() {
        if sp.mu_ratio < lo || sp.mu_ratio > hi {
            return Err(Error::Region(format!(
                "soliton {i}: nu/(1-|d|) = {:.4} outside [{lo:.4}, {hi:.4}]",
                sp.mu_ratio
            )));
        }
    }
    for (i, w) in state.windows(2).enumerate() {
        let gap = w[1].zeta_star - w[0].zeta_star;
        if gap < cfg.e_gap_min {
            return Err(Error::Region(format!(
                "solitons {i},{}: center gap {gap:.4} below the accepted minimum {}",
                i + 1,
                cfg.e_gap_min
            )));
        }
    }
    Ok(())
}

/// The `2m x 2m` Newton matrix: rows `(i, l)` with `l = 0, 1`, columns
/// `(zeta_j, eta_j)`. Entry `((i,l), zeta_j)` is
/// `-s_j pi_l^{d_i*}(d/dzeta kappa*_j) + delta_{ij} (dd*_i/dzeta_i) phi(d/dd W_l(d_i*), q)`,
/// and likewise for `eta_j`.
pub fn assemble_jacobian(
    params: &ModelParams,
    theta1: f64,
    sps: &[SolitonParam],
    q: &FieldPair,
    dq1: &[f64],
    grid: &Arc<WeightedGrid>,
) -> Result<Vec<f64>> {
    let m = sps.len();
    let n = 2 * m;
    let mut mat = vec![0.0; n * n];
    // Soliton derivative fields in (zeta, eta) coordinates.
    let mut dzeta_fields = Vec::with_capacity(m);
    let mut deta_fields = Vec::with_capacity(m);
    for sp in sps {
        let (dd, dnu) = solitons::kappa_star_derivs(params, sp, grid);
        let omd = 1.0 - sp.d * sp.d;
        // d/dzeta = -(1-d^2) d/dd + 2 nu d d/dnu ; d/deta = (1-d^2) d/dnu
        let mut dz = dd.clone();
        for v in dz.q1.values.iter_mut().chain(dz.q2.values.iter_mut()) {
            *v *= -omd;
        }
        dz.axpy(2.0 * sp.nu * sp.d, &dnu);
        let mut de = dnu.clone();
        for v in de.q1.values.iter_mut().chain(de.q2.values.iter_mut()) {
            *v *= omd;
        }
        dzeta_fields.push(dz);
        deta_fields.push(de);
    }
    let dz_grads: Vec<Vec<f64>> =
        dzeta_fields.iter().map(|f| grid.differentiate(&f.q1.values)).collect();
    let de_grads: Vec<Vec<f64>> =
        deta_fields.iter().map(|f| grid.differentiate(&f.q1.values)).collect();

    for (i, spi) in sps.iter().enumerate() {
        for l in 0..2usize {
            let row = 2 * i + l;
            let dual = functionals::dual_direction(params, spi.d_star, l, grid)?;
            // Projector-motion correction (only the diagonal blocks move the
            // dual direction's base point).
            let opn = 1.0 + spi.nu;
            let omd = 1.0 - spi.d * spi.d;
            let dstar_dzeta = -omd / opn - 2.0 * spi.nu * spi.d * spi.d / (opn * opn);
            let dstar_deta = -spi.d * omd / (opn * opn);
            let corr = functionals::pairing_with_dual(&dual, grid, q, dq1, true);
            for j in 0..m {
                let s_j = sign_of(theta1, j);
                let pz = functionals::pairing_with_dual(
                    &dual,
                    grid,
                    &dzeta_fields[j],
                    &dz_grads[j],
                    false,
                );
                let pe = functionals::pairing_with_dual(
                    &dual,
                    grid,
                    &deta_fields[j],
                    &de_grads[j],
                    false,
                );
                let mut entry_z = -s_j * pz;
                let mut entry_e = -s_j * pe;
                if i == j {
                    entry_z += dstar_dzeta * corr;
                    entry_e += dstar_deta * corr;
                }
                mat[row * n + 2 * j] = entry_z;
                mat[row * n + 2 * j + 1] = entry_e;
            }
        }
    }
    Ok(mat)
}

/// Newton fit of `m` generalized solitons with signs `theta1, -theta1, ...`
/// in increasing center order.
///
/// Returns the final iterate with `converged` marking whether every
/// projection dropped below `cfg.newton_tol`; callers that need the best
/// iterate of a non-converged run read it from the returned value. Hard
/// failures (inadmissible initialization, singular Jacobian, region exit
/// with a fully damped step) surface as errors.
pub fn fit(
    params: &ModelParams,
    v: &FieldPair,
    theta1: f64,
    init: &[SolitonParam],
    cfg: &FitConfig,
    grid: &Arc<WeightedGrid>,
) -> Result<ModulationFit> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::config("fit requires at least one soliton"));
    }
    if theta1 != 1.0 && theta1 != -1.0 {
        return Err(Error::parameter("theta1 must be +1 or -1"));
    }
    admissible(init, cfg)?;
    let zeta_eta: Vec<(f64, f64)> = init.iter().map(|sp| change_vars(sp.d, sp.nu)).collect();
    let mut state = build_state(params, v, theta1, &zeta_eta, grid)?;
    let mut iterations = 0usize;
    let mut converged = proj_norm(&state.projections) <= cfg.newton_tol;

    while !converged && iterations < cfg.max_iter {
        let mat = assemble_jacobian(params, theta1, &state.sps, &state.q, &state.dq1, grid)?;
        let mut step: Vec<f64> = state.projections.iter().map(|p| -p).collect();
        let mut mat_scratch = mat.clone();
        linalg::solve_dense(&mut mat_scratch, &mut step).map_err(|_| {
            let min_gap = state
                .sps
                .windows(2)
                .map(|w| w[1].zeta_star - w[0].zeta_star)
                .fold(f64::INFINITY, f64::min);
            Error::Fit {
                message: format!("singular Newton matrix (minimal center gap {min_gap:.4})"),
                residual: proj_norm(&state.projections),
                iterations,
            }
        })?;

        // Damped update: halve the step while it leaves the admissible region.
        let mut scale = cfg.damping;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<(f64, f64)> = state
                .zeta_eta
                .iter()
                .enumerate()
                .map(|(j, &(z, e))| (z + scale * step[2 * j], e + scale * step[2 * j + 1]))
                .collect();
            if let Ok(next) = build_state(params, v, theta1, &trial, grid) {
                if admissible(&next.sps, cfg).is_ok() {
                    accepted = Some(next);
                    break;
                }
            }
            scale *= 0.5;
        }
        state = accepted.ok_or_else(|| {
            Error::Region("Newton step cannot stay inside the admissible region".into())
        })?;
        iterations += 1;
        converged = proj_norm(&state.projections) <= cfg.newton_tol;
    }

    let residual_norm = functionals::norm_h(grid, &state.q)?;
    let j_m = coupling_j(params, &state.sps);
    Ok(ModulationFit {
        theta1,
        params: state.sps,
        residual: state.q,
        residual_norm,
        projections: state.projections,
        j_m,
        iterations,
        converged,
    })
}

fn proj_norm(p: &[f64]) -> f64 {
    p.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
