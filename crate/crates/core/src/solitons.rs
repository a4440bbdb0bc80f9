//! Closed-form soliton families on the weighted interval.
//!
//! The stationary family is `kappa(d,y) = kappa0 (1-d^2)^{1/(p-1)} / (1+dy)^{2/(p-1)}`
//! for `|d| < 1`. The generalized (two-component) family
//! `kappa*(d,nu) = (kappa*_1, nu d/dnu kappa*_1)` interpolates along heteroclinic
//! orbits between `kappa(d)`, zero and blow-up; its amplitude relative to the
//! pure soliton at the shifted velocity `d* = d/(1+nu)` is
//! `lambda(d,nu) = (1-d^2)^{1/(p-1)} / ((1+nu)^2 - d^2)^{1/(p-1)}`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Error;
use crate::functionals::FieldPair;
use crate::grid::{Field, ModelParams, WeightedGrid, WeightKind};
use crate::special;
use crate::Result;

/// Relative margin of the strict domain inequality `1 + nu - |d| > 0`; the
/// profile has a pole on the closed interval when the margin degenerates.
const DOMAIN_GUARD: f64 = 1e-14;

/// `lambda(d, nu)`; satisfies `lambda^{1-p} = (1 + nu/(1-d)) (1 + nu/(1+d))`.
pub fn lambda(params: &ModelParams, d: f64, nu: f64) -> f64 {
    let q = params.q();
    ((1.0 - d * d) / ((1.0 + nu) * (1.0 + nu) - d * d)).powf(q)
}

/// One generalized soliton's parameters with the derived quantities used
/// throughout the decomposition machinery.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolitonParam {
    pub d: f64,
    pub nu: f64,
    /// `d/(1+nu)`, the velocity of the pure soliton sharing the center.
    pub d_star: f64,
    /// `-argtanh(d_star)`, the hyperbolic center.
    pub zeta_star: f64,
    /// `nu/(1-d^2)`, the second Newton coordinate.
    pub eta: f64,
    /// `nu/(1-|d|)`, the admissible-region coordinate.
    pub mu_ratio: f64,
    /// Amplitude factor relative to `kappa(d_star)`.
    pub lambda: f64,
}

impl SolitonParam {
    pub fn new(params: &ModelParams, d: f64, nu: f64) -> Result<Self> {
        if !(d.abs() < 1.0) || !d.is_finite() {
            return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
        }
        if !nu.is_finite() || 1.0 + nu - d.abs() <= DOMAIN_GUARD * (1.0 - d.abs()) {
            return Err(Error::domain(
                format!("soliton undefined on (-1,1): 1 + nu - |d| = {} <= 0", 1.0 + nu - d.abs()),
                None,
            ));
        }
        let d_star = d / (1.0 + nu);
        if !(d_star.abs() < 1.0) {
            return Err(Error::domain(format!("|d*| = {} >= 1", d_star.abs()), None));
        }
        Ok(SolitonParam {
            d,
            nu,
            d_star,
            zeta_star: -d_star.atanh(),
            eta: nu / (1.0 - d * d),
            mu_ratio: nu / (1.0 - d.abs()),
            lambda: lambda(params, d, nu),
        })
    }
}

/// A signed ordered sum of generalized solitons; signs alternate as
/// `sign_i = theta1 (-1)^{i+1}` and the centers `zeta_star` increase.
#[derive(Debug, Clone)]
pub struct SolitonSum {
    pub theta1: f64,
    pub terms: Vec<SolitonParam>,
}

impl SolitonSum {
    pub fn new(theta1: f64, terms: Vec<SolitonParam>) -> Result<Self> {
        if theta1 != 1.0 && theta1 != -1.0 {
            return Err(Error::parameter("theta1 must be +1 or -1"));
        }
        for w in terms.windows(2) {
            if w[1].zeta_star <= w[0].zeta_star {
                return Err(Error::parameter("soliton centers must be strictly increasing"));
            }
        }
        Ok(SolitonSum { theta1, terms })
    }

    #[inline]
    pub fn sign(&self, i: usize) -> f64 {
        if i % 2 == 0 {
            self.theta1
        } else {
            -self.theta1
        }
    }

    /// First component of the sum at a point.
    pub fn first_component_at(&self, params: &ModelParams, y: f64) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, sp)| self.sign(i) * kappa_star_first_at(params, sp.d, sp.nu, y))
            .sum()
    }
}

/// Pointwise `kappa(d, y)`.
#[inline]
pub fn kappa_at(params: &ModelParams, d: f64, y: f64) -> f64 {
    let q = params.q();
    params.kappa0() * (1.0 - d * d).powf(q) / (1.0 + d * y).powf(2.0 * q)
}

/// Pointwise `d/dy kappa(d, y)`.
#[inline]
pub fn kappa_dy_at(params: &ModelParams, d: f64, y: f64) -> f64 {
    let q = params.q();
    -2.0 * q * d * params.kappa0() * (1.0 - d * d).powf(q) / (1.0 + d * y).powf(2.0 * q + 1.0)
}

/// Pointwise first component of `kappa*(d, nu, y)`.
#[inline]
pub fn kappa_star_first_at(params: &ModelParams, d: f64, nu: f64, y: f64) -> f64 {
    let q = params.q();
    params.kappa0() * (1.0 - d * d).powf(q) / (1.0 + d * y + nu).powf(2.0 * q)
}

/// Pointwise second component of `kappa*(d, nu, y)`.
#[inline]
pub fn kappa_star_second_at(params: &ModelParams, d: f64, nu: f64, y: f64) -> f64 {
    let q = params.q();
    -2.0 * q * params.kappa0() * nu * (1.0 - d * d).powf(q)
        / (1.0 + d * y + nu).powf(2.0 * q + 1.0)
}

/// The stationary soliton as a field.
pub fn kappa(params: &ModelParams, d: f64, grid: &Arc<WeightedGrid>) -> Result<Field> {
    if !(d.abs() < 1.0) {
        return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
    }
    Ok(Field::from_fn(grid, |y| kappa_at(params, d, y)))
}

/// The generalized soliton as a field pair.
pub fn kappa_star(params: &ModelParams, sp: &SolitonParam, grid: &Arc<WeightedGrid>) -> FieldPair {
    let q1 = Field::from_fn(grid, |y| kappa_star_first_at(params, sp.d, sp.nu, y));
    let q2 = Field::from_fn(grid, |y| kappa_star_second_at(params, sp.d, sp.nu, y));
    FieldPair::new(q1, q2).expect("kappa_star fields share a grid")
}

/// Analytic partials of both components of `kappa*` with respect to `d` and
/// `nu`. The Newton fitter requires smooth, noise-free Jacobian entries, so
/// these are closed forms; tests cross-check them against central finite
/// differences.
pub fn kappa_star_derivs(
    params: &ModelParams,
    sp: &SolitonParam,
    grid: &Arc<WeightedGrid>,
) -> (FieldPair, FieldPair) {
    let (p, k0, q) = (params.p(), params.kappa0(), params.q());
    let (d, nu) = (sp.d, sp.nu);
    let c = (1.0 - d * d).powf(q);
    let cd = -2.0 * d * q * (1.0 - d * d).powf(q - 1.0);
    let e1 = 2.0 * q; // exponent of the denominator in kappa*_1
    let d_by_d = FieldPair::new(
        Field::from_fn(grid, |y| {
            let b = 1.0 + d * y + nu;
            k0 * (cd / b.powf(e1) - c * e1 * y / b.powf(e1 + 1.0))
        }),
        Field::from_fn(grid, |y| {
            let b = 1.0 + d * y + nu;
            4.0 * d * k0 * nu * q * q * (1.0 - d * d).powf(q - 1.0) / b.powf(e1 + 1.0)
                + 2.0 * (p + 1.0) * k0 * y * nu / ((p - 1.0) * (p - 1.0)) * c / b.powf(e1 + 2.0)
        }),
    )
    .expect("aligned");
    let d_by_nu = FieldPair::new(
        Field::from_fn(grid, |y| {
            let b = 1.0 + d * y + nu;
            -2.0 * k0 * q * c / b.powf(e1 + 1.0)
        }),
        Field::from_fn(grid, |y| {
            let b = 1.0 + d * y + nu;
            -2.0 * k0 * q * c / b.powf(e1 + 1.0)
                + 2.0 * (p + 1.0) * k0 * nu / ((p - 1.0) * (p - 1.0)) * c / b.powf(e1 + 2.0)
        }),
    )
    .expect("aligned");
    (d_by_d, d_by_nu)
}

/// The two explicit eigen-directions `F_l(d)` of the linearization around
/// `kappa(d)`, eigenvalues `l = 0, 1`.
pub fn eigen_f(params: &ModelParams, d: f64, l: usize, grid: &Arc<WeightedGrid>) -> Result<FieldPair> {
    if !(d.abs() < 1.0) {
        return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
    }
    let q = params.q();
    match l {
        1 => {
            let c = (1.0 - d * d).powf(q + 1.0);
            let f = Field::from_fn(grid, |y| c / (1.0 + d * y).powf(2.0 * q + 1.0));
            Ok(FieldPair::new(f.clone(), f).expect("aligned"))
        }
        0 => {
            let c = (1.0 - d * d).powf(q);
            let f = Field::from_fn(grid, |y| c * (y + d) / (1.0 + d * y).powf(2.0 * q + 1.0));
            let z = Field::zeros(grid);
            Ok(FieldPair::new(f, z).expect("aligned"))
        }
        _ => Err(Error::parameter(format!("eigen index must be 0 or 1, got {l}"))),
    }
}

/// Normalization constants of the dual directions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualConstants {
    pub c1: f64,
    pub c0: f64,
    pub i2: f64,
    pub i3: f64,
}

/// `I_n(d) = ∫ (1-y^2) rho / (1+dy)^{4/(p-1)+n} dy` by quadrature.
pub fn moment_in(params: &ModelParams, d: f64, n: u32, grid: &Arc<WeightedGrid>) -> f64 {
    let e = 4.0 * params.q() + n as f64;
    let f: Vec<f64> = grid.nodes.iter().map(|&y| (1.0 + d * y).powf(-e)).collect();
    grid.integrate_samples(&f, WeightKind::RhoTimes)
}

/// `c_1(d)` and `c_0`: `1/c_1 = (1-d^2)^{(p+1)/(p-1)} (I_2 + 2(p+1)/(p-1) I_3)`
/// and `1/c_0 = 4/(p-1) ∫ Y^2 (1-Y^2)^{2/(p-1)-1} dY` (the substituted form,
/// which removes the apparent `1/(1-y^2)` singularity analytically).
pub fn constants_c(params: &ModelParams, d: f64, grid: &Arc<WeightedGrid>) -> Result<DualConstants> {
    if !(d.abs() < 1.0) {
        return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
    }
    let i2 = moment_in(params, d, 2, grid);
    let i3 = moment_in(params, d, 3, grid);
    let p = params.p();
    let inv_c1 = (1.0 - d * d).powf((p + 1.0) / (p - 1.0)) * (i2 + 2.0 * (p + 1.0) / (p - 1.0) * i3);
    let inv_c0 = 4.0 / (p - 1.0) * special::second_moment(params.alpha() - 1.0);
    Ok(DualConstants { c1: 1.0 / inv_c1, c0: 1.0 / inv_c0, i2, i3 })
}

/// `d/dd I_n(d)` (differentiation under the integral sign).
pub fn moment_in_dd(params: &ModelParams, d: f64, n: u32, grid: &Arc<WeightedGrid>) -> f64 {
    let e = 4.0 * params.q() + n as f64;
    let f: Vec<f64> = grid.nodes.iter().map(|&y| -e * y * (1.0 + d * y).powf(-e - 1.0)).collect();
    grid.integrate_samples(&f, WeightKind::RhoTimes)
}

/// `d/dd c_1(d)`.
pub fn c1_dd(params: &ModelParams, d: f64, grid: &Arc<WeightedGrid>) -> f64 {
    let p = params.p();
    let e = (p + 1.0) / (p - 1.0);
    let i2 = moment_in(params, d, 2, grid);
    let i3 = moment_in(params, d, 3, grid);
    let di2 = moment_in_dd(params, d, 2, grid);
    let di3 = moment_in_dd(params, d, 3, grid);
    let a = 2.0 * (p + 1.0) / (p - 1.0);
    let g = (1.0 - d * d).powf(e) * (i2 + a * i3);
    let dg = -2.0 * d * e * (1.0 - d * d).powf(e - 1.0) * (i2 + a * i3)
        + (1.0 - d * d).powf(e) * (di2 + a * di3);
    -dg / (g * g)
}

/// Second component `W_{l,2}(d, y)` of the dual direction (closed form).
pub fn dual_w2(params: &ModelParams, d: f64, l: usize, grid: &Arc<WeightedGrid>) -> Result<Field> {
    let cs = constants_c(params, d, grid)?;
    let q = params.q();
    let c = (1.0 - d * d).powf(q);
    match l {
        1 => Ok(Field::from_fn(grid, |y| {
            cs.c1 * c * (1.0 - y * y) / (1.0 + d * y).powf(2.0 * q + 1.0)
        })),
        0 => Ok(Field::from_fn(grid, |y| {
            cs.c0 * c * (y + d) / (1.0 + d * y).powf(2.0 * q + 1.0)
        })),
        _ => Err(Error::parameter(format!("dual index must be 0 or 1, got {l}"))),
    }
}

/// Heteroclinic orbit `kappa*(d, mu e^s)` as a field pair. For `mu < 0` the
/// orbit leaves the admissible region at `s = log((|d|-1)/mu)`; past that the
/// call reports a domain error carrying the critical time.
pub fn heteroclinic(
    params: &ModelParams,
    d: f64,
    mu: f64,
    s: f64,
    grid: &Arc<WeightedGrid>,
) -> Result<FieldPair> {
    if !(d.abs() < 1.0) {
        return Err(Error::parameter(format!("|d| must be < 1, got {d}")));
    }
    let nu = mu * s.exp();
    if 1.0 + nu - d.abs() <= 0.0 {
        let critical = if mu < 0.0 { Some(((d.abs() - 1.0) / mu).ln()) } else { None };
        return Err(Error::domain(
            format!("heteroclinic orbit undefined at s = {s} (nu = {nu})"),
            critical,
        ));
    }
    let sp = SolitonParam::new(params, d, nu)?;
    Ok(kappa_star(params, &sp, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals;
    use crate::grid::{build_grid, ModelParams};

    fn setup() -> (ModelParams, Arc<WeightedGrid>) {
        let params = ModelParams::new(3.0).unwrap();
        let grid = build_grid(params, 64).unwrap();
        (params, grid)
    }

    #[test]
    fn kappa_values_p3() {
        let (params, grid) = setup();
        // d = 0: kappa = kappa0 = sqrt(2)
        let k = kappa(&params, 0.0, &grid).unwrap();
        for v in &k.values {
            assert!((v - 2.0_f64.sqrt()).abs() < 1e-14);
        }
        // d = 0.5 at y = 0: sqrt(2) * sqrt(0.75)
        let v = kappa_at(&params, 0.5, 0.0);
        assert!((v - (1.5_f64).sqrt()).abs() < 1e-14);
        assert!(kappa(&params, 1.0, &grid).is_err());
    }

    #[test]
    fn kappa_sup_bound_in_flat_chart() {
        // sup_y kappa(d,y) (1-y^2)^{1/(p-1)} = kappa0 (the sech profile peak).
        let (params, grid) = setup();
        for &d in &[0.0, 0.5, -0.9] {
            let k = kappa(&params, d, &grid).unwrap();
            let bar = crate::grid::chart_xi(&grid, &k, crate::grid::XiMode::Bar).unwrap();
            let sup = bar.iter().cloned().fold(0.0f64, f64::max);
            assert!(sup <= params.kappa0() * (1.0 + 1e-12), "d={d}: sup {sup}");
        }
    }

    #[test]
    fn kappa_dy_matches_fd() {
        let (params, _) = setup();
        for &d in &[0.3, -0.7] {
            for &y in &[-0.5, 0.0, 0.61] {
                let h = 1e-6;
                let fd = (kappa_at(&params, d, y + h) - kappa_at(&params, d, y - h)) / (2.0 * h);
                let an = kappa_dy_at(&params, d, y);
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lambda_factorization_identity() {
        // kappa*_1(d,nu,y) = lambda * kappa(d*, y) pointwise.
        let (params, grid) = setup();
        for &(d, nu) in &[(0.0, 0.5), (0.3, 0.2), (-0.6, 0.05), (0.5, -0.2)] {
            let sp = SolitonParam::new(&params, d, nu).unwrap();
            let ks = kappa_star(&params, &sp, &grid);
            let kd = kappa(&params, sp.d_star, &grid).unwrap();
            for (a, b) in ks.q1.values.iter().zip(&kd.values) {
                assert!((a - sp.lambda * b).abs() < 1e-12 * b.abs().max(1.0), "(d,nu)=({d},{nu})");
            }
        }
    }

    #[test]
    fn lambda_product_identity() {
        // lambda^{1-p} = (1 + nu/(1-d)) (1 + nu/(1+d))
        let (params, _) = setup();
        for &(d, nu) in &[(0.0, 1.0), (0.3, 0.2), (-0.8, 0.5), (0.4, -0.3)] {
            let sp = SolitonParam::new(&params, d, nu).unwrap();
            let lhs = sp.lambda.powf(1.0 - params.p());
            let rhs = (1.0 + nu / (1.0 - d)) * (1.0 + nu / (1.0 + d));
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
        }
    }

    #[test]
    fn kappa_star_at_nu_zero_is_pure_soliton() {
        let (params, grid) = setup();
        let sp = SolitonParam::new(&params, 0.4, 0.0).unwrap();
        let ks = kappa_star(&params, &sp, &grid);
        let kd = kappa(&params, 0.4, &grid).unwrap();
        for (a, b) in ks.q1.values.iter().zip(&kd.values) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(ks.q2.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kappa_star_lambda_half_case() {
        // p=3, d=0, nu=1: lambda = 1/2 so kappa*_1 = kappa0/2 everywhere.
        let (params, grid) = setup();
        let sp = SolitonParam::new(&params, 0.0, 1.0).unwrap();
        assert!((sp.lambda - 0.5).abs() < 1e-14);
        let ks = kappa_star(&params, &sp, &grid);
        for v in &ks.q1.values {
            assert!((v - params.kappa0() / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn kappa_star_second_component_sign() {
        let (params, grid) = setup();
        let pos = SolitonParam::new(&params, 0.2, 0.5).unwrap();
        let neg = SolitonParam::new(&params, 0.2, -0.3).unwrap();
        assert!(kappa_star(&params, &pos, &grid).q2.values.iter().all(|v| *v < 0.0));
        assert!(kappa_star(&params, &neg, &grid).q2.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn region_guard_rejects_pole() {
        let (params, _) = setup();
        assert!(SolitonParam::new(&params, 0.5, -0.5).is_err());
        assert!(SolitonParam::new(&params, 0.5, -0.499999).is_ok());
    }

    #[test]
    fn derivs_match_finite_differences() {
        let (params, grid) = setup();
        let (d, nu) = (0.3, 0.2);
        let sp = SolitonParam::new(&params, d, nu).unwrap();
        let (dd, dnu) = kappa_star_derivs(&params, &sp, &grid);
        let h = 1e-6;
        let spdp = SolitonParam::new(&params, d + h, nu).unwrap();
        let spdm = SolitonParam::new(&params, d - h, nu).unwrap();
        let spnp = SolitonParam::new(&params, d, nu + h).unwrap();
        let spnm = SolitonParam::new(&params, d, nu - h).unwrap();
        let (kdp, kdm) = (kappa_star(&params, &spdp, &grid), kappa_star(&params, &spdm, &grid));
        let (knp, knm) = (kappa_star(&params, &spnp, &grid), kappa_star(&params, &spnm, &grid));
        for j in 0..grid.len() {
            let fd1 = (kdp.q1.values[j] - kdm.q1.values[j]) / (2.0 * h);
            let fd2 = (kdp.q2.values[j] - kdm.q2.values[j]) / (2.0 * h);
            assert!((fd1 - dd.q1.values[j]).abs() < 1e-5 * fd1.abs().max(1.0));
            assert!((fd2 - dd.q2.values[j]).abs() < 1e-5 * fd2.abs().max(1.0));
            let fn1 = (knp.q1.values[j] - knm.q1.values[j]) / (2.0 * h);
            let fn2 = (knp.q2.values[j] - knm.q2.values[j]) / (2.0 * h);
            assert!((fn1 - dnu.q1.values[j]).abs() < 1e-5 * fn1.abs().max(1.0));
            assert!((fn2 - dnu.q2.values[j]).abs() < 1e-5 * fn2.abs().max(1.0));
        }
    }

    #[test]
    fn dnu_first_component_at_nu_zero() {
        // At nu = 0 the first component of d/dnu kappa* is -(2/(p-1)) kappa(d,y)/(1+dy).
        let (params, grid) = setup();
        let d = 0.35;
        let sp = SolitonParam::new(&params, d, 0.0).unwrap();
        let (_, dnu) = kappa_star_derivs(&params, &sp, &grid);
        for (j, &y) in grid.nodes.iter().enumerate() {
            let expect = -2.0 / (params.p() - 1.0) * kappa_at(&params, d, y) / (1.0 + d * y);
            assert!((dnu.q1.values[j] - expect).abs() < 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn dnu_aligns_with_eigen_direction() {
        // (1/L1) d/dnu kappa* + F1(d*) has zero first component (the
        // correction is supported on the second component only).
        let (params, grid) = setup();
        for &(d, nu) in &[(0.3, 0.0), (0.3, 0.4), (-0.5, 0.25)] {
            let sp = SolitonParam::new(&params, d, nu).unwrap();
            let (_, dnu) = kappa_star_derivs(&params, &sp, &grid);
            let f1 = eigen_f(&params, sp.d_star, 1, &grid).unwrap();
            let l1 = 2.0 * params.kappa0() * sp.lambda
                / ((params.p() - 1.0) * (1.0 + nu) * (1.0 - sp.d_star * sp.d_star));
            for j in 0..grid.len() {
                let v = dnu.q1.values[j] / l1 + f1.q1.values[j];
                assert!(v.abs() < 1e-10, "(d,nu)=({d},{nu}): {v}");
            }
        }
    }

    #[test]
    fn eigen_f0_at_zero_velocity() {
        let (params, grid) = setup();
        let f0 = eigen_f(&params, 0.0, 0, &grid).unwrap();
        for (j, &y) in grid.nodes.iter().enumerate() {
            assert!((f0.q1.values[j] - y).abs() < 1e-14);
            assert!(f0.q2.values[j] == 0.0);
        }
    }

    #[test]
    fn eigen_norms_bounded_on_lattice() {
        let (params, grid) = setup();
        for l in 0..2 {
            for &d in &[-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9] {
                let f = eigen_f(&params, d, l, &grid).unwrap();
                let n = functionals::norm_h(&grid, &f).unwrap();
                assert!(n < 10.0, "l={l}, d={d}: |F| = {n}");
                assert!(n > 0.05);
            }
        }
    }

    #[test]
    fn constants_p3_reference_values() {
        let (params, grid) = setup();
        let cs = constants_c(&params, 0.0, &grid).unwrap();
        // I_n(0) = ∫ (1-y^2)^2 dy = 16/15 independent of n at d = 0.
        assert!((cs.i2 - 16.0 / 15.0).abs() < 1e-12);
        assert!((cs.i3 - 16.0 / 15.0).abs() < 1e-12);
        // c0 = 3/4 for p = 3.
        assert!((cs.c0 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn c1_normalization_bounded() {
        let (params, grid) = setup();
        for &d in &[-0.95, -0.6, 0.0, 0.6, 0.95] {
            let cs = constants_c(&params, d, &grid).unwrap();
            let v = cs.c1 * (1.0 - d * d).powf((params.p() + 1.0) / (params.p() - 1.0)) * cs.i2;
            assert!(v > 1e-2 && v < 1e2, "d={d}: {v}");
        }
    }

    #[test]
    fn c1_dd_matches_fd() {
        let (params, grid) = setup();
        for &d in &[0.0, 0.45, -0.7] {
            let h = 1e-6;
            let cp = constants_c(&params, d + h, &grid).unwrap().c1;
            let cm = constants_c(&params, d - h, &grid).unwrap().c1;
            let fd = (cp - cm) / (2.0 * h);
            let an = c1_dd(&params, d, &grid);
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "d={d}: {fd} vs {an}");
        }
    }

    #[test]
    fn dual_w2_closed_forms_at_zero() {
        let (params, grid) = setup();
        let w0 = dual_w2(&params, 0.0, 0, &grid).unwrap();
        let w1 = dual_w2(&params, 0.0, 1, &grid).unwrap();
        let cs = constants_c(&params, 0.0, &grid).unwrap();
        for (j, &y) in grid.nodes.iter().enumerate() {
            assert!((w0.values[j] - cs.c0 * y).abs() < 1e-13);
            assert!((w1.values[j] - cs.c1 * (1.0 - y * y)).abs() < 1e-13);
        }
        // W_{1,2} > 0 on the open interval for all |d| < 1.
        for &d in &[-0.9, 0.2, 0.8] {
            let w = dual_w2(&params, d, 1, &grid).unwrap();
            assert!(w.values.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn heteroclinic_limits() {
        let (params, grid) = setup();
        // mu = 0: stationary for any s.
        let h0 = heteroclinic(&params, 0.3, 0.0, 5.0, &grid).unwrap();
        let k = kappa(&params, 0.3, &grid).unwrap();
        for (a, b) in h0.q1.values.iter().zip(&k.values) {
            assert!((a - b).abs() < 1e-14);
        }
        // mu > 0: H-norm decreasing towards 0 along s.
        let mut last = f64::INFINITY;
        for s in [-2.0, 0.0, 2.0, 4.0, 8.0] {
            let h = heteroclinic(&params, 0.3, 1.0, s, &grid).unwrap();
            let n = functionals::norm_h(&grid, &h).unwrap();
            assert!(n < last);
            last = n;
        }
        assert!(last < 1e-2);
        // mu < 0: domain error exactly past s_crit = log((|d|-1)/mu).
        let mu = -0.25;
        let s_crit = ((0.3_f64.abs() - 1.0) / mu).ln();
        let err = heteroclinic(&params, 0.3, mu, s_crit + 1e-9, &grid).unwrap_err();
        match err {
            Error::Domain { critical, .. } => {
                let c = critical.unwrap();
                assert!((c - s_crit).abs() < 1e-9);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(heteroclinic(&params, 0.3, mu, s_crit - 1e-6, &grid).is_ok());
    }

    #[test]
    fn vanishing_lambda_example() {
        // p=3, d=0, nu=9: lambda^2 = 1/100.
        let (params, _) = setup();
        let sp = SolitonParam::new(&params, 0.0, 9.0).unwrap();
        assert!((sp.lambda - 0.1).abs() < 1e-12);
    }
}
