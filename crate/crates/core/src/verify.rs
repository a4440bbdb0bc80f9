//! Brute-force oracle suite: every closed-form identity and inequality used
//! by the decomposition machinery, reproduced by independent quadrature and
//! finite differences on fixed lattices. Constants the theory leaves free are
//! reported as empirical suprema, never asserted.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::functionals::{self, FieldPair};
use crate::grid::{self, build_grid, gauss_gegenbauer, ModelParams, WeightedGrid};
use crate::modulation;
use crate::solitons::{self, SolitonParam};
use crate::Result;

/// Outcome of one check over its input lattice.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub id: String,
    pub lattice: String,
    pub worst_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Reported empirical constants (not asserted).
    pub constants: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(id: &str, lattice: String, worst: f64, tol: f64) -> Self {
        CheckReport {
            id: id.into(),
            lattice,
            worst_deviation: worst,
            tolerance: tol,
            pass: worst <= tol,
            constants: BTreeMap::new(),
        }
    }
}

/// Default `(d, mu)` lattice spanning both edges of the admissible region:
/// `d` over `{0, +-0.3, +-0.6, +-0.9}` and `nu` chosen so that
/// `nu/(1-|d|)` covers `{-0.9, -0.5, 0, 1, 3}`.
pub fn default_lattice() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &d in &[0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9] {
        for &mu in &[-0.9, -0.5, 0.0, 1.0, 3.0] {
            out.push((d, mu * (1.0 - f64::abs(d))));
        }
    }
    out
}

/// Beta-moment identity: the quadrature ratio
/// `∫ Y^2 (1-Y^2)^a dY / ∫ Y^2 (1-Y^2)^{a-1} dY` equals `4/(3p+1)` at
/// `a = 2/(p-1)`, plus the bracketed comparison integral inequality on a
/// lattice of `x d` products.
pub fn check_beta_identity(params: &ModelParams) -> Result<CheckReport> {
    let a = params.alpha();
    let n = 512;
    let ratio = {
        let (ya, wa) = gauss_gegenbauer(a, n)?;
        let (yb, wb) = gauss_gegenbauer(a - 1.0, n)?;
        let num: f64 = ya.iter().zip(&wa).map(|(y, w)| y * y * w).sum();
        let den: f64 = yb.iter().zip(&wb).map(|(y, w)| y * y * w).sum();
        num / den
    };
    let target = 4.0 / (3.0 * params.p() + 1.0);
    let mut worst = (ratio - target).abs();
    let mut report = CheckReport::new(
        "beta-identity",
        format!("p = {}, xd in [0, 0.99]", params.p()),
        worst,
        1e-10,
    );
    report.constants.insert("ratio".into(), ratio);
    report.constants.insert("target".into(), target);

    // Inequality: ∫ Y^2 (1-Y^2)^a / (1 - (xd)^2 Y^2) dY
    //          <= 4/((3p+1)(1-(xd)^2)) ∫ Y^2 (1-Y^2)^{a-1} dY.
    let (ya, wa) = gauss_gegenbauer(a, n)?;
    let (yb, wb) = gauss_gegenbauer(a - 1.0, n)?;
    let den: f64 = yb.iter().zip(&wb).map(|(y, w)| y * y * w).sum();
    let mut ineq_margin = 0.0f64;
    for k in 0..34 {
        let xd = 0.03 * k as f64;
        let lhs: f64 = ya
            .iter()
            .zip(&wa)
            .map(|(y, w)| y * y / (1.0 - xd * xd * y * y) * w)
            .sum();
        let rhs = 4.0 / ((3.0 * params.p() + 1.0) * (1.0 - xd * xd)) * den;
        ineq_margin = ineq_margin.max(lhs - rhs);
    }
    report.constants.insert("comparison_excess".into(), ineq_margin);
    worst = worst.max(ineq_margin.max(0.0));
    report.worst_deviation = worst;
    report.pass = worst <= report.tolerance;
    Ok(report)
}

/// Sign and magnitude brackets of the projection block, with the
/// cross-projection decay measured against the coupling integral oracle.
pub fn check_claim22(
    params: &ModelParams,
    grid: &Arc<WeightedGrid>,
    lattice: &[(f64, f64)],
) -> Result<CheckReport> {
    let mut zero_entry_worst = 0.0f64;
    let mut c_star: f64 = 1.0;
    let mut sign_ok = true;
    for &(d, nu) in lattice {
        if 1.0 + nu - d.abs() <= 1e-10 {
            continue;
        }
        let sp = SolitonParam::new(params, d, nu)?;
        let (dd, dnu) = solitons::kappa_star_derivs(params, &sp, grid);
        let omd = 1.0 - sp.d_star * sp.d_star;
        let p0_nu = functionals::project(params, sp.d_star, 0, &dnu, grid)?;
        let p1_nu = functionals::project(params, sp.d_star, 1, &dnu, grid)?;
        let p0_d = functionals::project(params, sp.d_star, 0, &dd, grid)?;
        let p1_d = functionals::project(params, sp.d_star, 1, &dd, grid)?;
        zero_entry_worst = zero_entry_worst.max(p0_nu.abs());
        sign_ok &= p1_nu < 0.0 && p0_d < 0.0;
        // Empirical C*: every bracket of the claim normalized by (1-d*^2).
        for v in [p1_nu, p0_d] {
            let scaled = (v * omd).abs();
            c_star = c_star.max(scaled).max(1.0 / scaled);
        }
        c_star = c_star.max((p1_d * omd).abs());
    }

    // Off-diagonal decay rate on the coupling integral (flat-chart oracle):
    // I(gap) = ∫ kbar0(xi) kbar0(xi - gap) / (flat Hardy measure) ~ gap e^{-2 gap/(p-1)}.
    let e = 2.0 / (params.p() - 1.0);
    let mut rate_dev = 0.0f64;
    let mut ratios = Vec::new();
    for &gap in &[6.0, 8.0, 10.0] {
        let i1 = grid::sech_product_integral(&[(0.0, e), (gap, e)]);
        ratios.push(i1 / (gap * (-e * gap).exp()));
    }
    for w in ratios.windows(2) {
        rate_dev = rate_dev.max((w[1] / w[0] - 1.0).abs());
    }

    // Two-soliton cross-projection magnitudes at a wide gap.
    let gap = 7.0f64;
    let zpair = [-gap / 2.0, gap / 2.0];
    let sps: Vec<SolitonParam> = zpair
        .iter()
        .map(|&z| SolitonParam::new(params, -(z.tanh()), 0.0))
        .collect::<Result<Vec<_>>>()?;
    let j_m = modulation::coupling_j(params, &sps);
    let mut cross_norm = 0.0f64;
    for i in 0..2 {
        let j = 1 - i;
        let (dd, dnu) = solitons::kappa_star_derivs(params, &sps[j], grid);
        for l in 0..2usize {
            let a = functionals::project(params, sps[i].d_star, l, &dd, grid)?;
            let b = functionals::project(params, sps[i].d_star, l, &dnu, grid)?;
            let omdj = 1.0 - sps[j].d_star * sps[j].d_star;
            cross_norm = cross_norm.max((a.abs() + b.abs()) * omdj / j_m);
        }
    }

    let worst = zero_entry_worst.max(if sign_ok { 0.0 } else { f64::INFINITY });
    let mut report = CheckReport::new(
        "claim22-brackets",
        format!("{} admissible points, gaps 6/8/10", lattice.len()),
        worst,
        1e-6,
    );
    report.constants.insert("c_star".into(), c_star);
    report.constants.insert("cross_over_jm".into(), cross_norm);
    report.constants.insert("offdiag_rate_stability".into(), rate_dev);
    report.pass = report.pass && rate_dev <= 0.05 && cross_norm.is_finite();
    Ok(report)
}

/// Coupling-integral asymptotics: the normalized ratios of
/// `I_1 = ∫ kappa(d_j)^alpha kappa(d_i)^beta (1-y^2)^{(alpha+beta)/(p-1)-1} dy`
/// stabilize as the center gap grows, in both the equal- and
/// distinct-exponent branches.
pub fn check_lem_e1(params: &ModelParams, alpha: f64, beta: f64, gaps: &[f64]) -> Result<CheckReport> {
    if gaps.len() < 3 || gaps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(crate::error::Error::config("gaps must be >= 3 increasing values"));
    }
    let e = 2.0 / (params.p() - 1.0);
    let k0 = params.kappa0();
    let mut ratios = Vec::new();
    for &g in gaps {
        let i1 = k0.powf(alpha + beta)
            * grid::sech_product_integral(&[(0.0, e * alpha), (g, e * beta)]);
        let model = if (alpha - beta).abs() < 1e-12 {
            g * (-e * beta * g).exp()
        } else {
            (-e * alpha.min(beta) * g).exp()
        };
        ratios.push(i1 / model);
    }
    let n = ratios.len();
    let worst = (ratios[n - 1] / ratios[n - 2] - 1.0).abs();
    let mut report = CheckReport::new(
        "lem-e1-asymptotics",
        format!("alpha={alpha}, beta={beta}, gaps {gaps:?}"),
        worst,
        0.05,
    );
    for (g, r) in gaps.iter().zip(&ratios) {
        report.constants.insert(format!("ratio_gap_{g}"), *r);
    }
    // Continuity at gap -> 0: I_1 approaches the single-profile integral.
    let tiny = k0.powf(alpha + beta)
        * grid::sech_product_integral(&[(0.0, e * alpha), (1e-8, e * beta)]);
    let merged = k0.powf(alpha + beta) * grid::sech_product_integral(&[(0.0, e * (alpha + beta))]);
    report
        .constants
        .insert("zero_gap_continuity".into(), (tiny / merged - 1.0).abs());
    report.pass = report.pass && (tiny / merged - 1.0).abs() < 1e-6;
    Ok(report)
}

/// Generalized-soliton identities: closed-form energy vs quadrature, the
/// energy never exceeding the ground level, the Lipschitz estimate in the
/// `(zeta, mu)` coordinates, the inverse estimate on a half-line window, and
/// the energy monotonicity along an escaping orbit.
pub fn check_lem_a2(
    params: &ModelParams,
    grid: &Arc<WeightedGrid>,
    lattice: &[(f64, f64)],
) -> Result<CheckReport> {
    let e0 = functionals::energy_kappa0(params);
    let mut worst = 0.0f64;
    let mut above_ground = 0.0f64;
    for &(d, nu) in lattice {
        if 1.0 + nu - d.abs() <= 1e-10 {
            continue;
        }
        let sp = SolitonParam::new(params, d, nu)?;
        let ks = solitons::kappa_star(params, &sp, grid);
        let quad = functionals::energy(params, grid, &ks)?;
        let closed = functionals::energy_kappa_star_closed(params, d, nu);
        worst = worst.max((quad - closed).abs());
        above_ground = above_ground.max(closed - e0);
    }
    let mut report = CheckReport::new(
        "lem-a2-energy",
        format!("{} admissible points", lattice.len()),
        worst,
        1e-8,
    );
    report.constants.insert("max_energy_above_ground".into(), above_ground);

    // (0,0): exact equality with the ground level.
    let eq = (functionals::energy_kappa_star_closed(params, 0.0, 0.0) - e0).abs();
    report.constants.insert("origin_equality".into(), eq);

    // Lipschitz constant of (zeta, mu) -> kappa* on admissible pairs.
    let mut lip: f64 = 0.0;
    let pairs = [
        ((0.3, 0.2), (0.33, 0.23)),
        ((-0.5, 0.1), (-0.46, 0.13)),
        ((0.7, 0.05), (0.68, 0.08)),
        ((0.0, 0.6), (0.05, 0.55)),
    ];
    for &((d1, n1), (d2, n2)) in &pairs {
        let s1 = SolitonParam::new(params, d1, n1)?;
        let s2 = SolitonParam::new(params, d2, n2)?;
        let k1 = solitons::kappa_star(params, &s1, grid);
        let mut diff = solitons::kappa_star(params, &s2, grid);
        diff.axpy(-1.0, &k1);
        let dist = functionals::norm_h(grid, &diff)?;
        let pdist = (s1.mu_ratio - s2.mu_ratio).abs() + (d1.atanh() - d2.atanh()).abs();
        lip = lip.max(dist / pdist);
    }
    report.constants.insert("lipschitz_constant".into(), lip);

    // Inverse estimate on the half-line window y > tanh(argth(-d*) + A).
    let a_win = 2.0;
    let mut inv: f64 = 0.0;
    for &((d1, n1), (d2, n2)) in &pairs {
        let s1 = SolitonParam::new(params, d1, n1)?;
        let s2 = SolitonParam::new(params, d2, n2)?;
        let cut = ((-s1.d_star).max(-s2.d_star).atanh() + a_win).tanh();
        let lo = grid.nodes.iter().position(|&y| y > cut).unwrap_or(grid.len() - 2);
        let k1 = solitons::kappa_star(params, &s1, grid);
        let mut diff = solitons::kappa_star(params, &s2, grid);
        diff.axpy(-1.0, &k1);
        let dist = functionals::norm_h_range(grid, &diff, lo, grid.len() - 1);
        let pdist = (s1.mu_ratio - s2.mu_ratio).abs() + (d1.atanh() - d2.atanh()).abs();
        inv = inv.max(pdist / dist.max(1e-300));
    }
    report.constants.insert("inverse_constant".into(), inv);

    // Energy monotonicity along the escaping orbit nu = mu e^s, mu > 0.
    let mut mono_violation = 0.0f64;
    let d = 0.4;
    let mut last = f64::INFINITY;
    for k in 0..20 {
        let s = -3.0 + 0.4 * k as f64;
        let e = functionals::energy_kappa_star_closed(params, d, 0.5 * s.exp());
        mono_violation = mono_violation.max(e - last);
        last = e;
    }
    report.constants.insert("orbit_monotonicity_violation".into(), mono_violation);
    report.pass = report.pass
        && above_ground <= 1e-10
        && eq < 1e-12
        && mono_violation <= 1e-12
        && lip.is_finite()
        && inv.is_finite();
    Ok(report)
}

/// Jacobians of the coordinate changes: analytic matrices against central
/// finite differences, exact inverses, and the conditioning-normalization
/// boundedness.
pub fn check_jacobians(params: &ModelParams, lattice: &[(f64, f64)]) -> Result<CheckReport> {
    let h = 1e-6;
    let mut fd_worst = 0.0f64;
    let mut inv_worst = 0.0f64;
    let mut norm_bound: f64 = 0.0;
    for &(d, nu) in lattice {
        if 1.0 + nu - d.abs() <= 1e-6 || d.abs() > 0.95 {
            continue;
        }
        // (zeta, eta) -> (d, nu) block.
        let j = modulation::jac_zeta_eta(d, nu);
        let (z, e) = modulation::change_vars(d, nu);
        let fd = |f: &dyn Fn(f64, f64) -> f64, wrt_zeta: bool| -> f64 {
            if wrt_zeta {
                (f(z + h, e) - f(z - h, e)) / (2.0 * h)
            } else {
                (f(z, e + h) - f(z, e - h)) / (2.0 * h)
            }
        };
        let dzf = |z: f64, e: f64| modulation::change_vars_inverse(z, e).0;
        let nzf = |z: f64, e: f64| modulation::change_vars_inverse(z, e).1;
        for (an, num) in [
            (j[0], fd(&dzf, true)),
            (j[1], fd(&dzf, false)),
            (j[2], fd(&nzf, true)),
            (j[3], fd(&nzf, false)),
        ] {
            fd_worst = fd_worst.max((an - num).abs() / an.abs().max(1.0));
        }

        // (d, nu) -> (zeta*, lambda) block and its closed inverse.
        let jj = modulation::jac_dnu_zetastar_lambda(params, d, nu);
        let zstar = |d: f64, nu: f64| -((d / (1.0 + nu)).atanh());
        let lam = |d: f64, nu: f64| solitons::lambda(params, d, nu);
        let num = [
            (zstar(d + h, nu) - zstar(d - h, nu)) / (2.0 * h),
            (zstar(d, nu + h) - zstar(d, nu - h)) / (2.0 * h),
            (lam(d + h, nu) - lam(d - h, nu)) / (2.0 * h),
            (lam(d, nu + h) - lam(d, nu - h)) / (2.0 * h),
        ];
        for (a, b) in jj.iter().zip(&num) {
            fd_worst = fd_worst.max((a - b).abs() / a.abs().max(1.0));
        }
        let ji = modulation::jac_dnu_zetastar_lambda_inv(params, d, nu);
        // Product must be the identity.
        let prod = [
            jj[0] * ji[0] + jj[1] * ji[2],
            jj[0] * ji[1] + jj[1] * ji[3],
            jj[2] * ji[0] + jj[3] * ji[2],
            jj[2] * ji[1] + jj[3] * ji[3],
        ];
        inv_worst = inv_worst
            .max((prod[0] - 1.0).abs())
            .max(prod[1].abs())
            .max(prod[2].abs())
            .max((prod[3] - 1.0).abs());
        // ||Jac^{-1}|| <= C(A) (1-d^2): boundedness of the normalized form.
        let ninv = ji.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        norm_bound = norm_bound.max(ninv / (1.0 - d * d));
    }
    let worst = fd_worst.max(inv_worst / 1e-5);
    let mut report = CheckReport::new(
        "jacobian-identities",
        format!("{} lattice points", lattice.len()),
        fd_worst,
        1e-5,
    );
    report.constants.insert("inverse_product_deviation".into(), inv_worst);
    report.constants.insert("normalized_inverse_bound".into(), norm_bound);
    report.pass = fd_worst <= 1e-5 && inv_worst <= 1e-10 && norm_bound.is_finite();
    let _ = worst;
    Ok(report)
}

/// Duality, eigen-residual and norm-equivalence checks tying the discrete
/// dual directions to the closed-form eigen directions.
pub fn check_duality(params: &ModelParams, grid: &Arc<WeightedGrid>) -> Result<CheckReport> {
    let mut worst = 0.0f64;
    for &d in &[-0.9, -0.5, 0.0, 0.5, 0.9] {
        for l in 0..2usize {
            let dual = functionals::dual_direction(params, d, l, grid)?;
            for m in 0..2usize {
                let f = solitons::eigen_f(params, d, m, grid)?;
                let df = grid.differentiate(&f.q1.values);
                let v = functionals::pairing_with_dual(&dual, grid, &f, &df, false);
                let expect = if l == m { 1.0 } else { 0.0 };
                worst = worst.max((v - expect).abs());
            }
        }
    }
    let mut report = CheckReport::new(
        "duality-delta",
        "d in {0, +-0.5, +-0.9}, l,m in {0,1}".into(),
        worst,
        1e-6,
    );
    // Eigen residuals of the linearized operator.
    let mut eig = 0.0f64;
    for &d in &[-0.7, 0.0, 0.7] {
        for l in 0..2usize {
            let f = solitons::eigen_f(params, d, l, grid)?;
            let lf = functionals::linearized_apply(params, d, &f, grid)?;
            let mut res = lf;
            res.axpy(-(l as f64), &f);
            eig = eig.max(functionals::norm_h(grid, &res)?);
        }
    }
    report.constants.insert("eigen_residual".into(), eig);
    // Flat-chart norm equivalence on the soliton family.
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    for &d in &[-0.8, -0.4, 0.0, 0.4, 0.8] {
        let k = solitons::kappa(params, d, grid)?;
        let pair = FieldPair::new(k.clone(), k.clone())?;
        let nh = functionals::norm_h(grid, &pair)?;
        let bar = grid::chart_xi(grid, &pair.q1, grid::XiMode::Bar)?;
        let hat = grid::chart_xi(grid, &pair.q2, grid::XiMode::Hat)?;
        // Flat H1 x L2 norm via the dxi measure.
        let mut flat = 0.0;
        for j in 0..grid.len() {
            let w_dxi = grid.weights_rho[j] / ((1.0 - grid.nodes[j].powi(2)) * grid.rho_at(j));
            flat += (bar[j] * bar[j] + hat[j] * hat[j]) * w_dxi;
        }
        // xi-derivative of the bar transform from the y-derivative.
        let df = grid.differentiate(&pair.q1.values);
        let q = params.q();
        for j in 0..grid.len() {
            let y = grid.nodes[j];
            let u = 1.0 - y * y;
            let dbar = u.powf(q + 1.0) * df[j] - 2.0 * q * y * u.powf(q) * pair.q1.values[j];
            let w_dxi = grid.weights_rho[j] / (u * grid.rho_at(j));
            flat += dbar * dbar * w_dxi;
        }
        let ratio = flat.sqrt() / nh;
        ratio_lo = ratio_lo.min(ratio);
        ratio_hi = ratio_hi.max(ratio);
    }
    report.constants.insert("chart_norm_ratio_low".into(), ratio_lo);
    report.constants.insert("chart_norm_ratio_high".into(), ratio_hi);
    report.pass = report.pass
        && eig < 1e-6
        && ratio_lo > 0.05
        && ratio_hi < 20.0;
    Ok(report)
}

/// Runs every check for one exponent; reports are ordered by check id.
pub fn run_all(p: f64) -> Result<Vec<CheckReport>> {
    let params = ModelParams::new(p)?;
    let grid = build_grid(params, 256)?;
    // The projection brackets are checked out to d* ~ 0.99 where the dual
    // pairing converges like n^-4; the finer grid holds the zero entry at
    // the stated tolerance on the whole lattice.
    let grid_fine = build_grid(params, 1024)?;
    let lattice = default_lattice();
    let mut reports = vec![
        check_beta_identity(&params)?,
        check_claim22(&params, &grid_fine, &lattice)?,
        check_lem_e1(&params, 1.0, 1.0, &[6.0, 8.0, 10.0])?,
        check_lem_e1(&params, 1.0, 2.0, &[6.0, 8.0, 10.0])?,
        check_lem_a2(&params, &grid, &lattice)?,
        check_jacobians(&params, &lattice)?,
        check_duality(&params, &grid)?,
    ];
    // Distinct ids for the two E1 branches.
    reports[3].id = "lem-e1-asymptotics-mixed".into();
    reports.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(reports)
}
