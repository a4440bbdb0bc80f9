//! Command-line entry point: `wavelab <verify|fit|solve|curve|analyze>`
//! with `--config file` plus `--key value` overrides. Exit codes: 0 pass,
//! 2 numerical-check failure, 3 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use wavelab_core::analysis::{self, AnalysisConfig, Classification};
use wavelab_core::config::{Command, RunConfig};
use wavelab_core::error::Error;
use wavelab_core::functionals::FieldPair;
use wavelab_core::grid::{build_grid, Field, WeightedGrid};
use wavelab_core::modulation::{self, FitConfig};
use wavelab_core::report::{self, Manifest, Series};
use wavelab_core::solitons::SolitonParam;
use wavelab_core::wave::{self, RunOptions, SliceRequest};
use wavelab_core::{verify, Result};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run_cli(&args) {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("wavelab: numerical checks failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("wavelab: {e}");
            match e {
                Error::Config(_) | Error::Parameter(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run_cli(args: &[String]) -> Result<bool> {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        print_usage();
        return Ok(true);
    }
    let command = Command::parse(&args[0])?;
    let mut config_file: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        let key = a.strip_prefix("--").ok_or_else(|| {
            Error::config(format!("expected --key value pairs, got '{a}'"))
        })?;
        let val = args
            .get(i + 1)
            .ok_or_else(|| Error::config(format!("flag --{key} is missing its value")))?;
        if key == "config" {
            config_file = Some(PathBuf::from(val));
        } else {
            overrides.push((key.to_string(), val.clone()));
        }
        i += 2;
    }
    let cfg = RunConfig::build(command, config_file.as_deref(), &overrides)?;
    let out_dir = cfg.out_dir();
    report::ensure_dir(&out_dir)?;
    let mut manifest = Manifest::new(command.name(), &cfg.canonical());
    let passed = match command {
        Command::Verify => cmd_verify(&cfg, &out_dir, &mut manifest)?,
        Command::Fit => cmd_fit(&cfg, &out_dir, &mut manifest)?,
        Command::Solve => cmd_solve(&cfg, &out_dir, &mut manifest)?,
        Command::Curve => cmd_curve(&cfg, &out_dir, &mut manifest)?.1,
        Command::Analyze => cmd_analyze(&cfg, &out_dir, &mut manifest)?,
    };
    manifest.write(&out_dir)?;
    Ok(passed)
}

fn print_usage() {
    println!(
        "usage: wavelab <command> [--config FILE] [--key value ...]\n\
         commands:\n\
         \x20 verify   run the closed-form identity suite     (--p 3)\n\
         \x20 solve    run the solver and extract a trace     (--preset ... --x0 0)\n\
         \x20 curve    estimate the blow-up curve T(x)        (--preset ... --refinements 1,2,4)\n\
         \x20 fit      fit m solitons to a state CSV          (--input state.csv --m 2 --init init.json)\n\
         \x20 analyze  classification and law-fit pipeline    (--preset odd --x0 0)\n\
         keys are flat key=value text; unknown keys are rejected."
    );
}

fn cmd_verify(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<bool> {
    let p = cfg.f64_or("p", 3.0)?;
    let reports = verify::run_all(p)?;
    let mut all = true;
    let mut text = String::from("check,worst_deviation,tolerance,pass\n");
    for r in &reports {
        let path = out.join(format!("check_{}.json", r.id));
        report::write_json(&path, r)?;
        manifest.record(&path, "verify");
        println!(
            "[{}] {:32} worst {:.3e} tol {:.1e}",
            if r.pass { "pass" } else { "FAIL" },
            r.id,
            r.worst_deviation,
            r.tolerance
        );
        all &= r.pass;
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.id,
            report::fmt_f64(r.worst_deviation),
            report::fmt_f64(r.tolerance),
            i32::from(r.pass)
        ));
    }
    let summary = out.join("verify_summary.csv");
    report::write_text(&summary, &text)?;
    manifest.record(&summary, "verify");
    Ok(all)
}

fn read_state_csv(path: &Path, grid: &Arc<WeightedGrid>) -> Result<FieldPair> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read state {path:?}: {e}")))?;
    let mut q1 = Vec::new();
    let mut q2 = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header y,q1,q2
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 3 {
            return Err(Error::config(format!("state CSV row {} needs y,q1,q2", i + 1)));
        }
        let y: f64 =
            cells[0].parse().map_err(|_| Error::config(format!("bad y at row {}", i + 1)))?;
        let j = q1.len();
        if j >= grid.len() || (y - grid.nodes[j]).abs() > 1e-10 {
            return Err(Error::config(
                "state CSV nodes do not match the quadrature grid (set --grid_n accordingly)",
            ));
        }
        q1.push(cells[1].parse::<f64>().map_err(|_| Error::config("bad q1 value"))?);
        q2.push(cells[2].parse::<f64>().map_err(|_| Error::config("bad q2 value"))?);
    }
    FieldPair::new(Field::new(grid, q1)?, Field::new(grid, q2)?)
}

fn cmd_fit(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<bool> {
    let params = cfg.params()?;
    let grid = build_grid(params, cfg.usize_or("grid_n", 256)?)?;
    let input = cfg
        .get("input")
        .ok_or_else(|| Error::config("fit requires --input state.csv"))?;
    let v = read_state_csv(Path::new(input), &grid)?;
    let m = cfg.usize_or("m", 1)?;
    let init_path = cfg
        .get("init")
        .ok_or_else(|| Error::config("fit requires --init init.json"))?;
    let text = std::fs::read_to_string(init_path)
        .map_err(|e| Error::config(format!("cannot read init {init_path}: {e}")))?;
    let raw: Vec<serde_json::Value> = serde_json::from_str(&text)?;
    if raw.len() != m {
        return Err(Error::config(format!("init.json holds {} entries, --m is {m}", raw.len())));
    }
    let mut init = Vec::new();
    for entry in &raw {
        let d = entry["d"].as_f64().ok_or_else(|| Error::config("init entry lacks 'd'"))?;
        let nu = entry["nu"].as_f64().ok_or_else(|| Error::config("init entry lacks 'nu'"))?;
        init.push(SolitonParam::new(&params, d, nu)?);
    }
    let theta1 = cfg.f64_or("theta1", -1.0)?;
    let fit_cfg = FitConfig {
        newton_tol: cfg.f64_or("newton_tol", 1e-10)?,
        max_iter: cfg.usize_or("max_iter", 50)?,
        damping: cfg.f64_or("damping", 1.0)?,
        a_bound: cfg.f64_or("a_bound", 10.0)?,
        e_gap_min: cfg.f64_or("e_gap_min", 0.5)?,
    };
    let fit = modulation::fit(&params, &v, theta1, &init, &fit_cfg, &grid)?;
    let path = out.join("fit.json");
    report::write_json(&path, &fit.report())?;
    manifest.record(&path, "modulation");
    println!(
        "fit: m={m} converged={} iterations={} residual={:.3e}",
        fit.converged, fit.iterations, fit.residual_norm
    );
    Ok(fit.converged)
}

fn cmd_curve(
    cfg: &RunConfig,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<(wave::BlowupCurve, bool)> {
    let spec = cfg.run_spec()?;
    let refinements = cfg.refinements()?;
    let curve = wave::estimate_t(&spec, &refinements, cfg.threads()?)?;
    let rows: Vec<Vec<f64>> = (0..curve.x.len())
        .map(|i| {
            vec![
                curve.x[i],
                curve.t_est[i],
                curve.err[i],
                curve.slope_left[i],
                curve.slope_right[i],
            ]
        })
        .collect();
    let path = out.join("curve.csv");
    report::write_csv(&path, "x,T,err,slope_left,slope_right", &rows)?;
    manifest.record(&path, "wave");
    let ok = curve.lipschitz_excess() <= 0.0 && !curve.x.is_empty();
    println!(
        "curve: {} samples, {} candidates, lipschitz excess {:.3e}",
        curve.x.len(),
        curve.x0_candidates.len(),
        curve.lipschitz_excess()
    );
    Ok((curve, ok))
}

fn cmd_solve(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<bool> {
    let spec = cfg.run_spec()?;
    let params = cfg.params()?;
    let grid = build_grid(params, cfg.usize_or("grid_n", 256)?)?;
    let x0 = cfg.f64_or("x0", 0.0)?;
    let t_x0 = match cfg.get("t_x0") {
        Some(v) => v.parse().map_err(|_| Error::config("bad t_x0"))?,
        None => {
            let curve = wave::estimate_t(&spec, &[1, 2, 4], cfg.threads()?)?;
            curve
                .t_at(x0)
                .ok_or_else(|| Error::numeric("no blow-up detected at the requested center"))?
        }
    };
    let s_values = cfg.s_values()?;
    let trace = wave::to_similarity(&spec, x0, t_x0, &s_values, &grid)?;
    let mut slice_index = Vec::new();
    for (k, sl) in trace.slices.iter().enumerate() {
        let rows: Vec<Vec<f64>> = (sl.lo..=sl.hi)
            .map(|j| vec![grid.nodes[j], sl.w[j], sl.ws[j], sl.wy[j]])
            .collect();
        let path = out.join(format!("slice_{k:03}.csv"));
        report::write_csv(&path, "y,w,ws,wy", &rows)?;
        manifest.record(&path, "wave");
        slice_index.push(serde_json::json!({
            "index": k,
            "s": sl.s,
            "file": format!("slice_{k:03}.csv"),
            "y_min": grid.nodes[sl.lo],
            "y_max": grid.nodes[sl.hi],
        }));
    }
    let tpath = out.join("trace_manifest.json");
    report::write_json(
        &tpath,
        &serde_json::json!({
            "x0": x0,
            "t_x0": t_x0,
            "slices": slice_index,
        }),
    )?;
    manifest.record(&tpath, "wave");
    println!("solve: extracted {} slices around x0 = {x0}, T = {t_x0:.6}", trace.slices.len());
    Ok(!trace.slices.is_empty())
}

fn cmd_analyze(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<bool> {
    let params = cfg.params()?;
    let spec = cfg.run_spec()?;
    let grid = build_grid(params, cfg.usize_or("grid_n", 256)?)?;
    let x0 = cfg.f64_or("x0", 0.0)?;
    let acfg = AnalysisConfig::default();

    // 1. Blow-up curve: three refinements whose finest level matches the
    // trace run. At a corner the apex lies above the interpolated samples,
    // so prefer the one-sided extrapolation there.
    let (curve, curve_ok) = {
        let mut base = spec.clone();
        base.nx = (spec.nx / 4).max(1024);
        let refinements = cfg.refinements()?;
        let curve = wave::estimate_t(&base, &refinements, cfg.threads()?)?;
        let rows: Vec<Vec<f64>> = (0..curve.x.len())
            .map(|i| {
                vec![
                    curve.x[i],
                    curve.t_est[i],
                    curve.err[i],
                    curve.slope_left[i],
                    curve.slope_right[i],
                ]
            })
            .collect();
        let path = out.join("curve.csv");
        report::write_csv(&path, "x,T,err,slope_left,slope_right", &rows)?;
        manifest.record(&path, "wave");
        let ok = curve.lipschitz_excess() <= 0.0 && !curve.x.is_empty();
        println!(
            "curve: {} samples, {} candidates, lipschitz excess {:.3e}",
            curve.x.len(),
            curve.x0_candidates.len(),
            curve.lipschitz_excess()
        );
        (curve, ok)
    };
    let t_plain = curve.t_at(x0);
    let t_seed = if curve.corner_like(x0) {
        curve.t_corner(x0).map(|(t, _)| t).or(t_plain)
    } else {
        t_plain
    }
    .ok_or_else(|| Error::numeric("no blow-up detected at the requested center"))?;
    let t_x0 = analysis::refine_center_time(&params, &spec, x0, t_seed, &grid)?;
    println!("center time: seed {t_seed:.8} refined {t_x0:.8}");

    // 2. Similarity trace with the blow-up speed observer.
    let s_values = cfg.s_values()?;
    let req = SliceRequest { x0, t_x0, s_values: s_values.clone(), grid: grid.clone() };
    let run_out =
        wave::run(&spec, &RunOptions { slices: Some(req), speed_cone: Some((x0, t_x0)) })?;
    let trace = wave::SimilarityTrace::from_parts(x0, t_x0, run_out.slices.clone(), grid.clone());
    if trace.slices.is_empty() {
        return Err(Error::numeric("no similarity slices could be extracted"));
    }

    // Energy series.
    let energies = analysis::energy_series(&params, &trace);
    let erows: Vec<Vec<f64>> =
        trace.slices.iter().zip(&energies).map(|(sl, e)| vec![sl.s, *e]).collect();
    let epath = out.join("energy.csv");
    report::write_csv(&epath, "s,E", &erows)?;
    manifest.record(&epath, "analysis");

    // 3. Classification.
    let class = analysis::classify_point(&params, &trace, &acfg);
    let cpath = out.join("classification.json");
    report::write_json(&cpath, &class)?;
    manifest.record(&cpath, "analysis");
    println!("classification: {class:?}");

    let mut all_ok = curve_ok;
    let mut laws: Vec<analysis::LawFit> = Vec::new();
    match &class {
        Classification::Regular => {
            let (_, dec) = analysis::count_solitons(&params, &trace, 2, &acfg)?;
            write_decomposition(out, manifest, &dec)?;
            let slope = curve_slope_at(&curve, x0);
            laws.push(analysis::slope_vs_profile(&params, &dec, slope, curve.err_at(x0)));
        }
        Classification::CharacteristicCandidate { k } => {
            let (_, dec) = analysis::count_solitons(&params, &trace, (*k).max(2), &acfg)?;
            write_decomposition(out, manifest, &dec)?;
            let window = match (cfg.get("fit_window_lo"), cfg.get("fit_window_hi")) {
                (Some(a), Some(b)) => Some((
                    a.parse().map_err(|_| Error::config("bad fit_window_lo"))?,
                    b.parse().map_err(|_| Error::config("bad fit_window_hi"))?,
                )),
                _ => None,
            };
            laws.push(analysis::zeta_law(&params, &dec, acfg.exponent_tol, window));
            let offsets: Vec<f64> = (0..10).map(|i| 1e-3 * 1.8f64.powi(i)).collect();
            laws.push(analysis::corner_law(&params, &curve, x0, *k, &offsets, acfg.exponent_tol));
            let tau_max = (-s_values[0]).exp();
            let tau_min = (-s_values[s_values.len() - 1]).exp().max(10.0 * spec.dt());
            laws.push(analysis::blowup_speed(
                &params,
                &run_out.speed,
                t_x0,
                *k,
                (tau_min, tau_max),
                10.0,
            ));
            // Plots: zeta series with the law's target slope in the header.
            for i in 0..dec.k {
                let (s, z) = dec.zeta_series(i);
                if s.len() < 2 {
                    continue;
                }
                let logs: Vec<f64> = s.iter().map(|v| v.ln()).collect();
                let target =
                    (i as f64 + 1.0 - (dec.k as f64 + 1.0) / 2.0) * (params.p() - 1.0) / 2.0;
                let path = out.join(format!("zeta_{}.svg", i + 1));
                report::plot_svg(
                    &path,
                    &format!("zeta_{}(s) vs log s; target slope {target:+.3}", i + 1),
                    &[Series { x: &logs, y: &z, color: "#1f77b4", label: "measured" }],
                )?;
                manifest.record(&path, "analysis");
            }
        }
        Classification::Undecided { reason } => {
            println!("undecided: {reason}");
            all_ok = false;
        }
    }
    for (i, law) in laws.iter().enumerate() {
        let path = out.join(format!("law_{i}_{}.json", law.law.replace([' ', ':', '(', ')'], "_")));
        report::write_json(&path, law)?;
        manifest.record(&path, "analysis");
        println!("law {:28} verdict {}", law.law, law.verdict);
        all_ok &= law.verdict == "pass" || law.verdict == "regular-slope";
    }
    // Energy plot.
    let s: Vec<f64> = trace.slices.iter().map(|sl| sl.s).collect();
    let ppath = out.join("energy.svg");
    report::plot_svg(
        &ppath,
        "E(w(s)); quantized levels at k E(kappa0)",
        &[Series { x: &s, y: &energies, color: "#d62728", label: "E(s)" }],
    )?;
    manifest.record(&ppath, "analysis");
    Ok(all_ok)
}

fn write_decomposition(
    out: &Path,
    manifest: &mut Manifest,
    dec: &analysis::DecompositionTrace,
) -> Result<()> {
    let mut rows = Vec::new();
    for (j, s) in dec.s_values.iter().enumerate() {
        if let Some(fit) = &dec.fits[j] {
            let mut row = vec![*s, fit.residual_norm, fit.j_m];
            for sp in &fit.params {
                row.push(sp.d);
                row.push(sp.nu);
                row.push(sp.zeta_star);
            }
            rows.push(row);
        }
    }
    let mut header = String::from("s,residual,J_m");
    for i in 1..=dec.k {
        header.push_str(&format!(",d_{i},nu_{i},zeta_star_{i}"));
    }
    let path = out.join("decomposition.csv");
    report::write_csv(&path, &header, &rows)?;
    manifest.record(&path, "analysis");
    Ok(())
}

fn curve_slope_at(curve: &wave::BlowupCurve, x0: f64) -> f64 {
    let i = match curve.x.binary_search_by(|v| v.partial_cmp(&x0).unwrap()) {
        Ok(i) => i,
        Err(i) => i.clamp(1, curve.x.len() - 1),
    };
    let lo = i.saturating_sub(4);
    let hi = (i + 4).min(curve.x.len() - 1);
    let (a, _, _) = wavelab_core::linalg::fit_line(&curve.x[lo..=hi], &curve.t_est[lo..=hi]);
    a
}
