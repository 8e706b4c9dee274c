use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use stokes_lab::family::{incompatibility_report, SweepConfig, FamilyOptions};
use stokes_lab::fit::fit_power;
use stokes_lab::geometry::{hamilton_map, reference_check, reference_curve, symbol_p, PhasePoint, SIGMA_GAP};
use stokes_lab::matching::{solve_match_with, spectral_level, stokes_zero_check, normalize_b2, MatchOptions};
use stokes_lab::oscillator::{eigen_spectral, eigen_stokes, EigenQuery};
use stokes_lab::sibuya::{connection_residual, stokes_c0, RotatedPlanners};
use stokes_lab::{Complex64, PotentialParams};

use crate::config::{complex, RunConfig, SpectrumMethod};
use crate::error::{Failure, Metric};
use crate::report::{table, Check, Outcome};

/// Largest accepted connection-identity residual.
pub const CONNECTION_LIMIT: f64 = 1e-8;
/// Largest accepted relative Stokes zero in the `xi0` table.
pub const STOKES_ZERO_LIMIT: f64 = 1e-5;
/// Accepted deviation of the fitted `|xi0|` exponent from 2/3.
pub const XI0_EXPONENT_WINDOW: f64 = 0.01;

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
struct ConnectionRow {
    x_re: f64,
    x_im: f64,
    residual: f64,
}

pub fn sibuya(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sec = &cfg.sibuya;
    let a = PotentialParams::new(complex(sec.a2), complex(sec.a3)).metric("potential")?;
    let tol = cfg.tolerances.ode;
    let data = stokes_c0(&a, tol).metric("c0")?;
    let pl = RotatedPlanners::new(&a, 3, 1.0, 0);
    let ode_tol = (tol * 1e-2).max(1e-14);
    let rows: Vec<ConnectionRow> = sec
        .points
        .iter()
        .map(|&p| {
            let residual = connection_residual(&pl, complex(p), data.c0_scaled, ode_tol).metric("connection_residual")?;
            Ok(ConnectionRow { x_re: p[0], x_im: p[1], residual })
        })
        .collect::<Result<_, Failure>>()?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let (csv, json_rows) = table(&rows)?;
    Ok(Outcome {
        csv: Some(csv),
        rows: json_rows,
        summary: json!({
            "a2": sec.a2,
            "a3": sec.a3,
            "c0": pair(data.c0),
            "ln_abs_c0": data.c0_scaled.ln_abs(),
            "error_estimate": data.error_estimate,
            "matching_point": pair(data.matching_point),
            "truncation": data.truncation,
            "max_connection_residual": max_residual,
        }),
        checks: vec![
            Check::below("connection_residual", max_residual, CONNECTION_LIMIT),
            Check::below("c0_error_estimate", data.error_estimate, CONNECTION_LIMIT),
        ],
    })
}

#[derive(Serialize)]
struct SpectrumRow {
    k: usize,
    e_spectral_re: Option<f64>,
    e_spectral_im: Option<f64>,
    reference: &'static str,
    e_reference_re: Option<f64>,
    e_reference_im: Option<f64>,
    disagreement: Option<f64>,
}

pub fn spectrum(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sec = &cfg.spectrum;
    let beta = complex(sec.beta);
    let want_spectral = sec.method != SpectrumMethod::Stokes;
    let want_other = sec.method != SpectrumMethod::Spectral;
    let results: Vec<Result<SpectrumRow, Failure>> = (0..=sec.k_max)
        .into_par_iter()
        .map(|k| {
            let q = EigenQuery::new(beta, k);
            let spectral = if want_spectral { Some(eigen_spectral(&q).metric("e_spectral")?) } else { None };
            // At beta = 0 the Stokes route degenerates; the harmonic levels
            // take its place.
            let (reference, other) = match (want_other, beta.norm() == 0.0) {
                (false, _) => ("none", None),
                (true, true) => ("harmonic", Some(Complex64::new((2 * k + 1) as f64, 0.0))),
                (true, false) => ("stokes", Some(eigen_stokes(&q, cfg.tolerances.eigen).metric("e_stokes")?.e)),
            };
            let disagreement = spectral.zip(other).map(|(a, b)| (a - b).norm());
            Ok(SpectrumRow {
                k,
                e_spectral_re: spectral.map(|z| z.re),
                e_spectral_im: spectral.map(|z| z.im),
                reference,
                e_reference_re: other.map(|z| z.re),
                e_reference_im: other.map(|z| z.im),
                disagreement,
            })
        })
        .collect();
    let rows: Vec<SpectrumRow> = results.into_iter().collect::<Result<_, _>>()?;
    let max_dis = rows.iter().filter_map(|r| r.disagreement).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let (csv, json_rows) = table(&rows)?;
    let mut checks = Vec::new();
    if let Some(d) = max_dis {
        checks.push(Check::below("disagreement", d, sec.max_disagreement));
    }
    Ok(Outcome {
        csv: Some(csv),
        rows: json_rows,
        summary: json!({
            "beta": sec.beta,
            "k_max": sec.k_max,
            "method": sec.method,
            "max_disagreement": max_dis,
        }),
        checks,
    })
}

#[derive(Serialize)]
struct Xi0Row {
    lambda: f64,
    z_re: f64,
    z_im: f64,
    zeta_re: f64,
    zeta_im: f64,
    beta_re: f64,
    beta_im: f64,
    xi0_re: f64,
    xi0_im: f64,
    energy_re: f64,
    energy_im: f64,
    relative_residual: f64,
    branch: String,
    flipped: bool,
    arg_zeta: f64,
    expo_margin: f64,
    stokes_quality: f64,
}

pub fn xi0(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let c = cfg.operator()?;
    let (norm, _) = normalize_b2(&c).metric("coeffs")?;
    let scale = norm.big_a().norm();
    let opts = MatchOptions { residual_tol: cfg.tolerances.newton, ..Default::default() };
    let level = spectral_level(cfg.level);
    let results: Vec<Result<Xi0Row, Failure>> = cfg
        .lambdas()
        .par_iter()
        .map(|&lambda| {
            let sol = solve_match_with(lambda, &c, cfg.level, &level, &opts).metric("matching")?;
            let q = stokes_zero_check(&sol, &c).metric("stokes_quality")?;
            Ok(Xi0Row {
                lambda,
                z_re: sol.z.re,
                z_im: sol.z.im,
                zeta_re: sol.zeta.re,
                zeta_im: sol.zeta.im,
                beta_re: sol.beta.re,
                beta_im: sol.beta.im,
                xi0_re: sol.xi0.re,
                xi0_im: sol.xi0.im,
                energy_re: sol.energy.re,
                energy_im: sol.energy.im,
                relative_residual: sol.residual / (scale * lambda),
                branch: format!("{:?}", sol.branch).to_lowercase(),
                flipped: sol.flipped,
                arg_zeta: sol.zeta.arg(),
                expo_margin: sol.expo_margin(),
                stokes_quality: q,
            })
        })
        .collect();
    let rows: Vec<Xi0Row> = results.into_iter().collect::<Result<_, _>>()?;
    let lam: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let two_xi0: Vec<f64> = rows.iter().map(|r| 2.0 * r.xi0_re.hypot(r.xi0_im)).collect();
    let fit = fit_power(&lam, &two_xi0).metric("xi0_exponent")?;
    let max_q = rows.iter().map(|r| r.stokes_quality).fold(0.0, f64::max);
    let max_z = rows.iter().map(|r| r.z_re.hypot(r.z_im)).fold(0.0, f64::max);
    let max_res = rows.iter().map(|r| r.relative_residual).fold(0.0, f64::max);
    let (csv, json_rows) = table(&rows)?;
    Ok(Outcome {
        csv: Some(csv),
        rows: json_rows,
        summary: json!({
            "xi0_exponent": fit.slope,
            "xi0_exponent_halfwidth": fit.halfwidth,
            "max_abs_z": max_z,
            "max_relative_residual": max_res,
            "max_stokes_quality": max_q,
        }),
        checks: vec![
            Check::below("relative_residual", max_res, cfg.tolerances.newton),
            Check::below("stokes_quality", max_q, STOKES_ZERO_LIMIT),
            Check::below("xi0_exponent", (fit.slope - 2.0 / 3.0).abs(), XI0_EXPONENT_WINDOW),
        ],
    })
}

#[derive(Serialize)]
struct GrowthRow {
    lambda: f64,
    xi0_re: f64,
    xi0_im: f64,
    stokes_quality: f64,
    log_data_norm: f64,
    k1: usize,
    k2: usize,
    x1_argmax: f64,
    at_boundary: bool,
    log_sup_v: f64,
    log_u_probe: f64,
    log_v_probe: f64,
    log_growth: f64,
}

pub fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    SweepConfig {
        lambdas: cfg.lambdas(),
        level: cfg.level,
        h: cfg.growth.h,
        k_max: cfg.growth.k_max,
        x0: cfg.growth.x0,
        mu: cfg.mu,
        x_probe: cfg.x_probe,
        options: FamilyOptions { tol: cfg.tolerances.ode, ..Default::default() },
    }
}

pub fn growth(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let c = cfg.operator()?;
    let rep = incompatibility_report(&c, cfg.s, &sweep_config(cfg)).metric("growth_sweep")?;
    let rows: Vec<GrowthRow> = rep
        .rows
        .iter()
        .map(|r| GrowthRow {
            lambda: r.lambda,
            xi0_re: r.xi0.re,
            xi0_im: r.xi0.im,
            stokes_quality: r.stokes_quality,
            log_data_norm: r.gevrey.log_norm,
            k1: r.gevrey.k1,
            k2: r.gevrey.k2,
            x1_argmax: r.gevrey.x1,
            at_boundary: r.gevrey.at_boundary,
            log_sup_v: r.gevrey.log_sup_v,
            log_u_probe: r.log_u_probe,
            log_v_probe: r.log_v_probe,
            log_growth: r.log_u_probe - r.log_v_probe,
        })
        .collect();
    let (csv, json_rows) = table(&rows)?;
    Ok(Outcome {
        csv: Some(csv),
        rows: json_rows,
        summary: json!({
            "s": rep.s,
            "data_exponent": rep.data.fitted_exponent,
            "data_halfwidth": rep.data.confidence_halfwidth,
            "lower_exponent": rep.lower.fitted_exponent,
            "lower_halfwidth": rep.lower.confidence_halfwidth,
            "decay_exponent": rep.decay.map(|d| d.slope),
            "gap": rep.gap,
            "joint_halfwidth": rep.joint_halfwidth,
            "boundary_hits": rep.boundary_hits,
            "verdict": rep.verdict,
        }),
        checks: vec![Check::holds("verdict", rep.require_verdict().is_ok())],
    })
}

#[derive(Serialize)]
struct BicharRow {
    leg: usize,
    x0: f64,
    x1: f64,
    x2: f64,
    xi0: f64,
    xi1: f64,
    xi2: f64,
    p: f64,
    deviation: f64,
}

pub fn bichar(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sec = &cfg.bichar;
    let rep = reference_check(sec.x0_range, SIGMA_GAP, sec.tol, sec.samples).metric("bicharacteristic")?;
    let mut rows = Vec::new();
    for (leg, tr) in rep.legs.iter().enumerate() {
        for (s, pt) in tr.param.iter().zip(&tr.points) {
            let r = reference_curve(*s).to_array();
            let y = pt.to_array();
            let deviation = y.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rows.push(BicharRow {
                leg,
                x0: y[0],
                x1: y[1],
                x2: y[2],
                xi0: y[3],
                xi1: y[4],
                xi2: y[5],
                p: symbol_p(pt),
                deviation,
            });
        }
    }
    let (csv, json_rows) = table(&rows)?;
    Ok(Outcome {
        csv: Some(csv),
        rows: json_rows,
        summary: json!({
            "x0_range": rep.x0_range,
            "gap": rep.gap,
            "max_deviation": rep.max_deviation,
            "max_abs_p": rep.max_abs_p,
            "max_cyclic_drift": rep.max_cyclic_drift,
            "max_slope_error": rep.max_slope_error,
            "sigma_transverse": rep.sigma_transverse,
        }),
        checks: vec![
            Check::below("max_deviation", rep.max_deviation, 1e-8),
            Check::below("max_abs_p", rep.max_abs_p, 1e-12),
            Check::below("max_cyclic_drift", rep.max_cyclic_drift, 1e-12),
            Check::below("max_slope_error", rep.max_slope_error, 1e-8),
            Check::below("sigma_transverse", rep.sigma_transverse, 1e-8),
        ],
    })
}

pub fn hamilton(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let rho = PhasePoint::from_array(cfg.hamilton.rho);
    let rep = hamilton_map(&rho).metric("sigma_distance")?;
    // Eigenvalues of a real matrix come in conjugate pairs.
    let conj_gap = rep
        .eigenvalues
        .iter()
        .map(|z| rep.eigenvalues.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(Outcome {
        csv: None,
        rows: Vec::new(),
        summary: serde_json::to_value(&rep).expect("report serializes"),
        checks: vec![Check::below("conjugation_gap", conj_gap, 1e-8)],
    })
}
