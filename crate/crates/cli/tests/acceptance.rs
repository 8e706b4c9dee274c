//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed. The run is a
//! report: failing criteria are printed as FAIL and counted in the last
//! line. With `STOKES_LAB_STRICT_ACCEPTANCE=1` any failure also fails the
//! process.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stokes_lab::family::{incompatibility_report, richardson_order, Family, FamilyOptions, FamilyParams, SweepConfig, Verdict};
use stokes_lab::fit::{fit_power, geometric_grid};
use stokes_lab::geometry::{hamilton_map, reference_check, PhasePoint, SIGMA_GAP};
use stokes_lab::matching::{limit_z, normalize_b2, solve_match, stokes_zero_check, stokes_zero_with_xi0};
use stokes_lab::ode::wronskian_scaled;
use stokes_lab::oscillator::{eigen_spectral, eigen_stokes, EigenQuery};
use stokes_lab::sibuya::{connection_residual, stokes_c0, RotatedPlanners};
use stokes_lab::{Complex64 as C64, OperatorCoeffs, PotentialParams};

type Outcome = Result<(bool, String), String>;

fn random_params(rng: &mut ChaCha8Rng) -> PotentialParams {
    let mut disc = |r: f64| C64::from_polar(r * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
    PotentialParams { a2: disc(3.0), a3: disc(3.0) }
}

fn b_pure() -> OperatorCoeffs {
    OperatorCoeffs::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0)).unwrap()
}

fn b_mixed() -> OperatorCoeffs {
    OperatorCoeffs::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::from_polar(1.0, 0.75 * PI)).unwrap()
}

fn connection_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = [C64::new(0.0, 0.0), C64::new(1.2, 0.3), C64::new(-0.8, 1.1), C64::new(0.4, -1.5), C64::new(-1.6, -0.4)];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = random_params(&mut rng);
        let c0 = stokes_c0(&a, 1e-12).map_err(|e| e.to_string())?;
        let pl = RotatedPlanners::new(&a, 3, 1.0, 0);
        for &x in &points {
            worst = worst.max(connection_residual(&pl, x, c0.c0_scaled, 1e-14).map_err(|e| e.to_string())?);
        }
    }
    Ok((worst < 1e-8, format!("max residual {worst:.2e} over 10 parameters x 5 points (limit 1e-8)")))
}

fn rotation_covariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = random_params(&mut rng);
        // C1 = W[Y1, Y3] / W[Y2, Y3], taken at the origin.
        let pl = RotatedPlanners::new(&a, 4, 1.0, 0);
        let x = C64::new(0.0, 0.0);
        let y: Vec<_> = (1..4).map(|k| pl.eval(x, k, 1e-14)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let w13 = wronskian_scaled(&y[0], &y[2]).map_err(|e| e.to_string())?;
        let w23 = wronskian_scaled(&y[1], &y[2]).map_err(|e| e.to_string())?;
        let c1 = (w13 / w23).to_complex();
        let c0 = stokes_c0(&a.rotated(1), 1e-12).map_err(|e| e.to_string())?.c0;
        worst = worst.max((c1 - c0).norm() / c0.norm());
    }
    Ok((worst < 1e-8, format!("max relative difference {worst:.2e} over 10 parameters (limit 1e-8)")))
}

fn oscillator_limit() -> Outcome {
    let e = |beta: f64, k: usize| eigen_spectral(&EigenQuery::new(C64::new(beta, 0.0), k)).map_err(|e| e.to_string());
    let betas = [0.02, 0.04, 0.08];
    let mut exact = true;
    let mut slopes = Vec::new();
    let mut parity = 0.0f64;
    for k in 0..3 {
        exact &= e(0.0, k)? == C64::new((2 * k + 1) as f64, 0.0);
        let mut shifts = Vec::new();
        for &b in &betas {
            let v = e(b, k)?;
            shifts.push((v - (2 * k + 1) as f64).norm());
            parity = parity.max((e(-b, k)? - v).norm());
        }
        slopes.push(fit_power(&betas, &shifts).map_err(|e| e.to_string())?.slope);
    }
    let slopes_ok = slopes.iter().all(|s| (s - 2.0).abs() <= 0.1);
    Ok((
        exact && slopes_ok && parity < 1e-10,
        format!(
            "E_k(0) exact: {exact}; slopes {:.4} {:.4} {:.4} (2 +- 0.1); parity {parity:.1e} (limit 1e-10)",
            slopes[0], slopes[1], slopes[2]
        ),
    ))
}

fn cross_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for beta in [0.05, 0.1, 0.2] {
        for k in 0..2 {
            let q = EigenQuery::new(C64::new(beta, 0.0), k);
            let a = eigen_spectral(&q).map_err(|e| e.to_string())?;
            let b = eigen_stokes(&q, 1e-12).map_err(|e| e.to_string())?.e;
            worst = worst.max((a - b).norm());
        }
    }
    Ok((worst < 1e-6, format!("max |E_stokes - E_spectral| {worst:.2e} (limit 1e-6)")))
}

fn matching_solve() -> Outcome {
    let grid = geometric_grid(100.0, 1e4, 9);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, c) in [("b=(0,0,i)", b_pure()), ("b=(1,1,e^{3pi i/4})", b_mixed())] {
        let scale = normalize_b2(&c).map_err(|e| e.to_string())?.0.big_a().norm();
        let sols: Vec<_> = grid.iter().map(|&l| solve_match(l, &c, 0)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let res = sols.iter().map(|s| s.residual / (scale * s.lambda)).fold(0.0, f64::max);
        let im_neg = sols.iter().all(|s| s.xi0.im < 0.0);
        let two_xi0: Vec<f64> = sols.iter().map(|s| 2.0 * s.xi0.norm()).collect();
        let slope = fit_power(&grid, &two_xi0).map_err(|e| e.to_string())?.slope;
        let z_max = sols.iter().map(|s| s.z.norm()).fold(0.0, f64::max);
        let z_inf = limit_z(&c, 0).map_err(|e| e.to_string())?.norm();
        let bounded = z_max <= 10.0 * z_inf.max(1.0);
        ok &= res < 1e-10 && im_neg && (slope - 2.0 / 3.0).abs() <= 0.01 && bounded;
        parts.push(format!(
            "{name}: residual {res:.1e}, Im xi0 < 0 {im_neg}, slope {slope:.4}, max|z| {z_max:.3} (limit value {z_inf:.3})"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn stokes_zero() -> Outcome {
    let mut worst = 0.0f64;
    let mut least_perturbed = f64::INFINITY;
    for c in [b_pure(), b_mixed()] {
        for lambda in [100.0, 200.0, 400.0] {
            let sol = solve_match(lambda, &c, 0).map_err(|e| e.to_string())?;
            worst = worst.max(stokes_zero_check(&sol, &c).map_err(|e| e.to_string())?);
            let p = stokes_zero_with_xi0(&sol, &c, sol.xi0 * 1.01, 1e-12).map_err(|e| e.to_string())?;
            least_perturbed = least_perturbed.min(p);
        }
    }
    Ok((
        worst < 1e-5 && least_perturbed > 1e-2,
        format!("max relative |C0| {worst:.1e} (limit 1e-5); min after 1% xi0 shift {least_perturbed:.2e} (needs > 1e-2)"),
    ))
}

fn growth_dichotomy() -> Outcome {
    let cfg = SweepConfig::default();
    let c = b_pure();
    let mut reports = Vec::new();
    for s in [3.0, 3.1, 4.0, 5.0] {
        reports.push(incompatibility_report(&c, s, &cfg).map_err(|e| e.to_string())?);
    }
    let lower = reports[2].lower.fitted_exponent;
    let d3 = reports[0].data.fitted_exponent;
    let d4 = reports[2].data.fitted_exponent;
    let lower_ok = (1.60..=1.73).contains(&lower);
    let d4_ok = (d4 - 4.0 / 3.0).abs() <= 0.07;
    let d3_ok = (d3 - 5.0 / 3.0).abs() <= 0.08;
    let verdicts: Vec<Verdict> = reports.iter().map(|r| r.verdict).collect();
    let verdicts_ok = verdicts
        == [Verdict::Inconclusive, Verdict::Incompatible, Verdict::Incompatible, Verdict::Incompatible]
        && reports[0].require_verdict().is_err();
    let mark = |b: bool| if b { "ok" } else { "MISS" };
    Ok((
        lower_ok && d4_ok && d3_ok && verdicts_ok,
        format!(
            "lower {lower:.4} in [1.60, 1.73] {}; data s=4 {d4:.4} vs 4/3 +- 0.07 {}; data s=3 {d3:.4} vs 5/3 +- 0.08 {}; verdicts s=3,3.1,4,5: {} {} {} {} {}",
            mark(lower_ok),
            mark(d4_ok),
            mark(d3_ok),
            verdicts[0],
            verdicts[1],
            verdicts[2],
            verdicts[3],
            mark(verdicts_ok)
        ),
    ))
}

fn pde_residual() -> Outcome {
    let params = FamilyParams::new(100.0, &b_pure(), 0).map_err(|e| e.to_string())?;
    let fam = Family::new(params, &FamilyOptions::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut orders = Vec::new();
    for _ in 0..5 {
        let x = [0; 3].map(|_: i32| rng.random_range(-0.3..0.3));
        orders.push(richardson_order(&fam, x, 8e-3).map_err(|e| e.to_string())?);
    }
    let ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.2);
    let list: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
    Ok((ok, format!("orders {} (2.0 +- 0.2) at lambda = 100", list.join(" "))))
}

fn geometry() -> Outcome {
    let bich = reference_check([-1.0, 1.0], SIGMA_GAP, 1e-13, 40).map_err(|e| e.to_string())?;
    let rho = PhasePoint::new([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    let h = hamilton_map(&rho).map_err(|e| e.to_string())?;
    let mu_max = h.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let ok = bich.max_deviation < 1e-8
        && bich.max_abs_p < 1e-12
        && mu_max < 1e-8
        && h.power_norms[3] < 1e-10
        && h.power_norms[2] > 0.0
        && h.spectral_type == 2
        && h.trplus == 0.0
        && h.iph_bound == 0.0;
    Ok((
        ok,
        format!(
            "deviation {:.1e}, |p| {:.1e} (x0 to +-{SIGMA_GAP}); max|mu| {mu_max:.1e}, |F^3| {:.2}, |F^4| {:.1e}, type {}, Tr+ {}, IPH bound {}",
            bich.max_deviation, bich.max_abs_p, h.power_norms[2], h.power_norms[3], h.spectral_type, h.trplus, h.iph_bound
        ),
    ))
}

fn determinism() -> Outcome {
    let mut same = true;
    let mut sizes = Vec::new();
    for cmd in ["xi0", "growth", "bichar"] {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        for d in [&a, &b] {
            let out = common::run(cmd, d.path(), &[]);
            if !out.status.success() {
                return Err(format!("{cmd}: {}", String::from_utf8_lossy(&out.stderr)));
            }
        }
        let fa = std::fs::read(a.path().join(format!("{cmd}.csv"))).map_err(|e| e.to_string())?;
        let fb = std::fs::read(b.path().join(format!("{cmd}.csv"))).map_err(|e| e.to_string())?;
        same &= fa == fb;
        sizes.push(format!("{cmd} {} bytes", fa.len()));
    }
    Ok((same, format!("two runs bit-identical: {same} ({})", sizes.join(", "))))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("connection identity", connection_identity),
        ("rotation covariance", rotation_covariance),
        ("oscillator limit", oscillator_limit),
        ("cross-oracle eigenvalues", cross_oracle),
        ("matching solve", matching_solve),
        ("end-to-end Stokes zero", stokes_zero),
        ("growth dichotomy", growth_dichotomy),
        ("PDE residual", pde_residual),
        ("geometry", geometry),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} {:<26} {}  {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    let strict = std::env::var("STOKES_LAB_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
