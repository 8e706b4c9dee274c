//! The matching equation tying the dispersion parameter `xi0(lambda)` to a
//! zero of the Stokes multiplier through an oscillator eigenvalue.
//!
//! With `zeta = beta^{-2/5}` the equation reads
//!
//! ```text
//! w^3 zeta^6 + (27/2) E(zeta^{-5/2}) w^3 zeta + (3/8) w^4 zeta^8 lambda^-2
//!     + (9/4) b0 w^2 zeta^4 lambda^-3 = (27/2) b2 lambda - (27/8) b1^2 lambda^-4
//! ```
//!
//! and is solved for `z` in `zeta = p A^{1/6} (1 + lambda^{-5/6} z) lambda^{1/6}`
//! with `A = 27 b2 / 2` and `p` a fixed phase picked by `arg A`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{omega_pow, PotentialParams};
use crate::oscillator::{eigen_spectral, EigenQuery};
use crate::sibuya::{c0_at, c0_eval_with, RotatedPlanners, StokesOptions};

/// Slack kept away from the boundary of the admissible sector for `zeta`.
pub const COND_EPS: f64 = 1e-3;

/// Lower-order coefficients `b0 D0 + b1 D1 + b2 D2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorCoeffs {
    pub b0: C64,
    pub b1: C64,
    pub b2: C64,
}

impl OperatorCoeffs {
    pub fn new(b0: C64, b1: C64, b2: C64) -> Result<Self> {
        if b2 == C64::new(0.0, 0.0) {
            return Err(Error::ZeroB2);
        }
        if !(b0.is_finite() && b1.is_finite() && b2.is_finite()) {
            return Err(Error::InvalidArgument("operator coefficients must be finite".into()));
        }
        Ok(OperatorCoeffs { b0, b1, b2 })
    }

    /// `A = 27 b2 / 2`.
    pub fn big_a(&self) -> C64 {
        13.5 * self.b2
    }
}

/// Argument in `[-pi, pi)`.
pub fn arg_half_open(z: C64) -> f64 {
    let a = z.arg();
    if a >= PI {
        -PI
    } else {
        a
    }
}

/// Whether `arg b2` lies in `(0, pi)` or `[-pi, -pi/2)`.
pub fn admissible_b2(b2: C64) -> bool {
    let a = arg_half_open(b2);
    (a > 0.0 && a < PI) || a < -PI / 2.0
}

/// Sends `(b0, b1, b2)` to `(-b0, b1, -b2)` when `arg b2` is not admissible,
/// which is the operator seen in the coordinates `(-x0, x1, -x2)`.
pub fn normalize_b2(c: &OperatorCoeffs) -> Result<(OperatorCoeffs, bool)> {
    if c.b2 == C64::new(0.0, 0.0) {
        return Err(Error::ZeroB2);
    }
    if admissible_b2(c.b2) {
        Ok((*c, false))
    } else {
        Ok((OperatorCoeffs { b0: -c.b0, b1: c.b1, b2: -c.b2 }, true))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `0 < arg A < pi`, phase `e^{-i pi/5}`.
    Upper,
    /// `-pi <= arg A < -pi/2`, phase `e^{2 i pi/15}`.
    Lower,
}

impl Branch {
    pub fn select(a: C64) -> Result<Branch> {
        let t = arg_half_open(a);
        if t > 0.0 && t < PI {
            Ok(Branch::Upper)
        } else if t < -PI / 2.0 {
            Ok(Branch::Lower)
        } else {
            Err(Error::ConditionViolated(format!("arg A = {t} outside both ansatz sectors")))
        }
    }

    pub fn phase(self) -> C64 {
        match self {
            Branch::Upper => C64::from_polar(1.0, -PI / 5.0),
            Branch::Lower => C64::from_polar(1.0, 2.0 * PI / 15.0),
        }
    }
}

/// `A^{1/6}` with `arg A` taken in `[-pi, pi)`.
fn sixth_root(a: C64) -> C64 {
    C64::from_polar(a.norm().powf(1.0 / 6.0), arg_half_open(a) / 6.0)
}

/// An eigenvalue `E(beta)` of one continued level.
pub type EigenFn<'a> = dyn Fn(C64) -> Result<C64> + Sync + 'a;

/// Level `k` by the spectral route.
pub fn spectral_level(k: usize) -> impl Fn(C64) -> Result<C64> + Sync {
    move |beta| eigen_spectral(&EigenQuery::new(beta, k))
}

/// Left side minus right side of the reduced equation at `zeta`.
pub fn reduced_residual(zeta: C64, lambda: f64, c: &OperatorCoeffs, e: &EigenFn) -> Result<C64> {
    let beta = zeta.powf(-2.5);
    let ev = e(beta)?;
    Ok(reduced_residual_with(zeta, lambda, c, ev))
}

fn reduced_residual_with(zeta: C64, lambda: f64, c: &OperatorCoeffs, ev: C64) -> C64 {
    let z2 = zeta * zeta;
    let z4 = z2 * z2;
    let lhs = omega_pow(3) * z4 * z2
        + 13.5 * ev * omega_pow(3) * zeta
        + 0.375 * omega_pow(4) * z4 * z4 / (lambda * lambda)
        + 2.25 * c.b0 * omega_pow(2) * z4 / lambda.powi(3);
    let rhs = c.big_a() * lambda - 3.375 * c.b1 * c.b1 / lambda.powi(4);
    lhs - rhs
}

/// A solution of the matching equation at one `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchSolution {
    pub lambda: f64,
    pub z: C64,
    pub zeta: C64,
    pub beta: C64,
    pub xi0: C64,
    /// The eigenvalue `E(beta)` used at the solution.
    pub energy: C64,
    pub level: usize,
    pub branch: Branch,
    pub flipped: bool,
    /// `|reduced residual|` at `zeta`.
    pub residual: f64,
    pub iterations: usize,
}

impl MatchSolution {
    /// `Im(w^2 zeta^4)`, positive exactly when `Im xi0 < 0`.
    pub fn expo_margin(&self) -> f64 {
        (omega_pow(2) * self.zeta.powi(4)).im
    }
}

/// Newton settings for [`solve_match_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    pub max_iter: usize,
    /// Convergence threshold on `|dz| / max(1, |z|)`.
    pub step_tol: f64,
    /// Acceptance threshold on `|residual| / (|A| lambda)`.
    pub residual_tol: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { max_iter: 50, step_tol: 1e-14, residual_tol: 1e-10 }
    }
}

/// The `lambda -> infinity` limit of `z` with `E` frozen at `2k + 1`:
/// `6 A z + (27/2) (2k + 1) w^3 p A^{1/6} = 0` for the branch phase `p`.
pub fn limit_z(c: &OperatorCoeffs, k: usize) -> Result<C64> {
    let (c, _) = normalize_b2(c)?;
    let a = c.big_a();
    let p = Branch::select(a)?.phase();
    Ok(-13.5 * (2 * k + 1) as f64 * omega_pow(3) * p * sixth_root(a) / (6.0 * a))
}

/// Solves the matching equation for level `k` with the spectral eigenvalues.
pub fn solve_match(lambda: f64, c: &OperatorCoeffs, k: usize) -> Result<MatchSolution> {
    solve_match_with(lambda, c, k, &spectral_level(k), &MatchOptions::default())
}

pub fn solve_match_with(
    lambda: f64,
    c: &OperatorCoeffs,
    k: usize,
    e: &EigenFn,
    opts: &MatchOptions,
) -> Result<MatchSolution> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be positive")));
    }
    let (c, flipped) = normalize_b2(c)?;
    let a = c.big_a();
    let branch = Branch::select(a)?;
    let pref = branch.phase() * sixth_root(a) * lambda.powf(1.0 / 6.0);
    let eps = lambda.powf(-5.0 / 6.0);
    let w3 = omega_pow(3);

    // The leading balance w^3 zeta^6 = A lambda (1 + eps z)^6 is subtracted
    // from the right side in closed form.
    let eval = |z: C64| -> Result<(C64, C64, C64)> {
        let w = eps * z;
        let zeta = pref * (1.0 + w);
        let ev = e(zeta.powf(-2.5))?;
        let sixth = w * (6.0 + w * (15.0 + w * (20.0 + w * (15.0 + w * (6.0 + w)))));
        let z2 = zeta * zeta;
        let z4 = z2 * z2;
        let f = a * lambda * sixth
            + 13.5 * ev * w3 * zeta
            + 0.375 * omega_pow(4) * z4 * z4 / (lambda * lambda)
            + 2.25 * c.b0 * omega_pow(2) * z4 / lambda.powi(3)
            + 3.375 * c.b1 * c.b1 / lambda.powi(4);
        // dF/dz with E held fixed; its own variation is O(beta^2) smaller.
        let dzeta = pref * eps;
        let df = 6.0 * a * lambda * eps * (1.0 + w).powi(5)
            + dzeta
                * (13.5 * ev * w3
                    + 3.0 * omega_pow(4) * z4 * z2 * zeta / (lambda * lambda)
                    + 9.0 * c.b0 * omega_pow(2) * z2 * zeta / lambda.powi(3));
        Ok((f, df, ev))
    };

    let scale = a.norm() * lambda;
    let mut z = limit_z(&c, k)?;
    let mut converged = None;
    for it in 1..=opts.max_iter {
        let (f, df, _) = eval(z)?;
        let dz = f / df;
        if !dz.is_finite() {
            break;
        }
        z -= dz;
        if dz.norm() <= opts.step_tol * z.norm().max(1.0) {
            converged = Some(it);
            break;
        }
    }
    let Some(iterations) = converged else {
        return Err(Error::NewtonDiverged(format!("matching Newton did not converge at lambda = {lambda}")));
    };
    let zeta = pref * (1.0 + eps * z);
    let beta = zeta.powf(-2.5);
    let (_, _, energy) = eval(z)?;
    let residual = reduced_residual_with(zeta, lambda, &c, energy).norm();
    if residual > opts.residual_tol * scale {
        return Err(Error::NewtonDiverged(format!(
            "matching residual {:e} exceeds {:e} at lambda = {lambda}",
            residual / scale,
            opts.residual_tol
        )));
    }
    let xi0 = -omega_pow(2) * zeta.powi(4) / 6.0;
    let sol = MatchSolution {
        lambda,
        z,
        zeta,
        beta,
        xi0,
        energy,
        level: k,
        branch,
        flipped,
        residual,
        iterations,
    };
    check_conditions(&sol)?;
    Ok(sol)
}

/// `|arg zeta| < pi/4 - eps`, `Im(w^2 zeta^4) > 0` and `Im xi0 < 0`.
pub fn check_conditions(sol: &MatchSolution) -> Result<()> {
    let t = sol.zeta.arg();
    if t.abs() >= PI / 4.0 - COND_EPS {
        return Err(Error::ConditionViolated(format!("|arg zeta| = {} at lambda = {}", t.abs(), sol.lambda)));
    }
    if sol.expo_margin() <= 0.0 {
        return Err(Error::ConditionViolated(format!("Im(w^2 zeta^4) <= 0 at lambda = {}", sol.lambda)));
    }
    if sol.xi0.im >= 0.0 {
        return Err(Error::ConditionViolated(format!("Im xi0 = {} >= 0 at lambda = {}", sol.xi0.im, sol.lambda)));
    }
    Ok(())
}

/// The coefficients actually solved for: `c` itself, or its flip.
pub fn effective_coeffs(sol: &MatchSolution, c: &OperatorCoeffs) -> OperatorCoeffs {
    if sol.flipped {
        OperatorCoeffs { b0: -c.b0, b1: c.b1, b2: -c.b2 }
    } else {
        *c
    }
}

/// `a3 = b2 lambda - xi0^2 lambda^-2 + b0 xi0 lambda^-3 - b1^2 lambda^-4 / 4`.
pub fn potential_a3(xi0: C64, lambda: f64, c: &OperatorCoeffs) -> C64 {
    c.b2 * lambda - xi0 * xi0 / (lambda * lambda) + c.b0 * xi0 / lambda.powi(3)
        - 0.25 * c.b1 * c.b1 / lambda.powi(4)
}

/// The ODE coefficients `(2 xi0, a3)` of the solution.
pub fn potential(sol: &MatchSolution, c: &OperatorCoeffs) -> PotentialParams {
    let c = effective_coeffs(sol, c);
    PotentialParams { a2: 2.0 * sol.xi0, a3: potential_a3(sol.xi0, sol.lambda, &c) }
}

/// `(a(lambda), b(lambda))` with `2 xi0 = lambda^{2/3} a` and `a3 = lambda b`.
pub fn scaled_coeffs(sol: &MatchSolution, c: &OperatorCoeffs) -> (C64, C64) {
    let p = potential(sol, c);
    (p.a2 / sol.lambda.powf(2.0 / 3.0), p.a3 / sol.lambda)
}

/// `|C0(2 xi0, a3)| / |C0(2 xi0, a3 + w^3 zeta / 2)|`.
///
/// The shift moves the eigenvalue parameter by half a level spacing.
pub fn stokes_zero_check(sol: &MatchSolution, c: &OperatorCoeffs) -> Result<f64> {
    stokes_zero_with_xi0(sol, c, sol.xi0, 1e-12)
}

/// As [`stokes_zero_check`] with `xi0` replaced by `xi0`, keeping the shift.
pub fn stokes_zero_with_xi0(sol: &MatchSolution, c: &OperatorCoeffs, xi0: C64, tol: f64) -> Result<f64> {
    let c = effective_coeffs(sol, c);
    let a = PotentialParams { a2: 2.0 * xi0, a3: potential_a3(xi0, sol.lambda, &c) };
    let shifted = PotentialParams { a3: a.a3 + 0.5 * omega_pow(3) * sol.zeta, ..a };
    let pl = RotatedPlanners::new(&a, 3, 1.0, 0);
    let ode_tol = (tol * 1e-2).max(1e-14);
    let base = c0_eval_with(&pl, &StokesOptions { tol: ode_tol, ..Default::default() })?;
    let other = c0_at(&pl.with_params(&shifted), base.matching_point, ode_tol)?;
    if base.c0.is_zero() {
        return Ok(0.0);
    }
    Ok((base.c0.ln_abs() - other.c0.ln_abs()).exp())
}

/// The smallest `lambda` of an increasing grid from which every solve on the
/// rest of the grid succeeds.
pub fn smallest_valid_lambda(c: &OperatorCoeffs, k: usize, grid: &[f64]) -> Option<f64> {
    let mut first = None;
    for &l in grid.iter().rev() {
        match solve_match(l, c, k) {
            Ok(_) => first = Some(l),
            Err(_) => break,
        }
    }
    first
}
