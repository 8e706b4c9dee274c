//! The exact solution family
//!
//! ```text
//! U(x) = exp(i xi0 lambda x0) V(x1, x2),
//! V(x1, x2) = exp(i lambda^5 x2 - i b1 x1 / 2) Y0(lambda^2 x1; 2 xi0, a3)
//! ```
//!
//! of `(P + b0 D0 + b1 D1 + b2 D2) U = 0` with
//! `P = -D0^2 + 2 x1 D0 D2 + D1^2 + x1^3 D2^2` and `D = -i d/dx`, together with
//! the growth measurements made on it.
//!
//! All magnitudes are carried as [`Scaled`] numbers. When `b2` had to be
//! flipped the family lives in the coordinates `(-x0, x1, -x2)`; the public
//! evaluators take original coordinates and convert.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_power, LineFit};
use crate::matching::{
    potential, scaled_coeffs, solve_match, stokes_zero_check, MatchSolution, OperatorCoeffs,
};
use crate::ode::{derivative_tower_scaled, omega_pow, propagate, taylor_shift, PotentialParams, WaveState};
use crate::scaled::Scaled;
use crate::sibuya::{matching_radius, stokes_c0, LogSeries};

/// Exponent `rho` of the radius `lambda^rho` beyond which `Y0` is taken from
/// its asymptotic expansion.
pub const DEFAULT_RHO: f64 = 2.0 / 3.0 + 0.05;

/// Largest accepted relative Stokes zero for a family member.
pub const STOKES_QUALITY_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub rho: f64,
    /// Integration tolerance for the propagated regime.
    pub tol: f64,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions { rho: DEFAULT_RHO, tol: 1e-12 }
    }
}

/// One member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub lambda: f64,
    /// Coefficients as given.
    pub coeffs: OperatorCoeffs,
    /// Coefficients in the working coordinates.
    pub effective: OperatorCoeffs,
    pub matching: MatchSolution,
    /// The `xi0` actually used; differs from `matching.xi0` only for probes.
    pub xi0: C64,
    /// `(2 xi0, a3)`.
    pub potential: PotentialParams,
    pub a_lambda: C64,
    pub b_lambda: C64,
    pub stokes_quality: Option<f64>,
}

impl FamilyParams {
    /// Solves the matching equation at `lambda` for level `k` and checks the
    /// Stokes zero and `Im a(lambda) < 0`.
    pub fn new(lambda: f64, coeffs: &OperatorCoeffs, k: usize) -> Result<Self> {
        let mut f = Self::unchecked(lambda, coeffs, k)?;
        let q = stokes_zero_check(&f.matching, coeffs)?;
        f.stokes_quality = Some(q);
        if !(q < STOKES_QUALITY_LIMIT) {
            return Err(Error::ConditionViolated(format!("relative Stokes zero {q:e} at lambda = {lambda}")));
        }
        if !(f.a_lambda.im < 0.0) {
            return Err(Error::ConditionViolated(format!("Im a(lambda) = {} at lambda = {lambda}", f.a_lambda.im)));
        }
        Ok(f)
    }

    /// As [`FamilyParams::new`] without the Stokes-zero evaluation.
    pub fn unchecked(lambda: f64, coeffs: &OperatorCoeffs, k: usize) -> Result<Self> {
        let sol = solve_match(lambda, coeffs, k)?;
        Ok(Self::from_match(sol, coeffs))
    }

    pub fn from_match(sol: MatchSolution, coeffs: &OperatorCoeffs) -> Self {
        let (a_lambda, b_lambda) = scaled_coeffs(&sol, coeffs);
        let effective = crate::matching::effective_coeffs(&sol, coeffs);
        FamilyParams {
            lambda: sol.lambda,
            coeffs: *coeffs,
            effective,
            matching: sol,
            xi0: sol.xi0,
            potential: potential(&sol, coeffs),
            a_lambda,
            b_lambda,
            stokes_quality: None,
        }
    }

    /// The same member with `xi0` replaced, keeping `a3` consistent with it.
    /// The result is in general not a Stokes zero.
    pub fn with_xi0(&self, xi0: C64) -> Self {
        let a3 = crate::matching::potential_a3(xi0, self.lambda, &self.effective);
        let l23 = self.lambda.powf(2.0 / 3.0);
        FamilyParams {
            xi0,
            potential: PotentialParams { a2: 2.0 * xi0, a3 },
            a_lambda: 2.0 * xi0 / l23,
            b_lambda: a3 / self.lambda,
            stokes_quality: None,
            ..*self
        }
    }

    /// `-1` when the family lives in flipped coordinates.
    pub fn sigma(&self) -> f64 {
        if self.matching.flipped {
            -1.0
        } else {
            1.0
        }
    }
}

/// `Y0(X; a)` on the real axis.
///
/// Past the cutover on either side the expansion is used directly; for
/// `X < 0` the solution is `-w Y2`. Between the cutovers each side is
/// propagated inward from its own seed, and the two are joined at the seam:
/// the sample point where they agree best, which sits near the peak of
/// `|Y0|` where both integrations are stable.
#[derive(Debug, Clone)]
pub struct AxisSolver {
    pub a: PotentialParams,
    pos: LogSeries,
    neg: LogSeries,
    /// Smallest radius at which the expansion is used on each side.
    pub pos_radius: f64,
    pub neg_radius: f64,
    pub cutover: f64,
    pub tol: f64,
    pub seam: f64,
    /// Relative difference of the two sides at the seam.
    pub seam_mismatch: f64,
}

const SEAM_SAMPLES: usize = 200;

impl AxisSolver {
    pub fn new(a: &PotentialParams, lambda: f64, opts: &FamilyOptions) -> Result<Self> {
        let rot = a.rotated(2);
        let sp = matching_radius(a);
        let sn = matching_radius(&rot);
        let mut axis = AxisSolver {
            a: *a,
            pos: LogSeries::new(a, sp.order),
            neg: LogSeries::new(&rot, sn.order),
            pos_radius: sp.radius,
            neg_radius: sn.radius,
            cutover: lambda.powf(opts.rho),
            tol: opts.tol,
            seam: 0.0,
            seam_mismatch: f64::NAN,
        };
        axis.place_seam()?;
        Ok(axis)
    }

    fn place_seam(&mut self) -> Result<()> {
        let (tp, tn) = (self.threshold(1.0), self.threshold(-1.0));
        let xs: Vec<f64> = (0..=SEAM_SAMPLES).map(|j| -tn + (tp + tn) * j as f64 / SEAM_SAMPLES as f64).collect();
        let from_pos = self.sweep(self.asymptotic(tp)?, xs.iter().rev().copied())?;
        let from_neg = self.sweep(self.asymptotic(-tn)?, xs.iter().copied())?;
        let mut best = (f64::INFINITY, 0.0);
        for (k, (p, n)) in from_pos.iter().rev().zip(&from_neg).enumerate() {
            let (p, n) = (p.value_scaled(), n.value_scaled());
            let rel = p.sub(n).ln_abs() - p.ln_abs();
            if rel < best.0 {
                best = (rel, xs[k]);
            }
        }
        self.seam = best.1;
        self.seam_mismatch = best.0.exp();
        Ok(())
    }

    fn sweep(&self, mut state: WaveState, xs: impl Iterator<Item = f64>) -> Result<Vec<WaveState>> {
        xs.map(|x| {
            state = propagate(&self.a, &state, C64::new(x, 0.0), self.tol)?;
            Ok(state)
        })
        .collect()
    }

    /// Radius from which the expansion is used on the side of `x`.
    pub fn threshold(&self, x: f64) -> f64 {
        self.cutover.max(if x >= 0.0 { self.pos_radius } else { self.neg_radius })
    }

    /// The expansion at `x`; `RadiusTooSmall` inside its validity radius.
    pub fn asymptotic(&self, x: f64) -> Result<WaveState> {
        let required = if x >= 0.0 { self.pos_radius } else { self.neg_radius };
        if x.abs() < required {
            return Err(Error::RadiusTooSmall { radius: x.abs(), required });
        }
        if x > 0.0 {
            let s = self.pos.state(C64::new(x, 0.0));
            return Ok(WaveState { x: C64::new(x, 0.0), ..s });
        }
        // Y2(x) = Y0(w^-2 x; rotated a) and w^-2 x = e^{i pi/5} |x|.
        let s = self.neg.state(C64::from_polar(-x, PI / 5.0));
        let w = omega_pow(1);
        Ok(WaveState { x: C64::new(x, 0.0), u: -w * s.u, du: -w * omega_pow(-2) * s.du, log_scale: s.log_scale })
    }

    /// Propagation to `x` from the expansion at `seed`.
    pub fn propagated(&self, x: f64, seed: f64) -> Result<WaveState> {
        let start = self.asymptotic(seed)?;
        if x == seed {
            return Ok(start);
        }
        propagate(&self.a, &start, C64::new(x, 0.0), self.tol)
    }

    /// Seed used for `x`, or `None` when the expansion applies directly.
    fn seed_for(&self, x: f64) -> Option<f64> {
        let (tp, tn) = (self.threshold(1.0), self.threshold(-1.0));
        if x >= tp || x <= -tn {
            None
        } else if x >= self.seam {
            Some(tp)
        } else {
            Some(-tn)
        }
    }

    pub fn eval(&self, x: f64) -> Result<WaveState> {
        match self.seed_for(x) {
            None => self.asymptotic(x),
            Some(seed) => self.propagated(x, seed),
        }
    }

    /// [`AxisSolver::eval`] at many points, propagating inward from one seed
    /// per side. Results are returned in input order.
    pub fn eval_many(&self, xs: &[f64]) -> Result<Vec<WaveState>> {
        let mut out = vec![None; xs.len()];
        for seed in [self.threshold(1.0), -self.threshold(-1.0)] {
            let mut idx: Vec<usize> = (0..xs.len()).filter(|&i| self.seed_for(xs[i]) == Some(seed)).collect();
            idx.sort_by(|&i, &j| (xs[i] - seed).abs().total_cmp(&(xs[j] - seed).abs()));
            let states = self.sweep(self.asymptotic(seed)?, idx.iter().map(|&i| xs[i]))?;
            for (i, s) in idx.into_iter().zip(states) {
                out[i] = Some(s);
            }
        }
        xs.iter()
            .zip(out)
            .map(|(&x, s)| match s {
                Some(s) => Ok(s),
                None => self.asymptotic(x),
            })
            .collect()
    }
}

/// A family member ready for evaluation.
#[derive(Debug, Clone)]
pub struct Family {
    pub params: FamilyParams,
    pub axis: AxisSolver,
}

impl Family {
    pub fn new(params: FamilyParams, opts: &FamilyOptions) -> Result<Self> {
        let axis = AxisSolver::new(&params.potential, params.lambda, opts)?;
        Ok(Family { params, axis })
    }

    fn lambda(&self) -> f64 {
        self.params.lambda
    }

    /// `exp(i lambda^5 y2 - i b1 y1 / 2)` in working coordinates.
    fn prefactor(&self, y1: f64, y2: f64) -> Scaled {
        let l5 = self.lambda().powi(5);
        Scaled::exp(C64::new(0.0, (l5 * y2).rem_euclid(2.0 * PI)) - C64::new(0.0, 0.5 * y1) * self.params.effective.b1)
    }

    /// `V` in original coordinates.
    pub fn eval_v(&self, x1: f64, x2: f64) -> Result<Scaled> {
        if !(x1.abs() <= 1.0 && x2.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("({x1}, {x2}) outside |x1|, |x2| <= 1")));
        }
        let s = self.axis.eval(self.lambda() * self.lambda() * x1)?;
        Ok(self.prefactor(x1, self.params.sigma() * x2) * s.value_scaled())
    }

    /// `U` in original coordinates.
    pub fn eval_u(&self, x: [f64; 3]) -> Result<Scaled> {
        let e0 = Scaled::exp(C64::new(0.0, self.params.sigma() * x[0] * self.lambda()) * self.params.xi0);
        Ok(e0 * self.eval_v(x[1], x[2])?)
    }

    /// `d^k V / dx1^k` for `k = 0..=k_max` at `x1` (and `x2 = 0`), from the
    /// derivative tower of `Y0` and the Leibniz rule.
    pub fn x1_derivatives(&self, x1: f64, k_max: usize) -> Result<Vec<Scaled>> {
        let s = self.axis.eval(self.lambda() * self.lambda() * x1)?;
        self.x1_derivatives_from(&s, x1, k_max)
    }

    fn x1_derivatives_from(&self, s: &WaveState, x1: f64, k_max: usize) -> Result<Vec<Scaled>> {
        let tower = derivative_tower_scaled(&self.axis.a, s, k_max)?;
        let ln_l2 = 2.0 * self.lambda().ln();
        let scaled: Vec<Scaled> = tower
            .iter()
            .enumerate()
            .map(|(j, d)| Scaled { mant: d.mant, log_scale: d.log_scale + j as f64 * ln_l2 })
            .collect();
        let c = -C64::new(0.0, 0.5) * self.params.effective.b1;
        let pre = self.prefactor(x1, 0.0);
        let mut out = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            let mut acc = Scaled::ZERO;
            if c == C64::new(0.0, 0.0) {
                acc = scaled[k];
            } else {
                let mut binom = 1.0;
                for (j, d) in scaled.iter().enumerate().take(k + 1) {
                    if j > 0 {
                        binom *= (k + 1 - j) as f64 / j as f64;
                    }
                    acc = acc.add(d.scale(binom * c.powi((k - j) as i32)));
                }
            }
            out.push(pre * acc);
        }
        Ok(out)
    }

    /// Residual of the operator applied to `U` by second-order central
    /// differences, relative to the sum of the moduli of its terms.
    ///
    /// The step in direction `j` is `h / k_j` with the local wavenumbers
    /// `k0 = |xi0| lambda`, `k1 = lambda^2 max(1, |q|^{1/2}) + |b1| / 2` and
    /// `k2 = lambda^5`.
    pub fn pde_residual(&self, x: [f64; 3], h: f64) -> Result<f64> {
        if !(1e-5..=1e-2).contains(&h) {
            return Err(Error::InvalidArgument(format!("step {h:e} outside [1e-5, 1e-2]")));
        }
        let p = &self.params;
        let l = self.lambda();
        let sg = p.sigma();
        let b = &p.coeffs;
        let big_x = l * l * x[1];
        let s = self.axis.eval(big_x)?;
        let k0 = p.xi0.norm() * l + 1.0;
        let k1 = l * l * self.axis.a.q(s.x).norm().sqrt().max(1.0) + 0.5 * p.effective.b1.norm();
        let k2 = l.powi(5);
        let (d0, d1, d2) = (0.5 * h / k0, h / k1, 0.5 * h / k2);

        // Values relative to U(x): the x0 and x2 factors are exponentials, the
        // x1 neighbours come from Taylor shifts of Y0.
        let i = C64::new(0.0, 1.0);
        let e0 = |t: f64| (i * sg * p.xi0 * l * t).exp();
        let e2 = |t: f64| (i * sg * l.powi(5) * t).exp();
        // Only ratios are needed; dropping the scale keeps them exact when
        // ln |Y0| is so large that its ulp exceeds the step.
        let s = WaveState { log_scale: 0.0, ..s };
        let base = s.value_scaled();
        let mut w = [C64::new(0.0, 0.0); 3];
        for (m, dx) in [-d1, 0.0, d1].into_iter().enumerate() {
            let y = if dx == 0.0 { base } else { taylor_shift(&self.axis.a, &s, C64::new(l * l * dx, 0.0))?.value_scaled() };
            let ratio = (y / base).to_complex();
            w[m] = ratio * (-i * 0.5 * p.effective.b1 * dx).exp();
        }
        let u = |a: f64, m: usize, c: f64| e0(a) * w[m] * e2(c);

        let u0 = u(0.0, 1, 0.0);
        let dd0 = (u(d0, 1, 0.0) - 2.0 * u0 + u(-d0, 1, 0.0)) / (d0 * d0);
        let dd1 = (u(0.0, 2, 0.0) - 2.0 * u0 + u(0.0, 0, 0.0)) / (d1 * d1);
        let dd2 = (u(0.0, 1, d2) - 2.0 * u0 + u(0.0, 1, -d2)) / (d2 * d2);
        let d02 = (u(d0, 1, d2) - u(d0, 1, -d2) - u(-d0, 1, d2) + u(-d0, 1, -d2)) / (4.0 * d0 * d2);
        let g0 = (u(d0, 1, 0.0) - u(-d0, 1, 0.0)) / (2.0 * d0);
        let g1 = (u(0.0, 2, 0.0) - u(0.0, 0, 0.0)) / (2.0 * d1);
        let g2 = (u(0.0, 1, d2) - u(0.0, 1, -d2)) / (2.0 * d2);

        // Working coordinates (s0, x1, s2) = (sg x0, x1, sg x2); in the
        // original ones d/dx0 = sg d/ds0 and d/dx2 = sg d/ds2.
        let x1 = x[1];
        let terms = [
            dd0,
            -2.0 * x1 * d02,
            -dd1,
            -x1.powi(3) * dd2,
            -i * b.b0 * sg * g0,
            -i * b.b1 * g1,
            -i * b.b2 * sg * g2,
        ];
        let total: C64 = terms.iter().sum();
        let norm: f64 = terms.iter().map(|t| t.norm()).sum();
        Ok(total.norm() / norm)
    }

    /// `ln |U(y0, -lambda^{-2 mu} X, 0)|` in working coordinates.
    pub fn lower_bound_probe(&self, x0: f64, mu: f64, x_probe: f64) -> Result<f64> {
        if !(mu > 0.0 && mu < 5.0 / 6.0) || !(x_probe > 0.0 && x_probe < 1.0) {
            return Err(Error::InvalidArgument(format!("probe needs 0 < mu < 5/6 and 0 < X < 1, got {mu}, {x_probe}")));
        }
        let x1 = -self.lambda().powf(-2.0 * mu) * x_probe;
        if x1.abs() >= 0.5 {
            return Err(Error::InvalidArgument(format!("probe point x1 = {x1} is not inside |x1| < 1/2")));
        }
        let sg = self.params.sigma();
        Ok(self.eval_u([sg * x0, x1, 0.0])?.ln_abs())
    }

    /// `V(x1, 0)` for `x1 < 0` from the connection formula
    /// `Y0 = (C0 C1 - w) Y2 - w C0 Y3`, valid whether or not `C0` vanishes.
    pub fn connection_v(&self, x1: f64, tol: f64) -> Result<Scaled> {
        if !(x1 < 0.0) {
            return Err(Error::InvalidArgument("connection formula is used on x1 < 0".into()));
        }
        let a = self.axis.a;
        let big_x = self.lambda() * self.lambda() * x1;
        let c0 = stokes_c0(&a, tol)?.c0_scaled;
        let c1 = stokes_c0(&a.rotated(1), tol)?.c0_scaled;
        let w = Scaled::from_complex(omega_pow(1));
        let y2 = self.axis.asymptotic(big_x)?.value_scaled();
        let rot3 = a.rotated(3);
        let seed = matching_radius(&rot3);
        if big_x.abs() < seed.radius {
            return Err(Error::RadiusTooSmall { radius: big_x.abs(), required: seed.radius });
        }
        // Y3(x) = Y0(w^-3 x; rotated a) and w^-3 x = e^{-i pi/5} |x|.
        let y3 = LogSeries::new(&rot3, seed.order).state(C64::from_polar(-big_x, -PI / 5.0)).value_scaled();
        let y0 = (c0 * c1).sub(w) * y2;
        let y0 = y0.sub(w * c0 * y3);
        Ok(self.prefactor(x1, 0.0) * y0)
    }
}

pub fn eval_v(xp: [f64; 2], f: &Family) -> Result<Scaled> {
    f.eval_v(xp[0], xp[1])
}

pub fn eval_u(x: [f64; 3], f: &Family) -> Result<Scaled> {
    f.eval_u(x)
}

pub fn pde_residual(x: [f64; 3], f: &Family, h: f64) -> Result<f64> {
    f.pde_residual(x, h)
}

pub fn lower_bound_probe(f: &Family, x0: f64, mu: f64, x_probe: f64) -> Result<f64> {
    f.lower_bound_probe(x0, mu, x_probe)
}

/// `ln |V(x1, 0)|` for the member with `xi0` scaled by `1 + rel`, where the
/// Stokes multiplier no longer vanishes and `Y1` contaminates `x1 < 0`.
pub fn contamination_probe(params: &FamilyParams, rel: f64, x1: f64, opts: &FamilyOptions) -> Result<f64> {
    let f = Family::new(params.with_xi0(params.xi0 * (1.0 + rel)), opts)?;
    Ok(f.connection_v(x1, 1e-12)?.ln_abs())
}

/// `log2(r(h) / r(h/2))` for the residual `r` of [`Family::pde_residual`].
pub fn richardson_order(f: &Family, x: [f64; 3], h: f64) -> Result<f64> {
    Ok((f.pde_residual(x, h)? / f.pde_residual(x, 0.5 * h)?).log2())
}

/// `(ln sup |d^k V / dx1^k|, argmax x1)` for `k = 0..=k_max` over a grid in
/// `|x1| <= 1/2`, quadratically refined towards `x1 = 0` where `V` varies.
pub fn x1_derivative_sups(f: &Family, k_max: usize) -> Result<Vec<(f64, f64)>> {
    let l2 = f.lambda() * f.lambda();
    let reach = (l2 / 2.0).min(2.0 * f.axis.threshold(1.0).max(f.axis.threshold(-1.0)));
    let n = 120;
    let mut xs = vec![0.0];
    for j in 1..=n {
        let t = reach * (j as f64 / n as f64).powi(2);
        xs.push(t);
        xs.push(-t);
    }
    if reach < l2 / 2.0 {
        xs.push(l2 / 2.0);
        xs.push(-l2 / 2.0);
    }
    let states = f.axis.eval_many(&xs)?;
    let per_point: Vec<Vec<Scaled>> = states
        .par_iter()
        .zip(xs.par_iter())
        .map(|(st, &bx)| f.x1_derivatives_from(st, bx / l2, k_max))
        .collect::<Result<_>>()?;
    let mut best = vec![(f64::NEG_INFINITY, 0.0); k_max + 1];
    for (d, &bx) in per_point.iter().zip(&xs) {
        for (k, v) in d.iter().enumerate() {
            let lv = v.ln_abs();
            if lv > best[k].0 {
                best[k] = (lv, bx / l2);
            }
        }
    }
    Ok(best)
}

/// The Gevrey norm of the Cauchy data of `U` and where its supremum sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevreyNorm {
    pub log_norm: f64,
    /// Maximizing orders in `x1` and `x2`.
    pub k1: usize,
    pub k2: usize,
    /// Maximizing `x1`.
    pub x1: f64,
    /// The maximizing `x1` order equals the truncation order.
    pub at_boundary: bool,
    /// `ln sup |V|` over the sample grid.
    pub log_sup_v: f64,
}

/// `ln` of `sum_j sup_{alpha, x'} |d^alpha D0^j U(0, x')| / (h^|alpha| |alpha|^{s |alpha|})`.
///
/// Orders in `x1` run up to `k_max` through the derivative tower; orders in
/// `x2` contribute the exact factor `lambda^{5 k2}` and are maximized in
/// closed form. The supremum in `x'` is taken over a grid in `|x'| <= 1/2`
/// that is quadratically refined towards `x1 = 0`.
pub fn gevrey_data_norm(f: &Family, s: f64, h: f64, k_max: usize) -> Result<GevreyNorm> {
    if !(s >= 3.0) || !(h > 0.0) || k_max > 60 {
        return Err(Error::InvalidArgument(format!("Gevrey norm needs s >= 3, h > 0, k_max <= 60 (got {s}, {h}, {k_max})")));
    }
    let l = f.lambda();
    let best_k = x1_derivative_sups(f, k_max)?;
    let ln_l5 = 5.0 * l.ln();
    let ln_h = h.ln();
    let weight = |m: usize| if m == 0 { 0.0 } else { m as f64 * ln_h + s * m as f64 * (m as f64).ln() };
    let peak = ((ln_l5 - ln_h) / s - 1.0).exp();
    let mut best = (f64::NEG_INFINITY, 0, 0, 0.0);
    for (k1, &(lt, x1)) in best_k.iter().enumerate() {
        let mut cands = vec![0usize];
        for m in [peak.floor(), peak.ceil()] {
            if m.is_finite() && m >= k1 as f64 {
                cands.push(m as usize - k1);
            }
        }
        for k2 in cands {
            let v = lt + k2 as f64 * ln_l5 - weight(k1 + k2);
            if v > best.0 {
                best = (v, k1, k2, x1);
            }
        }
    }
    // D0 U(0, x') = xi0 lambda V(x').
    let log_norm = best.0 + (1.0 + f.params.xi0.norm() * l).ln();
    Ok(GevreyNorm {
        log_norm,
        k1: best.1,
        k2: best.2,
        x1: best.3,
        at_boundary: best.1 == k_max,
        log_sup_v: best_k[0].0,
    })
}

/// Fitted growth exponent `p` of `log_values ~ C lambda^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub lambda_grid: Vec<f64>,
    pub log_values: Vec<f64>,
    pub fitted_exponent: f64,
    pub confidence_halfwidth: f64,
}

impl GrowthReport {
    pub fn new(lambda_grid: Vec<f64>, log_values: Vec<f64>) -> Result<Self> {
        if lambda_grid.len() < 5 || lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("growth grid needs at least 5 strictly increasing points".into()));
        }
        if lambda_grid[lambda_grid.len() - 1] < 10.0 * lambda_grid[0] {
            return Err(Error::InvalidArgument("growth grid must span a factor of at least 10".into()));
        }
        let fit = fit_power(&lambda_grid, &log_values)?;
        Ok(GrowthReport { lambda_grid, log_values, fitted_exponent: fit.slope, confidence_halfwidth: fit.halfwidth })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Incompatible,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Incompatible => "INCOMPATIBLE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Parameters of the two growth sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub level: usize,
    pub h: f64,
    pub k_max: usize,
    pub x0: f64,
    pub mu: f64,
    pub x_probe: f64,
    pub options: FamilyOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: crate::fit::geometric_grid(100.0, 1000.0, 8),
            level: 0,
            h: 1.0,
            k_max: 40,
            x0: 0.1,
            mu: 0.4,
            x_probe: 0.5,
            options: FamilyOptions::default(),
        }
    }
}

/// Per-`lambda` measurements shared by both sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub xi0: C64,
    pub stokes_quality: f64,
    pub gevrey: GevreyNorm,
    /// `ln |U(x0, x1, 0)|` and `ln |U(0, x1, 0)|` at the probe point.
    pub log_u_probe: f64,
    pub log_v_probe: f64,
}

/// The two sweeps and the verdict drawn from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompatibilityReport {
    pub s: f64,
    pub coeffs: OperatorCoeffs,
    pub rows: Vec<SweepRow>,
    /// Exponent of the Cauchy-data norm.
    pub data: GrowthReport,
    /// Exponent of the `x0`-growth `ln |U(x0, .)| - ln |U(0, .)|`.
    pub lower: GrowthReport,
    /// Exponent of the decay `-ln |V|` at the probe point, when `V` decays
    /// across the whole sweep.
    pub decay: Option<LineFit>,
    pub gap: f64,
    pub joint_halfwidth: f64,
    pub verdict: Verdict,
    pub boundary_hits: usize,
}

impl IncompatibilityReport {
    /// The verdict, or `InsufficientSeparation` when the sweep cannot decide.
    pub fn require_verdict(&self) -> Result<Verdict> {
        match self.verdict {
            Verdict::Incompatible => Ok(Verdict::Incompatible),
            Verdict::Inconclusive => Err(Error::InsufficientSeparation(format!(
                "gap {:.4} against joint half-width {:.4} at s = {}",
                self.gap, self.joint_halfwidth, self.s
            ))),
        }
    }
}

/// One row of the sweeps at `lambda`.
pub fn sweep_row(coeffs: &OperatorCoeffs, s: f64, lambda: f64, cfg: &SweepConfig) -> Result<SweepRow> {
    let params = FamilyParams::new(lambda, coeffs, cfg.level)?;
    let fam = Family::new(params, &cfg.options)?;
    let gevrey = gevrey_data_norm(&fam, s, cfg.h, cfg.k_max)?;
    let log_u_probe = fam.lower_bound_probe(cfg.x0, cfg.mu, cfg.x_probe)?;
    let log_v_probe = fam.lower_bound_probe(0.0, cfg.mu, cfg.x_probe)?;
    Ok(SweepRow {
        lambda,
        xi0: params.xi0,
        stokes_quality: params.stokes_quality.unwrap_or(f64::NAN),
        gevrey,
        log_u_probe,
        log_v_probe,
    })
}

/// Verdict `INCOMPATIBLE` when the fitted lower-bound exponent exceeds the
/// fitted data-norm exponent by at least three joint half-widths; no verdict
/// is given for `s <= 3`.
pub fn incompatibility_report(coeffs: &OperatorCoeffs, s: f64, cfg: &SweepConfig) -> Result<IncompatibilityReport> {
    let rows: Vec<SweepRow> =
        cfg.lambdas.par_iter().map(|&l| sweep_row(coeffs, s, l, cfg)).collect::<Result<_>>()?;
    report_from_rows(coeffs, s, rows)
}

pub fn report_from_rows(coeffs: &OperatorCoeffs, s: f64, rows: Vec<SweepRow>) -> Result<IncompatibilityReport> {
    let grid: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let data = GrowthReport::new(grid.clone(), rows.iter().map(|r| r.gevrey.log_norm).collect())?;
    let lower = GrowthReport::new(grid.clone(), rows.iter().map(|r| r.log_u_probe - r.log_v_probe).collect())?;
    let decay_vals: Vec<f64> = rows.iter().map(|r| -r.log_v_probe).collect();
    let decay = if decay_vals.iter().all(|v| *v > 0.0) { Some(fit_power(&grid, &decay_vals)?) } else { None };
    let gap = lower.fitted_exponent - data.fitted_exponent;
    let joint_halfwidth = lower.confidence_halfwidth.hypot(data.confidence_halfwidth);
    let verdict =
        if s > 3.0 && gap > 0.0 && gap >= 3.0 * joint_halfwidth { Verdict::Incompatible } else { Verdict::Inconclusive };
    let boundary_hits = rows.iter().filter(|r| r.gevrey.at_boundary).count();
    Ok(IncompatibilityReport { s, coeffs: *coeffs, rows, data, lower, decay, gap, joint_halfwidth, verdict, boundary_hits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn family(lambda: f64, coeffs: OperatorCoeffs) -> Family {
        Family::new(FamilyParams::unchecked(lambda, &coeffs, 0).unwrap(), &FamilyOptions::default()).unwrap()
    }

    fn b_i() -> OperatorCoeffs {
        OperatorCoeffs::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)).unwrap()
    }

    fn b_mixed() -> OperatorCoeffs {
        OperatorCoeffs::new(c(1.0, 0.0), c(1.0, 0.0), C64::from_polar(1.0, 0.75 * PI)).unwrap()
    }

    #[test]
    fn u_reduces_to_v_at_zero_time() {
        let f = family(100.0, b_mixed());
        let u = f.eval_u([0.0, 0.03, 0.2]).unwrap();
        let v = f.eval_v(0.03, 0.2).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn time_factor_grows() {
        let f = family(100.0, b_i());
        let v = f.eval_v(-0.01, 0.0).unwrap().ln_abs();
        let mut prev = v;
        for x0 in [0.05, 0.1, 0.2] {
            let u = f.eval_u([x0, -0.01, 0.0]).unwrap().ln_abs();
            assert!(u > prev);
            let expected = v - f.params.xi0.im * 100.0 * x0;
            assert!((u - expected).abs() < 1e-9 * expected.abs().max(1.0));
            prev = u;
        }
    }

    #[test]
    fn regimes_agree_in_overlap() {
        let f = family(150.0, b_mixed());
        for side in [1.0, -1.0] {
            let t = f.axis.threshold(side);
            for r in [1.1, 1.4] {
                let x = side * r * t;
                let a = f.axis.asymptotic(x).unwrap();
                let p = f.axis.propagated(x, side * 2.0 * t).unwrap();
                let rel = a.value_scaled().sub(p.value_scaled()).ln_abs() - a.value_scaled().ln_abs();
                assert!(rel < (1e-6f64).ln(), "side {side} r {r}: {}", rel.exp());
            }
        }
    }

    #[test]
    fn many_points_match_single_evaluations() {
        let f = family(100.0, b_i());
        let xs = [3.0, -2.0, 0.0, -15.0, 10.0];
        let many = f.axis.eval_many(&xs).unwrap();
        for (x, m) in xs.iter().zip(&many) {
            let one = f.axis.eval(*x).unwrap();
            let rel = one.value_scaled().sub(m.value_scaled()).ln_abs() - one.value_scaled().ln_abs();
            assert!(rel < (1e-8f64).ln());
        }
    }

    #[test]
    fn two_sides_meet_at_the_seam() {
        for lambda in [100.0, 400.0, 1000.0] {
            let f = family(lambda, b_i());
            let seam = f.axis.seam;
            let pos = f.axis.propagated(seam, f.axis.threshold(1.0)).unwrap();
            let neg = f.axis.propagated(seam, -f.axis.threshold(-1.0)).unwrap();
            let dd = pos.derivative_scaled().sub(neg.derivative_scaled()).ln_abs() - pos.derivative_scaled().ln_abs();
            assert!(f.axis.seam_mismatch < 1e-7 && dd < (1e-7f64).ln(), "{lambda}: {} {}", f.axis.seam_mismatch, dd.exp());
        }
    }

    #[test]
    fn tower_matches_finite_differences() {
        let f = family(100.0, b_mixed());
        for x1 in [-0.0005, 0.0008] {
            let d = f.x1_derivatives(x1, 4).unwrap();
            let big_x = 1e4 * x1;
            let kq = 1e4 * f.axis.a.q(C64::new(big_x, 0.0)).norm().sqrt().max(1.0);
            let h = 0.02 / kq;
            let v: Vec<C64> = (-3..=3).map(|j| f.eval_v(x1 + j as f64 * h, 0.0).unwrap()).map(|s| (s / d[0]).to_complex()).collect();
            let fd = [
                (v[1] - 8.0 * v[2] + 8.0 * v[4] - v[5]) / (12.0 * h),
                (-v[1] + 16.0 * v[2] - 30.0 * v[3] + 16.0 * v[4] - v[5]) / (12.0 * h * h),
                (v[0] - 8.0 * v[1] + 13.0 * v[2] - 13.0 * v[4] + 8.0 * v[5] - v[6]) / (8.0 * h.powi(3)),
                (-v[0] + 12.0 * v[1] - 39.0 * v[2] + 56.0 * v[3] - 39.0 * v[4] + 12.0 * v[5] - v[6]) / (6.0 * h.powi(4)),
            ];
            for k in 1..=4 {
                let exact = (d[k] / d[0]).to_complex();
                assert!((fd[k - 1] - exact).norm() < 1e-5 * exact.norm(), "k = {k}: {} vs {}", fd[k - 1], exact);
            }
        }
    }

    #[test]
    fn residual_converges_at_second_order() {
        let f = family(100.0, b_mixed());
        let x = [0.1, -0.002, 0.3];
        let r1 = f.pde_residual(x, 8e-3).unwrap();
        let r2 = f.pde_residual(x, 4e-3).unwrap();
        let order = (r1 / r2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn residual_is_small_for_the_solution() {
        let f = family(100.0, b_i());
        assert!(f.pde_residual([0.1, -0.2, 0.0], 1e-4).unwrap() < 1e-4);
    }

    #[test]
    fn wrong_operator_leaves_a_plateau() {
        let good = family(100.0, b_i());
        let mut p = good.params;
        p.coeffs.b2 += 0.1;
        let bad = Family { params: p, axis: good.axis.clone() };
        let x = [0.1, 0.0, 0.0];
        let r1 = bad.pde_residual(x, 4e-3).unwrap();
        let r2 = bad.pde_residual(x, 2e-3).unwrap();
        assert!(r1 > 1e-2 && r2 > 1e-2, "{r1} {r2}");
        assert!((r1 / r2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn v_stays_bounded_for_negative_x1() {
        let mut prev = f64::INFINITY;
        for lambda in [100.0, 200.0, 400.0] {
            let v = family(lambda, b_i()).eval_v(-0.25, 0.0).unwrap().ln_abs();
            assert!(v < prev && v < 0.0);
            prev = v;
        }
    }

    #[test]
    fn gevrey_norm_is_finite_and_interior() {
        let f = family(100.0, b_i());
        let g = gevrey_data_norm(&f, 4.0, 1.0, 40).unwrap();
        assert!(g.log_norm.is_finite() && g.log_norm > 0.0);
        assert!(!g.at_boundary);
        assert!(matches!(gevrey_data_norm(&f, 2.0, 1.0, 40), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn probe_preconditions() {
        let f = family(100.0, b_i());
        assert!(f.lower_bound_probe(0.1, 0.9, 0.5).is_err());
        assert!(f.lower_bound_probe(0.1, 0.4, 1.5).is_err());
        assert!(f.lower_bound_probe(0.1, 0.4, 0.5).unwrap().is_finite());
    }

    #[test]
    fn growth_report_validates_grid() {
        assert!(GrowthReport::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(GrowthReport::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0; 5]).is_err());
        let g: Vec<f64> = crate::fit::geometric_grid(10.0, 100.0, 5);
        let r = GrowthReport::new(g.clone(), g.iter().map(|l| 2.0 * l.powf(1.5)).collect()).unwrap();
        assert!((r.fitted_exponent - 1.5).abs() < 1e-12);
    }
    fn sweep_grid() -> Vec<f64> {
        crate::fit::geometric_grid(100.0, 1000.0, 5)
    }

    #[test]
    fn regimes_agree_for_random_lambda() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let lambda = rng.random_range(100.0..1000.0);
            let f = family(lambda, b_i());
            let t = f.axis.threshold(1.0);
            let x = rng.random_range(1.05..1.5) * t;
            let a = f.axis.asymptotic(x).unwrap().value_scaled();
            let p = f.axis.propagated(x, 2.0 * t).unwrap().value_scaled();
            assert!(a.sub(p).ln_abs() - a.ln_abs() < (1e-6f64).ln(), "lambda {lambda}");
        }
    }

    #[test]
    fn time_derivative_at_zero() {
        // D0 U(0, x') = xi0 lambda V(x') with D0 = -i d/dx0.
        let f = family(100.0, b_mixed());
        let d = 1e-7;
        let v = f.eval_v(0.01, 0.1).unwrap();
        let up = (f.eval_u([d, 0.01, 0.1]).unwrap() / v).to_complex();
        let um = (f.eval_u([-d, 0.01, 0.1]).unwrap() / v).to_complex();
        let d0 = -C64::i() * (up - um) / (2.0 * d);
        let expected = f.params.xi0 * 100.0;
        assert!((d0 - expected).norm() < 1e-6 * expected.norm());
    }

    #[test]
    fn connection_formula_matches_continuation() {
        // Off the Stokes zero Y0 picks up C0 Y1 on the negative axis, where
        // continuing Y0 across the origin is stable.
        let p = FamilyParams::unchecked(100.0, &b_i(), 0).unwrap();
        let f = Family::new(p.with_xi0(p.xi0 * 1.01), &FamilyOptions::default()).unwrap();
        for big_x in [-40.0, -80.0] {
            let direct = f.axis.propagated(big_x, f.axis.threshold(1.0)).unwrap().value_scaled();
            let conn = f.connection_v(big_x / 1e4, 1e-12).unwrap();
            assert!(conn.sub(direct).ln_abs() - conn.ln_abs() < (1e-6f64).ln());
        }
    }

    #[test]
    fn contamination_grows_at_five_thirds() {
        let opts = FamilyOptions::default();
        let grid = sweep_grid();
        let vals: Vec<f64> = grid
            .par_iter()
            .map(|&l| contamination_probe(&FamilyParams::unchecked(l, &b_i(), 0).unwrap(), 0.01, -0.25, &opts).unwrap())
            .collect();
        let r = GrowthReport::new(grid, vals).unwrap();
        assert!((r.fitted_exponent - 5.0 / 3.0).abs() < 0.1, "{}", r.fitted_exponent);
    }

    #[test]
    fn x1_derivative_roots_stay_bounded() {
        let ln_fact = |k: usize| (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
        for coeffs in [b_i(), b_mixed()] {
            for lambda in [100.0, 200.0, 400.0] {
                let sups = x1_derivative_sups(&family(lambda, coeffs), 60).unwrap();
                let root: Vec<f64> = (40..=60).map(|k| (sups[k].0 - 3.0 * ln_fact(k)) / k as f64).collect();
                assert!(root.windows(2).all(|w| w[1] < w[0]), "lambda {lambda}");
            }
        }
    }

    #[test]
    fn data_supremum_grows_slower_than_four_thirds() {
        let grid = sweep_grid();
        let vals: Vec<f64> =
            grid.par_iter().map(|&l| x1_derivative_sups(&family(l, b_i()), 0).unwrap()[0].0).collect();
        let r = GrowthReport::new(grid, vals).unwrap();
        assert!(r.fitted_exponent < 4.0 / 3.0 + 0.1, "{}", r.fitted_exponent);
    }

    #[test]
    fn zero_time_decay_exponent() {
        let grid = sweep_grid();
        let mu = 0.4;
        let vals: Vec<f64> =
            grid.par_iter().map(|&l| -family(l, b_i()).lower_bound_probe(0.0, mu, 0.5).unwrap()).collect();
        let r = GrowthReport::new(grid, vals).unwrap();
        assert!((r.fitted_exponent - (5.0 / 3.0 - mu)).abs() < 0.1, "{}", r.fitted_exponent);
    }

    #[test]
    fn doubling_time_doubles_the_growth() {
        let grid = sweep_grid();
        let coef = |x0: f64| {
            grid.iter()
                .map(|&l| {
                    let f = family(l, b_i());
                    (f.lower_bound_probe(x0, 0.4, 0.5).unwrap() - f.lower_bound_probe(0.0, 0.4, 0.5).unwrap())
                        / l.powf(5.0 / 3.0)
                })
                .sum::<f64>()
        };
        let ratio = coef(0.2) / coef(0.1);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn richardson_order_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f = family(100.0, b_mixed());
        for _ in 0..5 {
            let x = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
            let order = richardson_order(&f, x, 8e-3).unwrap();
            assert!((order - 2.0).abs() < 0.2, "{x:?}: {order}");
        }
    }

    #[test]
    fn checked_member_satisfies_invariants() {
        let p = FamilyParams::new(100.0, &b_i(), 0).unwrap();
        assert!(p.stokes_quality.unwrap() < STOKES_QUALITY_LIMIT);
        assert!(p.a_lambda.im < 0.0);
    }

    #[test]
    fn eval_rejects_points_outside_the_box() {
        let f = family(100.0, b_i());
        assert!(matches!(f.eval_v(1.5, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(f.pde_residual([0.0, 0.0, 0.0], 0.1), Err(Error::InvalidArgument(_))));
    }

    fn synthetic_rows(data_exp: f64) -> Vec<SweepRow> {
        sweep_grid()
            .into_iter()
            .enumerate()
            .map(|(j, l)| {
                let wobble = 1.0 + 0.01 * if j % 2 == 0 { 1.0 } else { -1.0 };
                SweepRow {
                    lambda: l,
                    xi0: C64::new(0.0, -1.0),
                    stokes_quality: 0.0,
                    gevrey: GevreyNorm {
                        log_norm: wobble * l.powf(data_exp),
                        k1: 0,
                        k2: 0,
                        x1: 0.0,
                        at_boundary: false,
                        log_sup_v: 0.0,
                    },
                    log_u_probe: l.powf(5.0 / 3.0) - l,
                    log_v_probe: -l,
                }
            })
            .collect()
    }

    #[test]
    fn verdict_rules() {
        let r = report_from_rows(&b_i(), 4.0, synthetic_rows(1.25)).unwrap();
        assert_eq!(r.verdict, Verdict::Incompatible);
        assert_eq!(r.require_verdict().unwrap(), Verdict::Incompatible);
        let r = report_from_rows(&b_i(), 3.0, synthetic_rows(1.25)).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(matches!(r.require_verdict(), Err(Error::InsufficientSeparation(_))));
        let r = report_from_rows(&b_i(), 3.1, synthetic_rows(5.0 / 3.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
