//! Propagation of solutions of `u'' = (x^3 + a2 x + a3) u` along straight
//! segments of the complex plane.
//!
//! The integrator is Gragg-Bulirsch-Stoer extrapolation of the modified
//! midpoint rule with a fixed column count, so every accepted step has
//! order 16. States carry a logarithmic scale so that magnitudes far outside
//! the double range stay representable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaled::Scaled;

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Coefficients `(a2, a3)` of the cubic potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub a2: C64,
    pub a3: C64,
}

impl PotentialParams {
    pub fn new(a2: C64, a3: C64) -> Result<Self> {
        let p = PotentialParams { a2, a3 };
        if !p.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite potential coefficients {a2}, {a3}")));
        }
        Ok(p)
    }

    pub fn zero() -> Self {
        PotentialParams { a2: ZERO, a3: ZERO }
    }

    pub fn is_finite(&self) -> bool {
        self.a2.is_finite() && self.a3.is_finite()
    }

    #[inline]
    pub fn q(&self, x: C64) -> C64 {
        (x * x + self.a2) * x + self.a3
    }

    /// `q^(j)(x)` for `j = 0..=3`; zero beyond.
    #[inline]
    pub fn q_derivative(&self, x: C64, j: usize) -> C64 {
        match j {
            0 => self.q(x),
            1 => 3.0 * x * x + self.a2,
            2 => 6.0 * x,
            3 => C64::new(6.0, 0.0),
            _ => ZERO,
        }
    }

    /// Parameters of the rotated problem: `(w^{-2k} a2, w^{-3k} a3)`.
    pub fn rotated(&self, k: i32) -> Self {
        PotentialParams { a2: self.a2 * omega_pow(-2 * k), a3: self.a3 * omega_pow(-3 * k) }
    }

    pub fn conj(&self) -> Self {
        PotentialParams { a2: self.a2.conj(), a3: self.a3.conj() }
    }
}

/// `w^k` with `w = exp(2 pi i / 5)`.
pub fn omega_pow(k: i32) -> C64 {
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * f64::from(k.rem_euclid(5)) / 5.0)
}

/// A point `x` with the solution value and derivative there. The true values
/// are `u * exp(log_scale)` and `du * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub x: C64,
    pub u: C64,
    pub du: C64,
    #[serde(default)]
    pub log_scale: f64,
}

impl WaveState {
    pub fn new(x: C64, u: C64, du: C64) -> Self {
        WaveState { x, u, du, log_scale: 0.0 }
    }

    pub fn value(&self) -> C64 {
        self.u * self.log_scale.exp()
    }

    pub fn derivative(&self) -> C64 {
        self.du * self.log_scale.exp()
    }

    pub fn value_scaled(&self) -> Scaled {
        Scaled::new(self.u, self.log_scale)
    }

    pub fn derivative_scaled(&self) -> Scaled {
        Scaled::new(self.du, self.log_scale)
    }

    /// Rescales so that `max(|u|, |du|) = 1` (unless both vanish).
    pub fn normalized(self) -> Self {
        let m = self.u.norm().max(self.du.norm());
        if m == 0.0 || !m.is_finite() {
            return self;
        }
        WaveState { x: self.x, u: self.u / m, du: self.du / m, log_scale: self.log_scale + m.ln() }
    }

    /// Same solution data expressed with the given scale.
    pub fn with_scale(self, log_scale: f64) -> Self {
        let f = (self.log_scale - log_scale).exp();
        WaveState { x: self.x, u: self.u * f, du: self.du * f, log_scale }
    }

    /// `alpha * self + beta * other`; both states must sit at the same point.
    pub fn combine(self, alpha: C64, other: WaveState, beta: C64) -> Result<Self> {
        check_same_point(self.x, other.x)?;
        let top = self.log_scale.max(other.log_scale);
        let a = self.with_scale(top);
        let b = other.with_scale(top);
        Ok(WaveState { x: self.x, u: alpha * a.u + beta * b.u, du: alpha * a.du + beta * b.du, log_scale: top })
    }

    /// Energy-type magnitude `w |u| + |du|` with `w = max(1, |q(x)|^(1/2))`,
    /// relative to the stored scale.
    pub fn energy(&self, params: &PotentialParams) -> f64 {
        energy(params, self.x, [self.u, self.du])
    }
}

/// A straight integration contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: C64,
    pub direction: C64,
    pub length: f64,
}

impl Ray {
    pub fn new(origin: C64, direction: C64, length: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidContour);
        }
        if (direction.norm() - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidArgument(format!("ray direction {direction} is not a unit vector")));
        }
        Ok(Ray { origin, direction, length })
    }

    pub fn between(from: C64, to: C64) -> Result<Self> {
        let d = to - from;
        let len = d.norm();
        if len == 0.0 {
            return Err(Error::InvalidContour);
        }
        Ray::new(from, d / len, len)
    }

    pub fn end(&self) -> C64 {
        self.origin + self.direction * self.length
    }
}

fn check_same_point(x1: C64, x2: C64) -> Result<()> {
    if (x1 - x2).norm() > 1e-14 * x1.norm().max(1.0) {
        return Err(Error::MismatchedPoint(x1, x2));
    }
    Ok(())
}

#[inline]
fn weight(params: &PotentialParams, x: C64) -> f64 {
    params.q(x).norm().sqrt().max(1.0)
}

#[inline]
fn energy(params: &PotentialParams, x: C64, y: [C64; 2]) -> f64 {
    weight(params, x) * y[0].norm() + y[1].norm()
}

const COLUMNS: usize = 8;
const SUBSTEPS: [usize; COLUMNS] = [2, 4, 6, 8, 10, 12, 14, 16];
const MAX_STEPS: usize = 2_000_000;

/// One modified-midpoint sweep over a (complex) step `h` with `n` substeps,
/// followed by Gragg smoothing.
fn midpoint(params: &PotentialParams, x0: C64, y0: [C64; 2], h: C64, n: usize) -> [C64; 2] {
    let hs = h / n as f64;
    let mut zp = y0;
    let q0 = params.q(x0);
    let mut z = [y0[0] + hs * y0[1], y0[1] + hs * q0 * y0[0]];
    for m in 1..n {
        let x = x0 + hs * m as f64;
        let qx = params.q(x);
        let zn = [zp[0] + 2.0 * hs * z[1], zp[1] + 2.0 * hs * qx * z[0]];
        zp = z;
        z = zn;
    }
    let q1 = params.q(x0 + h);
    [0.5 * (z[0] + zp[0] + hs * z[1]), 0.5 * (z[1] + zp[1] + hs * q1 * z[0])]
}

/// One extrapolated step; returns the estimate and its error norm (absolute,
/// in the energy norm at the end point).
fn gbs_step(params: &PotentialParams, x0: C64, y0: [C64; 2], h: C64) -> ([C64; 2], f64) {
    let mut table = [[ZERO; 2]; COLUMNS];
    let mut prev_diag = [ZERO; 2];
    for j in 0..COLUMNS {
        let mut row = [[ZERO; 2]; COLUMNS];
        row[0] = midpoint(params, x0, y0, h, SUBSTEPS[j]);
        for k in 1..=j {
            let r = (SUBSTEPS[j] as f64 / SUBSTEPS[j - k] as f64).powi(2) - 1.0;
            for c in 0..2 {
                row[k][c] = row[k - 1][c] + (row[k - 1][c] - table[k - 1][c]) / r;
            }
        }
        if j == COLUMNS - 1 {
            prev_diag = row[j - 1];
        }
        table = row;
    }
    let best = table[COLUMNS - 1];
    let diff = [best[0] - prev_diag[0], best[1] - prev_diag[1]];
    (best, energy(params, x0 + h, diff))
}

/// Propagation result together with the work it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates along the straight segment from `start.x` to `target` with
/// relative local tolerance `tol`.
///
/// A zero-length segment returns `start` unchanged.
pub fn propagate(params: &PotentialParams, start: &WaveState, target: C64, tol: f64) -> Result<WaveState> {
    propagate_with_stats(params, start, target, tol).map(|(s, _)| s)
}

pub fn propagate_with_stats(
    params: &PotentialParams,
    start: &WaveState,
    target: C64,
    tol: f64,
) -> Result<(WaveState, PropagationStats)> {
    if !(1e-15..=1e-3).contains(&tol) {
        return Err(Error::InvalidArgument(format!("tolerance {tol:e} outside [1e-15, 1e-3]")));
    }
    let mut stats = PropagationStats { accepted: 0, rejected: 0 };
    let total = target - start.x;
    let length = total.norm();
    if length == 0.0 {
        return Ok((*start, stats));
    }
    let dir = total / length;
    let mut state = start.normalized();
    let mut y = [state.u, state.du];
    let mut log_scale = state.log_scale;
    let mut s = 0.0;
    let mut h = (2.0 / weight(params, start.x)).min(length);
    let min_step = 1e-12 * length;
    while s < length {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Error::NonConvergence { at: start.x + dir * s, step: h });
        }
        let last = s + h >= length * (1.0 - 1e-14);
        let hh = if last { length - s } else { h };
        let x0 = start.x + dir * s;
        let (y1, err_abs) = gbs_step(params, x0, y, dir * hh);
        let x1 = if last { target } else { x0 + dir * hh };
        let scale = energy(params, x0, y).max(energy(params, x1, y1));
        let err = if scale > 0.0 { err_abs / (tol * scale) } else { 0.0 };
        if err.is_finite() && err <= 1.0 {
            stats.accepted += 1;
            s = if last { length } else { s + hh };
            y = y1;
            let m = y[0].norm().max(y[1].norm());
            if m > 0.0 && !(1e-50..=1e50).contains(&m) {
                y = [y[0] / m, y[1] / m];
                log_scale += m.ln();
            }
            let fac = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-1.0 / (2 * COLUMNS - 1) as f64)).clamp(0.2, 4.0) };
            h = hh * fac;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-1.0 / (2 * COLUMNS - 1) as f64)).clamp(0.2, 0.7) } else { 0.2 };
            h = hh * fac;
            if h < min_step {
                return Err(Error::NonConvergence { at: x0, step: h });
            }
        }
    }
    state = WaveState { x: target, u: y[0], du: y[1], log_scale };
    Ok((state.normalized(), stats))
}

/// Propagates at `tol` and at a hundredfold tighter tolerance; returns the
/// tight result with the relative difference as a global error estimate.
pub fn propagate_checked(
    params: &PotentialParams,
    start: &WaveState,
    target: C64,
    tol: f64,
) -> Result<(WaveState, f64)> {
    let coarse = propagate(params, start, target, tol)?;
    let fine = propagate(params, start, target, (tol * 1e-2).max(1e-15))?;
    let diff = coarse.combine(C64::new(1.0, 0.0), fine, C64::new(-1.0, 0.0))?;
    let e = diff.energy(params) * (diff.log_scale - fine.log_scale).exp();
    let n = fine.energy(params);
    Ok((fine, if n > 0.0 { e / n } else { e }))
}

/// Propagates along a polyline of waypoints.
pub fn propagate_path(params: &PotentialParams, start: &WaveState, path: &[C64], tol: f64) -> Result<WaveState> {
    let mut s = *start;
    for &p in path {
        s = propagate(params, &s, p, tol)?;
    }
    Ok(s)
}

/// `u1 du2 - du1 u2`, as an ordinary complex number.
pub fn wronskian(s1: &WaveState, s2: &WaveState) -> Result<C64> {
    wronskian_scaled(s1, s2).map(|w| w.to_complex())
}

/// `u1 du2 - du1 u2` with the combined logarithmic scale retained.
pub fn wronskian_scaled(s1: &WaveState, s2: &WaveState) -> Result<Scaled> {
    check_same_point(s1.x, s2.x)?;
    Ok(Scaled::new(s1.u * s2.du - s1.du * s2.u, s1.log_scale + s2.log_scale))
}

/// Derivatives `u, u', ..., u^(K)` from the exact recursion
/// `u^(n+2) = sum_j binom(n, j) q^(j) u^(n-j)`, kept in scaled form.
pub fn derivative_tower_scaled(params: &PotentialParams, s: &WaveState, k_max: usize) -> Result<Vec<Scaled>> {
    if k_max > 200 {
        return Err(Error::InvalidArgument(format!("derivative order {k_max} exceeds 200")));
    }
    let qd: [C64; 4] = std::array::from_fn(|j| params.q_derivative(s.x, j));
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(s.value_scaled());
    if k_max >= 1 {
        out.push(s.derivative_scaled());
    }
    for n in 0..k_max.saturating_sub(1) {
        let mut acc = Scaled::ZERO;
        let mut binom = 1.0;
        for (j, qj) in qd.iter().enumerate().take(n.min(3) + 1) {
            if j > 0 {
                binom *= (n + 1 - j) as f64 / j as f64;
            }
            acc = acc.add(out[n - j].scale(binom * qj));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Plain-valued derivative tower; `Overflow` if any entry exceeds `1e300`.
pub fn derivative_tower(params: &PotentialParams, s: &WaveState, k_max: usize) -> Result<Vec<C64>> {
    let tower = derivative_tower_scaled(params, s, k_max)?;
    let limit = 300.0 * std::f64::consts::LN_10;
    tower
        .iter()
        .map(|v| if v.ln_abs() > limit { Err(Error::Overflow("derivative tower")) } else { Ok(v.to_complex()) })
        .collect()
}

/// State at `s.x + dx` from the Taylor series of the derivative tower,
/// truncated once terms fall below `1e-18` of the running sum.
pub fn taylor_shift(params: &PotentialParams, s: &WaveState, dx: C64) -> Result<WaveState> {
    let base = s.normalized();
    let k_max = 200;
    let tower = derivative_tower_scaled(params, &WaveState { log_scale: 0.0, ..base }, k_max)?;
    let mut u = ZERO;
    let mut du = ZERO;
    let mut pow = C64::new(1.0, 0.0);
    let mut small = 0;
    for (n, d) in tower.iter().enumerate() {
        if n > 0 {
            pow *= dx / n as f64;
        }
        let term = d.to_complex() * pow;
        u += term;
        if n + 1 < tower.len() {
            let dterm = tower[n + 1].to_complex() * pow;
            du += dterm;
            let mag = term.norm().max(dterm.norm());
            if mag <= 1e-18 * u.norm().max(du.norm()) {
                small += 1;
                if small >= 4 {
                    break;
                }
            } else {
                small = 0;
            }
        }
    }
    Ok(WaveState { x: s.x + dx, u, du, log_scale: base.log_scale })
}
