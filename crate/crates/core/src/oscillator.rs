//! Eigenvalues of `H(beta) = p^2 + x^2 + i beta x^3`.
//!
//! Two independent routes: a Hermite-basis matrix solved by shifted
//! Rayleigh quotient iteration with continuation from `beta = 0`, and zeros
//! of the Stokes multiplier `C0` under the scaling that maps the eigenvalue
//! problem onto `u'' = (x^3 + a2 x + a3) u`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{omega_pow, PotentialParams};
use crate::scaled::Scaled;
use crate::sibuya::{c0_at, c0_eval_with, RotatedPlanners, StokesOptions};

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest basis tried by [`eigen_spectral`].
pub const MAX_BASIS: usize = 2048;

/// `<m| x |n>` in the orthonormal Hermite basis.
fn x_elem(m: usize, n: usize) -> f64 {
    if n == m + 1 {
        (n as f64 / 2.0).sqrt()
    } else if m == n + 1 {
        (m as f64 / 2.0).sqrt()
    } else {
        0.0
    }
}

/// `<m| x^3 |n>`, exact (not the cube of a truncated matrix).
pub fn x3_elem(m: usize, n: usize) -> f64 {
    if m.abs_diff(n) > 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for j in m.saturating_sub(1)..=m + 1 {
        for l in n.saturating_sub(1)..=n + 1 {
            acc += x_elem(m, j) * x_elem(j, l) * x_elem(l, n);
        }
    }
    acc
}

/// Complex symmetric matrix of half-bandwidth 3.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    pub n: usize,
    pub diag: Vec<C64>,
    /// `upper[d - 1][i] = M[i][i + d]` for `d = 1, 2, 3`.
    pub upper: [Vec<C64>; 3],
}

impl BandedMatrix {
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            d @ 1..=3 => self.upper[d - 1][lo],
            _ => ZERO,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut out: Vec<C64> = (0..n).map(|i| self.diag[i] * v[i]).collect();
        for d in 1..=3 {
            for i in 0..n.saturating_sub(d) {
                let m = self.upper[d - 1][i];
                out[i] += m * v[i + d];
                out[i + d] += m * v[i];
            }
        }
        out
    }
}

/// `H(beta)` in the first `n` harmonic-oscillator eigenfunctions.
pub fn build_matrix(beta: C64, n: usize) -> Result<BandedMatrix> {
    if n < 32 {
        return Err(Error::InvalidArgument(format!("basis size {n} below 32")));
    }
    let ib = C64::new(0.0, 1.0) * beta;
    let diag = (0..n).map(|i| C64::new((2 * i + 1) as f64, 0.0)).collect();
    let upper = std::array::from_fn(|k| {
        let d = k + 1;
        (0..n - d).map(|i| ib * x3_elem(i, i + d)).collect()
    });
    Ok(BandedMatrix { n, diag, upper })
}

const KL: usize = 3;
const KU: usize = 3;
const WIDTH: usize = 2 * KL + KU + 1;

/// LU factorization with partial pivoting of `M - shift I` in band storage.
struct BandLu {
    n: usize,
    rows: Vec<[C64; WIDTH]>,
    piv: Vec<usize>,
    mult: Vec<[C64; KL]>,
}

impl BandLu {
    fn col(i: usize, j: usize) -> usize {
        j + KL - i
    }

    fn new(m: &BandedMatrix, shift: C64) -> BandLu {
        let n = m.n;
        let mut rows = vec![[ZERO; WIDTH]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for j in i.saturating_sub(3)..(i + 4).min(n) {
                row[Self::col(i, j)] = m.get(i, j) - if i == j { shift } else { ZERO };
            }
        }
        let mut piv = vec![0; n];
        let mut mult = vec![[ZERO; KL]; n];
        for k in 0..n {
            let last = (k + KL).min(n - 1);
            let mut p = k;
            for r in k + 1..=last {
                if rows[r][Self::col(r, k)].norm() > rows[p][Self::col(p, k)].norm() {
                    p = r;
                }
            }
            piv[k] = p;
            let jend = (k + KL + KU + 1).min(n);
            if p != k {
                for j in k..jend {
                    let a = rows[k][Self::col(k, j)];
                    rows[k][Self::col(k, j)] = rows[p][Self::col(p, j)];
                    rows[p][Self::col(p, j)] = a;
                }
            }
            let mut pivot = rows[k][Self::col(k, k)];
            if pivot == ZERO {
                pivot = C64::new(1e-300, 0.0);
                rows[k][Self::col(k, k)] = pivot;
            }
            for i in k + 1..=last {
                let f = rows[i][Self::col(i, k)] / pivot;
                mult[k][i - k - 1] = f;
                rows[i][Self::col(i, k)] = ZERO;
                for j in k + 1..jend {
                    let v = rows[k][Self::col(k, j)];
                    rows[i][Self::col(i, j)] -= f * v;
                }
            }
        }
        BandLu { n, rows, piv, mult }
    }

    fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut y = b.to_vec();
        for k in 0..n {
            y.swap(k, self.piv[k]);
            for i in k + 1..(k + KL + 1).min(n) {
                y[i] = y[i] - self.mult[k][i - k - 1] * y[k];
            }
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..(i + KL + KU + 1).min(n) {
                s -= self.rows[i][Self::col(i, j)] * y[j];
            }
            y[i] = s / self.rows[i][Self::col(i, i)];
        }
        y
    }
}

fn bilinear(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn rayleigh(m: &BandedMatrix, v: &[C64]) -> C64 {
    bilinear(v, &m.mul_vec(v)) / bilinear(v, v)
}

/// Rayleigh quotient iteration (bilinear quotient for the complex symmetric
/// matrix), preceded by two inverse iterations at the predicted shift.
fn refine(m: &BandedMatrix, v0: &[C64], shift: C64) -> Result<(C64, Vec<C64>)> {
    let mut v = v0.to_vec();
    let nv = norm2(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    let mut rho = shift;
    for it in 0..40 {
        if it >= 2 {
            rho = rayleigh(m, &v);
            let av = m.mul_vec(&v);
            let r: Vec<C64> = av.iter().zip(&v).map(|(a, b)| a - rho * b).collect();
            if norm2(&r) <= 1e-14 * (rho.norm() + 1.0) {
                return Ok((rho, v));
            }
        }
        let w = BandLu::new(m, rho).solve(&v);
        let nw = norm2(&w);
        if !nw.is_finite() || nw == 0.0 {
            return Err(Error::NewtonDiverged("inverse iteration produced a degenerate vector".into()));
        }
        v = w.into_iter().map(|z| z / nw).collect();
    }
    let rho = rayleigh(m, &v);
    Ok((rho, v))
}

/// An eigenvalue query: level `k` at coupling `beta`, starting basis size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenQuery {
    pub beta: C64,
    pub k: usize,
    pub basis_size: usize,
}

impl EigenQuery {
    pub fn new(beta: C64, k: usize) -> Self {
        EigenQuery { beta, k, basis_size: 64 }
    }
}

/// Level `k` of the `n`-dimensional truncation, continued from `beta = 0`
/// in steps of at most 0.01.
pub fn eigen_truncated(beta: C64, k: usize, n: usize) -> Result<C64> {
    if k + 8 > n {
        return Err(Error::InvalidArgument(format!("level {k} too high for basis {n}")));
    }
    let mut v = vec![ZERO; n];
    v[k] = C64::new(1.0, 0.0);
    let mut e = C64::new((2 * k + 1) as f64, 0.0);
    let steps = (beta.norm() / 0.01).ceil() as usize;
    let mut prev = ZERO;
    for j in 1..=steps {
        let b = beta * (j as f64 / steps as f64);
        let m = build_matrix(b, n)?;
        // Linear predictor along the path.
        let guess = if j >= 2 { e + (e - prev) } else { e };
        let (en, vn) = refine(&m, &v, guess)?;
        if (en - e).norm() > 0.5 {
            return Err(Error::NewtonDiverged(format!("continuation jumped from {e} to {en} at beta = {b}")));
        }
        prev = e;
        e = en;
        v = vn;
    }
    Ok(e)
}

/// The spectral-route eigenvalue, with basis doubling until two successive
/// sizes agree to `1e-9`.
pub fn eigen_spectral(q: &EigenQuery) -> Result<C64> {
    if q.basis_size < 32 {
        return Err(Error::InvalidArgument(format!("basis size {} below 32", q.basis_size)));
    }
    let mut n = q.basis_size;
    let mut e = eigen_truncated(q.beta, q.k, n)?;
    let mut change = f64::INFINITY;
    while n < MAX_BASIS {
        n *= 2;
        let e2 = eigen_truncated(q.beta, q.k, n)?;
        change = (e2 - e).norm();
        e = e2;
        if change < 1e-9 {
            return Ok(e);
        }
    }
    Err(Error::NotConverged { basis: n, change })
}

/// `|E(N) - E(2N)|` for `N = n0, 2 n0, ...` (`count` entries).
pub fn basis_tail(beta: C64, k: usize, n0: usize, count: usize) -> Result<Vec<f64>> {
    let mut n = n0;
    let mut prev = eigen_truncated(beta, k, n)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        n *= 2;
        let e = eigen_truncated(beta, k, n)?;
        out.push((e - prev).norm());
        prev = e;
    }
    Ok(out)
}

/// `(a2, a3)` for which a zero of `C0` in `E` is an eigenvalue of `H(beta)`:
/// `a2 = -(w^2/3) beta^{-8/5}`, `a3 = w^3 ((2/27) beta^{-12/5} + beta^{-2/5} E)`,
/// with the principal `beta^{-1/5}`.
pub fn stokes_params(beta: C64, e: C64) -> PotentialParams {
    let r = beta.powf(-0.2);
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    PotentialParams { a2: -omega_pow(2) / 3.0 * r8, a3: omega_pow(3) * (2.0 / 27.0 * r8 * r4 + r2 * e) }
}

/// A converged zero of `E -> C0(stokes_params(beta, E))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesRoot {
    pub e: C64,
    /// `|C0|` at the root divided by its local scale.
    pub residual: f64,
    pub iterations: usize,
    pub matching_point: C64,
}

/// `C0` along a line of `E` values at fixed `beta`, reusing one set of
/// integration contours and one Wronskian point.
struct StokesFunction {
    beta: C64,
    planners: RotatedPlanners,
    xm: C64,
    tol: f64,
}

impl StokesFunction {
    fn new(beta: C64, seed: C64, tol: f64) -> Result<Self> {
        let planners = RotatedPlanners::new(&stokes_params(beta, seed), 3, 1.0, 0);
        let first = c0_eval_with(&planners, &StokesOptions { tol, ..Default::default() })?;
        Ok(StokesFunction { beta, planners, xm: first.matching_point, tol })
    }

    fn eval(&self, e: C64) -> Result<(Scaled, Scaled)> {
        let pl = self.planners.with_params(&stokes_params(self.beta, e));
        let ev = c0_at(&pl, self.xm, self.tol)?;
        Ok((ev.c0, ev.scale))
    }
}

/// Secant iteration on `f(E) / (E - deflate)` (or `f(E)` when `deflate` is
/// `None`) from `seed`; fails if it leaves the disc of radius `window`.
fn secant(
    f: &StokesFunction,
    seed: C64,
    window: f64,
    deflate: Option<C64>,
    max_iter: usize,
) -> Result<(C64, f64, usize)> {
    let g = |e: C64| -> Result<(Scaled, Scaled)> {
        let (v, s) = f.eval(e)?;
        Ok(match deflate {
            Some(d) => (v.scale((e - d).inv()), s),
            None => (v, s),
        })
    };
    let mut e0 = seed;
    let mut e1 = seed + C64::new(1e-2, 0.0);
    let (mut f0, _) = g(e0)?;
    let (mut f1, _) = g(e1)?;
    for it in 0..max_iter {
        let denom = f1.sub(f0);
        if denom.is_zero() {
            break;
        }
        let ratio = (f1 / denom).to_complex();
        let step = ratio * (e1 - e0);
        let e2 = e1 - step;
        if !e2.is_finite() || (e2 - seed).norm() > window {
            return Err(Error::NewtonDiverged(format!("secant left the disc |E - {seed}| < {window} (at {e2})")));
        }
        e0 = e1;
        f0 = f1;
        e1 = e2;
        let (fv, sv) = g(e1)?;
        f1 = fv;
        if step.norm() < 1e-13 * e1.norm().max(1.0) {
            let res = if f1.is_zero() { 0.0 } else { (f1.ln_abs() - sv.ln_abs()).exp() };
            return Ok((e1, res, it + 1));
        }
    }
    Err(Error::NewtonDiverged(format!("no convergence after {max_iter} secant steps from {seed}")))
}

/// The Stokes-route eigenvalue: a zero of `C0(a2(beta), a3(beta, E))` found
/// by secant iteration seeded at `2k + 1`.
pub fn eigen_stokes(q: &EigenQuery, tol: f64) -> Result<StokesRoot> {
    eigen_stokes_seeded(q.beta, C64::new((2 * q.k + 1) as f64, 0.0), tol)
}

/// As [`eigen_stokes`] with an explicit seed.
pub fn eigen_stokes_seeded(beta: C64, seed: C64, tol: f64) -> Result<StokesRoot> {
    if beta.norm() == 0.0 {
        return Err(Error::InvalidArgument("beta = 0 has no Stokes-route counterpart".into()));
    }
    let ode_tol = (tol * 1e-2).clamp(1e-14, 1e-8);
    let f = StokesFunction::new(beta, seed, ode_tol)?;
    let (e, residual, iterations) = secant(&f, seed, 0.8, None, 50)?;
    Ok(StokesRoot { e, residual, iterations, matching_point: f.xm })
}

/// `|C0(E)| / |C0(E + shift)|` at fixed `beta`.
pub fn stokes_relative_residual(beta: C64, e: C64, shift: f64, tol: f64) -> Result<f64> {
    let f = StokesFunction::new(beta, e, tol)?;
    let (v, _) = f.eval(e)?;
    let (w, _) = f.eval(e + shift)?;
    Ok((v.ln_abs() - w.ln_abs()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Spectral,
    Stokes,
}

/// A continued eigenvalue branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBranch {
    pub k: usize,
    pub beta_samples: Vec<C64>,
    pub e_samples: Vec<C64>,
    pub method: EigenMethod,
}

/// Distance below which two levels count as colliding.
pub const COLLISION_RADIUS: f64 = 1e-3;

/// Predictor-corrector continuation of level `k` along `beta_path`.
///
/// Each step seeds the corrector with the linear extrapolation of the
/// previous two samples. After each step a deflated search from
/// `E + 2` looks for another level; one closer than [`COLLISION_RADIUS`]
/// aborts the trace.
pub fn trace_branch(k: usize, beta_path: &[C64], method: EigenMethod, tol: f64) -> Result<EigenBranch> {
    let first = *beta_path.first().ok_or_else(|| Error::InvalidArgument("empty beta path".into()))?;
    if first.norm() > 0.05 || first.re <= 0.0 {
        return Err(Error::InvalidArgument(format!("path must start with |beta| <= 0.05 and Re beta > 0, got {first}")));
    }
    for w in beta_path.windows(2) {
        if (w[1] - w[0]).norm() >= 0.02 {
            return Err(Error::InvalidArgument(format!("path step {} -> {} exceeds 0.02", w[0], w[1])));
        }
    }
    let mut es: Vec<C64> = Vec::with_capacity(beta_path.len());
    for (i, &b) in beta_path.iter().enumerate() {
        let e = match method {
            EigenMethod::Spectral => {
                let e = eigen_spectral(&EigenQuery::new(b, k))?;
                for other in [k.wrapping_sub(1), k + 1] {
                    if other == usize::MAX {
                        continue;
                    }
                    let eo = eigen_spectral(&EigenQuery::new(b, other))?;
                    if (eo - e).norm() < COLLISION_RADIUS {
                        return Err(Error::BranchCollision { beta: b, separation: (eo - e).norm() });
                    }
                }
                e
            }
            EigenMethod::Stokes => {
                let seed = match i {
                    0 => eigen_spectral(&EigenQuery::new(b, k))?,
                    1 => es[0],
                    _ => {
                        let (b0, b1) = (beta_path[i - 2], beta_path[i - 1]);
                        let slope = if b1 == b0 { ZERO } else { (es[i - 1] - es[i - 2]) / (b1 - b0) };
                        es[i - 1] + slope * (b - b1)
                    }
                };
                let ode_tol = (tol * 1e-2).clamp(1e-14, 1e-8);
                let f = StokesFunction::new(b, seed, ode_tol)?;
                let (e, _, _) = secant(&f, seed, 0.8, None, 50)?;
                if let Ok((other, _, _)) = secant(&f, e + 2.0, 1.9, Some(e), 12) {
                    if (other - e).norm() < COLLISION_RADIUS {
                        return Err(Error::BranchCollision { beta: b, separation: (other - e).norm() });
                    }
                }
                e
            }
        };
        if let Some(prev) = es.last() {
            if (e - prev).norm() >= 0.5 {
                return Err(Error::NewtonDiverged(format!("branch jumped from {prev} to {e} at beta = {b}")));
            }
        }
        es.push(e);
    }
    Ok(EigenBranch { k, beta_samples: beta_path.to_vec(), e_samples: es, method })
}

/// Second-order perturbation estimate `2k + 1 + (beta^2 / 16)(30k^2 + 30k + 11)`.
pub fn perturbative_estimate(beta: C64, k: usize) -> C64 {
    let kf = k as f64;
    C64::new(2.0 * kf + 1.0, 0.0) + beta * beta / 16.0 * (30.0 * kf * kf + 30.0 * kf + 11.0)
}
