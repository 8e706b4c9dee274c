//! The subdominant solution `Y0(x; a)` of `u'' = (x^3 + a2 x + a3) u`, its
//! rotations `Yk`, and the Stokes multiplier `C0(a)`.
//!
//! `Y0` is seeded from its asymptotic expansion on a circle of radius `R` and
//! carried inward by [`crate::ode::propagate`] along a planned polyline. The
//! planner scores each candidate contour by how much it amplifies the
//! dominant solution relative to `Y0`, using the WKB phase `2 Re int sqrt(q)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ode::{omega_pow, propagate, wronskian_scaled, PotentialParams, WaveState};
use crate::scaled::Scaled;

type C64 = Complex64;

/// Coefficients `B_1..B_N` of `x^{-3/4} (1 + sum B_n x^{-n/2}) exp(-E(x, a))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSeries {
    pub order: usize,
    pub coeffs: Vec<C64>,
}

impl AsymptoticSeries {
    /// `B_n`, with `B_0 = 1`.
    pub fn b(&self, n: usize) -> C64 {
        if n == 0 {
            C64::new(1.0, 0.0)
        } else {
            self.coeffs[n - 1]
        }
    }

    /// `1 + sum_{n<=N} B_n x^{-n/2}`.
    pub fn sum(&self, x: C64) -> C64 {
        let t = x.sqrt().inv();
        let mut acc = C64::new(0.0, 0.0);
        for b in self.coeffs.iter().rev() {
            acc = (acc + b) * t;
        }
        acc + 1.0
    }

    /// `u` and `u'` of the truncated representation, derivative taken term by term.
    pub fn eval(&self, x: C64, a: &PotentialParams) -> WaveState {
        let s = x.sqrt();
        let e = 0.4 * x * x * s + a.a2 * s;
        let de = x * s + 0.5 * a.a2 / s;
        let t = s.inv();
        let mut sum = C64::new(1.0, 0.0);
        let mut dsum = C64::new(0.0, 0.0);
        let mut tn = C64::new(1.0, 0.0);
        for (i, b) in self.coeffs.iter().enumerate() {
            let n = (i + 1) as f64;
            tn *= t;
            sum += b * tn;
            dsum += -0.5 * n * b * tn / x;
        }
        let log_pref = -0.75 * x.ln() - e;
        let base = Scaled::exp(log_pref);
        let u = base.scale(sum);
        let du = base.scale(dsum + sum * (-0.75 / x - de));
        let top = u.log_scale.max(du.log_scale);
        WaveState {
            x,
            u: u.mant * (u.log_scale - top).exp(),
            du: du.mant * (du.log_scale - top).exp(),
            log_scale: top,
        }
    }
}

/// `B_1..B_N` from substituting the ansatz into the equation and matching
/// powers of `x^{-1/2}`.
pub fn series_coeffs(a: &PotentialParams, n: usize) -> Result<AsymptoticSeries> {
    if !(1..=40).contains(&n) {
        return Err(Error::InvalidArgument(format!("series order {n} outside 1..=40")));
    }
    let mut b = vec![C64::new(0.0, 0.0); n + 1];
    b[0] = C64::new(1.0, 0.0);
    let at = |b: &[C64], i: isize| if i < 0 { C64::new(0.0, 0.0) } else { b[i as usize] };
    for m in 1..=n {
        let mi = m as isize;
        let alpha = -0.75 - 0.5 * (mi - 5) as f64;
        let val = a.a3 * at(&b, mi - 1) - 0.25 * a.a2 * a.a2 * at(&b, mi - 3) - a.a2 * (0.5 * (mi - 2) as f64) * at(&b, mi - 4)
            - alpha * (alpha - 1.0) * at(&b, mi - 5);
        b[m] = val / m as f64;
    }
    Ok(AsymptoticSeries { order: n, coeffs: b[1..].to_vec() })
}

/// Coefficients `e_0..e_kmax` of the logarithmic derivative
/// `u'/u = sum e_k x^{(3-k)/2}` of `Y0`.
pub fn riccati_coeffs(a: &PotentialParams, k_max: usize) -> Vec<C64> {
    let zero = C64::new(0.0, 0.0);
    let q = |k: usize| match k {
        0 => C64::new(1.0, 0.0),
        4 => a.a2,
        6 => a.a3,
        _ => zero,
    };
    let mut e = vec![zero; k_max + 1];
    e[0] = C64::new(-1.0, 0.0);
    for k in 1..=k_max {
        let mut conv = zero;
        for i in 1..k {
            conv += e[i] * e[k - i];
        }
        let shift = if k >= 5 { 0.5 * (8.0 - k as f64) * e[k - 5] } else { zero };
        e[k] = -(q(k) - conv - shift) / 2.0;
    }
    e
}

/// The asymptotic expansion of `log Y0` truncated after `x^{-N/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSeries {
    pub a: PotentialParams,
    pub order: usize,
    /// `e_0..e_{N+5}`.
    pub e: Vec<C64>,
    /// `c_1..c_N` stored at indices `1..=N`.
    pub c: Vec<C64>,
}

impl LogSeries {
    pub fn new(a: &PotentialParams, order: usize) -> Self {
        let e = riccati_coeffs(a, order + 5);
        let mut c = vec![C64::new(0.0, 0.0); order + 1];
        for n in 1..=order {
            c[n] = -2.0 * e[n + 5] / n as f64;
        }
        LogSeries { a: *a, order, e, c }
    }

    /// Smallest radius at which each of the last five retained terms is
    /// below `eps`.
    pub fn validity_radius(&self, eps: f64) -> f64 {
        let lo = self.order.saturating_sub(4).max(1);
        let mut r: f64 = 0.0;
        for n in lo..=self.order {
            let m = self.c[n].norm();
            if m > 0.0 {
                r = r.max(((m.ln() - eps.ln()) * 2.0 / n as f64).exp());
            }
        }
        r
    }

    /// `log Y0(x)` on the principal branch.
    pub fn log_u(&self, x: C64) -> C64 {
        let s = x.sqrt();
        let t = s.inv();
        let mut acc = C64::new(0.0, 0.0);
        for n in (1..=self.order).rev() {
            acc = (acc + self.c[n]) * t;
        }
        -0.4 * x * x * s - self.a.a2 * s - 0.75 * x.ln() + acc
    }

    /// `Y0'(x) / Y0(x)`.
    pub fn log_derivative(&self, x: C64) -> C64 {
        let s = x.sqrt();
        let t = s.inv();
        let mut acc = C64::new(0.0, 0.0);
        for k in (0..self.e.len()).rev() {
            acc = acc * t + self.e[k];
        }
        acc * x * s
    }

    pub fn state(&self, x: C64) -> WaveState {
        let lu = self.log_u(x);
        let u = C64::from_polar(1.0, lu.im);
        WaveState { x, u, du: u * self.log_derivative(x), log_scale: lu.re }.normalized()
    }
}

/// `Y0` and `Y0'` from the truncated expansion at `x`.
pub fn eval_y0_asymptotic(x: C64, a: &PotentialParams, n: usize) -> Result<WaveState> {
    if !(x.arg().abs() < 0.6 * PI) || x.norm() == 0.0 {
        return Err(Error::OutsideSector { x });
    }
    let series = LogSeries::new(a, n);
    let required = series.validity_radius(1e-16);
    if x.norm() < required {
        return Err(Error::RadiusTooSmall { radius: x.norm(), required });
    }
    Ok(series.state(x))
}

/// An upper bound for the moduli of the zeros of `x^3 + a2 x + a3`.
pub fn turning_radius(a: &PotentialParams) -> f64 {
    2.0 * a.a2.norm().sqrt().max((0.5 * a.a3.norm()).cbrt())
}

/// Radius and truncation order for seeding `Y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedChoice {
    pub radius: f64,
    pub order: usize,
}

/// The smallest admissible radius over truncation orders `20..=80`: at
/// least 6, at least 1.5 times the turning radius, and large enough that the
/// last retained terms are below `1e-16`.
pub fn matching_radius(a: &PotentialParams) -> SeedChoice {
    let floor = 6.0_f64.max(1.5 * turning_radius(a));
    let full = LogSeries::new(a, 80);
    let mut best = SeedChoice { radius: f64::INFINITY, order: 20 };
    for order in (20..=80).step_by(2) {
        let series = LogSeries { a: *a, order, e: full.e[..order + 6].to_vec(), c: full.c[..=order].to_vec() };
        let r = series.validity_radius(1e-16).max(floor);
        if r < best.radius * (1.0 - 1e-12) {
            best = SeedChoice { radius: r, order };
        }
    }
    best
}

/// Statistics of the WKB growth exponent `G = 2 Re int sqrt(q) dx` along a
/// straight leg, relative to its value at the start of the leg.
#[derive(Debug, Clone, Copy)]
struct Leg {
    end: f64,
    min: f64,
    max: f64,
    up: f64,
    down: f64,
    phase: f64,
    end_root: C64,
}

impl Leg {
    fn flipped(self) -> Leg {
        Leg { end: -self.end, min: -self.max, max: -self.min, up: self.down, down: self.up, phase: self.phase, end_root: -self.end_root }
    }
}

const LEG_SAMPLES: usize = 64;

fn leg_stats(a: &PotentialParams, from: C64, to: C64, root0: C64) -> Leg {
    let dx = (to - from) / LEG_SAMPLES as f64;
    let mut r = root0;
    let mut g = 0.0;
    let (mut min, mut max, mut up, mut down, mut phase) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0);
    let (mut lo, mut hi) = (0.0_f64, 0.0_f64);
    for i in 1..=LEG_SAMPLES {
        let x = from + dx * i as f64;
        let mut rn = a.q(x).sqrt();
        if (rn - r).norm() > (rn + r).norm() {
            rn = -rn;
        }
        let inc = 0.5 * (r + rn) * dx;
        g += 2.0 * inc.re;
        phase += inc.norm();
        r = rn;
        up = up.max(g - lo);
        down = down.max(hi - g);
        lo = lo.min(g);
        hi = hi.max(g);
        min = min.min(g);
        max = max.max(g);
    }
    Leg { end: g, min, max, up, down, phase, end_root: r }
}

/// Largest rise of `G` along the concatenation of two legs.
fn joined(l1: &Leg, l2: &Leg) -> (f64, f64) {
    let up = l1.up.max(l2.up).max(l1.end - l1.min + l2.max);
    (up, l1.phase + l2.phase)
}

/// The branch of `sqrt(q)` that behaves like `x^{3/2}` near the seed.
fn seed_root(a: &PotentialParams, x: C64) -> C64 {
    let r = a.q(x).sqrt();
    let reference = x * x.sqrt();
    if (r - reference).norm() <= (r + reference).norm() {
        r
    } else {
        -r
    }
}

/// A planned contour for `Y0`: seed point, then straight legs through
/// `waypoints` ending at the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Y0Path {
    pub seed: C64,
    pub waypoints: Vec<C64>,
    /// Largest WKB growth of the dominant solution relative to `Y0` along the path.
    pub cost: f64,
    pub phase: f64,
    /// WKB estimate of `ln |Y0|` at the target.
    pub log_magnitude: f64,
}

const SEED_ANGLES: usize = 25;
const MAX_SEED_ANGLE: f64 = 0.5 * PI;
const WAYPOINT_RADII: [f64; 3] = [0.25, 0.5, 0.75];
const WAYPOINT_ANGLES: usize = 16;

/// Path planner for `Y0` at fixed `a` and seed radius.
#[derive(Debug, Clone)]
pub struct Planner {
    pub a: PotentialParams,
    pub seed: SeedChoice,
    series: LogSeries,
    seeds: Vec<C64>,
    waypoints: Vec<C64>,
    /// `legs[i][j]`: seed `i` to waypoint `j`.
    legs: Vec<Vec<Leg>>,
}

impl Planner {
    pub fn new(a: &PotentialParams) -> Self {
        Planner::with_seed(a, matching_radius(a))
    }

    pub fn with_seed(a: &PotentialParams, seed: SeedChoice) -> Self {
        let series = LogSeries::new(a, seed.order);
        let r = seed.radius;
        let seeds: Vec<C64> = (0..SEED_ANGLES)
            .map(|j| -MAX_SEED_ANGLE + 2.0 * MAX_SEED_ANGLE * j as f64 / (SEED_ANGLES - 1) as f64)
            .map(|th| C64::from_polar(r, th))
            .filter(|&x| seed_is_clean(&series, x))
            .collect();
        let mut waypoints = Vec::new();
        for f in WAYPOINT_RADII {
            for m in 0..WAYPOINT_ANGLES {
                waypoints.push(C64::from_polar(f * r, 2.0 * PI * m as f64 / WAYPOINT_ANGLES as f64));
            }
        }
        let legs = seeds
            .par_iter()
            .map(|&s| {
                let r0 = seed_root(a, s);
                waypoints.iter().map(|&w| leg_stats(a, s, w, r0)).collect()
            })
            .collect();
        Planner { a: *a, seed, series, seeds, waypoints, legs }
    }

    /// The same contours for nearby parameters `a`; only the seed series is
    /// rebuilt.
    pub fn with_params(&self, a: &PotentialParams) -> Planner {
        Planner { a: *a, series: LogSeries::new(a, self.seed.order), ..self.clone() }
    }

    /// The cheapest contour to `target`; ties in cost (within one unit of
    /// `G`) are broken by the shorter phase length.
    pub fn plan(&self, target: C64) -> Y0Path {
        // (cost, phase, seed, waypoint, total G)
        let mut cands: Vec<(f64, f64, usize, Option<usize>, f64)> = Vec::new();
        for (i, &s) in self.seeds.iter().enumerate() {
            let l = leg_stats(&self.a, s, target, seed_root(&self.a, s));
            cands.push((l.up, l.phase, i, None, l.end));
        }
        for (j, &w) in self.waypoints.iter().enumerate() {
            let ref_root = self.a.q(w).sqrt();
            let l2 = leg_stats(&self.a, w, target, ref_root);
            let l2f = l2.flipped();
            for i in 0..self.seeds.len() {
                let l1 = &self.legs[i][j];
                let second = if (l1.end_root - ref_root).norm() <= (l1.end_root + ref_root).norm() { &l2 } else { &l2f };
                let (up, phase) = joined(l1, second);
                cands.push((up, phase, i, Some(j), l1.end + second.end));
            }
        }
        let best_cost = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let chosen = cands
            .iter()
            .filter(|c| c.0 <= best_cost + 1.0)
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.2.cmp(&y.2)))
            .copied()
            .expect("planner has at least one seed");
        let mut waypoints = Vec::new();
        if let Some(j) = chosen.3 {
            waypoints.push(self.waypoints[j]);
        }
        waypoints.push(target);
        let seed = self.seeds[chosen.2];
        Y0Path {
            seed,
            waypoints,
            cost: chosen.0,
            phase: chosen.1,
            log_magnitude: self.series.log_u(seed).re - 0.5 * chosen.4,
        }
    }

    /// `Y0` at `target` along the planned contour.
    pub fn eval(&self, target: C64, tol: f64) -> Result<WaveState> {
        let path = self.plan(target);
        self.eval_along(&path, tol)
    }

    pub fn eval_along(&self, path: &Y0Path, tol: f64) -> Result<WaveState> {
        let mut s = self.series.state(path.seed);
        for &w in &path.waypoints {
            s = propagate(&self.a, &s, w, tol)?;
        }
        Ok(s)
    }
}

/// Rejects seeds where the exponentially small companion switched on across
/// the Stokes line would exceed the truncation accuracy.
fn seed_is_clean(series: &LogSeries, x: C64) -> bool {
    if x.arg().abs() <= 0.3 * PI {
        return true;
    }
    let growth = series.log_u(x).re;
    2.0 * growth > 41.0
}

/// `Y_k(x; a) = Y0(w^{-k} x; w^{-2k} a2, w^{-3k} a3)` with derivative
/// factor `w^{-k}`.
pub fn eval_yk(x: C64, a: &PotentialParams, k: i32, tol: f64) -> Result<WaveState> {
    let planner = Planner::new(&a.rotated(k));
    eval_yk_with(&planner, x, k, tol)
}

/// As [`eval_yk`], with a planner already built for the rotated parameters.
pub fn eval_yk_with(planner: &Planner, x: C64, k: i32, tol: f64) -> Result<WaveState> {
    let rot = omega_pow(-k);
    let s = planner.eval(rot * x, tol)?;
    Ok(WaveState { x, u: s.u, du: s.du * rot, log_scale: s.log_scale })
}

/// `Y0` itself, planned.
pub fn eval_y0(x: C64, a: &PotentialParams, tol: f64) -> Result<WaveState> {
    eval_yk(x, a, 0, tol)
}

/// Planners for `Y0`, `Y1`, `Y2` (and optionally more rotations) of one `a`.
#[derive(Debug, Clone)]
pub struct RotatedPlanners {
    pub a: PotentialParams,
    pub planners: Vec<Planner>,
}

impl RotatedPlanners {
    pub fn new(a: &PotentialParams, count: usize, radius_factor: f64, extra_terms: usize) -> Self {
        let planners = (0..count as i32)
            .map(|k| {
                let ak = a.rotated(k);
                let mut seed = matching_radius(&ak);
                seed.radius *= radius_factor;
                seed.order += extra_terms;
                Planner::with_seed(&ak, seed)
            })
            .collect();
        RotatedPlanners { a: *a, planners }
    }

    /// Reuses the contours for nearby parameters.
    pub fn with_params(&self, a: &PotentialParams) -> RotatedPlanners {
        let planners = self.planners.iter().enumerate().map(|(k, p)| p.with_params(&a.rotated(k as i32))).collect();
        RotatedPlanners { a: *a, planners }
    }

    pub fn eval(&self, x: C64, k: usize, tol: f64) -> Result<WaveState> {
        eval_yk_with(&self.planners[k], x, k as i32, tol)
    }

    pub fn plan(&self, x: C64, k: usize) -> Y0Path {
        self.planners[k].plan(omega_pow(-(k as i32)) * x)
    }
}

/// Settings for one evaluation of the Stokes multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesOptions {
    pub tol: f64,
    pub radius_factor: f64,
    pub extra_terms: usize,
    /// Fixed Wronskian point; chosen by the planner when `None`.
    pub matching_point: Option<C64>,
}

impl Default for StokesOptions {
    fn default() -> Self {
        StokesOptions { tol: 1e-12, radius_factor: 1.0, extra_terms: 0, matching_point: None }
    }
}

/// A single Wronskian-ratio evaluation of `C0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Eval {
    pub c0: Scaled,
    /// `(|Y0 Y2'| + |Y0' Y2|) / |W[Y1, Y2]|`: the size `C0` would have
    /// without cancellation in `W[Y0, Y2]`.
    pub scale: Scaled,
    /// `ln((|Y1 Y2'| + |Y1' Y2|) / |W[Y1, Y2]|)`: digits lost forming the
    /// denominator.
    pub denominator_loss: f64,
    pub matching_point: C64,
    pub radius: f64,
    pub order: usize,
    pub path_cost: f64,
}

/// Candidate Wronskian points: the origin and four rings around it.
fn matching_candidates(a: &PotentialParams) -> Vec<C64> {
    let rho = (0.75 * turning_radius(a)).max(1.0);
    let mut pts = vec![C64::new(0.0, 0.0)];
    for f in [0.25, 0.5, 0.75, 1.0] {
        for m in 0..12 {
            pts.push(C64::from_polar(f * rho, 2.0 * PI * m as f64 / 12.0));
        }
    }
    pts
}

/// `C0` from Wronskians taken at the fixed point `xm`.
pub fn c0_at(pl: &RotatedPlanners, xm: C64, tol: f64) -> Result<C0Eval> {
    let y0 = pl.eval(xm, 0, tol)?;
    let y1 = pl.eval(xm, 1, tol)?;
    let y2 = pl.eval(xm, 2, tol)?;
    let w02 = wronskian_scaled(&y0, &y2)?;
    let w12 = wronskian_scaled(&y1, &y2)?;
    let mag = Scaled::new(C64::new((y0.u * y2.du).norm() + (y0.du * y2.u).norm(), 0.0), y0.log_scale + y2.log_scale);
    let mag12 = Scaled::new(C64::new((y1.u * y2.du).norm() + (y1.du * y2.u).norm(), 0.0), y1.log_scale + y2.log_scale);
    if w12.is_zero() || w12.ln_abs() - mag12.ln_abs() < (1e-13_f64).ln() {
        return Err(Error::DegenerateWronskian((w12.ln_abs() - mag12.ln_abs()).exp()));
    }
    let cost = (0..3).map(|k| pl.plan(xm, k).cost).fold(0.0, f64::max);
    Ok(C0Eval {
        c0: w02 / w12,
        scale: mag / w12,
        denominator_loss: mag12.ln_abs() - w12.ln_abs(),
        matching_point: xm,
        radius: pl.planners[0].seed.radius,
        order: pl.planners[0].seed.order,
        path_cost: cost,
    })
}

/// WKB estimates of the log error of `C0` from Wronskians at `x`.
///
/// The first is path amplification plus `ln |Y0 Y2|` (the constant
/// `W[Y1, Y2]` is `O(1)`), with a penalty where `W[Y1, Y2]` itself would
/// cancel badly. The second also charges the cancellation `ln |Y1 Y2|` of
/// the denominator in full, which dominates when `|C0|` is of order one.
fn matching_scores(pl: &RotatedPlanners, x: C64) -> (f64, f64) {
    let p: Vec<Y0Path> = (0..3).map(|k| pl.plan(x, k)).collect();
    let cost = p.iter().map(|q| q.cost).fold(0.0, f64::max);
    let w02 = p[0].log_magnitude + p[2].log_magnitude;
    let w12 = p[1].log_magnitude + p[2].log_magnitude;
    let penalty = 10.0 * (w12 - 15.0).max(0.0);
    (cost + w02 + penalty, cost + w02.max(w12) + penalty)
}

/// `C0 = W[Y0, Y2] / W[Y1, Y2]` with the given options.
pub fn c0_eval(a: &PotentialParams, opts: &StokesOptions) -> Result<C0Eval> {
    let pl = RotatedPlanners::new(a, 3, opts.radius_factor, opts.extra_terms);
    c0_eval_with(&pl, opts)
}

pub fn c0_eval_with(pl: &RotatedPlanners, opts: &StokesOptions) -> Result<C0Eval> {
    if let Some(xm) = opts.matching_point {
        return c0_at(pl, xm, opts.tol);
    }
    let scored: Vec<((f64, f64), C64)> =
        matching_candidates(&pl.a).into_par_iter().map(|x| (matching_scores(pl, x), x)).collect();
    let mut by_first: Vec<(f64, C64)> = scored.iter().map(|&(s, x)| (s.0, x)).collect();
    let mut by_second: Vec<(f64, C64)> = scored.iter().map(|&(s, x)| (s.1, x)).collect();
    by_first.sort_by(|p, q| p.0.total_cmp(&q.0));
    by_second.sort_by(|p, q| p.0.total_cmp(&q.0));
    // Local pattern search around the best candidate.
    let rho = (0.75 * turning_radius(&pl.a)).max(1.0);
    let (mut f0, mut x0) = by_first[0];
    let mut step = rho / 8.0;
    while step > rho / 64.0 {
        let moves: Vec<(f64, C64)> = (0..8)
            .into_par_iter()
            .map(|m| {
                let x = x0 + C64::from_polar(step, PI * m as f64 / 4.0);
                (matching_scores(pl, x).0, x)
            })
            .collect();
        let best = moves.iter().copied().min_by(|p, q| p.0.total_cmp(&q.0)).expect("eight moves");
        if best.0 < f0 - 1e-3 {
            (f0, x0) = best;
        } else {
            step /= 2.0;
        }
    }
    let mut trial = vec![x0];
    for &(_, x) in by_first.iter().take(3).chain(by_second.iter().take(3)) {
        if !trial.contains(&x) {
            trial.push(x);
        }
    }
    let mut best: Option<(f64, C0Eval)> = None;
    let mut last_err = None;
    for &x in &trial {
        match c0_at(pl, x, opts.tol) {
            Ok(ev) => {
                let score = ev.path_cost + ev.scale.ln_abs().max(ev.denominator_loss + ev.c0.ln_abs());
                if best.as_ref().is_none_or(|b| score < b.0) {
                    best = Some((score, ev));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, ev)) => Ok(ev),
        None => Err(last_err.unwrap_or(Error::InvalidContour)),
    }
}

/// The Stokes multiplier with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StokesData {
    pub a: PotentialParams,
    pub c0: C64,
    pub c0_scaled: Scaled,
    pub matching_radius: f64,
    pub truncation: usize,
    pub matching_point: C64,
    /// `|C0 - C0'| / max(|C0|, scale)` where `C0'` is recomputed with the
    /// radius scaled by 1.25 and two more series terms.
    pub error_estimate: f64,
    pub scale: Scaled,
}

/// `C0(a)` with tolerance `tol`.
pub fn stokes_c0(a: &PotentialParams, tol: f64) -> Result<StokesData> {
    if !(tol >= 1e-12) {
        return Err(Error::InvalidArgument(format!("tolerance {tol:e} below 1e-12")));
    }
    let ode_tol = (tol * 1e-2).max(1e-14);
    let base = c0_eval(a, &StokesOptions { tol: ode_tol, ..Default::default() })?;
    let check = c0_eval(
        a,
        &StokesOptions { tol: ode_tol, radius_factor: 1.25, extra_terms: 2, matching_point: Some(base.matching_point) },
    )?;
    let diff = base.c0.sub(check.c0);
    let denom = if base.c0.ln_abs() > base.scale.ln_abs() { base.c0 } else { base.scale };
    let err = if diff.is_zero() { 0.0 } else { (diff.ln_abs() - denom.ln_abs()).exp() };
    Ok(StokesData {
        a: *a,
        c0: base.c0.to_complex(),
        c0_scaled: base.c0,
        matching_radius: base.radius,
        truncation: base.order,
        matching_point: base.matching_point,
        error_estimate: err,
        scale: base.scale,
    })
}

/// `|Y0 - C0 Y1 + w Y2| / max |Yi|` at `x`, combining value and derivative
/// in the energy norm.
pub fn connection_residual(pl: &RotatedPlanners, x: C64, c0: Scaled, tol: f64) -> Result<f64> {
    let y0 = pl.eval(x, 0, tol)?;
    let y1 = pl.eval(x, 1, tol)?;
    let y2 = pl.eval(x, 2, tol)?;
    let top = y0.log_scale.max(y1.log_scale + c0.log_scale).max(y2.log_scale);
    let a0 = y0.with_scale(top);
    let a1 = WaveState { log_scale: y1.log_scale + c0.log_scale, u: y1.u * c0.mant, du: y1.du * c0.mant, ..y1 }.with_scale(top);
    let a2 = y2.with_scale(top);
    let w = omega_pow(1);
    let ru = a0.u - a1.u + w * a2.u;
    let rd = a0.du - a1.du + w * a2.du;
    let wt = pl.a.q(x).norm().sqrt().max(1.0);
    let n = |s: &WaveState| wt * s.u.norm() + s.du.norm();
    let denom = n(&a0).max(n(&a1)).max(n(&a2));
    Ok((wt * ru.norm() + rd.norm()) / denom)
}
