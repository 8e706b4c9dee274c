//! Principal symbol `p = -xi0^2 + 2 x1 xi0 xi2 + xi1^2 + x1^3 xi2^2`, its
//! Hamilton flow, the tangent bicharacteristic
//! `(x1, x2) = (-x0^2/4, x0^5/80)`, `xi = (0, x0^3/8, 1)`, and the Hamilton
//! map on the double characteristic set `Sigma = {x1 = xi0 = xi1 = 0}`.

use nalgebra::{DMatrix, Matrix6};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 3],
    pub xi: [f64; 3],
}

impl PhasePoint {
    pub fn new(x: [f64; 3], xi: [f64; 3]) -> Self {
        PhasePoint { x, xi }
    }

    pub fn from_array(y: [f64; 6]) -> Self {
        PhasePoint { x: [y[0], y[1], y[2]], xi: [y[3], y[4], y[5]] }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x[0], self.x[1], self.x[2], self.xi[0], self.xi[1], self.xi[2]]
    }

    pub fn on_sigma(&self, tol: f64) -> bool {
        self.x[1].abs() <= tol && self.xi[0].abs() <= tol && self.xi[1].abs() <= tol
    }
}

pub fn symbol_p(pt: &PhasePoint) -> f64 {
    let [_, x1, _] = pt.x;
    let [k0, k1, k2] = pt.xi;
    -k0 * k0 + 2.0 * x1 * k0 * k2 + k1 * k1 + x1.powi(3) * k2 * k2
}

/// `(dp/dxi, -dp/dx)`.
pub fn hamilton_rhs(pt: &PhasePoint) -> [f64; 6] {
    let [_, x1, _] = pt.x;
    let [k0, k1, k2] = pt.xi;
    [
        -2.0 * k0 + 2.0 * x1 * k2,
        2.0 * k1,
        2.0 * x1 * k0 + 2.0 * x1.powi(3) * k2,
        0.0,
        -(2.0 * k0 * k2 + 3.0 * x1 * x1 * k2 * k2),
        0.0,
    ]
}

/// Hessian of `p` in the ordering `(x0, x1, x2, xi0, xi1, xi2)`.
pub fn hessian_p(pt: &PhasePoint) -> Matrix6<f64> {
    let [_, x1, _] = pt.x;
    let [k0, _, k2] = pt.xi;
    let mut h = Matrix6::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        h[(i, j)] = v;
        h[(j, i)] = v;
    };
    set(1, 1, 6.0 * x1 * k2 * k2);
    set(1, 3, 2.0 * k2);
    set(1, 5, 2.0 * k0 + 6.0 * x1 * x1 * k2);
    set(3, 3, -2.0);
    set(3, 5, 2.0 * x1);
    set(4, 4, 2.0);
    set(5, 5, 2.0 * x1.powi(3));
    h
}

/// The tangent bicharacteristic at parameter `x0`.
pub fn reference_curve(x0: f64) -> PhasePoint {
    PhasePoint { x: [x0, -x0 * x0 / 4.0, x0.powi(5) / 80.0], xi: [0.0, x0.powi(3) / 8.0, 1.0] }
}

/// `d/dx0` of the reference curve.
pub fn reference_tangent(x0: f64) -> [f64; 6] {
    [1.0, -x0 / 2.0, x0.powi(4) / 16.0, 0.0, 3.0 * x0 * x0 / 8.0, 0.0]
}

const COLUMNS: usize = 8;
const SUBSTEPS: [usize; COLUMNS] = [2, 4, 6, 8, 10, 12, 14, 16];
const MAX_STEPS: usize = 1_000_000;

type Field<'a> = dyn Fn(f64, &[f64; 6]) -> Result<[f64; 6]> + 'a;

fn axpy(y: &[f64; 6], a: f64, d: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| y[i] + a * d[i])
}

fn midpoint(f: &Field, s0: f64, y0: &[f64; 6], h: f64, n: usize) -> Result<[f64; 6]> {
    let hs = h / n as f64;
    let mut zp = *y0;
    let mut z = axpy(y0, hs, &f(s0, y0)?);
    for m in 1..n {
        let zn = axpy(&zp, 2.0 * hs, &f(s0 + hs * m as f64, &z)?);
        zp = z;
        z = zn;
    }
    let d = f(s0 + h, &z)?;
    Ok(std::array::from_fn(|i| 0.5 * (z[i] + zp[i] + hs * d[i])))
}

fn gbs_step(f: &Field, s0: f64, y0: &[f64; 6], h: f64) -> Result<([f64; 6], f64)> {
    let mut table = [[0.0; 6]; COLUMNS];
    let mut prev = [0.0; 6];
    for j in 0..COLUMNS {
        let mut row = [[0.0; 6]; COLUMNS];
        row[0] = midpoint(f, s0, y0, h, SUBSTEPS[j])?;
        for k in 1..=j {
            let r = (SUBSTEPS[j] as f64 / SUBSTEPS[j - k] as f64).powi(2) - 1.0;
            row[k] = std::array::from_fn(|c| row[k - 1][c] + (row[k - 1][c] - table[k - 1][c]) / r);
        }
        if j == COLUMNS - 1 {
            prev = row[j - 1];
        }
        table = row;
    }
    let best = table[COLUMNS - 1];
    let err = best.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((best, err))
}

/// Extrapolated midpoint integration of `y' = f(s, y)` from `s0` to `s1`
/// with mixed absolute/relative tolerance `tol`.
fn integrate(f: &Field, s0: f64, y0: [f64; 6], s1: f64, tol: f64) -> Result<[f64; 6]> {
    let length = (s1 - s0).abs();
    if length == 0.0 {
        return Ok(y0);
    }
    let dir = (s1 - s0).signum();
    let mut y = y0;
    let mut s = 0.0;
    let mut h = length.min(0.1);
    let mut steps = 0;
    while s < length {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::NonConvergence { at: C64::new(s0 + dir * s, 0.0), step: h });
        }
        let last = s + h >= length * (1.0 - 1e-14);
        let hh = if last { length - s } else { h };
        let (y1, err_abs) = match gbs_step(f, s0 + dir * s, &y, dir * hh) {
            Ok(r) => r,
            Err(_) => ([f64::NAN; 6], f64::NAN),
        };
        let scale = y.iter().chain(&y1).fold(1.0f64, |m, v| m.max(v.abs()));
        let err = err_abs / (tol * scale);
        if err.is_finite() && err <= 1.0 {
            y = y1;
            s = if last { length } else { s + hh };
            h = hh * if err == 0.0 { 4.0 } else { (0.9 * err.powf(-1.0 / (2 * COLUMNS - 1) as f64)).clamp(0.2, 4.0) };
        } else {
            h = hh * if err.is_finite() { (0.9 * err.powf(-1.0 / (2 * COLUMNS - 1) as f64)).clamp(0.2, 0.7) } else { 0.2 };
            if h < 1e-13 * length {
                return Err(Error::NonConvergence { at: C64::new(s0 + dir * s, 0.0), step: h });
            }
        }
    }
    Ok(y)
}

/// Sampled integral curve; `param` is flow time or `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub param: Vec<f64>,
    pub points: Vec<PhasePoint>,
}

impl Trajectory {
    pub fn max_abs_p(&self) -> f64 {
        self.points.iter().map(|p| symbol_p(p).abs()).fold(0.0, f64::max)
    }
}

fn sampled(f: &Field, init: &PhasePoint, s0: f64, s1: f64, tol: f64, samples: usize) -> Result<Trajectory> {
    if !(tol > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument("integration needs tol > 0 and at least one sample".into()));
    }
    let mut param = vec![s0];
    let mut points = vec![*init];
    let mut y = init.to_array();
    for j in 1..=samples {
        let a = s0 + (s1 - s0) * (j - 1) as f64 / samples as f64;
        let b = if j == samples { s1 } else { s0 + (s1 - s0) * j as f64 / samples as f64 };
        y = integrate(f, a, y, b, tol)?;
        param.push(b);
        points.push(PhasePoint::from_array(y));
    }
    Ok(Trajectory { param, points })
}

/// Hamilton flow in flow time over `[0, t_end]`.
pub fn integrate_flow(init: &PhasePoint, t_end: f64, tol: f64, samples: usize) -> Result<Trajectory> {
    let f = |_: f64, y: &[f64; 6]| Ok(hamilton_rhs(&PhasePoint::from_array(*y)));
    sampled(&f, init, 0.0, t_end, tol, samples)
}

/// Hamilton flow reparametrized by `x0`, from `init.x[0]` to `x0_end`.
///
/// Fails with `NonConvergence` where `dx0/dt` vanishes, in particular at
/// the stationary points on `Sigma`.
pub fn integrate_bichar(init: &PhasePoint, x0_end: f64, tol: f64, samples: usize) -> Result<Trajectory> {
    let f = |_: f64, y: &[f64; 6]| {
        let v = hamilton_rhs(&PhasePoint::from_array(*y));
        if v[0] == 0.0 || !v[0].is_finite() {
            return Err(Error::NonConvergence { at: C64::new(y[0], 0.0), step: 0.0 });
        }
        Ok(std::array::from_fn(|i| v[i] / v[0]))
    };
    sampled(&f, init, init.x[0], x0_end, tol, samples)
}

/// Smallest `|x0|` the reference check integrates to. The reparametrized
/// flow has a mode growing like `|x0|^-4` towards `Sigma` (its slope like
/// `|x0|^-5`), fed by rounding in `p` of order `1e-16`.
pub const SIGMA_GAP: f64 = 0.1;

/// Comparison of integrated bicharacteristics with the reference curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicharReport {
    pub x0_range: [f64; 2],
    pub gap: f64,
    pub legs: Vec<Trajectory>,
    pub max_deviation: f64,
    pub max_abs_p: f64,
    /// Largest change of `xi0` and `xi2` along the legs.
    pub max_cyclic_drift: f64,
    /// Largest difference between `H_p / (dx0/dt)` on the legs and the
    /// tangent of the reference curve.
    pub max_slope_error: f64,
    /// Transverse components `(dx1, dxi0, dxi1)/dx0` at `x0 = 0`,
    /// extrapolated from each leg.
    pub sigma_transverse: f64,
}

/// Integrates from the endpoints of `x0_range` (started on the reference
/// curve) towards `Sigma`, stopping `gap` short of `x0 = 0` when the range
/// contains it, and measures the deviation from the closed form.
pub fn reference_check(x0_range: [f64; 2], gap: f64, tol: f64, samples: usize) -> Result<BicharReport> {
    let [lo, hi] = x0_range;
    if !(lo < hi) || !(gap > 0.0) {
        return Err(Error::InvalidArgument(format!("bad range [{lo}, {hi}] or gap {gap}")));
    }
    let mut legs_spec = Vec::new();
    if lo < -gap {
        legs_spec.push((lo, hi.min(-gap)));
    }
    if hi > gap {
        legs_spec.push((hi, lo.max(gap)));
    }
    if legs_spec.is_empty() {
        return Err(Error::InvalidArgument(format!("range [{lo}, {hi}] lies inside the gap {gap}")));
    }
    let mut legs = Vec::new();
    for (from, to) in legs_spec {
        let n = ((from - to).abs() / (hi - lo) * samples as f64).ceil().max(4.0) as usize;
        legs.push(integrate_bichar(&reference_curve(from), to, tol, n)?);
    }
    let mut max_deviation = 0.0f64;
    let mut max_abs_p = 0.0f64;
    let mut max_cyclic_drift = 0.0f64;
    let mut max_slope_error = 0.0f64;
    let mut sigma_transverse = 0.0f64;
    for leg in &legs {
        let first = leg.points[0];
        for (s, pt) in leg.param.iter().zip(&leg.points) {
            let r = reference_curve(*s).to_array();
            let y = pt.to_array();
            max_deviation = max_deviation.max(y.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            max_abs_p = max_abs_p.max(symbol_p(pt).abs());
            max_cyclic_drift =
                max_cyclic_drift.max((pt.xi[0] - first.xi[0]).abs()).max((pt.xi[2] - first.xi[2]).abs());
            let v = hamilton_rhs(pt);
            let t = reference_tangent(*s);
            max_slope_error = max_slope_error.max((0..6).map(|i| (v[i] / v[0] - t[i]).abs()).fold(0.0, f64::max));
        }
        // Polynomial extrapolation of the transverse slopes from the samples
        // closest to Sigma.
        let m = leg.points.len();
        let idx: Vec<usize> = (m.saturating_sub(5)..m).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| leg.param[i]).collect();
        for comp in [1, 3, 4] {
            let ys: Vec<f64> = idx
                .iter()
                .map(|&i| {
                    let v = hamilton_rhs(&leg.points[i]);
                    v[comp] / v[0]
                })
                .collect();
            sigma_transverse = sigma_transverse.max(neville_at_zero(&xs, &ys).abs());
        }
    }
    Ok(BicharReport {
        x0_range,
        gap,
        legs,
        max_deviation,
        max_abs_p,
        max_cyclic_drift,
        max_slope_error,
        sigma_transverse,
    })
}

fn neville_at_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (xs[i + k] * p[i] - xs[i] * p[i + 1]) / (xs[i + k] - xs[i]);
        }
    }
    p[0]
}

/// Relative SVD cutoff for numerical ranks.
pub const RANK_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonMapReport {
    pub rho: PhasePoint,
    /// Row-major 6x6.
    pub matrix: Vec<[f64; 6]>,
    pub eigenvalues: Vec<C64>,
    pub trplus: f64,
    pub spectral_type: u8,
    pub iph_bound: f64,
    /// `dim(Ker F^2 ∩ Im F^2)`.
    pub kernel_image_dim: usize,
    /// Frobenius norms of `F^k` for `k = 1..=4`.
    pub power_norms: [f64; 4],
}

/// Linearization of `H_p` at `rho`: `[[p_xi_x, p_xi_xi], [-p_x_x, -p_x_xi]]`.
pub fn hamilton_matrix(rho: &PhasePoint) -> Matrix6<f64> {
    let h = hessian_p(rho);
    let mut f = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            f[(i, j)] = h[(3 + i, j)];
            f[(i, 3 + j)] = h[(3 + i, 3 + j)];
            f[(3 + i, j)] = -h[(i, j)];
            f[(3 + i, 3 + j)] = -h[(i, 3 + j)];
        }
    }
    f
}

fn rank(m: &DMatrix<f64>, cutoff: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|s| **s > cutoff).count()
}

/// `dim(Ker A ∩ Im A) = dim Ker A + dim Im A - dim(Ker A + Im A)`, with
/// bases read off the SVD of `A`.
fn kernel_image_dim(a: &Matrix6<f64>) -> usize {
    let norm = a.norm();
    if norm == 0.0 {
        return 0;
    }
    let cutoff = RANK_CUTOFF * norm;
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut image = Vec::new();
    let mut kernel = Vec::new();
    for i in 0..6 {
        if svd.singular_values[i] > cutoff {
            image.push(u.column(i).into_owned());
        } else {
            kernel.push(vt.row(i).transpose());
        }
    }
    let both: Vec<_> = kernel.iter().chain(&image).cloned().collect();
    let sum = DMatrix::from_fn(6, both.len(), |r, c| both[c][r]);
    kernel.len() + image.len() - rank(&sum, RANK_CUTOFF)
}

/// `F_p` at a point of `Sigma` with its spectrum, `Tr+ = sum |mu_j|`, the
/// spectral type and the bound `Tr+ / 2` on the subprincipal symbol.
pub fn hamilton_map(rho: &PhasePoint) -> Result<HamiltonMapReport> {
    if !rho.on_sigma(1e-12) {
        return Err(Error::NotOnSigma(rho.x[1].abs().max(rho.xi[0].abs()).max(rho.xi[1].abs())));
    }
    let f = hamilton_matrix(rho);
    let eigenvalues: Vec<C64> = f.complex_eigenvalues().iter().copied().collect();
    let trplus = eigenvalues.iter().map(|m| m.norm()).sum::<f64>();
    let f2 = f * f;
    let kernel_image_dim = kernel_image_dim(&f2);
    let mut power_norms = [0.0; 4];
    let mut pw = Matrix6::<f64>::identity();
    for norm in power_norms.iter_mut() {
        pw *= f;
        *norm = pw.norm();
    }
    Ok(HamiltonMapReport {
        rho: *rho,
        matrix: (0..6).map(|i| std::array::from_fn(|j| f[(i, j)])).collect(),
        eigenvalues,
        trplus,
        spectral_type: if kernel_image_dim > 0 { 2 } else { 1 },
        iph_bound: trplus / 2.0,
        kernel_image_dim,
        power_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rho() -> PhasePoint {
        PhasePoint::new([0.0; 3], [0.0, 0.0, 1.0])
    }

    #[test]
    fn symbol_values() {
        assert_eq!(symbol_p(&PhasePoint::new([0.3, 0.0, -1.0], [0.0, 0.0, 2.5])), 0.0);
        assert_eq!(symbol_p(&PhasePoint::new([0.0, 1.0, 0.0], [1.0, 0.0, 0.0])), -1.0);
        for x0 in [-1.0, -0.3, 0.7, 1.0] {
            assert!(symbol_p(&reference_curve(x0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d = 1e-5;
        for _ in 0..20 {
            let y: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let v = hamilton_rhs(&PhasePoint::from_array(y));
            for i in 0..6 {
                let mut yp = y;
                let mut ym = y;
                yp[i] += d;
                ym[i] -= d;
                let g = (symbol_p(&PhasePoint::from_array(yp)) - symbol_p(&PhasePoint::from_array(ym))) / (2.0 * d);
                // H_p = (p_xi, -p_x).
                let expected = if i < 3 { -v[3 + i] } else { v[i - 3] };
                assert!((g - expected).abs() < 1e-8, "component {i}: {g} vs {expected}");
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let d = 1e-4;
        for _ in 0..5 {
            let y: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let h = hessian_p(&PhasePoint::from_array(y));
            for i in 0..6 {
                for j in 0..6 {
                    let at = |a: f64, b: f64| {
                        let mut z = y;
                        z[i] += a;
                        z[j] += b;
                        symbol_p(&PhasePoint::from_array(z))
                    };
                    let fd = (at(d, d) - at(d, -d) - at(-d, d) + at(-d, -d)) / (4.0 * d * d);
                    assert!((fd - h[(i, j)]).abs() < 1e-6, "({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn stationary_on_sigma() {
        for x in [[0.2, 0.0, -0.4], [-1.0, 0.0, 3.0]] {
            for k2 in [0.5, 1.0, -2.0] {
                assert!(hamilton_rhs(&PhasePoint::new(x, [0.0, 0.0, k2])).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn flow_is_tangent_to_the_curve() {
        let v = hamilton_rhs(&reference_curve(1.0));
        let t = reference_tangent(1.0);
        for i in 0..6 {
            assert!((v[i] / v[0] - t[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_curve_is_reproduced() {
        let r = reference_check([-1.0, 1.0], SIGMA_GAP, 1e-13, 40).unwrap();
        assert_eq!(r.legs.len(), 2);
        assert!(r.max_deviation < 1e-8, "{}", r.max_deviation);
        assert!(r.max_abs_p < 1e-12, "{}", r.max_abs_p);
        assert!(r.max_cyclic_drift < 1e-12);
        assert!(r.max_slope_error < 1e-8, "{}", r.max_slope_error);
        assert!(r.sigma_transverse < 1e-8, "{}", r.sigma_transverse);
    }

    #[test]
    fn crossing_sigma_is_refused() {
        assert!(matches!(integrate_bichar(&reference_curve(-1.0), 1.0, 1e-12, 40), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn flow_time_matches_closed_form() {
        // Along the curve dx0/dt = -x0^2/2, so x0(t) = 2 / (t + 2 / x0(0)).
        let tr = integrate_flow(&reference_curve(1.0), 3.0, 1e-13, 6).unwrap();
        for (t, pt) in tr.param.iter().zip(&tr.points) {
            let x0 = 2.0 / (t + 2.0);
            let r = reference_curve(x0).to_array();
            assert!(pt.to_array().iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn hamilton_map_is_nilpotent_of_type_two() {
        let r = hamilton_map(&rho()).unwrap();
        assert!(r.eigenvalues.iter().all(|m| m.norm() < 1e-8));
        assert!(r.power_norms[3] < 1e-10 && r.power_norms[2] > 0.0);
        assert_eq!(r.trplus, 0.0);
        assert_eq!(r.iph_bound, 0.0);
        assert_eq!(r.spectral_type, 2);
        assert_eq!(r.kernel_image_dim, 2);
    }

    #[test]
    fn jordan_chain() {
        // xi0 -> xi1 -> x1 -> x0 up to the xi0 leak into x0.
        let f = hamilton_matrix(&rho());
        let e = |i: usize| nalgebra::Vector6::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
        assert_eq!(f * e(3), -2.0 * e(0) - 2.0 * e(4));
        assert_eq!(f * e(4), 2.0 * e(1));
        assert_eq!(f * e(1), 2.0 * e(0));
        assert_eq!(f * e(0), nalgebra::Vector6::zeros());
    }

    #[test]
    fn off_sigma_is_rejected() {
        assert!(matches!(hamilton_map(&PhasePoint::new([0.0, 0.1, 0.0], [0.0, 0.0, 1.0])), Err(Error::NotOnSigma(_))));
    }

    #[test]
    fn eigenvalues_close_under_conjugation() {
        let r = hamilton_map(&PhasePoint::new([0.5, 0.0, -0.2], [0.0, 0.0, 3.0])).unwrap();
        for m in &r.eigenvalues {
            assert!(r.eigenvalues.iter().any(|n| (n - m.conj()).norm() < 1e-12));
        }
    }

    proptest! {
        #[test]
        fn type_is_conic_invariant(scale in prop::sample::select(vec![0.5, 2.0, 10.0]), x0 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
            let r = hamilton_map(&PhasePoint::new([x0, 0.0, x2], [0.0, 0.0, scale])).unwrap();
            prop_assert_eq!(r.spectral_type, 2);
        }

        #[test]
        fn flow_conserves_p(y in prop::array::uniform6(-0.5f64..0.5)) {
            let init = PhasePoint::from_array(y);
            let p0 = symbol_p(&init);
            let tr = integrate_flow(&init, 0.5, 1e-13, 4).unwrap();
            let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs())).powi(2);
            prop_assert!(tr.points.iter().all(|pt| (symbol_p(pt) - p0).abs() < 1e-10 * scale));
        }
    }
}
