//! Third-moment machinery: the exact Gaussian reduction of the chain
//! integrand, the lower-bound series `I3` and upper-bound series `I3_tilde`,
//! the pointwise third-moment kernel `K3`, and the strict-gap verdict.
//!
//! The centered third moment of the heat flow is a series over ordered time
//! chains `0 < a_1 < b_1 < ... < a_m < b_m < t` whose spatial part is a
//! convolution of `3m` planar heat kernels.  That convolution collapses, by
//! repeated use of the two-Gaussian product identity, to a product of a
//! single pair kernel, a single midpoint kernel, and `m−2` on-diagonal
//! factors with *shrunk* variance times ([`gm_reduce`]).  Shrinking is the
//! whole point: replacing the shrunk times with their naive upper bounds
//! gives the strictly smaller series [`i3`], while the matched Gaussian
//! multiplicative chaos is bounded above by the analogous series [`i3_tilde`]
//! built from a chained (rather than midpoint) pair functional.  The verdict
//! [`third_moment_verdict`] certifies `I3 − I3_tilde > 0` with explicit
//! error budgets, which separates the two fields at the third moment.

use crate::error::{domain, Error, Result};
use crate::kernels::SERIES_REL_TOL;
use crate::num::{Pt, Real};
use crate::quadrature::gk::{integrate_1d, QuadSpec};
use crate::quadrature::rng::{run_mc, stream, MCEstimate};
use crate::quadrature::simplex::{sample_chain_gweighted, simplex_integral_gtheta, TimeChain};
use crate::special_fn::{gauss_h, heat_kernel_r, GThetaTable};
use crate::Point;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Outcome of the exact chain reduction: the collapsed midpoint time and the
/// shrunk on-diagonal gap times.
#[derive(Debug, Clone, PartialEq)]
pub struct GmReduction<R = f64> {
    /// Number of blocks in the chain.
    pub m: usize,
    /// Collapsed variance time of the midpoint factor (`≤ a_2 − b_1/4`).
    pub bar_a2: R,
    /// Shrunk gap times for blocks `i = 3..m`, in block order; entry `i−3`
    /// satisfies `bar_gaps[i−3] ≤ (a_i − b_{i−2}) − (b_{i−1} − a_{i−1})/4`.
    pub bar_gaps: Vec<R>,
}

fn invariant(msg: &str) -> Error {
    Error::Invariant(msg.to_string())
}

/// Exact reduction of the chain integrand, generic over the scalar.
///
/// `times = [a_1, b_1, ..., a_m, b_m]` must be strictly increasing and
/// positive; the reduction does not depend on `b_m`.  Works top-down: each
/// step integrates out the two topmost spatial variables, emitting one
/// shrunk gap time and replacing `a_{m−1}` by a strictly smaller effective
/// time, until the two-block base case collapses in closed form.
pub fn gm_reduce_times<R: Real>(times: &[R]) -> Result<GmReduction<R>> {
    if times.len() < 4 || times.len() % 2 != 0 {
        return Err(domain("gm_reduce: need an even number of times, at least 4"));
    }
    let mut prev = R::zero();
    for &x in times {
        if !(x > prev) {
            return Err(domain("gm_reduce: times must be positive and increasing"));
        }
        prev = x;
    }
    let m = times.len() / 2;
    let mut a: Vec<R> = (0..m).map(|i| times[2 * i]).collect();
    let b: Vec<R> = (0..m).map(|i| times[2 * i + 1]).collect();

    let mut bar_gaps = Vec::with_capacity(m.saturating_sub(2));
    // Peel blocks k = m, m−1, ..., 3; indices below are zero-based.
    for k in (3..=m).rev() {
        let (ak, bk1, ak1, bk2) = (a[k - 1], b[k - 2], a[k - 2], b[k - 3]);
        let gap = (ak - bk2) - (bk1 - ak1) * R::quarter();
        if !(gap > R::zero()) {
            return Err(invariant("gm_reduce: shrunk gap must stay positive"));
        }
        bar_gaps.push(gap);
        // Effective replacement for a_{k−1}; strictly smaller because the
        // harmonic mean h(s, ·) is strictly below s.
        let s = (ak1 - bk2) * R::half();
        let u = ak - bk2 * R::half() - (ak1 + bk1) * R::quarter();
        a[k - 2] = (ak1 + bk2) * R::half() + gauss_h(s, u)?;
    }
    bar_gaps.reverse();
    let bar_a2 = a[1] - b[0] * R::quarter();
    if !(bar_a2 > R::zero()) {
        return Err(invariant("gm_reduce: collapsed midpoint time must stay positive"));
    }
    Ok(GmReduction { m, bar_a2, bar_gaps })
}

/// [`gm_reduce_times`] on a validated time chain.
pub fn gm_reduce(chain: &TimeChain) -> Result<GmReduction> {
    gm_reduce_times(&chain.times)
}

/// Collapsed value of the chain integrand at three planar points, generic
/// over the scalar:
/// `g_{a1}(z1−z2) · g_{bar_a2}(z3 − (z1+z2)/2) · ∏ g_{bar_gap_i}(0)`.
pub fn gm_eval_times<R: Real>(times: &[R], z1: Pt<R>, z2: Pt<R>, z3: Pt<R>) -> Result<R> {
    let red = gm_reduce_times(times)?;
    let a1 = times[0];
    let mid = (z1 + z2).scale(R::half());
    let mut v = heat_kernel_r(a1, (z1 - z2).norm2()) * heat_kernel_r(red.bar_a2, (z3 - mid).norm2());
    for &g in &red.bar_gaps {
        v = v * heat_kernel_r(g, R::zero());
    }
    Ok(v)
}

/// [`gm_eval_times`] on a validated time chain.
pub fn gm_eval(chain: &TimeChain, z1: Point, z2: Point, z3: Point) -> Result<f64> {
    gm_eval_times(&chain.times, z1, z2, z3)
}

/// Chain length cap for the brute-force oracle.
pub const BRUTE_GM_MAX_M: usize = 6;

/// Brute-force oracle for the chain integrand: assembles the full `4m`-dim
/// Gaussian convolution as a quadratic form and evaluates it by linear
/// algebra (Cholesky), with no use of the reduction shortcut.
pub fn brute_gm(chain: &TimeChain, z1: Point, z2: Point, z3: Point) -> Result<f64> {
    let m = chain.m();
    if m < 2 {
        return Err(domain("brute_gm: need at least two blocks"));
    }
    if m > BRUTE_GM_MAX_M {
        return Err(Error::Guard(format!(
            "brute_gm: m={m} exceeds the oracle cap {BRUTE_GM_MAX_M}"
        )));
    }
    // Variables per planar coordinate: x_1..x_m then y_1..y_m.
    let n = 2 * m;
    let xv = |l: usize| l - 1;
    let yv = |l: usize| m + l - 1;
    // Each factor is g_tau(v_i − v_j − c) with v_j optional (absent for the
    // anchors at the external points).
    let mut factors: Vec<(f64, usize, Option<usize>, Point)> = Vec::new();
    let zero = Point::origin();
    factors.push((chain.a(1) / 2.0, xv(1), None, z1));
    factors.push((chain.a(1) / 2.0, xv(1), None, z2));
    factors.push((chain.gap(1) / 4.0, yv(1), Some(xv(1)), zero));
    factors.push((chain.a(2) / 2.0, xv(2), None, z3));
    factors.push(((chain.a(2) - chain.b(1)) / 2.0, xv(2), Some(yv(1)), zero));
    factors.push((chain.gap(2) / 4.0, yv(2), Some(xv(2)), zero));
    for l in 3..=m {
        factors.push(((chain.a(l) - chain.b(l - 2)) / 2.0, xv(l), Some(yv(l - 2)), zero));
        factors.push(((chain.a(l) - chain.b(l - 1)) / 2.0, xv(l), Some(yv(l - 1)), zero));
        factors.push((chain.gap(l) / 4.0, yv(l), Some(xv(l)), zero));
    }

    let mut a_mat = DMatrix::<f64>::zeros(n, n);
    let mut bx = DVector::<f64>::zeros(n);
    let mut by = DVector::<f64>::zeros(n);
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut ln_norm = 0.0;
    for &(tau, i, j, c) in &factors {
        if !(tau > 0.0) {
            return Err(invariant("brute_gm: factor variance must be positive"));
        }
        ln_norm -= (2.0 * PI * tau).ln();
        let p = 1.0 / tau;
        a_mat[(i, i)] += p;
        if let Some(j) = j {
            a_mat[(j, j)] += p;
            a_mat[(i, j)] -= p;
            a_mat[(j, i)] -= p;
        }
        // Linear and constant parts of (v_i − v_j − c)²/τ per coordinate.
        bx[i] += c.x * p;
        by[i] += c.y * p;
        if let Some(j) = j {
            bx[j] -= c.x * p;
            by[j] -= c.y * p;
        }
        cx += c.x * c.x * p;
        cy += c.y * c.y * p;
    }
    let chol = a_mat
        .clone()
        .cholesky()
        .ok_or_else(|| invariant("brute_gm: precision matrix not positive definite"))?;
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let qx = bx.dot(&chol.solve(&bx));
    let qy = by.dot(&chol.solve(&by));
    let ln_val =
        ln_norm + n as f64 * (2.0 * PI).ln() - ln_det + 0.5 * (qx + qy) - 0.5 * (cx + cy);
    Ok(ln_val.exp())
}

/// Radially symmetric test function: a heat kernel `g_r` or the indicator
/// of the closed ball of radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TestFunctionSpec {
    /// `φ = g_r`.
    Heat { r: f64 },
    /// `φ = 1_{|x| ≤ r}`.
    Ball { r: f64 },
}

impl TestFunctionSpec {
    pub fn heat(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(domain("test function: radius must be positive"));
        }
        Ok(TestFunctionSpec::Heat { r })
    }

    pub fn ball(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(domain("test function: radius must be positive"));
        }
        Ok(TestFunctionSpec::Ball { r })
    }

    pub fn r(&self) -> f64 {
        match *self {
            TestFunctionSpec::Heat { r } | TestFunctionSpec::Ball { r } => r,
        }
    }

    /// Parse the CLI form `heat:R` / `ball:R`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, r) = s
            .split_once(':')
            .ok_or_else(|| domain("test function: expected heat:R or ball:R"))?;
        let r: f64 = r
            .parse()
            .map_err(|_| domain("test function: radius must be a number"))?;
        match kind {
            "heat" => TestFunctionSpec::heat(r),
            "ball" => TestFunctionSpec::ball(r),
            _ => Err(domain("test function: kind must be heat or ball")),
        }
    }
}

impl std::fmt::Display for TestFunctionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TestFunctionSpec::Heat { r } => write!(f, "heat:{r}"),
            TestFunctionSpec::Ball { r } => write!(f, "ball:{r}"),
        }
    }
}

/// Pair functional with the heat-kernel test function, in closed form:
/// `1/((a1 + 2r)(a2 + 3r/2))`.
pub fn scr_g_heat<R: Real>(a1: R, a2: R, r: R) -> R {
    let three_half = R::one() + R::half();
    (R::one() / (a1 + R::two() * r)) * (R::one() / (a2 + three_half * r))
}

/// Chained pair functional with the heat-kernel test function, in closed
/// form: `1/(a1·a2 + 2r(a1 + a2) + 3r²)`.
pub fn scr_g_tilde_heat<R: Real>(a1: R, a2: R, r: R) -> R {
    let three = R::two() + R::one();
    R::one() / (a1 * a2 + R::two() * r * (a1 + a2) + three * r * r)
}

/// Mass of a centered Gaussian of variance time `a` inside the ball of
/// radius `r` around a point at distance `s` from the origin.
///
/// Radial decomposition with the exact Gaussian radial CDF substitution
/// `v = exp(−q²/2a)`: the angular fraction of the circle of radius `q`
/// around the offset point that lies inside the ball is
/// `(π − arccos τ)/π` with `τ = (r² − s² − q²)/(2sq)` clamped to `[−1, 1]`.
fn ball_xi(a: f64, r: f64, s: f64) -> Result<f64> {
    if a <= 0.0 {
        // Point mass: the indicator itself (half weight on the boundary).
        return Ok(if s < r {
            1.0
        } else if s > r {
            0.0
        } else {
            0.5
        });
    }
    if s <= 1e-9 * r {
        return Ok(1.0 - (-(r * r) / (2.0 * a)).exp());
    }
    let v1 = (-(r - s) * (r - s) / (2.0 * a)).exp();
    let v2 = (-(r + s) * (r + s) / (2.0 * a)).exp();
    let head = if s < r { 1.0 - v1 } else { 0.0 };
    if v1 - v2 <= 1e-300 {
        // Transition shell numerically unreachable.
        return Ok(head);
    }
    let f = |v: f64| {
        let q = (-2.0 * a * v.ln()).sqrt();
        let tau = ((r * r - s * s - q * q) / (2.0 * s * q)).clamp(-1.0, 1.0);
        (PI - tau.acos()) / PI
    };
    let (tail, _) = integrate_1d(f, v2, v1, &QuadSpec::with_tol(1e-13, 1e-9))?;
    Ok((head + tail).clamp(0.0, 1.0))
}

/// Weighted mass of the lens `B(u/2, r) ∩ B(−u/2, r)` with `|u| = rho`,
/// against the radial weight `ξ(s) = ball_xi(a2, r, s)`:
/// `∫ ξ(|w|) 1_lens(w) dw` in polar coordinates.  The angular measure of the
/// lens on the circle of radius `s` is `2(π − 2 arccos τ)` with
/// `τ = (r² − s² − ρ²/4)/(sρ)`, which is full (`2π`) for `s ≤ r − ρ/2` and
/// vanishes beyond `s = √(r² − ρ²/4)`.
fn ball_lens_mass(a2: f64, r: f64, rho: f64) -> Result<f64> {
    if rho >= 2.0 * r {
        return Ok(0.0);
    }
    let s1 = r - rho / 2.0;
    let smax = (r * r - rho * rho / 4.0).sqrt();
    let spec = QuadSpec::with_tol(1e-12, 1e-8);
    let (head, _) = integrate_1d(|s| ball_xi(a2, r, s).unwrap_or(0.0) * s, 0.0, s1, &spec)?;
    let mut total = 2.0 * PI * head;
    if smax > s1 {
        let f = |s: f64| {
            let tau = ((r * r - s * s - rho * rho / 4.0) / (s * rho)).clamp(0.0, 1.0);
            let ang = 2.0 * (PI - 2.0 * tau.acos());
            if ang <= 0.0 {
                0.0
            } else {
                ball_xi(a2, r, s).unwrap_or(0.0) * s * ang
            }
        };
        let (shell, _) = integrate_1d(f, s1, smax, &spec)?;
        total += shell;
    }
    Ok(total)
}

/// Pair functional with the ball indicator, by the radial reduction:
/// separating the pair into difference and midpoint coordinates, the
/// midpoint integral is the lens mass above, and the difference radius is
/// absorbed through its own Gaussian radial CDF.
fn scr_g_ball(a1: f64, a2: f64, r: f64) -> Result<f64> {
    let four_pi2 = (2.0 * PI) * (2.0 * PI);
    if a1 <= 0.0 {
        return Ok(four_pi2 * ball_lens_mass(a2, r, 0.0)?);
    }
    let wmin = (-2.0 * r * r / a1).exp();
    let f = |w: f64| {
        let rho = if w >= 1.0 { 0.0 } else { (-2.0 * a1 * w.ln()).sqrt() };
        ball_lens_mass(a2, r, rho).unwrap_or(0.0)
    };
    let (v, _) = integrate_1d(f, wmin, 1.0, &QuadSpec::with_tol(1e-12, 3e-7))?;
    Ok(four_pi2 * v)
}

/// Chained pair functional with the ball indicator: conditioning on the
/// middle point reduces it to a single radial integral of the product of
/// two Gaussian ball masses.
fn scr_g_tilde_ball(a1: f64, a2: f64, r: f64) -> Result<f64> {
    let f = |s: f64| ball_xi(a1, r, s).unwrap_or(0.0) * ball_xi(a2, r, s).unwrap_or(0.0) * s;
    let (v, _) = integrate_1d(f, 0.0, r, &QuadSpec::with_tol(1e-13, 1e-8))?;
    Ok((2.0 * PI) * (2.0 * PI) * 2.0 * PI * v)
}

/// Pair functional `𝒢_{a1,a2}(φ)`.
pub fn scr_g(a1: f64, a2: f64, phi: &TestFunctionSpec) -> Result<f64> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(domain("scr_g: variance times must be positive"));
    }
    match *phi {
        TestFunctionSpec::Heat { r } => Ok(scr_g_heat(a1, a2, r)),
        TestFunctionSpec::Ball { r } => scr_g_ball(a1, a2, r),
    }
}

/// Chained pair functional `𝒢̃_{a1,a2}(φ)`.
pub fn scr_g_tilde(a1: f64, a2: f64, phi: &TestFunctionSpec) -> Result<f64> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(domain("scr_g_tilde: variance times must be positive"));
    }
    match *phi {
        TestFunctionSpec::Heat { r } => Ok(scr_g_tilde_heat(a1, a2, r)),
        TestFunctionSpec::Ball { r } => scr_g_tilde_ball(a1, a2, r),
    }
}

/// Grid points per axis of the ball-functional interpolation table.
pub const BALL_GRID: usize = 96;

/// Interpolation table for the ball-indicator pair functionals over
/// `(a1, a2) ∈ (0, t]²`, uniform in `(√a1, √a2)` where both functionals are
/// smooth, with cubic Lagrange interpolation per axis.  The ball quadratures
/// are too slow to sit inside the series tensors directly.
#[derive(Debug, Clone)]
pub struct BallScrGTable {
    pub t: f64,
    pub r: f64,
    pub tilde: bool,
    step: f64,
    vals: Vec<f64>,
    probe_rel_err: f64,
}

impl BallScrGTable {
    pub fn build(t: f64, r: f64, tilde: bool) -> Result<BallScrGTable> {
        if !(t > 0.0 && r > 0.0) {
            return Err(domain("ball table: horizon and radius must be positive"));
        }
        let n = BALL_GRID;
        let step = t.sqrt() / (n - 1) as f64;
        let direct = |a1: f64, a2: f64| {
            if tilde {
                scr_g_tilde_ball(a1, a2, r)
            } else {
                scr_g_ball(a1, a2, r)
            }
        };
        let vals: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let x = (k / n) as f64 * step;
                let y = (k % n) as f64 * step;
                direct(x * x, y * y)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut table = BallScrGTable {
            t,
            r,
            tilde,
            step,
            vals,
            probe_rel_err: 0.0,
        };
        // Measure the interpolation error on pseudo-random interior points;
        // the series carries it as a relative error contribution.
        let mut rng = stream(0xba11, if tilde { 1 } else { 0 });
        let probes: Vec<(f64, f64)> = (0..12)
            .map(|_| {
                let a1 = rng.gen::<f64>().powi(2) * t;
                let a2 = rng.gen::<f64>().powi(2) * t;
                (a1.max(1e-6 * t), a2.max(1e-6 * t))
            })
            .collect();
        let errs: Vec<f64> = probes
            .par_iter()
            .map(|&(a1, a2)| {
                let exact = direct(a1, a2)?;
                Ok(((table.eval(a1, a2) - exact) / exact).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        table.probe_rel_err = errs.into_iter().fold(0.0, f64::max);
        Ok(table)
    }

    /// Cubic Lagrange interpolation in `(√a1, √a2)`.
    pub fn eval(&self, a1: f64, a2: f64) -> f64 {
        let n = BALL_GRID;
        let coord = |a: f64| (a.max(0.0).sqrt() / self.step).min((n - 1) as f64);
        let stencil = |u: f64| -> (usize, [f64; 4]) {
            let i0 = (u.floor() as usize).clamp(1, n - 3) - 1;
            let mut w = [0.0; 4];
            for (j, wj) in w.iter_mut().enumerate() {
                let xj = (i0 + j) as f64;
                let mut p = 1.0;
                for k in 0..4 {
                    if k != j {
                        let xk = (i0 + k) as f64;
                        p *= (u - xk) / (xj - xk);
                    }
                }
                *wj = p;
            }
            (i0, w)
        };
        let (i0, wx) = stencil(coord(a1));
        let (j0, wy) = stencil(coord(a2));
        let mut acc = 0.0;
        for (di, wi) in wx.iter().enumerate() {
            for (dj, wj) in wy.iter().enumerate() {
                acc += wi * wj * self.vals[(i0 + di) * n + (j0 + dj)];
            }
        }
        acc
    }

    /// Largest relative interpolation error seen on the build-time probes.
    pub fn probe_rel_err(&self) -> f64 {
        self.probe_rel_err
    }
}

/// Prepared evaluator for `𝒢` or `𝒢̃` inside the series tensors.
enum ScrGKernel {
    Heat { r: f64, tilde: bool },
    Ball(BallScrGTable),
}

impl ScrGKernel {
    fn prepare(t: f64, phi: &TestFunctionSpec, tilde: bool) -> Result<ScrGKernel> {
        match *phi {
            TestFunctionSpec::Heat { r } => Ok(ScrGKernel::Heat { r, tilde }),
            TestFunctionSpec::Ball { r } => Ok(ScrGKernel::Ball(BallScrGTable::build(t, r, tilde)?)),
        }
    }

    fn eval(&self, a1: f64, a2: f64) -> f64 {
        match self {
            ScrGKernel::Heat { r, tilde: false } => scr_g_heat(a1, a2, *r),
            ScrGKernel::Heat { r, tilde: true } => scr_g_tilde_heat(a1, a2, *r),
            ScrGKernel::Ball(table) => table.eval(a1, a2),
        }
    }

    /// Relative error carried by the evaluator itself (table interpolation).
    fn rel_slack(&self) -> f64 {
        match self {
            ScrGKernel::Heat { .. } => 0.0,
            ScrGKernel::Ball(table) => 3.0 * table.probe_rel_err(),
        }
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("series horizon must lie in (0,1]; got t={t}")));
    }
    Ok(())
}

/// One series: `Σ_m 3·2^{m−1} ∫ kern(a1,a2) G(b1−a1) G(b2−a2)
/// ∏_{i≥3} G(b_i−a_i)/(a_i−b_{i−2})` over the ordered chain simplex.
fn i3_series(
    table: &GThetaTable,
    t: f64,
    kern: &ScrGKernel,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<(f64, f64, Vec<(usize, f64, f64)>)> {
    check_horizon(t)?;
    if m_max < 2 {
        return Err(domain("series: m_max must be at least 2"));
    }
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut last_term = 0.0;
    let mut rows = Vec::new();
    for m in 2..=m_max {
        let coeff = 3.0 * 2f64.powi(m as i32 - 1);
        let f = |c: &TimeChain| {
            let mut links = 1.0;
            for i in 3..=c.m() {
                let gap = c.a(i) - c.b(i - 2);
                if gap <= 0.0 {
                    // Degenerate (zero-measure) slice from an extreme node.
                    return 0.0;
                }
                links /= gap;
            }
            kern.eval(c.a(1), c.a(2)) * links
        };
        // Stream id depends only on m so the plain and chained series see
        // identical Monte Carlo chains (common random numbers).
        let (v, e) = simplex_integral_gtheta(f, t, m, table, spec, seed, m as u64)?;
        let term = coeff * v;
        let term_err = coeff * e;
        sum += term;
        err += term_err;
        last_term = term;
        rows.push((m, term, term_err));
        if m >= 3 && term.abs() < SERIES_REL_TOL * sum.abs() {
            break;
        }
    }
    err += last_term.abs() + kern.rel_slack() * sum.abs();
    Ok((sum, err, rows))
}

/// Lower-bound series `I3(t, θ, φ)` for the third moment of the heat flow.
/// Returns `(value, error)`; the error combines per-term quadrature errors,
/// the final term as a truncation bound, and table slack for the ball case.
pub fn i3(
    table: &GThetaTable,
    t: f64,
    phi: &TestFunctionSpec,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<(f64, f64)> {
    let kern = ScrGKernel::prepare(t, phi, false)?;
    let (v, e, _) = i3_series(table, t, &kern, m_max, spec, seed)?;
    Ok((v, e))
}

/// Upper-bound series `I3_tilde(t, θ, φ)` for the third moment of the
/// matched Gaussian multiplicative chaos.
pub fn i3_tilde(
    table: &GThetaTable,
    t: f64,
    phi: &TestFunctionSpec,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<(f64, f64)> {
    let kern = ScrGKernel::prepare(t, phi, true)?;
    let (v, e, _) = i3_series(table, t, &kern, m_max, spec, seed)?;
    Ok((v, e))
}

/// Per-chain-length contribution to both series.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ThirdMomentTerm {
    pub m: usize,
    pub i3_term: f64,
    pub i3_term_err: f64,
    pub tilde_term: f64,
    pub tilde_term_err: f64,
}

/// Verdict report for the strict third-moment gap.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ThirdMomentReport {
    pub t: f64,
    pub theta: f64,
    pub phi: TestFunctionSpec,
    pub i3: f64,
    pub i3_err: f64,
    pub i3_tilde: f64,
    pub i3_tilde_err: f64,
    /// `i3 − i3_tilde`.
    pub gap: f64,
    /// `gap / i3`.
    pub rel_gap: f64,
    /// `i3_err + i3_tilde_err`.
    pub combined_err: f64,
    /// Strict inequality certified: `gap > 3 · combined_err`.
    pub certified: bool,
    pub terms: Vec<ThirdMomentTerm>,
}

/// Compute both series with common random numbers and report whether the
/// strict gap `I3 > I3_tilde` is certified beyond three combined error bars.
/// An inconclusive gap is reported as `certified: false`, never promoted.
pub fn third_moment_verdict(
    table: &GThetaTable,
    t: f64,
    phi: &TestFunctionSpec,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<ThirdMomentReport> {
    let kern = ScrGKernel::prepare(t, phi, false)?;
    let kern_tilde = ScrGKernel::prepare(t, phi, true)?;
    let (v, e, rows) = i3_series(table, t, &kern, m_max, spec, seed)?;
    let (vt, et, rows_t) = i3_series(table, t, &kern_tilde, m_max, spec, seed)?;
    let mut terms = Vec::new();
    for k in 0..rows.len().max(rows_t.len()) {
        let (m, a, ae) = rows.get(k).copied().unwrap_or((0, 0.0, 0.0));
        let (mt, b, be) = rows_t.get(k).copied().unwrap_or((0, 0.0, 0.0));
        terms.push(ThirdMomentTerm {
            m: m.max(mt),
            i3_term: a,
            i3_term_err: ae,
            tilde_term: b,
            tilde_term_err: be,
        });
    }
    let gap = v - vt;
    let combined_err = e + et;
    Ok(ThirdMomentReport {
        t,
        theta: table.theta.0,
        phi: *phi,
        i3: v,
        i3_err: e,
        i3_tilde: vt,
        i3_tilde_err: et,
        gap,
        rel_gap: gap / v,
        combined_err,
        certified: gap > 3.0 * combined_err,
        terms,
    })
}

/// Pointwise centered third-moment kernel of the heat flow:
/// `K3(z1,z2,z3) = Σ_m 2^{m−1}(2π)^m {𝓘(z1,z2,z3)+𝓘(z2,z3,z1)+𝓘(z3,z1,z2)}`
/// where each `𝓘` integrates the collapsed chain integrand against the
/// renewal weights over the ordered simplex.  Returns `(value, error)`.
pub fn k3_point(
    table: &GThetaTable,
    t: f64,
    z1: Point,
    z2: Point,
    z3: Point,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<(f64, f64)> {
    check_horizon(t)?;
    if m_max < 2 {
        return Err(domain("k3_point: m_max must be at least 2"));
    }
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut last_term = 0.0;
    for m in 2..=m_max {
        let coeff = 2f64.powi(m as i32 - 1) * (2.0 * PI).powi(m as i32);
        let f = |c: &TimeChain| {
            // Degenerate extreme-node chains are zero-measure slices.
            gm_eval(c, z1, z2, z3).unwrap_or(0.0)
                + gm_eval(c, z2, z3, z1).unwrap_or(0.0)
                + gm_eval(c, z3, z1, z2).unwrap_or(0.0)
        };
        let (v, e) = simplex_integral_gtheta(f, t, m, table, spec, seed, 200 + m as u64)?;
        let term = coeff * v;
        sum += term;
        err += coeff * e;
        last_term = term;
        if m >= 3 && term.abs() < SERIES_REL_TOL * sum.abs() {
            break;
        }
    }
    Ok((sum, err + last_term.abs()))
}

/// Monte Carlo average of the pointwise kernel against `φ = g_r` in all
/// three slots, jointly sampling the points and the time chains.  Used to
/// check the lower-bound direction `K3(φ) ≥ I3(φ)`.
pub fn k3_phi_mc(
    table: &GThetaTable,
    t: f64,
    r: f64,
    m_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_horizon(t)?;
    if !(r > 0.0) {
        return Err(domain("k3_phi_mc: radius must be positive"));
    }
    if m_max < 2 {
        return Err(domain("k3_phi_mc: m_max must be at least 2"));
    }
    let sr = r.sqrt();
    Ok(run_mc(seed, 300, n_samples, |rng| {
        let gauss = |rng: &mut _| {
            Point::new(
                sr * crate::quadrature::rng::standard_normal(rng),
                sr * crate::quadrature::rng::standard_normal(rng),
            )
        };
        let z1 = gauss(rng);
        let z2 = gauss(rng);
        let z3 = gauss(rng);
        let mut acc = 0.0;
        for m in 2..=m_max {
            let coeff = 2f64.powi(m as i32 - 1) * (2.0 * PI).powi(m as i32);
            let (chain, gw) = sample_chain_gweighted(t, m, table, rng).expect("valid horizon");
            acc += coeff
                * gw
                * (gm_eval(&chain, z1, z2, z3).unwrap_or(0.0)
                    + gm_eval(&chain, z2, z3, z1).unwrap_or(0.0)
                    + gm_eval(&chain, z3, z1, z2).unwrap_or(0.0));
        }
        acc
    }))
}
