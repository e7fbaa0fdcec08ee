//! Special functions and exact Gaussian identities.
//!
//! Provides the planar heat kernel, the exponentially weighted Dickman
//! renewal density `G_theta` with its antiderivative, a tabulated/
//! interpolated form of both, and the two- and three-kernel Gaussian product
//! identities used throughout the moment formulas.

use crate::error::{domain, Error, Result};
use crate::num::{Pt, Real};
use crate::quadrature::gk::{integrate_1d, QuadSpec};
use serde::{Deserialize, Serialize};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Dimensionless coupling parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta(pub f64);

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection: ln Γ(x) = ln π − ln sin(πx) − ln Γ(1−x).
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Planar heat kernel `(1/(2πt)) exp(-|x|²/(2t))`.
pub fn heat_kernel<R: Real>(t: R, x: Pt<R>) -> Result<R> {
    if !(t > R::zero()) {
        return Err(domain("heat_kernel: variance time must be positive"));
    }
    Ok(heat_kernel_r(t, x.norm2()))
}

/// Heat kernel as a function of the squared radius (no domain check).
#[inline]
pub fn heat_kernel_r<R: Real>(t: R, r2: R) -> R {
    (-(r2) / (R::two() * t)).exp() / (R::two_pi() * t)
}

/// Harmonic-mean time `h(s,t) = st/(s+t)`.
pub fn gauss_h<R: Real>(s: R, t: R) -> Result<R> {
    if !(s > R::zero()) || !(t > R::zero()) {
        return Err(domain("gauss_h: arguments must be positive"));
    }
    Ok(s * t / (s + t))
}

/// Weighted midpoint `m_{t,s}(a,b) = (t·a + s·b)/(s+t)`.
pub fn gauss_midpoint<R: Real>(s: R, t: R, a: Pt<R>, b: Pt<R>) -> Result<Pt<R>> {
    if !(s > R::zero()) || !(t > R::zero()) {
        return Err(domain("gauss_midpoint: arguments must be positive"));
    }
    let w = t / (s + t);
    Ok(a.scale(w) + b.scale(R::one() - w))
}

/// Closed form of `∫ g_s(x−a) g_t(x−b) g_u(x−c) dx` over the plane:
/// `g_{s+t}(a−b) · g_{h(s,t)+u}(c − m_{t,s}(a,b))`.
pub fn triple_gauss_integral<R: Real>(
    s: R,
    t: R,
    u: R,
    a: Pt<R>,
    b: Pt<R>,
    c: Pt<R>,
) -> Result<R> {
    if !(u > R::zero()) {
        return Err(domain("triple_gauss_integral: arguments must be positive"));
    }
    let h = gauss_h(s, t)?;
    let m = gauss_midpoint(s, t, a, b)?;
    Ok(heat_kernel_r(s + t, (a - b).norm2()) * heat_kernel_r(h + u, (c - m).norm2()))
}

/// Log of the `G_theta` integrand without the `ln u` term:
/// `(θ−γ)u + (u−1)·ln t − ln Γ(u+1)`.
#[inline]
fn log_env(c: f64, ln_t: f64, u: f64) -> f64 {
    c * u + (u - 1.0) * ln_t - ln_gamma(u + 1.0)
}

/// Find a truncation point for the `u`-integral: the (log) integrand decays
/// super-exponentially through `1/Γ(u+1)`, so march until it is 40 nats
/// below its running maximum.
fn u_max(c: f64, ln_t: f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut u = 0.25;
    while u < 600.0 {
        let v = log_env(c, ln_t, u) + u.max(1e-3).ln();
        if v > peak {
            peak = v;
        } else if v < peak - 40.0 {
            return u;
        }
        u += 0.25;
    }
    600.0
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("renewal density defined on (0,1]; got t={t}")));
    }
    Ok(())
}

/// Dickman renewal density
/// `G_θ(t) = ∫₀^∞ e^{(θ−γ)u} u t^{u−1} / Γ(u+1) du`, for `t ∈ (0,1]`.
pub fn g_theta(theta: Theta, t: f64) -> Result<f64> {
    check_t(t)?;
    let c = theta.0 - EULER_GAMMA;
    let ln_t = t.ln();
    let hi = u_max(c, ln_t);
    let f = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            (log_env(c, ln_t, u) + u.ln()).exp()
        }
    };
    let spec = QuadSpec::with_tol(1e-300, 1e-12);
    // Split at a mid point so the adaptive pass resolves the peak cheaply.
    let (v1, e1) = integrate_1d(f, 0.0, (hi * 0.25).max(1.0).min(hi), &spec)?;
    let split = (hi * 0.25).max(1.0).min(hi);
    let (v2, e2) = if split < hi {
        integrate_1d(f, split, hi, &spec)?
    } else {
        (0.0, 0.0)
    };
    let _ = (e1, e2);
    Ok(v1 + v2)
}

/// Antiderivative `Ḡ_θ(t) = ∫₀ᵗ G_θ(v) dv`, reduced to the single
/// `u`-integral `∫₀^∞ e^{(θ−γ)u} t^u / Γ(u+1) du`.
pub fn g_theta_antiderivative(theta: Theta, t: f64) -> Result<f64> {
    check_t(t)?;
    let c = theta.0 - EULER_GAMMA;
    let ln_t = t.ln();
    let hi = u_max(c, ln_t);
    let f = |u: f64| (c * u + u * ln_t - ln_gamma(u + 1.0)).exp();
    let spec = QuadSpec::with_tol(1e-300, 1e-12);
    let split = (hi * 0.25).max(1.0).min(hi);
    let (v1, _) = integrate_1d(f, 0.0, split, &spec)?;
    let (v2, _) = if split < hi {
        integrate_1d(f, split, hi, &spec)?
    } else {
        (0.0, 0.0)
    };
    Ok(v1 + v2)
}

/// Riemann zeta at integer `k ≥ 2` (direct sum plus Euler-Maclaurin tail).
fn zeta_int(k: u32) -> f64 {
    let n = 40u32;
    let mut s = 0.0;
    for j in 1..n {
        s += (j as f64).powi(-(k as i32));
    }
    let nf = n as f64;
    let kf = k as f64;
    // Tail: ∫_n^∞ + boundary and derivative corrections.
    s + nf.powf(1.0 - kf) / (kf - 1.0) + 0.5 * nf.powf(-kf) - (kf / 12.0) * nf.powf(-kf - 1.0)
        + (kf * (kf + 1.0) * (kf + 2.0) / 720.0) * nf.powf(-kf - 3.0)
}

const PHI_ORDER: usize = 22;

/// Taylor coefficients of `φ(u) = e^{θu}/ (e^{θu} Γ(1+u))`-free part:
/// `φ(u) = exp(−Σ_{k≥2} (−1)^k ζ(k) u^k / k)`, so that the renewal
/// integrands become `e^{−λu} φ(u)` with `λ = log(1/t) − θ`.
fn phi_coeffs() -> &'static [f64; PHI_ORDER] {
    use std::sync::OnceLock;
    static CACHE: OnceLock<[f64; PHI_ORDER]> = OnceLock::new();
    CACHE.get_or_init(|| {
        // Series s(u) = Σ_{k≥2} c_k u^k with c_k = −(−1)^k ζ(k)/k.
        let mut c = [0.0f64; PHI_ORDER];
        for k in 2..PHI_ORDER {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            c[k] = sign * zeta_int(k as u32) / k as f64;
        }
        // Exponentiate: φ' = s'·φ gives the standard recurrence.
        let mut phi = [0.0f64; PHI_ORDER];
        phi[0] = 1.0;
        for n in 1..PHI_ORDER {
            let mut acc = 0.0;
            for k in 1..=n {
                acc += k as f64 * c[k] * phi[n - k];
            }
            phi[n] = acc / n as f64;
        }
        phi
    })
}

/// Watson-lemma evaluation of `Ḡ_θ(t) = ∫ e^{−λu} φ(u) du` for small `t`
/// (`λ = log(1/t) − θ` large). Relative error ~ e^{−λ}.
fn gbar_asymptotic(lambda: f64) -> f64 {
    let phi = phi_coeffs();
    let mut sum = 0.0;
    let mut fact_over_pow = 1.0 / lambda;
    for (k, &p) in phi.iter().enumerate() {
        sum += fact_over_pow * p;
        fact_over_pow *= (k + 1) as f64 / lambda;
    }
    sum
}

/// Same for `G_θ(t) = (1/t) ∫ e^{−λu} u φ(u) du`.
fn g_asymptotic(t: f64, lambda: f64) -> f64 {
    let phi = phi_coeffs();
    let mut sum = 0.0;
    let mut fact_over_pow = 1.0 / (lambda * lambda);
    for (k, &p) in phi.iter().enumerate() {
        sum += fact_over_pow * p;
        fact_over_pow *= (k + 2) as f64 / lambda;
    }
    sum / t
}

/// Number of grid points in a [`GThetaTable`].
pub const GTHETA_GRID: usize = 2048;
const GRID_MIN: f64 = 1e-8;

/// Precomputed `G_θ` and `Ḡ_θ` on `(0, 1]` with interpolation.
///
/// The grid is logarithmic on `[1e-8, 1]` (both the `1/(t log² t)` blow-up
/// near zero and the `1/t`-scale variation near the lower decades need
/// log-uniform resolution for 1e-8 interpolation accuracy); `G_θ` is
/// interpolated cubically in `(log t, log G)`, `Ḡ_θ` cubically in
/// `(log t, Ḡ)`. Below the grid floor the Watson expansion of the
/// `u`-integral takes over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GThetaTable {
    pub theta: Theta,
    pub grid: Vec<f64>,
    pub values_g: Vec<f64>,
    pub values_gbar: Vec<f64>,
    ln_grid: Vec<f64>,
    ln_g: Vec<f64>,
}

impl GThetaTable {
    pub fn build(theta: Theta) -> Result<GThetaTable> {
        let mut grid = Vec::with_capacity(GTHETA_GRID);
        let ratio = (1.0 / GRID_MIN).ln() / (GTHETA_GRID - 1) as f64;
        for i in 0..GTHETA_GRID {
            grid.push(GRID_MIN * (ratio * i as f64).exp());
        }
        // Land exactly on 1 despite rounding.
        *grid.last_mut().unwrap() = 1.0;
        let values_g: Vec<f64> = grid
            .iter()
            .map(|&t| g_theta(theta, t))
            .collect::<Result<_>>()?;
        let values_gbar: Vec<f64> = grid
            .iter()
            .map(|&t| g_theta_antiderivative(theta, t))
            .collect::<Result<_>>()?;
        GThetaTable::assemble(theta, grid, values_g, values_gbar)
    }

    /// Build from precomputed columns (table cache path); validates shape
    /// and positivity.
    pub fn assemble(
        theta: Theta,
        grid: Vec<f64>,
        values_g: Vec<f64>,
        values_gbar: Vec<f64>,
    ) -> Result<GThetaTable> {
        if grid.len() != values_g.len() || grid.len() != values_gbar.len() || grid.len() < 8 {
            return Err(Error::Invariant("renewal table: malformed columns".into()));
        }
        if values_g.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invariant("renewal table: G must be positive".into()));
        }
        if values_gbar.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invariant(
                "renewal table: antiderivative must be strictly increasing".into(),
            ));
        }
        let ln_grid: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
        let ln_g: Vec<f64> = values_g.iter().map(|v| v.ln()).collect();
        Ok(GThetaTable {
            theta,
            grid,
            values_g,
            values_gbar,
            ln_grid,
            ln_g,
        })
    }

    fn bracket(&self, t: f64) -> usize {
        // Index i with grid[i] <= t < grid[i+1], clamped for interpolation.
        let i = self.grid.partition_point(|&g| g <= t);
        i.saturating_sub(1).clamp(1, self.grid.len() - 3)
    }

    /// Nonuniform 4-point Lagrange interpolation of `ys` vs `xs` at `x`.
    fn cubic(xs: &[f64], ys: &[f64], i: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            let ia = i - 1 + a;
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    let ib = i - 1 + b;
                    l *= (x - xs[ib]) / (xs[ia] - xs[ib]);
                }
            }
            acc += l * ys[ia];
        }
        acc
    }

    /// Interpolated `G_θ(t)`; falls back to direct quadrature below the
    /// grid floor.
    pub fn g(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        if t < self.grid[0] {
            // Below the grid floor log(1/t) − θ is large; the Watson
            // expansion of the u-integral is accurate to ~e^{θ−log(1/t)}.
            return Ok(g_asymptotic(t, (1.0 / t).ln() - self.theta.0));
        }
        let i = self.bracket(t);
        Ok(Self::cubic(&self.ln_grid, &self.ln_g, i, t.ln()).exp())
    }

    /// Interpolated `Ḡ_θ(t)`.
    pub fn gbar(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        if t < self.grid[0] {
            return Ok(gbar_asymptotic((1.0 / t).ln() - self.theta.0));
        }
        let i = self.bracket(t);
        Ok(Self::cubic(&self.ln_grid, &self.values_gbar, i, t.ln()))
    }

    /// Inverse of `Ḡ_θ` on `(0, 1]`: the `t` with `Ḡ_θ(t) = w`.
    /// Used for inverse-CDF sampling of the block gaps.
    pub fn gbar_inv(&self, w: f64) -> Result<f64> {
        if !(w > 0.0 && w <= *self.values_gbar.last().unwrap()) {
            return Err(domain(format!("gbar_inv: target {w} out of range")));
        }
        let i = self.values_gbar.partition_point(|&v| v < w);
        if i == 0 {
            // Below the grid floor: solve Ḡ(λ) = w by Newton in
            // λ = log(1/t) − θ, starting from the leading order λ = 1/w.
            let mut lambda = 1.0 / w;
            for _ in 0..30 {
                let f = gbar_asymptotic(lambda) - w;
                // dḠ/dλ = −∫ e^{−λu} u φ(u) du = −t·G(t) = −S(λ).
                let d = -g_asymptotic(1.0, lambda);
                let step = f / d;
                lambda -= step;
                if step.abs() < 1e-12 * lambda.abs() {
                    break;
                }
            }
            // Gaps below f64 resolution are clamped; they shift chain
            // times by less than representable precision anyway.
            let t = (-(lambda + self.theta.0)).exp().max(1e-280);
            return Ok(t);
        }
        let (lo, hi) = (self.grid[i - 1], self.grid[i]);
        // Inverse cubic interpolation of log t against Ḡ seeds Newton close
        // enough that two polish steps reach machine precision; this sits on
        // the hot path of every gap-substituted quadrature and sampler.
        let j = (i - 1).clamp(1, self.grid.len() - 3);
        let mut t = Self::cubic(&self.values_gbar, &self.ln_grid, j, w)
            .exp()
            .clamp(lo, hi);
        for _ in 0..2 {
            let f = self.gbar(t)? - w;
            let d = self.g(t)?;
            t = (t - f / d).clamp(lo, hi);
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen high-precision oracle values of the u-integrals (independent
    // multi-precision quadrature).
    const G0_1: f64 = 1.074_623_622_260_269_5;
    const GBAR0_1: f64 = 1.249_416_614_443_835;
    const G0_HALF: f64 = 0.915_940_205_512_797_6;
    const GBAR0_HALF: f64 = 0.758_824_488_841_059_6;
    const G2_03: f64 = 14.696_118_398_737_933;
    const GM2_07: f64 = 0.171_424_065_526_223_03;
    const GBAR2_1: f64 = 63.014_638_161_745_27;
    const GBARM2_1: f64 = 0.411_163_773_191_722_87;
    const G0_1EM6: f64 = 5_123.264_755_725_761;

    #[test]
    fn ln_gamma_reference() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((ln_gamma(30.5) - 72.953_471_184_169_41).abs() < 1e-9);
    }

    #[test]
    fn heat_kernel_values() {
        let o = Pt::origin();
        assert!((heat_kernel(1.0, o).unwrap() - 1.0 / std::f64::consts::TAU).abs() < 1e-15);
        assert!((heat_kernel(2.0, o).unwrap() - 0.25 / std::f64::consts::PI).abs() < 1e-15);
        let v = heat_kernel(0.5, Pt::new(1.0, 0.0)).unwrap();
        assert!((v - (-1.0f64).exp() / std::f64::consts::PI).abs() < 1e-12);
        assert!(heat_kernel(-1.0, o).is_err());
    }

    #[test]
    fn g_theta_oracles() {
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(g_theta(Theta(0.0), 1.0).unwrap(), G0_1) < 1e-10);
        assert!(rel(g_theta_antiderivative(Theta(0.0), 1.0).unwrap(), GBAR0_1) < 1e-10);
        assert!(rel(g_theta(Theta(0.0), 0.5).unwrap(), G0_HALF) < 1e-10);
        assert!(rel(g_theta_antiderivative(Theta(0.0), 0.5).unwrap(), GBAR0_HALF) < 1e-10);
        assert!(rel(g_theta(Theta(2.0), 0.3).unwrap(), G2_03) < 1e-10);
        assert!(rel(g_theta(Theta(-2.0), 0.7).unwrap(), GM2_07) < 1e-10);
        assert!(rel(g_theta_antiderivative(Theta(2.0), 1.0).unwrap(), GBAR2_1) < 1e-10);
        assert!(rel(g_theta_antiderivative(Theta(-2.0), 1.0).unwrap(), GBARM2_1) < 1e-10);
        assert!(rel(g_theta(Theta(0.0), 1e-6).unwrap(), G0_1EM6) < 1e-9);
    }

    #[test]
    fn theta_monotone() {
        for &t in &[0.01, 0.3, 1.0] {
            let a = g_theta(Theta(0.0), t).unwrap();
            let b = g_theta(Theta(1.0), t).unwrap();
            assert!(b > a);
        }
    }

    #[test]
    fn small_t_envelope() {
        // G_0(t) tracks 1/(t log²(1/t)) within a bounded ratio.
        for k in 2..=7 {
            let t = 10f64.powi(-k);
            let v = g_theta(Theta(0.0), t).unwrap();
            let env = 1.0 / (t * (1.0 / t).ln().powi(2));
            let ratio = v / env;
            assert!(ratio > 0.3 && ratio < 3.0, "t={t} ratio={ratio}");
        }
    }

    #[test]
    fn gauss_identities() {
        assert!((gauss_h(1.0_f64, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((gauss_h(2.0_f64, 3.0).unwrap() - 1.2).abs() < 1e-15);
        let s = 1.0_f64;
        let t = 1e9;
        assert!(((gauss_h(s, t).unwrap() - s) / s).abs() < 1e-8);
        let m = gauss_midpoint(1.0_f64, 1.0, Pt::new(0.0, 0.0), Pt::new(2.0, 0.0)).unwrap();
        assert!((m.x - 1.0).abs() < 1e-15 && m.y.abs() < 1e-15);
        // Weight t/(s+t) sits on the first point: the minimizer of
        // |x-a|²/2s + |x-b|²/2t, confirmed by the product identity test.
        let m = gauss_midpoint(1.0_f64, 3.0, Pt::new(0.0, 0.0), Pt::new(4.0, 0.0)).unwrap();
        assert!((m.x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn triple_gauss_plugin() {
        let o = Pt::origin();
        let v = triple_gauss_integral(1.0, 1.0, 1.0, o, o, o).unwrap();
        let expect = (1.0 / (4.0 * std::f64::consts::PI)) * (1.0 / (3.0 * std::f64::consts::PI));
        assert!(((v - expect) / expect).abs() < 1e-14);
        // Symmetry under swapping (s,a) and (t,b).
        let a = Pt::<f64>::new(0.3, -0.2);
        let b = Pt::new(-1.1, 0.4);
        let c = Pt::new(0.7, 0.9);
        let v1 = triple_gauss_integral(0.7, 1.3, 0.5, a, b, c).unwrap();
        let v2 = triple_gauss_integral(1.3, 0.7, 0.5, b, a, c).unwrap();
        assert!(((v1 - v2) / v1).abs() < 1e-13);
    }

    #[test]
    fn table_matches_direct() {
        let table = GThetaTable::build(Theta(0.0)).unwrap();
        // Midpoints between grid nodes across both grid regimes.
        for &t in &[3.3e-8, 7.7e-6, 4.1e-4, 8.9e-3, 0.0137, 0.251, 0.503, 0.977] {
            let gi = table.g(t).unwrap();
            let gd = g_theta(Theta(0.0), t).unwrap();
            assert!(((gi - gd) / gd).abs() < 1e-8, "t={t}");
            let bi = table.gbar(t).unwrap();
            let bd = g_theta_antiderivative(Theta(0.0), t).unwrap();
            assert!(((bi - bd) / bd).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn gbar_inverse_roundtrip() {
        let table = GThetaTable::build(Theta(0.5)).unwrap();
        for &t in &[1e-7, 1e-4, 0.02, 0.3, 0.99] {
            let w = table.gbar(t).unwrap();
            let back = table.gbar_inv(w).unwrap();
            assert!(((back - t) / t).abs() < 1e-8, "t={t} back={back}");
        }
    }

    #[test]
    fn asymptotic_matches_quadrature_below_floor() {
        let table = GThetaTable::build(Theta(0.0)).unwrap();
        for &t in &[1e-9, 1e-12, 1e-20] {
            let a = table.g(t).unwrap();
            let d = g_theta(Theta(0.0), t).unwrap();
            assert!(((a - d) / d).abs() < 1e-6, "g at t={t}");
            let ab = table.gbar(t).unwrap();
            let db = g_theta_antiderivative(Theta(0.0), t).unwrap();
            assert!(((ab - db) / db).abs() < 1e-6, "gbar at t={t}");
        }
        // Inverse below the floor round-trips through the asymptotic pair.
        let w = table.gbar(1e-12).unwrap();
        let back = table.gbar_inv(w).unwrap();
        assert!((back.ln() - (1e-12f64).ln()).abs() < 1e-5);
    }

    #[test]
    fn gbar_difference_nonnegative() {
        let table = GThetaTable::build(Theta(1.0)).unwrap();
        for &t in &[1e-6, 1e-3, 0.1, 0.8, 1.0] {
            assert!(table.gbar(t).unwrap() >= table.gbar(t / 2.0).unwrap());
        }
    }
}
