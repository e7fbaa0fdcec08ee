//! Second-moment kernel `K2`, its log-normal matching kernel, the full
//! two-time covariance kernel, the structural third-moment kernel of the
//! matched log-normal field, and the correlation-product series that
//! re-expand products of `K2` factors over ordered time chains.

use crate::error::{domain, Error, Result};
use crate::quadrature::gk::{integrate_1d, QuadSpec};
use crate::quadrature::rng::MCEstimate;
use crate::quadrature::simplex::{simplex_integral_gtheta, TimeChain};
use crate::special_fn::{heat_kernel_r, GThetaTable};

/// Relative size at which a series term stops the expansion; the last term
/// is reported inside the error as a tail bound.
pub const SERIES_REL_TOL: f64 = 1.0e-4;

/// Gaussian exponent beyond which `e^{−r²/(2s)}` is treated as zero; sets
/// the lower cutoff `s ≥ r²/EXP_CUTOFF` in the kernel quadratures.
const EXP_CUTOFF: f64 = 80.0;

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain("kernel horizon must lie in (0, 1]"));
    }
    Ok(())
}

/// Second-moment kernel
/// `K2(t, θ, r) = 2π ∫₀ᵗ g_s(r) Ḡ_θ(t−s) ds`
/// (the inner renewal integral is collapsed into the antiderivative `Ḡ_θ`).
///
/// `r = 0` returns `+∞` as a distinguished value, not an error. The
/// quadrature runs in `log s` so the near-origin scale `s ~ r²` and the
/// macroscopic scale `s ~ t` are resolved together.
pub fn k2(table: &GThetaTable, t: f64, r: f64) -> Result<f64> {
    check_horizon(t)?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(domain("k2: separation must be finite and nonnegative"));
    }
    if r == 0.0 {
        return Ok(f64::INFINITY);
    }
    if r * r >= EXP_CUTOFF * t {
        // Gaussian factor ≤ e^{−EXP_CUTOFF/2} over the whole range.
        return Ok(0.0);
    }
    let y_lo = (r * r / EXP_CUTOFF).ln().min(t.ln());
    let spec = QuadSpec::with_tol(1e-300, 1e-10);
    let (val, _) = integrate_1d(
        |y| {
            let s = y.exp();
            let rest = t - s;
            if rest <= 1e-280 {
                return 0.0;
            }
            // 2π g_s(r)·s = e^{−r²/(2s)}.
            (-(r * r) / (2.0 * s)).exp() * table.gbar(rest).unwrap_or(0.0)
        },
        y_lo,
        t.ln(),
        &spec,
    )?;
    Ok(val)
}

/// Matching log-normal kernel `k(t, θ, r) = log(1 + K2(t, θ, r))`.
pub fn k_gmc(table: &GThetaTable, t: f64, r: f64) -> Result<f64> {
    Ok(k2(table, t, r)?.ln_1p())
}

/// Full two-time covariance kernel
/// `K_t(x, x'; y, y') = π g_{t/4}((y+y')/2 − (x+x')/2) ·
///  ∬_{0<s<u<t} g_s(x'−x) G_θ(u−s) g_{t−u}(y'−y) ds du`.
///
/// Coincident `x = x'` or `y = y'` makes the double integral logarithmically
/// divergent; such inputs return `+∞`, mirroring [`k2`] at `r = 0`.
pub fn k2_covariance_full(
    table: &GThetaTable,
    t: f64,
    x: crate::Point,
    xp: crate::Point,
    y: crate::Point,
    yp: crate::Point,
) -> Result<f64> {
    check_horizon(t)?;
    let rx = (xp - x).norm();
    let ry = (yp - y).norm();
    if rx == 0.0 || ry == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mid_in = crate::Point::new((x.x + xp.x) / 2.0, (x.y + xp.y) / 2.0);
    let mid_out = crate::Point::new((y.x + yp.x) / 2.0, (y.y + yp.y) / 2.0);
    let front = std::f64::consts::PI * heat_kernel_r(t / 4.0, (mid_out - mid_in).norm2());
    if rx * rx >= EXP_CUTOFF * t {
        return Ok(0.0);
    }
    let spec = QuadSpec::with_tol(1e-300, 1e-8);

    // Inner u-integral over (s, t), split at the midpoint: the renewal
    // density spike at u ↓ s is flattened by the `w = Ḡ_θ(u−s)`
    // substitution, and the terminal Gaussian spike at u ↑ t by a log
    // substitution in v = t−u.
    let inner = |s: f64| -> f64 {
        let span = t - s;
        if span <= 1e-12 {
            return 0.0;
        }
        let half = span / 2.0;
        let wcap = match table.gbar(half) {
            Ok(w) => w,
            Err(_) => return 0.0,
        };
        let first = integrate_1d(
            |w| {
                let u = s + table.gbar_inv(w).unwrap_or(0.0);
                let rest = t - u;
                if rest <= 0.0 {
                    return 0.0;
                }
                heat_kernel_r(rest, ry * ry)
            },
            0.0,
            wcap,
            &spec,
        )
        .map(|(v, _)| v)
        .unwrap_or(0.0);
        let second = if ry * ry >= EXP_CUTOFF * half {
            0.0
        } else {
            let z_lo = (ry * ry / EXP_CUTOFF).ln().min(half.ln());
            integrate_1d(
                |z| {
                    let v = z.exp();
                    let gap = span - v;
                    if gap <= 1e-280 {
                        return 0.0;
                    }
                    // 2π g_v(ry)·v = e^{−ry²/(2v)}.
                    (-(ry * ry) / (2.0 * v)).exp() * table.g(gap).unwrap_or(0.0)
                        / (2.0 * std::f64::consts::PI)
                },
                z_lo,
                half.ln(),
                &spec,
            )
            .map(|(v, _)| v)
            .unwrap_or(0.0)
        };
        first + second
    };

    let y_lo = (rx * rx / EXP_CUTOFF).ln().min(t.ln());
    let (double, _) = integrate_1d(
        |ys| {
            let s = ys.exp();
            // 2π g_s(rx)·s = e^{−rx²/(2s)}; the 2π is divided back out.
            (-(rx * rx) / (2.0 * s)).exp() * inner(s) / (2.0 * std::f64::consts::PI)
        },
        y_lo,
        t.ln(),
        &spec,
    )?;
    Ok(front * double)
}

/// Structural third-moment kernel of the matched log-normal field:
/// the product of the three pair kernels plus the three pairwise products.
pub fn k3_gmc(table: &GThetaTable, t: f64, r12: f64, r13: f64, r23: f64) -> Result<f64> {
    let k12 = k2(table, t, r12)?;
    let k13 = k2(table, t, r13)?;
    let k23 = k2(table, t, r23)?;
    Ok(k12 * k23 * k13 + k12 * k23 + k12 * k13 + k13 * k23)
}

/// Interpolation table for `K2(t, θ, ·)` in `log r`, for use in hot Monte
/// Carlo loops. Below the grid floor the kernel continues with its exact
/// logarithmic slope `2Ḡ_θ(t)`; beyond the Gaussian range it is zero.
#[derive(Debug, Clone)]
pub struct K2Table {
    pub t: f64,
    pub theta: f64,
    ln_r: Vec<f64>,
    values: Vec<f64>,
    r_floor: f64,
    r_ceil: f64,
    gbar_t: f64,
}

impl K2Table {
    pub const GRID_POINTS: usize = 2048;
    pub const R_FLOOR: f64 = 1.0e-8;

    pub fn build(table: &GThetaTable, t: f64) -> Result<K2Table> {
        check_horizon(t)?;
        let r_ceil = (EXP_CUTOFF * t).sqrt();
        let n = Self::GRID_POINTS;
        let lo = Self::R_FLOOR.ln();
        let hi = r_ceil.ln();
        let mut ln_r = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let lr = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            ln_r.push(lr);
            values.push(k2(table, t, lr.exp())?);
        }
        Ok(K2Table {
            t,
            theta: table.theta.0,
            ln_r,
            values,
            r_floor: Self::R_FLOOR,
            r_ceil,
            gbar_t: table.gbar(t)?,
        })
    }

    /// Build from precomputed columns (table cache path); validates shape,
    /// ordering and positivity.
    pub fn assemble(
        t: f64,
        theta: f64,
        ln_r: Vec<f64>,
        values: Vec<f64>,
        r_ceil: f64,
        gbar_t: f64,
    ) -> Result<K2Table> {
        check_horizon(t)?;
        if ln_r.len() != values.len() || ln_r.len() < 8 {
            return Err(Error::Invariant("pair kernel table: malformed columns".into()));
        }
        if ln_r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invariant(
                "pair kernel table: radius grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|&v| !(v > 0.0)) || !(gbar_t > 0.0) || !(r_ceil > Self::R_FLOOR) {
            return Err(Error::Invariant(
                "pair kernel table: values must be positive".into(),
            ));
        }
        Ok(K2Table {
            t,
            theta,
            ln_r,
            values,
            r_floor: Self::R_FLOOR,
            r_ceil,
            gbar_t,
        })
    }

    /// Columns and scalars needed to reassemble the table.
    pub fn columns(&self) -> (&[f64], &[f64], f64, f64) {
        (&self.ln_r, &self.values, self.r_ceil, self.gbar_t)
    }

    /// Interpolated `K2(t, θ, r)`; exact-slope extrapolation below the
    /// floor, zero beyond the Gaussian range, `+∞` at `r = 0`.
    pub fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return f64::INFINITY;
        }
        if r >= self.r_ceil {
            return 0.0;
        }
        if r < self.r_floor {
            return self.values[0] + 2.0 * self.gbar_t * (self.r_floor / r).ln();
        }
        let lr = r.ln();
        let n = self.ln_r.len();
        let step = (self.ln_r[n - 1] - self.ln_r[0]) / (n - 1) as f64;
        let pos = ((lr - self.ln_r[0]) / step) as usize;
        let i = pos.clamp(1, n - 3);
        // 4-point Lagrange interpolation of log K2 on the uniform log-r
        // grid: in the Gaussian tail the kernel varies double-exponentially
        // in log r, so interpolating the value directly loses relative
        // accuracy there.
        let x = (lr - self.ln_r[i]) / step;
        let (f0, f1, f2, f3) = (
            self.values[i - 1].ln(),
            self.values[i].ln(),
            self.values[i + 1].ln(),
            self.values[i + 2].ln(),
        );
        let c0 = -x * (x - 1.0) * (x - 2.0) / 6.0;
        let c1 = (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0;
        let c2 = -(x + 1.0) * x * (x - 2.0) / 2.0;
        let c3 = (x + 1.0) * x * (x - 1.0) / 6.0;
        (c0 * f0 + c1 * f1 + c2 * f2 + c3 * f3).exp()
    }

    /// Largest relative interpolation error against direct quadrature at
    /// `n` pseudo-random radii inside the grid range.
    pub fn max_interpolation_error(
        &self,
        table: &GThetaTable,
        n: usize,
        seed: u64,
    ) -> Result<f64> {
        use rand::Rng;
        let mut rng = crate::quadrature::rng::stream(seed, 77);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let lr = self.ln_r[0]
                + rng.gen::<f64>() * (self.ln_r[self.ln_r.len() - 1] - self.ln_r[0]);
            let r = lr.exp();
            let direct = k2(table, self.t, r)?;
            let interp = self.eval(r);
            if direct > 0.0 {
                worst = worst.max(((interp - direct) / direct).abs());
            }
        }
        Ok(worst)
    }
}

/// Radial planar Gaussian `g_a(r)`, with the `a ↓ 0` limit (zero for
/// `r > 0`) so degenerate quadrature nodes cannot produce `0/0`.
#[inline]
fn gauss_radial(a: f64, r: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    heat_kernel_r(a, r * r)
}

/// Double correlation product re-expanded over ordered time chains:
/// `K2(r12)·K2(r23) = (2π)² Σ_{m≥2} ∫ {g_{a₁}(r12) g_{a₂}(r23) + swap} ·
///  G_θ(b₁−a₁) G_θ(b₂−a₂) ∏_{i≥3} G_θ(b_i−a_i)/(a_i−b_{i−2})`.
///
/// Returns `(value, error)` where the error combines per-term quadrature
/// errors and the final term as a truncation tail bound.
pub fn prod2_series(
    table: &GThetaTable,
    t: f64,
    r12: f64,
    r23: f64,
    m_max: usize,
    spec: &QuadSpec,
    seed: u64,
) -> Result<(f64, f64)> {
    check_horizon(t)?;
    if m_max < 2 {
        return Err(domain("prod2_series: m_max must be at least 2"));
    }
    if !(r12 > 0.0 && r23 > 0.0) {
        return Err(domain("prod2_series: separations must be positive"));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut last_term = 0.0;
    for m in 2..=m_max {
        let f = |c: &TimeChain| {
            let pair = gauss_radial(c.a(1), r12) * gauss_radial(c.a(2), r23)
                + gauss_radial(c.a(1), r23) * gauss_radial(c.a(2), r12);
            let mut links = 1.0;
            for i in 3..=c.m() {
                let gap = c.a(i) - c.b(i - 2);
                if gap <= 0.0 {
                    // Degenerate (zero-measure) slice from an extreme node.
                    return 0.0;
                }
                links /= gap;
            }
            two_pi * two_pi * pair * links
        };
        let (term, term_err) = simplex_integral_gtheta(f, t, m, table, spec, seed, m as u64)?;
        sum += term;
        err += term_err;
        last_term = term;
        if m >= 3 && term.abs() < SERIES_REL_TOL * sum.abs() {
            break;
        }
    }
    Ok((sum, err + last_term.abs()))
}

/// Cap on the chain length for the triple-product series; the admissible
/// label-sequence count per term is `2^{m−ℓ}`.
pub const PROD3_M_CAP: usize = 12;

/// One ordered-label term of the triple correlation product: the prefix
/// alternates the first two pair labels, block `ℓ` carries the third, and
/// the tail sums over admissible label sequences with gap factors
/// `1/(a_i − b_{prev(i)})`, `prev(i)` the latest earlier block with the
/// same label.
fn prod3_term(
    chain: &TimeChain,
    r_of: &[f64; 3],
    perm: &[usize; 3], // indices into LABELS for (first, second, third) roles
) -> f64 {
    let m = chain.m();
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    for l in 3..=m {
        // Prefix: blocks 1..l−1 alternate the first two labels; block l
        // carries the third label's separation without a link factor.
        let mut prefix = gauss_radial(chain.a(1), r_of[perm[0]])
            * gauss_radial(chain.a(2), r_of[perm[1]])
            * gauss_radial(chain.a(l), r_of[perm[2]]);
        for i in 3..l {
            let gap = chain.a(i) - chain.b(i - 2);
            if gap <= 0.0 {
                prefix = 0.0;
                break;
            }
            prefix /= gap;
        }
        if prefix == 0.0 {
            continue;
        }
        // Latest block per label after the prefix.
        let mut last = [0usize; 3];
        for j in 1..l {
            let role = if j % 2 == 1 { perm[0] } else { perm[1] };
            last[role] = j;
        }
        last[perm[2]] = l;
        let tail = prod3_tail(chain, l, m, perm[2], &last);
        total += two_pi.powi(3) * prefix * tail;
    }
    total
}

/// Sum over admissible tail label sequences `σ_{l+1..m}` (each differing
/// from its predecessor) of `∏ 1/(a_i − b_{prev(i)})`.
fn prod3_tail(chain: &TimeChain, l: usize, m: usize, prev_label: usize, last: &[usize; 3]) -> f64 {
    if l == m {
        return 1.0;
    }
    let i = l + 1;
    let mut acc = 0.0;
    for label in 0..3 {
        if label == prev_label {
            continue;
        }
        let anchor = last[label];
        debug_assert!(anchor >= 1 && anchor <= i - 2);
        let gap = chain.a(i) - chain.b(anchor);
        if gap <= 0.0 {
            continue;
        }
        let factor = 1.0 / gap;
        let mut next_last = *last;
        next_last[label] = i;
        acc += factor * prod3_tail(chain, i, m, label, &next_last);
    }
    acc
}

/// Triple correlation product series: the symmetrized sum over the six
/// orderings of the pair labels, each evaluated by the ordered-chain
/// expansion with gap-importance Monte Carlo per chain length.
pub fn prod3_series(
    table: &GThetaTable,
    t: f64,
    r12: f64,
    r13: f64,
    r23: f64,
    m_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_horizon(t)?;
    if m_max < 3 {
        return Err(domain("prod3_series: m_max must be at least 3"));
    }
    if m_max > PROD3_M_CAP {
        return Err(Error::Guard(format!(
            "prod3_series: m_max={m_max} exceeds the label-enumeration cap {PROD3_M_CAP}"
        )));
    }
    if !(r12 > 0.0 && r13 > 0.0 && r23 > 0.0) {
        return Err(domain("prod3_series: separations must be positive"));
    }
    let r_of = [r12, r23, r13]; // indexed by LABELS order: 12, 23, 13
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let spec = QuadSpec {
        mc_samples: n_samples,
        ..QuadSpec::default()
    };
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut n_total = 0u64;
    let mut last_term = 0.0f64;
    for m in 3..=m_max {
        let f = |c: &TimeChain| {
            let mut s = 0.0;
            for perm in &perms {
                s += prod3_term(c, &r_of, perm);
            }
            s
        };
        let (term, term_err) = simplex_integral_gtheta(f, t, m, table, &spec, seed, 100 + m as u64)?;
        mean += term;
        var += term_err * term_err;
        n_total += if m >= 4 { n_samples } else { 0 };
        last_term = term;
        if m >= 5 && term.abs() < SERIES_REL_TOL * mean.abs() {
            break;
        }
    }
    Ok(MCEstimate {
        mean,
        stderr: (var + last_term * last_term).sqrt(),
        n: n_total,
        seed,
        stream: 100,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special_fn::Theta;

    fn table0() -> GThetaTable {
        GThetaTable::build(Theta(0.0)).unwrap()
    }

    #[test]
    fn k2_far_separation_envelope() {
        let tb = table0();
        let t: f64 = 1.0;
        let r = 10.0 * t.sqrt();
        let v = k2(&tb, t, r).unwrap();
        let envelope =
            2.0 * std::f64::consts::PI * tb.gbar(t).unwrap() * heat_kernel_r(t, r * r) * t;
        assert!(v <= envelope + 1e-300, "v={v} envelope={envelope}");
        assert!(v < 1e-18);
    }

    #[test]
    fn k2_log_asymptote() {
        // K2/log(1/r) approaches 2Ḡ_θ(t) from one side as r shrinks.
        let tb = table0();
        let t = 1.0;
        let limit = 2.0 * tb.gbar(t).unwrap();
        let mut prev_gap = f64::INFINITY;
        for k in 2..=6 {
            let r = 10f64.powi(-k);
            let ratio = k2(&tb, t, r).unwrap() / (1.0 / r).ln();
            let gap = (ratio - limit).abs();
            assert!(gap < prev_gap, "non-monotone at k={k}: {gap} vs {prev_gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.05 * limit, "final gap {prev_gap}");
    }

    #[test]
    fn k2_theta_and_r_monotone() {
        let tb0 = table0();
        let tb1 = GThetaTable::build(Theta(1.0)).unwrap();
        let t = 0.7;
        let mut prev = f64::INFINITY;
        for &r in &[0.01, 0.1, 0.3, 1.0, 3.0] {
            let v0 = k2(&tb0, t, r).unwrap();
            let v1 = k2(&tb1, t, r).unwrap();
            assert!(v1 > v0, "theta monotonicity failed at r={r}");
            assert!(v0 < prev, "r monotonicity failed at r={r}");
            prev = v0;
        }
        assert!(k2(&tb0, t, 0.0).unwrap().is_infinite());
    }

    #[test]
    fn k_gmc_identities() {
        let tb = table0();
        let t = 1.0;
        for &r in &[0.05, 0.3, 1.0] {
            let k = k_gmc(&tb, t, r).unwrap();
            let back = k.exp_m1();
            let direct = k2(&tb, t, r).unwrap();
            assert!(((back - direct) / direct).abs() < 1e-12);
        }
        // e^{k} ~ C·log(1/r) with C = 2Ḡ_θ(t): trend check.
        let c = 2.0 * tb.gbar(t).unwrap();
        let mut prev_gap = f64::INFINITY;
        for k in 2..=5 {
            let r = 10f64.powi(-k);
            let ratio = k_gmc(&tb, t, r).unwrap().exp() / ((1.0 / r).ln());
            let gap = (ratio - c).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn k3_gmc_structure() {
        let tb = table0();
        let t = 1.0;
        let r = 0.4;
        let k = k2(&tb, t, r).unwrap();
        let eq = k3_gmc(&tb, t, r, r, r).unwrap();
        assert!(((eq - (3.0 * k * k + k * k * k)) / eq).abs() < 1e-12);
        // Permutation symmetry.
        let a = k3_gmc(&tb, t, 0.2, 0.5, 0.8).unwrap();
        let b = k3_gmc(&tb, t, 0.8, 0.2, 0.5).unwrap();
        assert!(((a - b) / a).abs() < 1e-12);
        // All far apart → 0.
        let far = k3_gmc(&tb, t, 50.0, 60.0, 55.0).unwrap();
        assert!(far.abs() < 1e-30);
        // Each summand is dominated by the total.
        assert!(eq >= k * k && eq >= k * k * k);
    }

    #[test]
    fn covariance_full_symmetry_and_front_factor() {
        let tb = table0();
        let t = 1.0;
        let x = crate::Point::new(0.0, 0.0);
        let xp = crate::Point::new(0.5, 0.1);
        let y = crate::Point::new(0.2, -0.3);
        let yp = crate::Point::new(-0.1, 0.4);
        let v1 = k2_covariance_full(&tb, t, x, xp, y, yp).unwrap();
        let v2 = k2_covariance_full(&tb, t, xp, x, yp, y).unwrap();
        assert!(((v1 - v2) / v1).abs() < 1e-12);
        // Shifting both outputs moves only the midpoint Gaussian, at
        // variance-time t/4.
        let shift = crate::Point::new(0.7, 0.0);
        let v3 = k2_covariance_full(&tb, t, x, xp, y + shift, yp + shift).unwrap();
        let mid_in = crate::Point::new(0.25, 0.05);
        let mid = crate::Point::new(0.05, 0.05);
        let g_ratio = heat_kernel_r(t / 4.0, (mid + shift - mid_in).norm2())
            / heat_kernel_r(t / 4.0, (mid - mid_in).norm2());
        assert!(((v3 / v1 - g_ratio) / g_ratio).abs() < 1e-8);
        // Coincident points → infinite signal.
        assert!(k2_covariance_full(&tb, t, x, x, y, yp).unwrap().is_infinite());
    }

    #[test]
    fn covariance_full_marginalizes_to_k2() {
        // Integrating over the two output points leaves π ∬ g_s(rx) G_θ,
        // which is half of K2(t, θ, rx): the kernel counts each unordered
        // output pair once while K2's collapsed form counts both orders.
        let tb = table0();
        let t = 0.8;
        let x = crate::Point::new(0.0, 0.0);
        let xp = crate::Point::new(0.45, 0.0);
        let rx = 0.45;
        // The output depends on (y+y')/2 − midpoint and y'−y only through
        // their norms, so the 4-d integral reduces to two radial passes.
        let (gl, glw) = crate::quadrature::gk::gauss_legendre_unit(40);
        let rho_max_mid = 6.0 * (t / 4.0f64).sqrt();
        let rho_max_diff = 6.0 * t.sqrt();
        let mut total = 0.0;
        for (&u1, &w1) in gl.iter().zip(glw) {
            let rho1 = u1 * rho_max_mid;
            let mid = crate::Point::new(0.225 + rho1, 0.0);
            let mut inner = 0.0;
            for (&u2, &w2) in gl.iter().zip(glw) {
                let rho2 = u2 * rho_max_diff;
                if rho2 == 0.0 {
                    continue;
                }
                let y = crate::Point::new(mid.x - rho2 / 2.0, mid.y);
                let yp = crate::Point::new(mid.x + rho2 / 2.0, mid.y);
                let v = k2_covariance_full(&tb, t, x, xp, y, yp).unwrap();
                inner += w2 * rho_max_diff * rho2 * v;
            }
            total += w1 * rho_max_mid * rho1 * inner;
        }
        let marginal = (2.0 * std::f64::consts::PI).powi(2) * total;
        let half_k2 = 0.5 * k2(&tb, t, rx).unwrap();
        assert!(
            ((marginal - half_k2) / half_k2).abs() < 1e-3,
            "marginal={marginal} half_k2={half_k2}"
        );
    }

    #[test]
    fn k2_table_accuracy() {
        let tb = table0();
        let t = 1.0;
        let k2t = K2Table::build(&tb, t).unwrap();
        let worst = k2t.max_interpolation_error(&tb, 100, 4).unwrap();
        assert!(worst < 1e-6, "worst interpolation error {worst}");
        // Below-floor extrapolation continues the logarithmic slope.
        let r = 1e-10;
        let direct = k2(&tb, t, r).unwrap();
        let interp = k2t.eval(r);
        assert!(((interp - direct) / direct).abs() < 1e-4);
        assert!(k2t.eval(0.0).is_infinite());
        assert!(k2t.eval(100.0) == 0.0);
    }

    #[test]
    fn prod2_matches_k2_product() {
        let tb = table0();
        let t = 1.0;
        let r = 0.3;
        let spec = QuadSpec {
            mc_samples: 200_000,
            ..QuadSpec::default()
        };
        let (val, err) = prod2_series(&tb, t, r, r, 8, &spec, 11).unwrap();
        let oracle = k2(&tb, t, r).unwrap().powi(2);
        let tol = (0.02 * oracle).max(3.0 * err);
        assert!((val - oracle).abs() < tol, "val={val} oracle={oracle} err={err}");
    }

    #[test]
    fn prod2_symmetry_and_partial_sums() {
        let tb = table0();
        let t = 1.0;
        let spec = QuadSpec {
            mc_samples: 50_000,
            ..QuadSpec::default()
        };
        let (v1, _) = prod2_series(&tb, t, 0.3, 0.6, 3, &spec, 5).unwrap();
        let (v2, _) = prod2_series(&tb, t, 0.6, 0.3, 3, &spec, 5).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        let (p2, _) = prod2_series(&tb, t, 0.3, 0.6, 2, &spec, 5).unwrap();
        assert!(p2 < v1, "partial sums must increase: {p2} vs {v1}");
    }

    #[test]
    fn prod3_matches_k2_cube() {
        let tb = table0();
        let t = 1.0;
        let r = 0.5;
        let est = prod3_series(&tb, t, r, r, r, 7, 300_000, 3).unwrap();
        let k = k2(&tb, t, r).unwrap();
        let oracle = k * k * k;
        let tol = (0.05 * oracle).max(3.0 * est.stderr);
        assert!(
            (est.mean - oracle).abs() < tol,
            "mean={} oracle={oracle} stderr={}",
            est.mean,
            est.stderr
        );
    }

    #[test]
    fn prod3_guards() {
        let tb = table0();
        assert!(matches!(
            prod3_series(&tb, 1.0, 0.5, 0.5, 0.5, 13, 10, 0),
            Err(Error::Guard(_))
        ));
        assert!(prod3_series(&tb, 1.0, 0.5, 0.5, 0.5, 2, 10, 0).is_err());
    }

    #[test]
    fn prod3_tail_count() {
        // With unit gap factors the tail sum counts admissible label
        // sequences: 2^{m−l}.
        let m = 7;
        let l = 4;
        let times: Vec<f64> = (1..=2 * m).map(|k| k as f64 / (2 * m + 1) as f64).collect();
        let chain = TimeChain::new(1.0, times).unwrap();
        // Count by brute force enumeration over all sequences.
        let mut count = 0u64;
        let seqs = 3usize.pow((m - l) as u32);
        for code in 0..seqs {
            let mut c = code;
            let mut prev = 2usize; // third role label at block l
            let mut ok = true;
            for _ in (l + 1)..=m {
                let lab = c % 3;
                c /= 3;
                if lab == prev {
                    ok = false;
                    break;
                }
                prev = lab;
            }
            if ok {
                count += 1;
            }
        }
        assert_eq!(count, 1u64 << (m - l));
        // And the recursive tail with anchors produces a positive value
        // built from exactly those sequences.
        let last = [1usize, 2, l];
        let v = prod3_tail(&chain, l, m, 2, &last);
        assert!(v > 0.0);
    }
}
