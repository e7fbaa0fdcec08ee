//! Integration over the ordered time simplex
//! `0 < a_1 < b_1 < ... < a_m < b_m < t`.
//!
//! Deterministic nested quadrature for `m ≤ 3` (tensor Gauss-Legendre after
//! mapping to the unit cube), importance-sampled Monte Carlo for `m ≥ 4`.
//! The renewal weight `∏ G_θ(b_i − a_i)` is handled by substituting each
//! gap through the antiderivative `Ḡ_θ`, which removes the `1/(g log² g)`
//! endpoint spike both from the deterministic grid and from the sampler.

use crate::error::{domain, Result};
use crate::quadrature::gk::{gauss_legendre_unit, tanh_sinh_unit, QuadSpec};
use crate::quadrature::rng::{run_mc, MCEstimate};
use crate::special_fn::GThetaTable;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Ordered block times `(a_1, b_1, ..., a_m, b_m)` inside `(0, t)`.
#[derive(Debug, Clone)]
pub struct TimeChain {
    pub t: f64,
    pub times: Vec<f64>,
}

impl TimeChain {
    pub fn new(t: f64, times: Vec<f64>) -> Result<TimeChain> {
        if !(t > 0.0) || times.len() < 2 || times.len() % 2 != 0 {
            return Err(domain("time chain: need an even, nonempty time vector"));
        }
        let mut prev = 0.0;
        for &x in &times {
            if !(x > prev) {
                return Err(domain("time chain: ordering violated"));
            }
            prev = x;
        }
        if !(prev < t) {
            return Err(domain("time chain: must end before the horizon"));
        }
        Ok(TimeChain { t, times })
    }

    pub fn m(&self) -> usize {
        self.times.len() / 2
    }

    /// `a_i`, 1-indexed.
    pub fn a(&self, i: usize) -> f64 {
        self.times[2 * (i - 1)]
    }

    /// `b_i`, 1-indexed.
    pub fn b(&self, i: usize) -> f64 {
        self.times[2 * i - 1]
    }

    /// Gap `b_i − a_i`, 1-indexed.
    pub fn gap(&self, i: usize) -> f64 {
        self.b(i) - self.a(i)
    }
}

/// Proposal distribution for [`sample_time_chain`].
#[derive(Clone, Copy)]
pub enum ImportanceProfile<'a> {
    /// Uniform on the `2m`-simplex (sorted uniforms).
    Uniform,
    /// Gaps drawn proportional to `G_θ` through the inverse antiderivative;
    /// block starts uniform in the remaining budget.
    GTheta(&'a GThetaTable),
}

/// Draw a chain and return `(chain, 1/proposal_density)`.
pub fn sample_time_chain(
    t: f64,
    m: usize,
    profile: ImportanceProfile<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<(TimeChain, f64)> {
    if !(t > 0.0) {
        return Err(domain("sample_time_chain: horizon must be positive"));
    }
    if m < 1 {
        return Err(domain("sample_time_chain: m must be at least 1"));
    }
    match profile {
        ImportanceProfile::Uniform => {
            let mut times: Vec<f64> = (0..2 * m).map(|_| rng.gen::<f64>() * t).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut weight = 1.0;
            for k in 1..=2 * m {
                weight *= t / k as f64;
            }
            Ok((TimeChain { t, times }, weight))
        }
        ImportanceProfile::GTheta(table) => {
            let (chain, gweight) = sample_chain_gweighted(t, m, table, rng)?;
            let mut weight = gweight;
            for i in 1..=m {
                weight /= table.g(chain.gap(i))?;
            }
            Ok((chain, weight))
        }
    }
}

/// Draw a chain with gap density proportional to `G_θ` and return
/// `(chain, weight·∏G_θ(gap_i))`, i.e. the importance weight with the
/// renewal factors already absorbed.
pub fn sample_chain_gweighted(
    t: f64,
    m: usize,
    table: &GThetaTable,
    rng: &mut ChaCha8Rng,
) -> Result<(TimeChain, f64)> {
    let mut times = Vec::with_capacity(2 * m);
    let mut cursor = 0.0;
    let mut gweight = 1.0;
    for _ in 0..m {
        let rem = t - cursor;
        // Draw the start offset through its complement so the remaining cap
        // can never round to exactly zero.
        let cap = rem * (1.0 - rng.gen::<f64>());
        let s = rem - cap;
        let wbar = table.gbar(cap)?;
        let g = table.gbar_inv(rng.gen::<f64>() * wbar)?;
        gweight *= rem * wbar;
        let a = cursor + s;
        // The gap density has ~1/(g log² g) mass all the way down, so gaps
        // below the ULP of `a` are drawn with probability Ḡ_θ(ulp) ≈ 3%.
        // Round the block end *up* to the next representable time instead
        // of letting it collapse onto `a`: consumers weight the gap through
        // the same represented value `b − a` on both sides of the
        // importance ratio, so only a sub-ULP diffusion time is altered,
        // while a collapsed chain would silently drop that 3% of the mass.
        let mut b = a + g;
        if b <= a {
            b = a.next_up();
        }
        times.push(a);
        times.push(b);
        cursor = b;
    }
    Ok((TimeChain { t, times }, gweight))
}

/// Deterministic nested tensor quadrature of `f` over the `2m`-simplex.
/// Returns `(value, error_estimate)` where the error is the difference
/// against a coarser tensor order.
fn simplex_tensor(
    f: &(dyn Fn(&TimeChain) -> f64 + Sync),
    t: f64,
    m: usize,
    order: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre_unit(order);
    let mut times = vec![0.0; 2 * m];
    fn recurse(
        f: &(dyn Fn(&TimeChain) -> f64 + Sync),
        t: f64,
        dim: usize,
        times: &mut Vec<f64>,
        level: usize,
        cursor: f64,
        nodes: &[f64],
        weights: &[f64],
    ) -> f64 {
        let rem = t - cursor;
        if level == dim {
            let chain = TimeChain {
                t,
                times: times.clone(),
            };
            return f(&chain);
        }
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            let next = cursor + x * rem;
            times[level] = next;
            acc += w * rem
                * recurse(f, t, dim, times, level + 1, next, nodes, weights);
        }
        acc
    }
    recurse(f, t, 2 * m, &mut times, 0, 0.0, nodes, weights)
}

/// Tensor orders per `m` for the deterministic path: `(fine, coarse)`.
fn tensor_orders(m: usize) -> (usize, usize) {
    match m {
        1 => (48, 32),
        2 => (24, 16),
        _ => (10, 7),
    }
}

/// Integral of `f` over the ordered simplex. Deterministic tensor
/// quadrature for `m ≤ 3`, uniform-profile Monte Carlo for `m ≥ 4`.
pub fn simplex_integral(
    f: impl Fn(&TimeChain) -> f64 + Sync,
    t: f64,
    m: usize,
    spec: &QuadSpec,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(domain("simplex_integral: m must be at least 1"));
    }
    if m <= 3 {
        let (fine, coarse) = tensor_orders(m);
        let v1 = simplex_tensor(&f, t, m, fine);
        let v0 = simplex_tensor(&f, t, m, coarse);
        Ok((v1, (v1 - v0).abs()))
    } else {
        let est = run_mc(seed, stream, spec.mc_samples, |rng| {
            let (chain, w) =
                sample_time_chain(t, m, ImportanceProfile::Uniform, rng).expect("valid horizon");
            w * f(&chain)
        });
        Ok((est.mean, est.stderr))
    }
}

/// Integral over the simplex of `f(chain) · ∏ G_θ(b_i − a_i)`, with the
/// renewal weight handled by the `Ḡ_θ` substitution.
///
/// Deterministic for `m ≤ 3`; Monte Carlo (gap importance sampling) for
/// `m ≥ 4`. Returns `(value, error)`.
pub fn simplex_integral_gtheta(
    f: impl Fn(&TimeChain) -> f64 + Sync,
    t: f64,
    m: usize,
    table: &GThetaTable,
    spec: &QuadSpec,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(domain("simplex_integral_gtheta: m must be at least 1"));
    }
    if m <= 3 {
        let (fine, coarse) = tensor_orders(m);
        let v1 = gtheta_tensor(&f, t, m, table, fine)?;
        let v0 = gtheta_tensor(&f, t, m, table, coarse)?;
        Ok((v1, (v1 - v0).abs()))
    } else {
        let est = mc_simplex_gtheta(&f, t, m, table, spec.mc_samples, seed, stream)?;
        Ok((est.mean, est.stderr))
    }
}

/// Monte Carlo form of [`simplex_integral_gtheta`], exposing the full
/// estimate.
pub fn mc_simplex_gtheta(
    f: &(dyn Fn(&TimeChain) -> f64 + Sync),
    t: f64,
    m: usize,
    table: &GThetaTable,
    samples: u64,
    seed: u64,
    stream: u64,
) -> Result<MCEstimate> {
    Ok(run_mc(seed, stream, samples, |rng| {
        let (chain, gw) = sample_chain_gweighted(t, m, table, rng).expect("valid horizon");
        gw * f(&chain)
    }))
}

/// Deterministic tensor pass with the gap substitution: variables alternate
/// between a uniform start offset and the transformed gap `w = Ḡ_θ(g)`.
fn gtheta_tensor(
    f: &(dyn Fn(&TimeChain) -> f64 + Sync),
    t: f64,
    m: usize,
    table: &GThetaTable,
    order: usize,
) -> Result<f64> {
    // The start offsets get tanh-sinh nodes: the factor Ḡ_θ(cap) has all
    // derivatives unbounded as the remaining budget shrinks to zero, which
    // defeats plain Gauss-Legendre at the far endpoint. The transformed gap
    // variable is smooth and keeps Gauss-Legendre.
    let ts = tanh_sinh_unit(2 * order);
    let (gl_nodes, gl_weights) = gauss_legendre_unit(order);

    struct Ctx<'a> {
        f: &'a (dyn Fn(&TimeChain) -> f64 + Sync),
        t: f64,
        m: usize,
        table: &'a GThetaTable,
        ts: &'a (Vec<f64>, Vec<f64>, Vec<f64>),
        gl_nodes: &'a [f64],
        gl_weights: &'a [f64],
    }

    fn recurse(ctx: &Ctx<'_>, times: &mut Vec<f64>, block: usize, cursor: f64) -> Result<f64> {
        if block == ctx.m {
            let chain = TimeChain {
                t: ctx.t,
                times: times.clone(),
            };
            return Ok((ctx.f)(&chain));
        }
        let rem = ctx.t - cursor;
        if rem <= 0.0 {
            // Rounding at an extreme node exhausted the budget; the slice
            // has zero measure.
            return Ok(0.0);
        }
        let (sx, sxc, sw) = ctx.ts;
        let mut acc = 0.0;
        for ((&xs, &xsc), &ws) in sx.iter().zip(sxc).zip(sw) {
            let a = cursor + xs * rem;
            times[2 * block] = a;
            let cap = xsc * rem;
            if cap <= 0.0 {
                continue;
            }
            let wbar = ctx.table.gbar(cap)?;
            let mut inner = 0.0;
            for (&xw, &ww) in ctx.gl_nodes.iter().zip(ctx.gl_weights) {
                let g = ctx.table.gbar_inv(xw * wbar)?;
                // Same sub-ULP rounding as the sampler: keep the chain
                // strictly increasing when the gap underflows against `a`.
                let mut b = a + g;
                if b <= a {
                    b = a.next_up();
                }
                times[2 * block + 1] = b;
                inner += ww * recurse(ctx, times, block + 1, b)?;
            }
            acc += ws * rem * wbar * inner;
        }
        Ok(acc)
    }

    let ctx = Ctx {
        f,
        t,
        m,
        table,
        ts,
        gl_nodes,
        gl_weights,
    };
    let mut times = vec![0.0; 2 * m];
    recurse(&ctx, &mut times, 0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::rng::stream;
    use crate::special_fn::Theta;

    #[test]
    fn chain_validation() {
        assert!(TimeChain::new(1.0, vec![0.1, 0.2, 0.3, 0.4]).is_ok());
        assert!(TimeChain::new(1.0, vec![0.2, 0.1]).is_err());
        assert!(TimeChain::new(0.3, vec![0.1, 0.2, 0.3, 0.4]).is_err());
        assert!(TimeChain::new(1.0, vec![0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn uniform_chain_order_statistics() {
        // m=1: (a1, b1) uniform on the 2-simplex; E[a1] = t/3.
        let t = 0.8;
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (c, _) = sample_time_chain(t, 1, ImportanceProfile::Uniform, &mut rng).unwrap();
            sum += c.a(1);
            sumsq += c.a(1) * c.a(1);
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - t / 3.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn uniform_weight_unbiased_for_volume() {
        let t = 0.7;
        let est = run_mc(3, 1, 50_000, |rng| {
            let (_, w) = sample_time_chain(t, 1, ImportanceProfile::Uniform, rng).unwrap();
            w
        });
        let exact = t * t / 2.0;
        // The m=1 uniform weight is the constant simplex volume.
        assert!((est.mean - exact).abs() < 1e-12);
    }

    #[test]
    fn simplex_volume_m2() {
        let spec = QuadSpec::default();
        let (v, _) = simplex_integral(|_| 1.0, 1.0, 2, &spec, 0, 0).unwrap();
        assert!((v - 1.0 / 24.0).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn gtheta_weighted_m1_matches_collapsed_form() {
        // ∫_{0<a<b<t} G(b−a) da db = ∫₀ᵗ Ḡ(t−a) da, both computable.
        let table = GThetaTable::build(Theta(0.0)).unwrap();
        let t = 1.0;
        let spec = QuadSpec::default();
        let (v, e) = simplex_integral_gtheta(|_| 1.0, t, 1, &table, &spec, 0, 0).unwrap();
        let (oracle, _) = crate::quadrature::gk::integrate_1d(
            |a| table.gbar(t - a).unwrap(),
            0.0,
            t - 1e-13,
            &QuadSpec::with_tol(1e-12, 1e-10),
        )
        .unwrap();
        assert!(
            ((v - oracle) / oracle).abs() < 1e-6,
            "v={v} oracle={oracle} err={e}"
        );
    }

    #[test]
    fn gtheta_mc_matches_deterministic() {
        let table = GThetaTable::build(Theta(0.5)).unwrap();
        let t = 0.9;
        // Smooth extra factor to exercise the chain plumbing.
        let f = |c: &TimeChain| (-c.a(1)).exp() * (1.0 + c.b(2));
        let spec = QuadSpec::default();
        let (det, _) = simplex_integral_gtheta(f, t, 2, &table, &spec, 0, 0).unwrap();
        let est = mc_simplex_gtheta(&f, t, 2, &table, 400_000, 5, 2).unwrap();
        assert!(
            (est.mean - det).abs() < 3.0 * est.stderr,
            "mc={} det={} se={}",
            est.mean,
            det,
            est.stderr
        );
    }

    #[test]
    fn mc_m4_vs_coarse_tensor_smooth() {
        // Smooth integrand, m=4: MC against a coarse 8-d tensor pass.
        let f = |c: &TimeChain| {
            let mut p = 1.0;
            for i in 1..=c.m() {
                p *= 1.0 + c.gap(i);
            }
            p
        };
        let spec = QuadSpec {
            mc_samples: 200_000,
            ..Default::default()
        };
        let (mc, se) = simplex_integral(f, 1.0, 4, &spec, 9, 0).unwrap();
        let coarse = simplex_tensor(&f, 1.0, 4, 6);
        assert!((mc - coarse).abs() < 3.0 * se + 1e-4, "mc={mc} coarse={coarse}");
    }

    use crate::quadrature::rng::run_mc;
}
