//! h-th moments of the flow and of its matched log-normal surrogate.
//!
//! The h-th moment kernel is a series over chains of pair interactions:
//! each block first lets every coordinate diffuse and pins one pair
//! together (constrained evolution), then lets the merged pair carry a
//! renewal weight while everything diffuses again (replica evolution).
//! Consecutive blocks must act on distinct pairs. All spatial integrals
//! are Gaussian and are evaluated exactly by conditioning a joint Gaussian
//! state, so Monte Carlo error enters only through the time chains, the
//! initial points, and (for long chains) the pairing sequences.
//!
//! The surrogate is the log-normal multiplicative-chaos measure matched to
//! the first two moments; its h-th moment is a plain expectation of
//! `∏_{i<j} (1 + K2(|x_i − x_j|))` over independent Gaussian points.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::kernels::K2Table;
use crate::num::Pt;
use crate::quadrature::rng::{run_mc, run_mc_multi, standard_normal, MCEstimate};
use crate::quadrature::simplex::{sample_time_chain, ImportanceProfile, TimeChain};
use crate::special_fn::GThetaTable;

/// Largest supported point count for the moment machinery.
pub const MAX_H: usize = 5;

/// Full pairing enumeration is used per chain length while the sequence
/// count stays at or below this; beyond it, sequences are sampled
/// uniformly and weighted by the count.
pub const PAIRING_ENUM_MAX: u64 = 10_000;

/// Hard cap on the number of sequences [`enumerate_pairings`] will
/// materialize.
pub const PAIRING_COUNT_CAP: u64 = 10_000_000;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn check_h(h: usize) -> Result<()> {
    if !(2..=MAX_H).contains(&h) {
        return Err(domain(format!("point count h={h} must lie in 2..={MAX_H}")));
    }
    Ok(())
}

/// A chain of pair interactions: one pair per block, consecutive pairs
/// distinct. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingSequence {
    pub h: usize,
    /// `(i, j)` with `i < j < h`; `pairs[l] != pairs[l-1]` for `l >= 1`.
    pub pairs: Vec<(usize, usize)>,
}

/// All `C(h,2)` index pairs in lexicographic order.
fn all_pairs(h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(h * (h - 1) / 2);
    for i in 0..h {
        for j in (i + 1)..h {
            out.push((i, j));
        }
    }
    out
}

/// Number of admissible pairing sequences of length `m`:
/// `C(h,2)·(C(h,2)−1)^{m−1}` (zero for `h = 2, m ≥ 2`, where no second
/// pair is available).
pub fn pairing_count(h: usize, m: usize) -> Result<u64> {
    check_h(h)?;
    if m < 1 {
        return Err(domain("pairing_count: m must be at least 1"));
    }
    let p = (h * (h - 1) / 2) as u128;
    let mut count = p;
    for _ in 1..m {
        count *= p - 1;
        if count > u64::MAX as u128 {
            return Err(Error::Guard(format!(
                "pairing_count: sequence count for h={h}, m={m} overflows"
            )));
        }
    }
    Ok(count as u64)
}

/// Materialize every admissible pairing sequence of length `m`.
pub fn enumerate_pairings(h: usize, m: usize) -> Result<Vec<PairingSequence>> {
    let count = pairing_count(h, m)?;
    if count > PAIRING_COUNT_CAP {
        return Err(Error::Guard(format!(
            "enumerate_pairings: {count} sequences for h={h}, m={m} exceed the cap {PAIRING_COUNT_CAP}"
        )));
    }
    let pairs = all_pairs(h);
    let mut out = Vec::with_capacity(count as usize);
    let mut stack: Vec<(usize, usize)> = Vec::with_capacity(m);
    fn recurse(
        pairs: &[(usize, usize)],
        h: usize,
        m: usize,
        stack: &mut Vec<(usize, usize)>,
        out: &mut Vec<PairingSequence>,
    ) {
        if stack.len() == m {
            out.push(PairingSequence {
                h,
                pairs: stack.clone(),
            });
            return;
        }
        for &p in pairs {
            if stack.last() == Some(&p) {
                continue;
            }
            stack.push(p);
            recurse(pairs, h, m, stack, out);
            stack.pop();
        }
    }
    recurse(&pairs, h, m, &mut stack, &mut out);
    debug_assert_eq!(out.len() as u64, count);
    Ok(out)
}

/// Uniform draw from the admissible sequences of length `m`.
fn sample_pairing_sequence(
    pairs: &[(usize, usize)],
    h: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> PairingSequence {
    let p = pairs.len();
    let mut seq = Vec::with_capacity(m);
    let mut prev = rng.gen_range(0..p);
    seq.push(pairs[prev]);
    for _ in 1..m {
        let k = rng.gen_range(0..p - 1);
        let idx = if k >= prev { k + 1 } else { k };
        seq.push(pairs[idx]);
        prev = idx;
    }
    PairingSequence { h, pairs: seq }
}

/// Joint Gaussian law of `h` planar points together with an accumulated
/// scalar weight. Both planar axes are independent and share the same
/// scalar covariance, so the state stores one `h×h` matrix and a planar
/// mean per point. The weight is kept in log form; every update multiplies
/// it by a positive factor.
#[derive(Debug, Clone, Copy)]
pub struct GaussianState {
    h: usize,
    mean: [Pt<f64>; MAX_H],
    cov: [[f64; MAX_H]; MAX_H],
    ln_weight: f64,
}

impl GaussianState {
    /// Deterministic start at the given points, weight 1.
    pub fn new(points: &[Pt<f64>]) -> Result<GaussianState> {
        check_h(points.len())?;
        let mut mean = [Pt::origin(); MAX_H];
        mean[..points.len()].copy_from_slice(points);
        Ok(GaussianState {
            h: points.len(),
            mean,
            cov: [[0.0; MAX_H]; MAX_H],
            ln_weight: 0.0,
        })
    }

    /// Start from `h` independent centered Gaussian points of variance-time
    /// `delta`, weight 1: the `g_δ` average is carried exactly by the
    /// state instead of being sampled. This also keeps every later
    /// conditioning variance at least `2δ` above the pure diffusion
    /// contribution, which removes the heavy tail that point sampling
    /// would put on the first pinning weight.
    pub fn new_gaussian(h: usize, delta: f64) -> Result<GaussianState> {
        check_h(h)?;
        if !(delta > 0.0) {
            return Err(domain("new_gaussian: delta must be positive"));
        }
        let mut cov = [[0.0; MAX_H]; MAX_H];
        for (l, row) in cov.iter_mut().enumerate().take(h) {
            row[l] = delta;
        }
        Ok(GaussianState {
            h,
            mean: [Pt::origin(); MAX_H],
            cov,
            ln_weight: 0.0,
        })
    }

    pub fn weight(&self) -> f64 {
        self.ln_weight.exp()
    }

    pub fn mean(&self, i: usize) -> Pt<f64> {
        self.mean[i]
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i][j]
    }

    fn check_pair(&self, pair: (usize, usize)) -> Result<(usize, usize)> {
        let (i, j) = pair;
        if i >= j || j >= self.h {
            return Err(domain(format!(
                "pair ({i},{j}) is not an ordered pair below h={}",
                self.h
            )));
        }
        Ok((i, j))
    }

    /// Constrained evolution: every coordinate diffuses for `elapsed/2`
    /// variance-time, then the pair is pinned together. The weight picks up
    /// the planar density of `X_i − X_j` at zero and the state is
    /// conditioned on that event, after which `X_i ≡ X_j` exactly.
    pub fn apply_q(&mut self, pair: (usize, usize), elapsed: f64) -> Result<()> {
        let (i, j) = self.check_pair(pair)?;
        if !(elapsed > 0.0) {
            return Err(domain("apply_q: elapsed time must be positive"));
        }
        let h = self.h;
        for l in 0..h {
            self.cov[l][l] += 0.5 * elapsed;
        }
        // Diffusion adds `elapsed/2` to each of the two difference
        // variances, so the conditioning variance is at least `elapsed`.
        let sigma2 = self.cov[i][i] + self.cov[j][j] - 2.0 * self.cov[i][j];
        if !(sigma2 > 0.0) {
            return Err(Error::Invariant(
                "apply_q: conditioning covariance is singular".into(),
            ));
        }
        let mu = self.mean[i] - self.mean[j];
        self.ln_weight -= (TWO_PI * sigma2).ln() + mu.norm2() / (2.0 * sigma2);
        let mut v = [0.0; MAX_H];
        for l in 0..h {
            v[l] = self.cov[l][i] - self.cov[l][j];
        }
        for l in 0..h {
            for k in 0..h {
                self.cov[l][k] -= v[l] * v[k] / sigma2;
            }
            self.mean[l] = self.mean[l] - mu.scale(v[l] / sigma2);
        }
        // The conditioned law has X_j ≡ X_i; overwrite the j-entries with
        // the i-entries so rounding drift cannot accumulate over blocks.
        for l in 0..h {
            self.cov[l][j] = self.cov[l][i];
            self.cov[j][l] = self.cov[i][l];
        }
        self.cov[j][j] = self.cov[i][i];
        self.mean[j] = self.mean[i];
        Ok(())
    }

    /// Replica evolution on an already-merged pair: the weight picks up the
    /// renewal factor `G_θ(gap)`, the merged coordinate diffuses for
    /// `gap/4` variance-time and every other coordinate for `gap/2`.
    pub fn apply_g(&mut self, pair: (usize, usize), gap: f64, table: &GThetaTable) -> Result<()> {
        let (i, j) = self.check_pair(pair)?;
        if !(gap > 0.0 && gap <= 1.0) {
            return Err(domain("apply_g: gap must lie in (0, 1]"));
        }
        let scale = 1.0 + self.cov[i][i].abs() + self.cov[j][j].abs();
        let diff_var = self.cov[i][i] + self.cov[j][j] - 2.0 * self.cov[i][j];
        let mean_gap = (self.mean[i] - self.mean[j]).norm2();
        if diff_var.abs() > 1e-9 * scale
            || mean_gap > 1e-16 * (1.0 + self.mean[i].norm2() + self.mean[j].norm2())
        {
            return Err(domain("apply_g: pair is not merged"));
        }
        self.ln_weight += table.g(gap)?.ln();
        for l in 0..self.h {
            if l != i && l != j {
                self.cov[l][l] += 0.5 * gap;
            }
        }
        self.cov[i][i] += 0.25 * gap;
        self.cov[j][j] += 0.25 * gap;
        self.cov[i][j] += 0.25 * gap;
        self.cov[j][i] += 0.25 * gap;
        Ok(())
    }
}

/// Exact spatial weight of one pairing sequence along one time chain,
/// starting from deterministic points: the product of all conditioning
/// densities and renewal factors. Chains with a degenerate (zero-length)
/// diffusion step contribute zero; they have zero measure under every
/// sampler used here.
pub fn pairing_chain_weight(
    points: &[Pt<f64>],
    chain: &TimeChain,
    seq: &PairingSequence,
    table: &GThetaTable,
) -> Result<f64> {
    if seq.h != points.len() {
        return Err(domain(
            "pairing_chain_weight: sequence and points disagree on h",
        ));
    }
    chain_weight_from(GaussianState::new(points)?, chain, seq, table)
}

/// Run one pairing sequence along one time chain from an arbitrary
/// starting state and return the accumulated weight.
fn chain_weight_from(
    mut state: GaussianState,
    chain: &TimeChain,
    seq: &PairingSequence,
    table: &GThetaTable,
) -> Result<f64> {
    if seq.pairs.len() != chain.m() {
        return Err(domain(
            "pairing_chain_weight: sequence length must match the chain",
        ));
    }
    if seq.h != state.h {
        return Err(domain(
            "pairing_chain_weight: sequence and state disagree on h",
        ));
    }
    let mut prev_b = 0.0;
    for (l, &pair) in seq.pairs.iter().enumerate() {
        let a = chain.a(l + 1);
        let b = chain.b(l + 1);
        let elapsed = a - prev_b;
        if elapsed <= 0.0 || b <= a {
            return Ok(0.0);
        }
        state.apply_q(pair, elapsed)?;
        state.apply_g(pair, b - a, table)?;
        prev_b = b;
    }
    Ok(state.weight())
}

/// Per-chain-length strategy for the pairing sum.
enum PairingStrategy {
    /// No admissible sequence (h = 2 with m ≥ 2); the term vanishes.
    Empty,
    /// Sum over every sequence.
    Enumerate(Vec<PairingSequence>),
    /// One uniform sequence per sample, weighted by the sequence count.
    Sample { count: f64 },
}

fn pairing_strategies(h: usize, m_max: usize) -> Result<Vec<PairingStrategy>> {
    let p = (h * (h - 1) / 2) as f64;
    (1..=m_max)
        .map(|m| {
            let exact = pairing_count(h, m).ok();
            match exact {
                Some(0) => Ok(PairingStrategy::Empty),
                Some(c) if c <= PAIRING_ENUM_MAX => {
                    Ok(PairingStrategy::Enumerate(enumerate_pairings(h, m)?))
                }
                _ => Ok(PairingStrategy::Sample {
                    count: p * (p - 1.0).powi(m as i32 - 1),
                }),
            }
        })
        .collect()
}

/// Monte Carlo estimate of the h-th moment `E[(2 Z_t(g_δ))^h]` truncated at
/// chain length `m_max`: time chains are drawn by renewal-weighted
/// importance sampling while the entire spatial integral — including the
/// `g_δ` average over the initial points — is evaluated exactly through
/// the Gaussian state. The reported standard error folds in the magnitude
/// of the last chain-length term as a truncation bound.
pub fn shf_moment_mc(
    table: &GThetaTable,
    h: usize,
    t: f64,
    delta: f64,
    m_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_h(h)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain("shf_moment_mc: horizon must lie in (0, 1]"));
    }
    if !(delta > 0.0) {
        return Err(domain("shf_moment_mc: delta must be positive"));
    }
    const STREAM: u64 = 400;
    if m_max == 0 {
        // Truncating before the first interaction leaves (E[2 Z(g_δ)])^h = 1.
        return Ok(MCEstimate {
            mean: 1.0,
            stderr: 0.0,
            n: 0,
            seed,
            stream: STREAM,
        });
    }
    let strategies = pairing_strategies(h, m_max)?;
    let pairs = all_pairs(h);
    let base = GaussianState::new_gaussian(h, delta)?;
    let est = run_mc_multi::<2, _>(seed, STREAM, n_samples, |rng| {
        let mut total = 1.0;
        let mut last = 0.0;
        for (idx, strat) in strategies.iter().enumerate() {
            let m = idx + 1;
            if matches!(strat, PairingStrategy::Empty) {
                continue;
            }
            // Degenerate draws are zero-measure; score them as zero.
            let Ok((chain, w_time)) =
                sample_time_chain(t, m, ImportanceProfile::GTheta(table), rng)
            else {
                continue;
            };
            let pair_sum = match strat {
                PairingStrategy::Empty => 0.0,
                PairingStrategy::Enumerate(seqs) => seqs
                    .iter()
                    .map(|s| chain_weight_from(base, &chain, s, table).unwrap_or(0.0))
                    .sum(),
                PairingStrategy::Sample { count } => {
                    let seq = sample_pairing_sequence(&pairs, h, m, rng);
                    count * chain_weight_from(base, &chain, &seq, table).unwrap_or(0.0)
                }
            };
            let term = TWO_PI.powi(m as i32) * w_time * pair_sum;
            total += term;
            // Truncation tail: only the final chain length counts. When the
            // series terminates earlier (h = 2 has no second pair), the
            // truncation is exact and the tail stays zero.
            if m == strategies.len() {
                last = term;
            }
        }
        [total, last]
    });
    let tail = est.mean[1].abs();
    Ok(MCEstimate {
        mean: est.mean[0],
        stderr: (est.cov[0][0].max(0.0) + tail * tail).sqrt(),
        n: est.n,
        seed,
        stream: STREAM,
    })
}

fn gmc_pair_product(k2: &K2Table, points: &[Pt<f64>]) -> f64 {
    let mut prod = 1.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            // Exact coincidence has probability zero; the kernel table
            // continues below its floor with the exact logarithmic slope,
            // so a subnormal clamp keeps the factor finite.
            let r = (points[i] - points[j]).norm().max(f64::MIN_POSITIVE);
            prod *= 1.0 + k2.eval(r);
        }
    }
    prod
}

/// Monte Carlo estimate of the h-th moment of the matched log-normal
/// measure, `E[(2 M_t(g_δ))^h] = E[∏_{i<j} (1 + K2(|x_i − x_j|))]` with
/// independent `x_i ~ g_δ`.
pub fn gmc_moment_mc(
    k2: &K2Table,
    h: usize,
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if h < 2 {
        return Err(domain("gmc_moment_mc: h must be at least 2"));
    }
    if h > MAX_H {
        return Err(domain(format!("gmc_moment_mc: h={h} exceeds {MAX_H}")));
    }
    if !(delta > 0.0) {
        return Err(domain("gmc_moment_mc: delta must be positive"));
    }
    let sd = delta.sqrt();
    Ok(run_mc(seed, 410, n_samples, |rng| {
        let mut points = [Pt::origin(); MAX_H];
        for p in points.iter_mut().take(h) {
            *p = Pt::new(sd * standard_normal(rng), sd * standard_normal(rng));
        }
        gmc_pair_product(k2, &points[..h])
    }))
}

/// One row of the factorization table: how far the h-th log-normal moment
/// sits from the power of the second moment at a given smoothing scale.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationRow {
    pub delta: f64,
    /// `E[(2M)^h] / E[(2M)^2]^{C(h,2)}`, estimated with common samples.
    pub ratio: f64,
    pub stderr: f64,
    pub moment_h: f64,
    pub moment_2: f64,
    /// `(C·log(1/√δ))^{C(h,2)}` with `C = Ḡ_θ(t)/π`, the leading-order
    /// size of both sides, shown for scale.
    pub gaussian_prediction: f64,
}

/// Factorization check for the log-normal moments: as `δ ↓ 0` the ratio
/// `E[(2M(g_δ))^h] / E[(2M(g_δ))^2]^{C(h,2)}` tends to 1. Numerator and
/// denominator share samples (the denominator uses the first two of the
/// `h` points), so `h = 2` gives ratio exactly 1.
pub fn factorization_report(
    table: &GThetaTable,
    k2: &K2Table,
    h: usize,
    delta_list: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<Vec<FactorizationRow>> {
    check_h(h)?;
    let c_pairs = (h * (h - 1) / 2) as f64;
    let c_const = table.gbar(k2.t)? / std::f64::consts::PI;
    let sd_rows: Result<Vec<FactorizationRow>> = delta_list
        .iter()
        .enumerate()
        .map(|(idx, &delta)| {
            if !(delta > 0.0) {
                return Err(domain("factorization_report: delta must be positive"));
            }
            let sd = delta.sqrt();
            let est = run_mc_multi::<2, _>(seed, 420 + idx as u64, n_samples, |rng| {
                let mut points = [Pt::origin(); MAX_H];
                for p in points.iter_mut().take(h) {
                    *p = Pt::new(sd * standard_normal(rng), sd * standard_normal(rng));
                }
                [
                    gmc_pair_product(k2, &points[..h]),
                    gmc_pair_product(k2, &points[..2]),
                ]
            });
            let (a, b) = (est.mean[0], est.mean[1]);
            let ratio = a / b.powf(c_pairs);
            // Delta method for a / b^c under the joint sample covariance.
            let var = ratio
                * ratio
                * (est.cov[0][0] / (a * a) + c_pairs * c_pairs * est.cov[1][1] / (b * b)
                    - 2.0 * c_pairs * est.cov[0][1] / (a * b));
            let prediction = (c_const * (1.0 / sd).ln()).powf(c_pairs);
            Ok(FactorizationRow {
                delta,
                ratio,
                stderr: var.max(0.0).sqrt(),
                moment_h: a,
                moment_2: b,
                gaussian_prediction: prediction,
            })
        })
        .collect();
    sd_rows
}

/// Outcome of the flow-vs-surrogate moment comparison at one smoothing
/// scale.
#[derive(Debug, Clone, Serialize)]
pub struct ShfVsGmcReport {
    pub h: usize,
    pub t: f64,
    pub theta: f64,
    pub delta: f64,
    pub shf_moment: MCEstimate,
    pub pair_moment: MCEstimate,
    /// `E[(2Z)^h] / E[(2M)^2]^{C(h,2)} − 1`; strictly positive for h ≥ 3.
    pub excess: f64,
    pub excess_err: f64,
    /// Whether the sign of the excess is resolved beyond `3·excess_err`.
    pub conclusive: bool,
}

/// Compare the h-th moment of the flow against the matched log-normal
/// prediction `E[(2M(g_δ))^2]^{C(h,2)}`; the excess over 1 is the strict
/// surplus of the flow. Inconclusive runs are flagged, not passed.
#[allow(clippy::too_many_arguments)]
pub fn shf_vs_gmc_report(
    table: &GThetaTable,
    k2: &K2Table,
    h: usize,
    t: f64,
    delta: f64,
    m_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<ShfVsGmcReport> {
    check_h(h)?;
    let shf = shf_moment_mc(table, h, t, delta, m_max, n_samples, seed)?;
    let pair = gmc_moment_mc(k2, 2, delta, n_samples, seed)?;
    let c_pairs = (h * (h - 1) / 2) as f64;
    let denom = pair.mean.powf(c_pairs);
    let ratio = shf.mean / denom;
    let excess = ratio - 1.0;
    // Independent streams: relative errors add in quadrature.
    let excess_err = ratio.abs()
        * ((shf.stderr / shf.mean).powi(2)
            + (c_pairs * pair.stderr / pair.mean).powi(2))
        .sqrt();
    Ok(ShfVsGmcReport {
        h,
        t,
        theta: table.theta.0,
        delta,
        shf_moment: shf,
        pair_moment: pair,
        excess,
        excess_err,
        conclusive: excess.abs() > 3.0 * excess_err,
    })
}
