//! Pre-limit Monte Carlo: directed-polymer replicas on `ℤ²`, a full
//! transfer-matrix disorder average, mollified-equation Brownian replicas
//! with collision local times, and the correlation-inequality ratio.
//!
//! All estimators target the same continuum moments as the exact series in
//! `higher_moments`: lattice walks are started from `g_δ`-distributed
//! points blown up by `√N`, Brownian replicas from `g_{2δ}` (the lattice
//! and continuum normalisations differ by the `x ↦ x√2` map, see
//! `lattice_renewal::she_polymer_rescale`), and the couplings sit in the
//! critical windows computed by `lattice_renewal`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::lattice_renewal::{
    discrete_renewal_un, sigma2_from_window, ContinuumWindow, Mollifier, UN_MAX_N,
};
use crate::num::Pt;
use crate::quadrature::rng::{run_mc, run_mc_multi, standard_normal, stream, MCEstimate};
use crate::special_fn::Theta;

/// Largest replica count of the estimators here; the pair buffers are
/// statically sized for it.
const SIM_MAX_H: usize = 5;
const SIM_MAX_PAIRS: usize = SIM_MAX_H * (SIM_MAX_H - 1) / 2;

fn check_sim_h(h: usize, cap: usize) -> Result<()> {
    if !(1..=cap).contains(&h) {
        return Err(domain(format!("replica count h={h} must lie in 1..={cap}")));
    }
    Ok(())
}

/// A simple-random-walk path on `ℤ²` including its starting point.
#[derive(Debug, Clone)]
pub struct WalkPath {
    pub positions: Vec<(i64, i64)>,
}

/// One uniform nearest-neighbour step.
fn walk_step(pos: &mut (i64, i64), rng: &mut ChaCha8Rng) {
    match rng.gen_range(0u8..4) {
        0 => pos.0 += 1,
        1 => pos.0 -= 1,
        2 => pos.1 += 1,
        _ => pos.1 -= 1,
    }
}

impl WalkPath {
    /// Sample `steps` increments from `start`.
    pub fn sample(start: (i64, i64), steps: usize, rng: &mut ChaCha8Rng) -> WalkPath {
        let mut positions = Vec::with_capacity(steps + 1);
        let mut pos = start;
        positions.push(pos);
        for _ in 0..steps {
            walk_step(&mut pos, rng);
            positions.push(pos);
        }
        WalkPath { positions }
    }

    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    /// Every increment is a unit step in the lattice metric.
    pub fn increments_are_unit(&self) -> bool {
        self.positions.windows(2).all(|w| {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            dx.abs() + dy.abs() == 1
        })
    }

    /// Coordinate-sum parity at time `n` equals `(start parity + n) mod 2`.
    pub fn parity_consistent(&self) -> bool {
        let p0 = (self.positions[0].0 + self.positions[0].1).rem_euclid(2);
        self.positions
            .iter()
            .enumerate()
            .all(|(n, z)| (z.0 + z.1).rem_euclid(2) == (p0 + n as i64).rem_euclid(2))
    }
}

/// Pairwise collision counts of a replica family together with the
/// Gaussian-disorder weight `exp(β²·Σ_{i<j} L^{ij})`.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaWeight {
    pub beta2: f64,
    /// Counts in pair order `(0,1), (0,2), ..., (h−2,h−1)`.
    pub collisions: Vec<u64>,
    pub weight: f64,
}

impl ReplicaWeight {
    pub fn from_collisions(beta2: f64, collisions: Vec<u64>) -> ReplicaWeight {
        let total: u64 = collisions.iter().sum();
        ReplicaWeight {
            beta2,
            collisions,
            weight: (beta2 * total as f64).exp(),
        }
    }
}

/// Nearest even lattice site to the continuum point `√N·x`: round each
/// coordinate, then, if the coordinate sum is odd, move the coordinate
/// with the larger rounding residual one step towards its unrounded value.
pub fn lattice_start(x: Pt<f64>, root_n: f64) -> (i64, i64) {
    let (sx, sy) = (root_n * x.x, root_n * x.y);
    let (mut yx, mut yy) = (sx.round() as i64, sy.round() as i64);
    if (yx + yy).rem_euclid(2) != 0 {
        let (rx, ry) = (sx - yx as f64, sy - yy as f64);
        if rx.abs() >= ry.abs() {
            yx += if rx >= 0.0 { 1 } else { -1 };
        } else {
            yy += if ry >= 0.0 { 1 } else { -1 };
        }
    }
    (yx, yy)
}

/// Replica-identity estimator of `E[(2·𝒵_N(g_δ))^h]` at an explicit
/// coupling `β²`; the public entry point fixes `β²` to the critical
/// window. Walk starts are `g_δ` continuum points discretised to the even
/// sublattice; collisions are counted pairwise at times `1..N−1`.
pub fn polymer_replica_moment_beta2(
    h: usize,
    n: u64,
    beta2: f64,
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_sim_h(h, 4)?;
    if n < 8 || n % 2 != 0 || n > (1 << 14) {
        return Err(domain("polymer_replica_moment: N must be even, in [8, 2^14]"));
    }
    if !(delta > 0.0) {
        return Err(domain("polymer_replica_moment: delta must be positive"));
    }
    const STREAM: u64 = 500;
    if h == 1 {
        // No pairs, no disorder weight: the martingale mean is exact.
        return Ok(MCEstimate {
            mean: 1.0,
            stderr: 0.0,
            n: 0,
            seed,
            stream: STREAM,
        });
    }
    let root_n = (n as f64).sqrt();
    let sd = delta.sqrt();
    let pairs = h * (h - 1) / 2;
    let est = run_mc(seed, STREAM, n_samples, |rng| {
        let mut pos = [(0i64, 0i64); SIM_MAX_H];
        for p in pos.iter_mut().take(h) {
            let x = Pt::new(sd * standard_normal(rng), sd * standard_normal(rng));
            *p = lattice_start(x, root_n);
        }
        let mut coll = [0u64; SIM_MAX_PAIRS];
        for _ in 1..n {
            for p in pos.iter_mut().take(h) {
                walk_step(p, rng);
            }
            let mut idx = 0;
            for i in 0..h {
                for j in (i + 1)..h {
                    coll[idx] += u64::from(pos[i] == pos[j]);
                    idx += 1;
                }
            }
        }
        ReplicaWeight::from_collisions(beta2, coll[..pairs].to_vec()).weight
    });
    Ok(est)
}

/// Critical lattice coupling used by every estimator here:
/// `β_N² = log(1 + σ_N²)`, i.e. `e^{β_N²} − 1` sits exactly on the window
/// attenuation `σ_N² = (1 + θ/log N)/R_N`. The asymptotic expansion
/// `critical_beta2_n` agrees to `O(1/log²N)` but its truncation error is
/// visible in moments at accessible `N`, so the exact window value is
/// used.
pub fn polymer_critical_beta2(n: u64, theta: Theta) -> Result<f64> {
    Ok(sigma2_from_window(n.max(8), theta)?.ln_1p())
}

/// `E[(2·𝒵_N(g_δ))^h]` by the replica identity at the critical coupling
/// `β_N²` (symmetric disorder).
pub fn polymer_replica_moment(
    h: usize,
    n: u64,
    theta: Theta,
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    let beta2 = polymer_critical_beta2(n, theta)?;
    polymer_replica_moment_beta2(h, n, beta2, delta, n_samples, seed)
}

/// Exact lattice second moment `E[(2·𝒵_N(g_δ))²]` by renewal summation.
///
/// Expanding the pair weight `∏_n (1 + σ_N²·1{collision at n})` and
/// resumming the collision chains through the discrete renewal density
/// gives
/// `1 + Σ_{a=1}^{N−1} f(a)·σ_N²·(1 + Σ_{k=1}^{N−1−a} U_N(k))`,
/// where `f(a) = 1/(π(2δN + a))` is the local-limit-theorem probability
/// that the difference walk, started from the difference of two
/// discretised `g_δ` points, sits at the origin at time `a`.
///
/// This is the zero-variance companion of [`polymer_replica_moment`] at
/// `h = 2`: the direct sampler's squared weight is the same sum at the
/// tilted coupling `(1+σ_N²)² − 1`, which lies above the window, so its
/// variance blows up rapidly with `N` (relative standard error ~`10^14`
/// at `N = 2^12` regardless of sample budget). The series route reaches
/// large `N` exactly; the sampler is validated against it at small `N`.
pub fn polymer_second_moment_renewal(n: u64, theta: Theta, delta: f64) -> Result<f64> {
    if n < 8 || n % 2 != 0 || n > UN_MAX_N {
        return Err(domain(format!(
            "polymer_second_moment_renewal: N must be even, in [8, {UN_MAX_N}]"
        )));
    }
    if !(delta > 0.0) {
        return Err(domain("polymer_second_moment_renewal: delta must be positive"));
    }
    let sigma2 = sigma2_from_window(n, theta)?;
    let u = discrete_renewal_un(n, theta)?;
    let nn = n as usize;
    // pref[j] = Σ_{k=1}^{j} U_N(k).
    let mut pref = vec![0.0f64; nn];
    for j in 1..nn {
        pref[j] = pref[j - 1] + u[j - 1];
    }
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for a in 1..nn {
        let f = 1.0 / (std::f64::consts::PI * (2.0 * delta * n as f64 + a as f64));
        let y = f * sigma2 * (1.0 + pref[nn - 1 - a]) - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    Ok(1.0 + acc)
}

/// One transfer-matrix sweep through a disorder realisation.
#[derive(Debug, Clone, Serialize)]
pub struct TransferOutcome {
    pub n: u64,
    pub radius: i64,
    pub delta: f64,
    pub beta2: f64,
    pub seed: u64,
    /// `𝒵_N(g_δ) = (1/N)·Σ_{y even} g_δ(y/√N)·Z(y)`; expectation `1/2`.
    pub z_delta: f64,
    /// `g_δ`-weighted random-walk mass absorbed at the box boundary.
    pub leakage: f64,
    /// Final-slice field, row-major over `[−radius, radius]²`.
    pub field: Vec<f64>,
}

/// Time slices of i.i.d. standard Gaussian disorder over the box, produced
/// one slice at a time from a dedicated stream so the full `N × box²`
/// array never has to be stored.
pub struct DisorderSlab {
    pub n: u64,
    pub radius: i64,
    pub slice: Vec<f64>,
    produced: u64,
    rng: ChaCha8Rng,
}

impl DisorderSlab {
    pub fn new(n: u64, radius: i64, seed: u64, stream_id: u64) -> Result<DisorderSlab> {
        if radius < 1 || n < 2 {
            return Err(domain("disorder slab: need radius ≥ 1 and N ≥ 2"));
        }
        let side = (2 * radius + 1) as usize;
        Ok(DisorderSlab {
            n,
            radius,
            slice: vec![0.0; side * side],
            produced: 0,
            rng: stream(seed, stream_id),
        })
    }

    /// Fill `slice` with the next time slice. Errors once the slab is
    /// exhausted, which would indicate a recursion bookkeeping bug.
    pub fn advance(&mut self) -> Result<&[f64]> {
        if self.produced >= self.n {
            return Err(Error::Invariant("disorder slab exhausted".into()));
        }
        for v in &mut self.slice {
            *v = standard_normal(&mut self.rng);
        }
        self.produced += 1;
        Ok(&self.slice)
    }
}

/// Flat-start point-to-measure partition function by the transfer matrix,
/// at an explicit coupling. The recursion is
/// `Z(n, z) = [¼·Σ_neighbours Z(n−1, ·)]·e^{βω(n,z) − β²/2}` for
/// `n = 1..N−1` followed by one plain averaging step, on the absorbing box
/// `[−radius, radius]²`. A disorder-free companion field tracks the
/// absorbed mass; the sweep aborts if the `g_δ`-weighted leakage exceeds
/// `10⁻⁶`.
pub fn polymer_transfer_matrix_beta2(
    n: u64,
    beta2: f64,
    radius: i64,
    delta: f64,
    seed: u64,
) -> Result<TransferOutcome> {
    if n < 8 || n % 2 != 0 || n > (1 << 10) {
        return Err(domain("polymer_transfer_matrix: N must be even, in [8, 2^10]"));
    }
    let root_n = (n as f64).sqrt();
    if (radius as f64) < 3.0 * root_n {
        return Err(domain("polymer_transfer_matrix: box radius must be ≥ 3√N"));
    }
    if !(delta > 0.0) {
        return Err(domain("polymer_transfer_matrix: delta must be positive"));
    }
    if !(beta2 >= 0.0) {
        return Err(domain("polymer_transfer_matrix: beta² must be nonnegative"));
    }
    let side = (2 * radius + 1) as usize;
    let beta = beta2.sqrt();
    let mut field = vec![1.0f64; side * side];
    let mut companion = vec![1.0f64; side * side];
    let mut scratch = vec![0.0f64; side * side];
    let mut slab = DisorderSlab::new(n, radius, seed, 520)?;
    let average_step = |src: &[f64], dst: &mut [f64]| {
        for ix in 0..side {
            for iy in 0..side {
                let mut acc = 0.0;
                if ix > 0 {
                    acc += src[(ix - 1) * side + iy];
                }
                if ix + 1 < side {
                    acc += src[(ix + 1) * side + iy];
                }
                if iy > 0 {
                    acc += src[ix * side + iy - 1];
                }
                if iy + 1 < side {
                    acc += src[ix * side + iy + 1];
                }
                dst[ix * side + iy] = 0.25 * acc;
            }
        }
    };
    for _ in 1..n {
        let omega = slab.advance()?;
        average_step(&field, &mut scratch);
        for (dst, &w) in scratch.iter_mut().zip(omega) {
            *dst *= (beta * w - 0.5 * beta2).exp();
        }
        std::mem::swap(&mut field, &mut scratch);
        average_step(&companion, &mut scratch);
        std::mem::swap(&mut companion, &mut scratch);
    }
    // Final step: plain neighbour averaging, no disorder weight.
    average_step(&field, &mut scratch);
    std::mem::swap(&mut field, &mut scratch);
    average_step(&companion, &mut scratch);
    std::mem::swap(&mut companion, &mut scratch);

    let g_delta = |ix: usize, iy: usize| {
        let px = (ix as i64 - radius) as f64 / root_n;
        let py = (iy as i64 - radius) as f64 / root_n;
        (-(px * px + py * py) / (2.0 * delta)).exp() / (2.0 * std::f64::consts::PI * delta)
    };
    let mut z_delta = 0.0;
    let mut retained = 0.0;
    for ix in 0..side {
        for iy in 0..side {
            if ((ix as i64 - radius) + (iy as i64 - radius)).rem_euclid(2) != 0 {
                continue;
            }
            let g = g_delta(ix, iy);
            z_delta += g * field[ix * side + iy];
            retained += g * companion[ix * side + iy];
        }
    }
    z_delta /= n as f64;
    let leakage = (1.0 - 2.0 * retained / n as f64).max(0.0);
    if leakage > 1e-6 {
        return Err(Error::Guard(format!(
            "polymer_transfer_matrix: boundary leakage {leakage:.3e} exceeds 1e-6; enlarge the box"
        )));
    }
    Ok(TransferOutcome {
        n,
        radius,
        delta,
        beta2,
        seed,
        z_delta,
        leakage,
        field,
    })
}

/// Transfer matrix at the critical coupling `β_N²`.
pub fn polymer_transfer_matrix(
    n: u64,
    theta: Theta,
    radius: i64,
    delta: f64,
    seed: u64,
) -> Result<TransferOutcome> {
    let beta2 = polymer_critical_beta2(n, theta)?;
    polymer_transfer_matrix_beta2(n, beta2, radius, delta, seed)
}

/// Mollifier used by the Brownian-replica estimators: Gaussian with
/// `j_variance = 1`, so `J_ε = g_{ε²}` exactly.
pub fn simulation_mollifier() -> Mollifier {
    Mollifier::gaussian(std::f64::consts::FRAC_1_SQRT_2).expect("positive width")
}

/// Advance `h` Euler-discretised Brownian replicas started from i.i.d.
/// `g_{2δ}` points and return the trapezoidal collision functionals
/// `L^{ij} = ∫₀ᵗ J_ε(W^i_s − W^j_s) ds` in pair order.
fn brownian_collisions(
    h: usize,
    t: f64,
    eps: f64,
    delta: f64,
    moll: &Mollifier,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
) -> [f64; SIM_MAX_PAIRS] {
    let dt = t / n_steps as f64;
    let sqdt = dt.sqrt();
    let sd = (2.0 * delta).sqrt();
    let mut pos = [Pt::origin(); SIM_MAX_H];
    for p in pos.iter_mut().take(h) {
        *p = Pt::new(sd * standard_normal(rng), sd * standard_normal(rng));
    }
    let j_eps = |a: Pt<f64>, b: Pt<f64>| moll.j_radial((a - b).norm() / eps) / (eps * eps);
    let mut prev = [0.0f64; SIM_MAX_PAIRS];
    let mut ell = [0.0f64; SIM_MAX_PAIRS];
    let mut idx = 0;
    for i in 0..h {
        for j in (i + 1)..h {
            prev[idx] = j_eps(pos[i], pos[j]);
            idx += 1;
        }
    }
    for _ in 0..n_steps {
        for p in pos.iter_mut().take(h) {
            *p = Pt::new(
                p.x + sqdt * standard_normal(rng),
                p.y + sqdt * standard_normal(rng),
            );
        }
        let mut idx = 0;
        for i in 0..h {
            for j in (i + 1)..h {
                let cur = j_eps(pos[i], pos[j]);
                ell[idx] += 0.5 * dt * (prev[idx] + cur);
                prev[idx] = cur;
                idx += 1;
            }
        }
    }
    ell
}

fn check_she_grid(eps: f64, n_steps: usize) -> Result<()> {
    if !(eps >= 1e-3 && eps <= 0.25) {
        return Err(domain("mollification scale eps must lie in [1e-3, 0.25]"));
    }
    if (n_steps as f64) * eps * eps < 10.0 {
        return Err(domain(
            "n_steps·eps² must be ≥ 10 to resolve the mollification scale",
        ));
    }
    Ok(())
}

/// Mollified-equation replica moment with a Richardson step-bias proxy.
#[derive(Debug, Clone, Serialize)]
pub struct SheReport {
    pub h: usize,
    pub t: f64,
    pub theta: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub beta2: f64,
    /// Fine-grid estimate (`2·n_steps` Euler steps); `stderr` is Monte
    /// Carlo only.
    pub estimate: MCEstimate,
    /// `|fine − coarse|` over the `(n_steps, 2·n_steps)` pair.
    pub step_bias: f64,
}

/// `E[(2𝒵ₜ(g_δ))^h]` estimated at mollification scale `ε` with an
/// explicit coupling: Brownian replicas, pairwise collision functionals,
/// weight `exp(β²·Σ_{i<j} L^{ij})`.
pub fn she_replica_moment_beta2(
    h: usize,
    t: f64,
    beta2: f64,
    eps: f64,
    delta: f64,
    n_steps: usize,
    n_samples: u64,
    seed: u64,
) -> Result<SheReport> {
    check_sim_h(h, SIM_MAX_H)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain("she_replica_moment: horizon must lie in (0, 1]"));
    }
    if !(delta > 0.0) {
        return Err(domain("she_replica_moment: delta must be positive"));
    }
    check_she_grid(eps, n_steps)?;
    let moll = simulation_mollifier();
    let pairs = h * (h - 1) / 2;
    let run = |steps: usize, stream_id: u64| {
        run_mc(seed, stream_id, n_samples, |rng| {
            let ell = brownian_collisions(h, t, eps, delta, &moll, steps, rng);
            (beta2 * ell[..pairs].iter().sum::<f64>()).exp()
        })
    };
    let coarse = if h == 1 {
        MCEstimate {
            mean: 1.0,
            stderr: 0.0,
            n: 0,
            seed,
            stream: 540,
        }
    } else {
        run(n_steps, 540)
    };
    let fine = if h == 1 {
        coarse
    } else {
        run(2 * n_steps, 541)
    };
    Ok(SheReport {
        h,
        t,
        theta: f64::NAN,
        eps,
        delta,
        n_steps,
        beta2,
        estimate: fine,
        step_bias: (fine.mean - coarse.mean).abs(),
    })
}

/// Mollified-equation replica moment at the critical coupling `β_ε²`.
pub fn she_replica_moment(
    h: usize,
    t: f64,
    theta: Theta,
    eps: f64,
    delta: f64,
    n_steps: usize,
    n_samples: u64,
    seed: u64,
) -> Result<SheReport> {
    let window = ContinuumWindow::build(eps, theta, std::f64::consts::FRAC_1_SQRT_2)?;
    let mut rep =
        she_replica_moment_beta2(h, t, window.beta2_eps, eps, delta, n_steps, n_samples, seed)?;
    rep.theta = theta.0;
    Ok(rep)
}

/// Ratio consequence of the Gaussian correlation inequality at finite
/// mollification.
#[derive(Debug, Clone, Serialize)]
pub struct GciReport {
    pub t: f64,
    pub theta: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub beta2: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `E[e^{β²(L¹²+L¹³)}] / E[e^{β²L¹²}]²`.
    pub ratio: f64,
    /// Delta-method standard error of the ratio under common random
    /// numbers.
    pub stderr: f64,
}

/// Estimate `E[∏_{j=2,3} e^{β²L^{1j}}] / (E[e^{β²L^{12}}])²` with common
/// random numbers: both moments are read off the same three-replica
/// samples, the denominator averaging over the two exchangeable pairs.
pub fn gci_ratio_mc(
    t: f64,
    theta: Theta,
    eps: f64,
    delta: f64,
    n_steps: usize,
    n_samples: u64,
    seed: u64,
) -> Result<GciReport> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain("gci_ratio_mc: horizon must lie in (0, 1]"));
    }
    if !(delta > 0.0) {
        return Err(domain("gci_ratio_mc: delta must be positive"));
    }
    check_she_grid(eps, n_steps)?;
    let window = ContinuumWindow::build(eps, theta, std::f64::consts::FRAC_1_SQRT_2)?;
    let beta2 = window.beta2_eps;
    let moll = simulation_mollifier();
    let est = run_mc_multi::<2, _>(seed, 560, n_samples, |rng| {
        let ell = brownian_collisions(3, t, eps, delta, &moll, n_steps, rng);
        // Pair order for h = 3: (0,1), (0,2), (1,2).
        let (l12, l13) = (ell[0], ell[1]);
        [
            (beta2 * (l12 + l13)).exp(),
            0.5 * ((beta2 * l12).exp() + (beta2 * l13).exp()),
        ]
    });
    let (m0, m1) = (est.mean[0], est.mean[1]);
    let ratio = m0 / (m1 * m1);
    // Delta method for a/b²: gradient (1/b², −2a/b³).
    let var = (est.cov[0][0] / (m0 * m0) + 4.0 * est.cov[1][1] / (m1 * m1)
        - 4.0 * est.cov[0][1] / (m0 * m1))
        * ratio
        * ratio;
    Ok(GciReport {
        t,
        theta: theta.0,
        eps,
        delta,
        n_steps,
        beta2,
        numerator: m0,
        denominator: m1 * m1,
        ratio,
        stderr: var.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta_bound::phi_bar;
    use crate::special_fn::GThetaTable;

    #[test]
    fn walk_parity_and_unit_increments() {
        let mut rng = stream(3, 0);
        for start in [(0i64, 0i64), (2, 4), (1, 1)] {
            let path = WalkPath::sample(start, 200, &mut rng);
            assert_eq!(path.steps(), 200);
            assert!(path.increments_are_unit());
            assert!(path.parity_consistent());
        }
    }

    #[test]
    fn lattice_start_even_and_close() {
        let mut rng = stream(4, 1);
        let root_n = 64.0f64.sqrt();
        for _ in 0..500 {
            let x = Pt::new(standard_normal(&mut rng), standard_normal(&mut rng));
            let y = lattice_start(x, root_n);
            assert_eq!((y.0 + y.1).rem_euclid(2), 0);
            let dx = y.0 as f64 - root_n * x.x;
            let dy = y.1 as f64 - root_n * x.y;
            // Worst case: both coordinates at residual 1/2 and a parity
            // adjustment of a full step on one of them.
            assert!(dx.abs() <= 1.5 + 1e-12 && dy.abs() <= 1.5 + 1e-12);
        }
    }

    #[test]
    fn polymer_h1_and_beta0_trivial() {
        let one = polymer_replica_moment(1, 64, Theta(0.0), 0.5, 100, 7).unwrap();
        assert_eq!(one.mean, 1.0);
        assert_eq!(one.stderr, 0.0);
        let zero_coupling = polymer_replica_moment_beta2(3, 64, 0.0, 0.5, 500, 7).unwrap();
        assert_eq!(zero_coupling.mean, 1.0);
        assert_eq!(zero_coupling.stderr, 0.0);
    }

    #[test]
    fn polymer_renewal_route_matches_quadrature() {
        let table = GThetaTable::build(Theta(0.0)).unwrap();
        let delta = 0.5;
        let target = phi_bar(&table, 1.0, delta).unwrap();
        let coarse = polymer_second_moment_renewal(1 << 10, Theta(0.0), delta).unwrap();
        let fine = polymer_second_moment_renewal(1 << 12, Theta(0.0), delta).unwrap();
        assert!(
            (fine - target).abs() < 1e-3,
            "renewal {fine} vs quadrature {target}"
        );
        // The lattice value drifts into the continuum one as N grows.
        assert!(
            (fine - target).abs() < (coarse - target).abs(),
            "coarse {coarse} fine {fine} target {target}"
        );
    }

    /// Renewal sum `1 + Σ_a λ·q_{2a}(0)·(1 + Σ_{k≤N−1−a} U(k))` for two
    /// walks started at the origin, at an arbitrary coupling `λ`; with
    /// `λ = σ_N²` this is the exact mean of the `h = 2` sampler weight,
    /// and at the tilted coupling `(1+σ_N²)² − 1` its second moment.
    fn origin_pair_moment(nn: usize, lam: f64) -> f64 {
        let q: Vec<f64> = (1..nn)
            .map(|k| crate::lattice_renewal::q2n_zero(k as u64).unwrap())
            .collect();
        let mut u = vec![0.0f64; nn];
        for k in 1..nn {
            let mut s = lam * q[k - 1];
            for m in 1..k {
                s += lam * q[k - m - 1] * u[m];
            }
            u[k] = s;
        }
        let mut pref = vec![0.0f64; nn];
        for j in 1..nn {
            pref[j] = pref[j - 1] + u[j];
        }
        let mut acc = 1.0;
        for a in 1..nn {
            acc += lam * q[a - 1] * (1.0 + pref[nn - 1 - a]);
        }
        acc
    }

    #[test]
    fn polymer_mc_matches_renewal_from_origin() {
        // δ small enough that both starts discretise to the origin, where
        // the renewal oracle needs no local limit theorem. The error bar
        // is the sampler's *exact* standard error from the tilted-coupling
        // second moment, not the (heavy-tail-biased) empirical one.
        let n = 16u64;
        let nn = n as usize;
        let sigma2 = sigma2_from_window(n, Theta(0.0)).unwrap();
        let mean = origin_pair_moment(nn, sigma2);
        let second = origin_pair_moment(nn, (1.0 + sigma2).powi(2) - 1.0);
        let n_samples = 300_000u64;
        let se = ((second - mean * mean) / n_samples as f64).sqrt();
        let est = polymer_replica_moment(2, n, Theta(0.0), 1e-12, n_samples, 11).unwrap();
        assert!(
            (est.mean - mean).abs() < 3.0 * se,
            "sampler {} vs renewal {mean} (exact se {se})",
            est.mean
        );
    }

    #[test]
    fn transfer_matrix_beta0_deterministic() {
        let a = polymer_transfer_matrix_beta2(64, 0.0, 40, 0.125, 5).unwrap();
        let b = polymer_transfer_matrix_beta2(64, 0.0, 40, 0.125, 99).unwrap();
        // Without disorder the field is identically one away from the
        // boundary and the sweep is seed-independent.
        assert_eq!(a.z_delta.to_bits(), b.z_delta.to_bits());
        assert!((2.0 * a.z_delta - 1.0).abs() < 1e-6, "{}", a.z_delta);
        assert!(a.leakage < 1e-9, "leak {}", a.leakage);
    }

    #[test]
    fn transfer_matrix_mean_one_half() {
        let n_rep = 600;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..n_rep {
            let out = polymer_transfer_matrix(64, Theta(0.0), 40, 0.125, 1000 + k).unwrap();
            let v = 2.0 * out.z_delta;
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n_rep as f64;
        let se = ((sumsq / n_rep as f64 - mean * mean).max(0.0) / n_rep as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se + 1e-4, "mean {mean} se {se}");
    }

    #[test]
    fn replica_identity_at_small_n() {
        // Direct disorder average of (2𝒵_N)² against the two-replica
        // collision estimator — the discrete replica identity.
        let (n, delta) = (64u64, 0.125);
        let n_rep = 4000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..n_rep {
            let out = polymer_transfer_matrix(n, Theta(0.0), 40, delta, 30_000 + k).unwrap();
            let v = (2.0 * out.z_delta).powi(2);
            sum += v;
            sumsq += v * v;
        }
        let direct = sum / n_rep as f64;
        let direct_se =
            ((sumsq / n_rep as f64 - direct * direct).max(0.0) / n_rep as f64).sqrt();
        let replica = polymer_replica_moment(2, n, Theta(0.0), delta, 200_000, 13).unwrap();
        assert!(
            (direct - replica.mean).abs() < 3.0 * (direct_se + replica.stderr),
            "direct {direct} ± {direct_se} vs replica {} ± {}",
            replica.mean,
            replica.stderr
        );
    }

    #[test]
    fn she_trivial_values() {
        let rep = she_replica_moment_beta2(2, 1.0, 0.0, 0.1, 0.25, 1200, 200, 3).unwrap();
        assert_eq!(rep.estimate.mean, 1.0);
        assert_eq!(rep.step_bias, 0.0);
        let one = she_replica_moment(1, 1.0, Theta(0.0), 0.1, 0.25, 1200, 200, 3).unwrap();
        assert_eq!(one.estimate.mean, 1.0);
    }

    #[test]
    fn she_second_moment_approaches_quadrature() {
        let table = GThetaTable::build(Theta(0.0)).unwrap();
        let delta = 0.25;
        let target = phi_bar(&table, 1.0, delta).unwrap();
        let run = |eps: f64, samples: u64| {
            let n_steps = (16.0 / (eps * eps)).ceil() as usize;
            she_replica_moment(2, 1.0, Theta(0.0), eps, delta, n_steps, samples, 21).unwrap()
        };
        let coarse = run(0.2, 6000);
        let fine = run(0.1, 6000);
        let gap = |r: &SheReport| (r.estimate.mean - target).abs();
        // The mollified moment drifts towards the continuum value as ε
        // shrinks; allow the Monte Carlo noise of both runs.
        let noise = 3.0 * (coarse.estimate.stderr + fine.estimate.stderr)
            + coarse.step_bias
            + fine.step_bias;
        assert!(
            gap(&fine) < gap(&coarse) + noise,
            "fine {} coarse {} target {target}",
            fine.estimate.mean,
            coarse.estimate.mean
        );
        assert!(fine.estimate.mean > 1.0, "{}", fine.estimate.mean);
    }

    #[test]
    fn gci_ratio_jensen_and_decoupling() {
        let rep = gci_ratio_mc(1.0, Theta(0.0), 0.1, 0.25, 1600, 4000, 9).unwrap();
        assert!(
            rep.ratio >= 1.0 - 3.0 * rep.stderr,
            "ratio {} ± {}",
            rep.ratio,
            rep.stderr
        );
        // Far-apart starts decouple the collision weights.
        let far = gci_ratio_mc(1.0, Theta(0.0), 0.1, 400.0, 1600, 2000, 9).unwrap();
        assert!(
            (far.ratio - 1.0).abs() < 3.0 * far.stderr + 1e-3,
            "far ratio {} ± {}",
            far.ratio,
            far.stderr
        );
    }
}
