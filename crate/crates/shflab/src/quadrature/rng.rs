//! Seeded, splittable random-number streams and Monte Carlo bookkeeping.
//!
//! Streams are counter-based (ChaCha8 with an explicit 64-bit stream id), so
//! a run is fully determined by `(seed, stream)`. Every Monte Carlo driver
//! splits its sample budget across a fixed number of substreams and merges
//! partial results in substream order, which makes results independent of
//! the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of substreams every driver splits into, independent of `--jobs`.
pub const SUBSTREAMS: u64 = 64;

/// A deterministic stream: same `(seed, stream)` always yields the same
/// sequence. Stream ids below `2^54` are reserved for callers; the low bits
/// are used internally for substream splitting.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Standard normal deviate (polar Box-Muller, no state carried over).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// Result of a seeded Monte Carlo run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub stream: u64,
}

impl MCEstimate {
    /// Merge disjoint-substream partials by sample-count weighting, in the
    /// order given.
    pub fn merge(parts: &[MCEstimate], seed: u64, stream_id: u64) -> MCEstimate {
        let n: u64 = parts.iter().map(|p| p.n).sum();
        let nf = n as f64;
        let mut mean = 0.0;
        let mut var = 0.0;
        for p in parts {
            let w = p.n as f64 / nf;
            mean += w * p.mean;
            var += w * w * p.stderr * p.stderr;
        }
        MCEstimate {
            mean,
            stderr: var.sqrt(),
            n,
            seed,
            stream: stream_id,
        }
    }
}

/// Jointly estimated means of `K` quantities sharing the same samples
/// (common random numbers), with the full covariance of the mean vector.
#[derive(Debug, Clone, Copy)]
pub struct MultiEstimate<const K: usize> {
    pub mean: [f64; K],
    /// Covariance matrix of the estimated means.
    pub cov: [[f64; K]; K],
    pub n: u64,
    pub seed: u64,
    pub stream: u64,
}

impl<const K: usize> MultiEstimate<K> {
    pub fn stderr(&self, i: usize) -> f64 {
        self.cov[i][i].max(0.0).sqrt()
    }

    /// Standard error of `mean[i] - mean[j]` under the joint covariance.
    pub fn stderr_diff(&self, i: usize, j: usize) -> f64 {
        (self.cov[i][i] + self.cov[j][j] - 2.0 * self.cov[i][j])
            .max(0.0)
            .sqrt()
    }

    /// Delta-method standard error of `mean[i] / mean[j]`.
    pub fn stderr_ratio(&self, i: usize, j: usize) -> f64 {
        let (mi, mj) = (self.mean[i], self.mean[j]);
        let r = mi / mj;
        let var = (self.cov[i][i] / (mi * mi) + self.cov[j][j] / (mj * mj)
            - 2.0 * self.cov[i][j] / (mi * mj))
            * r
            * r;
        var.max(0.0).sqrt()
    }

    pub fn component(&self, i: usize) -> MCEstimate {
        MCEstimate {
            mean: self.mean[i],
            stderr: self.stderr(i),
            n: self.n,
            seed: self.seed,
            stream: self.stream,
        }
    }
}

/// Run `n` samples of a scalar estimator split over the fixed substream
/// grid; deterministic for fixed `(seed, stream_id, n)`.
pub fn run_mc<F>(seed: u64, stream_id: u64, n: u64, sample: F) -> MCEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let multi = run_mc_multi::<1, _>(seed, stream_id, n, |rng| [sample(rng)]);
    multi.component(0)
}

/// Run `n` samples of a `K`-vector estimator with common random numbers.
pub fn run_mc_multi<const K: usize, F>(
    seed: u64,
    stream_id: u64,
    n: u64,
    sample: F,
) -> MultiEstimate<K>
where
    F: Fn(&mut ChaCha8Rng) -> [f64; K] + Sync,
{
    let base = n / SUBSTREAMS;
    let extra = n % SUBSTREAMS;
    let partials: Vec<([f64; K], [[f64; K]; K], u64)> = (0..SUBSTREAMS)
        .into_par_iter()
        .map(|chunk| {
            let cn = base + u64::from(chunk < extra);
            let mut rng = stream(seed, (stream_id << 10) | (chunk + 1));
            let mut sum = [0.0f64; K];
            let mut sumsq = [[0.0f64; K]; K];
            for _ in 0..cn {
                let v = sample(&mut rng);
                for i in 0..K {
                    sum[i] += v[i];
                    for j in i..K {
                        sumsq[i][j] += v[i] * v[j];
                    }
                }
            }
            (sum, sumsq, cn)
        })
        .collect();
    let mut sum = [0.0f64; K];
    let mut sumsq = [[0.0f64; K]; K];
    let mut total = 0u64;
    for (s, sq, cn) in &partials {
        total += cn;
        for i in 0..K {
            sum[i] += s[i];
            for j in i..K {
                sumsq[i][j] += sq[i][j];
            }
        }
    }
    let nf = total as f64;
    let mut mean = [0.0f64; K];
    for i in 0..K {
        mean[i] = sum[i] / nf;
    }
    let mut cov = [[0.0f64; K]; K];
    for i in 0..K {
        for j in i..K {
            // Covariance of the sample means.
            let c = (sumsq[i][j] / nf - mean[i] * mean[j]) / (nf - 1.0).max(1.0);
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    MultiEstimate {
        mean,
        cov,
        n: total,
        seed,
        stream: stream_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let f = |rng: &mut ChaCha8Rng| rng.gen::<f64>();
        let a = run_mc(7, 3, 10_000, f);
        let b = run_mc(7, 3, 10_000, f);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = run_mc(8, 3, 10_000, f);
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn uniform_mean() {
        let est = run_mc(1, 0, 200_000, |rng| rng.gen::<f64>());
        assert!((est.mean - 0.5).abs() < 4.0 * est.stderr);
        assert!(est.stderr > 0.0 && est.stderr < 1e-2);
    }

    #[test]
    fn normal_moments() {
        let est = run_mc_multi::<2, _>(2, 0, 200_000, |rng| {
            let z = standard_normal(rng);
            [z, z * z]
        });
        assert!(est.mean[0].abs() < 4.0 * est.stderr(0));
        assert!((est.mean[1] - 1.0).abs() < 4.0 * est.stderr(1));
    }

    #[test]
    fn merge_matches_weighted_average() {
        let a = MCEstimate {
            mean: 1.0,
            stderr: 0.1,
            n: 100,
            seed: 0,
            stream: 0,
        };
        let b = MCEstimate {
            mean: 3.0,
            stderr: 0.1,
            n: 300,
            seed: 0,
            stream: 1,
        };
        let m = MCEstimate::merge(&[a, b], 0, 9);
        assert!((m.mean - 2.5).abs() < 1e-15);
        assert_eq!(m.n, 400);
    }
}
