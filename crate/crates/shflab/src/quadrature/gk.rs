//! One-dimensional integration: 15-point Gauss-Kronrod with adaptive
//! bisection, plus Gauss-Legendre node tables for the tensor engines.

use crate::error::{domain, Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Tolerances and budgets for the integration engines.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Adaptive bisection depth; segment budget is `4 << max_depth` capped.
    pub max_depth: u32,
    /// Sample budget for the Monte Carlo paths.
    pub mc_samples: u64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_depth: 12,
            mc_samples: 100_000,
        }
    }
}

impl QuadSpec {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadSpec {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

/// Single 15-point Gauss-Kronrod panel on `[a, b]`.
/// Returns `(integral, error_estimate)`.
pub fn qk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK15[7];
    let mut res_g = fc * WG7[3];
    let mut res_abs = res_k.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for j in 0..7 {
        let x = half * XGK15[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = f1;
        fv[14 - j] = f2;
        let fsum = f1 + f2;
        res_k += WGK15[j] * fsum;
        res_abs += WGK15[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG7[j / 2] * fsum;
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK15[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK15[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let raw_err = ((res_k - res_g) * half).abs();
    res_asc *= half.abs();
    res_abs *= half.abs();
    let mut err = raw_err;
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (res_k * half, err)
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(Ordering::Equal)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `(lo, hi)`.
///
/// Integrable endpoint singularities are tolerated: abscissae never touch
/// the endpoints and the worst segment is bisected until the global error
/// target `max(abs_tol, rel_tol * |value|)` is met.
pub fn integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, spec: &QuadSpec) -> Result<(f64, f64)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(domain(format!("integrate_1d: bad interval [{lo}, {hi}]")));
    }
    let f = &f;
    let (v0, e0) = qk15(f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a: lo,
        b: hi,
        value: v0,
        err: e0,
    });
    let mut total_v = v0;
    let mut total_e = e0;
    let seg_budget = (4usize << spec.max_depth.min(16)).min(200_000);
    while total_e > spec.abs_tol.max(spec.rel_tol * total_v.abs()) {
        if heap.len() >= seg_budget {
            return Err(Error::NonConvergence {
                value: total_v,
                error: total_e,
            });
        }
        let worst = heap.pop().expect("heap nonempty");
        // Width floor is relative to the segment's location so that a
        // singularity at 0 can be drilled arbitrarily deep.
        let min_width = 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs());
        if worst.b - worst.a <= min_width {
            // Cannot refine further in f64; accept what we have.
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (vl, el) = qk15(f, worst.a, mid);
        let (vr, er) = qk15(f, mid, worst.b);
        total_v += vl + vr - worst.value;
        total_e += el + er - worst.err;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: vl,
            err: el,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: vr,
            err: er,
        });
    }
    // Recompute totals from segments to shed accumulated cancellation.
    let segs = heap.into_vec();
    let mut v = 0.0;
    let mut e = 0.0;
    for s in &segs {
        v += s.value;
        e += s.err;
    }
    Ok((v, e))
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed by Newton
/// iteration on the Legendre recurrence and cached per order.
pub fn gauss_legendre_unit(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(&r) = guard.get(&n) {
        return r;
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 0.5 * w;
    }
    let leaked: &'static (Vec<f64>, Vec<f64>) = Box::leak(Box::new((nodes, weights)));
    guard.insert(n, leaked);
    leaked
}

/// Tanh-sinh (double-exponential) nodes on `(0, 1)`, cached per order.
///
/// Returns `(nodes, complements, weights)` where `complements[k]` is
/// `1 - nodes[k]` computed without cancellation, so integrands singular at
/// either endpoint can be evaluated at full precision.
pub fn tanh_sinh_unit(n: usize) -> &'static (Vec<f64>, Vec<f64>, Vec<f64>) {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static (Vec<f64>, Vec<f64>, Vec<f64>)>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(&r) = guard.get(&n) {
        return r;
    }
    let h = 8.0 / n as f64;
    let k_max = (4.0 / h).ceil() as i64;
    let mut nodes = Vec::new();
    let mut comps = Vec::new();
    let mut weights = Vec::new();
    for k in -k_max..=k_max {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let xc = 1.0 / (1.0 + (2.0 * u).exp());
        let w = h * std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2) / 2.0;
        if w == 0.0 || x == 0.0 || xc == 0.0 {
            continue;
        }
        nodes.push(x);
        comps.push(xc);
        weights.push(w);
    }
    let leaked: &'static (Vec<f64>, Vec<f64>, Vec<f64>) =
        Box::leak(Box::new((nodes, comps, weights)));
    guard.insert(n, leaked);
    leaked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let (x, _xc, w) = tanh_sinh_unit(40);
        let v: f64 = x.iter().zip(w).map(|(&xi, &wi)| wi / xi.sqrt()).sum();
        assert!((v - 2.0).abs() < 1e-10, "got {v}");
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_is_exact() {
        let spec = QuadSpec::default();
        let (v, _) = integrate_1d(|_| 1.0, 0.0, 1.0, &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        let spec = QuadSpec::with_tol(1e-12, 1e-12);
        let (v, _) = integrate_1d(|x| x.powf(-0.5), 0.0, 1.0, &spec).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn oscillatory() {
        let spec = QuadSpec::with_tol(1e-13, 1e-12);
        let (v, _) = integrate_1d(|x| (10.0 * x).sin(), 0.0, 1.0, &spec).unwrap();
        let exact = (1.0 - (10.0f64).cos()) / 10.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(8);
        // Degree-15 polynomial integrated exactly by 8 nodes.
        let v: f64 = x.iter().zip(w).map(|(&xi, &wi)| wi * xi.powi(15)).sum();
        assert!((v - 1.0 / 16.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
    }
}
