//! Small statistics helpers shared by tests and the experiment harness:
//! compensated sums, standard errors, a one-sample Kolmogorov-Smirnov
//! statistic against the standard normal, and total-variation distance
//! between integer histograms.

/// Kahan-compensated running sum. Summation order is fixed by the caller,
/// which keeps reductions bit-identical across worker counts.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Run independent trials in parallel, collecting per-trial values in
/// trial order. Each value is a pure function of its index, so results
/// are bit-identical regardless of the worker count; reductions should
/// then consume the returned vector sequentially.
pub fn run_trials<F>(trials: u64, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    run_trials_range(0, trials, f)
}

/// `run_trials` over an explicit index range [lo, hi); the building
/// block for splitting one campaign across contiguous trial ranges.
pub fn run_trials_range<F>(lo: u64, hi: u64, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    use rayon::prelude::*;
    (lo..hi).into_par_iter().map(f).collect()
}

/// Mean and standard error of the mean, compensated, in slice order.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = Kahan::default();
    for &v in values {
        s.add(v);
    }
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let mut q = Kahan::default();
    for &v in values {
        let d = v - mean;
        q.add(d * d);
    }
    let var = q.value() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Error function, Abramowitz-Stegun 7.1.26; |error| < 1.5e-7.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// One-sample KS statistic of `sample` against the standard normal.
pub fn ks_normal(sample: &[f64]) -> f64 {
    let mut xs: Vec<f64> = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal_cdf(x);
        let lo = (cdf - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - cdf).abs();
        sup = sup.max(lo).max(hi);
    }
    sup
}

/// Total-variation distance between the empirical laws of two integer
/// samples.
pub fn tv_distance(a: &[i64], b: &[i64]) -> f64 {
    use std::collections::BTreeMap;
    let mut pa: BTreeMap<i64, f64> = BTreeMap::new();
    let mut pb: BTreeMap<i64, f64> = BTreeMap::new();
    for &x in a {
        *pa.entry(x).or_default() += 1.0 / a.len() as f64;
    }
    for &x in b {
        *pb.entry(x).or_default() += 1.0 / b.len() as f64;
    }
    let keys: std::collections::BTreeSet<i64> = pa.keys().chain(pb.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| (pa.get(k).unwrap_or(&0.0) - pb.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Total-variation distance between two probability vectors indexed by
/// the same keys.
pub fn tv_distance_pmf(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Median of a sample (average of middle pair for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
