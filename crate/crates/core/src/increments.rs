//! Increment laws for walks on the integers.
//!
//! A law is a finite probability vector on offsets in [-20, 20]. Besides
//! validation and moments, this module computes two distributions that
//! other modules treat as oracles:
//!
//! * the ladder height Z: the value of a walk started at 0 when it first
//!   reaches [1, +inf), computed both by a horizon-truncated dynamic
//!   program over (position, step) and by an exact linear solve of the
//!   first-passage equations on a deep position band;
//! * the limiting overshoot law of level crossings from far below,
//!   P[land at k] = P[Z >= k+1] / E[Z].

use std::collections::{BTreeMap, HashSet};

use num::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::Kahan;

/// Largest admissible |offset| in a support.
pub const MAX_OFFSET: i64 = 20;
/// Probabilities must sum to 1 within this tolerance before normalization.
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Steps of set convolution used for period and reachability checks.
const REACH_STEPS: usize = 40;
/// Default horizon for the ladder dynamic program.
pub const LADDER_HORIZON: usize = 10_000;
/// Default position band depth for ladder computations.
pub const LADDER_DEPTH: i64 = 1_000;
/// Band depth for the exact ladder solve; the first-passage law from a
/// site stabilizes exponentially fast in depth, so this is conservative.
pub const LADDER_EXACT_DEPTH: i64 = 600;
/// Maximum ladder tail mass accepted by the limiting-overshoot formula.
pub const OVERSHOOT_TAIL_BOUND: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("support is empty")]
    EmptySupport,
    #[error("support has a single point; walk would be deterministic")]
    SinglePoint,
    #[error("offset {0} outside [-{MAX_OFFSET}, {MAX_OFFSET}]")]
    OffsetOutOfRange(i64),
    #[error("duplicate offset {0}")]
    DuplicateOffset(i64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(f64),
    #[error("cannot parse law entry {0:?}")]
    Parse(String),
    #[error("law assigns mass to 0, not usable with single-jump clocks")]
    ZeroStep,
    #[error("law mean {0} is not zero")]
    NonzeroMean(f64),
    #[error("law has period {0}, aperiodic law required")]
    Periodic(u32),
    #[error("law is not irreducible on the integers")]
    Reducible,
    #[error("ladder tail mass {0} exceeds {1}")]
    HeavyTail(f64, f64),
    #[error("ladder pmf is empty")]
    EmptyLadder,
}

/// Validated one-step increment law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementDistribution {
    /// Offset/probability pairs, sorted by offset, normalized.
    support: Vec<(i64, f64)>,
    mean: f64,
    variance: f64,
    /// Absolute moments of orders 1, 2, 3, 5.
    abs_moments: [f64; 4],
    /// True when P(Y = 0) > 0.
    zero_allowed: bool,
    /// gcd of return times, 0 if no return is possible within 40 steps.
    period: u32,
    irreducible: bool,
    /// Cumulative probabilities aligned with `support`, last entry 1.
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl IncrementDistribution {
    /// Builds a law from offset/probability pairs. Rejects malformed
    /// input; a nonzero mean or a period above 1 is recorded, not
    /// rejected, so callers that need those properties can refuse later.
    pub fn new(entries: &[(i64, f64)]) -> Result<Self, LawError> {
        if entries.is_empty() {
            return Err(LawError::EmptySupport);
        }
        if entries.len() == 1 {
            return Err(LawError::SinglePoint);
        }
        let mut support: Vec<(i64, f64)> = entries.to_vec();
        support.sort_by_key(|&(k, _)| k);
        for w in support.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(LawError::DuplicateOffset(w[0].0));
            }
        }
        let mut sum = 0.0;
        for &(k, p) in &support {
            if k.abs() > MAX_OFFSET {
                return Err(LawError::OffsetOutOfRange(k));
            }
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(LawError::BadProbability(p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(LawError::BadSum(sum));
        }
        for e in &mut support {
            e.1 /= sum;
        }
        let mean: f64 = support.iter().map(|&(k, p)| k as f64 * p).sum();
        let variance: f64 = support
            .iter()
            .map(|&(k, p)| (k as f64 - mean).powi(2) * p)
            .sum();
        let abs_m = |r: i32| -> f64 {
            support
                .iter()
                .map(|&(k, p)| (k as f64).abs().powi(r) * p)
                .sum()
        };
        let abs_moments = [abs_m(1), abs_m(2), abs_m(3), abs_m(5)];
        let zero_allowed = support.iter().any(|&(k, p)| k == 0 && p > 0.0);
        let offsets: Vec<i64> = support
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(k, _)| k)
            .collect();
        let (period, irreducible) = reachability_profile(&offsets);
        let mut cdf = Vec::with_capacity(support.len());
        let mut acc = 0.0;
        for &(_, p) in &support {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Self {
            support,
            mean,
            variance,
            abs_moments,
            zero_allowed,
            period,
            irreducible,
            cdf,
        })
    }

    /// Parses the text form `offset:prob,offset:prob,...`.
    pub fn parse(text: &str) -> Result<Self, LawError> {
        let mut entries = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            let (k, p) = part
                .split_once(':')
                .ok_or_else(|| LawError::Parse(part.to_string()))?;
            let k: i64 = k
                .trim()
                .parse()
                .map_err(|_| LawError::Parse(part.to_string()))?;
            let p: f64 = parse_prob(p.trim()).ok_or_else(|| LawError::Parse(part.to_string()))?;
            entries.push((k, p));
        }
        Self::new(&entries)
    }

    /// Renders the text form; `parse(render(law))` reproduces the law.
    pub fn render(&self) -> String {
        self.support
            .iter()
            .map(|&(k, p)| format!("{k}:{p}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn support(&self) -> &[(i64, f64)] {
        &self.support
    }

    pub fn prob(&self, offset: i64) -> f64 {
        self.support
            .iter()
            .find(|&&(k, _)| k == offset)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Absolute moment of order 1, 2, 3 or 5.
    pub fn abs_moment(&self, order: u32) -> f64 {
        match order {
            1 => self.abs_moments[0],
            2 => self.abs_moments[1],
            3 => self.abs_moments[2],
            5 => self.abs_moments[3],
            _ => panic!("abs_moment supports orders 1, 2, 3, 5"),
        }
    }

    pub fn zero_allowed(&self) -> bool {
        self.zero_allowed
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean.abs() < 1e-12
    }

    pub fn is_aperiodic(&self) -> bool {
        self.period == 1
    }

    pub fn max_up(&self) -> i64 {
        self.support
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(k, _)| k)
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_offset(&self) -> i64 {
        self.support
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(k, _)| k.abs())
            .max()
            .unwrap_or(0)
    }

    /// Requires the flags walk experiments depend on.
    pub fn require_mean_zero(&self) -> Result<(), LawError> {
        if self.is_mean_zero() {
            Ok(())
        } else {
            Err(LawError::NonzeroMean(self.mean))
        }
    }

    pub fn require_aperiodic(&self) -> Result<(), LawError> {
        if self.is_aperiodic() {
            Ok(())
        } else {
            Err(LawError::Periodic(self.period))
        }
    }

    pub fn require_no_zero_step(&self) -> Result<(), LawError> {
        if self.zero_allowed {
            Err(LawError::ZeroStep)
        } else {
            Ok(())
        }
    }

    /// Inverse-CDF sample from a uniform in [0, 1).
    #[inline]
    pub fn sample_unit(&self, u: f64) -> i64 {
        for (i, &c) in self.cdf.iter().enumerate() {
            if u < c {
                return self.support[i].0;
            }
        }
        self.support.last().expect("nonempty").0
    }

    /// Law of the difference of two independent copies (one negated),
    /// i.e. the law driving the gap between two independent walkers.
    pub fn difference_law(&self) -> IncrementDistribution {
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        for &(a, p) in &self.support {
            for &(b, q) in &self.support {
                *acc.entry(a - b).or_default() += p * q;
            }
        }
        let entries: Vec<(i64, f64)> = acc.into_iter().collect();
        IncrementDistribution::new(&entries).expect("difference of valid law is valid")
    }

    /// Exact rational form of the support, or None when some probability
    /// is not within 1e-9 of a fraction with denominator <= 10^6 whose
    /// total is exactly 1.
    pub fn rationalize(&self) -> Option<Vec<(i64, BigRational)>> {
        let mut out = Vec::with_capacity(self.support.len());
        let mut total = BigRational::from_integer(0.into());
        for &(k, p) in &self.support {
            let r = rational_approx(p, 1_000_000, 1e-9)?;
            total += &r;
            out.push((k, r));
        }
        if total == BigRational::from_integer(1.into()) {
            Some(out)
        } else {
            None
        }
    }
}

fn parse_prob(text: &str) -> Option<f64> {
    if let Some((num, den)) = text.split_once('/') {
        let n: f64 = num.trim().parse().ok()?;
        let d: f64 = den.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        Some(n / d)
    } else {
        text.parse().ok()
    }
}

/// Period (gcd of possible return times, 0 if none seen) and
/// irreducibility via reachability closure over 40 convolution steps.
fn reachability_profile(offsets: &[i64]) -> (u32, bool) {
    let mut current: HashSet<i64> = offsets.iter().copied().collect();
    let mut reach: HashSet<i64> = current.clone();
    let mut period_gcd: u64 = 0;
    for n in 1..=REACH_STEPS {
        if current.contains(&0) {
            period_gcd = gcd(period_gcd, n as u64);
        }
        if n == REACH_STEPS {
            break;
        }
        let mut next = HashSet::with_capacity(current.len() * offsets.len());
        for &s in &current {
            for &y in offsets {
                next.insert(s + y);
            }
        }
        reach.extend(next.iter().copied());
        current = next;
    }
    let mut g: u64 = 0;
    let mut has_pos = false;
    let mut has_neg = false;
    for &r in &reach {
        if r > 0 {
            has_pos = true;
        }
        if r < 0 {
            has_neg = true;
        }
        g = gcd(g, r.unsigned_abs());
    }
    (period_gcd as u32, g == 1 && has_pos && has_neg)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Best rational approximation of `x` with denominator at most `max_den`,
/// accepted only when within `tol`. Continued-fraction convergents.
fn rational_approx(x: f64, max_den: i64, tol: f64) -> Option<BigRational> {
    let mut a = x.floor() as i64;
    let (mut h0, mut h1) = (1i64, a);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut frac = x - a as f64;
    for _ in 0..64 {
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= tol {
            return Some(BigRational::new(h1.into(), k1.into()));
        }
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        a = inv.floor() as i64;
        frac = inv - a as f64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
    }
    let approx = h1 as f64 / k1 as f64;
    if (approx - x).abs() <= tol {
        Some(BigRational::new(h1.into(), k1.into()))
    } else {
        None
    }
}

/// Ladder height distribution: law of the walk's value when it first
/// reaches [1, +inf), starting from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderVariable {
    /// pmf over ladder values k >= 1.
    pub pmf: BTreeMap<i64, f64>,
    /// Probability the walk has not exceeded 0 within the computation's
    /// horizon (or parked below its position band).
    pub tail_mass: f64,
    /// Mean of the pmf as computed (not renormalized).
    pub mean: f64,
}

impl LadderVariable {
    fn from_pmf(pmf: BTreeMap<i64, f64>) -> Self {
        let mut s = Kahan::default();
        let mut m = Kahan::default();
        for (&k, &p) in &pmf {
            debug_assert!(k >= 1);
            s.add(p);
            m.add(k as f64 * p);
        }
        let tail_mass = (1.0 - s.value()).max(0.0);
        LadderVariable {
            pmf,
            tail_mass,
            mean: m.value(),
        }
    }

    /// P[Z >= k].
    pub fn tail_at_or_above(&self, k: i64) -> f64 {
        if k <= 1 {
            // Z >= 1 always; include unresolved mass.
            return 1.0;
        }
        self.pmf
            .iter()
            .filter(|&(&j, _)| j >= k)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Same distribution with the unresolved tail redistributed
    /// proportionally; usable when tail_mass is small but not tiny.
    pub fn renormalized(&self) -> Result<LadderVariable, LawError> {
        let total: f64 = self.pmf.values().sum();
        if total <= 0.0 {
            return Err(LawError::EmptyLadder);
        }
        let pmf = self.pmf.iter().map(|(&k, &p)| (k, p / total)).collect();
        Ok(LadderVariable::from_pmf(pmf))
    }
}

/// Ladder height law by dynamic programming over (position, step count)
/// up to `horizon` steps on the position band [-depth, 0]. Mass leaving
/// the band downward is parked and counted in tail_mass; mass still below
/// 1 at the horizon is likewise tail_mass.
pub fn ladder_heights_dp(
    law: &IncrementDistribution,
    horizon: usize,
    depth: i64,
) -> Result<LadderVariable, LawError> {
    law.require_mean_zero()?;
    law.require_aperiodic()?;
    assert!(depth >= law.max_abs_offset(), "band must cover one jump");
    let n = depth as usize + 1; // positions -depth..=0
    let idx = |x: i64| (x + depth) as usize;
    let mut cur = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    cur[idx(0)] = 1.0;
    let mut pmf: BTreeMap<i64, f64> = BTreeMap::new();
    for _ in 0..horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in -depth..=0 {
            let mass = cur[idx(x)];
            if mass == 0.0 {
                continue;
            }
            for &(y, p) in law.support() {
                let z = x + y;
                if z >= 1 {
                    *pmf.entry(z).or_default() += mass * p;
                } else if z >= -depth {
                    next[idx(z)] += mass * p;
                }
                // z < -depth: parked, contributes to tail_mass
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(LadderVariable::from_pmf(pmf))
}

/// Ladder height law by solving the first-passage equations exactly on
/// the band [-depth, 0]. Jumps below the band are redirected to the
/// band floor; the first-passage law from a site stabilizes
/// exponentially fast with depth, so the result carries only rounding
/// error and tail_mass is at the 1e-12 scale.
pub fn ladder_heights_exact(
    law: &IncrementDistribution,
    depth: i64,
) -> Result<LadderVariable, LawError> {
    law.require_mean_zero()?;
    law.require_aperiodic()?;
    assert!(depth >= law.max_abs_offset(), "band must cover one jump");
    let n = depth as usize + 1;
    let idx = |x: i64| (x + depth) as usize;
    let mut a = vec![vec![0.0f64; n]; n];
    for x in -depth..=0 {
        a[idx(x)][idx(x)] = 1.0;
        for &(y, p) in law.support() {
            let z = x + y;
            if z <= 0 {
                a[idx(x)][idx(z.max(-depth))] -= p;
            }
        }
    }
    let max_up = law.max_up();
    let mut rhs = vec![vec![0.0f64; n]; max_up as usize];
    for (kcol, rhs_k) in rhs.iter_mut().enumerate() {
        let k = kcol as i64 + 1;
        for x in -depth..=0 {
            let need = k - x;
            rhs_k[idx(x)] = law.prob(need);
        }
    }
    lu_solve_in_place(&mut a, &mut rhs);
    let mut pmf = BTreeMap::new();
    for (kcol, rhs_k) in rhs.iter().enumerate() {
        let p = rhs_k[idx(0)].max(0.0);
        if p > 0.0 {
            pmf.insert(kcol as i64 + 1, p);
        }
    }
    if pmf.is_empty() {
        return Err(LawError::EmptyLadder);
    }
    Ok(LadderVariable::from_pmf(pmf))
}

/// Dense LU with partial pivoting; solves A x = b for every column in
/// `rhs`, overwriting it with the solutions.
fn lu_solve_in_place(a: &mut [Vec<f64>], rhs: &mut [Vec<f64>]) {
    let n = a.len();
    for col in 0..n {
        let (mut piv, mut best) = (col, a[col][col].abs());
        for (r, row) in a.iter().enumerate().skip(col + 1) {
            if row[col].abs() > best {
                best = row[col].abs();
                piv = r;
            }
        }
        assert!(best > 0.0, "singular first-passage system");
        if piv != col {
            a.swap(col, piv);
            for b in rhs.iter_mut() {
                b.swap(col, piv);
            }
        }
        let d = a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            a[r][col] = 0.0;
            for c in col + 1..n {
                let v = a[col][c];
                if v != 0.0 {
                    a[r][c] -= f * v;
                }
            }
            for b in rhs.iter_mut() {
                let v = b[col];
                if v != 0.0 {
                    b[r] -= f * v;
                }
            }
        }
    }
    for b in rhs.iter_mut() {
        for col in (0..n).rev() {
            let mut v = b[col];
            for c in col + 1..n {
                v -= a[col][c] * b[c];
            }
            b[col] = v / a[col][col];
        }
    }
}

/// Limiting law of the landing site when a walk from far below first
/// reaches [0, +inf): P[land at k] = P[Z >= k+1] / E[Z]. Requires an
/// essentially fully resolved ladder (tail below 1e-6).
pub fn limiting_overshoot(
    law: &IncrementDistribution,
    ladder: &LadderVariable,
) -> Result<Vec<f64>, LawError> {
    if ladder.tail_mass > OVERSHOOT_TAIL_BOUND {
        return Err(LawError::HeavyTail(ladder.tail_mass, OVERSHOOT_TAIL_BOUND));
    }
    overshoot_from_ladder(law, ladder)
}

/// Same formula with the ladder tail renormalized away first; the
/// tolerant route for horizon-truncated dynamic-programming ladders,
/// accurate to roughly the tail mass.
pub fn limiting_overshoot_renormalized(
    law: &IncrementDistribution,
    ladder: &LadderVariable,
) -> Result<Vec<f64>, LawError> {
    if ladder.tail_mass > 0.05 {
        return Err(LawError::HeavyTail(ladder.tail_mass, 0.05));
    }
    overshoot_from_ladder(law, &ladder.renormalized()?)
}

fn overshoot_from_ladder(
    law: &IncrementDistribution,
    ladder: &LadderVariable,
) -> Result<Vec<f64>, LawError> {
    if ladder.pmf.is_empty() || ladder.mean <= 0.0 {
        return Err(LawError::EmptyLadder);
    }
    let max_up = law.max_up();
    let mut out = Vec::with_capacity(max_up as usize);
    for k in 0..max_up {
        out.push(ladder.tail_at_or_above(k + 1) / ladder.mean);
    }
    let total: f64 = out.iter().sum();
    debug_assert!(
        (total - 1.0).abs() < 1e-8,
        "overshoot masses sum to {total}"
    );
    Ok(out)
}

/// Truncated moment sum (1/E[Z]) * sum_k k^r P[Z >= k+1]; the limit of
/// the overshoot's r-th moment. Reported, never asserted against a
/// closed form.
pub fn limiting_overshoot_moment(ladder: &LadderVariable, r: u32) -> f64 {
    let max_k = ladder.pmf.keys().next_back().copied().unwrap_or(0);
    let sum: f64 = (1..max_k)
        .map(|k| (k as f64).powi(r as i32) * ladder.tail_at_or_above(k + 1))
        .sum();
    sum / ladder.mean
}

/// The lazy uniform law on {-1, 0, 1}; default for universality-class
/// experiments in discrete time.
pub fn lazy_uniform() -> IncrementDistribution {
    IncrementDistribution::new(&[(-1, 1.0 / 3.0), (0, 1.0 / 3.0), (1, 1.0 / 3.0)]).expect("valid")
}

/// The uniform law on {-2, -1, 1, 2}; default for crossing-path
/// experiments and valid in continuous time.
pub fn uniform_pm12() -> IncrementDistribution {
    IncrementDistribution::new(&[(-2, 0.25), (-1, 0.25), (1, 0.25), (2, 0.25)]).expect("valid")
}
