//! Space-time compactification and path metrics.
//!
//! Space-time points (x, t) with x, t in the extended reals embed into a
//! bounded set via (Phi, Psi) = (tanh(x)/(1+|t|), tanh(t)); the whole
//! lines t = +-inf collapse to the two points (0, +-1). Paths are
//! piecewise-linear or piecewise-constant functions of time starting at
//! t0; their distance is the sup of compactified spatial differences
//! (with paths extended by their start value before t0 and their final
//! value after their last breakpoint) joined with the compactified
//! start-time difference. The sup is evaluated on breakpoints plus a
//! uniform grid in the compactified time axis and reported together
//! with a rigorous resolution-dependent error bound.
//!
//! This module also hosts the counting functionals over path sets (how
//! many distinct positions are generated at time t0+t from an interval
//! at time t0, and the dual count of positions landing in an interval)
//! and the detector for the tightness probe event: a path touching a
//! small rectangle and later a side boundary of the 17x wider, 2x
//! taller rectangle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of uniform grid points across the compactified time
/// axis when evaluating path distances.
pub const DEFAULT_GRID: usize = 10_000;
/// Horizontal widening factor of the large tightness rectangle.
pub const PROBE_WIDEN: f64 = 17.0;
/// Vertical stretch factor of the large tightness rectangle.
pub const PROBE_HEIGHTEN: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path needs at least one breakpoint")]
    NoBreakpoints,
    #[error("breakpoint times must be finite and strictly increasing at index {0}")]
    BadTimes(usize),
    #[error("position at breakpoint {0} is NaN")]
    BadPosition(usize),
    #[error("path set is empty")]
    EmptySet,
    #[error("counting query needs t > 0")]
    BadQuery,
    #[error("probe needs positive u and t")]
    BadProbe,
    #[error("cannot parse path set line {0:?}")]
    Parse(String),
}

/// How a path interpolates between its breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    /// Right-continuous, holds each value until the next breakpoint.
    Step,
    /// Linear between consecutive breakpoints.
    Interpolated,
}

/// A path of finite data: strictly increasing breakpoint times starting
/// at t0, evaluated per its kind, extended by constants outside the
/// breakpoint range (before t0 this is the standard hat extension; after
/// the final breakpoint the path is taken to sit still).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    t0: f64,
    points: Vec<(f64, f64)>,
    kind: PathKind,
}

impl Path {
    /// Positions may be +-inf (constant ideal paths are legitimate
    /// metric fixtures) but never NaN.
    pub fn new(points: Vec<(f64, f64)>, kind: PathKind) -> Result<Self, PathError> {
        if points.is_empty() {
            return Err(PathError::NoBreakpoints);
        }
        for (i, &(t, x)) in points.iter().enumerate() {
            if !t.is_finite() {
                return Err(PathError::BadTimes(i));
            }
            if x.is_nan() {
                return Err(PathError::BadPosition(i));
            }
            if i > 0 && t <= points[i - 1].0 {
                return Err(PathError::BadTimes(i));
            }
        }
        Ok(Path {
            t0: points[0].0,
            points,
            kind,
        })
    }

    pub fn constant(t0: f64, x: f64) -> Self {
        Path::new(vec![(t0, x)], PathKind::Interpolated).expect("single breakpoint")
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().expect("nonempty").0
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// Value at time t for t in [t0, end]; callers outside that range
    /// get the constant extension (hat convention before t0).
    pub fn value(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= self.t0 {
            return pts[0].1;
        }
        if t >= self.end_time() {
            return pts.last().expect("nonempty").1;
        }
        // Index of last breakpoint with time <= t.
        let i = match pts.binary_search_by(|&(bt, _)| bt.partial_cmp(&t).expect("no NaN")) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        match self.kind {
            PathKind::Step => pts[i].1,
            PathKind::Interpolated => {
                let (t1, x1) = pts[i];
                let (t2, x2) = pts[i + 1];
                x1 + (x2 - x1) * ((t - t1) / (t2 - t1))
            }
        }
    }

    /// Left limit at time t (differs from value only for step paths at
    /// breakpoint times).
    pub fn value_left(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= self.t0 {
            return pts[0].1;
        }
        if self.kind == PathKind::Interpolated {
            return self.value(t);
        }
        let i = match pts.binary_search_by(|&(bt, _)| bt.partial_cmp(&t).expect("no NaN")) {
            Ok(i) => i.saturating_sub(1),
            Err(i) => i - 1,
        };
        pts[i].1
    }

    /// Slope magnitude of the segment containing t (interior), 0 for
    /// step paths and outside the breakpoint range.
    fn slope_at(&self, t: f64) -> f64 {
        if self.kind == PathKind::Step || t <= self.t0 || t >= self.end_time() {
            return 0.0;
        }
        let pts = &self.points;
        let i = match pts.binary_search_by(|&(bt, _)| bt.partial_cmp(&t).expect("no NaN")) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (t1, x1) = pts[i];
        let (t2, x2) = pts[i + 1];
        if x1.is_infinite() || x2.is_infinite() {
            return 0.0; // constant ideal segment
        }
        ((x2 - x1) / (t2 - t1)).abs()
    }

    /// Breakpoints mapped by (t, x) -> (scale_t * t, scale_x * x),
    /// exact on each coordinate.
    pub fn scaled(&self, scale_x: f64, scale_t: f64) -> Path {
        let points = self
            .points
            .iter()
            .map(|&(t, x)| (scale_t * t, scale_x * x))
            .collect();
        Path::new(points, self.kind).expect("scaling preserves ordering")
    }
}

/// Compactified image of a space-time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactPoint {
    pub phi: f64,
    pub psi: f64,
}

/// (x, t) -> (tanh(x)/(1+|t|), tanh(t)); +-inf allowed in both
/// coordinates, the t = +-inf lines collapse to (0, +-1).
pub fn compactify(x: f64, t: f64) -> CompactPoint {
    debug_assert!(!x.is_nan() && !t.is_nan());
    let psi = t.tanh();
    let denom = 1.0 + t.abs();
    let phi = if denom.is_infinite() {
        0.0
    } else {
        x.tanh() / denom
    };
    CompactPoint { phi, psi }
}

/// Metric on compactified space-time: max coordinate difference of the
/// images. Exact (no grid involved).
pub fn rho(p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let a = compactify(p1.0, p1.1);
    let b = compactify(p2.0, p2.1);
    (a.phi - b.phi).abs().max((a.psi - b.psi).abs())
}

/// A distance evaluated on a finite grid, with a bound on how far the
/// true supremum can exceed the reported value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDistance {
    pub value: f64,
    pub error_bound: f64,
}

/// Evaluation times for a pair of paths: both breakpoint sets, t = 0
/// (kink of 1/(1+|t|)), start times, and a uniform grid in the
/// compactified time coordinate.
fn evaluation_times(p1: &Path, p2: &Path, grid: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = Vec::with_capacity(p1.points.len() + p2.points.len() + grid + 4);
    ts.extend(p1.points.iter().map(|&(t, _)| t));
    ts.extend(p2.points.iter().map(|&(t, _)| t));
    ts.push(0.0);
    let g = grid.max(2);
    for j in 0..=g {
        let psi = -1.0 + 2.0 * j as f64 / g as f64;
        if psi.abs() < 1.0 {
            ts.push(psi.atanh());
        }
    }
    ts.retain(|t| t.is_finite());
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    ts.dedup();
    ts
}

/// Distance between two paths: sup over time of the compactified
/// spatial difference (hat extension below start, constant extension
/// beyond end) joined with |Psi(t0_1) - Psi(t0_2)|. The sup is taken
/// over `evaluation_times`; the error bound collects, per evaluation
/// gap, a Lipschitz bound on the compactified difference, and is zero
/// on gaps where both paths are constant (there the difference is
/// monotone in t, so endpoint evaluation is exact).
pub fn path_distance(p1: &Path, p2: &Path, grid: usize) -> GridDistance {
    let ts = evaluation_times(p1, p2, grid);
    let mut sup: f64 = 0.0;
    // Right values and left limits both matter for step paths; at any
    // actual time both paths evaluate consistently, so only the
    // matched (right, right) and (left, left) pairs arise as limits.
    for &t in &ts {
        let d_right = (compactify(p1.value(t), t).phi - compactify(p2.value(t), t).phi).abs();
        let d_left =
            (compactify(p1.value_left(t), t).phi - compactify(p2.value_left(t), t).phi).abs();
        sup = sup.max(d_right).max(d_left);
    }
    let mut bound: f64 = 0.0;
    for w in ts.windows(2) {
        let (u, v) = (w[0], w[1]);
        let tmin = if u <= 0.0 && v >= 0.0 {
            0.0
        } else {
            u.abs().min(v.abs())
        };
        let s1 = p1.slope_at(0.5 * (u + v));
        let s2 = p2.slope_at(0.5 * (u + v));
        if s1 == 0.0 && s2 == 0.0 {
            continue; // both constant on the gap: sup attained at the ends
        }
        let lip = (s1 + s2) / (1.0 + tmin) + 2.0 / (1.0 + tmin).powi(2);
        bound = bound.max(0.5 * (v - u) * lip);
    }
    // As t -> +-inf every Phi tends to 0, so the tails beyond the
    // outermost grid points contribute at most the value at those
    // points plus a vanishing correction already covered by the grid.
    let start_term = (p1.t0.tanh() - p2.t0.tanh()).abs();
    GridDistance {
        value: sup.max(start_term),
        error_bound: bound,
    }
}

/// Hausdorff distance between two finite path sets under
/// `path_distance`: max over both directed sup-inf distances. The error
/// bound is the largest bound among the pairwise evaluations that
/// realized the sup-inf structure (conservatively, all of them).
pub fn hausdorff(k1: &[Path], k2: &[Path], grid: usize) -> Result<GridDistance, PathError> {
    if k1.is_empty() || k2.is_empty() {
        return Err(PathError::EmptySet);
    }
    let mut bound: f64 = 0.0;
    let mut directed = |from: &[Path], to: &[Path]| -> f64 {
        let mut worst: f64 = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                let d = path_distance(p, q, grid);
                bound = bound.max(d.error_bound);
                best = best.min(d.value);
            }
            worst = worst.max(best);
        }
        worst
    };
    let value = directed(k1, k2).max(directed(k2, k1));
    Ok(GridDistance {
        value,
        error_bound: bound,
    })
}

/// Hausdorff distance between finite sets of space-time points under
/// rho. Exact.
pub fn pointset_distance(a1: &[(f64, f64)], a2: &[(f64, f64)]) -> Result<f64, PathError> {
    if a1.is_empty() || a2.is_empty() {
        return Err(PathError::EmptySet);
    }
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
        from.iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| rho(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(a1, a2).max(directed(a2, a1)))
}

/// Positions generated at time t0+t from the interval [a, b] at t0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingQuery {
    pub t0: f64,
    pub t: f64,
    pub a: f64,
    pub b: f64,
}

impl CountingQuery {
    pub fn new(t0: f64, t: f64, a: f64, b: f64) -> Result<Self, PathError> {
        if !(t > 0.0) || a > b || !a.is_finite() || !b.is_finite() {
            return Err(PathError::BadQuery);
        }
        Ok(CountingQuery { t0, t, a, b })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    /// Distinct positions at time t0+t of paths alive at t0 that touch
    /// [a, b] x {t0}.
    pub n_set: Vec<f64>,
    /// |n_set|.
    pub eta: usize,
    /// Distinct positions inside the open interval (a, b) at time t0+t
    /// among paths started at or before t0.
    pub eta_hat: usize,
}

fn sorted_dedup(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    xs.dedup();
    xs
}

/// Counting functionals over a finite path set. Paths are evaluated by
/// their declared kind (step paths by right continuity); only paths
/// with start time <= t0 participate in either count.
pub fn count_paths(k: &[Path], q: &CountingQuery) -> CountResult {
    let te = q.t0 + q.t;
    let mut gen_positions = Vec::new();
    let mut landing = Vec::new();
    for p in k {
        if p.t0 > q.t0 {
            continue;
        }
        let at_t0 = p.value(q.t0);
        let at_te = p.value(te);
        if at_t0 >= q.a && at_t0 <= q.b {
            gen_positions.push(at_te);
        }
        if at_te > q.a && at_te < q.b {
            landing.push(at_te);
        }
    }
    let n_set = sorted_dedup(gen_positions);
    let eta = n_set.len();
    let eta_hat = sorted_dedup(landing).len();
    CountResult { n_set, eta, eta_hat }
}

/// Geometry of the tightness probe: touch R(x0,t0;u,t), then at a later
/// time touch the left or right boundary of R(x0,t0;17u,2t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessProbe {
    pub x0: f64,
    pub t0: f64,
    pub u: f64,
    pub t: f64,
}

impl TightnessProbe {
    pub fn new(x0: f64, t0: f64, u: f64, t: f64) -> Result<Self, PathError> {
        if !(u > 0.0) || !(t > 0.0) {
            return Err(PathError::BadProbe);
        }
        Ok(TightnessProbe { x0, t0, u, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeSide {
    None,
    Plus,
    Minus,
    Both,
}

/// Earliest time in [w_lo, w_hi] at which the path's graph (domain
/// [t0, end]) enters the band [x_lo, x_hi], or None. Step paths are
/// scanned piece by piece; interpolated paths solve the linear
/// crossing within each segment.
fn first_touch_band(p: &Path, x_lo: f64, x_hi: f64, w_lo: f64, w_hi: f64) -> Option<f64> {
    let lo = w_lo.max(p.t0);
    let hi = w_hi.min(p.end_time());
    if lo > hi {
        return None;
    }
    let inside = |x: f64| x >= x_lo && x <= x_hi;
    let pts = &p.points;
    match p.kind {
        PathKind::Step => {
            for (k, &(t1, x1)) in pts.iter().enumerate() {
                if t1 > hi {
                    break;
                }
                let next = pts.get(k + 1).map_or(f64::INFINITY, |&(t, _)| t);
                // Piece value x1 on [t1, next).
                if inside(x1) && next > lo {
                    return Some(t1.max(lo));
                }
            }
            // The final breakpoint value holds at the single instant end.
            let &(tl, xl) = pts.last().expect("nonempty");
            (inside(xl) && tl >= lo && tl <= hi).then_some(tl)
        }
        PathKind::Interpolated => {
            if pts.len() == 1 {
                return inside(pts[0].1).then_some(lo);
            }
            for w in pts.windows(2) {
                let (t1, x1) = w[0];
                let (t2, x2) = w[1];
                if t1 > hi {
                    break;
                }
                let a = t1.max(lo);
                let b = t2.min(hi);
                if a > b {
                    continue;
                }
                let val = |t: f64| x1 + (x2 - x1) * ((t - t1) / (t2 - t1));
                let (va, vb) = (val(a), val(b));
                if inside(va) {
                    return Some(a);
                }
                if va < x_lo && vb >= x_lo {
                    return Some(t1 + (x_lo - x1) / (x2 - x1) * (t2 - t1));
                }
                if va > x_hi && vb <= x_hi {
                    return Some(t1 + (x_hi - x1) / (x2 - x1) * (t2 - t1));
                }
            }
            None
        }
    }
}

/// Is there a time in (after, w_hi] at which the path reaches the level
/// on the stated side? Interpolated paths must touch the level exactly
/// (segment crossing); step paths touch when they reach or exceed it
/// (a jump can step over the line without landing on it).
fn reaches_level(p: &Path, level: f64, plus_side: bool, after: f64, w_hi: f64) -> bool {
    let hi = w_hi.min(p.end_time());
    if after >= hi {
        return false;
    }
    let beyond = |x: f64| {
        if plus_side {
            x >= level
        } else {
            x <= level
        }
    };
    let pts = &p.points;
    match p.kind {
        PathKind::Step => {
            for (k, &(t1, x1)) in pts.iter().enumerate() {
                if t1 > hi {
                    break;
                }
                let next = pts.get(k + 1).map_or(f64::INFINITY, |&(t, _)| t);
                // Value x1 on [t1, next): overlaps (after, hi]?
                if beyond(x1) && next > after && t1 <= hi {
                    return true;
                }
            }
            false
        }
        PathKind::Interpolated => {
            for w in pts.windows(2) {
                let (t1, x1) = w[0];
                let (t2, x2) = w[1];
                if t1 > hi {
                    break;
                }
                if x1 != x2 && level >= x1.min(x2) && level <= x1.max(x2) {
                    let tau = t1 + (level - x1) / (x2 - x1) * (t2 - t1);
                    if tau > after && tau <= hi {
                        return true;
                    }
                } else if x1 == x2 && x1 == level && t2 > after && t1 <= hi {
                    return true;
                }
            }
            false
        }
    }
}

/// Does some path touch the small rectangle and, at a strictly later
/// time, the left or right boundary of the large rectangle?
pub fn detect_tightness_event(k: &[Path], probe: &TightnessProbe) -> (bool, ProbeSide) {
    let small_lo = probe.x0 - probe.u;
    let small_hi = probe.x0 + probe.u;
    let big_hw = PROBE_WIDEN * probe.u;
    let t_lo = probe.t0;
    let t_small_hi = probe.t0 + probe.t;
    let t_big_hi = probe.t0 + PROBE_HEIGHTEN * probe.t;
    let mut plus = false;
    let mut minus = false;
    for p in k {
        let Some(touch) = first_touch_band(p, small_lo, small_hi, t_lo, t_small_hi) else {
            continue;
        };
        if !plus && reaches_level(p, probe.x0 + big_hw, true, touch, t_big_hi) {
            plus = true;
        }
        if !minus && reaches_level(p, probe.x0 - big_hw, false, touch, t_big_hi) {
            minus = true;
        }
        if plus && minus {
            break;
        }
    }
    let side = match (plus, minus) {
        (true, true) => ProbeSide::Both,
        (true, false) => ProbeSide::Plus,
        (false, true) => ProbeSide::Minus,
        (false, false) => ProbeSide::None,
    };
    (plus || minus, side)
}

/// Line-oriented path-set serialization with bit-exact round-trip:
/// floats use the shortest decimal form that recovers the exact f64.
pub fn pathset_to_log(paths: &[Path]) -> String {
    let mut out = String::from("paths v1\n");
    for p in paths {
        let kind = match p.kind {
            PathKind::Step => "step",
            PathKind::Interpolated => "interpolated",
        };
        out.push_str(&format!("path {} {}\n", kind, p.points.len()));
        for &(t, x) in &p.points {
            out.push_str(&format!("{t} {x}\n"));
        }
    }
    out
}

pub fn pathset_from_log(text: &str) -> Result<Vec<Path>, PathError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("paths v1") => {}
        other => return Err(PathError::Parse(other.unwrap_or("").to_string())),
    }
    let mut paths = Vec::new();
    while let Some(header) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let mut it = header.split_whitespace();
        let (tag, kind, n) = (it.next(), it.next(), it.next());
        if tag != Some("path") {
            return Err(PathError::Parse(header.to_string()));
        }
        let kind = match kind {
            Some("step") => PathKind::Step,
            Some("interpolated") => PathKind::Interpolated,
            _ => return Err(PathError::Parse(header.to_string())),
        };
        let n: usize = n
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PathError::Parse(header.to_string()))?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| PathError::Parse("eof".into()))?;
            let mut it = line.split_whitespace();
            let t: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PathError::Parse(line.to_string()))?;
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| PathError::Parse(line.to_string()))?;
            points.push((t, x));
        }
        paths.push(Path::new(points, kind).map_err(|_| PathError::Parse(header.to_string()))?);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn interp(points: Vec<(f64, f64)>) -> Path {
        Path::new(points, PathKind::Interpolated).unwrap()
    }

    fn step(points: Vec<(f64, f64)>) -> Path {
        Path::new(points, PathKind::Step).unwrap()
    }

    #[test]
    fn compactify_special_points() {
        let origin = compactify(0.0, 0.0);
        assert_eq!((origin.phi, origin.psi), (0.0, 0.0));
        let right = compactify(f64::INFINITY, 0.0);
        assert_eq!((right.phi, right.psi), (1.0, 0.0));
        let top = compactify(f64::INFINITY, f64::INFINITY);
        assert_eq!((top.phi, top.psi), (0.0, 1.0));
        let bottom = compactify(3.0, f64::NEG_INFINITY);
        assert_eq!((bottom.phi, bottom.psi), (0.0, -1.0));
    }

    #[test]
    fn rho_basics() {
        assert_eq!(rho((2.0, 1.0), (2.0, 1.0)), 0.0);
        assert_eq!(rho((0.0, 0.0), (0.0, f64::INFINITY)), 1.0);
        // Frozen: unit horizontal separation at time 0.
        let d = rho((0.0, 0.0), (1.0, 0.0));
        assert!((d - 0.7615941559557649).abs() < 1e-16);
    }

    #[test]
    fn rho_symmetric_on_random_pairs() {
        let mut s = rng::stream(0x9a7e);
        for _ in 0..1000 {
            let p = (rng::next_unit(&mut s) * 20.0 - 10.0, rng::next_unit(&mut s) * 20.0 - 10.0);
            let q = (rng::next_unit(&mut s) * 20.0 - 10.0, rng::next_unit(&mut s) * 20.0 - 10.0);
            assert_eq!(rho(p, q), rho(q, p));
            if p != q {
                assert!(rho(p, q) > 0.0, "injective on distinct finite points");
            }
        }
    }

    #[test]
    fn path_evaluation_step_and_interpolated() {
        let s = step(vec![(0.0, 0.0), (1.0, 2.0)]);
        assert_eq!(s.value(0.0), 0.0);
        assert_eq!(s.value(0.999), 0.0);
        assert_eq!(s.value(1.0), 2.0);
        assert_eq!(s.value_left(1.0), 0.0);
        assert_eq!(s.value(5.0), 2.0);
        let k = interp(vec![(0.0, 0.0), (1.0, 2.0)]);
        assert_eq!(k.value(0.5), 1.0);
        assert_eq!(k.value(1.0), 2.0);
        assert_eq!(k.value(-3.0), 0.0, "hat extension before start");
    }

    #[test]
    fn distance_of_path_to_itself_is_zero() {
        let p = interp(vec![(0.0, 0.0), (1.0, 2.0), (3.0, -1.0)]);
        let d = path_distance(&p, &p, 100);
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn distance_constant_zero_to_constant_infinity_is_one() {
        // sup_t |0 - tanh(inf)/(1+|t|)| = 1, attained at t = 0.
        let z = Path::constant(0.0, 0.0);
        let inf = Path::constant(0.0, f64::INFINITY);
        let d = path_distance(&z, &inf, DEFAULT_GRID);
        assert!((d.value - 1.0).abs() < 1e-12, "value {}", d.value);
    }

    #[test]
    fn distance_dominates_start_time_term() {
        let p = Path::constant(0.0, 0.0);
        let q = Path::constant(2.0, 0.0);
        let d = path_distance(&p, &q, 100);
        assert!((d.value - (2.0f64.tanh() - 0.0)).abs() < 1e-12);
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut s = rng::stream(0x7319);
        for _ in 0..200 {
            let mk = |s: &mut rand_chacha::ChaCha8Rng| {
                let t0 = rng::next_unit(s) * 4.0 - 2.0;
                let mut t = t0;
                let mut x = rng::next_unit(s) * 8.0 - 4.0;
                let mut pts = vec![(t, x)];
                for _ in 0..5 {
                    t += 0.25 + rng::next_unit(s);
                    x += rng::next_unit(s) * 4.0 - 2.0;
                    pts.push((t, x));
                }
                interp(pts)
            };
            let (a, b, c) = (mk(&mut s), mk(&mut s), mk(&mut s));
            let ab = path_distance(&a, &b, 400);
            let bc = path_distance(&b, &c, 400);
            let ac = path_distance(&a, &c, 400);
            let slack = ab.error_bound + bc.error_bound + ac.error_bound + 1e-12;
            assert!(
                ac.value <= ab.value + bc.value + slack,
                "triangle violated: {} > {} + {}",
                ac.value,
                ab.value,
                bc.value
            );
        }
    }

    #[test]
    fn hausdorff_degenerate_cases() {
        let p = interp(vec![(0.0, 0.0), (1.0, 1.0)]);
        let q = interp(vec![(0.0, 2.0), (1.0, 3.0)]);
        let kp = vec![p.clone()];
        let kq = vec![q.clone()];
        let dh = hausdorff(&kp, &kp, 200).unwrap();
        assert_eq!(dh.value, 0.0);
        let singletons = hausdorff(&kp, &kq, 200).unwrap();
        let direct = path_distance(&p, &q, 200);
        assert_eq!(singletons.value, direct.value);
        // Nested sets: distance is the directed distance from the superset
        // (the subset-to-superset direction vanishes).
        let both = vec![p.clone(), q.clone()];
        let nested = hausdorff(&kp, &both, 200).unwrap();
        assert_eq!(nested.value, direct.value);
        assert!(hausdorff(&[], &kp, 10).is_err());
    }

    #[test]
    fn pointset_distance_examples() {
        let a = vec![(0.0, 0.0)];
        let b = vec![(0.0, 0.0), (1.0, 0.0)];
        assert_eq!(pointset_distance(&a, &a).unwrap(), 0.0);
        let d = pointset_distance(&a, &b).unwrap();
        assert!((d - 1.0f64.tanh()).abs() < 1e-16);
        assert_eq!(d, pointset_distance(&b, &a).unwrap());
    }

    #[test]
    fn counting_basics() {
        let q = CountingQuery::new(0.0, 1.0, -0.5, 0.5).unwrap();
        assert_eq!(count_paths(&[], &q).eta, 0);
        // One path through the interval at t0, landing at 2.0 (outside (a,b)).
        let p = interp(vec![(0.0, 0.0), (1.0, 2.0)]);
        let r = count_paths(&[p.clone()], &q);
        assert_eq!(r.n_set, vec![2.0]);
        assert_eq!(r.eta, 1);
        assert_eq!(r.eta_hat, 0);
        // Degenerate interval: touch counts, open-interval count empty.
        let qq = CountingQuery::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let r = count_paths(&[p.clone()], &qq);
        assert_eq!((r.eta, r.eta_hat), (1, 0));
        // Paths born after t0 are excluded.
        let late = interp(vec![(0.5, 0.0), (1.0, 0.1)]);
        let r = count_paths(&[late], &q);
        assert_eq!((r.eta, r.eta_hat), (0, 0));
        // Coalesced paths (equal landing values) count once.
        let p2 = interp(vec![(0.0, 0.25), (1.0, 2.0)]);
        let r = count_paths(&[p.clone(), p2], &q);
        assert_eq!(r.eta, 1);
    }

    #[test]
    fn eta_hat_monotone_in_interval() {
        let mut s = rng::stream(0x11a5);
        for _ in 0..200 {
            let mut paths = Vec::new();
            for i in 0..12 {
                let x0 = i as f64 - 6.0;
                let x1 = x0 + rng::next_unit(&mut s) * 6.0 - 3.0;
                paths.push(interp(vec![(0.0, x0), (1.0, x1)]));
            }
            let inner = CountingQuery::new(0.0, 1.0, -1.0, 1.0).unwrap();
            let outer = CountingQuery::new(0.0, 1.0, -2.5, 2.0).unwrap();
            let ri = count_paths(&paths, &inner);
            let ro = count_paths(&paths, &outer);
            assert!(ri.eta_hat <= ro.eta_hat);
        }
    }

    #[test]
    fn tightness_event_witness_and_monotonicity() {
        let probe = TightnessProbe::new(0.0, 0.0, 1.0, 1.0).unwrap();
        // Enters the small rectangle then exceeds x0 + 17u before t0 + 2t.
        let witness = interp(vec![(0.0, 0.5), (1.5, 20.0)]);
        let (hit, side) = detect_tightness_event(&[witness.clone()], &probe);
        assert!(hit);
        assert_eq!(side, ProbeSide::Plus);
        // A tame path alone does not trigger it.
        let tame = interp(vec![(0.0, 0.3), (2.0, 0.4)]);
        let (hit, side) = detect_tightness_event(&[tame.clone()], &probe);
        assert!(!hit);
        assert_eq!(side, ProbeSide::None);
        // Adding paths never turns true into false.
        let (hit, _) = detect_tightness_event(&[tame, witness], &probe);
        assert!(hit);
        assert!(detect_tightness_event(&[], &probe).0 == false);
    }

    #[test]
    fn tightness_event_step_jump_over_boundary_counts() {
        let probe = TightnessProbe::new(0.0, 0.0, 1.0, 1.0).unwrap();
        // Step path jumps from inside the small rectangle to beyond +17
        // without landing on the line: reach-or-exceed convention.
        let p = step(vec![(0.0, 0.0), (1.0, 25.0)]);
        let (hit, side) = detect_tightness_event(&[p], &probe);
        assert!(hit);
        assert_eq!(side, ProbeSide::Plus);
        // Interpolated paths must actually cross the level.
        let q = interp(vec![(0.0, 0.0), (1.0, 16.9)]);
        let (hit, _) = detect_tightness_event(&[q], &probe);
        assert!(!hit);
    }

    #[test]
    fn pathset_log_round_trip_is_bit_exact() {
        let paths = vec![
            step(vec![(0.0, 0.0), (1.0, 2.0), (2.5, -3.0)]),
            interp(vec![(0.1234567890123457, 0.3333333333333333), (7.0, 1e-12)]),
            Path::constant(0.0, f64::INFINITY),
        ];
        let log = pathset_to_log(&paths);
        let back = pathset_from_log(&log).unwrap();
        assert_eq!(paths, back);
        assert_eq!(pathset_to_log(&back), log);
    }

    #[test]
    fn scaled_breakpoints_are_exact_products() {
        let p = step(vec![(100.0, 50.0), (101.0, 52.0)]);
        let (sx, st) = (0.1 / 2.0, 0.1 * 0.1);
        let s = p.scaled(sx, st);
        assert_eq!(s.points()[0], (100.0 * st, 50.0 * sx));
        assert_eq!(s.points()[1], (101.0 * st, 52.0 * sx));
        assert_eq!(s.kind(), PathKind::Step);
    }
}
