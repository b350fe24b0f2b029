//! Coalescence maps over finite path families.
//!
//! Two maps turn a family of independent paths into a coalescing one:
//! the crossing map merges a pair the first time the two paths coincide
//! or interchange their relative order, and the coincidence map merges
//! at the first exact equality at a breakpoint time (the walks sitting
//! on the same site). Both iterate the same rule: find the earliest
//! unresolved pair event, splice the higher-index class onto the lower
//! one from that time forward, and repeat. Replaced paths equal their
//! representative from the merge time on, so every later pair event
//! reduces to an event between original representative paths; the
//! iteration is therefore a single pass over all pairwise event times
//! in (time, i, j) order with a union-find, which is what is
//! implemented.
//!
//! A coalescing Brownian sampler is built from the crossing map with
//! crossings detected at grid nodes only, plus an equivalent ordered
//! sweep that skips dead paths, fast enough for point-intensity
//! reference runs with a hundred starts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pathspace::{Path, PathKind};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("family has no paths")]
    EmptyFamily,
    #[error("paths end at different horizons: {0} vs {1}")]
    MixedHorizons(f64, f64),
    #[error("path {0} has the wrong kind for this family")]
    WrongPathKind(usize),
    #[error("coincidence map is undefined on gaussian-grid families")]
    GaussianGridRefused,
    #[error("start ({x}, {t}) is not on the sampling grid")]
    OffGrid { x: f64, t: f64 },
    #[error("bad sampler parameters: {0}")]
    BadParams(String),
}

/// What pair events mean for this family. Lattice kinds carry walks
/// whose meaningful coincidence times are breakpoint times; the
/// gaussian-grid kind carries Brownian grid paths whose crossings are
/// detected at grid nodes only (sub-grid bridge crossings are a
/// recorded limitation, compensated by grid-halving checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    LatticeStep,
    LatticeInterpolated,
    GaussianGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependentFamily {
    pub kind: FamilyKind,
    pub paths: Vec<Path>,
}

impl IndependentFamily {
    pub fn new(kind: FamilyKind, paths: Vec<Path>) -> Result<Self, MapError> {
        if paths.is_empty() {
            return Err(MapError::EmptyFamily);
        }
        let horizon = paths[0].end_time();
        for (i, p) in paths.iter().enumerate() {
            if p.end_time() != horizon {
                return Err(MapError::MixedHorizons(horizon, p.end_time()));
            }
            let want = match kind {
                FamilyKind::LatticeStep => PathKind::Step,
                FamilyKind::LatticeInterpolated | FamilyKind::GaussianGrid => {
                    PathKind::Interpolated
                }
            };
            if p.kind() != want {
                return Err(MapError::WrongPathKind(i));
            }
        }
        Ok(IndependentFamily { kind, paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// One merge: at `time`, the class represented by `absorbed` was
/// spliced onto the one represented by `representative` (the smaller
/// index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub time: f64,
    pub absorbed: usize,
    pub representative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceState {
    /// Fully resolved: representative[i] is the least index of i's
    /// class, and representative[representative[i]] == representative[i].
    pub representative: Vec<usize>,
    /// Merge times are nondecreasing.
    pub merge_log: Vec<MergeRecord>,
}

impl EquivalenceState {
    fn identity(m: usize) -> Self {
        EquivalenceState {
            representative: (0..m).collect(),
            merge_log: Vec::new(),
        }
    }

    /// Earliest time i and j belong to one class, or None.
    pub fn pair_time(&self, i: usize, j: usize) -> Option<f64> {
        let mut rep: Vec<usize> = (0..self.representative.len()).collect();
        for r in &self.merge_log {
            let target = rep[r.absorbed];
            for v in rep.iter_mut() {
                if *v == target {
                    *v = r.representative;
                }
            }
            if rep[i] == rep[j] {
                return Some(r.time);
            }
        }
        if i == j {
            Some(f64::NEG_INFINITY)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairEvent {
    Crossing,
    Coincidence,
}

/// Breakpoint times of both paths, deduplicated, from the later birth
/// onward. Pair events are resolved on this grid.
fn union_times(p1: &Path, p2: &Path) -> Vec<f64> {
    let start = p1.t0().max(p2.t0());
    let mut ts: Vec<f64> = p1
        .points()
        .iter()
        .chain(p2.points())
        .map(|&(t, _)| t)
        .filter(|&t| t >= start)
        .collect();
    ts.push(start);
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    ts.dedup();
    ts
}

/// First time the two paths coincide or interchange their relative
/// order, on the family's event convention; None if they never do.
fn first_crossing(kind: FamilyKind, p1: &Path, p2: &Path) -> Option<f64> {
    let ts = union_times(p1, p2);
    let d_at = |t: f64| p1.value(t) - p2.value(t);
    match kind {
        FamilyKind::LatticeStep => {
            // Step values change only at breakpoints; the relative
            // order is a function of d at those times.
            let s0 = d_at(ts[0]);
            if s0 == 0.0 {
                return Some(ts[0]);
            }
            ts.into_iter()
                .find(|&t| d_at(t) == 0.0 || (d_at(t) > 0.0) != (s0 > 0.0))
        }
        FamilyKind::LatticeInterpolated | FamilyKind::GaussianGrid => {
            let d0 = d_at(ts[0]);
            if d0 == 0.0 {
                return Some(ts[0]);
            }
            let mut prev_t = ts[0];
            let mut prev_d = d0;
            for &t in &ts[1..] {
                let d = d_at(t);
                if d == 0.0 {
                    return Some(t);
                }
                if (d > 0.0) != (prev_d > 0.0) {
                    return Some(match kind {
                        // Grid-node detection: the merge happens at the
                        // node where the sign flip is observed.
                        FamilyKind::GaussianGrid => t,
                        // Piecewise-linear paths cross at the exact
                        // interior zero of their difference.
                        _ => prev_t + prev_d * (t - prev_t) / (prev_d - d),
                    });
                }
                prev_t = t;
                prev_d = d;
            }
            None
        }
    }
}

/// First breakpoint time at which the two paths are exactly equal
/// (the walks occupying one site); None if they never are.
fn first_coincidence(p1: &Path, p2: &Path) -> Option<f64> {
    union_times(p1, p2)
        .into_iter()
        .find(|&t| p1.value(t) == p2.value(t))
}

/// The absorbed path up to tau, then the representative from tau on.
/// At a coincidence or an interior crossing the two values agree and
/// the splice is seamless; at an order-interchange of step paths the
/// spliced path jumps to the representative's value at tau.
fn splice(absorbed: &Path, rep: &Path, tau: f64) -> Path {
    let mut pts: Vec<(f64, f64)> = absorbed
        .points()
        .iter()
        .copied()
        .filter(|&(t, _)| t < tau)
        .collect();
    pts.push((tau, rep.value(tau)));
    pts.extend(rep.points().iter().copied().filter(|&(t, _)| t > tau));
    Path::new(pts, absorbed.kind()).expect("strictly increasing times")
}

fn apply_map(
    family: &IndependentFamily,
    event: PairEvent,
) -> (Vec<Path>, EquivalenceState) {
    let m = family.len();
    let mut state = EquivalenceState::identity(m);
    // All pairwise event times between original paths, processed in
    // (time, i, j) order. Replaced paths equal their representative
    // from the merge on, so later events between classes are events
    // between original representative paths and no recomputation is
    // needed; pairs whose ends are no longer representatives are
    // skipped (their classes' relations are covered by rep pairs).
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let tau = match event {
                PairEvent::Crossing => first_crossing(family.kind, &family.paths[i], &family.paths[j]),
                PairEvent::Coincidence => first_coincidence(&family.paths[i], &family.paths[j]),
            };
            if let Some(t) = tau {
                events.push((t, i, j));
            }
        }
    }
    events.sort_by(|a, b| a.partial_cmp(b).expect("finite event times"));
    let mut rep: Vec<usize> = (0..m).collect();
    for (tau, i, j) in events {
        if rep[i] != i || rep[j] != j {
            continue;
        }
        for r in rep.iter_mut() {
            if *r == j {
                *r = i;
            }
        }
        state.merge_log.push(MergeRecord {
            time: tau,
            absorbed: j,
            representative: i,
        });
    }
    state.representative = rep;
    // Build output paths in index order; a representative's path is
    // original, and each absorbed path splices onto a smaller index
    // whose output is already built.
    let mut out: Vec<Path> = Vec::with_capacity(m);
    for i in 0..m {
        if state.representative[i] == i {
            out.push(family.paths[i].clone());
        } else {
            let rec = state
                .merge_log
                .iter()
                .find(|r| r.absorbed == i)
                .expect("absorbed index has a log entry");
            let spliced = splice(&family.paths[i], &out[rec.representative], rec.time);
            out.push(spliced);
        }
    }
    (out, state)
}

/// Crossing-coalescence: merge each pair of classes at their first
/// coincide-or-interchange time, least index representing.
pub fn apply_g(family: &IndependentFamily) -> (Vec<Path>, EquivalenceState) {
    apply_map(family, PairEvent::Crossing)
}

/// Coincidence-coalescence: merge at the first exact breakpoint
/// equality. On lattice families this reproduces genuine coalescing
/// random walks. Refused on gaussian-grid families, where exact
/// equality is a measure-zero event.
pub fn apply_f(family: &IndependentFamily) -> Result<(Vec<Path>, EquivalenceState), MapError> {
    if family.kind == FamilyKind::GaussianGrid {
        return Err(MapError::GaussianGridRefused);
    }
    Ok(apply_map(family, PairEvent::Coincidence))
}

/// Sup distance between two paths sharing a horizon, with constant
/// extension outside their domains, maxed with the difference of their
/// start times. Exact for step and piecewise-linear paths: the
/// difference changes linearly (or is constant) between breakpoint
/// times of either path, so the sup is attained on the union grid.
pub fn dbar(p1: &Path, p2: &Path) -> f64 {
    let mut ts: Vec<f64> = p1
        .points()
        .iter()
        .chain(p2.points())
        .map(|&(t, _)| t)
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    ts.dedup();
    let mut sup: f64 = 0.0;
    for &t in &ts {
        sup = sup.max((p1.value(t) - p2.value(t)).abs());
        // Step pairs can differ on left limits at shared jumps.
        sup = sup.max((p1.value_left(t) - p2.value_left(t)).abs());
    }
    sup.max((p1.t0() - p2.t0()).abs())
}

/// Max over indices of the sup distance between the coincidence- and
/// crossing-coalesced versions of the same family. The sup truncates
/// at the family horizon.
pub fn fg_distance(family: &IndependentFamily) -> Result<f64, MapError> {
    let (g_paths, _) = apply_g(family);
    let (f_paths, _) = apply_f(family)?;
    Ok(f_paths
        .iter()
        .zip(&g_paths)
        .map(|(f, g)| dbar(f, g))
        .fold(0.0, f64::max))
}

/// Family of independent lattice walks from the given starts: path p
/// takes increments keyed by (seed, p, step), so families are
/// reproducible and extendable in the horizon.
pub fn sample_walk_family(
    law: &crate::increments::IncrementDistribution,
    starts: &[i64],
    steps: u64,
    seed: u64,
    view: PathKind,
) -> Vec<Path> {
    starts
        .iter()
        .enumerate()
        .map(|(p, &x0)| {
            let mut x = x0;
            let mut pts = Vec::with_capacity(steps as usize + 1);
            pts.push((0.0, x as f64));
            for k in 0..steps {
                x += law.sample_unit(rng::uniform_at(seed, p as i64, k));
                pts.push(((k + 1) as f64, x as f64));
            }
            Path::new(pts, view).expect("increasing integer times")
        })
        .collect()
}

/// Brownian grid value streams: base increments are keyed by even
/// step indices, and one level of bridge refinement fills midpoints
/// with odd-keyed draws, so the halved-grid path runs through the
/// same base nodes as the coarse one (grid-halving checks compare
/// coupled refinements, not independent runs).
struct BmStream {
    seed: u64,
    path: u64,
    sqrt_dt: f64,
    halved: bool,
    base_step: u64,
    b_cur: f64,
    b_next: f64,
    at_mid: bool,
}

impl BmStream {
    fn new(seed: u64, path: u64, x0: f64, sqrt_dt: f64, halved: bool) -> Self {
        BmStream {
            seed,
            path,
            sqrt_dt,
            halved,
            base_step: 0,
            b_cur: x0,
            b_next: x0,
            at_mid: halved,
        }
    }

    /// Value at the stream's next grid node.
    fn next_value(&mut self) -> f64 {
        if !self.halved {
            let g = rng::gaussian_at(self.seed, self.path, 2 * self.base_step);
            self.b_cur += self.sqrt_dt * g;
            self.base_step += 1;
            return self.b_cur;
        }
        if self.at_mid {
            let g = rng::gaussian_at(self.seed, self.path, 2 * self.base_step);
            self.b_next = self.b_cur + self.sqrt_dt * g;
            let mid = rng::gaussian_at(self.seed, self.path, 2 * self.base_step + 1);
            self.at_mid = false;
            0.5 * (self.b_cur + self.b_next) + 0.5 * self.sqrt_dt * mid
        } else {
            self.b_cur = self.b_next;
            self.base_step += 1;
            self.at_mid = true;
            self.b_cur
        }
    }
}

/// Result of the ordered coalescing sweep: the equivalence built and
/// the surviving classes' (representative, horizon value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BmSweepResult {
    pub state: EquivalenceState,
    pub survivors: Vec<(usize, f64)>,
}

/// Coalescing Brownian motions from sorted same-time starts, merged by
/// the crossing map at grid nodes, without materializing paths: only
/// class representatives are simulated, so runtime follows the class
/// count (which collapses quickly) rather than the start count.
///
/// Equivalent to materializing the family and running apply_g: classes
/// in start order keep strictly ordered values while unmerged, so a
/// node has a crossing iff the ordered value list has an adjacent
/// violation, and within a node the same lexicographic pair rule is
/// applied until the order is restored.
pub fn coalescing_bm_sweep(
    starts: &[f64],
    steps: u64,
    dt: f64,
    halved: bool,
    trial_seed: u64,
) -> BmSweepResult {
    debug_assert!(starts.windows(2).all(|w| w[0] <= w[1]), "sorted starts");
    let m = starts.len();
    let mut state = EquivalenceState::identity(m);
    let mut rep_of: Vec<usize> = (0..m).collect();
    // Alive classes in start order: (representative, current value).
    let mut classes: Vec<(usize, f64, BmStream)> = starts
        .iter()
        .enumerate()
        .map(|(p, &x0)| {
            (
                p,
                x0,
                BmStream::new(trial_seed, p as u64, x0, dt.sqrt(), halved),
            )
        })
        .collect();
    let (nodes, node_dt) = if halved {
        (2 * steps, 0.5 * dt)
    } else {
        (steps, dt)
    };
    for k in 0..=nodes {
        if k > 0 {
            for c in classes.iter_mut() {
                c.1 = c.2.next_value();
            }
        }
        let t = k as f64 * node_dt;
        // Resolve crossings: find the lexicographically least pair of
        // representatives out of order (or touching), merge, repeat.
        loop {
            let mut hit: Option<(usize, usize)> = None;
            'outer: for a in 0..classes.len() {
                for b in a + 1..classes.len() {
                    if classes[a].1 >= classes[b].1 {
                        hit = Some((a, b));
                        break 'outer;
                    }
                }
            }
            let Some((a, b)) = hit else { break };
            let (keep, gone) = (classes[a].0, classes[b].0);
            state.merge_log.push(MergeRecord {
                time: t,
                absorbed: gone,
                representative: keep,
            });
            for r in rep_of.iter_mut() {
                if *r == gone {
                    *r = keep;
                }
            }
            classes.remove(b);
        }
        // Fast path for the next node: no violation means no pair
        // event anywhere, since values are strictly increasing.
        debug_assert!(classes.windows(2).all(|w| w[0].1 < w[1].1));
    }
    state.representative = rep_of;
    BmSweepResult {
        state,
        survivors: classes.into_iter().map(|(r, v, _)| (r, v)).collect(),
    }
}

/// Independent unit-diffusion Brownian grid paths from the starts,
/// coalesced by the crossing map with node-level detection. Starts
/// must sit on the sampling grid spanned by the earliest start.
pub fn sample_coalescing_bm(
    starts: &[(f64, f64)],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<(Vec<Path>, EquivalenceState), MapError> {
    if starts.is_empty() {
        return Err(MapError::EmptyFamily);
    }
    if !(dt > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(MapError::BadParams(format!("dt {dt}, horizon {horizon}")));
    }
    let t_min = starts
        .iter()
        .map(|&(_, t)| t)
        .fold(f64::INFINITY, f64::min);
    let grid_index = |t: f64| -> Result<u64, MapError> {
        let k = (t - t_min) / dt;
        if (k - k.round()).abs() > 1e-9 * (1.0 + k.abs()) || k.round() < 0.0 {
            return Err(MapError::OffGrid { x: f64::NAN, t });
        }
        Ok(k.round() as u64)
    };
    let total = grid_index(horizon)?;
    if total == 0 {
        return Err(MapError::BadParams("horizon at or before first start".into()));
    }
    let mut paths = Vec::with_capacity(starts.len());
    for (p, &(x0, t0)) in starts.iter().enumerate() {
        let k0 = grid_index(t0).map_err(|_| MapError::OffGrid { x: x0, t: t0 })?;
        if k0 > total {
            return Err(MapError::BadParams(format!("start {p} after horizon")));
        }
        let mut stream = BmStream::new(seed, p as u64, x0, dt.sqrt(), false);
        let mut pts = Vec::with_capacity((total - k0) as usize + 1);
        pts.push((t_min + k0 as f64 * dt, x0));
        for k in k0..total {
            let v = stream.next_value();
            pts.push((t_min + (k + 1) as f64 * dt, v));
        }
        paths.push(Path::new(pts, PathKind::Interpolated).expect("increasing grid times"));
    }
    let family = IndependentFamily::new(FamilyKind::GaussianGrid, paths)?;
    Ok(apply_g(&family))
}
