//! Coalescing random-walk systems on finite space-time windows.
//!
//! Increments are keyed by site: in discrete time the jump taken from
//! site s into round n is a pure function of (trial seed, s, n), and in
//! continuous time each site carries one Poisson(1) clock stream whose
//! rings each come with an increment. Walkers sharing a site therefore
//! move identically, so coalescence ("same site at the same time") is
//! automatic in the dynamics and only the merge bookkeeping is explicit.
//! Walkers at distinct sites never read the same key before they meet,
//! so they move as independent walks until coalescence, which is the
//! defining property of the system.
//!
//! Besides walker-level simulation this module has a torus occupancy
//! engine (the same site-keyed flow applied to a set of occupied sites,
//! used for density and counting experiments where only the occupied
//! set matters), an exact small-instance enumeration oracle in rational
//! arithmetic, and a first-meeting-time sampler for pairs of
//! continuous-time walkers.

use std::collections::HashMap;

use num::{BigRational, Zero};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::increments::{IncrementDistribution, LawError};
use crate::pathspace::{Path, PathKind};
use crate::rng;
use crate::stats::mean_se;

/// Occupancy experiments refuse a torus narrower than 10 sigma sqrt(t):
/// wrap-around correlations would bias the density estimate.
pub const DENSITY_WIDTH_FACTOR: f64 = 10.0;
/// Enumeration refuses when |support|^(width * steps) exceeds this.
pub const ENUMERATION_BUDGET: f64 = 1e8;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("bad window: {0}")]
    BadWindow(String),
    #[error("origin ({site}, {time}) outside window")]
    OriginOutsideWindow { site: i64, time: f64 },
    #[error("discrete time {0} is not an integer")]
    NonIntegerTime(f64),
    #[error("torus width {width} below guard {need:.1}")]
    WidthTooSmall { width: i64, need: f64 },
    #[error("enumeration budget exceeded: needs {need:.3e} tuples, cap {cap:.0e}")]
    BudgetExceeded { need: f64, cap: f64 },
    #[error("law probabilities are not exactly rational at denominator <= 10^6")]
    NotRational,
    #[error("cannot parse event log: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeKind {
    Discrete,
    Continuous,
}

/// Order-preserving map from finite floats to u64 (two's-complement
/// style sign flip), for use as a heap key.
pub(crate) fn time_key(t: f64) -> u64 {
    let b = t.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Sites live on [x_lo, x_hi) with wrap-around.
    Torus,
    /// Walkers roam [x_lo - buffer, x_hi + buffer]; leaving that band
    /// freezes the walker and flags the system.
    BufferedOpen { buffer: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeWindow {
    pub x_lo: i64,
    pub x_hi: i64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub boundary: Boundary,
}

impl SpaceTimeWindow {
    pub fn new(
        x_lo: i64,
        x_hi: i64,
        t_lo: f64,
        t_hi: f64,
        boundary: Boundary,
    ) -> Result<Self, WalkError> {
        if x_lo >= x_hi {
            return Err(WalkError::BadWindow(format!("x_lo {x_lo} >= x_hi {x_hi}")));
        }
        if !(t_lo < t_hi) || !t_lo.is_finite() || !t_hi.is_finite() {
            return Err(WalkError::BadWindow(format!("t_lo {t_lo}, t_hi {t_hi}")));
        }
        if matches!(boundary, Boundary::Torus) && x_hi - x_lo < 3 {
            return Err(WalkError::BadWindow("torus width < 3".into()));
        }
        if let Boundary::BufferedOpen { buffer } = boundary {
            if buffer < 0 {
                return Err(WalkError::BadWindow("negative buffer".into()));
            }
        }
        Ok(SpaceTimeWindow {
            x_lo,
            x_hi,
            t_lo,
            t_hi,
            boundary,
        })
    }

    pub fn torus(width: i64, t_hi: f64) -> Result<Self, WalkError> {
        Self::new(0, width, 0.0, t_hi, Boundary::Torus)
    }

    pub fn width(&self) -> i64 {
        self.x_hi - self.x_lo
    }

    /// Simulated band including the buffer (equals the window on a torus).
    pub fn band(&self) -> (i64, i64) {
        match self.boundary {
            Boundary::Torus => (self.x_lo, self.x_hi - 1),
            Boundary::BufferedOpen { buffer } => (self.x_lo - buffer, self.x_hi + buffer),
        }
    }

    fn contains_origin(&self, site: i64, time: f64) -> bool {
        site >= self.x_lo && site < self.x_hi && time >= self.t_lo && time <= self.t_hi
    }

    fn reduce(&self, site: i64) -> i64 {
        match self.boundary {
            Boundary::Torus => {
                let w = self.width();
                (site - self.x_lo).rem_euclid(w) + self.x_lo
            }
            Boundary::BufferedOpen { .. } => site,
        }
    }
}

/// A simulated family of coalescing walkers.
///
/// `events[i]` lists walker i's own jumps as (landing time, landing
/// site); the birth breakpoint lives in `origins[i]`. Once a walker is
/// absorbed (`merges[i] = Some((time, absorber))`) it records no
/// further events and its queried positions delegate to the absorber,
/// which always has a smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescingSystem {
    pub window: SpaceTimeWindow,
    pub time_kind: TimeKind,
    pub law: IncrementDistribution,
    pub origins: Vec<(i64, f64)>,
    pub events: Vec<Vec<(f64, i64)>>,
    pub merges: Vec<Option<(f64, usize)>>,
    /// Walkers frozen after leaving the buffered band; any experiment
    /// touching one is invalid and must re-run with a larger buffer.
    pub frozen: Vec<usize>,
    /// Next ring time strictly after t_hi per finally-occupied site
    /// (continuous time only; drives the last interpolation segment).
    pub post_rings: HashMap<i64, f64>,
    pub seed: u64,
}

impl CoalescingSystem {
    pub fn walker_count(&self) -> usize {
        self.origins.len()
    }

    pub fn has_frozen(&self) -> bool {
        !self.frozen.is_empty()
    }

    /// Representative of the walker's coalescence class at time t.
    pub fn representative(&self, walker: usize, t: f64) -> usize {
        let mut i = walker;
        while let Some((s, j)) = self.merges[i] {
            if s <= t {
                i = j;
            } else {
                break;
            }
        }
        i
    }

    /// Step-view position at time t (right continuous; t at or after
    /// the walker's birth).
    pub fn position(&self, walker: usize, t: f64) -> f64 {
        let i = self.representative(walker, t);
        let mut pos = self.origins[i].0 as f64;
        for &(s, x) in &self.events[i] {
            if s <= t {
                pos = x as f64;
            } else {
                break;
            }
        }
        // The representative chain may itself have merged before t only
        // via a smaller index, already resolved by `representative`.
        pos
    }

    /// Walker's full breakpoint sequence with merge splicing: own birth
    /// and events until absorption, then the absorber's events. The
    /// result is the step path's breakpoints (landing times and sites).
    fn spliced(&self, walker: usize) -> Vec<(f64, i64)> {
        let (site0, t0) = self.origins[walker];
        let mut out: Vec<(f64, i64)> = vec![(t0, site0)];
        let mut i = walker;
        let mut from = self.origins[walker].1;
        loop {
            let cut = self.merges[i].map(|(s, _)| s);
            for &(s, x) in &self.events[i] {
                if s < from {
                    continue;
                }
                if let Some(c) = cut {
                    if s > c {
                        break;
                    }
                }
                // Births merged at time zero keep a single breakpoint.
                if s > out.last().expect("nonempty").0 {
                    out.push((s, x));
                }
            }
            match self.merges[i] {
                Some((s, j)) => {
                    i = j;
                    from = s;
                }
                None => break,
            }
        }
        out
    }

    /// Paths in the requested view. Discrete systems share breakpoints
    /// between views (positions at integer times). Continuous systems
    /// follow the jump-point convention: the interpolated path holds
    /// its birth site until its first ring, then runs linearly between
    /// consecutive jump points, so it reaches each landing site only at
    /// the next ring; the final segment aims at the site's first ring
    /// after the horizon and is cut at t_hi.
    pub fn paths_of(&self, view: PathKind) -> Vec<Path> {
        (0..self.walker_count())
            .map(|w| self.path_of(w, view))
            .collect()
    }

    pub fn path_of(&self, walker: usize, view: PathKind) -> Path {
        let ev = self.spliced(walker);
        let horizon = self.window.t_hi;
        let pts: Vec<(f64, f64)> = match (self.time_kind, view) {
            (TimeKind::Discrete, _) | (TimeKind::Continuous, PathKind::Step) => {
                ev.iter().map(|&(t, x)| (t, x as f64)).collect()
            }
            (TimeKind::Continuous, PathKind::Interpolated) => {
                let mut pts: Vec<(f64, f64)> = Vec::with_capacity(ev.len() + 1);
                let (t_b, x_b) = ev[0];
                pts.push((t_b, x_b as f64));
                for k in 1..ev.len() {
                    pts.push((ev[k].0, ev[k - 1].1 as f64));
                }
                let &(t_last, x_last) = ev.last().expect("nonempty");
                if ev.len() == 1 {
                    // No jumps: constant at the birth site to the horizon.
                    if horizon > t_b {
                        pts.push((horizon, x_b as f64));
                    }
                } else {
                    // Head toward the next ring of the final site, cut at
                    // the horizon. Frozen walkers sit still instead.
                    match self.post_rings.get(&x_last) {
                        Some(&t_next) if t_next > t_last => {
                            let from = *pts.last().expect("nonempty");
                            let frac = (horizon.min(t_next) - t_last) / (t_next - t_last);
                            let x_at = from.1 + (x_last as f64 - from.1) * frac;
                            if horizon > t_last {
                                pts.push((horizon.min(t_next), x_at));
                            }
                        }
                        _ => {
                            if horizon > t_last {
                                pts.push((horizon, x_last as f64));
                            }
                        }
                    }
                }
                pts
            }
        };
        Path::new(pts, view).expect("breakpoints are strictly increasing")
    }

    /// Diffusive rescaling of the chosen view: every breakpoint (t, x)
    /// maps exactly to (delta^2 t, (delta / sigma) x).
    pub fn rescale(&self, delta: f64, view: PathKind) -> ScaledPathSet {
        let sigma = self.law.sigma();
        ScaledPathSet {
            delta,
            sigma,
            paths: self
                .paths_of(view)
                .iter()
                .map(|p| p.scaled(delta / sigma, delta * delta))
                .collect(),
        }
    }
}

/// Paths carried into macroscopic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPathSet {
    pub delta: f64,
    pub sigma: f64,
    pub paths: Vec<Path>,
}

fn require_integer(t: f64) -> Result<i64, WalkError> {
    if t.fract() != 0.0 || t.abs() > 2f64.powi(52) {
        return Err(WalkError::NonIntegerTime(t));
    }
    Ok(t as i64)
}

/// Discrete-time simulation: all walkers jump synchronously at integer
/// times; a walker born at (x, n) has positions x at n and x + Y at
/// n + 1 (its first jump segment departs at birth). After each round,
/// walkers sharing a site merge with the least index absorbing.
pub fn simulate_discrete(
    window: SpaceTimeWindow,
    law: &IncrementDistribution,
    origins: &[(i64, f64)],
    seed: u64,
) -> Result<CoalescingSystem, WalkError> {
    law.require_mean_zero()?;
    law.require_aperiodic()?;
    if !law.irreducible() {
        return Err(LawError::Reducible.into());
    }
    let t_lo = require_integer(window.t_lo)?;
    let t_hi = require_integer(window.t_hi)?;
    let mut births: Vec<(i64, i64, usize)> = Vec::with_capacity(origins.len()); // (time, site, id)
    for (id, &(site, time)) in origins.iter().enumerate() {
        if !window.contains_origin(site, time) {
            return Err(WalkError::OriginOutsideWindow { site, time });
        }
        births.push((require_integer(time)?, site, id));
    }
    births.sort();
    let n = origins.len();
    let mut sys = CoalescingSystem {
        window,
        time_kind: TimeKind::Discrete,
        law: law.clone(),
        origins: origins.to_vec(),
        events: vec![Vec::new(); n],
        merges: vec![None; n],
        frozen: Vec::new(),
        post_rings: HashMap::new(),
        seed,
    };
    let band = window.band();
    let mut live: Vec<usize> = Vec::new(); // active representatives, ascending
    let mut pos: Vec<i64> = vec![0; n];
    let mut next_birth = 0usize;
    for t in t_lo..=t_hi {
        // Land the round-t jumps (walkers alive from earlier rounds).
        if t > t_lo {
            for &w in &live {
                let s = pos[w];
                let u = rng::uniform_at(seed, s, rng::zigzag(t));
                let s2 = window.reduce(s + law.sample_unit(u));
                pos[w] = s2;
                sys.events[w].push((t as f64, s2));
            }
        }
        // Births at time t.
        while next_birth < births.len() && births[next_birth].0 == t {
            let (_, site, id) = births[next_birth];
            next_birth += 1;
            pos[id] = window.reduce(site);
            live.push(id);
        }
        live.sort_unstable();
        // Merge everyone sharing a site; least index absorbs.
        let mut occupied: HashMap<i64, usize> = HashMap::with_capacity(live.len());
        let mut survivors: Vec<usize> = Vec::with_capacity(live.len());
        for &w in &live {
            match occupied.entry(pos[w]) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    sys.merges[w] = Some((t as f64, *e.get()));
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(w);
                    survivors.push(w);
                }
            }
        }
        // Freeze survivors outside the buffered band.
        live = survivors
            .into_iter()
            .filter(|&w| {
                let inside = pos[w] >= band.0 && pos[w] <= band.1;
                if !inside {
                    sys.frozen.push(w);
                }
                inside
            })
            .collect();
    }
    sys.frozen.sort_unstable();
    Ok(sys)
}

/// Lazily sampled per-site Poisson(1) clock streams. Each ring draws a
/// (gap, increment) pair so the field over a site is a fixed sequence
/// regardless of when and whether walkers observe it; consumption is
/// monotone in time because the event loop runs in time order.
pub struct SiteClocks<'a> {
    seed: u64,
    t_origin: f64,
    law: &'a IncrementDistribution,
    states: HashMap<i64, ClockState>,
}

struct ClockState {
    rng: ChaCha8Rng,
    next_time: f64,
    next_jump: i64,
}

impl<'a> SiteClocks<'a> {
    pub fn new(seed: u64, t_origin: f64, law: &'a IncrementDistribution) -> Self {
        SiteClocks {
            seed,
            t_origin,
            law,
            states: HashMap::new(),
        }
    }

    fn state(&mut self, site: i64) -> &mut ClockState {
        let seed = self.seed;
        let t0 = self.t_origin;
        let law = self.law;
        self.states.entry(site).or_insert_with(|| {
            let mut rng = rng::stream(rng::derive(seed, rng::zigzag(site)));
            let next_time = t0 + rng::next_exp(&mut rng);
            let next_jump = law.sample_unit(rng::next_unit(&mut rng));
            ClockState {
                rng,
                next_time,
                next_jump,
            }
        })
    }

    /// Next (ring time, increment) of the site's clock.
    pub fn peek(&mut self, site: i64) -> (f64, i64) {
        let st = self.state(site);
        (st.next_time, st.next_jump)
    }

    /// Consume the pending ring and draw the next one.
    pub fn advance(&mut self, site: i64) {
        let law = self.law;
        let st = self.state(site);
        st.next_time += rng::next_exp(&mut st.rng);
        st.next_jump = law.sample_unit(rng::next_unit(&mut st.rng));
    }

    /// First ring strictly after time t (consuming earlier rings).
    pub fn first_after(&mut self, site: i64, t: f64) -> (f64, i64) {
        loop {
            let (s, y) = self.peek(site);
            if s > t {
                return (s, y);
            }
            self.advance(site);
        }
    }
}

/// Continuous-time simulation: independent rate-1 clocks per site, all
/// walkers at a ringing site jump together by the ring's increment, and
/// a walker landing on (or born at) an occupied site merges immediately
/// with the occupant, least index absorbing.
pub fn simulate_continuous(
    window: SpaceTimeWindow,
    law: &IncrementDistribution,
    origins: &[(i64, f64)],
    seed: u64,
) -> Result<CoalescingSystem, WalkError> {
    law.require_no_zero_step()?;
    let mut births: Vec<(f64, i64, usize)> = Vec::with_capacity(origins.len());
    for (id, &(site, time)) in origins.iter().enumerate() {
        if !window.contains_origin(site, time) {
            return Err(WalkError::OriginOutsideWindow { site, time });
        }
        births.push((time, site, id));
    }
    births.sort_by(|a, b| (a.0, a.2).partial_cmp(&(b.0, b.2)).expect("finite"));
    let n = origins.len();
    let mut sys = CoalescingSystem {
        window,
        time_kind: TimeKind::Continuous,
        law: law.clone(),
        origins: origins.to_vec(),
        events: vec![Vec::new(); n],
        merges: vec![None; n],
        frozen: Vec::new(),
        post_rings: HashMap::new(),
        seed,
    };
    let band = window.band();
    let mut clocks = SiteClocks::new(seed, window.t_lo, law);
    let mut occupied: HashMap<i64, usize> = HashMap::new();
    // One pending heap entry per occupied site (a site leaves the
    // occupancy only when its own ring fires, so entries never go
    // stale); equal times order deterministically by site. The popped
    // exact ring time is re-read from the site's clock.
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, i64)>> =
        std::collections::BinaryHeap::new();
    let key = |t: f64, site: i64| std::cmp::Reverse((time_key(t), site));
    let mut next_birth = 0usize;
    loop {
        let next_ring = heap
            .peek()
            .map(|&std::cmp::Reverse((_, site))| (clocks.peek(site).0, site));
        let birth_due = births.get(next_birth).map(|&(t, _, _)| t);
        let take_birth = match (birth_due, next_ring) {
            (Some(tb), Some((tr, _))) => tb <= tr,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if take_birth {
            let (t_b, site, id) = births[next_birth];
            next_birth += 1;
            let site = window.reduce(site);
            match occupied.entry(site) {
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    let other = *e.get();
                    if other < id {
                        sys.merges[id] = Some((t_b, other));
                    } else {
                        sys.merges[other] = Some((t_b, id));
                        e.insert(id);
                    }
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(id);
                    let (t_next, _) = clocks.first_after(site, t_b);
                    heap.push(key(t_next, site));
                }
            }
            continue;
        }
        let Some((tau, site)) = next_ring else { break };
        if tau > window.t_hi {
            break;
        }
        heap.pop();
        let w = *occupied.get(&site).expect("pending entries match occupancy");
        debug_assert_eq!(clocks.peek(site).0, tau);
        let (_, y) = clocks.peek(site);
        clocks.advance(site);
        let dest = window.reduce(site + y);
        occupied.remove(&site);
        sys.events[w].push((tau, dest));
        if dest == site {
            // Full wrap on a narrow torus: the walker stays put.
            occupied.insert(site, w);
            heap.push(key(clocks.peek(site).0, site));
            continue;
        }
        match occupied.entry(dest) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let other = *e.get();
                if other < w {
                    sys.merges[w] = Some((tau, other));
                } else {
                    sys.merges[other] = Some((tau, w));
                    e.insert(w);
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                if dest < band.0 || dest > band.1 {
                    sys.frozen.push(w);
                } else {
                    e.insert(w);
                    let (t_next, _) = clocks.first_after(dest, tau);
                    heap.push(key(t_next, dest));
                }
            }
        }
    }
    // Record the first post-horizon ring of each finally occupied site
    // for the interpolated view's final segment.
    for (&site, _) in &occupied {
        let (t_next, _) = clocks.first_after(site, window.t_hi);
        sys.post_rings.insert(site, t_next);
    }
    sys.frozen.sort_unstable();
    Ok(sys)
}

/// Torus occupancy flow: the set of occupied sites after `rounds`
/// synchronous site-keyed jumps, starting from every site occupied.
/// Returned sorted. This is the same dynamics as `simulate_discrete`
/// restricted to what density and counting experiments need.
pub fn occupancy_flow_torus(
    law: &IncrementDistribution,
    width: i64,
    rounds: u64,
    trial_seed: u64,
) -> Vec<i64> {
    let w = width as usize;
    let mut cur: Vec<i64> = (0..width).collect();
    let mut next: Vec<i64> = Vec::with_capacity(w);
    let mut stamp: Vec<u64> = vec![u64::MAX; w];
    for n in 1..=rounds {
        next.clear();
        for &s in &cur {
            let u = rng::uniform_at(trial_seed, s, rng::zigzag(n as i64));
            let d = (s + law.sample_unit(u)).rem_euclid(width);
            if stamp[d as usize] != n {
                stamp[d as usize] = n;
                next.push(d);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur.sort_unstable();
    cur
}

/// Estimated occupation density p_t = P(0 occupied) for the system
/// started from every site: mean over trials of |xi_t| / width, with
/// its standard error. Trials are independent (seed derived per trial)
/// and reduced in index order, so the result does not depend on the
/// worker count.
pub fn density(
    law: &IncrementDistribution,
    t: u64,
    torus_width: i64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64), WalkError> {
    law.require_mean_zero()?;
    law.require_aperiodic()?;
    let need = DENSITY_WIDTH_FACTOR * law.sigma() * (t as f64).sqrt();
    if (torus_width as f64) < need {
        return Err(WalkError::WidthTooSmall {
            width: torus_width,
            need,
        });
    }
    let values = crate::stats::run_trials(trials, |trial| {
        let trial_seed = rng::derive(seed, trial);
        let occ = occupancy_flow_torus(law, torus_width, t, trial_seed);
        occ.len() as f64 / torus_width as f64
    });
    Ok(mean_se(&values))
}

/// Exact occupancy and pair-occupancy probabilities on a torus after a
/// few synchronous rounds, by dynamic programming over the distribution
/// of the occupied set with exact rational weights. Site increments are
/// independent across sites and rounds, and unoccupied sites' draws
/// integrate out, which is what makes the subset distribution closed.
#[derive(Debug, Clone)]
pub struct ExactOccupancy {
    pub width: i64,
    pub steps: u64,
    pub single: Vec<BigRational>,
    /// pair[i][j] for i < j, flattened row by row.
    pub pair: Vec<Vec<BigRational>>,
}

impl ExactOccupancy {
    pub fn occupancy(&self, x: i64) -> &BigRational {
        &self.single[x as usize]
    }

    pub fn pair(&self, x: i64, y: i64) -> &BigRational {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        &self.pair[a as usize][(b - a) as usize - 1]
    }

    /// P(x)P(y) - P(x,y); nonnegative when occupancies are negatively
    /// correlated.
    pub fn negcorr_margin(&self, x: i64, y: i64) -> BigRational {
        self.occupancy(x) * self.occupancy(y) - self.pair(x, y)
    }
}

pub fn enumerate_exact(
    law: &IncrementDistribution,
    torus_width: i64,
    steps: u64,
) -> Result<ExactOccupancy, WalkError> {
    let support = law.support().iter().filter(|&&(_, p)| p > 0.0).count();
    let need = (support as f64).powf((torus_width * steps as i64) as f64);
    if !(need <= ENUMERATION_BUDGET) {
        return Err(WalkError::BudgetExceeded {
            need,
            cap: ENUMERATION_BUDGET,
        });
    }
    let rational = law.rationalize().ok_or(WalkError::NotRational)?;
    let rational: Vec<(i64, BigRational)> = rational
        .into_iter()
        .filter(|(_, p)| !p.is_zero())
        .collect();
    let w = torus_width as usize;
    assert!(w <= 60, "mask representation");
    let full: u64 = (1u64 << w) - 1;
    let mut dist: HashMap<u64, BigRational> = HashMap::new();
    dist.insert(full, BigRational::from_integer(1.into()));
    for _ in 0..steps {
        let mut next: HashMap<u64, BigRational> = HashMap::new();
        for (mask, prob) in &dist {
            let sites: Vec<i64> = (0..torus_width).filter(|&s| mask >> s & 1 == 1).collect();
            // Mixed-radix enumeration of one increment per occupied site.
            let mut idx = vec![0usize; sites.len()];
            loop {
                let mut new_mask = 0u64;
                let mut p = prob.clone();
                for (k, &s) in sites.iter().enumerate() {
                    let (y, q) = &rational[idx[k]];
                    new_mask |= 1u64 << (s + y).rem_euclid(torus_width);
                    p *= q;
                }
                *next
                    .entry(new_mask)
                    .or_insert_with(|| BigRational::from_integer(0.into())) += p;
                // Advance the odometer.
                let mut k = 0;
                loop {
                    if k == sites.len() {
                        break;
                    }
                    idx[k] += 1;
                    if idx[k] < rational.len() {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == sites.len() {
                    break;
                }
            }
        }
        dist = next;
    }
    let zero = BigRational::from_integer(0.into());
    let mut single = vec![zero.clone(); w];
    let mut pair = (0..w)
        .map(|i| vec![zero.clone(); w - i - 1])
        .collect::<Vec<_>>();
    for (mask, prob) in &dist {
        for i in 0..w {
            if mask >> i & 1 == 0 {
                continue;
            }
            single[i] += prob;
            for j in i + 1..w {
                if mask >> j & 1 == 1 {
                    pair[i][j - i - 1] += prob;
                }
            }
        }
    }
    Ok(ExactOccupancy {
        width: torus_width,
        steps,
        single,
        pair,
    })
}

/// First time two continuous-time walkers started at (x0, 0) and
/// (x1, 0) occupy the same site, or None past the horizon. Driven by
/// the same per-site clock field as `simulate_continuous`.
pub fn pair_meeting_time(
    law: &IncrementDistribution,
    x0: i64,
    x1: i64,
    horizon: f64,
    trial_seed: u64,
) -> Result<Option<f64>, WalkError> {
    law.require_no_zero_step()?;
    if x0 == x1 {
        return Ok(Some(0.0));
    }
    let mut clocks = SiteClocks::new(trial_seed, 0.0, law);
    let mut a = x0;
    let mut b = x1;
    let (mut ta, mut ya) = clocks.first_after(a, 0.0);
    let (mut tb, mut yb) = clocks.first_after(b, 0.0);
    loop {
        // Earlier ring jumps first; ties cannot occur across distinct
        // sites (independent continuous draws).
        if ta <= tb {
            if ta > horizon {
                return Ok(None);
            }
            clocks.advance(a);
            a += ya;
            if a == b {
                return Ok(Some(ta));
            }
            let t = ta;
            let (s, y) = clocks.first_after(a, t);
            ta = s;
            ya = y;
        } else {
            if tb > horizon {
                return Ok(None);
            }
            clocks.advance(b);
            b += yb;
            if b == a {
                return Ok(Some(tb));
            }
            let t = tb;
            let (s, y) = clocks.first_after(b, t);
            tb = s;
            yb = y;
        }
    }
}

/// Line-oriented event-log serialization with bit-exact round-trip.
pub fn system_to_log(sys: &CoalescingSystem) -> String {
    let mut out = String::from("system v1\n");
    let (b, buf) = match sys.window.boundary {
        Boundary::Torus => ("torus", 0),
        Boundary::BufferedOpen { buffer } => ("open", buffer),
    };
    out.push_str(&format!(
        "window {} {} {} {} {} {}\n",
        sys.window.x_lo, sys.window.x_hi, sys.window.t_lo, sys.window.t_hi, b, buf
    ));
    out.push_str(&format!("law {}\n", sys.law.render()));
    out.push_str(&format!(
        "time {}\n",
        match sys.time_kind {
            TimeKind::Discrete => "discrete",
            TimeKind::Continuous => "continuous",
        }
    ));
    out.push_str(&format!("seed {}\n", sys.seed));
    for (id, &(site, time)) in sys.origins.iter().enumerate() {
        out.push_str(&format!("origin {id} {site} {time}\n"));
    }
    for (id, events) in sys.events.iter().enumerate() {
        for &(time, site) in events {
            out.push_str(&format!("event {id} {time} {site}\n"));
        }
    }
    for (id, merge) in sys.merges.iter().enumerate() {
        if let Some((time, absorber)) = merge {
            out.push_str(&format!("merge {id} {time} {absorber}\n"));
        }
    }
    for &id in &sys.frozen {
        out.push_str(&format!("frozen {id}\n"));
    }
    let mut rings: Vec<(&i64, &f64)> = sys.post_rings.iter().collect();
    rings.sort_by(|a, b| a.0.cmp(b.0));
    for (site, time) in rings {
        out.push_str(&format!("postring {site} {time}\n"));
    }
    out
}

pub fn system_from_log(text: &str) -> Result<CoalescingSystem, WalkError> {
    let bad = |l: &str| WalkError::Parse(l.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("system v1") {
        return Err(WalkError::Parse("missing header".into()));
    }
    let mut window = None;
    let mut law = None;
    let mut time_kind = None;
    let mut seed = 0u64;
    let mut origins: Vec<(i64, f64)> = Vec::new();
    let mut events: Vec<Vec<(f64, i64)>> = Vec::new();
    let mut merges: Vec<(usize, f64, usize)> = Vec::new();
    let mut frozen = Vec::new();
    let mut post_rings = HashMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().ok_or_else(|| bad(line))?;
        let mut next_str = || it.next().ok_or_else(|| bad(line));
        match tag {
            "window" => {
                let x_lo: i64 = next_str()?.parse().map_err(|_| bad(line))?;
                let x_hi: i64 = next_str()?.parse().map_err(|_| bad(line))?;
                let t_lo: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                let t_hi: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                let boundary = match (next_str()?, next_str()?.parse::<i64>()) {
                    ("torus", _) => Boundary::Torus,
                    ("open", Ok(buffer)) => Boundary::BufferedOpen { buffer },
                    _ => return Err(bad(line)),
                };
                window = Some(SpaceTimeWindow::new(x_lo, x_hi, t_lo, t_hi, boundary)?);
            }
            "law" => {
                law = Some(IncrementDistribution::parse(next_str()?)?);
            }
            "time" => {
                time_kind = Some(match next_str()? {
                    "discrete" => TimeKind::Discrete,
                    "continuous" => TimeKind::Continuous,
                    _ => return Err(bad(line)),
                });
            }
            "seed" => {
                seed = next_str()?.parse().map_err(|_| bad(line))?;
            }
            "origin" => {
                let id: usize = next_str()?.parse().map_err(|_| bad(line))?;
                let site: i64 = next_str()?.parse().map_err(|_| bad(line))?;
                let time: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                if id != origins.len() {
                    return Err(bad(line));
                }
                origins.push((site, time));
                events.push(Vec::new());
            }
            "event" => {
                let id: usize = next_str()?.parse().map_err(|_| bad(line))?;
                let time: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                let site: i64 = next_str()?.parse().map_err(|_| bad(line))?;
                events
                    .get_mut(id)
                    .ok_or_else(|| bad(line))?
                    .push((time, site));
            }
            "merge" => {
                let id: usize = next_str()?.parse().map_err(|_| bad(line))?;
                let time: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                let absorber: usize = next_str()?.parse().map_err(|_| bad(line))?;
                merges.push((id, time, absorber));
            }
            "frozen" => {
                frozen.push(next_str()?.parse().map_err(|_| bad(line))?);
            }
            "postring" => {
                let site: i64 = next_str()?.parse().map_err(|_| bad(line))?;
                let time: f64 = next_str()?.parse().map_err(|_| bad(line))?;
                post_rings.insert(site, time);
            }
            _ => return Err(bad(line)),
        }
    }
    let window = window.ok_or_else(|| bad("window"))?;
    let law = law.ok_or_else(|| bad("law"))?;
    let time_kind = time_kind.ok_or_else(|| bad("time"))?;
    let mut merge_vec = vec![None; origins.len()];
    for (id, time, absorber) in merges {
        if id >= merge_vec.len() || absorber >= origins.len() {
            return Err(WalkError::Parse(format!("merge ids out of range: {id}")));
        }
        merge_vec[id] = Some((time, absorber));
    }
    Ok(CoalescingSystem {
        window,
        time_kind,
        law,
        origins,
        events,
        merges: merge_vec,
        frozen,
        post_rings,
        seed,
    })
}
