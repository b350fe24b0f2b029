//! {0,1} voter dynamics on a site window, driven by the same keyed
//! increment fields as the coalescing walks.
//!
//! Each updating site adopts the previous opinion at its sampled
//! offset. Because the offsets come from the shared field, the opinion
//! of (x, t) equals the initial opinion at the endpoint of a backward
//! walk from (x, t) through the field, and backward walks from
//! different sites coalesce; dual_check verifies that identity
//! pathwise on finite query sets. Reads beyond the window use the
//! all-1-left, all-0-right convention, so a heaviside start makes the
//! window model agree with the whole-line model until the interface
//! nears an edge, which the tracer detects and cures by doubling.
//!
//! The interface tracer only updates the zone within reach of the
//! boundary sites: everything left of the leftmost 0 is 1, everything
//! right of the rightmost 1 is 0, so updates outside that zone are
//! identities. In continuous time a site's clock stream is consumed
//! from its first entry into the zone; skipped earlier rings were
//! identity updates, so the trajectory is the one the full window
//! would produce.

use std::collections::HashMap;

use num::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::increments::{IncrementDistribution, LawError};
use crate::maps::dbar;
use crate::pathspace::{Path, PathKind};
use crate::rng;
use crate::walks::{SiteClocks, TimeKind};

/// Window half-width per unit sigma*sqrt(horizon); makes boundary
/// contamination a sub-1e-6 tail event, and contamination is detected
/// and cured by doubling anyway.
const WINDOW_FACTOR: f64 = 12.0;
/// Give up doubling the window after this many attempts.
const MAX_DOUBLINGS: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum VoterError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("no increment supplied for updating site {0}")]
    MissingIncrement(i64),
    #[error("site {site} at time {time} is outside the simulated realization")]
    OutsideRealization { site: i64, time: f64 },
    #[error("discrete-time query at non-integer time {0}")]
    NonIntegerTime(f64),
    #[error("interface escaped a window of half-width {0}")]
    Contaminated(i64),
    #[error("bad parameters: {0}")]
    BadParams(String),
}

/// Opinions on the window [x_lo, x_hi); reads outside it see all 1
/// to the left and all 0 to the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoterState {
    pub x_lo: i64,
    pub x_hi: i64,
    pub values: Vec<u8>,
    pub time: f64,
}

impl VoterState {
    pub fn new(x_lo: i64, x_hi: i64, values: Vec<u8>, time: f64) -> Result<Self, VoterError> {
        if x_hi <= x_lo || values.len() != (x_hi - x_lo) as usize {
            return Err(VoterError::BadParams(format!(
                "window [{x_lo}, {x_hi}) needs {} values, got {}",
                (x_hi - x_lo).max(0),
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(VoterError::BadParams("opinions must be 0 or 1".into()));
        }
        Ok(VoterState {
            x_lo,
            x_hi,
            values,
            time,
        })
    }

    /// 1 on sites at or left of the origin, 0 to the right.
    pub fn heaviside(x_lo: i64, x_hi: i64, time: f64) -> Result<Self, VoterError> {
        let values = (x_lo..x_hi).map(|x| u8::from(x <= 0)).collect();
        VoterState::new(x_lo, x_hi, values, time)
    }

    /// Opinion with the outside convention.
    pub fn get(&self, x: i64) -> u8 {
        if x < self.x_lo {
            1
        } else if x >= self.x_hi {
            0
        } else {
            self.values[(x - self.x_lo) as usize]
        }
    }

    /// Well defined for every configuration: the convention supplies a
    /// 0 at x_hi if the window holds none.
    pub fn leftmost_zero(&self) -> i64 {
        (self.x_lo..self.x_hi)
            .find(|&x| self.get(x) == 0)
            .unwrap_or(self.x_hi)
    }

    /// And a 1 at x_lo - 1 if the window holds none.
    pub fn rightmost_one(&self) -> i64 {
        (self.x_lo..self.x_hi)
            .rev()
            .find(|&x| self.get(x) == 1)
            .unwrap_or(self.x_lo - 1)
    }
}

/// Synchronously update the listed sites: each adopts the prior
/// opinion at its own sampled offset. Sites not listed keep their
/// opinion (discrete dynamics list every window site; continuous
/// dynamics list the one ringing site).
pub fn step_voter(
    state: &VoterState,
    updating: &[i64],
    increments: &HashMap<i64, i64>,
    new_time: f64,
) -> Result<VoterState, VoterError> {
    let mut next = state.clone();
    next.time = new_time;
    for &x in updating {
        if x < state.x_lo || x >= state.x_hi {
            return Err(VoterError::OutsideRealization {
                site: x,
                time: new_time,
            });
        }
        let y = *increments
            .get(&x)
            .ok_or(VoterError::MissingIncrement(x))?;
        next.values[(x - state.x_lo) as usize] = state.get(x + y);
    }
    Ok(next)
}

/// One sampled increment field on a window and horizon, with the
/// forward voter trajectory and backward walk genealogies both derived
/// from it on demand. Discrete fields are keyed by (site, round)
/// exactly like the discrete walk system; continuous fields are the
/// per-site clock streams of the continuous walk system.
#[derive(Debug, Clone)]
pub struct CoupledRealization {
    pub time_kind: TimeKind,
    pub law: IncrementDistribution,
    pub x_lo: i64,
    pub x_hi: i64,
    pub horizon: f64,
    pub initial: VoterState,
    pub seed: u64,
    /// Continuous only: ascending (ring time, increment) per site.
    rings: HashMap<i64, Vec<(f64, i64)>>,
}

impl CoupledRealization {
    pub fn discrete(
        law: &IncrementDistribution,
        initial: VoterState,
        rounds: u64,
        seed: u64,
    ) -> Result<Self, VoterError> {
        law.require_mean_zero()?;
        Ok(CoupledRealization {
            time_kind: TimeKind::Discrete,
            law: law.clone(),
            x_lo: initial.x_lo,
            x_hi: initial.x_hi,
            horizon: rounds as f64,
            initial,
            seed,
            rings: HashMap::new(),
        })
    }

    pub fn continuous(
        law: &IncrementDistribution,
        initial: VoterState,
        horizon: f64,
        seed: u64,
    ) -> Result<Self, VoterError> {
        law.require_mean_zero()?;
        law.require_no_zero_step()?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(VoterError::BadParams(format!("horizon {horizon}")));
        }
        let mut clocks = SiteClocks::new(seed, 0.0, law);
        let mut rings = HashMap::new();
        for site in initial.x_lo..initial.x_hi {
            let mut list = Vec::new();
            loop {
                let (t, y) = clocks.peek(site);
                if t > horizon {
                    break;
                }
                list.push((t, y));
                clocks.advance(site);
            }
            rings.insert(site, list);
        }
        Ok(CoupledRealization {
            time_kind: TimeKind::Continuous,
            law: law.clone(),
            x_lo: initial.x_lo,
            x_hi: initial.x_hi,
            horizon,
            initial,
            seed,
            rings,
        })
    }

    /// Discrete field entry for the update landing at integer time n.
    fn y_discrete(&self, site: i64, n: u64) -> i64 {
        self.law
            .sample_unit(rng::uniform_at(self.seed, site, rng::zigzag(n as i64)))
    }

    fn check_query(&self, site: i64, time: f64) -> Result<(), VoterError> {
        if site < self.x_lo || site >= self.x_hi || time <= 0.0 || time > self.horizon {
            return Err(VoterError::OutsideRealization { site, time });
        }
        if self.time_kind == TimeKind::Discrete && time.fract() != 0.0 {
            return Err(VoterError::NonIntegerTime(time));
        }
        Ok(())
    }

    /// Forward voter states at the requested times (ascending), each
    /// derived by replaying the field once up to the latest of them.
    pub fn forward_states(&self, times: &[f64]) -> Result<Vec<VoterState>, VoterError> {
        for &t in times {
            if t < 0.0 || t > self.horizon {
                return Err(VoterError::OutsideRealization {
                    site: self.x_lo,
                    time: t,
                });
            }
            if self.time_kind == TimeKind::Discrete && t.fract() != 0.0 {
                return Err(VoterError::NonIntegerTime(t));
            }
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(VoterError::BadParams("times must ascend".into()));
        }
        let mut out = Vec::with_capacity(times.len());
        let mut state = self.initial.clone();
        match self.time_kind {
            TimeKind::Discrete => {
                let mut want = times.iter().peekable();
                let last = times.last().copied().unwrap_or(0.0) as u64;
                while let Some(&&t) = want.peek() {
                    if t == state.time {
                        out.push(state.clone());
                        want.next();
                    } else {
                        break;
                    }
                }
                for n in 1..=last {
                    let old = state.clone();
                    for x in self.x_lo..self.x_hi {
                        let y = self.y_discrete(x, n);
                        state.values[(x - self.x_lo) as usize] = old.get(x + y);
                    }
                    state.time = n as f64;
                    while let Some(&&t) = want.peek() {
                        if t == state.time {
                            out.push(state.clone());
                            want.next();
                        } else {
                            break;
                        }
                    }
                }
            }
            TimeKind::Continuous => {
                // Global time order across sites; simultaneous rings of
                // distinct sites have no sampling mass, ties break by site.
                let mut events: Vec<(f64, i64, i64)> = self
                    .rings
                    .iter()
                    .flat_map(|(&s, list)| list.iter().map(move |&(t, y)| (t, s, y)))
                    .collect();
                events.sort_by(|a, b| a.partial_cmp(b).expect("finite ring times"));
                let mut want = times.iter().peekable();
                for &(t, s, y) in &events {
                    while let Some(&&q) = want.peek() {
                        if q < t {
                            state.time = q;
                            out.push(state.clone());
                            want.next();
                        } else {
                            break;
                        }
                    }
                    state.values[(s - self.x_lo) as usize] = state.get(s + y);
                    state.time = t;
                }
                while let Some(&&q) = want.peek() {
                    state.time = q;
                    out.push(state.clone());
                    want.next();
                }
            }
        }
        Ok(out)
    }

    /// Opinion of site x at time t, replaying the field.
    pub fn opinion(&self, x: i64, t: f64) -> Result<u8, VoterError> {
        self.check_query(x, t)?;
        let states = self.forward_states(&[t])?;
        Ok(states[0].get(x))
    }

    /// Backward walk from (x, t) through the shared field, as
    /// descending (time, site) pairs ending at time 0, or earlier at
    /// the first exit from the window (outside sites never update, so
    /// the opinion is frozen there).
    pub fn genealogy(&self, x: i64, t: f64) -> Result<Vec<(f64, i64)>, VoterError> {
        self.check_query(x, t)?;
        let mut path = vec![(t, x)];
        let mut site = x;
        match self.time_kind {
            TimeKind::Discrete => {
                let mut n = t as u64;
                while n >= 1 && site >= self.x_lo && site < self.x_hi {
                    site += self.y_discrete(site, n);
                    n -= 1;
                    path.push((n as f64, site));
                }
            }
            TimeKind::Continuous => {
                let mut now = t;
                while site >= self.x_lo && site < self.x_hi {
                    let list = &self.rings[&site];
                    // Latest ring at or before now: the state at a ring
                    // time includes that ring's update.
                    let idx = list.partition_point(|&(s, _)| s <= now);
                    if idx == 0 {
                        break;
                    }
                    let (tau, y) = list[idx - 1];
                    site += y;
                    now = tau;
                    path.push((tau, site));
                }
            }
        }
        Ok(path)
    }

    /// Endpoint opinions of the backward walks from the query set,
    /// evaluated in the initial configuration (with the outside
    /// convention for frozen exits).
    fn ancestral_opinion(&self, x: i64, t: f64) -> Result<u8, VoterError> {
        let path = self.genealogy(x, t)?;
        let &(_, y) = path.last().expect("nonempty genealogy");
        Ok(self.initial.get(y))
    }
}

/// Pathwise duality: over any finite query set, some queried site-time
/// holds opinion 1 iff some backward walk from the set lands on an
/// initial 1. The coupling makes the two events identical realization
/// by realization, so this must return true every time.
pub fn dual_check(
    coupled: &CoupledRealization,
    queries: &[(i64, f64)],
) -> Result<bool, VoterError> {
    let mut times: Vec<f64> = Vec::with_capacity(queries.len());
    for &(x, t) in queries {
        coupled.check_query(x, t)?;
        times.push(t);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    let states = coupled.forward_states(&times)?;
    let state_at = |t: f64| -> &VoterState {
        let i = times.partition_point(|&s| s < t);
        &states[i]
    };
    let forward = queries.iter().any(|&(x, t)| state_at(t).get(x) == 1);
    let mut backward = false;
    for &(x, t) in queries {
        if coupled.ancestral_opinion(x, t)? == 1 {
            backward = true;
            break;
        }
    }
    Ok(forward == backward)
}

/// Boundary sample of the interface at one time: leftmost 0 and
/// rightmost 1.
pub type InterfaceSample = (f64, i64, i64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceTrace {
    pub time_kind: TimeKind,
    /// Sigma of the driving law, kept for diffusive rescaling.
    pub sigma: f64,
    pub samples: Vec<InterfaceSample>,
    /// Interface word at the final time: opinions on [l, r] shifted to
    /// start at 0; empty when r < l (sharp interface).
    pub alpha: Vec<u8>,
    /// Words at every sample time when tracing was requested.
    pub words: Option<Vec<Vec<u8>>>,
    /// Half-width of the window that produced the trace.
    pub window_halfwidth: i64,
}

impl InterfaceTrace {
    pub fn width_at(&self, i: usize) -> i64 {
        let (_, l, r) = self.samples[i];
        r - l
    }

    /// CSV lines "t, l, r, width" with a header.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,l,r,width\n");
        for &(t, l, r) in &self.samples {
            out.push_str(&format!("{t},{l},{r},{}\n", r - l));
        }
        out
    }
}

struct Zone {
    values: Vec<u8>,
    x_lo: i64,
    x_hi: i64,
    l: i64,
    r: i64,
    reach: i64,
}

impl Zone {
    fn heaviside(half: i64, reach: i64) -> Zone {
        let (x_lo, x_hi) = (-half, half + 1);
        Zone {
            values: (x_lo..x_hi).map(|x| u8::from(x <= 0)).collect(),
            x_lo,
            x_hi,
            l: 1,
            r: 0,
            reach,
        }
    }

    fn get(&self, x: i64) -> u8 {
        if x < self.x_lo {
            1
        } else if x >= self.x_hi {
            0
        } else {
            self.values[(x - self.x_lo) as usize]
        }
    }

    fn set(&mut self, x: i64, v: u8) {
        self.values[(x - self.x_lo) as usize] = v;
    }

    fn lo(&self) -> i64 {
        self.l - self.reach
    }

    fn hi(&self) -> i64 {
        self.r + self.reach
    }

    fn contaminated(&self) -> bool {
        self.lo() <= self.x_lo || self.hi() >= self.x_hi - 1
    }

    /// Rescan the boundaries after updates within the zone; sites
    /// outside it were identities, so the scan windows are local.
    fn rescan(&mut self) {
        let mut x = self.lo().max(self.x_lo);
        while x < self.x_hi && self.get(x) == 1 {
            x += 1;
        }
        self.l = x;
        let mut x = self.hi().min(self.x_hi - 1);
        while x >= self.x_lo && self.get(x) == 0 {
            x -= 1;
        }
        self.r = x;
    }

    fn word(&self) -> Vec<u8> {
        if self.r < self.l {
            Vec::new()
        } else {
            (self.l..=self.r).map(|x| self.get(x)).collect()
        }
    }
}

/// Trace the heaviside-interface boundaries at the sample times.
/// The window is sized to WINDOW_FACTOR * sigma * sqrt(horizon) per
/// side and doubled (same seed) whenever the interface gets within one
/// jump of an edge, where the window model could diverge from the
/// whole line.
pub fn interface_trace(
    law: &IncrementDistribution,
    time_kind: TimeKind,
    horizon: f64,
    sample_times: &[f64],
    trace_words: bool,
    seed: u64,
) -> Result<InterfaceTrace, VoterError> {
    law.require_mean_zero()?;
    law.require_aperiodic()?;
    // Zero increments are allowed in continuous time here: a ring
    // that copies the site's own opinion is an identity update, so
    // the trace is the same as under the zero-thinned law.
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(VoterError::BadParams(format!("horizon {horizon}")));
    }
    if sample_times
        .iter()
        .any(|&t| !(0.0..=horizon).contains(&t))
        || sample_times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(VoterError::BadParams(
            "sample times must ascend within [0, horizon]".into(),
        ));
    }
    if time_kind == TimeKind::Discrete
        && (horizon.fract() != 0.0 || sample_times.iter().any(|&t| t.fract() != 0.0))
    {
        return Err(VoterError::NonIntegerTime(horizon));
    }
    let reach = law.max_abs_offset();
    let base = (WINDOW_FACTOR * law.sigma() * horizon.sqrt()).ceil() as i64;
    let mut half = base.max(4 * reach);
    for _ in 0..MAX_DOUBLINGS {
        match run_interface(law, time_kind, horizon, sample_times, trace_words, seed, half) {
            Some(trace) => return Ok(trace),
            None => half *= 2,
        }
    }
    Err(VoterError::Contaminated(half))
}

struct Recorder<'a> {
    want: std::iter::Peekable<std::slice::Iter<'a, f64>>,
    samples: Vec<InterfaceSample>,
    words: Vec<Vec<u8>>,
    trace_words: bool,
}

impl Recorder<'_> {
    /// Record pending sample times covered by the current state: all
    /// q < t, plus q == t when inclusive (discrete states are current
    /// at their own time; a continuous state is current strictly
    /// before the next ring, and at a ring time the post-ring state
    /// counts).
    fn due(&mut self, zone: &Zone, t: f64, inclusive: bool) {
        while let Some(&&q) = self.want.peek() {
            if q < t || (inclusive && q == t) {
                self.samples.push((q, zone.l, zone.r));
                if self.trace_words {
                    self.words.push(zone.word());
                }
                self.want.next();
            } else {
                break;
            }
        }
    }
}

/// One window attempt; None signals contamination.
fn run_interface(
    law: &IncrementDistribution,
    time_kind: TimeKind,
    horizon: f64,
    sample_times: &[f64],
    trace_words: bool,
    seed: u64,
    half: i64,
) -> Option<InterfaceTrace> {
    let reach = law.max_abs_offset();
    let mut zone = Zone::heaviside(half, reach);
    let mut rec = Recorder {
        want: sample_times.iter().peekable(),
        samples: Vec::with_capacity(sample_times.len()),
        words: Vec::new(),
        trace_words,
    };
    match time_kind {
        TimeKind::Discrete => {
            rec.due(&zone, 0.0, true);
            let rounds = horizon as u64;
            for n in 1..=rounds {
                if zone.contaminated() {
                    return None;
                }
                let (lo, hi) = (zone.lo(), zone.hi());
                // Snapshot the read range [lo - reach, hi + reach].
                let old: Vec<u8> = ((lo - reach)..=(hi + reach)).map(|x| zone.get(x)).collect();
                let read = |x: i64| old[(x - (lo - reach)) as usize];
                for x in lo..=hi {
                    let y = law.sample_unit(rng::uniform_at(seed, x, rng::zigzag(n as i64)));
                    zone.set(x, read(x + y));
                }
                zone.rescan();
                rec.due(&zone, n as f64, true);
            }
        }
        TimeKind::Continuous => {
            let mut clocks = SiteClocks::new(seed, 0.0, law);
            // Pending next ring per tracked site, ordered by time; a
            // site is tracked from its first entry into the zone and
            // keeps firing afterwards (updates outside the zone are
            // identities, applied or not).
            use std::cmp::Reverse;
            use std::collections::BinaryHeap;
            let mut heap: BinaryHeap<Reverse<(u64, i64)>> = BinaryHeap::new();
            let mut tracked: std::collections::HashSet<i64> = std::collections::HashSet::new();
            let track = |s: i64,
                             now: f64,
                             clocks: &mut SiteClocks,
                             heap: &mut BinaryHeap<Reverse<(u64, i64)>>,
                             tracked: &mut std::collections::HashSet<i64>| {
                if tracked.insert(s) {
                    let (t, _) = clocks.first_after(s, now);
                    heap.push(Reverse((crate::walks::time_key(t), s)));
                }
            };
            for s in zone.lo()..=zone.hi() {
                track(s, 0.0, &mut clocks, &mut heap, &mut tracked);
            }
            while let Some(&Reverse((_, site))) = heap.peek() {
                let (tau, y) = clocks.peek(site);
                if tau > horizon {
                    break;
                }
                rec.due(&zone, tau, false);
                heap.pop();
                clocks.advance(site);
                let (next, _) = clocks.peek(site);
                heap.push(Reverse((crate::walks::time_key(next), site)));
                if site >= zone.lo() && site <= zone.hi() {
                    if zone.contaminated() {
                        return None;
                    }
                    zone.set(site, zone.get(site + y));
                    zone.rescan();
                    for s in zone.lo()..=zone.hi() {
                        track(s, tau, &mut clocks, &mut heap, &mut tracked);
                    }
                }
            }
            rec.due(&zone, horizon, true);
        }
    }
    debug_assert!(
        (zone.x_lo..zone.l).all(|x| zone.get(x) == 1)
            && ((zone.r + 1)..zone.x_hi).all(|x| zone.get(x) == 0),
        "separation: all 1 left of l, all 0 right of r"
    );
    Some(InterfaceTrace {
        time_kind,
        sigma: law.sigma(),
        samples: rec.samples,
        alpha: zone.word(),
        words: if trace_words { Some(rec.words) } else { None },
        window_halfwidth: half,
    })
}

/// Linearly interpolated boundary paths, diffusively rescaled: space
/// scaled by delta/sigma, time by delta^2. Returns the rescaled pair
/// and their sup distance over the trace.
pub fn boundary_paths(
    trace: &InterfaceTrace,
    delta: f64,
) -> Result<(Path, Path, f64), VoterError> {
    if trace.samples.is_empty() {
        return Err(VoterError::BadParams("empty trace".into()));
    }
    if !(delta > 0.0) || !(trace.sigma > 0.0) {
        return Err(VoterError::BadParams(format!(
            "delta {delta}, sigma {}",
            trace.sigma
        )));
    }
    let sx = delta / trace.sigma;
    let st = delta * delta;
    let build = |pick: fn(&InterfaceSample) -> i64| {
        let pts: Vec<(f64, f64)> = trace
            .samples
            .iter()
            .map(|s| (st * s.0, sx * pick(s) as f64))
            .collect();
        Path::new(pts, PathKind::Interpolated)
            .map_err(|e| VoterError::BadParams(format!("trace times: {e}")))
    };
    let l_bar = build(|s| s.1)?;
    let r_bar = build(|s| s.2)?;
    let sup = dbar(&l_bar, &r_bar);
    Ok((l_bar, r_bar, sup))
}

/// Exact per-site marginals P[opinion(x, 2) = 1] for the heaviside
/// start on the window, by integrating the two update rounds against
/// the law (the two draws along one site's genealogy are at distinct
/// rounds, hence independent). The window model's outside convention
/// is applied exactly as the simulator does.
pub fn heaviside_two_step_exact(
    law: &IncrementDistribution,
    x_lo: i64,
    x_hi: i64,
) -> Result<Vec<(i64, BigRational)>, VoterError> {
    let support = law
        .rationalize()
        .ok_or_else(|| VoterError::BadParams("law is not rational".into()))?;
    let one = BigRational::from_integer(1.into());
    let zero = BigRational::from_integer(0.into());
    let h0 = |x: i64| if x <= 0 { one.clone() } else { zero.clone() };
    // After round 1, inside sites mix the heaviside over one draw;
    // outside sites are frozen at the convention (which the heaviside
    // extension equals).
    let q1 = |z: i64| -> BigRational {
        if z < x_lo {
            one.clone()
        } else if z >= x_hi {
            zero.clone()
        } else {
            support
                .iter()
                .map(|(y, p)| p * h0(z + y))
                .fold(zero.clone(), |a, b| a + b)
        }
    };
    Ok((x_lo..x_hi)
        .map(|x| {
            let p = support
                .iter()
                .map(|(y, p)| p * q1(x + y))
                .fold(zero.clone(), |a, b| a + b);
            (x, p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increments::{lazy_uniform, uniform_pm12};
    use crate::stats::mean_se;
    use num::ToPrimitive;

    #[test]
    fn outside_convention_and_boundary_finders() {
        let s = VoterState::heaviside(-3, 4, 0.0).unwrap();
        assert_eq!(s.get(-4), 1, "left outside reads 1");
        assert_eq!(s.get(4), 0, "right outside reads 0");
        assert_eq!(s.leftmost_zero(), 1);
        assert_eq!(s.rightmost_one(), 0);

        let all1 = VoterState::new(0, 3, vec![1, 1, 1], 0.0).unwrap();
        assert_eq!(all1.leftmost_zero(), 3, "convention zero just right of window");
        let all0 = VoterState::new(0, 3, vec![0, 0, 0], 0.0).unwrap();
        assert_eq!(all0.rightmost_one(), -1, "convention one just left of window");
    }

    #[test]
    fn step_voter_examples() {
        let s = VoterState::heaviside(-5, 6, 0.0).unwrap();
        let sites: Vec<i64> = (-5..6).collect();
        let zeros: HashMap<i64, i64> = sites.iter().map(|&x| (x, 0)).collect();
        let same = step_voter(&s, &sites, &zeros, 1.0).unwrap();
        assert_eq!(same.values, s.values, "zero offsets change nothing");

        let mut inc = zeros.clone();
        inc.insert(1, -1);
        let next = step_voter(&s, &sites, &inc, 1.0).unwrap();
        assert_eq!(next.get(1), 1, "site 1 adopts the opinion at 0");
        assert!(next.rightmost_one() >= 1);

        let ones = VoterState::new(-2, 3, vec![1; 5], 0.0).unwrap();
        let sites: Vec<i64> = (-2..3).collect();
        let any: HashMap<i64, i64> = sites.iter().map(|&x| (x, (x % 2) * 2 - 1)).collect();
        let fixed = step_voter(&ones, &sites, &any, 1.0).unwrap();
        assert_eq!(fixed.values, ones.values, "consensus is absorbing");

        let missing: HashMap<i64, i64> = HashMap::new();
        assert_eq!(
            step_voter(&s, &[0], &missing, 1.0).unwrap_err(),
            VoterError::MissingIncrement(0)
        );
    }

    #[test]
    fn duality_holds_on_every_discrete_realization() {
        let law = lazy_uniform();
        for seed in 0..300u64 {
            let mut bits = rng::stream(rng::derive(seed, 77));
            let values: Vec<u8> = (0..40).map(|_| (rng::next_unit(&mut bits) < 0.5) as u8).collect();
            let initial = VoterState::new(-20, 20, values, 0.0).unwrap();
            let coupled = CoupledRealization::discrete(&law, initial, 10, seed).unwrap();
            let k = (seed % 5 + 1) as usize;
            let queries: Vec<(i64, f64)> = (0..k)
                .map(|i| {
                    let u = rng::uniform_at(seed, i as i64, 999);
                    let x = -20 + ((u * 40.0) as i64).clamp(0, 39);
                    let t = 1.0 + (rng::uniform_at(seed, i as i64, 998) * 10.0).floor().min(9.0);
                    (x, t)
                })
                .collect();
            assert!(
                dual_check(&coupled, &queries).unwrap(),
                "seed {seed}: duality must be pathwise"
            );
        }
        // Empty query set: both sides vacuously false.
        let initial = VoterState::heaviside(-20, 20, 0.0).unwrap();
        let coupled = CoupledRealization::discrete(&lazy_uniform(), initial, 10, 0).unwrap();
        assert!(dual_check(&coupled, &[]).unwrap());
    }

    #[test]
    fn duality_holds_on_every_continuous_realization() {
        let law = uniform_pm12();
        for seed in 0..150u64 {
            let mut bits = rng::stream(rng::derive(seed, 78));
            let values: Vec<u8> = (0..30).map(|_| (rng::next_unit(&mut bits) < 0.5) as u8).collect();
            let initial = VoterState::new(-15, 15, values, 0.0).unwrap();
            let coupled = CoupledRealization::continuous(&law, initial, 8.0, seed).unwrap();
            let k = (seed % 4 + 1) as usize;
            let queries: Vec<(i64, f64)> = (0..k)
                .map(|i| {
                    let x = -15 + ((rng::uniform_at(seed, i as i64, 997) * 30.0) as i64).clamp(0, 29);
                    let t = rng::uniform_at(seed, i as i64, 996) * 8.0;
                    (x, t.max(1e-3))
                })
                .collect();
            assert!(
                dual_check(&coupled, &queries).unwrap(),
                "seed {seed}: continuous duality must be pathwise"
            );
        }
    }

    #[test]
    fn query_validation() {
        let law = lazy_uniform();
        let initial = VoterState::heaviside(-5, 5, 0.0).unwrap();
        let coupled = CoupledRealization::discrete(&law, initial, 4, 3).unwrap();
        assert!(matches!(
            dual_check(&coupled, &[(99, 1.0)]),
            Err(VoterError::OutsideRealization { .. })
        ));
        assert!(matches!(
            dual_check(&coupled, &[(0, 0.0)]),
            Err(VoterError::OutsideRealization { .. })
        ));
        assert!(matches!(
            dual_check(&coupled, &[(0, 1.5)]),
            Err(VoterError::NonIntegerTime(_))
        ));
    }

    #[test]
    fn interface_starts_sharp_and_stays_separated() {
        let law = lazy_uniform();
        let trace =
            interface_trace(&law, TimeKind::Discrete, 50.0, &[0.0, 10.0, 50.0], true, 11).unwrap();
        assert_eq!(trace.samples[0], (0.0, 1, 0), "sharp heaviside interface");
        let words = trace.words.as_ref().unwrap();
        assert!(words[0].is_empty());
        for (i, w) in words.iter().enumerate() {
            let (_, l, r) = trace.samples[i];
            assert_eq!(w.len() as i64, (r - l + 1).max(0));
            if !w.is_empty() {
                assert_eq!(w[0], 0, "leftmost zero anchors the word");
                assert_eq!(*w.last().unwrap(), 1, "rightmost one ends the word");
            }
        }
        // Word sums are finite and small compared to the window.
        assert!(trace.alpha.iter().map(|&b| b as i64).sum::<i64>() <= trace.window_halfwidth);
    }

    #[test]
    fn interface_word_matches_full_window_replay() {
        // The zone-restricted tracer must agree with a straightforward
        // full-window replay of the same field.
        let law = lazy_uniform();
        for seed in 0..12u64 {
            let horizon = 24u64;
            let trace = interface_trace(
                &law,
                TimeKind::Discrete,
                horizon as f64,
                &[horizon as f64],
                false,
                seed,
            )
            .unwrap();
            let half = trace.window_halfwidth;
            let initial = VoterState::heaviside(-half, half + 1, 0.0).unwrap();
            let coupled = CoupledRealization::discrete(&law, initial, horizon, seed).unwrap();
            let full = &coupled.forward_states(&[horizon as f64]).unwrap()[0];
            let (_, l, r) = trace.samples[0];
            assert_eq!(l, full.leftmost_zero(), "seed {seed}");
            assert_eq!(r, full.rightmost_one(), "seed {seed}");
            let word: Vec<u8> = if r < l {
                vec![]
            } else {
                (l..=r).map(|x| full.get(x)).collect()
            };
            assert_eq!(trace.alpha, word, "seed {seed}");
        }
    }

    #[test]
    fn continuous_interface_matches_full_replay() {
        let law = uniform_pm12();
        for seed in 0..8u64 {
            let horizon = 6.0;
            let trace = interface_trace(
                &law,
                TimeKind::Continuous,
                horizon,
                &[horizon],
                false,
                seed,
            )
            .unwrap();
            let half = trace.window_halfwidth;
            let initial = VoterState::heaviside(-half, half + 1, 0.0).unwrap();
            let coupled = CoupledRealization::continuous(&law, initial, horizon, seed).unwrap();
            let full = &coupled.forward_states(&[horizon]).unwrap()[0];
            let (_, l, r) = trace.samples[0];
            assert_eq!(l, full.leftmost_zero(), "seed {seed}");
            assert_eq!(r, full.rightmost_one(), "seed {seed}");
        }
    }

    #[test]
    fn boundary_rescaling_is_the_stated_formula() {
        let law = lazy_uniform();
        let trace =
            interface_trace(&law, TimeKind::Discrete, 20.0, &[0.0, 10.0, 20.0], false, 5).unwrap();
        let (l_bar, r_bar, sup) = boundary_paths(&trace, 1.0).unwrap();
        let sx = 1.0 / trace.sigma;
        for (i, &(t, l, r)) in trace.samples.iter().enumerate() {
            assert_eq!(l_bar.points()[i], (t, sx * l as f64));
            assert_eq!(r_bar.points()[i], (t, sx * r as f64));
        }
        let sigma = trace.sigma;
        assert!(sup >= (1.0 - 0.0) / sigma - 1e-12, "t=0 gap alone is 1/sigma");

        let (l2, _, _) = boundary_paths(&trace, 0.5).unwrap();
        assert_eq!(l2.points()[1].0, 0.25 * 10.0, "time scales by delta^2");
    }

    #[test]
    fn exact_two_step_marginals_match_monte_carlo() {
        let law = lazy_uniform();
        let (x_lo, x_hi) = (-4, 4);
        let exact = heaviside_two_step_exact(&law, x_lo, x_hi).unwrap();
        assert_eq!(exact.len(), 8);
        // Far-left site stays 1 with probability 1 under reach-1 jumps.
        assert_eq!(exact[0].1.to_f64().unwrap(), 1.0);

        let trials = 20_000u64;
        let mut per_site: Vec<Vec<f64>> = vec![Vec::with_capacity(trials as usize); 8];
        for trial in 0..trials {
            let seed = rng::derive(0x2e57, trial);
            let initial = VoterState::heaviside(x_lo, x_hi, 0.0).unwrap();
            let coupled = CoupledRealization::discrete(&law, initial, 2, seed).unwrap();
            let state = &coupled.forward_states(&[2.0]).unwrap()[0];
            for (i, vals) in per_site.iter_mut().enumerate() {
                vals.push(state.get(x_lo + i as i64) as f64);
            }
        }
        for (i, (x, p_exact)) in exact.iter().enumerate() {
            let (mean, se) = mean_se(&per_site[i]);
            let p = p_exact.to_f64().unwrap();
            assert!(
                (mean - p).abs() <= 4.0 * se + 1e-12,
                "site {x}: mc {mean} vs exact {p} (se {se})"
            );
        }
    }

    #[test]
    fn trace_csv_has_header_and_widths() {
        let law = lazy_uniform();
        let trace =
            interface_trace(&law, TimeKind::Discrete, 4.0, &[0.0, 4.0], false, 2).unwrap();
        let csv = trace.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,l,r,width"));
        assert_eq!(lines.next(), Some("0,1,0,-1"));
    }
}
