//! Randomized property suite over the public API: metric axioms,
//! serialization round trips, oracle laws, coalescence invariants, and
//! report determinism. Case counts are kept modest so the file runs in
//! seconds; the fixed-seed acceptance sweep covers full scale.

use std::collections::HashMap;

use coalweb::experiments::{self, ExperimentConfig, ExperimentKind};
use coalweb::increments::{self, IncrementDistribution};
use coalweb::maps::{self, FamilyKind, IndependentFamily};
use coalweb::pathspace::{self, CountingQuery, Path, PathKind};
use coalweb::voter::{self, VoterState};
use coalweb::walks::{self, SpaceTimeWindow};
use proptest::prelude::*;

/// Symmetric (hence mean-zero) laws with offsets in {0, +/-1..+/-4},
/// filtered to the aperiodic irreducible ones the simulators accept.
fn small_law() -> impl Strategy<Value = IncrementDistribution> {
    (proptest::collection::vec(0u32..=8, 4), 0u32..=6).prop_filter_map(
        "valid aperiodic mean-zero law",
        |(ws, z)| {
            let total = (2 * ws.iter().sum::<u32>() + z) as f64;
            let mut entries = Vec::new();
            if z > 0 {
                entries.push((0i64, z as f64 / total));
            }
            for (i, &w) in ws.iter().enumerate() {
                if w > 0 {
                    entries.push((-(i as i64) - 1, w as f64 / total));
                    entries.push((i as i64 + 1, w as f64 / total));
                }
            }
            let law = IncrementDistribution::new(&entries).ok()?;
            law.require_aperiodic().ok()?;
            if !law.irreducible() {
                return None;
            }
            Some(law)
        },
    )
}

/// Piecewise paths with random birth time, values, and evaluation kind.
fn random_path() -> impl Strategy<Value = Path> {
    (
        -4.0f64..4.0,
        -8.0f64..8.0,
        proptest::collection::vec((0.05f64..1.0, -2.0f64..2.0), 1..12),
        prop_oneof![Just(PathKind::Step), Just(PathKind::Interpolated)],
    )
        .prop_map(|(t0, x0, segs, kind)| {
            let mut pts = vec![(t0, x0)];
            let (mut t, mut x) = (t0, x0);
            for (dt, dx) in segs {
                t += dt;
                x += dx;
                pts.push((t, x));
            }
            Path::new(pts, kind).expect("times strictly increase")
        })
}

/// Coordinates kept where the compactification is still injective in
/// f64 (tanh saturates to exactly 1.0 past ~19).
fn plane_point() -> impl Strategy<Value = (f64, f64)> {
    (-12.0f64..12.0, -30.0f64..30.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plane_metric_separates_points_and_obeys_the_triangle(
        a in plane_point(),
        b in plane_point(),
        c in plane_point(),
    ) {
        prop_assert_eq!(pathspace::rho(a, a), 0.0);
        prop_assert_eq!(pathspace::rho(a, b), pathspace::rho(b, a));
        if a != b {
            prop_assert!(pathspace::rho(a, b) > 0.0);
        }
        prop_assert!(
            pathspace::rho(a, c) <= pathspace::rho(a, b) + pathspace::rho(b, c) + 1e-12
        );
    }

    #[test]
    fn path_distance_is_a_metric_up_to_its_error_bound(
        p in random_path(),
        q in random_path(),
        s in random_path(),
        grid in 32usize..128,
    ) {
        prop_assert_eq!(pathspace::path_distance(&p, &p, grid).value, 0.0);
        let d_pq = pathspace::path_distance(&p, &q, grid);
        let d_qp = pathspace::path_distance(&q, &p, grid);
        prop_assert_eq!(d_pq.value, d_qp.value);
        prop_assert!(d_pq.value >= 0.0 && d_pq.error_bound >= 0.0);
        // Grid values under-report the true sup, so each leg of the
        // triangle is widened by its own error bound.
        let d_qs = pathspace::path_distance(&q, &s, grid);
        let d_ps = pathspace::path_distance(&p, &s, grid);
        prop_assert!(
            d_ps.value
                <= d_pq.value + d_qs.value + d_pq.error_bound + d_qs.error_bound + 1e-12
        );
    }

    #[test]
    fn path_logs_round_trip(
        paths in proptest::collection::vec(random_path(), 1..6),
    ) {
        let log = pathspace::pathset_to_log(&paths);
        let back = pathspace::pathset_from_log(&log).expect("own log parses");
        prop_assert_eq!(back, paths);
    }

    #[test]
    fn counting_is_monotone_in_the_interval_and_zero_iff_untouched(
        paths in proptest::collection::vec(random_path(), 1..6),
        t0 in -2.0f64..2.0,
        t in 0.2f64..4.0,
        a in -6.0f64..6.0,
        w in 0.0f64..4.0,
        pad in 0.0f64..3.0,
    ) {
        let inner = CountingQuery::new(t0, t, a, a + w).expect("valid query");
        let outer = CountingQuery::new(t0, t, a - pad, a + w + pad).expect("valid query");
        let ci = pathspace::count_paths(&paths, &inner);
        let co = pathspace::count_paths(&paths, &outer);
        prop_assert!(ci.eta <= co.eta);
        prop_assert!(ci.eta_hat <= co.eta_hat);
        let touched = paths
            .iter()
            .filter(|p| p.t0() <= t0)
            .any(|p| (inner.a..=inner.b).contains(&p.value(t0)));
        prop_assert_eq!(ci.eta >= 1, touched);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn overshoot_oracle_is_a_supported_probability_law(law in small_law()) {
        let depth = (law.max_abs_offset() * 20).max(40);
        let ladder = increments::ladder_heights_exact(&law, depth).expect("band oracle solves");
        let rho = increments::limiting_overshoot(&law, &ladder).expect("resolved ladder");
        // Mass 1 overall, nonincreasing in the landing site, and no
        // support at or beyond the maximum positive step.
        let total: f64 = rho.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
        prop_assert!(rho.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        prop_assert_eq!(rho.len() as i64, law.max_up());
    }

    #[test]
    fn law_text_round_trips(law in small_law()) {
        // Rendered decimals renormalize on parse, so the round trip is
        // semantic: same support, probabilities to within float noise.
        let back = IncrementDistribution::parse(&law.render()).expect("own rendering parses");
        prop_assert_eq!(back.support().len(), law.support().len());
        for (&(ko, kp), &(bo, bp)) in law.support().iter().zip(back.support()) {
            prop_assert_eq!(ko, bo);
            prop_assert!((kp - bp).abs() < 1e-12);
        }
        prop_assert!((back.sigma() - law.sigma()).abs() < 1e-12);
    }

    #[test]
    fn torus_occupancy_never_grows_and_is_deterministic(
        law in small_law(),
        width in 3i64..40,
        rounds in 1u64..10,
        seed in any::<u64>(),
    ) {
        let now = walks::occupancy_flow_torus(&law, width, rounds, seed);
        let later = walks::occupancy_flow_torus(&law, width, rounds + 1, seed);
        prop_assert!(later.len() <= now.len());
        let again = walks::occupancy_flow_torus(&law, width, rounds, seed);
        prop_assert_eq!(now, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coalesced_walkers_never_separate(
        law in small_law(),
        seed in any::<u64>(),
        m in 2usize..6,
    ) {
        let window = SpaceTimeWindow::torus(12, 8.0).expect("valid window");
        let origins: Vec<(i64, f64)> = (0..m as i64).map(|i| (2 * i, 0.0)).collect();
        let sys = walks::simulate_discrete(window, &law, &origins, seed).expect("runs");
        for i in 0..m {
            for j in i + 1..m {
                let mut met = false;
                for n in 0..=8 {
                    let t = n as f64;
                    let same = sys.position(i, t) == sys.position(j, t);
                    prop_assert!(same || !met, "pair ({i},{j}) separated after meeting");
                    met = met || same;
                }
            }
        }
        // The two path views agree at event times, exactly.
        let steps = sys.paths_of(PathKind::Step);
        let lines = sys.paths_of(PathKind::Interpolated);
        for (ps, pl) in steps.iter().zip(&lines) {
            for n in 0..=8 {
                prop_assert_eq!(ps.value(n as f64), pl.value(n as f64));
            }
        }
    }

    #[test]
    fn crossing_map_is_idempotent_and_logs_are_faithful(
        law in small_law(),
        seed in any::<u64>(),
        m in 2usize..5,
        steps in 10u64..40,
    ) {
        let starts: Vec<i64> = (0..m as i64).map(|i| 3 * i).collect();
        let paths = maps::sample_walk_family(&law, &starts, steps, seed, PathKind::Interpolated);
        let fam = IndependentFamily::new(FamilyKind::LatticeInterpolated, paths).expect("family");
        let (g_paths, g_state) = maps::apply_g(&fam);
        let again = IndependentFamily::new(FamilyKind::LatticeInterpolated, g_paths.clone())
            .expect("family");
        let (g2_paths, g2_state) = maps::apply_g(&again);
        prop_assert_eq!(&g2_paths, &g_paths);
        prop_assert_eq!(&g2_state.representative, &g_state.representative);

        // Both maps only ever merge class representatives, which still
        // carry their original paths, so every log record names two
        // inputs that actually meet at the recorded time: exactly for
        // the coincidence map, to float noise for interior crossings.
        let (_, f_state) = maps::apply_f(&fam).expect("lattice family");
        for rec in &f_state.merge_log {
            let (pa, pr) = (&fam.paths[rec.absorbed], &fam.paths[rec.representative]);
            prop_assert_eq!(pa.value(rec.time), pr.value(rec.time));
        }
        for rec in &g_state.merge_log {
            let (pa, pr) = (&fam.paths[rec.absorbed], &fam.paths[rec.representative]);
            prop_assert!((pa.value(rec.time) - pr.value(rec.time)).abs() < 1e-9);
        }

        // Post-merge identity: once a pair joins, the resolved outputs
        // agree at every later breakpoint.
        for i in 0..m {
            for j in i + 1..m {
                if let Some(tau) = g_state.pair_time(i, j) {
                    for &(t, _) in g_paths[i].points() {
                        if t >= tau {
                            prop_assert_eq!(g_paths[i].value(t), g_paths[j].value(t));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn consensus_opinions_are_fixed_points(
        law in small_law(),
        seed in any::<u64>(),
        ones in any::<bool>(),
    ) {
        let state = VoterState::new(-10, 10, vec![u8::from(ones); 20], 0.0).expect("window");
        // Interior sites only: offsets reach at most 4, so every read
        // stays inside the window and sees the consensus value.
        let updating: Vec<i64> = (-6..6).collect();
        let mut increments_map = HashMap::new();
        for &x in &updating {
            increments_map.insert(x, law.sample_unit(coalweb::rng::uniform_at(seed, x, 1)));
        }
        let next = voter::step_voter(&state, &updating, &increments_map, 1.0).expect("steps");
        for x in -10..10 {
            prop_assert_eq!(next.get(x), state.get(x));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reports_are_functions_of_config_and_seed_alone(
        seed in any::<u64>(),
        workers in 2u64..9,
    ) {
        let mut config = ExperimentConfig::preset(ExperimentKind::Etahat, seed);
        config.trials = 5;
        let solo = experiments::run_split(&config, 1).expect("runs");
        let split = experiments::run_split(&config, workers).expect("runs");
        prop_assert_eq!(solo.json().expect("serializes"), split.json().expect("serializes"));
        prop_assert_eq!(solo.cells, split.cells);
    }
}
