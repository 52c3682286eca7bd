//! Cross-cutting invariants: exhaustive small-instance equivalence between
//! the emitted schedules and the closed-form stage loads, plus randomized
//! instances at larger sizes.

use std::collections::BTreeSet;

use proptest::prelude::*;

use ccsim::analysis::{cutset_bound, gap_bound, rate_of_schedule, theorem_rate, worst_rate};
use ccsim::combinatorics::binom;
use ccsim::delivery::{
    build_schedule, classify_packets, deliver_type4_step1, search_packet_groups,
    search_request_sets,
};
use ccsim::model::{parse_profile, profile_document, Rat, RequestProfile, SystemParams};
use ccsim::prefetch::place;
use ccsim::verify::verify_all;

fn build(n: usize, m: usize, alpha: usize, requests: Vec<Vec<usize>>) -> (SystemParams, RequestProfile) {
    let params = SystemParams::new(n, m, alpha).unwrap();
    let profile = RequestProfile::new(&params, requests).unwrap();
    (params, profile)
}

/// Closed-form per-stage loads recomputed directly from the profile, then
/// compared against an exhaustive recount of the emitted schedule.
fn check_instance(params: &SystemParams, profile: &RequestProfile) {
    let n = params.n_files;
    let m = params.n_groups;
    let alpha = params.alpha;
    let n_r = profile.n_requested();
    let placement = place(params);
    let (schedule, stats) = build_schedule(&placement, profile).unwrap();
    assert_eq!(stats.fallback_splits, 0, "certification fallback fired");

    // Stage counters in `stats` are recounted from the schedule; check them
    // against the closed forms.
    let t1_formula = m as u64 * n_r as u64 * (binom(n - 1, alpha - 1) - binom(n_r - 1, alpha - 1));
    assert_eq!(stats.t1 as u64, t1_formula);

    let d = |g: usize| profile.count_of(g);
    let t2_step1: u64 = (1..=m)
        .map(|g| binom(n_r - d(g), alpha - 1) * d(g) as u64 * (alpha as u64 - 1))
        .sum();
    assert_eq!(stats.t2_step1 as u64, t2_step1);

    let min_locals = |file: usize| {
        profile
            .requesters_of(file)
            .iter()
            .map(|&g| binom(n_r - d(g), alpha - 1))
            .min()
            .unwrap()
    };
    let t2_step2: u64 = profile
        .requested_files()
        .iter()
        .map(|&f| (profile.requesters_of(f).len() as u64 - 1) * min_locals(f))
        .sum();
    assert_eq!(stats.t2_step2 as u64, t2_step2);
    let t2_rm: u64 = profile
        .requested_files()
        .iter()
        .map(|&f| {
            profile
                .requesters_of(f)
                .iter()
                .map(|&g| binom(n_r - d(g), alpha - 1) - min_locals(f))
                .sum::<u64>()
        })
        .sum();
    assert_eq!(stats.t2_remaining as u64, t2_rm);

    let type3_packets = |g: usize| -> u64 {
        (2..=d(g).min(alpha)).map(|k| binom(d(g), k) * binom(n_r - d(g), alpha - k)).sum()
    };
    let t3_step1: u64 = (1..=m).map(|g| type3_packets(g) * (alpha as u64 - 1)).sum();
    assert_eq!(stats.t3_step1 as u64, t3_step1);
    let l_untr = |g: usize| -> u64 {
        let sigma = profile.exclusive_count(g);
        (2..=d(g).min(alpha))
            .map(|k| binom(d(g) - sigma, k) * binom(n_r - d(g), alpha - k))
            .sum()
    };
    for g in 1..=m {
        assert_eq!(stats.l_untransmitted[g - 1] as u64, l_untr(g));
    }
    let min_l = (1..=m).map(l_untr).min().unwrap();
    assert_eq!(stats.t3_step2 as u64, (m as u64 - 1) * min_l);
    let sum_l: u64 = (1..=m).map(l_untr).sum();
    assert_eq!(stats.t3_remaining as u64, sum_l - m as u64 * min_l);

    // Type-IV block identity: load plus leftovers equals total Type-IV
    // fragments minus the measured gain.
    let type4_fragments: u64 = (1..=m).map(|g| binom(n_r - d(g), alpha) * alpha as u64).sum();
    assert_eq!(
        (stats.t4 + stats.t4_remaining) as u64 + stats.type4_gain as u64,
        type4_fragments
    );

    // Gain bookkeeping: alpha per request set, one per packet-group.
    let class = classify_packets(&placement, profile);
    let sets = search_request_sets(&class, profile);
    let consumed = deliver_type4_step1(&sets, &class, profile).consumed;
    let groups = search_packet_groups(&class, profile, &consumed);
    assert_eq!(stats.type4_gain, alpha * sets.len() + groups.len());

    // Last stage: load is total remaining minus the minimum per-cache count.
    let total_remaining = stats.t2_remaining + stats.t3_remaining + stats.t4_remaining;
    assert_eq!(stats.last_gain, *stats.remaining_before_last.iter().min().unwrap());
    assert_eq!(stats.t_last, total_remaining - stats.last_gain);
    assert_eq!(total_remaining, stats.remaining_before_last.iter().sum::<usize>());

    // Partition identity over all packet classes.
    let partition: u64 = (1..=m)
        .map(|g| {
            (0..=d(g).min(alpha))
                .map(|k| binom(d(g), k) * binom(n_r - d(g), alpha - k))
                .sum::<u64>()
                * alpha as u64
        })
        .sum();
    assert_eq!(partition, m as u64 * n_r as u64 * binom(n_r - 1, alpha - 1));

    // Never worse than transmitting every requested fragment directly.
    assert!(schedule.len() as u64 <= n_r as u64 * m as u64 * binom(n - 1, alpha - 1));

    // Full decodability, counted rate vs closed form, and the bound sandwich.
    assert!(verify_all(profile, &placement, &schedule).pass);
    let (counted, theorem) = rate_of_schedule(&stats, params, profile).unwrap();
    assert_eq!(counted, theorem);
    assert_eq!(
        theorem,
        theorem_rate(params, profile, stats.type4_gain, stats.last_gain)
    );
    let csb = cutset_bound(profile, params.cache_size());
    assert!(
        csb <= counted,
        "cut-set bound must lower-bound the rate: {params:?} {:?} csb={csb} R={counted}",
        profile.to_lists()
    );
    assert!(counted <= Rat::from_integer(n_r as i64));
    if let Ok((worst, _)) = worst_rate(params, &profile.count_multiset()) {
        if n_r == n {
            assert!(counted <= worst, "worst-rate formula must dominate");
        }
        assert!(worst - csb <= gap_bound(params, profile));
    }
}

#[test]
fn exhaustive_small_instances() {
    for n in 2..=4usize {
        let subsets: Vec<Vec<usize>> = (1u32..(1 << n))
            .map(|mask| (1..=n).filter(|f| mask & (1 << (f - 1)) != 0).collect())
            .collect();
        for m in 1..=3usize {
            for alpha in 1..=2usize.min(n) {
                let mut choice = vec![0usize; m];
                loop {
                    let requests: Vec<Vec<usize>> =
                        choice.iter().map(|&i| subsets[i].clone()).collect();
                    let (params, profile) = build(n, m, alpha, requests);
                    check_instance(&params, &profile);
                    // Advance the per-group subset odometer.
                    let mut pos = 0;
                    loop {
                        if pos == m {
                            break;
                        }
                        choice[pos] += 1;
                        if choice[pos] < subsets.len() {
                            break;
                        }
                        choice[pos] = 0;
                        pos += 1;
                    }
                    if pos == m {
                        break;
                    }
                }
            }
        }
    }
}

fn instance_strategy() -> impl Strategy<Value = (SystemParams, RequestProfile)> {
    (3usize..=6, 2usize..=5, 1usize..=3)
        .prop_flat_map(|(n, m, alpha)| {
            let alpha = alpha.min(n);
            (
                Just(n),
                Just(m),
                Just(alpha),
                proptest::collection::vec(proptest::collection::btree_set(1..=n, 1..=n), m),
            )
        })
        .prop_map(|(n, m, alpha, requests)| {
            let requests: Vec<Vec<usize>> = requests
                .into_iter()
                .map(|s: BTreeSet<usize>| s.into_iter().collect())
                .collect();
            build(n, m, alpha, requests)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn random_instances_hold_invariants((params, profile) in instance_strategy()) {
        check_instance(&params, &profile);
    }

    #[test]
    fn schedules_are_deterministic((params, profile) in instance_strategy()) {
        let placement = place(&params);
        let (s1, st1) = build_schedule(&placement, &profile).unwrap();
        let (s2, st2) = build_schedule(&placement, &profile).unwrap();
        prop_assert_eq!(serde_json::to_vec(&s1).unwrap(), serde_json::to_vec(&s2).unwrap());
        prop_assert_eq!(st1, st2);
    }

    #[test]
    fn profile_documents_roundtrip((params, profile) in instance_strategy()) {
        let doc = profile_document(&params, &profile);
        let (params2, profile2) = parse_profile(&doc).unwrap();
        prop_assert_eq!(params, params2);
        prop_assert_eq!(profile, profile2);
    }
}
