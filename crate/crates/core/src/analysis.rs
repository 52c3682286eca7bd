//! Closed-form delivery rates and bounds, cross-checked against simulated
//! schedules. Everything is exact rational arithmetic; there are no
//! tolerances anywhere.

use num_traits::Zero;
use thiserror::Error;

use crate::combinatorics::binom;
use crate::model::{rat_str, DeliveryStats, Rat, RequestProfile, SystemParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("counted rate {counted} does not equal the closed-form rate {theorem} although no fallback fired")]
    RateIdentity { counted: String, theorem: String },
    #[error("worst-rate formula out of regime: {0}")]
    Regime(String),
    #[error("invalid request multiset: {0}")]
    BadCounts(String),
}

fn rb(n: usize, k: usize) -> Rat {
    Rat::from_integer(binom(n, k) as i64)
}

/// `sum_{n=2}^{min(d,alpha)} C(top, n) * C(rest, alpha - n)` — the Type-III
/// packet-count shape used throughout.
fn type3_sum(top: usize, d: usize, rest: usize, alpha: usize) -> Rat {
    (2..=d.min(alpha)).map(|n| rb(top, n) * rb(rest, alpha - n)).sum()
}

/// The closed-form delivery rate for a given profile and measured gains
/// `delta` (Type-IV) and `big_delta` (last stage).
pub fn theorem_rate(
    params: &SystemParams,
    profile: &RequestProfile,
    delta: usize,
    big_delta: usize,
) -> Rat {
    let alpha = params.alpha;
    let n_r = profile.n_requested();
    let denom = Rat::from_integer(params.fragment_denominator() as i64);

    let paired_type2: Rat = profile
        .requested_files()
        .iter()
        .map(|&file| {
            profile
                .requesters_of(file)
                .iter()
                .map(|&m| rb(n_r - profile.count_of(m), alpha - 1))
                .min()
                .expect("requested file has a requester")
        })
        .sum();

    let mut type3_correction = Rat::zero();
    let mut min_untransmitted: Option<Rat> = None;
    for m in 1..=params.n_groups {
        let d = profile.count_of(m);
        let sigma = profile.exclusive_count(m);
        let shared = type3_sum(d - sigma, d, n_r - d, alpha);
        let all = type3_sum(d, d, n_r - d, alpha);
        type3_correction += shared - all;
        min_untransmitted = Some(match min_untransmitted {
            Some(best) => best.min(shared),
            None => shared,
        });
    }

    Rat::from_integer(n_r as i64) - paired_type2 / denom + type3_correction / denom
        - min_untransmitted.unwrap_or_else(Rat::zero) / denom
        - Rat::from_integer((delta + big_delta) as i64) / denom
}

/// Achieved rate from the raw stage counters, plus the closed-form rate with
/// the measured gains. The two must agree exactly whenever no certification
/// fallback fired; disagreement is a scheduler defect.
pub fn rate_of_schedule(
    stats: &DeliveryStats,
    params: &SystemParams,
    profile: &RequestProfile,
) -> Result<(Rat, Rat), AnalysisError> {
    let denom = Rat::from_integer(params.fragment_denominator() as i64);
    let counted = Rat::from_integer(stats.total_transmissions() as i64) / denom;
    let theorem = theorem_rate(params, profile, stats.type4_gain, stats.last_gain);
    if stats.fallback_splits == 0 && counted != theorem {
        return Err(AnalysisError::RateIdentity {
            counted: rat_str(counted),
            theorem: rat_str(theorem),
        });
    }
    Ok((counted, theorem))
}

/// Ingredients of the `D > M` worst-rate formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorstRateBreakdown {
    /// Request counts sorted descending.
    pub sorted_counts: Vec<usize>,
    /// Largest I with `sum of the I largest counts <= N`.
    pub i_threshold: usize,
    pub g: Rat,
    /// Upper bounds on delivered Type-II packets per cache, in sorted order.
    pub a_ceiling: Vec<u64>,
}

fn validate_counts(params: &SystemParams, counts: &[usize]) -> Result<(), AnalysisError> {
    if counts.len() != params.n_groups {
        return Err(AnalysisError::BadCounts(format!(
            "expected {} counts, got {}",
            params.n_groups,
            counts.len()
        )));
    }
    if let Some(&bad) = counts.iter().find(|&&d| d < 1 || d > params.n_files) {
        return Err(AnalysisError::BadCounts(format!(
            "count {bad} outside 1..={}",
            params.n_files
        )));
    }
    Ok(())
}

/// Worst delivery rate over all profiles with the given per-group request
/// counts (any order). `D = M` requires `M >= N`; `D > M` requires `D > N`
/// so that the sorted-prefix threshold exists.
pub fn worst_rate(
    params: &SystemParams,
    counts: &[usize],
) -> Result<(Rat, Option<WorstRateBreakdown>), AnalysisError> {
    validate_counts(params, counts)?;
    let n = params.n_files;
    let m = params.n_groups;
    let alpha = params.alpha;
    let total: usize = counts.iter().sum();
    if total == m {
        if m < n {
            return Err(AnalysisError::Regime(format!(
                "single requests per group (D = M) requires M >= N, got M={m}, N={n}"
            )));
        }
        let rate = Rat::from_integer(n as i64)
            - Rat::new((n * (n + 1)) as i64, ((alpha + 1) * m) as i64);
        return Ok((rate, None));
    }
    if total <= n {
        return Err(AnalysisError::Regime(format!(
            "multi-request worst rate requires D > N, got D={total}, N={n}"
        )));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut i_threshold = 0;
    let mut prefix = 0;
    while prefix + sorted[i_threshold] <= n {
        prefix += sorted[i_threshold];
        i_threshold += 1;
    }
    debug_assert!(i_threshold >= 1 && i_threshold < m);

    let denom = Rat::from_integer(params.fragment_denominator() as i64);
    let delivered_type2: u64 = sorted[..i_threshold]
        .iter()
        .map(|&d| d as u64 * binom(n - d, alpha - 1))
        .sum();
    let boundary = (n - prefix) as u64 * binom(n - sorted[i_threshold], alpha - 1);
    let min_type3 = (0..m)
        .map(|i| type3_sum(sorted[i], sorted[i], n - sorted[i], alpha))
        .min()
        .expect("at least one cache");
    let min_type4 = sorted.iter().map(|&d| rb(n - d, alpha)).min().expect("nonempty");
    let g = (Rat::from_integer((delivered_type2 + boundary) as i64) + min_type3 + min_type4)
        / denom;

    let cache = params.cache_size();
    let slack = if cache > g { cache - g } else { Rat::zero() };
    let rate = Rat::from_integer(n as i64) - (g + slack);

    let ceiling = delivered_type2 + boundary;
    let a_ceiling = (0..m)
        .map(|i| {
            if i < i_threshold {
                sorted[i] as u64 * binom(n - sorted[i], alpha - 1)
            } else {
                ceiling
            }
        })
        .collect();
    Ok((rate, Some(WorstRateBreakdown { sorted_counts: sorted, i_threshold, g, a_ceiling })))
}

/// Worst delivery rate for uniform per-group request counts `L`.
pub fn worst_rate_uniform(params: &SystemParams, l: usize) -> Result<Rat, AnalysisError> {
    let n = params.n_files;
    let m = params.n_groups;
    let alpha = params.alpha;
    if l == 1 {
        if m < n {
            return Err(AnalysisError::Regime(format!(
                "uniform L = 1 requires M >= N, got M={m}, N={n}"
            )));
        }
        return Ok(Rat::from_integer(n as i64)
            - Rat::new((n * (n + 1)) as i64, ((alpha + 1) * m) as i64));
    }
    if l > n || l * m <= n {
        return Err(AnalysisError::Regime(format!(
            "uniform worst rate requires 2 <= L <= N and L*M > N, got L={l}, N={n}, M={m}"
        )));
    }
    Ok(Rat::from_integer(n as i64)
        - Rat::from_integer(((n - l) as u64 * binom(n - l, alpha - 1)) as i64)
            / Rat::from_integer(params.fragment_denominator() as i64)
        - params.cache_size())
}

/// Reference delivery rate of uncoded prefetching at cache size `N/M` under
/// uniform requests.
pub fn uncoded_reference_rate(n_files: usize, n_groups: usize, l: usize) -> Rat {
    let n = n_files as i64;
    let m = n_groups as i64;
    if l == 1 && n_files <= n_groups && n_groups <= 2 * n_files {
        return Rat::new(m - 1, 2);
    }
    let coded = Rat::new(l as i64 * (m - 1), 2);
    let direct = Rat::from_integer(n) - Rat::new(n, m);
    coded.min(direct)
}

/// Cut-set lower bound on the delivery rate for the given profile and cache
/// size: the maximum over group subsets with pairwise-disjoint request sets
/// (and request counts summing to at most `N_R`) of
/// `sum D - s*C / floor(N_R / sum D)`.
///
/// The cut carrying the broadcast plus the chosen caches must reproduce the
/// chosen groups' requested files, which only amount to `sum D` units when no
/// file is requested twice among them; subsets with overlapping requests are
/// therefore not admissible. Subsets are enumerated exhaustively, and the
/// subset-size cap is implied by the sum bound.
pub fn cutset_bound(profile: &RequestProfile, cache: Rat) -> Rat {
    let m = profile.n_groups();
    let n_r = profile.n_requested();
    let counts: Vec<usize> = (1..=m).map(|g| profile.count_of(g)).collect();
    let mut best: Option<Rat> = None;
    for mask in 1u64..(1 << m) {
        let s = mask.count_ones() as i64;
        let chosen: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sum: usize = chosen.iter().map(|&i| counts[i]).sum();
        if sum > n_r {
            continue;
        }
        let union: std::collections::BTreeSet<usize> = chosen
            .iter()
            .flat_map(|&i| profile.requests_of(i + 1).iter().copied())
            .collect();
        if union.len() != sum {
            continue; // overlapping requests
        }
        let folds = (n_r / sum) as i64;
        let term = Rat::from_integer(sum as i64) - Rat::from_integer(s) * cache / Rat::from_integer(folds);
        best = Some(match best {
            Some(b) => b.max(term),
            None => term,
        });
    }
    best.expect("at least one admissible subset: every D_m <= N_R")
}

/// Upper bound on `R*(N) - R_CSB`: `N - max_m D_m`.
pub fn gap_bound(params: &SystemParams, profile: &RequestProfile) -> Rat {
    let max_d = (1..=profile.n_groups()).map(|m| profile.count_of(m)).max().unwrap_or(0);
    Rat::from_integer((params.n_files - max_d) as i64)
}
