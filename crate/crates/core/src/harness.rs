//! Seeded Monte-Carlo experiment harness: random request generation, sweeps
//! of the delivery rate against total load and against cache size, and CSV
//! emission.
//!
//! Randomness comes from ChaCha8, a counter-based generator: each draw is
//! seeded with the configured 64-bit seed and uses the sample index as its
//! stream, so samples are independent, parallelizable and reproducible.

use std::io::{self, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    cutset_bound, rate_of_schedule, uncoded_reference_rate, worst_rate, AnalysisError,
};
use crate::combinatorics::binom;
use crate::delivery::{build_schedule, ScheduleError};
use crate::model::{rat_decimal, rat_str, ModelError, Rat, RequestProfile, SystemParams};
use crate::prefetch::place;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("total request count {total} infeasible for M={n_groups}, N={n_files}")]
    InfeasibleLoad { total: usize, n_groups: usize, n_files: usize },
    #[error("sweep configuration invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Uniform draw below `bound` by rejection on 128-bit words.
fn uniform_below(rng: &mut ChaCha8Rng, bound: u128) -> u128 {
    debug_assert!(bound > 0);
    if bound == 1 {
        return 0;
    }
    let zone = bound * (u128::MAX / bound);
    loop {
        let x = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
        if x < zone {
            return x % bound;
        }
    }
}

// Number of compositions of `total` into `parts` entries, each in 1..=max.
fn composition_counts(parts: usize, total: usize, max: usize) -> Vec<Vec<u128>> {
    let mut ways = vec![vec![0u128; total + 1]; parts + 1];
    ways[0][0] = 1;
    for j in 1..=parts {
        for d in 0..=total {
            ways[j][d] = (1..=max.min(d)).map(|v| ways[j - 1][d - v]).sum();
        }
    }
    ways
}

// The `rank`-th size-k subset of {1..n} in lexicographic order.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut combo = Vec::with_capacity(k);
    let mut next = 1;
    for slot in 0..k {
        let mut candidate = next;
        loop {
            let with_candidate = binom(n - candidate, k - slot - 1) as u128;
            if rank < with_candidate {
                combo.push(candidate);
                next = candidate + 1;
                break;
            }
            rank -= with_candidate;
            candidate += 1;
        }
    }
    combo
}

/// Draws a request profile with `total` distinct requests overall: the
/// per-group counts are uniform over compositions of `total` with entries in
/// `1..=N`, then each group's request set is a uniform subset of that size.
pub fn sample_requests(
    n_files: usize,
    n_groups: usize,
    total: usize,
    seed: u64,
    stream: u64,
) -> Result<RequestProfile, HarnessError> {
    if total < n_groups || total > n_files * n_groups {
        return Err(HarnessError::InfeasibleLoad { total, n_groups, n_files });
    }
    let params = SystemParams::new(n_files, n_groups, 1)?;
    let mut rng = stream_rng(seed, stream);
    let ways = composition_counts(n_groups, total, n_files);
    let mut rank = uniform_below(&mut rng, ways[n_groups][total]);
    let mut left = total;
    let mut requests = Vec::with_capacity(n_groups);
    for j in 0..n_groups {
        let remaining_parts = n_groups - j - 1;
        let mut size = 0;
        for v in 1..=n_files.min(left) {
            let count = ways[remaining_parts][left - v];
            if rank < count {
                size = v;
                break;
            }
            rank -= count;
        }
        debug_assert!(size >= 1);
        left -= size;
        let subset_rank = uniform_below(&mut rng, binom(n_files, size) as u128);
        requests.push(unrank_combination(n_files, size, subset_rank));
    }
    Ok(RequestProfile::new(&params, requests)?)
}

/// Draws a profile where every group requests a uniform `l`-subset of the
/// files (so `D = l * M`, but the union set is random).
pub fn sample_uniform_requests(
    n_files: usize,
    n_groups: usize,
    l: usize,
    seed: u64,
    stream: u64,
) -> Result<RequestProfile, HarnessError> {
    if l < 1 || l > n_files {
        return Err(HarnessError::InfeasibleLoad {
            total: l * n_groups,
            n_groups,
            n_files,
        });
    }
    let params = SystemParams::new(n_files, n_groups, 1)?;
    let mut rng = stream_rng(seed, stream);
    let requests = (0..n_groups)
        .map(|_| {
            let rank = uniform_below(&mut rng, binom(n_files, l) as u128);
            unrank_combination(n_files, l, rank)
        })
        .collect();
    Ok(RequestProfile::new(&params, requests)?)
}

/// How the per-point request profiles are drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadSpec {
    /// Arbitrary profiles with the given total request counts `D`.
    TotalRequests(Vec<usize>),
    /// Uniform profiles with the given per-group counts `L`.
    UniformPerGroup(Vec<usize>),
}

/// Sweep description: `N` and `M` fixed, a list of memory points (`alpha`)
/// and a list of load points, `samples` draws per point.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_files: usize,
    pub n_groups: usize,
    pub alphas: Vec<usize>,
    pub load: LoadSpec,
    pub samples: usize,
    pub seed: u64,
}

impl SweepConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.samples < 1 {
            return Err(HarnessError::BadConfig("samples must be >= 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(HarnessError::BadConfig("alpha list must be nonempty".into()));
        }
        let empty = match &self.load {
            LoadSpec::TotalRequests(v) => v.is_empty(),
            LoadSpec::UniformPerGroup(v) => v.is_empty(),
        };
        if empty {
            return Err(HarnessError::BadConfig("load list must be nonempty".into()));
        }
        Ok(())
    }
}

/// One aggregated sweep point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepRow {
    pub n_files: usize,
    pub n_groups: usize,
    pub alpha: usize,
    pub cache: Rat,
    pub total_requests: usize,
    pub uniform_l: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub avg_rate: Rat,
    pub max_rate: Rat,
    pub worst_formula: Option<Rat>,
    pub cutset_min: Rat,
    pub uncoded_ref: Option<Rat>,
}

pub const CSV_HEADER: &str = "N,M,alpha,C,D,L_or_dash,samples,seed,avg_rate,max_rate,\
worst_formula,cutset_min,uncoded_ref_or_dash,C_exact,avg_rate_exact,max_rate_exact,\
worst_formula_exact,cutset_min_exact,uncoded_ref_exact";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt_dec = |v: Option<Rat>| v.map(rat_decimal).unwrap_or_else(|| "-".into());
        let opt_exact = |v: Option<Rat>| v.map(rat_str).unwrap_or_else(|| "-".into());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_files,
            self.n_groups,
            self.alpha,
            rat_decimal(self.cache),
            self.total_requests,
            self.uniform_l.map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
            self.samples,
            self.seed,
            rat_decimal(self.avg_rate),
            rat_decimal(self.max_rate),
            opt_dec(self.worst_formula),
            rat_decimal(self.cutset_min),
            opt_dec(self.uncoded_ref),
            rat_str(self.cache),
            rat_str(self.avg_rate),
            rat_str(self.max_rate),
            opt_exact(self.worst_formula),
            rat_str(self.cutset_min),
            opt_exact(self.uncoded_ref),
        )
    }
}

/// Writes rows in the fixed CSV layout.
pub fn write_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    Ok(())
}

struct SamplePoint {
    rate: Rat,
    worst: Option<Rat>,
    cutset: Rat,
}

fn run_point(
    config: &SweepConfig,
    alpha: usize,
    load: (usize, Option<usize>),
) -> Result<SweepRow, HarnessError> {
    let (total, uniform_l) = load;
    let params = SystemParams::new(config.n_files, config.n_groups, alpha)?;
    let placement = place(&params);
    // Samples are independent; aggregation below is in sample order, so the
    // output does not depend on the degree of parallelism.
    let points: Vec<Result<SamplePoint, HarnessError>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|stream| {
            let profile = match uniform_l {
                Some(l) => sample_uniform_requests(
                    config.n_files,
                    config.n_groups,
                    l,
                    config.seed,
                    stream,
                )?,
                None => sample_requests(
                    config.n_files,
                    config.n_groups,
                    total,
                    config.seed,
                    stream,
                )?,
            };
            // build_schedule certifies decodability before returning.
            let (_, stats) = build_schedule(&placement, &profile)?;
            let (rate, _) = rate_of_schedule(&stats, &params, &profile)?;
            let worst = worst_rate(&params, &profile.count_multiset())
                .ok()
                .map(|(r, _)| r);
            let cutset = cutset_bound(&profile, params.cache_size());
            Ok(SamplePoint { rate, worst, cutset })
        })
        .collect();
    let mut sum = Rat::from_integer(0);
    let mut max_rate: Option<Rat> = None;
    let mut worst: Option<Rat> = None;
    let mut cutset: Option<Rat> = None;
    for point in points {
        let point = point?;
        sum += point.rate;
        max_rate = Some(max_rate.map_or(point.rate, |m: Rat| m.max(point.rate)));
        if let Some(w) = point.worst {
            worst = Some(worst.map_or(w, |m: Rat| m.max(w)));
        }
        cutset = Some(cutset.map_or(point.cutset, |m: Rat| m.min(point.cutset)));
    }
    Ok(SweepRow {
        n_files: config.n_files,
        n_groups: config.n_groups,
        alpha,
        cache: params.cache_size(),
        total_requests: total,
        uniform_l,
        samples: config.samples,
        seed: config.seed,
        avg_rate: sum / Rat::from_integer(config.samples as i64),
        max_rate: max_rate.expect("samples >= 1"),
        worst_formula: worst,
        cutset_min: cutset.expect("samples >= 1"),
        uncoded_ref: uniform_l
            .map(|l| uncoded_reference_rate(config.n_files, config.n_groups, l)),
    })
}

fn load_points(config: &SweepConfig) -> Vec<(usize, Option<usize>)> {
    match &config.load {
        LoadSpec::TotalRequests(ds) => ds.iter().map(|&d| (d, None)).collect(),
        LoadSpec::UniformPerGroup(ls) => {
            ls.iter().map(|&l| (l * config.n_groups, Some(l))).collect()
        }
    }
}

/// Rate versus total load: one row per load point (per alpha).
pub fn sweep_rate_vs_load(config: &SweepConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        for load in load_points(config) {
            rows.push(run_point(config, alpha, load)?);
        }
    }
    Ok(rows)
}

/// Rate versus cache size: one row per alpha (per load point), memory points
/// `C = N/(M * alpha)`.
pub fn sweep_rate_vs_memory(config: &SweepConfig) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    let mut rows = Vec::new();
    for load in load_points(config) {
        for &alpha in &config.alphas {
            rows.push(run_point(config, alpha, load)?);
        }
    }
    Ok(rows)
}
