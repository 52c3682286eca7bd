//! Network description, request profiles, fragment/packet identities and the
//! transmission/statistics records shared by the placement, delivery and
//! analysis code.
//!
//! All file and cache indices are 1-based, and every size or rate is kept as
//! an exact rational with denominator `M * C(N-1, alpha-1)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combinatorics::{binom, Combo};

/// Exact rational used for all sizes, rates and bounds.
pub type Rat = Ratio<i64>;

/// 1-based file index.
pub type FileId = usize;
/// 1-based user-group / cache index.
pub type CacheId = usize;

/// Renders a rational as `p/q` (always with an explicit denominator).
pub fn rat_str(r: Rat) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses the `p/q` form produced by [`rat_str`]; a bare integer also parses.
pub fn parse_rat(s: &str) -> Option<Rat> {
    match s.split_once('/') {
        Some((p, q)) => Some(Rat::new(p.trim().parse().ok()?, q.trim().parse().ok()?)),
        None => Some(Rat::from_integer(s.trim().parse().ok()?)),
    }
}

/// Renders a rational as a decimal with six fractional digits.
pub fn rat_decimal(r: Rat) -> String {
    let scaled = r * Rat::from_integer(1_000_000);
    let rounded = scaled.round().to_integer();
    let sign = if rounded < 0 { "-" } else { "" };
    let abs = rounded.unsigned_abs();
    format!("{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("alpha must satisfy 1 <= alpha <= N, got alpha={alpha}, N={n_files}")]
    AlphaOutOfRange { alpha: usize, n_files: usize },
    #[error("at least one user-group is required")]
    NoGroups,
    #[error("at least one file is required")]
    NoFiles,
    #[error("expected {expected} request sets, got {got}")]
    GroupCountMismatch { expected: usize, got: usize },
    #[error("user-group {group} has an empty request set")]
    EmptyRequestSet { group: CacheId },
    #[error("user-group {group} requests file {file}, outside 1..={n_files}")]
    FileOutOfRange { group: CacheId, file: FileId, n_files: usize },
    #[error("profile document is not valid: {0}")]
    Document(String),
}

/// The `(N, M, alpha)` network description. `C = N / (M * alpha)` file units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_files: usize,
    pub n_groups: usize,
    pub alpha: usize,
}

impl SystemParams {
    pub fn new(n_files: usize, n_groups: usize, alpha: usize) -> Result<Self, ModelError> {
        if n_files == 0 {
            return Err(ModelError::NoFiles);
        }
        if n_groups == 0 {
            return Err(ModelError::NoGroups);
        }
        if alpha < 1 || alpha > n_files {
            return Err(ModelError::AlphaOutOfRange { alpha, n_files });
        }
        Ok(SystemParams { n_files, n_groups, alpha })
    }

    /// Cache size per user-group in file units, `N / (M * alpha)`, exact.
    pub fn cache_size(&self) -> Rat {
        Rat::new(self.n_files as i64, (self.n_groups * self.alpha) as i64)
    }

    /// Number of fragments each file is split into per cache, `C(N-1, alpha-1)`.
    pub fn fragments_per_file_per_cache(&self) -> u64 {
        binom(self.n_files - 1, self.alpha - 1)
    }

    /// Denominator converting fragment-unit counts into file units,
    /// `M * C(N-1, alpha-1)`.
    pub fn fragment_denominator(&self) -> u64 {
        self.n_groups as u64 * self.fragments_per_file_per_cache()
    }
}

/// Per-group distinct request sets plus every derived quantity the delivery
/// scheme needs: the union request set, per-file requester sets, and the
/// per-group counts of exclusively requested files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestProfile {
    requests: Vec<BTreeSet<FileId>>,
    total: usize,
    requested_files: BTreeSet<FileId>,
    requesters: BTreeMap<FileId, Vec<CacheId>>,
    exclusive: Vec<usize>,
}

impl RequestProfile {
    pub fn new(params: &SystemParams, requests: Vec<Vec<FileId>>) -> Result<Self, ModelError> {
        if requests.len() != params.n_groups {
            return Err(ModelError::GroupCountMismatch {
                expected: params.n_groups,
                got: requests.len(),
            });
        }
        let mut sets = Vec::with_capacity(requests.len());
        for (i, group) in requests.iter().enumerate() {
            let set: BTreeSet<FileId> = group.iter().copied().collect();
            if set.is_empty() {
                return Err(ModelError::EmptyRequestSet { group: i + 1 });
            }
            for &file in &set {
                if file < 1 || file > params.n_files {
                    return Err(ModelError::FileOutOfRange {
                        group: i + 1,
                        file,
                        n_files: params.n_files,
                    });
                }
            }
            sets.push(set);
        }
        let total = sets.iter().map(|s| s.len()).sum();
        let requested_files: BTreeSet<FileId> = sets.iter().flatten().copied().collect();
        let mut requesters: BTreeMap<FileId, Vec<CacheId>> = BTreeMap::new();
        for (i, set) in sets.iter().enumerate() {
            for &file in set {
                requesters.entry(file).or_default().push(i + 1);
            }
        }
        let exclusive = sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                set.iter().filter(|f| requesters[f] == vec![i + 1]).count()
            })
            .collect();
        Ok(RequestProfile { requests: sets, total, requested_files, requesters, exclusive })
    }

    pub fn n_groups(&self) -> usize {
        self.requests.len()
    }

    /// Request set of group `m` (1-based).
    pub fn requests_of(&self, group: CacheId) -> &BTreeSet<FileId> {
        &self.requests[group - 1]
    }

    /// Distinct request count `D_m` of group `m`.
    pub fn count_of(&self, group: CacheId) -> usize {
        self.requests[group - 1].len()
    }

    /// Sum of distinct request counts `D`.
    pub fn total_requests(&self) -> usize {
        self.total
    }

    /// Union request set.
    pub fn requested_files(&self) -> &BTreeSet<FileId> {
        &self.requested_files
    }

    /// `N_R`, the number of distinct files requested network-wide.
    pub fn n_requested(&self) -> usize {
        self.requested_files.len()
    }

    /// Sorted groups requesting `file`; empty when no group does.
    pub fn requesters_of(&self, file: FileId) -> &[CacheId] {
        self.requesters.get(&file).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of files requested exclusively by group `m`.
    pub fn exclusive_count(&self, group: CacheId) -> usize {
        self.exclusive[group - 1]
    }

    /// Request sets as plain sorted vectors, for serialization.
    pub fn to_lists(&self) -> Vec<Vec<FileId>> {
        self.requests.iter().map(|s| s.iter().copied().collect()).collect()
    }

    /// Sorted multiset of per-group request counts, descending.
    pub fn count_multiset(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.requests.iter().map(|s| s.len()).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts
    }
}

/// On-disk profile document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDocument {
    #[serde(rename = "N")]
    n_files: usize,
    #[serde(rename = "M")]
    n_groups: usize,
    alpha: usize,
    requests: Vec<Vec<FileId>>,
}

/// Parses the JSON profile document `{"N":..,"M":..,"alpha":..,"requests":[..]}`.
pub fn parse_profile(document: &str) -> Result<(SystemParams, RequestProfile), ModelError> {
    let doc: ProfileDocument =
        serde_json::from_str(document).map_err(|e| ModelError::Document(e.to_string()))?;
    let params = SystemParams::new(doc.n_files, doc.n_groups, doc.alpha)?;
    let profile = RequestProfile::new(&params, doc.requests)?;
    Ok((params, profile))
}

/// Serializes params + profile back into the document form accepted by
/// [`parse_profile`].
pub fn profile_document(params: &SystemParams, profile: &RequestProfile) -> String {
    let doc = ProfileDocument {
        n_files: params.n_files,
        n_groups: params.n_groups,
        alpha: params.alpha,
        requests: profile.to_lists(),
    };
    serde_json::to_string_pretty(&doc).expect("profile document serialization")
}

/// One fragment of one file: the piece of `file` assigned to `cache` inside
/// the packet of combination `combo`. Fragment size is
/// `1 / (M * C(N-1, alpha-1))` file units.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FragmentId {
    pub file: FileId,
    pub combo: Combo,
    pub cache: CacheId,
}

impl FragmentId {
    pub fn new(file: FileId, combo: Combo, cache: CacheId) -> Self {
        debug_assert!(combo.contains(file), "fragment file must belong to its combo");
        FragmentId { file, combo, cache }
    }
}

impl fmt::Display for FragmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}{}@m{}", self.file, self.combo, self.cache)
    }
}

/// One cached packet: the XOR of one fragment per file of `combo`, stored in
/// `cache`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketId {
    pub combo: Combo,
    pub cache: CacheId,
}

impl PacketId {
    pub fn new(combo: Combo, cache: CacheId) -> Self {
        PacketId { combo, cache }
    }

    /// The fragments XORed into this packet, in ascending file order.
    pub fn fragments(&self) -> Vec<FragmentId> {
        self.combo
            .iter()
            .map(|file| FragmentId::new(file, self.combo.clone(), self.cache))
            .collect()
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}@m{}", self.combo, self.cache)
    }
}

/// Stage tag attached to every broadcast transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "TypeI")]
    Type1,
    #[serde(rename = "TypeII-1")]
    Type2Step1,
    #[serde(rename = "TypeII-2")]
    Type2Step2,
    #[serde(rename = "TypeIII-1")]
    Type3Step1,
    #[serde(rename = "TypeIII-2")]
    Type3Step2,
    #[serde(rename = "TypeIV-1")]
    Type4Step1,
    #[serde(rename = "TypeIV-2")]
    Type4Step2,
    #[serde(rename = "TypeIV-3")]
    Type4Step3,
    #[serde(rename = "Last-1")]
    LastStep1,
    #[serde(rename = "Last-2")]
    LastStep2,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Type1,
        Stage::Type2Step1,
        Stage::Type2Step2,
        Stage::Type3Step1,
        Stage::Type3Step2,
        Stage::Type4Step1,
        Stage::Type4Step2,
        Stage::Type4Step3,
        Stage::LastStep1,
        Stage::LastStep2,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Stage::Type1 => "TypeI",
            Stage::Type2Step1 => "TypeII-1",
            Stage::Type2Step2 => "TypeII-2",
            Stage::Type3Step1 => "TypeIII-1",
            Stage::Type3Step2 => "TypeIII-2",
            Stage::Type4Step1 => "TypeIV-1",
            Stage::Type4Step2 => "TypeIV-2",
            Stage::Type4Step3 => "TypeIV-3",
            Stage::LastStep1 => "Last-1",
            Stage::LastStep2 => "Last-2",
        }
    }
}

/// One broadcast: the XOR of the (distinct) fragments in `payload`.
/// Every transmission occupies exactly one fragment unit on the shared link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub stage: Stage,
    pub payload: Vec<FragmentId>,
}

impl Transmission {
    pub fn new(stage: Stage, mut payload: Vec<FragmentId>) -> Self {
        payload.sort();
        let before = payload.len();
        payload.dedup();
        debug_assert_eq!(before, payload.len(), "payload must not contain duplicate fragments");
        debug_assert!(!payload.is_empty(), "payload must be nonempty");
        Transmission { stage, payload }
    }

    pub fn direct(stage: Stage, fragment: FragmentId) -> Self {
        Transmission { stage, payload: vec![fragment] }
    }

    pub fn is_direct(&self) -> bool {
        self.payload.len() == 1
    }
}

impl fmt::Display for Transmission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.stage.label())?;
        for (i, frag) in self.payload.iter().enumerate() {
            if i > 0 {
                write!(f, " ^ ")?;
            }
            write!(f, "{frag}")?;
        }
        Ok(())
    }
}

/// The ordered broadcast schedule.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransmissionSchedule {
    pub transmissions: Vec<Transmission>,
}

impl TransmissionSchedule {
    pub fn len(&self) -> usize {
        self.transmissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty()
    }

    /// Number of transmissions carrying each stage tag.
    pub fn count_by_stage(&self) -> BTreeMap<Stage, usize> {
        let mut counts = BTreeMap::new();
        for tx in &self.transmissions {
            *counts.entry(tx.stage).or_insert(0) += 1;
        }
        counts
    }
}

/// Scheduler choices recorded for inspection: per-file Type-II reference
/// caches, the Type-III reference cache, and the kept (untransmitted) local
/// file of every Type-III packet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub type2_reference: Vec<(FileId, CacheId)>,
    pub type3_reference: Option<CacheId>,
    pub type3_kept: Vec<(PacketId, FileId)>,
}

/// Fragment-unit counters for every delivery stage plus the two measured
/// gains and the per-cache state entering the last stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryStats {
    pub t1: usize,
    pub t2_step1: usize,
    pub t2_step2: usize,
    pub t2_remaining: usize,
    pub t3_step1: usize,
    pub t3_step2: usize,
    pub t3_remaining: usize,
    pub t4: usize,
    pub t4_remaining: usize,
    pub t_last: usize,
    /// Type-IV delivery gain (delta): fragment units saved by steps 1 and 2.
    pub type4_gain: usize,
    /// Last-stage delivery gain (Delta): minimum per-cache remaining count.
    pub last_gain: usize,
    /// Per-cache count of untransmitted multi-requested Type-III local fragments.
    pub l_untransmitted: Vec<usize>,
    /// Per-cache remaining fragment counts entering the last stage.
    pub remaining_before_last: Vec<usize>,
    pub trace: ScheduleTrace,
    /// Number of coded payloads replaced by direct transmissions because the
    /// decodability certification rejected them. Zero in every observed run.
    pub fallback_splits: usize,
}

impl DeliveryStats {
    /// Total broadcast size in fragment units.
    pub fn total_transmissions(&self) -> usize {
        self.t1 + self.t2_step1 + self.t2_step2 + self.t3_step1 + self.t3_step2 + self.t4
            + self.t_last
    }
}
