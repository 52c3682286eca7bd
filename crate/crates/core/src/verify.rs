//! Independent GF(2) decodability oracle.
//!
//! For each user-group, everything it can ever know is the GF(2) span of its
//! cached packets plus every broadcast payload, viewed as indicator vectors
//! over the fragment universe. A group has recovered a fragment exactly when
//! that fragment's unit vector lies in the span. The oracle never consults
//! stage tags or scheduler internals.

use std::collections::HashMap;

use crate::combinatorics::ComboTable;
use crate::model::{CacheId, FragmentId, RequestProfile, TransmissionSchedule};
use crate::prefetch::PlacementState;

/// Dense GF(2) row over the fragment universe.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRow {
    words: Vec<u64>,
}

impl BitRow {
    fn zero(dim: usize) -> Self {
        BitRow { words: vec![0; dim.div_ceil(64)] }
    }

    fn set(&mut self, bit: usize) {
        self.words[bit / 64] ^= 1 << (bit % 64);
    }

    fn xor_assign(&mut self, other: &BitRow) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
    }

    fn lowest_set_bit(&self) -> Option<usize> {
        for (i, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(i * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }

    fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Maps fragments to coordinates `((file-1) * C(N-1,a-1) + rank_in_file) * M
/// + (cache-1)` of the fragment universe.
#[derive(Debug)]
struct FragmentIndexer<'a> {
    table: &'a ComboTable,
    n_groups: usize,
    per_file: usize,
}

impl<'a> FragmentIndexer<'a> {
    fn new(placement: &'a PlacementState) -> Self {
        let table = placement.table();
        FragmentIndexer {
            table,
            n_groups: placement.params().n_groups,
            per_file: placement.params().fragments_per_file_per_cache() as usize,
        }
    }

    fn dimension(&self) -> usize {
        self.table.n_files() * self.per_file * self.n_groups
    }

    fn index_of(&self, fragment: &FragmentId) -> usize {
        let rank = self
            .table
            .rank_within_file(fragment.file, &fragment.combo)
            .expect("fragment combo belongs to the combination family");
        ((fragment.file - 1) * self.per_file + rank) * self.n_groups + (fragment.cache - 1)
    }
}

/// Everything one user-group knows: raw indicator vectors for its cached
/// packets and for every broadcast payload, plus an echelon form for span
/// queries.
#[derive(Debug)]
pub struct KnowledgeBasis {
    group: CacheId,
    dim: usize,
    raw_weights: Vec<usize>,
    rows: Vec<BitRow>,
    pivot_of: HashMap<usize, usize>,
}

impl KnowledgeBasis {
    pub fn group(&self) -> CacheId {
        self.group
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Weights of the vectors as constructed (packet rows have weight alpha,
    /// transmission rows the payload size).
    pub fn raw_weights(&self) -> &[usize] {
        &self.raw_weights
    }

    fn reduce(&self, mut row: BitRow) -> BitRow {
        while let Some(lead) = row.lowest_set_bit() {
            match self.pivot_of.get(&lead) {
                Some(&idx) => row.xor_assign(&self.rows[idx]),
                None => break,
            }
        }
        row
    }

    fn insert(&mut self, row: BitRow) {
        let reduced = self.reduce(row);
        if let Some(lead) = reduced.lowest_set_bit() {
            self.pivot_of.insert(lead, self.rows.len());
            self.rows.push(reduced);
        }
    }

    fn contains_coordinate(&self, bit: usize) -> bool {
        let mut row = BitRow::zero(self.dim);
        row.set(bit);
        self.reduce(row).lowest_set_bit().is_none()
    }
}

/// Builds the knowledge basis of `group` from its cache contents plus the
/// whole broadcast schedule.
pub fn knowledge_basis(
    group: CacheId,
    placement: &PlacementState,
    schedule: &TransmissionSchedule,
) -> KnowledgeBasis {
    let indexer = FragmentIndexer::new(placement);
    let dim = indexer.dimension();
    let mut basis = KnowledgeBasis {
        group,
        dim,
        raw_weights: Vec::new(),
        rows: Vec::new(),
        pivot_of: HashMap::new(),
    };
    // Transmissions first: the direct ones produce unit pivots that collapse
    // most later rows immediately.
    for tx in &schedule.transmissions {
        let mut row = BitRow::zero(dim);
        for fragment in &tx.payload {
            row.set(indexer.index_of(fragment));
        }
        basis.raw_weights.push(row.weight());
        basis.insert(row);
    }
    for packet in placement.packets_of(group) {
        let mut row = BitRow::zero(dim);
        for fragment in &packet.fragments {
            row.set(indexer.index_of(fragment));
        }
        basis.raw_weights.push(row.weight());
        basis.insert(row);
    }
    basis
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub group: CacheId,
    pub pass: bool,
    /// Requested fragments whose unit vectors are outside the span.
    pub missing: Vec<FragmentId>,
}

/// Checks that `group` can recover every fragment of every file it requests.
pub fn verify_group(
    group: CacheId,
    profile: &RequestProfile,
    placement: &PlacementState,
    basis: &KnowledgeBasis,
) -> GroupReport {
    let indexer = FragmentIndexer::new(placement);
    let table = placement.table();
    let mut missing = Vec::new();
    for &file in profile.requests_of(group) {
        for &pos in table.combos_with(file) {
            let combo = table.combo(pos);
            for cache in 1..=placement.params().n_groups {
                let fragment = FragmentId::new(file, combo.clone(), cache);
                if !basis.contains_coordinate(indexer.index_of(&fragment)) {
                    missing.push(fragment);
                }
            }
        }
    }
    GroupReport { group, pass: missing.is_empty(), missing }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub pass: bool,
    pub groups: Vec<GroupReport>,
}

/// Conjunction of [`verify_group`] over every user-group.
pub fn verify_all(
    profile: &RequestProfile,
    placement: &PlacementState,
    schedule: &TransmissionSchedule,
) -> VerifyReport {
    let groups: Vec<GroupReport> = (1..=placement.params().n_groups)
        .map(|m| {
            let basis = knowledge_basis(m, placement, schedule);
            verify_group(m, profile, placement, &basis)
        })
        .collect();
    VerifyReport { pass: groups.iter().all(|g| g.pass), groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::binom;
    use crate::delivery::build_schedule;
    use crate::model::{Stage, SystemParams};
    use crate::prefetch::place;

    fn setup(
        n: usize,
        m: usize,
        alpha: usize,
        requests: &[&[usize]],
    ) -> (RequestProfile, PlacementState) {
        let params = SystemParams::new(n, m, alpha).unwrap();
        let profile =
            RequestProfile::new(&params, requests.iter().map(|r| r.to_vec()).collect()).unwrap();
        let placement = place(&params);
        (profile, placement)
    }

    #[test]
    fn empty_schedule_rank_is_packet_count() {
        // Packets of one cache have disjoint fragment supports, hence are
        // linearly independent.
        let (_, placement) = setup(5, 3, 2, &[&[1], &[2], &[3]]);
        let basis = knowledge_basis(2, &placement, &TransmissionSchedule::default());
        assert_eq!(basis.rank() as u64, binom(5, 2));
        assert!(basis.raw_weights().iter().all(|&w| w == 2));
    }

    #[test]
    fn alpha_one_rows_are_units() {
        let (_, placement) = setup(3, 2, 1, &[&[1], &[2]]);
        let basis = knowledge_basis(1, &placement, &TransmissionSchedule::default());
        assert!(basis.raw_weights().iter().all(|&w| w == 1));
        assert_eq!(basis.rank(), 3);
    }

    #[test]
    fn full_schedule_passes_table_instance() {
        let (profile, placement) = setup(4, 3, 2, &[&[1, 2, 3], &[2, 3], &[1, 4]]);
        let (schedule, _) = build_schedule(&placement, &profile).unwrap();
        let report = verify_all(&profile, &placement, &schedule);
        assert!(report.pass);
    }

    #[test]
    fn truncated_schedule_fails() {
        let (profile, placement) = setup(3, 3, 2, &[&[1, 2, 3], &[2, 3], &[1]]);
        let (schedule, _) = build_schedule(&placement, &profile).unwrap();
        let truncated = TransmissionSchedule {
            transmissions: schedule
                .transmissions
                .iter()
                .filter(|t| t.stage != Stage::LastStep1 && t.stage != Stage::LastStep2)
                .cloned()
                .collect(),
        };
        let basis = knowledge_basis(2, &placement, &truncated);
        let report = verify_group(2, &profile, &placement, &basis);
        assert!(!report.pass);
        // Group 2 misses exactly the multi-requested fragments parked for the
        // last stage in the other caches.
        assert!(report.missing.iter().all(|f| f.cache != 2));
        let full = verify_all(&profile, &placement, &schedule);
        assert!(full.pass);
    }

    #[test]
    fn self_sufficient_cache_passes_empty_schedule() {
        let (profile, placement) = setup(3, 1, 1, &[&[1, 2, 3]]);
        let report = verify_all(&profile, &placement, &TransmissionSchedule::default());
        assert!(report.pass);
    }

    #[test]
    fn empty_schedule_fails_multi_cache_requests() {
        let (profile, placement) = setup(3, 3, 2, &[&[1, 2, 3], &[2, 3], &[1]]);
        let report = verify_all(&profile, &placement, &TransmissionSchedule::default());
        assert!(!report.pass);
    }

    #[test]
    fn recoverable_set_grows_with_schedule_prefix() {
        let (profile, placement) = setup(4, 3, 2, &[&[1, 2, 3], &[2, 3], &[1, 4]]);
        let (schedule, _) = build_schedule(&placement, &profile).unwrap();
        let mut last_missing = usize::MAX;
        for cut in 0..=schedule.len() {
            let prefix = TransmissionSchedule {
                transmissions: schedule.transmissions[..cut].to_vec(),
            };
            let basis = knowledge_basis(1, &placement, &prefix);
            let report = verify_group(1, &profile, &placement, &basis);
            assert!(report.missing.len() <= last_missing);
            last_missing = report.missing.len();
        }
        assert_eq!(last_missing, 0);
    }
}
