//! The complete delivery scheduler: classify every cached packet by how its
//! fragments relate to the request profile, deliver each packet type with its
//! own strategy, and sweep up whatever is left in a final pairwise-coded
//! stage.
//!
//! All argmin/argmax ties break toward the smallest cache index, then the
//! smallest file index, then lexicographic combo order, so identical inputs
//! always produce byte-identical schedules.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{
    CacheId, DeliveryStats, FileId, FragmentId, PacketId, RequestProfile, ScheduleTrace, Stage,
    Transmission, TransmissionSchedule,
};
use crate::prefetch::PlacementState;
use crate::verify;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("schedule could not be certified decodable even after {splits} payload splits; missing {missing}")]
    Undecodable { splits: usize, missing: FragmentId },
}

/// Per-cache partition of the cached packets.
///
/// A packet is Type-I when its combo meets both the requested set and its
/// complement; the remaining classes partition the packets whose combo lies
/// entirely inside the requested set, by the number of local (self-requested)
/// fragments: one (Type-II), more than one (Type-III), none (Type-IV).
/// Packets whose combo avoids the requested set entirely are inactive.
#[derive(Debug, Clone, Default)]
pub struct CacheClass {
    pub type1: Vec<PacketId>,
    /// Packet plus its single local file.
    pub type2: Vec<(PacketId, FileId)>,
    /// Packet plus its local files in ascending order.
    pub type3: Vec<(PacketId, Vec<FileId>)>,
    pub type4: Vec<PacketId>,
    pub inactive: Vec<PacketId>,
}

#[derive(Debug, Clone)]
pub struct PacketClass {
    alpha: usize,
    per_cache: Vec<CacheClass>,
}

impl PacketClass {
    pub fn for_cache(&self, cache: CacheId) -> &CacheClass {
        &self.per_cache[cache - 1]
    }

    pub fn n_caches(&self) -> usize {
        self.per_cache.len()
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }
}

pub fn classify_packets(placement: &PlacementState, profile: &RequestProfile) -> PacketClass {
    let requested = profile.requested_files();
    let mut per_cache = Vec::with_capacity(placement.params().n_groups);
    for cache in 1..=placement.params().n_groups {
        let own = profile.requests_of(cache);
        let mut class = CacheClass::default();
        for packet in placement.packets_of(cache) {
            let combo = &packet.id.combo;
            let requested_in = combo.iter().filter(|f| requested.contains(f)).count();
            if requested_in == 0 {
                class.inactive.push(packet.id.clone());
            } else if requested_in < combo.len() {
                class.type1.push(packet.id.clone());
            } else {
                let locals: Vec<FileId> = combo.iter().filter(|f| own.contains(f)).collect();
                match locals.len() {
                    0 => class.type4.push(packet.id.clone()),
                    1 => class.type2.push((packet.id.clone(), locals[0])),
                    _ => class.type3.push((packet.id.clone(), locals)),
                }
            }
        }
        per_cache.push(class);
    }
    PacketClass { alpha: placement.params().alpha, per_cache }
}

/// Type-I delivery: directly transmit every requested fragment encoded in a
/// Type-I packet.
pub fn deliver_type1(
    class: &PacketClass,
    profile: &RequestProfile,
) -> (Vec<Transmission>, usize) {
    let requested = profile.requested_files();
    let mut out = Vec::new();
    for cache_class in &class.per_cache {
        for packet in &cache_class.type1 {
            for file in packet.combo.iter().filter(|f| requested.contains(f)) {
                out.push(Transmission::direct(
                    Stage::Type1,
                    FragmentId::new(file, packet.combo.clone(), packet.cache),
                ));
            }
        }
    }
    let count = out.len();
    (out, count)
}

#[derive(Debug, Clone, Default)]
pub struct Type2Outcome {
    pub transmissions: Vec<Transmission>,
    pub step1_count: usize,
    pub step2_count: usize,
    /// Unpaired multi-requested local fragments, delivered at the last stage.
    pub remaining: Vec<FragmentId>,
    /// Per-file reference cache used in step 2.
    pub reference: Vec<(FileId, CacheId)>,
}

/// Type-II delivery. Step 1 transmits the `alpha - 1` non-local fragments of
/// every Type-II packet. Step 2 then pairs the local fragments of each
/// multi-requested file across the caches requesting it, using the cache with
/// the fewest such fragments as the reference; no local fragment is paired
/// twice.
pub fn deliver_type2(class: &PacketClass, profile: &RequestProfile) -> Type2Outcome {
    let mut outcome = Type2Outcome::default();
    for cache_class in &class.per_cache {
        for (packet, local) in &cache_class.type2 {
            for file in packet.combo.iter().filter(|f| f != local) {
                outcome.transmissions.push(Transmission::direct(
                    Stage::Type2Step1,
                    FragmentId::new(file, packet.combo.clone(), packet.cache),
                ));
            }
        }
    }
    outcome.step1_count = outcome.transmissions.len();

    // Local Type-II fragments of `file` in `cache`, canonical packet order.
    let locals = |cache: CacheId, file: FileId| -> Vec<FragmentId> {
        class
            .for_cache(cache)
            .type2
            .iter()
            .filter(|(_, local)| *local == file)
            .map(|(packet, _)| FragmentId::new(file, packet.combo.clone(), cache))
            .collect()
    };

    for &file in profile.requested_files() {
        let requesters = profile.requesters_of(file);
        if requesters.len() < 2 {
            continue;
        }
        let reference = requesters
            .iter()
            .copied()
            .min_by_key(|&m| (locals(m, file).len(), m))
            .expect("requesters nonempty");
        outcome.reference.push((file, reference));
        let refs = locals(reference, file);
        for &partner in requesters.iter().filter(|&&m| m != reference) {
            let fragments = locals(partner, file);
            debug_assert!(fragments.len() >= refs.len());
            for (j, reference_fragment) in refs.iter().enumerate() {
                outcome.transmissions.push(Transmission::new(
                    Stage::Type2Step2,
                    vec![reference_fragment.clone(), fragments[j].clone()],
                ));
                outcome.step2_count += 1;
            }
            outcome.remaining.extend(fragments[refs.len()..].iter().cloned());
        }
    }
    outcome
}

#[derive(Debug, Clone, Default)]
pub struct Type3Outcome {
    pub transmissions: Vec<Transmission>,
    pub step1_count: usize,
    pub step2_count: usize,
    pub remaining: Vec<FragmentId>,
    /// Per-cache count of untransmitted multi-requested local fragments.
    pub untransmitted_counts: Vec<usize>,
    pub reference: Option<CacheId>,
    /// Kept (untransmitted) local file of each Type-III packet.
    pub kept: Vec<(PacketId, FileId)>,
}

/// Type-III delivery. Step 1 keeps, per packet, the local fragment whose file
/// is least requested and transmits the other `alpha - 1` fragments. Step 2
/// pairs the kept multi-requested fragments across all caches, referenced
/// from the cache holding the fewest of them.
pub fn deliver_type3(class: &PacketClass, profile: &RequestProfile) -> Type3Outcome {
    let n_caches = class.n_caches();
    let mut outcome = Type3Outcome::default();
    // Kept multi-requested fragments per cache, canonical packet order.
    let mut multi_kept: Vec<Vec<FragmentId>> = vec![Vec::new(); n_caches];

    for (idx, cache_class) in class.per_cache.iter().enumerate() {
        let cache = idx + 1;
        for (packet, locals) in &cache_class.type3 {
            let kept = locals
                .iter()
                .copied()
                .min_by_key(|&f| (profile.requesters_of(f).len(), f))
                .expect("type-3 packet has local fragments");
            outcome.kept.push((packet.clone(), kept));
            for file in packet.combo.iter().filter(|&f| f != kept) {
                outcome.transmissions.push(Transmission::direct(
                    Stage::Type3Step1,
                    FragmentId::new(file, packet.combo.clone(), cache),
                ));
            }
            if profile.requesters_of(kept).len() > 1 {
                multi_kept[idx].push(FragmentId::new(kept, packet.combo.clone(), cache));
            }
        }
    }
    outcome.step1_count = outcome.transmissions.len();
    outcome.untransmitted_counts = multi_kept.iter().map(Vec::len).collect();

    let reference = (1..=n_caches)
        .min_by_key(|&m| (multi_kept[m - 1].len(), m))
        .expect("at least one cache");
    outcome.reference = Some(reference);
    let pair_count = multi_kept[reference - 1].len();
    for j in 0..pair_count {
        let reference_fragment = multi_kept[reference - 1][j].clone();
        for m in 1..=n_caches {
            if m == reference {
                continue;
            }
            outcome.transmissions.push(Transmission::new(
                Stage::Type3Step2,
                vec![reference_fragment.clone(), multi_kept[m - 1][j].clone()],
            ));
            outcome.step2_count += 1;
        }
    }
    for (idx, fragments) in multi_kept.iter().enumerate() {
        if idx + 1 == reference {
            continue;
        }
        outcome.remaining.extend(fragments[pair_count..].iter().cloned());
    }
    outcome
}

/// An `(alpha + 1)`-request set: `alpha + 1` requested files no user-group
/// requests two of, together with the union of their requesters and the
/// Type-IV packet each of those caches contributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestSet {
    /// The files, ascending.
    pub files: Vec<FileId>,
    /// The requesting caches, ascending.
    pub groups: Vec<CacheId>,
    /// One Type-IV packet per entry of `groups`.
    pub packet_group: Vec<PacketId>,
}

/// True when no user-group requests two or more of `files`.
pub fn disjoint_requesters(files: &[FileId], profile: &RequestProfile) -> bool {
    let mut seen: BTreeSet<CacheId> = BTreeSet::new();
    for &file in files {
        for &m in profile.requesters_of(file) {
            if !seen.insert(m) {
                return false;
            }
        }
    }
    true
}

// Two accepted request sets may not share a Type-IV packet: they must differ
// in at least two files, or their two differing files must not both be
// requested by any single group.
fn compatible_sets(a: &[FileId], b: &[FileId], alpha: usize, profile: &RequestProfile) -> bool {
    let sa: BTreeSet<FileId> = a.iter().copied().collect();
    let sb: BTreeSet<FileId> = b.iter().copied().collect();
    let inter = sa.intersection(&sb).count();
    if inter < alpha {
        return true;
    }
    if inter > alpha {
        return false; // identical sets
    }
    let diff: BTreeSet<FileId> = sa.symmetric_difference(&sb).copied().collect();
    !(1..=profile.n_groups()).any(|m| diff.iter().all(|f| profile.requests_of(m).contains(f)))
}

fn request_set_from_files(files: Vec<FileId>, profile: &RequestProfile) -> RequestSet {
    let mut groups: Vec<CacheId> = files
        .iter()
        .flat_map(|&f| profile.requesters_of(f).iter().copied())
        .collect();
    groups.sort_unstable();
    groups.dedup();
    let packet_group = groups
        .iter()
        .map(|&m| {
            let own = files
                .iter()
                .copied()
                .find(|&f| profile.requests_of(m).contains(&f))
                .expect("every group of the set requests one of its files");
            let combo: Vec<FileId> = files.iter().copied().filter(|&f| f != own).collect();
            PacketId::new(crate::combinatorics::Combo::new(combo), m)
        })
        .collect();
    RequestSet { files, groups, packet_group }
}

/// Greedy search for the valid `(alpha + 1)`-request sets: reference group
/// ascending, group subsets lexicographic, request choices lexicographic.
/// Returns an empty list for `alpha = 1`, where this step is merged into the
/// packet-group search.
pub fn search_request_sets(class: &PacketClass, profile: &RequestProfile) -> Vec<RequestSet> {
    let n_caches = profile.n_groups();
    let alpha = class.alpha();
    if alpha < 2 || n_caches < alpha + 1 {
        return Vec::new();
    }
    let mut accepted: Vec<RequestSet> = Vec::new();
    for m0 in 1..=(n_caches - alpha) {
        let others: Vec<CacheId> = (m0 + 1..=n_caches).collect();
        for_each_combination(&others, alpha, &mut |subset| {
            let mut groups = Vec::with_capacity(alpha + 1);
            groups.push(m0);
            groups.extend_from_slice(subset);
            choose_requests(&groups, 0, &mut Vec::new(), profile, alpha, &mut accepted);
        });
    }
    accepted
}

fn choose_requests(
    groups: &[CacheId],
    depth: usize,
    chosen: &mut Vec<FileId>,
    profile: &RequestProfile,
    alpha: usize,
    accepted: &mut Vec<RequestSet>,
) {
    if depth == groups.len() {
        let mut files = chosen.clone();
        files.sort_unstable();
        if accepted
            .iter()
            .all(|prev| compatible_sets(&files, &prev.files, alpha, profile))
        {
            accepted.push(request_set_from_files(files, profile));
        }
        return;
    }
    let group = groups[depth];
    for &file in profile.requests_of(group) {
        if chosen.contains(&file) {
            continue;
        }
        // Prefix pruning: requesters of the new file must be disjoint from
        // the requesters of everything chosen so far.
        let ok = chosen.iter().all(|&prev| {
            profile
                .requesters_of(prev)
                .iter()
                .all(|m| !profile.requesters_of(file).contains(m))
        });
        if !ok {
            continue;
        }
        chosen.push(file);
        choose_requests(groups, depth + 1, chosen, profile, alpha, accepted);
        chosen.pop();
    }
}

fn for_each_combination<T: Copy>(items: &[T], k: usize, f: &mut impl FnMut(&[T])) {
    fn recurse<T: Copy>(
        items: &[T],
        k: usize,
        start: usize,
        current: &mut Vec<T>,
        f: &mut impl FnMut(&[T]),
    ) {
        if current.len() == k {
            f(current);
            return;
        }
        let needed = k - current.len();
        for i in start..=items.len().saturating_sub(needed) {
            current.push(items[i]);
            recurse(items, k, i + 1, current, f);
            current.pop();
        }
    }
    if k <= items.len() {
        recurse(items, k, 0, &mut Vec::new(), f);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Type4Step1Outcome {
    pub transmissions: Vec<Transmission>,
    pub gain: usize,
    pub consumed: BTreeSet<PacketId>,
}

/// Type-IV step 1: for every request set, select one fragment per file of the
/// set from distinct caches, XOR every unselected fragment with the selected
/// fragment of the same file, and send one payload coding all selected
/// fragments together. Per-set load is `(|groups| - 1) * alpha`, gain `alpha`.
pub fn deliver_type4_step1(
    sets: &[RequestSet],
    class: &PacketClass,
    profile: &RequestProfile,
) -> Type4Step1Outcome {
    let mut outcome = Type4Step1Outcome::default();
    for set in sets {
        debug_assert!(set
            .packet_group
            .iter()
            .all(|p| class.for_cache(p.cache).type4.contains(p)));
        let width = set.files.len();
        // Selected fragment of files[i] comes from the packet of the
        // smallest-index requester of files[(i+1) % width]; that packet omits
        // exactly files[(i+1) % width], so it contains files[i].
        let selected: Vec<FragmentId> = (0..width)
            .map(|i| {
                let donor_file = set.files[(i + 1) % width];
                let donor_cache = profile.requesters_of(donor_file)[0];
                let pos = set.groups.iter().position(|&m| m == donor_cache).unwrap();
                FragmentId::new(
                    set.files[i],
                    set.packet_group[pos].combo.clone(),
                    donor_cache,
                )
            })
            .collect();
        for packet in &set.packet_group {
            assert!(
                outcome.consumed.insert(packet.clone()),
                "request-set packet-groups must be pairwise disjoint"
            );
            for file in packet.combo.iter() {
                let fragment = FragmentId::new(file, packet.combo.clone(), packet.cache);
                let idx = set.files.iter().position(|&f| f == file).unwrap();
                if fragment == selected[idx] {
                    continue;
                }
                outcome.transmissions.push(Transmission::new(
                    Stage::Type4Step1,
                    vec![fragment, selected[idx].clone()],
                ));
            }
        }
        outcome
            .transmissions
            .push(Transmission::new(Stage::Type4Step1, selected));
        outcome.gain += width - 1;
    }
    outcome
}

/// A packet-group for Type-IV step 2: one remaining packet per cache of
/// `caches`, each containing at least one file not requested outside
/// `caches`; `kept` is that fragment (smallest qualifying file).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketGroup {
    pub caches: Vec<CacheId>,
    pub members: Vec<PacketId>,
    pub kept: Vec<FragmentId>,
}

/// Greedy search for packet-groups over the Type-IV packets left after step 1:
/// group size ascending, reference cache ascending, cache subsets
/// lexicographic, packets in canonical order, consuming packets as groups
/// form.
pub fn search_packet_groups(
    class: &PacketClass,
    profile: &RequestProfile,
    consumed: &BTreeSet<PacketId>,
) -> Vec<PacketGroup> {
    let n_caches = class.n_caches();
    let mut remaining: Vec<Vec<PacketId>> = (1..=n_caches)
        .map(|m| {
            class
                .for_cache(m)
                .type4
                .iter()
                .filter(|p| !consumed.contains(p))
                .cloned()
                .collect()
        })
        .collect();
    let mut groups = Vec::new();
    for size in 2..=n_caches {
        for m0 in 1..=(n_caches - size + 1) {
            let others: Vec<CacheId> = (m0 + 1..=n_caches).collect();
            for_each_combination(&others, size - 1, &mut |subset| {
                let mut caches = Vec::with_capacity(size);
                caches.push(m0);
                caches.extend_from_slice(subset);
                let outside: BTreeSet<FileId> = (1..=n_caches)
                    .filter(|m| !caches.contains(m))
                    .flat_map(|m| profile.requests_of(m).iter().copied())
                    .collect();
                loop {
                    let mut picks: Vec<(usize, FragmentId)> = Vec::with_capacity(size);
                    for &m in &caches {
                        let found = remaining[m - 1].iter().enumerate().find_map(|(i, p)| {
                            p.combo
                                .iter()
                                .find(|f| !outside.contains(f))
                                .map(|kept| (i, FragmentId::new(kept, p.combo.clone(), m)))
                        });
                        match found {
                            Some(pick) => picks.push(pick),
                            None => return,
                        }
                    }
                    let mut members = Vec::with_capacity(size);
                    let mut kept = Vec::with_capacity(size);
                    for (&m, (i, fragment)) in caches.iter().zip(picks) {
                        members.push(remaining[m - 1].remove(i));
                        kept.push(fragment);
                    }
                    groups.push(PacketGroup { caches: caches.clone(), members, kept });
                }
            });
        }
    }
    groups
}

/// Type-IV step 2: per group, transmit every fragment except the kept one
/// directly, then chain the kept fragments pairwise in ascending cache order.
/// Load `|caches| * alpha - 1`, gain exactly 1 per group.
pub fn deliver_type4_step2(groups: &[PacketGroup]) -> (Vec<Transmission>, usize) {
    let mut out = Vec::new();
    for group in groups {
        for (member, kept) in group.members.iter().zip(&group.kept) {
            for file in member.combo.iter().filter(|&f| f != kept.file) {
                out.push(Transmission::direct(
                    Stage::Type4Step2,
                    FragmentId::new(file, member.combo.clone(), member.cache),
                ));
            }
        }
        for pair in group.kept.windows(2) {
            out.push(Transmission::new(
                Stage::Type4Step2,
                vec![pair[0].clone(), pair[1].clone()],
            ));
        }
    }
    (out, groups.len())
}

/// Type-IV step 3: for every leftover packet transmit the `alpha - 1` most
/// requested fragments; the least-requested fragment (smallest file on ties)
/// is kept for the last stage.
pub fn deliver_type4_step3(
    class: &PacketClass,
    profile: &RequestProfile,
    consumed: &BTreeSet<PacketId>,
) -> (Vec<Transmission>, Vec<FragmentId>) {
    let mut out = Vec::new();
    let mut remaining = Vec::new();
    for cache_class in &class.per_cache {
        for packet in cache_class.type4.iter().filter(|p| !consumed.contains(p)) {
            let kept = packet
                .combo
                .iter()
                .min_by_key(|&f| (profile.requesters_of(f).len(), f))
                .expect("combo nonempty");
            for file in packet.combo.iter().filter(|&f| f != kept) {
                out.push(Transmission::direct(
                    Stage::Type4Step3,
                    FragmentId::new(file, packet.combo.clone(), packet.cache),
                ));
            }
            remaining.push(FragmentId::new(kept, packet.combo.clone(), packet.cache));
        }
    }
    (out, remaining)
}

#[derive(Debug, Clone, Default)]
pub struct LastStageOutcome {
    pub transmissions: Vec<Transmission>,
    pub count: usize,
    /// Delta: the minimum per-cache remaining count.
    pub gain: usize,
    pub per_cache_counts: Vec<usize>,
}

/// Last stage: the cache with the fewest remaining fragments provides the
/// references; each reference is XORed with one unused fragment from every
/// other cache (preferring a same-combo partner, then same-file, then first
/// in canonical order), and whatever stays unpaired is sent directly.
pub fn deliver_last_stage(
    remaining: &[FragmentId],
    profile: &RequestProfile,
) -> LastStageOutcome {
    let n_caches = profile.n_groups();
    let mut per_cache: Vec<Vec<FragmentId>> = vec![Vec::new(); n_caches];
    for fragment in remaining {
        per_cache[fragment.cache - 1].push(fragment.clone());
    }
    for list in &mut per_cache {
        list.sort_by(|a, b| (&a.combo, a.file).cmp(&(&b.combo, b.file)));
    }
    let mut outcome = LastStageOutcome {
        per_cache_counts: per_cache.iter().map(Vec::len).collect(),
        ..Default::default()
    };
    let reference = (1..=n_caches)
        .min_by_key(|&m| (per_cache[m - 1].len(), m))
        .expect("at least one cache");
    let gain = per_cache[reference - 1].len();
    outcome.gain = gain;

    let mut used: Vec<Vec<bool>> = per_cache.iter().map(|l| vec![false; l.len()]).collect();
    for j in 0..gain {
        let reference_fragment = per_cache[reference - 1][j].clone();
        used[reference - 1][j] = true;
        for m in 1..=n_caches {
            if m == reference {
                continue;
            }
            let list = &per_cache[m - 1];
            let slot = (0..list.len())
                .filter(|&i| !used[m - 1][i])
                .min_by_key(|&i| {
                    let f = &list[i];
                    let rank = if f.combo == reference_fragment.combo {
                        0
                    } else if f.file == reference_fragment.file {
                        1
                    } else {
                        2
                    };
                    (rank, i)
                })
                .expect("every other cache holds at least `gain` fragments");
            used[m - 1][slot] = true;
            outcome.transmissions.push(Transmission::new(
                Stage::LastStep1,
                vec![reference_fragment.clone(), list[slot].clone()],
            ));
        }
    }
    for (idx, list) in per_cache.iter().enumerate() {
        for (i, fragment) in list.iter().enumerate() {
            if !used[idx][i] {
                outcome
                    .transmissions
                    .push(Transmission::direct(Stage::LastStep2, fragment.clone()));
            }
        }
    }
    outcome.count = outcome.transmissions.len();
    outcome
}

/// Runs the whole pipeline in stage order and certifies the result with the
/// GF(2) decodability oracle. Should a coded payload ever fail certification
/// it is replaced by direct transmissions of its constituents and the stage
/// counters are recounted; the number of such splits is reported in the
/// stats (zero in every observed run).
pub fn build_schedule(
    placement: &PlacementState,
    profile: &RequestProfile,
) -> Result<(TransmissionSchedule, DeliveryStats), ScheduleError> {
    let class = classify_packets(placement, profile);

    let (tx1, t1) = deliver_type1(&class, profile);
    let type2 = deliver_type2(&class, profile);
    let type3 = deliver_type3(&class, profile);

    let sets = search_request_sets(&class, profile);
    let step1 = deliver_type4_step1(&sets, &class, profile);
    let mut consumed = step1.consumed.clone();
    let groups = search_packet_groups(&class, profile, &consumed);
    for group in &groups {
        consumed.extend(group.members.iter().cloned());
    }
    let (tx4_2, step2_gain) = deliver_type4_step2(&groups);
    let (tx4_3, type4_remaining) = deliver_type4_step3(&class, profile, &consumed);

    let mut remaining = Vec::new();
    remaining.extend(type2.remaining.iter().cloned());
    remaining.extend(type3.remaining.iter().cloned());
    remaining.extend(type4_remaining.iter().cloned());
    let last = deliver_last_stage(&remaining, profile);

    let mut transmissions = tx1;
    transmissions.extend(type2.transmissions);
    transmissions.extend(type3.transmissions);
    transmissions.extend(step1.transmissions);
    transmissions.extend(tx4_2);
    transmissions.extend(tx4_3);
    transmissions.extend(last.transmissions);
    let mut schedule = TransmissionSchedule { transmissions };

    let mut stats = DeliveryStats {
        t1,
        t2_step1: type2.step1_count,
        t2_step2: type2.step2_count,
        t2_remaining: type2.remaining.len(),
        t3_step1: type3.step1_count,
        t3_step2: type3.step2_count,
        t3_remaining: type3.remaining.len(),
        t4: 0,
        t4_remaining: type4_remaining.len(),
        t_last: last.count,
        type4_gain: step1.gain + step2_gain,
        last_gain: last.gain,
        l_untransmitted: type3.untransmitted_counts,
        remaining_before_last: last.per_cache_counts,
        trace: ScheduleTrace {
            type2_reference: type2.reference,
            type3_reference: type3.reference,
            type3_kept: type3.kept,
        },
        fallback_splits: 0,
    };

    // Certification with direct-transmission fallback.
    loop {
        let report = verify::verify_all(profile, placement, &schedule);
        if report.pass {
            break;
        }
        let missing = report
            .groups
            .iter()
            .flat_map(|g| g.missing.iter())
            .next()
            .expect("failed report lists a missing fragment")
            .clone();
        let split_at = schedule
            .transmissions
            .iter()
            .position(|tx| tx.payload.len() > 1 && tx.payload.contains(&missing));
        let Some(idx) = split_at else {
            return Err(ScheduleError::Undecodable {
                splits: stats.fallback_splits,
                missing,
            });
        };
        let tx = schedule.transmissions.remove(idx);
        for fragment in tx.payload.into_iter().rev() {
            schedule
                .transmissions
                .insert(idx, Transmission::direct(tx.stage, fragment));
        }
        stats.fallback_splits += 1;
    }

    // Stage counters always reflect the emitted schedule.
    let by_stage = schedule.count_by_stage();
    let count = |s: Stage| by_stage.get(&s).copied().unwrap_or(0);
    stats.t1 = count(Stage::Type1);
    stats.t2_step1 = count(Stage::Type2Step1);
    stats.t2_step2 = count(Stage::Type2Step2);
    stats.t3_step1 = count(Stage::Type3Step1);
    stats.t3_step2 = count(Stage::Type3Step2);
    stats.t4 = count(Stage::Type4Step1) + count(Stage::Type4Step2) + count(Stage::Type4Step3);
    stats.t_last = count(Stage::LastStep1) + count(Stage::LastStep2);

    Ok((schedule, stats))
}
