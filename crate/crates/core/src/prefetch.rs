//! Coded placement: split every file into `M * C(N-1, alpha-1)` fragments and
//! store, in each cache, one XOR packet per alpha-combination of files.
//!
//! Fragments are purely symbolic; a fragment is its [`FragmentId`]. The
//! scheme's correctness is a statement about XOR combinations of identifiers,
//! checked over GF(2) by the `verify` module.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::combinatorics::ComboTable;
use crate::model::{FragmentId, PacketId, Rat, SystemParams};

/// One cached packet together with the fragments XORed into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub fragments: Vec<FragmentId>,
}

/// The complete placement: every cache's ordered packet list and the
/// fragment -> packet map.
#[derive(Debug, Clone)]
pub struct PlacementState {
    params: SystemParams,
    table: ComboTable,
    packets: Vec<Vec<Packet>>,
    fragment_home: BTreeMap<FragmentId, PacketId>,
}

impl PlacementState {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn table(&self) -> &ComboTable {
        &self.table
    }

    /// Packets of cache `m` (1-based), in lexicographic combo order.
    pub fn packets_of(&self, cache: usize) -> &[Packet] {
        &self.packets[cache - 1]
    }

    pub fn fragment_home(&self) -> &BTreeMap<FragmentId, PacketId> {
        &self.fragment_home
    }

    /// Total number of fragments across all files and caches.
    pub fn fragment_count(&self) -> usize {
        self.fragment_home.len()
    }
}

/// Builds the placement for `params`. Deterministic: combos in lexicographic
/// order, caches 1..M.
pub fn place(params: &SystemParams) -> PlacementState {
    let table = ComboTable::new(params.n_files, params.alpha)
        .expect("SystemParams guarantees 1 <= alpha <= N");
    let mut packets = Vec::with_capacity(params.n_groups);
    let mut fragment_home = BTreeMap::new();
    for cache in 1..=params.n_groups {
        let mut cache_packets = Vec::with_capacity(table.len());
        for combo in table.combos() {
            let id = PacketId::new(combo.clone(), cache);
            let fragments = id.fragments();
            for fragment in &fragments {
                let previous = fragment_home.insert(fragment.clone(), id.clone());
                debug_assert!(previous.is_none(), "fragment assigned twice");
            }
            cache_packets.push(Packet { id, fragments });
        }
        packets.push(cache_packets);
    }
    PlacementState { params: *params, table, packets, fragment_home }
}

/// Cache size per user-group, `N / (M * alpha)` file units.
pub fn cache_size(params: &SystemParams) -> Rat {
    params.cache_size()
}

/// Human-readable placement listing, one line per packet:
/// `cache m: (n1,..,na) = S..@m ^ S..@m ^ ...`
pub fn dump_placement(placement: &PlacementState) -> String {
    let mut out = String::new();
    for cache in 1..=placement.params.n_groups {
        for packet in placement.packets_of(cache) {
            write!(out, "cache {}: {} =", cache, packet.id.combo).unwrap();
            for (i, fragment) in packet.fragments.iter().enumerate() {
                if i > 0 {
                    out.push_str(" ^");
                }
                write!(out, " {fragment}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::binom;
    use crate::model::rat_str;

    fn params(n: usize, m: usize, alpha: usize) -> SystemParams {
        SystemParams::new(n, m, alpha).unwrap()
    }

    #[test]
    fn golden_placement_3_3_2() {
        let placement = place(&params(3, 3, 2));
        assert_eq!(placement.fragment_count(), 18);
        for cache in 1..=3 {
            assert_eq!(placement.packets_of(cache).len(), 3);
        }
        // File 1 splits into M * C(N-1, alpha-1) = 6 fragments.
        let file1 = placement.fragment_home().keys().filter(|f| f.file == 1).count();
        assert_eq!(file1, 6);
        let expected = "\
cache 1: (1,2) = S1(1,2)@m1 ^ S2(1,2)@m1
cache 1: (1,3) = S1(1,3)@m1 ^ S3(1,3)@m1
cache 1: (2,3) = S2(2,3)@m1 ^ S3(2,3)@m1
cache 2: (1,2) = S1(1,2)@m2 ^ S2(1,2)@m2
cache 2: (1,3) = S1(1,3)@m2 ^ S3(1,3)@m2
cache 2: (2,3) = S2(2,3)@m2 ^ S3(2,3)@m2
cache 3: (1,2) = S1(1,2)@m3 ^ S2(1,2)@m3
cache 3: (1,3) = S1(1,3)@m3 ^ S3(1,3)@m3
cache 3: (2,3) = S2(2,3)@m3 ^ S3(2,3)@m3
";
        assert_eq!(dump_placement(&placement), expected);
    }

    #[test]
    fn uncoded_alpha_one() {
        let p = params(2, 1, 1);
        let placement = place(&p);
        assert_eq!(placement.packets_of(1).len(), 2);
        for packet in placement.packets_of(1) {
            assert_eq!(packet.fragments.len(), 1);
        }
        assert_eq!(rat_str(cache_size(&p)), "2/1");
    }

    #[test]
    fn single_packet_alpha_equals_n() {
        let p = params(4, 2, 4);
        let placement = place(&p);
        for cache in 1..=2 {
            assert_eq!(placement.packets_of(cache).len(), 1);
            assert_eq!(placement.packets_of(cache)[0].fragments.len(), 4);
        }
        assert_eq!(cache_size(&p), Rat::new(1, 2));
    }

    #[test]
    fn cache_size_examples() {
        assert_eq!(cache_size(&params(3, 3, 2)), Rat::new(1, 2));
        assert_eq!(cache_size(&params(5, 4, 1)), Rat::new(5, 4));
        assert_eq!(cache_size(&params(10, 6, 2)), Rat::new(5, 6));
    }

    #[test]
    fn fragment_conservation_exhaustive() {
        for n in 1..=6 {
            for m in 1..=5 {
                for alpha in 1..=n {
                    let p = params(n, m, alpha);
                    let placement = place(&p);
                    let expected = n as u64 * m as u64 * binom(n - 1, alpha - 1);
                    assert_eq!(placement.fragment_count() as u64, expected);
                    // Per-cache stored size is C(N, alpha) packets of
                    // 1/(M * C(N-1, alpha-1)) file units each: exactly C.
                    let per_cache = Rat::new(
                        binom(n, alpha) as i64,
                        (m as u64 * binom(n - 1, alpha - 1)) as i64,
                    );
                    assert_eq!(per_cache, p.cache_size());
                }
            }
        }
    }

    #[test]
    fn packets_rebuild_from_fragment_home() {
        let placement = place(&params(5, 3, 3));
        let mut rebuilt: BTreeMap<PacketId, Vec<FragmentId>> = BTreeMap::new();
        for (fragment, home) in placement.fragment_home() {
            rebuilt.entry(home.clone()).or_default().push(fragment.clone());
        }
        for cache in 1..=3 {
            for packet in placement.packets_of(cache) {
                let mut got = rebuilt.remove(&packet.id).unwrap();
                got.sort();
                let mut want = packet.fragments.clone();
                want.sort();
                assert_eq!(got, want);
            }
        }
        assert!(rebuilt.is_empty());
    }
}
