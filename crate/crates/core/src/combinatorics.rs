//! Exact combinatorial primitives: binomial coefficients and canonical
//! enumeration of the size-`alpha` file combinations that drive both the
//! placement and the delivery schedule.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComboError {
    #[error("alpha must satisfy 1 <= alpha <= n_files, got alpha={alpha}, n_files={n_files}")]
    AlphaOutOfRange { alpha: usize, n_files: usize },
}

/// Binomial coefficient C(n, k). Returns 0 when `k > n`, matching the
/// empty-set convention used throughout the delivery-load formulas.
pub fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        // Every prefix is itself a binomial, so the division is exact.
        result = result * (n - k + i) as u128 / i as u128;
    }
    u64::try_from(result).expect("binomial out of u64 range")
}

/// A strictly increasing tuple of 1-based file indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Combo(Vec<usize>);

impl Combo {
    /// Builds a combo from already sorted, strictly increasing indices.
    pub fn new(files: Vec<usize>) -> Self {
        debug_assert!(files.windows(2).all(|w| w[0] < w[1]), "combo must be strictly increasing");
        Combo(files)
    }

    pub fn files(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, file: usize) -> bool {
        self.0.binary_search(&file).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// The combo with `file` removed; `file` must be a member.
    pub fn without(&self, file: usize) -> Combo {
        Combo(self.iter().filter(|&f| f != file).collect())
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, file) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{file}")?;
        }
        write!(f, ")")
    }
}

/// The lexicographically ordered family of all `alpha`-subsets of `{1..n_files}`,
/// with a per-file index of the combos containing each file.
#[derive(Debug, Clone)]
pub struct ComboTable {
    n_files: usize,
    alpha: usize,
    combos: Vec<Combo>,
    per_file: Vec<Vec<usize>>,
}

impl ComboTable {
    pub fn new(n_files: usize, alpha: usize) -> Result<Self, ComboError> {
        if alpha < 1 || alpha > n_files {
            return Err(ComboError::AlphaOutOfRange { alpha, n_files });
        }
        let mut combos = Vec::with_capacity(binom(n_files, alpha) as usize);
        let mut current: Vec<usize> = (1..=alpha).collect();
        loop {
            combos.push(Combo::new(current.clone()));
            // Advance to the next combination in lexicographic order.
            let mut i = alpha;
            while i > 0 && current[i - 1] == n_files - (alpha - i) {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            current[i - 1] += 1;
            for j in i..alpha {
                current[j] = current[j - 1] + 1;
            }
        }
        let mut per_file = vec![Vec::new(); n_files];
        for (idx, combo) in combos.iter().enumerate() {
            for file in combo.iter() {
                per_file[file - 1].push(idx);
            }
        }
        Ok(ComboTable { n_files, alpha, combos, per_file })
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn combos(&self) -> &[Combo] {
        &self.combos
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn combo(&self, idx: usize) -> &Combo {
        &self.combos[idx]
    }

    /// Positions (in canonical order) of the combos containing `file`.
    pub fn combos_with(&self, file: usize) -> &[usize] {
        &self.per_file[file - 1]
    }

    /// Canonical position of `combo`, if it belongs to the family.
    pub fn position(&self, combo: &Combo) -> Option<usize> {
        self.combos.binary_search(combo).ok()
    }

    /// Rank of `combo` among the combos containing `file` (its position in
    /// `combos_with(file)`).
    pub fn rank_within_file(&self, file: usize, combo: &Combo) -> Option<usize> {
        let pos = self.position(combo)?;
        self.per_file[file - 1].binary_search(&pos).ok()
    }

    /// Indices of the combos lying entirely inside `allowed`; empty when
    /// `allowed` has fewer than `alpha` members.
    pub fn restricted(&self, allowed: &BTreeSet<usize>) -> Vec<usize> {
        self.combos
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().all(|f| allowed.contains(&f)))
            .map(|(i, _)| i)
            .collect()
    }
}
