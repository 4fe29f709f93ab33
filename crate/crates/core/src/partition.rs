//! Set partitions of `{0, .., n-1}` in restricted-growth-string form.
//!
//! A partition is stored as one block label per element, where element 0 is
//! in block 0 and every label is at most one more than the largest label
//! before it. That form is canonical, so two partitions are equal exactly
//! when their label vectors are equal, and lexicographic order on labels is
//! a total order on partitions.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timeline::MAX_PARTICIPANTS;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("{0} participants exceeds the capacity of {MAX_PARTICIPANTS}")]
    Capacity(usize),
    #[error("invalid partition: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    labels: Vec<u8>,
}

impl Partition {
    /// Everyone in a single block.
    pub fn single_block(n: usize) -> Self {
        Self { labels: vec![0; n] }
    }

    /// Everyone alone.
    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n as u8).collect(),
        }
    }

    /// Canonicalizes arbitrary per-element labels (equal label = same block).
    pub fn from_labels<T: PartialEq>(labels: &[T]) -> Self {
        let mut seen: Vec<&T> = Vec::new();
        let labels = labels
            .iter()
            .map(|l| match seen.iter().position(|s| *s == l) {
                Some(i) => i as u8,
                None => {
                    seen.push(l);
                    (seen.len() - 1) as u8
                }
            })
            .collect();
        Self { labels }
    }

    /// Builds a partition of `{0..n-1}` from explicit blocks.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self, PartitionError> {
        let mut owner = vec![None; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(PartitionError::Invalid("empty block".into()));
            }
            for &e in block {
                match owner.get_mut(e) {
                    None => {
                        return Err(PartitionError::Invalid(format!(
                            "element {e} out of range for {n} elements"
                        )))
                    }
                    Some(Some(_)) => {
                        return Err(PartitionError::Invalid(format!("element {e} appears twice")))
                    }
                    Some(slot) => *slot = Some(b),
                }
            }
        }
        if let Some(e) = owner.iter().position(Option::is_none) {
            return Err(PartitionError::Invalid(format!("element {e} is not covered")));
        }
        let owner: Vec<usize> = owner.into_iter().flatten().collect();
        Ok(Self::from_labels(&owner))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| *m as usize + 1)
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Blocks in canonical order, each sorted ascending.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l as usize].push(i);
        }
        blocks
    }

    /// Number of unordered within-block pairs.
    pub fn edge_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len() * (b.len().saturating_sub(1)) / 2).sum()
    }

    /// Applies `perm` (element i becomes element perm[i]) and re-canonicalizes.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut labels = vec![0u8; self.len()];
        for (i, &p) in perm.iter().enumerate() {
            labels[p] = self.labels[i];
        }
        Self::from_labels(&labels)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for block in self.blocks() {
            let items: Vec<String> = block.iter().map(|e| e.to_string()).collect();
            write!(f, "{{{}}}", items.join(","))?;
        }
        Ok(())
    }
}

/// Lazy iterator over all partitions of `{0..n-1}` in lexicographic
/// restricted-growth-string order.
#[derive(Debug, Clone)]
pub struct Partitions {
    current: Option<Vec<u8>>,
}

impl Partitions {
    pub fn new(n: usize) -> Self {
        Self {
            current: Some(vec![0; n]),
        }
    }
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let labels = self.current.take()?;
        let out = Partition {
            labels: labels.clone(),
        };
        // advance: bump the rightmost position that may still grow, zero the tail
        let mut next = labels;
        let mut prefix_max = vec![0u8; next.len()];
        for i in 1..next.len() {
            prefix_max[i] = prefix_max[i - 1].max(next[i - 1]);
        }
        for j in (1..next.len()).rev() {
            if next[j] <= prefix_max[j] {
                next[j] += 1;
                next[j + 1..].fill(0);
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// All partitions of `{0..n-1}`; Bell(n) of them.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>, PartitionError> {
    if n > MAX_PARTICIPANTS {
        return Err(PartitionError::Capacity(n));
    }
    Ok(Partitions::new(n).collect())
}

/// Index of unordered pair `i < j` among the `n(n-1)/2` pairs in
/// lexicographic order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Precomputed partitions for one size with each partition's within-block
/// pair indices, in ascending pair order.
#[derive(Debug)]
pub struct PartitionTable {
    pub n: usize,
    pub partitions: Vec<Partition>,
    edge_offsets: Vec<u32>,
    edges: Vec<u8>,
}

impl PartitionTable {
    fn build(n: usize) -> Self {
        let partitions: Vec<Partition> = Partitions::new(n).collect();
        let mut edge_offsets = Vec::with_capacity(partitions.len() + 1);
        let mut edges = Vec::new();
        edge_offsets.push(0);
        for p in &partitions {
            for i in 0..n {
                for j in (i + 1)..n {
                    if p.same_block(i, j) {
                        edges.push(pair_index(n, i, j) as u8);
                    }
                }
            }
            edge_offsets.push(edges.len() as u32);
        }
        Self {
            n,
            partitions,
            edge_offsets,
            edges,
        }
    }

    /// Cached table for size `n`.
    pub fn get(n: usize) -> Result<&'static PartitionTable, PartitionError> {
        static TABLES: [OnceLock<PartitionTable>; MAX_PARTICIPANTS + 1] =
            [const { OnceLock::new() }; MAX_PARTICIPANTS + 1];
        let slot = TABLES.get(n).ok_or(PartitionError::Capacity(n))?;
        Ok(slot.get_or_init(|| Self::build(n)))
    }

    pub fn edges(&self, k: usize) -> &[u8] {
        &self.edges[self.edge_offsets[k] as usize..self.edge_offsets[k + 1] as usize]
    }
}
