//! Logarithmic Dynamic Cuckoo Filter: a binary tree of fixed-capacity cuckoo
//! sub-filters, routed by fingerprint prefix.
//!
//! A sub-filter that cannot place a fingerprint splits into two children by
//! the next fingerprint bit, and that bit is no longer stored. [`Ldcf`] owns a
//! whole tree (the untrusted store uses it in the non-verifiable protocol);
//! [`insert_routed`] runs the same insert/split cascade on a single loaded
//! leaf, which is how the trusted component mutates sub-filters in the
//! verifiable protocols.

mod subfilter;
mod tree;

use std::collections::HashMap;
use std::fmt;

pub use subfilter::{partner_bucket, InsertOutcome, Overflow, Split, SubFilter};
pub use tree::IndexTree;

use crate::crypto::DEFAULT_FINGERPRINT_BITS;
use crate::error::LdcfError;

/// Geometry shared by every sub-filter in one LDCF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterParams {
    pub fingerprint_bits: u8,
    /// Power of two, required by the XOR partner-bucket relation.
    pub bucket_count: usize,
    pub slot_count: usize,
    pub max_kicks: usize,
}

impl Default for FilterParams {
    /// 16-bit fingerprints, 4 slots per bucket, 2048 buckets (8192 slots per
    /// sub-filter), 500 eviction rounds.
    fn default() -> Self {
        FilterParams {
            fingerprint_bits: DEFAULT_FINGERPRINT_BITS,
            bucket_count: 2048,
            slot_count: 4,
            max_kicks: 500,
        }
    }
}

impl FilterParams {
    /// Smallest power-of-two bucket count giving at least `capacity` slots.
    pub fn with_capacity(capacity: usize) -> Self {
        let defaults = FilterParams::default();
        let buckets = capacity.div_ceil(defaults.slot_count).max(2).next_power_of_two();
        FilterParams {
            bucket_count: buckets,
            ..defaults
        }
    }

    pub fn capacity(&self) -> usize {
        self.bucket_count * self.slot_count
    }

    pub fn validate(&self) -> Result<(), LdcfError> {
        if !(2..=16).contains(&self.fingerprint_bits) {
            return Err(LdcfError::Params("fingerprint_bits must be in 2..=16"));
        }
        if !self.bucket_count.is_power_of_two() || self.bucket_count > u32::MAX as usize {
            return Err(LdcfError::Params("bucket_count must be a power of two"));
        }
        if !(1..=255).contains(&self.slot_count) {
            return Err(LdcfError::Params("slot_count must be in 1..=255"));
        }
        Ok(())
    }

    /// Bucket index `mu` for an element hash.
    pub fn bucket_of(&self, h1: u64) -> usize {
        h1 as usize & (self.bucket_count - 1)
    }

    /// Analytic false-positive bound per membership check for a sub-filter
    /// storing `stored_bits` of each fingerprint.
    pub fn false_positive_bound(&self, stored_bits: u8) -> f64 {
        2.0 * self.slot_count as f64 / 2f64.powi(stored_bits as i32)
    }
}

/// Label of a sub-filter: the fingerprint prefix that routes to it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubFilterId {
    bits: u16,
    len: u8,
}

impl SubFilterId {
    pub const ROOT: SubFilterId = SubFilterId { bits: 0, len: 0 };

    pub fn new(bits: u16, len: u8) -> Option<Self> {
        if len > 16 || (len < 16 && bits >> len != 0) {
            None
        } else {
            Some(SubFilterId { bits, len })
        }
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    pub fn child(&self, bit: u8) -> SubFilterId {
        SubFilterId {
            bits: (self.bits << 1) | (bit as u16 & 1),
            len: self.len + 1,
        }
    }

    pub fn parent(&self) -> Option<SubFilterId> {
        (self.len > 0).then(|| SubFilterId {
            bits: self.bits >> 1,
            len: self.len - 1,
        })
    }

    /// Bit `index` of the label, counted from the root.
    pub fn bit(&self, index: u8) -> u8 {
        ((self.bits >> (self.len - index - 1)) & 1) as u8
    }

    /// Whether the leading `len` bits of a `width`-bit fingerprint equal this label.
    pub fn covers(&self, fingerprint: u16, width: u8) -> bool {
        self.len == 0 || (fingerprint >> (width - self.len)) == self.bits
    }

    /// Wire form: `len` then `bits` little-endian.
    pub fn to_bytes(&self) -> [u8; 3] {
        let b = self.bits.to_le_bytes();
        [self.len, b[0], b[1]]
    }

    pub fn from_bytes(bytes: [u8; 3]) -> Option<Self> {
        SubFilterId::new(u16::from_le_bytes([bytes[1], bytes[2]]), bytes[0])
    }
}

impl fmt::Display for SubFilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return f.write_str("root");
        }
        for i in 0..self.len {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for SubFilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubFilterId({self})")
    }
}

/// One split performed during an insert, with snapshots of both children as
/// they stood right after the split.
#[derive(Debug, Clone)]
pub struct SplitStep {
    pub parent: SubFilterId,
    pub children: [SubFilter; 2],
}

/// Outcome of [`insert_routed`].
#[derive(Debug, Clone)]
pub struct RoutedInsert {
    /// Splits in the order they happened; empty when the leaf had room.
    pub steps: Vec<SplitStep>,
    /// The final leaves that replace the original one.
    pub leaves: Vec<SubFilter>,
}

impl RoutedInsert {
    pub fn split_count(&self) -> usize {
        self.steps.len()
    }
}

/// Inserts into `leaf`, splitting (repeatedly if the overflow spills into a
/// full child) until every fingerprint has a slot.
pub fn insert_routed(
    mut leaf: SubFilter,
    fingerprint: u16,
    mu: usize,
    max_kicks: usize,
) -> Result<RoutedInsert, LdcfError> {
    let mut overflow = match leaf.insert(fingerprint, mu, max_kicks)? {
        InsertOutcome::Placed => {
            return Ok(RoutedInsert {
                steps: Vec::new(),
                leaves: vec![leaf],
            })
        }
        InsertOutcome::Overflow(o) => o,
    };
    let mut steps = Vec::new();
    let mut leaves = Vec::new();
    loop {
        let split = leaf.split(Some(overflow), max_kicks)?;
        steps.push(SplitStep {
            parent: leaf.id(),
            children: [split.zero.clone(), split.one.clone()],
        });
        match split.spill {
            None => {
                leaves.push(split.zero);
                leaves.push(split.one);
                return Ok(RoutedInsert { steps, leaves });
            }
            Some((bit, again)) => {
                let (full, other) = if bit == 0 {
                    (split.zero, split.one)
                } else {
                    (split.one, split.zero)
                };
                leaves.push(other);
                leaf = full;
                overflow = again;
            }
        }
    }
}

/// A complete LDCF: routing tree plus every sub-filter.
#[derive(Debug, Clone)]
pub struct Ldcf {
    params: FilterParams,
    tree: IndexTree,
    filters: HashMap<SubFilterId, SubFilter>,
    splits: u64,
    len: usize,
}

impl Ldcf {
    pub fn new(params: FilterParams) -> Result<Self, LdcfError> {
        params.validate()?;
        let mut filters = HashMap::new();
        filters.insert(SubFilterId::ROOT, SubFilter::new(SubFilterId::ROOT, &params));
        Ok(Ldcf {
            params,
            tree: IndexTree::new(params.fingerprint_bits),
            filters,
            splits: 0,
            len: 0,
        })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn tree(&self) -> &IndexTree {
        &self.tree
    }

    pub fn split_count(&self) -> u64 {
        self.splits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn route(&self, fingerprint: u16) -> SubFilterId {
        self.tree.route(fingerprint)
    }

    pub fn filter(&self, id: SubFilterId) -> Option<&SubFilter> {
        self.filters.get(&id)
    }

    pub fn filters(&self) -> impl Iterator<Item = &SubFilter> {
        self.filters.values()
    }

    /// Inserts and returns the parents split along the way, in order.
    pub fn insert(&mut self, fingerprint: u16, mu: usize) -> Result<Vec<SubFilterId>, LdcfError> {
        let id = self.tree.route(fingerprint);
        let leaf = self.filters.remove(&id).expect("every leaf has a filter");
        let backup = leaf.clone();
        let outcome = match insert_routed(leaf, fingerprint, mu, self.params.max_kicks) {
            Ok(outcome) => outcome,
            Err(e) => {
                self.filters.insert(id, backup);
                return Err(e);
            }
        };
        let parents: Vec<_> = outcome.steps.iter().map(|s| s.parent).collect();
        for parent in &parents {
            self.tree.split(*parent)?;
        }
        for leaf in outcome.leaves {
            self.filters.insert(leaf.id(), leaf);
        }
        self.splits += parents.len() as u64;
        self.len += 1;
        Ok(parents)
    }

    pub fn contains(&self, fingerprint: u16, mu: usize) -> bool {
        self.filters[&self.tree.route(fingerprint)].contains(fingerprint, mu)
    }

    pub fn remove(&mut self, fingerprint: u16, mu: usize) -> bool {
        let id = self.tree.route(fingerprint);
        let removed = self
            .filters
            .get_mut(&id)
            .expect("every leaf has a filter")
            .remove(fingerprint, mu);
        if removed {
            self.len -= 1;
        }
        removed
    }
}
