use crate::crypto::{hash_h1, hash_h3, Block, EMPTY_FINGERPRINT};
use crate::error::LdcfError;

use super::{FilterParams, SubFilterId};

const HEADER_LEN: usize = 7;
/// Upper bound on slots accepted when decoding untrusted bytes.
const MAX_DECODED_SLOTS: usize = 1 << 24;

/// Result of inserting one fingerprint into a sub-filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Placed,
    /// The eviction chain exceeded `max_kicks`; the filter holds the new
    /// fingerprint but `Overflow::fingerprint` is homeless and the sub-filter
    /// must split.
    Overflow(Overflow),
}

/// A homeless fingerprint together with one of its two candidate buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overflow {
    pub fingerprint: u16,
    pub bucket: usize,
}

/// The two halves of a split sub-filter.
#[derive(Debug, Clone)]
pub struct Split {
    pub zero: SubFilter,
    pub one: SubFilter,
    /// Set when the overflow fingerprint could not be placed in its child
    /// either; that child has to split again.
    pub spill: Option<(u8, Overflow)>,
}

/// One cuckoo filter of the LDCF tree.
///
/// A sub-filter at `level` L only holds fingerprints whose leading L bits
/// equal its label, so only the low `fingerprint_bits - L` bits are stored.
/// Slots use a marker-bit encoding (`1 << stored | low`) below the root so a
/// stored value is never the empty sentinel and the full fingerprint can
/// always be rebuilt from the label. Bucket positions are derived from the
/// full fingerprint, which keeps every entry in place across a split.
#[derive(Clone, PartialEq, Eq)]
pub struct SubFilter {
    id: SubFilterId,
    fingerprint_bits: u8,
    bucket_count: usize,
    slot_count: usize,
    slots: Vec<u16>,
    occupancy: usize,
}

impl std::fmt::Debug for SubFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubFilter")
            .field("id", &self.id)
            .field("stored_bits", &self.stored_bits())
            .field("occupancy", &self.occupancy)
            .field("capacity", &self.capacity())
            .finish()
    }
}

impl SubFilter {
    pub fn new(id: SubFilterId, params: &FilterParams) -> Self {
        SubFilter {
            id,
            fingerprint_bits: params.fingerprint_bits,
            bucket_count: params.bucket_count,
            slot_count: params.slot_count,
            slots: vec![EMPTY_FINGERPRINT; params.bucket_count * params.slot_count],
            occupancy: 0,
        }
    }

    pub fn id(&self) -> SubFilterId {
        self.id
    }

    pub fn level(&self) -> u8 {
        self.id.len()
    }

    pub fn stored_bits(&self) -> u8 {
        self.fingerprint_bits - self.id.len()
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn len(&self) -> usize {
        self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy == 0
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn load_factor(&self) -> f64 {
        self.occupancy as f64 / self.capacity() as f64
    }

    fn low_mask(&self) -> u16 {
        ((1u32 << self.stored_bits()) - 1) as u16
    }

    fn encode(&self, fingerprint: u16) -> u16 {
        debug_assert!(self.id.covers(fingerprint, self.fingerprint_bits));
        if self.level() == 0 {
            fingerprint
        } else {
            (1u16 << self.stored_bits()) | (fingerprint & self.low_mask())
        }
    }

    fn decode(&self, stored: u16) -> u16 {
        if self.level() == 0 {
            stored
        } else {
            (self.id.bits() << self.stored_bits()) | (stored & self.low_mask())
        }
    }

    /// The other candidate bucket of `fingerprint` when it sits in `bucket`.
    pub fn partner(&self, bucket: usize, fingerprint: u16) -> usize {
        partner_bucket(bucket, fingerprint, self.bucket_count)
    }

    fn bucket(&self, index: usize) -> &[u16] {
        &self.slots[index * self.slot_count..(index + 1) * self.slot_count]
    }

    fn try_place(&mut self, bucket: usize, stored: u16) -> bool {
        let start = bucket * self.slot_count;
        for slot in &mut self.slots[start..start + self.slot_count] {
            if *slot == EMPTY_FINGERPRINT {
                *slot = stored;
                self.occupancy += 1;
                return true;
            }
        }
        false
    }

    fn check_bucket(&self, mu: usize) -> Result<(), LdcfError> {
        if mu >= self.bucket_count {
            Err(LdcfError::BucketOutOfRange(mu))
        } else {
            Ok(())
        }
    }

    /// Places `fingerprint` in bucket `mu` or its partner, evicting residents
    /// for at most `max_kicks` rounds.
    pub fn insert(
        &mut self,
        fingerprint: u16,
        mu: usize,
        max_kicks: usize,
    ) -> Result<InsertOutcome, LdcfError> {
        self.check_bucket(mu)?;
        let stored = self.encode(fingerprint);
        let alt = self.partner(mu, fingerprint);
        if self.try_place(mu, stored) || self.try_place(alt, stored) {
            return Ok(InsertOutcome::Placed);
        }

        // Victim choice is a deterministic function of the filter state so that
        // identical update logs produce byte-identical filters.
        let mut state = seed_state(fingerprint, mu, self.occupancy);
        let mut bucket = if next_rand(&mut state) & 1 == 0 { mu } else { alt };
        let mut homeless = fingerprint;
        for _ in 0..max_kicks {
            let slot = (next_rand(&mut state) % self.slot_count as u64) as usize;
            let index = bucket * self.slot_count + slot;
            let victim = self.decode(self.slots[index]);
            self.slots[index] = self.encode(homeless);
            homeless = victim;
            bucket = self.partner(bucket, homeless);
            if self.try_place(bucket, self.encode(homeless)) {
                return Ok(InsertOutcome::Placed);
            }
        }
        Ok(InsertOutcome::Overflow(Overflow {
            fingerprint: homeless,
            bucket,
        }))
    }

    pub fn contains(&self, fingerprint: u16, mu: usize) -> bool {
        if mu >= self.bucket_count || !self.id.covers(fingerprint, self.fingerprint_bits) {
            return false;
        }
        let stored = self.encode(fingerprint);
        let alt = self.partner(mu, fingerprint);
        self.bucket(mu).contains(&stored) || self.bucket(alt).contains(&stored)
    }

    /// Removes one occurrence of `fingerprint`; returns whether one was found.
    pub fn remove(&mut self, fingerprint: u16, mu: usize) -> bool {
        if mu >= self.bucket_count || !self.id.covers(fingerprint, self.fingerprint_bits) {
            return false;
        }
        let stored = self.encode(fingerprint);
        let alt = self.partner(mu, fingerprint);
        for bucket in [mu, alt] {
            let start = bucket * self.slot_count;
            if let Some(slot) = self.slots[start..start + self.slot_count]
                .iter_mut()
                .find(|s| **s == stored)
            {
                *slot = EMPTY_FINGERPRINT;
                self.occupancy -= 1;
                return true;
            }
        }
        false
    }

    /// Full fingerprints with the bucket each one occupies.
    pub fn entries(&self) -> impl Iterator<Item = (u16, usize)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != EMPTY_FINGERPRINT)
            .map(move |(i, s)| (self.decode(*s), i / self.slot_count))
    }

    /// Distributes every stored fingerprint into two children by the next
    /// routing bit, then places `overflow` in its child.
    pub fn split(&self, overflow: Option<Overflow>, max_kicks: usize) -> Result<Split, LdcfError> {
        if self.level() + 1 >= self.fingerprint_bits {
            return Err(LdcfError::CapacityExhausted(self.id));
        }
        let child = |bit| SubFilter {
            id: self.id.child(bit),
            fingerprint_bits: self.fingerprint_bits,
            bucket_count: self.bucket_count,
            slot_count: self.slot_count,
            slots: vec![EMPTY_FINGERPRINT; self.slots.len()],
            occupancy: 0,
        };
        let mut children = [child(0), child(1)];
        let shift = self.stored_bits() - 1;
        for (index, &stored) in self.slots.iter().enumerate() {
            if stored == EMPTY_FINGERPRINT {
                continue;
            }
            let full = self.decode(stored);
            let target = &mut children[((full >> shift) & 1) as usize];
            target.slots[index] = target.encode(full);
            target.occupancy += 1;
        }
        let mut spill = None;
        if let Some(o) = overflow {
            let bit = ((o.fingerprint >> shift) & 1) as u8;
            if let InsertOutcome::Overflow(again) =
                children[bit as usize].insert(o.fingerprint, o.bucket, max_kicks)?
            {
                spill = Some((bit, again));
            }
        }
        let [zero, one] = children;
        Ok(Split { zero, one, spill })
    }

    /// Canonical encoding: `{level u8, bucket_count u32, slot_count u8,
    /// stored_bits u8}` then row-major `u16` slots, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 2 * self.slots.len());
        out.push(self.level());
        out.extend_from_slice(&(self.bucket_count as u32).to_le_bytes());
        out.push(self.slot_count as u8);
        out.push(self.stored_bits());
        for slot in &self.slots {
            out.extend_from_slice(&slot.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(id: SubFilterId, bytes: &[u8]) -> Result<Self, LdcfError> {
        if bytes.len() < HEADER_LEN {
            return Err(LdcfError::Decode("short header"));
        }
        let level = bytes[0];
        let bucket_count = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
        let slot_count = bytes[5] as usize;
        let stored_bits = bytes[6];
        if level != id.len() {
            return Err(LdcfError::Decode("level does not match label"));
        }
        if !bucket_count.is_power_of_two() || slot_count == 0 {
            return Err(LdcfError::Decode("bad geometry"));
        }
        let fingerprint_bits = level as u32 + stored_bits as u32;
        if stored_bits == 0 || fingerprint_bits > 16 {
            return Err(LdcfError::Decode("bad fingerprint width"));
        }
        let total = bucket_count
            .checked_mul(slot_count)
            .filter(|t| *t <= MAX_DECODED_SLOTS)
            .ok_or(LdcfError::Decode("too many slots"))?;
        if bytes.len() != HEADER_LEN + 2 * total {
            return Err(LdcfError::Decode("length mismatch"));
        }
        let mut filter = SubFilter {
            id,
            fingerprint_bits: fingerprint_bits as u8,
            bucket_count,
            slot_count,
            slots: Vec::with_capacity(total),
            occupancy: 0,
        };
        for chunk in bytes[HEADER_LEN..].chunks_exact(2) {
            let stored = u16::from_le_bytes([chunk[0], chunk[1]]);
            if stored != EMPTY_FINGERPRINT {
                let valid = if level == 0 {
                    stored_bits == 16 || stored >> stored_bits == 0
                } else {
                    stored >> stored_bits == 1
                };
                if !valid {
                    return Err(LdcfError::Decode("slot value out of range"));
                }
                filter.occupancy += 1;
            }
            filter.slots.push(stored);
        }
        Ok(filter)
    }

    /// `H3` over the canonical encoding.
    pub fn digest(&self) -> Block {
        hash_h3(&self.to_bytes())
    }
}

/// `nu = mu XOR H1(fingerprint)`, reduced to the bucket range.
pub fn partner_bucket(bucket: usize, fingerprint: u16, bucket_count: usize) -> usize {
    bucket ^ (hash_h1(&fingerprint.to_be_bytes()) as usize & (bucket_count - 1))
}

fn seed_state(fingerprint: u16, mu: usize, occupancy: usize) -> u64 {
    let seed = (fingerprint as u64) << 48 ^ (mu as u64) << 20 ^ occupancy as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1
}

fn next_rand(state: &mut u64) -> u64 {
    // xorshift64*
    *state ^= *state >> 12;
    *state ^= *state << 25;
    *state ^= *state >> 27;
    state.wrapping_mul(0x2545_F491_4F6C_DD1D)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{fingerprint_bits, hash_h1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn small_params() -> FilterParams {
        FilterParams {
            fingerprint_bits: 16,
            bucket_count: 64,
            slot_count: 4,
            max_kicks: 500,
        }
    }

    fn element(i: u64) -> (u16, usize) {
        let bytes = i.to_le_bytes();
        (
            fingerprint_bits(&bytes, 16),
            (hash_h1(&bytes) as usize) & 63,
        )
    }

    #[test]
    fn first_insert_lands_in_slot_zero_of_mu() {
        let mut f = SubFilter::new(SubFilterId::ROOT, &small_params());
        let (fp, mu) = element(1);
        assert_eq!(f.insert(fp, mu, 500).unwrap(), InsertOutcome::Placed);
        assert_eq!(f.slots[mu * 4], fp);
        assert_eq!(f.len(), 1);
        assert!(f.contains(fp, mu));
        assert!(f.contains(fp, f.partner(mu, fp)));
    }

    #[test]
    fn five_fingerprints_place_without_split() {
        let mut f = SubFilter::new(SubFilterId::ROOT, &FilterParams::default());
        for i in 0..5 {
            let bytes = (i as u64).to_le_bytes();
            let fp = fingerprint_bits(&bytes, 16);
            let mu = hash_h1(&bytes) as usize & 2047;
            assert_eq!(f.insert(fp, mu, 500).unwrap(), InsertOutcome::Placed);
        }
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn colliding_workload_overflows() {
        // Nine copies of one fingerprint share the same two buckets (8 slots).
        let mut f = SubFilter::new(SubFilterId::ROOT, &small_params());
        let (fp, mu) = element(7);
        for _ in 0..8 {
            assert_eq!(f.insert(fp, mu, 500).unwrap(), InsertOutcome::Placed);
        }
        match f.insert(fp, mu, 500).unwrap() {
            InsertOutcome::Overflow(o) => {
                assert_eq!(o.fingerprint, fp);
                assert!(o.bucket == mu || o.bucket == f.partner(mu, fp));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        assert_eq!(f.len(), 8);
    }

    #[test]
    fn partner_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let fp: u16 = rng.gen_range(1..=u16::MAX);
            let b = rng.gen_range(0..2048);
            assert_eq!(partner_bucket(partner_bucket(b, fp, 2048), fp, 2048), b);
        }
    }

    #[test]
    fn duplicate_slots_behave_as_multiset() {
        let mut f = SubFilter::new(SubFilterId::ROOT, &small_params());
        let (fp, mu) = element(3);
        f.insert(fp, mu, 500).unwrap();
        f.insert(fp, mu, 500).unwrap();
        assert!(f.remove(fp, mu));
        assert!(f.contains(fp, mu));
        assert!(f.remove(fp, mu));
        assert!(!f.contains(fp, mu));
        assert!(!f.remove(fp, mu));
    }

    #[test]
    fn bucket_out_of_range_is_rejected() {
        let mut f = SubFilter::new(SubFilterId::ROOT, &small_params());
        assert_eq!(f.insert(5, 64, 500), Err(LdcfError::BucketOutOfRange(64)));
        assert!(!f.contains(5, 64));
    }

    #[test]
    fn one_sided_split() {
        let mut f = SubFilter::new(SubFilterId::ROOT, &small_params());
        let mut inserted = Vec::new();
        for i in 0..2000u64 {
            let (fp, mu) = element(i);
            if fp >> 15 == 0 && inserted.len() < 100 {
                f.insert(fp, mu, 500).unwrap();
                inserted.push((fp, mu));
            }
        }
        let split = f.split(None, 500).unwrap();
        assert!(split.one.is_empty());
        assert_eq!(split.zero.len(), inserted.len());
        assert_eq!(split.zero.stored_bits(), 15);
        for (fp, mu) in inserted {
            assert!(split.zero.contains(fp, mu));
        }
    }

    #[test]
    fn split_preserves_membership_multiset() {
        let params = small_params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for round in 0..40 {
            let mut f = SubFilter::new(SubFilterId::ROOT, &params);
            let mut expected: HashMap<(u16, usize), usize> = HashMap::new();
            let mut overflow = None;
            for _ in 0..250 {
                let (fp, mu) = element(rng.gen());
                match f.insert(fp, mu, 500).unwrap() {
                    InsertOutcome::Placed => *expected.entry((fp, mu)).or_default() += 1,
                    InsertOutcome::Overflow(o) => {
                        *expected.entry((fp, mu)).or_default() += 1;
                        overflow = Some(o);
                        break;
                    }
                }
            }
            let split = f.split(overflow, 500).unwrap();
            assert!(split.spill.is_none(), "round {round}");
            assert_eq!(split.zero.len() + split.one.len(), expected.values().sum::<usize>());
            for ((fp, mu), _) in expected {
                let child = if fp >> 15 == 0 { &split.zero } else { &split.one };
                assert!(child.contains(fp, mu));
                let other = if fp >> 15 == 0 { &split.one } else { &split.zero };
                assert!(!other.contains(fp, mu));
            }
        }
    }

    #[test]
    fn split_at_max_depth_is_capacity_exhausted() {
        let params = FilterParams {
            fingerprint_bits: 4,
            ..small_params()
        };
        let id = SubFilterId::ROOT.child(1).child(0).child(1);
        let f = SubFilter::new(id, &params);
        assert_eq!(f.stored_bits(), 1);
        assert_eq!(f.split(None, 500).unwrap_err(), LdcfError::CapacityExhausted(id));
    }

    #[test]
    fn serialization_round_trips_and_is_stable() {
        let mut f = SubFilter::new(SubFilterId::ROOT.child(1), &small_params());
        for i in 0..5000u64 {
            let (fp, mu) = element(i);
            if fp >> 15 == 1 && f.len() < 150 {
                f.insert(fp, mu, 500).unwrap();
            }
        }
        let bytes = f.to_bytes();
        assert_eq!(bytes.len(), 7 + 2 * 256);
        assert_eq!(&bytes[..7], &[1, 64, 0, 0, 0, 4, 15]);
        let back = SubFilter::from_bytes(f.id(), &bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.digest(), f.digest());
        assert!(SubFilter::from_bytes(SubFilterId::ROOT, &bytes).is_err());
    }

    #[test]
    fn empty_root_digest_is_constant() {
        let a = SubFilter::new(SubFilterId::ROOT, &FilterParams::default());
        let b = SubFilter::new(SubFilterId::ROOT, &FilterParams::default());
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.to_bytes().len(), 7 + 2 * 8192);
    }

    #[test]
    fn fuzzed_bytes_never_panic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let valid = SubFilter::new(SubFilterId::ROOT, &small_params()).to_bytes();
        for _ in 0..20_000 {
            let mut bytes = if rng.gen_bool(0.5) {
                valid.clone()
            } else {
                (0..rng.gen_range(0..600)).map(|_| rng.gen()).collect()
            };
            if !bytes.is_empty() {
                for _ in 0..rng.gen_range(1..4) {
                    let i = rng.gen_range(0..bytes.len());
                    bytes[i] ^= 1 << rng.gen_range(0..8);
                }
            }
            let id = if rng.gen_bool(0.5) { SubFilterId::ROOT } else { SubFilterId::ROOT.child(0) };
            let _ = SubFilter::from_bytes(id, &bytes);
        }
    }
}
