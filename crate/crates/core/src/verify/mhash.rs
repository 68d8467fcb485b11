use sha2::{Digest, Sha256};

use crate::crypto::Block;

const TAG_ELEMENT: u8 = 0x05;

/// Additive multiset hash: the sum of `SHA-256(tag || element)` over all
/// elements, modulo 2^256.
///
/// Removal subtracts, so the value only depends on the multiset and not on
/// the order updates arrived in.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MultisetHash([u64; 4]);

impl MultisetHash {
    pub fn empty() -> Self {
        MultisetHash([0; 4])
    }

    pub fn of<I, E>(elements: I) -> Self
    where
        I: IntoIterator<Item = E>,
        E: AsRef<[u8]>,
    {
        elements
            .into_iter()
            .fold(Self::empty(), |h, e| h.add(e.as_ref()))
    }

    pub fn add(&self, element: &[u8]) -> Self {
        self.plus(&element_hash(element))
    }

    pub fn remove(&self, element: &[u8]) -> Self {
        self.minus(&element_hash(element))
    }

    /// Hash of the multiset union.
    pub fn plus(&self, other: &MultisetHash) -> Self {
        let mut out = [0u64; 4];
        let mut carry = false;
        for (i, limb) in out.iter_mut().enumerate() {
            let (s, c1) = self.0[i].overflowing_add(other.0[i]);
            let (s, c2) = s.overflowing_add(carry as u64);
            *limb = s;
            carry = c1 || c2;
        }
        MultisetHash(out)
    }

    pub fn minus(&self, other: &MultisetHash) -> Self {
        let mut out = [0u64; 4];
        let mut borrow = false;
        for (i, limb) in out.iter_mut().enumerate() {
            let (d, b1) = self.0[i].overflowing_sub(other.0[i]);
            let (d, b2) = d.overflowing_sub(borrow as u64);
            *limb = d;
            borrow = b1 || b2;
        }
        MultisetHash(out)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    /// Little-endian encoding.
    pub fn to_bytes(&self) -> Block {
        let mut out = [0u8; 32];
        for (chunk, limb) in out.chunks_exact_mut(8).zip(self.0) {
            chunk.copy_from_slice(&limb.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &Block) -> Self {
        let mut limbs = [0u64; 4];
        for (limb, chunk) in limbs.iter_mut().zip(bytes.chunks_exact(8)) {
            *limb = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        MultisetHash(limbs)
    }
}

impl std::fmt::Debug for MultisetHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MultisetHash(")?;
        for b in self.to_bytes().iter().rev().take(6) {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

fn element_hash(element: &[u8]) -> MultisetHash {
    let mut hasher = Sha256::new();
    hasher.update([TAG_ELEMENT]);
    hasher.update(element);
    MultisetHash::from_bytes(&hasher.finalize().into())
}
