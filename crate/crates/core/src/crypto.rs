//! Keyed functions, hashes and fixed-width record codecs shared by every
//! protocol message.
//!
//! The PRF family (`F1`, `F2`, `F3`) is HMAC-SHA256 under three independent
//! keys. The unkeyed hashes are SHA-256 with a one-byte domain tag so that
//! `H1`, `H2`, `H3` and `H4` never collide with each other on the same input.

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::CodecError;

type HmacSha256 = Hmac<Sha256>;

/// Size in bytes of keys, PRF blocks and digests.
pub const BLOCK_LEN: usize = 32;

/// A 32-byte PRF output or digest.
pub type Block = [u8; BLOCK_LEN];

/// Empty-slot sentinel for fingerprints. `hash_h2_fingerprint` never returns it.
pub const EMPTY_FINGERPRINT: u16 = 0;

/// Default fingerprint length in bits.
pub const DEFAULT_FINGERPRINT_BITS: u8 = 16;

const TAG_H1: u8 = 0x01;
const TAG_H2: u8 = 0x02;
const TAG_H3: u8 = 0x03;
const TAG_H4: u8 = 0x04;

/// The three PRF keys held by the trusted component: `k_t` for stags,
/// `k_z` for XOR masks and `k_x` for inverse-map indices.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKeys {
    pub k_t: Block,
    pub k_z: Block,
    pub k_x: Block,
}

impl SecretKeys {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut keys = SecretKeys {
            k_t: [0; BLOCK_LEN],
            k_z: [0; BLOCK_LEN],
            k_x: [0; BLOCK_LEN],
        };
        rng.fill_bytes(&mut keys.k_t);
        rng.fill_bytes(&mut keys.k_z);
        rng.fill_bytes(&mut keys.k_x);
        keys
    }

    /// Derives an independent key triple for one client identity.
    pub fn derive(&self, label: &[u8]) -> Self {
        SecretKeys {
            k_t: prf(&self.k_t, label),
            k_z: prf(&self.k_z, label),
            k_x: prf(&self.k_x, label),
        }
    }
}

impl std::fmt::Debug for SecretKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKeys(..)")
    }
}

/// HMAC-SHA256 keyed by a 32-byte key.
pub fn prf(key: &Block, input: &[u8]) -> Block {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(input);
    mac.finalize().into_bytes().into()
}

/// XORs `record` with a keystream whose first block is `mask`; further blocks
/// are `prf(mask, block_index)` so records longer than one block still get a
/// full-length pad.
pub fn xor_mask(record: &[u8], mask: &Block) -> Vec<u8> {
    let mut out = Vec::with_capacity(record.len());
    for (index, chunk) in record.chunks(BLOCK_LEN).enumerate() {
        let pad = if index == 0 {
            *mask
        } else {
            prf(mask, &(index as u64).to_le_bytes())
        };
        out.extend(chunk.iter().zip(pad.iter()).map(|(a, b)| a ^ b));
    }
    out
}

fn tagged_sha256(tag: u8, input: &[u8]) -> Block {
    let mut hasher = Sha256::new();
    hasher.update([tag]);
    hasher.update(input);
    hasher.finalize().into()
}

/// `H1`: 64-bit bucket-index hash. Reduce with a power-of-two mask.
pub fn hash_h1(input: &[u8]) -> u64 {
    let digest = tagged_sha256(TAG_H1, input);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// `H2`: 16-bit fingerprint. Zero is remapped to one.
pub fn hash_h2_fingerprint(input: &[u8]) -> u16 {
    fingerprint_bits(input, DEFAULT_FINGERPRINT_BITS)
}

/// `H2` truncated to `bits` (1..=16) bits, never the empty sentinel.
pub fn fingerprint_bits(input: &[u8], bits: u8) -> u16 {
    assert!((1..=16).contains(&bits), "fingerprint width out of range");
    let digest = tagged_sha256(TAG_H2, input);
    let raw = u16::from_be_bytes([digest[0], digest[1]]) >> (16 - bits as u32);
    if raw == EMPTY_FINGERPRINT {
        1
    } else {
        raw
    }
}

/// `H3`: digest used for sub-filter commitments.
pub fn hash_h3(input: &[u8]) -> Block {
    tagged_sha256(TAG_H3, input)
}

/// `H4`: keyword digest used as the key of evicted multiset hashes.
pub fn hash_h4(input: &[u8]) -> Block {
    tagged_sha256(TAG_H4, input)
}

/// Fixed field widths for XOR-masked records.
///
/// Every record kind has a constant encoded length so that ciphertexts never
/// reveal which values they hold through their size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldCodec {
    pub id_width: usize,
    pub weight_width: usize,
    pub counter_width: usize,
}

impl Default for FieldCodec {
    fn default() -> Self {
        FieldCodec {
            id_width: 8,
            weight_width: 4,
            counter_width: 4,
        }
    }
}

/// Which field of a record a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Id,
    Weight,
    Counter,
}

impl FieldCodec {
    pub fn width(&self, field: Field) -> usize {
        match field {
            Field::Id => self.id_width,
            Field::Weight => self.weight_width,
            Field::Counter => self.counter_width,
        }
    }

    pub fn max_value(&self, field: Field) -> u64 {
        let width = self.width(field);
        if width >= 8 {
            u64::MAX
        } else {
            (1u64 << (8 * width)) - 1
        }
    }

    /// Appends `value` little-endian in the field's width.
    pub fn put(&self, out: &mut Vec<u8>, field: Field, value: u64) -> Result<(), CodecError> {
        if value > self.max_value(field) {
            return Err(CodecError::OutOfRange { field, value });
        }
        let width = self.width(field);
        out.extend_from_slice(&value.to_le_bytes()[..width]);
        Ok(())
    }

    /// Reads one field from the front of `input`, advancing it.
    pub fn take(&self, input: &mut &[u8], field: Field) -> Result<u64, CodecError> {
        let width = self.width(field);
        if input.len() < width {
            return Err(CodecError::Truncated);
        }
        let (head, rest) = input.split_at(width);
        let mut buf = [0u8; 8];
        buf[..width].copy_from_slice(head);
        *input = rest;
        Ok(u64::from_le_bytes(buf))
    }

    /// Encodes a sequence of fields into one record.
    pub fn encode(&self, fields: &[(Field, u64)]) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::with_capacity(self.record_len(fields.iter().map(|(f, _)| *f)));
        for (field, value) in fields {
            self.put(&mut out, *field, *value)?;
        }
        Ok(out)
    }

    /// Decodes a record with the given layout. The record length must match exactly.
    pub fn decode(&self, record: &[u8], layout: &[Field]) -> Result<Vec<u64>, CodecError> {
        if record.len() != self.record_len(layout.iter().copied()) {
            return Err(CodecError::Length {
                expected: self.record_len(layout.iter().copied()),
                actual: record.len(),
            });
        }
        let mut input = record;
        layout
            .iter()
            .map(|field| self.take(&mut input, *field))
            .collect()
    }

    pub fn record_len(&self, layout: impl IntoIterator<Item = Field>) -> usize {
        layout.into_iter().map(|f| self.width(f)).sum()
    }
}
