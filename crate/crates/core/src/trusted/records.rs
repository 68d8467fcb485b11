//! Tag derivation and fixed-width record layouts for one client key triple.

use crate::crypto::{
    fingerprint_bits, hash_h1, hash_h4, prf, xor_mask, Block, Field, FieldCodec, SecretKeys,
};
use crate::error::{CodecError, Error, IntegrityCheck};
use crate::ldcf::FilterParams;

/// Leading character of positional sub-string keywords. It cannot appear in
/// an `id:type` keyword, so the two keyword spaces never overlap.
pub const FUZZY_PREFIX: char = '\u{1f}';

pub fn is_fuzzy(keyword: &str) -> bool {
    keyword.starts_with(FUZZY_PREFIX)
}

/// One posting-list entry: a neighbour id plus its weight, or its position
/// for sub-string keywords.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub id: u64,
    pub aux: u64,
}

/// An entry together with its slot in the posting list (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Positioned {
    pub entry: Entry,
    pub i: u64,
}

/// Everything derived from one client's keys.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub keys: SecretKeys,
    /// `Some(id_u)` for non-owner clients; appended to every xtag.
    pub client: Option<u64>,
    pub codec: FieldCodec,
    pub verifiable: bool,
}

impl Tagger {
    pub fn stag(&self, w: &str, i: u64) -> Block {
        let mut input = w.as_bytes().to_vec();
        input.extend_from_slice(&(i as u32).to_le_bytes());
        prf(&self.keys.k_t, &input)
    }

    fn pair_label(&self, w: &str, entry: Entry) -> Vec<u8> {
        let mut out = w.as_bytes().to_vec();
        out.push(0);
        out.extend_from_slice(&entry.id.to_le_bytes());
        if is_fuzzy(w) {
            out.extend_from_slice(&(entry.aux as u32).to_le_bytes());
        }
        out
    }

    /// Key of the pair in ITSet. Sub-string pairs include the position.
    pub fn ind(&self, w: &str, entry: Entry) -> Block {
        prf(&self.keys.k_x, &self.pair_label(w, entry))
    }

    pub fn xtag(&self, w: &str, entry: Entry) -> Vec<u8> {
        let mut out = self.pair_label(w, entry);
        if let Some(id_u) = self.client {
            out.extend_from_slice(&id_u.to_le_bytes());
        }
        out
    }

    /// `(delta, mu)` of an xtag.
    pub fn fingerprint(&self, xtag: &[u8], params: &FilterParams) -> (u16, usize) {
        (
            fingerprint_bits(xtag, params.fingerprint_bits),
            params.bucket_of(hash_h1(xtag)),
        )
    }

    fn mask(&self, w: &str) -> Block {
        prf(&self.keys.k_z, w.as_bytes())
    }

    fn inverse_mask(&self, w: &str) -> Block {
        let mut input = w.as_bytes().to_vec();
        input.push(0xff);
        prf(&self.keys.k_z, &input)
    }

    /// Key of the keyword's evicted digest.
    pub fn digest_key(&self, w: &str) -> Block {
        match self.client {
            None => hash_h4(w.as_bytes()),
            Some(id_u) => {
                let mut input = vec![0xff];
                input.extend_from_slice(&id_u.to_le_bytes());
                input.extend_from_slice(w.as_bytes());
                hash_h4(&input)
            }
        }
    }

    fn aux_field(w: &str) -> Field {
        if is_fuzzy(w) {
            Field::Counter
        } else {
            Field::Weight
        }
    }

    fn posting_layout(&self, w: &str) -> Vec<Field> {
        let mut layout = vec![Field::Id, Self::aux_field(w)];
        if self.verifiable {
            layout.push(Field::Counter);
        }
        layout
    }

    fn inverse_layout(&self, w: &str) -> Vec<Field> {
        if self.verifiable {
            vec![Field::Counter, Field::Id, Self::aux_field(w)]
        } else {
            vec![Field::Counter]
        }
    }

    /// Plaintext posting-list record: `id || aux` plus `i` when verifiable.
    pub fn posting_record(&self, w: &str, p: Positioned) -> Result<Vec<u8>, CodecError> {
        let values = [p.entry.id, p.entry.aux, p.i];
        let fields: Vec<_> = self.posting_layout(w).into_iter().zip(values).collect();
        self.codec.encode(&fields)
    }

    pub fn encrypt_posting(&self, w: &str, p: Positioned) -> Result<Vec<u8>, CodecError> {
        Ok(xor_mask(&self.posting_record(w, p)?, &self.mask(w)))
    }

    /// Decrypts a posting-list ciphertext. Returns the plaintext record too,
    /// since verification hashes it. `i` is 0 in the non-verifiable layout.
    pub fn decrypt_posting(&self, w: &str, id_e: &[u8]) -> Result<(Positioned, Vec<u8>), Error> {
        let plain = xor_mask(id_e, &self.mask(w));
        let values = self
            .codec
            .decode(&plain, &self.posting_layout(w))
            .map_err(|_| Error::Integrity(IntegrityCheck::Malformed))?;
        let p = Positioned {
            entry: Entry {
                id: values[0],
                aux: values[1],
            },
            i: values.get(2).copied().unwrap_or(0),
        };
        Ok((p, plain))
    }

    /// Inverse-map record: `i`, plus `id || aux` when verifiable.
    pub fn encrypt_inverse(&self, w: &str, p: Positioned) -> Result<Vec<u8>, CodecError> {
        let values = [p.i, p.entry.id, p.entry.aux];
        let fields: Vec<_> = self.inverse_layout(w).into_iter().zip(values).collect();
        Ok(xor_mask(&self.codec.encode(&fields)?, &self.inverse_mask(w)))
    }

    /// Inverse of [`Tagger::encrypt_inverse`]; the entry is zero when not verifiable.
    pub fn decrypt_inverse(&self, w: &str, stag_e: &[u8]) -> Result<Positioned, Error> {
        let plain = xor_mask(stag_e, &self.inverse_mask(w));
        let values = self
            .codec
            .decode(&plain, &self.inverse_layout(w))
            .map_err(|_| Error::Integrity(IntegrityCheck::Malformed))?;
        Ok(Positioned {
            i: values[0],
            entry: Entry {
                id: values.get(1).copied().unwrap_or(0),
                aux: values.get(2).copied().unwrap_or(0),
            },
        })
    }
}
