use thiserror::Error;

use crate::crypto::Field;
use crate::ldcf::SubFilterId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("{value} does not fit the {field:?} field")]
    OutOfRange { field: Field, value: u64 },
    #[error("record truncated")]
    Truncated,
    #[error("record length {actual}, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LdcfError {
    #[error("sub-filter {0} is at maximum depth and cannot split")]
    CapacityExhausted(SubFilterId),
    #[error("bucket index {0} out of range")]
    BucketOutOfRange(usize),
    #[error("sub-filter decode failed: {0}")]
    Decode(&'static str),
    #[error("invalid filter parameters: {0}")]
    Params(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccumulatorError {
    #[error("unsupported modulus size {0} bits")]
    UnsupportedModulus(u32),
    #[error("element is not a member of the accumulator")]
    NotMember,
    #[error("element is not invertible modulo the group order")]
    NotInvertible,
    #[error("unknown accumulator group {0}")]
    UnknownGroup(u32),
}

/// One of the untrusted store's maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Tset,
    Itset,
    Xset,
    Digest,
}

/// Errors raised by the untrusted store while serving a request.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("no such entry in {0:?}")]
    NotFound(Table),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("entry already present")]
    Duplicate,
}

/// The verification check that rejected a loaded item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityCheck {
    /// Recomputed multiset hash of a posting list differs from the trusted digest.
    PostingListDigest,
    /// A posting list response has the wrong number of entries.
    PostingListLength,
    /// A posting list entry carries a position other than its slot.
    PostingListPosition,
    /// An accumulator witness or digest proof failed verification.
    DigestProof,
    /// A sub-filter's digest differs from the IndexTree leaf digest.
    SubFilterDigest,
    /// A single TSet record carries the wrong counter.
    StagCounter,
    /// An ITSet record names a different entry than requested.
    IndIdentity,
    /// Two independently loaded records disagree.
    CrossCheck,
    /// A verified sub-filter does not contain a fingerprint the trusted state requires.
    FilterState,
    /// A response could not be decoded.
    Malformed,
    /// The store reported an entry missing that trusted state says exists.
    Missing,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity violation: {0:?}")]
    Integrity(IntegrityCheck),
    #[error("client {0} is not registered")]
    AccessDenied(u64),
    #[error("entry already present")]
    Duplicate,
    #[error("contract violation: {0}")]
    Contract(&'static str),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Ldcf(#[from] LdcfError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
}

impl Error {
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Integrity(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
