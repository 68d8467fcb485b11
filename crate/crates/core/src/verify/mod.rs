//! Authenticated data structures: an additive multiset hash for posting
//! lists and a grouped RSA accumulator for evicting those hashes from
//! trusted memory.

pub mod accumulator;
pub mod mhash;
pub mod prime;

pub use accumulator::{Accumulator, AccumulatorGroups, AccumulatorParams, GroupProducts};
pub use mhash::MultisetHash;
pub use prime::hash_to_prime;
