//! Encrypted dynamic graph search with a simulated trusted component.
//!
//! The engine splits into an untrusted key-value store ([`store`]) holding
//! TSet, ITSet and the LDCF-encoded XSet, and a trusted core ([`trusted`])
//! holding keys, update counters, the LDCF index tree and verification
//! digests. The two talk only through [`transport`], which counts every
//! boundary crossing.

pub mod crypto;
pub mod error;
pub mod graph;
pub mod ldcf;
pub mod protocol;
pub mod store;
pub mod transport;
pub mod trusted;
pub mod verify;

pub use error::{Error, IntegrityCheck, Result};
