//! The simulated enclave. It owns keys, update counters, the LDCF index
//! tree, a sub-filter cache and the verification digests, and reaches the
//! store only through a [`Transport`].
//!
//! Every round is copy-on-success: trusted state changes only after the
//! store acknowledged the update, so an integrity violation or a store error
//! leaves it as it was.

mod records;
mod search;
mod update;

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::ops::AddAssign;
use std::time::{Duration, Instant};

use lru::LruCache;
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};

use crate::crypto::{hash_h3, Block, FieldCodec, SecretKeys};
use crate::error::{Error, IntegrityCheck, Result, StoreError};
use crate::ldcf::{FilterParams, IndexTree, SubFilter, SubFilterId};
use crate::protocol::{Ack, LoadItem, LoadToken, Protocol, Request, Response, UpdateMessage};
use crate::store::EncryptedGraphStore;
use crate::transport::{DirectTransport, Transport};
use crate::verify::{hash_to_prime, Accumulator, AccumulatorGroups, MultisetHash};

pub use records::{is_fuzzy, Entry, Positioned, Tagger, FUZZY_PREFIX};
pub use search::{fuzzy_keyword, fuzzy_query, split_name, SUBSTRING_LEN};

/// Client id of the data owner. Other clients must be registered.
pub const OWNER: u64 = 0;

const PRIME_CACHE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Config {
    pub protocol: Protocol,
    pub filter: FilterParams,
    pub codec: FieldCodec,
    /// RSA modulus size for the accumulator protocol: 1024 or 2048.
    pub modulus_bits: u32,
    /// Maximum digests per accumulator group.
    pub group_size: usize,
    /// Sub-filters kept across searches; 0 keeps them for one search only.
    pub cache_capacity: usize,
}

impl Config {
    pub fn new(protocol: Protocol) -> Self {
        Config {
            protocol,
            filter: FilterParams::default(),
            codec: FieldCodec::default(),
            modulus_bits: 2048,
            group_size: 200,
            cache_capacity: 64,
        }
    }

    /// 1024-bit modulus, for tests.
    pub fn test_profile(protocol: Protocol) -> Self {
        Config {
            modulus_bits: 1024,
            ..Config::new(protocol)
        }
    }
}

/// Work counters, per operation and cumulative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub decryptions: u64,
    pub membership_checks: u64,
    /// Sub-filters fetched from the store.
    pub subfilter_loads: u64,
    /// Round trips across the trusted/untrusted boundary.
    pub boundary_calls: u64,
    pub splits: u64,
    /// Time spent on verification checks.
    pub verify_nanos: u64,
}

impl AddAssign for Stats {
    fn add_assign(&mut self, o: Stats) {
        self.decryptions += o.decryptions;
        self.membership_checks += o.membership_checks;
        self.subfilter_loads += o.subfilter_loads;
        self.boundary_calls += o.boundary_calls;
        self.splits += o.splits;
        self.verify_nanos += o.verify_nanos;
    }
}

impl Stats {
    pub fn verify_time(&self) -> Duration {
        Duration::from_nanos(self.verify_nanos)
    }
}

#[derive(Debug, Clone)]
struct Client {
    tagger: Tagger,
    counters: HashMap<String, u64>,
    /// Posting-list digests kept in trusted memory (non-accumulator mode).
    digests: HashMap<String, MultisetHash>,
}

/// Everything the trusted component holds.
#[derive(Debug)]
pub struct TrustedState {
    config: Config,
    master: SecretKeys,
    clients: HashMap<u64, Client>,
    tree: IndexTree,
    groups: Option<AccumulatorGroups>,
    cache: Option<LruCache<SubFilterId, SubFilter>>,
    primes: HashMap<Vec<u8>, BigUint>,
}

/// Creates a fresh trusted state and the matching empty store.
pub fn setup<R: RngCore + CryptoRng>(
    config: Config,
    rng: &mut R,
) -> Result<(TrustedState, EncryptedGraphStore)> {
    let acc = if config.protocol.uses_accumulator() {
        Some(Accumulator::setup(config.modulus_bits, rng)?)
    } else {
        None
    };
    setup_with(config, acc, rng)
}

/// Like [`setup`] but reuses an existing accumulator trapdoor.
pub fn setup_with<R: RngCore + CryptoRng>(
    config: Config,
    accumulator: Option<Accumulator>,
    rng: &mut R,
) -> Result<(TrustedState, EncryptedGraphStore)> {
    config.filter.validate()?;
    if config.group_size == 0 {
        return Err(Error::Contract("group size must be positive"));
    }
    let groups = match (config.protocol.uses_accumulator(), accumulator) {
        (true, Some(acc)) => Some(AccumulatorGroups::new(acc, config.group_size)),
        (true, None) => return Err(Error::Contract("accumulator required")),
        (false, _) => None,
    };
    let store = EncryptedGraphStore::new(
        config.protocol,
        config.filter,
        groups.as_ref().map(|g| g.params().clone()),
    )
    .map_err(Error::Store)?;
    let mut tree = IndexTree::new(config.filter.fingerprint_bits);
    if config.protocol.is_verifiable() {
        let root = SubFilter::new(SubFilterId::ROOT, &config.filter);
        tree.set_digest(SubFilterId::ROOT, root.digest());
    }
    let master = SecretKeys::generate(rng);
    let owner = Client {
        tagger: Tagger {
            keys: master.clone(),
            client: None,
            codec: config.codec,
            verifiable: config.protocol.is_verifiable(),
        },
        counters: HashMap::new(),
        digests: HashMap::new(),
    };
    let state = TrustedState {
        config,
        master,
        clients: HashMap::from([(OWNER, owner)]),
        tree,
        groups,
        cache: NonZeroUsize::new(config.cache_capacity).map(LruCache::new),
        primes: HashMap::new(),
    };
    Ok((state, store))
}

impl TrustedState {
    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn tree(&self) -> &IndexTree {
        &self.tree
    }

    pub fn accumulator_groups(&self) -> Option<&AccumulatorGroups> {
        self.groups.as_ref()
    }

    /// Live posting-list length of `w` for `client`.
    pub fn update_count(&self, client: u64, w: &str) -> u64 {
        self.clients
            .get(&client)
            .and_then(|c| c.counters.get(&canonical_keyword(w)))
            .copied()
            .unwrap_or(0)
    }

    /// Sum of all counters over all clients; equals the TSet size.
    pub fn total_count(&self) -> u64 {
        self.clients
            .values()
            .flat_map(|c| c.counters.values())
            .sum()
    }

    pub fn keyword_count(&self) -> usize {
        self.clients.values().map(|c| c.counters.len()).sum()
    }

    /// The posting-list digest kept in trusted memory, if any.
    pub fn digest(&self, client: u64, w: &str) -> Option<MultisetHash> {
        self.clients
            .get(&client)
            .and_then(|c| c.digests.get(&canonical_keyword(w)))
            .copied()
    }

    fn client(&self, id_u: u64) -> Result<&Client> {
        self.clients.get(&id_u).ok_or(Error::AccessDenied(id_u))
    }

    /// Derives the key triple for a new client. Registering twice is a no-op.
    pub fn register_client(&mut self, id_u: u64) -> Result<()> {
        if id_u == OWNER {
            return Ok(());
        }
        let mut label = b"client".to_vec();
        label.extend_from_slice(&id_u.to_le_bytes());
        let keys = self.master.derive(&label);
        self.clients.entry(id_u).or_insert_with(|| Client {
            tagger: Tagger {
                keys,
                client: Some(id_u),
                codec: self.config.codec,
                verifiable: self.config.protocol.is_verifiable(),
            },
            counters: HashMap::new(),
            digests: HashMap::new(),
        });
        Ok(())
    }

    pub fn derived_keys(&self, id_u: u64) -> Result<&SecretKeys> {
        Ok(&self.client(id_u)?.tagger.keys)
    }

    fn prime_for(&mut self, key: &Block, h: &MultisetHash) -> BigUint {
        let mut label = key.to_vec();
        label.extend_from_slice(&h.to_bytes());
        if let Some(p) = self.primes.get(&label) {
            return p.clone();
        }
        let p = hash_to_prime(&label);
        if self.primes.len() >= PRIME_CACHE_LIMIT {
            self.primes.clear();
        }
        self.primes.insert(label, p.clone());
        p
    }
}

/// Rewrites `"003:friend"` as `"3:friend"` so that vertex ids compare as
/// numbers. Sub-string keywords and keywords without a numeric id part are
/// left alone.
pub fn canonical_keyword(w: &str) -> String {
    if is_fuzzy(w) {
        return w.to_string();
    }
    match w.split_once(':') {
        Some((id, rest)) => match id.parse::<u64>() {
            Ok(id) => format!("{id}:{rest}"),
            Err(_) => w.to_string(),
        },
        None => w.to_string(),
    }
}

/// Keyword for the neighbours of `id` under relation `kind`.
pub fn keyword(id: u64, kind: &str) -> String {
    format!("{id}:{kind}")
}

/// Verified digest material of one keyword in the accumulator protocol.
#[derive(Debug, Clone)]
struct ProvenDigest {
    group: u32,
    value: MultisetHash,
    prime: BigUint,
}

/// The trusted component wired to a store.
pub struct TrustedCore<T: Transport = DirectTransport> {
    state: TrustedState,
    transport: T,
    total: Stats,
    last: Stats,
    current: Stats,
}

impl<T: Transport> TrustedCore<T> {
    pub fn new(state: TrustedState, transport: T) -> Self {
        TrustedCore {
            state,
            transport,
            total: Stats::default(),
            last: Stats::default(),
            current: Stats::default(),
        }
    }

    pub fn state(&self) -> &TrustedState {
        &self.state
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn protocol(&self) -> Protocol {
        self.state.config.protocol
    }

    pub fn register_client(&mut self, id_u: u64) -> Result<()> {
        self.state.register_client(id_u)
    }

    /// Counters of the most recent operation.
    pub fn last_stats(&self) -> Stats {
        self.last
    }

    /// Counters accumulated since construction or the last reset.
    pub fn stats(&self) -> Stats {
        self.total
    }

    pub fn reset_stats(&mut self) {
        self.total = Stats::default();
    }

    /// Drops every cached sub-filter.
    pub fn clear_cache(&mut self) {
        if let Some(c) = self.state.cache.as_mut() {
            c.clear();
        }
    }

    /// Runs one operation with fresh per-operation counters.
    fn run<R>(&mut self, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        self.current = Stats::default();
        let out = f(self);
        self.last = self.current;
        self.total += self.current;
        out
    }

    fn verifiable(&self) -> bool {
        self.state.config.protocol.is_verifiable()
    }

    fn timed<R>(&mut self, f: impl FnOnce(&mut Self) -> R) -> R {
        let start = Instant::now();
        let out = f(self);
        self.current.verify_nanos += start.elapsed().as_nanos() as u64;
        out
    }

    fn round_trip(&mut self, tokens: Vec<LoadToken>) -> Result<Vec<Result<LoadItem, StoreError>>> {
        self.current.boundary_calls += 1;
        let expected = tokens.len();
        match self.transport.call(Request::Load(tokens))? {
            Response::Loaded(items) if items.len() == expected => Ok(items),
            Response::Failed(e) => Err(Error::Store(e)),
            _ => Err(Error::Integrity(IntegrityCheck::Malformed)),
        }
    }

    fn send_update(&mut self, message: UpdateMessage) -> Result<Ack> {
        self.current.boundary_calls += 1;
        match self.transport.call(Request::Update(message))? {
            Response::Ack(ack) => Ok(ack),
            Response::Failed(StoreError::Duplicate) => Err(Error::Duplicate),
            Response::Failed(e) => Err(Error::Store(e)),
            Response::Loaded(_) => Err(Error::Integrity(IntegrityCheck::Malformed)),
        }
    }

    /// Checks a loaded sub-filter against the index tree (verifiable
    /// protocols) and decodes it.
    fn accept_filter(
        &mut self,
        id: SubFilterId,
        item: Result<LoadItem, StoreError>,
    ) -> Result<SubFilter> {
        let verifiable = self.verifiable();
        let bytes = match item {
            Ok(LoadItem::SubFilter(bytes)) => bytes,
            Ok(_) => return Err(Error::Integrity(IntegrityCheck::Malformed)),
            Err(_) if verifiable => return Err(Error::Integrity(IntegrityCheck::Missing)),
            Err(e) => return Err(Error::Store(e)),
        };
        if verifiable {
            let expected = self.state.tree.digest(id);
            let ok = self.timed(|_| expected == Some(hash_h3(&bytes)));
            if !ok {
                return Err(Error::Integrity(IntegrityCheck::SubFilterDigest));
            }
        }
        SubFilter::from_bytes(id, &bytes).map_err(|_| Error::Integrity(IntegrityCheck::Malformed))
    }

    /// Checks an evicted digest and its accumulator witness.
    fn accept_digest(
        &mut self,
        key: &Block,
        item: Result<LoadItem, StoreError>,
    ) -> Result<ProvenDigest> {
        let proof = match item {
            Ok(LoadItem::Digest(proof)) => proof,
            Ok(_) => return Err(Error::Integrity(IntegrityCheck::Malformed)),
            Err(_) => return Err(Error::Integrity(IntegrityCheck::Missing)),
        };
        self.timed(|core| {
            let value = MultisetHash::from_bytes(&proof.digest);
            let prime = core.state.prime_for(key, &value);
            let groups = core.state.groups.as_ref().expect("accumulator protocol");
            if groups.verify(proof.group, &prime, &proof.witness) {
                Ok(ProvenDigest {
                    group: proof.group,
                    value,
                    prime,
                })
            } else {
                Err(Error::Integrity(IntegrityCheck::DigestProof))
            }
        })
    }

    /// Decrypts a loaded posting list; in the verifiable protocols also
    /// checks its length, every position and the multiset digest.
    fn accept_postings(
        &mut self,
        client: u64,
        w: &str,
        count: u64,
        item: Result<LoadItem, StoreError>,
        expected: Option<MultisetHash>,
    ) -> Result<Vec<Positioned>> {
        let verifiable = self.verifiable();
        let list = match item {
            Ok(LoadItem::PostingList(list)) => list,
            Ok(_) => return Err(Error::Integrity(IntegrityCheck::Malformed)),
            Err(_) if verifiable => return Err(Error::Integrity(IntegrityCheck::Missing)),
            Err(e) => return Err(Error::Store(e)),
        };
        if verifiable && list.len() as u64 != count {
            return Err(Error::Integrity(IntegrityCheck::PostingListLength));
        }
        let tagger = self.state.client(client)?.tagger.clone();
        let mut out = Vec::with_capacity(list.len());
        let mut digest = MultisetHash::empty();
        for (slot, id_e) in list.iter().enumerate() {
            self.current.decryptions += 1;
            let (p, plain) = tagger.decrypt_posting(w, id_e)?;
            if verifiable {
                if p.i != slot as u64 + 1 {
                    return Err(Error::Integrity(IntegrityCheck::PostingListPosition));
                }
                digest = self.timed(|_| digest.add(&plain));
            }
            out.push(p);
        }
        if verifiable && Some(digest) != expected {
            return Err(Error::Integrity(IntegrityCheck::PostingListDigest));
        }
        Ok(out)
    }

    /// Tokens that load the posting list of `w` (plus its evicted digest).
    fn posting_tokens(&self, client: u64, w: &str, count: u64) -> Result<Vec<LoadToken>> {
        let tagger = &self.state.client(client)?.tagger;
        let mut tokens = vec![LoadToken::PostingList(
            (1..=count).map(|i| tagger.stag(w, i)).collect(),
        )];
        if self.state.groups.is_some() {
            tokens.push(LoadToken::Digest(tagger.digest_key(w)));
        }
        Ok(tokens)
    }

    /// Consumes the items produced by [`Self::posting_tokens`].
    fn accept_posting_items(
        &mut self,
        client: u64,
        w: &str,
        count: u64,
        items: &mut std::vec::Drain<'_, Result<LoadItem, StoreError>>,
    ) -> Result<(Vec<Positioned>, Option<ProvenDigest>)> {
        let list = items.next().ok_or(Error::Integrity(IntegrityCheck::Malformed))?;
        let (expected, proven) = if self.state.groups.is_some() {
            let key = self.state.client(client)?.tagger.digest_key(w);
            let item = items.next().ok_or(Error::Integrity(IntegrityCheck::Malformed))?;
            let proven = self.accept_digest(&key, item)?;
            (Some(proven.value), Some(proven))
        } else {
            (self.state.client(client)?.digests.get(w).copied(), None)
        };
        let entries = self.accept_postings(client, w, count, list, expected)?;
        Ok((entries, proven))
    }

    /// Loads and verifies the whole posting list of `w` in one round trip.
    fn vload_postings(
        &mut self,
        client: u64,
        w: &str,
    ) -> Result<(Vec<Positioned>, Option<ProvenDigest>)> {
        let count = self.state.client(client)?.counters.get(w).copied().unwrap_or(0);
        if count == 0 {
            return Ok((Vec::new(), None));
        }
        let tokens = self.posting_tokens(client, w, count)?;
        let mut items = self.round_trip(tokens)?;
        let mut drain = items.drain(..);
        self.accept_posting_items(client, w, count, &mut drain)
    }

    fn cache_get(&mut self, id: SubFilterId) -> Option<SubFilter> {
        self.state.cache.as_mut().and_then(|c| c.get(&id).cloned())
    }

    fn cache_put(&mut self, filter: SubFilter) {
        if let Some(c) = self.state.cache.as_mut() {
            c.put(filter.id(), filter);
        }
    }

    fn cache_forget(&mut self, id: SubFilterId) {
        if let Some(c) = self.state.cache.as_mut() {
            c.pop(&id);
        }
    }

    /// Number of sub-filters in the cross-search cache.
    pub fn cached_filters(&self) -> usize {
        self.state.cache.as_ref().map_or(0, |c| c.len())
    }
}

impl TrustedCore<DirectTransport> {
    /// Setup with an in-process store.
    pub fn direct<R: RngCore + CryptoRng>(config: Config, rng: &mut R) -> Result<Self> {
        let (state, store) = setup(config, rng)?;
        Ok(TrustedCore::new(state, DirectTransport::new(store)))
    }

    pub fn direct_with<R: RngCore + CryptoRng>(
        config: Config,
        accumulator: Option<Accumulator>,
        rng: &mut R,
    ) -> Result<Self> {
        let (state, store) = setup_with(config, accumulator, rng)?;
        Ok(TrustedCore::new(state, DirectTransport::new(store)))
    }

    /// Runs `f` with exclusive access to the in-process store.
    pub fn with_store<R>(&self, f: impl FnOnce(&mut EncryptedGraphStore) -> R) -> R {
        let mut guard = self.transport.store().write().expect("store lock poisoned");
        f(&mut guard)
    }
}
