//! The untrusted server: TSet, ITSet, XSet, evicted digests and group
//! products, plus injectable misbehaviour for exercising verification.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::crypto::Block;
use crate::error::{StoreError, Table};
use crate::ldcf::{FilterParams, Ldcf, SubFilter, SubFilterId};
use crate::protocol::{
    Ack, DigestProof, DigestWrite, FilterWrite, LoadItem, LoadToken, Protocol, Request, Response,
    TsetWrite, UpdateMessage, XsetWrite,
};
use crate::verify::{AccumulatorParams, GroupProducts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdversaryMode {
    Honest,
    /// Flip one bit of one TSet/ITSet record or evicted digest.
    TamperTset,
    /// Flip one bit of one serialized sub-filter.
    TamperXset,
    /// Omit one posting-list entry or answer one lookup with not-found.
    DropEntry,
    /// Answer a repeated token with the previous honest response.
    StaleReplay,
}

impl AdversaryMode {
    pub const ALL: [AdversaryMode; 5] = [
        AdversaryMode::Honest,
        AdversaryMode::TamperTset,
        AdversaryMode::TamperXset,
        AdversaryMode::DropEntry,
        AdversaryMode::StaleReplay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryMode::Honest => "honest",
            AdversaryMode::TamperTset => "tamper_tset",
            AdversaryMode::TamperXset => "tamper_xset",
            AdversaryMode::DropEntry => "drop_entry",
            AdversaryMode::StaleReplay => "stale_replay",
        }
    }
}

impl fmt::Display for AdversaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdversaryMode::ALL
            .into_iter()
            .find(|m| m.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown adversary mode {s:?}"))
    }
}

/// Seeded misbehaviour. While armed, the next load response that offers a
/// target gets exactly one deviation, after which the adversary disarms.
#[derive(Debug, Clone)]
struct Adversary {
    mode: AdversaryMode,
    rng: StdRng,
    armed: bool,
    deviations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum HistoryKey {
    Stag(Block),
    Ind(Block),
    Filter(SubFilterId),
    Digest(Block),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum HistoryValue {
    Bytes(Vec<u8>),
    Proof(DigestProof),
}

/// Store-side instrumentation for the forward and backward privacy checks.
#[derive(Debug, Clone, Default)]
pub struct Audit {
    /// Stags that appeared in a posting-list token and still address the
    /// same live slot. A delete frees its tail slot, which the next insert
    /// for that keyword reuses, so the tail stag leaves this set.
    searched_stags: HashSet<Block>,
    /// Ciphertexts of deleted pairs.
    deleted: HashSet<Vec<u8>>,
    /// Inserts whose stag had already appeared in a search token.
    pub forward_violations: u64,
    /// Served posting-list records that belong to a deleted pair.
    pub backward_violations: u64,
    pub inserts: u64,
    pub deletes: u64,
}

#[derive(Debug, Clone)]
struct StoredDigest {
    group: u32,
    digest: Block,
    prime: BigUint,
}

#[derive(Debug, Clone)]
enum Xset {
    /// SecGraph: the store runs the LDCF itself.
    Local(Ldcf),
    /// Verifiable protocols: opaque sub-filter bytes written by the trusted side.
    Remote(HashMap<SubFilterId, Vec<u8>>),
}

/// The untrusted encrypted graph database.
#[derive(Debug, Clone)]
pub struct EncryptedGraphStore {
    protocol: Protocol,
    tset: HashMap<Block, Vec<u8>>,
    itset: HashMap<Block, Vec<u8>>,
    xset: Xset,
    digests: HashMap<Block, StoredDigest>,
    products: Option<GroupProducts>,
    adversary: Adversary,
    history: HashMap<HistoryKey, HistoryValue>,
    audit: Option<Audit>,
}

impl EncryptedGraphStore {
    /// An empty store holding one empty root sub-filter.
    pub fn new(
        protocol: Protocol,
        params: FilterParams,
        accumulator: Option<AccumulatorParams>,
    ) -> Result<Self, StoreError> {
        let xset = if protocol.is_verifiable() {
            params
                .validate()
                .map_err(|e| StoreError::Protocol(e.to_string()))?;
            let root = SubFilter::new(SubFilterId::ROOT, &params).to_bytes();
            Xset::Remote(HashMap::from([(SubFilterId::ROOT, root)]))
        } else {
            Xset::Local(Ldcf::new(params).map_err(|e| StoreError::Protocol(e.to_string()))?)
        };
        let products = match (protocol.uses_accumulator(), accumulator) {
            (true, Some(p)) => Some(GroupProducts::new(p)),
            (true, None) => {
                return Err(StoreError::Protocol(
                    "accumulator parameters required".into(),
                ))
            }
            (false, _) => None,
        };
        Ok(EncryptedGraphStore {
            protocol,
            tset: HashMap::new(),
            itset: HashMap::new(),
            xset,
            digests: HashMap::new(),
            products,
            adversary: Adversary {
                mode: AdversaryMode::Honest,
                rng: StdRng::seed_from_u64(0),
                armed: false,
                deviations: 0,
            },
            history: HashMap::new(),
            audit: None,
        })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn set_adversary(&mut self, mode: AdversaryMode, seed: u64) {
        self.adversary = Adversary {
            mode,
            rng: StdRng::seed_from_u64(seed),
            armed: false,
            deviations: self.adversary.deviations,
        };
        self.history.clear();
    }

    pub fn adversary_mode(&self) -> AdversaryMode {
        self.adversary.mode
    }

    /// Allows one deviation in the following load responses.
    pub fn arm(&mut self) {
        self.adversary.armed = self.adversary.mode != AdversaryMode::Honest;
    }

    pub fn disarm(&mut self) {
        self.adversary.armed = false;
    }

    /// Number of responses altered so far.
    pub fn deviations(&self) -> u64 {
        self.adversary.deviations
    }

    pub fn enable_audit(&mut self) {
        self.audit.get_or_insert_with(Audit::default);
    }

    pub fn audit(&self) -> Option<&Audit> {
        self.audit.as_ref()
    }

    pub fn handle(&mut self, request: Request) -> Response {
        match request {
            Request::Load(tokens) => Response::Loaded(self.load_batch(&tokens)),
            Request::Update(message) => match self.put_update(message) {
                Ok(ack) => Response::Ack(ack),
                Err(e) => Response::Failed(e),
            },
        }
    }

    /// Honest answer to one token, without adversary or audit side effects.
    pub fn load_honest(&self, token: &LoadToken) -> Result<LoadItem, StoreError> {
        match token {
            LoadToken::PostingList(stags) => stags
                .iter()
                .map(|s| self.tset.get(s).cloned().ok_or(StoreError::NotFound(Table::Tset)))
                .collect::<Result<_, _>>()
                .map(LoadItem::PostingList),
            LoadToken::SubFilter(id) => self
                .subfilter_bytes(*id)
                .map(LoadItem::SubFilter)
                .ok_or(StoreError::NotFound(Table::Xset)),
            LoadToken::Stag(s) => self
                .tset
                .get(s)
                .cloned()
                .map(LoadItem::Record)
                .ok_or(StoreError::NotFound(Table::Tset)),
            LoadToken::Ind(i) => self
                .itset
                .get(i)
                .cloned()
                .map(LoadItem::Inverse)
                .ok_or(StoreError::NotFound(Table::Itset)),
            LoadToken::Digest(_) => Err(StoreError::Protocol(
                "digest loads need a mutable store".into(),
            )),
        }
    }

    fn load_digest(&mut self, key: &Block) -> Result<LoadItem, StoreError> {
        let products = self
            .products
            .as_mut()
            .ok_or_else(|| StoreError::Protocol("no evicted digests in this protocol".into()))?;
        let entry = self.digests.get(key).ok_or(StoreError::NotFound(Table::Digest))?;
        let witness = products
            .witness(entry.group, key, &entry.prime)
            .map_err(|e| StoreError::Protocol(e.to_string()))?;
        Ok(LoadItem::Digest(DigestProof {
            group: entry.group,
            digest: entry.digest,
            witness,
        }))
    }

    pub fn load(&mut self, token: &LoadToken) -> Result<LoadItem, StoreError> {
        self.load_batch(std::slice::from_ref(token)).remove(0)
    }

    pub fn load_batch(&mut self, tokens: &[LoadToken]) -> Vec<Result<LoadItem, StoreError>> {
        let mut items: Vec<_> = tokens
            .iter()
            .map(|t| match t {
                LoadToken::Digest(key) => self.load_digest(key),
                other => self.load_honest(other),
            })
            .collect();
        self.observe(tokens, &items);
        let stale = self.record_history(tokens, &items);
        if self.adversary.armed && self.deviate(tokens, &mut items, &stale) {
            self.adversary.armed = false;
            self.adversary.deviations += 1;
        }
        items
    }

    fn observe(&mut self, tokens: &[LoadToken], items: &[Result<LoadItem, StoreError>]) {
        let Some(audit) = self.audit.as_mut() else {
            return;
        };
        for (token, item) in tokens.iter().zip(items) {
            if let LoadToken::PostingList(stags) = token {
                audit.searched_stags.extend(stags.iter().copied());
                if let Ok(LoadItem::PostingList(list)) = item {
                    audit.backward_violations +=
                        list.iter().filter(|e| audit.deleted.contains(*e)).count() as u64;
                }
            }
        }
    }

    /// Records the honest values just served and returns, for each item,
    /// the earlier values that differ from them (stale-replay candidates).
    fn record_history(
        &mut self,
        tokens: &[LoadToken],
        items: &[Result<LoadItem, StoreError>],
    ) -> Vec<Vec<(usize, HistoryValue)>> {
        if self.adversary.mode != AdversaryMode::StaleReplay {
            return vec![Vec::new(); tokens.len()];
        }
        let mut out = Vec::with_capacity(tokens.len());
        for (token, item) in tokens.iter().zip(items) {
            let mut stale = Vec::new();
            let Ok(item) = item else {
                out.push(stale);
                continue;
            };
            let mut remember = |key: HistoryKey, value: HistoryValue, position: usize| {
                if let Some(previous) = self.history.insert(key, value.clone()) {
                    if previous != value {
                        stale.push((position, previous));
                    }
                }
            };
            match (token, item) {
                (LoadToken::PostingList(stags), LoadItem::PostingList(list)) => {
                    for (j, (s, e)) in stags.iter().zip(list).enumerate() {
                        remember(HistoryKey::Stag(*s), HistoryValue::Bytes(e.clone()), j);
                    }
                }
                (LoadToken::Stag(s), LoadItem::Record(b)) => {
                    remember(HistoryKey::Stag(*s), HistoryValue::Bytes(b.clone()), 0)
                }
                (LoadToken::Ind(i), LoadItem::Inverse(b)) => {
                    remember(HistoryKey::Ind(*i), HistoryValue::Bytes(b.clone()), 0)
                }
                (LoadToken::SubFilter(id), LoadItem::SubFilter(b)) => {
                    remember(HistoryKey::Filter(*id), HistoryValue::Bytes(b.clone()), 0)
                }
                (LoadToken::Digest(k), LoadItem::Digest(p)) => {
                    remember(HistoryKey::Digest(*k), HistoryValue::Proof(p.clone()), 0)
                }
                _ => {}
            }
            out.push(stale);
        }
        out
    }

    fn deviate(
        &mut self,
        tokens: &[LoadToken],
        items: &mut [Result<LoadItem, StoreError>],
        stale: &[Vec<(usize, HistoryValue)>],
    ) -> bool {
        let mode = self.adversary.mode;
        let targets: Vec<usize> = (0..items.len())
            .filter(|&i| match (&items[i], mode) {
                (Err(_), _) => false,
                (_, AdversaryMode::StaleReplay) => !stale[i].is_empty(),
                (Ok(LoadItem::PostingList(l)), AdversaryMode::TamperTset | AdversaryMode::DropEntry) => {
                    !l.is_empty()
                }
                (Ok(LoadItem::SubFilter(b)), AdversaryMode::TamperXset) => !b.is_empty(),
                (Ok(LoadItem::SubFilter(_)), AdversaryMode::DropEntry) => true,
                (Ok(LoadItem::Record(b) | LoadItem::Inverse(b)), AdversaryMode::TamperTset) => {
                    !b.is_empty()
                }
                (Ok(LoadItem::Record(_) | LoadItem::Inverse(_)), AdversaryMode::DropEntry) => true,
                (Ok(LoadItem::Digest(_)), AdversaryMode::TamperTset | AdversaryMode::DropEntry) => {
                    true
                }
                _ => false,
            })
            .collect();
        if targets.is_empty() {
            return false;
        }
        let rng = &mut self.adversary.rng;
        let i = targets[rng.gen_range(0..targets.len())];
        let item = items[i].as_mut().expect("targets are Ok items");
        match mode {
            AdversaryMode::Honest => return false,
            AdversaryMode::TamperTset | AdversaryMode::TamperXset => match item {
                LoadItem::PostingList(list) => {
                    let candidates: Vec<usize> =
                        (0..list.len()).filter(|&j| !list[j].is_empty()).collect();
                    if candidates.is_empty() {
                        return false;
                    }
                    let j = candidates[rng.gen_range(0..candidates.len())];
                    flip_bit(&mut list[j], rng);
                }
                LoadItem::SubFilter(b) | LoadItem::Record(b) | LoadItem::Inverse(b) => {
                    flip_bit(b, rng)
                }
                LoadItem::Digest(p) => flip_bit(&mut p.digest, rng),
            },
            AdversaryMode::DropEntry => match item {
                LoadItem::PostingList(list) => {
                    let j = rng.gen_range(0..list.len());
                    list.remove(j);
                }
                _ => {
                    let table = match &tokens[i] {
                        LoadToken::SubFilter(_) => Table::Xset,
                        LoadToken::Ind(_) => Table::Itset,
                        LoadToken::Digest(_) => Table::Digest,
                        _ => Table::Tset,
                    };
                    items[i] = Err(StoreError::NotFound(table));
                }
            },
            AdversaryMode::StaleReplay => {
                let (position, value) = &stale[i][rng.gen_range(0..stale[i].len())];
                match (item, value) {
                    (LoadItem::PostingList(list), HistoryValue::Bytes(b)) => {
                        list[*position] = b.clone()
                    }
                    (
                        LoadItem::SubFilter(cur) | LoadItem::Record(cur) | LoadItem::Inverse(cur),
                        HistoryValue::Bytes(b),
                    ) => *cur = b.clone(),
                    (LoadItem::Digest(cur), HistoryValue::Proof(p)) => *cur = p.clone(),
                    _ => return false,
                }
            }
        }
        true
    }

    /// Applies one update round. Everything is validated before anything is
    /// written, so a rejected message leaves the store unchanged.
    pub fn put_update(&mut self, message: UpdateMessage) -> Result<Ack, StoreError> {
        self.validate_tset(&message.tset)?;
        if let Some(d) = &message.digest {
            self.validate_digest(d)?;
        } else if self.products.is_some() {
            return Err(StoreError::Protocol("missing digest update".into()));
        }
        let splits = self.apply_xset(message.tset.is_insert(), message.xset)?;
        if let Some(d) = message.digest {
            self.apply_digest(d)?;
        }
        self.apply_tset(message.tset);
        Ok(Ack { splits })
    }

    fn validate_tset(&self, write: &TsetWrite) -> Result<(), StoreError> {
        match write {
            TsetWrite::Insert { stag, ind, .. } => {
                if self.itset.contains_key(ind) {
                    return Err(StoreError::Duplicate);
                }
                if self.tset.contains_key(stag) {
                    return Err(StoreError::Protocol("stag already present".into()));
                }
            }
            TsetWrite::Delete {
                stag,
                ind,
                ind_moved,
                tail,
                ..
            } => {
                if !self.tset.contains_key(stag) || !self.tset.contains_key(tail) {
                    return Err(StoreError::Protocol("unknown stag in delete".into()));
                }
                if !self.itset.contains_key(ind) || !self.itset.contains_key(ind_moved) {
                    return Err(StoreError::Protocol("unknown ind in delete".into()));
                }
            }
        }
        Ok(())
    }

    fn validate_digest(&self, d: &DigestWrite) -> Result<(), StoreError> {
        let products = self
            .products
            .as_ref()
            .ok_or_else(|| StoreError::Protocol("unexpected digest update".into()))?;
        match (&d.old, self.digests.get(&d.key)) {
            (None, None) => {
                if d.group as usize > products.group_count() {
                    return Err(StoreError::Protocol("group index skips ahead".into()));
                }
            }
            (Some(old), Some(stored)) if *old == stored.prime && stored.group == d.group => {}
            _ => return Err(StoreError::Protocol("stale digest update".into())),
        }
        if d.old.is_none() && d.new.is_none() {
            return Err(StoreError::Protocol("empty digest update".into()));
        }
        Ok(())
    }

    fn apply_xset(&mut self, insert: bool, write: XsetWrite) -> Result<Vec<SubFilterId>, StoreError> {
        match (&mut self.xset, write) {
            (Xset::Local(ldcf), XsetWrite::Fingerprint { fingerprint, mu }) => {
                let mu = mu as usize;
                if mu >= ldcf.params().bucket_count {
                    return Err(StoreError::Protocol("bucket index out of range".into()));
                }
                if insert {
                    ldcf.insert(fingerprint, mu)
                        .map_err(|e| StoreError::Protocol(e.to_string()))
                } else {
                    ldcf.remove(fingerprint, mu);
                    Ok(Vec::new())
                }
            }
            (Xset::Remote(_), XsetWrite::Filters(writes)) => {
                self.validate_filters(&writes)?;
                for w in writes {
                    match w {
                        FilterWrite::Replace { id, bytes } => self.replace_subfilter(id, bytes)?,
                        FilterWrite::Split { parent, zero, one } => {
                            self.replace_children(parent, zero, one)?
                        }
                    }
                }
                Ok(Vec::new())
            }
            (Xset::Local(_), XsetWrite::Filters(_)) => Err(StoreError::Protocol(
                "sub-filter writes are not accepted in this protocol".into(),
            )),
            (Xset::Remote(_), XsetWrite::Fingerprint { .. }) => Err(StoreError::Protocol(
                "fingerprint updates are applied by the trusted side in this protocol".into(),
            )),
        }
    }

    fn validate_filters(&self, writes: &[FilterWrite]) -> Result<(), StoreError> {
        let Xset::Remote(map) = &self.xset else {
            unreachable!()
        };
        let mut removed = HashSet::new();
        let mut added = HashSet::new();
        let present = |id: &SubFilterId, removed: &HashSet<_>, added: &HashSet<_>| {
            added.contains(id) || (map.contains_key(id) && !removed.contains(id))
        };
        for w in writes {
            match w {
                FilterWrite::Replace { id, .. } => {
                    if !present(id, &removed, &added) {
                        return Err(StoreError::Protocol(format!("unknown sub-filter {id}")));
                    }
                }
                FilterWrite::Split { parent, .. } => {
                    if !present(parent, &removed, &added) || parent.len() >= 15 {
                        return Err(StoreError::Protocol(format!("cannot split {parent}")));
                    }
                    added.remove(parent);
                    removed.insert(*parent);
                    added.insert(parent.child(0));
                    added.insert(parent.child(1));
                }
            }
        }
        Ok(())
    }

    fn apply_digest(&mut self, d: DigestWrite) -> Result<(), StoreError> {
        let products = self.products.as_mut().expect("validated");
        products
            .update(d.group, &d.key, d.old.as_ref(), d.new.as_ref().map(|(_, p)| p))
            .map_err(|e| StoreError::Protocol(e.to_string()))?;
        match d.new {
            Some((digest, prime)) => {
                self.digests.insert(
                    d.key,
                    StoredDigest {
                        group: d.group,
                        digest,
                        prime,
                    },
                );
            }
            None => {
                self.digests.remove(&d.key);
            }
        }
        Ok(())
    }

    fn apply_tset(&mut self, write: TsetWrite) {
        match write {
            TsetWrite::Insert {
                stag,
                id_e,
                ind,
                stag_e,
            } => {
                if let Some(audit) = self.audit.as_mut() {
                    audit.inserts += 1;
                    if audit.searched_stags.contains(&stag) {
                        audit.forward_violations += 1;
                    }
                    // a re-inserted pair may reuse its old ciphertext
                    audit.deleted.remove(&id_e);
                }
                self.tset.insert(stag, id_e);
                self.itset.insert(ind, stag_e);
            }
            TsetWrite::Delete {
                stag,
                id_e,
                ind,
                ind_moved,
                stag_e,
                tail,
            } => {
                if let Some(audit) = self.audit.as_mut() {
                    audit.deletes += 1;
                    audit.searched_stags.remove(&tail);
                    if stag != tail {
                        audit.deleted.remove(&id_e);
                    }
                    if let Some(old) = self.tset.get(&stag) {
                        audit.deleted.insert(old.clone());
                    }
                }
                self.tset.insert(stag, id_e);
                self.tset.remove(&tail);
                self.itset.insert(ind_moved, stag_e);
                self.itset.remove(&ind);
            }
        }
    }

    /// Overwrites leaf `id` with new bytes.
    pub fn replace_subfilter(&mut self, id: SubFilterId, bytes: Vec<u8>) -> Result<(), StoreError> {
        match &mut self.xset {
            Xset::Remote(map) => match map.get_mut(&id) {
                Some(slot) => {
                    *slot = bytes;
                    Ok(())
                }
                None => Err(StoreError::Protocol(format!("unknown sub-filter {id}"))),
            },
            Xset::Local(_) => Err(StoreError::Protocol("store-managed LDCF".into())),
        }
    }

    /// Replaces leaf `id` by its two children.
    pub fn replace_children(
        &mut self,
        id: SubFilterId,
        zero: Vec<u8>,
        one: Vec<u8>,
    ) -> Result<(), StoreError> {
        match &mut self.xset {
            Xset::Remote(map) => {
                if map.remove(&id).is_none() {
                    return Err(StoreError::Protocol(format!("unknown sub-filter {id}")));
                }
                map.insert(id.child(0), zero);
                map.insert(id.child(1), one);
                Ok(())
            }
            Xset::Local(_) => Err(StoreError::Protocol("store-managed LDCF".into())),
        }
    }

    /// `x_p <- x_p / old * new` for one group, outside of an update message.
    pub fn update_group_product(
        &mut self,
        group: u32,
        key: &Block,
        old: Option<&BigUint>,
        new: Option<&BigUint>,
    ) -> Result<(), StoreError> {
        self.products
            .as_mut()
            .ok_or_else(|| StoreError::Protocol("no group products in this protocol".into()))?
            .update(group, key, old, new)
            .map_err(|e| StoreError::Protocol(e.to_string()))
    }

    pub fn tset_len(&self) -> usize {
        self.tset.len()
    }

    pub fn itset_len(&self) -> usize {
        self.itset.len()
    }

    pub fn digest_count(&self) -> usize {
        self.digests.len()
    }

    pub fn group_product(&self, group: u32) -> Option<&BigUint> {
        self.products.as_ref().and_then(|p| p.product(group))
    }

    pub fn group_count(&self) -> usize {
        self.products.as_ref().map_or(0, |p| p.group_count())
    }

    /// Primes currently stored for one group.
    pub fn group_primes(&self, group: u32) -> Vec<BigUint> {
        self.digests
            .values()
            .filter(|d| d.group == group)
            .map(|d| d.prime.clone())
            .collect()
    }

    /// Sorted labels of the stored sub-filters.
    pub fn xset_leaves(&self) -> Vec<SubFilterId> {
        let mut ids: Vec<_> = match &self.xset {
            Xset::Local(ldcf) => ldcf.filters().map(|f| f.id()).collect(),
            Xset::Remote(map) => map.keys().copied().collect(),
        };
        ids.sort();
        ids
    }

    pub fn subfilter_bytes(&self, id: SubFilterId) -> Option<Vec<u8>> {
        match &self.xset {
            Xset::Local(ldcf) => ldcf.filter(id).map(|f| f.to_bytes()),
            Xset::Remote(map) => map.get(&id).cloned(),
        }
    }

    /// Splits performed by the store-side LDCF (SecGraph only).
    pub fn split_count(&self) -> u64 {
        match &self.xset {
            Xset::Local(ldcf) => ldcf.split_count(),
            Xset::Remote(_) => 0,
        }
    }

    /// Digest of the full table contents, for log-replay comparisons.
    pub fn fingerprint(&self) -> Block {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for map in [&self.tset, &self.itset] {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort();
            hasher.update((entries.len() as u64).to_le_bytes());
            for (k, v) in entries {
                hasher.update(k);
                hasher.update((v.len() as u32).to_le_bytes());
                hasher.update(v);
            }
        }
        for id in self.xset_leaves() {
            hasher.update(id.to_bytes());
            hasher.update(self.subfilter_bytes(id).unwrap_or_default());
        }
        let mut keys: Vec<_> = self.digests.keys().collect();
        keys.sort();
        for k in keys {
            let d = &self.digests[k];
            hasher.update(k);
            hasher.update(d.group.to_le_bytes());
            hasher.update(d.digest);
        }
        hasher.finalize().into()
    }
}

fn flip_bit<R: Rng>(bytes: &mut [u8], rng: &mut R) {
    let bit = rng.gen_range(0..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secgraph_store() -> EncryptedGraphStore {
        EncryptedGraphStore::new(Protocol::SecGraph, FilterParams::default(), None).unwrap()
    }

    fn insert(stag: u8, ind: u8) -> UpdateMessage {
        UpdateMessage {
            tset: TsetWrite::Insert {
                stag: [stag; 32],
                id_e: vec![stag; 12],
                ind: [ind; 32],
                stag_e: vec![ind; 4],
            },
            xset: XsetWrite::Fingerprint {
                fingerprint: 0x1234 + stag as u16,
                mu: stag as u32,
            },
            digest: None,
        }
    }

    #[test]
    fn first_insert_populates_all_three_tables() {
        let mut store = secgraph_store();
        store.put_update(insert(1, 1)).unwrap();
        assert_eq!(store.tset_len(), 1);
        assert_eq!(store.itset_len(), 1);
        let root = SubFilter::from_bytes(
            SubFilterId::ROOT,
            &store.subfilter_bytes(SubFilterId::ROOT).unwrap(),
        )
        .unwrap();
        assert_eq!(root.len(), 1);
    }

    #[test]
    fn duplicate_ind_is_rejected_without_side_effects() {
        let mut store = secgraph_store();
        store.put_update(insert(1, 1)).unwrap();
        let before = store.fingerprint();
        assert_eq!(store.put_update(insert(2, 1)), Err(StoreError::Duplicate));
        assert_eq!(store.fingerprint(), before);
    }

    #[test]
    fn deleting_the_only_entry_empties_the_tables() {
        let mut store = secgraph_store();
        store.put_update(insert(1, 1)).unwrap();
        store
            .put_update(UpdateMessage {
                tset: TsetWrite::Delete {
                    stag: [1; 32],
                    id_e: vec![1; 12],
                    ind: [1; 32],
                    ind_moved: [1; 32],
                    stag_e: vec![1; 4],
                    tail: [1; 32],
                },
                xset: XsetWrite::Fingerprint {
                    fingerprint: 0x1235,
                    mu: 1,
                },
                digest: None,
            })
            .unwrap();
        assert_eq!(store.tset_len(), 0);
        assert_eq!(store.itset_len(), 0);
        let root = SubFilter::from_bytes(
            SubFilterId::ROOT,
            &store.subfilter_bytes(SubFilterId::ROOT).unwrap(),
        )
        .unwrap();
        assert!(root.is_empty());
    }

    #[test]
    fn delete_of_unknown_stag_is_a_protocol_error() {
        let mut store = secgraph_store();
        let err = store
            .put_update(UpdateMessage {
                tset: TsetWrite::Delete {
                    stag: [1; 32],
                    id_e: vec![],
                    ind: [1; 32],
                    ind_moved: [1; 32],
                    stag_e: vec![],
                    tail: [1; 32],
                },
                xset: XsetWrite::Fingerprint {
                    fingerprint: 1,
                    mu: 0,
                },
                digest: None,
            })
            .unwrap_err();
        assert!(matches!(err, StoreError::Protocol(_)));
    }

    #[test]
    fn verifiable_store_rejects_fingerprint_updates_and_persists_bytes() {
        let params = FilterParams::default();
        let mut store = EncryptedGraphStore::new(Protocol::VSecGraph, params, None).unwrap();
        let mut msg = insert(1, 1);
        assert!(matches!(store.put_update(msg.clone()), Err(StoreError::Protocol(_))));
        msg.xset = XsetWrite::Filters(vec![FilterWrite::Split {
            parent: SubFilterId::ROOT,
            zero: vec![0],
            one: vec![1],
        }]);
        store.put_update(msg).unwrap();
        assert_eq!(
            store.xset_leaves(),
            vec![SubFilterId::ROOT.child(0), SubFilterId::ROOT.child(1)]
        );
        assert_eq!(store.subfilter_bytes(SubFilterId::ROOT.child(1)), Some(vec![1]));
        assert!(store.replace_subfilter(SubFilterId::ROOT, vec![]).is_err());
        store.replace_subfilter(SubFilterId::ROOT.child(0), vec![9]).unwrap();
        assert_eq!(
            store.load(&LoadToken::SubFilter(SubFilterId::ROOT.child(0))),
            Ok(LoadItem::SubFilter(vec![9]))
        );
    }

    #[test]
    fn posting_list_loads_preserve_order() {
        let mut store = secgraph_store();
        for i in 1..=5 {
            store.put_update(insert(i, i)).unwrap();
        }
        let stags: Vec<Block> = [3u8, 1, 5].iter().map(|s| [*s; 32]).collect();
        assert_eq!(
            store.load(&LoadToken::PostingList(stags)),
            Ok(LoadItem::PostingList(vec![vec![3; 12], vec![1; 12], vec![5; 12]]))
        );
        assert_eq!(
            store.load(&LoadToken::Ind([9; 32])),
            Err(StoreError::NotFound(Table::Itset))
        );
    }

    #[test]
    fn armed_adversary_deviates_once() {
        let mut store = secgraph_store();
        for i in 1..=3 {
            store.put_update(insert(i, i)).unwrap();
        }
        let token = LoadToken::PostingList(vec![[1; 32], [2; 32], [3; 32]]);
        let honest = store.load(&token);
        for mode in [AdversaryMode::TamperTset, AdversaryMode::DropEntry] {
            store.set_adversary(mode, 7);
            store.arm();
            let before = store.deviations();
            assert_ne!(store.load(&token), honest);
            assert_eq!(store.deviations(), before + 1);
            assert_eq!(store.load(&token), honest, "disarmed after one deviation");
        }
        store.set_adversary(AdversaryMode::TamperXset, 7);
        store.arm();
        assert_eq!(store.load(&token), honest, "nothing to tamper with");
    }

    #[test]
    fn stale_replay_returns_previous_value() {
        let mut store = EncryptedGraphStore::new(Protocol::VSecGraph, FilterParams::default(), None)
            .unwrap();
        store.set_adversary(AdversaryMode::StaleReplay, 1);
        let token = LoadToken::SubFilter(SubFilterId::ROOT);
        let first = store.load(&token).unwrap();
        store.replace_subfilter(SubFilterId::ROOT, vec![1, 2, 3]).unwrap();
        store.arm();
        assert_eq!(store.load(&token), Ok(first));
        assert_eq!(store.deviations(), 1);
        assert_eq!(store.load(&token), Ok(LoadItem::SubFilter(vec![1, 2, 3])));
    }

    #[test]
    fn adversary_modes_parse() {
        for m in AdversaryMode::ALL {
            assert_eq!(m.name().parse::<AdversaryMode>().unwrap(), m);
        }
        assert_eq!("drop-entry".parse::<AdversaryMode>().unwrap(), AdversaryMode::DropEntry);
    }
}
