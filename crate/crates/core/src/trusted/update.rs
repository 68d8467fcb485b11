use crate::crypto::Field;
use crate::error::{Error, IntegrityCheck, Result, StoreError};
use crate::ldcf::insert_routed;
use crate::protocol::{
    DigestWrite, FilterWrite, LoadItem, LoadToken, TsetWrite, UpdateMessage, XsetWrite,
};
use crate::transport::Transport;
use crate::verify::MultisetHash;

use super::records::{is_fuzzy, Entry, Positioned, Tagger};
use super::{canonical_keyword, split_name, TrustedCore, OWNER, SUBSTRING_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Insert,
    Delete,
}

/// `(w, id, weight, op)`; for sub-string keywords `aux` is the position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateToken {
    pub keyword: String,
    pub id: u64,
    pub aux: u64,
    pub op: Op,
}

impl UpdateToken {
    pub fn insert(keyword: impl Into<String>, id: u64, aux: u64) -> Self {
        UpdateToken {
            keyword: keyword.into(),
            id,
            aux,
            op: Op::Insert,
        }
    }

    pub fn delete(keyword: impl Into<String>, id: u64) -> Self {
        UpdateToken {
            keyword: keyword.into(),
            id,
            aux: 0,
            op: Op::Delete,
        }
    }
}

/// Whether a stored entry is the pair a client named. Graph pairs are
/// identified by id alone; sub-string pairs also by position.
fn same_pair(w: &str, stored: Entry, named: Entry) -> bool {
    stored.id == named.id && (!is_fuzzy(w) || stored.aux == named.aux)
}

fn missing_or(e: &StoreError) -> Error {
    match e {
        StoreError::NotFound(_) => Error::Integrity(IntegrityCheck::Missing),
        other => Error::Store(other.clone()),
    }
}

fn record(item: Option<Result<LoadItem, StoreError>>) -> Result<Vec<u8>> {
    match item {
        Some(Ok(LoadItem::Record(b))) => Ok(b),
        Some(Err(e)) => Err(missing_or(&e)),
        _ => Err(Error::Integrity(IntegrityCheck::Malformed)),
    }
}

fn inverse(item: Option<Result<LoadItem, StoreError>>) -> Result<Vec<u8>> {
    match item {
        Some(Ok(LoadItem::Inverse(b))) => Ok(b),
        Some(Err(e)) => Err(missing_or(&e)),
        _ => Err(Error::Integrity(IntegrityCheck::Malformed)),
    }
}

impl<T: Transport> TrustedCore<T> {
    pub fn update(&mut self, token: &UpdateToken) -> Result<()> {
        self.update_as(OWNER, token)
    }

    pub fn update_as(&mut self, client: u64, token: &UpdateToken) -> Result<()> {
        self.state.client(client)?;
        let w = canonical_keyword(&token.keyword);
        let entry = Entry {
            id: token.id,
            aux: token.aux,
        };
        let verifiable = self.verifiable();
        self.run(|core| match (token.op, verifiable) {
            (Op::Insert, false) => core.insert_plain(client, &w, entry),
            (Op::Insert, true) => core.insert_verified(client, &w, entry),
            (Op::Delete, false) => core.delete_plain(client, &w, entry),
            (Op::Delete, true) => core.delete_verified(client, &w, entry),
        })
    }

    pub fn insert(&mut self, w: &str, id: u64, weight: u64) -> Result<()> {
        self.update(&UpdateToken::insert(w, id, weight))
    }

    pub fn delete(&mut self, w: &str, id: u64) -> Result<()> {
        self.update(&UpdateToken::delete(w, id))
    }

    pub fn insert_as(&mut self, client: u64, w: &str, id: u64, weight: u64) -> Result<()> {
        self.update_as(client, &UpdateToken::insert(w, id, weight))
    }

    pub fn delete_as(&mut self, client: u64, w: &str, id: u64) -> Result<()> {
        self.update_as(client, &UpdateToken::delete(w, id))
    }

    /// Indexes every positioned sub-string of `name` for vertex `id`.
    pub fn insert_name(&mut self, id: u64, name: &str) -> Result<()> {
        self.name_updates(id, name, Op::Insert)
    }

    pub fn delete_name(&mut self, id: u64, name: &str) -> Result<()> {
        self.name_updates(id, name, Op::Delete)
    }

    fn name_updates(&mut self, id: u64, name: &str, op: Op) -> Result<()> {
        for (gram, pos) in split_name(name, SUBSTRING_LEN) {
            self.update(&UpdateToken {
                keyword: super::fuzzy_keyword(&gram),
                id,
                aux: pos,
                op,
            })?;
        }
        Ok(())
    }

    fn tagger(&self, client: u64) -> Result<Tagger> {
        Ok(self.state.client(client)?.tagger.clone())
    }

    pub(super) fn count(&self, client: u64, w: &str) -> u64 {
        self.state.clients[&client].counters.get(w).copied().unwrap_or(0)
    }

    fn set_count(&mut self, client: u64, w: &str, count: u64) {
        let counters = &mut self.state.clients.get_mut(&client).unwrap().counters;
        if count == 0 {
            counters.remove(w);
        } else {
            counters.insert(w.to_string(), count);
        }
    }

    fn next_position(&self, client: u64, w: &str) -> Result<u64> {
        let i = self.count(client, w) + 1;
        if i > self.state.config.codec.max_value(Field::Counter) || i > u32::MAX as u64 {
            return Err(Error::Contract("posting list is full"));
        }
        Ok(i)
    }

    /// Insert without verification: the store runs the LDCF and reports splits.
    fn insert_plain(&mut self, client: u64, w: &str, entry: Entry) -> Result<()> {
        let tagger = self.tagger(client)?;
        let params = self.state.config.filter;
        let i = self.next_position(client, w)?;
        let p = Positioned { entry, i };
        let (delta, mu) = tagger.fingerprint(&tagger.xtag(w, entry), &params);
        let message = UpdateMessage {
            tset: TsetWrite::Insert {
                stag: tagger.stag(w, i),
                id_e: tagger.encrypt_posting(w, p)?,
                ind: tagger.ind(w, entry),
                stag_e: tagger.encrypt_inverse(w, p)?,
            },
            xset: XsetWrite::Fingerprint {
                fingerprint: delta,
                mu: mu as u32,
            },
            digest: None,
        };
        let leaf = self.state.tree.route(delta);
        let ack = self.send_update(message)?;
        self.cache_forget(leaf);
        for parent in &ack.splits {
            self.state
                .tree
                .split(*parent)
                .map_err(|_| Error::Integrity(IntegrityCheck::Malformed))?;
            self.cache_forget(*parent);
        }
        self.current.splits += ack.splits.len() as u64;
        self.set_count(client, w, i);
        Ok(())
    }

    /// Delete without verification: overwrite the pair's slot with the tail
    /// entry and drop the tail.
    fn delete_plain(&mut self, client: u64, w: &str, entry: Entry) -> Result<()> {
        let tagger = self.tagger(client)?;
        let params = self.state.config.filter;
        let count = self.count(client, w);
        if count == 0 {
            return Err(Error::NotFound(format!("{w} is empty")));
        }
        let ind = tagger.ind(w, entry);
        let tail = tagger.stag(w, count);
        let mut items = self
            .round_trip(vec![LoadToken::Stag(tail), LoadToken::Ind(ind)])?
            .into_iter();
        let tail_item = items.next();
        let i = match items.next() {
            Some(Ok(LoadItem::Inverse(b))) => tagger.decrypt_inverse(w, &b)?.i,
            Some(Err(StoreError::NotFound(_))) => {
                return Err(Error::NotFound(format!("({w}, {}) not present", entry.id)))
            }
            Some(Err(e)) => return Err(Error::Store(e)),
            _ => return Err(Error::Integrity(IntegrityCheck::Malformed)),
        };
        if i == 0 || i > count {
            return Err(Error::Integrity(IntegrityCheck::Malformed));
        }
        let tail_ct = match tail_item {
            Some(Ok(LoadItem::Record(b))) => b,
            Some(Err(e)) => return Err(Error::Store(e)),
            _ => return Err(Error::Integrity(IntegrityCheck::Malformed)),
        };
        self.current.decryptions += 1;
        let (tail_p, _) = tagger.decrypt_posting(w, &tail_ct)?;
        let moved = Positioned {
            entry: tail_p.entry,
            i,
        };
        let ind_moved = if i == count {
            ind
        } else {
            tagger.ind(w, tail_p.entry)
        };
        let (delta, mu) = tagger.fingerprint(&tagger.xtag(w, entry), &params);
        let message = UpdateMessage {
            tset: TsetWrite::Delete {
                stag: tagger.stag(w, i),
                id_e: tail_ct,
                ind,
                ind_moved,
                stag_e: tagger.encrypt_inverse(w, moved)?,
                tail,
            },
            xset: XsetWrite::Fingerprint {
                fingerprint: delta,
                mu: mu as u32,
            },
            digest: None,
        };
        self.send_update(message)?;
        self.cache_forget(self.state.tree.route(delta));
        self.set_count(client, w, count - 1);
        Ok(())
    }

    /// The digest `w` had before this round: from trusted memory, or the
    /// verified evicted copy.
    fn prior_digest(&self, client: u64, w: &str, proven: Option<&super::ProvenDigest>) -> MultisetHash {
        match proven {
            Some(p) => p.value,
            None if self.state.groups.is_some() => MultisetHash::empty(),
            None => self.state.clients[&client]
                .digests
                .get(w)
                .copied()
                .unwrap_or_default(),
        }
    }

    fn insert_verified(&mut self, client: u64, w: &str, entry: Entry) -> Result<()> {
        let tagger = self.tagger(client)?;
        let params = self.state.config.filter;
        let count = self.count(client, w);
        let i = self.next_position(client, w)?;
        let (delta, mu) = tagger.fingerprint(&tagger.xtag(w, entry), &params);
        let leaf_id = self.state.tree.route(delta);
        let key = tagger.digest_key(w);
        let accumulator = self.state.groups.is_some();

        let mut tokens = vec![LoadToken::SubFilter(leaf_id)];
        if accumulator && count > 0 {
            tokens.push(LoadToken::Digest(key));
        }
        let mut items = self.round_trip(tokens)?.into_iter();
        let filter = self.accept_filter(leaf_id, items.next().unwrap())?;
        let proven = if accumulator && count > 0 {
            Some(self.accept_digest(&key, items.next().unwrap())?)
        } else {
            None
        };

        self.current.membership_checks += 1;
        if count > 0 && filter.contains(delta, mu) {
            let (entries, _) = self.vload_postings(client, w)?;
            if entries.iter().any(|p| same_pair(w, p.entry, entry)) {
                return Err(Error::Duplicate);
            }
        }

        let p = Positioned { entry, i };
        let new_digest = self
            .prior_digest(client, w, proven.as_ref())
            .add(&tagger.posting_record(w, p)?);
        let routed = insert_routed(filter, delta, mu, params.max_kicks)?;
        let tree = if routed.steps.is_empty() {
            None
        } else {
            let mut tree = self.state.tree.clone();
            for step in &routed.steps {
                tree.split(step.parent)?;
            }
            Some(tree)
        };
        let writes = if routed.steps.is_empty() {
            vec![FilterWrite::Replace {
                id: leaf_id,
                bytes: routed.leaves[0].to_bytes(),
            }]
        } else {
            routed
                .steps
                .iter()
                .map(|s| FilterWrite::Split {
                    parent: s.parent,
                    zero: s.children[0].to_bytes(),
                    one: s.children[1].to_bytes(),
                })
                .collect()
        };
        let digest = if accumulator {
            let prime = self.state.prime_for(&key, &new_digest);
            let (group, old) = match &proven {
                Some(p) => (p.group, Some(p.prime.clone())),
                None => (self.state.groups.as_ref().unwrap().assign(&key), None),
            };
            Some(DigestWrite {
                key,
                group,
                old,
                new: Some((new_digest.to_bytes(), prime)),
            })
        } else {
            None
        };
        let message = UpdateMessage {
            tset: TsetWrite::Insert {
                stag: tagger.stag(w, i),
                id_e: tagger.encrypt_posting(w, p)?,
                ind: tagger.ind(w, entry),
                stag_e: tagger.encrypt_inverse(w, p)?,
            },
            xset: XsetWrite::Filters(writes),
            digest: digest.clone(),
        };
        self.send_update(message)?;

        if let Some(tree) = tree {
            self.state.tree = tree;
        }
        for step in &routed.steps {
            self.cache_forget(step.parent);
        }
        self.current.splits += routed.steps.len() as u64;
        for leaf in routed.leaves {
            self.state.tree.set_digest(leaf.id(), leaf.digest());
            self.cache_put(leaf);
        }
        self.commit_digest(client, w, digest, new_digest)?;
        self.set_count(client, w, i);
        Ok(())
    }

    fn commit_digest(
        &mut self,
        client: u64,
        w: &str,
        write: Option<DigestWrite>,
        value: MultisetHash,
    ) -> Result<()> {
        match write {
            Some(d) => {
                let groups = self.state.groups.as_mut().unwrap();
                match (d.old, d.new) {
                    (None, Some((_, new))) => groups.insert(d.group, &new)?,
                    (Some(old), Some((_, new))) => groups.replace(d.group, &old, &new)?,
                    (Some(old), None) => groups.remove(d.group, &old)?,
                    (None, None) => {}
                }
            }
            None => {
                let digests = &mut self.state.clients.get_mut(&client).unwrap().digests;
                if value.is_empty() {
                    digests.remove(w);
                } else {
                    digests.insert(w.to_string(), value);
                }
            }
        }
        Ok(())
    }

    fn delete_verified(&mut self, client: u64, w: &str, entry: Entry) -> Result<()> {
        let tagger = self.tagger(client)?;
        let params = self.state.config.filter;
        let count = self.count(client, w);
        if count == 0 {
            return Err(Error::NotFound(format!("{w} is empty")));
        }
        let (delta, mu) = tagger.fingerprint(&tagger.xtag(w, entry), &params);
        let leaf_id = self.state.tree.route(delta);
        let key = tagger.digest_key(w);
        let ind = tagger.ind(w, entry);
        let tail_stag = tagger.stag(w, count);
        let accumulator = self.state.groups.is_some();

        // The filter and digest come first, so records are only requested
        // for pairs the verified filter admits.
        let mut tokens = vec![LoadToken::SubFilter(leaf_id)];
        if accumulator {
            tokens.push(LoadToken::Digest(key));
        }
        let mut items = self.round_trip(tokens)?.into_iter();
        let mut filter = self.accept_filter(leaf_id, items.next().unwrap())?;
        let proven = if accumulator {
            Some(self.accept_digest(&key, items.next().unwrap())?)
        } else {
            None
        };

        self.current.membership_checks += 1;
        if !filter.contains(delta, mu) {
            return Err(Error::NotFound(format!("({w}, {}) not present", entry.id)));
        }
        let mut items = self
            .round_trip(vec![LoadToken::Stag(tail_stag), LoadToken::Ind(ind)])?
            .into_iter();
        let tail_item = items.next();
        let ind_item = items.next();
        let target = match ind_item {
            Some(Ok(LoadItem::Inverse(b))) => tagger.decrypt_inverse(w, &b)?,
            Some(Err(_)) => {
                // The verified filter admits the pair, so only the posting
                // list can tell an absent pair from a withheld one.
                let (entries, _) = self.vload_postings(client, w)?;
                return if entries.iter().any(|p| same_pair(w, p.entry, entry)) {
                    Err(Error::Integrity(IntegrityCheck::Missing))
                } else {
                    Err(Error::NotFound(format!("({w}, {}) not present", entry.id)))
                };
            }
            _ => return Err(Error::Integrity(IntegrityCheck::Malformed)),
        };
        if !same_pair(w, target.entry, entry) {
            return Err(Error::Integrity(IntegrityCheck::IndIdentity));
        }
        let i = target.i;
        if i == 0 || i > count {
            return Err(Error::Integrity(IntegrityCheck::CrossCheck));
        }
        self.current.decryptions += 1;
        let (tail, _) = tagger.decrypt_posting(w, &record(tail_item)?)?;
        if tail.i != count {
            return Err(Error::Integrity(IntegrityCheck::StagCounter));
        }
        if i == count {
            if tail.entry != target.entry {
                return Err(Error::Integrity(IntegrityCheck::CrossCheck));
            }
        } else {
            let mut second = self
                .round_trip(vec![
                    LoadToken::Ind(tagger.ind(w, tail.entry)),
                    LoadToken::Stag(tagger.stag(w, i)),
                ])?
                .into_iter();
            let moved = tagger.decrypt_inverse(w, &inverse(second.next())?)?;
            if moved.i != count || moved.entry != tail.entry {
                return Err(Error::Integrity(IntegrityCheck::CrossCheck));
            }
            self.current.decryptions += 1;
            let (slot, _) = tagger.decrypt_posting(w, &record(second.next())?)?;
            if slot.i != i {
                return Err(Error::Integrity(IntegrityCheck::StagCounter));
            }
            if slot.entry != target.entry {
                return Err(Error::Integrity(IntegrityCheck::CrossCheck));
            }
        }

        let removed = Positioned {
            entry: target.entry,
            i,
        };
        let mut new_digest = self
            .prior_digest(client, w, proven.as_ref())
            .remove(&tagger.posting_record(w, removed)?);
        let moved = Positioned {
            entry: tail.entry,
            i,
        };
        let ind_moved = if i == count {
            ind
        } else {
            new_digest = new_digest
                .remove(&tagger.posting_record(w, tail)?)
                .add(&tagger.posting_record(w, moved)?);
            tagger.ind(w, tail.entry)
        };
        if !filter.remove(delta, mu) {
            return Err(Error::Integrity(IntegrityCheck::FilterState));
        }
        let digest = match &proven {
            Some(p) => {
                let new = if count == 1 {
                    None
                } else {
                    let prime = self.state.prime_for(&key, &new_digest);
                    Some((new_digest.to_bytes(), prime))
                };
                Some(DigestWrite {
                    key,
                    group: p.group,
                    old: Some(p.prime.clone()),
                    new,
                })
            }
            None => None,
        };
        let message = UpdateMessage {
            tset: TsetWrite::Delete {
                stag: tagger.stag(w, i),
                id_e: tagger.encrypt_posting(w, moved)?,
                ind,
                ind_moved,
                stag_e: tagger.encrypt_inverse(w, moved)?,
                tail: tail_stag,
            },
            xset: XsetWrite::Filters(vec![FilterWrite::Replace {
                id: leaf_id,
                bytes: filter.to_bytes(),
            }]),
            digest: digest.clone(),
        };
        self.send_update(message)?;

        self.state.tree.set_digest(leaf_id, filter.digest());
        self.cache_put(filter);
        self.commit_digest(client, w, digest, new_digest)?;
        self.set_count(client, w, count - 1);
        Ok(())
    }
}
