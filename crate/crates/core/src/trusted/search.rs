use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::ldcf::{SubFilter, SubFilterId};
use crate::protocol::LoadToken;
use crate::transport::Transport;

use super::records::{is_fuzzy, Entry, FUZZY_PREFIX};
use super::{canonical_keyword, TrustedCore, OWNER};

/// Sub-string length for name indexing.
pub const SUBSTRING_LEN: usize = 2;

/// Keyword of one positioned sub-string.
pub fn fuzzy_keyword(gram: &str) -> String {
    format!("{FUZZY_PREFIX}{gram}")
}

/// Splits `#name$` into overlapping sub-strings of length `s` with their
/// 1-based positions: `Harry` gives `#H`, `Ha`, `ar`, `rr`, `ry`, `y$`.
pub fn split_name(name: &str, s: usize) -> Vec<(String, u64)> {
    let chars: Vec<char> = format!("#{name}$").chars().collect();
    if s == 0 || chars.len() < s {
        return Vec::new();
    }
    chars
        .windows(s)
        .enumerate()
        .map(|(k, w)| (w.iter().collect(), k as u64 + 1))
        .collect()
}

/// Turns a sub-string query into `w_1` and `(w_i, offset_i)` pairs. Pieces
/// are taken every `s` characters, plus one aligned to the end when the
/// length is not a multiple of `s`. Use `#` and `$` to anchor at the start
/// or end of a name. Returns `None` for queries shorter than `s`.
pub fn fuzzy_query(query: &str, s: usize) -> Option<(String, Vec<(String, i64)>)> {
    let chars: Vec<char> = query.chars().collect();
    if s == 0 || chars.len() < s {
        return None;
    }
    let mut starts: Vec<usize> = (0..=chars.len() - s).step_by(s).collect();
    if *starts.last().unwrap() != chars.len() - s {
        starts.push(chars.len() - s);
    }
    let piece = |k: usize| chars[k..k + s].iter().collect::<String>();
    let first = piece(starts[0]);
    let rest = starts[1..].iter().map(|&k| (piece(k), k as i64)).collect();
    Some((first, rest))
}

impl<T: Transport> TrustedCore<T> {
    /// Ids adjacent to `w_1` that also pass every other keyword's filter.
    pub fn search_conjunctive(&mut self, keywords: &[&str]) -> Result<Vec<u64>> {
        self.search_conjunctive_as(OWNER, keywords)
    }

    pub fn search_conjunctive_as(&mut self, client: u64, keywords: &[&str]) -> Result<Vec<u64>> {
        self.state.client(client)?;
        let Some((first, rest)) = keywords.split_first() else {
            return Err(Error::Contract("conjunctive search needs at least one keyword"));
        };
        let first = canonical_keyword(first);
        let rest: Vec<(String, i64)> = rest.iter().map(|w| (canonical_keyword(w), 0)).collect();
        self.run(|core| core.filtered_search(client, &first, &rest))
    }

    /// Positional sub-string search: `w_1` plus `(w_i, delta_i)` pairs of
    /// raw sub-strings.
    pub fn search_fuzzy(&mut self, first: &str, rest: &[(&str, i64)]) -> Result<Vec<u64>> {
        self.search_fuzzy_as(OWNER, first, rest)
    }

    pub fn search_fuzzy_as(
        &mut self,
        client: u64,
        first: &str,
        rest: &[(&str, i64)],
    ) -> Result<Vec<u64>> {
        self.state.client(client)?;
        let first = fuzzy_keyword(first);
        let rest: Vec<(String, i64)> = rest.iter().map(|(g, d)| (fuzzy_keyword(g), *d)).collect();
        self.run(|core| core.filtered_search(client, &first, &rest))
    }

    /// Names containing `query` as a sub-string.
    pub fn search_substring(&mut self, query: &str) -> Result<Vec<u64>> {
        let (first, rest) = fuzzy_query(query, super::SUBSTRING_LEN)
            .ok_or(Error::Contract("query shorter than the sub-string length"))?;
        let rest: Vec<(&str, i64)> = rest.iter().map(|(g, d)| (g.as_str(), *d)).collect();
        self.search_fuzzy(&first, &rest)
    }

    /// Vertices reachable from `id:type` within `k` hops over `type` edges,
    /// in discovery order, excluding the start vertex.
    pub fn search_single(&mut self, keyword: &str, k: usize) -> Result<Vec<u64>> {
        self.search_single_as(OWNER, keyword, k)
    }

    pub fn search_single_as(&mut self, client: u64, keyword: &str, k: usize) -> Result<Vec<u64>> {
        self.state.client(client)?;
        if k == 0 {
            return Err(Error::Contract("hop count must be at least 1"));
        }
        let canonical = canonical_keyword(keyword);
        let (source, kind) = canonical
            .split_once(':')
            .and_then(|(id, kind)| Some((id.parse::<u64>().ok()?, kind.to_string())))
            .ok_or(Error::Contract("single-keyword search needs an id:type keyword"))?;
        self.run(|core| core.traverse(client, source, &kind, k))
    }

    fn traverse(&mut self, client: u64, source: u64, kind: &str, k: usize) -> Result<Vec<u64>> {
        let mut visited = HashSet::from([source]);
        let mut frontier = vec![source];
        let mut out = Vec::new();
        for _ in 0..k {
            let mut level = Vec::new();
            let mut tokens = Vec::new();
            for v in &frontier {
                let w = super::keyword(*v, kind);
                let count = self.count(client, &w);
                if count > 0 {
                    tokens.extend(self.posting_tokens(client, &w, count)?);
                    level.push((w, count));
                }
            }
            if level.is_empty() {
                break;
            }
            let mut items = self.round_trip(tokens)?;
            let mut drain = items.drain(..);
            let mut next = Vec::new();
            for (w, count) in &level {
                let (entries, _) = self.accept_posting_items(client, w, *count, &mut drain)?;
                for p in entries {
                    if visited.insert(p.entry.id) {
                        out.push(p.entry.id);
                        next.push(p.entry.id);
                    }
                }
            }
            frontier = next;
        }
        Ok(out)
    }

    /// Loads the posting list of `first` and keeps each entry whose xtag
    /// with every other keyword passes that keyword's sub-filter.
    fn filtered_search(&mut self, client: u64, first: &str, rest: &[(String, i64)]) -> Result<Vec<u64>> {
        let count = self.count(client, first);
        if count == 0 {
            return Ok(Vec::new());
        }
        let tokens = self.posting_tokens(client, first, count)?;
        let mut items = self.round_trip(tokens)?;
        let mut drain = items.drain(..);
        let (entries, _) = self.accept_posting_items(client, first, count, &mut drain)?;
        drop(drain);

        let mut local = HashMap::new();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        'entries: for p in entries {
            for (w, offset) in rest {
                let probe = if is_fuzzy(w) {
                    let pos = p.entry.aux as i64 + offset;
                    if pos < 1 {
                        continue 'entries;
                    }
                    Entry {
                        id: p.entry.id,
                        aux: pos as u64,
                    }
                } else {
                    Entry {
                        id: p.entry.id,
                        aux: 0,
                    }
                };
                if !self.check_member(client, &mut local, w, probe)? {
                    continue 'entries;
                }
            }
            if seen.insert(p.entry.id) {
                out.push(p.entry.id);
            }
        }
        Ok(out)
    }

    /// Membership of `(w, entry)` in its routed sub-filter, loading the
    /// sub-filter at most once per search.
    fn check_member(
        &mut self,
        client: u64,
        local: &mut HashMap<SubFilterId, SubFilter>,
        w: &str,
        entry: Entry,
    ) -> Result<bool> {
        let tagger = &self.state.client(client)?.tagger;
        let (delta, mu) = tagger.fingerprint(&tagger.xtag(w, entry), &self.state.config.filter);
        let id = self.state.tree.route(delta);
        if !local.contains_key(&id) {
            let filter = match self.cache_get(id) {
                Some(f) => f,
                None => {
                    self.current.subfilter_loads += 1;
                    let item = self
                        .round_trip(vec![LoadToken::SubFilter(id)])?
                        .pop()
                        .expect("one item per token");
                    let f = self.accept_filter(id, item)?;
                    self.cache_put(f.clone());
                    f
                }
            };
            local.insert(id, filter);
        }
        self.current.membership_checks += 1;
        Ok(local[&id].contains(delta, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harry_splits_into_six_positioned_pairs() {
        let pairs = split_name("Harry", 2);
        let expected = [("#H", 1), ("Ha", 2), ("ar", 3), ("rr", 4), ("ry", 5), ("y$", 6)];
        assert_eq!(pairs.len(), 6);
        for ((g, p), (eg, ep)) in pairs.iter().zip(expected) {
            assert_eq!((g.as_str(), *p), (eg, ep));
        }
    }

    #[test]
    fn queries_cover_every_character() {
        assert_eq!(fuzzy_query("ar", 2), Some(("ar".into(), vec![])));
        assert_eq!(
            fuzzy_query("arr", 2),
            Some(("ar".into(), vec![("rr".into(), 1)]))
        );
        assert_eq!(
            fuzzy_query("#Harry$", 2),
            Some((
                "#H".into(),
                vec![("ar".into(), 2), ("ry".into(), 4), ("y$".into(), 5)]
            ))
        );
        assert_eq!(fuzzy_query("a", 2), None);
    }

    #[test]
    fn short_names_still_split() {
        assert_eq!(split_name("", 2), vec![("#$".to_string(), 1)]);
    }
}
