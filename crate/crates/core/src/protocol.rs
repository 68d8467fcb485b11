//! Messages exchanged across the trusted/untrusted boundary and their binary
//! frame encoding.
//!
//! A frame is `{u32 length}{u8 kind}{payload}` where `length` counts the kind
//! byte plus payload. Integers are little-endian; big integers are a `u32`
//! byte count followed by big-endian magnitude bytes. The layouts are listed
//! in `docs/protocol.md`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_bigint::BigUint;

use crate::crypto::Block;
use crate::error::{CodecError, StoreError, Table};
use crate::ldcf::SubFilterId;

/// Upper bound on a single frame, so a corrupt length cannot force a huge allocation.
pub const MAX_FRAME: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    SecGraph,
    VSecGraph,
    /// VSecGraph with posting-list digests evicted to the store and proven
    /// through grouped RSA accumulators.
    VSecGraphA,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::SecGraph, Protocol::VSecGraph, Protocol::VSecGraphA];

    pub fn is_verifiable(self) -> bool {
        !matches!(self, Protocol::SecGraph)
    }

    pub fn uses_accumulator(self) -> bool {
        matches!(self, Protocol::VSecGraphA)
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SecGraph => "secgraph",
            Protocol::VSecGraph => "vsecgraph",
            Protocol::VSecGraphA => "vsecgraph-a",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "secgraph" => Ok(Protocol::SecGraph),
            "vsecgraph" => Ok(Protocol::VSecGraph),
            "vsecgraph-a" | "vsecgraph_a" => Ok(Protocol::VSecGraphA),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// What the trusted side asks the store for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LoadToken {
    /// A stag list `SL`: the posting list in counter order.
    PostingList(Vec<Block>),
    SubFilter(SubFilterId),
    /// A single TSet record.
    Stag(Block),
    /// A single ITSet record.
    Ind(Block),
    /// An evicted multiset hash, keyed by keyword digest.
    Digest(Block),
}

/// An evicted posting-list digest with its accumulator membership witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestProof {
    pub group: u32,
    pub digest: Block,
    pub witness: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadItem {
    PostingList(Vec<Vec<u8>>),
    SubFilter(Vec<u8>),
    Record(Vec<u8>),
    Inverse(Vec<u8>),
    Digest(DigestProof),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TsetWrite {
    Insert {
        stag: Block,
        id_e: Vec<u8>,
        ind: Block,
        stag_e: Vec<u8>,
    },
    /// Overwrite slot `stag` with the relocated tail record `id_e`, point
    /// `ind_moved` at it, drop `ind`, and remove the old tail slot.
    Delete {
        stag: Block,
        id_e: Vec<u8>,
        ind: Block,
        ind_moved: Block,
        stag_e: Vec<u8>,
        tail: Block,
    },
}

impl TsetWrite {
    pub fn is_insert(&self) -> bool {
        matches!(self, TsetWrite::Insert { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterWrite {
    Replace { id: SubFilterId, bytes: Vec<u8> },
    Split {
        parent: SubFilterId,
        zero: Vec<u8>,
        one: Vec<u8>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XsetWrite {
    /// The store inserts or deletes the fingerprint in its own LDCF.
    Fingerprint { fingerprint: u16, mu: u32 },
    /// Sub-filters already mutated by the trusted side, applied in order.
    Filters(Vec<FilterWrite>),
}

/// Swap of one keyword's evicted digest and its accumulator prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestWrite {
    pub key: Block,
    pub group: u32,
    pub old: Option<BigUint>,
    pub new: Option<(Block, BigUint)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMessage {
    pub tset: TsetWrite,
    pub xset: XsetWrite,
    pub digest: Option<DigestWrite>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Load(Vec<LoadToken>),
    Update(UpdateMessage),
}

/// Acknowledgement of an update. `splits` lists sub-filters the store split
/// while applying it, parents first, so the trusted side can mirror them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ack {
    pub splits: Vec<SubFilterId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Loaded(Vec<Result<LoadItem, StoreError>>),
    Ack(Ack),
    Failed(StoreError),
}

const KIND_LOAD: u8 = 0x01;
const KIND_UPDATE: u8 = 0x02;
const KIND_LOADED: u8 = 0x81;
const KIND_ACK: u8 = 0x82;
const KIND_FAILED: u8 = 0xff;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("field longer than u32::MAX"));
    }
    fn block(&mut self, b: &Block) {
        self.0.extend_from_slice(b);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }
    fn id(&mut self, id: SubFilterId) {
        self.0.extend_from_slice(&id.to_bytes());
    }
    fn big(&mut self, v: &BigUint) {
        self.bytes(&v.to_bytes_be());
    }
    fn opt<T>(&mut self, v: Option<T>, f: impl FnOnce(&mut Self, T)) {
        match v {
            None => self.u8(0),
            Some(v) => {
                self.u8(1);
                f(self, v);
            }
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.0.len() < n {
            return Err(CodecError::Truncated);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.0.len() {
            return Err(CodecError::Truncated);
        }
        Ok(n)
    }
    fn block(&mut self) -> Result<Block, CodecError> {
        Ok(self.take(32)?.try_into().unwrap())
    }
    fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let n = self.count(1)?;
        Ok(self.take(n)?.to_vec())
    }
    fn id(&mut self) -> Result<SubFilterId, CodecError> {
        SubFilterId::from_bytes(self.take(3)?.try_into().unwrap())
            .ok_or(CodecError::Malformed("sub-filter label"))
    }
    fn big(&mut self) -> Result<BigUint, CodecError> {
        Ok(BigUint::from_bytes_be(&self.bytes()?))
    }
    fn flag(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CodecError::Malformed("option flag")),
        }
    }
    fn finish(&self) -> Result<(), CodecError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CodecError::Malformed("trailing bytes"))
        }
    }
}

fn put_token(w: &mut Writer, token: &LoadToken) {
    match token {
        LoadToken::PostingList(stags) => {
            w.u8(1);
            w.len(stags.len());
            stags.iter().for_each(|s| w.block(s));
        }
        LoadToken::SubFilter(id) => {
            w.u8(2);
            w.id(*id);
        }
        LoadToken::Stag(s) => {
            w.u8(3);
            w.block(s);
        }
        LoadToken::Ind(i) => {
            w.u8(4);
            w.block(i);
        }
        LoadToken::Digest(k) => {
            w.u8(5);
            w.block(k);
        }
    }
}

fn get_token(r: &mut Reader) -> Result<LoadToken, CodecError> {
    Ok(match r.u8()? {
        1 => {
            let n = r.count(32)?;
            LoadToken::PostingList((0..n).map(|_| r.block()).collect::<Result<_, _>>()?)
        }
        2 => LoadToken::SubFilter(r.id()?),
        3 => LoadToken::Stag(r.block()?),
        4 => LoadToken::Ind(r.block()?),
        5 => LoadToken::Digest(r.block()?),
        _ => return Err(CodecError::Malformed("load token tag")),
    })
}

fn put_update(w: &mut Writer, m: &UpdateMessage) {
    match &m.tset {
        TsetWrite::Insert {
            stag,
            id_e,
            ind,
            stag_e,
        } => {
            w.u8(1);
            w.block(stag);
            w.bytes(id_e);
            w.block(ind);
            w.bytes(stag_e);
        }
        TsetWrite::Delete {
            stag,
            id_e,
            ind,
            ind_moved,
            stag_e,
            tail,
        } => {
            w.u8(2);
            w.block(stag);
            w.bytes(id_e);
            w.block(ind);
            w.block(ind_moved);
            w.bytes(stag_e);
            w.block(tail);
        }
    }
    match &m.xset {
        XsetWrite::Fingerprint { fingerprint, mu } => {
            w.u8(1);
            w.u16(*fingerprint);
            w.u32(*mu);
        }
        XsetWrite::Filters(writes) => {
            w.u8(2);
            w.len(writes.len());
            for write in writes {
                match write {
                    FilterWrite::Replace { id, bytes } => {
                        w.u8(1);
                        w.id(*id);
                        w.bytes(bytes);
                    }
                    FilterWrite::Split { parent, zero, one } => {
                        w.u8(2);
                        w.id(*parent);
                        w.bytes(zero);
                        w.bytes(one);
                    }
                }
            }
        }
    }
    w.opt(m.digest.as_ref(), |w, d| {
        w.block(&d.key);
        w.u32(d.group);
        w.opt(d.old.as_ref(), |w, p| w.big(p));
        w.opt(d.new.as_ref(), |w, (h, p)| {
            w.block(h);
            w.big(p);
        });
    });
}

fn get_update(r: &mut Reader) -> Result<UpdateMessage, CodecError> {
    let tset = match r.u8()? {
        1 => TsetWrite::Insert {
            stag: r.block()?,
            id_e: r.bytes()?,
            ind: r.block()?,
            stag_e: r.bytes()?,
        },
        2 => TsetWrite::Delete {
            stag: r.block()?,
            id_e: r.bytes()?,
            ind: r.block()?,
            ind_moved: r.block()?,
            stag_e: r.bytes()?,
            tail: r.block()?,
        },
        _ => return Err(CodecError::Malformed("tset write tag")),
    };
    let xset = match r.u8()? {
        1 => XsetWrite::Fingerprint {
            fingerprint: r.u16()?,
            mu: r.u32()?,
        },
        2 => {
            let n = r.count(4)?;
            let mut writes = Vec::with_capacity(n);
            for _ in 0..n {
                writes.push(match r.u8()? {
                    1 => FilterWrite::Replace {
                        id: r.id()?,
                        bytes: r.bytes()?,
                    },
                    2 => FilterWrite::Split {
                        parent: r.id()?,
                        zero: r.bytes()?,
                        one: r.bytes()?,
                    },
                    _ => return Err(CodecError::Malformed("filter write tag")),
                });
            }
            XsetWrite::Filters(writes)
        }
        _ => return Err(CodecError::Malformed("xset write tag")),
    };
    let digest = if r.flag()? {
        let key = r.block()?;
        let group = r.u32()?;
        let old = if r.flag()? { Some(r.big()?) } else { None };
        let new = if r.flag()? {
            Some((r.block()?, r.big()?))
        } else {
            None
        };
        Some(DigestWrite {
            key,
            group,
            old,
            new,
        })
    } else {
        None
    };
    Ok(UpdateMessage { tset, xset, digest })
}

fn put_store_error(w: &mut Writer, e: &StoreError) {
    match e {
        StoreError::NotFound(table) => {
            w.u8(1);
            w.u8(*table as u8);
        }
        StoreError::Protocol(msg) => {
            w.u8(2);
            w.bytes(msg.as_bytes());
        }
        StoreError::Duplicate => w.u8(3),
    }
}

fn get_store_error(r: &mut Reader) -> Result<StoreError, CodecError> {
    Ok(match r.u8()? {
        1 => StoreError::NotFound(match r.u8()? {
            0 => Table::Tset,
            1 => Table::Itset,
            2 => Table::Xset,
            3 => Table::Digest,
            _ => return Err(CodecError::Malformed("table tag")),
        }),
        2 => StoreError::Protocol(
            String::from_utf8(r.bytes()?).map_err(|_| CodecError::Malformed("utf-8"))?,
        ),
        3 => StoreError::Duplicate,
        _ => return Err(CodecError::Malformed("store error tag")),
    })
}

fn put_item(w: &mut Writer, item: &LoadItem) {
    match item {
        LoadItem::PostingList(list) => {
            w.u8(1);
            w.len(list.len());
            list.iter().for_each(|e| w.bytes(e));
        }
        LoadItem::SubFilter(b) => {
            w.u8(2);
            w.bytes(b);
        }
        LoadItem::Record(b) => {
            w.u8(3);
            w.bytes(b);
        }
        LoadItem::Inverse(b) => {
            w.u8(4);
            w.bytes(b);
        }
        LoadItem::Digest(p) => {
            w.u8(5);
            w.u32(p.group);
            w.block(&p.digest);
            w.big(&p.witness);
        }
    }
}

fn get_item(r: &mut Reader) -> Result<LoadItem, CodecError> {
    Ok(match r.u8()? {
        1 => {
            let n = r.count(4)?;
            LoadItem::PostingList((0..n).map(|_| r.bytes()).collect::<Result<_, _>>()?)
        }
        2 => LoadItem::SubFilter(r.bytes()?),
        3 => LoadItem::Record(r.bytes()?),
        4 => LoadItem::Inverse(r.bytes()?),
        5 => LoadItem::Digest(DigestProof {
            group: r.u32()?,
            digest: r.block()?,
            witness: r.big()?,
        }),
        _ => return Err(CodecError::Malformed("load item tag")),
    })
}

impl Request {
    /// Kind byte followed by payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            Request::Load(tokens) => {
                w.u8(KIND_LOAD);
                w.len(tokens.len());
                tokens.iter().for_each(|t| put_token(&mut w, t));
            }
            Request::Update(m) => {
                w.u8(KIND_UPDATE);
                put_update(&mut w, m);
            }
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader(bytes);
        let request = match r.u8()? {
            KIND_LOAD => {
                let n = r.count(1)?;
                Request::Load((0..n).map(|_| get_token(&mut r)).collect::<Result<_, _>>()?)
            }
            KIND_UPDATE => Request::Update(get_update(&mut r)?),
            _ => return Err(CodecError::Malformed("request kind")),
        };
        r.finish()?;
        Ok(request)
    }
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            Response::Loaded(items) => {
                w.u8(KIND_LOADED);
                w.len(items.len());
                for item in items {
                    match item {
                        Ok(item) => {
                            w.u8(0);
                            put_item(&mut w, item);
                        }
                        Err(e) => {
                            w.u8(1);
                            put_store_error(&mut w, e);
                        }
                    }
                }
            }
            Response::Ack(ack) => {
                w.u8(KIND_ACK);
                w.len(ack.splits.len());
                ack.splits.iter().for_each(|id| w.id(*id));
            }
            Response::Failed(e) => {
                w.u8(KIND_FAILED);
                put_store_error(&mut w, e);
            }
        }
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader(bytes);
        let response = match r.u8()? {
            KIND_LOADED => {
                let n = r.count(2)?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(match r.u8()? {
                        0 => Ok(get_item(&mut r)?),
                        1 => Err(get_store_error(&mut r)?),
                        _ => return Err(CodecError::Malformed("item status")),
                    });
                }
                Response::Loaded(items)
            }
            KIND_ACK => {
                let n = r.count(3)?;
                Response::Ack(Ack {
                    splits: (0..n).map(|_| r.id()).collect::<Result<_, _>>()?,
                })
            }
            KIND_FAILED => Response::Failed(get_store_error(&mut r)?),
            _ => return Err(CodecError::Malformed("response kind")),
        };
        r.finish()?;
        Ok(response)
    }
}

/// Writes `{u32 length}{body}` where `body` starts with the kind byte.
pub fn write_frame<W: Write>(out: &mut W, body: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|l| *l as usize <= MAX_FRAME)
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame too large"))?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(body)?;
    out.flush()
}

/// Reads one frame body; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(input: &mut R) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 || len > MAX_FRAME {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad frame length",
        ));
    }
    let mut body = vec![0u8; len];
    input.read_exact(&mut body)?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_update() -> UpdateMessage {
        UpdateMessage {
            tset: TsetWrite::Delete {
                stag: [1; 32],
                id_e: vec![9; 16],
                ind: [2; 32],
                ind_moved: [3; 32],
                stag_e: vec![7; 16],
                tail: [4; 32],
            },
            xset: XsetWrite::Filters(vec![
                FilterWrite::Split {
                    parent: SubFilterId::ROOT,
                    zero: vec![1, 2],
                    one: vec![],
                },
                FilterWrite::Replace {
                    id: SubFilterId::ROOT.child(1),
                    bytes: vec![5; 10],
                },
            ]),
            digest: Some(DigestWrite {
                key: [8; 32],
                group: 3,
                old: Some(BigUint::from(12345u32)),
                new: None,
            }),
        }
    }

    #[test]
    fn requests_round_trip() {
        let requests = [
            Request::Load(vec![
                LoadToken::PostingList(vec![[0; 32], [1; 32]]),
                LoadToken::SubFilter(SubFilterId::ROOT.child(0).child(1)),
                LoadToken::Stag([5; 32]),
                LoadToken::Ind([6; 32]),
                LoadToken::Digest([7; 32]),
            ]),
            Request::Update(sample_update()),
            Request::Update(UpdateMessage {
                tset: TsetWrite::Insert {
                    stag: [1; 32],
                    id_e: vec![1, 2, 3],
                    ind: [2; 32],
                    stag_e: vec![4],
                },
                xset: XsetWrite::Fingerprint {
                    fingerprint: 0xbeef,
                    mu: 77,
                },
                digest: None,
            }),
        ];
        for request in requests {
            assert_eq!(Request::decode(&request.encode()).unwrap(), request);
        }
    }

    #[test]
    fn responses_round_trip() {
        let responses = [
            Response::Loaded(vec![
                Ok(LoadItem::PostingList(vec![vec![1, 2], vec![]])),
                Ok(LoadItem::SubFilter(vec![0; 7])),
                Err(StoreError::NotFound(Table::Itset)),
                Ok(LoadItem::Digest(DigestProof {
                    group: 2,
                    digest: [3; 32],
                    witness: BigUint::from(99u8) << 300,
                })),
                Err(StoreError::Protocol("bad".into())),
            ]),
            Response::Ack(Ack {
                splits: vec![SubFilterId::ROOT, SubFilterId::ROOT.child(1)],
            }),
            Response::Failed(StoreError::Duplicate),
        ];
        for response in responses {
            assert_eq!(Response::decode(&response.encode()).unwrap(), response);
        }
    }

    #[test]
    fn truncated_and_garbage_inputs_are_rejected() {
        let bytes = Request::Update(sample_update()).encode();
        for cut in 0..bytes.len() {
            assert!(Request::decode(&bytes[..cut]).is_err());
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Request::decode(&extra).is_err());
        assert!(Response::decode(&[0x81, 0xff, 0xff, 0xff, 0xff]).is_err());
    }

    #[test]
    fn frames_carry_length_prefix() {
        let body = Request::Load(vec![LoadToken::Stag([0; 32])]).encode();
        let mut wire = Vec::new();
        write_frame(&mut wire, &body).unwrap();
        assert_eq!(&wire[..4], &(body.len() as u32).to_le_bytes());
        assert_eq!(wire[4], 0x01);
        let mut cursor = std::io::Cursor::new(wire);
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(body));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
    }

    #[test]
    fn protocol_names_parse() {
        for p in Protocol::ALL {
            assert_eq!(p.name().parse::<Protocol>().unwrap(), p);
        }
        assert!("pegraph".parse::<Protocol>().is_err());
    }
}
