//! Immutable token-level prefix tree over rendered identifiers.
//!
//! Nodes live in flat arrays in preorder, children sorted by token id. The
//! trie is built in one pass over the lexicographically sorted identifier
//! sequences, so the layout depends only on the inserted set, never on
//! insertion order, and two tries are structurally equal iff `==` says so.
//!
//! # File format
//!
//! ```text
//! magic    8 bytes  "PLNKTRIE"
//! version  u32 LE
//! varint   node_count
//! varint   name_count
//! varint   string_count, then each string as varint byte length + UTF-8
//! nodes    node_count records in preorder:
//!          varint label, varint child_count, varint payload_len,
//!          payload_len x (varint entity string, varint language string, u8 is_redirect)
//! ```
//!
//! Varints are unsigned LEB128. The string table is sorted and holds every
//! entity id and language code referenced by payloads.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codec::{render_tokens, RenderMode, TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, LanguageCode};

pub type NodeId = u32;

const NO_PAYLOAD: u32 = u32::MAX;
const MAGIC: &[u8; 8] = b"PLNKTRIE";
pub const FORMAT_VERSION: u32 = 1;

/// One entity reading of a complete identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub entity: EntityId,
    pub lang: LanguageCode,
    pub is_redirect: bool,
}

/// Entities reachable from a terminal node; never empty, sorted, unique.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TriePayload(Vec<PayloadEntry>);

impl TriePayload {
    pub fn entries(&self) -> &[PayloadEntry] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distinct entities, in id order.
    pub fn entities(&self) -> BTreeSet<&EntityId> {
        self.0.iter().map(|e| &e.entity).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trie {
    labels: Vec<TokenId>,
    child_start: Vec<u32>,
    children: Vec<NodeId>,
    payload_of: Vec<u32>,
    payloads: Vec<TriePayload>,
}

/// Summary emitted by `stats`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieStats {
    pub node_count: usize,
    pub name_count: usize,
    pub bytes: usize,
}

impl Trie {
    pub fn empty() -> Trie {
        Trie {
            labels: vec![TokenId::PAD],
            child_start: vec![0, 0],
            children: Vec::new(),
            payload_of: vec![NO_PAYLOAD],
            payloads: Vec::new(),
        }
    }

    /// Builds a trie from `(tokens, payload entry)` items. Identical token
    /// sequences merge their payloads.
    pub fn build(items: impl IntoIterator<Item = (TokenSequence, PayloadEntry)>) -> Result<Trie> {
        let mut items: Vec<(TokenSequence, PayloadEntry)> = items.into_iter().collect();
        for (seq, _) in &items {
            if seq.is_empty() {
                return Err(Error::EmptySequence);
            }
            if let Some(&t) = seq.iter().find(|t| t.is_reserved()) {
                return Err(Error::ReservedTokenInSequence(t));
            }
        }
        items.sort_unstable();
        items.dedup();

        let mut labels = vec![TokenId::PAD];
        let mut parents: Vec<NodeId> = vec![0];
        let mut payload_of = vec![NO_PAYLOAD];
        let mut payloads: Vec<TriePayload> = Vec::new();
        // path[d] is the node reached after d tokens of the previous sequence
        let mut path: Vec<NodeId> = vec![0];
        let mut prev: &[TokenId] = &[];

        let mut i = 0;
        while i < items.len() {
            let seq = &items[i].0;
            let mut j = i;
            while j < items.len() && items[j].0 == *seq {
                j += 1;
            }
            let shared = seq.iter().zip(prev).take_while(|(a, b)| a == b).count();
            path.truncate(shared + 1);
            for &token in &seq[shared..] {
                let id = labels.len() as NodeId;
                labels.push(token);
                parents.push(*path.last().expect("root on path"));
                payload_of.push(NO_PAYLOAD);
                path.push(id);
            }
            let terminal = *path.last().expect("non-empty sequence") as usize;
            payload_of[terminal] = payloads.len() as u32;
            payloads.push(TriePayload(
                items[i..j].iter().map(|(_, e)| e.clone()).collect(),
            ));
            prev = seq;
            i = j;
        }

        let (child_start, children) = link_children(&parents);
        Ok(Trie {
            labels,
            child_start,
            children,
            payload_of,
            payloads,
        })
    }

    /// Trie over the identifiers of every entity in `kb`.
    pub fn from_kb(kb: &KnowledgeBase, mode: RenderMode, include_redirects: bool) -> Result<Trie> {
        let mut items = Vec::new();
        for record in kb.entities() {
            push_identifiers(&mut items, record, mode, include_redirects)?;
        }
        Trie::build(items)
    }

    /// Trie over all identifiers (every language, redirects included) of
    /// the candidate entities only.
    pub fn restrict<'a>(
        kb: &KnowledgeBase,
        candidates: impl IntoIterator<Item = &'a EntityId>,
        mode: RenderMode,
    ) -> Result<Trie> {
        let mut items = Vec::new();
        for id in candidates {
            push_identifiers(&mut items, kb.get(id)?, mode, true)?;
        }
        Trie::build(items)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn name_count(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (TokenId, NodeId)> + '_ {
        let (lo, hi) = self.child_range(node);
        self.children[lo..hi]
            .iter()
            .map(|&c| (self.labels[c as usize], c))
    }

    fn child_range(&self, node: NodeId) -> (usize, usize) {
        let n = node as usize;
        (self.child_start[n] as usize, self.child_start[n + 1] as usize)
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let (lo, hi) = self.child_range(node);
        let kids = &self.children[lo..hi];
        kids.binary_search_by(|&c| self.labels[c as usize].cmp(&token))
            .ok()
            .map(|i| kids[i])
    }

    pub fn walk(&self, prefix: &[TokenId]) -> Option<NodeId> {
        prefix
            .iter()
            .try_fold(self.root(), |node, &t| self.child(node, t))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.payload_of[node as usize] != NO_PAYLOAD
    }

    pub fn payload_at(&self, node: NodeId) -> Option<&TriePayload> {
        match self.payload_of[node as usize] {
            NO_PAYLOAD => None,
            p => Some(&self.payloads[p as usize]),
        }
    }

    /// Tokens that may follow at `node`: EOS when the node completes an
    /// identifier, then the child labels in ascending order.
    pub fn allowed_at(&self, node: NodeId) -> Vec<TokenId> {
        let mut out = Vec::new();
        if self.is_terminal(node) {
            out.push(TokenId::EOS);
        }
        out.extend(self.children(node).map(|(t, _)| t));
        out
    }

    /// Tokens that may follow `prefix`; empty when the prefix leaves the trie.
    pub fn allowed_next(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        self.walk(prefix)
            .map(|n| self.allowed_at(n))
            .unwrap_or_default()
    }

    pub fn payload(&self, seq: &[TokenId]) -> Result<&TriePayload> {
        self.walk(seq)
            .and_then(|n| self.payload_at(n))
            .ok_or(Error::NotAnIdentifier)
    }

    /// Every complete identifier with its payload, in lexicographic order.
    pub fn identifiers(&self) -> Vec<(TokenSequence, &TriePayload)> {
        let mut out = Vec::with_capacity(self.name_count());
        let mut path = Vec::new();
        self.collect(self.root(), &mut path, &mut out);
        out
    }

    fn collect<'a>(
        &'a self,
        node: NodeId,
        path: &mut TokenSequence,
        out: &mut Vec<(TokenSequence, &'a TriePayload)>,
    ) {
        if let Some(p) = self.payload_at(node) {
            out.push((path.clone(), p));
        }
        for (t, c) in self.children(node) {
            path.push(t);
            self.collect(c, path, out);
            path.pop();
        }
    }

    pub fn stats(&self) -> TrieStats {
        TrieStats {
            node_count: self.node_count(),
            name_count: self.name_count(),
            bytes: self.serialize().len(),
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let strings: BTreeSet<&str> = self
            .payloads
            .iter()
            .flat_map(|p| p.0.iter())
            .flat_map(|e| [e.entity.as_str(), e.lang.as_str()])
            .collect();
        let index: BTreeMap<&str, u64> = strings
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u64))
            .collect();

        let mut out = Vec::with_capacity(16 + self.labels.len() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_varint(&mut out, self.node_count() as u64);
        put_varint(&mut out, self.name_count() as u64);
        put_varint(&mut out, strings.len() as u64);
        for s in &strings {
            put_varint(&mut out, s.len() as u64);
            out.extend_from_slice(s.as_bytes());
        }
        // Node ids are already preorder.
        for node in 0..self.node_count() {
            let (lo, hi) = self.child_range(node as NodeId);
            put_varint(&mut out, self.labels[node].0 as u64);
            put_varint(&mut out, (hi - lo) as u64);
            match self.payload_at(node as NodeId) {
                None => put_varint(&mut out, 0),
                Some(p) => {
                    put_varint(&mut out, p.len() as u64);
                    for e in p.entries() {
                        put_varint(&mut out, index[e.entity.as_str()]);
                        put_varint(&mut out, index[e.lang.as_str()]);
                        out.push(e.is_redirect as u8);
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.serialize()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Trie> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Trie::deserialize(&bytes)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Trie> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::BadMagic("trie"));
        }
        r.pos = 8;
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                what: "trie",
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let node_count = r.count("node count")?;
        let name_count = r.count("name count")?;
        if node_count == 0 {
            return Err(r.corrupt("trie has no root node"));
        }
        let string_count = r.count("string count")?;
        let mut strings = Vec::with_capacity(string_count);
        for _ in 0..string_count {
            let len = r.count("string length")?;
            let at = r.pos;
            let s = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::CorruptTrieFile {
                    offset: at,
                    reason: "string is not UTF-8".into(),
                })?;
            strings.push(s);
        }

        let mut labels = Vec::with_capacity(node_count);
        let mut parents = Vec::with_capacity(node_count);
        let mut payload_of = Vec::with_capacity(node_count);
        let mut payloads = Vec::with_capacity(name_count);
        // (node, children still expected, last child label)
        let mut stack: Vec<(NodeId, u64, Option<TokenId>)> = Vec::new();
        for node in 0..node_count {
            let at = r.pos;
            let label = r.varint()?;
            let label = u32::try_from(label)
                .map(TokenId)
                .map_err(|_| r.corrupt_at(at, "label out of range"))?;
            let child_count = r.varint()?;
            let payload_len = r.count("payload length")?;

            if node == 0 {
                parents.push(0);
            } else {
                while matches!(stack.last(), Some((_, 0, _))) {
                    stack.pop();
                }
                let Some(top) = stack.last_mut() else {
                    return Err(r.corrupt_at(at, "node has no parent"));
                };
                if label.is_reserved() {
                    return Err(r.corrupt_at(at, "reserved token on an edge"));
                }
                if top.2.is_some_and(|prev| prev >= label) {
                    return Err(r.corrupt_at(at, "children not strictly sorted"));
                }
                top.1 -= 1;
                top.2 = Some(label);
                parents.push(top.0);
            }
            labels.push(label);

            if payload_len == 0 {
                if child_count == 0 && node != 0 {
                    return Err(r.corrupt_at(at, "leaf node without payload"));
                }
                payload_of.push(NO_PAYLOAD);
            } else {
                if node == 0 {
                    return Err(r.corrupt_at(at, "root cannot be terminal"));
                }
                let mut entries = Vec::with_capacity(payload_len);
                for _ in 0..payload_len {
                    let at = r.pos;
                    let entity = r.string(&strings)?;
                    let lang = r.string(&strings)?;
                    let flag = r.take(1)?[0];
                    let entry = PayloadEntry {
                        entity: EntityId::new(entity).map_err(|e| r.corrupt_at(at, &e.to_string()))?,
                        lang: LanguageCode::new(lang).map_err(|e| r.corrupt_at(at, &e.to_string()))?,
                        is_redirect: match flag {
                            0 => false,
                            1 => true,
                            _ => return Err(r.corrupt_at(at, "bad redirect flag")),
                        },
                    };
                    if entries.last().is_some_and(|prev| *prev >= entry) {
                        return Err(r.corrupt_at(at, "payload entries not strictly sorted"));
                    }
                    entries.push(entry);
                }
                payload_of.push(payloads.len() as u32);
                payloads.push(TriePayload(entries));
            }
            stack.push((node as NodeId, child_count, None));
        }
        if stack.iter().any(|(_, left, _)| *left != 0) {
            return Err(r.corrupt("truncated node list"));
        }
        if payloads.len() != name_count {
            return Err(r.corrupt("name count does not match terminal nodes"));
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt("trailing bytes"));
        }
        let (child_start, children) = link_children(&parents);
        Ok(Trie {
            labels,
            child_start,
            children,
            payload_of,
            payloads,
        })
    }
}

fn push_identifiers(
    items: &mut Vec<(TokenSequence, PayloadEntry)>,
    record: &crate::kb::EntityRecord,
    mode: RenderMode,
    include_redirects: bool,
) -> Result<()> {
    for (lang, name, is_redirect) in record.identifier_entries() {
        if is_redirect && !include_redirects {
            continue;
        }
        items.push((
            render_tokens(lang, name, mode)?,
            PayloadEntry {
                entity: record.id.clone(),
                lang: lang.clone(),
                is_redirect,
            },
        ));
    }
    Ok(())
}

/// CSR child lists from a preorder parent array (`parents[0]` is the root's
/// own placeholder). Preorder guarantees siblings appear in label order.
fn link_children(parents: &[NodeId]) -> (Vec<u32>, Vec<NodeId>) {
    let n = parents.len();
    let mut start = vec![0u32; n + 1];
    for &p in &parents[1..] {
        start[p as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut children = vec![0; n.saturating_sub(1)];
    for (node, &p) in parents.iter().enumerate().skip(1) {
        children[fill[p as usize] as usize] = node as NodeId;
        fill[p as usize] += 1;
    }
    (start, children)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> Error {
        self.corrupt_at(self.pos, reason)
    }

    fn corrupt_at(&self, offset: usize, reason: &str) -> Error {
        Error::CorruptTrieFile {
            offset,
            reason: reason.to_owned(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64> {
        let start = self.pos;
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(self.corrupt_at(start, "varint overflow"))
    }

    /// A varint used as a length; bounded by the remaining input so corrupt
    /// counts cannot trigger huge allocations.
    fn count(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.varint()?;
        if v > (self.bytes.len() - self.pos) as u64 + 1 {
            return Err(self.corrupt_at(at, &format!("{what} exceeds remaining input")));
        }
        Ok(v as usize)
    }

    fn string(&mut self, table: &[&'a str]) -> Result<&'a str> {
        let at = self.pos;
        let i = self.varint()?;
        table
            .get(i as usize)
            .copied()
            .ok_or_else(|| self.corrupt_at(at, "string index out of range"))
    }
}
