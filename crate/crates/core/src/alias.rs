//! Exact-match mention table: mention string -> candidate entities with
//! training counts.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::text::nfc;

/// Where an alias entry came from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub training: bool,
    pub title: bool,
    pub redirect: bool,
    pub label_alias: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub entity: EntityId,
    /// Training occurrences; 0 for entries from titles, redirects or labels.
    pub count: u64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasTable {
    /// Lists sorted by count descending, then entity id.
    index: HashMap<String, Vec<AliasEntry>>,
}

/// One line of the table file.
#[derive(Debug, Serialize, Deserialize)]
struct TableLine {
    mention: String,
    candidates: Vec<(EntityId, u64)>,
}

enum Source {
    Training,
    Title,
    Redirect,
    Label,
}

#[derive(Default)]
struct Builder {
    index: BTreeMap<String, BTreeMap<EntityId, AliasEntry>>,
}

impl Builder {
    fn add(&mut self, mention: &str, entity: &EntityId, source: Source) {
        let entry = self
            .index
            .entry(nfc(mention))
            .or_default()
            .entry(entity.clone())
            .or_insert_with(|| AliasEntry {
                entity: entity.clone(),
                count: 0,
                provenance: Provenance::default(),
            });
        match source {
            Source::Training => {
                entry.count += 1;
                entry.provenance.training = true;
            }
            Source::Title => entry.provenance.title = true,
            Source::Redirect => entry.provenance.redirect = true,
            Source::Label => entry.provenance.label_alias = true,
        }
    }

    fn finish(self) -> AliasTable {
        let index = self
            .index
            .into_iter()
            .map(|(mention, entries)| {
                let mut list: Vec<AliasEntry> = entries.into_values().collect();
                sort_entries(&mut list);
                (mention, list)
            })
            .collect();
        AliasTable { index }
    }
}

fn sort_entries(list: &mut [AliasEntry]) {
    list.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.entity.cmp(&b.entity)));
}

impl AliasTable {
    /// Counts training mentions, then adds every KB title and redirect and
    /// every extra label with count 0 where the pair is not already present.
    pub fn build<'a>(
        training_mentions: impl IntoIterator<Item = (&'a str, &'a EntityId)>,
        kb: &KnowledgeBase,
        extra_labels: impl IntoIterator<Item = (&'a str, &'a EntityId)>,
    ) -> Result<AliasTable> {
        let mut b = Builder::default();
        for (mention, entity) in training_mentions {
            if !kb.contains(entity) {
                return Err(Error::UnknownEntity(entity.to_string()));
            }
            b.add(mention, entity, Source::Training);
        }
        for record in kb.entities() {
            for (_, name, is_redirect) in record.identifier_entries() {
                let source = if is_redirect {
                    Source::Redirect
                } else {
                    Source::Title
                };
                b.add(name, &record.id, source);
            }
        }
        for (label, entity) in extra_labels {
            if !kb.contains(entity) {
                return Err(Error::UnknownEntity(entity.to_string()));
            }
            b.add(label, entity, Source::Label);
        }
        Ok(b.finish())
    }

    /// Candidates for an exact (NFC) mention match, best first, optionally
    /// truncated to `top_k`.
    pub fn candidates(&self, mention: &str, top_k: Option<usize>) -> Vec<(EntityId, u64)> {
        let Some(list) = self.index.get(&nfc(mention)) else {
            return Vec::new();
        };
        let n = top_k.map_or(list.len(), |k| k.min(list.len()));
        list[..n]
            .iter()
            .map(|e| (e.entity.clone(), e.count))
            .collect()
    }

    pub fn entries(&self, mention: &str) -> &[AliasEntry] {
        self.index.get(&nfc(mention)).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// JSON lines `{"mention": ..., "candidates": [[qid, count], ...]}`,
    /// mentions in sorted order.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let mut mentions: Vec<&String> = self.index.keys().collect();
        mentions.sort();
        for mention in mentions {
            let line = TableLine {
                mention: mention.clone(),
                candidates: self.index[mention]
                    .iter()
                    .map(|e| (e.entity.clone(), e.count))
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("<alias table>", e))?;
        }
        Ok(())
    }

    /// Reads a table file. Provenance is not stored on disk; entries with a
    /// positive count are marked as training-derived.
    pub fn read_jsonl(reader: impl BufRead) -> Result<AliasTable> {
        let mut index = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<alias table>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TableLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: i + 1,
                reason: e.to_string(),
            })?;
            let mut list: Vec<AliasEntry> = parsed
                .candidates
                .into_iter()
                .map(|(entity, count)| AliasEntry {
                    entity,
                    count,
                    provenance: Provenance {
                        training: count > 0,
                        ..Provenance::default()
                    },
                })
                .collect();
            sort_entries(&mut list);
            list.dedup_by(|a, b| a.entity == b.entity);
            index.insert(nfc(&parsed.mention), list);
        }
        Ok(AliasTable { index })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<AliasTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        AliasTable::read_jsonl(std::io::BufReader::new(file))
    }
}
