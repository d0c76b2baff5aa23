//! Mention datasets: TSV loading, hyperlink alignment, input markup with
//! context truncation, and scorer training pairs.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{render_tokens, tokenize, RenderMode};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, LanguageCode};
use crate::scorer::{ScorerInput, TrainingPair};
use crate::text::nfc;

pub const START_MARKER: &str = "[START]";
pub const END_MARKER: &str = "[END]";
pub const DEFAULT_MAX_INPUT_TOKENS: usize = 128;
/// Alternative languages sampled when the gold entity has no name in the
/// source language.
pub const ALTERNATIVE_LANGUAGES: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionInstance {
    pub lang: LanguageCode,
    pub left: String,
    pub mention: String,
    pub right: String,
    pub gold: Option<EntityId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawHyperlink {
    pub lang: LanguageCode,
    pub left: String,
    pub mention: String,
    pub right: String,
    pub target_title: String,
}

fn split_fields(line: &str, line_no: usize, min: usize, max: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < min || fields.len() > max {
        return Err(Error::MalformedLine {
            line: line_no,
            reason: format!("expected {min}-{max} tab-separated fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_lang(s: &str, line_no: usize) -> Result<LanguageCode> {
    LanguageCode::new(s).map_err(|e| Error::MalformedLine {
        line: line_no,
        reason: e.to_string(),
    })
}

fn read_lines<T>(
    reader: impl BufRead,
    mut parse: impl FnMut(&str, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        out.push(parse(line, i + 1)?);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Mentions TSV: `lang, left, mention, right, gold` (gold may be empty or
/// absent). No header.
pub fn parse_mentions(reader: impl BufRead) -> Result<Vec<MentionInstance>> {
    read_lines(reader, |line, n| {
        let f = split_fields(line, n, 4, 5)?;
        let mention = nfc(f[2]);
        if mention.is_empty() {
            return Err(Error::MalformedLine {
                line: n,
                reason: "empty mention".into(),
            });
        }
        let gold = match f.get(4).map(|g| g.trim()) {
            None | Some("") => None,
            Some(g) => Some(EntityId::new(g).map_err(|e| Error::MalformedLine {
                line: n,
                reason: e.to_string(),
            })?),
        };
        Ok(MentionInstance {
            lang: parse_lang(f[0], n)?,
            left: nfc(f[1]),
            mention,
            right: nfc(f[3]),
            gold,
        })
    })
}

pub fn load_mentions(path: &Path) -> Result<Vec<MentionInstance>> {
    parse_mentions(open(path)?)
}

/// Writes instances in the mentions TSV layout read by [`parse_mentions`].
pub fn write_mentions(mut out: impl std::io::Write, insts: &[MentionInstance]) -> Result<()> {
    for m in insts {
        let gold = m.gold.as_ref().map_or("", |g| g.as_str());
        writeln!(out, "{}\t{}\t{}\t{}\t{}", m.lang, m.left, m.mention, m.right, gold)
            .map_err(|e| Error::io("<mentions>", e))?;
    }
    Ok(())
}

/// Hyperlink TSV: `lang, left, mention, right, target_title`.
pub fn parse_hyperlinks(reader: impl BufRead) -> Result<Vec<RawHyperlink>> {
    read_lines(reader, |line, n| {
        let f = split_fields(line, n, 5, 5)?;
        let (mention, target_title) = (nfc(f[2]), nfc(f[4]));
        if mention.is_empty() || target_title.is_empty() {
            return Err(Error::MalformedLine {
                line: n,
                reason: "empty mention or target title".into(),
            });
        }
        Ok(RawHyperlink {
            lang: parse_lang(f[0], n)?,
            left: nfc(f[1]),
            mention,
            right: nfc(f[3]),
            target_title,
        })
    })
}

pub fn load_hyperlinks(path: &Path) -> Result<Vec<RawHyperlink>> {
    parse_hyperlinks(open(path)?)
}

pub type RedirectMap = HashMap<(LanguageCode, String), String>;

/// Redirect TSV: `lang, from_title, to_title`.
pub fn parse_redirects(reader: impl BufRead) -> Result<RedirectMap> {
    let rows = read_lines(reader, |line, n| {
        let f = split_fields(line, n, 3, 3)?;
        Ok(((parse_lang(f[0], n)?, nfc(f[1])), nfc(f[2])))
    })?;
    Ok(rows.into_iter().collect())
}

pub fn load_redirects(path: &Path) -> Result<RedirectMap> {
    parse_redirects(open(path)?)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub direct: usize,
    pub redirect: usize,
    pub label_search: usize,
    pub ambiguous: usize,
    pub unmatched: usize,
}

impl AlignmentStats {
    pub fn aligned(&self) -> usize {
        self.direct + self.redirect + self.label_search
    }
}

/// Maps hyperlinks to KB entities: the link target as a title in the link's
/// language, then through the redirect table, then as a name in any
/// language. Only unambiguous alignments are kept.
pub fn align_hyperlinks(
    links: impl IntoIterator<Item = RawHyperlink>,
    kb: &KnowledgeBase,
    redirects: &RedirectMap,
) -> (Vec<MentionInstance>, AlignmentStats) {
    let mut stats = AlignmentStats::default();
    let mut out = Vec::new();
    for link in links {
        let gold = if let Some(id) = kb.title_owner(&link.target_title, &link.lang) {
            stats.direct += 1;
            Some(id.clone())
        } else if let Some(id) = redirects
            .get(&(link.lang.clone(), link.target_title.clone()))
            .map(|to| kb.resolve(to, Some(&link.lang)))
            .filter(|ids| ids.len() == 1)
            .and_then(|ids| ids.into_iter().next())
        {
            stats.redirect += 1;
            Some(id)
        } else {
            let ids = kb.resolve(&link.target_title, None);
            match ids.len() {
                0 => {
                    stats.unmatched += 1;
                    None
                }
                1 => {
                    stats.label_search += 1;
                    ids.into_iter().next()
                }
                _ => {
                    stats.ambiguous += 1;
                    None
                }
            }
        };
        if let Some(gold) = gold {
            out.push(MentionInstance {
                lang: link.lang,
                left: link.left,
                mention: link.mention,
                right: link.right,
                gold: Some(gold),
            });
        }
    }
    (out, stats)
}

/// Marks up `left [START] mention [END] right` and tokenizes it, trimming
/// context from the outer ends, alternately left then right, until at most
/// `max_tokens` remain. The mention and markers are never trimmed.
pub fn build_input(inst: &MentionInstance, max_tokens: usize) -> Result<ScorerInput> {
    let mention = tokenize(&inst.mention);
    let core = tokenize(&format!("{START_MARKER} {} {END_MARKER}", inst.mention));
    if core.len() > max_tokens {
        return Err(Error::MentionTooLong {
            needed: core.len(),
            budget: max_tokens,
        });
    }
    let left = tokenize(&inst.left);
    let right = tokenize(&inst.right);
    // Each non-empty side also costs its joining space.
    let side = |n: usize| if n == 0 { 0 } else { n + 1 };
    let (mut lo, mut hi) = (0, right.len());
    let mut left_turn = true;
    while core.len() + side(left.len() - lo) + side(hi) > max_tokens {
        if (left_turn && lo < left.len()) || hi == 0 {
            lo += 1;
        } else {
            hi -= 1;
        }
        left_turn = !left_turn;
    }

    let space = tokenize(" ");
    let mut context = Vec::with_capacity(max_tokens);
    if lo < left.len() {
        context.extend_from_slice(&left[lo..]);
        context.extend_from_slice(&space);
    }
    context.extend_from_slice(&core);
    if hi > 0 {
        context.extend_from_slice(&space);
        context.extend_from_slice(&right[..hi]);
    }
    Ok(ScorerInput { context, mention })
}

/// Decoder targets for scorer training.
///
/// With language-qualified rendering the target is the gold entity's name in
/// the mention's language; when it has none, up to five other languages are
/// sampled (seeded) and each yields a pair. Canonical rendering always
/// targets the entity's canonical name.
pub fn training_pairs<'a>(
    insts: impl IntoIterator<Item = &'a MentionInstance>,
    kb: &KnowledgeBase,
    mode: RenderMode,
    seed: u64,
    max_tokens: usize,
) -> Result<Vec<TrainingPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, inst) in insts.into_iter().enumerate() {
        let gold = inst.gold.as_ref().ok_or(Error::MissingGold(i + 1))?;
        let record = kb.get(gold)?;
        if record.names.is_empty() {
            return Err(Error::EntityHasNoNames(gold.to_string()));
        }
        let targets: Vec<(LanguageCode, &str)> = if mode == RenderMode::Canonical {
            let (lang, _) = kb.canonical_name(gold)?;
            vec![(lang.clone(), record.names[&lang].as_str())]
        } else if let Some(name) = record.names.get(&inst.lang) {
            vec![(inst.lang.clone(), name.as_str())]
        } else {
            let langs: Vec<&LanguageCode> = record.names.keys().collect();
            let n = ALTERNATIVE_LANGUAGES.min(langs.len());
            let mut picked: Vec<&LanguageCode> =
                langs.choose_multiple(&mut rng, n).copied().collect();
            picked.sort();
            picked
                .into_iter()
                .map(|l| (l.clone(), record.names[l].as_str()))
                .collect()
        };
        let input = build_input(inst, max_tokens)?;
        for (lang, name) in targets {
            out.push(TrainingPair {
                input: input.clone(),
                target: render_tokens(&lang, name, mode)?,
            });
        }
    }
    Ok(out)
}
