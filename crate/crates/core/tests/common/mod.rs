#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use polylink::codec::{tokenize, TokenId, TokenSequence};
use polylink::kb::{EntityId, EntityRecord, LanguageCode};
use polylink::scorer::{LogDistribution, Scorer, ScorerInput};
use polylink::trie::{PayloadEntry, Trie};
use polylink::Result;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q(n: usize) -> EntityId {
    EntityId::new(format!("Q{n}")).unwrap()
}

pub fn lang(s: &str) -> LanguageCode {
    LanguageCode::new(s).unwrap()
}

pub fn input_for(mention: &str) -> ScorerInput {
    ScorerInput {
        context: tokenize(&format!("[START] {mention} [END]")),
        mention: tokenize(mention),
    }
}

/// Arbitrary but deterministic next-token distributions: logits drawn from
/// a generator seeded by the prefix.
pub struct HashScorer {
    vocab: Arc<[TokenId]>,
    seed: u64,
    spread: f64,
}

impl HashScorer {
    pub fn new(tokens: impl IntoIterator<Item = TokenId>, seed: u64, spread: f64) -> Self {
        let mut v: Vec<TokenId> = tokens.into_iter().chain([TokenId::EOS]).collect();
        v.sort();
        v.dedup();
        HashScorer { vocab: v.into(), seed, spread }
    }
}

impl Scorer for HashScorer {
    fn vocab(&self) -> &[TokenId] {
        &self.vocab
    }

    fn next_logprobs(&self, _: &ScorerInput, prefix: &[TokenId]) -> Result<LogDistribution> {
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        prefix.hash(&mut h);
        let mut r = ChaCha8Rng::seed_from_u64(h.finish());
        let logits: Vec<f64> = self
            .vocab
            .iter()
            .map(|_| r.gen_range(-self.spread..=self.spread))
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(LogDistribution::new(
            self.vocab.clone(),
            logits.into_iter().map(|l| l - z).collect(),
        ))
    }
}

/// Random strings over the first `alphabet` lowercase letters.
pub fn random_names(r: &mut impl Rng, count: usize, alphabet: u8, max_len: usize) -> Vec<String> {
    (0..count)
        .map(|_| {
            let len = r.gen_range(1..=max_len);
            (0..len)
                .map(|_| (b'a' + r.gen_range(0..alphabet)) as char)
                .collect()
        })
        .collect()
}

/// A trie whose i-th name belongs to entity `Q{i}`.
pub fn trie_of(names: &[String]) -> Trie {
    Trie::build(names.iter().enumerate().map(|(i, n)| {
        (
            tokenize(n),
            PayloadEntry {
                entity: q(i),
                lang: lang("en"),
                is_redirect: false,
            },
        )
    }))
    .unwrap()
}

pub fn distinct_sequences(names: &[String]) -> Vec<TokenSequence> {
    let set: BTreeSet<TokenSequence> = names.iter().map(|n| tokenize(n)).collect();
    set.into_iter().collect()
}

pub fn tokens_of(names: &[String]) -> BTreeSet<TokenId> {
    names.iter().flat_map(|n| tokenize(n)).collect()
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
pub const LANGUAGES: [&str; 6] = ["en", "de", "fr", "es", "it", "pt"];

fn word(r: &mut impl Rng, min: usize, max: usize) -> String {
    let syllables = r.gen_range(min..=max);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(r).unwrap());
        w.push_str(VOWELS.choose(r).unwrap());
    }
    let mut c = w.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

fn localize(base: &str, lang: &str) -> String {
    match lang {
        "en" => base.to_owned(),
        "de" => base.replace('a', "ä"),
        "fr" => format!("{base}e"),
        "es" => format!("{base}o"),
        "it" => format!("{base}i"),
        _ => base.replace('o', "ô"),
    }
}

#[derive(Clone, Debug)]
pub struct SynthEntity {
    pub id: EntityId,
    pub names: BTreeMap<String, String>,
    pub redirects: BTreeMap<String, Vec<String>>,
    pub counts: BTreeMap<String, u64>,
    pub classes: Vec<String>,
}

impl SynthEntity {
    fn all_strings(&self) -> impl Iterator<Item = &String> {
        self.names.values().chain(self.redirects.values().flatten())
    }

    pub fn record(&self) -> EntityRecord {
        let mut rec = EntityRecord::new(self.id.clone());
        for (l, n) in &self.names {
            rec = rec.with_name(l, n).unwrap();
        }
        for (l, rs) in &self.redirects {
            for n in rs {
                rec = rec.with_redirect(l, n).unwrap();
            }
        }
        for (l, c) in &self.counts {
            rec = rec.with_count(l, *c).unwrap();
        }
        rec
    }

    pub fn json_line(&self) -> String {
        serde_json::json!({
            "id": self.id.as_str(),
            "names": self.names,
            "redirects": self.redirects,
            "counts": self.counts,
            "classes": self.classes,
        })
        .to_string()
    }
}

/// Entities whose names and redirects are unique across the KB and never a
/// prefix of another entity's name, so an exact mention pins one entity.
pub fn synthetic_entities(r: &mut impl Rng, count: usize) -> Vec<SynthEntity> {
    let mut owner: BTreeMap<String, usize> = BTreeMap::new();
    let mut out: Vec<SynthEntity> = Vec::with_capacity(count);
    while out.len() < count {
        let i = out.len() + 1;
        let base = format!("{} {}", word(r, 2, 3), word(r, 2, 3));
        let n_langs = r.gen_range(1..=3);
        let langs: Vec<&str> = LANGUAGES.choose_multiple(r, n_langs).copied().collect();
        let names: BTreeMap<String, String> =
            langs.iter().map(|l| (l.to_string(), localize(&base, l))).collect();
        let mut redirects = BTreeMap::new();
        if r.gen_bool(0.2) {
            let l = langs[0];
            redirects.insert(l.to_string(), vec![format!("{} {}", word(r, 2, 2), word(r, 3, 3))]);
        }
        let counts = langs
            .iter()
            .map(|l| (l.to_string(), r.gen_range(0..1000)))
            .collect();
        let e = SynthEntity {
            id: q(i),
            names,
            redirects,
            counts,
            classes: Vec::new(),
        };
        if e.all_strings().all(|s| !conflicts(&owner, s, i)) {
            for s in e.all_strings() {
                owner.insert(s.clone(), i);
            }
            out.push(e);
        }
    }
    out
}

/// Would `s` collide with, extend, or be extended by another entity's string?
fn conflicts(owner: &BTreeMap<String, usize>, s: &str, me: usize) -> bool {
    let shorter = s
        .char_indices()
        .map(|(i, _)| &s[..i])
        .skip(1)
        .chain([s])
        .any(|p| owner.get(p).is_some_and(|&o| o != me));
    shorter
        || owner
            .range(s.to_owned()..)
            .take_while(|(t, _)| t.starts_with(s))
            .any(|(_, &o)| o != me)
}

pub fn context_words(r: &mut impl Rng) -> String {
    let n = r.gen_range(2..12);
    (0..n)
        .map(|_| word(r, 1, 3).to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).unwrap());
    for l in lines {
        writeln!(f, "{l}").unwrap();
    }
    f.flush().unwrap();
}
