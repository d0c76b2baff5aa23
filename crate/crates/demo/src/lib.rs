//! Browser demo over a toy multilingual KB: link a mention, walk the prefix
//! trie one token at a time, and try the marginalization arithmetic.
//!
//! The `wasm_bindgen` exports take plain values and return JSON strings; the
//! logic lives in [`Linker`] and [`marginalize`] so it can be tested natively.

use std::collections::BTreeSet;

use polylink::alias::AliasTable;
use polylink::codec::{detokenize, tokenize, RenderMode, TokenId, SEPARATOR};
use polylink::corpus::{parse_mentions, training_pairs, MentionInstance, DEFAULT_MAX_INPUT_TOKENS};
use polylink::decoder::{ranked_score, BeamConfig};
use polylink::kb::{default_class_filter, ingest_kb, parse_kb_jsonl, KnowledgeBase, LanguageCode};
use polylink::ranker::{link, logsumexp, LinkConfig};
use polylink::scorer::ReferenceScorer;
use polylink::trie::Trie;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const KB_JSONL: &str = include_str!("../data/kb.jsonl");
const TRAIN_TSV: &str = include_str!("../data/train.tsv");
const MODE: RenderMode = RenderMode::NameFirst;
const SEED: u64 = 17;
const LAMBDA_COPY: f64 = 0.7;
const ADD_K: f64 = 1.0;

#[derive(Debug, Serialize)]
pub struct IdentifierView {
    pub identifier: String,
    pub logprob: f64,
    pub length: usize,
}

#[derive(Debug, Serialize)]
pub struct EntityView {
    pub qid: String,
    pub label: String,
    pub score: f64,
    pub identifiers: Vec<IdentifierView>,
}

#[derive(Debug, Serialize)]
pub struct LinkView {
    pub prediction: String,
    pub label: String,
    pub candidate_count: usize,
    pub restricted: bool,
    pub ranking: Vec<EntityView>,
}

#[derive(Debug, Serialize)]
pub struct NextToken {
    /// The character, or `EOS` when the prefix is itself an identifier.
    pub symbol: String,
    /// Identifiers reachable through this token.
    pub reachable: usize,
}

#[derive(Debug, Serialize)]
pub struct Completion {
    pub qid: String,
    pub lang: String,
    pub redirect: bool,
}

#[derive(Debug, Serialize)]
pub struct TrieView {
    pub prefix: String,
    pub in_trie: bool,
    pub next: Vec<NextToken>,
    pub completes: Vec<Completion>,
}

#[derive(Debug, PartialEq, Serialize)]
pub struct MarginView {
    /// `logprob / length^alpha` per identifier.
    pub normalized: Vec<f64>,
    pub marginal: f64,
    pub best_single: f64,
}

pub struct Linker {
    kb: KnowledgeBase,
    trie: Trie,
    alias: AliasTable,
    scorer: ReferenceScorer,
    identifiers: Vec<Vec<TokenId>>,
}

impl Linker {
    /// Builds the KB, trie, alias table and scorer from the bundled data.
    pub fn new() -> Result<Linker, String> {
        let source = parse_kb_jsonl(KB_JSONL.as_bytes()).map_err(|e| e.to_string())?;
        let kb = ingest_kb(source.records, &default_class_filter(), &source.class_memberships)
            .map_err(|e| e.to_string())?;
        let trie = Trie::from_kb(&kb, MODE, true).map_err(|e| e.to_string())?;
        let train = parse_mentions(TRAIN_TSV.as_bytes()).map_err(|e| e.to_string())?;
        let alias = AliasTable::build(
            train
                .iter()
                .filter_map(|m| m.gold.as_ref().map(|g| (m.mention.as_str(), g))),
            &kb,
            std::iter::empty(),
        )
        .map_err(|e| e.to_string())?;
        let pairs = training_pairs(&train, &kb, MODE, SEED, DEFAULT_MAX_INPUT_TOKENS)
            .map_err(|e| e.to_string())?;
        let mut scorer =
            ReferenceScorer::train(&pairs, LAMBDA_COPY, ADD_K).map_err(|e| e.to_string())?;
        let identifiers: Vec<Vec<TokenId>> =
            trie.identifiers().into_iter().map(|(seq, _)| seq).collect();
        let mut vocab: BTreeSet<TokenId> = tokenize(SEPARATOR).into_iter().collect();
        vocab.extend(identifiers.iter().flatten().copied());
        scorer.extend_vocab(vocab);
        Ok(Linker {
            kb,
            trie,
            alias,
            scorer,
            identifiers,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.kb.len()
    }

    pub fn identifier_count(&self) -> usize {
        self.identifiers.len()
    }

    fn label(&self, id: &polylink::kb::EntityId) -> String {
        self.kb
            .canonical_name(id)
            .map(|(_, name)| name)
            .unwrap_or_default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn link(
        &self,
        lang: &str,
        left: &str,
        mention: &str,
        right: &str,
        beams: usize,
        alpha: f64,
        marginalize: bool,
        candidates: bool,
    ) -> Result<LinkView, String> {
        let inst = MentionInstance {
            lang: LanguageCode::new(lang).map_err(|e| e.to_string())?,
            left: left.to_owned(),
            mention: mention.trim().to_owned(),
            right: right.to_owned(),
            gold: None,
        };
        if inst.mention.is_empty() {
            return Err("mention is empty".into());
        }
        let cfg = LinkConfig {
            mode: MODE,
            use_candidates: candidates,
            use_marginalization: marginalize,
            alpha,
            beam: BeamConfig {
                beams,
                ..BeamConfig::default()
            },
            ..LinkConfig::default()
        };
        let out = link(&inst, &self.kb, &self.trie, Some(&self.alias), &self.scorer, &cfg)
            .map_err(|e| e.to_string())?;
        let ranking = out
            .ranking
            .into_iter()
            .map(|s| EntityView {
                qid: s.entity.to_string(),
                label: self.label(&s.entity),
                score: s.score,
                identifiers: s
                    .supporting
                    .into_iter()
                    .map(|i| IdentifierView {
                        identifier: i.identifier,
                        logprob: i.logprob,
                        length: i.length,
                    })
                    .collect(),
            })
            .collect();
        Ok(LinkView {
            prediction: out.prediction.to_string(),
            label: self.label(&out.prediction),
            candidate_count: out.candidate_count,
            restricted: out.restricted,
            ranking,
        })
    }

    /// Allowed next tokens after `prefix`, and the entities it completes.
    pub fn explore(&self, prefix: &str) -> TrieView {
        let tokens = tokenize(prefix);
        let Some(node) = self.trie.walk(&tokens) else {
            return TrieView {
                prefix: prefix.to_owned(),
                in_trie: false,
                next: Vec::new(),
                completes: Vec::new(),
            };
        };
        let next = self
            .trie
            .allowed_at(node)
            .into_iter()
            .map(|t| {
                if t == TokenId::EOS {
                    NextToken {
                        symbol: "EOS".into(),
                        reachable: 1,
                    }
                } else {
                    let mut extended = tokens.clone();
                    extended.push(t);
                    NextToken {
                        symbol: detokenize(&[t]).unwrap_or_default(),
                        reachable: self
                            .identifiers
                            .iter()
                            .filter(|id| id.starts_with(&extended))
                            .count(),
                    }
                }
            })
            .collect();
        let completes = self
            .trie
            .payload_at(node)
            .map(|p| {
                p.entries()
                    .iter()
                    .map(|e| Completion {
                        qid: e.entity.to_string(),
                        lang: e.lang.to_string(),
                        redirect: e.is_redirect,
                    })
                    .collect()
            })
            .unwrap_or_default();
        TrieView {
            prefix: prefix.to_owned(),
            in_trie: true,
            next,
            completes,
        }
    }
}

/// Marginal score of one entity from its identifiers' `(logprob, length)`.
pub fn marginalize(terms: &[(f64, usize)], alpha: f64) -> Result<MarginView, String> {
    if terms.is_empty() {
        return Err("enter at least one identifier".into());
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(format!("alpha must be finite and >= 0, got {alpha}"));
    }
    for &(lp, len) in terms {
        if lp > 0.0 || lp.is_nan() {
            return Err(format!("log-probabilities must be <= 0, got {lp}"));
        }
        if len == 0 {
            return Err("lengths must be at least 1".into());
        }
    }
    let normalized: Vec<f64> = terms
        .iter()
        .map(|&(lp, len)| ranked_score(lp, len, alpha))
        .collect();
    Ok(MarginView {
        marginal: logsumexp(&normalized),
        best_single: normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        normalized,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    linker: Linker,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Linker::new()
            .map(|linker| Demo { linker })
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = entityCount)]
    pub fn entity_count(&self) -> usize {
        self.linker.entity_count()
    }

    #[wasm_bindgen(js_name = identifierCount)]
    pub fn identifier_count(&self) -> usize {
        self.linker.identifier_count()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn link(
        &self,
        lang: &str,
        left: &str,
        mention: &str,
        right: &str,
        beams: usize,
        alpha: f64,
        marginalize: bool,
        candidates: bool,
    ) -> Result<String, JsError> {
        let view = self
            .linker
            .link(lang, left, mention, right, beams, alpha, marginalize, candidates)
            .map_err(|e| JsError::new(&e))?;
        to_json(&view)
    }

    pub fn explore(&self, prefix: &str) -> Result<String, JsError> {
        to_json(&self.linker.explore(prefix))
    }
}

/// `logprobs` and `lengths` are parallel arrays, one entry per identifier.
#[wasm_bindgen(js_name = marginalize)]
pub fn marginalize_js(logprobs: &[f64], lengths: &[u32], alpha: f64) -> Result<String, JsError> {
    if logprobs.len() != lengths.len() {
        return Err(JsError::new("every identifier needs a log-probability and a length"));
    }
    let terms: Vec<(f64, usize)> = logprobs
        .iter()
        .zip(lengths)
        .map(|(&lp, &len)| (lp, len as usize))
        .collect();
    let view = marginalize(&terms, alpha).map_err(|e| JsError::new(&e))?;
    to_json(&view)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linker() -> Linker {
        Linker::new().unwrap()
    }

    #[test]
    fn bundled_data_builds() {
        let l = linker();
        // the category entity is filtered out
        assert_eq!(l.entity_count(), 13);
        assert!(l.identifier_count() > 40);
    }

    #[test]
    fn links_training_like_mentions() {
        let l = linker();
        for (lang, left, mention, right, want) in [
            ("fr", "je vais à", "Paris", "demain", "Q90"),
            ("ja", "首都は", "東京", "です", "Q1490"),
            ("de", "die Mauer in", "Berlin", "", "Q64"),
        ] {
            for marginalize in [false, true] {
                for candidates in [false, true] {
                    let v = l
                        .link(lang, left, mention, right, 10, 0.5, marginalize, candidates)
                        .unwrap();
                    assert_eq!(v.prediction, want, "{mention} m={marginalize} c={candidates}");
                    assert_eq!(v.ranking[0].qid, want);
                }
            }
        }
    }

    #[test]
    fn marginalization_can_favor_many_languages() {
        let l = linker();
        let plain = l.link("en", "a photo of", "Paris Hilton", "", 10, 0.5, false, false).unwrap();
        assert_eq!(plain.prediction, "Q47899");
        // five spellings of the city outweigh one of the person
        let marg = l.link("en", "a photo of", "Paris Hilton", "", 10, 0.5, true, false).unwrap();
        assert_eq!(marg.prediction, "Q90");
        assert!(marg.ranking[0].identifiers.len() > 1);
        let both = l.link("en", "a photo of", "Paris Hilton", "", 10, 0.5, true, true).unwrap();
        assert_eq!(both.prediction, "Q47899");
        assert!(both.restricted);
    }

    #[test]
    fn candidates_restrict_the_ranking() {
        let l = linker();
        let v = l.link("en", "", "Amazon", "", 10, 0.5, false, true).unwrap();
        assert!(v.restricted);
        assert!(v.candidate_count >= 1);
        let allowed = ["Q3884", "Q8331"];
        assert!(v.ranking.iter().all(|e| allowed.contains(&e.qid.as_str())));
        // an unseen mention falls back to the full trie
        let v = l.link("en", "", "Gotham", "", 10, 0.5, false, true).unwrap();
        assert!(!v.restricted);
        assert_eq!(v.candidate_count, 0);
    }

    #[test]
    fn marginal_scores_aggregate_supporting_identifiers() {
        let l = linker();
        let v = l.link("en", "", "Paris", "", 10, 0.5, true, false).unwrap();
        for e in &v.ranking {
            let terms: Vec<(f64, usize)> =
                e.identifiers.iter().map(|i| (i.logprob, i.length)).collect();
            let m = marginalize(&terms, 0.5).unwrap();
            assert!((m.marginal - e.score).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs_are_reported() {
        let l = linker();
        assert!(l.link("EN", "", "Paris", "", 10, 0.5, false, false).is_err());
        assert!(l.link("en", "", "  ", "", 10, 0.5, false, false).is_err());
        assert!(l.link("en", "", "Paris", "", 0, 0.5, false, false).is_err());
        assert!(l.link("en", "", "Paris", "", 10, -1.0, true, false).is_err());
    }

    #[test]
    fn explorer_walks_the_trie() {
        let l = linker();
        let root = l.explore("");
        assert!(root.in_trie);
        let total: usize = root.next.iter().map(|n| n.reachable).sum();
        assert_eq!(total, l.identifier_count());

        let v = l.explore("Paris >> ");
        let symbols: Vec<&str> = v.next.iter().map(|n| n.symbol.as_str()).collect();
        assert_eq!(symbols, ["d", "e", "f"]);
        let v = l.explore("Paris >> fr");
        assert_eq!(v.next[0].symbol, "EOS");
        assert_eq!(v.completes.len(), 1);
        assert_eq!(v.completes[0].qid, "Q90");

        let v = l.explore("Ville Lumière >> fr");
        assert!(v.completes[0].redirect);
        assert!(!l.explore("Zzz").in_trie);
    }

    #[test]
    fn marginalize_matches_hand_arithmetic() {
        // two identifiers of length 1 at logprob -1: -1 + ln 2
        let m = marginalize(&[(-1.0, 1), (-1.0, 1)], 0.5).unwrap();
        assert!((m.marginal - (-1.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(m.best_single, -1.0);
        let m = marginalize(&[(-4.0, 4)], 0.5).unwrap();
        assert_eq!(m.normalized, [-2.0]);
        assert!(marginalize(&[], 0.5).is_err());
        assert!(marginalize(&[(0.5, 1)], 0.5).is_err());
        assert!(marginalize(&[(-1.0, 0)], 0.5).is_err());
    }
}
