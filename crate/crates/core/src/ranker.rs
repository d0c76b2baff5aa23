//! From decoded identifiers to ranked entities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::codec::{detokenize, RenderMode};
use crate::corpus::{build_input, MentionInstance, DEFAULT_MAX_INPUT_TOKENS};
use crate::decoder::{beam_search, ranked_score, BeamConfig, RankedHypothesis};
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};
use crate::scorer::Scorer;
use crate::trie::{Trie, TriePayload};

/// Length-normalization exponent applied before marginalizing.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub mode: RenderMode,
    pub use_candidates: bool,
    pub use_marginalization: bool,
    pub alpha: f64,
    pub beam: BeamConfig,
    /// Truncation of the alias-table candidate list; `None` keeps all.
    pub top_k: Option<usize>,
    pub max_input_tokens: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            mode: RenderMode::NameFirst,
            use_candidates: false,
            use_marginalization: false,
            alpha: DEFAULT_ALPHA,
            beam: BeamConfig::default(),
            top_k: None,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportingIdentifier {
    pub identifier: String,
    pub logprob: f64,
    /// Generated tokens including EOS.
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityScore {
    pub entity: EntityId,
    pub score: f64,
    pub supporting: Vec<SupportingIdentifier>,
}

/// Entities a decoded identifier stands for. Bare names keep every homograph
/// reading; language-qualified identifiers prefer the title owner, falling
/// back to every redirect reading when no title matches.
fn readings(payload: &TriePayload, mode: RenderMode) -> Vec<&EntityId> {
    let mut ids: Vec<&EntityId> = match mode {
        RenderMode::Canonical => payload.entries().iter().map(|e| &e.entity).collect(),
        RenderMode::LangFirst | RenderMode::NameFirst => {
            let titles: Vec<&EntityId> = payload
                .entries()
                .iter()
                .filter(|e| !e.is_redirect)
                .map(|e| &e.entity)
                .collect();
            if titles.is_empty() {
                payload.entries().iter().map(|e| &e.entity).collect()
            } else {
                titles
            }
        }
    };
    ids.sort();
    ids.dedup();
    ids
}

fn group_by_entity<'a>(
    hyps: &'a [RankedHypothesis],
    trie: &Trie,
    mode: RenderMode,
) -> Result<BTreeMap<EntityId, Vec<&'a RankedHypothesis>>> {
    let mut groups: BTreeMap<EntityId, Vec<&RankedHypothesis>> = BTreeMap::new();
    for h in hyps {
        if !h.hypothesis.finished {
            return Err(Error::UnfinishedHypothesis);
        }
        let payload = trie.payload(&h.hypothesis.tokens)?;
        for id in readings(payload, mode) {
            groups.entry(id.clone()).or_default().push(h);
        }
    }
    Ok(groups)
}

fn supporting(hyps: &[&RankedHypothesis]) -> Result<Vec<SupportingIdentifier>> {
    let mut out = hyps
        .iter()
        .map(|h| {
            Ok(SupportingIdentifier {
                identifier: detokenize(&h.hypothesis.tokens)?,
                logprob: h.hypothesis.logprob,
                length: h.hypothesis.generated_len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.logprob
            .total_cmp(&a.logprob)
            .then_with(|| a.identifier.cmp(&b.identifier))
    });
    Ok(out)
}

fn sort_scores(scores: &mut [EntityScore]) {
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entity.cmp(&b.entity)));
}

/// One score per entity: the best ranked score among its identifiers.
pub fn rank_plain(
    hyps: &[RankedHypothesis],
    trie: &Trie,
    mode: RenderMode,
) -> Result<Vec<EntityScore>> {
    let mut out = Vec::new();
    for (entity, group) in group_by_entity(hyps, trie, mode)? {
        let score = group
            .iter()
            .map(|h| h.score)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(EntityScore {
            entity,
            score,
            supporting: supporting(&group)?,
        });
    }
    sort_scores(&mut out);
    Ok(out)
}

/// Numerically stable `ln Σ exp(x)`, summed largest-first so the result does
/// not depend on input order.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let Some(&max) = sorted.first() else {
        return f64::NEG_INFINITY;
    };
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + sorted.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// One score per entity: logsumexp over its identifiers in the beam of
/// `logprob / length^alpha`.
pub fn rank_marginalized(
    hyps: &[RankedHypothesis],
    trie: &Trie,
    mode: RenderMode,
    alpha: f64,
) -> Result<Vec<EntityScore>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let mut out = Vec::new();
    for (entity, group) in group_by_entity(hyps, trie, mode)? {
        let terms: Vec<f64> = group
            .iter()
            .map(|h| ranked_score(h.hypothesis.logprob, h.hypothesis.generated_len(), alpha))
            .collect();
        out.push(EntityScore {
            entity,
            score: logsumexp(&terms),
            supporting: supporting(&group)?,
        });
    }
    sort_scores(&mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub prediction: EntityId,
    pub ranking: Vec<EntityScore>,
    /// Candidates retrieved from the alias table (0 when not consulted).
    pub candidate_count: usize,
    /// Whether decoding ran over the candidate-restricted trie.
    pub restricted: bool,
}

/// Links one mention: decode over the candidate trie when candidates are
/// enabled and found, over the full KB trie otherwise, then rank entities.
pub fn link<S: Scorer + ?Sized>(
    inst: &MentionInstance,
    kb: &KnowledgeBase,
    full_trie: &Trie,
    alias: Option<&AliasTable>,
    scorer: &S,
    cfg: &LinkConfig,
) -> Result<LinkOutcome> {
    let input = build_input(inst, cfg.max_input_tokens)?;

    let mut candidate_count = 0;
    let restricted_trie = match (cfg.use_candidates, alias) {
        (true, Some(table)) => {
            let candidates = table.candidates(&inst.mention, cfg.top_k);
            candidate_count = candidates.len();
            let known: Vec<&EntityId> = candidates
                .iter()
                .map(|(id, _)| id)
                .filter(|id| kb.contains(id))
                .collect();
            if known.is_empty() {
                None
            } else {
                Some(Trie::restrict(kb, known, cfg.mode)?)
            }
        }
        _ => None,
    };
    let trie = restricted_trie.as_ref().unwrap_or(full_trie);

    let hyps = beam_search(scorer, trie, &input, &cfg.beam)?;
    let ranking = if cfg.use_marginalization {
        rank_marginalized(&hyps, trie, cfg.mode, cfg.alpha)?
    } else {
        rank_plain(&hyps, trie, cfg.mode)?
    };
    let prediction = ranking
        .first()
        .map(|s| s.entity.clone())
        .ok_or(Error::NoHypotheses)?;
    Ok(LinkOutcome {
        prediction,
        ranking,
        candidate_count,
        restricted: restricted_trie.is_some(),
    })
}
