//! Trie-constrained beam search and the exhaustive ranking oracle.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codec::{TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::scorer::{sequence_logprob, Scorer, ScorerInput};
use crate::trie::{NodeId, Trie};

pub const DEFAULT_BEAMS: usize = 10;
pub const DEFAULT_LENGTH_PENALTY: f64 = 1.0;
pub const DEFAULT_MAX_STEPS: usize = 32;
pub const DEFAULT_EXHAUSTIVE_BOUND: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beams: usize,
    pub length_penalty: f64,
    /// Generated tokens allowed per hypothesis, the closing EOS included.
    pub max_steps: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beams: DEFAULT_BEAMS,
            length_penalty: DEFAULT_LENGTH_PENALTY,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beams == 0 {
            return Err(Error::InvalidHyperparameter("beams must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidHyperparameter("max_steps must be positive".into()));
        }
        if !(self.length_penalty >= 0.0 && self.length_penalty.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "length penalty must be finite and >= 0, got {}",
                self.length_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Identifier tokens, without BOS or EOS.
    pub tokens: TokenSequence,
    /// Cumulative log-probability, including the EOS factor once finished.
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Generated tokens, counting EOS but not BOS.
    pub fn generated_len(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedHypothesis {
    pub hypothesis: Hypothesis,
    pub score: f64,
}

/// `logprob / len^penalty`.
pub fn ranked_score(logprob: f64, generated_len: usize, length_penalty: f64) -> f64 {
    logprob / (generated_len as f64).powf(length_penalty)
}

/// Descending score, then ascending token sequence.
fn by_score_then_tokens(a: (f64, &[TokenId]), b: (f64, &[TokenId])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

struct Beam {
    tokens: TokenSequence,
    node: NodeId,
    logprob: f64,
}

struct Expansion {
    parent: usize,
    token: TokenId,
    node: Option<NodeId>,
    logprob: f64,
}

/// Beam search restricted to identifiers in `trie`.
///
/// Each step expands every live beam over the tokens the trie allows there,
/// scoring them with the scorer's unrenormalized log-probabilities, and keeps
/// the `beams` best expansions by cumulative log-probability. An expansion
/// by EOS finishes its hypothesis. The finished hypotheses are returned best
/// first by `logprob / len^length_penalty` (at most `beams` of them);
/// hypotheses still open after `max_steps` are dropped.
pub fn beam_search<S: Scorer + ?Sized>(
    scorer: &S,
    trie: &Trie,
    input: &ScorerInput,
    cfg: &BeamConfig,
) -> Result<Vec<RankedHypothesis>> {
    cfg.validate()?;
    if trie.is_empty() {
        return Err(Error::EmptyTrie);
    }
    let k = cfg.beams;
    let mut live = vec![Beam {
        tokens: Vec::new(),
        node: trie.root(),
        logprob: 0.0,
    }];
    let mut finished: Vec<RankedHypothesis> = Vec::new();

    for _ in 0..cfg.max_steps {
        if live.is_empty() || search_is_settled(&finished, &live, cfg) {
            break;
        }
        let mut expansions = Vec::new();
        for (parent, beam) in live.iter().enumerate() {
            let dist = scorer.next_logprobs(input, &beam.tokens)?;
            for token in trie.allowed_at(beam.node) {
                let Some(lp) = dist.get(token) else { continue };
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let node = if token == TokenId::EOS {
                    None
                } else {
                    trie.child(beam.node, token)
                };
                expansions.push(Expansion {
                    parent,
                    token,
                    node,
                    logprob: beam.logprob + lp,
                });
            }
        }
        expansions.sort_by(|a, b| {
            b.logprob
                .total_cmp(&a.logprob)
                .then_with(|| live[a.parent].tokens.cmp(&live[b.parent].tokens))
                .then_with(|| a.token.cmp(&b.token))
        });
        expansions.truncate(k);

        let mut next = Vec::with_capacity(expansions.len());
        for e in expansions {
            let parent = &live[e.parent];
            match e.node {
                None => {
                    let hypothesis = Hypothesis {
                        tokens: parent.tokens.clone(),
                        logprob: e.logprob,
                        finished: true,
                    };
                    let score = ranked_score(
                        hypothesis.logprob,
                        hypothesis.generated_len(),
                        cfg.length_penalty,
                    );
                    finished.push(RankedHypothesis { hypothesis, score });
                }
                Some(node) => {
                    let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
                    tokens.extend_from_slice(&parent.tokens);
                    tokens.push(e.token);
                    next.push(Beam {
                        tokens,
                        node,
                        logprob: e.logprob,
                    });
                }
            }
        }
        live = next;
    }

    finished.sort_by(|a, b| {
        by_score_then_tokens(
            (a.score, &a.hypothesis.tokens),
            (b.score, &b.hypothesis.tokens),
        )
    });
    finished.truncate(k);
    Ok(finished)
}

/// True when no live beam can still beat the k-th finished hypothesis.
///
/// Log-probabilities only decrease as a hypothesis grows, so the best score
/// a live beam can reach is its current log-probability divided by the
/// longest admissible length.
fn search_is_settled(finished: &[RankedHypothesis], live: &[Beam], cfg: &BeamConfig) -> bool {
    if finished.len() < cfg.beams {
        return false;
    }
    let mut scores: Vec<f64> = finished.iter().map(|h| h.score).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    let kth = scores[cfg.beams - 1];
    live.iter()
        .all(|beam| ranked_score(beam.logprob, cfg.max_steps, cfg.length_penalty) < kth)
}

/// Scores every identifier with [`sequence_logprob`]; best first, ties by
/// token sequence.
pub fn exhaustive_rank<S: Scorer + ?Sized>(
    scorer: &S,
    identifiers: &[TokenSequence],
    input: &ScorerInput,
    bound: usize,
) -> Result<Vec<(TokenSequence, f64)>> {
    if identifiers.len() > bound {
        return Err(Error::TooManyIdentifiers {
            count: identifiers.len(),
            bound,
        });
    }
    let mut scored = identifiers
        .iter()
        .map(|id| Ok((id.clone(), sequence_logprob(scorer, input, id)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| by_score_then_tokens((a.1, &a.0), (b.1, &b.0)));
    Ok(scored)
}
