//! Autoregressive scoring contract and the reference copy/bigram model.
//!
//! A [`Scorer`] returns the next-token log-distribution given the marked-up
//! input and the tokens generated so far. Everything downstream (sequence
//! scores, beam search, exhaustive ranking) goes through
//! [`Scorer::next_logprobs`], so any model that honours the contract can be
//! dropped in.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::codec::{TokenId, TokenSequence};
use crate::error::{Error, Result};

/// Marked-up context `left [START] mention [END] right` plus the raw mention.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScorerInput {
    pub context: TokenSequence,
    pub mention: TokenSequence,
}

/// Natural-log probabilities over a scorer's output vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDistribution {
    vocab: Arc<[TokenId]>,
    logprobs: Vec<f64>,
}

impl LogDistribution {
    /// `vocab` must be sorted and aligned with `logprobs`.
    pub fn new(vocab: Arc<[TokenId]>, logprobs: Vec<f64>) -> Self {
        debug_assert_eq!(vocab.len(), logprobs.len());
        debug_assert!(vocab.windows(2).all(|w| w[0] < w[1]));
        LogDistribution { vocab, logprobs }
    }

    /// Log-probability of `token`, `None` outside the vocabulary.
    pub fn get(&self, token: TokenId) -> Option<f64> {
        self.vocab
            .binary_search(&token)
            .ok()
            .map(|i| self.logprobs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.vocab.iter().copied().zip(self.logprobs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    /// Σ exp(logprob); 1 for a proper distribution.
    pub fn total_mass(&self) -> f64 {
        self.logprobs.iter().map(|lp| lp.exp()).sum()
    }

    pub fn argmax(&self) -> Option<TokenId> {
        self.iter()
            .fold(None, |best: Option<(TokenId, f64)>, (t, lp)| match best {
                Some((_, b)) if b >= lp => best,
                _ => Some((t, lp)),
            })
            .map(|(t, _)| t)
    }
}

/// Next-token model `p(y_i | y_<i, x)`.
pub trait Scorer: Send + Sync {
    /// Sorted output vocabulary, EOS included.
    fn vocab(&self) -> &[TokenId];

    fn next_logprobs(&self, input: &ScorerInput, prefix: &[TokenId]) -> Result<LogDistribution>;
}

/// `log p(target | input)`: the stepwise log-probabilities of every target
/// token plus the closing EOS.
pub fn sequence_logprob<S: Scorer + ?Sized>(
    scorer: &S,
    input: &ScorerInput,
    target: &[TokenId],
) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let mut total = 0.0;
    for i in 0..=target.len() {
        let next = target.get(i).copied().unwrap_or(TokenId::EOS);
        let dist = scorer.next_logprobs(input, &target[..i])?;
        total += dist.get(next).ok_or(Error::TokenOutsideVocab(next))?;
    }
    Ok(total)
}

/// Uniform distribution over a fixed vocabulary.
#[derive(Clone, Debug)]
pub struct UniformScorer {
    vocab: Arc<[TokenId]>,
}

impl UniformScorer {
    pub fn new(tokens: impl IntoIterator<Item = TokenId>) -> Self {
        UniformScorer {
            vocab: normalize_vocab(tokens).into(),
        }
    }
}

impl Scorer for UniformScorer {
    fn vocab(&self) -> &[TokenId] {
        &self.vocab
    }

    fn next_logprobs(&self, _: &ScorerInput, _: &[TokenId]) -> Result<LogDistribution> {
        if self.vocab.is_empty() {
            return Err(Error::UntrainedModel);
        }
        let lp = -(self.vocab.len() as f64).ln();
        Ok(LogDistribution::new(
            self.vocab.clone(),
            vec![lp; self.vocab.len()],
        ))
    }
}

/// Sorted, deduplicated output vocabulary: never BOS or PAD, always EOS.
fn normalize_vocab(tokens: impl IntoIterator<Item = TokenId>) -> Vec<TokenId> {
    let mut v: Vec<TokenId> = tokens
        .into_iter()
        .filter(|t| *t != TokenId::BOS && *t != TokenId::PAD)
        .chain([TokenId::EOS])
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// A scorer training example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub input: ScorerInput,
    pub target: TokenSequence,
}

pub fn save_pairs(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    artifact::write(path, artifact::Kind::Pairs, pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    artifact::read(path, artifact::Kind::Pairs)
}

pub const DEFAULT_LAMBDA_COPY: f64 = 0.5;
pub const DEFAULT_ADD_K: f64 = 1.0;

/// Mixture of a mention-copy distribution and an add-k smoothed bigram model
/// over target tokens:
///
/// `p(t) = λ·p_copy(t) + (1 − λ)·p_bigram(t | last token)`
///
/// The copy distribution favours the single token that continues the longest
/// suffix of the prefix found in the mention (EOS once that match reaches the
/// mention's end). It spreads a smoothing mass of `add_k` over the vocabulary:
/// `p_copy(t) = ([t = copy] + add_k / V) / (1 + add_k)`. Steps with no copy
/// candidate use the bigram alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScorer {
    #[serde(with = "arc_slice")]
    vocab: Arc<[TokenId]>,
    /// context token -> sorted (next token, count)
    bigram_counts: BTreeMap<TokenId, Vec<(TokenId, u64)>>,
    context_totals: BTreeMap<TokenId, u64>,
    unigram_counts: BTreeMap<TokenId, u64>,
    lambda_copy: f64,
    add_k: f64,
}

mod arc_slice {
    use super::TokenId;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::sync::Arc;

    pub fn serialize<S: Serializer>(v: &Arc<[TokenId]>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<[TokenId]>, D::Error> {
        Vec::<TokenId>::deserialize(d).map(Into::into)
    }
}

fn check_hyperparameters(lambda_copy: f64, add_k: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda_copy) {
        return Err(Error::InvalidHyperparameter(format!(
            "lambda_copy must be in [0, 1], got {lambda_copy}"
        )));
    }
    if !(add_k > 0.0 && add_k.is_finite()) {
        return Err(Error::InvalidHyperparameter(format!(
            "add_k must be positive and finite, got {add_k}"
        )));
    }
    Ok(())
}

impl ReferenceScorer {
    /// A model with zero counts over `vocab`.
    pub fn untrained(
        vocab: impl IntoIterator<Item = TokenId>,
        lambda_copy: f64,
        add_k: f64,
    ) -> Result<Self> {
        check_hyperparameters(lambda_copy, add_k)?;
        Ok(ReferenceScorer {
            vocab: normalize_vocab(vocab).into(),
            bigram_counts: BTreeMap::new(),
            context_totals: BTreeMap::new(),
            unigram_counts: BTreeMap::new(),
            lambda_copy,
            add_k,
        })
    }

    /// Accumulates `BOS → y_1 → … → y_N → EOS` transitions over the targets.
    /// The vocabulary covers every target and mention token, plus EOS.
    pub fn train<'a>(
        pairs: impl IntoIterator<Item = &'a TrainingPair>,
        lambda_copy: f64,
        add_k: f64,
    ) -> Result<Self> {
        check_hyperparameters(lambda_copy, add_k)?;
        let mut bigrams: BTreeMap<(TokenId, TokenId), u64> = BTreeMap::new();
        let mut unigram_counts: BTreeMap<TokenId, u64> = BTreeMap::new();
        let mut vocab = Vec::new();
        let mut seen_any = false;
        for pair in pairs {
            seen_any = true;
            let mut prev = TokenId::BOS;
            for &t in pair.target.iter().chain([&TokenId::EOS]) {
                if t.is_reserved() && t != TokenId::EOS {
                    return Err(Error::ReservedTokenInSequence(t));
                }
                *bigrams.entry((prev, t)).or_default() += 1;
                *unigram_counts.entry(t).or_default() += 1;
                prev = t;
            }
            vocab.extend(pair.target.iter().copied());
            vocab.extend(pair.input.mention.iter().copied());
        }
        if !seen_any {
            return Err(Error::EmptyCorpus);
        }
        let mut bigram_counts: BTreeMap<TokenId, Vec<(TokenId, u64)>> = BTreeMap::new();
        let mut context_totals: BTreeMap<TokenId, u64> = BTreeMap::new();
        for ((ctx, next), count) in bigrams {
            bigram_counts.entry(ctx).or_default().push((next, count));
            *context_totals.entry(ctx).or_default() += count;
        }
        Ok(ReferenceScorer {
            vocab: normalize_vocab(vocab).into(),
            bigram_counts,
            context_totals,
            unigram_counts,
            lambda_copy,
            add_k,
        })
    }

    /// Adds tokens (e.g. every character of every KB identifier) to the
    /// output vocabulary so that no identifier is unreachable.
    pub fn extend_vocab(&mut self, tokens: impl IntoIterator<Item = TokenId>) {
        self.vocab = normalize_vocab(self.vocab.iter().copied().chain(tokens)).into();
    }

    pub fn lambda_copy(&self) -> f64 {
        self.lambda_copy
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn bigram_count(&self, context: TokenId, next: TokenId) -> u64 {
        self.bigram_counts
            .get(&context)
            .and_then(|row| {
                row.binary_search_by_key(&next, |(t, _)| *t)
                    .ok()
                    .map(|i| row[i].1)
            })
            .unwrap_or(0)
    }

    pub fn unigram_count(&self, token: TokenId) -> u64 {
        self.unigram_counts.get(&token).copied().unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        artifact::write(path, artifact::Kind::Scorer, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: ReferenceScorer = artifact::read(path, artifact::Kind::Scorer)?;
        check_hyperparameters(model.lambda_copy, model.add_k)?;
        Ok(model)
    }
}

/// The token that continues the longest suffix of `prefix` occurring in
/// `mention` (leftmost occurrence), EOS when that occurrence ends the
/// mention. An empty prefix continues with the mention's first token.
pub fn copy_target(mention: &[TokenId], prefix: &[TokenId]) -> Option<TokenId> {
    if mention.is_empty() {
        return None;
    }
    if prefix.is_empty() {
        return Some(mention[0]);
    }
    for len in (1..=prefix.len().min(mention.len())).rev() {
        let suffix = &prefix[prefix.len() - len..];
        if let Some(start) = mention.windows(len).position(|w| w == suffix) {
            return Some(mention.get(start + len).copied().unwrap_or(TokenId::EOS));
        }
    }
    None
}

impl Scorer for ReferenceScorer {
    fn vocab(&self) -> &[TokenId] {
        &self.vocab
    }

    fn next_logprobs(&self, input: &ScorerInput, prefix: &[TokenId]) -> Result<LogDistribution> {
        let v = self.vocab.len();
        if v == 0 {
            return Err(Error::UntrainedModel);
        }
        let vf = v as f64;
        let k = self.add_k;
        let prev = prefix.last().copied().unwrap_or(TokenId::BOS);
        let total = self.context_totals.get(&prev).copied().unwrap_or(0) as f64;
        let denom = total + k * vf;

        let mut probs = vec![k / denom; v];
        if let Some(row) = self.bigram_counts.get(&prev) {
            for &(t, c) in row {
                if let Ok(i) = self.vocab.binary_search(&t) {
                    probs[i] = (c as f64 + k) / denom;
                }
            }
        }

        let copy = copy_target(&input.mention, prefix).and_then(|t| self.vocab.binary_search(&t).ok());
        if let (Some(ci), true) = (copy, self.lambda_copy > 0.0) {
            let lambda = self.lambda_copy;
            let base = (k / vf) / (1.0 + k);
            for (i, p) in probs.iter_mut().enumerate() {
                let p_copy = if i == ci { 1.0 / (1.0 + k) + base } else { base };
                *p = lambda * p_copy + (1.0 - lambda) * *p;
            }
        }

        Ok(LogDistribution::new(
            self.vocab.clone(),
            probs.into_iter().map(f64::ln).collect(),
        ))
    }
}
