//! Exact-match accuracy per language, micro/macro averages, and bucketed
//! breakdowns by entity frequency, mention frequency and candidate count.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::corpus::MentionInstance;
use crate::error::{Error, Result};
use crate::kb::{EntityId, LanguageCode};

/// Bins by gold-entity frequency in training data.
pub const ENTITY_FREQUENCY_EDGES: [u64; 6] = [0, 1, 10, 100, 1_000, 10_000];
/// Bins by mention-string frequency in training data.
pub const MENTION_FREQUENCY_EDGES: [u64; 9] =
    [0, 1, 10, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000];
/// Bins by number of retrieved candidates; 0 collects alias-table misses.
pub const CANDIDATE_COUNT_EDGES: [u64; 6] = [0, 1, 2, 5, 10, 100];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageScore {
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_language: BTreeMap<LanguageCode, LanguageScore>,
    pub micro_avg: f64,
    pub macro_avg: f64,
}

/// Mergeable running counts, so shards can be evaluated independently.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Accumulator {
    counts: BTreeMap<LanguageCode, (u64, u64)>,
}

impl Accumulator {
    pub fn add(&mut self, lang: &LanguageCode, correct: bool) {
        let c = self.counts.entry(lang.clone()).or_default();
        c.0 += u64::from(correct);
        c.1 += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        for (lang, (c, t)) in &other.counts {
            let e = self.counts.entry(lang.clone()).or_default();
            e.0 += c;
            e.1 += t;
        }
    }

    pub fn report(&self) -> Result<EvalReport> {
        if self.counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let per_language: BTreeMap<_, _> = self
            .counts
            .iter()
            .map(|(lang, &(correct, total))| {
                let accuracy = correct as f64 / total as f64;
                (lang.clone(), LanguageScore { correct, total, accuracy })
            })
            .collect();
        let (correct, total) = self
            .counts
            .values()
            .fold((0, 0), |(c, t), &(c2, t2)| (c + c2, t + t2));
        let macro_avg = per_language.values().map(|s| s.accuracy).sum::<f64>()
            / per_language.len() as f64;
        Ok(EvalReport {
            per_language,
            micro_avg: correct as f64 / total as f64,
            macro_avg,
        })
    }
}

fn gold_of(i: usize, inst: &MentionInstance) -> Result<&EntityId> {
    inst.gold.as_ref().ok_or(Error::MissingGold(i + 1))
}

pub fn accuracy<'a>(
    preds: impl IntoIterator<Item = (&'a MentionInstance, &'a EntityId)>,
) -> Result<EvalReport> {
    let mut acc = Accumulator::default();
    for (i, (inst, pred)) in preds.into_iter().enumerate() {
        acc.add(&inst.lang, gold_of(i, inst)? == pred);
    }
    acc.report()
}

impl EvalReport {
    pub fn to_text_table(&self) -> String {
        let mut rows: Vec<[String; 4]> = vec![[
            "lang".into(),
            "correct".into(),
            "total".into(),
            "accuracy".into(),
        ]];
        for (lang, s) in &self.per_language {
            rows.push([
                lang.to_string(),
                s.correct.to_string(),
                s.total.to_string(),
                format!("{:.4}", s.accuracy),
            ]);
        }
        rows.push(["micro".into(), String::new(), String::new(), format!("{:.4}", self.micro_avg)]);
        rows.push(["macro".into(), String::new(), String::new(), format!("{:.4}", self.macro_avg)]);
        align_columns(&rows)
    }
}

fn align_columns<const N: usize>(rows: &[[String; N]]) -> String {
    let mut widths = [0usize; N];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, (cell, w)) in row.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(line, "{cell:<w$}");
            } else {
                let _ = write!(line, "  {cell:>w$}");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Half-open bins `[e_i, e_{i+1})`; the last bin is open-ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSpec {
    edges: Vec<u64>,
}

impl BucketSpec {
    pub fn new(edges: Vec<u64>) -> Result<BucketSpec> {
        if edges.first() != Some(&0) {
            return Err(Error::InvalidBuckets("first edge must be 0".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidBuckets("edges must be strictly ascending".into()));
        }
        Ok(BucketSpec { edges })
    }

    pub fn entity_frequency() -> BucketSpec {
        BucketSpec { edges: ENTITY_FREQUENCY_EDGES.to_vec() }
    }

    pub fn mention_frequency() -> BucketSpec {
        BucketSpec { edges: MENTION_FREQUENCY_EDGES.to_vec() }
    }

    pub fn candidate_count() -> BucketSpec {
        BucketSpec { edges: CANDIDATE_COUNT_EDGES.to_vec() }
    }

    pub fn edges(&self) -> &[u64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn bin_of(&self, value: u64) -> usize {
        self.edges.partition_point(|&e| e <= value) - 1
    }

    pub fn label(&self, bin: usize) -> String {
        match self.edges.get(bin + 1) {
            Some(hi) => format!("[{},{})", self.edges[bin], hi),
            None => format!("[{},+)", self.edges[bin]),
        }
    }
}

/// What an instance is bucketed by.
pub enum BucketKey<'a> {
    /// Training occurrences of the gold entity.
    EntityFrequency(&'a HashMap<EntityId, u64>),
    /// Training occurrences of the mention string.
    MentionFrequency(&'a HashMap<String, u64>),
    /// Candidates the alias table retrieves for the mention.
    CandidateCount {
        table: &'a AliasTable,
        top_k: Option<usize>,
    },
}

impl BucketKey<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            BucketKey::EntityFrequency(_) => "entity frequency",
            BucketKey::MentionFrequency(_) => "mention frequency",
            BucketKey::CandidateCount { .. } => "candidate count",
        }
    }

    fn value(&self, inst: &MentionInstance, gold: &EntityId) -> u64 {
        match self {
            BucketKey::EntityFrequency(counts) => counts.get(gold).copied().unwrap_or(0),
            BucketKey::MentionFrequency(counts) => {
                counts.get(&inst.mention).copied().unwrap_or(0)
            }
            BucketKey::CandidateCount { table, top_k } => {
                table.candidates(&inst.mention, *top_k).len() as u64
            }
        }
    }
}

/// Training-set frequencies of gold entities and of mention strings.
pub fn training_frequencies<'a>(
    train: impl IntoIterator<Item = &'a MentionInstance>,
) -> (HashMap<EntityId, u64>, HashMap<String, u64>) {
    let mut entities = HashMap::new();
    let mut mentions = HashMap::new();
    for inst in train {
        if let Some(gold) = &inst.gold {
            *entities.entry(gold.clone()).or_default() += 1;
        }
        *mentions.entry(inst.mention.clone()).or_default() += 1;
    }
    (entities, mentions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bin: String,
    pub support: u64,
    pub correct: u64,
    /// `None` for empty bins.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub key: String,
    pub rows: Vec<BucketRow>,
}

impl BucketReport {
    pub fn total_support(&self) -> u64 {
        self.rows.iter().map(|r| r.support).sum()
    }

    pub fn to_text_table(&self) -> String {
        let mut rows: Vec<[String; 3]> =
            vec![[self.key.clone(), "support".into(), "accuracy".into()]];
        for r in &self.rows {
            rows.push([
                r.bin.clone(),
                r.support.to_string(),
                r.accuracy.map_or_else(|| "-".into(), |a| format!("{a:.4}")),
            ]);
        }
        align_columns(&rows)
    }
}

pub fn bucket_report<'a>(
    preds: impl IntoIterator<Item = (&'a MentionInstance, &'a EntityId)>,
    key: &BucketKey<'_>,
    spec: &BucketSpec,
) -> Result<BucketReport> {
    let mut counts = vec![(0u64, 0u64); spec.len()];
    for (i, (inst, pred)) in preds.into_iter().enumerate() {
        let gold = gold_of(i, inst)?;
        let bin = spec.bin_of(key.value(inst, gold));
        counts[bin].0 += 1;
        counts[bin].1 += u64::from(gold == pred);
    }
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(bin, (support, correct))| BucketRow {
            bin: spec.label(bin),
            support,
            correct,
            accuracy: (support > 0).then(|| correct as f64 / support as f64),
        })
        .collect();
    Ok(BucketReport {
        key: key.name().into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn inst(lang: &str, mention: &str, gold: &str) -> MentionInstance {
        MentionInstance {
            lang: LanguageCode::new(lang).unwrap(),
            left: String::new(),
            mention: mention.into(),
            right: String::new(),
            gold: Some(q(gold)),
        }
    }

    fn fixture() -> (Vec<MentionInstance>, Vec<EntityId>) {
        let insts = vec![
            inst("aa", "m", "Q1"),
            inst("aa", "m", "Q2"),
            inst("aa", "m", "Q3"),
            inst("aa", "m", "Q4"),
            inst("bb", "m", "Q5"),
        ];
        let preds = vec![q("Q1"), q("Q2"), q("Q3"), q("Q9"), q("Q5")];
        (insts, preds)
    }

    #[test]
    fn micro_and_macro() {
        let (insts, preds) = fixture();
        let r = accuracy(insts.iter().zip(&preds)).unwrap();
        assert_eq!(r.micro_avg, 0.8);
        assert_eq!(r.macro_avg, 0.875);
        let aa = r.per_language[&LanguageCode::new("aa").unwrap()];
        assert_eq!((aa.correct, aa.total, aa.accuracy), (3, 4, 0.75));
        let table = r.to_text_table();
        assert!(table.contains("micro") && table.contains("0.8750"));
    }

    #[test]
    fn degenerate_reports() {
        let (insts, _) = fixture();
        let golds: Vec<EntityId> = insts.iter().map(|i| i.gold.clone().unwrap()).collect();
        let r = accuracy(insts.iter().zip(&golds)).unwrap();
        assert_eq!((r.micro_avg, r.macro_avg), (1.0, 1.0));
        let one = accuracy(insts[..4].iter().zip(&golds)).unwrap();
        assert_eq!(one.micro_avg, one.macro_avg);
        assert!(matches!(accuracy(std::iter::empty()), Err(Error::EmptyCorpus)));
        let mut no_gold = insts[0].clone();
        no_gold.gold = None;
        assert!(matches!(
            accuracy([(&no_gold, &golds[0])]),
            Err(Error::MissingGold(1))
        ));
    }

    #[test]
    fn bucket_edges() {
        let spec = BucketSpec::entity_frequency();
        assert_eq!(spec.label(spec.bin_of(0)), "[0,1)");
        assert_eq!(spec.label(spec.bin_of(57)), "[10,100)");
        assert_eq!(spec.label(spec.bin_of(10_000)), "[10000,+)");
        let m = BucketSpec::mention_frequency();
        assert_eq!(m.label(m.bin_of(5_000_000)), "[1000000,10000000)");
        assert!(BucketSpec::new(vec![1, 2]).is_err());
        assert!(BucketSpec::new(vec![0, 2, 2]).is_err());
        assert!(BucketSpec::new(vec![0]).is_ok());
    }

    #[test]
    fn entity_frequency_buckets() {
        let (insts, preds) = fixture();
        let train = vec![inst("aa", "x", "Q1"); 57];
        let (entities, _) = training_frequencies(&train);
        let r = bucket_report(
            insts.iter().zip(&preds),
            &BucketKey::EntityFrequency(&entities),
            &BucketSpec::entity_frequency(),
        )
        .unwrap();
        assert_eq!(r.rows[0].support, 4);
        assert_eq!(r.rows[0].accuracy, Some(0.75));
        assert_eq!((r.rows[2].bin.as_str(), r.rows[2].support), ("[10,100)", 1));
        assert_eq!(r.rows[1].accuracy, None);
        assert_eq!(r.total_support(), 5);
    }

    #[test]
    fn candidate_count_misses_land_in_zero_bin() {
        let (insts, preds) = fixture();
        let table = AliasTable::default();
        let r = bucket_report(
            insts.iter().zip(&preds),
            &BucketKey::CandidateCount { table: &table, top_k: None },
            &BucketSpec::candidate_count(),
        )
        .unwrap();
        assert_eq!(r.rows[0].support, 5);
    }

    #[test]
    fn merged_shards_equal_single_pass() {
        let (insts, preds) = fixture();
        let mut whole = Accumulator::default();
        let (mut a, mut b) = (Accumulator::default(), Accumulator::default());
        for (i, (inst, p)) in insts.iter().zip(&preds).enumerate() {
            let ok = inst.gold.as_ref() == Some(p);
            whole.add(&inst.lang, ok);
            if i % 2 == 0 { a.add(&inst.lang, ok) } else { b.add(&inst.lang, ok) }
        }
        a.merge(&b);
        assert_eq!(a, whole);
    }

    fn arb_preds() -> impl Strategy<Value = Vec<(u8, u8, bool)>> {
        prop::collection::vec((0u8..4, 0u8..30, any::<bool>()), 1..60)
    }

    fn materialize(v: &[(u8, u8, bool)]) -> (Vec<MentionInstance>, Vec<EntityId>) {
        let langs = ["aa", "bb", "cc", "dd"];
        v.iter()
            .map(|&(l, e, ok)| {
                let gold = format!("Q{}", e + 1);
                let pred = if ok { gold.clone() } else { "Q999".into() };
                (inst(langs[l as usize], &format!("m{e}"), &gold), q(&pred))
            })
            .unzip()
    }

    proptest! {
        #[test]
        fn buckets_partition_instances(v in arb_preds(), freq in prop::collection::vec(0u64..20_000_000, 30)) {
            let (insts, preds) = materialize(&v);
            let entities: HashMap<EntityId, u64> =
                freq.iter().enumerate().map(|(i, &f)| (q(&format!("Q{}", i + 1)), f)).collect();
            let mentions: HashMap<String, u64> =
                freq.iter().enumerate().map(|(i, &f)| (format!("m{i}"), f)).collect();
            for (key, spec) in [
                (BucketKey::EntityFrequency(&entities), BucketSpec::entity_frequency()),
                (BucketKey::MentionFrequency(&mentions), BucketSpec::mention_frequency()),
            ] {
                let r = bucket_report(insts.iter().zip(&preds), &key, &spec).unwrap();
                prop_assert_eq!(r.total_support(), insts.len() as u64);
                let correct: u64 = r.rows.iter().map(|r| r.correct).sum();
                let expect = insts.iter().zip(&preds).filter(|(i, p)| i.gold.as_ref() == Some(*p)).count();
                prop_assert_eq!(correct, expect as u64);
            }
        }

        #[test]
        fn perfect_predictions_score_one(v in arb_preds()) {
            let (insts, _) = materialize(&v);
            let golds: Vec<EntityId> = insts.iter().map(|i| i.gold.clone().unwrap()).collect();
            let r = accuracy(insts.iter().zip(&golds)).unwrap();
            prop_assert_eq!((r.micro_avg, r.macro_avg), (1.0, 1.0));
        }

        #[test]
        fn duplicating_a_language_keeps_macro(v in arb_preds()) {
            let (insts, preds) = materialize(&v);
            let base = accuracy(insts.iter().zip(&preds)).unwrap();
            let target = insts[0].lang.clone();
            let mut di = insts.clone();
            let mut dp = preds.clone();
            for (i, p) in insts.iter().zip(&preds) {
                if i.lang == target {
                    di.push(i.clone());
                    dp.push(p.clone());
                }
            }
            let dup = accuracy(di.iter().zip(&dp)).unwrap();
            prop_assert!((dup.macro_avg - base.macro_avg).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&dup.micro_avg));
        }

        #[test]
        fn micro_ignores_order(v in arb_preds()) {
            let (insts, preds) = materialize(&v);
            let a = accuracy(insts.iter().zip(&preds)).unwrap();
            let b = accuracy(insts.iter().rev().zip(preds.iter().rev())).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
