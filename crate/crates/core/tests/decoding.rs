mod common;

use common::*;
use polylink::codec::tokenize;
use polylink::decoder::{beam_search, exhaustive_rank, BeamConfig};
use polylink::scorer::{sequence_logprob, ReferenceScorer, TrainingPair};
use proptest::prelude::*;

fn names_strategy(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[abc]{1,6}", 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_width_beam_equals_exhaustive(names in names_strategy(60), seed in any::<u64>()) {
        let trie = trie_of(&names);
        let ids = distinct_sequences(&names);
        let scorer = HashScorer::new(tokens_of(&names), seed, 3.0);
        let input = input_for(&names[0]);
        let cfg = BeamConfig { beams: ids.len(), length_penalty: 0.0, max_steps: 7 };
        let beam = beam_search(&scorer, &trie, &input, &cfg).unwrap();
        let exact = exhaustive_rank(&scorer, &ids, &input, 10_000).unwrap();
        prop_assert_eq!(beam.len(), exact.len());
        for (b, (seq, lp)) in beam.iter().zip(&exact) {
            prop_assert_eq!(&b.hypothesis.tokens, seq);
            prop_assert!((b.hypothesis.logprob - lp).abs() <= 1e-9);
        }
    }

    #[test]
    fn no_beam_beats_the_exhaustive_frontier(
        names in names_strategy(40),
        seed in any::<u64>(),
        k in 1usize..6,
    ) {
        let trie = trie_of(&names);
        let ids = distinct_sequences(&names);
        let scorer = HashScorer::new(tokens_of(&names), seed, 3.0);
        let input = input_for(&names[0]);
        let narrow = BeamConfig { beams: k, length_penalty: 0.0, max_steps: 7 };
        let got = beam_search(&scorer, &trie, &input, &narrow).unwrap();
        let exact = exhaustive_rank(&scorer, &ids, &input, 10_000).unwrap();
        for (g, (_, best)) in got.iter().zip(&exact) {
            prop_assert!(g.score <= *best + 1e-12);
        }
    }

    #[test]
    fn finished_hypotheses_are_identifiers(
        names in names_strategy(40),
        seed in any::<u64>(),
        beams in 1usize..12,
        penalty in 0.0f64..2.0,
        max_steps in 1usize..9,
    ) {
        let trie = trie_of(&names);
        let scorer = HashScorer::new(tokens_of(&names), seed, 3.0);
        let cfg = BeamConfig { beams, length_penalty: penalty, max_steps };
        let out = beam_search(&scorer, &trie, &input_for("abc"), &cfg).unwrap();
        prop_assert!(out.len() <= beams);
        let mut seen = std::collections::BTreeSet::new();
        for h in &out {
            prop_assert!(h.hypothesis.finished);
            prop_assert!(trie.payload(&h.hypothesis.tokens).is_ok());
            prop_assert!(h.hypothesis.generated_len() <= max_steps);
            prop_assert!(h.hypothesis.logprob <= 0.0);
            prop_assert!(seen.insert(h.hypothesis.tokens.clone()));
        }
        for w in out.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        let again = beam_search(&scorer, &trie, &input_for("abc"), &cfg).unwrap();
        prop_assert_eq!(out, again);
    }

    /// With λ_copy = 1 a mention that spells an identifier makes that
    /// identifier the most likely one among identifiers of its length.
    #[test]
    fn copy_bias_picks_the_spelled_identifier(
        names in prop::collection::vec("[a-e]{1,5}", 1..200),
        pick in any::<prop::sample::Index>(),
        add_k in 0.05f64..4.0,
    ) {
        let target = pick.get(&names).clone();
        let pairs: Vec<TrainingPair> = names
            .iter()
            .map(|n| TrainingPair { input: input_for(n), target: tokenize(n) })
            .collect();
        let model = ReferenceScorer::train(&pairs, 1.0, add_k).unwrap();
        let input = input_for(&target);
        let want = sequence_logprob(&model, &input, &tokenize(&target)).unwrap();
        for seq in distinct_sequences(&names) {
            if seq.len() == target.chars().count() && seq != tokenize(&target) {
                let lp = sequence_logprob(&model, &input, &seq).unwrap();
                prop_assert!(lp < want, "{:?} scored {} >= {}", seq, lp, want);
            }
        }
    }
}
