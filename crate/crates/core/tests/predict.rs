mod common;

use std::collections::BTreeSet;

use common::*;
use hornforge::kg::Fact;
use hornforge::metrics::{marginal_weight, rudik_weight, Evaluator, ExampleSets, PcaMode};
use hornforge::predict::{apply_rules, complete, generate_negatives, select_rules_greedy, CompletionQuery, ScoredRule};
use hornforge::rule::Rule;
use hornforge::Rational;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn scored_rules(kg: &hornforge::KnowledgeGraph, rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredRule> {
    let ev = Evaluator::new(kg);
    (0..n)
        .filter_map(|_| random_safe_rule(kg, rng, 2))
        .map(|rule| {
            let confidence = ev.evaluate(&rule, PcaMode::SUBJECT).unwrap().pca_confidence();
            ScoredRule { rule, confidence }
        })
        .collect()
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn negatives_are_absent_facts(kg in small_graph()) {
        for r in kg.relation_ids() {
            let objects: BTreeSet<_> = kg.pairs(r).iter().map(|p| p.1).collect();
            for f in generate_negatives(&kg, r) {
                prop_assert!(!kg.contains_fact(&f));
                prop_assert_eq!(f.relation, r);
                prop_assert!(objects.contains(&f.object));
                prop_assert!(!kg.objects(r, f.subject).is_empty());
            }
        }
    }

    #[test]
    fn ranking_ignores_rule_order(kg in small_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rules = scored_rules(&kg, &mut rng, 6);
        prop_assume!(!rules.is_empty() && kg.num_entities() > 0);
        let mut shuffled = rules.clone();
        shuffled.shuffle(&mut rng);
        let head = rules[0].rule.head.relation;
        for e in kg.entity_ids() {
            for query in [
                CompletionQuery { relation: head, subject: Some(e), object: None },
                CompletionQuery { relation: head, subject: None, object: Some(e) },
            ] {
                let key = |c: &hornforge::predict::Candidate| (c.entity, c.confidences.clone(), c.in_kg);
                let a: Vec<_> = complete(&kg, &rules, &query).iter().map(key).collect();
                let b: Vec<_> = complete(&kg, &shuffled, &query).iter().map(key).collect();
                prop_assert_eq!(&a, &b);
                for pair in a.windows(2) {
                    prop_assert!(pair[0].1 >= pair[1].1);
                }
            }
        }
    }

    #[test]
    fn predictions_come_from_their_sources(kg in small_graph(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rules = scored_rules(&kg, &mut rng, 4);
        let ev = Evaluator::new(&kg);
        for p in apply_rules(&kg, &rules).unwrap() {
            prop_assert!(!p.sources.is_empty());
            prop_assert_eq!(p.in_kg, kg.contains_fact(&p.fact));
            for pair in p.sources.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1);
            }
            for &(i, _) in &p.sources {
                prop_assert!(ev.fires_at(&rules[i].rule, &p.fact));
            }
        }
    }

    #[test]
    fn greedy_selection_lowers_weight_each_step(kg in small_graph(), seed in any::<u64>(), a in 0i128..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rels: Vec<_> = kg.relation_ids().collect();
        let r = rels[rng.gen_range(0..rels.len())];
        let positives: BTreeSet<Fact> = kg.pairs(r).iter().map(|&(s, o)| Fact::new(s, r, o)).collect();
        let negatives = generate_negatives(&kg, r);
        prop_assume!(!positives.is_empty() && !negatives.is_empty());
        let examples = ExampleSets::new(positives, negatives).unwrap();
        let candidates: Vec<Rule> = (0..6)
            .filter_map(|_| random_safe_rule(&kg, &mut rng, 2))
            .map(|x| Rule::new(x.body, hornforge::Atom { relation: r, ..x.head }))
            .filter(|x| x.is_safe())
            .collect();
        let alpha = Rational::new(a, 4);
        let sel = select_rules_greedy(&kg, &candidates, &examples, alpha).unwrap();
        let ev = Evaluator::new(&kg);
        prop_assert_eq!(sel.weights[0], alpha);
        prop_assert_eq!(sel.weights.len(), sel.rules.len() + 1);
        for pair in sel.weights.windows(2) {
            prop_assert!(pair[1] < pair[0]);
        }
        prop_assert_eq!(*sel.weights.last().unwrap(), rudik_weight(&ev, &sel.rules, &examples, alpha).unwrap());
        for c in &candidates {
            if !sel.rules.contains(c) {
                prop_assert!(marginal_weight(&ev, &sel.rules, c, &examples, alpha).unwrap() >= Rational::from(0));
            }
        }
    }
}
