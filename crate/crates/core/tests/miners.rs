mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use hornforge::amie::{self, MinedRule, MinerConfig};
use hornforge::kg::KnowledgeGraph;
use hornforge::metrics::{ConfidenceKind, Evaluator, PcaMode};
use hornforge::path_miner::{
    generalize, mine_anytime, sample_path, AnytimeConfig, AnytimeMiner, PathProfile, PathShape, RoundBudget,
};
use hornforge::ratio::ratio;
use hornforge::rule::Rule;
use hornforge::{Rational, RuleMetrics};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn as_map(rules: Vec<MinedRule>) -> BTreeMap<Rule, RuleMetrics> {
    let n = rules.len();
    let map: BTreeMap<_, _> = rules.into_iter().map(|m| (m.rule, m.metrics)).collect();
    assert_eq!(map.len(), n, "duplicate rule in output");
    map
}

fn relaxed() -> MinerConfig {
    MinerConfig { min_head_coverage: Rational::new(1, 1_000_000), skyline: false, ..MinerConfig::default() }
}

/// Rules the relaxed miner must find: every closed rule with some support and
/// enough PCA confidence, by brute force.
fn exhaustive(kg: &KnowledgeGraph, config: &MinerConfig) -> BTreeSet<Rule> {
    all_closed_rules(kg, config.max_len)
        .into_iter()
        .filter(|r| {
            let o = oracle(kg, r, false);
            o.support > 0 && o.body_pca_subject > 0 && ratio(o.support, o.body_pca_subject) >= config.min_pca_confidence
        })
        .collect()
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn amie_output_is_sound_and_complete(kg in small_graph()) {
        let default = as_map(amie::mine(&kg, MinerConfig::default()).unwrap());
        let config = relaxed();
        let full = as_map(amie::mine(&kg, config.clone()).unwrap());
        for (rule, m) in &default {
            prop_assert_eq!(full.get(rule), Some(m), "{}", rule.display(&kg));
        }
        let found: BTreeSet<Rule> = full.keys().cloned().collect();
        prop_assert_eq!(found, exhaustive(&kg, &config));

        let ev = Evaluator::new(&kg);
        let d = MinerConfig::default();
        for (rule, m) in &default {
            prop_assert!(rule.is_closed() && rule.is_connected());
            prop_assert_eq!(&rule.canonicalize(), rule);
            prop_assert_eq!(&ev.evaluate(rule, d.pca_mode).unwrap(), m);
            prop_assert!(m.head_coverage() >= d.min_head_coverage);
            prop_assert!(m.pca_confidence() >= d.min_pca_confidence);
        }
    }

    #[test]
    fn amie_std_and_object_identity_modes(kg in small_graph()) {
        for oi in [false, true] {
            let config = MinerConfig {
                confidence_kind: ConfidenceKind::Std,
                object_identity: oi,
                instantiation: true,
                pca_mode: PcaMode::Auto,
                ..MinerConfig::default()
            };
            let ev = Evaluator::new(&kg).with_object_identity(oi);
            for m in amie::mine(&kg, config.clone()).unwrap() {
                prop_assert!(m.rule.is_closed() && m.rule.is_connected());
                prop_assert_eq!(ev.evaluate(&m.rule, PcaMode::Auto).unwrap(), m.metrics);
                prop_assert!(m.metrics.std_confidence() >= config.min_std_confidence);
                prop_assert!(m.metrics.head_coverage() >= config.min_head_coverage);
            }
        }
    }

    #[test]
    fn amie_is_deterministic_across_threads(kg in small_graph()) {
        let one = amie::mine(&kg, MinerConfig { instantiation: true, ..MinerConfig::default() }).unwrap();
        let four = amie::mine(&kg, MinerConfig { instantiation: true, threads: 4, ..MinerConfig::default() }).unwrap();
        prop_assert_eq!(one, four);
    }
}

#[test]
fn amie_is_deterministic_on_a_larger_graph() {
    let kg = synthetic_graph(300, 8, 3000, 7);
    let a = amie::mine(&kg, MinerConfig::default()).unwrap();
    let b = amie::mine(&kg, MinerConfig { threads: 4, ..MinerConfig::default() }).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

fn path_config(seed: u64, threads: usize) -> AnytimeConfig {
    AnytimeConfig {
        rounds: 3,
        budget: RoundBudget::Samples(200),
        min_support: 1,
        seed,
        max_length: 3,
        threads,
        ..AnytimeConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(128))]

    #[test]
    fn generalized_rules_have_a_witness(kg in small_graph(), seed in any::<u64>()) {
        prop_assume!(!kg.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = Evaluator::new(&kg);
        for _ in 0..8 {
            let shape = if rng.gen_bool(0.5) { PathShape::Cyclic } else { PathShape::Acyclic };
            let profile = PathProfile::new(rng.gen_range(1..=3), shape);
            let oi = rng.gen_bool(0.5);
            let Some(path) = sample_path(&kg, profile, oi, &mut rng).unwrap() else { continue };
            prop_assert_eq!(path.profile(), profile);
            for rule in generalize(&path) {
                prop_assert!(rule.is_connected() && rule.is_safe());
                prop_assert!(ev.support(&rule).unwrap() >= 1, "{}", rule.display(&kg));
            }
        }
    }

    #[test]
    fn stored_rules_only_grow(kg in small_graph(), seed in any::<u64>()) {
        prop_assume!(!kg.is_empty());
        let mut miner = AnytimeMiner::new(&kg, path_config(seed, 1)).unwrap();
        let mut previous: BTreeMap<Rule, RuleMetrics> = BTreeMap::new();
        for _ in 0..4 {
            miner.run_round().unwrap();
            let now = miner.stored().clone();
            for (rule, m) in &previous {
                prop_assert_eq!(now.get(rule), Some(m));
            }
            previous = now;
        }
    }

    #[test]
    fn path_miner_seed_fixes_output(kg in small_graph(), seed in any::<u64>()) {
        let a = mine_anytime(&kg, path_config(seed, 1)).unwrap();
        let b = mine_anytime(&kg, path_config(seed, 1)).unwrap();
        let c = mine_anytime(&kg, path_config(seed, 4)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(as_map(a), as_map(c));
    }

    #[test]
    fn path_miner_object_identity(kg in small_graph(), seed in any::<u64>()) {
        let config = AnytimeConfig { object_identity: true, confidence_kind: ConfidenceKind::Pca, ..path_config(seed, 1) };
        let ev = Evaluator::new(&kg).with_object_identity(true);
        for m in mine_anytime(&kg, config.clone()).unwrap() {
            prop_assert_eq!(ev.evaluate(&m.rule, config.pca_mode).unwrap(), m.metrics);
            prop_assert!(m.metrics.support >= 1);
            prop_assert!(m.metrics.pca_confidence() >= config.min_confidence);
        }
    }
}

#[test]
fn path_miner_finds_planted_rules() {
    let kg = fixture();
    let config = AnytimeConfig { budget: RoundBudget::Samples(500), ..AnytimeConfig::default() };
    let rules = as_map(mine_anytime(&kg, config).unwrap());
    let r = Rule::parse("birthCountry(?a, ?b) => nationality(?a, ?b)", &kg).unwrap().canonicalize();
    assert!(rules.contains_key(&r));
}

#[test]
fn zero_rounds_yield_nothing() {
    let kg = fixture();
    let config = AnytimeConfig { rounds: 0, ..AnytimeConfig::default() };
    assert!(mine_anytime(&kg, config).unwrap().is_empty());
    assert!(amie::mine(&build_graph(0, 0, &[]), MinerConfig::default()).unwrap().is_empty());
}
