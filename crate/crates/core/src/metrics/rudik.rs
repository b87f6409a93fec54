//! Weighted coverage of positive and negative example sets.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::kg::Fact;
use crate::ratio::Rational;
use crate::rule::Rule;

use super::Evaluator;

/// Positive and negative ground head facts; the two sets are disjoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExampleSets {
    positives: BTreeSet<Fact>,
    negatives: BTreeSet<Fact>,
}

impl ExampleSets {
    /// Fails if a fact is both positive and negative.
    pub fn new(positives: BTreeSet<Fact>, negatives: BTreeSet<Fact>) -> Result<Self> {
        if positives.intersection(&negatives).next().is_some() {
            return Err(Error::DegenerateExamples);
        }
        Ok(ExampleSets { positives, negatives })
    }

    pub fn positives(&self) -> &BTreeSet<Fact> {
        &self.positives
    }

    pub fn negatives(&self) -> &BTreeSet<Fact> {
        &self.negatives
    }

    fn check(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            Err(Error::DegenerateExamples)
        } else {
            Ok(())
        }
    }
}

fn covered<'s>(ev: &Evaluator<'_>, rules: &[Rule], set: &'s BTreeSet<Fact>) -> Vec<&'s Fact> {
    set.iter().filter(|f| rules.iter().any(|r| ev.fires_at(r, f))).collect()
}

/// `alpha * uncovered_positives / |G| + (1 - alpha) * covered_negatives / |V|`.
/// Lower is better; the empty rule set weighs `alpha`.
pub fn rudik_weight(ev: &Evaluator<'_>, rules: &[Rule], examples: &ExampleSets, alpha: Rational) -> Result<Rational> {
    examples.check()?;
    assert!(alpha >= Rational::from(0) && alpha <= Rational::from(1), "alpha must lie in [0, 1]");
    let g = examples.positives.len() as i128;
    let v = examples.negatives.len() as i128;
    let uncovered = g - covered(ev, rules, &examples.positives).len() as i128;
    let covered_neg = covered(ev, rules, &examples.negatives).len() as i128;
    Ok(alpha * Rational::new(uncovered, g) + (Rational::from(1) - alpha) * Rational::new(covered_neg, v))
}

/// Weight change from adding `rule` to `rules`.
pub fn marginal_weight(
    ev: &Evaluator<'_>,
    rules: &[Rule],
    rule: &Rule,
    examples: &ExampleSets,
    alpha: Rational,
) -> Result<Rational> {
    let before = rudik_weight(ev, rules, examples, alpha)?;
    let mut extended = rules.to_vec();
    extended.push(rule.clone());
    Ok(rudik_weight(ev, &extended, examples, alpha)? - before)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KnowledgeGraph, TripleFormat};

    // p(x,y) predicts q on a,b and c; r(x,y) predicts q on n1
    fn graph() -> KnowledgeGraph {
        let text = "a\tp\t1\nb\tp\t1\nc\tp\t1\nn1\tr\t1\nn2\tr2\t1\na\tq\t1\nn2\tq\t2\n";
        KnowledgeGraph::load_triples(text.as_bytes(), TripleFormat::Tsv).unwrap()
    }

    fn fact(kg: &KnowledgeGraph, s: &str, o: &str) -> Fact {
        Fact::new(kg.entity_id(s).unwrap(), kg.relation_id("q").unwrap(), kg.entity_id(o).unwrap())
    }

    fn examples(kg: &KnowledgeGraph, pos: &[&str], neg: &[&str]) -> ExampleSets {
        ExampleSets::new(pos.iter().map(|s| fact(kg, s, "1")).collect(), neg.iter().map(|s| fact(kg, s, "1")).collect())
            .unwrap()
    }

    #[test]
    fn weight_of_empty_set_is_alpha() {
        let kg = graph();
        let ev = Evaluator::new(&kg);
        let ex = examples(&kg, &["a", "b", "c"], &["n1", "n2"]);
        assert_eq!(rudik_weight(&ev, &[], &ex, Rational::new(3, 10)).unwrap(), Rational::new(3, 10));
    }

    #[test]
    fn partial_and_perfect_coverage() {
        let kg = graph();
        let ev = Evaluator::new(&kg);
        let p = Rule::parse("p(?x, ?y) => q(?x, ?y)", &kg).unwrap();
        let ex = examples(&kg, &["a", "b", "c"], &["n1", "n2"]);
        assert_eq!(rudik_weight(&ev, std::slice::from_ref(&p), &ex, Rational::new(1, 2)).unwrap(), Rational::from(0));
        let two_of_three = examples(&kg, &["a", "b", "n2"], &["n1"]);
        assert_eq!(rudik_weight(&ev, &[p], &two_of_three, Rational::new(1, 2)).unwrap(), Rational::new(1, 6));
    }

    #[test]
    fn marginal_weights() {
        let kg = graph();
        let ev = Evaluator::new(&kg);
        let p = Rule::parse("p(?x, ?y) => q(?x, ?y)", &kg).unwrap();
        let r = Rule::parse("r(?x, ?y) => q(?x, ?y)", &kg).unwrap();
        let r2 = Rule::parse("r2(?x, ?y) => q(?x, ?y)", &kg).unwrap();
        let ex = examples(&kg, &["a", "b", "c"], &["n1", "n2"]);
        assert_eq!(marginal_weight(&ev, &[], &r2, &ex, Rational::from(1)).unwrap(), Rational::from(0));
        let single = examples(&kg, &["a", "b", "n2"], &["n1"]);
        assert_eq!(marginal_weight(&ev, &[], &r2, &single, Rational::from(1)).unwrap(), Rational::new(-1, 3));
        assert_eq!(marginal_weight(&ev, &[], &r, &ex, Rational::new(1, 2)).unwrap(), Rational::new(1, 4));
        assert_eq!(
            marginal_weight(&ev, std::slice::from_ref(&p), &p, &ex, Rational::new(1, 2)).unwrap(),
            Rational::from(0)
        );
    }

    #[test]
    fn degenerate_sets_are_rejected() {
        let kg = graph();
        let ev = Evaluator::new(&kg);
        let ex = examples(&kg, &["a"], &[]);
        assert!(matches!(rudik_weight(&ev, &[], &ex, Rational::from(1)), Err(Error::DegenerateExamples)));
        let f = fact(&kg, "a", "1");
        assert!(ExampleSets::new([f].into(), [f].into()).is_err());
    }
}
