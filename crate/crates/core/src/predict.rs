//! Rule execution: new facts, ranked completion, negative examples, rule-set
//! selection and inconsistency detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kg::{EntityId, Fact, KnowledgeGraph, RelationId};
use crate::metrics::{Evaluator, ExampleSets};
use crate::ratio::Rational;
use crate::rule::{parse_rule, Atom, Rule, RuleDisplay, Term};

/// A head instantiation whose body fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Derivation {
    pub fact: Fact,
    pub in_kg: bool,
}

/// Every fact the rule derives on `kg`, in id order.
pub fn apply_rule(kg: &KnowledgeGraph, rule: &Rule) -> Result<Vec<Derivation>> {
    let facts = Evaluator::new(kg).predictions(rule)?;
    Ok(facts.into_iter().map(|fact| Derivation { fact, in_kg: kg.contains_fact(&fact) }).collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoredRule {
    pub rule: Rule,
    pub confidence: Rational,
}

/// A derived fact with every rule that derives it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub fact: Fact,
    /// Rule index and confidence, best first.
    pub sources: Vec<(usize, Rational)>,
    pub in_kg: bool,
}

fn sort_sources(sources: &mut [(usize, Rational)]) {
    sources.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Derivations of all rules merged per fact, in fact order.
pub fn apply_rules(kg: &KnowledgeGraph, rules: &[ScoredRule]) -> Result<Vec<Prediction>> {
    let mut by_fact: BTreeMap<Fact, Vec<(usize, Rational)>> = BTreeMap::new();
    for (i, sr) in rules.iter().enumerate() {
        for d in apply_rule(kg, &sr.rule)? {
            by_fact.entry(d.fact).or_default().push((i, sr.confidence));
        }
    }
    Ok(by_fact
        .into_iter()
        .map(|(fact, mut sources)| {
            sort_sources(&mut sources);
            Prediction { fact, sources, in_kg: kg.contains_fact(&fact) }
        })
        .collect())
}

/// `r(h, ?)` or `r(?, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompletionQuery {
    pub relation: RelationId,
    pub subject: Option<EntityId>,
    pub object: Option<EntityId>,
}

impl CompletionQuery {
    pub fn parse(text: &str, kg: &KnowledgeGraph) -> Result<Self> {
        let err = || Error::RuleSyntax(format!("malformed query `{text}`, expected `rel(a, ?)` or `rel(?, b)`"));
        let t = text.trim();
        let open = t.find('(').ok_or_else(err)?;
        let inner = t[open + 1..].strip_suffix(')').ok_or_else(err)?;
        let (a, b) = inner.split_once(',').ok_or_else(err)?;
        let name = t[..open].trim();
        let relation = kg.relation_id(name).ok_or_else(|| Error::UnknownRelation(name.to_string()))?;
        let side = |s: &str| -> Result<Option<EntityId>> {
            match s.trim() {
                "?" => Ok(None),
                label => kg.entity_id(label).map(Some).ok_or_else(|| Error::UnknownEntity(label.to_string())),
            }
        };
        let (subject, object) = (side(a)?, side(b)?);
        if subject.is_some() == object.is_some() {
            return Err(err());
        }
        Ok(CompletionQuery { relation, subject, object })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub entity: EntityId,
    /// Confidences of the deriving rules, best first.
    pub confidences: Vec<Rational>,
    /// Indices of the deriving rules, aligned with `confidences`.
    pub rules: Vec<usize>,
    pub in_kg: bool,
}

/// Answers of `query` from each rule, unordered.
fn answers(ev: &Evaluator<'_>, rule: &Rule, query: &CompletionQuery) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    let head = rule.head;
    if head.relation != query.relation || !rule.is_safe() || !rule.is_connected() {
        return out;
    }
    let (known_term, known, free_term) = match (query.subject, query.object) {
        (Some(s), None) => (head.subject, s, head.object),
        (None, Some(o)) => (head.object, o, head.subject),
        _ => return out,
    };
    let q = ev.body_query(rule);
    let mut b = q.empty_binding();
    match known_term {
        Term::Const(c) if c != known => return out,
        Term::Const(_) => {}
        Term::Var(v) => {
            if !q.try_bind(&mut b, v, known) {
                return out;
            }
        }
    }
    match free_term {
        Term::Const(c) => {
            if q.exists(&mut b, q.all_atoms()) {
                out.insert(c);
            }
        }
        Term::Var(v) => {
            if b[v.0 as usize].is_some() {
                // both head arguments are the same variable
                if q.exists(&mut b, q.all_atoms()) {
                    out.insert(known);
                }
            } else {
                q.search(&mut b, q.all_atoms(), &mut |b| {
                    out.insert(b[v.0 as usize].expect("safe rule binds its head"));
                    true
                });
            }
        }
    }
    out
}

/// Candidates ranked by their descending confidence vectors compared
/// lexicographically; a vector that extends an equal prefix ranks higher.
/// Remaining ties go by entity label.
pub fn complete(kg: &KnowledgeGraph, rules: &[ScoredRule], query: &CompletionQuery) -> Vec<Candidate> {
    let ev = Evaluator::new(kg);
    let mut by_entity: BTreeMap<EntityId, Vec<(usize, Rational)>> = BTreeMap::new();
    for (i, sr) in rules.iter().enumerate() {
        for e in answers(&ev, &sr.rule, query) {
            by_entity.entry(e).or_default().push((i, sr.confidence));
        }
    }
    let mut out: Vec<Candidate> = by_entity
        .into_iter()
        .map(|(entity, mut sources)| {
            sort_sources(&mut sources);
            let (s, o) = match query.subject {
                Some(s) => (s, entity),
                None => (entity, query.object.expect("one side is known")),
            };
            Candidate {
                entity,
                confidences: sources.iter().map(|x| x.1).collect(),
                rules: sources.iter().map(|x| x.0).collect(),
                in_kg: kg.contains(s, query.relation, o),
            }
        })
        .collect();
    // Vec's Ord is lexicographic with shorter-prefix-first, as required
    out.sort_by(|a, b| {
        b.confidences.cmp(&a.confidences).then_with(|| kg.entity_label(a.entity).cmp(kg.entity_label(b.entity)))
    });
    out
}

/// Local closed-world negatives: `r(s, o)` for every subject `s` with some
/// `r` fact and every object `o` of `r`, whenever the fact is absent.
pub fn generate_negatives(kg: &KnowledgeGraph, relation: RelationId) -> BTreeSet<Fact> {
    let pairs = kg.pairs(relation);
    let mut subjects: Vec<EntityId> = pairs.iter().map(|p| p.0).collect();
    subjects.dedup();
    let mut objects: Vec<EntityId> = pairs.iter().map(|p| p.1).collect();
    objects.sort_unstable();
    objects.dedup();
    let mut out = BTreeSet::new();
    for &s in &subjects {
        for &o in &objects {
            if !kg.contains(s, relation, o) {
                out.insert(Fact::new(s, relation, o));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Chosen rules, in order of selection.
    pub rules: Vec<Rule>,
    /// Weight of the empty set followed by the weight after each choice.
    pub weights: Vec<Rational>,
}

/// Repeatedly adds the candidate with the most negative marginal weight and
/// stops once no candidate lowers the weight. Ties go to the smaller
/// canonical rule text.
pub fn select_rules_greedy(
    kg: &KnowledgeGraph,
    candidates: &[Rule],
    examples: &ExampleSets,
    alpha: Rational,
) -> Result<Selection> {
    let positives: Vec<Fact> = examples.positives().iter().copied().collect();
    let negatives: Vec<Fact> = examples.negatives().iter().copied().collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::DegenerateExamples);
    }
    assert!(alpha >= Rational::from(0) && alpha <= Rational::from(1), "alpha must lie in [0, 1]");
    let ev = Evaluator::new(kg);
    let cover = |rule: &Rule, set: &[Fact]| -> Vec<bool> { set.iter().map(|f| ev.fires_at(rule, f)).collect() };
    let mut pool: Vec<(String, Rule, Vec<bool>, Vec<bool>)> = candidates
        .iter()
        .map(|r| {
            let canonical = r.canonicalize();
            (canonical.display(kg).to_string(), r.clone(), cover(r, &positives), cover(r, &negatives))
        })
        .collect();
    pool.sort_by(|a, b| a.0.cmp(&b.0));

    let (g, v) = (positives.len() as i128, negatives.len() as i128);
    let weight = |pos: &[bool], neg: &[bool]| {
        let uncovered = pos.iter().filter(|c| !**c).count() as i128;
        let covered = neg.iter().filter(|c| **c).count() as i128;
        alpha * Rational::new(uncovered, g) + (Rational::from(1) - alpha) * Rational::new(covered, v)
    };
    let union = |a: &[bool], b: &[bool]| -> Vec<bool> { a.iter().zip(b).map(|(x, y)| *x || *y).collect() };

    let mut pos = vec![false; positives.len()];
    let mut neg = vec![false; negatives.len()];
    let mut current = weight(&pos, &neg);
    let mut selection = Selection { rules: Vec::new(), weights: vec![current] };
    loop {
        let best = pool
            .iter()
            .enumerate()
            .map(|(i, (_, _, cp, cn))| (weight(&union(&pos, cp), &union(&neg, cn)) - current, i))
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((marginal, i)) = best else { break };
        if marginal >= Rational::from(0) {
            break;
        }
        let (_, rule, cp, cn) = pool.remove(i);
        pos = union(&pos, &cp);
        neg = union(&neg, &cn);
        current += marginal;
        selection.rules.push(rule);
        selection.weights.push(current);
    }
    Ok(selection)
}

/// A rule whose head is negated: when the body fires, the head fact is
/// asserted false.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeRule {
    pub rule: Rule,
}

impl NegativeRule {
    /// Parses `body => !head(...)`.
    pub fn parse(text: &str, kg: &KnowledgeGraph) -> Result<Self> {
        let (rule, negated) = parse_rule(text, kg)?;
        if !negated {
            return Err(Error::RuleSyntax(format!("expected a negated head `=> !rel(..)` in `{text}`")));
        }
        Ok(NegativeRule { rule })
    }

    pub fn display<'a>(&'a self, kg: &'a KnowledgeGraph) -> impl fmt::Display + 'a {
        RuleDisplay::negated(&self.rule, kg)
    }
}

/// A graph fact contradicted by a negative rule.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Inconsistency {
    pub fact: Fact,
    pub rule: usize,
    /// Body facts of one firing that yields the contradiction.
    pub witness: Vec<Fact>,
}

fn ground(atom: &Atom, b: &[Option<EntityId>]) -> Fact {
    let value = |t: Term| match t {
        Term::Const(c) => c,
        Term::Var(v) => b[v.0 as usize].expect("complete solution"),
    };
    Fact::new(value(atom.subject), atom.relation, value(atom.object))
}

pub fn find_inconsistencies(kg: &KnowledgeGraph, rules: &[NegativeRule]) -> Vec<Inconsistency> {
    let ev = Evaluator::new(kg);
    let mut out = Vec::new();
    for (i, nr) in rules.iter().enumerate() {
        let rule = &nr.rule;
        if !rule.is_connected() {
            continue;
        }
        let q = ev.body_query(rule);
        for (s, o) in ev.head_candidates(&rule.head) {
            let mut b = q.empty_binding();
            if !Evaluator::bind_head(&q, &mut b, &rule.head, s, o) {
                continue;
            }
            let mut witness = None;
            q.search(&mut b, q.all_atoms(), &mut |b| {
                witness = Some(rule.body.iter().map(|a| ground(a, b)).collect::<Vec<_>>());
                false
            });
            if let Some(witness) = witness {
                out.push(Inconsistency { fact: Fact::new(s, rule.head.relation, o), rule: i, witness });
            }
        }
    }
    out.sort();
    out
}
