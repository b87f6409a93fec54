//! Rule quality measures.
//!
//! All counts are over distinct head substitutions. Support counts those whose
//! body fires and whose head is a known fact. The standard (closed-world)
//! confidence divides by every substitution that fires the body. The PCA
//! confidence only counts firing substitutions for which the graph knows at
//! least one head fact in the predicted direction: for the subject direction
//! `r(x, y')` must exist for some `y'`, for the object direction `r(x', y)`.

mod rudik;

pub use rudik::{marginal_weight, rudik_weight, ExampleSets};

use std::fmt;

use crate::error::{Error, Result};
use crate::kg::{EntityId, Fact, KnowledgeGraph};
use crate::query::{Binding, Query};
use crate::ratio::{ratio, Rational};
use crate::rule::{Atom, Rule, Term, Var};

/// Which head argument the PCA treats as functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PcaDirection {
    /// Predict objects of a known subject: requires some `r(x, y')`.
    Subject,
    /// Predict subjects of a known object: requires some `r(x', y)`.
    Object,
}

impl fmt::Display for PcaDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcaDirection::Subject => "subject",
            PcaDirection::Object => "object",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PcaMode {
    /// Subject direction iff functionality >= inverse functionality.
    Auto,
    Fixed(PcaDirection),
}

impl PcaMode {
    pub const SUBJECT: PcaMode = PcaMode::Fixed(PcaDirection::Subject);
    pub const OBJECT: PcaMode = PcaMode::Fixed(PcaDirection::Object);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConfidenceKind {
    Std,
    Pca,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RuleMetrics {
    pub support: u64,
    /// Fact count of the head relation.
    pub head_count: u64,
    pub body_size_cwa: u64,
    pub body_size_pca: u64,
    pub pca_direction: PcaDirection,
}

impl RuleMetrics {
    pub fn head_coverage(&self) -> Rational {
        ratio(self.support, self.head_count)
    }

    pub fn std_confidence(&self) -> Rational {
        ratio(self.support, self.body_size_cwa)
    }

    pub fn pca_confidence(&self) -> Rational {
        ratio(self.support, self.body_size_pca)
    }

    pub fn confidence(&self, kind: ConfidenceKind) -> Rational {
        match kind {
            ConfidenceKind::Std => self.std_confidence(),
            ConfidenceKind::Pca => self.pca_confidence(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PcaConfidence {
    pub confidence: Rational,
    pub body_size: u64,
    pub direction: PcaDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LazyOutcome {
    /// The threshold holds; the denominator is exact.
    Pass { denominator: u64 },
    /// Enumeration stopped once `witnesses` exceeded support / min_conf.
    Fail { witnesses: u64 },
}

impl LazyOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, LazyOutcome::Pass { .. })
    }
}

/// Metric evaluation over one graph, optionally under object identity
/// (distinct variables bind distinct entities, none equal to a rule constant).
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    kg: &'a KnowledgeGraph,
    object_identity: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(kg: &'a KnowledgeGraph) -> Self {
        Evaluator { kg, object_identity: false }
    }

    pub fn with_object_identity(mut self, on: bool) -> Self {
        self.object_identity = on;
        self
    }

    pub fn graph(&self) -> &'a KnowledgeGraph {
        self.kg
    }

    pub fn object_identity(&self) -> bool {
        self.object_identity
    }

    /// Query over `atoms`; `extra` names variables exempt from object identity.
    fn query(&self, rule: &Rule, atoms: Vec<Atom>, num_vars: usize, exempt: Option<Var>) -> Query<'a> {
        let q = Query::new(self.kg, atoms, num_vars);
        if self.object_identity {
            let vars = rule.vars().into_iter().filter(|v| Some(*v) != exempt);
            q.with_distinct(vars, rule.constants())
        } else {
            q
        }
    }

    pub(crate) fn body_query(&self, rule: &Rule) -> Query<'a> {
        self.query(rule, rule.body.clone(), rule.var_bound() as usize, None)
    }

    /// Binds the head atom to a fact; false if it does not unify.
    pub(crate) fn bind_head(q: &Query<'_>, b: &mut Binding, head: &Atom, s: EntityId, o: EntityId) -> bool {
        let unify = |b: &mut Binding, t: Term, e: EntityId| match t {
            Term::Const(c) => c == e,
            Term::Var(v) => q.try_bind(b, v, e),
        };
        unify(b, head.subject, s) && unify(b, head.object, o)
    }

    pub fn support(&self, rule: &Rule) -> Result<u64> {
        if !rule.is_connected() {
            return Err(Error::DisconnectedRule);
        }
        let q = self.body_query(rule);
        let all = q.all_atoms();
        let mut count = 0;
        let mut b = q.empty_binding();
        for (s, o) in self.head_candidates(&rule.head) {
            b.iter_mut().for_each(|x| *x = None);
            if Self::bind_head(&q, &mut b, &rule.head, s, o) && q.exists(&mut b, all) {
                count += 1;
            }
        }
        Ok(count)
    }

    pub(crate) fn head_candidates(&self, head: &Atom) -> Vec<(EntityId, EntityId)> {
        match (head.subject, head.object) {
            (Term::Const(s), Term::Const(o)) => {
                if self.kg.contains(s, head.relation, o) {
                    vec![(s, o)]
                } else {
                    vec![]
                }
            }
            (Term::Const(s), _) => self.kg.objects(head.relation, s).iter().map(|&o| (s, o)).collect(),
            (_, Term::Const(o)) => self.kg.subjects(head.relation, o).iter().map(|&s| (s, o)).collect(),
            _ => self.kg.pairs(head.relation).to_vec(),
        }
    }

    pub fn head_coverage(&self, rule: &Rule) -> Result<Rational> {
        let count = self.kg.fact_count(rule.head.relation);
        if count == 0 {
            return Err(Error::UndefinedHeadCoverage);
        }
        Ok(ratio(self.support(rule)?, count))
    }

    fn check_confidence_preconditions(rule: &Rule) -> Result<()> {
        if rule.body.is_empty() {
            return Err(Error::EmptyBody);
        }
        if !rule.is_connected() {
            return Err(Error::DisconnectedRule);
        }
        if !rule.is_safe() {
            return Err(Error::UnsafeRule);
        }
        Ok(())
    }

    /// Distinct head substitutions that fire the body.
    fn cwa_denominator(&self, rule: &Rule, limit: Option<u64>) -> crate::query::Projection {
        let q = self.body_query(rule);
        let mut b = q.empty_binding();
        q.count_projections(&mut b, &rule.head_vars(), limit)
    }

    fn pca_denominator(&self, rule: &Rule, direction: PcaDirection, limit: Option<u64>) -> crate::query::Projection {
        let fresh = Var(rule.var_bound());
        let head = rule.head;
        let probe = match direction {
            PcaDirection::Subject => Atom::new(head.relation, head.subject, Term::Var(fresh)),
            PcaDirection::Object => Atom::new(head.relation, Term::Var(fresh), head.object),
        };
        let mut atoms = rule.body.clone();
        atoms.push(probe);
        // the witness head fact may be the prediction itself, so the fresh
        // variable is not bound by object identity
        let q = self.query(rule, atoms, fresh.0 as usize + 1, Some(fresh));
        let mut b = q.empty_binding();
        q.count_projections(&mut b, &rule.head_vars(), limit)
    }

    pub fn std_confidence(&self, rule: &Rule) -> Result<(Rational, u64)> {
        Self::check_confidence_preconditions(rule)?;
        let support = self.support(rule)?;
        let den = self.cwa_denominator(rule, None).count;
        Ok((ratio(support, den), den))
    }

    pub fn resolve_direction(&self, rule: &Rule, mode: PcaMode) -> PcaDirection {
        match mode {
            PcaMode::Fixed(d) => d,
            PcaMode::Auto => match self.kg.relation_stats(rule.head.relation) {
                Ok(st) if st.functionality < st.inverse_functionality => PcaDirection::Object,
                _ => PcaDirection::Subject,
            },
        }
    }

    pub fn pca_confidence(&self, rule: &Rule, mode: PcaMode) -> Result<PcaConfidence> {
        Self::check_confidence_preconditions(rule)?;
        let direction = self.resolve_direction(rule, mode);
        let support = self.support(rule)?;
        let den = self.pca_denominator(rule, direction, None).count;
        Ok(PcaConfidence { confidence: ratio(support, den), body_size: den, direction })
    }

    /// All four measures, computed exactly.
    pub fn evaluate(&self, rule: &Rule, mode: PcaMode) -> Result<RuleMetrics> {
        Self::check_confidence_preconditions(rule)?;
        let direction = self.resolve_direction(rule, mode);
        let support = self.support(rule)?;
        Ok(self.complete_metrics(rule, support, direction))
    }

    pub(crate) fn complete_metrics(&self, rule: &Rule, support: u64, direction: PcaDirection) -> RuleMetrics {
        RuleMetrics {
            support,
            head_count: self.kg.fact_count(rule.head.relation),
            body_size_cwa: self.cwa_denominator(rule, None).count,
            body_size_pca: self.pca_denominator(rule, direction, None).count,
            pca_direction: direction,
        }
    }

    /// Enumerates confidence-denominator witnesses only until the confidence
    /// is known to fall below `min_conf`. Accepts exactly when the eager
    /// confidence `support / denominator` is at least `min_conf`.
    pub fn lazy_denominator(
        &self,
        rule: &Rule,
        kind: ConfidenceKind,
        direction: PcaDirection,
        support: u64,
        min_conf: Rational,
    ) -> Result<LazyOutcome> {
        Self::check_confidence_preconditions(rule)?;
        assert!(*min_conf.numer() > 0 && min_conf <= Rational::from(1), "min_conf must lie in (0, 1]");
        if support == 0 {
            return Ok(LazyOutcome::Fail { witnesses: 0 });
        }
        // largest denominator d with support / d >= min_conf
        let limit = (Rational::from(support as i128) / min_conf).floor().to_integer() as u64;
        let p = match kind {
            ConfidenceKind::Std => self.cwa_denominator(rule, Some(limit)),
            ConfidenceKind::Pca => self.pca_denominator(rule, direction, Some(limit)),
        };
        Ok(if p.aborted {
            LazyOutcome::Fail { witnesses: p.count }
        } else {
            LazyOutcome::Pass { denominator: p.count }
        })
    }

    /// Head instantiations whose body fires, in id order, deduplicated.
    pub fn predictions(&self, rule: &Rule) -> Result<Vec<Fact>> {
        if !rule.is_connected() {
            return Err(Error::DisconnectedRule);
        }
        if !rule.is_safe() {
            return Err(Error::UnsafeRule);
        }
        let q = self.body_query(rule);
        let mut b = q.empty_binding();
        let mut out = Vec::new();
        let head = rule.head;
        let value = |b: &Binding, t: Term| match t {
            Term::Const(c) => c,
            Term::Var(v) => b[v.0 as usize].expect("safe rule binds head variables"),
        };
        q.search(&mut b, q.all_atoms(), &mut |b| {
            out.push(Fact::new(value(b, head.subject), head.relation, value(b, head.object)));
            true
        });
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Whether the rule, instantiated at `fact` through its head, fires.
    pub fn fires_at(&self, rule: &Rule, fact: &Fact) -> bool {
        if rule.head.relation != fact.relation {
            return false;
        }
        let q = self.body_query(rule);
        let mut b = q.empty_binding();
        Self::bind_head(&q, &mut b, &rule.head, fact.subject, fact.object) && q.exists(&mut b, q.all_atoms())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> KnowledgeGraph {
        KnowledgeGraph::load_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/sample_kg.tsv")).unwrap()
    }

    fn rule(kg: &KnowledgeGraph, text: &str) -> Rule {
        Rule::parse(text, kg).unwrap()
    }

    const R: &str = "birthCountry(?x, ?z) & officialLang(?z, ?y) => speaks(?x, ?y)";

    #[test]
    fn support_examples() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        assert_eq!(ev.support(&rule(&kg, R)).unwrap(), 2);
        assert_eq!(ev.support(&rule(&kg, "=> speaks(?x, ?y)")).unwrap(), 3);
        assert_eq!(ev.support(&rule(&kg, "gender(?x, ?z) & worksFor(?z, ?y) => speaks(?x, ?y)")).unwrap(), 0);
        assert!(matches!(
            ev.support(&rule(&kg, "speaks(?x, ?z1) & officialLang(?z2, ?z3) => speaks(?x, ?y)")),
            Err(Error::DisconnectedRule)
        ));
    }

    #[test]
    fn head_coverage_examples() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        assert_eq!(ev.head_coverage(&rule(&kg, R)).unwrap(), Rational::new(2, 3));
        assert_eq!(ev.head_coverage(&rule(&kg, "=> speaks(?x, ?y)")).unwrap(), Rational::from(1));
        assert_eq!(
            ev.head_coverage(&rule(&kg, "gender(?x, ?z) & worksFor(?z, ?y) => speaks(?x, ?y)")).unwrap(),
            Rational::from(0)
        );
    }

    #[test]
    fn std_confidence_examples() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        assert_eq!(ev.std_confidence(&rule(&kg, R)).unwrap(), (Rational::new(2, 3), 3));
        assert_eq!(
            ev.std_confidence(&rule(&kg, "nationality(?x, ?z) & officialLang(?z, ?y) => speaks(?x, ?y)")).unwrap().0,
            Rational::new(2, 3)
        );
        assert_eq!(
            ev.std_confidence(&rule(&kg, "birthCountry(?x, ?y) => nationality(?x, ?y)")).unwrap(),
            (Rational::from(1), 3)
        );
        assert!(matches!(ev.std_confidence(&rule(&kg, "=> speaks(?x, ?y)")), Err(Error::EmptyBody)));
    }

    #[test]
    fn pca_confidence_examples() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        let pca = ev.pca_confidence(&rule(&kg, R), PcaMode::SUBJECT).unwrap();
        assert_eq!(pca.confidence, Rational::from(1));
        assert_eq!(pca.body_size, 2);
        // speaks is more inverse-functional on this graph (one speaker per language)
        let auto = ev.pca_confidence(&rule(&kg, R), PcaMode::Auto).unwrap();
        assert_eq!(auto.direction, PcaDirection::Object);
        assert_eq!(auto.confidence, Rational::new(2, 3));
        let bn =
            ev.pca_confidence(&rule(&kg, "birthCountry(?x, ?y) => nationality(?x, ?y)"), PcaMode::SUBJECT).unwrap();
        assert_eq!(bn.confidence, Rational::from(1));
    }

    #[test]
    fn pca_equals_std_when_every_firing_has_a_head_fact() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        let r = rule(&kg, "birthCountry(?x, ?y) => nationality(?x, ?y)");
        let m = ev.evaluate(&r, PcaMode::SUBJECT).unwrap();
        assert_eq!(m.std_confidence(), m.pca_confidence());
    }

    #[test]
    fn lazy_denominator_examples() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        let r = rule(&kg, R);
        let d = PcaDirection::Subject;
        assert_eq!(
            ev.lazy_denominator(&r, ConfidenceKind::Std, d, 2, Rational::new(1, 10)).unwrap(),
            LazyOutcome::Pass { denominator: 3 }
        );
        assert_eq!(
            ev.lazy_denominator(&r, ConfidenceKind::Std, d, 2, Rational::new(9, 10)).unwrap(),
            LazyOutcome::Fail { witnesses: 3 }
        );
        assert_eq!(
            ev.lazy_denominator(&r, ConfidenceKind::Pca, d, 2, Rational::from(1)).unwrap(),
            LazyOutcome::Pass { denominator: 2 }
        );
    }

    #[test]
    fn predictions_and_firing() {
        let kg = fixture();
        let ev = Evaluator::new(&kg);
        let r = rule(&kg, R);
        let preds = ev.predictions(&r).unwrap();
        assert_eq!(preds.len(), 3);
        let merkel_german = Fact::new(
            kg.entity_id("A._Merkel").unwrap(),
            kg.relation_id("speaks").unwrap(),
            kg.entity_id("German").unwrap(),
        );
        assert!(preds.contains(&merkel_german));
        assert!(ev.fires_at(&r, &merkel_german));
    }

    #[test]
    fn object_identity_rejects_shared_entities() {
        let kg = KnowledgeGraph::load_triples("a\tp\tb\nb\tp\ta\na\tq\ta\n".as_bytes(), crate::kg::TripleFormat::Tsv)
            .unwrap();
        // p(x,z) & p(z,y) => q(x,y) fires on x=y=a through z=b
        let r = Rule::parse("p(?x, ?z) & p(?z, ?y) => q(?x, ?y)", &kg).unwrap();
        assert_eq!(Evaluator::new(&kg).support(&r).unwrap(), 1);
        assert_eq!(Evaluator::new(&kg).with_object_identity(true).support(&r).unwrap(), 0);
    }
}
