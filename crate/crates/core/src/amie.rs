//! Top-down rule mining by refinement.
//!
//! Search starts from `=> r(?a, ?b)` for every relation and adds one atom at a
//! time: a dangling atom (one existing and one fresh variable), a closing atom
//! (two existing variables) or, when enabled, an instantiated atom (an
//! existing variable and a constant). Rules are expanded while their head
//! coverage stays above the threshold; head coverage can only drop under
//! refinement, so nothing below it is ever reached again.
//!
//! The supports of all refinements of a rule are computed in a single pass
//! over the rule's own solutions: every solution is inspected for the atoms
//! that could extend it, and each extension is counted once per head
//! substitution.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::metrics::{ConfidenceKind, Evaluator, LazyOutcome, PcaMode, RuleMetrics};
use crate::query::Binding;
use crate::ratio::{ratio, Rational};
use crate::rule::{Atom, Rule, Term, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinerConfig {
    /// Maximum atoms per rule, head included.
    pub max_len: usize,
    pub min_head_coverage: Rational,
    pub min_std_confidence: Rational,
    pub min_pca_confidence: Rational,
    pub instantiation: bool,
    /// Measure used for the output threshold, skyline and perfect-rule cut.
    pub confidence_kind: ConfidenceKind,
    pub pca_mode: PcaMode,
    pub object_identity: bool,
    /// Skyline filter plus not refining rules that already reach confidence 1.
    pub skyline: bool,
    pub threads: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_len: 3,
            min_head_coverage: Rational::new(1, 100),
            min_std_confidence: Rational::new(1, 10),
            min_pca_confidence: Rational::new(1, 10),
            instantiation: false,
            confidence_kind: ConfidenceKind::Pca,
            pca_mode: PcaMode::SUBJECT,
            object_identity: false,
            skyline: true,
            threads: 1,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, r: &Rational| {
            if *r.numer() <= 0 || *r > Rational::from(1) {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1]")))
            } else {
                Ok(())
            }
        };
        if self.max_len < 2 {
            return Err(Error::InvalidConfig("max length must be at least 2".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("thread count must be positive".into()));
        }
        unit("min head coverage", &self.min_head_coverage)?;
        unit("min standard confidence", &self.min_std_confidence)?;
        unit("min PCA confidence", &self.min_pca_confidence)
    }

    fn min_confidence(&self) -> Rational {
        match self.confidence_kind {
            ConfidenceKind::Std => self.min_std_confidence,
            ConfidenceKind::Pca => self.min_pca_confidence,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinedRule {
    pub rule: Rule,
    pub metrics: RuleMetrics,
}

/// An atom that can be appended to a rule, in terms of its variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Extension {
    Closing(RelationId, Var, Var),
    /// `forward`: the existing variable is the subject.
    Dangling {
        relation: RelationId,
        var: Var,
        forward: bool,
    },
    Instantiated {
        relation: RelationId,
        var: Var,
        forward: bool,
        constant: EntityId,
    },
}

impl Extension {
    fn atom(self, fresh: Var) -> Atom {
        let v = Term::Var;
        match self {
            Extension::Closing(r, s, o) => Atom::new(r, v(s), v(o)),
            Extension::Dangling { relation, var, forward } => {
                if forward {
                    Atom::new(relation, v(var), v(fresh))
                } else {
                    Atom::new(relation, v(fresh), v(var))
                }
            }
            Extension::Instantiated { relation, var, forward, constant } => {
                if forward {
                    Atom::new(relation, v(var), Term::Const(constant))
                } else {
                    Atom::new(relation, Term::Const(constant), v(var))
                }
            }
        }
    }
}

/// Which extensions of a rule can still lead to a closed rule.
#[derive(Default)]
struct Plan {
    closing: Vec<(Var, Var)>,
    dangling: Vec<Var>,
    instantiated: Vec<Var>,
}

impl Plan {
    fn is_empty(&self) -> bool {
        self.closing.is_empty() && self.dangling.is_empty() && self.instantiated.is_empty()
    }
}

struct NodeOutcome {
    output: Option<(Rational, RuleMetrics)>,
    children: Vec<(Rule, u64)>,
}

pub struct Miner<'a> {
    kg: &'a KnowledgeGraph,
    config: MinerConfig,
    ev: Evaluator<'a>,
}

impl<'a> Miner<'a> {
    pub fn new(kg: &'a KnowledgeGraph, config: MinerConfig) -> Result<Self> {
        config.validate()?;
        let ev = Evaluator::new(kg).with_object_identity(config.object_identity);
        Ok(Miner { kg, config, ev })
    }

    pub fn config(&self) -> &MinerConfig {
        &self.config
    }

    /// `=> r(?a, ?b)` per non-empty relation, plus `=> r(?a, C)` and
    /// `=> r(C, ?a)` per constant when instantiation is on.
    pub fn seeds(&self) -> Vec<Rule> {
        let mut out = Vec::new();
        let (a, b) = (Term::Var(Var(0)), Term::Var(Var(1)));
        for r in self.kg.relation_ids() {
            if self.kg.fact_count(r) == 0 {
                continue;
            }
            out.push(Rule::new(Vec::new(), Atom::new(r, a, b)));
            if self.config.instantiation {
                let pairs = self.kg.pairs(r);
                let mut objects: Vec<EntityId> = pairs.iter().map(|p| p.1).collect();
                objects.sort_unstable();
                objects.dedup();
                out.extend(objects.into_iter().map(|c| Rule::new(Vec::new(), Atom::new(r, a, Term::Const(c)))));
                let mut subjects: Vec<EntityId> = pairs.iter().map(|p| p.0).collect();
                subjects.dedup();
                out.extend(subjects.into_iter().map(|c| Rule::new(Vec::new(), Atom::new(r, Term::Const(c), a))));
            }
        }
        out
    }

    fn closable(&self, rule: &Rule) -> bool {
        rule.len() <= self.config.max_len && rule.open_vars().len().div_ceil(2) <= self.config.max_len - rule.len()
    }

    /// Appends `atom` unless it is reflexive, repeats an atom of the rule or
    /// leaves the rule unable to close within the length bound.
    fn extend(&self, parent: &Rule, atom: Atom) -> Option<Rule> {
        if atom.subject == atom.object || atom == parent.head || parent.body.contains(&atom) {
            return None;
        }
        let mut body = parent.body.clone();
        body.push(atom);
        let child = Rule::new(body, parent.head);
        self.closable(&child).then_some(child)
    }

    fn finish(children: impl IntoIterator<Item = Rule>) -> Vec<Rule> {
        let mut out: Vec<Rule> = children.into_iter().map(|r| r.canonicalize()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn refine_dangling(&self, rule: &Rule) -> Vec<Rule> {
        let fresh = Var(rule.var_bound());
        let mut out = Vec::new();
        for var in rule.vars() {
            for relation in self.kg.relation_ids() {
                for forward in [true, false] {
                    let atom = Extension::Dangling { relation, var, forward }.atom(fresh);
                    out.extend(self.extend(rule, atom));
                }
            }
        }
        Self::finish(out)
    }

    pub fn refine_closing(&self, rule: &Rule) -> Vec<Rule> {
        let vars = rule.vars();
        let mut out = Vec::new();
        for &s in &vars {
            for &o in &vars {
                if s == o {
                    continue;
                }
                for r in self.kg.relation_ids() {
                    out.extend(self.extend(rule, Extension::Closing(r, s, o).atom(s)));
                }
            }
        }
        Self::finish(out)
    }

    /// Instantiated atoms whose constant co-occurs with the variable in at
    /// least one solution of the rule. Empty when instantiation is off.
    pub fn refine_instantiated(&self, rule: &Rule) -> Vec<Rule> {
        if !self.config.instantiation {
            return Vec::new();
        }
        let plan = Plan { instantiated: self.plan(rule).instantiated, ..Plan::default() };
        let fresh = Var(rule.var_bound());
        let counts = self.extension_counts(rule, &plan);
        Self::finish(counts.into_keys().filter_map(|ext| self.extend(rule, ext.atom(fresh))))
    }

    fn plan(&self, rule: &Rule) -> Plan {
        let mut plan = Plan::default();
        if rule.len() >= self.config.max_len {
            return plan;
        }
        let vars = rule.vars();
        let fresh = Var(rule.var_bound());
        let probe = rule.head.relation;
        let fits = |atom: Atom| {
            let mut body = rule.body.clone();
            body.push(atom);
            self.closable(&Rule::new(body, rule.head))
        };
        for &s in &vars {
            for &o in &vars {
                if s != o && fits(Extension::Closing(probe, s, o).atom(fresh)) {
                    plan.closing.push((s, o));
                }
            }
            if fits(Extension::Dangling { relation: probe, var: s, forward: true }.atom(fresh)) {
                plan.dangling.push(s);
            }
            if self.config.instantiation
                && fits(
                    Extension::Instantiated { relation: probe, var: s, forward: true, constant: EntityId(0) }
                        .atom(fresh),
                )
            {
                plan.instantiated.push(s);
            }
        }
        plan
    }

    /// Number of head substitutions of `rule` (with the head fact present)
    /// under which each planned extension is satisfiable.
    fn extension_counts(&self, rule: &Rule, plan: &Plan) -> FxHashMap<Extension, u64> {
        let mut counts: FxHashMap<Extension, u64> = FxHashMap::default();
        if plan.is_empty() {
            return counts;
        }
        let kg = self.kg;
        let oi = self.config.object_identity;
        let constants = rule.constants();
        let q = self.ev.body_query(rule);
        let all = q.all_atoms();
        let mut b = q.empty_binding();
        let mut local: FxHashSet<Extension> = FxHashSet::default();
        for (s, o) in self.ev.head_candidates(&rule.head) {
            b.iter_mut().for_each(|x| *x = None);
            if !Evaluator::bind_head(&q, &mut b, &rule.head, s, o) {
                continue;
            }
            local.clear();
            q.search(&mut b, all, &mut |b: &mut Binding| {
                let taken = |e: EntityId| b.contains(&Some(e));
                for &(u, v) in &plan.closing {
                    let (Some(eu), Some(ev)) = (b[u.0 as usize], b[v.0 as usize]) else { continue };
                    for &r in kg.relations_between(eu, ev) {
                        local.insert(Extension::Closing(r, u, v));
                    }
                }
                for &u in &plan.dangling {
                    let Some(e) = b[u.0 as usize] else { continue };
                    for &fi in kg.incident(e) {
                        let f = kg.fact(fi);
                        for (forward, other) in [(true, f.object), (false, f.subject)] {
                            let own = if forward { f.subject } else { f.object };
                            if own != e || (oi && (taken(other) || constants.contains(&other))) {
                                continue;
                            }
                            local.insert(Extension::Dangling { relation: f.relation, var: u, forward });
                        }
                    }
                }
                for &u in &plan.instantiated {
                    let Some(e) = b[u.0 as usize] else { continue };
                    for &fi in kg.incident(e) {
                        let f = kg.fact(fi);
                        for (forward, other) in [(true, f.object), (false, f.subject)] {
                            let own = if forward { f.subject } else { f.object };
                            if own != e || (oi && taken(other)) {
                                continue;
                            }
                            local.insert(Extension::Instantiated {
                                relation: f.relation,
                                var: u,
                                forward,
                                constant: other,
                            });
                        }
                    }
                }
                true
            });
            for ext in local.drain() {
                *counts.entry(ext).or_default() += 1;
            }
        }
        counts
    }

    fn passes_coverage(&self, support: u64, head_count: u64) -> bool {
        head_count > 0 && ratio(support, head_count) >= self.config.min_head_coverage
    }

    /// Children of `rule` passing the head-coverage threshold, with their
    /// supports.
    fn children(&self, rule: &Rule) -> Vec<(Rule, u64)> {
        let plan = self.plan(rule);
        let counts = self.extension_counts(rule, &plan);
        let head_count = self.kg.fact_count(rule.head.relation);
        let fresh = Var(rule.var_bound());
        let mut out: Vec<(Rule, u64)> = counts
            .into_iter()
            .filter(|&(_, support)| self.passes_coverage(support, head_count))
            .filter_map(|(ext, support)| self.extend(rule, ext.atom(fresh)).map(|c| (c.canonicalize(), support)))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Best confidence among already accepted rules whose body is a proper
    /// subset of this one's.
    fn dominated(&self, rule: &Rule, confidence: Rational, accepted: &FxHashMap<Rule, Rational>) -> bool {
        let n = rule.body.len();
        (1..(1u32 << n) - 1).any(|mask| {
            let body: Vec<Atom> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| rule.body[i]).collect();
            let ancestor = Rule::new(body, rule.head).canonicalize();
            accepted.get(&ancestor).is_some_and(|&c| c >= confidence)
        })
    }

    fn process(&self, rule: &Rule, support: u64, accepted: &FxHashMap<Rule, Rational>) -> NodeOutcome {
        let mut output = None;
        let mut perfect = false;
        if rule.len() >= 2 && rule.is_closed() {
            let kind = self.config.confidence_kind;
            let direction = self.ev.resolve_direction(rule, self.config.pca_mode);
            let lazy = self
                .ev
                .lazy_denominator(rule, kind, direction, support, self.config.min_confidence())
                .expect("closed rules are safe and connected");
            if let LazyOutcome::Pass { denominator } = lazy {
                if denominator > 0 {
                    let confidence = ratio(support, denominator);
                    perfect = confidence == Rational::from(1);
                    if !(self.config.skyline && self.dominated(rule, confidence, accepted)) {
                        output = Some((confidence, self.ev.complete_metrics(rule, support, direction)));
                    }
                }
            }
        }
        let children = if rule.len() < self.config.max_len && !(self.config.skyline && perfect) {
            self.children(rule)
        } else {
            Vec::new()
        };
        NodeOutcome { output, children }
    }

    fn seed_support(&self, seed: &Rule) -> u64 {
        self.ev.head_candidates(&seed.head).len() as u64
    }

    pub fn mine(&self) -> Result<Vec<MinedRule>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut level: Vec<(Rule, u64)> = self
            .seeds()
            .into_iter()
            .map(|s| {
                let support = self.seed_support(&s);
                (s.canonicalize(), support)
            })
            .filter(|(s, support)| self.passes_coverage(*support, self.kg.fact_count(s.head.relation)))
            .collect();
        level.sort();
        level.dedup();

        let mut accepted: FxHashMap<Rule, Rational> = FxHashMap::default();
        let mut mined = Vec::new();
        while !level.is_empty() {
            let outcomes: Vec<NodeOutcome> = pool
                .install(|| level.par_iter().map(|(rule, support)| self.process(rule, *support, &accepted)).collect());
            let mut next: BTreeMap<Rule, u64> = BTreeMap::new();
            for ((rule, _), outcome) in level.iter().zip(outcomes) {
                if let Some((confidence, metrics)) = outcome.output {
                    accepted.insert(rule.clone(), confidence);
                    mined.push(MinedRule { rule: rule.clone(), metrics });
                }
                for (child, support) in outcome.children {
                    let prev = next.insert(child, support);
                    debug_assert!(prev.is_none_or(|p| p == support));
                }
            }
            level = next.into_iter().collect();
        }
        sort_output(self.kg, &mut mined, self.config.confidence_kind);
        Ok(mined)
    }
}

/// Orders by head relation label, then descending confidence, descending
/// head coverage and rule text.
pub fn sort_output(kg: &KnowledgeGraph, rules: &mut [MinedRule], kind: ConfidenceKind) {
    rules.sort_by_cached_key(|m| {
        (
            kg.relation_label(m.rule.head.relation).to_string(),
            Reverse(m.metrics.confidence(kind)),
            Reverse(m.metrics.head_coverage()),
            m.rule.display(kg).to_string(),
            m.rule.clone(),
        )
    });
}

pub fn mine(kg: &KnowledgeGraph, config: MinerConfig) -> Result<Vec<MinedRule>> {
    Miner::new(kg, config)?.mine()
}
