//! Horn rules over binary relations.
//!
//! A rule is a conjunction of body atoms implying one head atom. Variables are
//! local to a rule; [`Rule::canonicalize`] renames them by first appearance
//! (head first, then body) and fixes the body order, so that rules equal up to
//! variable renaming and body reordering compare equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Const(EntityId),
}

impl Term {
    pub fn var(&self) -> Option<Var> {
        match self {
            Term::Var(v) => Some(*v),
            Term::Const(_) => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub relation: RelationId,
    pub subject: Term,
    pub object: Term,
}

impl Atom {
    pub fn new(relation: RelationId, subject: Term, object: Term) -> Self {
        Atom { relation, subject, object }
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        self.subject.var().into_iter().chain(self.object.var())
    }

    pub fn has_var(&self, v: Var) -> bool {
        self.subject == Term::Var(v) || self.object == Term::Var(v)
    }

    fn shares_var(&self, other: &Atom) -> bool {
        self.vars().any(|v| other.has_var(v))
    }

    pub fn apply(&self, sub: &Substitution) -> Atom {
        let map = |t: Term| match t {
            Term::Var(v) => sub.get(v).map_or(t, Term::Const),
            c => c,
        };
        Atom::new(self.relation, map(self.subject), map(self.object))
    }

    pub fn is_ground(&self) -> bool {
        !self.subject.is_var() && !self.object.is_var()
    }
}

/// Partial map from variables to entities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution(BTreeMap<Var, EntityId>);

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: Var) -> Option<EntityId> {
        self.0.get(&v).copied()
    }

    pub fn insert(&mut self, v: Var, e: EntityId) {
        self.0.insert(v, e);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, EntityId)> + '_ {
        self.0.iter().map(|(v, e)| (*v, *e))
    }

    /// True when no two variables share an entity.
    pub fn is_injective(&self) -> bool {
        let values: BTreeSet<_> = self.0.values().collect();
        values.len() == self.0.len()
    }
}

impl FromIterator<(Var, EntityId)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Var, EntityId)>>(iter: I) -> Self {
        Substitution(iter.into_iter().collect())
    }
}

pub fn apply_substitution(conj: &[Atom], sub: &Substitution) -> Vec<Atom> {
    conj.iter().map(|a| a.apply(sub)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub body: Vec<Atom>,
    pub head: Atom,
}

impl Rule {
    pub fn new(body: Vec<Atom>, head: Atom) -> Self {
        Rule { body, head }
    }

    /// Atom count including the head.
    pub fn len(&self) -> usize {
        self.body.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.head).chain(self.body.iter())
    }

    /// Distinct variables in first-appearance order (head, then body).
    pub fn vars(&self) -> Vec<Var> {
        let mut seen = Vec::new();
        for v in self.atoms().flat_map(|a| a.vars()) {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    pub fn head_vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.head.vars().collect();
        out.dedup();
        out
    }

    /// One past the largest variable index in use.
    pub fn var_bound(&self) -> u32 {
        self.atoms().flat_map(|a| a.vars()).map(|v| v.0 + 1).max().unwrap_or(0)
    }

    pub fn constants(&self) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self
            .atoms()
            .flat_map(|a| [a.subject, a.object])
            .filter_map(|t| match t {
                Term::Const(c) => Some(c),
                Term::Var(_) => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of atoms (head included) mentioning `v`.
    pub fn occurrences(&self, v: Var) -> usize {
        self.atoms().filter(|a| a.has_var(v)).count()
    }

    /// Variables that occur in exactly one atom.
    pub fn open_vars(&self) -> Vec<Var> {
        self.vars().into_iter().filter(|&v| self.occurrences(v) < 2).collect()
    }

    pub fn is_connected(&self) -> bool {
        let atoms: Vec<&Atom> = self.atoms().collect();
        let mut reached = vec![false; atoms.len()];
        reached[0] = true;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..atoms.len() {
                if !reached[j] && atoms[i].shares_var(atoms[j]) {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        reached.into_iter().all(|r| r)
    }

    pub fn is_safe(&self) -> bool {
        self.head.vars().all(|v| self.body.iter().any(|a| a.has_var(v)))
    }

    pub fn is_closed(&self) -> bool {
        self.vars().into_iter().all(|v| self.occurrences(v) >= 2)
    }

    pub fn is_recursive(&self) -> bool {
        self.body.iter().any(|a| a.relation == self.head.relation)
    }

    /// Canonical representative of the rule's equivalence class under
    /// variable renaming and body reordering.
    ///
    /// Body atoms are grouped by relation id; within each group every
    /// permutation is tried, variables are renumbered by first appearance and
    /// the lexicographically smallest atom encoding wins.
    pub fn canonicalize(&self) -> Rule {
        let mut body = self.body.clone();
        body.sort_by_key(|a| a.relation);
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..=body.len() {
            if i == body.len() || body[i].relation != body[start].relation {
                groups.push((start, i));
                start = i;
            }
        }

        let mut best: Option<Rule> = None;
        let mut order: Vec<usize> = (0..body.len()).collect();
        permute_groups(&mut order, &groups, 0, &mut |order| {
            let candidate = renumber(&self.head, order.iter().map(|&i| &body[i]));
            if best.as_ref().is_none_or(|b| candidate < *b) {
                best = Some(candidate);
            }
        });
        best.unwrap_or_else(|| renumber(&self.head, std::iter::empty()))
    }

    pub fn display<'a>(&'a self, kg: &'a KnowledgeGraph) -> RuleDisplay<'a> {
        RuleDisplay { rule: self, kg, negated_head: false }
    }

    /// Parses `rel(?a, ?b) & rel2(?b, C) => head(?a, C)`. Variables are
    /// numbered by first appearance, head first.
    pub fn parse(text: &str, kg: &KnowledgeGraph) -> Result<Rule> {
        let (rule, negated) = parse_rule(text, kg)?;
        if negated {
            return Err(Error::RuleSyntax(format!("negated head in positive rule: {text}")));
        }
        Ok(rule)
    }
}

fn permute_groups(order: &mut Vec<usize>, groups: &[(usize, usize)], g: usize, visit: &mut impl FnMut(&[usize])) {
    if g == groups.len() {
        visit(order);
        return;
    }
    let (lo, hi) = groups[g];
    permute_range(order, lo, hi, lo, &mut |order| permute_groups(order, groups, g + 1, visit));
}

fn permute_range(order: &mut Vec<usize>, lo: usize, hi: usize, k: usize, visit: &mut dyn FnMut(&mut Vec<usize>)) {
    if hi - lo <= 1 || k + 1 >= hi {
        visit(order);
        return;
    }
    for i in k..hi {
        order.swap(k, i);
        permute_range(order, lo, hi, k + 1, visit);
        order.swap(k, i);
    }
}

fn renumber<'a>(head: &Atom, body: impl Iterator<Item = &'a Atom>) -> Rule {
    let mut names: Vec<Var> = Vec::new();
    let mut map = |t: Term| match t {
        Term::Var(v) => {
            let idx = names.iter().position(|&n| n == v).unwrap_or_else(|| {
                names.push(v);
                names.len() - 1
            });
            Term::Var(Var(idx as u32))
        }
        c => c,
    };
    let head = Atom::new(head.relation, map(head.subject), map(head.object));
    let body = body.map(|a| Atom::new(a.relation, map(a.subject), map(a.object))).collect();
    Rule { body, head }
}

pub fn var_name(v: Var) -> String {
    if v.0 < 26 {
        format!("?{}", (b'a' + v.0 as u8) as char)
    } else {
        format!("?v{}", v.0)
    }
}

pub struct RuleDisplay<'a> {
    rule: &'a Rule,
    kg: &'a KnowledgeGraph,
    negated_head: bool,
}

impl<'a> RuleDisplay<'a> {
    pub(crate) fn negated(rule: &'a Rule, kg: &'a KnowledgeGraph) -> Self {
        RuleDisplay { rule, kg, negated_head: true }
    }
}

pub struct AtomDisplay<'a> {
    pub atom: &'a Atom,
    pub kg: &'a KnowledgeGraph,
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term = |t: &Term| match t {
            Term::Var(v) => var_name(*v),
            Term::Const(e) => self.kg.entity_label(*e).to_string(),
        };
        write!(
            f,
            "{}({}, {})",
            self.kg.relation_label(self.atom.relation),
            term(&self.atom.subject),
            term(&self.atom.object)
        )
    }
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.rule.body.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{}", AtomDisplay { atom: a, kg: self.kg })?;
        }
        if !self.rule.body.is_empty() {
            f.write_str(" ")?;
        }
        f.write_str("=> ")?;
        if self.negated_head {
            f.write_str("!")?;
        }
        write!(f, "{}", AtomDisplay { atom: &self.rule.head, kg: self.kg })
    }
}

/// Returns the rule and whether its head carried a `!` negation.
pub(crate) fn parse_rule(text: &str, kg: &KnowledgeGraph) -> Result<(Rule, bool)> {
    let (body_text, head_text) =
        text.split_once("=>").ok_or_else(|| Error::RuleSyntax(format!("missing `=>` in `{text}`")))?;
    let mut head_text = head_text.trim();
    let negated = head_text.starts_with('!');
    if negated {
        head_text = head_text[1..].trim_start();
    }
    let mut vars: Vec<String> = Vec::new();
    let head = parse_atom(head_text, kg, &mut vars)?;
    let body = if body_text.trim().is_empty() {
        Vec::new()
    } else {
        body_text.split('&').map(|a| parse_atom(a.trim(), kg, &mut vars)).collect::<Result<_>>()?
    };
    Ok((Rule { body, head }, negated))
}

fn parse_atom(text: &str, kg: &KnowledgeGraph, vars: &mut Vec<String>) -> Result<Atom> {
    let err = || Error::RuleSyntax(format!("malformed atom `{text}`"));
    let open = text.find('(').ok_or_else(err)?;
    if !text.ends_with(')') {
        return Err(err());
    }
    let name = text[..open].trim();
    let args: Vec<&str> = text[open + 1..text.len() - 1].split(',').map(str::trim).collect();
    if name.is_empty() || args.len() != 2 || args.iter().any(|a| a.is_empty()) {
        return Err(err());
    }
    let relation = kg.relation_id(name).ok_or_else(|| Error::UnknownRelation(name.to_string()))?;
    let mut term = |a: &str| -> Result<Term> {
        if let Some(name) = a.strip_prefix('?') {
            let idx = vars.iter().position(|v| v == name).unwrap_or_else(|| {
                vars.push(name.to_string());
                vars.len() - 1
            });
            Ok(Term::Var(Var(idx as u32)))
        } else {
            kg.entity_id(a).map(Term::Const).ok_or_else(|| Error::UnknownEntity(a.to_string()))
        }
    };
    let subject = term(args[0])?;
    let object = term(args[1])?;
    if !subject.is_var() && !object.is_var() {
        return Err(Error::RuleSyntax(format!("ground atom `{text}` in a rule")));
    }
    Ok(Atom::new(relation, subject, object))
}
