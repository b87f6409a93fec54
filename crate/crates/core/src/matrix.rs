//! Boolean sparse-matrix evaluation of chain rules.
//!
//! A chain rule `q1(x, z1) & q2(z1, z2) & ... & qn(z, y) => p(x, y)` holds
//! between `x` and `y` exactly where the clamped product of the adjacency
//! matrices is nonzero. Atoms traversed against their direction use the
//! transpose. This is independent of the join engine in `metrics` and serves
//! as a cross-check for it.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::ratio::{ratio, Rational};
use crate::rule::{Atom, Rule, Term, Var};

/// Square boolean matrix as sorted, duplicate-free coordinates.
#[derive(Clone, PartialEq, Eq)]
pub struct SparseBoolMatrix {
    dim: usize,
    entries: Vec<(u32, u32)>,
}

impl fmt::Debug for SparseBoolMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SparseBoolMatrix({}x{}, {:?})", self.dim, self.dim, self.entries)
    }
}

impl SparseBoolMatrix {
    pub fn from_entries(dim: usize, mut entries: Vec<(u32, u32)>) -> Self {
        assert!(entries.iter().all(|&(r, c)| (r as usize) < dim && (c as usize) < dim), "coordinate out of range");
        entries.sort_unstable();
        entries.dedup();
        SparseBoolMatrix { dim, entries }
    }

    pub fn zero(dim: usize) -> Self {
        SparseBoolMatrix { dim, entries: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        SparseBoolMatrix { dim, entries: (0..dim as u32).map(|i| (i, i)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.entries.binary_search(&(row as u32, col as u32)).is_ok()
    }

    pub fn row(&self, row: usize) -> &[(u32, u32)] {
        let r = row as u32;
        let lo = self.entries.partition_point(|&(i, _)| i < r);
        let hi = self.entries.partition_point(|&(i, _)| i <= r);
        &self.entries[lo..hi]
    }

    pub fn transpose(&self) -> Self {
        Self::from_entries(self.dim, self.entries.iter().map(|&(r, c)| (c, r)).collect())
    }

    /// Product with every entry clamped to one.
    pub fn multiply(&self, other: &SparseBoolMatrix) -> SparseBoolMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Vec::new();
        let mut row_hits: Vec<u32> = Vec::new();
        let mut start = 0;
        while start < self.entries.len() {
            let row = self.entries[start].0;
            let end = start + self.entries[start..].partition_point(|&(r, _)| r == row);
            row_hits.clear();
            for &(_, k) in &self.entries[start..end] {
                row_hits.extend(other.row(k as usize).iter().map(|&(_, c)| c));
            }
            row_hits.sort_unstable();
            row_hits.dedup();
            out.extend(row_hits.iter().map(|&c| (row, c)));
            start = end;
        }
        SparseBoolMatrix { dim: self.dim, entries: out }
    }

    /// Entries present in both matrices.
    pub fn intersect(&self, other: &SparseBoolMatrix) -> SparseBoolMatrix {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].cmp(&other.entries[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.entries[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        SparseBoolMatrix { dim: self.dim, entries: out }
    }
}

pub fn adjacency_matrix(kg: &KnowledgeGraph, relation: RelationId) -> SparseBoolMatrix {
    let entries = kg.pairs(relation).iter().map(|&(s, o)| (s.0, o.0)).collect();
    SparseBoolMatrix::from_entries(kg.num_entities(), entries)
}

/// One hop of a chain: a relation read forwards or backwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub relation: RelationId,
    pub inverse: bool,
}

/// Orders `body` into a variable path from `from` to `to`. Every atom must be
/// used once, every term must be a variable and no variable may repeat.
pub fn chain_steps(body: &[Atom], from: Var, to: Var) -> Result<Vec<Step>> {
    if body.is_empty() {
        return if from == to { Ok(Vec::new()) } else { Err(Error::NotChain) };
    }
    let mut used = vec![false; body.len()];
    let mut visited = vec![from];
    let mut current = from;
    let mut steps = Vec::with_capacity(body.len());
    for _ in 0..body.len() {
        let mut next = None;
        for (i, atom) in body.iter().enumerate() {
            if used[i] {
                continue;
            }
            let (Term::Var(s), Term::Var(o)) = (atom.subject, atom.object) else {
                return Err(Error::NotChain);
            };
            let hop = if s == current {
                Some((o, false))
            } else if o == current {
                Some((s, true))
            } else {
                None
            };
            if let Some(h) = hop {
                if next.is_some() {
                    return Err(Error::NotChain);
                }
                next = Some((i, h));
            }
        }
        let Some((i, (var, inverse))) = next else {
            return Err(Error::NotChain);
        };
        if visited.contains(&var) {
            return Err(Error::NotChain);
        }
        used[i] = true;
        visited.push(var);
        steps.push(Step { relation: body[i].relation, inverse });
        current = var;
    }
    if current == to {
        Ok(steps)
    } else {
        Err(Error::NotChain)
    }
}

fn head_endpoints(rule: &Rule) -> Result<(Var, Var)> {
    match (rule.head.subject, rule.head.object) {
        (Term::Var(x), Term::Var(y)) if x != y => Ok((x, y)),
        _ => Err(Error::NotChain),
    }
}

fn step_matrix(kg: &KnowledgeGraph, step: Step) -> SparseBoolMatrix {
    let m = adjacency_matrix(kg, step.relation);
    if step.inverse {
        m.transpose()
    } else {
        m
    }
}

/// Clamped product of the body's adjacency matrices along the chain from
/// `from` to `to`; the identity for an empty body.
pub fn body_product(kg: &KnowledgeGraph, body: &[Atom], from: Var, to: Var) -> Result<SparseBoolMatrix> {
    let steps = chain_steps(body, from, to)?;
    let mut acc = SparseBoolMatrix::identity(kg.num_entities());
    for step in steps {
        acc = acc.multiply(&step_matrix(kg, step));
    }
    Ok(acc)
}

fn rule_product(kg: &KnowledgeGraph, rule: &Rule) -> Result<SparseBoolMatrix> {
    let (x, y) = head_endpoints(rule)?;
    if rule.body.is_empty() {
        return Err(Error::NotChain);
    }
    body_product(kg, &rule.body, x, y)
}

pub fn matrix_support(kg: &KnowledgeGraph, rule: &Rule) -> Result<u64> {
    let body = rule_product(kg, rule)?;
    Ok(body.intersect(&adjacency_matrix(kg, rule.head.relation)).nnz() as u64)
}

pub fn matrix_head_coverage(kg: &KnowledgeGraph, rule: &Rule) -> Result<Rational> {
    let head_count = kg.fact_count(rule.head.relation);
    if head_count == 0 {
        return Err(Error::UndefinedHeadCoverage);
    }
    Ok(ratio(matrix_support(kg, rule)?, head_count))
}

/// Standard confidence with the body product's nonzero count as denominator.
pub fn matrix_std_confidence(kg: &KnowledgeGraph, rule: &Rule) -> Result<(Rational, u64)> {
    let body = rule_product(kg, rule)?;
    let support = body.intersect(&adjacency_matrix(kg, rule.head.relation)).nnz() as u64;
    let den = body.nnz() as u64;
    Ok((ratio(support, den), den))
}

/// Boolean entity vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityVector {
    dim: usize,
    nonzeros: Vec<EntityId>,
}

impl EntityVector {
    pub fn one_hot(dim: usize, e: EntityId) -> Self {
        assert!(e.index() < dim);
        EntityVector { dim, nonzeros: vec![e] }
    }

    pub fn nonzeros(&self) -> &[EntityId] {
        &self.nonzeros
    }

    pub fn is_zero(&self) -> bool {
        self.nonzeros.is_empty()
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let mut v = vec![0; self.dim];
        for e in &self.nonzeros {
            v[e.index()] = 1;
        }
        v
    }

    fn step(&self, m: &SparseBoolMatrix) -> EntityVector {
        let mut out: Vec<EntityId> =
            self.nonzeros.iter().flat_map(|e| m.row(e.index()).iter().map(|&(_, c)| EntityId(c))).collect();
        out.sort_unstable();
        out.dedup();
        EntityVector { dim: self.dim, nonzeros: out }
    }
}

/// Entities reachable from `x` through the rule body.
pub fn tensorlog_infer(kg: &KnowledgeGraph, rule: &Rule, x: &str) -> Result<EntityVector> {
    let start = kg.entity_id(x).ok_or_else(|| Error::UnknownEntity(x.to_string()))?;
    let (hx, hy) = head_endpoints(rule)?;
    let steps = chain_steps(&rule.body, hx, hy)?;
    let mut v = EntityVector::one_hot(kg.num_entities(), start);
    for step in steps {
        v = v.step(&step_matrix(kg, step));
    }
    Ok(v)
}

/// Sums each rule's weight over the entities it derives from `x`. Scores are
/// sorted descending, ties by entity label.
pub fn aggregate_infer(kg: &KnowledgeGraph, rules: &[(Rule, Rational)], x: &str) -> Result<Vec<(EntityId, Rational)>> {
    let mut ordered: Vec<(Rule, Rational)> = rules.iter().map(|(r, a)| (r.canonicalize(), *a)).collect();
    ordered.sort();
    let mut scores: BTreeMap<EntityId, Rational> = BTreeMap::new();
    for (rule, alpha) in &ordered {
        for &y in tensorlog_infer(kg, rule, x)?.nonzeros() {
            *scores.entry(y).or_default() += alpha;
        }
    }
    let mut out: Vec<(EntityId, Rational)> = scores.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| kg.entity_label(a.0).cmp(kg.entity_label(b.0))));
    Ok(out)
}

/// Every closed chain rule `p(?a, ?b)` over the graph's relations with
/// `1..max_len` body atoms, each atom in either orientation.
pub fn chain_rules(kg: &KnowledgeGraph, max_len: usize) -> Vec<Rule> {
    let rels: Vec<RelationId> = kg.relation_ids().collect();
    let var = |i: usize| Term::Var(Var(i as u32));
    let mut bodies: Vec<Vec<Step>> = vec![Vec::new()];
    let mut out = Vec::new();
    for n in 1..max_len {
        bodies = bodies
            .iter()
            .flat_map(|b| {
                rels.iter().flat_map(move |&relation| {
                    [false, true].into_iter().map(move |inverse| {
                        let mut next = b.clone();
                        next.push(Step { relation, inverse });
                        next
                    })
                })
            })
            .collect();
        // path variables: ?a = 0, intermediates 2.., ?b = 1
        let node = |i: usize| {
            if i == 0 {
                var(0)
            } else if i == n {
                var(1)
            } else {
                var(i + 1)
            }
        };
        for steps in &bodies {
            let body: Vec<Atom> = steps
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let (from, to) = (node(i), node(i + 1));
                    if s.inverse {
                        Atom::new(s.relation, to, from)
                    } else {
                        Atom::new(s.relation, from, to)
                    }
                })
                .collect();
            for &p in &rels {
                out.push(Rule::new(body.clone(), Atom::new(p, var(0), var(1))));
            }
        }
    }
    out
}
