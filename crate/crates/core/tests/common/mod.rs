//! Shared helpers for the integration suites: graph generators and a
//! brute-force evaluator that enumerates every total substitution.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hornforge::kg::{EntityId, KnowledgeGraph, KnowledgeGraphBuilder, RelationId};
use hornforge::rule::{Atom, Rule, Term, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/sample_kg.tsv");

pub fn fixture() -> KnowledgeGraph {
    KnowledgeGraph::load_path(FIXTURE).expect("fixture loads")
}

/// Builds a graph over labels `e0..`, `r0..`, registering every entity and
/// relation even when it has no facts.
pub fn build_graph(entities: usize, relations: usize, facts: &[(usize, usize, usize)]) -> KnowledgeGraph {
    let mut b = KnowledgeGraphBuilder::new();
    for e in 0..entities {
        b.entity(&format!("e{e}"));
    }
    for r in 0..relations {
        b.relation(&format!("r{r}"));
    }
    for &(s, r, o) in facts {
        b.add(&format!("e{s}"), &format!("r{r}"), &format!("e{o}"));
    }
    b.build()
}

/// Random graphs with at most 8 entities, 4 relations and 30 facts.
pub fn small_graph() -> impl Strategy<Value = KnowledgeGraph> {
    (1usize..=8, 1usize..=4)
        .prop_flat_map(|(ne, nr)| (Just(ne), Just(nr), prop::collection::vec((0..ne, 0..nr, 0..ne), 0..=30)))
        .prop_map(|(ne, nr, facts)| build_graph(ne, nr, &facts))
}

pub fn random_small_graph(rng: &mut impl Rng) -> KnowledgeGraph {
    let ne = rng.gen_range(1..=8);
    let nr = rng.gen_range(1..=4);
    let n = rng.gen_range(0..=30);
    let facts: Vec<_> = (0..n).map(|_| (rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne))).collect();
    build_graph(ne, nr, &facts)
}

/// Uniform random graph with a few planted regularities: some relations
/// copy, invert or compose others on part of their pairs.
pub fn synthetic_graph(entities: usize, relations: usize, facts: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    let per_relation = facts / relations;
    let base = relations * 3 / 4;
    for r in 0..base {
        while set.len() < (r + 1) * per_relation {
            set.insert((rng.gen_range(0..entities), r, rng.gen_range(0..entities)));
        }
    }
    let snapshot: Vec<_> = set.iter().copied().collect();
    let of = |r: usize| snapshot.iter().filter(move |f| f.1 == r).map(|f| (f.0, f.2));
    for r in base..relations {
        let target = facts * (r + 1) / relations;
        let src = r % base;
        let pairs: Vec<(usize, usize)> = match r % 3 {
            0 => of(src).collect(),
            1 => of(src).map(|(s, o)| (o, s)).collect(),
            _ => {
                let next = (src + 1) % base;
                let mut by_subject = vec![Vec::new(); entities];
                for (s, o) in of(next) {
                    by_subject[s].push(o);
                }
                of(src).flat_map(|(s, m)| by_subject[m].iter().map(move |&o| (s, o)).collect::<Vec<_>>()).collect()
            }
        };
        for (s, o) in pairs {
            if set.len() >= target {
                break;
            }
            if rng.gen_bool(0.6) {
                set.insert((s, r, o));
            }
        }
        while set.len() < target {
            set.insert((rng.gen_range(0..entities), r, rng.gen_range(0..entities)));
        }
    }
    let facts: Vec<_> = set.into_iter().collect();
    build_graph(entities, relations, &facts)
}

/// Exact measures by enumerating every total assignment of the rule's
/// variables over all entities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Oracle {
    pub support: u64,
    pub body_cwa: u64,
    pub body_pca_subject: u64,
    pub body_pca_object: u64,
}

fn value(t: Term, asg: &[u32]) -> EntityId {
    match t {
        Term::Const(c) => c,
        Term::Var(v) => EntityId(asg[v.0 as usize]),
    }
}

fn holds(kg: &KnowledgeGraph, a: &Atom, asg: &[u32]) -> bool {
    kg.contains(value(a.subject, asg), a.relation, value(a.object, asg))
}

pub fn oracle(kg: &KnowledgeGraph, rule: &Rule, object_identity: bool) -> Oracle {
    let nv = rule.var_bound() as usize;
    let ne = kg.num_entities() as u32;
    let consts = rule.constants();
    let head_vars = rule.head_vars();
    let mut support = BTreeSet::new();
    let mut cwa = BTreeSet::new();
    let mut pca_s = BTreeSet::new();
    let mut pca_o = BTreeSet::new();
    let mut asg = vec![0u32; nv];
    let total = (ne as u64).checked_pow(nv as u32).unwrap_or(0);
    for mut code in 0..total {
        for slot in asg.iter_mut() {
            *slot = (code % ne as u64) as u32;
            code /= ne as u64;
        }
        if object_identity {
            let distinct: BTreeSet<u32> = asg.iter().copied().collect();
            if distinct.len() != nv || asg.iter().any(|&e| consts.contains(&EntityId(e))) {
                continue;
            }
        }
        if !rule.body.iter().all(|a| holds(kg, a, &asg)) {
            continue;
        }
        let key: Vec<u32> = head_vars.iter().map(|v| asg[v.0 as usize]).collect();
        cwa.insert(key.clone());
        if holds(kg, &rule.head, &asg) {
            support.insert(key.clone());
        }
        let (hs, ho) = (value(rule.head.subject, &asg), value(rule.head.object, &asg));
        let r = rule.head.relation;
        if (0..ne).any(|e| kg.contains(hs, r, EntityId(e))) {
            pca_s.insert(key.clone());
        }
        if (0..ne).any(|e| kg.contains(EntityId(e), r, ho)) {
            pca_o.insert(key);
        }
    }
    Oracle {
        support: support.len() as u64,
        body_cwa: cwa.len() as u64,
        body_pca_subject: pca_s.len() as u64,
        body_pca_object: pca_o.len() as u64,
    }
}

fn var(i: u32) -> Term {
    Term::Var(Var(i))
}

/// Every closed chain rule `p(?0, ?1)` with one or two body atoms, in either
/// orientation.
pub fn closed_chain_rules(kg: &KnowledgeGraph) -> Vec<Rule> {
    let rels: Vec<RelationId> = kg.relation_ids().collect();
    let mut out = Vec::new();
    for &p in &rels {
        let head = Atom::new(p, var(0), var(1));
        for &q in &rels {
            out.push(Rule::new(vec![Atom::new(q, var(0), var(1))], head));
            out.push(Rule::new(vec![Atom::new(q, var(1), var(0))], head));
            for &q2 in &rels {
                for (a, b) in [(false, false), (false, true), (true, false), (true, true)] {
                    let first = if a { Atom::new(q, var(2), var(0)) } else { Atom::new(q, var(0), var(2)) };
                    let second = if b { Atom::new(q2, var(1), var(2)) } else { Atom::new(q2, var(2), var(1)) };
                    out.push(Rule::new(vec![first, second], head));
                }
            }
        }
    }
    out
}

/// Every closed, connected rule with a `p(?0, ?1)` head and up to
/// `max_len - 1` distinct non-reflexive body atoms, canonicalized.
pub fn all_closed_rules(kg: &KnowledgeGraph, max_len: usize) -> BTreeSet<Rule> {
    let rels: Vec<RelationId> = kg.relation_ids().collect();
    let nvars = max_len as u32;
    let mut pool = Vec::new();
    for &r in &rels {
        for s in 0..nvars {
            for o in 0..nvars {
                if s != o {
                    pool.push(Atom::new(r, var(s), var(o)));
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for &p in &rels {
        let head = Atom::new(p, var(0), var(1));
        let mut chosen = Vec::new();
        subsets(&pool, 0, max_len - 1, &mut chosen, &mut |body| {
            if body.contains(&head) {
                return;
            }
            let rule = Rule::new(body.to_vec(), head);
            if rule.is_closed() && rule.is_connected() {
                out.insert(rule.canonicalize());
            }
        });
    }
    out
}

fn subsets(pool: &[Atom], from: usize, max: usize, chosen: &mut Vec<Atom>, f: &mut dyn FnMut(&[Atom])) {
    if !chosen.is_empty() {
        f(chosen);
    }
    if chosen.len() == max {
        return;
    }
    for i in from..pool.len() {
        chosen.push(pool[i]);
        subsets(pool, i + 1, max, chosen, f);
        chosen.pop();
    }
}

/// A random connected rule over the graph's relations with up to
/// `body_len` body atoms, possibly unsafe or open.
pub fn random_connected_rule(kg: &KnowledgeGraph, rng: &mut impl Rng, body_len: usize) -> Option<Rule> {
    let rels: Vec<RelationId> = kg.relation_ids().collect();
    if rels.is_empty() {
        return None;
    }
    let head = Atom::new(rels[rng.gen_range(0..rels.len())], var(0), var(1));
    let mut rule = Rule::new(Vec::new(), head);
    for _ in 0..body_len {
        rule = random_extension(kg, &rule, rng)?;
    }
    Some(rule)
}

/// Appends one atom sharing a variable with the rule: to a fresh variable,
/// to an existing variable or to a constant.
pub fn random_extension(kg: &KnowledgeGraph, rule: &Rule, rng: &mut impl Rng) -> Option<Rule> {
    let rels: Vec<RelationId> = kg.relation_ids().collect();
    let vars = rule.vars();
    if rels.is_empty() || kg.num_entities() == 0 {
        return None;
    }
    let r = rels[rng.gen_range(0..rels.len())];
    let anchor = var(vars[rng.gen_range(0..vars.len())].0);
    let other = match rng.gen_range(0..3) {
        0 => var(rule.var_bound()),
        1 => var(vars[rng.gen_range(0..vars.len())].0),
        _ => Term::Const(EntityId(rng.gen_range(0..kg.num_entities() as u32))),
    };
    let atom = if rng.gen_bool(0.5) { Atom::new(r, anchor, other) } else { Atom::new(r, other, anchor) };
    let mut body = rule.body.clone();
    body.push(atom);
    Some(Rule::new(body, rule.head))
}

/// Compares every index-based measure of `rule` with the brute-force oracle.
pub fn check_against_oracle(kg: &KnowledgeGraph, rule: &Rule, object_identity: bool) -> Result<(), String> {
    use hornforge::metrics::{Evaluator, PcaMode};
    use hornforge::ratio::ratio;
    let ev = Evaluator::new(kg).with_object_identity(object_identity);
    let o = oracle(kg, rule, object_identity);
    let fail = |what: &str, got: String, want: String| {
        Err(format!("{what}: index {got}, oracle {want} for {}", rule.display(kg)))
    };
    let support = ev.support(rule).map_err(|e| e.to_string())?;
    if support != o.support {
        return fail("support", support.to_string(), o.support.to_string());
    }
    let head_count = kg.fact_count(rule.head.relation);
    if head_count > 0 {
        let hc = ev.head_coverage(rule).map_err(|e| e.to_string())?;
        if hc != ratio(o.support, head_count) {
            return fail("head coverage", hc.to_string(), ratio(o.support, head_count).to_string());
        }
    }
    let (conf, den) = ev.std_confidence(rule).map_err(|e| e.to_string())?;
    if den != o.body_cwa || conf != ratio(o.support, o.body_cwa) {
        return fail("std body size", den.to_string(), o.body_cwa.to_string());
    }
    for (mode, want) in [(PcaMode::SUBJECT, o.body_pca_subject), (PcaMode::OBJECT, o.body_pca_object)] {
        let pca = ev.pca_confidence(rule, mode).map_err(|e| e.to_string())?;
        if pca.body_size != want || pca.confidence != ratio(o.support, want) {
            return fail("pca body size", pca.body_size.to_string(), want.to_string());
        }
    }
    Ok(())
}

/// Compares the matrix evaluation of a chain rule with the brute-force oracle.
pub fn check_matrix_against_oracle(kg: &KnowledgeGraph, rule: &Rule) -> Result<(), String> {
    use hornforge::matrix;
    use hornforge::ratio::ratio;
    let o = oracle(kg, rule, false);
    let support = matrix::matrix_support(kg, rule).map_err(|e| e.to_string())?;
    let (conf, den) = matrix::matrix_std_confidence(kg, rule).map_err(|e| e.to_string())?;
    let head_count = kg.fact_count(rule.head.relation);
    let hc_ok = head_count == 0 || matrix::matrix_head_coverage(kg, rule).ok() == Some(ratio(o.support, head_count));
    if support != o.support || den != o.body_cwa || conf != ratio(o.support, o.body_cwa) || !hc_ok {
        return Err(format!(
            "matrix support {support}/{den}, oracle {}/{} for {}",
            o.support,
            o.body_cwa,
            rule.display(kg)
        ));
    }
    Ok(())
}

/// A random safe rule, retrying a bounded number of times.
pub fn random_safe_rule(kg: &KnowledgeGraph, rng: &mut impl Rng, max_body: usize) -> Option<Rule> {
    for _ in 0..50 {
        let n = rng.gen_range(1..=max_body);
        if let Some(r) = random_connected_rule(kg, rng, n) {
            if r.is_safe() {
                return Some(r);
            }
        }
    }
    None
}
