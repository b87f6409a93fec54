//! Backtracking conjunctive-query evaluation over the graph indexes.
//!
//! The next atom to join is always the cheapest one under the current
//! bindings: fully bound atoms are membership checks, half-bound atoms scan a
//! neighbour list, unbound atoms scan the relation. Counting distinct
//! projections stops exploring a branch as soon as its projection is either
//! known or proven, so existential variables are never fully enumerated.

use rustc_hash::FxHashSet;

use crate::kg::{EntityId, KnowledgeGraph};
use crate::rule::{Atom, Term, Var};

pub(crate) type Binding = Vec<Option<EntityId>>;

const DEFER: u64 = 1 << 48;

pub(crate) struct Query<'a> {
    kg: &'a KnowledgeGraph,
    atoms: Vec<Atom>,
    num_vars: usize,
    /// Variables that must take pairwise distinct values (object identity).
    distinct: u64,
    /// Constants the distinct variables must also avoid.
    constants: Vec<EntityId>,
}

/// Outcome of a bounded projection count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Projection {
    pub count: u64,
    pub aborted: bool,
}

impl<'a> Query<'a> {
    pub fn new(kg: &'a KnowledgeGraph, atoms: Vec<Atom>, num_vars: usize) -> Self {
        assert!(num_vars <= 64, "at most 64 variables per query");
        Query { kg, atoms, num_vars, distinct: 0, constants: Vec::new() }
    }

    /// Enables object identity for the given variables.
    pub fn with_distinct(mut self, vars: impl IntoIterator<Item = Var>, constants: Vec<EntityId>) -> Self {
        for v in vars {
            self.distinct |= 1 << v.0;
        }
        self.constants = constants;
        self
    }

    pub fn empty_binding(&self) -> Binding {
        vec![None; self.num_vars]
    }

    pub fn all_atoms(&self) -> u64 {
        if self.atoms.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.atoms.len()) - 1
        }
    }

    /// Binds `v` to `e` if allowed; returns false on an identity clash.
    pub fn try_bind(&self, b: &mut Binding, v: Var, e: EntityId) -> bool {
        let i = v.0 as usize;
        match b[i] {
            Some(x) => x == e,
            None => {
                if !self.allowed(b, i, e) {
                    return false;
                }
                b[i] = Some(e);
                true
            }
        }
    }

    fn allowed(&self, b: &Binding, v: usize, e: EntityId) -> bool {
        if self.distinct & (1 << v) == 0 {
            return true;
        }
        if self.constants.contains(&e) {
            return false;
        }
        b.iter().enumerate().all(|(i, x)| i == v || self.distinct & (1 << i) == 0 || *x != Some(e))
    }

    fn resolve(b: &Binding, t: Term) -> Option<EntityId> {
        match t {
            Term::Const(c) => Some(c),
            Term::Var(v) => b[v.0 as usize],
        }
    }

    fn cost(&self, b: &Binding, atom: &Atom) -> u64 {
        match (Self::resolve(b, atom.subject), Self::resolve(b, atom.object)) {
            (Some(_), Some(_)) => 0,
            (Some(s), None) => self.kg.objects(atom.relation, s).len() as u64,
            (None, Some(o)) => self.kg.subjects(atom.relation, o).len() as u64,
            (None, None) => self.kg.fact_count(atom.relation),
        }
    }

    fn pick(&self, b: &Binding, remaining: u64, proj: &[Var]) -> usize {
        let proj_open = proj.iter().any(|v| b[v.0 as usize].is_none());
        let mut best = usize::MAX;
        let mut best_cost = u64::MAX;
        for (i, atom) in self.atoms.iter().enumerate() {
            if remaining & (1 << i) == 0 {
                continue;
            }
            let mut c = self.cost(b, atom);
            if c > 0 && proj_open && self.is_dangling_existential(b, i, remaining, proj) {
                c += DEFER;
            }
            if c < best_cost {
                best_cost = c;
                best = i;
                if c == 0 {
                    break;
                }
            }
        }
        best
    }

    /// An atom whose unbound variable is not projected and appears nowhere
    /// else only filters; it is checked once the projection is complete.
    fn is_dangling_existential(&self, b: &Binding, i: usize, remaining: u64, proj: &[Var]) -> bool {
        let atom = &self.atoms[i];
        atom.vars().any(|v| {
            b[v.0 as usize].is_none()
                && !proj.contains(&v)
                && !self.atoms.iter().enumerate().any(|(j, a)| j != i && remaining & (1 << j) != 0 && a.has_var(v))
        })
    }

    /// Calls `f` for every way of matching `atom` under `b`; stops early
    /// (returning false) when `f` does.
    fn for_each_match(&self, b: &mut Binding, atom: &Atom, f: &mut dyn FnMut(&mut Binding) -> bool) -> bool {
        let kg = self.kg;
        let r = atom.relation;
        match (Self::resolve(b, atom.subject), Self::resolve(b, atom.object)) {
            (Some(s), Some(o)) => {
                if kg.contains(s, r, o) {
                    f(b)
                } else {
                    true
                }
            }
            (Some(s), None) => {
                let v = atom.object.var().expect("unbound object is a variable").0 as usize;
                for &o in kg.objects(r, s) {
                    if !self.allowed(b, v, o) {
                        continue;
                    }
                    b[v] = Some(o);
                    let go = f(b);
                    b[v] = None;
                    if !go {
                        return false;
                    }
                }
                true
            }
            (None, Some(o)) => {
                let v = atom.subject.var().expect("unbound subject is a variable").0 as usize;
                for &s in kg.subjects(r, o) {
                    if !self.allowed(b, v, s) {
                        continue;
                    }
                    b[v] = Some(s);
                    let go = f(b);
                    b[v] = None;
                    if !go {
                        return false;
                    }
                }
                true
            }
            (None, None) => {
                let sv = atom.subject.var().expect("variable").0 as usize;
                let ov = atom.object.var().expect("variable").0 as usize;
                for &(s, o) in kg.pairs(r) {
                    if sv == ov {
                        if s != o || !self.allowed(b, sv, s) {
                            continue;
                        }
                        b[sv] = Some(s);
                        let go = f(b);
                        b[sv] = None;
                        if !go {
                            return false;
                        }
                        continue;
                    }
                    if !self.allowed(b, sv, s) {
                        continue;
                    }
                    b[sv] = Some(s);
                    let go = if self.allowed(b, ov, o) {
                        b[ov] = Some(o);
                        let go = f(b);
                        b[ov] = None;
                        go
                    } else {
                        true
                    };
                    b[sv] = None;
                    if !go {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Depth-first enumeration of complete solutions over `remaining`.
    /// Returns false when `leaf` asked to stop.
    pub fn search(&self, b: &mut Binding, remaining: u64, leaf: &mut dyn FnMut(&mut Binding) -> bool) -> bool {
        if remaining == 0 {
            return leaf(b);
        }
        let i = self.pick(b, remaining, &[]);
        let rest = remaining & !(1 << i);
        let atom = self.atoms[i];
        self.for_each_match(b, &atom, &mut |b| self.search(b, rest, leaf))
    }

    pub fn exists(&self, b: &mut Binding, remaining: u64) -> bool {
        !self.search(b, remaining, &mut |_| false)
    }

    /// Counts distinct values of `proj` over all solutions extending `b`,
    /// giving up once the count exceeds `limit`.
    pub fn count_projections(&self, b: &mut Binding, proj: &[Var], limit: Option<u64>) -> Projection {
        assert!(proj.len() <= 2, "projections cover at most the two head variables");
        let mut seen: FxHashSet<(u32, u32)> = FxHashSet::default();
        let all = self.all_atoms();
        let completed = self.project(b, all, proj, &mut seen, limit);
        Projection { count: seen.len() as u64, aborted: !completed }
    }

    fn project(
        &self,
        b: &mut Binding,
        remaining: u64,
        proj: &[Var],
        seen: &mut FxHashSet<(u32, u32)>,
        limit: Option<u64>,
    ) -> bool {
        if proj.iter().all(|v| b[v.0 as usize].is_some()) {
            let key = projection_key(b, proj);
            if seen.contains(&key) {
                return true;
            }
            if self.exists(b, remaining) {
                seen.insert(key);
                if limit.is_some_and(|l| seen.len() as u64 > l) {
                    return false;
                }
            }
            return true;
        }
        if remaining == 0 {
            // a projected variable no atom can bind: the query is unsafe
            return true;
        }
        let i = self.pick(b, remaining, proj);
        let rest = remaining & !(1 << i);
        let atom = self.atoms[i];
        self.for_each_match(b, &atom, &mut |b| self.project(b, rest, proj, seen, limit))
    }
}

fn projection_key(b: &Binding, proj: &[Var]) -> (u32, u32) {
    let get = |k: usize| proj.get(k).and_then(|v| b[v.0 as usize]).map_or(u32::MAX, |e| e.0);
    (get(0), get(1))
}
