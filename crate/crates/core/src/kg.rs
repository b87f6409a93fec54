//! In-memory triple store.
//!
//! Labels are interned to dense integer ids on load. Every relation carries
//! its own subject->objects and object->subjects indexes, and a global
//! pair->relations index answers "which relations link these two entities".
//! Together they serve any bound-argument pattern of an atom. The graph is
//! immutable once built; subgraph views share the parent's interners so that
//! ids (and therefore matrices and metrics) stay comparable.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::ratio::{ratio, Rational};
use crate::rule::{Atom, Substitution, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Fact {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Fact { subject, relation, object }
    }
}

/// Bijection between labels and dense ids, in first-appearance order.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    labels: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.ids.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleFormat {
    Tsv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationStats {
    pub relation: RelationId,
    pub fact_count: u64,
    pub distinct_subjects: u64,
    pub distinct_objects: u64,
    pub functionality: Rational,
    pub inverse_functionality: Rational,
}

#[derive(Clone, Debug, Default)]
struct RelationIndex {
    pairs: Vec<(EntityId, EntityId)>,
    by_subject: FxHashMap<EntityId, Vec<EntityId>>,
    by_object: FxHashMap<EntityId, Vec<EntityId>>,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Arc<Interner>,
    relations: Arc<Interner>,
    facts: Vec<Fact>,
    fact_set: FxHashSet<Fact>,
    by_relation: Vec<RelationIndex>,
    by_pair: FxHashMap<(EntityId, EntityId), Vec<RelationId>>,
    incident: Vec<Vec<u32>>,
}

/// Single-writer construction; `build` freezes the graph.
#[derive(Debug, Default)]
pub struct KnowledgeGraphBuilder {
    entities: Interner,
    relations: Interner,
    facts: FxHashSet<Fact>,
}

impl KnowledgeGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves an entity id without adding a fact. Useful to fix the
    /// row/column order of adjacency matrices.
    pub fn entity(&mut self, label: &str) -> EntityId {
        EntityId(self.entities.intern(label))
    }

    pub fn relation(&mut self, label: &str) -> RelationId {
        RelationId(self.relations.intern(label))
    }

    /// Returns false when the triple was already present.
    pub fn add(&mut self, subject: &str, relation: &str, object: &str) -> bool {
        let s = self.entity(subject);
        let r = self.relation(relation);
        let o = self.entity(object);
        self.facts.insert(Fact::new(s, r, o))
    }

    pub fn build(self) -> KnowledgeGraph {
        let facts: Vec<Fact> = self.facts.into_iter().collect();
        KnowledgeGraph::from_parts(Arc::new(self.entities), Arc::new(self.relations), facts)
    }
}

impl KnowledgeGraph {
    fn from_parts(entities: Arc<Interner>, relations: Arc<Interner>, mut facts: Vec<Fact>) -> Self {
        facts.sort_unstable_by_key(|f| (f.relation, f.subject, f.object));
        facts.dedup();
        let mut by_relation = vec![RelationIndex::default(); relations.len()];
        let mut by_pair: FxHashMap<(EntityId, EntityId), Vec<RelationId>> = FxHashMap::default();
        let mut incident = vec![Vec::new(); entities.len()];
        for (i, f) in facts.iter().enumerate() {
            let idx = &mut by_relation[f.relation.index()];
            idx.pairs.push((f.subject, f.object));
            idx.by_subject.entry(f.subject).or_default().push(f.object);
            idx.by_object.entry(f.object).or_default().push(f.subject);
            by_pair.entry((f.subject, f.object)).or_default().push(f.relation);
            incident[f.subject.index()].push(i as u32);
            if f.object != f.subject {
                incident[f.object.index()].push(i as u32);
            }
        }
        for idx in &mut by_relation {
            // pairs arrive sorted by (s, o); object lists follow suit
            for subjects in idx.by_object.values_mut() {
                subjects.sort_unstable();
            }
        }
        let fact_set = facts.iter().copied().collect();
        KnowledgeGraph { entities, relations, facts, fact_set, by_relation, by_pair, incident }
    }

    /// Parses `subject<TAB>relation<TAB>object` lines; `#` lines and blank
    /// lines are skipped. Repeated triples collapse to one fact.
    pub fn load_triples<R: BufRead>(source: R, format: TripleFormat) -> Result<Self> {
        match format {
            TripleFormat::Tsv => {}
        }
        let mut builder = KnowledgeGraphBuilder::new();
        for (n, line) in source.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.trim().is_empty()) {
                return Err(Error::Parse { line: n + 1, message: "empty field".into() });
            }
            builder.add(fields[0].trim(), fields[1].trim(), fields[2].trim());
        }
        Ok(builder.build())
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load_triples(std::io::BufReader::new(file), TripleFormat::Tsv)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for f in &self.facts {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_label(f.subject),
                self.relation_label(f.relation),
                self.entity_label(f.object)
            )?;
        }
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Facts ordered by (relation, subject, object) id.
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, index: u32) -> Fact {
        self.facts[index as usize]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0)
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations.label(id.0)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn contains(&self, subject: EntityId, relation: RelationId, object: EntityId) -> bool {
        self.fact_set.contains(&Fact::new(subject, relation, object))
    }

    pub fn contains_fact(&self, fact: &Fact) -> bool {
        self.fact_set.contains(fact)
    }

    /// All (subject, object) pairs of a relation, sorted.
    pub fn pairs(&self, relation: RelationId) -> &[(EntityId, EntityId)] {
        self.by_relation.get(relation.index()).map(|i| i.pairs.as_slice()).unwrap_or(&[])
    }

    pub fn fact_count(&self, relation: RelationId) -> u64 {
        self.pairs(relation).len() as u64
    }

    pub fn objects(&self, relation: RelationId, subject: EntityId) -> &[EntityId] {
        self.by_relation
            .get(relation.index())
            .and_then(|i| i.by_subject.get(&subject))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn subjects(&self, relation: RelationId, object: EntityId) -> &[EntityId] {
        self.by_relation.get(relation.index()).and_then(|i| i.by_object.get(&object)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Relations r with r(subject, object) in the graph.
    pub fn relations_between(&self, subject: EntityId, object: EntityId) -> &[RelationId] {
        self.by_pair.get(&(subject, object)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn distinct_subjects(&self, relation: RelationId) -> u64 {
        self.by_relation.get(relation.index()).map_or(0, |i| i.by_subject.len() as u64)
    }

    pub fn distinct_objects(&self, relation: RelationId) -> u64 {
        self.by_relation.get(relation.index()).map_or(0, |i| i.by_object.len() as u64)
    }

    /// Indices (into [`facts`](Self::facts)) of the facts touching an entity.
    pub fn incident(&self, entity: EntityId) -> &[u32] {
        self.incident.get(entity.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn relation_stats(&self, relation: RelationId) -> Result<RelationStats> {
        let fact_count = self.fact_count(relation);
        if fact_count == 0 {
            return Err(Error::UndefinedFunctionality);
        }
        let distinct_subjects = self.distinct_subjects(relation);
        let distinct_objects = self.distinct_objects(relation);
        Ok(RelationStats {
            relation,
            fact_count,
            distinct_subjects,
            distinct_objects,
            functionality: ratio(distinct_subjects, fact_count),
            inverse_functionality: ratio(distinct_objects, fact_count),
        })
    }

    /// Every extension of `bindings` under which `atom` becomes a fact.
    pub fn match_atom(&self, atom: &Atom, bindings: &Substitution) -> Vec<Substitution> {
        let resolve = |t: &Term| match t {
            Term::Const(e) => Some(*e),
            Term::Var(v) => bindings.get(*v),
        };
        let (s, o) = (resolve(&atom.subject), resolve(&atom.object));
        let candidates: Vec<(EntityId, EntityId)> = match (s, o) {
            (Some(s), Some(o)) => {
                if self.contains(s, atom.relation, o) {
                    vec![(s, o)]
                } else {
                    vec![]
                }
            }
            (Some(s), None) => self.objects(atom.relation, s).iter().map(|&o| (s, o)).collect(),
            (None, Some(o)) => self.subjects(atom.relation, o).iter().map(|&s| (s, o)).collect(),
            (None, None) => self.pairs(atom.relation).to_vec(),
        };
        let mut out = Vec::new();
        for (s, o) in candidates {
            let mut ext = bindings.clone();
            if bind_term(&mut ext, &atom.subject, s) && bind_term(&mut ext, &atom.object, o) {
                out.push(ext);
            }
        }
        out
    }

    /// The subgraph induced by an entity set; interners are shared.
    pub fn induced_subgraph(&self, keep: &FxHashSet<EntityId>) -> KnowledgeGraph {
        let facts =
            self.facts.iter().filter(|f| keep.contains(&f.subject) && keep.contains(&f.object)).copied().collect();
        KnowledgeGraph::from_parts(self.entities.clone(), self.relations.clone(), facts)
    }

    /// Keeps the facts whose endpoints both lie within `max_len - 2` hops of
    /// an entity taking part in a `head` fact. Rule length counts the head.
    pub fn select_relevant_subgraph(&self, head: RelationId, max_len: usize) -> KnowledgeGraph {
        assert!(max_len >= 2, "rule length must be at least 2");
        let mut layer: FxHashSet<EntityId> = FxHashSet::default();
        for &(s, o) in self.pairs(head) {
            layer.insert(s);
            layer.insert(o);
        }
        let mut selected = layer.clone();
        for _ in 0..max_len - 2 {
            let mut next = FxHashSet::default();
            for &e in &layer {
                for &fi in self.incident(e) {
                    let f = self.fact(fi);
                    for n in [f.subject, f.object] {
                        if !selected.contains(&n) {
                            next.insert(n);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            selected.extend(next.iter().copied());
            layer = next;
        }
        self.induced_subgraph(&selected)
    }

    /// Label-level view of the fact set, independent of id assignment.
    pub fn labelled_facts(&self) -> BTreeSet<(String, String, String)> {
        self.facts
            .iter()
            .map(|f| {
                (
                    self.entity_label(f.subject).to_string(),
                    self.relation_label(f.relation).to_string(),
                    self.entity_label(f.object).to_string(),
                )
            })
            .collect()
    }

    pub fn display_fact(&self, fact: &Fact) -> FactDisplay<'_> {
        FactDisplay { kg: self, fact: *fact }
    }
}

fn bind_term(sub: &mut Substitution, term: &Term, value: EntityId) -> bool {
    match term {
        Term::Const(c) => *c == value,
        Term::Var(v) => match sub.get(*v) {
            Some(bound) => bound == value,
            None => {
                sub.insert(*v, value);
                true
            }
        },
    }
}

pub struct FactDisplay<'a> {
    kg: &'a KnowledgeGraph,
    fact: Fact,
}

impl fmt::Display for FactDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}, {})",
            self.kg.relation_label(self.fact.relation),
            self.kg.entity_label(self.fact.subject),
            self.kg.entity_label(self.fact.object)
        )
    }
}
