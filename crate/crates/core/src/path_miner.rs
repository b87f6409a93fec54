//! Bottom-up rule mining from sampled paths.
//!
//! A sample picks a random fact (the anchor) and walks away from one of its
//! endpoints through randomly chosen incident facts. A walk that returns to
//! the anchor's other endpoint generalizes to a closed chain rule; any other
//! walk generalizes to rules that keep the anchor's far endpoint as a
//! constant. Rules are scored exactly and kept when they pass the support and
//! confidence thresholds.
//!
//! Mining runs in rounds. Each round splits its samples among path profiles
//! in proportion to effort weights, which follow how many new rules each
//! profile produced. Once most rules a round generalizes are already known,
//! the maximum path length grows by one.
//!
//! Every sample draws from its own random stream derived from the seed, the
//! round and the sample index, so results do not depend on the thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amie::{sort_output, MinedRule};
use crate::error::{Error, Result};
use crate::kg::{EntityId, Fact, KnowledgeGraph};
use crate::metrics::{ConfidenceKind, Evaluator, PcaMode, RuleMetrics};
use crate::ratio::{ratio, Rational};
use crate::rule::{Atom, Rule, Term, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathShape {
    Cyclic,
    Acyclic,
}

/// Body length in edges and whether the walk returns to the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathProfile {
    pub length: usize,
    pub shape: PathShape,
}

impl PathProfile {
    pub fn new(length: usize, shape: PathShape) -> Self {
        assert!(length >= 1, "a path needs at least one body edge");
        PathProfile { length, shape }
    }
}

/// A fact read from `from` to `to`; `inverse` when that is object to subject.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traversal {
    pub fact: Fact,
    pub inverse: bool,
}

impl Traversal {
    pub fn from(&self) -> EntityId {
        if self.inverse {
            self.fact.object
        } else {
            self.fact.subject
        }
    }

    pub fn to(&self) -> EntityId {
        if self.inverse {
            self.fact.subject
        } else {
            self.fact.object
        }
    }
}

/// Consecutive traversals; the first one crosses the anchor fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundPath {
    traversals: Vec<Traversal>,
}

impl GroundPath {
    /// Fails unless there is a body edge and consecutive traversals meet.
    pub fn new(traversals: Vec<Traversal>) -> Option<Self> {
        if traversals.len() < 2 || traversals.windows(2).any(|w| w[0].to() != w[1].from()) {
            return None;
        }
        Some(GroundPath { traversals })
    }

    pub fn anchor(&self) -> Fact {
        self.traversals[0].fact
    }

    pub fn body(&self) -> &[Traversal] {
        &self.traversals[1..]
    }

    pub fn traversals(&self) -> &[Traversal] {
        &self.traversals
    }

    /// Entities visited, starting with the anchor endpoint the path leaves.
    pub fn entities(&self) -> Vec<EntityId> {
        std::iter::once(self.traversals[0].from()).chain(self.traversals.iter().map(Traversal::to)).collect()
    }

    pub fn is_cyclic(&self) -> bool {
        self.traversals[0].from() == self.traversals[self.traversals.len() - 1].to()
    }

    pub fn profile(&self) -> PathProfile {
        let shape = if self.is_cyclic() { PathShape::Cyclic } else { PathShape::Acyclic };
        PathProfile::new(self.traversals.len() - 1, shape)
    }
}

/// Samples one path of the given profile. `None` when the walk gets stuck or
/// ends in the wrong shape. With object identity no entity repeats, except the
/// return to the start that closes a cycle.
pub fn sample_path(
    kg: &KnowledgeGraph,
    profile: PathProfile,
    object_identity: bool,
    rng: &mut impl Rng,
) -> Result<Option<GroundPath>> {
    if kg.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let anchor = rng.gen_range(0..kg.num_facts()) as u32;
    Ok(sample_path_from(kg, anchor, profile, object_identity, rng))
}

/// As [`sample_path`], with the anchor given by its index in `kg.facts()`.
pub fn sample_path_from(
    kg: &KnowledgeGraph,
    anchor_idx: u32,
    profile: PathProfile,
    object_identity: bool,
    rng: &mut impl Rng,
) -> Option<GroundPath> {
    let anchor = kg.fact(anchor_idx);
    let first = Traversal { fact: anchor, inverse: rng.gen_bool(0.5) };
    let start = first.from();
    let mut used = vec![anchor_idx];
    let mut visited = vec![start, first.to()];
    let mut traversals = vec![first];
    if object_identity && start == first.to() {
        return None;
    }
    let mut candidates: Vec<(u32, bool)> = Vec::new();
    for step in 0..profile.length {
        let last = step + 1 == profile.length;
        let at = traversals[traversals.len() - 1].to();
        candidates.clear();
        for &fi in kg.incident(at) {
            if used.contains(&fi) {
                continue;
            }
            let f = kg.fact(fi);
            for inverse in [false, true] {
                let t = Traversal { fact: f, inverse };
                if t.from() != at || (inverse && f.subject == f.object) {
                    continue;
                }
                let closes = last && profile.shape == PathShape::Cyclic && t.to() == start;
                if object_identity && visited.contains(&t.to()) && !closes {
                    continue;
                }
                candidates.push((fi, inverse));
            }
        }
        if candidates.is_empty() {
            return None;
        }
        let (fi, inverse) = candidates[rng.gen_range(0..candidates.len())];
        used.push(fi);
        let t = Traversal { fact: kg.fact(fi), inverse };
        visited.push(t.to());
        traversals.push(t);
    }
    let path = GroundPath { traversals };
    let cyclic = path.is_cyclic();
    (cyclic == (profile.shape == PathShape::Cyclic)).then_some(path)
}

/// Rules for which the path is a witness. A cyclic path yields its chain rule
/// with every entity replaced by a variable. An acyclic path keeps the
/// anchor's far endpoint as a constant and yields two rules: one keeping the
/// walk's last entity as a constant, one replacing it by a variable.
pub fn generalize(path: &GroundPath) -> Vec<Rule> {
    let n = path.traversals.len();
    let cyclic = path.is_cyclic();
    let entities = path.entities();
    // position i of the walk becomes variable ?i; a cycle reuses ?0 at the end
    let var_at = |i: usize| if cyclic && i == n { Term::Var(Var(0)) } else { Term::Var(Var(i as u32)) };
    let build = |far: Term, tail: Term| {
        let term = |i: usize| match i {
            0 => far,
            i if i == n => tail,
            i => var_at(i),
        };
        let atom = |i: usize| {
            let t = &path.traversals[i];
            let (a, b) = (term(i), term(i + 1));
            if t.inverse {
                Atom::new(t.fact.relation, b, a)
            } else {
                Atom::new(t.fact.relation, a, b)
            }
        };
        Rule::new((1..n).map(atom).collect(), atom(0)).canonicalize()
    };
    if cyclic {
        vec![build(var_at(0), var_at(0))]
    } else {
        let far = Term::Const(entities[0]);
        let mut out = vec![build(far, Term::Const(entities[n])), build(far, var_at(n))];
        out.sort();
        out.dedup();
        out
    }
}

/// Fraction of `new` already in `known`; 1 for an empty round.
pub fn saturation(new: &BTreeSet<Rule>, known: &BTreeSet<Rule>) -> Rational {
    if new.is_empty() {
        return Rational::from(1);
    }
    ratio(new.iter().filter(|r| known.contains(r)).count() as u64, new.len() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundBudget {
    Samples(u64),
    Millis(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnytimeConfig {
    pub rounds: usize,
    pub budget: RoundBudget,
    pub min_support: u64,
    pub min_confidence: Rational,
    pub confidence_kind: ConfidenceKind,
    pub pca_mode: PcaMode,
    pub seed: u64,
    /// Saturation at or above which the path length grows.
    pub saturation_threshold: Rational,
    pub initial_length: usize,
    pub max_length: usize,
    /// Weight kept from the previous round when updating effort weights.
    pub effort_decay: f64,
    /// Lower bound keeping every profile in play.
    pub min_effort: f64,
    pub object_identity: bool,
    pub threads: usize,
}

impl Default for AnytimeConfig {
    fn default() -> Self {
        AnytimeConfig {
            rounds: 5,
            budget: RoundBudget::Samples(1000),
            min_support: 2,
            min_confidence: Rational::new(1, 10),
            confidence_kind: ConfidenceKind::Std,
            pca_mode: PcaMode::SUBJECT,
            seed: 0,
            saturation_threshold: Rational::new(9, 10),
            initial_length: 1,
            max_length: 2,
            effort_decay: 0.5,
            min_effort: 0.05,
            object_identity: false,
            threads: 1,
        }
    }
}

impl AnytimeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.initial_length == 0 || self.initial_length > self.max_length {
            return bad("path lengths must satisfy 1 <= initial <= max");
        }
        if *self.min_confidence.numer() < 0 || self.min_confidence > Rational::from(1) {
            return bad("min confidence must lie in [0, 1]");
        }
        if *self.saturation_threshold.numer() < 0 || self.saturation_threshold > Rational::from(1) {
            return bad("saturation threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.effort_decay) || self.min_effort.is_nan() || self.min_effort <= 0.0 {
            return bad("effort decay must lie in [0, 1] and the effort floor must be positive");
        }
        if self.threads == 0 {
            return bad("thread count must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub samples: u64,
    /// Distinct rules generalized this round.
    pub generalized: usize,
    pub newly_stored: usize,
    pub saturation: Rational,
    /// Path length in effect during the round.
    pub max_length: usize,
}

pub struct AnytimeMiner<'a> {
    kg: &'a KnowledgeGraph,
    config: AnytimeConfig,
    ev: Evaluator<'a>,
    pool: rayon::ThreadPool,
    round: u64,
    max_length: usize,
    weights: BTreeMap<PathProfile, f64>,
    known: BTreeSet<Rule>,
    stored: BTreeMap<Rule, RuleMetrics>,
}

const BATCH: u64 = 256;

impl<'a> AnytimeMiner<'a> {
    pub fn new(kg: &'a KnowledgeGraph, config: AnytimeConfig) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let ev = Evaluator::new(kg).with_object_identity(config.object_identity);
        let mut miner = AnytimeMiner {
            kg,
            ev,
            pool,
            round: 0,
            max_length: config.initial_length,
            weights: BTreeMap::new(),
            known: BTreeSet::new(),
            stored: BTreeMap::new(),
            config,
        };
        miner.add_profiles();
        Ok(miner)
    }

    fn add_profiles(&mut self) {
        for length in 1..=self.max_length {
            for shape in [PathShape::Cyclic, PathShape::Acyclic] {
                self.weights.entry(PathProfile::new(length, shape)).or_insert(1.0);
            }
        }
    }

    pub fn stored(&self) -> &BTreeMap<Rule, RuleMetrics> {
        &self.stored
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn weights(&self) -> &BTreeMap<PathProfile, f64> {
        &self.weights
    }

    fn sample(&self, profiles: &[PathProfile], dist: &WeightedIndex<f64>, index: u64) -> (PathProfile, Vec<Rule>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ self.round.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(index);
        let profile = profiles[dist.sample(&mut rng)];
        let rules = match sample_path(self.kg, profile, self.config.object_identity, &mut rng) {
            Ok(Some(path)) => generalize(&path),
            _ => Vec::new(),
        };
        (profile, rules)
    }

    fn score(&self, rule: &Rule) -> Option<RuleMetrics> {
        let m = self.ev.evaluate(rule, self.config.pca_mode).ok()?;
        (m.support >= self.config.min_support.max(1)
            && m.confidence(self.config.confidence_kind) >= self.config.min_confidence)
            .then_some(m)
    }

    pub fn run_round(&mut self) -> Result<RoundReport> {
        if self.kg.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let profiles: Vec<PathProfile> = self.weights.keys().copied().collect();
        let dist = WeightedIndex::new(self.weights.values().copied()).expect("effort weights are positive");
        let deadline = match self.config.budget {
            RoundBudget::Millis(ms) => Some(Instant::now() + Duration::from_millis(ms)),
            RoundBudget::Samples(_) => None,
        };

        // profile of first discovery for every distinct rule of the round
        let mut found: BTreeMap<Rule, PathProfile> = BTreeMap::new();
        let mut samples = 0u64;
        let mut per_profile: BTreeMap<PathProfile, u64> = BTreeMap::new();
        loop {
            let batch = match (self.config.budget, deadline) {
                (RoundBudget::Samples(n), _) => n.saturating_sub(samples).min(BATCH),
                (_, Some(d)) if Instant::now() < d => BATCH,
                _ => 0,
            };
            if batch == 0 {
                break;
            }
            let results: Vec<(PathProfile, Vec<Rule>)> = self.pool.install(|| {
                (samples..samples + batch).into_par_iter().map(|i| self.sample(&profiles, &dist, i)).collect()
            });
            for (profile, rules) in results {
                *per_profile.entry(profile).or_default() += 1;
                for rule in rules {
                    found.entry(rule).or_insert(profile);
                }
            }
            samples += batch;
        }

        let generalized: BTreeSet<Rule> = found.keys().cloned().collect();
        let sat = saturation(&generalized, &self.known);
        let fresh: Vec<(&Rule, &PathProfile)> = found.iter().filter(|(r, _)| !self.known.contains(*r)).collect();
        let scored: Vec<Option<RuleMetrics>> =
            self.pool.install(|| fresh.par_iter().map(|(r, _)| self.score(r)).collect());
        let mut yields: BTreeMap<PathProfile, u64> = BTreeMap::new();
        let mut newly_stored = 0;
        for ((rule, profile), metrics) in fresh.into_iter().zip(scored) {
            self.known.insert(rule.clone());
            if let Some(m) = metrics {
                self.stored.insert(rule.clone(), m);
                *yields.entry(*profile).or_default() += 1;
                newly_stored += 1;
            }
        }

        let decay = self.config.effort_decay;
        for (profile, w) in self.weights.iter_mut() {
            let tried = per_profile.get(profile).copied().unwrap_or(0);
            let observed =
                if tried == 0 { *w } else { yields.get(profile).copied().unwrap_or(0) as f64 / tried as f64 };
            *w = (decay * *w + (1.0 - decay) * observed).max(self.config.min_effort);
        }
        let report = RoundReport {
            samples,
            generalized: generalized.len(),
            newly_stored,
            saturation: sat,
            max_length: self.max_length,
        };
        if sat >= self.config.saturation_threshold && self.max_length < self.config.max_length {
            self.max_length += 1;
            self.add_profiles();
        }
        self.round += 1;
        Ok(report)
    }

    pub fn into_rules(self) -> Vec<MinedRule> {
        let mut out: Vec<MinedRule> =
            self.stored.into_iter().map(|(rule, metrics)| MinedRule { rule, metrics }).collect();
        sort_output(self.kg, &mut out, self.config.confidence_kind);
        out
    }
}

/// Runs the configured number of rounds; an empty graph yields no rules.
pub fn mine_anytime(kg: &KnowledgeGraph, config: AnytimeConfig) -> Result<Vec<MinedRule>> {
    let rounds = config.rounds;
    let mut miner = AnytimeMiner::new(kg, config)?;
    if kg.is_empty() {
        return Ok(Vec::new());
    }
    for _ in 0..rounds {
        miner.run_round()?;
    }
    Ok(miner.into_rules())
}
