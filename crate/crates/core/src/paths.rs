//! Enumeration and counting of n-hop inference paths.
//!
//! Paths are emitted in lexicographic order of the interleaved tuple
//! `(v0, r1, v1, ..., rn, vn)` by id, so limits and samples are stable.
//! Nodes on a path are always pairwise distinct.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{AtomicFact, EntityId, KnowledgeGraph, Mode, RelationId};

/// An n-hop deduction `(v0, r1, v1, ..., rn, vn)` with `n >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InferredFact {
    pub nodes: Vec<EntityId>,
    pub relations: Vec<RelationId>,
}

impl InferredFact {
    pub fn new(nodes: Vec<EntityId>, relations: Vec<RelationId>) -> Result<Self> {
        if relations.len() < 2 {
            return Err(Error::HopOrder {
                min: 2,
                got: relations.len(),
            });
        }
        if nodes.len() != relations.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} nodes cannot carry {} relations",
                nodes.len(),
                relations.len()
            )));
        }
        Ok(Self { nodes, relations })
    }

    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    pub fn head(&self) -> EntityId {
        self.nodes[0]
    }

    pub fn tail(&self) -> EntityId {
        *self.nodes.last().expect("paths are non-empty")
    }

    /// The atomic facts this path is built from, oriented as stored.
    /// Steps walked against a fact's direction resolve to the stored fact.
    pub fn source_facts(&self, kg: &KnowledgeGraph) -> Vec<AtomicFact> {
        self.relations
            .iter()
            .enumerate()
            .map(|(i, &relation)| {
                let forward = AtomicFact {
                    head: self.nodes[i],
                    relation,
                    tail: self.nodes[i + 1],
                };
                if kg.contains(&forward) {
                    forward
                } else {
                    AtomicFact {
                        head: self.nodes[i + 1],
                        relation,
                        tail: self.nodes[i],
                    }
                }
            })
            .collect()
    }

    /// Relations used by the path, each listed once, ascending.
    pub fn distinct_relations(&self) -> Vec<RelationId> {
        let mut rs = self.relations.clone();
        rs.sort_unstable();
        rs.dedup();
        rs
    }

    /// The interleaved `(2n+1)`-tuple as labels.
    pub fn to_labels(&self, kg: &KnowledgeGraph) -> Vec<String> {
        let mut out = Vec::with_capacity(2 * self.hops() + 1);
        out.push(kg.entity_label(self.nodes[0]).to_owned());
        for (r, v) in self.relations.iter().zip(&self.nodes[1..]) {
            out.push(kg.relation_label(*r).to_owned());
            out.push(kg.entity_label(*v).to_owned());
        }
        out
    }

    /// Whether walking the relations from the head through `inference_step`
    /// reproduces exactly this node sequence.
    pub fn replays(&self, kg: &KnowledgeGraph, mode: Mode) -> bool {
        let mut seen = Vec::with_capacity(self.nodes.len());
        seen.push(self.nodes[0]);
        for (i, &r) in self.relations.iter().enumerate() {
            let Ok(next) = kg.inference_step(self.nodes[i], r, mode) else {
                return false;
            };
            let want = self.nodes[i + 1];
            if next.binary_search(&want).is_err() || seen.contains(&want) {
                return false;
            }
            seen.push(want);
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathQuery {
    pub hops: usize,
    pub mode: Mode,
    /// Keep only paths where every step's `(entity, relation)` has exactly
    /// one successor.
    pub simple_only: bool,
    pub limit: Option<usize>,
}

impl PathQuery {
    pub fn new(hops: usize, mode: Mode) -> Self {
        Self {
            hops,
            mode,
            simple_only: false,
            limit: None,
        }
    }

    pub fn simple_only(mut self, on: bool) -> Self {
        self.simple_only = on;
        self
    }

    pub fn limit(mut self, limit: Option<usize>) -> Self {
        self.limit = limit;
        self
    }
}

struct Frame {
    steps: Vec<(RelationId, EntityId)>,
    next: usize,
}

/// Lazy depth-first stream of inferred facts.
pub struct InferredPaths<'a> {
    kg: &'a KnowledgeGraph,
    query: PathQuery,
    remaining: Option<usize>,
    next_start: u32,
    end: u32,
    nodes: Vec<EntityId>,
    relations: Vec<RelationId>,
    on_path: Vec<bool>,
    stack: Vec<Frame>,
}

impl<'a> InferredPaths<'a> {
    fn new(kg: &'a KnowledgeGraph, query: PathQuery, start: u32, end: u32) -> Self {
        Self {
            kg,
            query,
            remaining: query.limit,
            next_start: start,
            end,
            nodes: Vec::with_capacity(query.hops + 1),
            relations: Vec::with_capacity(query.hops),
            on_path: vec![false; kg.node_count()],
            stack: Vec::with_capacity(query.hops + 1),
        }
    }

    fn push_node(&mut self, v: EntityId) {
        self.on_path[v.index()] = true;
        self.nodes.push(v);
    }

    fn pop_node(&mut self) {
        if let Some(v) = self.nodes.pop() {
            self.on_path[v.index()] = false;
        }
        if self.relations.len() >= self.nodes.len() && !self.relations.is_empty() {
            self.relations.pop();
        }
    }
}

impl Iterator for InferredPaths<'_> {
    type Item = InferredFact;

    fn next(&mut self) -> Option<InferredFact> {
        loop {
            if self.remaining == Some(0) {
                return None;
            }
            let Some(top) = self.stack.last_mut() else {
                if self.next_start >= self.end {
                    return None;
                }
                let start = EntityId(self.next_start);
                self.next_start += 1;
                self.push_node(start);
                let steps = self.kg.steps(start, self.query.mode);
                self.stack.push(Frame { steps, next: 0 });
                continue;
            };
            if top.next >= top.steps.len() {
                self.stack.pop();
                self.pop_node();
                continue;
            }
            let (r, t) = top.steps[top.next];
            top.next += 1;
            if self.on_path[t.index()] {
                continue;
            }
            let cur = *self.nodes.last().expect("stack and nodes move together");
            if self.query.simple_only && self.kg.successor_count(cur, r, self.query.mode) != 1 {
                continue;
            }
            self.relations.push(r);
            self.push_node(t);
            if self.relations.len() == self.query.hops {
                let fact = InferredFact {
                    nodes: self.nodes.clone(),
                    relations: self.relations.clone(),
                };
                self.pop_node();
                if let Some(rem) = self.remaining.as_mut() {
                    *rem -= 1;
                }
                return Some(fact);
            }
            let steps = self.kg.steps(t, self.query.mode);
            self.stack.push(Frame { steps, next: 0 });
        }
    }
}

fn check_query(kg: &KnowledgeGraph, hops: usize) -> Result<()> {
    if hops < 2 {
        return Err(Error::HopOrder { min: 2, got: hops });
    }
    if kg.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(())
}

/// Streams every n-hop path matching `query`.
pub fn enumerate_inferred(kg: &KnowledgeGraph, query: PathQuery) -> Result<InferredPaths<'_>> {
    check_query(kg, query.hops)?;
    Ok(InferredPaths::new(kg, query, 0, kg.node_count() as u32))
}

/// Materializes the enumeration, partitioning start nodes across the
/// current rayon pool. Output equals the sequential stream.
pub fn collect_inferred(kg: &KnowledgeGraph, query: PathQuery) -> Result<Vec<InferredFact>> {
    check_query(kg, query.hops)?;
    let unlimited = PathQuery { limit: None, ..query };
    let runs: Vec<Vec<InferredFact>> = (0..kg.node_count() as u32)
        .into_par_iter()
        .map(|s| InferredPaths::new(kg, unlimited, s, s + 1).collect())
        .collect();
    let mut out: Vec<InferredFact> = runs.into_iter().flatten().collect();
    if let Some(limit) = query.limit {
        out.truncate(limit);
    }
    Ok(out)
}

/// Exact inferred-fact counts for hop orders `2..=n_max`.
///
/// In undirected mode a path and its reversal denote the same deduction and
/// are counted once (the orientation with the smaller head id).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredCounts {
    /// Number of inferred facts per hop order.
    pub by_hop: BTreeMap<usize, u64>,
    /// Per `(hop order, relation)`: facts that involve the relation at least once.
    pub by_hop_relation: BTreeMap<(usize, RelationId), u64>,
}

impl InferredCounts {
    pub fn total(&self) -> u64 {
        self.by_hop.values().sum()
    }

    pub fn relation_total(&self, relation: RelationId) -> u64 {
        self.by_hop_relation
            .iter()
            .filter(|((_, r), _)| *r == relation)
            .map(|(_, c)| c)
            .sum()
    }

    fn merge(mut self, other: InferredCounts) -> InferredCounts {
        for (k, v) in other.by_hop {
            *self.by_hop.entry(k).or_default() += v;
        }
        for (k, v) in other.by_hop_relation {
            *self.by_hop_relation.entry(k).or_default() += v;
        }
        self
    }
}

struct Counter<'a> {
    kg: &'a KnowledgeGraph,
    mode: Mode,
    n_max: usize,
    on_path: Vec<bool>,
    relation_uses: Vec<u32>,
    distinct: Vec<RelationId>,
    by_hop: Vec<u64>,
    by_hop_relation: Vec<Vec<u64>>,
}

impl<'a> Counter<'a> {
    fn new(kg: &'a KnowledgeGraph, n_max: usize, mode: Mode) -> Self {
        Self {
            kg,
            mode,
            n_max,
            on_path: vec![false; kg.node_count()],
            relation_uses: vec![0; kg.relation_count()],
            distinct: Vec::new(),
            by_hop: vec![0; n_max + 1],
            by_hop_relation: vec![vec![0; kg.relation_count()]; n_max + 1],
        }
    }

    fn run_from(&mut self, start: EntityId) {
        self.on_path[start.index()] = true;
        self.walk(start, start, 0);
        self.on_path[start.index()] = false;
    }

    fn walk(&mut self, start: EntityId, cur: EntityId, depth: usize) {
        for (r, t) in self.kg.steps(cur, self.mode) {
            if self.on_path[t.index()] {
                continue;
            }
            let hops = depth + 1;
            if self.relation_uses[r.index()] == 0 {
                self.distinct.push(r);
            }
            self.relation_uses[r.index()] += 1;
            if hops >= 2 && (self.mode == Mode::Directed || start < t) {
                self.by_hop[hops] += 1;
                for &d in &self.distinct {
                    self.by_hop_relation[hops][d.index()] += 1;
                }
            }
            if hops < self.n_max {
                self.on_path[t.index()] = true;
                self.walk(start, t, hops);
                self.on_path[t.index()] = false;
            }
            self.relation_uses[r.index()] -= 1;
            if self.relation_uses[r.index()] == 0 {
                self.distinct.pop();
            }
        }
    }

    fn finish(self) -> InferredCounts {
        let mut out = InferredCounts::default();
        for n in 2..=self.n_max {
            out.by_hop.insert(n, self.by_hop[n]);
            for (ri, &c) in self.by_hop_relation[n].iter().enumerate() {
                if c > 0 {
                    out.by_hop_relation.insert((n, RelationId(ri as u32)), c);
                }
            }
        }
        out
    }
}

/// Counts inferred facts of every hop order up to `n_max`. A fact adds one
/// to `(n, r)` for each distinct relation `r` it contains.
pub fn inferred_fact_counts(kg: &KnowledgeGraph, n_max: usize, mode: Mode) -> Result<InferredCounts> {
    if n_max < 2 {
        return Err(Error::HopOrder { min: 2, got: n_max });
    }
    if kg.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let partials: Vec<InferredCounts> = (0..kg.node_count() as u32)
        .into_par_iter()
        .fold(
            || None::<Counter<'_>>,
            |acc, s| {
                let mut c = acc.unwrap_or_else(|| Counter::new(kg, n_max, mode));
                c.run_from(EntityId(s));
                Some(c)
            },
        )
        .filter_map(|c| c.map(Counter::finish))
        .collect();
    let mut total = partials
        .into_iter()
        .fold(InferredCounts::default(), InferredCounts::merge);
    for n in 2..=n_max {
        total.by_hop.entry(n).or_insert(0);
    }
    Ok(total)
}

/// Exhaustive oracle: counts relation-labelled directed n-hop paths over
/// distinct nodes by trying every node as every successor and probing the
/// fact set. Independent of the adjacency index used by the enumerator.
pub fn brute_force_path_count(kg: &KnowledgeGraph, n: usize) -> u64 {
    fn links(kg: &KnowledgeGraph, a: EntityId, b: EntityId) -> u64 {
        kg.relations()
            .filter(|&relation| {
                kg.contains(&AtomicFact {
                    head: a,
                    relation,
                    tail: b,
                })
            })
            .count() as u64
    }

    fn dfs(kg: &KnowledgeGraph, path: &mut Vec<EntityId>, remaining: usize) -> u64 {
        if remaining == 0 {
            return 1;
        }
        let cur = *path.last().unwrap();
        let mut total = 0;
        for next in kg.entities() {
            if path.contains(&next) {
                continue;
            }
            let mult = links(kg, cur, next);
            if mult == 0 {
                continue;
            }
            path.push(next);
            total += mult * dfs(kg, path, remaining - 1);
            path.pop();
        }
        total
    }

    let mut total = 0;
    for start in kg.entities() {
        let mut path = vec![start];
        total += dfs(kg, &mut path, n);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::tests::obama_graph;

    fn labels(kg: &KnowledgeGraph, f: &InferredFact) -> Vec<String> {
        f.to_labels(kg)
    }

    #[test]
    fn two_hop_contains_obama_wife_birth_year() {
        let kg = obama_graph();
        let all: Vec<_> = enumerate_inferred(&kg, PathQuery::new(2, Mode::Undirected))
            .unwrap()
            .map(|f| labels(&kg, &f))
            .collect();
        assert!(all.contains(
            &["Obama", "wife of", "Michelle", "born in", "1964"]
                .map(String::from)
                .to_vec()
        ));
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn three_hop_reaches_mary_poppins() {
        let kg = obama_graph();
        let all: Vec<_> = enumerate_inferred(&kg, PathQuery::new(3, Mode::Undirected))
            .unwrap()
            .map(|f| labels(&kg, &f))
            .collect();
        let want = [
            "Obama",
            "wife of",
            "Michelle",
            "born in",
            "1964",
            "aired in",
            "Mary Poppins",
        ]
        .map(String::from)
        .to_vec();
        assert!(all.contains(&want));
    }

    #[test]
    fn edgeless_graph_yields_nothing() {
        let mut kg = KnowledgeGraph::new();
        kg.add_entity("a").unwrap();
        kg.add_entity("b").unwrap();
        for n in 2..5 {
            assert_eq!(
                enumerate_inferred(&kg, PathQuery::new(n, Mode::Undirected))
                    .unwrap()
                    .count(),
                0
            );
        }
    }

    #[test]
    fn hop_order_below_two_is_rejected() {
        let kg = obama_graph();
        assert!(matches!(
            enumerate_inferred(&kg, PathQuery::new(1, Mode::Directed)),
            Err(Error::HopOrder { min: 2, got: 1 })
        ));
        assert!(inferred_fact_counts(&kg, 1, Mode::Directed).is_err());
    }

    #[test]
    fn limit_is_a_prefix() {
        let kg = obama_graph();
        let full: Vec<_> = enumerate_inferred(&kg, PathQuery::new(2, Mode::Undirected))
            .unwrap()
            .collect();
        for limit in 0..6 {
            let part: Vec<_> = enumerate_inferred(&kg, PathQuery::new(2, Mode::Undirected).limit(Some(limit)))
                .unwrap()
                .collect();
            assert_eq!(part.len(), limit.min(full.len()));
            assert_eq!(part[..], full[..part.len()]);
        }
    }

    #[test]
    fn simple_only_drops_branching_steps() {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("a", "r", "b").unwrap();
        kg.add_fact("b", "s", "c").unwrap();
        kg.add_fact("b", "s", "d").unwrap();
        let q = PathQuery::new(2, Mode::Directed);
        assert_eq!(enumerate_inferred(&kg, q).unwrap().count(), 2);
        assert_eq!(enumerate_inferred(&kg, q.simple_only(true)).unwrap().count(), 0);
        kg.add_fact("d", "t", "e").unwrap();
        kg.add_fact("e", "u", "f").unwrap();
        let simple: Vec<_> = enumerate_inferred(&kg, q.simple_only(true))
            .unwrap()
            .map(|f| f.to_labels(&kg).join(" "))
            .collect();
        assert_eq!(simple, ["d t e u f"]);
    }

    #[test]
    fn counts_on_obama_graph() {
        let kg = obama_graph();
        let c = inferred_fact_counts(&kg, 2, Mode::Undirected).unwrap();
        assert_eq!(c.by_hop[&2], 2);
        let born = kg.relation_id("born in").unwrap();
        assert_eq!(c.relation_total(born), 2);
        assert_eq!(inferred_fact_counts(&kg, 2, Mode::Directed).unwrap().total(), 0);
    }

    #[test]
    fn repeated_relation_counts_once() {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("a", "r", "b").unwrap();
        kg.add_fact("b", "r", "c").unwrap();
        let c = inferred_fact_counts(&kg, 2, Mode::Directed).unwrap();
        assert_eq!(c.by_hop[&2], 1);
        assert_eq!(c.by_hop_relation[&(2, RelationId(0))], 1);
    }

    #[test]
    fn single_edge_counts_zero() {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("a", "r", "b").unwrap();
        let c = inferred_fact_counts(&kg, 4, Mode::Undirected).unwrap();
        assert_eq!(c.total(), 0);
        assert!(c.by_hop_relation.is_empty());
    }

    #[test]
    fn brute_force_complete_digraph() {
        let mut kg = KnowledgeGraph::new();
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    kg.add_fact(&a.to_string(), "r", &b.to_string()).unwrap();
                }
            }
        }
        assert_eq!(brute_force_path_count(&kg, 2), 24);
        assert_eq!(
            enumerate_inferred(&kg, PathQuery::new(2, Mode::Directed))
                .unwrap()
                .count(),
            24
        );
        assert_eq!(brute_force_path_count(&KnowledgeGraph::new(), 2), 0);
    }

    #[test]
    fn parallel_collect_matches_stream() {
        let kg = obama_graph();
        for n in 2..4 {
            let q = PathQuery::new(n, Mode::Undirected);
            let seq: Vec<_> = enumerate_inferred(&kg, q).unwrap().collect();
            assert_eq!(collect_inferred(&kg, q).unwrap(), seq);
        }
    }

    #[test]
    fn source_facts_resolve_stored_orientation() {
        let kg = obama_graph();
        let f = enumerate_inferred(&kg, PathQuery::new(2, Mode::Undirected))
            .unwrap()
            .find(|f| kg.entity_label(f.head()) == "Obama")
            .unwrap();
        let src = f.source_facts(&kg);
        assert!(src.iter().all(|s| kg.contains(s)));
        assert!(f.replays(&kg, Mode::Undirected));
        assert!(!f.replays(&kg, Mode::Directed));
    }
}
