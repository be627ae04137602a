//! Knowledge-graph data model: interned entities and relation types, the
//! atomic fact set, and single-step traversal.
//!
//! Facts are strictly directed. Traversal takes a [`Mode`] so callers can
//! walk an edge against its direction without materializing inverse facts,
//! which keeps `|F_A|` unambiguous.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
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

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A stored first-order triplet `(head, relation, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomicFact {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Traversal convention for a single inference step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Follow facts from head to tail only.
    #[default]
    Directed,
    /// Follow facts in both directions.
    Undirected,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Directed => "directed",
            Mode::Undirected => "undirected",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "directed" => Ok(Mode::Directed),
            "undirected" => Ok(Mode::Undirected),
            other => Err(Error::InvalidParameter(format!(
                "mode must be `directed` or `undirected`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Interner {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }
}

/// Adjacency of one entity: relation -> sorted, deduplicated neighbour ids.
type Adjacency = BTreeMap<RelationId, Vec<EntityId>>;

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Interner,
    entity_types: Vec<Option<String>>,
    relations: Interner,
    facts: Vec<AtomicFact>,
    fact_set: HashSet<AtomicFact>,
    relation_counts: Vec<usize>,
    successors: Vec<Adjacency>,
    predecessors: Vec<Adjacency>,
}

fn normalize_label(label: &str) -> Result<&str> {
    let label = label.trim();
    if label.is_empty() {
        return Err(Error::EmptyLabel);
    }
    if label.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidParameter(format!(
            "label `{}` contains a tab or line break",
            label.escape_debug()
        )));
    }
    Ok(label)
}

fn insert_sorted(list: &mut Vec<EntityId>, id: EntityId) {
    if let Err(pos) = list.binary_search(&id) {
        list.insert(pos, id);
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an entity label, returning its dense id.
    pub fn add_entity(&mut self, label: &str) -> Result<EntityId> {
        let label = normalize_label(label)?;
        let id = self.entities.intern(label);
        if id as usize == self.entity_types.len() {
            self.entity_types.push(None);
            self.successors.push(Adjacency::new());
            self.predecessors.push(Adjacency::new());
        }
        Ok(EntityId(id))
    }

    pub fn add_relation(&mut self, label: &str) -> Result<RelationId> {
        let label = normalize_label(label)?;
        let id = self.relations.intern(label);
        if id as usize == self.relation_counts.len() {
            self.relation_counts.push(0);
        }
        Ok(RelationId(id))
    }

    /// Stores `(head, relation, tail)`, interning labels on first use.
    /// Adding an existing triplet returns it without storing it twice.
    pub fn add_fact(&mut self, head: &str, relation: &str, tail: &str) -> Result<AtomicFact> {
        let head = normalize_label(head)?;
        let tail = normalize_label(tail)?;
        if head == tail {
            return Err(Error::SelfLoop(head.to_owned()));
        }
        let head = self.add_entity(head)?;
        let relation = self.add_relation(relation)?;
        let tail = self.add_entity(tail)?;
        self.insert_fact(AtomicFact { head, relation, tail })
    }

    /// Stores a fact between already-interned ids.
    pub fn add_fact_ids(&mut self, head: EntityId, relation: RelationId, tail: EntityId) -> Result<AtomicFact> {
        self.check_entity(head)?;
        self.check_entity(tail)?;
        self.check_relation(relation)?;
        if head == tail {
            return Err(Error::SelfLoop(self.entity_label(head).to_owned()));
        }
        self.insert_fact(AtomicFact { head, relation, tail })
    }

    fn insert_fact(&mut self, fact: AtomicFact) -> Result<AtomicFact> {
        if !self.fact_set.insert(fact) {
            return Ok(fact);
        }
        self.facts.push(fact);
        self.relation_counts[fact.relation.index()] += 1;
        insert_sorted(
            self.successors[fact.head.index()].entry(fact.relation).or_default(),
            fact.tail,
        );
        insert_sorted(
            self.predecessors[fact.tail.index()].entry(fact.relation).or_default(),
            fact.head,
        );
        Ok(fact)
    }

    /// Attaches a type annotation (e.g. `Person`) to an entity.
    pub fn set_entity_type(&mut self, entity: EntityId, ty: &str) -> Result<()> {
        self.check_entity(entity)?;
        let ty = ty.trim();
        self.entity_types[entity.index()] = if ty.is_empty() { None } else { Some(ty.to_owned()) };
        Ok(())
    }

    pub fn entity_type(&self, entity: EntityId) -> Option<&str> {
        self.entity_types.get(entity.index()).and_then(|t| t.as_deref())
    }

    pub fn node_count(&self) -> usize {
        self.entities.labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.labels.len()
    }

    /// `|F_A|`: every stored directed fact counts once.
    pub fn edge_count(&self) -> usize {
        self.facts.len()
    }

    pub fn facts(&self) -> &[AtomicFact] {
        &self.facts
    }

    pub fn contains(&self, fact: &AtomicFact) -> bool {
        self.fact_set.contains(fact)
    }

    /// Number of atomic facts of one relation type, `|F_{A,r}|`.
    pub fn relation_fact_count(&self, relation: RelationId) -> usize {
        self.relation_counts.get(relation.index()).copied().unwrap_or(0)
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.node_count() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_count() as u32).map(RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entities.labels[id.index()]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relations.labels[id.index()]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label.trim()).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label.trim()).map(RelationId)
    }

    fn check_entity(&self, id: EntityId) -> Result<()> {
        if id.index() < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownEntity(id.0))
        }
    }

    fn check_relation(&self, id: RelationId) -> Result<()> {
        if id.index() < self.relation_count() {
            Ok(())
        } else {
            Err(Error::UnknownRelation(id.0))
        }
    }

    /// All entities reachable from `head` in one step along `relation`,
    /// ascending by id.
    pub fn inference_step(&self, head: EntityId, relation: RelationId, mode: Mode) -> Result<Vec<EntityId>> {
        self.check_entity(head)?;
        self.check_relation(relation)?;
        Ok(self.neighbors(head, relation, mode))
    }

    pub(crate) fn neighbors(&self, head: EntityId, relation: RelationId, mode: Mode) -> Vec<EntityId> {
        let out = self.successors[head.index()]
            .get(&relation)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        match mode {
            Mode::Directed => out.to_vec(),
            Mode::Undirected => {
                let inc = self.predecessors[head.index()]
                    .get(&relation)
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                merge_sorted(out, inc)
            }
        }
    }

    /// Number of distinct one-step successors of `(head, relation)`.
    pub(crate) fn successor_count(&self, head: EntityId, relation: RelationId, mode: Mode) -> usize {
        match mode {
            Mode::Directed => self.successors[head.index()].get(&relation).map_or(0, Vec::len),
            Mode::Undirected => self.neighbors(head, relation, mode).len(),
        }
    }

    /// Every `(relation, neighbour)` step available from `entity`, sorted
    /// by relation id then neighbour id, without duplicates.
    pub(crate) fn steps(&self, entity: EntityId, mode: Mode) -> Vec<(RelationId, EntityId)> {
        let mut steps: Vec<(RelationId, EntityId)> = self.successors[entity.index()]
            .iter()
            .flat_map(|(&r, ts)| ts.iter().map(move |&t| (r, t)))
            .collect();
        if mode == Mode::Undirected {
            steps.extend(
                self.predecessors[entity.index()]
                    .iter()
                    .flat_map(|(&r, hs)| hs.iter().map(move |&h| (r, h))),
            );
            steps.sort_unstable();
            steps.dedup();
        }
        steps
    }

    pub fn out_degree(&self, entity: EntityId) -> usize {
        self.successors[entity.index()].values().map(Vec::len).sum()
    }

    pub fn in_degree(&self, entity: EntityId) -> usize {
        self.predecessors[entity.index()].values().map(Vec::len).sum()
    }

    /// Whether `to` is reachable from `from` along directed facts.
    pub fn reaches(&self, from: EntityId, to: EntityId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![from];
        seen[from.index()] = true;
        while let Some(v) = stack.pop() {
            for ts in self.successors[v.index()].values() {
                for &t in ts {
                    if t == to {
                        return true;
                    }
                    if !seen[t.index()] {
                        seen[t.index()] = true;
                        stack.push(t);
                    }
                }
            }
        }
        false
    }

    /// Kahn's algorithm over the directed facts.
    pub fn is_acyclic(&self) -> bool {
        let mut indeg: Vec<usize> = self.entities().map(|e| self.in_degree(e)).collect();
        let mut queue: Vec<EntityId> = self.entities().filter(|e| indeg[e.index()] == 0).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop() {
            visited += 1;
            for ts in self.successors[v.index()].values() {
                for &t in ts {
                    indeg[t.index()] -= 1;
                    if indeg[t.index()] == 0 {
                        queue.push(t);
                    }
                }
            }
        }
        visited == self.node_count()
    }

    /// Average branching factor `|F_A| / |V|`, or `|F_{A,r}| / |V|` when a
    /// relation is given.
    pub fn branching_factor(&self, relation: Option<RelationId>) -> Result<Ratio<u64>> {
        if self.node_count() == 0 {
            return Err(Error::EmptyGraph);
        }
        let facts = match relation {
            Some(r) => {
                self.check_relation(r)?;
                self.relation_fact_count(r)
            }
            None => self.edge_count(),
        };
        Ok(Ratio::new(facts as u64, self.node_count() as u64))
    }

    /// Reads triplet TSV: `head<TAB>relation<TAB>tail` per line, `#` comments
    /// and blank lines skipped.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut kg = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            kg.add_fact(cols[0], cols[1], cols[2]).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(kg)
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(std::io::BufReader::new(file))
    }

    /// Writes facts in insertion order as triplet TSV.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for f in &self.facts {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_label(f.head),
                self.relation_label(f.relation),
                self.entity_label(f.tail)
            )?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("labels are valid UTF-8")
    }

    /// Fact as `(head, relation, tail)` labels.
    pub fn fact_labels(&self, fact: &AtomicFact) -> (&str, &str, &str) {
        (
            self.entity_label(fact.head),
            self.relation_label(fact.relation),
            self.entity_label(fact.tail),
        )
    }
}

fn merge_sorted(a: &[EntityId], b: &[EntityId]) -> Vec<EntityId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Obama / Michelle / 1964 / Mary Poppins.
    pub(crate) fn obama_graph() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("Michelle", "wife of", "Obama").unwrap();
        kg.add_fact("Michelle", "born in", "1964").unwrap();
        kg.add_fact("Mary Poppins", "aired in", "1964").unwrap();
        kg
    }

    fn labels(kg: &KnowledgeGraph, ids: &[EntityId]) -> Vec<String> {
        ids.iter().map(|&e| kg.entity_label(e).to_owned()).collect()
    }

    #[test]
    fn add_fact_interns_and_counts() {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("Michelle", "wife of", "Obama").unwrap();
        assert_eq!(kg.edge_count(), 1);
        assert_eq!(kg.node_count(), 2);
        kg.add_fact("Michelle", "wife of", "Obama").unwrap();
        kg.add_fact("Michelle", "wife of", "Oba\tma").unwrap_err();
        kg.add_fact(" Michelle ", " wife of", "Obama ").unwrap();
        assert_eq!(kg.edge_count(), 1);
    }

    #[test]
    fn self_loop_rejected() {
        let mut kg = KnowledgeGraph::new();
        let err = kg.add_fact("Paris", "self", "Paris").unwrap_err();
        assert!(matches!(err, Error::SelfLoop(ref l) if l == "Paris"));
        assert_eq!(kg.edge_count(), 0);
    }

    #[test]
    fn labels_are_case_sensitive() {
        let mut kg = KnowledgeGraph::new();
        kg.add_fact("paris", "in", "Paris").unwrap();
        assert_eq!(kg.node_count(), 2);
    }

    #[test]
    fn inference_step_modes() {
        let kg = obama_graph();
        let obama = kg.entity_id("Obama").unwrap();
        let year = kg.entity_id("1964").unwrap();
        let wife = kg.relation_id("wife of").unwrap();
        let aired = kg.relation_id("aired in").unwrap();

        let got = kg.inference_step(obama, wife, Mode::Undirected).unwrap();
        assert_eq!(labels(&kg, &got), ["Michelle"]);
        let got = kg.inference_step(year, aired, Mode::Undirected).unwrap();
        assert_eq!(labels(&kg, &got), ["Mary Poppins"]);
        assert!(kg.inference_step(year, aired, Mode::Directed).unwrap().is_empty());
    }

    #[test]
    fn inference_step_unknown_ids() {
        let kg = obama_graph();
        assert!(matches!(
            kg.inference_step(EntityId(99), RelationId(0), Mode::Directed),
            Err(Error::UnknownEntity(99))
        ));
        assert!(matches!(
            kg.inference_step(EntityId(0), RelationId(7), Mode::Directed),
            Err(Error::UnknownRelation(7))
        ));
    }

    #[test]
    fn branching_factors() {
        let kg = obama_graph();
        assert_eq!(kg.branching_factor(None).unwrap(), Ratio::new(3, 4));

        let mut kg = KnowledgeGraph::new();
        for i in 0..5 {
            kg.add_entity(&format!("n{i}")).unwrap();
        }
        assert_eq!(kg.branching_factor(None).unwrap(), Ratio::from_integer(0));

        let mut kg = KnowledgeGraph::new();
        for i in 0..10 {
            kg.add_fact(&format!("n{i}"), "r", &format!("n{}", (i + 1) % 10))
                .unwrap();
            kg.add_fact(&format!("n{i}"), "r", &format!("n{}", (i + 2) % 10))
                .unwrap();
        }
        let r = kg.relation_id("r").unwrap();
        assert_eq!(kg.edge_count(), 20);
        assert_eq!(kg.branching_factor(None).unwrap(), Ratio::from_integer(2));
        assert_eq!(kg.branching_factor(Some(r)).unwrap(), Ratio::from_integer(2));

        assert!(matches!(
            KnowledgeGraph::new().branching_factor(None),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn tsv_roundtrip_skips_comments() {
        let text = "# header\nMichelle\twife of\tObama\n\nMichelle\tborn in\t1964\n";
        let kg = KnowledgeGraph::read_tsv(text.as_bytes()).unwrap();
        assert_eq!(kg.edge_count(), 2);
        assert_eq!(
            kg.to_tsv_string(),
            "Michelle\twife of\tObama\nMichelle\tborn in\t1964\n"
        );
    }

    #[test]
    fn tsv_rejects_bad_columns() {
        let err = KnowledgeGraph::read_tsv("a\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn acyclicity_and_reachability() {
        let mut kg = obama_graph();
        assert!(kg.is_acyclic());
        let m = kg.entity_id("Michelle").unwrap();
        let o = kg.entity_id("Obama").unwrap();
        assert!(kg.reaches(m, o));
        assert!(!kg.reaches(o, m));
        kg.add_fact("Obama", "husband of", "Michelle").unwrap();
        assert!(!kg.is_acyclic());
    }
}
