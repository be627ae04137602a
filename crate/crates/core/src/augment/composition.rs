//! Composition-task augmentation: graph parsing, acyclic atomic growth,
//! multi-hop path sampling and question rendering.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use num_rational::Ratio;
use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::backend::{
    fill_prompt, strip_numbering, GenerationBackend, GRAPH_PARSING_PROMPT, QUESTION_FORMATTING_PROMPT,
};
use super::lexicon::{
    AWARDS, CAUSES_OF_DEATH, FILM_ADJECTIVES, FILM_NOUNS, FIRST_NAMES, LAST_NAMES, NATIONS, TOWNS, UNIVERSITIES,
};
use super::{derive_seed, PipelineOutput};
use crate::corpus::{corpus_phi, triplet, Kind, QAItem, Task};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Mode, RelationId};
use crate::paths::{enumerate_inferred, InferredFact, PathQuery};

pub const DEFAULT_TYPE: &str = "Object";

const EXTERNAL_BATCH: usize = 20;

#[derive(Debug, Clone)]
pub struct ParsedGraph {
    pub kg: KnowledgeGraph,
    /// `(line number, reason)` for every line that was skipped.
    pub rejects: Vec<(usize, String)>,
}

fn numbered_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\d+[.)]\s*)?<([^<>;]+)(?:;\s*([^<>]*))?>\s*<([^<>]+)>\s*<([^<>;]+)(?:;\s*([^<>]*))?>$")
            .expect("valid regex")
    })
}

/// Parses numbered `<obj; Type><relation><obj; Type>` lines and plain
/// `head<TAB>relation<TAB>tail` lines. Blank lines and `#` comments are
/// ignored; anything else that fails to parse is reported in `rejects`.
pub fn parse_graph(text: &str) -> Result<ParsedGraph> {
    let mut kg = KnowledgeGraph::new();
    let mut rejects = Vec::new();
    let mut parsed = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let fields = if let Some(c) = numbered_line_re().captures(line) {
            let get = |k: usize| c.get(k).map(|m| m.as_str().trim()).filter(|s| !s.is_empty());
            Some((get(1), get(2), get(3), get(4), get(5)))
        } else if raw.matches('\t').count() == 2 {
            let mut it = strip_numbering(raw).split('\t').map(str::trim);
            let (h, r, t) = (it.next(), it.next(), it.next());
            Some((
                h.filter(|s| !s.is_empty()),
                None,
                r.filter(|s| !s.is_empty()),
                t.filter(|s| !s.is_empty()),
                None,
            ))
        } else {
            None
        };
        let Some((Some(h), hty, Some(r), Some(t), tty)) = fields else {
            rejects.push((lineno, format!("unrecognized line: {line}")));
            continue;
        };
        match kg.add_fact(h, r, t) {
            Ok(fact) => {
                parsed += 1;
                for (id, ty) in [(fact.head, hty), (fact.tail, tty)] {
                    if let (Some(ty), None) = (ty, kg.entity_type(id)) {
                        kg.set_entity_type(id, ty)?;
                    }
                }
            }
            Err(e) => rejects.push((lineno, e.to_string())),
        }
    }
    if parsed == 0 {
        return Err(Error::NothingParsed { rejects });
    }
    Ok(ParsedGraph { kg, rejects })
}

/// Asks the external backend to extract a graph from free text, falling
/// back to parsing the text itself.
pub fn parse_text_with_backend(text: &str, backend: &GenerationBackend) -> Result<ParsedGraph> {
    if let Some(reply) = backend.complete(GRAPH_PARSING_PROMPT, text) {
        match parse_graph(&reply) {
            Ok(g) => return Ok(g),
            Err(e) => backend.warn(format!(
                "unparseable graph from external backend ({e}); parsing input directly"
            )),
        }
    }
    parse_graph(text)
}

pub fn is_year_label(label: &str) -> bool {
    label.len() == 4 && label.bytes().all(|b| b.is_ascii_digit())
}

/// Relations whose every head carries at most one edge.
fn functional_relations(kg: &KnowledgeGraph) -> HashSet<RelationId> {
    let mut heads: HashMap<RelationId, HashSet<EntityId>> = HashMap::new();
    let mut multi = HashSet::new();
    for f in kg.facts() {
        if !heads.entry(f.relation).or_default().insert(f.head) {
            multi.insert(f.relation);
        }
    }
    kg.relations().filter(|r| !multi.contains(r)).collect()
}

fn type_of(kg: &KnowledgeGraph, e: EntityId) -> String {
    kg.entity_type(e).unwrap_or(DEFAULT_TYPE).to_owned()
}

/// Fresh, collision-free entity labels.
struct NameForge {
    used: HashSet<String>,
    counter: usize,
}

impl NameForge {
    fn new(kg: &KnowledgeGraph) -> Self {
        NameForge {
            used: kg.entities().map(|e| kg.entity_label(e).to_owned()).collect(),
            counter: 0,
        }
    }

    fn claim(&mut self, candidates: impl IntoIterator<Item = String>, fallback: &str) -> String {
        for c in candidates {
            if self.used.insert(c.clone()) {
                return c;
            }
        }
        loop {
            self.counter += 1;
            let c = format!("{fallback} {}", self.counter);
            if self.used.insert(c.clone()) {
                return c;
            }
        }
    }

    fn fresh(&mut self, ty: &str, relation: &str, as_head: bool, rng: &mut ChaCha8Rng) -> String {
        fn shuffled(mut v: Vec<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
            v.shuffle(rng);
            v
        }
        let people = || {
            FIRST_NAMES
                .iter()
                .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}")))
                .collect::<Vec<_>>()
        };
        let films = || {
            FILM_ADJECTIVES
                .iter()
                .flat_map(|a| FILM_NOUNS.iter().map(move |n| format!("The {a} {n}")))
                .collect::<Vec<_>>()
        };
        let list = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match (ty, relation, as_head) {
            ("Person", _, _) => {
                let c = shuffled(people(), rng);
                self.claim(c, "Person")
            }
            ("Location", "country", false) => self.claim(list(NATIONS), "Country"),
            ("Location", _, _) => {
                let towns = TOWNS
                    .iter()
                    .flat_map(|t| ["", " Abbey", " Bridge", " Heath", " Green", " Cross"].map(|s| format!("{t}{s}")))
                    .collect();
                let c = shuffled(towns, rng);
                self.claim(c, "Town")
            }
            (_, "date of birth", false) => {
                let years: Vec<String> = (1700..1950).map(|y| y.to_string()).collect();
                let c = shuffled(years, rng);
                self.claim(c, "Year")
            }
            (_, "cause of death", false) => self.claim(list(CAUSES_OF_DEATH), "Illness"),
            (_, "educated at", false) => {
                let extra = TOWNS.iter().map(|t| format!("University of {t}"));
                self.claim(list(UNIVERSITIES).into_iter().chain(extra), "College")
            }
            (_, "award received", false) => {
                let extra = TOWNS.iter().map(|t| format!("{t} Medal"));
                self.claim(list(AWARDS).into_iter().chain(extra), "Award")
            }
            (_, _, true) => {
                let c = shuffled(films(), rng);
                self.claim(c, "Work")
            }
            (_, r, false) => self.claim(std::iter::empty(), r),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AtomicAugment {
    pub kg: KnowledgeGraph,
    pub placed: usize,
    pub warnings: Vec<String>,
}

/// Attempts per scheduled edge before deferring it.
const EDGE_ATTEMPTS: usize = 200;
/// Probability that a new edge introduces a fresh entity.
const NEW_ENTITY_PROBABILITY: f64 = 0.1;
const SINK: &str = "/sink";

/// Entity class used to pick endpoints: the entity type, with entities that
/// have no outgoing edge split off for every type but `Person` (countries,
/// causes of death and the like only ever appear as tails).
fn entity_class(kg: &KnowledgeGraph, e: EntityId) -> String {
    let ty = type_of(kg, e);
    if ty != "Person" && kg.out_degree(e) == 0 {
        format!("{ty}{SINK}")
    } else {
        ty
    }
}

struct Grower {
    kg: KnowledgeGraph,
    /// Largest node count that keeps every relation's `|F_r| / |V|` at or
    /// above its starting value once all allotted edges are in.
    node_budget: u64,
    old_counts: HashMap<RelationId, u64>,
    counts: HashMap<RelationId, u64>,
    functional: HashSet<RelationId>,
    signatures: HashMap<RelationId, (String, String)>,
    by_class: BTreeMap<String, Vec<EntityId>>,
    tails_of: HashMap<RelationId, Vec<EntityId>>,
    has_edge: HashSet<(EntityId, RelationId)>,
    forge: NameForge,
}

impl Grower {
    fn new(kg: KnowledgeGraph) -> Self {
        let old_counts: HashMap<RelationId, u64> = kg
            .relations()
            .filter(|&r| kg.relation_fact_count(r) > 0)
            .map(|r| (r, kg.relation_fact_count(r) as u64))
            .collect();
        let class: HashMap<EntityId, String> = kg.entities().map(|e| (e, entity_class(&kg, e))).collect();
        let mut tally: HashMap<RelationId, BTreeMap<(String, String), usize>> = HashMap::new();
        let mut tails_of: HashMap<RelationId, Vec<EntityId>> = HashMap::new();
        for f in kg.facts() {
            *tally
                .entry(f.relation)
                .or_default()
                .entry((class[&f.head].clone(), class[&f.tail].clone()))
                .or_default() += 1;
            let tails = tails_of.entry(f.relation).or_default();
            if !tails.contains(&f.tail) {
                tails.push(f.tail);
            }
        }
        let signatures = tally
            .into_iter()
            .map(|(r, m)| {
                let best = m
                    .into_iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty");
                (r, best.0)
            })
            .collect();
        let mut by_class: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
        for e in kg.entities() {
            by_class.entry(class[&e].clone()).or_default().push(e);
        }
        Grower {
            node_budget: kg.node_count() as u64,
            counts: old_counts.clone(),
            old_counts,
            functional: functional_relations(&kg),
            signatures,
            by_class,
            tails_of,
            has_edge: kg.facts().iter().map(|f| (f.head, f.relation)).collect(),
            forge: NameForge::new(&kg),
            kg,
        }
    }

    fn may_grow(&self) -> bool {
        (self.kg.node_count() as u64) < self.node_budget
    }

    fn pick(pool: Option<&Vec<EntityId>>, rng: &mut ChaCha8Rng) -> Option<EntityId> {
        pool.filter(|p| !p.is_empty()).map(|p| p[rng.gen_range(0..p.len())])
    }

    /// Head choice weighted by `1 + in-degree`, so new facts attach where
    /// chains already arrive.
    fn pick_head(&self, pool: Option<&Vec<EntityId>>, rng: &mut ChaCha8Rng) -> Option<EntityId> {
        let pool = pool.filter(|p| !p.is_empty())?;
        let weights = pool.iter().map(|&e| 1 + self.kg.in_degree(e));
        let dist = rand::distributions::WeightedIndex::new(weights).ok()?;
        Some(pool[dist.sample(rng)])
    }

    fn fresh(&mut self, class: &str, r: RelationId, as_head: bool, rng: &mut ChaCha8Rng) -> Result<EntityId> {
        let ty = class.strip_suffix(SINK).unwrap_or(class).to_owned();
        let rel = self.kg.relation_label(r).to_owned();
        let label = self.forge.fresh(&ty, &rel, as_head, rng);
        let e = self.kg.add_entity(&label)?;
        self.kg.set_entity_type(e, &ty)?;
        self.by_class.entry(class.to_owned()).or_default().push(e);
        if !as_head && class.ends_with(SINK) {
            self.tails_of.entry(r).or_default().push(e);
        }
        Ok(e)
    }

    fn try_place(&mut self, r: RelationId, rng: &mut ChaCha8Rng) -> Result<bool> {
        let (hclass, tclass) = self.signatures[&r].clone();
        let functional = self.functional.contains(&r);
        for _ in 0..EDGE_ATTEMPTS {
            let may_grow = self.may_grow();
            let saturated = functional
                && self
                    .by_class
                    .get(&hclass)
                    .is_none_or(|p| p.iter().all(|&h| self.has_edge.contains(&(h, r))));
            let fresh_head = match (saturated, may_grow) {
                (true, true) => Some(true),
                (true, false) => return Ok(false),
                (false, true) if rng.gen_bool(NEW_ENTITY_PROBABILITY) => Some(rng.gen_bool(0.5)),
                _ => None,
            };
            let head = match fresh_head {
                Some(true) => None,
                _ => match self.pick_head(self.by_class.get(&hclass), rng) {
                    Some(h) => Some(h),
                    None => continue,
                },
            };
            let tail = match fresh_head {
                Some(false) => None,
                _ => {
                    let pool = if tclass.ends_with(SINK) {
                        self.tails_of.get(&r)
                    } else {
                        self.by_class.get(&tclass)
                    };
                    match Self::pick(pool, rng) {
                        Some(t) => Some(t),
                        None => continue,
                    }
                }
            };
            if let Some(h) = head {
                if functional && self.has_edge.contains(&(h, r)) {
                    continue;
                }
            }
            if let (Some(h), Some(t)) = (head, tail) {
                if h == t
                    || self.kg.contains(&crate::kg::AtomicFact {
                        head: h,
                        relation: r,
                        tail: t,
                    })
                    || self.kg.reaches(t, h)
                {
                    continue;
                }
            }
            let h = match head {
                Some(h) => h,
                None => self.fresh(&hclass, r, true, rng)?,
            };
            let t = match tail {
                Some(t) => t,
                None => self.fresh(&tclass, r, false, rng)?,
            };
            self.kg.add_fact_ids(h, r, t)?;
            self.has_edge.insert((h, r));
            *self.counts.get_mut(&r).expect("known relation") += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Adds `added_count` edges (and some fresh entities) without closing a
/// directed cycle. Relations are allotted edges in proportion to their
/// current usage; fresh entities are capped so that every relation's `b_r`
/// ends at or above its starting value once its allotment is placed.
pub fn augment_atomic(kg: &KnowledgeGraph, added_count: usize, seed: u64) -> Result<AtomicAugment> {
    if added_count == 0 {
        return Ok(AtomicAugment {
            kg: kg.clone(),
            placed: 0,
            warnings: Vec::new(),
        });
    }
    if kg.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grower = Grower::new(kg.clone());
    let total = kg.edge_count() as u64;

    // Largest-remainder allotment.
    let mut relations: Vec<RelationId> = grower.old_counts.keys().copied().collect();
    relations.sort();
    let mut quota: Vec<(RelationId, usize, u64)> = relations
        .iter()
        .map(|&r| {
            let exact = added_count as u64 * grower.old_counts[&r];
            (r, (exact / total) as usize, exact % total)
        })
        .collect();
    let mut short = added_count - quota.iter().map(|q| q.1).sum::<usize>();
    let mut by_rem: Vec<usize> = (0..quota.len()).collect();
    by_rem.sort_by(|&a, &b| quota[b].2.cmp(&quota[a].2).then(a.cmp(&b)));
    for i in by_rem {
        if short == 0 {
            break;
        }
        quota[i].1 += 1;
        short -= 1;
    }
    grower.node_budget = quota
        .iter()
        .map(|&(r, k, _)| {
            let old = grower.old_counts[&r];
            kg.node_count() as u64 * (old + k as u64) / old
        })
        .min()
        .unwrap_or(kg.node_count() as u64);
    let mut pending: Vec<RelationId> = quota.iter().flat_map(|&(r, k, _)| std::iter::repeat_n(r, k)).collect();
    pending.shuffle(&mut rng);

    // Slots that could not be placed yet (typically waiting for room to add
    // an entity) are retried while passes keep making progress.
    let mut placed = 0usize;
    loop {
        let before = pending.len();
        let mut deferred = Vec::new();
        for r in pending {
            if grower.try_place(r, &mut rng)? {
                placed += 1;
            } else {
                deferred.push(r);
            }
        }
        pending = deferred;
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    let mut warnings = Vec::new();
    if !pending.is_empty() {
        let mut failed: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &pending {
            *failed.entry(grower.kg.relation_label(*r)).or_default() += 1;
        }
        let detail: Vec<String> = failed.iter().map(|(r, k)| format!("{r}: {k}")).collect();
        warnings.push(format!(
            "placed {placed} of {added_count} atomic facts acyclically; unplaced by relation: {}",
            detail.join(", ")
        ));
    }
    for (&r, &old) in &grower.old_counts {
        let now = grower.kg.relation_fact_count(r) as u64;
        if now * (kg.node_count() as u64) < old * grower.kg.node_count() as u64 {
            warnings.push(format!(
                "branching factor of `{}` decreased",
                grower.kg.relation_label(r)
            ));
        }
    }
    Ok(AtomicAugment {
        kg: grower.kg,
        placed,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct InferredSample {
    /// Sampled paths in enumeration order.
    pub paths: Vec<InferredFact>,
    /// Size of the filtered stream the sample was drawn from.
    pub available: u64,
    pub warning: Option<String>,
}

/// Uniform sample of `target_count` distinct directed paths of the given hop
/// orders, by reservoir sampling over the enumeration stream.
pub fn augment_inferred(
    kg: &KnowledgeGraph,
    hop_orders: &BTreeSet<usize>,
    target_count: usize,
    seed: u64,
) -> Result<InferredSample> {
    augment_inferred_filtered(kg, hop_orders, target_count, seed, Mode::Directed, |_| true)
}

/// As [`augment_inferred`], in the given traversal mode and restricted to
/// paths accepted by `keep`. Undirected mode keeps one orientation of each
/// path (head id below tail id).
pub fn augment_inferred_filtered(
    kg: &KnowledgeGraph,
    hop_orders: &BTreeSet<usize>,
    target_count: usize,
    seed: u64,
    mode: Mode,
    keep: impl Fn(&InferredFact) -> bool,
) -> Result<InferredSample> {
    if target_count == 0 {
        return Err(Error::InvalidParameter("target count must be at least 1".into()));
    }
    if hop_orders.is_empty() || hop_orders.iter().any(|&n| !(2..=3).contains(&n)) {
        return Err(Error::InvalidParameter(format!(
            "hop orders must be a non-empty subset of {{2, 3}}, got {hop_orders:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<(u64, InferredFact)> = Vec::with_capacity(target_count);
    let mut seen = 0u64;
    for &n in hop_orders {
        for path in enumerate_inferred(kg, PathQuery::new(n, mode))? {
            if (mode == Mode::Undirected && path.head() > path.tail()) || !keep(&path) {
                continue;
            }
            if reservoir.len() < target_count {
                reservoir.push((seen, path));
            } else {
                let j = rng.gen_range(0..=seen);
                if (j as usize) < target_count {
                    reservoir[j as usize] = (seen, path);
                }
            }
            seen += 1;
        }
    }
    reservoir.sort_by_key(|(i, _)| *i);
    let warning = (seen < target_count as u64)
        .then(|| format!("only {seen} paths available for a target of {target_count}; returning all of them"));
    Ok(InferredSample {
        paths: reservoir.into_iter().map(|(_, p)| p).collect(),
        available: seen,
        warning,
    })
}

struct Phrases {
    /// Noun phrases naming the relation's value for `{x}`.
    noun: [&'static str; 2],
    /// Questions asking for it.
    question: [&'static str; 2],
}

fn phrases(relation: &str) -> Option<Phrases> {
    let p = |noun, question| Some(Phrases { noun, question });
    match relation {
        "father" => p(
            ["{x}'s father", "the father of {x}"],
            ["Who is {x}'s father?", "Who was the father of {x}?"],
        ),
        "mother" => p(
            ["{x}'s mother", "the mother of {x}"],
            ["Who is {x}'s mother?", "Who was the mother of {x}?"],
        ),
        "spouse" => p(
            ["{x}'s spouse", "the spouse of {x}"],
            ["Who is {x} married to?", "Who was the spouse of {x}?"],
        ),
        "place of birth" => p(
            ["{x}'s birthplace", "the place where {x} was born"],
            ["Where was {x} born?", "What is the place of birth of {x}?"],
        ),
        "place of death" => p(
            ["the place where {x} died", "{x}'s place of death"],
            ["Where did {x} die?", "What is the place of death of {x}?"],
        ),
        "cause of death" => p(
            ["the cause of {x}'s death", "what {x} died of"],
            ["Why did {x} die?", "What was the cause of death of {x}?"],
        ),
        "educated at" => p(
            ["the institution where {x} studied", "{x}'s alma mater"],
            ["Where did {x} study?", "Which institution educated {x}?"],
        ),
        "award received" => p(
            ["the award {x} received", "{x}'s award"],
            ["Which award did {x} receive?", "What award was given to {x}?"],
        ),
        "date of birth" => p(
            ["the birth year of {x}", "{x}'s year of birth"],
            ["When was {x} born?", "In which year was {x} born?"],
        ),
        "country" => p(
            ["the country of {x}", "the country where {x} is located"],
            ["Which country is {x} in?", "In which country is {x} located?"],
        ),
        "director" => p(
            ["the director of {x}", "{x}'s director"],
            ["Who directed {x}?", "Who is the director of {x}?"],
        ),
        "performer" => p(
            ["the star of {x}", "the lead performer of {x}"],
            ["Who starred in {x}?", "Who is the lead performer of {x}?"],
        ),
        _ => None,
    }
}

fn generic_noun(relation: &str, x: &str) -> String {
    format!("the {relation} of {x}")
}

fn generic_question(relation: &str, x: &str) -> String {
    format!("What is the {relation} of {x}?")
}

/// Renders the chain `v0 -r1-> ... -rn-> vn` as a question about `vn`. Bit
/// `i` of `variant` picks the phrasing for relation `i + 1`. Returns the
/// question and whether a generic fallback was needed.
pub fn render_question(head: &str, relations: &[&str], variant: usize) -> (String, bool) {
    let mut x = head.to_owned();
    let mut generic = false;
    let last = relations.len() - 1;
    for (i, rel) in relations.iter().enumerate() {
        let pick = (variant >> i) & 1;
        x = match (phrases(rel), i == last) {
            (Some(p), false) => p.noun[pick].replace("{x}", &x),
            (Some(p), true) => p.question[pick].replace("{x}", &x),
            (None, false) => {
                generic = true;
                generic_noun(rel, &x)
            }
            (None, true) => {
                generic = true;
                generic_question(rel, &x)
            }
        };
    }
    (x, generic)
}

#[derive(Debug, Clone)]
pub struct Diversified {
    pub items: Vec<QAItem>,
    /// Ids of items rendered with the generic fallback template.
    pub generic: Vec<String>,
}

/// Turns paths into composition questions whose answer is the path's tail.
/// Each relation sequence cycles through its phrasings from a seeded offset.
pub fn diversify(
    facts: &[InferredFact],
    kg: &KnowledgeGraph,
    backend: &GenerationBackend,
    seed: u64,
    id_prefix: &str,
) -> Result<Diversified> {
    if facts.is_empty() {
        return Err(Error::InvalidParameter("no inferred facts to render".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursor: HashMap<Vec<RelationId>, usize> = HashMap::new();
    let mut items = Vec::with_capacity(facts.len());
    let mut generic = Vec::new();
    for (k, path) in facts.iter().enumerate() {
        let rels: Vec<&str> = path.relations.iter().map(|&r| kg.relation_label(r)).collect();
        let combos = 1usize << rels.len();
        let slot = cursor
            .entry(path.relations.clone())
            .or_insert_with(|| rng.gen_range(0..combos));
        let variant = *slot % combos;
        *slot += 1;
        let (question, is_generic) = render_question(kg.entity_label(path.head()), &rels, variant);
        let id = format!("{id_prefix}{:05}", k + 1);
        if is_generic {
            generic.push(id.clone());
        }
        items.push(QAItem {
            id,
            kind: Kind::Inferred,
            task: Task::Composition,
            hops: path.hops(),
            question,
            answer: kg.entity_label(path.tail()).to_owned(),
            path: Some(path.to_labels(kg)),
            source_facts: path.source_facts(kg).iter().map(|f| triplet(kg, f)).collect(),
            synthetic: true,
            detailed: false,
            split: None,
        });
    }
    if backend.external.is_some() {
        rephrase_external(&mut items, backend);
    }
    Ok(Diversified { items, generic })
}

/// Replaces template questions with external rephrasings whose answer tag
/// matches exactly; everything else keeps its template text.
fn rephrase_external(items: &mut [QAItem], backend: &GenerationBackend) {
    for chunk in items.chunks_mut(EXTERNAL_BATCH) {
        let user: String = chunk
            .iter()
            .enumerate()
            .map(|(i, it)| format!("{}. {}<a>{}</a>\n", i + 1, it.question, it.answer))
            .collect();
        let Some(reply) = backend.complete(&fill_prompt(QUESTION_FORMATTING_PROMPT, ""), &user) else {
            return;
        };
        for line in reply.lines() {
            let t = line.trim();
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            let Ok(k) = t[..digits].parse::<usize>() else {
                continue;
            };
            let Some((q, rest)) = strip_numbering(t).split_once("<a>") else {
                continue;
            };
            let Some(item) = k.checked_sub(1).and_then(|i| chunk.get_mut(i)) else {
                continue;
            };
            if rest.strip_suffix("</a>").map(str::trim) == Some(item.answer.as_str()) && !q.trim().is_empty() {
                item.question = q.trim().to_owned();
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompositionConfig {
    pub atomic_target: usize,
    pub inferred_target: usize,
    /// Paths drawn from the seed graph to stand in for the original questions.
    pub seed_inferred: usize,
    pub hop_orders: BTreeSet<usize>,
    /// Per-relation ratio the sampled paths are rebalanced towards.
    pub phi_target: Option<Ratio<u64>>,
    pub seed: u64,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        CompositionConfig {
            atomic_target: 800,
            inferred_target: 5000,
            seed_inferred: 100,
            hop_orders: BTreeSet::from([2, 3]),
            phi_target: Some(Ratio::new(25, 4)),
            seed: 0,
        }
    }
}

/// Grows a seed graph to the configured sizes and renders the questions.
pub fn run_composition(
    config: &CompositionConfig,
    seed_text: &str,
    backend: &GenerationBackend,
) -> Result<PipelineOutput> {
    let parsed = parse_text_with_backend(seed_text, backend)?;
    let mut warnings: Vec<String> = parsed
        .rejects
        .iter()
        .map(|(line, why)| format!("seed line {line} rejected: {why}"))
        .collect();
    let seed_kg = parsed.kg;
    let seed_facts = seed_kg.edge_count();
    if config.atomic_target < seed_facts || config.inferred_target < config.seed_inferred {
        return Err(Error::InvalidParameter(format!(
            "targets ({} atomic, {} inferred) are below the seed corpus size ({seed_facts}, {})",
            config.atomic_target, config.inferred_target, config.seed_inferred
        )));
    }
    let keep_answer = |kg: &KnowledgeGraph, p: &InferredFact| !is_year_label(kg.entity_label(p.tail()));

    let mut seed_paths = Vec::new();
    if config.seed_inferred > 0 {
        let s = augment_inferred_filtered(
            &seed_kg,
            &config.hop_orders,
            config.seed_inferred,
            derive_seed(config.seed, 10),
            Mode::Directed,
            |p| keep_answer(&seed_kg, p),
        )?;
        warnings.extend(s.warning);
        seed_paths = s.paths;
    }

    let grown = augment_atomic(
        &seed_kg,
        config.atomic_target - seed_facts,
        derive_seed(config.seed, 11),
    )?;
    warnings.extend(grown.warnings);
    let kg = grown.kg;

    let exclude: HashSet<&InferredFact> = seed_paths.iter().collect();
    let new_target = config.inferred_target - seed_paths.len();
    let mut new_paths = Vec::new();
    if new_target > 0 {
        let s = augment_inferred_filtered(
            &kg,
            &config.hop_orders,
            new_target,
            derive_seed(config.seed, 12),
            Mode::Directed,
            |p| keep_answer(&kg, p) && !exclude.contains(p),
        )?;
        warnings.extend(s.warning);
        new_paths = s.paths;
        if let Some(target) = config.phi_target {
            let remapped = remap_paths(&seed_paths, &seed_kg, &kg)?;
            let mut pool = Vec::new();
            for &n in &config.hop_orders {
                for p in enumerate_inferred(&kg, PathQuery::new(n, Mode::Directed))? {
                    if keep_answer(&kg, &p) && !exclude.contains(&p) {
                        pool.push(p);
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 15));
            let swapped = rebalance(&kg, &remapped, &mut new_paths, pool, target, &mut rng);
            if swapped > 0 {
                warnings.push(format!(
                    "rebalanced {swapped} sampled paths towards under-represented relations"
                ));
            }
        }
    }

    // Seed paths keep their ids when replayed through the grown graph.
    let mut inferred = Vec::new();
    let mut generic = Vec::new();
    if !seed_paths.is_empty() {
        let remapped = remap_paths(&seed_paths, &seed_kg, &kg)?;
        let d = diversify(&remapped, &kg, backend, derive_seed(config.seed, 13), "seed-inferred-")?;
        generic.extend(d.generic);
        inferred.extend(d.items.into_iter().map(|mut i| {
            i.synthetic = false;
            i
        }));
    }
    if !new_paths.is_empty() {
        let d = diversify(&new_paths, &kg, backend, derive_seed(config.seed, 14), "inferred-")?;
        generic.extend(d.generic);
        inferred.extend(d.items);
    }
    if !generic.is_empty() {
        warnings.push(format!(
            "{} questions used the generic template: {}",
            generic.len(),
            generic.join(", ")
        ));
    }

    let atomic: Vec<QAItem> = kg
        .facts()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let original = i < seed_facts;
            let id = if original {
                format!("seed-atomic-{:05}", i + 1)
            } else {
                format!("atomic-{:05}", i + 1 - seed_facts)
            };
            QAItem::atomic(id, Task::Composition, triplet(&kg, f), !original)
        })
        .collect();
    warnings.extend(backend.take_warnings());
    let report = corpus_phi(&atomic, &inferred);
    Ok(PipelineOutput {
        atomic,
        inferred,
        report,
        warnings,
        graph: Some(kg),
    })
}

/// Swaps sampled paths for unsampled ones from `pool` until every relation
/// occurring in `fixed` or `sample` reaches `target` inferred items per atomic
/// fact, where that is possible without pushing another relation below it.
/// Returns the number of swaps.
fn rebalance(
    kg: &KnowledgeGraph,
    fixed: &[InferredFact],
    sample: &mut [InferredFact],
    mut pool: Vec<InferredFact>,
    target: Ratio<u64>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let (num, den) = (*target.numer(), *target.denom());
    let need = |r: RelationId| (num * kg.relation_fact_count(r) as u64).div_ceil(den);
    let mut counts: BTreeMap<RelationId, u64> = BTreeMap::new();
    for p in fixed.iter().chain(sample.iter()) {
        for r in p.distinct_relations() {
            *counts.entry(r).or_default() += 1;
        }
    }
    let in_sample: HashSet<InferredFact> = sample.iter().cloned().collect();
    pool.retain(|p| !in_sample.contains(p));
    pool.shuffle(rng);
    let mut used = vec![false; pool.len()];
    let mut swaps = 0;
    let short: Vec<RelationId> = counts.iter().filter(|(&r, &c)| c < need(r)).map(|(&r, _)| r).collect();
    for r in short {
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.shuffle(rng);
        let mut cursor = 0;
        for k in 0..pool.len() {
            if counts[&r] >= need(r) {
                break;
            }
            if used[k] || !pool[k].relations.contains(&r) {
                continue;
            }
            let add = pool[k].distinct_relations();
            // A slot whose path avoids `r` and whose relations keep their quota.
            let slot = order[cursor..].iter().position(|&j| {
                let old = sample[j].distinct_relations();
                !old.contains(&r)
                    && old
                        .iter()
                        .all(|q| add.contains(q) || counts.get(q).copied().unwrap_or(0) > need(*q))
            });
            let Some(pos) = slot else {
                break;
            };
            let j = order[cursor + pos];
            order.swap(cursor, cursor + pos);
            cursor += 1;
            for q in sample[j].distinct_relations() {
                *counts.get_mut(&q).expect("counted") -= 1;
            }
            for q in add {
                *counts.entry(q).or_default() += 1;
            }
            sample[j] = pool[k].clone();
            used[k] = true;
            swaps += 1;
        }
    }
    swaps
}

/// Re-expresses paths of `from` in the ids of `to` (a supergraph).
fn remap_paths(paths: &[InferredFact], from: &KnowledgeGraph, to: &KnowledgeGraph) -> Result<Vec<InferredFact>> {
    paths
        .iter()
        .map(|p| {
            let nodes = p
                .nodes
                .iter()
                .map(|&e| to.entity_id(from.entity_label(e)).ok_or(Error::UnknownEntity(e.0)))
                .collect::<Result<_>>()?;
            let relations = p
                .relations
                .iter()
                .map(|&r| {
                    to.relation_id(from.relation_label(r))
                        .ok_or(Error::UnknownRelation(r.0))
                })
                .collect::<Result<_>>()?;
            InferredFact::new(nodes, relations)
        })
        .collect()
}

/// `(relation, head type, tail type, fact count, functional)` for the
/// built-in seed graph. Counts sum to 200.
const SEED_PLAN: &[(&str, &str, &str, usize, bool)] = &[
    ("father", "Person", "Person", 30, true),
    ("mother", "Person", "Person", 20, true),
    ("spouse", "Person", "Person", 15, true),
    ("place of birth", "Person", "Location", 30, true),
    ("place of death", "Person", "Location", 15, true),
    ("cause of death", "Person", "Object", 15, true),
    ("educated at", "Person", "Object", 15, true),
    ("award received", "Person", "Object", 8, false),
    ("date of birth", "Person", "Object", 15, true),
    ("country", "Location", "Location", 14, true),
    ("director", "Object", "Person", 12, true),
    ("performer", "Object", "Person", 11, false),
];

/// Built-in stand-in for the original composition corpus: a typed, acyclic
/// 200-fact graph in the numbered `<obj; Type><relation><obj; Type>` format.
pub fn seed_composition_text() -> String {
    const SEED: u64 = 0xc0_5eed;
    const PEOPLE: usize = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut names: Vec<String> = FIRST_NAMES
        .iter()
        .flat_map(|f| LAST_NAMES.iter().map(move |l| format!("{f} {l}")))
        .collect();
    names.shuffle(&mut rng);
    let mut people: Vec<String> = names.into_iter().take(PEOPLE).collect();
    people[PEOPLE - 1] = "Randal Plunkett, 19th Baron of Dunsany".into();
    let towns: Vec<String> = TOWNS.iter().take(14).map(|s| s.to_string()).collect();
    let films: Vec<String> = FILM_ADJECTIVES
        .iter()
        .zip(FILM_NOUNS.iter().rev())
        .map(|(a, n)| format!("The {a} {n}"))
        .collect();
    let years: Vec<String> = (1780..1900).step_by(7).map(|y| y.to_string()).collect();

    let mut lines = Vec::new();
    let mut facts = HashSet::new();
    for &(rel, hty, tty, count, functional) in SEED_PLAN {
        let mut heads_used = HashSet::new();
        let mut added = 0;
        let mut attempt = 0;
        while added < count {
            attempt += 1;
            assert!(attempt < 100_000, "seed plan for {rel} is unsatisfiable");
            // Edges always point from a later person to an earlier one, and
            // from works to people to places and objects, so the graph is a DAG.
            let (h, t) = match rel {
                "father" | "mother" | "spouse" => {
                    let i = rng.gen_range(1..PEOPLE);
                    (people[i].clone(), people[rng.gen_range(0..i)].clone())
                }
                "place of birth" | "place of death" => (
                    people[rng.gen_range(0..PEOPLE)].clone(),
                    towns[rng.gen_range(0..towns.len())].clone(),
                ),
                "cause of death" => (
                    people[rng.gen_range(0..PEOPLE)].clone(),
                    CAUSES_OF_DEATH[rng.gen_range(0..CAUSES_OF_DEATH.len())].into(),
                ),
                "educated at" => (
                    people[rng.gen_range(0..PEOPLE)].clone(),
                    UNIVERSITIES[rng.gen_range(0..UNIVERSITIES.len())].into(),
                ),
                "award received" => (
                    people[rng.gen_range(0..PEOPLE)].clone(),
                    AWARDS[rng.gen_range(0..AWARDS.len())].into(),
                ),
                "date of birth" => (
                    people[rng.gen_range(0..PEOPLE)].clone(),
                    years[rng.gen_range(0..years.len())].clone(),
                ),
                "country" => (towns[added].clone(), NATIONS[rng.gen_range(0..NATIONS.len())].into()),
                _ => (
                    films[rng.gen_range(0..films.len())].clone(),
                    people[rng.gen_range(0..PEOPLE)].clone(),
                ),
            };
            if functional && heads_used.contains(&h) {
                continue;
            }
            if !facts.insert((h.clone(), rel, t.clone())) {
                continue;
            }
            heads_used.insert(h.clone());
            added += 1;
            lines.push(format!("<{h}; {hty}><{rel}><{t}; {tty}>"));
        }
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{}. {l}\n", i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::tests::obama_graph;

    #[test]
    fn parses_numbered_format() {
        let g = parse_graph("1. <Avatar; Film><director><James Cameron; Person>").unwrap();
        let f = g.kg.facts()[0];
        assert_eq!(g.kg.fact_labels(&f), ("Avatar", "director", "James Cameron"));
        assert_eq!(g.kg.entity_type(f.head), Some("Film"));
        assert_eq!(g.kg.entity_type(f.tail), Some("Person"));
        assert!(g.rejects.is_empty());
    }

    #[test]
    fn rejects_malformed_and_keeps_neighbors() {
        let text =
            "1. <A; Person><father><B; Person>\n2. <C; Person><father><D; Person\n3. B\tborn in\tX\n4. <E><e><E>\n";
        let g = parse_graph(text).unwrap();
        assert_eq!(g.kg.edge_count(), 2);
        let lines: Vec<usize> = g.rejects.iter().map(|r| r.0).collect();
        assert_eq!(lines, vec![2, 4]);
        assert!(g.kg.contains(&g.kg.facts()[1]));
        assert_eq!(g.kg.fact_labels(&g.kg.facts()[1]), ("B", "born in", "X"));
    }

    #[test]
    fn empty_input_fails() {
        assert!(matches!(parse_graph(""), Err(Error::NothingParsed { .. })));
        match parse_graph("garbage\n") {
            Err(Error::NothingParsed { rejects }) => assert_eq!(rejects.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_graph_is_a_typed_dag() {
        let g = parse_graph(&seed_composition_text()).unwrap();
        assert!(g.rejects.is_empty(), "{:?}", g.rejects);
        assert_eq!(g.kg.edge_count(), 200);
        assert!(g.kg.is_acyclic());
        assert!(g.kg.entities().all(|e| g.kg.entity_type(e).is_some()));
    }

    #[test]
    fn atomic_growth_keeps_dag_and_branching() {
        let seed = parse_graph(&seed_composition_text()).unwrap().kg;
        let out = augment_atomic(&seed, 600, 5).unwrap();
        assert_eq!(out.placed, 600, "{:?}", out.warnings);
        assert_eq!(out.kg.edge_count(), 800);
        assert!(out.kg.is_acyclic());
        for r in seed.relations() {
            let before = seed.branching_factor(Some(r)).unwrap();
            let after = out.kg.branching_factor(Some(r)).unwrap();
            assert!(after >= before, "{}: {before} -> {after}", seed.relation_label(r));
        }
        let again = augment_atomic(&seed, 600, 5).unwrap();
        assert_eq!(again.kg.to_tsv_string(), out.kg.to_tsv_string());
    }

    #[test]
    fn zero_growth_is_identity() {
        let seed = obama_graph();
        let out = augment_atomic(&seed, 0, 1).unwrap();
        assert_eq!(out.kg.to_tsv_string(), seed.to_tsv_string());
    }

    #[test]
    fn obama_pentad() {
        let kg = obama_graph();
        // Both chains run against a stored edge direction somewhere.
        let s = augment_inferred(&kg, &BTreeSet::from([2]), 5, 0).unwrap();
        assert_eq!(s.available, 0);
        let s = augment_inferred_filtered(&kg, &BTreeSet::from([2]), 5, 0, Mode::Undirected, |_| true).unwrap();
        assert_eq!(s.available, 2);
        assert!(s.warning.is_some());
        let labels: Vec<Vec<String>> = s.paths.iter().map(|p| p.to_labels(&kg)).collect();
        assert!(labels.contains(
            &["Obama", "wife of", "Michelle", "born in", "1964"]
                .map(String::from)
                .to_vec()
        ));
    }

    #[test]
    fn reservoir_is_distinct_and_deterministic() {
        let kg = parse_graph(&seed_composition_text()).unwrap().kg;
        let orders = BTreeSet::from([2, 3]);
        let a = augment_inferred(&kg, &orders, 50, 3).unwrap();
        let b = augment_inferred(&kg, &orders, 50, 3).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.paths.len(), 50);
        assert_eq!(a.paths.iter().collect::<HashSet<_>>().len(), 50);
        assert!(a.paths.iter().all(|p| p.replays(&kg, Mode::Directed)));
        assert!(augment_inferred(&kg, &BTreeSet::from([4]), 5, 0).is_err());
        let all = augment_inferred(&kg, &orders, 1_000_000, 0).unwrap();
        assert_eq!(all.paths.len() as u64, all.available);
    }

    #[test]
    fn dunsany_question() {
        let (q, generic) = render_question(
            "Randal Plunkett, 19th baron of Dunsany",
            &["father", "cause of death"],
            0,
        );
        assert_eq!(q, "Why did Randal Plunkett, 19th baron of Dunsany's father die?");
        assert!(!generic);
        let phrasings: HashSet<String> = (0..4)
            .map(|v| render_question("X", &["father", "cause of death"], v).0)
            .collect();
        assert_eq!(phrasings.len(), 4);
        assert!(render_question("X", &["father", "sponsor"], 0).1);
    }

    #[test]
    fn diversify_answers_are_tails() {
        let kg = parse_graph(&seed_composition_text()).unwrap().kg;
        let paths = augment_inferred(&kg, &BTreeSet::from([2, 3]), 200, 1).unwrap().paths;
        let b = GenerationBackend::template();
        let d = diversify(&paths, &kg, &b, 4, "q-").unwrap();
        for (item, p) in d.items.iter().zip(&paths) {
            assert_eq!(item.answer, kg.entity_label(p.tail()));
            item.validate().unwrap();
        }
        assert_eq!(diversify(&paths, &kg, &b, 4, "q-").unwrap().items, d.items);
        assert!(diversify(&[], &kg, &b, 0, "q-").is_err());
    }

    #[test]
    fn year_filter() {
        assert!(is_year_label("1964"));
        assert!(!is_year_label("964"));
        assert!(!is_year_label("Paris"));
    }
}
