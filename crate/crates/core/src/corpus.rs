//! Question/answer records, JSONL I/O and corpus-level ratio reports.
//!
//! For atomic items `question` holds the fact statement to memorize (a
//! triplet line or a paragraph) and `answer` its tail entity.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{AtomicFact, KnowledgeGraph, Mode};
use crate::paths::InferredFact;
use crate::phi::{HopOrder, PhiReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Atomic,
    Inferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Comparison,
    Composition,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comparison" => Ok(Task::Comparison),
            "composition" => Ok(Task::Composition),
            other => Err(Error::InvalidParameter(format!(
                "unknown task `{other}` (comparison | composition)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    IdTest,
    OodTest,
}

/// An atomic fact by labels: `[head, relation, tail]`.
pub type Triplet = [String; 3];

pub fn triplet(kg: &KnowledgeGraph, fact: &AtomicFact) -> Triplet {
    let (h, r, t) = kg.fact_labels(fact);
    [h.to_owned(), r.to_owned(), t.to_owned()]
}

pub fn triplet_line(t: &Triplet) -> String {
    format!("{} -- {} -- {}", t[0], t[1], t[2])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub kind: Kind,
    pub task: Task,
    /// 0 for atomic items.
    pub hops: usize,
    pub question: String,
    pub answer: String,
    /// Interleaved `(2n+1)`-tuple of labels, when the item is backed by a path.
    pub path: Option<Vec<String>>,
    pub source_facts: Vec<Triplet>,
    pub synthetic: bool,
    pub detailed: bool,
    pub split: Option<Split>,
}

impl QAItem {
    pub fn atomic(id: String, task: Task, fact: Triplet, synthetic: bool) -> Self {
        QAItem {
            id,
            kind: Kind::Atomic,
            task,
            hops: 0,
            question: triplet_line(&fact),
            answer: fact[2].clone(),
            path: None,
            source_facts: vec![fact],
            synthetic,
            detailed: false,
            split: None,
        }
    }

    /// The item's atomic fact; `None` for inferred items.
    pub fn fact(&self) -> Option<&Triplet> {
        match self.kind {
            Kind::Atomic => self.source_facts.first(),
            Kind::Inferred => None,
        }
    }

    /// Relation labels the item involves, each once.
    pub fn relations(&self) -> BTreeSet<&str> {
        self.source_facts.iter().map(|f| f[1].as_str()).collect()
    }

    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("item {}: {msg}", self.id)));
        if self.question.trim().is_empty() {
            return bad("empty question");
        }
        match self.kind {
            Kind::Atomic => {
                if self.hops != 0 || self.source_facts.len() != 1 {
                    return bad("atomic items carry exactly one fact and zero hops");
                }
            }
            Kind::Inferred => {
                if self.source_facts.len() < 2 {
                    return bad("inferred items need at least two source facts");
                }
                if self.task == Task::Comparison && !matches!(self.answer.as_str(), "Yes" | "No") {
                    return bad("comparison answers are Yes or No");
                }
            }
        }
        Ok(())
    }
}

pub fn path_labels(kg: &KnowledgeGraph, path: &InferredFact) -> Vec<String> {
    path.to_labels(kg)
}

pub fn write_jsonl<W: Write>(mut out: W, items: &[QAItem]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn to_jsonl_string(items: &[QAItem]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).expect("in-memory write");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<QAItem>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<QAItem>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(std::io::BufReader::new(file))
}

/// Splits a mixed list into `(atomic, inferred)`, preserving order.
pub fn partition(items: Vec<QAItem>) -> (Vec<QAItem>, Vec<QAItem>) {
    items.into_iter().partition(|i| i.kind == Kind::Atomic)
}

/// Ratio report over a corpus: atomic counts per relation from the atomic
/// items, inferred counts per relation from the inferred items (an item
/// counts once for every distinct relation among its source facts).
pub fn corpus_phi(atomic: &[QAItem], inferred: &[QAItem]) -> PhiReport {
    let mut atomic_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut entities: BTreeSet<&str> = BTreeSet::new();
    let mut seen: BTreeSet<&Triplet> = BTreeSet::new();
    for item in atomic {
        if let Some(f) = item.fact() {
            if seen.insert(f) {
                *atomic_counts.entry(f[1].clone()).or_default() += 1;
                entities.insert(&f[0]);
                entities.insert(&f[2]);
            }
        }
    }
    let mut inferred_counts: BTreeMap<String, BTreeMap<usize, u64>> = BTreeMap::new();
    let mut max_hops = 2;
    for item in inferred {
        let hops = item.hops.max(2);
        max_hops = max_hops.max(hops);
        for r in item.relations() {
            *inferred_counts
                .entry(r.to_owned())
                .or_default()
                .entry(hops)
                .or_default() += 1;
        }
    }
    PhiReport::from_counts(
        entities.len() as u64,
        &atomic_counts,
        &inferred_counts,
        inferred.len() as u64,
        HopOrder::UpTo(max_hops),
        Mode::Directed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn t(h: &str, r: &str, tl: &str) -> Triplet {
        [h.into(), r.into(), tl.into()]
    }

    fn inferred(id: &str, facts: Vec<Triplet>, answer: &str) -> QAItem {
        QAItem {
            id: id.into(),
            kind: Kind::Inferred,
            task: Task::Comparison,
            hops: 2,
            question: "q?".into(),
            answer: answer.into(),
            path: None,
            source_facts: facts,
            synthetic: true,
            detailed: false,
            split: None,
        }
    }

    #[test]
    fn jsonl_field_names() {
        let item = QAItem::atomic(
            "a1".into(),
            Task::Comparison,
            t("Paris Louvre Museum", "country", "France"),
            true,
        );
        let line = to_jsonl_string(std::slice::from_ref(&item));
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            BTreeSet::from([
                "id",
                "kind",
                "task",
                "hops",
                "question",
                "answer",
                "path",
                "source_facts",
                "synthetic",
                "detailed",
                "split"
            ])
        );
        assert_eq!(read_jsonl(line.as_bytes()).unwrap(), vec![item]);
    }

    #[test]
    fn corpus_ratio_half() {
        let atomic: Vec<QAItem> = (0..120)
            .map(|i| {
                QAItem::atomic(
                    format!("a{i}"),
                    Task::Comparison,
                    t(&format!("L{i}"), "country", "C"),
                    false,
                )
            })
            .collect();
        let inf: Vec<QAItem> = (0..60)
            .map(|i| {
                inferred(
                    &format!("i{i}"),
                    vec![
                        t(&format!("L{i}"), "country", "C"),
                        t(&format!("L{}", i + 60), "country", "C"),
                    ],
                    "Yes",
                )
            })
            .collect();
        let r = corpus_phi(&atomic, &inf);
        assert_eq!(r.global_phi, Some(Ratio::new(1, 2)));
        assert_eq!(r.per_relation["country"].phi, Some(Ratio::new(1, 2)));
    }

    #[test]
    fn validation_catches_bad_items() {
        assert!(inferred("x", vec![t("a", "r", "b")], "Yes").validate().is_err());
        assert!(inferred("x", vec![t("a", "r", "b"), t("c", "r", "b")], "Maybe")
            .validate()
            .is_err());
        assert!(inferred("x", vec![t("a", "r", "b"), t("c", "r", "b")], "No")
            .validate()
            .is_ok());
    }
}
