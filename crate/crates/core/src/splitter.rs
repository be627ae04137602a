//! Train / in-distribution / out-of-distribution partitioning of a corpus.
//!
//! A seeded share of atomic facts is reserved: inferred items touching one
//! go to the OOD test set, so no training path ever uses a reserved fact.
//! Of the rest, a fixed share is trained on, and the residue becomes the ID
//! test set, keeping only items whose every fact is seen in training while
//! their exact fact combination is not.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::{corpus_phi, to_jsonl_string, triplet_line, Kind, QAItem, Split, Triplet};
use crate::error::{Error, Result};
use crate::phi::{ratio_f64, ratio_str, PhiReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_inferred_fraction: Ratio<u64>,
    pub ood_atomic_fraction: Ratio<u64>,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_inferred_fraction: Ratio::new(4, 5),
            ood_atomic_fraction: Ratio::new(1, 10),
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let one = Ratio::from_integer(1);
        for (name, f) in [
            ("train_inferred_fraction", self.train_inferred_fraction),
            ("ood_atomic_fraction", self.ood_atomic_fraction),
        ] {
            if *f.numer() == 0 || f >= one {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie strictly between 0 and 1, got {}",
                    ratio_str(&f)
                )));
            }
        }
        Ok(())
    }
}

/// `round(n * f)`, halves rounding up.
fn share(n: usize, f: Ratio<u64>) -> usize {
    let (num, den) = (*f.numer() as u128, *f.denom() as u128);
    ((n as u128 * num * 2 + den) / (2 * den)) as usize
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train_atomic: Vec<QAItem>,
    pub train_inferred: Vec<QAItem>,
    pub id_test: Vec<QAItem>,
    pub ood_test: Vec<QAItem>,
    pub reserved_facts: Vec<Triplet>,
    /// Residue items moved into training because they could not serve as ID tests.
    pub reassigned: usize,
    pub plan: SplitPlan,
    pub warnings: Vec<String>,
}

type Combo<'a> = BTreeSet<&'a Triplet>;

fn combo(item: &QAItem) -> Combo<'_> {
    item.source_facts.iter().collect()
}

pub fn split_id_ood(atomic: &[QAItem], inferred: &[QAItem], plan: SplitPlan) -> Result<DatasetSplit> {
    plan.validate()?;
    let mut facts: Vec<&Triplet> = Vec::new();
    let mut known: HashSet<&Triplet> = HashSet::new();
    for item in atomic {
        let fact = item
            .fact()
            .ok_or_else(|| Error::InvalidParameter(format!("item {} in the atomic list is not atomic", item.id)))?;
        if known.insert(fact) {
            facts.push(fact);
        }
    }
    for item in inferred {
        if item.kind != Kind::Inferred {
            return Err(Error::InvalidParameter(format!(
                "item {} in the inferred list is not inferred",
                item.id
            )));
        }
        if let Some(missing) = item.source_facts.iter().find(|f| !known.contains(f)) {
            return Err(Error::InvalidParameter(format!(
                "item {} uses a fact missing from the atomic list: {}",
                item.id,
                triplet_line(missing)
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let reserve_n = share(facts.len(), plan.ood_atomic_fraction);
    let mut reserved_idx = rand::seq::index::sample(&mut rng, facts.len(), reserve_n).into_vec();
    reserved_idx.sort_unstable();
    let reserved: HashSet<&Triplet> = reserved_idx.iter().map(|&i| facts[i]).collect();

    let (ood_idx, mut rest): (Vec<usize>, Vec<usize>) =
        (0..inferred.len()).partition(|&i| inferred[i].source_facts.iter().any(|f| reserved.contains(f)));
    rest.shuffle(&mut rng);
    let train_n = share(rest.len(), plan.train_inferred_fraction);
    let mut train_idx: Vec<usize> = rest[..train_n].to_vec();
    let mut residue: Vec<usize> = rest[train_n..].to_vec();

    let mut train_facts: HashSet<&Triplet> = HashSet::new();
    let mut train_combos: HashSet<Combo> = HashSet::new();
    for &i in &train_idx {
        train_facts.extend(inferred[i].source_facts.iter());
        train_combos.insert(combo(&inferred[i]));
    }
    // Moving an item into training can invalidate another residue item
    // (same combination), so iterate to a fixed point.
    let mut reassigned = 0;
    loop {
        let before = residue.len();
        residue.retain(|&i| {
            let item = &inferred[i];
            let ok = item.source_facts.iter().all(|f| train_facts.contains(f)) && !train_combos.contains(&combo(item));
            if !ok {
                train_facts.extend(item.source_facts.iter());
                train_combos.insert(combo(item));
                train_idx.push(i);
                reassigned += 1;
            }
            ok
        });
        if residue.len() == before {
            break;
        }
    }

    if ood_idx.is_empty() {
        return Err(Error::DegenerateSplit(
            "ood_test is empty; raise ood_atomic_fraction".into(),
        ));
    }
    if residue.is_empty() {
        return Err(Error::DegenerateSplit(
            "id_test is empty; lower train_inferred_fraction or supply more inferred items".into(),
        ));
    }

    let mut warnings = Vec::new();
    if reassigned > 0 {
        warnings.push(format!(
            "{reassigned} residue items had facts or fact combinations incompatible with the ID test set and were moved to training"
        ));
    }
    let pick = |idx: &mut Vec<usize>, split: Split| -> Vec<QAItem> {
        idx.sort_unstable();
        idx.iter()
            .map(|&i| QAItem {
                split: Some(split),
                ..inferred[i].clone()
            })
            .collect()
    };
    let mut ood_idx = ood_idx;
    Ok(DatasetSplit {
        train_atomic: atomic
            .iter()
            .map(|a| QAItem {
                split: Some(Split::Train),
                ..a.clone()
            })
            .collect(),
        train_inferred: pick(&mut train_idx, Split::Train),
        id_test: pick(&mut residue, Split::IdTest),
        ood_test: pick(&mut ood_idx, Split::OodTest),
        reserved_facts: reserved_idx.iter().map(|&i| facts[i].clone()).collect(),
        reassigned,
        plan,
        warnings,
    })
}

impl DatasetSplit {
    pub fn train_phi(&self) -> PhiReport {
        corpus_phi(&self.train_atomic, &self.train_inferred)
    }

    /// Re-checks the split contract from the item lists alone. Returns one
    /// message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let atomic: HashSet<&Triplet> = self.train_atomic.iter().filter_map(QAItem::fact).collect();
        let mut fact_use: HashMap<&Triplet, usize> = HashMap::new();
        let mut combos: HashSet<Combo> = HashSet::new();
        for item in &self.train_inferred {
            for f in &item.source_facts {
                *fact_use.entry(f).or_default() += 1;
            }
            combos.insert(combo(item));
        }
        let mut ids = HashSet::new();
        for item in self.train_inferred.iter().chain(&self.id_test).chain(&self.ood_test) {
            if !ids.insert(&item.id) {
                out.push(format!("item {} appears in more than one inferred list", item.id));
            }
            if let Some(f) = item.source_facts.iter().find(|f| !atomic.contains(f)) {
                out.push(format!(
                    "item {} uses {} which is not a training fact",
                    item.id,
                    triplet_line(f)
                ));
            }
        }
        for item in &self.id_test {
            if item.source_facts.iter().any(|f| !fact_use.contains_key(f)) {
                out.push(format!(
                    "id_test item {} has a fact never used in training paths",
                    item.id
                ));
            }
            if combos.contains(&combo(item)) {
                out.push(format!("id_test item {} repeats a training fact combination", item.id));
            }
        }
        for item in &self.ood_test {
            if item.source_facts.iter().all(|f| fact_use.contains_key(f)) {
                out.push(format!(
                    "ood_test item {} only uses facts seen in training paths",
                    item.id
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Atomic facts as `head -- relation -- tail` lines.
    Structured,
    /// Atomic facts as paragraphs where available.
    Unstructured,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(CorpusFormat::Structured),
            "unstructured" => Ok(CorpusFormat::Unstructured),
            other => Err(Error::InvalidParameter(format!(
                "unknown corpus format `{other}` (structured | unstructured)"
            ))),
        }
    }
}

impl std::fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorpusFormat::Structured => "structured",
            CorpusFormat::Unstructured => "unstructured",
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `train.jsonl`, `id_test.jsonl`, `ood_test.jsonl` and a key-sorted
/// `manifest.json` into `dir`. `config` is echoed into the manifest.
pub fn emit_corpus(split: &DatasetSplit, dir: &Path, format: CorpusFormat, config: Value) -> Result<Value> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut fallback = Vec::new();
    let train: Vec<QAItem> = split
        .train_atomic
        .iter()
        .map(|a| {
            let fact = a.fact().expect("validated atomic item");
            let question = match format {
                CorpusFormat::Structured => triplet_line(fact),
                CorpusFormat::Unstructured if a.detailed => a.question.clone(),
                CorpusFormat::Unstructured => {
                    fallback.push(a.id.clone());
                    triplet_line(fact)
                }
            };
            let detailed = format == CorpusFormat::Unstructured && a.detailed;
            QAItem {
                question,
                detailed,
                ..a.clone()
            }
        })
        .chain(split.train_inferred.iter().cloned())
        .collect();

    let files = [
        ("train.jsonl", to_jsonl_string(&train)),
        ("id_test.jsonl", to_jsonl_string(&split.id_test)),
        ("ood_test.jsonl", to_jsonl_string(&split.ood_test)),
    ];
    let mut digests = serde_json::Map::new();
    let mut all = Sha256::new();
    for (name, body) in &files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        let d = sha256_hex(body.as_bytes());
        all.update(name.as_bytes());
        all.update(d.as_bytes());
        digests.insert((*name).into(), Value::String(d));
    }
    let phi = split.train_phi();
    let manifest = json!({
        "counts": {
            "train_atomic": split.train_atomic.len(),
            "train_inferred": split.train_inferred.len(),
            "id_test": split.id_test.len(),
            "ood_test": split.ood_test.len(),
            "reserved_atomic_facts": split.reserved_facts.len(),
            "reassigned_to_train": split.reassigned,
        },
        "config": config,
        "digest": {
            "files": digests,
            "sha256": hex::encode(all.finalize()),
        },
        "format": format.to_string(),
        "plan": {
            "ood_atomic_fraction": ratio_str(&split.plan.ood_atomic_fraction),
            "train_inferred_fraction": ratio_str(&split.plan.train_inferred_fraction),
        },
        "seed": split.plan.seed,
        "train_phi": phi.to_json(),
        "train_phi_value": phi.global_phi.map(|p| ratio_f64(&p)),
        "triplet_fallback_items": fallback,
        "warnings": split.warnings,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;

    fn t(h: &str, r: &str, tl: &str) -> Triplet {
        [h.into(), r.into(), tl.into()]
    }

    /// A chain a0 -r-> a1 -r-> ... with every 2-hop window as an item.
    fn chain(n: usize) -> (Vec<QAItem>, Vec<QAItem>) {
        let facts: Vec<Triplet> = (0..n)
            .map(|i| t(&format!("a{i}"), "r", &format!("a{}", i + 1)))
            .collect();
        let atomic = facts
            .iter()
            .enumerate()
            .map(|(i, f)| QAItem::atomic(format!("f{i}"), Task::Composition, f.clone(), false))
            .collect();
        let mut inferred = Vec::new();
        for i in 0..n {
            for j in i + 1..n.min(i + 4) {
                inferred.push(QAItem {
                    id: format!("p{i}-{j}"),
                    kind: Kind::Inferred,
                    task: Task::Composition,
                    hops: j - i + 1,
                    question: "q?".into(),
                    answer: facts[j][2].clone(),
                    path: None,
                    source_facts: facts[i..=j].to_vec(),
                    synthetic: true,
                    detailed: false,
                    split: None,
                });
            }
        }
        (atomic, inferred)
    }

    #[test]
    fn contract_holds_on_chain() {
        let (atomic, inferred) = chain(200);
        let s = split_id_ood(
            &atomic,
            &inferred,
            SplitPlan {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.violations().is_empty(), "{:?}", s.violations());
        assert_eq!(
            s.train_inferred.len() + s.id_test.len() + s.ood_test.len(),
            inferred.len()
        );
        assert_eq!(s.reserved_facts.len(), 20);
        let again = split_id_ood(
            &atomic,
            &inferred,
            SplitPlan {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(again.id_test, s.id_test);
    }

    #[test]
    fn degenerate_plans() {
        let (atomic, inferred) = chain(50);
        let zero = SplitPlan {
            train_inferred_fraction: Ratio::new(0, 1),
            ..Default::default()
        };
        assert!(split_id_ood(&atomic, &inferred, zero).is_err());
        let one = SplitPlan {
            ood_atomic_fraction: Ratio::new(1, 1),
            ..Default::default()
        };
        assert!(split_id_ood(&atomic, &inferred, one).is_err());
        let tiny = SplitPlan {
            ood_atomic_fraction: Ratio::new(1, 1000),
            ..Default::default()
        };
        assert!(matches!(
            split_id_ood(&atomic, &inferred, tiny),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn unknown_fact_is_rejected() {
        let (atomic, mut inferred) = chain(10);
        inferred[0].source_facts[0] = t("x", "r", "y");
        assert!(split_id_ood(&atomic, &inferred, SplitPlan::default()).is_err());
    }

    #[test]
    fn share_rounds_half_up() {
        assert_eq!(share(15, Ratio::new(1, 10)), 2);
        assert_eq!(share(14, Ratio::new(1, 10)), 1);
        assert_eq!(share(10, Ratio::new(4, 5)), 8);
    }
}
