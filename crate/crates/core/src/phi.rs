//! Generalization ratios: per-relation `phi_r = |F_{I,r}| / |F_{A,r}|`,
//! the global inferred/atomic ratio, and the generalizability verdict.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Mode};
use crate::paths::inferred_fact_counts;

/// Which hop orders contribute to the inferred side of the ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HopOrder {
    /// Only n-hop facts (`phi_{n,r}`).
    Exact(usize),
    /// Every hop order from 2 up to and including the bound (`phi_r`).
    UpTo(usize),
}

impl HopOrder {
    pub fn max(self) -> usize {
        match self {
            HopOrder::Exact(n) | HopOrder::UpTo(n) => n,
        }
    }

    fn includes(self, n: usize) -> bool {
        match self {
            HopOrder::Exact(k) => n == k,
            HopOrder::UpTo(k) => (2..=k).contains(&n),
        }
    }

    fn label(self) -> String {
        match self {
            HopOrder::Exact(n) => n.to_string(),
            HopOrder::UpTo(n) => format!("2..={n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Generalizability {
    Full,
    Partial,
    None,
}

impl Generalizability {
    /// Process exit code used by `analyze`.
    pub fn exit_code(self) -> i32 {
        match self {
            Generalizability::Full => 0,
            Generalizability::Partial => 2,
            Generalizability::None => 3,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Generalizability::Full => "fully generalizable",
            Generalizability::Partial => "partially generalizable",
            Generalizability::None => "not generalizable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationPhi {
    pub atomic_count: u64,
    pub inferred_count: u64,
    pub inferred_by_hop: BTreeMap<usize, u64>,
    pub branching: Ratio<u64>,
    /// `None` when the relation has no atomic facts.
    pub phi: Option<Ratio<u64>>,
}

impl RelationPhi {
    pub fn meets(&self, phi_g: Ratio<u64>) -> Option<bool> {
        self.phi.map(|p| p >= phi_g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiReport {
    pub node_count: u64,
    pub edge_count: u64,
    pub inferred_count: u64,
    pub global_b: Ratio<u64>,
    /// Global inferred/atomic ratio; `None` on an edgeless graph.
    pub global_phi: Option<Ratio<u64>>,
    pub hop_order: HopOrder,
    pub mode: Mode,
    pub per_relation: BTreeMap<String, RelationPhi>,
    pub phi_g: Option<Ratio<u64>>,
    pub warnings: Vec<String>,
}

fn ratio_or_none(num: u64, den: u64) -> Option<Ratio<u64>> {
    (den > 0).then(|| Ratio::new(num, den))
}

pub fn ratio_str(r: &Ratio<u64>) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn ratio_f64(r: &Ratio<u64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"3.6"`, `"18/5"` or `"4"` into an exact non-negative rational.
pub fn parse_ratio(text: &str) -> Result<Ratio<u64>> {
    let t = text.trim();
    let bad = || Error::InvalidParameter(format!("`{text}` is not a non-negative rational"));
    if let Some((n, d)) = t.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let den = 10u64.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let digits = format!("{int}{frac}");
    let num: u64 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| bad())?
    };
    Ok(Ratio::new(num, den))
}

impl PhiReport {
    /// Builds a report from raw counts keyed by relation label.
    pub fn from_counts(
        node_count: u64,
        atomic: &BTreeMap<String, u64>,
        inferred: &BTreeMap<String, BTreeMap<usize, u64>>,
        inferred_total: u64,
        hop_order: HopOrder,
        mode: Mode,
    ) -> Self {
        let edge_count: u64 = atomic.values().sum();
        let mut per_relation = BTreeMap::new();
        let mut warnings = Vec::new();
        let labels: std::collections::BTreeSet<&String> = atomic.keys().chain(inferred.keys()).collect();
        for label in labels {
            let atomic_count = atomic.get(label).copied().unwrap_or(0);
            let by_hop: BTreeMap<usize, u64> = inferred
                .get(label)
                .map(|m| {
                    m.iter()
                        .filter(|(n, _)| hop_order.includes(**n))
                        .map(|(n, c)| (*n, *c))
                        .collect()
                })
                .unwrap_or_default();
            let inferred_count = by_hop.values().sum();
            let phi = ratio_or_none(inferred_count, atomic_count);
            if phi.is_none() {
                warnings.push(format!(
                    "relation `{label}` has no atomic facts; phi undefined and excluded from the verdict"
                ));
            }
            per_relation.insert(
                label.clone(),
                RelationPhi {
                    atomic_count,
                    inferred_count,
                    inferred_by_hop: by_hop,
                    branching: if node_count == 0 {
                        Ratio::from_integer(0)
                    } else {
                        Ratio::new(atomic_count, node_count)
                    },
                    phi,
                },
            );
        }
        PhiReport {
            node_count,
            edge_count,
            inferred_count: inferred_total,
            global_b: if node_count == 0 {
                Ratio::from_integer(0)
            } else {
                Ratio::new(edge_count, node_count)
            },
            global_phi: ratio_or_none(inferred_total, edge_count),
            hop_order,
            mode,
            per_relation,
            phi_g: None,
            warnings,
        }
    }

    pub fn with_threshold(mut self, phi_g: Ratio<u64>) -> Self {
        self.phi_g = Some(phi_g);
        self
    }

    /// Full when every relation with a defined ratio meets `phi_g`, partial
    /// when some do, none otherwise.
    pub fn verdict(&self, phi_g: Ratio<u64>) -> Generalizability {
        let defined: Vec<bool> = self.per_relation.values().filter_map(|r| r.meets(phi_g)).collect();
        let passing = defined.iter().filter(|&&m| m).count();
        if passing == 0 {
            Generalizability::None
        } else if passing == defined.len() {
            Generalizability::Full
        } else {
            Generalizability::Partial
        }
    }

    /// Key-sorted JSON document.
    pub fn to_json(&self) -> Value {
        let mut relations = serde_json::Map::new();
        for (label, r) in &self.per_relation {
            let by_hop: serde_json::Map<String, Value> = r
                .inferred_by_hop
                .iter()
                .map(|(n, c)| (n.to_string(), json!(c)))
                .collect();
            let mut entry = json!({
                "atomic_count": r.atomic_count,
                "inferred_count": r.inferred_count,
                "inferred_by_hop": by_hop,
                "b_r": ratio_str(&r.branching),
                "b_r_value": ratio_f64(&r.branching),
                "phi": r.phi.as_ref().map(ratio_str),
                "phi_value": r.phi.as_ref().map(ratio_f64),
            });
            if let Some(g) = self.phi_g {
                entry["meets_phi_g"] = json!(r.meets(g));
            }
            relations.insert(label.clone(), entry);
        }
        let mut doc = json!({
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "inferred_count": self.inferred_count,
            "b": ratio_str(&self.global_b),
            "b_value": ratio_f64(&self.global_b),
            "phi": self.global_phi.as_ref().map(ratio_str),
            "phi_value": self.global_phi.as_ref().map(ratio_f64),
            "hop_order": self.hop_order.label(),
            "mode": self.mode.to_string(),
            "relations": relations,
            "warnings": self.warnings,
        });
        if let Some(g) = self.phi_g {
            doc["phi_g"] = json!(ratio_str(&g));
            doc["verdict"] = json!(self.verdict(g));
        }
        // serde_json::Map is a BTreeMap here, so keys come out sorted.
        doc
    }

    /// One row per `(relation, n)`, plus an `all` row per relation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("relation,n,atomic_count,inferred_count,b_r,phi\n");
        for (label, r) in &self.per_relation {
            let field = csv_field(label);
            for (n, c) in &r.inferred_by_hop {
                let phi = ratio_or_none(*c, r.atomic_count)
                    .map(|p| ratio_str(&p))
                    .unwrap_or_else(|| "undefined".into());
                let _ = writeln!(
                    out,
                    "{field},{n},{},{c},{},{phi}",
                    r.atomic_count,
                    ratio_str(&r.branching)
                );
            }
            let phi = r.phi.as_ref().map(ratio_str).unwrap_or_else(|| "undefined".into());
            let _ = writeln!(
                out,
                "{field},{},{},{},{},{phi}",
                self.hop_order.label(),
                r.atomic_count,
                r.inferred_count,
                ratio_str(&r.branching)
            );
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Computes the generalization report of a graph. Inferred facts are the
/// paths of the selected hop orders under `mode`.
pub fn compute_phi(kg: &KnowledgeGraph, hop_order: HopOrder, mode: Mode) -> Result<PhiReport> {
    if kg.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let counts = inferred_fact_counts(kg, hop_order.max(), mode)?;
    let atomic: BTreeMap<String, u64> = kg
        .relations()
        .map(|r| (kg.relation_label(r).to_owned(), kg.relation_fact_count(r) as u64))
        .collect();
    let mut inferred: BTreeMap<String, BTreeMap<usize, u64>> = BTreeMap::new();
    for (&(n, r), &c) in &counts.by_hop_relation {
        inferred
            .entry(kg.relation_label(r).to_owned())
            .or_default()
            .insert(n, c);
    }
    let total = counts
        .by_hop
        .iter()
        .filter(|(n, _)| hop_order.includes(**n))
        .map(|(_, c)| c)
        .sum();
    Ok(PhiReport::from_counts(
        kg.node_count() as u64,
        &atomic,
        &inferred,
        total,
        hop_order,
        mode,
    ))
}
