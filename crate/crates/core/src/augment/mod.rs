//! Augmentation pipelines that raise the inferred/atomic ratio of a corpus:
//! location comparison questions and multi-hop composition questions.

pub mod backend;
pub mod comparison;
pub mod composition;
pub mod lexicon;

use num_rational::Ratio;

use crate::corpus::QAItem;
use crate::kg::KnowledgeGraph;
use crate::phi::{ratio_str, PhiReport};
use crate::sim::mix64;

pub use backend::{ExternalConfig, GenerationBackend, TemplateBank};
pub use comparison::{
    detalize_locations, generate_inferred_comparison, generate_locations, run_comparison, seed_comparison_corpus,
    ComparisonConfig,
};
pub use composition::{
    augment_atomic, augment_inferred, diversify, parse_graph, run_composition, seed_composition_text, CompositionConfig,
};

/// Independent sub-seed for one stage of a pipeline.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub atomic: Vec<QAItem>,
    pub inferred: Vec<QAItem>,
    pub report: PhiReport,
    pub warnings: Vec<String>,
    /// The grown graph, for composition runs.
    pub graph: Option<KnowledgeGraph>,
}

impl PipelineOutput {
    /// Where the corpus falls short of `target`: the global ratio and every
    /// relation that occurs in at least one inferred item.
    pub fn shortfalls(&self, target: Ratio<u64>) -> Vec<String> {
        let mut out = Vec::new();
        match self.report.global_phi {
            Some(phi) if phi >= target => {}
            Some(phi) => out.push(format!("global phi {} < {}", ratio_str(&phi), ratio_str(&target))),
            None => out.push("global phi undefined (no atomic facts)".into()),
        }
        for (label, r) in &self.report.per_relation {
            if r.inferred_count == 0 {
                continue;
            }
            match r.phi {
                Some(phi) if phi >= target => {}
                Some(phi) => out.push(format!(
                    "relation `{label}` phi {} < {}",
                    ratio_str(&phi),
                    ratio_str(&target)
                )),
                None => out.push(format!("relation `{label}` has no atomic facts")),
            }
        }
        out
    }

    pub fn items(&self) -> impl Iterator<Item = &QAItem> {
        self.atomic.iter().chain(&self.inferred)
    }
}
