//! Knowledge-graph analytics for multi-hop reasoning corpora: fact storage,
//! path enumeration, inferred/atomic ratios, closed-form bounds, random-graph
//! sweeps, augmentation pipelines and ID/OOD splitting.

pub mod augment;
pub mod bounds;
pub mod corpus;
pub mod error;
pub mod kg;
pub mod paths;
pub mod phi;
pub mod sim;
pub mod splitter;

pub use error::{Error, Result};
pub use kg::{AtomicFact, EntityId, KnowledgeGraph, Mode, RelationId};
pub use paths::{enumerate_inferred, InferredFact, PathQuery};
pub use phi::{compute_phi, Generalizability, HopOrder, PhiReport};
